//! Masked-token corruption: per sequence, round(rate * seq_len) positions
//! are selected uniformly without replacement; of those, 80% become the
//! mask token, 10% a random byte token, 10% stay unchanged.

use alloc::vec;
use alloc::vec::Vec;

use super::{MaskedBatch, TokenBatch, BYTE_TOKENS, IGNORE_LABEL, MASK_TOKEN};
use crate::numerics::rng::Rng;

pub fn mlm_mask(batch: &TokenBatch, rate: f64, rng: &mut Rng) -> MaskedBatch {
    assert!(rate > 0.0 && rate < 1.0, "mask rate must be in (0, 1)");
    let n_mask = libm::round(rate * batch.seq_len as f64) as usize;
    let mut input = batch.ids.clone();
    let mut labels = vec![IGNORE_LABEL; batch.ids.len()];
    let mut positions = Vec::with_capacity(batch.n_seqs);

    for s in 0..batch.n_seqs {
        let base = s * batch.seq_len;
        let mut picked = rng.distinct_indices(batch.seq_len, n_mask);
        picked.sort_unstable();
        for &p in &picked {
            let idx = base + p;
            labels[idx] = batch.ids[idx];
            let roll = rng.next_f64();
            if roll < 0.8 {
                input[idx] = MASK_TOKEN;
            } else if roll < 0.9 {
                input[idx] = rng.index(BYTE_TOKENS) as u16;
            }
            // else: keep the original token, label it anyway.
        }
        positions.push(picked);
    }

    MaskedBatch {
        input: TokenBatch::new(batch.n_seqs, batch.seq_len, input),
        labels,
        mask_positions: positions,
    }
}

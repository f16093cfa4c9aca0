//! Byte-level corpora: ids 0-255 are raw bytes; the mask/pad/cls specials
//! sit above them. No tokenizer.

use std::fs;
use std::io;
use std::path::Path;

use anisolab_core::Rng;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("corpus file is empty: {0}")]
    Empty(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Maps every byte of the file to its token id.
pub fn load_corpus(path: &Path) -> Result<Vec<u16>, CorpusError> {
    let bytes = fs::read(path)?;
    if bytes.is_empty() {
        return Err(CorpusError::Empty(path.display().to_string()));
    }
    Ok(bytes.iter().map(|&b| b as u16).collect())
}

/// Deterministic English-like filler text: a fixed vocabulary of invented
/// words sampled on a heavy-tailed rank distribution, joined by spaces with
/// occasional punctuation. Enough byte-level structure for the masked
/// objective to beat the uniform baseline by a wide margin.
pub fn synthetic_text(seed: u64, n_bytes: usize) -> Vec<u8> {
    let mut rng = Rng::derive(seed, &[0xC0]);
    let n_words = 512usize;
    let words: Vec<Vec<u8>> = (0..n_words)
        .map(|_| {
            let len = 2 + rng.index(8);
            (0..len).map(|_| b'a' + rng.index(26) as u8).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(n_bytes + 16);
    let mut sentence_len = 0usize;
    while out.len() < n_bytes {
        let u = rng.next_f64();
        let rank = ((n_words as f64).powf(u) - 1.0) as usize;
        out.extend_from_slice(&words[rank.min(n_words - 1)]);
        sentence_len += 1;
        if sentence_len >= 8 + rng.index(10) {
            out.extend_from_slice(b". ");
            sentence_len = 0;
        } else {
            out.push(b' ');
        }
    }
    out.truncate(n_bytes);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use anisolab_core::train::WindowSet;

    #[test]
    fn bytes_map_to_identity_ids() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ab.txt");
        fs::write(&p, b"ab").unwrap();
        assert_eq!(load_corpus(&p).unwrap(), vec![97, 98]);
    }

    #[test]
    fn empty_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty");
        fs::write(&p, b"").unwrap();
        assert!(matches!(load_corpus(&p), Err(CorpusError::Empty(_))));
    }

    #[test]
    fn chunking_drops_remainder() {
        let tokens: Vec<u16> = (0..130).map(|i| (i % 256) as u16).collect();
        let w = WindowSet::new(&tokens, 64);
        assert_eq!(w.n_windows(), 2);
        assert_eq!(w.window(1)[0], 64);
    }

    #[test]
    fn load_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        fs::write(&p, b"some corpus bytes").unwrap();
        assert_eq!(load_corpus(&p).unwrap(), load_corpus(&p).unwrap());
    }

    #[test]
    fn synthetic_text_is_deterministic_ascii() {
        let a = synthetic_text(5, 4096);
        let b = synthetic_text(5, 4096);
        assert_eq!(a, b);
        assert_eq!(a.len(), 4096);
        assert!(a.iter().all(|&c| c == b' ' || c == b'.' || c.is_ascii_lowercase()));
        let c = synthetic_text(6, 4096);
        assert_ne!(a, c);
    }
}

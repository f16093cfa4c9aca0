//! Dense linear algebra, sampling, and statistics shared by every experiment.

pub mod ops;
pub mod rng;
pub mod special;
pub mod stats;
pub mod svd;
pub mod tensor;

pub use ops::{gaussian_matrix, layer_norm, softmax_rows, softmax_rows_in_place};
pub use rng::Rng;
pub use stats::{cosine, pearson_test, shannon_entropy, spearman_test, StatsError};
pub use svd::{thin_svd, SvdError, SvdResult};
pub use tensor::{Scalar, Tensor2D};

//! IO companion to `anisolab-core`: bit-exact binary formats for activation
//! dumps and training checkpoints, byte-level corpora, CSV/JSON metric
//! reports, run manifests, and the experiment pipelines behind the CLI.

pub mod checkpoint;
pub mod corpus;
pub mod dump;
pub mod manifest;
pub mod parallel;
pub mod pipelines;
pub mod report;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointError, CheckpointFile};
pub use corpus::{load_corpus, synthetic_text, CorpusError};
pub use dump::{read_dump, write_dump, ActivationDump, Dtype, DumpError, DumpManifest};
pub use manifest::RunManifest;
pub use report::{KeyValue, MetricRecord, Report, ReportError};

//! Transfer string kernels: mismatch-kernel SVMs trained on a source domain
//! with kernel-mean-matching weights estimated against an unlabeled target.

pub mod error;
pub mod eval;
pub mod experiment;
pub mod kmm;
pub mod pipeline;
pub mod registry;
pub mod seqdata;
pub mod stringkernel;
pub mod synth;
pub mod weighting;
pub mod wsvm;

pub use error::{Result, TskError};
pub use seqdata::{Alphabet, Domain, Label, LabeledDataset, Sequence};
pub use stringkernel::{GramMatrix, KappaVector, KernelParams};

//! Spectrum and (k,m)-mismatch string kernels.
//!
//! Kernel values are computed as exact integers by a [`KernelEngine`];
//! engines are interchangeable and registered by name in
//! [`kernel_engines`]. Conversion to `f64` happens when a Gram matrix,
//! cross-kernel block or κ vector is assembled, after which cosine
//! normalization is applied if requested.

mod engines;
mod gram;
mod kmer;
mod neighborhood;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use engines::{BruteForceMismatch, KernelEngine, MismatchEngine, SpectrumEngine};
pub use gram::{
    cross_kernel, cross_kernel_with, gram_matrix, gram_matrix_with, kappa_vector, kappa_vector_with,
    CrossKernel, GramMatrix, KappaVector,
};
pub use kmer::{kmer_counts, KmerCounts};
pub use neighborhood::{
    intersection_coefficients, intersection_coefficients_closed_form,
    intersection_coefficients_exhaustive, mismatch_neighborhood, neighborhood_size,
};

use crate::error::{Result, TskError};
use crate::registry::Registry;
use crate::seqdata::{Alphabet, Sequence};

/// Name of the engine used when none is configured.
pub const DEFAULT_ENGINE: &str = "mismatch";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelParams {
    /// k-mer length.
    pub k: usize,
    /// Allowed mismatches per k-mer.
    pub m: usize,
    /// Apply cosine normalization `K(x,y) / sqrt(K(x,x) K(y,y))`.
    pub normalize: bool,
}

impl KernelParams {
    pub fn new(k: usize, m: usize, normalize: bool) -> Result<Self> {
        let p = KernelParams { k, m, normalize };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(TskError::InvalidParams("k must be at least 1".into()));
        }
        if self.m > self.k {
            return Err(TskError::InvalidParams(format!(
                "m = {} exceeds k = {}",
                self.m, self.k
            )));
        }
        Ok(())
    }

    /// Checks parameter ranges and that every sequence has at least `k` symbols.
    pub fn check_sequences<'a>(&self, seqs: impl IntoIterator<Item = &'a Sequence>) -> Result<()> {
        self.validate()?;
        for s in seqs {
            if s.len() < self.k {
                return Err(TskError::SequenceTooShort {
                    id: s.id().to_string(),
                    length: s.len(),
                    k: self.k,
                });
            }
        }
        Ok(())
    }
}

/// The built-in engines: `mismatch` (pair statistics, the default),
/// `mismatch-brute` (explicit neighborhood expansion) and `spectrum`
/// (exact matching only, `m = 0`).
pub fn kernel_engines() -> Registry<dyn KernelEngine> {
    let mut reg: Registry<dyn KernelEngine> = Registry::new("kernel engine");
    reg.register("mismatch", Arc::new(MismatchEngine))
        .register("mismatch-brute", Arc::new(BruteForceMismatch))
        .register("spectrum", Arc::new(SpectrumEngine));
    reg
}

/// Exact-match spectrum kernel value.
pub fn spectrum_kernel(x: &Sequence, y: &Sequence, k: usize) -> Result<f64> {
    let params = KernelParams::new(k, 0, false)?;
    params.check_sequences([x, y])?;
    Ok(engines::spectrum_raw(&kmer_counts(x, k)?, &kmer_counts(y, k)?) as f64)
}

/// Raw (k,m)-mismatch kernel value through the default engine.
pub fn mismatch_kernel(x: &Sequence, y: &Sequence, params: &KernelParams, alphabet: &Alphabet) -> Result<f64> {
    let raw = MismatchEngine.raw(x, y, params, alphabet)?;
    if !params.normalize {
        return Ok(raw as f64);
    }
    let sx = MismatchEngine.raw(x, x, params, alphabet)? as f64;
    let sy = MismatchEngine.raw(y, y, params, alphabet)? as f64;
    gram::normalize_value(raw as f64, sx, sy, x, y)
}

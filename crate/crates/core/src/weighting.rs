//! Source-sample weighting strategies, selectable by name.

use std::sync::Arc;

use crate::error::{Result, TskError};
use crate::kmm::{solve_beta, BetaWeights, KmmConfig};
use crate::registry::Registry;
use crate::stringkernel::{GramMatrix, KappaVector};

pub trait WeightEstimator: Send + Sync {
    fn name(&self) -> &'static str;

    fn estimate(&self, k: &GramMatrix, kappa: &KappaVector, config: &KmmConfig) -> Result<BetaWeights>;
}

/// Kernel mean matching.
pub struct KmmEstimator;

impl WeightEstimator for KmmEstimator {
    fn name(&self) -> &'static str {
        "kmm"
    }

    fn estimate(&self, k: &GramMatrix, kappa: &KappaVector, config: &KmmConfig) -> Result<BetaWeights> {
        solve_beta(k, kappa, config)
    }
}

/// β = 1 for every sample; the plain string-kernel baseline.
pub struct UniformWeights;

impl WeightEstimator for UniformWeights {
    fn name(&self) -> &'static str {
        "uniform"
    }

    fn estimate(&self, k: &GramMatrix, kappa: &KappaVector, _config: &KmmConfig) -> Result<BetaWeights> {
        if kappa.len() != k.dim() {
            return Err(TskError::DimensionMismatch(format!(
                "kappa has length {}, kernel matrix is {}×{}",
                kappa.len(),
                k.dim(),
                k.dim()
            )));
        }
        Ok(BetaWeights::uniform(k.dim()))
    }
}

pub fn weight_estimators() -> Registry<dyn WeightEstimator> {
    let mut reg: Registry<dyn WeightEstimator> = Registry::new("weight estimator");
    reg.register("kmm", Arc::new(KmmEstimator))
        .register("uniform", Arc::new(UniformWeights));
    reg
}

//! The transfer pipeline: kernels, source weights, weighted SVM, scoring.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kmm::{BetaWeights, KmmConfig};
use crate::seqdata::{Alphabet, LabeledDataset, Sequence};
use crate::stringkernel::{
    cross_kernel_with, gram_matrix_with, kernel_engines, CrossKernel, GramMatrix, KappaVector, KernelParams,
    DEFAULT_ENGINE,
};
use crate::weighting::weight_estimators;
use crate::wsvm::{train_weighted_svm, DualSolution, SvmModel, SvmTrainConfig};

/// Pipeline stage names, used when reporting failures.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Kernel,
    Weights,
    Train,
    Predict,
    Evaluate,
    Write,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::Ingest => "ingest",
            Stage::Kernel => "kernel",
            Stage::Weights => "weights",
            Stage::Train => "train",
            Stage::Predict => "predict",
            Stage::Evaluate => "evaluate",
            Stage::Write => "write",
        };
        f.write_str(s)
    }
}

/// Strategy selection and solver settings shared by every grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TskSettings {
    /// Kernel engine registry name.
    pub engine: String,
    pub normalize: bool,
    /// Weight estimator registry name (`kmm` or `uniform`).
    pub weighting: String,
    pub kmm: KmmConfig,
    pub svm: SvmTrainConfig,
}

impl Default for TskSettings {
    fn default() -> Self {
        TskSettings {
            engine: DEFAULT_ENGINE.to_string(),
            normalize: true,
            weighting: "kmm".to_string(),
            kmm: KmmConfig::default(),
            svm: SvmTrainConfig::default(),
        }
    }
}

impl TskSettings {
    /// Same settings with weighting fixed at β = 1.
    pub fn baseline(&self) -> Self {
        TskSettings {
            weighting: "uniform".into(),
            ..self.clone()
        }
    }

    pub fn kernel_params(&self, k: usize, m: usize) -> Result<KernelParams> {
        KernelParams::new(k, m, self.normalize)
    }

    pub fn validate(&self) -> Result<()> {
        kernel_engines().get(&self.engine)?;
        weight_estimators().get(&self.weighting)?;
        self.kmm.validate()?;
        self.svm.validate()
    }
}

/// Gram matrix over the source set and κ against the target set.
#[derive(Clone, Debug)]
pub struct KernelStage {
    pub gram: GramMatrix,
    pub kappa: KappaVector,
}

pub fn kernel_stage(
    source: &[Sequence],
    target: &[Sequence],
    params: &KernelParams,
    alphabet: &Alphabet,
    settings: &TskSettings,
) -> Result<KernelStage> {
    let engine = kernel_engines().get(&settings.engine)?;
    let gram = gram_matrix_with(engine.as_ref(), source, params, alphabet)?;
    let cross = cross_kernel_with(engine.as_ref(), source, target, params, alphabet)?;
    let kappa = KappaVector::from_cross(&cross)?;
    Ok(KernelStage { gram, kappa })
}

pub fn weight_stage(kernels: &KernelStage, settings: &TskSettings) -> Result<BetaWeights> {
    weight_estimators()
        .get(&settings.weighting)?
        .estimate(&kernels.gram, &kernels.kappa, &settings.kmm)
}

/// Source × evaluation kernel block through the configured engine.
pub fn evaluation_kernel(
    source: &[Sequence],
    eval: &[Sequence],
    params: &KernelParams,
    alphabet: &Alphabet,
    settings: &TskSettings,
) -> Result<CrossKernel> {
    let engine = kernel_engines().get(&settings.engine)?;
    cross_kernel_with(engine.as_ref(), source, eval, params, alphabet)
}

/// Everything produced by one fit.
#[derive(Clone, Debug)]
pub struct TransferFit {
    pub kernels: KernelStage,
    pub beta: BetaWeights,
    pub solution: DualSolution,
    pub model: SvmModel,
}

/// Kernel, weights, weighted training; `c` overrides `settings.svm.c`.
pub fn fit_transfer(
    train: &LabeledDataset,
    target: &[Sequence],
    params: &KernelParams,
    c: f64,
    alphabet: &Alphabet,
    settings: &TskSettings,
) -> std::result::Result<TransferFit, (Stage, crate::error::TskError)> {
    let kernels = kernel_stage(train.sequences(), target, params, alphabet, settings).map_err(|e| (Stage::Kernel, e))?;
    let beta = weight_stage(&kernels, settings).map_err(|e| (Stage::Weights, e))?;
    let svm = SvmTrainConfig {
        c,
        ..settings.svm.clone()
    };
    let solution = train_weighted_svm(&kernels.gram, train.labels(), &beta, &svm).map_err(|e| (Stage::Train, e))?;
    let model = SvmModel::from_solution(&solution, train.sequences(), alphabet)
        .and_then(|m| m.with_engine(&settings.engine))
        .map_err(|e| (Stage::Train, e))?;
    Ok(TransferFit {
        kernels,
        beta,
        solution,
        model,
    })
}

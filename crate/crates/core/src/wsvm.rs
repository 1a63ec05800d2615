//! Instance-weighted SVM on a precomputed kernel.
//!
//! The dual
//!
//! ```text
//! maximize   Σα_i − ½ ΣΣ α_i α_j y_i y_j K_ij
//! subject to Σα_i y_i = 0,   0 ≤ α_i ≤ β_i C
//! ```
//!
//! is solved with SMO using the maximal violating pair. Samples with
//! `β_i = 0` have a zero cap, are never selected, and keep `α_i = 0`.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TskError};
use crate::kmm::BetaWeights;
use crate::seqdata::{Alphabet, Label, Sequence};
use crate::stringkernel::{kernel_engines, CrossKernel, GramMatrix, KernelEngine, KernelParams, DEFAULT_ENGINE};

const TAU: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmTrainConfig {
    /// Regularization constant `C`.
    pub c: f64,
    /// Stopping tolerance on the maximal KKT violation.
    pub tolerance: f64,
    /// Iteration budget in units of `n` pair updates.
    pub max_passes: usize,
}

impl Default for SvmTrainConfig {
    fn default() -> Self {
        SvmTrainConfig {
            c: 1.0,
            tolerance: 1e-3,
            max_passes: 10_000,
        }
    }
}

impl SvmTrainConfig {
    pub fn with_c(c: f64) -> Self {
        SvmTrainConfig {
            c,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(TskError::Config(format!("C must be positive (got {})", self.c)));
        }
        if !(self.tolerance > 0.0) {
            return Err(TskError::Config("SVM tolerance must be positive".into()));
        }
        if self.max_passes == 0 {
            return Err(TskError::Config("SVM max_passes must be positive".into()));
        }
        Ok(())
    }
}

/// Result of dual optimization over a training Gram matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution {
    pub alphas: Vec<f64>,
    pub labels: Vec<f64>,
    /// Per-sample caps `β_i C`.
    pub caps: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    pub params: KernelParams,
    pub iterations: usize,
    pub converged: bool,
    /// Largest KKT margin violation over samples with a non-zero cap.
    pub worst_violation: f64,
}

impl DualSolution {
    /// Indices with `α_i > 0`.
    pub fn support(&self) -> Vec<usize> {
        (0..self.alphas.len()).filter(|&i| self.alphas[i] > 0.0).collect()
    }

    /// `Σα_i − ½ αᵀQα` on the given Gram matrix.
    pub fn dual_objective(&self, k: &GramMatrix) -> f64 {
        dual_objective(k, &self.labels, &self.alphas)
    }

    /// `f(x_j) = Σ_i α_i y_i K(x_i, x_j) + b` for each column of a
    /// training × evaluation kernel block.
    pub fn decision_values(&self, cross: &CrossKernel) -> Result<Vec<f64>> {
        if cross.rows() != self.alphas.len() {
            return Err(TskError::DimensionMismatch(format!(
                "kernel block has {} rows, model was trained on {} samples",
                cross.rows(),
                self.alphas.len()
            )));
        }
        let support = self.support();
        Ok((0..cross.cols())
            .map(|j| {
                let s: f64 = support
                    .iter()
                    .map(|&i| self.alphas[i] * self.labels[i] * cross.get(i, j))
                    .sum();
                s + self.bias
            })
            .collect())
    }

    /// `Σ α_i y_i`.
    pub fn equality_residual(&self) -> f64 {
        self.alphas.iter().zip(&self.labels).map(|(a, y)| a * y).sum()
    }
}

pub fn dual_objective(k: &GramMatrix, labels: &[f64], alphas: &[f64]) -> f64 {
    let n = alphas.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alphas[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alphas[i] * alphas[j] * labels[i] * labels[j] * k.get(i, j);
        }
    }
    alphas.iter().sum::<f64>() - 0.5 * quad
}

/// Worst KKT violation of `(alphas, bias)` in terms of margins `y_i f(x_i)`.
/// Samples with a zero cap are ignored.
pub fn kkt_violation(k: &GramMatrix, labels: &[f64], caps: &[f64], alphas: &[f64], bias: f64) -> f64 {
    let n = alphas.len();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        if caps[i] <= 0.0 {
            continue;
        }
        let f: f64 = (0..n).map(|j| alphas[j] * labels[j] * k.get(j, i)).sum::<f64>() + bias;
        let margin = labels[i] * f;
        let v = if alphas[i] <= 0.0 {
            1.0 - margin
        } else if alphas[i] >= caps[i] {
            margin - 1.0
        } else {
            (margin - 1.0).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Trains the weighted SVM on a precomputed Gram matrix.
pub fn train_weighted_svm(
    k: &GramMatrix,
    labels: &[Label],
    beta: &BetaWeights,
    config: &SvmTrainConfig,
) -> Result<DualSolution> {
    config.validate()?;
    let n = k.dim();
    if labels.len() != n || beta.len() != n {
        return Err(TskError::DimensionMismatch(format!(
            "Gram matrix is {n}×{n}, {} labels, {} weights",
            labels.len(),
            beta.len()
        )));
    }
    if !labels.contains(&Label::Positive) || !labels.contains(&Label::Negative) {
        return Err(TskError::SingleClass);
    }
    if let Some(bad) = beta.values.iter().find(|b| !(**b >= 0.0) || !b.is_finite()) {
        return Err(TskError::InvalidParams(format!("weights must be finite and non-negative (got {bad})")));
    }

    let y: Vec<f64> = labels.iter().map(|l| l.value()).collect();
    let caps: Vec<f64> = beta.values.iter().map(|b| b * config.c).collect();
    let mut alpha = vec![0.0; n];
    // gradient of ½αᵀQα − eᵀα
    let mut grad = vec![-1.0; n];
    let q = |i: usize, j: usize| y[i] * y[j] * k.get(i, j);

    let at_upper = |a: f64, cap: f64| a >= cap;
    let at_lower = |a: f64| a <= 0.0;

    let max_iter = config.max_passes.saturating_mul(n.max(1));
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut gmax_idx = usize::MAX;
        let mut gmin = f64::INFINITY;
        let mut gmin_idx = usize::MAX;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let in_up = if y[t] > 0.0 {
                !at_upper(alpha[t], caps[t])
            } else {
                !at_lower(alpha[t])
            };
            let in_low = if y[t] > 0.0 {
                !at_lower(alpha[t])
            } else {
                !at_upper(alpha[t], caps[t])
            };
            if in_up && v > gmax {
                gmax = v;
                gmax_idx = t;
            }
            if in_low && v < gmin {
                gmin = v;
                gmin_idx = t;
            }
        }
        if gmax_idx == usize::MAX || gmin_idx == usize::MAX || gmax - gmin < config.tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let (i, j) = (gmax_idx, gmin_idx);
        let (ci, cj) = (caps[i], caps[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = q(i, i) + q(j, j) + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let mut quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    }

    let bias = -compute_rho(&y, &grad, &alpha, &caps);
    let worst_violation = kkt_violation(k, &y, &caps, &alpha, bias);
    Ok(DualSolution {
        alphas: alpha,
        labels: y,
        caps,
        bias,
        c: config.c,
        params: *k.params(),
        iterations,
        converged,
        worst_violation,
    })
}

fn compute_rho(y: &[f64], grad: &[f64], alpha: &[f64], caps: &[f64]) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free = 0usize;
    let mut free_sum = 0.0;
    for i in 0..y.len() {
        if caps[i] <= 0.0 {
            continue;
        }
        let yg = y[i] * grad[i];
        if alpha[i] >= caps[i] {
            if y[i] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[i] <= 0.0 {
            if y[i] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    if free > 0 {
        free_sum / free as f64
    } else if ub.is_finite() && lb.is_finite() {
        0.5 * (ub + lb)
    } else if ub.is_finite() {
        ub
    } else if lb.is_finite() {
        lb
    } else {
        0.0
    }
}

/// A trained classifier bound to its support sequences, able to score new
/// sequences.
#[derive(Clone, Debug)]
pub struct SvmModel {
    params: KernelParams,
    alphabet: Alphabet,
    engine: String,
    c: f64,
    bias: f64,
    support_index: Vec<usize>,
    support_alpha: Vec<f64>,
    support_label: Vec<f64>,
    support: Vec<Sequence>,
}

impl SvmModel {
    /// Keeps the support vectors of `solution`, taken from `training`
    /// (the sequences the Gram matrix was built from, in the same order).
    pub fn from_solution(solution: &DualSolution, training: &[Sequence], alphabet: &Alphabet) -> Result<Self> {
        if training.len() != solution.alphas.len() {
            return Err(TskError::DimensionMismatch(format!(
                "{} training sequences for {} dual coefficients",
                training.len(),
                solution.alphas.len()
            )));
        }
        let idx = solution.support();
        Ok(SvmModel {
            params: solution.params,
            alphabet: alphabet.clone(),
            engine: DEFAULT_ENGINE.to_string(),
            c: solution.c,
            bias: solution.bias,
            support_alpha: idx.iter().map(|&i| solution.alphas[i]).collect(),
            support_label: idx.iter().map(|&i| solution.labels[i]).collect(),
            support: idx.iter().map(|&i| training[i].clone()).collect(),
            support_index: idx,
        })
    }

    /// Selects the kernel engine used for scoring by registry name.
    pub fn with_engine(mut self, name: &str) -> Result<Self> {
        let engine = kernel_engines().get(name)?;
        engine.supports(&self.params)?;
        self.engine = name.to_string();
        Ok(self)
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn n_support(&self) -> usize {
        self.support.len()
    }

    pub fn support_indices(&self) -> &[usize] {
        &self.support_index
    }

    pub fn support_alphas(&self) -> &[f64] {
        &self.support_alpha
    }

    fn engine(&self) -> std::sync::Arc<dyn KernelEngine> {
        kernel_engines().get(&self.engine).expect("engine validated at construction")
    }

    pub fn decision_score(&self, x: &Sequence) -> Result<f64> {
        Ok(self.predict_batch(std::slice::from_ref(x))?[0].1)
    }

    /// Scores in input order.
    pub fn predict_batch(&self, data: &[Sequence]) -> Result<Vec<(String, f64)>> {
        if data.is_empty() {
            return Ok(Vec::new());
        }
        self.params.check_sequences(data)?;
        if self.support.is_empty() {
            return Ok(data.iter().map(|s| (s.id().to_string(), self.bias)).collect());
        }
        let cross = crate::stringkernel::cross_kernel_with(
            self.engine().as_ref(),
            &self.support,
            data,
            &self.params,
            &self.alphabet,
        )?;
        let scores: Vec<f64> = (0..data.len())
            .into_par_iter()
            .map(|j| {
                let s: f64 = (0..self.support.len())
                    .map(|i| self.support_alpha[i] * self.support_label[i] * cross.get(i, j))
                    .sum();
                s + self.bias
            })
            .collect();
        Ok(data.iter().map(|s| s.id().to_string()).zip(scores).collect())
    }

    /// Header `k m normalize C b n_support`, then one row per support
    /// vector: training index, α, y and the sequence.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# k m normalize C b n_support")?;
        writeln!(
            w,
            "{} {} {} {:.16e} {:.16e} {}",
            self.params.k,
            self.params.m,
            self.params.normalize,
            self.c,
            self.bias,
            self.support.len()
        )?;
        for i in 0..self.support.len() {
            writeln!(
                w,
                "{} {:.16e} {} {}",
                self.support_index[i],
                self.support_alpha[i],
                if self.support_label[i] > 0.0 { "+1" } else { "-1" },
                self.support[i].decode(&self.alphabet)
            )?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R, alphabet: &Alphabet) -> Result<Self> {
        let mut header: Option<(KernelParams, f64, f64, usize)> = None;
        let mut model = SvmModel {
            params: KernelParams {
                k: 1,
                m: 0,
                normalize: false,
            },
            alphabet: alphabet.clone(),
            engine: DEFAULT_ENGINE.to_string(),
            c: 0.0,
            bias: 0.0,
            support_index: Vec::new(),
            support_alpha: Vec::new(),
            support_label: Vec::new(),
            support: Vec::new(),
        };
        for (idx, line) in r.lines().enumerate() {
            let line = line.map_err(|e| TskError::io("<model text>", e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: String| TskError::Format { line: idx + 1, message: msg };
            let f: Vec<&str> = line.split_whitespace().collect();
            if header.is_none() {
                if f.len() != 6 {
                    return Err(bad("expected 'k m normalize C b n_support'".into()));
                }
                let k = f[0].parse().map_err(|_| bad("bad k".into()))?;
                let m = f[1].parse().map_err(|_| bad("bad m".into()))?;
                let normalize = f[2].parse().map_err(|_| bad("bad normalize flag".into()))?;
                let c: f64 = f[3].parse().map_err(|_| bad("bad C".into()))?;
                let b: f64 = f[4].parse().map_err(|_| bad("bad bias".into()))?;
                let n: usize = f[5].parse().map_err(|_| bad("bad n_support".into()))?;
                header = Some((KernelParams::new(k, m, normalize)?, c, b, n));
                continue;
            }
            if f.len() != 4 {
                return Err(bad("expected 'index alpha y sequence'".into()));
            }
            let index: usize = f[0].parse().map_err(|_| bad("bad index".into()))?;
            let alpha: f64 = f[1].parse().map_err(|_| bad("bad alpha".into()))?;
            let label = Label::parse(f[2]).ok_or_else(|| bad(format!("bad label '{}'", f[2])))?;
            let seq = alphabet.encode(&format!("sv{index}"), f[3])?;
            model.support_index.push(index);
            model.support_alpha.push(alpha);
            model.support_label.push(label.value());
            model.support.push(seq);
        }
        let (params, c, bias, n) = header.ok_or(TskError::Format {
            line: 1,
            message: "missing header".into(),
        })?;
        model.params = params;
        model.c = c;
        model.bias = bias;
        if model.support.len() != n {
            return Err(TskError::Format {
                line: 2,
                message: format!("header announces {n} support vectors, found {}", model.support.len()),
            });
        }
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(TskError::Config(format!("model C must be positive (got {})", self.c)));
        }
        if self.support_alpha.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            return Err(TskError::Config("support coefficients must be positive and finite".into()));
        }
        let total: f64 = self.support_alpha.iter().sum();
        let residual: f64 = self
            .support_alpha
            .iter()
            .zip(&self.support_label)
            .map(|(a, y)| a * y)
            .sum();
        if residual.abs() > 1e-6 * total.max(1.0) {
            return Err(TskError::Config(format!("Σ α_i y_i = {residual} is not zero")));
        }
        self.params.check_sequences(&self.support)
    }
}

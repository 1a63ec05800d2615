//! Kernel Mean Matching: importance weights for source samples that pull
//! the weighted source mean toward the target mean in feature space.
//!
//! The quadratic program
//!
//! ```text
//! minimize   (1/n²) βᵀKβ − (2/n²) κᵀβ
//! subject to 0 ≤ β_i ≤ B,   |Σβ_i − n| ≤ nε
//! ```
//!
//! is solved by projected gradient descent. The projection onto the box
//! intersected with the sum slab is computed exactly by a scalar search on
//! the shift `τ` in `clip(v − τ, 0, B)`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TskError};
use crate::stringkernel::{GramMatrix, KappaVector};

/// Ridge added to the diagonal of `K` before solving.
pub const RIDGE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KmmConfig {
    /// Upper box bound `B`.
    pub bound: f64,
    /// Sum-constraint slack ε; `None` uses `(√n − 1)/√n`.
    pub epsilon: Option<f64>,
    pub max_iterations: usize,
    /// Fixed step size; `None` uses `1/L` with `L = 2 λ_max(K) / n²`.
    pub step_size: Option<f64>,
    /// Relative objective change that counts as converged.
    pub tolerance: f64,
}

impl Default for KmmConfig {
    fn default() -> Self {
        KmmConfig {
            bound: 1000.0,
            epsilon: None,
            max_iterations: 10_000,
            step_size: None,
            tolerance: 1e-10,
        }
    }
}

impl KmmConfig {
    pub fn default_epsilon(n: usize) -> f64 {
        let root = (n as f64).sqrt();
        (root - 1.0) / root
    }

    pub fn epsilon_for(&self, n: usize) -> f64 {
        self.epsilon.unwrap_or_else(|| Self::default_epsilon(n))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bound > 0.0) || !self.bound.is_finite() {
            return Err(TskError::Config(format!("KMM bound B must be positive (got {})", self.bound)));
        }
        if let Some(eps) = self.epsilon {
            if !(0.0..1.0).contains(&eps) {
                return Err(TskError::Config(format!("KMM epsilon must lie in [0, 1) (got {eps})")));
            }
        }
        if self.max_iterations == 0 {
            return Err(TskError::Config("KMM max_iterations must be positive".into()));
        }
        if let Some(step) = self.step_size {
            if !(step > 0.0) {
                return Err(TskError::Config(format!("KMM step size must be positive (got {step})")));
            }
        }
        if !(self.tolerance > 0.0) {
            return Err(TskError::Config("KMM tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    /// Weights were fixed without optimization.
    Fixed,
}

/// Importance weights for the source samples.
#[derive(Clone, Debug, PartialEq)]
pub struct BetaWeights {
    pub values: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub stop: StopReason,
    pub bound: f64,
    pub epsilon: f64,
    /// Objective after each accepted iterate, starting with the initial point.
    pub trace: Vec<f64>,
}

impl BetaWeights {
    /// All-ones weights (no reweighting).
    pub fn uniform(n: usize) -> Self {
        BetaWeights {
            values: vec![1.0; n],
            objective: f64::NAN,
            iterations: 0,
            stop: StopReason::Fixed,
            bound: 1.0,
            epsilon: 0.0,
            trace: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Checks `0 ≤ β_i ≤ B` and `|Σβ − n| ≤ nε`, each up to `slack`.
    pub fn is_feasible(&self, slack: f64) -> bool {
        let n = self.values.len() as f64;
        self.values
            .iter()
            .all(|&b| b >= -slack && b <= self.bound + slack)
            && (self.sum() - n).abs() <= n * self.epsilon + slack
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# B epsilon iterations objective")?;
        writeln!(
            w,
            "{:.16e} {:.16e} {} {:.16e}",
            self.bound, self.epsilon, self.iterations, self.objective
        )?;
        for (i, b) in self.values.iter().enumerate() {
            writeln!(w, "{i} {b:.16e}")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut header: Option<(f64, f64, usize, f64)> = None;
        let mut values = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line.map_err(|e| TskError::io("<beta text>", e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| TskError::Format {
                line: idx + 1,
                message: msg.to_string(),
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if header.is_none() {
                if fields.len() != 4 {
                    return Err(bad("expected 'B epsilon iterations objective'"));
                }
                header = Some((
                    fields[0].parse().map_err(|_| bad("bad B"))?,
                    fields[1].parse().map_err(|_| bad("bad epsilon"))?,
                    fields[2].parse().map_err(|_| bad("bad iteration count"))?,
                    fields[3].parse().map_err(|_| bad("bad objective"))?,
                ));
                continue;
            }
            if fields.len() != 2 {
                return Err(bad("expected 'index weight'"));
            }
            let index: usize = fields[0].parse().map_err(|_| bad("bad index"))?;
            if index != values.len() {
                return Err(bad("indices must be consecutive from 0"));
            }
            values.push(fields[1].parse().map_err(|_| bad("bad weight"))?);
        }
        let (bound, epsilon, iterations, objective) = header.ok_or(TskError::Format {
            line: 1,
            message: "missing header".into(),
        })?;
        Ok(BetaWeights {
            values,
            objective,
            iterations,
            stop: StopReason::Fixed,
            bound,
            epsilon,
            trace: Vec::new(),
        })
    }
}

fn check_dims(n: usize, beta: Option<&[f64]>, kappa: &KappaVector) -> Result<()> {
    if kappa.len() != n {
        return Err(TskError::DimensionMismatch(format!(
            "kappa has length {}, kernel matrix is {n}×{n}",
            kappa.len()
        )));
    }
    if let Some(b) = beta {
        if b.len() != n {
            return Err(TskError::DimensionMismatch(format!(
                "beta has length {}, kernel matrix is {n}×{n}",
                b.len()
            )));
        }
    }
    Ok(())
}

/// `(1/n²) βᵀKβ − (2/n²) κᵀβ`, without the constant target self-term.
pub fn kmm_objective(beta: &[f64], k: &GramMatrix, kappa: &KappaVector) -> Result<f64> {
    let n = k.dim();
    check_dims(n, Some(beta), kappa)?;
    let rows = k.to_rows();
    Ok(objective(&rows, kappa.values(), beta))
}

fn mat_vec(rows: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    rows.iter()
        .map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn objective(rows: &[Vec<f64>], kappa: &[f64], beta: &[f64]) -> f64 {
    let n = beta.len() as f64;
    if beta.is_empty() {
        return 0.0;
    }
    let kb = mat_vec(rows, beta);
    (dot(beta, &kb) - 2.0 * dot(kappa, beta)) / (n * n)
}

/// Largest eigenvalue of a symmetric matrix by power iteration.
pub fn largest_eigenvalue(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len();
    if n == 0 {
        return 0.0;
    }
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut lambda = 0.0;
    for _ in 0..1000 {
        let w = mat_vec(rows, &v);
        let norm = dot(&w, &w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = dot(&v, &w);
        v = w.into_iter().map(|x| x / norm).collect();
        if (next - lambda).abs() <= 1e-12 * next.abs().max(1e-300) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda
}

/// Euclidean projection of `v` onto `{0 ≤ β ≤ bound, lo ≤ Σβ ≤ hi}`.
/// Returns `None` when the set is empty.
pub fn project(v: &[f64], bound: f64, lo: f64, hi: f64) -> Option<Vec<f64>> {
    let n = v.len() as f64;
    if lo > n * bound || hi < 0.0 || lo > hi {
        return None;
    }
    let clipped = |tau: f64| -> Vec<f64> { v.iter().map(|&x| (x - tau).clamp(0.0, bound)).collect() };
    let sum_at = |tau: f64| -> f64 { v.iter().map(|&x| (x - tau).clamp(0.0, bound)).sum() };

    let s0 = sum_at(0.0);
    if s0 >= lo && s0 <= hi {
        return Some(clipped(0.0));
    }
    let target = if s0 > hi { hi } else { lo };
    // sum_at is non-increasing in tau; bracket the root
    let vmax = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let vmin = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let (mut a, mut b) = if s0 > hi { (0.0, vmax) } else { (vmin - bound, 0.0) };
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if sum_at(mid) > target {
            a = mid;
        } else {
            b = mid;
        }
    }
    // Solve the linear piece exactly: free coordinates move with tau.
    let tau = 0.5 * (a + b);
    let mut fixed_sum = 0.0;
    let mut free_sum = 0.0;
    let mut free = 0usize;
    for &x in v {
        let y = x - tau;
        if y <= 0.0 {
        } else if y >= bound {
            fixed_sum += bound;
        } else {
            free_sum += x;
            free += 1;
        }
    }
    let tau = if free > 0 {
        let exact = (free_sum + fixed_sum - target) / free as f64;
        if exact >= a - 1e-12 * (1.0 + a.abs()) && exact <= b + 1e-12 * (1.0 + b.abs()) {
            exact
        } else {
            tau
        }
    } else {
        tau
    };
    Some(clipped(tau))
}

/// Solves the KMM program for `β`.
pub fn solve_beta(k: &GramMatrix, kappa: &KappaVector, config: &KmmConfig) -> Result<BetaWeights> {
    config.validate()?;
    let n = k.dim();
    check_dims(n, None, kappa)?;
    if n == 0 {
        return Err(TskError::Empty("source set".into()));
    }
    let mut rows = k.to_rows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (rows[i][j] + rows[j][i]);
            rows[i][j] = avg;
            rows[j][i] = avg;
        }
        rows[i][i] += RIDGE;
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) || kappa.values().iter().any(|v| !v.is_finite()) {
        return Err(TskError::Solver {
            message: "kernel matrix or kappa contains non-finite values".into(),
            last_iterate: Vec::new(),
            objective_trace: Vec::new(),
        });
    }
    let kap = kappa.values();
    let nf = n as f64;
    let eps = config.epsilon_for(n);
    let (lo, hi) = (nf * (1.0 - eps), nf * (1.0 + eps));
    let infeasible = |beta: Vec<f64>, trace: Vec<f64>| TskError::Solver {
        message: format!(
            "no feasible weights: box [0, {}] cannot reach a sum in [{lo}, {hi}]",
            config.bound
        ),
        last_iterate: beta,
        objective_trace: trace,
    };

    let mut beta = match project(&vec![1.0; n], config.bound, lo, hi) {
        Some(b) => b,
        None => return Err(infeasible(vec![1.0; n], Vec::new())),
    };
    let lipschitz = 2.0 * largest_eigenvalue(&rows) / (nf * nf);
    let mut step = match config.step_size {
        Some(s) => s,
        None if lipschitz > 0.0 => 1.0 / lipschitz,
        None => 1.0,
    };

    let mut f = objective(&rows, kap, &beta);
    let mut trace = vec![f];
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        let kb = mat_vec(&rows, &beta);
        let grad: Vec<f64> = kb
            .iter()
            .zip(kap)
            .map(|(a, c)| 2.0 * (a - c) / (nf * nf))
            .collect();
        let mut accepted = None;
        // A step above 1/L can overshoot; halve it until the objective does not rise.
        for _ in 0..60 {
            let moved: Vec<f64> = beta.iter().zip(&grad).map(|(b, g)| b - step * g).collect();
            let Some(candidate) = project(&moved, config.bound, lo, hi) else {
                return Err(infeasible(beta, trace));
            };
            let fc = objective(&rows, kap, &candidate);
            if fc <= f + 1e-12 * (1.0 + f.abs()) {
                accepted = Some((candidate, fc));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, fc)) = accepted else {
            stop = StopReason::Converged;
            break;
        };
        let delta = (fc - f).abs();
        beta = candidate;
        f = fc.min(f);
        trace.push(f);
        if delta <= config.tolerance * (1.0 + f.abs()) {
            stop = StopReason::Converged;
            break;
        }
    }

    // reported against the caller's matrix, without the ridge
    let reported = objective(&k.to_rows(), kap, &beta);
    let result = BetaWeights {
        values: beta,
        objective: reported,
        iterations,
        stop,
        bound: config.bound,
        epsilon: eps,
        trace,
    };
    if !result.is_feasible(1e-6 * nf) {
        let BetaWeights { values, trace, .. } = result;
        return Err(infeasible(values, trace));
    }
    Ok(result)
}

//! Independent reference computations shared by the integration tests and
//! the acceptance target. Nothing here calls the solvers under test.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use tsk_core::{Alphabet, GramMatrix, Sequence};

pub fn random_sequence(rng: &mut ChaCha8Rng, alphabet: &Alphabet, id: &str, len: usize) -> Sequence {
    let codes = (0..len).map(|_| rng.gen_range(0..alphabet.size()) as u8).collect();
    Sequence::new(id, codes, alphabet).unwrap()
}

pub fn random_set(rng: &mut ChaCha8Rng, alphabet: &Alphabet, prefix: &str, n: usize, len: std::ops::RangeInclusive<usize>) -> Vec<Sequence> {
    (0..n)
        .map(|i| {
            let l = rng.gen_range(len.clone());
            random_sequence(rng, alphabet, &format!("{prefix}{i}"), l)
        })
        .collect()
}

/// Sequences built from a small pool of repeated blocks, so that kernel
/// values are large and neighbourhoods overlap heavily.
pub fn repetitive_sequence(rng: &mut ChaCha8Rng, alphabet: &Alphabet, id: &str, len: usize) -> Sequence {
    let block: Vec<u8> = (0..rng.gen_range(2..5)).map(|_| rng.gen_range(0..alphabet.size()) as u8).collect();
    let mut codes: Vec<u8> = block.iter().cycle().take(len).copied().collect();
    for _ in 0..rng.gen_range(0..3) {
        let p = rng.gen_range(0..len);
        codes[p] = rng.gen_range(0..alphabet.size()) as u8;
    }
    Sequence::new(id, codes, alphabet).unwrap()
}

pub fn to_matrix(k: &GramMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(k.dim(), k.dim(), |i, j| k.get(i, j))
}

/// (smallest, largest) eigenvalue.
pub fn eigen_range(k: &GramMatrix) -> (f64, f64) {
    let eig = SymmetricEigen::new(to_matrix(k));
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

pub fn kmm_objective(k: &DMatrix<f64>, kappa: &[f64], beta: &[f64]) -> f64 {
    let n = beta.len() as f64;
    let b = DVector::from_column_slice(beta);
    let quad = (b.transpose() * k * &b)[(0, 0)];
    let lin: f64 = kappa.iter().zip(beta).map(|(a, b)| a * b).sum();
    (quad - 2.0 * lin) / (n * n)
}

/// Best KMM objective over the lattice `{0, step, 2·step, …, bound}^n`
/// restricted to `lo ≤ Σβ ≤ hi`.
pub fn kmm_lattice_best(k: &DMatrix<f64>, kappa: &[f64], bound: f64, lo: f64, hi: f64, step: f64) -> Option<(f64, Vec<f64>)> {
    let n = kappa.len();
    let levels = (bound / step).round() as usize + 1;
    let mut idx = vec![0usize; n];
    let mut best: Option<(f64, Vec<f64>)> = None;
    let nn = (n * n) as f64;
    loop {
        let beta: Vec<f64> = idx.iter().map(|&i| (i as f64 * step).min(bound)).collect();
        let s: f64 = beta.iter().sum();
        if s >= lo - 1e-12 && s <= hi + 1e-12 {
            let mut quad = 0.0;
            for i in 0..n {
                if beta[i] == 0.0 {
                    continue;
                }
                let mut row = 0.0;
                for j in 0..n {
                    row += k[(i, j)] * beta[j];
                }
                quad += beta[i] * (row - 2.0 * kappa[i]);
            }
            let f = quad / nn;
            if best.as_ref().is_none_or(|(b, _)| f < *b) {
                best = Some((f, beta));
            }
        }
        let mut pos = 0;
        loop {
            if pos == n {
                return best;
            }
            idx[pos] += 1;
            if idx[pos] < levels {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Exact solution of the box- and equality-constrained SVM dual
/// `max Σα − ½ αᵀQα`, found by enumerating which variables sit at 0, at
/// their cap, or strictly between, and solving the KKT system of each face.
pub struct DualOracle {
    pub alphas: Vec<f64>,
    pub objective: f64,
    pub bias: f64,
}

pub fn svm_dual_oracle(k: &DMatrix<f64>, y: &[f64], caps: &[f64]) -> DualOracle {
    let n = y.len();
    let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * k[(i, j)]);
    let objective = |a: &[f64]| {
        let v = DVector::from_column_slice(a);
        a.iter().sum::<f64>() - 0.5 * (v.transpose() * &q * &v)[(0, 0)]
    };
    let mut best: Option<(f64, Vec<f64>, Option<f64>)> = None;
    let total = 3usize.pow(n as u32);
    'faces: for code in 0..total {
        // 0 = at lower bound, 1 = at cap, 2 = free
        let mut state = vec![0u8; n];
        let mut c = code;
        for s in state.iter_mut() {
            *s = (c % 3) as u8;
            c /= 3;
        }
        if state.iter().zip(caps).any(|(&s, &cap)| s != 0 && cap == 0.0) {
            continue;
        }
        let mut alpha: Vec<f64> = state.iter().zip(caps).map(|(&s, &cap)| if s == 1 { cap } else { 0.0 }).collect();
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let bounded_sum: f64 = (0..n).filter(|&i| state[i] != 2).map(|i| y[i] * alpha[i]).sum();
        let mut nu = None;
        if free.is_empty() {
            if bounded_sum.abs() > 1e-9 {
                continue;
            }
        } else {
            let f = free.len();
            let mut a = DMatrix::zeros(f + 1, f + 1);
            let mut rhs = DVector::zeros(f + 1);
            for (r, &i) in free.iter().enumerate() {
                for (c, &j) in free.iter().enumerate() {
                    a[(r, c)] = q[(i, j)];
                }
                a[(r, f)] = y[i];
                a[(f, r)] = y[i];
                let fixed: f64 = (0..n).filter(|&j| state[j] != 2).map(|j| q[(i, j)] * alpha[j]).sum();
                rhs[r] = 1.0 - fixed;
            }
            rhs[f] = -bounded_sum;
            let Some(sol) = a.lu().solve(&rhs) else { continue };
            for (r, &i) in free.iter().enumerate() {
                let v = sol[r];
                if !(v > 1e-12 && v < caps[i] - 1e-12) {
                    continue 'faces;
                }
                alpha[i] = v;
            }
            nu = Some(sol[f]);
        }
        let obj = objective(&alpha);
        if best.as_ref().is_none_or(|(b, _, _)| obj > *b + 1e-12) {
            best = Some((obj, alpha, nu));
        }
    }
    let (objective, alphas, nu) = best.expect("the all-zero point is always feasible");
    let bias = nu.unwrap_or_else(|| bias_interval_midpoint(k, y, caps, &alphas));
    DualOracle { alphas, objective, bias }
}

/// Midpoint of the biases consistent with complementary slackness when no
/// multiplier is strictly inside its box.
fn bias_interval_midpoint(k: &DMatrix<f64>, y: &[f64], caps: &[f64], alphas: &[f64]) -> f64 {
    let n = y.len();
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..n {
        if caps[i] == 0.0 {
            continue;
        }
        let g: f64 = (0..n).map(|j| alphas[j] * y[j] * k[(i, j)]).sum();
        // need y_i (g + b) ≥ 1 at α = 0 and ≤ 1 at α = cap
        let edge = y[i] - g;
        let at_zero = alphas[i] <= 0.0;
        match (y[i] > 0.0, at_zero) {
            (true, true) | (false, false) => lo = lo.max(edge),
            (true, false) | (false, true) => hi = hi.min(edge),
        }
    }
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo,
        (false, true) => hi,
        (false, false) => 0.0,
    }
}

pub fn decision(k_col: &[f64], y: &[f64], alphas: &[f64], bias: f64) -> f64 {
    k_col.iter().zip(y).zip(alphas).map(|((kv, yv), a)| a * yv * kv).sum::<f64>() + bias
}

/// AUC by counting every positive/negative pair.
pub fn pair_count_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let (mut twice, mut np, mut nn) = (0u64, 0u64, 0u64);
    for (i, &pi) in positive.iter().enumerate() {
        if !pi {
            nn += 1;
            continue;
        }
        np += 1;
        for (j, &pj) in positive.iter().enumerate() {
            if !pj {
                twice += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
    }
    twice as f64 / (2 * np * nn) as f64
}

/// `Σ_γ c_x(γ) c_y(γ)` with `c_x(γ)` = number of k-mers of `x` within
/// Hamming distance `m` of `γ`, enumerating every `γ ∈ Σ^k`.
pub fn feature_map_kernel(x: &[u8], y: &[u8], k: usize, m: usize, d: usize) -> u128 {
    let count = |s: &[u8], gamma: &[u8]| -> u128 {
        s.windows(k)
            .filter(|w| w.iter().zip(gamma).filter(|(a, b)| a != b).count() <= m)
            .count() as u128
    };
    let total = d.pow(k as u32);
    let mut gamma = vec![0u8; k];
    let mut sum = 0u128;
    for code in 0..total {
        let mut c = code;
        for g in gamma.iter_mut() {
            *g = (c % d) as u8;
            c /= d;
        }
        let cx = count(x, &gamma);
        if cx > 0 {
            sum += cx * count(y, &gamma);
        }
    }
    sum
}

//! Mismatch neighborhoods and the pairwise intersection coefficients used by
//! the fast mismatch kernel.
//!
//! For two k-mers `a`, `b` at Hamming distance `q`, the number of k-mers `g`
//! with `dist(g, a) <= m` and `dist(g, b) <= m` depends only on `(q, k, m, d)`.
//! The mismatch kernel is then a sum over k-mer pairs of that coefficient.

use std::collections::BTreeSet;

use crate::error::{Result, TskError};
use crate::seqdata::Alphabet;

/// Exhaustive enumeration is used for the coefficients while `d^k` stays
/// below this many k-mers.
pub const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

/// Every k-mer within Hamming distance `m` of `gamma`.
pub fn mismatch_neighborhood(gamma: &[u8], m: usize, alphabet: &Alphabet) -> Result<BTreeSet<Vec<u8>>> {
    if m > gamma.len() {
        return Err(TskError::InvalidParams(format!(
            "m = {m} exceeds k = {}",
            gamma.len()
        )));
    }
    if let Some(&bad) = gamma.iter().find(|&&c| c as usize >= alphabet.size()) {
        return Err(TskError::InvalidParams(format!(
            "code {bad} outside alphabet of size {}",
            alphabet.size()
        )));
    }
    let mut out = BTreeSet::new();
    for_each_neighbor(gamma, m, alphabet.size() as u8, |g| {
        out.insert(g.to_vec());
    });
    Ok(out)
}

/// Visits each k-mer within distance `m` of `gamma` exactly once.
pub(crate) fn for_each_neighbor(gamma: &[u8], m: usize, d: u8, mut f: impl FnMut(&[u8])) {
    fn recurse(buf: &mut [u8], orig: &[u8], start: usize, left: usize, d: u8, f: &mut dyn FnMut(&[u8])) {
        f(buf);
        if left == 0 {
            return;
        }
        for pos in start..buf.len() {
            for sym in 0..d {
                if sym == orig[pos] {
                    continue;
                }
                buf[pos] = sym;
                recurse(buf, orig, pos + 1, left - 1, d, f);
            }
            buf[pos] = orig[pos];
        }
    }
    let mut buf = gamma.to_vec();
    recurse(&mut buf, gamma, 0, m, d, &mut f);
}

/// `Σ_{i=0..m} C(k,i)(d-1)^i`.
pub fn neighborhood_size(k: usize, m: usize, d: usize) -> u128 {
    (0..=m.min(k))
        .map(|i| binomial(k, i) * (d as u128 - 1).pow(i as u32))
        .sum()
}

pub(crate) fn binomial(n: usize, r: usize) -> u128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Coefficient table `I[q]` for `q = 0..=k`, choosing exhaustive enumeration
/// for small k-mer spaces and the combinatorial sum otherwise.
pub fn intersection_coefficients(k: usize, m: usize, d: usize) -> Vec<u128> {
    let space = (d as u128).checked_pow(k as u32);
    match space {
        Some(s) if s <= EXHAUSTIVE_LIMIT => intersection_coefficients_exhaustive(k, m, d),
        _ => intersection_coefficients_closed_form(k, m, d),
    }
}

/// Counts, for each `q`, the k-mers close to both `0^k` and `1^q 0^(k-q)`.
pub fn intersection_coefficients_exhaustive(k: usize, m: usize, d: usize) -> Vec<u128> {
    let mut out = vec![0u128; k + 1];
    let mut gamma = vec![0u8; k];
    loop {
        // Per-prefix distances: `to_a` counts nonzero symbols, `to_b` counts
        // mismatches against 1 inside the prefix and nonzero symbols after it.
        let nonzero_suffix: Vec<usize> = {
            let mut suffix = vec![0usize; k + 1];
            for i in (0..k).rev() {
                suffix[i] = suffix[i + 1] + usize::from(gamma[i] != 0);
            }
            suffix
        };
        let to_a = nonzero_suffix[0];
        if to_a <= m {
            let mut prefix_mismatch = 0;
            for q in 0..=k {
                if q > 0 {
                    if d < 2 {
                        break;
                    }
                    prefix_mismatch += usize::from(gamma[q - 1] != 1);
                }
                let to_b = prefix_mismatch + nonzero_suffix[q];
                if to_b <= m {
                    out[q] += 1;
                }
            }
        }
        // odometer increment
        let mut pos = 0;
        while pos < k {
            gamma[pos] += 1;
            if (gamma[pos] as usize) < d {
                break;
            }
            gamma[pos] = 0;
            pos += 1;
        }
        if pos == k {
            break;
        }
    }
    out
}

/// Closed-form count. With `q` differing and `k - q` agreeing positions:
/// in agreeing positions `g` either matches both or differs from both
/// (`t` such positions, `d-1` choices each); in differing positions `g`
/// takes `a`'s symbol (`u`), `b`'s symbol (`v`) or another (`w`, `d-2`
/// choices each). Then `dist(g,a) = t+v+w` and `dist(g,b) = t+u+w`.
pub fn intersection_coefficients_closed_form(k: usize, m: usize, d: usize) -> Vec<u128> {
    let pow = |base: usize, e: usize| -> u128 {
        if e == 0 {
            1
        } else {
            (base as u128).pow(e as u32)
        }
    };
    let mut out = vec![0u128; k + 1];
    for (q, slot) in out.iter_mut().enumerate() {
        if q > 0 && d < 2 {
            break;
        }
        let mut total = 0u128;
        for t in 0..=(k - q).min(m) {
            let agree = binomial(k - q, t) * pow(d - 1, t);
            for w in 0..=q {
                if w > 0 && d < 3 {
                    break;
                }
                for u in 0..=(q - w) {
                    let v = q - w - u;
                    if t + v + w > m || t + u + w > m {
                        continue;
                    }
                    let arrangements = binomial(q, w) * binomial(q - w, u);
                    total += agree * arrangements * pow(d.saturating_sub(2), w);
                }
            }
        }
        *slot = total;
    }
    out
}

use rayon::prelude::*;

use super::kmer::{kmer_counts, KmerCounts, KmerProfile};
use super::neighborhood::{for_each_neighbor, intersection_coefficients};
use super::KernelParams;
use crate::error::{Result, TskError};
use crate::seqdata::{Alphabet, Sequence};

/// A way of computing raw (unnormalized, integer) string-kernel values.
///
/// Implementations must agree exactly on every input they accept; they
/// differ only in cost. Block methods return row-major values.
pub trait KernelEngine: Send + Sync {
    fn name(&self) -> &'static str;

    /// Rejects parameter sets the engine cannot evaluate.
    fn supports(&self, params: &KernelParams) -> Result<()> {
        params.validate()
    }

    fn raw(&self, x: &Sequence, y: &Sequence, params: &KernelParams, alphabet: &Alphabet) -> Result<u128>;

    /// Values for every `(row, col)` pair.
    fn raw_block(
        &self,
        rows: &[Sequence],
        cols: &[Sequence],
        params: &KernelParams,
        alphabet: &Alphabet,
    ) -> Result<Vec<u128>> {
        self.supports(params)?;
        params.check_sequences(rows.iter().chain(cols))?;
        let out: Result<Vec<Vec<u128>>> = rows
            .par_iter()
            .map(|x| cols.iter().map(|y| self.raw(x, y, params, alphabet)).collect())
            .collect();
        Ok(out?.concat())
    }

    /// Square block over one list; only the upper triangle is evaluated.
    fn raw_symmetric(&self, data: &[Sequence], params: &KernelParams, alphabet: &Alphabet) -> Result<Vec<u128>> {
        self.supports(params)?;
        params.check_sequences(data)?;
        let upper: Result<Vec<Vec<u128>>> = (0..data.len())
            .into_par_iter()
            .map(|i| {
                data[i..]
                    .iter()
                    .map(|y| self.raw(&data[i], y, params, alphabet))
                    .collect()
            })
            .collect();
        Ok(mirror(data.len(), upper?))
    }

    fn self_values(&self, data: &[Sequence], params: &KernelParams, alphabet: &Alphabet) -> Result<Vec<u128>> {
        self.supports(params)?;
        params.check_sequences(data)?;
        data.par_iter().map(|x| self.raw(x, x, params, alphabet)).collect()
    }
}

/// Expands per-row upper-triangle slices into a full row-major matrix.
fn mirror(n: usize, upper: Vec<Vec<u128>>) -> Vec<u128> {
    let mut out = vec![0u128; n * n];
    for (i, row) in upper.into_iter().enumerate() {
        for (offset, v) in row.into_iter().enumerate() {
            let j = i + offset;
            out[i * n + j] = v;
            out[j * n + i] = v;
        }
    }
    out
}

pub(crate) fn spectrum_raw(a: &KmerCounts, b: &KmerCounts) -> u128 {
    // both iterators are sorted by k-mer
    let mut total = 0u128;
    let mut ia = a.iter().peekable();
    let mut ib = b.iter().peekable();
    while let (Some(&(ka, ca)), Some(&(kb, cb))) = (ia.peek(), ib.peek()) {
        match ka.cmp(kb) {
            std::cmp::Ordering::Less => {
                ia.next();
            }
            std::cmp::Ordering::Greater => {
                ib.next();
            }
            std::cmp::Ordering::Equal => {
                total += ca as u128 * cb as u128;
                ia.next();
                ib.next();
            }
        }
    }
    total
}

/// Exact k-mer matching: inner product of k-mer count vectors. Only `m = 0`.
pub struct SpectrumEngine;

impl KernelEngine for SpectrumEngine {
    fn name(&self) -> &'static str {
        "spectrum"
    }

    fn supports(&self, params: &KernelParams) -> Result<()> {
        params.validate()?;
        if params.m != 0 {
            return Err(TskError::InvalidParams(format!(
                "the spectrum engine requires m = 0 (got m = {})",
                params.m
            )));
        }
        Ok(())
    }

    fn raw(&self, x: &Sequence, y: &Sequence, params: &KernelParams, _alphabet: &Alphabet) -> Result<u128> {
        self.supports(params)?;
        params.check_sequences([x, y])?;
        Ok(spectrum_raw(&kmer_counts(x, params.k)?, &kmer_counts(y, params.k)?))
    }
}

/// Mismatch kernel through Hamming-distance pair statistics: the sum over
/// k-mer pairs `(a, b)` of `c_x(a) c_y(b) I(dist(a, b))`, where `I` counts the
/// k-mers inside both mismatch balls.
pub struct MismatchEngine;

impl MismatchEngine {
    fn profiles(data: &[Sequence], k: usize, d: usize) -> Result<Vec<KmerProfile>> {
        data.par_iter()
            .map(|s| kmer_counts(s, k).map(|c| KmerProfile::new(&c, d)))
            .collect()
    }

    fn pair_value(a: &KmerProfile, b: &KmerProfile, coeff: &[u128]) -> u128 {
        let mut total = 0u128;
        a.for_each_pair(b, |ca, cb, q| {
            let c = coeff[q];
            if c != 0 {
                total += (ca as u128 * cb as u128) * c;
            }
        });
        total
    }
}

impl KernelEngine for MismatchEngine {
    fn name(&self) -> &'static str {
        "mismatch"
    }

    fn raw(&self, x: &Sequence, y: &Sequence, params: &KernelParams, alphabet: &Alphabet) -> Result<u128> {
        params.check_sequences([x, y])?;
        let d = alphabet.size();
        let coeff = intersection_coefficients(params.k, params.m, d);
        let a = KmerProfile::new(&kmer_counts(x, params.k)?, d);
        let b = KmerProfile::new(&kmer_counts(y, params.k)?, d);
        Ok(Self::pair_value(&a, &b, &coeff))
    }

    fn raw_block(
        &self,
        rows: &[Sequence],
        cols: &[Sequence],
        params: &KernelParams,
        alphabet: &Alphabet,
    ) -> Result<Vec<u128>> {
        params.check_sequences(rows.iter().chain(cols))?;
        let d = alphabet.size();
        let coeff = intersection_coefficients(params.k, params.m, d);
        let pr = Self::profiles(rows, params.k, d)?;
        let pc = Self::profiles(cols, params.k, d)?;
        let out: Vec<Vec<u128>> = pr
            .par_iter()
            .map(|a| pc.iter().map(|b| Self::pair_value(a, b, &coeff)).collect())
            .collect();
        Ok(out.concat())
    }

    fn raw_symmetric(&self, data: &[Sequence], params: &KernelParams, alphabet: &Alphabet) -> Result<Vec<u128>> {
        params.check_sequences(data)?;
        let d = alphabet.size();
        let coeff = intersection_coefficients(params.k, params.m, d);
        let profiles = Self::profiles(data, params.k, d)?;
        let upper: Vec<Vec<u128>> = (0..data.len())
            .into_par_iter()
            .map(|i| {
                profiles[i..]
                    .iter()
                    .map(|b| Self::pair_value(&profiles[i], b, &coeff))
                    .collect()
            })
            .collect();
        Ok(mirror(data.len(), upper))
    }

    fn self_values(&self, data: &[Sequence], params: &KernelParams, alphabet: &Alphabet) -> Result<Vec<u128>> {
        params.check_sequences(data)?;
        let d = alphabet.size();
        let coeff = intersection_coefficients(params.k, params.m, d);
        let profiles = Self::profiles(data, params.k, d)?;
        Ok(profiles.iter().map(|p| Self::pair_value(p, p, &coeff)).collect())
    }
}

/// Mismatch kernel by explicit neighborhood expansion: every window of `x`
/// contributes to each k-mer in its mismatch ball, giving `c_x^{k,m}`; the
/// windows of `y` are expanded the same way and looked up against it.
///
/// Cost grows with the ball size `Σ C(k,i)(d-1)^i`, so this engine is meant
/// as a reference for small `k` and `m`.
pub struct BruteForceMismatch;

/// Largest k-mer space held as a dense count table.
const DENSE_LIMIT: u64 = 1 << 22;

enum Expansion {
    Dense(Vec<u32>),
    Sorted { keys: Vec<u64>, counts: Vec<u64> },
}

impl Expansion {
    fn lookup(&self, idx: u64) -> u64 {
        match self {
            Expansion::Dense(table) => table[idx as usize] as u64,
            Expansion::Sorted { keys, counts } => match keys.binary_search(&idx) {
                Ok(pos) => counts[pos],
                Err(_) => 0,
            },
        }
    }
}

impl BruteForceMismatch {
    fn space(params: &KernelParams, d: usize) -> Result<u64> {
        (d as u64).checked_pow(params.k as u32).ok_or_else(|| {
            TskError::InvalidParams(format!(
                "k-mer space {d}^{} is too large for neighborhood expansion",
                params.k
            ))
        })
    }

    fn index(kmer: &[u8], d: u64) -> u64 {
        kmer.iter().fold(0u64, |acc, &c| acc * d + c as u64)
    }

    fn expand(x: &Sequence, params: &KernelParams, d: usize, space: u64) -> Expansion {
        let windows = x.codes().windows(params.k);
        if space <= DENSE_LIMIT {
            let mut table = vec![0u32; space as usize];
            for w in windows {
                for_each_neighbor(w, params.m, d as u8, |g| table[Self::index(g, d as u64) as usize] += 1);
            }
            Expansion::Dense(table)
        } else {
            let mut all = Vec::new();
            for w in windows {
                for_each_neighbor(w, params.m, d as u8, |g| all.push(Self::index(g, d as u64)));
            }
            all.sort_unstable();
            let mut keys = Vec::new();
            let mut counts: Vec<u64> = Vec::new();
            for idx in all {
                if keys.last() == Some(&idx) {
                    *counts.last_mut().unwrap() += 1;
                } else {
                    keys.push(idx);
                    counts.push(1);
                }
            }
            Expansion::Sorted { keys, counts }
        }
    }

    fn against(expanded: &Expansion, y: &Sequence, params: &KernelParams, d: usize) -> u128 {
        let mut total = 0u128;
        for w in y.codes().windows(params.k) {
            for_each_neighbor(w, params.m, d as u8, |g| {
                total += expanded.lookup(Self::index(g, d as u64)) as u128;
            });
        }
        total
    }
}

impl KernelEngine for BruteForceMismatch {
    fn name(&self) -> &'static str {
        "mismatch-brute"
    }

    fn raw(&self, x: &Sequence, y: &Sequence, params: &KernelParams, alphabet: &Alphabet) -> Result<u128> {
        params.check_sequences([x, y])?;
        let d = alphabet.size();
        let space = Self::space(params, d)?;
        let expanded = Self::expand(x, params, d, space);
        Ok(Self::against(&expanded, y, params, d))
    }

    fn raw_block(
        &self,
        rows: &[Sequence],
        cols: &[Sequence],
        params: &KernelParams,
        alphabet: &Alphabet,
    ) -> Result<Vec<u128>> {
        params.check_sequences(rows.iter().chain(cols))?;
        let d = alphabet.size();
        let space = Self::space(params, d)?;
        let out: Vec<Vec<u128>> = rows
            .par_iter()
            .map(|x| {
                let expanded = Self::expand(x, params, d, space);
                cols.iter().map(|y| Self::against(&expanded, y, params, d)).collect()
            })
            .collect();
        Ok(out.concat())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dna(s: &str) -> Sequence {
        Alphabet::dna().encode("s", s).unwrap()
    }

    #[test]
    fn engines_agree_on_small_cases() {
        let alphabet = Alphabet::dna();
        let xs = ["ACGTTGCA", "AAAAAAAC", "GATTACA", "TTTT"];
        for k in 1..=4 {
            for m in 0..=k.min(2) {
                let p = KernelParams::new(k, m, false).unwrap();
                for a in xs {
                    for b in xs {
                        let fast = MismatchEngine.raw(&dna(a), &dna(b), &p, &alphabet).unwrap();
                        let slow = BruteForceMismatch.raw(&dna(a), &dna(b), &p, &alphabet).unwrap();
                        assert_eq!(fast, slow, "{a} {b} k={k} m={m}");
                        if m == 0 {
                            let spec = SpectrumEngine.raw(&dna(a), &dna(b), &p, &alphabet).unwrap();
                            assert_eq!(fast, spec);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn spectrum_engine_rejects_mismatches() {
        let p = KernelParams::new(3, 1, false).unwrap();
        assert!(SpectrumEngine
            .raw(&dna("ACGT"), &dna("ACGT"), &p, &Alphabet::dna())
            .is_err());
    }

    #[test]
    fn symmetric_block_matches_full_block() {
        let alphabet = Alphabet::dna();
        let data: Vec<Sequence> = ["ACGTAC", "GGGTAC", "TTACGA"].iter().map(|s| dna(s)).collect();
        let p = KernelParams::new(3, 1, false).unwrap();
        for engine in [&MismatchEngine as &dyn KernelEngine, &BruteForceMismatch] {
            let sym = engine.raw_symmetric(&data, &p, &alphabet).unwrap();
            let full = engine.raw_block(&data, &data, &p, &alphabet).unwrap();
            assert_eq!(sym, full, "{}", engine.name());
        }
    }

    #[test]
    fn sorted_expansion_path() {
        // 20^6 exceeds the dense table limit
        let alphabet = Alphabet::protein();
        let x = alphabet.encode("x", "ACDEFGHIK").unwrap();
        let y = alphabet.encode("y", "ACDQFGHIW").unwrap();
        let p = KernelParams::new(6, 1, false).unwrap();
        assert_eq!(
            BruteForceMismatch.raw(&x, &y, &p, &alphabet).unwrap(),
            MismatchEngine.raw(&x, &y, &p, &alphabet).unwrap()
        );
    }
}

use std::collections::BTreeMap;

use crate::error::{Result, TskError};
use crate::seqdata::Sequence;

/// Exact k-mer spectrum of one sequence: every contiguous length-k window,
/// with multiplicity. Stored keys always have count ≥ 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KmerCounts {
    k: usize,
    counts: BTreeMap<Vec<u8>, u64>,
}

impl KmerCounts {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, kmer: &[u8]) -> u64 {
        self.counts.get(kmer).copied().unwrap_or(0)
    }

    /// Number of distinct k-mers.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Sum of all counts, i.e. the number of windows.
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u8], u64)> {
        self.counts.iter().map(|(k, &c)| (k.as_slice(), c))
    }
}

pub fn kmer_counts(x: &Sequence, k: usize) -> Result<KmerCounts> {
    if k == 0 {
        return Err(TskError::InvalidParams("k must be at least 1".into()));
    }
    if x.len() < k {
        return Err(TskError::SequenceTooShort {
            id: x.id().to_string(),
            length: x.len(),
            k,
        });
    }
    let mut counts = BTreeMap::new();
    for window in x.codes().windows(k) {
        *counts.entry(window.to_vec()).or_insert(0) += 1;
    }
    Ok(KmerCounts { k, counts })
}

/// Bits needed to store one symbol of an alphabet of size `d`.
pub(crate) fn bits_per_symbol(d: usize) -> u32 {
    let mut bits = 1;
    while (1usize << bits) < d {
        bits += 1;
    }
    bits
}

#[derive(Clone, Debug)]
enum Keys {
    /// Symbols packed `bits` apart; `low` has the lowest bit of each slot set.
    Packed { keys: Vec<u64>, bits: u32, low: u64 },
    Bytes(Vec<Vec<u8>>),
}

/// Distinct k-mers with their counts in a layout suited to fast pairwise
/// Hamming distances.
#[derive(Clone, Debug)]
pub(crate) struct KmerProfile {
    keys: Keys,
    counts: Vec<u64>,
}

impl KmerProfile {
    pub(crate) fn new(spectrum: &KmerCounts, alphabet_size: usize) -> Self {
        let k = spectrum.k();
        let bits = bits_per_symbol(alphabet_size);
        let counts: Vec<u64> = spectrum.iter().map(|(_, c)| c).collect();
        let keys = if bits as usize * k <= 64 {
            let low = (0..k).fold(0u64, |acc, i| acc | 1u64 << (i as u32 * bits));
            let keys = spectrum
                .iter()
                .map(|(kmer, _)| {
                    kmer.iter()
                        .enumerate()
                        .fold(0u64, |acc, (i, &c)| acc | (c as u64) << (i as u32 * bits))
                })
                .collect();
            Keys::Packed { keys, bits, low }
        } else {
            Keys::Bytes(spectrum.iter().map(|(kmer, _)| kmer.to_vec()).collect())
        };
        KmerProfile { keys, counts }
    }

    /// Calls `f(count_a, count_b, hamming)` for every pair of distinct k-mers.
    pub(crate) fn for_each_pair(&self, other: &KmerProfile, mut f: impl FnMut(u64, u64, usize)) {
        match (&self.keys, &other.keys) {
            (Keys::Packed { keys: a, bits, low }, Keys::Packed { keys: b, .. }) => {
                for (ka, &ca) in a.iter().zip(&self.counts) {
                    for (kb, &cb) in b.iter().zip(&other.counts) {
                        let diff = ka ^ kb;
                        let mut folded = diff;
                        for s in 1..*bits {
                            folded |= diff >> s;
                        }
                        f(ca, cb, (folded & low).count_ones() as usize);
                    }
                }
            }
            (Keys::Bytes(a), Keys::Bytes(b)) => {
                for (ka, &ca) in a.iter().zip(&self.counts) {
                    for (kb, &cb) in b.iter().zip(&other.counts) {
                        let dist = ka.iter().zip(kb).filter(|(x, y)| x != y).count();
                        f(ca, cb, dist);
                    }
                }
            }
            _ => unreachable!("profiles built with different k or alphabet"),
        }
    }
}

//! Seeded covariate-shift corpora. A planted motif (any of its variants, up
//! to a few substitutions) decides the label in every domain; the background
//! composition and the variant usage shift between source and target.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TskError};
use crate::seqdata::{write_fasta, write_labels, Alphabet, Label, Sequence};

/// How one domain draws its sequences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainMix {
    /// Probability that a positive uses background `a`.
    pub positive_a: f64,
    /// Same for negatives.
    pub negative_a: f64,
    /// Relative usage of each motif variant by positives; empty means uniform.
    #[serde(default)]
    pub motif_weights: Vec<f64>,
}

impl DomainMix {
    fn variant_weights(&self, n: usize) -> Vec<f64> {
        if self.motif_weights.is_empty() {
            vec![1.0; n]
        } else {
            self.motif_weights.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftProfile {
    pub alphabet: String,
    pub length: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    /// Negatives per positive in every split.
    pub ratio: usize,
    /// Motif variants; a sequence is positive when it holds any of them.
    pub motifs: Vec<String>,
    /// Planted copies carry up to this many substitutions; negatives are
    /// rejected if any window is this close to the motif.
    pub max_mutations: usize,
    /// Symbol frequencies of the two backgrounds, in alphabet order.
    pub background_a: Vec<f64>,
    pub background_b: Vec<f64>,
    pub source: DomainMix,
    pub target: DomainMix,
}

impl Default for ShiftProfile {
    fn default() -> Self {
        ShiftProfile {
            alphabet: "dna".into(),
            length: 60,
            n_train: 200,
            n_validation: 100,
            n_test: 200,
            ratio: 1,
            motifs: vec!["TGACGTCA".into(), "CCAATCGG".into()],
            max_mutations: 1,
            background_a: vec![0.15, 0.35, 0.35, 0.15],
            background_b: vec![0.35, 0.15, 0.15, 0.35],
            source: DomainMix {
                positive_a: 0.8,
                negative_a: 0.8,
                motif_weights: vec![0.9, 0.1],
            },
            target: DomainMix {
                positive_a: 0.2,
                negative_a: 0.2,
                motif_weights: vec![0.1, 0.9],
            },
        }
    }
}

impl ShiftProfile {
    /// Same profile with the target drawn exactly like the source.
    pub fn zero_shift(&self) -> Self {
        ShiftProfile {
            target: self.source.clone(),
            ..self.clone()
        }
    }

    pub fn with_ratio(&self, ratio: usize) -> Self {
        ShiftProfile {
            ratio,
            ..self.clone()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| TskError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("profile serializes")
    }

    pub fn validate(&self) -> Result<Alphabet> {
        let alphabet = Alphabet::from_name(&self.alphabet)?;
        if self.motifs.is_empty() {
            return Err(TskError::Config("at least one motif is required".into()));
        }
        for (i, m) in self.motifs.iter().enumerate() {
            let motif = alphabet.encode(&format!("motif {i}"), m)?;
            if motif.len() > self.length {
                return Err(TskError::Config(format!(
                    "motif length {} exceeds sequence length {}",
                    motif.len(),
                    self.length
                )));
            }
            if self.max_mutations >= motif.len() {
                return Err(TskError::Config("max_mutations must be smaller than the motif length".into()));
            }
        }
        if !(1..=3).contains(&self.ratio) {
            return Err(TskError::Config(format!("ratio must be 1, 2 or 3 (got {})", self.ratio)));
        }
        for (name, bg) in [("background_a", &self.background_a), ("background_b", &self.background_b)] {
            if bg.len() != alphabet.size() {
                return Err(TskError::Config(format!(
                    "{name} has {} entries for a {}-letter alphabet",
                    bg.len(),
                    alphabet.size()
                )));
            }
            if bg.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) || bg.iter().sum::<f64>() <= 0.0 {
                return Err(TskError::Config(format!("{name} must be non-negative with positive mass")));
            }
        }
        for mix in [&self.source, &self.target] {
            for p in [mix.positive_a, mix.negative_a] {
                if !(0.0..=1.0).contains(&p) {
                    return Err(TskError::Config(format!("mixture probability {p} outside [0, 1]")));
                }
            }
            let w = mix.variant_weights(self.motifs.len());
            if w.len() != self.motifs.len() || WeightedIndex::new(&w).is_err() {
                return Err(TskError::Config(format!(
                    "motif_weights needs {} non-negative entries with positive sum",
                    self.motifs.len()
                )));
            }
        }
        for (name, n) in [("n_train", self.n_train), ("n_validation", self.n_validation), ("n_test", self.n_test)] {
            if n < self.ratio + 1 {
                return Err(TskError::Config(format!("{name} = {n} leaves a class empty at ratio 1:{}", self.ratio)));
            }
        }
        Ok(alphabet)
    }
}

#[derive(Clone, Debug)]
pub struct SplitData {
    pub sequences: Vec<Sequence>,
    pub labels: Vec<Label>,
}

#[derive(Clone, Debug)]
pub struct Corpus {
    pub alphabet: Alphabet,
    pub train: SplitData,
    pub validation: SplitData,
    pub test: SplitData,
}

struct Sampler {
    alphabet: Alphabet,
    motifs: Vec<Vec<u8>>,
    max_mutations: usize,
    length: usize,
    d: usize,
    bg_a: WeightedIndex<f64>,
    bg_b: WeightedIndex<f64>,
}

impl Sampler {
    fn background(&self, rng: &mut ChaCha8Rng, use_a: bool) -> Vec<u8> {
        let dist = if use_a { &self.bg_a } else { &self.bg_b };
        (0..self.length).map(|_| dist.sample(rng) as u8).collect()
    }

    /// A motif variant with exactly `n` substitutions at distinct positions.
    fn mutated(&self, rng: &mut ChaCha8Rng, variant: usize, n: usize) -> Vec<u8> {
        let mut site = self.motifs[variant].clone();
        for pos in rand::seq::index::sample(rng, site.len(), n) {
            let shift = rng.gen_range(1..self.d) as u8;
            site[pos] = (site[pos] + shift) % self.d as u8;
        }
        site
    }

    fn place(&self, rng: &mut ChaCha8Rng, codes: &mut [u8], site: &[u8]) {
        let start = rng.gen_range(0..=self.length - site.len());
        codes[start..start + site.len()].copy_from_slice(site);
    }

    fn contains_motif(&self, codes: &[u8]) -> bool {
        self.motifs.iter().any(|motif| {
            codes.windows(motif.len()).any(|w| {
                w.iter().zip(motif).filter(|(a, b)| a != b).count() <= self.max_mutations
            })
        })
    }

    fn positive(&self, rng: &mut ChaCha8Rng, use_a: bool, variants: &WeightedIndex<f64>) -> Vec<u8> {
        let mut codes = self.background(rng, use_a);
        let variant = variants.sample(rng);
        let n_mut = rng.gen_range(0..=self.max_mutations);
        let site = self.mutated(rng, variant, n_mut);
        self.place(rng, &mut codes, &site);
        codes
    }

    fn negative(&self, rng: &mut ChaCha8Rng, use_a: bool) -> Vec<u8> {
        loop {
            let codes = self.background(rng, use_a);
            if !self.contains_motif(&codes) {
                return codes;
            }
        }
    }

    fn split(&self, rng: &mut ChaCha8Rng, prefix: &str, n: usize, ratio: usize, mix: &DomainMix) -> SplitData {
        let variants = WeightedIndex::new(mix.variant_weights(self.motifs.len())).expect("validated weights");
        let n_pos = n / (ratio + 1);
        let n_neg = n_pos * ratio;
        let mut labels: Vec<Label> = std::iter::repeat_n(Label::Positive, n_pos)
            .chain(std::iter::repeat_n(Label::Negative, n_neg))
            .collect();
        labels.shuffle(rng);
        let sequences = labels
            .iter()
            .enumerate()
            .map(|(i, &label)| {
                let codes = match label {
                    Label::Positive => {
                        let use_a = rng.gen_bool(mix.positive_a);
                        self.positive(rng, use_a, &variants)
                    }
                    Label::Negative => {
                        let use_a = rng.gen_bool(mix.negative_a);
                        self.negative(rng, use_a)
                    }
                };
                Sequence::new(format!("{prefix}{i:04}"), codes, &self.alphabet).expect("codes are drawn from the alphabet")
            })
            .collect();
        SplitData { sequences, labels }
    }
}

/// Draws all three splits; identical seeds give identical corpora.
pub fn generate(profile: &ShiftProfile, seed: u64) -> Result<Corpus> {
    let alphabet = profile.validate()?;
    let motifs = profile
        .motifs
        .iter()
        .map(|m| alphabet.encode("motif", m).map(|s| s.codes().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let weights = |bg: &[f64]| WeightedIndex::new(bg.to_vec()).map_err(|e| TskError::Config(e.to_string()));
    let sampler = Sampler {
        alphabet: alphabet.clone(),
        motifs,
        max_mutations: profile.max_mutations,
        length: profile.length,
        d: alphabet.size(),
        bg_a: weights(&profile.background_a)?,
        bg_b: weights(&profile.background_b)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = sampler.split(&mut rng, "src", profile.n_train, profile.ratio, &profile.source);
    let validation = sampler.split(&mut rng, "val", profile.n_validation, profile.ratio, &profile.target);
    let test = sampler.split(&mut rng, "tst", profile.n_test, profile.ratio, &profile.target);
    Ok(Corpus {
        alphabet,
        train,
        validation,
        test,
    })
}

/// Paths written by [`write_corpus`].
#[derive(Clone, Debug)]
pub struct CorpusFiles {
    pub train_fasta: PathBuf,
    pub train_labels: PathBuf,
    pub validation_fasta: PathBuf,
    pub validation_labels: PathBuf,
    pub test_fasta: PathBuf,
    pub test_labels: PathBuf,
}

impl CorpusFiles {
    pub fn in_dir(dir: &Path) -> Self {
        CorpusFiles {
            train_fasta: dir.join("source_train.fa"),
            train_labels: dir.join("source_train.labels"),
            validation_fasta: dir.join("target_validation.fa"),
            validation_labels: dir.join("target_validation.labels"),
            test_fasta: dir.join("target_test.fa"),
            test_labels: dir.join("target_test.labels"),
        }
    }
}

fn write_split(split: &SplitData, alphabet: &Alphabet, fasta: &Path, labels: &Path) -> Result<()> {
    let f = fs::File::create(fasta).map_err(|e| TskError::io(fasta, e))?;
    write_fasta(BufWriter::new(f), &split.sequences, alphabet).map_err(|e| TskError::io(fasta, e))?;
    let f = fs::File::create(labels).map_err(|e| TskError::io(labels, e))?;
    write_labels(BufWriter::new(f), &split.sequences, &split.labels).map_err(|e| TskError::io(labels, e))
}

pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<CorpusFiles> {
    fs::create_dir_all(dir).map_err(|e| TskError::io(dir, e))?;
    let files = CorpusFiles::in_dir(dir);
    write_split(&corpus.train, &corpus.alphabet, &files.train_fasta, &files.train_labels)?;
    write_split(&corpus.validation, &corpus.alphabet, &files.validation_fasta, &files.validation_labels)?;
    write_split(&corpus.test, &corpus.alphabet, &files.test_fasta, &files.test_labels)?;
    Ok(files)
}

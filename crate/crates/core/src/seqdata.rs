//! Alphabets, index-encoded sequences and labeled datasets read from FASTA
//! plus two-column label files.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TskError};

/// An ordered set of symbols. Index lookup is a bijection onto `0..size()`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alphabet {
    name: String,
    symbols: Vec<u8>,
    lookup: [Option<u8>; 256],
}

impl Alphabet {
    /// Builds an alphabet from uppercase ASCII symbols. Symbols must be
    /// distinct and there must be at least one and at most 255 of them.
    pub fn new(name: impl Into<String>, symbols: &str) -> Result<Self> {
        let name = name.into();
        let bytes: Vec<u8> = symbols.bytes().map(|b| b.to_ascii_uppercase()).collect();
        if bytes.is_empty() || bytes.len() > 255 {
            return Err(TskError::Config(format!(
                "alphabet '{name}' must have between 1 and 255 symbols"
            )));
        }
        let mut lookup = [None; 256];
        for (i, &b) in bytes.iter().enumerate() {
            if !b.is_ascii_graphic() || lookup[b as usize].is_some() {
                return Err(TskError::Config(format!(
                    "alphabet '{name}' has a duplicate or non-printable symbol '{}'",
                    b as char
                )));
            }
            lookup[b as usize] = Some(i as u8);
        }
        Ok(Alphabet {
            name,
            symbols: bytes,
            lookup,
        })
    }

    pub fn dna() -> Self {
        Self::new("dna", "ACGT").expect("built-in alphabet")
    }

    pub fn protein() -> Self {
        Self::new("protein", "ACDEFGHIKLMNPQRSTVWY").expect("built-in alphabet")
    }

    /// Resolves one of the built-in alphabets by name (`dna` or `protein`).
    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "dna" => Ok(Self::dna()),
            "protein" => Ok(Self::protein()),
            other => Err(TskError::UnknownStrategy {
                kind: "alphabet",
                name: other.to_string(),
                available: vec!["dna".into(), "protein".into()],
            }),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Dictionary size `d`.
    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }

    /// Code of a character; lowercase input is folded to uppercase.
    pub fn encode_char(&self, c: u8) -> Option<u8> {
        self.lookup[c.to_ascii_uppercase() as usize]
    }

    pub fn symbol(&self, code: u8) -> Option<char> {
        self.symbols.get(code as usize).map(|&b| b as char)
    }

    /// Encodes a whole string, failing on the first foreign character.
    pub fn encode(&self, id: &str, text: &str) -> Result<Sequence> {
        let mut codes = Vec::with_capacity(text.len());
        for c in text.bytes() {
            match self.encode_char(c) {
                Some(code) => codes.push(code),
                None => {
                    return Err(TskError::InvalidSymbol {
                        record: id.to_string(),
                        line: 1,
                        found: c as char,
                        alphabet: self.name.clone(),
                    })
                }
            }
        }
        Sequence::new(id, codes, self)
    }

    pub fn decode(&self, codes: &[u8]) -> String {
        codes
            .iter()
            .map(|&c| self.symbol(c).unwrap_or('?'))
            .collect()
    }
}

/// An index-encoded sequence. Every code is below the size of the alphabet
/// it was built with, and the sequence is never empty.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Sequence {
    id: String,
    codes: Vec<u8>,
}

impl Sequence {
    pub fn new(id: impl Into<String>, codes: Vec<u8>, alphabet: &Alphabet) -> Result<Self> {
        let id = id.into();
        if codes.is_empty() {
            return Err(TskError::EmptyRecord(id));
        }
        if let Some(&bad) = codes.iter().find(|&&c| c as usize >= alphabet.size()) {
            return Err(TskError::InvalidParams(format!(
                "sequence '{id}' has code {bad}, outside alphabet '{}' of size {}",
                alphabet.name(),
                alphabet.size()
            )));
        }
        Ok(Sequence { id, codes })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn decode(&self, alphabet: &Alphabet) -> String {
        alphabet.decode(&self.codes)
    }
}

/// Binary class label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn value(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn parse(text: &str) -> Option<Label> {
        match text {
            "+1" | "1" => Some(Label::Positive),
            "-1" | "\u{2212}1" => Some(Label::Negative),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Positive => f.write_str("+1"),
            Label::Negative => f.write_str("-1"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

/// Sequences paired with labels; both lists always have the same length.
#[derive(Clone, Debug)]
pub struct LabeledDataset {
    sequences: Vec<Sequence>,
    labels: Vec<Label>,
    domain: Domain,
}

impl LabeledDataset {
    pub fn new(sequences: Vec<Sequence>, labels: Vec<Label>, domain: Domain) -> Result<Self> {
        if sequences.len() != labels.len() {
            return Err(TskError::DimensionMismatch(format!(
                "{} sequences but {} labels",
                sequences.len(),
                labels.len()
            )));
        }
        Ok(LabeledDataset {
            sequences,
            labels,
            domain,
        })
    }

    pub fn sequences(&self) -> &[Sequence] {
        &self.sequences
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn label_values(&self) -> Vec<f64> {
        self.labels.iter().map(|l| l.value()).collect()
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

/// Parses FASTA text. Headers start with '>', the id runs up to the first
/// whitespace, and sequence lines are case-insensitive.
pub fn parse_fasta(text: &str, alphabet: &Alphabet) -> Result<Vec<Sequence>> {
    struct Pending {
        id: String,
        codes: Vec<u8>,
    }

    let mut out: Vec<Sequence> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut current: Option<Pending> = None;

    let finish = |rec: Pending, out: &mut Vec<Sequence>| -> Result<()> {
        if rec.codes.is_empty() {
            return Err(TskError::EmptyRecord(rec.id));
        }
        out.push(Sequence {
            id: rec.id,
            codes: rec.codes,
        });
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if let Some(header) = line.strip_prefix('>') {
            if let Some(rec) = current.take() {
                finish(rec, &mut out)?;
            }
            let id = header.split_whitespace().next().unwrap_or("");
            if id.is_empty() {
                return Err(TskError::Format {
                    line: line_no,
                    message: "FASTA header without an id".into(),
                });
            }
            if !seen.insert(id.to_string()) {
                return Err(TskError::DuplicateId(id.to_string()));
            }
            current = Some(Pending {
                id: id.to_string(),
                codes: Vec::new(),
            });
            continue;
        }
        let body = line.trim();
        if body.is_empty() {
            continue;
        }
        let rec = current.as_mut().ok_or_else(|| TskError::Format {
            line: line_no,
            message: "sequence data before the first '>' header".into(),
        })?;
        for c in body.bytes() {
            if c.is_ascii_whitespace() {
                continue;
            }
            match alphabet.encode_char(c) {
                Some(code) => rec.codes.push(code),
                None => {
                    return Err(TskError::InvalidSymbol {
                        record: rec.id.clone(),
                        line: line_no,
                        found: c as char,
                        alphabet: alphabet.name().to_string(),
                    })
                }
            }
        }
    }
    if let Some(rec) = current.take() {
        finish(rec, &mut out)?;
    }
    Ok(out)
}

pub fn read_fasta(path: &Path, alphabet: &Alphabet) -> Result<Vec<Sequence>> {
    let text = fs::read_to_string(path).map_err(|e| TskError::io(path, e))?;
    parse_fasta(&text, alphabet)
}

/// Parses a whitespace-separated `id label` file; '#' lines are comments.
pub fn parse_labels(text: &str) -> Result<Vec<(String, Label)>> {
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split_whitespace();
        let (Some(id), Some(value), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(TskError::Format {
                line: idx + 1,
                message: format!("expected two columns (id, label), got '{line}'"),
            });
        };
        let label = Label::parse(value).ok_or_else(|| TskError::InvalidLabel {
            id: id.to_string(),
            value: value.to_string(),
        })?;
        if !seen.insert(id.to_string()) {
            return Err(TskError::DuplicateId(id.to_string()));
        }
        rows.push((id.to_string(), label));
    }
    Ok(rows)
}

/// Joins a FASTA file with its label file. Output order follows the FASTA.
pub fn load_labeled_dataset(
    seq_path: &Path,
    label_path: &Path,
    alphabet: &Alphabet,
    domain: Domain,
) -> Result<LabeledDataset> {
    let sequences = read_fasta(seq_path, alphabet)?;
    let text = fs::read_to_string(label_path).map_err(|e| TskError::io(label_path, e))?;
    let labels = parse_labels(&text)?;
    join_labels(sequences, labels, domain)
}

pub fn join_labels(
    sequences: Vec<Sequence>,
    labels: Vec<(String, Label)>,
    domain: Domain,
) -> Result<LabeledDataset> {
    let seq_ids: HashSet<&str> = sequences.iter().map(|s| s.id()).collect();
    let by_id: HashMap<&str, Label> = labels.iter().map(|(id, l)| (id.as_str(), *l)).collect();

    let missing_labels: Vec<String> = sequences
        .iter()
        .filter(|s| !by_id.contains_key(s.id()))
        .map(|s| s.id().to_string())
        .collect();
    let missing_sequences: Vec<String> = labels
        .iter()
        .filter(|(id, _)| !seq_ids.contains(id.as_str()))
        .map(|(id, _)| id.clone())
        .collect();
    if !missing_labels.is_empty() || !missing_sequences.is_empty() {
        return Err(TskError::UnmatchedIds {
            missing_labels,
            missing_sequences,
        });
    }
    let ordered: Vec<Label> = sequences.iter().map(|s| by_id[s.id()]).collect();
    LabeledDataset::new(sequences, ordered, domain)
}

/// Writes sequences as FASTA with one sequence line per record.
pub fn write_fasta<W: Write>(mut w: W, seqs: &[Sequence], alphabet: &Alphabet) -> std::io::Result<()> {
    for s in seqs {
        writeln!(w, ">{}", s.id())?;
        writeln!(w, "{}", s.decode(alphabet))?;
    }
    Ok(())
}

pub fn write_labels<W: Write>(mut w: W, seqs: &[Sequence], labels: &[Label]) -> std::io::Result<()> {
    for (s, l) in seqs.iter().zip(labels) {
        writeln!(w, "{}\t{}", s.id(), l)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn builtin_alphabets() {
        assert_eq!(Alphabet::dna().size(), 4);
        assert_eq!(Alphabet::protein().size(), 20);
        assert_eq!(Alphabet::dna().encode_char(b'g'), Some(2));
        assert!(Alphabet::new("bad", "AA").is_err());
    }

    #[test]
    fn parses_single_record() {
        let seqs = parse_fasta(">s1\nACGT", &Alphabet::dna()).unwrap();
        assert_eq!(seqs.len(), 1);
        assert_eq!(seqs[0].codes(), &[0, 1, 2, 3]);
        assert_eq!(seqs[0].len(), 4);
    }

    #[test]
    fn parses_two_records_with_header_text() {
        let seqs = parse_fasta(">s1 some description\nAC\ngt\n>s2\nTT\n", &Alphabet::dna()).unwrap();
        assert_eq!(seqs.len(), 2);
        assert_eq!(seqs[0].id(), "s1");
        assert_eq!(seqs[0].len(), 4);
        assert_eq!(seqs[1].len(), 2);
    }

    #[test]
    fn rejects_foreign_symbol() {
        let err = parse_fasta(">s1\nACXG", &Alphabet::dna()).unwrap_err();
        match err {
            TskError::InvalidSymbol {
                record, line, found, ..
            } => {
                assert_eq!(record, "s1");
                assert_eq!(line, 2);
                assert_eq!(found, 'X');
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_ambiguity_code() {
        assert!(parse_fasta(">s1\nACNG", &Alphabet::dna()).is_err());
    }

    #[test]
    fn rejects_empty_record_and_duplicates() {
        assert!(matches!(
            parse_fasta(">s1\n>s2\nAC", &Alphabet::dna()),
            Err(TskError::EmptyRecord(id)) if id == "s1"
        ));
        assert!(matches!(
            parse_fasta(">s1\nAC\n>s1\nGG", &Alphabet::dna()),
            Err(TskError::DuplicateId(id)) if id == "s1"
        ));
        assert!(matches!(
            parse_fasta("ACGT\n>s1\nAC", &Alphabet::dna()),
            Err(TskError::Format { line: 1, .. })
        ));
    }

    fn seqs_ab() -> Vec<Sequence> {
        parse_fasta(">a\nACGT\n>b\nGGCC\n", &Alphabet::dna()).unwrap()
    }

    #[test]
    fn joins_labels_in_fasta_order() {
        let labels = parse_labels("# comment\nb -1\na +1\n").unwrap();
        let ds = join_labels(seqs_ab(), labels, Domain::Source).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.labels(), &[Label::Positive, Label::Negative]);
    }

    #[test]
    fn reports_missing_label() {
        let labels = parse_labels("a +1\n").unwrap();
        match join_labels(seqs_ab(), labels, Domain::Source).unwrap_err() {
            TskError::UnmatchedIds {
                missing_labels,
                missing_sequences,
            } => {
                assert_eq!(missing_labels, vec!["b".to_string()]);
                assert!(missing_sequences.is_empty());
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_invalid_label_value() {
        assert!(matches!(
            parse_labels("a 0\n"),
            Err(TskError::InvalidLabel { value, .. }) if value == "0"
        ));
    }

    #[test]
    fn loads_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let fa = dir.path().join("x.fa");
        let lb = dir.path().join("x.labels");
        fs::write(&fa, ">a\nACGT\n>b\nTTTT\n").unwrap();
        fs::write(&lb, "a\t+1\nb\t-1\n").unwrap();
        let ds = load_labeled_dataset(&fa, &lb, &Alphabet::dna(), Domain::Target).unwrap();
        assert_eq!(ds.label_values(), vec![1.0, -1.0]);
        assert_eq!(ds.domain(), Domain::Target);
    }

    proptest! {
        #[test]
        fn fasta_round_trip(records in prop::collection::vec("[ACGTacgt]{1,40}", 1..8)) {
            let alphabet = Alphabet::dna();
            let text: String = records
                .iter()
                .enumerate()
                .map(|(i, s)| format!(">r{i}\n{s}\n"))
                .collect();
            let seqs = parse_fasta(&text, &alphabet).unwrap();
            prop_assert_eq!(seqs.len(), records.len());
            for (i, (seq, rec)) in seqs.iter().zip(&records).enumerate() {
                prop_assert_eq!(seq.id(), format!("r{i}"));
                prop_assert_eq!(seq.decode(&alphabet), rec.to_ascii_uppercase());
            }
        }
    }
}

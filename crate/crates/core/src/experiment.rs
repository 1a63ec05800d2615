//! Config-driven runs: ingest, kernels, weights, training, scoring, reports.
//!
//! Output layout under `out`:
//! `kernels/{gram,kappa}.txt`, `weights/beta.txt`, `models/model.txt`,
//! `reports/{target_scores.tsv,eval.tsv,summary.json,manifest.json}` and, when a
//! grid is searched, `reports/{grid.tsv,grid.json}`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TskError};
use crate::eval::{grid_search, EvalReport, GridSearchRecord, ParamGrid};
use crate::kmm::{KmmConfig, StopReason};
use crate::pipeline::{evaluation_kernel, kernel_stage, weight_stage, Stage, TskSettings};
use crate::seqdata::{load_labeled_dataset, read_fasta, Alphabet, Domain, LabeledDataset, Sequence};
use crate::stringkernel::DEFAULT_ENGINE;
use crate::wsvm::{train_weighted_svm, SvmModel, SvmTrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub source_fasta: PathBuf,
    pub source_labels: PathBuf,
    /// Unlabeled target sequences for KMM; the test FASTA is used when absent.
    #[serde(default)]
    pub target_fasta: Option<PathBuf>,
    #[serde(default)]
    pub validation_fasta: Option<PathBuf>,
    #[serde(default)]
    pub validation_labels: Option<PathBuf>,
    pub test_fasta: PathBuf,
    #[serde(default)]
    pub test_labels: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    pub k: Vec<usize>,
    pub m: Vec<usize>,
    pub normalize: bool,
    pub engine: String,
}

impl Default for KernelSection {
    fn default() -> Self {
        KernelSection {
            k: vec![8],
            m: vec![1],
            normalize: true,
            engine: DEFAULT_ENGINE.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmSection {
    pub c: Vec<f64>,
    pub tolerance: f64,
    pub max_passes: usize,
}

impl Default for SvmSection {
    fn default() -> Self {
        let d = SvmTrainConfig::default();
        SvmSection {
            c: vec![d.c],
            tolerance: d.tolerance,
            max_passes: d.max_passes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KmmSection {
    pub enabled: bool,
    pub bound: f64,
    pub epsilon: Option<f64>,
    pub max_iterations: usize,
    pub step_size: Option<f64>,
    pub tolerance: f64,
}

impl Default for KmmSection {
    fn default() -> Self {
        let d = KmmConfig::default();
        KmmSection {
            enabled: true,
            bound: d.bound,
            epsilon: d.epsilon,
            max_iterations: d.max_iterations,
            step_size: d.step_size,
            tolerance: d.tolerance,
        }
    }
}

impl KmmSection {
    pub fn solver(&self) -> KmmConfig {
        KmmConfig {
            bound: self.bound,
            epsilon: self.epsilon,
            max_iterations: self.max_iterations,
            step_size: self.step_size,
            tolerance: self.tolerance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_alphabet")]
    pub alphabet: String,
    #[serde(default)]
    pub seed: u64,
    pub out: PathBuf,
    pub data: DataPaths,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub svm: SvmSection,
    #[serde(default)]
    pub kmm: KmmSection,
}

fn default_alphabet() -> String {
    "dna".into()
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| TskError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Reads a config; relative paths inside it are taken from the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| TskError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out);
        let d = &mut self.data;
        for p in [&mut d.source_fasta, &mut d.source_labels, &mut d.test_fasta] {
            fix(p);
        }
        for p in [&mut d.target_fasta, &mut d.validation_fasta, &mut d.validation_labels, &mut d.test_labels]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    pub fn grid(&self) -> ParamGrid {
        ParamGrid {
            k: self.kernel.k.clone(),
            m: self.kernel.m.clone(),
            c: self.svm.c.clone(),
        }
    }

    pub fn settings(&self) -> TskSettings {
        TskSettings {
            engine: self.kernel.engine.clone(),
            normalize: self.kernel.normalize,
            weighting: if self.kmm.enabled { "kmm" } else { "uniform" }.into(),
            kmm: self.kmm.solver(),
            svm: SvmTrainConfig {
                c: self.svm.c.first().copied().unwrap_or(1.0),
                tolerance: self.svm.tolerance,
                max_passes: self.svm.max_passes,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        Alphabet::from_name(&self.alphabet)?;
        self.grid().validate()?;
        self.settings().validate()?;
        let d = &self.data;
        if d.validation_fasta.is_some() != d.validation_labels.is_some() {
            return Err(TskError::Config("validation_fasta and validation_labels go together".into()));
        }
        Ok(())
    }
}

/// A failure tagged with the stage it happened in.
#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub error: TskError,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} stage failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|error| StageError { stage, error })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Manifest {
    pub alphabet: String,
    pub seed: u64,
    pub engine: String,
    pub weighting: String,
    /// `"target_fasta"` or `"test_fasta"`.
    pub kmm_target: String,
    pub n_source: usize,
    pub n_target: usize,
    pub n_test: usize,
    pub k: usize,
    pub m: usize,
    pub c: f64,
    pub normalize: bool,
    pub grid_searched: bool,
    pub kmm_stop: String,
    pub kmm_iterations: usize,
    pub svm_converged: bool,
    pub svm_iterations: usize,
    pub svm_worst_violation: f64,
    pub test_auc: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub scores: Vec<(String, f64)>,
    pub report: Option<EvalReport>,
    pub grid: Option<GridSearchRecord>,
}

struct Inputs {
    alphabet: Alphabet,
    source: LabeledDataset,
    target: Vec<Sequence>,
    target_is_test: bool,
    validation: Option<LabeledDataset>,
    test: Vec<Sequence>,
    test_labeled: Option<LabeledDataset>,
}

fn ingest(cfg: &ExperimentConfig) -> Result<Inputs> {
    let alphabet = Alphabet::from_name(&cfg.alphabet)?;
    let d = &cfg.data;
    let source = load_labeled_dataset(&d.source_fasta, &d.source_labels, &alphabet, Domain::Source)?;
    let (test, test_labeled) = match &d.test_labels {
        Some(labels) => {
            let ds = load_labeled_dataset(&d.test_fasta, labels, &alphabet, Domain::Target)?;
            (ds.sequences().to_vec(), Some(ds))
        }
        None => (read_fasta(&d.test_fasta, &alphabet)?, None),
    };
    let (target, target_is_test) = match &d.target_fasta {
        Some(p) => (read_fasta(p, &alphabet)?, false),
        None => (test.clone(), true),
    };
    let validation = match (&d.validation_fasta, &d.validation_labels) {
        (Some(f), Some(l)) => Some(load_labeled_dataset(f, l, &alphabet, Domain::Target)?),
        _ => None,
    };
    Ok(Inputs {
        alphabet,
        source,
        target,
        target_is_test,
        validation,
        test,
        test_labeled,
    })
}

const SUBDIRS: [&str; 4] = ["kernels", "weights", "models", "reports"];

fn prepare_out(out: &Path, force: bool) -> Result<()> {
    let existing: Vec<&str> = SUBDIRS.iter().copied().filter(|s| out.join(s).exists()).collect();
    if !existing.is_empty() {
        if !force {
            return Err(TskError::Config(format!(
                "{} already holds run artifacts ({}); pass --force to overwrite",
                out.display(),
                existing.join(", ")
            )));
        }
        for s in existing {
            let p = out.join(s);
            fs::remove_dir_all(&p).map_err(|e| TskError::io(&p, e))?;
        }
    }
    for s in SUBDIRS {
        let p = out.join(s);
        fs::create_dir_all(&p).map_err(|e| TskError::io(&p, e))?;
    }
    Ok(())
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| TskError::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| TskError::io(path, e))
}

/// Writes scores at full round-trip precision so the AUC can be recomputed exactly.
pub fn write_scores<W: Write>(mut w: W, scores: &[(String, f64)]) -> std::io::Result<()> {
    writeln!(w, "id\tscore")?;
    for (id, s) in scores {
        writeln!(w, "{id}\t{s:?}")?;
    }
    Ok(())
}

pub fn parse_scores(text: &str) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if (i == 0 && line.starts_with("id\t")) || line.trim().is_empty() {
            continue;
        }
        let (id, v) = line.split_once('\t').ok_or_else(|| TskError::Format {
            line: i + 1,
            message: "expected 'id<TAB>score'".into(),
        })?;
        let v: f64 = v.trim().parse().map_err(|_| TskError::Format {
            line: i + 1,
            message: format!("bad score '{v}'"),
        })?;
        out.push((id.to_string(), v));
    }
    Ok(out)
}

/// Runs the full pipeline. `force` allows replacing artifacts of an earlier run.
pub fn run(cfg: &ExperimentConfig, force: bool) -> std::result::Result<RunOutcome, StageError> {
    cfg.validate().at(Stage::Ingest)?;
    let inputs = ingest(cfg).at(Stage::Ingest)?;
    let settings = cfg.settings();
    let grid = cfg.grid().sorted();
    let alphabet = &inputs.alphabet;

    let (k, m, c, record) = if grid.len() == 1 {
        (grid.k[0], grid.m[0], grid.c[0], None)
    } else {
        let validation = inputs.validation.as_ref().ok_or_else(|| StageError {
            stage: Stage::Ingest,
            error: TskError::Config("a grid with more than one cell needs validation data".into()),
        })?;
        let rec = grid_search(
            &inputs.source,
            validation,
            &inputs.target,
            &grid,
            cfg.kmm.enabled,
            alphabet,
            &settings,
        )
        .at(Stage::Evaluate)?;
        let sel = rec.selected_row();
        (sel.k, sel.m, sel.c, Some(rec))
    };

    prepare_out(&cfg.out, force).at(Stage::Write)?;
    let dir = |sub: &str, name: &str| cfg.out.join(sub).join(name);
    if let Some(rec) = &record {
        write_file(&dir("reports", "grid.tsv"), |w| rec.write_tsv(w)).at(Stage::Write)?;
        write_file(&dir("reports", "grid.json"), |w| writeln!(w, "{}", rec.summary_json())).at(Stage::Write)?;
    }

    let params = settings.kernel_params(k, m).at(Stage::Kernel)?;
    let kernels = kernel_stage(inputs.source.sequences(), &inputs.target, &params, alphabet, &settings).at(Stage::Kernel)?;
    write_file(&dir("kernels", "gram.txt"), |w| kernels.gram.write_text(w)).at(Stage::Write)?;
    write_file(&dir("kernels", "kappa.txt"), |w| kernels.kappa.write_text(w)).at(Stage::Write)?;

    let beta = weight_stage(&kernels, &settings).at(Stage::Weights)?;
    write_file(&dir("weights", "beta.txt"), |w| beta.write_text(w)).at(Stage::Write)?;

    let svm = SvmTrainConfig { c, ..settings.svm.clone() };
    let solution = train_weighted_svm(&kernels.gram, inputs.source.labels(), &beta, &svm).at(Stage::Train)?;
    let model = SvmModel::from_solution(&solution, inputs.source.sequences(), alphabet)
        .and_then(|m| m.with_engine(&settings.engine))
        .at(Stage::Train)?;
    write_file(&dir("models", "model.txt"), |w| model.write_text(w)).at(Stage::Write)?;

    let cross = evaluation_kernel(inputs.source.sequences(), &inputs.test, &params, alphabet, &settings).at(Stage::Predict)?;
    let values = solution.decision_values(&cross).at(Stage::Predict)?;
    let scores: Vec<(String, f64)> = inputs.test.iter().map(|s| s.id().to_string()).zip(values.iter().copied()).collect();
    write_file(&dir("reports", "target_scores.tsv"), |w| write_scores(w, &scores)).at(Stage::Write)?;

    let report = match &inputs.test_labeled {
        Some(ds) => {
            let ids = ds.sequences().iter().map(|s| s.id().to_string()).collect();
            let rep = EvalReport::new(ids, values.clone(), ds.labels()).at(Stage::Evaluate)?;
            write_file(&dir("reports", "eval.tsv"), |w| rep.write_tsv(w)).at(Stage::Write)?;
            write_file(&dir("reports", "summary.json"), |w| writeln!(w, "{}", rep.summary_json())).at(Stage::Write)?;
            Some(rep)
        }
        None => None,
    };

    let manifest = Manifest {
        alphabet: alphabet.name().to_string(),
        seed: cfg.seed,
        engine: settings.engine.clone(),
        weighting: settings.weighting.clone(),
        kmm_target: if inputs.target_is_test { "test_fasta" } else { "target_fasta" }.into(),
        n_source: inputs.source.len(),
        n_target: inputs.target.len(),
        n_test: inputs.test.len(),
        k,
        m,
        c,
        normalize: params.normalize,
        grid_searched: record.is_some(),
        kmm_stop: match beta.stop {
            StopReason::Converged => "converged",
            StopReason::MaxIterations => "max_iterations",
            StopReason::Fixed => "fixed",
        }
        .into(),
        kmm_iterations: beta.iterations,
        svm_converged: solution.converged,
        svm_iterations: solution.iterations,
        svm_worst_violation: solution.worst_violation,
        test_auc: report.as_ref().map(|r| r.auc),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&dir("reports", "manifest.json"), |w| writeln!(w, "{json}")).at(Stage::Write)?;

    Ok(RunOutcome {
        manifest,
        scores,
        report,
        grid: record,
    })
}

/// Grid search only; writes `reports/grid.tsv` and `reports/grid.json`.
pub fn run_grid(cfg: &ExperimentConfig, force: bool) -> std::result::Result<GridSearchRecord, StageError> {
    cfg.validate().at(Stage::Ingest)?;
    let inputs = ingest(cfg).at(Stage::Ingest)?;
    let validation = inputs.validation.as_ref().ok_or_else(|| StageError {
        stage: Stage::Ingest,
        error: TskError::Config("grid search needs validation_fasta and validation_labels".into()),
    })?;
    let rec = grid_search(
        &inputs.source,
        validation,
        &inputs.target,
        &cfg.grid(),
        cfg.kmm.enabled,
        &inputs.alphabet,
        &cfg.settings(),
    )
    .at(Stage::Evaluate)?;
    let reports = cfg.out.join("reports");
    let tsv = reports.join("grid.tsv");
    if tsv.exists() && !force {
        return Err(StageError {
            stage: Stage::Write,
            error: TskError::Config(format!("{} exists; pass --force to overwrite", tsv.display())),
        });
    }
    fs::create_dir_all(&reports).map_err(|e| TskError::io(&reports, e)).at(Stage::Write)?;
    write_file(&tsv, |w| rec.write_tsv(w)).at(Stage::Write)?;
    write_file(&reports.join("grid.json"), |w| writeln!(w, "{}", rec.summary_json())).at(Stage::Write)?;
    Ok(rec)
}

/// Config for a corpus written by [`crate::synth::write_corpus`].
pub fn config_for_corpus(files: &crate::synth::CorpusFiles, alphabet: &str, seed: u64, out: PathBuf) -> ExperimentConfig {
    ExperimentConfig {
        alphabet: alphabet.into(),
        seed,
        out,
        data: DataPaths {
            source_fasta: files.train_fasta.clone(),
            source_labels: files.train_labels.clone(),
            target_fasta: None,
            validation_fasta: Some(files.validation_fasta.clone()),
            validation_labels: Some(files.validation_labels.clone()),
            test_fasta: files.test_fasta.clone(),
            test_labels: Some(files.test_labels.clone()),
        },
        kernel: KernelSection::default(),
        svm: SvmSection::default(),
        kmm: KmmSection::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml(
            r#"
out = "run"
[data]
source_fasta = "s.fa"
source_labels = "s.labels"
test_fasta = "t.fa"
[kernel]
k = [5, 6]
"#,
        )
        .unwrap();
        assert_eq!(cfg.alphabet, "dna");
        assert_eq!(cfg.kernel.m, vec![1]);
        assert!(cfg.kmm.enabled);
        assert_eq!(cfg.grid().len(), 2);
        assert!(ExperimentConfig::from_toml("out = 'x'\nbogus = 1\n[data]\nsource_fasta='a'\nsource_labels='b'\ntest_fasta='c'\n").is_err());
    }

    #[test]
    fn scores_round_trip_exactly() {
        let scores = vec![("a".to_string(), 0.1 + 0.2), ("b".to_string(), -1e-300), ("c".to_string(), 7.0)];
        let mut buf = Vec::new();
        write_scores(&mut buf, &scores).unwrap();
        assert_eq!(parse_scores(std::str::from_utf8(&buf).unwrap()).unwrap(), scores);
    }
}

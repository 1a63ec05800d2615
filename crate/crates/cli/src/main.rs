use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tsk_core::eval::{conservation_score, ConservationInput};
use tsk_core::experiment::{self, ExperimentConfig, StageError};
use tsk_core::kmm::BetaWeights;
use tsk_core::pipeline::Stage;
use tsk_core::synth::{self, ShiftProfile};
use tsk_core::wsvm::SvmModel;
use tsk_core::{Alphabet, GramMatrix, KappaVector, TskError};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(name = "tsk", version, about = "Transfer string kernel experiments")]
struct Cli {
    /// Experiment config (run-tsk, run-sk, grid) or shift profile (synth).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replace artifacts left by an earlier run.
    #[arg(long, global = true)]
    force: bool,
    /// Worker threads for kernel computation.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Kernels, KMM weights, weighted SVM, target scores and reports.
    RunTsk,
    /// Same pipeline with all weights fixed at 1.
    RunSk,
    /// Grid search over (k, m, C) on the validation set.
    Grid,
    /// Generate a seeded covariate-shift corpus.
    Synth {
        /// Negatives per positive; overrides the profile.
        #[arg(long)]
        ratio: Option<usize>,
        /// Draw the target exactly like the source.
        #[arg(long)]
        zero_shift: bool,
    },
    /// Conservation score of a per-position score file.
    Conserve { scores: PathBuf },
    /// Pretty-print an artifact.
    Inspect { path: PathBuf },
}

struct Failure {
    code: u8,
    message: String,
}

fn exit_code(e: &TskError) -> u8 {
    match e {
        TskError::Config(_) | TskError::InvalidParams(_) | TskError::UnknownStrategy { .. } => EXIT_USAGE,
        TskError::Solver { .. } => EXIT_SOLVER,
        _ => EXIT_DATA,
    }
}

impl From<TskError> for Failure {
    fn from(e: TskError) -> Self {
        Failure {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

impl From<StageError> for Failure {
    fn from(e: StageError) -> Self {
        // a missing or unreadable input is a data problem even if the path came from the config
        let code = match (&e.error, e.stage) {
            (TskError::Io { .. }, Stage::Ingest) => EXIT_DATA,
            (err, _) => exit_code(err),
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let path = cli.config.as_ref().ok_or_else(|| Failure {
        code: EXIT_USAGE,
        message: "--config is required".into(),
    })?;
    let mut cfg = ExperimentConfig::load(path).map_err(|e| match e {
        TskError::Io { .. } => Failure {
            code: EXIT_USAGE,
            message: e.to_string(),
        },
        other => other.into(),
    })?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn run_pipeline(cli: &Cli, use_kmm: bool) -> Result<(), Failure> {
    let mut cfg = load_config(cli)?;
    if !use_kmm {
        cfg.kmm.enabled = false;
    }
    let outcome = experiment::run(&cfg, cli.force)?;
    let m = &outcome.manifest;
    println!("selected k={} m={} C={}", m.k, m.m, m.c);
    println!("weights: {} ({}, {} iterations)", m.weighting, m.kmm_stop, m.kmm_iterations);
    match &outcome.report {
        Some(r) => println!("test AUC: {:.6} ({} positive, {} negative)", r.auc, r.n_pos, r.n_neg),
        None => println!("scored {} target sequences (no test labels given)", outcome.scores.len()),
    }
    println!("artifacts in {}", cfg.out.display());
    if m.kmm_stop == "max_iterations" {
        return Err(Failure {
            code: EXIT_SOLVER,
            message: format!("weights stage: KMM hit the iteration limit ({})", m.kmm_iterations),
        });
    }
    if !m.svm_converged {
        return Err(Failure {
            code: EXIT_SOLVER,
            message: format!(
                "train stage: SMO did not converge (worst KKT violation {:.3e})",
                m.svm_worst_violation
            ),
        });
    }
    Ok(())
}

fn run_grid(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    let rec = experiment::run_grid(&cfg, cli.force)?;
    rec.write_tsv(io::stdout().lock()).map_err(|e| TskError::Io {
        path: "<stdout>".into(),
        source: e,
    })?;
    let sel = rec.selected_row();
    println!("selected k={} m={} C={} auc={:.6}", sel.k, sel.m, sel.c, sel.auc.unwrap_or(f64::NAN));
    Ok(())
}

fn run_synth(cli: &Cli, ratio: Option<usize>, zero_shift: bool) -> Result<(), Failure> {
    let mut profile = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure {
                code: EXIT_USAGE,
                message: format!("{}: {e}", p.display()),
            })?;
            ShiftProfile::from_toml(&text)?
        }
        None => ShiftProfile::default(),
    };
    if let Some(r) = ratio {
        profile.ratio = r;
    }
    if zero_shift {
        profile = profile.zero_shift();
    }
    let out = cli.out.clone().ok_or_else(|| Failure {
        code: EXIT_USAGE,
        message: "--out is required for synth".into(),
    })?;
    let seed = cli.seed.unwrap_or(0);
    if synth::CorpusFiles::in_dir(&out).train_fasta.exists() && !cli.force {
        return Err(Failure {
            code: EXIT_USAGE,
            message: format!("{} already holds a corpus; pass --force to overwrite", out.display()),
        });
    }
    let corpus = synth::generate(&profile, seed)?;
    synth::write_corpus(&corpus, &out)?;

    // config with paths relative to the corpus directory, so the directory can be moved
    let rel = synth::CorpusFiles::in_dir(Path::new(""));
    let mut cfg = experiment::config_for_corpus(&rel, &profile.alphabet, seed, PathBuf::from("run"));
    cfg.kernel.k = vec![6];
    write_text(&out.join("experiment.toml"), &cfg.to_toml())?;
    write_text(&out.join("profile.toml"), &profile.to_toml())?;
    println!(
        "wrote {} train / {} validation / {} test sequences to {}",
        corpus.train.sequences.len(),
        corpus.validation.sequences.len(),
        corpus.test.sequences.len(),
        out.display()
    );
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| {
        TskError::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| {
        TskError::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn run_conserve(cli: &Cli, scores: &Path) -> Result<(), Failure> {
    let input = ConservationInput::parse(&read_text(scores)?)?;
    let summary = input.summary()?;
    let cs = conservation_score(&input)?;
    println!("CS\t{cs:.6}");
    println!(
        "PosScore\t{:.6}\nNegScore\t{:.6}\nC_n\t{}\nC_t\t{}",
        summary.pos_score, summary.neg_score, summary.c_n, summary.c_t
    );
    if let Some(out) = &cli.out {
        fs::create_dir_all(out).map_err(|e| TskError::Io {
            path: out.clone(),
            source: e,
        })?;
        let record = format!(
            "{{\"cs\":{cs:?},\"pos_score\":{:?},\"neg_score\":{:?},\"c_n\":{},\"c_t\":{}}}\n",
            summary.pos_score, summary.neg_score, summary.c_n, summary.c_t
        );
        write_text(&out.join("conservation.json"), &record)?;
    }
    Ok(())
}

fn run_inspect(path: &Path) -> Result<(), Failure> {
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or_default();
    let open = || {
        fs::File::open(path).map(BufReader::new).map_err(|e| TskError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    };
    let mut out = io::stdout().lock();
    let io_err = |e: io::Error| TskError::Io {
        path: "<stdout>".into(),
        source: e,
    };
    if name.starts_with("gram") {
        let g = GramMatrix::read_text(open()?)?;
        let p = g.params();
        let diag: Vec<f64> = (0..g.dim()).map(|i| g.get(i, i)).collect();
        writeln!(out, "Gram matrix {n}×{n}, k={} m={} normalized={}", p.k, p.m, p.normalize, n = g.dim()).map_err(io_err)?;
        writeln!(out, "diagonal range [{:.6}, {:.6}]", min(&diag), max(&diag)).map_err(io_err)?;
        for i in 0..g.dim().min(8) {
            let row: Vec<String> = g.row(i).iter().take(8).map(|v| format!("{v:9.4}")).collect();
            writeln!(out, "{}", row.join(" ")).map_err(io_err)?;
        }
    } else if name.starts_with("kappa") {
        let k = KappaVector::read_text(open()?)?;
        let p = k.params();
        writeln!(out, "kappa, {} source samples, k={} m={} normalized={}", k.len(), p.k, p.m, p.normalize).map_err(io_err)?;
        writeln!(out, "range [{:.6}, {:.6}]", min(k.values()), max(k.values())).map_err(io_err)?;
    } else if name.starts_with("beta") {
        let b = BetaWeights::read_text(open()?)?;
        writeln!(out, "{} weights, B={} epsilon={:.6}", b.len(), b.bound, b.epsilon).map_err(io_err)?;
        writeln!(out, "sum {:.6}, range [{:.6}, {:.6}]", b.sum(), min(&b.values), max(&b.values)).map_err(io_err)?;
        writeln!(out, "objective {:.6e} after {} iterations", b.objective, b.iterations).map_err(io_err)?;
    } else if name.starts_with("model") {
        let text = read_text(path)?;
        let model = ["dna", "protein"]
            .iter()
            .find_map(|a| SvmModel::read_text(text.as_bytes(), &Alphabet::from_name(a).unwrap()).ok())
            .ok_or_else(|| Failure {
                code: EXIT_DATA,
                message: format!("{}: not a DNA or protein model file", path.display()),
            })?;
        let p = model.params();
        writeln!(out, "SVM model, k={} m={} normalized={}", p.k, p.m, p.normalize).map_err(io_err)?;
        writeln!(out, "C={} b={:.6} support vectors={}", model.c(), model.bias(), model.n_support()).map_err(io_err)?;
    } else if name.ends_with(".tsv") {
        let text = read_text(path)?;
        let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split('\t').collect()).collect();
        let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
        let widths: Vec<usize> = (0..cols)
            .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.len()).max().unwrap_or(0))
            .collect();
        for r in rows {
            let cells: Vec<String> = r.iter().enumerate().map(|(c, s)| format!("{s:<w$}", w = widths[c])).collect();
            writeln!(out, "{}", cells.join("  ").trim_end()).map_err(io_err)?;
        }
    } else {
        out.write_all(read_text(path)?.as_bytes()).map_err(io_err)?;
    }
    Ok(())
}

fn min(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: --jobs: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let result = match &cli.command {
        Command::RunTsk => run_pipeline(&cli, true),
        Command::RunSk => run_pipeline(&cli, false),
        Command::Grid => run_grid(&cli),
        Command::Synth { ratio, zero_shift } => run_synth(&cli, *ratio, *zero_shift),
        Command::Conserve { scores } => run_conserve(&cli, scores),
        Command::Inspect { path } => run_inspect(path),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

use proptest::prelude::*;

use tsk_core::eval::{conservation_from_summary, grid_search, roc_auc, ConservationSummary, ParamGrid};
use tsk_core::experiment::{self, config_for_corpus, parse_scores};
use tsk_core::kmm::BetaWeights;
use tsk_core::pipeline::{evaluation_kernel, fit_transfer, TskSettings};
use tsk_core::stringkernel::gram_matrix;
use tsk_core::synth::{generate, write_corpus, Corpus, ShiftProfile};
use tsk_core::wsvm::{train_weighted_svm, SvmTrainConfig};
use tsk_core::{Domain, LabeledDataset, TskError};

fn small_corpus(seed: u64) -> Corpus {
    let profile = ShiftProfile {
        n_train: 60,
        n_validation: 40,
        n_test: 40,
        length: 40,
        ..ShiftProfile::default()
    };
    generate(&profile, seed).unwrap()
}

fn dataset(split: &tsk_core::synth::SplitData, domain: Domain) -> LabeledDataset {
    LabeledDataset::new(split.sequences.clone(), split.labels.clone(), domain).unwrap()
}

#[test]
fn grid_without_kmm_is_plain_sk_per_cell() {
    let corpus = small_corpus(1);
    let train = dataset(&corpus.train, Domain::Source);
    let val = dataset(&corpus.validation, Domain::Target);
    let grid = ParamGrid {
        k: vec![4, 5],
        m: vec![1],
        c: vec![0.1, 1.0],
    };
    let settings = TskSettings::default();
    let rec = grid_search(&train, &val, &corpus.test.sequences, &grid, false, &corpus.alphabet, &settings).unwrap();
    assert_eq!(rec.rows.len(), 4);
    for row in &rec.rows {
        let p = settings.kernel_params(row.k, row.m).unwrap();
        let k = gram_matrix(train.sequences(), &p, &corpus.alphabet).unwrap();
        let sol = train_weighted_svm(&k, train.labels(), &BetaWeights::uniform(train.len()), &SvmTrainConfig::with_c(row.c)).unwrap();
        let cross = evaluation_kernel(train.sequences(), val.sequences(), &p, &corpus.alphabet, &settings).unwrap();
        let auc = roc_auc(&sol.decision_values(&cross).unwrap(), val.labels()).unwrap();
        assert_eq!(row.auc, Some(auc), "cell k={} m={} C={}", row.k, row.m, row.c);
    }
    let best = rec.rows.iter().filter_map(|r| r.auc).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(rec.selected_row().auc, Some(best));
}

#[test]
fn failed_cells_are_recorded_and_skipped() {
    let corpus = small_corpus(2);
    let train = dataset(&corpus.train, Domain::Source);
    let val = dataset(&corpus.validation, Domain::Target);
    // k = 60 is longer than every sequence
    let grid = ParamGrid {
        k: vec![4, 60],
        m: vec![1],
        c: vec![1.0],
    };
    let rec = grid_search(&train, &val, &corpus.test.sequences, &grid, true, &corpus.alphabet, &TskSettings::default()).unwrap();
    assert_eq!(rec.selected_row().k, 4);
    let failed = rec.rows.iter().find(|r| r.k == 60).unwrap();
    assert!(failed.auc.is_none());
    assert!(failed.error.as_deref().unwrap().contains("shorter than k"));

    let all_bad = ParamGrid::single(60, 1, 1.0);
    let err = grid_search(&train, &val, &corpus.test.sequences, &all_bad, true, &corpus.alphabet, &TskSettings::default()).unwrap_err();
    assert!(matches!(err, TskError::GridFailed(_)));
}

#[test]
fn single_cell_grid_selects_it() {
    let corpus = small_corpus(3);
    let train = dataset(&corpus.train, Domain::Source);
    let val = dataset(&corpus.validation, Domain::Target);
    let rec = grid_search(&train, &val, &corpus.test.sequences, &ParamGrid::single(5, 1, 1.0), true, &corpus.alphabet, &TskSettings::default()).unwrap();
    assert_eq!(rec.rows.len(), 1);
    assert_eq!(rec.selected, 0);
}

#[test]
fn self_transfer_matches_within_context_training() {
    let corpus = small_corpus(4);
    let train = dataset(&corpus.train, Domain::Source);
    let settings = TskSettings::default();
    let p = settings.kernel_params(5, 1).unwrap();
    let fit = fit_transfer(&train, train.sequences(), &p, 1.0, &corpus.alphabet, &settings).unwrap();
    let worst = fit.beta.values.iter().map(|b| (b - 1.0).abs()).fold(0.0, f64::max);
    assert!(worst <= 0.1, "max |β − 1| = {worst}");

    let test = dataset(&corpus.test, Domain::Target);
    let cross = evaluation_kernel(train.sequences(), test.sequences(), &p, &corpus.alphabet, &settings).unwrap();
    let tsk = roc_auc(&fit.solution.decision_values(&cross).unwrap(), test.labels()).unwrap();
    let sk_fit = fit_transfer(&train, train.sequences(), &p, 1.0, &corpus.alphabet, &settings.baseline()).unwrap();
    let sk = roc_auc(&sk_fit.solution.decision_values(&cross).unwrap(), test.labels()).unwrap();
    assert!((tsk - sk).abs() <= 0.02, "{tsk} vs {sk}");
}

#[test]
fn run_scores_match_manual_composition_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(5);
    let files = write_corpus(&corpus, dir.path()).unwrap();
    let mut cfg = config_for_corpus(&files, "dna", 5, dir.path().join("run"));
    cfg.kernel.k = vec![5];
    cfg.kmm.enabled = false;
    let outcome = experiment::run(&cfg, false).unwrap();

    let train = dataset(&corpus.train, Domain::Source);
    let settings = TskSettings::default().baseline();
    let p = settings.kernel_params(5, 1).unwrap();
    let k = gram_matrix(train.sequences(), &p, &corpus.alphabet).unwrap();
    let sol = train_weighted_svm(&k, train.labels(), &BetaWeights::uniform(train.len()), &SvmTrainConfig::default()).unwrap();
    let cross = evaluation_kernel(train.sequences(), &corpus.test.sequences, &p, &corpus.alphabet, &settings).unwrap();
    let manual = sol.decision_values(&cross).unwrap();
    let ours: Vec<f64> = outcome.scores.iter().map(|(_, s)| *s).collect();
    assert_eq!(ours, manual);

    let text = std::fs::read_to_string(dir.path().join("run/reports/target_scores.tsv")).unwrap();
    let emitted: Vec<f64> = parse_scores(&text).unwrap().into_iter().map(|(_, s)| s).collect();
    assert_eq!(roc_auc(&emitted, &corpus.test.labels).unwrap(), outcome.report.unwrap().auc);

    assert!(matches!(experiment::run(&cfg, false), Err(e) if matches!(e.error, TskError::Config(_))));
    assert!(experiment::run(&cfg, true).is_ok());
}

fn summary() -> impl Strategy<Value = ConservationSummary> {
    (1e-3..50.0f64, 1e-3..50.0f64, 1usize..200, 0usize..200).prop_map(|(pos, neg, c_n, extra)| ConservationSummary {
        pos_score: pos,
        neg_score: -neg,
        c_n,
        c_t: c_n + extra,
    })
}

proptest! {
    #[test]
    fn conservation_score_monotone(s in summary(), up in 1.01..4.0f64) {
        let base = conservation_from_summary(&s).unwrap();
        let more_pos = conservation_from_summary(&ConservationSummary { pos_score: s.pos_score * up, ..s }).unwrap();
        let more_neg = conservation_from_summary(&ConservationSummary { neg_score: s.neg_score * up, ..s }).unwrap();
        prop_assert!(more_pos > base);
        prop_assert!(more_neg < base);
        if s.c_n < s.c_t {
            let more_cn = conservation_from_summary(&ConservationSummary { c_n: s.c_n + 1, ..s }).unwrap();
            prop_assert!(more_cn < base);
        }
    }
}

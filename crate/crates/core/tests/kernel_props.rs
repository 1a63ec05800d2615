mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tsk_core::stringkernel::{
    cross_kernel, gram_matrix, gram_matrix_with, kappa_vector, kernel_engines, mismatch_kernel, spectrum_kernel,
    BruteForceMismatch, KernelEngine, MismatchEngine, SpectrumEngine,
};
use tsk_core::{Alphabet, KernelParams, Sequence};

fn alphabet(protein: bool) -> Alphabet {
    if protein {
        Alphabet::protein()
    } else {
        Alphabet::dna()
    }
}

/// (protein?, k, m, x codes, y codes) with |x|, |y| ≥ k.
fn pair_case(max_k: usize, max_len: usize) -> impl Strategy<Value = (bool, usize, usize, Vec<u8>, Vec<u8>)> {
    (any::<bool>(), 1..=max_k).prop_flat_map(move |(protein, k)| {
        let d: u8 = if protein { 20 } else { 4 };
        (
            Just(protein),
            Just(k),
            0..=k.min(3),
            prop::collection::vec(0..d, k..=max_len),
            prop::collection::vec(0..d, k..=max_len),
        )
    })
}

fn seqs(protein: bool, x: Vec<u8>, y: Vec<u8>) -> (Alphabet, Sequence, Sequence) {
    let a = alphabet(protein);
    let sx = Sequence::new("x", x, &a).unwrap();
    let sy = Sequence::new("y", y, &a).unwrap();
    (a, sx, sy)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn engines_match_feature_map((protein, k, m, x, y) in pair_case(3, 14)) {
        let (a, sx, sy) = seqs(protein, x.clone(), y.clone());
        let p = KernelParams::new(k, m, false).unwrap();
        let want = common::feature_map_kernel(&x, &y, k, m, a.size());
        prop_assert_eq!(MismatchEngine.raw(&sx, &sy, &p, &a).unwrap(), want);
        prop_assert_eq!(BruteForceMismatch.raw(&sx, &sy, &p, &a).unwrap(), want);
    }

    #[test]
    fn optimized_matches_brute_force((protein, k, m, x, y) in pair_case(8, 30)) {
        let (a, sx, sy) = seqs(protein, x, y);
        let p = KernelParams::new(k, m, false).unwrap();
        prop_assert_eq!(
            MismatchEngine.raw(&sx, &sy, &p, &a).unwrap(),
            BruteForceMismatch.raw(&sx, &sy, &p, &a).unwrap()
        );
    }

    #[test]
    fn zero_mismatch_is_spectrum((protein, k, _m, x, y) in pair_case(8, 30)) {
        let (a, sx, sy) = seqs(protein, x, y);
        let p = KernelParams::new(k, 0, false).unwrap();
        let mm = MismatchEngine.raw(&sx, &sy, &p, &a).unwrap();
        prop_assert_eq!(mm, SpectrumEngine.raw(&sx, &sy, &p, &a).unwrap());
        prop_assert_eq!(mm as f64, spectrum_kernel(&sx, &sy, k).unwrap());
    }

    #[test]
    fn raw_kernel_grows_with_m((protein, k, _m, x, y) in pair_case(6, 24)) {
        let (a, sx, sy) = seqs(protein, x, y);
        let mut prev = 0u128;
        for m in 0..=k.min(3) {
            let v = MismatchEngine.raw(&sx, &sy, &KernelParams::new(k, m, false).unwrap(), &a).unwrap();
            prop_assert!(v >= prev, "m = {}: {} < {}", m, v, prev);
            prev = v;
        }
    }

    #[test]
    fn symmetric_and_cauchy_schwarz((protein, k, m, x, y) in pair_case(6, 24)) {
        let (a, sx, sy) = seqs(protein, x, y);
        let raw = KernelParams::new(k, m, false).unwrap();
        let kxy = MismatchEngine.raw(&sx, &sy, &raw, &a).unwrap();
        prop_assert_eq!(kxy, MismatchEngine.raw(&sy, &sx, &raw, &a).unwrap());
        let kxx = MismatchEngine.raw(&sx, &sx, &raw, &a).unwrap();
        let kyy = MismatchEngine.raw(&sy, &sy, &raw, &a).unwrap();
        prop_assert!(kxy * kxy <= kxx * kyy);
        let norm = mismatch_kernel(&sx, &sy, &KernelParams::new(k, m, true).unwrap(), &a).unwrap();
        prop_assert!((0.0..=1.0 + 1e-15).contains(&norm));
        prop_assert_eq!(mismatch_kernel(&sx, &sx, &KernelParams::new(k, m, true).unwrap(), &a).unwrap(), 1.0);
    }
}

#[test]
fn gram_is_psd_with_unit_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for trial in 0..12 {
        let a = alphabet(trial % 3 == 2);
        let data = common::random_set(&mut rng, &a, "s", 10 + trial, 8..=30);
        for normalize in [false, true] {
            let p = KernelParams::new(3 + trial % 3, 1 + trial % 2, normalize).unwrap();
            let g = gram_matrix(&data, &p, &a).unwrap();
            let (lo, hi) = common::eigen_range(&g);
            assert!(lo >= -1e-8 * hi, "trial {trial}: λ_min = {lo}, λ_max = {hi}");
            if normalize {
                for i in 0..g.dim() {
                    assert!((g.get(i, i) - 1.0).abs() <= 1e-12);
                }
            }
        }
    }
}

#[test]
fn engines_agree_on_gram_blocks() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = Alphabet::dna();
    let data = common::random_set(&mut rng, &a, "g", 9, 6..=20);
    let target = common::random_set(&mut rng, &a, "t", 5, 6..=20);
    let p = KernelParams::new(4, 2, true).unwrap();
    let reg = kernel_engines();
    let fast = gram_matrix_with(reg.get("mismatch").unwrap().as_ref(), &data, &p, &a).unwrap();
    let brute = gram_matrix_with(reg.get("mismatch-brute").unwrap().as_ref(), &data, &p, &a).unwrap();
    assert_eq!(fast.to_rows(), brute.to_rows());

    let cross = cross_kernel(&data, &data, &p, &a).unwrap();
    for i in 0..data.len() {
        assert_eq!(cross.row(i), fast.row(i));
    }

    // κ_i = (n_s / n_t) Σ_j K(x_i, t_j)
    let kappa = kappa_vector(&data, &target, &p, &a).unwrap();
    let block = cross_kernel(&data, &target, &p, &a).unwrap();
    for i in 0..data.len() {
        let want = data.len() as f64 / target.len() as f64 * block.row(i).iter().sum::<f64>();
        assert!((kappa.values()[i] - want).abs() <= 1e-12 * want.abs().max(1.0));
    }
}

#[test]
fn spectrum_engine_rejects_mismatches() {
    let a = Alphabet::dna();
    let x = a.encode("x", "ACGTACGT").unwrap();
    assert!(SpectrumEngine.raw(&x, &x, &KernelParams::new(3, 1, false).unwrap(), &a).is_err());
}

#[test]
fn short_sequences_rejected_by_name() {
    let a = Alphabet::dna();
    let data = vec![a.encode("long", "ACGTACGT").unwrap(), a.encode("tiny", "ACG").unwrap()];
    let err = gram_matrix(&data, &KernelParams::new(5, 1, true).unwrap(), &a).unwrap_err();
    assert!(err.to_string().contains("tiny"), "{err}");
}

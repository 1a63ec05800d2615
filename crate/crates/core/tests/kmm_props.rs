mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tsk_core::kmm::{solve_beta, KmmConfig};
use tsk_core::stringkernel::{gram_matrix, kappa_vector};
use tsk_core::{Alphabet, KernelParams, Sequence};

fn biased_sequence(rng: &mut ChaCha8Rng, alphabet: &Alphabet, id: &str, len: usize, rich: &[u8]) -> Sequence {
    let codes = (0..len)
        .map(|_| {
            if rng.gen_bool(0.8) {
                rich[rng.gen_range(0..rich.len())]
            } else {
                rng.gen_range(0..4)
            }
        })
        .collect();
    Sequence::new(id, codes, alphabet).unwrap()
}

#[test]
fn feasible_and_monotone_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let a = Alphabet::dna();
    for trial in 0..15 {
        let n = rng.gen_range(3..25);
        let source = common::random_set(&mut rng, &a, "s", n, 10..=30);
        let n_t = rng.gen_range(2..20);
        let target = common::random_set(&mut rng, &a, "t", n_t, 10..=30);
        let p = KernelParams::new(3, 1, trial % 2 == 0).unwrap();
        let k = gram_matrix(&source, &p, &a).unwrap();
        let kappa = kappa_vector(&source, &target, &p, &a).unwrap();
        let config = KmmConfig {
            bound: [2.0, 10.0, 1000.0][trial % 3],
            ..KmmConfig::default()
        };
        let beta = solve_beta(&k, &kappa, &config).unwrap();
        let nf = n as f64;
        let eps = config.epsilon_for(n);
        assert!(beta.values.iter().all(|&b| (0.0..=config.bound).contains(&b)), "trial {trial}");
        assert!((beta.sum() - nf).abs() <= nf * eps + 1e-6 * nf, "trial {trial}: sum {}", beta.sum());
        for w in beta.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()), "trial {trial}: trace rose {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn not_worse_than_lattice() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let a = Alphabet::dna();
    for trial in 0..6 {
        let n = 2 + trial % 3;
        let source = common::random_set(&mut rng, &a, "s", n, 8..=16);
        let target = common::random_set(&mut rng, &a, "t", 3, 8..=16);
        let p = KernelParams::new(3, 1, true).unwrap();
        let k = gram_matrix(&source, &p, &a).unwrap();
        let kappa = kappa_vector(&source, &target, &p, &a).unwrap();
        let config = KmmConfig {
            bound: 2.0,
            ..KmmConfig::default()
        };
        let beta = solve_beta(&k, &kappa, &config).unwrap();
        let nf = n as f64;
        let eps = config.epsilon_for(n);
        let (best, _) = common::kmm_lattice_best(&common::to_matrix(&k), kappa.values(), 2.0, nf * (1.0 - eps), nf * (1.0 + eps), 0.1).unwrap();
        let got = common::kmm_objective(&common::to_matrix(&k), kappa.values(), &beta.values);
        assert!((got - beta.objective).abs() <= 1e-12, "reported objective differs from recomputed");
        assert!(got <= best + 1e-3, "trial {trial}: {got} vs lattice {best}");
    }
}

#[test]
fn target_cluster_gets_more_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = Alphabet::dna();
    let at: Vec<Sequence> = (0..15).map(|i| biased_sequence(&mut rng, &a, &format!("at{i}"), 40, &[0, 3])).collect();
    let gc: Vec<Sequence> = (0..15).map(|i| biased_sequence(&mut rng, &a, &format!("gc{i}"), 40, &[1, 2])).collect();
    let target: Vec<Sequence> = (0..20).map(|i| biased_sequence(&mut rng, &a, &format!("t{i}"), 40, &[0, 3])).collect();
    let source: Vec<Sequence> = at.iter().chain(&gc).cloned().collect();
    let p = KernelParams::new(4, 1, true).unwrap();
    let k = gram_matrix(&source, &p, &a).unwrap();
    let kappa = kappa_vector(&source, &target, &p, &a).unwrap();
    let beta = solve_beta(&k, &kappa, &KmmConfig::default()).unwrap();
    let mean = |r: std::ops::Range<usize>| beta.values[r.clone()].iter().sum::<f64>() / r.len() as f64;
    assert!(mean(0..15) > mean(15..30), "{} vs {}", mean(0..15), mean(15..30));
}

#[test]
fn identical_domains_give_unit_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = Alphabet::dna();
    let data = common::random_set(&mut rng, &a, "s", 40, 20..=40);
    let p = KernelParams::new(4, 1, true).unwrap();
    let k = gram_matrix(&data, &p, &a).unwrap();
    let kappa = kappa_vector(&data, &data, &p, &a).unwrap();
    let beta = solve_beta(&k, &kappa, &KmmConfig::default()).unwrap();
    let worst = beta.values.iter().map(|b| (b - 1.0).abs()).fold(0.0, f64::max);
    assert!(worst <= 0.1, "max |β − 1| = {worst}");
}

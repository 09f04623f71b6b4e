use ecokg_core::effects::AggregatedSample;
use ecokg_core::predict::{
    categorical_accuracy, grid_search, r_squared, run_protocol, svr_fit, DualSolver, FeatureSource,
    GapMode, GridSpec, ProtocolConfig, ProtocolInput, SolverSettings, SvrModel, SvrParams,
};
use ecokg_core::seeded_rng;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    (-gamma * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()).exp()
}

fn sine_data(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = seeded_rng(seed, 0);
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![rng.random_range(0.0..std::f64::consts::TAU)])
        .collect();
    let y = x.iter().map(|v| v[0].sin()).collect();
    (x, y)
}

fn tight(c: f64, gamma: f64) -> SvrParams {
    SvrParams {
        tolerance: 1e-9,
        ..SvrParams::new(c, gamma)
    }
}

fn probe_predictions(model: &SvrModel) -> Vec<f64> {
    (0..50).map(|i| model.predict(&[i as f64 * 0.13])).collect()
}

#[test]
fn svr_learns_a_sine() {
    let (x, y) = sine_data(200, 1);
    let model = svr_fit(&x, &y, SvrParams::new(10.0, 1.0)).unwrap();
    let grid: Vec<Vec<f64>> = (0..100)
        .map(|i| vec![i as f64 * std::f64::consts::TAU / 99.0])
        .collect();
    let truth: Vec<f64> = grid.iter().map(|v| v[0].sin()).collect();
    let pred: Vec<f64> = grid.iter().map(|v| model.predict(v)).collect();
    let r2 = r_squared(&truth, &pred).unwrap();
    assert!(r2 > 0.95, "R2 {r2}");
}

#[test]
fn duplicating_the_data_with_half_the_box_gives_the_same_function() {
    let (x, y) = sine_data(60, 2);
    let single = svr_fit(&x, &y, tight(4.0, 0.8)).unwrap();
    let x2: Vec<Vec<f64>> = x.iter().chain(&x).cloned().collect();
    let y2: Vec<f64> = y.iter().chain(&y).copied().collect();
    let doubled = svr_fit(&x2, &y2, tight(2.0, 0.8)).unwrap();
    for (a, b) in probe_predictions(&single)
        .iter()
        .zip(probe_predictions(&doubled))
    {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn training_order_does_not_change_predictions() {
    let (x, y) = sine_data(80, 3);
    let base = probe_predictions(&svr_fit(&x, &y, tight(3.0, 0.5)).unwrap());
    for seed in 0..3 {
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.shuffle(&mut seeded_rng(seed, 9));
        let xp: Vec<Vec<f64>> = idx.iter().map(|&i| x[i].clone()).collect();
        let yp: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        for (a, b) in base.iter().zip(probe_predictions(
            &svr_fit(&xp, &yp, tight(3.0, 0.5)).unwrap(),
        )) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dual_solution_satisfies_kkt_conditions(seed in any::<u64>(), log_c in -1.0..2.0f64, log_g in -1.5..0.5f64) {
        let (c, gamma) = (10f64.powf(log_c), 10f64.powf(log_g));
        let mut rng = seeded_rng(seed, 0);
        let n = 40;
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
        let y: Vec<f64> = x.iter().map(|v| v[0] * v[1] + rng.random_range(-0.3..0.3)).collect();
        let kernel: Vec<f64> = (0..n * n).map(|k| rbf(&x[k / n], &x[k % n], gamma)).collect();
        let eps = 0.1;
        let sol = DualSolver::new(&kernel, &y, eps).unwrap().solve(c, 1e-3, 1_000_000).unwrap();
        prop_assert!(sol.gap <= 1e-3);
        prop_assert!(DualSolver::kkt_gap(&kernel, &y, &sol.coef, c, eps) <= 1e-3 + 1e-9);
        prop_assert!(sol.coef.iter().sum::<f64>().abs() < 1e-9);
        prop_assert!(sol.coef.iter().all(|b| b.abs() <= c + 1e-12));
        // margin conditions from the primal optimality system
        let tol = 1e-3;
        for i in 0..n {
            let f: f64 = (0..n).map(|j| kernel[i * n + j] * sol.coef[j]).sum::<f64>() + sol.bias;
            let r = y[i] - f;
            let b = sol.coef[i];
            if b == 0.0 {
                prop_assert!(r.abs() <= eps + tol, "i {} r {}", i, r);
            } else if b.abs() < c {
                prop_assert!((r.abs() - eps).abs() <= tol && r.signum() == b.signum(), "i {} r {} b {}", i, r, b);
            } else {
                prop_assert!(r.abs() >= eps - tol && r.signum() == b.signum(), "i {} r {} b {}", i, r, b);
            }
        }
    }

    #[test]
    fn r_squared_is_affine_invariant(y in prop::collection::vec(-5.0..5.0f64, 3..30), noise in prop::collection::vec(-1.0..1.0f64, 30),
                                     a in prop_oneof![-10.0..-0.1f64, 0.1..10.0f64], b in -10.0..10.0f64) {
        let spread = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - y.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assume!(spread > 1e-3);
        let y_hat: Vec<f64> = y.iter().zip(&noise).map(|(v, e)| v + e).collect();
        let base = r_squared(&y, &y_hat).unwrap();
        let ty: Vec<f64> = y.iter().map(|v| a * v + b).collect();
        let th: Vec<f64> = y_hat.iter().map(|v| a * v + b).collect();
        prop_assert!((base - r_squared(&ty, &th).unwrap()).abs() < 1e-9);
        prop_assert!(base <= 1.0);
        prop_assert_eq!(r_squared(&y, &y).unwrap(), 1.0);
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        prop_assert!(r_squared(&y, &vec![mean; y.len()]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn categorical_accuracy_bounds(pairs in prop::collection::vec((0..4u8, 0..4u8), 1..50)) {
        let (t, p): (Vec<u8>, Vec<u8>) = pairs.iter().copied().unzip();
        let ca = categorical_accuracy(&t, &p).unwrap();
        prop_assert!((0.25..=1.0).contains(&ca));
        prop_assert_eq!(ca == 1.0, t == p);
        let expected = pairs.iter().map(|&(a, b)| 1.0 / (1.0 + (a as f64 - b as f64).abs())).sum::<f64>() / pairs.len() as f64;
        prop_assert!((ca - expected).abs() < 1e-12);
    }
}

#[test]
fn grid_search_matches_cold_start_enumeration() {
    let mut rng = seeded_rng(8, 0);
    let n = 45;
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
        .collect();
    let y: Vec<f64> = x
        .iter()
        .map(|v| (v[0]).sin() + 0.5 * v[1] + rng.random_range(-0.2..0.2))
        .collect();
    let inner: Vec<usize> = (0..n).map(|i| i % 3).collect();
    let grid = GridSpec {
        c_exponents: (-1, 2),
        gamma_exponents: (-2, 1),
    };
    let settings = SolverSettings {
        tolerance: 1e-9,
        ..SolverSettings::default()
    };
    let got = grid_search(&x, &y, &inner, &grid, &settings).unwrap();

    let mut oracle = Vec::new();
    for (c, gamma) in grid.candidates() {
        let mut total = 0.0;
        for f in 0..3 {
            let tr: Vec<usize> = (0..n).filter(|&i| inner[i] != f).collect();
            let va: Vec<usize> = (0..n).filter(|&i| inner[i] == f).collect();
            let model = svr_fit(
                &tr.iter().map(|&i| x[i].clone()).collect::<Vec<_>>(),
                &tr.iter().map(|&i| y[i]).collect::<Vec<_>>(),
                tight(c, gamma),
            )
            .unwrap();
            let truth: Vec<f64> = va.iter().map(|&i| y[i]).collect();
            let pred: Vec<f64> = va.iter().map(|&i| model.predict(&x[i])).collect();
            total += r_squared(&truth, &pred).unwrap();
        }
        oracle.push((c, gamma, total / 3.0));
    }
    assert_eq!(got.candidates.len(), oracle.len());
    for (cand, &(c, gamma, score)) in got.candidates.iter().zip(&oracle) {
        assert_eq!((cand.c, cand.gamma), (c, gamma));
        assert!(
            (cand.score.unwrap() - score).abs() < 1e-6,
            "({c}, {gamma}): {:?} vs {score}",
            cand.score
        );
    }
    let best = oracle
        .iter()
        .fold(oracle[0], |b, &o| if o.2 > b.2 { o } else { b });
    assert_eq!((got.c, got.gamma), (best.0, best.1));
    assert!((got.score - best.2).abs() < 1e-6);
}

fn sample(chemical: usize, species: usize, target: f64) -> AggregatedSample {
    AggregatedSample {
        chemical: format!("c{chemical}"),
        species: format!("s{species}"),
        target,
        n_replicates: 3,
        replicate_std: 0.0,
        median_mg_per_l: 10f64.powf(-target),
    }
}

#[test]
fn held_out_predictions_never_see_their_own_targets() {
    let mut rng = seeded_rng(4, 0);
    let n = 60;
    let species: Vec<usize> = (0..n).map(|i| i % 6).collect();
    let features: Vec<Vec<f64>> = (0..n)
        .map(|i| vec![(i % 10) as f64, species[i] as f64])
        .collect();
    let targets: Vec<f64> = (0..n)
        .map(|i| (i % 10) as f64 * 0.2 - 1.0 + rng.random_range(-0.1..0.1))
        .collect();
    let samples: Vec<AggregatedSample> = (0..n)
        .map(|i| sample(i % 10, species[i], targets[i]))
        .collect();
    let config = ProtocolConfig {
        n_repeats: 3,
        grid: GridSpec {
            c_exponents: (-1, 1),
            gamma_exponents: (-2, 0),
        },
        ..ProtocolConfig::default()
    };
    let input = ProtocolInput {
        samples: &samples,
        features: &features,
        groups: &species,
        n_groups: 6,
    };
    let base = run_protocol(&input, FeatureSource::Embedding, GapMode::Species, &config).unwrap();
    for r in 0..3 {
        let folds: Vec<_> = base.folds.iter().filter(|f| f.repeat == r).collect();
        assert_eq!(folds.iter().map(|f| f.n_test).sum::<usize>(), n);
        assert!(folds.iter().all(|f| f.n_train + f.n_test == n));
    }
    for g in 0..6 {
        let perturbed: Vec<AggregatedSample> = samples
            .iter()
            .map(|s| {
                if s.species == format!("s{g}") {
                    AggregatedSample {
                        target: s.target + 3.0,
                        ..s.clone()
                    }
                } else {
                    s.clone()
                }
            })
            .collect();
        let input = ProtocolInput {
            samples: &perturbed,
            ..input.clone()
        };
        let moved =
            run_protocol(&input, FeatureSource::Embedding, GapMode::Species, &config).unwrap();
        for (a, b) in base.samples.iter().zip(&moved.samples) {
            if a.species == format!("s{g}") {
                assert_eq!(
                    a.mean_prediction, b.mean_prediction,
                    "{} leaked its own target",
                    a.species
                );
            }
        }
        assert!(base
            .samples
            .iter()
            .zip(&moved.samples)
            .any(|(a, b)| a.mean_prediction != b.mean_prediction));
    }
}

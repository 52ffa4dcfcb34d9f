use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use qnd_sim::atomic::{build_manifold, IonSpec, LevelLabel};
use qnd_sim::dynamics::{ErrorModel, GateBackend};
use qnd_sim::montecarlo::{run_point, sample_initial_level, trial_rng};
use qnd_sim::protocol::{
    analytic_vote_error, yb171_init_protocol, yb171_readout_protocol, CompiledProtocol, InitialState, RngOutcomes,
    RunOptions,
};

fn chi_square_p_value(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    let expect = total as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
}

#[test]
fn initial_levels_are_uniform() {
    for ion in [IonSpec::yb171(), IonSpec::ba137()] {
        let levels = build_manifold(&ion).unwrap().labels();
        let mut counts = vec![0usize; levels.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let l = sample_initial_level(&levels, &mut rng).unwrap();
            counts[levels.iter().position(|&x| x == l).unwrap()] += 1;
        }
        let p = chi_square_p_value(&counts);
        assert!(p > 1e-3, "{counts:?} p = {p}");
    }
}

#[test]
fn single_level_list_always_returns_it() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let only = [LevelLabel::int(1, 0)];
    for _ in 0..100 {
        assert_eq!(sample_initial_level(&only, &mut rng).unwrap(), only[0]);
    }
}

fn noisy_protocol() -> CompiledProtocol {
    let m = build_manifold(&IonSpec::yb171()).unwrap();
    let options = RunOptions {
        backend: GateBackend::ClosedForm,
        errors: ErrorModel {
            shelving_ratio: 0.85,
            ..ErrorModel::ideal()
        },
        ..RunOptions::default()
    };
    CompiledProtocol::new(&m, &yb171_init_protocol(), options).unwrap()
}

#[test]
fn consecutive_trials_are_uncorrelated() {
    let samples = run_point(&noisy_protocol(), 20_000, 5, 0).unwrap();
    let e = &samples.errors;
    let n = e.len() as f64;
    let mean = samples.mean();
    let var: f64 = e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    assert!(var > 0.0);
    let lag1: f64 = e.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / ((n - 1.0) * var);
    assert!(lag1.abs() < 3.0 / n.sqrt(), "lag-1 autocorrelation {lag1}");
}

#[test]
fn distinct_points_use_distinct_streams() {
    use rand::Rng;
    let a: Vec<u64> = (0..4).map(|t| trial_rng(1, 0, t).random()).collect();
    let b: Vec<u64> = (0..4).map(|t| trial_rng(1, 1, t).random()).collect();
    let c: Vec<u64> = (0..4).map(|t| trial_rng(2, 0, t).random()).collect();
    for (i, x) in a.iter().enumerate() {
        assert_ne!(*x, b[i]);
        assert_ne!(*x, c[i]);
        for y in &a[i + 1..] {
            assert_ne!(x, y);
        }
    }
}

#[test]
fn standard_error_shrinks_as_inverse_root_n() {
    let compiled = noisy_protocol();
    let small = run_point(&compiled, 1_000, 9, 0).unwrap();
    let large = run_point(&compiled, 10_000, 9, 1).unwrap();
    let ratio = small.std_error() / large.std_error();
    assert!((ratio / 10f64.sqrt() - 1.0).abs() < 0.2, "ratio {ratio}");
}

#[test]
fn yb_readout_of_equal_superposition_is_fair() {
    let m = build_manifold(&IonSpec::yb171()).unwrap();
    let options = RunOptions {
        backend: GateBackend::ClosedForm,
        ..RunOptions::default()
    };
    let compiled = CompiledProtocol::new(&m, &yb171_readout_protocol(), options).unwrap();
    let mut amps = vec![C64::new(0.0, 0.0); 4];
    let h = std::f64::consts::FRAC_1_SQRT_2;
    amps[m.index_of(LevelLabel::int(0, 0)).unwrap()] = C64::new(h, 0.0);
    amps[m.index_of(LevelLabel::int(1, 0)).unwrap()] = C64::new(0.0, h);
    let initial = InitialState::Superposition(amps);
    let trials = 10_000;
    let mut zero_zero = 0usize;
    for t in 0..trials {
        let mut rng = trial_rng(3, 0, t);
        let r = compiled.run(&initial, &mut RngOutcomes(&mut rng)).unwrap();
        assert!((r.fidelity - 1.0).abs() < 1e-12);
        zero_zero += usize::from(r.guessed_initial == Some(LevelLabel::int(0, 0)));
    }
    let sigma = (0.25 * trials as f64).sqrt();
    assert!((zero_zero as f64 - 0.5 * trials as f64).abs() < 3.0 * sigma, "{zero_zero}");
}

#[test]
fn vote_error_slope_approaches_half_order_plus_one() {
    for n in [1usize, 3, 5, 7] {
        let (p1, p2) = (1e-4, 1e-3);
        let slope = (analytic_vote_error(p2, n).unwrap() / analytic_vote_error(p1, n).unwrap()).log10();
        let expect = (n + 1) as f64 / 2.0;
        assert!((slope - expect).abs() < 0.01 * expect, "n = {n}: slope {slope}");
    }
}

#[test]
fn vote_error_tail_values() {
    assert_eq!(analytic_vote_error(0.3, 1).unwrap(), 0.3);
    assert!((analytic_vote_error(0.1, 3).unwrap() - 0.028).abs() < 1e-15);
    for n in [1, 3, 5, 9] {
        assert!((analytic_vote_error(0.5, n).unwrap() - 0.5).abs() < 1e-15);
    }
}

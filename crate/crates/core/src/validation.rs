//! Built-in oracle checks run by `qnd-sim validate`.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::atomic::{breit_rabi_energy, build_manifold, HyperfineManifold, IonSpec, GAUSS};
use crate::dynamics::{
    closed_form_gate, gate_params_for, integrator::IntegratorOptions, ConditionalRotation, Cycle, ErrorModel,
    GateBackend, GateDrive, GateParams, GatePropagator, SystemState,
};
use crate::error::Result;
use crate::measurement::{predict_partition, IDEAL_SPLIT_TOLERANCE};
use crate::protocol::{analytic_vote_error, builtin_protocol, majority_vote, CompiledProtocol, InitialState, RngOutcomes, RunOptions, BUILTIN_PROTOCOLS};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }

    fn from_result(name: &str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Self::new(name, passed, detail),
            Err(e) => Self::new(name, false, e.to_string()),
        }
    }
}

/// Knobs for deliberately misconfiguring the suite.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ValidationOptions {
    pub drive: GateDrive,
    /// Multiplies the solved detuning before the consistency and gate checks.
    pub detuning_scale: f64,
    pub seed: u64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            drive: GateDrive::default(),
            detuning_scale: 1.0,
            seed: 0,
        }
    }
}

/// Agreement between the integrated gate and the closed form.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct GateAgreement {
    /// Max deviation over all spin basis states after removing one global phase.
    pub max_deviation: f64,
    /// Smallest probability of returning to `|n=0⟩` from `|n=0⟩`.
    pub min_ground_return: f64,
}

/// Integrates the ideal gate and compares its spin map to the closed form.
pub fn gate_agreement(manifold: &HyperfineManifold, params: &GateParams) -> Result<GateAgreement> {
    let gate = GatePropagator::integrate(manifold, params, &ErrorModel::ideal(), &IntegratorOptions::default())?;
    let exact = closed_form_gate(manifold, params);
    let reference = gate.block(0, 0)[(0, 0)] / exact[(0, 0)];
    let global = reference / reference.norm();
    let mut max_deviation = 0.0f64;
    let mut min_ground_return = 1.0f64;
    for k in 0..manifold.len() {
        for r in 0..2 {
            let u = gate.block(k, r)[(0, 0)];
            max_deviation = max_deviation.max((u - exact[(2 * k + r, 2 * k + r)] * global).norm());
            min_ground_return = min_ground_return.min(u.norm_sqr());
        }
    }
    Ok(GateAgreement {
        max_deviation,
        min_ground_return,
    })
}

fn presets() -> Vec<(&'static str, IonSpec)> {
    vec![("yb171", IonSpec::yb171()), ("ba137", IonSpec::ba137())]
}

fn tampered(dtheta: f64, upper_f: f64, options: &ValidationOptions) -> Result<GateParams> {
    let mut p = gate_params_for(dtheta, &options.drive, upper_f)?;
    p.detuning *= options.detuning_scale;
    Ok(p)
}

fn check_breit_rabi() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for (_, ion) in presets() {
        for gauss in [0.0, 0.1, 1.0, 5.0, 10.0] {
            let spec = ion.clone().with_field(gauss * GAUSS);
            let m = build_manifold(&spec)?;
            for level in &m.levels {
                let br = breit_rabi_energy(&spec, level.manifold, level.label.m_f)?;
                worst = worst.max(((level.energy - br) / br).abs());
            }
        }
    }
    Ok((worst < 1e-10, format!("max relative deviation {worst:.2e} (limit 1e-10)")))
}

fn check_low_field() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for (_, ion) in presets() {
        let m = build_manifold(&ion.with_field(1e-4 * GAUSS))?;
        for level in &m.levels {
            worst = worst.max((level.b_coeff - m.low_field_b(level)).abs());
        }
    }
    Ok((worst < 1e-6, format!("max |b - ±m/2F⁺| {worst:.2e} at 1e-4 G (limit 1e-6)")))
}

fn check_closure(options: &ValidationOptions) -> Result<(bool, String)> {
    for dtheta in [PI / 4.0, PI / 2.0, PI] {
        tampered(dtheta, 1.0, options)?.check_consistency()?;
    }
    Ok((true, "t_g = 2π/δ and dθ consistent to 1e-12 for dθ ∈ {π/4, π/2, π}".into()))
}

fn check_gate(options: &ValidationOptions) -> Result<(bool, String)> {
    let m = build_manifold(&IonSpec::yb171())?;
    let mut worst = GateAgreement {
        max_deviation: 0.0,
        min_ground_return: 1.0,
    };
    for dtheta in [PI / 4.0, PI / 2.0, PI] {
        let a = gate_agreement(&m, &tampered(dtheta, 1.0, options)?)?;
        worst.max_deviation = worst.max_deviation.max(a.max_deviation);
        worst.min_ground_return = worst.min_ground_return.min(a.min_ground_return);
    }
    let passed = worst.max_deviation < 1e-6 && worst.min_ground_return >= 1.0 - 1e-8;
    Ok((
        passed,
        format!(
            "spin map deviation {:.2e} (limit 1e-6), ground return {:.12} (limit 1 - 1e-8)",
            worst.max_deviation, worst.min_ground_return
        ),
    ))
}

fn check_votes(seed: u64) -> Result<(bool, String)> {
    let exact = analytic_vote_error(0.1, 3)?;
    let (p, n, draws) = (0.05, 3usize, 100_000usize);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut wrong = 0usize;
    for _ in 0..draws {
        let bits: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < p)).collect();
        wrong += usize::from(majority_vote(&bits)? == 1);
    }
    let expect = analytic_vote_error(p, n)?;
    let sigma = (expect * (1.0 - expect) / draws as f64).sqrt();
    let observed = wrong as f64 / draws as f64;
    let passed = (exact - 0.028).abs() < 1e-12 && (observed - expect).abs() <= 3.0 * sigma;
    Ok((
        passed,
        format!("tail(0.1, 3) = {exact:.6}; sampled {observed:.5} vs {expect:.5} ± {sigma:.5} at p = {p}"),
    ))
}

fn check_partitions(options: &ValidationOptions) -> Result<(bool, String)> {
    let mut compared = 0usize;
    for (_, ion) in presets() {
        let m = build_manifold(&ion)?;
        let all: BTreeSet<_> = m.labels().into_iter().collect();
        for dtheta in [PI / 4.0, PI / 2.0, PI] {
            for phi in [0.0, PI / 4.0, PI / 2.0, PI] {
                let rotation = ConditionalRotation::new(dtheta, phi);
                let cycle = Cycle::new(&m, rotation, &options.drive, &ErrorModel::ideal(), GateBackend::ClosedForm)?;
                let simulated: Vec<f64> = (0..m.len())
                    .map(|k| {
                        let mut s = SystemState::basis(m.len(), options.drive.fock_cutoff, k);
                        cycle.apply(&mut s).map(|_| s.readout_probability(1))
                    })
                    .collect::<Result<_>>()?;
                let binary = simulated
                    .iter()
                    .all(|&p| !(IDEAL_SPLIT_TOLERANCE..=1.0 - IDEAL_SPLIT_TOLERANCE).contains(&p));
                match predict_partition(&m, &all, rotation, IDEAL_SPLIT_TOLERANCE) {
                    Ok(partition) => {
                        for (k, level) in m.levels.iter().enumerate() {
                            let flips = simulated[k] > 0.5;
                            if flips != partition.subspace_b.contains(&level.label) || !binary {
                                return Ok((false, format!("mismatch at {rotation:?} for {}", level.label)));
                            }
                        }
                    }
                    Err(_) if binary => return Ok((false, format!("prediction rejected binary split {rotation:?}"))),
                    Err(_) => {}
                }
                compared += 1;
            }
        }
    }
    Ok((true, format!("{compared} settings agree with full-state simulation")))
}

fn check_builtins(options: &ValidationOptions) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut worst = 0.0f64;
    for (name, ion) in BUILTIN_PROTOCOLS {
        let m = build_manifold(&IonSpec::preset(ion).expect("preset exists"))?;
        let tree = builtin_protocol(name).expect("builtin exists");
        let run = RunOptions {
            drive: options.drive,
            backend: GateBackend::ClosedForm,
            ..RunOptions::default()
        };
        let compiled = CompiledProtocol::new(&m, &tree, run)?;
        for &level in compiled.initial_subspace() {
            let r = compiled.run(&InitialState::Level(level), &mut RngOutcomes(&mut rng))?;
            if r.guessed_initial != Some(level) {
                return Ok((false, format!("{name}: {level} identified as {:?}", r.guessed_initial)));
            }
            worst = worst.max(r.error());
        }
    }
    Ok((worst < 1e-9, format!("all built-in protocols identify every level, max 1 - 𝒫 = {worst:.1e}")))
}

/// Runs every check; never stops at the first failure.
pub fn run_validation(options: &ValidationOptions) -> Vec<CheckResult> {
    vec![
        CheckResult::from_result("breit_rabi_vs_diagonalization", check_breit_rabi()),
        CheckResult::from_result("low_field_b_coefficients", check_low_field()),
        CheckResult::from_result("gate_closure_consistency", check_closure(options)),
        CheckResult::from_result("closed_form_vs_integrated_gate", check_gate(options)),
        CheckResult::from_result("majority_vote_binomial", check_votes(options.seed)),
        CheckResult::from_result("partition_brute_force", check_partitions(options)),
        CheckResult::from_result("builtin_protocols_ideal", check_builtins(options)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_suite_passes() {
        for c in run_validation(&ValidationOptions::default()) {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn tiny_cutoff_fails_gate_check() {
        let options = ValidationOptions {
            drive: GateDrive {
                fock_cutoff: 1,
                ..GateDrive::default()
            },
            ..ValidationOptions::default()
        };
        let results = run_validation(&options);
        let gate = results.iter().find(|c| c.name == "closed_form_vs_integrated_gate").unwrap();
        assert!(!gate.passed);
        assert!(gate.detail.contains("n_max"), "{}", gate.detail);
    }

    #[test]
    fn tampered_detuning_fails_closure() {
        let options = ValidationOptions {
            detuning_scale: 1.01,
            ..ValidationOptions::default()
        };
        let results = run_validation(&options);
        let closure = results.iter().find(|c| c.name == "gate_closure_consistency").unwrap();
        assert!(!closure.passed);
    }
}

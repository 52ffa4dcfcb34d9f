use std::collections::HashMap;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use super::integrator::{integrate, IntegratorOptions};
use super::{readout_sign, ErrorModel, GateParams, SystemState, FOCK_TRUNCATION_LIMIT};
use crate::atomic::HyperfineManifold;
use crate::error::{Error, Result};

/// Gate propagator split into one motional operator per (logic level, readout) branch.
///
/// Both error Hamiltonians commute with the logic and readout projectors, so
/// the full propagator is block diagonal with `L · 2` blocks of size
/// `(n_max+1)²`. In the interaction picture of `ε a†a` a branch with
/// `S = b c_l + s c_r` evolves under `(Ω_g S / 2)(a† e^{i(δ+ε)t} + h.c.)`.
#[derive(Clone, Debug)]
pub struct GatePropagator {
    params: GateParams,
    fock_dim: usize,
    blocks: Vec<[DMatrix<C64>; 2]>,
    max_edge_population: f64,
    max_steps: usize,
}

impl GatePropagator {
    /// Numerically integrated gate including the error Hamiltonians.
    pub fn integrate(
        manifold: &HyperfineManifold,
        params: &GateParams,
        errors: &ErrorModel,
        options: &IntegratorOptions,
    ) -> Result<Self> {
        params.check_consistency()?;
        errors.validate()?;
        let nf = params.fock_cutoff + 1;
        let omega = params.detuning + errors.mode_shift;
        let t_g = params.duration;

        let mut branches: Vec<f64> = Vec::new();
        let mut keyed: HashMap<u64, usize> = HashMap::new();
        for level in &manifold.levels {
            for r in 0..2 {
                let s = readout_sign(r);
                let coupling = params.rabi * (level.b_coeff * params.c_logic + s * params.c_readout) / 2.0;
                keyed.entry(coupling.to_bits()).or_insert_with(|| {
                    branches.push(coupling);
                    branches.len() - 1
                });
            }
        }

        let lowering = lowering_operator(nf);
        let raising = lowering.adjoint();
        let solved: Vec<Result<(DMatrix<C64>, usize, f64)>> = branches
            .par_iter()
            .map(|&g| {
                let h = |t: f64| {
                    let phase = C64::from_polar(1.0, omega * t);
                    (&raising * phase + &lowering * phase.conj()) * C64::new(g, 0.0)
                };
                let p = integrate(nf, &h, t_g, options)?;
                Ok((p.propagator, p.steps, p.max_edge_population))
            })
            .collect();

        let mut motional = Vec::with_capacity(solved.len());
        let mut edge = 0.0f64;
        let mut max_steps = 0;
        let mut peak_coupling = 0.0f64;
        for (result, &g) in solved.into_iter().zip(&branches) {
            let (u, steps, e) = result?;
            edge = edge.max(e);
            max_steps = max_steps.max(steps);
            peak_coupling = peak_coupling.max(g.abs());
            motional.push(u);
        }
        if edge >= FOCK_TRUNCATION_LIMIT {
            let peak_alpha = 2.0 * peak_coupling / omega.abs();
            return Err(Error::FockTruncation {
                n_max: params.fock_cutoff,
                population: edge,
                suggested: suggested_cutoff(peak_alpha * peak_alpha),
            });
        }

        // U = e^{-iε n t_g} U_I e^{-iΔ(b + s/2) t_g}
        let free: Vec<C64> = (0..nf)
            .map(|n| C64::from_polar(1.0, -errors.mode_shift * n as f64 * t_g))
            .collect();
        let blocks = manifold
            .levels
            .iter()
            .map(|level| {
                let mk = |r: usize| {
                    let s = readout_sign(r);
                    let g = params.rabi * (level.b_coeff * params.c_logic + s * params.c_readout) / 2.0;
                    let u_i = &motional[keyed[&g.to_bits()]];
                    let zeeman = C64::from_polar(1.0, -errors.zeeman_shift * (level.b_coeff + s / 2.0) * t_g);
                    DMatrix::from_fn(nf, nf, |i, j| free[i] * u_i[(i, j)] * zeeman)
                };
                [mk(0), mk(1)]
            })
            .collect();

        Ok(Self {
            params: *params,
            fock_dim: nf,
            blocks,
            max_edge_population: edge,
            max_steps,
        })
    }

    /// Closed-form gate acting as a phase on each branch and identity on motion.
    /// A Zeeman shift adds its exact phase; a mode shift cannot be represented.
    pub fn closed_form(manifold: &HyperfineManifold, params: &GateParams, errors: &ErrorModel) -> Result<Self> {
        params.check_consistency()?;
        errors.validate()?;
        if errors.mode_shift != 0.0 {
            return Err(Error::InvalidGateParams(
                "the closed-form gate cannot model a mode shift; use the integrated backend".into(),
            ));
        }
        let nf = params.fock_cutoff + 1;
        let sq = params.jz_squared_phase();
        let coupling = params.coupling_phase();
        let blocks = manifold
            .levels
            .iter()
            .map(|level| {
                let b = level.b_coeff;
                let mk = |r: usize| {
                    let s = readout_sign(r);
                    let phase = sq * b * b + coupling * b * s
                        - errors.zeeman_shift * (b + s / 2.0) * params.duration;
                    DMatrix::from_diagonal_element(nf, nf, C64::from_polar(1.0, phase))
                };
                [mk(0), mk(1)]
            })
            .collect();
        Ok(Self {
            params: *params,
            fock_dim: nf,
            blocks,
            max_edge_population: 0.0,
            max_steps: 0,
        })
    }

    pub fn params(&self) -> &GateParams {
        &self.params
    }

    pub fn fock_dim(&self) -> usize {
        self.fock_dim
    }

    /// Motional operator for one branch.
    pub fn block(&self, level: usize, readout: usize) -> &DMatrix<C64> {
        &self.blocks[level][readout]
    }

    /// Largest top-two Fock population seen from `|n=0⟩` during the gate.
    pub fn max_edge_population(&self) -> f64 {
        self.max_edge_population
    }

    /// Largest accepted step count over all branches (0 for the closed form).
    pub fn steps(&self) -> usize {
        self.max_steps
    }

    pub fn apply(&self, state: &mut SystemState) -> Result<()> {
        self.check_shape(state)?;
        let nf = self.fock_dim;
        for (k, branch) in self.blocks.iter().enumerate() {
            let block = state.level_block_mut(k);
            for (r, u) in branch.iter().enumerate() {
                let slice = &mut block[r * nf..(r + 1) * nf];
                let v = u * nalgebra::DVector::from_column_slice(slice);
                slice.copy_from_slice(v.as_slice());
            }
        }
        check_truncation(state, self.params.fock_cutoff)
    }

    fn check_shape(&self, state: &SystemState) -> Result<()> {
        if state.levels() != self.blocks.len() || state.fock_dim() != self.fock_dim {
            return Err(Error::InvalidGateParams(format!(
                "state shape ({} levels, n_max {}) does not match gate ({} levels, n_max {})",
                state.levels(),
                state.n_max(),
                self.blocks.len(),
                self.fock_dim - 1
            )));
        }
        Ok(())
    }
}

/// Evolves `state` through one gate with the given error Hamiltonians.
pub fn integrate_gate(
    manifold: &HyperfineManifold,
    state: &SystemState,
    params: &GateParams,
    errors: &ErrorModel,
) -> Result<SystemState> {
    let gate = GatePropagator::integrate(manifold, params, errors, &IntegratorOptions::default())?;
    let mut out = state.clone();
    gate.apply(&mut out)?;
    Ok(out)
}

/// Post-hoc truncation check on an evolved state.
pub(crate) fn check_truncation(state: &SystemState, n_max: usize) -> Result<()> {
    let top = state.top_fock_population();
    if top >= FOCK_TRUNCATION_LIMIT {
        let mean_n: f64 = state
            .fock_populations()
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum();
        return Err(Error::FockTruncation {
            n_max,
            population: top,
            suggested: suggested_cutoff(mean_n).max(n_max + 1),
        });
    }
    Ok(())
}

fn lowering_operator(nf: usize) -> DMatrix<C64> {
    DMatrix::from_fn(nf, nf, |i, j| {
        if j == i + 1 {
            C64::new((j as f64).sqrt(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Smallest `n_max` whose top-two levels hold < 1e-9 of a Poisson(`mean`) distribution,
/// with a margin of two levels.
pub(crate) fn suggested_cutoff(mean: f64) -> usize {
    let mean = mean.max(0.0);
    let mut p = (-mean).exp();
    let mut tail = 1.0 - p;
    let mut n = 0usize;
    while tail > 1e-9 && n < 10_000 {
        n += 1;
        p *= mean / n as f64;
        tail -= p;
    }
    n + 3
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atomic::{build_manifold, IonSpec};
    use crate::dynamics::{closed_form_gate, gate_params_for, GateDrive};
    use std::f64::consts::PI;

    fn yb() -> HyperfineManifold {
        build_manifold(&IonSpec::yb171()).unwrap()
    }

    #[test]
    fn ideal_gate_matches_closed_form_on_spins() {
        let m = yb();
        let p = gate_params_for(PI / 2.0, &GateDrive::default(), 1.0).unwrap();
        let gate = GatePropagator::integrate(&m, &p, &ErrorModel::ideal(), &IntegratorOptions::default()).unwrap();
        let exact = closed_form_gate(&m, &p);
        // the closed form drops the spin-independent phase from c_r²
        let global = C64::from_polar(1.0, p.rabi.powi(2) * p.duration * p.c_readout.powi(2) / (4.0 * p.detuning));
        for k in 0..m.len() {
            for r in 0..2 {
                let u = gate.block(k, r);
                let d = (u[(0, 0)] - exact[(2 * k + r, 2 * k + r)] * global).norm();
                assert!(d < 1e-6, "level {k} readout {r}: {} vs {}", u[(0, 0)], exact[(2 * k + r, 2 * k + r)] * global);
                assert!((1.0 - u[(0, 0)].norm_sqr()) < 1e-8);
            }
        }
    }

    #[test]
    fn detuned_loop_entangles_motion() {
        let m = yb();
        let p = gate_params_for(PI, &GateDrive::default(), 1.0).unwrap();
        let errors = ErrorModel {
            mode_shift: 0.3 * p.detuning,
            ..ErrorModel::ideal()
        };
        let k = m.index_of(crate::atomic::LevelLabel::int(1, 1)).unwrap();
        let mut s = SystemState::basis(m.len(), p.fock_cutoff, k);
        crate::dynamics::apply_pi_half(&mut s, 0.0);
        let out = integrate_gate(&m, &s, &p, &errors).unwrap();
        assert!(1.0 - out.spin_purity() > 1e-3);
    }

    #[test]
    fn tiny_cutoff_reports_truncation() {
        let m = yb();
        let drive = GateDrive {
            fock_cutoff: 1,
            ..GateDrive::default()
        };
        let p = gate_params_for(PI, &drive, 1.0).unwrap();
        let err = GatePropagator::integrate(&m, &p, &ErrorModel::ideal(), &IntegratorOptions::default()).unwrap_err();
        match err {
            Error::FockTruncation { n_max, suggested, .. } => {
                assert_eq!(n_max, 1);
                assert!(suggested > 5);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn closed_form_rejects_mode_shift() {
        let m = yb();
        let p = gate_params_for(PI, &GateDrive::default(), 1.0).unwrap();
        let errors = ErrorModel {
            mode_shift: 1.0,
            ..ErrorModel::ideal()
        };
        assert!(GatePropagator::closed_form(&m, &p, &errors).is_err());
    }

    #[test]
    fn suggested_cutoff_grows_with_displacement() {
        assert!(suggested_cutoff(0.0) <= 4);
        assert!(suggested_cutoff(4.5) > suggested_cutoff(1.0));
    }
}

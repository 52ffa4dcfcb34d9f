use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::gate::{check_truncation, GatePropagator};
use super::integrator::IntegratorOptions;
use super::{gate_params_for, pi_half_matrix, y_rotation, ConditionalRotation, ErrorModel, GateDrive, SystemState};
use crate::atomic::HyperfineManifold;
use crate::error::{Error, Result};

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateBackend {
    ClosedForm,
    #[default]
    Integrated,
}

/// One logic/readout cycle `U_l = U_y(φ) U_x(π/2)† U_g U_x(π/2)`, precomputed as
/// a `2(n_max+1)`-square operator per logic level.
#[derive(Clone, Debug)]
pub struct Cycle {
    rotation: ConditionalRotation,
    fock_dim: usize,
    n_max: usize,
    blocks: Vec<DMatrix<C64>>,
    gate: Option<GatePropagator>,
}

impl Cycle {
    pub fn new(
        manifold: &HyperfineManifold,
        rotation: ConditionalRotation,
        drive: &GateDrive,
        errors: &ErrorModel,
        backend: GateBackend,
    ) -> Result<Self> {
        if !(rotation.dtheta.is_finite() && rotation.phi_y.is_finite()) || rotation.dtheta < 0.0 {
            return Err(Error::InvalidGateParams(format!(
                "cycle needs finite dθ >= 0 and finite φ_y, got ({}, {})",
                rotation.dtheta, rotation.phi_y
            )));
        }
        let nf = drive.fock_cutoff + 1;
        let t = pi_half_matrix(0.0);
        let outer = y_rotation(rotation.phi_y) * t.adjoint();

        let gate = if rotation.dtheta > 0.0 {
            let params = gate_params_for(rotation.dtheta, drive, manifold.upper_f().value())?;
            Some(match backend {
                GateBackend::ClosedForm => GatePropagator::closed_form(manifold, &params, errors)?,
                GateBackend::Integrated => {
                    GatePropagator::integrate(manifold, &params, errors, &IntegratorOptions::default())?
                }
            })
        } else {
            None
        };

        let identity = DMatrix::<C64>::identity(nf, nf);
        let blocks = (0..manifold.len())
            .map(|k| {
                let u = |s: usize| gate.as_ref().map_or(&identity, |g| g.block(k, s));
                let mut block = DMatrix::<C64>::zeros(2 * nf, 2 * nf);
                for r in 0..2 {
                    for rp in 0..2 {
                        for s in 0..2 {
                            let coeff = outer[(r, s)] * t[(s, rp)];
                            if coeff == C64::new(0.0, 0.0) {
                                continue;
                            }
                            let mut view = block.view_mut((r * nf, rp * nf), (nf, nf));
                            view += u(s) * coeff;
                        }
                    }
                }
                block
            })
            .collect();

        Ok(Self {
            rotation,
            fock_dim: nf,
            n_max: drive.fock_cutoff,
            blocks,
            gate,
        })
    }

    pub fn rotation(&self) -> ConditionalRotation {
        self.rotation
    }

    pub fn gate(&self) -> Option<&GatePropagator> {
        self.gate.as_ref()
    }

    /// Operator on one level's readout ⊗ motion block.
    pub fn block(&self, level: usize) -> &DMatrix<C64> {
        &self.blocks[level]
    }

    pub fn apply(&self, state: &mut SystemState) -> Result<()> {
        if state.levels() != self.blocks.len() || state.fock_dim() != self.fock_dim {
            return Err(Error::InvalidGateParams(format!(
                "state shape ({} levels, n_max {}) does not match cycle ({} levels, n_max {})",
                state.levels(),
                state.n_max(),
                self.blocks.len(),
                self.n_max
            )));
        }
        for (k, op) in self.blocks.iter().enumerate() {
            let block = state.level_block_mut(k);
            if block.iter().all(|c| c.re == 0.0 && c.im == 0.0) {
                continue;
            }
            let v = op * DVector::from_column_slice(block);
            block.copy_from_slice(v.as_slice());
        }
        if self.gate.is_some() {
            check_truncation(state, self.n_max)?;
        }
        Ok(())
    }
}

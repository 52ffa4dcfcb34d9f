//! Geometric-phase gate, readout-ion pulses and logic-ion shelving pulses.
//!
//! The gate Hamiltonian after the rotating-wave approximation is
//! `(Ω_g/2)(J_z c_l + σ_z c_r)(a† e^{iδt} + a e^{-iδt})` with `J_z` taken
//! diagonal in the dressed basis (entries `b_coeff`). Closing the motional
//! loop at `t_g = 2π/δ` leaves the spin-only unitary
//! `exp(i Ω²t_g c_l² J_z² / 4δ) · exp(i Ω²t_g c_l c_r J_z σ_z / 2δ)`.
//! Conjugating with readout π/2 pulses and adding a readout `y` rotation
//! gives a per-level readout rotation `exp(i θ σ_y / 2)` with
//! `θ = φ_y + 2 F⁺ dθ b_coeff`.

mod cycle;
mod gate;
pub mod integrator;
mod state;

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::atomic::{HyperfineManifold, LevelLabel};
use crate::error::{Error, Result};

pub use cycle::{Cycle, GateBackend};
pub use gate::{integrate_gate, GatePropagator};
pub use state::SystemState;

/// Default Fock-space cutoff.
pub const DEFAULT_FOCK_CUTOFF: usize = 20;

/// Threshold on the top-two Fock populations before truncation is reported.
pub const FOCK_TRUNCATION_LIMIT: f64 = 1e-8;

/// `(dθ, φ_y)` for one logic/readout cycle.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalRotation {
    pub dtheta: f64,
    pub phi_y: f64,
}

impl ConditionalRotation {
    pub const fn new(dtheta: f64, phi_y: f64) -> Self {
        Self { dtheta, phi_y }
    }

    /// Total readout rotation angle for a level with coefficient `b_coeff`.
    pub fn theta(&self, b_coeff: f64, upper_f: f64) -> f64 {
        self.phi_y + 2.0 * upper_f * self.dtheta * b_coeff
    }
}

/// Drive-level inputs shared by every gate in a protocol.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateDrive {
    /// Gate Rabi frequency Ω_g in rad/s.
    pub rabi: f64,
    pub c_logic: f64,
    pub c_readout: f64,
    pub fock_cutoff: usize,
}

impl Default for GateDrive {
    /// Ω_g = 2π × 5 kHz with equal-mass participations 1/√2.
    fn default() -> Self {
        Self {
            rabi: 2.0 * PI * 5e3,
            c_logic: std::f64::consts::FRAC_1_SQRT_2,
            c_readout: std::f64::consts::FRAC_1_SQRT_2,
            fock_cutoff: DEFAULT_FOCK_CUTOFF,
        }
    }
}

/// Fully resolved gate parameters for one target entangling angle.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub rabi: f64,
    pub detuning: f64,
    pub duration: f64,
    pub c_logic: f64,
    pub c_readout: f64,
    pub fock_cutoff: usize,
    pub target_dtheta: f64,
    /// `F⁺` of the logic ion the parameters were solved for.
    pub upper_f: f64,
}

impl GateParams {
    /// Phase multiplying `J_z²` in the closed-form propagator.
    pub fn jz_squared_phase(&self) -> f64 {
        self.rabi.powi(2) * self.duration * self.c_logic.powi(2) / (4.0 * self.detuning)
    }

    /// Phase multiplying `J_z σ_z` in the closed-form propagator (= dθ·F⁺).
    pub fn coupling_phase(&self) -> f64 {
        self.rabi.powi(2) * self.duration * self.c_logic * self.c_readout / (2.0 * self.detuning)
    }

    /// dθ implied by (Ω_g, δ, t_g, c_l, c_r).
    pub fn realized_dtheta(&self) -> f64 {
        self.coupling_phase() / self.upper_f
    }

    /// Loop closure and dθ consistency, both to relative 1e-12.
    pub fn check_consistency(&self) -> Result<()> {
        let closure = 2.0 * PI / self.detuning;
        if ((self.duration - closure) / closure).abs() > 1e-12 {
            return Err(Error::InvalidGateParams(format!(
                "loop not closed: t_g = {:e} s but 2π/δ = {:e} s",
                self.duration, closure
            )));
        }
        let realized = self.realized_dtheta();
        if ((realized - self.target_dtheta) / self.target_dtheta).abs() > 1e-12 {
            return Err(Error::InvalidGateParams(format!(
                "dθ mismatch: parameters give {realized} but target is {}",
                self.target_dtheta
            )));
        }
        if self.fock_cutoff < 1 {
            return Err(Error::InvalidGateParams("fock cutoff must be >= 1".into()));
        }
        Ok(())
    }
}

/// Solves the loop-closure and dθ equations for δ and t_g.
pub fn gate_params_for(dtheta: f64, drive: &GateDrive, upper_f: f64) -> Result<GateParams> {
    if !(dtheta.is_finite() && dtheta > 0.0) {
        return Err(Error::InvalidGateParams(format!(
            "dθ must be positive (got {dtheta}); realize negative rotations through φ_y"
        )));
    }
    if !(drive.rabi.is_finite() && drive.rabi > 0.0) {
        return Err(Error::InvalidGateParams(format!(
            "Ω_g must be positive, got {}",
            drive.rabi
        )));
    }
    let cc = drive.c_logic * drive.c_readout;
    if !(cc.is_finite() && cc > 0.0) || drive.c_logic.abs() > 1.0 || drive.c_readout.abs() > 1.0 {
        return Err(Error::InvalidGateParams(format!(
            "participations must satisfy c_l c_r > 0 and |c| <= 1, got ({}, {})",
            drive.c_logic, drive.c_readout
        )));
    }
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(upper_f > 0.0) {
        return Err(Error::InvalidGateParams(format!("F+ must be positive, got {upper_f}")));
    }
    let detuning = drive.rabi * (PI * cc / (dtheta * upper_f)).sqrt();
    Ok(GateParams {
        rabi: drive.rabi,
        detuning,
        duration: 2.0 * PI / detuning,
        c_logic: drive.c_logic,
        c_readout: drive.c_readout,
        fock_cutoff: drive.fock_cutoff,
        target_dtheta: dtheta,
        upper_f,
    })
}

/// Static error Hamiltonian strengths and pulse imperfections.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    /// Static gate-mode frequency shift ε (rad/s), `H = ε a†a`.
    pub mode_shift: f64,
    /// Static Zeeman shift Δ (rad/s), `H = Δ (J_z + σ_z/2)`.
    pub zeeman_shift: f64,
    /// Ω'_s / Ω_s for every shelving π-pulse.
    pub shelving_ratio: f64,
    /// Synthetic classical flip probability on every reported readout bit.
    /// Used only to inject independent measurement errors.
    #[serde(default)]
    pub readout_flip: f64,
}

impl Default for ErrorModel {
    fn default() -> Self {
        Self::ideal()
    }
}

impl ErrorModel {
    pub const fn ideal() -> Self {
        Self {
            mode_shift: 0.0,
            zeeman_shift: 0.0,
            shelving_ratio: 1.0,
            readout_flip: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.mode_shift, self.zeeman_shift, self.shelving_ratio, self.readout_flip]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidGateParams("error model values must be finite".into()));
        }
        if self.shelving_ratio < 0.0 {
            return Err(Error::InvalidGateParams(
                "shelving Rabi ratio must be non-negative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.readout_flip) {
            return Err(Error::InvalidGateParams(
                "readout flip probability must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// True when the gate itself is ideal (shelving and readout may still err).
    pub fn gate_is_ideal(&self) -> bool {
        self.mode_shift == 0.0 && self.zeeman_shift == 0.0
    }
}

/// Closed-form spin-space gate (loop closed, motion factored out).
///
/// Returns the `2L × 2L` unitary on logic ⊗ readout, indexed `level * 2 + readout`;
/// it is diagonal.
pub fn closed_form_gate(manifold: &HyperfineManifold, params: &GateParams) -> DMatrix<C64> {
    let dim = 2 * manifold.len();
    let sq = params.jz_squared_phase();
    let coupling = params.coupling_phase();
    let mut u = DMatrix::<C64>::zeros(dim, dim);
    for (k, level) in manifold.levels.iter().enumerate() {
        let b = level.b_coeff;
        for r in 0..2 {
            let s = readout_sign(r);
            u[(2 * k + r, 2 * k + r)] = C64::from_polar(1.0, sq * b * b + coupling * b * s);
        }
    }
    u
}

/// `σ_z` eigenvalue of readout basis state `r`.
#[inline]
pub(crate) fn readout_sign(r: usize) -> f64 {
    if r == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `sin²(θ/2)`.
pub fn spin_flip_probability(theta: f64) -> f64 {
    (theta / 2.0).sin().powi(2)
}

/// Readout rotation for one logic level.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct LevelRotation {
    pub label: LevelLabel,
    pub theta: f64,
}

impl LevelRotation {
    /// `exp(i θ σ_y / 2)`.
    pub fn matrix(&self) -> Matrix2<C64> {
        y_rotation(self.theta)
    }

    pub fn flip_probability(&self) -> f64 {
        spin_flip_probability(self.theta)
    }
}

/// `exp(i φ σ_y / 2)`.
pub fn y_rotation(phi: f64) -> Matrix2<C64> {
    let (s, c) = (phi / 2.0).sin_cos();
    Matrix2::new(
        C64::new(c, 0.0),
        C64::new(s, 0.0),
        C64::new(-s, 0.0),
        C64::new(c, 0.0),
    )
}

/// `exp(-i (π/4)(cos φ σ_x + sin φ σ_y))`: a π/2 pulse about an equatorial axis.
pub fn pi_half_matrix(axis_phase: f64) -> Matrix2<C64> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let (s, c) = axis_phase.sin_cos();
    // -i (cos φ σ_x + sin φ σ_y) has entries [[0, -i e^{-iφ}], [-i e^{iφ}, 0]]
    let off_upper = C64::new(0.0, -1.0) * C64::new(c, -s);
    let off_lower = C64::new(0.0, -1.0) * C64::new(c, s);
    Matrix2::new(
        C64::new(r, 0.0),
        off_upper * r,
        off_lower * r,
        C64::new(r, 0.0),
    )
}

/// Per-level readout rotations of `U_l(dθ, φ_y)`.
pub fn compose_conditional_rotation(
    manifold: &HyperfineManifold,
    rotation: ConditionalRotation,
) -> Vec<LevelRotation> {
    let upper_f = manifold.upper_f().value();
    manifold
        .levels
        .iter()
        .map(|level| LevelRotation {
            label: level.label,
            theta: rotation.theta(level.b_coeff, upper_f),
        })
        .collect()
}

/// Applies a 2×2 operator to the readout factor of every (level, Fock) pair.
pub fn apply_readout_operator(state: &mut SystemState, op: &Matrix2<C64>) {
    let nf = state.fock_dim();
    for k in 0..state.levels() {
        let block = state.level_block_mut(k);
        let (zero, one) = block.split_at_mut(nf);
        for (a0, a1) in zero.iter_mut().zip(one.iter_mut()) {
            let (x, y) = (*a0, *a1);
            *a0 = op[(0, 0)] * x + op[(0, 1)] * y;
            *a1 = op[(1, 0)] * x + op[(1, 1)] * y;
        }
    }
}

/// π/2 pulse on the readout ion; `axis_phase = 0` gives `exp(-iπσ_x/4)`,
/// `axis_phase = π` its adjoint.
pub fn apply_pi_half(state: &mut SystemState, axis_phase: f64) {
    apply_readout_operator(state, &pi_half_matrix(axis_phase));
}

/// Resonant shelving pulse between two logic levels with rotation angle
/// `π · shelving_ratio` about `x`; identity on every other level and on motion.
pub fn shelving_pulse(state: &mut SystemState, from: usize, to: usize, errors: &ErrorModel) -> Result<()> {
    if from == to || from >= state.levels() || to >= state.levels() {
        return Err(Error::InvalidProtocol(format!(
            "shelving pulse needs two distinct levels, got {from} -> {to}"
        )));
    }
    let half_angle = PI * errors.shelving_ratio / 2.0;
    let (s, c) = half_angle.sin_cos();
    let off = C64::new(0.0, -s);
    let width = 2 * state.fock_dim();
    let amps = state.amplitudes_mut();
    for j in 0..width {
        let (ia, ib) = (from * width + j, to * width + j);
        let (a, b) = (amps[ia], amps[ib]);
        amps[ia] = a * c + off * b;
        amps[ib] = off * a + b * c;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atomic::{build_manifold, IonSpec};

    #[test]
    fn closure_solution_for_quarter_turn() {
        let drive = GateDrive::default();
        let p = gate_params_for(PI / 2.0, &drive, 1.0).unwrap();
        assert!((p.detuning - 2.0 * PI * 5000.0).abs() < 1e-9);
        assert!((p.duration - 2e-4).abs() < 1e-15);
        p.check_consistency().unwrap();
    }

    #[test]
    fn closure_solution_for_half_turn() {
        let drive = GateDrive::default();
        let p = gate_params_for(PI, &drive, 1.0).unwrap();
        assert!((p.detuning - drive.rabi / 2f64.sqrt()).abs() < 1e-9);
        p.check_consistency().unwrap();
    }

    #[test]
    fn detuning_scales_with_upper_f() {
        let drive = GateDrive::default();
        let p1 = gate_params_for(PI / 2.0, &drive, 1.0).unwrap();
        let p2 = gate_params_for(PI / 2.0, &drive, 2.0).unwrap();
        assert!((p2.detuning / p1.detuning - 1.0 / 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn nonpositive_dtheta_is_rejected() {
        let drive = GateDrive::default();
        assert!(gate_params_for(0.0, &drive, 1.0).is_err());
        assert!(gate_params_for(-1.0, &drive, 1.0).is_err());
    }

    #[test]
    fn tampered_detuning_fails_consistency() {
        let mut p = gate_params_for(PI, &GateDrive::default(), 1.0).unwrap();
        p.detuning *= 1.001;
        assert!(p.check_consistency().is_err());
    }

    #[test]
    fn closed_form_is_diagonal_and_trivial_on_m0() {
        let m = build_manifold(&IonSpec::yb171()).unwrap();
        let p = gate_params_for(PI, &GateDrive::default(), 1.0).unwrap();
        let u = closed_form_gate(&m, &p);
        for i in 0..u.nrows() {
            for j in 0..u.ncols() {
                if i != j {
                    assert_eq!(u[(i, j)], C64::new(0.0, 0.0));
                }
            }
        }
        for label in [LevelLabel::int(1, 0), LevelLabel::int(0, 0)] {
            let k = m.index_of(label).unwrap();
            for r in 0..2 {
                assert!((u[(2 * k + r, 2 * k + r)] - C64::new(1.0, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn conjugated_gate_is_y_rotation() {
        // T† U_g T on the readout equals exp(i dθ F⁺ 2b σ_y / 2) for every level
        let m = build_manifold(&IonSpec::ba137()).unwrap();
        let p = gate_params_for(PI / 2.0, &GateDrive::default(), 2.0).unwrap();
        let u = closed_form_gate(&m, &p);
        let t = pi_half_matrix(0.0);
        let rotations = compose_conditional_rotation(&m, ConditionalRotation::new(PI / 2.0, 0.0));
        for (k, rot) in rotations.iter().enumerate() {
            let diag = Matrix2::new(u[(2 * k, 2 * k)], C64::new(0.0, 0.0), C64::new(0.0, 0.0), u[(2 * k + 1, 2 * k + 1)]);
            let conj = t.adjoint() * diag * t;
            // strip the J_z² phase, common to both readout states
            let phase = C64::from_polar(1.0, -p.jz_squared_phase() * m.levels[k].b_coeff.powi(2));
            let diff = (conj * phase - rot.matrix()).camax();
            assert!(diff < 1e-12, "level {} differs by {diff}", rot.label);
        }
    }

    #[test]
    fn yb_half_turn_rotation_angles() {
        let m = build_manifold(&IonSpec::yb171()).unwrap();
        let rot = compose_conditional_rotation(&m, ConditionalRotation::new(PI, 0.0));
        let by_label = |l: LevelLabel| rot.iter().find(|r| r.label == l).unwrap().theta;
        assert!(by_label(LevelLabel::int(0, 0)).abs() < 1e-12);
        assert!((by_label(LevelLabel::int(1, -1)) + PI).abs() < 1e-12);
        assert!(by_label(LevelLabel::int(1, 0)).abs() < 1e-12);
        assert!((by_label(LevelLabel::int(1, 1)) - PI).abs() < 1e-12);
        let flips: Vec<f64> = [(0, 0), (1, -1), (1, 0), (1, 1)]
            .iter()
            .map(|&(f, mf)| spin_flip_probability(by_label(LevelLabel::int(f, mf))))
            .collect();
        for (p, expect) in flips.iter().zip([0.0, 1.0, 0.0, 1.0]) {
            assert!((p - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn flip_probability_values() {
        assert_eq!(spin_flip_probability(0.0), 0.0);
        assert!((spin_flip_probability(PI) - 1.0).abs() < 1e-15);
        assert!((spin_flip_probability(PI / 2.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn flip_probability_equals_matrix_element() {
        let m = build_manifold(&IonSpec::ba137()).unwrap();
        for (dt, phi) in [(PI, 0.0), (PI / 2.0, PI / 2.0), (0.3, 1.1)] {
            for rot in compose_conditional_rotation(&m, ConditionalRotation::new(dt, phi)) {
                let amp = rot.matrix()[(1, 0)];
                assert!((amp.norm_sqr() - rot.flip_probability()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn pi_half_adjoint_pair() {
        let t = pi_half_matrix(0.0);
        let t_dag = pi_half_matrix(PI);
        assert!((t * t_dag - Matrix2::identity()).camax() < 1e-15);
        let expected = Matrix2::new(
            C64::new(1.0, 0.0),
            C64::new(0.0, -1.0),
            C64::new(0.0, -1.0),
            C64::new(1.0, 0.0),
        ) * C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        assert!((t - expected).camax() < 1e-15);
    }

    #[test]
    fn shelving_transfer_fractions() {
        for (ratio, transfer) in [(1.0, 1.0), (0.9, 0.975_528_258_147_576_8), (0.0, 0.0)] {
            let mut s = SystemState::basis(4, 2, 0);
            let errors = ErrorModel {
                shelving_ratio: ratio,
                ..ErrorModel::ideal()
            };
            shelving_pulse(&mut s, 0, 3, &errors).unwrap();
            assert!((s.level_population(3) - transfer).abs() < 1e-12, "ratio {ratio}");
            assert!((s.level_population(0) - (1.0 - transfer)).abs() < 1e-12);
            assert!((s.norm_sqr() - 1.0).abs() < 1e-14);
        }
        let mut s = SystemState::basis(4, 2, 0);
        assert!(shelving_pulse(&mut s, 1, 1, &ErrorModel::ideal()).is_err());
    }
}

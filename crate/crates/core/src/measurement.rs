//! Binary subspace partitions and projective readout-ion measurement.

use std::collections::BTreeSet;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::atomic::{HyperfineManifold, LevelLabel};
use crate::dynamics::{spin_flip_probability, ConditionalRotation, SystemState};
use crate::error::{Error, Result};

/// Classification tolerance for an ideal low-field manifold.
pub const IDEAL_SPLIT_TOLERANCE: f64 = 1e-9;

/// Projection onto a branch below this probability is refused.
pub const MIN_BRANCH_PROBABILITY: f64 = 1e-300;

/// Split of a level set by one cycle. Levels in `subspace_a` leave the readout
/// in `|0⟩` (outcome 0), levels in `subspace_b` flip it (outcome 1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub subspace_a: BTreeSet<LevelLabel>,
    pub subspace_b: BTreeSet<LevelLabel>,
    pub settings: ConditionalRotation,
}

impl Partition {
    /// Subspace reached by outcome `bit`.
    pub fn branch(&self, bit: u8) -> &BTreeSet<LevelLabel> {
        if bit == 0 {
            &self.subspace_a
        } else {
            &self.subspace_b
        }
    }

    pub fn is_proper(&self) -> bool {
        !self.subspace_a.is_empty() && !self.subspace_b.is_empty()
    }
}

/// Classifies every level of `subspace` by its spin-flip probability.
pub fn predict_partition(
    manifold: &HyperfineManifold,
    subspace: &BTreeSet<LevelLabel>,
    settings: ConditionalRotation,
    tol: f64,
) -> Result<Partition> {
    if subspace.is_empty() {
        return Err(Error::InvalidProtocol("cannot partition an empty subspace".into()));
    }
    let upper_f = manifold.upper_f().value();
    let mut partition = Partition {
        subspace_a: BTreeSet::new(),
        subspace_b: BTreeSet::new(),
        settings,
    };
    for &label in subspace {
        let level = manifold.level(label)?;
        let p = spin_flip_probability(settings.theta(level.b_coeff, upper_f));
        if p < tol {
            partition.subspace_a.insert(label);
        } else if p > 1.0 - tol {
            partition.subspace_b.insert(label);
        } else {
            return Err(Error::InvalidSplit {
                level: label,
                probability: p,
                dtheta: settings.dtheta,
                phi_y: settings.phi_y,
            });
        }
    }
    Ok(partition)
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementEntry {
    pub cycle: usize,
    pub outcome: u8,
    pub p1: f64,
}

impl MeasurementEntry {
    pub fn p0(&self) -> f64 {
        1.0 - self.p1
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MeasurementRecord {
    pub entries: Vec<MeasurementEntry>,
}

impl MeasurementRecord {
    pub fn push(&mut self, outcome: u8, p1: f64) {
        let cycle = self.entries.len();
        self.entries.push(MeasurementEntry { cycle, outcome, p1 });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn outcomes(&self) -> Vec<u8> {
        self.entries.iter().map(|e| e.outcome).collect()
    }

    /// One `{"cycle": k, "outcome": b, "p1": x}` object per line.
    pub fn write_json_lines<W: Write>(&self, mut out: W) -> Result<()> {
        for entry in &self.entries {
            serde_json::to_writer(&mut out, entry)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Projects the readout onto `|outcome⟩` and renormalizes. Returns the
/// pre-measurement probability of that outcome.
pub fn project_readout(state: &mut SystemState, outcome: u8) -> Result<f64> {
    let keep = outcome as usize;
    let prob = state.readout_probability(keep);
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(prob >= MIN_BRANCH_PROBABILITY) {
        return Err(Error::ImpossibleBranch {
            outcome,
            probability: prob,
        });
    }
    let nf = state.fock_dim();
    let scale = 1.0 / prob.sqrt();
    for k in 0..state.levels() {
        let block = state.level_block_mut(k);
        for (r, chunk) in block.chunks_mut(nf).enumerate() {
            if r == keep {
                chunk.iter_mut().for_each(|c| *c *= scale);
            } else {
                chunk.iter_mut().for_each(|c| *c = Default::default());
            }
        }
    }
    Ok(prob)
}

/// Re-prepares the readout in `|0⟩` after a projection onto `|outcome⟩`.
pub fn reset_readout(state: &mut SystemState, outcome: u8) {
    if outcome == 0 {
        return;
    }
    let nf = state.fock_dim();
    for k in 0..state.levels() {
        let block = state.level_block_mut(k);
        let (zero, one) = block.split_at_mut(nf);
        zero.swap_with_slice(one);
    }
}

/// Quantum-jump measurement: draws an outcome with probability `P₁`, projects,
/// renormalizes. Returns `(outcome, P₁)`.
pub fn measure_readout<R: Rng + ?Sized>(state: &mut SystemState, rng: &mut R) -> Result<(u8, f64)> {
    let p1 = state.readout_probability(1).clamp(0.0, 1.0);
    let outcome = u8::from(rng.random::<f64>() < p1);
    project_readout(state, outcome)?;
    Ok((outcome, p1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atomic::{build_manifold, IonSpec};
    use crate::dynamics::{Cycle, ErrorModel, GateBackend, GateDrive};
    use num_complex::Complex64 as C64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn set(labels: &[(i32, i32)]) -> BTreeSet<LevelLabel> {
        labels.iter().map(|&(f, m)| LevelLabel::int(f, m)).collect()
    }

    #[test]
    fn single_level_identity_split() {
        let m = build_manifold(&IonSpec::ba137()).unwrap();
        let c = set(&[(2, 1)]);
        let p = predict_partition(&m, &c, ConditionalRotation::new(0.0, 0.0), IDEAL_SPLIT_TOLERANCE).unwrap();
        assert_eq!(p.subspace_a, c);
        assert!(p.subspace_b.is_empty());
    }

    #[test]
    fn half_flip_is_an_invalid_split() {
        let m = build_manifold(&IonSpec::yb171()).unwrap();
        let c = set(&[(1, 1), (1, 0)]);
        let err = predict_partition(&m, &c, ConditionalRotation::new(PI / 2.0, 0.0), IDEAL_SPLIT_TOLERANCE)
            .unwrap_err();
        assert!(matches!(err, Error::InvalidSplit { level, .. } if level == LevelLabel::int(1, 1)));
    }

    #[test]
    fn superposition_collapses_onto_partition() {
        let m = build_manifold(&IonSpec::yb171()).unwrap();
        let drive = GateDrive::default();
        let cycle = Cycle::new(
            &m,
            ConditionalRotation::new(PI, 0.0),
            &drive,
            &ErrorModel::ideal(),
            GateBackend::ClosedForm,
        )
        .unwrap();
        let k10 = m.index_of(LevelLabel::int(1, 0)).unwrap();
        let k11 = m.index_of(LevelLabel::int(1, 1)).unwrap();
        let mut logic = vec![C64::new(0.0, 0.0); 4];
        logic[k10] = C64::new(1.0, 0.0);
        logic[k11] = C64::new(1.0, 0.0);
        let mut s = SystemState::from_logic(&logic, drive.fock_cutoff).unwrap();
        cycle.apply(&mut s).unwrap();
        assert!((s.readout_probability(1) - 0.5).abs() < 1e-12);

        let mut zero = s.clone();
        project_readout(&mut zero, 0).unwrap();
        assert!((zero.level_population(k10) - 1.0).abs() < 1e-12);
        let mut one = s;
        project_readout(&mut one, 1).unwrap();
        assert!((one.level_population(k11) - 1.0).abs() < 1e-12);
        assert!((one.readout_probability(1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn impossible_branch_is_an_error() {
        let mut s = SystemState::basis(2, 1, 0);
        assert!(matches!(
            project_readout(&mut s, 1),
            Err(Error::ImpossibleBranch { outcome: 1, .. })
        ));
    }

    #[test]
    fn repeated_measurement_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut s = SystemState::basis(2, 1, 1);
        crate::dynamics::apply_pi_half(&mut s, 0.0);
        for _ in 0..50 {
            let mut t = s.clone();
            let (first, _) = measure_readout(&mut t, &mut rng).unwrap();
            let (second, p1) = measure_readout(&mut t, &mut rng).unwrap();
            assert_eq!(first, second);
            assert_eq!(p1, f64::from(first));
        }
    }

    #[test]
    fn reset_moves_readout_to_zero() {
        let mut s = SystemState::basis(2, 1, 1);
        crate::dynamics::apply_pi_half(&mut s, 0.0);
        project_readout(&mut s, 1).unwrap();
        reset_readout(&mut s, 1);
        assert!((s.readout_probability(0) - 1.0).abs() < 1e-15);
        assert!((s.level_population(1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn record_json_lines() {
        let mut rec = MeasurementRecord::default();
        rec.push(1, 0.25);
        rec.push(0, 0.0);
        let mut buf = Vec::new();
        rec.write_json_lines(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "{\"cycle\":0,\"outcome\":1,\"p1\":0.25}\n{\"cycle\":1,\"outcome\":0,\"p1\":0.0}\n"
        );
    }
}

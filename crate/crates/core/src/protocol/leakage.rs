use serde::{Deserialize, Serialize};

use super::runner::{OutcomeSource, RunOptions};
use crate::atomic::{HyperfineManifold, LevelLabel};
use crate::dynamics::{spin_flip_probability, ConditionalRotation, Cycle, SystemState};
use crate::error::{Error, Result};
use crate::measurement::{project_readout, reset_readout, IDEAL_SPLIT_TOLERANCE};

/// Qubit levels and the cycle used to flag population outside them.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakageSettings {
    pub qubit: [LevelLabel; 2],
    pub rotation: ConditionalRotation,
}

impl LeakageSettings {
    /// Both qubit levels must leave the readout untouched and at least one
    /// other level must flip it.
    pub fn validate(&self, manifold: &HyperfineManifold) -> Result<()> {
        if self.qubit[0] == self.qubit[1] {
            return Err(Error::InvalidLeakageSettings("qubit levels must differ".into()));
        }
        let upper_f = manifold.upper_f().value();
        let flip = |l: &crate::atomic::HyperfineLevel| spin_flip_probability(self.rotation.theta(l.b_coeff, upper_f));
        for q in self.qubit {
            let p = flip(manifold.level(q)?);
            if p >= IDEAL_SPLIT_TOLERANCE {
                return Err(Error::InvalidLeakageSettings(format!(
                    "qubit level {q} flips the readout with probability {p:.3e}"
                )));
            }
        }
        let detects = manifold
            .levels
            .iter()
            .filter(|l| !self.qubit.contains(&l.label))
            .any(|l| flip(l) > 1.0 - IDEAL_SPLIT_TOLERANCE);
        if !detects {
            return Err(Error::InvalidLeakageSettings(
                "no level outside the qubit flips the readout".into(),
            ));
        }
        Ok(())
    }
}

/// Compiled leakage-detection cycle.
#[derive(Clone, Debug)]
pub struct LeakageCheck {
    settings: LeakageSettings,
    cycle: Cycle,
}

impl LeakageCheck {
    pub fn new(manifold: &HyperfineManifold, settings: LeakageSettings, options: &RunOptions) -> Result<Self> {
        settings.validate(manifold)?;
        let cycle = Cycle::new(manifold, settings.rotation, &options.drive, &options.errors, options.backend)?;
        Ok(Self { settings, cycle })
    }

    pub fn settings(&self) -> &LeakageSettings {
        &self.settings
    }

    /// Probability that the check raises a flag on `state`.
    pub fn flag_probability(&self, state: &SystemState) -> Result<f64> {
        let mut s = state.clone();
        self.cycle.apply(&mut s)?;
        Ok(s.readout_probability(1))
    }

    /// One cycle and measurement. Outcome 1 raises the flag. The returned
    /// state is collapsed and has its readout reset to `|0⟩`.
    pub fn run<S: OutcomeSource + ?Sized>(&self, state: &SystemState, source: &mut S) -> Result<(bool, SystemState)> {
        let mut s = state.clone();
        self.cycle.apply(&mut s)?;
        let outcome = source.physical(s.readout_probability(1).clamp(0.0, 1.0));
        project_readout(&mut s, outcome)?;
        reset_readout(&mut s, outcome);
        Ok((outcome == 1, s))
    }
}

/// Runs a leakage check on `state`.
pub fn leakage_check<S: OutcomeSource + ?Sized>(
    manifold: &HyperfineManifold,
    state: &SystemState,
    settings: LeakageSettings,
    options: &RunOptions,
    source: &mut S,
) -> Result<(bool, SystemState)> {
    LeakageCheck::new(manifold, settings, options)?.run(state, source)
}

/// Flag probability of a leakage check, without collapsing the state.
pub fn leakage_flag_probability(
    manifold: &HyperfineManifold,
    state: &SystemState,
    settings: LeakageSettings,
    options: &RunOptions,
) -> Result<f64> {
    LeakageCheck::new(manifold, settings, options)?.flag_probability(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atomic::{build_manifold, IonSpec};
    use crate::dynamics::GateBackend;
    use std::f64::consts::PI;

    fn yb_settings() -> LeakageSettings {
        LeakageSettings {
            qubit: [LevelLabel::int(1, 0), LevelLabel::int(0, 0)],
            rotation: ConditionalRotation::new(PI, 0.0),
        }
    }

    #[test]
    fn rotating_qubit_settings_are_rejected() {
        let m = build_manifold(&IonSpec::yb171()).unwrap();
        let bad = LeakageSettings {
            qubit: [LevelLabel::int(1, 1), LevelLabel::int(0, 0)],
            rotation: ConditionalRotation::new(PI, 0.0),
        };
        assert!(matches!(bad.validate(&m), Err(Error::InvalidLeakageSettings(_))));
        let blind = LeakageSettings {
            rotation: ConditionalRotation::new(PI, PI / 2.0),
            ..yb_settings()
        };
        assert!(blind.validate(&m).is_err());
        yb_settings().validate(&m).unwrap();
    }

    #[test]
    fn clean_qubit_is_never_flagged() {
        let m = build_manifold(&IonSpec::yb171()).unwrap();
        let options = RunOptions {
            backend: GateBackend::ClosedForm,
            ..RunOptions::default()
        };
        let mut amps = vec![num_complex::Complex64::new(0.0, 0.0); 4];
        amps[m.index_of(LevelLabel::int(1, 0)).unwrap()] = num_complex::Complex64::new(0.6, 0.0);
        amps[m.index_of(LevelLabel::int(0, 0)).unwrap()] = num_complex::Complex64::new(0.0, 0.8);
        let s = SystemState::from_logic(&amps, 20).unwrap();
        let p = leakage_flag_probability(&m, &s, yb_settings(), &options).unwrap();
        assert!(p.abs() < 1e-15);
    }
}

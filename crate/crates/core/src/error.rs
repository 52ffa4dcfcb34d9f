use thiserror::Error;

use crate::atomic::LevelLabel;

#[derive(Debug, Error)]
pub enum Error {
    /// The ion description is not physical.
    #[error("invalid ion specification: {0}")]
    InvalidIon(String),

    /// A level label that does not exist in the manifold.
    #[error("level {0} is not part of the manifold")]
    UnknownLevel(LevelLabel),

    /// Malformed `F,mF` label text.
    #[error("cannot parse level label {0:?}")]
    LevelSyntax(String),

    /// Stretched states exist only in the upper manifold.
    #[error("m_F = {0} exists only in the upper hyperfine manifold")]
    StretchedLowerManifold(String),

    #[error("invalid gate parameters: {0}")]
    InvalidGateParams(String),

    /// The motional state reached the top of the truncated Fock space.
    #[error(
        "Fock truncation breached: top-two populations reached {population:.3e} \
         with n_max = {n_max}; use n_max >= {suggested}"
    )]
    FockTruncation {
        n_max: usize,
        population: f64,
        suggested: usize,
    },

    #[error("integrator did not converge after {steps} steps (step-doubling deviation {deviation:.3e})")]
    IntegratorTolerance { steps: usize, deviation: f64 },

    /// A projection onto an outcome with vanishing probability.
    #[error("impossible measurement branch: outcome {outcome} has probability {probability:.3e}")]
    ImpossibleBranch { outcome: u8, probability: f64 },

    /// Some level's spin-flip probability is not within tolerance of 0 or 1.
    #[error(
        "invalid split at (dtheta = {dtheta}, phi_y = {phi_y}): level {level} has flip probability {probability:.6}"
    )]
    InvalidSplit {
        level: LevelLabel,
        probability: f64,
        dtheta: f64,
        phi_y: f64,
    },

    #[error("invalid leakage settings: {0}")]
    InvalidLeakageSettings(String),

    #[error("invalid protocol tree: {0}")]
    InvalidProtocol(String),

    /// No tree of bounded depth separates these levels.
    #[error("unsplittable subspace: {}", fmt_levels(.levels))]
    Unsplittable { levels: Vec<LevelLabel> },

    #[error("invalid vote: {0}")]
    InvalidVote(String),

    #[error("invalid sweep configuration: {0}")]
    InvalidSweep(String),

    #[error("IO error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

fn fmt_levels(levels: &[LevelLabel]) -> String {
    let parts: Vec<String> = levels.iter().map(|l| format!("|{l}>")).collect();
    format!("{{{}}}", parts.join(", "))
}

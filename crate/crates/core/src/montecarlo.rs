//! Seeded, parallel trial ensembles over one error-model axis.
//!
//! Each sweep row `(value, vote order, verify)` gets its own ChaCha8 key
//! derived from the master seed and the row index; trial `t` of that row uses
//! stream `t`. Trials run on a rayon pool and are reduced in trial order, so
//! a sweep is bit-reproducible for any thread count.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atomic::{build_manifold, IonSpec, LevelLabel};
use crate::dynamics::{ErrorModel, GateBackend, GateDrive};
use crate::error::{Error, Result};
use crate::protocol::{CompiledProtocol, InitialState, ProtocolTree, RngOutcomes, RunOptions, DEFAULT_SHELVING_RETRIES};

/// CSV header of [`SweepResult::write_csv`].
pub const CSV_COLUMNS: [&str; 7] = ["sweep_value", "vote_order", "mean_error", "std_error", "aborts", "trials", "verify"];

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Gate-mode frequency shift ε, rad/s.
    ModeShift,
    /// Zeeman shift Δ, rad/s.
    ZeemanShift,
    /// Ω′_s / Ω_s.
    ShelvingRatio,
    /// Synthetic readout flip probability.
    ReadoutFlip,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 4] = [Self::ModeShift, Self::ZeemanShift, Self::ShelvingRatio, Self::ReadoutFlip];

    pub fn name(self) -> &'static str {
        match self {
            Self::ModeShift => "mode_shift",
            Self::ZeemanShift => "zeeman_shift",
            Self::ShelvingRatio => "shelving_ratio",
            Self::ReadoutFlip => "readout_flip",
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: ErrorModel, value: f64) -> ErrorModel {
        let mut e = base;
        match self {
            Self::ModeShift => e.mode_shift = value,
            Self::ZeemanShift => e.zeeman_shift = value,
            Self::ShelvingRatio => e.shelving_ratio = value,
            Self::ReadoutFlip => e.readout_flip = value,
        }
        e
    }

    /// True when the axis is a frequency given in rad/s.
    pub fn is_frequency(self) -> bool {
        matches!(self, Self::ModeShift | Self::ZeemanShift)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidSweep(format!("unknown sweep axis {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Name recorded in the metadata.
    pub protocol_name: String,
    #[serde(with = "tree_json")]
    pub protocol: ProtocolTree,
    pub ion: IonSpec,
    pub drive: GateDrive,
    pub backend: GateBackend,
    /// Error model for every axis other than the swept one.
    pub base_errors: ErrorModel,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub vote_orders: Vec<usize>,
    pub verify: Vec<bool>,
    pub trials: usize,
    pub master_seed: u64,
    pub shelving_retries: usize,
    pub split_tolerance: f64,
    /// Worker threads; 0 uses rayon's default.
    #[serde(skip)]
    pub threads: usize,
}

mod tree_json {
    use super::ProtocolTree;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(tree: &ProtocolTree, s: S) -> Result<S::Ok, S::Error> {
        serde::Serialize::serialize(&tree.to_json(), s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ProtocolTree, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        ProtocolTree::from_json(&v).map_err(serde::de::Error::custom)
    }
}

impl SweepConfig {
    /// Sweep with default drive, ideal base errors and one vote order.
    pub fn new(protocol_name: &str, protocol: ProtocolTree, ion: IonSpec, axis: SweepAxis, values: Vec<f64>) -> Self {
        Self {
            protocol_name: protocol_name.to_string(),
            protocol,
            ion,
            drive: GateDrive::default(),
            backend: GateBackend::Integrated,
            base_errors: ErrorModel::ideal(),
            axis,
            values,
            vote_orders: vec![1],
            verify: vec![false],
            trials: 100_000,
            master_seed: 0,
            shelving_retries: DEFAULT_SHELVING_RETRIES,
            split_tolerance: crate::measurement::IDEAL_SPLIT_TOLERANCE,
            threads: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidSweep("trials must be at least 1".into()));
        }
        if self.values.is_empty() {
            return Err(Error::InvalidSweep("sweep value list is empty".into()));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidSweep(format!("sweep value {v} is not finite")));
        }
        if self.vote_orders.is_empty() {
            return Err(Error::InvalidSweep("vote order list is empty".into()));
        }
        if let Some(n) = self.vote_orders.iter().find(|&&n| n % 2 == 0) {
            return Err(Error::InvalidSweep(format!("vote order {n} is not odd")));
        }
        if self.verify.is_empty() {
            return Err(Error::InvalidSweep("verify list is empty".into()));
        }
        for &v in &self.values {
            self.axis.apply(self.base_errors, v).validate()?;
        }
        Ok(())
    }

    /// Rows in output order: value, then vote order, then verify flag.
    pub fn rows(&self) -> Vec<(f64, usize, bool)> {
        let mut rows = Vec::new();
        for &value in &self.values {
            for &n in &self.vote_orders {
                for &verify in &self.verify {
                    rows.push((value, n, verify));
                }
            }
        }
        rows
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub vote_order: usize,
    pub mean_error: f64,
    pub std_error: f64,
    pub aborts: usize,
    pub trials: usize,
    pub verify: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

/// Per-trial errors `1 − 𝒫` of one sweep row, in trial order.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSamples {
    pub errors: Vec<f64>,
    pub aborts: usize,
}

impl PointSamples {
    pub fn mean(&self) -> f64 {
        self.errors.iter().sum::<f64>() / self.errors.len() as f64
    }

    /// Sample standard deviation over `√N`.
    pub fn std_error(&self) -> f64 {
        let n = self.errors.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.mean();
        let var = self.errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    }
}

/// Uniform draw from a level list.
pub fn sample_initial_level<R: Rng + ?Sized>(levels: &[LevelLabel], rng: &mut R) -> Result<LevelLabel> {
    if levels.is_empty() {
        return Err(Error::InvalidSweep("no levels to sample from".into()));
    }
    Ok(levels[rng.random_range(0..levels.len())])
}

/// Generator for `trial` of sweep row `point`.
pub fn trial_rng(master_seed: u64, point: u64, trial: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&point.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(trial);
    rng
}

/// Runs `trials` trials of a compiled protocol, initial levels drawn
/// uniformly from the protocol's identified subspace.
pub fn run_point(compiled: &CompiledProtocol, trials: usize, master_seed: u64, point: u64) -> Result<PointSamples> {
    let levels: Vec<LevelLabel> = compiled.initial_subspace().iter().copied().collect();
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(master_seed, point, t as u64);
            let level = sample_initial_level(&levels, &mut rng)?;
            let r = compiled.run(&InitialState::Level(level), &mut RngOutcomes(&mut rng))?;
            Ok((r.error(), r.aborted))
        })
        .collect::<Result<Vec<(f64, bool)>>>()?;
    Ok(PointSamples {
        aborts: outcomes.iter().filter(|o| o.1).count(),
        errors: outcomes.into_iter().map(|o| o.0).collect(),
    })
}

pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    if config.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::InvalidSweep(format!("cannot build thread pool: {e}")))?;
        pool.install(|| sweep(config))
    } else {
        sweep(config)
    }
}

fn sweep(config: &SweepConfig) -> Result<SweepResult> {
    let manifold = build_manifold(&config.ion)?;
    let mut rows = Vec::new();
    let mut point = 0u64;
    for &value in &config.values {
        let options = RunOptions {
            drive: config.drive,
            errors: config.axis.apply(config.base_errors, value),
            backend: config.backend,
            shelving_retries: config.shelving_retries,
            split_tolerance: config.split_tolerance,
        };
        let base = CompiledProtocol::new(&manifold, &config.protocol, options)?;
        for &n in &config.vote_orders {
            for &verify in &config.verify {
                let tree = config.protocol.clone().with_vote_order(n).with_verify(verify);
                let compiled = base.rebind(&tree)?;
                let samples = run_point(&compiled, config.trials, config.master_seed, point)?;
                log::info!(
                    "{} = {value:e}, n = {n}, verify = {verify}: mean error {:.3e}",
                    config.axis,
                    samples.mean()
                );
                rows.push(SweepRow {
                    sweep_value: value,
                    vote_order: n,
                    mean_error: samples.mean(),
                    std_error: samples.std_error(),
                    aborts: samples.aborts,
                    trials: config.trials,
                    verify,
                });
                point += 1;
            }
        }
    }
    Ok(SweepResult { rows })
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let rows = r.deserialize().collect::<std::result::Result<Vec<SweepRow>, _>>()?;
        Ok(Self { rows })
    }

    pub fn total_aborts(&self) -> usize {
        self.rows.iter().map(|r| r.aborts).sum()
    }

    pub fn total_trials(&self) -> usize {
        self.rows.iter().map(|r| r.trials).sum()
    }
}

#[derive(Serialize)]
struct Metadata<'a> {
    generator: &'a str,
    version: &'a str,
    columns: &'a [&'a str],
    config: &'a SweepConfig,
}

/// Writes the result CSV and a `<csv>.json` sidecar with the resolved configuration.
pub fn write_outputs(config: &SweepConfig, result: &SweepResult, csv_path: &Path) -> Result<std::path::PathBuf> {
    if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    result.write_csv(std::fs::File::create(csv_path)?)?;
    let meta_path = csv_path.with_extension("json");
    let meta = Metadata {
        generator: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        columns: &CSV_COLUMNS,
        config,
    };
    let mut f = std::fs::File::create(&meta_path)?;
    serde_json::to_writer_pretty(&mut f, &meta)?;
    f.write_all(b"\n")?;
    Ok(meta_path)
}

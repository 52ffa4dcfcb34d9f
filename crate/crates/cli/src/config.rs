//! TOML run configuration.
//!
//! Frequencies are written in Hz (keys ending in `_hz`) and converted to
//! rad/s here. Unknown keys are rejected.

use std::f64::consts::TAU;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use toml::Spanned;

use qnd_sim::atomic::{HalfInt, IonSpec, GAUSS};
use qnd_sim::dynamics::{ErrorModel, GateBackend, GateDrive, DEFAULT_FOCK_CUTOFF};
use qnd_sim::montecarlo::{SweepAxis, SweepConfig};
use qnd_sim::protocol::{builtin_protocol, ProtocolTree, DEFAULT_SHELVING_RETRIES};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    run: RawRun,
    #[serde(default)]
    ion: RawIon,
    #[serde(default)]
    gate: RawGate,
    #[serde(default)]
    errors: RawErrors,
    sweep: RawSweep,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    protocol: Spanned<String>,
    output: Option<String>,
    #[serde(default = "default_trials")]
    trials: Spanned<usize>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    threads: usize,
    #[serde(default)]
    backend: GateBackend,
    #[serde(default = "default_retries")]
    shelving_retries: usize,
    #[serde(default = "default_abort_fraction")]
    max_abort_fraction: Spanned<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIon {
    preset: Option<Spanned<String>>,
    nuclear_spin: Option<Spanned<f64>>,
    hyperfine_hz: Option<f64>,
    lande_gj: Option<f64>,
    #[serde(default)]
    field_gauss: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGate {
    #[serde(default = "default_rabi_hz")]
    rabi_hz: f64,
    #[serde(default = "default_participation")]
    c_logic: f64,
    #[serde(default = "default_participation")]
    c_readout: f64,
    #[serde(default = "default_cutoff")]
    fock_cutoff: usize,
}

impl Default for RawGate {
    fn default() -> Self {
        Self {
            rabi_hz: default_rabi_hz(),
            c_logic: default_participation(),
            c_readout: default_participation(),
            fock_cutoff: default_cutoff(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawErrors {
    #[serde(default)]
    mode_shift_hz: f64,
    #[serde(default)]
    zeeman_shift_hz: f64,
    #[serde(default = "one")]
    shelving_ratio: f64,
    #[serde(default)]
    readout_flip: f64,
}

impl Default for RawErrors {
    fn default() -> Self {
        Self {
            mode_shift_hz: 0.0,
            zeeman_shift_hz: 0.0,
            shelving_ratio: 1.0,
            readout_flip: 0.0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    axis: Spanned<String>,
    values: Spanned<Vec<f64>>,
    #[serde(default = "default_vote_orders")]
    vote_orders: Spanned<Vec<usize>>,
    #[serde(default = "default_verify")]
    verify: Spanned<Vec<bool>>,
}

fn default_trials() -> Spanned<usize> {
    Spanned::new(0..0, 100_000)
}
fn default_retries() -> usize {
    DEFAULT_SHELVING_RETRIES
}
fn default_abort_fraction() -> Spanned<f64> {
    Spanned::new(0..0, 0.05)
}
fn default_rabi_hz() -> f64 {
    GateDrive::default().rabi / TAU
}
fn default_participation() -> f64 {
    std::f64::consts::FRAC_1_SQRT_2
}
fn default_cutoff() -> usize {
    DEFAULT_FOCK_CUTOFF
}
fn one() -> f64 {
    1.0
}
fn default_vote_orders() -> Spanned<Vec<usize>> {
    Spanned::new(0..0, vec![1])
}
fn default_verify() -> Spanned<Vec<bool>> {
    Spanned::new(0..0, vec![false])
}

/// A validated `simulate` configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub sweep: SweepConfig,
    pub output: Option<PathBuf>,
    pub max_abort_fraction: f64,
}

struct Source<'a> {
    path: &'a Path,
    text: &'a str,
}

impl Source<'_> {
    fn line_of(&self, span: &Range<usize>) -> usize {
        self.text[..span.start.min(self.text.len())].matches('\n').count() + 1
    }

    fn err<T>(&self, span: &Range<usize>, msg: impl std::fmt::Display) -> Result<T, CliError> {
        if span.is_empty() {
            Err(CliError::Config(format!("{}: {msg}", self.path.display())))
        } else {
            Err(CliError::Config(format!("{}:{}: {msg}", self.path.display(), self.line_of(span))))
        }
    }
}

/// Ion preset by name, with its quantization field in gauss.
pub fn preset_ion(name: &str, field_gauss: f64) -> Result<IonSpec, CliError> {
    IonSpec::preset(name)
        .map(|ion| ion.with_field(field_gauss * GAUSS))
        .ok_or_else(|| CliError::Config(format!("unknown ion preset {name:?} (expected yb171 or ba137)")))
}

fn build_ion(raw: &RawIon, src: &Source) -> Result<IonSpec, CliError> {
    let custom = raw.nuclear_spin.is_some() || raw.hyperfine_hz.is_some() || raw.lande_gj.is_some();
    let ion = match (&raw.preset, custom) {
        (Some(p), false) => preset_ion(p.get_ref(), raw.field_gauss).or_else(|e| src.err(&p.span(), e))?,
        (Some(p), true) => return src.err(&p.span(), "give either `preset` or explicit ion parameters, not both"),
        (None, true) => {
            let (Some(spin), Some(hf), Some(gj)) = (&raw.nuclear_spin, raw.hyperfine_hz, raw.lande_gj) else {
                return src.err(&(0..0), "[ion] needs nuclear_spin, hyperfine_hz and lande_gj together");
            };
            let Some(nuclear_spin) = HalfInt::from_f64(*spin.get_ref()) else {
                return src.err(&spin.span(), format!("nuclear_spin {} is not a half-integer", spin.get_ref()));
            };
            IonSpec {
                nuclear_spin,
                hyperfine_constant: TAU * hf,
                lande_gj: gj,
                quantization_field: raw.field_gauss * GAUSS,
            }
        }
        (None, false) => IonSpec::yb171().with_field(raw.field_gauss * GAUSS),
    };
    ion.validate().or_else(|e| src.err(&(0..0), e))?;
    Ok(ion)
}

/// Built-in protocol name or a JSON file, resolved relative to `base`.
pub fn load_protocol(name: &str, base: &Path) -> Result<(String, ProtocolTree), CliError> {
    if let Some(tree) = builtin_protocol(name) {
        return Ok((name.to_string(), tree));
    }
    let path = base.join(name);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Config(format!("protocol {name:?} is not built in and cannot be read: {e}")))?;
    let tree = text
        .parse::<ProtocolTree>()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok((name.to_string(), tree))
}

/// Parses and validates `text`; relative protocol paths resolve against the config directory.
pub fn parse_config(path: &Path, text: &str) -> Result<RunConfig, CliError> {
    let src = Source { path, text };
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let at = e.span().map(|s| format!(":{}", src.line_of(&s))).unwrap_or_default();
        CliError::Config(format!("{}{at}: {}", path.display(), e.message()))
    })?;

    let ion = build_ion(&raw.ion, &src)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let (name, tree) = load_protocol(raw.run.protocol.get_ref(), base).or_else(|e| src.err(&raw.run.protocol.span(), e))?;

    let axis: SweepAxis = raw
        .sweep
        .axis
        .get_ref()
        .parse()
        .or_else(|e| src.err(&raw.sweep.axis.span(), e))?;
    let scale = if axis.is_frequency() { TAU } else { 1.0 };
    let values: Vec<f64> = raw.sweep.values.get_ref().iter().map(|v| v * scale).collect();
    if values.is_empty() {
        return src.err(&raw.sweep.values.span(), "sweep value list is empty");
    }
    if values.iter().any(|v| !v.is_finite()) {
        return src.err(&raw.sweep.values.span(), "sweep values must be finite");
    }
    let orders = raw.sweep.vote_orders.get_ref();
    if orders.is_empty() || orders.iter().any(|n| n % 2 == 0) {
        return src.err(&raw.sweep.vote_orders.span(), "vote orders must be a non-empty list of odd integers");
    }
    if raw.sweep.verify.get_ref().is_empty() {
        return src.err(&raw.sweep.verify.span(), "verify list is empty");
    }
    if *raw.run.trials.get_ref() == 0 {
        return src.err(&raw.run.trials.span(), "trials must be at least 1");
    }
    let max_abort_fraction = *raw.run.max_abort_fraction.get_ref();
    if !(0.0..=1.0).contains(&max_abort_fraction) {
        return src.err(&raw.run.max_abort_fraction.span(), "max_abort_fraction must lie in [0, 1]");
    }

    let mut sweep = SweepConfig::new(&name, tree, ion, axis, values);
    sweep.drive = GateDrive {
        rabi: TAU * raw.gate.rabi_hz,
        c_logic: raw.gate.c_logic,
        c_readout: raw.gate.c_readout,
        fock_cutoff: raw.gate.fock_cutoff,
    };
    sweep.backend = raw.run.backend;
    sweep.base_errors = ErrorModel {
        mode_shift: TAU * raw.errors.mode_shift_hz,
        zeeman_shift: TAU * raw.errors.zeeman_shift_hz,
        shelving_ratio: raw.errors.shelving_ratio,
        readout_flip: raw.errors.readout_flip,
    };
    sweep.vote_orders = orders.clone();
    sweep.verify = raw.sweep.verify.get_ref().clone();
    sweep.trials = *raw.run.trials.get_ref();
    sweep.master_seed = raw.run.seed;
    sweep.shelving_retries = raw.run.shelving_retries;
    sweep.threads = raw.run.threads;
    sweep.validate().or_else(|e| src.err(&(0..0), e))?;

    Ok(RunConfig {
        sweep,
        output: raw.run.output.map(PathBuf::from),
        max_abort_fraction,
    })
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_config(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[run]
protocol = "yb171_init"
trials = 10

[sweep]
axis = "mode_shift"
values = [0.0, 100.0]
"#;

    #[test]
    fn frequencies_become_angular() {
        let c = parse_config(Path::new("x.cfg"), MINIMAL).unwrap();
        assert_eq!(c.sweep.values, vec![0.0, TAU * 100.0]);
        assert!((c.sweep.drive.rabi - TAU * 5e3).abs() < 1e-9);
        assert_eq!(c.sweep.trials, 10);
    }

    #[test]
    fn ratio_axis_is_not_scaled() {
        let text = MINIMAL.replace("mode_shift", "shelving_ratio").replace("0.0, 100.0", "0.9, 1.0");
        let c = parse_config(Path::new("x.cfg"), &text).unwrap();
        assert_eq!(c.sweep.values, vec![0.9, 1.0]);
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = MINIMAL.replace("trials = 10", "trials = 10\ncolour = 3");
        let e = parse_config(Path::new("x.cfg"), &text).unwrap_err().to_string();
        assert!(e.starts_with("x.cfg:5:"), "{e}");
        assert!(e.contains("colour"), "{e}");
    }

    #[test]
    fn empty_values_report_line() {
        let text = MINIMAL.replace("[0.0, 100.0]", "[]");
        let e = parse_config(Path::new("x.cfg"), &text).unwrap_err().to_string();
        assert!(e.starts_with("x.cfg:8:"), "{e}");
    }

    #[test]
    fn even_vote_order_rejected() {
        let text = format!("{MINIMAL}vote_orders = [2]\n");
        let e = parse_config(Path::new("x.cfg"), &text).unwrap_err().to_string();
        assert!(e.contains("odd"), "{e}");
    }

    #[test]
    fn custom_ion_matches_preset() {
        let text = format!(
            "{MINIMAL}\n[ion]\nnuclear_spin = 0.5\nhyperfine_hz = 12.642812118e9\nlande_gj = 2.0026\n"
        );
        let c = parse_config(Path::new("x.cfg"), &text).unwrap();
        assert_eq!(c.sweep.ion, IonSpec::yb171());
    }
}

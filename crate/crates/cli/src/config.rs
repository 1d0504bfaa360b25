use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use nvspin::analysis::Window;
use nvspin::sequences::{Distribution, EchoMode, EnsembleSpec, Illumination, Noise, ReadoutModel, Sampling, ZenoOptions};
use nvspin::SpinSystemParams;

use crate::CliError;

/// Prefix of the comment lines that carry the effective configuration in
/// every output file.
pub const CONFIG_PREFIX: &str = "# config: ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeChoice {
    #[default]
    Paper3,
    Extended5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FitModel {
    Exp,
    #[default]
    DampedCos,
    EchoT2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RabiConfig {
    pub omega1: f64,
    pub detuning: f64,
    pub t_max: f64,
    pub n_points: usize,
    pub illumination: Illumination,
}

impl Default for RabiConfig {
    fn default() -> Self {
        Self { omega1: 16.0, detuning: 0.0, t_max: 2.0, n_points: 401, illumination: Illumination::Pulsed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HahnConfig {
    pub omega1: f64,
    pub tau: f64,
    pub tau_prime_max: f64,
    pub n_points: usize,
    pub detuning: f64,
    pub final_phase: f64,
    pub ideal_pulses: bool,
}

impl Default for HahnConfig {
    fn default() -> Self {
        Self { omega1: 16.0, tau: 0.3, tau_prime_max: 0.6, n_points: 61, detuning: 0.0, final_phase: 0.0, ideal_pulses: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EchoDecayConfig {
    pub omega1: f64,
    pub tau_max: f64,
    pub n_points: usize,
    pub mode: EchoMode,
    pub ideal_pulses: bool,
    pub addressed_ms: i32,
}

impl Default for EchoDecayConfig {
    fn default() -> Self {
        Self { omega1: 40.0, tau_max: 2.0, n_points: 400, mode: EchoMode::ZeroField, ideal_pulses: false, addressed_ms: -1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    /// Field magnitudes (mT) from `from` to `to` in `n` steps.
    pub from: f64,
    pub to: f64,
    pub n: usize,
    #[serde(default = "default_direction")]
    pub direction: [f64; 3],
}

fn default_direction() -> [f64; 3] {
    nvspin::eseem::MatchingOptions::default().direction
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EseemConfig {
    pub ms_a: i32,
    pub ms_b: i32,
    pub tau_max: f64,
    pub n_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanConfig>,
}

impl Default for EseemConfig {
    fn default() -> Self {
        Self { ms_a: 0, ms_b: -1, tau_max: 5.0, n_points: 501, scan: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZenoConfig {
    pub omega1: f64,
    pub optical_rabi: Vec<f64>,
    pub samples_per_period: f64,
    pub damping_times: f64,
    pub min_periods: f64,
    pub max_points: usize,
}

impl Default for ZenoConfig {
    fn default() -> Self {
        let o = ZenoOptions::default();
        Self {
            omega1: 16.0,
            optical_rabi: (0..7).map(|k| f64::from(1u32 << k)).collect(),
            samples_per_period: o.samples_per_period,
            damping_times: o.damping_times,
            min_periods: o.min_periods,
            max_points: o.max_points,
        }
    }
}

impl ZenoConfig {
    pub fn options(&self) -> ZenoOptions {
        ZenoOptions {
            samples_per_period: self.samples_per_period,
            damping_times: self.damping_times,
            min_periods: self.min_periods,
            max_points: self.max_points,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    pub model: FitModel,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residuals: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    pub window: Window,
    pub zero_pad: bool,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self { input: None, window: Window::Hann, zero_pad: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Rabi(RabiConfig),
    Hahn(HahnConfig),
    EchoDecay(EchoDecayConfig),
    Eseem(EseemConfig),
    Zeno(ZenoConfig),
    Fit(FitConfig),
    Spectrum(SpectrumConfig),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Rabi(_) => "rabi",
            Experiment::Hahn(_) => "hahn",
            Experiment::EchoDecay(_) => "echo-decay",
            Experiment::Eseem(_) => "eseem",
            Experiment::Zeno(_) => "zeno",
            Experiment::Fit(_) => "fit",
            Experiment::Spectrum(_) => "spectrum",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMethod {
    #[default]
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub distribution: Distribution,
    pub sampling: SamplingMethod,
    pub order: usize,
    pub samples: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            distribution: Distribution::Gaussian { sigma: EnsembleSpec::DEFAULT_SIGMA },
            sampling: SamplingMethod::Quadrature,
            order: EnsembleSpec::DEFAULT_ORDER,
            samples: 1000,
        }
    }
}

impl EnsembleConfig {
    pub fn spec(&self, seed: u64) -> EnsembleSpec {
        let sampling = match self.sampling {
            SamplingMethod::Quadrature => Sampling::Quadrature { order: self.order },
            SamplingMethod::MonteCarlo => Sampling::MonteCarlo { samples: self.samples, seed: ensemble_seed(seed) },
        };
        EnsembleSpec { distribution: self.distribution.clone(), sampling }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    #[default]
    None,
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadoutConfig {
    pub cycles: f64,
    pub efficiency: f64,
    pub noise: NoiseKind,
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        let m = ReadoutModel::default();
        Self { cycles: m.cycles, efficiency: m.efficiency, noise: NoiseKind::None }
    }
}

impl ReadoutConfig {
    pub fn model(&self, seed: u64) -> ReadoutModel {
        let noise = match self.noise {
            NoiseKind::None => Noise::None,
            NoiseKind::Poisson => Noise::Poisson { seed },
        };
        ReadoutModel { cycles: self.cycles, efficiency: self.efficiency, noise }
    }
}

/// Seed of the Monte Carlo ensemble stream, distinct from the readout
/// noise stream which uses the run seed itself.
pub fn ensemble_seed(seed: u64) -> u64 {
    seed.wrapping_add(1)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root of every random stream; absent means 0.
    pub seed: u64,
    pub scheme: SchemeChoice,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub params: SpinSystemParams,
    pub ensemble: EnsembleConfig,
    pub readout: ReadoutConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
}

impl RunConfig {
    /// The configuration as TOML, without the output path.
    pub fn to_toml(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        toml::to_string(&c).expect("config serializes")
    }

    /// One `# config: ` line per TOML line.
    pub fn embedded(&self) -> Vec<String> {
        self.to_toml().lines().map(|l| format!("config: {l}")).collect()
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |p| before.len() - p - 1) + 1;
    (line, col)
}

/// Line of the first `key = ...` assignment in a TOML text.
pub fn locate_key(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|k| k + 1)
}

/// TOML text of a config file, or the embedded config of an output file.
fn config_text(raw: &str) -> String {
    if raw.lines().any(|l| l.starts_with(CONFIG_PREFIX)) {
        raw.lines().filter_map(|l| l.strip_prefix(CONFIG_PREFIX)).map(|l| format!("{l}\n")).collect()
    } else {
        raw.to_string()
    }
}

pub fn parse_config(raw: &str, origin: &str) -> Result<(RunConfig, String), CliError> {
    let text = config_text(raw);
    match toml::from_str::<RunConfig>(&text) {
        Ok(cfg) => Ok((cfg, text)),
        Err(e) => {
            let msg = e.message().trim().to_string();
            Err(CliError::config(match e.span() {
                Some(span) => {
                    let (l, c) = line_col(&text, span.start);
                    format!("{origin}:{l}:{c}: {msg}")
                }
                None => format!("{origin}: {msg}"),
            }))
        }
    }
}

pub fn load_config(path: &Path) -> Result<(RunConfig, String), CliError> {
    let raw = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    parse_config(&raw, &path.display().to_string())
}

fn check(ok: bool, key: &str, msg: String) -> Result<(), (String, String)> {
    if ok {
        Ok(())
    } else {
        Err((key.to_string(), msg))
    }
}

fn positive(key: &str, v: f64) -> Result<(), (String, String)> {
    check(v > 0.0 && v.is_finite(), key, format!("{key} must be > 0 (got {v})"))
}

fn points(key: &str, n: usize) -> Result<(), (String, String)> {
    check(n >= 2, key, format!("{key} must be >= 2 (got {n})"))
}

impl RunConfig {
    /// Semantic checks; the error names the offending key.
    fn check(&self) -> Result<(), (String, String)> {
        if let Err(e) = self.params.validate() {
            let msg = match e {
                nvspin::Error::InvalidArgument(m) => m,
                other => other.to_string(),
            };
            let key = msg.split_whitespace().next().unwrap_or("params").to_string();
            return Err((key, msg));
        }
        positive("cycles", self.readout.cycles)?;
        check(
            self.readout.efficiency > 0.0 && self.readout.efficiency <= 1.0,
            "efficiency",
            format!("efficiency must be in (0, 1] (got {})", self.readout.efficiency),
        )?;
        match &self.experiment {
            Some(Experiment::Rabi(r)) => {
                positive("omega1", r.omega1)?;
                positive("t_max", r.t_max)?;
                points("n_points", r.n_points)?;
            }
            Some(Experiment::Hahn(h)) => {
                positive("omega1", h.omega1)?;
                check(h.tau >= 0.0, "tau", format!("tau must be >= 0 (got {})", h.tau))?;
                positive("tau_prime_max", h.tau_prime_max)?;
                points("n_points", h.n_points)?;
            }
            Some(Experiment::EchoDecay(e)) => {
                positive("omega1", e.omega1)?;
                positive("tau_max", e.tau_max)?;
                points("n_points", e.n_points)?;
            }
            Some(Experiment::Eseem(e)) => {
                positive("tau_max", e.tau_max)?;
                points("n_points", e.n_points)?;
                if let Some(s) = &e.scan {
                    check(s.n >= 1 && s.from >= 0.0 && s.to >= s.from, "scan", "scan needs 0 <= from <= to and n >= 1".into())?;
                }
            }
            Some(Experiment::Zeno(z)) => {
                positive("omega1", z.omega1)?;
                check(!z.optical_rabi.is_empty(), "optical_rabi", "optical_rabi must not be empty".into())?;
                check(
                    z.optical_rabi.iter().all(|v| *v >= 0.0),
                    "optical_rabi",
                    "optical_rabi values must be >= 0".into(),
                )?;
                positive("samples_per_period", z.samples_per_period)?;
            }
            Some(Experiment::Fit(_)) | Some(Experiment::Spectrum(_)) | None => {}
        }
        Ok(())
    }

    pub fn validate(&self, text: &str, origin: &str) -> Result<(), CliError> {
        self.check().map_err(|(key, msg)| {
            CliError::config(match locate_key(text, &key) {
                Some(line) => format!("{origin}:{line}: {msg}"),
                None => format!("{origin}: {msg}"),
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_rabi_config() {
        let (cfg, _) = parse_config("[experiment.rabi]\nomega1 = 16\n", "c.toml").unwrap();
        assert_eq!(cfg.seed, 0);
        match cfg.experiment {
            Some(Experiment::Rabi(r)) => {
                assert_eq!(r.omega1, 16.0);
                assert_eq!(r.n_points, RabiConfig::default().n_points);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_line_anchored() {
        let err = parse_config("seed = 1\n[experiment.rabi]\nomega_2 = 3\n", "c.toml").unwrap_err();
        assert!(err.message.starts_with("c.toml:3:"), "{}", err.message);
        assert!(err.message.contains("omega_2"));
        assert_eq!(err.code, 2);
    }

    #[test]
    fn validation_names_field_and_line() {
        let text = "[params]\nt1 = 100\nt2 = -1\n";
        let (cfg, text) = parse_config(text, "c.toml").unwrap();
        let err = cfg.validate(&text, "c.toml").unwrap_err();
        assert!(err.message.starts_with("c.toml:3: t2"), "{}", err.message);
    }

    #[test]
    fn effective_config_round_trips() {
        let text = "seed = 7\nscheme = \"extended5\"\n[params]\nt2 = 1.5\n[ensemble]\ndistribution = { kind = \"gaussian\", sigma = 2.0 }\n[experiment.hahn]\ntau = 0.4\n";
        let (cfg, _) = parse_config(text, "c.toml").unwrap();
        let embedded: String = cfg.embedded().iter().map(|l| format!("# {l}\n")).collect();
        let (back, _) = parse_config(&format!("{embedded}x,signal\n0,1\n"), "out.csv").unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn one_experiment_block_only() {
        assert!(parse_config("[experiment.rabi]\n[experiment.hahn]\n", "c.toml").is_err());
    }
}

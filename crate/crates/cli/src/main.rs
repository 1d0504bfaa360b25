//! `nvspin`: run simulations and analyses from a TOML configuration and
//! write deterministic CSV output.

mod config;
mod run;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{
    load_config, EchoDecayConfig, EseemConfig, Experiment, FitConfig, FitModel, HahnConfig, RabiConfig, RunConfig,
    SpectrumConfig, ZenoConfig,
};
use nvspin::analysis::Window;
use run::{dispatch, Target};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_FIT: u8 = 4;

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: String) -> Self {
        Self { code: EXIT_CONFIG, message }
    }

    pub fn numerical(message: String) -> Self {
        Self { code: EXIT_NUMERICAL, message }
    }

    /// A fit that could not be started counts as non-convergence; `main`
    /// downgrades it to a numerical failure without `--strict-fit`.
    pub fn fit(e: nvspin::Error) -> Self {
        match e {
            nvspin::Error::FitInit(_) => Self { code: EXIT_FIT, message: e.to_string() },
            other => other.into(),
        }
    }
}

impl From<nvspin::Error> for CliError {
    fn from(e: nvspin::Error) -> Self {
        use nvspin::Error::*;
        match e {
            InvalidArgument(_) | DimensionMismatch { .. } | Parse { .. } => Self::config(e.to_string()),
            _ => Self::numerical(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "nvspin", version, about = "NV-center spin dynamics simulator and signal analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration (or a CSV written by nvspin, whose embedded
    /// configuration is reused).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Suppress warnings.
    #[arg(long, global = true)]
    quiet: bool,
    /// Exit with status 4 when a fit does not converge.
    #[arg(long, global = true)]
    strict_fit: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Nutation trace versus MW pulse length.
    Rabi,
    /// Hahn echo versus the second free-evolution time τ′.
    Hahn,
    /// Echo amplitude versus τ (τ′ = τ).
    EchoDecay,
    /// Echo envelope modulation from the nuclear sub-Hamiltonians, or a
    /// depth-versus-field scan.
    Eseem,
    /// Nutation damping and steady fluorescence versus laser Rabi frequency.
    Zeno,
    /// Fit a model to a CSV time series.
    Fit(FitArgs),
    /// Detrended FFT of a CSV time series.
    Spectrum(SpectrumArgs),
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Input CSV (`x,signal[,stderr]`).
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Option<FitModel>,
    /// Also write the fit residuals to this CSV.
    #[arg(long, value_name = "PATH")]
    residuals: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SpectrumArgs {
    /// Input CSV (`x,signal[,stderr]`).
    input: Option<PathBuf>,
    #[arg(long, value_parser = ["hann", "none"])]
    window: Option<String>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Rabi => "rabi",
            Command::Hahn => "hahn",
            Command::EchoDecay => "echo-decay",
            Command::Eseem => "eseem",
            Command::Zeno => "zeno",
            Command::Fit(_) => "fit",
            Command::Spectrum(_) => "spectrum",
        }
    }

    fn default_experiment(&self) -> Experiment {
        match self {
            Command::Rabi => Experiment::Rabi(RabiConfig::default()),
            Command::Hahn => Experiment::Hahn(HahnConfig::default()),
            Command::EchoDecay => Experiment::EchoDecay(EchoDecayConfig::default()),
            Command::Eseem => Experiment::Eseem(EseemConfig::default()),
            Command::Zeno => Experiment::Zeno(ZenoConfig::default()),
            Command::Fit(_) => Experiment::Fit(FitConfig::default()),
            Command::Spectrum(_) => Experiment::Spectrum(SpectrumConfig::default()),
        }
    }

    fn apply_overrides(&self, exp: &mut Experiment) {
        match (self, exp) {
            (Command::Fit(a), Experiment::Fit(f)) => {
                if a.input.is_some() {
                    f.input.clone_from(&a.input);
                }
                if let Some(m) = a.model {
                    f.model = m;
                }
                if a.residuals.is_some() {
                    f.residuals.clone_from(&a.residuals);
                }
            }
            (Command::Spectrum(a), Experiment::Spectrum(s)) => {
                if a.input.is_some() {
                    s.input.clone_from(&a.input);
                }
                match a.window.as_deref() {
                    Some("hann") => s.window = Window::Hann,
                    Some("none") => s.window = Window::None,
                    _ => {}
                }
            }
            _ => {}
        }
    }
}

fn sibling(primary: &Path, suffix: &str) -> PathBuf {
    let stem = primary.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    primary.with_file_name(format!("{stem}.{suffix}"))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::numerical(format!("{}: cannot write: {e}", path.display())))
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let (mut cfg, text, origin) = match &cli.config {
        Some(p) => {
            let (cfg, text) = load_config(p)?;
            (cfg, text, p.display().to_string())
        }
        None => (RunConfig::default(), String::new(), "<defaults>".to_string()),
    };
    let mut exp = match cfg.experiment.take() {
        Some(e) if e.name() != cli.command.name() => {
            return Err(CliError::config(format!(
                "{origin}: config holds a `{}` experiment block but the subcommand is `{}`",
                e.name(),
                cli.command.name()
            )))
        }
        Some(e) => e,
        None => cli.command.default_experiment(),
    };
    cli.command.apply_overrides(&mut exp);
    cfg.experiment = Some(exp);
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.out.is_some() {
        cfg.out.clone_from(&cli.out);
    }
    cfg.validate(&text, &origin)?;
    Ok(cfg)
}

fn main_inner(cli: &Cli) -> Result<u8, CliError> {
    let cfg = resolve(cli)?;
    let outputs = dispatch(&cfg)?;
    let mut warnings = outputs.warnings;
    match &cfg.out {
        Some(path) => write(path, &outputs.primary)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(outputs.primary.as_bytes())
                .map_err(|e| CliError::numerical(format!("stdout: {e}")))?;
        }
    }
    for (target, contents) in &outputs.extra {
        match (target, &cfg.out) {
            (Target::Path(p), _) => write(p, contents)?,
            (Target::Sibling(s), Some(primary)) => write(&sibling(primary, s), contents)?,
            (Target::Sibling(s), None) => warnings.push(format!("secondary output `{s}` needs --out; not written")),
        }
    }
    if !cli.quiet {
        for w in &warnings {
            eprintln!("nvspin: warning: {w}");
        }
    }
    Ok(if cli.strict_fit && outputs.fit_failed { EXIT_FIT } else { 0 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("nvspin: error: {e}");
            let code = if e.code == EXIT_FIT && !cli.strict_fit { EXIT_NUMERICAL } else { e.code };
            ExitCode::from(code)
        }
    }
}

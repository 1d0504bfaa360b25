use std::path::{Path, PathBuf};

use nvspin::analysis::{detrend_fft, dominant_peak, fit_damped_cos, fit_exp, t2_from_echo_decay, FitResult, TimeSeries};
use nvspin::eseem::{matching_scan, modulation_from_params, MatchingOptions};
use nvspin::io::{spectrum_to_csv, timeseries_from_csv, timeseries_to_csv};
use nvspin::liouville::{build_extended_scheme, build_paper_scheme, LevelScheme};
use nvspin::sequences::{
    apply_readout_model, run_echo_decay, run_hahn, run_rabi, run_zeno_sweep, EchoDecayOptions, HahnOptions,
};

use crate::config::{Experiment, FitModel, RunConfig, SchemeChoice};
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// Next to the primary output, `<stem>.<suffix>`.
    Sibling(String),
    Path(PathBuf),
}

/// Everything a run produces, before anything is written.
#[derive(Debug, Default)]
pub struct Outputs {
    pub primary: String,
    pub extra: Vec<(Target, String)>,
    pub warnings: Vec<String>,
    pub fit_failed: bool,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

fn scheme(cfg: &RunConfig) -> Result<LevelScheme, CliError> {
    Ok(match cfg.scheme {
        SchemeChoice::Paper3 => build_paper_scheme(&cfg.params)?,
        SchemeChoice::Extended5 => build_extended_scheme(&cfg.params)?,
    })
}

fn read_series(path: &Path) -> Result<TimeSeries, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    timeseries_from_csv(&text).map_err(|e| match e {
        nvspin::Error::Parse { line, message } => CliError::config(format!("{}:{line}: {message}", path.display())),
        other => CliError::config(format!("{}: {other}", path.display())),
    })
}

fn comments(lines: &[String]) -> String {
    lines.iter().map(|l| format!("# {l}\n")).collect()
}

fn fit(ts: &TimeSeries, model: FitModel) -> nvspin::Result<FitResult> {
    match model {
        FitModel::Exp => fit_exp(ts),
        FitModel::DampedCos => fit_damped_cos(ts),
        FitModel::EchoT2 => t2_from_echo_decay(ts),
    }
}

/// Run the experiment block of a validated config.
pub fn dispatch(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let experiment = cfg.experiment.as_ref().expect("experiment resolved before dispatch");
    let mut preamble = vec![format!("nvspin {} {}", env!("CARGO_PKG_VERSION"), experiment.name())];
    preamble.extend(cfg.embedded());
    let mut out = Outputs::default();
    let readout = cfg.readout.model(cfg.seed);
    match experiment {
        Experiment::Rabi(r) => {
            let ts = run_rabi(&scheme(cfg)?, r.omega1, r.detuning, r.t_max, r.n_points, r.illumination)?;
            out.primary = timeseries_to_csv(&apply_readout_model(&ts, &readout)?, &preamble);
        }
        Experiment::Hahn(h) => {
            let tp = linspace(0.0, h.tau_prime_max, h.n_points);
            let opts = HahnOptions { detuning: h.detuning, final_phase: h.final_phase, ideal_pulses: h.ideal_pulses };
            let ts = run_hahn(&scheme(cfg)?, h.omega1, h.tau, &tp, &cfg.ensemble.spec(cfg.seed), &opts)?;
            out.primary = timeseries_to_csv(&apply_readout_model(&ts, &readout)?, &preamble);
        }
        Experiment::EchoDecay(e) => {
            let taus = linspace(0.0, e.tau_max, e.n_points);
            let opts = EchoDecayOptions { ideal_pulses: e.ideal_pulses, addressed_ms: e.addressed_ms };
            let ts = run_echo_decay(&cfg.params, e.omega1, &taus, e.mode, &opts)?;
            out.primary = timeseries_to_csv(&apply_readout_model(&ts, &readout)?, &preamble);
        }
        Experiment::Eseem(e) => match &e.scan {
            Some(s) => {
                let fields = linspace(s.from, s.to, s.n);
                let opts = MatchingOptions { direction: s.direction, ms_a: e.ms_a, ms_b: e.ms_b, tau_max: e.tau_max, n_tau: e.n_points };
                let scan = matching_scan(&cfg.params, &fields, &opts)?;
                let ts = TimeSeries::new(fields, scan.points.iter().map(|p| p.1).collect())?
                    .with_meta("experiment", "matching-scan")
                    .with_meta("argmax_field_mt", scan.argmax_field)
                    .with_meta("matching_field_mt", scan.matching_field);
                out.warnings.extend(scan.warnings);
                out.primary = timeseries_to_csv(&ts, &preamble);
            }
            None => {
                let taus = linspace(0.0, e.tau_max, e.n_points);
                let (pair, res) = modulation_from_params(&cfg.params, e.ms_a, e.ms_b, &taus)?;
                let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(";");
                let ts = TimeSeries::new(taus, res.envelope.clone())?
                    .with_meta("experiment", "eseem")
                    .with_meta("depth", res.depth)
                    .with_meta("freqs_a_mhz", join(&res.freqs_a))
                    .with_meta("freqs_b_mhz", join(&res.freqs_b))
                    .with_meta("secular_mixing", pair.mixing);
                out.warnings.extend(pair.warning);
                out.primary = timeseries_to_csv(&ts, &preamble);
            }
        },
        Experiment::Zeno(z) => {
            let mut omegas = z.optical_rabi.clone();
            omegas.sort_by(f64::total_cmp);
            let points = run_zeno_sweep(&scheme(cfg)?, z.omega1, &omegas, &z.options())?;
            let (mut x, mut tau, mut xf, mut fl, mut flagged) = (vec![], vec![], vec![], vec![], vec![]);
            for p in &points {
                match &p.flag {
                    Some(f) => {
                        out.warnings.push(format!("optical_rabi={}: {f}", p.optical_rabi));
                        flagged.push(p.optical_rabi.to_string());
                    }
                    None => {
                        x.push(p.optical_rabi);
                        tau.push(p.damping_time);
                    }
                }
                if p.steady_fluorescence.is_finite() {
                    xf.push(p.optical_rabi);
                    fl.push(p.steady_fluorescence);
                }
            }
            out.fit_failed = !flagged.is_empty();
            let damping = TimeSeries::new(x, tau)?
                .with_meta("experiment", "zeno")
                .with_meta("quantity", "damping_time_us")
                .with_meta("omega1", z.omega1)
                .with_meta("flagged", flagged.join(";"));
            let fluor = TimeSeries::new(xf, fl)?
                .with_meta("experiment", "zeno")
                .with_meta("quantity", "steady_fluorescence_per_us")
                .with_meta("omega1", z.omega1);
            out.primary = timeseries_to_csv(&damping, &preamble);
            out.extra.push((Target::Sibling("fluorescence.csv".into()), timeseries_to_csv(&fluor, &preamble)));
        }
        Experiment::Fit(f) => {
            let input = f.input.as_ref().ok_or_else(|| CliError::config("fit: no input file given".into()))?;
            let ts = read_series(input)?;
            let res = fit(&ts, f.model).map_err(CliError::fit)?;
            if !res.converged {
                out.warnings.push(format!("fit did not converge after {} iterations", res.iterations));
                out.fit_failed = true;
            }
            if res.degenerate {
                out.warnings.push("fit is degenerate: some parameters are not identifiable".into());
            }
            out.primary = format!("{}{}", comments(&preamble), res.to_text());
            if let Some(path) = &f.residuals {
                let r: Vec<f64> = ts.t.iter().zip(&ts.y).map(|(&t, &y)| y - res.evaluate(t).unwrap_or(f64::NAN)).collect();
                let rs = TimeSeries::new(ts.t.clone(), r)?.with_meta("quantity", "residual").with_meta("model", &res.model);
                out.extra.push((Target::Path(path.clone()), timeseries_to_csv(&rs, &preamble)));
            }
        }
        Experiment::Spectrum(s) => {
            let input = s.input.as_ref().ok_or_else(|| CliError::config("spectrum: no input file given".into()))?;
            let ts = read_series(input)?;
            let spec = detrend_fft(&ts, s.window, s.zero_pad)?;
            let mut meta = vec![
                ("bin_width_mhz".to_string(), spec.bin_width.to_string()),
                ("dt_us".to_string(), spec.dt.to_string()),
                ("parseval_error".to_string(), spec.parseval_error().to_string()),
            ];
            if let Some(pk) = dominant_peak(&spec, 0.0) {
                meta.push(("dominant_peak_mhz".into(), pk.frequency.to_string()));
            }
            out.primary = spectrum_to_csv(&spec, &preamble, &meta);
        }
    }
    Ok(out)
}

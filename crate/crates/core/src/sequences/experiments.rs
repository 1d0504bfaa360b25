use std::f64::consts::PI;

use nalgebra::Schur;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Compiler, EnsembleSpec, Segment};
use crate::analysis::{fit_damped_cos, TimeSeries};
use crate::error::{invalid, Error, Result};
use crate::linalg::{compensated_sum, identity, CMatrix, CVector};
use crate::liouville::{
    build_hyperfine_scheme, build_triplet_scheme, steady_state, DensityMatrix, LaserSetting, LevelScheme, Liouvillian,
    MwSetting,
};
use crate::params::SpinSystemParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", tag = "mode", deny_unknown_fields)]
pub enum Illumination {
    /// Dark MW pulse of variable length, then a laser readout.
    #[default]
    Pulsed,
    /// Laser on during the MW; the signal is the instantaneous
    /// fluorescence relative to a saturated emitter.
    Continuous { rabi: f64 },
}

fn time_axis(t_max: f64, n_points: usize) -> Result<(Vec<f64>, f64)> {
    if !(t_max > 0.0) || !t_max.is_finite() {
        return invalid(format!("t_max must be > 0 (got {t_max})"));
    }
    if n_points < 2 {
        return invalid("need at least 2 points");
    }
    let h = t_max / (n_points - 1) as f64;
    Ok(((0..n_points).map(|k| k as f64 * h).collect(), h))
}

fn readout_segment(scheme: &LevelScheme) -> Segment {
    if scheme.has_laser() {
        Segment::laser_readout(scheme.readout_window, scheme.readout_rabi)
    } else {
        Segment::observe()
    }
}

fn checked(v: &CVector) -> Result<DensityMatrix> {
    let rho = DensityMatrix::from_vec(v);
    rho.check()?;
    Ok(rho)
}

/// Nutation trace: signal versus MW duration from the optically pumped
/// state, sampled at `n_points` equally spaced times in `[0, t_max]`.
pub fn run_rabi(
    scheme: &LevelScheme,
    omega1: f64,
    detuning: f64,
    t_max: f64,
    n_points: usize,
    illumination: Illumination,
) -> Result<TimeSeries> {
    let (t, h) = time_axis(t_max, n_points)?;
    let mw = MwSetting::new(omega1, detuning, 0.0);
    let mut comp = Compiler::new(scheme, detuning, 0.0);
    let mut v = scheme.pumped_state().to_vec();
    let mut y = Vec::with_capacity(n_points);
    match illumination {
        Illumination::Pulsed => {
            let step = comp.segment(&Segment::mw(h, mw))?;
            let ro = comp.segment(&readout_segment(scheme))?;
            let r = ro.readout.clone().expect("readout segment");
            for _ in 0..n_points {
                checked(&v)?;
                y.push(r.dot(&v).re / ro.reference);
                v = &step.propagator * v;
            }
        }
        Illumination::Continuous { rabi } => {
            if !scheme.has_laser() {
                return Err(Error::InvalidArgument(format!("scheme {} has no optical transition", scheme.name)));
            }
            let laser = LaserSetting { rabi, detuning: 0.0 };
            let seg = Segment { duration: h, mw: Some(mw), laser: Some(laser), ..Default::default() };
            let step = comp.segment(&seg)?;
            let sat = 0.5 * scheme.fluorescence.iter().copied().fold(0.0, f64::max);
            for _ in 0..n_points {
                let rho = checked(&v)?;
                y.push(scheme.fluorescence_rate(&rho) / sat);
                v = &step.propagator * v;
            }
        }
    }
    let mut ts = TimeSeries::new(t, y)?
        .with_meta("experiment", "rabi")
        .with_meta("scheme", &scheme.name)
        .with_meta("omega1", omega1)
        .with_meta("detuning", detuning)
        .with_meta("t_max", t_max)
        .with_meta("n_points", n_points);
    match illumination {
        Illumination::Pulsed => {
            ts = ts.with_meta("illumination", "pulsed").with_meta("readout_window", scheme.readout_window);
        }
        Illumination::Continuous { rabi } => {
            ts = ts.with_meta("illumination", "continuous").with_meta("laser_rabi", rabi);
        }
    }
    Ok(ts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HahnOptions {
    /// Static offset of the spin transition from the carrier (MHz).
    pub detuning: f64,
    /// Phase of the final 90° pulse (rad).
    pub final_phase: f64,
    /// Replace the finite pulses by instantaneous rotations.
    pub ideal_pulses: bool,
}

impl Default for HahnOptions {
    fn default() -> Self {
        Self { detuning: 0.0, final_phase: 0.0, ideal_pulses: false }
    }
}

fn pulses(omega1: f64, det: f64, final_phase: f64, ideal: bool) -> Result<[Segment; 3]> {
    if ideal {
        return Ok([
            Segment::ideal_pulse(PI / 2.0, 0.0, det),
            Segment::ideal_pulse(PI, 0.0, det),
            Segment::ideal_pulse(PI / 2.0, final_phase, det),
        ]);
    }
    Ok([
        Segment::pulse(PI / 2.0, MwSetting::new(omega1, det, 0.0))?,
        Segment::pulse(PI, MwSetting::new(omega1, det, 0.0))?,
        Segment::pulse(PI / 2.0, MwSetting::new(omega1, det, final_phase))?,
    ])
}

/// 90°–τ–180°–τ′–90° followed by readout, averaged over the ensemble;
/// one sample per entry of `tau_primes`.
pub fn run_hahn(
    scheme: &LevelScheme,
    omega1: f64,
    tau: f64,
    tau_primes: &[f64],
    ensemble: &EnsembleSpec,
    opts: &HahnOptions,
) -> Result<TimeSeries> {
    if !(tau >= 0.0) || tau_primes.iter().any(|t| !(*t >= 0.0)) {
        return invalid("echo delays must be >= 0");
    }
    let members = ensemble.members()?;
    let traces: Vec<Vec<f64>> = members
        .par_iter()
        .map(|&(delta, _)| {
            let det = opts.detuning + delta;
            let mut comp = Compiler::new(scheme, det, 0.0);
            let [p90, p180, p90f] = pulses(omega1, det, opts.final_phase, opts.ideal_pulses)?;
            let mut v = scheme.pumped_state().to_vec();
            for seg in [p90, Segment::delay(tau), p180] {
                v = &comp.segment(&seg)?.propagator * v;
            }
            let last = comp.segment(&p90f)?;
            let ro = comp.segment(&readout_segment(scheme))?;
            let r = ro.readout.clone().expect("readout segment");
            tau_primes
                .iter()
                .map(|&tp| {
                    let w = &last.propagator * (&comp.segment(&Segment::delay(tp))?.propagator * &v);
                    checked(&w)?;
                    Ok(r.dot(&w).re / ro.reference)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let y: Vec<f64> = (0..tau_primes.len())
        .map(|j| compensated_sum(members.iter().zip(&traces).map(|((_, w), tr)| w * tr[j])))
        .collect();
    Ok(TimeSeries::new(tau_primes.to_vec(), y)?
        .with_meta("experiment", "hahn")
        .with_meta("scheme", &scheme.name)
        .with_meta("omega1", omega1)
        .with_meta("tau", tau)
        .with_meta("detuning", opts.detuning)
        .with_meta("final_phase", opts.final_phase)
        .with_meta("ideal_pulses", opts.ideal_pulses)
        .with_meta("ensemble_members", members.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum EchoMode {
    /// Strain-split triplet with both transitions inside the MW band.
    ZeroField,
    /// Electron ⊗ ¹⁴N in a static field `b0` (mT).
    AppliedField { b0: [f64; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EchoDecayOptions {
    pub ideal_pulses: bool,
    /// Electron level addressed in applied-field mode.
    pub addressed_ms: i32,
}

impl Default for EchoDecayOptions {
    fn default() -> Self {
        Self { ideal_pulses: false, addressed_ms: -1 }
    }
}

/// Build the scheme `run_echo_decay` uses for `mode`.
pub fn echo_scheme(params: &SpinSystemParams, omega1: f64, mode: EchoMode, addressed_ms: i32) -> Result<LevelScheme> {
    match mode {
        EchoMode::ZeroField => build_triplet_scheme(&SpinSystemParams { b0: [0.0; 3], mw_rabi: omega1, ..params.clone() }),
        EchoMode::AppliedField { b0 } => {
            build_hyperfine_scheme(&SpinSystemParams { b0, mw_rabi: omega1, ..params.clone() }, addressed_ms)
        }
    }
}

/// `exp(𝓛τ)` for every τ; uniform ascending grids are stepped with one
/// repeated propagator.
pub(crate) fn free_propagators(l: &Liouvillian, taus: &[f64]) -> Vec<CMatrix> {
    let n = taus.len();
    let uniform = n > 2 && {
        let h = (taus[n - 1] - taus[0]) / (n - 1) as f64;
        h > 0.0 && taus.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-12 * taus[n - 1].abs().max(h))
    };
    if !uniform {
        return taus.iter().map(|&t| l.propagator(t)).collect();
    }
    let h = (taus[n - 1] - taus[0]) / (n - 1) as f64;
    let step = l.propagator(h);
    let mut out = Vec::with_capacity(n);
    out.push(if taus[0] == 0.0 { identity(l.matrix().nrows()) } else { l.propagator(taus[0]) });
    for k in 1..n {
        out.push(&step * &out[k - 1]);
    }
    out
}

/// Echo amplitude of 90°–τ–180°–τ–90° versus τ.
pub fn run_echo_decay(
    params: &SpinSystemParams,
    omega1: f64,
    taus: &[f64],
    mode: EchoMode,
    opts: &EchoDecayOptions,
) -> Result<TimeSeries> {
    if taus.iter().any(|t| !(*t >= 0.0)) {
        return invalid("echo delays must be >= 0");
    }
    let scheme = echo_scheme(params, omega1, mode, opts.addressed_ms)?;
    let mut comp = Compiler::new(&scheme, 0.0, 0.0);
    let [p90, p180, _] = pulses(omega1, 0.0, 0.0, opts.ideal_pulses)?;
    let (p90, p180) = (comp.segment(&p90)?, comp.segment(&p180)?);
    let ro = comp.segment(&Segment::observe())?;
    let r = ro.readout.clone().expect("readout segment");
    let l = Liouvillian::new(&comp.hamiltonian(&Segment::delay(1.0))?, &scheme.dissipator)?;
    let v1 = &p90.propagator * scheme.pumped_state().to_vec();
    let y = free_propagators(&l, taus)
        .par_iter()
        .map(|pt| {
            let w = &p90.propagator * (pt * (&p180.propagator * (pt * &v1)));
            checked(&w)?;
            Ok(r.dot(&w).re / ro.reference)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut ts = TimeSeries::new(taus.to_vec(), y)?
        .with_meta("experiment", "echo-decay")
        .with_meta("scheme", &scheme.name)
        .with_meta("omega1", omega1)
        .with_meta("ideal_pulses", opts.ideal_pulses);
    ts = match mode {
        EchoMode::ZeroField => ts.with_meta("mode", "zero-field"),
        EchoMode::AppliedField { b0 } => ts
            .with_meta("mode", "applied-field")
            .with_meta("b0", format!("{},{},{}", b0[0], b0[1], b0[2]))
            .with_meta("addressed_ms", opts.addressed_ms),
    };
    Ok(ts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZenoOptions {
    pub samples_per_period: f64,
    /// Trace length in units of the expected damping time.
    pub damping_times: f64,
    pub min_periods: f64,
    pub max_points: usize,
}

impl Default for ZenoOptions {
    fn default() -> Self {
        Self { samples_per_period: 16.0, damping_times: 4.0, min_periods: 8.0, max_points: 16384 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZenoPoint {
    pub optical_rabi: f64,
    /// Fitted nutation damping time (μs); NaN when flagged.
    pub damping_time: f64,
    pub frequency: f64,
    pub steady_fluorescence: f64,
    /// Damping rate of the nutation eigenmode of the Liouvillian.
    pub eigen_rate: Option<f64>,
    pub flag: Option<String>,
}

impl ZenoPoint {
    pub fn damping_rate(&self) -> f64 {
        1.0 / self.damping_time
    }
}

/// Decay rate of the Liouvillian eigenmode oscillating closest to the
/// nutation frequency.
pub(crate) fn nutation_eigen_rate(l: &Liouvillian, omega1: f64) -> Option<f64> {
    let (_, t) = Schur::new(l.matrix().clone()).unpack();
    let target = 2.0 * PI * omega1;
    (0..t.nrows())
        .map(|k| t[(k, k)])
        .filter(|z| z.im > 0.5 * target && z.im < 1.5 * target)
        .min_by(|a, b| (a.im - target).abs().total_cmp(&(b.im - target).abs()))
        .map(|z| -z.re)
}

/// Nutation damping and steady fluorescence versus optical Rabi frequency.
/// Ω = 0 uses the dark (pulsed) trace; fit failures are flagged and the
/// sweep continues.
pub fn run_zeno_sweep(scheme: &LevelScheme, omega1: f64, optical_rabi: &[f64], opts: &ZenoOptions) -> Result<Vec<ZenoPoint>> {
    if !scheme.has_laser() {
        return invalid(format!("scheme {} has no optical transition", scheme.name));
    }
    if !(omega1 > 0.0) {
        return invalid(format!("omega1 must be > 0 (got {omega1})"));
    }
    let gamma_max = scheme.fluorescence.iter().copied().fold(0.0, f64::max);
    optical_rabi
        .par_iter()
        .map(|&omega| {
            if !(omega >= 0.0) {
                return invalid(format!("optical Rabi frequency must be >= 0 (got {omega})"));
            }
            let mw = MwSetting::new(omega1, 0.0, 0.0);
            let laser = (omega > 0.0).then_some(LaserSetting { rabi: omega, detuning: 0.0 });
            let h = scheme.rotating_hamiltonian(0.0, 0.0, Some(mw), laser)?;
            let l = Liouvillian::new(&h, &scheme.dissipator)?;
            let eigen_rate = nutation_eigen_rate(&l, omega1);
            let rate_guess = eigen_rate.filter(|r| *r > 0.0).unwrap_or(omega1 / opts.min_periods);
            let max_t = opts.max_points as f64 / (omega1 * opts.samples_per_period);
            let t_max = (opts.damping_times / rate_guess).max(opts.min_periods / omega1).min(max_t);
            let n = ((t_max * omega1 * opts.samples_per_period).ceil() as usize + 1).min(opts.max_points);
            let illumination = match laser {
                Some(_) => Illumination::Continuous { rabi: omega },
                None => Illumination::Pulsed,
            };
            let trace = run_rabi(scheme, omega1, 0.0, t_max, n, illumination)?;
            // skip the optical turn-on transient
            let skip = if laser.is_some() && gamma_max > 0.0 { 3.0 / gamma_max } else { 0.0 };
            let k0 = trace.t.iter().position(|&t| t >= skip).unwrap_or(0);
            let trimmed = TimeSeries::new(trace.t[k0..].to_vec(), trace.y[k0..].to_vec())?;
            let steady = match steady_state(&h, &scheme.dissipator) {
                Ok(rho) => scheme.fluorescence_rate(&rho),
                Err(_) => f64::NAN,
            };
            let mut point = ZenoPoint {
                optical_rabi: omega,
                damping_time: f64::NAN,
                frequency: f64::NAN,
                steady_fluorescence: steady,
                eigen_rate,
                flag: None,
            };
            match fit_damped_cos(&trimmed) {
                Ok(fit) if fit.converged && !fit.degenerate => {
                    point.damping_time = fit.value("tau_d").unwrap_or(f64::NAN);
                    point.frequency = fit.value("f").unwrap_or(f64::NAN);
                }
                Ok(fit) => point.flag = Some(format!("fit converged={} degenerate={}", fit.converged, fit.degenerate)),
                Err(e) => point.flag = Some(e.to_string()),
            }
            Ok(point)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::fit_damped_cos;
    use crate::liouville::build_paper_scheme;
    use crate::sequences::Distribution;

    fn closed() -> SpinSystemParams {
        SpinSystemParams { t1: f64::INFINITY, t2: f64::INFINITY, ..Default::default() }
    }

    #[test]
    fn pulsed_rabi_matches_closed_form() {
        let s = build_paper_scheme(&closed()).unwrap();
        let ts = run_rabi(&s, 16.0, 5.0, 0.5, 101, Illumination::Pulsed).unwrap();
        let w = 16.0f64.hypot(5.0);
        for (t, y) in ts.t.iter().zip(&ts.y) {
            let r3 = (25.0 + 256.0 * (2.0 * PI * w * t).cos()) / (w * w);
            assert!((y - (1.0 + r3) / 2.0).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn pulsed_rabi_frequency_fit() {
        let s = build_paper_scheme(&SpinSystemParams::default()).unwrap();
        let ts = run_rabi(&s, 16.0, 0.0, 2.0, 401, Illumination::Pulsed).unwrap();
        let fit = fit_damped_cos(&ts).unwrap();
        assert!((fit.value("f").unwrap() - 16.0).abs() < 0.08);
    }

    #[test]
    fn continuous_needs_laser() {
        let s = build_triplet_scheme(&SpinSystemParams::default()).unwrap();
        assert!(run_rabi(&s, 16.0, 0.0, 1.0, 10, Illumination::Continuous { rabi: 5.0 }).is_err());
    }

    #[test]
    fn closed_echo_without_detuning_is_flat() {
        let s = build_paper_scheme(&closed()).unwrap();
        let tp: Vec<f64> = (0..20).map(|k| 0.05 * k as f64).collect();
        let ts = run_hahn(&s, 16.0, 0.3, &tp, &EnsembleSpec::single(0.0), &HahnOptions::default()).unwrap();
        assert!(ts.y.iter().all(|y| (y - 1.0).abs() < 1e-9), "{:?}", ts.y);
    }

    #[test]
    fn echo_forms_at_tau() {
        let s = build_paper_scheme(&closed()).unwrap();
        let tp: Vec<f64> = (0..61).map(|k| 0.01 * k as f64).collect();
        let ts = run_hahn(&s, 16.0, 0.3, &tp, &EnsembleSpec::gaussian(5.0), &HahnOptions::default()).unwrap();
        let k = ts.argmax().unwrap();
        assert!((ts.t[k] - 0.3).abs() <= 0.01 + 1e-12, "peak at {}", ts.t[k]);
    }

    #[test]
    fn final_phase_inverts_echo() {
        let s = build_paper_scheme(&closed()).unwrap();
        let tp: Vec<f64> = (0..31).map(|k| 0.02 * k as f64).collect();
        let ens = EnsembleSpec { distribution: Distribution::Gaussian { sigma: 3.0 }, ..Default::default() };
        let opts = HahnOptions { ideal_pulses: true, ..Default::default() };
        let a = run_hahn(&s, 16.0, 0.3, &tp, &ens, &opts).unwrap();
        let b = run_hahn(&s, 16.0, 0.3, &tp, &ens, &HahnOptions { final_phase: PI, ..opts }).unwrap();
        for (x, y) in a.y.iter().zip(&b.y) {
            assert!((x + y - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ladder_matches_direct_exponentials() {
        let s = build_paper_scheme(&SpinSystemParams::default()).unwrap();
        let h = s.rotating_hamiltonian(1.0, 0.0, Some(MwSetting::new(5.0, 1.0, 0.0)), None).unwrap();
        let l = Liouvillian::new(&h, &s.dissipator).unwrap();
        let taus: Vec<f64> = (0..50).map(|k| 0.1 + 0.02 * k as f64).collect();
        let lad = free_propagators(&l, &taus);
        for (p, &t) in lad.iter().zip(&taus) {
            assert!((p - l.propagator(t)).norm() < 1e-10);
        }
    }

    #[test]
    fn zero_field_echo_beats_at_twice_strain() {
        let p = SpinSystemParams { e_strain: 8.5, ..Default::default() };
        let taus: Vec<f64> = (0..400).map(|k| 0.005 * k as f64).collect();
        let ts = run_echo_decay(&p, 40.0, &taus, EchoMode::ZeroField, &EchoDecayOptions::default()).unwrap();
        let sp = crate::analysis::detrend_fft(&ts, crate::analysis::Window::Hann, true).unwrap();
        let pk = crate::analysis::dominant_peak(&sp, 0.0).unwrap();
        assert!((pk.frequency - 17.0).abs() <= sp.bin_width, "{}", pk.frequency);
    }

    #[test]
    fn nutation_eigenmode_rate() {
        // two-level Torrey limit: rate (1/T1 + 1/T2)/2
        let p = SpinSystemParams { t1: 10.0, t2: 2.0, ..Default::default() };
        let s = build_paper_scheme(&p).unwrap();
        let h = s.rotating_hamiltonian(0.0, 0.0, Some(MwSetting::new(16.0, 0.0, 0.0)), None).unwrap();
        let r = nutation_eigen_rate(&Liouvillian::new(&h, &s.dissipator).unwrap(), 16.0).unwrap();
        assert!((r - 0.5 * (0.1 + 0.5)).abs() < 1e-4, "{r}");
    }
}

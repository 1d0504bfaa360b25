//! Fitting, spectra and relaxation-time extraction for simulated traces.

pub mod fft;
mod fit;
mod spectrum;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use fft::{dft_direct, fft};
pub use fit::{
    damped_cos_model, exp_model, fit_damped_cos, fit_exp, nelder_mead, FitParam, FitResult, SimplexOptions, SimplexResult,
};
pub use spectrum::{detrend_fft, dominant_peak, peak_pick, Peak, Spectrum, Window};

/// Real samples on a nondecreasing time axis (μs), with ordered metadata.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TimeSeries {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(default)]
    pub stderr: Option<Vec<f64>>,
    #[serde(default)]
    pub metadata: Vec<(String, String)>,
}

impl TimeSeries {
    pub fn new(t: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if t.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: t.len(), got: y.len() });
        }
        if t.iter().chain(&y).any(|v| !v.is_finite()) {
            return invalid("time series contains non-finite values");
        }
        if t.windows(2).any(|w| w[1] < w[0]) {
            return invalid("sample times must be nondecreasing");
        }
        Ok(Self { t, y, stderr: None, metadata: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.push((key.to_string(), value.to_string()));
        self
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Sample spacing, if the axis is strictly increasing and uniform to
    /// 1e-9 relative.
    pub fn uniform_step(&self) -> Result<f64> {
        let n = self.t.len();
        if n < 2 {
            return Err(Error::NonUniformSampling("fewer than two samples".into()));
        }
        let dt = (self.t[n - 1] - self.t[0]) / (n - 1) as f64;
        if dt <= 0.0 {
            return Err(Error::NonUniformSampling("time axis is not increasing".into()));
        }
        for (k, w) in self.t.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(self.t[n - 1].abs()) {
                return Err(Error::NonUniformSampling(format!("step {k} is {} but mean step is {dt}", w[1] - w[0])));
            }
        }
        Ok(dt)
    }

    /// Index of the largest sample.
    pub fn argmax(&self) -> Option<usize> {
        (0..self.len()).max_by(|&a, &b| self.y[a].total_cmp(&self.y[b]))
    }

    pub fn argmin(&self) -> Option<usize> {
        (0..self.len()).min_by(|&a, &b| self.y[a].total_cmp(&self.y[b]))
    }
}

/// Modulation depth above which the envelope is fitted through local maxima.
pub const ENVELOPE_DEPTH_THRESHOLD: f64 = 0.5;

/// T₂ from an echo-amplitude decay. The exponential is fitted to all
/// points unless the residual modulation is deep, in which case only the
/// local maxima (the envelope) are used.
pub fn t2_from_echo_decay(ts: &TimeSeries) -> Result<FitResult> {
    let first = fit_exp(ts)?;
    let p: Vec<f64> = first.params.iter().map(|p| p.value).collect();
    let depth = if first.degenerate || p[0] == 0.0 {
        0.0
    } else {
        let resid: Vec<f64> = ts.t.iter().zip(&ts.y).map(|(&t, &y)| y - exp_model(&p, t)).collect();
        let lo = resid.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = resid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let a0 = (p[0] * (-ts.t[0] / p[1]).exp()).abs();
        (hi - lo) / (2.0 * a0)
    };
    let (mut fit, method) = if depth > ENVELOPE_DEPTH_THRESHOLD {
        let y = &ts.y;
        let idx: Vec<usize> = (0..y.len())
            .filter(|&k| (k == 0 || y[k] >= y[k - 1]) && (k + 1 == y.len() || y[k] > y[k + 1]))
            .collect();
        if idx.len() >= 8 {
            let env = TimeSeries::new(idx.iter().map(|&k| ts.t[k]).collect(), idx.iter().map(|&k| y[k]).collect())?;
            (fit_exp(&env)?, "local-maxima")
        } else {
            (first, "all-points")
        }
    } else {
        (first, "all-points")
    };
    fit.model = "echo-t2".into();
    if let Some(tp) = fit.params.iter_mut().find(|p| p.name == "T") {
        tp.name = "T2".into();
    }
    fit.note("envelope_method", method);
    fit.note("modulation_depth", depth);
    Ok(fit)
}

/// Coherence time from a resonant nutation envelope. The nutation decay
/// rate averages the population and coherence decay rates,
/// `1/τ_d = (1/T₁ + 1/T₂)/2`.
pub fn t2_from_nutation(tau_d: f64, t1: f64) -> Result<f64> {
    let inv = 2.0 / tau_d - crate::params::rate(t1);
    if !(tau_d > 0.0) || inv <= 0.0 {
        return invalid(format!("envelope time {tau_d} is inconsistent with t1={t1}"));
    }
    Ok(1.0 / inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::PI;

    fn series(n: usize, dt: f64, mut f: impl FnMut(f64) -> f64) -> TimeSeries {
        let t: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        let y = t.iter().map(|&x| f(x)).collect();
        TimeSeries::new(t, y).unwrap()
    }

    #[test]
    fn rejects_mismatched_and_decreasing() {
        assert!(TimeSeries::new(vec![0.0, 1.0], vec![0.0]).is_err());
        assert!(TimeSeries::new(vec![1.0, 0.0], vec![0.0, 0.0]).is_err());
        assert!(TimeSeries::new(vec![0.0, 0.0], vec![0.0, 0.0]).unwrap().uniform_step().is_err());
    }

    #[test]
    fn t2_pure_exponential() {
        let r = t2_from_echo_decay(&series(150, 0.04, |t| (-t / 2.0).exp())).unwrap();
        assert!((r.value("T2").unwrap() - 2.0).abs() < 1e-6);
        assert!(r.to_text().contains("envelope_method=all-points"));
    }

    #[test]
    fn t2_with_shallow_modulation() {
        let r = t2_from_echo_decay(&series(600, 0.01, |t| (-t / 2.0).exp() * (1.0 + 0.3 * (2.0 * PI * 17.0 * t).cos()))).unwrap();
        assert!((r.value("T2").unwrap() - 2.0).abs() < 0.1, "{}", r.to_text());
    }

    #[test]
    fn t2_with_deep_modulation_uses_envelope() {
        let r = t2_from_echo_decay(&series(800, 0.005, |t| (-t / 2.0).exp() * (2.0 * PI * 17.0 * t).cos().powi(2))).unwrap();
        assert!(r.to_text().contains("envelope_method=local-maxima"), "{}", r.to_text());
        assert!((r.value("T2").unwrap() - 2.0).abs() < 0.1, "{}", r.to_text());
    }

    #[test]
    fn t2_noisy_short() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let r = t2_from_echo_decay(&series(120, 0.05, |t| (-t / 1.5).exp() + noise.sample(&mut rng))).unwrap();
        assert!((r.value("T2").unwrap() - 1.5).abs() < 0.15);
        assert!(r.stderr("T2").unwrap() > 0.0);
    }

    #[test]
    fn nutation_conversion() {
        assert!((t2_from_nutation(4.0, f64::INFINITY).unwrap() - 2.0).abs() < 1e-15);
        let (t1, t2) = (10.0, 2.0);
        let tau_d = 2.0 / (1.0 / t1 + 1.0 / t2);
        assert!((t2_from_nutation(tau_d, t1).unwrap() - t2).abs() < 1e-12);
        assert!(t2_from_nutation(1.0, 0.4).is_err());
    }
}

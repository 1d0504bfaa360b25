use serde::{Deserialize, Serialize};

use super::fft::fft;
use super::fit::{exp_model, fit_exp, FitResult};
use super::TimeSeries;
use crate::error::{Error, Result};
use crate::linalg::{c, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    None,
    Hann,
}

/// One-sided amplitude spectrum of a detrended series.
///
/// `full` holds all N bins of `Δt·FFT`, so that
/// `Σ|full|²·Δf = Σ|x|²·Δt` for the transformed samples `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub freq: Vec<f64>,
    pub magnitude: Vec<f64>,
    pub bin_width: f64,
    pub dt: f64,
    pub full: Vec<C64>,
    /// `Σ|x|²·Δt` of the windowed, detrended samples.
    pub time_energy: f64,
    pub trend: FitResult,
}

impl Spectrum {
    pub fn frequency_energy(&self) -> f64 {
        self.full.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.bin_width
    }

    /// Relative mismatch between time- and frequency-domain energy.
    pub fn parseval_error(&self) -> f64 {
        let et = self.time_energy;
        (et - self.frequency_energy()).abs() / et.max(f64::MIN_POSITIVE)
    }

    /// Magnitude at the bin closest to `f`.
    pub fn magnitude_near(&self, f: f64) -> f64 {
        let k = (f / self.bin_width).round().max(0.0) as usize;
        self.magnitude.get(k).copied().unwrap_or(0.0)
    }

    /// Largest magnitude over bins within `[lo, hi]`.
    pub fn max_in_band(&self, lo: f64, hi: f64) -> f64 {
        self.freq
            .iter()
            .zip(&self.magnitude)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, m)| *m)
            .fold(0.0, f64::max)
    }
}

/// Subtract a fitted `A·e^{−t/T} + C`, optionally apply a Hann window and
/// zero-pad to a power of two, then transform.
pub fn detrend_fft(ts: &TimeSeries, window: Window, zero_pad_to_pow2: bool) -> Result<Spectrum> {
    let dt = ts.uniform_step()?;
    let trend = fit_exp(ts)?;
    let p: Vec<f64> = trend.params.iter().map(|p| p.value).collect();
    let mut x: Vec<f64> = if trend.degenerate && !p[1].is_finite() {
        ts.y.iter().map(|y| y - p[2]).collect()
    } else {
        ts.t.iter().zip(&ts.y).map(|(&t, &y)| y - exp_model(&p, t)).collect()
    };
    let m = x.len();
    if window == Window::Hann && m > 1 {
        for (k, v) in x.iter_mut().enumerate() {
            *v *= 0.5 * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / (m - 1) as f64).cos());
        }
    }
    let nfft = if zero_pad_to_pow2 {
        m.next_power_of_two()
    } else if m.is_power_of_two() {
        m
    } else {
        return Err(Error::NotPowerOfTwo(m));
    };
    let mut buf = vec![C64::default(); nfft];
    for (k, v) in x.iter().enumerate() {
        buf[k] = c(*v);
    }
    let full: Vec<C64> = fft(&buf, false)?.into_iter().map(|z| z * dt).collect();
    let bin_width = 1.0 / (nfft as f64 * dt);
    let half = nfft / 2;
    Ok(Spectrum {
        freq: (0..=half).map(|k| k as f64 * bin_width).collect(),
        magnitude: full[..=half].iter().map(|z| z.norm()).collect(),
        bin_width,
        dt,
        time_energy: x.iter().map(|v| v * v).sum::<f64>() * dt,
        full,
        trend,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub frequency: f64,
    pub magnitude: f64,
    pub prominence: f64,
}

/// Strict interior local maxima whose topographic prominence is at least
/// `min_prominence`, located by 3-point parabolic interpolation. Sorted by
/// frequency.
pub fn peak_pick(spec: &Spectrum, min_prominence: f64) -> Vec<Peak> {
    let m = &spec.magnitude;
    let n = m.len();
    let mut out = Vec::new();
    for i in 1..n.saturating_sub(1) {
        if !(m[i] > m[i - 1] && m[i] >= m[i + 1]) {
            continue;
        }
        let mut left_min = m[i];
        for j in (0..i).rev() {
            if m[j] > m[i] {
                break;
            }
            left_min = left_min.min(m[j]);
        }
        let mut right_min = m[i];
        for &v in &m[i + 1..] {
            if v > m[i] {
                break;
            }
            right_min = right_min.min(v);
        }
        let prominence = m[i] - left_min.max(right_min);
        if prominence < min_prominence || prominence <= 0.0 {
            continue;
        }
        let (a, b, cc) = (m[i - 1], m[i], m[i + 1]);
        let den = a - 2.0 * b + cc;
        let delta = if den != 0.0 { 0.5 * (a - cc) / den } else { 0.0 };
        out.push(Peak {
            frequency: spec.freq[i] + delta * spec.bin_width,
            magnitude: b - 0.25 * (a - cc) * delta,
            prominence,
        });
    }
    out
}

/// Peak with the largest magnitude, if any.
pub fn dominant_peak(spec: &Spectrum, min_prominence: f64) -> Option<Peak> {
    peak_pick(spec, min_prominence).into_iter().max_by(|a, b| a.magnitude.total_cmp(&b.magnitude))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn series(n: usize, dt: f64, mut f: impl FnMut(f64) -> f64) -> TimeSeries {
        let t: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        let y = t.iter().map(|&x| f(x)).collect();
        TimeSeries::new(t, y).unwrap()
    }

    #[test]
    fn pure_exponential_leaves_no_residual() {
        let s = detrend_fft(&series(256, 0.01, |t| (-t / 1.3).exp()), Window::None, true).unwrap();
        assert!(s.magnitude.iter().all(|&m| m < 1e-6 * 256.0 * 0.01), "{:?}", s.magnitude.iter().cloned().fold(0.0, f64::max));
    }

    #[test]
    fn seventeen_megahertz_beat() {
        let s = detrend_fft(&series(401, 0.005, |t| (-t / 1.5).exp() * (2.0 * PI * 17.0 * t).cos()), Window::Hann, true).unwrap();
        let p = dominant_peak(&s, 0.0).unwrap();
        assert!((p.frequency - 17.0).abs() <= s.bin_width, "{p:?}");
        assert!(s.parseval_error() < 1e-9);
    }

    #[test]
    fn two_tones_resolved() {
        let s = detrend_fft(
            &series(1024, 0.005, |t| (2.0 * PI * 5.0 * t).cos() + (2.0 * PI * 9.0 * t).cos() + 0.5 * (-t).exp()),
            Window::Hann,
            true,
        )
        .unwrap();
        let peaks = peak_pick(&s, 0.05 * s.magnitude.iter().cloned().fold(0.0, f64::max));
        assert_eq!(peaks.len(), 2, "{peaks:?}");
        assert!((peaks[0].frequency - 5.0).abs() <= s.bin_width);
        assert!((peaks[1].frequency - 9.0).abs() <= s.bin_width);
    }

    #[test]
    fn non_uniform_sampling_rejected() {
        let ts = TimeSeries::new((0..16).map(|k| (k * k) as f64).collect(), vec![0.0; 16]).unwrap();
        assert!(matches!(detrend_fft(&ts, Window::None, true), Err(Error::NonUniformSampling(_))));
    }

    fn synthetic(mag: Vec<f64>) -> Spectrum {
        let n = mag.len();
        Spectrum {
            freq: (0..n).map(|k| k as f64 * 0.5).collect(),
            magnitude: mag,
            bin_width: 0.5,
            dt: 1.0,
            full: vec![],
            time_energy: 0.0,
            trend: fit_exp(&series(8, 1.0, |t| t)).unwrap(),
        }
    }

    #[test]
    fn flat_spectrum_has_no_peaks() {
        assert!(peak_pick(&synthetic(vec![1.0; 32]), 0.0).is_empty());
    }

    #[test]
    fn on_bin_tone_is_exact() {
        let mut m = vec![0.0; 32];
        m[10] = 1.0;
        let p = peak_pick(&synthetic(m), 0.5);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].frequency, 5.0);
    }

    #[test]
    fn off_bin_tone_interpolates_within_a_tenth_of_a_bin() {
        // Hann-windowed tones placed at fractional bins
        let n = 512;
        let dt = 0.01;
        let df = 1.0 / (n as f64 * dt);
        for frac in [0.1, 0.25, 0.4, 0.5, 0.73] {
            let f0 = (40.0 + frac) * df;
            let s = detrend_fft(&series(n, dt, |t| (2.0 * PI * f0 * t).sin()), Window::Hann, false).unwrap();
            let p = dominant_peak(&s, 0.0).unwrap();
            assert!((p.frequency - f0).abs() < 0.1 * df, "frac {frac}: {} vs {f0}", p.frequency);
        }
    }

    #[test]
    fn prominence_filters_ripples() {
        let m = vec![0.0, 1.0, 0.9, 0.95, 0.0, 0.0, 3.0, 0.0];
        let p = peak_pick(&synthetic(m), 0.5);
        assert_eq!(p.len(), 2);
        assert!((p[0].prominence - 1.0).abs() < 1e-12);
        assert!((p[1].prominence - 3.0).abs() < 1e-12);
    }
}

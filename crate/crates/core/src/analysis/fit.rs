//! Least-squares fits by Nelder–Mead over the nonlinear parameters, with
//! the linear amplitudes eliminated at every step (variable projection).

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::TimeSeries;
use crate::error::{Error, Result};
use crate::io::format_f64;

#[derive(Debug, Clone, PartialEq)]
pub struct FitParam {
    pub name: String,
    pub unit: String,
    pub value: f64,
    /// Residual-based standard error; NaN when the problem is singular.
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: String,
    pub params: Vec<FitParam>,
    pub rss: f64,
    /// Residual at the first starting point.
    pub initial_rss: f64,
    pub converged: bool,
    /// Set when some parameter is not identifiable from the data.
    pub degenerate: bool,
    pub iterations: usize,
    pub notes: Vec<(String, String)>,
}

impl FitResult {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|p| p.name == name).map(|p| p.value)
    }

    pub fn stderr(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|p| p.name == name).map(|p| p.stderr)
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.push((key.to_string(), value.to_string()));
    }

    /// Ordered `key, value` pairs covering every field.
    pub fn pairs(&self) -> Vec<(String, String)> {
        let mut out = vec![("model".to_string(), self.model.clone())];
        for p in &self.params {
            out.push((p.name.clone(), format_f64(p.value)));
            out.push((format!("{}_stderr", p.name), format_f64(p.stderr)));
            out.push((format!("{}_unit", p.name), p.unit.clone()));
        }
        out.push(("rss".into(), format_f64(self.rss)));
        out.push(("initial_rss".into(), format_f64(self.initial_rss)));
        out.push(("converged".into(), self.converged.to_string()));
        out.push(("degenerate".into(), self.degenerate.to_string()));
        out.push(("iterations".into(), self.iterations.to_string()));
        out.extend(self.notes.iter().cloned());
        out
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        self.pairs().into_iter().collect()
    }

    /// Fitted model at `t`; `None` for an unknown model name.
    pub fn evaluate(&self, t: f64) -> Option<f64> {
        let p: Vec<f64> = self.params.iter().map(|p| p.value).collect();
        match self.model.as_str() {
            "exp" | "echo-t2" => Some(exp_model(&p, t)),
            "damped-cos" => Some(damped_cos_model(&p, t)),
            _ => None,
        }
    }

    /// `key=value` lines.
    pub fn to_text(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_iter: usize,
    /// Stop when the simplex spread in f falls below `ftol·(|f|+tiny)`
    /// and in x below `xtol`.
    pub ftol: f64,
    pub xtol: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self { max_iter: 4000, ftol: 1e-15, xtol: 1e-11 }
    }
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Nelder–Mead minimization with the standard coefficients.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], step: &[f64], opts: SimplexOptions) -> SimplexResult {
    let n = x0.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += step[i];
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(p)).collect();
    let mut iter = 0;
    let mut converged = false;
    while iter < opts.max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&k| pts[k].clone()).collect();
        vals = order.iter().map(|&k| vals[k]).collect();

        let fspread = vals[n] - vals[0];
        let xspread = pts[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if fspread <= opts.ftol * (vals[0].abs() + 1e-300) && xspread <= opts.xtol {
            converged = true;
            break;
        }
        if xspread <= opts.xtol * 1e-3 {
            converged = fspread.is_finite();
            break;
        }
        iter += 1;

        let centroid: Vec<f64> = (0..n).map(|j| pts[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (pts[n][j] - centroid[j])).collect() };
        let xr = along(-1.0);
        let fr = eval(&xr);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = eval(&xe);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[n] {
            let x = along(-0.5);
            let v = eval(&x);
            (x, v)
        } else {
            let x = along(0.5);
            let v = eval(&x);
            (x, v)
        };
        if fc < vals[n].min(fr) {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        for k in 1..=n {
            for j in 0..n {
                pts[k][j] = pts[0][j] + 0.5 * (pts[k][j] - pts[0][j]);
            }
            vals[k] = eval(&pts[k]);
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    SimplexResult { x: pts[best].clone(), fx: vals[best], iterations: iter, converged }
}

/// Best linear combination of the basis columns; returns coefficients and
/// residual sum of squares.
fn project(basis: &DMatrix<f64>, y: &DVector<f64>) -> (DVector<f64>, f64) {
    let svd = basis.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let coef = svd.solve(y, smax * 1e-13).unwrap_or_else(|_| DVector::zeros(basis.ncols()));
    let r = y - basis * &coef;
    (coef, r.norm_squared())
}

fn rel_span(y: &[f64]) -> f64 {
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

fn scale_of(y: &[f64]) -> f64 {
    y.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1e-300)
}

/// Standard errors from `σ²(JᵀJ)⁻¹` with a central-difference Jacobian.
fn stderrs<M: Fn(&[f64], f64) -> f64>(model: M, p: &[f64], t: &[f64], rss: f64) -> Vec<f64> {
    let (n, m) = (t.len(), p.len());
    if n <= m {
        return vec![f64::NAN; m];
    }
    let mut jac = DMatrix::<f64>::zeros(n, m);
    for k in 0..m {
        let h = 1e-6 * p[k].abs().max(1e-6);
        let mut hi = p.to_vec();
        let mut lo = p.to_vec();
        hi[k] += h;
        lo[k] -= h;
        for (i, &ti) in t.iter().enumerate() {
            jac[(i, k)] = (model(&hi, ti) - model(&lo, ti)) / (2.0 * h);
        }
    }
    let sigma2 = rss / (n - m) as f64;
    match (jac.transpose() * &jac).try_inverse() {
        Some(cov) => (0..m).map(|k| (sigma2 * cov[(k, k)]).max(0.0).sqrt()).collect(),
        None => vec![f64::NAN; m],
    }
}

fn param(name: &str, unit: &str, value: f64, stderr: f64) -> FitParam {
    FitParam { name: name.into(), unit: unit.into(), value, stderr }
}

pub fn exp_model(p: &[f64], t: f64) -> f64 {
    p[0] * (-t / p[1]).exp() + p[2]
}

pub fn damped_cos_model(p: &[f64], t: f64) -> f64 {
    p[0] * (-t / p[1]).exp() * (2.0 * PI * p[2] * t + p[3]).cos() + p[4]
}

/// `y = A·e^{−t/T} + C`, T > 0.
pub fn fit_exp(ts: &TimeSeries) -> Result<FitResult> {
    let (t, y) = (&ts.t, &ts.y);
    if t.len() < 8 {
        return Err(Error::InvalidArgument(format!("fit_exp needs at least 8 samples, got {}", t.len())));
    }
    let n = t.len();
    let span = (t[n - 1] - t[0]).max(f64::MIN_POSITIVE);
    let yv = DVector::from_column_slice(y);
    let mean = y.iter().sum::<f64>() / n as f64;
    if rel_span(y) <= 1e-12 * scale_of(y) {
        let mut r = FitResult {
            model: "exp".into(),
            params: vec![param("A", "signal", 0.0, f64::NAN), param("T", "us", f64::NAN, f64::NAN), param("C", "signal", mean, f64::NAN)],
            rss: y.iter().map(|v| (v - mean).powi(2)).sum(),
            initial_rss: 0.0,
            converged: true,
            degenerate: true,
            iterations: 0,
            notes: vec![],
        };
        r.initial_rss = r.rss;
        return Ok(r);
    }
    let basis = |log_t: f64| {
        let tau = log_t.exp();
        DMatrix::from_fn(n, 2, |i, j| if j == 0 { (-(t[i] - t[0]) / tau).exp() } else { 1.0 })
    };
    let obj = |x: &[f64]| project(&basis(x[0]), &yv).1;

    let starts = [span / 3.0, span / 10.0, span];
    let initial_rss = obj(&[starts[0].ln()]);
    let mut best: Option<SimplexResult> = None;
    let mut iterations = 0;
    for s in starts {
        let r = nelder_mead(obj, &[s.ln()], &[0.5], SimplexOptions::default());
        iterations += r.iterations;
        if best.as_ref().is_none_or(|b| r.fx < b.fx) {
            best = Some(r);
        }
    }
    let best = best.unwrap();
    let tau = best.x[0].exp();
    let (coef, rss) = project(&basis(best.x[0]), &yv);
    // basis was shifted to t[0]; convert the amplitude back to absolute time
    let a = coef[0] * (t[0] / tau).exp();
    let p = [a, tau, coef[1]];
    let se = stderrs(exp_model, &p, t, rss);
    let variation = 1.0 - (-span / tau).exp();
    let degenerate =
        (a.abs() * (-t[0] / tau).exp() * variation) <= 1e-9 * scale_of(y) || tau > 1e6 * span || se.iter().any(|s| s.is_nan());
    Ok(FitResult {
        model: "exp".into(),
        params: vec![param("A", "signal", a, se[0]), param("T", "us", tau, se[1]), param("C", "signal", coef[1], se[2])],
        rss,
        initial_rss,
        converged: best.converged,
        degenerate,
        iterations,
        notes: vec![],
    })
}

/// Dominant nonzero frequency of a uniformly sampled series, from a
/// zero-padded periodogram with parabolic refinement.
fn dominant_frequency(t: &[f64], y: &[f64]) -> Result<f64> {
    let n = y.len();
    let dt = (t[n - 1] - t[0]) / (n - 1) as f64;
    let mean = y.iter().sum::<f64>() / n as f64;
    let nfft = (4 * n).next_power_of_two();
    let mut buf = vec![crate::linalg::C64::default(); nfft];
    for (k, v) in y.iter().enumerate() {
        buf[k] = crate::linalg::c(v - mean);
    }
    let spec = super::fft::fft(&buf, false)?;
    let mag: Vec<f64> = spec[..=nfft / 2].iter().map(|z| z.norm()).collect();
    let (kmax, &peak) = mag.iter().enumerate().skip(1).max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let mut sorted = mag.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let floor = sorted[sorted.len() / 2];
    if peak <= 3.0 * floor || peak <= 1e-12 * n as f64 * scale_of(y) {
        return Err(Error::FitInit(format!("no spectral peak above the noise floor (peak {peak:.3e}, median {floor:.3e})")));
    }
    if kmax * n < nfft {
        return Err(Error::FitInit("dominant spectral component is below one period over the record".into()));
    }
    let mut delta = 0.0;
    if kmax + 1 < mag.len() {
        let (a, b, c) = (mag[kmax - 1], mag[kmax], mag[kmax + 1]);
        let den = a - 2.0 * b + c;
        if den != 0.0 {
            delta = 0.5 * (a - c) / den;
        }
    }
    Ok((kmax as f64 + delta) / (nfft as f64 * dt))
}

/// `y = A·e^{−t/τ_d}·cos(2πft + φ) + C`.
pub fn fit_damped_cos(ts: &TimeSeries) -> Result<FitResult> {
    let (t, y) = (&ts.t, &ts.y);
    let n = t.len();
    if n < 16 {
        return Err(Error::InvalidArgument(format!("fit_damped_cos needs at least 16 samples, got {n}")));
    }
    ts.uniform_step()?;
    let mean = y.iter().sum::<f64>() / n as f64;
    let span = t[n - 1] - t[0];
    if rel_span(y) <= 1e-12 * scale_of(y) {
        let rss = y.iter().map(|v| (v - mean).powi(2)).sum();
        return Ok(FitResult {
            model: "damped-cos".into(),
            params: vec![
                param("A", "signal", 0.0, f64::NAN),
                param("tau_d", "us", f64::NAN, f64::NAN),
                param("f", "MHz", f64::NAN, f64::NAN),
                param("phi", "rad", 0.0, f64::NAN),
                param("C", "signal", mean, f64::NAN),
            ],
            rss,
            initial_rss: rss,
            converged: true,
            degenerate: true,
            iterations: 0,
            notes: vec![],
        });
    }
    let f0 = dominant_frequency(t, y)?;
    let yv = DVector::from_column_slice(y);
    let t0 = t[0];
    // x = [sqrt(k), f] keeps the decay rate k = 1/τ_d nonnegative
    let basis = |x: &[f64]| {
        let k = x[0] * x[0];
        DMatrix::from_fn(n, 3, |i, j| {
            let s = t[i] - t0;
            let e = (-k * s).exp();
            match j {
                0 => e * (2.0 * PI * x[1] * t[i]).cos(),
                1 => e * (2.0 * PI * x[1] * t[i]).sin(),
                _ => 1.0,
            }
        })
    };
    let obj = |x: &[f64]| project(&basis(x), &yv).1;
    let df = 0.25 / span;
    let starts = [1.0 / span, 0.2 / span, 5.0 / span];
    let initial_rss = obj(&[starts[0].sqrt(), f0]);
    let mut best: Option<SimplexResult> = None;
    let mut iterations = 0;
    for k0 in starts {
        let q = k0.sqrt();
        let r = nelder_mead(obj, &[q, f0], &[0.3 * q, df], SimplexOptions::default());
        iterations += r.iterations;
        if best.as_ref().is_none_or(|b| r.fx < b.fx) {
            best = Some(r);
        }
    }
    let best = best.unwrap();
    let (coef, rss) = project(&basis(&best.x), &yv);
    let k = best.x[0] * best.x[0];
    let f = best.x[1].abs();
    let sign = best.x[1].signum();
    // a·cos + b·sin = A cos(θ + φ) with A cosφ = a, A sinφ = −b
    let (a, b) = (coef[0], sign * coef[1]);
    let amp = a.hypot(b) * (k * t0).exp();
    let phi = (-b).atan2(a);
    let tau_d = if k > 0.0 { 1.0 / k } else { f64::INFINITY };
    let p = [amp, tau_d, f, phi, coef[2]];
    let se = stderrs(damped_cos_model, &p, t, rss);
    let span = t[t.len() - 1] - t[0];
    let degenerate = amp <= 1e-9 * scale_of(y) || !(tau_d <= 1e6 * span) || se.iter().any(|s| s.is_nan());
    Ok(FitResult {
        model: "damped-cos".into(),
        params: vec![
            param("A", "signal", amp, se[0]),
            param("tau_d", "us", tau_d, se[1]),
            param("f", "MHz", f, se[2]),
            param("phi", "rad", phi, se[3]),
            param("C", "signal", coef[2], se[4]),
        ],
        rss,
        initial_rss,
        converged: best.converged,
        degenerate,
        iterations,
        notes: vec![],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Poisson};

    fn series(n: usize, dt: f64, mut f: impl FnMut(f64) -> f64) -> TimeSeries {
        let t: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        let y = t.iter().map(|&x| f(x)).collect();
        TimeSeries::new(t, y).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn simplex_finds_rosenbrock_minimum() {
        let r = nelder_mead(|x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2), &[-1.2, 1.0], &[0.5, 0.5], SimplexOptions::default());
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn exp_noiseless_recovery() {
        let ts = series(200, 0.03, |t| (-t / 2.0).exp() + 0.1);
        let r = fit_exp(&ts).unwrap();
        assert!(r.converged && !r.degenerate);
        assert!(rel(r.value("A").unwrap(), 1.0) < 1e-6);
        assert!(rel(r.value("T").unwrap(), 2.0) < 1e-6);
        assert!(rel(r.value("C").unwrap(), 0.1) < 1e-6);
        assert!(r.rss <= r.initial_rss);
    }

    #[test]
    fn exp_offset_time_axis() {
        let ts = series(100, 0.05, |t| 3.0 * (-(t + 1.0) / 0.7).exp() - 0.2);
        let t: Vec<f64> = ts.t.iter().map(|x| x + 1.0).collect();
        let r = fit_exp(&TimeSeries::new(t, ts.y.clone()).unwrap()).unwrap();
        assert!(rel(r.value("A").unwrap(), 3.0) < 1e-6);
        assert!(rel(r.value("T").unwrap(), 0.7) < 1e-6);
    }

    #[test]
    fn exp_constant_is_degenerate() {
        let r = fit_exp(&series(20, 0.1, |_| 0.4)).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.value("A"), Some(0.0));
        assert!((r.value("C").unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn exp_too_few_samples() {
        assert!(fit_exp(&series(7, 0.1, |t| t)).is_err());
    }

    #[test]
    fn exp_with_poisson_noise() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let cycles = 1e6;
        let ts = series(200, 0.03, |t| {
            let mean = ((-t / 2.0).exp() * 0.3 + 0.7) * cycles;
            Poisson::new(mean).unwrap().sample(&mut rng) / cycles
        });
        let r = fit_exp(&ts).unwrap();
        assert!(rel(r.value("T").unwrap(), 2.0) < 0.1, "{}", r.to_text());
    }

    #[test]
    fn damped_cos_16_and_39() {
        for f in [16.0, 39.0] {
            let ts = series(800, 0.0025, |t| 0.5 * (-t / 2.0).exp() * (2.0 * PI * f * t + 0.3).cos() + 0.5);
            let r = fit_damped_cos(&ts).unwrap();
            assert!(rel(r.value("f").unwrap(), f) < 5e-3, "{}", r.to_text());
            assert!(rel(r.value("tau_d").unwrap(), 2.0) < 0.05, "{}", r.to_text());
            assert!((r.value("phi").unwrap() - 0.3).abs() < 1e-6);
            assert!(r.rss <= r.initial_rss);
        }
    }

    #[test]
    fn damped_cos_zero_amplitude_is_degenerate() {
        let r = fit_damped_cos(&series(64, 0.01, |_| 1.0)).unwrap();
        assert!(r.degenerate);
    }

    #[test]
    fn damped_cos_without_peak_fails_init() {
        // a straight ramp has no oscillation to seed the frequency from
        let err = fit_damped_cos(&series(64, 0.01, |t| t)).unwrap_err();
        assert!(matches!(err, Error::FitInit(_)), "{err:?}");
    }

    #[test]
    fn refit_does_not_increase_residual() {
        let ts = series(300, 0.01, |t| 0.8 * (-t / 1.1).exp() * (2.0 * PI * 7.0 * t).cos() + 0.05 * (13.0 * t).sin());
        let r1 = fit_damped_cos(&ts).unwrap();
        let r2 = fit_damped_cos(&ts).unwrap();
        assert!(r2.rss <= r1.rss);
        let e1 = fit_exp(&ts).unwrap();
        assert!(e1.converged && e1.rss > r1.rss);
    }

    #[test]
    fn text_block_round_trips_keys() {
        let r = fit_exp(&series(20, 0.1, |t| (-t).exp())).unwrap();
        let map = r.to_map();
        assert_eq!(map["model"], "exp");
        assert!(r.to_text().lines().all(|l| l.contains('=')));
        assert!(map.contains_key("T_stderr"));
    }
}

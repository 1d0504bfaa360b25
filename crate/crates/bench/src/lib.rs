//! Fixtures shared by the benchmarks in `benches/`.

use std::f64::consts::PI;

use nvspin::analysis::TimeSeries;
use nvspin::liouville::{build_paper_scheme, LevelScheme, Liouvillian, MwSetting};
use nvspin::SpinSystemParams;

pub fn paper_scheme() -> LevelScheme {
    build_paper_scheme(&SpinSystemParams::default()).expect("default parameters are valid")
}

/// Liouvillian of the driven three-level scheme (ω₁ = 16 MHz, laser 10 MHz).
pub fn driven_liouvillian(scheme: &LevelScheme) -> Liouvillian {
    let h = scheme
        .rotating_hamiltonian(0.0, 0.0, Some(MwSetting::new(16.0, 0.0, 0.0)), None)
        .expect("valid frame");
    Liouvillian::new(&h, &scheme.dissipator).expect("valid dissipator")
}

/// Damped 16 MHz cosine with a small deterministic ripple standing in for noise.
pub fn damped_cosine(n: usize) -> TimeSeries {
    let t: Vec<f64> = (0..n).map(|k| k as f64 * 0.005).collect();
    let y = t
        .iter()
        .enumerate()
        .map(|(k, &t)| 0.5 + 0.5 * (-t / 3.0).exp() * (2.0 * PI * 16.0 * t).cos() + 1e-4 * ((k * 7919) % 13) as f64)
        .collect();
    TimeSeries::new(t, y).expect("finite samples")
}

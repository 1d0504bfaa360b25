use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::analysis::TimeSeries;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", tag = "kind", deny_unknown_fields)]
pub enum Noise {
    #[default]
    None,
    Poisson { seed: u64 },
}

/// Photon-counting model of a repeated measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutModel {
    /// Number of averaged repetitions.
    pub cycles: f64,
    /// Collected photons per unit signal per cycle.
    pub efficiency: f64,
    #[serde(default)]
    pub noise: Noise,
}

impl Default for ReadoutModel {
    fn default() -> Self {
        Self { cycles: 1e6, efficiency: 1.0, noise: Noise::None }
    }
}

impl ReadoutModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.cycles >= 1.0) || !self.cycles.is_finite() {
            return invalid(format!("cycles must be >= 1 (got {})", self.cycles));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return invalid(format!("efficiency must be in (0, 1] (got {})", self.efficiency));
        }
        Ok(())
    }
}

/// Replace each sample by a Poisson count with mean
/// `signal·cycles·efficiency`, scaled back to signal units, with its
/// counting error in `stderr`.
pub fn apply_readout_model(ts: &TimeSeries, model: &ReadoutModel) -> Result<TimeSeries> {
    model.validate()?;
    if let Some(k) = ts.y.iter().position(|&v| v < -1e-12) {
        return invalid(format!("readout model needs a nonnegative signal (sample {k} is {})", ts.y[k]));
    }
    let mut out = ts.clone();
    let seed = match model.noise {
        Noise::None => return Ok(out),
        Noise::Poisson { seed } => seed,
    };
    let scale = model.cycles * model.efficiency;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut err = Vec::with_capacity(ts.len());
    for y in out.y.iter_mut() {
        let mean = y.max(0.0) * scale;
        let count = if mean > 0.0 {
            Poisson::new(mean).map_err(|e| crate::Error::InvalidArgument(e.to_string()))?.sample(&mut rng)
        } else {
            0.0
        };
        *y = count / scale;
        err.push(count.sqrt() / scale);
    }
    out.stderr = Some(err);
    out.metadata.push(("readout_cycles".into(), model.cycles.to_string()));
    out.metadata.push(("readout_efficiency".into(), model.efficiency.to_string()));
    out.metadata.push(("readout_seed".into(), seed.to_string()));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(v: f64, n: usize) -> TimeSeries {
        TimeSeries::new((0..n).map(|k| k as f64).collect(), vec![v; n]).unwrap()
    }

    #[test]
    fn no_noise_is_identity() {
        let ts = flat(0.4, 10);
        assert_eq!(apply_readout_model(&ts, &ReadoutModel::default()).unwrap(), ts);
    }

    #[test]
    fn relative_fluctuation_shrinks() {
        let model = ReadoutModel { cycles: 1e7, efficiency: 0.5, noise: Noise::Poisson { seed: 1 } };
        let out = apply_readout_model(&flat(0.8, 400), &model).unwrap();
        let mean = out.y.iter().sum::<f64>() / 400.0;
        let var = out.y.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / 399.0;
        assert!(var.sqrt() / mean < 1e-3);
        assert!((mean - 0.8).abs() < 1e-3);
    }

    #[test]
    fn seeded_output_is_bit_identical() {
        let model = ReadoutModel { cycles: 1e5, efficiency: 1.0, noise: Noise::Poisson { seed: 42 } };
        let ts = flat(0.3, 50);
        let a = apply_readout_model(&ts, &model).unwrap();
        let b = apply_readout_model(&ts, &model).unwrap();
        assert!(a.y.iter().zip(&b.y).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(a.y, ts.y);
    }

    #[test]
    fn rejects_bad_models_and_negative_signal() {
        let ts = flat(0.3, 5);
        assert!(apply_readout_model(&ts, &ReadoutModel { cycles: 0.5, ..Default::default() }).is_err());
        assert!(apply_readout_model(&ts, &ReadoutModel { efficiency: 0.0, ..Default::default() }).is_err());
        assert!(apply_readout_model(&flat(-0.1, 5), &ReadoutModel::default()).is_err());
    }
}

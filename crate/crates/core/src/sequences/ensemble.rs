use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Static detuning distribution of an inhomogeneous ensemble (MHz).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", deny_unknown_fields)]
pub enum Distribution {
    Gaussian { sigma: f64 },
    /// Explicit detunings, equally weighted.
    Discrete { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "method", deny_unknown_fields)]
pub enum Sampling {
    Quadrature { order: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub distribution: Distribution,
    #[serde(default = "default_sampling")]
    pub sampling: Sampling,
}

fn default_sampling() -> Sampling {
    Sampling::Quadrature { order: EnsembleSpec::DEFAULT_ORDER }
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self::gaussian(Self::DEFAULT_SIGMA)
    }
}

impl EnsembleSpec {
    pub const DEFAULT_ORDER: usize = 31;
    pub const DEFAULT_SIGMA: f64 = 5.0;

    pub fn gaussian(sigma: f64) -> Self {
        Self { distribution: Distribution::Gaussian { sigma }, sampling: default_sampling() }
    }

    pub fn single(detuning: f64) -> Self {
        Self { distribution: Distribution::Discrete { values: vec![detuning] }, sampling: default_sampling() }
    }

    /// `(detuning, weight)` pairs; weights sum to one.
    pub fn members(&self) -> Result<Vec<(f64, f64)>> {
        match &self.distribution {
            Distribution::Discrete { values } => {
                if values.is_empty() {
                    return invalid("discrete ensemble needs at least one value");
                }
                let w = 1.0 / values.len() as f64;
                Ok(values.iter().map(|&v| (v, w)).collect())
            }
            Distribution::Gaussian { sigma } => {
                if !(*sigma >= 0.0) {
                    return invalid(format!("sigma must be >= 0 (got {sigma})"));
                }
                if *sigma == 0.0 {
                    return Ok(vec![(0.0, 1.0)]);
                }
                match self.sampling {
                    Sampling::Quadrature { order } => {
                        if order == 0 {
                            return invalid("quadrature order must be >= 1");
                        }
                        let (x, w) = gauss_hermite(order);
                        let s = std::f64::consts::PI.sqrt();
                        Ok(x.iter().zip(&w).map(|(&xi, &wi)| (std::f64::consts::SQRT_2 * sigma * xi, wi / s)).collect())
                    }
                    Sampling::MonteCarlo { samples, seed } => {
                        if samples == 0 {
                            return invalid("sample count must be >= 1");
                        }
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        let normal = Normal::new(0.0, *sigma).map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
                        let w = 1.0 / samples as f64;
                        Ok((0..samples).map(|_| (normal.sample(&mut rng), w)).collect())
                    }
                }
            }
        }
    }
}

/// Nodes and weights of `∫ e^{−x²} f(x) dx` by the Golub–Welsch method,
/// nodes ascending.
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let eig = j.symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mu0 = std::f64::consts::PI.sqrt();
    let mut x: Vec<f64> = idx.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut w: Vec<f64> = idx.iter().map(|&k| mu0 * eig.eigenvectors[(0, k)].powi(2)).collect();
    // enforce the exact symmetry of the rule
    for k in 0..n / 2 {
        let (a, b) = (k, n - 1 - k);
        let xs = 0.5 * (x[b] - x[a]);
        x[a] = -xs;
        x[b] = xs;
        let ws = 0.5 * (w[a] + w[b]);
        w[a] = ws;
        w[b] = ws;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_moments() {
        let (x, w) = gauss_hermite(31);
        let pi_sqrt = std::f64::consts::PI.sqrt();
        let m = |p: i32| x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(p)).sum::<f64>();
        assert!((m(0) - pi_sqrt).abs() < 1e-12);
        assert!(m(1).abs() < 1e-12);
        assert!((m(2) - pi_sqrt / 2.0).abs() < 1e-12);
        assert!((m(4) - 3.0 * pi_sqrt / 4.0).abs() < 1e-11);
        // exact for polynomial degree ≤ 61; check e^{-x²}cos(x) integrand
        let c: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.cos()).sum();
        assert!((c - pi_sqrt * (-0.25f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn gaussian_members_reproduce_variance() {
        let m = EnsembleSpec::gaussian(5.0).members().unwrap();
        assert_eq!(m.len(), 31);
        let var: f64 = m.iter().map(|(d, w)| w * d * d).sum();
        assert!((var - 25.0).abs() < 1e-10);
        assert!((m.iter().map(|p| p.1).sum::<f64>() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn zero_width_is_single_member() {
        assert_eq!(EnsembleSpec::gaussian(0.0).members().unwrap(), vec![(0.0, 1.0)]);
        assert!(EnsembleSpec::gaussian(-1.0).members().is_err());
    }

    #[test]
    fn monte_carlo_is_seeded() {
        let spec = EnsembleSpec {
            distribution: Distribution::Gaussian { sigma: 2.0 },
            sampling: Sampling::MonteCarlo { samples: 50, seed: 9 },
        };
        assert_eq!(spec.members().unwrap(), spec.members().unwrap());
        let spec0 = EnsembleSpec { sampling: Sampling::MonteCarlo { samples: 0, seed: 9 }, ..spec };
        assert!(spec0.members().is_err());
    }
}

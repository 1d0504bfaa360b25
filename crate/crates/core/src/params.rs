//! Physical parameters of the simulated defect.
//!
//! Units throughout: frequencies in MHz (ordinary, not angular), times in μs,
//! rates in 1/μs, magnetic fields in mT.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Ground-state zero-field splitting of the NV center.
pub const D_ZFS_MHZ: f64 = 2870.0;
/// Electron gyromagnetic ratio g_e·β_e/h.
pub const GAMMA_E_MHZ_PER_MT: f64 = 28.025;
/// ¹⁴N nuclear gyromagnetic ratio.
pub const GAMMA_N14_MHZ_PER_MT: f64 = 0.003077;
/// Isotropic ¹⁴N hyperfine coupling.
pub const A_ISO_N14_MHZ: f64 = 2.2;
/// ¹⁴N quadrupole splitting, available but not applied by default.
pub const QUADRUPOLE_N14_MHZ: f64 = -4.95;
/// β_e/h and β_n/h, for converting between g-factors and gyromagnetic ratios.
pub const BOHR_MAGNETON_MHZ_PER_MT: f64 = 13.996_245;
pub const NUCLEAR_MAGNETON_MHZ_PER_MT: f64 = 0.007_622_593;
/// Nominal optical (zero-phonon) transition frequency, 637 nm.
pub const OPTICAL_TRANSITION_MHZ: f64 = 470.4e6;

/// Everything that defines the simulated defect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpinSystemParams {
    pub d_zfs: f64,
    pub e_strain: f64,
    /// Hyperfine tensor, row-major.
    pub a_tensor: [[f64; 3]; 3],
    /// Nuclear quadrupole P; `None` leaves the term out.
    pub quadrupole_p: Option<f64>,
    pub b0: [f64; 3],
    pub gamma_e: f64,
    pub gamma_n: f64,
    pub t1: f64,
    pub t2: f64,
    pub optical_rabi: f64,
    pub mw_rabi: f64,
    pub radiative_rate: f64,
    pub isc_rate: f64,
    pub shelf_rate: f64,
    /// Extra optical-coherence dephasing on top of Γ_r/2.
    pub optical_dephasing: f64,
    /// In-plane angle of the linearly polarized MW field (rad). π/4 drives
    /// both strain-split zero-field transitions with equal strength.
    pub mw_polarization: f64,
}

impl Default for SpinSystemParams {
    fn default() -> Self {
        let a = A_ISO_N14_MHZ;
        Self {
            d_zfs: D_ZFS_MHZ,
            e_strain: 0.0,
            a_tensor: [[a, 0.0, 0.0], [0.0, a, 0.0], [0.0, 0.0, a]],
            quadrupole_p: None,
            b0: [0.0; 3],
            gamma_e: GAMMA_E_MHZ_PER_MT,
            gamma_n: GAMMA_N14_MHZ_PER_MT,
            t1: 2000.0,
            t2: 2.0,
            optical_rabi: 10.0,
            mw_rabi: 16.0,
            radiative_rate: 1.0 / 0.012,
            isc_rate: 50.0,
            shelf_rate: 1.0 / 0.3,
            optical_dephasing: 1000.0,
            mw_polarization: std::f64::consts::FRAC_PI_4,
        }
    }
}

impl SpinSystemParams {
    pub fn g_e(&self) -> f64 {
        self.gamma_e / BOHR_MAGNETON_MHZ_PER_MT
    }

    pub fn g_n(&self) -> f64 {
        self.gamma_n / NUCLEAR_MAGNETON_MHZ_PER_MT
    }

    pub fn with_isotropic_hyperfine(mut self, a_iso: f64) -> Self {
        self.a_tensor = [[a_iso, 0.0, 0.0], [0.0, a_iso, 0.0], [0.0, 0.0, a_iso]];
        self
    }

    /// Check the physical-region constraints. The error message starts with
    /// the offending field name.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("t1", self.t1), ("t2", self.t2)] {
            if !(v > 0.0) {
                return invalid(format!("{name} must be > 0 (got {v})"));
            }
        }
        let nonneg = [
            ("optical_rabi", self.optical_rabi),
            ("mw_rabi", self.mw_rabi),
            ("radiative_rate", self.radiative_rate),
            ("isc_rate", self.isc_rate),
            ("shelf_rate", self.shelf_rate),
            ("optical_dephasing", self.optical_dephasing),
            ("gamma_e", self.gamma_e),
        ];
        for (name, v) in nonneg {
            if v.is_nan() || v < 0.0 {
                return invalid(format!("{name} must be >= 0 (got {v})"));
            }
        }
        if self.t2 > 2.0 * self.t1 {
            return invalid(format!("t2 must not exceed 2*t1 (t2={}, t1={})", self.t2, self.t1));
        }
        for i in 0..3 {
            for j in 0..3 {
                if (self.a_tensor[i][j] - self.a_tensor[j][i]).abs() > 1e-12 {
                    return invalid("a_tensor must be symmetric");
                }
            }
        }
        Ok(())
    }

    /// Pure spin dephasing left after accounting for T₁ relaxation,
    /// `1/T₂ − 1/(2T₁)` clamped at zero.
    pub fn pure_dephasing_rate(&self) -> f64 {
        (rate(self.t2) - 0.5 * rate(self.t1)).max(0.0)
    }
}

/// `1/t`, with an infinite time meaning no decay.
pub fn rate(t: f64) -> f64 {
    if t.is_infinite() {
        0.0
    } else {
        1.0 / t
    }
}

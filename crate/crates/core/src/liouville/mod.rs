//! Reduced-Liouville (Lindblad) propagation of the density matrix.
//!
//! The coherent part is `−2πi[H, ρ]` with `H` in MHz and time in μs;
//! dissipative rates are plain 1/μs. Superoperators act on the
//! column-stacked density matrix, `vec(ρ)[j·n + i] = ρ_ij`.

mod schemes;

pub use schemes::{
    build_extended_scheme, build_hyperfine_scheme, build_paper_scheme, build_triplet_scheme, DriveSpec,
    LevelScheme, LaserSetting, MwSetting,
};

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::linalg::{c, dagger, eigh, eigvals_hermitian, expm, hermiticity_error, identity, kron, zeros, CMatrix, CVector, I};

pub const TRACE_TOL: f64 = 1e-10;
pub const HERMITIAN_TOL: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub rho: CMatrix,
}

impl DensityMatrix {
    pub fn new(rho: CMatrix) -> Result<Self> {
        if rho.nrows() != rho.ncols() {
            return Err(Error::DimensionMismatch { expected: rho.nrows(), got: rho.ncols() });
        }
        let dm = Self { rho };
        dm.check()?;
        Ok(dm)
    }

    /// `|k><k|`.
    pub fn pure(n: usize, k: usize) -> Self {
        let mut rho = zeros(n);
        rho[(k, k)] = c(1.0);
        Self { rho }
    }

    /// Equal incoherent mixture of the given levels.
    pub fn mixed(n: usize, levels: &[usize]) -> Self {
        let mut rho = zeros(n);
        let w = 1.0 / levels.len() as f64;
        for &k in levels {
            rho[(k, k)] += c(w);
        }
        Self { rho }
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.rho[(k, k)].re).collect()
    }

    pub fn to_vec(&self) -> CVector {
        vectorize(&self.rho)
    }

    pub fn from_vec(v: &CVector) -> Self {
        Self { rho: unvectorize(v) }
    }

    /// Unit trace, Hermiticity and positivity within the module tolerances.
    pub fn check(&self) -> Result<()> {
        let tr = self.rho.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr}")));
        }
        let herm = hermiticity_error(&self.rho);
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("hermiticity error {herm:e}")));
        }
        let min = self.min_eigenvalue();
        if min < -POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.rho + dagger(&self.rho)) * c(0.5);
        eigvals_hermitian(&h)[0]
    }
}

pub fn vectorize(m: &CMatrix) -> CVector {
    CVector::from_column_slice(m.as_slice())
}

pub fn unvectorize(v: &CVector) -> CMatrix {
    let n = (v.len() as f64).sqrt().round() as usize;
    CMatrix::from_column_slice(n, n, v.as_slice())
}

/// Incoherent channels: jump operators with rates, plus pure dephasing of
/// designated coherences (`dρ_ij/dt = −γ_ij ρ_ij`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dissipator {
    n: usize,
    jumps: Vec<(CMatrix, f64)>,
    dephasing: Vec<(usize, usize, f64)>,
}

impl Dissipator {
    pub fn new(n: usize) -> Self {
        Self { n, jumps: Vec::new(), dephasing: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn jumps(&self) -> &[(CMatrix, f64)] {
        &self.jumps
    }

    pub fn dephasing(&self) -> &[(usize, usize, f64)] {
        &self.dephasing
    }

    pub fn add_jump(&mut self, op: CMatrix, rate: f64) -> Result<&mut Self> {
        if op.nrows() != self.n || op.ncols() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: op.nrows() });
        }
        if !(rate >= 0.0) {
            return invalid(format!("jump rate must be >= 0 (got {rate})"));
        }
        if rate > 0.0 {
            self.jumps.push((op, rate));
        }
        Ok(self)
    }

    /// Incoherent transfer `from → to` at `rate`.
    pub fn add_decay(&mut self, from: usize, to: usize, rate: f64) -> Result<&mut Self> {
        let mut op = zeros(self.n);
        op[(to, from)] = c(1.0);
        self.add_jump(op, rate)
    }

    /// Pure dephasing of the single coherence pair `(i, j)`.
    ///
    /// Arbitrary per-pair rates are not always completely positive;
    /// [`Dissipator::check_complete_positivity`] verifies the combined set.
    pub fn add_pair_dephasing(&mut self, i: usize, j: usize, rate: f64) -> Result<&mut Self> {
        if i >= self.n || j >= self.n || i == j {
            return invalid(format!("bad dephasing pair ({i}, {j})"));
        }
        if !(rate >= 0.0) {
            return invalid(format!("dephasing rate must be >= 0 (got {rate})"));
        }
        if rate > 0.0 {
            self.dephasing.push((i.min(j), i.max(j), rate));
        }
        Ok(self)
    }

    /// Dephasing generated by a diagonal operator: every pair gets
    /// `rate·(w_i − w_j)²`, i.e. the Lindblad channel `√(2·rate)·diag(w)`.
    pub fn add_diagonal_dephasing(&mut self, weights: &[f64], rate: f64) -> Result<&mut Self> {
        if weights.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: weights.len() });
        }
        for i in 0..self.n {
            for j in i + 1..self.n {
                let d = weights[i] - weights[j];
                self.add_pair_dephasing(i, j, rate * d * d)?;
            }
        }
        Ok(self)
    }

    /// Symmetric matrix of total pure-dephasing rates per pair.
    pub fn pair_rates(&self) -> nalgebra::DMatrix<f64> {
        let mut g = nalgebra::DMatrix::zeros(self.n, self.n);
        for &(i, j, r) in &self.dephasing {
            g[(i, j)] += r;
            g[(j, i)] += r;
        }
        g
    }

    /// Pair dephasing is completely positive iff the rate matrix is
    /// conditionally negative semidefinite (Schur-multiplier criterion).
    pub fn check_complete_positivity(&self) -> Result<()> {
        let n = self.n;
        if n < 2 {
            return Ok(());
        }
        let g = self.pair_rates();
        let p = nalgebra::DMatrix::<f64>::identity(n, n) - nalgebra::DMatrix::from_element(n, n, 1.0 / n as f64);
        let m = &p * (-g) * &p;
        let scale = m.amax().max(1.0);
        let min = m.symmetric_eigen().eigenvalues.min();
        if min < -1e-10 * scale {
            return Err(Error::InvalidArgument(format!(
                "dephasing rates are not completely positive (eigenvalue {min:e})"
            )));
        }
        Ok(())
    }
}

/// `dρ/dt` of the Lindblad equation.
pub fn lindblad_rhs(h: &CMatrix, rho: &CMatrix, dissipator: &Dissipator) -> CMatrix {
    let mut out = (h * rho - rho * h) * (-I * (2.0 * PI));
    for (l, rate) in &dissipator.jumps {
        let ld = dagger(l);
        let ldl = &ld * l;
        out += (l * rho * &ld - (&ldl * rho + rho * &ldl) * c(0.5)) * c(*rate);
    }
    for &(i, j, r) in &dissipator.dephasing {
        out[(i, j)] -= rho[(i, j)] * r;
        out[(j, i)] -= rho[(j, i)] * r;
    }
    out
}

/// The `n²×n²` generator of `lindblad_rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Liouvillian {
    n: usize,
    matrix: CMatrix,
}

impl Liouvillian {
    pub fn new(h: &CMatrix, dissipator: &Dissipator) -> Result<Self> {
        let n = h.nrows();
        if dissipator.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, got: dissipator.dim() });
        }
        let id = identity(n);
        let mut m = (kron(&id, h) - kron(&h.transpose(), &id)) * (-I * (2.0 * PI));
        for (l, rate) in &dissipator.jumps {
            let ldl = dagger(l) * l;
            m += (kron(&l.conjugate(), l) - kron(&id, &ldl) * c(0.5) - kron(&ldl.transpose(), &id) * c(0.5)) * c(*rate);
        }
        for &(i, j, r) in &dissipator.dephasing {
            m[(j * n + i, j * n + i)] -= c(r);
            m[(i * n + j, i * n + j)] -= c(r);
        }
        Ok(Self { n, matrix: m })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// `exp(𝓛·dt)`.
    pub fn propagator(&self, dt: f64) -> CMatrix {
        expm(&(&self.matrix * c(dt)))
    }

    /// Row of the generator that drives the coherence `ρ_ij`.
    pub fn coherence_row(&self, i: usize, j: usize) -> Vec<crate::linalg::C64> {
        self.matrix.row(j * self.n + i).iter().copied().collect()
    }
}

/// Superoperator of the unitary map `ρ ↦ UρU†`.
pub fn unitary_superoperator(u: &CMatrix) -> CMatrix {
    kron(&u.conjugate(), u)
}

/// Exact propagation over a constant segment of length `dt`.
pub fn propagate_const(h: &CMatrix, dissipator: &Dissipator, rho0: &DensityMatrix, dt: f64) -> Result<DensityMatrix> {
    if !(dt >= 0.0) {
        return invalid(format!("dt must be >= 0 (got {dt})"));
    }
    let l = Liouvillian::new(h, dissipator)?;
    let out = DensityMatrix::from_vec(&(l.propagator(dt) * rho0.to_vec()));
    out.check()?;
    Ok(out)
}

/// Unique `ρ_ss` with `𝓛ρ_ss = 0`.
pub fn steady_state(h: &CMatrix, dissipator: &Dissipator) -> Result<DensityMatrix> {
    let l = Liouvillian::new(h, dissipator)?;
    let svd = l.matrix.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let smax = svd.singular_values.max();
    let tol = 1e-11 * smax.max(1.0);
    let null: Vec<usize> = (0..svd.singular_values.len()).filter(|&k| svd.singular_values[k] <= tol).collect();
    if null.len() != 1 {
        return Err(Error::NonUniqueSteadyState(null.len()));
    }
    let v: CVector = v_t.row(null[0]).adjoint();
    let mut rho = unvectorize(&v);
    let tr = rho.trace();
    rho /= tr;
    let rho = (&rho + dagger(&rho)) * c(0.5);
    let dm = DensityMatrix { rho };
    dm.check()?;
    Ok(dm)
}

/// Weighted populations, `w·diag(ρ)`.
pub fn fluorescence_rate(rho: &DensityMatrix, weights: &[f64]) -> f64 {
    weights.iter().enumerate().map(|(k, w)| w * rho.rho[(k, k)].re).sum()
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    /// Set when the step does not resolve the fastest frequency with at
    /// least [`MIN_SAMPLES_PER_PERIOD`] samples.
    pub coarse_step: bool,
}

pub const MIN_SAMPLES_PER_PERIOD: f64 = 20.0;

/// Fixed-step RK4 integration of an explicitly time-dependent Hamiltonian.
///
/// The fastest frequency is taken as the larger of `carrier` and the
/// eigenvalue spread of `H(0)`.
pub fn propagate_timedep<F>(
    h_of_t: F,
    carrier: f64,
    dissipator: &Dissipator,
    rho0: &DensityMatrix,
    t_end: f64,
    dt_step: f64,
) -> Result<Trajectory>
where
    F: Fn(f64) -> CMatrix,
{
    if !(dt_step > 0.0) || !(t_end >= 0.0) {
        return invalid("need dt_step > 0 and t_end >= 0");
    }
    let ev = eigh(&h_of_t(0.0)).0;
    let spread = ev.last().unwrap() - ev.first().unwrap();
    let f_max = carrier.abs().max(spread);
    let coarse_step = f_max > 0.0 && dt_step > 1.0 / (MIN_SAMPLES_PER_PERIOD * f_max);

    let steps = (t_end / dt_step).round() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut rho = rho0.rho.clone();
    times.push(0.0);
    states.push(rho0.clone());
    for k in 0..steps {
        let t = k as f64 * dt_step;
        let h0 = h_of_t(t);
        let hm = h_of_t(t + 0.5 * dt_step);
        let h1 = h_of_t(t + dt_step);
        let k1 = lindblad_rhs(&h0, &rho, dissipator);
        let k2 = lindblad_rhs(&hm, &(&rho + &k1 * c(0.5 * dt_step)), dissipator);
        let k3 = lindblad_rhs(&hm, &(&rho + &k2 * c(0.5 * dt_step)), dissipator);
        let k4 = lindblad_rhs(&h1, &(&rho + &k3 * c(dt_step)), dissipator);
        rho += (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * c(dt_step / 6.0);
        times.push((k + 1) as f64 * dt_step);
        states.push(DensityMatrix { rho: rho.clone() });
    }
    Ok(Trajectory { times, states, coarse_step })
}

//! Spin operator algebra and Hamiltonian construction for the NV electron
//! spin (S = 1) and the ¹⁴N nucleus (I = 1).
//!
//! All Hamiltonians are in ordinary frequency units (MHz). Basis states are
//! ordered by descending projection, so for S = 1 index 0 is mₛ = +1,
//! index 1 is mₛ = 0 and index 2 is mₛ = −1. Product spaces put the electron
//! first.

use crate::error::{invalid, Error, Result};
use crate::linalg::{c, identity, kron, zeros, CMatrix, C64, I};
use crate::params::SpinSystemParams;

/// Index of mₛ = +1, 0, −1 in the S = 1 basis.
pub const MS_PLUS: usize = 0;
pub const MS_ZERO: usize = 1;
pub const MS_MINUS: usize = 2;

/// Basis index of a spin-1 projection `m` ∈ {+1, 0, −1}.
pub fn spin1_index(m: i32) -> Result<usize> {
    match m {
        1 => Ok(MS_PLUS),
        0 => Ok(MS_ZERO),
        -1 => Ok(MS_MINUS),
        _ => invalid(format!("spin-1 projection must be -1, 0 or 1 (got {m})")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinOperators {
    pub s: f64,
    pub sx: CMatrix,
    pub sy: CMatrix,
    pub sz: CMatrix,
}

impl SpinOperators {
    pub fn dim(&self) -> usize {
        self.sz.nrows()
    }

    pub fn identity(&self) -> CMatrix {
        identity(self.dim())
    }

    /// `v·S` for a real 3-vector.
    pub fn dot(&self, v: [f64; 3]) -> CMatrix {
        &self.sx * c(v[0]) + &self.sy * c(v[1]) + &self.sz * c(v[2])
    }

    pub fn component(&self, k: usize) -> &CMatrix {
        match k {
            0 => &self.sx,
            1 => &self.sy,
            _ => &self.sz,
        }
    }

    fn require_spin(&self, s: f64) -> Result<()> {
        if (self.s - s).abs() > 1e-12 {
            return Err(Error::DimensionMismatch {
                expected: (2.0 * s + 1.0) as usize,
                got: self.dim(),
            });
        }
        Ok(())
    }
}

/// Spin matrices for spin `s` from the ladder operators.
pub fn spin_matrices(s: f64) -> Result<SpinOperators> {
    let two_s = 2.0 * s;
    if !(two_s >= 0.0) || (two_s - two_s.round()).abs() > 1e-12 {
        return invalid(format!("spin must be a non-negative half-integer (got {s})"));
    }
    let n = two_s.round() as usize + 1;
    let m = |k: usize| s - k as f64;

    let mut sz = zeros(n);
    let mut splus = zeros(n);
    for k in 0..n {
        sz[(k, k)] = c(m(k));
        if k > 0 {
            // S+ |m> = sqrt(s(s+1) - m(m+1)) |m+1>, and |m+1> sits at k-1.
            let mk = m(k);
            splus[(k - 1, k)] = c((s * (s + 1.0) - mk * (mk + 1.0)).sqrt());
        }
    }
    let sminus = splus.adjoint();
    let sx = (&splus + &sminus) * c(0.5);
    let sy = (&splus - &sminus) * (-I * 0.5);
    Ok(SpinOperators { s, sx, sy, sz })
}

/// Zero-field splitting `D(Sz² − S(S+1)/3) + E(Sx² − Sy²)`.
pub fn build_zfs(ops: &SpinOperators, d: f64, e: f64) -> Result<CMatrix> {
    ops.require_spin(1.0)?;
    let s = ops.s;
    let sz2 = &ops.sz * &ops.sz;
    let axial = sz2 - ops.identity() * c(s * (s + 1.0) / 3.0);
    let rhombic = &ops.sx * &ops.sx - &ops.sy * &ops.sy;
    Ok(axial * c(d) + rhombic * c(e))
}

/// Electron Zeeman term `γ_e B·S`.
pub fn build_electron_zeeman(ops: &SpinOperators, b0: [f64; 3], gamma_e: f64) -> CMatrix {
    ops.dot(b0) * c(gamma_e)
}

/// Hyperfine coupling `Σ_jk A_jk S_j ⊗ I_k`.
pub fn build_hyperfine(e_ops: &SpinOperators, n_ops: &SpinOperators, a: [[f64; 3]; 3]) -> Result<CMatrix> {
    e_ops.require_spin(1.0)?;
    n_ops.require_spin(1.0)?;
    for j in 0..3 {
        for k in 0..3 {
            if (a[j][k] - a[k][j]).abs() > 1e-12 {
                return invalid("hyperfine tensor must be symmetric");
            }
        }
    }
    let n = e_ops.dim() * n_ops.dim();
    let mut h = zeros(n);
    for (j, row) in a.iter().enumerate() {
        for (k, &ajk) in row.iter().enumerate() {
            if ajk != 0.0 {
                h += kron(e_ops.component(j), n_ops.component(k)) * c(ajk);
            }
        }
    }
    Ok(h)
}

/// Nuclear Zeeman term `−γ_n B·I`.
pub fn build_nuclear_zeeman(n_ops: &SpinOperators, b0: [f64; 3], gamma_n: f64) -> CMatrix {
    n_ops.dot(b0) * c(-gamma_n)
}

/// Nuclear quadrupole term `P(Iz² − I(I+1)/3)`.
pub fn build_quadrupole(n_ops: &SpinOperators, p: f64) -> CMatrix {
    let s = n_ops.s;
    (&n_ops.sz * &n_ops.sz - n_ops.identity() * c(s * (s + 1.0) / 3.0)) * c(p)
}

/// Full ground-state spin Hamiltonian. Without the nucleus the result is the
/// 3×3 electron Hamiltonian; with it, the 9×9 electron ⊗ nucleus operator.
pub fn build_full_hamiltonian(params: &SpinSystemParams, include_nucleus: bool) -> CMatrix {
    let e_ops = spin_matrices(1.0).expect("spin 1");
    let h_e = build_zfs(&e_ops, params.d_zfs, params.e_strain).expect("spin 1")
        + build_electron_zeeman(&e_ops, params.b0, params.gamma_e);
    if !include_nucleus {
        return h_e;
    }
    let n_ops = e_ops.clone();
    let id3 = identity(3);
    let mut h_n = build_nuclear_zeeman(&n_ops, params.b0, params.gamma_n);
    if let Some(p) = params.quadrupole_p {
        h_n += build_quadrupole(&n_ops, p);
    }
    kron(&h_e, &id3)
        + build_hyperfine(&e_ops, &n_ops, params.a_tensor).expect("validated params")
        + kron(&id3, &h_n)
}

/// Linearly polarized MW coupling `ω₁(cos φ Sx + sin φ Sy)` in the lab frame,
/// to be multiplied by the carrier `cos(2π f t)`.
pub fn mw_coupling_operator(e_ops: &SpinOperators, omega1: f64, phase: f64) -> CMatrix {
    (&e_ops.sx * c(phase.cos()) + &e_ops.sy * c(phase.sin())) * c(omega1)
}

/// Drive strength and detuning of a two-level nutation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RabiParams {
    pub omega1: f64,
    pub detuning: f64,
}

impl RabiParams {
    pub fn new(omega1: f64, detuning: f64) -> Self {
        Self { omega1, detuning }
    }

    /// Generalized Rabi frequency `√(Δω² + ω₁²)`.
    pub fn generalized(&self) -> f64 {
        self.detuning.hypot(self.omega1)
    }
}

/// Population difference of a driven two-level system,
/// `r₃(t) = r₃(0)(Δω² + ω₁² cos 2πϖt)/ϖ²`.
pub fn analytic_nutation(r3_0: f64, params: &RabiParams, t: f64) -> f64 {
    let w = params.generalized();
    if w == 0.0 {
        return r3_0;
    }
    let d2 = params.detuning * params.detuning;
    let o2 = params.omega1 * params.omega1;
    r3_0 * (d2 + o2 * (2.0 * std::f64::consts::PI * w * t).cos()) / (w * w)
}

/// One coherent carrier: the lab-frame Hamiltonian gains
/// `operator · cos(2π·frequency·t + phase)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Drive {
    pub operator: CMatrix,
    pub frequency: f64,
    pub phase: f64,
}

/// Integer frame assignment: level `i` rotates at `Σ_c indices[i][c]·f_c`,
/// one entry per drive.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameGenerator {
    pub indices: Vec<Vec<i32>>,
}

impl FrameGenerator {
    pub fn new(indices: Vec<Vec<i32>>) -> Self {
        Self { indices }
    }

    pub fn frequency(&self, level: usize, drives: &[Drive]) -> f64 {
        self.indices[level]
            .iter()
            .zip(drives)
            .map(|(&k, d)| k as f64 * d.frequency)
            .sum()
    }
}

/// A dropped term is treated as resonant when it oscillates slower than this
/// multiple of its own amplitude.
pub const RWA_RESONANCE_FACTOR: f64 = 10.0;

/// Transform a driven Hamiltonian into the rotating frame given by `frame`
/// and apply the rotating-wave approximation.
///
/// Terms that become static are kept (drive terms with amplitude halved and
/// the carrier phase attached); everything left oscillating is dropped. A
/// dropped term that is near-resonant with its level pair is an error, since
/// the frame would leave a resonant coupling time dependent.
pub fn rotating_frame(h_static: &CMatrix, drives: &[Drive], frame: &FrameGenerator) -> Result<CMatrix> {
    let n = h_static.nrows();
    if frame.indices.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: frame.indices.len() });
    }
    for (i, idx) in frame.indices.iter().enumerate() {
        if idx.len() != drives.len() {
            return Err(Error::InvalidFrame(format!(
                "level {i} has {} frame indices for {} drives",
                idx.len(),
                drives.len()
            )));
        }
    }
    for d in drives {
        if d.operator.nrows() != n {
            return Err(Error::DimensionMismatch { expected: n, got: d.operator.nrows() });
        }
    }

    let f: Vec<f64> = (0..n).map(|i| frame.frequency(i, drives)).collect();
    let mut h = zeros(n);
    let same = |i: usize, j: usize| frame.indices[i] == frame.indices[j];
    // n_i - n_j == -s e_c
    let kept_component = |i: usize, j: usize, ch: usize, s: i32| {
        (0..drives.len()).all(|k| {
            let diff = frame.indices[i][k] - frame.indices[j][k];
            if k == ch {
                diff == -s
            } else {
                diff == 0
            }
        })
    };

    for i in 0..n {
        for j in 0..n {
            if same(i, j) {
                h[(i, j)] += h_static[(i, j)];
            }
            for (ch, d) in drives.iter().enumerate() {
                let v = d.operator[(i, j)];
                if v == C64::new(0.0, 0.0) {
                    continue;
                }
                for s in [1, -1] {
                    if kept_component(i, j, ch, s) {
                        h[(i, j)] += v * C64::from_polar(0.5, s as f64 * d.phase);
                    }
                }
            }
        }
    }
    for i in 0..n {
        h[(i, i)] -= c(f[i]);
    }

    // Resonance check on every dropped component.
    let check = |i: usize, j: usize, nu: f64, amp: f64| -> Result<()> {
        let eff = nu + (h[(i, i)].re - h[(j, j)].re);
        if amp > 0.0 && eff.abs() < RWA_RESONANCE_FACTOR * amp {
            return Err(Error::InvalidFrame(format!(
                "coupling between levels {i} and {j} (amplitude {amp:.4} MHz) is left oscillating at {eff:.4} MHz"
            )));
        }
        Ok(())
    };
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if !same(i, j) {
                check(i, j, f[i] - f[j], h_static[(i, j)].norm())?;
            }
            for (ch, d) in drives.iter().enumerate() {
                let amp = 0.5 * d.operator[(i, j)].norm();
                for s in [1, -1] {
                    if !kept_component(i, j, ch, s) {
                        check(i, j, f[i] - f[j] + s as f64 * d.frequency, amp)?;
                    }
                }
            }
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{commutator, eigvals_hermitian, hermiticity_error, max_abs};
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn spin_half_sz() {
        let ops = spin_matrices(0.5).unwrap();
        assert_eq!(ops.sz[(0, 0)], c(0.5));
        assert_eq!(ops.sz[(1, 1)], c(-0.5));
    }

    #[test]
    fn spin_one_matrices() {
        let ops = spin_matrices(1.0).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(ops.sz[(0, 0)], c(1.0));
        assert_eq!(ops.sz[(1, 1)], c(0.0));
        assert_eq!(ops.sz[(2, 2)], c(-1.0));
        for (i, j) in [(0, 1), (1, 0), (1, 2), (2, 1)] {
            assert!((ops.sx[(i, j)] - c(r)).norm() < 1e-15);
        }
        assert_eq!(ops.sx[(0, 2)], c(0.0));
    }

    #[test]
    fn non_half_integer_rejected() {
        assert!(spin_matrices(0.3).is_err());
        assert!(spin_matrices(-1.0).is_err());
    }

    proptest! {
        #[test]
        fn angular_momentum_algebra(two_s in 0usize..8) {
            let s = two_s as f64 / 2.0;
            let ops = spin_matrices(s).unwrap();
            let comm = commutator(&ops.sx, &ops.sy) - &ops.sz * I;
            prop_assert!(max_abs(&comm) < 1e-12);
            let comm = commutator(&ops.sy, &ops.sz) - &ops.sx * I;
            prop_assert!(max_abs(&comm) < 1e-12);
            let comm = commutator(&ops.sz, &ops.sx) - &ops.sy * I;
            prop_assert!(max_abs(&comm) < 1e-12);
            for m in [&ops.sx, &ops.sy, &ops.sz] {
                prop_assert!(hermiticity_error(m) < 1e-12);
            }
            let s2 = &ops.sx * &ops.sx + &ops.sy * &ops.sy + &ops.sz * &ops.sz;
            prop_assert!(max_abs(&(s2 - ops.identity() * c(s * (s + 1.0)))) < 1e-12);
        }

        #[test]
        fn full_hamiltonian_is_hermitian(
            d in 0.0..3000.0f64, e in 0.0..20.0f64,
            bx in -30.0..30.0f64, by in -30.0..30.0f64, bz in -30.0..30.0f64,
            axx in -5.0..5.0f64, axz in -2.0..2.0f64, azz in -5.0..5.0f64,
        ) {
            let p = SpinSystemParams {
                d_zfs: d, e_strain: e, b0: [bx, by, bz],
                a_tensor: [[axx, 0.0, axz], [0.0, axx, 0.0], [axz, 0.0, azz]],
                quadrupole_p: Some(-4.95),
                ..Default::default()
            };
            for nuc in [false, true] {
                prop_assert!(hermiticity_error(&build_full_hamiltonian(&p, nuc)) < 1e-12);
            }
        }

        #[test]
        fn nutation_bounded(r3 in -1.0..1.0f64, w1 in 0.0..50.0f64, dw in -50.0..50.0f64, t in 0.0..3.0f64) {
            let v = analytic_nutation(r3, &RabiParams::new(w1, dw), t);
            prop_assert!(v.abs() <= r3.abs() + 1e-12);
            let p = RabiParams::new(w1, dw);
            prop_assert!((p.generalized().powi(2) - (dw * dw + w1 * w1)).abs() <= 1e-9 * (1.0 + dw * dw + w1 * w1));
        }
    }

    #[test]
    fn nutation_minimum() {
        let p = RabiParams::new(7.0, 3.0);
        let w = p.generalized();
        // minimum at 2πϖt = π
        let v = analytic_nutation(1.0, &p, 0.5 / w);
        assert!(close(v, (9.0 - 49.0) / 58.0, 1e-14));
    }

    #[test]
    fn zfs_gap_and_degeneracy() {
        let ops = spin_matrices(1.0).unwrap();
        let ev = eigvals_hermitian(&build_zfs(&ops, 2870.0, 0.0).unwrap());
        assert!(close(ev[1] - ev[0], 2870.0, 1e-9));
        assert!(close(ev[2], ev[1], 1e-9));
    }

    #[test]
    fn zfs_strain_splits_by_2e() {
        let ops = spin_matrices(1.0).unwrap();
        let ev = eigvals_hermitian(&build_zfs(&ops, 2870.0, 8.5).unwrap());
        assert!(close(ev[2] - ev[1], 17.0, 1e-9));
    }

    #[test]
    fn zfs_zero() {
        let ops = spin_matrices(1.0).unwrap();
        assert_eq!(max_abs(&build_zfs(&ops, 0.0, 0.0).unwrap()), 0.0);
        assert!(build_zfs(&spin_matrices(0.5).unwrap(), 1.0, 0.0).is_err());
    }

    #[test]
    fn axial_zeeman_splitting_near_150_mhz() {
        let ops = spin_matrices(1.0).unwrap();
        let h = build_zfs(&ops, 2870.0, 0.0).unwrap() + build_electron_zeeman(&ops, [0.0, 0.0, 2.68], 28.025);
        let ev = eigvals_hermitian(&h);
        let split = ev[2] - ev[1];
        assert!(close(split, 2.0 * 28.025 * 2.68, 1e-9));
        assert!(close(split, 150.0, 1.0));
        assert_eq!(max_abs(&build_electron_zeeman(&ops, [0.0; 3], 28.025)), 0.0);
    }

    #[test]
    fn transverse_field_shift_is_second_order() {
        // Perturbation theory: the dark combination of mₛ=±1 is unshifted and
        // the bright one moves up by (γB)²/D; no first-order shift.
        let ops = spin_matrices(1.0).unwrap();
        let (d, gamma, b) = (2870.0, 28.025, 1.0);
        let h = build_zfs(&ops, d, 0.0).unwrap() + build_electron_zeeman(&ops, [b, 0.0, 0.0], gamma);
        let ev = eigvals_hermitian(&h);
        let second = (gamma * b).powi(2) / d;
        assert!(close(ev[1], d / 3.0, 1e-9));
        assert!(close(ev[2] - d / 3.0, second, 1e-3 * second));
        assert!(close(ev[0] + 2.0 * d / 3.0, -second, 1e-3 * second));
    }

    #[test]
    fn hyperfine_blocks() {
        let ops = spin_matrices(1.0).unwrap();
        let a = 2.2;
        let h = build_hyperfine(&ops, &ops, [[a, 0.0, 0.0], [0.0, a, 0.0], [0.0, 0.0, a]]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                // mₛ = 0 block vanishes
                assert_eq!(h[(3 * MS_ZERO + i, 3 * MS_ZERO + j)], c(0.0));
            }
        }
        let block = h.view((3 * MS_MINUS, 3 * MS_MINUS), (3, 3)).into_owned();
        let ev = eigvals_hermitian(&block);
        // −A·m_I for m_I = +1, 0, −1
        assert!(close(ev[0], -2.2, 1e-12) && close(ev[1], 0.0, 1e-12) && close(ev[2], 2.2, 1e-12));
        assert!(close(block[(0, 0)].re, -2.2, 1e-12));
        let zero = build_hyperfine(&ops, &ops, [[0.0; 3]; 3]).unwrap();
        assert_eq!(max_abs(&zero), 0.0);
        let mut asym = [[0.0; 3]; 3];
        asym[0][1] = 1.0;
        assert!(build_hyperfine(&ops, &ops, asym).is_err());
    }

    #[test]
    fn nuclear_zeeman_frequency() {
        let ops = spin_matrices(1.0).unwrap();
        let h = build_nuclear_zeeman(&ops, [0.0, 0.0, 20.0], 0.003077);
        let ev = eigvals_hermitian(&h);
        assert!(close(ev[2] - ev[1], 0.06154, 1e-12));
        let hx = build_nuclear_zeeman(&ops, [20.0, 0.0, 0.0], 0.003077);
        let ev = eigvals_hermitian(&hx);
        assert!(close(ev[0], -0.06154, 1e-12) && close(ev[1], 0.0, 1e-12) && close(ev[2], 0.06154, 1e-12));
        assert_eq!(max_abs(&build_nuclear_zeeman(&ops, [0.0; 3], 0.003077)), 0.0);
        // opposite sign to the electron term
        assert_eq!(h[(0, 0)], c(-0.003077 * 20.0));
    }

    #[test]
    fn full_hamiltonian_examples() {
        let p = SpinSystemParams::default();
        let ev = eigvals_hermitian(&build_full_hamiltonian(&p, false));
        assert!(close(ev[1] - ev[0], 2870.0, 1e-9) && close(ev[2] - ev[0], 2870.0, 1e-9));

        let p = SpinSystemParams { e_strain: 8.5, ..Default::default() };
        let ev = eigvals_hermitian(&build_full_hamiltonian(&p, false));
        assert!(close(ev[1] - ev[0], 2870.0 - 8.5, 1e-9));
        assert!(close(ev[2] - ev[0], 2870.0 + 8.5, 1e-9));

        let p = SpinSystemParams::default().with_isotropic_hyperfine(0.0);
        let ev = eigvals_hermitian(&build_full_hamiltonian(&p, true));
        assert_eq!(ev.len(), 9);
        for k in 0..3 {
            assert!(close(ev[0], ev[k], 1e-9));
        }
        for k in 3..9 {
            assert!(close(ev[3], ev[k], 1e-9));
        }
    }

    #[test]
    fn mw_coupling_phases() {
        let ops = spin_matrices(1.0).unwrap();
        assert!(max_abs(&(mw_coupling_operator(&ops, 2.0, 0.0) - &ops.sx * c(2.0))) < 1e-15);
        let y = mw_coupling_operator(&ops, 2.0, std::f64::consts::FRAC_PI_2);
        assert!(max_abs(&(y - &ops.sy * c(2.0))) < 1e-15);
        let x = mw_coupling_operator(&ops, 1.0, 0.0);
        assert!(close(x[(MS_ZERO, MS_PLUS)].norm(), x[(MS_ZERO, MS_MINUS)].norm(), 1e-15));
        assert!(close(x[(MS_ZERO, MS_PLUS)].norm(), std::f64::consts::FRAC_1_SQRT_2, 1e-15));
    }

    fn two_level(gap: f64) -> CMatrix {
        let mut h = zeros(2);
        h[(1, 1)] = c(gap);
        h
    }

    fn sigma_x(amp: f64) -> CMatrix {
        let mut v = zeros(2);
        v[(0, 1)] = c(amp);
        v[(1, 0)] = c(amp);
        v
    }

    #[test]
    fn rotating_frame_resonant() {
        let drive = Drive { operator: sigma_x(5.0), frequency: 200.0, phase: 0.0 };
        let frame = FrameGenerator::new(vec![vec![0], vec![1]]);
        let h = rotating_frame(&two_level(200.0), &[drive], &frame).unwrap();
        assert!((h[(0, 1)] - c(2.5)).norm() < 1e-12);
        assert!(h[(0, 0)].norm() < 1e-12 && h[(1, 1)].norm() < 1e-12);
    }

    #[test]
    fn rotating_frame_detuned_gap_is_generalized_rabi() {
        let (w1, dw) = (5.0, 3.0);
        let drive = Drive { operator: sigma_x(w1), frequency: 200.0 + dw, phase: 0.0 };
        let frame = FrameGenerator::new(vec![vec![0], vec![1]]);
        let h = rotating_frame(&two_level(200.0), &[drive], &frame).unwrap();
        assert!(close(h[(1, 1)].re.abs(), dw, 1e-12));
        let ev = eigvals_hermitian(&h);
        assert!(close(ev[1] - ev[0], RabiParams::new(w1, dw).generalized(), 1e-12));
    }

    #[test]
    fn rotating_frame_phase_and_zero_drive() {
        let drive = Drive { operator: sigma_x(4.0), frequency: 200.0, phase: 0.3 };
        let frame = FrameGenerator::new(vec![vec![0], vec![1]]);
        let h = rotating_frame(&two_level(200.0), &[drive], &frame).unwrap();
        assert!((h[(0, 1)] - C64::from_polar(2.0, 0.3)).norm() < 1e-12);
        assert!(hermiticity_error(&h) < 1e-12);

        let off = Drive { operator: sigma_x(0.0), frequency: 190.0, phase: 0.0 };
        let h = rotating_frame(&two_level(200.0), &[off], &frame).unwrap();
        assert!(h[(0, 1)].norm() == 0.0);
        assert!(close(h[(1, 1)].re, 10.0, 1e-12));
    }

    #[test]
    fn rotating_frame_rejects_resonant_leftover() {
        let drive = Drive { operator: sigma_x(5.0), frequency: 200.0, phase: 0.0 };
        let frame = FrameGenerator::new(vec![vec![0], vec![0]]);
        let err = rotating_frame(&two_level(200.0), &[drive], &frame).unwrap_err();
        assert!(matches!(err, Error::InvalidFrame(_)));
    }
}

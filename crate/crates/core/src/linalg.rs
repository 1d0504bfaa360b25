//! Dense complex matrix helpers shared by the spin and Liouville code.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::fmt::Write as _;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn zeros(n: usize) -> CMatrix {
    CMatrix::zeros(n, n)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn dagger(m: &CMatrix) -> CMatrix {
    m.adjoint()
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b + b * a
}

/// Kronecker product `a ⊗ b`; the first factor is the slow index.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// `|i><j|` in an `n`-dimensional space.
pub fn ket_bra(n: usize, i: usize, j: usize) -> CMatrix {
    let mut m = zeros(n);
    m[(i, j)] = c(1.0);
    m
}

/// Largest entrywise deviation from Hermiticity, `max |H - H†|`.
pub fn hermiticity_error(m: &CMatrix) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    max_abs(&(a - b))
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn eigvals_hermitian(m: &CMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues ascending and
/// eigenvectors as the matching columns.
pub fn eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = m.clone().symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vecs = zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Matrix exponential (Padé approximant with scaling and squaring).
pub fn expm(m: &CMatrix) -> CMatrix {
    m.exp()
}

/// Row-major `re+im i` rendering used for debug output.
pub fn format_matrix(m: &CMatrix) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|j| {
                let z = m[(i, j)];
                if z.im < 0.0 {
                    format!("{}{}i", z.re, z.im)
                } else {
                    format!("{}+{}i", z.re, z.im)
                }
            })
            .collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

/// Neumaier-compensated sum. Used wherever contributions from concurrently
/// evaluated members are accumulated, so the result does not depend on how
/// the work was scheduled.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_orders_first_factor_slow() {
        let a = ket_bra(2, 0, 1);
        let b = identity(3);
        let k = kron(&a, &b);
        assert_eq!(k.nrows(), 6);
        assert_eq!(k[(0, 3)], c(1.0));
        assert_eq!(k[(2, 5)], c(1.0));
        assert_eq!(k[(3, 0)], c(0.0));
    }

    #[test]
    fn expm_of_pauli_rotation() {
        let mut x = zeros(2);
        x[(0, 1)] = c(1.0);
        x[(1, 0)] = c(1.0);
        let theta = 1.234;
        let u = expm(&(x.clone() * (-I * theta)));
        assert!((u[(0, 0)] - c(theta.cos())).norm() < 1e-14);
        assert!((u[(0, 1)] - (-I * theta.sin())).norm() < 1e-14);
    }

    #[test]
    fn eigh_sorts_ascending() {
        let m = CMatrix::from_diagonal(&CVector::from_vec(vec![c(3.0), c(-1.0), c(2.0)]));
        let (vals, vecs) = eigh(&m);
        assert_eq!(vals, vec![-1.0, 2.0, 3.0]);
        assert!((vecs[(1, 0)].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn compensated_sum_keeps_small_terms() {
        let v = vec![1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }

    #[test]
    fn format_uses_re_im_i() {
        let mut m = zeros(1);
        m[(0, 0)] = C64::new(1.5, -2.0);
        assert_eq!(format_matrix(&m), "1.5-2i\n");
    }
}

//! Two-pulse echo envelope modulation from nuclear sub-Hamiltonians.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{c, dagger, eigh, expm, hermiticity_error, identity, kron, CMatrix, I};
use crate::liouville::{unitary_superoperator, DensityMatrix, Dissipator, DriveSpec, LevelScheme};
use crate::params::SpinSystemParams;
use crate::sequences::{Compiler, Segment};
use crate::spinops::{build_full_hamiltonian, spin1_index, FrameGenerator, MS_MINUS, MS_PLUS, MS_ZERO};

/// Largest tolerated ratio of inter-manifold coupling to electron gap
/// before the block extraction is flagged.
pub const SECULAR_MIXING_LIMIT: f64 = 0.01;

/// Nuclear Hamiltonians (MHz) of the two electron manifolds joined by the
/// MW transition.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldPair {
    pub ms_a: i32,
    pub ms_b: i32,
    pub h_a: CMatrix,
    pub h_b: CMatrix,
    /// Max ‖H_pq‖/|E_p − E_q| over electron manifolds p ≠ q.
    pub mixing: f64,
    pub warning: Option<String>,
}

impl ManifoldPair {
    /// Pair from explicit 3×3 blocks, labelled mₛ = 0 and −1.
    pub fn new(h_a: CMatrix, h_b: CMatrix) -> Result<Self> {
        for h in [&h_a, &h_b] {
            if h.shape() != (3, 3) {
                return Err(Error::DimensionMismatch { expected: 3, got: h.nrows() });
            }
            if hermiticity_error(h) > 1e-9 {
                return invalid("nuclear sub-Hamiltonian is not Hermitian");
            }
        }
        Ok(Self { ms_a: 0, ms_b: -1, h_a, h_b, mixing: 0.0, warning: None })
    }
}

/// Electron eigenbasis of the nucleus-averaged Hamiltonian, columns in
/// mₛ index order (+1, 0, −1), each assigned by largest overlap.
fn electron_basis(h_full: &CMatrix) -> CMatrix {
    let he = CMatrix::from_fn(3, 3, |p, q| (0..3).map(|m| h_full[(3 * p + m, 3 * q + m)]).sum::<num_complex::Complex64>() / c(3.0));
    let (_, vecs) = eigh(&he);
    let mut w = CMatrix::zeros(3, 3);
    let mut taken = [false; 3];
    for ms in [MS_ZERO, MS_PLUS, MS_MINUS] {
        let best = (0..3)
            .filter(|&k| !taken[k])
            .max_by(|&a, &b| vecs[(ms, a)].norm().total_cmp(&vecs[(ms, b)].norm()))
            .expect("three columns");
        taken[best] = true;
        // fix the phase so the dominant component is real positive
        let ph = vecs[(ms, best)] / c(vecs[(ms, best)].norm());
        w.set_column(ms, &(vecs.column(best) / ph));
    }
    w
}

/// Secular nuclear blocks of a 9-level electron ⊗ ¹⁴N Hamiltonian (electron
/// first). Blocks are taken in the electron eigenbasis, which is the plain
/// mₛ basis when the electron Hamiltonian is axial.
pub fn nuclear_subhamiltonians(h_full: &CMatrix, ms_a: i32, ms_b: i32) -> Result<ManifoldPair> {
    if h_full.shape() != (9, 9) {
        return Err(Error::DimensionMismatch { expected: 9, got: h_full.nrows() });
    }
    let (a, b) = (spin1_index(ms_a)?, spin1_index(ms_b)?);
    if a == b {
        return invalid("the two manifolds must differ");
    }
    let w = kron(&electron_basis(h_full), &identity(3));
    let h = dagger(&w) * h_full * &w;
    let block = |p: usize, q: usize| h.view((3 * p, 3 * q), (3, 3)).into_owned();
    let centre = |p: usize| (0..3).map(|m| h[(3 * p + m, 3 * p + m)].re).sum::<f64>() / 3.0;
    let mut mixing: f64 = 0.0;
    for p in 0..3 {
        for q in 0..3 {
            let off = block(p, q).norm();
            if p != q && off > 1e-12 {
                mixing = mixing.max(off / (centre(p) - centre(q)).abs());
            }
        }
    }
    let warning = (mixing > SECULAR_MIXING_LIMIT)
        .then(|| format!("electron manifolds mixed: coupling/gap = {mixing:.3e} > {SECULAR_MIXING_LIMIT}"));
    let herm = |m: CMatrix| (&m + dagger(&m)) * c(0.5);
    Ok(ManifoldPair { ms_a, ms_b, h_a: herm(block(a, a)), h_b: herm(block(b, b)), mixing, warning })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulationResult {
    pub tau: Vec<f64>,
    pub envelope: Vec<f64>,
    /// Peak-to-peak range of the sampled envelope.
    pub depth: f64,
    /// Nuclear transition frequencies of each manifold (MHz).
    pub freqs_a: Vec<f64>,
    pub freqs_b: Vec<f64>,
}

fn differences(vals: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..vals.len() {
        for j in i + 1..vals.len() {
            out.push((vals[i] - vals[j]).abs());
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

impl ModulationResult {
    /// Every frequency the envelope can contain: the basic lines of both
    /// manifolds and their sums and differences, ascending.
    pub fn predicted_lines(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.freqs_a.iter().chain(&self.freqs_b).copied().collect();
        for fa in &self.freqs_a {
            for fb in &self.freqs_b {
                out.push(fa + fb);
                out.push((fa - fb).abs());
            }
        }
        out.sort_by(f64::total_cmp);
        out.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
        out
    }
}

/// Echo envelope `E(τ) = ⅓ Re Tr(V_a V_b V_a† V_b†)` with
/// `V = exp(−2πiHτ)`, evaluated in the eigenbases of both blocks. After
/// ideal 90–τ–180–τ–90 pulses the population of manifold a is `(1+E)/2`.
pub fn mims_modulation(pair: &ManifoldPair, tau: &[f64]) -> Result<ModulationResult> {
    if let Some(t) = tau.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
        return invalid(format!("delays must be finite and >= 0 (got {t})"));
    }
    let (la, ua) = eigh(&pair.h_a);
    let (lb, ub) = eigh(&pair.h_b);
    let m = dagger(&ua) * &ub;
    let md = dagger(&m);
    let phases = |l: &[f64], t: f64| CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(3, l.iter().map(|x| (-I * (2.0 * PI * x * t)).exp())));
    let envelope: Vec<f64> = tau
        .iter()
        .map(|&t| {
            if t == 0.0 {
                return 1.0;
            }
            let (da, db) = (phases(&la, t), phases(&lb, t));
            let fwd = &da * &m * &db * &md;
            let back = da.conjugate() * &m * db.conjugate() * &md;
            (fwd * back).trace().re / 3.0
        })
        .collect();
    let hi = envelope.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = envelope.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ModulationResult {
        tau: tau.to_vec(),
        depth: if envelope.is_empty() { 0.0 } else { hi - lo },
        envelope,
        freqs_a: differences(&la),
        freqs_b: differences(&lb),
    })
}

/// Closed 9-level scheme holding the two blocks, with a MW transition
/// between manifolds a and b and the third manifold idle.
pub fn pair_scheme(pair: &ManifoldPair) -> Result<LevelScheme> {
    const OFFSET: f64 = 1000.0;
    let (a, b) = (spin1_index(pair.ms_a)?, spin1_index(pair.ms_b)?);
    if a == b {
        return invalid("the two manifolds must differ");
    }
    let idle = 3 - a - b;
    let mut h = CMatrix::zeros(9, 9);
    h.view_mut((3 * a, 3 * a), (3, 3)).copy_from(&pair.h_a);
    h.view_mut((3 * b, 3 * b), (3, 3)).copy_from(&(&pair.h_b + identity(3) * c(OFFSET)));
    h.view_mut((3 * idle, 3 * idle), (3, 3)).copy_from(&(identity(3) * c(-OFFSET)));
    let mut op = CMatrix::zeros(9, 9);
    for m in 0..3 {
        op[(3 * a + m, 3 * b + m)] = c(1.0);
        op[(3 * b + m, 3 * a + m)] = c(1.0);
    }
    let reference = OFFSET + (pair.h_b.trace().re - pair.h_a.trace().re) / 3.0;
    let frame = (0..9).map(|k| vec![i32::from(k / 3 == b)]).collect();
    let mut bright = vec![0.0; 9];
    bright[3 * a..3 * a + 3].fill(1.0);
    Ok(LevelScheme {
        name: "manifold-pair".into(),
        labels: (0..9).map(|k| format!("e{}_n{}", k / 3, k % 3)).collect(),
        h_static: h,
        mw: Some(DriveSpec { operator: op, reference }),
        laser: None,
        frame: FrameGenerator::new(frame),
        dissipator: Dissipator::new(9),
        fluorescence: vec![0.0; 9],
        bright,
        pumped_levels: (3 * a..3 * a + 3).collect(),
        ground_levels: (0..9).collect(),
        readout_window: 0.0,
        readout_rabi: 0.0,
    })
}

/// Envelope by explicit density-matrix propagation of ideal
/// 90–τ–180–τ–90 pulses through [`pair_scheme`]; `E = 2P_a − 1`. The
/// scheme is closed, so each delay is the unitary `exp(−2πiHτ)`.
pub fn direct_modulation(pair: &ManifoldPair, tau: &[f64]) -> Result<Vec<f64>> {
    let scheme = pair_scheme(pair)?;
    let mut comp = Compiler::new(&scheme, 0.0, 0.0).without_cache();
    let p90 = comp.segment(&Segment::ideal_pulse(PI / 2.0, 0.0, 0.0))?;
    let p180 = comp.segment(&Segment::ideal_pulse(PI, 0.0, 0.0))?;
    let v0 = &p90.propagator * scheme.pumped_state().to_vec();
    let gen = comp.hamiltonian(&Segment::delay(1.0))? * (-I * c(2.0 * PI));
    tau.iter()
        .map(|&t| {
            let free = unitary_superoperator(&expm(&(&gen * c(t))));
            let v = &p90.propagator * (&free * (&p180.propagator * (&free * &v0)));
            let rho = DensityMatrix::from_vec(&v);
            rho.check()?;
            Ok(2.0 * scheme.bright_population(&rho) - 1.0)
        })
        .collect()
}

/// Envelope for a parameter set: full 9-level Hamiltonian, secular blocks,
/// trace formula.
pub fn modulation_from_params(params: &SpinSystemParams, ms_a: i32, ms_b: i32, tau: &[f64]) -> Result<(ManifoldPair, ModulationResult)> {
    params.validate()?;
    let pair = nuclear_subhamiltonians(&build_full_hamiltonian(params, true), ms_a, ms_b)?;
    let res = mims_modulation(&pair, tau)?;
    Ok((pair, res))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchingOptions {
    /// Field direction (normalized internally).
    pub direction: [f64; 3],
    pub ms_a: i32,
    pub ms_b: i32,
    pub tau_max: f64,
    pub n_tau: usize,
}

impl Default for MatchingOptions {
    fn default() -> Self {
        // antiparallel to z so the applied field cancels the mₛ = −1 hyperfine field
        Self { direction: [0.0, 0.0, -1.0], ms_a: 0, ms_b: -1, tau_max: 5.0, n_tau: 501 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingScan {
    /// `(|B| in mT, depth)` per scanned field.
    pub points: Vec<(f64, f64)>,
    pub argmax_field: f64,
    /// Field where the nuclear Zeeman frequency equals |mₛ|·A_iso.
    pub matching_field: f64,
    pub warnings: Vec<String>,
}

/// Modulation depth versus field magnitude along `opts.direction`.
///
/// With an axial field, only off-axis hyperfine components (`A_xz`, `A_yz`)
/// make the nuclear blocks non-commuting; a purely axial tensor gives zero
/// depth at every field.
pub fn matching_scan(params: &SpinSystemParams, fields: &[f64], opts: &MatchingOptions) -> Result<MatchingScan> {
    if fields.is_empty() {
        return invalid("empty field list");
    }
    if opts.n_tau < 2 || !(opts.tau_max > 0.0) {
        return invalid("need n_tau >= 2 and tau_max > 0");
    }
    let norm = opts.direction.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return invalid("field direction must be nonzero");
    }
    let dir = opts.direction.map(|x| x / norm);
    let tau: Vec<f64> = (0..opts.n_tau).map(|k| opts.tau_max * k as f64 / (opts.n_tau - 1) as f64).collect();
    let mut points = Vec::with_capacity(fields.len());
    let mut warnings = Vec::new();
    for &b in fields {
        let p = SpinSystemParams { b0: dir.map(|x| x * b), ..params.clone() };
        let (pair, res) = modulation_from_params(&p, opts.ms_a, opts.ms_b, &tau)?;
        if let Some(w) = pair.warning {
            warnings.push(format!("B={b} mT: {w}"));
        }
        points.push((b, res.depth));
    }
    let argmax_field = points.iter().max_by(|x, y| x.1.total_cmp(&y.1)).map(|p| p.0).unwrap_or(f64::NAN);
    let a_iso = (params.a_tensor[0][0] + params.a_tensor[1][1] + params.a_tensor[2][2]) / 3.0;
    let matching_field = (opts.ms_b.abs().max(opts.ms_a.abs()) as f64 * a_iso / params.gamma_n).abs();
    Ok(MatchingScan { points, argmax_field, matching_field, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spinops::{build_nuclear_zeeman, spin_matrices};
    use proptest::prelude::*;

    fn herm(v: &[f64; 9]) -> CMatrix {
        let mut h = CMatrix::zeros(3, 3);
        h[(0, 0)] = c(v[0]);
        h[(1, 1)] = c(v[1]);
        h[(2, 2)] = c(v[2]);
        for (k, (i, j)) in [(0, 1), (0, 2), (1, 2)].into_iter().enumerate() {
            h[(i, j)] = num_complex::Complex64::new(v[3 + 2 * k], v[4 + 2 * k]);
            h[(j, i)] = h[(i, j)].conj();
        }
        h
    }

    #[test]
    fn identical_blocks_give_no_modulation() {
        let h = herm(&[1.0, -0.5, 0.2, 0.3, 0.1, -0.7, 0.0, 0.4, 0.2]);
        let pair = ManifoldPair::new(h.clone(), h).unwrap();
        let tau: Vec<f64> = (0..50).map(|k| 0.1 * k as f64).collect();
        let r = mims_modulation(&pair, &tau).unwrap();
        assert!(r.envelope.iter().all(|e| (e - 1.0).abs() < 1e-12));
        assert!(r.depth < 1e-12);
    }

    #[test]
    fn ms0_block_has_no_hyperfine() {
        let p = SpinSystemParams { b0: [0.0, 0.0, 50.0], ..Default::default() }.with_isotropic_hyperfine(2.2);
        let pair = nuclear_subhamiltonians(&build_full_hamiltonian(&p, true), 0, -1).unwrap();
        let nz = build_nuclear_zeeman(&spin_matrices(1.0).unwrap(), p.b0, p.gamma_n);
        let shift = pair.h_a.trace() / c(3.0);
        assert!((&pair.h_a - identity(3) * shift - nz).norm() < 1e-3, "{}", pair.h_a);
        assert!(pair.warning.is_none());
    }

    #[test]
    fn axial_hyperfine_in_minus_one() {
        let mut p = SpinSystemParams { b0: [0.0, 0.0, 10.0], ..Default::default() };
        p.a_tensor = [[0.0; 3], [0.0; 3], [0.0, 0.0, 2.2]];
        let pair = nuclear_subhamiltonians(&build_full_hamiltonian(&p, true), 0, -1).unwrap();
        let (l, _) = eigh(&pair.h_b);
        let gaps = differences(&l);
        let wl = p.gamma_n * 10.0;
        // levels −(−1)·2.2·m_I − ω_l m_I: spacings 2.2 ± ω_l
        assert!((gaps[0] - (2.2 - wl)).abs() < 1e-3 || (gaps[0] - (2.2 + wl)).abs() < 1e-3, "{gaps:?}");
    }

    #[test]
    fn zero_hyperfine_blocks_coincide_up_to_shift() {
        let p = SpinSystemParams { b0: [3.0, 0.0, 20.0], a_tensor: [[0.0; 3]; 3], ..Default::default() };
        let tau: Vec<f64> = (0..40).map(|k| 0.1 * k as f64).collect();
        let (_, r) = modulation_from_params(&p, 0, -1, &tau).unwrap();
        assert!(r.depth < 1e-9);
    }

    #[test]
    fn strong_mixing_is_flagged() {
        let p = SpinSystemParams { b0: [0.0, 0.0, 102.4], ..Default::default() }.with_isotropic_hyperfine(2.2);
        let pair = nuclear_subhamiltonians(&build_full_hamiltonian(&p, true), 0, -1).unwrap();
        assert!(pair.warning.is_some(), "mixing {}", pair.mixing);
    }

    #[test]
    fn spectral_lines_match_eigenvalue_differences() {
        let pair = ManifoldPair::new(
            herm(&[0.0, 1.3, 3.1, 0.4, 0.0, 0.2, 0.1, 0.0, -0.3]),
            herm(&[2.0, -1.1, 0.5, -0.6, 0.3, 0.0, 0.0, 0.9, 0.1]),
        )
        .unwrap();
        let n = 2048;
        let dt = 0.02;
        let tau: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        let r = mims_modulation(&pair, &tau).unwrap();
        let ts = crate::analysis::TimeSeries::new(tau, r.envelope.clone()).unwrap();
        let sp = crate::analysis::detrend_fft(&ts, crate::analysis::Window::Hann, true).unwrap();
        let lines = r.predicted_lines();
        let top = sp.magnitude.iter().copied().fold(0.0, f64::max);
        for pk in crate::analysis::peak_pick(&sp, 0.05 * top) {
            let near = lines.iter().any(|l| (l - pk.frequency).abs() <= sp.bin_width);
            assert!(near, "peak {} not in {lines:?}", pk.frequency);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn trace_formula_matches_propagation(
            a in proptest::array::uniform9(-3.0f64..3.0),
            b in proptest::array::uniform9(-3.0f64..3.0),
        ) {
            let pair = ManifoldPair::new(herm(&a), herm(&b)).unwrap();
            let tau: Vec<f64> = (0..12).map(|k| 0.17 * k as f64).collect();
            let m = mims_modulation(&pair, &tau).unwrap();
            let d = direct_modulation(&pair, &tau).unwrap();
            for (x, y) in m.envelope.iter().zip(&d) {
                prop_assert!((x - y).abs() < 1e-9);
                prop_assert!(x.abs() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn matching_scan_peaks_near_matching_field() {
        let mut p = SpinSystemParams::default().with_isotropic_hyperfine(2.2);
        p.a_tensor[0][2] = 0.3;
        p.a_tensor[2][0] = 0.3;
        let fields: Vec<f64> = (1..=30).map(|k| 50.0 * k as f64).collect();
        let s = matching_scan(&p, &fields, &MatchingOptions::default()).unwrap();
        assert!((s.argmax_field / s.matching_field - 1.0).abs() < 0.2, "{} vs {} {:?}", s.argmax_field, s.matching_field, s.points);
        let high = s.points.last().unwrap().1;
        assert!(high < 0.2 * s.points.iter().map(|p| p.1).fold(0.0, f64::max));
    }

    #[test]
    fn axial_tensor_axial_field_has_no_modulation() {
        let p = SpinSystemParams::default().with_isotropic_hyperfine(2.2);
        let s = matching_scan(&p, &[200.0, 700.0, 1200.0], &MatchingOptions::default()).unwrap();
        assert!(s.points.iter().all(|p| p.1 < 1e-9), "{:?}", s.points);
    }
}

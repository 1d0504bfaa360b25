use super::{DensityMatrix, Dissipator};
use crate::error::Result;
use crate::linalg::{c, eigh, identity, kron, zeros, CMatrix};
use crate::sequences::DEFAULT_READOUT_WINDOW;
use crate::params::{rate, SpinSystemParams, OPTICAL_TRANSITION_MHZ};
use crate::spinops::{
    build_full_hamiltonian, mw_coupling_operator, rotating_frame, spin_matrices, Drive, FrameGenerator, MS_MINUS,
    MS_PLUS, MS_ZERO,
};

/// A drive channel of a scheme. `operator` is normalized so that an
/// amplitude of 1 MHz gives a 1 MHz Rabi frequency on the addressed
/// transition; `reference` is the carrier frequency at zero detuning.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveSpec {
    pub operator: CMatrix,
    pub reference: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MwSetting {
    pub omega1: f64,
    pub detuning: f64,
    pub phase: f64,
}

impl MwSetting {
    pub fn new(omega1: f64, detuning: f64, phase: f64) -> Self {
        Self { omega1, detuning, phase }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaserSetting {
    pub rabi: f64,
    pub detuning: f64,
}

/// Levels, coherent couplings and incoherent channels of a reduced
/// Liouville model.
///
/// Frame indices list one entry per available drive, MW first.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelScheme {
    pub name: String,
    pub labels: Vec<String>,
    pub h_static: CMatrix,
    pub mw: Option<DriveSpec>,
    pub laser: Option<DriveSpec>,
    pub frame: FrameGenerator,
    pub dissipator: Dissipator,
    /// Fluorescence weights, photons/μs per unit population.
    pub fluorescence: Vec<f64>,
    /// Levels counted as mₛ = 0 by a population readout.
    pub bright: Vec<f64>,
    /// Levels populated (equally) by optical pumping.
    pub pumped_levels: Vec<usize>,
    pub ground_levels: Vec<usize>,
    /// Fluorescence integration window (μs) and laser Rabi frequency of the
    /// standard readout.
    pub readout_window: f64,
    pub readout_rabi: f64,
}

impl LevelScheme {
    pub fn dim(&self) -> usize {
        self.h_static.nrows()
    }

    pub fn has_laser(&self) -> bool {
        self.laser.is_some()
    }

    fn drives(&self, mw_detuning: f64, laser_detuning: f64, mw: Option<MwSetting>, laser: Option<LaserSetting>) -> Vec<Drive> {
        let mut drives = Vec::new();
        if let Some(spec) = &self.mw {
            let (amp, phase) = mw.map_or((0.0, 0.0), |m| (m.omega1, m.phase));
            drives.push(Drive { operator: &spec.operator * c(amp), frequency: spec.reference + mw_detuning, phase });
        }
        if let Some(spec) = &self.laser {
            let amp = laser.map_or(0.0, |l| l.rabi);
            drives.push(Drive { operator: &spec.operator * c(amp), frequency: spec.reference + laser_detuning, phase: 0.0 });
        }
        drives
    }

    /// Time-independent rotating-frame Hamiltonian for one segment. The
    /// carrier detunings fix the frame and must stay the same across a
    /// sequence; the settings only switch amplitudes and phase.
    pub fn rotating_hamiltonian(
        &self,
        mw_detuning: f64,
        laser_detuning: f64,
        mw: Option<MwSetting>,
        laser: Option<LaserSetting>,
    ) -> Result<CMatrix> {
        rotating_frame(&self.h_static, &self.drives(mw_detuning, laser_detuning, mw, laser), &self.frame)
    }

    /// RWA drive term for unit MW amplitude, `H(ω₁=1) − H(ω₁=0)`.
    pub fn mw_generator(&self, phase: f64) -> Result<CMatrix> {
        let on = self.rotating_hamiltonian(0.0, 0.0, Some(MwSetting::new(1.0, 0.0, phase)), None)?;
        let off = self.rotating_hamiltonian(0.0, 0.0, None, None)?;
        Ok(on - off)
    }

    pub fn fluorescence_rate(&self, rho: &DensityMatrix) -> f64 {
        super::fluorescence_rate(rho, &self.fluorescence)
    }

    pub fn bright_population(&self, rho: &DensityMatrix) -> f64 {
        super::fluorescence_rate(rho, &self.bright)
    }

    pub fn pumped_state(&self) -> DensityMatrix {
        DensityMatrix::mixed(self.dim(), &self.pumped_levels)
    }

    pub fn thermal_state(&self) -> DensityMatrix {
        DensityMatrix::mixed(self.dim(), &self.ground_levels)
    }
}

/// Energies of the mostly-mₛ = +1, 0, −1 electron eigenstates.
fn electron_levels(params: &SpinSystemParams) -> [f64; 3] {
    let (vals, vecs) = eigh(&build_full_hamiltonian(params, false));
    let mut out = [0.0; 3];
    let mut taken = [false; 3];
    // assign the mₛ=0 state first, then the remaining two by overlap
    for ms in [MS_ZERO, MS_PLUS, MS_MINUS] {
        let best = (0..3)
            .filter(|&k| !taken[k])
            .max_by(|&a, &b| vecs[(ms, a)].norm().total_cmp(&vecs[(ms, b)].norm()))
            .unwrap();
        taken[best] = true;
        out[ms] = vals[best];
    }
    out
}

/// Transition frequency mₛ = 0 → `ms_index`.
pub fn electron_transition(params: &SpinSystemParams, ms_index: usize) -> f64 {
    let lv = electron_levels(params);
    lv[ms_index] - lv[MS_ZERO]
}

fn labels(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn sym_coupling(n: usize, pairs: &[(usize, usize)]) -> CMatrix {
    let mut m = zeros(n);
    for &(i, j) in pairs {
        m[(i, j)] = c(-1.0);
        m[(j, i)] = c(-1.0);
    }
    m
}

/// Three-level model {g0, g1, e0}: laser on g0 ↔ e0, MW on g0 ↔ g1,
/// radiative decay e0 → g0, spin relaxation and dephasing in the ground
/// doublet. g1 stands for the mₛ = ±1 sublevel(s) and is dark.
pub fn build_paper_scheme(params: &SpinSystemParams) -> Result<LevelScheme> {
    params.validate()?;
    let (g0, g1, e0) = (0, 1, 2);
    let n = 3;
    let nu_mw = electron_transition(params, MS_MINUS);
    let mut h = zeros(n);
    h[(g1, g1)] = c(nu_mw);
    h[(e0, e0)] = c(OPTICAL_TRANSITION_MHZ);

    let mut d = Dissipator::new(n);
    d.add_decay(e0, g0, params.radiative_rate)?;
    let relax = 0.5 * rate(params.t1);
    d.add_decay(g0, g1, relax)?;
    d.add_decay(g1, g0, relax)?;
    d.add_diagonal_dephasing(&[0.0, 1.0, 0.0], params.pure_dephasing_rate())?;
    d.add_diagonal_dephasing(&[0.0, 0.0, 1.0], params.optical_dephasing)?;
    d.check_complete_positivity()?;

    Ok(LevelScheme {
        name: "paper3".into(),
        labels: labels(&["g0", "g1", "e0"]),
        h_static: h,
        mw: Some(DriveSpec { operator: sym_coupling(n, &[(g0, g1)]), reference: nu_mw }),
        laser: Some(DriveSpec { operator: sym_coupling(n, &[(g0, e0)]), reference: OPTICAL_TRANSITION_MHZ }),
        frame: FrameGenerator::new(vec![vec![0, 0], vec![1, 0], vec![0, 1]]),
        dissipator: d,
        fluorescence: vec![0.0, 0.0, params.radiative_rate],
        bright: vec![1.0, 0.0, 1.0],
        pumped_levels: vec![g0],
        ground_levels: vec![g0, g1],
        readout_window: DEFAULT_READOUT_WINDOW,
        readout_rabi: params.optical_rabi,
    })
}

/// Five-level model {g0, g1, e0, e1, s}: spin-conserving optical drive on
/// both spin branches, intersystem crossing e1 → s and shelf decay s → g0.
/// The shelf path is what polarizes the spin into g0 under illumination.
pub fn build_extended_scheme(params: &SpinSystemParams) -> Result<LevelScheme> {
    params.validate()?;
    let (g0, g1, e0, e1, s) = (0, 1, 2, 3, 4);
    let n = 5;
    let nu_mw = electron_transition(params, MS_MINUS);
    let mut h = zeros(n);
    h[(g1, g1)] = c(nu_mw);
    h[(e0, e0)] = c(OPTICAL_TRANSITION_MHZ);
    h[(e1, e1)] = c(OPTICAL_TRANSITION_MHZ + nu_mw);

    let mut d = Dissipator::new(n);
    d.add_decay(e0, g0, params.radiative_rate)?;
    d.add_decay(e1, g1, params.radiative_rate)?;
    d.add_decay(e1, s, params.isc_rate)?;
    d.add_decay(s, g0, params.shelf_rate)?;
    let relax = 0.5 * rate(params.t1);
    d.add_decay(g0, g1, relax)?;
    d.add_decay(g1, g0, relax)?;
    d.add_diagonal_dephasing(&[0.0, 1.0, 0.0, 1.0, 0.0], params.pure_dephasing_rate())?;
    d.add_diagonal_dephasing(&[0.0, 0.0, 1.0, 1.0, 0.0], params.optical_dephasing)?;
    d.check_complete_positivity()?;

    Ok(LevelScheme {
        name: "extended5".into(),
        labels: labels(&["g0", "g1", "e0", "e1", "s"]),
        h_static: h,
        mw: Some(DriveSpec { operator: sym_coupling(n, &[(g0, g1)]), reference: nu_mw }),
        laser: Some(DriveSpec { operator: sym_coupling(n, &[(g0, e0), (g1, e1)]), reference: OPTICAL_TRANSITION_MHZ }),
        frame: FrameGenerator::new(vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![1, 1], vec![0, 0]]),
        dissipator: d,
        fluorescence: vec![0.0, 0.0, params.radiative_rate, params.radiative_rate, 0.0],
        bright: vec![1.0, 0.0, 1.0, 0.0, 0.0],
        pumped_levels: vec![g0],
        ground_levels: vec![g0, g1],
        readout_window: DEFAULT_READOUT_WINDOW,
        readout_rabi: params.optical_rabi,
    })
}

/// Electron T₁ relaxation and field-noise dephasing on the spin triplet.
/// Each mₛ = 0 ↔ ±1 jump runs at 1/(3T₁) so the coherence loss from the
/// jumps is 1/(2T₁), matching the three-level `paper3` scheme.
fn triplet_dissipation(d: &mut Dissipator, params: &SpinSystemParams, nuclear_dim: usize) -> Result<()> {
    let id_n = identity(nuclear_dim);
    let kappa = rate(params.t1) / 3.0;
    for (from, to) in [(MS_ZERO, MS_PLUS), (MS_ZERO, MS_MINUS), (MS_PLUS, MS_ZERO), (MS_MINUS, MS_ZERO)] {
        let mut op = zeros(3);
        op[(to, from)] = c(1.0);
        d.add_jump(kron(&op, &id_n), kappa)?;
    }
    let w: Vec<f64> = [1.0, 0.0, -1.0].iter().flat_map(|&m| std::iter::repeat_n(m, nuclear_dim)).collect();
    d.add_diagonal_dephasing(&w, params.pure_dephasing_rate())?;
    d.check_complete_positivity()
}

/// Ground spin triplet {+1, 0, −1} without optical levels. One MW tone at
/// the mean of the two transitions addresses both, so a rhombic splitting
/// 2E shows up as static detunings ±E.
pub fn build_triplet_scheme(params: &SpinSystemParams) -> Result<LevelScheme> {
    params.validate()?;
    let ops = spin_matrices(1.0)?;
    let lv = electron_levels(params);
    let nu_mw = 0.5 * (lv[MS_PLUS] + lv[MS_MINUS]) - lv[MS_ZERO];
    let mut d = Dissipator::new(3);
    triplet_dissipation(&mut d, params, 1)?;
    Ok(LevelScheme {
        name: "triplet".into(),
        labels: labels(&["+1", "0", "-1"]),
        h_static: build_full_hamiltonian(params, false),
        mw: Some(DriveSpec { operator: mw_coupling_operator(&ops, 1.0, params.mw_polarization), reference: nu_mw }),
        laser: None,
        frame: FrameGenerator::new(vec![vec![1], vec![0], vec![1]]),
        dissipator: d,
        fluorescence: vec![0.0; 3],
        bright: vec![0.0, 1.0, 0.0],
        pumped_levels: vec![MS_ZERO],
        ground_levels: vec![0, 1, 2],
        readout_window: 0.0,
        readout_rabi: 0.0,
    })
}

/// Electron ⊗ ¹⁴N model (9 levels) driven on mₛ = 0 ↔ `addressed_ms`.
///
/// The other mₛ = ±1 level joins the MW frame only if its transition lies
/// within 10·ω₁ of the addressed one; otherwise it is left out of the frame
/// and its coupling is dropped as off-resonant. When restricted, the drive
/// is scaled by √2 so the addressed transition nutates at ω₁.
pub fn build_hyperfine_scheme(params: &SpinSystemParams, addressed_ms: i32) -> Result<LevelScheme> {
    params.validate()?;
    let addressed = crate::spinops::spin1_index(addressed_ms)?;
    if addressed == MS_ZERO {
        return crate::error::invalid("addressed transition must be mₛ = ±1");
    }
    let other = if addressed == MS_PLUS { MS_MINUS } else { MS_PLUS };
    let nu_addr = electron_transition(params, addressed);
    let nu_other = electron_transition(params, other);
    let restricted = (nu_other - nu_addr).abs() > 10.0 * params.mw_rabi;

    let ops = spin_matrices(1.0)?;
    let scale = if restricted { std::f64::consts::SQRT_2 } else { 1.0 };
    let mw_op = kron(&(mw_coupling_operator(&ops, 1.0, params.mw_polarization) * c(scale)), &identity(3));

    let mut frame = Vec::with_capacity(9);
    let mut bright = Vec::with_capacity(9);
    let mut lab = Vec::with_capacity(9);
    for ms in 0..3 {
        let k = if ms == MS_ZERO || (ms == other && restricted) { 0 } else { 1 };
        for name in ["+1", "0", "-1"] {
            frame.push(vec![k]);
            bright.push(if ms == MS_ZERO { 1.0 } else { 0.0 });
            lab.push(format!("ms{}_mI{}", ["+1", "0", "-1"][ms], name));
        }
    }
    let mut d = Dissipator::new(9);
    triplet_dissipation(&mut d, params, 3)?;
    Ok(LevelScheme {
        name: "hyperfine9".into(),
        labels: lab,
        h_static: build_full_hamiltonian(params, true),
        mw: Some(DriveSpec { operator: mw_op, reference: nu_addr }),
        laser: None,
        frame: FrameGenerator::new(frame),
        dissipator: d,
        fluorescence: vec![0.0; 9],
        bright,
        pumped_levels: (3 * MS_ZERO..3 * MS_ZERO + 3).collect(),
        ground_levels: (0..9).collect(),
        readout_window: 0.0,
        readout_rabi: 0.0,
    })
}

//! Pulse sequences on a [`LevelScheme`], compiled into cached segment
//! propagators, and the standard experiments built from them.

mod ensemble;
mod experiments;
mod readout;

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::linalg::{expm, identity, CMatrix, CVector, I};
use crate::liouville::{unitary_superoperator, DensityMatrix, LaserSetting, LevelScheme, Liouvillian, MwSetting};

pub use ensemble::{gauss_hermite, Distribution, EnsembleSpec, Sampling};
pub use experiments::{
    run_echo_decay, run_hahn, run_rabi, run_zeno_sweep, EchoDecayOptions, EchoMode, HahnOptions, Illumination,
    ZenoOptions, ZenoPoint,
};
pub use readout::{apply_readout_model, Noise, ReadoutModel};

/// Default fluorescence integration window (μs).
pub const DEFAULT_READOUT_WINDOW: f64 = 0.3;

/// Duration of a pulse of `angle` radians at Rabi frequency `omega1` (MHz).
pub fn pulse_duration(angle: f64, omega1: f64) -> Result<f64> {
    if !(omega1 > 0.0) || !omega1.is_finite() {
        return invalid(format!("omega1 must be > 0 (got {omega1})"));
    }
    Ok(angle / (2.0 * PI * omega1))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Segment {
    pub duration: f64,
    pub mw: Option<MwSetting>,
    pub laser: Option<LaserSetting>,
    /// Collect the readout signal in this segment.
    pub readout: bool,
    /// Instantaneous rotation by this angle about the MW phase axis; the
    /// segment then has zero duration and no free evolution.
    pub ideal_angle: Option<f64>,
}

impl Segment {
    pub fn delay(duration: f64) -> Self {
        Self { duration, ..Default::default() }
    }

    pub fn mw(duration: f64, mw: MwSetting) -> Self {
        Self { duration, mw: Some(mw), ..Default::default() }
    }

    /// Finite pulse of the given angle at resonance-defined duration.
    pub fn pulse(angle: f64, mw: MwSetting) -> Result<Self> {
        Ok(Self::mw(pulse_duration(angle, mw.omega1)?, mw))
    }

    pub fn ideal_pulse(angle: f64, phase: f64, detuning: f64) -> Self {
        Self { mw: Some(MwSetting::new(0.0, detuning, phase)), ideal_angle: Some(angle), ..Default::default() }
    }

    /// Laser readout integrating fluorescence over `window`.
    pub fn laser_readout(window: f64, rabi: f64) -> Self {
        Self { duration: window, laser: Some(LaserSetting { rabi, detuning: 0.0 }), readout: true, ..Default::default() }
    }

    /// Zero-length population readout.
    pub fn observe() -> Self {
        Self { readout: true, ..Default::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.duration >= 0.0) || !self.duration.is_finite() {
            return invalid(format!("segment duration must be >= 0 (got {})", self.duration));
        }
        if self.ideal_angle.is_some() && self.duration != 0.0 {
            return invalid("ideal pulses have zero duration");
        }
        if self.ideal_angle.is_some() && self.mw.is_none() {
            return invalid("ideal pulse needs an MW phase");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// Maximally mixed over the scheme's ground levels.
    Thermal,
    OpticallyPumped,
    Explicit(DensityMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseSequence {
    pub segments: Vec<Segment>,
    pub initial: InitialState,
}

impl PulseSequence {
    pub fn new(initial: InitialState) -> Self {
        Self { segments: Vec::new(), initial }
    }

    pub fn push(mut self, seg: Segment) -> Self {
        self.segments.push(seg);
        self
    }

    /// Append the scheme's standard readout: a laser segment of
    /// `scheme.readout_window` when the scheme has optical levels, otherwise
    /// a bright-population observation.
    pub fn read_out(self, scheme: &LevelScheme) -> Self {
        let seg = if scheme.has_laser() {
            Segment::laser_readout(scheme.readout_window, scheme.readout_rabi)
        } else {
            Segment::observe()
        };
        self.push(seg)
    }

    fn initial_state(&self, scheme: &LevelScheme) -> Result<DensityMatrix> {
        let rho = match &self.initial {
            InitialState::Thermal => scheme.thermal_state(),
            InitialState::OpticallyPumped => scheme.pumped_state(),
            InitialState::Explicit(r) => r.clone(),
        };
        if rho.dim() != scheme.dim() {
            return Err(Error::DimensionMismatch { expected: scheme.dim(), got: rho.dim() });
        }
        Ok(rho)
    }
}

/// Propagator of one segment plus, for readout segments, the linear
/// functional on vec(ρ) that yields the collected signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentOp {
    pub propagator: CMatrix,
    pub readout: Option<CVector>,
    /// Readout functional applied to the optically pumped state.
    pub reference: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct SegmentKey([u64; 6]);

impl SegmentKey {
    fn of(seg: &Segment) -> Self {
        let mw = seg.mw.unwrap_or(MwSetting::new(f64::NAN, 0.0, f64::NAN));
        let rabi = seg.laser.map_or(f64::NAN, |l| l.rabi);
        Self([
            seg.duration.to_bits(),
            mw.omega1.to_bits(),
            mw.phase.to_bits(),
            rabi.to_bits(),
            seg.ideal_angle.unwrap_or(f64::NAN).to_bits(),
            seg.readout as u64,
        ])
    }
}

/// Builds segment propagators for fixed carrier detunings, caching them
/// by segment signature.
#[derive(Debug)]
pub struct Compiler<'a> {
    scheme: &'a LevelScheme,
    mw_detuning: f64,
    laser_detuning: f64,
    caching: bool,
    cache: HashMap<SegmentKey, Arc<SegmentOp>>,
    pumped: CVector,
}

impl<'a> Compiler<'a> {
    pub fn new(scheme: &'a LevelScheme, mw_detuning: f64, laser_detuning: f64) -> Self {
        Self {
            scheme,
            mw_detuning,
            laser_detuning,
            caching: true,
            cache: HashMap::new(),
            pumped: scheme.pumped_state().to_vec(),
        }
    }

    pub fn without_cache(mut self) -> Self {
        self.caching = false;
        self
    }

    pub fn cached_segments(&self) -> usize {
        self.cache.len()
    }

    pub fn scheme(&self) -> &LevelScheme {
        self.scheme
    }

    /// Rotating-frame Hamiltonian of a segment at this compiler's carriers.
    pub fn hamiltonian(&self, seg: &Segment) -> Result<CMatrix> {
        self.scheme.rotating_hamiltonian(self.mw_detuning, self.laser_detuning, seg.mw, seg.laser)
    }

    fn check_carriers(&self, seg: &Segment) -> Result<()> {
        if let Some(mw) = seg.mw {
            if self.scheme.mw.is_none() {
                return Err(Error::Compile("segment drives MW but the scheme has no MW transition".into()));
            }
            if mw.detuning != self.mw_detuning {
                return Err(Error::Compile(format!(
                    "MW detuning {} differs from the sequence carrier {}; one carrier per sequence",
                    mw.detuning, self.mw_detuning
                )));
            }
        }
        if let Some(l) = seg.laser {
            if self.scheme.laser.is_none() {
                return Err(Error::Compile("segment drives the laser but the scheme has no optical transition".into()));
            }
            if l.detuning != self.laser_detuning {
                return Err(Error::Compile(format!(
                    "laser detuning {} differs from the sequence carrier {}",
                    l.detuning, self.laser_detuning
                )));
            }
        }
        Ok(())
    }

    fn build(&self, seg: &Segment) -> Result<SegmentOp> {
        seg.validate()?;
        self.check_carriers(seg)?;
        let n = self.scheme.dim();
        let nn = n * n;
        if let Some(angle) = seg.ideal_angle {
            let g = self.scheme.mw_generator(seg.mw.map_or(0.0, |m| m.phase))?;
            let u = expm(&(g * (-I * angle)));
            return Ok(SegmentOp { propagator: unitary_superoperator(&u), readout: None, reference: 0.0 });
        }
        let l = Liouvillian::new(&self.hamiltonian(seg)?, &self.scheme.dissipator)?;
        let weights: Vec<f64> = if seg.laser.is_some() { self.scheme.fluorescence.clone() } else { self.scheme.bright.clone() };
        let selector = CVector::from_fn(nn, |k, _| {
            let (i, j) = (k % n, k / n);
            if i == j {
                crate::linalg::c(weights[i])
            } else {
                crate::linalg::c(0.0)
            }
        });
        if seg.duration == 0.0 {
            let readout = seg.readout.then(|| selector.clone());
            let reference = readout.as_ref().map_or(0.0, |r| r.dot(&self.pumped).re);
            return Ok(SegmentOp { propagator: identity(nn), readout, reference });
        }
        if seg.readout && seg.laser.is_some() {
            // exp([[L, I], [0, 0]]·T) = [[e^{LT}, ∫₀ᵀ e^{Ls} ds], [0, I]]
            let mut aug = CMatrix::zeros(2 * nn, 2 * nn);
            aug.view_mut((0, 0), (nn, nn)).copy_from(&(l.matrix() * crate::linalg::c(seg.duration)));
            for k in 0..nn {
                aug[(k, nn + k)] = crate::linalg::c(seg.duration);
            }
            let e = expm(&aug);
            let prop = e.view((0, 0), (nn, nn)).into_owned();
            let integral = e.view((0, nn), (nn, nn)).into_owned();
            let functional = integral.transpose() * &selector;
            let reference = functional.dot(&self.pumped).re;
            return Ok(SegmentOp { propagator: prop, readout: Some(functional), reference });
        }
        let prop = l.propagator(seg.duration);
        let readout = seg.readout.then(|| selector.clone());
        let reference = readout.as_ref().map_or(0.0, |r| r.dot(&self.pumped).re);
        Ok(SegmentOp { propagator: prop, readout, reference })
    }

    pub fn segment(&mut self, seg: &Segment) -> Result<Arc<SegmentOp>> {
        self.check_carriers(seg)?;
        if !self.caching {
            return Ok(Arc::new(self.build(seg)?));
        }
        let key = SegmentKey::of(seg);
        if let Some(op) = self.cache.get(&key) {
            return Ok(op.clone());
        }
        let op = Arc::new(self.build(seg)?);
        self.cache.insert(key, op.clone());
        Ok(op)
    }

    pub fn compile(&mut self, seq: &PulseSequence) -> Result<CompiledSequence> {
        let rho0 = seq.initial_state(self.scheme)?;
        let ops = seq.segments.iter().map(|s| self.segment(s)).collect::<Result<Vec<_>>>()?;
        Ok(CompiledSequence { n: self.scheme.dim(), initial: rho0.to_vec(), ops })
    }
}

/// Compile with carriers taken from the sequence itself. All MW segments
/// must share one detuning (likewise for the laser).
pub fn compile(seq: &PulseSequence, scheme: &LevelScheme) -> Result<CompiledSequence> {
    let mw_det = seq.segments.iter().find_map(|s| s.mw.map(|m| m.detuning)).unwrap_or(0.0);
    let laser_det = seq.segments.iter().find_map(|s| s.laser.map(|l| l.detuning)).unwrap_or(0.0);
    Compiler::new(scheme, mw_det, laser_det).compile(seq)
}

#[derive(Debug, Clone)]
pub struct CompiledSequence {
    n: usize,
    initial: CVector,
    pub ops: Vec<Arc<SegmentOp>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceResult {
    pub final_state: DensityMatrix,
    /// Raw readout values, one per readout segment.
    pub readouts: Vec<f64>,
    /// Σ readouts / Σ references; NaN without readout segments.
    pub signal: f64,
}

impl CompiledSequence {
    /// Product of all segment propagators (identity when empty).
    pub fn total_propagator(&self) -> CMatrix {
        self.ops.iter().fold(identity(self.n * self.n), |acc, op| &op.propagator * acc)
    }

    pub fn run_from(&self, rho0: &DensityMatrix) -> Result<SequenceResult> {
        if rho0.dim() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: rho0.dim() });
        }
        let mut v = rho0.to_vec();
        let mut readouts = Vec::new();
        let mut refs = Vec::new();
        for op in &self.ops {
            if let Some(r) = &op.readout {
                readouts.push(r.dot(&v).re);
                refs.push(op.reference);
            }
            v = &op.propagator * v;
        }
        let final_state = DensityMatrix::from_vec(&v);
        final_state.check()?;
        let signal = if readouts.is_empty() {
            f64::NAN
        } else {
            let den = crate::linalg::compensated_sum(refs.iter().copied());
            if den == 0.0 {
                return Err(Error::InvalidState("readout reference is zero".into()));
            }
            crate::linalg::compensated_sum(readouts.iter().copied()) / den
        };
        Ok(SequenceResult { final_state, readouts, signal })
    }

    pub fn run(&self) -> Result<SequenceResult> {
        self.run_from(&DensityMatrix::from_vec(&self.initial))
    }
}

//! Pulse sequences: representation, exact piecewise-constant propagation,
//! toggling-frame analysis, the named encoded sequences and DFS residence.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix2, Matrix4, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::ensemble::GradientWaveform;
use crate::error::{Error, Result};
use crate::hamiltonians::{h_internal, logical_decompose, SpinSystem};
use crate::optimize::nelder_mead;
use crate::spinops::{
    c, expm_hermitian, logical_frame, pauli_embed, restrict_to_code, Axis, DensityMatrix,
    LogicalChoice, LogicalFrame, Operator, Spin, PROPAGATION_TOL, STATE_TOL,
};

/// Duration of the hard refocusing pulses, s.
pub const HARD_PI_DURATION: f64 = 62.4e-6;
/// Free evolution between refocusing pulses in the encoded x train, s.
pub const ENC_X_DELAY: f64 = 630e-6;
/// Cycles of the encoded x train that produce a quarter turn.
pub const ENC_X_REFERENCE_CYCLES: usize = 64;
/// Default alternating phase pattern of the refocusing pulses (+x, +x, -x, -x).
pub const WALTZ_PATTERN: [f64; 4] = [0.0, 0.0, PI, PI];
/// Shortest internal integration step, s.
pub const MIN_SUBSTEP: f64 = 1e-6;
/// Substeps per pulse when sampling populations.
pub const SUBSTEPS_PER_PULSE: usize = 32;

/// Name of the built-in composite refocusing pulse.
pub const COMPOSITE_90X_180Y_90X: &str = "90x-180y-90x";

const TIME_EPS: f64 = 1e-15;

type M4 = Matrix4<C64>;

/// Envelope of a finite RF pulse.
#[derive(Debug, Clone, PartialEq)]
pub enum PulseShape {
    Hard,
    /// A named composite pulse built from constant-amplitude elements.
    Composite(String),
}

impl PulseShape {
    /// Elements as `(fraction of the pulse duration, phase offset)`.
    pub fn elements(&self) -> Result<Vec<(f64, f64)>> {
        match self {
            PulseShape::Hard => Ok(vec![(1.0, 0.0)]),
            PulseShape::Composite(name) if name == COMPOSITE_90X_180Y_90X => {
                Ok(vec![(0.25, 0.0), (0.5, PI / 2.0), (0.25, 0.0)])
            }
            PulseShape::Composite(name) => Err(Error::UnknownSequence(format!("composite:{name}"))),
        }
    }

    fn token(&self) -> String {
        match self {
            PulseShape::Hard => "hard".into(),
            PulseShape::Composite(name) => format!("composite:{name}"),
        }
    }

    fn from_token(token: &str) -> Result<Self> {
        let shape = if token == "hard" {
            PulseShape::Hard
        } else if let Some(name) = token.strip_prefix("composite:") {
            PulseShape::Composite(name.to_string())
        } else {
            return Err(Error::UnknownSequence(token.to_string()));
        };
        shape.elements()?;
        Ok(shape)
    }
}

/// One timed element of a pulse sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum PulseEvent {
    /// Free evolution under the internal Hamiltonian, s.
    Delay { duration: f64 },
    /// Collective on-resonance drive; `amplitude` is the nutation rate in rad/s.
    RfPulse {
        amplitude: f64,
        phase: f64,
        duration: f64,
        shape: PulseShape,
    },
    /// Instantaneous unitary.
    IdealRotation { op: Operator },
}

impl PulseEvent {
    pub fn delay(duration: f64) -> Self {
        PulseEvent::Delay { duration }
    }

    /// Finite pulse with total nutation `flip` (rad) spread over `duration`.
    pub fn pulse(flip: f64, phase: f64, duration: f64, shape: PulseShape) -> Self {
        PulseEvent::RfPulse {
            amplitude: flip / duration,
            phase,
            duration,
            shape,
        }
    }

    pub fn ideal(op: Operator) -> Self {
        PulseEvent::IdealRotation { op }
    }

    pub fn duration(&self) -> f64 {
        match self {
            PulseEvent::Delay { duration } | PulseEvent::RfPulse { duration, .. } => *duration,
            PulseEvent::IdealRotation { .. } => 0.0,
        }
    }

    /// Total nutation angle of an RF pulse.
    pub fn nutation_angle(&self) -> Option<f64> {
        match self {
            PulseEvent::RfPulse {
                amplitude,
                duration,
                ..
            } => Some(amplitude * duration),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            PulseEvent::Delay { duration } => positive("delay duration", *duration),
            PulseEvent::RfPulse {
                amplitude,
                phase,
                duration,
                shape,
            } => {
                positive("pulse duration", *duration)?;
                if !amplitude.is_finite() || !phase.is_finite() {
                    return Err(Error::MalformedSequence(
                        "pulse amplitude and phase must be finite".into(),
                    ));
                }
                shape.elements().map(|_| ())
            }
            PulseEvent::IdealRotation { op } => {
                op.require_dim(4)?;
                op.require_unitary()
            }
        }
    }
}

/// Shortest decimal form after rounding to 12 significant digits.
fn short(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let text = format!("{x:.11e}");
    text.parse().unwrap_or(x)
}

fn positive(what: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::MalformedSequence(format!("{what} must be positive, got {value}")))
    }
}

/// Ordered list of events with cycle metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSequence {
    events: Vec<PulseEvent>,
    cycle_length: usize,
    label: String,
}

impl PulseSequence {
    pub fn new(events: Vec<PulseEvent>, cycle_length: usize, label: impl Into<String>) -> Result<Self> {
        for ev in &events {
            ev.validate()?;
        }
        if cycle_length == 0 {
            return Err(Error::MalformedSequence("cycle length must be at least 1".into()));
        }
        Ok(Self {
            events,
            cycle_length,
            label: label.into(),
        })
    }

    /// A single free-evolution period.
    pub fn free(duration: f64) -> Result<Self> {
        Self::new(vec![PulseEvent::delay(duration)], 1, "delay")
    }

    pub fn events(&self) -> &[PulseEvent] {
        &self.events
    }

    pub fn cycle_length(&self) -> usize {
        self.cycle_length
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn duration(&self) -> f64 {
        self.events.iter().map(PulseEvent::duration).sum()
    }

    /// Start time of every event.
    pub fn timestamps(&self) -> Vec<f64> {
        let mut t = 0.0;
        self.events
            .iter()
            .map(|ev| {
                let start = t;
                t += ev.duration();
                start
            })
            .collect()
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &PulseSequence) -> PulseSequence {
        let mut events = self.events.clone();
        events.extend(next.events.iter().cloned());
        PulseSequence {
            events,
            cycle_length: 1,
            label: format!("{} ; {}", self.label, next.label),
        }
    }

    /// Serializes to the line-oriented text form (durations in us, angles in degrees).
    pub fn to_text(&self) -> String {
        let mut out = format!("label {}\ncycle {}\n", self.label, self.cycle_length);
        for ev in &self.events {
            match ev {
                PulseEvent::Delay { duration } => out.push_str(&format!("delay {}\n", short(duration * 1e6))),
                PulseEvent::RfPulse {
                    amplitude,
                    phase,
                    duration,
                    shape,
                } => out.push_str(&format!(
                    "pulse {} {} {} {}\n",
                    short(duration * 1e6),
                    short(phase.to_degrees()),
                    short((amplitude * duration).to_degrees()),
                    shape.token()
                )),
                PulseEvent::IdealRotation { op } => {
                    out.push_str("ideal");
                    for r in 0..4 {
                        for col in 0..4 {
                            let z = op.entry(r, col);
                            out.push_str(&format!(" {:e} {:e}", z.re, z.im));
                        }
                    }
                    out.push('\n');
                }
            }
        }
        out
    }

    /// Parses the text form written by [`PulseSequence::to_text`].
    ///
    /// Besides `ideal` with 32 numbers, `rotate f1 p1 f2 p2` (degrees) gives a
    /// product of per-spin rotations.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut label = String::new();
        let mut cycle = 1usize;
        let mut events = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: line_no,
                message,
            };
            let (keyword, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            let numbers = |count: usize| -> Result<Vec<f64>> {
                let vals: Vec<f64> = rest
                    .split_whitespace()
                    .take(count)
                    .map(|tok| tok.parse::<f64>().map_err(|e| parse_err(format!("`{tok}`: {e}"))))
                    .collect::<Result<_>>()?;
                if vals.len() != count {
                    return Err(parse_err(format!("`{keyword}` expects {count} numbers")));
                }
                Ok(vals)
            };
            let event = match keyword {
                "label" => {
                    label = rest.to_string();
                    continue;
                }
                "cycle" => {
                    cycle = rest
                        .parse()
                        .map_err(|_| parse_err(format!("bad cycle length `{rest}`")))?;
                    continue;
                }
                "delay" => PulseEvent::delay(numbers(1)?[0] / 1e6),
                "pulse" => {
                    let toks: Vec<&str> = rest.split_whitespace().collect();
                    if toks.len() != 4 {
                        return Err(parse_err("`pulse` expects: duration_us phase_deg flip_deg shape".into()));
                    }
                    let v = numbers(3)?;
                    let shape = PulseShape::from_token(toks[3]).map_err(|e| parse_err(e.to_string()))?;
                    PulseEvent::pulse(v[2].to_radians(), v[1].to_radians(), v[0] / 1e6, shape)
                }
                "ideal" => {
                    let v = numbers(32)?;
                    let m = DMatrix::from_fn(4, 4, |r, col| c(v[8 * r + 2 * col], v[8 * r + 2 * col + 1]));
                    PulseEvent::ideal(Operator::new(m).map_err(|e| parse_err(e.to_string()))?)
                }
                "rotate" => {
                    let v = numbers(4)?;
                    PulseEvent::ideal(spin_rotations(
                        v[0].to_radians(),
                        v[1].to_radians(),
                        v[2].to_radians(),
                        v[3].to_radians(),
                    ))
                }
                other => return Err(parse_err(format!("unknown keyword `{other}`"))),
            };
            event.validate().map_err(|e| parse_err(e.to_string()))?;
            events.push(event);
        }
        Self::new(events, cycle, label)
    }
}

impl fmt::Display for PulseSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl FromStr for PulseSequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_text(s)
    }
}

/// Rotation by `flip` about the transverse axis at angle `phase` on one spin.
pub fn single_spin_rotation(spin: Spin, flip: f64, phase: f64) -> Operator {
    let axis = &pauli_embed(spin, Axis::X).scale_real(phase.cos())
        + &pauli_embed(spin, Axis::Y).scale_real(phase.sin());
    expm_hermitian(&axis, flip / 2.0).expect("Pauli combination is hermitian")
}

/// Simultaneous instantaneous rotations of the two spins.
pub fn spin_rotations(flip1: f64, phase1: f64, flip2: f64, phase2: f64) -> Operator {
    &single_spin_rotation(Spin::One, flip1, phase1) * &single_spin_rotation(Spin::Two, flip2, phase2)
}

/// Gradient exposure of one molecule: the waveform is read on a global clock
/// that starts at `t_start` when the sequence begins.
#[derive(Debug, Clone, Copy)]
pub struct GradientDrive<'a> {
    pub waveform: &'a GradientWaveform,
    pub z: f64,
    pub t_start: f64,
}

/// Exact step propagators for the piecewise-constant Hamiltonian.
struct Stepper {
    h_int: M4,
    vecs: M4,
    vals: [f64; 4],
    x_sum: M4,
    y_sum: M4,
    gamma_gyro: f64,
}

const JZ_DIAG: [f64; 4] = [2.0, 0.0, 0.0, -2.0];

fn to_m4(m: &DMatrix<C64>) -> M4 {
    M4::from_fn(|r, col| m[(r, col)])
}

fn to_dmatrix(m: &M4) -> DMatrix<C64> {
    DMatrix::from_fn(4, 4, |r, col| m[(r, col)])
}

fn expm_m4(h: M4, dt: f64) -> M4 {
    let eig = SymmetricEigen::new(h);
    let mut scaled = eig.eigenvectors;
    for col in 0..4 {
        let phase = C64::from_polar(1.0, -eig.eigenvalues[col] * dt);
        for r in 0..4 {
            scaled[(r, col)] *= phase;
        }
    }
    scaled * eig.eigenvectors.adjoint()
}

impl Stepper {
    fn new(sys: &SpinSystem) -> Self {
        let h_int = to_m4(h_internal(sys).matrix());
        let eig = SymmetricEigen::new(h_int);
        let sum = |axis| to_m4((&pauli_embed(Spin::One, axis) + &pauli_embed(Spin::Two, axis)).matrix());
        Self {
            h_int,
            vecs: eig.eigenvectors,
            vals: [
                eig.eigenvalues[0],
                eig.eigenvalues[1],
                eig.eigenvalues[2],
                eig.eigenvalues[3],
            ],
            x_sum: sum(Axis::X),
            y_sum: sum(Axis::Y),
            gamma_gyro: sys.gamma_gyro,
        }
    }

    /// `J_z` coefficient of the gradient Hamiltonian.
    fn gradient_rate(&self, grad: f64, z: f64) -> f64 {
        0.5 * self.gamma_gyro * z * grad
    }

    /// Free evolution; the gradient term commutes with the internal Hamiltonian.
    fn free(&self, dt: f64, rate: f64) -> M4 {
        let mut scaled = self.vecs;
        for col in 0..4 {
            let phase = C64::from_polar(1.0, -self.vals[col] * dt);
            for r in 0..4 {
                scaled[(r, col)] *= phase;
            }
        }
        let mut u = scaled * self.vecs.adjoint();
        if rate != 0.0 {
            for col in 0..4 {
                let phase = C64::from_polar(1.0, -rate * JZ_DIAG[col] * dt);
                for r in 0..4 {
                    u[(r, col)] *= phase;
                }
            }
        }
        u
    }

    fn driven(&self, amplitude: f64, phase: f64, rate: f64, dt: f64) -> M4 {
        let (s, co) = phase.sin_cos();
        let mut h = self.h_int + self.x_sum * c(0.5 * amplitude * co, 0.0) + self.y_sum * c(0.5 * amplitude * s, 0.0);
        for k in 0..4 {
            h[(k, k)] += c(rate * JZ_DIAG[k], 0.0);
        }
        expm_m4(h, dt)
    }
}

/// Visits every constant-Hamiltonian segment in time order with its step
/// propagator and duration. With `refine`, each event is additionally split
/// into steps of `max(duration / 32, 1 us)`.
fn walk_segments(
    seq: &PulseSequence,
    sys: &SpinSystem,
    drive: Option<GradientDrive<'_>>,
    refine: bool,
    mut visit: impl FnMut(&M4, f64),
) -> Result<()> {
    sys.validate()?;
    let stepper = Stepper::new(sys);
    let mut t = drive.map_or(0.0, |d| d.t_start);

    let run = |t0: f64, len: f64, event_len: f64, rf: Option<(f64, f64)>, visit: &mut dyn FnMut(&M4, f64)| {
        let end = t0 + len;
        let n_refine = if refine {
            let h = (event_len / SUBSTEPS_PER_PULSE as f64).max(MIN_SUBSTEP);
            ((len / h) - 1e-9).ceil().max(1.0) as usize
        } else {
            1
        };
        let mut cursor = t0;
        let mut piece = 1usize;
        while cursor < end - TIME_EPS {
            let mut next = if piece >= n_refine { end } else { t0 + len * piece as f64 / n_refine as f64 };
            if let Some(d) = drive {
                next = next.min(d.waveform.next_boundary(cursor));
            }
            if next >= t0 + len * piece as f64 / n_refine as f64 - TIME_EPS {
                piece += 1;
            }
            let dt = next - cursor;
            let rate = drive.map_or(0.0, |d| {
                stepper.gradient_rate(d.waveform.value_at(0.5 * (cursor + next)), d.z)
            });
            let u = match rf {
                None => stepper.free(dt, rate),
                Some((amp, phase)) => stepper.driven(amp, phase, rate, dt),
            };
            visit(&u, dt);
            cursor = next;
        }
        end
    };

    for ev in seq.events() {
        match ev {
            PulseEvent::IdealRotation { op } => visit(&to_m4(op.matrix()), 0.0),
            PulseEvent::Delay { duration } => {
                t = run(t, *duration, *duration, None, &mut visit);
            }
            PulseEvent::RfPulse {
                amplitude,
                phase,
                duration,
                shape,
            } => {
                for (frac, offset) in shape.elements()? {
                    t = run(t, duration * frac, *duration, Some((*amplitude, phase + offset)), &mut visit);
                }
            }
        }
    }
    Ok(())
}

/// Time-ordered propagator of `seq` under the internal Hamiltonian, the RF
/// drive and, when given, the gradient waveform at height `z`.
pub fn propagator(
    seq: &PulseSequence,
    sys: &SpinSystem,
    waveform: Option<&GradientWaveform>,
    z: f64,
) -> Result<Operator> {
    propagator_with(
        seq,
        sys,
        waveform.map(|waveform| GradientDrive {
            waveform,
            z,
            t_start: 0.0,
        }),
    )
}

/// [`propagator`] with an explicit waveform clock offset.
pub fn propagator_with(seq: &PulseSequence, sys: &SpinSystem, drive: Option<GradientDrive<'_>>) -> Result<Operator> {
    propagator_refined(seq, sys, drive, false)
}

/// Propagator with optional substep refinement, used to confirm that step
/// size does not change the result.
pub fn propagator_refined(
    seq: &PulseSequence,
    sys: &SpinSystem,
    drive: Option<GradientDrive<'_>>,
    refine: bool,
) -> Result<Operator> {
    let mut u = M4::identity();
    walk_segments(seq, sys, drive, refine, |step, _| u = step * u)?;
    let op = Operator::new(to_dmatrix(&u))?;
    let deviation = op.unitary_deviation();
    if deviation > PROPAGATION_TOL {
        return Err(Error::NotUnitary { deviation });
    }
    Ok(op)
}

/// Free-evolution intervals of an ideal-pulse sequence as `(duration, U_k)`,
/// where `U_k` is the product of all pulses applied before the interval.
fn toggling_intervals(seq: &PulseSequence) -> Result<Vec<(f64, Operator)>> {
    let mut u = Operator::identity(4);
    let mut out = Vec::new();
    for ev in seq.events() {
        match ev {
            PulseEvent::IdealRotation { op } => u = op * &u,
            PulseEvent::Delay { duration } => out.push((*duration, u.clone())),
            PulseEvent::RfPulse { .. } => return Err(Error::NotIdeal),
        }
    }
    let deviation = u.phase_distance(&Operator::identity(4));
    if deviation > PROPAGATION_TOL {
        return Err(Error::NonCyclic { deviation });
    }
    Ok(out)
}

/// Interaction-frame Hamiltonians `U_k^dagger H_int U_k`, one per free interval.
pub fn toggling_frames(seq: &PulseSequence, sys: &SpinSystem) -> Result<Vec<Operator>> {
    sys.validate()?;
    let h = h_internal(sys);
    if seq.events().is_empty() {
        return Ok(vec![h]);
    }
    Ok(toggling_intervals(seq)?
        .into_iter()
        .map(|(_, u)| u.conjugate(&h))
        .collect())
}

/// Zeroth-order average Hamiltonian, weighting each toggling frame by its
/// interval length.
pub fn average_hamiltonian(seq: &PulseSequence, sys: &SpinSystem) -> Result<Operator> {
    sys.validate()?;
    let h = h_internal(sys);
    if seq.events().is_empty() {
        return Ok(h);
    }
    let intervals = toggling_intervals(seq)?;
    let total: f64 = intervals.iter().map(|(d, _)| d).sum();
    if total <= 0.0 {
        return Err(Error::MalformedSequence("no free evolution to average over".into()));
    }
    let sum = intervals.iter().fold(Operator::zeros(4), |acc, (d, u)| {
        &acc + &u.conjugate(&h).scale_real(d / total)
    });
    // symmetrize away rounding so the result carries the hermitian flag
    let m = sum.matrix();
    Operator::new((m + m.adjoint()) * c(0.5, 0.0))
}

/// Named sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SequenceKind {
    /// `pi_x` on both spins, removing the Zeeman terms.
    P1,
    /// `pi_x` on spin 1 with `pi_y` on spin 2, removing the flip-flop coupling.
    P2,
    EncZ,
    EncX,
    /// Encoded Carr-Purcell train of collective pi pulses.
    EncCp,
    CompositeY90,
}

impl SequenceKind {
    pub const ALL: [SequenceKind; 6] = [
        SequenceKind::P1,
        SequenceKind::P2,
        SequenceKind::EncZ,
        SequenceKind::EncX,
        SequenceKind::EncCp,
        SequenceKind::CompositeY90,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SequenceKind::P1 => "P1",
            SequenceKind::P2 => "P2",
            SequenceKind::EncZ => "ENC_Z",
            SequenceKind::EncX => "ENC_X",
            SequenceKind::EncCp => "ENC_CP",
            SequenceKind::CompositeY90 => "COMPOSITE_Y90",
        }
    }
}

impl fmt::Display for SequenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SequenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_uppercase().replace('-', "_");
        SequenceKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::UnknownSequence(s.to_string()))
    }
}

/// Parameters shared by the sequence builders.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceParams {
    /// Rotation angle for ENC_Z and ENC_X, rad, in `[0, 2 pi)`.
    pub theta: f64,
    /// Cycle count for P1, P2 and ENC_CP.
    pub cycles: usize,
    /// Pulse spacing for P1, P2 and ENC_CP, s.
    pub spacing: f64,
    /// Duration of one refocusing pi pulse, s.
    pub pulse_duration: f64,
    /// Delay between refocusing pulses in ENC_X, s.
    pub delay: f64,
    /// ENC_X cycles for a quarter turn.
    pub reference_cycles: usize,
    /// Phases (rad) cycled over successive refocusing pulses.
    pub phase_pattern: Vec<f64>,
    pub shape: PulseShape,
    /// Use instantaneous pulses instead of finite ones.
    pub ideal: bool,
    /// Trim the two z delays of COMPOSITE_Y90 for best noiseless fidelity.
    pub calibrate: bool,
}

impl Default for SequenceParams {
    fn default() -> Self {
        Self {
            theta: PI / 2.0,
            cycles: 1,
            spacing: 10e-6,
            pulse_duration: HARD_PI_DURATION,
            delay: ENC_X_DELAY,
            reference_cycles: ENC_X_REFERENCE_CYCLES,
            phase_pattern: WALTZ_PATTERN.to_vec(),
            shape: PulseShape::Hard,
            ideal: false,
            calibrate: true,
        }
    }
}

fn check_angle(theta: f64) -> Result<()> {
    if (0.0..2.0 * PI).contains(&theta) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name: "theta",
            value: theta,
            reason: "rotation angle must lie in [0, 2 pi)",
        })
    }
}

fn check_cycles(cycles: usize) -> Result<()> {
    if cycles >= 1 {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name: "cycles",
            value: 0.0,
            reason: "at least one cycle is required",
        })
    }
}

/// Logical `z` coefficient of the internal Hamiltonian in the experimental frame.
pub fn logical_z_rate(sys: &SpinSystem) -> Result<f64> {
    let coeffs = logical_decompose(&h_internal(sys), &logical_frame(LogicalChoice::Exp))?;
    if coeffs.c_z == 0.0 {
        return Err(Error::OutOfRange {
            name: "c_z",
            value: 0.0,
            reason: "encoded z rotations need a chemical-shift difference",
        });
    }
    Ok(coeffs.c_z)
}

/// Delay that realizes `exp(-i theta sz / 2)` by a `2 pi - theta` turn about `-z`.
pub fn enc_z_delay(theta: f64, sys: &SpinSystem) -> Result<f64> {
    check_angle(theta)?;
    Ok((2.0 * PI - theta) / (2.0 * logical_z_rate(sys)?.abs()))
}

/// Number of ENC_X cycles for `theta`, rounded to an even count so the
/// refocusing pulses cancel.
pub fn enc_x_cycles(theta: f64, reference_cycles: usize) -> usize {
    let half = reference_cycles as f64 / 2.0 * theta / (PI / 2.0);
    2 * half.round() as usize
}

/// Collective refocusing pi pulse with the given phase, ideal or finite.
fn refocusing_pulse(phase: f64, params: &SequenceParams) -> Result<PulseEvent> {
    if params.ideal {
        return Ok(PulseEvent::ideal(spin_rotations(PI, phase, PI, phase)));
    }
    positive("pulse duration", params.pulse_duration)?;
    let elements = params.shape.elements()?;
    // each element fraction covers its share of the total nutation
    let total_flip = match params.shape {
        PulseShape::Hard => PI,
        PulseShape::Composite(_) => 2.0 * PI,
    };
    let duration = params.pulse_duration * total_flip / PI;
    debug_assert!((elements.iter().map(|e| e.0).sum::<f64>() - 1.0).abs() < 1e-12);
    Ok(PulseEvent::pulse(total_flip, phase, duration, params.shape.clone()))
}

fn pattern_phase(params: &SequenceParams, k: usize) -> f64 {
    if params.phase_pattern.is_empty() {
        0.0
    } else {
        params.phase_pattern[k % params.phase_pattern.len()]
    }
}

/// `n` symmetric cycles `[tau/2, pi(phase_k), tau/2]`.
fn refocused_train(n: usize, tau: f64, params: &SequenceParams) -> Result<Vec<PulseEvent>> {
    let mut events = Vec::with_capacity(3 * n);
    for k in 0..n {
        events.push(PulseEvent::delay(tau / 2.0));
        events.push(refocusing_pulse(pattern_phase(params, k), params)?);
        events.push(PulseEvent::delay(tau / 2.0));
    }
    Ok(events)
}

/// Builds one of the named sequences.
pub fn build_sequence(kind: SequenceKind, params: &SequenceParams, sys: &SpinSystem) -> Result<PulseSequence> {
    sys.validate()?;
    match kind {
        SequenceKind::P1 | SequenceKind::P2 => {
            check_cycles(params.cycles)?;
            positive("spacing", params.spacing)?;
            let p = match kind {
                SequenceKind::P1 => spin_rotations(PI, 0.0, PI, 0.0),
                _ => spin_rotations(PI, 0.0, PI, PI / 2.0),
            };
            let mut events = Vec::with_capacity(4 * params.cycles);
            for _ in 0..params.cycles {
                for _ in 0..2 {
                    events.push(PulseEvent::delay(params.spacing));
                    events.push(PulseEvent::ideal(p.clone()));
                }
            }
            PulseSequence::new(events, 2, kind.name())
        }
        SequenceKind::EncCp => {
            check_cycles(params.cycles)?;
            positive("spacing", params.spacing)?;
            let mut events = Vec::with_capacity(5 * params.cycles);
            for k in 0..params.cycles {
                events.push(PulseEvent::delay(params.spacing / 2.0));
                events.push(refocusing_pulse(pattern_phase(params, 2 * k), params)?);
                events.push(PulseEvent::delay(params.spacing));
                events.push(refocusing_pulse(pattern_phase(params, 2 * k + 1), params)?);
                events.push(PulseEvent::delay(params.spacing / 2.0));
            }
            PulseSequence::new(events, 2, format!("ENC_CP({}, {}us)", params.cycles, params.spacing * 1e6))
        }
        SequenceKind::EncZ => {
            let t = enc_z_delay(params.theta, sys)?;
            PulseSequence::new(
                vec![PulseEvent::delay(t)],
                1,
                format!("ENC_Z({})", params.theta.to_degrees()),
            )
        }
        SequenceKind::EncX => {
            check_angle(params.theta)?;
            positive("delay", params.delay)?;
            let n = enc_x_cycles(params.theta, params.reference_cycles);
            let cycle = params.phase_pattern.len().max(1);
            PulseSequence::new(
                refocused_train(n, params.delay, params)?,
                cycle,
                format!("ENC_X({})", params.theta.to_degrees()),
            )
        }
        SequenceKind::CompositeY90 => composite_y90(params, sys),
    }
}

/// Code-block target of a gate sequence in the experimental frame.
pub fn target_code_unitary(kind: SequenceKind, theta: f64) -> Result<Matrix2<C64>> {
    let frame = logical_frame(LogicalChoice::Exp);
    match kind {
        SequenceKind::EncZ => Ok(logical_rotation(&frame, Axis::Z, theta)),
        SequenceKind::EncX => Ok(logical_rotation(&frame, Axis::X, theta)),
        SequenceKind::CompositeY90 => Ok(logical_rotation(&frame, Axis::Y, PI / 2.0)),
        other => Err(Error::UnknownSequence(format!("{other} has no gate target"))),
    }
}

/// `exp(-i theta s_axis / 2)` on the code block.
pub fn logical_rotation(frame: &LogicalFrame, axis: Axis, theta: f64) -> Matrix2<C64> {
    let s = match axis {
        Axis::X => &frame.sx,
        Axis::Y => &frame.sy,
        Axis::Z => &frame.sz,
        Axis::I => return Matrix2::identity(),
    };
    let block = restrict_to_code(s);
    let (sin, cos) = (theta / 2.0).sin_cos();
    Matrix2::identity() * c(cos, 0.0) - block * c(0.0, sin)
}

/// `|Tr(target^dagger block)/2|^2` for the code block of a two-spin unitary.
pub fn code_block_overlap(u: &Operator, target: &Matrix2<C64>) -> f64 {
    ((target.adjoint() * restrict_to_code(u)).trace() / 2.0).norm_sqr()
}

/// Delay trims `(first, last)` of COMPOSITE_Y90 that maximize the noiseless
/// code-block fidelity.
pub fn calibrate_composite(params: &SequenceParams, sys: &SpinSystem) -> Result<[f64; 2]> {
    let first = enc_z_delay(1.5 * PI, sys)?;
    let last = enc_z_delay(0.5 * PI, sys)?;
    let x_params = SequenceParams {
        theta: PI / 2.0,
        ..params.clone()
    };
    let x_block = restrict_to_code(&propagator(
        &build_sequence(SequenceKind::EncX, &x_params, sys)?,
        sys,
        None,
        0.0,
    )?);
    let h = h_internal(sys);
    let target = target_code_unitary(SequenceKind::CompositeY90, 0.0)?;
    let free_block = |t: f64| restrict_to_code(&expm_hermitian(&h, t).expect("hermitian"));
    let scale = 1e-6;
    let objective = |v: &[f64]| {
        let (t1, t2) = (first + v[0] * scale, last + v[1] * scale);
        if t1 <= 0.0 || t2 <= 0.0 {
            return 1.0 + t1.min(t2).abs();
        }
        let block = free_block(t2) * x_block * free_block(t1);
        1.0 - ((target.adjoint() * block).trace() / 2.0).norm_sqr()
    };
    let (best, _) = nelder_mead(objective, &[0.0, 0.0], &[20.0, 20.0], 1e-15, 2000);
    Ok([best[0] * scale, best[1] * scale])
}

fn composite_y90(params: &SequenceParams, sys: &SpinSystem) -> Result<PulseSequence> {
    let first = enc_z_delay(1.5 * PI, sys)?;
    let last = enc_z_delay(0.5 * PI, sys)?;
    let [trim_first, trim_last] = if params.calibrate {
        calibrate_composite(params, sys)?
    } else {
        [0.0, 0.0]
    };
    let x_params = SequenceParams {
        theta: PI / 2.0,
        ..params.clone()
    };
    let x = build_sequence(SequenceKind::EncX, &x_params, sys)?;
    let mut events = vec![PulseEvent::delay(first + trim_first)];
    events.extend(x.events().iter().cloned());
    events.push(PulseEvent::delay(last + trim_last));
    let label = if params.calibrate {
        "COMPOSITE_Y90"
    } else {
        "COMPOSITE_Y90(uncalibrated)"
    };
    PulseSequence::new(events, x.cycle_length(), label)
}

/// Time-averaged code-subspace population while `seq` runs from `rho0`,
/// integrated by the trapezoid rule over substeps of `max(duration/32, 1 us)`.
pub fn dfs_residence_fraction(seq: &PulseSequence, sys: &SpinSystem, rho0: &DensityMatrix) -> Result<f64> {
    if rho0.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            found: rho0.dim(),
        });
    }
    let leak = 1.0 - rho0.code_population();
    if leak > STATE_TOL {
        return Err(Error::OutsideCodeSpace { leak });
    }
    let population = |rho: &M4| rho[(1, 1)].re + rho[(2, 2)].re;
    let mut rho = to_m4(rho0.matrix());
    let mut weighted = 0.0;
    let mut total = 0.0;
    walk_segments(seq, sys, None, true, |u, dt| {
        let before = population(&rho);
        rho = u * rho * u.adjoint();
        weighted += 0.5 * (before + population(&rho)) * dt;
        total += dt;
    })?;
    if total <= 0.0 {
        return Ok(population(&rho).clamp(0.0, 1.0));
    }
    Ok((weighted / total).clamp(0.0, 1.0))
}

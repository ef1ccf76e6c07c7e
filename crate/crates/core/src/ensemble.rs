//! Spatial ensembles: member positions, gradient waveforms, diffusion echoes
//! and ensemble-averaged evolution.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonians::{gradient_rate, h_internal, SpinSystem};
use crate::pulses::{propagator_with, spin_rotations, GradientDrive, PulseSequence};
use crate::spinops::{expm_hermitian, DensityMatrix, Operator};

/// Step time of the random-walk gradient waveform, s.
pub const RANDOM_WALK_STEP: f64 = 50.6e-6;

const JZ_DIAG: [f64; 4] = [2.0, 0.0, 0.0, -2.0];

/// Spatial and temporal noise configuration of a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleSpec {
    pub n_members: usize,
    /// Active sample height, m.
    pub sample_length: f64,
    /// Largest gradient magnitude, T/m.
    pub grad_max: f64,
    /// Diffusion coefficient, m^2/s.
    pub diffusion_d: f64,
    pub seed: u64,
    /// Randomly displace members within their strata.
    pub jitter: bool,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self {
            n_members: 1001,
            sample_length: 0.01,
            grad_max: 0.0,
            diffusion_d: 2.0e-9,
            seed: 0,
            jitter: false,
        }
    }
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_members < 2 {
            return Err(Error::OutOfRange {
                name: "n_members",
                value: self.n_members as f64,
                reason: "an ensemble needs at least two members",
            });
        }
        for (name, value) in [
            ("sample_length", self.sample_length),
            ("grad_max", self.grad_max),
            ("diffusion_d", self.diffusion_d),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::OutOfRange {
                    name,
                    value,
                    reason: "must be finite and non-negative",
                });
            }
        }
        Ok(())
    }
}

/// Heights of the members: stratum midpoints over `[-L/2, L/2]`, optionally
/// jittered uniformly within each stratum.
pub fn member_positions(spec: &EnsembleSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let n = spec.n_members;
    let width = spec.sample_length / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_0f_a11);
    Ok((0..n)
        .map(|i| {
            let mid = (i as f64 + 0.5) * width - 0.5 * spec.sample_length;
            if spec.jitter {
                mid + width * (rng.random::<f64>() - 0.5)
            } else {
                mid
            }
        })
        .collect())
}

/// Piecewise-constant gradient trace on a uniform time grid.
///
/// Beyond the last step the final value is held.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientWaveform {
    step_time: f64,
    values: Vec<f64>,
    seed: u64,
}

impl GradientWaveform {
    pub fn new(step_time: f64, values: Vec<f64>, seed: u64) -> Result<Self> {
        if !(step_time > 0.0 && step_time.is_finite()) {
            return Err(Error::OutOfRange {
                name: "step_time",
                value: step_time,
                reason: "must be positive",
            });
        }
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::MalformedSequence("waveform needs finite values".into()));
        }
        Ok(Self {
            step_time,
            values,
            seed,
        })
    }

    /// A static gradient.
    pub fn constant(grad: f64, step_time: f64) -> Result<Self> {
        Self::new(step_time, vec![grad], 0)
    }

    pub fn step_time(&self) -> f64 {
        self.step_time
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn duration(&self) -> f64 {
        self.step_time * self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    fn index(&self, t: f64) -> usize {
        if t <= 0.0 {
            return 0;
        }
        ((t / self.step_time + 1e-9).floor() as usize).min(self.values.len() - 1)
    }

    pub fn value_at(&self, t: f64) -> f64 {
        self.values[self.index(t)]
    }

    /// First step boundary strictly after `t`, or infinity past the last step.
    pub fn next_boundary(&self, t: f64) -> f64 {
        let k = (t / self.step_time + 1e-9).floor().max(-1.0);
        let k = k as i64 + 1;
        if k >= self.values.len() as i64 {
            f64::INFINITY
        } else {
            k as f64 * self.step_time
        }
    }

    /// Two-column CSV `time_us,grad_T_per_m`, one row per step start.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_us,grad_T_per_m\n");
        for (k, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{}\n", k as f64 * self.step_time * 1e6, v));
        }
        out
    }

    /// Normalized autocorrelation at lags `0..max_lag`.
    pub fn autocorrelation(&self, max_lag: usize) -> Vec<f64> {
        let n = self.values.len();
        let mean = self.values.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = self.values.iter().map(|v| v - mean).collect();
        let var = centered.iter().map(|v| v * v).sum::<f64>() / n as f64;
        (0..max_lag.min(n))
            .map(|lag| {
                if var == 0.0 {
                    return if lag == 0 { 1.0 } else { 0.0 };
                }
                let s: f64 = centered[..n - lag].iter().zip(&centered[lag..]).map(|(a, b)| a * b).sum();
                s / (n - lag) as f64 / var
            })
            .collect()
    }
}

/// Bounded random walk in `[-grad_max, grad_max]` with increments uniform in
/// `[-grad_max, grad_max]`, reflected at the bounds; the start is uniform.
pub fn random_walk_waveform(spec: &EnsembleSpec, n_steps: usize, step_time: f64) -> Result<GradientWaveform> {
    spec.validate()?;
    if n_steps == 0 {
        return Err(Error::OutOfRange {
            name: "n_steps",
            value: 0.0,
            reason: "waveform needs at least one step",
        });
    }
    let g = spec.grad_max;
    if g == 0.0 {
        return GradientWaveform::new(step_time, vec![0.0; n_steps], spec.seed);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut v: f64 = rng.random_range(-g..=g);
    let mut values = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        values.push(v);
        v += rng.random_range(-g..=g);
        while v.abs() > g {
            v = v.signum() * 2.0 * g - v;
        }
    }
    GradientWaveform::new(step_time, values, spec.seed)
}

/// Number of waveform steps that cover `duration`.
pub fn steps_to_cover(duration: f64, step_time: f64) -> usize {
    (duration / step_time).ceil() as usize + 1
}

/// Member propagators for `seq` under `waveform`, in member order.
pub fn ensemble_propagators(
    seq: &PulseSequence,
    waveform: &GradientWaveform,
    spec: &EnsembleSpec,
    sys: &SpinSystem,
    t_start: f64,
) -> Result<Vec<Operator>> {
    let positions = member_positions(spec)?;
    positions
        .par_iter()
        .map(|&z| {
            propagator_with(
                seq,
                sys,
                Some(GradientDrive {
                    waveform,
                    z,
                    t_start,
                }),
            )
        })
        .collect()
}

/// Average of `U rho U^dagger` over members, summed in member order.
pub fn average_conjugation(unitaries: &[Operator], rho0: &DensityMatrix) -> Result<DensityMatrix> {
    let n = rho0.dim();
    if let Some(u) = unitaries.first() {
        u.require_dim(n)?;
    } else {
        return Err(Error::MalformedSequence("empty ensemble".into()));
    }
    let terms: Vec<DMatrix<C64>> = unitaries
        .par_iter()
        .map(|u| u.matrix() * rho0.matrix() * u.matrix().adjoint())
        .collect();
    let sum = terms.iter().fold(DMatrix::zeros(n, n), |acc, t| acc + t);
    let avg = sum / C64::new(unitaries.len() as f64, 0.0);
    DensityMatrix::new((&avg + avg.adjoint()) * C64::new(0.5, 0.0))
}

/// Ensemble-averaged state after `seq` with the waveform clock starting at zero.
pub fn evolve_ensemble(
    seq: &PulseSequence,
    waveform: &GradientWaveform,
    spec: &EnsembleSpec,
    sys: &SpinSystem,
    rho0: &DensityMatrix,
) -> Result<DensityMatrix> {
    average_conjugation(&ensemble_propagators(seq, waveform, spec, sys, 0.0)?, rho0)
}

/// Gaussian displacements with variance `2 D Delta`, one per member, drawn in
/// member order from the spec seed.
pub fn diffusion_displacements(spec: &EnsembleSpec, big_delta: f64) -> Result<Vec<f64>> {
    spec.validate()?;
    let sigma = (2.0 * spec.diffusion_d * big_delta).sqrt();
    if sigma == 0.0 {
        return Ok(vec![0.0; spec.n_members]);
    }
    let normal = Normal::new(0.0, sigma).map_err(|_| Error::OutOfRange {
        name: "diffusion_d",
        value: spec.diffusion_d,
        reason: "diffusion width must be finite",
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok((0..spec.n_members).map(|_| normal.sample(&mut rng)).collect())
}

fn check_echo_times(delta: f64, big_delta: f64) -> Result<()> {
    for (name, value) in [("delta", delta), ("Delta", big_delta)] {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(Error::OutOfRange {
                name,
                value,
                reason: "echo times must be non-negative",
            });
        }
    }
    Ok(())
}

/// Member propagators of the gradient echo: gradient `grad` for `delta`,
/// free evolution for `big_delta` while each molecule diffuses, then `-grad`
/// for `delta`. The internal Hamiltonian acts throughout.
pub fn gradient_diffusion_echo_unitaries(
    grad: f64,
    delta: f64,
    big_delta: f64,
    spec: &EnsembleSpec,
    sys: &SpinSystem,
) -> Result<Vec<Operator>> {
    sys.validate()?;
    check_echo_times(delta, big_delta)?;
    let free = expm_hermitian(&h_internal(sys), 2.0 * delta + big_delta)?;
    let shifts = diffusion_displacements(spec, big_delta)?;
    // gradient terms commute with the internal Hamiltonian, so only the net
    // J_z phase from the displacement survives the echo
    Ok(shifts
        .iter()
        .map(|dz| {
            let rate = -0.5 * sys.gamma_gyro * grad * dz * delta;
            let mut m = free.matrix().clone();
            for col in 0..4 {
                let phase = C64::from_polar(1.0, -rate * JZ_DIAG[col]);
                for r in 0..4 {
                    m[(r, col)] *= phase;
                }
            }
            Operator::new(m).expect("4x4")
        })
        .collect())
}

/// Ensemble-averaged state after the gradient-diffusion echo.
pub fn gradient_diffusion_echo(
    grad: f64,
    delta: f64,
    big_delta: f64,
    spec: &EnsembleSpec,
    sys: &SpinSystem,
    rho0: &DensityMatrix,
) -> Result<DensityMatrix> {
    average_conjugation(&gradient_diffusion_echo_unitaries(grad, delta, big_delta, spec, sys)?, rho0)
}

/// Propagators of a refocused storage period of total length `t_ev`.
///
/// Each half of the period is free evolution of `t_ev / 2` closed by the
/// refocusing pair `P2`; the encoding gradient acts for `delta` at the start
/// of the first half and the same gradient, seen inverted through the `P2`
/// frame, for `delta` at the start of the second half after the molecule has
/// diffused for `t_ev - 2 delta`. Returns the member propagators together with
/// the noiseless reference `P2 F P2 F`.
pub fn refocused_memory_unitaries(
    grad: f64,
    delta: f64,
    t_ev: f64,
    spec: &EnsembleSpec,
    sys: &SpinSystem,
) -> Result<(Vec<Operator>, Operator)> {
    sys.validate()?;
    let big_delta = t_ev - 2.0 * delta;
    check_echo_times(delta, big_delta)?;
    let half = expm_hermitian(&h_internal(sys), t_ev / 2.0)?;
    let refocus = spin_rotations(PI, 0.0, PI, PI / 2.0);
    let half_cycle = &refocus * &half;
    let reference = &half_cycle * &half_cycle;
    let positions = member_positions(spec)?;
    let shifts = diffusion_displacements(spec, big_delta)?;
    let gradient_phase = |z: f64| {
        let rate = gradient_rate(grad, z, sys) * delta;
        Operator::from_diagonal(&JZ_DIAG.map(|m| C64::from_polar(1.0, -rate * m))).expect("4x4")
    };
    let members = positions
        .iter()
        .zip(&shifts)
        .map(|(&z, &dz)| {
            let first = &half_cycle * &gradient_phase(z);
            let second = &half_cycle * &gradient_phase(z + dz);
            &second * &first
        })
        .collect();
    Ok((members, reference))
}

/// Decay rate `D (gamma grad m delta)^2` of order-`m` coherences under the echo, 1/s.
pub fn diffusion_decay_rate(grad: f64, delta: f64, order: u32, diffusion_d: f64, sys: &SpinSystem) -> f64 {
    let k = sys.gamma_gyro * grad * order as f64 * delta;
    diffusion_d * k * k
}

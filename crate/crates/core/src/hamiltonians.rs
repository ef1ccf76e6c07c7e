//! Internal, RF and gradient Hamiltonians of the two-proton register.
//!
//! All Hamiltonians are angular frequencies (rad/s) so that `exp(-iHt)` with
//! `t` in seconds is the propagator. Chemical shifts and couplings are given
//! in Hz and multiplied by `pi`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spinops::{
    heisenberg, is_dfs_preserving, jz, pauli_embed, restrict_to_code, Axis, LogicalFrame,
    Operator, Spin, PROPAGATION_TOL,
};

/// Proton gyromagnetic ratio in rad s^-1 T^-1.
pub const PROTON_GYROMAGNETIC_RATIO: f64 = 2.675_221_874_4e8;

/// Parameters of the two-spin molecule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpinSystem {
    /// Offset of spin 1 from the transmitter, Hz.
    pub nu1_hz: f64,
    /// Offset of spin 2 from the transmitter, Hz.
    pub nu2_hz: f64,
    /// Scalar coupling, Hz.
    pub j_hz: f64,
    pub t1_s: f64,
    pub t2_s: f64,
    /// rad s^-1 T^-1
    #[serde(default = "default_gamma")]
    pub gamma_gyro: f64,
}

fn default_gamma() -> f64 {
    PROTON_GYROMAGNETIC_RATIO
}

impl Default for SpinSystem {
    /// Dibromothiophene with spin 1 on resonance.
    fn default() -> Self {
        Self {
            nu1_hz: 0.0,
            nu2_hz: 137.5,
            j_hz: 5.7,
            t1_s: 7.0,
            t2_s: 3.5,
            gamma_gyro: PROTON_GYROMAGNETIC_RATIO,
        }
    }
}

impl SpinSystem {
    pub fn validate(&self) -> Result<()> {
        if !(self.t1_s > 0.0) {
            return Err(Error::OutOfRange {
                name: "t1_s",
                value: self.t1_s,
                reason: "must be positive",
            });
        }
        if !(self.t2_s > 0.0) {
            return Err(Error::OutOfRange {
                name: "t2_s",
                value: self.t2_s,
                reason: "must be positive",
            });
        }
        if self.t2_s > 2.0 * self.t1_s {
            return Err(Error::OutOfRange {
                name: "t2_s",
                value: self.t2_s,
                reason: "must not exceed 2*T1",
            });
        }
        for (name, value) in [
            ("nu1_hz", self.nu1_hz),
            ("nu2_hz", self.nu2_hz),
            ("j_hz", self.j_hz),
            ("gamma_gyro", self.gamma_gyro),
        ] {
            if !value.is_finite() {
                return Err(Error::OutOfRange {
                    name,
                    value,
                    reason: "must be finite",
                });
            }
        }
        Ok(())
    }

    /// Pure-dephasing rate `1/T2 - 1/(2 T1)`.
    pub fn pure_dephasing_rate(&self) -> f64 {
        1.0 / self.t2_s - 0.5 / self.t1_s
    }
}

/// RF drive parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfParams {
    /// Transmitter angular frequency relative to the rotating-frame reference, rad/s.
    pub omega_rf: f64,
    /// Initial phase, rad.
    pub phi: f64,
    /// Nutation power, rad/s.
    pub omega: f64,
}

/// `pi (nu1 sz1 + nu2 sz2 + J sigma1.sigma2 / 2)`.
pub fn h_internal(sys: &SpinSystem) -> Operator {
    let z1 = pauli_embed(Spin::One, Axis::Z).scale_real(PI * sys.nu1_hz);
    let z2 = pauli_embed(Spin::Two, Axis::Z).scale_real(PI * sys.nu2_hz);
    let coupling = heisenberg().scale_real(PI * sys.j_hz / 2.0);
    &(&z1 + &z2) + &coupling
}

/// RF Hamiltonian at time `t`; each spin sees `(omega/2)(cos a sx + sin a sy)`
/// with `a = omega_rf t + phi`.
pub fn h_rf(params: &RfParams, t: f64) -> Operator {
    let angle = params.omega_rf * t + params.phi;
    rf_field(params.omega, angle)
}

/// Time-independent on-resonance drive `(omega/2) sum_k (cos phi sx^k + sin phi sy^k)`.
pub(crate) fn rf_field(omega: f64, phase: f64) -> Operator {
    let (s, co) = phase.sin_cos();
    let x = &pauli_embed(Spin::One, Axis::X) + &pauli_embed(Spin::Two, Axis::X);
    let y = &pauli_embed(Spin::One, Axis::Y) + &pauli_embed(Spin::Two, Axis::Y);
    &x.scale_real(0.5 * omega * co) + &y.scale_real(0.5 * omega * s)
}

/// Gradient Hamiltonian `gamma z dB/dz J_z / 2` for a molecule at height `z` (m)
/// in a gradient of `grad` T/m.
pub fn h_gradient(grad: f64, z: f64, sys: &SpinSystem) -> Operator {
    jz().scale_real(gradient_rate(grad, z, sys))
}

/// Coefficient of `J_z` in [`h_gradient`], rad/s.
pub fn gradient_rate(grad: f64, z: f64, sys: &SpinSystem) -> f64 {
    0.5 * sys.gamma_gyro * z * grad
}

/// Code-block expansion `c_id 1 + c_x sx + c_y sy + c_z sz`, rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogicalCoefficients {
    pub c_z: f64,
    pub c_x: f64,
    pub c_y: f64,
    pub c_id: f64,
}

/// Expands the code-block restriction of a DFS-preserving Hamiltonian in the
/// logical Pauli basis of `frame`.
pub fn logical_decompose(h: &Operator, frame: &LogicalFrame) -> Result<LogicalCoefficients> {
    let report = is_dfs_preserving(h)?;
    if !report.preserving {
        return Err(Error::NotDfsPreserving {
            entries: report.violations,
        });
    }
    let block = restrict_to_code(h);
    let bx = restrict_to_code(&frame.sx);
    let by = restrict_to_code(&frame.sy);
    let bz = restrict_to_code(&frame.sz);
    let coeffs = LogicalCoefficients {
        c_id: 0.5 * block.trace().re,
        c_x: 0.5 * (block * bx).trace().re,
        c_y: 0.5 * (block * by).trace().re,
        c_z: 0.5 * (block * bz).trace().re,
    };
    let rebuilt = nalgebra::Matrix2::identity() * num_complex::Complex64::new(coeffs.c_id, 0.0)
        + bx * num_complex::Complex64::new(coeffs.c_x, 0.0)
        + by * num_complex::Complex64::new(coeffs.c_y, 0.0)
        + bz * num_complex::Complex64::new(coeffs.c_z, 0.0);
    let err = (rebuilt - block).iter().fold(0.0_f64, |a, z| a.max(z.norm()));
    let scale = block.iter().fold(1.0_f64, |a, z| a.max(z.norm()));
    debug_assert!(err <= PROPAGATION_TOL * scale, "reconstruction error {err}");
    Ok(coeffs)
}

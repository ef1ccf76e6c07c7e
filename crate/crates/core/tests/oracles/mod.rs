//! Reference computations written directly from the physics, sharing no code
//! path with the library beyond plain matrix types.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

pub fn qubit(entries: [[C64; 2]; 2]) -> DMatrix<C64> {
    DMatrix::from_fn(2, 2, |r, col| entries[r][col])
}

pub fn sigma_x() -> DMatrix<C64> {
    qubit([[c(0.0), c(1.0)], [c(1.0), c(0.0)]])
}

pub fn sigma_y() -> DMatrix<C64> {
    qubit([[c(0.0), C64::new(0.0, -1.0)], [C64::new(0.0, 1.0), c(0.0)]])
}

pub fn sigma_z() -> DMatrix<C64> {
    qubit([[c(1.0), c(0.0)], [c(0.0), c(-1.0)]])
}

/// `|0><1|`, relaxing toward `|0>`.
pub fn lowering() -> DMatrix<C64> {
    qubit([[c(0.0), c(1.0)], [c(0.0), c(0.0)]])
}

pub fn on_spin1(a: &DMatrix<C64>) -> DMatrix<C64> {
    kron(a, &DMatrix::identity(2, 2))
}

pub fn on_spin2(a: &DMatrix<C64>) -> DMatrix<C64> {
    kron(&DMatrix::identity(2, 2), a)
}

/// Column-stacking generator of `d rho/dt = sum_k L rho L^+ - {L^+ L, rho}/2`.
pub fn dissipator(jumps: &[DMatrix<C64>]) -> DMatrix<C64> {
    let n = jumps[0].nrows();
    let id = DMatrix::<C64>::identity(n, n);
    let mut gen = DMatrix::<C64>::zeros(n * n, n * n);
    for l in jumps {
        let ldl = l.adjoint() * l;
        gen += kron(&l.conjugate(), l) - kron(&id, &ldl) * c(0.5) - kron(&ldl.transpose(), &id) * c(0.5);
    }
    gen
}

/// Natural relaxation generator: amplitude damping `1/T1` per spin, collective
/// `Z1 + Z2` dephasing and independent `Z` dephasing sharing `1/T2 - 1/(2 T1)`.
pub fn natural_generator(t1: f64, t2: f64, f_collective: f64) -> DMatrix<C64> {
    let gphi = 1.0 / t2 - 0.5 / t1;
    let amp = (1.0 / t1).sqrt();
    let indep = ((1.0 - f_collective) * gphi / 2.0).sqrt();
    let coll = (f_collective * gphi / 2.0).sqrt();
    let z_total = on_spin1(&sigma_z()) + on_spin2(&sigma_z());
    dissipator(&[
        on_spin1(&lowering()) * c(amp),
        on_spin2(&lowering()) * c(amp),
        on_spin1(&sigma_z()) * c(indep),
        on_spin2(&sigma_z()) * c(indep),
        z_total * c(coll),
    ])
}

/// Propagator `exp(G t)` of a generator.
pub fn evolve(generator: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
    (generator * c(t)).exp()
}

pub fn apply(superop: &DMatrix<C64>, rho: &DMatrix<C64>) -> DMatrix<C64> {
    let n = rho.nrows();
    let v = superop * nalgebra::DVector::from_column_slice(rho.as_slice());
    DMatrix::from_column_slice(n, n, v.as_slice())
}

/// Swap of `|00>` and `|01>`: data on spin 1, ancilla spin 2 starting in `|0>`.
pub fn encoder() -> DMatrix<C64> {
    let mut u = DMatrix::<C64>::zeros(4, 4);
    u[(1, 0)] = c(1.0);
    u[(0, 1)] = c(1.0);
    u[(2, 2)] = c(1.0);
    u[(3, 3)] = c(1.0);
    u
}

fn trace_out_spin2(rho: &DMatrix<C64>) -> DMatrix<C64> {
    DMatrix::from_fn(2, 2, |r, col| rho[(2 * r, 2 * col)] + rho[(2 * r + 1, 2 * col + 1)])
}

/// Data-qubit output for a data input stored through `superop`.
pub fn stored(superop: &DMatrix<C64>, data: &DMatrix<C64>, encoded: bool) -> DMatrix<C64> {
    let mut ancilla = DMatrix::<C64>::zeros(2, 2);
    ancilla[(0, 0)] = c(1.0);
    let joint = kron(data, &ancilla);
    let u = if encoded { encoder() } else { DMatrix::identity(4, 4) };
    let out = apply(superop, &(&u * joint * u.adjoint()));
    trace_out_spin2(&(u.adjoint() * out * &u))
}

/// Retained transverse magnetization averaged over `|+>` and `|+i>` inputs.
pub fn coherence(superop: &DMatrix<C64>, encoded: bool) -> f64 {
    let half = c(0.5);
    let plus = qubit([[half, half], [half, half]]);
    let plus_i = qubit([[half, C64::new(0.0, -0.5)], [C64::new(0.0, 0.5), half]]);
    let x = (sigma_x() * stored(superop, &plus, encoded)).trace().re;
    let y = (sigma_y() * stored(superop, &plus_i, encoded)).trace().re;
    0.5 * (x + y)
}

/// Proton gyromagnetic ratio, rad s^-1 T^-1.
pub const GAMMA_PROTON: f64 = 2.675_221_874_4e8;

/// Gaussian-average decay of an order-`m` coherence after a gradient echo
/// with diffusion: `exp(-D (gamma g m delta)^2 Delta)`.
pub fn echo_decay(d: f64, grad: f64, order: f64, delta: f64, big_delta: f64) -> f64 {
    (-d * (GAMMA_PROTON * grad * order * delta).powi(2) * big_delta).exp()
}

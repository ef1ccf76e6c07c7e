//! Operator algebra on one and two spins-1/2.
//!
//! The computational basis is fixed as `|00>, |01>, |10>, |11>` with spin 1
//! as the left tensor factor and `|0>` the `+1` eigenstate of `sigma_z`.
//! Every matrix literal in this crate uses that ordering.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for exact-construction checks (hermiticity, Pauli algebra).
pub const CONSTRUCTION_TOL: f64 = 1e-12;
/// Tolerance for unitarity and propagation checks.
pub const PROPAGATION_TOL: f64 = 1e-10;
/// Tolerance used when validating density matrices produced by long simulations.
pub const STATE_TOL: f64 = 1e-8;

/// Indices of the zero-quantum (code) subspace `span{|01>, |10>}`.
pub const CODE_INDICES: [usize; 2] = [1, 2];
/// Indices of the `J_z = +2` and `J_z = -2` states.
pub const LEAKAGE_INDICES: [usize; 2] = [0, 3];

pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub(crate) fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Dense complex operator on one (dim 2) or two (dim 4) spins.
///
/// The hermitian and unitary flags are computed from the entries whenever an
/// operator is built, never taken on trust.
#[derive(Clone, PartialEq)]
pub struct Operator {
    matrix: DMatrix<C64>,
    hermitian: bool,
    unitary: bool,
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Operator")
            .field("dim", &self.dim())
            .field("hermitian", &self.hermitian)
            .field("unitary", &self.unitary)
            .field("matrix", &self.matrix)
            .finish()
    }
}

impl Operator {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        let (rows, cols) = matrix.shape();
        if rows != cols || !(rows == 2 || rows == 4) {
            return Err(Error::InvalidDimension { rows, cols });
        }
        Ok(Self::from_matrix_unchecked(matrix))
    }

    /// Builds an operator without checking the dimension; flags are still computed.
    pub(crate) fn from_matrix_unchecked(matrix: DMatrix<C64>) -> Self {
        let hermitian = hermitian_deviation(&matrix) <= CONSTRUCTION_TOL;
        let unitary = unitary_deviation(&matrix) <= PROPAGATION_TOL;
        Self {
            matrix,
            hermitian,
            unitary,
        }
    }

    /// Builds an operator from real row-major entries.
    pub fn from_real(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        Self::new(DMatrix::from_row_iterator(
            dim,
            dim,
            entries.iter().map(|&x| c(x, 0.0)),
        ))
    }

    pub fn from_diagonal(diag: &[C64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_matrix_unchecked(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_matrix_unchecked(DMatrix::zeros(dim, dim))
    }

    /// Outer product `|ket><bra|`.
    pub fn outer(ket: &DVector<C64>, bra: &DVector<C64>) -> Result<Self> {
        Self::new(ket * bra.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)]
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn is_unitary(&self) -> bool {
        self.unitary
    }

    pub fn hermitian_deviation(&self) -> f64 {
        hermitian_deviation(&self.matrix)
    }

    pub fn unitary_deviation(&self) -> f64 {
        unitary_deviation(&self.matrix)
    }

    pub fn require_hermitian(&self) -> Result<()> {
        if self.hermitian {
            Ok(())
        } else {
            Err(Error::NotHermitian {
                deviation: self.hermitian_deviation(),
            })
        }
    }

    pub fn require_unitary(&self) -> Result<()> {
        if self.unitary {
            Ok(())
        } else {
            Err(Error::NotUnitary {
                deviation: self.unitary_deviation(),
            })
        }
    }

    pub fn require_dim(&self, dim: usize) -> Result<()> {
        if self.dim() == dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: dim,
                found: self.dim(),
            })
        }
    }

    pub fn dagger(&self) -> Self {
        Self::from_matrix_unchecked(self.matrix.adjoint())
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self::from_matrix_unchecked(&self.matrix * factor)
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        self.scale(c(factor, 0.0))
    }

    pub fn commutator(&self, other: &Self) -> Self {
        Self::from_matrix_unchecked(&self.matrix * &other.matrix - &other.matrix * &self.matrix)
    }

    pub fn anticommutator(&self, other: &Self) -> Self {
        Self::from_matrix_unchecked(&self.matrix * &other.matrix + &other.matrix * &self.matrix)
    }

    /// `self^dagger * other * self`.
    pub fn conjugate(&self, other: &Self) -> Self {
        Self::from_matrix_unchecked(self.matrix.adjoint() * &other.matrix * &self.matrix)
    }

    pub fn kron(&self, other: &Self) -> Result<Self> {
        Self::new(self.matrix.kronecker(&other.matrix))
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs(&(&self.matrix - &other.matrix))
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.matrix)
    }

    /// Distance to `other` after removing the best global phase, in Frobenius norm.
    pub fn phase_distance(&self, other: &Self) -> f64 {
        let overlap = (other.matrix.adjoint() * &self.matrix).trace();
        let phase = if overlap.norm() > 0.0 {
            overlap / overlap.norm()
        } else {
            c(1.0, 0.0)
        };
        (&self.matrix - &other.matrix * phase).norm()
    }

    /// `|Tr(other^dagger self)| / dim`; equals 1 iff the operators agree up to phase.
    pub fn phase_overlap(&self, other: &Self) -> f64 {
        (other.matrix.adjoint() * &self.matrix).trace().norm() / self.dim() as f64
    }

    pub fn apply(&self, ket: &DVector<C64>) -> DVector<C64> {
        &self.matrix * ket
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator::from_matrix_unchecked(&self.matrix * &rhs.matrix)
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator::from_matrix_unchecked(&self.matrix + &rhs.matrix)
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator::from_matrix_unchecked(&self.matrix - &rhs.matrix)
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.scale_real(-1.0)
    }
}

fn hermitian_deviation(m: &DMatrix<C64>) -> f64 {
    max_abs(&(m - m.adjoint()))
}

fn unitary_deviation(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    max_abs(&(m.adjoint() * m - DMatrix::<C64>::identity(n, n)))
}

/// Which spin an embedded single-spin operator acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Spin {
    One,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    I,
    X,
    Y,
    Z,
}

/// Single-spin Pauli matrix.
pub fn pauli(axis: Axis) -> Operator {
    let z = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    let m = match axis {
        Axis::I => DMatrix::from_row_slice(2, 2, &[one, z, z, one]),
        Axis::X => DMatrix::from_row_slice(2, 2, &[z, one, one, z]),
        Axis::Y => DMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        Axis::Z => DMatrix::from_row_slice(2, 2, &[one, z, z, -one]),
    };
    Operator::from_matrix_unchecked(m)
}

/// `sigma_axis` on `spin`, identity on the other spin.
pub fn pauli_embed(spin: Spin, axis: Axis) -> Operator {
    let (left, right) = match spin {
        Spin::One => (pauli(axis), pauli(Axis::I)),
        Spin::Two => (pauli(Axis::I), pauli(axis)),
    };
    Operator::from_matrix_unchecked(left.matrix.kronecker(&right.matrix))
}

/// Two-spin Pauli product `sigma_a (x) sigma_b`.
pub fn pauli_pair(a: Axis, b: Axis) -> Operator {
    Operator::from_matrix_unchecked(pauli(a).matrix.kronecker(&pauli(b).matrix))
}

/// Collective `J_z = sigma_z^1 + sigma_z^2` (units of hbar/2).
pub fn jz() -> Operator {
    &pauli_embed(Spin::One, Axis::Z) + &pauli_embed(Spin::Two, Axis::Z)
}

/// Heisenberg coupling `sigma^1 . sigma^2`.
pub fn heisenberg() -> Operator {
    let xx = pauli_pair(Axis::X, Axis::X);
    let yy = pauli_pair(Axis::Y, Axis::Y);
    let zz = pauli_pair(Axis::Z, Axis::Z);
    &(&xx + &yy) + &zz
}

/// Computational basis state of two spins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasisState {
    S00,
    S01,
    S10,
    S11,
}

impl BasisState {
    pub const ALL: [BasisState; 4] = [Self::S00, Self::S01, Self::S10, Self::S11];

    pub fn index(self) -> usize {
        match self {
            Self::S00 => 0,
            Self::S01 => 1,
            Self::S10 => 2,
            Self::S11 => 3,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Eigenvalue of `J_z` in units of hbar/2.
    pub fn jz(self) -> i32 {
        match self {
            Self::S00 => 2,
            Self::S01 | Self::S10 => 0,
            Self::S11 => -2,
        }
    }

    pub fn ket(self) -> DVector<C64> {
        let mut v = DVector::zeros(4);
        v[self.index()] = c(1.0, 0.0);
        v
    }
}

/// Coherence order of the element `|k><l|`: the difference of total spin
/// projections measured in units of hbar.
pub fn coherence_order(k: BasisState, l: BasisState) -> u32 {
    ((k.jz() - l.jz()).abs() / 2) as u32
}

/// Signed coherence order `(J_z(k) - J_z(l)) / 2`, the multiplier of the
/// gradient phase picked up by `|k><l|`.
pub fn signed_coherence_order(k: usize, l: usize) -> i32 {
    let jk = BasisState::from_index(k).map_or(0, BasisState::jz);
    let jl = BasisState::from_index(l).map_or(0, BasisState::jz);
    (jk - jl) / 2
}

/// Projectors onto the `J_z = +2, 0, -2` eigenspaces.
#[derive(Debug, Clone, PartialEq)]
pub struct ZqProjectors {
    pub plus2: Operator,
    pub zero: Operator,
    pub minus2: Operator,
}

pub fn zq_projectors() -> ZqProjectors {
    let one = c(1.0, 0.0);
    let z = c(0.0, 0.0);
    ZqProjectors {
        plus2: Operator::from_diagonal(&[one, z, z, z]).expect("dim 4"),
        zero: Operator::from_diagonal(&[z, one, one, z]).expect("dim 4"),
        minus2: Operator::from_diagonal(&[z, z, z, one]).expect("dim 4"),
    }
}

/// Logical `|0_L> = |01>`.
pub fn logical_zero() -> DVector<C64> {
    BasisState::S01.ket()
}

/// Logical `|1_L> = |10>`.
pub fn logical_one() -> DVector<C64> {
    BasisState::S10.ket()
}

/// Ket `c0 |0_L> + c1 |1_L>`.
pub fn code_ket(c0: C64, c1: C64) -> DVector<C64> {
    logical_zero() * c0 + logical_one() * c1
}

/// 2x2 block of a two-spin operator on the code basis `{|01>, |10>}`.
pub fn restrict_to_code(op: &Operator) -> Matrix2<C64> {
    let m = op.matrix();
    Matrix2::new(m[(1, 1)], m[(1, 2)], m[(2, 1)], m[(2, 2)])
}

/// Which set of encoded observables to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LogicalChoice {
    /// `sz = (sz1 - sz2)/2`, `sx = (sx1 sx2 + sy1 sy2)/2`; vanishes outside the code block.
    Obs1,
    /// `sz = -sz2`, `sx = sx1 sx2`.
    Obs2,
    /// `sz = -sz2`, `sx = (sx1 sx2 + sy1 sy2)/2`, used for the encoded gates.
    Exp,
}

/// Encoded Pauli observables for the zero-quantum qubit.
///
/// `sy` is fixed through `sy = i[sx, sz]/2`, which makes the code-block
/// restrictions exactly the Pauli matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct LogicalFrame {
    pub choice: LogicalChoice,
    pub sx: Operator,
    pub sy: Operator,
    pub sz: Operator,
}

impl LogicalFrame {
    pub fn code_basis(&self) -> [DVector<C64>; 2] {
        [logical_zero(), logical_one()]
    }
}

pub fn logical_frame(choice: LogicalChoice) -> LogicalFrame {
    let z1 = pauli_embed(Spin::One, Axis::Z);
    let z2 = pauli_embed(Spin::Two, Axis::Z);
    let xx = pauli_pair(Axis::X, Axis::X);
    let yy = pauli_pair(Axis::Y, Axis::Y);
    let flip_flop = (&xx + &yy).scale_real(0.5);
    let (sz, sx) = match choice {
        LogicalChoice::Obs1 => ((&z1 - &z2).scale_real(0.5), flip_flop),
        LogicalChoice::Obs2 => (-&z2, xx),
        LogicalChoice::Exp => (-&z2, flip_flop),
    };
    let sy = sx.commutator(&sz).scale(c(0.0, 0.5));
    LogicalFrame {
        choice,
        sx,
        sy,
        sz,
    }
}

/// Result of the DFS-preservation test: the offending `(row, col, |entry|)` triples.
#[derive(Debug, Clone, PartialEq)]
pub struct DfsReport {
    pub preserving: bool,
    pub violations: Vec<(usize, usize, f64)>,
}

/// Checks that a hermitian operator has no entries coupling the code block to
/// `{|00>, |11>}`, entries below `1e-10` being treated as zero.
pub fn is_dfs_preserving(op: &Operator) -> Result<DfsReport> {
    op.require_dim(4)?;
    op.require_hermitian()?;
    let mut violations = Vec::new();
    for &r in &CODE_INDICES {
        for &col in &LEAKAGE_INDICES {
            for (i, j) in [(r, col), (col, r)] {
                let mag = op.entry(i, j).norm();
                if mag > PROPAGATION_TOL {
                    violations.push((i, j, mag));
                }
            }
        }
    }
    violations.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    Ok(DfsReport {
        preserving: violations.is_empty(),
        violations,
    })
}

/// Propagator `exp(-i H t)` through the hermitian eigendecomposition of `H`.
pub fn expm_hermitian(h: &Operator, t: f64) -> Result<Operator> {
    h.require_hermitian()?;
    Ok(expm_hermitian_unchecked(h.matrix(), t))
}

pub(crate) fn expm_hermitian_unchecked(h: &DMatrix<C64>, t: f64) -> Operator {
    let eig = SymmetricEigen::new(h.clone());
    let phases = eig
        .eigenvalues
        .map(|lambda| C64::from_polar(1.0, -lambda * t));
    let v = &eig.eigenvectors;
    let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |r, col| v[(r, col)] * phases[col]);
    Operator::from_matrix_unchecked(scaled * v.adjoint())
}

/// Encoding unitary: `sigma_x` on spin 2 controlled by spin 1 being `|0>`.
///
/// Maps `|00> -> |01>` and `|10> -> |10>`, so a data state on spin 1 with the
/// ancilla in `|0>` lands in the code subspace.
pub fn u_enc() -> Operator {
    Operator::from_real(
        4,
        &[
            0.0, 1.0, 0.0, 0.0, //
            1.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        ],
    )
    .expect("dim 4")
}

pub fn u_dec() -> Operator {
    u_enc().dagger()
}

/// Positive, unit-trace state on one (dim 2) or two (dim 4) spins.
#[derive(Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: DMatrix<C64>,
}

impl fmt::Debug for DensityMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("DensityMatrix").field(&self.matrix).finish()
    }
}

impl DensityMatrix {
    /// Validates hermiticity, unit trace and positivity to [`STATE_TOL`].
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        let (rows, cols) = matrix.shape();
        if rows != cols || !(rows == 2 || rows == 4) {
            return Err(Error::InvalidDimension { rows, cols });
        }
        let herm = hermitian_deviation(&matrix);
        if herm > STATE_TOL {
            return Err(Error::InvalidState(format!(
                "not hermitian (deviation {herm:.3e})"
            )));
        }
        let tr = matrix.trace();
        if (tr - c(1.0, 0.0)).norm() > STATE_TOL {
            return Err(Error::InvalidState(format!(
                "trace {tr} differs from 1"
            )));
        }
        let state = Self { matrix };
        let min_eig = state.min_eigenvalue();
        if min_eig < -STATE_TOL {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {min_eig:.3e}"
            )));
        }
        Ok(state)
    }

    /// Pure state `|psi><psi|` after normalizing `psi`.
    pub fn from_ket(ket: &DVector<C64>) -> Result<Self> {
        let norm = ket.norm();
        if !(norm > 0.0) {
            return Err(Error::InvalidState("zero ket".into()));
        }
        let psi = ket / c(norm, 0.0);
        Self::new(&psi * psi.adjoint())
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim) / c(dim as f64, 0.0),
        }
    }

    pub fn basis(state: BasisState) -> Self {
        Self::from_ket(&state.ket()).expect("basis state is normalized")
    }

    /// Single-qubit pure state from amplitudes.
    pub fn qubit(c0: C64, c1: C64) -> Result<Self> {
        Self::from_ket(&DVector::from_column_slice(&[c0, c1]))
    }

    /// `data (x) |0><0|` with the data qubit on spin 1.
    pub fn with_ancilla_zero(data: &Self) -> Result<Self> {
        if data.dim() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: data.dim(),
            });
        }
        let mut anc = DMatrix::zeros(2, 2);
        anc[(0, 0)] = c(1.0, 0.0);
        Ok(Self {
            matrix: data.matrix.kronecker(&anc),
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn expectation(&self, op: &Operator) -> C64 {
        (&self.matrix * op.matrix()).trace()
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut vals: Vec<f64> = SymmetricEigen::new(hermitian_part(&self.matrix))
            .eigenvalues
            .iter()
            .copied()
            .collect();
        vals.sort_by(|a, b| a.total_cmp(b));
        vals
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// `U rho U^dagger`.
    pub fn evolve(&self, u: &Operator) -> Result<Self> {
        u.require_dim(self.dim())?;
        Ok(Self {
            matrix: u.matrix() * &self.matrix * u.matrix().adjoint(),
        })
    }

    /// Traces out spin 2, leaving the data-spin state.
    pub fn trace_out_ancilla(&self) -> Result<Self> {
        if self.dim() != 4 {
            return Err(Error::DimensionMismatch {
                expected: 4,
                found: self.dim(),
            });
        }
        Ok(Self {
            matrix: partial_trace_second(&self.matrix),
        })
    }

    /// `Tr(Pi_0 rho)`, the population of the zero-quantum subspace.
    pub fn code_population(&self) -> f64 {
        if self.dim() != 4 {
            return 0.0;
        }
        self.matrix[(1, 1)].re + self.matrix[(2, 2)].re
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs(&(&self.matrix - &other.matrix))
    }

    /// `Tr(rho sigma)` for two states; equals the fidelity when one is pure.
    pub fn overlap(&self, other: &Self) -> f64 {
        (&self.matrix * &other.matrix).trace().re
    }
}

fn hermitian_part(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()) * c(0.5, 0.0)
}

/// Partial trace over spin 2 of a 4x4 matrix (not necessarily a state).
pub(crate) fn partial_trace_second(m: &DMatrix<C64>) -> DMatrix<C64> {
    DMatrix::from_fn(2, 2, |i, j| m[(2 * i, 2 * j)] + m[(2 * i + 1, 2 * j + 1)])
}

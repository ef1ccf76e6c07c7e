//! Fidelity measures, tomography and the data-qubit channel induced by
//! storage in two spins.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix4, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::channels::{KrausChannel, QuantumChannel, SuperOperator};
use crate::error::{Error, Result};
use crate::spinops::{
    c, max_abs, partial_trace_second, pauli, u_dec, u_enc, Axis, DensityMatrix, Operator,
    PROPAGATION_TOL,
};

/// Entanglement fidelity above which a channel preserves entanglement.
pub const ENTANGLEMENT_THRESHOLD: f64 = 0.5;
/// Slack allowed on fidelities outside `[0, 1]`.
pub const FIDELITY_EPS: f64 = 1e-8;
/// Choi eigenvalues below this are reported as unphysical.
pub const CHOI_NEGATIVE_TOL: f64 = 1e-6;

const PAULI_AXES: [Axis; 4] = [Axis::I, Axis::X, Axis::Y, Axis::Z];

/// `sum_a |Tr(U^dagger A_a) / N|^2` over the Kraus set.
pub fn entanglement_fidelity(ch: &KrausChannel, target: &Operator) -> Result<f64> {
    target.require_dim(ch.dim())?;
    target.require_unitary()?;
    let n = ch.dim() as f64;
    let ud = target.dagger();
    Ok(ch
        .kraus_ops()
        .iter()
        .map(|a| ((&ud * a).trace() / n).norm_sqr())
        .sum())
}

/// Entanglement fidelity from a superoperator: `Tr(S_U^dagger S) / N^2`.
pub fn entanglement_fidelity_superop(ch: &impl QuantumChannel, target: &Operator) -> Result<f64> {
    target.require_dim(ch.dim())?;
    target.require_unitary()?;
    let n = ch.dim() as f64;
    let su = target.matrix().conjugate().kronecker(target.matrix());
    Ok(((su.adjoint() * ch.superoperator()).trace() / (n * n)).re)
}

/// `(N F_e + 1) / (N + 1)`; `2 F_e / 3 + 1 / 3` for a qubit.
pub fn average_gate_fidelity(fe: f64, dim: usize) -> f64 {
    let n = dim as f64;
    (n * fe + 1.0) / (n + 1.0)
}

/// Per-experiment fidelity summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub f0: Option<f64>,
    pub fplus: Option<f64>,
    pub fplusi: Option<f64>,
    pub fe: f64,
    pub fbar: f64,
    pub coherence: Option<f64>,
    pub seed: Option<u64>,
    pub label: String,
    pub fe_above_threshold: bool,
    #[serde(default)]
    pub noise: BTreeMap<String, f64>,
}

impl FidelityReport {
    /// Report carrying only an entanglement fidelity.
    pub fn from_fe(label: impl Into<String>, fe: f64) -> Self {
        Self {
            f0: None,
            fplus: None,
            fplusi: None,
            fe,
            fbar: average_gate_fidelity(fe, 2),
            coherence: None,
            seed: None,
            label: label.into(),
            fe_above_threshold: fe > ENTANGLEMENT_THRESHOLD,
            noise: BTreeMap::new(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_noise(mut self, key: &str, value: f64) -> Self {
        self.noise.insert(key.to_string(), value);
        self
    }

    /// Checks every fidelity against `[-eps, 1 + eps]` and the `fbar` relation.
    pub fn validate(&self) -> Result<()> {
        let in_range = |name: &'static str, v: f64| {
            if (-FIDELITY_EPS..=1.0 + FIDELITY_EPS).contains(&v) {
                Ok(())
            } else {
                Err(Error::OutOfRange {
                    name,
                    value: v,
                    reason: "fidelity outside [0, 1]",
                })
            }
        };
        for (name, v) in [("f0", self.f0), ("fplus", self.fplus), ("fplusi", self.fplusi)] {
            if let Some(v) = v {
                in_range(name, v)?;
            }
        }
        in_range("fe", self.fe)?;
        in_range("fbar", self.fbar)?;
        let gap = self.fbar - average_gate_fidelity(self.fe, 2);
        if gap.abs() > 1e-12 {
            return Err(Error::Inconsistent(format!("fbar differs from 2fe/3+1/3 by {gap:e}")));
        }
        Ok(())
    }
}

fn require_qubit(ch: &impl QuantumChannel) -> Result<()> {
    if ch.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: ch.dim(),
        });
    }
    Ok(())
}

fn basis_inputs() -> [DensityMatrix; 3] {
    let one = c(1.0, 0.0);
    [
        DensityMatrix::qubit(one, c(0.0, 0.0)).expect("normalized"),
        DensityMatrix::qubit(one, one).expect("normalized"),
        DensityMatrix::qubit(one, c(0.0, 1.0)).expect("normalized"),
    ]
}

/// Largest deviation from trace preservation, `max |Tr E(|i><j|) - delta_ij|`.
pub fn trace_preservation_deviation(ch: &impl QuantumChannel) -> f64 {
    let n = ch.dim();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut unit = DMatrix::zeros(n, n);
            unit[(i, j)] = c(1.0, 0.0);
            let expected = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((ch.apply_matrix(&unit).trace() - expected).norm());
        }
    }
    worst
}

/// Largest deviation from unitality, `max |E(1) - 1|`.
pub fn unitality_deviation(ch: &impl QuantumChannel) -> f64 {
    let n = ch.dim();
    let id = DMatrix::<C64>::identity(n, n);
    max_abs(&(ch.apply_matrix(&id) - id))
}

/// Three-state estimate `F_e = (F_0 + F_+ + F_+i - 1) / 2`, valid for unital
/// trace-preserving qubit channels.
pub fn gate_fidelity_from_states(ch: &impl QuantumChannel, target: &Operator) -> Result<FidelityReport> {
    require_qubit(ch)?;
    target.require_dim(2)?;
    target.require_unitary()?;
    let tp = trace_preservation_deviation(ch);
    if tp > PROPAGATION_TOL {
        return Err(Error::NotTracePreserving { deviation: tp });
    }
    let unital = unitality_deviation(ch);
    if unital > PROPAGATION_TOL {
        return Err(Error::NonUnital { deviation: unital });
    }
    let [f0, fplus, fplusi] = state_fidelities(ch, target)?;
    let fe = 0.5 * (f0 + fplus + fplusi - 1.0);
    let mut report = FidelityReport::from_fe("", fe);
    report.f0 = Some(f0);
    report.fplus = Some(fplus);
    report.fplusi = Some(fplusi);
    report.coherence = Some(coherence_metric(ch)?);
    Ok(report)
}

/// Output-state fidelities `(F_0, F_+, F_+i)` against `target` for the inputs
/// `|0>`, `|+>` and `|+i>`. Unlike [`gate_fidelity_from_states`] this places no
/// unitality requirement on the channel.
pub fn state_fidelities(ch: &impl QuantumChannel, target: &Operator) -> Result<[f64; 3]> {
    require_qubit(ch)?;
    target.require_dim(2)?;
    Ok(basis_inputs().map(|rho| {
        let ideal = target.matrix() * rho.matrix() * target.matrix().adjoint();
        (ideal * ch.apply_matrix(rho.matrix())).trace().re
    }))
}

/// `C = (Tr sx E(|+><+|) + Tr sy E(|i><i|)) / 2`.
pub fn coherence_metric(ch: &impl QuantumChannel) -> Result<f64> {
    require_qubit(ch)?;
    let [_, plus, plusi] = basis_inputs();
    let x = (pauli(Axis::X).matrix() * ch.apply_matrix(plus.matrix())).trace().re;
    let y = (pauli(Axis::Y).matrix() * ch.apply_matrix(plusi.matrix())).trace().re;
    Ok(0.5 * (x + y))
}

/// Order of the 15 two-spin Pauli products: `(a, b)` for `a, b` in
/// `(1, x, y, z)`, lexicographic, skipping `(1, 1)`.
pub fn pauli_products() -> Vec<(Axis, Axis)> {
    let mut out = Vec::with_capacity(15);
    for a in PAULI_AXES {
        for b in PAULI_AXES {
            if !(a == Axis::I && b == Axis::I) {
                out.push((a, b));
            }
        }
    }
    out
}

fn pauli_product(a: Axis, b: Axis) -> Operator {
    pauli(a).kron(&pauli(b)).expect("2x2 (x) 2x2")
}

/// The 15 expectation values in [`pauli_products`] order.
pub fn pauli_expectations(rho: &DensityMatrix) -> Result<[f64; 15]> {
    if rho.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            found: rho.dim(),
        });
    }
    let mut out = [0.0; 15];
    for (slot, (a, b)) in out.iter_mut().zip(pauli_products()) {
        *slot = rho.expectation(&pauli_product(a, b)).re;
    }
    Ok(out)
}

/// Reconstructed state and the size of the positivity repair applied to it.
#[derive(Debug, Clone, PartialEq)]
pub struct TomographyResult {
    pub state: DensityMatrix,
    /// Frobenius norm of the change made by eigenvalue clipping.
    pub correction: f64,
}

/// Linear-inversion state tomography, `rho = (1 + sum c_P P) / 4`, followed by
/// eigenvalue clipping and renormalization if the estimate is not positive.
pub fn state_tomography(expectations: &[f64; 15]) -> Result<TomographyResult> {
    let mut m = DMatrix::<C64>::identity(4, 4);
    for (&v, (a, b)) in expectations.iter().zip(pauli_products()) {
        if !(v.abs() <= 1.0 + 1e-12) {
            return Err(Error::OutOfRange {
                name: "expectation",
                value: v,
                reason: "Pauli expectation values lie in [-1, 1]",
            });
        }
        m += pauli_product(a, b).matrix() * c(v, 0.0);
    }
    m *= c(0.25, 0.0);
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.min() >= 0.0 {
        return Ok(TomographyResult {
            state: DensityMatrix::new(m)?,
            correction: 0.0,
        });
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let total = clipped.sum();
    if total <= 0.0 {
        return Err(Error::InvalidState("no positive weight left after clipping".into()));
    }
    let v = &eig.eigenvectors;
    let fixed = DMatrix::from_fn(4, 4, |r, col| v[(r, col)] * (clipped[col] / total)) * v.adjoint();
    let correction = (&fixed - &m).norm();
    let fixed = (&fixed + fixed.adjoint()) * c(0.5, 0.0);
    Ok(TomographyResult {
        state: DensityMatrix::new(fixed)?,
        correction,
    })
}

/// Reconstruction of a single-qubit process.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessTomography {
    /// Pauli transfer matrix in `(1, x, y, z)` order.
    pub ptm: Matrix4<f64>,
    pub superoperator: SuperOperator,
    pub choi: DMatrix<C64>,
    pub choi_eigenvalues: Vec<f64>,
    pub kraus: Vec<Operator>,
    /// Some Choi eigenvalue is below `-1e-6`.
    pub unphysical: bool,
}

/// Linear-inversion process tomography from the responses to `|0>`, `|1>`,
/// `|+>` and `|+i>`; `|->` and `|-i>` are queried to confirm linearity.
pub fn process_tomography(map: impl Fn(&DensityMatrix) -> Result<DensityMatrix>) -> Result<ProcessTomography> {
    let one = c(1.0, 0.0);
    let zero = c(0.0, 0.0);
    let i = c(0.0, 1.0);
    let query = |c0: C64, c1: C64| -> Result<DMatrix<C64>> {
        let out = map(&DensityMatrix::qubit(c0, c1)?)?;
        if out.dim() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: out.dim(),
            });
        }
        Ok(out.into_matrix())
    };
    let r0 = query(one, zero)?;
    let r1 = query(zero, one)?;
    let rp = query(one, one)?;
    let ri = query(one, i)?;
    let rm = query(one, -one)?;
    let rmi = query(one, -i)?;

    let e_id = &r0 + &r1;
    let images = [
        e_id.clone(),
        &rp * c(2.0, 0.0) - &e_id,
        &ri * c(2.0, 0.0) - &e_id,
        &r0 - &r1,
    ];
    let mismatch = max_abs(&(&rp + &rm - &e_id)).max(max_abs(&(&ri + &rmi - &e_id)));
    if mismatch > 1e-8 {
        return Err(Error::Inconsistent(format!(
            "responses to opposite states do not sum to the image of the identity ({mismatch:.3e})"
        )));
    }

    let paulis = PAULI_AXES.map(pauli);
    let ptm = Matrix4::from_fn(|r, col| 0.5 * (paulis[r].matrix() * &images[col]).trace().re);

    let mut sup = DMatrix::<C64>::zeros(4, 4);
    for (r, pr) in paulis.iter().enumerate() {
        let vr = DVector::from_column_slice(pr.matrix().as_slice());
        for (col, pc) in paulis.iter().enumerate() {
            let vc = DVector::from_column_slice(pc.matrix().as_slice());
            sup += (&vr * vc.adjoint()) * c(0.5 * ptm[(r, col)], 0.0);
        }
    }
    let superoperator = SuperOperator::new(2, sup)?;

    let mut choi = DMatrix::<C64>::zeros(4, 4);
    for a in 0..2 {
        for b in 0..2 {
            let mut unit = DMatrix::zeros(2, 2);
            unit[(a, b)] = one;
            let img = superoperator.apply_matrix(&unit);
            for p in 0..2 {
                for q in 0..2 {
                    choi[(2 * a + p, 2 * b + q)] = img[(p, q)];
                }
            }
        }
    }
    let choi = (&choi + choi.adjoint()) * c(0.5, 0.0);
    let eig = SymmetricEigen::new(choi.clone());
    let choi_eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let unphysical = choi_eigenvalues.iter().any(|l| *l < -CHOI_NEGATIVE_TOL);
    let kraus = (0..4)
        .filter(|&k| eig.eigenvalues[k] > 1e-12)
        .map(|k| {
            let s = eig.eigenvalues[k].sqrt();
            let v = eig.eigenvectors.column(k);
            Operator::new(DMatrix::from_fn(2, 2, |row, col| v[2 * col + row] * s))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProcessTomography {
        ptm,
        superoperator,
        choi,
        choi_eigenvalues,
        kraus,
        unphysical,
    })
}

/// How the data qubit is stored in the two spins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StoragePath {
    /// Encoded into the zero-quantum subspace and decoded afterwards.
    Encoded,
    /// Data on spin 1 with the ancilla spin in `|0>`.
    Unencoded,
}

fn storage_maps(path: StoragePath) -> (Operator, Operator) {
    match path {
        StoragePath::Encoded => (u_enc(), u_dec()),
        StoragePath::Unencoded => (Operator::identity(4), Operator::identity(4)),
    }
}

/// Block `<d' a| D U P |d 0>` of a two-spin operator, as a data-qubit operator.
fn ancilla_block(m: &DMatrix<C64>, ancilla_out: usize) -> DMatrix<C64> {
    DMatrix::from_fn(2, 2, |dp, d| m[(2 * dp + ancilla_out, 2 * d)])
}

/// Kraus set of the data-qubit channel induced by storing through `ch`:
/// `A_{k,a} = (1 (x) <a|) D E_k P (1 (x) |0>)`.
pub fn induced_data_channel(ch: &KrausChannel, path: StoragePath) -> Result<KrausChannel> {
    if ch.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            found: ch.dim(),
        });
    }
    let (enc, dec) = storage_maps(path);
    let mut ops = Vec::with_capacity(2 * ch.kraus_ops().len());
    for e in ch.kraus_ops() {
        let full = dec.matrix() * e.matrix() * enc.matrix();
        for a in 0..2 {
            let block = ancilla_block(&full, a);
            if block.norm_squared() > 1e-30 {
                ops.push(Operator::new(block)?);
            }
        }
    }
    KrausChannel::new(ops, format!("{} ({path:?})", ch.label()))
}

/// Superoperator of the induced data-qubit channel for any two-spin channel.
pub fn induced_data_superoperator(ch: &impl QuantumChannel, path: StoragePath) -> Result<SuperOperator> {
    if ch.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            found: ch.dim(),
        });
    }
    let (enc, dec) = storage_maps(path);
    let mut ancilla0 = DMatrix::<C64>::zeros(2, 2);
    ancilla0[(0, 0)] = c(1.0, 0.0);
    Ok(SuperOperator::from_linear_map(2, |data| {
        let joint = data.kronecker(&ancilla0);
        let stored = enc.matrix() * joint * enc.matrix().adjoint();
        let out = dec.matrix() * ch.apply_matrix(&stored) * dec.matrix().adjoint();
        partial_trace_second(&out)
    }))
}

/// Data-qubit unitary implemented by a noiseless two-spin unitary along `path`;
/// fails if the operation does not return the ancilla to `|0>`.
pub fn data_target(u: &Operator, path: StoragePath) -> Result<Operator> {
    u.require_dim(4)?;
    let (enc, dec) = storage_maps(path);
    let full = dec.matrix() * u.matrix() * enc.matrix();
    let target = Operator::new(ancilla_block(&full, 0))?;
    target.require_unitary()?;
    Ok(target)
}

/// Gate entanglement fidelity of a two-spin unitary against a data-qubit target.
pub fn gate_fidelity(u: &Operator, target: &Operator, path: StoragePath) -> Result<f64> {
    let ch = KrausChannel::unitary(u, "gate")?;
    entanglement_fidelity(&induced_data_channel(&ch, path)?, target)
}

/// Mean gate entanglement fidelity over an ensemble of member unitaries, which
/// equals the fidelity of their uniform mixture. Summed in member order.
pub fn ensemble_gate_fidelity(unitaries: &[Operator], target: &Operator, path: StoragePath) -> Result<f64> {
    if unitaries.is_empty() {
        return Err(Error::MalformedSequence("empty ensemble".into()));
    }
    let mut sum = 0.0;
    for u in unitaries {
        sum += gate_fidelity(u, target, path)?;
    }
    Ok(sum / unitaries.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{collective_dephasing, DephasingStrength};
    use crate::spinops::{expm_hermitian, pauli_pair};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn phase_damping_full() -> KrausChannel {
        let p0 = Operator::from_real(2, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        let p1 = Operator::from_real(2, &[0.0, 0.0, 0.0, 1.0]).unwrap();
        KrausChannel::new(vec![p0, p1], "full phase damping").unwrap()
    }

    fn depolarizing() -> KrausChannel {
        KrausChannel::new(PAULI_AXES.iter().map(|a| pauli(*a).scale_real(0.5)).collect(), "depolarizing").unwrap()
    }

    fn random_unitary(rng: &mut ChaCha8Rng) -> Operator {
        let h = DMatrix::from_fn(2, 2, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let h = Operator::new(&h + h.adjoint()).unwrap();
        expm_hermitian(&h, rng.random_range(0.0..3.0)).unwrap()
    }

    fn random_unital(rng: &mut ChaCha8Rng) -> KrausChannel {
        let k = rng.random_range(1..5);
        let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = weights.iter().sum();
        let ops = weights
            .iter()
            .map(|w| random_unitary(rng).scale_real((w / total).sqrt()))
            .collect();
        KrausChannel::new(ops, "random mixture").unwrap()
    }

    #[test]
    fn perfect_gate_and_reference_channels() {
        let u = expm_hermitian(&pauli(Axis::Y), 0.4).unwrap();
        let ch = KrausChannel::unitary(&u, "u").unwrap();
        assert!((entanglement_fidelity(&ch, &u).unwrap() - 1.0).abs() < 1e-14);
        let id = Operator::identity(2);
        assert!((entanglement_fidelity(&phase_damping_full(), &id).unwrap() - 0.5).abs() < 1e-15);
        assert!((entanglement_fidelity(&depolarizing(), &id).unwrap() - 0.25).abs() < 1e-15);
        assert!(entanglement_fidelity(&phase_damping_full(), &Operator::identity(4)).is_err());
    }

    #[test]
    fn three_state_formula_on_reference_channels() {
        let id = Operator::identity(2);
        let r = gate_fidelity_from_states(&phase_damping_full(), &id).unwrap();
        assert!((r.f0.unwrap() - 1.0).abs() < 1e-15);
        assert!((r.fplus.unwrap() - 0.5).abs() < 1e-15);
        assert!((r.fplusi.unwrap() - 0.5).abs() < 1e-15);
        assert!((r.fe - 0.5).abs() < 1e-15);
        assert!(!r.fe_above_threshold);
        let r = gate_fidelity_from_states(&KrausChannel::identity(2), &id).unwrap();
        for f in [r.f0, r.fplus, r.fplusi, r.coherence] {
            assert!((f.unwrap() - 1.0).abs() < 1e-14);
        }
        assert!((r.fe - 1.0).abs() < 1e-14);
        r.validate().unwrap();
    }

    #[test]
    fn three_state_formula_rejects_non_unital() {
        let a0 = Operator::from_real(2, &[1.0, 0.0, 0.0, 0.6f64.sqrt()]).unwrap();
        let a1 = Operator::from_real(2, &[0.0, 0.4f64.sqrt(), 0.0, 0.0]).unwrap();
        let ad = KrausChannel::new(vec![a0, a1], "amplitude damping").unwrap();
        assert!(matches!(
            gate_fidelity_from_states(&ad, &Operator::identity(2)),
            Err(Error::NonUnital { .. })
        ));
        assert!(coherence_metric(&ad).is_ok());
    }

    #[test]
    fn formulas_agree_on_random_unital_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let ch = random_unital(&mut rng);
            let target = random_unitary(&mut rng);
            let a = entanglement_fidelity(&ch, &target).unwrap();
            let b = gate_fidelity_from_states(&ch, &target).unwrap();
            let s = entanglement_fidelity_superop(&ch, &target).unwrap();
            assert!((a - b.fe).abs() < 1e-9);
            assert!((a - s).abs() < 1e-12);
            assert!((-1e-12..=1.0 + 1e-12).contains(&a));
            assert_eq!(b.fbar, average_gate_fidelity(b.fe, 2));
        }
    }

    #[test]
    fn fidelity_is_below_one_for_distinct_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let ch = random_unital(&mut rng);
            let target = random_unitary(&mut rng);
            let su = target.matrix().conjugate().kronecker(target.matrix());
            let dist = (ch.to_superoperator() - su).norm();
            if dist > 1e-3 {
                assert!(entanglement_fidelity(&ch, &target).unwrap() < 1.0 - 1e-6);
            }
        }
    }

    #[test]
    fn coherence_of_reference_channels() {
        assert!((coherence_metric(&KrausChannel::identity(2)).unwrap() - 1.0).abs() < 1e-15);
        assert!(coherence_metric(&phase_damping_full()).unwrap().abs() < 1e-15);
        assert!(coherence_metric(&KrausChannel::identity(4)).is_err());
    }

    #[test]
    fn state_tomography_round_trips() {
        let zeros = [0.0; 15];
        let mixed = state_tomography(&zeros).unwrap();
        assert!(mixed.state.max_abs_diff(&DensityMatrix::maximally_mixed(4)) < 1e-15);

        let rho00 = DensityMatrix::basis(crate::spinops::BasisState::S00);
        let back = state_tomography(&pauli_expectations(&rho00).unwrap()).unwrap();
        assert!(back.state.max_abs_diff(&rho00) < 1e-15);
        assert_eq!(back.correction, 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let g = DMatrix::from_fn(4, 4, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let m = &g * g.adjoint();
            let tr = m.trace();
            let rho = DensityMatrix::new(m / tr).unwrap();
            let back = state_tomography(&pauli_expectations(&rho).unwrap()).unwrap();
            assert!(back.state.max_abs_diff(&rho) < 1e-12);
        }
    }

    #[test]
    fn state_tomography_repairs_negative_estimates() {
        let mut e = [0.0; 15];
        // <ZZ> = <ZI> = <IZ> = 1 and <XX> = 1 is not a state
        let products = pauli_products();
        for (slot, p) in e.iter_mut().zip(&products) {
            if matches!(p, (Axis::Z, Axis::Z) | (Axis::Z, Axis::I) | (Axis::I, Axis::Z) | (Axis::X, Axis::X)) {
                *slot = 1.0;
            }
        }
        let r = state_tomography(&e).unwrap();
        assert!(r.correction > 0.0);
        assert!(r.state.min_eigenvalue() >= -1e-12);
        assert!((r.state.trace().re - 1.0).abs() < 1e-12);
        assert!(state_tomography(&[1.5; 15]).is_err());
    }

    fn tomography_of(ch: &KrausChannel) -> ProcessTomography {
        process_tomography(|rho| ch.apply(rho)).unwrap()
    }

    #[test]
    fn process_tomography_reference_maps() {
        let id = tomography_of(&KrausChannel::identity(2));
        assert!((id.ptm - Matrix4::identity()).abs().max() < 1e-15);
        assert!(max_abs(&(id.superoperator.matrix() - DMatrix::identity(4, 4))) < 1e-15);

        let x = tomography_of(&KrausChannel::unitary(&pauli(Axis::X), "x").unwrap());
        assert!((x.ptm - Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, 1.0, -1.0, -1.0))).abs().max() < 1e-15);

        let pd = tomography_of(&phase_damping_full());
        assert!((pd.ptm - Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, 0.0, 0.0, 1.0))).abs().max() < 1e-15);
        assert!(!pd.unphysical);
        assert_eq!(pd.kraus.len(), 2);
    }

    #[test]
    fn process_tomography_recovers_known_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let ch = random_unital(&mut rng);
            let t = tomography_of(&ch);
            assert!(max_abs(&(t.superoperator.matrix() - ch.to_superoperator())) < 1e-10);
            let rebuilt = KrausChannel::new(t.kraus.clone(), "rebuilt").unwrap();
            assert!(max_abs(&(rebuilt.to_superoperator() - ch.to_superoperator())) < 1e-10);
        }
        let a0 = Operator::from_real(2, &[1.0, 0.0, 0.0, 0.5f64.sqrt()]).unwrap();
        let a1 = Operator::from_real(2, &[0.0, 0.5f64.sqrt(), 0.0, 0.0]).unwrap();
        let ad = KrausChannel::new(vec![a0, a1], "ad").unwrap();
        assert!(max_abs(&(tomography_of(&ad).superoperator.matrix() - ad.to_superoperator())) < 1e-10);
    }

    #[test]
    fn process_tomography_detects_nonlinear_map() {
        let squash = |rho: &DensityMatrix| {
            // a state-dependent rotation is not linear
            let angle = rho.matrix()[(0, 1)].re;
            rho.evolve(&expm_hermitian(&pauli(Axis::Z), angle).unwrap())
        };
        assert!(matches!(process_tomography(squash), Err(Error::Inconsistent(_))));
    }

    #[test]
    fn crusher_induces_phase_damping_on_unencoded_data() {
        let crusher = collective_dephasing(DephasingStrength::Crusher).unwrap();
        let id = Operator::identity(2);
        let un = induced_data_channel(&crusher, StoragePath::Unencoded).unwrap();
        assert!((entanglement_fidelity(&un, &id).unwrap() - 0.5).abs() < 1e-15);
        let enc = induced_data_channel(&crusher, StoragePath::Encoded).unwrap();
        assert!((entanglement_fidelity(&enc, &id).unwrap() - 1.0).abs() < 1e-15);
        let sup = induced_data_superoperator(&crusher, StoragePath::Unencoded).unwrap();
        assert!(max_abs(&(sup.matrix() - un.to_superoperator())) < 1e-15);
        assert!((entanglement_fidelity_superop(&sup, &id).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn data_target_requires_clean_ancilla() {
        let zz = expm_hermitian(&pauli_pair(Axis::Z, Axis::Z), 0.3).unwrap();
        let t = data_target(&zz, StoragePath::Unencoded).unwrap();
        assert!((gate_fidelity(&zz, &t, StoragePath::Unencoded).unwrap() - 1.0).abs() < 1e-14);
        let swapish = expm_hermitian(&pauli_pair(Axis::X, Axis::X), 0.3).unwrap();
        assert!(data_target(&swapish, StoragePath::Unencoded).is_err());
    }

    #[test]
    fn report_serializes_with_fixed_field_names() {
        let r = FidelityReport::from_fe("crusher", 0.5).with_seed(Some(3)).with_noise("gamma", 1.0);
        let json = serde_json::to_value(&r).unwrap();
        for key in ["f0", "fplus", "fplusi", "fe", "fbar", "coherence", "seed", "label"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        assert!((json["fbar"].as_f64().unwrap() - (2.0 / 3.0 * 0.5 + 1.0 / 3.0)).abs() < 1e-15);
        let bad = FidelityReport { fbar: 0.1, ..r };
        assert!(bad.validate().is_err());
    }
}

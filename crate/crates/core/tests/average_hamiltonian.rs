//! Stroboscopic convergence of refocusing trains to their average Hamiltonian.

use dfsq_core::hamiltonians::SpinSystem;
use dfsq_core::pulses::{average_hamiltonian, build_sequence, propagator, SequenceKind, SequenceParams};
use dfsq_core::spinops::{expm_hermitian, pauli_embed, pauli_pair, Axis, Operator, Spin};

const TOTAL: f64 = 2e-3;
const SPACINGS_US: [f64; 4] = [10.0, 5.0, 2.5, 1.25];

fn coefficient(h: &Operator, basis: &Operator) -> f64 {
    (&basis.dagger() * h).trace().re / 4.0
}

/// Distance between the exact propagator and `exp(-i H_avg T)` at spacing `dt`.
fn stroboscopic_error(kind: SequenceKind, dt: f64) -> f64 {
    let sys = SpinSystem::default();
    let params = SequenceParams {
        cycles: (TOTAL / (2.0 * dt)).round() as usize,
        spacing: dt,
        ..SequenceParams::default()
    };
    let seq = build_sequence(kind, &params, &sys).unwrap();
    assert!((seq.duration() - TOTAL).abs() < 1e-12);
    let exact = propagator(&seq, &sys, None, 0.0).unwrap();
    let avg = average_hamiltonian(&seq, &sys).unwrap();
    exact.phase_distance(&expm_hermitian(&avg, TOTAL).unwrap())
}

/// Least-squares slope of `log err` against `log dt`.
pub fn loglog_slope(kind: SequenceKind) -> f64 {
    let pts: Vec<(f64, f64)> = SPACINGS_US
        .iter()
        .map(|&us| ((us * 1e-6f64).ln(), stroboscopic_error(kind, us * 1e-6).ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn p1_train_converges_at_first_order() {
    let slope = loglog_slope(SequenceKind::P1);
    assert!((slope - 1.0).abs() < 0.1, "slope {slope}");
}

#[test]
fn p2_train_is_exact_because_its_frames_commute() {
    for us in SPACINGS_US {
        let err = stroboscopic_error(SequenceKind::P2, us * 1e-6);
        assert!(err < 1e-10, "{us} us: {err:e}");
    }
}

#[test]
fn average_hamiltonians_drop_the_targeted_terms() {
    let sys = SpinSystem::default();
    let params = SequenceParams::default();
    let p1 = average_hamiltonian(&build_sequence(SequenceKind::P1, &params, &sys).unwrap(), &sys).unwrap();
    for spin in [Spin::One, Spin::Two] {
        assert!(coefficient(&p1, &pauli_embed(spin, Axis::Z)).abs() < 1e-12);
    }
    let p2 = average_hamiltonian(&build_sequence(SequenceKind::P2, &params, &sys).unwrap(), &sys).unwrap();
    let flip_flop = &pauli_pair(Axis::X, Axis::X) + &pauli_pair(Axis::Y, Axis::Y);
    assert!(coefficient(&p2, &flip_flop).abs() < 1e-12);
    // the Ising part survives both trains
    let zz = pauli_pair(Axis::Z, Axis::Z);
    let ising = std::f64::consts::PI * sys.j_hz / 2.0;
    assert!((coefficient(&p1, &zz) - ising).abs() < 1e-9);
    assert!((coefficient(&p2, &zz) - ising).abs() < 1e-9);
}

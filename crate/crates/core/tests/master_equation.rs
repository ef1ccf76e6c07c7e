//! Natural relaxation against a dense master-equation propagator.

mod oracles;

use dfsq_core::channels::{natural_relaxation_step, QuantumChannel, SuperOperator};
use dfsq_core::hamiltonians::SpinSystem;
use dfsq_core::metrics::{coherence_metric, induced_data_superoperator, StoragePath};

fn relaxed(f: f64, steps: u64, dt: f64) -> SuperOperator {
    let sys = SpinSystem::default();
    SuperOperator::from_channel(&natural_relaxation_step(&sys, f, dt).unwrap()).power(steps)
}

fn max_abs(m: &nalgebra::DMatrix<num_complex::Complex64>) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}

#[test]
fn composed_steps_match_master_equation() {
    let sys = SpinSystem::default();
    for f in [0.0, 0.5, 0.9, 1.0] {
        let t = 0.5;
        let dt = 1e-3;
        let simulated = relaxed(f, (t / dt) as u64, dt);
        let exact = oracles::evolve(&oracles::natural_generator(sys.t1_s, sys.t2_s, f), t);
        let err = max_abs(&(simulated.superoperator() - exact));
        assert!(err < 1e-9, "f={f}: {err:e}");
    }
}

#[test]
fn coherence_curves_match_master_equation() {
    let sys = SpinSystem::default();
    for f in [0.0, 0.5, 1.0] {
        let generator = oracles::natural_generator(sys.t1_s, sys.t2_s, f);
        for t in [0.3, 1.0, 3.0] {
            let sim = relaxed(f, (t * 1e3f64).round() as u64, 1e-3);
            let exact = oracles::evolve(&generator, t);
            for (path, encoded) in [(StoragePath::Encoded, true), (StoragePath::Unencoded, false)] {
                let got = coherence_metric(&induced_data_superoperator(&sim, path).unwrap()).unwrap();
                let want = oracles::coherence(&exact, encoded);
                assert!((got - want).abs() < 1e-9, "f={f} t={t} {path:?}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn fully_collective_dephasing_leaves_only_t1_loss() {
    let sys = SpinSystem::default();
    let t = 2.0;
    let sim = relaxed(1.0, 2000, 1e-3);
    let c = coherence_metric(&induced_data_superoperator(&sim, StoragePath::Encoded).unwrap()).unwrap();
    // amplitude damping on both spins removes zero-quantum coherence at 1/T1
    assert!((c - (-t / sys.t1_s).exp()).abs() < 1e-9, "{c}");
    let un = coherence_metric(&induced_data_superoperator(&sim, StoragePath::Unencoded).unwrap()).unwrap();
    assert!((un - (-t / sys.t2_s).exp()).abs() < 1e-9, "{un}");
    assert!(c > un);
}

#[test]
fn independent_dephasing_doubles_encoded_dephasing_rate() {
    // with f = 0 both spins dephase independently, so the two-spin code
    // coherence loses phase twice as fast as a single spin
    let sys = SpinSystem::default();
    let gphi = sys.pure_dephasing_rate();
    let t = 1.0;
    let sim = relaxed(0.0, 1000, 1e-3);
    let enc = coherence_metric(&induced_data_superoperator(&sim, StoragePath::Encoded).unwrap()).unwrap();
    let un = coherence_metric(&induced_data_superoperator(&sim, StoragePath::Unencoded).unwrap()).unwrap();
    let enc_rate = -enc.ln() / t;
    let un_rate = -un.ln() / t;
    assert!((enc_rate - (2.0 * gphi + 1.0 / sys.t1_s)).abs() < 1e-9, "{enc_rate}");
    assert!((un_rate - (gphi + 0.5 / sys.t1_s)).abs() < 1e-9, "{un_rate}");
    assert!((enc_rate - un_rate - (gphi + 0.5 / sys.t1_s)).abs() < 1e-9);
}

#[test]
fn pure_dephasing_channel_is_unital() {
    let sys = SpinSystem {
        t1_s: f64::INFINITY,
        t2_s: 3.5,
        ..SpinSystem::default()
    };
    let generator = oracles::natural_generator(sys.t1_s, sys.t2_s, 0.3);
    let exact = oracles::evolve(&generator, 1.0);
    let id = nalgebra::DMatrix::<num_complex::Complex64>::identity(4, 4);
    assert!(max_abs(&(oracles::apply(&exact, &id) - &id)) < 1e-12);
    let ch = natural_relaxation_step(&sys, 0.3, 1e-3).unwrap();
    assert!(dfsq_core::metrics::unitality_deviation(&ch) < 1e-12);
}

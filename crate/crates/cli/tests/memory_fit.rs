//! Fitting the simulated un-encoded memory curve.

use dfsq_cli::config::Gradient;
use dfsq_cli::{run, Experiment, ExperimentConfig};
use dfsq_core::hamiltonians::PROTON_GYROMAGNETIC_RATIO;

#[test]
fn fitted_decay_time_matches_gaussian_average() {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = Some(21);
    cfg.ensemble.n_members = 20000;
    cfg.memory.gradients = vec!["40 G/cm".parse::<Gradient>().unwrap(), "60 G/cm".parse().unwrap()];
    cfg.memory.t_ev_ms = vec![5.0, 10.0, 20.0, 30.0, 40.0, 60.0, 80.0];
    let out = run(Experiment::Memory, &cfg).unwrap();
    assert_eq!(out.fits.len(), 2);
    let d = cfg.ensemble.diffusion_m2_per_s;
    let delta = cfg.memory.delta_us * 1e-6;
    for fit in &out.fits {
        // independent of the library: 1 / (D (gamma g delta)^2)
        let k = PROTON_GYROMAGNETIC_RATIO * fit.grad_t_per_m * delta;
        let tau = 1.0 / (d * k * k);
        assert!((fit.tau_expected_s - tau).abs() < 1e-9 * tau);
        let rel = (fit.fit.tau - tau).abs() / tau;
        assert!(rel < 0.05, "g={} fitted {} expected {tau} ({rel:.3})", fit.grad_t_per_m, fit.fit.tau);
        assert!(!fit.fit.no_decay);
    }
}

#[test]
fn encoded_memory_is_flat_and_unencoded_is_constant_without_noise() {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = Some(4);
    cfg.ensemble.n_members = 200;
    cfg.memory.gradients = vec!["0 G/cm".parse().unwrap()];
    cfg.memory.t_ev_ms = vec![5.0, 20.0, 37.765];
    let out = run(Experiment::Memory, &cfg).unwrap();
    assert!(out.reports.iter().all(|r| (r.fe - 1.0).abs() < 1e-6 && r.fe_above_threshold));
    assert!(out.fits[0].fit.no_decay);
    assert!(out.fits[0].fit.tau.is_infinite());
}

#[test]
fn noisy_gate_at_zero_noise_equals_noiseless_gate() {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = Some(1);
    cfg.ensemble.n_members = 16;
    cfg.noisy_gate.grad_max = vec!["0 kHz/cm".parse().unwrap()];
    cfg.noisy_gate.realizations = 1;
    let noisy = run(Experiment::NoisyGate, &cfg).unwrap();
    let gates = run(Experiment::Gates, &cfg).unwrap();
    let reference = gates.reports.iter().find(|r| r.label == "COMPOSITE_Y90").unwrap();
    assert!((noisy.reports[0].fe - reference.fe).abs() < 1e-9);
}

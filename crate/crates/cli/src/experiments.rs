//! The five experiments. Each returns CSV rows plus fidelity reports; writing
//! them to disk is left to [`crate::output`].

use std::f64::consts::PI;

use dfsq_core::channels::{
    collective_dephasing, natural_relaxation_step, DephasingStrength, KrausChannel, QuantumChannel,
    SuperOperator,
};
use dfsq_core::ensemble::{
    diffusion_decay_rate, ensemble_propagators, member_positions, random_walk_waveform,
    refocused_memory_unitaries, steps_to_cover,
};
use dfsq_core::hamiltonians::{gradient_rate, SpinSystem};
use dfsq_core::metrics::{
    coherence_metric, data_target, ensemble_gate_fidelity, entanglement_fidelity,
    entanglement_fidelity_superop, gate_fidelity, induced_data_channel,
    induced_data_superoperator, state_fidelities, FidelityReport, StoragePath,
    ENTANGLEMENT_THRESHOLD,
};
use dfsq_core::pulses::{
    build_sequence, dfs_residence_fraction, propagator, target_code_unitary, PulseSequence,
    SequenceKind, SequenceParams,
};
use dfsq_core::spinops::{logical_zero, DensityMatrix, Operator};
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::fit::{fit_decay, DecayFit};

/// Everything an experiment produces.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ExperimentOutput {
    /// CSV text with a fixed header.
    #[serde(skip)]
    pub csv: String,
    pub reports: Vec<FidelityReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub fits: Vec<FitSummary>,
    /// Extra files `(name, contents)` written next to the results.
    #[serde(skip)]
    pub attachments: Vec<(String, String)>,
}

/// Fitted memory decay for one gradient over the configured storage times.
#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub grad_t_per_m: f64,
    pub fit: DecayFit,
    /// `1 / (D (gamma g delta)^2)`, s.
    pub tau_expected_s: f64,
}

fn above(fe: f64) -> bool {
    fe > ENTANGLEMENT_THRESHOLD
}

fn to_csv<R: Serialize>(rows: &[R]) -> Result<String, CliError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| CliError::Config(format!("csv serialization: {e}")))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| CliError::Config(format!("csv serialization: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn identity2() -> Operator {
    Operator::identity(2)
}

fn checked(report: FidelityReport) -> Result<FidelityReport, CliError> {
    report.validate()?;
    Ok(report)
}

/// Output-state fidelities and coherence alongside the exact `fe`.
fn state_report(
    ch: &impl QuantumChannel,
    target: &Operator,
    fe: f64,
    label: &str,
) -> Result<FidelityReport, CliError> {
    let [f0, fplus, fplusi] = state_fidelities(ch, target)?;
    let mut report = FidelityReport::from_fe(label, fe);
    report.f0 = Some(f0);
    report.fplus = Some(fplus);
    report.fplusi = Some(fplusi);
    report.coherence = Some(coherence_metric(ch)?);
    checked(report)
}

fn seed_of(cfg: &ExperimentConfig) -> Result<u64, CliError> {
    cfg.seed
        .ok_or_else(|| CliError::Config("seed: an explicit seed is required".into()))
}

// ---------------------------------------------------------------- memory

#[derive(Debug, Serialize)]
struct MemoryRow {
    grad_t_per_m: f64,
    delta_us: f64,
    t_ev_ms: f64,
    noise_rate_per_s: f64,
    fe_encoded: f64,
    fe_unencoded: f64,
    encoded_above_threshold: bool,
    unencoded_above_threshold: bool,
}

/// Encoded and un-encoded storage under the gradient-diffusion echo.
pub fn memory(cfg: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    let sys = cfg.spin_system;
    let base_seed = seed_of(cfg)?;
    let m = &cfg.memory;
    let delta = m.delta_us * 1e-6;
    let grid: Vec<(f64, f64)> = m
        .gradients
        .iter()
        .flat_map(|g| {
            let g = g.tesla_per_meter(sys.gamma_gyro);
            m.t_ev_ms.iter().map(move |&t| (g, t * 1e-3))
        })
        .collect();

    let points: Vec<(MemoryRow, [FidelityReport; 2])> = grid
        .par_iter()
        .enumerate()
        .map(|(index, &(grad, t_ev))| {
            let seed = base_seed ^ index as u64;
            let spec = cfg.ensemble.spec(grad, seed);
            let (members, reference) = refocused_memory_unitaries(grad, delta, t_ev, &spec, &sys)?;
            let rate = diffusion_decay_rate(grad, delta, 1, spec.diffusion_d, &sys);
            let mut fes = [0.0; 2];
            let mut reports = Vec::with_capacity(2);
            for (k, path) in [StoragePath::Encoded, StoragePath::Unencoded].into_iter().enumerate() {
                let target = data_target(&reference, path)?;
                fes[k] = ensemble_gate_fidelity(&members, &target, path)?;
                let label = format!("memory {path:?} g={grad}T/m t_ev={t_ev}s").to_lowercase();
                reports.push(checked(
                    FidelityReport::from_fe(label, fes[k])
                        .with_seed(Some(seed))
                        .with_noise("grad_t_per_m", grad)
                        .with_noise("delta_s", delta)
                        .with_noise("big_delta_s", t_ev - 2.0 * delta)
                        .with_noise("t_ev_s", t_ev)
                        .with_noise("noise_rate_per_s", rate),
                )?);
            }
            let row = MemoryRow {
                grad_t_per_m: grad,
                delta_us: m.delta_us,
                t_ev_ms: t_ev * 1e3,
                noise_rate_per_s: rate,
                fe_encoded: fes[0],
                fe_unencoded: fes[1],
                encoded_above_threshold: above(fes[0]),
                unencoded_above_threshold: above(fes[1]),
            };
            let reports: [FidelityReport; 2] = reports.try_into().expect("two paths");
            Ok((row, reports))
        })
        .collect::<Result<_, CliError>>()?;

    let mut fits = Vec::new();
    if m.t_ev_ms.len() >= 3 {
        for chunk in points.chunks(m.t_ev_ms.len()) {
            let grad = chunk[0].0.grad_t_per_m;
            let x: Vec<f64> = chunk.iter().map(|(r, _)| r.t_ev_ms * 1e-3).collect();
            let y: Vec<f64> = chunk.iter().map(|(r, _)| r.fe_unencoded).collect();
            let rate = diffusion_decay_rate(grad, delta, 1, cfg.ensemble.diffusion_m2_per_s, &sys);
            fits.push(FitSummary {
                grad_t_per_m: grad,
                fit: fit_decay(&x, &y)?,
                tau_expected_s: if rate > 0.0 { 1.0 / rate } else { f64::INFINITY },
            });
        }
    }

    let (rows, reports): (Vec<_>, Vec<_>) = points.into_iter().unzip();
    Ok(ExperimentOutput {
        csv: to_csv(&rows)?,
        reports: reports.into_iter().flatten().collect(),
        fits,
        attachments: Vec::new(),
    })
}

// ---------------------------------------------------------------- crusher

#[derive(Debug, Serialize)]
struct CrusherRow {
    row: String,
    model: &'static str,
    f0: f64,
    fplus: f64,
    fplusi: f64,
    fe: f64,
    fbar: f64,
    fe_above_threshold: bool,
}

impl CrusherRow {
    fn new(row: &str, model: &'static str, report: &FidelityReport) -> Self {
        Self {
            row: row.to_string(),
            model,
            f0: report.f0.unwrap_or(f64::NAN),
            fplus: report.fplus.unwrap_or(f64::NAN),
            fplusi: report.fplusi.unwrap_or(f64::NAN),
            fe: report.fe,
            fbar: report.fbar,
            fe_above_threshold: report.fe_above_threshold,
        }
    }
}

/// Uniform mixture of `U rho U^dagger` over the members.
fn mixture(unitaries: &[Operator]) -> SuperOperator {
    let weight = C64::new(1.0 / unitaries.len() as f64, 0.0);
    SuperOperator::from_linear_map(4, |m: &DMatrix<C64>| {
        unitaries
            .iter()
            .fold(DMatrix::zeros(4, 4), |acc, u| acc + u.matrix() * m * u.matrix().adjoint())
            * weight
    })
}

/// Static-gradient phase propagators of the ensemble, in the interaction frame.
fn static_gradient_unitaries(grad: f64, duration: f64, cfg: &ExperimentConfig) -> Result<Vec<Operator>, CliError> {
    let sys: SpinSystem = cfg.spin_system;
    let spec = cfg.ensemble.spec(grad, cfg.seed.unwrap_or(0));
    Ok(member_positions(&spec)?
        .into_iter()
        .map(|z| {
            let phase = gradient_rate(grad, z, &sys) * duration;
            let diag = [2.0, 0.0, 0.0, -2.0].map(|m: f64| C64::from_polar(1.0, -phase * m));
            Operator::from_diagonal(&diag).expect("4x4 diagonal")
        })
        .collect())
}

/// Kraus-model rows under the crusher and ensemble rows under a static gradient.
pub fn crusher(cfg: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    let crusher = collective_dephasing(DephasingStrength::Crusher)?;
    let identity = KrausChannel::identity(4);
    let target = identity2();
    let mut rows = Vec::new();
    let mut reports = Vec::new();

    let kraus_rows = [
        ("Q_z_un", &crusher, StoragePath::Unencoded),
        ("Q_0_df", &identity, StoragePath::Encoded),
        ("Q_z_df", &crusher, StoragePath::Encoded),
    ];
    for (name, ch, path) in kraus_rows {
        let data = induced_data_channel(ch, path)?;
        let fe = entanglement_fidelity(&data, &target)?;
        let report = state_report(&data, &target, fe, &format!("{name} kraus"))?;
        rows.push(CrusherRow::new(name, "kraus", &report));
        reports.push(report);
    }

    let grad = cfg.crusher.gradient.tesla_per_meter(cfg.spin_system.gamma_gyro);
    let members = static_gradient_unitaries(grad, cfg.crusher.delta_us * 1e-6, cfg)?;
    let noisy = mixture(&members);
    let quiet = SuperOperator::from_channel(&identity);
    let ensemble_rows = [
        ("Q_z_un", &noisy, StoragePath::Unencoded),
        ("Q_0_df", &quiet, StoragePath::Encoded),
        ("Q_z_df", &noisy, StoragePath::Encoded),
    ];
    for (name, ch, path) in ensemble_rows {
        let data = induced_data_superoperator(ch, path)?;
        let fe = entanglement_fidelity_superop(&data, &target)?;
        let report = state_report(&data, &target, fe, &format!("{name} ensemble"))?
            .with_noise("grad_t_per_m", grad)
            .with_noise("delta_s", cfg.crusher.delta_us * 1e-6);
        rows.push(CrusherRow::new(name, "ensemble", &report));
        reports.push(report);
    }

    Ok(ExperimentOutput {
        csv: to_csv(&rows)?,
        reports,
        ..Default::default()
    })
}

// ---------------------------------------------------------------- natural

#[derive(Debug, Serialize)]
struct NaturalRow {
    f_collective: f64,
    t_s: f64,
    c_encoded: f64,
    c_unencoded: f64,
    fe_encoded: f64,
    fe_unencoded: f64,
    encoded_above_threshold: bool,
    unencoded_above_threshold: bool,
}

/// Coherence curves under natural relaxation for each collective fraction.
pub fn natural(cfg: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    let sys = cfg.spin_system;
    let n = &cfg.natural;
    let counts = n.step_counts();
    let target = identity2();

    let curves: Vec<Vec<(NaturalRow, [FidelityReport; 2])>> = n
        .f_collective
        .par_iter()
        .map(|&f| {
            let step = SuperOperator::from_channel(&natural_relaxation_step(&sys, f, n.dt_s)?);
            let mut held = SuperOperator::from_channel(&KrausChannel::identity(4));
            let mut done = 0;
            let mut out = Vec::with_capacity(counts.len());
            for &k in &counts {
                held = held.then(&step.power(k - done))?;
                done = k;
                let t = k as f64 * n.dt_s;
                let mut c = [0.0; 2];
                let mut fe = [0.0; 2];
                let mut reports = Vec::with_capacity(2);
                for (i, path) in [StoragePath::Encoded, StoragePath::Unencoded].into_iter().enumerate() {
                    let data = induced_data_superoperator(&held, path)?;
                    c[i] = coherence_metric(&data)?;
                    fe[i] = entanglement_fidelity_superop(&data, &target)?;
                    let label = format!("natural {path:?} f={f} t={t}s").to_lowercase();
                    let mut report = FidelityReport::from_fe(label, fe[i])
                        .with_noise("f_collective", f)
                        .with_noise("t_s", t);
                    report.coherence = Some(c[i]);
                    reports.push(checked(report)?);
                }
                let row = NaturalRow {
                    f_collective: f,
                    t_s: t,
                    c_encoded: c[0],
                    c_unencoded: c[1],
                    fe_encoded: fe[0],
                    fe_unencoded: fe[1],
                    encoded_above_threshold: above(fe[0]),
                    unencoded_above_threshold: above(fe[1]),
                };
                out.push((row, reports.try_into().expect("two paths")));
            }
            Ok(out)
        })
        .collect::<Result<_, CliError>>()?;

    let (rows, reports): (Vec<_>, Vec<_>) = curves.into_iter().flatten().unzip();
    Ok(ExperimentOutput {
        csv: to_csv(&rows)?,
        reports: reports.into_iter().flatten().collect(),
        ..Default::default()
    })
}

// ---------------------------------------------------------------- gates

#[derive(Debug, Serialize)]
struct GateRow {
    label: String,
    theta_deg: f64,
    duration_ms: f64,
    f0: f64,
    fplus: f64,
    fplusi: f64,
    fe: f64,
    fbar: f64,
    dfs_residence: f64,
    fe_above_threshold: bool,
}

/// Code-block target as a data-qubit operator.
pub fn data_qubit_target(kind: SequenceKind, theta: f64) -> Result<Operator, CliError> {
    let block = target_code_unitary(kind, theta)?;
    Ok(Operator::new(DMatrix::from_fn(2, 2, |r, c| block[(r, c)]))?)
}

/// Noiseless gate fidelity, state fidelities and DFS residence of one sequence.
pub fn evaluate_gate(
    seq: &PulseSequence,
    target: &Operator,
    sys: &SpinSystem,
) -> Result<(FidelityReport, f64), CliError> {
    let u = propagator(seq, sys, None, 0.0)?;
    let fe = gate_fidelity(&u, target, StoragePath::Encoded)?;
    let data = induced_data_channel(&KrausChannel::unitary(&u, seq.label())?, StoragePath::Encoded)?;
    let report = state_report(&data, target, fe, seq.label())?;
    let residence = dfs_residence_fraction(seq, sys, &DensityMatrix::from_ket(&logical_zero())?)?;
    Ok((report.with_noise("dfs_residence", residence), residence))
}

fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|ch| if ch.is_ascii_alphanumeric() || ch == '_' { ch } else { '_' })
        .collect::<String>()
        .trim_matches('_')
        .to_string()
}

/// Noiseless encoded gates with finite-duration pulses.
pub fn gates(cfg: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    let sys = cfg.spin_system;
    let evaluated: Vec<(GateRow, FidelityReport, (String, String))> = cfg
        .gates
        .gates
        .par_iter()
        .map(|entry| {
            let kind = entry.sequence_kind().map_err(CliError::Config)?;
            let theta = entry.theta_deg.to_radians();
            let params = SequenceParams {
                theta,
                calibrate: entry.calibrate,
                ..SequenceParams::default()
            };
            let seq = build_sequence(kind, &params, &sys)?;
            let target = data_qubit_target(kind, theta)?;
            let (report, residence) = evaluate_gate(&seq, &target, &sys)?;
            let row = GateRow {
                label: seq.label().to_string(),
                theta_deg: if kind == SequenceKind::CompositeY90 { 90.0 } else { entry.theta_deg },
                duration_ms: seq.duration() * 1e3,
                f0: report.f0.unwrap_or(f64::NAN),
                fplus: report.fplus.unwrap_or(f64::NAN),
                fplusi: report.fplusi.unwrap_or(f64::NAN),
                fe: report.fe,
                fbar: report.fbar,
                dfs_residence: residence,
                fe_above_threshold: report.fe_above_threshold,
            };
            let dump = (format!("{}.seq", file_stem(seq.label())), seq.to_text());
            Ok((row, report, dump))
        })
        .collect::<Result<_, CliError>>()?;

    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let mut attachments = Vec::new();
    for (row, report, dump) in evaluated {
        rows.push(row);
        reports.push(report);
        if cfg.gates.dump_sequences && !attachments.iter().any(|(n, _): &(String, String)| *n == dump.0) {
            attachments.push(dump);
        }
    }
    Ok(ExperimentOutput {
        csv: to_csv(&rows)?,
        reports,
        fits: Vec::new(),
        attachments,
    })
}

// ---------------------------------------------------------------- noisy gate

#[derive(Debug, Serialize)]
struct NoisyGateRow {
    grad_max_khz_per_cm: f64,
    grad_max_t_per_m: f64,
    fe: f64,
    fe_stderr: f64,
    fe_memory: f64,
    fe_above_threshold: bool,
}

/// Seed of realization `r` at sweep point `index`.
pub fn realization_seed(base: u64, index: usize, r: usize) -> u64 {
    (base ^ index as u64) ^ ((r as u64) << 32)
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// COMPOSITE_Y90 and an equally long encoded memory under random-walk gradients.
pub fn noisy_gate(cfg: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    let sys = cfg.spin_system;
    let base_seed = seed_of(cfg)?;
    let ng = &cfg.noisy_gate;
    let step = ng.step_us * 1e-6;

    let gate = build_sequence(SequenceKind::CompositeY90, &SequenceParams::default(), &sys)?;
    let gate_target = data_qubit_target(SequenceKind::CompositeY90, PI / 2.0)?;
    let hold = PulseSequence::free(gate.duration())?;
    let hold_target = data_target(&propagator(&hold, &sys, None, 0.0)?, StoragePath::Encoded)?;
    let n_steps = steps_to_cover(gate.duration(), step);

    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for (index, g) in ng.grad_max.iter().enumerate() {
        let grad = g.tesla_per_meter(sys.gamma_gyro);
        let mut gate_fe = Vec::with_capacity(ng.realizations);
        let mut hold_fe = Vec::with_capacity(ng.realizations);
        for r in 0..ng.realizations {
            let spec = cfg.ensemble.spec(grad, realization_seed(base_seed, index, r));
            let waveform = random_walk_waveform(&spec, n_steps, step)?;
            let members = ensemble_propagators(&gate, &waveform, &spec, &sys, 0.0)?;
            gate_fe.push(ensemble_gate_fidelity(&members, &gate_target, StoragePath::Encoded)?);
            let members = ensemble_propagators(&hold, &waveform, &spec, &sys, 0.0)?;
            hold_fe.push(ensemble_gate_fidelity(&members, &hold_target, StoragePath::Encoded)?);
        }
        let (fe, stderr) = mean_and_stderr(&gate_fe);
        let (fe_memory, _) = mean_and_stderr(&hold_fe);
        let khz = g.kilohertz_per_cm(sys.gamma_gyro);
        reports.push(checked(
            FidelityReport::from_fe(format!("noisy COMPOSITE_Y90 {khz} kHz/cm"), fe)
                .with_seed(Some(base_seed ^ index as u64))
                .with_noise("grad_max_khz_per_cm", khz)
                .with_noise("grad_max_t_per_m", grad)
                .with_noise("fe_stderr", stderr)
                .with_noise("fe_memory", fe_memory),
        )?);
        rows.push(NoisyGateRow {
            grad_max_khz_per_cm: khz,
            grad_max_t_per_m: grad,
            fe,
            fe_stderr: stderr,
            fe_memory,
            fe_above_threshold: above(fe),
        });
    }
    Ok(ExperimentOutput {
        csv: to_csv(&rows)?,
        reports,
        ..Default::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stderr_of_constant_is_zero() {
        let (m, s) = mean_and_stderr(&[0.7, 0.7, 0.7]);
        assert!((m - 0.7).abs() < 1e-15 && s < 1e-15);
        let (m, s) = mean_and_stderr(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn realization_seeds_are_distinct() {
        let mut seeds: Vec<u64> = (0..9)
            .flat_map(|i| (0..3).map(move |r| realization_seed(42, i, r)))
            .collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 27);
    }

    #[test]
    fn file_stems_are_safe() {
        assert_eq!(file_stem("COMPOSITE_Y90(uncalibrated)"), "COMPOSITE_Y90_uncalibrated");
        assert_eq!(file_stem("ENC_X(90)"), "ENC_X_90");
    }
}

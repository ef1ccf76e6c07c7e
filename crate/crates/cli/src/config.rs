//! Declarative experiment configuration read from TOML.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use dfsq_core::ensemble::EnsembleSpec;
use dfsq_core::hamiltonians::SpinSystem;
use dfsq_core::pulses::SequenceKind;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Experiments driven by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Memory,
    Crusher,
    Natural,
    Gates,
    NoisyGate,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Memory => "memory",
            Experiment::Crusher => "crusher",
            Experiment::Natural => "natural",
            Experiment::Gates => "gates",
            Experiment::NoisyGate => "noisy_gate",
        }
    }

    /// Whether the experiment draws random numbers and so needs an explicit seed.
    pub fn needs_seed(self) -> bool {
        matches!(self, Experiment::Memory | Experiment::NoisyGate)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Units accepted for gradient strengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientUnit {
    TeslaPerMeter,
    MilliteslaPerMeter,
    GaussPerCm,
    /// Proton precession-frequency spread per unit length.
    KilohertzPerCm,
    HertzPerCm,
}

impl GradientUnit {
    fn symbol(self) -> &'static str {
        match self {
            GradientUnit::TeslaPerMeter => "T/m",
            GradientUnit::MilliteslaPerMeter => "mT/m",
            GradientUnit::GaussPerCm => "G/cm",
            GradientUnit::KilohertzPerCm => "kHz/cm",
            GradientUnit::HertzPerCm => "Hz/cm",
        }
    }
}

/// A gradient strength with an explicit unit, e.g. `"60 G/cm"` or `"10 kHz/cm"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Gradient {
    pub value: f64,
    pub unit: GradientUnit,
}

impl Gradient {
    pub fn new(value: f64, unit: GradientUnit) -> Self {
        Self { value, unit }
    }

    /// Strength in T/m; frequency units are converted with `gamma_gyro` (rad s^-1 T^-1).
    pub fn tesla_per_meter(&self, gamma_gyro: f64) -> f64 {
        let hz_per_m = |hz_per_cm: f64| hz_per_cm * 100.0;
        match self.unit {
            GradientUnit::TeslaPerMeter => self.value,
            GradientUnit::MilliteslaPerMeter => self.value * 1e-3,
            GradientUnit::GaussPerCm => self.value * 1e-2,
            GradientUnit::KilohertzPerCm => {
                2.0 * std::f64::consts::PI * hz_per_m(self.value * 1e3) / gamma_gyro
            }
            GradientUnit::HertzPerCm => 2.0 * std::f64::consts::PI * hz_per_m(self.value) / gamma_gyro,
        }
    }

    /// Strength expressed in kHz/cm.
    pub fn kilohertz_per_cm(&self, gamma_gyro: f64) -> f64 {
        self.tesla_per_meter(gamma_gyro) * gamma_gyro / (2.0 * std::f64::consts::PI) / 100.0 / 1e3
    }
}

impl fmt::Display for Gradient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.value, self.unit.symbol())
    }
}

impl FromStr for Gradient {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let split = s
            .find(|ch: char| ch.is_ascii_alphabetic() && ch != 'e' && ch != 'E')
            .ok_or_else(|| format!("gradient `{s}` needs a unit (T/m, mT/m, G/cm, kHz/cm or Hz/cm)"))?;
        let (number, unit) = s.split_at(split);
        let value: f64 = number
            .trim()
            .parse()
            .map_err(|_| format!("gradient `{s}` has no valid number"))?;
        if !value.is_finite() || value < 0.0 {
            return Err(format!("gradient `{s}` must be finite and non-negative"));
        }
        let unit = match unit.trim() {
            "T/m" => GradientUnit::TeslaPerMeter,
            "mT/m" => GradientUnit::MilliteslaPerMeter,
            "G/cm" => GradientUnit::GaussPerCm,
            "kHz/cm" => GradientUnit::KilohertzPerCm,
            "Hz/cm" => GradientUnit::HertzPerCm,
            other => return Err(format!("unknown gradient unit `{other}`")),
        };
        Ok(Self { value, unit })
    }
}

impl TryFrom<String> for Gradient {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Gradient> for String {
    fn from(g: Gradient) -> Self {
        g.to_string()
    }
}

/// Ensemble settings shared by the ensemble experiments. The gradient scale is
/// set per sweep point, so it is not configurable here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_members: usize,
    pub sample_length_m: f64,
    pub diffusion_m2_per_s: f64,
    pub jitter: bool,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        let spec = EnsembleSpec::default();
        Self {
            n_members: spec.n_members,
            sample_length_m: spec.sample_length,
            diffusion_m2_per_s: spec.diffusion_d,
            jitter: spec.jitter,
        }
    }
}

impl EnsembleConfig {
    pub fn spec(&self, grad_max: f64, seed: u64) -> EnsembleSpec {
        EnsembleSpec {
            n_members: self.n_members,
            sample_length: self.sample_length_m,
            grad_max,
            diffusion_d: self.diffusion_m2_per_s,
            seed,
            jitter: self.jitter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryConfig {
    pub gradients: Vec<Gradient>,
    /// Gradient pulse length, us.
    pub delta_us: f64,
    /// Total storage times `Delta + 2 delta`, ms.
    pub t_ev_ms: Vec<f64>,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            gradients: (0..=12)
                .map(|k| Gradient::new(5.0 * k as f64, GradientUnit::GaussPerCm))
                .collect(),
            delta_us: 745.0,
            t_ev_ms: vec![37.765],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrusherConfig {
    /// Static gradient of the ensemble rows.
    pub gradient: Gradient,
    pub delta_us: f64,
}

impl Default for CrusherConfig {
    fn default() -> Self {
        Self {
            gradient: Gradient::new(60.0, GradientUnit::GaussPerCm),
            delta_us: 745.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NaturalConfig {
    pub f_collective: Vec<f64>,
    pub t_max_s: f64,
    pub t_step_s: f64,
    /// Relaxation step used to build the channel, s.
    pub dt_s: f64,
}

impl Default for NaturalConfig {
    fn default() -> Self {
        Self {
            f_collective: vec![0.5, 0.9, 1.0],
            t_max_s: 3.0,
            t_step_s: 0.1,
            dt_s: 1e-3,
        }
    }
}

impl NaturalConfig {
    /// Holding times `0, step, ..., t_max` as integer multiples of `dt`.
    pub fn step_counts(&self) -> Vec<u64> {
        let per_point = (self.t_step_s / self.dt_s).round() as u64;
        let points = (self.t_max_s / self.t_step_s).round() as u64;
        (0..=points).map(|k| k * per_point).collect()
    }
}

/// One gate of the `gates` experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateEntry {
    /// `ENC_Z`, `ENC_X` or `COMPOSITE_Y90`.
    pub kind: String,
    #[serde(default = "default_theta_deg")]
    pub theta_deg: f64,
    #[serde(default = "default_true")]
    pub calibrate: bool,
}

fn default_theta_deg() -> f64 {
    90.0
}

fn default_true() -> bool {
    true
}

impl GateEntry {
    pub fn sequence_kind(&self) -> Result<SequenceKind, String> {
        let kind: SequenceKind = self.kind.parse().map_err(|e| format!("{e}"))?;
        match kind {
            SequenceKind::EncZ | SequenceKind::EncX | SequenceKind::CompositeY90 => Ok(kind),
            other => Err(format!("{other} is not a gate")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatesConfig {
    pub gates: Vec<GateEntry>,
    /// Also write each sequence as `<label>.seq` next to the results.
    pub dump_sequences: bool,
}

impl Default for GatesConfig {
    fn default() -> Self {
        let entry = |kind: &str, calibrate| GateEntry {
            kind: kind.into(),
            theta_deg: 90.0,
            calibrate,
        };
        Self {
            gates: vec![
                entry("ENC_Z", true),
                entry("ENC_X", true),
                entry("COMPOSITE_Y90", true),
                entry("COMPOSITE_Y90", false),
            ],
            dump_sequences: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoisyGateConfig {
    /// Largest excursion of the random-walk gradient at each sweep point.
    pub grad_max: Vec<Gradient>,
    /// Independent waveforms averaged per point.
    pub realizations: usize,
    /// Random-walk step, us.
    pub step_us: f64,
}

impl Default for NoisyGateConfig {
    fn default() -> Self {
        Self {
            grad_max: [0.0, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0]
                .into_iter()
                .map(|v| Gradient::new(v, GradientUnit::KilohertzPerCm))
                .collect(),
            realizations: 3,
            step_us: dfsq_core::ensemble::RANDOM_WALK_STEP * 1e6,
        }
    }
}

/// Full configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional guard: when set it must match the subcommand.
    pub experiment: Option<Experiment>,
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    pub spin_system: SpinSystem,
    pub ensemble: EnsembleConfig,
    pub memory: MemoryConfig,
    pub crusher: CrusherConfig,
    pub natural: NaturalConfig,
    pub gates: GatesConfig,
    pub noisy_gate: NoisyGateConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            seed: None,
            out_dir: PathBuf::from("out"),
            spin_system: SpinSystem::default(),
            ensemble: EnsembleConfig::default(),
            memory: MemoryConfig::default(),
            crusher: CrusherConfig::default(),
            natural: NaturalConfig::default(),
            gates: GatesConfig::default(),
            noisy_gate: NoisyGateConfig::default(),
        }
    }
}

fn field_error(field: &str, message: impl fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {message}"))
}

fn require_positive(field: &str, value: f64) -> Result<(), CliError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(field_error(field, format!("must be positive and finite, got {value}")))
    }
}

fn require_non_empty<T>(field: &str, items: &[T]) -> Result<(), CliError> {
    if items.is_empty() {
        Err(field_error(field, "sweep must not be empty"))
    } else {
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Checks the parts of the configuration used by `experiment`.
    pub fn validate(&self, experiment: Experiment) -> Result<(), CliError> {
        if let Some(declared) = self.experiment {
            if declared != experiment {
                return Err(field_error(
                    "experiment",
                    format!("config is for `{declared}` but `{experiment}` was requested"),
                ));
            }
        }
        self.spin_system
            .validate()
            .map_err(|e| field_error("spin_system", e))?;
        if experiment.needs_seed() && self.seed.is_none() {
            return Err(field_error("seed", format!("`{experiment}` needs an explicit seed")));
        }
        match experiment {
            Experiment::Memory => {
                self.validate_ensemble()?;
                let m = &self.memory;
                require_non_empty("memory.gradients", &m.gradients)?;
                require_non_empty("memory.t_ev_ms", &m.t_ev_ms)?;
                require_positive("memory.delta_us", m.delta_us)?;
                for (i, &t) in m.t_ev_ms.iter().enumerate() {
                    require_positive(&format!("memory.t_ev_ms[{i}]"), t)?;
                    if t * 1e3 < 2.0 * m.delta_us {
                        return Err(field_error(
                            &format!("memory.t_ev_ms[{i}]"),
                            "storage time must cover both gradient pulses",
                        ));
                    }
                }
            }
            Experiment::Crusher => {
                self.validate_ensemble()?;
                require_positive("crusher.delta_us", self.crusher.delta_us)?;
            }
            Experiment::Natural => {
                let n = &self.natural;
                require_non_empty("natural.f_collective", &n.f_collective)?;
                for (i, &f) in n.f_collective.iter().enumerate() {
                    if !(0.0..=1.0).contains(&f) {
                        return Err(field_error(
                            &format!("natural.f_collective[{i}]"),
                            format!("must lie in [0, 1], got {f}"),
                        ));
                    }
                }
                require_positive("natural.dt_s", n.dt_s)?;
                require_positive("natural.t_step_s", n.t_step_s)?;
                if !(n.t_max_s >= 0.0 && n.t_max_s.is_finite()) {
                    return Err(field_error("natural.t_max_s", "must be finite and non-negative"));
                }
                let ratio = n.t_step_s / n.dt_s;
                if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
                    return Err(field_error("natural.t_step_s", "must be a whole multiple of dt_s"));
                }
            }
            Experiment::Gates => {
                require_non_empty("gates.gates", &self.gates.gates)?;
                for (i, g) in self.gates.gates.iter().enumerate() {
                    g.sequence_kind()
                        .map_err(|e| field_error(&format!("gates.gates[{i}].kind"), e))?;
                    if !(0.0..360.0).contains(&g.theta_deg) {
                        return Err(field_error(
                            &format!("gates.gates[{i}].theta_deg"),
                            "must lie in [0, 360)",
                        ));
                    }
                }
            }
            Experiment::NoisyGate => {
                self.validate_ensemble()?;
                require_non_empty("noisy_gate.grad_max", &self.noisy_gate.grad_max)?;
                if self.noisy_gate.realizations == 0 {
                    return Err(field_error("noisy_gate.realizations", "must be at least 1"));
                }
                require_positive("noisy_gate.step_us", self.noisy_gate.step_us)?;
            }
        }
        Ok(())
    }

    fn validate_ensemble(&self) -> Result<(), CliError> {
        self.ensemble
            .spec(0.0, 0)
            .validate()
            .map_err(|e| field_error("ensemble", e))
    }
}

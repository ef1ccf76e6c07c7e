//! Writing experiment artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Experiment, ExperimentConfig};
use crate::error::CliError;
use crate::experiments::ExperimentOutput;

#[derive(Serialize)]
struct JsonReport<'a> {
    experiment: Experiment,
    seed: Option<u64>,
    n_members: Option<usize>,
    #[serde(flatten)]
    output: &'a ExperimentOutput,
}

/// JSON document for a finished run.
pub fn json_report(experiment: Experiment, cfg: &ExperimentConfig, output: &ExperimentOutput) -> String {
    let uses_ensemble = !matches!(experiment, Experiment::Natural | Experiment::Gates);
    let doc = JsonReport {
        experiment,
        seed: cfg.seed,
        n_members: uses_ensemble.then_some(cfg.ensemble.n_members),
        output,
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("reports serialize");
    text.push('\n');
    text
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf, CliError> {
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// Writes `<experiment>.csv`, `<experiment>.json` and any attachments into
/// `dir`, returning the paths in write order.
pub fn write_outputs(
    dir: &Path,
    experiment: Experiment,
    cfg: &ExperimentConfig,
    output: &ExperimentOutput,
) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut written = vec![
        write(dir.join(format!("{}.csv", experiment.name())), &output.csv)?,
        write(
            dir.join(format!("{}.json", experiment.name())),
            &json_report(experiment, cfg, output),
        )?,
    ];
    for (name, contents) in &output.attachments {
        written.push(write(dir.join(name), contents)?);
    }
    Ok(written)
}

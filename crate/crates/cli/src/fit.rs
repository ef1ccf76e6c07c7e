//! Least-squares fit of `y = A exp(-x / tau) + 0.5`.

use dfsq_core::optimize::golden_section;
use serde::Serialize;

use crate::error::CliError;

/// Baseline the fidelity decays toward for a fully dephased qubit.
pub const DECAY_FLOOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub amplitude: f64,
    /// Decay time in the units of `x`; infinite when no decay is found.
    pub tau: f64,
    /// Root-mean-square residual.
    pub rms_residual: f64,
    pub no_decay: bool,
}

/// Best amplitude for a fixed rate and its sum of squared residuals.
fn amplitude_for_rate(x: &[f64], y: &[f64], rate: f64) -> (f64, f64) {
    let basis: Vec<f64> = x.iter().map(|&xi| (-rate * xi).exp()).collect();
    let bb: f64 = basis.iter().map(|b| b * b).sum();
    let by: f64 = basis.iter().zip(y).map(|(b, yi)| b * (yi - DECAY_FLOOR)).sum();
    let a = if bb > 0.0 { by / bb } else { 0.0 };
    let sse = basis
        .iter()
        .zip(y)
        .map(|(b, yi)| (yi - DECAY_FLOOR - a * b).powi(2))
        .sum();
    (a, sse)
}

/// Fits the curve; the amplitude is solved linearly for each trial rate and
/// the rate is found by a log-spaced scan refined with golden-section search.
pub fn fit_decay(x: &[f64], y: &[f64]) -> Result<DecayFit, CliError> {
    if x.len() != y.len() {
        return Err(CliError::Fit(format!("{} x values but {} y values", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(CliError::Fit(format!("need at least 3 points, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(CliError::Fit("non-finite data".into()));
    }
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    if span <= 0.0 {
        return Err(CliError::Fit("all x values coincide".into()));
    }
    let rms = |sse: f64| (sse / x.len() as f64).sqrt();

    // constant model: zero rate
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let flat_sse: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let scale = y.iter().map(|v| (v - DECAY_FLOOR).powi(2)).sum::<f64>().max(1e-300);
    if flat_sse <= 1e-24 * scale.max(1.0) {
        return Ok(DecayFit {
            amplitude: mean - DECAY_FLOOR,
            tau: f64::INFINITY,
            rms_residual: rms(flat_sse),
            no_decay: true,
        });
    }

    // rates from 1e-6 to 1e4 decays over the sampled span
    let log_lo = (1e-6 / span).ln();
    let log_hi = (1e4 / span).ln();
    let sse_at = |log_rate: f64| amplitude_for_rate(x, y, log_rate.exp()).1;
    let n_grid = 400;
    let grid: Vec<f64> = (0..=n_grid)
        .map(|i| log_lo + (log_hi - log_lo) * i as f64 / n_grid as f64)
        .collect();
    let best = (0..grid.len())
        .min_by(|&i, &j| sse_at(grid[i]).total_cmp(&sse_at(grid[j])))
        .expect("non-empty grid");
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(n_grid)];
    let log_rate = golden_section(sse_at, a, b, 1e-13);
    let rate = log_rate.exp();
    let (amplitude, sse) = amplitude_for_rate(x, y, rate);
    let no_decay = best == 0 || amplitude.abs() < 1e-12;
    Ok(DecayFit {
        amplitude,
        tau: if no_decay { f64::INFINITY } else { 1.0 / rate },
        rms_residual: rms(sse),
        no_decay,
    })
}

//! Synchronization measures and steady-state diagnostics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::Trajectory;
use crate::model::{CovarianceState, MeanState, BLOCK};

/// Values of `S_c` above this are reported as complete synchronization.
pub const SYNC_C_CAP: f64 = 1e12;

/// Denominators of `S_q` at or below this are treated as degenerate.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-12;

/// Default trailing fraction of a trajectory treated as steady state.
pub const DEFAULT_WINDOW: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum MeasureError {
    #[error("degenerate covariance: quantum error signal variance {0:e}")]
    DegenerateCovariance(f64),
    #[error("window fraction {0} must lie in (0, 1]")]
    InvalidWindow(f64),
    #[error("empty window")]
    EmptyWindow,
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("series too short: {0} dominant periods, need at least 4")]
    TooShort(usize),
}

/// Quantum synchronization `S_q = ⟨δq₋² + δp₋²⟩⁻¹` with
/// `δq₋ = (δq₁ − δq₂)/√2`, `δp₋ = (δp₁ − δp₂)/√2`, which expands to
/// `2 / (V₁₁ + V₂₂ + V₅₅ + V₆₆ − V₁₅ − V₅₁ − V₂₆ − V₆₂)` (1-based).
///
/// The vacuum `½·I` gives exactly 1.
pub fn sync_q_instant(v: &CovarianceState) -> Result<f64, MeasureError> {
    let v = &v.0;
    let (q1, p1, q2, p2) = (0, 1, BLOCK, BLOCK + 1);
    // grouped so that exchanging the subsystems leaves every rounding step unchanged
    let q_part = (v[(q1, q1)] + v[(q2, q2)]) - (v[(q1, q2)] + v[(q2, q1)]);
    let p_part = (v[(p1, p1)] + v[(p2, p2)]) - (v[(p1, p2)] + v[(p2, p1)]);
    let denom = q_part + p_part;
    if denom.is_nan() || denom <= DEGENERATE_DENOMINATOR {
        return Err(MeasureError::DegenerateCovariance(denom));
    }
    Ok(2.0 / denom)
}

/// Classical synchronization `1 / (q̄₋² + p̄₋²)`, capped at [`SYNC_C_CAP`].
pub fn sync_c_instant(mean: &MeanState) -> f64 {
    let dq = mean.q(0) - mean.q(1);
    let dp = mean.p(0) - mean.p(1);
    let err = 0.5 * (dq * dq + dp * dp);
    let s = 1.0 / err;
    if s > SYNC_C_CAP || s.is_nan() {
        SYNC_C_CAP
    } else {
        s
    }
}

pub fn is_complete(sync_c: f64) -> bool {
    sync_c >= SYNC_C_CAP
}

fn trailing_window(series: &[f64], window_fraction: f64) -> Result<&[f64], MeasureError> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(MeasureError::InvalidWindow(window_fraction));
    }
    if series.is_empty() {
        return Err(MeasureError::EmptyWindow);
    }
    let n = series.len();
    let count = ((window_fraction * n as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(&series[n - count.min(n)..])
}

/// Arithmetic mean over the trailing `window_fraction` of samples.
pub fn steady_average(series: &[f64], window_fraction: f64) -> Result<f64, MeasureError> {
    let w = trailing_window(series, window_fraction)?;
    Ok(w.iter().sum::<f64>() / w.len() as f64)
}

/// Half the peak-to-peak excursion over the trailing window.
pub fn limit_cycle_amplitude(series: &[f64], window_fraction: f64) -> Result<f64, MeasureError> {
    let w = trailing_window(series, window_fraction)?;
    let (lo, hi) = w
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    Ok(0.5 * (hi - lo))
}

/// Upward zero crossings of a mean-removed series, as fractional indices.
fn upward_crossings(x: &[f64]) -> Vec<f64> {
    x.windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] < 0.0 && w[1] >= 0.0)
        .map(|(i, w)| i as f64 + w[0] / (w[0] - w[1]))
        .collect()
}

/// Dominant period of `x` in samples, estimated from its upward zero
/// crossings, together with the number of whole periods observed.
pub fn dominant_period(x: &[f64]) -> Option<(f64, usize)> {
    let mean = x.iter().sum::<f64>() / x.len().max(1) as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c = upward_crossings(&centered);
    if c.len() < 2 {
        return None;
    }
    let periods = c.len() - 1;
    Some(((c[periods] - c[0]) / periods as f64, periods))
}

/// Lag `τ` maximizing the cross-correlation `Σ a(t) b(t + τ)` of the
/// mean-removed series, searched within ± half a dominant period of `a` (a
/// lag is only defined modulo the period). The sum runs over a whole number
/// of periods so that every lag sees the same terms.
///
/// Positive lag means `b` trails `a`. Needs at least four dominant periods.
pub fn phase_lag(a: &[f64], b: &[f64], sample_interval: f64) -> Result<f64, MeasureError> {
    if a.len() != b.len() {
        return Err(MeasureError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MeasureError::EmptyWindow);
    }
    let (period, periods) = dominant_period(a).ok_or(MeasureError::TooShort(0))?;
    if periods < 4 {
        return Err(MeasureError::TooShort(periods));
    }
    let center = |x: &[f64]| {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|v| v - m).collect::<Vec<f64>>()
    };
    let (a, b) = (center(a), center(b));
    let n = a.len();
    let max_lag = (0.5 * period).round() as usize;
    // a whole number of periods of `a`, with room for every lag on both sides
    let whole = ((n - 2 * max_lag) as f64 / period).floor();
    let len = (whole * period).round() as usize;

    let mut best = (f64::NEG_INFINITY, 0isize);
    for k in -(max_lag as isize)..=max_lag as isize {
        let c: f64 = (max_lag..max_lag + len)
            .map(|i| a[i] * b[(i as isize + k) as usize])
            .sum();
        if c > best.0 {
            best = (c, k);
        }
    }
    Ok(best.1 as f64 * sample_interval)
}

/// Steady-state summary of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyStats {
    pub sync_q_mean: f64,
    pub sync_c_mean: f64,
    pub amp_q1: f64,
    pub amp_q2: f64,
    pub amp_p1: f64,
    pub amp_p2: f64,
    /// Lag of `q̄₂` behind `q̄₁`; `None` when the window holds fewer than four
    /// oscillation periods.
    pub phase_lag: Option<f64>,
}

impl SteadyStats {
    pub fn from_trajectory(traj: &Trajectory, window_fraction: f64) -> Result<Self, MeasureError> {
        let q1 = traj.mean_component(0);
        let p1 = traj.mean_component(1);
        let q2 = traj.mean_component(BLOCK);
        let p2 = traj.mean_component(BLOCK + 1);
        let sample_interval = if traj.times.len() >= 2 {
            traj.times[1] - traj.times[0]
        } else {
            0.0
        };
        let lag = phase_lag(
            trailing_window(&q1, window_fraction)?,
            trailing_window(&q2, window_fraction)?,
            sample_interval,
        )
        .ok();
        Ok(Self {
            sync_q_mean: steady_average(&traj.sync_q, window_fraction)?,
            sync_c_mean: steady_average(&traj.sync_c, window_fraction)?,
            amp_q1: limit_cycle_amplitude(&q1, window_fraction)?,
            amp_q2: limit_cycle_amplitude(&q2, window_fraction)?,
            amp_p1: limit_cycle_amplitude(&p1, window_fraction)?,
            amp_p2: limit_cycle_amplitude(&p2, window_fraction)?,
            phase_lag: lag,
        })
    }

    /// Componentwise mean over several runs plus the sample standard
    /// deviation of `sync_q_mean`.
    pub fn average(stats: &[SteadyStats]) -> Option<(SteadyStats, f64)> {
        if stats.is_empty() {
            return None;
        }
        let n = stats.len() as f64;
        let avg = |f: fn(&SteadyStats) -> f64| stats.iter().map(f).sum::<f64>() / n;
        let lags: Option<Vec<f64>> = stats.iter().map(|s| s.phase_lag).collect();
        let mean = SteadyStats {
            sync_q_mean: avg(|s| s.sync_q_mean),
            sync_c_mean: avg(|s| s.sync_c_mean),
            amp_q1: avg(|s| s.amp_q1),
            amp_q2: avg(|s| s.amp_q2),
            amp_p1: avg(|s| s.amp_p1),
            amp_p2: avg(|s| s.amp_p2),
            phase_lag: lags.map(|l| l.iter().sum::<f64>() / n),
        };
        let spread = if stats.len() > 1 {
            let var = stats
                .iter()
                .map(|s| (s.sync_q_mean - mean.sync_q_mean).powi(2))
                .sum::<f64>()
                / (n - 1.0);
            var.sqrt()
        } else {
            0.0
        };
        Some((mean, spread))
    }
}

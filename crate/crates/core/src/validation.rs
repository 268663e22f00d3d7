//! Self-check suite behind the `validate` command.

use serde::{Deserialize, Serialize};

use crate::integrator::{solve, FnSystem, IntegratorConfig, Method};
use crate::measures::sync_q_instant;
use crate::model::CovarianceState;
use crate::oracle::{jacobian_check, mc_check, McConfig, FROZEN_OPERATING_POINT};
use crate::presets::preset;
use crate::sweep::{run_point, SweepGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// The measured error or statistic.
    pub measured: f64,
    /// Acceptance threshold; `None` for informational checks.
    pub tolerance: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationOptions {
    pub jacobian_states: usize,
    pub jacobian_seed: u64,
    pub monte_carlo: McConfig,
    pub workers: usize,
    /// Covariance seeds tried in the seed-sensitivity run.
    pub sensitivity_seeds: Vec<u64>,
    pub sensitivity_integrator: IntegratorConfig,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            jacobian_states: 100,
            jacobian_seed: 1,
            monte_carlo: McConfig::default(),
            workers: crate::parallel::default_workers(),
            sensitivity_seeds: vec![0, 1, 2],
            sensitivity_integrator: IntegratorConfig::default(),
        }
    }
}

pub fn check_jacobian(states: usize, seed: u64) -> Check {
    let r = jacobian_check(states, seed);
    Check {
        name: "jacobian".into(),
        passed: r.passed,
        measured: r.worst_ratio,
        tolerance: Some(1.0),
        detail: format!(
            "{} states, rtol {:e} atol {:e}; worst entry {:?} (|err| {:.3e}); {} entries out of tolerance",
            r.states, r.rtol, r.atol, r.worst_entry, r.worst_abs_error, r.failed_entries
        ),
    }
}

pub fn check_monte_carlo(cfg: &McConfig, workers: usize) -> Check {
    let params = preset("fig4").expect("fig4 preset").params;
    match mc_check(&params, &FROZEN_OPERATING_POINT, cfg, workers) {
        Ok(r) => Check {
            name: "monte_carlo".into(),
            passed: r.passed,
            measured: r.worst_ratio,
            tolerance: Some(1.0),
            detail: format!(
                "{} paths, dt {:e}, horizon {}; rtol {} floor {:e}; worst entry {:?} (|err| {:.3e}); {} entries out of tolerance",
                cfg.paths, cfg.dt, cfg.horizon, r.rtol, r.atol, r.worst_entry, r.worst_abs_error, r.failed_entries
            ),
        },
        Err(e) => Check {
            name: "monte_carlo".into(),
            passed: false,
            measured: f64::NAN,
            tolerance: Some(1.0),
            detail: e.to_string(),
        },
    }
}

pub fn check_vacuum() -> Check {
    let s = sync_q_instant(&CovarianceState::vacuum()).unwrap_or(f64::NAN);
    Check {
        name: "vacuum_sq".into(),
        passed: s == 1.0,
        measured: s,
        tolerance: Some(0.0),
        detail: "S_q of the vacuum covariance, must be exactly 1".into(),
    }
}

/// Global error of RK4 on `ẏ = −y` at `t = 1`.
pub fn rk4_decay_error(dt: f64) -> f64 {
    let sys = FnSystem::new(1, |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0]);
    let cfg = IntegratorConfig {
        method: Method::Rk4,
        dt,
        t_end: 1.0,
        sample_interval: 1.0,
        ..Default::default()
    };
    let mut last = f64::NAN;
    let _ = solve(&sys, &[1.0], &cfg, dt, |_, y| last = y[0]);
    (last - (-1.0f64).exp()).abs()
}

pub fn check_rk4_order() -> Check {
    let ratio = rk4_decay_error(0.1) / rk4_decay_error(0.05);
    Check {
        name: "rk4_order".into(),
        passed: (12.0..=20.0).contains(&ratio),
        measured: ratio,
        tolerance: None,
        detail: "error ratio under dt halving on y' = -y, must lie in [12, 20]".into(),
    }
}

/// Spread of the steady `S_q` of the fig4 trajectory over covariance seeds.
/// Informational: passes whenever every run converges.
pub fn check_seed_sensitivity(seeds: &[u64], integrator: &IntegratorConfig) -> Check {
    let p = preset("fig4").expect("fig4 preset");
    let mut grid = SweepGrid::new(p.params, p.axes);
    grid.integrator = *integrator;
    let values: Vec<Option<f64>> = seeds
        .iter()
        .map(|&s| run_point(&grid, &p.params, s).map(|st| st.sync_q_mean))
        .collect();
    let ok: Option<Vec<f64>> = values.iter().copied().collect();
    match ok {
        Some(v) if !v.is_empty() => {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Check {
                name: "seed_sensitivity".into(),
                passed: true,
                measured: hi - lo,
                tolerance: None,
                detail: format!("fig4 steady S_q over seeds {seeds:?}: {v:?}"),
            }
        }
        _ => Check {
            name: "seed_sensitivity".into(),
            passed: false,
            measured: f64::NAN,
            tolerance: None,
            detail: format!("fig4 run failed for some seed in {seeds:?}"),
        },
    }
}

pub fn run_validation(opts: &ValidationOptions) -> ValidationReport {
    let checks = vec![
        check_jacobian(opts.jacobian_states, opts.jacobian_seed),
        check_monte_carlo(&opts.monte_carlo, opts.workers),
        check_vacuum(),
        check_rk4_order(),
        check_seed_sensitivity(&opts.sensitivity_seeds, &opts.sensitivity_integrator),
    ];
    ValidationReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

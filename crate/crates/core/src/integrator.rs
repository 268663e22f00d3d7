//! Explicit Runge–Kutta integration with uniformly sampled output.
//!
//! Two methods are provided: classical fixed-step RK4 and the adaptive
//! Dormand–Prince 5(4) pair. Steps are always truncated so that every sample
//! time is hit exactly, which keeps sampled output free of interpolation
//! error.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    drift_matrix, lyapunov_rhs, mean_field_rhs, noise_matrix, pack_joint, unpack_joint,
    NoiseMatrix, JOINT_DIM,
};
use crate::measures::{sync_c_instant, sync_q_instant};
use crate::model::{CovarianceState, MeanState, ModelParams};

/// A first-order system `ẏ = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);

    /// Called on every accepted state; returns whether `y` was modified.
    fn project(&self, _y: &mut [f64]) -> bool {
        false
    }
}

/// Adapts a closure into an [`OdeSystem`].
pub struct FnSystem<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(f64, &[f64], &mut [f64])> FnSystem<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(f64, &[f64], &mut [f64])> OdeSystem for FnSystem<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        (self.f)(t, y, dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk4,
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{0} must be positive")]
    NotPositive(&'static str),
    #[error("sample_interval must be at least dt_min")]
    SampleBelowMinStep,
}

/// Integration settings. `dt` applies to RK4; the tolerance and step bounds
/// apply to the adaptive method. `dt_max = None` resolves to one hundredth
/// of the fastest modulation period (see [`ModelParams::fastest_period`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub method: Method,
    pub dt: f64,
    pub rtol: f64,
    pub atol: f64,
    pub dt_min: f64,
    pub dt_max: Option<f64>,
    pub t_end: f64,
    pub sample_interval: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Adaptive,
            dt: 0.01,
            rtol: 1e-8,
            atol: 1e-10,
            dt_min: 1e-12,
            dt_max: None,
            t_end: 3000.0,
            sample_interval: 0.1,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("dt", self.dt),
            ("rtol", self.rtol),
            ("atol", self.atol),
            ("dt_min", self.dt_min),
            ("t_end", self.t_end),
            ("sample_interval", self.sample_interval),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::NotPositive(name));
            }
        }
        if let Some(h) = self.dt_max {
            if !(h > 0.0 && h.is_finite()) {
                return Err(ConfigError::NotPositive("dt_max"));
            }
        }
        if self.sample_interval < self.dt_min {
            return Err(ConfigError::SampleBelowMinStep);
        }
        Ok(())
    }

    pub fn effective_dt_max(&self, params: &ModelParams) -> f64 {
        self.dt_max.unwrap_or(0.01 * params.fastest_period())
    }

    /// Sample times `0, s, 2s, …` up to `t_end`, with `t_end` appended when it
    /// is not itself a multiple of the interval.
    pub fn sample_times(&self) -> Vec<f64> {
        let n = (self.t_end / self.sample_interval + 1e-9).floor() as usize;
        let mut times: Vec<f64> = (0..=n).map(|k| k as f64 * self.sample_interval).collect();
        let last = times[n];
        if self.t_end - last > 1e-9 * self.sample_interval {
            times.push(self.t_end);
        }
        times
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum SolveError {
    #[error("state became non-finite at t = {time}")]
    Diverged { time: f64 },
    #[error("step size {step:e} fell below dt_min at t = {time}")]
    StepUnderflow { time: f64, step: f64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// One classical RK4 step of length `dt` from `(t, y)`.
pub fn rk4_step<S: OdeSystem>(sys: &S, t: f64, y: &[f64], dt: f64) -> Vec<f64> {
    let mut ws = Rk4Workspace::new(sys.dim());
    let mut out = y.to_vec();
    ws.step(sys, t, &mut out, dt);
    out
}

struct Rk4Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Workspace {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    fn step<S: OdeSystem>(&mut self, sys: &S, t: f64, y: &mut [f64], h: f64) {
        let half = 0.5 * h;
        sys.rhs(t, y, &mut self.k1);
        axpy(&mut self.tmp, y, half, &self.k1);
        sys.rhs(t + half, &self.tmp, &mut self.k2);
        axpy(&mut self.tmp, y, half, &self.k2);
        sys.rhs(t + half, &self.tmp, &mut self.k3);
        axpy(&mut self.tmp, y, h, &self.k3);
        sys.rhs(t + h, &self.tmp, &mut self.k4);
        let w = h / 6.0;
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += w * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

#[inline]
fn axpy(out: &mut [f64], y: &[f64], h: f64, k: &[f64]) {
    for ((o, &yi), &ki) in out.iter_mut().zip(y).zip(k) {
        *o = yi + h * ki;
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct DopriWorkspace {
    k: [Vec<f64>; 7],
    stage: Vec<f64>,
    y_new: Vec<f64>,
    fsal_valid: bool,
}

impl DopriWorkspace {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            stage: vec![0.0; n],
            y_new: vec![0.0; n],
            fsal_valid: false,
        }
    }

    /// Attempts one step; on success `y_new` holds the fifth-order solution.
    /// Returns the scaled RMS error estimate.
    #[allow(clippy::too_many_arguments, clippy::needless_range_loop)]
    fn attempt<S: OdeSystem>(
        &mut self,
        sys: &S,
        t: f64,
        y: &[f64],
        h: f64,
        rtol: f64,
        atol: f64,
        stats: &mut SolveStats,
    ) -> f64 {
        let n = y.len();
        if !self.fsal_valid {
            sys.rhs(t, y, &mut self.k[0]);
            stats.rhs_evals += 1;
            self.fsal_valid = true;
        }
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, a) in A[s].iter().enumerate().take(s) {
                    acc += a * self.k[j][i];
                }
                self.stage[i] = y[i] + h * acc;
            }
            let (_, rest) = self.k.split_at_mut(s);
            sys.rhs(t + C[s] * h, &self.stage, &mut rest[0]);
            stats.rhs_evals += 1;
        }
        // stage 7 is evaluated at the fifth-order solution (FSAL)
        self.y_new.copy_from_slice(&self.stage);

        let mut sum = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (j, ej) in E.iter().enumerate() {
                e += ej * self.k[j][i];
            }
            let sc = atol + rtol * y[i].abs().max(self.y_new[i].abs());
            let r = h * e / sc;
            sum += r * r;
        }
        (sum / n as f64).sqrt()
    }
}

/// Integrates `sys` from `t = 0` and calls `observer(t, y)` at every sample
/// time of `cfg`, starting with the initial state.
pub fn solve<S, O>(
    sys: &S,
    y0: &[f64],
    cfg: &IntegratorConfig,
    dt_max: f64,
    mut observer: O,
) -> Result<SolveStats, SolveError>
where
    S: OdeSystem,
    O: FnMut(f64, &[f64]),
{
    let n = sys.dim();
    assert_eq!(y0.len(), n, "initial state has wrong dimension");
    let mut y = y0.to_vec();
    sys.project(&mut y);
    if !y.iter().all(|v| v.is_finite()) {
        return Err(SolveError::Diverged { time: 0.0 });
    }
    let times = cfg.sample_times();
    observer(times[0], &y);

    let mut stats = SolveStats::default();
    match cfg.method {
        Method::Rk4 => {
            let mut ws = Rk4Workspace::new(n);
            for w in times.windows(2) {
                let (t0, t1) = (w[0], w[1]);
                let span = t1 - t0;
                let substeps = ((span / cfg.dt) - 1e-9).ceil().max(1.0) as usize;
                let h = span / substeps as f64;
                for k in 0..substeps {
                    let t = t0 + k as f64 * h;
                    ws.step(sys, t, &mut y, h);
                    stats.rhs_evals += 4;
                    stats.accepted += 1;
                    sys.project(&mut y);
                    if !y.iter().all(|v| v.is_finite()) {
                        return Err(SolveError::Diverged { time: t + h });
                    }
                }
                observer(t1, &y);
            }
        }
        Method::Adaptive => {
            let mut ws = DopriWorkspace::new(n);
            let mut h = initial_step(sys, &y, cfg, dt_max, &mut stats);
            let mut t = 0.0;
            for &target in &times[1..] {
                while t < target {
                    let remaining = target - t;
                    let clamped = h >= remaining;
                    let step = if clamped { remaining } else { h };
                    let err = ws.attempt(sys, t, &y, step, cfg.rtol, cfg.atol, &mut stats);
                    if err.is_nan() || !ws.y_new.iter().all(|v| v.is_finite()) {
                        return Err(SolveError::Diverged { time: t });
                    }
                    if err <= 1.0 {
                        t = if clamped { target } else { t + step };
                        std::mem::swap(&mut y, &mut ws.y_new);
                        ws.k.swap(0, 6);
                        if sys.project(&mut y) {
                            ws.fsal_valid = false;
                        }
                        stats.accepted += 1;
                        let factor = if err == 0.0 {
                            5.0
                        } else {
                            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                        };
                        // a step shortened to land on a sample does not shrink the proposal
                        h = if clamped { h.max(step * factor) } else { step * factor };
                        h = h.min(dt_max);
                    } else {
                        stats.rejected += 1;
                        h = step * (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                    }
                    if h < cfg.dt_min {
                        return Err(SolveError::StepUnderflow { time: t, step: h });
                    }
                }
                observer(target, &y);
            }
        }
    }
    Ok(stats)
}

fn initial_step<S: OdeSystem>(
    sys: &S,
    y: &[f64],
    cfg: &IntegratorConfig,
    dt_max: f64,
    stats: &mut SolveStats,
) -> f64 {
    let mut f0 = vec![0.0; y.len()];
    sys.rhs(0.0, y, &mut f0);
    stats.rhs_evals += 1;
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for (yi, fi) in y.iter().zip(&f0) {
        let sc = cfg.atol + cfg.rtol * yi.abs();
        d0 += (yi / sc).powi(2);
        d1 += (fi / sc).powi(2);
    }
    let h = if d0 < 1e-10 || d1 < 1e-10 {
        1e-6
    } else {
        0.01 * (d0 / d1).sqrt()
    };
    h.min(dt_max).max(cfg.dt_min)
}

/// The joint mean + covariance system for a fixed parameter set.
pub struct ModelSystem {
    params: ModelParams,
    noise: NoiseMatrix,
}

impl ModelSystem {
    pub fn new(params: ModelParams) -> Self {
        Self {
            noise: noise_matrix(&params),
            params,
        }
    }
}

impl OdeSystem for ModelSystem {
    fn dim(&self) -> usize {
        JOINT_DIM
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let (mean, v) = unpack_joint(y);
        let dmean = mean_field_rhs(&mean, &self.params, t);
        let m = drift_matrix(&mean, &self.params, t);
        let dv = lyapunov_rhs(&v, &m, &self.noise);
        pack_joint(&dmean, &dv, dy);
    }

    fn project(&self, y: &mut [f64]) -> bool {
        let mut changed = false;
        for i in 0..8 {
            for j in (i + 1)..8 {
                let (a, b) = (y[8 + 8 * i + j], y[8 + 8 * j + i]);
                if a != b {
                    let m = 0.5 * (a + b);
                    y[8 + 8 * i + j] = m;
                    y[8 + 8 * j + i] = m;
                    changed = true;
                }
            }
        }
        changed
    }
}

/// Time-ordered samples of the joint state and the instantaneous measures.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub means: Vec<MeanState>,
    pub covariances: Vec<CovarianceState>,
    /// `S_q` per sample; NaN where the covariance is degenerate.
    pub sync_q: Vec<f64>,
    pub sync_c: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Series of one mean-state component (0..8).
    pub fn mean_component(&self, idx: usize) -> Vec<f64> {
        self.means.iter().map(|m| m.0[idx]).collect()
    }

    fn push(&mut self, t: f64, y: &[f64]) {
        let (mean, v) = unpack_joint(y);
        self.times.push(t);
        self.sync_q.push(sync_q_instant(&v).unwrap_or(f64::NAN));
        self.sync_c.push(sync_c_instant(&mean));
        self.means.push(mean);
        self.covariances.push(v);
    }
}

#[derive(Debug, Clone, Error)]
#[error("{kind}")]
pub struct IntegrationError {
    pub kind: SolveError,
    /// Samples recorded before the failure.
    pub partial: Box<Trajectory>,
}

/// Integrates the mean-field and Lyapunov equations together from `t = 0`.
pub fn integrate(
    mean0: &MeanState,
    v0: &CovarianceState,
    params: &ModelParams,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, IntegrationError> {
    let sys = ModelSystem::new(*params);
    let mut y0 = [0.0; JOINT_DIM];
    pack_joint(mean0, &v0.0, &mut y0);
    let mut traj = Trajectory::default();
    let dt_max = cfg.effective_dt_max(params);
    match solve(&sys, &y0, cfg, dt_max, |t, y| traj.push(t, y)) {
        Ok(_) => Ok(traj),
        Err(kind) => Err(IntegrationError {
            kind,
            partial: Box::new(traj),
        }),
    }
}

//! Brute-force validators for the linearization and the covariance
//! propagation.
//!
//! [`jacobian_check`] compares [`drift_matrix`] with central finite
//! differences of [`mean_field_rhs`]. [`mc_covariance`] estimates the
//! fluctuation covariance by simulating `du = M u dt + B dW` path by path
//! and is compared with [`lyapunov_reference`].

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;
use thiserror::Error;

use crate::dynamics::{drift_matrix, lyapunov_rhs, mean_field_rhs, noise_matrix, DriftMatrix};
use crate::model::{CovarianceState, Matrix8, MeanState, ModelParams, BLOCK};
use crate::parallel::map_ordered;

/// `|a − b| ≤ max(rtol·|reference|, atol)`.
pub fn within(value: f64, reference: f64, rtol: f64, atol: f64) -> bool {
    (value - reference).abs() <= (rtol * reference.abs()).max(atol)
}

/// Central-difference Jacobian with one step size for every coordinate.
pub fn fd_jacobian<F>(rhs: F, x: &[f64], eps: f64) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    fd_jacobian_with(rhs, x, |_| eps)
}

/// Central-difference Jacobian with step `10⁻⁵·max(1, |x_j|)` per coordinate.
pub fn fd_jacobian_scaled<F>(rhs: F, x: &[f64]) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    fd_jacobian_with(rhs, x, |xj| 1e-5 * xj.abs().max(1.0))
}

fn fd_jacobian_with<F, E>(rhs: F, x: &[f64], eps: E) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
    E: Fn(f64) -> f64,
{
    let n = x.len();
    let m = rhs(x).len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    for j in 0..n {
        let h = eps(x[j]);
        xp[j] = x[j] + h;
        xm[j] = x[j] - h;
        let fp = rhs(&xp);
        let fm = rhs(&xm);
        // divide by the realized step, not the nominal one
        let width = xp[j] - xm[j];
        for i in 0..m {
            jac[(i, j)] = (fp[i] - fm[i]) / width;
        }
        xp[j] = x[j];
        xm[j] = x[j];
    }
    jac
}

/// Seeded parameter set with every coupling, nonlinearity and modulation
/// switched on.
pub fn random_params(rng: &mut ChaCha8Rng) -> ModelParams {
    let mut pair = |lo: f64, hi: f64| [rng.random_range(lo..hi), rng.random_range(lo..hi)];
    let omega = pair(0.5, 1.5);
    let delta = pair(0.5, 1.5);
    let chi = pair(1e-4, 1e-3);
    let g = pair(1e-3, 1e-2);
    ModelParams {
        omega,
        delta,
        chi,
        g,
        kappa: rng.random_range(0.05..0.3),
        gamma: rng.random_range(1e-3..1e-2),
        drive_e: rng.random_range(10.0..200.0),
        eta_c: rng.random_range(0.1..1.0),
        omega_c: rng.random_range(0.1..3.0),
        eta_d: rng.random_range(0.1..1.0),
        omega_d: rng.random_range(0.1..3.0),
        mu: rng.random_range(1e-3..0.05),
        lambda: rng.random_range(1e-3..0.05),
        n_b: rng.random_range(0.0..1.0),
    }
}

/// Seeded mean state with `q, p ∈ [−5, 5]` and `Re α, Im α ∈ [−50, 50]`.
pub fn random_mean_state(rng: &mut ChaCha8Rng) -> MeanState {
    let mut s = [0.0; 8];
    for (i, v) in s.iter_mut().enumerate() {
        let r = if i % BLOCK < 2 { 5.0 } else { 50.0 };
        *v = rng.random_range(-r..r);
    }
    MeanState(s)
}

/// Drift matrix implementation under test.
pub type DriftFn = fn(&MeanState, &ModelParams, f64) -> DriftMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianReport {
    pub states: usize,
    pub rtol: f64,
    pub atol: f64,
    /// Largest `|M − J| / max(rtol·|M|, atol)` over all entries; ≤ 1 passes.
    pub worst_ratio: f64,
    pub worst_abs_error: f64,
    /// `(state index, row, column)` of the worst entry.
    pub worst_entry: (usize, usize, usize),
    pub failed_entries: usize,
    pub passed: bool,
}

/// Finite-difference Jacobian of the mean-field equations, expressed in the
/// fluctuation quadratures `δx = √2 δRe α`, `δy = √2 δIm α`.
pub fn fd_drift_matrix(state: &MeanState, params: &ModelParams, t: f64) -> Matrix8 {
    let rhs = |x: &[f64]| {
        let mut s = [0.0; 8];
        s.copy_from_slice(x);
        mean_field_rhs(&MeanState(s), params, t).0.to_vec()
    };
    let j = fd_jacobian_scaled(rhs, &state.0);
    let scale = |i: usize| if i % BLOCK < 2 { 1.0 } else { SQRT_2 };
    Matrix8::from_fn(|r, c| j[(r, c)] * scale(r) / scale(c))
}

/// Compares `drift` with [`fd_drift_matrix`] at `n_states` seeded random
/// states and parameter sets.
pub fn jacobian_check_with(drift: DriftFn, n_states: usize, seed: u64, rtol: f64, atol: f64) -> JacobianReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = JacobianReport {
        states: n_states,
        rtol,
        atol,
        worst_ratio: 0.0,
        worst_abs_error: 0.0,
        worst_entry: (0, 0, 0),
        failed_entries: 0,
        passed: true,
    };
    for k in 0..n_states {
        let params = random_params(&mut rng);
        let state = random_mean_state(&mut rng);
        let t = rng.random_range(0.0..10.0);
        let analytic = drift(&state, &params, t).0;
        let numeric = fd_drift_matrix(&state, &params, t);
        for r in 0..8 {
            for c in 0..8 {
                let (a, n) = (analytic[(r, c)], numeric[(r, c)]);
                let err = (a - n).abs();
                let ratio = err / (rtol * a.abs()).max(atol);
                if !within(n, a, rtol, atol) {
                    report.failed_entries += 1;
                }
                report.worst_abs_error = report.worst_abs_error.max(err);
                if ratio.is_nan() || ratio > report.worst_ratio {
                    report.worst_ratio = ratio;
                    report.worst_entry = (k, r, c);
                }
            }
        }
    }
    report.passed = report.failed_entries == 0 && report.worst_ratio.is_finite();
    report
}

pub fn jacobian_check(n_states: usize, seed: u64) -> JacobianReport {
    jacobian_check_with(drift_matrix, n_states, seed, 1e-6, 1e-9)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error("trajectory count must be at least 1")]
    NoPaths,
    #[error("step size must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("horizon must be non-negative and finite, got {0}")]
    BadHorizon(f64),
    #[error("drift is {0}x{1} but noise has {2} entries")]
    Shape(usize, usize, usize),
    #[error("negative noise intensity {0}")]
    NegativeNoise(f64),
    #[error("path {path} exceeded the overflow guard at step {step}; the drift is unstable")]
    Unstable { path: usize, step: usize },
}

/// Monte Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub paths: usize,
    /// Euler–Maruyama step.
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            paths: 100_000,
            dt: 5e-4,
            horizon: 0.5,
            seed: 2024,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<(), McError> {
        if self.paths == 0 {
            return Err(McError::NoPaths);
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(McError::BadStep(self.dt));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(McError::BadHorizon(self.horizon));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

/// Any path component above this is treated as a blow-up.
pub const OVERFLOW_GUARD: f64 = 1e100;

/// Paths per reduction block. Fixed so the summation order does not depend
/// on the worker count.
const BLOCK_PATHS: usize = 1024;

struct Moments {
    sum: Vec<f64>,
    outer: DMatrix<f64>,
}

/// Sample covariance at `cfg.horizon` of `du = M u dt + diag(√N) dW`,
/// `u(0) = 0`, from `cfg.paths` Euler–Maruyama paths.
///
/// Path `k` draws from its own ChaCha stream `k` under `cfg.seed`, so the
/// estimate is identical for every `workers`.
pub fn simulate_linear_sde(
    drift: &DMatrix<f64>,
    noise_diag: &[f64],
    cfg: &McConfig,
    workers: usize,
) -> Result<DMatrix<f64>, McError> {
    cfg.validate()?;
    let n = noise_diag.len();
    if drift.nrows() != n || drift.ncols() != n {
        return Err(McError::Shape(drift.nrows(), drift.ncols(), n));
    }
    if let Some(&bad) = noise_diag.iter().find(|&&x| x.is_nan() || x < 0.0) {
        return Err(McError::NegativeNoise(bad));
    }
    let steps = cfg.steps();
    let h = if steps == 0 { 0.0 } else { cfg.horizon / steps as f64 };
    let b: Vec<f64> = noise_diag.iter().map(|x| (x * h).sqrt()).collect();

    let blocks: Vec<(usize, usize)> = (0..cfg.paths)
        .step_by(BLOCK_PATHS)
        .map(|s| (s, (s + BLOCK_PATHS).min(cfg.paths)))
        .collect();

    let run_block = |&(start, end): &(usize, usize)| -> Result<Moments, McError> {
        let mut m = Moments {
            sum: vec![0.0; n],
            outer: DMatrix::zeros(n, n),
        };
        let mut u = vec![0.0; n];
        let mut du = vec![0.0; n];
        for path in start..end {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(path as u64);
            u.fill(0.0);
            for step in 0..steps {
                for i in 0..n {
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += drift[(i, j)] * u[j];
                    }
                    du[i] = acc * h;
                }
                for i in 0..n {
                    let z: f64 = rng.sample(StandardNormal);
                    u[i] += du[i] + b[i] * z;
                }
                if !u.iter().all(|x| x.abs() < OVERFLOW_GUARD) {
                    return Err(McError::Unstable { path, step });
                }
            }
            for i in 0..n {
                m.sum[i] += u[i];
                for j in 0..=i {
                    m.outer[(i, j)] += u[i] * u[j];
                }
            }
        }
        Ok(m)
    };

    let mut sum = vec![0.0; n];
    let mut outer = DMatrix::zeros(n, n);
    for block in map_ordered(&blocks, workers, run_block) {
        let block = block?;
        for (s, b) in sum.iter_mut().zip(&block.sum) {
            *s += b;
        }
        outer += block.outer;
    }

    let count = cfg.paths as f64;
    let denom = if cfg.paths > 1 { count - 1.0 } else { 1.0 };
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let c = (outer[(i, j)] - sum[i] * sum[j] / count) / denom;
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }
    Ok(cov)
}

/// Monte Carlo covariance of the model's fluctuations with the drift frozen
/// at `frozen` (and `t = 0`).
pub fn mc_covariance(
    params: &ModelParams,
    frozen: &MeanState,
    cfg: &McConfig,
    workers: usize,
) -> Result<CovarianceState, McError> {
    let m = drift_matrix(frozen, params, 0.0).0;
    let drift = DMatrix::from_fn(8, 8, |i, j| m[(i, j)]);
    let noise = noise_matrix(params).0;
    let cov = simulate_linear_sde(&drift, &noise, cfg, workers)?;
    Ok(CovarianceState(Matrix8::from_fn(|i, j| cov[(i, j)])))
}

/// `V(horizon)` of `V̇ = MV + VMᵀ + N` from `V(0) = 0` with `M` frozen at
/// `frozen`, by fixed-step RK4.
pub fn lyapunov_reference(params: &ModelParams, frozen: &MeanState, horizon: f64, dt: f64) -> CovarianceState {
    let m = drift_matrix(frozen, params, 0.0);
    let noise = noise_matrix(params);
    let steps = (horizon / dt - 1e-9).ceil().max(0.0) as usize;
    let h = if steps == 0 { 0.0 } else { horizon / steps as f64 };
    let f = |v: &Matrix8| lyapunov_rhs(&CovarianceState(*v), &m, &noise);
    let mut v = Matrix8::zeros();
    for _ in 0..steps {
        let k1 = f(&v);
        let k2 = f(&(v + k1 * (0.5 * h)));
        let k3 = f(&(v + k2 * (0.5 * h)));
        let k4 = f(&(v + k3 * h));
        v += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    let mut v = CovarianceState(v);
    v.symmetrize();
    v
}

/// Time-averaged steady mean state of the fig4 configuration, used as the
/// frozen operating point for the Monte Carlo check. The drift matrix there
/// has all eigenvalues in the left half-plane.
pub const FROZEN_OPERATING_POINT: MeanState = MeanState([
    98.97272965,
    -291.34716091,
    7.04700998,
    31.9562009,
    79.10951944,
    -238.56521689,
    6.69310102,
    32.09661499,
]);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub config: McConfig,
    pub rtol: f64,
    pub atol: f64,
    pub worst_ratio: f64,
    pub worst_abs_error: f64,
    pub worst_entry: (usize, usize),
    pub failed_entries: usize,
    pub passed: bool,
}

/// Entry-wise comparison of [`mc_covariance`] with [`lyapunov_reference`].
pub fn mc_check(
    params: &ModelParams,
    frozen: &MeanState,
    cfg: &McConfig,
    workers: usize,
) -> Result<McReport, McError> {
    let (rtol, atol) = (0.05, 1e-3);
    let mc = mc_covariance(params, frozen, cfg, workers)?;
    let reference = lyapunov_reference(params, frozen, cfg.horizon, 1e-4);
    let mut report = McReport {
        config: *cfg,
        rtol,
        atol,
        worst_ratio: 0.0,
        worst_abs_error: 0.0,
        worst_entry: (0, 0),
        failed_entries: 0,
        passed: true,
    };
    for i in 0..8 {
        for j in 0..8 {
            let (a, r) = (mc.0[(i, j)], reference.0[(i, j)]);
            let err = (a - r).abs();
            let ratio = err / (rtol * r.abs()).max(atol);
            if !within(a, r, rtol, atol) {
                report.failed_entries += 1;
            }
            report.worst_abs_error = report.worst_abs_error.max(err);
            if ratio.is_nan() || ratio > report.worst_ratio {
                report.worst_ratio = ratio;
                report.worst_entry = (i, j);
            }
        }
    }
    report.passed = report.failed_entries == 0 && report.worst_ratio.is_finite();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DriftMatrix;
    use proptest::prelude::*;

    #[test]
    fn linear_maps_are_recovered() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, -2.0, 0.5, 0.0, 3.0, 4.0, -1.0, 0.25, 2.0]);
        let f = |x: &[f64]| (&a * DMatrix::from_column_slice(3, 1, x)).as_slice().to_vec();
        let j = fd_jacobian(f, &[0.5, -1.0, 2.0], 1e-3);
        assert!((j - &a).abs().max() < 1e-12);
    }

    #[test]
    fn square_has_known_derivative() {
        let f = |x: &[f64]| vec![x[0] * x[0], 0.0];
        let j = fd_jacobian(f, &[3.0, 1.0], 1e-4);
        assert!((j[(0, 0)] - 6.0).abs() < 1e-6);
        assert_eq!(j[(1, 0)], 0.0);
        assert_eq!(j[(0, 1)], 0.0);
    }

    #[test]
    fn drift_matrix_passes_the_oracle() {
        let r = jacobian_check(20, 11);
        assert!(r.passed, "{r:?}");
    }

    fn flipped(s: &MeanState, p: &ModelParams, t: f64) -> DriftMatrix {
        let mut m = drift_matrix(s, p, t);
        m.0[(3, 0)] = -m.0[(3, 0)];
        m
    }

    #[test]
    fn sign_flip_is_caught() {
        let r = jacobian_check_with(flipped, 5, 11, 1e-6, 1e-9);
        assert!(!r.passed);
        assert_eq!(r.worst_entry.1, 3);
        assert_eq!(r.worst_entry.2, 0);
    }

    fn ou(paths: usize, seed: u64, horizon: f64) -> f64 {
        let drift = DMatrix::from_element(1, 1, -0.15);
        let cfg = McConfig { paths, dt: 0.01, horizon, seed };
        simulate_linear_sde(&drift, &[0.3], &cfg, 4).unwrap()[(0, 0)]
    }

    #[test]
    fn ornstein_uhlenbeck_steady_variance() {
        // N/(2κ) = 1; a variance estimate has standard error ≈ √(2/n)
        let n = 100_000;
        let var = ou(n, 1, 60.0);
        let se = (2.0 / n as f64).sqrt();
        assert!((var - 1.0).abs() < 3.0 * se, "{var}");
    }

    #[test]
    fn no_noise_means_no_covariance() {
        let drift = DMatrix::from_row_slice(2, 2, &[-0.1, 1.0, -1.0, -0.1]);
        let cfg = McConfig { paths: 50, dt: 0.01, horizon: 1.0, seed: 3 };
        let cov = simulate_linear_sde(&drift, &[0.0, 0.0], &cfg, 2).unwrap();
        assert!(cov.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn worker_count_does_not_change_the_estimate() {
        let drift = DMatrix::from_row_slice(2, 2, &[-0.2, 1.0, -1.0, -0.3]);
        let cfg = McConfig { paths: 3000, dt: 0.01, horizon: 2.0, seed: 9 };
        let one = simulate_linear_sde(&drift, &[0.1, 0.4], &cfg, 1).unwrap();
        for w in [2, 3, 8] {
            assert_eq!(simulate_linear_sde(&drift, &[0.1, 0.4], &cfg, w).unwrap(), one);
        }
    }

    #[test]
    fn error_shrinks_like_inverse_sqrt_paths() {
        // reference: exact variance of the discretized process
        let (kappa, noise, dt, horizon) = (0.15, 0.3, 0.01, 5.0);
        let steps = (horizon / dt - 1e-9f64).ceil() as usize;
        let exact = (0..steps).fold(0.0, |v, _| (1.0 - kappa * dt).powi(2) * v + noise * dt);
        let rms = |paths: usize| {
            let seeds = 24;
            let ss: f64 = (0..seeds)
                .map(|s| (ou(paths, 100 + s, horizon) - exact).powi(2))
                .sum();
            (ss / seeds as f64).sqrt()
        };
        let ratio = rms(1000) / rms(4000);
        assert!((1.0..=4.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn unstable_drift_is_reported() {
        let drift = DMatrix::from_element(1, 1, 500.0);
        let cfg = McConfig { paths: 4, dt: 0.1, horizon: 100.0, seed: 1 };
        assert!(matches!(
            simulate_linear_sde(&drift, &[1.0], &cfg, 1),
            Err(McError::Unstable { .. })
        ));
    }

    #[test]
    fn invalid_configs() {
        let drift = DMatrix::from_element(1, 1, -1.0);
        let base = McConfig { paths: 10, dt: 0.1, horizon: 1.0, seed: 0 };
        let bad = [
            McConfig { paths: 0, ..base },
            McConfig { dt: 0.0, ..base },
            McConfig { horizon: f64::NAN, ..base },
        ];
        for cfg in bad {
            assert!(simulate_linear_sde(&drift, &[1.0], &cfg, 1).is_err());
        }
        assert!(matches!(
            simulate_linear_sde(&drift, &[1.0, 1.0], &base, 1),
            Err(McError::Shape(..))
        ));
    }

    #[test]
    fn sample_covariance_is_symmetric_psd() {
        let drift = DMatrix::from_row_slice(3, 3, &[-0.5, 0.2, 0.0, -0.2, -0.4, 0.3, 0.1, 0.0, -0.6]);
        let cfg = McConfig { paths: 500, dt: 0.01, horizon: 1.0, seed: 4 };
        let cov = simulate_linear_sde(&drift, &[0.2, 0.1, 0.3], &cfg, 2).unwrap();
        assert_eq!(cov, cov.transpose());
        let eig = cov.symmetric_eigen().eigenvalues;
        assert!(eig.iter().all(|&e| e >= -1e-12));
    }

    #[test]
    fn frozen_operating_point_is_stable() {
        let p = crate::presets::preset("fig4").unwrap().params;
        let m = drift_matrix(&FROZEN_OPERATING_POINT, &p, 0.0).0;
        let eig = DMatrix::from_fn(8, 8, |i, j| m[(i, j)]).complex_eigenvalues();
        assert!(eig.iter().all(|e| e.re < 0.0), "{eig}");
    }

    proptest! {
        #[test]
        fn linear_maps_exact_for_any_eps(
            entries in prop::array::uniform9(-5i32..5),
            x in prop::array::uniform3(-10.0f64..10.0),
            log_eps in -8.0f64..-2.0,
        ) {
            // integer matrices keep the products exact
            let a = DMatrix::from_iterator(3, 3, entries.iter().map(|&e| e as f64));
            let f = |v: &[f64]| (&a * DMatrix::from_column_slice(3, 1, v)).as_slice().to_vec();
            let j = fd_jacobian(f, &x, 10f64.powf(log_eps));
            let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let tol = 1e-15 * scale * 10f64.powf(-log_eps) * 20.0;
            prop_assert!((j - &a).abs().max() <= tol.max(1e-12));
        }
    }
}

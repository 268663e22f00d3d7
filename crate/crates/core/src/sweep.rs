//! Parameter grids and their parallel evaluation.
//!
//! A grid is a list of axes. Each axis moves one or more parameters together
//! through a list of value tuples, and the grid is the Cartesian product of
//! its axes with the first axis varying slowest.

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::{integrate, IntegratorConfig};
use crate::measures::{SteadyStats, DEFAULT_WINDOW};
use crate::model::{InitialCovariance, MeanState, ModelParams, ParamError};
use crate::parallel::map_ordered;

/// Parameters that can be swept. `Chi` sets both cavities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweptParam {
    #[serde(rename = "chi")]
    Chi,
    #[serde(rename = "mu")]
    Mu,
    #[serde(rename = "lambda")]
    Lambda,
    #[serde(rename = "eta_C")]
    EtaC,
    #[serde(rename = "Omega_C")]
    OmegaC,
    #[serde(rename = "eta_D")]
    EtaD,
    #[serde(rename = "Omega_D")]
    OmegaD,
    #[serde(rename = "drive_E")]
    DriveE,
    #[serde(rename = "n_b")]
    NB,
}

impl SweptParam {
    pub fn name(self) -> &'static str {
        match self {
            SweptParam::Chi => "chi",
            SweptParam::Mu => "mu",
            SweptParam::Lambda => "lambda",
            SweptParam::EtaC => "eta_C",
            SweptParam::OmegaC => "Omega_C",
            SweptParam::EtaD => "eta_D",
            SweptParam::OmegaD => "Omega_D",
            SweptParam::DriveE => "drive_E",
            SweptParam::NB => "n_b",
        }
    }

    pub fn apply(self, params: &mut ModelParams, value: f64) {
        match self {
            SweptParam::Chi => params.chi = [value, value],
            SweptParam::Mu => params.mu = value,
            SweptParam::Lambda => params.lambda = value,
            SweptParam::EtaC => params.eta_c = value,
            SweptParam::OmegaC => params.omega_c = value,
            SweptParam::EtaD => params.eta_d = value,
            SweptParam::OmegaD => params.omega_d = value,
            SweptParam::DriveE => params.drive_e = value,
            SweptParam::NB => params.n_b = value,
        }
    }
}

impl fmt::Display for SweptParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One grid axis: `params` move together through `values`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub params: Vec<SweptParam>,
    pub values: Vec<Vec<f64>>,
}

impl SweepAxis {
    pub fn single(param: SweptParam, values: Vec<f64>) -> Self {
        Self {
            params: vec![param],
            values: values.into_iter().map(|v| vec![v]).collect(),
        }
    }

    pub fn linked(params: Vec<SweptParam>, values: Vec<Vec<f64>>) -> Self {
        Self { params, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `n` evenly spaced values from `start` to `end` inclusive.
pub fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    end
                } else {
                    start + (end - start) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("no swept parameters")]
    NoAxes,
    #[error("axis {0} has no values")]
    EmptyAxis(usize),
    #[error("axis {0} lists no parameters")]
    NoParams(usize),
    #[error("axis {axis} value {index} has {got} entries, expected {expected}")]
    TupleLength {
        axis: usize,
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("parameter {0} appears on more than one axis")]
    Duplicate(SweptParam),
    #[error("seed count must be at least 1")]
    NoSeeds,
    #[error("window fraction {0} must lie in (0, 1]")]
    Window(f64),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Integrator(#[from] crate::integrator::ConfigError),
}

fn default_seeds() -> usize {
    1
}

fn default_window() -> f64 {
    DEFAULT_WINDOW
}

/// Everything needed to run a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub base: ModelParams,
    pub integrator: IntegratorConfig,
    pub axes: Vec<SweepAxis>,
    pub seed: u64,
    /// Number of covariance seeds per point (`seed, seed + 1, …`).
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub initial_covariance: InitialCovariance,
    #[serde(default)]
    pub initial_mean: [f64; 8],
    #[serde(default = "default_window")]
    pub window_fraction: f64,
}

impl SweepGrid {
    pub fn new(base: ModelParams, axes: Vec<SweepAxis>) -> Self {
        Self {
            base,
            integrator: IntegratorConfig::default(),
            axes,
            seed: 0,
            seeds: 1,
            initial_covariance: InitialCovariance::default(),
            initial_mean: [0.0; 8],
            window_fraction: DEFAULT_WINDOW,
        }
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.axes.is_empty() {
            return Err(GridError::NoAxes);
        }
        let mut seen = Vec::new();
        for (a, axis) in self.axes.iter().enumerate() {
            if axis.params.is_empty() {
                return Err(GridError::NoParams(a));
            }
            if axis.values.is_empty() {
                return Err(GridError::EmptyAxis(a));
            }
            for (i, v) in axis.values.iter().enumerate() {
                if v.len() != axis.params.len() {
                    return Err(GridError::TupleLength {
                        axis: a,
                        index: i,
                        got: v.len(),
                        expected: axis.params.len(),
                    });
                }
            }
            for &p in &axis.params {
                if seen.contains(&p) {
                    return Err(GridError::Duplicate(p));
                }
                seen.push(p);
            }
        }
        if self.seeds == 0 {
            return Err(GridError::NoSeeds);
        }
        if !(self.window_fraction > 0.0 && self.window_fraction <= 1.0) {
            return Err(GridError::Window(self.window_fraction));
        }
        self.integrator.validate()?;
        Ok(())
    }

    /// Swept parameter names in column order.
    pub fn columns(&self) -> Vec<SweptParam> {
        self.axes.iter().flat_map(|a| a.params.iter().copied()).collect()
    }

    pub fn point_count(&self) -> usize {
        self.axes.iter().map(SweepAxis::len).product()
    }

    /// Swept values of every grid point, lexicographic in axis order.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let mut points = vec![Vec::new()];
        for axis in &self.axes {
            points = points
                .into_iter()
                .flat_map(|prefix| {
                    axis.values.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.extend_from_slice(v);
                        p
                    })
                })
                .collect();
        }
        points
    }

    fn params_at(&self, point: &[f64]) -> ModelParams {
        let mut p = self.base;
        for (param, &v) in self.columns().into_iter().zip(point) {
            param.apply(&mut p, v);
        }
        p
    }
}

/// Parameter sets of every grid point, in row order.
pub fn expand_grid(grid: &SweepGrid) -> Result<Vec<ModelParams>, GridError> {
    grid.validate()?;
    grid.points()
        .iter()
        .map(|pt| grid.params_at(pt).validate().map_err(GridError::from))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point: Vec<f64>,
    /// Averaged over seeds; NaN fields when the point did not converge.
    pub stats: SteadyStats,
    /// Standard deviation of `S_q` over seeds (0 for a single seed).
    pub sync_q_spread: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub columns: Vec<SweptParam>,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// Rows whose swept values match `filter` on the given columns.
    pub fn select(&self, filter: &[(SweptParam, f64)]) -> Vec<&SweepRow> {
        self.rows
            .iter()
            .filter(|row| {
                filter.iter().all(|&(param, value)| {
                    self.columns
                        .iter()
                        .position(|&c| c == param)
                        .is_some_and(|i| row.point[i] == value)
                })
            })
            .collect()
    }

    /// Largest seed spread of `S_q` over all converged rows.
    pub fn max_sync_q_spread(&self) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.converged)
            .map(|r| r.sync_q_spread)
            .fold(0.0, f64::max)
    }
}

const NAN_STATS: SteadyStats = SteadyStats {
    sync_q_mean: f64::NAN,
    sync_c_mean: f64::NAN,
    amp_q1: f64::NAN,
    amp_q2: f64::NAN,
    amp_p1: f64::NAN,
    amp_p2: f64::NAN,
    phase_lag: None,
};

/// Integrates one parameter set from the grid's initial state and returns
/// its steady statistics, or `None` if integration or measurement failed.
pub fn run_point(grid: &SweepGrid, params: &ModelParams, seed: u64) -> Option<SteadyStats> {
    let v0 = grid.initial_covariance.build(seed);
    let traj = integrate(&MeanState(grid.initial_mean), &v0, params, &grid.integrator).ok()?;
    let stats = SteadyStats::from_trajectory(&traj, grid.window_fraction).ok()?;
    stats.sync_q_mean.is_finite().then_some(stats)
}

/// Runs every grid point. Rows come back in grid order and are identical for
/// any `workers`; a diverging point is flagged, not fatal.
pub fn run_sweep(grid: &SweepGrid, workers: usize) -> Result<SweepResult, GridError> {
    let params = expand_grid(grid)?;
    let points = grid.points();
    let jobs: Vec<(usize, u64)> = (0..params.len())
        .flat_map(|i| (0..grid.seeds as u64).map(move |s| (i, s)))
        .collect();
    let outcomes = map_ordered(&jobs, workers, |&(i, s)| {
        run_point(grid, &params[i], grid.seed.wrapping_add(s))
    });

    let rows = points
        .into_iter()
        .zip(outcomes.chunks(grid.seeds))
        .map(|(point, runs)| {
            let ok: Option<Vec<SteadyStats>> = runs.iter().copied().collect();
            match ok.as_deref().and_then(SteadyStats::average) {
                Some((stats, spread)) => SweepRow {
                    point,
                    stats,
                    sync_q_spread: spread,
                    converged: true,
                },
                None => SweepRow {
                    point,
                    stats: NAN_STATS,
                    sync_q_spread: f64::NAN,
                    converged: false,
                },
            }
        })
        .collect();
    Ok(SweepResult {
        columns: grid.columns(),
        rows,
    })
}

pub const STAT_COLUMNS: [&str; 8] = [
    "S_q_mean",
    "S_c_mean",
    "amp_q1",
    "amp_q2",
    "amp_p1",
    "amp_p2",
    "phase_lag",
    "converged",
];

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Writes the result as CSV with a header row.
pub fn write_csv<W: Write>(result: &SweepResult, mut out: W) -> io::Result<()> {
    let header: Vec<&str> = result
        .columns
        .iter()
        .map(|c| c.name())
        .chain(STAT_COLUMNS)
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for row in &result.rows {
        let s = &row.stats;
        let mut fields: Vec<String> = row.point.iter().map(|&v| format_float(v)).collect();
        fields.extend(
            [s.sync_q_mean, s.sync_c_mean, s.amp_q1, s.amp_q2, s.amp_p1, s.amp_p2]
                .map(format_float),
        );
        fields.push(format_float(s.phase_lag.unwrap_or(f64::NAN)));
        fields.push(row.converged.to_string());
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::Method;

    fn quick() -> IntegratorConfig {
        IntegratorConfig {
            t_end: 60.0,
            sample_interval: 0.5,
            ..Default::default()
        }
    }

    #[test]
    fn product_sizes() {
        let g = SweepGrid::new(
            ModelParams::default(),
            vec![
                SweepAxis::single(SweptParam::Chi, vec![1e-4, 2e-4]),
                SweepAxis::single(SweptParam::Mu, vec![0.03]),
            ],
        );
        assert_eq!(expand_grid(&g).unwrap().len(), 2);

        let g = SweepGrid::new(
            ModelParams::default(),
            vec![
                SweepAxis::single(SweptParam::Chi, vec![0.0, 1e-4]),
                SweepAxis::single(SweptParam::Mu, vec![0.0, 0.01, 0.02]),
                SweepAxis::single(SweptParam::EtaC, vec![0.0, 0.5, 1.0, 1.5]),
            ],
        );
        let ps = expand_grid(&g).unwrap();
        assert_eq!(ps.len(), 24);
        // first axis slowest
        assert_eq!(ps[0].chi, [0.0, 0.0]);
        assert_eq!(ps[11].chi, [0.0, 0.0]);
        assert_eq!(ps[12].chi, [1e-4, 1e-4]);
        assert_eq!(ps[1].eta_c, 0.5);
        assert_eq!(ps[4].mu, 0.01);
    }

    #[test]
    fn single_point_overrides_base() {
        let base = ModelParams { eta_c: 1.0, ..Default::default() };
        let g = SweepGrid::new(base, vec![SweepAxis::single(SweptParam::Lambda, vec![0.03])]);
        assert_eq!(
            expand_grid(&g).unwrap(),
            vec![ModelParams { lambda: 0.03, ..base }]
        );
    }

    #[test]
    fn linked_axis_moves_together() {
        let g = SweepGrid::new(
            ModelParams::default(),
            vec![SweepAxis::linked(
                vec![SweptParam::Mu, SweptParam::Lambda],
                vec![vec![0.03, 0.0], vec![0.0, 0.03]],
            )],
        );
        let ps = expand_grid(&g).unwrap();
        assert_eq!((ps[0].mu, ps[0].lambda), (0.03, 0.0));
        assert_eq!((ps[1].mu, ps[1].lambda), (0.0, 0.03));
    }

    #[test]
    fn invalid_grids() {
        let base = ModelParams::default();
        assert_eq!(SweepGrid::new(base, vec![]).validate(), Err(GridError::NoAxes));
        assert_eq!(
            SweepGrid::new(base, vec![SweepAxis::single(SweptParam::Mu, vec![])]).validate(),
            Err(GridError::EmptyAxis(0))
        );
        let dup = vec![
            SweepAxis::single(SweptParam::Mu, vec![0.0]),
            SweepAxis::single(SweptParam::Mu, vec![0.1]),
        ];
        assert_eq!(
            SweepGrid::new(base, dup).validate(),
            Err(GridError::Duplicate(SweptParam::Mu))
        );
        let short = vec![SweepAxis::linked(vec![SweptParam::Mu, SweptParam::Lambda], vec![vec![0.0]])];
        assert!(matches!(
            SweepGrid::new(base, short).validate(),
            Err(GridError::TupleLength { .. })
        ));
        assert_eq!(GridError::NoAxes.to_string(), "no swept parameters");
        let neg = SweepGrid::new(base, vec![SweepAxis::single(SweptParam::Chi, vec![-1.0])]);
        assert!(matches!(expand_grid(&neg), Err(GridError::Params(_))));
    }

    #[test]
    fn linspace_endpoints() {
        let v = linspace(0.0, 6e-4, 25);
        assert_eq!(v.len(), 25);
        assert_eq!(v[0], 0.0);
        assert_eq!(v[24], 6e-4);
        assert!((v[18] - 4.5e-4).abs() < 1e-18);
        assert_eq!(linspace(1.0, 2.0, 1), vec![1.0]);
    }

    #[test]
    fn worker_count_invariance() {
        let mut g = SweepGrid::new(
            ModelParams { eta_c: 1.0, mu: 0.03, ..Default::default() },
            vec![SweepAxis::single(SweptParam::Chi, vec![0.0, 4.5e-4, 6e-4])],
        );
        g.integrator = quick();
        g.seed = 7;
        let one = run_sweep(&g, 1).unwrap();
        let eight = run_sweep(&g, 8).unwrap();
        assert_eq!(format!("{one:?}"), format!("{eight:?}"));
        assert!(one.rows.iter().all(|r| r.converged));
    }

    #[test]
    fn divergence_is_flagged_not_fatal() {
        let mut g = SweepGrid::new(
            ModelParams::default(),
            vec![SweepAxis::single(SweptParam::DriveE, vec![1.0, 1e200])],
        );
        g.integrator = IntegratorConfig {
            method: Method::Rk4,
            dt: 0.01,
            ..quick()
        };
        let r = run_sweep(&g, 2).unwrap();
        assert!(r.rows[0].converged);
        assert!(!r.rows[1].converged);
        assert!(r.rows[1].stats.sync_q_mean.is_nan());
    }

    #[test]
    fn multi_seed_reports_spread() {
        let mut g = SweepGrid::new(
            ModelParams::default(),
            vec![SweepAxis::single(SweptParam::Mu, vec![0.03])],
        );
        g.integrator = IntegratorConfig { t_end: 5.0, ..quick() };
        g.seeds = 3;
        let r = run_sweep(&g, 3).unwrap();
        assert!(r.rows[0].converged);
        assert!(r.rows[0].sync_q_spread > 0.0);
        let single = run_point(&g, &expand_grid(&g).unwrap()[0], 0).unwrap();
        assert_ne!(single.sync_q_mean, r.rows[0].stats.sync_q_mean);
    }

    #[test]
    fn csv_layout() {
        let result = SweepResult {
            columns: vec![SweptParam::Mu, SweptParam::Lambda, SweptParam::Chi],
            rows: vec![SweepRow {
                point: vec![0.03, 0.0, 4.5e-4],
                stats: SteadyStats {
                    sync_q_mean: 0.8,
                    sync_c_mean: 2.0,
                    amp_q1: 60.0,
                    amp_q2: 61.0,
                    amp_p1: 70.0,
                    amp_p2: 71.0,
                    phase_lag: None,
                },
                sync_q_spread: 0.0,
                converged: true,
            }],
        };
        let mut buf = Vec::new();
        write_csv(&result, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "mu,lambda,chi,S_q_mean,S_c_mean,amp_q1,amp_q2,amp_p1,amp_p2,phase_lag,converged"
        );
        let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(fields.len(), 11);
        assert_eq!(fields[0], "2.9999999999999999e-2");
        assert_eq!(fields[0].parse::<f64>().unwrap(), 0.03);
        assert_eq!(fields[9], "NaN");
        assert_eq!(fields[10], "true");
        assert!(!text.contains('\r'));
    }
}

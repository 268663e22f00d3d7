//! Simulator for synchronization of two coupled Kerr optomechanical cavities.
//!
//! The classical mean-field equations are integrated together with the
//! Lyapunov equation for the covariance of the linearized quantum
//! fluctuations. From these, [`measures`] derives the quantum (`S_q`) and
//! classical (`S_c`) synchronization measures, and [`sweep`] evaluates them
//! over parameter grids in parallel.
//!
//! ```
//! use kerrsync::{integrate, CovarianceState, IntegratorConfig, MeanState, SteadyStats};
//!
//! let params = kerrsync::presets::preset("fig4").unwrap().params;
//! let cfg = IntegratorConfig { t_end: 50.0, ..Default::default() };
//! let traj = integrate(&MeanState::ZERO, &CovarianceState::random_physical(0), &params, &cfg).unwrap();
//! let stats = SteadyStats::from_trajectory(&traj, 0.4).unwrap();
//! assert!(stats.sync_q_mean > 0.0 && stats.sync_q_mean <= 1.0);
//! ```

pub mod dynamics;
pub mod integrator;
pub mod measures;
pub mod model;
pub mod oracle;
pub mod parallel;
pub mod presets;
pub mod sweep;
pub mod validation;

pub use dynamics::{drift_matrix, mean_field_rhs, noise_matrix, DriftMatrix, NoiseMatrix};
pub use integrator::{integrate, IntegrationError, IntegratorConfig, Method, Trajectory};
pub use measures::{sync_c_instant, sync_q_instant, MeasureError, SteadyStats};
pub use model::{CovarianceState, InitialCovariance, MeanState, ModelParams, ParamError};
pub use sweep::{expand_grid, run_sweep, SweepAxis, SweepGrid, SweepResult, SweptParam};

/// Crate version, recorded in output metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

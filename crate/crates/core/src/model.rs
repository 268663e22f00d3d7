//! Physical parameters and state types for two coupled Kerr optomechanical
//! cavities.
//!
//! Units: every rate and frequency is measured in units of the first
//! mechanical frequency (so `omega[0] = delta[0] = 1` by default), time in
//! units of its inverse, and ħ = 1.

use nalgebra::SMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 8×8 real matrix in the fluctuation ordering
/// `(δq₁, δp₁, δx₁, δy₁, δq₂, δp₂, δx₂, δy₂)`.
pub type Matrix8 = SMatrix<f64, 8, 8>;

/// Dimension of one subsystem block (q, p, Re α, Im α).
pub const BLOCK: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParamError {
    #[error("{0} must be positive")]
    NotPositive(&'static str),
    #[error("{0} must be non-negative")]
    Negative(&'static str),
    #[error("{0} must be finite")]
    NotFinite(&'static str),
}

/// All physical constants plus the modulation and coupling settings.
///
/// The serialized key names are part of the configuration contract:
/// `omega, delta, chi, g, kappa, gamma, drive_E, eta_C, Omega_C, eta_D,
/// Omega_D, mu, lambda, n_b`. Unknown keys are rejected; missing keys take
/// the defaults below.
///
/// `kappa`, `gamma` and `n_b` default to calibration values (0.15, 0.005, 0).
/// They are inputs, not measured quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    /// Mechanical frequencies ω₁, ω₂.
    pub omega: [f64; 2],
    /// Cavity detunings Δ₁, Δ₂.
    pub delta: [f64; 2],
    /// Kerr coefficients χ₁, χ₂.
    pub chi: [f64; 2],
    /// Optomechanical couplings g₁, g₂.
    pub g: [f64; 2],
    pub kappa: f64,
    pub gamma: f64,
    #[serde(rename = "drive_E")]
    pub drive_e: f64,
    #[serde(rename = "eta_C")]
    pub eta_c: f64,
    #[serde(rename = "Omega_C")]
    pub omega_c: f64,
    #[serde(rename = "eta_D")]
    pub eta_d: f64,
    #[serde(rename = "Omega_D")]
    pub omega_d: f64,
    /// Phonon tunneling between the mechanical oscillators.
    pub mu: f64,
    /// Fiber coupling between the cavity modes.
    pub lambda: f64,
    /// Thermal phonon number of the mechanical bath.
    pub n_b: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            omega: [1.0, 1.005],
            delta: [1.0, 1.005],
            chi: [0.0, 0.0],
            g: [0.005, 0.005],
            kappa: 0.15,
            gamma: 0.005,
            drive_e: 100.0,
            eta_c: 0.0,
            omega_c: 1.0,
            eta_d: 0.0,
            omega_d: 1.0,
            mu: 0.0,
            lambda: 0.0,
            n_b: 0.0,
        }
    }
}

impl ModelParams {
    /// Checks the parameter invariants and returns the parameters unchanged.
    pub fn validate(self) -> Result<Self, ParamError> {
        let scalars = [
            ("kappa", self.kappa),
            ("gamma", self.gamma),
            ("drive_E", self.drive_e),
            ("eta_C", self.eta_c),
            ("Omega_C", self.omega_c),
            ("eta_D", self.eta_d),
            ("Omega_D", self.omega_d),
            ("mu", self.mu),
            ("lambda", self.lambda),
            ("n_b", self.n_b),
        ];
        let pairs = [
            ("omega", self.omega),
            ("delta", self.delta),
            ("chi", self.chi),
            ("g", self.g),
        ];
        for (name, v) in scalars {
            if !v.is_finite() {
                return Err(ParamError::NotFinite(name));
            }
        }
        for (name, v) in pairs {
            if !v.iter().all(|x| x.is_finite()) {
                return Err(ParamError::NotFinite(name));
            }
        }
        if self.kappa <= 0.0 {
            return Err(ParamError::NotPositive("kappa"));
        }
        if self.gamma <= 0.0 {
            return Err(ParamError::NotPositive("gamma"));
        }
        if self.omega.iter().any(|&w| w <= 0.0) {
            return Err(ParamError::NotPositive("omega"));
        }
        if self.chi.iter().any(|&c| c < 0.0) {
            return Err(ParamError::Negative("chi"));
        }
        if self.n_b < 0.0 {
            return Err(ParamError::Negative("n_b"));
        }
        Ok(self)
    }

    /// Exchanges the roles of subsystems 1 and 2.
    pub fn swapped(&self) -> Self {
        let sw = |p: [f64; 2]| [p[1], p[0]];
        Self {
            omega: sw(self.omega),
            delta: sw(self.delta),
            chi: sw(self.chi),
            g: sw(self.g),
            ..*self
        }
    }

    /// Shortest modulation period present, or 2π when nothing faster than
    /// the mechanical frequency is modulated.
    pub fn fastest_period(&self) -> f64 {
        let fastest = self.omega_c.abs().max(self.omega_d.abs()).max(1.0);
        std::f64::consts::TAU / fastest
    }
}

/// `1 + η cos(Ω t)`, shared by the detuning and drive modulations.
#[inline]
pub fn modulation_factor(t: f64, eta: f64, omega: f64) -> f64 {
    1.0 + eta * (omega * t).cos()
}

/// Classical mean values `(q̄₁, p̄₁, Re α₁, Im α₁, q̄₂, p̄₂, Re α₂, Im α₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanState(pub [f64; 8]);

impl MeanState {
    pub const ZERO: MeanState = MeanState([0.0; 8]);

    pub fn q(&self, j: usize) -> f64 {
        self.0[BLOCK * j]
    }

    pub fn p(&self, j: usize) -> f64 {
        self.0[BLOCK * j + 1]
    }

    /// `(Re α_j, Im α_j)`.
    pub fn alpha(&self, j: usize) -> (f64, f64) {
        (self.0[BLOCK * j + 2], self.0[BLOCK * j + 3])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn swapped(&self) -> Self {
        let mut out = [0.0; 8];
        out[..BLOCK].copy_from_slice(&self.0[BLOCK..]);
        out[BLOCK..].copy_from_slice(&self.0[..BLOCK]);
        MeanState(out)
    }
}

/// Symmetric covariance `V_ij = ½⟨u_i u_j + u_j u_i⟩` of the fluctuation
/// vector `u = (δq₁, δp₁, δx₁, δy₁, δq₂, δp₂, δx₂, δy₂)`, where
/// `δx = √2 Re δa` and `δy = √2 Im δa`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceState(pub Matrix8);

impl CovarianceState {
    /// Vacuum / ground-state covariance `½·I`.
    pub fn vacuum() -> Self {
        CovarianceState(Matrix8::identity() * 0.5)
    }

    /// `A·Aᵀ` with `A` entries uniform in `[0, 1)`. Positive semidefinite
    /// but not necessarily a valid quantum state.
    pub fn random_raw(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Matrix8::from_fn(|_, _| rng.random::<f64>());
        let mut v = CovarianceState(a * a.transpose());
        v.symmetrize();
        v
    }

    /// `½·I + A·Aᵀ`: random and unnormalized, and always satisfies the
    /// uncertainty relation because `½·I` alone does.
    pub fn random_physical(seed: u64) -> Self {
        let mut v = Self::random_raw(seed);
        v.0 += Matrix8::identity() * 0.5;
        v
    }

    pub fn symmetrize(&mut self) {
        for i in 0..8 {
            for j in (i + 1)..8 {
                let m = 0.5 * (self.0[(i, j)] + self.0[(j, i)]);
                self.0[(i, j)] = m;
                self.0[(j, i)] = m;
            }
        }
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        (0..8).all(|i| {
            (0..8).all(|j| {
                let a = self.0[(i, j)];
                (a - self.0[(j, i)]).abs() <= rel_tol * (1.0 + a.abs())
            })
        })
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// Exchanges the subsystem blocks.
    pub fn swapped(&self) -> Self {
        let perm = |i: usize| (i + BLOCK) % 8;
        CovarianceState(Matrix8::from_fn(|i, j| self.0[(perm(i), perm(j))]))
    }
}

/// How the initial fluctuation covariance is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialCovariance {
    /// `½·I + A·Aᵀ`, seeded.
    #[default]
    Random,
    /// `A·Aᵀ`, seeded.
    RandomRaw,
    /// `½·I`.
    Vacuum,
}

impl InitialCovariance {
    pub fn build(self, seed: u64) -> CovarianceState {
        match self {
            InitialCovariance::Random => CovarianceState::random_physical(seed),
            InitialCovariance::RandomRaw => CovarianceState::random_raw(seed),
            InitialCovariance::Vacuum => CovarianceState::vacuum(),
        }
    }
}

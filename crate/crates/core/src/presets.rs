//! Named parameter sets for the figure studies.
//!
//! Sweep presets (`fig2a` … `fig7b`) carry grid axes; trajectory presets
//! (`fig4`, `fig5`, `fig8`, `fig9`) carry none.

use crate::model::ModelParams;
use crate::sweep::{linspace, SweepAxis, SweepGrid, SweptParam};

/// Printed with every preset run.
pub const CALIBRATION_BANNER: &str = "note: kappa=0.15, gamma=0.005, n_b=0 are calibration defaults; \
the figure studies leave cavity damping, mechanical damping and bath occupation unspecified";

/// Points per swept axis unless overridden.
pub const DEFAULT_RESOLUTION: usize = 25;

/// Kerr strength used by every study that does not sweep it.
pub const CHI_REFERENCE: f64 = 4.5e-4;

pub const SWEEP_PRESETS: [&str; 8] = [
    "fig2a", "fig2b", "fig3a", "fig3b", "fig6a", "fig6b", "fig7a", "fig7b",
];

pub const TRAJECTORY_PRESETS: [&str; 4] = ["fig4", "fig5", "fig8", "fig9"];

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub params: ModelParams,
    /// Empty for trajectory presets.
    pub axes: Vec<SweepAxis>,
}

impl Preset {
    pub fn is_sweep(&self) -> bool {
        !self.axes.is_empty()
    }

    /// Sweep grid with default integrator settings and seed 0.
    pub fn grid(&self) -> SweepGrid {
        SweepGrid::new(self.params, self.axes.clone())
    }
}

pub fn names() -> impl Iterator<Item = &'static str> {
    SWEEP_PRESETS.into_iter().chain(TRAJECTORY_PRESETS)
}

/// Shared parameters: `Δ = (1, 1.005)`, `ω_j = Δ_j`, `g = 0.005`,
/// `E = 100`, plus the calibration defaults.
fn base() -> ModelParams {
    ModelParams {
        omega: [1.0, 1.005],
        delta: [1.0, 1.005],
        g: [0.005, 0.005],
        drive_e: 100.0,
        kappa: 0.15,
        gamma: 0.005,
        n_b: 0.0,
        ..Default::default()
    }
}

fn detuning_modulated(chi: f64) -> ModelParams {
    ModelParams {
        eta_c: 1.0,
        omega_c: 1.0,
        chi: [chi, chi],
        ..base()
    }
}

fn drive_modulated(chi: f64) -> ModelParams {
    ModelParams {
        eta_d: 0.5,
        omega_d: 1.0,
        chi: [chi, chi],
        ..base()
    }
}

fn couplings(pairs: &[(f64, f64)]) -> SweepAxis {
    SweepAxis::linked(
        vec![SweptParam::Mu, SweptParam::Lambda],
        pairs.iter().map(|&(m, l)| vec![m, l]).collect(),
    )
}

const FOUR_COUPLINGS: [(f64, f64); 4] = [(0.048, 0.0), (0.03, 0.0), (0.0, 0.03), (0.0, 0.01)];
const TWO_COUPLINGS: [(f64, f64); 2] = [(0.03, 0.0), (0.0, 0.03)];

/// μ swept with λ = 0, followed by λ swept with μ = 0.
fn coupling_strength_axis(max: f64, n: usize) -> SweepAxis {
    let values = linspace(0.0, max, n);
    let pairs: Vec<(f64, f64)> = values
        .iter()
        .map(|&m| (m, 0.0))
        .chain(values.iter().map(|&l| (0.0, l)))
        .collect();
    couplings(&pairs)
}

pub fn preset(name: &str) -> Option<Preset> {
    preset_with_resolution(name, DEFAULT_RESOLUTION)
}

/// Like [`preset`], with `n` points on every continuous axis.
pub fn preset_with_resolution(name: &str, n: usize) -> Option<Preset> {
    let chi_axis = || SweepAxis::single(SweptParam::Chi, linspace(0.0, 6e-4, n));
    let (name, description, params, axes) = match name {
        "fig2a" => (
            "fig2a",
            "S_q vs chi, eta_C=1, Omega_C=1, four coupling settings",
            detuning_modulated(0.0),
            vec![couplings(&FOUR_COUPLINGS), chi_axis()],
        ),
        "fig2b" => (
            "fig2b",
            "S_q vs mu (lambda=0) and vs lambda (mu=0), chi=0.00045, eta_C=1, Omega_C=1",
            detuning_modulated(CHI_REFERENCE),
            vec![coupling_strength_axis(0.05, n)],
        ),
        "fig3a" => (
            "fig3a",
            "S_q vs Omega_C with eta_C=1",
            detuning_modulated(CHI_REFERENCE),
            vec![
                couplings(&TWO_COUPLINGS),
                SweepAxis::single(SweptParam::OmegaC, linspace(0.1, 2.5, n)),
            ],
        ),
        "fig3b" => (
            "fig3b",
            "S_q vs eta_C with Omega_C=1.0",
            detuning_modulated(CHI_REFERENCE),
            vec![
                couplings(&TWO_COUPLINGS),
                SweepAxis::single(SweptParam::EtaC, linspace(0.0, 3.0, n)),
            ],
        ),
        "fig6a" => (
            "fig6a",
            "S_q vs chi, eta_D=0.5, Omega_D=1, four coupling settings",
            drive_modulated(0.0),
            vec![couplings(&FOUR_COUPLINGS), chi_axis()],
        ),
        "fig6b" => (
            "fig6b",
            "S_q vs mu (lambda=0) and vs lambda (mu=0), chi=0.00045, eta_D=0.5, Omega_D=1",
            drive_modulated(CHI_REFERENCE),
            vec![coupling_strength_axis(0.05, n)],
        ),
        "fig7a" => (
            "fig7a",
            "S_q vs Omega_D with eta_D=0.5",
            drive_modulated(CHI_REFERENCE),
            vec![
                couplings(&TWO_COUPLINGS),
                SweepAxis::single(SweptParam::OmegaD, linspace(0.1, 3.0, n)),
            ],
        ),
        "fig7b" => (
            "fig7b",
            "S_q vs eta_D with Omega_D=1.0",
            drive_modulated(CHI_REFERENCE),
            vec![
                couplings(&TWO_COUPLINGS),
                SweepAxis::single(SweptParam::EtaD, linspace(0.0, 1.0, n)),
            ],
        ),
        "fig4" => (
            "fig4",
            "trajectory, Omega_C=1, eta_C=1, mu=0.03, lambda=0",
            ModelParams { mu: 0.03, ..detuning_modulated(CHI_REFERENCE) },
            vec![],
        ),
        "fig5" => (
            "fig5",
            "trajectory, Omega_C=1, eta_C=1, mu=0, lambda=0.03",
            ModelParams { lambda: 0.03, ..detuning_modulated(CHI_REFERENCE) },
            vec![],
        ),
        "fig8" => (
            "fig8",
            "trajectory, Omega_D=1, eta_D=0.5, mu=0.03, lambda=0",
            ModelParams { mu: 0.03, ..drive_modulated(CHI_REFERENCE) },
            vec![],
        ),
        "fig9" => (
            "fig9",
            "trajectory, Omega_D=1, eta_D=0.5, mu=0, lambda=0.03",
            ModelParams { lambda: 0.03, ..drive_modulated(CHI_REFERENCE) },
            vec![],
        ),
        _ => return None,
    };
    Some(Preset {
        name,
        description,
        params,
        axes,
    })
}

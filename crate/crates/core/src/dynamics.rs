//! Right-hand sides of the mean-field equations, their linearization, and
//! the Lyapunov equation for the fluctuation covariance.
//!
//! The drift matrix is the exact Jacobian of [`mean_field_rhs`] expressed in
//! the fluctuation basis, where the optical quadratures carry a factor √2
//! relative to `(Re α, Im α)`. See `CONSISTENCY.md` at the repository root
//! for the term-by-term derivation.

use std::f64::consts::SQRT_2;

use crate::model::{modulation_factor, CovarianceState, Matrix8, MeanState, ModelParams, BLOCK};

/// Linearized generator of the fluctuation dynamics, `u̇ = M u + noise`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftMatrix(pub Matrix8);

/// Diagonal diffusion matrix `diag(0, γ(2n_b+1), κ, κ, 0, γ(2n_b+1), κ, κ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseMatrix(pub [f64; 8]);

impl NoiseMatrix {
    pub fn to_matrix(&self) -> Matrix8 {
        Matrix8::from_diagonal(&self.0.into())
    }
}

/// Time derivative of the classical mean values.
///
/// For each subsystem `j` with partner `k = 3 − j`:
///
/// ```text
/// q̇_j = ω_j p_j
/// ṗ_j = −ω_j q_j − γ p_j + g_j |α_j|² + μ q_k
/// α̇_j = −{κ − iΔ_j(1 + η_C cos Ω_C t) − 2iχ_j|α_j|²} α_j + i g_j α_j q_j
///        + E(1 + η_D cos Ω_D t) − iλ α_k
/// ```
pub fn mean_field_rhs(state: &MeanState, params: &ModelParams, t: f64) -> MeanState {
    let detuning_mod = modulation_factor(t, params.eta_c, params.omega_c);
    let drive = params.drive_e * modulation_factor(t, params.eta_d, params.omega_d);
    let mut out = [0.0; 8];
    for j in 0..2 {
        let k = 1 - j;
        let o = BLOCK * j;
        let (q, p) = (state.q(j), state.p(j));
        let (re, im) = state.alpha(j);
        let (re_k, im_k) = state.alpha(k);
        let n = re * re + im * im;
        let g = params.g[j];

        // effective rotation frequency of α_j
        let w = params.delta[j] * detuning_mod + 2.0 * params.chi[j] * n + g * q;

        out[o] = params.omega[j] * p;
        out[o + 1] =
            -params.omega[j] * q - params.gamma * p + g * n + params.mu * state.q(k);
        out[o + 2] = -params.kappa * re - w * im + drive + params.lambda * im_k;
        out[o + 3] = -params.kappa * im + w * re - params.lambda * re_k;
    }
    MeanState(out)
}

/// Drift matrix `M(t)` of the linearized fluctuations around `state`.
///
/// With `α = a + ib`, `D = Δ_j(1 + η_C cos Ω_C t)`:
///
/// ```text
/// F± = D + g q ± 2χ(a² − b²) + 4χ(a² + b²)
/// G± = −κ ± 4χ a b
/// ```
///
/// The `δx` row reads `(−√2 g b, 0, G⁻, −F⁻)` and the `δy` row
/// `(√2 g a, 0, F⁺, G⁺)`; fiber coupling enters as `+λ` at `(δx_j, δy_k)` and
/// `−λ` at `(δy_j, δx_k)`.
pub fn drift_matrix(state: &MeanState, params: &ModelParams, t: f64) -> DriftMatrix {
    let detuning_mod = modulation_factor(t, params.eta_c, params.omega_c);
    let mut m = Matrix8::zeros();
    for j in 0..2 {
        let k = 1 - j;
        let (o, ok) = (BLOCK * j, BLOCK * k);
        let (a, b) = state.alpha(j);
        let g = params.g[j];
        let chi = params.chi[j];
        let n = a * a + b * b;

        let base = params.delta[j] * detuning_mod + g * state.q(j);
        let quad = 2.0 * chi * (a * a - b * b);
        let f_plus = base + quad + 4.0 * chi * n;
        let f_minus = base - quad + 4.0 * chi * n;
        let g_plus = -params.kappa + 4.0 * chi * a * b;
        let g_minus = -params.kappa - 4.0 * chi * a * b;

        m[(o, o + 1)] = params.omega[j];

        m[(o + 1, o)] = -params.omega[j];
        m[(o + 1, o + 1)] = -params.gamma;
        m[(o + 1, o + 2)] = SQRT_2 * g * a;
        m[(o + 1, o + 3)] = SQRT_2 * g * b;
        m[(o + 1, ok)] = params.mu;

        m[(o + 2, o)] = -SQRT_2 * g * b;
        m[(o + 2, o + 2)] = g_minus;
        m[(o + 2, o + 3)] = -f_minus;
        m[(o + 2, ok + 3)] = params.lambda;

        m[(o + 3, o)] = SQRT_2 * g * a;
        m[(o + 3, o + 2)] = f_plus;
        m[(o + 3, o + 3)] = g_plus;
        m[(o + 3, ok + 2)] = -params.lambda;
    }
    DriftMatrix(m)
}

pub fn noise_matrix(params: &ModelParams) -> NoiseMatrix {
    let mech = params.gamma * (2.0 * params.n_b + 1.0);
    let opt = params.kappa;
    NoiseMatrix([0.0, mech, opt, opt, 0.0, mech, opt, opt])
}

/// `V̇ = M V + V Mᵀ + N` for symmetric `V`.
///
/// Computed as `A + Aᵀ + N` with `A = M V`, so the result is exactly
/// symmetric whenever `V` is.
pub fn lyapunov_rhs(v: &CovarianceState, m: &DriftMatrix, n: &NoiseMatrix) -> Matrix8 {
    let a = m.0 * v.0;
    let mut out = a + a.transpose();
    for i in 0..8 {
        out[(i, i)] += n.0[i];
    }
    out
}

/// Derivative of the joint (mean, covariance) state: the mean block from
/// [`mean_field_rhs`], the covariance block from [`lyapunov_rhs`] with the
/// drift matrix evaluated at the current mean.
pub fn coupled_rhs(
    mean: &MeanState,
    v: &CovarianceState,
    params: &ModelParams,
    t: f64,
) -> (MeanState, Matrix8) {
    let dmean = mean_field_rhs(mean, params, t);
    let m = drift_matrix(mean, params, t);
    let dv = lyapunov_rhs(v, &m, &noise_matrix(params));
    (dmean, dv)
}

/// Number of scalars in the packed joint state.
pub const JOINT_DIM: usize = 8 + 64;

/// Packs mean and covariance into a flat `[mean (8) | V row-major (64)]` buffer.
pub fn pack_joint(mean: &MeanState, v: &Matrix8, out: &mut [f64]) {
    out[..8].copy_from_slice(&mean.0);
    for i in 0..8 {
        for j in 0..8 {
            out[8 + 8 * i + j] = v[(i, j)];
        }
    }
}

pub fn unpack_joint(y: &[f64]) -> (MeanState, CovarianceState) {
    let mut mean = [0.0; 8];
    mean.copy_from_slice(&y[..8]);
    let v = Matrix8::from_fn(|i, j| y[8 + 8 * i + j]);
    (MeanState(mean), CovarianceState(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{random_mean_state, random_params};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn kerr_only() -> ModelParams {
        ModelParams {
            delta: [1.0, 1.0],
            omega: [1.0, 1.0],
            chi: [0.00045, 0.00045],
            drive_e: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn zero_state_sees_only_the_drive() {
        let p = ModelParams::default();
        let d = mean_field_rhs(&MeanState::ZERO, &p, 0.7);
        assert_eq!(d.0, [0.0, 0.0, 100.0, 0.0, 0.0, 0.0, 100.0, 0.0]);
    }

    #[test]
    fn hand_evaluated_single_cavity() {
        // q=1, p=0, α=1: α̇ = −κ + i(Δ + 2χ + g), ṗ = −ω + g
        let p = kerr_only();
        let s = MeanState([1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let d = mean_field_rhs(&s, &p, 0.0);
        assert_eq!(d.0[0], 0.0);
        assert!((d.0[1] - (-0.995)).abs() < 1e-15);
        assert!((d.0[2] - (-0.15)).abs() < 1e-15);
        assert!((d.0[3] - 1.0059).abs() < 1e-14);
    }

    #[test]
    fn identical_uncoupled_subsystems_have_identical_derivatives() {
        let p = ModelParams {
            omega: [1.0, 1.0],
            delta: [1.0, 1.0],
            chi: [3e-4, 3e-4],
            eta_c: 0.5,
            ..Default::default()
        };
        let s = MeanState([1.5, -2.0, 30.0, 4.0, 1.5, -2.0, 30.0, 4.0]);
        let d = mean_field_rhs(&s, &p, 2.3);
        assert_eq!(d.0[..4], d.0[4..]);
    }

    #[test]
    fn mechanical_rows_match_the_printed_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_params(&mut rng);
        let s = random_mean_state(&mut rng);
        let m = drift_matrix(&s, &p, 1.1).0;
        assert_eq!(m[(0, 1)], p.omega[0]);
        assert_eq!(m[(1, 0)], -p.omega[0]);
        assert_eq!(m[(1, 1)], -p.gamma);
        assert_eq!(m[(1, 4)], p.mu);
        assert_eq!(m[(5, 0)], p.mu);
        let (a, b) = s.alpha(0);
        assert_eq!(m[(1, 2)], SQRT_2 * p.g[0] * a);
        assert_eq!(m[(1, 3)], SQRT_2 * p.g[0] * b);
        for c in [0, 2, 3, 4, 5, 6, 7] {
            assert_eq!(m[(0, c)], 0.0);
        }
        for c in [5, 6, 7] {
            assert_eq!(m[(1, c)], 0.0);
        }
    }

    #[test]
    fn fiber_coupling_is_antisymmetric_in_optical_rows() {
        let p = ModelParams { lambda: 0.03, ..Default::default() };
        let s = MeanState([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let with = drift_matrix(&s, &p, 0.0).0;
        let without = drift_matrix(&s, &ModelParams { lambda: 0.0, ..p }, 0.0).0;
        let diff = with - without;
        let nonzero: Vec<_> = (0..8)
            .flat_map(|i| (0..8).map(move |j| (i, j)))
            .filter(|&(i, j)| diff[(i, j)] != 0.0)
            .map(|(i, j)| (i, j, diff[(i, j)]))
            .collect();
        assert_eq!(
            nonzero,
            vec![(2, 7, 0.03), (3, 6, -0.03), (6, 3, 0.03), (7, 2, -0.03)]
        );
    }

    #[test]
    fn linear_limit_optical_block() {
        let p = ModelParams { chi: [0.0, 0.0], ..Default::default() };
        let s = MeanState([0.0, 0.3, 12.0, 0.0, 0.0, 0.0, 5.0, 0.0]);
        let m = drift_matrix(&s, &p, 0.0).0;
        assert_eq!(m[(2, 2)], -0.15);
        assert_eq!(m[(3, 3)], -0.15);
        assert_eq!(m[(2, 3)], -1.0);
        assert_eq!(m[(3, 2)], 1.0);
    }

    #[test]
    fn uncoupled_cross_blocks_vanish() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let p = ModelParams { mu: 0.0, lambda: 0.0, ..random_params(&mut rng) };
            let m = drift_matrix(&random_mean_state(&mut rng), &p, 0.4).0;
            for i in 0..4 {
                for j in 4..8 {
                    assert_eq!(m[(i, j)], 0.0);
                    assert_eq!(m[(j, i)], 0.0);
                }
            }
        }
    }

    #[test]
    fn linear_limit_f_and_g() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p = ModelParams { chi: [0.0, 0.0], ..random_params(&mut rng) };
        let m = drift_matrix(&random_mean_state(&mut rng), &p, 3.0).0;
        for o in [0, 4] {
            assert_eq!(m[(o + 2, o + 2)], -p.kappa);
            assert_eq!(m[(o + 3, o + 3)], -p.kappa);
            // F⁺ = F⁻
            assert_eq!(m[(o + 3, o + 2)], -m[(o + 2, o + 3)]);
        }
    }

    #[test]
    fn noise_matrix_examples() {
        let p = ModelParams::default();
        assert_eq!(noise_matrix(&p).0, [0.0, 0.005, 0.15, 0.15, 0.0, 0.005, 0.15, 0.15]);
        let hot = ModelParams { n_b: 1.0, ..p };
        let n = noise_matrix(&hot).0;
        assert!((n[1] - 0.015).abs() < 1e-17 && (n[5] - 0.015).abs() < 1e-17);
        // gamma = 0 bypasses validation on purpose: multiplicative zero
        let cold = ModelParams { gamma: 0.0, n_b: 7.0, ..p };
        let n = noise_matrix(&cold).0;
        assert_eq!((n[1], n[5]), (0.0, 0.0));
    }

    #[test]
    fn lyapunov_zero_covariance_gives_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_params(&mut rng);
        let m = drift_matrix(&random_mean_state(&mut rng), &p, 0.0);
        let n = noise_matrix(&p);
        let dv = lyapunov_rhs(&CovarianceState(Matrix8::zeros()), &m, &n);
        assert_eq!(dv, n.to_matrix());
    }

    #[test]
    fn lyapunov_scalar_fixed_point() {
        let kappa = 0.15;
        let n = noise_matrix(&ModelParams::default());
        let m = DriftMatrix(Matrix8::identity() * -kappa);
        let v = CovarianceState(n.to_matrix() / (2.0 * kappa));
        let dv = lyapunov_rhs(&v, &m, &n);
        assert!(dv.amax() < 1e-16, "{dv}");
    }

    #[test]
    fn lyapunov_matches_literal_formula_and_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for seed in 0..20 {
            let p = random_params(&mut rng);
            let m = drift_matrix(&random_mean_state(&mut rng), &p, 0.2);
            let n = noise_matrix(&p);
            let v = CovarianceState::random_physical(seed);
            let dv = lyapunov_rhs(&v, &m, &n);
            let literal = m.0 * v.0 + v.0 * m.0.transpose() + n.to_matrix();
            assert!((dv - literal).amax() <= 1e-12 * (1.0 + literal.amax()));
            assert_eq!(dv, dv.transpose());
        }
    }

    #[test]
    fn coupled_rhs_composes_the_pieces() {
        let p = ModelParams { drive_e: 0.0, ..Default::default() };
        let (dm, dv) = coupled_rhs(&MeanState::ZERO, &CovarianceState(Matrix8::zeros()), &p, 0.0);
        assert_eq!(dm, MeanState::ZERO);
        assert_eq!(dv, noise_matrix(&p).to_matrix());

        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let p = random_params(&mut rng);
        let s = random_mean_state(&mut rng);
        let v = CovarianceState::random_physical(4);
        let (dm, dv) = coupled_rhs(&s, &v, &p, 1.7);
        assert_eq!(dm, mean_field_rhs(&s, &p, 1.7));
        let expected = lyapunov_rhs(&v, &drift_matrix(&s, &p, 1.7), &noise_matrix(&p));
        assert_eq!(dv, expected);
    }

    #[test]
    fn pack_roundtrip() {
        let s = MeanState([1., 2., 3., 4., 5., 6., 7., 8.]);
        let v = CovarianceState::random_raw(2);
        let mut buf = [0.0; JOINT_DIM];
        pack_joint(&s, &v.0, &mut buf);
        let (s2, v2) = unpack_joint(&buf);
        assert_eq!((s, v), (s2, v2));
    }

    #[test]
    fn exchange_symmetry_of_mean_field() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let p = random_params(&mut rng);
            let s = random_mean_state(&mut rng);
            let t = 4.2;
            let d = mean_field_rhs(&s, &p, t);
            let d_sw = mean_field_rhs(&s.swapped(), &p.swapped(), t);
            assert_eq!(d.swapped(), d_sw);
        }
    }
}

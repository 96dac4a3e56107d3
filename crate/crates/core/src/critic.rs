//! Value approximation, saturated policy, Bellman error and the critic update laws.

use std::fmt::Debug;

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_dim, Error, Result};
use crate::linalg::sym_eigen_range;
use crate::model::{AugmentedState, SystemModel};
use crate::safety::CostBarrier;

/// Features `φ(ζ)` on the augmented space with an analytic Jacobian.
pub trait Basis: Send + Sync + Debug {
    fn len(&self) -> usize;
    /// Dimension of `ζ`.
    fn input_dim(&self) -> usize;
    fn phi(&self, zeta: &DVector<f64>) -> DVector<f64>;
    /// `L × (n+1)` Jacobian `∇φ`.
    fn jacobian(&self, zeta: &DVector<f64>) -> DMatrix<f64>;
}

/// Degree-two monomials: `x_i x_j` for `i ≤ j`, then `x_i ξ`, then `ξ²`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticBasis {
    n: usize,
    pairs: Vec<(usize, usize)>,
}

impl QuadraticBasis {
    pub fn new(n: usize) -> Self {
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in i..n {
                pairs.push((i, j));
            }
        }
        pairs.extend((0..n).map(|i| (i, n)));
        pairs.push((n, n));
        Self { n, pairs }
    }

    pub fn monomials(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Human-readable feature names, e.g. `x1*xi`.
    pub fn labels(&self) -> Vec<String> {
        let name = |i: usize| if i == self.n { "xi".to_string() } else { format!("x{}", i + 1) };
        self.pairs
            .iter()
            .map(|&(i, j)| if i == j { format!("{}^2", name(i)) } else { format!("{}*{}", name(i), name(j)) })
            .collect()
    }
}

impl Basis for QuadraticBasis {
    fn len(&self) -> usize {
        self.pairs.len()
    }

    fn input_dim(&self) -> usize {
        self.n + 1
    }

    fn phi(&self, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.pairs.len(), self.pairs.iter().map(|&(i, j)| z[i] * z[j]))
    }

    fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.pairs.len(), self.n + 1);
        for (row, &(i, j)) in self.pairs.iter().enumerate() {
            jac[(row, i)] += z[j];
            jac[(row, j)] += z[i];
        }
        jac
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningConfig {
    pub k_c: f64,
    pub gamma_c: f64,
    pub beta: f64,
    /// State locations of the extrapolation points; ξ is supplied at evaluation time.
    pub points: Vec<DVector<f64>>,
    /// Diagonal of the control weight `R_u`.
    pub r_u: DVector<f64>,
    /// `Q(x) = xᵀ Q x`.
    pub q: DMatrix<f64>,
}

impl LearningConfig {
    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        for (name, v) in [("k_c", self.k_c), ("gamma_c", self.gamma_c), ("beta", self.beta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.points.is_empty() {
            return Err(Error::Config("at least one extrapolation point is required".into()));
        }
        for p in &self.points {
            ensure_dim("extrapolation point", p.len(), n)?;
        }
        ensure_dim("R_u diagonal", self.r_u.len(), m)?;
        if self.r_u.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return Err(Error::Config("R_u must be positive definite diagonal".into()));
        }
        if self.q.shape() != (n, n) {
            return Err(Error::Dimension(format!("Q must be {n}x{n}, got {:?}", self.q.shape())));
        }
        Ok(())
    }

    pub fn state_cost(&self, x: &DVector<f64>) -> f64 {
        (x.transpose() * &self.q * x)[(0, 0)]
    }
}

/// Uniform `k × k` grid over the square `[-a, a]²`, generalised to `n` dimensions.
pub fn grid_points(n: usize, per_axis: usize, half_width: f64) -> Vec<DVector<f64>> {
    let per_axis = per_axis.max(1);
    let coord = |k: usize| {
        if per_axis == 1 {
            0.0
        } else {
            -half_width + 2.0 * half_width * k as f64 / (per_axis - 1) as f64
        }
    };
    (0..per_axis.pow(n as u32))
        .map(|mut idx| {
            // first coordinate varies slowest
            let mut p = DVector::zeros(n);
            for i in (0..n).rev() {
                p[i] = coord(idx % per_axis);
                idx /= per_axis;
            }
            p
        })
        .collect()
}

/// `U(u) = 2 Σ r_k ū [u_k atanh(u_k/ū) + (ū/2) ln(1 − u_k²/ū²)]`, defined for `|u_k| < ū`.
pub fn u_penalty(r_u: &DVector<f64>, u_bar: f64, u: &DVector<f64>) -> Result<f64> {
    ensure_dim("input", u.len(), r_u.len())?;
    let mut total = 0.0;
    for (&uk, &rk) in u.iter().zip(r_u.iter()) {
        if !(uk.abs() < u_bar) {
            return Err(Error::PenaltyDomain { value: uk.abs(), u_bar });
        }
        let s = uk / u_bar;
        total += 2.0 * rk * u_bar * (uk * s.atanh() + 0.5 * u_bar * (-s * s).ln_1p());
    }
    Ok(total)
}

/// `U(−ū tanh D)` written through `D`, valid even where `tanh D` rounds to ±1.
pub fn penalty_from_preactivation(r_u: &DVector<f64>, u_bar: f64, d: &DVector<f64>) -> f64 {
    d.iter()
        .zip(r_u.iter())
        .map(|(&dk, &rk)| {
            let a = dk.abs();
            let core = if a < 1e-2 {
                let a2 = a * a;
                a2 * (0.5 - a2 * (0.25 - a2 / 9.0))
            } else {
                a * a.tanh() - (a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2)
            };
            2.0 * rk * u_bar * u_bar * core
        })
        .sum()
}

/// Everything the policy and Bellman error need at one augmented point.
#[derive(Debug, Clone)]
pub struct PointEval {
    pub phi_jac: DMatrix<f64>,
    pub barrier: f64,
    pub grad_v: DVector<f64>,
    pub big_f: DVector<f64>,
    pub big_g: DMatrix<f64>,
    pub d: DVector<f64>,
    pub u: DVector<f64>,
    pub clamped: bool,
}

/// One extrapolation point's contribution to the update laws.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtrapolationTerm {
    pub omega: DVector<f64>,
    pub rho: f64,
    pub delta: f64,
    pub clamped: bool,
}

/// Borrowed view of everything the critic computations depend on.
#[derive(Debug, Clone, Copy)]
pub struct Critic<'a> {
    pub model: &'a SystemModel,
    pub basis: &'a dyn Basis,
    pub barrier: &'a CostBarrier,
    pub config: &'a LearningConfig,
    pub alpha: f64,
}

impl<'a> Critic<'a> {
    /// Evaluates policy ingredients; with `clamp`, out-of-set points use the barrier floor.
    pub fn evaluate(&self, zeta: &AugmentedState, w: &DVector<f64>, clamp: bool) -> Result<PointEval> {
        ensure_dim("critic weights", w.len(), self.basis.len())?;
        let z = zeta.to_vector();
        ensure_dim("augmented state", z.len(), self.basis.input_dim())?;
        let phi_jac = self.basis.jacobian(&z);
        let clamped = clamp && self.barrier.mode != crate::safety::BarrierMode::Off && self.barrier.h_r(zeta) < self.barrier.floor;
        let (barrier, grad_b) = self.barrier.eval(zeta, clamp)?;
        let grad_v = phi_jac.tr_mul(w) + grad_b;
        let (big_f, big_g) = self.model.augmented_parts(zeta, self.alpha)?;
        let u_bar = self.model.u_bar;
        let gtv = big_g.tr_mul(&grad_v);
        let d = DVector::from_iterator(
            gtv.len(),
            gtv.iter().zip(self.config.r_u.iter()).map(|(g, r)| g / (r * 2.0 * u_bar)),
        );
        let u = d.map(|dk| -u_bar * dk.tanh());
        Ok(PointEval { phi_jac, barrier, grad_v, big_f, big_g, d, u, clamped })
    }

    pub fn v_hat(&self, zeta: &AugmentedState, w: &DVector<f64>) -> Result<f64> {
        ensure_dim("critic weights", w.len(), self.basis.len())?;
        let (b, _) = self.barrier.eval(zeta, false)?;
        Ok(w.dot(&self.basis.phi(&zeta.to_vector())) + b)
    }

    /// `û = −ū tanh(D̂)`.
    pub fn u_hat(&self, zeta: &AugmentedState, w: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.evaluate(zeta, w, false)?.u)
    }

    fn delta_of(&self, zeta: &AugmentedState, e: &PointEval) -> (DVector<f64>, f64) {
        let zdot = &e.big_f + &e.big_g * &e.u;
        let penalty = penalty_from_preactivation(&self.config.r_u, self.model.u_bar, &e.d);
        let delta = e.grad_v.dot(&zdot) + self.config.state_cost(&zeta.x) + penalty + e.barrier;
        (zdot, delta)
    }

    /// `δ̂ = ∇V̂·(F + Gû) + Q̄ + U(û) + B_r`.
    pub fn bellman_error(&self, zeta: &AugmentedState, w: &DVector<f64>) -> Result<f64> {
        let e = self.evaluate(zeta, w, false)?;
        Ok(self.delta_of(zeta, &e).1)
    }

    /// Regressors, normalisers and Bellman errors at every extrapolation point with the live ξ.
    pub fn extrapolation_terms(&self, xi_now: f64, w: &DVector<f64>) -> Result<Vec<ExtrapolationTerm>> {
        self.config
            .points
            .iter()
            .map(|p| {
                let zeta = AugmentedState { x: p.clone(), xi: xi_now };
                let e = self.evaluate(&zeta, w, true)?;
                let (zdot, delta) = self.delta_of(&zeta, &e);
                let omega = &e.phi_jac * zdot;
                let rho = 1.0 + self.config.gamma_c * omega.norm_squared();
                Ok(ExtrapolationTerm { omega, rho, delta, clamped: e.clamped })
            })
            .collect()
    }
}

/// `(Ẇ̂_c, Γ̇)` from the extrapolation terms.
pub fn critic_derivatives(
    terms: &[ExtrapolationTerm],
    gamma: &DMatrix<f64>,
    k_c: f64,
    beta: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let l = gamma.nrows();
    let mut drive = DVector::zeros(l);
    let mut outer = DMatrix::zeros(l, l);
    for t in terms {
        let nv = &t.omega / t.rho;
        drive.axpy(t.delta, &nv, 1.0);
        outer.ger(1.0, &nv, &nv, 1.0);
    }
    let scale = k_c / terms.len().max(1) as f64;
    let w_dot = -(gamma * drive) * scale;
    let gamma_dot = gamma * beta - gamma * outer * gamma * scale;
    (w_dot, gamma_dot)
}

/// `λmin((1/N) Σ ω_k ω_kᵀ / ρ_k²)`.
pub fn excitation_min_eig(terms: &[ExtrapolationTerm]) -> f64 {
    let Some(first) = terms.first() else { return 0.0 };
    let l = first.omega.len();
    let mut s = DMatrix::zeros(l, l);
    for t in terms {
        let nv = &t.omega / t.rho;
        s.ger(1.0 / terms.len() as f64, &nv, &nv, 1.0);
    }
    sym_eigen_range(&s).0
}

/// `max_k ‖ω_k/ρ_k‖`.
pub fn max_normalized_regressor(terms: &[ExtrapolationTerm]) -> f64 {
    terms.iter().map(|t| t.omega.norm() / t.rho).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DomainSet;
    use crate::safety::{BarrierMode, BarrierShape, SafetySpec};

    fn v(s: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(s)
    }

    fn setup(mode: BarrierMode, u_bar: f64) -> (SystemModel, QuadraticBasis, CostBarrier, LearningConfig) {
        let model = SystemModel::benchmark(u_bar, DomainSet::symmetric_box(2, 3.0)).unwrap();
        let barrier = CostBarrier {
            spec: SafetySpec { shape: BarrierShape::ParabolicSet, ell: 0.1, kappa: 0.01 },
            mode,
            floor: 1e-6,
        };
        let config = LearningConfig {
            k_c: 5.0,
            gamma_c: 1.0,
            beta: 0.01,
            points: grid_points(2, 10, 0.5),
            r_u: v(&[1.0]),
            q: DMatrix::identity(2, 2),
        };
        (model, QuadraticBasis::new(2), barrier, config)
    }

    #[test]
    fn basis_order_and_origin() {
        let b = QuadraticBasis::new(2);
        assert_eq!(b.labels(), ["x1^2", "x1*x2", "x2^2", "x1*xi", "x2*xi", "xi^2"]);
        let z = v(&[2.0, 3.0, 5.0]);
        assert_eq!(b.phi(&z), v(&[4.0, 6.0, 9.0, 10.0, 15.0, 25.0]));
        let o = v(&[0.0, 0.0, 0.0]);
        assert_eq!(b.phi(&o).amax(), 0.0);
        assert_eq!(b.jacobian(&o).amax(), 0.0);
    }

    #[test]
    fn grid_layout() {
        let g = grid_points(2, 10, 0.5);
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], v(&[-0.5, -0.5]));
        assert_eq!(g[1], v(&[-0.5, -0.5 + 1.0 / 9.0]));
        assert_eq!(g[99], v(&[0.5, 0.5]));
    }

    #[test]
    fn penalty_basics() {
        let r = v(&[1.0]);
        assert_eq!(u_penalty(&r, 10.0, &v(&[0.0])).unwrap(), 0.0);
        let a = u_penalty(&r, 10.0, &v(&[3.7])).unwrap();
        let b = u_penalty(&r, 10.0, &v(&[-3.7])).unwrap();
        assert!((a - b).abs() < 1e-14);
        assert!(matches!(u_penalty(&r, 10.0, &v(&[10.0])), Err(Error::PenaltyDomain { .. })));
    }

    #[test]
    fn stable_penalty_agrees_with_closed_form() {
        let r = v(&[1.7]);
        for d in [-2.0, -0.3, 0.0, 0.01, 1.5] {
            let u = v(&[-10.0 * f64::tanh(d)]);
            let direct = u_penalty(&r, 10.0, &u).unwrap();
            let via_d = penalty_from_preactivation(&r, 10.0, &v(&[d]));
            assert!((direct - via_d).abs() < 1e-10 * direct.abs().max(1.0), "D = {d}");
        }
        assert!(penalty_from_preactivation(&r, 10.0, &v(&[400.0])).is_finite());
    }

    #[test]
    fn value_and_policy_vanish_at_origin() {
        let (model, basis, barrier, config) = setup(BarrierMode::Robust, 10.0);
        let critic = Critic { model: &model, basis: &basis, barrier: &barrier, config: &config, alpha: 2.0 };
        let w = v(&[0.5, 1.0, 0.8, 0.1, 0.1, 0.1]);
        let o = AugmentedState::origin(2);
        assert_eq!(critic.v_hat(&o, &w).unwrap(), 0.0);
        assert_eq!(critic.u_hat(&o, &w).unwrap(), v(&[0.0]));
        assert_eq!(critic.bellman_error(&o, &w).unwrap(), 0.0);
    }

    #[test]
    fn value_is_affine_in_weights() {
        let (model, basis, barrier, config) = setup(BarrierMode::Robust, 10.0);
        let critic = Critic { model: &model, basis: &basis, barrier: &barrier, config: &config, alpha: 2.0 };
        let z = AugmentedState::new(v(&[0.2, -0.4]), 0.7).unwrap();
        let a = v(&[0.5, 1.0, 0.8, 0.1, 0.1, 0.1]);
        let b = v(&[-0.2, 0.3, 0.0, 1.0, 0.0, -0.5]);
        let zero = DVector::zeros(6);
        let bz = critic.v_hat(&z, &zero).unwrap();
        assert_eq!(bz, barrier.spec.barrier(&z).unwrap());
        let lhs = critic.v_hat(&z, &(&a + &b)).unwrap();
        let rhs = critic.v_hat(&z, &a).unwrap() + b.dot(&basis.phi(&z.to_vector()));
        assert!((lhs - rhs).abs() < 1e-13);
    }

    #[test]
    fn unconstrained_limit_policy() {
        let (model, basis, barrier, config) = setup(BarrierMode::Off, 100.0);
        let critic = Critic { model: &model, basis: &basis, barrier: &barrier, config: &config, alpha: 2.0 };
        let w = v(&[0.5, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let u = critic.u_hat(&AugmentedState::new(v(&[0.0, 1.0]), 0.0).unwrap(), &w).unwrap();
        assert!((u[0] - -100.0 * (0.03f64).tanh()).abs() < 1e-12);
        assert!((u[0] + 3.0).abs() < 3e-3);
    }

    #[test]
    fn bellman_error_at_unit_state() {
        // Ŵ = 0: ∇V̂ = ∇B_r, so D̂ = g·∂B/∂x₂/(2ū) = 0 because ∂h/∂x₂ = 0 at x₂ = 0
        let (model, basis, barrier, config) = setup(BarrierMode::Robust, 10.0);
        let critic = Critic { model: &model, basis: &basis, barrier: &barrier, config: &config, alpha: 2.0 };
        let z = AugmentedState::new(v(&[0.5, 0.0]), 0.0).unwrap();
        let delta = critic.bellman_error(&z, &DVector::zeros(6)).unwrap();
        let (kappa, h) = (0.01f64, 0.5f64);
        let b = (1.0 / (kappa * h)).ln_1p() - (1.0f64 / kappa).ln_1p();
        let db_dh = -kappa / (kappa * h * (kappa * h + 1.0));
        // ∇B·F with ∂h/∂x₁ = −1, f₁ = −0.5
        let grad_b_x1 = 2.0 * b * db_dh * -1.0;
        let oracle = grad_b_x1 * -0.5 + 0.25 + b * b;
        assert!((delta - oracle).abs() < 1e-12, "{delta} vs {oracle}");
    }

    #[test]
    fn bellman_error_vanishes_for_known_solution() {
        let (model, basis, barrier, config) = setup(BarrierMode::Off, 1e8);
        let critic = Critic { model: &model, basis: &basis, barrier: &barrier, config: &config, alpha: 2.0 };
        let w = v(&[0.5, 0.0, 1.0, 0.0, 0.0, 0.0]);
        for p in grid_points(2, 11, 1.0) {
            let d = critic.bellman_error(&AugmentedState { x: p, xi: 0.0 }, &w).unwrap();
            assert!(d.abs() <= 1e-9, "{d}");
        }
    }

    #[test]
    fn rho_at_least_one_and_zero_policy_regressor() {
        let (model, basis, barrier, config) = setup(BarrierMode::Robust, 10.0);
        let critic = Critic { model: &model, basis: &basis, barrier: &barrier, config: &config, alpha: 2.0 };
        let terms = critic.extrapolation_terms(1.0, &DVector::zeros(6)).unwrap();
        assert_eq!(terms.len(), 100);
        assert!(terms.iter().all(|t| t.rho >= 1.0));

        let off = CostBarrier { mode: BarrierMode::Off, ..barrier.clone() };
        let critic = Critic { barrier: &off, ..critic };
        let terms = critic.extrapolation_terms(0.3, &DVector::zeros(6)).unwrap();
        for (t, p) in terms.iter().zip(&config.points) {
            let z = AugmentedState { x: p.clone(), xi: 0.3 };
            let (f, _) = model.augmented_parts(&z, 2.0).unwrap();
            let expect = basis.jacobian(&z.to_vector()) * f;
            assert!((&t.omega - expect).amax() < 1e-14);
        }
    }

    #[test]
    fn derivative_examples() {
        let gamma = DMatrix::from_element(1, 1, 2.0);
        let t = ExtrapolationTerm { omega: v(&[0.5]), rho: 1.25, delta: 3.0, clamped: false };
        let (wd, gd) = critic_derivatives(std::slice::from_ref(&t), &gamma, 5.0, 0.0);
        assert!((wd[0] - -5.0 * 2.0 * 0.5 * 3.0 / 1.25).abs() < 1e-14);
        assert!((gd[(0, 0)] - -5.0 * 4.0 * 0.25 / 1.5625).abs() < 1e-14);

        let zero = ExtrapolationTerm { delta: 0.0, ..t };
        let (wd, _) = critic_derivatives(&[zero], &gamma, 5.0, 0.01);
        assert_eq!(wd[0], 0.0);
    }
}

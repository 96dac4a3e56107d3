//! Projection-based nonlinear observer and its exponential error envelope.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{all_finite_vec, max_asymmetry, spectral_norm, sym_eigen_range};
use crate::model::{DomainSet, SystemModel};

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverGains {
    pub p: DMatrix<f64>,
    pub l1: DMatrix<f64>,
    pub l2: DMatrix<f64>,
    pub l3: DMatrix<f64>,
    /// `P·l₃`, the variable the LMI is linear in.
    pub r_lmi: DMatrix<f64>,
    pub alpha: f64,
    pub eps0: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `ξ(0) = sqrt(λmax(P)/λmin(P))·ε₀`.
    pub chi: f64,
}

impl ObserverGains {
    pub fn new(
        p: DMatrix<f64>,
        l1: DMatrix<f64>,
        l2: DMatrix<f64>,
        l3: DMatrix<f64>,
        alpha: f64,
        eps0: f64,
    ) -> Result<Self> {
        let n = p.nrows();
        if p.ncols() != n || n == 0 {
            return Err(Error::Dimension(format!("P must be square, got {:?}", p.shape())));
        }
        let q = l1.ncols();
        for (name, l) in [("l1", &l1), ("l2", &l2), ("l3", &l3)] {
            if l.shape() != (n, q) {
                return Err(Error::Dimension(format!("{name} must be {n}x{q}, got {:?}", l.shape())));
            }
        }
        if max_asymmetry(&p) > 1e-12 * p.amax().max(1.0) {
            return Err(Error::InvalidGains("P must be symmetric".into()));
        }
        let (lambda_min, lambda_max) = sym_eigen_range(&p);
        if !(lambda_min > 0.0) {
            return Err(Error::InvalidGains(format!("P must be positive definite, λmin = {lambda_min}")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidGains(format!("alpha must be positive, got {alpha}")));
        }
        if !(eps0 > 0.0 && eps0.is_finite()) {
            return Err(Error::InvalidGains(format!("eps0 must be positive, got {eps0}")));
        }
        let r_lmi = &p * &l3;
        let chi = (lambda_max / lambda_min).sqrt() * eps0;
        Ok(Self { p, l1, l2, l3, r_lmi, alpha, eps0, lambda_min, lambda_max, chi })
    }

    /// Recovers `l₃ = P⁻¹R_lmi` from the LMI variables.
    pub fn from_lmi(
        p: DMatrix<f64>,
        r_lmi: DMatrix<f64>,
        l1: DMatrix<f64>,
        l2: DMatrix<f64>,
        alpha: f64,
        eps0: f64,
    ) -> Result<Self> {
        let l3 = p
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidGains("P must be positive definite".into()))?
            .solve(&r_lmi);
        let mut gains = Self::new(p, l1, l2, l3, alpha, eps0)?;
        gains.r_lmi = r_lmi;
        Ok(gains)
    }

    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    /// `(‖l₁C‖, ‖l₂C‖)` in the induced 2-norm.
    pub fn norms(&self, c: &DMatrix<f64>) -> (f64, f64) {
        (spectral_norm(&(&self.l1 * c)), spectral_norm(&(&self.l2 * c)))
    }

    pub fn check_against(&self, model: &SystemModel) -> Result<()> {
        if self.n() != model.n() || self.l1.ncols() != model.q() {
            return Err(Error::Dimension(format!(
                "gains are {}x{} but the model has n = {}, q = {}",
                self.n(),
                self.l1.ncols(),
                model.n(),
                model.q()
            )));
        }
        let (a, b) = self.norms(&model.c);
        if a > 1.0 || b > 1.0 {
            return Err(Error::InvalidGains(format!("need ‖l1·C‖ ≤ 1 and ‖l2·C‖ ≤ 1, got {a:.6} and {b:.6}")));
        }
        Ok(())
    }
}

pub fn project(domain: &DomainSet, x_hat: &DVector<f64>) -> DVector<f64> {
    domain.project(x_hat)
}

/// Estimate derivative driven by the innovation `y − C·pr(x̂)`.
pub fn observer_rhs(
    model: &SystemModel,
    gains: &ObserverGains,
    x_hat: &DVector<f64>,
    y: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    let fail = || Error::ObserverEvaluation { x_hat: x_hat.iter().copied().collect() };
    if !all_finite_vec(x_hat) || !all_finite_vec(y) {
        return Err(fail());
    }
    let p = project(&model.domain, x_hat);
    let innovation = y - &model.c * &p;
    let xf = &p + &gains.l1 * &innovation;
    let xg = &p + &gains.l2 * &innovation;
    let out = model.drift(&xf).map_err(|_| fail())?
        + model.effectiveness(&xg).map_err(|_| fail())? * u
        + &gains.l3 * &innovation;
    if all_finite_vec(&out) {
        Ok(out)
    } else {
        Err(fail())
    }
}

/// Robustifying term `ξ(t) = χ·e^{−αt}`.
pub fn xi(gains: &ObserverGains, t: f64) -> f64 {
    gains.chi * (-gains.alpha * t).exp()
}

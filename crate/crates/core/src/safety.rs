//! Barrier functions, their robustified and recentered forms, and trajectory safety checks.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AugmentedState, DomainSet};
use crate::observer::{xi, ObserverGains};

/// Safe set `{x : h(x) ≥ 0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BarrierShape {
    /// `h(x) = −x₂² − x₁ + 1`.
    ParabolicSet,
    /// `h(x) = ‖x − z‖² − r²`.
    Obstacle { center: Vec<f64>, radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafetySpec {
    pub shape: BarrierShape,
    /// Lipschitz constant of `h` used to robustify against estimation error.
    pub ell: f64,
    pub kappa: f64,
}

impl SafetySpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::Config(format!("kappa must be positive, got {}", self.kappa)));
        }
        if !(self.ell > 0.0 && self.ell.is_finite()) {
            return Err(Error::Config(format!("ell must be positive, got {}", self.ell)));
        }
        match &self.shape {
            BarrierShape::ParabolicSet if n != 2 => {
                return Err(Error::Dimension(format!("parabolic safe set is two-dimensional, model has n = {n}")))
            }
            BarrierShape::Obstacle { center, radius } => {
                if center.len() != n {
                    return Err(Error::Dimension(format!("obstacle center has {} entries, need {n}", center.len())));
                }
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::Config(format!("obstacle radius must be positive, got {radius}")));
                }
            }
            _ => {}
        }
        let h0 = self.h(&DVector::zeros(n));
        if !(h0 > 0.0) {
            return Err(Error::Config(format!("origin must lie strictly inside the safe set, h(0) = {h0}")));
        }
        Ok(())
    }

    pub fn h(&self, x: &DVector<f64>) -> f64 {
        match &self.shape {
            BarrierShape::ParabolicSet => -x[1] * x[1] - x[0] + 1.0,
            BarrierShape::Obstacle { center, radius } => {
                x.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum::<f64>() - radius * radius
            }
        }
    }

    pub fn grad_h(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.shape {
            BarrierShape::ParabolicSet => DVector::from_vec(vec![-1.0, -2.0 * x[1]]),
            BarrierShape::Obstacle { center, .. } => {
                DVector::from_iterator(x.len(), x.iter().zip(center).map(|(a, c)| 2.0 * (a - c)))
            }
        }
    }

    /// Distance from `x` to the obstacle center, if the set is an obstacle exterior.
    pub fn obstacle_distance(&self, x: &DVector<f64>) -> Option<f64> {
        match &self.shape {
            BarrierShape::Obstacle { center, .. } => {
                Some(x.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt())
            }
            BarrierShape::ParabolicSet => None,
        }
    }

    /// `h(x) − ℓξ` at an augmented point.
    pub fn h_r(&self, zeta: &AugmentedState) -> f64 {
        self.h(&zeta.x) - self.ell * zeta.xi
    }

    pub fn grad_h_r(&self, zeta: &AugmentedState) -> DVector<f64> {
        let g = self.grad_h(&zeta.x);
        let n = g.len();
        DVector::from_fn(n + 1, |i, _| if i < n { g[i] } else { -self.ell })
    }

    /// `b_r = −ln(κh_r/(κh_r + 1))` as a function of `h_r > 0`.
    pub fn b_r(&self, h_r: f64) -> f64 {
        (1.0 / (self.kappa * h_r)).ln_1p()
    }

    fn db_dh(&self, h_r: f64) -> f64 {
        let kh = self.kappa * h_r;
        -self.kappa / (kh * (kh + 1.0))
    }

    /// Recentering constant `b_r` at `x = 0`, `ξ = 0`.
    pub fn b_r0(&self, n: usize) -> f64 {
        self.b_r(self.h(&DVector::zeros(n)))
    }

    pub fn barrier(&self, zeta: &AugmentedState) -> Result<f64> {
        let hr = self.h_r(zeta);
        if !(hr > 0.0) {
            return Err(Error::BarrierDomain { h_r: hr });
        }
        Ok((self.b_r(hr) - self.b_r0(zeta.x.len())).powi(2))
    }

    pub fn grad_barrier(&self, zeta: &AugmentedState) -> Result<DVector<f64>> {
        let hr = self.h_r(zeta);
        if !(hr > 0.0) {
            return Err(Error::BarrierDomain { h_r: hr });
        }
        let scale = 2.0 * (self.b_r(hr) - self.b_r0(zeta.x.len())) * self.db_dh(hr);
        Ok(self.grad_h_r(zeta) * scale)
    }
}

/// `h(x̂) − ℓξ(t)`.
pub fn h_r_eval(spec: &SafetySpec, gains: &ObserverGains, x_hat: &DVector<f64>, t: f64) -> f64 {
    spec.h(x_hat) - spec.ell * xi(gains, t)
}

/// `B_r(ζ) = (b_r(ζ) − b_r(0))²`.
pub fn b_r_eval(spec: &SafetySpec, zeta: &AugmentedState) -> Result<f64> {
    spec.barrier(zeta)
}

pub fn grad_b_r(spec: &SafetySpec, zeta: &AugmentedState) -> Result<DVector<f64>> {
    spec.grad_barrier(zeta)
}

/// How the barrier enters the cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierMode {
    /// `h_r = h − ℓξ`.
    Robust,
    /// `h` alone; ξ is ignored by the barrier.
    Nominal,
    Off,
}

/// Barrier term of the cost with an optional floor for off-trajectory evaluation points.
#[derive(Debug, Clone, PartialEq)]
pub struct CostBarrier {
    pub spec: SafetySpec,
    pub mode: BarrierMode,
    /// Floor applied to `h_r` at clamped points; their gradient is zero.
    pub floor: f64,
}

impl CostBarrier {
    fn effective(&self, zeta: &AugmentedState) -> AugmentedState {
        match self.mode {
            BarrierMode::Nominal => AugmentedState { x: zeta.x.clone(), xi: 0.0 },
            _ => zeta.clone(),
        }
    }

    /// Value of `h_r` the barrier sees.
    pub fn h_r(&self, zeta: &AugmentedState) -> f64 {
        self.spec.h_r(&self.effective(zeta))
    }

    /// Returns `(B, ∇_ζ B)`. With `clamp`, points below the floor evaluate at the floor with zero gradient.
    pub fn eval(&self, zeta: &AugmentedState, clamp: bool) -> Result<(f64, DVector<f64>)> {
        let dim = zeta.x.len() + 1;
        if self.mode == BarrierMode::Off {
            return Ok((0.0, DVector::zeros(dim)));
        }
        let eff = self.effective(zeta);
        let hr = self.spec.h_r(&eff);
        if clamp && hr < self.floor {
            let b = (self.spec.b_r(self.floor) - self.spec.b_r0(zeta.x.len())).powi(2);
            return Ok((b, DVector::zeros(dim)));
        }
        let value = self.spec.barrier(&eff)?;
        let mut grad = self.spec.grad_barrier(&eff)?;
        if self.mode == BarrierMode::Nominal {
            grad[dim - 1] = 0.0;
        }
        Ok((value, grad))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyReport {
    pub min_h: f64,
    pub min_h_t: f64,
    pub first_violation_t: Option<f64>,
    pub violation_steps: usize,
    pub min_h_r: f64,
    pub first_h_r_violation_t: Option<f64>,
    pub min_obstacle_distance: Option<f64>,
    pub breached: bool,
}

/// Scans a logged trajectory for `h(x) < 0` and `h(x̂) − ℓξ < 0`.
pub fn monitor_safety(
    spec: &SafetySpec,
    t: &[f64],
    x: &[DVector<f64>],
    x_hat: &[DVector<f64>],
    xi: &[f64],
) -> SafetyReport {
    let mut report = SafetyReport {
        min_h: f64::INFINITY,
        min_h_t: 0.0,
        first_violation_t: None,
        violation_steps: 0,
        min_h_r: f64::INFINITY,
        first_h_r_violation_t: None,
        min_obstacle_distance: None,
        breached: false,
    };
    for k in 0..t.len() {
        let h = spec.h(&x[k]);
        if h < report.min_h {
            report.min_h = h;
            report.min_h_t = t[k];
        }
        if h < 0.0 {
            report.violation_steps += 1;
            report.first_violation_t.get_or_insert(t[k]);
        }
        let hr = spec.h(&x_hat[k]) - spec.ell * xi[k];
        report.min_h_r = report.min_h_r.min(hr);
        if hr < 0.0 {
            report.first_h_r_violation_t.get_or_insert(t[k]);
        }
        if let Some(d) = spec.obstacle_distance(&x[k]) {
            report.min_obstacle_distance = Some(report.min_obstacle_distance.map_or(d, |m: f64| m.min(d)));
        }
    }
    report.breached = report.violation_steps > 0;
    report
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzAudit {
    pub ell: f64,
    pub sup_grad_norm: f64,
    pub argmax: Vec<f64>,
    pub ok: bool,
}

/// Estimates `sup ‖∇h‖` over a grid on the domain and compares it with `ℓ`.
pub fn lipschitz_audit(spec: &SafetySpec, domain: &DomainSet, per_axis: usize) -> LipschitzAudit {
    let mut sup = 0.0;
    let mut argmax = vec![0.0; domain.dim()];
    for x in domain.sample_grid(per_axis) {
        let g = spec.grad_h(&x).norm();
        if g > sup {
            sup = g;
            argmax = x.iter().copied().collect();
        }
    }
    LipschitzAudit { ell: spec.ell, sup_grad_norm: sup, argmax, ok: sup <= spec.ell }
}

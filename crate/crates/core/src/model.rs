//! Plant description: control-affine dynamics, Jacobian bounds and the state domain.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::linalg::{all_finite_mat, all_finite_vec};

/// Control-affine vector field `ẋ = f(x) + g(x)u`.
pub trait Dynamics: Send + Sync + Debug {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn drift(&self, x: &DVector<f64>) -> DVector<f64>;
    /// `n × m` input matrix.
    fn effectiveness(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

/// Two-state benchmark with a known quadratic optimal value `0.5x₁² + x₂²`
/// under `Q = I`, `R = 1`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Benchmark2d;

impl Benchmark2d {
    pub const REGISTRY_KEY: &'static str = "vamvoudakis2d";

    /// Element-wise bounds on `∂f/∂x` and `∂(g·u)/∂x` over `|x_i| ≤ extent[i]`, `|u| ≤ u_bar`.
    pub fn jacobian_bounds(extent: [f64; 2], u_bar: f64) -> JacobianBounds {
        let (a1, a2) = (extent[0].abs(), extent[1].abs());
        let s_max = 2.0 * a1;

        // sup |(cos s + 2) sin s| over |s| ≤ s_max; interior maximum where cos s = (√3 − 1)/2
        let s_star = ((3f64.sqrt() - 1.0) / 2.0).acos();
        let q = |s: f64| (s.cos() + 2.0) * s.sin();
        let c_star = if s_max >= s_star { q(s_star) } else { q(s_max) };

        let cos_min = if s_max >= std::f64::consts::PI { -1.0 } else { s_max.cos() };
        let d22_lo = 0.5 * ((cos_min + 2.0).powi(2) - 1.0);
        let d22_hi = 4.0;
        let d21 = 2.0 * a2 * c_star;

        let sin_max = if s_max >= std::f64::consts::FRAC_PI_2 { 1.0 } else { s_max.sin() };
        let g21 = 2.0 * u_bar * sin_max;

        JacobianBounds {
            kf1: DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, -0.5 - d21, d22_lo]),
            kf2: DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, -0.5 + d21, d22_hi]),
            kg1: DMatrix::from_row_slice(2, 2, &[0.0, 0.0, -g21, 0.0]),
            kg2: DMatrix::from_row_slice(2, 2, &[0.0, 0.0, g21, 0.0]),
        }
    }
}

impl Dynamics for Benchmark2d {
    fn state_dim(&self) -> usize {
        2
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        let (x1, x2) = (x[0], x[1]);
        let c = (2.0 * x1).cos() + 2.0;
        DVector::from_vec(vec![-x1 + x2, -0.5 * x1 - 0.5 * x2 * (1.0 - c * c)])
    }

    fn effectiveness(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(2, 1, &[0.0, (2.0 * x[0]).cos() + 2.0])
    }
}

/// Looks up a built-in plant by its registry key.
pub fn registry(name: &str) -> Option<Arc<dyn Dynamics>> {
    match name {
        Benchmark2d::REGISTRY_KEY => Some(Arc::new(Benchmark2d)),
        _ => None,
    }
}

/// Element-wise Jacobian bounds `Kf1 ≤ ∂f/∂x ≤ Kf2`, `Kg1 ≤ ∂(g·u)/∂x ≤ Kg2`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianBounds {
    pub kf1: DMatrix<f64>,
    pub kf2: DMatrix<f64>,
    pub kg1: DMatrix<f64>,
    pub kg2: DMatrix<f64>,
}

impl JacobianBounds {
    fn check(&self, n: usize) -> Result<()> {
        for (name, m) in [("Kf1", &self.kf1), ("Kf2", &self.kf2), ("Kg1", &self.kg1), ("Kg2", &self.kg2)] {
            if m.shape() != (n, n) {
                return Err(Error::Dimension(format!("{name} must be {n}x{n}, got {:?}", m.shape())));
            }
            if !all_finite_mat(m) {
                return Err(Error::InvalidModel(format!("{name} has non-finite entries")));
            }
        }
        let ordered = |lo: &DMatrix<f64>, hi: &DMatrix<f64>| lo.iter().zip(hi.iter()).all(|(a, b)| a <= b);
        if !ordered(&self.kf1, &self.kf2) {
            return Err(Error::InvalidModel("Kf1 must not exceed Kf2 element-wise".into()));
        }
        if !ordered(&self.kg1, &self.kg2) {
            return Err(Error::InvalidModel("Kg1 must not exceed Kg2 element-wise".into()));
        }
        Ok(())
    }
}

/// Closed convex set with a closed-form Euclidean projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSet {
    Ball { center: Vec<f64>, radius: f64 },
    Box { center: Vec<f64>, half_widths: Vec<f64> },
}

impl DomainSet {
    /// Box `[-a, a]^n`.
    pub fn symmetric_box(n: usize, a: f64) -> Self {
        DomainSet::Box { center: vec![0.0; n], half_widths: vec![a; n] }
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainSet::Ball { center, .. } | DomainSet::Box { center, .. } => center.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DomainSet::Ball { center, radius } => {
                if !(radius.is_finite() && *radius > 0.0) || center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidModel(format!("ball domain needs a positive radius, got {radius}")));
                }
            }
            DomainSet::Box { center, half_widths } => {
                ensure_dim("box half-widths", half_widths.len(), center.len())?;
                if half_widths.iter().any(|w| !(w.is_finite() && *w > 0.0)) || center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidModel("box domain needs positive finite half-widths".into()));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        match self {
            DomainSet::Ball { center, radius } => {
                let d2: f64 = x.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum();
                d2 <= radius * radius
            }
            DomainSet::Box { center, half_widths } => x
                .iter()
                .zip(center.iter().zip(half_widths))
                .all(|(a, (c, w))| c - w <= *a && *a <= c + w),
        }
    }

    /// Nearest point of the set: radial scaling for a ball, per-coordinate clamp for a box.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            DomainSet::Ball { center, radius } => {
                let c = DVector::from_column_slice(center);
                let d = x - &c;
                let norm = d.norm();
                if self.contains(x) {
                    return x.clone();
                }
                // rounding can leave the scaled point a few ulps outside
                let mut scale = radius / norm;
                loop {
                    let p = &c + &d * scale;
                    if self.contains(&p) {
                        return p;
                    }
                    scale = scale.next_down();
                }
            }
            DomainSet::Box { center, half_widths } => DVector::from_iterator(
                x.len(),
                x.iter()
                    .zip(center.iter().zip(half_widths))
                    .map(|(a, (c, w))| a.clamp(c - w, c + w)),
            ),
        }
    }

    /// Per-coordinate `sup |x_i|` over the set.
    pub fn extent(&self) -> Vec<f64> {
        match self {
            DomainSet::Ball { center, radius } => center.iter().map(|c| c.abs() + radius).collect(),
            DomainSet::Box { center, half_widths } => {
                center.iter().zip(half_widths).map(|(c, w)| c.abs() + w).collect()
            }
        }
    }

    /// Uniform grid of `per_axis^n` points on the axis-aligned bounding box, restricted to the set.
    pub fn sample_grid(&self, per_axis: usize) -> Vec<DVector<f64>> {
        let n = self.dim();
        let (lo, hi): (Vec<f64>, Vec<f64>) = match self {
            DomainSet::Ball { center, radius } => {
                (center.iter().map(|c| c - radius).collect(), center.iter().map(|c| c + radius).collect())
            }
            DomainSet::Box { center, half_widths } => (
                center.iter().zip(half_widths).map(|(c, w)| c - w).collect(),
                center.iter().zip(half_widths).map(|(c, w)| c + w).collect(),
            ),
        };
        let per_axis = per_axis.max(2);
        let total = per_axis.pow(n as u32);
        let mut out = Vec::with_capacity(total);
        for mut idx in 0..total {
            let mut p = DVector::zeros(n);
            for i in 0..n {
                let k = idx % per_axis;
                idx /= per_axis;
                p[i] = lo[i] + (hi[i] - lo[i]) * k as f64 / (per_axis - 1) as f64;
            }
            if self.contains(&p) {
                out.push(p);
            }
        }
        out
    }
}

/// `ζ = [xᵀ, ξ]ᵀ`: a state (or estimate) with the robustifying term appended.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    pub x: DVector<f64>,
    pub xi: f64,
}

impl AugmentedState {
    pub fn new(x: DVector<f64>, xi: f64) -> Result<Self> {
        if !(xi >= 0.0 && xi.is_finite()) {
            return Err(Error::Dimension(format!("robustifying term must be finite and nonnegative, got {xi}")));
        }
        Ok(Self { x, xi })
    }

    pub fn origin(n: usize) -> Self {
        Self { x: DVector::zeros(n), xi: 0.0 }
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let n = self.x.len();
        DVector::from_fn(n + 1, |i, _| if i < n { self.x[i] } else { self.xi })
    }

    /// Splits an `(n+1)`-vector without the sign check on ξ.
    pub fn from_vector(z: &DVector<f64>) -> Self {
        let n = z.len() - 1;
        Self { x: z.rows(0, n).into_owned(), xi: z[n] }
    }
}

/// Plant, measurement and input data shared by every other module.
#[derive(Debug, Clone)]
pub struct SystemModel {
    pub dynamics: Arc<dyn Dynamics>,
    pub c: DMatrix<f64>,
    pub bounds: JacobianBounds,
    pub u_bar: f64,
    pub domain: DomainSet,
}

impl SystemModel {
    pub fn new(
        dynamics: Arc<dyn Dynamics>,
        c: DMatrix<f64>,
        bounds: JacobianBounds,
        u_bar: f64,
        domain: DomainSet,
    ) -> Result<Self> {
        let model = Self { dynamics, c, bounds, u_bar, domain };
        model.validate()?;
        Ok(model)
    }

    /// Benchmark plant measured through `y = x₂`, with bounds computed for the given domain.
    pub fn benchmark(u_bar: f64, domain: DomainSet) -> Result<Self> {
        let ext = domain.extent();
        ensure_dim("benchmark domain", ext.len(), 2)?;
        let bounds = Benchmark2d::jacobian_bounds([ext[0], ext[1]], u_bar);
        Self::new(Arc::new(Benchmark2d), DMatrix::from_row_slice(1, 2, &[0.0, 1.0]), bounds, u_bar, domain)
    }

    pub fn n(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn m(&self) -> usize {
        self.dynamics.input_dim()
    }

    pub fn q(&self) -> usize {
        self.c.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.n(), self.m());
        if n == 0 || m == 0 {
            return Err(Error::InvalidModel("state and input dimensions must be positive".into()));
        }
        if self.c.ncols() != n || self.c.nrows() == 0 {
            return Err(Error::Dimension(format!("C must be q x {n}, got {:?}", self.c.shape())));
        }
        if !(self.u_bar.is_finite() && self.u_bar > 0.0) {
            return Err(Error::InvalidModel(format!("u_bar must be positive, got {}", self.u_bar)));
        }
        self.bounds.check(n)?;
        self.domain.validate()?;
        ensure_dim("domain dimension", self.domain.dim(), n)?;

        let f0 = self.drift(&DVector::zeros(n))?;
        if f0.amax() > 1e-12 {
            return Err(Error::InvalidModel(format!("f(0) must vanish, got {:?}", f0.as_slice())));
        }
        for x in self.domain.sample_grid(5) {
            let g = self.effectiveness(&x)?;
            if g.shape() != (n, m) {
                return Err(Error::Dimension(format!("g(x) must be {n}x{m}, got {:?}", g.shape())));
            }
        }
        Ok(())
    }

    fn check_state(&self, x: &DVector<f64>) -> Result<()> {
        ensure_dim("state", x.len(), self.n())?;
        if !all_finite_vec(x) {
            return Err(Error::ModelEvaluation { x: x.iter().copied().collect() });
        }
        Ok(())
    }

    pub fn drift(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_state(x)?;
        let f = self.dynamics.drift(x);
        if f.len() != x.len() || !all_finite_vec(&f) {
            return Err(Error::ModelEvaluation { x: x.iter().copied().collect() });
        }
        Ok(f)
    }

    pub fn effectiveness(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_state(x)?;
        let g = self.dynamics.effectiveness(x);
        if !all_finite_mat(&g) {
            return Err(Error::ModelEvaluation { x: x.iter().copied().collect() });
        }
        Ok(g)
    }

    /// `f(x) + g(x)u`.
    pub fn vector_field(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_dim("input", u.len(), self.m())?;
        Ok(self.drift(x)? + self.effectiveness(x)? * u)
    }

    pub fn check_saturation(&self, u: &DVector<f64>) -> Result<()> {
        ensure_dim("input", u.len(), self.m())?;
        for (index, &value) in u.iter().enumerate() {
            if !(value.abs() <= self.u_bar) {
                return Err(Error::Saturation { index, value, u_bar: self.u_bar });
            }
        }
        Ok(())
    }

    /// `F(ζ) + G(ζ)u` with `F = [fᵀ, −αξ]ᵀ` and a zero last row in `G`.
    pub fn augmented_dynamics(&self, zeta: &AugmentedState, u: &DVector<f64>, alpha: f64) -> Result<DVector<f64>> {
        self.check_saturation(u)?;
        let xd = self.vector_field(&zeta.x, u)?;
        let n = self.n();
        Ok(DVector::from_fn(n + 1, |i, _| if i < n { xd[i] } else { -alpha * zeta.xi }))
    }

    /// Augmented drift `F(ζ)` and input matrix `G(ζ)`.
    pub fn augmented_parts(&self, zeta: &AugmentedState, alpha: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (n, m) = (self.n(), self.m());
        let f = self.drift(&zeta.x)?;
        let g = self.effectiveness(&zeta.x)?;
        let big_f = DVector::from_fn(n + 1, |i, _| if i < n { f[i] } else { -alpha * zeta.xi });
        let big_g = DMatrix::from_fn(n + 1, m, |i, j| if i < n { g[(i, j)] } else { 0.0 });
        Ok((big_f, big_g))
    }

    /// Samples the domain and checks finite-difference Jacobians against the bound matrices.
    pub fn audit_bounds(&self, per_axis: usize, tol: f64) -> Result<BoundsAudit> {
        let n = self.n();
        let m = self.m();
        let step = 1e-6;
        let mut report = BoundsAudit { samples: 0, max_excess: 0.0, violations: Vec::new() };

        // g·u is linear in u, so its Jacobian extremes occur at input-box vertices
        let vertices: Vec<DVector<f64>> = (0..(1usize << m))
            .map(|mask| DVector::from_fn(m, |k, _| if mask >> k & 1 == 1 { self.u_bar } else { -self.u_bar }))
            .collect();

        for x in self.domain.sample_grid(per_axis) {
            report.samples += 1;
            let mut jf = DMatrix::zeros(n, n);
            let mut jg: Vec<DMatrix<f64>> = vec![DMatrix::zeros(n, n); vertices.len()];
            for j in 0..n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += step;
                xm[j] -= step;
                let df = (self.drift(&xp)? - self.drift(&xm)?) / (2.0 * step);
                let dg = (self.effectiveness(&xp)? - self.effectiveness(&xm)?) / (2.0 * step);
                jf.set_column(j, &df);
                for (v, u) in vertices.iter().enumerate() {
                    jg[v].set_column(j, &(&dg * u));
                }
            }
            report.inspect(&x, "Kf", &jf, &self.bounds.kf1, &self.bounds.kf2, tol);
            for j in &jg {
                report.inspect(&x, "Kg", j, &self.bounds.kg1, &self.bounds.kg2, tol);
            }
        }
        Ok(report)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundViolation {
    pub x: Vec<f64>,
    pub matrix: &'static str,
    pub row: usize,
    pub col: usize,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsAudit {
    pub samples: usize,
    pub max_excess: f64,
    pub violations: Vec<BoundViolation>,
}

impl BoundsAudit {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    fn inspect(
        &mut self,
        x: &DVector<f64>,
        matrix: &'static str,
        jac: &DMatrix<f64>,
        lo: &DMatrix<f64>,
        hi: &DMatrix<f64>,
        tol: f64,
    ) {
        for r in 0..jac.nrows() {
            for c in 0..jac.ncols() {
                let v = jac[(r, c)];
                let excess = (lo[(r, c)] - v).max(v - hi[(r, c)]);
                self.max_excess = self.max_excess.max(excess);
                if excess > tol {
                    self.violations.push(BoundViolation {
                        x: x.iter().copied().collect(),
                        matrix,
                        row: r,
                        col: c,
                        value: v,
                        lower: lo[(r, c)],
                        upper: hi[(r, c)],
                    });
                }
            }
        }
    }
}

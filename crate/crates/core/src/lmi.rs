//! Observer LMI: block matrix assembly, vertex verification and a penalty search for gains.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{floor_eigenvalues, lambda_max, matrix_to_rows, spectral_norm, sym_eigenvalues, symmetrize};
use crate::model::{JacobianBounds, SystemModel};

pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaMode {
    ThetaIdentity,
    AllVertices,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmiProblem {
    /// `Kf1 + Kg1`.
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub bounds: JacobianBounds,
    pub alpha: f64,
    /// All `2^(n²)` `{0,1}` matrices.
    pub theta_vertices: Vec<DMatrix<f64>>,
}

impl LmiProblem {
    pub fn new(c: DMatrix<f64>, bounds: JacobianBounds, alpha: f64) -> Result<Self> {
        let n = bounds.kf1.nrows();
        if c.ncols() != n {
            return Err(Error::Dimension(format!("C has {} columns, bounds are {n}x{n}", c.ncols())));
        }
        if n * n >= usize::BITS as usize {
            return Err(Error::Dimension(format!("vertex enumeration is infeasible for n = {n}")));
        }
        let theta_vertices = (0..1usize << (n * n))
            .map(|mask| DMatrix::from_fn(n, n, |i, j| (mask >> (i * n + j) & 1) as f64))
            .collect();
        Ok(Self { a: &bounds.kf1 + &bounds.kg1, c, bounds, alpha, theta_vertices })
    }

    pub fn from_model(model: &SystemModel, alpha: f64) -> Result<Self> {
        Self::new(model.c.clone(), model.bounds.clone(), alpha)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn q(&self) -> usize {
        self.c.nrows()
    }

    /// The `2n × 2n` matrix `M(θ)`.
    pub fn assemble_m(
        &self,
        p: &DMatrix<f64>,
        r_lmi: &DMatrix<f64>,
        l1: &DMatrix<f64>,
        l2: &DMatrix<f64>,
        theta: &DMatrix<f64>,
    ) -> Result<DMatrix<f64>> {
        let (n, q) = (self.n(), self.q());
        let shapes = [("P", p, (n, n)), ("R_lmi", r_lmi, (n, q)), ("l1", l1, (n, q)), ("l2", l2, (n, q)), ("theta", theta, (n, n))];
        for (name, m, want) in shapes {
            if m.shape() != want {
                return Err(Error::Dimension(format!("{name} must be {}x{}, got {:?}", want.0, want.1, m.shape())));
            }
        }
        let a_t = &self.a * theta;
        let c_t = &self.c * theta;
        let tl = a_t.transpose() * p + p * &a_t - c_t.transpose() * r_lmi.transpose() - r_lmi * &c_t + p * (2.0 * self.alpha);
        let eye = DMatrix::<f64>::identity(n, n);
        let df = &self.bounds.kf2 - &self.bounds.kf1;
        let dg = &self.bounds.kg2 - &self.bounds.kg1;
        let od = p * std::f64::consts::SQRT_2
            + (&eye - l1 * &self.c).transpose() * df.transpose()
            + (&eye - l2 * &self.c).transpose() * dg.transpose();

        let mut m = DMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&tl);
        m.view_mut((0, n), (n, n)).copy_from(&od);
        m.view_mut((n, 0), (n, n)).copy_from(&od.transpose());
        m.view_mut((n, n), (n, n)).copy_from(&(-3.0 * eye));
        Ok(m)
    }

    fn thetas(&self, mode: ThetaMode) -> Vec<DMatrix<f64>> {
        match mode {
            ThetaMode::ThetaIdentity => vec![DMatrix::identity(self.n(), self.n())],
            ThetaMode::AllVertices => self.theta_vertices.clone(),
        }
    }

    pub fn verify(
        &self,
        p: &DMatrix<f64>,
        r_lmi: &DMatrix<f64>,
        l1: &DMatrix<f64>,
        l2: &DMatrix<f64>,
        mode: ThetaMode,
    ) -> Result<LmiCertificate> {
        let mut vertex_eigenvalues = Vec::new();
        let mut worst = (f64::NEG_INFINITY, DMatrix::identity(self.n(), self.n()));
        for theta in self.thetas(mode) {
            let m = self.assemble_m(p, r_lmi, l1, l2, &theta)?;
            let ev = *sym_eigenvalues(&m).last().unwrap_or(&f64::NAN);
            vertex_eigenvalues.push(ev);
            // NaN compares false, so keep it explicitly
            if ev > worst.0 || ev.is_nan() {
                worst = (ev, theta);
            }
        }
        let norm_l1c = spectral_norm(&(l1 * &self.c));
        let norm_l2c = spectral_norm(&(l2 * &self.c));
        let tolerance = DEFAULT_TOLERANCE;

        let mut reasons = Vec::new();
        if !(worst.0 < -tolerance) {
            reasons.push(format!("λmax(M) = {:.6e} is not below -{tolerance:e}", worst.0));
        }
        if !(norm_l1c <= 1.0) {
            reasons.push(format!("‖l1·C‖ = {norm_l1c:.6} exceeds 1"));
        }
        if !(norm_l2c <= 1.0) {
            reasons.push(format!("‖l2·C‖ = {norm_l2c:.6} exceeds 1"));
        }
        Ok(LmiCertificate {
            mode,
            feasible: reasons.is_empty(),
            max_eigenvalue: worst.0,
            worst_theta: matrix_to_rows(&worst.1),
            norm_l1c,
            norm_l2c,
            vertex_eigenvalues,
            tolerance,
            reasons,
        })
    }

    pub fn verify_both(&self, vars: &LmiVariables) -> Result<LmiReport> {
        Ok(LmiReport {
            theta_identity: self.verify(&vars.p, &vars.r_lmi, &vars.l1, &vars.l2, ThetaMode::ThetaIdentity)?,
            all_vertices: self.verify(&vars.p, &vars.r_lmi, &vars.l1, &vars.l2, ThetaMode::AllVertices)?,
        })
    }

    fn penalty(&self, vars: &LmiVariables, mode: ThetaMode, norm_weight: f64) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for theta in self.thetas(mode) {
            match self.assemble_m(&vars.p, &vars.r_lmi, &vars.l1, &vars.l2, &theta) {
                Ok(m) => worst = worst.max(lambda_max(&m)),
                Err(_) => return f64::INFINITY,
            }
        }
        let hinge = |x: f64| (x - 1.0).max(0.0);
        worst
            + norm_weight
                * (hinge(spectral_norm(&(&vars.l1 * &self.c))) + hinge(spectral_norm(&(&vars.l2 * &self.c))))
    }

    /// Best-effort penalty descent; the returned certificate always comes from [`LmiProblem::verify`].
    pub fn synthesize(&self, initial: &LmiVariables, params: &SearchParams) -> Result<Synthesis> {
        let verify = |v: &LmiVariables| self.verify(&v.p, &v.r_lmi, &v.l1, &v.l2, params.mode);
        let start = verify(initial)?;
        if start.feasible {
            return Ok(Synthesis { variables: initial.with_l3()?, certificate: start, iterations: 0 });
        }

        let (n, q) = (self.n(), self.q());
        let mut x = initial.pack();
        let project = |x: &DVector<f64>| {
            let mut v = LmiVariables::unpack(x, n, q);
            v.p = floor_eigenvalues(&symmetrize(&v.p), params.p_floor);
            v
        };
        let mut current = project(&x);
        x = current.pack();
        let mut value = self.penalty(&current, params.mode, params.norm_weight);
        let mut step = params.step;
        let mut iterations = 0;

        while iterations < params.max_iter && step > params.min_step {
            iterations += 1;
            let mut grad = DVector::zeros(x.len());
            for i in 0..x.len() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += params.fd_step;
                xm[i] -= params.fd_step;
                let fp = self.penalty(&LmiVariables::unpack(&xp, n, q), params.mode, params.norm_weight);
                let fm = self.penalty(&LmiVariables::unpack(&xm, n, q), params.mode, params.norm_weight);
                grad[i] = (fp - fm) / (2.0 * params.fd_step);
            }
            let gnorm = grad.norm();
            if !(gnorm > 0.0 && gnorm.is_finite()) {
                break;
            }
            let trial = project(&(&x - &grad * (step / gnorm)));
            let trial_value = self.penalty(&trial, params.mode, params.norm_weight);
            if trial_value < value {
                x = trial.pack();
                current = trial;
                value = trial_value;
                step *= 1.2;
                if value < -params.tolerance && verify(&current)?.feasible {
                    break;
                }
            } else {
                step *= 0.5;
            }
        }

        let variables = current.with_l3()?;
        let certificate = verify(&variables)?;
        Ok(Synthesis { variables, certificate, iterations })
    }
}

/// Decision variables of the LMI, with `l₃` filled in after synthesis.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiVariables {
    pub p: DMatrix<f64>,
    pub r_lmi: DMatrix<f64>,
    pub l1: DMatrix<f64>,
    pub l2: DMatrix<f64>,
    pub l3: Option<DMatrix<f64>>,
}

impl LmiVariables {
    pub fn new(p: DMatrix<f64>, r_lmi: DMatrix<f64>, l1: DMatrix<f64>, l2: DMatrix<f64>) -> Self {
        Self { p, r_lmi, l1, l2, l3: None }
    }

    /// Identity `P`, zero gains.
    pub fn zeros(n: usize, q: usize) -> Self {
        Self::new(DMatrix::identity(n, n), DMatrix::zeros(n, q), DMatrix::zeros(n, q), DMatrix::zeros(n, q))
    }

    pub fn from_gains(g: &crate::observer::ObserverGains) -> Self {
        Self { p: g.p.clone(), r_lmi: g.r_lmi.clone(), l1: g.l1.clone(), l2: g.l2.clone(), l3: Some(g.l3.clone()) }
    }

    fn with_l3(&self) -> Result<Self> {
        let chol = self
            .p
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidGains("P is not positive definite".into()))?;
        Ok(Self { l3: Some(chol.solve(&self.r_lmi)), ..self.clone() })
    }

    fn pack(&self) -> DVector<f64> {
        let n = self.p.nrows();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i..n {
                out.push(self.p[(i, j)]);
            }
        }
        for m in [&self.r_lmi, &self.l1, &self.l2] {
            out.extend(m.iter().copied());
        }
        DVector::from_vec(out)
    }

    fn unpack(x: &DVector<f64>, n: usize, q: usize) -> Self {
        let mut p = DMatrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                p[(i, j)] = x[k];
                p[(j, i)] = x[k];
                k += 1;
            }
        }
        let mut take = || {
            let m = DMatrix::from_column_slice(n, q, &x.as_slice()[k..k + n * q]);
            k += n * q;
            m
        };
        let r_lmi = take();
        let l1 = take();
        let l2 = take();
        Self::new(p, r_lmi, l1, l2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchParams {
    pub max_iter: usize,
    pub step: f64,
    pub min_step: f64,
    pub tolerance: f64,
    pub fd_step: f64,
    pub p_floor: f64,
    pub norm_weight: f64,
    pub mode: ThetaMode,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            step: 0.1,
            min_step: 1e-12,
            tolerance: DEFAULT_TOLERANCE,
            fd_step: 1e-6,
            p_floor: 1e-6,
            norm_weight: 10.0,
            mode: ThetaMode::ThetaIdentity,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub variables: LmiVariables,
    pub certificate: LmiCertificate,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmiCertificate {
    pub mode: ThetaMode,
    pub feasible: bool,
    pub max_eigenvalue: f64,
    pub worst_theta: Vec<Vec<f64>>,
    pub norm_l1c: f64,
    pub norm_l2c: f64,
    /// Largest eigenvalue of `M(θ)` for each checked `θ`, in enumeration order.
    pub vertex_eigenvalues: Vec<f64>,
    pub tolerance: f64,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmiReport {
    pub theta_identity: LmiCertificate,
    pub all_vertices: LmiCertificate,
}

//! Fixed-step closed-loop simulation of plant, observer and critic with runtime monitors.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::critic::{
    critic_derivatives, excitation_min_eig, max_normalized_regressor, Basis, Critic, ExtrapolationTerm, LearningConfig,
};
use crate::error::{ensure_dim, Error, Result};
use crate::linalg::{all_finite_mat, all_finite_vec, floor_eigenvalues, max_asymmetry, sym_eigen_range, symmetrize};
use crate::model::{AugmentedState, SystemModel};
use crate::observer::{observer_rhs, xi, ObserverGains};
use crate::safety::{monitor_safety, BarrierMode, CostBarrier, SafetyReport, SafetySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerMode {
    /// Robust recentered barrier `h − ℓξ` in the cost.
    Rlcbf,
    /// Recentered barrier on `h` without the robustifying term.
    Lcbf,
    /// No barrier in cost or control.
    None,
}

impl ControllerMode {
    pub fn barrier_mode(self) -> BarrierMode {
        match self {
            ControllerMode::Rlcbf => BarrierMode::Robust,
            ControllerMode::Lcbf => BarrierMode::Nominal,
            ControllerMode::None => BarrierMode::Off,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitorAction {
    Warn,
    Abort,
}

/// Which state the controller sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedback {
    Estimate,
    FullState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub x0: DVector<f64>,
    pub x_hat0: DVector<f64>,
    pub w0: DVector<f64>,
    pub gamma0: DMatrix<f64>,
    pub controller_mode: ControllerMode,
    pub monitor_action: MonitorAction,
    pub feedback: Feedback,
    /// Eigenvalue floor applied to `Γ` after every step.
    pub gamma_floor: f64,
    pub ultimate_bound_state: f64,
    pub ultimate_bound_error: f64,
    /// Warn when the excitation eigenvalue drops below this value.
    pub excitation_threshold: f64,
}

impl SimConfig {
    pub fn new(x0: DVector<f64>, x_hat0: DVector<f64>, w0: DVector<f64>, gamma0: DMatrix<f64>) -> Self {
        Self {
            dt: 1e-3,
            horizon: 10.0,
            x0,
            x_hat0,
            w0,
            gamma0,
            controller_mode: ControllerMode::Rlcbf,
            monitor_action: MonitorAction::Warn,
            feedback: Feedback::Estimate,
            gamma_floor: 1e-8,
            ultimate_bound_state: 0.1,
            ultimate_bound_error: 0.05,
            excitation_threshold: 0.0,
        }
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// Integrated quantities; ξ is a closed-form function of `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub x: DVector<f64>,
    pub x_hat: DVector<f64>,
    pub w: DVector<f64>,
    pub gamma: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct Derivatives {
    pub x: DVector<f64>,
    pub x_hat: DVector<f64>,
    pub w: DVector<f64>,
    pub gamma: DMatrix<f64>,
    pub u: DVector<f64>,
    pub terms: Vec<ExtrapolationTerm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitorKind {
    /// `‖x̃‖ > ξ`.
    Envelope,
    /// `|u_k| ≥ ū`.
    Saturation,
    /// Estimate left the robustified safe set.
    BarrierDomain,
    NonFinite,
    /// `h_r(x̂) ≥ 0` and `‖x̃‖ ≤ ξ` held but `h(x) < 0`.
    LemmaChain,
    Excitation,
    /// `‖x(0) − x̂(0)‖ > ε₀`.
    InitialError,
}

impl fmt::Display for MonitorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MonitorKind::Envelope => "envelope",
            MonitorKind::Saturation => "saturation",
            MonitorKind::BarrierDomain => "barrier_domain",
            MonitorKind::NonFinite => "non_finite",
            MonitorKind::LemmaChain => "lemma_chain",
            MonitorKind::Excitation => "excitation",
            MonitorKind::InitialError => "initial_error",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorStat {
    pub count: usize,
    pub first_t: f64,
    pub first_detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub t: f64,
    pub x: DVector<f64>,
    pub x_hat: DVector<f64>,
    pub xi: f64,
    pub u: DVector<f64>,
    pub w: DVector<f64>,
    pub delta_rms: f64,
    pub delta_max: f64,
    pub h: f64,
    pub h_r: f64,
    pub err_norm: f64,
    pub gamma_eig_min: f64,
    pub gamma_eig_max: f64,
    /// Largest `|Γ_ij − Γ_ji|` before the step's symmetrisation.
    pub gamma_asym: f64,
    pub excitation: f64,
    pub regressor_max: f64,
    pub clamped_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub records: Vec<Record>,
    pub monitors: BTreeMap<MonitorKind, MonitorStat>,
    /// Steps where both premises of the safety implication held.
    pub lemma_checks: usize,
    pub completed: bool,
    pub u_bar: f64,
}

impl TrajectoryLog {
    fn new(u_bar: f64) -> Self {
        Self { records: Vec::new(), monitors: BTreeMap::new(), lemma_checks: 0, completed: false, u_bar }
    }

    pub fn last(&self) -> Option<&Record> {
        self.records.last()
    }

    pub fn monitor_count(&self, kind: MonitorKind) -> usize {
        self.monitors.get(&kind).map_or(0, |m| m.count)
    }

    pub fn safety_report(&self, spec: &SafetySpec) -> SafetyReport {
        let t: Vec<f64> = self.records.iter().map(|r| r.t).collect();
        let x: Vec<DVector<f64>> = self.records.iter().map(|r| r.x.clone()).collect();
        let xh: Vec<DVector<f64>> = self.records.iter().map(|r| r.x_hat.clone()).collect();
        let xi: Vec<f64> = self.records.iter().map(|r| r.xi).collect();
        monitor_safety(spec, &t, &x, &xh, &xi)
    }

    /// `max_t ‖x̃(t)‖/ξ(t)`.
    pub fn max_envelope_ratio(&self) -> f64 {
        self.records.iter().map(|r| r.err_norm / r.xi).fold(0.0, f64::max)
    }

    pub fn gamma_band(&self) -> (f64, f64) {
        self.records
            .iter()
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), r| (lo.min(r.gamma_eig_min), hi.max(r.gamma_eig_max)))
    }

    pub fn max_gamma_asym(&self) -> f64 {
        self.records.iter().map(|r| r.gamma_asym).fold(0.0, f64::max)
    }

    pub fn max_abs_u(&self) -> f64 {
        self.records.iter().map(|r| r.u.amax()).fold(0.0, f64::max)
    }

    pub fn csv_header(&self) -> String {
        let Some(r) = self.records.first() else { return String::new() };
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=r.x.len()).map(|i| format!("x{i}")));
        cols.extend((1..=r.x_hat.len()).map(|i| format!("xhat{i}")));
        cols.push("xi".into());
        cols.extend((1..=r.u.len()).map(|i| format!("u{i}")));
        cols.extend((1..=r.w.len()).map(|i| format!("w{i}")));
        for c in [
            "delta_rms",
            "delta_max",
            "h",
            "h_r",
            "err_norm",
            "gamma_eig_min",
            "gamma_eig_max",
            "gamma_asym",
            "excitation",
            "regressor_max",
            "clamped_points",
        ] {
            cols.push(c.into());
        }
        cols.join(",")
    }

    /// One row per record; floats use the shortest round-trip representation.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.csv_header())?;
        for r in &self.records {
            let mut row: Vec<String> = vec![r.t.to_string()];
            row.extend(r.x.iter().map(f64::to_string));
            row.extend(r.x_hat.iter().map(f64::to_string));
            row.push(r.xi.to_string());
            row.extend(r.u.iter().map(f64::to_string));
            row.extend(r.w.iter().map(f64::to_string));
            for v in [
                r.delta_rms,
                r.delta_max,
                r.h,
                r.h_r,
                r.err_norm,
                r.gamma_eig_min,
                r.gamma_eig_max,
                r.gamma_asym,
                r.excitation,
                r.regressor_max,
            ] {
                row.push(v.to_string());
            }
            row.push(r.clamped_points.to_string());
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    fn note(&mut self, kind: MonitorKind, t: f64, detail: impl FnOnce() -> String) {
        self.monitors
            .entry(kind)
            .and_modify(|m| m.count += 1)
            .or_insert_with(|| {
                let first_detail = detail();
                warn!("monitor {kind} fired at t = {t}: {first_detail}");
                MonitorStat { count: 1, first_t: t, first_detail }
            });
    }
}

/// A run stopped early, with everything logged up to that point.
#[derive(Debug, Clone)]
pub struct Abort {
    pub t: f64,
    pub kind: MonitorKind,
    pub reason: String,
    pub log: TrajectoryLog,
}

/// All data of one closed-loop experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub model: SystemModel,
    pub gains: ObserverGains,
    pub safety: SafetySpec,
    pub learning: LearningConfig,
    pub basis: Arc<dyn Basis>,
    /// `h_r` floor at extrapolation points.
    pub barrier_floor: f64,
    pub sim: SimConfig,
}

impl Experiment {
    /// Checks dimensions and parameters; returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let (n, m) = (self.model.n(), self.model.m());
        let s = &self.sim;
        if !(s.dt > 0.0 && s.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", s.dt)));
        }
        if !(s.horizon >= 0.0 && s.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be nonnegative, got {}", s.horizon)));
        }
        if !(s.gamma_floor > 0.0) {
            return Err(Error::Config("gamma_floor must be positive".into()));
        }
        if !(self.barrier_floor > 0.0) {
            return Err(Error::Config("barrier floor must be positive".into()));
        }
        ensure_dim("x0", s.x0.len(), n)?;
        ensure_dim("x_hat0", s.x_hat0.len(), n)?;
        ensure_dim("basis input", self.basis.input_dim(), n + 1)?;
        ensure_dim("w0", s.w0.len(), self.basis.len())?;
        let l = self.basis.len();
        if s.gamma0.shape() != (l, l) {
            return Err(Error::Dimension(format!("Gamma0 must be {l}x{l}, got {:?}", s.gamma0.shape())));
        }
        if max_asymmetry(&s.gamma0) > 1e-12 || sym_eigen_range(&s.gamma0).0 <= 0.0 {
            return Err(Error::Config("Gamma0 must be symmetric positive definite".into()));
        }
        self.learning.validate(n, m)?;
        self.safety.validate(n)?;
        self.gains.check_against(&self.model)?;

        let mut warnings = Vec::new();
        let e0 = (&s.x0 - &s.x_hat0).norm();
        if e0 > self.gains.eps0 {
            warnings.push(format!("initial estimation error {e0:.6} exceeds eps0 = {}", self.gains.eps0));
        }
        if s.controller_mode != ControllerMode::None {
            let probe = AugmentedState { x: self.feedback_state(&s.x0, &s.x_hat0).clone(), xi: xi(&self.gains, 0.0) };
            let hr = self.cost_barrier().h_r(&probe);
            if !(hr > 0.0) {
                return Err(Error::Config(format!("initial estimate is outside the barrier domain, h_r = {hr}")));
            }
        }
        Ok(warnings)
    }

    pub fn cost_barrier(&self) -> CostBarrier {
        CostBarrier { spec: self.safety.clone(), mode: self.sim.controller_mode.barrier_mode(), floor: self.barrier_floor }
    }

    fn critic<'a>(&'a self, barrier: &'a CostBarrier) -> Critic<'a> {
        Critic {
            model: &self.model,
            basis: self.basis.as_ref(),
            barrier,
            config: &self.learning,
            alpha: self.gains.alpha,
        }
    }

    fn feedback_state<'a>(&self, x: &'a DVector<f64>, x_hat: &'a DVector<f64>) -> &'a DVector<f64> {
        match self.sim.feedback {
            Feedback::Estimate => x_hat,
            Feedback::FullState => x,
        }
    }

    pub fn initial_state(&self) -> SimState {
        SimState {
            t: 0.0,
            x: self.sim.x0.clone(),
            x_hat: self.sim.x_hat0.clone(),
            w: self.sim.w0.clone(),
            gamma: self.sim.gamma0.clone(),
        }
    }

    /// Right-hand side of the coupled system at `(t, state)`.
    pub fn derivatives(&self, barrier: &CostBarrier, s: &SimState) -> Result<Derivatives> {
        let critic = self.critic(barrier);
        let xi_t = xi(&self.gains, s.t);
        let zeta = AugmentedState { x: self.feedback_state(&s.x, &s.x_hat).clone(), xi: xi_t };
        let u = critic.evaluate(&zeta, &s.w, false)?.u;
        let x_dot = self.model.vector_field(&s.x, &u)?;
        let y = &self.model.c * &s.x;
        let x_hat_dot = observer_rhs(&self.model, &self.gains, &s.x_hat, &y, &u)?;
        let terms = critic.extrapolation_terms(xi_t, &s.w)?;
        let (w_dot, gamma_dot) = critic_derivatives(&terms, &s.gamma, self.learning.k_c, self.learning.beta);
        Ok(Derivatives { x: x_dot, x_hat: x_hat_dot, w: w_dot, gamma: gamma_dot, u, terms })
    }

    fn advance(s: &SimState, d: &Derivatives, h: f64) -> SimState {
        SimState {
            t: s.t + h,
            x: &s.x + &d.x * h,
            x_hat: &s.x_hat + &d.x_hat * h,
            w: &s.w + &d.w * h,
            gamma: &s.gamma + &d.gamma * h,
        }
    }

    /// One RK4 step from a state whose first-stage derivatives are already known.
    /// Returns the new state and the pre-symmetrisation asymmetry of `Γ`.
    fn rk4(&self, barrier: &CostBarrier, s: &SimState, k1: &Derivatives, dt: f64) -> Result<(SimState, f64)> {
        let k2 = self.derivatives(barrier, &Self::advance(s, k1, dt / 2.0))?;
        let k3 = self.derivatives(barrier, &Self::advance(s, &k2, dt / 2.0))?;
        let k4 = self.derivatives(barrier, &Self::advance(s, &k3, dt))?;
        let c = dt / 6.0;
        let combine_v = |a: &DVector<f64>, b: &DVector<f64>, cc: &DVector<f64>, d: &DVector<f64>| (a + b * 2.0 + cc * 2.0 + d) * c;
        let gamma_raw = &s.gamma + (&k1.gamma + &k2.gamma * 2.0 + &k3.gamma * 2.0 + &k4.gamma) * c;
        let asym = max_asymmetry(&gamma_raw);
        let next = SimState {
            t: s.t + dt,
            x: &s.x + combine_v(&k1.x, &k2.x, &k3.x, &k4.x),
            x_hat: &s.x_hat + combine_v(&k1.x_hat, &k2.x_hat, &k3.x_hat, &k4.x_hat),
            w: &s.w + combine_v(&k1.w, &k2.w, &k3.w, &k4.w),
            gamma: floor_eigenvalues(&symmetrize(&gamma_raw), self.sim.gamma_floor),
        };
        if !(all_finite_vec(&next.x) && all_finite_vec(&next.x_hat) && all_finite_vec(&next.w) && all_finite_mat(&next.gamma)) {
            return Err(Error::Integration { t: next.t });
        }
        Ok((next, asym))
    }

    /// Single RK4 step with the control recomputed at every stage.
    pub fn step(&self, s: &SimState, dt: f64) -> Result<SimState> {
        let barrier = self.cost_barrier();
        let k1 = self.derivatives(&barrier, s)?;
        Ok(self.rk4(&barrier, s, &k1, dt)?.0)
    }

    fn record(&self, s: &SimState, d: &Derivatives, asym: f64) -> Record {
        let xi_t = xi(&self.gains, s.t);
        let n_terms = d.terms.len().max(1) as f64;
        let delta_rms = (d.terms.iter().map(|t| t.delta * t.delta).sum::<f64>() / n_terms).sqrt();
        let delta_max = d.terms.iter().map(|t| t.delta.abs()).fold(0.0, f64::max);
        let (gmin, gmax) = sym_eigen_range(&s.gamma);
        Record {
            t: s.t,
            x: s.x.clone(),
            x_hat: s.x_hat.clone(),
            xi: xi_t,
            u: d.u.clone(),
            w: s.w.clone(),
            delta_rms,
            delta_max,
            h: self.safety.h(&s.x),
            h_r: self.safety.h(&s.x_hat) - self.safety.ell * xi_t,
            err_norm: (&s.x - &s.x_hat).norm(),
            gamma_eig_min: gmin,
            gamma_eig_max: gmax,
            gamma_asym: asym,
            excitation: excitation_min_eig(&d.terms),
            regressor_max: max_normalized_regressor(&d.terms),
            clamped_points: d.terms.iter().filter(|t| t.clamped).count(),
        }
    }

    /// Applies the monitors to a fresh record; `Some` means the run must stop.
    fn inspect(&self, log: &mut TrajectoryLog, r: &Record) -> Option<(MonitorKind, String)> {
        let abort = self.sim.monitor_action == MonitorAction::Abort;
        let mut stop = None;
        let envelope_ok = r.err_norm <= r.xi;
        if !envelope_ok {
            log.note(MonitorKind::Envelope, r.t, || format!("|x - x_hat| = {:.6e} > xi = {:.6e}", r.err_norm, r.xi));
            if abort {
                stop.get_or_insert((MonitorKind::Envelope, format!("estimation error {:.6e} exceeds xi {:.6e}", r.err_norm, r.xi)));
            }
        }
        if let Some((k, &uk)) = r.u.iter().enumerate().find(|(_, u)| !(u.abs() < log.u_bar)) {
            log.note(MonitorKind::Saturation, r.t, || format!("|u{}| = {} reached u_bar", k + 1, uk.abs()));
            if abort {
                stop.get_or_insert((MonitorKind::Saturation, format!("input {} saturated at {uk}", k + 1)));
            }
        }
        if r.h_r >= 0.0 && envelope_ok {
            log.lemma_checks += 1;
            if r.h < 0.0 {
                log.note(MonitorKind::LemmaChain, r.t, || format!("h_r = {:.6e} >= 0 and envelope held but h = {:.6e}", r.h_r, r.h));
                if abort {
                    stop.get_or_insert((MonitorKind::LemmaChain, format!("h(x) = {:.6e} < 0 with both premises satisfied", r.h)));
                }
            }
        }
        if r.excitation < self.sim.excitation_threshold {
            log.note(MonitorKind::Excitation, r.t, || format!("excitation eigenvalue {:.3e} below threshold", r.excitation));
        }
        stop
    }

    fn abort(t: f64, kind: MonitorKind, reason: String, log: TrajectoryLog) -> Error {
        Error::Aborted(Box::new(Abort { t, kind, reason, log }))
    }

    fn classify(e: Error) -> (MonitorKind, String) {
        match e {
            Error::BarrierDomain { h_r } => {
                (MonitorKind::BarrierDomain, format!("estimate left the barrier domain, h_r = {h_r:.6e}"))
            }
            other => (MonitorKind::NonFinite, other.to_string()),
        }
    }

    /// Integrates to the horizon and returns the full log, or an [`Abort`] carrying the partial log.
    pub fn run(&self) -> Result<TrajectoryLog> {
        for w in self.validate()? {
            warn!("{w}");
        }
        let barrier = self.cost_barrier();
        let mut log = TrajectoryLog::new(self.model.u_bar);
        let mut state = self.initial_state();
        let e0 = (&state.x - &state.x_hat).norm();
        if e0 > self.gains.eps0 {
            log.note(MonitorKind::InitialError, 0.0, || format!("|x0 - x_hat0| = {e0:.6} > eps0 = {}", self.gains.eps0));
        }
        let steps = self.sim.steps();
        let mut asym = max_asymmetry(&state.gamma);
        for k in 0..=steps {
            let d = match self.derivatives(&barrier, &state) {
                Ok(d) => d,
                Err(e) => {
                    let (kind, reason) = Self::classify(e);
                    log.note(kind, state.t, || reason.clone());
                    return Err(Self::abort(state.t, kind, reason, log));
                }
            };
            let rec = self.record(&state, &d, asym);
            let stop = self.inspect(&mut log, &rec);
            log.records.push(rec);
            if let Some((kind, reason)) = stop {
                return Err(Self::abort(state.t, kind, reason, log));
            }
            if k == steps {
                break;
            }
            match self.rk4(&barrier, &state, &d, self.sim.dt) {
                Ok((next, a)) => {
                    state = next;
                    // keep t on the grid rather than accumulating rounding
                    state.t = (k + 1) as f64 * self.sim.dt;
                    asym = a;
                }
                Err(e) => {
                    let (kind, reason) = Self::classify(e);
                    log.note(kind, state.t, || reason.clone());
                    return Err(Self::abort(state.t, kind, reason, log));
                }
            }
        }
        log.completed = true;
        Ok(log)
    }

    pub fn summarize(&self, log: &TrajectoryLog) -> RunSummary {
        let last = log.last();
        let vec_of = |v: Option<&DVector<f64>>| v.map(|v| v.iter().copied().collect()).unwrap_or_default();
        let x_final: Vec<f64> = vec_of(last.map(|r| &r.x));
        let final_state_norm = last.map_or(f64::NAN, |r| r.x.norm());
        let final_error_norm = last.map_or(f64::NAN, |r| r.err_norm);
        let (gmin, gmax) = log.gamma_band();
        RunSummary {
            completed: log.completed,
            controller_mode: self.sim.controller_mode,
            t_final: last.map_or(0.0, |r| r.t),
            steps: log.records.len(),
            x_final,
            x_hat_final: vec_of(last.map(|r| &r.x_hat)),
            w_final: vec_of(last.map(|r| &r.w)),
            final_state_norm,
            final_error_norm,
            ultimate_bound_state_ok: final_state_norm <= self.sim.ultimate_bound_state,
            ultimate_bound_error_ok: final_error_norm <= self.sim.ultimate_bound_error,
            safety: log.safety_report(&self.safety),
            max_envelope_ratio: log.max_envelope_ratio(),
            max_abs_u: log.max_abs_u(),
            gamma_eig_min: gmin,
            gamma_eig_max: gmax,
            max_gamma_asym: log.max_gamma_asym(),
            max_normalized_regressor: log.records.iter().map(|r| r.regressor_max).fold(0.0, f64::max),
            min_excitation: log.records.iter().map(|r| r.excitation).fold(f64::INFINITY, f64::min),
            lemma_checks: log.lemma_checks,
            monitors: log.monitors.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        }
    }
}

/// Serializable digest of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub completed: bool,
    pub controller_mode: ControllerMode,
    pub t_final: f64,
    pub steps: usize,
    pub x_final: Vec<f64>,
    pub x_hat_final: Vec<f64>,
    pub w_final: Vec<f64>,
    pub final_state_norm: f64,
    pub final_error_norm: f64,
    pub ultimate_bound_state_ok: bool,
    pub ultimate_bound_error_ok: bool,
    pub safety: SafetyReport,
    pub max_envelope_ratio: f64,
    pub max_abs_u: f64,
    pub gamma_eig_min: f64,
    pub gamma_eig_max: f64,
    pub max_gamma_asym: f64,
    pub max_normalized_regressor: f64,
    pub min_excitation: f64,
    pub lemma_checks: usize,
    pub monitors: BTreeMap<String, MonitorStat>,
}

//! Run configuration, presets and the command implementations behind the `rlcbf` binary.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::critic::{grid_points, LearningConfig, QuadraticBasis};
use crate::error::{Error, Result};
use crate::linalg::{matrix_from_rows, matrix_to_rows};
use crate::lmi::{LmiProblem, LmiReport, LmiVariables, SearchParams, Synthesis, ThetaMode};
use crate::model::{registry, Benchmark2d, BoundsAudit, DomainSet, JacobianBounds, SystemModel};
use crate::observer::ObserverGains;
use crate::safety::{lipschitz_audit, BarrierShape, LipschitzAudit, SafetySpec};
use crate::sim::{ControllerMode, Experiment, Feedback, MonitorAction, MonitorKind, RunSummary, SimConfig, TrajectoryLog};

pub const PRESETS: [&str; 7] =
    ["study1", "study2", "study1_nocbf", "study2_nocbf", "study1_lcbf", "study2_lcbf", "lq_oracle"];

/// Exit statuses of the binary.
pub mod exit {
    pub const OK: i32 = 0;
    pub const ABORTED: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const IO: i32 = 3;
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Aborted(_) | Error::Integration { .. } => exit::ABORTED,
        Error::Io(_) => exit::IO,
        _ => exit::CONFIG,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub model: ModelConfig,
    pub observer: ObserverConfig,
    pub safety: SafetyConfig,
    pub learning: LearningSection,
    pub sim: SimSection,
    #[serde(default)]
    pub synthesis: SynthesisSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub u_bar: f64,
    pub domain: DomainSet,
    /// Rows of `C`.
    #[serde(default = "default_output")]
    pub output: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsConfig>,
}

fn default_output() -> Vec<Vec<f64>> {
    vec![vec![0.0, 1.0]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub kf1: Vec<Vec<f64>>,
    pub kf2: Vec<Vec<f64>>,
    pub kg1: Vec<Vec<f64>>,
    pub kg2: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverConfig {
    pub alpha: f64,
    pub eps0: f64,
    pub gains: GainsSpec,
}

/// Explicit gain matrices, or the keyword `"synthesize"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainsSpec {
    Keyword(GainsKeyword),
    Explicit(ExplicitGains),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainsKeyword {
    Synthesize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitGains {
    pub p: Vec<Vec<f64>>,
    pub l1: MatrixSpec,
    pub l2: MatrixSpec,
    pub l3: MatrixSpec,
}

/// A matrix given by rows, or a single column as a flat list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Rows(Vec<Vec<f64>>),
    Column(Vec<f64>),
}

impl MatrixSpec {
    fn to_matrix(&self, what: &str) -> Result<DMatrix<f64>> {
        match self {
            MatrixSpec::Column(c) => Ok(DMatrix::from_column_slice(c.len(), 1, c)),
            MatrixSpec::Rows(r) => rows(r, what),
        }
    }
}

fn rows(r: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    matrix_from_rows(r).ok_or_else(|| Error::Config(format!("{what}: rows have unequal lengths")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafetyConfig {
    pub shape: BarrierShape,
    pub ell: f64,
    pub kappa: f64,
    #[serde(default = "default_barrier_floor")]
    pub barrier_floor: f64,
}

fn default_barrier_floor() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearningSection {
    pub k_c: f64,
    pub gamma_c: f64,
    pub beta: f64,
    pub r_u: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub points: PointsSpec,
    #[serde(default)]
    pub excitation_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointsSpec {
    Grid(GridSpec),
    List(Vec<Vec<f64>>),
}

/// `per_axis^n` points spaced uniformly over `[-half_width, half_width]^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub per_axis: usize,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    pub x0: Vec<f64>,
    pub x_hat0: Vec<f64>,
    pub w0: Vec<f64>,
    /// Defaults to the identity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma0: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_controller")]
    pub controller: ControllerMode,
    #[serde(default = "default_monitor")]
    pub monitor: MonitorAction,
    #[serde(default = "default_feedback")]
    pub feedback: Feedback,
    #[serde(default = "default_gamma_floor")]
    pub gamma_floor: f64,
    #[serde(default = "default_ub_state")]
    pub ultimate_bound_state: f64,
    #[serde(default = "default_ub_error")]
    pub ultimate_bound_error: f64,
}

fn default_dt() -> f64 {
    1e-3
}
fn default_horizon() -> f64 {
    10.0
}
fn default_controller() -> ControllerMode {
    ControllerMode::Rlcbf
}
fn default_monitor() -> MonitorAction {
    MonitorAction::Warn
}
fn default_feedback() -> Feedback {
    Feedback::Estimate
}
fn default_gamma_floor() -> f64 {
    1e-8
}
fn default_ub_state() -> f64 {
    0.1
}
fn default_ub_error() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSection {
    pub max_iter: usize,
    pub step: f64,
    pub mode: ThetaMode,
}

impl Default for SynthesisSection {
    fn default() -> Self {
        let p = SearchParams::default();
        Self { max_iter: p.max_iter, step: p.step, mode: p.mode }
    }
}

impl SynthesisSection {
    pub fn params(&self) -> SearchParams {
        SearchParams { max_iter: self.max_iter, step: self.step, mode: self.mode, ..SearchParams::default() }
    }
}

/// Command-line overrides applied on top of a file or preset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub monitor: Option<MonitorAction>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(dt) = o.dt {
            self.sim.dt = dt;
        }
        if let Some(h) = o.horizon {
            self.sim.horizon = h;
        }
        if let Some(m) = o.monitor {
            self.sim.monitor = m;
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
    }

    pub fn build_model(&self) -> Result<SystemModel> {
        let m = &self.model;
        let dynamics = registry(&m.name).ok_or_else(|| Error::Config(format!("unknown model '{}'", m.name)))?;
        m.domain.validate()?;
        let bounds = match &m.bounds {
            Some(b) => JacobianBounds {
                kf1: rows(&b.kf1, "kf1")?,
                kf2: rows(&b.kf2, "kf2")?,
                kg1: rows(&b.kg1, "kg1")?,
                kg2: rows(&b.kg2, "kg2")?,
            },
            None if m.name == Benchmark2d::REGISTRY_KEY => {
                let ext = m.domain.extent();
                if ext.len() != 2 {
                    return Err(Error::Dimension(format!("benchmark domain must be 2-dimensional, got {}", ext.len())));
                }
                Benchmark2d::jacobian_bounds([ext[0], ext[1]], m.u_bar)
            }
            None => return Err(Error::Config(format!("model '{}' needs explicit Jacobian bounds", m.name))),
        };
        SystemModel::new(dynamics, rows(&m.output, "output")?, bounds, m.u_bar, m.domain.clone())
    }

    pub fn lmi_problem(&self, model: &SystemModel) -> Result<LmiProblem> {
        LmiProblem::from_model(model, self.observer.alpha)
    }

    /// Explicit gains, or `None` when the config asks for synthesis.
    pub fn explicit_gains(&self) -> Result<Option<ObserverGains>> {
        match &self.observer.gains {
            GainsSpec::Keyword(GainsKeyword::Synthesize) => Ok(None),
            GainsSpec::Explicit(g) => Ok(Some(ObserverGains::new(
                rows(&g.p, "P")?,
                g.l1.to_matrix("l1")?,
                g.l2.to_matrix("l2")?,
                g.l3.to_matrix("l3")?,
                self.observer.alpha,
                self.observer.eps0,
            )?)),
        }
    }

    pub fn synthesize(&self, model: &SystemModel) -> Result<Synthesis> {
        let problem = self.lmi_problem(model)?;
        let start = match self.explicit_gains()? {
            Some(g) => LmiVariables::from_gains(&g),
            None => LmiVariables::zeros(model.n(), model.q()),
        };
        problem.synthesize(&start, &self.synthesis.params())
    }

    fn gains(&self, model: &SystemModel) -> Result<ObserverGains> {
        if let Some(g) = self.explicit_gains()? {
            return Ok(g);
        }
        let s = self.synthesize(model)?;
        if !s.certificate.feasible {
            return Err(Error::InvalidGains(format!(
                "synthesis did not reach a verified point: {}",
                s.certificate.reasons.join("; ")
            )));
        }
        let v = s.variables;
        ObserverGains::from_lmi(v.p, v.r_lmi, v.l1, v.l2, self.observer.alpha, self.observer.eps0)
    }

    pub fn build(&self) -> Result<Experiment> {
        let model = self.build_model()?;
        let n = model.n();
        let gains = self.gains(&model)?;
        let safety = SafetySpec { shape: self.safety.shape.clone(), ell: self.safety.ell, kappa: self.safety.kappa };
        let l = &self.learning;
        let points = match &l.points {
            PointsSpec::Grid(g) => {
                if g.per_axis == 0 || !(g.half_width >= 0.0) {
                    return Err(Error::Config("extrapolation grid needs per_axis >= 1 and half_width >= 0".into()));
                }
                grid_points(n, g.per_axis, g.half_width)
            }
            PointsSpec::List(list) => list.iter().map(|p| DVector::from_column_slice(p)).collect(),
        };
        let learning = LearningConfig {
            k_c: l.k_c,
            gamma_c: l.gamma_c,
            beta: l.beta,
            points,
            r_u: DVector::from_column_slice(&l.r_u),
            q: rows(&l.q, "q")?,
        };
        let basis = QuadraticBasis::new(n);
        let big_l = crate::critic::Basis::len(&basis);
        let s = &self.sim;
        let gamma0 = match &s.gamma0 {
            Some(g) => rows(g, "gamma0")?,
            None => DMatrix::identity(big_l, big_l),
        };
        let mut sim = SimConfig::new(
            DVector::from_column_slice(&s.x0),
            DVector::from_column_slice(&s.x_hat0),
            DVector::from_column_slice(&s.w0),
            gamma0,
        );
        sim.dt = s.dt;
        sim.horizon = s.horizon;
        sim.controller_mode = s.controller;
        sim.monitor_action = s.monitor;
        sim.feedback = s.feedback;
        sim.gamma_floor = s.gamma_floor;
        sim.ultimate_bound_state = s.ultimate_bound_state;
        sim.ultimate_bound_error = s.ultimate_bound_error;
        sim.excitation_threshold = l.excitation_threshold;
        let exp = Experiment {
            model,
            gains,
            safety,
            learning,
            basis: Arc::new(basis),
            barrier_floor: self.safety.barrier_floor,
            sim,
        };
        exp.validate()?;
        Ok(exp)
    }
}

const W0: [f64; 6] = [0.5, 1.0, 0.8, 0.1, 0.1, 0.1];

fn study1_base() -> RunConfig {
    RunConfig {
        out: None,
        model: ModelConfig {
            name: Benchmark2d::REGISTRY_KEY.into(),
            u_bar: 10.0,
            domain: DomainSet::symmetric_box(2, 3.0),
            output: default_output(),
            bounds: None,
        },
        observer: ObserverConfig {
            alpha: 2.0,
            eps0: 2.5,
            gains: GainsSpec::Explicit(ExplicitGains {
                p: vec![vec![0.27222, 0.15875], vec![0.15875, 0.40954]],
                l1: MatrixSpec::Column(vec![0.14719, 0.14719]),
                l2: MatrixSpec::Column(vec![0.045396, 0.045396]),
                l3: MatrixSpec::Column(vec![-8.82113, 11.5823]),
            }),
        },
        safety: SafetyConfig { shape: BarrierShape::ParabolicSet, ell: 0.1, kappa: 0.01, barrier_floor: 1e-6 },
        learning: LearningSection {
            k_c: 5.0,
            gamma_c: 100.0,
            beta: 0.01,
            r_u: vec![1.0],
            q: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            points: PointsSpec::Grid(GridSpec { per_axis: 10, half_width: 0.5 }),
            excitation_threshold: 0.0,
        },
        sim: SimSection {
            dt: 1e-3,
            horizon: 10.0,
            x0: vec![-3.0, 1.5],
            x_hat0: vec![-1.5, 1.0],
            w0: W0.to_vec(),
            gamma0: None,
            controller: ControllerMode::Rlcbf,
            monitor: MonitorAction::Warn,
            feedback: Feedback::Estimate,
            gamma_floor: 1e-8,
            ultimate_bound_state: 0.1,
            ultimate_bound_error: 0.05,
        },
        synthesis: SynthesisSection::default(),
    }
}

fn study2_base() -> RunConfig {
    let mut c = study1_base();
    c.model.domain = DomainSet::symmetric_box(2, 2.0);
    c.observer.eps0 = 0.7;
    c.observer.gains = GainsSpec::Explicit(ExplicitGains {
        p: vec![vec![0.47897, 1.0306], vec![1.0306, 2.6555]],
        l1: MatrixSpec::Column(vec![0.3956, 0.13187]),
        l2: MatrixSpec::Column(vec![0.15735, 0.15735]),
        l3: MatrixSpec::Column(vec![-99.6211, 41.064]),
    });
    c.safety = SafetyConfig {
        shape: BarrierShape::Obstacle { center: vec![-0.5, 0.6], radius: 0.2 },
        ell: 0.15,
        kappa: 2.5,
        barrier_floor: 1e-6,
    };
    c.learning.points = PointsSpec::Grid(GridSpec { per_axis: 10, half_width: 1.0 });
    c.sim.x0 = vec![-1.0, 1.0];
    c.sim.x_hat0 = vec![-1.5, 1.5];
    c
}

/// Known-solution variant: no barrier, wide saturation, controller fed the true state.
fn lq_oracle() -> RunConfig {
    let mut c = study1_base();
    c.model.u_bar = 100.0;
    c.learning.gamma_c = 1.0;
    c.learning.points = PointsSpec::Grid(GridSpec { per_axis: 10, half_width: 1.0 });
    c.sim.controller = ControllerMode::None;
    c.sim.feedback = Feedback::FullState;
    c
}

pub fn preset(name: &str) -> Result<RunConfig> {
    let with_mode = |mut c: RunConfig, m: ControllerMode| {
        c.sim.controller = m;
        c
    };
    match name {
        "study1" => Ok(study1_base()),
        "study2" => Ok(study2_base()),
        "study1_nocbf" => Ok(with_mode(study1_base(), ControllerMode::None)),
        "study2_nocbf" => Ok(with_mode(study2_base(), ControllerMode::None)),
        "study1_lcbf" => Ok(with_mode(study1_base(), ControllerMode::Lcbf)),
        "study2_lcbf" => Ok(with_mode(study2_base(), ControllerMode::Lcbf)),
        "lq_oracle" => Ok(lq_oracle()),
        other => Err(Error::Config(format!("unknown preset '{other}', expected one of {}", PRESETS.join(", ")))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortInfo {
    pub t: f64,
    pub kind: MonitorKind,
    pub reason: String,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run: RunSummary,
    pub abort: Option<AbortInfo>,
    pub warnings: Vec<String>,
    pub certificate: String,
    pub lmi_feasible_theta_identity: bool,
    pub lmi_feasible_all_vertices: bool,
    pub lipschitz: LipschitzAudit,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub log: TrajectoryLog,
    pub exit_code: i32,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

fn write_plotdata(dir: &Path, log: &TrajectoryLog, spec: &SafetySpec, domain: &DomainSet) -> Result<()> {
    let dir = dir.join("plotdata");
    fs::create_dir_all(&dir)?;
    let Some(first) = log.records.first() else { return Ok(()) };
    let (n, m, l) = (first.x.len(), first.u.len(), first.w.len());
    let join = |v: &DVector<f64>| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    let names = |p: &str, k: usize| (1..=k).map(|i| format!("{p}{i}")).collect::<Vec<_>>().join(",");

    let mut state = BufWriter::new(fs::File::create(dir.join("state.csv"))?);
    writeln!(state, "t,{},{}", names("x", n), names("xhat", n))?;
    let mut weights = BufWriter::new(fs::File::create(dir.join("weights.csv"))?);
    writeln!(weights, "t,{}", names("w", l))?;
    let mut control = BufWriter::new(fs::File::create(dir.join("control.csv"))?);
    writeln!(control, "t,{}", names("u", m))?;
    let mut barrier = BufWriter::new(fs::File::create(dir.join("barrier.csv"))?);
    writeln!(barrier, "t,h,h_r,xi,err_norm")?;
    for r in &log.records {
        writeln!(state, "{},{},{}", r.t, join(&r.x), join(&r.x_hat))?;
        writeln!(weights, "{},{}", r.t, join(&r.w))?;
        writeln!(control, "{},{}", r.t, join(&r.u))?;
        writeln!(barrier, "{},{},{},{},{}", r.t, r.h, r.h_r, r.xi, r.err_norm)?;
    }
    for mut w in [state, weights, control, barrier] {
        w.flush()?;
    }

    // zero level set of h, for overlaying on the state-space plot
    let mut boundary = BufWriter::new(fs::File::create(dir.join("boundary.csv"))?);
    writeln!(boundary, "x1,x2")?;
    let samples = 200;
    match &spec.shape {
        BarrierShape::ParabolicSet => {
            let a = domain.extent().get(1).copied().unwrap_or(1.0);
            for k in 0..=samples {
                let x2 = -a + 2.0 * a * k as f64 / samples as f64;
                writeln!(boundary, "{},{}", 1.0 - x2 * x2, x2)?;
            }
        }
        BarrierShape::Obstacle { center, radius } if center.len() == 2 => {
            for k in 0..=samples {
                let th = std::f64::consts::TAU * k as f64 / samples as f64;
                writeln!(boundary, "{},{}", center[0] + radius * th.cos(), center[1] + radius * th.sin())?;
            }
        }
        BarrierShape::Obstacle { .. } => {}
    }
    boundary.flush()?;
    Ok(())
}

fn output_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

/// Validates, simulates and writes `trajectory.csv`, `summary.json`, `certificate.json` and `plotdata/`.
///
/// Configuration errors return before anything is written. A monitor abort still writes the partial
/// artifacts and reports exit status 1.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunOutcome> {
    let exp = cfg.build()?;
    let warnings = exp.validate()?;
    let problem = cfg.lmi_problem(&exp.model)?;
    let lmi = problem.verify_both(&LmiVariables::from_gains(&exp.gains))?;
    let lipschitz = lipschitz_audit(&exp.safety, &exp.model.domain, 101);
    if !lipschitz.ok {
        warn!(
            "ell = {} is below the sampled gradient bound {:.4} of h on the domain",
            lipschitz.ell, lipschitz.sup_grad_norm
        );
    }

    let (log, abort) = match exp.run() {
        Ok(log) => (log, None),
        Err(Error::Aborted(a)) => {
            let info = AbortInfo { t: a.t, kind: a.kind, reason: a.reason.clone() };
            (a.log, Some(info))
        }
        Err(e) => return Err(e),
    };

    let dir = output_dir(cfg);
    fs::create_dir_all(&dir)?;
    let mut csv = BufWriter::new(fs::File::create(dir.join("trajectory.csv"))?);
    log.write_csv(&mut csv)?;
    csv.flush()?;
    write_json(&dir.join("certificate.json"), &lmi)?;
    write_plotdata(&dir, &log, &exp.safety, &exp.model.domain)?;

    let report = RunReport {
        run: exp.summarize(&log),
        abort,
        warnings,
        certificate: "certificate.json".into(),
        lmi_feasible_theta_identity: lmi.theta_identity.feasible,
        lmi_feasible_all_vertices: lmi.all_vertices.feasible,
        lipschitz,
    };
    write_json(&dir.join("summary.json"), &report)?;
    info!("wrote artifacts to {}", dir.display());
    let exit_code = if report.abort.is_some() { exit::ABORTED } else { exit::OK };
    Ok(RunOutcome { report, log, exit_code })
}

/// Verifies the configured gains in both θ modes and writes `certificate.json`.
pub fn cmd_verify_lmi(cfg: &RunConfig) -> Result<LmiReport> {
    let model = cfg.build_model()?;
    let gains = cfg
        .explicit_gains()?
        .ok_or_else(|| Error::Config("verify-lmi needs explicit observer gains".into()))?;
    gains.check_against(&model).or_else(|e| match e {
        Error::InvalidGains(_) => Ok(()),
        other => Err(other),
    })?;
    let report = cfg.lmi_problem(&model)?.verify_both(&LmiVariables::from_gains(&gains))?;
    let dir = output_dir(cfg);
    fs::create_dir_all(&dir)?;
    write_json(&dir.join("certificate.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisArtifact {
    pub p: Vec<Vec<f64>>,
    pub r_lmi: Vec<Vec<f64>>,
    pub l1: Vec<Vec<f64>>,
    pub l2: Vec<Vec<f64>>,
    pub l3: Vec<Vec<f64>>,
    pub iterations: usize,
    pub certificate: crate::lmi::LmiCertificate,
}

/// Runs the penalty search and writes `synthesis.json`.
pub fn cmd_synthesize(cfg: &RunConfig) -> Result<SynthesisArtifact> {
    let model = cfg.build_model()?;
    let s = cfg.synthesize(&model)?;
    let v = &s.variables;
    let art = SynthesisArtifact {
        p: matrix_to_rows(&v.p),
        r_lmi: matrix_to_rows(&v.r_lmi),
        l1: matrix_to_rows(&v.l1),
        l2: matrix_to_rows(&v.l2),
        l3: v.l3.as_ref().map(matrix_to_rows).unwrap_or_default(),
        iterations: s.iterations,
        certificate: s.certificate,
    };
    let dir = output_dir(cfg);
    fs::create_dir_all(&dir)?;
    write_json(&dir.join("synthesis.json"), &art)?;
    Ok(art)
}

pub fn cmd_presets() -> Vec<&'static str> {
    PRESETS.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub bounds: BoundsAudit,
    pub lipschitz: LipschitzAudit,
}

/// Samples the domain to check the Jacobian bounds and the Lipschitz constant of `h`.
pub fn cmd_audit_bounds(cfg: &RunConfig, per_axis: usize) -> Result<AuditReport> {
    let model = cfg.build_model()?;
    let spec = SafetySpec { shape: cfg.safety.shape.clone(), ell: cfg.safety.ell, kappa: cfg.safety.kappa };
    spec.validate(model.n())?;
    Ok(AuditReport {
        bounds: model.audit_bounds(per_axis, 1e-6)?,
        lipschitz: lipschitz_audit(&spec, &model.domain, per_axis),
    })
}

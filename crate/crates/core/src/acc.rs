//! Adaptive cruise control scenarios.
//!
//! The state is the gap-formulated pair `(z, v)`: `z` is the distance to the
//! preceding vehicle and `v` the ego speed. The preceding vehicle runs at the
//! constant speed `v_ip`, which keeps both scenarios time-invariant.
//!
//! * ACC: `ż = v_ip − v`, `m v̇ = u − F_r(v)` with
//!   `F_r(v) = f₀ sgn(v) + f₁ v + f₂ v²`.
//! * SACC: `ż = v_ip − v`, `v̇ = u`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::classk::ClassKFn;
use crate::clf::{ClfSpec, Lyapunov, LyapunovValues};
use crate::hocbf::{ConstraintTag, DomainPolicy, HocbfSpec, LieJet, LieJetProvider, LinearControlConstraint};
use crate::qp::QpProblem;
use crate::sim::{run, Controller, Plant, SimConfig, SimError, TrajectoryRecord};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{0}")]
pub struct ParamError(pub String);

/// Class-K pairing for the safety HOCBF.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Form {
    /// `α₁` linear, `α₂` square root.
    Sqrt,
    /// Both linear.
    Linear,
    /// Both quadratic.
    Quadratic,
}

impl Form {
    pub fn as_str(&self) -> &'static str {
        match self {
            Form::Sqrt => "sqrt",
            Form::Linear => "linear",
            Form::Quadratic => "quadratic",
        }
    }

    /// `(α₁, α₂)` with penalties `p₁`, `p₂`.
    pub fn alphas(&self, p1: f64, p2: f64) -> Result<Vec<ClassKFn>, ParamError> {
        let err = |e: crate::classk::ClassKError| ParamError(e.to_string());
        let (a1, a2) = match self {
            Form::Sqrt => (ClassKFn::linear(1.0).map_err(err)?, ClassKFn::sqrt()),
            Form::Linear => (ClassKFn::linear(1.0).map_err(err)?, ClassKFn::linear(1.0).map_err(err)?),
            Form::Quadratic => (ClassKFn::quadratic(), ClassKFn::quadratic()),
        };
        Ok(vec![a1.with_penalty(p1).map_err(err)?, a2.with_penalty(p2).map_err(err)?])
    }
}

impl fmt::Display for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Form {
    type Err = ParamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sqrt" | "1" => Ok(Form::Sqrt),
            "linear" | "2" => Ok(Form::Linear),
            "quadratic" | "3" => Ok(Form::Quadratic),
            other => Err(ParamError(format!("unknown form '{other}', expected sqrt, linear or quadratic"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccParams {
    /// Initial ego speed (m/s).
    pub v0_i: f64,
    /// Initial gap (m).
    pub z0: f64,
    /// Minimum gap (m).
    pub delta: f64,
    /// Preceding vehicle speed (m/s).
    pub v_ip: f64,
    pub mass: f64,
    pub grav: f64,
    pub f0: f64,
    pub f1: f64,
    pub f2: f64,
    pub v_max: f64,
    pub v_min: f64,
    pub dt: f64,
    /// CLF convergence rate.
    pub eps: f64,
    pub c_a: f64,
    pub c_d: f64,
    /// Weight on the CLF relaxation.
    pub p_acc: f64,
    /// Desired speed (m/s).
    pub v_d: f64,
    /// Penalty shared by both class-K functions.
    pub p: f64,
    /// Per-function penalty overrides.
    pub p1: Option<f64>,
    pub p2: Option<f64>,
    pub form: Form,
}

impl Default for AccParams {
    fn default() -> Self {
        Self::table1()
    }
}

impl AccParams {
    /// Published simulation parameters, with `v_d = 24` m/s and the linear
    /// form at `p = 1`.
    pub fn table1() -> Self {
        Self {
            v0_i: 20.0,
            z0: 100.0,
            delta: 10.0,
            v_ip: 13.89,
            mass: 1650.0,
            grav: 9.81,
            f0: 0.1,
            f1: 5.0,
            f2: 0.25,
            v_max: 30.0,
            v_min: 0.0,
            dt: 0.1,
            eps: 10.0,
            c_a: 0.4,
            c_d: 0.4,
            p_acc: 1.0,
            v_d: 24.0,
            p: 1.0,
            p1: None,
            p2: None,
            form: Form::Linear,
        }
    }

    pub fn with_form(mut self, form: Form, p: f64) -> Self {
        self.form = form;
        self.p = p;
        self
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let positive = [
            ("mass", self.mass),
            ("grav", self.grav),
            ("f0", self.f0),
            ("f1", self.f1),
            ("f2", self.f2),
            ("dt", self.dt),
            ("eps", self.eps),
            ("c_a", self.c_a),
            ("c_d", self.c_d),
            ("p_acc", self.p_acc),
            ("delta", self.delta),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ParamError(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("p", Some(self.p)), ("p1", self.p1), ("p2", self.p2)] {
            if let Some(v) = v {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(ParamError(format!("penalty must be positive ({name} = {v})")));
                }
            }
        }
        for (name, v) in [("z0", self.z0), ("v_ip", self.v_ip), ("v_d", self.v_d)] {
            if !v.is_finite() {
                return Err(ParamError(format!("{name} must be finite")));
            }
        }
        if !(self.v_min >= 0.0) || !(self.v_max > self.v_min) {
            return Err(ParamError(format!(
                "speed limits must satisfy 0 <= v_min < v_max, got [{}, {}]",
                self.v_min, self.v_max
            )));
        }
        if !(self.v_min <= self.v0_i && self.v0_i <= self.v_max) {
            return Err(ParamError(format!("initial speed {} outside [{}, {}]", self.v0_i, self.v_min, self.v_max)));
        }
        Ok(())
    }

    pub fn penalties(&self) -> (f64, f64) {
        (self.p1.unwrap_or(self.p), self.p2.unwrap_or(self.p))
    }

    pub fn initial_state(&self) -> [f64; 2] {
        [self.z0, self.v0_i]
    }

    /// `c_a m g`
    pub fn accel_limit(&self) -> f64 {
        self.c_a * self.mass * self.grav
    }

    /// `−c_d m g`; deliberately not a QP row.
    pub fn brake_limit(&self) -> f64 {
        -self.c_d * self.mass * self.grav
    }

    pub fn sim_config(&self, horizon: f64) -> SimConfig {
        SimConfig { dt: self.dt, horizon, ..SimConfig::default() }
    }
}

/// `F_r(v) = f₀ sgn(v) + f₁ v + f₂ v²` with `sgn(0) = 0`.
pub fn resistance(v: f64, params: &AccParams) -> f64 {
    let sgn = if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    };
    params.f0 * sgn + params.f1 * v + params.f2 * v * v
}

#[derive(Debug, Clone)]
pub struct AccPlant {
    params: AccParams,
}

pub fn acc_plant(params: &AccParams) -> AccPlant {
    AccPlant { params: params.clone() }
}

impl Plant for AccPlant {
    fn state_dim(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        let p = &self.params;
        DVector::from_vec(vec![p.v_ip - x[1], -resistance(x[1], p) / p.mass])
    }
    fn input_matrix(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(2, 1, &[0.0, 1.0 / self.params.mass])
    }
}

/// `b = z − δ`, relative degree 2.
#[derive(Debug, Clone)]
pub struct SafetyLieJet {
    params: AccParams,
}

pub fn safety_lie_jet(params: &AccParams) -> SafetyLieJet {
    SafetyLieJet { params: params.clone() }
}

impl LieJetProvider for SafetyLieJet {
    fn relative_degree(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn evaluate(&self, state: &[f64]) -> LieJet {
        let p = &self.params;
        let (z, v) = (state[0], state[1]);
        LieJet { lie: vec![z - p.delta, p.v_ip - v, resistance(v, p) / p.mass], input_row: vec![-1.0 / p.mass] }
    }
}

/// `b = v_max − v`
#[derive(Debug, Clone)]
struct SpeedMaxLieJet {
    params: AccParams,
}

impl LieJetProvider for SpeedMaxLieJet {
    fn relative_degree(&self) -> usize {
        1
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn evaluate(&self, state: &[f64]) -> LieJet {
        let p = &self.params;
        let v = state[1];
        LieJet { lie: vec![p.v_max - v, resistance(v, p) / p.mass], input_row: vec![-1.0 / p.mass] }
    }
}

/// `b = v − v_min`
#[derive(Debug, Clone)]
struct SpeedMinLieJet {
    params: AccParams,
}

impl LieJetProvider for SpeedMinLieJet {
    fn relative_degree(&self) -> usize {
        1
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn evaluate(&self, state: &[f64]) -> LieJet {
        let p = &self.params;
        let v = state[1];
        LieJet { lie: vec![v - p.v_min, -resistance(v, p) / p.mass], input_row: vec![1.0 / p.mass] }
    }
}

/// `V = (v − v_d)²` under the ACC dynamics.
#[derive(Debug, Clone)]
struct SpeedLyapunov {
    params: AccParams,
}

impl Lyapunov for SpeedLyapunov {
    fn evaluate(&self, state: &[f64]) -> LyapunovValues {
        let p = &self.params;
        let e = state[1] - p.v_d;
        LyapunovValues { v: e * e, lf_v: -2.0 * e * resistance(state[1], p) / p.mass, lg_v: vec![2.0 * e / p.mass] }
    }
}

/// The ACC safety HOCBF for the configured form and penalties.
pub fn safety_hocbf(params: &AccParams) -> Result<HocbfSpec, ParamError> {
    let (p1, p2) = params.penalties();
    HocbfSpec::new(Arc::new(safety_lie_jet(params)), params.form.alphas(p1, p2)?).map_err(|e| ParamError(e.to_string()))
}

/// The CLF/HOCBF controller over `(u, δ_acc)`.
#[derive(Debug, Clone)]
pub struct AccController {
    params: AccParams,
    /// safety, speed max, speed min
    barriers: Vec<HocbfSpec>,
    clf: ClfSpec,
}

impl AccController {
    pub fn new(params: &AccParams) -> Result<Self, ParamError> {
        params.validate()?;
        let unit = ClassKFn::linear(1.0).map_err(|e| ParamError(e.to_string()))?;
        let speed = |provider: Arc<dyn LieJetProvider>| {
            HocbfSpec::new(provider, vec![unit.clone()]).map_err(|e| ParamError(e.to_string()))
        };
        let barriers = vec![
            safety_hocbf(params)?,
            speed(Arc::new(SpeedMaxLieJet { params: params.clone() }))?,
            speed(Arc::new(SpeedMinLieJet { params: params.clone() }))?,
        ];
        let clf = ClfSpec::new(Arc::new(SpeedLyapunov { params: params.clone() }), params.eps, params.p_acc)
            .map_err(|e| ParamError(e.to_string()))?;
        Ok(Self { params: params.clone(), barriers, clf })
    }

    pub fn params(&self) -> &AccParams {
        &self.params
    }

    pub fn clf(&self) -> &ClfSpec {
        &self.clf
    }

    /// Speed-limit rows followed by the acceleration cap, over `u` only.
    pub fn speed_limit_constraints(&self, state: &[f64]) -> Result<Vec<LinearControlConstraint>, SimError> {
        let (max, _) = self.barriers[1].evaluate(state, DomainPolicy::Clamp, ConstraintTag::CbfSpeedMax)?;
        let (min, _) = self.barriers[2].evaluate(state, DomainPolicy::Clamp, ConstraintTag::CbfSpeedMin)?;
        let cap = LinearControlConstraint::new(vec![1.0], self.params.accel_limit(), ConstraintTag::ControlLimit);
        Ok(vec![max, min, cap])
    }

    pub fn safety_constraint(&self, state: &[f64]) -> Result<LinearControlConstraint, SimError> {
        Ok(self.barriers[0].evaluate(state, DomainPolicy::Clamp, ConstraintTag::HocbfSafety)?.0)
    }
}

impl Controller for AccController {
    fn control_dim(&self) -> usize {
        1
    }

    /// Minimizes `((u − F_r)/m)² + p_acc δ²` up to a constant, subject to
    /// the CLF row, both speed rows, the acceleration cap and the safety
    /// HOCBF. The braking bound is left out.
    fn build_qp(&self, state: &[f64]) -> Result<QpProblem, SimError> {
        let p = &self.params;
        let fr = resistance(state[1], p);
        let m2 = p.mass * p.mass;
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0 / m2, 2.0 * p.p_acc]));
        let f = DVector::from_vec(vec![-2.0 * fr / m2, 0.0]);
        let mut rows = vec![self.clf.constraint(state)];
        rows.extend(self.speed_limit_constraints(state)?.into_iter().map(|r| r.padded(2)));
        rows.push(self.safety_constraint(state)?.padded(2));
        Ok(QpProblem::new(h, f, rows)?)
    }

    fn barriers(&self) -> &[HocbfSpec] {
        &self.barriers
    }
}

pub fn assemble_acc_qp(params: &AccParams, state: &[f64]) -> Result<QpProblem, SimError> {
    AccController::new(params).map_err(|e| SimError::Config(e.0))?.build_qp(state)
}

/// Double integrator in gap form.
#[derive(Debug, Clone)]
pub struct SaccPlant {
    v_ip: f64,
}

impl Plant for SaccPlant {
    fn state_dim(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![self.v_ip - x[1], 0.0])
    }
    fn input_matrix(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(2, 1, &[0.0, 1.0])
    }
}

#[derive(Debug, Clone)]
pub struct SaccLieJet {
    delta: f64,
    v_ip: f64,
}

impl LieJetProvider for SaccLieJet {
    fn relative_degree(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn evaluate(&self, state: &[f64]) -> LieJet {
        LieJet { lie: vec![state[0] - self.delta, self.v_ip - state[1], 0.0], input_row: vec![-1.0] }
    }
}

#[derive(Debug, Clone)]
struct SaccLyapunov {
    v_d: f64,
}

impl Lyapunov for SaccLyapunov {
    fn evaluate(&self, state: &[f64]) -> LyapunovValues {
        let e = state[1] - self.v_d;
        LyapunovValues { v: e * e, lf_v: 0.0, lg_v: vec![2.0 * e] }
    }
}

/// SACC: minimizes `u² + p_acc δ²` subject to the speed CLF and a
/// quadratic/quadratic safety HOCBF.
#[derive(Debug, Clone)]
pub struct SaccController {
    barriers: Vec<HocbfSpec>,
    clf: ClfSpec,
    p_acc: f64,
}

impl Controller for SaccController {
    fn control_dim(&self) -> usize {
        1
    }
    fn build_qp(&self, state: &[f64]) -> Result<QpProblem, SimError> {
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0 * self.p_acc]));
        let f = DVector::zeros(2);
        let (safety, _) = self.barriers[0].evaluate(state, DomainPolicy::Clamp, ConstraintTag::HocbfSafety)?;
        let rows = vec![self.clf.constraint(state), safety.padded(2)];
        Ok(QpProblem::new(h, f, rows)?)
    }
    fn barriers(&self) -> &[HocbfSpec] {
        &self.barriers
    }
}

/// SACC plant, controller and safety spec. Uses `delta`, `v_ip`, `v_d`,
/// `eps`, `p_acc` and the penalties from `params`; the class-K functions
/// are always quadratic.
pub fn sacc_scenario(params: &AccParams) -> Result<(SaccPlant, SaccController), ParamError> {
    params.validate()?;
    let (p1, p2) = params.penalties();
    let provider = Arc::new(SaccLieJet { delta: params.delta, v_ip: params.v_ip });
    let spec = HocbfSpec::new(provider, Form::Quadratic.alphas(p1, p2)?).map_err(|e| ParamError(e.to_string()))?;
    let clf = ClfSpec::new(Arc::new(SaccLyapunov { v_d: params.v_d }), params.eps, params.p_acc)
        .map_err(|e| ParamError(e.to_string()))?;
    Ok((SaccPlant { v_ip: params.v_ip }, SaccController { barriers: vec![spec], clf, p_acc: params.p_acc }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Acc,
    Sacc,
}

impl FromStr for ScenarioKind {
    type Err = ParamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "acc" => Ok(ScenarioKind::Acc),
            "sacc" => Ok(ScenarioKind::Sacc),
            other => Err(ParamError(format!("unknown scenario '{other}', expected acc or sacc"))),
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioKind::Acc => "acc",
            ScenarioKind::Sacc => "sacc",
        })
    }
}

/// Runs a built-in scenario from its initial state.
pub fn simulate(kind: ScenarioKind, params: &AccParams, config: &SimConfig) -> Result<TrajectoryRecord, SimError> {
    let x0 = params.initial_state();
    match kind {
        ScenarioKind::Acc => {
            let controller = AccController::new(params).map_err(|e| SimError::Config(e.0))?;
            run(&acc_plant(params), &controller, &x0, config)
        }
        ScenarioKind::Sacc => {
            let (plant, controller) = sacc_scenario(params).map_err(|e| SimError::Config(e.0))?;
            run(&plant, &controller, &x0, config)
        }
    }
}

//! Time-discretized closed loop: freeze the state, solve the QP, hold the
//! control over the interval, integrate, repeat.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::hocbf::{ConstraintTag, DomainEvent, HocbfError, HocbfSpec, MembershipReport, PsiValues};
use crate::qp::{QpError, QpProblem, QpSolution, QpStatus};

/// Control-affine plant `ẋ = f(x) + g(x) u`.
pub trait Plant: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn drift(&self, x: &DVector<f64>) -> DVector<f64>;
    /// `state_dim × control_dim`
    fn input_matrix(&self, x: &DVector<f64>) -> DMatrix<f64>;

    fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.drift(x) + self.input_matrix(x) * u
    }
}

/// Builds the per-step QP at a frozen state.
///
/// The decision vector starts with the `control_dim` control inputs; any
/// further entries are relaxation variables.
pub trait Controller: Send + Sync {
    fn control_dim(&self) -> usize;
    fn build_qp(&self, state: &[f64]) -> Result<QpProblem, SimError>;
    /// Barriers monitored for forward invariance. The first one is the
    /// primary safety constraint.
    fn barriers(&self) -> &[HocbfSpec];
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("initial state is outside the safe set of barrier {barrier}: {report}")]
    InitialMembership { barrier: usize, report: MembershipReport },
    #[error(transparent)]
    Hocbf(#[from] HocbfError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("non-finite state at t = {0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    /// RK4 substeps per control interval.
    pub substeps: usize,
    pub violation_tol: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { dt: 0.1, horizon: 30.0, substeps: 4, violation_tol: 1e-6 }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(SimError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= self.dt * (1.0 - 1e-9)) || !self.horizon.is_finite() {
            return Err(SimError::Config(format!("horizon {} must be at least dt {}", self.horizon, self.dt)));
        }
        if self.substeps == 0 {
            return Err(SimError::Config("substeps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        ((self.horizon / self.dt).round() as usize).max(1)
    }
}

/// Classic RK4 over `[0, dt]` with `substeps` equal pieces and `u` held
/// constant.
pub fn integrate_rk4<P: Plant + ?Sized>(
    plant: &P,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
    substeps: usize,
) -> DVector<f64> {
    let h = dt / substeps as f64;
    let mut x = x.clone();
    for _ in 0..substeps {
        let k1 = plant.dynamics(&x, u);
        let k2 = plant.dynamics(&(&x + &k1 * (h / 2.0)), u);
        let k3 = plant.dynamics(&(&x + &k2 * (h / 2.0)), u);
        let k4 = plant.dynamics(&(&x + &k3 * h), u);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    x
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub solution: QpSolution,
    pub row_tags: Vec<ConstraintTag>,
    /// `c − aᵀz*` per row.
    pub slack: Vec<f64>,
    pub active: Vec<bool>,
    /// ψ values per monitored barrier at the frozen state.
    pub psi: Vec<PsiValues>,
    pub events: Vec<(usize, DomainEvent)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub u: DVector<f64>,
    pub relax: DVector<f64>,
    /// `None` when the QP was infeasible.
    pub next_state: Option<DVector<f64>>,
    pub diagnostics: StepDiagnostics,
}

/// One control interval from `state`.
pub fn step<P: Plant + ?Sized, C: Controller + ?Sized>(
    plant: &P,
    controller: &C,
    state: &DVector<f64>,
    dt: f64,
    substeps: usize,
) -> Result<StepOutcome, SimError> {
    let xs = state.as_slice();
    let mut psi = Vec::new();
    let mut events = Vec::new();
    for (k, barrier) in controller.barriers().iter().enumerate() {
        let chain = barrier.build_psi_chain(xs, crate::hocbf::DomainPolicy::Clamp)?;
        events.extend(chain.events.iter().map(|e| (k, *e)));
        psi.push(chain.psi);
    }
    let qp = controller.build_qp(xs)?;
    let solution = qp.solve();
    let q = controller.control_dim();
    let u = solution.z.rows(0, q).into_owned();
    let relax = solution.z.rows(q, solution.z.len() - q).into_owned();
    let slack: Vec<f64> = qp.rows().iter().map(|r| r.slack(solution.z.as_slice())).collect();
    let active = (0..slack.len()).map(|i| solution.active_set.contains(&i)).collect();
    let row_tags = qp.rows().iter().map(|r| r.tag).collect();
    let next_state = match solution.status {
        QpStatus::Optimal => Some(integrate_rk4(plant, state, &u, dt, substeps)),
        QpStatus::Infeasible => None,
    };
    Ok(StepOutcome {
        u,
        relax,
        next_state,
        diagnostics: StepDiagnostics { solution, row_tags, slack, active, psi, events },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub state: Vec<f64>,
    pub u: Vec<f64>,
    pub relax: Vec<f64>,
    pub psi: Vec<Vec<f64>>,
    pub row_tags: Vec<ConstraintTag>,
    pub slack: Vec<f64>,
    pub active: Vec<bool>,
    pub status: QpStatus,
    pub events: Vec<(usize, DomainEvent)>,
}

impl StepRecord {
    /// Index of the first row carrying `tag`.
    pub fn row_index(&self, tag: ConstraintTag) -> Option<usize> {
        self.row_tags.iter().position(|t| *t == tag)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySummary {
    pub min_u: Vec<f64>,
    pub max_u: Vec<f64>,
    /// `min_psi[barrier][k]` over all logged steps.
    pub min_psi: Vec<Vec<f64>>,
    pub infeasible_at: Option<f64>,
}

impl TrajectorySummary {
    /// Per-input minimum, taken as `−∞` when the run stopped on an
    /// infeasible QP: no admissible control met the constraints there.
    pub fn effective_min_u(&self) -> Vec<f64> {
        match self.infeasible_at {
            Some(_) => vec![f64::NEG_INFINITY; self.min_u.len()],
            None => self.min_u.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub steps: Vec<StepRecord>,
    /// State after the last completed interval.
    pub final_state: Vec<f64>,
    pub summary: TrajectorySummary,
}

impl TrajectoryRecord {
    /// Logged step whose time is closest to `t`.
    pub fn at_time(&self, t: f64) -> Option<&StepRecord> {
        self.steps.iter().min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
    }
}

/// Refuses to start outside `C₁ ∩ … ∩ C_m` of any barrier.
pub fn check_initial_state<C: Controller + ?Sized>(controller: &C, state: &[f64]) -> Result<(), SimError> {
    for (barrier, spec) in controller.barriers().iter().enumerate() {
        let report = spec.check_initial_membership(state)?;
        if !report.is_member() {
            return Err(SimError::InitialMembership { barrier, report });
        }
    }
    Ok(())
}

/// Runs the closed loop from `x0`. Stops at the first infeasible QP and
/// reports its time in the summary; that step is logged with zero control.
pub fn run<P: Plant + ?Sized, C: Controller + ?Sized>(
    plant: &P,
    controller: &C,
    x0: &[f64],
    config: &SimConfig,
) -> Result<TrajectoryRecord, SimError> {
    config.validate()?;
    if x0.len() != plant.state_dim() {
        return Err(SimError::Config(format!(
            "initial state has {} entries, plant expects {}",
            x0.len(),
            plant.state_dim()
        )));
    }
    check_initial_state(controller, x0)?;

    let q = controller.control_dim();
    let mut x = DVector::from_column_slice(x0);
    let mut steps = Vec::with_capacity(config.steps());
    let mut infeasible_at = None;
    for k in 0..config.steps() {
        let t = k as f64 * config.dt;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(SimError::NonFinite(t));
        }
        let out = step(plant, controller, &x, config.dt, config.substeps)?;
        let status = out.diagnostics.solution.status;
        let d = out.diagnostics;
        let (u, relax) = match status {
            QpStatus::Optimal => (out.u.as_slice().to_vec(), out.relax.as_slice().to_vec()),
            QpStatus::Infeasible => (vec![0.0; q], vec![0.0; out.relax.len()]),
        };
        steps.push(StepRecord {
            t,
            state: x.as_slice().to_vec(),
            u,
            relax,
            psi: d.psi.into_iter().map(|p| p.0).collect(),
            row_tags: d.row_tags,
            slack: d.slack,
            active: d.active,
            status,
            events: d.events,
        });
        match out.next_state {
            Some(next) => x = next,
            None => {
                infeasible_at = Some(t);
                break;
            }
        }
    }
    let summary = summarize(&steps, q, controller.barriers().len(), infeasible_at);
    Ok(TrajectoryRecord { steps, final_state: x.as_slice().to_vec(), summary })
}

fn summarize(steps: &[StepRecord], q: usize, barriers: usize, infeasible_at: Option<f64>) -> TrajectorySummary {
    let mut min_u = vec![f64::INFINITY; q];
    let mut max_u = vec![f64::NEG_INFINITY; q];
    let mut min_psi: Vec<Vec<f64>> = vec![Vec::new(); barriers];
    for s in steps {
        if s.status == QpStatus::Optimal {
            for (i, u) in s.u.iter().enumerate() {
                min_u[i] = min_u[i].min(*u);
                max_u[i] = max_u[i].max(*u);
            }
        }
        for (b, psi) in s.psi.iter().enumerate() {
            if min_psi[b].is_empty() {
                min_psi[b] = psi.clone();
            } else {
                for (m, v) in min_psi[b].iter_mut().zip(psi) {
                    *m = m.min(*v);
                }
            }
        }
    }
    TrajectorySummary { min_u, max_u, min_psi, infeasible_at }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierInvariance {
    pub min_psi: Vec<f64>,
    /// `(step index, ψ index)` of the first value below `−tol`.
    pub first_violation: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceReport {
    pub barriers: Vec<BarrierInvariance>,
    pub tol: f64,
}

impl InvarianceReport {
    pub fn passed(&self) -> bool {
        self.barriers.iter().all(|b| b.first_violation.is_none())
    }
}

/// Checks `ψ_k ≥ −tol` for every logged step, barrier and chain index.
pub fn verify_invariance(record: &TrajectoryRecord, tol: f64) -> InvarianceReport {
    let n_barriers = record.steps.first().map_or(0, |s| s.psi.len());
    let barriers = (0..n_barriers)
        .map(|b| {
            let mut min_psi: Vec<f64> = Vec::new();
            let mut first_violation = None;
            for (i, s) in record.steps.iter().enumerate() {
                let psi = &s.psi[b];
                if min_psi.is_empty() {
                    min_psi = vec![f64::INFINITY; psi.len()];
                }
                for (k, v) in psi.iter().enumerate() {
                    min_psi[k] = min_psi[k].min(*v);
                    if first_violation.is_none() && !(*v >= -tol) {
                        first_violation = Some((i, k));
                    }
                }
            }
            BarrierInvariance { min_psi, first_violation }
        })
        .collect();
    InvarianceReport { barriers, tol }
}

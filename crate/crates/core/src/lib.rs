//! High-order control barrier functions for safety-critical control.
//!
//! The crate builds the linear-in-control safety constraint of a constraint
//! function with arbitrary relative degree, combines it with a relaxed CLF
//! row into a small dense QP, and simulates the sampled-data closed loop.
//!
//! * [`classk`]: class-K functions with analytic derivatives.
//! * [`jets`]: truncated time-derivative jets and Faà di Bruno composition.
//! * [`hocbf`]: the ψ-chain, HOCBF rows and initial-set membership.
//! * [`clf`]: relaxed exponential CLF rows.
//! * [`qp`]: dual active-set QP solver plus an enumeration oracle.
//! * [`sim`]: zero-order-hold closed loop and invariance monitoring.
//! * [`acc`]: adaptive cruise control scenarios.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod acc;
pub mod classk;
pub mod clf;
pub mod hocbf;
pub mod jets;
pub mod qp;
pub mod sim;

pub use acc::{AccParams, Form, ScenarioKind};
pub use classk::{ClassKError, ClassKFn, ClassKKind};
pub use clf::{ClfSpec, Lyapunov, LyapunovValues};
pub use hocbf::{
    ConstraintTag, DomainPolicy, HocbfError, HocbfSpec, LieJet, LieJetProvider, LinearControlConstraint,
    MembershipReport, PsiValues,
};
pub use jets::{Jet, JetError};
pub use qp::{QpError, QpProblem, QpSolution, QpStatus};
pub use sim::{Controller, Plant, SimConfig, SimError, TrajectoryRecord};

//! Relaxed exponential control Lyapunov function constraint.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::hocbf::{ConstraintTag, LinearControlConstraint};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClfError {
    #[error("invalid CLF parameter: {0}")]
    Parameter(String),
}

/// `V`, `L_f V` and `L_g V` at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovValues {
    pub v: f64,
    pub lf_v: f64,
    pub lg_v: Vec<f64>,
}

pub trait Lyapunov: Send + Sync {
    fn evaluate(&self, state: &[f64]) -> LyapunovValues;
}

#[derive(Clone)]
pub struct ClfSpec {
    lyapunov: Arc<dyn Lyapunov>,
    epsilon: f64,
    relax_weight: f64,
}

impl fmt::Debug for ClfSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClfSpec")
            .field("epsilon", &self.epsilon)
            .field("relax_weight", &self.relax_weight)
            .finish_non_exhaustive()
    }
}

impl ClfSpec {
    pub fn new(lyapunov: Arc<dyn Lyapunov>, epsilon: f64, relax_weight: f64) -> Result<Self, ClfError> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(ClfError::Parameter(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(relax_weight > 0.0) || !relax_weight.is_finite() {
            return Err(ClfError::Parameter(format!("relaxation weight must be positive, got {relax_weight}")));
        }
        Ok(Self { lyapunov, epsilon, relax_weight })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Weight `p` of the `p·δ²` term the relaxation contributes to the cost.
    pub fn relax_weight(&self) -> f64 {
        self.relax_weight
    }

    /// `L_f V + L_g V·u + εV ≤ δ` over the decision vector `(u, δ)`:
    /// row `[L_g V, −1]`, bound `−L_f V − εV`.
    pub fn constraint(&self, state: &[f64]) -> LinearControlConstraint {
        let LyapunovValues { v, lf_v, lg_v } = self.lyapunov.evaluate(state);
        let mut a = lg_v;
        a.push(-1.0);
        LinearControlConstraint::new(a, -lf_v - self.epsilon * v, ConstraintTag::Clf)
    }
}

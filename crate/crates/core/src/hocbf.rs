//! High-order control barrier functions.
//!
//! Given a constraint `b(x) ≥ 0` of relative degree `m` and class-K functions
//! `α₁ … α_m`, the ψ-chain is
//!
//! ```text
//! ψ₀ = b,   ψᵢ = ψ̇ᵢ₋₁ + αᵢ(ψᵢ₋₁),   i = 1 … m
//! ```
//!
//! The control only appears in `ψ_m`, affinely. [`HocbfSpec::evaluate`] runs
//! the chain on jets seeded from the scenario's Lie derivatives and returns
//! the QP row `ψ_m ≥ 0` normalized to `aᵀu ≤ c`.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::classk::{ClassKError, ClassKFn};
use crate::jets::{Jet, JetError};

/// `|ψ| ≤ JITTER_TOL` below zero is treated as rounding, not a violation.
pub const JITTER_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HocbfError {
    #[error("psi_{index} = {value} is outside the class-K domain")]
    Domain { index: usize, value: f64 },
    #[error("expected {expected} class-K functions for relative degree {expected}, got {got}")]
    AlphaCount { expected: usize, got: usize },
    #[error("provider returned {got} Lie derivatives, expected {expected}")]
    LieJetLength { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Jet(#[from] JetError),
}

/// Lie derivatives of a constraint function at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct LieJet {
    /// `(b, L_f b, …, L_f^m b)`
    pub lie: Vec<f64>,
    /// `L_g L_f^{m−1} b`, one entry per control input.
    pub input_row: Vec<f64>,
}

/// Analytic Lie derivatives of a constraint function.
///
/// Implementors guarantee `L_g L_f^k b ≡ 0` for `k < m − 1`.
pub trait LieJetProvider: Send + Sync {
    fn relative_degree(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn evaluate(&self, state: &[f64]) -> LieJet;
}

/// Provenance of a [`LinearControlConstraint`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintTag {
    HocbfSafety,
    CbfSpeedMax,
    CbfSpeedMin,
    Clf,
    ControlLimit,
    /// Rows built by callers outside the built-in scenarios.
    Custom,
}

impl fmt::Display for ConstraintTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ConstraintTag::HocbfSafety => "hocbf-safety",
            ConstraintTag::CbfSpeedMax => "cbf-speed-max",
            ConstraintTag::CbfSpeedMin => "cbf-speed-min",
            ConstraintTag::Clf => "clf",
            ConstraintTag::ControlLimit => "control-limit",
            ConstraintTag::Custom => "custom",
        };
        f.write_str(s)
    }
}

/// The row `aᵀz ≤ c`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearControlConstraint {
    pub a: Vec<f64>,
    pub c: f64,
    pub tag: ConstraintTag,
}

impl LinearControlConstraint {
    pub fn new(a: Vec<f64>, c: f64, tag: ConstraintTag) -> Self {
        Self { a, c, tag }
    }

    /// Pads the row with zero coefficients for extra decision variables
    /// (relaxations) appended after the control.
    pub fn padded(mut self, len: usize) -> Self {
        if self.a.len() < len {
            self.a.resize(len, 0.0);
        }
        self
    }

    /// `c − aᵀz`; nonnegative when satisfied.
    pub fn slack(&self, z: &[f64]) -> f64 {
        self.c - self.a.iter().zip(z).map(|(a, z)| a * z).sum::<f64>()
    }

    pub fn is_finite(&self) -> bool {
        self.c.is_finite() && self.a.iter().all(|a| a.is_finite())
    }
}

/// `(ψ₀, …, ψ_{m−1})` at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiValues(pub Vec<f64>);

impl PsiValues {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// How negative ψ values are handled when they feed a class-K function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainPolicy {
    /// Any negative ψ is an error.
    Strict,
    /// Negative ψ is clamped to 0 and reported as an event.
    Clamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainEventKind {
    /// `−JITTER_TOL ≤ ψ < 0`.
    Jitter,
    /// `ψ < −JITTER_TOL`.
    Violation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainEvent {
    pub psi_index: usize,
    pub value: f64,
    pub kind: DomainEventKind,
}

/// Result of running the ψ-chain at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiChain {
    pub psi: PsiValues,
    /// Order-0 jet of `ψ_m`: constant part plus control row.
    pub final_jet: Jet,
    pub events: Vec<DomainEvent>,
}

#[derive(Clone)]
pub struct HocbfSpec {
    provider: Arc<dyn LieJetProvider>,
    alphas: Vec<ClassKFn>,
}

impl fmt::Debug for HocbfSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HocbfSpec")
            .field("relative_degree", &self.provider.relative_degree())
            .field("alphas", &self.alphas)
            .finish()
    }
}

impl HocbfSpec {
    pub fn new(provider: Arc<dyn LieJetProvider>, alphas: Vec<ClassKFn>) -> Result<Self, HocbfError> {
        let m = provider.relative_degree();
        if m == 0 {
            return Err(HocbfError::Parameter("relative degree must be positive".into()));
        }
        if alphas.len() != m {
            return Err(HocbfError::AlphaCount { expected: m, got: alphas.len() });
        }
        Ok(Self { provider, alphas })
    }

    pub fn relative_degree(&self) -> usize {
        self.provider.relative_degree()
    }

    pub fn control_dim(&self) -> usize {
        self.provider.control_dim()
    }

    pub fn alphas(&self) -> &[ClassKFn] {
        &self.alphas
    }

    pub fn provider(&self) -> &Arc<dyn LieJetProvider> {
        &self.provider
    }

    /// Seeds the ψ₀ jet from the provider.
    fn seed(&self, state: &[f64]) -> Result<Jet, HocbfError> {
        let m = self.relative_degree();
        let LieJet { lie, input_row } = self.provider.evaluate(state);
        if lie.len() != m + 1 {
            return Err(HocbfError::LieJetLength { expected: m + 1, got: lie.len() });
        }
        Ok(Jet::new(lie, input_row)?)
    }

    /// Runs the ψ-chain at `state`.
    ///
    /// The jet of `ψᵢ` has order `m − i`. Each step differentiates the
    /// previous jet and adds `αᵢ` composed with the previous jet truncated
    /// to the same order, so the control row only ever comes from the
    /// shifted term.
    pub fn build_psi_chain(&self, state: &[f64], policy: DomainPolicy) -> Result<PsiChain, HocbfError> {
        let mut jet = self.seed(state)?;
        let mut psi = Vec::with_capacity(self.alphas.len());
        let mut events = Vec::new();
        for (i, alpha) in self.alphas.iter().enumerate() {
            let value = jet.value();
            psi.push(value);
            let mut arg = jet.truncate(jet.order() - 1)?;
            if value < 0.0 {
                match policy {
                    DomainPolicy::Strict => return Err(HocbfError::Domain { index: i, value }),
                    DomainPolicy::Clamp => {
                        let kind =
                            if value >= -JITTER_TOL { DomainEventKind::Jitter } else { DomainEventKind::Violation };
                        events.push(DomainEvent { psi_index: i, value, kind });
                        let mut coeffs = arg.coeffs().to_vec();
                        coeffs[0] = 0.0;
                        arg = Jet::new(coeffs, arg.u_coeffs().to_vec())?;
                    }
                }
            }
            let composed = arg.compose_classk(alpha).map_err(|e| match e {
                JetError::ClassK(ClassKError::Domain(v)) => HocbfError::Domain { index: i, value: v },
                other => HocbfError::Jet(other),
            })?;
            jet = jet.shift()?.add(&composed)?;
        }
        Ok(PsiChain { psi: PsiValues(psi), final_jet: jet, events })
    }

    /// ψ values only, control-free. Never fails on negative ψ.
    pub fn psi_values(&self, state: &[f64]) -> Result<PsiValues, HocbfError> {
        Ok(self.build_psi_chain(state, DomainPolicy::Clamp)?.psi)
    }

    /// The HOCBF row `k₀ + k₁ᵀu ≥ 0` as `(−k₁)ᵀu ≤ k₀`, with the chain's
    /// domain events.
    pub fn evaluate(
        &self,
        state: &[f64],
        policy: DomainPolicy,
        tag: ConstraintTag,
    ) -> Result<(LinearControlConstraint, PsiChain), HocbfError> {
        let chain = self.build_psi_chain(state, policy)?;
        let row = LinearControlConstraint::new(
            chain.final_jet.u_coeffs().iter().map(|k| -k).collect(),
            chain.final_jet.value(),
            tag,
        );
        Ok((row, chain))
    }

    /// Strict-domain HOCBF row tagged `hocbf-safety`.
    pub fn constraint(&self, state: &[f64]) -> Result<LinearControlConstraint, HocbfError> {
        Ok(self.evaluate(state, DomainPolicy::Strict, ConstraintTag::HocbfSafety)?.0)
    }

    /// Whether `state` lies in `C₁ ∩ … ∩ C_m`.
    pub fn check_initial_membership(&self, state: &[f64]) -> Result<MembershipReport, HocbfError> {
        let psi = self.psi_values(state)?;
        let members = psi.0.iter().map(|v| *v >= 0.0).collect();
        Ok(MembershipReport { psi, members })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MembershipReport {
    pub psi: PsiValues,
    /// `members[k]` is `ψ_k ≥ 0`, i.e. membership in `C_{k+1}`.
    pub members: Vec<bool>,
}

impl MembershipReport {
    pub fn is_member(&self) -> bool {
        self.members.iter().all(|m| *m)
    }

    /// Index of the first ψ that is negative.
    pub fn first_failure(&self) -> Option<usize> {
        self.members.iter().position(|m| !m)
    }
}

impl fmt::Display for MembershipReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, (v, ok)) in self.psi.0.iter().zip(&self.members).enumerate() {
            if k > 0 {
                f.write_str(", ")?;
            }
            write!(f, "psi{k} = {v:.6e} ({})", if *ok { "ok" } else { "negative" })?;
        }
        Ok(())
    }
}

/// Exponential CBF: the HOCBF with `αᵢ(s) = kᵢ s`.
pub fn exponential_cbf_spec(provider: Arc<dyn LieJetProvider>, gains: &[f64]) -> Result<HocbfSpec, HocbfError> {
    let alphas = gains
        .iter()
        .map(|k| ClassKFn::linear(*k).map_err(|_| HocbfError::Parameter(format!("gain must be positive, got {k}"))))
        .collect::<Result<Vec<_>, _>>()?;
    HocbfSpec::new(provider, alphas)
}

pub fn exponential_cbf_constraint(
    provider: Arc<dyn LieJetProvider>,
    gains: &[f64],
    state: &[f64],
) -> Result<LinearControlConstraint, HocbfError> {
    exponential_cbf_spec(provider, gains)?.constraint(state)
}

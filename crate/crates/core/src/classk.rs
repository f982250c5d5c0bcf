//! Class-K functions with analytic derivatives and penalty scaling.
//!
//! Every function here is `s ↦ p·α(s)` where `α` is one of a small set of
//! analytic kinds and `p > 0` is a multiplicative penalty. Derivatives are
//! exact, which is what lets the jet engine push class-K compositions
//! through arbitrarily many time derivatives.

use thiserror::Error;

/// Lower clamp applied to the derivative argument of fractional powers at 0.
pub const EPS_SQRT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassKError {
    #[error("class-K argument {0} is negative")]
    Domain(f64),
    #[error("invalid class-K parameter: {0}")]
    Parameter(String),
}

/// The analytic shape of a class-K function, before the penalty is applied.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassKKind {
    /// `s ↦ k·s`
    Linear { gain: f64 },
    /// `s ↦ s^e`; `e = 0.5` is the square root, `e = 2` the quadratic.
    Power { exponent: f64 },
    /// `s ↦ Σ cᵢ s^(i+1)` with no constant term.
    Polynomial { coeffs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassKFn {
    kind: ClassKKind,
    penalty: f64,
}

/// Output of [`ClassKFn::eval_derivs`].
#[derive(Debug, Clone, PartialEq)]
pub struct Derivatives {
    /// `(α, α′, …, α^(order))`, penalty included.
    pub values: Vec<f64>,
    /// Set when a fractional power had its derivative argument raised to
    /// [`EPS_SQRT`].
    pub guarded: bool,
}

impl ClassKFn {
    pub fn new(kind: ClassKKind, penalty: f64) -> Result<Self, ClassKError> {
        if !(penalty > 0.0) || !penalty.is_finite() {
            return Err(ClassKError::Parameter(format!("penalty must be positive, got {penalty}")));
        }
        match &kind {
            ClassKKind::Linear { gain } => {
                if !(*gain > 0.0) || !gain.is_finite() {
                    return Err(ClassKError::Parameter(format!("linear gain must be positive, got {gain}")));
                }
            }
            ClassKKind::Power { exponent } => {
                if !(*exponent > 0.0) || !exponent.is_finite() {
                    return Err(ClassKError::Parameter(format!("power exponent must be positive, got {exponent}")));
                }
            }
            ClassKKind::Polynomial { coeffs } => {
                // Nonnegative coefficients with one positive entry keep the
                // polynomial strictly increasing on [0, ∞).
                if coeffs.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) || !coeffs.iter().any(|c| *c > 0.0) {
                    return Err(ClassKError::Parameter(
                        "polynomial coefficients must be nonnegative with at least one positive".into(),
                    ));
                }
            }
        }
        Ok(Self { kind, penalty })
    }

    pub fn linear(gain: f64) -> Result<Self, ClassKError> {
        Self::new(ClassKKind::Linear { gain }, 1.0)
    }

    pub fn power(exponent: f64) -> Result<Self, ClassKError> {
        Self::new(ClassKKind::Power { exponent }, 1.0)
    }

    pub fn sqrt() -> Self {
        Self::power(0.5).expect("valid exponent")
    }

    pub fn quadratic() -> Self {
        Self::power(2.0).expect("valid exponent")
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self, ClassKError> {
        Self::new(ClassKKind::Polynomial { coeffs }, 1.0)
    }

    /// Returns the same function with its penalty replaced.
    pub fn with_penalty(mut self, penalty: f64) -> Result<Self, ClassKError> {
        if !(penalty > 0.0) || !penalty.is_finite() {
            return Err(ClassKError::Parameter(format!("penalty must be positive, got {penalty}")));
        }
        self.penalty = penalty;
        Ok(self)
    }

    pub fn kind(&self) -> &ClassKKind {
        &self.kind
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    /// `p·α(s)`. Negative arguments are refused; the caller decides whether
    /// that is jitter or a genuine invariance violation.
    pub fn eval(&self, s: f64) -> Result<f64, ClassKError> {
        if s < 0.0 || s.is_nan() {
            return Err(ClassKError::Domain(s));
        }
        if s == 0.0 {
            return Ok(0.0);
        }
        Ok(self.penalty * self.raw_derivative(s, 0))
    }

    /// `(p·α, p·α′, …)` at `s`, `order + 1` entries.
    pub fn eval_derivs(&self, s: f64, order: usize) -> Result<Derivatives, ClassKError> {
        let value = self.eval(s)?;
        let mut values = Vec::with_capacity(order + 1);
        values.push(value);
        let mut guarded = false;
        for k in 1..=order {
            let arg = match &self.kind {
                ClassKKind::Power { exponent } if s < EPS_SQRT && exponent.fract() != 0.0 && *exponent < k as f64 => {
                    guarded = true;
                    EPS_SQRT
                }
                _ => s,
            };
            values.push(self.penalty * self.raw_derivative(arg, k));
        }
        Ok(Derivatives { values, guarded })
    }

    /// k-th derivative of the unpenalized α at s.
    fn raw_derivative(&self, s: f64, k: usize) -> f64 {
        match &self.kind {
            ClassKKind::Linear { gain } => match k {
                0 => gain * s,
                1 => *gain,
                _ => 0.0,
            },
            ClassKKind::Power { exponent } => {
                let e = *exponent;
                let falling = falling_factorial(e, k);
                if falling == 0.0 {
                    0.0
                } else {
                    falling * s.powf(e - k as f64)
                }
            }
            ClassKKind::Polynomial { coeffs } => coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let degree = i + 1;
                    if degree < k {
                        0.0
                    } else {
                        c * falling_factorial(degree as f64, k) * s.powi((degree - k) as i32)
                    }
                })
                .sum(),
        }
    }
}

/// `e (e−1) … (e−k+1)`; 1 for `k = 0`.
fn falling_factorial(e: f64, k: usize) -> f64 {
    (0..k).map(|i| e - i as f64).product()
}

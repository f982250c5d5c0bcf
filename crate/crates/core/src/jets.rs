//! Truncated time-derivative jets with a single affine control slot.
//!
//! A [`Jet`] of order `r` holds `(c₀, c₁, …, c_r)`, the first `r` total time
//! derivatives of a scalar along the closed-loop flow. The control input only
//! ever enters the top derivative, and only affinely, so the top slot is
//! stored as a control-free part `c_r` plus a row `u` such that the true top
//! derivative is `c_r + u·u_input`.

use thiserror::Error;

use crate::classk::{ClassKError, ClassKFn};

/// Highest jet order supported by class-K composition.
pub const MAX_ORDER: usize = 6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JetError {
    #[error("jet arity mismatch: {0}")]
    Arity(String),
    #[error("jet order {0} exceeds the supported maximum {MAX_ORDER}")]
    OrderCap(usize),
    #[error("control enters the value slot of an order-0 jet; composition would not be affine")]
    NonAffine,
    #[error(transparent)]
    ClassK(#[from] ClassKError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    coeffs: Vec<f64>,
    u: Vec<f64>,
}

impl Jet {
    /// Builds a jet from its control-free derivatives and the control row of
    /// the top slot.
    pub fn new(coeffs: Vec<f64>, u: Vec<f64>) -> Result<Self, JetError> {
        if coeffs.is_empty() {
            return Err(JetError::Arity("a jet needs at least one coefficient".into()));
        }
        Ok(Self { coeffs, u })
    }

    /// A control-free jet.
    pub fn control_free(coeffs: Vec<f64>, control_dim: usize) -> Result<Self, JetError> {
        Self::new(coeffs, vec![0.0; control_dim])
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Control row attached to the top slot.
    pub fn u_coeffs(&self) -> &[f64] {
        &self.u
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn control_dim(&self) -> usize {
        self.u.len()
    }

    fn has_control(&self) -> bool {
        self.u.iter().any(|c| *c != 0.0)
    }

    /// The jet of the time derivative: drops `c₀`, the control row moves
    /// down with the top slot.
    pub fn shift(&self) -> Result<Jet, JetError> {
        if self.order() == 0 {
            return Err(JetError::Arity("cannot differentiate an order-0 jet".into()));
        }
        Ok(Jet { coeffs: self.coeffs[1..].to_vec(), u: self.u.clone() })
    }

    /// Keeps the first `order + 1` slots. Truncating below the top slot
    /// discards the control row.
    pub fn truncate(&self, order: usize) -> Result<Jet, JetError> {
        if order > self.order() {
            return Err(JetError::Arity(format!("cannot truncate order {} jet to order {order}", self.order())));
        }
        if order == self.order() {
            return Ok(self.clone());
        }
        Ok(Jet { coeffs: self.coeffs[..=order].to_vec(), u: vec![0.0; self.u.len()] })
    }

    pub fn add(&self, other: &Jet) -> Result<Jet, JetError> {
        self.check_same_shape(other)?;
        Ok(Jet {
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
            u: self.u.iter().zip(&other.u).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn scale(&self, k: f64) -> Jet {
        Jet { coeffs: self.coeffs.iter().map(|c| k * c).collect(), u: self.u.iter().map(|c| k * c).collect() }
    }

    fn check_same_shape(&self, other: &Jet) -> Result<(), JetError> {
        if self.order() != other.order() {
            return Err(JetError::Arity(format!("orders differ: {} vs {}", self.order(), other.order())));
        }
        if self.u.len() != other.u.len() {
            return Err(JetError::Arity(format!("control dimensions differ: {} vs {}", self.u.len(), other.u.len())));
        }
        Ok(())
    }

    /// Jet of `α(ψ)` where `self` is the jet of `ψ`, by Faà di Bruno:
    ///
    /// `dⁿ/dtⁿ α(ψ) = Σₖ α⁽ᵏ⁾(ψ) · Bₙ,ₖ(ψ′, ψ″, …, ψ⁽ⁿ⁻ᵏ⁺¹⁾)`
    ///
    /// The top derivative `ψ⁽ʳ⁾` appears only in `B_{r,1}`, so the control
    /// row of the result is `α′(ψ)·u`.
    pub fn compose_classk(&self, f: &ClassKFn) -> Result<Jet, JetError> {
        let r = self.order();
        if r > MAX_ORDER {
            return Err(JetError::OrderCap(r));
        }
        if r == 0 && self.has_control() {
            return Err(JetError::NonAffine);
        }
        let derivs = f.eval_derivs(self.coeffs[0], r)?.values;
        let bell = bell_table(&self.coeffs[1..], r);

        let mut coeffs = Vec::with_capacity(r + 1);
        coeffs.push(derivs[0]);
        for n in 1..=r {
            let c = (1..=n).map(|k| derivs[k] * bell[n][k]).sum();
            coeffs.push(c);
        }
        let u = if r == 0 { self.u.clone() } else { self.u.iter().map(|c| derivs[1] * c).collect() };
        Ok(Jet { coeffs, u })
    }
}

/// Partial Bell polynomials `B[n][k] = Bₙ,ₖ(x₁, …, x_{n−k+1})` for
/// `0 ≤ k ≤ n ≤ r`, with `xs[i] = x_{i+1}`. Uses
/// `Bₙ,ₖ = Σᵢ C(n−1, i−1) xᵢ Bₙ₋ᵢ,ₖ₋₁`.
fn bell_table(xs: &[f64], r: usize) -> Vec<Vec<f64>> {
    let mut b = vec![vec![0.0; r + 1]; r + 1];
    b[0][0] = 1.0;
    for n in 1..=r {
        for k in 1..=n {
            let mut acc = 0.0;
            for i in 1..=(n - k + 1) {
                acc += binomial(n - 1, i - 1) * xs[i - 1] * b[n - i][k - 1];
            }
            b[n][k] = acc;
        }
    }
    b
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jet(coeffs: &[f64], u: f64) -> Jet {
        Jet::new(coeffs.to_vec(), vec![u]).unwrap()
    }

    #[test]
    fn shift_examples() {
        let j = jet(&[90.0, -6.11, 0.1213], -6.06e-4);
        let s = j.shift().unwrap();
        assert_eq!(s.coeffs(), &[-6.11, 0.1213]);
        assert_eq!(s.u_coeffs(), &[-6.06e-4]);

        assert_eq!(jet(&[5.0, 0.0, 0.0], 0.0).shift().unwrap().coeffs(), &[0.0, 0.0]);
        assert_eq!(jet(&[1.5, 2.5], 0.0).shift().unwrap().coeffs(), &[2.5]);
        assert!(matches!(jet(&[1.0], 0.0).shift(), Err(JetError::Arity(_))));
    }

    #[test]
    fn add_and_scale() {
        let s = jet(&[1.0, 2.0], 2.0).add(&jet(&[3.0, 4.0], 3.0)).unwrap();
        assert_eq!(s.coeffs(), &[4.0, 6.0]);
        assert_eq!(s.u_coeffs(), &[5.0]);
        assert_eq!(jet(&[1.0, 2.0], 1.0).scale(0.0).coeffs(), &[0.0, 0.0]);
        assert!(jet(&[1.0], 0.0).add(&jet(&[1.0, 2.0], 0.0)).is_err());
    }

    #[test]
    fn truncate_drops_control_below_top() {
        let j = jet(&[1.0, 2.0, 3.0], 7.0);
        let t = j.truncate(1).unwrap();
        assert_eq!(t.coeffs(), &[1.0, 2.0]);
        assert_eq!(t.u_coeffs(), &[0.0]);
        assert_eq!(j.truncate(2).unwrap(), j);
        assert!(j.truncate(3).is_err());
    }

    #[test]
    fn compose_quadratic_chain_rule() {
        let q = ClassKFn::quadratic();
        let (b, bd) = (1.7, -0.4);
        let c = jet(&[b, bd], 0.0).compose_classk(&q).unwrap();
        assert_eq!(c.coeffs(), &[b * b, 2.0 * b * bd]);

        // d²/dt² ψ² = 2ψ̇² + 2ψψ̈ = 8 + 6
        let c = jet(&[3.0, 2.0, 1.0], 0.5).compose_classk(&q).unwrap();
        assert_eq!(c.coeffs(), &[9.0, 12.0, 14.0]);
        assert_eq!(c.u_coeffs(), &[6.0 * 0.5]);
    }

    #[test]
    fn compose_linear_is_slotwise_scaling() {
        let p = 0.7;
        let f = ClassKFn::linear(p).unwrap();
        let j = jet(&[3.0, -1.0, 2.0, 4.0], 1.5);
        let c = j.compose_classk(&f).unwrap();
        let expect = j.scale(p);
        for (a, b) in c.coeffs().iter().zip(expect.coeffs()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((c.u_coeffs()[0] - 1.5 * p).abs() < 1e-15);
    }

    #[test]
    fn compose_rejects_control_in_value_slot() {
        let q = ClassKFn::quadratic();
        assert_eq!(jet(&[1.0], 1.0).compose_classk(&q), Err(JetError::NonAffine));
        assert!(jet(&[1.0], 0.0).compose_classk(&q).is_ok());
    }

    #[test]
    fn compose_caps_order() {
        let q = ClassKFn::quadratic();
        let j = jet(&[1.0; MAX_ORDER + 2], 0.0);
        assert_eq!(j.compose_classk(&q), Err(JetError::OrderCap(MAX_ORDER + 1)));
    }

    #[test]
    fn compose_propagates_domain_error() {
        let q = ClassKFn::quadratic();
        assert!(matches!(jet(&[-1.0, 0.0], 0.0).compose_classk(&q), Err(JetError::ClassK(ClassKError::Domain(_)))));
    }

    #[test]
    fn bell_polynomials_small_orders() {
        let x = [2.0, 3.0, 5.0, 7.0];
        let b = bell_table(&x, 4);
        // B_{4,2} = 4 x1 x3 + 3 x2²
        assert_eq!(b[4][2], 4.0 * 2.0 * 5.0 + 3.0 * 9.0);
        // B_{4,3} = 6 x1² x2
        assert_eq!(b[4][3], 6.0 * 4.0 * 3.0);
        assert_eq!(b[4][4], 16.0);
        assert_eq!(b[4][1], 7.0);
    }
}

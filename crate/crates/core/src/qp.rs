//! Small dense strictly convex quadratic programs.
//!
//! ```text
//! minimize   ½ zᵀ H z + Fᵀ z
//! subject to aᵢᵀ z ≤ cᵢ
//! ```
//!
//! [`QpProblem::solve`] is a dual active-set method in the style of Goldfarb
//! and Idnani: it starts from the unconstrained minimizer, which is dual
//! feasible, and repeatedly adds the most violated row while keeping the
//! multipliers nonnegative. [`QpProblem::solve_oracle`] enumerates active
//! sets and is only meant for cross-checking on tiny problems.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

use crate::hocbf::LinearControlConstraint;

/// Rows with `|c − aᵀz| ≤ TOL_ACTIVE` are reported active.
pub const TOL_ACTIVE: f64 = 1e-7;
/// Optimal solutions satisfy every row to within this bound.
pub const TOL_FEAS: f64 = 1e-8;
/// Largest row count accepted by [`QpProblem::solve_oracle`].
pub const ORACLE_MAX_ROWS: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("H is not symmetric")]
    NotSymmetric,
    #[error("H is not positive definite")]
    NotPositiveDefinite,
    #[error("row {0} has non-finite entries")]
    NonFinite(usize),
    #[error("oracle accepts at most {ORACLE_MAX_ROWS} rows, got {0}")]
    TooManyRows(usize),
    #[error("oracle found a feasible point but no KKT point")]
    OracleInconsistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
}

impl QpStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub status: QpStatus,
    /// Minimizer; for infeasible problems, the last iterate.
    pub z: DVector<f64>,
    pub objective: f64,
    /// One multiplier per row, zero on inactive rows.
    pub multipliers: Vec<f64>,
    /// Rows with `|c − aᵀz| ≤ TOL_ACTIVE`.
    pub active_set: Vec<usize>,
    /// Nonnegative row weights `y` with `Σ yᵢ aᵢ = 0` and `Σ yᵢ cᵢ < 0`,
    /// when the solver found one.
    pub certificate: Option<Vec<f64>>,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

#[derive(Debug, Clone)]
pub struct QpProblem {
    h: DMatrix<f64>,
    f: DVector<f64>,
    rows: Vec<LinearControlConstraint>,
    chol: Cholesky<f64, Dyn>,
}

impl QpProblem {
    pub fn new(h: DMatrix<f64>, f: DVector<f64>, rows: Vec<LinearControlConstraint>) -> Result<Self, QpError> {
        let n = h.nrows();
        if h.ncols() != n || f.len() != n {
            return Err(QpError::Dimension(format!("H is {}x{}, F has {} entries", h.nrows(), h.ncols(), f.len())));
        }
        if n == 0 {
            return Err(QpError::Dimension("empty decision vector".into()));
        }
        for i in 0..n {
            for j in 0..i {
                if (h[(i, j)] - h[(j, i)]).abs() > 1e-12 {
                    return Err(QpError::NotSymmetric);
                }
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.a.len() != n {
                return Err(QpError::Dimension(format!("row {i} has {} coefficients, expected {n}", row.a.len())));
            }
            if !row.is_finite() {
                return Err(QpError::NonFinite(i));
            }
        }
        if !f.iter().all(|v| v.is_finite()) || !h.iter().all(|v| v.is_finite()) {
            return Err(QpError::Dimension("non-finite objective".into()));
        }
        let chol = Cholesky::new(h.clone()).ok_or(QpError::NotPositiveDefinite)?;
        Ok(Self { h, f, rows, chol })
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn f(&self) -> &DVector<f64> {
        &self.f
    }

    pub fn rows(&self) -> &[LinearControlConstraint] {
        &self.rows
    }

    /// A copy with one more row.
    pub fn with_row(&self, row: LinearControlConstraint) -> Result<Self, QpError> {
        let mut rows = self.rows.clone();
        rows.push(row);
        Self::new(self.h.clone(), self.f.clone(), rows)
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.h * z)) + self.f.dot(z)
    }

    fn row_vec(&self, i: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.rows[i].a)
    }

    /// Constraint value `aᵢᵀz − cᵢ` (positive when violated).
    fn violation(&self, i: usize, z: &DVector<f64>) -> f64 {
        -self.rows[i].slack(z.as_slice())
    }

    fn finish(
        &self,
        status: QpStatus,
        z: DVector<f64>,
        multipliers: Vec<f64>,
        certificate: Option<Vec<f64>>,
    ) -> QpSolution {
        let active_set =
            (0..self.rows.len()).filter(|&i| self.rows[i].slack(z.as_slice()).abs() <= TOL_ACTIVE).collect();
        QpSolution { status, objective: self.objective(&z), z, multipliers, active_set, certificate }
    }

    /// Dual active-set solve.
    pub fn solve(&self) -> QpSolution {
        let m = self.rows.len();
        let hinv_f = self.chol.solve(&self.f);
        let mut z = -hinv_f;
        let mut active: Vec<usize> = Vec::new();
        let mut lambda: Vec<f64> = Vec::new();
        let norms: Vec<f64> =
            self.rows.iter().map(|r| r.a.iter().map(|a| a * a).sum::<f64>().sqrt().max(f64::MIN_POSITIVE)).collect();
        let max_iter = 20 * (m + self.dim()) + 50;
        let mut iter = 0;

        loop {
            // Most violated row, measured in distance.
            let mut pick: Option<(usize, f64)> = None;
            for i in 0..m {
                if active.contains(&i) {
                    continue;
                }
                let g = self.violation(i, &z);
                let zmax = z.amax();
                let tol = 1e-12 * (1.0 + self.rows[i].c.abs() + norms[i] * zmax * self.dim() as f64);
                if g > tol {
                    let scaled = g / norms[i];
                    if pick.is_none_or(|(_, s)| scaled > s) {
                        pick = Some((i, scaled));
                    }
                }
            }
            let Some((p, _)) = pick else {
                return self.finish(QpStatus::Optimal, z, self.scatter(&active, &lambda), None);
            };
            let ap = self.row_vec(p);
            let mut lambda_p = 0.0;

            loop {
                iter += 1;
                if iter > max_iter {
                    let mult = self.scatter(&active, &lambda);
                    return self.finish(QpStatus::Infeasible, z, mult, None);
                }
                let hinv_ap = self.chol.solve(&ap);
                // r = (NᵀH⁻¹N)⁻¹ NᵀH⁻¹ a_p ; step direction dz = H⁻¹(N r − a_p).
                let r = self.active_solve(&active, &hinv_ap);
                let mut dz = -&hinv_ap;
                for (j, &k) in active.iter().enumerate() {
                    dz += self.chol.solve(&self.row_vec(k)) * r[j];
                }
                let curvature = -ap.dot(&dz);
                // With n independent rows active, dz vanishes up to roundoff.
                let primal_step = active.len() < self.dim() && curvature > 1e-10 * ap.dot(&hinv_ap);

                let mut partial: Option<(usize, f64)> = None;
                for (j, rj) in r.iter().enumerate() {
                    if *rj > 0.0 {
                        let t = lambda[j] / rj;
                        if partial.is_none_or(|(_, best)| t < best) {
                            partial = Some((j, t));
                        }
                    }
                }

                if !primal_step {
                    match partial {
                        None => {
                            // a_p = N r with r ≤ 0: the active rows and p
                            // cannot hold together.
                            let mut cert = vec![0.0; m];
                            cert[p] = 1.0;
                            for (j, &k) in active.iter().enumerate() {
                                cert[k] = -r[j];
                            }
                            let mult = self.scatter(&active, &lambda);
                            return self.finish(QpStatus::Infeasible, z, mult, Some(cert));
                        }
                        Some((l, t)) => {
                            for (j, lj) in lambda.iter_mut().enumerate() {
                                *lj -= t * r[j];
                            }
                            lambda_p += t;
                            active.remove(l);
                            lambda.remove(l);
                            continue;
                        }
                    }
                }

                let full = self.violation(p, &z) / curvature;
                let (t, drop) = match partial {
                    Some((l, t1)) if t1 < full => (t1, Some(l)),
                    _ => (full, None),
                };
                z += &dz * t;
                for (j, lj) in lambda.iter_mut().enumerate() {
                    *lj -= t * r[j];
                }
                lambda_p += t;
                match drop {
                    Some(l) => {
                        active.remove(l);
                        lambda.remove(l);
                    }
                    None => {
                        active.push(p);
                        lambda.push(lambda_p);
                        for lj in lambda.iter_mut() {
                            *lj = lj.max(0.0);
                        }
                        break;
                    }
                }
            }
        }
    }

    /// Solves `(NᵀH⁻¹N) r = Nᵀ rhs` for the active rows `N`.
    fn active_solve(&self, active: &[usize], rhs: &DVector<f64>) -> Vec<f64> {
        let k = active.len();
        if k == 0 {
            return Vec::new();
        }
        let hinv_n: Vec<DVector<f64>> = active.iter().map(|&i| self.chol.solve(&self.row_vec(i))).collect();
        let mut gram = DMatrix::zeros(k, k);
        let mut b = DVector::zeros(k);
        for (a, &i) in active.iter().enumerate() {
            let ni = self.row_vec(i);
            for c in 0..k {
                gram[(a, c)] = ni.dot(&hinv_n[c]);
            }
            b[a] = ni.dot(rhs);
        }
        match gram.clone().cholesky() {
            Some(ch) => ch.solve(&b).iter().copied().collect(),
            None => gram.lu().solve(&b).map(|v| v.iter().copied().collect()).unwrap_or_else(|| vec![0.0; k]),
        }
    }

    fn scatter(&self, active: &[usize], lambda: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows.len()];
        for (&i, &l) in active.iter().zip(lambda) {
            out[i] = l;
        }
        out
    }

    /// Exhaustive active-set enumeration.
    ///
    /// Every subset of at most `n` rows is tried as the active set; the
    /// equality-constrained KKT system is solved and the candidate kept if it
    /// is primal feasible with nonnegative multipliers. When no candidate
    /// survives, the same enumeration is run on the phase-1 objective `½‖z‖²`
    /// to decide whether the rows have any common point at all.
    pub fn solve_oracle(&self) -> Result<QpSolution, QpError> {
        let m = self.rows.len();
        if m > ORACLE_MAX_ROWS {
            return Err(QpError::TooManyRows(m));
        }
        if let Some((z, mult)) = enumerate_kkt(&self.h, &self.f, &self.rows) {
            return Ok(self.finish(QpStatus::Optimal, z, mult, None));
        }
        let n = self.dim();
        let phase1 = enumerate_kkt(&DMatrix::identity(n, n), &DVector::zeros(n), &self.rows);
        match phase1 {
            None => {
                let z = -self.chol.solve(&self.f);
                Ok(self.finish(QpStatus::Infeasible, z, vec![0.0; m], None))
            }
            Some(_) => Err(QpError::OracleInconsistent),
        }
    }
}

fn enumerate_kkt(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    rows: &[LinearControlConstraint],
) -> Option<(DVector<f64>, Vec<f64>)> {
    let n = h.nrows();
    let m = rows.len();
    let mut best: Option<(f64, DVector<f64>, Vec<f64>)> = None;
    for mask in 0u32..(1u32 << m) {
        let subset: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let k = subset.len();
        if k > n {
            continue;
        }
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(h);
        for i in 0..n {
            rhs[i] = -f[i];
        }
        for (j, &r) in subset.iter().enumerate() {
            for i in 0..n {
                kkt[(i, n + j)] = rows[r].a[i];
                kkt[(n + j, i)] = rows[r].a[i];
            }
            rhs[n + j] = rows[r].c;
        }
        let lu = kkt.clone().full_piv_lu();
        let Some(sol) = lu.solve(&rhs) else { continue };
        // Rank-deficient systems can return garbage instead of None.
        if (&kkt * &sol - &rhs).amax() > 1e-9 * (1.0 + rhs.amax()) {
            continue;
        }
        let z = sol.rows(0, n).into_owned();
        let lam: Vec<f64> = sol.rows(n, k).iter().copied().collect();
        if lam.iter().any(|l| *l < -1e-9) {
            continue;
        }
        let feasible = rows.iter().all(|r| r.slack(z.as_slice()) >= -1e-9 * (1.0 + r.c.abs()));
        if !feasible {
            continue;
        }
        let obj = 0.5 * z.dot(&(h * &z)) + f.dot(&z);
        if best.as_ref().is_none_or(|(b, _, _)| obj < *b) {
            let mut mult = vec![0.0; m];
            for (&r, l) in subset.iter().zip(&lam) {
                mult[r] = l.max(0.0);
            }
            best = Some((obj, z, mult));
        }
    }
    best.map(|(_, z, mult)| (z, mult))
}

/// KKT residuals of a solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// `‖Hz + F + Aᵀλ‖∞`
    pub stationarity: f64,
    /// `maxᵢ |λᵢ (aᵢᵀz − cᵢ)|`
    pub complementarity: f64,
    /// `maxᵢ (aᵢᵀz − cᵢ)⁺`
    pub primal: f64,
    pub min_multiplier: f64,
}

pub fn kkt_residuals(problem: &QpProblem, sol: &QpSolution) -> KktResiduals {
    let mut grad = problem.h() * &sol.z + problem.f();
    let mut complementarity: f64 = 0.0;
    let mut primal: f64 = 0.0;
    for (row, l) in problem.rows().iter().zip(&sol.multipliers) {
        for (g, a) in grad.iter_mut().zip(&row.a) {
            *g += l * a;
        }
        let slack = row.slack(sol.z.as_slice());
        complementarity = complementarity.max((l * slack).abs());
        primal = primal.max(-slack);
    }
    KktResiduals {
        stationarity: grad.amax(),
        complementarity,
        primal,
        min_multiplier: sol.multipliers.iter().copied().fold(f64::INFINITY, f64::min),
    }
}

//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any fails.

use std::process::ExitCode;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hocbf::acc::{assemble_acc_qp, resistance, sacc_scenario, simulate, AccParams, Form, ScenarioKind};
use hocbf::hocbf::exponential_cbf_spec;
use hocbf::qp::kkt_residuals;
use hocbf::{
    ConstraintTag, Controller, LieJet, LieJetProvider, LinearControlConstraint, QpProblem, QpStatus, SimError,
    TrajectoryRecord,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn run_acc(form: Form, p: f64) -> TrajectoryRecord {
    let params = AccParams::table1().with_form(form, p);
    simulate(ScenarioKind::Acc, &params, &params.sim_config(30.0)).expect("ACC run")
}

fn b_at(rec: &TrajectoryRecord, t: f64) -> f64 {
    rec.at_time(t).expect("logged step").psi[0][0]
}

/// Step index of the first active safety row.
fn first_activation(rec: &TrajectoryRecord) -> Option<usize> {
    rec.steps.iter().position(|s| s.row_index(ConstraintTag::HocbfSafety).is_some_and(|i| s.active[i]))
}

fn psi_chain_oracle() -> Outcome {
    let params = AccParams::table1();
    let (_, controller) = sacc_scenario(&params).unwrap();
    let spec = &controller.barriers()[0];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut n = 0;
    while n < 1000 {
        let (b0, bd0) = (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let state = [b0 + params.delta, params.v_ip - bd0];
        let b: f64 = state[0] - params.delta;
        let bd: f64 = params.v_ip - state[1];
        if b < 0.0 || bd + b * b < 0.0 {
            continue;
        }
        n += 1;
        // b̈ = −u
        let want_c = 2.0 * bd * b + bd * bd + 2.0 * bd * b * b + b.powi(4);
        let row = spec.constraint(&state).unwrap();
        worst = worst.max((row.a[0] - 1.0).abs()).max((row.c - want_c).abs());
    }
    outcome(worst <= 1e-9, format!("1000 states, max abs error {worst:.3e} (tol 1e-9)"))
}

fn form_rows(params: &AccParams, z: f64, v: f64) -> Option<(f64, f64)> {
    let m = params.mass;
    let p = params.p;
    let b = z - params.delta;
    let bd = params.v_ip - v;
    let lf2 = resistance(v, params) / m;
    // Row (1/m)·u ≤ c.
    let c = match params.form {
        Form::Sqrt => {
            let psi1 = bd + p * b;
            if psi1 <= 0.0 {
                return None;
            }
            lf2 + p * bd + p * psi1.sqrt()
        }
        Form::Linear => {
            if bd + p * b <= 0.0 {
                return None;
            }
            lf2 + 2.0 * p * bd + p * p * b
        }
        Form::Quadratic => {
            if bd + p * b * b <= 0.0 {
                return None;
            }
            lf2 + 2.0 * p * bd * b + p * bd * bd + 2.0 * p * p * bd * b * b + p.powi(3) * b.powi(4)
        }
    };
    Some((1.0 / m, c))
}

fn form_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let cases = [(Form::Sqrt, 1.0, 2.0), (Form::Linear, 0.5, 2.0), (Form::Quadratic, 0.02, 0.1)];
    for (form, lo, hi) in cases {
        let mut n = 0;
        while n < 1000 {
            let mut params = AccParams::table1().with_form(form, rng.gen_range(lo..hi));
            params.p1 = None;
            params.p2 = None;
            let z = params.delta + rng.gen_range(0.0..90.0);
            let v = rng.gen_range(0.0..30.0);
            let Some((want_a, want_c)) = form_rows(&params, z, v) else {
                continue;
            };
            n += 1;
            let spec = hocbf::acc::safety_hocbf(&params).unwrap();
            let row = spec.constraint(&[z, v]).unwrap();
            worst = worst.max((row.a[0] - want_a).abs()).max((row.c - want_c).abs());
        }
    }
    outcome(worst <= 1e-9, format!("3 x 1000 states, max abs error {worst:.3e} (tol 1e-9)"))
}

struct Seeded {
    lie: Vec<f64>,
    row: Vec<f64>,
}

impl LieJetProvider for Seeded {
    fn relative_degree(&self) -> usize {
        self.lie.len() - 1
    }
    fn control_dim(&self) -> usize {
        self.row.len()
    }
    fn evaluate(&self, _state: &[f64]) -> LieJet {
        LieJet { lie: self.lie.clone(), input_row: self.row.clone() }
    }
}

/// Coefficients of `∏(s + kᵢ)`, highest power first.
fn operator_product(gains: &[f64]) -> Vec<f64> {
    let mut poly = vec![1.0];
    for k in gains {
        let mut next = vec![0.0; poly.len() + 1];
        for (i, c) in poly.iter().enumerate() {
            next[i] += c;
            next[i + 1] += c * k;
        }
        poly = next;
    }
    poly
}

fn exponential_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for m in [2usize, 3] {
        let mut n = 0;
        while n < 200 {
            let gains: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..3.0)).collect();
            let lie: Vec<f64> = (0..=m).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let row = vec![rng.gen_range(-2.0..2.0)];
            let spec = exponential_cbf_spec(Arc::new(Seeded { lie: lie.clone(), row: row.clone() }), &gains).unwrap();
            // Only seeds inside every Cᵢ give a well-defined chain.
            let Ok(got) = spec.constraint(&[]) else {
                continue;
            };
            n += 1;
            let poly = operator_product(&gains);
            let want_c: f64 = poly.iter().enumerate().map(|(j, c)| c * lie[m - j]).sum();
            worst = worst.max((got.c - want_c).abs()).max((got.a[0] + row[0]).abs());
        }
    }
    outcome(worst <= 1e-9, format!("m in {{2, 3}}, 2 x 200 seeds, max abs error {worst:.3e} (tol 1e-9)"))
}

fn random_qp(rng: &mut ChaCha8Rng, infeasible: bool) -> QpProblem {
    let n = rng.gen_range(1..=3);
    let l = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let h = &l * l.transpose() + DMatrix::identity(n, n) * 0.5;
    let f = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
    let z0 = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
    let n_rows = if infeasible { rng.gen_range(0..=4) } else { rng.gen_range(0..=6) };
    let mut rows = Vec::new();
    let rand_a = |rng: &mut ChaCha8Rng| DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    for _ in 0..n_rows {
        let a = rand_a(rng);
        let c = a.dot(&z0) + rng.gen_range(0.1..2.0);
        rows.push(LinearControlConstraint::new(a.as_slice().to_vec(), c, ConstraintTag::Custom));
    }
    if infeasible {
        // aᵀz ≤ c₁ and −s·aᵀz ≤ c₂ with c₁ + c₂/s ≤ −0.5.
        let a = rand_a(rng);
        let s = rng.gen_range(0.5..2.0);
        let c1 = rng.gen_range(-2.0..2.0);
        let c2 = -s * (c1 + rng.gen_range(0.5..2.0));
        let at = rng.gen_range(0..=rows.len());
        rows.insert(at, LinearControlConstraint::new(a.as_slice().to_vec(), c1, ConstraintTag::Custom));
        rows.push(LinearControlConstraint::new((-a * s).as_slice().to_vec(), c2, ConstraintTag::Custom));
    }
    QpProblem::new(h, f, rows).unwrap()
}

fn qp_vs_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut agree, mut gap, mut kkt): (usize, f64, f64) = (0, 0.0, 0.0);
    let mut n_infeasible = 0;
    for i in 0..500 {
        let infeasible = i % 3 == 0;
        let qp = random_qp(&mut rng, infeasible);
        let got = qp.solve();
        let want = qp.solve_oracle().unwrap();
        if got.status == want.status {
            agree += 1;
        }
        if want.status == QpStatus::Infeasible {
            n_infeasible += 1;
        }
        if got.is_optimal() && want.is_optimal() {
            gap = gap.max((got.objective - want.objective).abs());
            let r = kkt_residuals(&qp, &got);
            kkt = kkt.max(r.stationarity).max(r.complementarity).max(r.primal).max(-r.min_multiplier);
        }
    }
    outcome(
        agree == 500 && gap <= 1e-6 && kkt <= 1e-8,
        format!(
            "500 QPs ({n_infeasible} infeasible), status agreement {agree}/500, \
             objective gap {gap:.3e} (tol 1e-6), KKT {kkt:.3e} (tol 1e-8)"
        ),
    )
}

fn forward_invariance() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (form, p) in [(Form::Sqrt, 2.0), (Form::Linear, 1.0), (Form::Quadratic, 0.02)] {
        let rec = run_acc(form, p);
        let min = &rec.summary.min_psi[0];
        let ok = rec.summary.infeasible_at.is_none() && min[0] >= -1e-6 && min[1] >= -1e-6;
        pass &= ok;
        parts.push(format!(
            "{form} p={p}: min b {:.3e}, min psi1 {:.3e} {}",
            min[0],
            min[1],
            if ok { "ok" } else { "VIOLATED" }
        ));
    }
    outcome(pass, format!("{} (tol -1e-6)", parts.join("; ")))
}

fn gap_values_by_form() -> Outcome {
    let quad = run_acc(Form::Quadratic, 0.02);
    let lin = run_acc(Form::Linear, 1.0);
    let sqrt = run_acc(Form::Sqrt, 2.0);
    let q15 = b_at(&quad, 15.0);
    let (l15, l20) = (b_at(&lin, 15.0), b_at(&lin, 20.0));
    let s15 = b_at(&sqrt, 15.0);
    let q_ok = ((q15 - 15.6669) / 15.6669).abs() <= 0.10;
    let l_ok = (0.004..=0.4).contains(&l15) && (4e-5..=4e-2).contains(&l20);
    let s_ok = (0.002..=0.2).contains(&s15);
    let monotone = match first_activation(&sqrt) {
        Some(i) => sqrt.steps[i..].windows(2).all(|w| w[1].psi[0][0] <= w[0].psi[0][0]),
        None => false,
    };
    outcome(
        q_ok && l_ok && s_ok && monotone,
        format!(
            "quadratic b(15)={q15:.4} [15.6669 +-10%]; linear b(15)={l15:.3e} b(20)={l20:.3e}; \
             sqrt b(15)={s15:.3e}, nonincreasing after activation: {monotone}"
        ),
    )
}

fn activation_ordering() -> Outcome {
    let mut bs = Vec::new();
    let mut sqrt_step = None;
    for (form, p) in [(Form::Sqrt, 1.0), (Form::Linear, 1.0), (Form::Quadratic, 0.1)] {
        let rec = run_acc(form, p);
        match first_activation(&rec) {
            Some(i) => {
                if form == Form::Sqrt {
                    sqrt_step = Some(i);
                }
                bs.push(rec.steps[i].psi[0][0]);
            }
            None => return outcome(false, format!("{form} p={p}: safety row never active")),
        }
    }
    let ordered = bs[0] > bs[1] && bs[1] > bs[2];
    let early = sqrt_step.is_some_and(|i| i < 3);
    outcome(
        ordered && early,
        format!(
            "b at activation: sqrt {:.4}, linear {:.4}, quadratic {:.4}; sqrt activates at step {:?}",
            bs[0], bs[1], bs[2], sqrt_step
        ),
    )
}

fn penalty_monotonicity() -> Outcome {
    let grid = [1.0, 0.5, 0.2, 0.1, 0.05, 0.02];
    let min_u: Vec<f64> = grid.iter().map(|p| run_acc(Form::Quadratic, *p).summary.effective_min_u()[0]).collect();
    let nondecreasing = min_u.windows(2).all(|w| w[1] >= w[0]);
    let last_ok = min_u[5] >= -6474.6;
    let some_violates = min_u[..5].iter().any(|u| *u < -6474.6);
    let listing: Vec<String> = grid.iter().zip(&min_u).map(|(p, u)| format!("p={p}: {u:.1}")).collect();
    outcome(nondecreasing && last_ok && some_violates, format!("min_u {} (bound -6474.6)", listing.join(", ")))
}

fn conflict_non_inclusion() -> Outcome {
    let params = AccParams::table1();
    let expected = [
        ConstraintTag::Clf,
        ConstraintTag::CbfSpeedMax,
        ConstraintTag::CbfSpeedMin,
        ConstraintTag::ControlLimit,
        ConstraintTag::HocbfSafety,
    ];
    let brake = -params.brake_limit();
    let mut ok = true;
    for state in [[100.0, 20.0], [50.0, 13.89], [12.0, 25.0], [10.5, 1.0]] {
        let qp = assemble_acc_qp(&params, &state).unwrap();
        let tags: Vec<_> = qp.rows().iter().map(|r| r.tag).collect();
        ok &= tags == expected;
        // A braking bound would read −u ≤ c_d m g.
        ok &= !qp.rows().iter().any(|r| r.a[1] == 0.0 && r.a[0] < 0.0 && (r.c / -r.a[0] - brake).abs() < 1e-9);
    }
    outcome(ok, "5 rows [clf, cbf-speed-max, cbf-speed-min, control-limit, hocbf-safety], no braking row")
}

fn speed_behavior() -> Outcome {
    let v_d = AccParams::table1().v_d;
    let v_ip = AccParams::table1().v_ip;
    let mut pass = true;
    let mut parts = Vec::new();
    for (form, p) in [(Form::Linear, 1.0), (Form::Quadratic, 0.02)] {
        let rec = run_acc(form, p);
        let end = first_activation(&rec).unwrap_or(rec.steps.len());
        let max_v = rec.steps[..end].iter().map(|s| s.state[1]).fold(f64::MIN, f64::max);
        let terminal = rec.final_state[1];
        let ok = max_v >= v_d - 0.5 && (terminal - v_ip).abs() <= 0.5;
        pass &= ok;
        parts.push(format!("{form} p={p}: max v {max_v:.3}, terminal v {terminal:.3}"));
    }
    let rec = run_acc(Form::Sqrt, 1.0);
    let max_v = rec.steps.iter().map(|s| s.state[1]).fold(f64::MIN, f64::max);
    pass &= max_v < v_d - 0.5;
    parts.push(format!("sqrt p=1: max v {max_v:.3} (< {})", v_d - 0.5));
    outcome(pass, parts.join("; "))
}

fn discretization_stability() -> Outcome {
    let finals: Vec<Vec<f64>> = [0.1, 0.05]
        .iter()
        .map(|dt| {
            let mut params = AccParams::table1().with_form(Form::Linear, 1.0);
            params.dt = *dt;
            simulate(ScenarioKind::Acc, &params, &params.sim_config(30.0)).unwrap().final_state
        })
        .collect();
    let rel: f64 = (0..2).map(|i| ((finals[0][i] - finals[1][i]) / finals[1][i]).abs()).fold(0.0, f64::max);
    outcome(
        rel <= 0.01,
        format!(
            "terminal (z, v) dt=0.1 ({:.6}, {:.6}) vs dt=0.05 ({:.6}, {:.6}), max rel change {rel:.3e}",
            finals[0][0], finals[0][1], finals[1][0], finals[1][1]
        ),
    )
}

fn initial_membership_gate() -> Outcome {
    let mut params = AccParams::table1();
    params.z0 = params.delta;
    let result = simulate(ScenarioKind::Acc, &params, &params.sim_config(30.0));
    match result {
        Err(SimError::InitialMembership { barrier: 0, report }) => {
            let text = report.to_string();
            let ok = report.first_failure() == Some(1) && text.contains("psi1") && report.members[0];
            outcome(ok, format!("refused: {text}"))
        }
        Err(e) => outcome(false, format!("unexpected error: {e}")),
        Ok(_) => outcome(false, "run was not refused"),
    }
}

fn main() -> ExitCode {
    type Check = fn() -> Outcome;
    let criteria: [(&str, Check); 12] = [
        ("psi-chain oracle", psi_chain_oracle),
        ("form oracles", form_oracles),
        ("exponential CBF equivalence", exponential_equivalence),
        ("QP vs oracle", qp_vs_oracle),
        ("forward invariance", forward_invariance),
        ("gap values by form", gap_values_by_form),
        ("activation ordering", activation_ordering),
        ("penalty monotonicity", penalty_monotonicity),
        ("conflict non-inclusion", conflict_non_inclusion),
        ("speed behavior", speed_behavior),
        ("discretization stability", discretization_stability),
        ("initial membership gate", initial_membership_gate),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("[{}] {:>2}. {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

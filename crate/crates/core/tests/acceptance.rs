//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.

use std::io::Write;
use std::time::Instant;

use occsynth::conic::ConicProblem;
use occsynth::moments::min_eigenvalue;
use occsynth::ocp::{builtin_problem, normalize_inputs, OCProblem, ScaledProblem};
use occsynth::pipeline::{self, OrderOutcome, RunConfig, RunOutput};
use occsynth::poly::{MonomialBasis, Polynomial};
use occsynth::relaxation::{assemble, layout, trajectory_moments, MeasureKind, RelaxationConfig, VariableLayout};
use occsynth::sdp::{
    export, import_problem, import_solution, solve, toys, write_solution, ExportFormat, SolveStatus, SolverSettings,
};
use occsynth::synthesis::{
    extract_controller, oracle_di_lqr, oracle_di_mintime, saturate, simulate_with, PolynomialController,
    SimulationOptions, DEFAULT_TRUNCATION,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

fn report(id: usize, title: &str, verdict: &Verdict) {
    let (tag, detail) = match verdict {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    // Written to the process stdout directly so the line survives output capture.
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {id} [{title}]: {tag} ({detail})");
}

fn check(cond: bool, detail: String) -> Verdict {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn run(name: &str, orders: &[usize]) -> RunOutput {
    let p = builtin_problem(name).unwrap();
    pipeline::run(&p, &RunConfig::new(orders.to_vec())).unwrap()
}

fn objective(out: &OrderOutcome) -> Option<f64> {
    match out.record.status {
        Some(s) if s.is_usable() => out.record.objective,
        _ => None,
    }
}

/// Closed loop without stopping at the target, over `horizon`.
fn closed_loop(p: &OCProblem, ctrl: &PolynomialController, horizon: f64) -> occsynth::synthesis::SimulationResult {
    let mut ext = p.clone();
    ext.horizon = horizon;
    let mut opts = SimulationOptions::new(1e-3);
    opts.stop_at_target = false;
    simulate_with(&ext, |t, x| saturate(ctrl, t, x), opts).unwrap()
}

fn criteria_1_2(mintime: &RunOutput, elapsed: f64) -> (Verdict, Verdict) {
    let p: Vec<Option<f64>> = mintime.outcomes.iter().map(objective).collect();
    let statuses: Vec<String> = mintime
        .outcomes
        .iter()
        .map(|o| o.record.status.map(|s| s.to_string()).unwrap_or_else(|| "error".into()))
        .collect();
    let t_star = oracle_di_mintime([0.3, 1.0]).t_star;
    let Some(p) = p.into_iter().collect::<Option<Vec<f64>>>() else {
        let d = format!("unusable solve among k=3,4,5: {statuses:?}");
        return (Err(d.clone()), Err(d));
    };
    let monotone = p.windows(2).all(|w| w[0] <= w[1] + 1e-6);
    let c1 = check(
        monotone && elapsed < 600.0,
        format!("p = {p:.7?}, statuses {statuses:?}, {elapsed:.0}s"),
    );
    let gaps: Vec<f64> = p.iter().map(|v| t_star - v).collect();
    let below = p.iter().all(|v| *v <= t_star + 1e-3);
    let shrinking = gaps.windows(2).all(|w| w[1] < w[0]);
    let c2 = check(
        below && shrinking,
        format!("t* = {t_star:.6}, gaps {gaps:.3?}"),
    );
    (c1, c2)
}

fn criterion_3(mintime: &RunOutput) -> Verdict {
    let p = builtin_problem("di_mintime").unwrap();
    let t_star = oracle_di_mintime([p.x0[0], p.x0[1]]).t_star;
    let np = normalize_inputs(&p).unwrap();
    let high = pipeline::solve_order(&np, 6, &RunConfig::new(vec![6]));
    let limit = 1.15 * t_star;
    let (outcome, radius, note) = if objective(&high).is_some() {
        (&high, 0.1, "2k=12".to_string())
    } else {
        let fallback = mintime
            .outcomes
            .iter()
            .rev()
            .find(|o| objective(o).is_some())
            .ok_or_else(|| "no usable order".to_string())?;
        (
            fallback,
            0.2,
            format!(
                "2k=12 ended {:?}, fallback to 2k={} with radius 0.2",
                high.record.status,
                2 * fallback.record.k
            ),
        )
    };
    let ctrl = outcome.controller.as_ref().ok_or("no controller")?;
    let sim = closed_loop(&p, ctrl, limit);
    let entry = sim.first_entry(radius);
    check(
        entry.is_some_and(|t| t <= limit),
        format!("{note}, first entry into radius {radius} at {entry:?}, limit {limit:.4}"),
    )
}

fn criterion_4() -> Verdict {
    let j_star = oracle_di_lqr().j_star;
    let out = run("di_lqr", &[2, 3, 4, 5]);
    let p: Vec<(usize, f64)> = out
        .outcomes
        .iter()
        .filter_map(|o| objective(o).map(|v| (o.record.k, v)))
        .collect();
    let bounded = !p.is_empty() && p.iter().all(|(_, v)| *v <= j_star + 1e-3);
    let realized = out.report.record(4).and_then(|r| r.realized_cost);
    let close = realized.is_some_and(|c| (c - j_star).abs() <= 0.1 * j_star);
    check(
        bounded && close,
        format!("J* = {j_star:.6}, p = {p:.6?}, realized at 2k=8 {realized:?}"),
    )
}

fn criterion_5() -> Verdict {
    let out = run("si_mintime", &[4]);
    let o = &out.outcomes[0];
    let pk = objective(o).ok_or("unusable solve")?;
    let ctrl = o.controller.as_ref().ok_or("no controller")?;
    let p = builtin_problem("si_mintime").unwrap();
    let sim = closed_loop(&p, ctrl, 1.1);
    let entry = sim.first_entry(0.05);
    check(
        (0.9..=1.0 + 1e-3).contains(&pk) && entry.is_some_and(|t| t <= 1.1 + 1e-12),
        format!("p_4 = {pk:.7}, |x| <= 0.05 at {entry:?}"),
    )
}

/// Scaled samples `(s, z, u_norm)` of a simulated admissible pair.
fn samples(p: &OCProblem, control: impl Fn(f64, &[f64]) -> Vec<f64>, horizon: f64, steps: usize) -> Vec<(f64, Vec<f64>, Vec<f64>)> {
    let np = normalize_inputs(p).unwrap();
    let sp = ScaledProblem::from_normalized(&np).unwrap();
    let mut q = p.clone();
    q.horizon = horizon;
    let mut opts = SimulationOptions::new(horizon / steps as f64);
    opts.stop_at_target = false;
    let sim = simulate_with(&q, &control, opts).unwrap();
    assert_eq!(sim.times.len(), steps + 1);
    assert!(
        sim.controls.iter().all(|u| p.input_box.contains(u, 1e-12))
            && sim.states.iter().all(|x| p.state_set.contains(x, 1e-12)),
        "{}: sampled pair is not admissible",
        p.name
    );
    sim.times
        .iter()
        .zip(&sim.states)
        .zip(&sim.controls)
        .map(|((t, x), u)| {
            let un: Vec<f64> = u
                .iter()
                .enumerate()
                .map(|(j, v)| (v - np.input_map.offset[j]) / np.input_map.scale[j])
                .collect();
            (sp.to_scaled_time(*t), sp.to_scaled_state(x), un)
        })
        .collect()
}

fn worst_violation(p: &OCProblem, k: usize, y: &[f64]) -> (f64, f64) {
    let np = normalize_inputs(p).unwrap();
    let a = assemble(&np, &RelaxationConfig::new(k)).unwrap();
    let eq = a.equality_residual(y).iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let eig = a
        .blocks
        .iter()
        .map(|b| min_eigenvalue(&b.eval(y, true)))
        .fold(f64::INFINITY, f64::min);
    (eq, eig)
}

fn criterion_6() -> Verdict {
    let mut lines = Vec::new();
    let mut ok = true;
    for k in 2..=3 {
        let mut cases: Vec<(String, OCProblem, Vec<f64>)> = Vec::new();

        let p = builtin_problem("di_lqr").unwrap();
        let l = layout(&normalize_inputs(&p).unwrap(), k).unwrap();
        let s = samples(&p, |_, x| vec![-0.3 * x[0] - 0.6 * x[1]], p.horizon, 4000);
        cases.push(("di_lqr".into(), p, trajectory_moments(&l, &s)));

        let p = builtin_problem("dubins_lqr").unwrap();
        let l = layout(&normalize_inputs(&p).unwrap(), k).unwrap();
        let s = samples(&p, |_, _| vec![0.5, -0.5], p.horizon, 4000);
        cases.push(("dubins_lqr".into(), p, trajectory_moments(&l, &s)));

        let p = builtin_problem("si_mintime").unwrap();
        let l = layout(&normalize_inputs(&p).unwrap(), k).unwrap();
        let s = samples(&p, |_, _| vec![-1.0], 1.0, 2000);
        cases.push(("si_mintime".into(), p, trajectory_moments(&l, &s)));

        // bang-bang arcs joined at the switch so each quadrature sees smooth data
        let p = builtin_problem("di_mintime").unwrap();
        let l = layout(&normalize_inputs(&p).unwrap(), k).unwrap();
        cases.push(("di_mintime".into(), p.clone(), bang_bang_moments(&p, &l)));

        for (name, p, y) in cases {
            let (eq, eig) = worst_violation(&p, k, &y);
            ok &= eq <= 1e-6 && eig >= -1e-7;
            lines.push(format!("{name} k={k}: |Ay-b| {eq:.1e}, min eig {eig:.1e}"));
        }
    }
    check(ok, lines.join("; "))
}

fn bang_bang_moments(p: &OCProblem, l: &VariableLayout) -> Vec<f64> {
    let np = normalize_inputs(p).unwrap();
    let sp = ScaledProblem::from_normalized(&np).unwrap();
    let o = oracle_di_mintime([p.x0[0], p.x0[1]]);
    let (ts, tf) = (o.switch_time, o.t_star);
    let exact = |t: f64| -> (Vec<f64>, f64) {
        let (a, b) = (p.x0[0], p.x0[1]);
        if t <= ts {
            (vec![a + b * t - 0.5 * t * t, b - t], -1.0)
        } else {
            let (x1s, x2s) = (a + b * ts - 0.5 * ts * ts, b - ts);
            let d = t - ts;
            (vec![x1s + x2s * d + 0.5 * d * d, x2s + d], 1.0)
        }
    };
    let arc = |t0: f64, t1: f64| {
        let n = 2000;
        (0..=n)
            .map(|i| {
                let t = t0 + (t1 - t0) * i as f64 / n as f64;
                // evaluate the arc's own control at its endpoints
                let (x, _) = exact(t);
                let u = if t0 < ts { -1.0 } else { 1.0 };
                (sp.to_scaled_time(t), sp.to_scaled_state(&x), vec![u])
            })
            .collect::<Vec<_>>()
    };
    let first = trajectory_moments(l, &arc(0.0, ts));
    let second = trajectory_moments(l, &arc(ts, tf));
    let mu_t = l.measure(MeasureKind::MuT).range();
    first
        .iter()
        .zip(&second)
        .enumerate()
        .map(|(i, (a, b))| if mu_t.contains(&i) { *b } else { a + b })
        .collect()
}

fn criterion_7() -> Verdict {
    let p = builtin_problem("di_lqr").unwrap();
    let np = normalize_inputs(&p).unwrap();
    let sp = ScaledProblem::from_normalized(&np).unwrap();
    let k = 3;
    let conic = assemble(&np, &RelaxationConfig::new(k)).unwrap();
    let meta = conic.meta.as_ref().unwrap();
    let l = layout(&np, k).unwrap();

    // constant input along a simulated trajectory that stays inside X
    let mut q = p.clone();
    q.x0 = vec![0.3, -1.6];
    let s = samples(&q, |_, _| vec![0.7], p.horizon, 2000);
    let y = trajectory_moments(&l, &s);
    let ctrl = extract_controller(&y, &l, meta, DEFAULT_TRUNCATION).map_err(|e| e.to_string())?;
    let constant_err = s
        .iter()
        .map(|(si, z, _)| {
            let mut pt = vec![*si];
            pt.extend_from_slice(z);
            (ctrl.laws()[0].evaluate(&pt).unwrap() - 0.7).abs()
        })
        .fold(0.0f64, f64::max);

    // random polynomial laws on scattered support with a full-rank moment matrix
    let basis = MonomialBasis::new(1 + sp.n, k);
    let mut poly_err = 0.0f64;
    let mut full_rank = true;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..1 + sp.n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let coeffs: Vec<f64> = (0..basis.len()).map(|_| rng.random_range(-0.3..0.3)).collect();
        let law = Polynomial::from_coefficients(&basis, &coeffs);
        let y = atoms(&l, &points, |pt| law.evaluate(pt).unwrap());
        let c = extract_controller(&y, &l, meta, DEFAULT_TRUNCATION).map_err(|e| e.to_string())?;
        full_rank &= c.diagnostics.rank == basis.len();
        for pt in &points {
            poly_err = poly_err.max((law.evaluate(pt).unwrap() - c.laws()[0].evaluate(pt).unwrap()).abs());
        }
    }
    check(
        constant_err <= 1e-8 && poly_err <= 1e-6 && full_rank,
        format!("constant law error {constant_err:.1e}, polynomial law error {poly_err:.1e}"),
    )
}

/// Equal-weight atoms with input `u(point)` split by sign.
fn atoms(l: &VariableLayout, points: &[Vec<f64>], u: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut y = vec![0.0; l.total];
    let w = 1.0 / points.len() as f64;
    for p in points {
        let v = u(p);
        for (kind, wt) in [
            (MeasureKind::Gamma, w),
            (MeasureKind::SigmaPlus(0), w * v.max(0.0)),
            (MeasureKind::SigmaMinus(0), w * (-v).max(0.0)),
        ] {
            let ml = l.measure(kind);
            for (i, a) in ml.basis.monomials().iter().enumerate() {
                y[ml.offset + i] += wt * a.eval(p);
            }
        }
    }
    y
}

fn criterion_8() -> Verdict {
    let settings = SolverSettings::default();
    let mut errs = Vec::new();
    for (name, problem, want) in [
        ("two_by_two", toys::two_by_two(), 1.0),
        ("scalar", toys::scalar(), 2.0),
        ("moment", toys::moment(), 0.25),
    ] {
        let s = solve(&problem, &settings).map_err(|e| e.to_string())?;
        errs.push((name, s.status, (s.objective - want).abs()));
    }
    let toys_ok = errs.iter().all(|(_, st, e)| *st == SolveStatus::Optimal && *e <= 1e-6);

    let np = normalize_inputs(&builtin_problem("di_lqr").unwrap()).unwrap();
    let conic = assemble(&np, &RelaxationConfig::new(3)).unwrap();
    let sol = solve(&conic, &settings).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (ppath, spath) = (dir.path().join("p.json"), dir.path().join("s.json"));
    export(&conic, ExportFormat::InterchangeJson, &ppath).map_err(|e| e.to_string())?;
    write_solution(&sol, &spath).map_err(|e| e.to_string())?;
    let back: ConicProblem = import_problem(&ppath).map_err(|e| e.to_string())?;
    let imported = import_solution(&spath, &back, &settings).map_err(|e| e.to_string())?;
    let original = sol.residuals.primal;
    let round_trip = imported.residuals.primal;
    check(
        toys_ok && sol.status.is_usable() && round_trip <= 10.0 * original,
        format!("toy errors {errs:?}; round-trip residual {round_trip:.2e} vs {original:.2e}"),
    )
}

fn criterion_9() -> Verdict {
    let p = builtin_problem("dubins_lqr").unwrap();
    let out = run("dubins_lqr", &[3, 4, 5]);
    let mut lines = Vec::new();
    let mut ok = true;
    let mut prev: Option<f64> = None;
    for o in &out.outcomes {
        let k = o.record.k;
        let Some(pk) = objective(o) else {
            ok = false;
            lines.push(format!("k={k}: status {:?}", o.record.status));
            continue;
        };
        if let Some(q) = prev {
            ok &= pk >= q - 1e-6;
        }
        prev = Some(pk);
        let Some(sim) = &o.simulation else {
            ok = false;
            lines.push(format!("k={k}: no simulation"));
            continue;
        };
        let inputs_ok = sim.controls.iter().all(|u| p.input_box.contains(u, 1e-12));
        let states_ok = sim.states.iter().all(|x| p.state_set.contains(x, 1e-9));
        let cost_ok = sim.cost >= pk - 1e-3;
        ok &= inputs_ok && states_ok && cost_ok;
        lines.push(format!(
            "k={k}: p {pk:.6}, realized {:.6}, inputs in box {inputs_ok}, states in X {states_ok}",
            sim.cost
        ));
    }
    check(ok, lines.join("; "))
}

#[test]
fn acceptance() {
    let start = Instant::now();
    let mintime = run("di_mintime", &[3, 4, 5]);
    let elapsed = start.elapsed().as_secs_f64();
    let (c1, c2) = criteria_1_2(&mintime, elapsed);
    let verdicts = [
        (1, "monotone lower bounds", c1),
        (2, "minimum-time bound validity", c2),
        (3, "closed-loop minimum time", criterion_3(&mintime)),
        (4, "LQR cross-check", criterion_4()),
        (5, "one-dimensional sanity problem", criterion_5()),
        (6, "feasibility-oracle residuals", criterion_6()),
        (7, "extraction exactness", criterion_7()),
        (8, "solver unit answers", criterion_8()),
        (9, "Dubins structural checks", criterion_9()),
    ];
    let mut failed = Vec::new();
    for (id, title, v) in &verdicts {
        report(*id, title, v);
        if v.is_err() {
            failed.push(*id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

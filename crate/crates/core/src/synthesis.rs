//! Polynomial feedback extraction from optimal moments, saturation, closed-loop
//! simulation and analytic reference solutions.

use std::fmt::Write as _;

use faer::Side;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::ProblemMeta;
use crate::moments::{moment_matrix, MomentVector};
use crate::ocp::{normalize_inputs, InputMap, OCProblem, ScaledProblem, TimeMode};
use crate::poly::{MonomialBasis, Polynomial};
use crate::relaxation::{MeasureKind, VariableLayout};

pub const DEFAULT_TRUNCATION: f64 = 1e-8;
pub const DEFAULT_TARGET_SLACK: f64 = 1e-2;

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("moment matrix of the state marginal has no mass")]
    NoMass,
    #[error("moment vector has {got} entries, layout expects {expected}")]
    Length { got: usize, expected: usize },
    #[error("eigendecomposition failed")]
    Eigen,
    #[error("simulation step must be positive")]
    Step,
    #[error(transparent)]
    Ocp(#[from] crate::ocp::OcpError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionDiagnostics {
    /// Eigenvalues of `M_k(y_γ)`, descending.
    pub spectrum: Vec<f64>,
    pub rank: usize,
    pub threshold: f64,
    /// `‖M c_j − rhs_j‖₂` per input.
    pub residuals: Vec<f64>,
}

/// `u_j(s, z)` in scaled time/state and normalized inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolynomialController {
    pub n: usize,
    pub m: usize,
    pub degree: usize,
    /// Coefficients over the graded `(t, x)` basis of degree `degree`.
    pub coefficients: Vec<Vec<f64>>,
    pub input_map: InputMap,
    pub time_scale: f64,
    pub state_offset: Vec<f64>,
    pub state_scale: Vec<f64>,
    pub diagnostics: ExtractionDiagnostics,
    #[serde(skip)]
    laws: Vec<Polynomial>,
}

impl PolynomialController {
    pub fn new(
        n: usize,
        degree: usize,
        coefficients: Vec<Vec<f64>>,
        input_map: InputMap,
        time_scale: f64,
        state_offset: Vec<f64>,
        state_scale: Vec<f64>,
        diagnostics: ExtractionDiagnostics,
    ) -> Self {
        let mut c = PolynomialController {
            n,
            m: coefficients.len(),
            degree,
            coefficients,
            input_map,
            time_scale,
            state_offset,
            state_scale,
            diagnostics,
            laws: Vec::new(),
        };
        c.rebuild();
        c
    }

    fn rebuild(&mut self) {
        let basis = MonomialBasis::new(1 + self.n, self.degree);
        self.laws = self
            .coefficients
            .iter()
            .map(|c| Polynomial::from_coefficients(&basis, c))
            .collect();
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        let mut c: PolynomialController = serde_json::from_str(s)?;
        c.rebuild();
        Ok(c)
    }

    pub fn to_json(&self) -> Result<String, serde_json::Error> {
        serde_json::to_string_pretty(self)
    }

    /// Laws in scaled coordinates `(s, z)`.
    pub fn laws(&self) -> &[Polynomial] {
        &self.laws
    }

    fn scaled_point(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut p = Vec::with_capacity(1 + self.n);
        p.push(crate::ocp::scaled_time(t, self.time_scale));
        p.extend(
            x.iter()
                .enumerate()
                .map(|(i, v)| (v - self.state_offset[i]) / self.state_scale[i]),
        );
        p
    }

    /// Unclamped normalized value of each law.
    pub fn raw(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let p = self.scaled_point(t, x);
        self.laws.iter().map(|l| l.eval_unchecked(&p)).collect()
    }
}

/// Clamps each normalized component to `[-1, 1]`, then maps into the original
/// input box.
pub fn saturate(controller: &PolynomialController, t: f64, x: &[f64]) -> Vec<f64> {
    let v: Vec<f64> = controller
        .raw(t, x)
        .into_iter()
        .map(|u| if u.is_nan() { 0.0 } else { u.clamp(-1.0, 1.0) })
        .collect();
    controller.input_map.apply(&v)
}

/// Solves `M_k(y_γ) c_j = y_{σ+,j} − y_{σ−,j}` with a spectral pseudo-inverse.
pub fn extract_controller(
    y: &[f64],
    layout: &VariableLayout,
    meta: &ProblemMeta,
    truncation: f64,
) -> Result<PolynomialController, SynthesisError> {
    if y.len() != layout.total {
        return Err(SynthesisError::Length {
            got: y.len(),
            expected: layout.total,
        });
    }
    let k = layout.k;
    let gamma = layout.measure(MeasureKind::Gamma);
    let yg = MomentVector::new(gamma.basis.clone(), layout.slice(y, MeasureKind::Gamma).to_vec())
        .expect("slice length matches basis");
    let mk = moment_matrix(&yg, k).expect("γ carries degree 2k moments");
    let nk = mk.nrows();
    let eig = mk.self_adjoint_eigen(Side::Lower).map_err(|_| SynthesisError::Eigen)?;
    let s = eig.S().column_vector();
    let u = eig.U();
    let lmax = (0..nk).map(|i| s[i]).fold(0.0f64, f64::max);
    if !(lmax > 1e-14) {
        return Err(SynthesisError::NoMass);
    }
    let threshold = truncation * lmax;
    let kept: Vec<usize> = (0..nk).filter(|&i| s[i] > threshold).collect();
    let mut spectrum: Vec<f64> = (0..nk).map(|i| s[i]).collect();
    spectrum.sort_by(|a, b| b.total_cmp(a));

    let mut coefficients = Vec::with_capacity(layout.m);
    let mut residuals = Vec::with_capacity(layout.m);
    for j in 0..layout.m {
        let sp = layout.slice(y, MeasureKind::SigmaPlus(j));
        let sm = layout.slice(y, MeasureKind::SigmaMinus(j));
        let rhs: Vec<f64> = (0..nk).map(|i| sp[i] - sm[i]).collect();
        let mut c = vec![0.0; nk];
        for &e in &kept {
            let proj: f64 = (0..nk).map(|i| u[(i, e)] * rhs[i]).sum::<f64>() / s[e];
            for (i, ci) in c.iter_mut().enumerate() {
                *ci += proj * u[(i, e)];
            }
        }
        let res = (0..nk)
            .map(|i| {
                let mc: f64 = (0..nk).map(|l| mk[(i, l)] * c[l]).sum();
                (mc - rhs[i]).powi(2)
            })
            .sum::<f64>()
            .sqrt();
        coefficients.push(c);
        residuals.push(res);
    }
    Ok(PolynomialController::new(
        layout.n,
        k,
        coefficients,
        InputMap {
            offset: meta.input_offset.clone(),
            scale: meta.input_scale.clone(),
        },
        meta.time_scale,
        meta.state_offset.clone(),
        meta.state_scale.clone(),
        ExtractionDiagnostics {
            spectrum,
            rank: kept.len(),
            threshold,
            residuals,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SimEvent {
    /// First time a control component was clamped.
    SaturationActive { t: f64 },
    TargetReached { t: f64 },
    /// First time the state left the enclosing box by more than 10%.
    LeftStateSet { t: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationResult {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Applied input at each grid time, original coordinates.
    pub controls: Vec<Vec<f64>>,
    pub cost: f64,
    pub target_hit_time: Option<f64>,
    pub terminal_state: Vec<f64>,
    pub events: Vec<SimEvent>,
}

impl SimulationResult {
    /// `t, x1.., u1..` rows.
    pub fn trajectory_csv(&self) -> String {
        let n = self.states.first().map_or(0, |s| s.len());
        let m = self.controls.first().map_or(0, |u| u.len());
        let mut out = String::from("t");
        for i in 0..n {
            let _ = write!(out, ",x{}", i + 1);
        }
        for j in 0..m {
            let _ = write!(out, ",u{}", j + 1);
        }
        out.push('\n');
        for ((t, x), u) in self.times.iter().zip(&self.states).zip(&self.controls) {
            let _ = write!(out, "{t}");
            for v in x.iter().chain(u) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    /// `t, u1..` rows.
    pub fn control_csv(&self) -> String {
        let m = self.controls.first().map_or(0, |u| u.len());
        let mut out = String::from("t");
        for j in 0..m {
            let _ = write!(out, ",u{}", j + 1);
        }
        out.push('\n');
        for (t, u) in self.times.iter().zip(&self.controls) {
            let _ = write!(out, "{t}");
            for v in u {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Smallest `‖x‖₂` reached and its time.
    pub fn closest_approach(&self) -> (f64, f64) {
        self.times
            .iter()
            .zip(&self.states)
            .map(|(t, x)| (x.iter().map(|v| v * v).sum::<f64>().sqrt(), *t))
            .fold((f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a })
    }

    /// First grid time with `‖x‖₂ <= radius`.
    pub fn first_entry(&self, radius: f64) -> Option<f64> {
        self.times
            .iter()
            .zip(&self.states)
            .find(|(_, x)| x.iter().map(|v| v * v).sum::<f64>().sqrt() <= radius)
            .map(|(t, _)| *t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationOptions {
    pub step: f64,
    /// Stop at the target in free mode.
    pub stop_at_target: bool,
    pub target_slack: f64,
}

impl SimulationOptions {
    pub fn new(step: f64) -> Self {
        SimulationOptions {
            step,
            stop_at_target: true,
            target_slack: DEFAULT_TARGET_SLACK,
        }
    }
}

pub fn simulate(
    problem: &OCProblem,
    controller: &PolynomialController,
    step: f64,
) -> Result<SimulationResult, SynthesisError> {
    simulate_with(problem, |t, x| saturate(controller, t, x), SimulationOptions::new(step))
}

/// Fixed-step RK4 on `ẋ = f + g u(t, x)` with the running cost as an extra
/// state.
pub fn simulate_with<C>(
    problem: &OCProblem,
    control: C,
    options: SimulationOptions,
) -> Result<SimulationResult, SynthesisError>
where
    C: Fn(f64, &[f64]) -> Vec<f64>,
{
    if !(options.step > 0.0) {
        return Err(SynthesisError::Step);
    }
    let np = normalize_inputs(problem)?;
    let scaled = ScaledProblem::from_normalized(&np).ok();
    let n = problem.n;
    let horizon = problem.horizon;
    let steps = (horizon / options.step).ceil().max(1.0) as usize;
    let h = horizon / steps as f64;
    let ub = &problem.input_box;

    let rhs = |t: f64, xs: &[f64], out: &mut [f64]| {
        let x = &xs[..n];
        let u = control(t, x);
        problem.dynamics(t, x, &u, &mut out[..n]);
        out[n] = problem.running_cost_at(t, x, &u);
    };
    let in_target = |x: &[f64]| -> bool {
        match &scaled {
            Some(sp) => {
                let z = sp.to_scaled_state(x);
                sp.target_constraints
                    .iter()
                    .all(|c| c.eval_unchecked(&z) >= -options.target_slack)
            }
            None => problem.target_set.contains(x, options.target_slack),
        }
    };
    let outside = |x: &[f64]| -> bool {
        match &problem.state_set.bounds {
            Some(b) => x.iter().enumerate().any(|(i, v)| {
                let slack = 0.1 * (b.upper[i] - b.lower[i]) / 2.0;
                *v < b.lower[i] - slack || *v > b.upper[i] + slack
            }),
            None => false,
        }
    };
    let clamped = |u: &[f64]| u.iter().enumerate().any(|(j, v)| {
        let tol = 1e-12 * (1.0 + ub.upper[j].abs().max(ub.lower[j].abs()));
        *v <= ub.lower[j] + tol || *v >= ub.upper[j] - tol
    });

    let mut state: Vec<f64> = problem.x0.clone();
    state.push(0.0);
    let mut times = vec![0.0];
    let mut states = vec![problem.x0.clone()];
    let u0 = control(0.0, &problem.x0);
    let mut events = Vec::new();
    if clamped(&u0) {
        events.push(SimEvent::SaturationActive { t: 0.0 });
    }
    let mut controls = vec![u0];
    let mut target_hit = None;
    let free = problem.time_mode == TimeMode::Free;
    if free && options.stop_at_target && in_target(&problem.x0) {
        target_hit = Some(0.0);
    }

    let dim = n + 1;
    let (mut k1, mut k2, mut k3, mut k4) =
        (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    let mut tmp = vec![0.0; dim];
    let mut saw_sat = !events.is_empty();
    let mut saw_exit = false;
    let mut step_i = 0;
    while target_hit.is_none() && step_i < steps {
        let t = step_i as f64 * h;
        rhs(t, &state, &mut k1);
        for i in 0..dim {
            tmp[i] = state[i] + 0.5 * h * k1[i];
        }
        rhs(t + 0.5 * h, &tmp, &mut k2);
        for i in 0..dim {
            tmp[i] = state[i] + 0.5 * h * k2[i];
        }
        rhs(t + 0.5 * h, &tmp, &mut k3);
        for i in 0..dim {
            tmp[i] = state[i] + h * k3[i];
        }
        rhs(t + h, &tmp, &mut k4);
        for i in 0..dim {
            state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        step_i += 1;
        let tn = step_i as f64 * h;
        let x = state[..n].to_vec();
        let u = control(tn, &x);
        if !saw_sat && clamped(&u) {
            saw_sat = true;
            events.push(SimEvent::SaturationActive { t: tn });
        }
        if !saw_exit && outside(&x) {
            saw_exit = true;
            events.push(SimEvent::LeftStateSet { t: tn });
        }
        if free && options.stop_at_target && in_target(&x) {
            target_hit = Some(tn);
        }
        times.push(tn);
        states.push(x);
        controls.push(u);
    }
    if let Some(t) = target_hit {
        events.push(SimEvent::TargetReached { t });
    }
    let terminal_state = state[..n].to_vec();
    let cost = state[n] + problem.terminal_cost_at(&terminal_state);
    Ok(SimulationResult {
        times,
        states,
        controls,
        cost,
        target_hit_time: target_hit,
        terminal_state,
        events,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinTimeOracle {
    pub t_star: f64,
    /// Time of the single control switch (0 when no switch is needed).
    pub switch_time: f64,
    /// Input applied before the switch.
    pub first_input: f64,
}

impl MinTimeOracle {
    /// Open-loop bang-bang input at time `t`.
    pub fn input(&self, t: f64) -> f64 {
        if t < self.switch_time {
            self.first_input
        } else if t < self.t_star {
            -self.first_input
        } else {
            0.0
        }
    }
}

/// Minimum time to steer `ẍ = u`, `|u| <= 1` from `x0` to the origin.
pub fn oracle_di_mintime(x0: [f64; 2]) -> MinTimeOracle {
    let [x1, x2] = x0;
    let s = x1 + x2 * x2.abs() / 2.0;
    if s > 0.0 {
        let r = (x2 * x2 / 2.0 + x1).sqrt();
        MinTimeOracle {
            t_star: x2 + 2.0 * r,
            switch_time: x2 + r,
            first_input: -1.0,
        }
    } else if s < 0.0 {
        let r = (x2 * x2 / 2.0 - x1).sqrt();
        MinTimeOracle {
            t_star: -x2 + 2.0 * r,
            switch_time: -x2 + r,
            first_input: 1.0,
        }
    } else {
        MinTimeOracle {
            t_star: x2.abs(),
            switch_time: 0.0,
            first_input: if x2 > 0.0 { 1.0 } else { -1.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqrOracle {
    pub j_star: f64,
    pub horizon: f64,
    /// `(t, K(t))` with `u = -K(t) x`, subsampled.
    pub gains: Vec<(f64, [f64; 2])>,
    /// `P(0)`, row-major.
    pub p0: [f64; 4],
}

impl LqrOracle {
    /// Gain at `t` by linear interpolation of the schedule.
    pub fn gain(&self, t: f64) -> [f64; 2] {
        let g = &self.gains;
        if t <= g[0].0 {
            return g[0].1;
        }
        for w in g.windows(2) {
            if t <= w[1].0 {
                let a = (t - w[0].0) / (w[1].0 - w[0].0);
                return [
                    w[0].1[0] + a * (w[1].1[0] - w[0].1[0]),
                    w[0].1[1] + a * (w[1].1[1] - w[0].1[1]),
                ];
            }
        }
        g[g.len() - 1].1
    }
}

/// Finite-horizon LQR for the double integrator with `Q = q I`, scalar `r`,
/// zero terminal weight, by backward RK4 on the Riccati equation.
pub fn oracle_lqr(q: f64, r: f64, horizon: f64, x0: [f64; 2], dt: f64) -> LqrOracle {
    // P symmetric stored as (p11, p12, p22); -Ṗ = AᵀP + PA − P B R⁻¹ Bᵀ P + Q
    let rhs = |p: [f64; 3]| -> [f64; 3] {
        let (p11, p12, p22) = (p[0], p[1], p[2]);
        // in reversed time τ = T − t, dP/dτ = −Ṗ
        [
            q - p12 * p12 / r,
            p11 - p12 * p22 / r,
            2.0 * p12 + q - p22 * p22 / r,
        ]
    };
    let steps = (horizon / dt).ceil() as usize;
    let h = horizon / steps as f64;
    let every = (steps / 1000).max(1);
    let mut p = [0.0; 3];
    let mut schedule = vec![(horizon, [0.0, 0.0])];
    for i in 0..steps {
        let add = |a: [f64; 3], b: [f64; 3], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]];
        let k1 = rhs(p);
        let k2 = rhs(add(p, k1, 0.5 * h));
        let k3 = rhs(add(p, k2, 0.5 * h));
        let k4 = rhs(add(p, k3, h));
        for c in 0..3 {
            p[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        if (i + 1) % every == 0 || i + 1 == steps {
            let t = horizon - (i + 1) as f64 * h;
            schedule.push((t.max(0.0), [p[1] / r, p[2] / r]));
        }
    }
    schedule.reverse();
    let [a, b] = x0;
    LqrOracle {
        j_star: p[0] * a * a + 2.0 * p[1] * a * b + p[2] * b * b,
        horizon,
        gains: schedule,
        p0: [p[0], p[1], p[1], p[2]],
    }
}

/// Reference for the built-in `di_lqr` problem.
pub fn oracle_di_lqr() -> LqrOracle {
    oracle_lqr(1.0, 20.0, 5.0, [1.0, 1.0], 1e-4)
}

/// Controller from a fixed coefficient table, for tests and tooling.
pub fn controller_from_coefficients(
    problem: &OCProblem,
    degree: usize,
    coefficients: Vec<Vec<f64>>,
) -> Result<PolynomialController, SynthesisError> {
    let np = normalize_inputs(problem)?;
    let sp = ScaledProblem::from_normalized(&np)?;
    Ok(PolynomialController::new(
        problem.n,
        degree,
        coefficients,
        np.input_map,
        sp.time_scale,
        sp.state_offset,
        sp.state_scale,
        ExtractionDiagnostics {
            spectrum: Vec::new(),
            rank: 0,
            threshold: 0.0,
            residuals: Vec::new(),
        },
    ))
}

/// Ratio of the largest to the smallest positive eigenvalue.
pub fn spectrum_condition(spectrum: &[f64]) -> f64 {
    let max = spectrum.iter().cloned().fold(0.0f64, f64::max);
    let min = spectrum.iter().cloned().filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
    max / min
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocp::builtin_problem;
    use crate::relaxation::{layout, MeasureKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn meta_for(problem: &OCProblem, k: usize) -> (VariableLayout, ProblemMeta) {
        let np = normalize_inputs(problem).unwrap();
        let sp = ScaledProblem::from_normalized(&np).unwrap();
        let l = layout(&np, k).unwrap();
        let meta = ProblemMeta {
            order: k,
            time_mode: sp.time_mode,
            time_scale: sp.time_scale,
            state_offset: sp.state_offset.clone(),
            state_scale: sp.state_scale.clone(),
            input_offset: np.input_map.offset.clone(),
            input_scale: np.input_map.scale.clone(),
            test_degree: 0,
            dropped_rows: 0,
        };
        (l, meta)
    }

    /// `y` with `γ` given by weighted atoms and `σ_± = (u)_± γ`.
    fn synthetic(
        l: &VariableLayout,
        points: &[Vec<f64>],
        weights: &[f64],
        u: impl Fn(&[f64]) -> f64,
    ) -> Vec<f64> {
        let mut y = vec![0.0; l.total];
        for (p, w) in points.iter().zip(weights) {
            let uv = u(p);
            for (kind, wt) in [
                (MeasureKind::Gamma, *w),
                (MeasureKind::SigmaPlus(0), w * uv.max(0.0)),
                (MeasureKind::SigmaMinus(0), w * (-uv).max(0.0)),
            ] {
                let ml = l.measure(kind);
                for (i, a) in ml.basis.monomials().iter().enumerate() {
                    y[ml.offset + i] += wt * a.eval(p);
                }
            }
        }
        y
    }

    #[test]
    fn constant_control_is_recovered() {
        let p = builtin_problem("di_lqr").unwrap();
        let k = 3;
        let (l, meta) = meta_for(&p, k);
        // Lebesgue in t on [0,1] at a fixed state, by Gauss-like dense sampling
        let npts = 400;
        let points: Vec<Vec<f64>> = (0..npts)
            .map(|i| vec![(i as f64 + 0.5) / npts as f64, 0.2, -0.3])
            .collect();
        let weights = vec![1.0 / npts as f64; npts];
        let y = synthetic(&l, &points, &weights, |_| 0.7);
        let c = extract_controller(&y, &l, &meta, DEFAULT_TRUNCATION).unwrap();
        for pt in &points {
            let v = c.laws()[0].eval_unchecked(pt);
            assert!((v - 0.7).abs() <= 1e-8, "{v}");
        }
    }

    #[test]
    fn equal_splits_give_zero_control() {
        let p = builtin_problem("di_lqr").unwrap();
        let (l, meta) = meta_for(&p, 2);
        let points: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 20.0, 0.1, 0.2]).collect();
        let mut y = synthetic(&l, &points, &vec![0.05; 20], |_| 0.0);
        let sp = l.measure(MeasureKind::SigmaPlus(0)).clone();
        let sm = l.measure(MeasureKind::SigmaMinus(0)).clone();
        for i in 0..sp.len() {
            y[sp.offset + i] = 0.3 * y[l.measure(MeasureKind::Gamma).offset + i];
            y[sm.offset + i] = y[sp.offset + i];
        }
        let c = extract_controller(&y, &l, &meta, DEFAULT_TRUNCATION).unwrap();
        assert!(c.coefficients[0].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn polynomial_control_is_recovered_on_support() {
        let p = builtin_problem("di_lqr").unwrap();
        let k = 2;
        let (l, meta) = meta_for(&p, k);
        let basis = MonomialBasis::new(3, k);
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // random walk in the scaled box
            let mut z = [0.0f64, 0.0];
            let points: Vec<Vec<f64>> = (0..50)
                .map(|i| {
                    for v in &mut z {
                        *v = (*v + rng.random_range(-0.3..0.3)).clamp(-1.0, 1.0);
                    }
                    vec![i as f64 / 49.0, z[0], z[1]]
                })
                .collect();
            let coeffs: Vec<f64> = (0..basis.len()).map(|_| rng.random_range(-0.3..0.3)).collect();
            let law = Polynomial::from_coefficients(&basis, &coeffs);
            let y = synthetic(&l, &points, &vec![1.0 / 50.0; 50], |p| law.eval_unchecked(p));
            let ctrl = extract_controller(&y, &l, &meta, DEFAULT_TRUNCATION).unwrap();
            assert_eq!(ctrl.diagnostics.rank, basis.len(), "seed {seed}: data must support the law");
            for pt in &points {
                let want = law.eval_unchecked(pt);
                let got = ctrl.laws()[0].eval_unchecked(pt);
                assert!((want - got).abs() <= 1e-6, "seed {seed}: {want} vs {got}");
            }
        }
    }

    #[test]
    fn no_mass_is_an_error() {
        let p = builtin_problem("di_lqr").unwrap();
        let (l, meta) = meta_for(&p, 2);
        let y = vec![0.0; l.total];
        assert!(matches!(
            extract_controller(&y, &l, &meta, DEFAULT_TRUNCATION),
            Err(SynthesisError::NoMass)
        ));
    }

    #[test]
    fn saturation_examples() {
        let p = builtin_problem("di_lqr").unwrap();
        let c = controller_from_coefficients(&p, 0, vec![vec![1.7]]).unwrap();
        assert_eq!(saturate(&c, 0.0, &[0.0, 0.0]), vec![1.0]);
        let c = controller_from_coefficients(&p, 0, vec![vec![0.4]]).unwrap();
        assert_eq!(saturate(&c, 1.0, &[0.5, 0.5]), vec![0.4]);
        let d = builtin_problem("dubins_lqr").unwrap();
        let c = controller_from_coefficients(&d, 0, vec![vec![0.0], vec![0.0]]).unwrap();
        assert_eq!(saturate(&c, 0.0, &[0.0, 0.0, 0.0]), vec![0.5, 0.0]);
    }

    #[test]
    fn saturated_output_stays_in_box() {
        let d = builtin_problem("dubins_lqr").unwrap();
        let basis = MonomialBasis::new(4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let coeffs: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..basis.len()).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let c = controller_from_coefficients(&d, 2, coeffs).unwrap();
        for it in 0..=10 {
            for ix in 0..=10 {
                for iy in 0..=10 {
                    for ith in 0..=10 {
                        let t = 3.0 * it as f64 / 10.0;
                        let x = [
                            -1.5 + 0.3 * ix as f64,
                            -1.5 + 0.3 * iy as f64,
                            -4.0 + 0.8 * ith as f64,
                        ];
                        let u = saturate(&c, t, &x);
                        assert!((0.0..=1.0).contains(&u[0]) && (-3.0..=3.0).contains(&u[1]));
                    }
                }
            }
        }
    }

    #[test]
    fn controller_json_round_trip() {
        let p = builtin_problem("di_lqr").unwrap();
        let c = controller_from_coefficients(&p, 1, vec![vec![0.1, -0.2, 0.3]]).unwrap();
        let back = PolynomialController::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back.raw(0.7, &[0.1, 0.2]), c.raw(0.7, &[0.1, 0.2]));
    }

    #[test]
    fn zero_dynamics_keep_state() {
        let mut p = builtin_problem("di_lqr").unwrap();
        p.f = vec![Polynomial::zero(3); 2];
        p.g = vec![vec![Polynomial::zero(3)]; 2];
        let c = controller_from_coefficients(&p, 0, vec![vec![0.5]]).unwrap();
        let r = simulate(&p, &c, 0.01).unwrap();
        assert!(r.states.iter().all(|x| x == &p.x0));
        // h = x1² + x2² + 20u² = 1 + 1 + 20·0.25 on [0, 5]
        assert!((r.cost - 5.0 * 7.0).abs() < 1e-9);
    }

    #[test]
    fn one_rk4_step_is_exact_for_linear_dynamics() {
        let mut p = builtin_problem("di_lqr").unwrap();
        p.x0 = vec![0.3, 1.0];
        p.horizon = 0.1;
        let c = controller_from_coefficients(&p, 0, vec![vec![-1.0]]).unwrap();
        let r = simulate(&p, &c, 0.1).unwrap();
        assert_eq!(r.states.len(), 2);
        assert!((r.terminal_state[0] - 0.395).abs() < 1e-10);
        assert!((r.terminal_state[1] - 0.9).abs() < 1e-10);
    }

    #[test]
    fn oracle_examples() {
        let o = oracle_di_mintime([0.3, 1.0]);
        assert!((o.t_star - (1.0 + 2.0 * 0.8f64.sqrt())).abs() < 1e-12);
        assert!((o.t_star - 2.78885).abs() < 1e-5);
        assert_eq!(oracle_di_mintime([0.0, 0.0]).t_star, 0.0);
        assert!((oracle_di_mintime([-0.5, 1.0]).t_star - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bang_bang_reaches_origin_at_t_star() {
        let p = builtin_problem("di_mintime").unwrap();
        let o = oracle_di_mintime([0.3, 1.0]);
        let opts = SimulationOptions {
            stop_at_target: false,
            ..SimulationOptions::new(1e-4)
        };
        let r = simulate_with(&p, |t, _| vec![o.input(t)], opts).unwrap();
        let (dist, t) = r.closest_approach();
        assert!(dist < 1e-3, "{dist}");
        assert!((t - o.t_star).abs() < 1e-3);
    }

    #[test]
    fn riccati_oracle() {
        let o = oracle_di_lqr();
        assert_eq!(o.gains.last().unwrap().1, [0.0, 0.0]);
        assert!(o.j_star > 0.0);
        let doubled = oracle_lqr(1.0, 40.0, 5.0, [1.0, 1.0], 1e-4);
        assert!(doubled.j_star > o.j_star);
        // the LQR feedback realizes J*
        let p = builtin_problem("di_lqr").unwrap();
        let opts = SimulationOptions::new(1e-3);
        let r = simulate_with(
            &p,
            |t, x| {
                let kk = o.gain(t);
                vec![-(kk[0] * x[0] + kk[1] * x[1])]
            },
            opts,
        )
        .unwrap();
        assert!((r.cost - o.j_star).abs() / o.j_star < 1e-3, "{} vs {}", r.cost, o.j_star);
        assert!(r.controls.iter().all(|u| u[0].abs() <= 1.0));
    }

    #[test]
    fn rk4_order() {
        let p = builtin_problem("di_lqr").unwrap();
        let law = |t: f64, x: &[f64]| vec![(-0.2 * x[0] - 0.7 * x[1] + 0.05 * t).clamp(-1.0, 1.0)];
        let cost = |h: f64| simulate_with(&p, law, SimulationOptions::new(h)).unwrap().cost;
        let (c1, c2, c3) = (cost(0.2), cost(0.1), cost(0.05));
        let ratio = (c1 - c2).abs() / (c2 - c3).abs();
        assert!(ratio >= 12.0, "ratio {ratio}");
    }
}

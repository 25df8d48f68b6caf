//! Optimal control problem statement, validation, input normalization and
//! the internal unit rescaling applied before building relaxations.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::{MultiIndex, PolyError, Polynomial, TermRecord};

#[derive(Debug, Error)]
pub enum OcpError {
    #[error("unknown builtin problem `{0}`")]
    UnknownBuiltin(String),
    #[error("degenerate input interval for u_{index}: [{lower}, {upper}]")]
    DegenerateInput { index: usize, lower: f64, upper: f64 },
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("problem file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("problem file: {0}")]
    Io(#[from] std::io::Error),
}

/// Axis-aligned enclosing box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Bounds { lower, upper }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn half_width(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| 0.5 * (b - a))
            .collect()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (a, b))| *v >= a - tol && *v <= b + tol)
    }
}

/// `{x : h_i(x) >= 0 for all i}`, optionally intersected with an enclosing box.
#[derive(Debug, Clone, PartialEq)]
pub struct SemialgebraicSet {
    pub nvars: usize,
    pub inequalities: Vec<Polynomial>,
    pub bounds: Option<Bounds>,
}

impl SemialgebraicSet {
    pub fn boxed(bounds: Bounds) -> Self {
        SemialgebraicSet {
            nvars: bounds.dim(),
            inequalities: Vec::new(),
            bounds: Some(bounds),
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.bounds.as_ref().is_none_or(|b| b.contains(x, tol))
            && self
                .inequalities
                .iter()
                .all(|h| h.eval_unchecked(x) >= -tol)
    }

    /// Largest constraint violation at `x` (0 when inside).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let mut v: f64 = 0.0;
        if let Some(b) = &self.bounds {
            for (i, xi) in x.iter().enumerate() {
                v = v.max(b.lower[i] - xi).max(xi - b.upper[i]);
            }
        }
        for h in &self.inequalities {
            v = v.max(-h.eval_unchecked(x));
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl InputBox {
    pub fn unit(m: usize) -> Self {
        InputBox {
            lower: vec![-1.0; m],
            upper: vec![1.0; m],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (a, b))| *v >= a - tol && *v <= b + tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeMode {
    /// Reach the target exactly at the horizon `T`.
    Fixed,
    /// Reach the target at some `T <= T0`.
    Free,
}

/// Control-affine problem `ẋ = f(t,x) + g(t,x) u` with polynomial data.
#[derive(Debug, Clone, PartialEq)]
pub struct OCProblem {
    pub name: String,
    pub n: usize,
    pub m: usize,
    /// `n` polynomials over `(t, x)`.
    pub f: Vec<Polynomial>,
    /// `n × m` polynomials over `(t, x)`.
    pub g: Vec<Vec<Polynomial>>,
    /// Running cost over `(t, x, u)`.
    pub running_cost: Polynomial,
    /// Terminal cost over `x`.
    pub terminal_cost: Polynomial,
    pub state_set: SemialgebraicSet,
    pub target_set: SemialgebraicSet,
    pub input_box: InputBox,
    pub x0: Vec<f64>,
    /// `T` in fixed mode, `T0` in free mode.
    pub horizon: f64,
    pub time_mode: TimeMode,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    DimensionMismatch(String),
    X0Infeasible { violation: f64 },
    NonCompact(&'static str),
    BadHorizon(f64),
    DegenerateInput(usize),
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::DimensionMismatch(s) => write!(f, "dimension mismatch: {s}"),
            Diagnostic::X0Infeasible { violation } => {
                write!(f, "x0-infeasible: constraint violated by {violation:.3e}")
            }
            Diagnostic::NonCompact(which) => {
                write!(f, "{which} has no enclosing box; compact description required")
            }
            Diagnostic::BadHorizon(t) => write!(f, "horizon must be positive, got {t}"),
            Diagnostic::DegenerateInput(j) => write!(f, "input interval {j} is empty or degenerate"),
        }
    }
}

impl OCProblem {
    /// Evaluates `f + g u` at `(t, x, u)`.
    pub fn dynamics(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        let mut tx = Vec::with_capacity(1 + self.n);
        tx.push(t);
        tx.extend_from_slice(x);
        for i in 0..self.n {
            let mut v = self.f[i].eval_unchecked(&tx);
            for j in 0..self.m {
                let gij = &self.g[i][j];
                if !gij.is_zero() {
                    v += gij.eval_unchecked(&tx) * u[j];
                }
            }
            out[i] = v;
        }
    }

    pub fn running_cost_at(&self, t: f64, x: &[f64], u: &[f64]) -> f64 {
        let mut p = Vec::with_capacity(1 + self.n + self.m);
        p.push(t);
        p.extend_from_slice(x);
        p.extend_from_slice(u);
        self.running_cost.eval_unchecked(&p)
    }

    pub fn terminal_cost_at(&self, x: &[f64]) -> f64 {
        self.terminal_cost.eval_unchecked(x)
    }

    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut d = Vec::new();
        let (n, m) = (self.n, self.m);
        let mut dim = |msg: String| d.push(Diagnostic::DimensionMismatch(msg));
        if self.f.len() != n {
            dim(format!("f has {} components, n = {n}", self.f.len()));
        }
        if self.f.iter().any(|p| p.nvars() != 1 + n) {
            dim("f must be polynomials over (t, x)".into());
        }
        if self.g.len() != n || self.g.iter().any(|r| r.len() != m) {
            let cols = self.g.first().map(|r| r.len()).unwrap_or(0);
            dim(format!(
                "g is {}x{cols}, expected {n}x{m}",
                self.g.len()
            ));
        }
        if self.g.iter().flatten().any(|p| p.nvars() != 1 + n) {
            dim("g must be polynomials over (t, x)".into());
        }
        if self.running_cost.nvars() != 1 + n + m {
            dim("running cost must be a polynomial over (t, x, u)".into());
        }
        if self.terminal_cost.nvars() != n {
            dim("terminal cost must be a polynomial over x".into());
        }
        if self.input_box.lower.len() != m || self.input_box.upper.len() != m {
            dim(format!(
                "input box has dimension {}, m = {m}",
                self.input_box.lower.len()
            ));
        }
        if self.x0.len() != n {
            dim(format!("x0 has length {}, n = {n}", self.x0.len()));
        }
        for (set, label) in [(&self.state_set, "X"), (&self.target_set, "X_T")] {
            if set.nvars != n || set.inequalities.iter().any(|h| h.nvars() != n) {
                dim(format!("{label} must be described over x"));
            }
            if let Some(b) = &set.bounds {
                if b.lower.len() != n || b.upper.len() != n {
                    dim(format!("{label} box has wrong dimension"));
                }
            }
        }
        let dims_ok = d.is_empty();
        for (set, label) in [(&self.state_set, "X"), (&self.target_set, "X_T")] {
            if set.bounds.is_none() {
                d.push(Diagnostic::NonCompact(label));
            }
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            d.push(Diagnostic::BadHorizon(self.horizon));
        }
        if self.input_box.lower.len() == self.input_box.upper.len() {
            for j in 0..self.input_box.lower.len() {
                if !(self.input_box.lower[j] < self.input_box.upper[j]) {
                    d.push(Diagnostic::DegenerateInput(j));
                }
            }
        }
        if dims_ok {
            let viol = self.state_set.violation(&self.x0);
            if viol > 1e-9 {
                d.push(Diagnostic::X0Infeasible { violation: viol });
            }
        }
        d
    }

    /// Maximum total degree of the input matrix entries.
    pub fn input_matrix_degree(&self) -> usize {
        self.g.iter().flatten().map(|p| p.degree()).max().unwrap_or(0)
    }

    pub fn drift_degree(&self) -> usize {
        self.f.iter().map(|p| p.degree()).max().unwrap_or(0)
    }
}

/// `u_orig = offset + scale ⊙ u_norm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputMap {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputMap {
    pub fn apply(&self, u_norm: &[f64]) -> Vec<f64> {
        u_norm
            .iter()
            .enumerate()
            .map(|(j, v)| self.offset[j] + self.scale[j] * v)
            .collect()
    }

    pub fn is_identity(&self) -> bool {
        self.offset.iter().all(|c| *c == 0.0) && self.scale.iter().all(|d| *d == 1.0)
    }
}

/// Problem rewritten so that the input box is `[-1, 1]^m`.
#[derive(Debug, Clone)]
pub struct NormalizedProblem {
    pub problem: OCProblem,
    pub input_map: InputMap,
    pub original: OCProblem,
}

pub fn normalize_inputs(problem: &OCProblem) -> Result<NormalizedProblem, OcpError> {
    let (n, m) = (problem.n, problem.m);
    let ub = &problem.input_box;
    let mut offset = Vec::with_capacity(m);
    let mut scale = Vec::with_capacity(m);
    for j in 0..m {
        let (a, b) = (ub.lower[j], ub.upper[j]);
        if !(a < b) {
            return Err(OcpError::DegenerateInput {
                index: j,
                lower: a,
                upper: b,
            });
        }
        offset.push(0.5 * (a + b));
        scale.push(0.5 * (b - a));
    }
    let mut f = problem.f.clone();
    let mut g = problem.g.clone();
    for i in 0..n {
        for j in 0..m {
            if offset[j] != 0.0 {
                f[i] = f[i].add(&problem.g[i][j].scale(offset[j]))?;
            }
            g[i][j] = problem.g[i][j].scale(scale[j]);
        }
    }
    let nv = 1 + n + m;
    let mut off = vec![0.0; nv];
    let mut sc = vec![1.0; nv];
    for j in 0..m {
        off[1 + n + j] = offset[j];
        sc[1 + n + j] = scale[j];
    }
    let h = problem.running_cost.substitute_affine(&off, &sc);
    let normalized = OCProblem {
        f,
        g,
        running_cost: h,
        input_box: InputBox::unit(m),
        ..problem.clone()
    };
    Ok(NormalizedProblem {
        problem: normalized,
        input_map: InputMap { offset, scale },
        original: problem.clone(),
    })
}

/// Scaled time at `t = 0`; the horizon maps to `s = 1`.
pub const SCALED_TIME_START: f64 = -1.0;

/// Scaled time of `t` for horizon `horizon`.
pub fn scaled_time(t: f64, horizon: f64) -> f64 {
    SCALED_TIME_START + t * (1.0 - SCALED_TIME_START) / horizon
}

/// `dt/ds` of the time rescaling.
pub fn time_rate(horizon: f64) -> f64 {
    horizon / (1.0 - SCALED_TIME_START)
}

/// Unit rescaling `t = (T/2)(s + 1)`, `x = c + w ⊙ z` of a normalized
/// problem.
///
/// In scaled coordinates `s ∈ [-1, 1]`, `z ∈ [-1, 1]^n` and `u ∈ [-1, 1]^m`.
#[derive(Debug, Clone)]
pub struct ScaledProblem {
    pub n: usize,
    pub m: usize,
    pub time_mode: TimeMode,
    pub time_scale: f64,
    pub state_offset: Vec<f64>,
    pub state_scale: Vec<f64>,
    /// Over `(s, z)`.
    pub f: Vec<Polynomial>,
    pub g: Vec<Vec<Polynomial>>,
    /// Over `(s, z, u)`; already multiplied by `dt/ds`.
    pub running_cost: Polynomial,
    /// Over `z`.
    pub terminal_cost: Polynomial,
    /// Over `z`, box constraints included as `1 - z_i^2`.
    pub state_constraints: Vec<Polynomial>,
    pub target_constraints: Vec<Polynomial>,
    pub x0: Vec<f64>,
}

impl ScaledProblem {
    pub fn from_normalized(np: &NormalizedProblem) -> Result<Self, OcpError> {
        let p = &np.problem;
        let n = p.n;
        let bounds = p.state_set.bounds.as_ref().ok_or_else(|| {
            OcpError::Invalid("state set needs an enclosing box for rescaling".into())
        })?;
        let c = bounds.center();
        let w = bounds.half_width();
        if w.iter().any(|v| !(*v > 0.0)) {
            return Err(OcpError::Invalid("state box has zero width".into()));
        }
        let tau = time_rate(p.horizon);

        let mut off_tx = vec![-SCALED_TIME_START * tau; 1 + n];
        let mut sc_tx = vec![tau; 1 + n];
        off_tx[1..].copy_from_slice(&c);
        sc_tx[1..].copy_from_slice(&w);
        let f = p
            .f
            .iter()
            .enumerate()
            .map(|(i, fi)| fi.substitute_affine(&off_tx, &sc_tx).scale(tau / w[i]))
            .collect();
        let g = p
            .g
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .map(|gij| gij.substitute_affine(&off_tx, &sc_tx).scale(tau / w[i]))
                    .collect()
            })
            .collect();

        let mut off_all = off_tx.clone();
        let mut sc_all = sc_tx.clone();
        off_all.extend(std::iter::repeat_n(0.0, p.m));
        sc_all.extend(std::iter::repeat_n(1.0, p.m));
        let running_cost = p
            .running_cost
            .substitute_affine(&off_all, &sc_all)
            .scale(tau);
        let terminal_cost = p.terminal_cost.substitute_affine(&c, &w);

        let scale_set = |set: &SemialgebraicSet| -> Vec<Polynomial> {
            let mut out: Vec<Polynomial> = set
                .inequalities
                .iter()
                .map(|h| normalize_constraint(&h.substitute_affine(&c, &w)))
                .filter(|h| !h.is_zero())
                .collect();
            if let Some(b) = &set.bounds {
                for i in 0..n {
                    // sub-box of the enclosing box, mapped into z coordinates
                    let lo = (b.lower[i] - c[i]) / w[i];
                    let hi = (b.upper[i] - c[i]) / w[i];
                    let mid = 0.5 * (lo + hi);
                    let half = 0.5 * (hi - lo);
                    let zi = Polynomial::var(n, i);
                    let shifted = zi.add(&Polynomial::constant(n, -mid)).expect("same nvars");
                    let q = Polynomial::constant(n, half * half)
                        .sub(&shifted.mul(&shifted).expect("same nvars"))
                        .expect("same nvars");
                    out.push(normalize_constraint(&q));
                }
            }
            out
        };

        let x0 = p
            .x0
            .iter()
            .enumerate()
            .map(|(i, v)| (v - c[i]) / w[i])
            .collect();
        let state_constraints = scale_set(&p.state_set);
        let target_constraints = scale_set(&p.target_set);
        Ok(ScaledProblem {
            n,
            m: p.m,
            time_mode: p.time_mode,
            time_scale: p.horizon,
            state_offset: c,
            state_scale: w,
            f,
            g,
            running_cost,
            terminal_cost,
            state_constraints,
            target_constraints,
            x0,
        })
    }

    pub fn to_scaled_state(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| (v - self.state_offset[i]) / self.state_scale[i])
            .collect()
    }

    pub fn to_scaled_time(&self, t: f64) -> f64 {
        scaled_time(t, self.time_scale)
    }
}

fn normalize_constraint(h: &Polynomial) -> Polynomial {
    let mx = h.terms().map(|(_, c)| c.abs()).fold(0.0, f64::max);
    if mx > 0.0 {
        h.scale(1.0 / mx).prune(1e-14)
    } else {
        h.clone()
    }
}

pub const BUILTIN_NAMES: [&str; 4] = ["di_mintime", "di_lqr", "dubins_lqr", "si_mintime"];

fn mono(nvars: usize, exps: &[u32], c: f64) -> Polynomial {
    Polynomial::monomial(nvars, MultiIndex(exps.to_vec()), c)
}

fn sum(ps: &[Polynomial]) -> Polynomial {
    ps.iter()
        .skip(1)
        .fold(ps[0].clone(), |a, b| a.add(b).expect("same nvars"))
}

/// Benchmark problems. `si_mintime` is a one-dimensional minimum-time
/// sanity problem with known answer `t* = 1`.
pub fn builtin_problem(name: &str) -> Result<OCProblem, OcpError> {
    match name {
        "di_mintime" | "di_lqr" => {
            let (n, m) = (2, 1);
            let f = vec![mono(3, &[0, 0, 1], 1.0), Polynomial::zero(3)];
            let g = vec![vec![Polynomial::zero(3)], vec![Polynomial::constant(3, 1.0)]];
            let bx = Bounds::new(vec![-2.0, -2.0], vec![2.0, 2.0]);
            let state_set = SemialgebraicSet::boxed(bx.clone());
            if name == "di_mintime" {
                let target_set = SemialgebraicSet {
                    nvars: n,
                    inequalities: vec![mono(2, &[2, 0], -1.0), mono(2, &[0, 2], -1.0)],
                    bounds: Some(bx),
                };
                Ok(OCProblem {
                    name: name.into(),
                    n,
                    m,
                    f,
                    g,
                    running_cost: Polynomial::constant(4, 1.0),
                    terminal_cost: Polynomial::zero(2),
                    state_set,
                    target_set,
                    input_box: InputBox::unit(1),
                    x0: vec![0.3, 1.0],
                    horizon: 3.0,
                    time_mode: TimeMode::Free,
                })
            } else {
                let h = sum(&[
                    mono(4, &[0, 2, 0, 0], 1.0),
                    mono(4, &[0, 0, 2, 0], 1.0),
                    mono(4, &[0, 0, 0, 2], 20.0),
                ]);
                Ok(OCProblem {
                    name: name.into(),
                    n,
                    m,
                    f,
                    g,
                    running_cost: h,
                    terminal_cost: Polynomial::zero(2),
                    target_set: state_set.clone(),
                    state_set,
                    input_box: InputBox::unit(1),
                    x0: vec![1.0, 1.0],
                    horizon: 5.0,
                    time_mode: TimeMode::Fixed,
                })
            }
        }
        "dubins_lqr" => {
            // x = (x1, x2, theta), u = (V, omega); cos/sin expanded to order 2
            let (n, m) = (3, 2);
            let f = vec![Polynomial::zero(4); 3];
            let g = vec![
                vec![
                    sum(&[Polynomial::constant(4, 1.0), mono(4, &[0, 0, 0, 2], -0.5)]),
                    Polynomial::zero(4),
                ],
                vec![mono(4, &[0, 0, 0, 1], 1.0), Polynomial::zero(4)],
                vec![Polynomial::zero(4), Polynomial::constant(4, 1.0)],
            ];
            let h = sum(&[
                mono(6, &[0, 2, 0, 0, 0, 0], 1.0),
                mono(6, &[0, 1, 0, 0, 0, 0], -1.0),
                mono(6, &[0, 0, 2, 0, 0, 0], 1.0),
                mono(6, &[0, 0, 1, 0, 0, 0], 0.8),
                Polynomial::constant(6, 0.25 + 0.16),
                mono(6, &[0, 0, 0, 0, 2, 0], 1.0),
                mono(6, &[0, 0, 0, 0, 0, 2], 1.0 / 9.0),
            ]);
            let bx = Bounds::new(vec![-1.0, -1.0, -PI], vec![1.0, 1.0, PI]);
            let state_set = SemialgebraicSet::boxed(bx);
            Ok(OCProblem {
                name: name.into(),
                n,
                m,
                f,
                g,
                running_cost: h,
                terminal_cost: Polynomial::zero(3),
                target_set: state_set.clone(),
                state_set,
                input_box: InputBox {
                    lower: vec![0.0, -3.0],
                    upper: vec![1.0, 3.0],
                },
                x0: vec![-0.8, 0.8, 0.0],
                horizon: 3.0,
                time_mode: TimeMode::Fixed,
            })
        }
        "si_mintime" => {
            let bx = Bounds::new(vec![-2.0], vec![2.0]);
            Ok(OCProblem {
                name: name.into(),
                n: 1,
                m: 1,
                f: vec![Polynomial::zero(2)],
                g: vec![vec![Polynomial::constant(2, 1.0)]],
                running_cost: Polynomial::constant(3, 1.0),
                terminal_cost: Polynomial::zero(1),
                state_set: SemialgebraicSet::boxed(bx.clone()),
                target_set: SemialgebraicSet {
                    nvars: 1,
                    inequalities: vec![mono(1, &[2], -1.0)],
                    bounds: Some(bx),
                },
                input_box: InputBox::unit(1),
                x0: vec![1.0],
                horizon: 2.0,
                time_mode: TimeMode::Free,
            })
        }
        other => Err(OcpError::UnknownBuiltin(other.to_string())),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SetFile {
    #[serde(default)]
    inequalities: Vec<Vec<TermRecord>>,
    #[serde(default, rename = "box")]
    bounds: Option<Bounds>,
}

/// On-disk JSON problem description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemFile {
    #[serde(default)]
    pub name: Option<String>,
    pub n: usize,
    pub m: usize,
    f: Vec<Vec<TermRecord>>,
    g: Vec<Vec<Vec<TermRecord>>>,
    h: Vec<TermRecord>,
    #[serde(rename = "H")]
    terminal: Vec<TermRecord>,
    #[serde(rename = "X")]
    state_set: SetFile,
    #[serde(rename = "XT")]
    target_set: SetFile,
    #[serde(rename = "U")]
    input_box: InputBox,
    x0: Vec<f64>,
    horizon: f64,
    time_mode: TimeMode,
}

impl From<&OCProblem> for ProblemFile {
    fn from(p: &OCProblem) -> Self {
        let set = |s: &SemialgebraicSet| SetFile {
            inequalities: s.inequalities.iter().map(|h| h.to_records()).collect(),
            bounds: s.bounds.clone(),
        };
        ProblemFile {
            name: Some(p.name.clone()),
            n: p.n,
            m: p.m,
            f: p.f.iter().map(|q| q.to_records()).collect(),
            g: p
                .g
                .iter()
                .map(|r| r.iter().map(|q| q.to_records()).collect())
                .collect(),
            h: p.running_cost.to_records(),
            terminal: p.terminal_cost.to_records(),
            state_set: set(&p.state_set),
            target_set: set(&p.target_set),
            input_box: p.input_box.clone(),
            x0: p.x0.clone(),
            horizon: p.horizon,
            time_mode: p.time_mode,
        }
    }
}

impl TryFrom<ProblemFile> for OCProblem {
    type Error = OcpError;

    fn try_from(pf: ProblemFile) -> Result<Self, OcpError> {
        let (n, m) = (pf.n, pf.m);
        let tx = 1 + n;
        let set = |s: &SetFile| -> Result<SemialgebraicSet, OcpError> {
            Ok(SemialgebraicSet {
                nvars: n,
                inequalities: s
                    .inequalities
                    .iter()
                    .map(|r| Polynomial::from_records(n, r))
                    .collect::<Result<_, _>>()?,
                bounds: s.bounds.clone(),
            })
        };
        Ok(OCProblem {
            name: pf.name.clone().unwrap_or_else(|| "problem".into()),
            n,
            m,
            f: pf
                .f
                .iter()
                .map(|r| Polynomial::from_records(tx, r))
                .collect::<Result<_, _>>()?,
            g: pf
                .g
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|r| Polynomial::from_records(tx, r))
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<_, _>>()?,
            running_cost: Polynomial::from_records(tx + m, &pf.h)?,
            terminal_cost: Polynomial::from_records(n, &pf.terminal)?,
            state_set: set(&pf.state_set)?,
            target_set: set(&pf.target_set)?,
            input_box: pf.input_box,
            x0: pf.x0,
            horizon: pf.horizon,
            time_mode: pf.time_mode,
        })
    }
}

impl OCProblem {
    pub fn to_json(&self) -> Result<String, OcpError> {
        Ok(serde_json::to_string_pretty(&ProblemFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self, OcpError> {
        let pf: ProblemFile = serde_json::from_str(s)?;
        OCProblem::try_from(pf)
    }

    pub fn load(path: &Path) -> Result<Self, OcpError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

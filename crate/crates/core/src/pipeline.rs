//! Order sweep: assemble, solve, extract and simulate for each relaxation
//! order, then collect a report and plot-ready CSV files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{map_ordered, Execution};
use crate::ocp::{
    builtin_problem, normalize_inputs, NormalizedProblem, OCProblem, OcpError, ProblemFile,
    ScaledProblem, BUILTIN_NAMES,
};
use crate::relaxation::{self, assemble, RelaxationConfig, VariableLayout};
use crate::sdp::{solve, ConicSolution, Residuals, SolveStatus, SolverSettings};
use crate::synthesis::{
    extract_controller, oracle_di_lqr, oracle_di_mintime, simulate_with, saturate, PolynomialController,
    SimEvent, SimulationOptions, SimulationResult,
};

/// Eigenvalue cutoff for extraction from solver moments. Interior point
/// moments carry noise near 1e-6, and inverting below this level produces
/// controllers that miss the target.
pub const SOLVED_TRUNCATION: f64 = 1e-5;
/// Allowed decrease between consecutive bounds before it is flagged.
pub const MONOTONE_TOLERANCE: f64 = 1e-6;
/// Allowed excess of a bound over the realized cost before it is flagged.
pub const BOUND_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("problem is invalid: {0}")]
    Invalid(String),
    #[error("orders must be nonempty and strictly ascending")]
    Orders,
    #[error(transparent)]
    Ocp(#[from] OcpError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("unknown oracle {0:?}; expected di_mintime or di_lqr")]
    UnknownOracle(String),
}

/// A builtin name or a JSON problem file.
pub fn load_problem(source: &str) -> Result<OCProblem, PipelineError> {
    if BUILTIN_NAMES.contains(&source) {
        Ok(builtin_problem(source)?)
    } else {
        Ok(OCProblem::load(Path::new(source))?)
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub orders: Vec<usize>,
    pub settings: SolverSettings,
    pub jobs: usize,
    pub sim_step: f64,
    pub truncation: f64,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(orders: Vec<usize>) -> Self {
        RunConfig {
            orders,
            settings: SolverSettings::default(),
            jobs: 1,
            sim_step: 1e-3,
            truncation: SOLVED_TRUNCATION,
            out_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderRecord {
    pub k: usize,
    pub two_k: usize,
    pub num_vars: Option<usize>,
    pub num_rows: Option<usize>,
    pub status: Option<SolveStatus>,
    pub objective: Option<f64>,
    pub residuals: Option<Residuals>,
    pub iterations: Option<usize>,
    pub extraction_residual: Option<f64>,
    pub controller_rank: Option<usize>,
    pub realized_cost: Option<f64>,
    pub target_hit_time: Option<f64>,
    pub terminal_state: Option<Vec<f64>>,
    pub events: Vec<SimEvent>,
    pub error: Option<String>,
}

impl OrderRecord {
    fn empty(k: usize) -> Self {
        OrderRecord {
            k,
            two_k: 2 * k,
            num_vars: None,
            num_rows: None,
            status: None,
            objective: None,
            residuals: None,
            iterations: None,
            extraction_residual: None,
            controller_rank: None,
            realized_cost: None,
            target_hit_time: None,
            terminal_state: None,
            events: Vec::new(),
            error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRecord {
    pub time_scale: f64,
    pub state_offset: Vec<f64>,
    pub state_scale: Vec<f64>,
    pub input_offset: Vec<f64>,
    pub input_scale: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct OracleValues {
    pub t_star: Option<f64>,
    pub switch_time: Option<f64>,
    pub j_star: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Flag {
    /// `p_k` dropped below the previous order's bound.
    Monotonicity { k_prev: usize, k: usize, drop: f64 },
    /// Realized cost below the bound `p_k`.
    Bound { k: usize, objective: f64, realized: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub problem: ProblemFile,
    pub scaling: ScalingRecord,
    pub settings: SolverSettings,
    /// Extraction cutoff relative to the largest eigenvalue.
    pub truncation: f64,
    pub orders: Vec<OrderRecord>,
    pub oracle: Option<OracleValues>,
    pub flags: Vec<Flag>,
    pub assumptions: Vec<String>,
}

impl RunReport {
    pub fn record(&self, k: usize) -> Option<&OrderRecord> {
        self.orders.iter().find(|r| r.k == k)
    }

    /// `k, 2k, status, p_k, residuals, extraction, realized cost, hit time`.
    pub fn convergence_csv(&self) -> String {
        let mut out = String::from(
            "k,two_k,status,objective,primal_residual,dual_residual,gap,extraction_residual,realized_cost,target_hit_time\n",
        );
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.orders {
            let res = r.residuals;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.k,
                r.two_k,
                r.status.map(|s| s.to_string()).unwrap_or_else(|| "error".into()),
                opt(r.objective),
                opt(res.map(|x| x.primal)),
                opt(res.and_then(|x| x.dual)),
                opt(res.and_then(|x| x.gap)),
                opt(r.extraction_residual),
                opt(r.realized_cost),
                opt(r.target_hit_time),
            );
        }
        out
    }
}

/// Everything produced for one order.
#[derive(Debug, Clone)]
pub struct OrderOutcome {
    pub record: OrderRecord,
    pub layout: Option<VariableLayout>,
    pub solution: Option<ConicSolution>,
    pub controller: Option<PolynomialController>,
    pub simulation: Option<SimulationResult>,
}

pub fn solve_order(np: &NormalizedProblem, k: usize, config: &RunConfig) -> OrderOutcome {
    let mut record = OrderRecord::empty(k);
    let outcome = |record: OrderRecord| OrderOutcome {
        record,
        layout: None,
        solution: None,
        controller: None,
        simulation: None,
    };
    let conic = match assemble(np, &RelaxationConfig::new(k)) {
        Ok(c) => c,
        Err(e) => {
            record.error = Some(e.to_string());
            return outcome(record);
        }
    };
    record.num_vars = Some(conic.num_vars);
    record.num_rows = Some(conic.rows.len());
    info!(
        "{} k={k}: {} variables, {} rows, {} blocks",
        np.problem.name,
        conic.num_vars,
        conic.rows.len(),
        conic.blocks.len()
    );
    let solution = match solve(&conic, &config.settings) {
        Ok(s) => s,
        Err(e) => {
            record.error = Some(e.to_string());
            return outcome(record);
        }
    };
    info!(
        "{} k={k}: {} objective {:.9} after {} iterations",
        np.problem.name, solution.status, solution.objective, solution.iterations
    );
    record.status = Some(solution.status);
    record.objective = Some(solution.objective);
    record.residuals = Some(solution.residuals);
    record.iterations = Some(solution.iterations);
    let layout = match relaxation::layout(np, k) {
        Ok(l) => l,
        Err(e) => {
            record.error = Some(e.to_string());
            return outcome(record);
        }
    };
    let mut out = outcome(record);
    out.layout = Some(layout.clone());
    if !solution.status.is_usable() {
        out.solution = Some(solution);
        return out;
    }
    let meta = conic.meta.as_ref().expect("assembled problems carry metadata");
    match extract_controller(&solution.y, &layout, meta, config.truncation) {
        Ok(ctrl) => {
            out.record.extraction_residual =
                Some(ctrl.diagnostics.residuals.iter().cloned().fold(0.0, f64::max));
            out.record.controller_rank = Some(ctrl.diagnostics.rank);
            let opts = SimulationOptions::new(config.sim_step);
            match simulate_with(&np.original, |t, x| saturate(&ctrl, t, x), opts) {
                Ok(sim) => {
                    out.record.realized_cost = Some(sim.cost);
                    out.record.target_hit_time = sim.target_hit_time;
                    out.record.terminal_state = Some(sim.terminal_state.clone());
                    out.record.events = sim.events.clone();
                    out.simulation = Some(sim);
                }
                Err(e) => out.record.error = Some(e.to_string()),
            }
            out.controller = Some(ctrl);
        }
        Err(e) => out.record.error = Some(e.to_string()),
    }
    out.solution = Some(solution);
    out
}

/// Reference values for the builtin benchmarks.
pub fn oracle_values(problem: &OCProblem) -> Option<OracleValues> {
    match problem.name.as_str() {
        "di_mintime" if problem.x0.len() == 2 => {
            let o = oracle_di_mintime([problem.x0[0], problem.x0[1]]);
            Some(OracleValues {
                t_star: Some(o.t_star),
                switch_time: Some(o.switch_time),
                j_star: None,
            })
        }
        "di_lqr" => Some(OracleValues {
            j_star: Some(oracle_di_lqr().j_star),
            ..Default::default()
        }),
        "si_mintime" => Some(OracleValues {
            t_star: Some(problem.x0[0].abs()),
            ..Default::default()
        }),
        _ => None,
    }
}

pub fn flags(records: &[OrderRecord]) -> Vec<Flag> {
    let mut out = Vec::new();
    let mut prev: Option<(usize, f64)> = None;
    for r in records {
        let Some(p) = r.objective.filter(|_| r.status.is_some_and(|s| s.is_usable())) else {
            continue;
        };
        if let Some((kp, pp)) = prev {
            if p < pp - MONOTONE_TOLERANCE {
                out.push(Flag::Monotonicity {
                    k_prev: kp,
                    k: r.k,
                    drop: pp - p,
                });
            }
        }
        if let Some(real) = r.realized_cost {
            if real < p - BOUND_TOLERANCE {
                out.push(Flag::Bound {
                    k: r.k,
                    objective: p,
                    realized: real,
                });
            }
        }
        prev = Some((r.k, p));
    }
    out
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write(path: &Path, text: &str) -> Result<(), PipelineError> {
    fs::write(path, text).map_err(io_err(path))
}

pub struct RunOutput {
    pub report: RunReport,
    pub outcomes: Vec<OrderOutcome>,
}

pub fn run(problem: &OCProblem, config: &RunConfig) -> Result<RunOutput, PipelineError> {
    let diags = problem.validate();
    if !diags.is_empty() {
        let msg: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
        return Err(PipelineError::Invalid(msg.join("; ")));
    }
    if config.orders.is_empty() || config.orders.windows(2).any(|w| w[0] >= w[1]) {
        return Err(PipelineError::Orders);
    }
    let np = normalize_inputs(problem)?;
    let sp = ScaledProblem::from_normalized(&np)?;
    let outcomes = map_ordered(
        config.orders.clone(),
        Execution::with_jobs(config.jobs),
        |k| solve_order(&np, k, config),
    );
    let orders: Vec<OrderRecord> = outcomes.iter().map(|o| o.record.clone()).collect();
    let report = RunReport {
        tool: format!("occsynth {}", env!("CARGO_PKG_VERSION")),
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        problem: ProblemFile::from(problem),
        scaling: ScalingRecord {
            time_scale: sp.time_scale,
            state_offset: sp.state_offset.clone(),
            state_scale: sp.state_scale.clone(),
            input_offset: np.input_map.offset.clone(),
            input_scale: np.input_map.scale.clone(),
        },
        settings: config.settings.clone(),
        truncation: config.truncation,
        flags: flags(&orders),
        orders,
        oracle: oracle_values(problem),
        assumptions: vec![
            "columns of g are assumed nonzero almost everywhere along the optimal trajectory; not verified".into(),
            "controller values outside the input box are clamped before unscaling".into(),
        ],
    };
    if let Some(dir) = &config.out_dir {
        write_outputs(dir, &report, &outcomes)?;
    }
    Ok(RunOutput { report, outcomes })
}

pub fn write_outputs(
    dir: &Path,
    report: &RunReport,
    outcomes: &[OrderOutcome],
) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write(&dir.join("report.json"), &serde_json::to_string_pretty(report)?)?;
    write(&dir.join("convergence.csv"), &report.convergence_csv())?;
    for o in outcomes {
        let k = o.record.k;
        if let Some(sim) = &o.simulation {
            write(&dir.join(format!("trajectory_k{k}.csv")), &sim.trajectory_csv())?;
            write(&dir.join(format!("control_k{k}.csv")), &sim.control_csv())?;
        }
        if let Some(c) = &o.controller {
            write(&dir.join(format!("controller_k{k}.json")), &c.to_json()?)?;
        }
    }
    Ok(())
}

/// Human-readable reference values plus an overlay trajectory CSV.
pub struct OracleOutput {
    pub summary: String,
    pub trajectory_csv: String,
}

pub fn oracle(name: &str) -> Result<OracleOutput, PipelineError> {
    match name {
        "di_mintime" => {
            let mut p = builtin_problem(name)?;
            let o = oracle_di_mintime([p.x0[0], p.x0[1]]);
            p.horizon = o.t_star;
            let opts = SimulationOptions {
                stop_at_target: false,
                ..SimulationOptions::new(1e-3)
            };
            let sim = simulate_with(&p, |t, _| vec![o.input(t)], opts)?;
            let summary = format!(
                "t* = {:.6}\nswitch time = {:.6}\ninput {:+} then {:+}\n",
                o.t_star, o.switch_time, o.first_input, -o.first_input
            );
            Ok(OracleOutput {
                summary,
                trajectory_csv: sim.trajectory_csv(),
            })
        }
        "di_lqr" => {
            let p = builtin_problem(name)?;
            let o = oracle_di_lqr();
            let sim = simulate_with(
                &p,
                |t, x| {
                    let g = o.gain(t);
                    vec![-(g[0] * x[0] + g[1] * x[1])]
                },
                SimulationOptions::new(1e-3),
            )?;
            let mut summary = format!("J* = {:.9}\nrealized J = {:.9}\ngain schedule (t, k1, k2):\n", o.j_star, sim.cost);
            let stride = (o.gains.len() / 10).max(1);
            for (t, g) in o.gains.iter().step_by(stride) {
                let _ = writeln!(summary, "  {t:.3} {:.6} {:.6}", g[0], g[1]);
            }
            Ok(OracleOutput {
                summary,
                trajectory_csv: sim.trajectory_csv(),
            })
        }
        other => Err(PipelineError::UnknownOracle(other.to_string())),
    }
}

impl From<crate::synthesis::SynthesisError> for PipelineError {
    fn from(e: crate::synthesis::SynthesisError) -> Self {
        PipelineError::Invalid(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(k: usize, p: f64, real: Option<f64>) -> OrderRecord {
        OrderRecord {
            status: Some(SolveStatus::Optimal),
            objective: Some(p),
            realized_cost: real,
            ..OrderRecord::empty(k)
        }
    }

    #[test]
    fn flags_detect_anomalies() {
        let ok = [rec(2, 1.0, Some(1.5)), rec(3, 1.2, Some(1.3))];
        assert!(flags(&ok).is_empty());
        let drop = [rec(2, 1.0, None), rec(3, 0.99, None)];
        assert!(matches!(flags(&drop)[0], Flag::Monotonicity { k_prev: 2, k: 3, .. }));
        let bound = [rec(2, 1.0, Some(0.9))];
        assert!(matches!(flags(&bound)[0], Flag::Bound { k: 2, .. }));
    }

    #[test]
    fn orders_must_ascend() {
        let p = builtin_problem("di_lqr").unwrap();
        assert!(matches!(run(&p, &RunConfig::new(vec![])), Err(PipelineError::Orders)));
        assert!(matches!(run(&p, &RunConfig::new(vec![3, 2])), Err(PipelineError::Orders)));
    }

    #[test]
    fn order_one_is_recorded_as_error() {
        let p = builtin_problem("di_lqr").unwrap();
        let out = run(&p, &RunConfig::new(vec![1])).unwrap();
        assert!(out.report.orders[0].error.as_deref().unwrap().contains("minimum"));
    }

    #[test]
    fn unknown_oracle() {
        assert!(matches!(oracle("nope"), Err(PipelineError::UnknownOracle(_))));
        assert!(oracle("di_mintime").unwrap().summary.contains("2.788"));
    }
}

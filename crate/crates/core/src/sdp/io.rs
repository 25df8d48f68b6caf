use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{primal_residual, ConicSolution, Residuals, SolveStatus, SolverSettings};
use crate::conic::ConicProblem;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("schema error: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("solution has {got} entries, problem has {expected} variables")]
    Length { got: usize, expected: usize },
    #[error("solution rejected: primal residual {residual:.3e} exceeds {limit:.3e}")]
    Rejected { residual: f64, limit: f64 },
    #[error("problem is malformed: {0}")]
    Malformed(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    #[value(name = "json")]
    InterchangeJson,
    #[value(name = "sdpa")]
    SdpaSparse,
}

pub fn export(problem: &ConicProblem, format: ExportFormat, path: &Path) -> Result<(), IoError> {
    let text = match format {
        ExportFormat::InterchangeJson => serde_json::to_string(problem)?,
        ExportFormat::SdpaSparse => to_sdpa(problem),
    };
    fs::write(path, text).map_err(io_err(path))
}

pub fn import_problem(path: &Path) -> Result<ConicProblem, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let p: ConicProblem = serde_json::from_str(&text)?;
    p.check().map_err(IoError::Malformed)?;
    Ok(p)
}

/// SDPA sparse text. `y` maps to the free SDPA variables; equality rows enter
/// a diagonal block as the pair `A_r y - b_r >= 0`, `b_r - A_r y >= 0`, and 1×1
/// PSD blocks join the same diagonal block.
pub fn to_sdpa(problem: &ConicProblem) -> String {
    let mut dense = Vec::new();
    let mut scalar = Vec::new();
    for b in &problem.blocks {
        if b.size == 1 {
            scalar.push(b);
        } else {
            dense.push(b);
        }
    }
    let diag_len = 2 * problem.rows.len() + scalar.len();
    let mut sizes: Vec<i64> = dense.iter().map(|b| b.size as i64).collect();
    if diag_len > 0 {
        sizes.push(-(diag_len as i64));
    }

    let mut out = String::new();
    let _ = writeln!(out, "* occsynth export: {} variables", problem.num_vars);
    let _ = writeln!(out, "{}", problem.num_vars);
    let _ = writeln!(out, "{}", sizes.len());
    let _ = writeln!(
        out,
        "{}",
        sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ")
    );
    let _ = writeln!(
        out,
        "{}",
        problem
            .objective
            .iter()
            .map(|c| format!("{c:e}"))
            .collect::<Vec<_>>()
            .join(" ")
    );
    // our blocks read C + Σ y_i F_i ⪰ 0, SDPA reads Σ y_i F_i - F_0 ⪰ 0
    let mut entry = |mat: usize, blk: usize, i: usize, j: usize, v: f64| {
        if v != 0.0 {
            let _ = writeln!(out, "{mat} {blk} {} {} {v:e}", i + 1, j + 1);
        }
    };
    for (bi, b) in dense.iter().enumerate() {
        for e in b.to_entries() {
            entry(0, bi + 1, e.i, e.j, -e.constant);
            for (v, c) in &e.terms {
                entry(v + 1, bi + 1, e.i, e.j, *c);
            }
        }
    }
    if diag_len > 0 {
        let blk = dense.len() + 1;
        for (r, row) in problem.rows.iter().enumerate() {
            let (pos, neg) = (2 * r, 2 * r + 1);
            entry(0, blk, pos, pos, row.rhs);
            entry(0, blk, neg, neg, -row.rhs);
            for (v, c) in &row.terms {
                entry(v + 1, blk, pos, pos, *c);
                entry(v + 1, blk, neg, neg, -c);
            }
        }
        for (si, b) in scalar.iter().enumerate() {
            let d = 2 * problem.rows.len() + si;
            for e in b.to_entries() {
                entry(0, blk, d, d, -e.constant);
                for (v, c) in &e.terms {
                    entry(v + 1, blk, d, d, *c);
                }
            }
        }
    }
    out
}

/// Result schema shared with external solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub status: SolveStatus,
    pub objective: f64,
    pub y: Vec<f64>,
}

pub fn write_solution(solution: &ConicSolution, path: &Path) -> Result<(), IoError> {
    let file = SolutionFile {
        status: solution.status,
        objective: solution.objective,
        y: solution.y.clone(),
    };
    fs::write(path, serde_json::to_string_pretty(&file)?).map_err(io_err(path))
}

pub fn read_solution(path: &Path) -> Result<SolutionFile, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

/// Reads an external result and re-verifies it against `problem`.
pub fn import_solution(
    path: &Path,
    problem: &ConicProblem,
    settings: &SolverSettings,
) -> Result<ConicSolution, IoError> {
    let file = read_solution(path)?;
    if file.y.len() != problem.num_vars {
        return Err(IoError::Length {
            got: file.y.len(),
            expected: problem.num_vars,
        });
    }
    let residual = primal_residual(problem, &file.y);
    let limit = 100.0 * settings.feasibility_tolerance;
    if !(residual <= limit) {
        return Err(IoError::Rejected { residual, limit });
    }
    let objective = problem.objective_value(&file.y);
    let gap = (objective - file.objective).abs() / (1.0 + objective.abs());
    Ok(ConicSolution {
        status: file.status,
        y: file.y,
        objective,
        dual_objective: None,
        multipliers: Vec::new(),
        dual_blocks: Vec::new(),
        residuals: Residuals {
            primal: residual,
            dual: None,
            gap: Some(gap),
        },
        iterations: 0,
    })
}

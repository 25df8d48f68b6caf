//! Dense primal-dual interior-point solver for [`ConicProblem`]s and file
//! exchange with external solvers.

mod io;
mod ipm;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::conic::ConicProblem;
use crate::moments::min_eigenvalue;

pub use io::{
    export, import_problem, import_solution, read_solution, write_solution, ExportFormat, IoError,
    SolutionFile,
};
pub use ipm::{solve, SolveError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub max_iterations: usize,
    pub feasibility_tolerance: f64,
    pub gap_tolerance: f64,
    pub step_fraction: f64,
    /// Norm beyond which a diverging iterate is read as an infeasibility
    /// certificate.
    pub infeasibility_threshold: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            max_iterations: 200,
            feasibility_tolerance: 1e-7,
            gap_tolerance: 1e-7,
            step_fraction: 0.98,
            infeasibility_threshold: 1e10,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.feasibility_tolerance > 0.0 && self.gap_tolerance > 0.0) {
            return Err("tolerances must be positive".into());
        }
        if !(self.step_fraction > 0.0 && self.step_fraction < 1.0) {
            return Err("step fraction must lie in (0, 1)".into());
        }
        if self.max_iterations == 0 {
            return Err("at least one iteration is required".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    NearOptimal,
    PrimalInfeasible,
    DualInfeasible,
    IterationLimit,
}

impl SolveStatus {
    /// Whether the moments can be used downstream.
    pub fn is_usable(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::NearOptimal)
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::NearOptimal => "near_optimal",
            SolveStatus::PrimalInfeasible => "primal_infeasible",
            SolveStatus::DualInfeasible => "dual_infeasible",
            SolveStatus::IterationLimit => "iteration_limit",
        };
        f.write_str(s)
    }
}

/// Relative residuals; `dual` and `gap` are unknown for imported points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub primal: f64,
    pub dual: Option<f64>,
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub y: Vec<f64>,
    pub objective: f64,
    pub dual_objective: Option<f64>,
    /// Multipliers of the stored (scaled) rows.
    pub multipliers: Vec<f64>,
    #[serde(skip)]
    pub dual_blocks: Vec<Mat<f64>>,
    pub residuals: Residuals,
    pub iterations: usize,
}

impl ConicSolution {
    /// Multipliers of the rows before unit-norm scaling.
    pub fn unscaled_multipliers(&self, problem: &ConicProblem) -> Vec<f64> {
        self.multipliers
            .iter()
            .zip(problem.row_scale.iter().chain(std::iter::repeat(&1.0)))
            .map(|(l, s)| l * s)
            .collect()
    }
}

/// Relative equality residual combined with the worst PSD violation of `y`.
pub fn primal_residual(problem: &ConicProblem, y: &[f64]) -> f64 {
    let bnorm = problem.rows.iter().fold(0.0f64, |m, r| m.max(r.rhs.abs()));
    let eq = problem
        .equality_residual(y)
        .iter()
        .fold(0.0f64, |m, r| m.max(r.abs()))
        / (1.0 + bnorm);
    let psd = problem
        .blocks
        .iter()
        .map(|b| (-min_eigenvalue(&b.eval(y, true))).max(0.0))
        .fold(0.0f64, f64::max);
    eq.max(psd)
}

/// Small problems with known optimal values, used as solver references.
pub mod toys {
    use crate::conic::{BlockData, BlockEntry, ConicProblem, HankelBlock, PsdBlock, RowFamily, SparseRow};

    /// minimize x s.t. [[x, 1], [1, x]] ⪰ 0, optimum 1
    pub fn two_by_two() -> ConicProblem {
        let mut p = ConicProblem::new(1, vec![1.0]);
        p.add_block(PsdBlock::sparse(
            "b",
            2,
            0,
            vec![
                BlockEntry { i: 0, j: 0, constant: 0.0, terms: vec![(0, 1.0)] },
                BlockEntry { i: 0, j: 1, constant: 1.0, terms: vec![] },
                BlockEntry { i: 1, j: 1, constant: 0.0, terms: vec![(0, 1.0)] },
            ],
        ));
        p
    }

    /// minimize x s.t. [x - 2] ⪰ 0, optimum 2
    pub fn scalar() -> ConicProblem {
        let mut p = ConicProblem::new(1, vec![1.0]);
        p.add_block(PsdBlock::sparse(
            "b",
            1,
            0,
            vec![BlockEntry { i: 0, j: 0, constant: -2.0, terms: vec![(0, 1.0)] }],
        ));
        p
    }

    /// minimize y2 s.t. y0 = 1, y1 = 1/2, [[y0, y1], [y1, y2]] ⪰ 0, optimum 1/4
    pub fn moment() -> ConicProblem {
        let mut p = ConicProblem::new(3, vec![0.0, 0.0, 1.0]);
        p.add_row(SparseRow::from_terms([(0, 1.0)], 1.0, RowFamily::Other));
        p.add_row(SparseRow::from_terms([(1, 1.0)], 0.5, RowFamily::Other));
        p.add_block(PsdBlock {
            label: "m".into(),
            size: 2,
            group: 0,
            data: BlockData::Hankel(HankelBlock {
                local_len: 3,
                sums: vec![0, 1, 1, 2],
                shifts: vec![(1.0, vec![0, 1, 2])],
            }),
        });
        p
    }
}

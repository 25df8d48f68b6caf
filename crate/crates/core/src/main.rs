use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use occsynth::ocp::normalize_inputs;
use occsynth::pipeline::{self, load_problem, PipelineError, RunConfig};
use occsynth::relaxation::{assemble, RelaxationConfig};
use occsynth::sdp::{export, ExportFormat, SolverSettings};

#[derive(Parser)]
#[command(name = "occsynth", version, about = "Moment relaxations and polynomial controller synthesis for optimal control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a sequence of relaxation orders, extract controllers and simulate them.
    Run {
        /// Builtin name or path to a JSON problem file.
        #[arg(long)]
        problem: String,
        /// Comma-separated relaxation orders k.
        #[arg(long, value_delimiter = ',', required = true)]
        orders: Vec<usize>,
        /// Exit nonzero when the report raises a flag.
        #[arg(long)]
        strict: bool,
        /// Orders solved concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, env = "OCCSYNTH_OUT", default_value = "occsynth-out")]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        max_iterations: usize,
        /// Simulation step.
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        /// Relative eigenvalue cutoff of the generalized inverse used for extraction.
        #[arg(long, default_value_t = pipeline::SOLVED_TRUNCATION)]
        truncation: f64,
    },
    /// Print reference values for a builtin benchmark and write its trajectory.
    Oracle {
        name: String,
        #[arg(long, env = "OCCSYNTH_OUT", default_value = "occsynth-out")]
        out: PathBuf,
    },
    /// Write one relaxation to a file for an external solver.
    Export {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum, default_value = "json")]
        format: ExportFormat,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn execute(command: Command) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match command {
        Command::Run {
            problem,
            orders,
            strict,
            jobs,
            out,
            max_iterations,
            step,
            truncation,
        } => {
            let problem = load_problem(&problem)?;
            let config = RunConfig {
                settings: SolverSettings {
                    max_iterations,
                    ..SolverSettings::default()
                },
                jobs,
                sim_step: step,
                truncation,
                out_dir: Some(out.clone()),
                ..RunConfig::new(orders)
            };
            let result = pipeline::run(&problem, &config)?;
            print!("{}", result.report.convergence_csv());
            for flag in &result.report.flags {
                eprintln!("flag: {}", serde_json::to_string(flag)?);
            }
            println!("wrote {}", out.display());
            if strict && !result.report.flags.is_empty() {
                return Ok(ExitCode::from(3));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { name, out } => {
            let o = match pipeline::oracle(&name) {
                Ok(o) => o,
                Err(e @ PipelineError::UnknownOracle(_)) => {
                    eprintln!("usage error: {e}");
                    return Ok(ExitCode::from(2));
                }
                Err(e) => return Err(e.into()),
            };
            print!("{}", o.summary);
            std::fs::create_dir_all(&out)?;
            let path = out.join(format!("oracle_{name}.csv"));
            std::fs::write(&path, o.trajectory_csv)?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Export {
            problem,
            k,
            format,
            out,
        } => {
            let problem = load_problem(&problem)?;
            let np = normalize_inputs(&problem)?;
            let conic = assemble(&np, &RelaxationConfig::new(k))?;
            export(&conic, format, &out)?;
            println!(
                "wrote {} ({} variables, {} rows, {} blocks)",
                out.display(),
                conic.num_vars,
                conic.rows.len(),
                conic.blocks.len()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

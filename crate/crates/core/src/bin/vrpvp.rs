use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use log::error;

use vrpvp::cost::{apply_precision, fetch_remote_table, load_matrix_csv, matrix_for_instance};
use vrpvp::driver::{compare_modes, run_benchmark};
use vrpvp::model::{convert_chao, parse_instance, serialize_instance};
use vrpvp::svg::render_svg;
use vrpvp::{solve_vrpvp, CostMatrix, Error, Instance, ObjectiveMode, Result, SolveOptions};

#[derive(Parser)]
#[command(name = "vrpvp", version, about = "Max-min vehicle routing with vector profits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Text,
    Json,
}

#[derive(clap::Args)]
struct Tuning {
    /// Columns added per pricing round (default: every violating route)
    #[arg(long)]
    max_columns: Option<usize>,
    /// Maximum number of master solves in column generation
    #[arg(long, default_value_t = 10_000)]
    iter_cap: usize,
    /// Wall-clock limit in seconds; branch and bound returns its incumbent when hit
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

impl Tuning {
    fn options(&self, objective: ObjectiveMode) -> Result<SolveOptions> {
        let time_limit = match self.time_limit {
            Some(t) if !(t > 0.0 && t.is_finite()) => {
                return Err(Error::InvalidArgument("--time-limit must be positive".into()))
            }
            t => t.map(Duration::from_secs_f64),
        };
        Ok(SolveOptions {
            objective,
            max_columns: self.max_columns,
            iteration_cap: self.iter_cap,
            time_limit,
            workers: self.workers.max(1),
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance
    Solve {
        #[arg(long)]
        instance: PathBuf,
        /// CSV travel-cost matrix overriding the instance metric
        #[arg(long, conflicts_with = "table_endpoint")]
        matrix: Option<PathBuf>,
        /// Routing service base URL; travel times come from its table endpoint
        #[arg(long)]
        table_endpoint: Option<String>,
        /// maxmin | stakeholder=K | sum | sum=w1,..,wn
        #[arg(long, default_value = "maxmin")]
        objective: String,
        #[command(flatten)]
        tuning: Tuning,
        #[arg(long, value_enum, default_value = "text")]
        report: ReportFormat,
        /// Write an SVG route map
        #[arg(long)]
        plot: Option<PathBuf>,
        /// Also solve every single-stakeholder and sum objective and print a comparison
        #[arg(long)]
        compare: bool,
    },
    /// Convert a TOP benchmark file into a vector-profit instance
    ConvertTop {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        stakeholders: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Convert and solve every TOP file in a directory
    Benchmark {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        stakeholders: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn load_matrix(inst: &Instance, instance_path: &Path, matrix: Option<&Path>, endpoint: Option<&str>) -> Result<CostMatrix> {
    if let Some(p) = matrix {
        let m = load_matrix_csv(&read(p)?, inst.n_sites() + 1)?;
        return Ok(apply_precision(inst, m));
    }
    if let Some(url) = endpoint {
        let coords: Vec<_> = std::iter::once(inst.depot).chain(inst.sites.iter().map(|s| s.location)).collect();
        return Ok(apply_precision(inst, fetch_remote_table(url, &coords)?));
    }
    matrix_for_instance(inst, instance_path.parent())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Solve { instance, matrix, table_endpoint, objective, tuning, report, plot, compare } => {
            let inst = parse_instance(&read(&instance)?)?;
            let m = load_matrix(&inst, &instance, matrix.as_deref(), table_endpoint.as_deref())?;
            let options = tuning.options(objective.parse()?)?;
            let rep = solve_vrpvp(&inst, &m, &options)?;
            match report {
                ReportFormat::Text => print!("{}", rep.to_text()),
                ReportFormat::Json => println!("{}", rep.to_json()),
            }
            if let Some(p) = plot {
                std::fs::write(&p, render_svg(&inst, &rep))?;
            }
            if compare {
                println!();
                println!("{:<16} {:>10}  {:<30} {:>9} {:>9}", "mode", "objective", "sums", "minimum", "total");
                for row in compare_modes(&inst, &m, &options)? {
                    let sums: Vec<String> = row.sums.iter().map(|v| format!("{v}")).collect();
                    println!(
                        "{:<16} {:>10.3}  {:<30} {:>9} {:>9}",
                        row.mode,
                        row.objective,
                        sums.join(" "),
                        row.minimum,
                        row.total
                    );
                }
            }
            Ok(true)
        }
        Command::ConvertTop { input, stakeholders, seed, output } => {
            let mut inst = convert_chao(&read(&input)?, stakeholders, seed)?;
            if let Some(stem) = input.file_stem() {
                inst.name = stem.to_string_lossy().into_owned();
            }
            std::fs::write(&output, serialize_instance(&inst))?;
            Ok(true)
        }
        Command::Benchmark { dir, stakeholders, seed, out, tuning } => {
            let outcome = run_benchmark(&dir, stakeholders, seed, &tuning.options(ObjectiveMode::MaxMin)?)?;
            std::fs::write(&out, outcome.to_csv())?;
            print!("{}", outcome.to_csv());
            for (name, e) in &outcome.failures {
                error!("{name}: {e}");
                eprintln!("{name}: {e}");
            }
            Ok(outcome.failures.is_empty())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

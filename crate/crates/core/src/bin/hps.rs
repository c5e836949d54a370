use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hps_core::bench::{
    convergence_study, emit, run, scaling_study, OutputFormat, RunConfig, RunReport,
};
use hps_core::hps::DEFAULT_RCOND_MIN;
use hps_core::pde::ProblemKind;

#[derive(Parser)]
#[command(name = "hps", version, about = "Hierarchical spectral solver for 2D elliptic problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem instance and report errors, timings and memory.
    Run(RunArgs),
    /// Pointwise convergence over a refinement sequence.
    Converge(RunArgs),
    /// Fit power laws to pre-computation and solve times.
    Scale(ScaleArgs),
    /// Compare the hierarchical solve with a dense direct solve.
    OracleCheck(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ProblemArg {
    Constant,
    Bump,
    Lshape,
    Convdiff,
    Custom,
}

impl From<ProblemArg> for ProblemKind {
    fn from(p: ProblemArg) -> Self {
        match p {
            ProblemArg::Constant => ProblemKind::Constant,
            ProblemArg::Bump => ProblemKind::Bump,
            ProblemArg::Lshape => ProblemKind::Lshape,
            ProblemArg::Convdiff => ProblemKind::Convdiff,
            ProblemArg::Custom => ProblemKind::Custom,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum, default_value = "constant")]
    problem: ProblemArg,
    /// Chebyshev nodes per leaf side.
    #[arg(long, default_value_t = 21)]
    p: usize,
    /// Leaves per unit length; a comma-separated list for `converge`.
    #[arg(long, value_delimiter = ',', default_value = "4")]
    n: Vec<usize>,
    #[arg(long, conflicts_with = "ppw")]
    kappa: Option<f64>,
    /// Points per wavelength; sets kappa = 2π·n(p−1)/ppw.
    #[arg(long)]
    ppw: Option<f64>,
    /// Convection strength s in −Δu − s∂₂u (convdiff and custom).
    #[arg(long)]
    convection: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    #[arg(long)]
    restrict_rows: bool,
    #[arg(long, default_value_t = DEFAULT_RCOND_MIN)]
    rcond_min: f64,
    #[arg(long)]
    save_operators: Option<PathBuf>,
    #[arg(long)]
    load_operators: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self, n: usize) -> RunConfig {
        RunConfig {
            problem: self.problem.into(),
            p: self.p,
            n,
            kappa: self.kappa,
            ppw: self.ppw,
            convection: self.convection,
            restrict_rows: self.restrict_rows,
            rcond_min: self.rcond_min,
            oracle_check: false,
            save_operators: self.save_operators.clone(),
            load_operators: self.load_operators.clone(),
        }
    }
}

#[derive(Args)]
struct ScaleArgs {
    #[arg(long, default_value_t = 21)]
    p: usize,
    #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 12.0)]
    ppw: f64,
    /// Solves per size; the fastest is reported.
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
}

fn single_runs(args: &RunArgs, oracle: bool) -> ExitCode {
    let mut reports = Vec::new();
    let mut failed = false;
    for &n in &args.n {
        let mut config = args.config(n);
        config.oracle_check = oracle;
        let report = run(&config).unwrap_or_else(|e| {
            eprintln!("hps: n={n}: {e}");
            RunReport::failure(&config, &e)
        });
        failed |= !report.is_ok();
        reports.push(report);
    }
    if let Err(e) = emit(args.out.as_deref(), &reports, args.format.into()) {
        eprintln!("hps: {e}");
        return ExitCode::FAILURE;
    }
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => single_runs(&args, false),
        Command::OracleCheck(args) => single_runs(&args, true),
        Command::Converge(args) => {
            let config = args.config(args.n[0]);
            match convergence_study(&config, &args.n) {
                Ok(rows) => match emit(args.out.as_deref(), &rows, args.format.into()) {
                    Ok(()) => ExitCode::SUCCESS,
                    Err(e) => {
                        eprintln!("hps: {e}");
                        ExitCode::FAILURE
                    }
                },
                Err(e) => {
                    eprintln!("hps: {e}");
                    let _ = emit(args.out.as_deref(), &[RunReport::failure(&config, &e)], args.format.into());
                    ExitCode::FAILURE
                }
            }
        }
        Command::Scale(args) => match scaling_study(args.p, &args.n, args.ppw, args.repeats) {
            Ok(study) => {
                eprintln!(
                    "slope t_inv = {:.3}, slope t_solve = {:.3}",
                    study.slope_t_inv, study.slope_t_solve
                );
                let result = match args.format {
                    FormatArg::Csv => emit(args.out.as_deref(), &study.rows, OutputFormat::Csv),
                    FormatArg::Json => emit(args.out.as_deref(), &[study], OutputFormat::Json),
                };
                match result {
                    Ok(()) => ExitCode::SUCCESS,
                    Err(e) => {
                        eprintln!("hps: {e}");
                        ExitCode::FAILURE
                    }
                }
            }
            Err(e) => {
                eprintln!("hps: {e}");
                ExitCode::FAILURE
            }
        },
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qpssh_cli::{presets, run, CliError, Command, Config, RunContext};

#[derive(Parser)]
#[command(name = "qpssh", version, about = "Phase-diagram numerics for the quasiperiodic SSH chain")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Spectrum and localization diagnostics at one parameter point.
    Spectrum(RunArgs),
    /// Quantum walks: per-instance densities and instance-averaged C and S.
    Walk(RunArgs),
    /// Phase map, mobility-edge maps or intercell-disorder maps over a grid.
    Sweep(RunArgs),
    /// Analytic (and optionally numeric) phase-boundary polylines.
    Boundaries(RunArgs),
    /// Critical-exponent fits.
    Scaling(RunArgs),
    /// Model-equivalence and spectrum-structure checks.
    Check(RunArgs),
    /// List presets, or print one.
    Presets { name: Option<String> },
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration file.
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Shipped configuration by name (see `qpssh presets`).
    #[arg(long)]
    preset: Option<String>,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; overrides `parallelism.jobs`.
    #[arg(long, env = "QPSSH_JOBS")]
    jobs: Option<usize>,
}

fn execute(command: Command, args: RunArgs) -> Result<(), CliError> {
    let mut config = match (&args.config, &args.preset) {
        (Some(path), _) => Config::from_file(path)?.0,
        (None, Some(name)) => presets::load(name)?,
        (None, None) => return Err(CliError::config("need --config or --preset")),
    };
    if let Some(out) = &args.out {
        config.output.dir = out.display().to_string();
    }
    let jobs = args
        .jobs
        .or(config.parallelism.jobs)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        return Err(CliError::config("--jobs: must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Compute(format!("thread pool: {e}")))?;
    let ctx = RunContext { command, out_dir: PathBuf::from(&config.output.dir), config, jobs };
    log::info!("running {} with {jobs} worker(s) into {}", command.name(), ctx.out_dir.display());
    let manifest = pool.install(|| run(&ctx))?;
    log::info!("wrote {} file(s)", manifest.files.len());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Sub::Spectrum(a) => (Command::Spectrum, a),
        Sub::Walk(a) => (Command::Walk, a),
        Sub::Sweep(a) => (Command::Sweep, a),
        Sub::Boundaries(a) => (Command::Boundaries, a),
        Sub::Scaling(a) => (Command::Scaling, a),
        Sub::Check(a) => (Command::Check, a),
        Sub::Presets { name: None } => {
            for n in presets::names() {
                println!("{n}");
            }
            return ExitCode::SUCCESS;
        }
        Sub::Presets { name: Some(n) } => {
            return match presets::text(&n) {
                Ok(t) => {
                    print!("{t}");
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            };
        }
    };
    match execute(command, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spikesurgery::exec::{set_mode, Mode};
use spikesurgery_cli::{execute, replay, resume, CliError, CliResult, Command, Invocation, Manifest, Options, RunConfig};

#[derive(Parser)]
#[command(name = "spikesurgery", version, about = "Hessian spike analysis and spike-directed class rebalancing")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Execution mode for data-parallel kernels.
    #[arg(long, global = true, value_enum, default_value_t = ExecMode::Parallel)]
    exec: ExecMode,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExecMode {
    Sequential,
    Parallel,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set surgery.alpha0=0.05`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Parameter file to start from; the model is trained when omitted.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Report directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the fixture model and write a checkpoint.
    Train(RunArgs),
    /// Top Ritz values and spike labels.
    Spectrum(RunArgs),
    /// Spectral density by stochastic Lanczos quadrature.
    Slq(RunArgs),
    /// Per-class sensitivity matrix of the top spikes.
    Sensitivity(RunArgs),
    /// Effective rank of the sensitivity matrix.
    Rank(RunArgs),
    /// Iterative spike-directed rebalancing.
    Surgery {
        #[command(flatten)]
        run: SurgeryArgs,
    },
    /// Directed walk orthogonal to the spikes.
    Bulkwalk(RunArgs),
    /// Predicted-versus-measured sweep over budgets.
    Linearize(RunArgs),
    /// Spike subspace stability across batch sizes.
    Stability(RunArgs),
    /// Rebalancing baselines against Surgery.
    Baselines(RunArgs),
    /// Run a named experiment: bulkwalk, linearize, stability, baselines, slq-density.
    Experiment {
        name: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Re-run a manifest and compare output digests.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Skip the digest comparison.
        #[arg(long)]
        no_verify: bool,
    },
}

#[derive(Args, Clone)]
struct SurgeryArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Continue the interrupted run saved in `--out`.
    #[arg(long, conflicts_with_all = ["config", "set", "checkpoint", "deflated"])]
    resume: bool,
    /// Sequential deflated phases instead of plain Surgery.
    #[arg(long)]
    deflated: bool,
    #[arg(long, requires = "deflated")]
    phases: Option<usize>,
    /// Stop after this many completed iterations (exit code 4).
    #[arg(long)]
    stop_after: Option<usize>,
}

fn load_config(path: Option<&PathBuf>, set: &[String]) -> CliResult<RunConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?,
        None => String::new(),
    };
    RunConfig::parse(&text, set)
}

fn invocation(command: Command, run: &RunArgs, options: Options) -> CliResult<Invocation> {
    Ok(Invocation {
        command,
        options,
        config: load_config(run.config.as_ref(), &run.set)?,
        checkpoint: run.checkpoint.clone(),
        out: run.out.clone(),
        stop_after: None,
        resume: false,
    })
}

fn dispatch(cmd: Cmd) -> CliResult<Manifest> {
    let simple = |c: Command, run: &RunArgs| execute(&invocation(c, run, Options::default())?);
    match cmd {
        Cmd::Train(r) => simple(Command::Train, &r),
        Cmd::Spectrum(r) => simple(Command::Spectrum, &r),
        Cmd::Slq(r) => simple(Command::Slq, &r),
        Cmd::Sensitivity(r) => simple(Command::Sensitivity, &r),
        Cmd::Rank(r) => simple(Command::Rank, &r),
        Cmd::Bulkwalk(r) => simple(Command::Bulkwalk, &r),
        Cmd::Linearize(r) => simple(Command::Linearize, &r),
        Cmd::Stability(r) => simple(Command::Stability, &r),
        Cmd::Baselines(r) => simple(Command::Baselines, &r),
        Cmd::Experiment { name, run } => simple(Command::experiment(&name)?, &run),
        Cmd::Surgery { run } => {
            if run.resume {
                return resume(&run.out, run.stop_after);
            }
            let args = RunArgs {
                config: run.config,
                set: run.set,
                checkpoint: run.checkpoint,
                out: run.out,
            };
            let options = Options {
                deflated: run.deflated,
                phases: run.phases,
            };
            let mut inv = invocation(Command::Surgery, &args, options)?;
            inv.stop_after = run.stop_after;
            execute(&inv)
        }
        Cmd::Replay { manifest, out, no_verify } => replay(&manifest, &out, !no_verify),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    set_mode(match cli.exec {
        ExecMode::Sequential => Mode::Sequential,
        ExecMode::Parallel => Mode::Parallel,
    });
    match dispatch(cli.command) {
        Ok(m) => {
            println!("{} complete: {} files", m.command.name(), m.outputs.len());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

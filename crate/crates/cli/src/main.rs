use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use evoesn::experiment::{self, ExperimentConfig, Results};
use evoesn::timeseries::{
    generate_lorenz, generate_mackey_glass, load_sunspots, Integrator, LorenzParams, MgsParams, Splits,
};

#[derive(Parser)]
#[command(name = "evoesn", version, about = "Echo state networks with DCT-encoded evolved reservoirs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a benchmark series as an `index,value` file.
    Generate(GenerateArgs),
    /// Train and test canonical ESNs over the configured repeat seeds.
    Baseline(RunArgs),
    /// Evolve the reservoir with the genetic search.
    Evolve(EvolveArgs),
    /// Evaluate every cell of the `[grid]` section.
    Grid(RunArgs),
    /// Score a saved model on the configured test protocol.
    Evaluate(EvaluateArgs),
    /// Continue an interrupted evolution from its checkpoint.
    Resume(ResumeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Mgs,
    Lorenz,
    Sunspot,
}

#[derive(Clone, Copy, ValueEnum)]
enum IntegratorArg {
    Euler,
    Rk4,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(value_enum)]
    task: Task,
    /// Number of samples (mgs, lorenz).
    #[arg(long)]
    len: Option<usize>,
    /// Mackey-Glass delay.
    #[arg(long, default_value_t = 17.0)]
    tau: f64,
    #[arg(long, value_enum, default_value_t = IntegratorArg::Euler)]
    integrator: IntegratorArg,
    /// Apply tanh(y - 1) squashing to Mackey-Glass.
    #[arg(long)]
    squash: bool,
    /// SIDC monthly file (sunspot).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment configuration.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration: mgs, lorenz or sunspot.
    #[arg(long)]
    preset: Option<String>,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(p), _) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
            (None, Some(name)) => ExperimentConfig::preset(name)?,
            (None, None) => bail!("either --config or --preset is required"),
        };
        if let Some(s) = self.seed {
            cfg.run.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvolveArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
    /// Checkpoint and exit after this many generations.
    #[arg(long)]
    stop_after: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Model file written by `evolve`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ResumeArgs {
    /// Output directory of the interrupted `evolve`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    stop_after: Option<usize>,
}

fn print_summary(results: &Results) {
    for (params, s) in &results.summaries {
        let cell = if params.is_empty() {
            String::new()
        } else {
            let p: Vec<String> = params.iter().map(|(k, v)| format!("{k}={v}")).collect();
            format!("[{}] ", p.join(" "))
        };
        match (s.mean, s.std) {
            (Some(m), Some(sd)) => println!(
                "{cell}{}: mean {m:.6e} std {sd:.3e} over {} runs ({} diverged)",
                s.metric, s.count, s.diverged
            ),
            _ => println!("{cell}{}: all {} runs diverged", s.metric, s.diverged),
        }
    }
}

fn generate(args: &GenerateArgs) -> Result<()> {
    let series = match args.task {
        Task::Mgs => {
            let len = args.len.context("--len is required for mgs")?;
            let params = MgsParams {
                tau: args.tau,
                integrator: match args.integrator {
                    IntegratorArg::Euler => Integrator::Euler,
                    IntegratorArg::Rk4 => Integrator::Rk4,
                },
                squash: args.squash,
                ..MgsParams::default()
            };
            let mut s = generate_mackey_glass(&params, len, args.seed)?;
            let _ = s.set_splits(Splits::new(1000, 3000, 0, 2084));
            s
        }
        Task::Lorenz => {
            let len = args.len.context("--len is required for lorenz")?;
            let mut s = generate_lorenz(&LorenzParams::default(), len)?;
            let _ = s.set_splits(Splits::new(1000, 6000, 1000, 600));
            s
        }
        Task::Sunspot => {
            let input = args.input.as_deref().context("--input is required for sunspot")?;
            load_sunspots(input)?
        }
    };
    series.export_two_column(&args.out)?;
    let sp = series.splits();
    println!(
        "wrote {} points to {} (splits washout {} train {} validate {} test {})",
        series.len(),
        args.out.display(),
        sp.washout,
        sp.train,
        sp.validate,
        sp.test
    );
    Ok(())
}

fn finish(out: &Path, cfg: &ExperimentConfig, results: &Results) -> Result<()> {
    experiment::write_results(out, cfg, results)?;
    experiment::validate_output_dir(out)?;
    print_summary(results);
    Ok(())
}

fn report_evolution(out: &Path, results: Option<Results>) -> Result<()> {
    match results {
        Some(r) => {
            experiment::validate_output_dir(out)?;
            print_summary(&r);
        }
        None => println!(
            "stopped early; checkpoint written to {}",
            out.join(experiment::CHECKPOINT_FILE).display()
        ),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    experiment::configure_workers()?;
    match cli.command {
        Command::Generate(args) => generate(&args),
        Command::Baseline(args) => {
            let cfg = args.config.load()?;
            let results = experiment::baseline(&cfg)?;
            finish(&args.out, &cfg, &results)
        }
        Command::Grid(args) => {
            let cfg = args.config.load()?;
            let results = experiment::grid(&cfg)?;
            finish(&args.out, &cfg, &results)
        }
        Command::Evaluate(args) => {
            let cfg = args.config.load()?;
            let results = experiment::evaluate(&cfg, &args.model)?;
            finish(&args.out, &cfg, &results)
        }
        Command::Evolve(args) => {
            let cfg = args.config.load()?;
            let results = experiment::evolve(&cfg, &args.out, args.stop_after)?;
            report_evolution(&args.out, results)
        }
        Command::Resume(args) => {
            let results = experiment::resume(&args.out, args.stop_after)?;
            report_evolution(&args.out, results)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

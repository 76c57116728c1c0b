use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use trb_cli::bench::{load_data, train_model, RunContext};
use trb_cli::report::{markdown, summary};
use trb_cli::{emit_report, run_benchmark, BenchConfig, BenchmarkReport, CliError, Format};
use trb_core::{augment_dataset, write_scenes};

#[derive(Parser, Debug)]
#[command(name = "trb", version, about = "Trajectory prediction robustness benchmark")]
struct Cli {
    /// TOML run configuration; built-in defaults otherwise.
    #[arg(long, global = true, env = "TRB_CONFIG")]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true, env = "TRB_SEED")]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "TRB_JOBS")]
    jobs: Option<usize>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true, env = "TRB_OUT")]
    out: Option<PathBuf>,
    /// Rendering printed to stdout.
    #[arg(long, global = true, value_enum, default_value = "summary", env = "TRB_FORMAT")]
    format: Format,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
    /// Reuse checkpoints already in the output directory.
    #[arg(long, global = true, env = "TRB_RESUME")]
    resume: bool,
    /// Per-epoch progress on stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the train and test scene files.
    Generate,
    /// Train every learned model in the roster and save checkpoints.
    Train,
    /// Score saved checkpoints (and the baseline) without training.
    Eval,
    /// Train, evaluate and report in one run.
    Bench,
    /// Render an existing report.json.
    Report,
}

fn effective_config(cli: &Cli) -> Result<BenchConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => BenchConfig::load(p)?,
        None => BenchConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_report(report: &BenchmarkReport, format: Format) {
    match format {
        Format::Md => print!("{}", markdown(report)),
        Format::Summary => print!("{}", summary(report)),
        Format::Csv => print!("{}", trb_cli::report::results_csv(report)),
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = effective_config(cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Config("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let ctx = RunContext {
        out_dir: cfg.out_dir.clone(),
        resume: cli.resume,
        verbose: cli.verbose,
        train_missing: true,
    };

    match cli.command {
        Command::Generate => {
            let (train, test) = load_data(&cfg)?;
            std::fs::create_dir_all(&ctx.out_dir).map_err(|e| CliError::io("generate", e))?;
            for (name, scenes) in [("train.jsonl", &train), ("test.jsonl", &test)] {
                let path = ctx.out_dir.join(name);
                write_scenes(scenes, &path).map_err(|e| CliError::from_core("generate", e))?;
                println!("{} scenes -> {}", scenes.len(), path.display());
            }
        }
        Command::Train => {
            let (train, _) = load_data(&cfg)?;
            for spec in cfg.models.iter().filter(|m| m.trainable()) {
                let model = train_model(&cfg, spec, trb_cli::report::ORIGINAL, &train, None, &ctx)?;
                println!("trained {} on original", spec.name);
                if cfg.retrain {
                    for p in &cfg.perturbations {
                        let aug = augment_dataset(&train, p).map_err(|e| CliError::from_core("augment", e))?;
                        train_model(&cfg, spec, &p.label(), &aug, Some(&model), &ctx)?;
                        println!("trained {} on {}", spec.name, p.label());
                    }
                }
            }
        }
        Command::Eval | Command::Bench => {
            let ctx = match cli.command {
                Command::Eval => RunContext {
                    resume: true,
                    train_missing: false,
                    ..ctx
                },
                _ => ctx,
            };
            let outcome = run_benchmark(&cfg, &ctx)?;
            print_report(&outcome.report, cli.format);
        }
        Command::Report => {
            let report = BenchmarkReport::load(&ctx.out_dir.join("report.json"))?;
            emit_report(&report, &ctx.out_dir, cli.format)?;
            print_report(&report, cli.format);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("trb: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

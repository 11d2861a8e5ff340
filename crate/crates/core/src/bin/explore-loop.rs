use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use explore_loop::harness::{emit_report, parse_noise, run_benchmark, BenchmarkSpec, ReportFormat};
use explore_loop::llm::{BackendConfig, FixtureConfig, FixtureMode};
use explore_loop::orchestrator::{read_trace, replay_episode, write_trace, BackendChoice, EpisodeConfig, Mode, DEFAULT_MAX_STEPS};

#[derive(Parser)]
#[command(name = "explore-loop", version, about = "Closed-loop tabletop manipulation benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded episodes and print a success-rate report.
    Run(RunArgs),
    /// Re-execute a recorded trace and check it step by step.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Symbolic,
    External,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Table,
    Csv,
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, value_enum, default_value = "symbolic")]
    backend: BackendKind,
    /// Chat-completion endpoint for the external backend.
    #[arg(long, default_value = "https://api.openai.com/v1/chat/completions")]
    endpoint: String,
    /// Model name; required unless replaying a fixture.
    #[arg(long)]
    model: Option<String>,
    /// Environment variable holding the API token.
    #[arg(long, default_value = "OPENAI_API_KEY")]
    auth_env: String,
    /// Serve model replies from this fixture file instead of the network.
    #[arg(long)]
    fixture: Option<PathBuf>,
    /// Append live exchanges to --fixture rather than replaying it.
    #[arg(long, requires = "fixture")]
    record: bool,
}

impl BackendArgs {
    fn choice(&self) -> Result<BackendChoice, String> {
        if matches!(self.backend, BackendKind::Symbolic) {
            return Ok(BackendChoice::Symbolic);
        }
        let mut cfg = match (&self.fixture, self.record) {
            (Some(path), false) => BackendConfig::replay(path),
            (fixture, _) => {
                let model = self.model.clone().ok_or("--model is required for a live external backend")?;
                let mut cfg = BackendConfig::new(&self.endpoint, model);
                cfg.fixture = fixture.as_ref().map(|path| FixtureConfig {
                    mode: FixtureMode::Record,
                    path: path.clone(),
                });
                cfg
            }
        };
        if let Some(model) = &self.model {
            cfg.model = model.clone();
        }
        cfg.auth_env = self.auth_env.clone();
        Ok(BackendChoice::External(cfg))
    }
}

#[derive(Args)]
struct RunArgs {
    /// Scene files; each `taskN.scene.json` needs a sibling `taskN.goal.json`.
    #[arg(long = "task", required = true, num_args = 1..)]
    tasks: Vec<PathBuf>,
    #[arg(long, default_value = "full")]
    mode: Mode,
    #[arg(long, default_value_t = 10)]
    episodes: u32,
    /// Episode i runs with seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Failure probabilities, e.g. grasp=0.5,open=0.5. Defaults to the scene's own.
    #[arg(long)]
    noise: Option<String>,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    max_steps: u32,
    #[command(flatten)]
    backend: BackendArgs,
    /// Directory that receives one JSONL trace per episode.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Also write the report to this file.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    format: FormatArg,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    task: PathBuf,
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, default_value = "full")]
    mode: Mode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    noise: Option<String>,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    max_steps: u32,
    #[command(flatten)]
    backend: BackendArgs,
}

fn run(args: RunArgs) -> Result<(), String> {
    let mut spec = BenchmarkSpec::new(args.tasks, args.mode, args.episodes);
    spec.base_seed = args.seed;
    spec.max_steps = args.max_steps;
    spec.backend = args.backend.choice()?;
    spec.noise = args.noise.as_deref().map(parse_noise).transpose().map_err(|e| e.to_string())?;
    if spec.max_steps == 0 {
        return Err("--max-steps must be at least 1".into());
    }
    let batch = run_benchmark(&spec).map_err(|e| e.to_string())?;

    if let Some(dir) = &args.trace {
        std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        for (task, results) in &batch.episodes {
            for (i, r) in results.iter().enumerate() {
                let seed = spec.base_seed + i as u64;
                let path = dir.join(format!("{task}_{}_seed{seed}.jsonl", spec.mode));
                let file = File::create(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                write_trace(&r.trace, BufWriter::new(file)).map_err(|e| format!("{}: {e}", path.display()))?;
            }
        }
    }

    let format = match args.format {
        FormatArg::Table => ReportFormat::Table,
        FormatArg::Csv => ReportFormat::Csv,
    };
    let text = emit_report(&batch.report, format);
    print!("{text}");
    if let Some(path) = &args.report {
        std::fs::write(path, &text).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(())
}

fn replay(args: ReplayArgs) -> Result<(), String> {
    let cfg = EpisodeConfig {
        seed: args.seed,
        max_steps: args.max_steps,
        mode: args.mode,
        noise: args.noise.as_deref().map(parse_noise).transpose().map_err(|e| e.to_string())?,
        backend: args.backend.choice()?,
        ..EpisodeConfig::for_scene(&args.task)
    };
    let file = File::open(&args.trace).map_err(|e| format!("{}: {e}", args.trace.display()))?;
    let trace = read_trace(BufReader::new(file)).map_err(|e| format!("{}: {e}", args.trace.display()))?;
    replay_episode(&cfg, &trace).map_err(|e| e.to_string())?;
    println!("replayed {} steps: identical", trace.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Replay(args) => replay(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rlab::cli::replay::ReplayConfig;
use rlab::cli::{
    apply_config_file, load_schedule, replay_session, run_analyze, run_export, run_simulate, serve, AnalyzeConfig,
    BackendChoice, CliError, ExportConfig, ServeConfig, SimulateConfig, Template, EXIT_RUNTIME,
};
use rlab::domain::Language;

#[derive(Parser)]
#[command(name = "rlab", version, about = "Reappraisal experiment platform")]
struct Cli {
    /// JSON file merged over the flag values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run live sessions over WebSocket.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8765")]
        bind: String,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 10)]
        trials_per_cell: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "EN")]
        language: String,
        /// Phase durations as JSON.
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[arg(long)]
        remote: Option<String>,
        #[arg(long)]
        max_sessions: Option<usize>,
    },
    /// Generate synthetic sessions.
    Simulate {
        #[arg(long, default_value_t = 20)]
        subjects: usize,
        #[arg(long, default_value_t = 10)]
        trials_per_cell: usize,
        /// Participant model JSON.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Built-in model when no file is given: `paper-like` or `null`.
        #[arg(long, default_value = "paper-like")]
        template: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Statistics over a directory of sessions.
    Analyze {
        #[arg(long)]
        sessions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        family_size: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        emit_plot_data: bool,
    },
    /// Recompute derived fields of one session and report differences.
    Replay {
        session: PathBuf,
        #[arg(long)]
        artifacts_root: Option<PathBuf>,
    },
    /// Flatten sessions to CSV.
    Export {
        #[arg(long)]
        sessions: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_language(s: &str) -> Result<Language, CliError> {
    serde_json::from_value(serde_json::Value::String(s.to_uppercase()))
        .map_err(|_| CliError::Config(format!("unknown language {s:?}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = cli.config.as_deref();
    match cli.command {
        Command::Serve {
            bind,
            data_dir,
            manifest,
            trials_per_cell,
            seed,
            language,
            schedule,
            remote,
            max_sessions,
        } => {
            let mut c = ServeConfig::new(bind, data_dir, manifest);
            c.trials_per_cell = trials_per_cell;
            c.seed = seed;
            c.language = parse_language(&language)?;
            c.schedule = load_schedule(schedule.as_deref())?;
            c.max_sessions = max_sessions;
            if let Some(base) = remote {
                c.backend.backend = BackendChoice::Remote;
                c.backend.remote_base = Some(base);
            }
            serve(&apply_config_file(c, cfg)?)
        }
        Command::Simulate {
            subjects,
            trials_per_cell,
            model,
            template,
            seed,
            out,
        } => {
            let mut c = SimulateConfig::new(subjects, seed, out);
            c.trials_per_cell = trials_per_cell;
            c.model = model;
            c.template = match template.as_str() {
                "paper-like" => Template::PaperLike,
                "null" => Template::Null,
                other => return Err(CliError::Config(format!("unknown template {other:?}"))),
            };
            let paths = run_simulate(&apply_config_file(c, cfg)?)?;
            println!("wrote {} sessions", paths.len());
            Ok(())
        }
        Command::Analyze {
            sessions,
            out,
            family_size,
            alpha,
            emit_plot_data,
        } => {
            let mut c = AnalyzeConfig {
                sessions,
                out,
                family_size,
                emit_plot_data,
                analysis: Default::default(),
            };
            if let Some(a) = alpha {
                c.analysis.alpha = a;
            }
            let report = run_analyze(&apply_config_file(c, cfg)?)?;
            println!("analyzed {} subjects", report.n_subjects_complete);
            Ok(())
        }
        Command::Replay { session, artifacts_root } => {
            let mut c = ReplayConfig::new(session);
            c.artifacts_root = artifacts_root;
            let report = replay_session(&apply_config_file(c, cfg)?)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            if report.is_clean() {
                Ok(())
            } else {
                Err(CliError::Runtime(format!("{} mismatches", report.mismatches.len())))
            }
        }
        Command::Export { sessions, out } => {
            let rows = run_export(&apply_config_file(ExportConfig { sessions, out }, cfg)?)?;
            println!("wrote {rows} rows");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(EXIT_RUNTIME as u8))
        }
    }
}

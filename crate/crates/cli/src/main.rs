use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hip_cli::commands::{self, Component};
use hip_cli::config::PathsConfig;
use hip_cli::{CliError, Config};
use hip_core::pipeline::PlannerMode;

#[derive(Parser)]
#[command(name = "hip", version, about = "Hierarchical planning on the paint-block world")]
struct Cli {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `master_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Evaluation mode (full, no-task-refine, no-visual-refine, no-refine, flat or all).
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Root directory for data/, checkpoints/ and reports/.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Per-key override such as `guidance.omega=2.0`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out the expert and write the three datasets.
    GenData,
    /// Train one component (grounding, denoiser, feasibility, inverse) or all.
    Train {
        #[arg(default_value = "all")]
        component: String,
    },
    /// Evaluate the configured modes and write eval.csv.
    Eval,
    /// Sweep the feasibility guidance scale and write sweep.csv.
    Sweep,
    /// Run the oracle suites; exits with 3 if any fails.
    OracleCheck,
    /// Print a checkpoint header.
    Inspect { path: PathBuf },
}

fn effective_config(cli: &Cli) -> Result<Config, CliError> {
    let mut overrides = cli.set.clone();
    if let Some(s) = cli.seed {
        overrides.push(format!("master_seed={s}"));
    }
    if let Some(m) = &cli.mode {
        let modes: Vec<PlannerMode> = if m == "all" {
            PlannerMode::ALL.to_vec()
        } else {
            vec![m.parse().map_err(CliError::Validation)?]
        };
        let list: Vec<String> = modes.iter().map(|m| format!("\"{m}\"")).collect();
        overrides.push(format!("eval.modes=[{}]", list.join(",")));
    }
    if let Some(root) = &cli.out {
        let p = PathsConfig::under(root);
        for (k, v) in [("data_dir", p.data_dir), ("checkpoint_dir", p.checkpoint_dir), ("output_dir", p.output_dir)] {
            overrides.push(format!("paths.{k}={:?}", v.display().to_string()));
        }
    }
    Config::load(cli.config.as_deref(), &overrides)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Command::Inspect { path } = &cli.command {
        print!("{}", commands::inspect(path)?);
        return Ok(());
    }
    let cfg = effective_config(cli)?;
    match &cli.command {
        Command::GenData => {
            let c = commands::gen_data(&cfg)?;
            println!("classify {}\nvideo {}\ninv {}", c.classify, c.video, c.inv);
        }
        Command::Train { component } => {
            for p in commands::train(&cfg, &Component::parse_list(component)?)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Eval => {
            let (reports, path) = commands::eval(&cfg)?;
            for r in &reports {
                let se = r.stderr.map(|s| format!(" ± {s:.3}")).unwrap_or_default();
                println!("{}: {:.3}{se}", r.mode, r.completion_rate);
            }
            println!("wrote {}", path.display());
        }
        Command::Sweep => println!("wrote {}", commands::sweep(&cfg)?.display()),
        Command::OracleCheck => {
            let outcomes = commands::oracle_check(&cfg)?;
            print!("{}", commands::format_outcomes(&outcomes));
            let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name.as_str()).collect();
            if !failed.is_empty() {
                return Err(CliError::OracleFailed(failed.join(", ")));
            }
        }
        Command::Inspect { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};
use dppo_core::{checks, config, trainer, EnvId, Error};

mod plot;

const EXIT_USAGE: u8 = 1;
const EXIT_VERIFY: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "dppo", version, about = "PPO with variance-limiting sample dropout")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write a run directory.
    Train {
        /// Flat `key = value` config file; omitted keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "run")]
        out: PathBuf,
        /// `key=value` applied after the config file; repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Greedy evaluation of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// cartpole, chain:<n> or randmdp:<states>x<actions>:<seed>
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the oracle sweeps; exits 2 on any violation.
    Verify {
        #[arg(long, default_value_t = 1000)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Render returns.svg and variance.svg from a metrics.csv.
    Plot {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Usage(_) | Error::Config(_) | Error::Input(_) => EXIT_USAGE,
        Error::Verification(_) => EXIT_VERIFY,
        _ => EXIT_RUNTIME,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train {
            config,
            seed,
            out,
            mut overrides,
        } => {
            if let Some(s) = seed {
                overrides.push(format!("seed={s}"));
            }
            let cfg = match config {
                Some(path) => config::parse_config(&path, &overrides)?,
                None => config::parse_config_str("", &overrides)?,
            };
            if cfg.env_id.is_none() {
                return Err(Error::Usage(format!(
                    "no env_id given; set it in the config or with --set env_id=<id>\n\n{}",
                    Cli::command().render_usage()
                )));
            }
            let summary = trainer::train(&cfg, &out)?;
            println!(
                "{} updates, {} steps, {} episodes, best rolling mean {}",
                summary.updates,
                summary.global_steps,
                summary.episodes,
                summary.best_rolling_mean.map_or("n/a".to_string(), |m| format!("{m:.2}"))
            );
            println!("run directory: {}", out.display());
        }
        Command::Eval {
            checkpoint,
            env,
            episodes,
            seed,
        } => {
            let env_id: EnvId = env.parse()?;
            let result = trainer::evaluate(&checkpoint, env_id, episodes, seed)?;
            for (i, r) in result.returns.iter().enumerate() {
                println!("episode {i}: {r}");
            }
            println!("mean return: {}", result.mean);
        }
        Command::Verify { instances, seed } => {
            if instances == 0 {
                return Err(Error::Usage("--instances must be >= 1".into()));
            }
            for summary in checks::run_all(instances, seed)? {
                println!("ok  {summary}");
            }
        }
        Command::Plot { metrics, out } => {
            plot::plot_metrics(&metrics, &out)?;
            println!("wrote {} and {}", out.join("returns.svg").display(), out.join("variance.svg").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("DPPO_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

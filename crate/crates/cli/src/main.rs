use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sbm_cli::config::{preset_names, preset_text, Loaded};
use sbm_cli::fit::FitArgs;
use sbm_cli::{fit, sample, sweep, theory_check, CliError, WORKERS_ENV};

#[derive(Parser)]
#[command(
    name = "sbm",
    version,
    about = "Blockmodel clustering: sample, fit, sweep, theory checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bundled preset name (see `sbm presets`).
    #[arg(long)]
    preset: Option<String>,
}

impl Source {
    fn load(&self) -> Result<Loaded, CliError> {
        Loaded::resolve(self.config.as_deref(), self.preset.as_deref())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample a graph from the [model] section.
    Sample {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Spectral initialization followed by pseudo-likelihood fits.
    Fit {
        /// Edge list (`n=<N>` header, 1-based pairs).
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        k: usize,
        /// True labels; adds misclustering to the summaries.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Fit the regularized model.
        #[arg(long)]
        regularized: bool,
        /// Fit the unrestricted model.
        #[arg(long)]
        plain: bool,
        #[arg(long)]
        dump_embedding: bool,
        /// Laplacian regularizer; average degree when absent.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Replicated misclustering sweep over the configured axis.
    Sweep {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the configured replicate count.
        #[arg(long)]
        replicates: Option<usize>,
        /// Run only these cell indices (0-based, comma separated).
        #[arg(long, value_delimiter = ',')]
        cells: Option<Vec<usize>>,
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
    },
    /// Randomized check of the population-level inequalities.
    TheoryCheck {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// List bundled presets, or print one.
    Presets { name: Option<String> },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Sample { source, out_dir } => sample::run(&source.load()?, &out_dir),
        Command::Fit {
            graph,
            k,
            truth,
            regularized,
            plain,
            dump_embedding,
            tau,
            seed,
            out_dir,
        } => fit::run(&FitArgs {
            graph,
            k,
            truth,
            regularized,
            plain,
            dump_embedding,
            tau,
            seed,
            out_dir,
        }),
        Command::Sweep {
            source,
            out,
            replicates,
            cells,
            workers,
        } => {
            let loaded = source.load()?;
            let rows = sweep::run(&loaded, replicates, cells.as_deref(), workers)?;
            sweep::write_csv(&out, &loaded, &rows)?;
            for r in &rows {
                println!("{}", r.csv());
            }
            Ok(())
        }
        Command::TheoryCheck {
            source,
            out,
            instances,
            workers,
            inject_fault,
        } => {
            let loaded = if source.config.is_none() && source.preset.is_none() {
                Loaded::from_preset("theory")?
            } else {
                source.load()?
            };
            let mut cfg = loaded.config.theory.clone().unwrap_or_default();
            if let Some(i) = instances {
                cfg.instances = i;
            }
            let reports = theory_check::run(loaded.config.run.seed, &cfg, workers, inject_fault)?;
            theory_check::write_csv(&out, &loaded, &reports)?;
            match theory_check::first_failure(&reports) {
                Some(msg) => Err(CliError::Assertion(msg)),
                None => {
                    println!("{} instances passed", reports.len());
                    Ok(())
                }
            }
        }
        Command::Presets { name: None } => {
            for n in preset_names() {
                println!("{n}");
            }
            Ok(())
        }
        Command::Presets { name: Some(n) } => {
            let text =
                preset_text(&n).ok_or_else(|| CliError::Usage(format!("unknown preset `{n}`")))?;
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

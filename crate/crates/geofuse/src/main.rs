use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use geofuse::error::{CliError, EXIT_OK, EXIT_USAGE};
use geofuse::pipeline::{cmd_convert, cmd_energy, cmd_run, cmd_synth, RunOptions, REPORT_FILE};
use geofuse_core::dataset::SyntheticSpec;

#[derive(Parser)]
#[command(name = "geofuse", version, about = "Spectral + coordinate land-cover classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a `row,col,label,b0,...` CSV into cube and label files.
    Convert {
        csv: PathBuf,
        cube: PathBuf,
        labels: PathBuf,
    },
    /// Split, train, evaluate and render as described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Train only the spectral branch.
        #[arg(long)]
        baseline_only: bool,
        /// Overrides the config output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Compare the dense CRF energy of the dual-branch and baseline maps.
    Energy {
        #[arg(long)]
        config: PathBuf,
        /// Dual-branch checkpoint; defaults to the run output.
        #[arg(long)]
        dual: Option<PathBuf>,
        /// Baseline checkpoint; defaults to the run output.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Window as `row,col,height,width`; overrides the config.
        #[arg(long, value_parser = parse_crop)]
        crop: Option<[usize; 4]>,
        /// Directory holding the run output, when checkpoints are not given.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Write a synthetic scene and a default config for it.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Preset::CoordinateSeparable)]
        preset: Preset,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 30)]
        bands: usize,
        #[arg(long, default_value_t = 6)]
        classes: usize,
        /// Overrides the preset's noise level.
        #[arg(long)]
        noise: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Separable,
    CoordinateSeparable,
}

fn parse_crop(s: &str) -> Result<[usize; 4], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    parts.try_into().map_err(|_| "expected row,col,height,width".to_string())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Convert { csv, cube, labels } => {
            cmd_convert(&csv, &cube, &labels)?;
        }
        Command::Run {
            config,
            seed,
            baseline_only,
            out_dir,
        } => {
            let opts = RunOptions {
                seed,
                baseline_only,
                out_dir,
            };
            let outcome = cmd_run(&config, &opts)?;
            println!("{}", outcome.out_dir.join(REPORT_FILE).display());
        }
        Command::Energy {
            config,
            dual,
            baseline,
            crop,
            out_dir,
        } => {
            let run_dir = match out_dir {
                Some(d) => d,
                None => geofuse::config::ExperimentConfig::load(&config)?.out_dir,
            };
            let dual = dual.unwrap_or_else(|| run_dir.join("dual_branch.ckpt"));
            let baseline = baseline.unwrap_or_else(|| run_dir.join("baseline.ckpt"));
            cmd_energy(&config, &dual, &baseline, crop)?;
        }
        Command::Synth {
            out_dir,
            seed,
            preset,
            height,
            width,
            bands,
            classes,
            noise,
        } => {
            let mut spec = match preset {
                Preset::Separable => SyntheticSpec::separable(height, width, bands, classes),
                Preset::CoordinateSeparable => SyntheticSpec::coordinate_separable(height, width, bands, classes),
            };
            if let Some(n) = noise {
                spec.noise = n;
            }
            let path = cmd_synth(&out_dir, &spec, seed)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { EXIT_OK as u8 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

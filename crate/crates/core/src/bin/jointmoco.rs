use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use jointmoco::config::{load_config, ReconConfig, SimConfig};
use jointmoco::pipeline::{self, ReconMode, ReconOptions};
use jointmoco::selftest::{run_selftest, SelftestOptions};
use jointmoco::{Error, RngSeed};

const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_CHECK: u8 = 4;

#[derive(Parser)]
#[command(name = "jointmoco", version, about = "Joint image, motion and coil-map reconstruction for multi-shot MRI")]
struct Cli {
    /// Run single-threaded for bit-reproducible output.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate ground truth and motion-corrupted measurements into a run directory.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        force: bool,
    },
    /// Reconstruct a simulated run.
    Recon {
        #[arg(long)]
        run: PathBuf,
        /// Sampler and prior config; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "joint")]
        mode: ReconMode,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        force: bool,
        #[arg(long)]
        trace_every: Option<usize>,
    },
    /// Score every reconstruction of a run and write metrics and profiles.
    Eval {
        #[arg(long)]
        run: PathBuf,
    },
    /// Adjoint, gridding and gradient checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Simulate { config, out, seed, force } => {
            let mut cfg: SimConfig = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = RngSeed(s);
            }
            pipeline::simulate(&cfg, &out, force)?;
            println!("wrote {}", out.display());
        }
        Command::Recon {
            run,
            config,
            mode,
            seed,
            force,
            trace_every,
        } => {
            let cfg: ReconConfig = match config {
                Some(p) => load_config(&p)?,
                None => ReconConfig::default(),
            };
            let opts = ReconOptions {
                seed: seed.map(RngSeed),
                force,
                trace_every,
            };
            let r = pipeline::recon(&run, &cfg, mode, &opts)?;
            println!("wrote {} ({:.1} s)", r.dir.display(), r.seconds);
        }
        Command::Eval { run } => {
            let rows = pipeline::eval(&run)?;
            println!("{}", pipeline::METRICS_HEADER);
            for r in rows {
                println!("{}", r.to_csv());
            }
        }
        Command::Selftest { seed } => {
            let report = run_selftest(&SelftestOptions {
                seed: RngSeed(seed),
                fault: None,
            })?;
            print!("{}", report.render());
            if !report.passed() {
                return Ok(EXIT_CHECK);
            }
        }
    }
    Ok(0)
}

fn threads(deterministic: bool) -> Result<Option<usize>, Error> {
    if deterministic {
        return Ok(Some(1));
    }
    match std::env::var("JSMOCO_THREADS") {
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("JSMOCO_THREADS must be a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = threads(cli.deterministic).and_then(|n| {
        if let Some(n) = n {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        run(cli)
    });
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Divergence(_) => EXIT_DIVERGED,
                Error::Io { .. } | Error::Format { .. } | Error::Unsupported { .. } => 1,
                _ => EXIT_CONFIG,
            })
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ringloc::config::PipelineConfig;
use ringloc::manifest::Manifest;
use ringloc::pipeline;
use ringloc::{Error, Result};

#[derive(Parser)]
#[command(name = "ringloc", version, about = "Lidar place recognition and global localization")]
struct Cli {
    /// TOML pipeline configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed for every stochastic stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Drive a trajectory through a synthetic world and write scans plus a manifest.
    Simulate {
        #[arg(long)]
        world: Option<PathBuf>,
        #[arg(long)]
        waypoints: PathBuf,
    },
    /// Train the siamese network on one or more sessions.
    Train {
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Build a prior map from a manifest.
    BuildMap {
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Exhaustive place-recognition evaluation of a session.
    Evaluate {
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Map to match against for the localization-probability curve.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Match single scans against a map.
    Recognize {
        #[arg(required = true)]
        scans: Vec<PathBuf>,
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Global localization of a scan stream in a map.
    Localize {
        manifest: PathBuf,
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn pick(flag: Option<PathBuf>, configured: &Option<PathBuf>, fallback: PathBuf) -> PathBuf {
    flag.or_else(|| configured.clone()).unwrap_or(fallback)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli.out.clone().or_else(|| cfg.paths.out.clone()).unwrap_or_else(|| PathBuf::from("."));
    let checkpoint = |flag| pick(flag, &cfg.paths.checkpoint, out.join("checkpoint.rlnet"));
    let map = |flag| pick(flag, &cfg.paths.map, out.join("map.llmap"));

    match cli.command {
        Command::Simulate { world, waypoints } => {
            let world = world
                .or_else(|| cfg.paths.world.clone())
                .ok_or_else(|| Error::Config("simulate needs --world or paths.world".into()))?;
            let m = pipeline::cmd_simulate(&cfg, &world, &waypoints, &out)?;
            println!("wrote {} scans to {}", m.len(), out.display());
        }
        Command::Train { manifests, checkpoint: ck } => {
            let manifests = manifests.iter().map(|p| Manifest::load(p)).collect::<Result<Vec<_>>>()?;
            let ck = checkpoint(ck);
            let outcome = pipeline::cmd_train(&cfg, &manifests, &ck, &out.join("training_log.csv"))?;
            if let Some(last) = outcome.history.last() {
                println!("final mean loss {:.6}", last.mean_loss);
            }
            println!("wrote {}", ck.display());
        }
        Command::BuildMap { manifest, checkpoint: ck, map: m } => {
            let path = map(m);
            let built = pipeline::cmd_build_map(&cfg, &Manifest::load(&manifest)?, &checkpoint(ck), &path)?;
            println!("wrote {} frames to {}", built.len(), path.display());
        }
        Command::Evaluate { manifest, checkpoint: ck, reference } => {
            let report = pipeline::cmd_evaluate(&cfg, &Manifest::load(&manifest)?, &checkpoint(ck), reference.as_deref(), &out)?;
            println!("descriptor,p,f1_max,tau_star");
            for (name, p, f1, tau) in &report.f1_table {
                println!("{name},{p},{f1:.4},{tau:.4}");
            }
        }
        Command::Recognize { scans, map: m, checkpoint: ck } => {
            let matches = pipeline::cmd_recognize(&cfg, &map(m), &checkpoint(ck), &scans, &out.join("recognize.csv"))?;
            let accepted = matches.iter().filter(|m| m.accepted).count();
            println!("{accepted}/{} scans matched", matches.len());
        }
        Command::Localize { manifest, map: m, checkpoint: ck } => {
            let records = pipeline::cmd_localize(&cfg, &map(m), &checkpoint(ck), &Manifest::load(&manifest)?, &out)?;
            match records.iter().position(|r| r.mcl.estimate.converged) {
                Some(k) => println!("converged at step {k} of {}", records.len()),
                None => println!("did not converge in {} steps", records.len()),
            }
        }
    }
    Ok(())
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


//! `lanepilot` subcommands.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use lanepilot_core::dataset::{generate_synthetic, ingest_logs, split_80_20, Dataset, SynthConfig};
use lanepilot_core::eval::{replay, replay_hash, run_episode, EpisodeConfig, EvalMode, ReplayCheck, RunLog};
use lanepilot_core::nn::{save_model, train, NetConfig, Network, TrainConfig, TrainingMeta};
use lanepilot_core::sim::Scenario;

use crate::models::{frame_size, load_model, policy_for_log};
use crate::server::{default_data_dir, serve, ServeConfig};
use crate::session::{SessionMode, SessionRequest};

#[derive(Debug, Parser)]
#[command(name = "lanepilot", version, about = "Lane-keeping CNN, simulator and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Network profile: `tiny` (32x64) or `full` (66x200).
    #[arg(long, default_value = "tiny")]
    pub profile: String,
    /// Built-in scenario name or scenario JSON file.
    #[arg(long, default_value = "campus")]
    pub scenario: String,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Common {
    fn out(&self) -> anyhow::Result<&Path> {
        self.out.as_deref().context("--out is required")
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with the scripted expert.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Expert ticks to record; each yields 9 frames with the default
        /// augmentation.
        #[arg(long, default_value_t = 500)]
        frames: usize,
    },
    /// Train a steering network. Writes `model.bin` and `loss.csv` to `--out`.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory. Without it a synthetic set is generated.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Expert ticks for the generated set.
        #[arg(long, default_value_t = 500)]
        frames: usize,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        lr: Option<f32>,
    },
    /// Closed-loop evaluation with the safety oracle. Prints the report;
    /// with `--out`, also writes `run.jsonl`, `report.json` and
    /// `autonomy.csv`.
    Eval {
        #[command(flatten)]
        common: Common,
        /// `expert`, `init:<profile>:<seed>` or a model file.
        #[arg(long)]
        model: String,
        /// Simulated seconds.
        #[arg(long, default_value_t = 300.0)]
        duration: f64,
    },
    /// Re-run a logged episode and compare digests. Exits 0 on a match.
    /// Scenario and seed come from the log; `--out` saves the replayed log.
    Replay {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        verify: PathBuf,
        /// Use this model instead of the one recorded in the log.
        #[arg(long)]
        model: Option<String>,
    },
    /// Build a dataset from `images.csv` + `steering.csv` recordings.
    Ingest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 50)]
        max_skew_ms: u64,
    },
    /// HTTP and WebSocket service for the teleop UI.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Defaults to `--out`, then `$LANEPILOT_DATA_DIR`, then
        /// `./lanepilot-data`.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Start in autonomous evaluation of this model instead of teleop.
        #[arg(long)]
        model: Option<String>,
        #[arg(long, default_value_t = 300.0)]
        duration: f64,
        /// Simulated seconds per wall-clock second.
        #[arg(long, default_value_t = 1.0)]
        speedup: f64,
    },
}

/// Runs a command; the value is the process exit code.
pub fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::GenData { common, frames } => {
            let out = common.out()?;
            let data = synth(&common, frames)?;
            data.write_dir(out)?;
            println!("wrote {} samples to {}", data.len(), out.display());
        }
        Command::Train {
            common,
            data,
            frames,
            epochs,
            batch,
            lr,
        } => cmd_train(&common, data.as_deref(), frames, epochs, batch, lr)?,
        Command::Eval {
            common,
            model,
            duration,
        } => cmd_eval(&common, &model, duration)?,
        Command::Replay {
            common,
            verify,
            model,
        } => return cmd_replay(&verify, model.as_deref(), common.out.as_deref()),
        Command::Ingest {
            common,
            input,
            max_skew_ms,
        } => {
            let out = common.out()?;
            let (data, dropped) = ingest_logs(&input, max_skew_ms * 1000)?;
            data.write_dir(out)?;
            println!("paired {} samples ({dropped} dropped) into {}", data.len(), out.display());
        }
        Command::Serve {
            common,
            addr,
            data_dir,
            model,
            duration,
            speedup,
        } => {
            let session = SessionRequest {
                mode: if model.is_some() {
                    SessionMode::AutonomousEval
                } else {
                    SessionMode::TeleopRecord
                },
                scenario: common.scenario.clone(),
                model,
                profile: common.profile.clone(),
                seed: common.seed,
                duration_s: duration,
            };
            let cfg = ServeConfig {
                addr,
                data_dir: data_dir.or(common.out).unwrap_or_else(default_data_dir),
                session,
                speedup,
            };
            cmd_serve(cfg)?;
        }
    }
    Ok(0)
}

fn synth(common: &Common, frames: usize) -> anyhow::Result<Dataset> {
    let scenario = Scenario::resolve(&common.scenario)?;
    let (h, w) = frame_size(&common.profile)?;
    Ok(generate_synthetic(&scenario, &SynthConfig::new(frames, common.seed, h, w))?)
}

fn cmd_train(
    common: &Common,
    data: Option<&Path>,
    frames: usize,
    epochs: Option<usize>,
    batch: Option<usize>,
    lr: Option<f32>,
) -> anyhow::Result<()> {
    let out = common.out()?;
    let dataset = match data {
        Some(dir) => Dataset::load_dir(dir).with_context(|| format!("dataset {}", dir.display()))?,
        None => synth(common, frames)?,
    };
    let net_cfg = NetConfig::from_profile(&common.profile, common.seed)?;
    let want = (net_cfg.input_height, net_cfg.input_width);
    let got = (dataset.manifest.height, dataset.manifest.width);
    if want != got {
        bail!("dataset frames are {got:?}, profile `{}` needs {want:?}", common.profile);
    }
    let samples = dataset.to_samples();
    let (train_idx, val_idx) = split_80_20(samples.len(), common.seed)?;
    let train_set: Vec<_> = train_idx.iter().map(|&i| samples[i].clone()).collect();
    let val_set: Vec<_> = val_idx.iter().map(|&i| samples[i].clone()).collect();

    let mut cfg = TrainConfig::for_profile(&common.profile, common.seed);
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    if let Some(b) = batch {
        cfg.batch_size = b;
    }
    if let Some(l) = lr {
        cfg.learning_rate = l;
    }
    log::info!(
        "training on {} samples, validating on {} ({} epochs, batch {}, lr {})",
        train_set.len(),
        val_set.len(),
        cfg.epochs,
        cfg.batch_size,
        cfg.learning_rate
    );
    let (net, curve) = train(Network::init(&net_cfg)?, &train_set, &val_set, &cfg)?;
    std::fs::create_dir_all(out)?;
    let meta = TrainingMeta {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        train_samples: train_set.len(),
        val_samples: val_set.len(),
        final_val_mse: curve.last().map(|e| e.val_mse),
        train_seed: cfg.seed,
    };
    save_model(&net, Some(&meta), &out.join("model.bin"))?;
    curve.write_csv(&out.join("loss.csv"))?;
    if let (Some(a), Some(b)) = (curve.initial(), curve.last()) {
        println!("val mse {:.6} -> {:.6}", a.val_mse, b.val_mse);
    }
    println!("wrote {}", out.join("model.bin").display());
    Ok(())
}

fn cmd_eval(common: &Common, model: &str, duration: f64) -> anyhow::Result<()> {
    let scenario = Scenario::resolve(&common.scenario)?;
    let loaded = load_model(model, Some(&default_data_dir()), &common.profile)?;
    let cfg = EpisodeConfig::new(duration, common.seed, EvalMode::Oracle);
    let log = run_episode(&scenario, loaded.policy.as_ref(), loaded.model, cfg)?;
    let report = serde_json::to_string_pretty(&log.summary.report)?;
    println!("{report}");
    if let Some(dir) = common.out.as_deref() {
        std::fs::create_dir_all(dir)?;
        log.save(&dir.join("run.jsonl"))?;
        std::fs::write(dir.join("report.json"), &report)?;
        std::fs::write(dir.join("autonomy.csv"), log.autonomy_csv())?;
    }
    Ok(())
}

fn cmd_replay(path: &Path, model: Option<&str>, out: Option<&Path>) -> anyhow::Result<i32> {
    let log = RunLog::load(path).with_context(|| format!("run log {}", path.display()))?;
    let loaded = policy_for_log(&log.summary.model, model, Some(&default_data_dir()))?;
    let rerun = replay(&log, loaded.policy.as_ref())?;
    let check = ReplayCheck {
        recorded: replay_hash(&log),
        replayed: replay_hash(&rerun),
    };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        rerun.save(&dir.join("replay.jsonl"))?;
    }
    if check.matches() {
        println!("replay matches: {}", check.recorded);
        Ok(0)
    } else {
        println!("replay MISMATCH: recorded {} replayed {}", check.recorded, check.replayed);
        Ok(2)
    }
}

fn cmd_serve(cfg: ServeConfig) -> anyhow::Result<()> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let handle = serve(cfg).await?;
        println!("listening on http://{}", handle.addr);
        tokio::signal::ctrl_c().await?;
        log::info!("shutting down");
        handle.shutdown().await;
        Ok(())
    })
}

//! The simulation-loop owner. One session is live at a time; it is either a
//! human teleop session that can record training pairs, or an evaluation of
//! a model that a human can take over.

use std::path::{Path, PathBuf};

use anyhow::Context;
use base64::Engine;
use lanepilot_core::avoidance::ModeTag;
use lanepilot_core::dataset::{Dataset, DatasetManifest, Provenance, SamplePair};
use lanepilot_core::eval::{
    Driver, Episode, EpisodeConfig, EvalMode, HumanEvent, RunLog,
};
use lanepilot_core::sim::{
    render_camera, sense_zones, steering_to_omega, ActuatorCommand, CameraFrame, Scenario, World,
};
use serde::{Deserialize, Serialize};

use crate::models::{frame_size, load_model, LoadedModel};
use crate::wire::{FramePayload, ObstacleView, Telemetry, WireMessage};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    #[default]
    TeleopRecord,
    AutonomousEval,
}

/// Body of `POST /api/session` and the `serve` defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionRequest {
    pub mode: SessionMode,
    /// Built-in scenario name or scenario file.
    pub scenario: String,
    /// Required for eval sessions: `expert`, `init:<profile>:<seed>` or a
    /// model file.
    pub model: Option<String>,
    pub profile: String,
    pub seed: u64,
    /// Eval sessions end after this much simulated time.
    pub duration_s: f64,
}

impl Default for SessionRequest {
    fn default() -> Self {
        Self {
            mode: SessionMode::TeleopRecord,
            scenario: "campus".into(),
            model: None,
            profile: "tiny".into(),
            seed: 0,
            duration_s: 300.0,
        }
    }
}

struct Recorder {
    samples: Vec<SamplePair>,
    frames: Vec<CameraFrame>,
}

struct Teleop {
    world: World,
    /// Held until the next control message.
    steering: f64,
    throttle: f64,
    recorder: Option<Recorder>,
}

struct Eval {
    episode: Option<Episode>,
    model: LoadedModel,
    events: Vec<HumanEvent>,
    run_id: Option<String>,
}

enum Kind {
    Teleop(Box<Teleop>),
    Eval(Box<Eval>),
}

pub struct Session {
    request: SessionRequest,
    scenario: Scenario,
    frame_size: (usize, usize),
    data_dir: PathBuf,
    kind: Kind,
    tick: u64,
}

/// What one tick produced, before per-client fan-out.
pub struct TickOutput {
    pub telemetry: Telemetry,
    pub frame: FramePayload,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub mode: SessionMode,
    pub scenario: String,
    pub model: Option<String>,
    pub tick: u64,
    pub time: f64,
    pub finished: bool,
    pub autonomy_percent: Option<f64>,
    pub interventions: usize,
    pub recording: bool,
    /// Id of the last saved run (eval) or dataset (teleop).
    pub last_saved: Option<String>,
}

/// Next free `<prefix>-NNNN` id under `dir`.
fn next_id(dir: &Path, prefix: &str) -> String {
    let max = std::fs::read_dir(dir)
        .into_iter()
        .flatten()
        .filter_map(Result::ok)
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            let rest = name.strip_prefix(prefix)?.strip_prefix('-')?;
            rest.get(..4)?.parse::<u32>().ok()
        })
        .max()
        .unwrap_or(0);
    format!("{prefix}-{:04}", max + 1)
}

/// Saves a finished run as `runs/<id>.jsonl` and `runs/<id>.report.json`.
pub fn save_run(data_dir: &Path, log: &RunLog) -> anyhow::Result<String> {
    let dir = data_dir.join("runs");
    std::fs::create_dir_all(&dir)?;
    let id = next_id(&dir, "run");
    log.save(&dir.join(format!("{id}.jsonl")))?;
    let report = serde_json::to_string_pretty(&log.summary.report)?;
    std::fs::write(dir.join(format!("{id}.report.json")), report)?;
    Ok(id)
}

impl Session {
    pub fn start(request: SessionRequest, data_dir: &Path) -> anyhow::Result<Self> {
        let scenario = Scenario::resolve(&request.scenario)
            .with_context(|| format!("scenario `{}`", request.scenario))?;
        let frame_size = frame_size(&request.profile)?;
        let kind = match request.mode {
            SessionMode::TeleopRecord => Kind::Teleop(Box::new(Teleop {
                world: scenario.build()?,
                steering: 0.0,
                throttle: 0.0,
                recorder: None,
            })),
            SessionMode::AutonomousEval => {
                let spec = request.model.as_deref().context("eval sessions need a model")?;
                let model = load_model(spec, Some(data_dir), &request.profile)?;
                let cfg = EpisodeConfig::new(request.duration_s, request.seed, EvalMode::Human);
                let episode = Episode::new(&scenario, model.model.clone(), cfg)?;
                Kind::Eval(Box::new(Eval {
                    episode: Some(episode),
                    model,
                    events: Vec::new(),
                    run_id: None,
                }))
            }
        };
        Ok(Self {
            request,
            scenario,
            frame_size,
            data_dir: data_dir.to_path_buf(),
            kind,
            tick: 0,
        })
    }

    pub fn mode(&self) -> SessionMode {
        self.request.mode
    }

    /// Index of the next tick to run.
    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn is_finished(&self) -> bool {
        match &self.kind {
            Kind::Teleop(_) => false,
            Kind::Eval(e) => e.episode.as_ref().is_none_or(Episode::is_finished),
        }
    }

    /// Applies a message from the client holding control authority. Returns
    /// a reply to send back to that client, if any.
    pub fn apply(&mut self, msg: &WireMessage) -> Result<Option<WireMessage>, String> {
        msg.validate()?;
        match (&mut self.kind, msg) {
            (Kind::Teleop(t), WireMessage::Control { steering, throttle, .. }) => {
                t.steering = *steering;
                t.throttle = *throttle;
                Ok(None)
            }
            (Kind::Teleop(t), WireMessage::RecordBegin { .. }) => {
                if t.recorder.is_some() {
                    return Err("already recording".into());
                }
                t.recorder = Some(Recorder {
                    samples: Vec::new(),
                    frames: Vec::new(),
                });
                Ok(None)
            }
            (Kind::Teleop(_), WireMessage::RecordEnd { .. }) => {
                let id = self.finish_recording()?.ok_or("not recording")?;
                Ok(Some(WireMessage::RecordEnd {
                    tick: Some(self.tick.saturating_sub(1)),
                    dataset: Some(id),
                }))
            }
            (Kind::Teleop(_), WireMessage::TakeoverBegin { .. } | WireMessage::TakeoverEnd { .. }) => {
                Err("takeover is only available in eval sessions".into())
            }
            (Kind::Eval(e), WireMessage::Control { steering, throttle, .. }) => {
                e.events.push(HumanEvent::Control {
                    steering: *steering,
                    throttle: *throttle,
                });
                Ok(None)
            }
            (Kind::Eval(e), WireMessage::TakeoverBegin { .. }) => {
                e.events.push(HumanEvent::TakeoverBegin);
                Ok(None)
            }
            (Kind::Eval(e), WireMessage::TakeoverEnd { .. }) => {
                e.events.push(HumanEvent::TakeoverEnd);
                Ok(None)
            }
            (Kind::Eval(_), WireMessage::RecordBegin { .. } | WireMessage::RecordEnd { .. }) => {
                Err("recording is only available in teleop sessions".into())
            }
            (_, other) => Err(format!("unexpected client message {:?}", kind_name(other))),
        }
    }

    /// Writes the current recording to `datasets/<id>/`.
    fn finish_recording(&mut self) -> Result<Option<String>, String> {
        let Kind::Teleop(t) = &mut self.kind else {
            return Ok(None);
        };
        let Some(rec) = t.recorder.take() else {
            return Ok(None);
        };
        if rec.samples.is_empty() {
            return Err("recording is empty".into());
        }
        let (height, width) = self.frame_size;
        let dataset = Dataset {
            manifest: DatasetManifest {
                height,
                width,
                count: rec.samples.len(),
                provenance: Provenance::Teleop,
                seed: None,
                scenario: Some(self.scenario.name.clone()),
            },
            samples: rec.samples,
            frames: rec.frames,
        };
        let dir = self.data_dir.join("datasets");
        std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        let id = next_id(&dir, "teleop");
        dataset.write_dir(&dir.join(&id)).map_err(|e| e.to_string())?;
        log::info!("saved {} teleop pairs as {id}", dataset.samples.len());
        Ok(Some(id))
    }

    /// Closes the session: saves an eval run or an open recording. Returns
    /// the saved id.
    pub fn close(&mut self) -> anyhow::Result<Option<String>> {
        match &mut self.kind {
            Kind::Teleop(_) => self.finish_recording().map_err(anyhow::Error::msg),
            Kind::Eval(e) => {
                if let Some(id) = &e.run_id {
                    return Ok(Some(id.clone()));
                }
                let Some(ep) = e.episode.take() else {
                    return Ok(None);
                };
                if ep.ticks().is_empty() {
                    return Ok(None);
                }
                let log = ep.finish()?;
                let id = save_run(&self.data_dir, &log)?;
                log::info!("saved run {id}: autonomy {:.2}%", log.summary.report.autonomy_percent);
                e.run_id = Some(id.clone());
                Ok(Some(id))
            }
        }
    }

    /// Runs one 10 Hz control tick. `None` once an eval episode has ended.
    pub fn step(&mut self) -> anyhow::Result<Option<TickOutput>> {
        let (h, w) = self.frame_size;
        let tick = self.tick;
        let out = match &mut self.kind {
            Kind::Teleop(t) => {
                let world = &mut t.world;
                let frame = render_camera(&world.ego.pose, &world.track, &world.obstacles, &world.config, h, w);
                let period = world.config.tick_period();
                if let Some(rec) = &mut t.recorder {
                    rec.samples.push(SamplePair {
                        timestamp_us: (tick as f64 * period * 1e6).round() as u64,
                        frame_file: format!("frames/{:06}.pgm", rec.samples.len()),
                        steering_rad: t.steering,
                        speed_mps: world.ego.speed,
                    });
                    rec.frames.push(frame.clone());
                }
                let cfg = &world.config;
                let command = ActuatorCommand {
                    omega: steering_to_omega(t.steering, world.ego.speed, cfg.wheelbase, cfg.omega_max),
                    target_speed: t.throttle * cfg.v_max,
                    steering: t.steering,
                };
                let zones = sense_zones(&world.ego.pose, &world.obstacles, cfg, world.time);
                let lane = self.scenario.ego.lane;
                let telemetry = Telemetry {
                    tick,
                    time: tick as f64 * period,
                    session: SessionMode::TeleopRecord,
                    scenario: self.scenario.name.clone(),
                    pose: world.ego.pose,
                    speed: world.ego.speed,
                    lane,
                    cte: world.track.cross_track_error(&world.ego.pose, lane).ok(),
                    zones,
                    mode: ModeTag::CnnFollow,
                    driver: Driver::Human,
                    command,
                    obstacles: obstacle_views(world),
                    autonomy_percent: None,
                    interventions: 0,
                    recording: t.recorder.is_some(),
                    recorded_samples: t.recorder.as_ref().map_or(0, |r| r.samples.len()),
                    collisions: world.collisions,
                    authority: false,
                };
                world.set_command(command);
                for _ in 0..world.config.steps_per_tick() {
                    world.step();
                }
                TickOutput {
                    telemetry,
                    frame: frame_payload(tick, &frame),
                }
            }
            Kind::Eval(e) => {
                let Some(ep) = e.episode.as_mut() else {
                    return Ok(None);
                };
                if ep.is_finished() {
                    return Ok(None);
                }
                let events = std::mem::take(&mut e.events);
                let rec = match ep.step(e.model.policy.as_ref(), &events) {
                    Ok(r) => r.clone(),
                    Err(lanepilot_core::eval::EvalError::Finished) => return Ok(None),
                    Err(err) => return Err(err.into()),
                };
                let world = ep.world();
                let frame = render_camera(&rec.pose, &world.track, &world.obstacles, &world.config, h, w);
                let telemetry = Telemetry {
                    tick,
                    time: rec.time,
                    session: SessionMode::AutonomousEval,
                    scenario: self.scenario.name.clone(),
                    pose: rec.pose,
                    speed: rec.speed,
                    lane: rec.lane,
                    cte: rec.cte,
                    zones: rec.zones,
                    mode: rec.mode_after,
                    driver: rec.driver,
                    command: rec.command,
                    obstacles: obstacle_views(world),
                    autonomy_percent: Some(ep.autonomy()),
                    interventions: ep.interventions().len(),
                    recording: false,
                    recorded_samples: 0,
                    collisions: world.collisions,
                    authority: false,
                };
                TickOutput {
                    telemetry,
                    frame: frame_payload(tick, &frame),
                }
            }
        };
        self.tick += 1;
        Ok(Some(out))
    }

    pub fn status(&self) -> SessionStatus {
        let period = 0.1;
        let (autonomy_percent, interventions, recording, last_saved) = match &self.kind {
            Kind::Teleop(t) => (None, 0, t.recorder.is_some(), None),
            Kind::Eval(e) => match &e.episode {
                Some(ep) => (Some(ep.autonomy()), ep.interventions().len(), false, e.run_id.clone()),
                None => (None, 0, false, e.run_id.clone()),
            },
        };
        SessionStatus {
            mode: self.request.mode,
            scenario: self.scenario.name.clone(),
            model: self.request.model.clone(),
            tick: self.tick,
            time: self.tick as f64 * period,
            finished: self.is_finished(),
            autonomy_percent,
            interventions,
            recording,
            last_saved,
        }
    }
}

fn kind_name(msg: &WireMessage) -> &'static str {
    match msg {
        WireMessage::Telemetry(_) => "telemetry",
        WireMessage::Frame(_) => "frame",
        WireMessage::Control { .. } => "control",
        WireMessage::TakeoverBegin { .. } => "takeover_begin",
        WireMessage::TakeoverEnd { .. } => "takeover_end",
        WireMessage::RecordBegin { .. } => "record_begin",
        WireMessage::RecordEnd { .. } => "record_end",
        WireMessage::Error { .. } => "error",
    }
}

fn obstacle_views(world: &World) -> Vec<ObstacleView> {
    world
        .obstacles
        .iter()
        .map(|o| ObstacleView {
            x: o.pose.x,
            y: o.pose.y,
            radius: o.radius,
        })
        .collect()
}

fn frame_payload(tick: u64, frame: &CameraFrame) -> FramePayload {
    FramePayload {
        tick,
        width: frame.width,
        height: frame.height,
        pgm: base64::engine::general_purpose::STANDARD.encode(frame.to_pgm()),
    }
}

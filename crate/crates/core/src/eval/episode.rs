use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::avoidance::{lane_context, Controller, ModeTag, SteeringPolicy};
use crate::eval::runlog::{fnv1a64, ModelRef, RunLog, RunSummary};
use crate::eval::{
    compute_autonomy, AutonomyReport, EvalError, InterventionRecord, InterventionSource,
    SafetyOracle, INTERVENTION_SECONDS,
};
use crate::sim::{
    steering_to_omega, ActuatorCommand, Pose, Scenario, SimError, TrackRef, Vec2, World,
    ZoneReadings,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// The safety oracle intervenes.
    Oracle,
    /// Interventions come from takeover events.
    Human,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HumanEvent {
    /// Held until the next control event. `throttle` in [0, 1] scales
    /// `v_max`.
    Control {
        steering: f64,
        throttle: f64,
    },
    TakeoverBegin,
    TakeoverEnd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Driver {
    /// CNN plus avoidance.
    Auto,
    Oracle,
    Human,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub duration_s: f64,
    pub seed: u64,
    pub mode: EvalMode,
    /// Max lateral (m) and heading (rad) offset of the seeded start pose.
    pub start_jitter: (f64, f64),
    #[serde(default)]
    pub oracle: SafetyOracle,
}

impl EpisodeConfig {
    pub fn new(duration_s: f64, seed: u64, mode: EvalMode) -> Self {
        Self {
            duration_s,
            seed,
            mode,
            start_jitter: (0.05, 0.02),
            oracle: SafetyOracle::default(),
        }
    }
}

/// The state the decision was taken on and what was sent to the vehicle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub time: f64,
    pub pose: Pose,
    pub speed: f64,
    pub zones: ZoneReadings,
    pub lane: u8,
    /// Relative to `lane`; absent beyond the ends of an open track.
    pub cte: Option<f64>,
    pub mode_before: ModeTag,
    pub mode_after: ModeTag,
    pub driver: Driver,
    pub cnn_steer: Option<f64>,
    pub command: ActuatorCommand,
    pub frame_hash: String,
}

struct Takeover {
    source: InterventionSource,
    /// Remaining ticks for the oracle; humans end with an event.
    ticks_left: Option<u64>,
    record: usize,
}

/// A closed-loop run advanced one 10 Hz tick at a time. Owns the world.
pub struct Episode {
    scenario: Scenario,
    model: ModelRef,
    cfg: EpisodeConfig,
    world: World,
    controller: Controller,
    takeover: Option<Takeover>,
    human: ActuatorCommand,
    collided: bool,
    distance: f64,
    tick: u64,
    ticks: Vec<TickRecord>,
    interventions: Vec<InterventionRecord>,
    end_reason: Option<String>,
}

impl Episode {
    pub fn new(
        scenario: &Scenario,
        model: ModelRef,
        cfg: EpisodeConfig,
    ) -> Result<Self, EvalError> {
        if !(cfg.duration_s > 0.0 && cfg.duration_s.is_finite()) {
            return Err(EvalError::Elapsed(cfg.duration_s));
        }
        let mut scenario = scenario.clone();
        // a replayable log must not depend on files next to the scenario
        if let TrackRef::File { .. } = scenario.track {
            scenario.track = TrackRef::Inline {
                inline: scenario.track()?.to_file(),
            };
            scenario.base_dir = None;
        }
        let mut world = scenario.build()?;
        jitter_start(&mut world, cfg.seed, cfg.start_jitter);
        let th = scenario.thresholds(&world.config);
        th.validate().map_err(SimError::Scenario)?;
        let controller = Controller::new(th, scenario.ego.lane);
        Ok(Self {
            scenario,
            model,
            cfg,
            world,
            controller,
            takeover: None,
            human: ActuatorCommand::default(),
            collided: false,
            distance: 0.0,
            tick: 0,
            ticks: Vec::new(),
            interventions: Vec::new(),
            end_reason: None,
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn interventions(&self) -> &[InterventionRecord] {
        &self.interventions
    }

    pub fn ticks(&self) -> &[TickRecord] {
        &self.ticks
    }

    pub fn elapsed(&self) -> f64 {
        self.tick as f64 * self.world.config.tick_period()
    }

    pub fn is_finished(&self) -> bool {
        self.end_reason.is_some()
    }

    pub fn in_takeover(&self) -> bool {
        self.takeover.is_some()
    }

    /// Autonomy so far; 100 before the first tick.
    pub fn autonomy(&self) -> f64 {
        compute_autonomy(self.interventions.len(), self.elapsed()).unwrap_or(100.0)
    }

    fn begin_takeover(
        &mut self,
        source: InterventionSource,
        trigger: String,
        ticks_left: Option<u64>,
    ) {
        self.interventions.push(InterventionRecord {
            start_tick: self.tick,
            start_time: self.elapsed(),
            duration: INTERVENTION_SECONDS,
            source,
            trigger,
            actual_duration: None,
        });
        self.takeover = Some(Takeover {
            source,
            ticks_left,
            record: self.interventions.len() - 1,
        });
    }

    fn end_takeover(&mut self, end_time: f64) {
        if let Some(t) = self.takeover.take() {
            let rec = &mut self.interventions[t.record];
            rec.actual_duration = Some(end_time - rec.start_time);
            let lane = self.controller.lane();
            self.controller.reset(lane);
        }
    }

    fn handle_human(&mut self, events: &[HumanEvent]) {
        for ev in events {
            match *ev {
                HumanEvent::Control { steering, throttle } => {
                    let steering =
                        steering.clamp(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2);
                    let cfg = &self.world.config;
                    self.human = ActuatorCommand {
                        omega: steering_to_omega(
                            steering,
                            self.world.ego.speed,
                            cfg.wheelbase,
                            cfg.omega_max,
                        ),
                        target_speed: throttle.clamp(0.0, 1.0) * cfg.v_max,
                        steering,
                    };
                }
                HumanEvent::TakeoverBegin if self.takeover.is_none() => {
                    self.begin_takeover(InterventionSource::Human, "takeover".into(), None);
                }
                HumanEvent::TakeoverEnd if matches!(&self.takeover, Some(t) if t.source == InterventionSource::Human) =>
                {
                    self.end_takeover(self.elapsed());
                }
                _ => {}
            }
        }
    }

    /// Advances one control tick. Human events are only acted on in human
    /// mode.
    pub fn step(
        &mut self,
        policy: &dyn SteeringPolicy,
        events: &[HumanEvent],
    ) -> Result<&TickRecord, EvalError> {
        if self.end_reason.is_some() {
            return Err(EvalError::Finished);
        }
        if self.cfg.mode == EvalMode::Human {
            self.handle_human(events);
        }
        let lane = self.controller.lane();
        let cte = self
            .world
            .track
            .cross_track_error(&self.world.ego.pose, lane)
            .ok();
        if cte.is_none() && !self.world.track.is_closed() {
            self.end_reason = Some("reached the end of the track".into());
            return Err(EvalError::Finished);
        }
        if self.cfg.mode == EvalMode::Oracle && self.takeover.is_none() {
            let in_maneuver = matches!(
                self.controller.mode().tag(),
                ModeTag::LaneChangeLeft | ModeTag::LaneChangeRight
            );
            let cte_seen = if in_maneuver { None } else { cte };
            let lane_width = self.world.track.lane_width();
            if let Some(trigger) = self.cfg.oracle.check(cte_seen, lane_width, self.collided) {
                let hold = self.cfg.oracle.hold_ticks(&self.world.config);
                self.begin_takeover(InterventionSource::Oracle, trigger, Some(hold));
            }
        }
        self.collided = false;

        let pose = self.world.ego.pose;
        let speed = self.world.ego.speed;
        let mode_before = self.controller.mode().tag();
        let (zones, frame, cnn_steer, command, driver) = match &self.takeover {
            None => {
                let out = self.controller.tick(&self.world, policy)?;
                let cmd = out.decision.command.to_actuator();
                (out.zones, out.frame, Some(out.cnn_steer), cmd, Driver::Auto)
            }
            Some(t) => {
                let zones = self.controller.observe(&self.world);
                let frame = self.controller.render(&self.world, policy);
                let cmd = match t.source {
                    InterventionSource::Oracle => {
                        let ctx = lane_context(&self.world, lane);
                        let c = cte.unwrap_or(ctx.lateral - ctx.lane_center(lane));
                        self.cfg
                            .oracle
                            .recovery_command(c, ctx.heading_error, &self.world.config)
                    }
                    InterventionSource::Human => self.human,
                };
                let driver = match t.source {
                    InterventionSource::Oracle => Driver::Oracle,
                    InterventionSource::Human => Driver::Human,
                };
                (zones, frame, None, cmd, driver)
            }
        };

        self.world.set_command(command);
        for _ in 0..self.world.config.steps_per_tick() {
            let before = self.world.ego.pose.position();
            if self.world.step().collision_onset {
                self.collided = true;
            }
            self.distance += (self.world.ego.pose.position() - before).norm();
        }

        if let Some(t) = &mut self.takeover {
            if let Some(n) = &mut t.ticks_left {
                *n -= 1;
                if *n == 0 {
                    let end = (self.tick + 1) as f64 * self.world.config.tick_period();
                    self.end_takeover(end);
                }
            }
        }

        self.ticks.push(TickRecord {
            tick: self.tick,
            time: self.tick as f64 * self.world.config.tick_period(),
            pose,
            speed,
            zones,
            lane,
            cte,
            mode_before,
            mode_after: self.controller.mode().tag(),
            driver,
            cnn_steer,
            command,
            frame_hash: format!("{:016x}", fnv1a64(&frame.pixels)),
        });
        self.tick += 1;
        if self.elapsed() >= self.cfg.duration_s - 1e-9 {
            self.end_reason = Some("duration reached".into());
        }
        Ok(self.ticks.last().expect("just pushed"))
    }

    pub fn finish(mut self) -> Result<RunLog, EvalError> {
        if self.takeover.is_some() {
            self.end_takeover(self.elapsed());
        }
        let elapsed = self.elapsed();
        if elapsed <= 0.0 {
            return Err(EvalError::Elapsed(elapsed));
        }
        let report = AutonomyReport::new(
            self.interventions.len(),
            elapsed,
            self.distance,
            self.world.collisions,
        )?;
        Ok(RunLog {
            ticks: self.ticks,
            summary: RunSummary {
                scenario: self.scenario,
                seed: self.cfg.seed,
                mode: self.cfg.mode,
                model: self.model,
                duration_s: self.cfg.duration_s,
                start_jitter: self.cfg.start_jitter,
                oracle: self.cfg.oracle.clone(),
                end_reason: self.end_reason.unwrap_or_else(|| "stopped early".into()),
                interventions: self.interventions,
                report,
            },
        })
    }
}

fn jitter_start(world: &mut World, seed: u64, (lateral, heading): (f64, f64)) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dl = if lateral > 0.0 {
        rng.gen_range(-lateral..=lateral)
    } else {
        0.0
    };
    let dh = if heading > 0.0 {
        rng.gen_range(-heading..=heading)
    } else {
        0.0
    };
    let pose = world.ego.pose;
    let dir = Vec2::from_angle(world.track.project(pose.position()).heading);
    let p = pose.position() + dir.left_normal().scale(dl);
    world.ego.pose = Pose::new(p.x, p.y, pose.heading + dh);
}

/// Runs a whole episode in oracle mode (or human mode with no events) as
/// fast as possible.
pub fn run_episode(
    scenario: &Scenario,
    policy: &dyn SteeringPolicy,
    model: ModelRef,
    cfg: EpisodeConfig,
) -> Result<RunLog, EvalError> {
    let mut ep = Episode::new(scenario, model, cfg)?;
    while !ep.is_finished() {
        match ep.step(policy, &[]) {
            Ok(_) | Err(EvalError::Finished) => {}
            Err(e) => return Err(e),
        }
    }
    ep.finish()
}

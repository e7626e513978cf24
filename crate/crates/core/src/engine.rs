//! Fixed-step episode loop.
//!
//! Each tick: sample the machine input, step the operator, measure the
//! distance of the commanded tip to the nominal surface, update the level of
//! autonomy, blend, solve IK, shape the joint command, recompute the tip,
//! render haptic forces and classify contact against the actual geometry.

use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::arbitration::{blend, Arbiter};
use crate::config::{EpisodeConfig, Mode};
use crate::dynamics::{self, JointFilterState};
use crate::error::{Error, Result};
use crate::geometry::{resolve_contact, sample_goal_error, signed_distance, ContactStatus, Environment, GoalError};
use crate::haptics::{interaction_force, HapticForce};
use crate::kinematics::{fk, ik_dls, IkParams, JointVector};
use crate::operator::{visible_goal, InputMailbox, Observation, OperatorModel, VelocityEstimator};
use crate::trajectory::{plan, Limits, TimedTrajectory, Waypoints};
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub t: f64,
    pub q_h: Vec3,
    pub q_m: Vec3,
    pub q_ref: Vec3,
    /// IK solution for `q_ref`.
    pub theta: JointVector,
    /// Dynamically shaped joint reference.
    pub theta_ref: JointVector,
    /// `fk(theta_ref)`, the commanded tip.
    pub tip: Vec3,
    /// Physical tip after the no-penetration response.
    pub contact_tip: Vec3,
    pub d_e: f64,
    pub alpha: f64,
    pub f_fixture: Vec3,
    pub f_field: Vec3,
    pub f_total: Vec3,
    pub contact: ContactStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    Timeout,
    /// Timed out while pressed against the surface.
    StuckCollision,
    /// IK could not follow the blended reference.
    Unreachable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    pub completion_time: Option<f64>,
    pub failure_reason: Option<FailureReason>,
    pub goal_error: GoalError,
    pub trajectory_duration: f64,
    pub ticks: u64,
    pub trace: Vec<SimState>,
}

impl EpisodeResult {
    /// Hash over the exact bit patterns of every recorded value.
    pub fn trace_digest(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for s in &self.trace {
            let vectors = [
                s.q_h,
                s.q_m,
                s.q_ref,
                s.tip,
                s.contact_tip,
                s.f_fixture,
                s.f_field,
                s.f_total,
            ];
            s.t.to_bits().hash(&mut h);
            for v in vectors {
                v.iter().for_each(|c| c.to_bits().hash(&mut h));
            }
            s.theta
                .iter()
                .chain(s.theta_ref.iter())
                .for_each(|c| c.to_bits().hash(&mut h));
            s.d_e.to_bits().hash(&mut h);
            s.alpha.to_bits().hash(&mut h);
            s.contact.hash(&mut h);
        }
        h.finish()
    }
}

/// Machine input: the planned approach followed by the insertion plunge.
#[derive(Debug, Clone)]
pub struct MachinePlan {
    pub approach: TimedTrajectory,
    pub insertion: TimedTrajectory,
}

impl MachinePlan {
    pub fn new(config: &EpisodeConfig, env: &Environment) -> Result<Self> {
        let traj = &config.trajectory;
        let approach = plan(&traj.waypoints, &traj.limits, traj.corner_radius)?;
        let goal = approach.end();
        let bottom = goal - env.surface.normal * traj.insertion_stroke;
        let insertion = plan(&Waypoints(vec![goal, bottom]), &traj.limits, 0.0)?;
        Ok(Self { approach, insertion })
    }

    pub fn sample(&self, t: f64) -> Vec3 {
        let tf = self.approach.duration();
        if t < tf {
            self.approach.sample(t)
        } else {
            self.insertion.sample(t - tf)
        }
    }

    pub fn duration(&self) -> f64 {
        self.approach.duration() + self.insertion.duration()
    }

    pub fn limits(&self) -> &Limits {
        self.approach.limits()
    }
}

/// Outcome of a finished episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Success { completion_time: f64 },
    Failure(FailureReason),
}

/// A running episode. Deterministic given its config and seed (and, for live
/// input, the sequence of mailbox values read at each tick).
#[derive(Debug, Clone)]
pub struct Episode {
    config: EpisodeConfig,
    env: Environment,
    machine: MachinePlan,
    arbiter: Arbiter,
    operator: OperatorModel,
    velocity: VelocityEstimator,
    ik: IkParams,
    theta_cmd: JointVector,
    joints: JointFilterState,
    tip: Vec3,
    contact_tip: Vec3,
    contact: ContactStatus,
    force: HapticForce,
    alpha: f64,
    ticks: u64,
    outcome: Option<Outcome>,
}

const STARTUP_IK_ITERS: usize = 2000;
/// Keeps the measurement-noise stream independent of the goal-error draw.
const NOISE_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

impl Episode {
    pub fn new(config: EpisodeConfig) -> Result<Self> {
        Self::build(config, None)
    }

    /// Episode whose `LiveInput` operator reads from `mailbox`.
    pub fn with_mailbox(config: EpisodeConfig, mailbox: Arc<InputMailbox>) -> Result<Self> {
        Self::build(config, Some(mailbox))
    }

    fn build(config: EpisodeConfig, mailbox: Option<Arc<InputMailbox>>) -> Result<Self> {
        config.validate()?;
        let goal_error = match config.goal_error.dz {
            Some(dz) => GoalError {
                dx: config.goal_error.dx,
                dz,
            },
            None => sample_goal_error(config.seed, config.world.sigma_e, config.goal_error.dx)?,
        };
        let env = Environment::new(&config.world, goal_error)?;
        let machine = MachinePlan::new(&config, &env)?;

        let start = machine.sample(0.0);
        let startup = IkParams {
            max_iters: STARTUP_IK_ITERS,
            ..config.ik
        };
        let theta0 = ik_dls(&start, &config.chain.home(), &config.chain, &startup)
            .map_err(|e| Error::config(format!("trajectory start is not reachable: {e}")))?
            .theta;
        let tip = fk(&theta0, &config.chain);

        let initial_alpha = match config.mode {
            Mode::Autonomous => 1.0,
            Mode::Shared => config
                .arbitration
                .raw_alpha(signed_distance(&tip, &env), (tip - env.nominal_hole).norm())?,
        };
        let arbiter = Arbiter::new(config.arbitration.clone(), initial_alpha, config.seed ^ NOISE_STREAM)?;

        let q_h0 = config.operator_start.unwrap_or(start);
        let mut operator = OperatorModel::new(config.operator, q_h0, env.surface, env.insertion_depth)?;
        if let Some(mb) = mailbox {
            operator = operator.with_mailbox(mb);
        }
        let mut velocity = VelocityEstimator::new(config.velocity_window, config.dt);
        velocity.push(q_h0);
        let (contact_tip, contact) = resolve_contact(&tip, ContactStatus::Free, &env);

        Ok(Self {
            ik: config.ik,
            env,
            machine,
            arbiter,
            operator,
            velocity,
            theta_cmd: theta0,
            joints: JointFilterState::at_rest(theta0),
            tip,
            contact_tip,
            contact,
            force: HapticForce::default(),
            alpha: initial_alpha,
            ticks: 0,
            outcome: None,
            config,
        })
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    pub fn environment(&self) -> &Environment {
        &self.env
    }

    pub fn machine(&self) -> &MachinePlan {
        &self.machine
    }

    pub fn time(&self) -> f64 {
        self.ticks as f64 * self.config.dt
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.outcome
    }

    pub fn operator(&self) -> &OperatorModel {
        &self.operator
    }

    /// Advances one tick. Returns an error only for IK failure, which also
    /// ends the episode with [`FailureReason::Unreachable`].
    pub fn tick(&mut self) -> Result<SimState> {
        if self.outcome.is_some() {
            return Err(Error::Contract("episode already finished".into()));
        }
        let dt = self.config.dt;
        self.ticks += 1;
        let t = self.time();
        let q_m = self.machine.sample(t);

        let obs = Observation {
            t,
            q_h: self.operator.q_h(),
            q_m,
            tip: self.contact_tip,
            force: self.force.total,
            visible_goal: visible_goal(
                &self.contact_tip,
                &self.env.actual_hole,
                self.config.operator.fov_radius,
            ),
        };
        let q_h = self.operator.step(&obs, dt);
        let q_h_dot = self.velocity.push(q_h);

        let d_e = signed_distance(&self.tip, &self.env);
        self.alpha = match self.config.mode {
            Mode::Autonomous => 1.0,
            Mode::Shared => {
                let goal_distance = (self.tip - self.env.nominal_hole).norm();
                self.arbiter.update(t, dt, d_e, goal_distance)?
            }
        };
        let q_ref = blend(self.alpha, &q_m, &q_h)?;

        match ik_dls(&q_ref, &self.theta_cmd, &self.config.chain, &self.ik) {
            Ok(sol) => self.theta_cmd = sol.theta,
            Err(e @ Error::Unreachable { .. }) => {
                self.outcome = Some(Outcome::Failure(FailureReason::Unreachable));
                return Err(e);
            }
            Err(e) => return Err(e),
        }
        self.joints = dynamics::step(&self.joints, &self.theta_cmd, dt, &self.config.filter);
        self.tip = fk(&self.joints.theta, &self.config.chain);

        self.force = interaction_force(self.alpha, &q_h, &q_h_dot, &q_m, &self.env, &self.config.haptics)?;
        let (contact_tip, contact) = resolve_contact(&self.tip, self.contact, &self.env);
        self.contact_tip = contact_tip;
        self.contact = contact;

        if contact == ContactStatus::Inserted {
            self.outcome = Some(Outcome::Success { completion_time: t });
        } else if t >= self.config.timeout - 1e-9 {
            let reason = if contact == ContactStatus::SurfaceCollision {
                FailureReason::StuckCollision
            } else {
                FailureReason::Timeout
            };
            self.outcome = Some(Outcome::Failure(reason));
        }

        Ok(SimState {
            t,
            q_h,
            q_m,
            q_ref,
            theta: self.theta_cmd,
            theta_ref: self.joints.theta,
            tip: self.tip,
            contact_tip,
            d_e,
            alpha: self.alpha,
            f_fixture: self.force.fixture,
            f_field: self.force.field,
            f_total: self.force.total,
            contact,
        })
    }

    /// Runs to completion. `record` controls whether per-tick states are kept.
    pub fn run(mut self, record: bool) -> EpisodeResult {
        let capacity = if record {
            (self.config.timeout / self.config.dt).ceil() as usize + 1
        } else {
            0
        };
        let mut trace = Vec::with_capacity(capacity.min(1 << 22));
        while self.outcome.is_none() {
            match self.tick() {
                Ok(state) if record => trace.push(state),
                _ => {}
            }
        }
        let (success, completion_time, failure_reason) = match self.outcome {
            Some(Outcome::Success { completion_time }) => (true, Some(completion_time), None),
            Some(Outcome::Failure(reason)) => (false, None, Some(reason)),
            None => unreachable!("loop exits only with an outcome"),
        };
        EpisodeResult {
            success,
            completion_time,
            failure_reason,
            goal_error: self.env.goal_error(),
            trajectory_duration: self.machine.approach.duration(),
            ticks: self.ticks,
            trace,
        }
    }
}

/// Runs an episode and records its full trace.
pub fn run_episode(config: &EpisodeConfig) -> Result<EpisodeResult> {
    Ok(Episode::new(config.clone())?.run(true))
}

/// Runs an episode without keeping the trace.
pub fn run_episode_summary(config: &EpisodeConfig) -> Result<EpisodeResult> {
    Ok(Episode::new(config.clone())?.run(false))
}

//! Episode configuration: a complete, deterministic description of one run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arbitration::ArbitrationParams;
use crate::dynamics::FilterGains;
use crate::error::{require_positive, Error, Result};
use crate::geometry::WorldConfig;
use crate::haptics::HapticParams;
use crate::kinematics::{ChainConfig, IkParams};
use crate::operator::OperatorConfig;
use crate::trajectory::{Limits, Waypoints};
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Feed-forward automation: α is held at 1.
    Autonomous,
    /// Uncertainty-driven sliding autonomy.
    Shared,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Autonomous => "autonomous",
            Mode::Shared => "shared",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "autonomous" => Ok(Mode::Autonomous),
            "shared" => Ok(Mode::Shared),
            other => Err(Error::config(format!(
                "unknown mode '{other}' (expected autonomous|shared)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub waypoints: Waypoints,
    pub limits: Limits,
    pub corner_radius: f64,
    /// Straight plunge along the inward normal after the nominal goal is reached (m).
    pub insertion_stroke: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            waypoints: Waypoints(vec![
                Vec3::new(0.15, -0.25, 0.25),
                Vec3::new(0.28, -0.10, 0.16),
                Vec3::new(0.35, 0.0, 0.08),
                Vec3::new(0.35, 0.0, 0.0),
            ]),
            limits: Limits::default(),
            corner_radius: 0.020,
            insertion_stroke: 0.060,
        }
    }
}

/// Goal error applied to the nominal hole. `dz = None` draws it from the seed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GoalErrorConfig {
    pub dx: f64,
    pub dz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub world: WorldConfig,
    pub goal_error: GoalErrorConfig,
    pub trajectory: TrajectoryConfig,
    pub arbitration: ArbitrationParams,
    pub chain: ChainConfig,
    pub ik: IkParams,
    pub filter: FilterGains,
    pub haptics: HapticParams,
    pub operator: OperatorConfig,
    /// Initial operator input; defaults to the trajectory start.
    pub operator_start: Option<Vec3>,
    pub mode: Mode,
    pub dt: f64,
    pub timeout: f64,
    /// Window of the operator-velocity estimator (s).
    pub velocity_window: f64,
    pub seed: u64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            goal_error: GoalErrorConfig::default(),
            trajectory: TrajectoryConfig::default(),
            arbitration: ArbitrationParams::default(),
            chain: ChainConfig::default(),
            ik: IkParams::default(),
            filter: FilterGains::default(),
            haptics: HapticParams::default(),
            operator: OperatorConfig::default(),
            operator_start: None,
            mode: Mode::Shared,
            dt: 0.001,
            timeout: 30.0,
            velocity_window: 0.020,
            seed: 1,
        }
    }
}

impl EpisodeConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Self = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks everything that can be checked without planning or sampling.
    pub fn validate(&self) -> Result<()> {
        require_positive("dt", self.dt)?;
        require_positive("timeout", self.timeout)?;
        require_positive("velocity_window", self.velocity_window)?;
        require_positive("insertion_stroke", self.trajectory.insertion_stroke)?;
        if !self.goal_error.dx.is_finite() || self.goal_error.dz.is_some_and(|d| !d.is_finite()) {
            return Err(Error::config("goal error must be finite"));
        }
        self.trajectory.waypoints.validate()?;
        self.trajectory.limits.validate()?;
        let goal = self.trajectory.waypoints.last();
        if (goal - self.world.nominal_hole).norm() > 1e-9 {
            return Err(Error::config("the last waypoint must be the nominal hole"));
        }
        self.arbitration.validate()?;
        self.chain.validate()?;
        self.ik.validate()?;
        self.filter.validate()?;
        self.haptics.validate()?;
        self.operator.validate()?;
        if let Some(p) = self.operator_start {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::config("operator_start must be finite"));
            }
        }
        Ok(())
    }
}

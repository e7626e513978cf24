//! Scripted stand-ins for the human operator, plus the live pointer adapter.
//!
//! Scripted models keep an internal commanded point `p` and emit `q_h` as a
//! first-order lag of it. Visual corrections act on `p` itself, so a visible
//! goal is approached through two cascaded first-order stages. The rate of `p`
//! is limited to `max_speed`, which also bounds the speed of `q_h`.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Result};
use crate::geometry::Plane;
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    /// Holds its initial input.
    Passive,
    /// Drifts along the haptic force.
    CompliantFollower,
    /// Follows the haptic force and, once the actual hole is in the camera
    /// view, aligns over it and pushes the peg in.
    VisualServoCorrector,
    /// Latest pointer sample from a connected client.
    LiveInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorConfig {
    pub kind: OperatorKind,
    /// Neuromuscular lag between intent and hand position (s).
    pub lag_tau: f64,
    /// Admittance of the hand to the interaction force (m/(N·s)).
    pub gain_force: f64,
    /// Visual correction gain (1/s).
    pub gain_visual: f64,
    /// Camera visibility radius around the actual hole (m).
    pub fov_radius: f64,
    /// Lateral misalignment below which the operator starts pushing in (m).
    pub align_tol: f64,
    /// Tip height above the actual surface at which pushing starts (m).
    pub engage_height: f64,
    /// How far past the insertion depth the operator aims (m).
    pub push_margin: f64,
    /// Hand speed limit (m/s).
    pub max_speed: f64,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self {
            kind: OperatorKind::VisualServoCorrector,
            lag_tau: 0.1,
            gain_force: 0.02,
            gain_visual: 8.0,
            fov_radius: 0.060,
            align_tol: 0.004,
            engage_height: 0.030,
            push_margin: 0.030,
            max_speed: 1.0,
        }
    }
}

impl OperatorConfig {
    pub fn validate(&self) -> Result<()> {
        require_positive("lag_tau", self.lag_tau)?;
        require_positive("max_speed", self.max_speed)?;
        require_positive("fov_radius", self.fov_radius)?;
        require_positive("align_tol", self.align_tol)?;
        for (name, v) in [
            ("gain_force", self.gain_force),
            ("gain_visual", self.gain_visual),
            ("engage_height", self.engage_height),
            ("push_margin", self.push_margin),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(crate::Error::config(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// What the operator perceives on one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub t: f64,
    pub q_h: Vec3,
    pub q_m: Vec3,
    /// Robot tip as seen through the camera.
    pub tip: Vec3,
    pub force: Vec3,
    /// Actual hole position, present only when the tip is within `fov_radius` of it.
    pub visible_goal: Option<Vec3>,
}

/// Camera model: the actual hole is visible only near the tip.
pub fn visible_goal(tip: &Vec3, actual_hole: &Vec3, fov_radius: f64) -> Option<Vec3> {
    ((tip - actual_hole).norm() <= fov_radius).then_some(*actual_hole)
}

/// Latest-value mailbox fed by a network session and read once per tick.
#[derive(Debug, Default)]
pub struct InputMailbox {
    latest: Mutex<Option<Vec3>>,
}

impl InputMailbox {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn store(&self, pos: Vec3) {
        *self.latest.lock().unwrap_or_else(|e| e.into_inner()) = Some(pos);
    }

    pub fn latest(&self) -> Option<Vec3> {
        *self.latest.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Debug, Clone)]
pub struct OperatorModel {
    config: OperatorConfig,
    surface: Plane,
    insertion_depth: f64,
    intent: Vec3,
    q_h: Vec3,
    voluntary: Vec3,
    mailbox: Option<Arc<InputMailbox>>,
}

impl OperatorModel {
    pub fn new(config: OperatorConfig, q_h0: Vec3, surface: Plane, insertion_depth: f64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            surface,
            insertion_depth,
            intent: q_h0,
            q_h: q_h0,
            voluntary: Vec3::zeros(),
            mailbox: None,
        })
    }

    pub fn with_mailbox(mut self, mailbox: Arc<InputMailbox>) -> Self {
        self.mailbox = Some(mailbox);
        self
    }

    pub fn config(&self) -> &OperatorConfig {
        &self.config
    }

    pub fn q_h(&self) -> Vec3 {
        self.q_h
    }

    /// Accumulated displacement from the operator's own visual corrections.
    pub fn voluntary_displacement(&self) -> Vec3 {
        self.voluntary
    }

    /// Bound on `‖q_h(t+dt) - q_h(t)‖ / dt` for the scripted models.
    pub fn speed_bound(&self) -> f64 {
        self.config.max_speed
    }

    fn visual_rate(&self, obs: &Observation) -> Vec3 {
        let Some(goal) = obs.visible_goal else {
            return Vec3::zeros();
        };
        let cfg = &self.config;
        let lateral = self.surface.lateral(&(goal - self.intent));
        let mut rate = lateral * cfg.gain_visual;
        let n = self.surface.normal;
        let tip_height = (obs.tip - goal).dot(&n);
        if lateral.norm() <= cfg.align_tol && tip_height <= cfg.engage_height {
            let aim = goal - n * (self.insertion_depth + cfg.push_margin);
            rate += n * ((aim - self.intent).dot(&n) * cfg.gain_visual);
        }
        rate
    }

    pub fn step(&mut self, obs: &Observation, dt: f64) -> Vec3 {
        let cfg = self.config;
        match cfg.kind {
            OperatorKind::Passive => {}
            OperatorKind::LiveInput => {
                if let Some(pos) = self.mailbox.as_ref().and_then(|m| m.latest()) {
                    self.q_h = pos;
                    self.intent = pos;
                }
            }
            OperatorKind::CompliantFollower | OperatorKind::VisualServoCorrector => {
                let haptic = obs.force * cfg.gain_force;
                let visual = if cfg.kind == OperatorKind::VisualServoCorrector {
                    self.visual_rate(obs)
                } else {
                    Vec3::zeros()
                };
                let mut rate = haptic + visual;
                let speed = rate.norm();
                let scale = if speed > cfg.max_speed {
                    cfg.max_speed / speed
                } else {
                    1.0
                };
                rate *= scale;
                self.voluntary += visual * (scale * dt);
                self.intent += rate * dt;
                let blend = 1.0 - (-dt / cfg.lag_tau).exp();
                self.q_h += (self.intent - self.q_h) * blend;
            }
        }
        self.q_h
    }
}

/// Estimates `q̇_h` as the mean first difference over a sliding window.
#[derive(Debug, Clone)]
pub struct VelocityEstimator {
    window: usize,
    dt: f64,
    history: VecDeque<Vec3>,
}

impl VelocityEstimator {
    pub fn new(window_s: f64, dt: f64) -> Self {
        let window = ((window_s / dt).round() as usize).max(1);
        Self {
            window,
            dt,
            history: VecDeque::with_capacity(window + 1),
        }
    }

    pub fn push(&mut self, q: Vec3) -> Vec3 {
        self.history.push_back(q);
        if self.history.len() > self.window + 1 {
            self.history.pop_front();
        }
        let n = self.history.len() - 1;
        if n == 0 {
            return Vec3::zeros();
        }
        (self.history[n] - self.history[0]) / (n as f64 * self.dt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn plane() -> Plane {
        Plane::new(Vec3::zeros(), Vec3::z(), Vec3::x()).unwrap()
    }

    fn obs(q_h: Vec3, tip: Vec3, force: Vec3, goal: Option<Vec3>) -> Observation {
        Observation {
            t: 0.0,
            q_h,
            q_m: q_h,
            tip,
            force,
            visible_goal: goal,
        }
    }

    fn model(kind: OperatorKind, q0: Vec3) -> OperatorModel {
        let cfg = OperatorConfig {
            kind,
            ..Default::default()
        };
        OperatorModel::new(cfg, q0, plane(), 0.01).unwrap()
    }

    #[test]
    fn passive_holds_still() {
        let q0 = Vec3::new(0.3, 0.0, 0.1);
        let mut m = model(OperatorKind::Passive, q0);
        for _ in 0..1000 {
            let q = m.step(&obs(q0, q0, Vec3::new(5.0, 1.0, 0.0), Some(Vec3::zeros())), 0.001);
            assert_eq!(q, q0);
        }
    }

    #[test]
    fn follower_without_force_stays_put() {
        let q0 = Vec3::new(0.3, 0.0, 0.1);
        let mut m = model(OperatorKind::CompliantFollower, q0);
        for _ in 0..1000 {
            assert_eq!(m.step(&obs(q0, q0, Vec3::zeros(), None), 0.001), q0);
        }
    }

    #[test]
    fn follower_drifts_with_force() {
        let q0 = Vec3::zeros();
        let mut m = model(OperatorKind::CompliantFollower, q0);
        let mut q = q0;
        for _ in 0..500 {
            q = m.step(&obs(q, q, Vec3::new(1.0, 0.0, 0.0), None), 0.001);
        }
        assert!(q.x > 0.0 && q.y == 0.0);
    }

    #[test]
    fn visual_correction_converges_as_cascade() {
        // Lateral offset only, goal constantly visible, no haptic force.
        let cfg = OperatorConfig {
            kind: OperatorKind::VisualServoCorrector,
            gain_force: 0.0,
            ..Default::default()
        };
        let goal = Vec3::new(0.03, 0.0, 0.0);
        let q0 = Vec3::new(0.0, 0.0, 0.05);
        let mut m = OperatorModel::new(cfg, q0, plane(), 0.01).unwrap();
        let dt = 0.0001;
        let (tau, g) = (cfg.lag_tau, cfg.gain_visual);
        let mut q = q0;
        let mut worst: f64 = 0.0;
        for k in 1..=10_000 {
            q = m.step(&obs(q, q0, Vec3::zeros(), Some(goal)), dt);
            let t = k as f64 * dt;
            // Intent error decays as e^{-gt}; its lag with time constant tau gives
            // e(t) = (g e^{-t/tau} - e^{-gt}/tau) / (g - 1/tau) relative to 30 mm.
            let analytic = 0.03 * (g * (-t / tau).exp() - (-g * t).exp() / tau) / (g - 1.0 / tau);
            worst = worst.max(((goal.x - q.x) - analytic).abs());
        }
        assert!(worst < 1e-4, "max deviation from cascade response {worst}");
        assert!((goal.x - q.x).abs() < 1e-3);
        // Without alignment near the surface it never pushes down.
        assert_abs_diff_eq!(q.z, 0.05, epsilon = 1e-15);
    }

    #[test]
    fn pushes_in_once_aligned_near_surface() {
        let goal = Vec3::new(0.03, 0.0, 0.0);
        let q0 = goal + Vec3::new(0.0, 0.0, 0.002);
        let mut m = model(OperatorKind::VisualServoCorrector, q0);
        let mut q = q0;
        for _ in 0..2000 {
            q = m.step(&obs(q, q, Vec3::zeros(), Some(goal)), 0.001);
        }
        assert!(q.z < -0.01);
    }

    #[test]
    fn live_input_is_zero_order_hold() {
        let mailbox = InputMailbox::new();
        let q0 = Vec3::new(0.3, 0.0, 0.1);
        let mut m = model(OperatorKind::LiveInput, q0).with_mailbox(mailbox.clone());
        assert_eq!(m.step(&obs(q0, q0, Vec3::zeros(), None), 0.001), q0);
        let p = Vec3::new(0.1, 0.2, 0.3);
        mailbox.store(p);
        assert_eq!(m.step(&obs(q0, q0, Vec3::zeros(), None), 0.001), p);
        assert_eq!(m.step(&obs(q0, q0, Vec3::zeros(), None), 0.001), p);
    }

    #[test]
    fn velocity_estimate_of_ramp() {
        let mut est = VelocityEstimator::new(0.02, 0.001);
        let mut v = Vec3::zeros();
        for k in 0..100 {
            v = est.push(Vec3::new(0.2 * k as f64 * 0.001, 0.0, 0.0));
        }
        assert_abs_diff_eq!(v.x, 0.2, epsilon = 1e-9);
    }
}

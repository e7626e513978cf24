//! Per-joint command shaping: each joint follows its IK command through a
//! second-order system `θ̈ = ωₙ²(θ_cmd - θ) - 2ζωₙθ̇`, integrated with
//! semi-implicit Euler. High-frequency command content is attenuated roughly
//! as `(ωₙ/ω)²`.

use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Result};
use crate::kinematics::JointVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterGains {
    pub omega_n: f64,
    pub zeta: f64,
    /// Joint speed limit (rad/s).
    pub max_speed: f64,
}

impl Default for FilterGains {
    fn default() -> Self {
        Self {
            omega_n: 15.0,
            zeta: 1.0,
            max_speed: 10.0,
        }
    }
}

impl FilterGains {
    pub fn validate(&self) -> Result<()> {
        require_positive("omega_n", self.omega_n)?;
        require_positive("zeta", self.zeta)?;
        require_positive("max_speed", self.max_speed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointFilterState {
    pub theta: JointVector,
    pub theta_dot: JointVector,
}

impl JointFilterState {
    pub fn at_rest(theta: JointVector) -> Self {
        Self {
            theta,
            theta_dot: JointVector::zeros(),
        }
    }
}

/// Advances the filter by `dt`; the new `theta` is the shaped reference `θ_ref`.
pub fn step(state: &JointFilterState, theta_cmd: &JointVector, dt: f64, gains: &FilterGains) -> JointFilterState {
    let wn = gains.omega_n;
    let accel = (theta_cmd - state.theta) * (wn * wn) - state.theta_dot * (2.0 * gains.zeta * wn);
    let theta_dot = (state.theta_dot + accel * dt).map(|v| v.clamp(-gains.max_speed, gains.max_speed));
    JointFilterState {
        theta: state.theta + theta_dot * dt,
        theta_dot,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn equilibrium_is_fixed() {
        let theta = JointVector::new(0.1, -0.2, 0.3, 0.0, 1.0, -1.0);
        let s = JointFilterState::at_rest(theta);
        assert_eq!(step(&s, &theta, 0.001, &FilterGains::default()), s);
    }

    #[test]
    fn critically_damped_step_response() {
        let gains = FilterGains::default();
        let dt = 0.001;
        let target = JointVector::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let mut s = JointFilterState::at_rest(JointVector::zeros());
        let wn = gains.omega_n;
        let mut peak: f64 = 0.0;
        for k in 1..=1000 {
            s = step(&s, &target, dt, &gains);
            peak = peak.max(s.theta[0]);
            let t = k as f64 * dt;
            if k % 100 == 0 {
                let analytic = 1.0 - (1.0 + wn * t) * (-wn * t).exp();
                assert_abs_diff_eq!(s.theta[0], analytic, epsilon = 1e-2);
            }
        }
        let analytic = 1.0 - (1.0 + wn) * (-wn).exp();
        assert_abs_diff_eq!(s.theta[0], analytic, epsilon = 1e-3);
        assert!(peak <= 1.0 + 1e-6);
    }

    #[test]
    fn alternating_command_is_attenuated() {
        // 100 Hz square wave sampled at 1 kHz.
        let gains = FilterGains::default();
        let dt = 0.001;
        let mut s = JointFilterState::at_rest(JointVector::zeros());
        let mut amplitude: f64 = 0.0;
        for k in 0..4000 {
            let v = if (k / 5) % 2 == 0 { 1.0 } else { -1.0 };
            s = step(&s, &JointVector::repeat(v), dt, &gains);
            if k >= 2000 {
                amplitude = amplitude.max(s.theta[0].abs());
            }
        }
        // -20 dB.
        assert!(amplitude <= 0.1, "amplitude {amplitude}");
    }
}

//! Operator-facing interaction force: a spring-damper fixture toward the
//! machine trajectory plus a repulsive field at the nominal surface, both
//! stiffened as the level of autonomy rises.

use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};
use crate::geometry::Environment;
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HapticParams {
    /// Fixture stiffness at α = 0 (N/m).
    pub k_min: f64,
    /// Fixture stiffness at α = 1 (N/m).
    pub k_max: f64,
    /// Fixture damping (N·s/m).
    pub b: f64,
    pub kv_min: f64,
    pub kv_max: f64,
}

impl Default for HapticParams {
    fn default() -> Self {
        Self {
            k_min: 10.0,
            k_max: 75.0,
            b: 7.5,
            kv_min: 200.0,
            kv_max: 1000.0,
        }
    }
}

impl HapticParams {
    pub fn validate(&self) -> Result<()> {
        require_positive("k_min", self.k_min)?;
        require_positive("kv_min", self.kv_min)?;
        require_positive("b", self.b)?;
        if !(self.k_min < self.k_max && self.k_max.is_finite()) {
            return Err(Error::config("haptics requires k_min < k_max"));
        }
        if !(self.kv_min < self.kv_max && self.kv_max.is_finite()) {
            return Err(Error::config("haptics requires kv_min < kv_max"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct HapticForce {
    pub fixture: Vec3,
    pub field: Vec3,
    pub total: Vec3,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::Contract(format!("level of autonomy {alpha} outside [0, 1]")))
    }
}

pub fn fixture_stiffness(alpha: f64, params: &HapticParams) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(alpha * (params.k_max - params.k_min) + params.k_min)
}

pub fn field_stiffness(alpha: f64, params: &HapticParams) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(alpha * (params.kv_max - params.kv_min) + params.kv_min)
}

/// `F_f = -k(α)(q_h - q_m) - b·q̇_h`.
pub fn fixture_force(alpha: f64, q_h: &Vec3, q_h_dot: &Vec3, q_m: &Vec3, params: &HapticParams) -> Result<Vec3> {
    let k = fixture_stiffness(alpha, params)?;
    Ok(-(q_h - q_m) * k - q_h_dot * params.b)
}

/// How far `q_h` has pushed through the nominal surface, or zero when it is
/// above the surface or over the nominal hole opening.
pub fn field_penetration(q_h: &Vec3, env: &Environment) -> f64 {
    let d = env.surface.signed_distance(q_h);
    if d >= 0.0 {
        return 0.0;
    }
    let over_hole = env.surface.lateral(&(q_h - env.nominal_hole)).norm() <= env.hole_radius;
    if over_hole {
        0.0
    } else {
        -d
    }
}

/// Repulsive force along the outward surface normal, `k_v(α)·penetration`.
pub fn potential_force(alpha: f64, q_h: &Vec3, env: &Environment, params: &HapticParams) -> Result<Vec3> {
    let kv = field_stiffness(alpha, params)?;
    Ok(env.surface.normal * (kv * field_penetration(q_h, env)))
}

pub fn total_force(fixture: &Vec3, field: &Vec3) -> Vec3 {
    fixture + field
}

pub fn interaction_force(
    alpha: f64,
    q_h: &Vec3,
    q_h_dot: &Vec3,
    q_m: &Vec3,
    env: &Environment,
    params: &HapticParams,
) -> Result<HapticForce> {
    let fixture = fixture_force(alpha, q_h, q_h_dot, q_m, params)?;
    let field = potential_force(alpha, q_h, env, params)?;
    Ok(HapticForce {
        fixture,
        field,
        total: total_force(&fixture, &field),
    })
}

//! Planar work surface with a nominal and an actual hole.
//!
//! The planner and the arbitration only ever see the nominal geometry. The
//! actual hole, displaced by the goal error, is used for contact
//! classification and by the operator's camera model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};
use crate::Vec3;

/// A plane through `point` with unit `normal`; `x_axis` is a unit in-plane direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub point: Vec3,
    pub normal: Vec3,
    pub x_axis: Vec3,
}

impl Plane {
    /// Builds a plane, normalizing `normal` and orthogonalizing `x_hint` against it.
    pub fn new(point: Vec3, normal: Vec3, x_hint: Vec3) -> Result<Self> {
        let n = normal
            .try_normalize(1e-12)
            .ok_or_else(|| Error::config("surface normal must be non-zero"))?;
        let x = (x_hint - n * x_hint.dot(&n))
            .try_normalize(1e-9)
            .ok_or_else(|| Error::config("surface x-axis must not be parallel to the normal"))?;
        if !point.iter().all(|c| c.is_finite()) {
            return Err(Error::config("surface point must be finite"));
        }
        Ok(Self {
            point,
            normal: n,
            x_axis: x,
        })
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        (p - self.point).dot(&self.normal)
    }

    /// Component of `v` lying in the plane.
    pub fn lateral(&self, v: &Vec3) -> Vec3 {
        v - self.normal * v.dot(&self.normal)
    }

    pub fn contains(&self, p: &Vec3, tol: f64) -> bool {
        self.signed_distance(p).abs() <= tol
    }
}

/// Nominal world description as it appears in the episode config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub surface_point: Vec3,
    pub surface_normal: Vec3,
    pub surface_x_axis: Vec3,
    pub nominal_hole: Vec3,
    pub hole_radius: f64,
    pub peg_radius: f64,
    pub insertion_depth: f64,
    pub sigma_e: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            surface_point: Vec3::zeros(),
            surface_normal: Vec3::z(),
            surface_x_axis: Vec3::x(),
            nominal_hole: Vec3::new(0.35, 0.0, 0.0),
            hole_radius: 0.010,
            peg_radius: 0.004,
            insertion_depth: 0.010,
            sigma_e: 0.010,
        }
    }
}

/// Displacement of the actual hole from the nominal one, in surface coordinates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GoalError {
    /// Along the surface x-axis (m).
    pub dx: f64,
    /// Along the surface normal (m).
    pub dz: f64,
}

/// Draws the normal-direction hole error from N(0, sigma_e²); the lateral error
/// is the deterministic sweep value `fixed_dx`.
pub fn sample_goal_error(rng_seed: u64, sigma_e: f64, fixed_dx: f64) -> Result<GoalError> {
    require_positive("sigma_e", sigma_e)?;
    if !fixed_dx.is_finite() {
        return Err(Error::config("goal error dx must be finite"));
    }
    let normal = Normal::new(0.0, sigma_e).map_err(|e| Error::config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok(GoalError {
        dx: fixed_dx,
        dz: normal.sample(&mut rng),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactStatus {
    Free,
    SurfaceCollision,
    InHoleMouth,
    Inserted,
}

impl ContactStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ContactStatus::Free => "free",
            ContactStatus::SurfaceCollision => "surface_collision",
            ContactStatus::InHoleMouth => "in_hole_mouth",
            ContactStatus::Inserted => "inserted",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "free" => ContactStatus::Free,
            "surface_collision" => ContactStatus::SurfaceCollision,
            "in_hole_mouth" => ContactStatus::InHoleMouth,
            "inserted" => ContactStatus::Inserted,
            _ => return None,
        })
    }

    fn in_hole(self) -> bool {
        matches!(self, ContactStatus::InHoleMouth | ContactStatus::Inserted)
    }
}

/// Immutable episode geometry. `surface` is the nominal plane; the actual
/// surface is parallel to it and passes through `actual_hole`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub surface: Plane,
    pub nominal_hole: Vec3,
    pub actual_hole: Vec3,
    pub hole_radius: f64,
    pub peg_radius: f64,
    pub insertion_depth: f64,
    pub sigma_e: f64,
}

impl Environment {
    pub fn new(world: &WorldConfig, error: GoalError) -> Result<Self> {
        let surface = Plane::new(world.surface_point, world.surface_normal, world.surface_x_axis)?;
        require_positive("peg_radius", world.peg_radius)?;
        require_positive("insertion_depth", world.insertion_depth)?;
        require_positive("sigma_e", world.sigma_e)?;
        if !(world.hole_radius.is_finite() && world.hole_radius > world.peg_radius) {
            return Err(Error::config(format!(
                "hole_radius ({}) must exceed peg_radius ({})",
                world.hole_radius, world.peg_radius
            )));
        }
        if !surface.contains(&world.nominal_hole, 1e-9) {
            return Err(Error::config("nominal hole must lie on the surface plane"));
        }
        if !(error.dx.is_finite() && error.dz.is_finite()) {
            return Err(Error::config("goal error must be finite"));
        }
        let actual_hole = world.nominal_hole + surface.x_axis * error.dx + surface.normal * error.dz;
        Ok(Self {
            surface,
            nominal_hole: world.nominal_hole,
            actual_hole,
            hole_radius: world.hole_radius,
            peg_radius: world.peg_radius,
            insertion_depth: world.insertion_depth,
            sigma_e: world.sigma_e,
        })
    }

    /// Radial play of the peg centerline inside the hole.
    pub fn clearance(&self) -> f64 {
        self.hole_radius - self.peg_radius
    }

    pub fn goal_error(&self) -> GoalError {
        let d = self.actual_hole - self.nominal_hole;
        GoalError {
            dx: d.dot(&self.surface.x_axis),
            dz: d.dot(&self.surface.normal),
        }
    }

    /// Depth of `p` below the actual surface (negative above it).
    pub fn depth_below_actual(&self, p: &Vec3) -> f64 {
        -(p - self.actual_hole).dot(&self.surface.normal)
    }

    /// Distance of `p` from the actual hole centerline.
    pub fn radial_offset(&self, p: &Vec3) -> f64 {
        self.surface.lateral(&(p - self.actual_hole)).norm()
    }
}

/// Distance of the tip from the nominal surface along its normal: positive
/// above, negative past it. Never looks at the actual hole.
pub fn signed_distance(tip: &Vec3, env: &Environment) -> f64 {
    env.surface.signed_distance(tip)
}

/// Slack on the clearance and depth comparisons, far below any physical tolerance.
const GEOM_EPS: f64 = 1e-12;

pub fn classify_contact(tip: &Vec3, env: &Environment) -> ContactStatus {
    let depth = env.depth_below_actual(tip);
    let aligned = env.radial_offset(tip) <= env.clearance() + GEOM_EPS;
    if aligned {
        if depth >= env.insertion_depth - GEOM_EPS {
            ContactStatus::Inserted
        } else if depth > 0.0 {
            ContactStatus::InHoleMouth
        } else {
            ContactStatus::Free
        }
    } else if depth >= -GEOM_EPS {
        ContactStatus::SurfaceCollision
    } else {
        ContactStatus::Free
    }
}

/// Applies the no-penetration response to a commanded tip position.
///
/// A tip pressed into the surface away from the hole is held on the actual
/// surface. A tip already inside the hole is held against the hole wall, so it
/// cannot leave the bore sideways.
pub fn resolve_contact(raw_tip: &Vec3, previous: ContactStatus, env: &Environment) -> (Vec3, ContactStatus) {
    let depth = env.depth_below_actual(raw_tip);
    let offset = env.surface.lateral(&(raw_tip - env.actual_hole));
    if depth <= 0.0 || offset.norm() <= env.clearance() {
        return (*raw_tip, classify_contact(raw_tip, env));
    }
    let clamped = if previous.in_hole() {
        raw_tip - offset + offset * (env.clearance() / offset.norm())
    } else {
        raw_tip + env.surface.normal * depth
    };
    (clamped, classify_contact(&clamped, env))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn env_with(dx: f64, dz: f64) -> Environment {
        Environment::new(&WorldConfig::default(), GoalError { dx, dz }).unwrap()
    }

    #[test]
    fn swept_dx_is_exact() {
        for seed in [0, 1, 99, u64::MAX] {
            assert_eq!(sample_goal_error(seed, 0.010, 0.0).unwrap().dx, 0.0);
        }
        assert_eq!(sample_goal_error(7, 0.010, 0.030).unwrap().dx, 0.030);
    }

    #[test]
    fn goal_error_rejects_bad_sigma() {
        assert!(sample_goal_error(1, f64::NAN, 0.0).is_err());
        assert!(sample_goal_error(1, 0.0, 0.0).is_err());
        assert!(sample_goal_error(1, f64::INFINITY, 0.0).is_err());
    }

    #[test]
    fn dz_sample_stddev_matches_sigma() {
        let n = 100_000u64;
        let draws: Vec<f64> = (0..n).map(|s| sample_goal_error(s, 0.010, 0.0).unwrap().dz).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        assert!((0.0097..=0.0103).contains(&sd), "sample stddev {sd}");
    }

    #[test]
    fn actual_hole_offsets_along_surface_axes() {
        let env = env_with(0.02, -0.003);
        let d = env.actual_hole - env.nominal_hole;
        assert_abs_diff_eq!(d, Vec3::new(0.02, 0.0, -0.003), epsilon = 1e-15);
        assert_abs_diff_eq!(env.goal_error().dx, 0.02, epsilon = 1e-15);
    }

    #[test]
    fn signed_distance_examples() {
        let env = env_with(0.0, 0.0);
        let on = Vec3::new(0.1, 0.2, 0.0);
        assert_eq!(signed_distance(&on, &env), 0.0);
        assert_abs_diff_eq!(signed_distance(&Vec3::new(0.35, 0.0, 0.010), &env), 0.010);
        assert_abs_diff_eq!(signed_distance(&Vec3::new(0.35, 0.0, -0.002), &env), -0.002);
    }

    #[test]
    fn classify_examples() {
        let env = env_with(0.0, 0.0);
        let center = env.actual_hole;
        assert_eq!(
            classify_contact(&(center - Vec3::z() * env.insertion_depth), &env),
            ContactStatus::Inserted
        );
        // 7 mm radial offset against 6 mm clearance, resting on the surface.
        assert_eq!(
            classify_contact(&(center + Vec3::new(0.007, 0.0, 0.0)), &env),
            ContactStatus::SurfaceCollision
        );
        assert_eq!(
            classify_contact(&(center + Vec3::new(0.0, 0.0, 0.05)), &env),
            ContactStatus::Free
        );
        assert_eq!(
            classify_contact(&(center - Vec3::z() * 0.004), &env),
            ContactStatus::InHoleMouth
        );
    }

    #[test]
    fn invalid_geometry_is_rejected() {
        let w = WorldConfig {
            hole_radius: 0.003,
            ..WorldConfig::default()
        };
        assert!(Environment::new(&w, GoalError::default()).is_err());
        let mut w = WorldConfig::default();
        w.nominal_hole.z = 0.01;
        assert!(Environment::new(&w, GoalError::default()).is_err());
        let w = WorldConfig {
            surface_x_axis: Vec3::z(),
            ..WorldConfig::default()
        };
        assert!(Environment::new(&w, GoalError::default()).is_err());
    }

    #[test]
    fn clamp_holds_tip_on_surface() {
        let env = env_with(0.02, 0.0);
        let raw = env.nominal_hole - Vec3::z() * 0.03;
        let (tip, status) = resolve_contact(&raw, ContactStatus::Free, &env);
        assert_eq!(status, ContactStatus::SurfaceCollision);
        assert_abs_diff_eq!(env.depth_below_actual(&tip), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn clamp_keeps_peg_inside_bore() {
        let env = env_with(0.0, 0.0);
        let raw = env.actual_hole + Vec3::new(0.009, 0.0, -0.005);
        let (tip, status) = resolve_contact(&raw, ContactStatus::InHoleMouth, &env);
        assert_eq!(status, ContactStatus::InHoleMouth);
        assert_abs_diff_eq!(env.radial_offset(&tip), env.clearance(), epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn signed_distance_ignores_actual_hole(
            x in -0.5..0.5f64, y in -0.5..0.5f64, z in -0.1..0.3f64,
            dx in -0.03..0.03f64, dz in -0.03..0.03f64, h in -0.01..0.01f64,
        ) {
            let tip = Vec3::new(x, y, z);
            let a = env_with(0.0, 0.0);
            let b = env_with(dx, dz);
            prop_assert_eq!(signed_distance(&tip, &a), signed_distance(&tip, &b));
            // 1-Lipschitz along the normal (exactly unit slope).
            let moved = tip + a.surface.normal * h;
            prop_assert!(((signed_distance(&moved, &a) - signed_distance(&tip, &a)) - h).abs() < 1e-12);
        }

        #[test]
        fn inserted_implies_within_clearance(
            rx in -0.02..0.02f64, ry in -0.02..0.02f64, depth in -0.02..0.03f64,
            dx in -0.03..0.03f64, dz in -0.03..0.03f64,
        ) {
            let env = env_with(dx, dz);
            let tip = env.actual_hole + Vec3::new(rx, ry, -depth);
            if classify_contact(&tip, &env) == ContactStatus::Inserted {
                prop_assert!(env.radial_offset(&tip) <= env.clearance() + 1e-12);
                prop_assert!(env.depth_below_actual(&tip) >= env.insertion_depth - 1e-12);
            }
        }

        #[test]
        fn centered_tip_at_depth_is_inserted(dx in 0.0..0.006f64, dz in -0.03..0.03f64) {
            let env = env_with(dx, dz);
            let tip = env.actual_hole - env.surface.normal * env.insertion_depth;
            prop_assert_eq!(classify_contact(&tip, &env), ContactStatus::Inserted);
        }
    }
}

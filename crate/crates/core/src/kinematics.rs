//! Six-joint revolute arm: forward kinematics from standard Denavit-Hartenberg
//! parameters and positional damped least-squares IK.
//!
//! Only the tip position is solved for. The three redundant joints stay where
//! the seed put them, modulo the damped update.

use nalgebra::{Matrix3, Matrix3x6, Matrix4, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};
use crate::Vec3;

pub type JointVector = Vector6<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    /// Offset along the previous z axis (m).
    pub d: f64,
    /// Common-normal length (m).
    pub a: f64,
    /// Twist about the common normal (rad).
    pub alpha: f64,
    /// Constant added to the joint angle (rad).
    #[serde(default)]
    pub theta_offset: f64,
    pub lower: f64,
    pub upper: f64,
}

impl JointSpec {
    fn new(d: f64, a: f64, alpha: f64) -> Self {
        Self {
            d,
            a,
            alpha,
            theta_offset: 0.0,
            lower: -2.9,
            upper: 2.9,
        }
    }

    fn transform(&self, theta: f64) -> Matrix4<f64> {
        let (st, ct) = (theta + self.theta_offset).sin_cos();
        let (sa, ca) = self.alpha.sin_cos();
        #[rustfmt::skip]
        let t = Matrix4::new(
            ct, -st * ca, st * sa, self.a * ct,
            st, ct * ca, -ct * sa, self.a * st,
            0.0, sa, ca, self.d,
            0.0, 0.0, 0.0, 1.0,
        );
        t
    }

    fn link_length(&self) -> f64 {
        self.a.hypot(self.d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub joints: [JointSpec; 6],
    /// Posture used to seed the first IK solve of an episode.
    pub home: [f64; 6],
}

impl Default for ChainConfig {
    /// Generic 6R arm with roughly 0.6 m reach from the shoulder.
    fn default() -> Self {
        use std::f64::consts::FRAC_PI_2;
        Self {
            joints: [
                JointSpec::new(0.15, 0.0, FRAC_PI_2),
                JointSpec::new(0.0, 0.25, 0.0),
                JointSpec::new(0.0, 0.22, 0.0),
                JointSpec::new(0.0, 0.0, FRAC_PI_2),
                JointSpec::new(0.08, 0.0, -FRAC_PI_2),
                JointSpec::new(0.06, 0.0, 0.0),
            ],
            home: [0.0, 1.0, -1.6, -0.9, 0.4, 0.0],
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        for (i, j) in self.joints.iter().enumerate() {
            let finite = [j.d, j.a, j.alpha, j.theta_offset].iter().all(|v| v.is_finite());
            if !finite {
                return Err(Error::config(format!("joint {i} has non-finite parameters")));
            }
            if j.lower >= j.upper || j.lower.is_nan() || j.upper.is_nan() {
                return Err(Error::config(format!("joint {i} limits must satisfy lower < upper")));
            }
        }
        if self.reach() <= 0.0 {
            return Err(Error::config("chain has zero reach"));
        }
        Ok(())
    }

    /// Sum of link lengths; no tip position lies farther than this from the base.
    pub fn reach(&self) -> f64 {
        self.joints.iter().map(JointSpec::link_length).sum()
    }

    pub fn home(&self) -> JointVector {
        JointVector::from_row_slice(&self.home)
    }

    pub fn clamp(&self, theta: &JointVector) -> JointVector {
        JointVector::from_fn(|i, _| theta[i].clamp(self.joints[i].lower, self.joints[i].upper))
    }
}

/// Joint origins and axes: `origins[i]`/`axes[i]` belong to joint `i`; `origins[6]` is the tip.
struct Frames {
    origins: [Vec3; 7],
    axes: [Vec3; 6],
}

fn frames(theta: &JointVector, chain: &ChainConfig) -> Frames {
    let mut t = Matrix4::identity();
    let mut origins = [Vec3::zeros(); 7];
    let mut axes = [Vec3::z(); 6];
    for (i, joint) in chain.joints.iter().enumerate() {
        origins[i] = t.fixed_view::<3, 1>(0, 3).into_owned();
        axes[i] = t.fixed_view::<3, 1>(0, 2).into_owned();
        t *= joint.transform(theta[i]);
    }
    origins[6] = t.fixed_view::<3, 1>(0, 3).into_owned();
    Frames { origins, axes }
}

/// Tip position.
pub fn fk(theta: &JointVector, chain: &ChainConfig) -> Vec3 {
    frames(theta, chain).origins[6]
}

/// Positional Jacobian `∂tip/∂θ`; column `i` is `zᵢ × (tip - oᵢ)`.
pub fn jacobian(theta: &JointVector, chain: &ChainConfig) -> Matrix3x6<f64> {
    let f = frames(theta, chain);
    let tip = f.origins[6];
    let mut j = Matrix3x6::zeros();
    for i in 0..6 {
        j.set_column(i, &f.axes[i].cross(&(tip - f.origins[i])));
    }
    j
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IkParams {
    pub lambda: f64,
    pub tol: f64,
    pub max_iters: usize,
    /// Largest joint-space step per iteration (rad).
    pub max_step: f64,
}

impl Default for IkParams {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            tol: 1e-5,
            max_iters: 100,
            max_step: 0.5,
        }
    }
}

impl IkParams {
    pub fn validate(&self) -> Result<()> {
        require_positive("ik lambda", self.lambda)?;
        require_positive("ik tol", self.tol)?;
        require_positive("ik max_step", self.max_step)?;
        if self.max_iters == 0 {
            return Err(Error::config("ik max_iters must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkSolution {
    pub theta: JointVector,
    pub iterations: usize,
    pub residual: f64,
}

const MAX_HALVINGS: usize = 30;

/// Damped least squares: `Δθ = Jᵀ(JJᵀ + λ²I)⁻¹ e`, with joint-limit clamping.
///
/// A step is accepted only if it does not increase the residual; otherwise
/// it is halved, so the residual sequence is non-increasing.
pub fn ik_dls(target: &Vec3, seed: &JointVector, chain: &ChainConfig, params: &IkParams) -> Result<IkSolution> {
    let mut theta = chain.clamp(seed);
    let mut error = target - fk(&theta, chain);
    let mut residual = error.norm();
    if !target.iter().all(|c| c.is_finite()) || target.norm() > chain.reach() {
        return Err(Error::Unreachable {
            best_residual: residual,
            iterations: 0,
        });
    }
    let damping = Matrix3::identity() * params.lambda.powi(2);
    let mut iterations = 0;
    while residual > params.tol {
        if iterations == params.max_iters {
            return Err(Error::Unreachable {
                best_residual: residual,
                iterations,
            });
        }
        let mut j = jacobian(&theta, chain);
        let mut step = JointVector::zeros();
        // Joints pinned at a limit and pushed outward are dropped and the step re-solved.
        for _ in 0..6 {
            let jjt = j * j.transpose() + damping;
            let Some(solved) = jjt.cholesky().map(|c| c.solve(&error)) else {
                return Err(Error::Unreachable {
                    best_residual: residual,
                    iterations,
                });
            };
            step = j.transpose() * solved;
            let mut pinned = false;
            for (i, joint) in chain.joints.iter().enumerate() {
                let at_lower = theta[i] <= joint.lower && step[i] < 0.0;
                let at_upper = theta[i] >= joint.upper && step[i] > 0.0;
                if at_lower || at_upper {
                    j.set_column(i, &Vec3::zeros());
                    pinned = true;
                }
            }
            if !pinned {
                break;
            }
        }
        let norm = step.norm();
        if norm > params.max_step {
            step *= params.max_step / norm;
        }
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let candidate = chain.clamp(&(theta + step));
            let cand_error = target - fk(&candidate, chain);
            let cand_residual = cand_error.norm();
            if cand_residual <= residual {
                theta = candidate;
                error = cand_error;
                residual = cand_residual;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        if !accepted {
            return Err(Error::Unreachable {
                best_residual: residual,
                iterations,
            });
        }
    }
    Ok(IkSolution {
        theta,
        iterations,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn base_rotation_negates_horizontal_coordinates() {
        let chain = ChainConfig::default();
        let theta = chain.home();
        let mut turned = theta;
        turned[0] += std::f64::consts::PI;
        let (a, b) = (fk(&theta, &chain), fk(&turned, &chain));
        assert_abs_diff_eq!(b.x, -a.x, epsilon = 1e-12);
        assert_abs_diff_eq!(b.y, -a.y, epsilon = 1e-12);
        assert_abs_diff_eq!(b.z, a.z, epsilon = 1e-12);
    }

    #[test]
    fn fixed_point_needs_no_iterations() {
        let chain = ChainConfig::default();
        let seed = chain.home();
        let sol = ik_dls(&fk(&seed, &chain), &seed, &chain, &IkParams::default()).unwrap();
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.theta, seed);
    }

    #[test]
    fn far_target_is_unreachable() {
        let chain = ChainConfig::default();
        let target = Vec3::new(chain.reach() + 0.01, 0.0, 0.0);
        let err = ik_dls(&target, &chain.home(), &chain, &IkParams::default()).unwrap_err();
        assert!(matches!(err, Error::Unreachable { iterations: 0, .. }));
    }

    #[test]
    fn small_offset_converges_quickly() {
        let chain = ChainConfig::default();
        let seed = chain.home();
        let start = fk(&seed, &chain);
        let params = IkParams {
            lambda: 0.05,
            tol: 1e-5,
            ..IkParams::default()
        };
        for dir in [
            Vec3::x(),
            Vec3::y(),
            Vec3::z(),
            -Vec3::z(),
            Vec3::new(1.0, 1.0, 1.0).normalize(),
        ] {
            let sol = ik_dls(&(start + dir * 0.001), &seed, &chain, &params).unwrap();
            assert!(sol.iterations <= 5, "{} iterations", sol.iterations);
            assert!(sol.residual <= 1e-5);
        }
    }

    #[test]
    fn invalid_limits_rejected() {
        let mut chain = ChainConfig::default();
        chain.joints[2].lower = 1.0;
        chain.joints[2].upper = 1.0;
        assert!(chain.validate().is_err());
    }
}

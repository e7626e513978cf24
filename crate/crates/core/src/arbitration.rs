//! Level-of-autonomy selection from goal uncertainty.
//!
//! The goal lies along the approach normal with Gaussian spread `sigma_e`
//! around the nominal surface. The probability that the tip, at signed
//! distance `d_e` above the nominal surface, has already passed the true
//! surface is the Gaussian tail `½ erfc(d_e / (σ√2))`; the level of autonomy
//! is its complement. Raw values pass through a first-order filter with time
//! constant `xi` before being used for blending.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};
use crate::Vec3;

/// Probability of having reached (and so possibly struck) the uncertain
/// surface when the tip is `d_e` above the nominal one.
pub fn failure_probability(d_e: f64, sigma_e: f64) -> Result<f64> {
    require_positive("sigma_e", sigma_e)?;
    Ok(0.5 * libm::erfc(d_e / (sigma_e * std::f64::consts::SQRT_2)))
}

/// `½[1 + erf(d_e / (σ√2))]`, evaluated as `½ erfc(-x)` to keep precision in the tail.
pub fn loa_erf(d_e: f64, sigma_e: f64) -> Result<f64> {
    require_positive("sigma_e", sigma_e)?;
    Ok(0.5 * libm::erfc(-d_e / (sigma_e * std::f64::consts::SQRT_2)))
}

/// Distance-threshold baseline: `max(0, 1 - d/D)`.
pub fn loa_baseline(d: f64, d_max: f64) -> Result<f64> {
    require_positive("baseline threshold D", d_max)?;
    if !(d.is_finite() && d >= 0.0) {
        return Err(Error::Contract(format!("baseline distance must be >= 0, got {d}")));
    }
    Ok((1.0 - d / d_max).max(0.0))
}

/// How independent failure-mode probabilities combine into one level of autonomy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineRule {
    /// `1 - Π pᵢ`.
    #[default]
    Printed,
    /// `Π (1 - pᵢ)`: autonomy only when every mode is unlikely to fail.
    Complement,
}

pub fn loa_multi(failure_probs: &[f64], rule: CombineRule) -> Result<f64> {
    if failure_probs.is_empty() {
        return Err(Error::config("multi-mode policy needs at least one failure mode"));
    }
    if let Some(p) = failure_probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Contract(format!("failure probability {p} outside [0, 1]")));
    }
    let alpha = match rule {
        CombineRule::Printed => 1.0 - failure_probs.iter().product::<f64>(),
        CombineRule::Complement => failure_probs.iter().map(|p| 1.0 - p).product(),
    };
    Ok(alpha.clamp(0.0, 1.0))
}

/// `q_ref = α·q_m + (1 - α)·q_h`.
pub fn blend(alpha: f64, q_m: &Vec3, q_h: &Vec3) -> Result<Vec3> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Contract(format!("level of autonomy {alpha} outside [0, 1]")));
    }
    Ok(q_m * alpha + q_h * (1.0 - alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArbitrationState {
    pub alpha: f64,
    pub alpha_raw_last: f64,
}

impl ArbitrationState {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            alpha_raw_last: alpha,
        }
    }
}

/// One exact step of `ξ·α̇ + α = α_raw` with `α_raw` held over `dt`.
pub fn loa_filter_step(state: ArbitrationState, alpha_raw: f64, dt: f64, xi: f64) -> ArbitrationState {
    debug_assert!(dt > 0.0 && xi > 0.0);
    let decay = (-dt / xi).exp();
    ArbitrationState {
        alpha: alpha_raw + (state.alpha - alpha_raw) * decay,
        alpha_raw_last: alpha_raw,
    }
}

/// Largest per-tick change the filter allows for inputs in `[0, 1]`.
pub fn filter_step_bound(dt: f64, xi: f64) -> f64 {
    1.0 - (-dt / xi).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FailureMode {
    /// Gaussian surface-encounter mode; `sigma_e` defaults to the policy's.
    SurfaceEncounter {
        #[serde(default)]
        sigma_e: Option<f64>,
    },
    /// A fixed failure probability, e.g. a planner known to be unreliable.
    Constant { p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Policy {
    Erf,
    DistanceBaseline {
        d_max: f64,
    },
    MultiMode {
        modes: Vec<FailureMode>,
        #[serde(default)]
        rule: CombineRule,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArbitrationParams {
    pub sigma_e: f64,
    pub xi: f64,
    /// When false the raw policy output is used directly.
    pub filtered: bool,
    pub policy: Policy,
    /// Rate at which the raw policy is re-evaluated (zero-order hold between
    /// updates). `None` evaluates it every tick.
    pub rate_hz: Option<f64>,
    /// Standard deviation of zero-mean noise on each distance measurement (m).
    pub distance_noise: f64,
}

impl Default for ArbitrationParams {
    fn default() -> Self {
        Self {
            sigma_e: 0.010,
            xi: 0.08,
            filtered: true,
            policy: Policy::Erf,
            rate_hz: None,
            distance_noise: 0.0,
        }
    }
}

impl ArbitrationParams {
    pub fn validate(&self) -> Result<()> {
        require_positive("arbitration sigma_e", self.sigma_e)?;
        require_positive("xi", self.xi)?;
        if let Some(rate) = self.rate_hz {
            require_positive("arbitration rate_hz", rate)?;
        }
        if !(self.distance_noise.is_finite() && self.distance_noise >= 0.0) {
            return Err(Error::config("distance_noise must be finite and >= 0"));
        }
        match &self.policy {
            Policy::Erf => {}
            Policy::DistanceBaseline { d_max } => require_positive("d_max", *d_max)?,
            Policy::MultiMode { modes, .. } => {
                if modes.is_empty() {
                    return Err(Error::config("multi-mode policy needs at least one failure mode"));
                }
                for m in modes {
                    match m {
                        FailureMode::SurfaceEncounter { sigma_e: Some(s) } => {
                            require_positive("failure mode sigma_e", *s)?
                        }
                        FailureMode::Constant { p } if !(0.0..=1.0).contains(p) => {
                            return Err(Error::config(format!(
                                "constant failure probability {p} outside [0, 1]"
                            )))
                        }
                        _ => {}
                    }
                }
            }
        }
        Ok(())
    }

    /// Unfiltered policy output for a tip at signed distance `d_e` from the
    /// nominal surface and Euclidean distance `goal_distance` from the nominal goal.
    pub fn raw_alpha(&self, d_e: f64, goal_distance: f64) -> Result<f64> {
        match &self.policy {
            Policy::Erf => loa_erf(d_e, self.sigma_e),
            Policy::DistanceBaseline { d_max } => loa_baseline(goal_distance, *d_max),
            Policy::MultiMode { modes, rule } => {
                let probs = modes
                    .iter()
                    .map(|m| match m {
                        FailureMode::SurfaceEncounter { sigma_e } => {
                            failure_probability(d_e, sigma_e.unwrap_or(self.sigma_e))
                        }
                        FailureMode::Constant { p } => Ok(*p),
                    })
                    .collect::<Result<Vec<_>>>()?;
                loa_multi(&probs, *rule)
            }
        }
    }
}

/// Owns the filtered level of autonomy for one episode.
#[derive(Debug, Clone)]
pub struct Arbiter {
    params: ArbitrationParams,
    state: ArbitrationState,
    held_raw: Option<f64>,
    next_update: f64,
    noise: Option<(Normal<f64>, ChaCha8Rng)>,
}

impl Arbiter {
    /// `noise_seed` drives the distance-measurement noise, if any.
    pub fn new(params: ArbitrationParams, initial_alpha: f64, noise_seed: u64) -> Result<Self> {
        params.validate()?;
        let noise = (params.distance_noise > 0.0).then(|| {
            let normal = Normal::new(0.0, params.distance_noise).expect("validated noise level");
            (normal, ChaCha8Rng::seed_from_u64(noise_seed))
        });
        Ok(Self {
            params,
            state: ArbitrationState::new(initial_alpha.clamp(0.0, 1.0)),
            held_raw: None,
            next_update: 0.0,
            noise,
        })
    }

    pub fn state(&self) -> ArbitrationState {
        self.state
    }

    pub fn params(&self) -> &ArbitrationParams {
        &self.params
    }

    /// Advances the arbiter to time `t` and returns the level of autonomy.
    pub fn update(&mut self, t: f64, dt: f64, d_e: f64, goal_distance: f64) -> Result<f64> {
        let raw = match self.held_raw {
            Some(held) if t + 1e-12 < self.next_update => held,
            _ => {
                let (d_e, goal_distance) = match &mut self.noise {
                    Some((normal, rng)) => {
                        let n = normal.sample(rng);
                        (d_e + n, (goal_distance + n).max(0.0))
                    }
                    None => (d_e, goal_distance),
                };
                let raw = self.params.raw_alpha(d_e, goal_distance)?;
                if let Some(rate) = self.params.rate_hz {
                    self.next_update = t + 1.0 / rate;
                    self.held_raw = Some(raw);
                }
                raw
            }
        };
        self.state = if self.params.filtered {
            loa_filter_step(self.state, raw, dt, self.params.xi)
        } else {
            ArbitrationState::new(raw)
        };
        Ok(self.state.alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const SIGMA: f64 = 0.010;

    #[test]
    fn failure_probability_examples() {
        assert_eq!(failure_probability(0.0, SIGMA).unwrap(), 0.5);
        // 1 - Φ(1) and Φ(1).
        assert_abs_diff_eq!(
            failure_probability(SIGMA, SIGMA).unwrap(),
            0.158_655_253_931_457_05,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            failure_probability(-SIGMA, SIGMA).unwrap(),
            0.841_344_746_068_542_9,
            epsilon = 1e-12
        );
        assert!(failure_probability(0.0, 0.0).is_err());
        assert!(failure_probability(0.0, -1.0).is_err());
    }

    #[test]
    fn loa_erf_examples() {
        assert_eq!(loa_erf(0.0, SIGMA).unwrap(), 0.5);
        // Φ(3).
        assert_abs_diff_eq!(
            loa_erf(3.0 * SIGMA, SIGMA).unwrap(),
            0.998_650_101_968_369_9,
            epsilon = 1e-12
        );
        assert!(loa_erf(8.0 * SIGMA, SIGMA).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn baseline_examples() {
        assert_eq!(loa_baseline(0.0, 0.1).unwrap(), 1.0);
        assert_eq!(loa_baseline(0.1, 0.1).unwrap(), 0.0);
        assert_eq!(loa_baseline(0.05, 0.1).unwrap(), 0.5);
        assert_eq!(loa_baseline(0.5, 0.1).unwrap(), 0.0);
        assert!(loa_baseline(0.05, 0.0).is_err());
        assert!(loa_baseline(-0.01, 0.1).is_err());
    }

    #[test]
    fn multi_mode_examples() {
        assert_abs_diff_eq!(loa_multi(&[0.3], CombineRule::Printed).unwrap(), 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(
            loa_multi(&[1.0, 0.2], CombineRule::Printed).unwrap(),
            0.8,
            epsilon = 1e-15
        );
        assert_eq!(loa_multi(&[0.5, 0.5], CombineRule::Printed).unwrap(), 0.75);
        assert_eq!(loa_multi(&[0.5, 0.5], CombineRule::Complement).unwrap(), 0.25);
        assert!(matches!(loa_multi(&[], CombineRule::Printed), Err(Error::Config(_))));
        assert!(loa_multi(&[1.2], CombineRule::Printed).is_err());
    }

    #[test]
    fn filter_examples() {
        let s = ArbitrationState::new(0.3);
        assert_eq!(loa_filter_step(s, 0.3, 0.001, 0.08).alpha, 0.3);

        let xi = 0.08;
        let dt = 0.001;
        let mut s = ArbitrationState::new(0.0);
        for _ in 0..80 {
            s = loa_filter_step(s, 1.0, dt, xi);
        }
        assert_abs_diff_eq!(s.alpha, 1.0 - (-1.0f64).exp(), epsilon = 1e-9);
        for _ in 0..160 {
            s = loa_filter_step(s, 1.0, dt, xi);
        }
        assert_abs_diff_eq!(s.alpha, 0.950_212_931_632_136, epsilon = 1e-9);
    }

    #[test]
    fn blend_examples() {
        let m = Vec3::new(1.0, 0.0, 0.0);
        let h = Vec3::zeros();
        assert_eq!(blend(1.0, &m, &h).unwrap(), m);
        assert_eq!(blend(0.0, &m, &h).unwrap(), h);
        assert_eq!(blend(0.25, &m, &h).unwrap(), Vec3::new(0.25, 0.0, 0.0));
        assert!(matches!(blend(1.5, &m, &h), Err(Error::Contract(_))));
        assert!(blend(f64::NAN, &m, &h).is_err());
    }

    #[test]
    fn decimated_arbiter_holds_raw_value() {
        let params = ArbitrationParams {
            filtered: false,
            rate_hz: Some(20.0),
            ..Default::default()
        };
        let mut arb = Arbiter::new(params, 1.0, 0).unwrap();
        let a0 = arb.update(0.0, 0.001, 0.0, 0.0).unwrap();
        assert_eq!(a0, 0.5);
        // Within the 50 ms hold the new distance is ignored.
        assert_eq!(arb.update(0.010, 0.001, 0.05, 0.0).unwrap(), 0.5);
        let later = arb.update(0.050, 0.001, 0.05, 0.0).unwrap();
        assert!(later > 0.99);
    }

    proptest! {
        #[test]
        fn complementary(d in -0.1..0.1f64, sigma in 1e-4..0.1f64) {
            let sum = loa_erf(d, sigma).unwrap() + failure_probability(d, sigma).unwrap();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn monotone_in_distance(mut ds in proptest::collection::vec(-0.08..0.08f64, 2..50)) {
            ds.sort_by(f64::total_cmp);
            let alphas: Vec<f64> = ds.iter().map(|d| loa_erf(*d, SIGMA).unwrap()).collect();
            prop_assert!(alphas.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn filter_change_is_bounded(a in 0.0..=1.0f64, raw in 0.0..=1.0f64, dt in 1e-5..0.1f64, xi in 0.01..1.0f64) {
            let next = loa_filter_step(ArbitrationState::new(a), raw, dt, xi);
            prop_assert!((0.0..=1.0).contains(&next.alpha));
            prop_assert!((next.alpha - a).abs() <= filter_step_bound(dt, xi) + 1e-15);
        }

        #[test]
        fn blend_is_idempotent_for_equal_inputs(alpha in 0.0..=1.0f64, x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64) {
            let q = Vec3::new(x, y, z);
            let out = blend(alpha, &q, &q).unwrap();
            prop_assert!((out - q).norm() <= 1e-15);
        }
    }
}

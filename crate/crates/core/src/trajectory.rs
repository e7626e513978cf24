//! Offline machine trajectory: waypoints rounded with cubic Bezier blends,
//! time-scaled along total arc length by a single trapezoidal speed profile.
//!
//! Inside a blend the path curves, so the Cartesian acceleration there has a
//! centripetal part `v²/ρ` that the profile does not bound. Only the
//! tangential (profile) acceleration is limited by `a_max`.

use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Limits {
    pub v_max: f64,
    pub a_max: f64,
    #[serde(default)]
    pub v_endpoints: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            v_max: 0.2,
            a_max: 2.0,
            v_endpoints: 0.0,
        }
    }
}

impl Limits {
    pub fn validate(&self) -> Result<()> {
        require_positive("v_max", self.v_max)?;
        require_positive("a_max", self.a_max)?;
        if self.v_endpoints != 0.0 {
            return Err(Error::config(
                "only rest-to-rest profiles are supported (v_endpoints = 0)",
            ));
        }
        Ok(())
    }
}

/// Rest-to-rest trapezoidal (or triangular) speed profile over a path length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapezoidProfile {
    pub length: f64,
    pub accel: f64,
    pub peak_speed: f64,
    pub t_accel: f64,
    pub t_cruise: f64,
}

impl TrapezoidProfile {
    pub fn new(length: f64, limits: &Limits) -> Self {
        let (a, v) = (limits.a_max, limits.v_max);
        if length * a >= v * v {
            let t_accel = v / a;
            Self {
                length,
                accel: a,
                peak_speed: v,
                t_accel,
                t_cruise: (length - v * v / a) / v,
            }
        } else {
            let t_accel = (length / a).sqrt();
            Self {
                length,
                accel: a,
                peak_speed: a * t_accel,
                t_accel,
                t_cruise: 0.0,
            }
        }
    }

    pub fn duration(&self) -> f64 {
        2.0 * self.t_accel + self.t_cruise
    }

    /// Arc length travelled at time `t`, clamped to `[0, length]`.
    pub fn position(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        let tf = self.duration();
        if t >= tf {
            return self.length;
        }
        let (a, ta) = (self.accel, self.t_accel);
        let s = if t < ta {
            0.5 * a * t * t
        } else if t < ta + self.t_cruise {
            0.5 * a * ta * ta + self.peak_speed * (t - ta)
        } else {
            let r = tf - t;
            self.length - 0.5 * a * r * r
        };
        s.clamp(0.0, self.length)
    }

    pub fn speed(&self, t: f64) -> f64 {
        let tf = self.duration();
        if t <= 0.0 || t >= tf {
            return 0.0;
        }
        if t < self.t_accel {
            self.accel * t
        } else if t < self.t_accel + self.t_cruise {
            self.peak_speed
        } else {
            self.accel * (tf - t)
        }
    }
}

/// Ordered waypoints; the last one is the nominal goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Waypoints(pub Vec<Vec3>);

impl Waypoints {
    pub fn validate(&self) -> Result<()> {
        if self.0.len() < 2 {
            return Err(Error::Planning("at least two waypoints are required".into()));
        }
        if self.0.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::Planning("waypoints must be finite".into()));
        }
        for (i, w) in self.0.windows(2).enumerate() {
            if (w[1] - w[0]).norm() < 1e-9 {
                return Err(Error::Planning(format!("waypoints {i} and {} coincide", i + 1)));
            }
        }
        Ok(())
    }

    pub fn last(&self) -> Vec3 {
        *self.0.last().expect("validated waypoints are non-empty")
    }
}

// 8-point Gauss-Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

const BEZIER_TABLE: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Bezier {
    ctrl: [Vec3; 4],
    /// Cumulative arc length at `u = i / BEZIER_TABLE`.
    table: Vec<f64>,
}

impl Bezier {
    fn new(ctrl: [Vec3; 4]) -> Self {
        let mut b = Self {
            ctrl,
            table: Vec::with_capacity(BEZIER_TABLE + 1),
        };
        let mut acc = 0.0;
        b.table.push(0.0);
        for i in 0..BEZIER_TABLE {
            let u0 = i as f64 / BEZIER_TABLE as f64;
            let u1 = (i + 1) as f64 / BEZIER_TABLE as f64;
            acc += b.arc(u0, u1);
            b.table.push(acc);
        }
        b
    }

    fn point(&self, u: f64) -> Vec3 {
        let [p0, p1, p2, p3] = self.ctrl;
        let v = 1.0 - u;
        p0 * (v * v * v) + p1 * (3.0 * v * v * u) + p2 * (3.0 * v * u * u) + p3 * (u * u * u)
    }

    fn derivative(&self, u: f64) -> Vec3 {
        let [p0, p1, p2, p3] = self.ctrl;
        let v = 1.0 - u;
        (p1 - p0) * (3.0 * v * v) + (p2 - p1) * (6.0 * v * u) + (p3 - p2) * (3.0 * u * u)
    }

    fn arc(&self, u0: f64, u1: f64) -> f64 {
        let half = 0.5 * (u1 - u0);
        let mid = 0.5 * (u1 + u0);
        GL_NODES
            .iter()
            .zip(GL_WEIGHTS.iter())
            .map(|(x, w)| w * self.derivative(mid + half * x).norm())
            .sum::<f64>()
            * half
    }

    fn length(&self) -> f64 {
        self.table[BEZIER_TABLE]
    }

    /// Curve parameter at arc length `s`, by table bracketing and Newton steps.
    fn param_at(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.length());
        let i = match self.table.binary_search_by(|x| x.total_cmp(&s)) {
            Ok(i) => return i as f64 / BEZIER_TABLE as f64,
            Err(i) => i.saturating_sub(1).min(BEZIER_TABLE - 1),
        };
        let lo = i as f64 / BEZIER_TABLE as f64;
        let hi = (i + 1) as f64 / BEZIER_TABLE as f64;
        let (s_lo, s_hi) = (self.table[i], self.table[i + 1]);
        let mut u = lo + (hi - lo) * (s - s_lo) / (s_hi - s_lo);
        for _ in 0..8 {
            let err = s_lo + self.arc(lo, u) - s;
            let speed = self.derivative(u).norm();
            if speed <= 0.0 {
                break;
            }
            let next = (u - err / speed).clamp(lo, hi);
            let done = (next - u).abs() < 1e-15;
            u = next;
            if done {
                break;
            }
        }
        u
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Segment {
    Line { from: Vec3, to: Vec3 },
    Blend(Bezier),
}

impl Segment {
    fn length(&self) -> f64 {
        match self {
            Segment::Line { from, to } => (to - from).norm(),
            Segment::Blend(b) => b.length(),
        }
    }

    fn point(&self, s: f64) -> Vec3 {
        match self {
            Segment::Line { from, to } => {
                let len = (to - from).norm();
                from + (to - from) * (s / len).clamp(0.0, 1.0)
            }
            Segment::Blend(b) => b.point(b.param_at(s)),
        }
    }

    fn tangent(&self, s: f64) -> Vec3 {
        match self {
            Segment::Line { from, to } => (to - from).normalize(),
            Segment::Blend(b) => b.derivative(b.param_at(s)).normalize(),
        }
    }

    fn is_straight(&self) -> bool {
        matches!(self, Segment::Line { .. })
    }
}

/// Time-parameterized machine path `q_m(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedTrajectory {
    segments: Vec<Segment>,
    /// Arc length at the start of each segment, plus the total at the end.
    offsets: Vec<f64>,
    profile: TrapezoidProfile,
    start: Vec3,
    end: Vec3,
    limits: Limits,
}

/// Plans a rest-to-rest trajectory through `waypoints`.
pub fn plan(waypoints: &Waypoints, limits: &Limits, corner_radius: f64) -> Result<TimedTrajectory> {
    waypoints.validate()?;
    limits.validate()?;
    if !(corner_radius.is_finite() && corner_radius >= 0.0) {
        return Err(Error::Planning("corner radius must be finite and non-negative".into()));
    }
    let pts = &waypoints.0;
    let shortest = pts
        .windows(2)
        .map(|w| (w[1] - w[0]).norm())
        .fold(f64::INFINITY, f64::min);
    if pts.len() > 2 && corner_radius > 0.0 && corner_radius >= 0.5 * shortest {
        return Err(Error::Planning(format!(
            "corner radius {corner_radius} m must be below half the shortest segment ({shortest} m)"
        )));
    }

    let mut segments = Vec::with_capacity(2 * pts.len());
    let mut cursor = pts[0];
    for i in 1..pts.len() - 1 {
        let (prev, here, next) = (pts[i - 1], pts[i], pts[i + 1]);
        let u_in = (here - prev).normalize();
        let u_out = (next - here).normalize();
        if corner_radius == 0.0 || (u_in - u_out).norm() < 1e-12 {
            segments.push(Segment::Line { from: cursor, to: here });
            cursor = here;
            continue;
        }
        let a = here - u_in * corner_radius;
        let b = here + u_out * corner_radius;
        segments.push(Segment::Line { from: cursor, to: a });
        let third = corner_radius / 3.0;
        segments.push(Segment::Blend(Bezier::new([
            a,
            here - u_in * third,
            here + u_out * third,
            b,
        ])));
        cursor = b;
    }
    segments.push(Segment::Line {
        from: cursor,
        to: waypoints.last(),
    });

    let mut offsets = Vec::with_capacity(segments.len() + 1);
    let mut total = 0.0;
    for seg in &segments {
        offsets.push(total);
        total += seg.length();
    }
    offsets.push(total);

    Ok(TimedTrajectory {
        segments,
        offsets,
        profile: TrapezoidProfile::new(total, limits),
        start: pts[0],
        end: waypoints.last(),
        limits: *limits,
    })
}

impl TimedTrajectory {
    pub fn duration(&self) -> f64 {
        self.profile.duration()
    }

    pub fn length(&self) -> f64 {
        self.profile.length
    }

    pub fn profile(&self) -> &TrapezoidProfile {
        &self.profile
    }

    pub fn limits(&self) -> &Limits {
        &self.limits
    }

    pub fn start(&self) -> Vec3 {
        self.start
    }

    pub fn end(&self) -> Vec3 {
        self.end
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let idx = match self.offsets.binary_search_by(|x| x.total_cmp(&s)) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        }
        .min(self.segments.len() - 1);
        (idx, s - self.offsets[idx])
    }

    pub fn point_at_length(&self, s: f64) -> Vec3 {
        if s >= self.length() {
            return self.end;
        }
        if s <= 0.0 {
            return self.start;
        }
        let (i, local) = self.locate(s);
        self.segments[i].point(local)
    }

    pub fn tangent_at_length(&self, s: f64) -> Vec3 {
        let (i, local) = self.locate(s.clamp(0.0, self.length()));
        self.segments[i].tangent(local)
    }

    /// Whether arc length `s` lies on a straight (unblended) piece.
    pub fn is_straight_at(&self, s: f64) -> bool {
        let (i, _) = self.locate(s.clamp(0.0, self.length()));
        self.segments[i].is_straight()
    }

    /// `q_m(min(t, t_f))`.
    pub fn sample(&self, t: f64) -> Vec3 {
        if t >= self.duration() {
            return self.end;
        }
        self.point_at_length(self.profile.position(t))
    }

    pub fn velocity(&self, t: f64) -> Vec3 {
        let s = self.profile.position(t);
        self.tangent_at_length(s) * self.profile.speed(t)
    }
}

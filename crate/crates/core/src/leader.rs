//! Leader (exosystem) reference profiles.
//!
//! Every profile is evaluated analytically, so position, velocity and the
//! command `u0` are exact derivatives of one another.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Leader position, velocity and command input at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderState {
    pub position: DVector<f64>,
    pub velocity: DVector<f64>,
    pub command: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Clamped cubic spline through all waypoints, zero velocity at both ends.
    #[default]
    Spline,
    /// Minimum-jerk quintic per segment; the leader comes to rest at every
    /// waypoint. Repeating a waypoint produces a dwell.
    RestToRest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaypointPath {
    pub points: Vec<Vec<f64>>,
    pub times: Vec<f64>,
    #[serde(default)]
    pub interpolation: Interpolation,
    /// Second derivatives at the knots, per coordinate. Only used by `Spline`.
    #[serde(skip)]
    moments: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LeaderProfile {
    /// Uniform motion on a horizontal circle; extra coordinates stay at `center`.
    Circle {
        center: Vec<f64>,
        radius: f64,
        rate: f64,
        phase: f64,
    },
    /// Constant velocity, zero command.
    ConstantVelocity {
        origin: Vec<f64>,
        velocity: Vec<f64>,
    },
    WaypointPath(WaypointPath),
}

impl WaypointPath {
    pub fn new(points: Vec<Vec<f64>>, times: Vec<f64>, interpolation: Interpolation) -> Result<Self> {
        let mut path = Self {
            points,
            times,
            interpolation,
            moments: Vec::new(),
        };
        path.prepare()?;
        Ok(path)
    }

    /// Evenly spaced visit times over `[0, duration]`.
    pub fn evenly_timed(points: Vec<Vec<f64>>, duration: f64, interpolation: Interpolation) -> Result<Self> {
        let m = points.len();
        let times = if m <= 1 {
            vec![0.0; m]
        } else {
            (0..m).map(|k| duration * k as f64 / (m - 1) as f64).collect()
        };
        Self::new(points, times, interpolation)
    }

    pub fn total_duration(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub(crate) fn prepare(&mut self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::Config("waypoint path has no waypoints".into()));
        }
        if self.points.len() != self.times.len() {
            return Err(Error::Config(format!(
                "{} waypoints but {} visit times",
                self.points.len(),
                self.times.len()
            )));
        }
        let dim = self.points[0].len();
        if dim == 0 || self.points.iter().any(|p| p.len() != dim) {
            return Err(Error::Config("waypoints must share a positive dimension".into()));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("waypoint times must be strictly increasing".into()));
        }
        self.moments = match self.interpolation {
            Interpolation::Spline => (0..dim)
                .map(|d| {
                    let ys: Vec<f64> = self.points.iter().map(|p| p[d]).collect();
                    clamped_spline_moments(&self.times, &ys)
                })
                .collect(),
            Interpolation::RestToRest => Vec::new(),
        };
        Ok(())
    }

    fn dim(&self) -> usize {
        self.points[0].len()
    }

    fn evaluate(&self, t: f64) -> LeaderState {
        let dim = self.dim();
        let m = self.points.len();
        let at_rest = |p: &[f64]| LeaderState {
            position: DVector::from_column_slice(p),
            velocity: DVector::zeros(dim),
            command: DVector::zeros(dim),
        };
        if m == 1 || t <= self.times[0] {
            return at_rest(&self.points[0]);
        }
        if t >= self.times[m - 1] {
            return at_rest(&self.points[m - 1]);
        }
        // Segment k covers [times[k], times[k+1]).
        let k = self.times.partition_point(|&tk| tk <= t) - 1;
        let h = self.times[k + 1] - self.times[k];
        let s = t - self.times[k];
        let (y0, y1) = (&self.points[k], &self.points[k + 1]);

        let mut out = at_rest(y0);
        match self.interpolation {
            Interpolation::Spline => {
                let a = h - s;
                for d in 0..dim {
                    let (m0, m1) = (self.moments[d][k], self.moments[d][k + 1]);
                    let c0 = y0[d] / h - m0 * h / 6.0;
                    let c1 = y1[d] / h - m1 * h / 6.0;
                    out.position[d] = m0 * a.powi(3) / (6.0 * h) + m1 * s.powi(3) / (6.0 * h) + c0 * a + c1 * s;
                    out.velocity[d] = -m0 * a * a / (2.0 * h) + m1 * s * s / (2.0 * h) - c0 + c1;
                    out.command[d] = m0 * a / h + m1 * s / h;
                }
            }
            Interpolation::RestToRest => {
                let tau = s / h;
                let (t2, t3, t4, t5) = (tau * tau, tau.powi(3), tau.powi(4), tau.powi(5));
                let shape = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
                let dshape = (30.0 * t2 - 60.0 * t3 + 30.0 * t4) / h;
                let ddshape = (60.0 * tau - 180.0 * t2 + 120.0 * t3) / (h * h);
                for d in 0..dim {
                    let delta = y1[d] - y0[d];
                    out.position[d] = y0[d] + delta * shape;
                    out.velocity[d] = delta * dshape;
                    out.command[d] = delta * ddshape;
                }
            }
        }
        out
    }
}

/// Knot second derivatives of the cubic spline with zero slope at both ends.
fn clamped_spline_moments(t: &[f64], y: &[f64]) -> Vec<f64> {
    let m = t.len();
    if m < 2 {
        return vec![0.0; m];
    }
    let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    let mut lower = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    let mut rhs = vec![0.0; m];

    diag[0] = 2.0 * h[0];
    upper[0] = h[0];
    rhs[0] = 6.0 * (y[1] - y[0]) / h[0];
    for k in 1..m - 1 {
        lower[k] = h[k - 1];
        diag[k] = 2.0 * (h[k - 1] + h[k]);
        upper[k] = h[k];
        rhs[k] = 6.0 * ((y[k + 1] - y[k]) / h[k] - (y[k] - y[k - 1]) / h[k - 1]);
    }
    lower[m - 1] = h[m - 2];
    diag[m - 1] = 2.0 * h[m - 2];
    rhs[m - 1] = -6.0 * (y[m - 1] - y[m - 2]) / h[m - 2];

    // Thomas algorithm; the system is strictly diagonally dominant.
    for k in 1..m {
        let w = lower[k] / diag[k - 1];
        diag[k] -= w * upper[k - 1];
        rhs[k] -= w * rhs[k - 1];
    }
    let mut moments = vec![0.0; m];
    moments[m - 1] = rhs[m - 1] / diag[m - 1];
    for k in (0..m - 1).rev() {
        moments[k] = (rhs[k] - upper[k] * moments[k + 1]) / diag[k];
    }
    moments
}

impl LeaderProfile {
    /// Horizontal circle passing through `position` with initial `velocity`.
    /// The angular rate is chosen so the speed matches `|velocity|`.
    pub fn circle_through(position: &[f64], velocity: &[f64], radius: f64) -> Result<Self> {
        if position.len() < 2 || position.len() != velocity.len() {
            return Err(Error::Config("circle needs matching position/velocity of dimension >= 2".into()));
        }
        if !(radius > 0.0) {
            return Err(Error::Config("circle radius must be positive".into()));
        }
        let speed = velocity[0].hypot(velocity[1]);
        if !(speed > 0.0) {
            return Err(Error::Config("circle needs a nonzero planar velocity".into()));
        }
        let (dx, dy) = (velocity[0] / speed, velocity[1] / speed);
        // Tangent at phase p is (-sin p, cos p).
        let phase = (-dx).atan2(dy);
        let mut center = position.to_vec();
        center[0] -= radius * phase.cos();
        center[1] -= radius * phase.sin();
        Ok(LeaderProfile::Circle {
            center,
            radius,
            rate: speed / radius,
            phase,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            LeaderProfile::Circle { center, .. } => center.len(),
            LeaderProfile::ConstantVelocity { origin, .. } => origin.len(),
            LeaderProfile::WaypointPath(p) => p.dim(),
        }
    }

    /// Checks internal consistency and rebuilds cached spline data. Call after deserializing.
    pub fn prepare(&mut self) -> Result<()> {
        match self {
            LeaderProfile::Circle { center, radius, .. } => {
                if center.len() < 2 || !(*radius > 0.0) {
                    return Err(Error::Config("circle needs dimension >= 2 and positive radius".into()));
                }
                Ok(())
            }
            LeaderProfile::ConstantVelocity { origin, velocity } => {
                if origin.is_empty() || origin.len() != velocity.len() {
                    return Err(Error::Config("constant-velocity origin/velocity dimensions differ".into()));
                }
                Ok(())
            }
            LeaderProfile::WaypointPath(p) => p.prepare(),
        }
    }

    pub fn leader_state(&self, t: f64) -> LeaderState {
        match self {
            LeaderProfile::Circle {
                center,
                radius,
                rate,
                phase,
            } => {
                let theta = phase + rate * t;
                let (s, c) = theta.sin_cos();
                let dim = center.len();
                let mut position = DVector::from_column_slice(center);
                let mut velocity = DVector::zeros(dim);
                let mut command = DVector::zeros(dim);
                position[0] += radius * c;
                position[1] += radius * s;
                velocity[0] = -radius * rate * s;
                velocity[1] = radius * rate * c;
                command[0] = -radius * rate * rate * c;
                command[1] = -radius * rate * rate * s;
                LeaderState {
                    position,
                    velocity,
                    command,
                }
            }
            LeaderProfile::ConstantVelocity { origin, velocity } => {
                let v = DVector::from_column_slice(velocity);
                LeaderState {
                    position: DVector::from_column_slice(origin) + &v * t,
                    command: DVector::zeros(v.len()),
                    velocity: v,
                }
            }
            LeaderProfile::WaypointPath(p) => p.evaluate(t),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_path(seed: u64, interpolation: Interpolation) -> LeaderProfile {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = (0..4)
            .map(|_| {
                vec![
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                    rng.random_range(1.0..20.0),
                ]
            })
            .collect();
        LeaderProfile::WaypointPath(WaypointPath::evenly_timed(points, 40.0, interpolation).unwrap())
    }

    #[test]
    fn zero_command_is_straight_line() {
        let l = LeaderProfile::ConstantVelocity {
            origin: vec![1.0, 2.0, 3.0],
            velocity: vec![0.5, -1.0, 0.0],
        };
        let s = l.leader_state(4.0);
        assert_eq!(s.position.as_slice(), &[3.0, -2.0, 3.0]);
        assert_eq!(s.command.norm(), 0.0);
    }

    #[test]
    fn single_waypoint_is_static() {
        let p = WaypointPath::evenly_timed(vec![vec![1.0, 2.0, 3.0]], 40.0, Interpolation::Spline).unwrap();
        let l = LeaderProfile::WaypointPath(p);
        for t in [0.0, 3.0, 100.0] {
            let s = l.leader_state(t);
            assert_eq!(s.position.as_slice(), &[1.0, 2.0, 3.0]);
            assert_eq!(s.velocity.norm(), 0.0);
            assert_eq!(s.command.norm(), 0.0);
        }
    }

    #[test]
    fn empty_waypoints_rejected() {
        assert!(matches!(
            WaypointPath::evenly_timed(vec![], 40.0, Interpolation::Spline),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn spline_visits_waypoints_and_rests_at_ends() {
        let l = random_path(3, Interpolation::Spline);
        let LeaderProfile::WaypointPath(p) = &l else { unreachable!() };
        for (pt, &t) in p.points.iter().zip(&p.times) {
            let s = l.leader_state(t);
            for (a, b) in s.position.iter().zip(pt) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-10);
            }
        }
        assert_abs_diff_eq!(l.leader_state(0.0).velocity.norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l.leader_state(40.0 - 1e-9).velocity.norm(), 0.0, epsilon = 1e-6);
        assert_eq!(l.leader_state(55.0).position.as_slice(), p.points[3].as_slice());
    }

    #[test]
    fn forward_difference_matches_velocity() {
        let h = 1e-6;
        for interp in [Interpolation::Spline, Interpolation::RestToRest] {
            let l = random_path(11, interp);
            for k in 1..40 {
                let t = k as f64 - 0.37;
                let a = l.leader_state(t);
                let b = l.leader_state(t + h);
                let fd = (&b.position - &a.position) / h;
                // O(h) truncation, bounded by |u0| h / 2 plus rounding.
                assert!((fd - &a.velocity).norm() < 1e-4, "t = {t}");
            }
        }
    }

    #[test]
    fn centered_differences_second_order() {
        let circle = LeaderProfile::circle_through(&[5.0, 2.0, 10.0], &[0.0039, -0.9836, 0.0], 5.0).unwrap();
        for l in [circle, random_path(5, Interpolation::Spline), random_path(6, Interpolation::RestToRest)] {
            for k in 1..30 {
                let t = 1.3 * k as f64 + 0.11;
                let err = |h: f64| {
                    let (a, b) = (l.leader_state(t - h), l.leader_state(t + h));
                    let s = l.leader_state(t);
                    let dv = ((&b.position - &a.position) / (2.0 * h) - &s.velocity).norm();
                    let da = ((&b.velocity - &a.velocity) / (2.0 * h) - &s.command).norm();
                    (dv, da)
                };
                let (dv, da) = err(1e-3);
                assert!(dv < 1e-5 && da < 1e-4, "t={t} dv={dv} da={da}");
            }
        }
    }

    #[test]
    fn circle_matches_initial_condition() {
        let v0 = [0.0039, -0.9836, 0.0];
        let l = LeaderProfile::circle_through(&[5.0, 2.0, 10.0], &v0, 5.0).unwrap();
        let s = l.leader_state(0.0);
        for d in 0..3 {
            assert_abs_diff_eq!(s.position[d], [5.0, 2.0, 10.0][d], epsilon = 1e-12);
            assert_abs_diff_eq!(s.velocity[d], v0[d], epsilon = 1e-12);
        }
        // bounded command: |u0| = speed^2 / radius
        let speed = v0[0].hypot(v0[1]);
        assert_abs_diff_eq!(l.leader_state(17.0).command.norm(), speed * speed / 5.0, epsilon = 1e-12);
    }

    #[test]
    fn rest_to_rest_dwells_on_repeated_point() {
        let p = WaypointPath::new(
            vec![vec![0.0, 0.0], vec![10.0, 0.0], vec![10.0, 0.0], vec![0.0, 5.0]],
            vec![0.0, 10.0, 20.0, 30.0],
            Interpolation::RestToRest,
        )
        .unwrap();
        let l = LeaderProfile::WaypointPath(p);
        let s = l.leader_state(15.0);
        assert_eq!(s.position.as_slice(), &[10.0, 0.0]);
        assert_eq!(s.velocity.norm(), 0.0);
    }
}

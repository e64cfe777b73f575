//! Prescribed cavity-wall motions `l(t)` with exact first derivatives.
//!
//! Units are natural (`ħ = c = 1`) and lengths are usually quoted in units of
//! the initial cavity size `l0`, which nevertheless stays an explicit
//! parameter. All motions start at `t = 0`; the wall is at rest for `t < 0`.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("time {0} is before the start of the motion (t >= 0 required)")]
    NegativeTime(f64),
    #[error("time {t} outside tabulated range [{start}, {end}]")]
    OutOfTable { t: f64, start: f64, end: f64 },
    #[error("tabulated trajectories provide no analytic second derivative")]
    NoAnalyticAcceleration,
    #[error("invalid trajectory: {0}")]
    Invalid(String),
}

/// A prescribed wall motion. Values are immutable after construction and
/// evaluation is pure, so a trajectory can be shared freely between threads.
#[derive(Debug, Clone)]
pub enum Trajectory {
    /// `l(t) = l0`, `l̇ = 0`.
    Static { l0: f64 },
    /// `l(t) = l0 [1 + ε sin(ω t)]`, `l̇(t) = l0 ε ω cos(ω t)`.
    Sinusoidal { l0: f64, epsilon: f64, omega: f64 },
    /// Monotone-cubic interpolation of sampled `(t, l)` pairs.
    Tabulated(Table),
}

impl Trajectory {
    pub fn fixed(l0: f64) -> Result<Self, TrajectoryError> {
        check_l0(l0)?;
        Ok(Trajectory::Static { l0 })
    }

    pub fn sinusoidal(l0: f64, epsilon: f64, omega: f64) -> Result<Self, TrajectoryError> {
        check_l0(l0)?;
        if !epsilon.is_finite() || epsilon.abs() >= 1.0 {
            return Err(TrajectoryError::Invalid(format!(
                "amplitude epsilon = {epsilon} must satisfy |epsilon| < 1 so that l(t) > 0"
            )));
        }
        if !omega.is_finite() || omega <= 0.0 {
            return Err(TrajectoryError::Invalid(format!(
                "angular frequency omega = {omega} must be positive"
            )));
        }
        Ok(Trajectory::Sinusoidal { l0, epsilon, omega })
    }

    /// Builds a tabulated trajectory from `(t, l)` samples. The table must
    /// start at `t <= 0`, have strictly increasing times and positive lengths.
    pub fn tabulated(points: Vec<(f64, f64)>) -> Result<Self, TrajectoryError> {
        Ok(Trajectory::Tabulated(Table::new(points)?))
    }

    /// Cavity size before the motion starts.
    pub fn l0(&self) -> f64 {
        match self {
            Trajectory::Static { l0 } | Trajectory::Sinusoidal { l0, .. } => *l0,
            Trajectory::Tabulated(table) => table.l_at_start(),
        }
    }

    /// Returns `(l(t), l̇(t))`.
    pub fn evaluate(&self, t: f64) -> Result<(f64, f64), TrajectoryError> {
        if !t.is_finite() || t < 0.0 {
            return Err(TrajectoryError::NegativeTime(t));
        }
        match self {
            Trajectory::Static { l0 } => Ok((*l0, 0.0)),
            Trajectory::Sinusoidal { l0, epsilon, omega } => {
                let phase = omega * t;
                Ok((
                    l0 * (1.0 + epsilon * phase.sin()),
                    l0 * epsilon * omega * phase.cos(),
                ))
            }
            Trajectory::Tabulated(table) => table.evaluate(t),
        }
    }

    /// `l̈(t)` for the builtin kinds; tabulated motions are rejected (their
    /// interpolant derivative is only piecewise smooth).
    pub fn acceleration(&self, t: f64) -> Result<f64, TrajectoryError> {
        if !t.is_finite() || t < 0.0 {
            return Err(TrajectoryError::NegativeTime(t));
        }
        match self {
            Trajectory::Static { .. } => Ok(0.0),
            Trajectory::Sinusoidal { l0, epsilon, omega } => {
                Ok(-l0 * epsilon * omega * omega * (omega * t).sin())
            }
            Trajectory::Tabulated(_) => Err(TrajectoryError::NoAnalyticAcceleration),
        }
    }

    /// Velocity right after the motion is switched on, `l̇(0⁺)`. A nonzero
    /// value signals that the coupling matrix at `t = 0` must enter the
    /// initial data of the mode equations.
    pub fn initial_velocity_discontinuity(&self) -> f64 {
        self.evaluate(0.0).map(|(_, l_dot)| l_dot).unwrap_or(0.0)
    }

    /// Period of the builtin oscillation, if there is one.
    pub fn period(&self) -> Option<f64> {
        match self {
            Trajectory::Sinusoidal { omega, .. } => Some(std::f64::consts::TAU / omega),
            _ => None,
        }
    }

    /// Latest time the trajectory can be evaluated at (`∞` for builtins).
    pub fn t_end(&self) -> f64 {
        match self {
            Trajectory::Tabulated(table) => table.t_end(),
            _ => f64::INFINITY,
        }
    }
}

fn check_l0(l0: f64) -> Result<(), TrajectoryError> {
    if !l0.is_finite() || l0 <= 0.0 {
        return Err(TrajectoryError::Invalid(format!(
            "cavity size l0 = {l0} must be positive"
        )));
    }
    Ok(())
}

/// Sampled wall motion interpolated with a monotone cubic (Fritsch–Carlson
/// tangents). `l̇` is the analytic derivative of the interpolant, so it is
/// continuous across knots; the coupling matrix is proportional to `l̇/l` and
/// cares more about derivative continuity than about interpolant order.
#[derive(Debug, Clone)]
pub struct Table {
    ts: Vec<f64>,
    ls: Vec<f64>,
    tangents: Vec<f64>,
}

impl Table {
    fn new(points: Vec<(f64, f64)>) -> Result<Self, TrajectoryError> {
        if points.len() < 2 {
            return Err(TrajectoryError::Invalid(
                "tabulated trajectory needs at least two samples".into(),
            ));
        }
        let ts: Vec<f64> = points.iter().map(|p| p.0).collect();
        let ls: Vec<f64> = points.iter().map(|p| p.1).collect();
        if ts[0] > 0.0 {
            return Err(TrajectoryError::Invalid(format!(
                "table must start at t <= 0, got {}",
                ts[0]
            )));
        }
        for w in ts.windows(2) {
            if !(w[1] > w[0]) {
                return Err(TrajectoryError::Invalid(
                    "table times must be strictly increasing".into(),
                ));
            }
        }
        if ls.iter().any(|&l| !l.is_finite() || l <= 0.0) {
            return Err(TrajectoryError::Invalid(
                "table lengths must be positive".into(),
            ));
        }
        let tangents = fritsch_carlson_tangents(&ts, &ls);
        Ok(Table { ts, ls, tangents })
    }

    fn l_at_start(&self) -> f64 {
        self.ls[0]
    }

    fn t_end(&self) -> f64 {
        *self.ts.last().unwrap()
    }

    fn evaluate(&self, t: f64) -> Result<(f64, f64), TrajectoryError> {
        let (start, end) = (self.ts[0], self.t_end());
        if t < start || t > end {
            return Err(TrajectoryError::OutOfTable { t, start, end });
        }
        // Segment index: largest i with ts[i] <= t (clamped to the last one).
        let i = match self.ts.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(idx) => idx.min(self.ts.len() - 2),
            Err(idx) => idx - 1,
        };
        let h = self.ts[i + 1] - self.ts[i];
        let s = (t - self.ts[i]) / h;
        let (y0, y1) = (self.ls[i], self.ls[i + 1]);
        let (m0, m1) = (self.tangents[i], self.tangents[i + 1]);
        // Cubic Hermite basis and its derivative in the local coordinate s.
        let s2 = s * s;
        let s3 = s2 * s;
        let l = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * h * m0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * h * m1;
        let dl_ds = (6.0 * s2 - 6.0 * s) * y0
            + (3.0 * s2 - 4.0 * s + 1.0) * h * m0
            + (-6.0 * s2 + 6.0 * s) * y1
            + (3.0 * s2 - 2.0 * s) * h * m1;
        Ok((l, dl_ds / h))
    }
}

/// Monotonicity-preserving tangents (PCHIP rule).
fn fritsch_carlson_tangents(ts: &[f64], ls: &[f64]) -> Vec<f64> {
    let n = ts.len();
    let h: Vec<f64> = ts.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (ls[i + 1] - ls[i]) / h[i]).collect();
    let mut m = vec![0.0; n];
    m[0] = endpoint_tangent(h[0], h.get(1).copied(), delta[0], delta.get(1).copied());
    m[n - 1] = if n >= 3 {
        endpoint_tangent(h[n - 2], Some(h[n - 3]), delta[n - 2], Some(delta[n - 3]))
    } else {
        delta[n - 2]
    };
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] <= 0.0 {
            m[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    m
}

/// One-sided three-point estimate with the usual PCHIP monotonicity clamps.
fn endpoint_tangent(h0: f64, h1: Option<f64>, d0: f64, d1: Option<f64>) -> f64 {
    let (h1, d1) = match (h1, d1) {
        (Some(h1), Some(d1)) => (h1, d1),
        _ => return d0,
    };
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m * d0 <= 0.0 {
        0.0
    } else if d0 * d1 <= 0.0 && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn sinusoidal_at_start() {
        let traj = Trajectory::sinusoidal(1.0, 1e-3, 3.0 * PI).unwrap();
        let (l, l_dot) = traj.evaluate(0.0).unwrap();
        assert_eq!(l, 1.0);
        assert_close(l_dot, 3.0 * PI * 1e-3, 1e-15);
    }

    #[test]
    fn sinusoidal_at_extremum() {
        // omega t = pi/2 at t = 1/6 for omega = 3 pi: maximal l, zero velocity.
        let traj = Trajectory::sinusoidal(1.0, 1e-3, 3.0 * PI).unwrap();
        let (l, l_dot) = traj.evaluate(1.0 / 6.0).unwrap();
        assert_close(l, 1.001, 1e-12);
        assert_close(l_dot, 0.0, 1e-14);
    }

    #[test]
    fn static_everywhere() {
        let traj = Trajectory::fixed(1.0).unwrap();
        for t in [0.0, 0.3, 17.0, 4000.0] {
            assert_eq!(traj.evaluate(t).unwrap(), (1.0, 0.0));
        }
        assert_eq!(traj.initial_velocity_discontinuity(), 0.0);
    }

    #[test]
    fn initial_velocity_discontinuity_sinusoidal() {
        let traj = Trajectory::sinusoidal(1.0, 1e-3, 3.0 * PI).unwrap();
        assert_close(
            traj.initial_velocity_discontinuity(),
            3.0 * PI * 1e-3,
            1e-15,
        );
    }

    #[test]
    fn rejects_negative_time() {
        let traj = Trajectory::sinusoidal(1.0, 1e-3, 2.0 * PI).unwrap();
        assert!(matches!(
            traj.evaluate(-0.1),
            Err(TrajectoryError::NegativeTime(_))
        ));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Trajectory::fixed(0.0).is_err());
        assert!(Trajectory::sinusoidal(1.0, 1.0, PI).is_err());
        assert!(Trajectory::sinusoidal(1.0, 1e-3, 0.0).is_err());
        assert!(Trajectory::tabulated(vec![(0.0, 1.0)]).is_err());
        assert!(Trajectory::tabulated(vec![(0.5, 1.0), (1.0, 1.1)]).is_err());
        assert!(Trajectory::tabulated(vec![(0.0, 1.0), (1.0, -0.1)]).is_err());
    }

    #[test]
    fn finite_difference_reproduces_derivative() {
        // Central difference of l over step h matches l_dot to O(h^2).
        let cases = [
            Trajectory::sinusoidal(1.0, 1e-3, 3.0 * PI).unwrap(),
            Trajectory::sinusoidal(2.0, 0.2, 5.0).unwrap(),
            Trajectory::fixed(1.5).unwrap(),
        ];
        for traj in &cases {
            for &h in &[1e-3, 1e-4] {
                for &t in &[0.2, 0.7, 1.9, 13.4] {
                    let (_, l_dot) = traj.evaluate(t).unwrap();
                    let (lp, _) = traj.evaluate(t + h).unwrap();
                    let (lm, _) = traj.evaluate(t - h).unwrap();
                    let fd = (lp - lm) / (2.0 * h);
                    let scale = l_dot.abs().max(1.0);
                    assert!(
                        (fd - l_dot).abs() <= 10.0 * h * h * scale,
                        "t={t} h={h}: fd={fd} exact={l_dot}"
                    );
                }
            }
        }
    }

    #[test]
    fn sinusoidal_periodicity() {
        let traj = Trajectory::sinusoidal(1.0, 1e-3, 3.0 * PI).unwrap();
        let period = traj.period().unwrap();
        for &t in &[0.1, 1.3, 8.7] {
            let (l0, _) = traj.evaluate(t).unwrap();
            let (l1, _) = traj.evaluate(t + period).unwrap();
            assert_close(l0, l1, 1e-13);
        }
    }

    #[test]
    fn acceleration_matches_finite_difference() {
        let traj = Trajectory::sinusoidal(1.0, 1e-3, 3.0 * PI).unwrap();
        let h = 1e-5;
        for &t in &[0.3, 1.1, 2.9] {
            let acc = traj.acceleration(t).unwrap();
            let (_, vp) = traj.evaluate(t + h).unwrap();
            let (_, vm) = traj.evaluate(t - h).unwrap();
            assert_close(acc, (vp - vm) / (2.0 * h), 1e-6);
        }
        let table = Trajectory::tabulated(vec![(0.0, 1.0), (1.0, 1.1), (2.0, 1.0)]).unwrap();
        assert!(matches!(
            table.acceleration(0.5),
            Err(TrajectoryError::NoAnalyticAcceleration)
        ));
    }

    #[test]
    fn tabulated_tracks_smooth_motion() {
        // Sample a sinusoid densely; the interpolant should track l and l_dot.
        let l0 = 1.0;
        let (eps, omega) = (1e-2, 2.0 * PI);
        let exact = Trajectory::sinusoidal(l0, eps, omega).unwrap();
        let points: Vec<(f64, f64)> = (0..=400)
            .map(|i| {
                let t = i as f64 * 0.005;
                (t, exact.evaluate(t).unwrap().0)
            })
            .collect();
        let table = Trajectory::tabulated(points).unwrap();
        for &t in &[0.12, 0.51, 1.37, 1.99] {
            let (l_e, v_e) = exact.evaluate(t).unwrap();
            let (l_t, v_t) = table.evaluate(t).unwrap();
            assert_close(l_t, l_e, 1e-8);
            assert_close(v_t, v_e, 1e-4);
        }
        assert!(matches!(
            table.evaluate(2.5),
            Err(TrajectoryError::OutOfTable { .. })
        ));
    }

    #[test]
    fn tabulated_initial_velocity() {
        // Flat start: discontinuity is zero.
        let table =
            Trajectory::tabulated(vec![(0.0, 1.0), (1.0, 1.0), (2.0, 1.2), (3.0, 1.3)]).unwrap();
        assert_eq!(table.initial_velocity_discontinuity(), 0.0);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // Central finite difference of l reproduces the analytic
            // derivative to O(h²) across the parameter space.
            #[test]
            fn derivative_matches_finite_difference(
                t in 0.1f64..20.0,
                epsilon in 1e-4f64..0.5,
                omega in 0.5f64..10.0,
            ) {
                let traj = Trajectory::sinusoidal(1.0, epsilon, omega).unwrap();
                let h = 1e-4;
                let (_, l_dot) = traj.evaluate(t).unwrap();
                let (lp, _) = traj.evaluate(t + h).unwrap();
                let (lm, _) = traj.evaluate(t - h).unwrap();
                let fd = (lp - lm) / (2.0 * h);
                // |l'''| <= epsilon * omega^3 bounds the difference error.
                let bound = h * h * (1.0 + epsilon * omega.powi(3));
                prop_assert!((fd - l_dot).abs() <= bound);
            }

            // The cavity never collapses for admissible amplitudes.
            #[test]
            fn length_stays_positive(
                t in 0.0f64..100.0,
                epsilon in -0.99f64..0.99,
                omega in 0.1f64..20.0,
            ) {
                let traj = Trajectory::sinusoidal(1.0, epsilon, omega).unwrap();
                let (l, _) = traj.evaluate(t).unwrap();
                prop_assert!(l > 0.0);
            }
        }
    }

    #[test]
    fn tabulated_derivative_is_continuous_at_knots() {
        let points: Vec<(f64, f64)> = (0..=20)
            .map(|i| {
                let t = i as f64 * 0.1;
                (t, 1.0 + 0.05 * (2.0 * t).sin())
            })
            .collect();
        let table = Trajectory::tabulated(points).unwrap();
        for i in 1..20 {
            let knot = i as f64 * 0.1;
            let (_, v_left) = table.evaluate(knot - 1e-9).unwrap();
            let (_, v_right) = table.evaluate(knot + 1e-9).unwrap();
            assert_close(v_left, v_right, 1e-6);
        }
    }
}

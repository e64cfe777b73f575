//! Closed-form small-amplitude predictions for the sinusoidal cavity motion
//! `l(t) = l0 [1 + ε sin(ω t)]` with `ω = 2nπ(1 + δn/n)` in units `l0 = 1`.
//!
//! These perturbative results are consumed as oracles in tests and as
//! overlay columns in the CSV output; they are not re-derived here. All of
//! them assume `ε ≪ 1`, and the growth formulas additionally hold for short
//! times `ε π t ≪ 1`; [`short_time_ok`] tracks that window so comparisons
//! can restrict themselves to it.

use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalyticError {
    #[error("no oscillation for gamma = {0} (requires gamma > 1)")]
    NoOscillation(f64),
}

/// Validity of the short-time growth formulas at time `t`.
pub fn short_time_ok(epsilon: f64, t: f64) -> bool {
    epsilon * PI * t < 0.1
}

/// Normalized detuning `γ = δn/(n ε)`; for `ε = 10⁻³` this is the common
/// `γ = δn · 10³/n` parametrization.
pub fn gamma(n: f64, delta_n: f64, epsilon: f64) -> f64 {
    delta_n / (n * epsilon)
}

/// Resonant drive at `ω = 2 Ω_n⁰ = 2nπ` with amplitude `ε`. The index `n`
/// may be integer or half-integer.
#[derive(Debug, Clone, Copy)]
pub struct ResonancePrediction {
    pub n: f64,
    pub epsilon: f64,
}

impl ResonancePrediction {
    pub fn new(n: f64, epsilon: f64) -> Self {
        ResonancePrediction { n, epsilon }
    }

    /// Total particle number `N(t) = n (4n² − 1) (ε π t)² / 12`.
    pub fn total_number(&self, t: f64) -> f64 {
        let x = self.epsilon * PI * t;
        self.n * (4.0 * self.n * self.n - 1.0) * x * x / 12.0
    }

    /// Spectrum `N_k(t) = (2n − k) k (ε π t)² / 4` for `k < 2n`, else 0.
    pub fn mode_number(&self, k: usize, t: f64) -> f64 {
        let kf = k as f64;
        if kf >= 2.0 * self.n {
            return 0.0;
        }
        let x = self.epsilon * PI * t;
        (2.0 * self.n - kf) * kf * x * x / 4.0
    }

    /// Total energy `E(t) = (4n² − 1) π sinh²(n ε π t) / 12`.
    pub fn energy(&self, t: f64) -> f64 {
        DetunedPrediction {
            n: self.n,
            delta_n: 0.0,
            epsilon: self.epsilon,
        }
        .energy(t)
    }

    /// Whether mode `k` can be excited at all: the coupling condition
    /// `ω = |Ω_k⁰ ± Ω_l⁰|` excludes every `k = 2np`, `p = 1, 2, 3, ...`.
    pub fn is_coupled(&self, k: usize) -> bool {
        let two_n = 2.0 * self.n;
        let rounded = two_n.round();
        debug_assert!(
            (two_n - rounded).abs() < 1e-9,
            "coupling rule needs 2n integral"
        );
        k % (rounded as usize) != 0
    }

    pub fn short_time_ok(&self, t: f64) -> bool {
        short_time_ok(self.epsilon, t)
    }
}

/// Detuned drive at `ω = 2π(n + δn)`, strength parametrized by
/// `γ = δn/(n ε)`.
#[derive(Debug, Clone, Copy)]
pub struct DetunedPrediction {
    pub n: f64,
    pub delta_n: f64,
    pub epsilon: f64,
}

impl DetunedPrediction {
    pub fn new(n: f64, delta_n: f64, epsilon: f64) -> Self {
        DetunedPrediction { n, delta_n, epsilon }
    }

    pub fn gamma(&self) -> f64 {
        gamma(self.n, self.delta_n, self.epsilon)
    }

    /// Total energy in the three detuning regimes:
    ///
    /// * `γ < 1`: `(π/12)(4n² − 1) sinh²(n √(1−γ²) π ε t) / (1−γ²)`,
    /// * `γ = 1`: `(π/3)(4n² − 1) (n π ε t / 2)²`,
    /// * `γ > 1`: `(π/12)(4n² − 1) sin²(n √(γ²−1) π ε t) / (γ²−1)`.
    ///
    /// `γ = 0` reduces to the resonant exponential growth.
    pub fn energy(&self, t: f64) -> f64 {
        let g = self.gamma();
        let prefactor = PI / 12.0 * (4.0 * self.n * self.n - 1.0);
        let x = self.n * PI * self.epsilon * t;
        let d = 1.0 - g * g;
        if d == 0.0 {
            prefactor * x * x
        } else if d > 0.0 {
            let arg = x * d.sqrt();
            prefactor * arg.sinh().powi(2) / d
        } else {
            let arg = x * (-d).sqrt();
            prefactor * arg.sin().powi(2) / (-d)
        }
    }

    /// Oscillation period of `N(t)` and `E(t)` for `γ > 1`:
    /// `t0 = 1/(n ε √(γ² − 1))`.
    pub fn period(&self) -> Result<f64, AnalyticError> {
        let g = self.gamma();
        if g <= 1.0 {
            return Err(AnalyticError::NoOscillation(g));
        }
        Ok(1.0 / (self.n * self.epsilon * (g * g - 1.0).sqrt()))
    }

    pub fn short_time_ok(&self, t: f64) -> bool {
        short_time_ok(self.epsilon, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    #[test]
    fn totals_vanish_at_start() {
        for n in [1.0, 1.5, 2.0, 3.0] {
            let p = ResonancePrediction::new(n, 1e-3);
            assert_eq!(p.total_number(0.0), 0.0);
            assert_eq!(p.energy(0.0), 0.0);
        }
    }

    #[test]
    fn quoted_resonant_values() {
        let p = ResonancePrediction::new(2.0, 1e-3);
        // N(25) = 2·15·(0.025π)²/12 ≈ 1.542e-2.
        assert!(rel_close(p.total_number(25.0), 1.542e-2, 1e-3));
        // N_2(25) = 2·2·(0.025π)²/4 ≈ 6.17e-3; N_1 = N_3 ≈ 4.63e-3.
        assert!(rel_close(p.mode_number(2, 25.0), 6.17e-3, 1e-3));
        assert!(rel_close(p.mode_number(1, 25.0), 4.63e-3, 1e-3));
        assert!(rel_close(p.mode_number(3, 25.0), p.mode_number(1, 25.0), 1e-12));
        // Boundary of the parabola.
        assert_eq!(p.mode_number(4, 25.0), 0.0);
        // Half-integer resonance value: 1.5·8·(0.025π)²/12.
        let p15 = ResonancePrediction::new(1.5, 1e-3);
        let x = 0.025 * PI;
        assert!(rel_close(p15.total_number(25.0), 1.5 * 8.0 * x * x / 12.0, 1e-12));
    }

    #[test]
    fn spectrum_sums_to_total() {
        for n in [1.5, 2.0, 2.5, 3.0] {
            let p = ResonancePrediction::new(n, 1e-3);
            let t = 25.0;
            let sum: f64 = (1..(2.0 * n).ceil() as usize)
                .map(|k| p.mode_number(k, t))
                .sum();
            assert!(
                rel_close(sum, p.total_number(t), 1e-12),
                "n = {n}: {sum} vs {}",
                p.total_number(t)
            );
        }
    }

    #[test]
    fn coupled_mode_rule() {
        let p2 = ResonancePrediction::new(2.0, 1e-3);
        for k in [4, 8, 12] {
            assert!(!p2.is_coupled(k));
        }
        for k in [1, 2, 3, 5] {
            assert!(p2.is_coupled(k));
        }
        let p15 = ResonancePrediction::new(1.5, 1e-3);
        for k in [3, 6, 9] {
            assert!(!p15.is_coupled(k));
        }
        for k in [1, 2, 4, 5] {
            assert!(p15.is_coupled(k));
        }
    }

    #[test]
    fn resonant_energy_is_gamma_zero_branch() {
        let p = ResonancePrediction::new(2.0, 1e-3);
        let d = DetunedPrediction::new(2.0, 0.0, 1e-3);
        for t in [1.0, 50.0, 250.0] {
            let expected =
                (4.0 * 4.0 - 1.0) * PI * (2.0 * 1e-3 * PI * t).sinh().powi(2) / 12.0;
            assert!(rel_close(p.energy(t), expected, 1e-12));
            assert!(rel_close(d.energy(t), expected, 1e-12));
        }
    }

    #[test]
    fn energy_branches_join_at_gamma_one() {
        // Checked at γ = 1 ± 1e-4, n = 2, ε t = 0.05. The leading relative
        // deviation of either branch from the quadratic one is
        // (n π ε t)² |1 − γ²| / 3 ≈ 6.6e-6 here, so 1e-5 bounds it.
        let (n, eps, t) = (2.0, 1e-3, 50.0);
        let quad = DetunedPrediction::new(n, n * eps, eps).energy(t);
        assert!((DetunedPrediction::new(n, n * eps, eps).gamma() - 1.0).abs() < 1e-12);
        for sign in [-1.0, 1.0] {
            let g = 1.0 + sign * 1e-4;
            let e = DetunedPrediction::new(n, g * n * eps, eps).energy(t);
            assert!(
                rel_close(e, quad, 1e-5),
                "gamma = {g}: {e} vs quadratic {quad}"
            );
        }
        assert_eq!(DetunedPrediction::new(n, 0.0, eps).energy(0.0), 0.0);
        assert_eq!(DetunedPrediction::new(n, n * eps, eps).energy(0.0), 0.0);
        assert_eq!(DetunedPrediction::new(n, 2.0 * n * eps, eps).energy(0.0), 0.0);
    }

    #[test]
    fn oscillation_period() {
        // n = 1, γ = √2, ε = 10⁻³ → t0 = 1000.
        let d = DetunedPrediction::new(1.0, 2.0f64.sqrt() * 1e-3, 1e-3);
        assert!(rel_close(d.period().unwrap(), 1000.0, 1e-12));
        // Rejected below the oscillatory regime.
        assert!(DetunedPrediction::new(1.0, 1e-3, 1e-3).period().is_err());
        assert!(DetunedPrediction::new(1.0, 0.5e-3, 1e-3).period().is_err());
        // Monotone decrease with γ.
        let mut prev = f64::INFINITY;
        for g in [1.1, 1.5, 2.0, 4.0, 10.0, 100.0] {
            let t0 = DetunedPrediction::new(1.0, g * 1e-3, 1e-3).period().unwrap();
            assert!(t0 < prev);
            prev = t0;
        }
    }

    #[test]
    fn gamma_parametrization() {
        // γ = δn · 10³/n exactly when ε = 10⁻³.
        for (n, dn) in [(1.0, 2e-3), (2.0, 5e-4), (3.0, 1e-2)] {
            assert!(rel_close(gamma(n, dn, 1e-3), dn * 1e3 / n, 1e-15));
        }
    }

    #[test]
    fn short_time_window() {
        assert!(short_time_ok(1e-3, 25.0));
        assert!(!short_time_ok(1e-3, 50.0));
    }
}

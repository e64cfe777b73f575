//! Bogoliubov extraction, particle spectra, totals and unitarity residuals.

use crate::dynamics::EvolutionState;
use crate::spectrum::{ModeSystem, SpectrumError};
use crate::C64;
use ndarray::Array2;

/// Bogoliubov matrices at the extraction time `t1`, together with the
/// frequencies and deviation factors they were built with.
///
/// `A_mn = ½ √(Ω_n¹/Ω_m⁰) [Δ⁺_n ξ_n^(m) + Δ⁻_n η_n^(m)]`,
/// `B_mn = ½ √(Ω_n¹/Ω_m⁰) [Δ⁻_n ξ_n^(m) + Δ⁺_n η_n^(m)]`,
/// `Δ±_n = ½ [1 ± Ω_n⁰/Ω_n¹]`.
///
/// Row `m` is the initial-excitation label, column `n` the final mode.
#[derive(Debug, Clone)]
pub struct BogoliubovPair {
    pub a: Array2<C64>,
    pub b: Array2<C64>,
    pub t1: f64,
    /// Frequencies at the extraction-time cavity size, `Ω_n¹ = Ω_n(l(t1))`.
    pub omega1: Vec<f64>,
    pub delta_plus: Vec<f64>,
    pub delta_minus: Vec<f64>,
    /// True when `l̇(t1) ≠ 0`: the extraction then implicitly matches onto a
    /// static-cavity particle notion while the wall still moves, which can
    /// introduce small spurious contributions. Velocities below the roundoff
    /// of an analytic turning point do not set the flag.
    pub wall_moving: bool,
}

/// Roundoff guard for the `wall_moving` flag: `cos(ωt)` at an analytic
/// turning point evaluates to ~1e-16 in f64, not to zero.
fn wall_is_moving(l: f64, l_dot: f64) -> bool {
    l_dot.abs() > 1e-12 * l.abs().max(1.0)
}

/// Extracts the Bogoliubov matrices from the evolved state. Extraction is
/// permitted at any checkpoint, including times where the wall still moves;
/// the `wall_moving` flag records that circumstance.
pub fn extract_bogoliubov(
    state: &EvolutionState,
    sys: &ModeSystem,
    l_at_t1: f64,
    l_dot_at_t1: f64,
) -> Result<BogoliubovPair, SpectrumError> {
    let k = sys.k_max();
    assert_eq!(state.k_max(), k, "dimension mismatch");
    let omega1 = sys.frequencies(l_at_t1)?;
    let omega0 = sys.omega0();
    let mut delta_plus = vec![0.0; k];
    let mut delta_minus = vec![0.0; k];
    for n in 0..k {
        delta_plus[n] = 0.5 * (1.0 + omega0[n] / omega1[n]);
        delta_minus[n] = 0.5 * (1.0 - omega0[n] / omega1[n]);
    }
    let mut a = Array2::<C64>::zeros((k, k));
    let mut b = Array2::<C64>::zeros((k, k));
    for m in 0..k {
        for n in 0..k {
            let prefactor = 0.5 * (omega1[n] / omega0[m]).sqrt();
            let xi = state.xi[[n, m]];
            let eta = state.eta[[n, m]];
            a[[m, n]] = prefactor * (delta_plus[n] * xi + delta_minus[n] * eta);
            b[[m, n]] = prefactor * (delta_minus[n] * xi + delta_plus[n] * eta);
        }
    }
    Ok(BogoliubovPair {
        a,
        b,
        t1: state.t,
        omega1,
        delta_plus,
        delta_minus,
        wall_moving: wall_is_moving(l_at_t1, l_dot_at_t1),
    })
}

/// Observables at one checkpoint.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ObservableRecord {
    pub t: f64,
    /// Created particles per mode, `N_n = Σ_m |B_mn|²`.
    pub n_k: Vec<f64>,
    pub n_total: f64,
    /// Frequency-weighted total, `E = Σ_n Ω_n¹ N_n`.
    pub e_total: f64,
    /// Diagonal unitarity residuals `d_k = 1 − Σ_m (|A_mk|² − |B_mk|²)`.
    pub d_k: Vec<f64>,
    pub max_abs_d: f64,
    /// Largest off-diagonal residual of the two Bogoliubov relations.
    pub max_offdiag: f64,
    pub wall_moving: bool,
}

/// Residuals of the Bogoliubov relations.
#[derive(Debug, Clone)]
pub struct Residuals {
    /// `d_k = 1 − Σ_m (|A_mk|² − |B_mk|²)`.
    pub d_k: Vec<f64>,
    /// Max over `n ≠ k` of `|Σ_m [A_mn A*_mk − B*_mn B_mk]|`.
    pub max_offdiag_first: f64,
    /// Max over all `(n, k)` of `|Σ_m [A_mn B*_mk − B*_mn A_mk]|`.
    pub max_offdiag_second: f64,
}

/// Evaluates both Bogoliubov relations via Gram matrices:
/// the first relation is `conj(A†A) − B†B = I`, the second
/// `(B†A)ᵀ − B†A = 0`.
pub fn bogoliubov_residuals(pair: &BogoliubovPair) -> Residuals {
    let k = pair.a.nrows();
    let a_dag = pair.a.t().mapv(|z| z.conj());
    let b_dag = pair.b.t().mapv(|z| z.conj());
    let gram_a = a_dag.dot(&pair.a); // (A†A)_{kn} = Σ_m A*_mk A_mn
    let gram_b = b_dag.dot(&pair.b);
    let cross = b_dag.dot(&pair.a); // (B†A)_{kn} = Σ_m B*_mk A_mn

    let mut d_k = vec![0.0; k];
    let mut max_first: f64 = 0.0;
    let mut max_second: f64 = 0.0;
    for n in 0..k {
        d_k[n] = 1.0 - (gram_a[[n, n]].re - gram_b[[n, n]].re);
        for j in 0..k {
            // Σ_m [A_mn A*_mj − B*_mn B_mj] − δ_nj
            let first = gram_a[[j, n]] - gram_b[[n, j]]
                - if n == j {
                    C64::new(1.0, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                };
            if n != j {
                max_first = max_first.max(first.norm());
            }
            // Σ_m [A_mn B*_mj − B*_mn A_mj]
            let second = cross[[j, n]] - cross[[n, j]];
            max_second = max_second.max(second.norm());
        }
    }
    Residuals {
        d_k,
        max_offdiag_first: max_first,
        max_offdiag_second: max_second,
    }
}

/// Particle spectrum, totals and residuals from the Bogoliubov matrices.
pub fn particle_spectrum(pair: &BogoliubovPair) -> ObservableRecord {
    let k = pair.b.nrows();
    let mut n_k = vec![0.0; k];
    for n in 0..k {
        let mut sum = 0.0;
        for m in 0..k {
            sum += pair.b[[m, n]].norm_sqr();
        }
        n_k[n] = sum;
    }
    let n_total = n_k.iter().sum();
    let e_total = n_k
        .iter()
        .zip(&pair.omega1)
        .map(|(n, w)| n * w)
        .sum();
    let residuals = bogoliubov_residuals(pair);
    let max_abs_d = residuals
        .d_k
        .iter()
        .fold(0.0f64, |acc, d| acc.max(d.abs()));
    ObservableRecord {
        t: pair.t1,
        n_k,
        n_total,
        e_total,
        d_k: residuals.d_k,
        max_abs_d,
        max_offdiag: residuals
            .max_offdiag_first
            .max(residuals.max_offdiag_second),
        wall_moving: pair.wall_moving,
    }
}

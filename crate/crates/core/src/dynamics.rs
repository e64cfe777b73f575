//! Right-hand sides and initial conditions of the three equivalent
//! propagation formulations:
//!
//! * the primary first-order system for the auxiliary matrices
//!   `ξ_n^(m)(t)`, `η_n^(m)(t)` ([`XiEtaSystem`]),
//! * the direct first-order system for the Bogoliubov matrices
//!   `A_mn(t)`, `B_mn(t)` ([`AbSystem`]),
//! * the second-order system for the mode functions `ε_n^(m)(t)` used as an
//!   independent oracle ([`EpsilonSystem`]).
//!
//! In all matrices the row index `n` is the mode, the column index `m`
//! labels the initial excitation; columns evolve independently under the
//! same time-dependent operator, which the hot path exploits by batching the
//! coupling products into real matrix-matrix multiplications over stacked
//! re/im planes.
//!
//! Flat states handed to the integrator hold two `k × k` complex matrices as
//! interleaved `(re, im)` pairs in row-major order: `[first; second]`.

use crate::integrator::OdeSystem;
use crate::spectrum::{ModeSystem, SpectrumError};
use crate::trajectory::Trajectory;
use crate::C64;
use ndarray::linalg::general_mat_mul;
use ndarray::Array2;

/// Coefficients of the ξ/η system at one instant.
///
/// `a±_nn = (Ω_n⁰/2) [1 ± (Ω_n(t)/Ω_n⁰)²]` (diagonal),
/// `c±_nk = ½ [M_kn ± (Ω_k⁰/Ω_n⁰) M_nk]` (row-major `k × k`).
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub k_max: usize,
    pub a_plus: Vec<f64>,
    pub a_minus: Vec<f64>,
    pub c_plus: Vec<f64>,
    pub c_minus: Vec<f64>,
}

/// Evaluates the ξ/η coefficients from the instantaneous `(l, l̇)`.
pub fn coefficients(
    sys: &ModeSystem,
    l: f64,
    l_dot: f64,
) -> Result<CoefficientSet, SpectrumError> {
    let k = sys.k_max();
    let omega = sys.frequencies(l)?;
    let m = sys.coupling(l, l_dot)?;
    let omega0 = sys.omega0();
    let mut a_plus = vec![0.0; k];
    let mut a_minus = vec![0.0; k];
    for n in 0..k {
        a_plus[n] = (omega0[n] * omega0[n] + omega[n] * omega[n]) / (2.0 * omega0[n]);
        a_minus[n] = (omega0[n] * omega0[n] - omega[n] * omega[n]) / (2.0 * omega0[n]);
    }
    let mut c_plus = vec![0.0; k * k];
    let mut c_minus = vec![0.0; k * k];
    for n in 0..k {
        for j in 0..k {
            let m_kn = m.get(j, n);
            let m_nk = m.get(n, j);
            let ratio = omega0[j] / omega0[n];
            c_plus[n * k + j] = 0.5 * (m_kn + ratio * m_nk);
            c_minus[n * k + j] = 0.5 * (m_kn - ratio * m_nk);
        }
    }
    Ok(CoefficientSet {
        k_max: k,
        a_plus,
        a_minus,
        c_plus,
        c_minus,
    })
}

/// State of the primary propagation: `ξ`, `η` and the current time.
#[derive(Debug, Clone)]
pub struct EvolutionState {
    pub t: f64,
    pub xi: Array2<C64>,
    pub eta: Array2<C64>,
}

impl EvolutionState {
    /// Vacuum initial data: `ξ(0) = 2·I`, `η(0) = 0`.
    pub fn vacuum(k_max: usize) -> Self {
        let mut xi = Array2::zeros((k_max, k_max));
        for n in 0..k_max {
            xi[[n, n]] = C64::new(2.0, 0.0);
        }
        EvolutionState {
            t: 0.0,
            xi,
            eta: Array2::zeros((k_max, k_max)),
        }
    }

    pub fn k_max(&self) -> usize {
        self.xi.nrows()
    }

    /// Length of the flat interleaved representation.
    pub fn flat_len(k_max: usize) -> usize {
        4 * k_max * k_max
    }

    pub fn from_flat(t: f64, y: &[f64], k_max: usize) -> Self {
        let (xi, eta) = unpack_pair(y, k_max);
        EvolutionState { t, xi, eta }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut y = vec![0.0; Self::flat_len(self.k_max())];
        pack_pair(&self.xi, &self.eta, &mut y);
        y
    }
}

/// Reads two `k × k` complex matrices out of an interleaved flat state.
pub fn unpack_pair(y: &[f64], k: usize) -> (Array2<C64>, Array2<C64>) {
    debug_assert_eq!(y.len(), 4 * k * k);
    let half = 2 * k * k;
    let read = |block: &[f64]| {
        Array2::from_shape_fn((k, k), |(n, m)| {
            C64::new(block[2 * (n * k + m)], block[2 * (n * k + m) + 1])
        })
    };
    (read(&y[..half]), read(&y[half..]))
}

/// Writes two `k × k` complex matrices into an interleaved flat state.
pub fn pack_pair(first: &Array2<C64>, second: &Array2<C64>, y: &mut [f64]) {
    let k = first.nrows();
    debug_assert_eq!(y.len(), 4 * k * k);
    let half = 2 * k * k;
    for n in 0..k {
        for m in 0..k {
            let idx = 2 * (n * k + m);
            y[idx] = first[[n, m]].re;
            y[idx + 1] = first[[n, m]].im;
            y[half + idx] = second[[n, m]].re;
            y[half + idx + 1] = second[[n, m]].im;
        }
    }
}

/// Reference evaluation of the ξ/η right-hand side:
///
/// `ξ̇_n = −i [a⁺_nn ξ_n − a⁻_nn η_n] − Σ_k [c⁻_nk ξ_k + c⁺_nk η_k]`,
/// `η̇_n = −i [a⁻_nn ξ_n − a⁺_nn η_n] − Σ_k [c⁺_nk ξ_k + c⁻_nk η_k]`,
///
/// column by column in the excitation label. The optimized batched path in
/// [`XiEtaSystem`] must agree with this to roundoff.
pub fn rhs_xi_eta(
    state: &EvolutionState,
    coeffs: &CoefficientSet,
) -> (Array2<C64>, Array2<C64>) {
    let k = coeffs.k_max;
    assert_eq!(state.k_max(), k, "dimension mismatch");
    let i = C64::i();
    let mut dxi = Array2::<C64>::zeros((k, k));
    let mut deta = Array2::<C64>::zeros((k, k));
    for n in 0..k {
        for m in 0..k {
            let mut cx = C64::new(0.0, 0.0);
            let mut ce = C64::new(0.0, 0.0);
            for q in 0..k {
                let cm = coeffs.c_minus[n * k + q];
                let cp = coeffs.c_plus[n * k + q];
                cx += cm * state.xi[[q, m]] + cp * state.eta[[q, m]];
                ce += cp * state.xi[[q, m]] + cm * state.eta[[q, m]];
            }
            dxi[[n, m]] =
                -i * (coeffs.a_plus[n] * state.xi[[n, m]] - coeffs.a_minus[n] * state.eta[[n, m]])
                    - cx;
            deta[[n, m]] =
                -i * (coeffs.a_minus[n] * state.xi[[n, m]] - coeffs.a_plus[n] * state.eta[[n, m]])
                    - ce;
        }
    }
    (dxi, deta)
}

/// The primary ξ/η propagation as a flat ODE system.
///
/// Coefficients are rebuilt from `(l, l̇)` at every call since adaptive
/// steppers evaluate at unpredictable times. The coupling sums for all
/// columns are batched into real GEMMs; the block structure
/// `[[c⁻ c⁺];[c⁺ c⁻]]` is diagonalized by the sum/difference combinations
/// `Σ = ξ + η`, `Δ = ξ − η`:
///
/// `c⁻ξ + c⁺η = ½ (G₁Σ + G₂Δ)`, `c⁺ξ + c⁻η = ½ (G₁Σ − G₂Δ)`
///
/// with `G₁ = c⁻ + c⁺ = Mᵀ` and `(G₂)_nk = (c⁻ − c⁺)_nk = −(Ω_k⁰/Ω_n⁰) M_nk`,
/// which halves the multiplication work relative to the stacked form.
pub struct XiEtaSystem<'a> {
    sys: &'a ModeSystem,
    traj: &'a Trajectory,
    k: usize,
    freq: Vec<f64>,
    m_buf: Vec<f64>,
    /// `p_n = Ω_n(t)²/Ω_n⁰ = a⁺ − a⁻`; `a⁺ + a⁻ = Ω_n⁰` is constant.
    p_diag: Vec<f64>,
    g1: Array2<f64>,
    g2: Array2<f64>,
    sig_re: Array2<f64>,
    sig_im: Array2<f64>,
    del_re: Array2<f64>,
    del_im: Array2<f64>,
    u_re: Array2<f64>,
    u_im: Array2<f64>,
    v_re: Array2<f64>,
    v_im: Array2<f64>,
}

impl<'a> XiEtaSystem<'a> {
    pub fn new(sys: &'a ModeSystem, traj: &'a Trajectory) -> Self {
        let k = sys.k_max();
        XiEtaSystem {
            sys,
            traj,
            k,
            freq: vec![0.0; k],
            m_buf: vec![0.0; k * k],
            p_diag: vec![0.0; k],
            g1: Array2::zeros((k, k)),
            g2: Array2::zeros((k, k)),
            sig_re: Array2::zeros((k, k)),
            sig_im: Array2::zeros((k, k)),
            del_re: Array2::zeros((k, k)),
            del_im: Array2::zeros((k, k)),
            u_re: Array2::zeros((k, k)),
            u_im: Array2::zeros((k, k)),
            v_re: Array2::zeros((k, k)),
            v_im: Array2::zeros((k, k)),
        }
    }

    pub fn state_len(&self) -> usize {
        EvolutionState::flat_len(self.k)
    }

    pub fn initial_state(&self) -> Vec<f64> {
        EvolutionState::vacuum(self.k).to_flat()
    }
}

impl OdeSystem for XiEtaSystem<'_> {
    fn rhs(&mut self, t: f64, y: &[f64], dydt: &mut [f64]) {
        let k = self.k;
        let half = 2 * k * k;
        assert_eq!(y.len(), 2 * half);
        assert_eq!(dydt.len(), 2 * half);
        let (l, l_dot) = match self.traj.evaluate(t) {
            Ok(v) if v.0 > 0.0 => v,
            // Poison the derivative; the stepper aborts with a diagnostic.
            _ => {
                dydt.fill(f64::NAN);
                return;
            }
        };
        self.sys
            .frequencies_into(l, &mut self.freq)
            .expect("l > 0 checked above");
        self.sys
            .coupling_into(l, l_dot, &mut self.m_buf)
            .expect("l > 0 checked above");
        let omega0 = self.sys.omega0();
        for n in 0..k {
            self.p_diag[n] = self.freq[n] * self.freq[n] / omega0[n];
        }
        {
            let g1 = self.g1.as_slice_mut().unwrap();
            let g2 = self.g2.as_slice_mut().unwrap();
            for n in 0..k {
                let row = n * k;
                let inv = 1.0 / omega0[n];
                for j in 0..k {
                    g1[row + j] = self.m_buf[j * k + n];
                    g2[row + j] = -(omega0[j] * inv) * self.m_buf[row + j];
                }
            }
        }
        // Deinterleave into Σ = ξ + η and Δ = ξ − η planes.
        {
            let sig_re = self.sig_re.as_slice_mut().unwrap();
            let sig_im = self.sig_im.as_slice_mut().unwrap();
            let del_re = self.del_re.as_slice_mut().unwrap();
            let del_im = self.del_im.as_slice_mut().unwrap();
            let (xi_block, eta_block) = y.split_at(half);
            for i in 0..k * k {
                let (xr, xi_) = (xi_block[2 * i], xi_block[2 * i + 1]);
                let (er, ei) = (eta_block[2 * i], eta_block[2 * i + 1]);
                sig_re[i] = xr + er;
                sig_im[i] = xi_ + ei;
                del_re[i] = xr - er;
                del_im[i] = xi_ - ei;
            }
        }
        general_mat_mul(1.0, &self.g1, &self.sig_re, 0.0, &mut self.u_re);
        general_mat_mul(1.0, &self.g1, &self.sig_im, 0.0, &mut self.u_im);
        general_mat_mul(1.0, &self.g2, &self.del_re, 0.0, &mut self.v_re);
        general_mat_mul(1.0, &self.g2, &self.del_im, 0.0, &mut self.v_im);
        // Diagonal terms in the Σ/Δ basis:
        // ξ̇ = −(i/2)(p Σ + Ω⁰ Δ) − ½(U + V),
        // η̇ = −(i/2)(−p Σ + Ω⁰ Δ) − ½(U − V).
        let sig_re = self.sig_re.as_slice().unwrap();
        let sig_im = self.sig_im.as_slice().unwrap();
        let del_re = self.del_re.as_slice().unwrap();
        let del_im = self.del_im.as_slice().unwrap();
        let u_re = self.u_re.as_slice().unwrap();
        let u_im = self.u_im.as_slice().unwrap();
        let v_re = self.v_re.as_slice().unwrap();
        let v_im = self.v_im.as_slice().unwrap();
        let (dxi, deta) = dydt.split_at_mut(half);
        for n in 0..k {
            let p = self.p_diag[n];
            let q = omega0[n];
            let row = n * k;
            for m in 0..k {
                let i = row + m;
                let idx = 2 * i;
                let (sr, si) = (sig_re[i], sig_im[i]);
                let (dr, di) = (del_re[i], del_im[i]);
                let (ur, ui) = (u_re[i], u_im[i]);
                let (vr, vi) = (v_re[i], v_im[i]);
                dxi[idx] = 0.5 * (p * si + q * di) - 0.5 * (ur + vr);
                dxi[idx + 1] = -0.5 * (p * sr + q * dr) - 0.5 * (ui + vi);
                deta[idx] = -0.5 * (p * si - q * di) - 0.5 * (ur - vr);
                deta[idx + 1] = 0.5 * (p * sr - q * dr) - 0.5 * (ui - vi);
            }
        }
    }
}

/// Reference evaluation of the direct system for the Bogoliubov matrices,
/// with `Γ_n = ½ Ω̇_n/Ω_n` and
/// `K±_nk = ½ [√(Ω_k/Ω_n) M_nk ± √(Ω_n/Ω_k) M_kn]`:
///
/// `Ȧ_mn = −i Ω_n A_mn + Γ_n B_mn + Σ_k [K⁻_nk A_mk − K⁺_nk B_mk]`,
/// `Ḃ_mn = +i Ω_n B_mn + Γ_n A_mn + Σ_k [K⁻_nk B_mk − K⁺_nk A_mk]`.
pub fn rhs_ab(
    a: &Array2<C64>,
    b: &Array2<C64>,
    sys: &ModeSystem,
    l: f64,
    l_dot: f64,
) -> Result<(Array2<C64>, Array2<C64>), SpectrumError> {
    let k = sys.k_max();
    assert_eq!(a.nrows(), k, "dimension mismatch");
    assert_eq!(b.nrows(), k, "dimension mismatch");
    let omega = sys.frequencies(l)?;
    let m = sys.coupling(l, l_dot)?;
    let gamma = frequency_gammas(sys, l, l_dot, &omega);
    let mut k_plus = vec![0.0; k * k];
    let mut k_minus = vec![0.0; k * k];
    for n in 0..k {
        for q in 0..k {
            let forward = (omega[q] / omega[n]).sqrt() * m.get(n, q);
            let backward = (omega[n] / omega[q]).sqrt() * m.get(q, n);
            k_plus[n * k + q] = 0.5 * (forward + backward);
            k_minus[n * k + q] = 0.5 * (forward - backward);
        }
    }
    let i = C64::i();
    let mut da = Array2::<C64>::zeros((k, k));
    let mut db = Array2::<C64>::zeros((k, k));
    for row in 0..k {
        for n in 0..k {
            let mut sum_a = C64::new(0.0, 0.0);
            let mut sum_b = C64::new(0.0, 0.0);
            for q in 0..k {
                let kp = k_plus[n * k + q];
                let km = k_minus[n * k + q];
                sum_a += km * a[[row, q]] - kp * b[[row, q]];
                sum_b += km * b[[row, q]] - kp * a[[row, q]];
            }
            da[[row, n]] = -i * omega[n] * a[[row, n]] + gamma[n] * b[[row, n]] + sum_a;
            db[[row, n]] = i * omega[n] * b[[row, n]] + gamma[n] * a[[row, n]] + sum_b;
        }
    }
    Ok((da, db))
}

/// `Γ_n = ½ Ω̇_n/Ω_n`. For a Dirichlet spectrum `Ω_n² = (nπ/l)² + m²` this is
/// `−(nπ)² l̇ / (2 l³ Ω_n²)`, which reduces to the n-independent `−l̇/(2l)` in
/// the massless case.
fn frequency_gammas(sys: &ModeSystem, l: f64, l_dot: f64, omega: &[f64]) -> Vec<f64> {
    let k = sys.k_max();
    let mut gamma = vec![0.0; k];
    for n in 0..k {
        let wave = (n + 1) as f64 * std::f64::consts::PI;
        gamma[n] = -wave * wave * l_dot / (2.0 * l * l * l * omega[n] * omega[n]);
    }
    gamma
}

/// The A/B propagation as a flat ODE system (`A(0) = I`, `B(0) = 0`).
pub struct AbSystem<'a> {
    sys: &'a ModeSystem,
    traj: &'a Trajectory,
    k: usize,
}

impl<'a> AbSystem<'a> {
    pub fn new(sys: &'a ModeSystem, traj: &'a Trajectory) -> Self {
        AbSystem {
            sys,
            traj,
            k: sys.k_max(),
        }
    }

    pub fn state_len(&self) -> usize {
        4 * self.k * self.k
    }

    pub fn initial_state(&self) -> Vec<f64> {
        let k = self.k;
        let mut a = Array2::<C64>::zeros((k, k));
        for n in 0..k {
            a[[n, n]] = C64::new(1.0, 0.0);
        }
        let b = Array2::<C64>::zeros((k, k));
        let mut y = vec![0.0; self.state_len()];
        pack_pair(&a, &b, &mut y);
        y
    }
}

impl OdeSystem for AbSystem<'_> {
    fn rhs(&mut self, t: f64, y: &[f64], dydt: &mut [f64]) {
        let (l, l_dot) = match self.traj.evaluate(t) {
            Ok(v) if v.0 > 0.0 => v,
            _ => {
                dydt.fill(f64::NAN);
                return;
            }
        };
        let (a, b) = unpack_pair(y, self.k);
        let (da, db) = rhs_ab(&a, &b, self.sys, l, l_dot).expect("l > 0 checked above");
        pack_pair(&da, &db, dydt);
    }
}

/// Second-order mode functions and their derivative.
#[derive(Debug, Clone)]
pub struct SecondOrderState {
    pub eps: Array2<C64>,
    pub eps_dot: Array2<C64>,
}

impl SecondOrderState {
    /// Vacuum initial data: `ε(0) = I`,
    /// `ε̇_n^(m)(0) = −i Ω_n⁰ δ_nm − M_mn(0)`.
    ///
    /// The coupling term is evaluated at `l̇(0⁺)`; for motions switched on
    /// with a velocity jump it is nonzero and must not be dropped, otherwise
    /// the vacuum initial conditions are violated.
    pub fn vacuum(sys: &ModeSystem, traj: &Trajectory) -> Result<Self, SpectrumError> {
        let k = sys.k_max();
        let (l, _) = traj.evaluate(0.0).map_err(|e| {
            SpectrumError::Invalid(format!("trajectory not evaluable at t = 0: {e}"))
        })?;
        let l_dot0 = traj.initial_velocity_discontinuity();
        let m0 = sys.coupling(l, l_dot0)?;
        let omega0 = sys.omega0();
        let mut eps = Array2::<C64>::zeros((k, k));
        let mut eps_dot = Array2::<C64>::zeros((k, k));
        for n in 0..k {
            eps[[n, n]] = C64::new(1.0, 0.0);
            for m in 0..k {
                let diag = if n == m {
                    C64::new(0.0, -omega0[n])
                } else {
                    C64::new(0.0, 0.0)
                };
                eps_dot[[n, m]] = diag - m0.get(m, n);
            }
        }
        Ok(SecondOrderState { eps, eps_dot })
    }
}

/// Acceleration of the second-order system:
///
/// `ε̈_n = −Ω_n² ε_n − Σ_m [M_mn − M_nm] ε̇_m − Σ_m [Ṁ_mn − N_nm] ε_m`
///
/// with `N_nm = Σ_k M_nk M_mk`, applied column-wise in the excitation label.
pub fn epsilon_acceleration(
    state: &SecondOrderState,
    omega: &[f64],
    m: &[f64],
    m_rate: &[f64],
) -> Array2<C64> {
    let k = omega.len();
    assert_eq!(state.eps.nrows(), k, "dimension mismatch");
    let mut acc = Array2::<C64>::zeros((k, k));
    // N_nm = Σ_q M_nq M_mq.
    let mut n_mat = vec![0.0; k * k];
    for n in 0..k {
        for j in 0..k {
            let mut s = 0.0;
            for q in 0..k {
                s += m[n * k + q] * m[j * k + q];
            }
            n_mat[n * k + j] = s;
        }
    }
    for n in 0..k {
        for col in 0..k {
            let mut friction = C64::new(0.0, 0.0);
            let mut potential = C64::new(0.0, 0.0);
            for j in 0..k {
                friction += (m[j * k + n] - m[n * k + j]) * state.eps_dot[[j, col]];
                potential += (m_rate[j * k + n] - n_mat[n * k + j]) * state.eps[[j, col]];
            }
            acc[[n, col]] =
                -omega[n] * omega[n] * state.eps[[n, col]] - friction - potential;
        }
    }
    acc
}

/// Rebuilds `(ξ, η)` from the second-order state at cavity data `(l, l̇)`:
/// `ξ_n = ε_n + (i/Ω_n⁰)[ε̇_n + Σ_k M_kn ε_k]`, `η_n` with `−i`.
pub fn xi_eta_from_epsilon(
    state: &SecondOrderState,
    sys: &ModeSystem,
    l: f64,
    l_dot: f64,
) -> Result<(Array2<C64>, Array2<C64>), SpectrumError> {
    let k = sys.k_max();
    let m = sys.coupling(l, l_dot)?;
    let omega0 = sys.omega0();
    let i = C64::i();
    let mut xi = Array2::<C64>::zeros((k, k));
    let mut eta = Array2::<C64>::zeros((k, k));
    for n in 0..k {
        for col in 0..k {
            let mut inner = state.eps_dot[[n, col]];
            for q in 0..k {
                inner += m.get(q, n) * state.eps[[q, col]];
            }
            let shift = i / omega0[n] * inner;
            xi[[n, col]] = state.eps[[n, col]] + shift;
            eta[[n, col]] = state.eps[[n, col]] - shift;
        }
    }
    Ok((xi, eta))
}

/// The second-order propagation as a flat ODE system. Tabulated trajectories
/// are not supported: the potential term needs the analytic `l̈`.
pub struct EpsilonSystem<'a> {
    sys: &'a ModeSystem,
    traj: &'a Trajectory,
    k: usize,
    m_buf: Vec<f64>,
    m_rate: Vec<f64>,
    freq: Vec<f64>,
}

impl<'a> EpsilonSystem<'a> {
    pub fn new(sys: &'a ModeSystem, traj: &'a Trajectory) -> Result<Self, SpectrumError> {
        if traj.acceleration(0.0).is_err() {
            return Err(SpectrumError::Invalid(
                "second-order propagation requires a trajectory with analytic acceleration"
                    .into(),
            ));
        }
        let k = sys.k_max();
        Ok(EpsilonSystem {
            sys,
            traj,
            k,
            m_buf: vec![0.0; k * k],
            m_rate: vec![0.0; k * k],
            freq: vec![0.0; k],
        })
    }

    pub fn state_len(&self) -> usize {
        4 * self.k * self.k
    }

    pub fn initial_state(&self) -> Result<Vec<f64>, SpectrumError> {
        let state = SecondOrderState::vacuum(self.sys, self.traj)?;
        let mut y = vec![0.0; self.state_len()];
        pack_pair(&state.eps, &state.eps_dot, &mut y);
        Ok(y)
    }
}

impl OdeSystem for EpsilonSystem<'_> {
    fn rhs(&mut self, t: f64, y: &[f64], dydt: &mut [f64]) {
        let (l, l_dot) = match self.traj.evaluate(t) {
            Ok(v) if v.0 > 0.0 => v,
            _ => {
                dydt.fill(f64::NAN);
                return;
            }
        };
        let l_ddot = match self.traj.acceleration(t) {
            Ok(a) => a,
            Err(_) => {
                dydt.fill(f64::NAN);
                return;
            }
        };
        self.sys
            .frequencies_into(l, &mut self.freq)
            .expect("l > 0 checked above");
        self.sys
            .coupling_into(l, l_dot, &mut self.m_buf)
            .expect("l > 0 checked above");
        self.sys
            .coupling_rate_into(l, l_dot, l_ddot, &mut self.m_rate)
            .expect("l > 0 checked above");
        let state = {
            let (eps, eps_dot) = unpack_pair(y, self.k);
            SecondOrderState { eps, eps_dot }
        };
        let acc = epsilon_acceleration(&state, &self.freq, &self.m_buf, &self.m_rate);
        pack_pair(&state.eps_dot, &acc, dydt);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{integrate_collect, StepperConfig};
    use std::f64::consts::PI;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn coefficients_static_limit() {
        let sys = ModeSystem::dirichlet(4, 0.0, 1.0).unwrap();
        let c = coefficients(&sys, 1.0, 0.0).unwrap();
        for n in 0..4 {
            assert!(close(c.a_plus[n], sys.omega0()[n], 1e-14));
            assert!(close(c.a_minus[n], 0.0, 1e-14));
        }
        assert!(c.c_plus.iter().all(|&x| x == 0.0));
        assert!(c.c_minus.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn coefficients_displaced_cavity() {
        // a⁻_11 = (π/2) [1 − (1/1.001)²] for l0 = 1, l = 1.001, massless.
        let sys = ModeSystem::dirichlet(2, 0.0, 1.0).unwrap();
        let c = coefficients(&sys, 1.001, 0.0).unwrap();
        let expected = 0.5 * PI * (1.0 - (1.0f64 / 1.001).powi(2));
        assert!(
            close(c.a_minus[0], expected, 1e-15),
            "a_minus {} vs {expected}",
            c.a_minus[0]
        );
        // Magnitude quoted to two digits: ~3.14e-3.
        assert!((expected - 3.14e-3).abs() < 5e-5);
    }

    #[test]
    fn coefficients_coupling_combination() {
        // c⁺_12 = ½ [M_21 + 2 M_12] = −2/3 at l = 1, l̇ = 1 (row n = 1,
        // column k = 2 lives at flat index 0·k_max + 1).
        let sys = ModeSystem::dirichlet(3, 0.0, 1.0).unwrap();
        let c = coefficients(&sys, 1.0, 1.0).unwrap();
        assert!(close(c.c_plus[1], -2.0 / 3.0, 1e-14));
    }

    #[test]
    fn static_cavity_solution_satisfies_rhs() {
        // ξ_n^(m) = 2 δ_nm e^{−iΩ_n⁰ t}, η = 0 must satisfy the system.
        let sys = ModeSystem::dirichlet(5, 0.0, 1.0).unwrap();
        let coeffs = coefficients(&sys, 1.0, 0.0).unwrap();
        let t = 0.37;
        let mut state = EvolutionState::vacuum(5);
        for n in 0..5 {
            state.xi[[n, n]] = 2.0 * (-C64::i() * sys.omega0()[n] * t).exp();
        }
        let (dxi, deta) = rhs_xi_eta(&state, &coeffs);
        for n in 0..5 {
            let expected = -C64::i() * sys.omega0()[n] * state.xi[[n, n]];
            assert!((dxi[[n, n]] - expected).norm() < 1e-13);
        }
        assert!(deta.iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn batched_rhs_matches_reference() {
        let sys = ModeSystem::dirichlet(6, 0.0, 1.0).unwrap();
        let traj = Trajectory::sinusoidal(1.0, 1e-2, 2.0 * PI).unwrap();
        let t = 0.31;
        let (l, l_dot) = traj.evaluate(t).unwrap();
        let coeffs = coefficients(&sys, l, l_dot).unwrap();

        // Pseudo-random state.
        let mut seed = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut state = EvolutionState::vacuum(6);
        for n in 0..6 {
            for m in 0..6 {
                state.xi[[n, m]] = C64::new(next(), next());
                state.eta[[n, m]] = C64::new(next(), next());
            }
        }
        let (dxi_ref, deta_ref) = rhs_xi_eta(&state, &coeffs);

        let mut system = XiEtaSystem::new(&sys, &traj);
        let y = state.to_flat();
        let mut dy = vec![0.0; y.len()];
        system.rhs(t, &y, &mut dy);
        let (dxi, deta) = unpack_pair(&dy, 6);
        for n in 0..6 {
            for m in 0..6 {
                assert!((dxi[[n, m]] - dxi_ref[[n, m]]).norm() < 1e-12);
                assert!((deta[[n, m]] - deta_ref[[n, m]]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn rhs_is_linear_and_columns_are_independent() {
        let sys = ModeSystem::dirichlet(5, 0.0, 1.0).unwrap();
        let traj = Trajectory::sinusoidal(1.0, 1e-2, 3.0 * PI).unwrap();
        let mut system = XiEtaSystem::new(&sys, &traj);
        let t = 0.63;

        let mut seed = 0xdeadbeefcafef00du64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let len = system.state_len();
        let y: Vec<f64> = (0..len).map(|_| next()).collect();

        // Linearity: rhs(2 y) = 2 rhs(y) up to roundoff.
        let mut dy = vec![0.0; len];
        let mut dy2 = vec![0.0; len];
        system.rhs(t, &y, &mut dy);
        let y2: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        system.rhs(t, &y2, &mut dy2);
        for i in 0..len {
            assert!(close(dy2[i], 2.0 * dy[i], 1e-12));
        }

        // Column independence: swapping two excitation columns commutes with
        // the flow.
        let (xi, eta) = unpack_pair(&y, 5);
        let mut xi_swapped = xi.clone();
        let mut eta_swapped = eta.clone();
        for n in 0..5 {
            xi_swapped.swap([n, 1], [n, 3]);
            eta_swapped.swap([n, 1], [n, 3]);
        }
        let mut y_swapped = vec![0.0; len];
        pack_pair(&xi_swapped, &eta_swapped, &mut y_swapped);
        let mut dy_swapped = vec![0.0; len];
        system.rhs(t, &y_swapped, &mut dy_swapped);
        let (dxi, deta) = unpack_pair(&dy, 5);
        let (dxi_s, deta_s) = unpack_pair(&dy_swapped, 5);
        for n in 0..5 {
            assert!((dxi_s[[n, 1]] - dxi[[n, 3]]).norm() < 1e-13);
            assert!((dxi_s[[n, 3]] - dxi[[n, 1]]).norm() < 1e-13);
            assert!((deta_s[[n, 1]] - deta[[n, 3]]).norm() < 1e-13);
            assert!((deta_s[[n, 3]] - deta[[n, 1]]).norm() < 1e-13);
        }
    }

    #[test]
    fn ab_static_solution() {
        // A_mn = δ_mn e^{−iΩ_n⁰ t}, B = 0 solves the static system.
        let sys = ModeSystem::dirichlet(4, 0.0, 1.0).unwrap();
        let t = 1.21;
        let mut a = Array2::<C64>::zeros((4, 4));
        for n in 0..4 {
            a[[n, n]] = (-C64::i() * sys.omega0()[n] * t).exp();
        }
        let b = Array2::<C64>::zeros((4, 4));
        let (da, db) = rhs_ab(&a, &b, &sys, 1.0, 0.0).unwrap();
        for n in 0..4 {
            let expected = -C64::i() * sys.omega0()[n] * a[[n, n]];
            assert!((da[[n, n]] - expected).norm() < 1e-13);
        }
        assert!(db.iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn gamma_is_uniform_for_massless_dirichlet() {
        let sys = ModeSystem::dirichlet(6, 0.0, 1.0).unwrap();
        let (l, l_dot) = (1.2, 0.7);
        let omega = sys.frequencies(l).unwrap();
        let gamma = frequency_gammas(&sys, l, l_dot, &omega);
        for g in &gamma {
            assert!(close(*g, -0.5 * l_dot / l, 1e-14));
        }
        // Massive case: check against a finite difference of Ω_n(t).
        let sys_m = ModeSystem::dirichlet(4, 2.0, 1.0).unwrap();
        let traj = Trajectory::sinusoidal(1.0, 1e-2, 3.0).unwrap();
        let t = 0.41;
        let (lt, vt) = traj.evaluate(t).unwrap();
        let omega_t = sys_m.frequencies(lt).unwrap();
        let gamma_m = frequency_gammas(&sys_m, lt, vt, &omega_t);
        let h = 1e-6;
        for n in 0..4 {
            let wp = sys_m.frequencies(traj.evaluate(t + h).unwrap().0).unwrap()[n];
            let wm = sys_m.frequencies(traj.evaluate(t - h).unwrap().0).unwrap()[n];
            let fd = 0.5 * (wp - wm) / (2.0 * h) / omega_t[n];
            assert!(close(gamma_m[n], fd, 1e-7), "{} vs {fd}", gamma_m[n]);
        }
    }

    #[test]
    fn epsilon_friction_term_is_minus_two_m() {
        // Massless Dirichlet: M antisymmetric, so M_mn − M_nm = −2 M_nm; the
        // assembled friction operator must act as −2M on ε̇.
        let sys = ModeSystem::dirichlet(5, 0.0, 1.0).unwrap();
        let (l, l_dot) = (1.13, -0.4);
        let m = sys.coupling(l, l_dot).unwrap();
        let omega = sys.frequencies(l).unwrap();
        let m_rate = vec![0.0; 25];

        let mut seed = 0x1234_5678_9abc_def0u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let eps = Array2::<C64>::zeros((5, 5));
        let eps_dot = Array2::from_shape_fn((5, 5), |_| C64::new(next(), next()));
        let state = SecondOrderState {
            eps,
            eps_dot: eps_dot.clone(),
        };
        let acc = epsilon_acceleration(&state, &omega, m.entries(), &m_rate);
        // With ε = 0 and Ṁ = 0 (arbitrary here), ε̈ = −Σ_j (M_jn − M_nj) ε̇_j
        // = +2 Σ_j M_nj ε̇_j.
        for n in 0..5 {
            for col in 0..5 {
                let mut expected = C64::new(0.0, 0.0);
                for j in 0..5 {
                    expected += 2.0 * m.get(n, j) * eps_dot[[j, col]];
                }
                assert!((acc[[n, col]] - expected).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn epsilon_static_solution() {
        // ε_n^(m) = δ_nm e^{−iΩ_n⁰ t} solves the static system.
        let sys = ModeSystem::dirichlet(4, 0.0, 1.0).unwrap();
        let omega = sys.omega0().to_vec();
        let t = 0.83;
        let mut eps = Array2::<C64>::zeros((4, 4));
        let mut eps_dot = Array2::<C64>::zeros((4, 4));
        for n in 0..4 {
            let phase = (-C64::i() * omega[n] * t).exp();
            eps[[n, n]] = phase;
            eps_dot[[n, n]] = -C64::i() * omega[n] * phase;
        }
        let state = SecondOrderState { eps: eps.clone(), eps_dot };
        let zeros = vec![0.0; 16];
        let acc = epsilon_acceleration(&state, &omega, &zeros, &zeros);
        for n in 0..4 {
            let expected = -omega[n] * omega[n] * eps[[n, n]];
            assert!((acc[[n, n]] - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn epsilon_initial_conditions_include_coupling() {
        let sys = ModeSystem::dirichlet(3, 0.0, 1.0).unwrap();
        let traj = Trajectory::sinusoidal(1.0, 1e-3, 3.0 * PI).unwrap();
        let state = SecondOrderState::vacuum(&sys, &traj).unwrap();
        let m0 = sys
            .coupling(1.0, traj.initial_velocity_discontinuity())
            .unwrap();
        assert!(m0.get(0, 1).abs() > 0.0, "motion starts with a velocity jump");
        for n in 0..3 {
            for m in 0..3 {
                let expected = if n == m {
                    C64::new(-m0.get(m, n), -sys.omega0()[n])
                } else {
                    C64::new(-m0.get(m, n), 0.0)
                };
                assert!((state.eps_dot[[n, m]] - expected).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn static_cavity_phases_survive_long_integration() {
        // Decoupled phases: ξ_nn(100) = 2 e^{−iΩ_n⁰·100} within 1e-7 and
        // η stays identically zero. Local tolerance 1e-10 keeps the phase
        // drift accumulated over ~3000 steps two decades under the bound.
        let k = 6;
        let sys = ModeSystem::dirichlet(k, 0.0, 1.0).unwrap();
        let traj = Trajectory::fixed(1.0).unwrap();
        let mut system = XiEtaSystem::new(&sys, &traj);
        let y0 = system.initial_state();
        let cfg = StepperConfig {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            ..Default::default()
        };
        let (out, _) = integrate_collect(&mut system, &y0, 0.0, &[100.0], &cfg).unwrap();
        let state = EvolutionState::from_flat(100.0, &out[0].1, k);
        for n in 0..k {
            let expected = 2.0 * (-C64::i() * sys.omega0()[n] * 100.0).exp();
            assert!(
                (state.xi[[n, n]] - expected).norm() < 1e-7,
                "mode {n}: {} vs {expected}",
                state.xi[[n, n]]
            );
        }
        assert!(state.eta.iter().all(|z| z.norm() == 0.0));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // The flow is linear: scaling the state scales the derivative.
            #[test]
            fn rhs_scales_linearly(seed in any::<u64>(), scale in -4.0f64..4.0) {
                let sys = ModeSystem::dirichlet(4, 0.0, 1.0).unwrap();
                let traj = Trajectory::sinusoidal(1.0, 1e-2, 2.0 * PI).unwrap();
                let mut system = XiEtaSystem::new(&sys, &traj);
                let len = system.state_len();
                let mut s = seed | 1;
                let mut next = move || {
                    s ^= s << 13;
                    s ^= s >> 7;
                    s ^= s << 17;
                    (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
                };
                let y: Vec<f64> = (0..len).map(|_| next()).collect();
                let y_scaled: Vec<f64> = y.iter().map(|v| scale * v).collect();
                let mut dy = vec![0.0; len];
                let mut dy_scaled = vec![0.0; len];
                system.rhs(0.37, &y, &mut dy);
                system.rhs(0.37, &y_scaled, &mut dy_scaled);
                let magnitude = dy.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                for i in 0..len {
                    prop_assert!(
                        (dy_scaled[i] - scale * dy[i]).abs()
                            <= 1e-12 * (1.0 + magnitude * scale.abs())
                    );
                }
            }
        }
    }

    /// Short propagation of the ξ/η system against the second-order oracle:
    /// reconstruct (ξ, η) from (ε, ε̇) and compare matrices entrywise.
    #[test]
    fn xi_eta_agrees_with_second_order_oracle() {
        let sys = ModeSystem::dirichlet(6, 0.0, 1.0).unwrap();
        let traj = Trajectory::sinusoidal(1.0, 1e-2, 2.0 * PI).unwrap();
        let t_end = 2.0;
        let cfg = StepperConfig {
            abs_tol: 1e-11,
            rel_tol: 1e-11,
            ..Default::default()
        };

        let mut primary = XiEtaSystem::new(&sys, &traj);
        let y0 = primary.initial_state();
        let (out, _) = integrate_collect(&mut primary, &y0, 0.0, &[t_end], &cfg).unwrap();
        let state = EvolutionState::from_flat(t_end, &out[0].1, 6);

        let mut oracle = EpsilonSystem::new(&sys, &traj).unwrap();
        let z0 = oracle.initial_state().unwrap();
        let (out2, _) = integrate_collect(&mut oracle, &z0, 0.0, &[t_end], &cfg).unwrap();
        let (eps, eps_dot) = unpack_pair(&out2[0].1, 6);
        let second = SecondOrderState { eps, eps_dot };
        let (l, l_dot) = traj.evaluate(t_end).unwrap();
        let (xi_rec, eta_rec) = xi_eta_from_epsilon(&second, &sys, l, l_dot).unwrap();

        for n in 0..6 {
            for m in 0..6 {
                assert!(
                    (state.xi[[n, m]] - xi_rec[[n, m]]).norm() < 1e-8,
                    "xi mismatch at ({n},{m}): {} vs {}",
                    state.xi[[n, m]],
                    xi_rec[[n, m]]
                );
                assert!((state.eta[[n, m]] - eta_rec[[n, m]]).norm() < 1e-8);
            }
        }
    }
}

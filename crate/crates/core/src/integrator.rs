//! Adaptive embedded Runge–Kutta stepping with checkpointed output.
//!
//! The default method is the 13-stage Prince–Dormand 8(7) pair (the `rk8pd`
//! stepper of the GNU Scientific Library); a Dormand–Prince 5(4) pair is
//! included for speed comparisons. The state is a flat `&[f64]` slice;
//! complex quantities are integrated as interleaved real pairs and the
//! stepper is agnostic to that structure.

use thiserror::Error;

/// Right-hand side of `dy/dt = f(t, y)`.
pub trait OdeSystem {
    fn rhs(&mut self, t: f64, y: &[f64], dydt: &mut [f64]);
}

impl<F: FnMut(f64, &[f64], &mut [f64])> OdeSystem for F {
    fn rhs(&mut self, t: f64, y: &[f64], dydt: &mut [f64]) {
        self(t, y, dydt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Prince–Dormand 8(7), 13 stages.
    Rk8pd,
    /// Dormand–Prince 5(4), 7 stages.
    Dopri5,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rk8pd" | "rk87" => Ok(Method::Rk8pd),
            "dopri5" | "rk54" => Ok(Method::Dopri5),
            other => Err(format!(
                "unknown method '{other}' (expected rk8pd or dopri5)"
            )),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Rk8pd => write!(f, "rk8pd"),
            Method::Dopri5 => write!(f, "dopri5"),
        }
    }
}

/// Stepper configuration. The local error per step is bounded componentwise
/// by `abs_tol + rel_tol * |y|`.
#[derive(Debug, Clone, Copy)]
pub struct StepperConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub method: Method,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            abs_tol: 1e-8,
            rel_tol: 1e-8,
            initial_step: 1e-3,
            max_step: f64::INFINITY,
            method: Method::Rk8pd,
        }
    }
}

#[derive(Debug, Error)]
pub enum IntegrateError {
    #[error("step size underflow at t = {t:.9e} (h = {h:.3e}, error ratio {error_ratio:.3e})")]
    StepSizeUnderflow { t: f64, h: f64, error_ratio: f64 },
    #[error("non-finite state encountered at t = {t:.9e}")]
    NonFinite { t: f64 },
    #[error("checkpoints must be finite, ascending and start at or after t0")]
    BadCheckpoints,
    #[error("invalid stepper configuration: {0}")]
    BadConfig(String),
}

/// Step counters reported after a run.
#[derive(Debug, Clone, Copy, Default, serde::Serialize)]
pub struct Stats {
    pub steps_accepted: u64,
    pub steps_rejected: u64,
    pub rhs_evals: u64,
    pub last_step: f64,
}

struct Tableau {
    c: &'static [f64],
    a: &'static [&'static [f64]],
    /// Weights of the solution the state is advanced with.
    b: &'static [f64],
    /// Weights of the embedded lower-order solution (error estimate).
    b_embedded: &'static [f64],
    /// Local error of the estimate scales as `h^err_order`.
    err_order: f64,
}

impl Method {
    fn tableau(self) -> &'static Tableau {
        match self {
            Method::Rk8pd => &RK8PD,
            Method::Dopri5 => &DOPRI5,
        }
    }
}

// Prince & Dormand RK8(7)13M coefficients, as used by GSL's rk8pd stepper.
static RK8PD_C: [f64; 13] = [
    0.0,
    1.0 / 18.0,
    1.0 / 12.0,
    1.0 / 8.0,
    5.0 / 16.0,
    3.0 / 8.0,
    59.0 / 400.0,
    93.0 / 200.0,
    5490023248.0 / 9719169821.0,
    13.0 / 20.0,
    1201146811.0 / 1299019798.0,
    1.0,
    1.0,
];

static RK8PD_A1: [f64; 1] = [1.0 / 18.0];
static RK8PD_A2: [f64; 2] = [1.0 / 48.0, 1.0 / 16.0];
static RK8PD_A3: [f64; 3] = [1.0 / 32.0, 0.0, 3.0 / 32.0];
static RK8PD_A4: [f64; 4] = [5.0 / 16.0, 0.0, -75.0 / 64.0, 75.0 / 64.0];
static RK8PD_A5: [f64; 5] = [3.0 / 80.0, 0.0, 0.0, 3.0 / 16.0, 3.0 / 20.0];
static RK8PD_A6: [f64; 6] = [
    29443841.0 / 614563906.0,
    0.0,
    0.0,
    77736538.0 / 692538347.0,
    -28693883.0 / 1125000000.0,
    23124283.0 / 1800000000.0,
];
static RK8PD_A7: [f64; 7] = [
    16016141.0 / 946692911.0,
    0.0,
    0.0,
    61564180.0 / 158732637.0,
    22789713.0 / 633445777.0,
    545815736.0 / 2771057229.0,
    -180193667.0 / 1043307555.0,
];
static RK8PD_A8: [f64; 8] = [
    39632708.0 / 573591083.0,
    0.0,
    0.0,
    -433636366.0 / 683701615.0,
    -421739975.0 / 2616292301.0,
    100302831.0 / 723423059.0,
    790204164.0 / 839813087.0,
    800635310.0 / 3783071287.0,
];
static RK8PD_A9: [f64; 9] = [
    246121993.0 / 1340847787.0,
    0.0,
    0.0,
    -37695042795.0 / 15268766246.0,
    -309121744.0 / 1061227803.0,
    -12992083.0 / 490766935.0,
    6005943493.0 / 2108947869.0,
    393006217.0 / 1396673457.0,
    123872331.0 / 1001029789.0,
];
static RK8PD_A10: [f64; 10] = [
    -1028468189.0 / 846180014.0,
    0.0,
    0.0,
    8478235783.0 / 508512852.0,
    1311729495.0 / 1432422823.0,
    -10304129995.0 / 1701304382.0,
    -48777925059.0 / 3047939560.0,
    15336726248.0 / 1032824649.0,
    -45442868181.0 / 3398467696.0,
    3065993473.0 / 597172653.0,
];
static RK8PD_A11: [f64; 11] = [
    185892177.0 / 718116043.0,
    0.0,
    0.0,
    -3185094517.0 / 667107341.0,
    -477755414.0 / 1098053517.0,
    -703635378.0 / 230739211.0,
    5731566787.0 / 1027545527.0,
    5232866602.0 / 850066563.0,
    -4093664535.0 / 808688257.0,
    3962137247.0 / 1805957418.0,
    65686358.0 / 487910083.0,
];
static RK8PD_A12: [f64; 12] = [
    403863854.0 / 491063109.0,
    0.0,
    0.0,
    -5068492393.0 / 434740067.0,
    -411421997.0 / 543043805.0,
    652783627.0 / 914296604.0,
    11173962825.0 / 925320556.0,
    -13158990841.0 / 6184727034.0,
    3936647629.0 / 1978049680.0,
    -160528059.0 / 685178525.0,
    248638103.0 / 1413531060.0,
    0.0,
];

/// 8th-order weights (the state is advanced with these).
static RK8PD_B8: [f64; 13] = [
    14005451.0 / 335480064.0,
    0.0,
    0.0,
    0.0,
    0.0,
    -59238493.0 / 1068277825.0,
    181606767.0 / 758867731.0,
    561292985.0 / 797845732.0,
    -1041891430.0 / 1371343529.0,
    760417239.0 / 1151165299.0,
    118820643.0 / 751138087.0,
    -528747749.0 / 2220607170.0,
    1.0 / 4.0,
];

/// Embedded 7th-order weights.
static RK8PD_B7: [f64; 13] = [
    13451932.0 / 455176623.0,
    0.0,
    0.0,
    0.0,
    0.0,
    -808719846.0 / 976000145.0,
    1757004468.0 / 5645159321.0,
    656045339.0 / 265891186.0,
    -3867574721.0 / 1518517206.0,
    465885868.0 / 322736535.0,
    53011238.0 / 667516719.0,
    2.0 / 45.0,
    0.0,
];

static RK8PD_A: [&[f64]; 12] = [
    &RK8PD_A1, &RK8PD_A2, &RK8PD_A3, &RK8PD_A4, &RK8PD_A5, &RK8PD_A6, &RK8PD_A7, &RK8PD_A8,
    &RK8PD_A9, &RK8PD_A10, &RK8PD_A11, &RK8PD_A12,
];

static RK8PD: Tableau = Tableau {
    c: &RK8PD_C,
    a: &RK8PD_A,
    b: &RK8PD_B8,
    b_embedded: &RK8PD_B7,
    err_order: 8.0,
};

// Dormand–Prince RK5(4)7M coefficients.
static DOPRI5_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
static DOPRI5_A1: [f64; 1] = [1.0 / 5.0];
static DOPRI5_A2: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
static DOPRI5_A3: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
static DOPRI5_A4: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
static DOPRI5_A5: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
static DOPRI5_A6: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
static DOPRI5_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
static DOPRI5_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];
static DOPRI5_A: [&[f64]; 6] = [
    &DOPRI5_A1, &DOPRI5_A2, &DOPRI5_A3, &DOPRI5_A4, &DOPRI5_A5, &DOPRI5_A6,
];

static DOPRI5: Tableau = Tableau {
    c: &DOPRI5_C,
    a: &DOPRI5_A,
    b: &DOPRI5_B5,
    b_embedded: &DOPRI5_B4,
    err_order: 5.0,
};

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;

/// Integrates `dy/dt = f(t, y)` from `t0`, delivering the state at each
/// checkpoint through `on_checkpoint`. Checkpoint times are hit exactly by
/// clamping the step; step size adapts in between. A checkpoint equal to
/// `t0` emits the initial state.
pub fn integrate<S: OdeSystem>(
    system: &mut S,
    y0: &[f64],
    t0: f64,
    checkpoints: &[f64],
    cfg: &StepperConfig,
    mut on_checkpoint: impl FnMut(f64, &[f64]),
) -> Result<Stats, IntegrateError> {
    validate_config(cfg)?;
    let mut prev = t0;
    for &cp in checkpoints {
        if !cp.is_finite() || cp < prev {
            return Err(IntegrateError::BadCheckpoints);
        }
        prev = cp;
    }

    let tableau = cfg.method.tableau();
    let stages = tableau.b.len();
    let dim = y0.len();
    let mut y = y0.to_vec();
    let mut y_new = vec![0.0; dim];
    let mut y_stage = vec![0.0; dim];
    let mut err = vec![0.0; dim];
    let mut k: Vec<Vec<f64>> = (0..stages).map(|_| vec![0.0; dim]).collect();

    let mut t = t0;
    let mut h = cfg.initial_step.min(cfg.max_step);
    let mut stats = Stats::default();

    for &cp in checkpoints {
        loop {
            let gap = cp - t;
            if gap <= time_eps(cp) {
                break;
            }
            let h_try = h.min(gap).min(cfg.max_step);
            if h_try < 1e-14 * t.abs().max(1.0) {
                return Err(IntegrateError::StepSizeUnderflow {
                    t,
                    h: h_try,
                    error_ratio: f64::NAN,
                });
            }

            // Stage sweep; accumulation is a sequence of axpys so the inner
            // loops vectorize.
            system.rhs(t, &y, &mut k[0]);
            for s in 1..stages {
                y_stage.copy_from_slice(&y);
                for (j, &a) in tableau.a[s - 1].iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    let ha = h_try * a;
                    let kj = &k[j];
                    for (ys, kv) in y_stage.iter_mut().zip(kj) {
                        *ys += ha * kv;
                    }
                }
                let (head, tail) = k.split_at_mut(s);
                let _ = head;
                system.rhs(t + tableau.c[s] * h_try, &y_stage, &mut tail[0]);
            }
            stats.rhs_evals += stages as u64;

            // Solution and embedded-difference accumulation.
            y_new.copy_from_slice(&y);
            err.fill(0.0);
            for s in 0..stages {
                let hb = h_try * tableau.b[s];
                let he = h_try * (tableau.b[s] - tableau.b_embedded[s]);
                let ks = &k[s];
                if hb != 0.0 {
                    for (yn, kv) in y_new.iter_mut().zip(ks) {
                        *yn += hb * kv;
                    }
                }
                if he != 0.0 {
                    for (ev, kv) in err.iter_mut().zip(ks) {
                        *ev += he * kv;
                    }
                }
            }

            // Componentwise mixed absolute/relative error ratio.
            let mut ratio: f64 = 0.0;
            for i in 0..dim {
                let scale = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y_new[i].abs());
                ratio = ratio.max((err[i] / scale).abs());
            }
            if !ratio.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
                return Err(IntegrateError::NonFinite { t });
            }

            if ratio <= 1.0 {
                t += h_try;
                if cp - t <= time_eps(cp) {
                    t = cp;
                }
                std::mem::swap(&mut y, &mut y_new);
                stats.steps_accepted += 1;
                stats.last_step = h_try;
                let grow = if ratio < 1e-300 {
                    FAC_MAX
                } else {
                    (SAFETY * ratio.powf(-1.0 / tableau.err_order)).clamp(FAC_MIN, FAC_MAX)
                };
                h = (h_try * grow).min(cfg.max_step);
            } else {
                stats.steps_rejected += 1;
                let shrink = (SAFETY * ratio.powf(-1.0 / tableau.err_order)).max(FAC_MIN);
                h = h_try * shrink;
                if h < 1e-14 * t.abs().max(1.0) {
                    return Err(IntegrateError::StepSizeUnderflow {
                        t,
                        h,
                        error_ratio: ratio,
                    });
                }
            }
        }
        t = cp;
        on_checkpoint(cp, &y);
    }
    Ok(stats)
}

fn time_eps(t: f64) -> f64 {
    1e-12 * t.abs().max(1.0)
}

fn validate_config(cfg: &StepperConfig) -> Result<(), IntegrateError> {
    if !(cfg.abs_tol > 0.0) || !(cfg.rel_tol > 0.0) {
        return Err(IntegrateError::BadConfig(
            "tolerances must be positive".into(),
        ));
    }
    if !(cfg.initial_step > 0.0) {
        return Err(IntegrateError::BadConfig(
            "initial_step must be positive".into(),
        ));
    }
    if !(cfg.max_step > 0.0) {
        return Err(IntegrateError::BadConfig(
            "max_step must be positive".into(),
        ));
    }
    Ok(())
}

/// Convenience wrapper collecting `(t, state)` at every checkpoint.
pub fn integrate_collect<S: OdeSystem>(
    system: &mut S,
    y0: &[f64],
    t0: f64,
    checkpoints: &[f64],
    cfg: &StepperConfig,
) -> Result<(Vec<(f64, Vec<f64>)>, Stats), IntegrateError> {
    let mut out = Vec::with_capacity(checkpoints.len());
    let stats = integrate(system, y0, t0, checkpoints, cfg, |t, y| {
        out.push((t, y.to_vec()));
    })?;
    Ok((out, stats))
}

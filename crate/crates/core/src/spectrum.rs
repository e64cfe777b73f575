//! Truncated instantaneous spectrum and intermode coupling matrix.
//!
//! For Dirichlet conditions on `[0, l(t)]` the normalized eigenfunctions are
//! `φ_n = sqrt(2/l) sin(nπx/l)`, the frequencies are
//! `Ω_n = sqrt((nπ/l)² + m²)` and the coupling matrix
//! `M_nm = ∫ φ̇_n φ_m dx` has the closed form
//! `M_nm = (l̇/l) (−1)^{n+m} 2nm/(m² − n²)` for `n ≠ m`, `M_nn = 0`.
//!
//! Mode indices are 1-based in the formulas; in code the mode with number
//! `n` lives at index `n − 1`.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectrumError {
    #[error("cavity length {0} must be positive")]
    NonPositiveLength(f64),
    #[error("invalid mode system: {0}")]
    Invalid(String),
}

/// Provider of the instantaneous eigenbasis data for one family of boundary
/// conditions. Only the Dirichlet family ships; the general Robin-type family
/// fits behind the same interface.
pub trait ModeBasis: Send + Sync + std::fmt::Debug {
    fn mode_count(&self) -> usize;

    /// Writes `Ω_n(l)` for `n = 1..=k_max` into `out`.
    fn frequencies_into(&self, mass: f64, l: f64, out: &mut [f64]);

    /// Writes the row-major coupling matrix `M_nm(l, l̇)` into `out`.
    fn coupling_into(&self, l: f64, l_dot: f64, out: &mut [f64]);

    /// Writes `dM/dt` given `l, l̇, l̈` into `out`.
    fn coupling_rate_into(&self, l: f64, l_dot: f64, l_ddot: f64, out: &mut [f64]);
}

/// Dirichlet boundary conditions at both walls. The `(−1)^{n+m} 2nm/(m²−n²)`
/// shape factor is precomputed once; only the `l̇/l` scale changes in time.
/// The spatial eigenfunctions do not depend on the mass, so the same shape
/// serves the massive case.
#[derive(Debug, Clone)]
pub struct Dirichlet {
    k_max: usize,
    shape: Vec<f64>,
}

impl Dirichlet {
    pub fn new(k_max: usize) -> Self {
        let mut shape = vec![0.0; k_max * k_max];
        for i in 0..k_max {
            let n = (i + 1) as f64;
            for j in 0..k_max {
                if i == j {
                    continue;
                }
                let m = (j + 1) as f64;
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                shape[i * k_max + j] = sign * 2.0 * n * m / (m * m - n * n);
            }
        }
        Dirichlet { k_max, shape }
    }
}

impl ModeBasis for Dirichlet {
    fn mode_count(&self) -> usize {
        self.k_max
    }

    fn frequencies_into(&self, mass: f64, l: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.k_max);
        let m2 = mass * mass;
        for (i, slot) in out.iter_mut().enumerate() {
            let wave = (i + 1) as f64 * std::f64::consts::PI / l;
            *slot = (wave * wave + m2).sqrt();
        }
    }

    fn coupling_into(&self, l: f64, l_dot: f64, out: &mut [f64]) {
        let scale = l_dot / l;
        for (slot, &s) in out.iter_mut().zip(&self.shape) {
            *slot = scale * s;
        }
    }

    fn coupling_rate_into(&self, l: f64, l_dot: f64, l_ddot: f64, out: &mut [f64]) {
        // d/dt (l̇/l) = l̈/l − (l̇/l)².
        let ratio = l_dot / l;
        let scale_rate = l_ddot / l - ratio * ratio;
        for (slot, &s) in out.iter_mut().zip(&self.shape) {
            *slot = scale_rate * s;
        }
    }
}

/// Truncated mode system: cut-off, mass, reference length and the reference
/// frequencies `Ω_n⁰ = Ω_n(l0)`.
#[derive(Debug)]
pub struct ModeSystem {
    k_max: usize,
    mass: f64,
    l0: f64,
    omega0: Vec<f64>,
    basis: Box<dyn ModeBasis>,
}

impl ModeSystem {
    pub fn dirichlet(k_max: usize, mass: f64, l0: f64) -> Result<Self, SpectrumError> {
        Self::with_basis(Box::new(Dirichlet::new(k_max)), mass, l0)
    }

    pub fn with_basis(
        basis: Box<dyn ModeBasis>,
        mass: f64,
        l0: f64,
    ) -> Result<Self, SpectrumError> {
        let k_max = basis.mode_count();
        if k_max == 0 {
            return Err(SpectrumError::Invalid("k_max must be at least 1".into()));
        }
        if !mass.is_finite() || mass < 0.0 {
            return Err(SpectrumError::Invalid(format!(
                "mass = {mass} must be non-negative"
            )));
        }
        if !l0.is_finite() || l0 <= 0.0 {
            return Err(SpectrumError::NonPositiveLength(l0));
        }
        let mut omega0 = vec![0.0; k_max];
        basis.frequencies_into(mass, l0, &mut omega0);
        if omega0[0] <= 0.0 {
            return Err(SpectrumError::Invalid(
                "lowest reference frequency vanishes".into(),
            ));
        }
        Ok(ModeSystem {
            k_max,
            mass,
            l0,
            omega0,
            basis,
        })
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn l0(&self) -> f64 {
        self.l0
    }

    /// Reference frequencies `Ω_n⁰` (mode `n` at index `n − 1`).
    pub fn omega0(&self) -> &[f64] {
        &self.omega0
    }

    /// Instantaneous frequencies at cavity size `l`.
    pub fn frequencies(&self, l: f64) -> Result<Vec<f64>, SpectrumError> {
        let mut out = vec![0.0; self.k_max];
        self.frequencies_into(l, &mut out)?;
        Ok(out)
    }

    pub fn frequencies_into(&self, l: f64, out: &mut [f64]) -> Result<(), SpectrumError> {
        if !l.is_finite() || l <= 0.0 {
            return Err(SpectrumError::NonPositiveLength(l));
        }
        self.basis.frequencies_into(self.mass, l, out);
        Ok(())
    }

    /// Coupling matrix at `(l, l̇)`.
    pub fn coupling(&self, l: f64, l_dot: f64) -> Result<CouplingMatrix, SpectrumError> {
        if !l.is_finite() || l <= 0.0 {
            return Err(SpectrumError::NonPositiveLength(l));
        }
        let mut entries = vec![0.0; self.k_max * self.k_max];
        self.basis.coupling_into(l, l_dot, &mut entries);
        Ok(CouplingMatrix {
            k_max: self.k_max,
            scale: l_dot / l,
            entries,
        })
    }

    pub fn coupling_into(&self, l: f64, l_dot: f64, out: &mut [f64]) -> Result<(), SpectrumError> {
        if !l.is_finite() || l <= 0.0 {
            return Err(SpectrumError::NonPositiveLength(l));
        }
        self.basis.coupling_into(l, l_dot, out);
        Ok(())
    }

    /// `dM/dt` at `(l, l̇, l̈)`, used by the second-order propagation oracle.
    pub fn coupling_rate_into(
        &self,
        l: f64,
        l_dot: f64,
        l_ddot: f64,
        out: &mut [f64],
    ) -> Result<(), SpectrumError> {
        if !l.is_finite() || l <= 0.0 {
            return Err(SpectrumError::NonPositiveLength(l));
        }
        self.basis.coupling_rate_into(l, l_dot, l_ddot, out);
        Ok(())
    }
}

/// Dense coupling matrix with the `l̇/l` scale it was evaluated at.
#[derive(Debug, Clone)]
pub struct CouplingMatrix {
    k_max: usize,
    scale: f64,
    entries: Vec<f64>,
}

impl CouplingMatrix {
    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// `l̇/l` at the evaluation time.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Entry `M_{(i+1)(j+1)}` for 0-based indices.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.k_max + j]
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

//! Domain types shared by every solver: coefficients, mesh, macroscopic
//! fields and the signal response function.
//!
//! Everything here is nondimensional. One time unit corresponds to roughly
//! 10 s and one space unit to roughly 200 µm; see [`TIME_SCALE_SECONDS`] and
//! [`LENGTH_SCALE_MICRONS`].

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Physical duration of one nondimensional time unit, in seconds.
pub const TIME_SCALE_SECONDS: f64 = 10.0;
/// Physical length of one nondimensional space unit, in micrometres.
pub const LENGTH_SCALE_MICRONS: f64 = 200.0;

/// Coefficients of the three-field model (cells, chemoattractant, nutrient).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    /// Cell diffusivity.
    pub d_rho: f64,
    /// Chemotactic amplitude towards the chemoattractant.
    pub chi_s: f64,
    /// Chemotactic amplitude towards the nutrient.
    pub chi_n: f64,
    /// Chemoattractant diffusivity.
    pub d_s: f64,
    /// Nutrient diffusivity.
    pub d_n: f64,
    /// Chemoattractant degradation rate.
    pub alpha: f64,
    /// Chemoattractant production rate per cell.
    pub beta: f64,
    /// Nutrient consumption rate per cell.
    pub gamma: f64,
    /// Ratio between pulse speed and individual run speed.
    pub epsilon: f64,
    /// Total cell mass.
    pub mass: f64,
    /// Initial (uniform) nutrient level.
    pub n0: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            d_rho: 1.0,
            chi_s: 1.0,
            chi_n: 1.0,
            d_s: 2.0,
            d_n: 0.0,
            alpha: 0.05,
            beta: 1.0,
            gamma: 1.0,
            epsilon: 0.1,
            mass: 1.0,
            n0: 10.0,
        }
    }
}

/// Every invariant violated by a parameter set.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid parameters: {}", .violations.join("; "))]
pub struct ParamError {
    pub violations: Vec<String>,
}

impl ParamError {
    pub fn single(msg: impl Into<String>) -> Self {
        Self {
            violations: vec![msg.into()],
        }
    }
}

impl ModelParams {
    /// Named coefficients, in declaration order.
    pub fn coefficients(&self) -> [(&'static str, f64); 11] {
        [
            ("d_rho", self.d_rho),
            ("chi_s", self.chi_s),
            ("chi_n", self.chi_n),
            ("d_s", self.d_s),
            ("d_n", self.d_n),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("epsilon", self.epsilon),
            ("mass", self.mass),
            ("n0", self.n0),
        ]
    }

    /// Returns `self` unchanged when every invariant holds, otherwise the
    /// full list of violations.
    pub fn validate(self) -> Result<Self, ParamError> {
        let mut violations = Vec::new();
        for (name, value) in self.coefficients() {
            if !value.is_finite() {
                violations.push(format!("{name} must be finite"));
            } else if value < 0.0 {
                violations.push(format!("{name} must be non-negative"));
            }
        }
        if self.d_rho.is_finite() && self.d_rho == 0.0 {
            violations.push("D_rho must be positive".to_string());
        }
        if self.epsilon.is_finite() && !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            violations.push("epsilon out of range (0, 1)".to_string());
        }
        if self.mass.is_finite() && self.mass == 0.0 {
            violations.push("mass must be positive".to_string());
        }
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(ParamError { violations })
        }
    }
}

/// Free-function form of [`ModelParams::validate`].
pub fn validate(params: ModelParams) -> Result<ModelParams, ParamError> {
    params.validate()
}

/// Uniform cell-centred mesh on `[0, length]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Grid1D {
    pub length: f64,
    pub n_cells: usize,
}

impl Default for Grid1D {
    fn default() -> Self {
        Self {
            length: 200.0,
            n_cells: 2000,
        }
    }
}

impl Grid1D {
    pub fn new(length: f64, n_cells: usize) -> Result<Self, ParamError> {
        Self { length, n_cells }.validate()
    }

    pub fn validate(self) -> Result<Self, ParamError> {
        let mut violations = Vec::new();
        if !(self.length.is_finite() && self.length > 0.0) {
            violations.push("grid length must be positive".to_string());
        }
        if self.n_cells < 3 {
            violations.push("grid needs at least 3 cells".to_string());
        }
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(ParamError { violations })
        }
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.length / self.n_cells as f64
    }

    /// Centre of cell `i`.
    #[inline]
    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx()
    }

    /// Position of face `k`; face 0 is the left wall, face `n_cells` the right one.
    #[inline]
    pub fn face(&self, k: usize) -> f64 {
        k as f64 * self.dx()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| self.center(i)).collect()
    }

    /// Index of the cell containing `x`, clamped to the mesh.
    pub fn cell_of(&self, x: f64) -> usize {
        let i = (x / self.dx()).floor();
        if i < 0.0 {
            0
        } else {
            (i as usize).min(self.n_cells - 1)
        }
    }
}

/// Cell density, chemoattractant and nutrient on a grid at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroState {
    pub t: f64,
    pub rho: Vec<f64>,
    pub s: Vec<f64>,
    pub n: Vec<f64>,
}

impl MacroState {
    /// Uniform state of length `n_cells`.
    pub fn uniform(n_cells: usize, rho: f64, s: f64, n: f64) -> Self {
        Self {
            t: 0.0,
            rho: vec![rho; n_cells],
            s: vec![s; n_cells],
            n: vec![n; n_cells],
        }
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    /// `Σ rho_i dx`.
    pub fn mass(&self, dx: f64) -> f64 {
        self.rho.iter().sum::<f64>() * dx
    }
}

/// Shape of the signal response `φ_δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum ResponseFunction {
    /// `φ(Y) = -(2/π) atan(Y/δ)`.
    Arctan { delta: f64 },
    /// `φ(Y) = φ0` for `Y < 0`, `-φ0` for `Y > 0`, `0` at `Y = 0`.
    Bivaluated { phi0: f64 },
}

impl Default for ResponseFunction {
    fn default() -> Self {
        ResponseFunction::Arctan { delta: 1e-3 }
    }
}

impl ResponseFunction {
    pub fn arctan(delta: f64) -> Self {
        ResponseFunction::Arctan { delta }
    }

    pub fn bivaluated(phi0: f64) -> Self {
        ResponseFunction::Bivaluated { phi0 }
    }

    pub fn validate(self) -> Result<Self, ParamError> {
        match self {
            ResponseFunction::Arctan { delta } if !(delta.is_finite() && delta > 0.0) => {
                Err(ParamError::single("response delta must be positive"))
            }
            ResponseFunction::Bivaluated { phi0 } if !(phi0.is_finite() && phi0 > 0.0) => {
                Err(ParamError::single("response phi0 must be positive"))
            }
            r => Ok(r),
        }
    }

    /// Evaluates `φ_δ(y)`.
    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            ResponseFunction::Arctan { delta } => -2.0 / PI * (y / delta).atan(),
            ResponseFunction::Bivaluated { phi0 } => {
                if y < 0.0 {
                    phi0
                } else if y > 0.0 {
                    -phi0
                } else {
                    0.0
                }
            }
        }
    }

    /// Supremum of `|φ_δ|`.
    pub fn max_abs(&self) -> f64 {
        match *self {
            ResponseFunction::Arctan { .. } => 1.0,
            ResponseFunction::Bivaluated { phi0 } => phi0,
        }
    }
}

/// Decreasing exponential against the left wall with total mass `params.mass`,
/// no chemoattractant and nutrient at `params.n0`.
pub fn initial_condition(
    grid: &Grid1D,
    params: &ModelParams,
    decay_rate: f64,
) -> Result<MacroState, ParamError> {
    initial_condition_centered(grid, params, decay_rate, 0.0)
}

/// Same as [`initial_condition`] but with the bump `exp(-decay_rate |x - center|)`.
pub fn initial_condition_centered(
    grid: &Grid1D,
    params: &ModelParams,
    decay_rate: f64,
    center: f64,
) -> Result<MacroState, ParamError> {
    let params = params.validate()?;
    let grid = grid.validate()?;
    if !(decay_rate.is_finite() && decay_rate > 0.0) {
        return Err(ParamError::single("decay_rate must be positive"));
    }
    let dx = grid.dx();
    let mut rho: Vec<f64> = (0..grid.n_cells)
        .map(|i| (-decay_rate * (grid.center(i) - center).abs()).exp())
        .collect();
    let raw_mass: f64 = rho.iter().sum::<f64>() * dx;
    let scale = params.mass / raw_mass;
    rho.iter_mut().for_each(|r| *r *= scale);
    Ok(MacroState {
        t: 0.0,
        rho,
        s: vec![0.0; grid.n_cells],
        n: vec![params.n0; grid.n_cells],
    })
}

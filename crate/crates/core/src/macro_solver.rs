//! Semi-implicit upwind time integration of the cell/chemoattractant/nutrient
//! system in a closed channel.
//!
//! One step, in order:
//! 1. drift velocities `u_S + u_N` at interior faces from the current `S, N`
//!    (centred `∂_x` across the face, `∂_t` averaged from the two cells);
//! 2. `ρ`: explicit upwind advection, implicit diffusion;
//! 3. `S`: implicit diffusion and decay, explicit source `β ρ^{n+1}`;
//! 4. `N`: exact consumption `N ← N exp(-γ ρ^{n+1} dt)`, then implicit
//!    diffusion when `D_N > 0`.
//!
//! Boundary faces carry no flux, so `Σ ρ dx` is conserved up to rounding.

use crate::flux::{chemotactic_velocity, FieldDerivatives};
use crate::model::{Grid1D, MacroState, ModelParams, ParamError, ResponseFunction};
use crate::tridiag::NeumannTridiagonal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fields may dip this far below zero from rounding before a step is refused.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-13;

/// How `∂_t S` (and `∂_t N`) are estimated at faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DsDtMode {
    /// Right-hand side of the chemical equation at the current level.
    #[default]
    RhsEval,
    /// `(S^n - S^{n-1}) / dt`, zero on the first step.
    LaggedDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    pub cfl_safety: f64,
    pub snapshot_every: usize,
    pub dsdt_mode: DsDtMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_end: 360.0,
            cfl_safety: 0.5,
            snapshot_every: 1000,
            dsdt_mode: DsDtMode::RhsEval,
        }
    }
}

impl SolverConfig {
    pub fn validate(self) -> Result<Self, ParamError> {
        let mut v = Vec::new();
        if !(self.dt.is_finite() && self.dt > 0.0) {
            v.push("dt must be positive".to_string());
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            v.push("t_end must be non-negative".to_string());
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            v.push("cfl_safety must lie in (0, 1]".to_string());
        }
        if self.snapshot_every == 0 {
            v.push("snapshot_every must be at least 1".to_string());
        }
        if v.is_empty() {
            Ok(self)
        } else {
            Err(ParamError { violations: v })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("CFL violated at t = {t}: dt = {dt} exceeds limit {limit}")]
    Cfl { t: f64, dt: f64, limit: f64 },
    #[error("negative {field} = {value:e} at t = {t}, cell {cell}")]
    Negative {
        t: f64,
        field: &'static str,
        cell: usize,
        value: f64,
    },
    #[error("non-finite {field} at t = {t}")]
    NonFinite { t: f64, field: &'static str },
    #[error(transparent)]
    Config(#[from] ParamError),
}

/// Recorded snapshots of a run, with the step index of each.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub snapshots: Vec<MacroState>,
    pub steps: Vec<usize>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> Option<&MacroState> {
        self.snapshots.last()
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    fn push(&mut self, step: usize, state: MacroState) {
        self.steps.push(step);
        self.snapshots.push(state);
    }
}

/// Cell-centred `D Δ_h u` with mirrored ghost cells.
pub fn neumann_laplacian(u: &[f64], diffusivity: f64, dx: f64) -> Vec<f64> {
    let n = u.len();
    let k = diffusivity / (dx * dx);
    (0..n)
        .map(|i| {
            let l = if i == 0 { u[0] } else { u[i - 1] };
            let r = if i + 1 == n { u[n - 1] } else { u[i + 1] };
            k * (l - 2.0 * u[i] + r)
        })
        .collect()
}

/// `D_S ΔS - αS + βρ` at cell centres.
pub fn signal_rhs(s: &[f64], rho: &[f64], params: &ModelParams, dx: f64) -> Vec<f64> {
    let mut out = neumann_laplacian(s, params.d_s, dx);
    for ((o, &si), &ri) in out.iter_mut().zip(s).zip(rho) {
        *o += -params.alpha * si + params.beta * ri;
    }
    out
}

/// `D_N ΔN - γρN` at cell centres.
pub fn nutrient_rhs(n: &[f64], rho: &[f64], params: &ModelParams, dx: f64) -> Vec<f64> {
    let mut out = neumann_laplacian(n, params.d_n, dx);
    for ((o, &ni), &ri) in out.iter_mut().zip(n).zip(rho) {
        *o -= params.gamma * ri * ni;
    }
    out
}

/// Derivatives at the `n - 1` interior faces: centred `∂_x` and the mean of
/// the two adjacent cell values of `∂_t`.
pub fn face_derivatives(field: &[f64], dfield_dt: &[f64], dx: f64) -> FieldDerivatives {
    let n = field.len();
    let mut out = FieldDerivatives {
        dt: Vec::with_capacity(n.saturating_sub(1)),
        dx: Vec::with_capacity(n.saturating_sub(1)),
    };
    for i in 0..n.saturating_sub(1) {
        out.dx.push((field[i + 1] - field[i]) / dx);
        out.dt.push(0.5 * (dfield_dt[i] + dfield_dt[i + 1]));
    }
    out
}

/// Implicit chemoattractant update:
/// `(I - dt D_S Δ_h + dt α) S_new = S + dt β ρ`.
pub fn solve_s_substep(s: &[f64], rho: &[f64], params: &ModelParams, dx: f64, dt: f64) -> Vec<f64> {
    let sys = NeumannTridiagonal::new(s.len(), dt * params.d_s / (dx * dx), dt * params.alpha);
    let mut out: Vec<f64> = s.iter().zip(rho).map(|(&si, &ri)| si + dt * params.beta * ri).collect();
    sys.solve_in_place(&mut out);
    out
}

struct Factors {
    dt: f64,
    rho: NeumannTridiagonal,
    s: NeumannTridiagonal,
    n: Option<NeumannTridiagonal>,
}

impl Factors {
    fn new(n_cells: usize, dx: f64, dt: f64, p: &ModelParams) -> Self {
        let k = dt / (dx * dx);
        Self {
            dt,
            rho: NeumannTridiagonal::new(n_cells, k * p.d_rho, 0.0),
            s: NeumannTridiagonal::new(n_cells, k * p.d_s, dt * p.alpha),
            n: (p.d_n > 0.0).then(|| NeumannTridiagonal::new(n_cells, k * p.d_n, 0.0)),
        }
    }
}

/// Stateful integrator; keeps factorizations and, in lagged mode, the
/// previous chemical fields.
pub struct MacroSolver {
    grid: Grid1D,
    params: ModelParams,
    phi: ResponseFunction,
    config: SolverConfig,
    factors: Factors,
    previous: Option<(f64, Vec<f64>, Vec<f64>)>,
}

impl MacroSolver {
    pub fn new(
        grid: Grid1D,
        params: ModelParams,
        phi: ResponseFunction,
        config: SolverConfig,
    ) -> Result<Self, SolverError> {
        let grid = grid.validate()?;
        let params = params.validate()?;
        let phi = phi.validate()?;
        let config = config.validate()?;
        let factors = Factors::new(grid.n_cells, grid.dx(), config.dt, &params);
        Ok(Self {
            grid,
            params,
            phi,
            config,
            factors,
            previous: None,
        })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Temporal derivatives of `(S, N)` at cell centres per the configured mode.
    fn time_derivatives(&self, state: &MacroState) -> (Vec<f64>, Vec<f64>) {
        let dx = self.grid.dx();
        match (self.config.dsdt_mode, &self.previous) {
            (DsDtMode::RhsEval, _) => (
                signal_rhs(&state.s, &state.rho, &self.params, dx),
                nutrient_rhs(&state.n, &state.rho, &self.params, dx),
            ),
            (DsDtMode::LaggedDifference, Some((dt_prev, s_prev, n_prev))) => (
                state.s.iter().zip(s_prev).map(|(a, b)| (a - b) / dt_prev).collect(),
                state.n.iter().zip(n_prev).map(|(a, b)| (a - b) / dt_prev).collect(),
            ),
            (DsDtMode::LaggedDifference, None) => {
                (vec![0.0; state.len()], vec![0.0; state.len()])
            }
        }
    }

    /// Per-signal drift velocities `(u_S, u_N)` at the interior faces.
    pub fn face_velocities(&self, state: &MacroState) -> (Vec<f64>, Vec<f64>) {
        let dx = self.grid.dx();
        let (st, nt) = self.time_derivatives(state);
        let ds = face_derivatives(&state.s, &st, dx);
        let dn = face_derivatives(&state.n, &nt, dx);
        let p = &self.params;
        let us = ds
            .dt
            .iter()
            .zip(&ds.dx)
            .map(|(&a, &b)| chemotactic_velocity(p.chi_s, &self.phi, p.epsilon, a, b))
            .collect();
        let un = dn
            .dt
            .iter()
            .zip(&dn.dx)
            .map(|(&a, &b)| chemotactic_velocity(p.chi_n, &self.phi, p.epsilon, a, b))
            .collect();
        (us, un)
    }

    /// Advances by the configured `dt`.
    pub fn step(&mut self, state: &MacroState) -> Result<MacroState, SolverError> {
        self.step_by(state, self.config.dt)
    }

    /// Advances by `dt`, which may differ from the configured step (used to
    /// land exactly on `t_end`).
    pub fn step_by(&mut self, state: &MacroState, dt: f64) -> Result<MacroState, SolverError> {
        let n = self.grid.n_cells;
        assert_eq!(state.len(), n, "state does not match the grid");
        let dx = self.grid.dx();
        let t = state.t;

        let (us, un) = self.face_velocities(state);
        let max_speed = us.iter().zip(&un).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
        if max_speed > 0.0 {
            let limit = self.config.cfl_safety * dx / max_speed;
            if dt > limit {
                return Err(SolverError::Cfl { t, dt, limit });
            }
        }

        if (self.factors.dt - dt).abs() > 1e-15 * dt {
            self.factors = Factors::new(n, dx, dt, &self.params);
        }

        // ρ: upwind fluxes at interior faces, zero at the walls.
        let lam = dt / dx;
        let mut rho = state.rho.clone();
        for k in 0..n - 1 {
            let u = us[k] + un[k];
            let donor = if u > 0.0 { state.rho[k] } else { state.rho[k + 1] };
            let flux = lam * u * donor;
            rho[k] -= flux;
            rho[k + 1] += flux;
        }
        let advected = rho.clone();
        self.factors.rho.solve_in_place(&mut rho);
        conservative_diffusion(&advected, &mut rho, dt * self.params.d_rho / (dx * dx));
        check_field(&rho, "rho", t + dt)?;

        let mut s: Vec<f64> = state
            .s
            .iter()
            .zip(&rho)
            .map(|(&si, &ri)| si + dt * self.params.beta * ri)
            .collect();
        self.factors.s.solve_in_place(&mut s);
        check_field(&s, "S", t + dt)?;

        let gamma = self.params.gamma;
        let mut nut: Vec<f64> = state
            .n
            .iter()
            .zip(&rho)
            .map(|(&ni, &ri)| ni * (-gamma * ri * dt).exp())
            .collect();
        if let Some(sys) = &self.factors.n {
            sys.solve_in_place(&mut nut);
        }
        check_field(&nut, "N", t + dt)?;

        if self.config.dsdt_mode == DsDtMode::LaggedDifference {
            self.previous = Some((dt, state.s.clone(), state.n.clone()));
        }
        Ok(MacroState {
            t: t + dt,
            rho,
            s,
            n: nut,
        })
    }

    /// Integrates to `t_end`, recording every `snapshot_every` steps and the
    /// final state. The last step is shortened to land on `t_end`.
    pub fn run(&mut self, initial: &MacroState) -> Result<Trajectory, SolverError> {
        let mut traj = Trajectory::default();
        let t_stop = initial.t + self.config.t_end;
        let dt = self.config.dt;
        let mut state = initial.clone();
        traj.push(0, state.clone());
        let mut k = 0usize;
        while t_stop - state.t > 1e-9 * dt {
            let h = dt.min(t_stop - state.t);
            state = self.step_by(&state, h)?;
            k += 1;
            if t_stop - state.t <= 1e-9 * dt {
                state.t = t_stop;
            }
            if k.is_multiple_of(self.config.snapshot_every) || state.t == t_stop {
                traj.push(k, state.clone());
            }
        }
        Ok(traj)
    }
}

/// Re-evaluates `x = b + r Δ_h x` in flux form from the solved `x`, so the
/// discrete fluxes telescope and `Σ x = Σ b` up to per-cell rounding.
fn conservative_diffusion(b: &[f64], x: &mut [f64], r: f64) {
    let n = x.len();
    let fluxes: Vec<f64> = (0..n - 1).map(|k| r * (x[k + 1] - x[k])).collect();
    for i in 0..n {
        let right = if i + 1 < n { fluxes[i] } else { 0.0 };
        let left = if i > 0 { fluxes[i - 1] } else { 0.0 };
        x[i] = b[i] + (right - left);
    }
}

fn check_field(v: &[f64], field: &'static str, t: f64) -> Result<(), SolverError> {
    for (cell, &x) in v.iter().enumerate() {
        if !x.is_finite() {
            return Err(SolverError::NonFinite { t, field });
        }
        if x < -NEGATIVITY_TOLERANCE {
            return Err(SolverError::Negative {
                t,
                field,
                cell,
                value: x,
            });
        }
    }
    Ok(())
}

/// One step from `state` with a fresh solver (lagged mode sees `∂_t S = 0`).
pub fn step(
    state: &MacroState,
    grid: &Grid1D,
    params: &ModelParams,
    phi: &ResponseFunction,
    config: &SolverConfig,
) -> Result<MacroState, SolverError> {
    MacroSolver::new(*grid, *params, *phi, *config)?.step(state)
}

/// Integrates `initial` to `initial.t + config.t_end`.
pub fn run(
    initial: &MacroState,
    grid: &Grid1D,
    params: &ModelParams,
    phi: &ResponseFunction,
    config: &SolverConfig,
) -> Result<Trajectory, SolverError> {
    MacroSolver::new(*grid, *params, *phi, *config)?.run(initial)
}

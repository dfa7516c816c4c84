//! Discrete-velocity solver for the run-and-tumble kinetic equation
//!
//! ```text
//! ε ∂_t f + v ∂_x f = (μ/ε)(ρ - 2f) + μ(∫φ f dv' - 2φ f),   v ∈ [-1, 1]
//! ```
//!
//! written in micro-macro form `f = ρ/2 + g` with `∫g dv = 0`. The density
//! lives at cell centres and the perturbation `g` at cell faces, so the
//! diffusive limit is captured on a fixed grid as `ε → 0`:
//!
//! ```text
//! ∂_t ρ + ε⁻¹ ∂_x ∫v g dv = 0
//! ∂_t g = -ε⁻¹ [v ρ_x / 2 + (I - Π)(v g_x)] - (2μ/ε²) g + (μ/ε) B
//! B = ρ(⟨φ⟩/2 - φ) + ⟨φ g⟩ - 2φ g
//! ```
//!
//! The relaxation `-(2μ/ε²) g` is integrated exactly over a step, the rest is
//! frozen (exponential Euler). Wall faces hold `g = 0`: no mass crosses them.
//! The bias `φ` sums both signals, each scaled by `2χ/max|φ|` so that the
//! limiting drift equals the macroscopic one.

use crate::macro_solver::{face_derivatives, nutrient_rhs, signal_rhs, solve_s_substep, NEGATIVITY_TOLERANCE};
use crate::model::{Grid1D, MacroState, ModelParams, ParamError, ResponseFunction};
use crate::quadrature::Quadrature;
use crate::tridiag::NeumannTridiagonal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KineticParams {
    pub epsilon: f64,
    pub mu: f64,
}

impl Default for KineticParams {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            mu: 1.0 / 6.0,
        }
    }
}

impl KineticParams {
    pub fn validate(self) -> Result<Self, ParamError> {
        let mut v = Vec::new();
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            v.push("epsilon out of range (0, 1)".to_string());
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            v.push("mu must be positive".to_string());
        }
        if v.is_empty() {
            Ok(self)
        } else {
            Err(ParamError { violations: v })
        }
    }

    /// Diffusivity of the limiting density equation, `1/(6μ)`.
    pub fn diffusivity(&self) -> f64 {
        1.0 / (6.0 * self.mu)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KineticError {
    #[error("time step {dt} exceeds the stability limit {limit} at t = {t}")]
    Cfl { t: f64, dt: f64, limit: f64 },
    #[error("negative distribution f = {value:e} in cell {cell}, node {node} at t = {t}")]
    Negative {
        t: f64,
        cell: usize,
        node: usize,
        value: f64,
    },
    #[error("non-finite value at t = {0}")]
    NonFinite(f64),
    #[error(transparent)]
    Config(#[from] ParamError),
}

/// Kinetic density on a closed channel.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticState {
    pub t: f64,
    /// `∫f dv` at cell centres.
    pub rho: Vec<f64>,
    /// `f - ρ/2` at the `n + 1` faces, row-major over velocity nodes.
    pub g: Vec<f64>,
    pub quad: Quadrature,
}

impl KineticState {
    /// Velocity-uniform distribution `f = ρ/2`.
    pub fn equilibrium(rho: Vec<f64>, quad: Quadrature) -> Self {
        let g = vec![0.0; (rho.len() + 1) * quad.len()];
        Self { t: 0.0, rho, g, quad }
    }

    /// From cell values `f[i][j]` at the quadrature nodes. Interior faces take
    /// the mean of the adjacent cells' velocity-varying parts.
    pub fn from_distribution(f: &[Vec<f64>], quad: Quadrature) -> Self {
        let n = f.len();
        let nv = quad.len();
        let rho: Vec<f64> = f.iter().map(|row| dot(quad.weights(), row)).collect();
        let mut g = vec![0.0; (n + 1) * nv];
        for k in 1..n {
            for j in 0..nv {
                let left = f[k - 1][j] - 0.5 * rho[k - 1];
                let right = f[k][j] - 0.5 * rho[k];
                g[k * nv + j] = 0.5 * (left + right);
            }
        }
        Self { t: 0.0, rho, g, quad }
    }

    pub fn n_cells(&self) -> usize {
        self.rho.len()
    }

    fn face(&self, k: usize) -> &[f64] {
        let nv = self.quad.len();
        &self.g[k * nv..(k + 1) * nv]
    }

    /// `f` at cell `i`, node `j`.
    pub fn f(&self, i: usize, j: usize) -> f64 {
        0.5 * self.rho[i] + 0.5 * (self.face(i)[j] + self.face(i + 1)[j])
    }

    pub fn mass(&self, dx: f64) -> f64 {
        self.rho.iter().sum::<f64>() * dx
    }

    /// Smallest cell value of `f` with its location `(cell, node)`.
    pub fn min_f(&self) -> (f64, usize, usize) {
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..self.n_cells() {
            for j in 0..self.quad.len() {
                let v = self.f(i, j);
                if v < best.0 {
                    best = (v, i, j);
                }
            }
        }
        best
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(ρ, j)` per cell with `j = ε⁻¹ ∫v f dv`.
pub fn moments(state: &KineticState, epsilon: f64) -> (Vec<f64>, Vec<f64>) {
    let q = &state.quad;
    let face_flux: Vec<f64> = (0..=state.n_cells())
        .map(|k| {
            q.iter()
                .zip(state.face(k))
                .map(|((v, w), g)| w * v * g)
                .sum::<f64>()
        })
        .collect();
    let rho = state.rho.iter().map(|&r| r.max(0.0)).collect();
    let j = face_flux.windows(2).map(|w| 0.5 * (w[0] + w[1]) / epsilon).collect();
    (rho, j)
}

/// Combined bias `φ(v_j)` at every face, zero on the walls.
///
/// `signals` lists `(gain, ∂_t field, ∂_x field)` per signal, each at the
/// `n - 1` interior faces.
pub fn bias_table(
    quad: &Quadrature,
    phi: &ResponseFunction,
    epsilon: f64,
    signals: &[(f64, &[f64], &[f64])],
    n_cells: usize,
) -> Vec<f64> {
    let nv = quad.len();
    let mut table = vec![0.0; (n_cells + 1) * nv];
    for &(gain, dt, dx) in signals {
        if gain == 0.0 {
            continue;
        }
        for k in 1..n_cells {
            let (a, b) = (epsilon * dt[k - 1], dx[k - 1]);
            for (j, &v) in quad.nodes().iter().enumerate() {
                table[k * nv + j] += gain * phi.eval(a + v * b);
            }
        }
    }
    table
}

/// Largest stable step: transport at speed `1/ε` and the explicit limit of
/// the density diffusion.
pub fn stability_limit(kp: &KineticParams, dx: f64, cfl_safety: f64) -> f64 {
    cfl_safety * (kp.epsilon * dx).min(dx * dx / (2.0 * kp.diffusivity()))
}

/// Collision right-hand side `B_j` at one face; sums to zero over nodes.
fn collision(quad: &Quadrature, rho_face: f64, g: &[f64], bias: &[f64], out: &mut [f64]) {
    let w = quad.weights();
    let mean_phi = dot(w, bias);
    let mean_phi_g: f64 = w.iter().zip(bias).zip(g).map(|((w, p), g)| w * p * g).sum();
    for j in 0..g.len() {
        out[j] = rho_face * (0.5 * mean_phi - bias[j]) + mean_phi_g - 2.0 * bias[j] * g[j];
    }
}

/// Sum over nodes of the collision term at every interior face (diagnostic
/// for the conservation property).
pub fn collision_imbalance(state: &KineticState, bias: &[f64]) -> f64 {
    let nv = state.quad.len();
    let mut out = vec![0.0; nv];
    let mut worst: f64 = 0.0;
    for k in 1..state.n_cells() {
        let rho_face = 0.5 * (state.rho[k - 1] + state.rho[k]);
        collision(&state.quad, rho_face, state.face(k), &bias[k * nv..(k + 1) * nv], &mut out);
        worst = worst.max(dot(state.quad.weights(), &out).abs());
    }
    worst
}

/// One step of length `dt` with a frozen bias table.
pub fn kinetic_step(
    state: &KineticState,
    bias: &[f64],
    kp: &KineticParams,
    dx: f64,
    dt: f64,
    cfl_safety: f64,
) -> Result<KineticState, KineticError> {
    let n = state.n_cells();
    let nv = state.quad.len();
    assert_eq!(bias.len(), (n + 1) * nv, "bias table does not match the state");
    let limit = stability_limit(kp, dx, cfl_safety);
    if dt > limit * (1.0 + 1e-12) {
        return Err(KineticError::Cfl { t: state.t, dt, limit });
    }
    let (eps, mu) = (kp.epsilon, kp.mu);
    let nodes = state.quad.nodes();
    let w = state.quad.weights();

    let k_rel = 2.0 * mu / (eps * eps);
    let decay = (-k_rel * dt).exp();
    let gain = -(-k_rel * dt).exp_m1() / k_rel;

    let mut g_new = vec![0.0; state.g.len()];
    let mut transport = vec![0.0; nv];
    let mut coll = vec![0.0; nv];
    let zero = vec![0.0; nv];
    for k in 1..n {
        let here = state.face(k);
        let left = if k > 1 { state.face(k - 1) } else { &zero[..] };
        let right = if k + 1 < n { state.face(k + 1) } else { &zero[..] };
        let rho_x = (state.rho[k] - state.rho[k - 1]) / dx;
        for j in 0..nv {
            let v = nodes[j];
            let gx = if v > 0.0 {
                (here[j] - left[j]) / dx
            } else {
                (right[j] - here[j]) / dx
            };
            transport[j] = v * gx;
        }
        let mean = 0.5 * dot(w, &transport);
        let rho_face = 0.5 * (state.rho[k - 1] + state.rho[k]);
        collision(&state.quad, rho_face, here, &bias[k * nv..(k + 1) * nv], &mut coll);
        let out = &mut g_new[k * nv..(k + 1) * nv];
        for j in 0..nv {
            let r = -(0.5 * nodes[j] * rho_x + transport[j] - mean) / eps + mu / eps * coll[j];
            out[j] = decay * here[j] + gain * r;
        }
        // keep ∫g dv = 0 against rounding
        let drift = 0.5 * dot(w, out);
        for x in out.iter_mut() {
            *x -= drift;
        }
    }

    let flux: Vec<f64> = (0..=n)
        .map(|k| {
            let gk = &g_new[k * nv..(k + 1) * nv];
            nodes.iter().zip(w).zip(gk).map(|((v, w), g)| v * w * g).sum::<f64>()
        })
        .collect();
    let lam = dt / (eps * dx);
    let rho: Vec<f64> = (0..n).map(|i| state.rho[i] - lam * (flux[i + 1] - flux[i])).collect();

    let next = KineticState {
        t: state.t + dt,
        rho,
        g: g_new,
        quad: state.quad.clone(),
    };
    if next.rho.iter().chain(&next.g).any(|x| !x.is_finite()) {
        return Err(KineticError::NonFinite(next.t));
    }
    let (value, cell, node) = next.min_f();
    if value < -NEGATIVITY_TOLERANCE {
        return Err(KineticError::Negative {
            t: next.t,
            cell,
            node,
            value,
        });
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KineticConfig {
    pub dt: f64,
    pub t_end: f64,
    pub cfl_safety: f64,
    pub snapshot_every: usize,
    pub velocity_nodes: usize,
}

impl Default for KineticConfig {
    fn default() -> Self {
        Self {
            dt: 0.002,
            t_end: 10.0,
            cfl_safety: 0.5,
            snapshot_every: 500,
            velocity_nodes: 32,
        }
    }
}

impl KineticConfig {
    pub fn validate(self) -> Result<Self, ParamError> {
        let mut v = Vec::new();
        if !(self.dt > 0.0) {
            v.push("dt must be positive".to_string());
        }
        if !(self.t_end >= 0.0) {
            v.push("t_end must be non-negative".to_string());
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            v.push("cfl_safety out of range (0, 1]".to_string());
        }
        if self.snapshot_every == 0 {
            v.push("snapshot_every must be at least 1".to_string());
        }
        if self.velocity_nodes < 2 || self.velocity_nodes % 2 == 1 {
            v.push("velocity_nodes must be even and at least 2".to_string());
        }
        if v.is_empty() {
            Ok(self)
        } else {
            Err(ParamError { violations: v })
        }
    }
}

/// Kinetic density together with the chemical fields it drives.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState {
    pub kinetic: KineticState,
    pub s: Vec<f64>,
    pub n: Vec<f64>,
}

impl CoupledState {
    /// Velocity-uniform start from a macroscopic state.
    pub fn from_macro(state: &MacroState, velocity_nodes: usize) -> Self {
        let mut kinetic = KineticState::equilibrium(state.rho.clone(), Quadrature::gauss_legendre(velocity_nodes));
        kinetic.t = state.t;
        Self {
            kinetic,
            s: state.s.clone(),
            n: state.n.clone(),
        }
    }

    pub fn to_macro(&self) -> MacroState {
        MacroState {
            t: self.kinetic.t,
            rho: self.kinetic.rho.clone(),
            s: self.s.clone(),
            n: self.n.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KineticTrajectory {
    pub snapshots: Vec<CoupledState>,
    pub steps: Vec<usize>,
}

impl KineticTrajectory {
    pub fn last(&self) -> Option<&CoupledState> {
        self.snapshots.last()
    }

    /// Density moments as macroscopic snapshots.
    pub fn to_macro(&self) -> crate::macro_solver::Trajectory {
        crate::macro_solver::Trajectory {
            snapshots: self.snapshots.iter().map(CoupledState::to_macro).collect(),
            steps: self.steps.clone(),
        }
    }
}

/// Bias table for the current chemical fields.
pub fn coupled_bias(
    state: &CoupledState,
    params: &ModelParams,
    phi: &ResponseFunction,
    kp: &KineticParams,
    dx: f64,
) -> Vec<f64> {
    let rho = &state.kinetic.rho;
    let st = signal_rhs(&state.s, rho, params, dx);
    let nt = nutrient_rhs(&state.n, rho, params, dx);
    let ds = face_derivatives(&state.s, &st, dx);
    let dn = face_derivatives(&state.n, &nt, dx);
    let scale = 2.0 / phi.max_abs();
    bias_table(
        &state.kinetic.quad,
        phi,
        kp.epsilon,
        &[
            (scale * params.chi_s, &ds.dt, &ds.dx),
            (scale * params.chi_n, &dn.dt, &dn.dx),
        ],
        rho.len(),
    )
}

/// Alternates a kinetic step with the chemoattractant and nutrient updates
/// driven by the new density moment.
pub fn coupled_kinetic_run(
    initial: &CoupledState,
    grid: &Grid1D,
    params: &ModelParams,
    kp: &KineticParams,
    phi: &ResponseFunction,
    config: &KineticConfig,
) -> Result<KineticTrajectory, KineticError> {
    let grid = grid.validate()?;
    let params = params.validate()?;
    let kp = kp.validate()?;
    let phi = phi.validate()?;
    let config = config.validate()?;
    assert_eq!(initial.kinetic.n_cells(), grid.n_cells, "state does not match the grid");
    let dx = grid.dx();
    let limit = stability_limit(&kp, dx, config.cfl_safety);
    if config.dt > limit {
        return Err(KineticError::Cfl {
            t: initial.kinetic.t,
            dt: config.dt,
            limit,
        });
    }

    let mut traj = KineticTrajectory::default();
    let mut state = initial.clone();
    traj.snapshots.push(state.clone());
    traj.steps.push(0);
    let t_stop = initial.kinetic.t + config.t_end;
    let nutrient_diffusion = |dt: f64| {
        (params.d_n > 0.0).then(|| NeumannTridiagonal::new(grid.n_cells, dt * params.d_n / (dx * dx), 0.0))
    };
    let mut k = 0usize;
    while t_stop - state.kinetic.t > 1e-9 * config.dt {
        let h = config.dt.min(t_stop - state.kinetic.t);
        let bias = coupled_bias(&state, &params, &phi, &kp, dx);
        let mut kinetic = kinetic_step(&state.kinetic, &bias, &kp, dx, h, config.cfl_safety)?;
        let s = solve_s_substep(&state.s, &kinetic.rho, &params, dx, h);
        let mut n: Vec<f64> = state
            .n
            .iter()
            .zip(&kinetic.rho)
            .map(|(&ni, &ri)| ni * (-params.gamma * ri * h).exp())
            .collect();
        if let Some(sys) = nutrient_diffusion(h) {
            sys.solve_in_place(&mut n);
        }
        k += 1;
        if t_stop - kinetic.t <= 1e-9 * config.dt {
            kinetic.t = t_stop;
        }
        state = CoupledState { kinetic, s, n };
        if k.is_multiple_of(config.snapshot_every) || state.kinetic.t == t_stop {
            traj.snapshots.push(state.clone());
            traj.steps.push(k);
        }
    }
    Ok(traj)
}

/// Tumbling rate `1 + ε φ_total(v)` of a cell at face `k` moving with
/// velocity `±1`, returned as `(left-moving, right-moving)`.
pub fn tumbling_rates(
    state: &CoupledState,
    params: &ModelParams,
    phi: &ResponseFunction,
    kp: &KineticParams,
    dx: f64,
    face: usize,
) -> (f64, f64) {
    let rho = &state.kinetic.rho;
    let st = signal_rhs(&state.s, rho, params, dx);
    let nt = nutrient_rhs(&state.n, rho, params, dx);
    let ds = face_derivatives(&state.s, &st, dx);
    let dn = face_derivatives(&state.n, &nt, dx);
    let scale = 2.0 / phi.max_abs();
    let eps = kp.epsilon;
    let i = face - 1;
    let rate = |v: f64| {
        1.0 + eps
            * scale
            * (params.chi_s * phi.eval(eps * ds.dt[i] + v * ds.dx[i])
                + params.chi_n * phi.eval(eps * dn.dt[i] + v * dn.dx[i]))
    };
    (rate(-1.0), rate(1.0))
}

//! Closed-form traveling pulse, cluster and linear stability results, and the
//! fitting routines that compare simulations against them.
//!
//! Speed relation for a stiff response (`q = 1 - (εσ)^2`):
//!
//! ```text
//! χ_N - σ/q = χ_S σ / sqrt(4 D_S α + σ^2)
//! ```
//!
//! Its left side decreases and its right side increases in `σ`, so there is a
//! single root in `(0, 1/ε)` whenever `χ_N > 0`.

use crate::macro_solver::Trajectory;
use crate::model::{Grid1D, ModelParams};
use crate::quadrature::Quadrature;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("no pulse: profile rates have the wrong sign (lambda_minus = {lambda_minus}, lambda_plus = {lambda_plus})")]
    NotAPulse { lambda_minus: f64, lambda_plus: f64 },
    #[error("speed relation has no sign change on (0, 1/epsilon)")]
    NoBracket,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("mode k = 0 is the conserved mass and has no eigenvalue")]
    ZeroMode,
    #[error("trajectory window holds {0} snapshots, need at least 3")]
    TooFewSnapshots(usize),
    #[error("no discernible peak at t = {0}")]
    NoPeak(f64),
}

/// Result of the speed computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Speed {
    pub sigma: f64,
    /// Set when `χ_N = 0`; the only solution is then `σ = 0`.
    pub degenerate: bool,
}

/// `χ_N - σ/(1-(εσ)^2) - χ_S σ/sqrt(4 D_S α + σ^2)`; strictly decreasing on `(0, 1/ε)`.
pub fn speed_residual(sigma: f64, p: &ModelParams) -> f64 {
    let q = 1.0 - (p.epsilon * sigma).powi(2);
    let r = (4.0 * p.d_s * p.alpha + sigma * sigma).sqrt();
    let attract = if r > 0.0 { p.chi_s * sigma / r } else { p.chi_s };
    p.chi_n - sigma / q - attract
}

/// Unique pulse speed in `(0, 1/ε)`: bisection to `1e-12`, then secant polish.
pub fn traveling_speed(p: &ModelParams) -> Result<Speed, AnalysisError> {
    if !(p.epsilon > 0.0 && p.epsilon < 1.0) {
        return Err(AnalysisError::Invalid("epsilon must lie in (0, 1)".into()));
    }
    if p.chi_n < 0.0 || p.chi_s < 0.0 {
        return Err(AnalysisError::Invalid("sensitivities must be non-negative".into()));
    }
    if p.chi_n == 0.0 {
        return Ok(Speed {
            sigma: 0.0,
            degenerate: true,
        });
    }
    let mut lo = 0.0;
    let mut hi = 1.0 / p.epsilon - 1e-9;
    let f_lo = speed_residual(lo, p);
    let f_hi = speed_residual(hi, p);
    if !(f_lo > 0.0 && f_hi < 0.0) {
        return Err(AnalysisError::NoBracket);
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if speed_residual(mid, p) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (speed_residual(a, p), speed_residual(b, p));
    for _ in 0..8 {
        if fb == fa || fb == 0.0 {
            break;
        }
        let c = b - fb * (b - a) / (fb - fa);
        if !(c > lo - 1e-12 && c < hi + 1e-12) {
            break;
        }
        a = b;
        fa = fb;
        b = c;
        fb = speed_residual(b, p);
    }
    let sigma = if fb.abs() <= speed_residual(lo, p).abs().min(speed_residual(hi, p).abs()) {
        b
    } else if speed_residual(lo, p).abs() < speed_residual(hi, p).abs() {
        lo
    } else {
        hi
    };
    Ok(Speed {
        sigma,
        degenerate: false,
    })
}

/// Exponential rates of the back (`λ⁻ > 0`) and front (`λ⁺ < 0`) tails and the
/// peak density that carries mass `M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileRates {
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub rho0: f64,
}

impl ProfileRates {
    /// `λ⁻ / |λ⁺|`; larger than one when the back is stiffer than the front.
    pub fn asymmetry(&self) -> f64 {
        self.lambda_minus / self.lambda_plus.abs()
    }

    /// Double-exponential density at offset `z` from the peak.
    pub fn density(&self, z: f64) -> f64 {
        if z < 0.0 {
            self.rho0 * (self.lambda_minus * z).exp()
        } else {
            self.rho0 * (self.lambda_plus * z).exp()
        }
    }
}

pub fn profile_rates(sigma: f64, p: &ModelParams) -> Result<ProfileRates, AnalysisError> {
    if !(sigma >= 0.0 && sigma * p.epsilon < 1.0) {
        return Err(AnalysisError::Invalid(format!("sigma = {sigma} outside [0, 1/epsilon)")));
    }
    let q = 1.0 - (p.epsilon * sigma).powi(2);
    let lambda_minus = (-sigma + (p.chi_s + p.chi_n) * q) / p.d_rho;
    let lambda_plus = (-sigma + (p.chi_n - p.chi_s) * q) / p.d_rho;
    if !(lambda_minus > 0.0 && lambda_plus < 0.0) {
        return Err(AnalysisError::NotAPulse {
            lambda_minus,
            lambda_plus,
        });
    }
    let rho0 = p.mass / (1.0 / lambda_minus + 1.0 / lambda_plus.abs());
    Ok(ProfileRates {
        lambda_minus,
        lambda_plus,
        rho0,
    })
}

/// Constants of `K(z) = a1 exp(-a2|z| - a3 z)`, the Green function of
/// `-D_S K'' - σ K' + α K = δ_0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConstants {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl KernelConstants {
    pub fn new(sigma: f64, d_s: f64, alpha: f64) -> Self {
        let a3 = sigma / (2.0 * d_s);
        let a2 = (a3 * a3 + alpha / d_s).sqrt();
        let a1 = 1.0 / (2.0 * a2 * d_s);
        Self { a1, a2, a3 }
    }

    pub fn eval(&self, z: f64) -> f64 {
        self.a1 * (-self.a2 * z.abs() - self.a3 * z).exp()
    }

    /// `K'(z)` for `z != 0`.
    pub fn derivative(&self, z: f64) -> f64 {
        let slope = if z < 0.0 { self.a2 - self.a3 } else { -self.a2 - self.a3 };
        slope * self.eval(z)
    }
}

pub fn green_kernel(z: f64, sigma: f64, d_s: f64, alpha: f64) -> f64 {
    KernelConstants::new(sigma, d_s, alpha).eval(z)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveSolution {
    pub sigma: f64,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub rho0: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl WaveSolution {
    pub fn rates(&self) -> ProfileRates {
        ProfileRates {
            lambda_minus: self.lambda_minus,
            lambda_plus: self.lambda_plus,
            rho0: self.rho0,
        }
    }

    pub fn kernel(&self) -> KernelConstants {
        KernelConstants {
            a1: self.a1,
            a2: self.a2,
            a3: self.a3,
        }
    }

    /// `S'(0) = β ∫ K'(-y) ρ(y) dy` by composite Gauss–Legendre quadrature on
    /// each half line (truncated where the integrand is below rounding).
    pub fn signal_slope_at_peak(&self, beta: f64) -> f64 {
        let rule = Quadrature::gauss_legendre(16);
        let k = self.kernel();
        let r = self.rates();
        let integrand = |y: f64| k.derivative(-y) * r.density(y);
        // decay rates of the integrand on each side
        let back = self.lambda_minus + self.a2 + self.a3;
        let front = self.lambda_plus.abs() + self.a2 - self.a3;
        let panels = 400;
        let mut total = 0.0;
        for (lo, hi) in [(-40.0 / back, 0.0), (0.0, 40.0 / front)] {
            let h = (hi - lo) / panels as f64;
            for p in 0..panels {
                let a = lo + p as f64 * h;
                let mid = a + 0.5 * h;
                total += 0.5 * h * rule.integrate(|v| integrand(mid + 0.5 * h * v));
            }
        }
        beta * total
    }
}

/// Speed, tail rates and kernel constants of the stiff traveling pulse.
pub fn wave_solution(p: &ModelParams) -> Result<WaveSolution, AnalysisError> {
    let speed = traveling_speed(p)?;
    let rates = profile_rates(speed.sigma, p)?;
    let k = KernelConstants::new(speed.sigma, p.d_s, p.alpha);
    Ok(WaveSolution {
        sigma: speed.sigma,
        lambda_minus: rates.lambda_minus,
        lambda_plus: rates.lambda_plus,
        rho0: rates.rho0,
        a1: k.a1,
        a2: k.a2,
        a3: k.a3,
    })
}

/// Stationary cluster `ρ0 exp(-λ|x|)` with `λ = χ_S / D_ρ` and `ρ0 = Mλ/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cluster {
    pub lambda: f64,
    pub rho0: f64,
}

impl Cluster {
    pub fn density(&self, z: f64) -> f64 {
        self.rho0 * (-self.lambda * z.abs()).exp()
    }
}

pub fn cluster_profile(p: &ModelParams) -> Result<Cluster, AnalysisError> {
    if !(p.chi_s > 0.0 && p.d_rho > 0.0) {
        return Err(AnalysisError::Invalid("cluster needs chi_s > 0 and d_rho > 0".into()));
    }
    let lambda = p.chi_s / p.d_rho;
    Ok(Cluster {
        lambda,
        rho0: p.mass * lambda / 2.0,
    })
}

/// Growth rate of mode `k` around the homogeneous state:
/// `-ξ² + M/(δL) · ξ²/(α + ξ²)` with `ξ = 2πk/L`.
pub fn dispersion(k: u32, length: f64, mass: f64, delta: f64, alpha: f64) -> Result<f64, AnalysisError> {
    if k == 0 {
        return Err(AnalysisError::ZeroMode);
    }
    if !(length > 0.0 && delta > 0.0 && alpha >= 0.0) {
        return Err(AnalysisError::Invalid("need L > 0, delta > 0, alpha >= 0".into()));
    }
    let xi = 2.0 * PI * k as f64 / length;
    let xi2 = xi * xi;
    Ok(-xi2 + mass / (delta * length) * xi2 / (alpha + xi2))
}

/// Mass below which the homogeneous state is linearly stable, for signal
/// range `l` (so `α = l⁻²`): `M* = δL/l² + 4π²δ/L`.
pub fn critical_mass(length: f64, range: f64, delta: f64) -> Result<f64, AnalysisError> {
    if !(length > 0.0 && range > 0.0 && delta > 0.0) {
        return Err(AnalysisError::Invalid("need L, l, delta > 0".into()));
    }
    Ok(delta * length / (range * range) + 4.0 * PI * PI * delta / length)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// `(k, λ(k))` for `k = 1..=k_max`.
    pub eigenvalues: Vec<(u32, f64)>,
    pub stable: bool,
    pub critical_mass: f64,
}

impl StabilityReport {
    pub fn most_unstable(&self) -> Option<(u32, f64)> {
        self.eigenvalues.iter().copied().max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Critical mass and the verdict `M < M*`, plus the spectrum for reference.
pub fn stability_condition(
    length: f64,
    range: f64,
    delta: f64,
    mass: f64,
    k_max: u32,
) -> Result<StabilityReport, AnalysisError> {
    let m_star = critical_mass(length, range, delta)?;
    let alpha = 1.0 / (range * range);
    let eigenvalues = (1..=k_max)
        .map(|k| dispersion(k, length, mass, delta, alpha).map(|l| (k, l)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StabilityReport {
        eigenvalues,
        stable: mass < m_star,
        critical_mass: m_star,
    })
}

/// Least-squares line `y = a + b x`; returns `(b, a, R²)`.
pub fn linear_regression(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
        syy += (yi - my) * (yi - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((slope, my - slope * mx, r2))
}

/// Location of the global maximum of `rho`, refined by a parabola through the
/// maximum and its neighbours. Returns `(x, value, cell)`.
pub fn locate_peak(rho: &[f64], grid: &Grid1D) -> Option<(f64, f64, usize)> {
    let (i, &m) = rho.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    if !(m > 0.0) {
        return None;
    }
    let dx = grid.dx();
    let mut x = grid.center(i);
    if i > 0 && i + 1 < rho.len() {
        let (l, c, r) = (rho[i - 1], rho[i], rho[i + 1]);
        let denom = l - 2.0 * c + r;
        if denom < 0.0 {
            x += 0.5 * dx * (l - r) / denom;
        }
    }
    Some((x, m, i))
}

/// Like [`locate_peak`], after discarding the monotone humps that start at
/// each wall.
pub fn locate_interior_peak(rho: &[f64], grid: &Grid1D) -> Option<(f64, f64, usize)> {
    let n = rho.len();
    let mut lo = 0;
    while lo + 1 < n && rho[lo + 1] <= rho[lo] {
        lo += 1;
    }
    let mut hi = n - 1;
    while hi > lo && rho[hi - 1] <= rho[hi] {
        hi -= 1;
    }
    if hi <= lo + 1 {
        return None;
    }
    let (x, m, i) = locate_peak(&rho[lo..=hi], grid)?;
    Some((x + lo as f64 * grid.dx(), m, i + lo))
}

/// A local maximum of the density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub cell: usize,
    pub x: f64,
    pub height: f64,
}

/// Local maxima at least `min_rel_height` times the global maximum, that are
/// separated from any higher maximum by a dip below half their own height.
pub fn find_modes(rho: &[f64], grid: &Grid1D, min_rel_height: f64) -> Vec<Mode> {
    let n = rho.len();
    let global = rho.iter().cloned().fold(0.0, f64::max);
    if global <= 0.0 {
        return Vec::new();
    }
    let mut modes = Vec::new();
    for i in 0..n {
        let l = if i == 0 { f64::NEG_INFINITY } else { rho[i - 1] };
        let r = if i + 1 == n { f64::NEG_INFINITY } else { rho[i + 1] };
        let h = rho[i];
        if !(h >= l && h > r && h >= min_rel_height * global) {
            continue;
        }
        // prominence check on both sides
        let separated = |range: &mut dyn Iterator<Item = usize>| {
            let mut low = h;
            for j in range {
                low = low.min(rho[j]);
                if rho[j] > h {
                    return low < 0.5 * h;
                }
            }
            true
        };
        if separated(&mut (0..i).rev()) && separated(&mut (i + 1..n)) {
            modes.push(Mode {
                cell: i,
                x: grid.center(i),
                height: h,
            });
        }
    }
    modes
}

/// Fitting protocol for [`fit_pulse`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Fraction of the run (by time, counted from the end) used for the fit.
    pub window: f64,
    /// Tail regression region, in predicted e-folding lengths from the peak.
    pub tail_efolds: (f64, f64),
    /// Predicted `(λ⁻, λ⁺)` used to size the tail regions.
    pub predicted: Option<(f64, f64)>,
    /// Ignore a density hump attached to either wall when locating the peak,
    /// unless nothing else is left.
    pub skip_wall_modes: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            window: 1.0 / 3.0,
            tail_efolds: (1.0, 3.0),
            predicted: None,
            skip_wall_modes: false,
        }
    }
}

/// Measured pulse characteristics over the late-time window.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseFit {
    pub speed: f64,
    pub speed_r2: f64,
    pub lambda_minus: f64,
    pub lambda_minus_r2: f64,
    pub lambda_plus: f64,
    pub lambda_plus_r2: f64,
    /// Share of the mass within the tail regions around the last peak.
    pub peak_mass_fraction: f64,
    /// `(t, x_peak, ρ_peak)` for every snapshot in the window.
    pub peaks: Vec<(f64, f64, f64)>,
    /// Peak amplitude never increases over the second half of the window.
    pub amplitude_nonincreasing: bool,
    /// Peak advances monotonically by more than a few cells and away from the walls.
    pub monotone_translation: bool,
}

impl PulseFit {
    pub fn is_pulse(&self) -> bool {
        self.monotone_translation && self.speed > 0.0
    }
}

pub fn fit_pulse(
    trajectory: &Trajectory,
    grid: &Grid1D,
    options: &FitOptions,
) -> Result<PulseFit, AnalysisError> {
    let snaps = &trajectory.snapshots;
    if snaps.is_empty() {
        return Err(AnalysisError::TooFewSnapshots(0));
    }
    if !(options.window > 0.0 && options.window <= 1.0) {
        return Err(AnalysisError::Invalid("window must lie in (0, 1]".into()));
    }
    let t0 = snaps[0].t;
    let t1 = snaps[snaps.len() - 1].t;
    let t_start = t1 - options.window * (t1 - t0) - 1e-12 * t1.abs().max(1.0);
    let window: Vec<_> = snaps.iter().filter(|s| s.t >= t_start).collect();
    if window.len() < 3 {
        return Err(AnalysisError::TooFewSnapshots(window.len()));
    }

    let dx = grid.dx();
    let mut peaks = Vec::with_capacity(window.len());
    let mut cells = Vec::with_capacity(window.len());
    for s in &window {
        let found = if options.skip_wall_modes {
            locate_interior_peak(&s.rho, grid).or_else(|| locate_peak(&s.rho, grid))
        } else {
            locate_peak(&s.rho, grid)
        };
        let (x, m, i) = found.ok_or(AnalysisError::NoPeak(s.t))?;
        peaks.push((s.t, x, m));
        cells.push(i);
    }
    let ts: Vec<f64> = peaks.iter().map(|p| p.0).collect();
    let xs: Vec<f64> = peaks.iter().map(|p| p.1).collect();
    let (speed, _, speed_r2) = linear_regression(&ts, &xs).unwrap_or((0.0, 0.0, 0.0));

    let half = peaks.len() / 2;
    let amplitude_nonincreasing = peaks[half..].windows(2).all(|w| w[1].2 <= w[0].2 * (1.0 + 1e-12));
    let forward = xs.windows(2).all(|w| w[1] >= w[0] - dx);
    let displacement = xs[xs.len() - 1] - xs[0];
    let off_walls = cells.iter().all(|&i| i > 1 && i + 2 < grid.n_cells);
    let monotone_translation = forward && displacement > 5.0 * dx && off_walls;

    // Tail regions.
    let (inner, outer) = options.tail_efolds;
    let (back_scale, front_scale) = match options.predicted {
        Some((lm, lp)) if lm > 0.0 && lp < 0.0 => (1.0 / lm, 1.0 / lp.abs()),
        _ => (0.005 * grid.length, 0.005 * grid.length),
    };
    let mut back = (Vec::new(), Vec::new());
    let mut front = (Vec::new(), Vec::new());
    for (s, p) in window.iter().zip(&peaks) {
        let xp = p.1;
        for (i, &r) in s.rho.iter().enumerate() {
            if r <= 0.0 {
                continue;
            }
            let z = grid.center(i) - xp;
            if z <= -inner * back_scale && z >= -outer * back_scale {
                back.0.push(z);
                back.1.push(r.ln());
            } else if z >= inner * front_scale && z <= outer * front_scale {
                front.0.push(z);
                front.1.push(r.ln());
            }
        }
    }
    let (lambda_minus, _, lambda_minus_r2) =
        linear_regression(&back.0, &back.1).unwrap_or((f64::NAN, 0.0, 0.0));
    let (lambda_plus, _, lambda_plus_r2) =
        linear_regression(&front.0, &front.1).unwrap_or((f64::NAN, 0.0, 0.0));

    let last = window[window.len() - 1];
    let xp = peaks[peaks.len() - 1].1;
    let total: f64 = last.rho.iter().sum();
    let near: f64 = last
        .rho
        .iter()
        .enumerate()
        .filter(|(i, _)| {
            let z = grid.center(*i) - xp;
            z >= -outer * back_scale && z <= outer * front_scale
        })
        .map(|(_, r)| r)
        .sum();

    Ok(PulseFit {
        speed,
        speed_r2,
        lambda_minus,
        lambda_minus_r2,
        lambda_plus,
        lambda_plus_r2,
        peak_mass_fraction: if total > 0.0 { near / total } else { 0.0 },
        peaks,
        amplitude_nonincreasing,
        monotone_translation,
    })
}

/// Share of the mass to the right of the deepest dip between the leftmost and
/// rightmost modes of `rho`; `None` when the density is unimodal.
pub fn translating_fraction(rho: &[f64], grid: &Grid1D, min_rel_height: f64) -> Option<f64> {
    let modes = find_modes(rho, grid, min_rel_height);
    if modes.len() < 2 {
        return None;
    }
    let (a, b) = (modes[0].cell, modes[modes.len() - 1].cell);
    let (dip, _) = rho[a..=b]
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .map(|(i, v)| (i + a, *v))?;
    let total: f64 = rho.iter().sum();
    Some(rho[dip..].iter().sum::<f64>() / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MacroState;

    #[test]
    fn degenerate_speed_without_nutrient_drive() {
        let p = ModelParams {
            chi_n: 0.0,
            ..Default::default()
        };
        let s = traveling_speed(&p).unwrap();
        assert_eq!(s.sigma, 0.0);
        assert!(s.degenerate);
    }

    #[test]
    fn speed_tends_to_chi_n_without_attraction_range() {
        // small ε and large α: right side vanishes, σ → χ_N
        let p = ModelParams {
            epsilon: 1e-4,
            alpha: 1e8,
            chi_n: 0.8,
            ..Default::default()
        };
        let s = traveling_speed(&p).unwrap().sigma;
        assert!((s - 0.8).abs() < 1e-3, "{s}");
    }

    #[test]
    fn cluster_examples() {
        let c = cluster_profile(&ModelParams::default()).unwrap();
        assert_eq!(c.lambda, 1.0);
        assert_eq!(c.rho0, 0.5);
        let heavy = cluster_profile(&ModelParams {
            mass: 100.0,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(heavy.lambda, c.lambda);
        assert!(cluster_profile(&ModelParams {
            chi_s: 0.0,
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn cluster_profile_rates_at_rest() {
        let p = ModelParams {
            chi_n: 0.0,
            ..Default::default()
        };
        let r = profile_rates(0.0, &p).unwrap();
        assert_eq!(r.lambda_minus, 1.0);
        assert_eq!(r.lambda_plus, -1.0);
        assert_eq!(r.rho0, 0.5);
    }

    #[test]
    fn non_pulse_regime_rejected() {
        let p = ModelParams {
            chi_s: 0.1,
            ..Default::default()
        };
        // λ⁺ = -σ + 0.9 q > 0 for small σ
        assert!(matches!(profile_rates(0.1, &p), Err(AnalysisError::NotAPulse { .. })));
        assert!(profile_rates(20.0, &p).is_err());
    }

    #[test]
    fn dispersion_examples() {
        assert!(matches!(dispersion(0, 1.0, 1.0, 1.0, 1.0), Err(AnalysisError::ZeroMode)));
        for k in 1..50 {
            let xi = 2.0 * PI * k as f64 / 10.0;
            let l = dispersion(k, 10.0, 0.0, 0.1, 0.05).unwrap();
            assert!((l + xi * xi).abs() < 1e-12);
        }
        // L = 2π, α = 0, k = 1: λ = -1 + M/(2πδ)
        let delta = 0.3;
        let threshold = 2.0 * PI * delta;
        assert!(dispersion(1, 2.0 * PI, threshold * 1.001, delta, 0.0).unwrap() > 0.0);
        assert!(dispersion(1, 2.0 * PI, threshold * 0.999, delta, 0.0).unwrap() < 0.0);
        let big = dispersion(1000, 10.0, 5.0, 0.01, 0.05).unwrap();
        assert!(big < 0.0);
    }

    #[test]
    fn critical_mass_examples() {
        let m = critical_mass(100.0, 4.0, 0.1).unwrap();
        assert!((critical_mass(100.0, 4.0, 0.2).unwrap() - 2.0 * m).abs() < 1e-12);
        assert!(critical_mass(100.0, 4.0, 1e-12).unwrap() < 1e-9);
        let rep = stability_condition(100.0, 4.0, 0.1, 0.5 * m, 100).unwrap();
        assert!(rep.stable);
        assert!(rep.eigenvalues.iter().all(|&(_, l)| l < 0.0));
        let rep = stability_condition(100.0, 4.0, 0.1, 1.5 * m, 100).unwrap();
        assert!(!rep.stable);
        assert!(rep.most_unstable().unwrap().1 > 0.0);
    }

    #[test]
    fn regression_recovers_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.5 * v).collect();
        let (b, a, r2) = linear_regression(&x, &y).unwrap();
        assert!((b + 0.5).abs() < 1e-14 && (a - 3.0).abs() < 1e-13 && (r2 - 1.0).abs() < 1e-14);
        assert!(linear_regression(&[1.0], &[1.0]).is_none());
    }

    fn synthetic(grid: &Grid1D, sigma: f64, lm: f64, lp: f64, times: &[f64], x0: f64) -> Trajectory {
        let rates = ProfileRates {
            lambda_minus: lm,
            lambda_plus: lp,
            rho0: 1.0,
        };
        let mut traj = Trajectory::default();
        for (k, &t) in times.iter().enumerate() {
            let xp = x0 + sigma * t;
            let rho = grid.centers().iter().map(|&x| rates.density(x - xp)).collect();
            traj.snapshots.push(MacroState {
                t,
                rho,
                s: vec![0.0; grid.n_cells],
                n: vec![0.0; grid.n_cells],
            });
            traj.steps.push(k);
        }
        traj
    }

    #[test]
    fn fit_recovers_synthetic_pulse() {
        let g = Grid1D::new(200.0, 2000).unwrap();
        // peak lands on cell centres at every snapshot
        let times: Vec<f64> = (0..30).map(|k| k as f64).collect();
        let traj = synthetic(&g, 0.5, 1.2, -0.4, &times, 30.05);
        let opts = FitOptions {
            predicted: Some((1.2, -0.4)),
            ..Default::default()
        };
        let fit = fit_pulse(&traj, &g, &opts).unwrap();
        assert!((fit.speed - 0.5).abs() < 1e-6, "{}", fit.speed);
        assert!((fit.lambda_minus - 1.2).abs() < 1e-6, "{}", fit.lambda_minus);
        assert!((fit.lambda_plus + 0.4).abs() < 1e-6, "{}", fit.lambda_plus);
        assert!(fit.is_pulse());
        assert!(fit.lambda_minus_r2 > 0.999999);
    }

    #[test]
    fn stationary_cluster_is_not_a_pulse() {
        let g = Grid1D::new(50.0, 500).unwrap();
        let times: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let traj = synthetic(&g, 0.0, 1.0, -1.0, &times, 25.05);
        let fit = fit_pulse(&traj, &g, &FitOptions::default()).unwrap();
        assert!(fit.speed.abs() < 1e-12);
        assert!(!fit.is_pulse());
    }

    #[test]
    fn fit_needs_three_snapshots() {
        let g = Grid1D::new(50.0, 500).unwrap();
        let traj = synthetic(&g, 0.1, 1.0, -1.0, &[0.0, 1.0], 10.0);
        assert!(matches!(
            fit_pulse(&traj, &g, &FitOptions::default()),
            Err(AnalysisError::TooFewSnapshots(_))
        ));
    }

    #[test]
    fn modes_and_translating_fraction() {
        let g = Grid1D::new(100.0, 1000).unwrap();
        let rho: Vec<f64> = g
            .centers()
            .iter()
            .map(|&x| (-(x - 0.05).abs()).exp() + 2.0 * (-(x - 60.0).abs()).exp())
            .collect();
        let modes = find_modes(&rho, &g, 0.05);
        assert_eq!(modes.len(), 2);
        assert_eq!(modes[0].cell, 0);
        let frac = translating_fraction(&rho, &g, 0.05).unwrap();
        // masses: 1 (half cluster at wall) vs 4
        assert!((frac - 0.8).abs() < 0.01, "{frac}");
    }
}

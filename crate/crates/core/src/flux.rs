//! Chemotactic drift velocities at cell faces.
//!
//! The kinetic flux of a signal with temporal derivative `a = ε ∂_t S` and
//! spatial derivative `b = ∂_x S` is
//!
//! ```text
//! u(a, b) = -1/2 ∫_{-1}^{1} v φ_δ(a + v b) dv
//! ```
//!
//! [`flux_kinetic`] evaluates it with a velocity quadrature. The solvers use
//! [`ResponseFunction::drift`], which is exact for both response shapes and
//! stays accurate when `δ` is tiny.

use crate::model::ResponseFunction;
use crate::quadrature::Quadrature;
use std::f64::consts::PI;
use std::sync::OnceLock;

/// Temporal and spatial derivatives of one chemical field at every face.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FieldDerivatives {
    pub dt: Vec<f64>,
    pub dx: Vec<f64>,
}

impl FieldDerivatives {
    pub fn new(dt: Vec<f64>, dx: Vec<f64>) -> Self {
        assert_eq!(dt.len(), dx.len(), "derivative arrays must match the face count");
        Self { dt, dx }
    }

    pub fn zeros(n_faces: usize) -> Self {
        Self {
            dt: vec![0.0; n_faces],
            dx: vec![0.0; n_faces],
        }
    }

    pub fn len(&self) -> usize {
        self.dx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dx.is_empty()
    }
}

fn smooth_rule() -> &'static Quadrature {
    static RULE: OnceLock<Quadrature> = OnceLock::new();
    RULE.get_or_init(|| Quadrature::gauss_legendre(32))
}

impl ResponseFunction {
    /// Exact kinetic drift `-1/2 ∫ v φ(a + v b) dv` for this response.
    pub fn drift(&self, a: f64, b: f64) -> f64 {
        match *self {
            ResponseFunction::Bivaluated { phi0 } => 0.5 * phi0 * stiff_factor(a, b),
            ResponseFunction::Arctan { delta } => arctan_drift(a / delta, b / delta),
        }
    }
}

/// `(1 - (a/b)^2)_+ sign(b)`, zero when `b == 0`.
#[inline]
fn stiff_factor(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        return 0.0;
    }
    let r = a / b;
    (1.0 - r * r).max(0.0) * b.signum()
}

/// `(1/π) ∫_{-1}^{1} v atan(m + v h) dv` where `m = a/δ`, `h = b/δ`.
///
/// For `|h| <= 1` the integrand is analytic in a strip wide enough for the
/// 32-point Gauss rule to be exact to rounding. Otherwise the closed form
/// from the antiderivative is used, written with `atan2` and `ln_1p` so that
/// neither the arctangent nor the logarithm difference cancels.
fn arctan_drift(m: f64, h: f64) -> f64 {
    if h == 0.0 {
        return 0.0;
    }
    if h.abs() <= 1.0 {
        return smooth_rule().integrate(|v| v * (m + v * h).atan()) / PI;
    }
    let h2 = h * h;
    let d_atan = (2.0 * h).atan2(1.0 + m * m - h2);
    let d_log = (4.0 * m * h / (1.0 + (m - h) * (m - h))).ln_1p();
    let d = 0.5 * (h2 + 1.0 - m * m) * d_atan - h + 0.5 * m * d_log;
    d / (PI * h2)
}

/// Quadrature evaluation of the kinetic flux at every face:
/// `-1/2 Σ_j w_j v_j φ(ε dSdt + v_j dSdx)`.
///
/// `φ` is singular only where its argument vanishes, at `v* = -ε dSdt / dSdx`.
/// When `v*` falls inside `(-1, 1)` the rule is mapped onto `[-1, v*]` and
/// `[v*, 1]` separately, so a bivaluated response is integrated exactly.
pub fn flux_kinetic(
    derivs: &FieldDerivatives,
    phi: &ResponseFunction,
    epsilon: f64,
    quad: &Quadrature,
) -> Vec<f64> {
    derivs
        .dt
        .iter()
        .zip(&derivs.dx)
        .map(|(&st, &sx)| {
            let a = epsilon * st;
            let integrand = |v: f64| v * phi.eval(a + v * sx);
            let kink = if sx != 0.0 { -a / sx } else { f64::NAN };
            let integral = if kink > -1.0 && kink < 1.0 {
                mapped(quad, -1.0, kink, &integrand) + mapped(quad, kink, 1.0, &integrand)
            } else {
                quad.integrate(integrand)
            };
            -0.5 * integral
        })
        .collect()
}

fn mapped(quad: &Quadrature, lo: f64, hi: f64, f: &impl Fn(f64) -> f64) -> f64 {
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    half * quad.iter().map(|(v, w)| w * f(mid + half * v)).sum::<f64>()
}

/// Closed-form stiff flux `χ (1 - (ε dSdt / dSdx)^2)_+ sign(dSdx)`, zero
/// where `dSdx == 0`.
pub fn flux_stiff(derivs: &FieldDerivatives, chi: f64, epsilon: f64) -> Vec<f64> {
    derivs
        .dt
        .iter()
        .zip(&derivs.dx)
        .map(|(&st, &sx)| chi * stiff_factor(epsilon * st, sx))
        .collect()
}

/// Cell diffusivity of the drift-diffusion limit, `1/(4μ) ∫ v^2 dv = 1/(6μ)`.
pub fn diffusivity_from_kinetic(mu: f64) -> Result<f64, String> {
    if mu.is_finite() && mu > 0.0 {
        Ok(1.0 / (6.0 * mu))
    } else {
        Err(format!("mu must be positive, got {mu}"))
    }
}

/// Tumbling rate `1 + ε φ(ε dSdt + v dSdx)` of a cell running at velocity `v`.
pub fn tumbling_frequency(v: f64, dsdt: f64, dsdx: f64, phi: &ResponseFunction, epsilon: f64) -> f64 {
    1.0 + epsilon * phi.eval(epsilon * dsdt + v * dsdx)
}

/// Macroscopic drift velocity contributed by one signal.
///
/// The kinetic drift is rescaled by `2 χ / max|φ|`, so that in the stiff
/// limit it reduces to `χ (1 - (ε ∂_t S/∂_x S)^2)_+ sign(∂_x S)`.
#[inline]
pub fn chemotactic_velocity(
    chi: f64,
    phi: &ResponseFunction,
    epsilon: f64,
    dsdt: f64,
    dsdx: f64,
) -> f64 {
    if chi == 0.0 {
        return 0.0;
    }
    2.0 * chi / phi.max_abs() * phi.drift(epsilon * dsdt, dsdx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::adaptive_simpson;
    use proptest::prelude::*;

    /// Independent oracle: adaptive Simpson on the raw integrand, split at
    /// the kink `v = -a/b`.
    fn drift_oracle(phi: &ResponseFunction, a: f64, b: f64) -> f64 {
        let f = |v: f64| v * phi.eval(a + v * b);
        let mut cuts = vec![-1.0, 1.0];
        if b != 0.0 {
            let k = -a / b;
            if k > -1.0 && k < 1.0 {
                cuts.insert(1, k);
            }
        }
        let mut total = 0.0;
        for w in cuts.windows(2) {
            total += adaptive_simpson(&f, w[0], w[1], 1e-14);
        }
        -0.5 * total
    }

    fn derivs(st: f64, sx: f64) -> FieldDerivatives {
        FieldDerivatives::new(vec![st], vec![sx])
    }

    #[test]
    fn zero_gradient_gives_zero_flux() {
        let q = Quadrature::default();
        for phi in [ResponseFunction::arctan(0.1), ResponseFunction::bivaluated(1.0)] {
            for st in [-3.0, 0.0, 2.5] {
                let u = flux_kinetic(&derivs(st, 0.0), &phi, 0.1, &q)[0];
                assert!(u.abs() < 1e-15, "{u}");
                assert_eq!(phi.drift(0.1 * st, 0.0), 0.0);
            }
        }
    }

    #[test]
    fn bivaluated_static_gradient_is_half_amplitude() {
        // -1/2 [ ∫_0^1 v(-φ0) dv + ∫_{-1}^0 v φ0 dv ] = φ0/2
        let phi = ResponseFunction::bivaluated(1.0);
        assert_eq!(phi.drift(0.0, 0.7), 0.5);
        let q = Quadrature::gauss_legendre(64);
        let u = flux_kinetic(&derivs(0.0, 0.7), &phi, 0.1, &q)[0];
        assert!((u - 0.5).abs() < 1e-12, "{u}");
    }

    #[test]
    fn arctan_linearization() {
        // φ'(0) = -2/(πδ), so u ≈ -1/2 φ'(0) b ∫v^2 = 2b/(3πδ) for small b.
        let delta = 0.5;
        let phi = ResponseFunction::arctan(delta);
        let b = 1e-6;
        let u = phi.drift(0.0, b);
        let expect = 2.0 * b / (3.0 * PI * delta);
        assert!((u - expect).abs() < 1e-12 * expect.max(1e-300) + 1e-20, "{u} {expect}");
    }

    #[test]
    fn stiff_flux_examples() {
        let eps = 0.1;
        assert_eq!(flux_stiff(&derivs(0.0, 2.0), 1.3, eps)[0], 1.3);
        assert_eq!(flux_stiff(&derivs(0.0, -2.0), 1.3, eps)[0], -1.3);
        assert_eq!(flux_stiff(&derivs(20.0, 2.0), 1.0, eps)[0], 0.0);
        assert_eq!(flux_stiff(&derivs(50.0, -2.0), 1.0, eps)[0], 0.0);
        assert_eq!(flux_stiff(&derivs(5.0, 0.0), 1.0, eps)[0], 0.0);
        // traveling ansatz ∂_t S = -σ ∂_z S
        let sigma = 0.43;
        for sx in [-1.5, 0.2, 3.0] {
            let u = flux_stiff(&derivs(-sigma * sx, sx), 1.0, eps)[0];
            let expect = (1.0 - (eps * sigma) * (eps * sigma)) * sx.signum();
            assert!((u - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn kinetic_diffusivity() {
        assert!((diffusivity_from_kinetic(1.0 / 6.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((diffusivity_from_kinetic(1.0).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!(diffusivity_from_kinetic(0.0).is_err());
        assert!(diffusivity_from_kinetic(-1.0).is_err());
        let q = Quadrature::default();
        for mu in [0.1, 1.0 / 6.0, 2.0] {
            let d = q.integrate(|v| v * v) / (4.0 * mu);
            assert!((d - diffusivity_from_kinetic(mu).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn tumbling_examples() {
        let phi = ResponseFunction::bivaluated(1.0);
        assert_eq!(tumbling_frequency(0.3, 0.0, 0.0, &phi, 0.1), 1.0);
        assert!((tumbling_frequency(1.0, 0.0, 2.0, &phi, 0.1) - 0.9).abs() < 1e-15);
        assert!((tumbling_frequency(-1.0, 0.0, 2.0, &phi, 0.1) - 1.1).abs() < 1e-15);
    }

    #[test]
    fn arctan_drift_matches_oracle() {
        let cases = [
            (1e-3, 0.0, 1.0),
            (1e-3, -0.043, 1.0),
            (1e-3, 0.3, -0.2),
            (1e-3, 1e-2, 1e-4),
            (1e-3, 1e-6, 1e-3),
            (1e-3, 10.0, 1.0),
            (1e-1, 0.05, 0.2),
            (1.0, 0.7, -3.0),
            (2.0 / 3.0, 0.0, 1e-8),
        ];
        for (delta, a, b) in cases {
            let phi = ResponseFunction::arctan(delta);
            let got = phi.drift(a, b);
            let want = drift_oracle(&phi, a, b);
            assert!((got - want).abs() < 1e-10, "δ={delta} a={a} b={b}: {got} vs {want}");
        }
    }

    #[test]
    fn arctan_converges_to_bivaluated() {
        let eps = 0.1;
        let (st, sx) = (-2.0, 1.0);
        let stiff = flux_stiff(&derivs(st, sx), 0.5, eps)[0];
        let mut prev = f64::INFINITY;
        for delta in [1e-2, 1e-4, 1e-6] {
            let u = ResponseFunction::arctan(delta).drift(eps * st, sx);
            let err = (u - stiff).abs();
            assert!(err < prev, "δ={delta}: {err} !< {prev}");
            prev = err;
        }
        assert!(prev < 1e-4);
    }

    proptest! {
        #[test]
        fn bivaluated_quadrature_matches_closed_form(st in -20f64..20.0, sx in -5f64..5.0) {
            let phi = ResponseFunction::bivaluated(1.0);
            let q = Quadrature::gauss_legendre(64);
            let closed = flux_stiff(&derivs(st, sx), 0.5, 0.1)[0];
            prop_assert!((phi.drift(0.1 * st, sx) - closed).abs() < 1e-15);
            let quad = flux_kinetic(&derivs(st, sx), &phi, 0.1, &q)[0];
            prop_assert!((quad - closed).abs() < 1e-8);
        }

        #[test]
        fn kinetic_flux_is_bounded_and_odd(st in -50f64..50.0, sx in -50f64..50.0, delta in 1e-5f64..2.0) {
            let q = Quadrature::default();
            for phi in [ResponseFunction::arctan(delta), ResponseFunction::bivaluated(1.7)] {
                let u = flux_kinetic(&derivs(st, sx), &phi, 0.1, &q)[0];
                let um = flux_kinetic(&derivs(-st, -sx), &phi, 0.1, &q)[0];
                prop_assert!(u.abs() <= 0.5 * phi.max_abs() + 1e-12);
                prop_assert!((u + um).abs() < 1e-14);
                let d = phi.drift(0.1 * st, sx);
                prop_assert!(d.abs() <= 0.5 * phi.max_abs() + 1e-12);
                prop_assert!((d + phi.drift(-0.1 * st, -sx)).abs() < 1e-14);
            }
        }

        #[test]
        fn tumbling_stays_in_band(v in -1f64..1.0, st in -10f64..10.0, sx in -10f64..10.0, delta in 1e-4f64..1.0) {
            let phi = ResponseFunction::arctan(delta);
            let eps = 0.1;
            let r = tumbling_frequency(v, st, sx, &phi, eps);
            prop_assert!(r >= 1.0 - eps && r <= 1.0 + eps);
        }
    }
}

//! Velocity quadrature on `[-1, 1]` and a small adaptive integrator.

use std::f64::consts::PI;

/// Symmetric node set on `[-1, 1]` with positive weights summing to 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Quadrature {
    /// Gauss–Legendre rule with `n` nodes, computed by Newton iteration on
    /// `P_n`. Nodes are returned in increasing order.
    pub fn gauss_legendre(n: usize) -> Self {
        assert!(n >= 1, "at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess for the i-th largest root.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[n - 1 - i] = x;
            nodes[i] = -x;
            weights[n - 1 - i] = w;
            weights[i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Builds a rule from explicit nodes and weights, checking the invariants.
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self, String> {
        if nodes.len() != weights.len() || nodes.is_empty() {
            return Err("nodes and weights must be non-empty and of equal length".into());
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err("weights must be positive".into());
        }
        if nodes.iter().any(|&v| !(-1.0..=1.0).contains(&v)) {
            return Err("nodes must lie in [-1, 1]".into());
        }
        let total: f64 = weights.iter().sum();
        if (total - 2.0).abs() > 1e-12 {
            return Err(format!("weights sum to {total}, expected 2"));
        }
        let q = Self { nodes, weights };
        if !q.is_symmetric(1e-12) {
            return Err("node set is not symmetric".into());
        }
        Ok(q)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    /// `∫_{-1}^{1} f(v) dv`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.iter().map(|(v, w)| w * f(v)).sum()
    }

    /// Index of the node mirrored through the origin.
    pub fn mirror(&self, j: usize) -> usize {
        self.nodes.len() - 1 - j
    }

    fn is_symmetric(&self, tol: f64) -> bool {
        let mut sorted: Vec<(f64, f64)> = self.iter().collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = sorted.len();
        (0..n).all(|j| {
            let (v, w) = sorted[j];
            let (vm, wm) = sorted[n - 1 - j];
            (v + vm).abs() <= tol && (w - wm).abs() <= tol
        })
    }
}

impl Default for Quadrature {
    fn default() -> Self {
        Self::gauss_legendre(32)
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_invariants() {
        for n in [1, 2, 5, 16, 32, 64] {
            let q = Quadrature::gauss_legendre(n);
            let total: f64 = q.weights().iter().sum();
            assert!((total - 2.0).abs() < 1e-13, "n={n} total={total}");
            for j in 0..n {
                assert!((q.nodes()[j] + q.nodes()[q.mirror(j)]).abs() < 1e-14);
                assert!(q.weights()[j] > 0.0);
            }
            assert!(q.nodes().windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn exact_for_polynomials() {
        let q = Quadrature::gauss_legendre(8);
        // degree 15 is integrated exactly
        for p in 0..16 {
            let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
            let got = q.integrate(|v| v.powi(p));
            assert!((got - exact).abs() < 1e-14, "p={p}");
        }
    }

    #[test]
    fn two_point_rule_matches_table() {
        let q = Quadrature::gauss_legendre(2);
        let r = 1.0 / 3f64.sqrt();
        assert!((q.nodes()[1] - r).abs() < 1e-15);
        assert!((q.weights()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn explicit_rule_validation() {
        assert!(Quadrature::new(vec![-0.5, 0.5], vec![1.0, 1.0]).is_ok());
        assert!(Quadrature::new(vec![-0.5, 0.4], vec![1.0, 1.0]).is_err());
        assert!(Quadrature::new(vec![-0.5, 0.5], vec![1.0, 0.5]).is_err());
        assert!(Quadrature::new(vec![-2.0, 2.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn simpson_integrates_exponential() {
        let got = adaptive_simpson(&|x: f64| (-x).exp(), 0.0, 40.0, 1e-12);
        assert!((got - (1.0 - (-40f64).exp())).abs() < 1e-10);
    }
}

//! Constant-coefficient tridiagonal systems `(I - r Δ_h + c I) x = b` with
//! homogeneous Neumann ends, factored once and solved many times.

/// LU factors of `I + c I - r Δ_h` where `Δ_h` is the Neumann second
/// difference (ghost cells mirror the boundary cells).
#[derive(Debug, Clone)]
pub struct NeumannTridiagonal {
    sub: f64,
    // modified super-diagonal and inverse pivots of the Thomas sweep
    c_prime: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl NeumannTridiagonal {
    /// `r = dt·D/dx²`, `c = dt·decay`. Both must be non-negative.
    pub fn new(n: usize, r: f64, c: f64) -> Self {
        assert!(n >= 2, "need at least two unknowns");
        assert!(r >= 0.0 && c >= 0.0, "operator must be an M-matrix");
        let diag = |i: usize| {
            if i == 0 || i == n - 1 {
                1.0 + c + r
            } else {
                1.0 + c + 2.0 * r
            }
        };
        let off = -r;
        let mut c_prime = vec![0.0; n];
        let mut inv_pivot = vec![0.0; n];
        let mut pivot = diag(0);
        inv_pivot[0] = 1.0 / pivot;
        c_prime[0] = off * inv_pivot[0];
        for i in 1..n {
            pivot = diag(i) - off * c_prime[i - 1];
            assert!(pivot > 0.0, "singular tridiagonal system");
            inv_pivot[i] = 1.0 / pivot;
            c_prime[i] = off * inv_pivot[i];
        }
        Self {
            sub: off,
            c_prime,
            inv_pivot,
        }
    }

    pub fn len(&self) -> usize {
        self.c_prime.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c_prime.is_empty()
    }

    /// Overwrites `x` (holding the right-hand side) with the solution.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.len();
        assert_eq!(x.len(), n);
        x[0] *= self.inv_pivot[0];
        for i in 1..n {
            x[i] = (x[i] - self.sub * x[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.c_prime[i] * x[i + 1];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn apply(n: usize, r: f64, c: f64, x: &[f64]) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let l = if i == 0 { x[0] } else { x[i - 1] };
                let rr = if i == n - 1 { x[n - 1] } else { x[i + 1] };
                (1.0 + c) * x[i] - r * (l - 2.0 * x[i] + rr)
            })
            .collect()
    }

    #[test]
    fn solves_against_direct_application() {
        let n = 17;
        let (r, c) = (3.7, 0.2);
        let truth: Vec<f64> = (0..n).map(|i| ((i * 7 % 5) as f64 - 1.5).sin()).collect();
        let mut x = apply(n, r, c, &truth);
        NeumannTridiagonal::new(n, r, c).solve_in_place(&mut x);
        for (a, b) in x.iter().zip(&truth) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conserves_sum_without_decay() {
        let n = 50;
        let mut x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).exp() % 3.0).collect();
        let before: f64 = x.iter().sum();
        NeumannTridiagonal::new(n, 12.0, 0.0).solve_in_place(&mut x);
        let after: f64 = x.iter().sum();
        assert!((before - after).abs() < 1e-12 * before);
        assert!(x.iter().all(|&v| v >= 0.0));
    }
}

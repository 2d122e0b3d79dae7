//! Gauss–Legendre rules and a small adaptive integrator.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Nodes come out ascending. Newton on P_n from the Chebyshev-like initial guess.
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "Gauss rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
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
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussRule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped affinely onto [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let x = self.nodes.iter().map(|&t| mid + half * t).collect();
        let w = self.weights.iter().map(|&w| half * w).collect();
        (x, w)
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut s = 0.0;
        for (t, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(mid + half * t);
        }
        half * s
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

/// Lagrange basis polynomials through `nodes`, evaluated at `x`.
pub fn lagrange_basis(nodes: &[f64], x: f64) -> Vec<f64> {
    let n = nodes.len();
    let mut out = vec![1.0; n];
    for j in 0..n {
        for m in 0..n {
            if m != j {
                out[j] *= (x - nodes[m]) / (nodes[j] - nodes[m]);
            }
        }
    }
    out
}

/// Adaptive Gauss–Legendre: compare a 10- and 20-point rule, bisect where they disagree.
pub struct Adaptive {
    coarse: GaussRule,
    fine: GaussRule,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_depth: usize,
}

impl Adaptive {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Self {
        Adaptive {
            coarse: GaussRule::new(10),
            fine: GaussRule::new(20),
            abs_tol,
            rel_tol,
            max_depth: 40,
        }
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64) -> Result<f64> {
        if a == b {
            return Ok(0.0);
        }
        let c = self.coarse.integrate(f, a, b);
        let fi = self.fine.integrate(f, a, b);
        // global scale estimate keeps the relative test meaningful for subintervals
        let scale = fi.abs();
        let mut worst = (c, fi);
        let value = self.recurse(f, a, b, c, fi, self.abs_tol, scale, 0, &mut worst)?;
        Ok(value)
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        &self,
        f: &F,
        a: f64,
        b: f64,
        coarse: f64,
        fine: f64,
        tol: f64,
        scale: f64,
        depth: usize,
        worst: &mut (f64, f64),
    ) -> Result<f64> {
        let err = (fine - coarse).abs();
        if err <= tol.max(self.rel_tol * scale) || (b - a).abs() < 1e-15 * a.abs().max(1.0) {
            return Ok(fine);
        }
        if depth >= self.max_depth {
            return Err(Error::Quadrature {
                previous: worst.0,
                last: worst.1,
            });
        }
        *worst = (coarse, fine);
        let m = 0.5 * (a + b);
        let lc = self.coarse.integrate(f, a, m);
        let lf = self.fine.integrate(f, a, m);
        let rc = self.coarse.integrate(f, m, b);
        let rf = self.fine.integrate(f, m, b);
        let l = self.recurse(f, a, m, lc, lf, 0.5 * tol, scale, depth + 1, worst)?;
        let r = self.recurse(f, m, b, rc, rf, 0.5 * tol, scale, depth + 1, worst)?;
        Ok(l + r)
    }
}

/// Integrate over [a, b] split at the given interior breakpoints.
pub fn adaptive_with_breaks<F: Fn(f64) -> f64>(
    f: &F,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64> {
    let q = Adaptive::new(abs_tol / (breaks.len().max(2) - 1) as f64, rel_tol);
    let mut total = 0.0;
    for w in breaks.windows(2) {
        total += q.integrate(f, w[0], w[1])?;
    }
    Ok(total)
}

/// ln Γ(n + 1) for integer n, by direct summation (channels never exceed a few thousand).
pub fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

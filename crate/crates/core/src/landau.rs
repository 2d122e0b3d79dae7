//! Transverse objects on the lowest Landau level: the projection kernel, the
//! Berezin–Toeplitz matrix pWp, its spectrum and the counting quantities built on it.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProfileClass;
use crate::quadrature::{adaptive_with_breaks, ln_factorial, GaussRule};

/// Integral kernel of the lowest-Landau-level projection.
///
/// The default implementation is the constant-field one; other fields can be plugged
/// in for experiments, nothing downstream assumes the closed form.
pub trait ProjectionKernel: Send + Sync {
    fn kernel(&self, x: [f64; 2], y: [f64; 2]) -> Complex64;
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantField {
    pub b0: f64,
}

impl ProjectionKernel for ConstantField {
    fn kernel(&self, x: [f64; 2], y: [f64; 2]) -> Complex64 {
        lll_projection_kernel(self.b0, x, y)
    }
}

/// (b0/2pi) exp(-i b0 (x1 y2 - x2 y1)/2 - b0 |x-y|^2/4).
///
/// Phase convention: the level is spanned by z^m exp(-b0|z|^2/4), z = x1 + i x2.
pub fn lll_projection_kernel(b0: f64, x: [f64; 2], y: [f64; 2]) -> Complex64 {
    let dx = x[0] - y[0];
    let dy = x[1] - y[1];
    let phase = -0.5 * b0 * (x[0] * y[1] - x[1] * y[0]);
    let modulus = b0 / (2.0 * PI) * (-0.25 * b0 * (dx * dx + dy * dy)).exp();
    Complex64::from_polar(modulus, phase)
}

/// Normalized angular mode psi_m, proportional to z^m exp(-b0|z|^2/4).
pub fn lll_mode(b0: f64, m: usize, x: [f64; 2]) -> Complex64 {
    let r2 = x[0] * x[0] + x[1] * x[1];
    if r2 == 0.0 {
        return if m == 0 {
            Complex64::new((b0 / (2.0 * PI)).sqrt(), 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        };
    }
    let rho = 0.5 * b0 * r2;
    let ln_mod = 0.5 * (b0 / (2.0 * PI)).ln() + 0.5 * m as f64 * rho.ln() - 0.5 * rho - 0.5 * ln_factorial(m);
    let theta = x[1].atan2(x[0]);
    Complex64::from_polar(ln_mod.exp(), m as f64 * theta)
}

/// Orthonormal Laguerre functions for the probability measure rho^alpha e^-rho / Gamma(alpha+1),
/// values p_0..=p_nmax at rho. Three-term recurrence in Jacobi-matrix form.
pub fn orthonormal_laguerre(alpha: f64, nmax: usize, rho: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(nmax + 1);
    p.push(1.0);
    if nmax == 0 {
        return p;
    }
    p.push((1.0 + alpha - rho) / (1.0 + alpha).sqrt());
    for n in 1..nmax {
        let nf = n as f64;
        let next = ((2.0 * nf + 1.0 + alpha - rho) * p[n] - (nf * (nf + alpha)).sqrt() * p[n - 1])
            / ((nf + 1.0) * (nf + 1.0 + alpha)).sqrt();
        p.push(next);
    }
    p
}

/// Composite Gauss rule for the Gamma(alpha+1) probability density, good for integrands
/// that are polynomials of degree about 2*nmax times a smooth factor.
#[derive(Debug, Clone)]
pub struct GammaRule {
    pub nodes: Vec<f64>,
    /// Quadrature weight times density at the node.
    pub weights: Vec<f64>,
    /// Plain quadrature weights, without the density.
    pub raw_weights: Vec<f64>,
}

impl GammaRule {
    pub fn new(alpha: usize, nmax: usize, refine: usize) -> Self {
        let a = alpha as f64;
        let center = a + 2.0 * nmax as f64 + 1.0;
        let spread = 2.0 * ((nmax as f64) * (nmax as f64 + a)).sqrt() + 13.0 * center.sqrt() + 30.0;
        let lo = (center - spread).max(0.0);
        let hi = center + spread;
        let width = (0.25 * center.sqrt()).clamp(0.5, 4.0) / refine.max(1) as f64;
        let panels = ((hi - lo) / width).ceil().max(1.0) as usize;
        let rule = GaussRule::new(12);
        let ln_norm = ln_factorial(alpha);
        let h = (hi - lo) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * 12);
        let mut weights = Vec::with_capacity(panels * 12);
        let mut raw_weights = Vec::with_capacity(panels * 12);
        for p in 0..panels {
            let (x, w) = rule.mapped(lo + p as f64 * h, lo + (p + 1) as f64 * h);
            for (xi, wi) in x.into_iter().zip(w) {
                let ln_dens = if xi > 0.0 { a * xi.ln() - xi - ln_norm } else { f64::NEG_INFINITY };
                let wd = wi * ln_dens.exp();
                nodes.push(xi);
                weights.push(wd);
                raw_weights.push(wi);
            }
        }
        GammaRule { nodes, weights, raw_weights }
    }
}

/// Transverse weight function handed to the Toeplitz builder.
pub enum TransverseWeight<'a> {
    /// W(|x|).
    Radial(&'a (dyn Fn(f64) -> f64 + Sync)),
    General(&'a (dyn Fn([f64; 2]) -> f64 + Sync)),
}

/// Mean of W(|x|) against the m-th mode density, i.e. the m-th diagonal entry of pWp
/// for radial W.
pub fn radial_toeplitz_entry(w: &(dyn Fn(f64) -> f64 + Sync), b0: f64, m: usize, tol: f64) -> Result<f64> {
    let c = m as f64 + 1.0;
    let lo = (c - 14.0 * c.sqrt() - 25.0).max(0.0);
    let hi = c + 14.0 * c.sqrt() + 60.0;
    let ln_norm = ln_factorial(m);
    let mf = m as f64;
    let f = |rho: f64| {
        if rho <= 0.0 {
            return if m == 0 { w(0.0) } else { 0.0 };
        }
        let dens = (mf * rho.ln() - rho - ln_norm).exp();
        dens * w((2.0 * rho / b0).sqrt())
    };
    let mut breaks = vec![lo];
    // resolve the region near the origin where W tends to vary fastest
    for &b in &[0.05, 0.25, 1.0, 4.0] {
        if b > lo && b < hi {
            breaks.push(b);
        }
    }
    let pieces = 8;
    let start = *breaks.last().unwrap();
    for i in 1..=pieces {
        breaks.push(start + (hi - start) * i as f64 / pieces as f64);
    }
    adaptive_with_breaks(&f, &breaks, tol, tol)
}

/// Matrix of pWp in the first `m` angular modes.
pub fn toeplitz_matrix(w: TransverseWeight<'_>, b0: f64, m: usize, tol: f64) -> Result<DMatrix<Complex64>> {
    if m == 0 {
        return Err(Error::invalid("basis size must be positive"));
    }
    if !(b0 > 0.0) {
        return Err(Error::invalid("field strength must be positive"));
    }
    match w {
        TransverseWeight::Radial(f) => {
            use rayon::prelude::*;
            let diag: Result<Vec<f64>> = (0..m).into_par_iter().map(|i| radial_toeplitz_entry(f, b0, i, tol)).collect();
            let diag = diag?;
            Ok(DMatrix::from_fn(m, m, |i, j| if i == j { Complex64::new(diag[i], 0.0) } else { Complex64::new(0.0, 0.0) }))
        }
        TransverseWeight::General(f) => general_toeplitz(f, b0, m, tol.max(1e-10)),
    }
}

fn general_toeplitz(w: &(dyn Fn([f64; 2]) -> f64 + Sync), b0: f64, m: usize, tol: f64) -> Result<DMatrix<Complex64>> {
    let mut n_theta = (2 * m + 8).next_power_of_two();
    let mut refine = 1;
    let mut prev = general_toeplitz_at(w, b0, m, n_theta, refine);
    let mut last_change = f64::INFINITY;
    for _ in 0..6 {
        n_theta *= 2;
        refine *= 2;
        let next = general_toeplitz_at(w, b0, m, n_theta, refine);
        last_change = (&next - &prev).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prev = next;
        if last_change < tol {
            return Ok(prev);
        }
    }
    Err(Error::Quadrature { previous: last_change, last: last_change })
}

fn general_toeplitz_at(w: &(dyn Fn([f64; 2]) -> f64 + Sync), b0: f64, m: usize, n_theta: usize, refine: usize) -> DMatrix<Complex64> {
    // rho rule wide enough for every mode up to m-1
    let rule = GammaRule::new(0, m.saturating_sub(1).div_ceil(2).max(1), refine);
    let ln_fact: Vec<f64> = (0..m).map(ln_factorial).collect();
    let mut out = DMatrix::<Complex64>::zeros(m, m);
    for (&rho, &base) in rule.nodes.iter().zip(&rule.raw_weights) {
        let r = (2.0 * rho / b0).sqrt();
        let samples: Vec<f64> = (0..n_theta)
            .map(|b| {
                let th = 2.0 * PI * b as f64 / n_theta as f64;
                w([r * th.cos(), r * th.sin()])
            })
            .collect();
        let fourier: Vec<Complex64> = (0..(2 * m - 1))
            .map(|idx| {
                let d = idx as f64 - (m as f64 - 1.0);
                let mut s = Complex64::new(0.0, 0.0);
                for (b, &v) in samples.iter().enumerate() {
                    let th = 2.0 * PI * b as f64 / n_theta as f64;
                    s += Complex64::from_polar(v, d * th);
                }
                s / n_theta as f64
            })
            .collect();
        let ln_rho = if rho > 0.0 { rho.ln() } else { f64::NEG_INFINITY };
        for i in 0..m {
            for j in i..m {
                let e = 0.5 * (i + j) as f64 * ln_rho - rho - 0.5 * (ln_fact[i] + ln_fact[j]);
                let radial = if i + j == 0 { (-rho).exp() } else { e.exp() };
                let f = fourier[j + m - 1 - i];
                out[(i, j)] += f * (base * radial);
            }
        }
    }
    for i in 0..m {
        for j in 0..i {
            out[(i, j)] = out[(j, i)].conj();
        }
        out[(i, i)].im = 0.0;
    }
    out
}

/// Descending eigenvalues of pWp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToeplitzSpectrum {
    pub eigenvalues: Vec<f64>,
    pub basis_size: usize,
    pub b0: f64,
}

impl ToeplitzSpectrum {
    pub fn from_matrix(matrix: &DMatrix<Complex64>, b0: f64) -> Self {
        let n = matrix.nrows();
        let is_diag = (0..n).all(|i| (0..n).all(|j| i == j || matrix[(i, j)].norm() == 0.0));
        let mut eigenvalues: Vec<f64> = if is_diag {
            (0..n).map(|i| matrix[(i, i)].re).collect()
        } else {
            matrix.clone().symmetric_eigen().eigenvalues.iter().copied().collect()
        };
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        ToeplitzSpectrum { eigenvalues, basis_size: n, b0 }
    }

    /// Directly from values (any order).
    pub fn from_values(mut values: Vec<f64>, b0: f64) -> Self {
        values.sort_by(|a, b| b.total_cmp(a));
        let n = values.len();
        ToeplitzSpectrum { eigenvalues: values, basis_size: n, b0 }
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Eigenvalues of B = K*K. The only place the factor 1/2 between pWp and B lives.
    pub fn b_eigenvalues(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|&s| pwp_to_b(s)).collect()
    }
}

/// KK* = pWp / 2, so each pWp eigenvalue s corresponds to the B eigenvalue s/2.
pub fn pwp_to_b(s: f64) -> f64 {
    0.5 * s
}

/// #{ s_j > r }.
pub fn counting_function(spec: &ToeplitzSpectrum, r: f64) -> usize {
    spec.eigenvalues.iter().filter(|&&s| s > r).count()
}

/// #{ beta_j > r } for the B-eigenvalues beta_j = s_j/2.
pub fn counting_b(spec: &ToeplitzSpectrum, r: f64) -> usize {
    spec.eigenvalues.iter().filter(|&&s| pwp_to_b(s) > r).count()
}

/// Sum of arctan(s_j / (2 sqrt(lambda))).
pub fn phi(spec: &ToeplitzSpectrum, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::invalid(format!("phi needs lambda > 0, got {lambda}")));
    }
    let root = lambda.sqrt();
    Ok(spec.eigenvalues.iter().map(|&s| (pwp_to_b(s) / root).atan()).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Schatten {
    P1 = 1,
    P2 = 2,
}

impl Schatten {
    fn exponent(self) -> i32 {
        self as i32
    }
}

/// sum (beta/r)^p (1 + beta^2/r^2)^(-p/2) over B-eigenvalues.
pub fn sigma_p(spec: &ToeplitzSpectrum, r: f64, p: Schatten) -> f64 {
    let pe = p.exponent();
    spec.b_eigenvalues()
        .iter()
        .map(|&b| {
            let u = b / r;
            u.powi(pe) * (1.0 + u * u).powf(-0.5 * pe as f64)
        })
        .sum()
}

/// sum over beta <= r of (beta/r)^p.
pub fn n_tilde_p(spec: &ToeplitzSpectrum, r: f64, p: Schatten) -> f64 {
    spec.b_eigenvalues().iter().filter(|&&b| b <= r).map(|&b| (b / r).powi(p.exponent())).sum()
}

/// The comparison function of the Gaussian-decay regime.
pub fn phi_beta(beta: f64, mu: f64, b0: f64, r: f64) -> f64 {
    let l = r.ln().abs();
    if beta < 1.0 {
        0.5 * b0 * mu.powf(-1.0 / beta) * l.powf(1.0 / beta)
    } else if beta == 1.0 {
        l / (1.0 + 2.0 * mu / b0).ln()
    } else {
        beta / (beta - 1.0) * l / l.ln()
    }
}

/// |ln r| / ln|ln r|.
pub fn phi_infinity(r: f64) -> f64 {
    let l = r.ln().abs();
    l / l.ln()
}

/// Power-law constant (b0/4pi) * integral of u0^(2/m) over the circle; u0 sampled uniformly.
pub fn a1_prefactor(b0: f64, m: f64, u0: &[f64]) -> f64 {
    let integral = if u0.is_empty() {
        2.0 * PI
    } else {
        2.0 * PI * u0.iter().map(|u| u.powf(2.0 / m)).sum::<f64>() / u0.len() as f64
    };
    b0 / (4.0 * PI) * integral
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "lowercase")]
pub enum CountingFit {
    A1 {
        exponent: f64,
        prefactor: f64,
        expected_exponent: f64,
        expected_prefactor: f64,
        residuals: Vec<f64>,
    },
    /// Ratio N(r)/shape(r) along the window; `ratios` are ordered from large r to small r.
    Shape {
        scale: f64,
        ratios: Vec<f64>,
        radii: Vec<f64>,
    },
}

/// Fit the counting function of pWp against the regime's law on [r_lo, r_hi].
pub fn fit_counting_asymptotics(
    spec: &ToeplitzSpectrum,
    class: &ProfileClass,
    window: (f64, f64),
    points: usize,
) -> Result<CountingFit> {
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo) || points < 2 {
        return Err(Error::invalid("window must satisfy 0 < r_lo < r_hi with at least two points"));
    }
    if counting_function(spec, lo) + 1 >= spec.basis_size {
        return Err(Error::invalid(format!(
            "window reaches the truncation: {} of {} eigenvalues exceed r = {lo:e}",
            counting_function(spec, lo),
            spec.basis_size
        )));
    }
    let radii: Vec<f64> = (0..points)
        .map(|i| (hi.ln() + (lo.ln() - hi.ln()) * i as f64 / (points - 1) as f64).exp())
        .collect();
    match class {
        ProfileClass::A1 { m, u0 } => {
            let pts: Vec<(f64, f64)> = radii
                .iter()
                .map(|&r| (r.ln(), counting_function(spec, r) as f64))
                .filter(|&(_, n)| n > 0.0)
                .map(|(x, n)| (x, n.ln()))
                .collect();
            if pts.len() < 2 {
                return Err(Error::invalid("too few nonzero counts in the window"));
            }
            let (slope, intercept) = least_squares(&pts);
            let residuals = pts.iter().map(|&(x, y)| y - (intercept + slope * x)).collect();
            Ok(CountingFit::A1 {
                exponent: slope,
                prefactor: intercept.exp(),
                expected_exponent: -2.0 / m,
                expected_prefactor: a1_prefactor(spec.b0, *m, u0),
                residuals,
            })
        }
        ProfileClass::A2 { beta, mu } => Ok(shape_fit(spec, &radii, |r| phi_beta(*beta, *mu, spec.b0, r))),
        ProfileClass::A3 { .. } => Ok(shape_fit(spec, &radii, phi_infinity)),
        ProfileClass::Other => Err(Error::invalid("no asymptotic law for profile class 'other'")),
    }
}

fn shape_fit(spec: &ToeplitzSpectrum, radii: &[f64], shape: impl Fn(f64) -> f64) -> CountingFit {
    let ratios: Vec<f64> = radii.iter().map(|&r| counting_function(spec, r) as f64 / shape(r)).collect();
    let num: f64 = radii.iter().map(|&r| counting_function(spec, r) as f64 * shape(r)).sum();
    let den: f64 = radii.iter().map(|&r| shape(r).powi(2)).sum();
    CountingFit::Shape { scale: num / den, ratios, radii: radii.to_vec() }
}

/// Counting on the window is unchanged when the basis is doubled.
pub fn truncation_stable(small: &ToeplitzSpectrum, large: &ToeplitzSpectrum, window: (f64, f64), points: usize) -> bool {
    (0..points).all(|i| {
        let r = (window.1.ln() + (window.0.ln() - window.1.ln()) * i as f64 / (points.max(2) - 1) as f64).exp();
        counting_function(small, r) == counting_function(large, r)
    })
}

fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::Adaptive;
    use proptest::prelude::*;

    #[test]
    fn kernel_diagonal_and_modulus() {
        let k = lll_projection_kernel(2.0, [0.3, -1.2], [0.3, -1.2]);
        assert!((k - Complex64::new(1.0 / PI, 0.0)).norm() < 1e-15);
        let x = [0.4, 0.9];
        let y = [1.4, -0.1];
        let v = lll_projection_kernel(2.0, x, y);
        assert!((v.norm() - (-1.0f64).exp() / PI).abs() < 1e-15);
    }

    #[test]
    fn kernel_matches_mode_expansion() {
        // oracle: sum over normalized modes z^m e^{-b|z|^2/4} until the tail is negligible
        let b0 = 2.0;
        for (x, y) in [([0.4, 0.9], [1.4, -0.1]), ([-0.7, 0.2], [0.1, 0.5]), ([1.0, 1.0], [-0.3, 0.8])] {
            let mut s = Complex64::new(0.0, 0.0);
            for m in 0..200 {
                let term = lll_mode(b0, m, x) * lll_mode(b0, m, y).conj();
                s += term;
                if m > 20 && term.norm() < 1e-18 {
                    break;
                }
            }
            let k = lll_projection_kernel(b0, x, y);
            assert!((s - k).norm() < 1e-12, "{s} vs {k}");
        }
    }

    #[test]
    fn modes_are_normalized() {
        // ∫|psi_m|^2 = 1 by radial quadrature
        let b0 = 1.3;
        let q = Adaptive::new(1e-13, 1e-13);
        for m in [0usize, 1, 5, 12] {
            let f = |r: f64| 2.0 * PI * r * lll_mode(b0, m, [r, 0.0]).norm_sqr();
            let v = q.integrate(&f, 0.0, 30.0).unwrap();
            assert!((v - 1.0).abs() < 1e-11, "m = {m}: {v}");
        }
    }

    #[test]
    fn laguerre_orthonormality() {
        for alpha in [0usize, 3, 40] {
            let rule = GammaRule::new(alpha, 10, 1);
            for i in 0..=10 {
                for j in 0..=10 {
                    let mut s = 0.0;
                    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                        let p = orthonormal_laguerre(alpha as f64, 10, *x);
                        s += w * p[i] * p[j];
                    }
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((s - want).abs() < 1e-11, "alpha {alpha} ({i},{j}) = {s}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn kernel_is_hermitian(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0, d in -3.0f64..3.0, b0 in 0.1f64..5.0) {
            let k1 = lll_projection_kernel(b0, [a, b], [c, d]);
            let k2 = lll_projection_kernel(b0, [c, d], [a, b]);
            prop_assert!((k1 - k2.conj()).norm() < 1e-15);
        }

        #[test]
        fn sandwich_inequalities(values in proptest::collection::vec(0.0f64..2.0, 0..40), r in 1e-4f64..3.0) {
            let spec = ToeplitzSpectrum::from_values(values, 1.0);
            for p in [Schatten::P1, Schatten::P2] {
                let s = sigma_p(&spec, r, p);
                let nt = n_tilde_p(&spec, r, p);
                let n = counting_b(&spec, r) as f64;
                let lower = 2f64.powf(-0.5 * p as i32 as f64) * nt;
                prop_assert!(lower <= s + 1e-12);
                prop_assert!(s <= nt + n + 1e-12);
                prop_assert!(nt <= spec.eigenvalues.iter().filter(|&&x| x > 0.0).count() as f64 + 1e-12);
            }
            let lambda = r * r;
            prop_assert!(sigma_p(&spec, r, Schatten::P2) <= phi(&spec, lambda).unwrap() + 1e-12);
        }

        #[test]
        fn counting_is_monotone(values in proptest::collection::vec(0.0f64..2.0, 0..40), r1 in 1e-4f64..3.0, r2 in 1e-4f64..3.0) {
            let spec = ToeplitzSpectrum::from_values(values, 1.0);
            let (a, b) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
            prop_assert!(counting_function(&spec, a) >= counting_function(&spec, b));
        }

        #[test]
        fn phi_monotonicity(values in proptest::collection::vec(0.01f64..2.0, 1..30), l in 1e-4f64..2.0, extra in 0.01f64..1.0) {
            let spec = ToeplitzSpectrum::from_values(values.clone(), 1.0);
            prop_assert!(phi(&spec, 2.0 * l).unwrap() < phi(&spec, l).unwrap());
            let mut more = values;
            more.push(extra);
            let bigger = ToeplitzSpectrum::from_values(more, 1.0);
            prop_assert!(phi(&bigger, l).unwrap() > phi(&spec, l).unwrap());
        }
    }

    #[test]
    fn counting_examples() {
        let spec = ToeplitzSpectrum::from_values(vec![1.0, 0.5, 0.1], 1.0);
        assert_eq!(counting_function(&spec, 0.3), 2);
        assert_eq!(counting_function(&spec, 1.0), 0);
        assert_eq!(counting_function(&spec, 5.0), 0);
        // the B-count at r is the pWp count at 2r
        assert_eq!(counting_b(&spec, 0.15), counting_function(&spec, 0.3));
    }

    #[test]
    fn phi_examples() {
        let lambda: f64 = 0.09;
        let spec = ToeplitzSpectrum::from_values(vec![2.0 * lambda.sqrt()], 1.0);
        assert!((phi(&spec, lambda).unwrap() - PI / 4.0).abs() < 1e-15);
        let empty = ToeplitzSpectrum::from_values(vec![], 1.0);
        assert_eq!(phi(&empty, 1.0).unwrap(), 0.0);
        assert!(phi(&spec, 0.0).is_err());
    }

    #[test]
    fn sigma_and_n_tilde_examples() {
        // single beta = r: s = 2r
        let r = 0.2;
        let spec = ToeplitzSpectrum::from_values(vec![2.0 * r], 1.0);
        assert!((sigma_p(&spec, r, Schatten::P2) - 0.5).abs() < 1e-15);
        assert_eq!(n_tilde_p(&spec, r, Schatten::P1), 1.0);
        assert_eq!(n_tilde_p(&spec, r, Schatten::P2), 1.0);
        assert_eq!(counting_b(&spec, r), 0);
        let big = ToeplitzSpectrum::from_values(vec![3.0, 4.0], 1.0);
        assert_eq!(n_tilde_p(&big, 0.5, Schatten::P1), 0.0);
    }

    #[test]
    fn constant_weight_gives_identity() {
        let f = |_: [f64; 2]| 0.7;
        let m = toeplitz_matrix(TransverseWeight::General(&f), 1.5, 6, 1e-10).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let want = if i == j { 0.7 } else { 0.0 };
                assert!((m[(i, j)] - Complex64::new(want, 0.0)).norm() < 1e-10, "({i},{j}) = {}", m[(i, j)]);
            }
        }
        let g = |_: f64| 0.7;
        let m = toeplitz_matrix(TransverseWeight::Radial(&g), 1.5, 6, 1e-12).unwrap();
        assert!((m[(5, 5)].re - 0.7).abs() < 1e-12);
    }

    #[test]
    fn gaussian_diagonal_is_geometric() {
        // oracle: plain 2D quadrature of e^{-r^2}|psi_m|^2 in polar coordinates
        let b0 = 2.0;
        let g = |r: f64| (-r * r).exp();
        let m = toeplitz_matrix(TransverseWeight::Radial(&g), b0, 12, 1e-13).unwrap();
        let q = Adaptive::new(1e-14, 1e-13);
        for i in 0..12 {
            let f = |r: f64| 2.0 * PI * r * (-r * r).exp() * lll_mode(b0, i, [r, 0.0]).norm_sqr();
            let oracle = q.integrate(&f, 0.0, 12.0).unwrap();
            assert!((m[(i, i)].re - oracle).abs() < 1e-8);
            assert!((m[(i, i)].re - 2f64.powi(-(i as i32 + 1))).abs() < 1e-8);
        }
    }

    #[test]
    fn general_path_agrees_with_radial_path() {
        let b0 = 1.0;
        let g = |r: f64| 1.0 / (1.0 + r * r).powi(2);
        let h = |x: [f64; 2]| g((x[0] * x[0] + x[1] * x[1]).sqrt());
        let a = toeplitz_matrix(TransverseWeight::Radial(&g), b0, 8, 1e-12).unwrap();
        let b = toeplitz_matrix(TransverseWeight::General(&h), b0, 8, 1e-10).unwrap();
        assert!((a - b).iter().all(|z| z.norm() < 1e-8));
    }

    #[test]
    fn non_radial_weight_is_hermitian_and_positive() {
        let h = |x: [f64; 2]| (-(x[0] - 0.7).powi(2) - 2.0 * (x[1] + 0.2).powi(2)).exp();
        let m = toeplitz_matrix(TransverseWeight::General(&h), 1.0, 10, 1e-10).unwrap();
        assert!((&m - m.adjoint()).iter().all(|z| z.norm() < 1e-12));
        let spec = ToeplitzSpectrum::from_matrix(&m, 1.0);
        assert!(*spec.eigenvalues.last().unwrap() > -1e-10);
    }

    #[test]
    fn synthetic_power_spectrum_slope() {
        // s_j = j^{-m/2} gives N(r) = floor(r^{-2/m}) exactly
        let m = 4.0;
        let values: Vec<f64> = (1..=20000).map(|j| (j as f64).powf(-m / 2.0)).collect();
        let spec = ToeplitzSpectrum::from_values(values, 2.0);
        let fit = fit_counting_asymptotics(&spec, &ProfileClass::A1 { m, u0: vec![] }, (1e-6, 1e-3), 12).unwrap();
        match fit {
            CountingFit::A1 { exponent, expected_exponent, .. } => {
                assert!((exponent - expected_exponent).abs() < 2e-3, "{exponent}");
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn window_past_truncation_is_rejected() {
        let spec = ToeplitzSpectrum::from_values(vec![0.5, 0.25, 0.125], 1.0);
        let err = fit_counting_asymptotics(&spec, &ProfileClass::A3 { radius: 1.0 }, (1e-3, 1e-2), 4);
        assert!(err.is_err());
    }

    #[test]
    fn a1_prefactor_for_constant_u0() {
        assert!((a1_prefactor(1.0, 4.0, &[]) - 0.5).abs() < 1e-15);
        assert!((a1_prefactor(1.0, 4.0, &[1.0, 1.0, 1.0]) - 0.5).abs() < 1e-15);
    }
}

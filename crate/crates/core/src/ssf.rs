//! Spectral shift function near the bottom of the spectrum: the regularized xi2, its
//! derivative, the Krein/Birman–Schwinger cross-check on the negative axis, and the
//! Breit–Wigner, singularity and trace-formula pipelines.
//!
//! Everything is computed per angular-momentum channel (the determinant factorizes) and
//! summed. Arguments are unwrapped on det(I + T), whose zeros and phase jumps coincide
//! with those of det2; xi2 = xi - (1/pi) Im tr T.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::birman_schwinger::BsProblem;
use crate::error::{Error, Result};
use crate::landau::{counting_function, n_tilde_p, phi, sigma_p, Schatten, ToeplitzSpectrum};
use crate::model::{RegionSpec, Side};
use crate::resonances::{fit_single_constant, ConstantFit, Resonance, ScanReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsfConfig {
    /// Largest accepted phase step between neighbouring samples.
    pub max_arg_step: f64,
    /// Bisection depth for phase unwrapping.
    pub max_refine: usize,
    /// Relative finite-difference step for xi2'.
    pub fd_rel_step: f64,
    /// Samples on the quarter circle joining the negative axis to the positive one.
    pub arc_points: usize,
    /// Bisection tolerance for negative-axis crossings.
    pub crossing_tol: f64,
}

impl Default for SsfConfig {
    fn default() -> Self {
        SsfConfig { max_arg_step: 0.25 * PI, max_refine: 30, fd_rel_step: 1e-3, arc_points: 8, crossing_tol: 1e-10 }
    }
}

/// Where the cumulative xi was pinned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub lambda: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchEntry {
    pub lambda: f64,
    /// Extra bisection points needed to reach this sample.
    pub refinements: usize,
    /// Largest phase step taken (radians, summed over channels' maxima).
    pub max_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SSFProfile {
    pub lambdas: Vec<f64>,
    pub xi2: Vec<f64>,
    pub xi_prime: Vec<f64>,
    /// xi' from the closed form (1/pi) Im tr((I+T)^{-1} dT/dz), kept as a cross-check.
    pub xi_prime_analytic: Vec<f64>,
    pub xi: Vec<f64>,
    pub anchor: Anchor,
    pub branch_log: Vec<BranchEntry>,
}

impl SSFProfile {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lambda,xi2,xi_prime,xi\n");
        for i in 0..self.lambdas.len() {
            s.push_str(&format!("{:.17e},{:.17e},{:.17e},{:.17e}\n", self.lambdas[i], self.xi2[i], self.xi_prime[i], self.xi[i]));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiValues {
    pub lambdas: Vec<f64>,
    pub xi: Vec<f64>,
    pub anchor: Anchor,
    pub branch_log: Vec<BranchEntry>,
}

/// Point on the boundary of the physical sheet above lambda.
pub fn k_of_lambda(lambda: f64) -> Result<Complex64> {
    if lambda > 0.0 {
        Ok(Complex64::new(lambda.sqrt(), 0.0))
    } else if lambda < 0.0 {
        Ok(Complex64::new(0.0, (-lambda).sqrt()))
    } else {
        Err(Error::invalid("lambda = 0 is the threshold itself"))
    }
}

fn wrap(a: f64) -> f64 {
    let mut x = a % (2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    } else if x <= -PI {
        x += 2.0 * PI;
    }
    x
}

/// SSF computations on one Birman–Schwinger problem.
pub struct SsfEngine<'a> {
    pub problem: &'a BsProblem,
    pub cfg: SsfConfig,
}

impl<'a> SsfEngine<'a> {
    pub fn new(problem: &'a BsProblem, cfg: SsfConfig) -> Self {
        SsfEngine { problem, cfg }
    }

    fn check_lambda(&self, lambda: f64) -> Result<Complex64> {
        let k = k_of_lambda(lambda)?;
        self.problem.check_domain(k)?;
        Ok(k)
    }

    fn log_det(&self, ch: usize, k: Complex64) -> Result<Complex64> {
        self.problem.channel_log_det(ch, k)
    }

    /// Unwrap Im log det(I + T_ch) along a polyline, bisecting segments with large steps.
    /// Returns the phase at every vertex, the number of extra points and the largest step.
    fn unwrap_along(&self, ch: usize, path: &[Complex64], start: f64) -> Result<(Vec<f64>, Vec<usize>, f64)> {
        let mut phases = Vec::with_capacity(path.len());
        let mut extra = Vec::with_capacity(path.len());
        let mut cur = start;
        let mut max_step: f64 = 0.0;
        let mut prev_log = self.log_det(ch, path[0])?;
        phases.push(cur);
        extra.push(0);
        for w in path.windows(2) {
            let next_log = self.log_det(ch, w[1])?;
            let mut count = 0;
            let d = self.segment_phase(ch, w[0], w[1], prev_log, next_log, 0, &mut count, &mut max_step)?;
            cur += d;
            phases.push(cur);
            extra.push(count);
            prev_log = next_log;
        }
        Ok((phases, extra, max_step))
    }

    #[allow(clippy::too_many_arguments)]
    fn segment_phase(
        &self,
        ch: usize,
        a: Complex64,
        b: Complex64,
        la: Complex64,
        lb: Complex64,
        depth: usize,
        count: &mut usize,
        max_step: &mut f64,
    ) -> Result<f64> {
        let d = wrap(lb.im - la.im);
        let dm = (lb.re - la.re).abs();
        if d.abs() < self.cfg.max_arg_step && dm < 1.0 {
            *max_step = max_step.max(d.abs());
            return Ok(d);
        }
        if depth >= self.cfg.max_refine {
            return Err(Error::Unwrap { a: a.re * a.re - a.im * a.im, b: b.re * b.re - b.im * b.im });
        }
        let m = 0.5 * (a + b);
        let lm = self.log_det(ch, m)?;
        *count += 1;
        Ok(self.segment_phase(ch, a, m, la, lm, depth + 1, count, max_step)?
            + self.segment_phase(ch, m, b, lm, lb, depth + 1, count, max_step)?)
    }

    /// Number of eigenvalues of H_V below lambda < 0 in channel ch, by Birman–Schwinger.
    pub fn channel_bs_count(&self, ch: usize, lambda: f64) -> Result<usize> {
        Ok(self.problem.bs_eigenvalues(ch, lambda)?.iter().filter(|&&v| v < -1.0).count())
    }

    /// xi per channel at sorted lambdas, plus bookkeeping.
    fn channel_xi(&self, ch: usize, lambdas: &[f64]) -> Result<(Vec<f64>, Vec<usize>, Vec<f64>, Anchor)> {
        let neg: Vec<f64> = lambdas.iter().copied().filter(|&l| l < 0.0).collect();
        let pos: Vec<f64> = lambdas.iter().copied().filter(|&l| l > 0.0).collect();
        let mut xi = Vec::with_capacity(lambdas.len());
        let mut extra = Vec::with_capacity(lambdas.len());
        let mut steps = Vec::with_capacity(lambdas.len());
        let mut anchor = None;
        if !neg.is_empty() {
            // Krein route: sign changes of the real determinant from the lowest sample,
            // pinned by the Birman–Schwinger count there
            let n0 = self.channel_bs_count(ch, neg[0])?;
            anchor = Some(Anchor { lambda: neg[0], xi: -(n0 as f64) });
            let mut count = n0 as f64;
            let mut prev = self.problem.channel_real_det(ch, neg[0])?;
            check_parity(prev, n0, neg[0])?;
            xi.push(-count);
            extra.push(0);
            steps.push(0.0);
            for &l in &neg[1..] {
                let d = self.problem.channel_real_det(ch, l)?;
                if d.signum() != prev.signum() {
                    count += 1.0;
                }
                prev = d;
                xi.push(-count);
                extra.push(0);
                steps.push(0.0);
            }
        }
        if !pos.is_empty() {
            let rho = pos[0].sqrt();
            let a_lambda = -pos[0];
            let n0 = self.channel_bs_count(ch, a_lambda)?;
            let d0 = self.problem.channel_real_det(ch, a_lambda)?;
            check_parity(d0, n0, a_lambda)?;
            if anchor.is_none() {
                anchor = Some(Anchor { lambda: a_lambda, xi: -(n0 as f64) });
            }
            let mut path: Vec<Complex64> = (0..=self.cfg.arc_points)
                .map(|i| Complex64::from_polar(rho, 0.5 * PI * (1.0 - i as f64 / self.cfg.arc_points as f64)))
                .collect();
            let arc_len = path.len();
            path.extend(pos[1..].iter().map(|l| Complex64::new(l.sqrt(), 0.0)));
            let (phases, ex, ms) = self.unwrap_along(ch, &path, -PI * n0 as f64)?;
            let arc_extra: usize = ex[..arc_len].iter().sum();
            for (i, ph) in phases[arc_len - 1..].iter().enumerate() {
                xi.push(ph / PI);
                extra.push(if i == 0 { arc_extra } else { ex[arc_len - 1 + i] });
                steps.push(ms);
            }
        }
        Ok((xi, extra, steps, anchor.unwrap()))
    }

    /// Cumulative xi at sorted, deduplicated energies, without derivatives.
    pub fn xi_values(&self, lambdas: &[f64]) -> Result<XiValues> {
        let mut ls: Vec<f64> = lambdas.to_vec();
        ls.sort_by(f64::total_cmp);
        ls.dedup();
        if ls.is_empty() {
            return Err(Error::invalid("profile needs at least one energy"));
        }
        for &l in &ls {
            self.check_lambda(l)?;
        }
        let nch = self.problem.channels.len();
        let per: Result<Vec<_>> = (0..nch).into_par_iter().map(|c| self.channel_xi(c, &ls)).collect();
        let per = per?;
        let n = ls.len();
        let mut xi = vec![0.0; n];
        let mut refinements = vec![0usize; n];
        let mut max_step = vec![0.0f64; n];
        let mut anchor = Anchor { lambda: per[0].3.lambda, xi: 0.0 };
        for (x, e, s, a) in &per {
            for i in 0..n {
                xi[i] += x[i];
                refinements[i] += e[i];
                max_step[i] = max_step[i].max(s[i]);
            }
            anchor.xi += a.xi;
        }
        let branch_log = (0..n).map(|i| BranchEntry { lambda: ls[i], refinements: refinements[i], max_step: max_step[i] }).collect();
        Ok(XiValues { lambdas: ls, xi, anchor, branch_log })
    }

    /// Full profile at the given energies (sorted internally, zero excluded).
    pub fn profile(&self, lambdas: &[f64]) -> Result<SSFProfile> {
        let XiValues { lambdas: ls, xi, anchor, branch_log } = self.xi_values(lambdas)?;
        let n = ls.len();
        let traces: Result<Vec<Complex64>> = ls.par_iter().map(|&l| self.problem.trace_t(k_of_lambda(l)?)).collect();
        let traces = traces?;
        let xi2: Vec<f64> = (0..n).map(|i| xi[i] - traces[i].im / PI).collect();
        let xp: Result<Vec<f64>> = ls.par_iter().map(|&l| self.xi_prime(l)).collect();
        let xa: Result<Vec<f64>> = ls.par_iter().map(|&l| self.xi_prime_analytic(l)).collect();
        Ok(SSFProfile { lambdas: ls, xi2, xi_prime: xp?, xi_prime_analytic: xa?, xi, anchor, branch_log })
    }

    /// xi2 at a single energy (unwrapped from the anchor below it).
    pub fn xi2(&self, lambda: f64) -> Result<f64> {
        Ok(self.profile(&[lambda])?.xi2[0])
    }

    /// Sum over channels of log det2(I + T) at the boundary point above lambda.
    fn log_det2(&self, lambda: f64) -> Result<Complex64> {
        let k = self.check_lambda(lambda)?;
        self.problem.log_det2(k)
    }

    /// xi' = xi2' (Richardson central differences) + (1/pi) Im tr dT/dz.
    pub fn xi_prime(&self, lambda: f64) -> Result<f64> {
        let k = self.check_lambda(lambda)?;
        let h = self.cfg.fd_rel_step * lambda.abs();
        let base = self.log_det2(lambda)?;
        let diff = |s: f64| -> Result<f64> {
            let p = self.log_det2(lambda + s)?;
            let m = self.log_det2(lambda - s)?;
            Ok((wrap(p.im - base.im) - wrap(m.im - base.im)) / (2.0 * s * PI))
        };
        let d1 = diff(h)?;
        let d2 = diff(0.5 * h)?;
        let xi2p = (4.0 * d2 - d1) / 3.0;
        Ok(xi2p + self.problem.trace_dz_t(k)?.im / PI)
    }

    /// Closed-form xi' at many energies, in parallel.
    pub fn xi_prime_samples(&self, lambdas: &[f64]) -> Result<Vec<f64>> {
        lambdas.par_iter().map(|&l| self.xi_prime_analytic(l)).collect()
    }

    /// (1/pi) Im d/dz log det(I + T) in closed form.
    pub fn xi_prime_analytic(&self, lambda: f64) -> Result<f64> {
        let k = self.check_lambda(lambda)?;
        let mut s = Complex64::new(0.0, 0.0);
        for c in 0..self.problem.channels.len() {
            s += self.problem.channel_det_and_log_derivative(c, k)?.1;
        }
        Ok((s / (2.0 * k)).im / PI)
    }

    /// Negative-axis eigenvalues found twice: sign changes of the real determinant (Krein)
    /// and -1 crossings of the Birman–Schwinger eigenvalues.
    pub fn negative_axis_jumps(&self, range: (f64, f64), samples: usize) -> Result<JumpReport> {
        let (a, b) = range;
        if !(a < b && b < 0.0) || samples < 2 {
            return Err(Error::invalid("negative-axis range must satisfy a < b < 0 with at least 2 samples"));
        }
        self.check_lambda(a)?;
        self.check_lambda(b)?;
        let grid: Vec<f64> = (0..samples).map(|i| a + (b - a) * i as f64 / (samples - 1) as f64).collect();
        let mut krein = Vec::new();
        let mut bs = Vec::new();
        let mut tangencies = Vec::new();
        for c in 0..self.problem.channels.len() {
            let dets: Result<Vec<f64>> = grid.iter().map(|&l| self.problem.channel_real_det(c, l)).collect();
            let dets = dets?;
            let counts: Result<Vec<usize>> = grid.iter().map(|&l| self.channel_bs_count(c, l)).collect();
            let counts = counts?;
            for i in 0..samples - 1 {
                let (l0, l1) = (grid[i], grid[i + 1]);
                let sign_change = dets[i].signum() != dets[i + 1].signum();
                let dc = counts[i + 1] as i64 - counts[i] as i64;
                if dc.abs() >= 2 || (dc != 0 && !sign_change) {
                    tangencies.push(Tangency { channel: self.problem.channels[c].ell, lambda_lo: l0, lambda_hi: l1 });
                }
                if sign_change {
                    krein.push(Jump { channel: self.problem.channels[c].ell, lambda: self.bisect_det(c, l0, l1, dets[i])? });
                }
                if dc != 0 {
                    bs.push(Jump { channel: self.problem.channels[c].ell, lambda: self.crossing(c, l0, l1)? });
                }
            }
        }
        let mut matched = krein.len() == bs.len();
        let mut max_delta: f64 = 0.0;
        for j in &krein {
            match bs.iter().filter(|x| x.channel == j.channel).map(|x| (x.lambda - j.lambda).abs()).min_by(f64::total_cmp) {
                Some(d) => max_delta = max_delta.max(d),
                None => matched = false,
            }
        }
        Ok(JumpReport { krein, birman_schwinger: bs, max_delta, matched, tangencies })
    }

    fn bisect_det(&self, ch: usize, mut lo: f64, mut hi: f64, dlo: f64) -> Result<f64> {
        let slo = dlo.signum();
        while hi - lo > self.cfg.crossing_tol {
            let m = 0.5 * (lo + hi);
            if self.problem.channel_real_det(ch, m)?.signum() == slo {
                lo = m;
            } else {
                hi = m;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Root of (eigenvalue nearest -1) + 1 in [lo, hi], Illinois false position.
    fn crossing(&self, ch: usize, lo: f64, hi: f64) -> Result<f64> {
        let g = |l: f64| -> Result<f64> {
            let ev = self.problem.bs_eigenvalues(ch, l)?;
            let v = ev.iter().copied().min_by(|x, y| (x + 1.0).abs().total_cmp(&(y + 1.0).abs())).unwrap_or(0.0);
            Ok(v + 1.0)
        };
        let (mut a, mut b) = (lo, hi);
        let (mut fa, mut fb) = (g(a)?, g(b)?);
        if fa.signum() == fb.signum() {
            // nearest eigenvalue switched branches: fall back to counting bisection
            let c0 = self.channel_bs_count(ch, a)?;
            while b - a > self.cfg.crossing_tol {
                let m = 0.5 * (a + b);
                if self.channel_bs_count(ch, m)? == c0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            return Ok(0.5 * (a + b));
        }
        let mut side = 0;
        for _ in 0..200 {
            let c = (a * fb - b * fa) / (fb - fa);
            let fc = g(c)?;
            if fc == 0.0 || (b - a).abs() < self.cfg.crossing_tol {
                return Ok(c);
            }
            if fc.signum() == fb.signum() {
                b = c;
                fb = fc;
                if side == -1 {
                    fa *= 0.5;
                }
                side = -1;
            } else {
                a = c;
                fa = fc;
                if side == 1 {
                    fb *= 0.5;
                }
                side = 1;
            }
            if (b - a).abs() < self.cfg.crossing_tol || fc.abs() < 1e-14 {
                return Ok(c);
            }
        }
        Err(Error::NonConvergence("eigenvalue crossing did not converge".into()))
    }
}

fn check_parity(det: f64, count: usize, lambda: f64) -> Result<()> {
    let want = if count % 2 == 0 { 1.0 } else { -1.0 };
    if det.signum() != want {
        return Err(Error::NonConvergence(format!(
            "determinant sign {det:e} disagrees with {count} eigenvalues below {lambda}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub channel: i64,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tangency {
    pub channel: i64,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpReport {
    pub krein: Vec<Jump>,
    pub birman_schwinger: Vec<Jump>,
    pub max_delta: f64,
    pub matched: bool,
    pub tangencies: Vec<Tangency>,
}

/// Resonance energies w = k^2 that the boundary value from the upper lip sees on the given
/// side: Re k >= 0, i.e. continuation of lambda + i0.
pub fn visible_energies(resonances: &[Resonance], side: Side) -> Vec<(Complex64, u32)> {
    resonances
        .iter()
        .filter(|r| match side {
            Side::Plus => r.k.re >= 0.0 && r.z.re > 0.0,
            Side::Minus => r.k.re >= 0.0 && r.z.re < 0.0,
        })
        .map(|r| (r.z, r.multiplicity))
        .collect()
}

/// sum Im w / (pi |mu - w|^2).
pub fn lorentzian_sum(ws: &[(Complex64, u32)], mu: f64) -> f64 {
    ws.iter().map(|(w, m)| *m as f64 * w.im / (PI * (mu - w).norm_sqr())).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreitWignerDecomposition {
    pub interval: (f64, f64),
    pub lambdas: Vec<f64>,
    pub complex_resonances: Vec<Complex64>,
    pub lorentzian_sum: Vec<f64>,
    pub delta_locations: Vec<f64>,
    pub residual: Vec<f64>,
    pub residual_sup: f64,
    /// max |second difference of the residual| over its median.
    pub smoothness_ratio: f64,
    pub region: RegionSpec,
}

/// Split xi' on r I into the Lorentzians of the resonances in r Omega and a residual.
/// `xi_prime[i]` is xi' at `lambdas[i]`; samples outside r I are ignored.
pub fn breit_wigner_decompose(
    region: &RegionSpec,
    report: &ScanReport,
    lambdas: &[f64],
    xi_prime: &[f64],
    imag_tol: f64,
) -> Result<BreitWignerDecomposition> {
    if lambdas.len() != xi_prime.len() {
        return Err(Error::invalid("energies and xi' samples differ in length"));
    }
    let interval = region.interval().ok_or_else(|| Error::invalid("region does not meet the real axis"))?;
    let sel: Vec<usize> = (0..lambdas.len()).filter(|&i| lambdas[i] >= interval.0 && lambdas[i] <= interval.1).collect();
    if sel.is_empty() {
        return Err(Error::invalid("profile has no samples on the interval r I"));
    }
    let vis = visible_energies(&report.resonances, region.side);
    let complex: Vec<(Complex64, u32)> = vis.iter().copied().filter(|(w, _)| w.im.abs() > imag_tol && region.in_outer(*w)).collect();
    let deltas: Vec<f64> = vis
        .iter()
        .filter(|(w, _)| w.im.abs() <= imag_tol && w.re >= interval.0 && w.re <= interval.1)
        .map(|(w, _)| w.re)
        .collect();
    let kept: Vec<f64> = sel.iter().map(|&i| lambdas[i]).collect();
    let lor: Vec<f64> = kept.iter().map(|&m| lorentzian_sum(&complex, m)).collect();
    let residual: Vec<f64> = sel.iter().zip(&lor).map(|(&i, l)| xi_prime[i] - l).collect();
    let residual_sup = residual.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    Ok(BreitWignerDecomposition {
        interval,
        lambdas: kept,
        complex_resonances: complex.iter().map(|c| c.0).collect(),
        lorentzian_sum: lor,
        delta_locations: deltas,
        smoothness_ratio: smoothness_ratio(&residual),
        residual,
        residual_sup,
        region: *region,
    })
}

fn smoothness_ratio(v: &[f64]) -> f64 {
    if v.len() < 3 {
        return 0.0;
    }
    let mut d2: Vec<f64> = v.windows(3).map(|w| (w[0] - 2.0 * w[1] + w[2]).abs()).collect();
    let max = d2.iter().fold(0.0f64, |a, &b| a.max(b));
    d2.sort_by(f64::total_cmp);
    let med = d2[d2.len() / 2];
    if med == 0.0 {
        if max == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        max / med
    }
}

/// Lorentzian mass of one narrow resonance as seen in xi'.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassCheck {
    pub w: Complex64,
    pub width: f64,
    /// Integral of xi' minus the fitted smooth background over Re w +- 5 |Im w|, plus the
    /// analytic Lorentzian tail outside that window.
    pub mass: f64,
    pub window_mass: f64,
    pub tail: f64,
    pub samples: usize,
}

/// Fit a quadratic background to xi' - L_w on 5G < |mu - Re w| < 50G, integrate the excess
/// over the 10G window and add the Lorentzian tail outside it.
pub fn lorentzian_mass_check(engine: &SsfEngine<'_>, w: Complex64) -> Result<MassCheck> {
    let g = w.im.abs();
    if !(g > 0.0) {
        return Err(Error::invalid("mass check needs a resonance off the real axis"));
    }
    let c = w.re;
    let lw = |mu: f64| w.im / (PI * (mu - w).norm_sqr());
    // background samples
    let mut fit_x = Vec::new();
    for side in [-1.0, 1.0] {
        for i in 0..12 {
            fit_x.push(side * 5.0 * g * (10.0f64).powf(i as f64 / 11.0));
        }
    }
    // Gauss-Legendre panels over the window, clustered at the peak
    let rule = crate::quadrature::GaussRule::new(16);
    let edges = [-5.0, -2.0, -1.0, -0.4, 0.0, 0.4, 1.0, 2.0, 5.0];
    let mut win_x = Vec::new();
    let mut win_w = Vec::new();
    for e in edges.windows(2) {
        let (x, wts) = rule.mapped(e[0] * g, e[1] * g);
        win_x.extend(x);
        win_w.extend(wts);
    }
    let all: Vec<f64> = fit_x.iter().chain(&win_x).map(|x| c + x).collect();
    let vals = engine.xi_prime_samples(&all)?;
    let fit_y: Vec<f64> = fit_x.iter().zip(&vals).map(|(x, v)| v - lw(c + x)).collect();
    let coef = quadratic_fit(&fit_x, &fit_y)?;
    let bg = |x: f64| coef[0] + coef[1] * x + coef[2] * x * x;
    let window_mass: f64 = win_x.iter().zip(&win_w).zip(&vals[fit_x.len()..]).map(|((x, w), v)| w * (v - bg(*x))).sum();
    let samples = all.len();
    // Lorentzian mass outside +- 5G (negative for Im w < 0)
    let tail = w.im.signum() * (1.0 - 2.0 / PI * 5.0f64.atan());
    Ok(MassCheck { w, width: g, mass: window_mass + tail, window_mass, tail, samples })
}

fn quadratic_fit(x: &[f64], y: &[f64]) -> Result<[f64; 3]> {
    let n = x.len();
    let a = nalgebra::DMatrix::from_fn(n, 3, |i, j| x[i].powi(j as i32));
    let b = nalgebra::DVector::from_column_slice(y);
    let sol = a.svd(true, true).solve(&b, 1e-14).map_err(|e| Error::NonConvergence(e.to_string()))?;
    Ok([sol[0], sol[1], sol[2]])
}

/// N(r) = Tr 1_{(s1 sqrt r, inf)}(pWp) |ln r| + n1(s1 sqrt r / 2) + n2(s1 sqrt r / 2).
pub fn n_of_r(spec: &ToeplitzSpectrum, r: f64, s1: f64) -> f64 {
    let t = s1 * r.sqrt();
    counting_function(spec, t) as f64 * r.ln().abs() + n_tilde_p(spec, 0.5 * t, Schatten::P1) + n_tilde_p(spec, 0.5 * t, Schatten::P2)
}

/// Residual envelope across a sequence of scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualScaling {
    pub radii: Vec<f64>,
    /// r * sup |residual| on r I.
    pub scaled_sup: Vec<f64>,
    /// |ln r| r^{-1/m_perp}.
    pub envelope: Vec<f64>,
    pub fit: ConstantFit,
    pub n_of_r: Vec<f64>,
}

pub fn residual_scaling(radii: &[f64], sups: &[f64], m_perp: f64, n_r: Vec<f64>) -> Result<ResidualScaling> {
    let env: Vec<f64> = radii.iter().map(|&r| r.ln().abs() * r.powf(-1.0 / m_perp)).collect();
    let scaled: Vec<f64> = radii.iter().zip(sups).map(|(r, s)| r * s).collect();
    let fit = fit_single_constant(&scaled, &env)?;
    Ok(ResidualScaling { radii: radii.to_vec(), scaled_sup: scaled, envelope: env, fit, n_of_r: n_r })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularityReport {
    pub lambdas: Vec<f64>,
    pub xi: Vec<f64>,
    pub phi: Vec<f64>,
    /// pi xi / (J phi).
    pub ratios: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub sigma2_below_phi: bool,
    pub phi_diverges: bool,
    /// |ratio - 1| at the end of the sequence does not exceed its value one decade earlier.
    pub trend_toward_one: bool,
    /// |pi xi - J phi| against phi^{1/2} + ln^2 lambda.
    pub envelope_fit: ConstantFit,
    pub truncated_at: Option<f64>,
}

/// Compare pi xi(lambda) with J phi(lambda) along a decreasing sequence.
pub fn phi_singularity_check(engine: &SsfEngine<'_>, spectrum: &ToeplitzSpectrum, lambdas: &[f64]) -> Result<SingularityReport> {
    let j = engine.problem.j.ok_or_else(|| Error::Refused("the singularity law needs a potential of definite sign".into()))?;
    let mut seq: Vec<f64> = lambdas.to_vec();
    seq.sort_by(|a, b| b.total_cmp(a));
    if seq.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::invalid("the singularity sequence lives on lambda > 0"));
    }
    let mut truncated_at = None;
    let mut kept = Vec::new();
    for &l in &seq {
        let p = phi(spectrum, l)?;
        if p < 1e-8 {
            truncated_at = Some(l);
            break;
        }
        kept.push(l);
    }
    if kept.is_empty() {
        return Err(Error::invalid("phi is below its floor on the whole sequence"));
    }
    let prof = engine.xi_values(&kept)?;
    // profile is ascending; report in the caller's decreasing order
    let xi: Vec<f64> = kept.iter().map(|l| prof.xi[prof.lambdas.iter().position(|x| x == l).unwrap()]).collect();
    let phis: Result<Vec<f64>> = kept.iter().map(|&l| phi(spectrum, l)).collect();
    let phis = phis?;
    let ratios: Vec<f64> = xi.iter().zip(&phis).map(|(x, p)| PI * x / (j * p)).collect();
    let sigma2: Vec<f64> = kept.iter().map(|&l| sigma_p(spectrum, l.sqrt(), Schatten::P2)).collect();
    let sigma2_below_phi = sigma2.iter().zip(&phis).all(|(s, p)| *s <= *p * (1.0 + 1e-12));
    let mut phi_diverges = true;
    for &l in &kept {
        if phi(spectrum, l / 4.0)? <= phi(spectrum, l)? {
            phi_diverges = false;
        }
    }
    let last = *kept.last().unwrap();
    let decade = kept.iter().position(|&l| l <= 10.0 * last * (1.0 + 1e-9)).unwrap_or(0);
    let trend_toward_one = (ratios[ratios.len() - 1] - 1.0).abs() <= (ratios[decade] - 1.0).abs() + 1e-12;
    let dev: Vec<f64> = xi.iter().zip(&phis).map(|(x, p)| (PI * x - j * p).abs()).collect();
    let env: Vec<f64> = kept.iter().zip(&phis).map(|(l, p)| p.sqrt() + l.ln().powi(2)).collect();
    let envelope_fit = fit_single_constant(&dev, &env)?;
    Ok(SingularityReport { lambdas: kept, xi, phi: phis, ratios, sigma2, sigma2_below_phi, phi_diverges, trend_toward_one, envelope_fit, truncated_at })
}

/// Smooth cutoff: 1 on [a_in, b_in], 0 outside (a_out, b_out), glued from e^{-1/x}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub inner: (f64, f64),
    pub outer: (f64, f64),
}

impl Bump {
    pub fn new(inner: (f64, f64), outer: (f64, f64)) -> Result<Self> {
        if !(outer.0 < inner.0 && inner.0 < inner.1 && inner.1 < outer.1) {
            return Err(Error::invalid("bump needs outer.0 < inner.0 < inner.1 < outer.1"));
        }
        Ok(Bump { inner, outer })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let h = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
        let step = |t: f64| {
            let a = h(t);
            let b = h(1.0 - t);
            if a + b == 0.0 {
                0.0
            } else {
                a / (a + b)
            }
        };
        step((x - self.outer.0) / (self.inner.0 - self.outer.0)) * step((self.outer.1 - x) / (self.outer.1 - self.inner.1))
    }
}

/// Complex polynomial with coefficients lowest power first.
pub fn poly_eval(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceCheck {
    pub r: f64,
    pub lhs: Complex64,
    pub rhs: Complex64,
    pub error: f64,
    pub sup_f: f64,
    pub n_r: f64,
    /// error / (sup |f| N(r)).
    pub ratio: f64,
    pub resonances_in_w: usize,
}

/// Composite Gauss–Legendre layout for the trace-formula integral: each of the three pieces
/// of the cutoff (rise, plateau, fall) is split into `panels` panels of `order` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceQuadrature {
    pub panels: usize,
    pub order: usize,
}

impl Default for TraceQuadrature {
    fn default() -> Self {
        TraceQuadrature { panels: 3, order: 8 }
    }
}

/// sup |f| over the closure of a sector domain (maximum modulus: boundary samples suffice).
pub fn sup_on_sector(f: &[Complex64], d: &crate::model::SectorDomain, side: Side) -> f64 {
    let n = 128;
    let mut sup: f64 = 0.0;
    let mut probe = |z: Complex64| {
        let z = if side == Side::Minus { -z.conj() } else { z };
        sup = sup.max(poly_eval(f, z).norm());
    };
    for i in 0..=n {
        let t = i as f64 / n as f64;
        let th = d.arg.0 + (d.arg.1 - d.arg.0) * t;
        let rho = d.rho.0 + (d.rho.1 - d.rho.0) * t;
        probe(Complex64::from_polar(d.rho.0, th));
        probe(Complex64::from_polar(d.rho.1, th));
        probe(Complex64::from_polar(rho, d.arg.0));
        probe(Complex64::from_polar(rho, d.arg.1));
    }
    sup
}

/// Local trace formula at one scale, for several test polynomials at once:
/// LHS = -int xi'(lambda) (psi f)(lambda / r) dlambda plus the eigenvalue terms, RHS = sum of
/// f(w / r) over resonances in r W. xi' is sampled once and shared by all polynomials.
#[allow(clippy::too_many_arguments)]
pub fn trace_formula_check(
    engine: &SsfEngine<'_>,
    region: &RegionSpec,
    fs: &[Vec<Complex64>],
    psi: &Bump,
    report: &ScanReport,
    spectrum: &ToeplitzSpectrum,
    s1: f64,
    quad: &TraceQuadrature,
) -> Result<Vec<TraceCheck>> {
    if quad.panels == 0 || quad.order == 0 {
        return Err(Error::invalid("trace quadrature needs at least one panel and node"));
    }
    if let Some(j) = engine.problem.j {
        if !crate::model::region_admissible(region, j) {
            return Err(Error::Refused("this side is excluded for the potential's sign".into()));
        }
    }
    let r = region.r;
    let side = region.side.sign();
    let vis = visible_energies(&report.resonances, region.side);
    // nodes in u = side * lambda / r
    let rule = crate::quadrature::GaussRule::new(quad.order);
    let breaks = [psi.outer.0, psi.inner.0, psi.inner.1, psi.outer.1];
    let mut us = Vec::new();
    let mut ws = Vec::new();
    for piece in breaks.windows(2) {
        let h = (piece[1] - piece[0]) / quad.panels as f64;
        for p in 0..quad.panels {
            let (x, w) = rule.mapped(piece[0] + p as f64 * h, piece[0] + (p + 1) as f64 * h);
            us.extend(x);
            ws.extend(w);
        }
    }
    let lambdas: Vec<f64> = us.iter().map(|u| side * r * u).collect();
    let xp = engine.xi_prime_samples(&lambdas)?;
    if xp.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonConvergence("xi' could not be evaluated on the cutoff support".into()));
    }
    let n_r = n_of_r(spectrum, r, s1);
    let mut out = Vec::with_capacity(fs.len());
    for f in fs {
        let g = |lambda: f64| poly_eval(f, Complex64::new(lambda / r, 0.0)) * psi.eval(side * lambda / r);
        let mut integral = Complex64::new(0.0, 0.0);
        for i in 0..us.len() {
            integral += g(lambdas[i]) * (xp[i] * ws[i] * r);
        }
        let mut lhs = -integral;
        // eigenvalues and embedded zeros contribute their delta terms
        for (w, m) in vis.iter().filter(|(w, _)| w.im == 0.0 || w.im.abs() < 1e-12 * w.norm()) {
            lhs += g(w.re) * (*m as f64);
        }
        let mut rhs = Complex64::new(0.0, 0.0);
        let mut count = 0;
        for (w, m) in &vis {
            if region.in_inner(*w) {
                rhs += poly_eval(f, w / r) * (*m as f64);
                count += *m as usize;
            }
        }
        let sup_f = sup_on_sector(f, &region.outer, region.side);
        let error = (lhs - rhs).norm();
        let denom = sup_f * n_r;
        let ratio = if denom > 0.0 {
            error / denom
        } else if error == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        out.push(TraceCheck { r, lhs, rhs, error, sup_f, n_r, ratio, resonances_in_w: count });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::birman_schwinger::{Discretization, Margins};
    use crate::longitudinal::AxisGridConfig;
    use crate::model::{bracket, Mat2, MagneticModel, PotentialSpec, ProfileClass, Sign};
    use std::sync::Arc;

    fn gaussian(g: f64) -> PotentialSpec {
        PotentialSpec {
            name: "g".into(),
            entries: Arc::new(move |x: [f64; 2], t: f64| {
                let w = g * (-(x[0] * x[0] + x[1] * x[1])).exp() * (-2.0 * bracket(t)).exp();
                Mat2::new(Complex64::new(w, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(w, 0.0))
            }),
            m_perp: 3.0,
            gamma: 2.0,
            envelope_const: g.abs(),
            sign: Sign::from_j(g.signum()),
            profile_class: ProfileClass::A2 { beta: 1.0, mu: 1.0 },
            scalar_mode: false,
            radial: true,
        }
    }

    fn problem(spec: &PotentialSpec) -> BsProblem {
        let d = Discretization {
            axis: AxisGridConfig { panels_per_side: 3, order: 8, grading: 1.5 },
            q_max: 3,
            channels: vec![0, 1],
            radial_refine: 1,
            margins: Margins::default(),
        };
        BsProblem::new(spec, &MagneticModel::new(1.0, 2.0).unwrap(), &d).unwrap()
    }

    #[test]
    fn zero_potential_profile_vanishes() {
        let p = problem(&PotentialSpec::zero(2.0));
        let e = SsfEngine::new(&p, SsfConfig::default());
        let prof = e.profile(&[-0.3, -0.01, 0.01, 0.2]).unwrap();
        assert!(prof.xi.iter().chain(&prof.xi2).chain(&prof.xi_prime).all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn repulsive_potential_has_no_negative_jumps() {
        let p = problem(&gaussian(0.8));
        let e = SsfEngine::new(&p, SsfConfig::default());
        let prof = e.profile(&[-0.5, -0.1, -0.01, 0.01, 0.1]).unwrap();
        for i in 0..3 {
            assert_eq!(prof.xi[i], 0.0);
        }
        // positive side: xi follows J phi / pi roughly, so it is positive
        assert!(prof.xi[3] > 0.0 && prof.xi[4] > 0.0);
        let rep = e.negative_axis_jumps((-0.5, -0.01), 6).unwrap();
        assert!(rep.krein.is_empty() && rep.birman_schwinger.is_empty());
    }

    #[test]
    fn xi_prime_routes_agree_and_integrate() {
        let p = problem(&gaussian(0.8));
        let e = SsfEngine::new(&p, SsfConfig::default());
        for l in [0.02, 0.3] {
            let a = e.xi_prime(l).unwrap();
            let b = e.xi_prime_analytic(l).unwrap();
            assert!((a - b).abs() < 1e-6 * b.abs().max(1e-3), "{a} vs {b}");
        }
        // fundamental theorem on [0.1, 0.2]
        let prof = e.profile(&[0.1, 0.2]).unwrap();
        let rule = crate::quadrature::GaussRule::new(12);
        let integral = rule.integrate(|l| e.xi_prime_analytic(l).unwrap(), 0.1, 0.2);
        assert!((integral - (prof.xi[1] - prof.xi[0])).abs() < 1e-6);
    }

    #[test]
    fn attractive_jumps_match_crossings() {
        let p = problem(&gaussian(-3.0));
        let e = SsfEngine::new(&p, SsfConfig::default());
        let rep = e.negative_axis_jumps((-0.9, -0.01), 8).unwrap();
        assert!(!rep.krein.is_empty());
        assert!(rep.matched, "{rep:?}");
        assert!(rep.max_delta < 1e-6);
        let prof = e.profile(&[-0.9, -0.5, -0.2, -0.05, -0.01]).unwrap();
        let total_jump = prof.xi[0] - prof.xi[4];
        assert_eq!(total_jump.round() as usize, rep.krein.len());
    }

    #[test]
    fn bump_and_polynomial() {
        let b = Bump::new((1.0, 2.0), (0.5, 2.5)).unwrap();
        assert_eq!(b.eval(1.5), 1.0);
        assert_eq!(b.eval(0.4), 0.0);
        assert!(b.eval(0.75) > 0.0 && b.eval(0.75) < 1.0);
        let c = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(2.0, 0.0)];
        assert_eq!(poly_eval(&c, Complex64::new(3.0, 0.0)), Complex64::new(19.0, 0.0));
    }

    #[test]
    fn lorentzian_integrates_to_minus_one() {
        let w = Complex64::new(0.5, -1e-3);
        let q = crate::quadrature::Adaptive::new(1e-12, 1e-12);
        let v = q.integrate(&|m: f64| lorentzian_sum(&[(w, 1)], m), 0.5 - 500.0 * 1e-3, 0.5 + 500.0 * 1e-3).unwrap();
        let tail = 1.0 - 2.0 / PI * 500.0f64.atan();
        assert!((v - tail + 1.0).abs() < 1e-9, "{v}");
    }
}

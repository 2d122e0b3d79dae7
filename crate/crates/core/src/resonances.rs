//! Zeros of D(k) = det(I + T(k)) in the pointed disk: winding numbers over rectangles, a
//! jittered quadtree, Newton refinement with winding-verified multiplicities, and the
//! counting audits.
//!
//! det(I + T) and det2(I + T) = det(I + T) e^{-tr T} have the same zeros and the same
//! windings on contours avoiding k = 0; the scan uses det(I + T), which stays bounded
//! near the origin, and reports |det2| as the residual.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::birman_schwinger::{assemble_synthetic, det2, synthetic_dk, BsProblem, SyntheticModel};
use crate::dense::LuIPlus;
use crate::error::{Error, Result};
use crate::model::sector_membership;

/// Axis-aligned rectangle in the k-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub re: (f64, f64),
    pub im: (f64, f64),
}

impl Rect {
    pub fn new(re: (f64, f64), im: (f64, f64)) -> Result<Self> {
        if !(re.0 < re.1 && im.0 < im.1) {
            return Err(Error::invalid("rectangle needs lo < hi on both axes"));
        }
        Ok(Rect { re, im })
    }

    pub fn centered(c: Complex64, half: f64) -> Self {
        Rect { re: (c.re - half, c.re + half), im: (c.im - half, c.im + half) }
    }

    pub fn center(&self) -> Complex64 {
        Complex64::new(0.5 * (self.re.0 + self.re.1), 0.5 * (self.im.0 + self.im.1))
    }

    pub fn diameter(&self) -> f64 {
        (self.re.1 - self.re.0).hypot(self.im.1 - self.im.0)
    }

    pub fn contains(&self, k: Complex64) -> bool {
        k.re >= self.re.0 && k.re <= self.re.1 && k.im >= self.im.0 && k.im <= self.im.1
    }

    /// Corners counterclockwise from the lower left.
    pub fn corners(&self) -> [Complex64; 4] {
        [
            Complex64::new(self.re.0, self.im.0),
            Complex64::new(self.re.1, self.im.0),
            Complex64::new(self.re.1, self.im.1),
            Complex64::new(self.re.0, self.im.1),
        ]
    }

    /// Four children split at (re_split, im_split), in lexicographic order.
    fn split(&self, at: Complex64) -> [Rect; 4] {
        [
            Rect { re: (self.re.0, at.re), im: (self.im.0, at.im) },
            Rect { re: (self.re.0, at.re), im: (at.im, self.im.1) },
            Rect { re: (at.re, self.re.1), im: (self.im.0, at.im) },
            Rect { re: (at.re, self.re.1), im: (at.im, self.im.1) },
        ]
    }

    fn lex_key(&self) -> (f64, f64) {
        (self.re.0, self.im.0)
    }
}

/// Something whose zeros are resonances.
pub trait Determinant: Sync {
    fn value(&self, k: Complex64) -> Result<Complex64>;
    /// d/dk log D.
    fn log_derivative(&self, k: Complex64) -> Result<Complex64>;
    /// |det2| at k (defaults to |D|).
    fn residual(&self, k: Complex64) -> Result<f64> {
        Ok(self.value(k)?.norm())
    }
}

/// A determinant given by closures (for tests and toy functions).
pub struct FnDeterminant<F, G> {
    pub f: F,
    pub log_df: G,
}

impl<F, G> Determinant for FnDeterminant<F, G>
where
    F: Fn(Complex64) -> Complex64 + Sync,
    G: Fn(Complex64) -> Complex64 + Sync,
{
    fn value(&self, k: Complex64) -> Result<Complex64> {
        Ok((self.f)(k))
    }
    fn log_derivative(&self, k: Complex64) -> Result<Complex64> {
        Ok((self.log_df)(k))
    }
}

/// det(I + T) of a synthetic model.
pub struct SyntheticDeterminant<'a> {
    pub model: &'a SyntheticModel,
}

impl Determinant for SyntheticDeterminant<'_> {
    fn value(&self, k: Complex64) -> Result<Complex64> {
        let t = assemble_synthetic(self.model, k)?;
        let n = t.matrix.nrows();
        Ok((DMatrix::identity(n, n) + t.matrix).determinant())
    }

    fn log_derivative(&self, k: Complex64) -> Result<Complex64> {
        let t = assemble_synthetic(self.model, k)?;
        let n = t.matrix.nrows();
        let a = DMatrix::identity(n, n) + t.matrix;
        let x = a.lu().solve(&synthetic_dk(self.model, k)).ok_or_else(|| Error::NonConvergence("I + T singular".into()))?;
        Ok(x.trace())
    }

    fn residual(&self, k: Complex64) -> Result<f64> {
        Ok(det2(&assemble_synthetic(self.model, k)?.matrix).norm())
    }
}

/// det(I + T) of one angular-momentum channel.
pub struct ChannelDeterminant<'a> {
    pub problem: &'a BsProblem,
    pub channel: usize,
}

impl Determinant for ChannelDeterminant<'_> {
    fn value(&self, k: Complex64) -> Result<Complex64> {
        let t = self.problem.channel_matrix(self.channel, k)?;
        Ok(LuIPlus::new(&t).det())
    }

    fn log_derivative(&self, k: Complex64) -> Result<Complex64> {
        Ok(self.problem.channel_det_and_log_derivative(self.channel, k)?.1)
    }

    fn residual(&self, k: Complex64) -> Result<f64> {
        Ok(det2(&self.problem.channel_matrix(self.channel, k)?).norm())
    }
}

/// Boundary sampling controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindingOptions {
    /// Segments whose argument increment reaches this are bisected.
    pub max_increment: f64,
    pub max_bisections: usize,
    /// |f| below this fraction of the largest sampled |f| counts as a boundary zero.
    pub zero_fraction: f64,
}

impl Default for WindingOptions {
    fn default() -> Self {
        WindingOptions { max_increment: 0.5 * PI, max_bisections: 24, zero_fraction: 1e-10 }
    }
}

/// (1/2 pi) times the accumulated argument of f around the rectangle, rounded.
pub fn winding_number<F>(f: &F, rect: &Rect, n_points: usize, opts: &WindingOptions) -> Result<i64>
where
    F: Fn(Complex64) -> Result<Complex64> + ?Sized,
{
    let (w, _) = winding_with_samples(f, rect, n_points, opts)?;
    Ok(w)
}

/// Winding and the boundary |f| values sampled on the way.
pub fn winding_with_samples<F>(f: &F, rect: &Rect, n_points: usize, opts: &WindingOptions) -> Result<(i64, Vec<f64>)>
where
    F: Fn(Complex64) -> Result<Complex64> + ?Sized,
{
    // coarser sampling can alias a full turn into a small increment
    let n = n_points.max(8);
    let corners = rect.corners();
    let mut pts = Vec::with_capacity(4 * n + 1);
    for e in 0..4 {
        let a = corners[e];
        let b = corners[(e + 1) % 4];
        for i in 0..n {
            pts.push(a + (b - a) * (i as f64 / n as f64));
        }
    }
    pts.push(corners[0]);
    let vals: Result<Vec<Complex64>> = pts.iter().map(|&k| f(k)).collect();
    let vals = vals?;
    let scale = vals.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let unresolved = |reason: String| Error::UnresolvedBox {
        re_lo: rect.re.0,
        re_hi: rect.re.1,
        im_lo: rect.im.0,
        im_hi: rect.im.1,
        reason,
    };
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(unresolved("function vanishes or is not finite on the boundary".into()));
    }
    let floor = opts.zero_fraction * scale;
    let mut mags: Vec<f64> = vals.iter().map(|v| v.norm()).collect();
    let mut total = 0.0;
    for i in 0..pts.len() - 1 {
        total += segment_argument(f, pts[i], pts[i + 1], vals[i], vals[i + 1], opts, floor, 0, &mut mags)
            .map_err(|e| match e {
                Error::UnresolvedBox { reason, .. } => unresolved(reason),
                other => other,
            })?;
    }
    let w = total / (2.0 * PI);
    let r = w.round();
    if (w - r).abs() > 0.1 {
        return Err(unresolved(format!("winding {w:.3} is not close to an integer")));
    }
    Ok((r as i64, mags))
}

#[allow(clippy::too_many_arguments)]
fn segment_argument<F>(
    f: &F,
    a: Complex64,
    b: Complex64,
    fa: Complex64,
    fb: Complex64,
    opts: &WindingOptions,
    floor: f64,
    depth: usize,
    mags: &mut Vec<f64>,
) -> Result<f64>
where
    F: Fn(Complex64) -> Result<Complex64> + ?Sized,
{
    if fa.norm() < floor || fb.norm() < floor {
        return Err(Error::UnresolvedBox { re_lo: 0.0, re_hi: 0.0, im_lo: 0.0, im_hi: 0.0, reason: format!("near-zero of f on the boundary at {a}") });
    }
    let ratio = fb / fa;
    let d = ratio.arg();
    // a large modulus change hints at a nearby zero even when the phase step looks small
    if d.abs() < opts.max_increment && ratio.norm().ln().abs() < 1.0 {
        return Ok(d);
    }
    if depth >= opts.max_bisections {
        return Err(Error::UnresolvedBox { re_lo: 0.0, re_hi: 0.0, im_lo: 0.0, im_hi: 0.0, reason: format!("argument not resolved near {a}") });
    }
    let m = 0.5 * (a + b);
    let fm = f(m)?;
    mags.push(fm.norm());
    Ok(segment_argument(f, a, m, fa, fm, opts, floor, depth + 1, mags)? + segment_argument(f, m, b, fm, fb, opts, floor, depth + 1, mags)?)
}

/// Scan region: an outer rectangle, optionally minus a centered square hole around k = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRegion {
    pub outer: Rect,
    /// Half-width of the excluded square |Re k|, |Im k| < hole.
    pub hole: Option<f64>,
}

impl ScanRegion {
    pub fn validate(&self) -> Result<()> {
        Rect::new(self.outer.re, self.outer.im)?;
        if let Some(h) = self.hole {
            if !(h > 0.0) {
                return Err(Error::invalid("hole half-width must be positive"));
            }
            let o = &self.outer;
            if !(o.re.0 < -h && o.re.1 > h && o.im.0 < -h && o.im.1 > h) {
                return Err(Error::invalid("the hole must lie strictly inside the outer rectangle"));
            }
        }
        Ok(())
    }

    /// Rectangles covering the region (four strips around the hole).
    pub fn pieces(&self) -> Vec<Rect> {
        let o = self.outer;
        match self.hole {
            None => vec![o],
            Some(h) => vec![
                Rect { re: o.re, im: (o.im.0, -h) },
                Rect { re: (o.re.0, -h), im: (-h, h) },
                Rect { re: (h, o.re.1), im: (-h, h) },
                Rect { re: o.re, im: (h, o.im.1) },
            ],
        }
    }

    pub fn contains(&self, k: Complex64) -> bool {
        self.outer.contains(k) && self.hole.is_none_or(|h| k.re.abs() >= h || k.im.abs() >= h)
    }

    /// True when the closed annulus r <= |k| <= 2r lies in the scanned set.
    pub fn covers_annulus(&self, r: f64) -> bool {
        let o = &self.outer;
        let outer_ok = o.re.0 <= -2.0 * r && o.re.1 >= 2.0 * r && o.im.0 <= -2.0 * r && o.im.1 >= 2.0 * r;
        let hole_ok = self.hole.is_none_or(|h| h * std::f64::consts::SQRT_2 <= r);
        outer_ok && hole_ok
    }

    /// Symmetric pointed-disk region: square of half-width `outer` minus a hole.
    pub fn pointed_square(outer: f64, hole: f64) -> Result<Self> {
        let r = ScanRegion { outer: Rect { re: (-outer, outer), im: (-outer, outer) }, hole: Some(hole) };
        r.validate()?;
        Ok(r)
    }

    /// Randomly nudge the boundaries (relative size `jitter`) keeping the reflection k -> -conj k.
    fn jittered(&self, rng: &mut ChaCha8Rng, jitter: f64) -> ScanRegion {
        let mut nudge = |x: f64| x * (1.0 + jitter * rng.gen_range(0.0..1.0));
        let half_re = nudge(0.5 * (self.outer.re.1 - self.outer.re.0));
        let mid_re = 0.5 * (self.outer.re.0 + self.outer.re.1);
        let im0 = self.outer.im.0 - jitter * rng.gen_range(0.0..1.0) * self.outer.im.0.abs().max(1e-3);
        let im1 = self.outer.im.1 + jitter * rng.gen_range(0.0..1.0) * self.outer.im.1.abs().max(1e-3);
        let hole = self.hole.map(|h| h * (1.0 - 0.5 * jitter * rng.gen_range(0.0..1.0)));
        ScanRegion { outer: Rect { re: (mid_re - half_re, mid_re + half_re), im: (im0, im1) }, hole }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    /// Boundary samples per side before adaptive refinement.
    pub n_points: usize,
    /// Boxes with positive winding are split until their diameter drops below this (relative
    /// to the region's diameter) unless Newton settles them earlier.
    pub min_box_rel: f64,
    /// Absolute floor for the fallback bisection.
    pub bisect_floor: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Relative split-point jitter.
    pub jitter: f64,
    pub seed: u64,
    pub winding: WindingOptions,
    pub max_retries: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            n_points: 16,
            min_box_rel: 1e-3,
            bisect_floor: 1e-10,
            newton_tol: 1e-13,
            max_newton: 60,
            jitter: 0.05,
            seed: 0x5eed,
            winding: WindingOptions::default(),
            max_retries: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub k: Complex64,
    pub z: Complex64,
    pub multiplicity: u32,
    /// |det2(I + T)| at k.
    pub residual: f64,
    /// |D(k)| relative to the median of |D| on the producing box's boundary.
    pub relative_residual: f64,
    #[serde(rename = "box")]
    pub bbox: Rect,
    /// Angular-momentum channel, when the scan ran per channel.
    pub channel: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRecord {
    #[serde(rename = "box")]
    pub bbox: Rect,
    pub winding: i64,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnresolvedRecord {
    #[serde(rename = "box")]
    pub bbox: Rect,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub region: ScanRegion,
    pub boxes: Vec<BoxRecord>,
    pub resonances: Vec<Resonance>,
    pub unresolved: Vec<UnresolvedRecord>,
}

impl ScanReport {
    pub fn empty(region: ScanRegion) -> Self {
        ScanReport { region, boxes: Vec::new(), resonances: Vec::new(), unresolved: Vec::new() }
    }

    pub fn total_multiplicity(&self) -> u32 {
        self.resonances.iter().map(|r| r.multiplicity).sum()
    }

    /// Merge another channel's report over the same region.
    pub fn merge(&mut self, other: ScanReport) {
        self.boxes.extend(other.boxes);
        self.resonances.extend(other.resonances);
        self.unresolved.extend(other.unresolved);
        self.sort();
    }

    fn sort(&mut self) {
        let key = |r: &Rect| r.lex_key();
        self.boxes.sort_by(|a, b| key(&a.bbox).partial_cmp(&key(&b.bbox)).unwrap_or(std::cmp::Ordering::Equal));
        self.resonances.sort_by(|a, b| {
            (a.k.re, a.k.im, a.channel).partial_cmp(&(b.k.re, b.k.im, b.channel)).unwrap_or(std::cmp::Ordering::Equal)
        });
        self.unresolved.sort_by(|a, b| key(&a.bbox).partial_cmp(&key(&b.bbox)).unwrap_or(std::cmp::Ordering::Equal));
    }
}

struct Scanner<'a, D: Determinant + ?Sized> {
    det: &'a D,
    cfg: ScanConfig,
    min_box: f64,
    channel: Option<i64>,
}

enum Outcome {
    Done { boxes: Vec<BoxRecord>, resonances: Vec<Resonance>, unresolved: Vec<UnresolvedRecord> },
}

impl<D: Determinant + ?Sized> Scanner<'_, D> {
    fn winding(&self, rect: &Rect) -> Result<(i64, f64)> {
        let f = |k: Complex64| self.det.value(k);
        // T carries a 1/k factor: refine the boundary sampling for boxes near k = 0
        let dx = (rect.re.0.max(0.0) - rect.re.1.min(0.0)).max(0.0);
        let dy = (rect.im.0.max(0.0) - rect.im.1.min(0.0)).max(0.0);
        let dist = dx.hypot(dy);
        let side = (rect.re.1 - rect.re.0).max(rect.im.1 - rect.im.0);
        let n = if dist > 0.0 { ((4.0 * side / dist).ceil() as usize).clamp(self.cfg.n_points, 4 * self.cfg.n_points) } else { self.cfg.n_points };
        let (w, mut mags) = winding_with_samples(&f, rect, n, &self.cfg.winding)?;
        mags.sort_by(f64::total_cmp);
        Ok((w, mags[mags.len() / 2]))
    }

    fn newton(&self, start: Complex64, mult: i64, bound: &Rect) -> Option<Complex64> {
        let mut k = start;
        let grow = 0.25 * bound.diameter();
        let lim = Rect { re: (bound.re.0 - grow, bound.re.1 + grow), im: (bound.im.0 - grow, bound.im.1 + grow) };
        for _ in 0..self.cfg.max_newton {
            let ld = self.det.log_derivative(k).ok()?;
            if !ld.is_finite() || ld.norm() == 0.0 {
                return None;
            }
            let step = Complex64::new(mult as f64, 0.0) / ld;
            k -= step;
            if !lim.contains(k) {
                return None;
            }
            if step.norm() <= self.cfg.newton_tol * k.norm().max(1e-3) {
                return Some(k);
            }
        }
        None
    }

    /// Winding of a micro-contour around k, jittering its size on boundary trouble.
    fn micro_winding(&self, k: Complex64, rho: f64) -> Result<i64> {
        let mut last = None;
        for s in [1.0, 1.37, 0.71, 2.03] {
            match self.winding(&Rect::centered(k, rho * s)) {
                Ok((w, _)) => return Ok(w),
                Err(e) => last = Some(e),
            }
        }
        Err(last.unwrap())
    }

    fn accept(&self, k: Complex64, mult: i64, bbox: Rect, boundary_median: f64) -> Result<Resonance> {
        let d = self.det.value(k)?.norm();
        Ok(Resonance {
            k,
            z: k * k,
            multiplicity: mult as u32,
            residual: self.det.residual(k)?,
            relative_residual: d / boundary_median.max(f64::MIN_POSITIVE),
            bbox,
            channel: self.channel,
        })
    }

    fn process(&self, rect: Rect, winding: i64, median: f64, depth: usize, rng_seed: u64) -> Outcome {
        let mut boxes = vec![BoxRecord { bbox: rect, winding, depth }];
        let mut resonances = Vec::new();
        let mut unresolved = Vec::new();
        if winding == 0 {
            return Outcome::Done { boxes, resonances, unresolved };
        }
        if winding < 0 {
            unresolved.push(UnresolvedRecord { bbox: rect, reason: format!("negative winding {winding}: pole inside the box") });
            return Outcome::Done { boxes, resonances, unresolved };
        }
        let diam = rect.diameter();
        // Newton when a single zero is enclosed, or when the box is small enough that the
        // zeros are presumed to coincide
        if winding == 1 || diam < self.min_box {
            if let Some(k) = self.newton(rect.center(), winding, &rect) {
                if rect.contains(k) {
                    let rho = (1e-3 * diam).max(1e-9 * k.norm().max(1.0)).min(0.25 * diam);
                    if let Ok(m) = self.micro_winding(k, rho) {
                        if m == winding {
                            match self.accept(k, m, rect, median) {
                                Ok(r) => resonances.push(r),
                                Err(e) => unresolved.push(UnresolvedRecord { bbox: rect, reason: e.to_string() }),
                            }
                            return Outcome::Done { boxes, resonances, unresolved };
                        }
                    }
                }
            }
        }
        if diam < self.cfg.bisect_floor {
            // bisection exhausted: report the center with the box winding as multiplicity
            match self.accept(rect.center(), winding, rect, median) {
                Ok(r) => resonances.push(r),
                Err(e) => unresolved.push(UnresolvedRecord { bbox: rect, reason: e.to_string() }),
            }
            return Outcome::Done { boxes, resonances, unresolved };
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut children = None;
        let mut last_reason = String::new();
        for _ in 0..=self.cfg.max_retries {
            let c = rect.center();
            let wx = (rect.re.1 - rect.re.0) * self.cfg.jitter * rng.gen_range(-1.0..1.0);
            let wy = (rect.im.1 - rect.im.0) * self.cfg.jitter * rng.gen_range(-1.0..1.0);
            let kids = rect.split(c + Complex64::new(wx, wy));
            let res: Vec<Result<(i64, f64)>> = kids.par_iter().map(|r| self.winding(r)).collect();
            if let Some(Err(e)) = res.iter().find(|r| r.is_err()) {
                last_reason = e.to_string();
                continue;
            }
            let ws: Vec<(i64, f64)> = res.into_iter().map(|r| r.unwrap()).collect();
            let sum: i64 = ws.iter().map(|w| w.0).sum();
            if sum != winding {
                last_reason = format!("children windings sum to {sum}, parent has {winding}");
                continue;
            }
            children = Some((kids, ws));
            break;
        }
        let Some((kids, ws)) = children else {
            unresolved.push(UnresolvedRecord { bbox: rect, reason: last_reason });
            return Outcome::Done { boxes, resonances, unresolved };
        };
        let seeds: Vec<u64> = (0..4).map(|_| rng.gen()).collect();
        let outs: Vec<Outcome> = (0..4).into_par_iter().map(|i| self.process(kids[i], ws[i].0, ws[i].1, depth + 1, seeds[i])).collect();
        for o in outs {
            let Outcome::Done { boxes: b, resonances: r, unresolved: u } = o;
            boxes.extend(b);
            resonances.extend(r);
            unresolved.extend(u);
        }
        Outcome::Done { boxes, resonances, unresolved }
    }
}

/// Scan a region for zeros of `det`.
pub fn scan_determinant<D: Determinant + ?Sized>(det: &D, region: &ScanRegion, cfg: &ScanConfig, channel: Option<i64>) -> Result<ScanReport> {
    region.validate()?;
    if !(cfg.min_box_rel > 0.0 && cfg.newton_tol > 0.0 && cfg.jitter >= 0.0 && cfg.n_points >= 2) {
        return Err(Error::invalid("scan tolerances must be positive"));
    }
    let scanner = Scanner { det, cfg: *cfg, min_box: cfg.min_box_rel * region.outer.diameter(), channel };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = ScanReport::empty(*region);
    let mut attempt_region = *region;
    let mut roots = None;
    let mut last = String::new();
    for attempt in 0..=cfg.max_retries {
        if attempt > 0 {
            attempt_region = region.jittered(&mut rng, 1e-3 * attempt as f64);
        }
        let pieces = attempt_region.pieces();
        let ws: Vec<Result<(i64, f64)>> = pieces.par_iter().map(|r| scanner.winding(r)).collect();
        if let Some(Err(e)) = ws.iter().find(|w| w.is_err()) {
            last = e.to_string();
            continue;
        }
        roots = Some((pieces, ws.into_iter().map(|w| w.unwrap()).collect::<Vec<_>>()));
        break;
    }
    let Some((pieces, ws)) = roots else {
        report.unresolved.push(UnresolvedRecord { bbox: region.outer, reason: last });
        return Ok(report);
    };
    report.region = attempt_region;
    let seeds: Vec<u64> = (0..pieces.len()).map(|_| rng.gen()).collect();
    let outs: Vec<Outcome> = (0..pieces.len()).into_par_iter().map(|i| scanner.process(pieces[i], ws[i].0, ws[i].1, 0, seeds[i])).collect();
    for o in outs {
        let Outcome::Done { boxes, resonances, unresolved } = o;
        report.boxes.extend(boxes);
        report.resonances.extend(resonances);
        report.unresolved.extend(unresolved);
    }
    report.sort();
    Ok(report)
}

/// Scan every channel of a Birman–Schwinger problem and merge.
pub fn scan_resonances(problem: &BsProblem, region: &ScanRegion, cfg: &ScanConfig) -> Result<ScanReport> {
    region.validate()?;
    let n = problem.model.n_gamma_zeta();
    let o = &region.outer;
    let far = [o.re.0.abs(), o.re.1.abs()].iter().fold(0.0f64, |a, &b| a.max(b)).hypot(o.im.0.abs().max(o.im.1.abs()));
    if far >= (1.0 - problem.margins.edge) * n {
        return Err(Error::invalid(format!("scan region reaches |k| = {far:.4}, beyond the disk radius {n:.4} minus margin")));
    }
    let h = region.hole.unwrap_or(0.0);
    let near = o.re.0.max(0.0).max(-o.re.1).hypot(o.im.0.max(0.0).max(-o.im.1));
    if near < problem.margins.k_rel * n && h < problem.margins.k_rel * n {
        return Err(Error::invalid("scan region must exclude a hole around k = 0 at least as large as the margin"));
    }
    let mut report = ScanReport::empty(*region);
    let mut first = true;
    for (ci, ch) in problem.channels.iter().enumerate() {
        let det = ChannelDeterminant { problem, channel: ci };
        let r = scan_determinant(&det, region, cfg, Some(ch.ell))?;
        if first {
            report.region = r.region;
            first = false;
        }
        report.merge(r);
    }
    Ok(report)
}

/// Scan a synthetic model.
pub fn scan_synthetic(model: &SyntheticModel, region: &ScanRegion, cfg: &ScanConfig) -> Result<ScanReport> {
    model.validate()?;
    if let Some(h) = region.hole {
        if h <= 0.0 {
            return Err(Error::invalid("hole must be positive"));
        }
    } else if region.outer.contains(Complex64::new(0.0, 0.0)) {
        return Err(Error::invalid("the synthetic determinant has a pole at k = 0; exclude it"));
    }
    scan_determinant(&SyntheticDeterminant { model }, region, cfg, None)
}

/// Sum of multiplicities with r < |k| < 2r, optionally restricted to the sector of sign J.
pub fn count_in_annulus(report: &ScanReport, r: f64, j: f64, delta: f64, sector_only: bool) -> Result<u32> {
    if !(r > 0.0) {
        return Err(Error::invalid("annulus radius must be positive"));
    }
    if report.resonances.is_empty() && report.boxes.is_empty() {
        return Ok(0);
    }
    if !report.region.covers_annulus(r) {
        return Err(Error::invalid(format!("annulus {r} < |k| < {} is not fully scanned", 2.0 * r)));
    }
    Ok(report
        .resonances
        .iter()
        .filter(|res| {
            let m = res.k.norm();
            m > r && m < 2.0 * r && (!sector_only || sector_membership(res.k, j, delta))
        })
        .map(|res| res.multiplicity)
        .sum())
}

/// Outcome of pairing a resonance set with its reflection k -> -conj k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionCheck {
    pub paired: bool,
    pub max_mismatch: f64,
    pub unmatched: usize,
}

/// Greedy nearest-neighbour pairing under k -> -conj k with equal multiplicity and channel.
pub fn reflection_pairing(resonances: &[Resonance], tol: f64) -> ReflectionCheck {
    pairing(resonances, tol, |_| true)
}

/// As [`reflection_pairing`], but only resonances whose mirror image lies inside `region`
/// (at least `tol` from its boundary) need a partner.
pub fn reflection_pairing_within(resonances: &[Resonance], region: &ScanRegion, tol: f64) -> ReflectionCheck {
    let o = region.outer;
    let inner = Rect { re: (o.re.0 + tol, o.re.1 - tol), im: (o.im.0 + tol, o.im.1 - tol) };
    let hole = region.hole.map(|h| h + tol);
    pairing(resonances, tol, |k| {
        inner.contains(k) && hole.is_none_or(|h| k.re.abs() >= h || k.im.abs() >= h)
    })
}

fn pairing(resonances: &[Resonance], tol: f64, needs_partner: impl Fn(Complex64) -> bool) -> ReflectionCheck {
    let mut used = vec![false; resonances.len()];
    let mut max_mismatch: f64 = 0.0;
    let mut unmatched = 0;
    for (i, a) in resonances.iter().enumerate() {
        if used[i] {
            continue;
        }
        let target = -a.k.conj();
        if !needs_partner(target) {
            continue;
        }
        let best = resonances
            .iter()
            .enumerate()
            .filter(|(j, b)| !used[*j] && b.multiplicity == a.multiplicity && b.channel == a.channel)
            .map(|(j, b)| (j, (b.k - target).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1));
        match best {
            Some((j, d)) if d <= tol => {
                max_mismatch = max_mismatch.max(d);
                used[i] = true;
                used[j] = true;
            }
            Some((_, d)) => {
                max_mismatch = max_mismatch.max(d);
                unmatched += 1;
            }
            None => unmatched += 1,
        }
    }
    ReflectionCheck { paired: unmatched == 0, max_mismatch, unmatched }
}

/// Fit a single constant C with counts[i] <= C * bound[i]: C is taken from the larger-radius
/// half, and the fit passes when every ratio stays within twice that.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantFit {
    pub constant: f64,
    pub ratios: Vec<f64>,
    pub passed: bool,
}

pub fn fit_single_constant(values: &[f64], bounds: &[f64]) -> Result<ConstantFit> {
    if values.len() != bounds.len() || values.is_empty() {
        return Err(Error::invalid("values and bounds must be nonempty and of equal length"));
    }
    if bounds.iter().any(|&b| !(b > 0.0)) {
        return Err(Error::invalid("bounds must be positive"));
    }
    let ratios: Vec<f64> = values.iter().zip(bounds).map(|(v, b)| v.abs() / b).collect();
    let half = ratios.len().div_ceil(2);
    let constant = ratios[..half].iter().fold(0.0f64, |a, &b| a.max(b));
    let passed = if constant == 0.0 { ratios.iter().all(|&r| r == 0.0) } else { ratios.iter().all(|&r| r <= 2.0 * constant) };
    Ok(ConstantFit { constant, ratios, passed })
}

/// CSV rows: Re k, Im k, Re z, Im z, multiplicity, residual (plus channel when present).
pub fn resonances_csv(report: &ScanReport) -> String {
    let mut s = String::from("re_k,im_k,re_z,im_z,multiplicity,residual,channel\n");
    for r in &report.resonances {
        let ch = r.channel.map(|c| c.to_string()).unwrap_or_default();
        s.push_str(&format!("{:.17e},{:.17e},{:.17e},{:.17e},{},{:.6e},{}\n", r.k.re, r.k.im, r.z.re, r.z.im, r.multiplicity, r.residual, ch));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const O: Complex64 = Complex64 { re: 0.0, im: 0.0 };

    fn eval_fn(f: impl Fn(Complex64) -> Complex64) -> impl Fn(Complex64) -> Result<Complex64> {
        move |k| Ok(f(k))
    }

    #[test]
    fn winding_of_simple_and_double_zero() {
        let k0 = Complex64::new(0.1, -0.2);
        let rect = Rect::new((-0.5, 0.5), (-0.5, 0.5)).unwrap();
        let o = WindingOptions::default();
        assert_eq!(winding_number(&eval_fn(|k| k - k0), &rect, 8, &o).unwrap(), 1);
        assert_eq!(winding_number(&eval_fn(|k| (k - k0) * (k - k0)), &rect, 8, &o).unwrap(), 2);
        let away = Rect::new((0.2, 0.5), (0.0, 0.5)).unwrap();
        assert_eq!(winding_number(&eval_fn(|k| k - k0), &away, 8, &o).unwrap(), 0);
        assert_eq!(winding_number(&eval_fn(|k| 1.0 / (k - k0)), &rect, 8, &o).unwrap(), -1);
    }

    #[test]
    fn winding_flags_boundary_zero() {
        let rect = Rect::new((-0.5, 0.5), (-0.5, 0.5)).unwrap();
        let on = Complex64::new(0.5, 0.0);
        let r = winding_number(&eval_fn(|k| k - on), &rect, 8, &WindingOptions::default());
        assert!(matches!(r, Err(Error::UnresolvedBox { .. })));
    }

    #[test]
    fn many_zeros_need_adaptive_sampling() {
        // z^12 - 0.5^12 has twelve zeros on a circle
        let rect = Rect::new((-0.9, 0.9), (-0.9, 0.9)).unwrap();
        let w = winding_number(&eval_fn(|k| k.powi(12) - 0.5f64.powi(12)), &rect, 2, &WindingOptions::default()).unwrap();
        assert_eq!(w, 12);
    }

    #[test]
    fn scan_finds_polynomial_zeros_with_multiplicities() {
        let zs = [Complex64::new(0.3, 0.1), Complex64::new(-0.2, -0.25), Complex64::new(0.05, 0.4)];
        let z0 = zs;
        let det = FnDeterminant {
            f: move |k: Complex64| (k - z0[0]) * (k - z0[1]).powi(2) * (k - z0[2]),
            log_df: move |k: Complex64| 1.0 / (k - z0[0]) + 2.0 / (k - z0[1]) + 1.0 / (k - z0[2]),
        };
        let region = ScanRegion { outer: Rect::new((-0.6, 0.6), (-0.6, 0.6)).unwrap(), hole: None };
        let rep = scan_determinant(&det, &region, &ScanConfig::default(), None).unwrap();
        assert!(rep.unresolved.is_empty(), "{:?}", rep.unresolved);
        assert_eq!(rep.resonances.len(), 3);
        assert_eq!(rep.total_multiplicity(), 4);
        for z in zs {
            let r = rep.resonances.iter().find(|r| (r.k - z).norm() < 1e-9).expect("found");
            let want = if z == zs[1] { 2 } else { 1 };
            assert_eq!(r.multiplicity, want);
        }
    }

    #[test]
    fn synthetic_rank_one_zeros() {
        let m = SyntheticModel::new(vec![0.1, 0.2], 1.0).unwrap();
        let region = ScanRegion::pointed_square(0.5, 0.01).unwrap();
        let rep = scan_synthetic(&m, &region, &ScanConfig::default()).unwrap();
        assert!(rep.unresolved.is_empty());
        assert_eq!(rep.resonances.len(), 2);
        for b in [0.2, 0.1] {
            let r = rep.resonances.iter().find(|r| (r.k - Complex64::new(0.0, -b)).norm() < 1e-10).expect("zero found");
            assert_eq!(r.multiplicity, 1);
        }
        assert!(reflection_pairing(&rep.resonances, 1e-9).paired);
    }

    #[test]
    fn annulus_counting() {
        let m = SyntheticModel::new(vec![0.11, 0.13, 0.15], 1.0).unwrap();
        let region = ScanRegion::pointed_square(0.5, 0.02).unwrap();
        let rep = scan_synthetic(&m, &region, &ScanConfig::default()).unwrap();
        assert_eq!(count_in_annulus(&rep, 0.1, 1.0, 0.1, false).unwrap(), 3);
        assert_eq!(count_in_annulus(&rep, 0.1, 1.0, 0.1, true).unwrap(), 0);
        assert!(count_in_annulus(&rep, 0.3, 1.0, 0.1, false).is_err());
        assert_eq!(count_in_annulus(&ScanReport::empty(region), 0.1, 1.0, 0.1, false).unwrap(), 0);
    }

    #[test]
    fn reflection_pairing_detects_asymmetry() {
        let mk = |k: Complex64| Resonance { k, z: k * k, multiplicity: 1, residual: 0.0, relative_residual: 0.0, bbox: Rect::centered(k, 0.1), channel: None };
        let a = [mk(Complex64::new(0.2, -0.1)), mk(Complex64::new(-0.2, -0.1))];
        assert!(reflection_pairing(&a, 1e-9).paired);
        let b = [mk(Complex64::new(0.2, -0.1)), mk(Complex64::new(-0.21, -0.1))];
        assert!(!reflection_pairing(&b, 1e-9).paired);
        assert!(reflection_pairing(&[mk(Complex64::new(0.0, -0.3))], 1e-9).paired);
        // a half-plane box does not contain the mirror images
        let half = ScanRegion { outer: Rect::new((0.1, 1.0), (-0.5, 0.5)).unwrap(), hole: None };
        let lone = [mk(Complex64::new(0.2, -0.1))];
        assert!(!reflection_pairing(&lone, 1e-9).paired);
        assert!(reflection_pairing_within(&lone, &half, 1e-9).paired);
        let full = ScanRegion::pointed_square(1.0, 0.05).unwrap();
        assert!(!reflection_pairing_within(&lone, &full, 1e-9).paired);
        let _ = O;
    }

    #[test]
    fn constant_fit() {
        let f = fit_single_constant(&[1.0, 2.0, 2.5, 3.0], &[1.0, 1.5, 2.0, 2.5]).unwrap();
        assert!(f.passed);
        let g = fit_single_constant(&[1.0, 1.0, 1.0, 5.0], &[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(!g.passed);
        assert!(fit_single_constant(&[0.0, 0.0], &[1.0, 2.0]).unwrap().passed);
    }

    #[test]
    fn scan_region_geometry() {
        let r = ScanRegion::pointed_square(0.5, 0.05).unwrap();
        assert_eq!(r.pieces().len(), 4);
        assert!(r.covers_annulus(0.1));
        assert!(!r.covers_annulus(0.03));
        assert!(!r.contains(Complex64::new(0.01, 0.01)));
        assert!(ScanRegion::pointed_square(0.5, 0.6).is_err());
    }
}

//! Domain records: the constant magnetic field, the 2x2 potential, and the
//! complex regions where resonances are looked for.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::Arc;

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::adaptive_with_breaks;

pub type Mat2 = Matrix2<Complex64>;

/// Japanese bracket, sqrt(1 + x^2).
pub fn bracket(x: f64) -> f64 {
    (1.0 + x * x).sqrt()
}

/// Length of the line segment used for every axis integral.
pub fn axis_truncation(gamma: f64) -> f64 {
    (10.0 / gamma).max(20.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagneticModel {
    b0: f64,
    gamma: f64,
}

impl MagneticModel {
    pub fn new(b0: f64, gamma: f64) -> Result<Self> {
        if !(b0 > 0.0 && b0.is_finite()) {
            return Err(Error::invalid(format!("field strength must be positive, got {b0}")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::invalid(format!("decay rate must be positive, got {gamma}")));
        }
        Ok(MagneticModel { b0, gamma })
    }

    pub fn b0(&self) -> f64 {
        self.b0
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Gap above the lowest Landau level. Constant field, so no oscillation correction.
    pub fn zeta(&self) -> f64 {
        2.0 * self.b0
    }

    /// Radius of the disk in k where the continuation is controlled.
    pub fn n_gamma_zeta(&self) -> f64 {
        (0.5 * self.gamma).min(self.zeta().sqrt())
    }

    pub fn truncation(&self) -> f64 {
        axis_truncation(self.gamma)
    }
}

/// Sign of the perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
    Indefinite,
}

impl Sign {
    /// The scalar J for definite signs.
    pub fn j(self) -> Option<f64> {
        match self {
            Sign::Plus => Some(1.0),
            Sign::Minus => Some(-1.0),
            Sign::Indefinite => None,
        }
    }

    pub fn from_j(j: f64) -> Sign {
        if j > 0.0 {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Sign::Plus => "plus",
            Sign::Minus => "minus",
            Sign::Indefinite => "indefinite",
        };
        f.write_str(s)
    }
}

/// Transverse decay regime of W.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "lowercase")]
pub enum ProfileClass {
    /// Power law, W ~ u0(angle) |x|^-m. `u0` is sampled on a uniform angular grid.
    A1 { m: f64, u0: Vec<f64> },
    /// Gaussian-type decay, ln W ~ -mu |x|^(2 beta).
    A2 { beta: f64, mu: f64 },
    /// Compact support of the given radius.
    A3 { radius: f64 },
    Other,
}

pub type PotentialFn = Arc<dyn Fn([f64; 2], f64) -> Mat2 + Send + Sync>;

/// 2x2 hermitian potential V(x_perp, x3) with its declared envelope.
#[derive(Clone)]
pub struct PotentialSpec {
    pub name: String,
    pub entries: PotentialFn,
    pub m_perp: f64,
    pub gamma: f64,
    pub envelope_const: f64,
    pub sign: Sign,
    pub profile_class: ProfileClass,
    pub scalar_mode: bool,
    /// V depends on x_perp only through |x_perp|.
    pub radial: bool,
}

impl fmt::Debug for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PotentialSpec")
            .field("name", &self.name)
            .field("m_perp", &self.m_perp)
            .field("gamma", &self.gamma)
            .field("envelope_const", &self.envelope_const)
            .field("sign", &self.sign)
            .field("profile_class", &self.profile_class)
            .field("scalar_mode", &self.scalar_mode)
            .field("radial", &self.radial)
            .finish()
    }
}

impl PotentialSpec {
    pub fn eval(&self, x_perp: [f64; 2], x3: f64) -> Mat2 {
        let v = (self.entries)(x_perp, x3);
        if self.scalar_mode {
            Mat2::new(v[(0, 0)], Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0))
        } else {
            v
        }
    }

    /// The zero potential.
    pub fn zero(gamma: f64) -> Self {
        PotentialSpec {
            name: "zero".into(),
            entries: Arc::new(|_, _| Mat2::zeros()),
            m_perp: 3.0,
            gamma,
            envelope_const: 1.0,
            sign: Sign::Plus,
            profile_class: ProfileClass::Other,
            scalar_mode: false,
            radial: true,
        }
    }
}

/// Eigen-decomposition of a 2x2 hermitian matrix reduced to what matrix functions need.
#[derive(Debug, Clone, Copy)]
pub struct Herm2 {
    pub mean: f64,
    pub half_gap: f64,
}

impl Herm2 {
    pub fn of(v: &Mat2) -> Herm2 {
        let a = v[(0, 0)].re;
        let d = v[(1, 1)].re;
        let c = 0.5 * (v[(0, 1)] + v[(1, 0)].conj());
        let mean = 0.5 * (a + d);
        let half_gap = (0.25 * (a - d) * (a - d) + c.norm_sqr()).sqrt();
        Herm2 { mean, half_gap }
    }

    pub fn eigenvalues(&self) -> (f64, f64) {
        (self.mean - self.half_gap, self.mean + self.half_gap)
    }
}

/// f(V) for hermitian 2x2 V via the symmetric two-point formula; no branch choice needed.
pub fn herm2_function<F: Fn(f64) -> f64>(v: &Mat2, f: F) -> Mat2 {
    let h = Herm2::of(v);
    let (lo, hi) = h.eigenvalues();
    let (flo, fhi) = (f(lo), f(hi));
    let avg = 0.5 * (fhi + flo);
    let mut out = Mat2::identity() * Complex64::new(avg, 0.0);
    if h.half_gap > 0.0 {
        let slope = (fhi - flo) / (2.0 * h.half_gap);
        let mut shifted = hermitian_part(v);
        shifted[(0, 0)] -= h.mean;
        shifted[(1, 1)] -= h.mean;
        out += shifted * Complex64::new(slope, 0.0);
    }
    out
}

fn hermitian_part(v: &Mat2) -> Mat2 {
    (v + v.adjoint()) * Complex64::new(0.5, 0.0)
}

/// |V| = sqrt(V* V).
pub fn herm2_abs(v: &Mat2) -> Mat2 {
    herm2_function(v, f64::abs)
}

/// |V|^{1/2}.
pub fn herm2_abs_sqrt(v: &Mat2) -> Mat2 {
    herm2_function(v, |x| x.abs().sqrt())
}

/// Pointwise sign J with V = J|V| (sign(0) taken as 0).
pub fn herm2_sign(v: &Mat2) -> Mat2 {
    herm2_function(v, |x| {
        if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        }
    })
}

/// W(x_perp) = integral over the axis of |V|_{11}.
pub fn transverse_weight(spec: &PotentialSpec, x_perp: [f64; 2], tol: f64) -> Result<f64> {
    let t_max = axis_truncation(spec.gamma);
    let f = |t: f64| herm2_abs(&spec.eval(x_perp, t))[(0, 0)].re;
    let breaks = [-t_max, -1.0, 0.0, 1.0, t_max];
    adaptive_with_breaks(&f, &breaks, tol, tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Definiteness {
    PositiveSemidefinite,
    NegativeSemidefinite,
    Indefinite,
    /// Numerically zero on every sample: a degenerate case, reported as such.
    Zero,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ValidationTolerances {
    pub envelope: f64,
    pub hermiticity: f64,
    pub definiteness: f64,
}

impl Default for ValidationTolerances {
    fn default() -> Self {
        ValidationTolerances { envelope: 1e-9, hermiticity: 1e-12, definiteness: 1e-12 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub max_envelope_ratio: f64,
    pub max_hermiticity_defect: f64,
    pub definiteness: Definiteness,
    pub sign_consistent: bool,
    pub degenerate: bool,
    pub passed: bool,
    pub samples: usize,
}

/// A modest default sample grid for spot checks.
pub fn default_samples() -> Vec<([f64; 2], f64)> {
    let radii = [0.0, 0.3, 0.8, 1.5, 3.0, 6.0, 12.0];
    let angles = [0.0, 1.1, 2.3, 4.0];
    let axis = [-9.0, -2.5, -0.7, 0.0, 0.4, 1.3, 5.0];
    let mut out = Vec::new();
    for &r in &radii {
        for &a in &angles {
            for &t in &axis {
                out.push(([r * f64::cos(a), r * f64::sin(a)], t));
            }
        }
    }
    out
}

/// Spot-check envelope, hermiticity and declared sign on `samples`.
pub fn validate_potential(
    spec: &PotentialSpec,
    model: &MagneticModel,
    samples: &[([f64; 2], f64)],
    tol: &ValidationTolerances,
) -> Result<ValidationReport> {
    if samples.is_empty() {
        return Err(Error::invalid("sample grid is empty"));
    }
    if !(spec.m_perp > 2.0) {
        return Err(Error::Validation(format!(
            "transverse decay exponent must exceed 2, got {}",
            spec.m_perp
        )));
    }
    if (spec.gamma - model.gamma()).abs() > 1e-12 * model.gamma() {
        return Err(Error::Validation(format!(
            "potential decay rate {} does not match the model's {}",
            spec.gamma,
            model.gamma()
        )));
    }
    let mut max_ratio: f64 = 0.0;
    let mut max_herm: f64 = 0.0;
    let mut min_eig = f64::INFINITY;
    let mut max_eig = f64::NEG_INFINITY;
    let mut scale: f64 = 0.0;
    for &(x, t) in samples {
        let v = spec.eval(x, t);
        let envelope = spec.envelope_const
            * bracket((x[0] * x[0] + x[1] * x[1]).sqrt()).powf(-spec.m_perp)
            * (-spec.gamma * bracket(t)).exp();
        for e in v.iter() {
            let ratio = if envelope > 0.0 { e.norm() / envelope } else { f64::INFINITY };
            if e.norm() > 0.0 {
                max_ratio = max_ratio.max(ratio);
            }
        }
        let defect = (v[(0, 1)] - v[(1, 0)].conj())
            .norm()
            .max(v[(0, 0)].im.abs())
            .max(v[(1, 1)].im.abs());
        max_herm = max_herm.max(defect);
        let (lo, hi) = Herm2::of(&v).eigenvalues();
        min_eig = min_eig.min(lo);
        max_eig = max_eig.max(hi);
        scale = scale.max(lo.abs()).max(hi.abs());
    }
    let eps = tol.definiteness * scale.max(f64::MIN_POSITIVE);
    let definiteness = if scale == 0.0 {
        Definiteness::Zero
    } else if min_eig >= -eps {
        Definiteness::PositiveSemidefinite
    } else if max_eig <= eps {
        Definiteness::NegativeSemidefinite
    } else {
        Definiteness::Indefinite
    };
    let sign_consistent = match (spec.sign, definiteness) {
        (_, Definiteness::Zero) => true,
        (Sign::Plus, Definiteness::PositiveSemidefinite) => true,
        (Sign::Minus, Definiteness::NegativeSemidefinite) => true,
        (Sign::Indefinite, _) => true,
        _ => false,
    };
    let passed = max_ratio <= 1.0 + tol.envelope && max_herm <= tol.hermiticity && sign_consistent;
    Ok(ValidationReport {
        max_envelope_ratio: max_ratio,
        max_hermiticity_defect: max_herm,
        definiteness,
        sign_consistent,
        degenerate: definiteness == Definiteness::Zero,
        passed,
        samples: samples.len(),
    })
}

/// Cone C_delta(J) = { k : -delta J Im k <= |Re k| }.
pub fn sector_membership(k: Complex64, j: f64, delta: f64) -> bool {
    -delta * j * k.im <= k.re.abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }
}

/// Annular sector rho in (lo, hi), angle in (lo, hi), written in the frame of the
/// chosen side: on the minus side the point z corresponds to -conj(z) here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorDomain {
    pub rho: (f64, f64),
    pub arg: (f64, f64),
}

impl SectorDomain {
    fn contains_normalized(&self, w: Complex64) -> bool {
        let (rho, theta) = (w.norm(), w.arg());
        rho > self.rho.0 && rho < self.rho.1 && theta > self.arg.0 && theta < self.arg.1
    }

    fn strictly_inside(&self, other: &SectorDomain) -> bool {
        self.rho.0 > other.rho.0
            && self.rho.1 < other.rho.1
            && self.arg.0 > other.arg.0
            && self.arg.1 < other.arg.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub side: Side,
    pub theta0: f64,
    pub epsilon0: f64,
    pub inner: SectorDomain,
    pub outer: SectorDomain,
    pub r: f64,
    pub sector_delta: f64,
}

impl RegionSpec {
    fn normalize(&self, z: Complex64) -> Complex64 {
        match self.side {
            Side::Plus => z,
            Side::Minus => -z.conj(),
        }
    }

    /// Is z in r * inner?
    pub fn in_inner(&self, z: Complex64) -> bool {
        self.inner.contains_normalized(self.normalize(z / self.r))
    }

    /// Is z in r * outer?
    pub fn in_outer(&self, z: Complex64) -> bool {
        self.outer.contains_normalized(self.normalize(z / self.r))
    }

    /// Real interval (inner intersected with the axis), scaled by r.
    pub fn interval(&self) -> Option<(f64, f64)> {
        Self::axis_cut(&self.inner).map(|(a, b)| self.place(a, b))
    }

    /// Real interval of the outer domain, scaled by r.
    pub fn outer_interval(&self) -> Option<(f64, f64)> {
        Self::axis_cut(&self.outer).map(|(a, b)| self.place(a, b))
    }

    fn axis_cut(d: &SectorDomain) -> Option<(f64, f64)> {
        (d.arg.0 < 0.0 && d.arg.1 > 0.0).then_some(d.rho)
    }

    fn place(&self, a: f64, b: f64) -> (f64, f64) {
        match self.side {
            Side::Plus => (self.r * a, self.r * b),
            Side::Minus => (-self.r * b, -self.r * a),
        }
    }

    /// Same geometry at another scale.
    pub fn with_r(&self, r: f64) -> RegionSpec {
        RegionSpec { r, ..*self }
    }

    /// Well-formedness against the model's disk.
    pub fn validate(&self, model: &MagneticModel) -> Result<()> {
        let half = FRAC_PI_2;
        if !(self.theta0 > 0.0 && self.epsilon0 > 0.0 && self.theta0 < half && self.epsilon0 < half) {
            return Err(Error::invalid("sector half-angles must lie in (0, pi/2)"));
        }
        if !(self.r > 0.0 && self.sector_delta > 0.0) {
            return Err(Error::invalid("scale r and sector delta must be positive"));
        }
        if !self.inner.strictly_inside(&self.outer) {
            return Err(Error::invalid("inner domain must sit strictly inside the outer one"));
        }
        let n2 = model.n_gamma_zeta().powi(2);
        let o = &self.outer;
        if !(o.rho.0 > 0.0 && o.rho.1 <= n2 && o.arg.0 >= -2.0 * self.theta0 && o.arg.1 <= 2.0 * self.epsilon0) {
            return Err(Error::invalid(format!(
                "outer domain must lie in (0, {n2}) x angle (-2 theta0, 2 epsilon0)"
            )));
        }
        Ok(())
    }
}

/// The compatibility condition between J and the side: -J pi/2 must avoid the
/// closed arc (pi/2)_side +- [-theta0, epsilon0].
pub fn region_admissible(region: &RegionSpec, j: f64) -> bool {
    let target = -j.signum() * FRAC_PI_2;
    let (lo, hi) = match region.side {
        Side::Plus => (-region.theta0, region.epsilon0),
        Side::Minus => (FRAC_PI_2 - region.epsilon0, FRAC_PI_2 + region.theta0),
    };
    !(target >= lo && target <= hi)
}

//! Shipped test potentials. Each entry is built from a serializable recipe
//! V(x, t) = amplitude * w(|x|) * g(t) * M with g(t) = e^{-gamma <t>} / Z normalized to
//! unit mass, so the transverse weight of a definite entry is |amplitude| w.
//!
//! Reference values are produced by [`regenerate_references`] and stored in
//! `data/catalog.json`; they are never edited by hand.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landau::{fit_counting_asymptotics, radial_toeplitz_entry, CountingFit, ToeplitzSpectrum};
use crate::model::{axis_truncation, bracket, herm2_abs, Mat2, PotentialSpec, ProfileClass, Sign};
use crate::quadrature::adaptive_with_breaks;

/// Radial transverse profile w(|x|).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transverse {
    /// <x>^-m.
    PowerLaw { m: f64 },
    /// e^{-mu |x|^2}.
    Gaussian { mu: f64 },
    /// (1 - |x|^2 / R^2)^2 inside |x| < R.
    Bump { radius: f64 },
    Zero,
}

impl Transverse {
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            Transverse::PowerLaw { m } => bracket(r).powf(-m),
            Transverse::Gaussian { mu } => (-mu * r * r).exp(),
            Transverse::Bump { radius } => {
                let u = 1.0 - (r / radius).powi(2);
                if u > 0.0 {
                    u * u
                } else {
                    0.0
                }
            }
            Transverse::Zero => 0.0,
        }
    }

    /// Decay exponent declared for the envelope.
    pub fn m_perp(&self) -> f64 {
        match *self {
            Transverse::PowerLaw { m } => m,
            _ => 3.0,
        }
    }

    /// sup of w(r) <r>^m.
    pub fn envelope_factor(&self) -> f64 {
        let m = self.m_perp();
        match *self {
            Transverse::PowerLaw { .. } => 1.0,
            Transverse::Gaussian { mu } => {
                let s = (0.5 * m / mu - 1.0).max(0.0);
                (-mu * s + 0.5 * m * (1.0 + s).ln()).exp()
            }
            Transverse::Bump { radius } => bracket(radius).powf(m),
            Transverse::Zero => 1.0,
        }
    }

    pub fn profile_class(&self, amplitude: f64) -> ProfileClass {
        match *self {
            Transverse::PowerLaw { m } => ProfileClass::A1 { m, u0: vec![amplitude.abs()] },
            Transverse::Gaussian { mu } => ProfileClass::A2 { beta: 1.0, mu },
            Transverse::Bump { radius } => ProfileClass::A3 { radius },
            Transverse::Zero => ProfileClass::Other,
        }
    }
}

/// Serializable description of a radial potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialRecipe {
    pub name: String,
    pub transverse: Transverse,
    pub amplitude: f64,
    /// Real symmetric spin structure, row major [m11, m12, m22].
    pub spin_matrix: [f64; 3],
    pub gamma: f64,
    #[serde(default)]
    pub scalar_mode: bool,
}

/// Integral of e^{-gamma <t>} over the axis segment.
pub fn axis_normalization(gamma: f64) -> Result<f64> {
    let t = axis_truncation(gamma);
    let f = |x: f64| (-gamma * bracket(x)).exp();
    adaptive_with_breaks(&f, &[-t, -1.0, 0.0, 1.0, t], 1e-14, 1e-13)
}

impl PotentialRecipe {
    pub fn definite(name: &str, transverse: Transverse, amplitude: f64, gamma: f64) -> Self {
        PotentialRecipe { name: name.into(), transverse, amplitude, spin_matrix: [1.0, 0.0, 1.0], gamma, scalar_mode: false }
    }

    fn spin(&self) -> Mat2 {
        let [a, c, d] = self.spin_matrix;
        let r = |x: f64| Complex64::new(x, 0.0);
        Mat2::new(r(a), r(c), r(c), r(d))
    }

    pub fn sign(&self) -> Sign {
        let [a, c, d] = self.spin_matrix;
        let (a, d) = if self.scalar_mode { (a, 0.0) } else { (a, d) };
        let c = if self.scalar_mode { 0.0 } else { c };
        let mean = 0.5 * (a + d);
        let half = (0.25 * (a - d) * (a - d) + c * c).sqrt();
        let (lo, hi) = (mean - half, mean + half);
        let s = self.amplitude.signum();
        if self.amplitude == 0.0 || matches!(self.transverse, Transverse::Zero) {
            Sign::Plus
        } else if lo >= 0.0 {
            Sign::from_j(s)
        } else if hi <= 0.0 {
            Sign::from_j(-s)
        } else {
            Sign::Indefinite
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.amplitude.is_finite() || self.spin_matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("recipe {} has invalid parameters", self.name)));
        }
        match self.transverse {
            Transverse::PowerLaw { m } if !(m > 2.0) => Err(Error::invalid("power-law exponent must exceed 2")),
            Transverse::Gaussian { mu } if !(mu > 0.0) => Err(Error::invalid("gaussian rate must be positive")),
            Transverse::Bump { radius } if !(radius > 0.0) => Err(Error::invalid("bump radius must be positive")),
            _ => Ok(()),
        }
    }

    pub fn build(&self) -> Result<PotentialSpec> {
        self.validate()?;
        if matches!(self.transverse, Transverse::Zero) || self.amplitude == 0.0 {
            let mut z = PotentialSpec::zero(self.gamma);
            z.name = self.name.clone();
            z.scalar_mode = self.scalar_mode;
            return Ok(z);
        }
        let z = axis_normalization(self.gamma)?;
        let tr = self.transverse;
        let amp = self.amplitude;
        let gamma = self.gamma;
        let m = self.spin();
        let scale = amp / z;
        let norm = self.spin_matrix.iter().fold(0.0f64, |s, x| s.max(x.abs()));
        Ok(PotentialSpec {
            name: self.name.clone(),
            entries: Arc::new(move |x: [f64; 2], t: f64| {
                let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                m * Complex64::new(scale * tr.eval(r) * (-gamma * bracket(t)).exp(), 0.0)
            }),
            m_perp: tr.m_perp(),
            gamma,
            // entries are bounded by |scale| norm w, and w <= factor <x>^-m
            envelope_const: amp.abs() / z * norm * tr.envelope_factor() * (1.0 + 1e-12),
            sign: self.sign(),
            profile_class: tr.profile_class(amp * self.weight_factor()),
            scalar_mode: self.scalar_mode,
            radial: true,
        })
    }

    /// |M|_{11}: W = |amplitude| |M|_{11} w.
    pub fn weight_factor(&self) -> f64 {
        let m = if self.scalar_mode {
            let mut s = self.spin();
            s[(0, 1)] = Complex64::new(0.0, 0.0);
            s[(1, 0)] = Complex64::new(0.0, 0.0);
            s[(1, 1)] = Complex64::new(0.0, 0.0);
            s
        } else {
            self.spin()
        };
        herm2_abs(&m)[(0, 0)].re
    }

    /// Transverse weight W(|x|).
    pub fn weight(&self, r: f64) -> f64 {
        self.amplitude.abs() * self.weight_factor() * self.transverse.eval(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    A1,
    A2,
    A3,
    None,
}

/// One stored reference number (or vector) with how it was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValue {
    pub values: Vec<f64>,
    pub tolerance: f64,
    pub oracle: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    pub recipe: PotentialRecipe,
    pub regime: Regime,
    pub note: String,
    #[serde(default)]
    pub reference_values: BTreeMap<String, ReferenceValue>,
}

impl CatalogEntry {
    pub fn spec(&self) -> Result<PotentialSpec> {
        self.recipe.build()
    }
}

/// Field strength at which references are tabulated.
pub fn reference_b0(regime: Regime) -> f64 {
    match regime {
        Regime::A2 => 2.0,
        _ => 1.0,
    }
}

fn entry(recipe: PotentialRecipe, regime: Regime, note: &str) -> CatalogEntry {
    CatalogEntry { name: recipe.name.clone(), recipe, regime, note: note.into(), reference_values: BTreeMap::new() }
}

/// The catalog without reference values.
pub fn catalog_recipes() -> Vec<CatalogEntry> {
    let g = 2.0;
    let pl3 = Transverse::PowerLaw { m: 3.0 };
    let pl4 = Transverse::PowerLaw { m: 4.0 };
    let gauss = Transverse::Gaussian { mu: 1.0 };
    vec![
        entry(PotentialRecipe::definite("a1_m3_plus", pl3, 1.0, g), Regime::A1, "power law m = 3, repulsive"),
        entry(PotentialRecipe::definite("a1_m3_minus", pl3, -1.0, g), Regime::A1, "power law m = 3, attractive"),
        entry(PotentialRecipe::definite("a1_m4_plus", pl4, 1.0, g), Regime::A1, "power law m = 4, repulsive; counting exponent -1/2"),
        entry(PotentialRecipe::definite("a1_m4_minus", pl4, -1.0, g), Regime::A1, "power law m = 4, attractive"),
        entry(PotentialRecipe::definite("a2_gauss", gauss, 1.0, g), Regime::A2, "gaussian, beta = 1, mu = 1, repulsive"),
        entry(PotentialRecipe::definite("a2_gauss_minus", gauss, -3.0, g), Regime::A2, "gaussian, attractive with bound states"),
        entry(PotentialRecipe::definite("a3_bump", Transverse::Bump { radius: 1.5 }, 1.0, g), Regime::A3, "compact bump of radius 1.5"),
        entry(
            PotentialRecipe {
                name: "indefinite_coupled".into(),
                transverse: gauss,
                amplitude: 1.0,
                spin_matrix: [0.0, 0.3, -12.0],
                gamma: g,
                scalar_mode: false,
            },
            Regime::A2,
            "spin-down well below the second threshold, weakly coupled to spin up: a narrow resonance",
        ),
        entry(
            PotentialRecipe { scalar_mode: true, ..PotentialRecipe::definite("scalar_a2", gauss, 1.0, g) },
            Regime::A2,
            "scalar mode: only the spin-up component acts",
        ),
        entry(PotentialRecipe::definite("zero", Transverse::Zero, 0.0, g), Regime::None, "V = 0"),
    ]
}

const SHIPPED: &str = include_str!("../data/catalog.json");

/// The shipped catalog, with reference values.
pub fn catalog() -> Vec<CatalogEntry> {
    serde_json::from_str(SHIPPED).expect("shipped catalog parses")
}

pub fn lookup(name: &str) -> Result<CatalogEntry> {
    catalog().into_iter().find(|e| e.name == name).ok_or_else(|| Error::invalid(format!("unknown catalog entry '{name}'")))
}

/// Descending pWp eigenvalues of a radial recipe in the first m modes.
pub fn radial_spectrum(recipe: &PotentialRecipe, b0: f64, m: usize, tol: f64) -> Result<ToeplitzSpectrum> {
    use rayon::prelude::*;
    let w = |r: f64| recipe.weight(r);
    let vals: Result<Vec<f64>> = (0..m).into_par_iter().map(|i| radial_toeplitz_entry(&w, b0, i, tol)).collect();
    Ok(ToeplitzSpectrum::from_values(vals?, b0))
}

/// Recompute every reference value of an entry from its oracle.
pub fn regenerate_references(e: &CatalogEntry) -> Result<BTreeMap<String, ReferenceValue>> {
    let mut out = BTreeMap::new();
    if e.regime == Regime::None {
        out.insert(
            "toeplitz_top10".into(),
            ReferenceValue { values: vec![0.0; 10], tolerance: 0.0, oracle: "W = 0, so pWp = 0".into() },
        );
        return Ok(out);
    }
    let b0 = reference_b0(e.regime);
    let spec = radial_spectrum(&e.recipe, b0, 10, 1e-13)?;
    out.insert(
        "toeplitz_top10".into(),
        ReferenceValue {
            values: spec.eigenvalues.clone(),
            tolerance: 1e-10,
            oracle: format!("adaptive radial quadrature of W against the LLL mode densities, b0 = {b0}, first 10 modes"),
        },
    );
    if let Transverse::PowerLaw { m } = e.recipe.transverse {
        let big = radial_spectrum(&e.recipe, b0, 600, 1e-12)?;
        if let CountingFit::A1 { exponent, prefactor, expected_exponent, expected_prefactor, .. } =
            fit_counting_asymptotics(&big, &e.recipe.build()?.profile_class, (1e-4, 1e-2), 24)?
        {
            out.insert(
                "counting_exponent".into(),
                ReferenceValue {
                    values: vec![exponent, expected_exponent],
                    tolerance: 0.1 * (2.0 / m),
                    oracle: format!("log-log least squares of #{{s > r}} on r in [1e-4, 1e-2], 24 points, basis 600, b0 = {b0}; second value is -2/m"),
                },
            );
            out.insert(
                "counting_prefactor".into(),
                ReferenceValue {
                    values: vec![prefactor, expected_prefactor],
                    tolerance: 0.25 * expected_prefactor,
                    oracle: "same fit; second value is (b0/4pi) times the circle integral of u0^(2/m)".into(),
                },
            );
        }
    }
    if let Transverse::Gaussian { mu } = e.recipe.transverse {
        let a = e.recipe.amplitude.abs() * e.recipe.weight_factor();
        let q = 1.0 / (1.0 + 2.0 * mu / b0);
        out.insert(
            "toeplitz_closed_form".into(),
            ReferenceValue {
                values: (0..10).map(|n| a * q.powi(n + 1)).collect(),
                tolerance: 1e-10,
                oracle: format!("closed form W_max (1 + 2mu/b0)^-(n+1), b0 = {b0}"),
            },
        );
    }
    Ok(out)
}

/// Catalog with freshly computed references, as shipped JSON.
pub fn regenerate_catalog() -> Result<(Vec<CatalogEntry>, String)> {
    let mut entries = catalog_recipes();
    for e in &mut entries {
        e.reference_values = regenerate_references(e)?;
    }
    let json = serde_json::to_string_pretty(&entries).map_err(|e| Error::invalid(e.to_string()))?;
    Ok((entries, json + "\n"))
}

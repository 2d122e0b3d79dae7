//! Run configuration: one JSON document per run.

use std::path::{Path, PathBuf};

use pauli_lll::birman_schwinger::{Discretization, Margins, SyntheticModel};
use pauli_lll::longitudinal::AxisGridConfig;
use pauli_lll::model::{MagneticModel, PotentialSpec, RegionSpec};
use pauli_lll::potentials::{lookup, PotentialRecipe};
use pauli_lll::resonances::{Rect, ScanConfig, ScanRegion, WindingOptions};
use pauli_lll::ssf::SsfConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, HarnessResult};

/// Environment variable that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "PAULI_LLL_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Toeplitz,
    Scan,
    Ssf,
    BreitWigner,
    Singularity,
    TraceCheck,
    OracleRegen,
    Validate,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Toeplitz => "toeplitz",
            Pipeline::Scan => "scan",
            Pipeline::Ssf => "ssf",
            Pipeline::BreitWigner => "breit-wigner",
            Pipeline::Singularity => "singularity",
            Pipeline::TraceCheck => "trace-check",
            Pipeline::OracleRegen => "oracle-regen",
            Pipeline::Validate => "validate",
        }
    }
}

/// Which perturbation to run on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialRef {
    Catalog(String),
    Inline(PotentialRecipe),
    /// Synthetic Birman–Schwinger model (scan only).
    Synthetic(SyntheticModel),
    /// JSON file holding a synthetic model.
    SyntheticFile(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub b0: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    /// Transverse basis size M for Toeplitz spectra.
    pub basis: usize,
    pub axis: AxisGridConfig,
    pub q_max: usize,
    pub channels: Vec<i64>,
    #[serde(default = "one")]
    pub radial_refine: usize,
}

fn one() -> usize {
    1
}

/// Rectangle in the k-plane, optionally minus a square around 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanBox {
    pub re: (f64, f64),
    pub im: (f64, f64),
    #[serde(default)]
    pub hole: Option<f64>,
}

/// Energies, either listed or generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Energies {
    List(Vec<f64>),
    Linear { from: f64, to: f64, n: usize },
    Log { from: f64, to: f64, n: usize },
}

impl Energies {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Energies::List(v) => v.clone(),
            Energies::Linear { from, to, n } => {
                let n = (*n).max(2);
                (0..n).map(|i| from + (to - from) * i as f64 / (n - 1) as f64).collect()
            }
            Energies::Log { from, to, n } => {
                let n = (*n).max(2);
                let s = if *from < 0.0 { -1.0 } else { 1.0 };
                let (a, b) = (from.abs().ln(), to.abs().ln());
                (0..n).map(|i| s * (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Absolute tolerance of transverse quadratures.
    pub quadrature: f64,
    pub newton: f64,
    pub bisect_floor: f64,
    /// |Im w| below this counts as a real resonance.
    pub imag: f64,
    /// Krein vs Birman–Schwinger crossing agreement.
    pub crossing: f64,
    /// Pairing tolerance for k -> -conj k.
    pub reflection: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { quadrature: 1e-13, newton: 1e-13, bisect_floor: 1e-10, imag: 1e-12, crossing: 1e-6, reflection: 1e-9 }
    }
}

/// Settings that only some pipelines read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PipelineParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energies: Option<Energies>,
    /// Negative-axis window (a, b) and sample count for the Krein cross-check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative_axis: Option<(f64, f64, usize)>,
    /// Scales r for dyadic sequences.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub radii: Vec<f64>,
    /// Counting window for pWp.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counting_window: Option<(f64, f64)>,
    /// Samples per r I for xi' in the Breit–Wigner split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Test polynomials for the trace check, coefficients lowest power first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub test_functions: Vec<Vec<f64>>,
    /// Constant s1 in N(r).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s1: Option<f64>,
    /// Sector aperture for counting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sector_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub pipeline: Pipeline,
    pub potential: PotentialRef,
    pub model: ModelParams,
    pub grids: Grids,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<RegionSpec>,
    #[serde(default)]
    pub params: PipelineParams,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Worker count; None means one per logical core.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub tolerances: Tolerances,
}

impl RunConfig {
    pub fn from_json(s: &str) -> HarnessResult<Self> {
        let cfg: RunConfig = serde_json::from_str(s)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> HarnessResult<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// sha256 of the canonical (compact) serialization.
    pub fn hash(&self) -> String {
        let s = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(s.as_bytes()))
    }

    /// Structural checks that do not need any numerics.
    pub fn check(&self) -> HarnessResult<()> {
        let t = &self.tolerances;
        for (name, v) in [
            ("quadrature", t.quadrature),
            ("newton", t.newton),
            ("bisect_floor", t.bisect_floor),
            ("imag", t.imag),
            ("crossing", t.crossing),
            ("reflection", t.reflection),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(HarnessError::Config(format!("tolerance {name} must be positive, got {v}")));
            }
        }
        if self.grids.basis == 0 {
            return Err(HarnessError::Config("basis size must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(HarnessError::Config("thread count must be positive".into()));
        }
        MagneticModel::new(self.model.b0, self.model.gamma)?;
        if matches!(self.potential, PotentialRef::Synthetic(_) | PotentialRef::SyntheticFile(_)) && self.pipeline != Pipeline::Scan {
            return Err(HarnessError::Config("synthetic models are only accepted by the scan pipeline".into()));
        }
        Ok(())
    }

    pub fn magnetic_model(&self) -> HarnessResult<MagneticModel> {
        Ok(MagneticModel::new(self.model.b0, self.model.gamma)?)
    }

    pub fn recipe(&self) -> HarnessResult<PotentialRecipe> {
        match &self.potential {
            PotentialRef::Catalog(name) => Ok(lookup(name)?.recipe),
            PotentialRef::Inline(r) => Ok(r.clone()),
            _ => Err(HarnessError::Config("this pipeline needs a physical potential".into())),
        }
    }

    pub fn potential_spec(&self) -> HarnessResult<PotentialSpec> {
        Ok(self.recipe()?.build()?)
    }

    pub fn synthetic(&self) -> HarnessResult<Option<SyntheticModel>> {
        match &self.potential {
            PotentialRef::Synthetic(m) => Ok(Some(m.clone())),
            PotentialRef::SyntheticFile(p) => {
                let s = std::fs::read_to_string(p).map_err(|e| HarnessError::io(p, e))?;
                Ok(Some(serde_json::from_str(&s)?))
            }
            _ => Ok(None),
        }
    }

    pub fn discretization(&self) -> Discretization {
        Discretization {
            axis: self.grids.axis,
            q_max: self.grids.q_max,
            channels: self.grids.channels.clone(),
            radial_refine: self.grids.radial_refine,
            margins: Margins::default(),
        }
    }

    pub fn scan_config(&self) -> ScanConfig {
        ScanConfig {
            newton_tol: self.tolerances.newton,
            bisect_floor: self.tolerances.bisect_floor,
            seed: self.seed,
            winding: WindingOptions::default(),
            ..ScanConfig::default()
        }
    }

    pub fn ssf_config(&self) -> SsfConfig {
        SsfConfig { crossing_tol: self.tolerances.bisect_floor, ..SsfConfig::default() }
    }

    pub fn scan_region(&self) -> HarnessResult<ScanRegion> {
        let b = self.params.scan.ok_or_else(|| HarnessError::Config("params.scan is required".into()))?;
        let region = ScanRegion { outer: Rect::new(b.re, b.im)?, hole: b.hole };
        region.validate()?;
        Ok(region)
    }

    pub fn region(&self) -> HarnessResult<RegionSpec> {
        let r = self.region.ok_or_else(|| HarnessError::Config("region is required".into()))?;
        r.validate(&self.magnetic_model()?)?;
        Ok(r)
    }

    /// Output directory after the environment override.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUT_DIR_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.output_dir.clone(),
        }
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::preset_experiments;

    #[test]
    fn energies_generate_endpoints() {
        let e = Energies::Log { from: 1e-2, to: 1e-4, n: 3 };
        let v = e.values();
        assert!((v[0] - 1e-2).abs() < 1e-15 && (v[1] - 1e-3).abs() < 1e-15 && (v[2] - 1e-4).abs() < 1e-17);
        let n = Energies::Log { from: -0.5, to: -0.005, n: 3 }.values();
        assert!(n.iter().all(|&x| x < 0.0));
    }

    #[test]
    fn round_trip_is_bit_identical() {
        for (_, cfg) in preset_experiments() {
            let s = cfg.to_json();
            let back = RunConfig::from_json(&s).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.to_json(), s);
            assert_eq!(back.hash(), cfg.hash());
        }
    }

    #[test]
    fn rejects_nonpositive_tolerance_and_unknown_fields() {
        let (_, mut cfg) = preset_experiments().into_iter().next().unwrap();
        cfg.tolerances.newton = 0.0;
        assert!(matches!(cfg.check(), Err(HarnessError::Config(_))));
        let (_, cfg) = preset_experiments().into_iter().next().unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&cfg.to_json()).unwrap();
        v["bogus"] = serde_json::json!(1);
        assert!(RunConfig::from_json(&v.to_string()).is_err());
    }
}

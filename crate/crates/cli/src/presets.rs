//! Named configurations for the acceptance runs.

use std::path::PathBuf;

use pauli_lll::birman_schwinger::SyntheticModel;
use pauli_lll::longitudinal::AxisGridConfig;
use pauli_lll::model::{RegionSpec, SectorDomain, Side};

use crate::config::{Energies, Grids, ModelParams, Pipeline, PipelineParams, PotentialRef, RunConfig, ScanBox, Tolerances};

fn small_axis() -> AxisGridConfig {
    AxisGridConfig { panels_per_side: 3, order: 8, grading: 1.8 }
}

fn base(name: &str, pipeline: Pipeline, potential: &str, b0: f64) -> RunConfig {
    RunConfig {
        name: name.into(),
        pipeline,
        potential: PotentialRef::Catalog(potential.into()),
        model: ModelParams { b0, gamma: 2.0 },
        grids: Grids { basis: 200, axis: small_axis(), q_max: 3, channels: (0..6).collect(), radial_refine: 1 },
        region: None,
        params: PipelineParams::default(),
        output_dir: PathBuf::from("out").join(name),
        seed: 20240611,
        threads: None,
        tolerances: Tolerances::default(),
    }
}

/// Real-axis window around (0.3, 0.85) r inside the sector (0.2, 0.9) r.
pub fn standard_region(r: f64) -> RegionSpec {
    RegionSpec {
        side: Side::Plus,
        theta0: 0.3,
        epsilon0: 0.3,
        inner: SectorDomain { rho: (0.3, 0.85), arg: (-0.25, 0.25) },
        outer: SectorDomain { rho: (0.2, 0.9), arg: (-0.5, 0.5) },
        r,
        sector_delta: 0.5,
    }
}

/// Every preset, in a fixed order.
pub fn preset_experiments() -> Vec<(String, RunConfig)> {
    let mut out = Vec::new();

    let mut c = base("acc-counting-a1", Pipeline::Toeplitz, "a1_m4_plus", 1.0);
    c.grids.basis = 600;
    c.params.counting_window = Some((1e-4, 1e-2));
    out.push(c);

    let mut c = base("acc-counting-a2", Pipeline::Toeplitz, "a2_gauss", 2.0);
    c.grids.basis = 120;
    c.params.counting_window = Some((1e-12, 1e-3));
    out.push(c);

    for (name, j) in [("acc-rank-one-plus", 1.0), ("acc-rank-one-minus", -1.0)] {
        let mut c = base(name, Pipeline::Scan, "zero", 1.0);
        c.potential = PotentialRef::Synthetic(SyntheticModel::new(vec![0.1, 0.2, 0.3, 0.4, 0.5], j).expect("valid synthetic model"));
        c.params.scan = Some(ScanBox { re: (-0.6, 0.6), im: (-0.6, 0.6), hole: Some(0.05) });
        out.push(c);
    }

    let mut c = base("acc-krein-attractive", Pipeline::Ssf, "a2_gauss_minus", 0.8);
    c.grids.channels = (0..4).collect();
    c.params.negative_axis = Some((-0.7999, -1e-4, 120));
    c.params.energies = Some(Energies::Linear { from: -0.7999, to: -1e-4, n: 40 });
    out.push(c);

    let mut c = base("acc-krein-repulsive", Pipeline::Ssf, "a2_gauss", 0.8);
    c.grids.channels = (0..4).collect();
    c.params.negative_axis = Some((-0.7999, -1e-4, 40));
    c.params.energies = Some(Energies::Linear { from: -0.7999, to: -1e-4, n: 40 });
    out.push(c);

    let mut c = base("acc-bw-lorentzian", Pipeline::BreitWigner, "indefinite_coupled", 1.0);
    c.grids.channels = (0..5).collect();
    c.region = Some(standard_region(1.0));
    c.params.scan = Some(ScanBox { re: (0.1, 0.95), im: (-0.24, 0.24), hole: None });
    c.params.radii = vec![0.5, 0.25, 0.125, 0.0625];
    c.params.samples = Some(61);
    out.push(c);

    let mut c = base("acc-singularity", Pipeline::Singularity, "a2_gauss", 2.0);
    c.grids.q_max = 4;
    c.grids.channels = (0..18).collect();
    c.params.energies = Some(Energies::Log { from: 1e-2, to: 5.62341325190349e-6, n: 14 });
    out.push(c);

    // sqrt of r Omega for r in [1/16, 1/2] lies in this box
    let mut c = base("acc-trace", Pipeline::TraceCheck, "a2_gauss", 2.0);
    c.grids.channels = (0..8).collect();
    c.region = Some(standard_region(0.5));
    c.params.scan = Some(ScanBox { re: (0.1, 0.7), im: (-0.2, 0.2), hole: None });
    c.params.radii = vec![0.5, 0.25, 0.125, 0.0625];
    c.params.test_functions = vec![vec![0.0, 1.0], vec![0.0, 0.0, 1.0]];
    c.params.s1 = Some(1.0);
    out.push(c);

    // channel l has its anti-bound zero near |k| = 2^-(l+2); l <= 5 fills every annulus below
    let mut c = base("acc-counting-bounds", Pipeline::Scan, "a2_gauss", 2.0);
    c.grids.channels = (0..6).collect();
    c.params.scan = Some(ScanBox { re: (-0.6, 0.6), im: (-0.6, 0.6), hole: Some(1.0 / 256.0) });
    c.params.radii = (2..=7).map(|n| 0.5f64.powi(n)).collect();
    c.params.sector_delta = Some(0.5);
    out.push(c);

    let mut c = base("validate-catalog", Pipeline::Validate, "all", 1.0);
    c.grids.basis = 50;
    out.push(c);

    let c = base("oracle-regen", Pipeline::OracleRegen, "zero", 1.0);
    out.push(c);

    out.into_iter().map(|c| (c.name.clone(), c)).collect()
}

/// Configuration used by a subcommand when neither --config nor --preset is given.
pub fn default_config(pipeline: Pipeline) -> RunConfig {
    let from = |name: &str| {
        let mut c = preset(name).expect("bundled preset");
        c.name = pipeline.name().into();
        c.output_dir = PathBuf::from("out").join(pipeline.name());
        c
    };
    match pipeline {
        Pipeline::Toeplitz => base("toeplitz", pipeline, "a1_m4_plus", 1.0),
        Pipeline::Scan => {
            let mut c = base("scan", pipeline, "zero", 1.0);
            c.params.scan = Some(ScanBox { re: (-0.6, 0.6), im: (-0.6, 0.6), hole: Some(0.05) });
            c
        }
        Pipeline::Ssf => {
            let mut c = base("ssf", pipeline, "a2_gauss", 1.0);
            c.params.energies = Some(Energies::Linear { from: 0.05, to: 0.8, n: 16 });
            c
        }
        Pipeline::BreitWigner => from("acc-bw-lorentzian"),
        Pipeline::Singularity => from("acc-singularity"),
        Pipeline::TraceCheck => from("acc-trace"),
        Pipeline::OracleRegen => from("oracle-regen"),
        Pipeline::Validate => from("validate-catalog"),
    }
}

pub fn preset(name: &str) -> Option<RunConfig> {
    preset_experiments().into_iter().find(|(n, _)| n == name).map(|(_, c)| c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn required_presets_exist() {
        let c = preset("acc-counting-a1").unwrap();
        assert_eq!(c.potential, PotentialRef::Catalog("a1_m4_plus".into()));
        assert!(preset("acc-bw-lorentzian").is_some());
    }

    #[test]
    fn defaults_match_their_pipeline() {
        for p in [Pipeline::Toeplitz, Pipeline::Scan, Pipeline::Ssf, Pipeline::BreitWigner, Pipeline::Singularity, Pipeline::TraceCheck, Pipeline::OracleRegen, Pipeline::Validate] {
            let c = default_config(p);
            assert_eq!(c.pipeline, p);
            c.check().unwrap();
        }
    }

    #[test]
    fn presets_validate_and_are_deterministic() {
        let a = preset_experiments();
        let b = preset_experiments();
        assert_eq!(a, b);
        for (name, c) in &a {
            c.check().unwrap_or_else(|e| panic!("{name}: {e}"));
            if let Some(r) = c.region {
                r.validate(&c.magnetic_model().unwrap()).unwrap();
            }
        }
        let mut names: Vec<&String> = a.iter().map(|p| &p.0).collect();
        names.dedup();
        assert_eq!(names.len(), a.len());
    }
}

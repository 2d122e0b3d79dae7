use num_complex::Complex64;
use pauli_lll::birman_schwinger::{det2_eigen, det2_lu, BsProblem, Discretization, SyntheticModel};
use pauli_lll::landau::counting_function;
use pauli_lll::longitudinal::AxisGridConfig;
use pauli_lll::model::{MagneticModel, RegionSpec, SectorDomain, Side};
use pauli_lll::potentials::{lookup, radial_spectrum};
use pauli_lll::resonances::{reflection_pairing, scan_resonances, scan_synthetic, ScanConfig, ScanRegion};
use pauli_lll::ssf::{trace_formula_check, Bump, SsfConfig, SsfEngine, TraceQuadrature};
use pauli_lll::Error;
use proptest::prelude::*;

fn small_disc(channels: Vec<i64>) -> Discretization {
    Discretization { q_max: 2, channels, axis: AxisGridConfig { panels_per_side: 2, order: 6, grading: 1.8 }, ..Default::default() }
}

#[test]
fn zero_potential_has_no_resonances_and_no_shift() {
    let model = MagneticModel::new(1.0, 2.0).unwrap();
    let spec = lookup("zero").unwrap().spec().unwrap();
    let p = BsProblem::new(&spec, &model, &small_disc(vec![0, 1])).unwrap();
    let rep = scan_resonances(&p, &ScanRegion::pointed_square(0.5, 0.05).unwrap(), &ScanConfig::default()).unwrap();
    assert!(rep.resonances.is_empty());
    let eng = SsfEngine::new(&p, SsfConfig::default());
    let xi = eng.xi_values(&[-0.3, 0.2, 0.5]).unwrap();
    assert!(xi.xi.iter().all(|&x| x == 0.0), "{:?}", xi.xi);
}

#[test]
fn rank_one_zeros_sit_at_minus_i_j_beta() {
    for j in [1.0, -1.0] {
        let m = SyntheticModel::new(vec![0.15, 0.35], j).unwrap();
        let rep = scan_synthetic(&m, &ScanRegion::pointed_square(0.6, 0.05).unwrap(), &ScanConfig::default()).unwrap();
        assert_eq!(rep.resonances.len(), 2);
        // zeros of 1 + i J b / k
        for b in [0.15, 0.35] {
            let want = Complex64::new(0.0, -j * b);
            assert!(rep.resonances.iter().any(|x| (x.k - want).norm() < 1e-10 && x.multiplicity == 1));
        }
        assert!(reflection_pairing(&rep.resonances, 1e-9).paired);
    }
}

#[test]
fn gaussian_toeplitz_matches_closed_form() {
    // e^{-mu r^2} against |psi_n|^2: (b0/2)^{n+1} / (mu + b0/2)^{n+1}
    let e = lookup("a2_gauss").unwrap();
    for b0 in [1.0, 2.0, 3.5] {
        let spec = radial_spectrum(&e.recipe, b0, 30, 1e-13).unwrap();
        let q = 0.5 * b0 / (1.0 + 0.5 * b0);
        for (n, s) in spec.eigenvalues.iter().enumerate() {
            let want = q.powi(n as i32 + 1);
            assert!((s - want).abs() <= 1e-9 * want.max(1e-12), "b0 {b0} n {n}: {s} vs {want}");
        }
        // #{q^{n+1} > r} = ceil(ln r / ln q) - 1 for r not on the grid
        let r = 1e-5;
        let expect = ((r as f64).ln() / q.ln()).ceil() as usize - 1;
        assert_eq!(counting_function(&spec, r), expect.min(30));
    }
}

#[test]
fn minus_side_is_refused_for_negative_sign() {
    let model = MagneticModel::new(2.0, 2.0).unwrap();
    let spec = lookup("a2_gauss_minus").unwrap().spec().unwrap();
    let p = BsProblem::new(&spec, &model, &small_disc(vec![0])).unwrap();
    let eng = SsfEngine::new(&p, SsfConfig::default());
    let region = RegionSpec {
        side: Side::Minus,
        theta0: 0.3,
        epsilon0: 0.3,
        inner: SectorDomain { rho: (0.3, 0.85), arg: (-0.25, 0.25) },
        outer: SectorDomain { rho: (0.2, 0.9), arg: (-0.5, 0.5) },
        r: 0.5,
        sector_delta: 0.5,
    };
    let tsp = radial_spectrum(&lookup("a2_gauss_minus").unwrap().recipe, 2.0, 20, 1e-12).unwrap();
    let rep = pauli_lll::resonances::ScanReport::empty(ScanRegion::pointed_square(0.6, 0.01).unwrap());
    let f = vec![vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]];
    let err = trace_formula_check(&eng, &region, &f, &Bump::new((0.3, 0.85), (0.2, 0.9)).unwrap(), &rep, &tsp, 1.0, &TraceQuadrature::default());
    assert!(matches!(err, Err(Error::Refused(_))), "{err:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn det2_routes_agree(n in 2usize..12, seed in 0u64..1000) {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || { s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); ((s >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 0.8 / (n as f64).sqrt() };
        let m = nalgebra::DMatrix::from_fn(n, n, |_, _| Complex64::new(next(), next()));
        let a = det2_lu(&m);
        let b = det2_eigen(&m);
        prop_assert!((a - b).norm() <= 1e-11 * a.norm().max(1e-300));
    }
}

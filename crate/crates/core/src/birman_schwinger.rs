//! Discretized Birman–Schwinger operator T(k) = J|V|^{1/2}(H0 - k^2)^{-1}|V|^{1/2},
//! its split (iJ/k)B + A(k), regularized determinants and dT/dz.
//!
//! Radial potentials only: the operator then decouples over angular momentum ℓ and each
//! channel is a finite block (Landau levels q x axis nodes x active spins). Per axis node
//! the transverse overlap of |V| is factored as R_j^2 and the sign as R_j S_j R_j = V_j,
//! so T = (S R) N (R) with N the block-diagonal 1D resolvent; its nonzero spectrum is the
//! one of the continuum operator restricted to the retained levels.

use std::io::{Read, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::LuIPlus;
use crate::error::{Error, Result};
use crate::landau::{orthonormal_laguerre, GammaRule};
use crate::longitudinal::{
    decaying_kernel, decaying_kernel_dsigma, s_kernel_d, AxisGrid, AxisGridConfig,
};
use crate::model::{herm2_abs, Herm2, MagneticModel, Mat2, PotentialSpec};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Distance from the disk edge and from k = 0 that every evaluation keeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    /// |k| >= k_rel * N.
    pub k_rel: f64,
    /// |k| <= (1 - edge) * N.
    pub edge: f64,
}

impl Default for Margins {
    fn default() -> Self {
        Margins { k_rel: 1e-3, edge: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub axis: AxisGridConfig,
    pub q_max: usize,
    /// Angular momenta kept. Channels with ℓ < 0 have no lowest-level state.
    pub channels: Vec<i64>,
    /// Radial panel refinement factor (1 = default).
    pub radial_refine: usize,
    pub margins: Margins,
}

impl Default for Discretization {
    fn default() -> Self {
        Discretization {
            axis: AxisGridConfig::default(),
            q_max: 32,
            channels: (0..8).collect(),
            radial_refine: 1,
            margins: Margins::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Spin {
    Up,
    Down,
}

/// A transverse state of one channel: Landau level q with a spin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct State {
    pub q: usize,
    pub spin: Spin,
}

impl State {
    /// Threshold of this state's continuum: 2 b0 q (up) or 2 b0 (q + 1) (down).
    pub fn energy(&self, b0: f64) -> f64 {
        2.0 * b0 * self.level() as f64
    }

    /// Energy in units of 2 b0.
    pub fn level(&self) -> usize {
        match self.spin {
            Spin::Up => self.q,
            Spin::Down => self.q + 1,
        }
    }

    pub fn is_p_state(&self) -> bool {
        self.q == 0 && self.spin == Spin::Up
    }
}

/// Per-channel transverse data on the axis grid.
#[derive(Debug, Clone)]
pub struct Channel {
    pub ell: i64,
    pub q_levels: Vec<usize>,
    pub spins: Vec<Spin>,
    pub states: Vec<State>,
    /// Index of the lowest-level spin-up state, when the channel has one.
    pub p_state: Option<usize>,
    /// S_j R_j per node.
    left: Vec<DMatrix<Complex64>>,
    /// R_j per node (hermitian, R_j^2 = transverse overlap of |V|).
    right: Vec<DMatrix<Complex64>>,
    /// S_j per node.
    sign: Vec<DMatrix<Complex64>>,
}

impl Channel {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    fn n_spins(&self) -> usize {
        self.spins.len()
    }
}

/// Dense T(k) with its split.
#[derive(Debug, Clone)]
pub struct BSMatrix {
    pub k: Complex64,
    pub matrix: DMatrix<Complex64>,
    pub singular_part: DMatrix<Complex64>,
    pub regular_part: DMatrix<Complex64>,
    pub landau_cutoff: usize,
    pub hs_norm: f64,
}

impl BSMatrix {
    fn new(k: Complex64, singular: DMatrix<Complex64>, regular: DMatrix<Complex64>, matrix: DMatrix<Complex64>, q_max: usize) -> Self {
        let hs_norm = matrix.norm();
        BSMatrix { k, matrix, singular_part: singular, regular_part: regular, landau_cutoff: q_max, hs_norm }
    }
}

/// Q-part block with its truncation bound.
#[derive(Debug, Clone)]
pub struct QBlock {
    pub matrix: DMatrix<Complex64>,
    /// Operator-norm bound on the levels beyond q_max.
    pub tail_bound: f64,
}

/// Everything needed to evaluate T(k) for one potential.
#[derive(Debug, Clone)]
pub struct BsProblem {
    pub model: MagneticModel,
    pub potential: PotentialSpec,
    pub grid: AxisGrid,
    pub q_max: usize,
    pub channels: Vec<Channel>,
    pub margins: Margins,
    /// max over samples of the largest |eigenvalue| of V.
    pub sup_v: f64,
    /// Global J when the declared sign is definite.
    pub j: Option<f64>,
}

impl BsProblem {
    pub fn new(potential: &PotentialSpec, model: &MagneticModel, disc: &Discretization) -> Result<Self> {
        if !potential.radial {
            return Err(Error::invalid(
                "the channel decomposition needs a potential depending on |x_perp| only",
            ));
        }
        if (potential.gamma - model.gamma()).abs() > 1e-12 * model.gamma() {
            return Err(Error::Validation("potential and model decay rates differ".into()));
        }
        if disc.channels.is_empty() {
            return Err(Error::invalid("at least one angular-momentum channel is required"));
        }
        let grid = AxisGrid::new(model.gamma(), &disc.axis)?;
        let j = potential.sign.j();
        let built: Result<Vec<(Channel, f64)>> = disc
            .channels
            .par_iter()
            .map(|&ell| build_channel(potential, model, &grid, disc, ell, j))
            .collect();
        let built = built?;
        let sup_v = built.iter().map(|c| c.1).fold(0.0, f64::max);
        Ok(BsProblem {
            model: *model,
            potential: potential.clone(),
            grid,
            q_max: disc.q_max,
            channels: built.into_iter().map(|c| c.0).collect(),
            margins: disc.margins,
            sup_v,
            j,
        })
    }

    pub fn channel_index(&self, ell: i64) -> Option<usize> {
        self.channels.iter().position(|c| c.ell == ell)
    }

    pub fn channel_dim(&self, ch: usize) -> usize {
        self.channels[ch].n_states() * self.grid.len()
    }

    pub fn total_dim(&self) -> usize {
        (0..self.channels.len()).map(|c| self.channel_dim(c)).sum()
    }

    /// Pointed disk check: margin from 0 and from the edge |k| = N.
    pub fn check_domain(&self, k: Complex64) -> Result<()> {
        let n = self.model.n_gamma_zeta();
        let r = k.norm();
        if r < self.margins.k_rel * n {
            return Err(Error::OutsideDomain { k, reason: format!("|k| below the margin {:e}", self.margins.k_rel * n) });
        }
        if r > (1.0 - self.margins.edge) * n {
            return Err(Error::OutsideDomain { k, reason: format!("|k| beyond the disk radius {n} minus margin") });
        }
        if k.im <= -0.5 * self.model.gamma() {
            return Err(Error::OutsideDomain { k, reason: "Im k below -gamma/2".into() });
        }
        Ok(())
    }

    fn index(&self, ch: &Channel, state: usize, node: usize) -> usize {
        let ns = ch.n_spins();
        let (qi, si) = (state / ns, state % ns);
        (qi * self.grid.len() + node) * ns + si
    }

    /// Sandwich sum_c L_j[a,c] A_c[j,j'] R_j'[c,b] for per-state axis matrices.
    fn sandwich(&self, ch: &Channel, axis: &[Option<&DMatrix<Complex64>>], left: &[DMatrix<Complex64>]) -> DMatrix<Complex64> {
        let nt = self.grid.len();
        let ns = ch.n_states();
        let dim = ns * nt;
        let mut out = DMatrix::<Complex64>::zeros(dim, dim);
        let mut lcol = vec![ZERO; ns];
        for (c, ax) in axis.iter().enumerate() {
            let Some(ax) = ax else { continue };
            for j in 0..nt {
                let lj = &left[j];
                for a in 0..ns {
                    lcol[a] = lj[(a, c)];
                }
                if lcol.iter().all(|z| *z == ZERO) {
                    continue;
                }
                for jp in 0..nt {
                    let coef = ax[(j, jp)];
                    if coef == ZERO {
                        continue;
                    }
                    let rj = &ch.right[jp];
                    for b in 0..ns {
                        let rb = rj[(c, b)] * coef;
                        if rb == ZERO {
                            continue;
                        }
                        let col = self.index(ch, b, jp);
                        for a in 0..ns {
                            out[(self.index(ch, a, j), col)] += lcol[a] * rb;
                        }
                    }
                }
            }
        }
        out
    }

    fn level_matrices(&self, ch: &Channel, kernel: impl Fn(&State) -> Option<Box<dyn Fn(f64) -> Complex64 + '_>>) -> Vec<Option<DMatrix<Complex64>>> {
        // states at the same threshold share one axis matrix, except the P-state
        let mut cache: Vec<(usize, bool, DMatrix<Complex64>)> = Vec::new();
        ch.states
            .iter()
            .map(|st| {
                let key = (st.level(), st.is_p_state());
                if let Some((_, _, m)) = cache.iter().find(|(l, p, _)| (*l, *p) == key) {
                    return Some(m.clone());
                }
                let f = kernel(st)?;
                let m = self.grid.axis_operator(&*f);
                cache.push((key.0, key.1, m.clone()));
                Some(m)
            })
            .collect()
    }

    fn sigma_q(&self, st: &State, z: Complex64) -> Complex64 {
        (Complex64::new(st.energy(self.model.b0()), 0.0) - z).sqrt()
    }

    /// T(k) for one channel without the split (the hot path for scans).
    pub fn channel_matrix(&self, ch: usize, k: Complex64) -> Result<DMatrix<Complex64>> {
        self.check_domain(k)?;
        Ok(self.channel_matrix_unchecked(ch, k))
    }

    fn channel_matrix_unchecked(&self, ch: usize, k: Complex64) -> DMatrix<Complex64> {
        let c = &self.channels[ch];
        let z = k * k;
        let mats = self.level_matrices(c, |st| {
            let sigma = if st.is_p_state() { -I * k } else { self.sigma_q(st, z) };
            Some(Box::new(move |d| decaying_kernel(sigma, d)))
        });
        let refs: Vec<Option<&DMatrix<Complex64>>> = mats.iter().map(|m| m.as_ref()).collect();
        self.sandwich(c, &refs, &c.left)
    }

    /// dT/dk for one channel.
    pub fn channel_dk_matrix(&self, ch: usize, k: Complex64) -> Result<DMatrix<Complex64>> {
        self.check_domain(k)?;
        let c = &self.channels[ch];
        let z = k * k;
        let mats = self.level_matrices(c, |st| {
            if st.is_p_state() {
                let sigma = -I * k;
                Some(Box::new(move |d| -I * decaying_kernel_dsigma(sigma, d)))
            } else {
                let sigma = self.sigma_q(st, z);
                let ds = -k / sigma;
                Some(Box::new(move |d| ds * decaying_kernel_dsigma(sigma, d)))
            }
        });
        let refs: Vec<Option<&DMatrix<Complex64>>> = mats.iter().map(|m| m.as_ref()).collect();
        Ok(self.sandwich(c, &refs, &c.left))
    }

    /// T(k) for one channel with its singular/regular split.
    pub fn assemble_channel(&self, ch: usize, k: Complex64) -> Result<BSMatrix> {
        self.check_domain(k)?;
        let matrix = self.channel_matrix_unchecked(ch, k);
        let c = &self.channels[ch];
        let z = k * k;
        let mats = self.level_matrices(c, |st| {
            if st.is_p_state() {
                Some(Box::new(move |d| s_kernel_d(k, d)))
            } else {
                let sigma = self.sigma_q(st, z);
                Some(Box::new(move |d| decaying_kernel(sigma, d)))
            }
        });
        let refs: Vec<Option<&DMatrix<Complex64>>> = mats.iter().map(|m| m.as_ref()).collect();
        let regular = self.sandwich(c, &refs, &c.left);
        let singular = self.signed_b_channel(ch) * (I / k);
        Ok(BSMatrix::new(k, singular, regular, matrix, self.q_max))
    }

    /// Block-diagonal T(k) over all channels.
    pub fn assemble_t(&self, k: Complex64) -> Result<BSMatrix> {
        self.check_domain(k)?;
        let parts: Result<Vec<BSMatrix>> = (0..self.channels.len()).into_par_iter().map(|c| self.assemble_channel(c, k)).collect();
        let parts = parts?;
        let dim = self.total_dim();
        let mut m = DMatrix::zeros(dim, dim);
        let mut s = DMatrix::zeros(dim, dim);
        let mut r = DMatrix::zeros(dim, dim);
        let mut off = 0;
        for p in &parts {
            let n = p.matrix.nrows();
            m.view_mut((off, off), (n, n)).copy_from(&p.matrix);
            s.view_mut((off, off), (n, n)).copy_from(&p.singular_part);
            r.view_mut((off, off), (n, n)).copy_from(&p.regular_part);
            off += n;
        }
        Ok(BSMatrix::new(k, s, r, m, self.q_max))
    }

    /// Physical-sheet T from the unsplit full Landau sum. Needs Im k^2 > 0 (and Im k > 0
    /// to be comparable with the split form, which is the continuation in k).
    pub fn assemble_direct_channel(&self, ch: usize, k: Complex64) -> Result<DMatrix<Complex64>> {
        self.check_domain(k)?;
        let z = k * k;
        if z.im <= 0.0 {
            return Err(Error::OutsideDomain { k, reason: "direct assembly needs Im k^2 > 0".into() });
        }
        let c = &self.channels[ch];
        let kappa0 = if k.im >= 0.0 { k } else { -k };
        let mut mats: Vec<Option<DMatrix<Complex64>>> = Vec::with_capacity(c.n_states());
        for st in &c.states {
            // every state, the lowest one included, from the same physical square root
            let sigma = if st.is_p_state() { -I * kappa0 } else { self.sigma_q(st, z) };
            mats.push(Some(self.grid.axis_operator(&|d| decaying_kernel(sigma, d))));
        }
        let refs: Vec<Option<&DMatrix<Complex64>>> = mats.iter().map(|m| m.as_ref()).collect();
        Ok(self.sandwich(c, &refs, &c.left))
    }

    /// B = K*K for one channel (zero for channels without a lowest-level state).
    pub fn build_b_channel(&self, ch: usize) -> DMatrix<Complex64> {
        let k = self.build_k_channel(ch);
        k.adjoint() * k
    }

    /// K as a 1 x dim row: (1/sqrt 2) sqrt(w_j) R_j[p, b].
    pub fn build_k_channel(&self, ch: usize) -> DMatrix<Complex64> {
        let c = &self.channels[ch];
        let dim = self.channel_dim(ch);
        let mut k = DMatrix::zeros(1, dim);
        if let Some(p) = c.p_state {
            for j in 0..self.grid.len() {
                let sw = (0.5 * self.grid.weights[j]).sqrt();
                for b in 0..c.n_states() {
                    k[(0, self.index(c, b, j))] = c.right[j][(p, b)] * sw;
                }
            }
        }
        k
    }

    /// S B: the matrix multiplying i/k in the split. Equals J B for definite signs.
    fn signed_b_channel(&self, ch: usize) -> DMatrix<Complex64> {
        let c = &self.channels[ch];
        let dim = self.channel_dim(ch);
        let mut out = DMatrix::zeros(dim, dim);
        let Some(p) = c.p_state else { return out };
        let nt = self.grid.len();
        let ns = c.n_states();
        for j in 0..nt {
            for jp in 0..nt {
                let w = 0.5 * (self.grid.weights[j] * self.grid.weights[jp]).sqrt();
                for a in 0..ns {
                    let la = c.left[j][(a, p)] * w;
                    for b in 0..ns {
                        out[(self.index(c, a, j), self.index(c, b, jp))] = la * c.right[jp][(p, b)];
                    }
                }
            }
        }
        out
    }

    /// Block-diagonal B over all channels.
    pub fn build_b(&self) -> DMatrix<Complex64> {
        let dim = self.total_dim();
        let mut out = DMatrix::zeros(dim, dim);
        let mut off = 0;
        for c in 0..self.channels.len() {
            let b = self.build_b_channel(c);
            let n = b.nrows();
            out.view_mut((off, off), (n, n)).copy_from(&b);
            off += n;
        }
        out
    }

    /// |V|^{1/2} (H0 - z)^{-1} Q |V|^{1/2} for one channel (no sign), with the tail bound.
    pub fn build_q_resolvent_block(&self, ch: usize, z: Complex64, cut_margin: f64) -> Result<QBlock> {
        let zeta = self.model.zeta();
        if z.re > zeta - cut_margin && z.im.abs() < cut_margin {
            return Err(Error::OutsideDomain {
                k: z.sqrt(),
                reason: format!("z = {z} is within {cut_margin:e} of the cut [{zeta}, inf)"),
            });
        }
        let c = &self.channels[ch];
        let mats = self.level_matrices(c, |st| {
            if st.is_p_state() {
                None
            } else {
                let sigma = self.sigma_q(st, z);
                Some(Box::new(move |d| decaying_kernel(sigma, d)))
            }
        });
        let refs: Vec<Option<&DMatrix<Complex64>>> = mats.iter().map(|m| m.as_ref()).collect();
        let matrix = self.sandwich(c, &refs, &c.right);
        Ok(QBlock { matrix, tail_bound: self.tail_bound(z) })
    }

    /// sup|V| / (2 b0 (q_max + 1) - |z|): norm bound for the dropped levels.
    pub fn tail_bound(&self, z: Complex64) -> f64 {
        let gap = 2.0 * self.model.b0() * (self.q_max as f64 + 1.0) - z.norm();
        if gap > 0.0 {
            self.sup_v / gap
        } else {
            f64::INFINITY
        }
    }

    /// tr dT/dz at z = k^2, from analytic k-derivatives of the kernels.
    pub fn trace_dz_t(&self, k: Complex64) -> Result<Complex64> {
        Ok(self.trace_dk_t(k)? / (2.0 * k))
    }

    /// tr dT/dk, summed over channels.
    pub fn trace_dk_t(&self, k: Complex64) -> Result<Complex64> {
        self.check_domain(k)?;
        let parts: Vec<Complex64> = (0..self.channels.len()).into_par_iter().map(|c| self.channel_trace_dk(c, k)).collect();
        Ok(parts.iter().sum())
    }

    pub fn channel_trace_dk(&self, ch: usize, k: Complex64) -> Complex64 {
        let c = &self.channels[ch];
        let z = k * k;
        self.channel_trace_with(c, |st| {
            if st.is_p_state() {
                let sigma = -I * k;
                Box::new(move |d| -I * decaying_kernel_dsigma(sigma, d))
            } else {
                let sigma = self.sigma_q(st, z);
                let ds = -k / sigma;
                Box::new(move |d| ds * decaying_kernel_dsigma(sigma, d))
            }
        })
    }

    /// tr T(k), summed over channels.
    pub fn trace_t(&self, k: Complex64) -> Result<Complex64> {
        self.check_domain(k)?;
        Ok((0..self.channels.len()).map(|c| self.channel_trace(c, k)).sum())
    }

    pub fn channel_trace(&self, ch: usize, k: Complex64) -> Complex64 {
        let c = &self.channels[ch];
        let z = k * k;
        self.channel_trace_with(c, |st| {
            let sigma = if st.is_p_state() { -I * k } else { self.sigma_q(st, z) };
            Box::new(move |d| decaying_kernel(sigma, d))
        })
    }

    fn channel_trace_with<'a>(&'a self, c: &Channel, kernel: impl Fn(&State) -> Box<dyn Fn(f64) -> Complex64 + 'a>) -> Complex64 {
        // tr = sum_c sum_j A_c[j,j] (R_j L_j)[c,c]
        let nt = self.grid.len();
        let mut total = ZERO;
        let mut done: Vec<(usize, bool, Vec<Complex64>)> = Vec::new();
        for (ci, st) in c.states.iter().enumerate() {
            let key = (st.level(), st.is_p_state());
            let diag = match done.iter().find(|(l, p, _)| (*l, *p) == key) {
                Some((_, _, d)) => d.clone(),
                None => {
                    let f = kernel(st);
                    let d = self.grid.axis_operator_diagonal(&*f);
                    done.push((key.0, key.1, d.clone()));
                    d
                }
            };
            for j in 0..nt {
                let mut rl = ZERO;
                for a in 0..c.n_states() {
                    rl += c.right[j][(ci, a)] * c.left[j][(a, ci)];
                }
                total += diag[j] * rl;
            }
        }
        total
    }

    /// log det(I + T_channel(k)) (branch of the imaginary part arbitrary).
    pub fn channel_log_det(&self, ch: usize, k: Complex64) -> Result<Complex64> {
        let t = self.channel_matrix(ch, k)?;
        Ok(log_det_i_plus(&t))
    }

    /// det(I + T_channel) together with d/dk log det(I + T_channel).
    pub fn channel_det_and_log_derivative(&self, ch: usize, k: Complex64) -> Result<(Complex64, Complex64)> {
        let t = self.channel_matrix(ch, k)?;
        let dt = self.channel_dk_matrix(ch, k)?;
        let lu = LuIPlus::new(&t);
        if lu.is_singular() {
            return Err(Error::NonConvergence("I + T is singular".into()));
        }
        Ok((lu.det(), lu.solve_trace(&dt)))
    }

    /// log det2(I + T(k)) over all channels.
    pub fn log_det2(&self, k: Complex64) -> Result<Complex64> {
        self.check_domain(k)?;
        let parts: Vec<Complex64> = (0..self.channels.len())
            .into_par_iter()
            .map(|c| {
                let t = self.channel_matrix_unchecked(c, k);
                log_det_i_plus(&t) - t.trace()
            })
            .collect();
        Ok(parts.iter().sum())
    }

    /// Hermitian-equivalent eigenvalues of T at the real point lambda < 0 (k = i sqrt|lambda|).
    pub fn bs_eigenvalues(&self, ch: usize, lambda: f64) -> Result<Vec<f64>> {
        if !(lambda < 0.0) {
            return Err(Error::invalid("Birman–Schwinger eigenvalues are taken at lambda < 0"));
        }
        let k = Complex64::new(0.0, (-lambda).sqrt());
        self.check_domain(k)?;
        let c = &self.channels[ch];
        let z = k * k;
        let mats = self.level_matrices(c, |st| {
            let sigma = if st.is_p_state() { -I * k } else { self.sigma_q(st, z) };
            Some(Box::new(move |d| decaying_kernel(sigma, d)))
        });
        let refs: Vec<Option<&DMatrix<Complex64>>> = mats.iter().map(|m| m.as_ref()).collect();
        // G = R N R is hermitian positive at negative energies; T = S G
        let g = hermitianize(self.sandwich(c, &refs, &c.right));
        let s = self.block_sign(c);
        let real = g.iter().chain(s.iter()).all(|z| z.im.abs() <= 1e-15 * (1.0 + z.re.abs()));
        let mut vals: Vec<f64> = if real {
            let gr = g.map(|z| z.re);
            match self.j {
                Some(j) => SymmetricEigen::new(gr).eigenvalues.iter().map(|v| j * v).collect(),
                None => {
                    let eig = SymmetricEigen::new(gr);
                    let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
                    let half = &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose();
                    let h = &half * s.map(|z| z.re) * &half;
                    let h = (&h + h.transpose()) * 0.5;
                    SymmetricEigen::new(h).eigenvalues.iter().copied().collect()
                }
            }
        } else if let Some(j) = self.j {
            SymmetricEigen::new(g).eigenvalues.iter().map(|v| j * v).collect()
        } else {
            let eig = SymmetricEigen::new(g);
            let half = &eig.eigenvectors
                * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| Complex64::new(v.max(0.0).sqrt(), 0.0)))
                * eig.eigenvectors.adjoint();
            let h = hermitianize(&half * s * &half);
            SymmetricEigen::new(h).eigenvalues.iter().copied().collect()
        };
        vals.sort_by(f64::total_cmp);
        Ok(vals)
    }

    fn block_sign(&self, c: &Channel) -> DMatrix<Complex64> {
        let dim = c.n_states() * self.grid.len();
        let mut out = DMatrix::zeros(dim, dim);
        for j in 0..self.grid.len() {
            for a in 0..c.n_states() {
                for b in 0..c.n_states() {
                    out[(self.index(c, a, j), self.index(c, b, j))] = c.sign[j][(a, b)];
                }
            }
        }
        out
    }

    /// Real determinant det(I + T_channel) at lambda < 0 (T is similar to a hermitian matrix there).
    pub fn channel_real_det(&self, ch: usize, lambda: f64) -> Result<f64> {
        if !(lambda < 0.0) {
            return Err(Error::invalid("the real determinant is taken at lambda < 0"));
        }
        let k = Complex64::new(0.0, (-lambda).sqrt());
        let t = self.channel_matrix(ch, k)?;
        Ok(LuIPlus::new(&t).det().re)
    }

    /// Number of Birman–Schwinger eigenvalues below -1 at lambda < 0, all channels.
    pub fn bs_count(&self, lambda: f64) -> Result<usize> {
        let mut n = 0;
        for c in 0..self.channels.len() {
            n += self.bs_eigenvalues(c, lambda)?.iter().filter(|&&v| v < -1.0).count();
        }
        Ok(n)
    }
}

fn hermitianize(m: DMatrix<Complex64>) -> DMatrix<Complex64> {
    let a = m.adjoint();
    (m + a) * Complex64::new(0.5, 0.0)
}

fn build_channel(
    potential: &PotentialSpec,
    model: &MagneticModel,
    grid: &AxisGrid,
    disc: &Discretization,
    ell: i64,
    j_global: Option<f64>,
) -> Result<(Channel, f64)> {
    let alpha = ell.unsigned_abs() as usize;
    let q_min = ((ell.abs() - ell) / 2) as usize;
    if q_min > disc.q_max {
        return Err(Error::invalid(format!("channel {ell} has no level below q_max = {}", disc.q_max)));
    }
    let q_levels: Vec<usize> = (q_min..=disc.q_max).collect();
    let nmax = disc.q_max - q_min;
    let rule = GammaRule::new(alpha, nmax, disc.radial_refine);
    let b0 = model.b0();
    let radial: Vec<Vec<f64>> = rule.nodes.iter().map(|&rho| orthonormal_laguerre(alpha as f64, nmax, rho)).collect();
    let keep: Vec<usize> = (0..rule.nodes.len()).filter(|&a| rule.weights[a] > 1e-300).collect();

    // sample V on the tensor grid once
    let mut values: Vec<Vec<Mat2>> = Vec::with_capacity(grid.len());
    let mut sup_v: f64 = 0.0;
    let mut down_active = false;
    for &t in &grid.nodes {
        let row: Vec<Mat2> = keep
            .iter()
            .map(|&a| {
                let r = (2.0 * rule.nodes[a] / b0).sqrt();
                potential.eval([r, 0.0], t)
            })
            .collect();
        for v in &row {
            let (lo, hi) = Herm2::of(v).eigenvalues();
            sup_v = sup_v.max(lo.abs()).max(hi.abs());
            if v[(0, 1)].norm() > 0.0 || v[(1, 1)].norm() > 0.0 || v[(1, 0)].norm() > 0.0 {
                down_active = true;
            }
        }
        values.push(row);
    }
    let spins = if down_active && !potential.scalar_mode { vec![Spin::Up, Spin::Down] } else { vec![Spin::Up] };
    let ns = spins.len();
    let states: Vec<State> = q_levels.iter().flat_map(|&q| spins.iter().map(move |&s| State { q, spin: s })).collect();
    let p_state = states.iter().position(|s| s.is_p_state());
    let n_st = states.len();

    let mut left = Vec::with_capacity(grid.len());
    let mut right = Vec::with_capacity(grid.len());
    let mut sign = Vec::with_capacity(grid.len());
    for row in &values {
        let (r, s) = match j_global {
            Some(j) => {
                // overlap of |V| = J V, square root by eigen-decomposition
                let mut m = DMatrix::<Complex64>::zeros(n_st, n_st);
                for (idx, &a) in keep.iter().enumerate() {
                    let av = herm2_abs(&row[idx]);
                    let w = rule.weights[a];
                    let p = &radial[a];
                    for (x, sx) in states.iter().enumerate() {
                        for (y, sy) in states.iter().enumerate() {
                            let e = av[(spin_idx(sx.spin), spin_idx(sy.spin))];
                            if e != ZERO {
                                m[(x, y)] += e * (w * p[sx.q - q_min] * p[sy.q - q_min]);
                            }
                        }
                    }
                }
                let r = psd_sqrt(hermitianize(m));
                (r, DMatrix::identity(n_st, n_st) * Complex64::new(j, 0.0))
            }
            None => sign_factorization(row, &keep, &rule, &radial, &states, q_min, ns),
        };
        left.push(&s * &r);
        right.push(r);
        sign.push(s);
    }
    let channel = Channel { ell, q_levels, spins, states, p_state, left, right, sign };
    Ok((channel, sup_v))
}

fn spin_idx(s: Spin) -> usize {
    match s {
        Spin::Up => 0,
        Spin::Down => 1,
    }
}

fn psd_sqrt(m: DMatrix<Complex64>) -> DMatrix<Complex64> {
    let eig = SymmetricEigen::new(m);
    let d = eig.eigenvalues.map(|v| Complex64::new(v.max(0.0).sqrt(), 0.0));
    hermitianize(&eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.adjoint())
}

/// From Y = (weighted |V|^{1/2} times modes) with thin SVD Y = U S W*: R = W S W*,
/// sign factor W U* J U W*.
fn sign_factorization(
    row: &[Mat2],
    keep: &[usize],
    rule: &GammaRule,
    radial: &[Vec<f64>],
    states: &[State],
    q_min: usize,
    ns: usize,
) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let n_st = states.len();
    let rows = keep.len() * ns;
    let mut y = DMatrix::<Complex64>::zeros(rows, n_st);
    let mut signs: Vec<Mat2> = Vec::with_capacity(keep.len());
    for (idx, &a) in keep.iter().enumerate() {
        let v = &row[idx];
        let half = crate::model::herm2_abs_sqrt(v);
        let sgn = crate::model::herm2_sign(v);
        let sw = rule.weights[a].sqrt();
        let p = &radial[a];
        for s_row in 0..ns {
            for (x, st) in states.iter().enumerate() {
                let e = half[(s_row, spin_idx(st.spin))];
                y[(idx * ns + s_row, x)] = e * (sw * p[st.q - q_min]);
            }
        }
        signs.push(sgn);
    }
    // compress first: Y = Qf Rf, then SVD the small factor
    let qr = y.qr();
    let qf = qr.q();
    let rf = qr.r();
    let svd = rf.svd(true, true);
    let u_small = svd.u.expect("svd u");
    let w_adj = svd.v_t.expect("svd v");
    let s = svd.singular_values.map(|x| Complex64::new(x, 0.0));
    let w = w_adj.adjoint();
    let r = hermitianize(&w * DMatrix::from_diagonal(&s) * &w_adj);
    let u = &qf * &u_small;
    // J acts on Y's rows as 2x2 blocks
    let mut ju = DMatrix::<Complex64>::zeros(rows, u.ncols());
    for (idx, sgn) in signs.iter().enumerate() {
        for s_row in 0..ns {
            for s2 in 0..ns {
                let e = sgn[(s_row, s2)];
                if e != ZERO {
                    for c in 0..u.ncols() {
                        ju[(idx * ns + s_row, c)] += e * u[(idx * ns + s2, c)];
                    }
                }
            }
        }
    }
    let sign = hermitianize(&w * (u.adjoint() * ju) * &w_adj);
    (r, sign)
}

/// log det(I + M) by LU, imaginary part on an arbitrary branch.
pub fn log_det_i_plus(m: &DMatrix<Complex64>) -> Complex64 {
    LuIPlus::new(m).log_det()
}

/// det2(I + M) = det(I + M) exp(-tr M). Switches to the eigenvalue product when M is large
/// or the determinant underflows.
pub fn det2(m: &DMatrix<Complex64>) -> Complex64 {
    if m.nrows() == 0 {
        return ONE;
    }
    if m.norm() > 1e3 {
        return det2_eigen(m);
    }
    let v = det2_lu(m);
    if v.norm() < 1e-250 || !v.is_finite() {
        det2_eigen(m)
    } else {
        v
    }
}

pub fn det2_lu(m: &DMatrix<Complex64>) -> Complex64 {
    LuIPlus::new(m).det() * (-m.trace()).exp()
}

pub fn det2_eigen(m: &DMatrix<Complex64>) -> Complex64 {
    let eig = eigenvalues(m);
    let mut log = ZERO;
    for mu in eig.iter() {
        let f = ONE + mu;
        if f == ZERO {
            return ZERO;
        }
        log += f.ln() - mu;
    }
    log.exp()
}

/// Eigenvalues of a general complex matrix via the complex Schur form.
pub fn eigenvalues(m: &DMatrix<Complex64>) -> Vec<Complex64> {
    let schur = nalgebra::linalg::Schur::new(m.clone());
    let (_, t) = schur.unpack();
    (0..t.nrows()).map(|i| t[(i, i)]).collect()
}

/// Toy operator (iJ/k) diag(B) + sum_n C_n k^n for oracle tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticModel {
    pub b_diag: Vec<f64>,
    /// Coefficient matrices of A(k), lowest power first; each dim x dim, row-major (re, im) pairs.
    #[serde(default)]
    pub a_coeffs: Vec<Vec<Vec<(f64, f64)>>>,
    pub j: f64,
}

impl SyntheticModel {
    pub fn new(b_diag: Vec<f64>, j: f64) -> Result<Self> {
        if b_diag.iter().any(|&b| !(b >= 0.0)) {
            return Err(Error::invalid("B_diag entries must be nonnegative"));
        }
        if j != 1.0 && j != -1.0 {
            return Err(Error::invalid("J must be +1 or -1"));
        }
        Ok(SyntheticModel { b_diag, a_coeffs: Vec::new(), j })
    }

    pub fn with_coefficients(mut self, coeffs: Vec<DMatrix<Complex64>>) -> Result<Self> {
        let n = self.dim();
        for c in &coeffs {
            if c.nrows() != n || c.ncols() != n {
                return Err(Error::invalid("A(k) coefficient has the wrong shape"));
            }
        }
        self.a_coeffs = coeffs
            .iter()
            .map(|c| (0..n).map(|i| (0..n).map(|j| (c[(i, j)].re, c[(i, j)].im)).collect()).collect())
            .collect();
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.b_diag.len()
    }

    fn coefficient(&self, n: usize) -> DMatrix<Complex64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| {
            let (re, im) = self.a_coeffs[n][i][j];
            Complex64::new(re, im)
        })
    }

    pub fn a_of_k(&self, k: Complex64) -> DMatrix<Complex64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        let mut pow = ONE;
        for n in 0..self.a_coeffs.len() {
            out += self.coefficient(n) * pow;
            pow *= k;
        }
        out
    }

    pub fn da_dk(&self, k: Complex64) -> DMatrix<Complex64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        let mut pow = ONE;
        for n in 1..self.a_coeffs.len() {
            out += self.coefficient(n) * (pow * n as f64);
            pow *= k;
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        SyntheticModel::new(self.b_diag.clone(), self.j)?;
        let n = self.dim();
        for c in &self.a_coeffs {
            if c.len() != n || c.iter().any(|r| r.len() != n) {
                return Err(Error::invalid("A(k) coefficient has the wrong shape"));
            }
        }
        Ok(())
    }
}

/// (iJ/k) diag(B) + A(k).
pub fn assemble_synthetic(model: &SyntheticModel, k: Complex64) -> Result<BSMatrix> {
    if k == ZERO {
        return Err(Error::SingularInput);
    }
    let b = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        model.dim(),
        model.b_diag.iter().map(|&x| Complex64::new(x, 0.0)),
    ));
    let singular = b * (I * model.j / k);
    let regular = model.a_of_k(k);
    let matrix = &singular + &regular;
    Ok(BSMatrix::new(k, singular, regular, matrix, 0))
}

/// d/dk of the synthetic T.
pub fn synthetic_dk(model: &SyntheticModel, k: Complex64) -> DMatrix<Complex64> {
    let b = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        model.dim(),
        model.b_diag.iter().map(|&x| Complex64::new(x, 0.0)),
    ));
    b * (-I * model.j / (k * k)) + model.da_dk(k)
}

/// Binary dump: two little-endian u64 (rows, cols), then row-major (re, im) f64 pairs.
pub fn write_matrix_dump<W: Write>(mut w: W, m: &DMatrix<Complex64>) -> std::io::Result<()> {
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].re.to_le_bytes())?;
            w.write_all(&m[(i, j)].im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_matrix_dump<R: Read>(mut r: R) -> std::io::Result<DMatrix<Complex64>> {
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let rows = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let cols = u64::from_le_bytes(b8) as usize;
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            r.read_exact(&mut b8)?;
            let re = f64::from_le_bytes(b8);
            r.read_exact(&mut b8)?;
            let im = f64::from_le_bytes(b8);
            m[(i, j)] = Complex64::new(re, im);
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landau::radial_toeplitz_entry;
    use crate::model::{bracket, ProfileClass, Sign};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn gaussian(j: f64, down: f64, gamma: f64) -> PotentialSpec {
        PotentialSpec {
            name: "test".into(),
            entries: Arc::new(move |x: [f64; 2], t: f64| {
                let w = (-(x[0] * x[0] + x[1] * x[1])).exp() * (-gamma * bracket(t)).exp();
                Mat2::new(Complex64::new(j * w, 0.0), ZERO, ZERO, Complex64::new(j * down * w, 0.0))
            }),
            m_perp: 3.0,
            gamma,
            envelope_const: 1.0,
            sign: Sign::from_j(j),
            profile_class: ProfileClass::A2 { beta: 1.0, mu: 1.0 },
            scalar_mode: false,
            radial: true,
        }
    }

    fn coupled(gamma: f64) -> PotentialSpec {
        PotentialSpec {
            name: "coupled".into(),
            entries: Arc::new(move |x: [f64; 2], t: f64| {
                let w = (-(x[0] * x[0] + x[1] * x[1])).exp() * (-gamma * bracket(t)).exp();
                Mat2::new(Complex64::new(0.5 * w, 0.0), Complex64::new(0.3 * w, 0.0), Complex64::new(0.3 * w, 0.0), Complex64::new(-w, 0.0))
            }),
            m_perp: 3.0,
            gamma,
            envelope_const: 1.0,
            sign: Sign::Indefinite,
            profile_class: ProfileClass::A2 { beta: 1.0, mu: 1.0 },
            scalar_mode: false,
            radial: true,
        }
    }

    fn small_disc() -> Discretization {
        Discretization {
            axis: AxisGridConfig { panels_per_side: 3, order: 8, grading: 1.5 },
            q_max: 4,
            channels: vec![0, 1, -1],
            radial_refine: 1,
            margins: Margins::default(),
        }
    }

    fn model() -> MagneticModel {
        MagneticModel::new(1.0, 2.0).unwrap()
    }

    fn rel(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn split_is_exact_and_b_is_k_independent() {
        let p = BsProblem::new(&gaussian(-1.0, 1.0, 2.0), &model(), &small_disc()).unwrap();
        for k in [Complex64::new(0.3, -0.2), Complex64::new(-0.1, 0.05), Complex64::new(0.0, 0.4)] {
            let t = p.assemble_t(k).unwrap();
            let sum = &t.singular_part + &t.regular_part;
            assert!(rel(&sum, &t.matrix) < 1e-12, "k = {k}");
            let b = &t.singular_part * (k / (I * -1.0));
            assert!(rel(&b, &p.build_b()) < 1e-12);
        }
        let b = p.build_b();
        assert!(rel(&b.adjoint(), &b) < 1e-14);
        let ev = SymmetricEigen::new(b).eigenvalues;
        assert!(ev.iter().all(|&v| v > -1e-12));
    }

    #[test]
    fn kk_star_matches_the_toeplitz_entry() {
        let spec = gaussian(1.0, 1.0, 2.0);
        let m = model();
        let p = BsProblem::new(&spec, &m, &small_disc()).unwrap();
        // W = e^{-r^2} times the axis integral, computed separately
        let axis = crate::quadrature::adaptive_with_breaks(&|t: f64| (-2.0 * bracket(t)).exp(), &[-40.0, -1.0, 0.0, 1.0, 40.0], 1e-14, 1e-14).unwrap();
        for (ci, ell) in [(0usize, 0usize), (1, 1)] {
            let k = p.build_k_channel(ci);
            let kk = (&k * k.adjoint())[(0, 0)].re;
            let s = radial_toeplitz_entry(&|r: f64| (-r * r).exp() * axis, m.b0(), ell, 1e-13).unwrap();
            // the small test grid integrates the axis weight to about 1e-6
            assert!((kk - s / 2.0).abs() < 3e-6 * s, "ell {ell}: {kk} vs {}", s / 2.0);
        }
        // negative channel: no lowest-level state
        assert_eq!(p.build_k_channel(2).norm(), 0.0);
    }

    #[test]
    fn split_matches_direct_on_the_physical_sheet() {
        let p = BsProblem::new(&coupled(2.0), &model(), &small_disc()).unwrap();
        for k in [Complex64::new(0.3, 0.2), Complex64::new(0.05, 0.6)] {
            for ch in 0..p.channels.len() {
                let a = p.channel_matrix(ch, k).unwrap();
                let d = p.assemble_direct_channel(ch, k).unwrap();
                assert!(rel(&a, &d) < 1e-12);
            }
        }
    }

    #[test]
    fn regular_part_stays_bounded_near_zero() {
        let p = BsProblem::new(&gaussian(1.0, 1.0, 2.0), &model(), &small_disc()).unwrap();
        let dir = Complex64::from_polar(1.0, -std::f64::consts::FRAC_PI_4);
        let a1 = p.assemble_channel(0, dir * 1e-2).unwrap().regular_part.norm();
        let a2 = p.assemble_channel(0, dir * 1.5e-3).unwrap().regular_part.norm();
        assert!((a1 - a2).abs() < 0.1 * a2);
    }

    #[test]
    fn j_flip_negates_t() {
        let m = model();
        let pp = BsProblem::new(&gaussian(1.0, 1.0, 2.0), &m, &small_disc()).unwrap();
        let pm = BsProblem::new(&gaussian(-1.0, 1.0, 2.0), &m, &small_disc()).unwrap();
        let k = Complex64::new(0.2, -0.1);
        let a = pp.assemble_t(k).unwrap();
        let b = pm.assemble_t(k).unwrap();
        assert!(rel(&(-&b.matrix), &a.matrix) < 1e-13);
        assert!(rel(&pm.build_b(), &pp.build_b()) < 1e-13);
    }

    #[test]
    fn indefinite_factorization_reproduces_v() {
        let p = BsProblem::new(&coupled(2.0), &model(), &small_disc()).unwrap();
        let c = &p.channels[0];
        for j in [0, p.grid.len() / 2] {
            let s = &c.sign[j];
            // S is a partial isometry-like sign: S^2 acts as identity on the range of R
            let r = &c.right[j];
            let srs = r * s * r;
            let back = r * (s * s) * r;
            assert!(rel(&back, &(r * r)) < 1e-9);
            assert!(srs.norm() > 0.0);
        }
    }

    #[test]
    fn trace_and_derivative_checks() {
        let p = BsProblem::new(&coupled(2.0), &model(), &small_disc()).unwrap();
        let k = Complex64::new(0.31, -0.17);
        let t = p.assemble_t(k).unwrap();
        let tr = p.trace_t(k).unwrap();
        assert!((tr - t.matrix.trace()).norm() < 1e-12 * t.hs_norm);
        // dz trace vs central differences in z
        let h = 1e-5;
        let z = k * k;
        let kp = (z + h).sqrt() * if ((z + h).sqrt() - k).norm() < k.norm() { 1.0 } else { -1.0 };
        let km = (z - h).sqrt() * if ((z - h).sqrt() - k).norm() < k.norm() { 1.0 } else { -1.0 };
        let fd = (p.trace_t(kp).unwrap() - p.trace_t(km).unwrap()) / (2.0 * h);
        let an = p.trace_dz_t(k).unwrap();
        assert!((fd - an).norm() < 1e-6 * an.norm(), "{fd} vs {an}");
        // full derivative matrix against the trace routine
        let dk: Complex64 = (0..p.channels.len()).map(|c| p.channel_dk_matrix(c, k).unwrap().trace()).sum();
        assert!((dk - p.trace_dk_t(k).unwrap()).norm() < 1e-12 * dk.norm());
    }

    #[test]
    fn reflection_symmetry_of_det2() {
        let p = BsProblem::new(&coupled(2.0), &model(), &small_disc()).unwrap();
        for k in [Complex64::new(0.31, -0.17), Complex64::new(0.1, 0.3)] {
            let a = p.log_det2(k).unwrap().exp();
            let b = p.log_det2(-k.conj()).unwrap().exp();
            assert!((a - b.conj()).norm() < 1e-10 * a.norm());
            let ta = p.trace_dz_t(k).unwrap();
            let tb = p.trace_dz_t(-k.conj()).unwrap();
            assert!((ta.conj() - tb).norm() < 1e-10 * ta.norm());
        }
    }

    #[test]
    fn q_block_is_hermitian_at_negative_energy_and_tail_shrinks() {
        let m = model();
        let mut d = small_disc();
        let p = BsProblem::new(&gaussian(1.0, 1.0, 2.0), &m, &d).unwrap();
        let q = p.build_q_resolvent_block(0, Complex64::new(-1.0, 0.0), 1e-3).unwrap();
        assert!(rel(&q.matrix.adjoint(), &q.matrix) < 1e-10);
        d.q_max = 8;
        let p2 = BsProblem::new(&gaussian(1.0, 1.0, 2.0), &m, &d).unwrap();
        assert!(p2.tail_bound(Complex64::new(-1.0, 0.0)) < q.tail_bound);
        assert!(p.build_q_resolvent_block(0, Complex64::new(2.5, 0.0), 1e-3).is_err());
    }

    #[test]
    fn zero_potential_gives_zero() {
        let p = BsProblem::new(&PotentialSpec::zero(2.0), &model(), &small_disc()).unwrap();
        let k = Complex64::new(0.2, 0.1);
        assert_eq!(p.assemble_t(k).unwrap().hs_norm, 0.0);
        assert_eq!(p.trace_dz_t(k).unwrap(), ZERO);
        assert!((p.log_det2(k).unwrap()).norm() < 1e-15);
    }

    #[test]
    fn domain_is_enforced() {
        let p = BsProblem::new(&PotentialSpec::zero(2.0), &model(), &small_disc()).unwrap();
        assert!(p.check_domain(Complex64::new(1e-5, 0.0)).is_err());
        assert!(p.check_domain(Complex64::new(0.9999, 0.0)).is_err());
        assert!(p.check_domain(Complex64::new(0.5, -0.3)).is_ok());
    }

    #[test]
    fn bs_eigenvalues_agree_between_paths() {
        // a positive potential declared indefinite runs the factorized route
        let m = model();
        let mut spec = gaussian(-1.0, 1.0, 2.0);
        let a = BsProblem::new(&spec, &m, &small_disc()).unwrap().bs_eigenvalues(0, -0.2).unwrap();
        spec.sign = Sign::Indefinite;
        let b = BsProblem::new(&spec, &m, &small_disc()).unwrap().bs_eigenvalues(0, -0.2).unwrap();
        let top = a.len() - 1;
        assert!((a[0] - b[0]).abs() < 1e-9 * a[0].abs());
        assert!(a[0] < 0.0 && a[top] <= 1e-12);
    }

    #[test]
    fn det2_paths_agree_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1, 5, 20] {
            let m = DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) / (n as f64).sqrt());
            let a = det2_lu(&m);
            let b = det2_eigen(&m);
            assert!((a - b).norm() < 1e-10 * a.norm());
        }
        assert_eq!(det2(&DMatrix::zeros(3, 3)), ONE);
        let mu = Complex64::new(0.4, -0.7);
        let mut r1 = DMatrix::zeros(3, 3);
        r1[(1, 1)] = mu;
        assert!((det2(&r1) - (ONE + mu) * (-mu).exp()).norm() < 1e-15);
    }

    #[test]
    fn synthetic_rank_one() {
        let m = SyntheticModel::new(vec![0.3], 1.0).unwrap();
        let k = Complex64::new(0.2, 0.1);
        let t = assemble_synthetic(&m, k).unwrap();
        let x = I * 0.3 / k;
        assert!((t.matrix[(0, 0)] - x).norm() < 1e-15);
        assert!((det2(&t.matrix) - (ONE + x) * (-x).exp()).norm() < 1e-14);
        let at = assemble_synthetic(&m, Complex64::new(0.0, -0.3)).unwrap();
        assert!(det2(&at.matrix).norm() < 1e-14);
        assert!(assemble_synthetic(&m, ZERO).is_err());
        assert!(SyntheticModel::new(vec![-0.1], 1.0).is_err());
    }

    #[test]
    fn dump_round_trip() {
        let m = DMatrix::from_fn(3, 2, |i, j| Complex64::new(i as f64, -(j as f64) * 0.5));
        let mut buf = Vec::new();
        write_matrix_dump(&mut buf, &m).unwrap();
        assert_eq!(buf.len(), 16 + 6 * 16);
        assert_eq!(read_matrix_dump(&buf[..]).unwrap(), m);
    }
}

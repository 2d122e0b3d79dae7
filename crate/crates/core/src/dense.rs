//! Dense complex LU on top of faer; nalgebra's unblocked LU dominates run time otherwise.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::Mat;
use nalgebra::DMatrix;
use num_complex::Complex64;

/// LU factorization of I + M.
pub struct LuIPlus {
    lu: PartialPivLu<Complex64>,
    odd: bool,
}

impl LuIPlus {
    pub fn new(m: &DMatrix<Complex64>) -> Self {
        let n = m.nrows();
        let a = Mat::from_fn(n, n, |i, j| if i == j { m[(i, j)] + 1.0 } else { m[(i, j)] });
        Self::from_faer(a)
    }

    /// LU of the matrix itself (no identity added).
    pub fn of(m: &DMatrix<Complex64>) -> Self {
        let n = m.nrows();
        Self::from_faer(Mat::from_fn(n, n, |i, j| m[(i, j)]))
    }

    fn from_faer(a: Mat<Complex64>) -> Self {
        let lu = PartialPivLu::new(a.as_ref());
        let (fwd, _) = lu.P().arrays();
        let mut seen = vec![false; fwd.len()];
        let mut cycles = 0;
        for s in 0..fwd.len() {
            if !seen[s] {
                cycles += 1;
                let mut i = s;
                while !seen[i] {
                    seen[i] = true;
                    i = fwd[i];
                }
            }
        }
        let odd = (fwd.len() - cycles) % 2 == 1;
        LuIPlus { lu, odd }
    }

    /// log det, imaginary part on an arbitrary branch.
    pub fn log_det(&self) -> Complex64 {
        let u = self.lu.U();
        let mut s = Complex64::new(0.0, 0.0);
        for i in 0..u.nrows() {
            s += u[(i, i)].ln();
        }
        if self.odd {
            s += Complex64::new(0.0, std::f64::consts::PI);
        }
        s
    }

    pub fn det(&self) -> Complex64 {
        let u = self.lu.U();
        let mut p = Complex64::new(if self.odd { -1.0 } else { 1.0 }, 0.0);
        for i in 0..u.nrows() {
            p *= u[(i, i)];
        }
        p
    }

    /// True when a pivot vanishes exactly.
    pub fn is_singular(&self) -> bool {
        let u = self.lu.U();
        (0..u.nrows()).any(|i| u[(i, i)] == Complex64::new(0.0, 0.0))
    }

    pub fn solve(&self, rhs: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let b = Mat::from_fn(rhs.nrows(), rhs.ncols(), |i, j| rhs[(i, j)]);
        let x = self.lu.solve(&b);
        DMatrix::from_fn(rhs.nrows(), rhs.ncols(), |i, j| x[(i, j)])
    }

    /// tr((I + M)^{-1} R) without forming the full solution twice.
    pub fn solve_trace(&self, rhs: &DMatrix<Complex64>) -> Complex64 {
        let b = Mat::from_fn(rhs.nrows(), rhs.ncols(), |i, j| rhs[(i, j)]);
        let x = self.lu.solve(&b);
        (0..x.nrows().min(x.ncols())).map(|i| x[(i, i)]).sum()
    }
}

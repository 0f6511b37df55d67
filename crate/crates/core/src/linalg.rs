//! Stack-allocated symmetric matrices of order ≤ 3 for per-node hot loops.

use nalgebra::{DMatrix, Matrix3};

/// Symmetric `n × n` matrix, `n ≤ 3`, stored in the top-left block of a 3×3 array.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmallSym {
    pub n: usize,
    pub a: [[f64; 3]; 3],
}

impl SmallSym {
    pub fn zeros(n: usize) -> Self {
        debug_assert!((1..=3).contains(&n));
        Self { n, a: [[0.0; 3]; 3] }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i][j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i][j] = v;
        self.a[j][i] = v;
    }

    pub fn det(&self) -> f64 {
        let a = &self.a;
        match self.n {
            1 => a[0][0],
            2 => a[0][0] * a[1][1] - a[0][1] * a[1][0],
            _ => {
                a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                    + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
            }
        }
    }

    /// Smallest eigenvalue.
    pub fn min_eig(&self) -> f64 {
        let a = &self.a;
        match self.n {
            1 => a[0][0],
            2 => {
                let mean = 0.5 * (a[0][0] + a[1][1]);
                let half_diff = 0.5 * (a[0][0] - a[1][1]);
                mean - (half_diff * half_diff + a[0][1] * a[0][1]).sqrt()
            }
            _ => {
                let m = Matrix3::from_fn(|i, j| a[i][j]);
                m.symmetric_eigenvalues().min()
            }
        }
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.a[i][j])
    }
}

/// Smallest eigenvalue of a symmetric dense matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().min()
}

/// Ratio of extreme singular values; `inf` for a singular matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

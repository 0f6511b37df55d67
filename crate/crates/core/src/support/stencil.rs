//! Second-order central stencils up to third derivatives.

use nalgebra::{DMatrix, DVector};

use super::field::SupportField;
use crate::error::Result;

/// Totally symmetric 3-tensor over `R^n`, `n ≤ 3`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sym3 {
    n: usize,
    data: [[[f64; 3]; 3]; 3],
}

impl Sym3 {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: [[[0.0; 3]; 3]; 3] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[i][j][k]
    }

    /// Writes `v` to every permutation of `(i, j, k)`.
    pub fn set_sym(&mut self, i: usize, j: usize, k: usize, v: f64) {
        for (a, b, c) in [(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)] {
            self.data[a][b][c] = v;
        }
    }

    /// Largest `|T_ijk - T_π(ijk)|` over all index permutations.
    pub fn asymmetry(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let v = self.data[i][j][k];
                    for w in [
                        self.data[i][k][j],
                        self.data[j][i][k],
                        self.data[j][k][i],
                        self.data[k][i][j],
                        self.data[k][j][i],
                    ] {
                        worst = worst.max((v - w).abs());
                    }
                }
            }
        }
        worst
    }
}

/// Finite-difference derivatives of a support field at one node.
#[derive(Clone, Debug, PartialEq)]
pub struct Derivatives {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
    pub third: Sym3,
}

/// Gradient, Hessian and third derivatives by central differences.
///
/// Needs two cells of margin. `s_iii` uses the five-point stencil, `s_iij` the
/// central first difference of the second difference, and distinct `s_ijk` the
/// product of three central first differences; each is written to all index
/// permutations.
pub fn derivatives(s: &SupportField, idx: usize) -> Result<Derivatives> {
    s.require_interior(idx, 2)?;
    let g = s.grid();
    let n = g.n();
    let v = s.values();
    let st: Vec<usize> = (0..n).map(|k| g.stride(k)).collect();
    let h: Vec<f64> = (0..n).map(|k| g.spacing(k)).collect();
    let at = |offs: &[(usize, isize)]| -> f64 {
        let mut flat = idx as isize;
        for &(axis, o) in offs {
            flat += o * st[axis] as isize;
        }
        v[flat as usize]
    };
    let d2 = |axis: usize, shift: &[(usize, isize)]| -> f64 {
        let mut p = shift.to_vec();
        p.push((axis, 1));
        let plus = at(&p);
        p.pop();
        let mid = at(&p);
        p.push((axis, -1));
        let minus = at(&p);
        (plus - 2.0 * mid + minus) / (h[axis] * h[axis])
    };

    let grad_arr = s.grad_unchecked(idx);
    let hess = s.hess_unchecked(idx).to_dmatrix();
    let mut third = Sym3::zeros(n);
    for i in 0..n {
        let hi3 = h[i] * h[i] * h[i];
        let siii = (at(&[(i, 2)]) - 2.0 * at(&[(i, 1)]) + 2.0 * at(&[(i, -1)]) - at(&[(i, -2)])) / (2.0 * hi3);
        third.set_sym(i, i, i, siii);
        for j in 0..n {
            if j == i {
                continue;
            }
            let siij = (d2(i, &[(j, 1)]) - d2(i, &[(j, -1)])) / (2.0 * h[j]);
            third.set_sym(i, i, j, siij);
        }
    }
    if n == 3 {
        let mut acc = 0.0;
        for a in [-1isize, 1] {
            for b in [-1isize, 1] {
                for c in [-1isize, 1] {
                    acc += (a * b * c) as f64 * at(&[(0, a), (1, b), (2, c)]);
                }
            }
        }
        third.set_sym(0, 1, 2, acc / (8.0 * h[0] * h[1] * h[2]));
    }
    Ok(Derivatives { value: v[idx], grad: DVector::from_fn(n, |i, _| grad_arr[i]), hess, third })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::support::field::{Extended, SupportField};
    use crate::support::grid::GridSpec;

    fn field(n: usize, m: usize, f: impl Fn(&[f64]) -> f64) -> SupportField {
        let g = GridSpec::cube(n, -1.0, 1.0, m).unwrap();
        SupportField::from_chart_fn(g, 0.0, "t", |y| Ok(Extended::Finite(f(y)))).unwrap()
    }

    #[test]
    fn affine_functions_have_exact_derivatives() {
        let s = field(2, 11, |y| 0.3 * y[0] - 1.7 * y[1] + 2.0);
        let idx = s.grid().index(&[5, 4]);
        let d = derivatives(&s, idx).unwrap();
        assert!((d.grad[0] - 0.3).abs() < 1e-12 && (d.grad[1] + 1.7).abs() < 1e-12);
        assert!(d.hess.amax() < 1e-10);
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    assert!(d.third.get(i, j, k).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn quadratic_has_identity_hessian() {
        let s = field(3, 9, |y| 0.5 * y.iter().map(|v| v * v).sum::<f64>());
        let idx = s.grid().index(&[3, 4, 5]);
        let d = derivatives(&s, idx).unwrap();
        let id = DMatrix::<f64>::identity(3, 3);
        assert!((d.hess - id).amax() < 1e-12);
        assert!(d.third.asymmetry() == 0.0);
    }

    #[test]
    fn cubic_third_derivatives_exact() {
        // s = y0^3 + y0^2 y1 + y0 y1 y2 -> s_000 = 6, s_001 = 2, s_012 = 1
        let s = field(3, 9, |y| y[0].powi(3) + y[0] * y[0] * y[1] + y[0] * y[1] * y[2]);
        let idx = s.grid().index(&[4, 3, 5]);
        let d = derivatives(&s, idx).unwrap();
        assert!((d.third.get(0, 0, 0) - 6.0).abs() < 1e-9);
        assert!((d.third.get(1, 0, 0) - 2.0).abs() < 1e-9);
        assert!((d.third.get(2, 1, 0) - 1.0).abs() < 1e-9);
        assert!(d.third.get(1, 1, 1).abs() < 1e-9);
    }

    #[test]
    fn boundary_nodes_are_rejected() {
        let s = field(2, 9, |y| y[0] * y[0]);
        let idx = s.grid().index(&[1, 4]);
        assert!(matches!(derivatives(&s, idx), Err(crate::Error::BoundaryNode { margin: 2, .. })));
        assert!(s.hessian(idx).is_ok());
    }
}

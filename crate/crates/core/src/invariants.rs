//! Affine differential geometry of a support field.
//!
//! With `D = det s_ij` and `(ln D)_k = s^{pq} s_pqk`, the per-node quantities are
//!
//! * conormal factor `φ = (1+|y|²)^{-1/2} D^{-1/(n+2)}` and tangential part `Z^i`,
//! * affine normal `ξ = D^{-1/(n+2)}/(n+2) · ((ln D)_1, …, (ln D)_n, (n+2) + (ln D)_i y^i)`,
//!   which must agree with `φ ν + Z^i F_i`,
//! * affine metric `g_ij = D^{1/(n+2)} s_ij` and its Christoffel symbols,
//! * cubic form `C_ijk = D^{1/(n+2)} [ s_ijk/2 - (s_ki L_j + s_kj L_i + s_ij L_k) / (2(n+2)) ]`
//!   and `|C|² = g^{il} g^{jm} g^{kp} C_ijk C_lmp`.
//!
//! The affine shape operator is defined by `ξ_{,i} = -A_i^j F_j`; on the unit sphere
//! field `ξ = -F`, so `A = +I` and the affine-sphere constant is `a = -1`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{condition_number, min_eigenvalue};
use crate::support::{
    derivatives, embedding_from, induced_metric_from, tangent_frame, Derivatives, SupportField, Sym3,
};

/// Euclidean unit normal, second fundamental form and induced metric.
#[derive(Clone, Debug, PartialEq)]
pub struct EuclideanData {
    pub nu: DVector<f64>,
    pub h: DMatrix<f64>,
    pub gbar: DMatrix<f64>,
}

/// Inward unit normal `ν = (-y, 1)/√(1+|y|²)`.
pub fn unit_normal(y: &[f64]) -> DVector<f64> {
    let n = y.len();
    let rho = (1.0 + y.iter().map(|v| v * v).sum::<f64>()).sqrt();
    DVector::from_fn(n + 1, |i, _| if i < n { -y[i] / rho } else { 1.0 / rho })
}

pub fn euclidean_data(s: &SupportField, idx: usize) -> Result<EuclideanData> {
    let hess = s.hessian(idx)?;
    if min_eigenvalue(&hess) <= 0.0 {
        return Err(Error::DegenerateHessian { node: idx, det: hess.determinant() });
    }
    let y = s.grid().coords(idx);
    let rho = (1.0 + y.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let (gbar, _) = induced_metric_from(&hess, &y);
    Ok(EuclideanData { nu: unit_normal(&y), h: hess / rho, gbar })
}

/// Affine invariants at one node.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineFrame {
    pub node: usize,
    pub y: Vec<f64>,
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
    /// `D = det s_ij`.
    pub det: f64,
    /// `(ln D)_k = s^{pq} s_pqk`.
    pub ln_det_grad: DVector<f64>,
    pub phi: f64,
    pub z: DVector<f64>,
    /// Affine normal from the closed form.
    pub xi: DVector<f64>,
    /// Affine normal assembled as `φ ν + Z^i F_i`.
    pub xi_conormal: DVector<f64>,
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    /// `gamma[k][i][j] = Γ^k_ij`.
    pub gamma: Vec<Vec<Vec<f64>>>,
    pub cubic: Sym3,
    pub cubic_norm2: f64,
}

impl AffineFrame {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Point `F` of the hypersurface.
    pub fn embedding(&self) -> DVector<f64> {
        embedding_from(&self.grad, &self.y, self.value)
    }

    /// Tangent frame `F_1, …, F_n` as columns.
    pub fn tangents(&self) -> DMatrix<f64> {
        tangent_frame(&self.hess, &self.y)
    }

    /// Traces `g^{ij} C_ijk`, one per `k`.
    pub fn apolarity(&self) -> DVector<f64> {
        let n = self.n();
        DVector::from_fn(n, |k, _| {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += self.g_inv[(i, j)] * self.cubic.get(i, j, k);
                }
            }
            acc
        })
    }
}

/// Computes all affine invariants at an interior node (two cells of margin).
pub fn affine_frame(s: &SupportField, idx: usize) -> Result<AffineFrame> {
    let d = derivatives(s, idx)?;
    frame_from_derivatives(idx, s.grid().coords(idx), &d)
}

pub(crate) fn frame_from_derivatives(node: usize, y: Vec<f64>, d: &Derivatives) -> Result<AffineFrame> {
    let n = y.len();
    let hess = &d.hess;
    let det = hess.determinant();
    if min_eigenvalue(hess) <= 0.0 || det <= 0.0 {
        return Err(Error::DegenerateHessian { node, det });
    }
    let hinv = hess.clone().try_inverse().ok_or(Error::DegenerateHessian { node, det })?;
    let p = 1.0 / (n as f64 + 2.0);
    let third = &d.third;

    let ln_det_grad = DVector::from_fn(n, |k, _| {
        let mut acc = 0.0;
        for a in 0..n {
            for b in 0..n {
                acc += hinv[(a, b)] * third.get(a, b, k);
            }
        }
        acc
    });
    let yv = DVector::from_column_slice(&y);
    let r2 = yv.norm_squared();
    let d_neg = det.powf(-p);
    let d_pos = det.powf(p);

    let phi = d_neg / (1.0 + r2).sqrt();
    let z = (&hinv * &yv / (1.0 + r2) + &hinv * &ln_det_grad * p) * d_neg;

    let mut xi = DVector::zeros(n + 1);
    for k in 0..n {
        xi[k] = p * d_neg * ln_det_grad[k];
    }
    xi[n] = p * d_neg * ((n as f64 + 2.0) + ln_det_grad.dot(&yv));

    let tangents = tangent_frame(hess, &y);
    let xi_conormal = unit_normal(&y) * phi + &tangents * &z;

    let g = hess * d_pos;
    let g_inv = &hinv * d_neg;

    let mut gamma = vec![vec![vec![0.0; n]; n]; n];
    for (k, gk) in gamma.iter_mut().enumerate() {
        for i in 0..n {
            for j in 0..n {
                let mut v = 0.0;
                if k == i {
                    v += p * ln_det_grad[j];
                }
                if k == j {
                    v += p * ln_det_grad[i];
                }
                for l in 0..n {
                    v += hinv[(k, l)] * third.get(i, j, l);
                    v -= p * hinv[(k, l)] * ln_det_grad[l] * hess[(i, j)];
                }
                gk[i][j] = 0.5 * v;
            }
        }
    }

    let mut cubic = Sym3::zeros(n);
    for i in 0..n {
        for j in i..n {
            for k in j..n {
                let v = d_pos
                    * (0.5 * third.get(i, j, k)
                        - 0.5
                            * p
                            * (hess[(k, i)] * ln_det_grad[j]
                                + hess[(k, j)] * ln_det_grad[i]
                                + hess[(i, j)] * ln_det_grad[k]));
                cubic.set_sym(i, j, k, v);
            }
        }
    }
    let mut cubic_norm2 = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let cijk = cubic.get(i, j, k);
                if cijk == 0.0 {
                    continue;
                }
                for l in 0..n {
                    for m in 0..n {
                        for q in 0..n {
                            cubic_norm2 += g_inv[(i, l)] * g_inv[(j, m)] * g_inv[(k, q)] * cijk * cubic.get(l, m, q);
                        }
                    }
                }
            }
        }
    }

    Ok(AffineFrame {
        node,
        y,
        value: d.value,
        grad: d.grad.clone(),
        hess: hess.clone(),
        det,
        ln_det_grad,
        phi,
        z,
        xi,
        xi_conormal,
        g,
        g_inv,
        gamma,
        cubic,
        cubic_norm2: cubic_norm2.max(0.0),
    })
}

/// Affine shape operator `A` with `ξ_{,i} = -A_i^j F_j`, fitted in least squares.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeOperator {
    /// `a[(i, j)] = A_i^j`.
    pub a: DMatrix<f64>,
    pub residual: f64,
}

impl ShapeOperator {
    pub fn trace(&self) -> f64 {
        self.a.trace()
    }

    /// Distance of `A` from its scalar part `(tr A / n) I`.
    pub fn anisotropy(&self) -> f64 {
        let n = self.a.nrows();
        (&self.a - DMatrix::identity(n, n) * (self.trace() / n as f64)).amax()
    }
}

/// Condition number above which the tangent frame is treated as dependent.
const FRAME_COND_LIMIT: f64 = 1e12;

/// Needs three cells of margin: `ξ` is differenced between neighboring frames.
pub fn shape_operator(s: &SupportField, idx: usize) -> Result<ShapeOperator> {
    s.require_interior(idx, 3)?;
    let center = affine_frame(s, idx)?;
    let n = center.n();
    let g = s.grid();
    let tangents = center.tangents();
    if condition_number(&tangents) > FRAME_COND_LIMIT {
        return Err(Error::IllConditioned(format!("tangent frame at node {idx}")));
    }
    let svd = tangents.clone().svd(true, true);
    let mut a = DMatrix::zeros(n, n);
    let mut residual: f64 = 0.0;
    for i in 0..n {
        let st = g.stride(i);
        let plus = affine_frame(s, idx + st)?;
        let minus = affine_frame(s, idx - st)?;
        let dxi = (&plus.xi - &minus.xi) / (2.0 * g.spacing(i));
        let rhs = -&dxi;
        let sol = svd.solve(&rhs, 1e-14).map_err(|e| Error::IllConditioned(e.to_string()))?;
        residual = residual.max((&tangents * &sol - &rhs).norm());
        for j in 0..n {
            a[(i, j)] = sol[j];
        }
    }
    Ok(ShapeOperator { a, residual })
}

/// CSV rows `y…, D, phi, xi…, cnorm2` for the given nodes.
pub fn frame_dump_csv(s: &SupportField, nodes: &[usize]) -> Result<String> {
    let n = s.n();
    let mut out = String::new();
    let ycols: Vec<String> = (0..n).map(|k| format!("y{k}")).collect();
    let xicols: Vec<String> = (0..=n).map(|k| format!("xi{k}")).collect();
    writeln!(out, "{},D,phi,{},cnorm2", ycols.join(","), xicols.join(",")).unwrap();
    for &idx in nodes {
        let f = affine_frame(s, idx)?;
        let ys: Vec<String> = f.y.iter().map(|v| format!("{v:.17e}")).collect();
        let xs: Vec<String> = f.xi.iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(out, "{},{:.17e},{:.17e},{},{:.17e}", ys.join(","), f.det, f.phi, xs.join(","), f.cubic_norm2)
            .unwrap();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::support::{AffineMap, Extended, GridSpec};

    fn field(n: usize, lo: f64, hi: f64, m: usize, f: impl Fn(&[f64]) -> f64) -> SupportField {
        let g = GridSpec::cube(n, lo, hi, m).unwrap();
        SupportField::from_chart_fn(g, 0.0, "t", |y| Ok(Extended::Finite(f(y)))).unwrap()
    }

    fn sphere(y: &[f64]) -> f64 {
        (1.0 + y.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    fn paraboloid(y: &[f64]) -> f64 {
        0.5 * y.iter().map(|v| v * v).sum::<f64>()
    }

    fn bumpy(y: &[f64]) -> f64 {
        sphere(y) + 0.15 * (y[0].powi(4) + 0.5 * y[1].powi(4)) + 0.1 * y[0] * y[0] * y[1]
    }

    #[test]
    fn euclidean_examples() {
        let s = field(2, -1.0, 1.0, 17, paraboloid);
        let e = euclidean_data(&s, s.grid().index(&[8, 8])).unwrap();
        assert_eq!(e.nu.as_slice(), &[0.0, 0.0, 1.0]);
        assert!((e.h.clone() - DMatrix::identity(2, 2)).amax() < 1e-12);
        let nu = unit_normal(&[1.0]);
        let r = 0.5f64.sqrt();
        assert!((nu[0] + r).abs() < 1e-15 && (nu[1] - r).abs() < 1e-15);
    }

    #[test]
    fn paraboloid_frame_is_flat() {
        let s = field(2, -1.0, 1.0, 17, paraboloid);
        for idx in s.interior_nodes(2) {
            let f = affine_frame(&s, idx).unwrap();
            assert!((f.det - 1.0).abs() < 1e-10);
            assert!(f.ln_det_grad.amax() < 1e-6);
            assert!((f.xi.clone() - DVector::from_vec(vec![0.0, 0.0, 1.0])).amax() < 1e-6);
            assert!(f.cubic_norm2 < 1e-10);
            assert!(f.gamma.iter().flatten().flatten().all(|v| v.abs() < 1e-6));
        }
    }

    #[test]
    fn sphere_frame_at_south_pole() {
        let s = field(2, -1.0, 1.0, 65, sphere);
        let f = affine_frame(&s, s.grid().index(&[32, 32])).unwrap();
        let h2 = s.grid().h_max().powi(2);
        assert!((f.det - 1.0).abs() < h2);
        assert!((f.g.clone() - DMatrix::identity(2, 2)).amax() < h2);
        assert!((f.xi.clone() - DVector::from_vec(vec![0.0, 0.0, 1.0])).amax() < h2);
        assert!((f.xi.clone() + f.embedding()).amax() < h2);
    }

    #[test]
    fn two_routes_and_apolarity() {
        let mut errs = Vec::new();
        for m in [33, 65] {
            let s = field(2, -1.0, 1.0, m, bumpy);
            let mut worst: f64 = 0.0;
            for idx in s.interior_nodes(2) {
                let f = affine_frame(&s, idx).unwrap();
                worst = worst.max((f.xi.clone() - f.xi_conormal.clone()).amax());
                assert!(f.apolarity().amax() < 1e-9);
                assert_eq!(f.cubic.asymmetry(), 0.0);
            }
            errs.push(worst);
        }
        // the two routes agree identically up to roundoff for the discrete data
        assert!(errs.iter().all(|&e| e < 1e-10), "{errs:?}");
    }

    #[test]
    fn quadric_cubic_norm_vanishes_at_second_order() {
        for f in [sphere as fn(&[f64]) -> f64, |y: &[f64]| (1.0 + 4.0 * y[0] * y[0] + 0.25 * y[1] * y[1]).sqrt()] {
            let mut maxes = Vec::new();
            for m in [33, 65, 129] {
                let s = field(2, -1.0, 1.0, m, f);
                let max = s
                    .interior_nodes(2)
                    .into_iter()
                    .map(|i| affine_frame(&s, i).unwrap().cubic_norm2.sqrt())
                    .fold(0.0, f64::max);
                maxes.push(max);
            }
            for w in maxes.windows(2) {
                let r = w[0] / w[1];
                assert!((3.2..4.8).contains(&r), "{maxes:?}");
            }
        }
    }

    #[test]
    fn shape_operator_examples() {
        let par = field(2, -1.0, 1.0, 33, paraboloid);
        let sh = shape_operator(&par, par.grid().index(&[16, 12])).unwrap();
        assert!(sh.a.amax() < 1e-6 && sh.residual < 1e-6);

        let mut errs = Vec::new();
        for m in [33, 65] {
            let s = field(2, -1.0, 1.0, m, sphere);
            let sh = shape_operator(&s, s.grid().index(&[m / 2 + m / 8, m / 2 - m / 8])).unwrap();
            // convention anchor: ξ = -F on the unit sphere, hence A = +I
            errs.push((sh.a.clone() - DMatrix::identity(2, 2)).amax());
            assert!(sh.residual < 1e-2);
        }
        assert!(errs[1] < errs[0] / 3.0, "{errs:?}");

        let b = field(2, -1.0, 1.0, 65, bumpy);
        let sh = shape_operator(&b, b.grid().index(&[40, 22])).unwrap();
        assert!(sh.anisotropy() > 1e-2);
        assert!(matches!(shape_operator(&b, b.grid().index(&[2, 30])), Err(Error::BoundaryNode { margin: 3, .. })));
    }

    #[test]
    fn unimodular_equivariance() {
        // A = [[1, 0.2, 0], [0, 1, 0.1], [0, 0, 1]] maps the sphere to an ellipsoid; the
        // image point with normal Y has affine normal A·ξ(Aᵀ Y).
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.0, 1.0, 0.1, 0.0, 0.0, 1.0]);
        let map = AffineMap::new(a.clone(), DVector::from_vec(vec![0.3, -0.2, 0.1])).unwrap();
        let grid = GridSpec::cube(2, -0.6, 0.6, 97).unwrap();
        let sph = crate::support::ChartFn::new(2, |y: &[f64]| Extended::Finite(sphere(y)));
        let image = crate::support::apply_affine(&sph, &map, &grid, 0.0, "ellipsoid").unwrap();
        let src_grid = GridSpec::cube(2, -1.0, 1.0, 161).unwrap();
        let src = SupportField::sample(src_grid, &sph, 0.0, "sphere").unwrap();
        let idx = grid.index(&[60, 40]);
        let y = grid.coords(idx);
        let fi = affine_frame(&image, idx).unwrap();
        let z = a.tr_mul(&DVector::from_vec(vec![y[0], y[1], -1.0]));
        let w = -z[2];
        // symbolic ξ of the unit sphere at chart point z'/w is -F = -(y,-1)/|Y|
        let yc = [z[0] / w, z[1] / w];
        let f_src = DVector::from_vec(vec![yc[0], yc[1], -1.0]) / (1.0 + yc[0] * yc[0] + yc[1] * yc[1]).sqrt();
        let expect = -(&a * f_src);
        assert!((fi.xi.clone() - &expect).amax() < 5e-3, "{} vs {}", fi.xi, expect);
        assert!(fi.cubic_norm2 < 1e-3);
        let _ = src;
    }
}

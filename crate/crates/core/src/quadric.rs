//! Quadric recognition: coordinates of points in the affine frame `{F_i, ξ}`,
//! the Lie quadric function `Φ`, the affine-sphere fit `ξ = aF + V` and a
//! least-squares classifier for sampled hypersurfaces.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invariants::{affine_frame, AffineFrame};
use crate::support::SupportField;

/// Frames with a larger condition number are treated as singular.
pub const FRAME_COND_LIMIT: f64 = 1e12;

/// `P = F(y0) + U^i F_i(y0) + μ ξ(y0)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameDecomposition {
    pub u: Vec<f64>,
    pub mu: f64,
    pub base: usize,
    pub cond: f64,
}

/// Affine frame at a base node, factored once for repeated decompositions.
#[derive(Clone, Debug)]
pub struct LieQuadric {
    pub frame: AffineFrame,
    pub a: f64,
    origin: DVector<f64>,
    basis: DMatrix<f64>,
    inverse: DMatrix<f64>,
    cond: f64,
}

fn condition(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

impl LieQuadric {
    pub fn at(s: &SupportField, y0: usize, a: f64) -> Result<Self> {
        let frame = affine_frame(s, y0)?;
        let n = frame.n();
        let mut basis = DMatrix::zeros(n + 1, n + 1);
        basis.columns_mut(0, n).copy_from(&frame.tangents());
        basis.set_column(n, &frame.xi);
        let cond = condition(&basis);
        if !(cond < FRAME_COND_LIMIT) {
            return Err(Error::SingularFrame(y0));
        }
        let inverse = basis.clone().try_inverse().ok_or(Error::SingularFrame(y0))?;
        Ok(LieQuadric { origin: frame.embedding(), frame, a, basis, inverse, cond })
    }

    pub fn decompose(&self, p: &[f64]) -> Result<FrameDecomposition> {
        let n = self.frame.n();
        if p.len() != n + 1 {
            return Err(Error::InvalidInput(format!("point has {} coordinates, expected {}", p.len(), n + 1)));
        }
        let d = DVector::from_column_slice(p) - &self.origin;
        let mut c = &self.inverse * &d;
        // one step of refinement keeps the reconstruction at round-off level
        let r = &d - &self.basis * &c;
        c += &self.inverse * r;
        let recon = &self.basis * &c;
        let scale = d.norm().max(self.origin.norm()).max(1.0);
        if (recon - &d).norm() > 1e-10 * scale {
            return Err(Error::SingularFrame(self.frame.node));
        }
        Ok(FrameDecomposition {
            u: c.rows(0, n).iter().copied().collect(),
            mu: c[n],
            base: self.frame.node,
            cond: self.cond,
        })
    }

    /// `Φ = g_ij U^i U^j - a μ² - 2μ`.
    pub fn phi(&self, p: &[f64]) -> Result<f64> {
        let d = self.decompose(p)?;
        let u = DVector::from_vec(d.u);
        Ok((u.transpose() * &self.frame.g * &u)[(0, 0)] - self.a * d.mu * d.mu - 2.0 * d.mu)
    }
}

pub fn frame_decompose(s: &SupportField, y0: usize, p: &[f64]) -> Result<FrameDecomposition> {
    LieQuadric::at(s, y0, 0.0)?.decompose(p)
}

pub fn lie_quadric_phi(s: &SupportField, y0: usize, p: &[f64], a: f64) -> Result<f64> {
    LieQuadric::at(s, y0, a)?.phi(p)
}

/// Least-squares fit of `ξ(y) = a F(y) + V`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AffineSphereFit {
    pub a: f64,
    pub v: Vec<f64>,
    /// `max |ξ - aF - V|` over the samples.
    pub deviation: f64,
    pub samples: usize,
}

pub fn affine_sphere_check(s: &SupportField, nodes: &[usize]) -> Result<AffineSphereFit> {
    let n = s.n();
    if nodes.len() < n + 3 {
        return Err(Error::InsufficientSamples { needed: n + 3, got: nodes.len() });
    }
    let mut pts = Vec::with_capacity(nodes.len());
    for &idx in nodes {
        let f = affine_frame(s, idx)?;
        let mut basis = DMatrix::zeros(n + 1, n + 1);
        basis.columns_mut(0, n).copy_from(&f.tangents());
        basis.set_column(n, &f.xi);
        if !(condition(&basis) < FRAME_COND_LIMIT) {
            return Err(Error::SingularFrame(idx));
        }
        pts.push((f.embedding(), f.xi));
    }
    // unknowns (a, V); one row per node and component
    let rows = nodes.len() * (n + 1);
    let mut m = DMatrix::zeros(rows, n + 2);
    let mut rhs = DVector::zeros(rows);
    for (k, (ff, xi)) in pts.iter().enumerate() {
        for c in 0..=n {
            let r = k * (n + 1) + c;
            m[(r, 0)] = ff[c];
            m[(r, 1 + c)] = 1.0;
            rhs[r] = xi[c];
        }
    }
    let cond = condition(&m);
    if !(cond < FRAME_COND_LIMIT) {
        return Err(Error::IllConditioned(format!("affine-sphere design has condition {cond:.3e}")));
    }
    let sol = m.svd(true, true).solve(&rhs, 0.0).map_err(|e| Error::IllConditioned(e.to_string()))?;
    let a = sol[0];
    let v = sol.rows(1, n + 1).into_owned();
    let deviation = pts.iter().map(|(ff, xi)| (xi - ff * a - &v).norm()).fold(0.0, f64::max);
    Ok(AffineSphereFit { a, v: v.iter().copied().collect(), deviation, samples: nodes.len() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuadricClass {
    Ellipsoid,
    Paraboloid,
    Hyperboloid,
    Degenerate,
}

/// Relative eigenvalue thresholds of the classifier: below `ZERO_TOL` counts as
/// zero, above `NONZERO_TOL` as nonzero, and anything between is ambiguous.
pub const ZERO_TOL: f64 = 1e-6;
pub const NONZERO_TOL: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuadricFit {
    /// Symmetric `(n+2) × (n+2)` form on `(x, 1)`, unit Frobenius norm.
    pub coefficients: Vec<Vec<f64>>,
    /// Eigenvalues of the spatial `(n+1) × (n+1)` block, ascending.
    pub signature: Vec<f64>,
    /// `max |X̂ᵀ M X̂|` over the samples.
    pub residual: f64,
    pub classification: QuadricClass,
}

impl QuadricFit {
    pub fn matrix(&self) -> DMatrix<f64> {
        let k = self.coefficients.len();
        DMatrix::from_fn(k, k, |i, j| self.coefficients[i][j])
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let h = homogeneous(x);
        (h.transpose() * self.matrix() * &h)[(0, 0)]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("quadric fit serializes")
    }
}

fn homogeneous(x: &[f64]) -> DVector<f64> {
    let mut h = DVector::from_element(x.len() + 1, 1.0);
    h.rows_mut(0, x.len()).copy_from_slice(x);
    h
}

/// Fits a homogeneous quadratic form vanishing on `points ⊂ R^{n+1}` and
/// classifies it by the eigenvalue signature of its spatial block.
pub fn fit_quadric_classify(points: &[DVector<f64>]) -> Result<QuadricFit> {
    let d = points.first().ok_or(Error::EmptyInput("quadric samples"))?.len();
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::InvalidInput("sample points of mixed dimension".into()));
    }
    let k = d + 1;
    let unknowns = k * (k + 1) / 2;
    if points.len() < unknowns {
        return Err(Error::InsufficientSamples { needed: unknowns, got: points.len() });
    }
    // center and scale for conditioning; undone on the fitted form below
    let centroid = points.iter().fold(DVector::zeros(d), |acc, p| acc + p) / points.len() as f64;
    let scale = (points.iter().map(|p| (p - &centroid).norm_squared()).sum::<f64>() / points.len() as f64).sqrt();
    if !(scale > 0.0) {
        return Err(Error::InvalidInput("quadric samples coincide".into()));
    }
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i..k).map(move |j| (i, j))).collect();
    let sqrt2 = std::f64::consts::SQRT_2;
    let design = DMatrix::from_fn(points.len(), unknowns, |r, c| {
        let z = homogeneous(((&points[r] - &centroid) / scale).as_slice());
        let (i, j) = pairs[c];
        if i == j {
            z[i] * z[i]
        } else {
            sqrt2 * z[i] * z[j]
        }
    });
    let svd = design.svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let (best, _) =
        svd.singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    let row = vt.row(best);
    let mut local = DMatrix::zeros(k, k);
    for (c, &(i, j)) in pairs.iter().enumerate() {
        if i == j {
            local[(i, i)] = row[c];
        } else {
            local[(i, j)] = row[c] / sqrt2;
            local[(j, i)] = row[c] / sqrt2;
        }
    }
    // z = T x̂ with T = [[I/σ, -c/σ], [0, 1]] so M = Tᵀ M_local T
    let mut t = DMatrix::identity(k, k) / scale;
    t.view_mut((0, d), (d, 1)).copy_from(&(-&centroid / scale));
    t[(d, d)] = 1.0;
    let mut m = t.transpose() * local * t;
    let fro = m.norm();
    m /= fro;
    // fix the overall sign so the largest spatial eigenvalue is positive
    let spatial = m.view((0, 0), (d, d)).into_owned().symmetric_eigen();
    let order = {
        let mut v: Vec<usize> = (0..d).collect();
        v.sort_by(|&a, &b| spatial.eigenvalues[a].total_cmp(&spatial.eigenvalues[b]));
        v
    };
    let big = spatial.eigenvalues.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
    if big < 0.0 {
        m = -m;
    }
    let sign = if big < 0.0 { -1.0 } else { 1.0 };
    let mut eig: Vec<f64> = order.iter().map(|&i| sign * spatial.eigenvalues[i]).collect();
    eig.sort_by(f64::total_cmp);
    let residual = points
        .iter()
        .map(|p| {
            let h = homogeneous(p.as_slice());
            (h.transpose() * &m * &h)[(0, 0)].abs()
        })
        .fold(0.0, f64::max);
    let classification = classify(&m, &eig, &spatial.eigenvectors)?;
    Ok(QuadricFit {
        coefficients: (0..k).map(|i| (0..k).map(|j| m[(i, j)]).collect()).collect(),
        signature: eig,
        residual,
        classification,
    })
}

fn classify(m: &DMatrix<f64>, eig: &[f64], vectors: &DMatrix<f64>) -> Result<QuadricClass> {
    let d = eig.len();
    let top = eig.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if top == 0.0 {
        return Ok(QuadricClass::Degenerate);
    }
    if eig.iter().any(|v| (ZERO_TOL * top..=NONZERO_TOL * top).contains(&v.abs())) {
        return Err(Error::AmbiguousSignature(eig.to_vec()));
    }
    let zeros = eig.iter().filter(|v| v.abs() < ZERO_TOL * top).count();
    let pos = eig.iter().filter(|&&v| v > NONZERO_TOL * top).count();
    let neg = d - zeros - pos;
    let a = m.view((0, 0), (d, d)).into_owned();
    let b = m.view((0, d), (d, 1)).into_owned();
    let c = m[(d, d)];
    match zeros {
        0 if pos > 0 && neg > 0 => Ok(QuadricClass::Hyperboloid),
        0 => {
            // A definite: the quadric is nonempty with interior iff c - bᵀA⁻¹b has the opposite sign
            let inv = a.try_inverse().ok_or_else(|| Error::AmbiguousSignature(eig.to_vec()))?;
            let k = c - (b.transpose() * inv * &b)[(0, 0)];
            let s = if pos > 0 { 1.0 } else { -1.0 };
            if k * s < -NONZERO_TOL * top {
                Ok(QuadricClass::Ellipsoid)
            } else {
                Ok(QuadricClass::Degenerate)
            }
        }
        1 if pos > 0 && neg > 0 => Ok(QuadricClass::Hyperboloid),
        1 => {
            // the linear part must reach the null direction of A
            let null = (0..d)
                .min_by(|&i, &j| {
                    let ei = (vectors.column(i).transpose() * &a * vectors.column(i))[(0, 0)].abs();
                    let ej = (vectors.column(j).transpose() * &a * vectors.column(j))[(0, 0)].abs();
                    ei.total_cmp(&ej)
                })
                .expect("nonempty spectrum");
            let reach = vectors.column(null).dot(&b.column(0)).abs();
            if reach > NONZERO_TOL * top {
                Ok(QuadricClass::Paraboloid)
            } else {
                Ok(QuadricClass::Degenerate)
            }
        }
        _ => Ok(QuadricClass::Degenerate),
    }
}

/// Embedding points `F` at the given nodes.
pub fn sample_embedding(s: &SupportField, nodes: &[usize]) -> Result<Vec<DVector<f64>>> {
    nodes.iter().map(|&i| crate::support::embedding_point(s, i)).collect()
}

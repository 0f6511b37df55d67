use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::field::{Extended, Support, SupportField};
use super::grid::GridSpec;
use crate::error::{Error, Result};

/// Tolerance on `| |det A| - 1 |` for the unimodular flag.
pub const UNIMODULAR_TOL: f64 = 1e-12;

/// Affine map `x ↦ A x + b` of `R^{n+1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AffineRepr", into = "AffineRepr")]
pub struct AffineMap {
    a: DMatrix<f64>,
    b: DVector<f64>,
    unimodular: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AffineRepr {
    /// Row-major rows of `A`.
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl TryFrom<AffineRepr> for AffineMap {
    type Error = Error;
    fn try_from(r: AffineRepr) -> Result<Self> {
        let dim = r.a.len();
        if r.a.iter().any(|row| row.len() != dim) || r.b.len() != dim {
            return Err(Error::InvalidInput("affine map must be square with matching b".into()));
        }
        let a = DMatrix::from_fn(dim, dim, |i, j| r.a[i][j]);
        AffineMap::new(a, DVector::from_vec(r.b))
    }
}

impl From<AffineMap> for AffineRepr {
    fn from(m: AffineMap) -> Self {
        let dim = m.a.nrows();
        AffineRepr {
            a: (0..dim).map(|i| (0..dim).map(|j| m.a[(i, j)]).collect()).collect(),
            b: m.b.iter().copied().collect(),
        }
    }
}

impl AffineMap {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() != b.len() || a.nrows() < 2 {
            return Err(Error::InvalidInput("affine map shape mismatch".into()));
        }
        let det = a.determinant();
        if !det.is_finite() || det.abs() < 1e-300 || a.clone().try_inverse().is_none() {
            return Err(Error::SingularMap);
        }
        let unimodular = (det.abs() - 1.0).abs() <= UNIMODULAR_TOL;
        Ok(Self { a, b, unimodular })
    }

    pub fn identity(ambient: usize) -> Self {
        Self::new(DMatrix::identity(ambient, ambient), DVector::zeros(ambient)).unwrap()
    }

    pub fn translation(b: DVector<f64>) -> Self {
        let d = b.len();
        Self::new(DMatrix::identity(d, d), b).unwrap()
    }

    pub fn linear(a: DMatrix<f64>) -> Result<Self> {
        let d = a.nrows();
        Self::new(a, DVector::zeros(d))
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// Ambient dimension `n + 1`.
    pub fn ambient_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn det(&self) -> f64 {
        self.a.determinant()
    }

    pub fn is_unimodular(&self) -> bool {
        self.unimodular
    }

    pub fn require_unimodular(&self) -> Result<()> {
        if self.unimodular {
            Ok(())
        } else {
            Err(Error::NotUnimodular(self.det().abs()))
        }
    }

    /// `self ∘ inner`: first `inner`, then `self`.
    pub fn compose(&self, inner: &AffineMap) -> AffineMap {
        AffineMap::new(&self.a * &inner.a, &self.a * &inner.b + &self.b).unwrap()
    }

    pub fn apply_point(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b
    }

    /// Maps a linear map's action on vectors (no translation).
    pub fn apply_vector(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.a * v
    }
}

/// Support function of `A L + b` given that of `L`:
/// `s'(Y) = s(Aᵀ Y) + ⟨b, Y⟩`.
pub struct Transformed<'a, S: ?Sized> {
    inner: &'a S,
    map: &'a AffineMap,
}

impl<'a, S: Support + ?Sized> Transformed<'a, S> {
    pub fn new(inner: &'a S, map: &'a AffineMap) -> Result<Self> {
        if map.ambient_dim() != inner.dim() + 1 {
            return Err(Error::InvalidInput("map dimension differs from support".into()));
        }
        Ok(Self { inner, map })
    }
}

impl<S: Support + ?Sized> Support for Transformed<'_, S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn chart_value(&self, y: &[f64]) -> Result<Extended> {
        let n = self.dim();
        let mut big_y = DVector::from_element(n + 1, -1.0);
        big_y.rows_mut(0, n).copy_from_slice(y);
        let z = self.map.a.tr_mul(&big_y);
        let shift = self.map.b.dot(&big_y);
        Ok(self.inner.homogeneous(z.as_slice())?.map(|v| v + shift))
    }

    fn homogeneous(&self, big_y: &[f64]) -> Result<Extended> {
        let yv = DVector::from_column_slice(big_y);
        let z = self.map.a.tr_mul(&yv);
        let shift = self.map.b.dot(&yv);
        Ok(self.inner.homogeneous(z.as_slice())?.map(|v| v + shift))
    }
}

/// Resamples the support function of the image body on `target`.
///
/// Nodes where the transformed support is `+inf` become inactive.
pub fn apply_affine<S: Support + ?Sized>(
    s: &S,
    map: &AffineMap,
    target: &GridSpec,
    time: f64,
    label: impl Into<String>,
) -> Result<SupportField> {
    let t = Transformed::new(s, map)?;
    SupportField::sample(target.clone(), &t, time, label)
}

impl SupportField {
    /// [`apply_affine`] keeping this field's time and label.
    pub fn transformed(&self, map: &AffineMap, target: &GridSpec) -> Result<SupportField> {
        apply_affine(self, map, target, self.time, self.label.clone())
    }
}

//! Closed-form solutions of `∂_t s = -(det D²s)^{-1/(n+2)}` used as oracles,
//! boundary data and barriers.
//!
//! * shrinking sphere `s = r(t)|Y| + ⟨c, Y⟩` with
//!   `r(t)^{(2n+2)/(n+2)} = r0^{(2n+2)/(n+2)} - (2n+2)/(n+2) · t`,
//! * ellipsoids, as unimodular images of spheres,
//! * the translating paraboloid `|y|²/2 - t`,
//! * the expanding Calabi soliton on the negative orthant
//!   `s = -(n+1) (c_n t^β Π |Y_i|)^{1/(n+1)}`, `c_n = √(n+1) (2/(n+2))^{(n+2)/2}`.
//!
//! The Calabi time exponent that makes the last formula an exact solution is
//! `β = (n+2)/2`; this is the default. `β = (n+2)/n` coincides with it only for
//! `n = 2` and fails the residual check otherwise.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::support::{AffineMap, Extended, GridSpec, Support, SupportField};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn chart_point(y: &[f64]) -> Vec<f64> {
    let mut big_y = y.to_vec();
    big_y.push(-1.0);
    big_y
}

/// Extinction time `((n+2)/(2n+2)) r0^{(2n+2)/(n+2)}` of a sphere of radius `r0`.
pub fn sphere_extinction_time(n: usize, r0: f64) -> f64 {
    let n = n as f64;
    (n + 2.0) / (2.0 * n + 2.0) * r0.powf((2.0 * n + 2.0) / (n + 2.0))
}

/// Radius at time `t` of the sphere that had radius `r0` at `t = 0`.
pub fn sphere_radius(n: usize, r0: f64, t: f64) -> Result<f64> {
    let t_ext = sphere_extinction_time(n, r0);
    if t >= t_ext {
        return Err(Error::PastExtinction { t, t_ext });
    }
    let nf = n as f64;
    let k = (2.0 * nf + 2.0) / (nf + 2.0);
    Ok((r0.powf(k) - k * t).powf(1.0 / k))
}

/// `r(t)|Y| + ⟨center, Y⟩` for `Y ∈ R^{n+1}`.
pub fn sphere_solution(r0: f64, center: &[f64], big_y: &[f64], t: f64) -> Result<f64> {
    if center.len() != big_y.len() || big_y.len() < 2 {
        return Err(Error::InvalidInput("center and Y must both lie in R^{n+1}".into()));
    }
    let r = sphere_radius(big_y.len() - 1, r0, t)?;
    Ok(r * norm(big_y) + center.iter().zip(big_y).map(|(c, y)| c * y).sum::<f64>())
}

/// Image of the centered sphere under a unimodular map: `s_sphere(AᵀY, t) + ⟨b, Y⟩`.
pub fn ellipsoid_solution(r0: f64, map: &AffineMap, big_y: &[f64], t: f64) -> Result<f64> {
    map.require_unimodular()?;
    if map.ambient_dim() != big_y.len() {
        return Err(Error::InvalidInput("map dimension differs from Y".into()));
    }
    let yv = DVector::from_column_slice(big_y);
    let z = map.a().tr_mul(&yv);
    let r = sphere_radius(big_y.len() - 1, r0, t)?;
    Ok(r * z.norm() + map.b().dot(&yv))
}

/// `|y|²/2 - t`, exact for every `t` since `det D²s ≡ 1`.
pub fn paraboloid_solution(y: &[f64], t: f64) -> f64 {
    0.5 * y.iter().map(|v| v * v).sum::<f64>() - t
}

/// `c_n = √(n+1) (2/(n+2))^{(n+2)/2}`.
pub fn calabi_constant(n: usize) -> f64 {
    let nf = n as f64;
    (nf + 1.0).sqrt() * (2.0 / (nf + 2.0)).powf((nf + 2.0) / 2.0)
}

/// Time exponent that makes the Calabi formula a solution.
pub fn calabi_default_beta(n: usize) -> f64 {
    (n as f64 + 2.0) / 2.0
}

/// Exponent as printed alongside the Calabi example; kept for the negative control.
pub fn calabi_printed_beta(n: usize) -> f64 {
    (n as f64 + 2.0) / n as f64
}

/// Orthant Calabi soliton at `Y ∈ R^{n+1}`; `+inf` unless every `Y_i ≤ 0`.
pub fn calabi_solution(big_y: &[f64], t: f64, beta: f64) -> Result<Extended> {
    if !(t > 0.0) {
        return Err(Error::OutsideValidity { t });
    }
    if big_y.len() < 2 {
        return Err(Error::InvalidInput("Y must lie in R^{n+1} with n >= 1".into()));
    }
    if big_y.iter().any(|&v| v > 0.0) {
        return Ok(Extended::PosInf);
    }
    let n = big_y.len() - 1;
    let prod: f64 = big_y.iter().map(|v| v.abs()).product();
    let inner = calabi_constant(n) * t.powf(beta) * prod;
    Ok(Extended::Finite(-((n + 1) as f64) * inner.powf(1.0 / (n as f64 + 1.0))))
}

/// Unimodular map carrying the negative orthant soliton to the one on the chart simplex
/// `{y : c_i + ⟨a_i, y⟩ ≥ 0, i = 0..=n}`; each facet is given as `(a_i, c_i)`.
///
/// The transformed solution vanishes on every facet for all `t`.
pub fn simplex_map(facets: &[(Vec<f64>, f64)]) -> Result<AffineMap> {
    let k = facets.len();
    if k < 2 || facets.iter().any(|(a, _)| a.len() + 1 != k) {
        return Err(Error::DegenerateSimplex(format!("need n+1 facets with normals in R^n, got {k}")));
    }
    // row i of Aᵀ is (-a_i, c_i), so that (AᵀY)_i = -(c_i + ⟨a_i, y⟩) on the chart
    let mut rows = DMatrix::zeros(k, k);
    for (i, (a, c)) in facets.iter().enumerate() {
        for (j, v) in a.iter().enumerate() {
            rows[(i, j)] = -v;
        }
        rows[(i, k - 1)] = *c;
    }
    let mut det = rows.determinant();
    if !det.is_finite() || det.abs() < 1e-12 {
        return Err(Error::DegenerateSimplex(format!("facet matrix determinant {det:e}")));
    }
    if det < 0.0 {
        rows.swap_rows(0, 1);
        det = -det;
    }
    let at = rows * det.powf(-1.0 / k as f64);
    AffineMap::new(at.transpose(), DVector::zeros(k))
}

/// Time interval on which an oracle solves the flow.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Validity {
    pub start: f64,
    /// `start` itself is excluded (Calabi is singular at `t = 0`).
    pub start_open: bool,
    /// Exclusive end; `None` for eternal solutions.
    pub end: Option<f64>,
}

impl Validity {
    pub fn contains(&self, t: f64) -> bool {
        let lower = if self.start_open { t > self.start } else { t >= self.start };
        lower && self.end.is_none_or(|e| t < e)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SolitonKind {
    Sphere {
        r0: f64,
        center: Vec<f64>,
    },
    Ellipsoid {
        r0: f64,
        map: AffineMap,
    },
    Paraboloid,
    /// Orthant soliton mapped by a unimodular `map`; `beta` defaults to `(n+2)/2`.
    Calabi {
        map: AffineMap,
        beta: Option<f64>,
    },
}

/// A closed-form solution together with its dimension.
///
/// Serialized as the tagged [`SolitonKind`] plus `n`, e.g.
/// `{"kind": "sphere", "n": 2, "r0": 1.0, "center": [0, 0, 0]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OracleRepr", into = "OracleRepr")]
pub struct SolitonOracle {
    pub n: usize,
    pub kind: SolitonKind,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum OracleRepr {
    Sphere {
        n: usize,
        r0: f64,
        center: Vec<f64>,
    },
    Ellipsoid {
        r0: f64,
        map: AffineMap,
    },
    Paraboloid {
        n: usize,
    },
    Calabi {
        map: AffineMap,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta: Option<f64>,
    },
    /// Input-only shorthand for [`SolitonOracle::calabi_on_simplex`]; serializes as `calabi`.
    CalabiSimplex {
        facets: Vec<FacetRepr>,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FacetRepr {
    a: Vec<f64>,
    c: f64,
}

impl TryFrom<OracleRepr> for SolitonOracle {
    type Error = Error;
    fn try_from(r: OracleRepr) -> Result<Self> {
        let o = match r {
            OracleRepr::Sphere { n, r0, center } => {
                if center.len() != n + 1 {
                    return Err(Error::InvalidInput(format!("sphere center must lie in R^{}", n + 1)));
                }
                Self { n, kind: SolitonKind::Sphere { r0, center } }
            }
            OracleRepr::Ellipsoid { r0, map } => Self::ellipsoid(r0, map)?,
            OracleRepr::Paraboloid { n } => Self::paraboloid(n),
            OracleRepr::Calabi { map, beta } => {
                map.require_unimodular()?;
                Self { n: map.ambient_dim() - 1, kind: SolitonKind::Calabi { map, beta } }
            }
            OracleRepr::CalabiSimplex { facets } => {
                let f: Vec<(Vec<f64>, f64)> = facets.into_iter().map(|f| (f.a, f.c)).collect();
                Self::calabi_on_simplex(&f)?
            }
        };
        if !(1..=3).contains(&o.n) {
            return Err(Error::InvalidInput(format!("dimension {} not in 1..=3", o.n)));
        }
        if let SolitonKind::Sphere { r0, .. } | SolitonKind::Ellipsoid { r0, .. } = &o.kind {
            if !(*r0 > 0.0) {
                return Err(Error::InvalidInput(format!("radius must be positive, got {r0}")));
            }
        }
        Ok(o)
    }
}

impl From<SolitonOracle> for OracleRepr {
    fn from(o: SolitonOracle) -> Self {
        match o.kind {
            SolitonKind::Sphere { r0, center } => OracleRepr::Sphere { n: o.n, r0, center },
            SolitonKind::Ellipsoid { r0, map } => OracleRepr::Ellipsoid { r0, map },
            SolitonKind::Paraboloid => OracleRepr::Paraboloid { n: o.n },
            SolitonKind::Calabi { map, beta } => OracleRepr::Calabi { map, beta },
        }
    }
}

impl SolitonOracle {
    pub fn sphere(n: usize, r0: f64) -> Self {
        Self { n, kind: SolitonKind::Sphere { r0, center: vec![0.0; n + 1] } }
    }

    pub fn ellipsoid(r0: f64, map: AffineMap) -> Result<Self> {
        map.require_unimodular()?;
        Ok(Self { n: map.ambient_dim() - 1, kind: SolitonKind::Ellipsoid { r0, map } })
    }

    pub fn paraboloid(n: usize) -> Self {
        Self { n, kind: SolitonKind::Paraboloid }
    }

    pub fn calabi_orthant(n: usize) -> Self {
        Self { n, kind: SolitonKind::Calabi { map: AffineMap::identity(n + 1), beta: None } }
    }

    /// Calabi soliton vanishing on the facets of a chart simplex, see [`simplex_map`].
    pub fn calabi_on_simplex(facets: &[(Vec<f64>, f64)]) -> Result<Self> {
        let map = simplex_map(facets)?;
        Ok(Self { n: map.ambient_dim() - 1, kind: SolitonKind::Calabi { map, beta: None } })
    }

    /// Evolving ellipsoid with initial support `ε√(|y|²+(j Y_{n+1})²) + ⟨v, Y⟩ + j Y_{n+1}`.
    ///
    /// It is the unimodular image of a sphere of radius `ε j^{1/(n+1)}`.
    pub fn ellipsoid_barrier(eps: f64, v: &[f64], j: f64) -> Result<Self> {
        if !(eps > 0.0) || !(j >= 1.0) {
            return Err(Error::InvalidInput(format!("need eps > 0 and j >= 1 (eps={eps}, j={j})")));
        }
        let dim = v.len();
        let n = dim - 1;
        let scale = j.powf(-1.0 / dim as f64);
        let mut diag = DVector::from_element(dim, scale);
        diag[n] = scale * j;
        let mut b = DVector::from_column_slice(v);
        b[n] += j;
        // the transpose of a diagonal matrix is itself
        let map = AffineMap::new(DMatrix::from_diagonal(&diag), b)?;
        Self::ellipsoid(eps * j.powf(1.0 / dim as f64), map)
    }

    /// Same oracle with a different Calabi exponent; other kinds are unchanged.
    pub fn with_beta(mut self, b: f64) -> Self {
        if let SolitonKind::Calabi { beta, .. } = &mut self.kind {
            *beta = Some(b);
        }
        self
    }

    pub fn beta(&self) -> Option<f64> {
        match &self.kind {
            SolitonKind::Calabi { beta, .. } => Some(beta.unwrap_or(calabi_default_beta(self.n))),
            _ => None,
        }
    }

    pub fn extinction_time(&self) -> Option<f64> {
        match &self.kind {
            SolitonKind::Sphere { r0, .. } | SolitonKind::Ellipsoid { r0, .. } => {
                Some(sphere_extinction_time(self.n, *r0))
            }
            _ => None,
        }
    }

    pub fn validity(&self) -> Validity {
        match &self.kind {
            SolitonKind::Sphere { .. } | SolitonKind::Ellipsoid { .. } => {
                Validity { start: 0.0, start_open: false, end: self.extinction_time() }
            }
            SolitonKind::Paraboloid => Validity { start: f64::NEG_INFINITY, start_open: false, end: None },
            SolitonKind::Calabi { .. } => Validity { start: 0.0, start_open: true, end: None },
        }
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if self.validity().contains(t) {
            return Ok(());
        }
        match self.extinction_time() {
            Some(t_ext) if t >= t_ext => Err(Error::PastExtinction { t, t_ext }),
            _ => Err(Error::OutsideValidity { t }),
        }
    }

    /// `s(Y, t)` for `Y ∈ R^{n+1}`.
    pub fn value(&self, big_y: &[f64], t: f64) -> Result<Extended> {
        if big_y.len() != self.n + 1 {
            return Err(Error::InvalidInput(format!("expected Y in R^{}", self.n + 1)));
        }
        self.check_time(t)?;
        match &self.kind {
            SolitonKind::Sphere { r0, center } => sphere_solution(*r0, center, big_y, t).map(Extended::Finite),
            SolitonKind::Ellipsoid { r0, map } => ellipsoid_solution(*r0, map, big_y, t).map(Extended::Finite),
            SolitonKind::Paraboloid => {
                let w = -big_y[self.n];
                if w <= 0.0 {
                    // the paraboloid's support is finite only on the open lower half-space
                    return Ok(Extended::PosInf);
                }
                let y: Vec<f64> = big_y[..self.n].iter().map(|v| v / w).collect();
                Ok(Extended::Finite(w * paraboloid_solution(&y, t)))
            }
            SolitonKind::Calabi { map, beta } => {
                let yv = DVector::from_column_slice(big_y);
                let z = map.a().tr_mul(&yv);
                let beta = beta.unwrap_or(calabi_default_beta(self.n));
                Ok(calabi_solution(z.as_slice(), t, beta)?.map(|v| v + map.b().dot(&yv)))
            }
        }
    }

    /// Every oracle separates as `s(Y, t) = time_factor(t) · P(Y) + Q(Y)`; this is the factor.
    pub fn time_factor(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(match &self.kind {
            SolitonKind::Sphere { r0, .. } | SolitonKind::Ellipsoid { r0, .. } => sphere_radius(self.n, *r0, t)?,
            SolitonKind::Paraboloid => t,
            SolitonKind::Calabi { beta, .. } => {
                t.powf(beta.unwrap_or(calabi_default_beta(self.n)) / (self.n as f64 + 1.0))
            }
        })
    }

    /// The time-independent pair `(P(Y), Q(Y))`; `None` where the support is `+inf`.
    pub fn split(&self, big_y: &[f64]) -> Result<Option<(f64, f64)>> {
        if big_y.len() != self.n + 1 {
            return Err(Error::InvalidInput(format!("expected Y in R^{}", self.n + 1)));
        }
        let yv = DVector::from_column_slice(big_y);
        Ok(match &self.kind {
            SolitonKind::Sphere { center, .. } => Some((yv.norm(), center.iter().zip(big_y).map(|(c, y)| c * y).sum())),
            SolitonKind::Ellipsoid { map, .. } => Some((map.a().tr_mul(&yv).norm(), map.b().dot(&yv))),
            SolitonKind::Paraboloid => {
                let w = -big_y[self.n];
                if w <= 0.0 {
                    None
                } else {
                    let r2: f64 = big_y[..self.n].iter().map(|v| v * v).sum();
                    Some((-w, 0.5 * r2 / w))
                }
            }
            SolitonKind::Calabi { map, .. } => {
                let z = map.a().tr_mul(&yv);
                calabi_solution(z.as_slice(), 1.0, 0.0)?.finite().map(|p| (p, map.b().dot(&yv)))
            }
        })
    }

    /// Exact hypersurface point `F = ∇_Y s(Y, t)` for the quadric oracles.
    pub fn embedding(&self, big_y: &[f64], t: f64) -> Result<DVector<f64>> {
        if big_y.len() != self.n + 1 {
            return Err(Error::InvalidInput(format!("expected Y in R^{}", self.n + 1)));
        }
        let f = self.time_factor(t)?;
        let yv = DVector::from_column_slice(big_y);
        match &self.kind {
            SolitonKind::Sphere { center, .. } => Ok(&yv * (f / yv.norm()) + DVector::from_column_slice(center)),
            SolitonKind::Ellipsoid { map, .. } => {
                let z = map.a().tr_mul(&yv);
                Ok(map.a() * (z * (f / map.a().tr_mul(&yv).norm())) + map.b())
            }
            SolitonKind::Paraboloid => {
                let w = -big_y[self.n];
                if w <= 0.0 {
                    return Err(Error::ChartViolation(big_y[self.n]));
                }
                let r2: f64 = big_y[..self.n].iter().map(|v| v * v).sum();
                let mut out = yv / w;
                out[self.n] = f + 0.5 * r2 / (w * w);
                Ok(out)
            }
            SolitonKind::Calabi { .. } => {
                Err(Error::InvalidInput("the Calabi oracle has no closed-form embedding here".into()))
            }
        }
    }

    pub fn chart_value(&self, y: &[f64], t: f64) -> Result<Extended> {
        self.value(&chart_point(y), t)
    }

    /// Frozen-time view implementing [`Support`].
    pub fn at(&self, t: f64) -> OracleAt<'_> {
        OracleAt { oracle: self, t }
    }

    /// Samples the oracle at time `t`; nodes where it is `+inf` become inactive.
    pub fn field(&self, grid: &GridSpec, t: f64) -> Result<SupportField> {
        if grid.n() != self.n {
            return Err(Error::InvalidInput("grid dimension differs from oracle".into()));
        }
        self.check_time(t)?;
        SupportField::sample(grid.clone(), &self.at(t), t, self.label())
    }

    pub fn label(&self) -> String {
        match &self.kind {
            SolitonKind::Sphere { .. } => "sphere",
            SolitonKind::Ellipsoid { .. } => "ellipsoid",
            SolitonKind::Paraboloid => "paraboloid",
            SolitonKind::Calabi { .. } => "calabi",
        }
        .to_string()
    }
}

pub struct OracleAt<'a> {
    oracle: &'a SolitonOracle,
    t: f64,
}

impl Support for OracleAt<'_> {
    fn dim(&self) -> usize {
        self.oracle.n
    }

    fn chart_value(&self, y: &[f64]) -> Result<Extended> {
        self.oracle.chart_value(y, self.t)
    }

    fn homogeneous(&self, big_y: &[f64]) -> Result<Extended> {
        self.oracle.value(big_y, self.t)
    }
}

/// Pointwise residual of the flow equation for an oracle.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualReport {
    pub t: f64,
    pub dt: f64,
    pub nodes: Vec<usize>,
    pub values: Vec<f64>,
    pub max: f64,
    /// Root mean square over the interior nodes.
    pub l2: f64,
}

/// `(s(t+dt) - s(t-dt))/(2dt) + (det D²s(t))^{-1/(n+2)}` over interior nodes, with
/// discrete spatial derivatives.
pub fn pde_residual(oracle: &SolitonOracle, grid: &GridSpec, t: f64, dt: f64) -> Result<ResidualReport> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let mid = oracle.field(grid, t)?;
    let plus = oracle.field(grid, t + dt)?;
    let minus = oracle.field(grid, t - dt)?;
    let p = 1.0 / (grid.n() as f64 + 2.0);
    let nodes: Vec<usize> =
        mid.interior_nodes(1).into_iter().filter(|&i| plus.is_active(i) && minus.is_active(i)).collect();
    if nodes.is_empty() {
        return Err(Error::EmptyInput("interior nodes for the residual"));
    }
    let mut values = Vec::with_capacity(nodes.len());
    for &idx in &nodes {
        let det = mid.hessian(idx)?.determinant();
        if det <= 0.0 {
            return Err(Error::DegenerateHessian { node: idx, det });
        }
        let dsdt = (plus.value(idx) - minus.value(idx)) / (2.0 * dt);
        values.push(dsdt + det.powf(-p));
    }
    let max = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let l2 = (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt();
    Ok(ResidualReport { t, dt, nodes, values, max, l2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn embedding_is_the_gradient() {
        let shear = AffineMap::new(
            DMatrix::from_row_slice(3, 3, &[1.0, 0.4, 0.0, 0.0, 1.0, -0.3, 0.0, 0.0, 1.0]),
            DVector::from_vec(vec![0.2, -0.1, 0.5]),
        )
        .unwrap();
        let oracles = [
            SolitonOracle::sphere(2, 1.3),
            SolitonOracle::ellipsoid(0.8, shear).unwrap(),
            SolitonOracle::paraboloid(2),
        ];
        let y = [0.3, -0.6, -1.2];
        for o in &oracles {
            let f = o.embedding(&y, 0.1).unwrap();
            for k in 0..3 {
                let h = 1e-5;
                let mut a = y;
                let mut b = y;
                a[k] += h;
                b[k] -= h;
                let fd = (o.value(&a, 0.1).unwrap().finite().unwrap() - o.value(&b, 0.1).unwrap().finite().unwrap())
                    / (2.0 * h);
                assert!((fd - f[k]).abs() < 1e-8, "{} {k}: {fd} vs {}", o.label(), f[k]);
            }
            // Euler's relation for degree-one homogeneity
            assert!(
                (f.dot(&DVector::from_column_slice(&y)) - o.value(&y, 0.1).unwrap().finite().unwrap()).abs() < 1e-12
            );
        }
        assert!(SolitonOracle::calabi_orthant(2).embedding(&y, 1.0).is_err());
    }

    #[test]
    fn sphere_examples() {
        assert_eq!(sphere_solution(1.0, &[0.0; 3], &[0.0, 0.0, -1.0], 0.0).unwrap(), 1.0);
        assert!((sphere_extinction_time(2, 1.0) - 2.0 / 3.0).abs() < 1e-15);
        let v = sphere_solution(1.0, &[0.0; 3], &[0.0, 0.0, -1.0], 1.0 / 3.0).unwrap();
        assert!((v - 0.5f64.powf(2.0 / 3.0)).abs() < 1e-14);
        assert!((v - 0.62996).abs() < 1e-5);
        assert!(matches!(sphere_radius(2, 1.0, 0.7), Err(Error::PastExtinction { .. })));
    }

    #[test]
    fn extinction_time_matches_ode_integration() {
        // r' = -r^{-n/(n+2)}, integrated with RK4 until r hits zero
        for n in 1..=3usize {
            let e = -(n as f64) / (n as f64 + 2.0);
            let f = |r: f64| -r.max(0.0).powf(e);
            let (mut r, mut t, h) = (1.0f64, 0.0f64, 1e-5);
            while r > 0.05 {
                let k1 = f(r);
                let k2 = f(r + 0.5 * h * k1);
                let k3 = f(r + 0.5 * h * k2);
                let k4 = f(r + h * k3);
                r += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                t += h;
            }
            let exact_t = sphere_extinction_time(n, 1.0) - sphere_extinction_time(n, r);
            assert!((t - exact_t).abs() < 1e-4, "n={n}: {t} vs {exact_t}");
            assert!((sphere_radius(n, 1.0, t).unwrap() - r).abs() < 1e-4);
        }
    }

    #[test]
    fn radius_power_is_affine_in_time() {
        for n in 1..=3usize {
            let k = (2.0 * n as f64 + 2.0) / (n as f64 + 2.0);
            let f = |t: f64| sphere_radius(n, 1.3, t).unwrap().powf(k);
            let (a, b, c) = (f(0.0), f(0.1), f(0.2));
            assert!((a - 2.0 * b + c).abs() < 1e-13);
            assert!(a > b && b > c);
        }
    }

    #[test]
    fn ellipsoid_examples() {
        let map = AffineMap::linear(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5]))).unwrap();
        let v = ellipsoid_solution(1.0, &map, &[0.0, -1.0], 0.0).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        let id = AffineMap::identity(3);
        let y = [0.3, -0.2, -1.0];
        assert_eq!(ellipsoid_solution(0.8, &id, &y, 0.1).unwrap(), sphere_solution(0.8, &[0.0; 3], &y, 0.1).unwrap());
        let bad = AffineMap::linear(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]))).unwrap();
        assert!(matches!(ellipsoid_solution(1.0, &bad, &[0.0, -1.0], 0.0), Err(Error::NotUnimodular(_))));
    }

    #[test]
    fn ellipsoid_barrier_formula_and_radius() {
        for n in 1..=2usize {
            for j in [1.0, 2.5, 7.0] {
                let mut v = vec![0.0; n + 1];
                v[0] = 0.3;
                v[n] = -0.4;
                let o = SolitonOracle::ellipsoid_barrier(0.6, &v, j).unwrap();
                let r_eq = 0.6 * j.powf(1.0 / (n as f64 + 1.0));
                assert!((o.extinction_time().unwrap() - sphere_extinction_time(n, r_eq)).abs() < 1e-14);
                let y = vec![0.4; n];
                let big_y = chart_point(&y);
                let direct = 0.6 * (y.iter().map(|a| a * a).sum::<f64>() + j * j).sqrt()
                    + v.iter().zip(&big_y).map(|(a, b)| a * b).sum::<f64>()
                    - j;
                let got = o.value(&big_y, 0.0).unwrap().finite().unwrap();
                assert!((got - direct).abs() < 1e-13, "{got} vs {direct}");
            }
        }
        let o = SolitonOracle::ellipsoid_barrier(1.0, &[0.0, 0.0, 0.0], 1.0).unwrap();
        assert!(o.chart_value(&[0.0, 0.0], 0.0).unwrap().finite().unwrap().abs() < 1e-15);
        let times: Vec<f64> = [1.0, 2.0, 4.0, 8.0]
            .iter()
            .map(|&j| SolitonOracle::ellipsoid_barrier(0.5, &[0.0; 3], j).unwrap().extinction_time().unwrap())
            .collect();
        assert!(times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn paraboloid_examples() {
        assert_eq!(paraboloid_solution(&[0.0, 0.0], 0.0), 0.0);
        assert_eq!(paraboloid_solution(&[0.0, 0.0], 1.0), -1.0);
        let g = GridSpec::cube(2, -1.0, 1.0, 17).unwrap();
        let r = pde_residual(&SolitonOracle::paraboloid(2), &g, 0.5, 1e-3).unwrap();
        assert!(r.max < 1e-10, "{}", r.max);
    }

    #[test]
    fn calabi_examples() {
        let c1 = calabi_constant(1);
        assert!((c1 - 0.76980).abs() < 1e-5);
        let v = calabi_solution(&[-1.0, -1.0], 1.0, 1.5).unwrap().finite().unwrap();
        assert!((v + 2.0 * c1.sqrt()).abs() < 1e-14);
        assert!((v + 1.75477).abs() < 1e-5);
        assert_eq!(calabi_solution(&[0.0, -3.0], 0.7, 1.5).unwrap(), Extended::Finite(-0.0));
        assert_eq!(calabi_solution(&[0.1, -3.0], 0.7, 1.5).unwrap(), Extended::PosInf);
        assert!(matches!(calabi_solution(&[-1.0, -1.0], 0.0, 1.5), Err(Error::OutsideValidity { .. })));
        assert_eq!(calabi_default_beta(2), calabi_printed_beta(2));
    }

    #[test]
    fn calabi_exponent_residuals_at_n1() {
        let g = |m| GridSpec::cube(1, -2.0, -0.5, m).unwrap();
        let good = SolitonOracle::calabi_orthant(1);
        let bad = SolitonOracle::calabi_orthant(1).with_beta(calabi_printed_beta(1));
        let mut errs = Vec::new();
        for m in [33, 65, 129] {
            errs.push(pde_residual(&good, &g(m), 1.0, 1e-4).unwrap().max);
            assert!(pde_residual(&bad, &g(m), 1.0, 1e-4).unwrap().max > 0.1);
        }
        for w in errs.windows(2) {
            assert!((3.2..4.8).contains(&(w[0] / w[1])), "{errs:?}");
        }
    }

    #[test]
    fn simplex_calabi_vanishes_on_facets() {
        let facets = vec![(vec![1.0, 0.0], 1.0), (vec![0.0, 1.0], 1.0), (vec![-1.0, -1.0], 0.0)];
        let o = SolitonOracle::calabi_on_simplex(&facets).unwrap();
        let SolitonKind::Calabi { map, .. } = &o.kind else { unreachable!() };
        assert!(map.is_unimodular());
        for t in [0.05, 1.0] {
            for y in [[-1.0, 0.3], [0.2, -1.0], [0.4, -0.4], [-1.0, -1.0]] {
                assert!(o.chart_value(&y, t).unwrap().finite().unwrap().abs() < 1e-12);
            }
            assert!(o.chart_value(&[-0.5, -0.5], t).unwrap().finite().unwrap() < 0.0);
            assert_eq!(o.chart_value(&[0.5, 0.5], t).unwrap(), Extended::PosInf);
        }
        let g = GridSpec::cube(2, -1.0, 1.0, 33).unwrap();
        let f = o.field(&g, 0.5).unwrap();
        assert!(f.mask().is_some());
        // the solution is singular on the facets; residuals are measured inside
        let inner = |m| GridSpec::cube(2, -0.9, -0.2, m).unwrap();
        let a = pde_residual(&o, &inner(33), 0.5, 1e-4).unwrap().max;
        let b = pde_residual(&o, &inner(65), 0.5, 1e-4).unwrap().max;
        assert!((3.2..4.8).contains(&(a / b)), "{a} {b}");
        assert!(matches!(
            SolitonOracle::calabi_on_simplex(&[(vec![1.0], 1.0), (vec![2.0], 2.0)]),
            Err(Error::DegenerateSimplex(_))
        ));
    }

    #[test]
    fn sphere_residual_is_second_order() {
        let o = SolitonOracle::sphere(2, 1.0);
        let maxes: Vec<f64> = [33, 65, 129]
            .iter()
            .map(|&m| pde_residual(&o, &GridSpec::cube(2, -1.0, 1.0, m).unwrap(), 0.2, 1e-4).unwrap().max)
            .collect();
        for w in maxes.windows(2) {
            assert!((3.2..4.8).contains(&(w[0] / w[1])), "{maxes:?}");
        }
    }

    #[test]
    fn oracle_serde_round_trip() {
        let o = SolitonOracle::calabi_on_simplex(&[(vec![1.0], 1.0), (vec![-1.0], 1.0)]).unwrap();
        let text = serde_json::to_string(&o).unwrap();
        assert!(text.contains("\"kind\":\"calabi\""));
        let back: SolitonOracle = serde_json::from_str(&text).unwrap();
        assert_eq!(back, o);
        let s: SolitonOracle = serde_json::from_str(r#"{"n":2,"kind":"sphere","r0":1.0,"center":[0,0,0]}"#).unwrap();
        assert_eq!(s, SolitonOracle::sphere(2, 1.0));
        assert!(serde_json::from_str::<SolitonOracle>(r#"{"n":2,"kind":"paraboloid","x":1}"#).is_err());
        let short: SolitonOracle =
            serde_json::from_str(r#"{"kind":"calabi_simplex","facets":[{"a":[1],"c":1},{"a":[-1],"c":1}]}"#).unwrap();
        assert_eq!(short, o);
    }

    #[test]
    fn separated_form_matches_values() {
        let ell = AffineMap::new(
            DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.0, 0.0, 1.0, 0.0, 0.0, 0.2, 1.0]),
            DVector::from_vec(vec![0.1, -0.2, 0.3]),
        )
        .unwrap();
        let oracles = [
            SolitonOracle::sphere(2, 1.0),
            SolitonOracle::ellipsoid(0.9, ell).unwrap(),
            SolitonOracle::paraboloid(2),
            SolitonOracle::calabi_orthant(2),
            SolitonOracle::calabi_orthant(2).with_beta(1.0),
        ];
        for o in &oracles {
            for y in [[-0.3, -0.4, -1.0], [0.2, -0.7, -2.0], [0.5, 0.1, -1.0]] {
                for t in [0.05, 0.3] {
                    let direct = o.value(&y, t).unwrap();
                    let split = o.split(&y).unwrap().map(|(p, q)| o.time_factor(t).unwrap() * p + q);
                    match (direct, split) {
                        (Extended::Finite(a), Some(b)) => assert!((a - b).abs() < 1e-13 * a.abs().max(1.0)),
                        (Extended::PosInf, None) => {}
                        other => panic!("{other:?}"),
                    }
                }
            }
        }
    }

    #[test]
    fn validity_errors() {
        let g = GridSpec::cube(2, -1.0, 1.0, 9).unwrap();
        assert!(matches!(SolitonOracle::sphere(2, 1.0).field(&g, 1.0), Err(Error::PastExtinction { .. })));
        assert!(matches!(SolitonOracle::calabi_orthant(2).field(&g, 0.0), Err(Error::OutsideValidity { .. })));
    }

    proptest! {
        #[test]
        fn calabi_time_scaling(y0 in -3.0f64..-0.01, y1 in -3.0f64..-0.01, t in 0.01f64..10.0) {
            let beta = calabi_default_beta(2);
            let big_y = [y0, y1, -1.0];
            let at_t = calabi_solution(&big_y, t, beta).unwrap().finite().unwrap();
            let at_1 = calabi_solution(&big_y, 1.0, beta).unwrap().finite().unwrap();
            prop_assert!((at_t - t.powf(beta / 3.0) * at_1).abs() <= 1e-12 * at_t.abs().max(1.0));
        }

        #[test]
        fn oracle_values_are_homogeneous(y0 in -0.9f64..0.9, w in 0.1f64..5.0) {
            let o = SolitonOracle::sphere(1, 1.0);
            let a = o.value(&[y0 * w, -w], 0.1).unwrap().finite().unwrap();
            let b = o.chart_value(&[y0], 0.1).unwrap().finite().unwrap();
            prop_assert!((a - w * b).abs() < 1e-12);
        }
    }
}

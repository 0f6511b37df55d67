use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::field::{Extended, Support, SupportField};
use super::grid::GridSpec;
use crate::error::{Error, Result};

/// Support function of the convex hull of `vertices` (points of `R^{n+1}`),
/// `s(y) = max_x ⟨x, (y, -1)⟩`, sampled on `grid`.
pub fn support_of_polytope(
    vertices: &[DVector<f64>],
    grid: &GridSpec,
    label: impl Into<String>,
) -> Result<SupportField> {
    let n = grid.n();
    if vertices.is_empty() {
        return Err(Error::EmptyInput("polytope vertex list"));
    }
    if let Some(bad) = vertices.iter().find(|v| v.len() != n + 1) {
        return Err(Error::InvalidInput(format!("vertex of length {} in R^{}", bad.len(), n + 1)));
    }
    let values = (0..grid.len())
        .map(|idx| {
            let y = grid.coords(idx);
            vertices
                .iter()
                .map(|x| x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() - x[n])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    SupportField::new(grid.clone(), values, 0.0, label)
}

/// Noncompact convex body families with closed-form support functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BodyKind {
    /// Epigraph boundary `x_{n+1} = |x'|²/2`; `s(y) = |y|²/2` on the whole chart.
    Paraboloid,
}

/// A noncompact body together with its nondegeneracy certificate
/// `s(y) ≥ ε √(|y|²+1) + ⟨p, y⟩ - c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoncompactBodySpec {
    pub n: usize,
    pub eps: f64,
    pub p: Vec<f64>,
    pub c: f64,
    pub body: BodyKind,
}

impl NoncompactBodySpec {
    /// Paraboloid with the certificate `ε = 1, p = 0, c = 1`.
    pub fn paraboloid(n: usize) -> Self {
        Self { n, eps: 1.0, p: vec![0.0; n], c: 1.0, body: BodyKind::Paraboloid }
    }

    /// Checks `ε > 0`, a nonempty domain, and the lower bound at every node of `grid`.
    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if grid.n() != self.n || self.p.len() != self.n {
            return Err(Error::InvalidInput("body dimension mismatch".into()));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Nondegeneracy(format!("epsilon must be > 0, got {}", self.eps)));
        }
        let mut any_finite = false;
        for idx in 0..grid.len() {
            let y = grid.coords(idx);
            let Extended::Finite(s) = self.chart_value(&y)? else {
                continue;
            };
            any_finite = true;
            let r2: f64 = y.iter().map(|v| v * v).sum();
            let lower = self.eps * (1.0 + r2).sqrt() + self.p.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() - self.c;
            if s < lower - 1e-12 * lower.abs().max(1.0) {
                return Err(Error::Nondegeneracy(format!("s({y:?}) = {s} below the bound {lower}")));
            }
        }
        if !any_finite {
            return Err(Error::Nondegeneracy("domain of s misses the grid".into()));
        }
        Ok(())
    }

    /// Body points whose horizontal coordinates lie in the ball of `radius`,
    /// taken on a lattice of the given spacing (origin included).
    pub fn sample_points(&self, radius: f64, spacing: f64) -> Result<Vec<DVector<f64>>> {
        if !(spacing > 0.0) || !(radius >= 0.0) {
            return Err(Error::InvalidInput("radius and spacing must be positive".into()));
        }
        let k = (radius / spacing).floor() as i64;
        let n = self.n;
        let side = (2 * k + 1) as usize;
        let total = side.pow(n as u32);
        let mut out = Vec::new();
        for c in 0..total {
            let mut rem = c;
            let mut u = vec![0.0; n];
            for slot in u.iter_mut() {
                *slot = ((rem % side) as i64 - k) as f64 * spacing;
                rem /= side;
            }
            let r2: f64 = u.iter().map(|v| v * v).sum();
            if r2 > radius * radius * (1.0 + 1e-12) {
                continue;
            }
            match self.body {
                BodyKind::Paraboloid => {
                    let mut x = DVector::zeros(n + 1);
                    x.rows_mut(0, n).copy_from_slice(&u);
                    x[n] = 0.5 * r2;
                    out.push(x);
                }
            }
        }
        if out.is_empty() {
            return Err(Error::EmptyTruncation(radius));
        }
        Ok(out)
    }
}

impl Support for NoncompactBodySpec {
    fn dim(&self) -> usize {
        self.n
    }

    fn chart_value(&self, y: &[f64]) -> Result<Extended> {
        match self.body {
            BodyKind::Paraboloid => Ok(Extended::Finite(0.5 * y.iter().map(|v| v * v).sum::<f64>())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::support::field::convexity_check;

    #[test]
    fn single_vertex_gives_constant() {
        let g = GridSpec::cube(2, -1.0, 1.0, 9).unwrap();
        let s = support_of_polytope(&[DVector::from_vec(vec![0.0, 0.0, -1.0])], &g, "pt").unwrap();
        assert!(s.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn segment_gives_absolute_value() {
        let g = GridSpec::cube(1, -2.0, 2.0, 17).unwrap();
        let verts =
            [DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![-1.0, 0.0]), DVector::from_vec(vec![0.0, 0.0])];
        let s = support_of_polytope(&verts, &g, "seg").unwrap();
        for idx in 0..g.len() {
            let y = g.coords(idx)[0];
            let brute = verts.iter().map(|x| x[0] * y - x[1]).fold(f64::MIN, f64::max);
            assert_eq!(s.value(idx), brute);
            assert_eq!(s.value(idx), y.abs());
        }
        assert!(support_of_polytope(&[], &g, "e").is_err());
    }

    #[test]
    fn paraboloid_spec_validation() {
        let g = GridSpec::cube(1, -3.0, 3.0, 13).unwrap();
        assert!(NoncompactBodySpec::paraboloid(1).validate(&g).is_ok());
        let mut bad = NoncompactBodySpec::paraboloid(1);
        bad.eps = 0.0;
        assert!(matches!(bad.validate(&g), Err(Error::Nondegeneracy(_))));
        let mut too_strong = NoncompactBodySpec::paraboloid(1);
        too_strong.c = 0.0;
        assert!(matches!(too_strong.validate(&g), Err(Error::Nondegeneracy(_))));
    }

    #[test]
    fn polytope_support_is_convex() {
        let body = NoncompactBodySpec::paraboloid(2);
        let pts = body.sample_points(1.5, 0.25).unwrap();
        let g = GridSpec::cube(2, -1.0, 1.0, 17).unwrap();
        let s = support_of_polytope(&pts, &g, "cap").unwrap();
        assert!(convexity_check(&s, Some(-1e-12)).admissible());
    }
}

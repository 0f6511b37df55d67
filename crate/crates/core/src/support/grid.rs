use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible number of points per axis.
pub const MIN_POINTS: usize = 9;

/// Axis-aligned tensor grid on the chart `{y^{n+1} = -1}`.
///
/// Nodes are stored row-major: the last axis varies fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct GridSpec {
    n: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    m: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridRepr {
    n: usize,
    #[serde(rename = "box")]
    bounds: Vec<[f64; 2]>,
    m: usize,
}

impl TryFrom<GridRepr> for GridSpec {
    type Error = Error;
    fn try_from(r: GridRepr) -> Result<Self> {
        let lo = r.bounds.iter().map(|b| b[0]).collect();
        let hi = r.bounds.iter().map(|b| b[1]).collect();
        GridSpec::new(r.n, lo, hi, r.m)
    }
}

impl From<GridSpec> for GridRepr {
    fn from(g: GridSpec) -> Self {
        GridRepr { n: g.n, bounds: g.lo.iter().zip(&g.hi).map(|(&l, &h)| [l, h]).collect(), m: g.m }
    }
}

impl GridSpec {
    pub fn new(n: usize, lo: Vec<f64>, hi: Vec<f64>, m: usize) -> Result<Self> {
        if !(1..=3).contains(&n) {
            return Err(Error::InvalidGrid(format!("dimension {n} not in 1..=3")));
        }
        if lo.len() != n || hi.len() != n {
            return Err(Error::InvalidGrid("box bounds must have length n".into()));
        }
        if m < MIN_POINTS {
            return Err(Error::InvalidGrid(format!("m = {m} < {MIN_POINTS}")));
        }
        for k in 0..n {
            if !(lo[k].is_finite() && hi[k].is_finite() && hi[k] > lo[k]) {
                return Err(Error::InvalidGrid(format!("axis {k}: need finite lo < hi, got [{}, {}]", lo[k], hi[k])));
            }
        }
        Ok(Self { n, lo, hi, m })
    }

    /// Cube `[lo, hi]^n`.
    pub fn cube(n: usize, lo: f64, hi: f64, m: usize) -> Result<Self> {
        Self::new(n, vec![lo; n], vec![hi; n], m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.m - 1) as f64
    }

    pub fn h_min(&self) -> f64 {
        (0..self.n).map(|k| self.spacing(k)).fold(f64::INFINITY, f64::min)
    }

    pub fn h_max(&self) -> f64 {
        (0..self.n).map(|k| self.spacing(k)).fold(0.0, f64::max)
    }

    /// Total number of nodes, `m^n`.
    pub fn len(&self) -> usize {
        self.m.pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat-index offset of a unit step along `axis`.
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.m.pow((self.n - 1 - axis) as u32)
    }

    pub fn index(&self, multi: &[usize]) -> usize {
        multi.iter().fold(0, |acc, &i| acc * self.m + i)
    }

    pub fn multi_index(&self, mut idx: usize) -> [usize; 3] {
        let mut out = [0; 3];
        for k in (0..self.n).rev() {
            out[k] = idx % self.m;
            idx /= self.m;
        }
        out
    }

    /// Chart coordinates of a node.
    pub fn coords(&self, idx: usize) -> Vec<f64> {
        let mi = self.multi_index(idx);
        (0..self.n).map(|k| self.lo[k] + mi[k] as f64 * self.spacing(k)).collect()
    }

    /// Distance (in cells) from the nearest face of the box.
    pub fn face_margin(&self, idx: usize) -> usize {
        let mi = self.multi_index(idx);
        (0..self.n).map(|k| mi[k].min(self.m - 1 - mi[k])).min().unwrap_or(0)
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        y.iter().enumerate().all(|(k, &v)| {
            let tol = 1e-12 * (self.hi[k] - self.lo[k]);
            v >= self.lo[k] - tol && v <= self.hi[k] + tol
        })
    }

    /// Node nearest to a chart point (clamped into the box).
    pub fn nearest_node(&self, y: &[f64]) -> usize {
        let multi: Vec<usize> = (0..self.n)
            .map(|k| {
                let r = ((y[k] - self.lo[k]) / self.spacing(k)).round();
                r.clamp(0.0, (self.m - 1) as f64) as usize
            })
            .collect();
        self.index(&multi)
    }

    /// Same box with a different resolution.
    pub fn with_points(&self, m: usize) -> Result<Self> {
        Self::new(self.n, self.lo.clone(), self.hi.clone(), m)
    }

    /// Iterates over all flat indices of nodes whose multi-index stays inside the
    /// cube of radius `r` around `idx`; `None` if the cube leaves the box.
    pub fn cube_neighbors(&self, idx: usize, r: usize) -> Option<Vec<usize>> {
        if self.face_margin(idx) < r {
            return None;
        }
        let mi = self.multi_index(idx);
        let side = 2 * r + 1;
        let count = side.pow(self.n as u32);
        let mut out = Vec::with_capacity(count);
        for c in 0..count {
            let mut rem = c;
            let mut flat = 0usize;
            for k in 0..self.n {
                let off = rem % side;
                rem /= side;
                let ik = mi[k] + off - r;
                flat += ik * self.stride(k);
            }
            out.push(flat);
        }
        Some(out)
    }
}

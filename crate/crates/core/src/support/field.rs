use nalgebra::{DMatrix, DVector};

use super::grid::GridSpec;
use crate::error::{Error, Result};
use crate::linalg::SmallSym;

/// Extended-real support value. `PosInf` marks directions outside the domain of
/// the support function and is never encoded as a large float.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Extended {
    Finite(f64),
    PosInf,
}

impl Extended {
    pub fn finite(self) -> Option<f64> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::PosInf => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn map(self, f: impl FnOnce(f64) -> f64) -> Extended {
        match self {
            Extended::Finite(v) => Extended::Finite(f(v)),
            Extended::PosInf => Extended::PosInf,
        }
    }
}

/// A support function known on the chart `Y = (y, -1)`.
pub trait Support {
    /// Chart dimension `n` (the ambient space is `R^{n+1}`).
    fn dim(&self) -> usize;

    fn chart_value(&self, y: &[f64]) -> Result<Extended>;

    /// Degree-one homogeneous extension to the open lower half-space:
    /// `s(Y) = (-Y_{n+1}) s(Y' / (-Y_{n+1}))`.
    fn homogeneous(&self, big_y: &[f64]) -> Result<Extended> {
        let n = self.dim();
        if big_y.len() != n + 1 {
            return Err(Error::InvalidInput(format!("expected a point in R^{}, got length {}", n + 1, big_y.len())));
        }
        let w = -big_y[n];
        if w <= 0.0 || !w.is_finite() {
            return Err(Error::ChartViolation(big_y[n]));
        }
        let y: Vec<f64> = big_y[..n].iter().map(|v| v / w).collect();
        Ok(self.chart_value(&y)?.map(|v| w * v))
    }
}

/// Evaluates `s(Y)` for `Y` in the lower half-space.
pub fn eval_homogeneous<S: Support + ?Sized>(s: &S, big_y: &[f64]) -> Result<Extended> {
    s.homogeneous(big_y)
}

/// Closed-form support function given on the chart.
pub struct ChartFn<F> {
    n: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> Extended> ChartFn<F> {
    pub fn new(n: usize, f: F) -> Self {
        Self { n, f }
    }
}

impl<F: Fn(&[f64]) -> Extended> Support for ChartFn<F> {
    fn dim(&self) -> usize {
        self.n
    }

    fn chart_value(&self, y: &[f64]) -> Result<Extended> {
        Ok((self.f)(y))
    }
}

/// Discrete support function on a chart grid.
///
/// Nodes outside an optional mask carry no value (the support function is `+inf`
/// there); every active value is finite.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportField {
    grid: GridSpec,
    values: Vec<f64>,
    mask: Option<Vec<bool>>,
    pub time: f64,
    pub label: String,
}

impl SupportField {
    pub fn new(grid: GridSpec, values: Vec<f64>, time: f64, label: impl Into<String>) -> Result<Self> {
        Self::with_mask(grid, values, None, time, label)
    }

    pub fn with_mask(
        grid: GridSpec,
        values: Vec<f64>,
        mask: Option<Vec<bool>>,
        time: f64,
        label: impl Into<String>,
    ) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!("expected {} values, got {}", grid.len(), values.len())));
        }
        if let Some(mask) = &mask {
            if mask.len() != grid.len() {
                return Err(Error::InvalidInput("mask length differs from grid".into()));
            }
            if !mask.iter().any(|&a| a) {
                return Err(Error::EmptyInput("mask has no active nodes"));
            }
        }
        let field = Self { grid, values, mask, time, label: label.into() };
        if let Some(idx) = field.active_nodes().find(|&i| !field.values[i].is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value at node {idx}")));
        }
        Ok(field)
    }

    /// Samples a chart function on every node; `+inf` samples become inactive nodes.
    pub fn from_chart_fn(
        grid: GridSpec,
        time: f64,
        label: impl Into<String>,
        f: impl Fn(&[f64]) -> Result<Extended>,
    ) -> Result<Self> {
        let mut values = vec![0.0; grid.len()];
        let mut mask = vec![true; grid.len()];
        for (idx, v) in values.iter_mut().enumerate() {
            match f(&grid.coords(idx))? {
                Extended::Finite(x) => *v = x,
                Extended::PosInf => mask[idx] = false,
            }
        }
        let mask = if mask.iter().all(|&a| a) { None } else { Some(mask) };
        Self::with_mask(grid, values, mask, time, label)
    }

    /// Samples any [`Support`] implementation on the grid.
    pub fn sample<S: Support + ?Sized>(grid: GridSpec, s: &S, time: f64, label: impl Into<String>) -> Result<Self> {
        Self::from_chart_fn(grid, time, label, |y| s.chart_value(y))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    #[inline]
    pub fn value(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    #[inline]
    pub fn is_active(&self, idx: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[idx])
    }

    pub fn active_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.grid.len()).filter(move |&i| self.is_active(i))
    }

    /// Same grid, mask and label with new values and time.
    pub fn with_values(&self, values: Vec<f64>, time: f64) -> Result<Self> {
        Self::with_mask(self.grid.clone(), values, self.mask.clone(), time, self.label.clone())
    }

    /// `max |s|` over active nodes.
    pub fn scale(&self) -> f64 {
        self.active_nodes().map(|i| self.values[i].abs()).fold(0.0, f64::max)
    }

    /// True if the full cube of radius `margin` around `idx` is inside the box
    /// and active.
    pub fn is_interior(&self, idx: usize, margin: usize) -> bool {
        match self.grid.cube_neighbors(idx, margin) {
            None => false,
            Some(nb) => match &self.mask {
                None => true,
                Some(m) => nb.iter().all(|&j| m[j]),
            },
        }
    }

    pub fn interior_nodes(&self, margin: usize) -> Vec<usize> {
        (0..self.grid.len()).filter(|&i| self.is_interior(i, margin)).collect()
    }

    pub(crate) fn require_interior(&self, idx: usize, margin: usize) -> Result<()> {
        if idx < self.grid.len() && self.is_interior(idx, margin) {
            Ok(())
        } else {
            Err(Error::BoundaryNode { node: idx, margin })
        }
    }

    /// Multilinear interpolation at a chart point.
    pub fn interpolate(&self, y: &[f64]) -> Result<f64> {
        let g = &self.grid;
        let n = g.n();
        if y.len() != n || !g.contains(y) {
            return Err(Error::OutOfDomain { point: y.to_vec() });
        }
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for k in 0..n {
            let t = ((y[k] - g.lo()[k]) / g.spacing(k)).clamp(0.0, (g.m() - 1) as f64);
            let i = (t.floor() as usize).min(g.m() - 2);
            base[k] = i;
            frac[k] = t - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut flat = 0;
            for k in 0..n {
                let bit = (corner >> k) & 1;
                w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
                flat += (base[k] + bit) * g.stride(k);
            }
            if w == 0.0 {
                continue;
            }
            if !self.is_active(flat) {
                return Err(Error::OutOfDomain { point: y.to_vec() });
            }
            acc += w * self.values[flat];
        }
        Ok(acc)
    }

    /// Central-difference gradient (needs one cell of margin).
    pub fn gradient(&self, idx: usize) -> Result<DVector<f64>> {
        self.require_interior(idx, 1)?;
        let g = self.grad_unchecked(idx);
        Ok(DVector::from_fn(self.n(), |i, _| g[i]))
    }

    /// Central-difference Hessian (needs one cell of margin).
    pub fn hessian(&self, idx: usize) -> Result<DMatrix<f64>> {
        self.require_interior(idx, 1)?;
        Ok(self.hess_unchecked(idx).to_dmatrix())
    }

    #[inline]
    pub(crate) fn grad_unchecked(&self, idx: usize) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate().take(self.n()) {
            let st = self.grid.stride(k);
            *o = (self.values[idx + st] - self.values[idx - st]) / (2.0 * self.grid.spacing(k));
        }
        out
    }

    /// Second-order central Hessian; mixed entries use the four-point cross.
    #[inline]
    pub(crate) fn hess_unchecked(&self, idx: usize) -> SmallSym {
        let n = self.n();
        let v = &self.values;
        let mut h = SmallSym::zeros(n);
        let c = v[idx];
        for i in 0..n {
            let si = self.grid.stride(i);
            let hi = self.grid.spacing(i);
            h.a[i][i] = (v[idx + si] - 2.0 * c + v[idx - si]) / (hi * hi);
            for j in 0..i {
                let sj = self.grid.stride(j);
                let hj = self.grid.spacing(j);
                let val = (v[idx + si + sj] - v[idx + si - sj] - v[idx - si + sj] + v[idx - si - sj]) / (4.0 * hi * hj);
                h.set(i, j, val);
            }
        }
        h
    }
}

impl Support for SupportField {
    fn dim(&self) -> usize {
        self.n()
    }

    fn chart_value(&self, y: &[f64]) -> Result<Extended> {
        self.interpolate(y).map(Extended::Finite)
    }
}

/// Result of [`convexity_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexityReport {
    pub min_eigenvalue: f64,
    pub min_node: Option<usize>,
    pub tol: f64,
    pub failing: Vec<usize>,
}

impl ConvexityReport {
    pub fn admissible(&self) -> bool {
        self.failing.is_empty()
    }
}

/// Default convexity tolerance, `1e-8 · max|s|`.
pub fn default_convexity_tol(s: &SupportField) -> f64 {
    1e-8 * s.scale()
}

/// Lists interior nodes whose discrete Hessian has min eigenvalue `<= tol`.
///
/// Interior here means the Hessian stencil fits (one cell of margin).
pub fn convexity_check(s: &SupportField, tol: Option<f64>) -> ConvexityReport {
    let tol = tol.unwrap_or_else(|| default_convexity_tol(s));
    let mut min_eigenvalue = f64::INFINITY;
    let mut min_node = None;
    let mut failing = Vec::new();
    for idx in s.interior_nodes(1) {
        let e = s.hess_unchecked(idx).min_eig();
        if e < min_eigenvalue {
            min_eigenvalue = e;
            min_node = Some(idx);
        }
        if e <= tol {
            failing.push(idx);
        }
    }
    ConvexityReport { min_eigenvalue, min_node, tol, failing }
}

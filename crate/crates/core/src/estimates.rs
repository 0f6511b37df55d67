//! Runtime monitors for the a priori estimates along a trajectory:
//! the speed ratio `q = -∂_t s / (s - r/2)`, the Pogorelov quantity on bowl-shaped
//! domains, and the cubic-form decay `|C|² ≤ n(n+2) / (2(t - τ))`.
//! Also the normalization of a section and the piecewise-affine simplex barrier.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::Trajectory;
use crate::invariants::affine_frame;
use crate::support::{Extended, SupportField};

/// `{check, window, sup, pass}` block written next to monitor CSVs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub check: String,
    pub window: [f64; 2],
    pub sup: f64,
    pub pass: bool,
}

fn csv_rows(header: &str, rows: impl Iterator<Item = String>) -> String {
    let mut out = String::new();
    writeln!(out, "{header}").unwrap();
    for r in rows {
        writeln!(out, "{r}").unwrap();
    }
    out
}

/// Subtracts the affine function tangent to the initial frame at `node` from
/// every frame, so that `s(node, t0) = 0` and `∇s(node, t0) = 0`.
pub fn normalize_section(traj: &Trajectory, node: usize) -> Result<Trajectory> {
    let first = traj.frames.first().ok_or(Error::EmptyInput("trajectory frames"))?;
    let grad = first.gradient(node)?;
    let g = first.grid();
    let x = g.coords(node);
    let c = first.value(node);
    let ell: Vec<f64> = (0..g.len())
        .map(|idx| {
            let y = g.coords(idx);
            c + (0..g.n()).map(|k| grad[k] * (y[k] - x[k])).sum::<f64>()
        })
        .collect();
    let frames = traj
        .frames
        .iter()
        .map(|f| {
            let v: Vec<f64> = f
                .values()
                .iter()
                .zip(&ell)
                .enumerate()
                .map(|(i, (a, l))| if f.is_active(i) { a - l } else { *a })
                .collect();
            f.with_values(v, f.time)
        })
        .collect::<Result<_>>()?;
    Ok(Trajectory { frames, dts: traj.dts.clone(), events: traj.events.clone() })
}

/// Spacetime domain `{(y, t) : s(y, t) < level}` sliced at the recorded times.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BowlDomain {
    pub level: f64,
    pub times: Vec<f64>,
    /// Sorted node lists `Ω_t`, one per recorded time.
    pub slices: Vec<Vec<usize>>,
    /// Whether `Ω_{t1} ⊆ Ω_{t2}` held for every consecutive pair.
    pub nested: bool,
}

impl BowlDomain {
    /// Time of the first nonempty slice.
    pub fn t0(&self) -> f64 {
        self.slices.iter().zip(&self.times).find(|(s, _)| !s.is_empty()).map(|(_, &t)| t).unwrap_or(f64::NAN)
    }

    pub fn top(&self) -> f64 {
        *self.times.last().unwrap_or(&f64::NAN)
    }
}

/// Slices a (normalized) trajectory at `level < 0`.
pub fn bowl_domain(traj: &Trajectory, level: f64) -> Result<BowlDomain> {
    if !(level < 0.0) {
        return Err(Error::InvalidInput(format!("bowl level must be negative, got {level}")));
    }
    let mut times = Vec::new();
    let mut slices: Vec<Vec<usize>> = Vec::new();
    for f in &traj.frames {
        times.push(f.time);
        slices.push(f.active_nodes().filter(|&i| f.value(i) < level).collect());
    }
    if slices.iter().all(|s| s.is_empty()) {
        return Err(Error::EmptyBowl(level));
    }
    let nested = slices.windows(2).all(|w| {
        let later: std::collections::HashSet<_> = w[1].iter().collect();
        w[0].iter().all(|i| later.contains(i))
    });
    Ok(BowlDomain { level, times, slices, nested })
}

/// Pogorelov quantity per slice.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PogorelovReport {
    pub beta: Vec<f64>,
    pub level: f64,
    pub times: Vec<f64>,
    /// `max w` over the slice (0 for empty slices).
    pub max_w: Vec<f64>,
    pub argmax: Vec<Option<usize>>,
    /// Max of `w` over the discrete parabolic boundary of each slice.
    pub boundary_max: Vec<f64>,
    pub overall_max: f64,
    pub overall_time: f64,
    pub overall_node: Option<usize>,
    /// The spacetime maximum sits at a node whose whole neighborhood lies in its slice.
    pub interior_attained: bool,
}

impl PogorelovReport {
    pub fn to_csv(&self) -> String {
        csv_rows(
            "t,max_w,node,boundary_max",
            self.times.iter().enumerate().map(|(k, t)| {
                format!(
                    "{t:.12e},{:.12e},{},{:.12e}",
                    self.max_w[k],
                    self.argmax[k].map_or(-1, |v| v as i64),
                    self.boundary_max[k]
                )
            }),
        )
    }
}

fn pogorelov_w(f: &SupportField, idx: usize, level: f64, beta: &DVector<f64>) -> Result<f64> {
    let depth = (level - f.value(idx)).max(0.0);
    if depth == 0.0 {
        return Ok(0.0);
    }
    let h = f.hessian(idx)?;
    let gb = f.gradient(idx)?.dot(beta);
    Ok(depth * (beta.transpose() * h * beta)[(0, 0)] * (0.5 * gb * gb).exp())
}

/// `w = (level - s)_+ · βᵀ D²s β · exp(½ ⟨∇s, β⟩²)` over each bowl slice.
pub fn pogorelov_monitor(traj: &Trajectory, bowl: &BowlDomain, beta: &[f64]) -> Result<PogorelovReport> {
    let norm = beta.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!("beta must be a unit vector, |beta| = {norm}")));
    }
    if bowl.slices.iter().all(|s| s.is_empty()) {
        return Err(Error::EmptyBowl(bowl.level));
    }
    let bv = DVector::from_column_slice(beta);
    let mut rep = PogorelovReport {
        beta: beta.to_vec(),
        level: bowl.level,
        times: bowl.times.clone(),
        max_w: Vec::new(),
        argmax: Vec::new(),
        boundary_max: Vec::new(),
        overall_max: 0.0,
        overall_time: f64::NAN,
        overall_node: None,
        interior_attained: false,
    };
    for (f, slice) in traj.frames.iter().zip(&bowl.slices) {
        let g = f.grid();
        let in_slice: std::collections::HashSet<usize> = slice.iter().copied().collect();
        let mut best = (0.0f64, None);
        for &idx in slice {
            if !f.is_interior(idx, 1) {
                return Err(Error::BoundaryNode { node: idx, margin: 1 });
            }
            let w = pogorelov_w(f, idx, bowl.level, &bv)?;
            if w > best.0 {
                best = (w, Some(idx));
            }
        }
        // discrete parabolic boundary: neighbors of the slice outside it
        let mut bmax: f64 = 0.0;
        for &idx in slice {
            for nb in g.cube_neighbors(idx, 1).unwrap_or_default() {
                if !in_slice.contains(&nb) && f.is_interior(nb, 1) {
                    bmax = bmax.max(pogorelov_w(f, nb, bowl.level, &bv)?);
                }
            }
        }
        if best.0 > rep.overall_max {
            rep.overall_max = best.0;
            rep.overall_time = f.time;
            rep.overall_node = best.1;
            rep.interior_attained = best
                .1
                .is_some_and(|i| g.cube_neighbors(i, 1).is_some_and(|nb| nb.iter().all(|j| in_slice.contains(j))));
        }
        rep.max_w.push(best.0);
        rep.argmax.push(best.1);
        rep.boundary_max.push(bmax);
    }
    Ok(rep)
}

/// Speed ratio along a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpeedReport {
    pub r_floor: f64,
    pub window: [f64; 2],
    pub times: Vec<f64>,
    /// `Q(t) = max q` over monitored nodes.
    pub q_max: Vec<f64>,
    pub q_min: Vec<f64>,
    /// `t^{n/(2n+2)} Q(t)`.
    pub bound_profile: Vec<f64>,
    /// `min(1, t^{n/(2n+2)}) Q(t)`.
    pub capped_profile: Vec<f64>,
    pub sup_capped: f64,
}

impl SpeedReport {
    pub fn to_csv(&self) -> String {
        csv_rows(
            "t,Q,q_min,bound_profile,capped_profile",
            (0..self.times.len()).map(|k| {
                format!(
                    "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                    self.times[k], self.q_max[k], self.q_min[k], self.bound_profile[k], self.capped_profile[k]
                )
            }),
        )
    }

    pub fn verdict(&self, reference_sup: f64, rel_tol: f64) -> Verdict {
        let pass = self.sup_capped.is_finite()
            && ((self.sup_capped - reference_sup) / reference_sup).abs() <= rel_tol
            && self.q_min.iter().all(|&q| q > 0.0);
        Verdict { check: "speed_profile".into(), window: self.window, sup: self.sup_capped, pass }
    }
}

/// Weights of the three-point Lagrange derivative at frame `k`, using its
/// neighbors (or the first/last three frames at the ends).
fn time_derivative_weights(frames: &[SupportField], k: usize) -> Result<Vec<(usize, f64)>> {
    let len = frames.len();
    let ids: Vec<usize> = if len == 2 {
        vec![0, 1]
    } else {
        let lo = k.saturating_sub(1).min(len - 3);
        vec![lo, lo + 1, lo + 2]
    };
    let t: Vec<f64> = ids.iter().map(|&j| frames[j].time).collect();
    if t.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("frame times must increase strictly".into()));
    }
    let x = frames[k].time;
    let w = (0..ids.len())
        .map(|j| {
            let denom: f64 = (0..ids.len()).filter(|&l| l != j).map(|l| t[j] - t[l]).product();
            let numer: f64 = (0..ids.len())
                .filter(|&m| m != j)
                .map(|m| (0..ids.len()).filter(|&l| l != j && l != m).map(|l| x - t[l]).product::<f64>())
                .sum();
            (ids[j], numer / denom)
        })
        .collect();
    Ok(w)
}

/// `q = (-∂_t s/ρ) / (s/ρ - r_floor/2)` on unit normals `Y/ρ`, `ρ = √(1+|y|²)`,
/// for frames with time in `window`. Time derivatives are three-point Lagrange
/// differences over neighboring frames.
pub fn speed_monitor(traj: &Trajectory, r_floor: f64, window: [f64; 2]) -> Result<SpeedReport> {
    if !(r_floor > 0.0) {
        return Err(Error::InvalidInput(format!("r_floor must be positive, got {r_floor}")));
    }
    let frames = &traj.frames;
    if frames.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: frames.len() });
    }
    let n = frames[0].n() as f64;
    let nodes = frames[0].interior_nodes(1);
    let g = frames[0].grid().clone();
    let rho: Vec<f64> = nodes.iter().map(|&i| (1.0 + g.coords(i).iter().map(|v| v * v).sum::<f64>()).sqrt()).collect();
    let mut rep = SpeedReport {
        r_floor,
        window,
        times: Vec::new(),
        q_max: Vec::new(),
        q_min: Vec::new(),
        bound_profile: Vec::new(),
        capped_profile: Vec::new(),
        sup_capped: 0.0,
    };
    for k in 0..frames.len() {
        let f = &frames[k];
        if f.time < window[0] || f.time > window[1] {
            continue;
        }
        let w = time_derivative_weights(frames, k)?;
        let (mut qmax, mut qmin) = (f64::NEG_INFINITY, f64::INFINITY);
        for (&idx, &r) in nodes.iter().zip(&rho) {
            let unit = f.value(idx) / r;
            if unit < r_floor {
                return Err(Error::FloorViolated { node: idx, t: f.time, value: unit, floor: r_floor });
            }
            let dsdt = w.iter().map(|&(j, c)| c * frames[j].value(idx)).sum::<f64>() / r;
            let q = -dsdt / (unit - 0.5 * r_floor);
            qmax = qmax.max(q);
            qmin = qmin.min(q);
        }
        let weight = f.time.max(0.0).powf(n / (2.0 * n + 2.0));
        rep.times.push(f.time);
        rep.q_max.push(qmax);
        rep.q_min.push(qmin);
        rep.bound_profile.push(weight * qmax);
        rep.capped_profile.push(weight.min(1.0) * qmax);
    }
    if rep.times.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    rep.sup_capped = rep.capped_profile.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(rep)
}

/// Default slack on the cubic-form decay bound.
pub const TOL_C: f64 = 0.15;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CubicDecayReport {
    pub tau: f64,
    pub window: [f64; 2],
    pub tol: f64,
    pub times: Vec<f64>,
    /// `2 (t - τ) max |C|² / (n (n+2))`.
    pub ratio: Vec<f64>,
    pub argmax: Vec<usize>,
    pub max_ratio: f64,
    pub pass: bool,
}

impl CubicDecayReport {
    pub fn to_csv(&self) -> String {
        csv_rows(
            "t,ratio,node",
            (0..self.times.len()).map(|k| format!("{:.12e},{:.12e},{}", self.times[k], self.ratio[k], self.argmax[k])),
        )
    }

    pub fn verdict(&self) -> Verdict {
        Verdict { check: "cubic_decay".into(), window: self.window, sup: self.max_ratio, pass: self.pass }
    }
}

/// Predicate on chart coordinates selecting monitored nodes.
pub type Region<'a> = dyn Fn(&[f64]) -> bool + 'a;

/// Ratio series over frames with time in `window`; nodes need two cells of
/// margin and, if given, must satisfy `region`.
pub fn cubic_decay_monitor(
    traj: &Trajectory,
    tau: f64,
    window: [f64; 2],
    tol: f64,
    region: Option<&Region<'_>>,
) -> Result<CubicDecayReport> {
    let mut rep = CubicDecayReport {
        tau,
        window,
        tol,
        times: Vec::new(),
        ratio: Vec::new(),
        argmax: Vec::new(),
        max_ratio: 0.0,
        pass: true,
    };
    for f in &traj.frames {
        if f.time < window[0] || f.time > window[1] {
            continue;
        }
        if f.time <= tau {
            return Err(Error::InvalidInput(format!("frame time {} not after tau {tau}", f.time)));
        }
        let g = f.grid();
        let n = g.n() as f64;
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for idx in f.interior_nodes(2) {
            if let Some(pred) = region {
                if !pred(&g.coords(idx)) {
                    continue;
                }
            }
            let c2 = affine_frame(f, idx)?.cubic_norm2;
            if c2 > best.0 {
                best = (c2, idx);
            }
        }
        if best.1 == usize::MAX {
            return Err(Error::EmptyInput("monitored nodes for the cubic form"));
        }
        rep.times.push(f.time);
        rep.ratio.push(2.0 * (f.time - tau) * best.0 / (n * (n + 2.0)));
        rep.argmax.push(best.1);
    }
    if rep.times.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    rep.max_ratio = rep.ratio.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    rep.pass = rep.max_ratio <= 1.0 + tol;
    Ok(rep)
}

/// Piecewise-affine upper barrier: on the simplex `S_j = hull(x, p_k : k ≠ j)` it is
/// the affine `P_j` with `P_j(x) = 0` and `P_j(p_k) = C'`; `+inf` outside every `S_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexBarrier {
    pub x: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub c_prime: f64,
    /// `P_j(y) = slopes[j] · (y - x)`.
    slopes: Vec<DVector<f64>>,
    /// Inverse of the edge matrix `[p_k - x]_{k≠j}` of `S_j`.
    inv_edges: Vec<DMatrix<f64>>,
}

pub fn simplex_barrier(x: &[f64], points: &[Vec<f64>], c_prime: f64) -> Result<SimplexBarrier> {
    let n = x.len();
    if points.len() != n + 1 || points.iter().any(|p| p.len() != n) {
        return Err(Error::DegenerateSimplex(format!("need {} points in R^{n}", n + 1)));
    }
    let xv = DVector::from_column_slice(x);
    let mut slopes = Vec::new();
    let mut inv_edges = Vec::new();
    for j in 0..=n {
        let cols: Vec<DVector<f64>> =
            (0..=n).filter(|&k| k != j).map(|k| DVector::from_column_slice(&points[k]) - &xv).collect();
        let e = DMatrix::from_columns(&cols);
        let inv = e
            .clone()
            .try_inverse()
            .filter(|_| e.determinant().abs() > 1e-14)
            .ok_or_else(|| Error::DegenerateSimplex(format!("simplex {j} is flat")))?;
        // slope·(p_k - x) = C' for each k ≠ j
        let slope = inv.transpose() * DVector::from_element(n, c_prime);
        slopes.push(slope);
        inv_edges.push(inv);
    }
    let b = simplex_barrier_unchecked(x, points, c_prime, slopes, inv_edges);
    if b.value(x) != Extended::Finite(0.0) || !b.contains_strictly(x) {
        return Err(Error::DegenerateSimplex("x must lie strictly inside the hull of the points".into()));
    }
    Ok(b)
}

fn simplex_barrier_unchecked(
    x: &[f64],
    points: &[Vec<f64>],
    c_prime: f64,
    slopes: Vec<DVector<f64>>,
    inv_edges: Vec<DMatrix<f64>>,
) -> SimplexBarrier {
    SimplexBarrier { x: x.to_vec(), points: points.to_vec(), c_prime, slopes, inv_edges }
}

impl SimplexBarrier {
    fn weights(&self, j: usize, y: &[f64]) -> DVector<f64> {
        let d = DVector::from_iterator(y.len(), y.iter().zip(&self.x).map(|(a, b)| a - b));
        &self.inv_edges[j] * d
    }

    /// Whether `x` lies strictly inside the hull, tested through the simplex barycentrics.
    fn contains_strictly(&self, y: &[f64]) -> bool {
        // x is interior iff -Σ_k (p_k - x) weights are all positive for some affine combination;
        // equivalently the point x + ε(c - x) toward the centroid c is in every S_j's union
        // and no p_j is on the same side. Check barycentric weights of x in the full hull.
        let n = y.len();
        let mut m = DMatrix::zeros(n + 1, n + 1);
        for (k, p) in self.points.iter().enumerate() {
            for i in 0..n {
                m[(i, k)] = p[i];
            }
            m[(n, k)] = 1.0;
        }
        let mut rhs = DVector::from_element(n + 1, 1.0);
        rhs.rows_mut(0, n).copy_from_slice(y);
        m.try_inverse().map(|inv| (inv * rhs).iter().all(|&w| w > 1e-12)).unwrap_or(false)
    }

    /// `P(y) = min_j P_j(y)` with `P_j = +inf` off `S_j`.
    pub fn value(&self, y: &[f64]) -> Extended {
        let tol = 1e-12;
        let mut best = Extended::PosInf;
        for j in 0..self.slopes.len() {
            let w = self.weights(j, y);
            if w.iter().all(|&v| v >= -tol) && w.sum() <= 1.0 + tol {
                let v: f64 = self.slopes[j].iter().zip(y.iter().zip(&self.x)).map(|(s, (a, b))| s * (a - b)).sum();
                best = match best {
                    Extended::Finite(b) => Extended::Finite(b.min(v)),
                    Extended::PosInf => Extended::Finite(v),
                };
            }
        }
        best
    }

    /// `min (P - s)` over active nodes of `s` where `P` is finite; nonnegative
    /// means the barrier dominates.
    pub fn dominance_margin(&self, s: &SupportField) -> Result<f64> {
        let g = s.grid();
        let mut margin = f64::INFINITY;
        let mut any = false;
        for idx in s.active_nodes() {
            if let Extended::Finite(p) = self.value(&g.coords(idx)) {
                any = true;
                margin = margin.min(p - s.value(idx));
            }
        }
        if !any {
            return Err(Error::EmptyInput("grid nodes inside the barrier hull"));
        }
        Ok(margin)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{evolve, Boundary, DtPolicy, FlowConfig};
    use crate::solitons::{sphere_extinction_time, SolitonOracle};
    use crate::support::GridSpec;

    fn paraboloid_traj(n: usize, m: usize, t_end: f64, every: usize) -> Trajectory {
        let o = SolitonOracle::paraboloid(n);
        let g = GridSpec::cube(n, -1.0, 1.0, m).unwrap();
        let mut cfg = FlowConfig::new(DtPolicy::Adaptive { cfl: 0.4 }, t_end, Boundary::Oracle { oracle: o.clone() });
        cfg.record_every = every;
        evolve(&o.field(&g, 0.0).unwrap(), &cfg).unwrap()
    }

    #[test]
    fn normalization_examples() {
        let tr = paraboloid_traj(2, 17, 0.1, 2);
        let center = tr.frames[0].grid().index(&[8, 8]);
        let norm = normalize_section(&tr, center).unwrap();
        assert!(norm
            .frames
            .iter()
            .zip(&tr.frames)
            .all(|(a, b)| { a.values().iter().zip(b.values()).all(|(x, y)| (x - y).abs() < 1e-15) }));
        let off = tr.frames[0].grid().index(&[5, 11]);
        let once = normalize_section(&tr, off).unwrap();
        let twice = normalize_section(&once, off).unwrap();
        assert!(once
            .frames
            .iter()
            .zip(&twice.frames)
            .all(|(a, b)| { a.values().iter().zip(b.values()).all(|(x, y)| (x - y).abs() < 1e-14) }));
        assert!(once.frames[0].value(off).abs() < 1e-15);
        assert!(once.frames[0].gradient(off).unwrap().amax() < 1e-12);
        for (a, b) in once.frames.iter().zip(&tr.frames) {
            for idx in a.interior_nodes(1) {
                assert!((a.hessian(idx).unwrap() - b.hessian(idx).unwrap()).amax() < 1e-9);
            }
        }
        assert!(matches!(normalize_section(&tr, 0), Err(Error::BoundaryNode { .. })));
    }

    #[test]
    fn paraboloid_bowl_and_pogorelov() {
        let tr = paraboloid_traj(2, 33, 0.4, 20);
        let bowl = bowl_domain(&tr, -0.1).unwrap();
        assert!(bowl.nested);
        for (t, slice) in bowl.times.iter().zip(&bowl.slices) {
            let g = tr.frames[0].grid();
            for idx in 0..g.len() {
                let y = g.coords(idx);
                let exact = 0.5 * (y[0] * y[0] + y[1] * y[1]) - t;
                if (exact + 0.1).abs() < 1e-9 {
                    continue;
                }
                let inside = exact < -0.1;
                assert_eq!(inside, slice.binary_search(&idx).is_ok());
            }
        }
        assert!(matches!(bowl_domain(&tr, -5.0), Err(Error::EmptyBowl(_))));
        let rep = pogorelov_monitor(&tr, &bowl, &[1.0, 0.0]).unwrap();
        assert!(rep.boundary_max.iter().all(|&b| b == 0.0));
        assert!(rep.overall_max > 0.0 && rep.overall_max.is_finite());
        // closed form: w = (level - s) exp(y1²/2) at the last frame
        let last = tr.last();
        let k = rep.times.len() - 1;
        let g = last.grid();
        let expect = bowl.slices[k]
            .iter()
            .map(|&i| {
                let y = g.coords(i);
                (-0.1 - last.value(i)) * (0.5 * y[0] * y[0]).exp()
            })
            .fold(0.0, f64::max);
        assert!((rep.max_w[k] - expect).abs() < 1e-9);
        assert!(rep.to_csv().starts_with("t,max_w"));
    }

    #[test]
    fn lagrange_weights_are_exact_on_quadratics() {
        let g = GridSpec::cube(1, -1.0, 1.0, 9).unwrap();
        let times = [0.0, 0.1, 0.35, 0.4, 1.0];
        let frames: Vec<SupportField> = times
            .iter()
            .map(|&t| SupportField::new(g.clone(), vec![3.0 * t * t - t + 2.0; 9], t, "q").unwrap())
            .collect();
        for k in 0..frames.len() {
            let w = time_derivative_weights(&frames, k).unwrap();
            let d: f64 = w.iter().map(|&(j, c)| c * frames[j].value(0)).sum();
            assert!((d - (6.0 * times[k] - 1.0)).abs() < 1e-12, "{k}: {d}");
        }
    }

    #[test]
    fn sphere_speed_examples() {
        let o = SolitonOracle::sphere(2, 1.0);
        let g = GridSpec::cube(2, -1.0, 1.0, 33).unwrap();
        let mut cfg = FlowConfig::new(DtPolicy::Fixed { dt: 1e-5 }, 0.01, Boundary::Oracle { oracle: o.clone() });
        cfg.record_every = 1;
        let mut tr = evolve(&o.field(&g, 0.0).unwrap(), &cfg).unwrap();
        tr.frames.truncate(4);
        // r_floor = 1 at t = 0 gives q = 1/(1 - 1/2) = 2
        let rep = speed_monitor(&tr, 1.0, [0.0, 0.0]).unwrap();
        assert!((rep.q_max[0] - 2.0).abs() < 1e-2, "{}", rep.q_max[0]);
        assert!((rep.q_max[0] - rep.q_min[0]).abs() < 1e-2);
        assert!(matches!(speed_monitor(&tr, 2.5, [0.0, 1.0]), Err(Error::FloorViolated { .. })));
        let _ = sphere_extinction_time(2, 1.0);
    }

    #[test]
    fn cubic_decay_on_quadrics_and_time_shift() {
        let tr = paraboloid_traj(2, 17, 0.2, 5);
        let rep = cubic_decay_monitor(&tr, 0.0, [0.02, 0.2], TOL_C, None).unwrap();
        assert!(rep.max_ratio < 1e-12 && rep.pass);
        let shifted = cubic_decay_monitor(&tr, 0.01, [0.05, 0.2], TOL_C, None).unwrap();
        assert_eq!(shifted.tau, 0.01);
        assert!(cubic_decay_monitor(&tr, 0.1, [0.0, 0.2], TOL_C, None).is_err());

        // the ratio uses t - τ: the Calabi oracle has constant ratio 1/3 on its own clock
        let o = SolitonOracle::calabi_orthant(2);
        let g = GridSpec::cube(2, -1.5, -0.5, 65).unwrap();
        let frames = [0.5, 1.0].iter().map(|&t| o.field(&g, t).unwrap()).collect();
        let tr = Trajectory { frames, dts: vec![], events: vec![] };
        let r0 = cubic_decay_monitor(&tr, 0.0, [0.0, 2.0], TOL_C, None).unwrap();
        for r in &r0.ratio {
            assert!((r - 1.0 / 3.0).abs() < 5e-3, "{r}");
        }
        let r1 = cubic_decay_monitor(&tr, 0.25, [0.0, 2.0], TOL_C, None).unwrap();
        assert!((r1.ratio[0] - 0.5 * r0.ratio[0]).abs() < 1e-12);
    }

    #[test]
    fn simplex_barrier_examples() {
        let b = simplex_barrier(&[0.0], &[vec![-1.0], vec![1.0]], 1.0).unwrap();
        for y in [-1.0, -0.3, 0.0, 0.6, 1.0] {
            assert!((b.value(&[y]).finite().unwrap() - f64::abs(y)).abs() < 1e-15);
        }
        assert_eq!(b.value(&[1.5]), Extended::PosInf);

        let pts = vec![vec![-1.0, -1.0], vec![1.5, -0.5], vec![-0.3, 1.2]];
        let x = [0.05, -0.1];
        let b = simplex_barrier(&x, &pts, 2.0).unwrap();
        assert_eq!(b.value(&x), Extended::Finite(0.0));
        for p in &pts {
            assert!((b.value(p).finite().unwrap() - 2.0).abs() < 1e-12);
        }
        // a convex field with s(x) = 0, ∇s(x) = 0 and s ≤ C' on the hull is dominated
        let g = GridSpec::cube(2, -1.0, 1.2, 45).unwrap();
        let s = SupportField::from_chart_fn(g, 0.0, "bump", |y| {
            let d = [y[0] - x[0], y[1] - x[1]];
            Ok(Extended::Finite(0.3 * (d[0] * d[0] + d[1] * d[1])))
        })
        .unwrap();
        let mg = b.dominance_margin(&s).unwrap();
        assert!(mg >= -1e-12, "{mg}");
        assert!(matches!(
            simplex_barrier(&[0.0, 0.0], &[vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]], 1.0),
            Err(Error::DegenerateSimplex(_))
        ));
        assert!(matches!(simplex_barrier(&[5.0], &[vec![-1.0], vec![1.0]], 1.0), Err(Error::DegenerateSimplex(_))));
    }
}

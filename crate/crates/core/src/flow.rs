//! Explicit time stepping of `∂_t s = -(det D²s)^{-1/(n+2)}` on a chart grid,
//! comparison monitoring, and exhaustion of noncompact bodies.
//!
//! Nodes at least `band` cells from the box faces and from the mask edge are
//! updated by forward Euler; every other active node carries Dirichlet data.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solitons::SolitonOracle;
use crate::support::{support_of_polytope, GridSpec, NoncompactBodySpec, SupportField};

/// Time step selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum DtPolicy {
    Fixed {
        dt: f64,
    },
    /// `dt = cfl · h² · min (λ_min / (n · (det D²s)^{-1/(n+2)}))` over updated nodes.
    Adaptive {
        cfl: f64,
    },
}

/// Dirichlet data on the non-updated nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Boundary {
    /// Closed-form solution evaluated at the new time.
    Oracle { oracle: SolitonOracle },
    /// The same value at every boundary node for all times.
    Constant { value: f64 },
    /// Values of the initial field, held fixed.
    Frozen,
}

fn default_true() -> bool {
    true
}

fn default_one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub dt_policy: DtPolicy,
    /// Absolute final time (the initial field carries its own start time).
    pub t_end: f64,
    pub boundary: Boundary,
    #[serde(default = "default_true")]
    pub convexity_guard: bool,
    /// Record a frame every this many steps; 0 records only `record_times` and the end.
    #[serde(default)]
    pub record_every: usize,
    /// Times hit exactly and recorded.
    #[serde(default)]
    pub record_times: Vec<f64>,
    /// Cells of margin required for a node to be updated.
    #[serde(default = "default_one")]
    pub band: usize,
    #[serde(default)]
    pub parallel: bool,
}

impl FlowConfig {
    pub fn new(dt_policy: DtPolicy, t_end: f64, boundary: Boundary) -> Self {
        Self {
            dt_policy,
            t_end,
            boundary,
            convexity_guard: true,
            record_every: 0,
            record_times: Vec::new(),
            band: 1,
            parallel: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.dt_policy {
            DtPolicy::Fixed { dt } if !(dt > 0.0 && dt.is_finite()) => {
                return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
            }
            DtPolicy::Adaptive { cfl } if !(cfl > 0.0 && cfl <= 0.5) => {
                return Err(Error::InvalidInput(format!("cfl factor must lie in (0, 0.5], got {cfl}")));
            }
            _ => {}
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidInput(format!("t_end must be positive, got {}", self.t_end)));
        }
        if self.band == 0 {
            return Err(Error::InvalidInput("band must be at least 1".into()));
        }
        if self.record_times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput("record times must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum FlowEvent {
    /// Step size chosen by the adaptive rule and the node that limited it.
    AdaptiveDt {
        step: usize,
        t: f64,
        dt: f64,
        node: usize,
    },
    /// Convexity guard tripped; the step was retried with half the size.
    Rejected {
        step: usize,
        t: f64,
        dt: f64,
        min_eig: f64,
        node: usize,
    },
    Aborted {
        step: usize,
        t: f64,
        reason: String,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub frames: Vec<SupportField>,
    pub dts: Vec<f64>,
    pub events: Vec<FlowEvent>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.time).collect()
    }

    pub fn last(&self) -> &SupportField {
        self.frames.last().expect("trajectory holds the initial frame")
    }

    /// Frame recorded at time `t` (within `1e-12` relative).
    pub fn frame_at(&self, t: f64) -> Option<&SupportField> {
        self.frames.iter().find(|f| (f.time - t).abs() <= 1e-12 * t.abs().max(1.0))
    }

    pub fn rejections(&self) -> usize {
        self.events.iter().filter(|e| matches!(e, FlowEvent::Rejected { .. })).count()
    }
}

/// A run that stopped early; `partial` holds everything computed before the failure.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowAbort {
    pub error: Error,
    pub partial: Trajectory,
}

impl From<FlowAbort> for Error {
    fn from(a: FlowAbort) -> Self {
        a.error
    }
}

/// Node classification and stencil constants for one grid and mask.
struct Plan {
    n: usize,
    update: Vec<usize>,
    boundary: Vec<usize>,
    stride: [usize; 3],
    inv_h2: [f64; 3],
    inv_4hh: [[f64; 3]; 3],
    h2_min: f64,
}

impl Plan {
    fn new(s: &SupportField, band: usize) -> Self {
        let g = s.grid();
        let n = g.n();
        let mut update = Vec::new();
        let mut boundary = Vec::new();
        for idx in s.active_nodes() {
            if s.is_interior(idx, band) {
                update.push(idx);
            } else {
                boundary.push(idx);
            }
        }
        let mut stride = [0; 3];
        let mut inv_h2 = [0.0; 3];
        let mut inv_4hh = [[0.0; 3]; 3];
        for i in 0..n {
            stride[i] = g.stride(i);
            inv_h2[i] = 1.0 / (g.spacing(i) * g.spacing(i));
            for j in 0..n {
                inv_4hh[i][j] = 1.0 / (4.0 * g.spacing(i) * g.spacing(j));
            }
        }
        Self { n, update, boundary, stride, inv_h2, inv_4hh, h2_min: g.h_min() * g.h_min() }
    }

    /// Speed `D^{-1/(n+2)}` and smallest Hessian eigenvalue at a node.
    #[inline]
    fn local(&self, v: &[f64], idx: usize) -> (f64, f64) {
        let c = v[idx];
        match self.n {
            1 => {
                let s = self.stride[0];
                let a = (v[idx + s] - 2.0 * c + v[idx - s]) * self.inv_h2[0];
                (a.powf(-1.0 / 3.0), a)
            }
            2 => {
                let (s0, s1) = (self.stride[0], self.stride[1]);
                let a = (v[idx + s0] - 2.0 * c + v[idx - s0]) * self.inv_h2[0];
                let d = (v[idx + s1] - 2.0 * c + v[idx - s1]) * self.inv_h2[1];
                let b =
                    (v[idx + s0 + s1] - v[idx + s0 - s1] - v[idx - s0 + s1] + v[idx - s0 - s1]) * self.inv_4hh[0][1];
                let det = a * d - b * b;
                let half_tr = 0.5 * (a + d);
                let disc = (0.25 * (a - d) * (a - d) + b * b).sqrt();
                (1.0 / det.sqrt().sqrt(), half_tr - disc)
            }
            _ => {
                let mut h = crate::linalg::SmallSym::zeros(3);
                for i in 0..3 {
                    let si = self.stride[i];
                    h.a[i][i] = (v[idx + si] - 2.0 * c + v[idx - si]) * self.inv_h2[i];
                    for j in 0..i {
                        let sj = self.stride[j];
                        let val = (v[idx + si + sj] - v[idx + si - sj] - v[idx - si + sj] + v[idx - si - sj])
                            * self.inv_4hh[i][j];
                        h.set(i, j, val);
                    }
                }
                (h.det().powf(-0.2), h.min_eig())
            }
        }
    }
}

/// Speeds at updated nodes plus the convexity and step-size diagnostics.
struct Rates {
    speed: Vec<f64>,
    min_eig: f64,
    min_node: usize,
    /// `min λ_min / (n · speed)` and where it is attained.
    dt_scale: f64,
    dt_node: usize,
}

fn rates(s: &SupportField, plan: &Plan, parallel: bool) -> Rates {
    let v = s.values();
    let local: Vec<(f64, f64)> = if parallel {
        plan.update.par_iter().map(|&i| plan.local(v, i)).collect()
    } else {
        plan.update.iter().map(|&i| plan.local(v, i)).collect()
    };
    let mut out = Rates {
        speed: Vec::with_capacity(local.len()),
        min_eig: f64::INFINITY,
        min_node: usize::MAX,
        dt_scale: f64::INFINITY,
        dt_node: usize::MAX,
    };
    let nf = plan.n as f64;
    // sequential reduction keeps ties on the lowest node index
    for (&idx, &(speed, lam)) in plan.update.iter().zip(&local) {
        out.speed.push(speed);
        if lam < out.min_eig {
            out.min_eig = lam;
            out.min_node = idx;
        }
        let scale = lam / (nf * speed);
        if scale < out.dt_scale {
            out.dt_scale = scale;
            out.dt_node = idx;
        }
    }
    out
}

/// Boundary data resolved against a plan; oracle values use the separated form
/// `f(t) P(y) + Q(y)` with `P, Q` cached per node.
enum BoundaryData<'a> {
    Keep,
    Constant(f64),
    Oracle { oracle: &'a SolitonOracle, pq: Vec<(f64, f64)> },
}

impl<'a> BoundaryData<'a> {
    fn new(s: &SupportField, plan: &Plan, boundary: &'a Boundary) -> Result<Self> {
        Ok(match boundary {
            Boundary::Frozen => BoundaryData::Keep,
            Boundary::Constant { value } => BoundaryData::Constant(*value),
            Boundary::Oracle { oracle } => {
                if oracle.n != s.n() {
                    return Err(Error::InvalidInput("boundary oracle dimension differs from field".into()));
                }
                let g = s.grid();
                let mut pq = Vec::with_capacity(plan.boundary.len());
                for &idx in &plan.boundary {
                    let mut big_y = g.coords(idx);
                    big_y.push(-1.0);
                    pq.push(oracle.split(&big_y)?.ok_or(Error::InfiniteBoundary { node: idx })?);
                }
                BoundaryData::Oracle { oracle, pq }
            }
        })
    }

    fn apply(&self, plan: &Plan, t_new: f64, out: &mut [f64]) -> Result<()> {
        match self {
            BoundaryData::Keep => {}
            BoundaryData::Constant(value) => {
                for &idx in &plan.boundary {
                    out[idx] = *value;
                }
            }
            BoundaryData::Oracle { oracle, pq } => {
                let f = oracle.time_factor(t_new)?;
                for (&idx, &(p, q)) in plan.boundary.iter().zip(pq) {
                    out[idx] = f * p + q;
                }
            }
        }
        Ok(())
    }
}

fn advance(
    s: &SupportField,
    plan: &Plan,
    r: &Rates,
    dt: f64,
    t_new: f64,
    bd: &BoundaryData<'_>,
) -> Result<SupportField> {
    let mut values = s.values().to_vec();
    for (&idx, &speed) in plan.update.iter().zip(&r.speed) {
        values[idx] -= dt * speed;
    }
    bd.apply(plan, t_new, &mut values)?;
    s.with_values(values, t_new)
}

fn require_convex(plan: &Plan, r: &Rates) -> Result<()> {
    if plan.update.is_empty() {
        return Err(Error::EmptyInput("nodes to update"));
    }
    if !(r.min_eig > 0.0) || r.speed.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateHessian { node: r.min_node, det: f64::NAN });
    }
    Ok(())
}

/// One forward Euler step: `s' = s - dt (det D²s)^{-1/(n+2)}` on nodes with one
/// cell of margin, boundary data at `time + dt` elsewhere.
pub fn step(s: &SupportField, dt: f64, boundary: &Boundary) -> Result<SupportField> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let plan = Plan::new(s, 1);
    let r = rates(s, &plan, false);
    require_convex(&plan, &r)?;
    let bd = BoundaryData::new(s, &plan, boundary)?;
    advance(s, &plan, &r, dt, s.time + dt, &bd)
}

/// Largest number of consecutive halvings after a guard trip.
pub const MAX_HALVINGS: usize = 10;

/// Integrates from `s0.time` to `cfg.t_end`.
pub fn evolve(s0: &SupportField, cfg: &FlowConfig) -> std::result::Result<Trajectory, FlowAbort> {
    let mut traj = Trajectory { frames: vec![s0.clone()], dts: Vec::new(), events: Vec::new() };
    let fail = |traj: Trajectory, error: Error| FlowAbort { error, partial: traj };
    if let Err(e) = cfg.validate() {
        return Err(fail(traj, e));
    }
    if cfg.t_end <= s0.time {
        return Err(fail(traj, Error::InvalidInput(format!("t_end {} not after start {}", cfg.t_end, s0.time))));
    }
    let plan = Plan::new(s0, cfg.band);
    let mut stops: Vec<f64> = cfg.record_times.iter().copied().filter(|&t| t > s0.time && t < cfg.t_end).collect();
    stops.sort_by(f64::total_cmp);
    stops.dedup();
    stops.push(cfg.t_end);

    let bd = match BoundaryData::new(s0, &plan, &cfg.boundary) {
        Ok(b) => b,
        Err(e) => return Err(fail(traj, e)),
    };
    let mut cur = s0.clone();
    let mut r = rates(&cur, &plan, cfg.parallel);
    if let Err(e) = require_convex(&plan, &r) {
        return Err(fail(traj, e));
    }
    let mut step_no = 0usize;
    let mut last_logged_dt = 0.0;
    let mut halving = 0usize;
    for &stop in &stops {
        while cur.time < stop {
            let base_dt = match cfg.dt_policy {
                DtPolicy::Fixed { dt } => dt,
                DtPolicy::Adaptive { cfl } => {
                    let dt = cfl * plan.h2_min * r.dt_scale;
                    if !(dt > 0.0 && dt.is_finite()) {
                        let e = Error::DegenerateHessian { node: r.dt_node, det: f64::NAN };
                        return Err(fail(traj, e));
                    }
                    if last_logged_dt == 0.0 || dt > 1.5 * last_logged_dt || dt < last_logged_dt / 1.5 {
                        traj.events.push(FlowEvent::AdaptiveDt { step: step_no, t: cur.time, dt, node: r.dt_node });
                        last_logged_dt = dt;
                    }
                    dt
                }
            };
            let mut dt = base_dt * 0.5f64.powi(halving as i32);
            // land exactly on the stop, and avoid a sliver step just before it
            let remaining = stop - cur.time;
            if dt >= remaining * (1.0 - 1e-9) {
                dt = remaining;
            } else if dt > 0.5 * remaining {
                dt = 0.5 * remaining;
            }
            let t_new = if dt == remaining { stop } else { cur.time + dt };
            let next = match advance(&cur, &plan, &r, dt, t_new, &bd) {
                Ok(f) => f,
                Err(e) => return Err(fail(traj, e)),
            };
            let r_next = rates(&next, &plan, cfg.parallel);
            let convex = r_next.min_eig > 0.0 && r_next.speed.iter().all(|v| v.is_finite());
            if !convex {
                if !cfg.convexity_guard {
                    let e = Error::DegenerateHessian { node: r_next.min_node, det: f64::NAN };
                    return Err(fail(traj, e));
                }
                traj.events.push(FlowEvent::Rejected {
                    step: step_no,
                    t: cur.time,
                    dt,
                    min_eig: r_next.min_eig,
                    node: r_next.min_node,
                });
                halving += 1;
                if halving > MAX_HALVINGS {
                    let e = Error::ConvexityLost { t: next.time, min_eig: r_next.min_eig };
                    traj.events.push(FlowEvent::Aborted { step: step_no, t: cur.time, reason: e.to_string() });
                    if traj.last().time < cur.time {
                        traj.frames.push(cur);
                    }
                    return Err(fail(traj, e));
                }
                continue;
            }
            halving = 0;
            step_no += 1;
            traj.dts.push(dt);
            cur = next;
            r = r_next;
            let at_stop = cur.time == stop;
            if at_stop || (cfg.record_every > 0 && step_no.is_multiple_of(cfg.record_every)) {
                traj.frames.push(cur.clone());
            }
        }
    }
    Ok(traj)
}

/// Lower comparison data for [`barrier_monitor`].
pub enum Lower<'a> {
    Trajectory(&'a Trajectory),
    Oracle(&'a SolitonOracle),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BarrierReport {
    pub times: Vec<f64>,
    /// `max (lower - upper)` over active nodes at each time; positive means violation.
    pub max_excess: Vec<f64>,
    pub worst: f64,
    pub worst_time: f64,
}

impl BarrierReport {
    /// Times where the excess is above `tol`.
    pub fn violations(&self, tol: f64) -> Vec<f64> {
        self.times.iter().zip(&self.max_excess).filter(|(_, &e)| e > tol).map(|(&t, _)| t).collect()
    }
}

/// Compares `lower` against every frame of `upper`.
pub fn barrier_monitor(lower: Lower<'_>, upper: &Trajectory) -> Result<BarrierReport> {
    let mut times = Vec::new();
    let mut max_excess = Vec::new();
    for frame in &upper.frames {
        let t = frame.time;
        let low_field;
        let low: &SupportField = match &lower {
            Lower::Trajectory(tr) => tr
                .frame_at(t)
                .ok_or_else(|| Error::InvalidInput(format!("lower trajectory has no frame at t = {t}")))?,
            Lower::Oracle(o) => {
                low_field = o.field(frame.grid(), t)?;
                &low_field
            }
        };
        if low.grid() != frame.grid() {
            return Err(Error::InvalidInput("barrier fields live on different grids".into()));
        }
        let mut excess = f64::NEG_INFINITY;
        for idx in frame.active_nodes() {
            let e = if low.is_active(idx) { low.value(idx) - frame.value(idx) } else { f64::INFINITY };
            excess = excess.max(e);
        }
        times.push(t);
        max_excess.push(excess);
    }
    let (wi, &worst) = max_excess
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .ok_or(Error::EmptyInput("trajectory frames"))?;
    Ok(BarrierReport { worst_time: times[wi], times, max_excess, worst })
}

/// Initial support `ε√(|y|²+j²) + ⟨v, (y,-1)⟩ - j` of the ellipsoid barrier.
pub fn ellipsoid_barrier(eps: f64, v: &[f64], j: f64, grid: &GridSpec) -> Result<SupportField> {
    SolitonOracle::ellipsoid_barrier(eps, v, j)?.field(grid, 0.0)
}

/// Lattice spacing used for the `i`-th approximant: `base / 2^⌈log2 i⌉`, so that
/// sample sets are nested in `i`.
pub fn exhaust_spacing(base_spacing: f64, i: usize) -> f64 {
    let k = usize::BITS - (i.max(1) - 1).leading_zeros();
    base_spacing / (1u64 << k) as f64
}

/// Support function of the hull of body points with horizontal radius `≤ i`.
///
/// Sample sets grow with `i`, so `s_i ≤ s_{i+1} ≤ s` pointwise.
pub fn exhaust_sequence(
    body: &NoncompactBodySpec,
    i: usize,
    grid: &GridSpec,
    base_spacing: f64,
) -> Result<SupportField> {
    if i == 0 {
        return Err(Error::InvalidInput("exhaustion index starts at 1".into()));
    }
    let pts = body.sample_points(i as f64, exhaust_spacing(base_spacing, i))?;
    support_of_polytope(&pts, grid, format!("exhaust-{i}"))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitRow {
    pub i: usize,
    /// `max_K (s_prev - s_i)(t*)`, nonpositive when monotone.
    pub monotone_excess: Option<f64>,
    /// `‖s_i(t*) - s_prev(t*)‖_∞(K)`.
    pub cauchy: Option<f64>,
    /// Max difference of discrete Hessian entries on `K`.
    pub hessian_cauchy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitTable {
    pub t_star: f64,
    pub rows: Vec<LimitRow>,
}

impl LimitTable {
    pub fn monotone(&self, tol: f64) -> bool {
        self.rows.iter().filter_map(|r| r.monotone_excess).all(|e| e <= tol)
    }

    pub fn cauchy_strictly_decreasing(&self) -> bool {
        let c: Vec<f64> = self.rows.iter().filter_map(|r| r.cauchy).collect();
        c.windows(2).all(|w| w[1] < w[0])
    }

    pub fn final_gap(&self) -> Option<f64> {
        self.rows.iter().rev().find_map(|r| r.cauchy)
    }
}

/// Evolves each approximant with frozen boundary data and compares them on the
/// chart box `k_lo..k_hi` at `cfg.t_end`.
pub fn limit_study(
    body: &NoncompactBodySpec,
    i_list: &[usize],
    grid: &GridSpec,
    base_spacing: f64,
    k_lo: &[f64],
    k_hi: &[f64],
    cfg: &FlowConfig,
) -> Result<LimitTable> {
    body.validate(grid)?;
    if i_list.is_empty() {
        return Err(Error::EmptyInput("exhaustion indices"));
    }
    let k_nodes: Vec<usize> = (0..grid.len())
        .filter(|&idx| {
            let y = grid.coords(idx);
            y.iter().zip(k_lo.iter().zip(k_hi)).all(|(v, (lo, hi))| v >= lo && v <= hi)
        })
        .collect();
    if k_nodes.is_empty() {
        return Err(Error::EmptyInput("nodes of the compact set K"));
    }
    let run = |&i: &usize| -> Result<SupportField> {
        let s0 = exhaust_sequence(body, i, grid, base_spacing)?;
        let traj = evolve(&s0, cfg)?;
        Ok(traj.last().clone())
    };
    let finals: Vec<SupportField> = if cfg.parallel {
        i_list.par_iter().map(run).collect::<Result<_>>()?
    } else {
        i_list.iter().map(run).collect::<Result<_>>()?
    };
    let mut rows = Vec::new();
    for (k, (&i, f)) in i_list.iter().zip(&finals).enumerate() {
        let mut row = LimitRow { i, monotone_excess: None, cauchy: None, hessian_cauchy: None };
        if k > 0 {
            let prev = &finals[k - 1];
            let mut mono = f64::NEG_INFINITY;
            let mut cauchy: f64 = 0.0;
            let mut hc: f64 = 0.0;
            for &idx in &k_nodes {
                let d = prev.value(idx) - f.value(idx);
                mono = mono.max(d);
                cauchy = cauchy.max(d.abs());
                if f.is_interior(idx, 1) {
                    let a = prev.hess_unchecked(idx);
                    let b = f.hess_unchecked(idx);
                    for p in 0..grid.n() {
                        for q in 0..grid.n() {
                            hc = hc.max((a.get(p, q) - b.get(p, q)).abs());
                        }
                    }
                }
            }
            row.monotone_excess = Some(mono);
            row.cauchy = Some(cauchy);
            row.hessian_cauchy = Some(hc);
        }
        rows.push(row);
    }
    Ok(LimitTable { t_star: cfg.t_end, rows })
}

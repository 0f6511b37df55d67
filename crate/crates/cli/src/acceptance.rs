//! The acceptance suite: twelve oracle- and property-based checks at desk scale.
//!
//! Every threshold goes through [`Suite::tol_scale`]: upper bounds are multiplied by
//! it, lower bounds divided and ratio bands narrowed. A scale below one tightens
//! the suite, which is how the harness checks that it can fail.

use std::cell::OnceCell;
use std::fmt::Write as _;
use std::time::Instant;

use afflow::estimates::{bowl_domain, cubic_decay_monitor, normalize_section, pogorelov_monitor, speed_monitor, TOL_C};
use afflow::flow::{barrier_monitor, evolve, limit_study, Boundary, DtPolicy, FlowConfig, Lower, Trajectory};
use afflow::quadric::{affine_sphere_check, fit_quadric_classify, LieQuadric, QuadricClass};
use afflow::solitons::{
    calabi_default_beta, calabi_printed_beta, pde_residual, sphere_extinction_time, sphere_radius, SolitonOracle,
};
use afflow::support::{embedding_point, AffineMap, Extended, GridSpec, NoncompactBodySpec, SupportField};
use afflow::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub const CRITERIA: [(usize, &str); 12] = [
    (1, "soliton residual convergence"),
    (2, "sphere tracking"),
    (3, "paraboloid transport"),
    (4, "calabi exponent"),
    (5, "affine equivariance"),
    (6, "cubic form decay"),
    (7, "comparison principle"),
    (8, "lie quadric"),
    (9, "quadric classifier"),
    (10, "speed profile"),
    (11, "pogorelov quantity"),
    (12, "exhaustion limit"),
];

/// Chart triangle of the Calabi runs, as facets `c_i + ⟨a_i, y⟩ ≥ 0`.
pub fn simplex_facets() -> Vec<(Vec<f64>, f64)> {
    vec![(vec![1.0, 0.0], 1.0), (vec![0.0, 1.0], 1.0), (vec![-1.0, -1.0], 0.0)]
}

/// Start time of the Calabi runs; the soliton is singular at `t = 0`.
pub const CALABI_T0: f64 = 0.05;

#[derive(Clone, Debug, Serialize)]
pub struct Row {
    pub id: usize,
    pub name: String,
    pub measured: String,
    pub threshold: String,
    pub pass: bool,
    pub notes: Vec<String>,
    pub seconds: f64,
    /// `(file name, CSV body)` pairs for plotting.
    #[serde(skip)]
    pub artifacts: Vec<(String, String)>,
}

impl Row {
    fn new(id: usize) -> Self {
        Row {
            id,
            name: CRITERIA[id - 1].1.to_string(),
            measured: String::new(),
            threshold: String::new(),
            pass: false,
            notes: Vec::new(),
            seconds: 0.0,
            artifacts: Vec::new(),
        }
    }

    /// `PASS  3 paraboloid transport: measured ... | threshold ...`
    pub fn line(&self) -> String {
        format!(
            "{} {:>2} {}: {} | {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.measured,
            self.threshold
        )
    }
}

pub struct Suite {
    pub tol_scale: f64,
    pub seed: u64,
    pub parallel: bool,
    sphere: [OnceCell<Trajectory>; 2],
    calabi: [OnceCell<Trajectory>; 2],
}

fn cached(cell: &OnceCell<Trajectory>, make: impl FnOnce() -> Result<Trajectory>) -> Result<&Trajectory> {
    if cell.get().is_none() {
        let t = make()?;
        let _ = cell.set(t);
    }
    Ok(cell.get().expect("just set"))
}

fn box2(m: usize) -> Result<GridSpec> {
    GridSpec::cube(2, -1.0, 1.0, m)
}

fn rel_sphere_error(f: &SupportField, r: f64) -> f64 {
    f.interior_nodes(1)
        .into_iter()
        .map(|i| {
            let y = f.grid().coords(i);
            let ex = r * (1.0 + y.iter().map(|v| v * v).sum::<f64>()).sqrt();
            ((f.value(i) - ex) / ex).abs()
        })
        .fold(0.0, f64::max)
}

fn sci(v: f64) -> String {
    format!("{v:.3e}")
}

/// Record times of the sphere runs: early frames for `q(0)`, then a geometric
/// ladder up to the end time.
fn sphere_record_times(t_end: f64) -> Vec<f64> {
    let mut v = vec![1e-4, 2e-4, 5e-4];
    let mut t = 1e-3;
    while t < t_end {
        v.push(t);
        t *= 1.25;
    }
    v
}

/// Time at which the sphere criteria are read off: half the extinction time.
pub fn sphere_t_end() -> f64 {
    0.5 * sphere_extinction_time(2, 1.0)
}

impl Suite {
    pub fn new(tol_scale: f64, seed: u64, parallel: bool) -> Self {
        Suite { tol_scale, seed, parallel, sphere: Default::default(), calabi: Default::default() }
    }

    fn upper(&self, x: f64) -> f64 {
        x * self.tol_scale
    }

    fn lower(&self, x: f64) -> f64 {
        x / self.tol_scale
    }

    fn band(&self, center: f64, half: f64) -> (f64, f64) {
        (center - half * self.tol_scale, center + half * self.tol_scale)
    }

    fn cfg(&self, policy: DtPolicy, t_end: f64, boundary: Boundary) -> FlowConfig {
        let mut c = FlowConfig::new(policy, t_end, boundary);
        c.parallel = self.parallel;
        c
    }

    /// Unit sphere, n = 2, box `[-1,1]²`, oracle boundary data, to half the extinction time.
    pub fn sphere_run(&self, m: usize) -> Result<&Trajectory> {
        let slot = match m {
            65 => 0,
            129 => 1,
            _ => return Err(Error::InvalidInput(format!("no cached sphere run at m = {m}"))),
        };
        cached(&self.sphere[slot], || {
            let o = SolitonOracle::sphere(2, 1.0);
            let t_end = sphere_t_end();
            let mut cfg = self.cfg(DtPolicy::Adaptive { cfl: 0.5 }, t_end, Boundary::Oracle { oracle: o.clone() });
            cfg.record_times = sphere_record_times(t_end);
            Ok(evolve(&o.field(&box2(m)?, 0.0)?, &cfg)?)
        })
    }

    /// Calabi soliton on the chart triangle from `CALABI_T0` to `t = 1`, with oracle
    /// data on a band of fixed physical width `1/16`.
    pub fn calabi_run(&self, m: usize) -> Result<&Trajectory> {
        let slot = match m {
            65 => 0,
            129 => 1,
            _ => return Err(Error::InvalidInput(format!("no cached Calabi run at m = {m}"))),
        };
        cached(&self.calabi[slot], || {
            let o = SolitonOracle::calabi_on_simplex(&simplex_facets())?;
            let mut cfg = self.cfg(DtPolicy::Adaptive { cfl: 0.5 }, 1.0, Boundary::Oracle { oracle: o.clone() });
            cfg.band = calabi_band(m);
            cfg.record_times = (2..20).map(|k| 0.05 * k as f64).collect();
            Ok(evolve(&o.field(&box2(m)?, CALABI_T0)?, &cfg)?)
        })
    }

    /// Short Calabi run from `POGORELOV_T0` to `8 * POGORELOV_T0`, recorded every quarter of `t0`.
    pub fn pogorelov_run(&self, m: usize) -> Result<Trajectory> {
        let t0 = POGORELOV_T0;
        let o = SolitonOracle::calabi_on_simplex(&simplex_facets())?;
        let mut cfg = self.cfg(DtPolicy::Adaptive { cfl: 0.5 }, 8.0 * t0, Boundary::Oracle { oracle: o.clone() });
        cfg.band = calabi_band(m);
        cfg.record_times = (1..28).map(|k| t0 * (1.0 + 0.25 * k as f64)).collect();
        Ok(evolve(&o.field(&box2(m)?, t0)?, &cfg)?)
    }

    pub fn run(&self, id: usize) -> Row {
        let start = Instant::now();
        let res = match id {
            1 => self.c1(),
            2 => self.c2(),
            3 => self.c3(),
            4 => self.c4(),
            5 => self.c5(),
            6 => self.c6(),
            7 => self.c7(),
            8 => self.c8(),
            9 => self.c9(),
            10 => self.c10(),
            11 => self.c11(),
            12 => self.c12(),
            _ => Err(Error::InvalidInput(format!("no criterion {id}"))),
        };
        let mut row = match res {
            Ok(r) => r,
            Err(e) => {
                let mut r = Row::new(id.clamp(1, 12));
                r.id = id;
                r.measured = format!("error: {e}");
                r.threshold = "completes".into();
                r
            }
        };
        row.seconds = start.elapsed().as_secs_f64();
        row
    }

    fn c1(&self) -> Result<Row> {
        let mut row = Row::new(1);
        let o = SolitonOracle::sphere(2, 1.0);
        let mut maxes = Vec::new();
        for m in [33, 65, 129] {
            maxes.push(pde_residual(&o, &box2(m)?, 0.2, 1e-4)?.max);
        }
        let ratios: Vec<f64> = maxes.windows(2).map(|w| w[0] / w[1]).collect();
        let (lo, hi) = self.band(4.0, 0.8);
        let par = SolitonOracle::paraboloid(2);
        let par_max = [33, 129]
            .iter()
            .map(|&m| pde_residual(&par, &box2(m)?, 0.2, 1e-4).map(|r| r.max))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let par_tol = self.upper(1e-10);
        row.pass = ratios.iter().all(|r| (lo..=hi).contains(r)) && par_max <= par_tol;
        row.measured = format!(
            "sphere max residual {} / {} / {}, ratios {:.3}, {:.3}; paraboloid {}",
            sci(maxes[0]),
            sci(maxes[1]),
            sci(maxes[2]),
            ratios[0],
            ratios[1],
            sci(par_max)
        );
        row.threshold = format!("ratios in [{lo:.2}, {hi:.2}], paraboloid <= {}", sci(par_tol));
        Ok(row)
    }

    fn c2(&self) -> Result<Row> {
        let mut row = Row::new(2);
        let t = 1.0 / 3.0;
        let r = sphere_radius(2, 1.0, t)?;
        let mut errs = Vec::new();
        let mut csv = String::from("# m,t,r_numeric,r_exact\n");
        for m in [65, 129] {
            let tr = self.sphere_run(m)?;
            for f in &tr.frames {
                let c = f.grid().index(&[m / 2, m / 2]);
                writeln!(csv, "{m},{:.12e},{:.12e},{:.12e}", f.time, f.value(c), sphere_radius(2, 1.0, f.time)?)
                    .unwrap();
            }
            let f = tr.frame_at(t).ok_or(Error::InvalidInput("no frame at t = 1/3".into()))?;
            errs.push(rel_sphere_error(f, r));
        }
        let tol = self.upper(0.01);
        row.pass = errs[1] < tol && errs[1] < errs[0];
        row.measured = format!("relative error m=65 {}, m=129 {} (r(1/3) = {r:.5})", sci(errs[0]), sci(errs[1]));
        row.threshold = format!("m=129 < {}, decreasing in m", sci(tol));
        row.artifacts.push(("c2_sphere_radius.csv".into(), csv));
        Ok(row)
    }

    fn c3(&self) -> Result<Row> {
        let mut row = Row::new(3);
        let o = SolitonOracle::paraboloid(2);
        let g = box2(33)?;
        let cfg = self.cfg(DtPolicy::Fixed { dt: 1e-3 }, 1.0, Boundary::Oracle { oracle: o.clone() });
        let tr = evolve(&o.field(&g, 0.0)?, &cfg)?;
        let exact = o.field(&g, 1.0)?;
        let last = tr.last();
        let err =
            last.interior_nodes(1).into_iter().map(|i| (last.value(i) - exact.value(i)).abs()).fold(0.0, f64::max);
        let tol = self.upper(1e-10);
        row.pass = err <= tol && last.time == 1.0;
        row.measured = format!("interior error {} after {} steps", sci(err), tr.dts.len());
        row.threshold = format!("<= {}", sci(tol));
        Ok(row)
    }

    fn c4(&self) -> Result<Row> {
        let mut row = Row::new(4);
        let g = |m| GridSpec::cube(1, -2.0, -0.5, m);
        let good = SolitonOracle::calabi_orthant(1);
        let bad = SolitonOracle::calabi_orthant(1).with_beta(calabi_printed_beta(1));
        let mut res_good = Vec::new();
        let mut res_bad = Vec::new();
        for m in [33, 65, 129] {
            res_good.push(pde_residual(&good, &g(m)?, 1.0, 1e-4)?.max);
            res_bad.push(pde_residual(&bad, &g(m)?, 1.0, 1e-4)?.max);
        }
        let ratios: Vec<f64> = res_good.windows(2).map(|w| w[0] / w[1]).collect();
        let (lo, hi) = self.band(4.0, 0.8);
        let floor = self.lower(0.1);
        let bad_min = res_bad.iter().copied().fold(f64::INFINITY, f64::min);
        row.pass = ratios.iter().all(|r| (lo..=hi).contains(r)) && bad_min >= floor && res_bad[2] > 0.5 * res_bad[0];
        row.measured = format!(
            "beta={} residual {} -> {} (ratios {:.3}, {:.3}); beta={} residual >= {}",
            calabi_default_beta(1),
            sci(res_good[0]),
            sci(res_good[2]),
            ratios[0],
            ratios[1],
            calabi_printed_beta(1),
            sci(bad_min)
        );
        row.threshold = format!("ratios in [{lo:.2}, {hi:.2}]; printed exponent >= {}", sci(floor));
        row.notes
            .push("the printed exponent (n+2)/n solves the flow only at n = 2; (n+2)/2 is the exponent in use".into());
        Ok(row)
    }

    fn c5(&self) -> Result<Row> {
        let mut row = Row::new(5);
        let m = 129;
        let target = GridSpec::cube(1, -1.0, 1.0, m)?;
        let t_star = 0.25 * sphere_extinction_time(1, 1.0);
        // shear x1 += x2/2; the chart preimage of [-1,1] is [-2/3, 2]
        let map =
            AffineMap::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]), DVector::from_vec(vec![0.3, -0.2]))?;
        let circle = SolitonOracle::sphere(1, 1.0);
        let ellipse = SolitonOracle::ellipsoid(1.0, map.clone())?;
        let flow = |o: &SolitonOracle, g: &GridSpec| -> Result<SupportField> {
            let cfg = self.cfg(DtPolicy::Adaptive { cfl: 0.5 }, t_star, Boundary::Oracle { oracle: o.clone() });
            Ok(evolve(&o.field(g, 0.0)?, &cfg)?.last().clone())
        };
        // same spacing on the source box; cubic interpolation keeps the map step below the flow error
        let source = GridSpec::cube(1, -1.5, 2.5, 2 * (m - 1) + 1)?;
        let flow_then_map = transform_cubic_1d(&flow(&circle, &source)?, &map, &target)?;
        let map_then_flow = flow(&ellipse, &target)?;
        let circle_run = flow(&circle, &target)?;
        let exact_circle = circle.field(&target, t_star)?;
        let interior = map_then_flow.interior_nodes(1);
        let mismatch =
            interior.iter().map(|&i| (flow_then_map.value(i) - map_then_flow.value(i)).abs()).fold(0.0, f64::max);
        let reference =
            interior.iter().map(|&i| (circle_run.value(i) - exact_circle.value(i)).abs()).fold(0.0, f64::max);
        let tol = self.upper(3.0) * reference;
        row.pass = mismatch <= tol;
        row.measured = format!(
            "mismatch {} at t = T_ext/4 = {t_star:.4}; circle tracking error {}",
            sci(mismatch),
            sci(reference)
        );
        row.threshold = format!("<= {} (3x tracking error at m = {m})", sci(tol));
        Ok(row)
    }

    fn c6(&self) -> Result<Row> {
        let mut row = Row::new(6);
        let window = [0.1, 1.0];
        let tr = self.calabi_run(129)?;
        // the frame stencil (two cells) plus one buffer cell stays off the oracle band
        let margin = calabi_band(129) + CALABI_STENCIL_CLEARANCE;
        let f0 = &tr.frames[0];
        let monitored: std::collections::HashSet<usize> = f0.interior_nodes(margin).into_iter().collect();
        let g = f0.grid().clone();
        let region = |y: &[f64]| monitored.contains(&g.nearest_node(y));
        let cal = cubic_decay_monitor(tr, 0.0, window, TOL_C, Some(&region))?;
        let sph = cubic_decay_monitor(self.sphere_run(129)?, 0.0, [window[0], sphere_t_end()], TOL_C, None)?;
        let par_o = SolitonOracle::paraboloid(2);
        let mut cfg = self.cfg(DtPolicy::Adaptive { cfl: 0.5 }, 1.0, Boundary::Oracle { oracle: par_o.clone() });
        cfg.record_times = (1..10).map(|k| 0.1 * k as f64).collect();
        let par_tr = evolve(&par_o.field(&box2(65)?, 0.0)?, &cfg)?;
        let par = cubic_decay_monitor(&par_tr, 0.0, window, TOL_C, None)?;
        let bound = self.upper(1.0 + TOL_C);
        let quad = self.upper(0.05);
        let min_cal = cal.ratio.iter().copied().fold(f64::INFINITY, f64::min);
        row.pass = cal.max_ratio <= bound && min_cal > 0.0 && sph.max_ratio <= quad && par.max_ratio <= quad;
        row.measured = format!(
            "Calabi ratio in [{:.4}, {:.4}] (exact 1/3); sphere {}; paraboloid {}",
            min_cal,
            cal.max_ratio,
            sci(sph.max_ratio),
            sci(par.max_ratio)
        );
        row.threshold = format!("Calabi in (0, {bound:.3}], quadrics <= {quad:.3}");
        row.notes.push(format!("Calabi nodes at least {margin} cells inside the update set; t is the soliton clock"));
        row.artifacts.push(("c6_cubic_decay.csv".into(), cal.to_csv()));
        Ok(row)
    }

    fn c7(&self) -> Result<Row> {
        let mut row = Row::new(7);
        let (eps, j) = (1.0, 2.0);
        let v = [0.0, 0.0, 0.0];
        let barrier = SolitonOracle::ellipsoid_barrier(eps, &v, j)?;
        let t_end = 0.2;
        let mut cs = Vec::new();
        let mut worst = Vec::new();
        let mut control = f64::NEG_INFINITY;
        let mut control_hits = 0;
        let mut later = f64::NEG_INFINITY;
        for m in [33, 65] {
            let g = box2(m)?;
            let y_star = g.coords(g.index(&[m / 2 + m / 8, m / 2 - m / 16]));
            let low0 = barrier.field(&g, 0.0)?;
            let s0 = SupportField::from_chart_fn(g.clone(), 0.0, "bumped barrier", |y| {
                let d = [y[0] - y_star[0], y[1] - y_star[1]];
                let r2 = d[0] * d[0] + d[1] * d[1];
                let base = low0.interpolate(y)?;
                Ok(Extended::Finite(base + 0.2 * r2 * r2 + 0.1 * d[0].powi(4)))
            })?;
            let mut cfg = self.cfg(DtPolicy::Adaptive { cfl: 0.5 }, t_end, Boundary::Frozen);
            cfg.record_times = (1..8).map(|k| 0.025 * k as f64).collect();
            let upper = evolve(&s0, &cfg)?;
            let rep = barrier_monitor(Lower::Oracle(&barrier), &upper)?;
            let dt = upper.dts.iter().copied().fold(0.0, f64::max);
            let h = g.h_max();
            worst.push(rep.worst);
            later = later.max(rep.max_excess[1..].iter().copied().fold(f64::NEG_INFINITY, f64::max));
            cs.push(rep.worst.max(0.0) / (h * h + dt));
            // negative control: the barrier's exact frames as the upper solution
            let frames = upper.frames.iter().map(|f| barrier.field(&g, f.time)).collect::<Result<Vec<_>>>()?;
            let swapped = Trajectory { frames, dts: vec![], events: vec![] };
            let ctrl = barrier_monitor(Lower::Trajectory(&upper), &swapped)?;
            control = control.max(ctrl.worst);
            control_hits += ctrl.violations(h * h + dt).len();
        }
        let c_max = self.upper(1.0);
        // C may not grow under refinement; round-off sized violations count as none
        let stable = cs[1] <= 2.0 * cs[0] || cs[1] <= 1e-9;
        row.pass = cs.iter().all(|&c| c <= c_max) && stable && control > 0.0 && control_hits > 0;
        row.measured = format!(
            "max excess {} / {} (after contact at t = 0: {}) -> C = {:.3e} / {:.3e}; swapped control excess {} at {control_hits} times",
            sci(worst[0]),
            sci(worst[1]),
            sci(later),
            cs[0],
            cs[1],
            sci(control)
        );
        row.threshold = format!("C <= {c_max:.3e} at m = 33, 65 and not growing; control reports violations");
        Ok(row)
    }

    fn sample_nodes(&self, m: usize, margin: usize, count: usize, salt: u64) -> Vec<[usize; 2]> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ salt);
        let side = m - 2 * margin;
        sample(&mut rng, side * side, count).into_iter().map(|k| [margin + k % side, margin + k / side]).collect()
    }

    fn c8(&self) -> Result<Row> {
        let mut row = Row::new(8);
        let picks = self.sample_nodes(129, 4, 50, 8);
        let fit_picks = self.sample_nodes(129, 4, 200, 88);
        let sphere = |y: &[f64]| (1.0 + y[0] * y[0] + y[1] * y[1]).sqrt();
        let bumpy = |y: &[f64]| sphere(y) + 0.15 * (y[0].powi(4) + 0.5 * y[1].powi(4)) + 0.1 * y[0] * y[1] * y[1];
        let run = |m: usize, f: &dyn Fn(&[f64]) -> f64| -> Result<(f64, f64, f64)> {
            let k = (m - 1) / 128;
            let s = SupportField::from_chart_fn(box2(m)?, 0.0, "phi", |y| Ok(Extended::Finite(f(y))))?;
            let idx = |p: &[usize; 2]| s.grid().index(&[k * p[0], k * p[1]]);
            let fit_nodes: Vec<usize> = fit_picks.iter().map(idx).collect();
            let a = affine_sphere_check(&s, &fit_nodes)?.a;
            let lq = LieQuadric::at(&s, s.grid().index(&[m / 2, m / 2]), a)?;
            let mut worst: f64 = 0.0;
            for p in &picks {
                let pt = embedding_point(&s, idx(p))?;
                worst = worst.max(lq.phi(pt.as_slice())?.abs());
            }
            Ok((worst, lq.phi(&[0.0, 0.0, 0.0])?, a))
        };
        let (w129, origin, a) = run(129, &sphere)?;
        let (w257, _, _) = run(257, &sphere)?;
        let (ctrl, _, _) = run(129, &bumpy)?;
        let tol = self.upper(5e-4);
        let (lo, hi) = self.band(4.0, 0.8);
        let ratio = w129 / w257;
        let origin_tol = self.upper(1e-3);
        let ctrl_factor = self.lower(10.0);
        row.pass = w129 <= tol
            && (lo..=hi).contains(&ratio)
            && (origin + 1.0).abs() <= origin_tol
            && ctrl >= ctrl_factor * w129;
        row.measured = format!(
            "max|Phi| m=129 {}, m=257 {} (ratio {ratio:.3}); Phi(origin) = {origin:.6}; a = {a:.6}; control {}",
            sci(w129),
            sci(w257),
            sci(ctrl)
        );
        row.threshold = format!(
            "<= {}, ratio in [{lo:.2}, {hi:.2}], |Phi(origin)+1| <= {}, control >= {ctrl_factor:.3}x",
            sci(tol),
            sci(origin_tol)
        );
        Ok(row)
    }

    fn c9(&self) -> Result<Row> {
        let mut row = Row::new(9);
        let m = 65;
        let g = box2(m)?;
        let nodes: Vec<usize> = self.sample_nodes(m, 2, 50, 9).iter().map(|p| g.index(p)).collect();
        let shear = AffineMap::new(
            DMatrix::from_row_slice(3, 3, &[1.2, 0.4, 0.0, 0.0, 1.0, -0.3, 0.0, 0.0, 1.0 / 1.2]),
            DVector::from_vec(vec![0.5, -0.2, 1.0]),
        )?;
        let cases = [
            (SolitonOracle::sphere(2, 1.0), QuadricClass::Ellipsoid),
            (SolitonOracle::ellipsoid(0.8, shear)?, QuadricClass::Ellipsoid),
            (SolitonOracle::paraboloid(2), QuadricClass::Paraboloid),
        ];
        let tol = self.upper(1e-8);
        let mut ok = true;
        let mut parts = Vec::new();
        for (o, want) in &cases {
            let pts = nodes
                .iter()
                .map(|&i| {
                    let mut big_y = g.coords(i);
                    big_y.push(-1.0);
                    o.embedding(&big_y, 0.0)
                })
                .collect::<Result<Vec<_>>>()?;
            let fit = fit_quadric_classify(&pts)?;
            ok &= fit.classification == *want && fit.residual <= tol;
            parts.push(format!("{} -> {:?} ({})", o.label(), fit.classification, sci(fit.residual)));
        }
        let a_tol = self.upper(0.02);
        let mut devs = Vec::new();
        for m in [65, 129] {
            let g = box2(m)?;
            let k = (m - 1) / 64;
            let fit_nodes: Vec<usize> =
                self.sample_nodes(65, 3, 60, 99).iter().map(|p| g.index(&[k * p[0], k * p[1]])).collect();
            let sph = affine_sphere_check(&SolitonOracle::sphere(2, 1.0).field(&g, 0.0)?, &fit_nodes)?;
            let par = affine_sphere_check(&SolitonOracle::paraboloid(2).field(&g, 0.0)?, &fit_nodes)?;
            ok &= (sph.a + 1.0).abs() <= a_tol && par.a.abs() <= a_tol;
            parts.push(format!("m={m}: a_sphere {:.5}, a_paraboloid {:.2e}", sph.a, par.a));
            devs.push((sph.deviation, par.deviation));
        }
        ok &= devs[1].0 < devs[0].0 && devs[1].1 <= devs[0].1.max(1e-12);
        parts.push(format!("sphere deviation {} -> {}", sci(devs[0].0), sci(devs[1].0)));
        row.pass = ok;
        row.measured = parts.join("; ");
        row.threshold =
            format!("labels match, residual <= {}, |a - a_exact| <= {a_tol:.3}, deviation decreasing", sci(tol));
        row.notes.push("classifier samples are exact hypersurface points F = grad s at sampled nodes".into());
        Ok(row)
    }

    fn c10(&self) -> Result<Row> {
        let mut row = Row::new(10);
        let delta = 0.01;
        let t_half = sphere_t_end();
        let floor = (1.0 - delta) * sphere_radius(2, 1.0, t_half - 1e-12)?;
        let mut sups = Vec::new();
        let mut q0 = Vec::new();
        for m in [65, 129] {
            let tr = self.sphere_run(m)?;
            q0.push(speed_monitor(tr, 1.0 - delta, [0.0, 0.0])?.q_max[0]);
            let rep = speed_monitor(tr, floor, [1e-3, t_half])?;
            if m == 129 {
                row.artifacts.push(("c10_speed_profile.csv".into(), rep.to_csv()));
            }
            sups.push(rep.sup_capped);
        }
        let q_tol = self.upper(3.0 * delta);
        let drift = (sups[1] / sups[0] - 1.0).abs();
        let drift_tol = self.upper(0.2);
        row.pass = (q0[1] - 2.0).abs() <= q_tol && sups.iter().all(|s| s.is_finite() && *s > 0.0) && drift <= drift_tol;
        row.measured = format!(
            "q(0) = {:.5} (2/(1+delta) = {:.5}); sup min(1,t^(1/3)) Q = {:.5} / {:.5}, drift {:.2}%",
            q0[1],
            2.0 / (1.0 + delta),
            sups[0],
            sups[1],
            100.0 * drift
        );
        row.threshold = format!("|q(0) - 2| <= {q_tol:.3}, drift <= {:.0}%", 100.0 * drift_tol);
        row.notes.push(format!("r_floor = 1 - delta at t = 0 and (1 - delta) r(T_ext/2) = {floor:.5} on the window"));
        Ok(row)
    }

    fn c11(&self) -> Result<Row> {
        let mut row = Row::new(11);
        let level = POGORELOV_LEVEL;
        let beta = [1.0, 0.0];
        let mut maxes = Vec::new();
        let mut ok = true;
        let mut parts = Vec::new();
        for m in [65, 129] {
            let tr = self.pogorelov_run(m)?;
            let node = tr.frames[0].grid().nearest_node(&[-1.0 / 3.0, -1.0 / 3.0]);
            let norm = normalize_section(&tr, node)?;
            let bowl = bowl_domain(&norm, level)?;
            let band = calabi_band(m);
            let clear =
                bowl.slices.iter().zip(&norm.frames).all(|(sl, f)| sl.iter().all(|&i| f.is_interior(i, band + 1)));
            let rep = pogorelov_monitor(&norm, &bowl, &beta)?;
            let boundary_zero = rep.boundary_max.iter().all(|&b| b == 0.0);
            ok &= clear && boundary_zero && rep.interior_attained && bowl.nested;
            parts.push(format!(
                "m={m}: max w {:.3e} at t={:.4}, interior {}, clear of band {}",
                rep.overall_max, rep.overall_time, rep.interior_attained, clear
            ));
            if m == 129 {
                row.artifacts.push(("c11_pogorelov.csv".into(), rep.to_csv()));
            }
            maxes.push(rep.overall_max);
        }
        let change = (maxes[1] / maxes[0] - 1.0).abs();
        let tol = self.upper(0.2);
        row.pass = ok && change < tol;
        parts.push(format!("change {:.2}%", 100.0 * change));
        row.measured = parts.join("; ");
        row.threshold = format!("interior max, zero on the parabolic boundary, change < {:.0}%", 100.0 * tol);
        row.notes.push(format!(
            "normalized at the node nearest (-1/3,-1/3) at t0 = {POGORELOV_T0}, level {level}, beta = e1, t <= {}",
            8.0 * POGORELOV_T0
        ));
        Ok(row)
    }

    fn c12(&self) -> Result<Row> {
        let mut row = Row::new(12);
        let m = 129;
        let g = GridSpec::cube(1, -1.5, 1.5, m)?;
        let h = g.h_max();
        let dt = 0.2 * h * h;
        let body = NoncompactBodySpec::paraboloid(1);
        let cfg = self.cfg(DtPolicy::Fixed { dt }, 0.1, Boundary::Frozen);
        // a base lattice incommensurate with the grid, finer than two cells at i = 2
        let base = 0.06;
        let table = limit_study(&body, &[2, 4, 8, 16], &g, base, &[-0.5], &[0.5], &cfg)?;
        let slack = h * h + dt;
        let gap = table.final_gap().unwrap_or(f64::INFINITY);
        let gap_tol = self.upper(1e-3);
        let mono = table.monotone(self.upper(slack));
        let cauchy = table.cauchy_strictly_decreasing();
        row.pass = mono && cauchy && gap <= gap_tol;
        let diffs: Vec<String> = table.rows.iter().filter_map(|r| r.cauchy).map(sci).collect();
        let worst_mono = table.rows.iter().filter_map(|r| r.monotone_excess).fold(f64::NEG_INFINITY, f64::max);
        row.measured = format!(
            "Cauchy differences [{}], max monotonicity excess {}, final gap {}",
            diffs.join(", "),
            sci(worst_mono),
            sci(gap)
        );
        row.threshold = format!("excess <= {}, strictly decreasing, gap <= {}", sci(self.upper(slack)), sci(gap_tol));
        Ok(row)
    }
}

/// `s(AᵀY) + ⟨b, Y⟩` on `target` for `n = 1`, with four-point Lagrange
/// interpolation in the source chart.
fn transform_cubic_1d(src: &SupportField, map: &AffineMap, target: &GridSpec) -> Result<SupportField> {
    let g = src.grid();
    let (lo, h, m) = (g.lo()[0], g.spacing(0), g.m());
    let values = (0..target.len())
        .map(|idx| {
            let y = target.coords(idx)[0];
            let big_y = DVector::from_vec(vec![y, -1.0]);
            let z = map.a().tr_mul(&big_y);
            let w = -z[1];
            if !(w > 0.0) {
                return Err(Error::ChartViolation(z[1]));
            }
            let u = z[0] / w;
            let x = (u - lo) / h;
            let base = (x.floor() as isize - 1).clamp(0, m as isize - 4) as usize;
            if !(x >= 0.0 && x <= (m - 1) as f64) {
                return Err(Error::OutOfDomain { point: vec![u] });
            }
            let mut v = 0.0;
            for j in 0..4 {
                let mut l = 1.0;
                for k in 0..4 {
                    if k != j {
                        l *= (x - (base + k) as f64) / (j as f64 - k as f64);
                    }
                }
                v += l * src.value(base + j);
            }
            Ok(w * v + map.b().dot(&big_y))
        })
        .collect::<Result<Vec<_>>>()?;
    SupportField::new(target.clone(), values, src.time, "mapped")
}

/// Oracle band width at resolution `m`: a fixed `1/16` of the box side.
pub fn calabi_band(m: usize) -> usize {
    (m - 1) / 16
}

/// Cells beyond the oracle band that a monitored Calabi node keeps clear.
pub const CALABI_STENCIL_CLEARANCE: usize = 3;

/// Sublevel of the normalized Calabi section used for the Pogorelov bowl.
pub const POGORELOV_LEVEL: f64 = -0.05;

/// Start of the Pogorelov run. The section scales like `t^(2/3)`, so the start
/// time sets how deep the fixed level sits; at this value the bowl stays clear
/// of the oracle band up to `8 * t0` at both resolutions.
pub const POGORELOV_T0: f64 = 0.002;

/// Runs the selected criteria (all when `only` is empty) in order.
pub fn run_suite(suite: &Suite, only: &[usize]) -> Vec<Row> {
    let ids: Vec<usize> = if only.is_empty() { (1..=12).collect() } else { only.to_vec() };
    ids.into_iter().map(|id| suite.run(id)).collect()
}

/// Fixed-width table with one row per criterion.
pub fn format_table(rows: &[Row]) -> String {
    let mut out = String::new();
    writeln!(out, "{:<3} {:<30} {:<6} {:>8}  measured | threshold", "id", "criterion", "result", "seconds").unwrap();
    for r in rows {
        writeln!(
            out,
            "{:<3} {:<30} {:<6} {:>8.1}  {} | {}",
            r.id,
            r.name,
            if r.pass { "pass" } else { "FAIL" },
            r.seconds,
            r.measured,
            r.threshold
        )
        .unwrap();
        for n in &r.notes {
            writeln!(out, "{:<3} {:<30} note: {n}", "", "").unwrap();
        }
    }
    out
}

/// Parses a criterion selector: a number `1..=12` or a criterion name.
pub fn parse_criterion(s: &str) -> Option<usize> {
    if let Ok(k) = s.trim().parse::<usize>() {
        return (1..=12).contains(&k).then_some(k);
    }
    let key = s.trim().to_lowercase().replace(['-', '_'], " ");
    CRITERIA.iter().find(|(_, name)| *name == key).map(|(id, _)| *id)
}

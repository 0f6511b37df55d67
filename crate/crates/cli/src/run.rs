//! `run_scenario`: validate, write the manifest, compute, write data and verdicts.
//!
//! Every file lands in the output directory. `manifest.json` is written before
//! the computation starts and rewritten at the end; its `data` section depends
//! only on the config and the code, while `timing` carries the clock.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use afflow::estimates::{bowl_domain, cubic_decay_monitor, normalize_section, pogorelov_monitor, speed_monitor};
use afflow::flow::{barrier_monitor, evolve, limit_study, FlowEvent, Lower, Trajectory};
use afflow::invariants::{affine_frame, frame_dump_csv};
use afflow::quadric::{affine_sphere_check, fit_quadric_classify, sample_embedding, LieQuadric};
use afflow::solitons::{pde_residual, SolitonOracle};
use afflow::support::io::{write_field, ValueStorage};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::acceptance::{format_table, run_suite, Row, Suite};
use crate::config::{AcceptanceParams, Monitor, Scenario, ScenarioConfig};
use crate::error::CliError;
use crate::export::{export_plot_data, Table};

/// Settings that come from the command line rather than the config file.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Update nodes concurrently inside each step.
    pub parallel: bool,
    /// Overrides `acceptance.tol_scale`.
    pub tol_scale: Option<f64>,
    /// Overrides `acceptance.only` when nonempty.
    pub only: Vec<usize>,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self { out_dir: out_dir.into(), parallel: false, tol_scale: None, only: Vec::new() }
    }
}

/// Result of one enabled monitor. `measured` is `null` in JSON when not numeric.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonitorVerdict {
    pub monitor: String,
    pub pass: bool,
    pub measured: f64,
    pub threshold: String,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub pass: bool,
    pub verdicts: Vec<MonitorVerdict>,
    pub files: Vec<String>,
    /// Acceptance rows, empty for other scenarios.
    pub rows: Vec<Row>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else {
            1
        }
    }
}

#[derive(Serialize)]
struct FrameEntry {
    t: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    file: Option<String>,
}

#[derive(Serialize)]
struct TrajectoryLog {
    frames: Vec<FrameEntry>,
    dt_log: Vec<f64>,
    events: Vec<FlowEvent>,
}

#[derive(Serialize)]
struct ManifestData<'a> {
    versions: BTreeMap<&'static str, &'static str>,
    scenario: &'static str,
    config: &'a ScenarioConfig,
    status: &'a str,
    partial: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    outputs: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    trajectory: Option<&'a TrajectoryLog>,
}

#[derive(Serialize)]
struct Timing {
    started_unix_ms: u128,
    #[serde(skip_serializing_if = "Option::is_none")]
    finished_unix_ms: Option<u128>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seconds: Option<f64>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    data: ManifestData<'a>,
    timing: Timing,
}

fn unix_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

struct Ctx<'a> {
    cfg: &'a ScenarioConfig,
    dir: PathBuf,
    files: Vec<String>,
    trajectory: Option<TrajectoryLog>,
    started_ms: u128,
    clock: Instant,
}

impl<'a> Ctx<'a> {
    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn write_table(&mut self, name: &str, table: &Table) -> Result<(), CliError> {
        self.write(name, export_plot_data(table, &[])?)
    }

    fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(&self.dir.join(name), e))?;
        self.write(name, text + "\n")
    }

    fn manifest(&self, status: &str, error: Option<String>, finished: bool) -> Result<(), CliError> {
        let versions = BTreeMap::from([("afflow", afflow::VERSION), ("afflow-cli", env!("CARGO_PKG_VERSION"))]);
        let m = Manifest {
            data: ManifestData {
                versions,
                scenario: self.cfg.scenario.name(),
                config: self.cfg,
                status,
                partial: status == "aborted",
                error,
                outputs: &self.files,
                trajectory: self.trajectory.as_ref(),
            },
            timing: Timing {
                started_unix_ms: self.started_ms,
                finished_unix_ms: finished.then(unix_ms),
                seconds: finished.then(|| self.clock.elapsed().as_secs_f64()),
            },
        };
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&m).map_err(|e| CliError::io(&path, e))?;
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }

    /// Frame files, `dt_log.csv` and the trajectory section of the manifest.
    fn record_trajectory(&mut self, traj: &Trajectory) -> Result<(), CliError> {
        let mut frames = Vec::new();
        for (k, f) in traj.frames.iter().enumerate() {
            let file = if self.cfg.write_frames {
                let name = format!("frames/frame_{k:04}.json");
                let path = self.dir.join(&name);
                if k == 0 {
                    let parent = path.parent().expect("frame path has a parent");
                    fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
                }
                write_field(f, &path, ValueStorage::Sidecar)?;
                self.files.push(name.clone());
                self.files.push(format!("frames/frame_{k:04}.bin"));
                Some(name)
            } else {
                None
            };
            frames.push(FrameEntry { t: f.time, file });
        }
        self.write_table("dt_log.csv", &Table::dt_log(traj))?;
        self.trajectory = Some(TrajectoryLog { frames, dt_log: traj.dts.clone(), events: traj.events.clone() });
        Ok(())
    }
}

/// Runs one scenario into `opts.out_dir`.
///
/// Returns `Err` for an invalid config (nothing is written) or a numerical
/// abort (outputs so far are kept and the manifest is marked partial).
pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<Outcome, CliError> {
    cfg.validate()?;
    fs::create_dir_all(&opts.out_dir).map_err(|e| CliError::io(&opts.out_dir, e))?;
    let mut ctx = Ctx {
        cfg,
        dir: opts.out_dir.clone(),
        files: Vec::new(),
        trajectory: None,
        started_ms: unix_ms(),
        clock: Instant::now(),
    };
    ctx.manifest("running", None, false)?;
    let mut rows = Vec::new();
    let res = match cfg.scenario {
        Scenario::Flow | Scenario::Estimates => run_flow(&mut ctx, opts),
        Scenario::VerifySoliton => run_verify(&mut ctx),
        Scenario::Invariants => run_invariants(&mut ctx),
        Scenario::QuadricCheck => run_quadric(&mut ctx),
        Scenario::Exhaust => run_exhaust(&mut ctx, opts),
        Scenario::Acceptance => run_acceptance(&mut ctx, opts).map(|(v, r)| {
            rows = r;
            v
        }),
    };
    match res {
        Ok(verdicts) => {
            let pass = verdicts.iter().all(|v| v.pass);
            ctx.write_json("verdict.json", &serde_json::json!({ "pass": pass, "monitors": verdicts }))?;
            ctx.manifest(if pass { "pass" } else { "fail" }, None, true)?;
            Ok(Outcome { pass, verdicts, files: ctx.files, rows })
        }
        Err(e) => {
            ctx.write_json(
                "verdict.json",
                &serde_json::json!({ "pass": false, "partial": true, "error": e.to_string() }),
            )?;
            ctx.manifest("aborted", Some(e.to_string()), true)?;
            Err(e)
        }
    }
}

fn verdict(monitor: &str, pass: bool, measured: f64, threshold: String, detail: String) -> MonitorVerdict {
    MonitorVerdict { monitor: monitor.into(), pass, measured, threshold, detail }
}

/// `base.csv`, or `base_k.csv` when the scenario has several monitors of one kind.
fn numbered(base: &str, k: usize, total: usize) -> String {
    if total > 1 {
        format!("{base}_{k}.csv")
    } else {
        format!("{base}.csv")
    }
}

fn count_kind(cfg: &ScenarioConfig, name: &str) -> usize {
    cfg.monitors.iter().filter(|m| m.name() == name).count()
}

/// `samples` nodes drawn from `pool` with the config seed, in ascending order.
fn sample_nodes(pool: &[usize], samples: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> =
        sample(&mut rng, pool.len(), samples.min(pool.len())).into_iter().map(|k| pool[k]).collect();
    picked.sort_unstable();
    picked
}

fn run_flow(ctx: &mut Ctx<'_>, opts: &RunOptions) -> Result<Vec<MonitorVerdict>, CliError> {
    let cfg = ctx.cfg;
    let grid = cfg.grid()?;
    let oracle = cfg.oracle()?;
    let mut fc = cfg.flow()?.clone();
    fc.parallel |= opts.parallel;
    let s0 = oracle.field(grid, cfg.t)?;
    let traj = match evolve(&s0, &fc) {
        Ok(t) => t,
        Err(abort) => {
            ctx.record_trajectory(&abort.partial)?;
            return Err(CliError::Numeric(abort.error));
        }
    };
    ctx.record_trajectory(&traj)?;
    let tracking = Table::oracle_tracking(&traj, oracle, fc.band)?;
    ctx.write_table("tracking.csv", &tracking)?;

    let mut out = Vec::new();
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for m in &cfg.monitors {
        let k = {
            let c = seen.entry(m.name()).or_insert(0);
            *c += 1;
            *c
        };
        let file = numbered(m.name(), k, count_kind(cfg, m.name()));
        match m {
            Monitor::OracleError { tol } => {
                let err = tracking.columns[3].1.iter().copied().fold(0.0, f64::max);
                out.push(verdict(
                    m.name(),
                    err <= *tol,
                    err,
                    format!("<= {tol:e}"),
                    format!("max interior error over {} frames", traj.frames.len()),
                ));
            }
            Monitor::CubicDecay { window, tau, tol, clearance } => {
                let f0 = &traj.frames[0];
                let g = f0.grid().clone();
                let keep: HashSet<usize> = f0.interior_nodes(fc.band + clearance).into_iter().collect();
                let region = |y: &[f64]| keep.contains(&g.nearest_node(y));
                let rep = cubic_decay_monitor(&traj, *tau, *window, *tol, Some(&region))?;
                ctx.write_table(&file, &Table::cubic_decay(&rep))?;
                out.push(verdict(
                    m.name(),
                    rep.pass,
                    rep.max_ratio,
                    format!("<= {}", 1.0 + tol),
                    format!("2(t - tau)|C|^2/(n(n+2)) over t in [{}, {}]", window[0], window[1]),
                ));
            }
            Monitor::Speed { r_floor, window, reference, rel_tol } => {
                let rep = speed_monitor(&traj, *r_floor, *window)?;
                let v = rep.verdict(*reference, *rel_tol);
                ctx.write_table(&file, &Table::speed(&rep))?;
                out.push(verdict(
                    m.name(),
                    v.pass,
                    v.sup,
                    format!("within {rel_tol} of {reference} (relative)"),
                    format!("sup of min(1, t^(n/(2n+2))) Q(t), r_floor {r_floor}"),
                ));
            }
            Monitor::Pogorelov { level, center, beta } => {
                let node = grid.nearest_node(center);
                let norm = normalize_section(&traj, node)?;
                let bowl = bowl_domain(&norm, *level)?;
                let mut e1 = vec![0.0; grid.n()];
                e1[0] = 1.0;
                let rep = pogorelov_monitor(&norm, &bowl, beta.as_deref().unwrap_or(&e1))?;
                ctx.write_table(&file, &Table::pogorelov(&rep))?;
                let zero_edge = rep.boundary_max.iter().all(|&b| b == 0.0);
                out.push(verdict(
                    m.name(),
                    rep.interior_attained && zero_edge && bowl.nested,
                    rep.overall_max,
                    "interior maximum, zero on the parabolic boundary, nested slices".into(),
                    format!(
                        "max at t = {}, interior {}, boundary zero {}, nested {}",
                        rep.overall_time, rep.interior_attained, zero_edge, bowl.nested
                    ),
                ));
            }
            Monitor::Barrier { eps, v, j, tol } => {
                let lower = SolitonOracle::ellipsoid_barrier(*eps, v, *j)?;
                let rep = barrier_monitor(Lower::Oracle(&lower), &traj)?;
                ctx.write_table(&file, &Table::barrier(&rep))?;
                out.push(verdict(
                    m.name(),
                    rep.worst <= *tol,
                    rep.worst,
                    format!("<= {tol:e}"),
                    format!("worst excess at t = {}", rep.worst_time),
                ));
            }
            _ => unreachable!("validated against the scenario"),
        }
    }
    Ok(out)
}

fn run_verify(ctx: &mut Ctx<'_>) -> Result<Vec<MonitorVerdict>, CliError> {
    let cfg = ctx.cfg;
    let grid = cfg.grid()?;
    let oracle = cfg.oracle()?;
    let total = cfg.monitors.len();
    let mut out = Vec::new();
    for (k, m) in cfg.monitors.iter().enumerate() {
        let Monitor::Residual { dt, tol } = m else { unreachable!("validated against the scenario") };
        let rep = pde_residual(oracle, grid, cfg.t, *dt)?;
        ctx.write_table(&numbered("residual", k + 1, total), &Table::residual(&rep, |i| grid.coords(i)))?;
        out.push(verdict(
            m.name(),
            rep.max <= *tol,
            rep.max,
            format!("<= {tol:e}"),
            format!("{} at t = {}, dt = {dt}, rms {:e}", oracle.label(), cfg.t, rep.l2),
        ));
    }
    Ok(out)
}

fn run_invariants(ctx: &mut Ctx<'_>) -> Result<Vec<MonitorVerdict>, CliError> {
    let cfg = ctx.cfg;
    let field = cfg.oracle()?.field(cfg.grid()?, cfg.t)?;
    let nodes = sample_nodes(&field.interior_nodes(2), cfg.samples, cfg.seed);
    ctx.write("frames.csv", frame_dump_csv(&field, &nodes)?)?;
    let frames = nodes.iter().map(|&i| affine_frame(&field, i)).collect::<afflow::Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for m in &cfg.monitors {
        match m {
            Monitor::Apolarity { tol } => {
                let worst = frames.iter().map(|f| f.apolarity().amax()).fold(0.0, f64::max);
                out.push(verdict(
                    m.name(),
                    worst <= *tol,
                    worst,
                    format!("<= {tol:e}"),
                    format!("{} nodes", nodes.len()),
                ));
            }
            Monitor::CubicForm { max } => {
                let worst = frames.iter().map(|f| f.cubic_norm2).fold(0.0, f64::max);
                out.push(verdict(
                    m.name(),
                    worst <= *max,
                    worst,
                    format!("<= {max:e}"),
                    format!("{} nodes", nodes.len()),
                ));
            }
            _ => unreachable!("validated against the scenario"),
        }
    }
    Ok(out)
}

fn run_quadric(ctx: &mut Ctx<'_>) -> Result<Vec<MonitorVerdict>, CliError> {
    let cfg = ctx.cfg;
    let grid = cfg.grid()?;
    let field = cfg.oracle()?.field(grid, cfg.t)?;
    let nodes = sample_nodes(&field.interior_nodes(2), cfg.samples, cfg.seed);
    let points = sample_embedding(&field, &nodes)?;
    ctx.write_table("points.csv", &Table::points(&points))?;
    let fit = fit_quadric_classify(&points)?;
    ctx.write("quadric.json", fit.to_json() + "\n")?;
    let mut sphere_fit = None;
    let mut out = Vec::new();
    for m in &cfg.monitors {
        match m {
            Monitor::Classify { expect, residual_tol } => {
                let pass = fit.classification == *expect && fit.residual <= *residual_tol;
                out.push(verdict(
                    m.name(),
                    pass,
                    fit.residual,
                    format!("{expect:?} with residual <= {residual_tol:e}").to_lowercase(),
                    format!("{:?}, signature {:?}", fit.classification, fit.signature).to_lowercase(),
                ));
            }
            Monitor::AffineSphere { a, tol } => {
                let fit = affine_sphere_check(&field, &nodes)?;
                let pass = (fit.a - a).abs() <= *tol;
                out.push(verdict(
                    m.name(),
                    pass,
                    fit.a,
                    format!("{a} +- {tol}"),
                    format!("deviation {:e} over {} samples", fit.deviation, fit.samples),
                ));
                sphere_fit = Some(fit);
            }
            Monitor::LieQuadric { tol, y0 } => {
                let a = match &sphere_fit {
                    Some(f) => f.a,
                    None => affine_sphere_check(&field, &nodes)?.a,
                };
                let base = grid.nearest_node(y0.as_deref().unwrap_or(&vec![0.0; grid.n()]));
                let lq = LieQuadric::at(&field, base, a)?;
                let mut worst: f64 = 0.0;
                for p in &points {
                    worst = worst.max(lq.phi(p.as_slice())?.abs());
                }
                out.push(verdict(
                    m.name(),
                    worst <= *tol,
                    worst,
                    format!("<= {tol:e}"),
                    format!("a = {a}, base node {base}, {} points", points.len()),
                ));
            }
            _ => unreachable!("validated against the scenario"),
        }
    }
    if let Some(f) = &sphere_fit {
        ctx.write_json("affine_sphere.json", f)?;
    }
    Ok(out)
}

fn run_exhaust(ctx: &mut Ctx<'_>, opts: &RunOptions) -> Result<Vec<MonitorVerdict>, CliError> {
    let cfg = ctx.cfg;
    let ex = cfg.exhaust.as_ref().expect("validated");
    let body = cfg.body.as_ref().expect("validated");
    let mut fc = cfg.flow()?.clone();
    fc.parallel |= opts.parallel;
    let table = limit_study(body, &ex.levels, cfg.grid()?, ex.base_spacing, &ex.k_lo, &ex.k_hi, &fc)?;
    ctx.write_table("limit.csv", &Table::limit(&table))?;
    let mut out = Vec::new();
    for m in &cfg.monitors {
        let Monitor::Limit { gap_tol, slack } = m else { unreachable!("validated against the scenario") };
        let gap = table.final_gap().unwrap_or(f64::INFINITY);
        let mono = table.monotone(*slack);
        let cauchy = table.cauchy_strictly_decreasing();
        out.push(verdict(
            m.name(),
            mono && cauchy && gap <= *gap_tol,
            gap,
            format!("final gap <= {gap_tol:e}, monotone within {slack:e}, Cauchy strictly decreasing"),
            format!("monotone {mono}, Cauchy decreasing {cauchy}, t* = {}", table.t_star),
        ));
    }
    Ok(out)
}

fn run_acceptance(ctx: &mut Ctx<'_>, opts: &RunOptions) -> Result<(Vec<MonitorVerdict>, Vec<Row>), CliError> {
    let cfg = ctx.cfg;
    let params = cfg.acceptance.clone().unwrap_or_default();
    let AcceptanceParams { only, tol_scale } = params;
    let tol_scale = opts.tol_scale.unwrap_or(tol_scale);
    if !(tol_scale > 0.0 && tol_scale.is_finite()) {
        return Err(CliError::ConfigInvalid(format!("tol scale must be positive, got {tol_scale}")));
    }
    let only = if opts.only.is_empty() { only } else { opts.only.clone() };
    let suite = Suite::new(tol_scale, cfg.seed, opts.parallel);
    let rows = run_suite(&suite, &only);
    ctx.write("acceptance.txt", format_table(&rows))?;
    ctx.write_json("acceptance.json", &rows)?;
    for r in &rows {
        for (name, body) in &r.artifacts {
            ctx.write(&format!("artifacts/{name}"), body)?;
        }
    }
    let verdicts = rows
        .iter()
        .map(|r| verdict(&format!("criterion_{}", r.id), r.pass, f64::NAN, r.threshold.clone(), r.measured.clone()))
        .collect();
    Ok((verdicts, rows))
}

/// Output directory for config `path` when several configs share one `--out` root.
pub fn keyed_dir(root: &Path, path: &Path, cfg: &ScenarioConfig) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| cfg.scenario.name().to_string(), |s| s.to_string_lossy().into_owned());
    root.join(stem)
}

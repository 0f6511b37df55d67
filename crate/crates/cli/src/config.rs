//! Scenario configuration: one JSON object per file, checked before any work starts.

use std::fs;
use std::path::{Path, PathBuf};

use afflow::estimates::TOL_C;
use afflow::flow::FlowConfig;
use afflow::quadric::QuadricClass;
use afflow::solitons::SolitonOracle;
use afflow::support::{GridSpec, NoncompactBodySpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Flow,
    Invariants,
    VerifySoliton,
    Estimates,
    Exhaust,
    QuadricCheck,
    Acceptance,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Flow => "flow",
            Scenario::Invariants => "invariants",
            Scenario::VerifySoliton => "verify-soliton",
            Scenario::Estimates => "estimates",
            Scenario::Exhaust => "exhaust",
            Scenario::QuadricCheck => "quadric-check",
            Scenario::Acceptance => "acceptance",
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("afflow-out")
}

fn default_samples() -> usize {
    50
}

fn default_true() -> bool {
    true
}

fn default_tol_c() -> f64 {
    TOL_C
}

fn default_clearance() -> usize {
    3
}

fn default_tol_scale() -> f64 {
    1.0
}

/// A check run on the scenario's output; every enabled monitor must pass for exit 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Monitor {
    /// Max interior `|s - oracle|` over the recorded frames.
    OracleError {
        tol: f64,
    },
    /// Max discrete residual of the oracle at `t` with time step `dt`.
    Residual {
        dt: f64,
        tol: f64,
    },
    /// `2(t-τ)|C|²/(n(n+2)) ≤ 1 + tol` on nodes `band + clearance` cells inside the update set.
    CubicDecay {
        window: [f64; 2],
        #[serde(default)]
        tau: f64,
        #[serde(default = "default_tol_c")]
        tol: f64,
        #[serde(default = "default_clearance")]
        clearance: usize,
    },
    /// Capped speed profile sup within `rel_tol` of `reference`.
    Speed {
        r_floor: f64,
        window: [f64; 2],
        reference: f64,
        rel_tol: f64,
    },
    /// Pogorelov quantity on the bowl of the section normalized at the node nearest `center`.
    Pogorelov {
        level: f64,
        center: Vec<f64>,
        #[serde(default)]
        beta: Option<Vec<f64>>,
    },
    /// The ellipsoid barrier `ε√(|y|²+j²) + ⟨v,Y⟩ - j`, flowed exactly, stays below.
    Barrier {
        eps: f64,
        v: Vec<f64>,
        j: f64,
        #[serde(default)]
        tol: f64,
    },
    /// Max `|g^{ij} C_ijk|` over the sampled nodes.
    Apolarity {
        tol: f64,
    },
    /// Max `|C|²_g` over the sampled nodes.
    CubicForm {
        max: f64,
    },
    Classify {
        expect: QuadricClass,
        residual_tol: f64,
    },
    /// Affine sphere constant `a` within `tol`.
    AffineSphere {
        a: f64,
        tol: f64,
    },
    /// Max `|Φ|` of the Lie quadric at the node nearest `y0` over the sampled points.
    LieQuadric {
        tol: f64,
        #[serde(default)]
        y0: Option<Vec<f64>>,
    },
    /// Monotone within `slack`, strictly decreasing Cauchy differences, final gap `≤ gap_tol`.
    Limit {
        gap_tol: f64,
        slack: f64,
    },
}

impl Monitor {
    pub fn name(&self) -> &'static str {
        match self {
            Monitor::OracleError { .. } => "oracle_error",
            Monitor::Residual { .. } => "residual",
            Monitor::CubicDecay { .. } => "cubic_decay",
            Monitor::Speed { .. } => "speed",
            Monitor::Pogorelov { .. } => "pogorelov",
            Monitor::Barrier { .. } => "barrier",
            Monitor::Apolarity { .. } => "apolarity",
            Monitor::CubicForm { .. } => "cubic_form",
            Monitor::Classify { .. } => "classify",
            Monitor::AffineSphere { .. } => "affine_sphere",
            Monitor::LieQuadric { .. } => "lie_quadric",
            Monitor::Limit { .. } => "limit",
        }
    }

    fn allowed_in(&self, s: Scenario) -> bool {
        use Monitor::*;
        match s {
            Scenario::Flow | Scenario::Estimates => matches!(
                self,
                OracleError { .. } | CubicDecay { .. } | Speed { .. } | Pogorelov { .. } | Barrier { .. }
            ),
            Scenario::VerifySoliton => matches!(self, Residual { .. }),
            Scenario::Invariants => matches!(self, Apolarity { .. } | CubicForm { .. }),
            Scenario::QuadricCheck => matches!(self, Classify { .. } | AffineSphere { .. } | LieQuadric { .. }),
            Scenario::Exhaust => matches!(self, Limit { .. }),
            Scenario::Acceptance => false,
        }
    }

    fn is_estimate(&self) -> bool {
        matches!(self, Monitor::CubicDecay { .. } | Monitor::Speed { .. } | Monitor::Pogorelov { .. })
    }
}

/// Exhausting sequence of a noncompact body and the compact box `K` it is compared on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExhaustParams {
    pub levels: Vec<usize>,
    pub base_spacing: f64,
    pub k_lo: Vec<f64>,
    pub k_hi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptanceParams {
    #[serde(default)]
    pub only: Vec<usize>,
    #[serde(default = "default_tol_scale")]
    pub tol_scale: f64,
}

impl Default for AcceptanceParams {
    fn default() -> Self {
        Self { only: Vec::new(), tol_scale: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub oracle: Option<SolitonOracle>,
    #[serde(default)]
    pub body: Option<NoncompactBodySpec>,
    /// Start time of a flow; evaluation time of the pointwise scenarios.
    #[serde(default)]
    pub t: f64,
    #[serde(default)]
    pub flow: Option<FlowConfig>,
    #[serde(default)]
    pub monitors: Vec<Monitor>,
    #[serde(default)]
    pub exhaust: Option<ExhaustParams>,
    #[serde(default)]
    pub acceptance: Option<AcceptanceParams>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Only used to pick sample nodes.
    #[serde(default)]
    pub seed: u64,
    /// Number of sample nodes for the pointwise checks.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Write every recorded frame of a flow as a field file with a binary sidecar.
    #[serde(default = "default_true")]
    pub write_frames: bool,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::ConfigInvalid(msg.into())
}

fn check_finite(name: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite, got {v}")))
    }
}

fn check_nonneg(name: &str, v: f64) -> Result<(), CliError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be a nonnegative number, got {v}")))
    }
}

fn check_positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {v}")))
    }
}

fn check_window(w: [f64; 2]) -> Result<(), CliError> {
    if w[0].is_finite() && w[1].is_finite() && w[0] < w[1] {
        Ok(())
    } else {
        Err(invalid(format!("window {w:?} must be finite and increasing")))
    }
}

impl ScenarioConfig {
    /// Parses JSON text; unknown keys and malformed values become `ConfigInvalid`.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// A bare acceptance scenario.
    pub fn acceptance() -> Self {
        Self::from_json(r#"{"scenario": "acceptance"}"#).expect("minimal config parses")
    }

    pub fn grid(&self) -> Result<&GridSpec, CliError> {
        self.grid.as_ref().ok_or_else(|| invalid(format!("{} needs a grid", self.scenario.name())))
    }

    pub fn oracle(&self) -> Result<&SolitonOracle, CliError> {
        self.oracle.as_ref().ok_or_else(|| invalid(format!("{} needs an oracle", self.scenario.name())))
    }

    pub fn flow(&self) -> Result<&FlowConfig, CliError> {
        self.flow.as_ref().ok_or_else(|| invalid(format!("{} needs a flow block", self.scenario.name())))
    }

    /// Full schema and consistency check; nothing is computed before this passes.
    pub fn validate(&self) -> Result<(), CliError> {
        let sc = self.scenario;
        check_finite("t", self.t)?;
        if self.samples == 0 {
            return Err(invalid("samples must be at least 1"));
        }
        let needs_oracle = matches!(
            sc,
            Scenario::Flow
                | Scenario::Estimates
                | Scenario::VerifySoliton
                | Scenario::Invariants
                | Scenario::QuadricCheck
        );
        if sc != Scenario::Acceptance {
            let g = self.grid()?;
            if needs_oracle {
                let o = self.oracle()?;
                if o.n != g.n() {
                    return Err(invalid(format!("oracle dimension {} differs from grid dimension {}", o.n, g.n())));
                }
                if !o.validity().contains(self.t) {
                    return Err(invalid(format!("t = {} is outside the validity interval of the oracle", self.t)));
                }
            }
        }
        if matches!(sc, Scenario::Flow | Scenario::Estimates | Scenario::Exhaust) {
            let f = self.flow()?;
            f.validate().map_err(|e| invalid(e.to_string()))?;
            if sc != Scenario::Exhaust && f.t_end <= self.t {
                return Err(invalid(format!("flow.t_end = {} must exceed the start time {}", f.t_end, self.t)));
            }
        }
        if sc == Scenario::Exhaust {
            let body = self.body.as_ref().ok_or_else(|| invalid("exhaust needs a body"))?;
            let g = self.grid()?;
            if body.n != g.n() {
                return Err(invalid(format!("body dimension {} differs from grid dimension {}", body.n, g.n())));
            }
            let ex = self.exhaust.as_ref().ok_or_else(|| invalid("exhaust needs an exhaust block"))?;
            if ex.levels.is_empty() || ex.levels.contains(&0) {
                return Err(invalid("exhaust.levels must be a nonempty list of positive integers"));
            }
            check_positive("exhaust.base_spacing", ex.base_spacing)?;
            if ex.k_lo.len() != g.n() || ex.k_hi.len() != g.n() {
                return Err(invalid("exhaust.k_lo and k_hi need one entry per chart axis"));
            }
            if ex.k_lo.iter().zip(&ex.k_hi).any(|(l, h)| !(l < h)) {
                return Err(invalid("exhaust.k_lo must lie below k_hi on every axis"));
            }
        }
        if let Some(a) = &self.acceptance {
            if sc != Scenario::Acceptance {
                return Err(invalid("the acceptance block is only valid for the acceptance scenario"));
            }
            check_positive("acceptance.tol_scale", a.tol_scale)?;
            if let Some(bad) = a.only.iter().find(|k| !(1..=12).contains(*k)) {
                return Err(invalid(format!("acceptance criterion {bad} does not exist")));
            }
        }
        for m in &self.monitors {
            if !m.allowed_in(sc) {
                return Err(invalid(format!("monitor {} is not available in {}", m.name(), sc.name())));
            }
            self.validate_monitor(m)?;
        }
        if sc == Scenario::Estimates && !self.monitors.iter().any(Monitor::is_estimate) {
            return Err(invalid("estimates needs a cubic_decay, speed or pogorelov monitor"));
        }
        if sc == Scenario::VerifySoliton && self.monitors.is_empty() {
            return Err(invalid("verify-soliton needs a residual monitor"));
        }
        Ok(())
    }

    fn validate_monitor(&self, m: &Monitor) -> Result<(), CliError> {
        let n = self.grid.as_ref().map_or(0, GridSpec::n);
        match m {
            Monitor::OracleError { tol } => check_nonneg("oracle_error.tol", *tol),
            Monitor::Residual { dt, tol } => {
                check_positive("residual.dt", *dt)?;
                check_nonneg("residual.tol", *tol)
            }
            Monitor::CubicDecay { window, tau, tol, .. } => {
                check_window(*window)?;
                check_finite("cubic_decay.tau", *tau)?;
                check_nonneg("cubic_decay.tol", *tol)
            }
            Monitor::Speed { r_floor, window, reference, rel_tol } => {
                check_positive("speed.r_floor", *r_floor)?;
                check_window(*window)?;
                check_positive("speed.reference", *reference)?;
                check_positive("speed.rel_tol", *rel_tol)
            }
            Monitor::Pogorelov { level, center, beta } => {
                if !(*level < 0.0 && level.is_finite()) {
                    return Err(invalid(format!("pogorelov.level must be negative, got {level}")));
                }
                if center.len() != n {
                    return Err(invalid("pogorelov.center needs one entry per chart axis"));
                }
                if let Some(b) = beta {
                    let norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if b.len() != n || (norm - 1.0).abs() > 1e-9 {
                        return Err(invalid("pogorelov.beta must be a unit vector in the chart"));
                    }
                }
                Ok(())
            }
            Monitor::Barrier { eps, v, j, tol } => {
                check_positive("barrier.eps", *eps)?;
                check_positive("barrier.j", *j)?;
                check_nonneg("barrier.tol", *tol)?;
                if v.len() != n + 1 {
                    return Err(invalid("barrier.v needs n + 1 entries"));
                }
                Ok(())
            }
            Monitor::Apolarity { tol } => check_nonneg("apolarity.tol", *tol),
            Monitor::CubicForm { max } => check_nonneg("cubic_form.max", *max),
            Monitor::Classify { residual_tol, .. } => check_nonneg("classify.residual_tol", *residual_tol),
            Monitor::AffineSphere { a, tol } => {
                check_finite("affine_sphere.a", *a)?;
                check_nonneg("affine_sphere.tol", *tol)
            }
            Monitor::LieQuadric { tol, y0 } => {
                check_nonneg("lie_quadric.tol", *tol)?;
                if y0.as_ref().is_some_and(|y| y.len() != n) {
                    return Err(invalid("lie_quadric.y0 needs one entry per chart axis"));
                }
                Ok(())
            }
            Monitor::Limit { gap_tol, slack } => {
                check_nonneg("limit.gap_tol", *gap_tol)?;
                check_nonneg("limit.slack", *slack)
            }
        }
    }
}

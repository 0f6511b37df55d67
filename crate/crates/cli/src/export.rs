//! Column tables for plotting: a commented header, then comma-separated rows.

use std::fmt::Write as _;

use afflow::estimates::{CubicDecayReport, PogorelovReport, SpeedReport};
use afflow::flow::{BarrierReport, LimitTable, Trajectory};
use afflow::solitons::{ResidualReport, SolitonOracle};

use crate::error::CliError;

/// Named columns of equal length.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl Table {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), columns: Vec::new() }
    }

    pub fn with(mut self, column: impl Into<String>, values: Vec<f64>) -> Self {
        self.columns.push((column.into(), values));
        self
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|(c, _)| c.as_str()).collect()
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, |(_, v)| v.len())
    }

    /// `(t, r_numeric, r_exact, max_error)`: the support value at the node nearest
    /// the chart origin divided by `√(1+|y|²)`, which is the radius for a centered
    /// sphere, and the max error over active nodes at margin `band`.
    pub fn oracle_tracking(traj: &Trajectory, oracle: &SolitonOracle, band: usize) -> Result<Self, CliError> {
        let f0 = &traj.frames[0];
        let g = f0.grid();
        let node = g.nearest_node(&vec![0.0; g.n()]);
        let y = g.coords(node);
        let w = (1.0 + y.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let nodes = f0.interior_nodes(band);
        let (mut t, mut num, mut exact, mut err) = (vec![], vec![], vec![], vec![]);
        for f in &traj.frames {
            let o = oracle.field(g, f.time)?;
            t.push(f.time);
            num.push(f.value(node) / w);
            exact.push(if o.is_active(node) { o.value(node) / w } else { f64::NAN });
            let e =
                nodes.iter().filter(|&&i| o.is_active(i)).map(|&i| (f.value(i) - o.value(i)).abs()).fold(0.0, f64::max);
            err.push(e);
        }
        Ok(Table::new("oracle_tracking")
            .with("t", t)
            .with("r_numeric", num)
            .with("r_exact", exact)
            .with("max_error", err))
    }

    /// `(step, t, dt)`; `t` is the time at the start of each step.
    pub fn dt_log(traj: &Trajectory) -> Self {
        let t0 = traj.frames[0].time;
        let mut t = Vec::with_capacity(traj.dts.len());
        let mut acc = t0;
        for &dt in &traj.dts {
            t.push(acc);
            acc += dt;
        }
        Table::new("dt_log")
            .with("step", (0..traj.dts.len()).map(|k| k as f64).collect())
            .with("t", t)
            .with("dt", traj.dts.clone())
    }

    pub fn cubic_decay(r: &CubicDecayReport) -> Self {
        Table::new("cubic_decay").with("t", r.times.clone()).with("ratio", r.ratio.clone())
    }

    pub fn speed(r: &SpeedReport) -> Self {
        Table::new("speed")
            .with("t", r.times.clone())
            .with("q_max", r.q_max.clone())
            .with("q_min", r.q_min.clone())
            .with("bound", r.bound_profile.clone())
            .with("capped", r.capped_profile.clone())
    }

    pub fn pogorelov(r: &PogorelovReport) -> Self {
        Table::new("pogorelov")
            .with("t", r.times.clone())
            .with("max_w", r.max_w.clone())
            .with("boundary_max", r.boundary_max.clone())
    }

    pub fn barrier(r: &BarrierReport) -> Self {
        Table::new("barrier").with("t", r.times.clone()).with("max_excess", r.max_excess.clone())
    }

    /// Node coordinates `y0, y1, ...` and the residual.
    pub fn residual(r: &ResidualReport, coords: impl Fn(usize) -> Vec<f64>) -> Self {
        let ys: Vec<Vec<f64>> = r.nodes.iter().map(|&i| coords(i)).collect();
        let n = ys.first().map_or(0, Vec::len);
        let mut t = Table::new("residual");
        for k in 0..n {
            t = t.with(format!("y{k}"), ys.iter().map(|y| y[k]).collect());
        }
        t.with("residual", r.values.clone())
    }

    /// `(i, monotone_excess, cauchy, hessian_cauchy)` with `NaN` on the first row.
    pub fn limit(table: &LimitTable) -> Self {
        let col = |f: fn(&afflow::flow::LimitRow) -> Option<f64>| -> Vec<f64> {
            table.rows.iter().map(|r| f(r).unwrap_or(f64::NAN)).collect()
        };
        Table::new("limit")
            .with("i", table.rows.iter().map(|r| r.i as f64).collect())
            .with("monotone_excess", col(|r| r.monotone_excess))
            .with("cauchy", col(|r| r.cauchy))
            .with("hessian_cauchy", col(|r| r.hessian_cauchy))
    }

    /// Embedding points `x0, x1, ...`.
    pub fn points(points: &[nalgebra::DVector<f64>]) -> Self {
        let d = points.first().map_or(0, |p| p.len());
        let mut t = Table::new("points");
        for k in 0..d {
            t = t.with(format!("x{k}"), points.iter().map(|p| p[k]).collect());
        }
        t
    }
}

/// Writes the selected columns (all when `columns` is empty) of `table`.
///
/// ```text
/// # cubic_decay
/// # t,ratio
/// 0.1,0.3454
/// ```
pub fn export_plot_data(table: &Table, columns: &[&str]) -> Result<String, CliError> {
    let picked: Vec<&(String, Vec<f64>)> = if columns.is_empty() {
        table.columns.iter().collect()
    } else {
        columns
            .iter()
            .map(|c| {
                table.columns.iter().find(|(name, _)| name == c).ok_or_else(|| {
                    CliError::MissingArtifact(format!(
                        "{} has no column {c:?}; valid columns: {}",
                        table.name,
                        table.column_names().join(", ")
                    ))
                })
            })
            .collect::<Result<_, _>>()?
    };
    if let Some((name, v)) = picked.iter().find(|(_, v)| v.len() != table.rows()) {
        return Err(CliError::MissingArtifact(format!(
            "{}: column {name} has {} rows, expected {}",
            table.name,
            v.len(),
            table.rows()
        )));
    }
    let mut out = String::new();
    writeln!(out, "# {}", table.name).unwrap();
    let names: Vec<&str> = picked.iter().map(|(n, _)| n.as_str()).collect();
    writeln!(out, "# {}", names.join(",")).unwrap();
    for r in 0..table.rows() {
        let row: Vec<String> = picked.iter().map(|(_, v)| num(v[r])).collect();
        writeln!(out, "{}", row.join(",")).unwrap();
    }
    Ok(out)
}

/// Shortest round-tripping form; exponent notation outside `[1e-4, 1e15)`.
fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_names_each_column() {
        let t = Table::new("demo").with("t", vec![0.0, 1.0]).with("ratio", vec![0.5, 0.25]);
        let out = export_plot_data(&t, &[]).unwrap();
        assert_eq!(out, "# demo\n# t,ratio\n0,0.5\n1,0.25\n");
        let only = export_plot_data(&t, &["ratio"]).unwrap();
        assert_eq!(only, "# demo\n# ratio\n0.5\n0.25\n");
        let tiny = Table::new("demo").with("r", vec![-8.881784197001252e-16]);
        assert_eq!(export_plot_data(&tiny, &[]).unwrap(), "# demo\n# r\n-8.881784197001252e-16\n");
    }

    #[test]
    fn unknown_column_lists_valid_ones() {
        let t = Table::new("demo").with("t", vec![0.0]).with("ratio", vec![0.5]);
        let err = export_plot_data(&t, &["speed"]).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, CliError::MissingArtifact(_)));
        assert!(msg.contains("t, ratio"), "{msg}");
    }
}

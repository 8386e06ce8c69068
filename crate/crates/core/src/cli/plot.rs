//! Plot-ready series extracted from results files.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// `log10 h` against `log10 residual`, one series per case.
    ResidualVsH,
    /// Objective (and its standard error) per iteration.
    ObjectiveVsIteration,
    /// Measured entropy-gradient constant per case.
    ConstantVsCase,
}

impl PlotKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PlotKind::ResidualVsH => "residual_vs_h",
            PlotKind::ObjectiveVsIteration => "objective_vs_iteration",
            PlotKind::ConstantVsCase => "constant_vs_case",
        }
    }
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "residual_vs_h" => Ok(PlotKind::ResidualVsH),
            "objective_vs_iteration" => Ok(PlotKind::ObjectiveVsIteration),
            "constant_vs_case" => Ok(PlotKind::ConstantVsCase),
            other => Err(Error::InvalidArgument(format!("unknown plot kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSummary {
    pub path: PathBuf,
    pub rows: usize,
    /// Least-squares log-log slope per series (residual_vs_h only).
    pub slopes: Vec<(String, f64)>,
    /// True when the objective column never increases (objective_vs_iteration).
    pub monotone: Option<bool>,
}

struct Results {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Results {
    fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .flexible(false)
            .from_path(path)?;
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { headers, rows })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    fn number(&self, row: usize, col: usize) -> Option<f64> {
        self.rows[row][col].parse().ok()
    }
}

fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Writes `<results stem>.<kind>.csv` next to the results file.
pub fn emit_plot_data(results_path: &Path, kind: PlotKind) -> Result<PlotSummary> {
    let res = Results::read(results_path)?;
    let stem = results_path
        .file_stem()
        .map_or_else(|| "results".into(), |s| s.to_string_lossy().into_owned());
    let path = results_path.with_file_name(format!("{stem}.{kind}.csv"));
    let mut w = csv::Writer::from_path(&path)?;
    let mut summary = PlotSummary {
        path: path.clone(),
        rows: 0,
        slopes: Vec::new(),
        monotone: None,
    };
    match kind {
        PlotKind::ResidualVsH => {
            let h = res.column("fd_step")?;
            let r = res.column("residual")?;
            let s = res.column("series")?;
            w.write_record(["series", "fd_step", "residual", "log10_h", "log10_residual"])?;
            let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
            for i in 0..res.rows.len() {
                let (Some(hv), Some(rv)) = (res.number(i, h), res.number(i, r)) else {
                    continue;
                };
                if hv <= 0.0 || rv <= 0.0 {
                    continue;
                }
                let (lx, ly) = (hv.log10(), rv.log10());
                w.write_record([
                    res.rows[i][s].clone(),
                    format!("{hv}"),
                    format!("{rv}"),
                    format!("{lx}"),
                    format!("{ly}"),
                ])?;
                summary.rows += 1;
                groups.entry(res.rows[i][s].clone()).or_default().push((lx, ly));
            }
            summary.slopes = groups
                .into_iter()
                .filter(|(_, pts)| pts.len() >= 2)
                .map(|(k, pts)| (k, slope(&pts)))
                .collect();
        }
        PlotKind::ObjectiveVsIteration => {
            let it = res.column("iter")?;
            let obj = res.column("objective")?;
            let se = res.column("std_error").ok();
            w.write_record(["iter", "objective", "std_error"])?;
            let mut prev = f64::INFINITY;
            let mut monotone = true;
            for i in 0..res.rows.len() {
                let v = res.number(i, obj).unwrap_or(f64::NAN);
                monotone &= v <= prev;
                prev = v;
                w.write_record([
                    res.rows[i][it].clone(),
                    res.rows[i][obj].clone(),
                    se.map_or_else(String::new, |c| res.rows[i][c].clone()),
                ])?;
                summary.rows += 1;
            }
            summary.monotone = Some(monotone);
        }
        PlotKind::ConstantVsCase => {
            let case = res.column("case")?;
            let c = res.column("measured_constant")?;
            let pair = res.column("pair")?;
            w.write_record(["case", "pair", "measured_constant"])?;
            for row in &res.rows {
                if row[c].is_empty() {
                    continue;
                }
                w.write_record([row[case].clone(), row[pair].clone(), row[c].clone()])?;
                summary.rows += 1;
            }
        }
    }
    w.flush()?;
    Ok(summary)
}

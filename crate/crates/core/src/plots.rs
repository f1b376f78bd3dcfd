//! Aggregate tables and trajectory drawings from a run report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench::{RunReport, SCENARIOS_DIR};
use crate::error::{Error, Result};
use crate::geometry::Obstacle;
use crate::planner::Solution;
use crate::scenario::Scenario;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const FAILURE_FILE: &str = "failure_rate.csv";
pub const RUNTIME_FILE: &str = "runtime.csv";
pub const COST_FILE: &str = "cost.csv";

/// One (scenario, planner) group of rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub planner: String,
    pub runs: usize,
    pub successes: usize,
    pub failure_rate: f64,
    pub runtime_mean_s: Option<f64>,
    pub runtime_median_s: Option<f64>,
    pub cost_mean: Option<f64>,
    pub cost_median: Option<f64>,
    /// Cost over the best cost seen for the scenario anywhere in the report.
    pub normalized_cost_mean: Option<f64>,
    pub normalized_cost_median: Option<f64>,
}

const SUMMARY_COLUMNS: [&str; 11] = [
    "scenario",
    "planner",
    "runs",
    "successes",
    "failure_rate",
    "runtime_mean_s",
    "runtime_median_s",
    "cost_mean",
    "cost_median",
    "normalized_cost_mean",
    "normalized_cost_median",
];

pub fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    Some(if s.len() % 2 == 1 { s[m] } else { (s[m - 1] + s[m]) / 2.0 })
}

/// Groups rows by scenario and planner. Runtime statistics cover
/// successful runs only, matching how cost is reported.
pub fn summarize(report: &RunReport) -> Vec<SummaryRow> {
    let runtime: BTreeMap<(&str, u64, &str), f64> = report
        .timings
        .iter()
        .map(|t| ((t.scenario.as_str(), t.seed, t.planner.as_str()), t.runtime_s))
        .collect();
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    for r in report.rows.iter().filter(|r| r.success) {
        if let Some(c) = r.cost {
            let b = best.entry(&r.scenario).or_insert(c);
            *b = b.min(c);
        }
    }
    let mut groups: BTreeMap<(&str, &str), Vec<usize>> = BTreeMap::new();
    for (k, r) in report.rows.iter().enumerate() {
        groups.entry((&r.scenario, &r.planner)).or_default().push(k);
    }
    groups
        .into_iter()
        .map(|((scenario, planner), idx)| {
            let ok: Vec<_> = idx.iter().map(|&k| &report.rows[k]).filter(|r| r.success).collect();
            let costs: Vec<f64> = ok.iter().filter_map(|r| r.cost).collect();
            let times: Vec<f64> = ok
                .iter()
                .filter_map(|r| runtime.get(&(scenario, r.seed, planner)).copied())
                .collect();
            let norm: Vec<f64> = match best.get(scenario) {
                Some(&b) if b > 0.0 => costs.iter().map(|c| c / b).collect(),
                Some(_) => costs.iter().map(|_| 1.0).collect(),
                None => Vec::new(),
            };
            SummaryRow {
                scenario: scenario.to_string(),
                planner: planner.to_string(),
                runs: idx.len(),
                successes: ok.len(),
                failure_rate: 1.0 - ok.len() as f64 / idx.len() as f64,
                runtime_mean_s: mean(&times),
                runtime_median_s: median(&times),
                cost_mean: mean(&costs),
                cost_median: median(&costs),
                normalized_cost_mean: mean(&norm),
                normalized_cost_median: median(&norm),
            }
        })
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Scenario rows, one column per planner.
fn pivot(summary: &[SummaryRow], value: impl Fn(&SummaryRow) -> Option<f64>) -> (Vec<String>, Vec<Vec<String>>) {
    let planners: BTreeSet<&str> = summary.iter().map(|s| s.planner.as_str()).collect();
    let scenarios: BTreeSet<&str> = summary.iter().map(|s| s.scenario.as_str()).collect();
    let mut header = vec!["scenario".to_string()];
    header.extend(planners.iter().map(|p| p.to_string()));
    let rows = scenarios
        .iter()
        .map(|sc| {
            let mut row = vec![sc.to_string()];
            for p in &planners {
                let v = summary.iter().find(|s| s.scenario == *sc && s.planner == *p).and_then(&value);
                row.push(fmt_opt(v));
            }
            row
        })
        .collect();
    (header, rows)
}

fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the summary and the three per-planner tables.
pub fn write_tables(dir: &Path, summary: &[SummaryRow]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let header: Vec<String> = SUMMARY_COLUMNS.iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = summary
        .iter()
        .map(|s| {
            vec![
                s.scenario.clone(),
                s.planner.clone(),
                s.runs.to_string(),
                s.successes.to_string(),
                s.failure_rate.to_string(),
                fmt_opt(s.runtime_mean_s),
                fmt_opt(s.runtime_median_s),
                fmt_opt(s.cost_mean),
                fmt_opt(s.cost_median),
                fmt_opt(s.normalized_cost_mean),
                fmt_opt(s.normalized_cost_median),
            ]
        })
        .collect();
    write_table(&dir.join(SUMMARY_FILE), &header, &rows)?;
    let (h, r) = pivot(summary, |s| Some(s.failure_rate));
    write_table(&dir.join(FAILURE_FILE), &h, &r)?;
    let (h, r) = pivot(summary, |s| s.runtime_median_s);
    write_table(&dir.join(RUNTIME_FILE), &h, &r)?;
    let (h, r) = pivot(summary, |s| s.cost_median);
    write_table(&dir.join(COST_FILE), &h, &r)?;
    Ok(())
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Top-down drawing of obstacles, starts, goals and position traces.
pub fn trajectory_svg(sc: &Scenario, sol: &Solution) -> String {
    let ws = &sc.workspace;
    let (w, h) = (ws.upper[0] - ws.lower[0], ws.upper[1] - ws.lower[1]);
    let scale = 600.0 / w.max(h);
    let px = |x: f64| (x - ws.lower[0]) * scale;
    let py = |y: f64| (ws.upper[1] - y) * scale;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.1}" height="{:.1}" viewBox="0 0 {:.1} {:.1}">"#,
        w * scale,
        h * scale,
        w * scale,
        h * scale
    );
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{:.1}" height="{:.1}" fill="#ffffff" stroke="#000000"/>"##, w * scale, h * scale);
    for o in &ws.obstacles {
        match o {
            Obstacle::Box {
                center,
                half_extents,
                yaw,
            } => {
                let _ = writeln!(
                    s,
                    r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" transform="rotate({:.3} {:.2} {:.2})" fill="#888888"/>"##,
                    px(center[0] - half_extents[0]),
                    py(center[1] + half_extents[1]),
                    2.0 * half_extents[0] * scale,
                    2.0 * half_extents[1] * scale,
                    -yaw.to_degrees(),
                    px(center[0]),
                    py(center[1]),
                );
            }
            Obstacle::Sphere { center, radius } => {
                let _ = writeln!(
                    s,
                    r##"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="#888888"/>"##,
                    px(center[0]),
                    py(center[1]),
                    radius * scale
                );
            }
        }
    }
    for (i, (r, path)) in sc.robots.iter().zip(&sol.robots).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = path
            .states
            .iter()
            .map(|x| format!("{:.2},{:.2}", px(x[0]), py(x[1])))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#,
            px(r.start[0]),
            py(r.start[1])
        );
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="6" fill="none" stroke="{color}" stroke-width="2"/>"#,
            px(r.goal[0]),
            py(r.goal[1])
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Tables plus one drawing per successful row. `report_dir` is a bench
/// output directory; everything is written to `out`.
pub fn emit(report_dir: &Path, report: &RunReport, out: &Path) -> Result<usize> {
    write_tables(out, &summarize(report))?;
    let mut drawn = 0;
    for r in report.rows.iter().filter(|r| r.success) {
        let Some(rel) = &r.solution else { continue };
        let sc = Scenario::load(report_dir.join(SCENARIOS_DIR).join(format!("{}.json", r.scenario)))?;
        let sol = Solution::from_json(&std::fs::read_to_string(report_dir.join(rel))?)?;
        let name = format!("{}_s{}_{}.svg", r.scenario, r.seed, r.planner);
        std::fs::write(out.join(name), trajectory_svg(&sc, &sol))?;
        drawn += 1;
    }
    Ok(drawn)
}

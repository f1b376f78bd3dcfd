//! Experiment runner: every (scenario, seed) cell is planned, validated and
//! written out as soon as it and all earlier cells are done.
//!
//! Output layout under the report directory:
//! `results.csv` (deterministic columns), `timing.csv` (wall-clock columns),
//! `solutions/<scenario>_s<seed>.json` and `scenarios/<scenario>.json`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::dynamics::ModelKind;
use crate::error::{Error, Result};
use crate::planner::{generate_library, plan, PlanReport, PlannerConfig, PrimitiveLibrary, Status};
use crate::primitives::PrimitiveSet;
use crate::scenario::Scenario;
use crate::validate::validate;

pub const RESULTS_FILE: &str = "results.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const SOLUTIONS_DIR: &str = "solutions";
pub const SCENARIOS_DIR: &str = "scenarios";

/// Where primitives come from.
#[derive(Clone, Debug)]
pub enum PrimitiveSource {
    /// Fresh sampled sets per cell, seeded with the cell seed.
    Generate { count: usize, horizon: usize },
    /// Fixed sets shared by every cell.
    Fixed(BTreeMap<ModelKind, Arc<PrimitiveSet>>),
}

/// Per-scenario parameters that flags may pin regardless of the scenario file.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Overrides {
    pub delta: Option<f64>,
    pub alpha: Option<f64>,
    pub delta_g: Option<f64>,
}

impl Overrides {
    /// Scenario defaults first, then explicit overrides.
    pub fn resolve(&self, base: &PlannerConfig, sc: &Scenario) -> PlannerConfig {
        let mut cfg = base.clone();
        cfg.delta = self.delta.unwrap_or(sc.defaults.delta);
        cfg.alpha = self.alpha.unwrap_or(sc.defaults.alpha);
        cfg.delta_g = self.delta_g.unwrap_or(sc.defaults.delta_g);
        cfg
    }
}

#[derive(Clone, Debug)]
pub struct BenchSpec {
    pub scenarios: Vec<Scenario>,
    pub seeds: Vec<u64>,
    pub config: PlannerConfig,
    pub overrides: Overrides,
    pub primitives: PrimitiveSource,
    pub jobs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub seed: u64,
    pub planner: String,
    pub status: Status,
    pub success: bool,
    pub valid: Option<bool>,
    pub cost: Option<f64>,
    pub robots: usize,
    /// Search counters; left empty on timeouts where they depend on speed.
    pub iterations: Option<usize>,
    pub nodes: Option<usize>,
    pub horizons: Option<usize>,
    pub pibt_calls: Option<usize>,
    pub collision_checks: Option<usize>,
    pub solution: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub scenario: String,
    pub seed: u64,
    pub planner: String,
    pub runtime_s: f64,
    pub heuristic_s: f64,
    pub collision_unplanned_s: f64,
    pub clustering_s: f64,
    pub collision_planned_s: f64,
    pub rollout_s: f64,
    pub primitives_s: f64,
    pub started_unix_ms: u128,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunReport {
    pub rows: Vec<ResultRow>,
    pub timings: Vec<TimingRow>,
}

impl RunReport {
    pub fn solved(&self) -> usize {
        self.rows.iter().filter(|r| r.success).count()
    }
}

/// File name stem for a cell's solution.
pub fn solution_name(scenario: &str, seed: u64) -> String {
    format!("{scenario}_s{seed}.json")
}

struct Cell {
    row: ResultRow,
    timing: TimingRow,
    solution: Option<String>,
}

fn run_cell(spec: &BenchSpec, sc: &Scenario, seed: u64) -> Result<Cell> {
    let inst = sc.check()?;
    let mut cfg = spec.overrides.resolve(&spec.config, sc);
    cfg.seed = seed;
    let started_unix_ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    let t = Instant::now();
    let lib: PrimitiveLibrary = match &spec.primitives {
        PrimitiveSource::Generate { count, horizon } => generate_library(&inst, *count, *horizon, seed)?,
        PrimitiveSource::Fixed(sets) => {
            let mut lib = PrimitiveLibrary::new();
            for kind in inst.kinds() {
                let set = sets
                    .get(&kind)
                    .ok_or_else(|| Error::InvalidScenario(format!("no primitives for model {kind}")))?;
                lib.insert(kind, set.clone());
            }
            lib
        }
    };
    let primitives_s = t.elapsed().as_secs_f64();
    let report: PlanReport = plan(&inst, &lib, &cfg)?;
    let valid = report.solution.as_ref().map(|s| validate(&inst, s, cfg.delta_g).ok);
    let success = report.status == Status::Solved && valid == Some(true);
    let counted = report.status != Status::Timeout;
    let stats = report.stats;
    let name = solution_name(&sc.name, seed);
    let solution = report.solution.as_ref().map(|s| s.to_json()).transpose()?;
    let tm = report.timing.columns();
    let row = ResultRow {
        scenario: sc.name.clone(),
        seed,
        planner: cfg.planner.id().to_string(),
        status: report.status,
        success,
        valid,
        cost: report.solution.as_ref().map(|s| s.cost),
        robots: inst.robots.len(),
        iterations: counted.then_some(stats.iterations),
        nodes: counted.then_some(stats.nodes),
        horizons: counted.then_some(stats.horizons),
        pibt_calls: counted.then_some(stats.pibt.calls),
        collision_checks: counted.then_some(stats.pibt.collision_checks),
        solution: solution.as_ref().map(|_| format!("{SOLUTIONS_DIR}/{name}")),
    };
    let timing = TimingRow {
        scenario: sc.name.clone(),
        seed,
        planner: row.planner.clone(),
        runtime_s: tm[0].1,
        heuristic_s: tm[1].1,
        collision_unplanned_s: tm[2].1,
        clustering_s: tm[3].1,
        collision_planned_s: tm[4].1,
        rollout_s: tm[5].1,
        primitives_s,
        started_unix_ms,
    };
    Ok(Cell { row, timing, solution })
}

struct Sink {
    dir: PathBuf,
    results: csv::Writer<File>,
    timing: csv::Writer<File>,
}

impl Sink {
    fn create(dir: &Path, scenarios: &[Scenario]) -> Result<Sink> {
        std::fs::create_dir_all(dir.join(SOLUTIONS_DIR))?;
        std::fs::create_dir_all(dir.join(SCENARIOS_DIR))?;
        for sc in scenarios {
            sc.save(dir.join(SCENARIOS_DIR).join(format!("{}.json", sc.name)))?;
        }
        let open = |name: &str| {
            csv::WriterBuilder::new()
                .has_headers(false)
                .from_path(dir.join(name))
                .map_err(csv_err)
        };
        let (mut results, mut timing) = (open(RESULTS_FILE)?, open(TIMING_FILE)?);
        // explicit headers so that an empty report still has them
        results.write_record(RESULT_COLUMNS).map_err(csv_err)?;
        timing.write_record(TIMING_COLUMNS).map_err(csv_err)?;
        results.flush()?;
        timing.flush()?;
        Ok(Sink {
            dir: dir.to_path_buf(),
            results,
            timing,
        })
    }

    fn write(&mut self, cell: &Cell) -> Result<()> {
        if let (Some(text), Some(rel)) = (&cell.solution, &cell.row.solution) {
            let mut f = File::create(self.dir.join(rel))?;
            f.write_all(text.as_bytes())?;
            f.write_all(b"\n")?;
        }
        self.results.serialize(&cell.row).map_err(csv_err)?;
        self.timing.serialize(&cell.timing).map_err(csv_err)?;
        self.results.flush()?;
        self.timing.flush()?;
        Ok(())
    }
}

pub const RESULT_COLUMNS: [&str; 14] = [
    "scenario",
    "seed",
    "planner",
    "status",
    "success",
    "valid",
    "cost",
    "robots",
    "iterations",
    "nodes",
    "horizons",
    "pibt_calls",
    "collision_checks",
    "solution",
];

pub const TIMING_COLUMNS: [&str; 11] = [
    "scenario",
    "seed",
    "planner",
    "runtime_s",
    "heuristic_s",
    "collision_unplanned_s",
    "clustering_s",
    "collision_planned_s",
    "rollout_s",
    "primitives_s",
    "started_unix_ms",
];

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Runs every cell, `jobs` at a time. Rows come out in scenario-major,
/// seed-minor order whatever the completion order was. With `out` set each
/// row is appended and flushed as soon as it can be placed.
pub fn run(spec: &BenchSpec, out: Option<&Path>) -> Result<RunReport> {
    let cells: Vec<(usize, u64)> = (0..spec.scenarios.len())
        .flat_map(|s| spec.seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let mut sink = out.map(|d| Sink::create(d, &spec.scenarios)).transpose()?;
    let mut report = RunReport::default();
    if cells.is_empty() {
        return Ok(report);
    }
    let jobs = spec.jobs.clamp(1, cells.len());
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, Result<Cell>)>();
    let mut first_err = None;
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            let tx = tx.clone();
            let (next, cells) = (&next, &cells);
            scope.spawn(move || loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(s, seed)) = cells.get(k) else { break };
                let cell = run_cell(spec, &spec.scenarios[s], seed);
                if tx.send((k, cell)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut pending: BTreeMap<usize, Cell> = BTreeMap::new();
        let mut emitted = 0;
        for (k, cell) in rx {
            match cell {
                Ok(c) => {
                    pending.insert(k, c);
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                    // stop handing out work; running cells finish on their own
                    next.store(cells.len(), Ordering::SeqCst);
                }
            }
            while let Some(c) = pending.remove(&emitted) {
                if let Some(s) = sink.as_mut() {
                    if let Err(e) = s.write(&c) {
                        first_err.get_or_insert(e);
                    }
                }
                report.rows.push(c.row);
                report.timings.push(c.timing);
                emitted += 1;
            }
        }
    });
    match first_err {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

/// Reads a report directory back.
pub fn load_report(dir: &Path) -> Result<RunReport> {
    let mut report = RunReport::default();
    let mut r = csv::Reader::from_path(dir.join(RESULTS_FILE)).map_err(csv_err)?;
    for row in r.deserialize() {
        report.rows.push(row.map_err(csv_err)?);
    }
    let timing = dir.join(TIMING_FILE);
    if timing.exists() {
        let mut r = csv::Reader::from_path(timing).map_err(csv_err)?;
        for row in r.deserialize() {
            report.timings.push(row.map_err(csv_err)?);
        }
    }
    Ok(report)
}

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context as _, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dblacam::bench::{self, BenchSpec, Overrides, PrimitiveSource};
use dblacam::clustering::{ClusterMethod, Selection};
use dblacam::dynamics::{DynamicsModel, ModelKind};
use dblacam::heuristics::HeuristicMode;
use dblacam::planner::{plan, PlannerConfig, PlannerKind, PrimitiveLibrary, Solution, Status};
use dblacam::plots;
use dblacam::primitives::{generate_primitives, PrimitiveSet};
use dblacam::scenario::{self, Scenario};
use dblacam::validate::validate;

const EXIT_INVALID: u8 = 2;
const EXIT_TIMEOUT: u8 = 3;
const EXIT_UNSOLVED: u8 = 1;

#[derive(Parser)]
#[command(name = "dblacam", version, about = "Multi-robot kinodynamic planner and benchmark harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Plan one scenario and write the solution.
    Plan {
        #[arg(long)]
        scenario: PathBuf,
        /// Solution file; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        planner: PlannerArgs,
        #[command(flatten)]
        prims: PrimitiveArgs,
    },
    /// Check a solution against its scenario.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        solution: PathBuf,
        /// Goal tolerance; defaults to the scenario's.
        #[arg(long)]
        delta_g: Option<f64>,
    },
    /// Run scenarios over seeds and write a report directory.
    Bench {
        /// Scenario files or directories of them.
        #[arg(long = "scenario", required = true, num_args = 1..)]
        scenarios: Vec<PathBuf>,
        /// `a..b`, a comma list, or a single seed.
        #[arg(long, default_value = "0..10")]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        planner: PlannerArgs,
        #[command(flatten)]
        prims: PrimitiveArgs,
    },
    /// Write generated scenario files.
    GenScenarios {
        #[arg(long, value_enum)]
        kind: ScenarioKind,
        #[arg(long, default_value_t = 4)]
        n: usize,
        /// Circle radius.
        #[arg(long, default_value_t = 2.0)]
        radius: f64,
        /// Random workspace side length.
        #[arg(long, default_value_t = 10.0)]
        size: f64,
        #[arg(long, default_value_t = 0.1)]
        density: f64,
        #[arg(long, default_value = "0")]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample a primitive set for one model.
    GenPrimitives {
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 300)]
        count: usize,
        #[arg(long, default_value_t = 20)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summary tables and trajectory drawings for a bench report.
    Plot {
        #[arg(long)]
        report: PathBuf,
        /// Defaults to `<report>/plots`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioKind {
    Circle,
    Random2d,
    Headon2,
    SwapHetero,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlannerArg {
    Dblacam,
    Dbpibt,
}

#[derive(Clone, Copy, ValueEnum)]
enum HeuristicArg {
    Hest,
    ReverseGridOnly,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClusterArg {
    Goc,
    Scgoc,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectionArg {
    Vanilla,
    Det,
    Weighted,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args)]
struct PlannerArgs {
    #[arg(long, value_enum, default_value = "dblacam")]
    planner: PlannerArg,
    #[arg(long, value_enum, default_value = "hest")]
    heuristic: HeuristicArg,
    #[arg(long, value_enum, default_value = "goc")]
    cluster: ClusterArg,
    #[arg(long, value_enum, default_value = "det")]
    selection: SelectionArg,
    /// Elements taken per cluster.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Seconds; 0 fails immediately.
    #[arg(long, default_value_t = 60.0)]
    timelimit: f64,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    delta_g: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    margin: f64,
    #[arg(long)]
    explored_res: Option<f64>,
    #[arg(long, value_enum, default_value = "on")]
    livelock: Switch,
    #[arg(long, default_value_t = 5)]
    livelock_window: usize,
    #[arg(long, default_value_t = 3)]
    livelock_alternations: usize,
    #[arg(long)]
    node_budget: Option<usize>,
    #[arg(long, default_value_t = 500)]
    max_horizons: usize,
    /// Restart rounds that append freshly sampled primitives.
    #[arg(long, num_args = 0..=1, default_missing_value = "10", default_value_t = 0)]
    incremental_primitives: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PrimitiveArgs {
    /// Primitive files, one per model; sampled per seed when absent.
    #[arg(long = "primitives", num_args = 1..)]
    files: Vec<PathBuf>,
    #[arg(long, default_value_t = 300)]
    count: usize,
    #[arg(long, default_value_t = 20)]
    horizon: usize,
}

impl PlannerArgs {
    fn config(&self) -> PlannerConfig {
        let mut c = PlannerConfig {
            planner: match self.planner {
                PlannerArg::Dblacam => PlannerKind::Dblacam,
                PlannerArg::Dbpibt => PlannerKind::Dbpibt,
            },
            margin: self.margin,
            livelock: matches!(self.livelock, Switch::On),
            livelock_window: self.livelock_window,
            livelock_alternations: self.livelock_alternations,
            explored_res: self.explored_res,
            time_limit: Some(self.timelimit),
            node_budget: self.node_budget,
            max_horizons: self.max_horizons,
            incremental_rounds: self.incremental_primitives,
            seed: self.seed,
            ..PlannerConfig::default()
        };
        c.heuristic.mode = match self.heuristic {
            HeuristicArg::Hest => HeuristicMode::Hest,
            HeuristicArg::ReverseGridOnly => HeuristicMode::ReverseGridOnly,
        };
        c.cluster.method = match self.cluster {
            ClusterArg::Goc => ClusterMethod::Goc,
            ClusterArg::Scgoc => ClusterMethod::Scgoc,
            ClusterArg::None => ClusterMethod::None,
        };
        c.cluster.selection = match self.selection {
            SelectionArg::Vanilla => Selection::Vanilla,
            SelectionArg::Det => Selection::Deterministic,
            SelectionArg::Weighted => Selection::Weighted,
        };
        if let Some(n) = self.n {
            c.cluster.n = n;
        }
        if self.rho.is_some() {
            c.cluster.rho = self.rho;
        }
        if let Some(t) = self.tau {
            c.cluster.tau = t;
        }
        c
    }

    fn overrides(&self) -> Overrides {
        Overrides {
            delta: self.delta,
            alpha: self.alpha,
            delta_g: self.delta_g,
        }
    }
}

impl PrimitiveArgs {
    fn source(&self) -> Result<PrimitiveSource> {
        if self.files.is_empty() {
            return Ok(PrimitiveSource::Generate {
                count: self.count,
                horizon: self.horizon,
            });
        }
        let mut sets = BTreeMap::new();
        for f in &self.files {
            let set = PrimitiveSet::load(f).with_context(|| format!("loading {}", f.display()))?;
            if sets.insert(set.model.kind, Arc::new(set)).is_some() {
                bail!("more than one primitive file for the same model ({})", f.display());
            }
        }
        Ok(PrimitiveSource::Fixed(sets))
    }
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        return Ok((a..b).collect());
    }
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<u64>().with_context(|| format!("bad seed {t:?}")))
        .collect()
}

fn scenario_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|e| e == "json"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn load_scenario(p: &Path) -> Result<Scenario> {
    Scenario::load(p).with_context(|| format!("loading scenario {}", p.display()))
}

fn run_plan(path: &Path, out: Option<&Path>, pa: &PlannerArgs, prims: &PrimitiveArgs) -> Result<ExitCode> {
    let sc = load_scenario(path)?;
    let inst = sc.check()?;
    let cfg = pa.overrides().resolve(&pa.config(), &sc);
    let lib: PrimitiveLibrary = match prims.source()? {
        PrimitiveSource::Generate { count, horizon } => {
            dblacam::planner::generate_library(&inst, count, horizon, cfg.seed)?
        }
        PrimitiveSource::Fixed(sets) => {
            let mut lib = PrimitiveLibrary::new();
            for kind in inst.kinds() {
                let Some(s) = sets.get(&kind) else { bail!("no primitive file for model {kind}") };
                lib.insert(kind, s.clone());
            }
            lib
        }
    };
    let report = plan(&inst, &lib, &cfg)?;
    eprintln!(
        "status={:?} time={:.3}s nodes={} iterations={}{}",
        report.status,
        report.timing.total.as_secs_f64(),
        report.stats.nodes,
        report.stats.iterations,
        report.reason.as_ref().map(|r| format!(" reason={r}")).unwrap_or_default()
    );
    let Some(sol) = report.solution else {
        return Ok(ExitCode::from(if report.status == Status::Timeout {
            EXIT_TIMEOUT
        } else {
            EXIT_UNSOLVED
        }));
    };
    let text = sol.to_json()?;
    match out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    let v = validate(&inst, &sol, cfg.delta_g);
    eprintln!("cost={} valid={}", sol.cost, v.ok);
    Ok(if v.ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_INVALID)
    })
}

fn run_validate(scenario: &Path, solution: &Path, delta_g: Option<f64>) -> Result<ExitCode> {
    let sc = load_scenario(scenario)?;
    let inst = sc.check()?;
    let sol = Solution::from_json(&std::fs::read_to_string(solution)?)?;
    let report = validate(&inst, &sol, delta_g.unwrap_or(sc.defaults.delta_g));
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(if report.ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_INVALID)
    })
}

fn run_bench(paths: &[PathBuf], seeds: &str, out: &Path, jobs: usize, pa: &PlannerArgs, prims: &PrimitiveArgs) -> Result<ExitCode> {
    let scenarios = scenario_files(paths)?
        .iter()
        .map(|p| load_scenario(p))
        .collect::<Result<Vec<_>>>()?;
    let spec = BenchSpec {
        scenarios,
        seeds: parse_seeds(seeds)?,
        config: pa.config(),
        overrides: pa.overrides(),
        primitives: prims.source()?,
        jobs,
    };
    let report = bench::run(&spec, Some(out))?;
    eprintln!("{}/{} solved, report in {}", report.solved(), report.rows.len(), out.display());
    let failed: Vec<_> = report.rows.iter().filter(|r| !r.success).collect();
    Ok(if failed.iter().any(|r| r.valid == Some(false)) {
        ExitCode::from(EXIT_INVALID)
    } else if failed.is_empty() {
        ExitCode::SUCCESS
    } else if failed.iter().all(|r| r.status == Status::Timeout) {
        ExitCode::from(EXIT_TIMEOUT)
    } else {
        ExitCode::from(EXIT_UNSOLVED)
    })
}

#[allow(clippy::too_many_arguments)]
fn run_gen_scenarios(kind: ScenarioKind, n: usize, radius: f64, size: f64, density: f64, seeds: &str, out: &Path) -> Result<ExitCode> {
    std::fs::create_dir_all(out)?;
    let list: Vec<Scenario> = match kind {
        ScenarioKind::Circle => vec![scenario::circle(n, radius)],
        ScenarioKind::Headon2 => vec![scenario::headon2()],
        ScenarioKind::SwapHetero => vec![scenario::swap_hetero(n, radius)],
        ScenarioKind::Random2d => parse_seeds(seeds)?
            .into_iter()
            .map(|s| scenario::random2d(n, size, density, s))
            .collect::<dblacam::Result<_>>()?,
    };
    for sc in &list {
        let p = out.join(format!("{}.json", sc.name));
        sc.save(&p)?;
        println!("{}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn run_gen_primitives(model: &str, count: usize, horizon: usize, seed: u64, out: &Path) -> Result<ExitCode> {
    let Some(kind) = ModelKind::from_id(model) else {
        let ids: Vec<_> = ModelKind::ALL.iter().map(|k| k.id()).collect();
        bail!("unknown model {model:?}; expected one of {}", ids.join(", "));
    };
    let set = generate_primitives(&DynamicsModel::new(kind), count, horizon, seed)?;
    set.save(out)?;
    eprintln!("{} primitives of {} steps written to {}", set.len(), set.horizon, out.display());
    Ok(ExitCode::SUCCESS)
}

fn run_plot(report_dir: &Path, out: Option<&Path>) -> Result<ExitCode> {
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| report_dir.join("plots"));
    let report = bench::load_report(report_dir)?;
    let drawn = plots::emit(report_dir, &report, &out)?;
    eprintln!("tables and {drawn} drawings in {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    // usage errors exit with 1; 2 is reserved for invalid solutions
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    let res = match &cli.cmd {
        Cmd::Plan {
            scenario,
            out,
            planner,
            prims,
        } => run_plan(scenario, out.as_deref(), planner, prims),
        Cmd::Validate {
            scenario,
            solution,
            delta_g,
        } => run_validate(scenario, solution, *delta_g),
        Cmd::Bench {
            scenarios,
            seeds,
            out,
            jobs,
            planner,
            prims,
        } => run_bench(scenarios, seeds, out, *jobs, planner, prims),
        Cmd::GenScenarios {
            kind,
            n,
            radius,
            size,
            density,
            seeds,
            out,
        } => run_gen_scenarios(*kind, *n, *radius, *size, *density, seeds, out),
        Cmd::GenPrimitives {
            model,
            count,
            horizon,
            seed,
            out,
        } => run_gen_primitives(model, *count, *horizon, *seed, out),
        Cmd::Plot { report, out } => run_plot(report, out.as_deref()),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

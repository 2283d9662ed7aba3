//! Seeded multi-replica experiments and their CSV/JSON outputs.
//!
//! Replica `r` of every scheme is seeded with `base_seed + r`, and every
//! exogenous source draws from its own stream, so schemes compared in one
//! call see identical workload, environment, congestion and green-energy
//! sequences.

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::ConfigErrors;
use crate::env::{Draw, EnvError, World};
use crate::learners::{Agent, FixedAgent, LearnerError, MyopicAgent, PdsLearner, PolicyAgent, QLearner, Transition};
use crate::models::EdgeSystem;
use crate::oracle::{self, OracleError, ValueTables};
use crate::state::SystemState;

pub const SCHEMA_VERSION: u32 = 1;

/// Fixed budgets swept when no scheme list is given.
pub const DEFAULT_FIXED_LEVELS: [f64; 3] = [50.0, 100.0, 150.0];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigErrors),
    #[error("unknown scheme `{0}` (expected pds, q, myopic, oracle or fixed:<level>)")]
    UnknownScheme(String),
    #[error("fixed level {0} Wh is not on the action grid")]
    FixedLevelOffGrid(f64),
    #[error("need at least {0}")]
    Usage(&'static str),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    Pds,
    QLearning,
    Myopic,
    /// Fixed computing budget, Wh per slot.
    Fixed(f64),
    Oracle,
}

impl Scheme {
    /// Filesystem-friendly name.
    pub fn slug(&self) -> String {
        self.to_string().replace(':', "-")
    }

    /// The default line-up: the learner, both learning baselines and the
    /// fixed-budget sweep.
    pub fn default_lineup() -> Vec<Scheme> {
        let mut v = vec![Scheme::Pds, Scheme::QLearning, Scheme::Myopic];
        v.extend(DEFAULT_FIXED_LEVELS.iter().map(|&l| Scheme::Fixed(l)));
        v
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Pds => f.write_str("pds"),
            Scheme::QLearning => f.write_str("q"),
            Scheme::Myopic => f.write_str("myopic"),
            Scheme::Fixed(l) => write!(f, "fixed:{l}"),
            Scheme::Oracle => f.write_str("oracle"),
        }
    }
}

impl FromStr for Scheme {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "pds" => Ok(Scheme::Pds),
            "q" | "q-learning" => Ok(Scheme::QLearning),
            "myopic" => Ok(Scheme::Myopic),
            "oracle" => Ok(Scheme::Oracle),
            _ => s
                .strip_prefix("fixed:")
                .and_then(|l| l.parse::<f64>().ok())
                .filter(|l| l.is_finite() && *l >= 0.0)
                .map(Scheme::Fixed)
                .ok_or_else(|| HarnessError::UnknownScheme(s.to_string())),
        }
    }
}

/// Parses a comma-separated scheme list.
pub fn parse_schemes(list: &str) -> Result<Vec<Scheme>, HarnessError> {
    list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub slots: u64,
    pub runs: usize,
    pub base_seed: u64,
    /// Keep per-slot exogenous draws for audit.
    pub trace: bool,
}

/// One simulated slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRecord {
    pub run: usize,
    pub slot: u64,
    pub state: SystemState,
    pub action: usize,
    pub green_wh: f64,
    pub cost: f64,
    pub backup: bool,
    pub battery_after: usize,
}

#[derive(Debug, Clone)]
pub struct Replica {
    pub records: Vec<RunRecord>,
    pub trace: Option<Vec<Draw>>,
    /// Greedy action per state at the end of the run.
    pub policy: Vec<usize>,
}

/// All replicas of one scheme.
#[derive(Debug, Clone)]
pub struct SchemeRun {
    pub scheme: Scheme,
    pub replicas: Vec<Replica>,
    pub wall_clock_seconds: f64,
}

impl SchemeRun {
    /// Element `t` is the mean over runs of the average realized cost over
    /// slots `0..=t`.
    pub fn running_average(&self) -> Vec<f64> {
        let slots = self.replicas.first().map_or(0, |r| r.records.len());
        let mut out = vec![0.0; slots];
        for rep in &self.replicas {
            let mut sum = 0.0;
            for (t, rec) in rep.records.iter().enumerate() {
                sum += rec.cost;
                out[t] += sum / (t + 1) as f64;
            }
        }
        let n = self.replicas.len() as f64;
        out.iter_mut().for_each(|x| *x /= n);
        out
    }

    pub fn discounted_costs(&self, discount: f64) -> Vec<f64> {
        self.replicas
            .iter()
            .map(|rep| {
                let mut weight = 1.0;
                let mut total = 0.0;
                for rec in &rep.records {
                    total += weight * rec.cost;
                    weight *= discount;
                }
                total
            })
            .collect()
    }

    /// Slot-start battery level counts over all slots of all runs.
    pub fn battery_histogram(&self, levels: usize) -> Vec<u64> {
        let mut hist = vec![0u64; levels];
        for rec in self.replicas.iter().flat_map(|r| &r.records) {
            hist[rec.state.battery] += 1;
        }
        hist
    }
}

fn make_agent(
    sys: &Arc<EdgeSystem>,
    scheme: Scheme,
    seed: u64,
    slots: u64,
    oracle_policy: Option<&Arc<Vec<usize>>>,
) -> Box<dyn Agent> {
    match scheme {
        Scheme::Pds => Box::new(PdsLearner::new(Arc::clone(sys), seed)),
        Scheme::QLearning => Box::new(QLearner::new(Arc::clone(sys), seed, slots)),
        Scheme::Myopic => Box::new(MyopicAgent::new(Arc::clone(sys))),
        Scheme::Fixed(level) => Box::new(FixedAgent::new(Arc::clone(sys), level)),
        Scheme::Oracle => Box::new(PolicyAgent::new(
            Arc::clone(sys),
            Arc::clone(oracle_policy.expect("oracle policy solved before simulation")),
            "oracle",
        )),
    }
}

/// Runs one replica: select, step, observe, record.
pub fn run_replica(
    sys: &Arc<EdgeSystem>,
    agent: &mut dyn Agent,
    run: usize,
    slots: u64,
    seed: u64,
    trace: bool,
) -> Result<Replica, HarnessError> {
    let mut world = World::new(Arc::clone(sys), seed);
    if trace {
        world.enable_trace();
    }
    let step_wh = sys.config().battery.step_wh;
    let mut records = Vec::with_capacity(slots as usize);
    for slot in 0..slots {
        let state = world.state();
        let action = agent.select(state);
        let step = world.step(action)?;
        agent.observe(&Transition {
            slot,
            state,
            action,
            green: step.green,
            cost: step.cost,
            next: step.next,
        })?;
        records.push(RunRecord {
            run,
            slot,
            state,
            action,
            green_wh: step.green as f64 * step_wh,
            cost: step.cost,
            backup: step.backup,
            battery_after: step.next.battery,
        });
    }
    let policy = sys.config().space.iter().map(|s| agent.greedy_action(s)).collect();
    Ok(Replica {
        records,
        trace: world.take_trace(),
        policy,
    })
}

fn check_fixed_level(sys: &EdgeSystem, scheme: Scheme) -> Result<(), HarnessError> {
    match scheme {
        Scheme::Fixed(l) if sys.config().actions.index_of_wh(l).is_none() => {
            Err(HarnessError::FixedLevelOffGrid(l))
        }
        _ => Ok(()),
    }
}

/// Simulates `opts.runs` replicas of `scheme` in parallel. Results are in
/// replica order regardless of scheduling.
pub fn simulate(
    sys: &Arc<EdgeSystem>,
    scheme: Scheme,
    opts: &RunOptions,
    oracle_policy: Option<&Arc<Vec<usize>>>,
) -> Result<SchemeRun, HarnessError> {
    if opts.runs == 0 {
        return Err(HarnessError::Usage("one run"));
    }
    check_fixed_level(sys, scheme)?;
    let start = Instant::now();
    let replicas = (0..opts.runs)
        .into_par_iter()
        .map(|run| {
            let seed = opts.base_seed.wrapping_add(run as u64);
            let mut agent = make_agent(sys, scheme, seed, opts.slots, oracle_policy);
            run_replica(sys, agent.as_mut(), run, opts.slots, seed, opts.trace)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SchemeRun {
        scheme,
        replicas,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeSummary {
    pub scheme: String,
    /// Mean running-average cost at the last slot (0 for empty runs).
    pub final_running_average: f64,
    pub mean_discounted_cost: f64,
    pub discounted_cost_per_run: Vec<f64>,
    pub mean_battery_wh: f64,
    /// Share of slots starting with a full battery.
    pub full_battery_fraction: f64,
    pub backup_fraction: f64,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub slots: u64,
    pub runs: usize,
    pub base_seed: u64,
    pub discount: f64,
    pub schemes: Vec<SchemeSummary>,
    pub wall_clock_seconds: f64,
}

impl RunSummary {
    pub fn scheme(&self, name: &str) -> Option<&SchemeSummary> {
        self.schemes.iter().find(|s| s.scheme == name)
    }
}

fn summarize(sys: &EdgeSystem, run: &SchemeRun) -> SchemeSummary {
    let cfg = sys.config();
    let hist = run.battery_histogram(cfg.battery.levels());
    let total: u64 = hist.iter().sum();
    let (mean_battery_wh, full_battery_fraction) = if total == 0 {
        (0.0, 0.0)
    } else {
        let mean = hist
            .iter()
            .enumerate()
            .map(|(b, &n)| cfg.battery.wh(b) * n as f64)
            .sum::<f64>()
            / total as f64;
        (mean, hist[cfg.battery.max_level] as f64 / total as f64)
    };
    let backups = run
        .replicas
        .iter()
        .flat_map(|r| &r.records)
        .filter(|r| r.backup)
        .count();
    let discounted = run.discounted_costs(cfg.discount());
    SchemeSummary {
        scheme: run.scheme.to_string(),
        final_running_average: run.running_average().last().copied().unwrap_or(0.0),
        mean_discounted_cost: discounted.iter().sum::<f64>() / discounted.len() as f64,
        discounted_cost_per_run: discounted,
        mean_battery_wh,
        full_battery_fraction,
        backup_fraction: if total == 0 { 0.0 } else { backups as f64 / total as f64 },
        wall_clock_seconds: run.wall_clock_seconds,
    }
}

fn oracle_policy_if_needed(
    sys: &EdgeSystem,
    schemes: &[Scheme],
) -> Result<Option<Arc<Vec<usize>>>, HarnessError> {
    if schemes.contains(&Scheme::Oracle) {
        let tables = oracle::value_iteration(sys, oracle::DEFAULT_TOL)?;
        Ok(Some(Arc::new(tables.policy)))
    } else {
        Ok(None)
    }
}

/// Simulates every scheme with common random numbers and summarizes.
pub fn run_schemes(
    sys: &Arc<EdgeSystem>,
    schemes: &[Scheme],
    opts: &RunOptions,
) -> Result<(RunSummary, Vec<SchemeRun>), HarnessError> {
    let start = Instant::now();
    for &s in schemes {
        check_fixed_level(sys, s)?;
    }
    let oracle_policy = oracle_policy_if_needed(sys, schemes)?;
    let runs = schemes
        .iter()
        .map(|&scheme| simulate(sys, scheme, opts, oracle_policy.as_ref()))
        .collect::<Result<Vec<_>, _>>()?;
    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        slots: opts.slots,
        runs: opts.runs,
        base_seed: opts.base_seed,
        discount: sys.config().discount(),
        schemes: runs.iter().map(|r| summarize(sys, r)).collect(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((summary, runs))
}

/// Single-scheme experiment; writes outputs when `out` is given.
pub fn run_experiment(
    sys: &Arc<EdgeSystem>,
    scheme: Scheme,
    opts: &RunOptions,
    out: Option<&Path>,
) -> Result<(RunSummary, SchemeRun), HarnessError> {
    let (summary, mut runs) = run_schemes(sys, &[scheme], opts)?;
    if let Some(dir) = out {
        write_outputs(sys, &summary, &runs, dir)?;
    }
    Ok((summary, runs.remove(0)))
}

/// Relative cost reduction of the best scheme against one other.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reduction {
    pub scheme: String,
    pub final_running_average: f64,
    /// `(other - best) / other`.
    pub reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub schema_version: u32,
    pub best: String,
    pub best_final_running_average: f64,
    pub ranking: Vec<Reduction>,
}

impl Comparison {
    pub fn reduction_vs(&self, scheme: &str) -> Option<f64> {
        self.ranking.iter().find(|r| r.scheme == scheme).map(|r| r.reduction)
    }
}

/// Ranks schemes by final running-average cost. The first entry of
/// `ranking` is the best scheme itself (reduction 0).
pub fn rank(summary: &RunSummary) -> Comparison {
    let mut entries: Vec<_> = summary
        .schemes
        .iter()
        .map(|s| (s.scheme.clone(), s.final_running_average))
        .collect();
    entries.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (best, best_cost) = entries[0].clone();
    let ranking = entries
        .into_iter()
        .map(|(scheme, cost)| Reduction {
            reduction: if cost > 0.0 { (cost - best_cost) / cost } else { 0.0 },
            scheme,
            final_running_average: cost,
        })
        .collect();
    Comparison {
        schema_version: SCHEMA_VERSION,
        best,
        best_final_running_average: best_cost,
        ranking,
    }
}

pub fn compare(
    sys: &Arc<EdgeSystem>,
    schemes: &[Scheme],
    opts: &RunOptions,
    out: Option<&Path>,
) -> Result<(RunSummary, Comparison, Vec<SchemeRun>), HarnessError> {
    if schemes.len() < 2 {
        return Err(HarnessError::Usage("two schemes to compare"));
    }
    let (summary, runs) = run_schemes(sys, schemes, opts)?;
    let comparison = rank(&summary);
    if let Some(dir) = out {
        write_outputs(sys, &summary, &runs, dir)?;
        fs::write(dir.join("comparison.json"), serde_json::to_string_pretty(&comparison)? + "\n")?;
    }
    Ok((summary, comparison, runs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub tables: ValueTables,
    pub residuals: Vec<f64>,
}

impl SolveReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// Solves exactly (at most `max_iter` sweeps) and writes `C_star.csv`,
/// `V_star.csv` and `policy_star.csv` when `out` is given.
pub fn solve(sys: &EdgeSystem, max_iter: usize, out: Option<&Path>) -> Result<SolveReport, HarnessError> {
    let tables = oracle::value_iteration_capped(sys, oracle::DEFAULT_TOL, max_iter)?;
    let residuals = oracle::pds_consistency_residuals(sys, &tables);
    let report = SolveReport { tables, residuals };
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_solution(sys, &report, dir)?;
    }
    Ok(report)
}

fn state_columns(sys: &EdgeSystem, s: SystemState) -> [String; 4] {
    let cfg = sys.config();
    [
        cfg.workload(s.workload).to_string(),
        cfg.env_name(s.env).to_string(),
        cfg.congestion(s.congestion).to_string(),
        cfg.battery.wh(s.battery).to_string(),
    ]
}

fn write_solution(sys: &EdgeSystem, report: &SolveReport, dir: &Path) -> Result<(), HarnessError> {
    let cfg = sys.config();
    let mut c = csv::Writer::from_path(dir.join("C_star.csv"))?;
    c.write_record(["state", "lambda", "env", "congestion_s", "battery_wh", "value"])?;
    let mut v = csv::Writer::from_path(dir.join("V_star.csv"))?;
    v.write_record(["state", "lambda", "env", "congestion_s", "battery_post_wh", "value"])?;
    let mut p = csv::Writer::from_path(dir.join("policy_star.csv"))?;
    p.write_record([
        "state",
        "lambda",
        "env",
        "congestion_s",
        "battery_wh",
        "action_wh",
        "servers",
        "local_rate",
        "residual",
    ])?;
    for (i, s) in cfg.space.iter().enumerate() {
        let cols = state_columns(sys, s);
        let idx = i.to_string();
        let mut row: Vec<String> = std::iter::once(idx.clone()).chain(cols.iter().cloned()).collect();
        row.push(report.tables.c_star[i].to_string());
        c.write_record(&row)?;
        row.pop();
        row.push(report.tables.v_star[i].to_string());
        v.write_record(&row)?;
        row.pop();
        let a = report.tables.policy[i];
        let alloc = policy_allocation(sys, s, a);
        row.extend([
            cfg.actions.wh(a).to_string(),
            alloc.0.to_string(),
            alloc.1.to_string(),
            report.residuals[i].to_string(),
        ]);
        p.write_record(&row)?;
    }
    c.flush()?;
    v.flush()?;
    p.flush()?;
    Ok(())
}

/// Servers and local rate implied by action `a`; nothing runs locally in a
/// backup slot.
fn policy_allocation(sys: &EdgeSystem, s: SystemState, a: usize) -> (u32, f64) {
    if sys.is_backup(s) {
        (0, 0.0)
    } else {
        let alloc = sys.allocation(s, a);
        (alloc.m, alloc.mu)
    }
}

fn write_policy(sys: &EdgeSystem, policy: &[usize], path: &Path) -> Result<(), HarnessError> {
    let cfg = sys.config();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "state",
        "lambda",
        "env",
        "congestion_s",
        "battery_wh",
        "action_wh",
        "servers",
        "local_rate",
    ])?;
    for (i, s) in cfg.space.iter().enumerate() {
        let a = policy[i];
        let (m, mu) = policy_allocation(sys, s, a);
        let mut row = vec![i.to_string()];
        row.extend(state_columns(sys, s));
        row.extend([cfg.actions.wh(a).to_string(), m.to_string(), mu.to_string()]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `runtime_costs.csv`, `battery_hist.csv`, `discounted_costs.csv`,
/// `records.csv`, the learned policies, optional traces and `summary.json`.
///
/// With one scheme the policy and trace files are `policy.csv` and
/// `trace.csv`; with several they carry a `_<scheme>` suffix.
pub fn write_outputs(
    sys: &EdgeSystem,
    summary: &RunSummary,
    runs: &[SchemeRun],
    dir: &Path,
) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    let cfg = sys.config();
    let names: Vec<String> = runs.iter().map(|r| r.scheme.to_string()).collect();

    let mut w = csv::Writer::from_path(dir.join("runtime_costs.csv"))?;
    w.write_record(std::iter::once("slot".to_string()).chain(names.iter().cloned()))?;
    let series: Vec<Vec<f64>> = runs.iter().map(SchemeRun::running_average).collect();
    for t in 0..summary.slots as usize {
        let row = std::iter::once(t.to_string()).chain(series.iter().map(|s| s[t].to_string()));
        w.write_record(row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("battery_hist.csv"))?;
    w.write_record(std::iter::once("battery_wh".to_string()).chain(names.iter().cloned()))?;
    let hists: Vec<Vec<u64>> = runs.iter().map(|r| r.battery_histogram(cfg.battery.levels())).collect();
    for b in 0..cfg.battery.levels() {
        let row = std::iter::once(cfg.battery.wh(b).to_string()).chain(hists.iter().map(|h| h[b].to_string()));
        w.write_record(row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("discounted_costs.csv"))?;
    w.write_record(std::iter::once("run".to_string()).chain(names.iter().cloned()))?;
    let discounted: Vec<Vec<f64>> = runs.iter().map(|r| r.discounted_costs(cfg.discount())).collect();
    for run in 0..summary.runs {
        let row = std::iter::once(run.to_string()).chain(discounted.iter().map(|d| d[run].to_string()));
        w.write_record(row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("records.csv"))?;
    w.write_record([
        "scheme",
        "run",
        "slot",
        "lambda",
        "env",
        "congestion_s",
        "battery_wh",
        "action_wh",
        "green_wh",
        "cost",
        "backup",
        "battery_after_wh",
    ])?;
    for run in runs {
        let name = run.scheme.to_string();
        for rec in run.replicas.iter().flat_map(|r| &r.records) {
            let mut row = vec![name.clone(), rec.run.to_string(), rec.slot.to_string()];
            row.extend(state_columns(sys, rec.state));
            row.extend([
                cfg.actions.wh(rec.action).to_string(),
                rec.green_wh.to_string(),
                rec.cost.to_string(),
                u8::from(rec.backup).to_string(),
                cfg.battery.wh(rec.battery_after).to_string(),
            ]);
            w.write_record(&row)?;
        }
    }
    w.flush()?;

    let single = runs.len() == 1;
    for run in runs {
        let suffix = if single { String::new() } else { format!("_{}", run.scheme.slug()) };
        write_policy(sys, &run.replicas[0].policy, &dir.join(format!("policy{suffix}.csv")))?;
        if run.replicas.iter().all(|r| r.trace.is_some()) {
            let mut w = csv::Writer::from_path(dir.join(format!("trace{suffix}.csv")))?;
            w.write_record(["run", "slot", "green_wh", "lambda", "env", "congestion_s"])?;
            for (r, rep) in run.replicas.iter().enumerate() {
                for (t, d) in rep.trace.as_deref().unwrap_or_default().iter().enumerate() {
                    w.write_record([
                        r.to_string(),
                        t.to_string(),
                        cfg.battery.wh(d.green).to_string(),
                        cfg.workload(d.workload).to_string(),
                        cfg.env_name(d.env).to_string(),
                        cfg.congestion(d.congestion).to_string(),
                    ])?;
                }
            }
            w.flush()?;
        }
    }

    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(summary)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;

    fn sys() -> Arc<EdgeSystem> {
        Arc::new(EdgeSystem::new(Config::default()))
    }

    fn opts(slots: u64, runs: usize) -> RunOptions {
        RunOptions {
            slots,
            runs,
            base_seed: 17,
            trace: false,
        }
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in ["pds", "q", "myopic", "oracle", "fixed:50", "fixed:12.5"] {
            assert_eq!(s.parse::<Scheme>().unwrap().to_string(), s);
        }
        assert_eq!("q-learning".parse::<Scheme>().unwrap(), Scheme::QLearning);
        assert!(matches!("sarsa".parse::<Scheme>(), Err(HarnessError::UnknownScheme(_))));
        assert!(matches!("fixed:abc".parse::<Scheme>(), Err(HarnessError::UnknownScheme(_))));
        assert_eq!(Scheme::Fixed(50.0).slug(), "fixed-50");
        assert_eq!(parse_schemes("pds, q,fixed:100").unwrap().len(), 3);
    }

    #[test]
    fn off_grid_fixed_level_is_rejected() {
        assert!(matches!(
            simulate(&sys(), Scheme::Fixed(60.0), &opts(1, 1), None),
            Err(HarnessError::FixedLevelOffGrid(_))
        ));
    }

    #[test]
    fn zero_slots_is_vacuous() {
        let (summary, run) = run_experiment(&sys(), Scheme::Pds, &opts(0, 2), None).unwrap();
        assert!(run.running_average().is_empty());
        assert_eq!(summary.schemes[0].final_running_average, 0.0);
        assert_eq!(run.battery_histogram(41).iter().sum::<u64>(), 0);
    }

    #[test]
    fn running_average_is_prefix_mean() {
        let run = simulate(&sys(), Scheme::Fixed(100.0), &opts(50, 3), None).unwrap();
        let avg = run.running_average();
        for t in [0usize, 7, 49] {
            let expected: f64 = run
                .replicas
                .iter()
                .map(|r| r.records[..=t].iter().map(|x| x.cost).sum::<f64>() / (t + 1) as f64)
                .sum::<f64>()
                / 3.0;
            assert!((avg[t] - expected).abs() < 1e-12);
        }
        assert_eq!(run.battery_histogram(41).iter().sum::<u64>(), 150);
    }

    #[test]
    fn comparing_a_scheme_with_itself() {
        let (_, cmp, _) = compare(&sys(), &[Scheme::Myopic, Scheme::Myopic], &opts(40, 2), None).unwrap();
        assert!(cmp.ranking.iter().all(|r| r.reduction == 0.0));
    }

    #[test]
    fn compare_needs_two_schemes() {
        assert!(matches!(
            compare(&sys(), &[Scheme::Pds], &opts(1, 1), None),
            Err(HarnessError::Usage(_))
        ));
    }

    #[test]
    fn rank_orders_by_final_cost() {
        let mk = |name: &str, c: f64| SchemeSummary {
            scheme: name.into(),
            final_running_average: c,
            mean_discounted_cost: 0.0,
            discounted_cost_per_run: vec![],
            mean_battery_wh: 0.0,
            full_battery_fraction: 0.0,
            backup_fraction: 0.0,
            wall_clock_seconds: 0.0,
        };
        let summary = RunSummary {
            schema_version: 1,
            slots: 1,
            runs: 1,
            base_seed: 0,
            discount: 0.9,
            schemes: vec![mk("a", 8.0), mk("b", 6.0), mk("c", 12.0)],
            wall_clock_seconds: 0.0,
        };
        let cmp = rank(&summary);
        assert_eq!(cmp.best, "b");
        assert_eq!(cmp.reduction_vs("a"), Some(0.25));
        assert_eq!(cmp.reduction_vs("c"), Some(0.5));
    }
}

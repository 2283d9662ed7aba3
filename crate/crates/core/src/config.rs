//! Experiment configuration: the JSON file schema, its defaults, and
//! validation into a [`Config`] with every derived grid materialized.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{self, ChainSpec, GreenSpec};
use crate::models::PowerParams;
use crate::state::{ActionGrid, BatteryGrid, StateSpace, SystemState};

const SUM_TOL: f64 = 1e-12;
const GRID_TOL: f64 = 1e-9;

/// Battery size, grid resolution and starting charge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatterySpec {
    pub capacity_wh: f64,
    pub step_wh: f64,
    pub initial_wh: f64,
}

/// One service location: its share of the total arrival rate and the
/// wireless rate between it and the base station (units/second).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Location {
    pub fraction: f64,
    pub theta: f64,
}

/// Power draw in watts, as the hardware is usually rated. Converted to
/// per-slot energy ([`PowerParams`]) using `slot_hours`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSpec {
    pub base_station_watts: f64,
    /// Extra base-station draw per unit/second of arrivals.
    pub dynamic_watts_per_unit: f64,
    pub server_idle_watts: f64,
    pub server_peak_watts: f64,
    /// Service rate of one server, units/second.
    pub server_rate: f64,
    pub max_servers: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostParams {
    /// Battery depreciation per kWh discharged.
    pub omega: f64,
    /// Backup-supply penalty per kWh of basic operation.
    pub phi: f64,
    /// Offload RTT threshold, seconds.
    pub d0: f64,
}

/// Which energy the depreciation term is charged on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepreciationBasis {
    /// Basic operation plus computing demand.
    TotalDemand,
    /// Computing demand only.
    ComputingOnly,
}

/// Step-size family `initial / (1 + decay * n)`, `n` counting prior updates
/// of the same context.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSchedule {
    pub initial: f64,
    pub decay: f64,
}

impl RateSchedule {
    pub fn rate(&self, n: u64) -> f64 {
        self.initial / (1.0 + self.decay * n as f64)
    }

    /// Harmonic-type schedules have a divergent sum and a convergent sum of
    /// squares exactly when both parameters are positive.
    pub fn is_robbins_monro(&self) -> bool {
        self.initial > 0.0 && self.decay > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerParams {
    /// One-slot cost estimate step size, counted per environment class.
    pub cost_rate: RateSchedule,
    /// Post-decision value step size, counted per exogenous context.
    pub value_rate: RateSchedule,
    /// Exploration floor for the post-decision learner (0 = purely greedy).
    pub epsilon_floor: f64,
    /// Q-learning step size is `1 / (1 + visits)^q_rate_exponent`.
    pub q_rate_exponent: f64,
    pub q_epsilon_start: f64,
    pub q_epsilon_end: f64,
    /// Fraction of the horizon over which Q-learning exploration decays.
    pub q_epsilon_decay_fraction: f64,
}

impl Default for LearnerParams {
    fn default() -> Self {
        Self {
            cost_rate: RateSchedule {
                initial: 1.0,
                decay: 0.01,
            },
            value_rate: RateSchedule {
                initial: 1.0,
                decay: 0.01,
            },
            epsilon_floor: 0.0,
            q_rate_exponent: 0.7,
            q_epsilon_start: 1.0,
            q_epsilon_end: 0.05,
            q_epsilon_decay_fraction: 0.2,
        }
    }
}

/// The on-disk configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub slot_hours: f64,
    /// Arrival rates (units/second) and their transition matrix.
    pub workload: ChainSpec<f64>,
    /// Environment class labels and their transition matrix.
    pub environment: ChainSpec<String>,
    /// Round-trip times (seconds) and their transition matrix.
    pub congestion: ChainSpec<f64>,
    pub battery: BatterySpec,
    pub actions_wh: Vec<f64>,
    pub locations: Vec<Location>,
    pub power: PowerSpec,
    pub cost: CostParams,
    pub green: GreenSpec,
    pub discount: f64,
    pub depreciation_basis: DepreciationBasis,
    pub learner: LearnerParams,
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self {
            slot_hours: 0.25,
            workload: ChainSpec::sticky(vec![10.0, 20.0, 30.0], 0.6),
            environment: ChainSpec::sticky(
                vec!["Low".into(), "Medium".into(), "High".into()],
                0.6,
            ),
            congestion: ChainSpec::sticky(vec![0.05, 0.2, 0.8], 0.6),
            battery: BatterySpec {
                capacity_wh: 1000.0,
                step_wh: 25.0,
                initial_wh: 500.0,
            },
            actions_wh: vec![0.0, 25.0, 50.0, 75.0, 100.0, 125.0, 150.0],
            locations: vec![Location {
                fraction: 1.0,
                theta: 60.0,
            }],
            power: PowerSpec {
                base_station_watts: 800.0,
                dynamic_watts_per_unit: 10.0,
                server_idle_watts: 100.0,
                server_peak_watts: 200.0,
                server_rate: 10.0,
                max_servers: 3,
            },
            cost: CostParams {
                omega: 0.2,
                phi: 10.0,
                d0: 0.03,
            },
            green: GreenSpec {
                mean_wh: vec![25.0, 150.0, 300.0],
                std_wh: vec![25.0, 50.0, 75.0],
                cap_wh: 500.0,
            },
            discount: 0.9,
            depreciation_basis: DepreciationBasis::TotalDemand,
            learner: LearnerParams::default(),
        }
    }
}

impl ConfigFile {
    /// A coarser variant with 11 battery levels, small enough that the
    /// learner's post-decision table can be checked against the exact
    /// solution in a couple of minutes.
    pub fn reduced() -> Self {
        let mut cfg = Self::default();
        cfg.battery = BatterySpec {
            capacity_wh: 500.0,
            step_wh: 50.0,
            initial_wh: 250.0,
        };
        cfg.power.base_station_watts = 400.0;
        cfg.power.dynamic_watts_per_unit = 20.0;
        cfg.actions_wh = vec![0.0, 50.0, 100.0, 150.0];
        cfg
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// A single reason a configuration is rejected.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigViolation {
    #[error("utilization {rho} >= 1 at workload {lambda}")]
    UtilizationOverload { lambda: f64, rho: f64 },
    #[error("{what} = {value} Wh is not a multiple of the battery step {step} Wh")]
    GridMisaligned { what: String, value: f64, step: f64 },
    #[error("{0} is empty")]
    EmptySet(&'static str),
    #[error("chain {chain}: {reason}")]
    InvalidChain { chain: &'static str, reason: String },
    #[error("green energy for environment {env}: zero spread with mean {mean} Wh off the support grid")]
    DegenerateSpec { env: String, mean: f64 },
    #[error("{field}: {reason}")]
    InvalidValue { field: String, reason: String },
}

/// Every violation found in a configuration, in discovery order.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigErrors(pub Vec<ConfigViolation>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} configuration violation(s)", self.0.len())?;
        for v in &self.0 {
            write!(f, "\n  - {v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] ConfigErrors),
}

/// A validated configuration with derived grids.
#[derive(Debug, Clone)]
pub struct Config {
    file: ConfigFile,
    pub space: StateSpace,
    pub battery: BatteryGrid,
    pub actions: ActionGrid,
    pub power: PowerParams,
    op_units: Vec<usize>,
    green_pmf: Vec<Vec<f64>>,
    initial: SystemState,
}

impl Default for Config {
    fn default() -> Self {
        validate_config(ConfigFile::default()).expect("default config is valid")
    }
}

impl Config {
    pub fn reduced() -> Self {
        validate_config(ConfigFile::reduced()).expect("reduced config is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, LoadError> {
        Ok(validate_config(ConfigFile::from_json(text)?)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LoadError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn file(&self) -> &ConfigFile {
        &self.file
    }

    pub fn slot_hours(&self) -> f64 {
        self.file.slot_hours
    }

    pub fn workload(&self, i: usize) -> f64 {
        self.file.workload.states[i]
    }

    pub fn env_name(&self, i: usize) -> &str {
        &self.file.environment.states[i]
    }

    pub fn congestion(&self, i: usize) -> f64 {
        self.file.congestion.states[i]
    }

    pub fn workload_chain(&self) -> &ChainSpec<f64> {
        &self.file.workload
    }

    pub fn env_chain(&self) -> &ChainSpec<String> {
        &self.file.environment
    }

    pub fn congestion_chain(&self) -> &ChainSpec<f64> {
        &self.file.congestion
    }

    pub fn locations(&self) -> &[Location] {
        &self.file.locations
    }

    pub fn cost(&self) -> &CostParams {
        &self.file.cost
    }

    pub fn discount(&self) -> f64 {
        self.file.discount
    }

    pub fn depreciation_basis(&self) -> DepreciationBasis {
        self.file.depreciation_basis
    }

    pub fn learner(&self) -> &LearnerParams {
        &self.file.learner
    }

    /// Basic-operation demand of workload index `i`, in battery steps.
    pub fn op_units(&self, i: usize) -> usize {
        self.op_units[i]
    }

    /// Green-energy pmf of environment class `e` over support levels
    /// `0..green_levels()` (in battery steps).
    pub fn green_pmf(&self, e: usize) -> &[f64] {
        &self.green_pmf[e]
    }

    pub fn green_levels(&self) -> usize {
        self.green_pmf[0].len()
    }

    /// Start state of every simulated trajectory: the first value of each
    /// exogenous set and the configured initial charge.
    pub fn initial_state(&self) -> SystemState {
        self.initial
    }

    /// Same document with a different discount factor, revalidated.
    pub fn with_discount(&self, discount: f64) -> Result<Self, ConfigErrors> {
        let mut file = self.file.clone();
        file.discount = discount;
        validate_config(file)
    }
}

/// Number of grid steps in `value`, if it lies on the grid.
pub(crate) fn grid_units(value: f64, step: f64) -> Option<usize> {
    if !(value.is_finite() && step > 0.0 && value >= 0.0) {
        return None;
    }
    let r = value / step;
    ((r - r.round()).abs() < GRID_TOL).then(|| r.round() as usize)
}

fn check_chain<T: PartialEq>(
    name: &'static str,
    chain: &ChainSpec<T>,
    empty: &'static str,
    out: &mut Vec<ConfigViolation>,
) {
    if chain.states.is_empty() {
        out.push(ConfigViolation::EmptySet(empty));
        return;
    }
    for (i, s) in chain.states.iter().enumerate() {
        if chain.states[..i].contains(s) {
            out.push(ConfigViolation::InvalidChain {
                chain: name,
                reason: format!("state {i} duplicates an earlier state"),
            });
        }
    }
    if let Err(reason) = chain.check() {
        out.push(ConfigViolation::InvalidChain {
            chain: name,
            reason,
        });
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigViolation {
    ConfigViolation::InvalidValue {
        field: field.to_string(),
        reason: reason.into(),
    }
}

/// Checks every invariant of `raw` and builds the derived grids. Returns all
/// violations rather than stopping at the first.
pub fn validate_config(raw: ConfigFile) -> Result<Config, ConfigErrors> {
    let mut errs = Vec::new();

    if !(raw.slot_hours > 0.0 && raw.slot_hours.is_finite()) {
        errs.push(invalid("slot_hours", "must be positive"));
    }
    if !(0.0..1.0).contains(&raw.discount) {
        errs.push(invalid("discount", "must lie in [0, 1)"));
    }

    check_chain("workload", &raw.workload, "workload set", &mut errs);
    check_chain("environment", &raw.environment, "environment set", &mut errs);
    check_chain("congestion", &raw.congestion, "congestion set", &mut errs);
    let rates = &raw.workload.states;
    if rates.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        errs.push(invalid("workload.states", "arrival rates must be positive"));
    }
    if rates.windows(2).any(|w| w[0] >= w[1]) {
        errs.push(invalid("workload.states", "must be strictly ascending"));
    }
    if raw.congestion.states.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
        errs.push(invalid("congestion.states", "round-trip times must be positive"));
    }

    // Battery grid.
    let step = raw.battery.step_wh;
    let mut battery = None;
    if !(step > 0.0 && step.is_finite()) {
        errs.push(invalid("battery.step_wh", "must be positive"));
    } else {
        match grid_units(raw.battery.capacity_wh, step) {
            Some(0) => errs.push(invalid("battery.capacity_wh", "must be positive")),
            Some(max_level) => {
                battery = Some(BatteryGrid {
                    step_wh: step,
                    max_level,
                })
            }
            None => errs.push(ConfigViolation::GridMisaligned {
                what: "battery capacity".into(),
                value: raw.battery.capacity_wh,
                step,
            }),
        }
    }
    let initial_level = battery.and_then(|grid| match grid_units(raw.battery.initial_wh, step) {
        Some(l) if l <= grid.max_level => Some(l),
        Some(_) => {
            errs.push(invalid("battery.initial_wh", "exceeds capacity"));
            None
        }
        None => {
            errs.push(ConfigViolation::GridMisaligned {
                what: "initial battery".into(),
                value: raw.battery.initial_wh,
                step,
            });
            None
        }
    });

    // Power.
    let p = &raw.power;
    if !(p.server_peak_watts >= p.server_idle_watts && p.server_idle_watts > 0.0) {
        errs.push(invalid("power", "need server_peak_watts >= server_idle_watts > 0"));
    }
    if !(p.server_rate > 0.0) {
        errs.push(invalid("power.server_rate", "must be positive"));
    }
    if p.max_servers < 1 {
        errs.push(invalid("power.max_servers", "must be at least 1"));
    }
    if p.base_station_watts < 0.0 || p.dynamic_watts_per_unit < 0.0 {
        errs.push(invalid("power", "base-station draw must be nonnegative"));
    }
    let power = PowerParams::from_spec(p, raw.slot_hours);
    let mut op_units = Vec::with_capacity(rates.len());
    if battery.is_some() {
        for &l in rates {
            let d_op = power.op_demand(l);
            match grid_units(d_op, step) {
                Some(u) => op_units.push(u),
                None => errs.push(ConfigViolation::GridMisaligned {
                    what: format!("basic-operation demand at workload {l}"),
                    value: d_op,
                    step,
                }),
            }
        }
    }

    // Costs.
    let c = &raw.cost;
    if c.omega < 0.0 || c.phi < 0.0 || c.d0 < 0.0 {
        errs.push(invalid("cost", "omega, phi and d0 must be nonnegative"));
    }

    // Locations and base-station utilization.
    if raw.locations.is_empty() {
        errs.push(ConfigViolation::EmptySet("location profile"));
    } else {
        let total: f64 = raw.locations.iter().map(|l| l.fraction).sum();
        if (total - 1.0).abs() > SUM_TOL {
            errs.push(invalid("locations", format!("fractions sum to {total}, not 1")));
        }
        if raw.locations.iter().any(|l| l.fraction < 0.0) {
            errs.push(invalid("locations", "fractions must be nonnegative"));
        }
        if raw.locations.iter().any(|l| !(l.theta > 0.0)) {
            errs.push(invalid("locations", "wireless rates must be positive"));
        } else {
            for &l in rates {
                let rho = crate::models::utilization(&raw.locations, l);
                if rho >= 1.0 {
                    errs.push(ConfigViolation::UtilizationOverload { lambda: l, rho });
                }
            }
        }
    }

    // Actions.
    let mut actions = None;
    if raw.actions_wh.is_empty() {
        errs.push(ConfigViolation::EmptySet("action grid"));
    } else {
        if raw.actions_wh[0] != 0.0 {
            errs.push(invalid("actions_wh", "first level must be 0"));
        }
        if raw.actions_wh.windows(2).any(|w| w[0] >= w[1]) {
            errs.push(invalid("actions_wh", "levels must be strictly ascending"));
        }
        let max_com = rates
            .last()
            .map(|&l| crate::models::max_com_demand(&power, l))
            .unwrap_or(0.0);
        if raw.actions_wh.last().copied().unwrap_or(0.0) + GRID_TOL < max_com {
            errs.push(invalid(
                "actions_wh",
                format!("largest level is below the largest achievable computing demand {max_com} Wh"),
            ));
        }
        if battery.is_some() {
            let mut units = Vec::new();
            for &a in &raw.actions_wh {
                match grid_units(a, step) {
                    Some(u) => units.push(u),
                    None => errs.push(ConfigViolation::GridMisaligned {
                        what: "action level".into(),
                        value: a,
                        step,
                    }),
                }
            }
            if units.len() == raw.actions_wh.len() {
                actions = Some(ActionGrid {
                    levels_wh: raw.actions_wh.clone(),
                    units,
                });
            }
        }
    }

    // Green energy.
    let g = &raw.green;
    let n_env = raw.environment.states.len();
    let mut green_pmf = Vec::new();
    if g.mean_wh.len() != n_env || g.std_wh.len() != n_env {
        errs.push(invalid(
            "green",
            format!("need one mean and one std-dev per environment class ({n_env})"),
        ));
    } else if g.mean_wh.iter().chain(&g.std_wh).any(|&x| !(x >= 0.0)) {
        errs.push(invalid("green", "means and std-devs must be nonnegative"));
    } else if battery.is_some() {
        if grid_units(g.cap_wh, step).is_none() {
            errs.push(ConfigViolation::GridMisaligned {
                what: "green support cap".into(),
                value: g.cap_wh,
                step,
            });
        } else {
            for e in 0..n_env {
                match env::green_pmf(g, e, step) {
                    Ok(pmf) => green_pmf.push(pmf),
                    Err(_) => errs.push(ConfigViolation::DegenerateSpec {
                        env: raw.environment.states[e].clone(),
                        mean: g.mean_wh[e],
                    }),
                }
            }
        }
    }

    // Learner hyper-parameters.
    let lp = &raw.learner;
    for (name, sched) in [("learner.cost_rate", lp.cost_rate), ("learner.value_rate", lp.value_rate)] {
        if !(sched.initial > 0.0 && sched.initial <= 1.0) {
            errs.push(invalid(name, "initial rate must lie in (0, 1]"));
        }
        if !sched.is_robbins_monro() {
            errs.push(invalid(name, "decay must be positive for a diminishing schedule"));
        }
    }
    if !(0.0..=1.0).contains(&lp.epsilon_floor) {
        errs.push(invalid("learner.epsilon_floor", "must lie in [0, 1]"));
    }
    if !(lp.q_rate_exponent > 0.5 && lp.q_rate_exponent <= 1.0) {
        errs.push(invalid("learner.q_rate_exponent", "must lie in (0.5, 1]"));
    }
    if !(0.0 <= lp.q_epsilon_end && lp.q_epsilon_end <= lp.q_epsilon_start && lp.q_epsilon_start <= 1.0) {
        errs.push(invalid("learner", "need 0 <= q_epsilon_end <= q_epsilon_start <= 1"));
    }
    if !(0.0..=1.0).contains(&lp.q_epsilon_decay_fraction) {
        errs.push(invalid("learner.q_epsilon_decay_fraction", "must lie in [0, 1]"));
    }

    if !errs.is_empty() {
        return Err(ConfigErrors(errs));
    }

    let battery = battery.expect("checked above");
    let space = StateSpace {
        workloads: rates.len(),
        envs: n_env,
        congestions: raw.congestion.states.len(),
        battery_levels: battery.levels(),
    };
    Ok(Config {
        space,
        battery,
        actions: actions.expect("checked above"),
        power,
        op_units,
        green_pmf,
        initial: SystemState::new(0, 0, 0, initial_level.expect("checked above")),
        file: raw,
    })
}

/// All states of `cfg` in canonical `(workload, env, congestion, battery)`
/// order.
pub fn enumerate_states(cfg: &Config) -> Vec<SystemState> {
    cfg.space.iter().collect()
}

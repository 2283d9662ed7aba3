//! The stochastic world: Markov chains for workload, environment and
//! congestion, the environment-conditioned green-energy distribution, and
//! seeded one-slot stepping.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::models::EdgeSystem;
use crate::state::SystemState;

const ROW_TOL: f64 = 1e-12;

/// A finite-state Markov chain: state values and a row-stochastic matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec<T> {
    pub states: Vec<T>,
    pub transitions: Vec<Vec<f64>>,
}

impl<T> ChainSpec<T> {
    /// Stays put with probability `stay`, otherwise moves uniformly to one
    /// of the other states.
    pub fn sticky(states: Vec<T>, stay: f64) -> Self {
        let n = states.len();
        let transitions = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| match (i == j, n) {
                        (true, _) => stay,
                        (false, 1) => 0.0,
                        (false, _) => (1.0 - stay) / (n - 1) as f64,
                    })
                    .collect()
            })
            .collect();
        let mut chain = Self { states, transitions };
        if n == 1 {
            chain.transitions[0][0] = 1.0;
        }
        chain
    }

    pub fn identity(states: Vec<T>) -> Self {
        let n = states.len();
        let transitions = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { states, transitions }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Square, nonnegative, rows summing to one.
    pub fn check(&self) -> Result<(), String> {
        let n = self.states.len();
        if self.transitions.len() != n {
            return Err(format!("{} rows for {n} states", self.transitions.len()));
        }
        for (i, row) in self.transitions.iter().enumerate() {
            if row.len() != n {
                return Err(format!("row {i} has {} entries, expected {n}", row.len()));
            }
            if row.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
                return Err(format!("row {i} has a negative or non-finite entry"));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOL {
                return Err(format!("row {i} sums to {sum}"));
            }
        }
        Ok(())
    }

    /// Stationary distribution by power iteration from the uniform vector.
    pub fn stationary(&self) -> Vec<f64> {
        let n = self.states.len();
        let mut pi = vec![1.0 / n as f64; n];
        for _ in 0..100_000 {
            let mut next = vec![0.0; n];
            for (i, row) in self.transitions.iter().enumerate() {
                for (j, p) in row.iter().enumerate() {
                    next[j] += pi[i] * p;
                }
            }
            let delta = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            pi = next;
            if delta < 1e-15 {
                break;
            }
        }
        pi
    }
}

/// Normal green-energy model per environment class, discretized to the
/// battery grid on `{0, step, ..., cap_wh}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenSpec {
    pub mean_wh: Vec<f64>,
    pub std_wh: Vec<f64>,
    pub cap_wh: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GreenError {
    #[error("zero spread with mean {mean} Wh off the support grid")]
    DegenerateSpec { mean: f64 },
}

/// Probability of each support level `0, step, ..., cap` for class `env`.
///
/// Mass below `step / 2` goes to 0, mass above `cap - step / 2` goes to
/// `cap`, and each interior level takes the mass within half a step.
pub fn green_pmf(spec: &GreenSpec, env: usize, step: f64) -> Result<Vec<f64>, GreenError> {
    let levels = (spec.cap_wh / step).round() as usize + 1;
    let (mean, sd) = (spec.mean_wh[env], spec.std_wh[env]);
    if sd == 0.0 {
        let r = mean / step;
        let on_grid = (r - r.round()).abs() < 1e-9 && mean >= 0.0 && mean <= spec.cap_wh + 1e-9;
        if !on_grid {
            return Err(GreenError::DegenerateSpec { mean });
        }
        let mut pmf = vec![0.0; levels];
        pmf[r.round() as usize] = 1.0;
        return Ok(pmf);
    }
    let normal = Normal::new(mean, sd).expect("positive spread");
    let mut cdf_edges: Vec<f64> = (1..levels)
        .map(|k| normal.cdf((k as f64 - 0.5) * step))
        .collect();
    cdf_edges.insert(0, 0.0);
    cdf_edges.push(1.0);
    Ok(cdf_edges.windows(2).map(|w| w[1] - w[0]).collect())
}

/// Product-form transition kernel of the exogenous triple
/// `(workload, env, congestion)`, indexed by context.
#[derive(Debug, Clone)]
pub struct ExogenousKernel {
    contexts: usize,
    probs: Vec<f64>,
}

impl ExogenousKernel {
    pub fn new(sys: &EdgeSystem) -> Self {
        let cfg = sys.config();
        let sp = cfg.space;
        let n = sp.contexts();
        let mut probs = vec![0.0; n * n];
        for from in 0..n {
            let (w, e, h) = sp.context_of(from);
            for to in 0..n {
                let (w2, e2, h2) = sp.context_of(to);
                probs[from * n + to] = cfg.workload_chain().transitions[w][w2]
                    * cfg.env_chain().transitions[e][e2]
                    * cfg.congestion_chain().transitions[h][h2];
            }
        }
        Self { contexts: n, probs }
    }

    pub fn contexts(&self) -> usize {
        self.contexts
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.probs[from * self.contexts + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.probs[from * self.contexts..(from + 1) * self.contexts]
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("action {action} is not feasible in state {state:?}")]
    InfeasibleAction { state: SystemState, action: usize },
}

/// Exogenous draws of one slot, in grid steps and value-set indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Draw {
    pub green: usize,
    pub workload: usize,
    pub env: usize,
    pub congestion: usize,
}

/// Result of one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    /// Realized green energy, grid steps.
    pub green: usize,
    pub cost: f64,
    pub backup: bool,
    pub next: SystemState,
}

/// Stream identifiers. Each stochastic source owns one ChaCha stream, so a
/// source added later never shifts the draws of existing ones.
mod stream {
    pub const GREEN: u64 = 0;
    pub const WORKLOAD: u64 = 1;
    pub const ENV: u64 = 2;
    pub const CONGESTION: u64 = 3;
}

fn stream_rng(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Inverse-CDF draw; consumes exactly one uniform.
fn draw_index<R: Rng>(rng: &mut R, cdf: &[f64]) -> usize {
    let u: f64 = rng.gen();
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

fn cumulative(pmf: &[f64]) -> Vec<f64> {
    pmf.iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect()
}

/// One replica of the world: current state plus independent RNG streams.
#[derive(Debug, Clone)]
pub struct World {
    sys: Arc<EdgeSystem>,
    state: SystemState,
    green_rng: ChaCha8Rng,
    workload_rng: ChaCha8Rng,
    env_rng: ChaCha8Rng,
    congestion_rng: ChaCha8Rng,
    green_cdf: Vec<Vec<f64>>,
    workload_cdf: Vec<Vec<f64>>,
    env_cdf: Vec<Vec<f64>>,
    congestion_cdf: Vec<Vec<f64>>,
    trace: Option<Vec<Draw>>,
}

impl World {
    pub fn new(sys: Arc<EdgeSystem>, seed: u64) -> Self {
        let start = sys.config().initial_state();
        Self::with_state(sys, seed, start)
    }

    pub fn with_state(sys: Arc<EdgeSystem>, seed: u64, state: SystemState) -> Self {
        let cfg = sys.config();
        let green_cdf = (0..cfg.space.envs).map(|e| cumulative(cfg.green_pmf(e))).collect();
        let workload_cdf = cfg.workload_chain().transitions.iter().map(|r| cumulative(r)).collect();
        let env_cdf = cfg.env_chain().transitions.iter().map(|r| cumulative(r)).collect();
        let congestion_cdf = cfg.congestion_chain().transitions.iter().map(|r| cumulative(r)).collect();
        Self {
            state,
            green_rng: stream_rng(seed, stream::GREEN),
            workload_rng: stream_rng(seed, stream::WORKLOAD),
            env_rng: stream_rng(seed, stream::ENV),
            congestion_rng: stream_rng(seed, stream::CONGESTION),
            green_cdf,
            workload_cdf,
            env_cdf,
            congestion_cdf,
            trace: None,
            sys,
        }
    }

    /// Record every slot's exogenous draws.
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> Option<&[Draw]> {
        self.trace.as_deref()
    }

    pub fn take_trace(&mut self) -> Option<Vec<Draw>> {
        self.trace.take()
    }

    pub fn state(&self) -> SystemState {
        self.state
    }

    pub fn system(&self) -> &EdgeSystem {
        &self.sys
    }

    /// Advances one slot under computing budget `action`. Draw order is
    /// green, workload, environment, congestion, each from its own stream.
    pub fn step(&mut self, action: usize) -> Result<Step, EnvError> {
        let s = self.state;
        if !self.sys.is_feasible(s, action) {
            return Err(EnvError::InfeasibleAction { state: s, action });
        }
        let green = draw_index(&mut self.green_rng, &self.green_cdf[s.env]);
        let cost = self.sys.realized_cost(s, action, green);
        let battery = self.sys.battery_next(s, action, green);
        let workload = draw_index(&mut self.workload_rng, &self.workload_cdf[s.workload]);
        let env = draw_index(&mut self.env_rng, &self.env_cdf[s.env]);
        let congestion = draw_index(&mut self.congestion_rng, &self.congestion_cdf[s.congestion]);
        if let Some(trace) = self.trace.as_mut() {
            trace.push(Draw {
                green,
                workload,
                env,
                congestion,
            });
        }
        let next = SystemState::new(workload, env, congestion, battery);
        self.state = next;
        Ok(Step {
            green,
            cost,
            backup: self.sys.is_backup(s),
            next,
        })
    }
}

//! Online decision makers. None of them see the chain matrices or the
//! green-energy distribution; they learn from observed transitions only.

mod baselines;
mod pds;
mod qlearn;

use std::ops::Range;

use thiserror::Error;

use crate::config::RateSchedule;
use crate::models::EdgeSystem;
use crate::state::SystemState;

pub use baselines::{fixed_select, FixedAgent, MyopicAgent, PolicyAgent};
pub use pds::PdsLearner;
pub use qlearn::{q_update, EpsilonSchedule, QLearner};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearnerError {
    #[error("record for slot {got} arrived while expecting slot {expected}")]
    StaleRecord { expected: u64, got: u64 },
}

/// What an agent sees after each slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub slot: u64,
    pub state: SystemState,
    pub action: usize,
    /// Realized green energy, battery grid steps.
    pub green: usize,
    pub cost: f64,
    pub next: SystemState,
}

/// Uniform contract for every scheme run by the harness.
pub trait Agent: Send {
    fn name(&self) -> String;

    /// Action for the current slot; always feasible for `s`.
    fn select(&mut self, s: SystemState) -> usize;

    /// Called exactly once per slot, after the environment step.
    fn observe(&mut self, t: &Transition) -> Result<(), LearnerError>;

    /// Current greedy action without exploration, for policy dumps.
    fn greedy_action(&self, s: SystemState) -> usize;
}

/// Conservative action set of `s` (indices into the action grid).
pub fn feasible_actions(sys: &EdgeSystem, s: SystemState) -> Range<usize> {
    sys.feasible_actions(s)
}

/// Smallest-index argmin of `score` over `actions`.
pub(crate) fn argmin(actions: Range<usize>, mut score: impl FnMut(usize) -> f64) -> usize {
    let mut best = (f64::INFINITY, actions.start);
    for a in actions {
        let v = score(a);
        if v < best.0 {
            best = (v, a);
        }
    }
    best.1
}

fn check_slot(expected: u64, got: u64) -> Result<(), LearnerError> {
    if expected == got {
        Ok(())
    } else {
        Err(LearnerError::StaleRecord { expected, got })
    }
}

/// Learned one-slot cost table shared by the post-decision learner and the
/// myopic baseline.
///
/// The realized cost is a known function once the green energy is seen, and
/// the green energy depends only on the environment class, so one
/// observation updates every `(state, action)` pair of that class.
#[derive(Debug, Clone)]
pub struct CostEstimator {
    table: Vec<f64>,
    env_visits: Vec<u64>,
    schedule: RateSchedule,
    actions: usize,
}

impl CostEstimator {
    pub fn new(sys: &EdgeSystem) -> Self {
        let cfg = sys.config();
        Self {
            table: vec![0.0; cfg.space.len() * sys.num_actions()],
            env_visits: vec![0; cfg.space.envs],
            schedule: cfg.learner().cost_rate,
            actions: sys.num_actions(),
        }
    }

    pub fn get(&self, state_index: usize, a: usize) -> f64 {
        self.table[state_index * self.actions + a]
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn env_visits(&self, env: usize) -> u64 {
        self.env_visits[env]
    }

    /// Blends the realized cost under green energy `green` into every pair
    /// whose state has environment class `env`.
    pub fn update(&mut self, sys: &EdgeSystem, env: usize, green: usize) {
        let sp = sys.config().space;
        let rate = self.schedule.rate(self.env_visits[env]);
        for w in 0..sp.workloads {
            for h in 0..sp.congestions {
                for i in sp.context_slice(sp.context_index(w, env, h)) {
                    let s = sp.state_of(i);
                    let row = &mut self.table[i * self.actions..(i + 1) * self.actions];
                    for (a, c) in row.iter_mut().enumerate() {
                        *c = (1.0 - rate) * *c + rate * sys.realized_cost(s, a, green);
                    }
                }
            }
        }
        self.env_visits[env] += 1;
    }
}

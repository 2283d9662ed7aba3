//! Myopic, fixed-budget and table-driven agents.

use std::sync::Arc;

use super::{argmin, check_slot, Agent, CostEstimator, LearnerError, Transition};
use crate::models::EdgeSystem;
use crate::state::SystemState;

/// Minimizes the learned one-slot cost and ignores the future.
#[derive(Debug, Clone)]
pub struct MyopicAgent {
    sys: Arc<EdgeSystem>,
    costs: CostEstimator,
    slot: u64,
}

impl MyopicAgent {
    pub fn new(sys: Arc<EdgeSystem>) -> Self {
        Self {
            costs: CostEstimator::new(&sys),
            sys,
            slot: 0,
        }
    }

    pub fn cost_estimates(&self) -> &CostEstimator {
        &self.costs
    }

    pub fn set_cost_estimates(&mut self, table: &[f64]) {
        self.costs.table.copy_from_slice(table);
    }
}

impl Agent for MyopicAgent {
    fn name(&self) -> String {
        "myopic".into()
    }

    fn select(&mut self, s: SystemState) -> usize {
        self.greedy_action(s)
    }

    fn observe(&mut self, t: &Transition) -> Result<(), LearnerError> {
        check_slot(self.slot, t.slot)?;
        self.costs.update(&self.sys, t.state.env, t.green);
        self.slot += 1;
        Ok(())
    }

    fn greedy_action(&self, s: SystemState) -> usize {
        let i = self.sys.config().space.index_of(s);
        argmin(self.sys.feasible_actions(s), |a| self.costs.get(i, a))
    }
}

/// Largest feasible level not above `level_wh`.
pub fn fixed_select(sys: &EdgeSystem, level_wh: f64, s: SystemState) -> usize {
    let levels = &sys.config().actions.levels_wh;
    sys.feasible_actions(s)
        .take_while(|&a| levels[a] <= level_wh + 1e-9)
        .last()
        .unwrap_or(0)
}

/// Spends a fixed computing budget whenever the battery allows it.
#[derive(Debug, Clone)]
pub struct FixedAgent {
    sys: Arc<EdgeSystem>,
    level_wh: f64,
}

impl FixedAgent {
    pub fn new(sys: Arc<EdgeSystem>, level_wh: f64) -> Self {
        Self { sys, level_wh }
    }
}

impl Agent for FixedAgent {
    fn name(&self) -> String {
        format!("fixed:{}", self.level_wh)
    }

    fn select(&mut self, s: SystemState) -> usize {
        self.greedy_action(s)
    }

    fn observe(&mut self, _t: &Transition) -> Result<(), LearnerError> {
        Ok(())
    }

    fn greedy_action(&self, s: SystemState) -> usize {
        fixed_select(&self.sys, self.level_wh, s)
    }
}

/// Follows a precomputed policy table, e.g. the exact solution.
#[derive(Debug, Clone)]
pub struct PolicyAgent {
    sys: Arc<EdgeSystem>,
    policy: Arc<Vec<usize>>,
    name: String,
}

impl PolicyAgent {
    pub fn new(sys: Arc<EdgeSystem>, policy: Arc<Vec<usize>>, name: impl Into<String>) -> Self {
        assert_eq!(policy.len(), sys.config().space.len());
        Self {
            sys,
            policy,
            name: name.into(),
        }
    }
}

impl Agent for PolicyAgent {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn select(&mut self, s: SystemState) -> usize {
        self.greedy_action(s)
    }

    fn observe(&mut self, _t: &Transition) -> Result<(), LearnerError> {
        Ok(())
    }

    fn greedy_action(&self, s: SystemState) -> usize {
        self.policy[self.sys.config().space.index_of(s)]
    }
}

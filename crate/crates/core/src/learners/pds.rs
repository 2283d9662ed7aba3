//! Online learner built on post-decision states.
//!
//! Each slot it acts greedily on `c_hat(s, a) + discount * v_hat(pds(s, a))`
//! and then runs three batch updates:
//!
//! 1. one-slot cost estimates for every state of the observed environment
//!    class and every action;
//! 2. normal-state values `c_norm(s)` for the same states, from the new
//!    cost estimates and the current post-decision values;
//! 3. post-decision values for every battery level of the observed
//!    `(workload, env, congestion)` context, each moved toward `c_norm` at
//!    the state reached by adding this slot's green energy.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{argmin, check_slot, Agent, CostEstimator, LearnerError, Transition};
use crate::config::RateSchedule;
use crate::models::EdgeSystem;
use crate::oracle::pds_of;
use crate::state::SystemState;

#[derive(Debug, Clone)]
pub struct PdsLearner {
    sys: Arc<EdgeSystem>,
    costs: CostEstimator,
    c_norm: Vec<f64>,
    v_post: Vec<f64>,
    context_visits: Vec<u64>,
    value_rate: RateSchedule,
    epsilon_floor: f64,
    rng: ChaCha8Rng,
    slot: u64,
}

impl PdsLearner {
    pub fn new(sys: Arc<EdgeSystem>, seed: u64) -> Self {
        let cfg = sys.config();
        let n = cfg.space.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(20);
        Self {
            costs: CostEstimator::new(&sys),
            c_norm: vec![0.0; n],
            v_post: vec![0.0; n],
            context_visits: vec![0; cfg.space.contexts()],
            value_rate: cfg.learner().value_rate,
            epsilon_floor: cfg.learner().epsilon_floor,
            rng,
            slot: 0,
            sys,
        }
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    /// One-slot cost estimates, row-major by state index.
    pub fn cost_estimates(&self) -> &[f64] {
        self.costs.table()
    }

    pub fn normal_values(&self) -> &[f64] {
        &self.c_norm
    }

    /// Post-decision value estimates, indexed like the state space.
    pub fn post_values(&self) -> &[f64] {
        &self.v_post
    }

    pub fn value_schedule(&self) -> RateSchedule {
        self.value_rate
    }

    pub fn cost_schedule(&self) -> RateSchedule {
        self.sys.config().learner().cost_rate
    }

    /// Overwrites the tables; test hook for hand-built scenarios.
    pub fn set_tables(&mut self, cost: Option<Vec<f64>>, post: Option<Vec<f64>>) {
        if let Some(c) = cost {
            assert_eq!(c.len(), self.costs.table().len());
            self.costs.table.copy_from_slice(&c);
        }
        if let Some(v) = post {
            assert_eq!(v.len(), self.v_post.len());
            self.v_post = v;
        }
    }

    fn lookahead(&self, s: SystemState, i: usize, a: usize) -> f64 {
        let sp = self.sys.config().space;
        self.costs.get(i, a)
            + self.sys.config().discount() * self.v_post[sp.pds_index(pds_of(&self.sys, s, a))]
    }

    fn best_action(&self, s: SystemState) -> usize {
        let i = self.sys.config().space.index_of(s);
        argmin(self.sys.feasible_actions(s), |a| self.lookahead(s, i, a))
    }
}

impl Agent for PdsLearner {
    fn name(&self) -> String {
        "pds".into()
    }

    fn select(&mut self, s: SystemState) -> usize {
        let feasible = self.sys.feasible_actions(s);
        if self.epsilon_floor > 0.0 && self.rng.gen::<f64>() < self.epsilon_floor {
            return self.rng.gen_range(feasible);
        }
        self.best_action(s)
    }

    fn observe(&mut self, t: &Transition) -> Result<(), LearnerError> {
        check_slot(self.slot, t.slot)?;
        let sys = Arc::clone(&self.sys);
        let cfg = sys.config();
        let sp = cfg.space;
        let env = t.state.env;

        self.costs.update(&sys, env, t.green);

        for w in 0..sp.workloads {
            for h in 0..sp.congestions {
                for i in sp.context_slice(sp.context_index(w, env, h)) {
                    let s = sp.state_of(i);
                    let a = argmin(sys.feasible_actions(s), |a| self.lookahead(s, i, a));
                    self.c_norm[i] = self.lookahead(s, i, a);
                }
            }
        }

        let ctx = sp.context_index(t.state.workload, env, t.state.congestion);
        let next_ctx = sp.context_index(t.next.workload, t.next.env, t.next.congestion);
        let rate = self.value_rate.rate(self.context_visits[ctx]);
        let max = cfg.battery.max_level;
        let targets = sp.context_slice(next_ctx).start;
        for (b_post, i) in sp.context_slice(ctx).enumerate() {
            let target = self.c_norm[targets + (b_post + t.green).min(max)];
            self.v_post[i] = (1.0 - rate) * self.v_post[i] + rate * target;
        }
        self.context_visits[ctx] += 1;
        self.slot += 1;
        Ok(())
    }

    fn greedy_action(&self, s: SystemState) -> usize {
        self.best_action(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;

    fn learner() -> PdsLearner {
        PdsLearner::new(Arc::new(EdgeSystem::new(Config::default())), 1)
    }

    fn transition(l: &PdsLearner, slot: u64, s: SystemState, green: usize, next: SystemState) -> Transition {
        let sys = &l.sys;
        let action = l.greedy_action(s);
        Transition {
            slot,
            state: s,
            action,
            green,
            cost: sys.realized_cost(s, action, green),
            next,
        }
    }

    #[test]
    fn zero_tables_pick_action_zero() {
        let l = learner();
        for s in l.sys.config().space.iter().step_by(13) {
            assert_eq!(l.greedy_action(s), 0);
        }
    }

    #[test]
    fn steep_post_values_force_largest_action() {
        let mut l = learner();
        let sp = l.sys.config().space;
        // c_hat is flat; v_hat rising by 10 per post-decision battery step
        // rewards draining the battery, so the largest feasible level wins.
        let post: Vec<f64> = sp.iter().map(|s| 10.0 * s.battery as f64).collect();
        l.set_tables(None, Some(post));
        let s = SystemState::new(0, 0, 0, 20);
        assert_eq!(l.greedy_action(s), 6);
        // Decreasing values make the smallest action optimal.
        let post: Vec<f64> = sp.iter().map(|s| 500.0 - 10.0 * s.battery as f64).collect();
        l.set_tables(None, Some(post));
        assert_eq!(l.greedy_action(s), 0);
    }

    #[test]
    fn first_observation_overwrites_cost_estimates_of_one_class() {
        let mut l = learner();
        let s = SystemState::new(1, 2, 0, 20);
        let t = transition(&l, 0, s, 3, SystemState::new(1, 2, 1, 17));
        l.observe(&t).unwrap();
        let sys = &l.sys;
        for (i, st) in sys.config().space.iter().enumerate() {
            for a in 0..sys.num_actions() {
                let expected = if st.env == 2 { sys.realized_cost(st, a, 3) } else { 0.0 };
                assert_eq!(l.cost_estimates()[i * sys.num_actions() + a], expected);
            }
        }
    }

    #[test]
    fn updates_stay_local() {
        let mut l = learner();
        let sys = Arc::clone(&l.sys);
        let sp = sys.config().space;
        // Warm up on a few slots so the tables are not all zero.
        let mut s = SystemState::new(0, 0, 0, 20);
        for slot in 0..30 {
            let next = SystemState::new((slot % 3) as usize, (slot / 3 % 3) as usize, (slot % 2) as usize, 20);
            let t = transition(&l, slot, s, (slot % 7) as usize, next);
            l.observe(&t).unwrap();
            s = next;
        }
        let before = l.clone();
        let state = SystemState::new(2, 1, 2, 30);
        let t = transition(&l, 30, state, 5, SystemState::new(1, 0, 2, 25));
        l.observe(&t).unwrap();
        let n_a = sys.num_actions();
        let ctx = sp.context_index(2, 1, 2);
        let mut touched = 0;
        for (i, st) in sp.iter().enumerate() {
            if st.env != 1 {
                assert_eq!(l.normal_values()[i].to_bits(), before.normal_values()[i].to_bits());
                for a in 0..n_a {
                    assert_eq!(
                        l.cost_estimates()[i * n_a + a].to_bits(),
                        before.cost_estimates()[i * n_a + a].to_bits()
                    );
                }
            }
            if sp.context_index(st.workload, st.env, st.congestion) != ctx {
                assert_eq!(l.post_values()[i].to_bits(), before.post_values()[i].to_bits());
            } else if l.post_values()[i] != before.post_values()[i] {
                touched += 1;
            }
        }
        assert!(touched > 0);
        assert_eq!(sp.context_slice(ctx).len(), 41);
    }

    #[test]
    fn value_step_uses_green_shifted_targets() {
        let mut l = learner();
        let sys = Arc::clone(&l.sys);
        let sp = sys.config().space;
        let s = SystemState::new(0, 1, 0, 20);
        let next = SystemState::new(0, 1, 1, 18);
        let t = transition(&l, 0, s, 4, next);
        l.observe(&t).unwrap();
        // First visit of the context: rate 1, so v_hat equals the targets.
        let ctx = sp.context_index(0, 1, 0);
        let next_ctx = sp.context_index(0, 1, 1);
        for (b, i) in sp.context_slice(ctx).enumerate() {
            let target = sp.context_slice(next_ctx).start + (b + 4).min(40);
            assert_eq!(l.post_values()[i], l.normal_values()[target]);
        }
    }

    #[test]
    fn stale_record_is_rejected() {
        let mut l = learner();
        let s = SystemState::new(0, 0, 0, 20);
        let t = transition(&l, 3, s, 0, s);
        assert_eq!(
            l.observe(&t),
            Err(LearnerError::StaleRecord { expected: 0, got: 3 })
        );
    }

    #[test]
    fn schedules_satisfy_step_size_conditions() {
        let l = learner();
        assert!(l.value_schedule().is_robbins_monro());
        assert!(l.cost_schedule().is_robbins_monro());
        assert_eq!(l.value_schedule().rate(0), 1.0);
        // Partial sums keep growing like a logarithm; squares stay bounded.
        let r = l.value_schedule();
        let sum = |n: u64| (0..n).map(|k| r.rate(k)).sum::<f64>();
        let sq = (0..1_000_000u64).map(|k| r.rate(k).powi(2)).sum::<f64>();
        assert!(sum(1_000_000) > sum(10_000) + 400.0);
        assert!(sq < 101.0);
    }
}

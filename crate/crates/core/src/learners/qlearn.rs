//! Tabular Q-learning baseline with epsilon-greedy exploration.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{argmin, check_slot, Agent, LearnerError, Transition};
use crate::models::EdgeSystem;
use crate::state::SystemState;

/// Linear decay from `start` to `end` over the first `decay_slots` slots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_slots: u64,
}

impl EpsilonSchedule {
    pub fn at(&self, slot: u64) -> f64 {
        if slot >= self.decay_slots {
            return self.end;
        }
        let frac = slot as f64 / self.decay_slots as f64;
        self.start + (self.end - self.start) * frac
    }
}

/// `(1 - rate) * q + rate * (cost + discount * next_min)`.
pub fn q_update(q: f64, cost: f64, next_min: f64, discount: f64, rate: f64) -> f64 {
    (1.0 - rate) * q + rate * (cost + discount * next_min)
}

#[derive(Debug, Clone)]
pub struct QLearner {
    sys: Arc<EdgeSystem>,
    q: Vec<f64>,
    visits: Vec<u64>,
    epsilon: EpsilonSchedule,
    exponent: f64,
    rng: ChaCha8Rng,
    slot: u64,
}

impl QLearner {
    /// `horizon` sets how long exploration takes to decay.
    pub fn new(sys: Arc<EdgeSystem>, seed: u64, horizon: u64) -> Self {
        let lp = sys.config().learner();
        let epsilon = EpsilonSchedule {
            start: lp.q_epsilon_start,
            end: lp.q_epsilon_end,
            decay_slots: (horizon as f64 * lp.q_epsilon_decay_fraction).round() as u64,
        };
        Self::with_epsilon(sys, seed, epsilon)
    }

    pub fn with_epsilon(sys: Arc<EdgeSystem>, seed: u64, epsilon: EpsilonSchedule) -> Self {
        let n = sys.config().space.len() * sys.num_actions();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(10);
        Self {
            q: vec![0.0; n],
            visits: vec![0; n],
            epsilon,
            exponent: sys.config().learner().q_rate_exponent,
            rng,
            slot: 0,
            sys,
        }
    }

    pub fn q(&self, s: SystemState, a: usize) -> f64 {
        self.q[self.sys.config().space.index_of(s) * self.sys.num_actions() + a]
    }

    pub fn set_q(&mut self, s: SystemState, a: usize, value: f64) {
        let i = self.sys.config().space.index_of(s) * self.sys.num_actions() + a;
        self.q[i] = value;
    }

    pub fn visits(&self, s: SystemState, a: usize) -> u64 {
        self.visits[self.sys.config().space.index_of(s) * self.sys.num_actions() + a]
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon.at(self.slot)
    }

    fn rate(&self, visits: u64) -> f64 {
        1.0 / (1.0 + visits as f64).powf(self.exponent)
    }

    fn min_q(&self, s: SystemState) -> f64 {
        self.sys
            .feasible_actions(s)
            .map(|a| self.q(s, a))
            .fold(f64::INFINITY, f64::min)
    }
}

impl Agent for QLearner {
    fn name(&self) -> String {
        "q".into()
    }

    fn select(&mut self, s: SystemState) -> usize {
        let feasible = self.sys.feasible_actions(s);
        if self.rng.gen::<f64>() < self.epsilon() {
            self.rng.gen_range(feasible)
        } else {
            self.greedy_action(s)
        }
    }

    fn observe(&mut self, t: &Transition) -> Result<(), LearnerError> {
        check_slot(self.slot, t.slot)?;
        let i = self.sys.config().space.index_of(t.state) * self.sys.num_actions() + t.action;
        let rate = self.rate(self.visits[i]);
        let next_min = self.min_q(t.next);
        self.q[i] = q_update(self.q[i], t.cost, next_min, self.sys.config().discount(), rate);
        self.visits[i] += 1;
        self.slot += 1;
        Ok(())
    }

    fn greedy_action(&self, s: SystemState) -> usize {
        argmin(self.sys.feasible_actions(s), |a| self.q(s, a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;

    fn sys(discount: f64) -> Arc<EdgeSystem> {
        Arc::new(EdgeSystem::new(Config::default().with_discount(discount).unwrap()))
    }

    #[test]
    fn update_rule_example() {
        let v = q_update(4.0, 5.46, 3.0, 0.9, 0.5);
        assert!((v - 6.08).abs() < 1e-12);
    }

    #[test]
    fn first_visit_overwrites_with_cost() {
        let mut q = QLearner::new(sys(0.0), 3, 100);
        let s = SystemState::new(1, 1, 1, 20);
        let t = Transition {
            slot: 0,
            state: s,
            action: 2,
            green: 0,
            cost: 7.25,
            next: s,
        };
        q.observe(&t).unwrap();
        assert_eq!(q.q(s, 2), 7.25);
        assert_eq!(q.visits(s, 2), 1);
        // Only the visited pair changes.
        assert_eq!(q.q(s, 1), 0.0);
    }

    #[test]
    fn rate_decays_with_visits() {
        let q = QLearner::new(sys(0.9), 3, 100);
        assert_eq!(q.rate(0), 1.0);
        assert!((q.rate(1) - 2f64.powf(-0.7)).abs() < 1e-15);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let epsilon = EpsilonSchedule {
            start: 1.0,
            end: 1.0,
            decay_slots: 0,
        };
        let mut q = QLearner::with_epsilon(sys(0.9), 8, epsilon);
        let s = SystemState::new(0, 0, 0, 20);
        let mut counts = [0u32; 7];
        let n = 10_000;
        for _ in 0..n {
            counts[q.select(s)] += 1;
        }
        let p = 1.0 / 7.0;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        for c in counts {
            assert!((c as f64 / n as f64 - p).abs() < 4.0 * se, "{counts:?}");
        }
        // Only feasible actions are drawn.
        let s = SystemState::new(0, 0, 0, 10);
        for _ in 0..1000 {
            assert!(q.select(s) < 2);
        }
    }

    #[test]
    fn epsilon_decays_linearly() {
        let e = EpsilonSchedule {
            start: 1.0,
            end: 0.05,
            decay_slots: 200,
        };
        assert_eq!(e.at(0), 1.0);
        assert!((e.at(100) - 0.525).abs() < 1e-12);
        assert_eq!(e.at(200), 0.05);
        assert_eq!(e.at(10_000), 0.05);
    }

    #[test]
    fn greedy_prefers_lowest_q() {
        let mut q = QLearner::new(sys(0.9), 1, 10);
        let s = SystemState::new(0, 0, 0, 20);
        for a in 0..7 {
            q.set_q(s, a, 10.0 - a as f64);
        }
        assert_eq!(q.greedy_action(s), 6);
        // Infeasible entries are ignored.
        let low = SystemState::new(0, 0, 0, 10);
        for a in 0..7 {
            q.set_q(low, a, 10.0 - a as f64);
        }
        assert_eq!(q.greedy_action(low), 1);
    }
}

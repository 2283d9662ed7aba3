//! Finite state space, battery grid and action grid.
//!
//! States are stored as coordinate indices into the configured value sets
//! (workload rates, environment classes, congestion levels) plus a battery
//! level counted in grid steps. Physical values are looked up through
//! [`crate::Config`].

use serde::{Deserialize, Serialize};

/// Observed system state at the start of a slot.
///
/// `battery` counts battery grid steps, so the stored energy is
/// `battery * step_wh`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SystemState {
    pub workload: usize,
    pub env: usize,
    pub congestion: usize,
    pub battery: usize,
}

impl SystemState {
    pub fn new(workload: usize, env: usize, congestion: usize, battery: usize) -> Self {
        Self {
            workload,
            env,
            congestion,
            battery,
        }
    }

    pub fn with_battery(self, battery: usize) -> Self {
        Self { battery, ..self }
    }
}

/// Virtual state after the computing demand is committed but before the
/// green energy of the slot is realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PdsState {
    pub workload: usize,
    pub env: usize,
    pub congestion: usize,
    pub battery_post: usize,
}

impl PdsState {
    /// The normal state with the same coordinates, used to address tables
    /// that share the state-space layout.
    pub fn as_state(self) -> SystemState {
        SystemState::new(self.workload, self.env, self.congestion, self.battery_post)
    }
}

/// Uniform battery grid `{0, step, 2 step, ..., capacity}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryGrid {
    pub step_wh: f64,
    /// Capacity in grid steps.
    pub max_level: usize,
}

impl BatteryGrid {
    pub fn levels(&self) -> usize {
        self.max_level + 1
    }

    pub fn capacity_wh(&self) -> f64 {
        self.max_level as f64 * self.step_wh
    }

    pub fn wh(&self, level: usize) -> f64 {
        level as f64 * self.step_wh
    }
}

/// Discrete computing-energy demand levels, ascending, starting at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid {
    pub levels_wh: Vec<f64>,
    /// Each level expressed in battery grid steps.
    pub units: Vec<usize>,
}

impl ActionGrid {
    pub fn len(&self) -> usize {
        self.levels_wh.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels_wh.is_empty()
    }

    pub fn wh(&self, action: usize) -> f64 {
        self.levels_wh[action]
    }

    /// Index of the level equal to `wh`, if any.
    pub fn index_of_wh(&self, wh: f64) -> Option<usize> {
        self.levels_wh.iter().position(|&l| (l - wh).abs() < 1e-9)
    }
}

/// Shape of the product space `workload x env x congestion x battery`.
///
/// Canonical order is lexicographic in `(workload, env, congestion,
/// battery)` with the battery coordinate varying fastest, so every
/// exogenous context `(workload, env, congestion)` owns a contiguous slice
/// of `battery_levels` entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSpace {
    pub workloads: usize,
    pub envs: usize,
    pub congestions: usize,
    pub battery_levels: usize,
}

impl StateSpace {
    pub fn len(&self) -> usize {
        self.contexts() * self.battery_levels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of exogenous contexts `(workload, env, congestion)`.
    pub fn contexts(&self) -> usize {
        self.workloads * self.envs * self.congestions
    }

    pub fn context_index(&self, workload: usize, env: usize, congestion: usize) -> usize {
        (workload * self.envs + env) * self.congestions + congestion
    }

    /// Inverse of [`Self::context_index`].
    pub fn context_of(&self, ctx: usize) -> (usize, usize, usize) {
        let congestion = ctx % self.congestions;
        let rest = ctx / self.congestions;
        (rest / self.envs, rest % self.envs, congestion)
    }

    pub fn index_of(&self, s: SystemState) -> usize {
        self.context_index(s.workload, s.env, s.congestion) * self.battery_levels + s.battery
    }

    pub fn pds_index(&self, p: PdsState) -> usize {
        self.index_of(p.as_state())
    }

    pub fn state_of(&self, index: usize) -> SystemState {
        let battery = index % self.battery_levels;
        let (workload, env, congestion) = self.context_of(index / self.battery_levels);
        SystemState::new(workload, env, congestion, battery)
    }

    /// All states in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = SystemState> + '_ {
        (0..self.len()).map(move |i| self.state_of(i))
    }

    /// Indices of the states in context `ctx`, one per battery level.
    pub fn context_slice(&self, ctx: usize) -> std::ops::Range<usize> {
        let start = ctx * self.battery_levels;
        start..start + self.battery_levels
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn space() -> StateSpace {
        StateSpace {
            workloads: 3,
            envs: 3,
            congestions: 3,
            battery_levels: 41,
        }
    }

    #[test]
    fn default_shape_has_1107_states() {
        assert_eq!(space().len(), 1107);
        assert_eq!(space().iter().count(), 1107);
    }

    #[test]
    fn singleton_space_is_battery_minor() {
        let sp = StateSpace {
            workloads: 1,
            envs: 1,
            congestions: 1,
            battery_levels: 2,
        };
        let states: Vec<_> = sp.iter().collect();
        assert_eq!(
            states,
            vec![SystemState::new(0, 0, 0, 0), SystemState::new(0, 0, 0, 1)]
        );
    }

    #[test]
    fn order_is_lexicographic() {
        let states: Vec<_> = space().iter().collect();
        assert!(states.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(states, space().iter().collect::<Vec<_>>());
    }

    #[test]
    fn context_slice_is_contiguous() {
        let sp = space();
        let ctx = sp.context_index(2, 1, 0);
        for (b, i) in sp.context_slice(ctx).enumerate() {
            assert_eq!(sp.state_of(i), SystemState::new(2, 1, 0, b));
        }
    }

    proptest! {
        #[test]
        fn enumeration_is_a_bijection(
            w in 1usize..5, e in 1usize..5, h in 1usize..5, b in 1usize..50, pick in 0usize..10_000
        ) {
            let sp = StateSpace { workloads: w, envs: e, congestions: h, battery_levels: b };
            let i = pick % sp.len();
            prop_assert_eq!(sp.index_of(sp.state_of(i)), i);
            let ctx = pick % sp.contexts();
            let (a, bb, c) = sp.context_of(ctx);
            prop_assert_eq!(sp.context_index(a, bb, c), ctx);
        }
    }
}

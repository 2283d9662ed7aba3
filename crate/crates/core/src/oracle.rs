//! Exact solution with full knowledge of the dynamics.
//!
//! The Bellman operator is evaluated through the post-decision
//! factorization: the expected next-state value after action `a` in state
//! `s` equals the post-decision value at `pds_of(s, a)`, because the only
//! action-dependent part of the transition is the battery drop before the
//! green energy arrives.

use thiserror::Error;

use crate::env::ExogenousKernel;
use crate::models::EdgeSystem;
use crate::state::{PdsState, SystemState};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("value iteration did not converge in {iterations} sweeps (last change {last_change:e})")]
    NonConvergence { iterations: usize, last_change: f64 },
}

/// Solved tables, indexed by canonical state index. `v_star` is indexed by
/// post-decision state, which shares the layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTables {
    pub c_star: Vec<f64>,
    pub v_star: Vec<f64>,
    pub policy: Vec<usize>,
    pub iterations: usize,
}

/// Post-decision state after committing budget `a` in state `s`.
pub fn pds_of(sys: &EdgeSystem, s: SystemState, a: usize) -> PdsState {
    let battery_post = if sys.is_backup(s) {
        s.battery
    } else {
        let cfg = sys.config();
        (s.battery as i64 - cfg.op_units(s.workload) as i64 - cfg.actions.units[a] as i64).max(0) as usize
    };
    PdsState {
        workload: s.workload,
        env: s.env,
        congestion: s.congestion,
        battery_post,
    }
}

/// One-slot cost averaged over the green energy of the state's class.
pub fn expected_cost(sys: &EdgeSystem, s: SystemState, a: usize) -> f64 {
    sys.config()
        .green_pmf(s.env)
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(g, &p)| p * sys.realized_cost(s, a, g))
        .sum()
}

/// `expected_cost` for every `(state, action)`, row-major by state.
/// Infeasible pairs hold `f64::INFINITY`.
pub fn expected_cost_table(sys: &EdgeSystem) -> Vec<f64> {
    let n_a = sys.num_actions();
    let mut table = vec![f64::INFINITY; sys.config().space.len() * n_a];
    for (i, s) in sys.config().space.iter().enumerate() {
        for a in sys.feasible_actions(s) {
            table[i * n_a + a] = expected_cost(sys, s, a);
        }
    }
    table
}

/// Next-state distribution as `(state index, probability)` pairs with
/// distinct indices.
pub fn transition_kernel(sys: &EdgeSystem, s: SystemState, a: usize) -> Vec<(usize, f64)> {
    let cfg = sys.config();
    let sp = cfg.space;
    let kernel = ExogenousKernel::new(sys);
    let from = sp.context_index(s.workload, s.env, s.congestion);
    let pmf = cfg.green_pmf(s.env);
    let mut battery = vec![0.0; sp.battery_levels];
    for (g, &p) in pmf.iter().enumerate() {
        if p > 0.0 {
            battery[sys.battery_next(s, a, g)] += p;
        }
    }
    let mut out = Vec::new();
    for to in 0..sp.contexts() {
        let pe = kernel.prob(from, to);
        if pe == 0.0 {
            continue;
        }
        for (b, &pb) in battery.iter().enumerate() {
            if pb > 0.0 {
                out.push((to * sp.battery_levels + b, pe * pb));
            }
        }
    }
    out
}

/// Expected value of `values` at the start of the next slot, from every
/// post-decision state.
pub fn post_decision_expectation(sys: &EdgeSystem, values: &[f64]) -> Vec<f64> {
    let cfg = sys.config();
    let sp = cfg.space;
    let nb = sp.battery_levels;
    let max = cfg.battery.max_level;
    let kernel = ExogenousKernel::new(sys);
    let n_ctx = sp.contexts();

    // after_green[e][ctx'][b] = sum_g P(g | e) values[ctx', min(b + g, B)]
    let mut after_green = vec![0.0; sp.envs * n_ctx * nb];
    for e in 0..sp.envs {
        let pmf = cfg.green_pmf(e);
        for ctx in 0..n_ctx {
            let row = &values[ctx * nb..(ctx + 1) * nb];
            let out = &mut after_green[(e * n_ctx + ctx) * nb..(e * n_ctx + ctx + 1) * nb];
            for (b, slot) in out.iter_mut().enumerate() {
                *slot = pmf
                    .iter()
                    .enumerate()
                    .map(|(g, &p)| p * row[(b + g).min(max)])
                    .sum();
            }
        }
    }

    let mut post = vec![0.0; sp.len()];
    for from in 0..n_ctx {
        let (_, e, _) = sp.context_of(from);
        let out = &mut post[from * nb..(from + 1) * nb];
        for (to, &p) in kernel.row(from).iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let src = &after_green[(e * n_ctx + to) * nb..(e * n_ctx + to + 1) * nb];
            for (o, v) in out.iter_mut().zip(src) {
                *o += p * v;
            }
        }
    }
    post
}

/// Post-decision value function of a converged cost-to-go table.
pub fn pds_value(sys: &EdgeSystem, c_star: &[f64]) -> Vec<f64> {
    post_decision_expectation(sys, c_star)
}

/// Minimizes `cost(s, a) + discount * post[pds_of(s, a)]` over the
/// feasible actions of every state. Ties go to the smallest action.
fn greedy(sys: &EdgeSystem, costs: &[f64], post: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let sp = sys.config().space;
    let n_a = sys.num_actions();
    let delta = sys.config().discount();
    let mut values = Vec::with_capacity(sp.len());
    let mut policy = Vec::with_capacity(sp.len());
    for (i, s) in sp.iter().enumerate() {
        let mut best = (f64::INFINITY, 0);
        for a in sys.feasible_actions(s) {
            let q = costs[i * n_a + a] + delta * post[sp.pds_index(pds_of(sys, s, a))];
            if q < best.0 {
                best = (q, a);
            }
        }
        values.push(best.0);
        policy.push(best.1);
    }
    (values, policy)
}

/// One application of the Bellman operator to `c`.
pub fn bellman_update(sys: &EdgeSystem, costs: &[f64], c: &[f64]) -> Vec<f64> {
    greedy(sys, costs, &post_decision_expectation(sys, c)).0
}

pub fn value_iteration(sys: &EdgeSystem, tol: f64) -> Result<ValueTables, OracleError> {
    value_iteration_capped(sys, tol, DEFAULT_MAX_ITER)
}

/// Iterates the Bellman operator from zero until the sup-norm change is
/// below `tol * (1 - discount) / (2 * discount)`, which puts the result
/// within `tol` of the fixed point.
pub fn value_iteration_capped(
    sys: &EdgeSystem,
    tol: f64,
    max_iter: usize,
) -> Result<ValueTables, OracleError> {
    let delta = sys.config().discount();
    let threshold = if delta > 0.0 {
        tol * (1.0 - delta) / (2.0 * delta)
    } else {
        f64::INFINITY
    };
    let costs = expected_cost_table(sys);
    let mut c = vec![0.0; sys.config().space.len()];
    let mut last_change = f64::INFINITY;
    for iteration in 1..=max_iter {
        let next = bellman_update(sys, &costs, &c);
        last_change = next
            .iter()
            .zip(&c)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        c = next;
        if last_change < threshold {
            let v_star = pds_value(sys, &c);
            let (_, policy) = greedy(sys, &costs, &v_star);
            return Ok(ValueTables {
                c_star: c,
                v_star,
                policy,
                iterations: iteration,
            });
        }
    }
    Err(OracleError::NonConvergence {
        iterations: max_iter,
        last_change,
    })
}

/// `|C*(s) - min_a (c(s, a) + discount * V*(pds(s, a)))|` for every state.
pub fn pds_consistency_residuals(sys: &EdgeSystem, tables: &ValueTables) -> Vec<f64> {
    let costs = expected_cost_table(sys);
    let (rhs, _) = greedy(sys, &costs, &tables.v_star);
    tables.c_star.iter().zip(&rhs).map(|(c, r)| (c - r).abs()).collect()
}

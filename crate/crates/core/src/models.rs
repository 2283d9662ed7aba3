//! Power, delay, battery and cost arithmetic for one slot, and the inner
//! offloading/autoscaling problem that turns a computing-energy budget into
//! a server count and a local processing rate.

use std::ops::Range;

use thiserror::Error;

use crate::config::{Config, DepreciationBasis, Location, PowerSpec};
use crate::state::SystemState;

const BUDGET_TOL: f64 = 1e-9;
/// Costs closer than this are treated as tied in the allocation search.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("local rate {mu} is not stable on {m} server(s)")]
    UnstableQueue { m: u32, mu: f64 },
    #[error("local rate {mu} exceeds arrival rate {lambda}")]
    ExcessLocal { mu: f64, lambda: f64 },
}

/// Per-slot energy coefficients, in Wh per slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerParams {
    pub e_static: f64,
    /// Wh per slot for each unit/second of arrivals.
    pub kappa_dyn: f64,
    pub e_idle: f64,
    pub e_peak: f64,
    /// Server service rate, units/second.
    pub k_srv: f64,
    pub m_max: u32,
}

impl PowerParams {
    pub fn from_spec(spec: &PowerSpec, slot_hours: f64) -> Self {
        Self {
            e_static: spec.base_station_watts * slot_hours,
            kappa_dyn: spec.dynamic_watts_per_unit * slot_hours,
            e_idle: spec.server_idle_watts * slot_hours,
            e_peak: spec.server_peak_watts * slot_hours,
            k_srv: spec.server_rate,
            m_max: spec.max_servers,
        }
    }

    /// Basic operation and transmission demand of the base station.
    pub fn op_demand(&self, lambda: f64) -> f64 {
        self.e_static + self.kappa_dyn * lambda
    }

    /// Computing demand of `m` active servers processing `mu` units/second.
    pub fn com_demand(&self, m: u32, mu: f64) -> f64 {
        m as f64 * self.e_idle + (mu / self.k_srv) * (self.e_peak - self.e_idle)
    }

    /// Whether `mu` units/second can be served by `m` servers with a
    /// finite queue. No servers means no local processing at all.
    pub fn is_stable(&self, m: u32, mu: f64) -> bool {
        if m == 0 {
            mu == 0.0
        } else {
            mu < m as f64 * self.k_srv
        }
    }
}

/// Base-station utilization at total arrival rate `lambda`.
pub fn utilization(locations: &[Location], lambda: f64) -> f64 {
    locations.iter().map(|l| l.fraction * lambda / l.theta).sum()
}

/// Largest computing demand reachable by a stable allocation with integer
/// local rate at most `lambda`.
pub fn max_com_demand(power: &PowerParams, lambda: f64) -> f64 {
    let mut best: f64 = 0.0;
    for m in 0..=power.m_max {
        for mu in 0..=lambda.floor() as u32 {
            if power.is_stable(m, mu as f64) {
                best = best.max(power.com_demand(m, mu as f64));
            }
        }
    }
    best
}

/// The three delay components of one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayCost {
    pub wireless: f64,
    pub local: f64,
    pub offload: f64,
    pub total: f64,
}

/// Wireless access, local processing and offloading delay costs.
pub fn delay_cost(
    cfg: &Config,
    h: f64,
    lambda: f64,
    m: u32,
    mu: f64,
) -> Result<DelayCost, ModelError> {
    if mu > lambda {
        return Err(ModelError::ExcessLocal { mu, lambda });
    }
    let power = &cfg.power;
    if !power.is_stable(m, mu) {
        return Err(ModelError::UnstableQueue { m, mu });
    }
    let rho = utilization(cfg.locations(), lambda);
    let wireless: f64 = cfg
        .locations()
        .iter()
        .map(|l| l.fraction * lambda / (l.theta * (1.0 - rho)))
        .sum();
    let local = if m == 0 {
        0.0
    } else {
        let load = mu / power.k_srv;
        load / (m as f64 - load)
    };
    let offload = (lambda - mu) * (h - cfg.cost().d0).max(0.0);
    Ok(DelayCost {
        wireless,
        local,
        offload,
        total: wireless + local + offload,
    })
}

/// Solution of the inner problem for one `(state, budget)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    /// Active servers.
    pub m: u32,
    /// Locally processed rate, units/second; `lambda - mu` is offloaded.
    pub mu: f64,
    pub delay_cost: f64,
}

/// Minimum-delay allocation with computing demand within `budget_wh`.
///
/// Searches every server count and every integer local rate; ties go to
/// fewer servers, then to less local work.
pub fn solve_allocation(cfg: &Config, lambda: f64, h: f64, budget_wh: f64) -> Allocation {
    let power = &cfg.power;
    let mut best: Option<Allocation> = None;
    for m in 0..=power.m_max {
        for mu in 0..=lambda.floor() as u32 {
            let mu = mu as f64;
            if !power.is_stable(m, mu) || power.com_demand(m, mu) > budget_wh + BUDGET_TOL {
                continue;
            }
            let cost = delay_cost(cfg, h, lambda, m, mu)
                .expect("stable pair")
                .total;
            if best.is_none_or(|b| cost < b.delay_cost - TIE_TOL) {
                best = Some(Allocation {
                    m,
                    mu,
                    delay_cost: cost,
                });
            }
        }
    }
    best.expect("full offload is always feasible")
}

/// A validated configuration together with the allocation table for every
/// `(workload, congestion, action)` triple.
#[derive(Debug, Clone)]
pub struct EdgeSystem {
    cfg: Config,
    allocations: Vec<Allocation>,
    full_offload: Vec<f64>,
}

impl EdgeSystem {
    pub fn new(cfg: Config) -> Self {
        let sp = cfg.space;
        let n_a = cfg.actions.len();
        let mut allocations = Vec::with_capacity(sp.workloads * sp.congestions * n_a);
        let mut full_offload = Vec::with_capacity(sp.workloads * sp.congestions);
        for w in 0..sp.workloads {
            for h in 0..sp.congestions {
                let (lambda, rtt) = (cfg.workload(w), cfg.congestion(h));
                full_offload.push(delay_cost(&cfg, rtt, lambda, 0, 0.0).expect("m = mu = 0").total);
                for a in 0..n_a {
                    allocations.push(solve_allocation(&cfg, lambda, rtt, cfg.actions.wh(a)));
                }
            }
        }
        Self {
            cfg,
            allocations,
            full_offload,
        }
    }

    pub fn config(&self) -> &Config {
        &self.cfg
    }

    pub fn num_actions(&self) -> usize {
        self.cfg.actions.len()
    }

    /// Basic-operation demand at the state's workload, Wh.
    pub fn op_demand_wh(&self, s: SystemState) -> f64 {
        self.cfg.op_units(s.workload) as f64 * self.cfg.battery.step_wh
    }

    /// The battery cannot cover basic operation; the backup supply runs the
    /// slot and everything is offloaded.
    pub fn is_backup(&self, s: SystemState) -> bool {
        self.cfg.op_units(s.workload) > s.battery
    }

    /// Conservative action set: levels not exceeding the charge left after
    /// basic operation. Always a nonempty prefix of the action grid.
    pub fn feasible_actions(&self, s: SystemState) -> Range<usize> {
        if self.is_backup(s) {
            return 0..1;
        }
        let spare = s.battery - self.cfg.op_units(s.workload);
        let n = self.cfg.actions.units.iter().take_while(|&&u| u <= spare).count();
        0..n
    }

    pub fn is_feasible(&self, s: SystemState, a: usize) -> bool {
        self.feasible_actions(s).contains(&a)
    }

    /// Cached inner-problem solution for budget level `a` at `s`.
    pub fn allocation(&self, s: SystemState, a: usize) -> &Allocation {
        let sp = self.cfg.space;
        &self.allocations[(s.workload * sp.congestions + s.congestion) * self.num_actions() + a]
    }

    /// Delay cost of offloading everything at `s`.
    pub fn full_offload_delay(&self, s: SystemState) -> f64 {
        self.full_offload[s.workload * self.cfg.space.congestions + s.congestion]
    }

    /// Energy the depreciation term is charged on, Wh.
    pub fn depreciation_energy(&self, s: SystemState, a: usize) -> f64 {
        let a_wh = self.cfg.actions.wh(a);
        match self.cfg.depreciation_basis() {
            DepreciationBasis::TotalDemand => self.op_demand_wh(s) + a_wh,
            DepreciationBasis::ComputingOnly => a_wh,
        }
    }

    /// Battery level (grid steps) at the start of the next slot, given
    /// green energy `green` (grid steps) harvested in this one.
    pub fn battery_next(&self, s: SystemState, a: usize, green: usize) -> usize {
        let max = self.cfg.battery.max_level;
        if self.is_backup(s) {
            return (s.battery + green).min(max);
        }
        let next = s.battery as i64 - self.cfg.op_units(s.workload) as i64
            - self.cfg.actions.units[a] as i64
            + green as i64;
        next.clamp(0, max as i64) as usize
    }

    /// Slot cost once the green energy `green` (grid steps) is known.
    pub fn realized_cost(&self, s: SystemState, a: usize, green: usize) -> f64 {
        let cost = self.cfg.cost();
        if self.is_backup(s) {
            return self.full_offload_delay(s) + cost.phi * self.op_demand_wh(s) / 1000.0;
        }
        let g_wh = green as f64 * self.cfg.battery.step_wh;
        let deficit = (self.depreciation_energy(s, a) - g_wh).max(0.0);
        self.allocation(s, a).delay_cost + cost.omega * deficit / 1000.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ConfigFile;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    fn sys() -> EdgeSystem {
        EdgeSystem::new(Config::default())
    }

    /// Enumerates every stable pair within budget and returns the cost-minimal
    /// one with the lexicographically smallest `(m, mu)`. Costs are evaluated
    /// from the closed-form expressions directly.
    fn brute_force(lambda: f64, h: f64, budget: f64) -> (u32, u32, f64) {
        let (theta, d0, k) = (60.0, 0.03, 10.0);
        let rho = lambda / theta;
        let mut pairs = Vec::new();
        for mu in 0..=lambda as u32 {
            for m in 0..=3u32 {
                let load = mu as f64 / k;
                let stable = (m == 0 && mu == 0) || (m > 0 && load < m as f64);
                let demand = 25.0 * m as f64 + 2.5 * mu as f64;
                if !stable || demand > budget + 1e-9 {
                    continue;
                }
                let c_lo = if m == 0 { 0.0 } else { load / (m as f64 - load) };
                let c = lambda / (theta * (1.0 - rho)) + c_lo + (lambda - mu as f64) * (h - d0).max(0.0);
                pairs.push((m, mu, c));
            }
        }
        let min = pairs.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
        pairs
            .into_iter()
            .filter(|p| p.2 <= min + TIE_TOL)
            .min_by_key(|p| (p.0, p.1))
            .unwrap()
    }

    #[test]
    fn op_demand_examples() {
        let p = Config::default().power;
        assert!(close(p.op_demand(10.0), 225.0));
        assert!(close(p.op_demand(30.0), 275.0));
        let flat = PowerParams { kappa_dyn: 0.0, ..p };
        assert!(close(flat.op_demand(20.0), 200.0));
    }

    #[test]
    fn com_demand_examples() {
        let p = Config::default().power;
        assert_eq!(p.com_demand(0, 0.0), 0.0);
        assert!(close(p.com_demand(2, 10.0), 75.0));
        assert!(close(p.com_demand(3, 30.0), 150.0));
    }

    #[test]
    fn delay_cost_examples() {
        let cfg = Config::default();
        let d = delay_cost(&cfg, 0.2, 30.0, 2, 10.0).unwrap();
        assert!(close(d.wireless, 1.0));
        assert!(close(d.local, 1.0));
        assert!(close(d.offload, 3.4));
        assert!(close(d.total, 5.4));

        let d = delay_cost(&cfg, 0.8, 30.0, 0, 0.0).unwrap();
        assert!(close(d.total, 24.1));
        assert_eq!(d.local, 0.0);

        for h in [0.05, 0.2, 0.8] {
            assert_eq!(delay_cost(&cfg, h, 20.0, 3, 20.0).unwrap().offload, 0.0);
        }
    }

    #[test]
    fn multi_location_wireless_delay() {
        let mut raw = ConfigFile::default();
        raw.locations = vec![
            crate::config::Location { fraction: 0.5, theta: 100.0 },
            crate::config::Location { fraction: 0.5, theta: 50.0 },
        ];
        let cfg = crate::config::validate_config(raw).unwrap();
        // rho = 15/100 + 15/50 = 0.45; c_wi = (0.15 + 0.3) / 0.55.
        let d = delay_cost(&cfg, 0.05, 30.0, 0, 0.0).unwrap();
        assert!(close(d.wireless, 0.45 / 0.55));
    }

    #[test]
    fn unstable_queue_is_an_error() {
        let cfg = Config::default();
        assert_eq!(
            delay_cost(&cfg, 0.2, 30.0, 1, 10.0),
            Err(ModelError::UnstableQueue { m: 1, mu: 10.0 })
        );
        assert!(matches!(
            delay_cost(&cfg, 0.2, 30.0, 0, 5.0),
            Err(ModelError::UnstableQueue { .. })
        ));
        assert!(matches!(
            delay_cost(&cfg, 0.2, 10.0, 3, 12.0),
            Err(ModelError::ExcessLocal { .. })
        ));
    }

    #[test]
    fn allocation_examples_match_brute_force() {
        let cfg = Config::default();
        // Frozen from `brute_force`: m = 2, mu = 9 beats m = 2, mu = 10 (5.4).
        let (m, mu, c) = brute_force(30.0, 0.2, 75.0);
        assert_eq!((m, mu), (2, 9));
        assert!(close(c, 1.0 + 0.9 / 1.1 + 21.0 * 0.17));
        let alloc = solve_allocation(&cfg, 30.0, 0.2, 75.0);
        assert_eq!((alloc.m, alloc.mu), (2, 9.0));
        assert!(close(alloc.delay_cost, c));

        // Everything local; three servers halve the queueing delay of two.
        let (m, mu, c) = brute_force(10.0, 0.8, 150.0);
        assert_eq!((m, mu), (3, 10));
        assert!(close(c, 0.2 + 0.5));
        let alloc = solve_allocation(&cfg, 10.0, 0.8, 150.0);
        assert_eq!((alloc.m, alloc.mu), (3, 10.0));
        // One server cannot hold all ten units/second.
        assert!(!cfg.power.is_stable(1, 10.0));
    }

    #[test]
    fn zero_budget_forces_full_offload() {
        let cfg = Config::default();
        for &l in &[10.0, 20.0, 30.0] {
            for &h in &[0.05, 0.2, 0.8] {
                let alloc = solve_allocation(&cfg, l, h, 0.0);
                assert_eq!((alloc.m, alloc.mu), (0, 0.0));
                let c_wi = l / (60.0 * (1.0 - l / 60.0));
                assert!(close(alloc.delay_cost, c_wi + l * (h - 0.03_f64).max(0.0)));
            }
        }
    }

    #[test]
    fn allocation_optimal_on_default_grid() {
        let s = sys();
        let cfg = s.config();
        for st in cfg.space.iter().filter(|st| st.battery == 0) {
            for a in 0..s.num_actions() {
                let alloc = s.allocation(st, a);
                let (m, mu, c) = brute_force(cfg.workload(st.workload), cfg.congestion(st.congestion), cfg.actions.wh(a));
                assert_eq!((alloc.m, alloc.mu as u32), (m, mu));
                assert!((alloc.delay_cost - c).abs() < 1e-10);
                assert!(cfg.power.com_demand(alloc.m, alloc.mu) <= cfg.actions.wh(a) + 1e-9);
            }
        }
    }

    #[test]
    fn delay_nonincreasing_in_budget() {
        let s = sys();
        for st in s.config().space.iter().filter(|st| st.battery == 0) {
            for a in 1..s.num_actions() {
                assert!(s.allocation(st, a).delay_cost <= s.allocation(st, a - 1).delay_cost);
            }
        }
    }

    #[test]
    fn battery_next_examples() {
        let s = sys();
        // b = 500 Wh, lambda = 10, a = 75 Wh, g = 150 Wh.
        let st = SystemState::new(0, 0, 0, 20);
        assert_eq!(s.battery_next(st, 3, 6), 14);
        // b = 200 Wh below d_op(30) = 275 Wh: backup slot, charge only.
        let st = SystemState::new(2, 0, 0, 8);
        assert!(s.is_backup(st));
        assert_eq!(s.battery_next(st, 0, 4), 12);
        // Clamp at capacity.
        let st = SystemState::new(0, 0, 0, 40);
        assert_eq!(s.battery_next(st, 0, 12), 40);
    }

    #[test]
    fn battery_next_stays_on_grid() {
        let s = sys();
        let cfg = s.config();
        for st in cfg.space.iter() {
            for a in s.feasible_actions(st) {
                for g in 0..cfg.green_levels() {
                    assert!(s.battery_next(st, a, g) <= cfg.battery.max_level);
                }
            }
        }
    }

    #[test]
    fn realized_cost_examples() {
        let s = sys();
        // lambda = 30, h = 0.2, b = 500 Wh, a = 75 Wh, g = 50 Wh.
        let st = SystemState::new(2, 0, 1, 20);
        let expected = (1.0 + 0.9 / 1.1 + 21.0 * 0.17) + 0.2 * (350.0 - 50.0) / 1000.0;
        assert!(close(s.realized_cost(st, 3, 2), expected));
        // Backup branch: lambda = 30, h = 0.8, b = 200 Wh.
        let st = SystemState::new(2, 0, 2, 8);
        assert!(close(s.realized_cost(st, 0, 0), 26.85));
        assert!(close(s.realized_cost(st, 0, 20), 26.85));
        // Surplus slot: no depreciation.
        let st = SystemState::new(0, 0, 0, 20);
        assert!(close(s.realized_cost(st, 2, 12), s.allocation(st, 2).delay_cost));
    }

    #[test]
    fn depreciation_bases_agree_on_surplus() {
        let mut raw = ConfigFile::default();
        raw.depreciation_basis = DepreciationBasis::ComputingOnly;
        let only = EdgeSystem::new(crate::config::validate_config(raw).unwrap());
        let total = sys();
        let omega = 0.2;
        for st in total.config().space.iter() {
            for a in total.feasible_actions(st) {
                for g in 0..total.config().green_levels() {
                    let ct = total.realized_cost(st, a, g);
                    let co = only.realized_cost(st, a, g);
                    if total.is_backup(st) {
                        assert_eq!(ct, co);
                        continue;
                    }
                    let g_wh = g as f64 * 25.0;
                    let a_wh = total.config().actions.wh(a);
                    let dop = total.op_demand_wh(st);
                    let diff = omega * ((dop + a_wh - g_wh).max(0.0) - (a_wh - g_wh).max(0.0)) / 1000.0;
                    assert!((ct - co - diff).abs() < 1e-12);
                    if g_wh >= dop + a_wh {
                        assert_eq!(ct, co);
                    }
                }
            }
        }
    }

    #[test]
    fn feasible_action_examples() {
        let s = sys();
        assert_eq!(s.feasible_actions(SystemState::new(0, 0, 0, 20)), 0..7);
        assert_eq!(s.feasible_actions(SystemState::new(2, 0, 0, 8)), 0..1);
        assert_eq!(s.feasible_actions(SystemState::new(0, 0, 0, 10)), 0..2);
        // Exactly at the basic-operation level: no backup, no computing.
        let st = SystemState::new(0, 0, 0, 9);
        assert!(!s.is_backup(st));
        assert_eq!(s.feasible_actions(st), 0..1);
    }

    #[test]
    fn demand_monotonicity() {
        let p = Config::default().power;
        for m in 0..3 {
            for mu in 0..30 {
                let mu = mu as f64;
                assert!(p.com_demand(m + 1, mu) >= p.com_demand(m, mu));
                assert!(p.com_demand(m, mu + 1.0) >= p.com_demand(m, mu));
            }
        }
        assert!(p.op_demand(20.0) > p.op_demand(10.0));
    }
}

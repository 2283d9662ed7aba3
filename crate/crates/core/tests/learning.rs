use std::sync::Arc;

use edgesim_core::harness::{self, RunOptions, Scheme};
use edgesim_core::oracle;
use edgesim_core::{Config, EdgeSystem};

fn sys() -> Arc<EdgeSystem> {
    Arc::new(EdgeSystem::new(Config::default()))
}

#[test]
fn converged_learner_matches_exact_policy() {
    let sys = sys();
    let exact = oracle::value_iteration(&sys, oracle::DEFAULT_TOL).unwrap();
    let opts = RunOptions {
        slots: 60_000,
        runs: 1,
        base_seed: 0,
        trace: false,
    };
    let run = harness::simulate(&sys, Scheme::Pds, &opts, None).unwrap();
    let learned = &run.replicas[0].policy;
    let agree = learned.iter().zip(&exact.policy).filter(|(a, b)| a == b).count();
    let share = agree as f64 / learned.len() as f64;
    assert!(share >= 0.95, "agreement {share:.3}");
}

#[test]
fn exact_policy_is_no_worse_than_myopic() {
    let opts = RunOptions {
        slots: 1000,
        runs: 30,
        base_seed: 0,
        trace: false,
    };
    let (summary, _) = harness::run_schemes(&sys(), &[Scheme::Oracle, Scheme::Myopic], &opts).unwrap();
    let oracle = summary.scheme("oracle").unwrap().mean_discounted_cost;
    let myopic = summary.scheme("myopic").unwrap().mean_discounted_cost;
    assert!(myopic >= oracle, "myopic {myopic} < oracle {oracle}");
}

#[test]
fn exact_policy_beats_learner_at_long_horizons() {
    let opts = RunOptions {
        slots: 20_000,
        runs: 6,
        base_seed: 0,
        trace: false,
    };
    let (summary, cmp, _) =
        harness::compare(&sys(), &[Scheme::Pds, Scheme::Oracle], &opts, None).unwrap();
    let pds = summary.scheme("pds").unwrap().final_running_average;
    let oracle = summary.scheme("oracle").unwrap().final_running_average;
    // Within sampling noise: never more than 1% above the learner.
    assert!(oracle <= pds * 1.01, "oracle {oracle} vs pds {pds}");
    assert!(cmp.reduction_vs("pds").is_some());
}

#[test]
fn learner_beats_q_learning_at_one_thousand_slots() {
    let opts = RunOptions {
        slots: 1000,
        runs: 30,
        base_seed: 0,
        trace: false,
    };
    let (_, cmp, _) = harness::compare(&sys(), &[Scheme::Pds, Scheme::QLearning], &opts, None).unwrap();
    assert_eq!(cmp.best, "pds");
    assert!(cmp.reduction_vs("q").unwrap() > 0.0);
}

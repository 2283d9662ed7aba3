//! Joint workload offloading and server autoscaling for a renewable-powered
//! edge system.
//!
//! The crate models one base station with co-located servers running on a
//! battery charged by green energy. Each slot a controller picks a
//! computing-energy budget; the budget fixes the number of active servers
//! and the share of workload processed locally, the rest going to the
//! cloud. Included are an exact value-iteration solver, an online learner
//! built on post-decision states, Q-learning, myopic and fixed-budget
//! baselines, and a seeded experiment harness that writes CSV results.

pub mod config;
pub mod env;
pub mod harness;
pub mod learners;
pub mod models;
pub mod oracle;
pub mod state;

pub use config::{validate_config, Config, ConfigFile};
pub use models::EdgeSystem;
pub use state::{PdsState, SystemState};

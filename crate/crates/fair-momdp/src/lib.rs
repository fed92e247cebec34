//! Fair sequential decision making for multiobjective MDPs.
//!
//! The crate bundles a generalized Gini welfare function, exact planning via
//! linear programming over occupancy measures, tabular model-free learners,
//! a queueing model of a traffic intersection, and a reproducible experiment
//! harness with a CLI front end (`fair-momdp`).

pub mod envs;
pub mod harness;
pub mod learner;
pub mod linalg;
pub mod lp;
pub mod momdp;
pub mod planner;
pub mod seeding;
pub mod welfare;

pub use momdp::{MoMdp, Policy};
pub use welfare::{ggi, GiniWeights, ValueVector, WelfareSpec};

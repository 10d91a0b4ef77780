pub mod baselines;
pub mod btl;
mod clock;
pub mod error;
pub mod graph;
pub mod harness;
pub mod metrics;
pub mod solver;

//! Independent checks of the exact limits: a vertex-enumeration minimizer
//! over permutation-invariant adversaries and a protocol simulator.

mod lp;
mod sim;

pub use lp::{
    lower_envelope_eval, oracle_solve, ucl_oracle_lp, vertex_table, AdversaryMixture,
    OracleSolution, Support, ORACLE_MAX_N,
};
pub use sim::{simulate_protocol, simulate_protocol_parallel, Protocol, Sampler, SimOutcome, TrialRecord, Truth};

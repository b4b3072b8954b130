//! Exact asymptotics of the random-coding error probability P_RC(n) for
//! finite discrete memoryless channels, with ground-truth oracles.
//!
//! The crate has two halves that check each other:
//!
//! * **Prediction** — solve the error-exponent problem, classify the channel
//!   (singular / lattice / pseudo-symmetric), and evaluate the exact
//!   constant-factor asymptotics of P_RC(n) for both tie-breaking rules
//!   (ties broken uniformly at random, or counted as errors).
//! * **Oracle** — compute P_RC(n) itself: exactly by joint-type enumeration
//!   with lattice convolutions, by tilted importance-sampled Monte Carlo
//!   for larger block lengths, or by brute-force codebook enumeration at
//!   toy sizes.
//!
//! The `exactrc` binary wraps both halves behind `analyze`, `predict`,
//! `oracle` and `compare` subcommands emitting CSV or JSON tables.

pub mod asymptotics;
pub mod channel;
pub mod classify;
pub mod cli;
pub mod exponent;
mod numeric;
pub mod oracle;
pub mod special;
pub mod tilt;

pub use asymptotics::{na_prime_mod, predict, Branch, Prediction, TieRule};
pub use channel::{
    load_channel, random_channel, DiscreteChannel, InputDistribution, NuTable, PruneReport,
};
pub use classify::{classify_channel, classify_pair, real_lattice_span, ChannelClass, PairClass};
pub use exponent::{
    critical_rate, log_mgf, solve_exponent, solve_exponent_with, z_support, RateAnalysis, Regime,
    SolveOptions, ZSupport,
};
pub use oracle::{
    brute_force_prc, effective_codebook, exact_prc, mc_prc, q_m, sum_distribution, OracleEstimate,
    OracleMethod, OracleOptions, PairType, SumDist,
};
pub use tilt::{tilted_sampler, tilted_stats, TiltedSampler, TiltedStats};

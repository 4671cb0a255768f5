//! Fixed workloads for the pipeline benchmarks.

use stopcert_core::models;
use stopcert_core::poly::q;
use stopcert_core::pts::Pts;
use stopcert_core::sim::RunConfig;
use stopcert_core::sos::SosOptions;

/// Markov system with the options that give `alpha = 4/5`.
pub fn markov_sos() -> (Pts, SosOptions) {
    let opts = SosOptions {
        degree: 2,
        eps: q(1, 5),
        homogeneous: true,
        ..SosOptions::default()
    };
    (models::markov(), opts)
}

pub fn hare_runs(runs: u64) -> (Pts, RunConfig) {
    (models::hare(), RunConfig::new(runs, 10_000, 1).expect("valid config"))
}

pub fn markov_exact_runs(runs: u64, steps: u64) -> (Pts, RunConfig) {
    (models::markov(), RunConfig::new(runs, steps, 1).expect("valid config").exact(true))
}

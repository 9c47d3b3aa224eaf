//! Multi-threaded scenario evaluation.

use rayon::prelude::*;
use vahedge_core::env::EnvConfig;
use vahedge_core::evalharness::{run_scenarios, PolicySpec, ScenarioRunner};
use vahedge_core::rng::StreamKey;

/// Scenarios per work item; each item builds one policy instance.
const CHUNK: u64 = 64;

/// Splits scenarios into fixed chunks on a private rayon pool. Scenario `j`
/// always uses stream `j`, and chunks are reassembled in index order, so the
/// result does not depend on the thread count.
pub struct Parallel {
    pool: rayon::ThreadPool,
}

impl Parallel {
    /// `threads == 0` uses every available core.
    pub fn new(threads: usize) -> anyhow::Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl ScenarioRunner for Parallel {
    fn run(&self, policy: PolicySpec<'_>, config: &EnvConfig, scenarios: u64, key: StreamKey) -> vahedge_core::Result<Vec<f64>> {
        let chunks = scenarios.div_ceil(CHUNK);
        self.pool.install(|| {
            let parts: vahedge_core::Result<Vec<Vec<f64>>> = (0..chunks)
                .into_par_iter()
                .map(|c| run_scenarios(policy, config, c * CHUNK..((c + 1) * CHUNK).min(scenarios), key))
                .collect();
            Ok(parts?.concat())
        })
    }
}

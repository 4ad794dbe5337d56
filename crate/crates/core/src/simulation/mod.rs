//! Monte Carlo resilience estimation: connectivity bookkeeping, the episode
//! engine (storm damage plus crew restoration), score aggregation, the
//! on-disk episode store, the parallel estimate driver, and report writers.

pub(crate) mod connectivity;
mod episode;
mod estimate;
mod metrics;
mod report;
mod store;

pub use connectivity::{served_counts, served_fraction, ConnectivityTracker};
pub use episode::{
    restore, run_episode, CrewConfig, Episode, EpisodeContext, RestorationResult, SimConfig,
};
pub use estimate::{run_estimate, AreaEstimate, EstimateOutcome, SimError};
pub use metrics::{aggregate_resilience, trapezoid_resilience, RunningAggregate};
pub use report::{
    write_convergence_csv, write_resilience_csv, write_resilience_geojson, ReportError,
};
pub use store::{EpisodeReader, EpisodeWriter, StoreError, StoreMeta};

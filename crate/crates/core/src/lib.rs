//! Evaluation of probabilistic multi-organ segmentations against several raters.
//!
//! The pipeline is: load volumes ([`volume`], [`manifest`]) → derive per-class
//! consensus regions ([`consensus`]) → per-case metrics ([`metrics`]) → leaderboard
//! ([`ranking`]) → bootstrap rank stability ([`stability`]) → tables and files
//! ([`report`]). [`phantom`] builds synthetic datasets with exactly known answers.

pub mod consensus;
pub mod error;
pub mod manifest;
pub mod mask;
pub mod metrics;
pub mod numeric;
pub mod phantom;
pub mod ranking;
pub mod report;
pub mod rng;
pub mod stability;
pub mod volume;

pub use consensus::{derive_regions, region_counts, ConsensusRegions, RegionCounts};
pub use error::{Error, ErrorKind, Result};
pub use manifest::{load_manifest, DatasetManifest, Group};
pub use metrics::{evaluate_case, CaseMetrics, EvalConfig};
pub use numeric::SigmaConvention;
pub use phantom::{Phantom, PhantomDatasetSpec, PhantomSpec, PhantomTruth};
pub use rng::StreamRng;
pub use ranking::{composite_ranking, rank_metric, Metric, RankingTable};
pub use report::{aggregate, correlations, emit, CorrelationMatrix, GroupReport, ReportArtifacts};
pub use stability::{bootstrap_ranks, bubble_export, BootstrapConfig, BootstrapSummary};
pub use volume::{GridGeometry, LabelVolume, Organ, ProbabilityVolume, Volume};

/// Version string recorded in run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

//! Models, analysis and simulation of caching-based device-to-device (D2D)
//! content delivery when file popularity follows a Mandelbrot-Zipf (MZipf)
//! law.
//!
//! The crate is split along the pipeline:
//!
//! - [`popularity`]: the MZipf model, inverse-CDF sampling and KL fitting.
//! - [`ingest`]: access-log parsing, unique-access dedup and ranking.
//! - [`policy`]: the water-filling random caching policy and its constants.
//! - [`analysis`]: closed-form hit probability and throughput-outage points.
//! - [`simulator`]: Monte Carlo over a clustered grid network.

pub mod analysis;
pub mod ingest;
pub mod numeric;
pub mod policy;
pub mod popularity;
pub mod simulator;

pub use analysis::{NetworkConfig, Regime, TradeoffPoint};
pub use policy::{CachingPolicy, ScalingConstants};
pub use popularity::{EmpiricalDistribution, FitConfig, FitResult, PopularityModel, RankSampler};
pub use simulator::{GridNetwork, SimOutcome};

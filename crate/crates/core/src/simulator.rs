//! Monte Carlo simulation of a clustered grid D2D network.
//!
//! Users sit on a regular grid split into square clusters of `g_c` users.
//! Each trial draws `S` cache slots per user from the caching pmf (with
//! replacement by default) and one request per user from the popularity pmf.
//!
//! Per user and trial:
//!
//! - *self-hit*: the request is in the user's own cache. Counts as found,
//!   uses no D2D airtime.
//! - *potential link*: not a self-hit, but another user of the cluster holds
//!   the file.
//! - *outage*: neither.
//!
//! A cluster with `L >= 1` potential links is good; round robin gives each
//! linked user `(C/K) / L` (one active link per cluster, reuse factor K as a
//! uniform rate discount).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::NetworkConfig;
use crate::policy::{self, PolicyError};
use crate::popularity::{PopularityError, PopularityModel, RankSampler};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("cluster size {0} is not a perfect square")]
    NotSquare(u64),
    #[error("invalid simulation input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Popularity(#[from] PopularityError),
}

pub type Result<T> = std::result::Result<T, SimError>;

/// Users partitioned into equal-sized clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridNetwork {
    requested_users: u64,
    g_c: usize,
    /// Users per cluster side; `None` for the single-strip layout.
    cluster_side: Option<usize>,
    clusters_x: usize,
    clusters_y: usize,
    #[serde(skip)]
    members: Vec<Vec<usize>>,
}

impl GridNetwork {
    /// Square clusters of `g_c` users tiled into a near-square grid.
    ///
    /// The user count is rounded up to whole clusters: `k = ceil(n / g_c)`
    /// clusters laid out as `ceil(sqrt(k))` columns by as many rows as needed.
    pub fn build(n_users: u64, g_c: u64) -> Result<Self> {
        if n_users == 0 || g_c == 0 {
            return Err(SimError::InvalidInput("need at least one user per cluster".into()));
        }
        let side = (g_c as f64).sqrt().round() as u64;
        if side * side != g_c {
            return Err(SimError::NotSquare(g_c));
        }
        let clusters = n_users.div_ceil(g_c);
        let clusters_x = ((clusters as f64).sqrt().ceil() as u64).max(1);
        let clusters_y = clusters.div_ceil(clusters_x);
        let (cs, cx, cy) = (side as usize, clusters_x as usize, clusters_y as usize);

        let row = cx * cs;
        let mut members = vec![Vec::with_capacity(g_c as usize); cx * cy];
        for y in 0..cy * cs {
            for x in 0..row {
                members[(x / cs) + cx * (y / cs)].push(y * row + x);
            }
        }
        Ok(Self {
            requested_users: n_users,
            g_c: g_c as usize,
            cluster_side: Some(cs),
            clusters_x: cx,
            clusters_y: cy,
            members,
        })
    }

    /// One cluster of `g_c` users in a row, for instances whose cluster size
    /// is not a perfect square (small exhaustive checks).
    pub fn single_cluster(g_c: u64) -> Result<Self> {
        if g_c == 0 {
            return Err(SimError::InvalidInput("empty cluster".into()));
        }
        Ok(Self {
            requested_users: g_c,
            g_c: g_c as usize,
            cluster_side: None,
            clusters_x: 1,
            clusters_y: 1,
            members: vec![(0..g_c as usize).collect()],
        })
    }

    pub fn n_users(&self) -> usize {
        self.members.len() * self.g_c
    }

    pub fn requested_users(&self) -> u64 {
        self.requested_users
    }

    /// Users added to fill whole clusters.
    pub fn padding(&self) -> u64 {
        self.n_users() as u64 - self.requested_users
    }

    pub fn g_c(&self) -> usize {
        self.g_c
    }

    pub fn cluster_side(&self) -> Option<usize> {
        self.cluster_side
    }

    pub fn clusters_x(&self) -> usize {
        self.clusters_x
    }

    pub fn clusters_y(&self) -> usize {
        self.clusters_y
    }

    pub fn n_clusters(&self) -> usize {
        self.members.len()
    }

    pub fn members(&self, cluster: usize) -> &[usize] {
        &self.members[cluster]
    }

    pub fn clusters(&self) -> impl Iterator<Item = &[usize]> {
        self.members.iter().map(Vec::as_slice)
    }
}

pub fn build_grid(n_users: u64, g_c: u64) -> Result<GridNetwork> {
    GridNetwork::build(n_users, g_c)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheDraw {
    /// Independent draws; a device may hold the same file more than once.
    #[default]
    WithReplacement,
    /// Redraw duplicates, up to a bounded number of attempts per device.
    WithoutReplacement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub users: usize,
    /// Requests found in the cluster, own cache included.
    pub hits: usize,
    pub self_hits: usize,
    /// Requests held by at least one *other* device of the cluster.
    pub d2d_reachable: usize,
    pub potential_links: usize,
    pub outages: usize,
    pub good_clusters: usize,
    pub clusters: usize,
    pub per_user_throughput: Vec<f64>,
    /// Sum of D2D throughput shares per cluster.
    pub cluster_throughput: Vec<f64>,
}

impl TrialOutcome {
    pub fn hit_fraction(&self) -> f64 {
        self.hits as f64 / self.users as f64
    }

    pub fn outage_fraction(&self) -> f64 {
        self.outages as f64 / self.users as f64
    }

    pub fn d2d_fraction(&self) -> f64 {
        self.d2d_reachable as f64 / self.users as f64
    }

    pub fn self_hit_fraction(&self) -> f64 {
        self.self_hits as f64 / self.users as f64
    }

    pub fn mean_throughput(&self) -> f64 {
        self.per_user_throughput.iter().sum::<f64>() / self.users as f64
    }

    pub fn good_cluster_fraction(&self) -> f64 {
        self.good_clusters as f64 / self.clusters as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    /// Sample standard deviation over trials divided by `sqrt(trials)`;
    /// NaN for a single trial.
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub trials: u64,
    pub users: usize,
    /// P(request found in the cluster), own cache included.
    pub hit_prob: Estimate,
    /// P(request held by another device of the cluster).
    pub d2d_hit_prob: Estimate,
    pub self_hit_rate: Estimate,
    pub outage: Estimate,
    /// D2D throughput per user, averaged over users and trials.
    pub per_user_throughput: Estimate,
    pub good_cluster_fraction: Estimate,
    /// Smallest per-user average throughput.
    pub min_avg_throughput: f64,
    pub max_avg_throughput: f64,
    #[serde(skip)]
    pub per_user_average: Vec<f64>,
    /// Per-user standard error of the average throughput.
    #[serde(skip)]
    pub per_user_stderr: Vec<f64>,
}

impl SimOutcome {
    pub fn hit_prob_estimate(&self) -> f64 {
        self.hit_prob.mean
    }

    pub fn outage_estimate(&self) -> f64 {
        self.outage.mean
    }
}

/// Running mean and squared deviations (Chan/Welford) for deterministic merges.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(&mut self, o: &Moments) {
        if o.n == 0.0 {
            return;
        }
        if self.n == 0.0 {
            *self = *o;
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n / n;
        self.m2 += o.m2 + d * d * self.n * o.n / n;
        self.n = n;
    }

    fn estimate(&self) -> Estimate {
        let stderr = if self.n > 1.0 {
            (self.m2 / (self.n - 1.0) / self.n).sqrt()
        } else {
            f64::NAN
        };
        Estimate {
            mean: self.mean,
            stderr,
        }
    }
}

#[derive(Debug, Clone)]
struct Accumulator {
    hit: Moments,
    d2d: Moments,
    self_hit: Moments,
    outage: Moments,
    throughput: Moments,
    good: Moments,
    per_user: Vec<Moments>,
}

impl Accumulator {
    fn new(users: usize) -> Self {
        Self {
            hit: Moments::default(),
            d2d: Moments::default(),
            self_hit: Moments::default(),
            outage: Moments::default(),
            throughput: Moments::default(),
            good: Moments::default(),
            per_user: vec![Moments::default(); users],
        }
    }

    fn push(&mut self, t: &TrialOutcome) {
        self.hit.push(t.hit_fraction());
        self.d2d.push(t.d2d_fraction());
        self.self_hit.push(t.self_hit_fraction());
        self.outage.push(t.outage_fraction());
        self.throughput.push(t.mean_throughput());
        self.good.push(t.good_cluster_fraction());
        for (m, &x) in self.per_user.iter_mut().zip(&t.per_user_throughput) {
            m.push(x);
        }
    }

    fn merge(&mut self, o: &Accumulator) {
        self.hit.merge(&o.hit);
        self.d2d.merge(&o.d2d);
        self.self_hit.merge(&o.self_hit);
        self.outage.merge(&o.outage);
        self.throughput.merge(&o.throughput);
        self.good.merge(&o.good);
        for (m, x) in self.per_user.iter_mut().zip(&o.per_user) {
            m.merge(x);
        }
    }
}

/// Trials are split into at most this many fixed blocks, run in parallel
/// and merged in block order, so results do not depend on the thread count.
const MAX_BLOCKS: u64 = 256;

/// Prepared samplers for one (network, popularity, caching) combination.
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    network: &'a GridNetwork,
    requests: RankSampler,
    caching: RankSampler,
    caching_support: usize,
    s_cache: usize,
    cluster_rate: f64,
    draw: CacheDraw,
}

impl<'a> Simulation<'a> {
    pub fn new(
        network: &'a GridNetwork,
        caching: &[f64],
        popularity: &PopularityModel,
        config: &NetworkConfig,
    ) -> Result<Self> {
        Self::from_pmfs(
            network,
            &popularity.pmf_vec(),
            caching,
            config.s_cache,
            config.cluster_rate(),
        )
    }

    pub fn from_pmfs(
        network: &'a GridNetwork,
        request_pmf: &[f64],
        caching: &[f64],
        s_cache: u64,
        cluster_rate: f64,
    ) -> Result<Self> {
        if request_pmf.len() != caching.len() {
            return Err(SimError::InvalidInput(format!(
                "caching pmf covers {} files but the library has {}",
                caching.len(),
                request_pmf.len()
            )));
        }
        if request_pmf.len() > u32::MAX as usize {
            return Err(SimError::InvalidInput("library too large".into()));
        }
        if s_cache == 0 {
            return Err(SimError::InvalidInput("cache size must be at least 1".into()));
        }
        if !(cluster_rate.is_finite() && cluster_rate >= 0.0) {
            return Err(SimError::InvalidInput("cluster rate must be non-negative".into()));
        }
        Ok(Self {
            network,
            requests: RankSampler::from_weights(request_pmf)?,
            caching: RankSampler::from_weights(caching)?,
            caching_support: caching.iter().filter(|&&p| p > 0.0).count(),
            s_cache: s_cache as usize,
            cluster_rate,
            draw: CacheDraw::default(),
        })
    }

    pub fn with_cache_draw(mut self, draw: CacheDraw) -> Self {
        self.draw = draw;
        self
    }

    fn fill_cache(&self, rng: &mut ChaCha8Rng, slots: &mut Vec<u32>) {
        slots.clear();
        match self.draw {
            CacheDraw::WithReplacement => {
                for _ in 0..self.s_cache {
                    slots.push(self.caching.sample_with(rng) as u32);
                }
            }
            CacheDraw::WithoutReplacement => {
                let target = self.s_cache.min(self.caching_support);
                let mut attempts = 0usize;
                while slots.len() < target && attempts < 1000 * self.s_cache {
                    attempts += 1;
                    let f = self.caching.sample_with(rng) as u32;
                    if !slots.contains(&f) {
                        slots.push(f);
                    }
                }
            }
        }
        slots.sort_unstable();
        slots.dedup();
    }

    /// One independent realization of caches, requests and scheduling.
    pub fn run_trial(&self, seed: u64) -> TrialOutcome {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.network.n_users();

        // Distinct cached files per user, flattened; user u owns caches[offsets[u]..offsets[u+1]].
        let mut caches = Vec::with_capacity(n * self.s_cache);
        let mut offsets = Vec::with_capacity(n + 1);
        let mut slots = Vec::with_capacity(self.s_cache);
        offsets.push(0);
        for _ in 0..n {
            self.fill_cache(&mut rng, &mut slots);
            caches.extend_from_slice(&slots);
            offsets.push(caches.len());
        }
        let requests: Vec<u32> = (0..n)
            .map(|_| self.requests.sample_with(&mut rng) as u32)
            .collect();

        let mut holders = vec![0u32; self.requests.len() + 1];
        let mut out = TrialOutcome {
            users: n,
            hits: 0,
            self_hits: 0,
            d2d_reachable: 0,
            potential_links: 0,
            outages: 0,
            good_clusters: 0,
            clusters: self.network.n_clusters(),
            per_user_throughput: vec![0.0; n],
            cluster_throughput: Vec::with_capacity(self.network.n_clusters()),
        };
        let mut linked = Vec::with_capacity(self.network.g_c());

        for members in self.network.clusters() {
            for &u in members {
                for &f in &caches[offsets[u]..offsets[u + 1]] {
                    holders[f as usize] += 1;
                }
            }
            linked.clear();
            for &u in members {
                let r = requests[u];
                let own = caches[offsets[u]..offsets[u + 1]].binary_search(&r).is_ok();
                let others = holders[r as usize] > own as u32;
                if own {
                    out.self_hits += 1;
                }
                if others {
                    out.d2d_reachable += 1;
                }
                if own || others {
                    out.hits += 1;
                } else {
                    out.outages += 1;
                }
                if !own && others {
                    linked.push(u);
                }
            }
            let share = if linked.is_empty() {
                0.0
            } else {
                out.good_clusters += 1;
                self.cluster_rate / linked.len() as f64
            };
            for &u in &linked {
                out.per_user_throughput[u] = share;
            }
            out.potential_links += linked.len();
            out.cluster_throughput.push(share * linked.len() as f64);
            for &u in members {
                for &f in &caches[offsets[u]..offsets[u + 1]] {
                    holders[f as usize] -= 1;
                }
            }
        }
        out
    }

    /// Trials use seeds `base_seed, base_seed + 1, ...`.
    pub fn run_monte_carlo(&self, trials: u64, base_seed: u64) -> Result<SimOutcome> {
        if trials == 0 {
            return Err(SimError::InvalidInput("need at least one trial".into()));
        }
        let n = self.network.n_users();
        let blocks = trials.min(MAX_BLOCKS);
        let per_block = trials.div_ceil(blocks);
        let partials: Vec<Accumulator> = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let mut acc = Accumulator::new(n);
                let start = b * per_block;
                let end = (start + per_block).min(trials);
                for t in start..end {
                    acc.push(&self.run_trial(base_seed.wrapping_add(t)));
                }
                acc
            })
            .collect();
        let mut total = Accumulator::new(n);
        for p in &partials {
            total.merge(p);
        }

        let per_user_average: Vec<f64> = total.per_user.iter().map(|m| m.mean).collect();
        let per_user_stderr: Vec<f64> = total.per_user.iter().map(|m| m.estimate().stderr).collect();
        let min_avg = per_user_average.iter().cloned().fold(f64::INFINITY, f64::min);
        let max_avg = per_user_average.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(SimOutcome {
            trials,
            users: n,
            hit_prob: total.hit.estimate(),
            d2d_hit_prob: total.d2d.estimate(),
            self_hit_rate: total.self_hit.estimate(),
            outage: total.outage.estimate(),
            per_user_throughput: total.throughput.estimate(),
            good_cluster_fraction: total.good.estimate(),
            min_avg_throughput: min_avg,
            max_avg_throughput: max_avg,
            per_user_average,
            per_user_stderr,
        })
    }
}

pub fn run_trial(
    network: &GridNetwork,
    caching: &[f64],
    popularity: &PopularityModel,
    config: &NetworkConfig,
    seed: u64,
) -> Result<TrialOutcome> {
    Ok(Simulation::new(network, caching, popularity, config)?.run_trial(seed))
}

pub fn run_monte_carlo(
    network: &GridNetwork,
    caching: &[f64],
    popularity: &PopularityModel,
    config: &NetworkConfig,
    trials: u64,
    base_seed: u64,
) -> Result<SimOutcome> {
    Simulation::new(network, caching, popularity, config)?.run_monte_carlo(trials, base_seed)
}

/// Where a sweep takes its caching pmf from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicySource {
    /// Water-filling policy recomputed for each cluster size.
    #[default]
    Optimal,
    Uniform,
    Proportional,
}

impl PolicySource {
    pub fn caching_pmf(&self, popularity: &PopularityModel, s_cache: u64, g_c: u64) -> Result<Vec<f64>> {
        Ok(match self {
            PolicySource::Optimal => policy::optimal_policy(popularity, s_cache, g_c)?
                .p_c()
                .to_vec(),
            PolicySource::Uniform => policy::uniform_caching(popularity.m_total()),
            PolicySource::Proportional => policy::proportional_caching(&popularity.pmf_vec()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub g_c: u64,
    pub outcome: Result<SimOutcome>,
}

/// Builds the grid, derives the caching pmf and runs Monte Carlo for each
/// cluster size. Output order follows `g_c_list`.
pub fn simulate_tradeoff(
    popularity: &PopularityModel,
    base: &NetworkConfig,
    g_c_list: &[u64],
    source: PolicySource,
    trials: u64,
    base_seed: u64,
) -> Vec<SweepPoint> {
    g_c_list
        .iter()
        .map(|&g_c| SweepPoint {
            g_c,
            outcome: (|| {
                let network = GridNetwork::build(base.n_users, g_c)?;
                let caching = source.caching_pmf(popularity, base.s_cache, g_c)?;
                let config = base.with_g_c(g_c);
                run_monte_carlo(&network, &caching, popularity, &config, trials, base_seed)
            })(),
        })
        .collect()
}

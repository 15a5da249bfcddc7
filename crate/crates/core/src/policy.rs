//! Optimal random caching under clustered D2D delivery.
//!
//! Every device draws its `S` cache slots independently from a caching pmf
//! `P_c`. The pmf maximizing the probability that a request is held by some
//! other device of the cluster has the water-filling form
//! `P_c(f) = max(1 - ν / z_f, 0)` with `z_f = P_r(f)^(1 / (S(g_c - 1) - 1))`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::bisect;
use crate::popularity::PopularityModel;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error(
        "cluster too small for the water-filling policy: S(g_c - 1) = {aggregate} but at least 2 is \
         required (S = {s}, g_c = {g_c})"
    )]
    ClusterTooSmall { s: u64, g_c: u64, aggregate: u64 },
    #[error("invalid popularity vector: {0}")]
    InvalidPopularity(String),
    #[error("c1 solver did not converge for c2 = {c2} (residual {residual:e})")]
    NoConvergence { c2: f64, residual: f64 },
    #[error("c2 must be finite and non-negative, got {0}")]
    InvalidC2(f64),
}

pub type Result<T> = std::result::Result<T, PolicyError>;

/// Caching probabilities at or below this count as zero when locating `m*`.
pub const POSITIVE_EPS: f64 = 1e-12;

/// `S(g_c - 1) - 1`, the exponent denominator of `z_f`.
pub fn exponent_denominator(s: u64, g_c: u64) -> Result<u64> {
    let aggregate = s.saturating_mul(g_c.saturating_sub(1));
    if aggregate < 2 {
        return Err(PolicyError::ClusterTooSmall { s, g_c, aggregate });
    }
    Ok(aggregate - 1)
}

/// Unique `c1 >= 1` with `c1 = 1 + c2 ln(1 + c1 / c2)`; `c1(0) = 1`.
///
/// Bracketed bisection on `[1, max(10, 10 c2)]`. The left side of the
/// equation grows faster than the right for every `c1 > 0`, so the root is
/// unique.
pub fn solve_c1(c2: f64) -> Result<f64> {
    if !(c2.is_finite() && c2 >= 0.0) {
        return Err(PolicyError::InvalidC2(c2));
    }
    if c2 == 0.0 {
        return Ok(1.0);
    }
    let h = |x: f64| x - 1.0 - c2 * (x / c2).ln_1p();
    let hi = (10.0 * c2).max(10.0);
    let c1 = bisect(h, 1.0, hi, 2000);
    let residual = h(c1).abs();
    if residual > 1e-10 * c1.max(1.0) {
        return Err(PolicyError::NoConvergence { c2, residual });
    }
    Ok(c1)
}

/// Constants entering `m*`, the hit-probability formulas and the regime
/// conditions for a given model and network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingConstants {
    /// `γ / (S(g_c - 1) - 1)`
    pub a_prime: f64,
    /// `q a'`
    pub c2: f64,
    pub c1: f64,
    /// `q / g_c`
    pub c6: f64,
    /// `c1 S g_c / M`
    pub rho: f64,
    /// `q / M`
    pub d_ratio: f64,
}

impl ScalingConstants {
    pub fn new(popularity: &PopularityModel, s: u64, g_c: u64) -> Result<Self> {
        let n = exponent_denominator(s, g_c)? as f64;
        let (gamma, q, m) = (
            popularity.gamma(),
            popularity.q(),
            popularity.m_total() as f64,
        );
        let a_prime = gamma / n;
        let c2 = q * a_prime;
        let c1 = solve_c1(c2)?;
        Ok(Self {
            a_prime,
            c2,
            c1,
            c6: q / g_c as f64,
            rho: c1 * s as f64 * g_c as f64 / m,
            d_ratio: q / m,
        })
    }
}

fn validate_pmf(pmf: &[f64]) -> Result<()> {
    if pmf.is_empty() {
        return Err(PolicyError::InvalidPopularity("empty pmf".into()));
    }
    if pmf.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(PolicyError::InvalidPopularity(
            "every request probability must be positive and finite".into(),
        ));
    }
    if pmf.windows(2).any(|w| w[0] < w[1]) {
        return Err(PolicyError::InvalidPopularity(
            "pmf must be sorted by non-increasing popularity".into(),
        ));
    }
    Ok(())
}

/// `z_f` from natural-log popularities, computed as `exp(ln P_r(f) / n)`.
fn z_from_ln(ln_pmf: impl Iterator<Item = f64>, n: u64) -> Vec<f64> {
    let n = n as f64;
    ln_pmf.map(|l| (l / n).exp()).collect()
}

pub fn z_values_from_pmf(pmf: &[f64], s: u64, g_c: u64) -> Result<Vec<f64>> {
    let n = exponent_denominator(s, g_c)?;
    validate_pmf(pmf)?;
    if n == 1 {
        return Ok(pmf.to_vec());
    }
    Ok(z_from_ln(pmf.iter().map(|p| p.ln()), n))
}

pub fn z_values(popularity: &PopularityModel, s: u64, g_c: u64) -> Result<Vec<f64>> {
    let n = exponent_denominator(s, g_c)?;
    if n == 1 {
        return Ok(popularity.pmf_vec());
    }
    let m = popularity.m_total();
    Ok(z_from_ln(
        (1..=m).map(|f| popularity.ln_pmf(f).expect("rank in range")),
        n,
    ))
}

/// The water-filling caching pmf together with its water level and support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachingPolicy {
    p_c: Vec<f64>,
    nu: f64,
    m_star: usize,
    z: Vec<f64>,
}

impl CachingPolicy {
    pub fn p_c(&self) -> &[f64] {
        &self.p_c
    }

    /// Water level ν.
    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Number of files cached with positive probability.
    pub fn m_star(&self) -> usize {
        self.m_star
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    fn from_z(z: Vec<f64>) -> Self {
        let m_star = water_fill_support(&z);
        let inv_sum: f64 = z[..m_star].iter().map(|v| 1.0 / v).sum();
        let nu = (m_star - 1) as f64 / inv_sum;
        let p_c = z
            .iter()
            .enumerate()
            .map(|(i, &zf)| if i < m_star { (1.0 - nu / zf).max(0.0) } else { 0.0 })
            .collect();
        Self { p_c, nu, m_star, z }
    }
}

/// Largest `m` with `1 - ν(m)/z_m > POSITIVE_EPS`, `ν(m) = (m-1) / Σ_{f<=m} 1/z_f`.
///
/// The condition holds for a prefix of `1..=M`, so a binary search over
/// prefix sums suffices.
fn water_fill_support(z: &[f64]) -> usize {
    let mut prefix = Vec::with_capacity(z.len());
    let mut acc = 0.0;
    for v in z {
        acc += 1.0 / v;
        prefix.push(acc);
    }
    let positive = |m: usize| {
        let nu = (m - 1) as f64 / prefix[m - 1];
        1.0 - nu / z[m - 1] > POSITIVE_EPS
    };
    // Invariant: positive(lo), !positive(hi) (hi = M + 1 is a virtual index).
    let (mut lo, mut hi) = (1usize, z.len() + 1);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if positive(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

pub fn optimal_policy_from_pmf(pmf: &[f64], s: u64, g_c: u64) -> Result<CachingPolicy> {
    Ok(CachingPolicy::from_z(z_values_from_pmf(pmf, s, g_c)?))
}

pub fn optimal_policy(popularity: &PopularityModel, s: u64, g_c: u64) -> Result<CachingPolicy> {
    Ok(CachingPolicy::from_z(z_values(popularity, s, g_c)?))
}

/// `m*` from a direct numeric solve of the KKT conditions: bisection for
/// the water level `ν` with `Σ_f max(1 - ν/z_f, 0) = 1`, then a count of
/// the files left above it. Shares no code with [`optimal_policy`].
pub fn kkt_mstar_from_z(z: &[f64]) -> usize {
    if z.len() == 1 {
        return 1;
    }
    let excess = |nu: f64| -> f64 {
        let mass: f64 = z.iter().map(|&zf| (1.0 - nu / zf).max(0.0)).sum();
        1.0 - mass
    };
    let top = z.iter().cloned().fold(f64::MIN, f64::max);
    let nu = bisect(excess, 0.0, top, 4000);
    z.iter().filter(|&&zf| 1.0 - nu / zf > POSITIVE_EPS).count().max(1)
}

pub fn kkt_mstar(popularity: &PopularityModel, s: u64, g_c: u64) -> Result<usize> {
    Ok(kkt_mstar_from_z(&z_values(popularity, s, g_c)?))
}

pub fn kkt_mstar_from_pmf(pmf: &[f64], s: u64, g_c: u64) -> Result<usize> {
    Ok(kkt_mstar_from_z(&z_values_from_pmf(pmf, s, g_c)?))
}

/// `min(c1 S g_c / γ, M)`.
pub fn theoretical_mstar(popularity: &PopularityModel, s: u64, g_c: u64) -> Result<f64> {
    let k = ScalingConstants::new(popularity, s, g_c)?;
    Ok((k.c1 * s as f64 * g_c as f64 / popularity.gamma()).min(popularity.m_total() as f64))
}

/// Caching pmf proportional to request popularity.
pub fn proportional_caching(pmf: &[f64]) -> Vec<f64> {
    let t: f64 = pmf.iter().sum();
    pmf.iter().map(|p| p / t).collect()
}

pub fn uniform_caching(m_total: usize) -> Vec<f64> {
    vec![1.0 / m_total as f64; m_total]
}

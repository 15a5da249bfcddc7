//! Closed-form hit probability and throughput-outage evaluation.
//!
//! Two operating regimes, split at `g_c* = γ M / (c1 S)`:
//!
//! - regime 1 (`g_c < g_c*`): only the popular head is cached, throughput
//!   `T = (C/K) / g_c` and an outage driven by `c6 = q / g_c`;
//! - regime 2 (`g_c >= g_c*`, `ρ = c1 S g_c / M >= γ`): practically the whole
//!   library is cached and the outage follows from a lower bound on the hit
//!   probability.
//!
//! All of these are asymptotic expressions evaluated at finite parameters.
//! Results that leave `[0, 1]` are clamped and flagged instead of rejected.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::pow_diff_over_exponent;
use crate::policy::{exponent_denominator, PolicyError, ScalingConstants};
use crate::popularity::PopularityModel;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("regime precondition violated: {0}")]
    Regime(String),
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
    #[error("formula evaluated to a non-finite value")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

/// Admissibility factor for the condition `q = O(S g_c / γ)`, tested as
/// `q <= κ S g_c / γ`.
pub const DEFAULT_KAPPA: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Users in the network, N.
    pub n_users: u64,
    /// Files per device cache, S.
    pub s_cache: u64,
    /// D2D link rate C in bits/s/Hz.
    pub rate_c: f64,
    /// TDMA reuse factor K.
    pub reuse_k: u64,
    /// Users per cluster.
    pub g_c: u64,
}

impl NetworkConfig {
    pub fn new(n_users: u64, s_cache: u64, rate_c: f64, reuse_k: u64, g_c: u64) -> Result<Self> {
        let cfg = Self {
            n_users,
            s_cache,
            rate_c,
            reuse_k,
            g_c,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AnalysisError::InvalidConfig(m.into()));
        if self.s_cache == 0 {
            return bad("cache size S must be at least 1");
        }
        if self.reuse_k == 0 {
            return bad("reuse factor K must be at least 1");
        }
        if !(self.rate_c.is_finite() && self.rate_c > 0.0) {
            return bad("link rate C must be positive");
        }
        if self.g_c == 0 || self.g_c > self.n_users {
            return bad("cluster size must satisfy 1 <= g_c <= N");
        }
        Ok(())
    }

    pub fn with_g_c(&self, g_c: u64) -> Self {
        Self { g_c, ..*self }
    }

    /// Rate available to each active cluster, `C / K`.
    pub fn cluster_rate(&self) -> f64 {
        self.rate_c / self.reuse_k as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Regime1,
    Regime2,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Regime1 => "regime1",
            Regime::Regime2 => "regime2",
        })
    }
}

/// A probability forced into `[0, 1]`, remembering whether that changed it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clamped {
    pub value: f64,
    pub clamped: bool,
}

impl Clamped {
    fn unit(raw: f64) -> Result<Self> {
        if raw.is_nan() {
            return Err(AnalysisError::NonFinite);
        }
        let value = raw.clamp(0.0, 1.0);
        Ok(Self {
            value,
            clamped: value != raw,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    /// Per-user average throughput T in bits/s/Hz.
    pub throughput: f64,
    /// Outage probability P_o.
    pub outage: f64,
    pub regime: Regime,
    pub g_c_used: u64,
    pub clamped: bool,
}

fn validated(popularity: &PopularityModel, config: &NetworkConfig) -> Result<ScalingConstants> {
    config.validate()?;
    exponent_denominator(config.s_cache, config.g_c)?;
    Ok(ScalingConstants::new(popularity, config.s_cache, config.g_c)?)
}

/// Regime boundary `γ M / (c1 S)`, with `c1` taken at the configured `g_c`.
pub fn regime_threshold(popularity: &PopularityModel, config: &NetworkConfig) -> Result<f64> {
    let k = validated(popularity, config)?;
    Ok(popularity.gamma() * popularity.m_total() as f64 / (k.c1 * config.s_cache as f64))
}

pub fn regime_of(popularity: &PopularityModel, config: &NetworkConfig) -> Result<Regime> {
    Ok(if (config.g_c as f64) < regime_threshold(popularity, config)? {
        Regime::Regime1
    } else {
        Regime::Regime2
    })
}

/// In-cluster hit probability for `g_c < γ M / (c1 S)`. With
/// `A = c1 S g_c / γ`:
///
/// ```text
/// [(A+q)^(1-γ) - (1-γ)(A+q)^-γ A - (q+1)^(1-γ)] / [(M+q)^(1-γ) - (q+1)^(1-γ)]
/// ```
///
/// Numerator and denominator are both divided by `1 - γ` before evaluation,
/// which keeps the expression finite at `γ = 1`.
pub fn hit_prob_closed_form(popularity: &PopularityModel, config: &NetworkConfig) -> Result<Clamped> {
    let k = validated(popularity, config)?;
    let (gamma, q, m) = (
        popularity.gamma(),
        popularity.q(),
        popularity.m_total() as f64,
    );
    let s = config.s_cache as f64;
    let g_c = config.g_c as f64;
    let threshold = gamma * m / (k.c1 * s);
    if g_c >= threshold {
        return Err(AnalysisError::Regime(format!(
            "closed form needs g_c < γM/(c1 S) = {threshold:.4}, got g_c = {g_c}; use the lower \
             bound (hit_prob_lower_bound) in this regime"
        )));
    }
    let a = k.c1 * s * g_c / gamma;
    let e = 1.0 - gamma;
    let num = pow_diff_over_exponent(a + q, q + 1.0, e) - (a + q).powf(-gamma) * a;
    let den = pow_diff_over_exponent(m + q, q + 1.0, e);
    Clamped::unit(num / den)
}

/// Lower bound on the hit probability for `g_c = ρ M / (c1 S)`, `ρ >= γ`.
/// With `D = q / M`, `n = S(g_c - 1) - 1` and `β = γ / n`:
///
/// ```text
/// 1 - (1-γ) e^-(ρ/c1 - γ) / ((1+D)^(1-γ) - D^(1-γ)) * [(1+D)^(β+1) - D^(β+1)]^-n
/// ```
pub fn hit_prob_lower_bound(popularity: &PopularityModel, config: &NetworkConfig) -> Result<Clamped> {
    let k = validated(popularity, config)?;
    let gamma = popularity.gamma();
    if k.rho < gamma {
        return Err(AnalysisError::Regime(format!(
            "lower bound needs ρ = c1 S g_c / M >= γ, got ρ = {:.6} < γ = {gamma}",
            k.rho
        )));
    }
    let n = exponent_denominator(config.s_cache, config.g_c)? as f64;
    let d = k.d_ratio;
    let beta = gamma / n;

    let front = (-(k.rho / k.c1 - gamma)).exp() / pow_diff_over_exponent(1.0 + d, d, 1.0 - gamma);
    // (1+D)^(1+β) - D^(1+β) - 1, arranged to avoid cancellation for small β.
    let excess = (1.0 + d) * (beta * d.ln_1p()).exp_m1()
        - if d > 0.0 { d * (beta * d.ln()).exp_m1() } else { 0.0 };
    let tail = (-n * excess.ln_1p()).exp();
    Clamped::unit(1.0 - front * tail)
}

fn check_admissible(popularity: &PopularityModel, config: &NetworkConfig, kappa: f64) -> Result<()> {
    let limit = kappa * config.s_cache as f64 * config.g_c as f64 / popularity.gamma();
    if popularity.q() > limit {
        return Err(AnalysisError::Regime(format!(
            "q = {} exceeds κ S g_c / γ = {limit:.4} (κ = {kappa})",
            popularity.q()
        )));
    }
    Ok(())
}

/// Throughput `(C/K)/g_c` with outage
/// `c6^(γ-1) (S c1 + c6) / (S c1/γ + c6)^γ`, `c6 = q / g_c`.
pub fn tradeoff_regime1(
    popularity: &PopularityModel,
    config: &NetworkConfig,
    kappa: f64,
) -> Result<TradeoffPoint> {
    let k = validated(popularity, config)?;
    let gamma = popularity.gamma();
    let s = config.s_cache as f64;
    let threshold = gamma * popularity.m_total() as f64 / (k.c1 * s);
    if config.g_c as f64 >= threshold {
        return Err(AnalysisError::Regime(format!(
            "regime 1 needs g_c < γM/(c1 S) = {threshold:.4}, got {}",
            config.g_c
        )));
    }
    check_admissible(popularity, config, kappa)?;
    let sc1 = s * k.c1;
    let raw = k.c6.powf(gamma - 1.0) * (sc1 + k.c6) / (sc1 / gamma + k.c6).powf(gamma);
    let outage = Clamped::unit(raw)?;
    Ok(TradeoffPoint {
        throughput: config.cluster_rate() / config.g_c as f64,
        outage: outage.value,
        regime: Regime::Regime1,
        g_c_used: config.g_c,
        clamped: outage.clamped,
    })
}

/// `(C/K) S c1 / (ρ M)`.
pub fn regime2_throughput(cluster_rate: f64, s_cache: u64, c1: f64, rho: f64, m_total: usize) -> f64 {
    cluster_rate * s_cache as f64 * c1 / (rho * m_total as f64)
}

/// Throughput `(C/K) S c1 / (ρ M)`, outage one minus the hit-probability
/// lower bound.
pub fn tradeoff_regime2(popularity: &PopularityModel, config: &NetworkConfig) -> Result<TradeoffPoint> {
    let k = validated(popularity, config)?;
    let hit = hit_prob_lower_bound(popularity, config)?;
    Ok(TradeoffPoint {
        throughput: regime2_throughput(
            config.cluster_rate(),
            config.s_cache,
            k.c1,
            k.rho,
            popularity.m_total(),
        ),
        outage: 1.0 - hit.value,
        regime: Regime::Regime2,
        g_c_used: config.g_c,
        clamped: hit.clamped,
    })
}

/// Regime-dispatched point for one cluster size.
pub fn tradeoff_point(
    popularity: &PopularityModel,
    config: &NetworkConfig,
    kappa: f64,
) -> Result<TradeoffPoint> {
    match regime_of(popularity, config)? {
        Regime::Regime1 => tradeoff_regime1(popularity, config, kappa),
        Regime::Regime2 => tradeoff_regime2(popularity, config),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub g_c: u64,
    pub point: Result<TradeoffPoint>,
}

/// One point per cluster size, sorted by outage (failed points last, in
/// input order).
pub fn tradeoff_curve(
    popularity: &PopularityModel,
    base: &NetworkConfig,
    g_c_list: &[u64],
    kappa: f64,
) -> Vec<CurvePoint> {
    let mut out: Vec<CurvePoint> = g_c_list
        .iter()
        .map(|&g_c| CurvePoint {
            g_c,
            point: tradeoff_point(popularity, &base.with_g_c(g_c), kappa),
        })
        .collect();
    out.sort_by(|a, b| match (&a.point, &b.point) {
        (Ok(x), Ok(y)) => x.outage.total_cmp(&y.outage),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        (Err(_), Err(_)) => std::cmp::Ordering::Equal,
    });
    out
}

//! Mandelbrot-Zipf popularity: `P_r(f) = (f + q)^-γ / Σ_j (j + q)^-γ` over
//! ranks `f = 1..=M`, with inverse-CDF sampling and a KL-distance fit to
//! ranked request counts.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{golden_section, neumaier_sum};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PopularityError {
    #[error("invalid popularity parameters: {0}")]
    InvalidParameters(String),
    #[error("rank {rank} outside 1..={m_total}")]
    RankOutOfRange { rank: usize, m_total: usize },
    #[error("empirical mass on rank {rank} beyond the model library of {m_total} files")]
    SupportMismatch { rank: usize, m_total: usize },
    #[error("invalid empirical distribution: {0}")]
    InvalidEmpirical(String),
    #[error("fit is unidentifiable: {0}")]
    Unidentifiable(String),
}

pub type Result<T> = std::result::Result<T, PopularityError>;

/// MZipf popularity over a library of `m_total` ranked files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopularityModel {
    gamma: f64,
    q: f64,
    m_total: usize,
    normalizer: f64,
}

fn mzipf_normalizer(gamma: f64, q: f64, m_total: usize) -> f64 {
    // Smallest terms first.
    neumaier_sum((1..=m_total).rev().map(|j| (j as f64 + q).powf(-gamma)))
}

impl PopularityModel {
    pub fn new(gamma: f64, q: f64, m_total: usize) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(PopularityError::InvalidParameters(format!(
                "gamma must be positive and finite, got {gamma}"
            )));
        }
        if !(q.is_finite() && q >= 0.0) {
            return Err(PopularityError::InvalidParameters(format!(
                "q must be non-negative and finite, got {q}"
            )));
        }
        if m_total == 0 {
            return Err(PopularityError::InvalidParameters(
                "library size must be at least 1".into(),
            ));
        }
        Ok(Self {
            gamma,
            q,
            m_total,
            normalizer: mzipf_normalizer(gamma, q, m_total),
        })
    }

    /// Zipf factor γ.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Plateau factor q.
    pub fn q(&self) -> f64 {
        self.q
    }

    /// Library size M.
    pub fn m_total(&self) -> usize {
        self.m_total
    }

    /// `Σ_{j=1..M} (j + q)^-γ`.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn pmf(&self, rank: usize) -> Result<f64> {
        if rank == 0 || rank > self.m_total {
            return Err(PopularityError::RankOutOfRange {
                rank,
                m_total: self.m_total,
            });
        }
        Ok(self.pmf_unchecked(rank))
    }

    fn pmf_unchecked(&self, rank: usize) -> f64 {
        (rank as f64 + self.q).powf(-self.gamma) / self.normalizer
    }

    /// Natural log of the pmf, without forming the (possibly tiny) pmf itself.
    pub fn ln_pmf(&self, rank: usize) -> Result<f64> {
        self.pmf(rank)?;
        Ok(-self.gamma * (rank as f64 + self.q).ln() - self.normalizer.ln())
    }

    /// The whole pmf as a rank-ordered vector (index 0 is rank 1).
    pub fn pmf_vec(&self) -> Vec<f64> {
        (1..=self.m_total).map(|f| self.pmf_unchecked(f)).collect()
    }

    pub fn sampler(&self) -> RankSampler {
        RankSampler::from_weights(&self.pmf_vec()).expect("MZipf pmf is a valid weight vector")
    }
}

/// Inverse-CDF sampler over ranks `1..=len`.
///
/// A draw `u` maps to the rank `r` with `CDF(r-1) <= u < CDF(r)`, so ranks
/// with zero mass are never returned.
#[derive(Debug, Clone, PartialEq)]
pub struct RankSampler {
    cdf: Vec<f64>,
}

impl RankSampler {
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(PopularityError::InvalidParameters("empty weight vector".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(PopularityError::InvalidParameters(
                "weights must be finite and non-negative".into(),
            ));
        }
        let total = neumaier_sum(weights.iter().copied());
        if total <= 0.0 {
            return Err(PopularityError::InvalidParameters("weights sum to zero".into()));
        }
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        // Pin the right edge, and keep it flat across trailing zero-mass ranks.
        let last_positive = weights.iter().rposition(|w| *w > 0.0).unwrap_or(0);
        for c in &mut cdf[last_positive..] {
            *c = 1.0;
        }
        Ok(Self { cdf })
    }

    pub fn len(&self) -> usize {
        self.cdf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cdf.is_empty()
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    /// Rank (1-based) for a uniform draw in `[0, 1)`.
    pub fn sample(&self, draw: f64) -> usize {
        let idx = self.cdf.partition_point(|&c| c <= draw);
        idx.min(self.cdf.len() - 1) + 1
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sample(rng.random::<f64>())
    }
}

/// Ranked request counts; rank 1 is the most requested content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    counts: Vec<u64>,
    total: u64,
}

impl EmpiricalDistribution {
    /// Counts must already be sorted non-increasing.
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.windows(2).any(|w| w[0] < w[1]) {
            return Err(PopularityError::InvalidEmpirical(
                "counts must be sorted non-increasing".into(),
            ));
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(PopularityError::InvalidEmpirical("no requests".into()));
        }
        Ok(Self { counts, total })
    }

    /// Ranks arbitrary per-content counts by sorting them.
    pub fn from_unsorted(mut counts: Vec<u64>) -> Result<Self> {
        counts.sort_unstable_by(|a, b| b.cmp(a));
        Self::new(counts)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of ranks, including zero-count ones.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Ranks with at least one request.
    pub fn support_size(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn pmf(&self) -> Vec<f64> {
        let t = self.total as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }
}

/// `Σ p_data log(p_data / p_model)` over the empirical support, natural log.
///
/// Returns `f64::INFINITY` if the model gives zero mass to an observed rank.
pub fn kl_distance_to_pmf(empirical: &EmpiricalDistribution, model_pmf: &[f64]) -> Result<f64> {
    let t = empirical.total as f64;
    let mut terms = Vec::with_capacity(empirical.support_size());
    for (i, &c) in empirical.counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let p = c as f64 / t;
        let pm = *model_pmf.get(i).ok_or(PopularityError::SupportMismatch {
            rank: i + 1,
            m_total: model_pmf.len(),
        })?;
        if pm <= 0.0 {
            return Ok(f64::INFINITY);
        }
        terms.push(p * (p / pm).ln());
    }
    Ok(neumaier_sum(terms).max(0.0))
}

pub fn kl_distance(empirical: &EmpiricalDistribution, model: &PopularityModel) -> Result<f64> {
    if let Some(rank) = empirical
        .counts
        .iter()
        .rposition(|&c| c > 0)
        .map(|i| i + 1)
        .filter(|&r| r > model.m_total)
    {
        return Err(PopularityError::SupportMismatch {
            rank,
            m_total: model.m_total,
        });
    }
    kl_distance_to_pmf(empirical, &model.pmf_vec())
}

/// Search configuration for [`fit_mzipf`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub gamma_points: usize,
    pub q_points: usize,
    /// Upper end of the q grid as a fraction of M.
    pub q_max_fraction: f64,
    /// Per-parameter convergence tolerance of the refinement.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            gamma_min: 0.5,
            gamma_max: 3.0,
            gamma_points: 32,
            q_points: 32,
            q_max_fraction: 0.1,
            tolerance: 1e-4,
            max_sweeps: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub gamma: f64,
    pub q: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: PopularityModel,
    pub kl_distance: f64,
    /// Refinement sweeps run after the grid stage.
    pub sweeps: usize,
    pub converged: bool,
    pub search_trace: Vec<TracePoint>,
}

/// KL objective with the data entropy and per-rank log terms precomputed,
/// so each evaluation costs one pass of `powf` for the normalizer.
struct KlObjective {
    neg_entropy: f64,
    // (rank, p_data)
    support: Vec<(f64, f64)>,
    m_total: usize,
}

impl KlObjective {
    fn new(empirical: &EmpiricalDistribution) -> Self {
        let t = empirical.total as f64;
        let support: Vec<(f64, f64)> = empirical
            .counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| ((i + 1) as f64, c as f64 / t))
            .collect();
        let neg_entropy = neumaier_sum(support.iter().map(|&(_, p)| p * p.ln()));
        Self {
            neg_entropy,
            support,
            m_total: empirical.len(),
        }
    }

    // KL = Σ p ln p + γ Σ p ln(f + q) + ln Z(γ, q)
    fn eval(&self, gamma: f64, q: f64) -> f64 {
        let cross = neumaier_sum(self.support.iter().map(|&(f, p)| p * (f + q).ln()));
        let ln_z = mzipf_normalizer(gamma, q, self.m_total).ln();
        (self.neg_entropy + gamma * cross + ln_z).max(0.0)
    }
}

fn geomspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Fits `(γ, q)` with M fixed to the number of ranks in `empirical`.
///
/// A coarse grid (γ log-spaced, q = 0 plus log-spaced up to `M * q_max_fraction`)
/// picks the start; grid ties go to smaller q, then smaller γ. Coordinate
/// descent with golden-section line searches then refines both parameters.
pub fn fit_mzipf(empirical: &EmpiricalDistribution, config: &FitConfig) -> Result<FitResult> {
    if empirical.support_size() < 2 {
        return Err(PopularityError::Unidentifiable(
            "need at least two ranks with nonzero counts".into(),
        ));
    }
    if !(config.gamma_min > 0.0 && config.gamma_max > config.gamma_min) {
        return Err(PopularityError::InvalidParameters(
            "gamma range must satisfy 0 < gamma_min < gamma_max".into(),
        ));
    }
    let objective = KlObjective::new(empirical);
    let m_total = empirical.len();

    let gammas = geomspace(config.gamma_min, config.gamma_max, config.gamma_points.max(2));
    let q_max = (m_total as f64 * config.q_max_fraction).max(1e-2);
    let mut qs = vec![0.0];
    qs.extend(geomspace((q_max * 1e-3).max(1e-2), q_max, config.q_points.max(2) - 1));

    // q-major order so a strict-improvement scan breaks ties toward small q, then small γ.
    let grid: Vec<(f64, f64)> = qs
        .iter()
        .flat_map(|&q| gammas.iter().map(move |&g| (g, q)))
        .collect();
    let values: Vec<f64> = grid.par_iter().map(|&(g, q)| objective.eval(g, q)).collect();

    let mut trace: Vec<TracePoint> = grid
        .iter()
        .zip(&values)
        .map(|(&(gamma, q), &kl)| TracePoint { gamma, q, kl })
        .collect();
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    let (mut gamma, mut q) = grid[best];
    let mut current = values[best];

    // Initial line-search half-widths: one grid cell either side.
    let gi = gammas.iter().position(|&g| g == gamma).unwrap_or(0);
    let qi = qs.iter().position(|&v| v == q).unwrap_or(0);
    let span = |v: &[f64], i: usize| {
        let lo = if i > 0 { v[i - 1] } else { v[0] };
        let hi = if i + 1 < v.len() { v[i + 1] } else { v[v.len() - 1] };
        (hi - lo).max(1e-3)
    };
    let width_g0 = span(&gammas, gi);
    let width_q0 = span(&qs, qi);
    let (mut width_g, mut width_q) = (width_g0, width_q0);
    let line_tol = config.tolerance * 0.1;

    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < config.max_sweeps {
        sweeps += 1;
        let (g_new, _) = golden_section(
            |g| objective.eval(g, q),
            (gamma - width_g).max(1e-3),
            gamma + width_g,
            line_tol,
            |g, kl| trace.push(TracePoint { gamma: g, q, kl }),
        );
        let (q_new, kl_new) = golden_section(
            |v| objective.eval(g_new, v),
            (q - width_q).max(0.0),
            q + width_q,
            line_tol,
            |v, kl| {
                trace.push(TracePoint {
                    gamma: g_new,
                    q: v,
                    kl,
                })
            },
        );
        // Golden section never probes the bracket ends; keep q = 0 reachable.
        let (q_new, kl_new) = {
            let at_zero = objective.eval(g_new, 0.0);
            if q_new - width_q <= 0.0 && at_zero <= kl_new {
                trace.push(TracePoint {
                    gamma: g_new,
                    q: 0.0,
                    kl: at_zero,
                });
                (0.0, at_zero)
            } else {
                (q_new, kl_new)
            }
        };
        let (dg, dq) = ((g_new - gamma).abs(), (q_new - q).abs());
        if kl_new <= current {
            gamma = g_new;
            q = q_new;
            current = kl_new;
        }
        if dg < config.tolerance && dq < config.tolerance {
            converged = true;
            break;
        }
        width_g = (4.0 * dg).clamp(10.0 * config.tolerance, width_g0);
        width_q = (4.0 * dq).clamp(10.0 * config.tolerance, width_q0);
    }

    let model = PopularityModel::new(gamma, q, m_total)?;
    let kl = kl_distance(empirical, &model)?;
    Ok(FitResult {
        model,
        kl_distance: kl,
        sweeps,
        converged,
        search_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_file_library_has_unit_mass() {
        for (g, q) in [(0.7, 0.0), (1.3, 10.0), (2.5, 200.0)] {
            let m = PopularityModel::new(g, q, 1).unwrap();
            assert_eq!(m.pmf(1).unwrap(), 1.0);
        }
    }

    #[test]
    fn harmonic_weights() {
        let m = PopularityModel::new(1.0, 0.0, 3).unwrap();
        assert!((m.pmf(1).unwrap() - 6.0 / 11.0).abs() < 1e-15);
        assert!((m.pmf(2).unwrap() - 3.0 / 11.0).abs() < 1e-15);
        assert!((m.pmf(3).unwrap() - 2.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn region2_head_ratio() {
        let m = PopularityModel::new(1.16, 22.0, 7345).unwrap();
        let ratio = m.pmf(1).unwrap() / m.pmf(23).unwrap();
        let expected = (23.0_f64 / 45.0).powf(-1.16);
        assert!((ratio - expected).abs() < 1e-12 * expected);
        // Flat head: only ~2.2x from rank 1 to the breakpoint.
        assert!(ratio < 2.2);
    }

    #[test]
    fn rank_out_of_range() {
        let m = PopularityModel::new(1.0, 0.0, 3).unwrap();
        assert!(matches!(m.pmf(0), Err(PopularityError::RankOutOfRange { .. })));
        assert!(matches!(m.pmf(4), Err(PopularityError::RankOutOfRange { .. })));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(PopularityModel::new(0.0, 1.0, 10).is_err());
        assert!(PopularityModel::new(1.0, -0.5, 10).is_err());
        assert!(PopularityModel::new(1.0, 0.0, 0).is_err());
        assert!(PopularityModel::new(f64::NAN, 0.0, 10).is_err());
    }

    #[test]
    fn ln_pmf_consistent() {
        let m = PopularityModel::new(1.11, 18.0, 5405).unwrap();
        for f in [1, 18, 400, 5405] {
            let a = m.ln_pmf(f).unwrap();
            let b = m.pmf(f).unwrap().ln();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sampler_hand_cdf() {
        let s = PopularityModel::new(1.0, 0.0, 3).unwrap().sampler();
        assert_eq!(s.sample(0.0), 1);
        assert_eq!(s.sample(0.5), 1);
        assert_eq!(s.sample(0.6), 2);
        assert_eq!(s.sample(0.81), 2);
        assert_eq!(s.sample(0.82), 3);
        assert_eq!(s.sample(0.999_999_999), 3);
        // CDF(1) = 6/11 belongs to rank 2.
        assert_eq!(s.sample(s.cdf()[0]), 2);
    }

    #[test]
    fn sampler_skips_zero_mass() {
        let s = RankSampler::from_weights(&[0.5, 0.0, 0.5, 0.0]).unwrap();
        for i in 0..1000 {
            let r = s.sample(i as f64 / 1000.0);
            assert!(r == 1 || r == 3, "drew rank {r}");
        }
        assert!(RankSampler::from_weights(&[0.0, 0.0]).is_err());
        assert!(RankSampler::from_weights(&[]).is_err());
    }

    #[test]
    fn kl_identity_and_closed_form() {
        let m = PopularityModel::new(1.0, 0.0, 3).unwrap();
        // Counts proportional to (6, 3, 2) reproduce the pmf exactly up to rounding.
        let e = EmpiricalDistribution::new(vec![6, 3, 2]).unwrap();
        assert!(kl_distance(&e, &m).unwrap() < 1e-15);

        let e = EmpiricalDistribution::new(vec![1, 0]).unwrap();
        let d = kl_distance_to_pmf(&e, &[0.5, 0.5]).unwrap();
        assert!((d - 2.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn kl_zero_model_mass_is_infinite() {
        let e = EmpiricalDistribution::new(vec![1, 1]).unwrap();
        assert_eq!(kl_distance_to_pmf(&e, &[1.0, 0.0]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn kl_support_mismatch() {
        let e = EmpiricalDistribution::new(vec![3, 2, 1]).unwrap();
        let m = PopularityModel::new(1.0, 0.0, 2).unwrap();
        assert!(matches!(
            kl_distance(&e, &m),
            Err(PopularityError::SupportMismatch { rank: 3, .. })
        ));
        // Trailing zeros beyond the model are fine.
        let e = EmpiricalDistribution::new(vec![3, 2, 0]).unwrap();
        assert!(kl_distance(&e, &m).is_ok());
    }

    #[test]
    fn empirical_validation() {
        assert!(EmpiricalDistribution::new(vec![1, 2]).is_err());
        assert!(EmpiricalDistribution::new(vec![0, 0]).is_err());
        let e = EmpiricalDistribution::from_unsorted(vec![1, 5, 3]).unwrap();
        assert_eq!(e.counts(), &[5, 3, 1]);
        assert_eq!(e.total(), 9);
    }

    #[test]
    fn fast_objective_matches_direct_kl() {
        let e = EmpiricalDistribution::new(vec![50, 30, 30, 10, 5, 1, 0]).unwrap();
        let obj = KlObjective::new(&e);
        for (g, q) in [(0.8, 0.0), (1.2, 3.5), (2.0, 0.3)] {
            let m = PopularityModel::new(g, q, e.len()).unwrap();
            let direct = kl_distance(&e, &m).unwrap();
            assert!((obj.eval(g, q) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn fit_unidentifiable() {
        let e = EmpiricalDistribution::new(vec![10, 0, 0]).unwrap();
        assert!(matches!(
            fit_mzipf(&e, &FitConfig::default()),
            Err(PopularityError::Unidentifiable(_))
        ));
    }

    fn expected_counts(model: &PopularityModel, scale: f64) -> EmpiricalDistribution {
        let counts = model
            .pmf_vec()
            .iter()
            .map(|p| (p * scale).round() as u64)
            .collect();
        EmpiricalDistribution::new(counts).unwrap()
    }

    #[test]
    fn fit_zipf_keeps_q_small() {
        let truth = PopularityModel::new(1.5, 0.0, 1000).unwrap();
        let e = expected_counts(&truth, 1e12);
        let fit = fit_mzipf(&e, &FitConfig::default()).unwrap();
        assert!(fit.model.q() <= 1.0, "q = {}", fit.model.q());
        assert!((fit.model.gamma() - 1.5).abs() < 0.02);
        assert!(fit.kl_distance <= 1e-6);
    }

    #[test]
    fn fit_is_deterministic() {
        let truth = PopularityModel::new(1.2, 5.0, 300).unwrap();
        let e = expected_counts(&truth, 1e9);
        let a = fit_mzipf(&e, &FitConfig::default()).unwrap();
        let b = fit_mzipf(&e, &FitConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn pmf_normalizes_and_decreases(gamma in 0.5f64..2.5, q in 0.0f64..200.0, m in 10usize..100_000) {
            let model = PopularityModel::new(gamma, q, m).unwrap();
            let pmf = model.pmf_vec();
            let total = neumaier_sum(pmf.iter().copied());
            prop_assert!((total - 1.0).abs() < 1e-12, "sum = {}", total);
            prop_assert!(pmf.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn plateau_head(gamma in 0.5f64..2.5, q in 1.0f64..200.0) {
            let m = 1000;
            let model = PopularityModel::new(gamma, q, m).unwrap();
            let br = q.ceil() as usize;
            let ratio = model.pmf(1).unwrap() / model.pmf(br).unwrap();
            prop_assert!(ratio <= 2f64.powf(gamma) * (1.0 + 1e-12));
        }

        #[test]
        fn kl_non_negative(counts in proptest::collection::vec(0u64..1000, 2..50), gamma in 0.5f64..2.5, q in 0.0f64..50.0) {
            prop_assume!(counts.iter().any(|&c| c > 0));
            let e = EmpiricalDistribution::from_unsorted(counts).unwrap();
            let model = PopularityModel::new(gamma, q, e.len()).unwrap();
            prop_assert!(kl_distance(&e, &model).unwrap() >= 0.0);
        }
    }
}

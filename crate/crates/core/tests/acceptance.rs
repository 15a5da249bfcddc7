//! Acceptance criteria, one test each. Every test prints a single
//! `PASS`/`FAIL` line (written straight to stdout so it survives output
//! capture) before asserting.

use std::io::Write;

use d2dlab::analysis::{
    hit_prob_closed_form, hit_prob_lower_bound, regime_of, tradeoff_regime1, NetworkConfig, Regime,
    DEFAULT_KAPPA,
};
use d2dlab::policy::{
    kkt_mstar, optimal_policy, optimal_policy_from_pmf, solve_c1, theoretical_mstar, ScalingConstants,
};
use d2dlab::popularity::{
    fit_mzipf, EmpiricalDistribution, FitConfig, PopularityModel,
};
use d2dlab::simulator::{build_grid, GridNetwork, Simulation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(criterion: u32, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "{tag} criterion {criterion}: {detail}").unwrap();
    out.flush().unwrap();
    assert!(pass, "criterion {criterion}: {detail}");
}

/// Probability that some *other* device of the cluster holds the request,
/// exact for independent with-replacement cache draws.
fn d2d_hit_exact(pmf: &[f64], caching: &[f64], s: u64, g_c: u64) -> f64 {
    let draws = (s * (g_c - 1)) as i32;
    pmf.iter()
        .zip(caching)
        .map(|(r, c)| r * (1.0 - (1.0 - c).powi(draws)))
        .sum()
}

/// All points of the probability simplex in `dim` coordinates at resolution `1/steps`.
fn simplex_grid(dim: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(dim: usize, left: usize, steps: usize, cur: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
        if dim == 1 {
            cur.push(left as f64 / steps as f64);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for k in 0..=left {
            cur.push(k as f64 / steps as f64);
            rec(dim - 1, left - k, steps, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, steps, steps, &mut Vec::new(), &mut out);
    out
}

#[test]
fn criterion_1_mstar_theory_matches_kkt() {
    let m = PopularityModel::new(1.16, 0.0, 10_000).unwrap();
    let sweep = [10u64, 20, 50, 100, 200, 500, 1000, 2000, 3000, 5000];
    let mut worst = 0.0_f64;
    let mut rows = Vec::new();
    for &g_c in &sweep {
        let theory = theoretical_mstar(&m, 1, g_c).unwrap();
        let kkt = kkt_mstar(&m, 1, g_c).unwrap() as f64;
        let dev = (theory - kkt).abs() / kkt;
        worst = worst.max(dev);
        rows.push(format!("{g_c}:{theory:.1}/{kkt}"));
    }
    verdict(
        1,
        worst <= 0.05,
        &format!(
            "gamma=1.16 q=0 M=10000 S=1, max relative deviation {worst:.4} (limit 0.05); g_c:theory/kkt {}",
            rows.join(" ")
        ),
    );
}

#[test]
fn criterion_2_water_filling_is_optimal() {
    let hand = optimal_policy_from_pmf(&[6.0 / 11.0, 3.0 / 11.0, 2.0 / 11.0], 1, 3).unwrap();
    let p = hand.p_c();
    let hand_ok = (p[0] - 2.0 / 3.0).abs() < 1e-12
        && (p[1] - 1.0 / 3.0).abs() < 1e-12
        && p[2] == 0.0
        && (hand.nu() - 2.0 / 11.0).abs() < 1e-12
        && hand.m_star() == 2;

    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let shapes = [(1u64, 3u64), (2, 2), (1, 4), (2, 3), (3, 2)];
    let trials = 100_000;
    let mut failures = Vec::new();
    let mut worst_gap = f64::NEG_INFINITY;
    let instances = 12;
    for i in 0..instances {
        let m_total = 2 + i % 3;
        let (s, g_c) = shapes[i % shapes.len()];
        let mut pmf: Vec<f64> = (0..m_total).map(|_| rng.random_range(0.05..1.0)).collect();
        pmf.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let total: f64 = pmf.iter().sum();
        pmf.iter_mut().for_each(|x| *x /= total);

        let grid_best = simplex_grid(m_total, 20)
            .iter()
            .map(|c| d2d_hit_exact(&pmf, c, s, g_c))
            .fold(f64::NEG_INFINITY, f64::max);
        let policy = optimal_policy_from_pmf(&pmf, s, g_c).unwrap();
        let exact = d2d_hit_exact(&pmf, policy.p_c(), s, g_c);

        let net = GridNetwork::single_cluster(g_c).unwrap();
        let sim = Simulation::from_pmfs(&net, &pmf, policy.p_c(), s, 1.0).unwrap();
        let mc = sim.run_monte_carlo(trials, 1000 * i as u64).unwrap();
        let est = mc.d2d_hit_prob;
        worst_gap = worst_gap.max((grid_best - est.mean) / est.stderr);
        if est.mean < grid_best - 2.0 * est.stderr || exact < grid_best - 1e-12 {
            failures.push(format!(
                "M={m_total} S={s} g_c={g_c}: mc {:.5}±{:.5}, exact {exact:.6}, grid {grid_best:.6}",
                est.mean, est.stderr
            ));
        }
    }
    let pass = hand_ok && failures.is_empty();
    verdict(
        2,
        pass,
        &format!(
            "hand instance {}; {instances} random instances at {trials} trials, worst (grid - mc)/se = {worst_gap:.2}{}",
            if hand_ok { "exact" } else { "WRONG" },
            if failures.is_empty() { String::new() } else { format!("; failing: {}", failures.join("; ")) }
        ),
    );
}

#[test]
fn criterion_3_closed_form_matches_simulation() {
    let m = PopularityModel::new(1.16, 100.0, 10_000).unwrap();
    let cfg = NetworkConfig::new(10_000, 4, 1.0, 4, 400).unwrap();
    let analytic = hit_prob_closed_form(&m, &cfg).unwrap();
    let net = build_grid(10_000, 400).unwrap();
    let policy = optimal_policy(&m, 4, 400).unwrap();
    let mc = Simulation::new(&net, policy.p_c(), &m, &cfg)
        .unwrap()
        .run_monte_carlo(2000, 3)
        .unwrap();
    let diff = (analytic.value - mc.hit_prob.mean).abs();
    let tol = (3.0 * mc.hit_prob.stderr).max(0.02);
    verdict(
        3,
        diff <= tol,
        &format!(
            "analytic {:.5} vs simulated {:.5}±{:.5} (2000 trials), |diff| {diff:.5} <= {tol:.5}",
            analytic.value, mc.hit_prob.mean, mc.hit_prob.stderr
        ),
    );
}

#[test]
fn criterion_4_lower_bound_holds_in_regime_2() {
    // (gamma, q, M, S, target rho / gamma)
    let sets = [
        (1.16, 15.0, 5000usize, 8u64, 2.0),
        (1.16, 22.0, 7345, 8, 1.2),
        (1.16, 10.0, 2000, 4, 3.5),
        (1.11, 18.0, 5405, 8, 2.0),
        (1.11, 12.0, 3000, 8, 1.5),
        (1.11, 18.0, 5405, 16, 3.0),
    ];
    let n_users = 10_000;
    let trials = 2000;
    let mut lines = Vec::new();
    let mut pass = true;
    for (i, &(gamma, q, m_total, s, ratio)) in sets.iter().enumerate() {
        let m = PopularityModel::new(gamma, q, m_total).unwrap();
        // Smallest square cluster whose rho reaches the target.
        let mut side = 2u64;
        let g_c = loop {
            let g = side * side;
            let k = ScalingConstants::new(&m, s, g).unwrap();
            if k.rho >= ratio * gamma {
                break g;
            }
            side += 1;
        };
        let cfg = NetworkConfig::new(n_users, s, 1.0, 4, g_c).unwrap();
        let k = ScalingConstants::new(&m, s, g_c).unwrap();
        assert_eq!(regime_of(&m, &cfg).unwrap(), Regime::Regime2);
        assert!(k.rho >= gamma && k.rho <= 4.0 * gamma);
        let bound = hit_prob_lower_bound(&m, &cfg).unwrap();
        let net = build_grid(n_users, g_c).unwrap();
        let policy = optimal_policy(&m, s, g_c).unwrap();
        let mc = Simulation::new(&net, policy.p_c(), &m, &cfg)
            .unwrap()
            .run_monte_carlo(trials, 500 + i as u64)
            .unwrap();
        let ok = mc.hit_prob.mean >= bound.value - 2.0 * mc.hit_prob.stderr;
        pass &= ok;
        // Exact finite-size hit probability (own cache included) for reference.
        let exact = d2d_hit_exact(&m.pmf_vec(), policy.p_c(), s, g_c + 1);
        lines.push(format!(
            "[{} gamma={gamma} q={q} M={m_total} S={s} g_c={g_c} rho/gamma={:.2}: bound {:.5}, mc {:.5}±{:.5}, exact {:.5}]",
            if ok { "ok" } else { "violated" },
            k.rho / gamma,
            bound.value,
            mc.hit_prob.mean,
            mc.hit_prob.stderr,
            exact
        ));
    }
    verdict(4, pass, &lines.join(" "));
}

#[test]
fn criterion_5_regime_1_throughput_law() {
    let m = PopularityModel::new(1.16, 22.0, 7345).unwrap();
    let mut ok = true;
    let mut notes = Vec::new();
    for (c, k_reuse) in [(1.0, 4u64), (3.7, 3)] {
        for g_c in [16u64, 25, 64, 100, 400] {
            let cfg = NetworkConfig::new(1600, 1, c, k_reuse, g_c).unwrap();
            let point = tradeoff_regime1(&m, &cfg, DEFAULT_KAPPA).unwrap();
            ok &= point.throughput == (c / k_reuse as f64) / g_c as f64;
            let doubled = tradeoff_regime1(&m, &cfg.with_g_c(2 * g_c), DEFAULT_KAPPA).unwrap();
            ok &= doubled.throughput == point.throughput / 2.0;
        }
    }
    notes.push(format!("analytic T = (C/K)/g_c and T(2 g_c) = T(g_c)/2 bitwise: {ok}"));

    // Simulated airtime: each good cluster hands out exactly C/K, split over
    // its L linked users, so mean per-user throughput * g_c / (C/K) must equal
    // the good-cluster fraction.
    let mut worst = 0.0_f64;
    for g_c in [16u64, 100] {
        let cfg = NetworkConfig::new(1600, 1, 1.0, 4, g_c).unwrap();
        let net = build_grid(1600, g_c).unwrap();
        let policy = optimal_policy(&m, 1, g_c).unwrap();
        let sim = Simulation::new(&net, policy.p_c(), &m, &cfg).unwrap();
        for seed in 0..200 {
            let t = sim.run_trial(seed);
            let lhs = t.mean_throughput() * g_c as f64 / cfg.cluster_rate();
            worst = worst.max((lhs - t.good_cluster_fraction()).abs());
            for (members, &share) in net.clusters().zip(&t.cluster_throughput) {
                let linked = members.iter().filter(|&&u| t.per_user_throughput[u] > 0.0).count();
                let expect = if linked > 0 { cfg.cluster_rate() } else { 0.0 };
                worst = worst.max((share - expect).abs());
            }
        }
        let mc = sim.run_monte_carlo(500, 1).unwrap();
        let lhs = mc.per_user_throughput.mean * g_c as f64 / cfg.cluster_rate();
        worst = worst.max((lhs - mc.good_cluster_fraction.mean).abs());
    }
    ok &= worst <= 1e-12;
    notes.push(format!("simulated airtime conservation, max deviation {worst:.2e}"));
    verdict(5, ok, &notes.join("; "));
}

#[test]
fn criterion_6_c1_fixed_point() {
    let c2s = [0.0, 1e-6, 0.1, 1.0, 10.0, 100.0, 1e4];
    let mut worst_residual = 0.0_f64;
    let mut ratios = Vec::new();
    let mut ratio_ok = true;
    for &c2 in &c2s {
        let c1 = solve_c1(c2).unwrap();
        let residual = if c2 == 0.0 {
            c1 - 1.0
        } else {
            c1 - 1.0 - c2 * (c1 / c2).ln_1p()
        };
        worst_residual = worst_residual.max(residual.abs());
        if c2 >= 10.0 {
            let r = c1 / c2;
            ratio_ok &= (0.5..=5.0).contains(&r);
            ratios.push(format!("c2={c2}: c1={c1:.4}, c1/c2={r:.4}"));
        }
    }
    let zero_exact = solve_c1(0.0).unwrap() == 1.0;
    let residual_ok = worst_residual <= 1e-10;
    verdict(
        6,
        residual_ok && zero_exact && ratio_ok,
        &format!(
            "max residual {worst_residual:.2e} ({}), c1(0)=1 {}, c1/c2 in [0.5,5] for c2>=10: {} ({})",
            if residual_ok { "ok" } else { "too large" },
            if zero_exact { "exact" } else { "WRONG" },
            if ratio_ok { "ok" } else { "violated" },
            ratios.join("; ")
        ),
    );
}

#[test]
fn criterion_7_fit_recovers_region_2_model() {
    let truth = PopularityModel::new(1.16, 22.0, 7345).unwrap();
    let sampler = truth.sampler();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut counts = vec![0u64; 7345];
    for _ in 0..1_000_000 {
        counts[sampler.sample_with(&mut rng) - 1] += 1;
    }
    let emp = EmpiricalDistribution::from_unsorted(counts).unwrap();
    let fit = fit_mzipf(&emp, &FitConfig::default()).unwrap();
    let (g, q) = (fit.model.gamma(), fit.model.q());
    // Recovery is judged model to model over the full library: D(truth || fit).
    let fitted_full = PopularityModel::new(g, q, 7345).unwrap();
    let truth_pmf = truth.pmf_vec();
    let kl_models: f64 = truth_pmf
        .iter()
        .zip(fitted_full.pmf_vec())
        .map(|(p, f)| p * (p / f).ln())
        .sum();
    let gamma_ok = (g - 1.16).abs() <= 0.05;
    let q_ok = (q - 22.0).abs() <= 0.2 * 22.0;
    let kl_ok = kl_models <= 1e-3;
    verdict(
        7,
        gamma_ok && q_ok && kl_ok,
        &format!(
            "gamma {g:.4} (|err| <= 0.05: {gamma_ok}), q {q:.3} (within 20%: {q_ok}), \
             KL(truth||fit) {kl_models:.2e} (<= 1e-3: {kl_ok}); empirical-to-fit KL {:.2e}, support {}",
            fit.kl_distance,
            emp.len()
        ),
    );
}

#[test]
fn criterion_8_brute_force_single_cluster() {
    let pmf = [6.0 / 11.0, 3.0 / 11.0, 2.0 / 11.0];
    let policy = optimal_policy_from_pmf(&pmf, 1, 4).unwrap();
    let caching = policy.p_c();
    // Enumerate all 3^4 cache assignments and 3^4 request vectors.
    let (mut hit, mut outage) = (0.0, 0.0);
    for ci in 0..81usize {
        let caches: Vec<usize> = (0..4).map(|k| ci / 3usize.pow(k) % 3).collect();
        let pc: f64 = caches.iter().map(|&f| caching[f]).product();
        for ri in 0..81usize {
            let reqs: Vec<usize> = (0..4).map(|k| ri / 3usize.pow(k) % 3).collect();
            let pr: f64 = reqs.iter().map(|&f| pmf[f]).product();
            let found = reqs.iter().filter(|r| caches.contains(r)).count() as f64 / 4.0;
            hit += pc * pr * found;
            outage += pc * pr * (1.0 - found);
        }
    }
    let net = build_grid(4, 4).unwrap();
    let mc = Simulation::from_pmfs(&net, &pmf, caching, 1, 1.0)
        .unwrap()
        .run_monte_carlo(100_000, 8)
        .unwrap();
    let hit_ok = (mc.hit_prob.mean - hit).abs() <= 3.0 * mc.hit_prob.stderr;
    let out_ok = (mc.outage.mean - outage).abs() <= 3.0 * mc.outage.stderr;
    verdict(
        8,
        hit_ok && out_ok,
        &format!(
            "enumerated hit {hit:.5} outage {outage:.5}; simulated hit {:.5}±{:.5} outage {:.5}±{:.5}",
            mc.hit_prob.mean, mc.hit_prob.stderr, mc.outage.mean, mc.outage.stderr
        ),
    );
}

#[test]
fn criterion_9_outage_complements_hits_per_trial() {
    let configs = [
        (1.16, 22.0, 7345usize, 1u64, 100u64, 10_000u64),
        (1.11, 18.0, 5405, 4, 400, 10_000),
        (1.3, 0.0, 50, 2, 4, 100),
    ];
    let mut checked = 0;
    let mut ok = true;
    for (gamma, q, m_total, s, g_c, n) in configs {
        let m = PopularityModel::new(gamma, q, m_total).unwrap();
        let cfg = NetworkConfig::new(n, s, 1.0, 4, g_c).unwrap();
        let net = build_grid(n, g_c).unwrap();
        let policy = optimal_policy(&m, s, g_c).unwrap();
        let sim = Simulation::new(&net, policy.p_c(), &m, &cfg).unwrap();
        for seed in 0..100 {
            let t = sim.run_trial(seed);
            ok &= t.outages + t.hits == t.users;
            ok &= (t.outage_fraction() + t.hit_fraction() - 1.0).abs() <= f64::EPSILON;
            checked += 1;
        }
    }
    verdict(
        9,
        ok,
        &format!("{checked} trials: outage count + in-cluster hits = users in every trial"),
    );
}

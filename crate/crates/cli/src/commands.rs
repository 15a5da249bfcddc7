use std::fs::File;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use d2dlab::analysis::{regime_of, tradeoff_point, NetworkConfig};
use d2dlab::ingest::{dedup_unique, filter_region, parse_log, to_empirical, IngestReport};
use d2dlab::policy::{kkt_mstar, optimal_policy, theoretical_mstar};
use d2dlab::popularity::{fit_mzipf, FitConfig, PopularityError, PopularityModel};
use d2dlab::simulator::{GridNetwork, PolicySource, SimOutcome, Simulation};

use crate::args::{FitArgs, ModelArgs, Mode, NetworkArgs, PolicyArgs, SimulateArgs, TradeoffArgs, ValidateArgs};
use crate::error::{CliError, Result};
use crate::output::{write_csv, write_json, ManifestBuilder, Precision};

fn model(m: &ModelArgs) -> Result<PopularityModel> {
    Ok(PopularityModel::new(m.gamma, m.q, m.m_total)?)
}

fn network_config(n: &NetworkArgs, g_c: u64) -> Result<NetworkConfig> {
    Ok(NetworkConfig::new(n.n_users, n.s_cache, n.rate_c, n.reuse_k, g_c)?)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
    let mut name = stem;
    name.push(suffix);
    path.with_file_name(name)
}

pub fn fit(args: &FitArgs, p: Precision) -> Result<()> {
    let manifest = ManifestBuilder::new("fit", args, None)?;
    if !(args.tolerance.is_finite() && args.tolerance > 0.0) {
        return Err(CliError::Param("tolerance must be positive".into()));
    }
    let file = File::open(&args.log).map_err(|e| CliError::io(&args.log, e))?;
    let parsed = parse_log(file).map_err(|e| CliError::io(&args.log, e))?;
    let records = match args.region {
        Some(r) => filter_region(parsed.records, r),
        None => parsed.records,
    };
    let unique = dedup_unique(&records);
    let report = IngestReport::new(parsed.report, &unique);
    let ranked = to_empirical(&unique).map_err(|e| CliError::io(&args.log, e))?;
    let config = FitConfig {
        tolerance: args.tolerance,
        ..FitConfig::default()
    };
    let fitted = fit_mzipf(&ranked.distribution, &config).map_err(|e| match e {
        PopularityError::Unidentifiable(_) | PopularityError::InvalidEmpirical(_) => {
            CliError::io(&args.log, e)
        }
        other => other.into(),
    })?;

    let m = &fitted.model;
    let result = json!({
        "gamma": p.json(m.gamma()),
        "q": p.json(m.q()),
        "m_total": m.m_total(),
        "kl_distance": p.json(fitted.kl_distance),
        "unique_accesses": report.unique_accesses,
        "users": report.distinct_users,
        "rows": report.rows,
        "malformed_rows": report.malformed,
        "region": args.region,
        "converged": fitted.converged,
        "sweeps": fitted.sweeps,
    });
    write_json(&args.out, &result)?;

    let ranks_path = args.ranks_out.clone().unwrap_or_else(|| with_suffix(&args.out, ".ranks.csv"));
    let emp_pmf = ranked.distribution.pmf();
    let rows: Vec<Vec<String>> = ranked
        .content_ids
        .iter()
        .zip(ranked.distribution.counts())
        .enumerate()
        .map(|(i, (id, &count))| {
            vec![
                (i + 1).to_string(),
                id.clone(),
                count.to_string(),
                p.cell(emp_pmf[i]),
                p.cell(m.pmf(i + 1).unwrap_or(f64::NAN)),
            ]
        })
        .collect();
    write_csv(&ranks_path, &["rank", "content_id", "count", "empirical_pmf", "model_pmf"], &rows)?;
    manifest.finish(&[&args.out, &ranks_path])
}

/// One m* table row: g_c, closed-form m*, KKT m*, water-filling m*, relative deviation.
fn mstar_row(pop: &PopularityModel, s: u64, g_c: u64) -> Result<(f64, usize, usize, f64)> {
    let theory = theoretical_mstar(pop, s, g_c)?;
    let kkt = kkt_mstar(pop, s, g_c)?;
    let wf = optimal_policy(pop, s, g_c)?.m_star();
    Ok((theory, kkt, wf, (theory - kkt as f64).abs() / kkt as f64))
}

pub fn policy(args: &PolicyArgs, p: Precision) -> Result<()> {
    let manifest = ManifestBuilder::new("policy", args, None)?;
    let pop = model(&args.model)?;
    match (&args.sweep, args.g_c) {
        (Some(sweep), _) => {
            let mut rows = Vec::new();
            for &g_c in sweep {
                let (theory, kkt, wf, dev) = mstar_row(&pop, args.s_cache, g_c)?;
                rows.push(vec![
                    g_c.to_string(),
                    p.cell(theory),
                    kkt.to_string(),
                    wf.to_string(),
                    p.cell(dev),
                ]);
            }
            write_csv(
                &args.out,
                &["g_c", "theoretical_mstar", "kkt_mstar", "water_filling_mstar", "relative_deviation"],
                &rows,
            )?;
        }
        (None, Some(g_c)) => {
            let policy = optimal_policy(&pop, args.s_cache, g_c)?;
            let theory = theoretical_mstar(&pop, args.s_cache, g_c)?;
            let kkt = kkt_mstar(&pop, args.s_cache, g_c)?;
            let value = json!({
                "g_c": g_c,
                "s_cache": args.s_cache,
                "nu": p.json(policy.nu()),
                "m_star": policy.m_star(),
                "theoretical_mstar": p.json(theory),
                "kkt_mstar": kkt,
                "p_c": policy.p_c().iter().map(|&x| p.json(x)).collect::<Vec<_>>(),
            });
            write_json(&args.out, &value)?;
        }
        (None, None) => return Err(CliError::Param("either --g-c or --sweep is required".into())),
    }
    manifest.finish(&[&args.out])
}

pub fn validate_mstar(args: &ValidateArgs, p: Precision) -> Result<()> {
    let manifest = ManifestBuilder::new("validate-mstar", args, None)?;
    let pop = PopularityModel::new(args.gamma, args.q, args.m_total)?;
    let mut rows = Vec::new();
    let mut worst = 0.0_f64;
    for &g_c in &args.g_c {
        let (theory, kkt, wf, dev) = mstar_row(&pop, args.s_cache, g_c)?;
        worst = worst.max(dev);
        rows.push(vec![
            g_c.to_string(),
            p.cell(theory),
            kkt.to_string(),
            wf.to_string(),
            p.cell(dev),
            (dev <= args.tolerance).to_string(),
        ]);
    }
    write_csv(
        &args.out,
        &[
            "g_c",
            "theoretical_mstar",
            "kkt_mstar",
            "water_filling_mstar",
            "relative_deviation",
            "within_tolerance",
        ],
        &rows,
    )?;
    manifest.finish(&[&args.out])?;
    let summary = format!(
        "max relative deviation {worst:.4} over {} cluster sizes (tolerance {})",
        args.g_c.len(),
        args.tolerance
    );
    if worst <= args.tolerance {
        println!("ok: {summary}");
        Ok(())
    } else {
        Err(CliError::Validation(format!("m* validation failed: {summary}")))
    }
}

fn simulate_point(
    pop: &PopularityModel,
    cfg: &NetworkConfig,
    source: PolicySource,
    draw: d2dlab::simulator::CacheDraw,
    trials: u64,
    seed: u64,
) -> Result<(GridNetwork, SimOutcome)> {
    let network = GridNetwork::build(cfg.n_users, cfg.g_c)?;
    let caching = source.caching_pmf(pop, cfg.s_cache, cfg.g_c)?;
    let outcome = Simulation::new(&network, &caching, pop, cfg)?
        .with_cache_draw(draw)
        .run_monte_carlo(trials, seed)?;
    Ok((network, outcome))
}

pub fn tradeoff(args: &TradeoffArgs, p: Precision) -> Result<()> {
    let manifest = ManifestBuilder::new(
        "tradeoff",
        args,
        (args.mode != Mode::Analytic).then_some(args.seed),
    )?;
    let pop = model(&args.model)?;
    if !(args.kappa.is_finite() && args.kappa > 0.0) {
        return Err(CliError::Param("kappa must be positive".into()));
    }
    if args.mode != Mode::Analytic && args.trials == 0 {
        return Err(CliError::Param("trials must be at least 1".into()));
    }
    let analytic = matches!(args.mode, Mode::Analytic | Mode::Both);
    let simulate = matches!(args.mode, Mode::Simulate | Mode::Both);

    let mut rows = Vec::with_capacity(args.g_c.len());
    for &g_c in &args.g_c {
        let mut errors = Vec::new();
        let mut regime = String::new();
        let (mut t_a, mut po_a, mut clamped) = (None, None, String::new());
        let mut sim: Option<SimOutcome> = None;
        match network_config(&args.network, g_c) {
            Err(e) => errors.push(e.to_string()),
            Ok(cfg) => {
                if let Ok(r) = regime_of(&pop, &cfg) {
                    regime = r.to_string();
                }
                if analytic {
                    match tradeoff_point(&pop, &cfg, args.kappa) {
                        Ok(pt) => {
                            t_a = Some(pt.throughput);
                            po_a = Some(pt.outage);
                            clamped = pt.clamped.to_string();
                        }
                        Err(e) => errors.push(format!("analytic: {e}")),
                    }
                }
                if simulate {
                    match simulate_point(
                        &pop,
                        &cfg,
                        args.policy.into(),
                        Default::default(),
                        args.trials,
                        args.seed,
                    ) {
                        Ok((_, o)) => sim = Some(o),
                        Err(e) => errors.push(format!("simulate: {e}")),
                    }
                }
            }
        }
        let s = sim.as_ref();
        rows.push(vec![
            g_c.to_string(),
            regime,
            p.opt_cell(t_a),
            p.opt_cell(po_a),
            p.opt_cell(s.map(|o| o.per_user_throughput.mean)),
            p.opt_cell(s.map(|o| o.outage.mean)),
            p.opt_cell(s.map(|o| o.hit_prob.mean)),
            p.opt_cell(s.map(|o| o.d2d_hit_prob.mean)),
            p.opt_cell(s.map(|o| o.self_hit_rate.mean)),
            p.opt_cell(s.map(|o| o.per_user_throughput.stderr)),
            p.opt_cell(s.map(|o| o.outage.stderr)),
            p.opt_cell(s.map(|o| o.hit_prob.stderr)),
            clamped,
            errors.join("; "),
        ]);
    }
    write_csv(
        &args.out,
        &[
            "g_c",
            "regime",
            "T_analytic",
            "Po_analytic",
            "T_sim",
            "Po_sim",
            "hit_sim",
            "d2d_hit_sim",
            "self_hit_sim",
            "T_sim_stderr",
            "Po_sim_stderr",
            "hit_sim_stderr",
            "clamped_flag",
            "error",
        ],
        &rows,
    )?;
    manifest.finish(&[&args.out])
}

fn estimate_json(p: Precision, e: &d2dlab::simulator::Estimate) -> Value {
    json!({ "mean": p.json(e.mean), "stderr": p.json(e.stderr) })
}

pub fn simulate(args: &SimulateArgs, p: Precision) -> Result<()> {
    let manifest = ManifestBuilder::new("simulate", args, Some(args.seed))?;
    let pop = model(&args.model)?;
    let cfg = network_config(&args.network, args.g_c)?;
    if args.trials == 0 {
        return Err(CliError::Param("trials must be at least 1".into()));
    }
    let (network, o) = simulate_point(
        &pop,
        &cfg,
        args.policy.into(),
        args.cache_draw.into(),
        args.trials,
        args.seed,
    )?;
    let value = json!({
        "g_c": args.g_c,
        "users_requested": network.requested_users(),
        "users_simulated": network.n_users(),
        "padding": network.padding(),
        "clusters": network.n_clusters(),
        "trials": o.trials,
        "hit_prob": estimate_json(p, &o.hit_prob),
        "d2d_hit_prob": estimate_json(p, &o.d2d_hit_prob),
        "self_hit_rate": estimate_json(p, &o.self_hit_rate),
        "outage": estimate_json(p, &o.outage),
        "per_user_throughput": estimate_json(p, &o.per_user_throughput),
        "good_cluster_fraction": estimate_json(p, &o.good_cluster_fraction),
        "min_avg_throughput": p.json(o.min_avg_throughput),
        "max_avg_throughput": p.json(o.max_avg_throughput),
    });
    write_json(&args.out, &value)?;
    let mut outputs: Vec<&Path> = vec![&args.out];
    if let Some(path) = &args.per_user_out {
        let rows: Vec<Vec<String>> = o
            .per_user_average
            .iter()
            .zip(&o.per_user_stderr)
            .enumerate()
            .map(|(u, (&avg, &se))| vec![u.to_string(), p.cell(avg), p.cell(se)])
            .collect();
        write_csv(path, &["user", "avg_throughput", "stderr"], &rows)?;
        outputs.push(path);
    }
    manifest.finish(&outputs)
}

//! Experiment runners: each takes a validated effective configuration and
//! returns finished artifacts. Replica loops seed per-replica child streams
//! from the root seed, so outputs depend only on (config, seed).

use anyhow::{anyhow, Result};
use cmjx_core::criteria::{
    gwve_sum_test, gwve_survival_test, heavy_tail_test, integral_test, liminf_test, psi_bound,
};
use cmjx_core::genealogy::{
    coupled_explosion_order, dwass_pmf, simulate, simulate_gwve, total_progeny, wilson_interval,
    GenealogyConfig, ProxyEstimate,
};
use cmjx_core::intensity::IntensityModel;
use cmjx_core::reproduction::ReproductionLaw;
use cmjx_core::smoothing::{iterate_poisson, Profile};
use cmjx_core::RngStream;
use serde_json::json;

use crate::config::{CriterionSpec, ExperimentConfig, ExperimentKind};
use crate::output::{csv_artifact, json_artifact, Artifact};

pub fn run(config: &ExperimentConfig) -> Result<Vec<Artifact>> {
    match config.kind {
        ExperimentKind::Simulate => run_simulate(config),
        ExperimentKind::Iterate => run_iterate(config),
        ExperimentKind::Criteria => run_criteria(config),
        ExperimentKind::Compare => run_compare(config),
        ExperimentKind::Gwve => run_gwve(config),
        ExperimentKind::Dwass => run_dwass(config),
    }
}

fn prefix(config: &ExperimentConfig) -> &str {
    config
        .output
        .prefix
        .as_deref()
        .unwrap_or_else(|| config.kind.name())
}

fn model(config: &ExperimentConfig) -> Result<&IntensityModel> {
    config
        .model
        .as_ref()
        .ok_or_else(|| anyhow!("missing [model] block"))
}

fn genealogy(config: &ExperimentConfig) -> Result<&GenealogyConfig> {
    config
        .genealogy
        .as_ref()
        .ok_or_else(|| anyhow!("missing [genealogy] block"))
}

fn replicas(config: &ExperimentConfig) -> Result<u64> {
    config
        .replicas
        .ok_or_else(|| anyhow!("missing replicas field"))
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn run_simulate(config: &ExperimentConfig) -> Result<Vec<Artifact>> {
    let law = match &config.law {
        Some(law) => law.clone(),
        None => ReproductionLaw::PoissonPp {
            model: model(config)?.clone(),
        },
    };
    let cfg = genealogy(config)?;
    let n = replicas(config)?;
    let root = RngStream::from_seed(config.seed);

    let runs: Vec<_> = (0..n)
        .map(|i| simulate(&law, cfg, &root.child(i)))
        .collect::<Result<_, _>>()?;
    let depth = runs
        .iter()
        .map(|s| s.generations_run as usize)
        .max()
        .unwrap_or(0);

    let mut header: Vec<String> = vec![
        "replica".to_string(),
        "generations_run".to_string(),
        "cap_hit".to_string(),
    ];
    for g in 1..=depth {
        header.push(format!("m_{g}"));
    }
    header.push("total_born".to_string());
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();

    let rows: Vec<Vec<String>> = runs
        .iter()
        .enumerate()
        .map(|(i, stats)| {
            let mut row = vec![
                i.to_string(),
                stats.generations_run.to_string(),
                stats.cap_hit.to_string(),
            ];
            for g in 1..=depth {
                row.push(stats.minima.get(g).copied().map(fmt).unwrap_or_default());
            }
            row.push(stats.total_born.to_string());
            row
        })
        .collect();

    Ok(vec![csv_artifact(
        &format!("{}.csv", prefix(config)),
        config,
        &header_refs,
        &rows,
    )?])
}

fn run_iterate(config: &ExperimentConfig) -> Result<Vec<Artifact>> {
    let model = model(config)?;
    let grid = config
        .grid
        .as_ref()
        .ok_or_else(|| anyhow!("missing [grid] block"))?
        .build()?;
    let block = config.iterate.clone().unwrap_or_default();
    let phi0 = if block.shift > 0.0 {
        Profile::indicator_up_to(grid, block.shift)?
    } else {
        Profile::indicator(grid)?
    };
    let run = iterate_poisson(model, &phi0, block.max_iter, block.tol, block.triv_tol)?;

    let stem = prefix(config);
    let rows: Vec<Vec<String>> = run
        .final_profile
        .grid()
        .iter()
        .zip(run.final_profile.values())
        .map(|(&t, &v)| vec![fmt(t), fmt(v)])
        .collect();
    let profile_csv = csv_artifact(&format!("{stem}_profile.csv"), config, &["t", "value"], &rows)?;

    let result = json!({
        "verdict": run.verdict,
        "iterations": run.iterations,
        "converged": run.converged,
        "final_residual": run.residuals.last(),
        "min_value": run.final_profile.min_value(),
    });
    let result_json = json_artifact(&format!("{stem}_result.json"), config, result)?;
    Ok(vec![profile_csv, result_json])
}

fn run_criteria(config: &ExperimentConfig) -> Result<Vec<Artifact>> {
    let block = config
        .criteria
        .as_ref()
        .ok_or_else(|| anyhow!("missing [criteria] block"))?;
    let mut entries = Vec::new();
    for spec in &block.run {
        let entry = match spec {
            CriterionSpec::Integral { eps, quad_tol } => {
                let report = integral_test(model(config)?, *eps, *quad_tol)?;
                json!({"test": spec.name(), "report": report})
            }
            CriterionSpec::Liminf {
                delta_probe,
                second_moment_finite,
            } => {
                let report = liminf_test(model(config)?, *delta_probe, *second_moment_finite)?;
                json!({"test": spec.name(), "report": report})
            }
            CriterionSpec::GwveSum {
                windows,
                series,
                n_max,
            } => {
                let report = gwve_sum_test(model(config)?, windows, *series, *n_max)?;
                json!({"test": spec.name(), "report": report})
            }
            CriterionSpec::GwveSurvival { env, n_max } => {
                let report = gwve_survival_test(env, *n_max)?;
                json!({"test": spec.name(), "report": report})
            }
            CriterionSpec::HeavyTail {
                offspring,
                displacement,
                delta,
                quad_tol,
            } => {
                let report = heavy_tail_test(offspring, displacement, *delta, *quad_tol)?;
                json!({"test": spec.name(), "report": report})
            }
            CriterionSpec::PsiBound { delta } => {
                let envelope = psi_bound(model(config)?, *delta)?;
                json!({"test": spec.name(), "envelope": envelope})
            }
        };
        entries.push(entry);
    }
    Ok(vec![json_artifact(
        &format!("{}.json", prefix(config)),
        config,
        json!({ "reports": entries }),
    )?])
}

fn proxy_summary(est: &ProxyEstimate) -> serde_json::Value {
    json!({
        "replicas": est.replicas,
        "successes": est.successes,
        "p_hat": est.p_hat,
        "ci_low": est.ci_low,
        "ci_high": est.ci_high,
        "cap_fraction": est.cap_fraction,
        "depth_fraction": est.depth_fraction,
    })
}

fn run_compare(config: &ExperimentConfig) -> Result<Vec<Artifact>> {
    let first = model(config)?;
    let second = config
        .model_alt
        .as_ref()
        .ok_or_else(|| anyhow!("missing [model_alt] block"))?;
    let cfg = genealogy(config)?;
    let n = replicas(config)?;
    let order = coupled_explosion_order(first, second, cfg, n, config.seed)?;

    let stem = prefix(config);
    let result = json!({
        "dominance_violations": order.dominance_violations,
        "first": proxy_summary(&order.first),
        "second": proxy_summary(&order.second),
    });
    let summary = json_artifact(&format!("{stem}.json"), config, result)?;

    let header = [
        "replica",
        "first_total_born",
        "second_total_born",
        "first_proxy",
        "second_proxy",
        "first_generations",
        "second_generations",
        "ordered",
    ];
    let rows: Vec<Vec<String>> = order
        .first
        .records
        .iter()
        .zip(&order.second.records)
        .map(|(a, b)| {
            vec![
                a.replica.to_string(),
                a.total_born.to_string(),
                b.total_born.to_string(),
                a.proxy.to_string(),
                b.proxy.to_string(),
                a.generations_run.to_string(),
                b.generations_run.to_string(),
                (a.total_born <= b.total_born).to_string(),
            ]
        })
        .collect();
    let table = csv_artifact(&format!("{stem}.csv"), config, &header, &rows)?;
    Ok(vec![summary, table])
}

fn run_gwve(config: &ExperimentConfig) -> Result<Vec<Artifact>> {
    let env = config
        .env
        .as_ref()
        .ok_or_else(|| anyhow!("missing [env] block"))?;
    let block = config
        .gwve
        .as_ref()
        .ok_or_else(|| anyhow!("missing [gwve] block"))?;
    let analytic = gwve_survival_test(env, block.n_max)?;

    let root = RngStream::from_seed(config.seed);
    let trajectories: Vec<_> = (0..block.replicas)
        .map(|i| simulate_gwve(env, block.max_gen, block.pop_cap, &mut root.child(i)))
        .collect::<Result<_, _>>()?;
    let survivors = trajectories.iter().filter(|t| t.survived()).count() as u64;
    let frequency = survivors as f64 / block.replicas as f64;
    let (ci_low, ci_high) = wilson_interval(survivors, block.replicas);

    let stem = prefix(config);
    let result = json!({
        "analytic": analytic,
        "simulation": {
            "replicas": block.replicas,
            "survivors": survivors,
            "frequency": frequency,
            "ci_low": ci_low,
            "ci_high": ci_high,
            "max_gen": block.max_gen,
            "pop_cap": block.pop_cap,
        },
    });
    let summary = json_artifact(&format!("{stem}.json"), config, result)?;

    let header = ["replica", "survived", "extinct", "cap_hit", "generations", "final_count"];
    let rows: Vec<Vec<String>> = trajectories
        .iter()
        .enumerate()
        .map(|(i, t)| {
            vec![
                i.to_string(),
                t.survived().to_string(),
                t.extinct.to_string(),
                t.cap_hit.to_string(),
                (t.counts.len() - 1).to_string(),
                t.counts.last().copied().unwrap_or(0).to_string(),
            ]
        })
        .collect();
    let table = csv_artifact(&format!("{stem}.csv"), config, &header, &rows)?;
    Ok(vec![summary, table])
}

fn run_dwass(config: &ExperimentConfig) -> Result<Vec<Artifact>> {
    let offspring = config
        .offspring
        .as_ref()
        .ok_or_else(|| anyhow!("missing [offspring] block"))?;
    let block = config
        .dwass
        .as_ref()
        .ok_or_else(|| anyhow!("missing [dwass] block"))?;

    let mut counts = vec![0u64; block.n_max as usize + 1];
    if block.samples > 0 {
        let root = RngStream::from_seed(config.seed);
        for i in 0..block.samples {
            let mut rng = root.child(i);
            let total = total_progeny(offspring, block.cap, &mut rng);
            if total <= block.n_max {
                counts[total as usize] += 1;
            }
        }
    }

    let header = ["n", "exact_pmf", "mc_frequency", "mc_se"];
    let mut rows = Vec::new();
    for n in 1..=block.n_max {
        let pmf = dwass_pmf(offspring, n)?;
        let (freq, se) = if block.samples > 0 {
            let p = counts[n as usize] as f64 / block.samples as f64;
            let se = (p * (1.0 - p) / block.samples as f64).sqrt();
            (fmt(p), fmt(se))
        } else {
            (String::new(), String::new())
        };
        rows.push(vec![n.to_string(), fmt(pmf), freq, se]);
    }
    Ok(vec![csv_artifact(
        &format!("{}.csv", prefix(config)),
        config,
        &header,
        &rows,
    )?])
}

//! One function per mode. Each writes its CSV files under `out_dir` and
//! returns a short summary for stdout.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use batscast::analytics::{
    optimize_batches, rank_distribution, rank_distribution_approx, redundancy, stopping_time, NetworkParams,
    RankDistribution,
};
use batscast::codec::DegreeDistribution;
use batscast::sim::{run_robustness, run_single_phase, simulate, SimConfig, SimReport};

use crate::config::{ExperimentConfig, Mode};

#[derive(Debug)]
pub enum RunError {
    Core(batscast::Error),
    Io(PathBuf, std::io::Error),
}

impl From<batscast::Error> for RunError {
    fn from(e: batscast::Error) -> Self {
        RunError::Core(e)
    }
}

pub type RunResult<T> = Result<T, RunError>;

pub fn run(cfg: &ExperimentConfig) -> RunResult<String> {
    match cfg.mode {
        Mode::Plan => plan(cfg),
        Mode::Simulate => simulate_runs(cfg),
        Mode::Sweep => sweep(cfg),
        Mode::Robustness => robustness(cfg),
        Mode::SinglePhase => single_phase(cfg),
    }
}

/// Writes `# <config>` then `body` (which starts with its header row).
fn write_csv(cfg: &ExperimentConfig, name: &str, body: &str) -> RunResult<PathBuf> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| RunError::Io(cfg.out_dir.clone(), e))?;
    let path = cfg.out_dir.join(name);
    let text = format!("# {}\n{body}", cfg.describe());
    fs::write(&path, text).map_err(|e| RunError::Io(path.clone(), e))?;
    Ok(path)
}

fn distribution(cfg: &ExperimentConfig) -> RunResult<Option<DegreeDistribution>> {
    cfg.degree_distribution
        .as_deref()
        .map(|p: &Path| DegreeDistribution::from_file(p))
        .transpose()
        .map_err(RunError::from)
}

fn sim_config(cfg: &ExperimentConfig, params: NetworkParams, n: usize, seed: u64) -> RunResult<SimConfig> {
    Ok(SimConfig {
        payload_len: cfg.payload_len,
        distribution: distribution(cfg)?,
        access: cfg.access,
        slot_cap: cfg.slot_cap,
        trace: cfg.trace,
        ..SimConfig::new(params, n, seed)
    })
}

fn seeds(cfg: &ExperimentConfig) -> impl Iterator<Item = u64> {
    cfg.seed..cfg.seed + cfg.runs
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn plan(cfg: &ExperimentConfig) -> RunResult<String> {
    let plan = optimize_batches(&cfg.params)?;
    write_csv(cfg, "plan.csv", &plan.to_csv())?;
    let best = plan.optimum();
    Ok(format!(
        "n_l={} n_u={} n*={}\nT(n*)={} total={}",
        plan.n_min, plan.n_max, plan.n_opt, best.t, best.total
    ))
}

/// Runs `cfg.runs` seeds; livelocked seeds are kept as failures.
fn collect_runs(
    cfg: &ExperimentConfig,
    mut one: impl FnMut(u64) -> RunResult<SimReport>,
) -> RunResult<Vec<(u64, Result<SimReport, String>)>> {
    let mut out = Vec::new();
    for seed in seeds(cfg) {
        match one(seed) {
            Ok(r) => out.push((seed, Ok(r))),
            Err(RunError::Core(e @ batscast::Error::Livelock { .. })) => out.push((seed, Err(e.to_string()))),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn runs_table(results: &[(u64, Result<SimReport, String>)]) -> String {
    let mut out = String::from("seed,status,phase1_tx,phase2_tx,total_tx,mean_innovative,mean_redundant,mean_overhead\n");
    for (seed, r) in results {
        match r {
            Ok(r) => {
                let _ = writeln!(
                    out,
                    "{seed},ok,{},{},{},{:.3},{:.3},{:.6}",
                    r.phase1_tx,
                    r.phase2_tx,
                    r.total_tx,
                    r.mean_innovative_at_decode(),
                    r.mean_redundant(),
                    r.mean_overhead()
                );
            }
            Err(msg) => {
                let _ = writeln!(out, "{seed},\"{msg}\",,,,,,");
            }
        }
    }
    out
}

fn simulate_runs(cfg: &ExperimentConfig) -> RunResult<String> {
    let p = cfg.params;
    let n = match cfg.n {
        Some(n) => n,
        None => optimize_batches(&p)?.n_opt,
    };
    let results = collect_runs(cfg, |seed| Ok(simulate(&sim_config(cfg, p, n, seed)?)?))?;
    write_csv(cfg, "runs.csv", &runs_table(&results))?;
    let ok: Vec<&SimReport> = results.iter().filter_map(|(_, r)| r.as_ref().ok()).collect();

    let t = stopping_time(n, &p).ok();
    let analytic_t = t.map(|t| t as f64);
    let metrics: [(&str, fn(&SimReport) -> f64, Option<f64>); 6] = [
        ("phase1_tx", |r| r.phase1_tx as f64, Some((n * p.batch_size) as f64)),
        ("phase2_tx", |r| r.phase2_tx as f64, analytic_t),
        ("total_tx", |r| r.total_tx as f64, analytic_t.map(|t| t + (n * p.batch_size) as f64)),
        ("innovative_at_decode", SimReport::mean_innovative_at_decode, Some(p.target_packets())),
        ("redundant", SimReport::mean_redundant, analytic_t.map(|t| redundancy(t, n, &p))),
        ("overhead", SimReport::mean_overhead, Some(p.eta)),
    ];
    let mut summary = String::from("metric,mean,std,runs,analytic\n");
    for (name, f, analytic) in metrics {
        let xs: Vec<f64> = ok.iter().map(|r| f(r)).collect();
        let (m, s) = mean_std(&xs);
        let a = analytic.map_or(String::new(), |a| format!("{a:.3}"));
        let _ = writeln!(summary, "{name},{m:.3},{s:.3},{},{a}", xs.len());
    }
    write_csv(cfg, "summary.csv", &summary)?;

    let pool = |pick: fn(&SimReport) -> &[u64]| {
        let mut counts = vec![0u64; p.batch_size + 1];
        for r in &ok {
            for (c, x) in counts.iter_mut().zip(pick(r)) {
                *c += x;
            }
        }
        RankDistribution::from_counts(&counts)
    };
    let at_decode = pool(|r| &r.rank_at_decode);
    let at_completion = pool(|r| &r.rank_at_completion);
    let analytic = rank_distribution(n, analytic_t.unwrap_or(0.0), &p);
    let approx = rank_distribution_approx(&p);
    let mut ranks = String::from("rank,empirical_decode,empirical_completion,analytic,approximation\n");
    for r in 0..=p.batch_size {
        let _ = writeln!(
            ranks,
            "{r},{:.6},{:.6},{:.6},{:.6}",
            at_decode.pr()[r],
            at_completion.pr()[r],
            analytic.pr()[r],
            approx.pr()[r]
        );
    }
    write_csv(cfg, "ranks.csv", &ranks)?;
    if cfg.trace {
        for r in &ok {
            if let Some(csv) = r.trace_csv() {
                write_csv(cfg, &format!("trace_seed{}.csv", r.seed), &csv)?;
            }
        }
    }

    let totals: Vec<f64> = ok.iter().map(|r| r.total_tx as f64).collect();
    let phase2: Vec<f64> = ok.iter().map(|r| r.phase2_tx as f64).collect();
    Ok(format!(
        "n={n} runs={}/{} total={:.1} phase2={:.1} analytic_T={} tv_analytic={:.4} tv_approx={:.4}",
        ok.len(),
        results.len(),
        mean_std(&totals).0,
        mean_std(&phase2).0,
        t.map_or("none".to_string(), |t| t.to_string()),
        at_decode.total_variation(&analytic),
        at_decode.total_variation(&approx)
    ))
}

fn single_phase(cfg: &ExperimentConfig) -> RunResult<String> {
    let p = cfg.params;
    let results = collect_runs(cfg, |seed| Ok(run_single_phase(&sim_config(cfg, p, 0, seed)?)?))?;
    write_csv(cfg, "single_phase.csv", &runs_table(&results))?;
    let totals: Vec<f64> = results
        .iter()
        .filter_map(|(_, r)| r.as_ref().ok().map(|r| r.total_tx as f64))
        .collect();
    let (m, s) = mean_std(&totals);
    let n_u = batscast::analytics::max_batches(&p);
    Ok(format!(
        "runs={}/{} total={m:.1} std={s:.1} analytic={}",
        totals.len(),
        results.len(),
        n_u * p.batch_size
    ))
}

fn mean_total(reports: impl Iterator<Item = RunResult<SimReport>>) -> RunResult<f64> {
    let mut xs = Vec::new();
    for r in reports {
        match r {
            Ok(r) => xs.push(r.total_tx as f64),
            Err(RunError::Core(batscast::Error::Livelock { .. })) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(mean_std(&xs).0)
}

fn sweep(cfg: &ExperimentConfig) -> RunResult<String> {
    let mut out = String::from(
        "k,n_u,n_opt,single_analytic,two_phase_analytic,single,two_phase,saving,p0,p1,p2\n",
    );
    let mut lines = Vec::new();
    for k in cfg.k_min..=cfg.k_max {
        let p = NetworkParams { k, ..cfg.params };
        let plan = optimize_batches(&p)?;
        let single_a = (plan.n_max * p.batch_size) as u64;
        let two_a = plan.optimum().total;
        let (single, two) = if cfg.analytic_only {
            (String::new(), String::new())
        } else {
            let one = mean_total(seeds(cfg).map(|s| Ok(run_single_phase(&sim_config(cfg, p, 0, s)?)?)))?;
            let two = mean_total(seeds(cfg).map(|s| Ok(simulate(&sim_config(cfg, p, plan.n_opt, s)?)?)))?;
            (format!("{one:.1}"), format!("{two:.1}"))
        };
        let saving = single_a as i64 - two_a as i64;
        let _ = writeln!(
            out,
            "{k},{},{},{single_a},{two_a},{single},{two},{saving},{},{},{}",
            plan.n_max, plan.n_opt, p.p0, p.p1, p.p2
        );
        lines.push(format!("k={k} n*={} saving={saving}", plan.n_opt));
    }
    write_csv(cfg, "sweep.csv", &out)?;
    Ok(lines.join("\n"))
}

fn robustness(cfg: &ExperimentConfig) -> RunResult<String> {
    let mut out = String::from("actual_k,design_n,designed_total,ideal_n,ideal_total,degradation\n");
    let mut lines = Vec::new();
    for actual in cfg.design_k..=cfg.params.k {
        let p = NetworkParams { k: actual, ..cfg.params };
        let mut design_n = 0;
        let designed = mean_total(seeds(cfg).map(|s| {
            let r = run_robustness(cfg.design_k, actual, &sim_config(cfg, p, 0, s)?)?;
            design_n = r.batches;
            Ok(r.report)
        }))?;
        let ideal_n = optimize_batches(&p)?.n_opt;
        let ideal = mean_total(seeds(cfg).map(|s| Ok(simulate(&sim_config(cfg, p, ideal_n, s)?)?)))?;
        let degradation = designed / ideal - 1.0;
        let _ = writeln!(out, "{actual},{design_n},{designed:.1},{ideal_n},{ideal:.1},{degradation:.5}");
        lines.push(format!("k={actual} degradation={:.2}%", degradation * 100.0));
    }
    write_csv(cfg, "robustness.csv", &out)?;
    Ok(lines.join("\n"))
}

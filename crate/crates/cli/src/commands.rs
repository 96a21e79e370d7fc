use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mergebench::eval::{build_prompt, evaluate_llm, evaluate_rubric, EvalResult, LlmEndpointConfig, PriorKnowledge};
use mergebench::io::{read_to_string, write_atomic};
use mergebench::metrics::report::{aggregate_records, render_density_table, render_planner_table, write_report};
use mergebench::metrics::{compute_metrics, BenchmarkReport, DriveMode, EpisodeRecord};
use mergebench::policy::{generate_dataset, train, DatasetConfig, ModelConfig, TrainConfig};
use mergebench::policy::weights_io::save_weights;
use mergebench::scenario::{
    fit_gmm, load_scenario, sample_scenario, save_scenario, scenario_features, DensityClass, GmmConfig, Scenario,
    ScenarioParams,
};
use mergebench::sim::log_io::write_log;
use mergebench::sim::{run_batch, EnvPolicy, EnvPolicyKind, EpisodeJob, IdmGapAcceptance, Planner, Scripted, SimConfig};
use mergebench::Control;

use crate::args::{densities, Command, EnvPolicyArg, EvaluatorArg, FitGmmArgs, GenArgs, PlannerArg, ReportArgs, RunArgs, TrainArgs};
use crate::{CliError, CliResult};

pub fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Gen(a) => cmd_gen(&a).map(|_| ()),
        Command::FitGmm(a) => cmd_fit_gmm(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Run(a) => {
            print!("{}", render_density_table(&cmd_run(&a)?));
            Ok(())
        }
        Command::Report(a) => cmd_report(&a),
    }
}

/// Seed of item `i` in stream `stream`, well spread for nearby inputs.
pub fn derive_seed(base: u64, stream: u64, i: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(i.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn to_json<T: serde::Serialize>(v: &T) -> CliResult<String> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn cmd_gen(a: &GenArgs) -> CliResult<Vec<PathBuf>> {
    if a.count == 0 {
        return Err(CliError::Config("--count must be at least 1".into()));
    }
    let params = ScenarioParams::default();
    let mut written = Vec::new();
    for d in densities(&a.density) {
        for i in 0..a.count {
            let s = sample_scenario(derive_seed(a.seed, d as u64, i as u64), d, &params)?;
            let path = a.out.join(format!("{}_{i:04}.json", d.as_str()));
            save_scenario(&path, &s)?;
            written.push(path);
        }
    }
    println!("wrote {} scenarios to {}", written.len(), a.out.display());
    Ok(written)
}

fn list_json(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?;
    let mut v: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    v.sort();
    Ok(v)
}

/// `*` matches any run of characters, everything else is literal.
fn wildcard(pattern: &str, name: &str) -> bool {
    let parts: Vec<&str> = pattern.split('*').collect();
    if parts.len() == 1 {
        return pattern == name;
    }
    let (first, last) = (parts[0], parts[parts.len() - 1]);
    if !name.starts_with(first) || !name[first.len()..].ends_with(last) || name.len() < first.len() + last.len() {
        return false;
    }
    let mut rest = &name[first.len()..name.len() - last.len()];
    for mid in &parts[1..parts.len() - 1] {
        match rest.find(mid) {
            Some(i) => rest = &rest[i + mid.len()..],
            None => return false,
        }
    }
    true
}

/// A directory, or a pattern whose last component may contain `*`.
pub fn resolve_scenario_files(pattern: &str) -> CliResult<Vec<PathBuf>> {
    let p = Path::new(pattern);
    if p.is_dir() {
        return list_json(p);
    }
    let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let dir = p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let rd = std::fs::read_dir(dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?;
    let mut v: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|f| f.file_name().is_some_and(|n| wildcard(&name, &n.to_string_lossy())))
        .collect();
    v.sort();
    Ok(v)
}

pub fn cmd_fit_gmm(a: &FitGmmArgs) -> CliResult<()> {
    let files = list_json(&a.input)?;
    let mut points = Vec::new();
    for f in &files {
        let s = load_scenario(f)?;
        match scenario_features(&s) {
            Ok((v, g)) => points.push([v, g]),
            Err(e) => log::warn!("skipping {}: {e}", f.display()),
        }
    }
    if points.is_empty() {
        return Err(CliError::Config(format!("no usable scenarios in {}", a.input.display())));
    }
    let fit = fit_gmm(
        &points,
        &GmmConfig {
            k: a.k,
            max_iter: a.max_iter,
            seed: a.seed,
            ..Default::default()
        },
    )?;
    write_atomic(&a.out, to_json(&fit.model)?.as_bytes())?;
    let mut order: Vec<usize> = (0..fit.model.k).collect();
    order.sort_by(|x, y| fit.model.means[*x][1].total_cmp(&fit.model.means[*y][1]));
    println!(
        "fitted {} components on {} scenarios ({} iterations, log-likelihood {:.4})",
        fit.model.k,
        points.len(),
        fit.iterations,
        fit.log_likelihood
    );
    for c in order {
        let m = fit.model.means[c];
        println!("  weight {:.3}  speed {:.3} m/s  gap {:.3} m", fit.model.weights[c], m[0], m[1]);
    }
    Ok(())
}

pub fn cmd_train(a: &TrainArgs) -> CliResult<()> {
    let (mut data, rep) = generate_dataset(a.scenes, a.seed, &DatasetConfig::default())?;
    if let Some(n) = a.samples {
        data.truncate(n);
    }
    if data.is_empty() {
        return Err(CliError::Runtime(format!(
            "no training windows survived the filters ({} windows seen)",
            rep.windows
        )));
    }
    let cfg = TrainConfig {
        lr: a.lr,
        batch: a.batch,
        epochs: a.epochs,
        seed: a.seed,
        max_steps: a.steps,
        model: ModelConfig::small(a.d_model, a.layers, a.heads),
        ..Default::default()
    };
    cfg.validate()?;
    let out = train(&data, &cfg)?;
    save_weights(&a.out, &out.weights)?;
    let curve = a.out.with_extension("curve.json");
    write_atomic(&curve, to_json(&out.loss_curve)?.as_bytes())?;
    println!(
        "trained on {} windows for {} steps; loss {:.6} -> {:.6}",
        data.len(),
        out.steps,
        out.loss_curve.first().copied().unwrap_or(f64::NAN),
        out.loss_curve.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn scenarios_for_run(a: &RunArgs, dens: &[DensityClass]) -> CliResult<Vec<Scenario>> {
    if let Some(pattern) = &a.scenarios {
        let mut out = Vec::new();
        for f in resolve_scenario_files(pattern)? {
            let s = load_scenario(&f)?;
            if a.density.is_empty() || dens.contains(&s.density) {
                out.push(s);
            }
            if out.len() == a.episodes {
                break;
            }
        }
        if out.is_empty() {
            return Err(CliError::Config(format!("no scenarios match {pattern}")));
        }
        return Ok(out);
    }
    let params = ScenarioParams::default();
    (0..a.episodes)
        .map(|i| {
            let d = dens[i % dens.len()];
            Ok(sample_scenario(derive_seed(a.seed, d as u64, i as u64), d, &params)?)
        })
        .collect()
}

fn make_planner(kind: PlannerArg) -> Box<dyn Planner> {
    match kind {
        PlannerArg::IdmGap => Box::new(IdmGapAcceptance::default()),
        PlannerArg::Scripted => Box::new(Scripted::constant(Control::new(0.0, 0.0))),
    }
}

fn llm_config(a: &RunArgs) -> LlmEndpointConfig {
    LlmEndpointConfig {
        base_url: a.llm_url.clone(),
        model: a.llm_model.clone(),
        token_env: a.token_env.clone(),
        timeout_s: a.llm_timeout,
        max_retries: a.llm_retries,
        ..Default::default()
    }
}

fn evaluate(
    a: &RunArgs,
    m: &mergebench::metrics::EpisodeMetrics,
    priors: &PriorKnowledge,
    mode: DriveMode,
) -> CliResult<EvalResult> {
    let rubric = || evaluate_rubric(m, priors, mode);
    match a.evaluator {
        EvaluatorArg::Rubric => Ok(rubric()),
        EvaluatorArg::Llm => Ok(evaluate_llm(&llm_config(a), &build_prompt(m, priors, mode))?),
        EvaluatorArg::LlmRubric => match evaluate_llm(&llm_config(a), &build_prompt(m, priors, mode)) {
            Ok(r) => Ok(r),
            Err(mergebench::Error::Validation(msg)) => Err(CliError::Config(msg)),
            Err(e) => {
                log::warn!("LLM evaluation failed, using the rubric: {e}");
                Ok(rubric())
            }
        },
    }
}

pub fn cmd_run(a: &RunArgs) -> CliResult<BenchmarkReport> {
    if a.episodes == 0 {
        return Err(CliError::Config("--episodes must be at least 1".into()));
    }
    let dens = densities(&a.density);
    let env_kind = match (a.env_policy, &a.weights) {
        (EnvPolicyArg::Rule, _) => EnvPolicyKind::RuleBased,
        (EnvPolicyArg::Idm, _) => EnvPolicyKind::IdmBaseline,
        (EnvPolicyArg::Neural, Some(w)) => EnvPolicyKind::Neural(w.clone()),
        (EnvPolicyArg::Neural, None) => {
            return Err(CliError::Config("--env-policy neural needs --weights".into()));
        }
    };
    let env = EnvPolicy::load(&env_kind)?;
    let scenarios = scenarios_for_run(a, &dens)?;
    let jobs: Vec<EpisodeJob> = scenarios
        .into_iter()
        .enumerate()
        .map(|(index, scenario)| EpisodeJob {
            index,
            scenario,
            seed: derive_seed(a.seed, 0xE5, index as u64),
        })
        .collect();
    let mut sim = SimConfig::default();
    sim.termination.timeout_ticks = a.timeout_ticks;
    sim.validate()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.workers)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let planner = a.planner;
    let logs = pool.install(|| run_batch(&jobs, |_| make_planner(planner), &env, &sim));

    let mode: DriveMode = a.mode.into();
    let priors = PriorKnowledge::default();
    let mut records = Vec::with_capacity(logs.len());
    for (job, log) in jobs.iter().zip(logs) {
        let log = log.map_err(|e| CliError::Runtime(format!("episode {}: {e}", job.index)))?;
        if !a.no_logs {
            write_log(&log, &a.out.join("logs"), &format!("episode_{:04}", job.index))?;
        }
        let metrics = compute_metrics(&log, mode)?;
        let eval = evaluate(a, &metrics, &priors, mode)?;
        records.push(EpisodeRecord {
            index: job.index,
            metrics,
            eval: Some(eval),
        });
    }
    let filter = if a.scenarios.is_some() && a.density.is_empty() { vec![] } else { dens };
    let report = aggregate_records(&records, &filter)?;
    write_report(&a.out, &report, &records)?;
    let table = render_density_table(&report);
    write_atomic(&a.out.join("table.md"), table.as_bytes())?;
    Ok(report)
}

fn load_records(p: &Path) -> CliResult<Vec<EpisodeRecord>> {
    let file = if p.is_dir() { p.join("episodes.json") } else { p.to_path_buf() };
    let text = read_to_string(&file)?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", file.display())))
}

pub fn planner_reports(records: &[EpisodeRecord]) -> CliResult<Vec<(String, BenchmarkReport)>> {
    let mut by_planner: BTreeMap<String, Vec<EpisodeRecord>> = BTreeMap::new();
    for r in records {
        by_planner.entry(r.metrics.planner.clone()).or_default().push(r.clone());
    }
    by_planner
        .into_iter()
        .map(|(name, recs)| Ok((name, aggregate_records(&recs, &[])?)))
        .collect()
}

pub fn cmd_report(a: &ReportArgs) -> CliResult<()> {
    let mut records = Vec::new();
    for p in &a.input {
        records.extend(load_records(p)?);
    }
    if records.is_empty() {
        return Err(CliError::Config("no episode records found in the inputs".into()));
    }
    let rows = planner_reports(&records)?;
    let table = render_planner_table(&rows);
    print!("{table}");
    if let Some(out) = &a.out {
        write_atomic(&out.join("planners.md"), table.as_bytes())?;
        write_atomic(&out.join("planners.json"), to_json(&rows)?.as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wildcard_matching() {
        assert!(wildcard("*.json", "a.json"));
        assert!(wildcard("highly_*.json", "highly_0001.json"));
        assert!(!wildcard("highly_*.json", "lower_0001.json"));
        assert!(wildcard("a*b*c", "axxbyyc"));
        assert!(!wildcard("a*b*c", "ac"));
        assert!(wildcard("exact", "exact"));
    }

    #[test]
    fn seeds_spread() {
        let a: Vec<u64> = (0..100).map(|i| derive_seed(1, 0, i)).collect();
        let mut b = a.clone();
        b.sort();
        b.dedup();
        assert_eq!(b.len(), 100);
        assert_ne!(derive_seed(1, 0, 0), derive_seed(1, 1, 0));
    }
}

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use rdp_forge::environments::{generate_dataset, make_env, BehaviorPolicy, EnvParams, Environment};
use rdp_forge::learner::LearnedRdp;
use rdp_forge::pipeline::{domain_defaults, learn_with_budget};
use rdp_forge::planner::{estimate_outputs, evaluate_policy, value_iteration};
use rdp_forge::trace::{load_dataset, Dataset};
use rdp_forge::verification;

use crate::bench::Metrics;
use crate::config::RunConfig;
use crate::error::{io_error, CliError};

pub const DEFAULT_FAMILY: (usize, usize, usize) = (1, 1, 1);

/// `data.ndjson` → `data.<suffix>`.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let f = File::create(path).map_err(|e| io_error(path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io_error(path, e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| io_error(path, e))
}

fn load(cfg: &RunConfig) -> Result<(Dataset, PathBuf), CliError> {
    let path = cfg.require_path(&cfg.input, "--in")?;
    let ds = load_dataset(path).map_err(|e| match e {
        rdp_forge::trace::TraceError::Io(io) => io_error(path, io),
        other => CliError::Validation(format!("--in {}: {other}", path.display())),
    })?;
    Ok((ds, path.to_path_buf()))
}

/// Environment named by `--env`, or else the one recorded in the dataset.
fn env_for(cfg: &RunConfig, ds: &Dataset) -> Result<Environment, CliError> {
    match &cfg.env {
        Some(name) => Ok(make_env(name, &cfg.env_params())?),
        None => {
            let params: EnvParams = serde_json::from_value(Value::Object(ds.metadata.params.clone()))
                .map_err(|e| CliError::Validation(format!("dataset parameters: {e}")))?;
            Ok(make_env(&ds.metadata.generator, &params)?)
        }
    }
}

fn default_family(env: &str) -> (usize, usize, usize) {
    domain_defaults(env).map_or(DEFAULT_FAMILY, |d| d.family)
}

pub fn gen(cfg: &RunConfig) -> Result<Value, CliError> {
    let name = cfg.require_env()?;
    let out = cfg.require_path(&cfg.out, "--out")?;
    let env = make_env(name, &cfg.env_params())?;
    let n = cfg.n.or_else(|| domain_defaults(name).map(|d| d.n_episodes)).unwrap_or(10_000);
    let ds = generate_dataset(&env, &BehaviorPolicy::uniform(), n, cfg.seed())?;
    ds.save(out).map_err(CliError::from)?;
    let meta = json!({
        "config": cfg,
        "env": name,
        "params": env.params,
        "episodes": ds.len(),
        "horizon": env.horizon(),
        "seed": cfg.seed(),
        "fingerprint": ds.fingerprint(),
    });
    write_json(&sidecar(out, "meta.json"), &meta)?;
    Ok(meta)
}

pub fn learn(cfg: &RunConfig) -> Result<Value, CliError> {
    let (ds, _) = load(cfg)?;
    let out = cfg.require_path(&cfg.out, "--out")?;
    let tester = cfg.tester(default_family(&ds.metadata.generator))?;
    let result = learn_with_budget(&ds, &tester, cfg.budget_s, true)?;
    result.rdp.save(out)?;
    let summary = json!({
        "config": cfg,
        "tester": tester,
        "states": result.rdp.n_states(),
        "layer_sizes": result.rdp.layers.iter().map(Vec::len).collect::<Vec<_>>(),
        "learn_seconds": result.stats.seconds,
        "dataset_fingerprint": ds.fingerprint(),
        "stats": result.stats,
    });
    write_json(&sidecar(out, "stats.json"), &summary)?;
    let tests_path = sidecar(out, "tests.jsonl");
    let f = File::create(&tests_path).map_err(|e| io_error(&tests_path, e))?;
    let mut w = BufWriter::new(f);
    for rec in &result.tests {
        serde_json::to_writer(&mut w, rec).map_err(|e| io_error(&tests_path, e))?;
        w.write_all(b"\n").map_err(|e| io_error(&tests_path, e))?;
    }
    w.flush().map_err(|e| io_error(&tests_path, e))?;
    let mut short = summary;
    short.as_object_mut().expect("object").remove("stats");
    Ok(short)
}

pub fn eval(cfg: &RunConfig) -> Result<Value, CliError> {
    let (ds, _) = load(cfg)?;
    let rdp_path = cfg.require_path(&cfg.rdp, "--rdp")?;
    let rdp = LearnedRdp::load(rdp_path).map_err(|e| match e {
        rdp_forge::learner::LearnError::Io(io) => io_error(rdp_path, io),
        other => CliError::Validation(format!("--rdp {}: {other}", rdp_path.display())),
    })?;
    let env = env_for(cfg, &ds)?;
    let est = estimate_outputs(&rdp, &ds);
    let policy = value_iteration(&rdp, &est);
    let eval_n = cfg.eval_n.unwrap_or(1000);
    let seed = cfg.seed().wrapping_add(1_000_003);
    let report = evaluate_policy(&env, &rdp, &policy, eval_n, seed)?;
    let tester = &rdp.provenance.tester;
    let metrics = Metrics {
        env: env.name.clone(),
        horizon: env.horizon(),
        tester: tester.kind.short_name().into(),
        family: tester.family.map(|(i, j, k)| format!("{i},{j},{k}")),
        n_episodes: rdp.provenance.n_episodes,
        seed: cfg.seed(),
        status: "ok".into(),
        error: None,
        states: Some(rdp.n_states()),
        mean_return: Some(report.mean),
        stderr: Some(report.stderr),
        learn_seconds: Some(rdp.provenance.learn_seconds),
        fallback_steps: Some(report.fallback_steps),
        eval_episodes: eval_n,
        value0: Some(policy.value0()),
        config: Some(serde_json::to_value(cfg).expect("serializable")),
    };
    if let Some(out) = &cfg.out {
        write_json(out, &metrics)?;
        write_json(&sidecar(out, "policy.json"), &policy.to_json(&rdp.alphabet))?;
    }
    Ok(serde_json::to_value(&metrics).expect("serializable"))
}

pub fn lemmas(cfg: &RunConfig, trials: usize) -> Result<(Value, bool), CliError> {
    let seed = cfg.seed();
    let delta = cfg.delta.unwrap_or(verification::DEFAULT_DELTA);
    if !(delta > 0.0 && delta < 1.0) {
        return Err(CliError::Validation(format!("--delta: {delta} not in (0, 1)")));
    }
    let rates = verification::run_lemma_checks_with(seed, trials, delta);
    let cms = verification::cms_guarantee(seed, 200, 1000, 10_000, 0.05, 0.002);
    let reductions = verification::reduction_identities(seed, 200);
    let pass = rates.pass && cms.pass && reductions.iter().all(|r| r.pass);
    let report = json!({
        "config": cfg,
        "lemmas": rates,
        "cms_guarantee": cms,
        "reductions": reductions,
        "pass": pass,
    });
    if let Some(out) = &cfg.out {
        write_json(out, &report)?;
    }
    Ok((report, pass))
}

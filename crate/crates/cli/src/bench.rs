//! Benchmark table: one row per (domain, tester), as JSON and markdown.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use rdp_forge::metrics::TesterKind;
use rdp_forge::pipeline::{self, PipelineConfig};

use crate::commands::{sidecar, write_json};
use crate::config::RunConfig;
use crate::error::{io_error, CliError};

pub const DOMAINS: [&str; 5] = ["corridor", "tmaze", "cookie", "cheese", "minihall"];
pub const TESTERS: [TesterKind; 2] = [TesterKind::PrefixCms, TesterKind::Language];
pub const DEFAULT_BUDGET_S: f64 = 1800.0;

/// Result of learning and evaluating one configuration. Written by `eval`
/// and, per row, by `bench`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub env: String,
    pub horizon: usize,
    pub tester: String,
    pub family: Option<String>,
    pub n_episodes: usize,
    pub seed: u64,
    /// ok, budget or error
    pub status: String,
    pub error: Option<String>,
    pub states: Option<usize>,
    pub mean_return: Option<f64>,
    pub stderr: Option<f64>,
    pub learn_seconds: Option<f64>,
    pub fallback_steps: Option<u64>,
    pub eval_episodes: usize,
    pub value0: Option<f64>,
    /// Effective configuration of the run that produced this row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub config: RunConfig,
    /// Rows ran concurrently; learn times are then not reported.
    pub parallel: bool,
    pub rows: Vec<Metrics>,
}

fn row_config(cfg: &RunConfig, env: &str, kind: TesterKind) -> Result<PipelineConfig, CliError> {
    let mut pc = PipelineConfig::for_domain(env, kind, cfg.seed())
        .ok_or_else(|| CliError::Validation(format!("--env: unknown environment {env:?}")))?;
    if let Some(n) = cfg.n {
        pc.n_episodes = n;
    }
    if cfg.horizon.is_some() || cfg.length.is_some() {
        pc.params.horizon = cfg.horizon.or(pc.params.horizon);
        pc.params.length = cfg.length.or(pc.params.length);
    }
    if let Some(n) = cfg.eval_n {
        pc.eval_episodes = n;
    }
    let family = pc.tester.family.unwrap_or(crate::commands::DEFAULT_FAMILY);
    let mut flags = cfg.clone();
    flags.tester = Some(kind.short_name().into());
    pc.tester = flags.tester(family)?;
    pc.budget_s = Some(cfg.budget_s.unwrap_or(DEFAULT_BUDGET_S));
    Ok(pc)
}

fn run_row(pc: &PipelineConfig) -> Metrics {
    let mut m = Metrics {
        env: pc.env.clone(),
        horizon: pc.params.horizon.unwrap_or(0),
        tester: pc.tester.kind.short_name().into(),
        family: pc.tester.family.map(|(i, j, k)| format!("{i},{j},{k}")),
        n_episodes: pc.n_episodes,
        seed: pc.seed,
        status: "ok".into(),
        error: None,
        states: None,
        mean_return: None,
        stderr: None,
        learn_seconds: None,
        fallback_steps: None,
        eval_episodes: pc.eval_episodes,
        value0: None,
        config: Some(serde_json::to_value(pc).expect("serializable")),
    };
    match pipeline::run(pc) {
        Ok(run) => {
            let r = run.report;
            m.horizon = run.env.horizon();
            m.states = Some(r.states);
            m.mean_return = Some(r.eval.mean);
            m.stderr = Some(r.eval.stderr);
            m.learn_seconds = Some(r.learn_seconds);
            m.fallback_steps = Some(r.eval.fallback_steps);
            m.value0 = Some(r.value0);
        }
        Err(e) => {
            m.status = if e.is_budget() { "budget" } else { "error" }.into();
            log::warn!("{} / {}: {e}", pc.env, pc.tester.kind.short_name());
            m.error = Some(e.to_string());
        }
    }
    m
}

/// Runs every requested row, in sequence unless `parallel`. `--env` and
/// `--tester` narrow the grid.
pub fn run_grid(cfg: &RunConfig, parallel: bool) -> Result<BenchTable, CliError> {
    let envs: Vec<&str> = match &cfg.env {
        Some(e) => vec![e.as_str()],
        None => DOMAINS.to_vec(),
    };
    let kinds: Vec<TesterKind> = match &cfg.tester {
        Some(_) => vec![cfg.tester_kind()?],
        None => TESTERS.to_vec(),
    };
    // validate every row before spending time on any of them
    let mut configs = Vec::new();
    for env in &envs {
        for &k in &kinds {
            configs.push(row_config(cfg, env, k)?);
        }
    }
    let rows = if parallel { run_parallel(&configs) } else { configs.iter().map(run_logged).collect() };
    Ok(BenchTable { config: cfg.clone(), parallel, rows })
}

fn run_logged(pc: &PipelineConfig) -> Metrics {
    log::info!("bench {} / {}", pc.env, pc.tester.kind.short_name());
    let m = run_row(pc);
    log::info!("  {} states={:?} return={:?}", m.status, m.states, m.mean_return);
    m
}

/// One worker per available core, each pulling the next row.
fn run_parallel(configs: &[PipelineConfig]) -> Vec<Metrics> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(configs.len()).max(1);
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Metrics>>> = configs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(pc) = configs.get(i) else { break };
                let mut m = run_logged(pc);
                m.learn_seconds = None;
                *slots[i].lock().unwrap() = Some(m);
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().unwrap().expect("every row ran")).collect()
}

pub fn aggregate(paths: &[PathBuf], cfg: &RunConfig) -> Result<BenchTable, CliError> {
    let mut rows = Vec::new();
    for p in paths {
        let text = std::fs::read_to_string(p).map_err(|e| io_error(p, e))?;
        let m: Metrics =
            serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
        rows.push(m);
    }
    Ok(BenchTable { config: cfg.clone(), parallel: false, rows })
}

pub fn fmt_return(m: &Metrics) -> String {
    match (m.status.as_str(), m.mean_return) {
        ("ok", Some(r)) => format!("{r:.2} ± {:.2}", m.stderr.unwrap_or(0.0)),
        ("budget", _) => "-".into(),
        _ => "error".into(),
    }
}

fn fmt_opt<T: std::fmt::Display>(m: &Metrics, v: Option<T>) -> String {
    match (m.status.as_str(), v) {
        ("ok", Some(v)) => v.to_string(),
        ("ok", None) => "n/a".into(),
        ("budget", _) => "-".into(),
        _ => "error".into(),
    }
}

pub fn render_markdown(t: &BenchTable) -> String {
    let mut s = String::from("| Domain | H | Tester | N | Q | r | time (s) |\n|---|---|---|---|---|---|---|\n");
    for m in &t.rows {
        let tester = match &m.family {
            Some(f) if m.tester == "lang" => format!("lang X{{{f}}}"),
            _ => m.tester.clone(),
        };
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} |",
            m.env,
            m.horizon,
            tester,
            m.n_episodes,
            fmt_opt(m, m.states),
            fmt_return(m),
            fmt_opt(m, m.learn_seconds.map(|x| format!("{x:.2}"))),
        );
    }
    s
}

/// Writes `out` (JSON) and the markdown next to it.
pub fn write_table(t: &BenchTable, out: &Path) -> Result<PathBuf, CliError> {
    write_json(out, t)?;
    let md = sidecar(out, "md");
    std::fs::write(&md, render_markdown(t)).map_err(|e| io_error(&md, e))?;
    Ok(md)
}

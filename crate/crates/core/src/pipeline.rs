//! Generate → learn → plan → evaluate, as used by the command line and the
//! benchmark harness.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environments::{generate_dataset, make_env, BehaviorPolicy, EnvError, EnvParams, Environment};
use crate::learner::{learn, LearnError, LearnOptions, LearnOutput, LearnStats, LearnedRdp};
use crate::metrics::{TesterConfig, TesterKind};
use crate::planner::{estimate_outputs, evaluate_policy, value_iteration, EvalReport, PlanError, RegularPolicy};
use crate::trace::Dataset;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

impl PipelineError {
    pub fn is_budget(&self) -> bool {
        matches!(self, PipelineError::Learn(LearnError::BudgetExceeded(_)))
    }
}

/// Per-domain defaults used by `bench` and the reproduction tests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainDefaults {
    pub env: String,
    pub horizon: usize,
    pub n_episodes: usize,
    pub family: (usize, usize, usize),
}

pub fn domain_defaults(env: &str) -> Option<DomainDefaults> {
    let (horizon, n_episodes, family) = match env {
        "corridor" => (5, 10_000, (1, 1, 1)),
        "tmaze" => (5, 100_000, (2, 1, 1)),
        // the rarest layer-5 states carry ~4e-4 of the mass under the
        // uniform policy and sit 0.104 apart in X_{1,1,1}
        "cookie" => (9, 5_000_000, (1, 1, 1)),
        "cheese" => (6, 20_000, (1, 1, 1)),
        "minihall" => (15, 20_000, (1, 1, 1)),
        _ => return None,
    };
    Some(DomainDefaults { env: env.into(), horizon, n_episodes, family })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub env: String,
    pub params: EnvParams,
    pub n_episodes: usize,
    pub seed: u64,
    pub tester: TesterConfig,
    pub eval_episodes: usize,
    pub eval_seed: u64,
    /// Wall-clock budget for learning.
    pub budget_s: Option<f64>,
}

impl PipelineConfig {
    /// Domain defaults with the given tester kind and `δ = 0.05`.
    pub fn for_domain(env: &str, kind: TesterKind, seed: u64) -> Option<Self> {
        let d = domain_defaults(env)?;
        let mut tester = TesterConfig::new(kind, 0.05);
        if kind == TesterKind::Language {
            tester.family = Some(d.family);
        }
        tester.seed = seed;
        Some(PipelineConfig {
            env: env.into(),
            params: EnvParams::with_horizon(d.horizon),
            n_episodes: d.n_episodes,
            seed,
            tester,
            eval_episodes: 1000,
            eval_seed: seed.wrapping_add(1_000_003),
            budget_s: None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub env: String,
    pub tester: String,
    pub n_episodes: usize,
    pub states: usize,
    pub layer_sizes: Vec<usize>,
    pub value0: f64,
    pub eval: EvalReport,
    pub optimal_return: Option<f64>,
    pub learn_seconds: f64,
    pub total_seconds: f64,
    pub stats: LearnStats,
}

pub struct PipelineRun {
    pub env: Environment,
    pub dataset: Dataset,
    pub rdp: LearnedRdp,
    pub policy: RegularPolicy,
    pub report: PipelineReport,
}

pub fn learn_with_budget(
    dataset: &Dataset,
    tester: &TesterConfig,
    budget_s: Option<f64>,
    record_tests: bool,
) -> Result<LearnOutput, LearnError> {
    let deadline = budget_s.map(|b| Instant::now() + Duration::from_secs_f64(b.max(0.0)));
    learn(dataset, tester, &LearnOptions { deadline, record_tests })
}

pub fn run(cfg: &PipelineConfig) -> Result<PipelineRun, PipelineError> {
    let started = Instant::now();
    let env = make_env(&cfg.env, &cfg.params)?;
    let dataset = generate_dataset(&env, &BehaviorPolicy::uniform(), cfg.n_episodes, cfg.seed)?;
    let out = learn_with_budget(&dataset, &cfg.tester, cfg.budget_s, false)?;
    let est = estimate_outputs(&out.rdp, &dataset);
    let policy = value_iteration(&out.rdp, &est);
    let eval = evaluate_policy(&env, &out.rdp, &policy, cfg.eval_episodes, cfg.eval_seed)?;
    let report = PipelineReport {
        env: cfg.env.clone(),
        tester: cfg.tester.kind.short_name().into(),
        n_episodes: cfg.n_episodes,
        states: out.rdp.n_states(),
        layer_sizes: out.rdp.layers.iter().map(Vec::len).collect(),
        value0: policy.value0(),
        eval,
        optimal_return: env.optimal_return(),
        learn_seconds: out.stats.seconds,
        total_seconds: started.elapsed().as_secs_f64(),
        stats: out.stats,
    };
    Ok(PipelineRun { env, dataset, rdp: out.rdp, policy, report })
}

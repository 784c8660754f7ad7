//! Episodic simulators, behavior policies and dataset generation.
//!
//! Every domain implements [`Dynamics`]: an initial distribution and a
//! transition kernel over hidden `u64` states that return explicit
//! branches. The [`Environment`] wrapper samples from those branches and
//! forces the terminal observation at step `H`. Because branches are
//! explicit, the same kernels also feed the exact ground-truth construction.

mod cheese;
mod cookie;
mod corridor;
mod ground_truth;
mod minihall;
pub mod synthetic;
mod tmaze;

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{ActionId, Alphabet, AlphabetSpec, Dataset, Episode, Metadata, ObsId, RewardId, Step, TraceError};

pub use cheese::Cheese;
pub use cookie::Cookie;
pub use corridor::Corridor;
pub use ground_truth::{ground_truth_rdp, GroundTruthRdp, Out};
pub use minihall::MiniHall;
pub use tmaze::TMaze;

pub const ENV_NAMES: [&str; 5] = ["corridor", "tmaze", "cookie", "cheese", "minihall"];

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("unknown environment {0:?} (expected one of corridor, tmaze, cookie, cheese, minihall)")]
    UnknownEnv(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("ground truth unsupported for {0}")]
    Unsupported(String),
    #[error("ground truth too large: {0}")]
    TooLarge(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// One outcome of a transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Branch {
    pub prob: f64,
    pub obs: ObsId,
    pub reward: RewardId,
    pub next: u64,
}

pub trait Dynamics: Send + Sync + fmt::Debug {
    fn alphabet(&self) -> &Alphabet;
    /// Outcomes of the start action at step 0.
    fn initial(&self) -> Vec<Branch>;
    /// Outcomes of taking real action `a` at step `t ≥ 1` from `state`.
    fn step(&self, state: u64, t: usize, a: ActionId) -> Vec<Branch>;
    /// Best achievable mean return, when known in closed form.
    fn optimal_return(&self) -> Option<f64> {
        None
    }
}

/// Domain parameters; unset fields take per-domain defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    /// Corridor columns or T-maze corridor length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p1: Option<Vec<f64>>,
}

impl EnvParams {
    pub fn with_horizon(horizon: usize) -> Self {
        EnvParams { horizon: Some(horizon), ..Default::default() }
    }
}

pub fn default_horizon(name: &str) -> Option<usize> {
    Some(match name {
        "corridor" | "tmaze" => 5,
        "cookie" => 9,
        "cheese" => 6,
        "minihall" => 15,
        _ => return None,
    })
}

#[derive(Clone, Debug)]
pub struct Environment {
    pub name: String,
    pub params: EnvParams,
    dynamics: Arc<dyn Dynamics>,
}

pub fn make_env(name: &str, params: &EnvParams) -> Result<Environment, EnvError> {
    let h = params
        .horizon
        .or_else(|| default_horizon(name))
        .ok_or_else(|| EnvError::UnknownEnv(name.to_string()))?;
    if h < 1 {
        return Err(EnvError::InvalidParam("horizon must be at least 1".into()));
    }
    let dynamics: Arc<dyn Dynamics> = match name {
        "corridor" => Arc::new(Corridor::new(h, params.length, params.p0.clone(), params.p1.clone())?),
        "tmaze" => Arc::new(TMaze::new(h, params.length.unwrap_or(tmaze::DEFAULT_LENGTH))?),
        "cookie" => Arc::new(Cookie::new(h)?),
        "cheese" => Arc::new(Cheese::new(h)?),
        "minihall" => Arc::new(MiniHall::new(h)?),
        other => return Err(EnvError::UnknownEnv(other.to_string())),
    };
    if let Some(min) = min_reward_horizon(name, params) {
        if h < min {
            log::warn!("{name}: horizon {h} is too short to reach any reward (needs {min})");
        }
    }
    let mut params = params.clone();
    params.horizon = Some(h);
    Ok(Environment { name: name.to_string(), params, dynamics })
}

fn min_reward_horizon(name: &str, params: &EnvParams) -> Option<usize> {
    match name {
        "tmaze" => Some(params.length.unwrap_or(tmaze::DEFAULT_LENGTH) + 1),
        "cookie" => Some(5),
        _ => None,
    }
}

impl Environment {
    pub fn from_dynamics(name: &str, dynamics: Arc<dyn Dynamics>) -> Self {
        let h = dynamics.alphabet().horizon();
        Environment { name: name.to_string(), params: EnvParams::with_horizon(h), dynamics }
    }

    pub fn alphabet(&self) -> &Alphabet {
        self.dynamics.alphabet()
    }

    pub fn horizon(&self) -> usize {
        self.alphabet().horizon()
    }

    pub fn dynamics(&self) -> &dyn Dynamics {
        &*self.dynamics
    }

    pub fn optimal_return(&self) -> Option<f64> {
        self.dynamics.optimal_return()
    }

    /// Outcomes of step `t` (`t = 0` uses the start action), with the
    /// terminal observation forced at `t = H`.
    pub fn branches(&self, state: u64, t: usize, a: ActionId) -> Vec<Branch> {
        let mut out = if t == 0 { self.dynamics.initial() } else { self.dynamics.step(state, t, a) };
        if t == self.horizon() {
            let term = self.alphabet().terminal_obs();
            out.iter_mut().for_each(|b| b.obs = term);
        }
        out
    }

    pub fn sample_step(&self, state: u64, t: usize, a: ActionId, rng: &mut impl Rng) -> (Step, u64) {
        let branches = self.branches(state, t, a);
        let b = pick(&branches, rng);
        let action = if t == 0 { self.alphabet().start_action() } else { a };
        (Step { action, obs: b.obs, reward: b.reward }, b.next)
    }

    pub fn sample_episode(&self, policy: &BehaviorPolicy, rng: &mut impl Rng) -> Episode {
        let h = self.horizon();
        let mut steps = Vec::with_capacity(h + 1);
        let (s0, mut state) = self.sample_step(0, 0, 0, rng);
        steps.push(s0);
        for t in 1..=h {
            let a = policy.sample(self.alphabet(), rng);
            let (s, next) = self.sample_step(state, t, a, rng);
            steps.push(s);
            state = next;
        }
        Episode::new(steps)
    }
}

pub(crate) fn pick(branches: &[Branch], rng: &mut impl Rng) -> Branch {
    debug_assert!(!branches.is_empty());
    let mut u: f64 = rng.gen();
    for b in branches {
        if u < b.prob {
            return *b;
        }
        u -= b.prob;
    }
    *branches.iter().rev().find(|b| b.prob > 0.0).unwrap_or(&branches[branches.len() - 1])
}

/// History-independent (hence regular) behavior policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorPolicy {
    pub name: String,
    /// Action probabilities; `None` is uniform.
    pub probs: Option<Vec<f64>>,
}

impl BehaviorPolicy {
    pub fn uniform() -> Self {
        BehaviorPolicy { name: "uniform".into(), probs: None }
    }

    pub fn weighted(name: &str, probs: Vec<f64>) -> Result<Self, EnvError> {
        let s: f64 = probs.iter().sum();
        if probs.iter().any(|p| *p < 0.0 || !p.is_finite()) || (s - 1.0).abs() > 1e-9 {
            return Err(EnvError::InvalidParam(format!("policy {name}: probabilities must sum to 1")));
        }
        Ok(BehaviorPolicy { name: name.into(), probs: Some(probs) })
    }

    pub fn prob(&self, alphabet: &Alphabet, a: ActionId) -> f64 {
        match &self.probs {
            None => 1.0 / alphabet.n_actions() as f64,
            Some(p) => p[a as usize],
        }
    }

    pub fn sample(&self, alphabet: &Alphabet, rng: &mut impl Rng) -> ActionId {
        match &self.probs {
            None => rng.gen_range(0..alphabet.n_actions()),
            Some(p) => {
                let mut u: f64 = rng.gen();
                for (a, &x) in p.iter().enumerate() {
                    if u < x {
                        return a as ActionId;
                    }
                    u -= x;
                }
                p.len() as ActionId - 1
            }
        }
    }
}

pub fn uniform_policy(_env: &Environment) -> BehaviorPolicy {
    BehaviorPolicy::uniform()
}

pub fn generate_dataset(
    env: &Environment,
    policy: &BehaviorPolicy,
    n_episodes: usize,
    seed: u64,
) -> Result<Dataset, EnvError> {
    if n_episodes == 0 {
        return Err(EnvError::InvalidParam("n_episodes must be at least 1".into()));
    }
    if let Some(p) = &policy.probs {
        if p.len() != env.alphabet().n_actions() as usize {
            return Err(EnvError::InvalidParam(format!(
                "policy has {} actions, environment has {}",
                p.len(),
                env.alphabet().n_actions()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let episodes = (0..n_episodes).map(|_| env.sample_episode(policy, &mut rng)).collect();
    let mut params = serde_json::Map::new();
    if let Ok(serde_json::Value::Object(m)) = serde_json::to_value(&env.params) {
        params = m;
    }
    let metadata = Metadata { generator: env.name.clone(), policy: policy.name.clone(), seed, params };
    Ok(Dataset::new(env.alphabet().clone(), episodes, metadata)?)
}

/// Builds an alphabet from string slices; used by the domain modules.
pub(crate) fn alphabet(
    actions: &[&str],
    features: &[&[&str]],
    rewards: &[f64],
    terminal: &[&str],
    horizon: usize,
) -> Result<Alphabet, EnvError> {
    let own = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    Ok(Alphabet::new(
        AlphabetSpec {
            actions: own(actions),
            start_action: "start".into(),
            obs_features: features.iter().map(|f| own(f)).collect(),
            rewards: rewards.to_vec(),
            terminal_obs: own(terminal),
        },
        horizon,
    )?)
}

pub(crate) fn det(obs: ObsId, reward: RewardId, next: u64) -> Vec<Branch> {
    vec![Branch { prob: 1.0, obs, reward, next }]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_env_named() {
        let err = make_env("bogus", &EnvParams::default()).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn generation_is_deterministic_and_well_formed() {
        for name in ENV_NAMES {
            let env = make_env(name, &EnvParams::default()).unwrap();
            let a = generate_dataset(&env, &BehaviorPolicy::uniform(), 200, 7).unwrap();
            let b = generate_dataset(&env, &BehaviorPolicy::uniform(), 200, 7).unwrap();
            assert_eq!(a, b, "{name}");
            for e in &a.episodes {
                assert_eq!(e.steps.len(), env.horizon() + 1);
                assert_eq!(e.steps[env.horizon()].obs, env.alphabet().terminal_obs());
            }
        }
    }

    #[test]
    fn branch_probabilities_sum_to_one() {
        for name in ENV_NAMES {
            let env = make_env(name, &EnvParams::default()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let s: f64 = env.branches(0, 0, 0).iter().map(|b| b.prob).sum();
            assert!((s - 1.0).abs() < 1e-12);
            for _ in 0..50 {
                let ep = env.sample_episode(&BehaviorPolicy::uniform(), &mut rng);
                assert_eq!(ep.steps.len(), env.horizon() + 1);
            }
        }
    }

    #[test]
    fn uniform_action_frequencies() {
        let env = make_env("tmaze", &EnvParams::default()).unwrap();
        let pol = uniform_policy(&env);
        let al = env.alphabet();
        assert!((0..al.n_actions()).all(|a| pol.prob(al, a) == 0.25));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            counts[pol.sample(al, &mut rng) as usize] += 1;
        }
        for c in counts {
            assert!((c as f64 / 1e4 - 0.25).abs() < 0.02);
        }
        assert!(BehaviorPolicy::weighted("bad", vec![0.5, 0.6]).is_err());
    }
}

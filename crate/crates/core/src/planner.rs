//! Certainty-equivalent planning on a learned RDP and online evaluation.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environments::{Environment, GroundTruthRdp};
use crate::learner::{LearnedRdp, Provenance, StateId};
use crate::metrics::TesterConfig;
use crate::trace::{ActionId, Alphabet, Dataset, ObsId, RewardId};

pub const POLICY_FORMAT: &str = "rdp-forge-policy";

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("alphabet mismatch: {0}")]
    AlphabetMismatch(String),
    #[error("invalid policy: {0}")]
    Format(String),
    #[error("evaluation needs at least one episode")]
    NoEpisodes,
}

/// Output counts of one `(q, a)`; weights are counts for estimates and
/// probabilities for exact models.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ActionOutputs {
    pub n: f64,
    pub obs: BTreeMap<ObsId, f64>,
    pub rewards: BTreeMap<RewardId, f64>,
}

impl ActionOutputs {
    pub fn theta_o(&self, o: ObsId) -> Option<f64> {
        (self.n > 0.0).then(|| self.obs.get(&o).copied().unwrap_or(0.0) / self.n)
    }

    pub fn theta_r(&self, r: RewardId) -> Option<f64> {
        (self.n > 0.0).then(|| self.rewards.get(&r).copied().unwrap_or(0.0) / self.n)
    }

    pub fn add(&mut self, o: ObsId, r: RewardId, w: f64) {
        self.n += w;
        *self.obs.entry(o).or_default() += w;
        *self.rewards.entry(r).or_default() += w;
    }
}

/// `θ̂(· | q, a)` indexed by `[q][a]` (start action included).
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatedOutputs {
    pub per_state: Vec<Vec<ActionOutputs>>,
    /// Episodes that left the learned transitions part-way.
    pub unrouted: usize,
}

impl EstimatedOutputs {
    pub fn empty(rdp: &LearnedRdp) -> Self {
        let n_act = rdp.alphabet.n_actions() as usize + 1;
        EstimatedOutputs { per_state: vec![vec![ActionOutputs::default(); n_act]; rdp.n_states()], unrouted: 0 }
    }

    pub fn get(&self, q: StateId, a: ActionId) -> &ActionOutputs {
        &self.per_state[q as usize][a as usize]
    }

    pub fn visits(&self, q: StateId, a: ActionId) -> f64 {
        self.get(q, a).n
    }
}

/// Routes every episode through the learned transitions and counts
/// observations and rewards per `(q, a)`. Episodes with unseen transitions
/// contribute up to the first unknown step.
pub fn estimate_outputs(rdp: &LearnedRdp, dataset: &Dataset) -> EstimatedOutputs {
    let mut est = EstimatedOutputs::empty(rdp);
    for e in &dataset.episodes {
        let mut q = rdp.initial();
        for s in &e.steps {
            est.per_state[q as usize][s.action as usize].add(s.obs, s.reward, 1.0);
            match rdp.next(q, s.action, s.obs) {
                Some(n) => q = n,
                None => {
                    est.unrouted += 1;
                    break;
                }
            }
        }
    }
    est
}

/// A known RDP viewed as a learned one with exact outputs (probabilities
/// as weights).
pub fn exact_model(gt: &GroundTruthRdp) -> (LearnedRdp, EstimatedOutputs) {
    let mut trans: BTreeMap<_, _> = gt.trans.iter().map(|(&k, &v)| (k, v)).collect();
    let h = gt.horizon();
    let fin = gt.layers[h + 1][0];
    let mut est_states = vec![vec![ActionOutputs::default(); gt.alphabet.n_actions() as usize + 1]; gt.n_states()];
    for &q in &gt.layers[h] {
        for a in gt.actions_at(h) {
            for o in gt.outputs(q, a) {
                trans.insert((q, a, o.obs), fin);
            }
        }
    }
    for q in 0..gt.n_states() as u32 {
        let t = gt.layer_of[q as usize];
        if t > h {
            continue;
        }
        for a in gt.actions_at(t) {
            for o in gt.outputs(q, a) {
                est_states[q as usize][a as usize].add(o.obs, o.reward, o.prob);
            }
        }
    }
    let rdp = LearnedRdp {
        alphabet: gt.alphabet.clone(),
        layers: gt.layers.clone(),
        layer_of: gt.layer_of.clone(),
        trans,
        support: vec![0; gt.n_states()],
        provenance: Provenance {
            tester: TesterConfig::prefix(0.5),
            delta: 0.5,
            dataset_fingerprint: String::new(),
            n_episodes: 0,
            learn_seconds: 0.0,
        },
    };
    (rdp, EstimatedOutputs { per_state: est_states, unrouted: 0 })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegularPolicy {
    /// Greedy action per state of layers `1..=H`.
    pub actions: BTreeMap<StateId, ActionId>,
    /// `V(q)` for every state; 0 on the final layer.
    pub values: Vec<f64>,
    pub horizon: usize,
}

impl RegularPolicy {
    pub fn value0(&self) -> f64 {
        self.values[0]
    }

    pub fn action(&self, q: StateId) -> Option<ActionId> {
        self.actions.get(&q).copied()
    }

    pub fn to_json(&self, alphabet: &Alphabet) -> serde_json::Value {
        let file = PolicyFile {
            format: POLICY_FORMAT.into(),
            horizon: self.horizon,
            actions: self.actions.iter().map(|(q, a)| (q.to_string(), alphabet.action_symbol(*a).to_string())).collect(),
            value: self.value0(),
        };
        serde_json::to_value(file).expect("serializable")
    }

    /// Parses the JSON form. Only `V(q_0)` is stored there, so `values`
    /// holds just that entry.
    pub fn from_json_str(s: &str, alphabet: &Alphabet) -> Result<Self, PlanError> {
        let f: PolicyFile = serde_json::from_str(s).map_err(|e| PlanError::Format(e.to_string()))?;
        if f.format != POLICY_FORMAT {
            return Err(PlanError::Format(format!("format tag {:?}", f.format)));
        }
        if f.horizon != alphabet.horizon() {
            return Err(PlanError::AlphabetMismatch(format!("horizon {} vs {}", f.horizon, alphabet.horizon())));
        }
        if !f.value.is_finite() {
            return Err(PlanError::Format("value must be finite".into()));
        }
        let mut actions = BTreeMap::new();
        for (q, a) in f.actions {
            let q: StateId = q.parse().map_err(|_| PlanError::Format(format!("state id {q:?}")))?;
            let a = alphabet
                .action_from_symbol(&a)
                .filter(|&x| x < alphabet.n_actions())
                .ok_or_else(|| PlanError::Format(format!("unknown action {a:?}")))?;
            actions.insert(q, a);
        }
        Ok(RegularPolicy { actions, values: vec![f.value], horizon: f.horizon })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyFile {
    format: String,
    horizon: usize,
    actions: BTreeMap<String, String>,
    value: f64,
}

/// `Q(q, a)` under the estimates, or `None` for unvisited pairs.
pub fn q_value(rdp: &LearnedRdp, est: &EstimatedOutputs, values: &[f64], q: StateId, a: ActionId) -> Option<f64> {
    let out = est.get(q, a);
    if out.n <= 0.0 {
        return None;
    }
    let al = &rdp.alphabet;
    let r: f64 = out.rewards.iter().map(|(&r, &c)| c * al.reward_value(r)).sum::<f64>() / out.n;
    let v: f64 = out
        .obs
        .iter()
        .map(|(&o, &c)| c * rdp.next(q, a, o).map_or(0.0, |n| values[n as usize]))
        .sum::<f64>()
        / out.n;
    Some(r + v)
}

/// Backward induction over the layers; unseen transitions lead to a sink
/// of value 0, ties go to the lowest action id.
pub fn value_iteration(rdp: &LearnedRdp, est: &EstimatedOutputs) -> RegularPolicy {
    let al = &rdp.alphabet;
    let h = rdp.horizon();
    let mut values = vec![0.0; rdp.n_states()];
    let mut actions = BTreeMap::new();
    for t in (0..=h).rev() {
        let acts: Vec<ActionId> = if t == 0 { vec![al.start_action()] } else { (0..al.n_actions()).collect() };
        for &q in &rdp.layers[t] {
            let mut best: Option<(f64, ActionId)> = None;
            for &a in &acts {
                if let Some(v) = q_value(rdp, est, &values, q, a) {
                    if best.is_none_or(|(b, _)| v > b) {
                        best = Some((v, a));
                    }
                }
            }
            match best {
                Some((v, a)) => {
                    values[q as usize] = v;
                    if t > 0 {
                        actions.insert(q, a);
                    }
                }
                None => log::warn!("state {q} at layer {t} has no visited action; using the sink value"),
            }
        }
    }
    RegularPolicy { actions, values, horizon: h }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub mean: f64,
    pub stderr: f64,
    /// Steps where the learned automaton had no transition or no action.
    pub fallback_steps: u64,
    pub fallback_episodes: u64,
}

/// Runs `policy` in `env`, tracking the learned state online. Episode `i`
/// uses stream `i` of a ChaCha generator seeded with `seed`.
pub fn evaluate_policy(
    env: &Environment,
    rdp: &LearnedRdp,
    policy: &RegularPolicy,
    n_episodes: usize,
    seed: u64,
) -> Result<EvalReport, PlanError> {
    if env.alphabet() != &rdp.alphabet {
        return Err(PlanError::AlphabetMismatch(format!("environment {} does not match the learned RDP", env.name)));
    }
    if n_episodes == 0 {
        return Err(PlanError::NoEpisodes);
    }
    let al = env.alphabet();
    let h = env.horizon();
    let mut returns = Vec::with_capacity(n_episodes);
    let (mut fb_steps, mut fb_eps) = (0u64, 0u64);
    for i in 0..n_episodes {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let (s0, mut state) = env.sample_step(0, 0, al.start_action(), &mut rng);
        let mut total = al.reward_value(s0.reward);
        let mut q = rdp.next(rdp.initial(), s0.action, s0.obs);
        let mut last: ActionId = 0;
        let mut fell_back = false;
        for t in 1..=h {
            let a = match q.and_then(|q| policy.action(q)) {
                Some(a) => a,
                None => {
                    fb_steps += 1;
                    fell_back = true;
                    last
                }
            };
            let (s, next) = env.sample_step(state, t, a, &mut rng);
            total += al.reward_value(s.reward);
            q = q.and_then(|q| rdp.next(q, a, s.obs));
            state = next;
            last = a;
        }
        fb_eps += fell_back as u64;
        returns.push(total);
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = if returns.len() > 1 { returns.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Ok(EvalReport {
        episodes: returns.len(),
        mean,
        stderr: (var / n).sqrt(),
        fallback_steps: fb_steps,
        fallback_episodes: fb_eps,
    })
}

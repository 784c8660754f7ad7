//! Exact layered RDPs.
//!
//! The construction tracks the belief over hidden simulator states given
//! the action–observation history. Beliefs at each step are the raw RDP
//! states; they are then minimized layer by layer, bottom-up, by output
//! distributions and successor classes. This requires the reward to carry
//! no information about the hidden state beyond the observation (checked).

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{pick, BehaviorPolicy, Branch, Dynamics, EnvError, Environment};
use crate::trace::{ActionId, Alphabet, Episode, ObsId, RewardId, Step};

pub const DEFAULT_BELIEF_CAP: usize = 200_000;
const ROUND: f64 = 1e9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Out {
    pub obs: ObsId,
    pub reward: RewardId,
    pub prob: f64,
}

/// Layered Moore machine with joint output distributions `θ(o, r | q, a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthRdp {
    pub alphabet: Alphabet,
    /// State ids per layer `0..=H+1`; ids are contiguous across layers.
    pub layers: Vec<Vec<u32>>,
    pub layer_of: Vec<usize>,
    /// `outputs[q][a]`, indexed by action id; the layer-0 state only has
    /// the start action, the final state has none.
    pub outputs: Vec<Vec<Vec<Out>>>,
    pub trans: HashMap<(u32, ActionId, ObsId), u32>,
}

impl GroundTruthRdp {
    pub fn initial(&self) -> u32 {
        self.layers[0][0]
    }

    pub fn n_states(&self) -> usize {
        self.layer_of.len()
    }

    pub fn horizon(&self) -> usize {
        self.alphabet.horizon()
    }

    /// Actions available at layer `t`.
    pub fn actions_at(&self, t: usize) -> std::ops::Range<ActionId> {
        if t == 0 {
            let s = self.alphabet.start_action();
            s..s + 1
        } else {
            0..self.alphabet.n_actions()
        }
    }

    pub fn outputs(&self, q: u32, a: ActionId) -> &[Out] {
        &self.outputs[q as usize][a as usize]
    }

    pub fn next(&self, q: u32, a: ActionId, o: ObsId) -> Option<u32> {
        self.trans.get(&(q, a, o)).copied()
    }

    /// State after `steps` (a prefix of an episode, starting at step 0).
    pub fn map_history(&self, steps: &[Step]) -> Option<u32> {
        let mut q = self.initial();
        for s in steps {
            q = self.next(q, s.action, s.obs)?;
        }
        Some(q)
    }

    pub fn sample_episode(&self, policy: &BehaviorPolicy, rng: &mut impl Rng) -> Episode {
        let env = Environment::from_dynamics("ground-truth", std::sync::Arc::new(self.clone()));
        env.sample_episode(policy, rng)
    }

    /// Checks layering and normalization; returns a description of the
    /// first violation.
    pub fn validate(&self) -> Result<(), String> {
        for (&(q, a, o), &to) in &self.trans {
            let t = self.layer_of[q as usize];
            if self.layer_of[to as usize] != t + 1 {
                return Err(format!("transition ({q}, {a}, {o}) leaves layer {t} for layer {}", self.layer_of[to as usize]));
            }
        }
        for q in 0..self.n_states() as u32 {
            let t = self.layer_of[q as usize];
            if t > self.horizon() {
                continue;
            }
            for a in self.actions_at(t) {
                let s: f64 = self.outputs(q, a).iter().map(|x| x.prob).sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(format!("outputs of ({q}, {a}) sum to {s}"));
                }
            }
        }
        Ok(())
    }
}

impl Dynamics for GroundTruthRdp {
    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn initial(&self) -> Vec<Branch> {
        self.branches_of(self.initial(), self.alphabet.start_action())
    }

    fn step(&self, state: u64, _t: usize, a: ActionId) -> Vec<Branch> {
        self.branches_of(state as u32, a)
    }
}

impl GroundTruthRdp {
    fn branches_of(&self, q: u32, a: ActionId) -> Vec<Branch> {
        let final_state = self.layers[self.horizon() + 1][0];
        self.outputs(q, a)
            .iter()
            .map(|o| Branch {
                prob: o.prob,
                obs: o.obs,
                reward: o.reward,
                next: self.next(q, a, o.obs).unwrap_or(final_state) as u64,
            })
            .collect()
    }

    /// Draws from `θ(·|q, a)`.
    pub fn sample_output(&self, q: u32, a: ActionId, rng: &mut impl Rng) -> Out {
        let b = pick(&self.branches_of(q, a), rng);
        Out { obs: b.obs, reward: b.reward, prob: b.prob }
    }
}

type Belief = Vec<(u64, f64)>;
type BeliefKey = Vec<(u64, i64)>;

fn key(b: &Belief) -> BeliefKey {
    b.iter().map(|&(s, p)| (s, (p * ROUND).round() as i64)).collect()
}

fn normalize(mut m: HashMap<u64, f64>) -> Belief {
    let z: f64 = m.values().sum();
    let mut b: Belief = m.drain().filter(|(_, p)| *p > 0.0).map(|(s, p)| (s, p / z)).collect();
    b.sort_by_key(|x| x.0);
    b
}

struct RawNode {
    /// `outs[a]`: aggregated `(o, r) → p`, sorted.
    outs: Vec<Vec<Out>>,
    /// `(a, o) → belief index in the next layer`.
    succ: Vec<(ActionId, ObsId, usize)>,
}

/// Exact RDP of `env` by belief tracking and layered minimization.
pub fn ground_truth_rdp(env: &Environment) -> Result<GroundTruthRdp, EnvError> {
    ground_truth_rdp_capped(env, DEFAULT_BELIEF_CAP)
}

pub fn ground_truth_rdp_capped(env: &Environment, cap: usize) -> Result<GroundTruthRdp, EnvError> {
    let alphabet = env.alphabet().clone();
    let h = alphabet.horizon();
    let n_act = alphabet.n_actions() as usize + 1;
    let mut raw: Vec<Vec<RawNode>> = Vec::with_capacity(h + 2);
    // layer 0 has a single dummy belief; its branches come from the start action
    let mut beliefs: Vec<Belief> = vec![vec![(0, 1.0)]];
    let mut total = 1usize;
    for t in 0..=h {
        let mut next_index: HashMap<BeliefKey, usize> = HashMap::new();
        let mut next_beliefs: Vec<Belief> = Vec::new();
        let mut nodes = Vec::with_capacity(beliefs.len());
        let actions: Vec<ActionId> =
            if t == 0 { vec![alphabet.start_action()] } else { (0..alphabet.n_actions()).collect() };
        for b in &beliefs {
            let mut node = RawNode { outs: vec![Vec::new(); n_act], succ: Vec::new() };
            for &a in &actions {
                let mut by_or: HashMap<(ObsId, RewardId), HashMap<u64, f64>> = HashMap::new();
                for &(s, ps) in b {
                    for br in env.branches(s, t, a) {
                        if br.prob > 0.0 {
                            *by_or.entry((br.obs, br.reward)).or_default().entry(br.next).or_default() += ps * br.prob;
                        }
                    }
                }
                let mut outs: Vec<Out> = by_or
                    .iter()
                    .map(|(&(obs, reward), m)| Out { obs, reward, prob: m.values().sum() })
                    .collect();
                outs.sort_by_key(|o| (o.obs, o.reward));
                node.outs[a as usize] = outs;
                if t == h {
                    continue;
                }
                let mut by_o: HashMap<ObsId, HashMap<u64, f64>> = HashMap::new();
                for (&(o, _), m) in &by_or {
                    let e = by_o.entry(o).or_default();
                    for (&s, &p) in m {
                        *e.entry(s).or_default() += p;
                    }
                }
                let mut obs: Vec<ObsId> = by_o.keys().copied().collect();
                obs.sort_unstable();
                for o in obs {
                    let nb = normalize(by_o.remove(&o).unwrap());
                    let k = key(&nb);
                    for (&(o2, r), m) in &by_or {
                        if o2 == o && key(&normalize(m.clone())) != k {
                            return Err(EnvError::Unsupported(format!(
                                "{}: reward {} after ({}, {}) at step {t} reveals hidden state",
                                env.name,
                                alphabet.reward_value(r),
                                alphabet.action_symbol(a),
                                alphabet.obs_symbols(o).join("")
                            )));
                        }
                    }
                    let idx = *next_index.entry(k).or_insert_with(|| {
                        next_beliefs.push(nb);
                        next_beliefs.len() - 1
                    });
                    node.succ.push((a, o, idx));
                }
            }
            nodes.push(node);
        }
        raw.push(nodes);
        total += next_beliefs.len();
        if total > cap {
            return Err(EnvError::TooLarge(format!("{}: more than {cap} belief states by step {t}", env.name)));
        }
        beliefs = if t == h { vec![vec![(0, 1.0)]] } else { next_beliefs };
    }

    // bottom-up minimization
    let mut classes: Vec<Vec<usize>> = vec![Vec::new(); h + 2];
    classes[h + 1] = vec![0];
    let mut reps: Vec<Vec<usize>> = vec![Vec::new(); h + 2];
    reps[h + 1] = vec![0];
    for t in (0..=h).rev() {
        let mut sig_index: HashMap<Vec<i64>, usize> = HashMap::new();
        let mut cls = Vec::with_capacity(raw[t].len());
        for (i, node) in raw[t].iter().enumerate() {
            let mut sig = Vec::new();
            for (a, outs) in node.outs.iter().enumerate() {
                sig.push(-1 - a as i64);
                for o in outs {
                    sig.extend([o.obs as i64, o.reward as i64, (o.prob * ROUND).round() as i64]);
                }
            }
            for &(a, o, j) in &node.succ {
                sig.extend([a as i64, o as i64, classes[t + 1][j] as i64]);
            }
            let n = sig_index.len();
            let c = *sig_index.entry(sig).or_insert(n);
            if c == n {
                reps[t].push(i);
            }
            cls.push(c);
        }
        classes[t] = cls;
    }

    let mut offsets = vec![0u32; h + 3];
    for t in 0..=h + 1 {
        offsets[t + 1] = offsets[t] + reps[t].len() as u32;
    }
    let n = offsets[h + 2] as usize;
    let mut layers = Vec::with_capacity(h + 2);
    let mut layer_of = vec![0; n];
    let mut outputs = vec![Vec::new(); n];
    let mut trans = HashMap::new();
    for t in 0..=h + 1 {
        layers.push((offsets[t]..offsets[t + 1]).collect::<Vec<u32>>());
        for (c, &rep) in reps[t].iter().enumerate() {
            let q = offsets[t] + c as u32;
            layer_of[q as usize] = t;
            if t > h {
                continue;
            }
            let node = &raw[t][rep];
            outputs[q as usize] = node.outs.clone();
            if t == h {
                for a in 0..n_act {
                    for o in &node.outs[a] {
                        trans.insert((q, a as ActionId, o.obs), offsets[h + 1]);
                    }
                }
            }
            for &(a, o, j) in &node.succ {
                trans.insert((q, a, o), offsets[t + 1] + classes[t + 1][j] as u32);
            }
        }
    }
    let rdp = GroundTruthRdp { alphabet, layers, layer_of, outputs, trans };
    debug_assert_eq!(rdp.validate(), Ok(()));
    Ok(rdp)
}

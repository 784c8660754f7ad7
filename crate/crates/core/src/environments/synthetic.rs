//! Small random RDPs with a known minimal form, for end-to-end recovery
//! tests. Two actions, observations `{x, y}`, rewards `{0, 1}`.
//!
//! Output distributions are drawn from a coarse palette so states tend to
//! be far apart; candidates are rejected until the minimized machine has a
//! prefix distinguishability of at least `mu_floor` on every layer and
//! every reachable transition has occupancy at least `occupancy_floor`.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{alphabet, ground_truth_rdp, EnvError, Environment, GroundTruthRdp, Out};
use crate::oracle;
use crate::trace::Alphabet;

#[derive(Clone, Debug)]
pub struct SyntheticParams {
    pub horizon: usize,
    pub max_states: usize,
    pub mu_floor: f64,
    pub occupancy_floor: f64,
    pub max_tries: usize,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams { horizon: 4, max_states: 3, mu_floor: 0.2, occupancy_floor: 0.01, max_tries: 10_000 }
    }
}

pub fn synthetic_alphabet(horizon: usize) -> Result<Alphabet, EnvError> {
    alphabet(&["a", "b"], &[&["x", "y", "⊥"]], &[0.0, 1.0], &["⊥"], horizon)
}

const OBS_LEVELS: [f64; 2] = [0.15, 0.85];
const REWARD_LEVELS: [f64; 2] = [0.1, 0.9];

fn outputs(rng: &mut impl Rng, terminal: Option<u32>) -> Vec<Out> {
    let pr = REWARD_LEVELS[rng.gen_range(0..2)];
    let rewards = [(0u32, 1.0 - pr), (1u32, pr)];
    let obs: Vec<(u32, f64)> = match terminal {
        Some(t) => vec![(t, 1.0)],
        None => {
            let px = OBS_LEVELS[rng.gen_range(0..2)];
            vec![(0, px), (1, 1.0 - px)]
        }
    };
    let mut out = Vec::new();
    for &(o, po) in &obs {
        for &(r, p) in &rewards {
            out.push(Out { obs: o, reward: r, prob: po * p });
        }
    }
    out
}

/// One random layered machine; not necessarily minimal.
pub fn random_rdp(params: &SyntheticParams, rng: &mut impl Rng) -> Result<GroundTruthRdp, EnvError> {
    let h = params.horizon;
    if h < 1 || params.max_states < 1 {
        return Err(EnvError::InvalidParam("synthetic RDPs need horizon and max_states of at least 1".into()));
    }
    let al = synthetic_alphabet(h)?;
    let term = al.terminal_obs();
    let mut sizes = vec![1usize];
    sizes.push(rng.gen_range(1..=params.max_states.min(2)));
    for _ in 2..=h {
        sizes.push(rng.gen_range(1..=params.max_states));
    }
    sizes.push(1);
    let mut layers = Vec::new();
    let mut layer_of = Vec::new();
    for (t, &k) in sizes.iter().enumerate() {
        let start = layer_of.len() as u32;
        layers.push((start..start + k as u32).collect::<Vec<u32>>());
        layer_of.extend(std::iter::repeat(t).take(k));
    }
    let n_act = al.n_actions() as usize + 1;
    let mut outs = vec![vec![Vec::new(); n_act]; layer_of.len()];
    let mut trans = HashMap::new();
    for t in 0..=h {
        let actions: Vec<u32> = if t == 0 { vec![al.start_action()] } else { (0..al.n_actions()).collect() };
        let mut edges = Vec::new();
        for &q in &layers[t] {
            for &a in &actions {
                let o = outputs(rng, (t == h).then_some(term));
                if t < h {
                    edges.extend(o.iter().filter(|x| x.reward == 0).map(|x| (q, a, x.obs)));
                }
                outs[q as usize][a as usize] = o;
            }
        }
        if t == h {
            continue;
        }
        let next = &layers[t + 1];
        if edges.len() < next.len() {
            return Err(EnvError::InvalidParam("layer has more states than incoming edges".into()));
        }
        // every successor gets at least one edge
        let mut targets: Vec<u32> = next.clone();
        while targets.len() < edges.len() {
            targets.push(next[rng.gen_range(0..next.len())]);
        }
        for i in (1..targets.len()).rev() {
            targets.swap(i, rng.gen_range(0..=i));
        }
        for (e, to) in edges.into_iter().zip(targets) {
            trans.insert(e, to);
        }
    }
    Ok(GroundTruthRdp { alphabet: al, layers, layer_of, outputs: outs, trans })
}

/// A minimal synthetic RDP meeting the floors, with its environment and
/// the number of rejected draws.
pub fn generate(params: &SyntheticParams, seed: u64) -> Result<(Environment, GroundTruthRdp, usize), EnvError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let policy = super::BehaviorPolicy::uniform();
    for tries in 0..params.max_tries {
        let raw = match random_rdp(params, &mut rng) {
            Ok(r) => r,
            Err(EnvError::InvalidParam(_)) if params.horizon >= 1 => continue,
            Err(e) => return Err(e),
        };
        let raw_env = Environment::from_dynamics("synthetic", Arc::new(raw));
        let rdp = ground_truth_rdp(&raw_env)?;
        let occ = oracle::occupancy(&rdp, &policy);
        if occ.values().any(|&m| m > 0.0 && m < params.occupancy_floor) {
            continue;
        }
        let mu = match oracle::distinguishability(&rdp, &policy, oracle::OracleMetric::Prefix) {
            Ok(m) => m,
            Err(_) => continue,
        };
        if mu < params.mu_floor {
            continue;
        }
        let env = Environment::from_dynamics("synthetic", Arc::new(rdp.clone()));
        return Ok((env, rdp, tries));
    }
    Err(EnvError::InvalidParam(format!("no synthetic RDP met the floors in {} draws", params.max_tries)))
}

/// Layer-preserving isomorphism check by lockstep traversal from the
/// initial states, comparing output distributions within `tol`.
pub fn isomorphic(a: &GroundTruthRdp, b: &GroundTruthRdp, tol: f64) -> bool {
    if a.layers.iter().map(Vec::len).ne(b.layers.iter().map(Vec::len)) {
        return false;
    }
    let mut map: HashMap<u32, u32> = HashMap::from([(a.initial(), b.initial())]);
    let mut queue = vec![(a.initial(), b.initial())];
    while let Some((qa, qb)) = queue.pop() {
        let t = a.layer_of[qa as usize];
        if t > a.horizon() {
            continue;
        }
        for act in a.actions_at(t) {
            let (oa, ob) = (a.outputs(qa, act), b.outputs(qb, act));
            let prob = |v: &[Out], o: u32, r: u32| v.iter().filter(|x| x.obs == o && x.reward == r).map(|x| x.prob).sum::<f64>();
            for x in oa.iter().chain(ob) {
                if (prob(oa, x.obs, x.reward) - prob(ob, x.obs, x.reward)).abs() > tol {
                    return false;
                }
            }
            for x in oa {
                match (a.next(qa, act, x.obs), b.next(qb, act, x.obs)) {
                    (None, None) => {}
                    (Some(na), Some(nb)) => match map.get(&na) {
                        Some(&m) if m != nb => return false,
                        Some(_) => {}
                        None => {
                            map.insert(na, nb);
                            queue.push((na, nb));
                        }
                    },
                    _ => return false,
                }
            }
        }
    }
    let mut images: Vec<u32> = map.values().copied().collect();
    images.sort_unstable();
    images.dedup();
    images.len() == map.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_machines_meet_floors() {
        let params = SyntheticParams::default();
        for seed in 0..3 {
            let (env, rdp, _) = generate(&params, seed).unwrap();
            rdp.validate().unwrap();
            assert_eq!(env.horizon(), 4);
            assert!(rdp.layers.iter().all(|l| l.len() <= 3));
            let mu = oracle::distinguishability(&rdp, &super::super::BehaviorPolicy::uniform(), oracle::OracleMetric::Prefix)
                .unwrap();
            assert!(mu >= 0.2);
            // minimal machines are fixed points of minimization
            let again = ground_truth_rdp(&env).unwrap();
            assert!(isomorphic(&rdp, &again, 1e-9));
        }
    }

    #[test]
    fn isomorphism_detects_changes() {
        let (_, rdp, _) = generate(&SyntheticParams::default(), 11).unwrap();
        assert!(isomorphic(&rdp, &rdp, 1e-12));
        let mut other = rdp.clone();
        let q = other.layers[1][0] as usize;
        other.outputs[q][0][0].prob += 0.05;
        other.outputs[q][0][1].prob -= 0.05;
        assert!(!isomorphic(&rdp, &other, 0.01));
        assert!(isomorphic(&rdp, &other, 0.1));
    }
}

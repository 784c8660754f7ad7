//! Exact distinguishability of a known RDP under a behavior policy.
//!
//! Suffix distributions are never materialized for the prefix metric: a
//! branch-and-bound search walks the joint prefix tree of the two states
//! and prunes any subtree whose remaining mass cannot beat the best gap
//! found so far. Language probabilities come from a product of the RDP
//! with a small automaton per pattern.

use std::collections::HashMap;

use thiserror::Error;

use crate::environments::{BehaviorPolicy, GroundTruthRdp};
use crate::languages::{Lang, LangError, LanguageFamily, Sep};
use crate::trace::{Alphabet, Step, StepId};

pub const DEFAULT_NODE_CAP: usize = 50_000_000;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("search exceeded {0} nodes")]
    NodeCap(usize),
    #[error("state {0} is not in layer {1}")]
    WrongLayer(u32, usize),
    #[error(transparent)]
    Lang(#[from] LangError),
}

/// Which distance the oracle evaluates.
#[derive(Clone, Copy, Debug)]
pub enum OracleMetric<'a> {
    Prefix,
    /// `(i, j, k)` family indices; one family is built per layer.
    Language(usize, usize, usize),
    /// A fixed family; its `ell` must match the suffix length of the layer.
    Family(&'a LanguageFamily),
}

/// Number of suffix steps starting at a state of layer `t`.
pub fn suffix_steps(rdp: &GroundTruthRdp, t: usize) -> usize {
    rdp.horizon() + 1 - t
}

fn action_prob(rdp: &GroundTruthRdp, policy: &BehaviorPolicy, t: usize, a: u32) -> f64 {
    if t == 0 {
        1.0
    } else {
        policy.prob(&rdp.alphabet, a)
    }
}

struct Search<'a> {
    rdp: &'a GroundTruthRdp,
    policy: &'a BehaviorPolicy,
    best: f64,
    nodes: usize,
    cap: usize,
}

impl Search<'_> {
    fn walk(&mut self, q1: Option<u32>, q2: Option<u32>, p1: f64, p2: f64, t: usize) -> Result<(), OracleError> {
        let h = self.rdp.horizon();
        for a in self.rdp.actions_at(t) {
            let pa = action_prob(self.rdp, self.policy, t, a);
            if pa == 0.0 {
                continue;
            }
            let mut joint: HashMap<(u32, u32), (f64, f64)> = HashMap::new();
            for (q, side) in [(q1, 0), (q2, 1)] {
                if let Some(q) = q {
                    for o in self.rdp.outputs(q, a) {
                        let e = joint.entry((o.obs, o.reward)).or_default();
                        if side == 0 {
                            e.0 += o.prob;
                        } else {
                            e.1 += o.prob;
                        }
                    }
                }
            }
            let mut kids: Vec<((u32, u32), f64, f64)> =
                joint.into_iter().map(|(k, (x, y))| (k, p1 * pa * x, p2 * pa * y)).collect();
            kids.sort_by(|x, y| y.1.max(y.2).total_cmp(&x.1.max(x.2)).then(x.0.cmp(&y.0)));
            for ((o, _), n1, n2) in kids {
                self.nodes += 1;
                if self.nodes > self.cap {
                    return Err(OracleError::NodeCap(self.cap));
                }
                self.best = self.best.max((n1 - n2).abs());
                if t == h || n1.max(n2) <= self.best {
                    continue;
                }
                let s1 = if n1 > 0.0 { q1.and_then(|q| self.rdp.next(q, a, o)) } else { None };
                let s2 = if n2 > 0.0 { q2.and_then(|q| self.rdp.next(q, a, o)) } else { None };
                // identical continuations scale the current gap, which is already counted
                if s1.is_some() && s1 == s2 {
                    continue;
                }
                self.walk(s1, s2, n1, n2, t + 1)?;
            }
        }
        Ok(())
    }
}

/// `L∞^p` distance between the suffix distributions of two states of the
/// same layer.
pub fn prefix_pair_distance(
    rdp: &GroundTruthRdp,
    policy: &BehaviorPolicy,
    q1: u32,
    q2: u32,
) -> Result<f64, OracleError> {
    prefix_pair_distance_capped(rdp, policy, q1, q2, DEFAULT_NODE_CAP)
}

pub fn prefix_pair_distance_capped(
    rdp: &GroundTruthRdp,
    policy: &BehaviorPolicy,
    q1: u32,
    q2: u32,
    cap: usize,
) -> Result<f64, OracleError> {
    let t = rdp.layer_of[q1 as usize];
    if rdp.layer_of[q2 as usize] != t {
        return Err(OracleError::WrongLayer(q2, t));
    }
    if q1 == q2 || t > rdp.horizon() {
        return Ok(0.0);
    }
    let mut s = Search { rdp, policy, best: 0.0, nodes: 0, cap };
    s.walk(Some(q1), Some(q2), 1.0, 1.0, t)?;
    Ok(s.best)
}

enum Node {
    Leaf(usize),
    Union(Vec<Node>),
    Inter(Vec<Node>),
}

enum LeafKind {
    /// A bare step-level language: the trace is a single matching step.
    Step,
    Pattern(Vec<Sep>),
}

struct Leaf {
    kind: LeafKind,
    /// Membership tables by step id, one per element.
    elems: Vec<Vec<bool>>,
}

/// A language compiled to per-step automata.
struct Compiled {
    leaves: Vec<Leaf>,
    root: Node,
}

impl Compiled {
    fn new(lang: &Lang, alphabet: &Alphabet, all_steps: &[Step]) -> Self {
        let mut leaves = Vec::new();
        let root = Self::compile(lang, alphabet, all_steps, &mut leaves);
        Compiled { leaves, root }
    }

    fn compile(lang: &Lang, alphabet: &Alphabet, all_steps: &[Step], leaves: &mut Vec<Leaf>) -> Node {
        let table = |l: &Lang| all_steps.iter().map(|s| l.matches_step(alphabet, s)).collect::<Vec<bool>>();
        if lang.is_step_level() {
            leaves.push(Leaf { kind: LeafKind::Step, elems: vec![table(lang)] });
            return Node::Leaf(leaves.len() - 1);
        }
        match lang {
            Lang::Concat(p) => {
                leaves.push(Leaf { kind: LeafKind::Pattern(p.seps.clone()), elems: p.elems.iter().map(table).collect() });
                Node::Leaf(leaves.len() - 1)
            }
            Lang::Union(v) => Node::Union(v.iter().map(|l| Self::compile(l, alphabet, all_steps, leaves)).collect()),
            Lang::Inter(v) => Node::Inter(v.iter().map(|l| Self::compile(l, alphabet, all_steps, leaves)).collect()),
            Lang::Atom(_) => unreachable!("atoms are step-level"),
        }
    }

    fn start(&self) -> Vec<u32> {
        self.leaves.iter().map(|_| 1).collect()
    }

    /// Automaton state per leaf: bit `i` set when `i` elements have been
    /// matched and the trace may continue from there. For a bare step
    /// language, bit 0 means "nothing read", bit 1 "one matching step".
    fn advance(&self, masks: &[u32], step: StepId) -> Vec<u32> {
        self.leaves
            .iter()
            .zip(masks)
            .map(|(leaf, &m)| match &leaf.kind {
                LeafKind::Step => u32::from(m == 1 && leaf.elems[0][step as usize]) << 1,
                LeafKind::Pattern(seps) => {
                    let k = leaf.elems.len();
                    let mut out = 0u32;
                    for i in 0..=k {
                        if m >> i & 1 == 0 {
                            continue;
                        }
                        if seps[i] == Sep::Gap {
                            out |= 1 << i;
                        }
                        if i < k && leaf.elems[i][step as usize] {
                            out |= 1 << (i + 1);
                        }
                    }
                    out
                }
            })
            .collect()
    }

    fn accepts(&self, masks: &[u32]) -> bool {
        fn eval(n: &Node, c: &Compiled, masks: &[u32]) -> bool {
            match n {
                Node::Leaf(i) => {
                    let k = match c.leaves[*i].kind {
                        LeafKind::Step => 1,
                        LeafKind::Pattern(_) => c.leaves[*i].elems.len(),
                    };
                    masks[*i] >> k & 1 == 1
                }
                Node::Union(v) => v.iter().any(|x| eval(x, c, masks)),
                Node::Inter(v) => v.iter().all(|x| eval(x, c, masks)),
            }
        }
        eval(&self.root, self, masks)
    }
}

const DONE: u32 = u32::MAX;

/// Probability that the suffix from `q` lies in each language of `family`.
pub fn language_probs(
    rdp: &GroundTruthRdp,
    policy: &BehaviorPolicy,
    family: &LanguageFamily,
    q: u32,
) -> Result<Vec<f64>, OracleError> {
    let t0 = rdp.layer_of[q as usize];
    let steps = suffix_steps(rdp, t0);
    if family.ell != steps * rdp.alphabet.tokens_per_step() {
        return Err(LangError::LengthMismatch { expected: family.ell, found: steps * rdp.alphabet.tokens_per_step() }.into());
    }
    let al = &rdp.alphabet;
    let all_steps: Vec<Step> = (0..al.n_steps()).map(|id| al.decode_step(id)).collect();
    let mut out = Vec::with_capacity(family.len());
    for lang in &family.languages {
        let c = Compiled::new(lang, al, &all_steps);
        let mut dist: HashMap<(u32, Vec<u32>), f64> = HashMap::from([((q, c.start()), 1.0)]);
        for t in t0..=rdp.horizon() {
            let mut next: HashMap<(u32, Vec<u32>), f64> = HashMap::new();
            for ((s, masks), p) in dist {
                for a in rdp.actions_at(t) {
                    let pa = action_prob(rdp, policy, t, a);
                    if pa == 0.0 {
                        continue;
                    }
                    for o in rdp.outputs(s, a) {
                        let m = c.advance(&masks, al.step_id(&Step { action: a, obs: o.obs, reward: o.reward }));
                        if m.iter().all(|&x| x == 0) {
                            continue;
                        }
                        let to = rdp.next(s, a, o.obs).unwrap_or(DONE);
                        *next.entry((to, m)).or_default() += p * pa * o.prob;
                    }
                }
            }
            dist = next;
        }
        out.push(dist.iter().filter(|((_, m), _)| c.accepts(m)).map(|(_, p)| p).sum());
    }
    Ok(out)
}

/// Language distance between two states of the same layer.
pub fn language_pair_distance(
    rdp: &GroundTruthRdp,
    policy: &BehaviorPolicy,
    family: &LanguageFamily,
    q1: u32,
    q2: u32,
) -> Result<f64, OracleError> {
    let a = language_probs(rdp, policy, family, q1)?;
    let b = language_probs(rdp, policy, family, q2)?;
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

/// Family `X_{i,j,k}` over the suffixes of layer `t`.
pub fn layer_family(rdp: &GroundTruthRdp, t: usize, ijk: (usize, usize, usize)) -> Result<LanguageFamily, OracleError> {
    let ell = suffix_steps(rdp, t) * rdp.alphabet.tokens_per_step();
    Ok(LanguageFamily::build(&rdp.alphabet, ijk.0, ijk.1, ijk.2, ell)?)
}

/// Minimum pairwise distance per layer `0..=H+1`; `+∞` for layers with a
/// single state.
pub fn layer_distinguishability(
    rdp: &GroundTruthRdp,
    policy: &BehaviorPolicy,
    metric: OracleMetric<'_>,
) -> Result<Vec<f64>, OracleError> {
    let mut out = Vec::with_capacity(rdp.layers.len());
    for (t, layer) in rdp.layers.iter().enumerate() {
        if layer.len() < 2 {
            out.push(f64::INFINITY);
            continue;
        }
        let mut best = f64::INFINITY;
        match metric {
            OracleMetric::Prefix => {
                for (x, &q1) in layer.iter().enumerate() {
                    for &q2 in &layer[x + 1..] {
                        best = best.min(prefix_pair_distance(rdp, policy, q1, q2)?);
                    }
                }
            }
            OracleMetric::Language(..) | OracleMetric::Family(_) => {
                let built;
                let family = match metric {
                    OracleMetric::Family(f) => f,
                    OracleMetric::Language(i, j, k) => {
                        built = layer_family(rdp, t, (i, j, k))?;
                        &built
                    }
                    OracleMetric::Prefix => unreachable!(),
                };
                let probs: Vec<Vec<f64>> =
                    layer.iter().map(|&q| language_probs(rdp, policy, family, q)).collect::<Result<_, _>>()?;
                for (x, a) in probs.iter().enumerate() {
                    for b in &probs[x + 1..] {
                        let d = a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
                        best = best.min(d);
                    }
                }
            }
        }
        out.push(best);
    }
    Ok(out)
}

/// `min_t μ_t`.
pub fn distinguishability(
    rdp: &GroundTruthRdp,
    policy: &BehaviorPolicy,
    metric: OracleMetric<'_>,
) -> Result<f64, OracleError> {
    Ok(layer_distinguishability(rdp, policy, metric)?.into_iter().fold(f64::INFINITY, f64::min))
}

/// Full suffix distribution from `q`, keyed by step-id traces.
pub fn exact_suffix_distribution(
    rdp: &GroundTruthRdp,
    policy: &BehaviorPolicy,
    q: u32,
) -> HashMap<Vec<StepId>, f64> {
    let al = &rdp.alphabet;
    let t0 = rdp.layer_of[q as usize];
    let mut dist: Vec<(Vec<StepId>, u32, f64)> = vec![(Vec::new(), q, 1.0)];
    for t in t0..=rdp.horizon() {
        let mut next = Vec::new();
        for (trace, s, p) in dist {
            for a in rdp.actions_at(t) {
                let pa = action_prob(rdp, policy, t, a);
                if pa == 0.0 {
                    continue;
                }
                for o in rdp.outputs(s, a) {
                    let mut tr = trace.clone();
                    tr.push(al.step_id(&Step { action: a, obs: o.obs, reward: o.reward }));
                    next.push((tr, rdp.next(s, a, o.obs).unwrap_or(DONE), p * pa * o.prob));
                }
            }
        }
        dist = next;
    }
    let mut out: HashMap<Vec<StepId>, f64> = HashMap::new();
    for (tr, _, p) in dist {
        *out.entry(tr).or_default() += p;
    }
    out
}

/// Probability of reaching each `(q, a, o)` under `policy`, keyed by the
/// transition.
pub fn occupancy(rdp: &GroundTruthRdp, policy: &BehaviorPolicy) -> HashMap<(u32, u32, u32), f64> {
    let mut reach = vec![0.0; rdp.n_states()];
    reach[rdp.initial() as usize] = 1.0;
    let mut out = HashMap::new();
    for (t, layer) in rdp.layers.iter().enumerate().take(rdp.horizon() + 1) {
        for &q in layer {
            for a in rdp.actions_at(t) {
                let pa = action_prob(rdp, policy, t, a);
                for o in rdp.outputs(q, a) {
                    let m = reach[q as usize] * pa * o.prob;
                    *out.entry((q, a, o.obs)).or_insert(0.0) += m;
                    if let Some(to) = rdp.next(q, a, o.obs) {
                        reach[to as usize] += m;
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::synthetic::{generate, SyntheticParams};
    use crate::environments::{ground_truth_rdp, make_env, EnvParams};
    use crate::languages::FamilyMatcher;

    fn brute_prefix(d1: &HashMap<Vec<StepId>, f64>, d2: &HashMap<Vec<StepId>, f64>) -> f64 {
        let mut pre: HashMap<Vec<StepId>, (f64, f64)> = HashMap::new();
        for (side, d) in [(0, d1), (1, d2)] {
            for (tr, &p) in d {
                for u in 1..=tr.len() {
                    let e = pre.entry(tr[..u].to_vec()).or_default();
                    if side == 0 {
                        e.0 += p;
                    } else {
                        e.1 += p;
                    }
                }
            }
        }
        pre.values().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn prefix_search_matches_brute_force() {
        let (_, rdp, _) = generate(&SyntheticParams { mu_floor: 0.0, ..Default::default() }, 3).unwrap();
        let pol = BehaviorPolicy::uniform();
        for layer in &rdp.layers {
            for &q1 in layer {
                for &q2 in layer {
                    let d = prefix_pair_distance(&rdp, &pol, q1, q2).unwrap();
                    let b = brute_prefix(
                        &exact_suffix_distribution(&rdp, &pol, q1),
                        &exact_suffix_distribution(&rdp, &pol, q2),
                    );
                    assert!((d - b).abs() < 1e-12, "{q1} {q2}: {d} vs {b}");
                }
            }
        }
    }

    #[test]
    fn language_probs_match_matcher() {
        let (_, rdp, _) = generate(&SyntheticParams::default(), 5).unwrap();
        let pol = BehaviorPolicy::uniform();
        let t = 2;
        for ijk in [(1, 2, 1), (1, 1, 2)] {
            let fam = layer_family(&rdp, t, ijk).unwrap();
            let m = FamilyMatcher::new(&fam, &rdp.alphabet).unwrap();
            for &q in &rdp.layers[t] {
                let exact = language_probs(&rdp, &pol, &fam, q).unwrap();
                let mut brute = vec![0.0; fam.len()];
                for (tr, p) in exact_suffix_distribution(&rdp, &pol, q) {
                    for (x, hit) in m.membership(&tr).into_iter().enumerate() {
                        if hit {
                            brute[x] += p;
                        }
                    }
                }
                for (x, (a, b)) in exact.iter().zip(&brute).enumerate() {
                    assert!((a - b).abs() < 1e-12, "language {x}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn suffix_distributions_normalized() {
        let (_, rdp, _) = generate(&SyntheticParams::default(), 8).unwrap();
        let pol = BehaviorPolicy::uniform();
        for q in 0..rdp.n_states() as u32 {
            if rdp.layer_of[q as usize] <= rdp.horizon() {
                let s: f64 = exact_suffix_distribution(&rdp, &pol, q).values().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
        let occ = occupancy(&rdp, &pol);
        for t in 1..=rdp.horizon() {
            let s: f64 = occ.iter().filter(|(k, _)| rdp.layer_of[k.0 as usize] == t).map(|(_, v)| v).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tmaze_start_pair_and_singletons() {
        let env = make_env("tmaze", &EnvParams { horizon: Some(6), length: Some(2), ..Default::default() }).unwrap();
        let rdp = ground_truth_rdp(&env).unwrap();
        let pol = BehaviorPolicy::uniform();
        let mu = layer_distinguishability(&rdp, &pol, OracleMetric::Prefix).unwrap();
        assert_eq!(mu[0], f64::INFINITY);
        assert_eq!(mu[rdp.horizon() + 1], f64::INFINITY);
        // layer 1 holds the two goal sides at the start cell; any standing
        // action shows the side with probability 1/4 each
        let d = prefix_pair_distance(&rdp, &pol, rdp.layers[1][0], rdp.layers[1][1]).unwrap();
        assert!((d - 0.25).abs() < 1e-12, "{d}");
        assert!(matches!(
            prefix_pair_distance(&rdp, &pol, rdp.layers[1][0], rdp.layers[2][0]),
            Err(OracleError::WrongLayer(..))
        ));
    }
}

//! Layer-by-layer state merging (AdaCT-H).
//!
//! At layer `t` every episode sits in some state `q ∈ Q_t`; its step `t`
//! extends `q` to the candidate `(q, a_t, o_t)`. Candidates are visited from
//! most to least frequent. The first is promoted; each later one is tested
//! against every promoted state and merged into the closest one that the
//! test cannot tell apart, or promoted when all tests fire. After step `H`
//! every candidate goes to the single final state.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::languages::{FamilyMatcher, LangError, LanguageFamily};
use crate::metrics::{
    cms_threshold, lang_threshold, ln_k, prefix_linf_cms, prefix_threshold, sized_sketched_store, Enumeration,
    LangProfile, MetricError, PrefixProfile, PrefixTrie, SketchedStore, TestOutcome, TesterConfig, TesterKind,
};
use crate::trace::{ActionId, Alphabet, AlphabetSpec, Dataset, ObsId, Step, StepId, TraceError};

pub type StateId = u32;

pub const FORMAT: &str = "rdp-forge-learned-rdp";

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("time budget exceeded while learning layer {0}")]
    BudgetExceeded(usize),
    #[error("malformed history: {0}")]
    History(String),
    #[error("invalid learned RDP: {0}")]
    Format(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<LangError> for LearnError {
    fn from(e: LangError) -> Self {
        LearnError::Metric(MetricError::Lang(e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tester: TesterConfig,
    pub delta: f64,
    pub dataset_fingerprint: String,
    pub n_episodes: usize,
    pub learn_seconds: f64,
}

/// Learned layered automaton. State ids are contiguous and increase with
/// the layer; `support[q]` is the number of episodes routed through `q`.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnedRdp {
    pub alphabet: Alphabet,
    pub layers: Vec<Vec<StateId>>,
    pub layer_of: Vec<usize>,
    pub trans: BTreeMap<(StateId, ActionId, ObsId), StateId>,
    pub support: Vec<u64>,
    pub provenance: Provenance,
}

impl LearnedRdp {
    pub fn initial(&self) -> StateId {
        0
    }

    pub fn n_states(&self) -> usize {
        self.layer_of.len()
    }

    pub fn horizon(&self) -> usize {
        self.alphabet.horizon()
    }

    pub fn final_state(&self) -> StateId {
        self.layers[self.horizon() + 1][0]
    }

    pub fn next(&self, q: StateId, a: ActionId, o: ObsId) -> Option<StateId> {
        self.trans.get(&(q, a, o)).copied()
    }

    /// Folds the transition function over `history` from `q_0`. `Ok(None)`
    /// means some `(q, a, o)` was never seen while learning.
    pub fn map_history(&self, history: &[Step]) -> Result<Option<StateId>, LearnError> {
        let al = &self.alphabet;
        if history.len() > al.horizon() + 1 {
            return Err(LearnError::History(format!(
                "{} steps, at most {} allowed",
                history.len(),
                al.horizon() + 1
            )));
        }
        let mut q = self.initial();
        for (t, s) in history.iter().enumerate() {
            let start = s.action == al.start_action();
            if (t == 0) != start || s.action > al.start_action() {
                return Err(LearnError::History(format!("step {t}: action {} out of place", s.action)));
            }
            if s.obs >= al.n_obs() || s.reward >= al.n_rewards() {
                return Err(LearnError::History(format!("step {t}: symbol out of range")));
            }
            match self.next(q, s.action, s.obs) {
                Some(n) => q = n,
                None => return Ok(None),
            }
        }
        Ok(Some(q))
    }

    /// State sequence `q_0 … q_{H+1}` of a dataset episode, or `None` if the
    /// episode leaves the learned transitions.
    pub fn route(&self, steps: &[Step]) -> Option<Vec<StateId>> {
        let mut out = Vec::with_capacity(steps.len() + 1);
        let mut q = self.initial();
        out.push(q);
        for s in steps {
            q = self.next(q, s.action, s.obs)?;
            out.push(q);
        }
        Some(out)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let al = &self.alphabet;
        let transitions: Vec<TransitionRecord> = self
            .trans
            .iter()
            .map(|(&(from, a, o), &to)| TransitionRecord {
                from,
                action: al.action_symbol(a).to_string(),
                obs: al.obs_symbols(o),
                to,
            })
            .collect();
        let file = RdpFile {
            format: FORMAT.into(),
            alphabet: al.spec().clone(),
            horizon: al.horizon(),
            layers: self.layers.clone(),
            transitions,
            support: self.support.clone(),
            provenance: self.provenance.clone(),
        };
        serde_json::to_value(file).expect("serializable")
    }

    pub fn from_json_str(s: &str) -> Result<Self, LearnError> {
        let file: RdpFile = serde_json::from_str(s).map_err(|e| LearnError::Format(e.to_string()))?;
        Self::from_file(file)
    }

    fn from_file(f: RdpFile) -> Result<Self, LearnError> {
        let bad = |m: String| LearnError::Format(m);
        if f.format != FORMAT {
            return Err(bad(format!("format tag {:?}", f.format)));
        }
        let al = Alphabet::new(f.alphabet, f.horizon).map_err(|e| bad(e.to_string()))?;
        let h = al.horizon();
        if f.layers.len() != h + 2 {
            return Err(bad(format!("{} layers for horizon {h}", f.layers.len())));
        }
        if f.layers[0].len() != 1 || f.layers[h + 1].len() != 1 {
            return Err(bad("first and last layers must be singletons".into()));
        }
        let mut layer_of = Vec::new();
        for (t, layer) in f.layers.iter().enumerate() {
            for &q in layer {
                if q as usize != layer_of.len() {
                    return Err(bad(format!("state ids must be contiguous and layer-ordered (found {q})")));
                }
                layer_of.push(t);
            }
        }
        if f.support.len() != layer_of.len() {
            return Err(bad(format!("{} support entries for {} states", f.support.len(), layer_of.len())));
        }
        let mut trans = BTreeMap::new();
        for r in &f.transitions {
            let (from, to) = (r.from as usize, r.to as usize);
            if from >= layer_of.len() || to >= layer_of.len() || layer_of[to] != layer_of[from] + 1 {
                return Err(bad(format!("transition {} -> {} breaks layering", r.from, r.to)));
            }
            let a = al.action_from_symbol(&r.action).ok_or_else(|| bad(format!("unknown action {:?}", r.action)))?;
            if (layer_of[from] == 0) != (a == al.start_action()) {
                return Err(bad(format!("action {:?} not allowed at layer {}", r.action, layer_of[from])));
            }
            let o = al.obs_from_symbols(&r.obs).map_err(bad)?;
            if trans.insert((r.from, a, o), r.to).is_some() {
                return Err(bad(format!("duplicate transition from {}", r.from)));
            }
        }
        Ok(LearnedRdp { alphabet: al, layers: f.layers, layer_of, trans, support: f.support, provenance: f.provenance })
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<(), LearnError> {
        serde_json::to_writer_pretty(w, &self.to_json()).map_err(std::io::Error::other)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, LearnError> {
        let mut s = String::new();
        r.read_to_string(&mut s)?;
        Self::from_json_str(&s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LearnError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LearnError> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionRecord {
    from: StateId,
    action: String,
    obs: Vec<String>,
    to: StateId,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RdpFile {
    format: String,
    alphabet: AlphabetSpec,
    horizon: usize,
    layers: Vec<Vec<StateId>>,
    transitions: Vec<TransitionRecord>,
    support: Vec<u64>,
    provenance: Provenance,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    /// Index of the layer being built.
    pub layer: usize,
    pub candidates: usize,
    pub states: usize,
    pub merges: usize,
    pub tests: usize,
    pub min_candidate: u64,
    pub max_candidate: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LearnStats {
    pub layers: Vec<LayerStats>,
    pub total_states: usize,
    pub total_merges: usize,
    pub total_tests: usize,
    pub seconds: f64,
}

/// One `TestDistinct` call.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub layer: usize,
    pub parent: StateId,
    pub action: ActionId,
    pub obs: ObsId,
    pub against: StateId,
    pub n_candidate: u64,
    pub n_state: u64,
    #[serde(flatten)]
    pub outcome: TestOutcome,
}

#[derive(Clone, Debug, Default)]
pub struct LearnOptions {
    pub deadline: Option<Instant>,
    pub record_tests: bool,
}

pub struct LearnOutput {
    pub rdp: LearnedRdp,
    pub stats: LearnStats,
    pub tests: Vec<TestRecord>,
}

/// Learns with default options.
pub fn adact_h(dataset: &Dataset, tester: &TesterConfig) -> Result<LearnedRdp, LearnError> {
    Ok(learn(dataset, tester, &LearnOptions::default())?.rdp)
}

enum Profile {
    Prefix(PrefixProfile),
    Lang(LangProfile),
    Cms(SketchedStore),
}

impl Profile {
    fn n(&self) -> u64 {
        match self {
            Profile::Prefix(p) => p.n,
            Profile::Lang(p) => p.n,
            Profile::Cms(s) => s.n,
        }
    }

    fn merge_from(&mut self, other: &Profile) -> Result<(), MetricError> {
        match (self, other) {
            (Profile::Prefix(a), Profile::Prefix(b)) => a.merge_from(b),
            (Profile::Lang(a), Profile::Lang(b)) => a.merge_from(b),
            (Profile::Cms(a), Profile::Cms(b)) => a.merge_from(b)?,
            _ => return Err(MetricError::Mismatch("store kinds differ".into())),
        }
        Ok(())
    }
}

/// Everything a layer's tests share.
struct LayerTester<'a> {
    kind: TesterKind,
    delta: f64,
    ln_k: f64,
    family_size: usize,
    vocab: Vec<Vec<StepId>>,
    depth_cap: Option<usize>,
    deadline: Option<Instant>,
    _alphabet: &'a Alphabet,
}

impl LayerTester<'_> {
    fn test(&self, a: &Profile, b: &Profile) -> Result<TestOutcome, MetricError> {
        let n = a.n().min(b.n());
        match (a, b) {
            (Profile::Prefix(x), Profile::Prefix(y)) => {
                Ok(TestOutcome::new(x.linf(y)?, prefix_threshold(self.ln_k, self.delta, n)))
            }
            (Profile::Lang(x), Profile::Lang(y)) => {
                Ok(TestOutcome::new(x.linf(y)?, lang_threshold(self.family_size, self.delta, n)))
            }
            (Profile::Cms(x), Profile::Cms(y)) => {
                let opts = Enumeration { depth_cap: self.depth_cap, deadline: self.deadline, vocab: None };
                let d = prefix_linf_cms(x, y, &self.vocab, opts)?;
                Ok(TestOutcome::new(d, cms_threshold(self.ln_k, self.delta, n)))
            }
            _ => Err(MetricError::Mismatch(format!("unexpected store for the {} tester", self.kind.short_name()))),
        }
    }
}

fn layer_seed(seed: u64, t: usize) -> u64 {
    seed ^ (t as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Builds one profile per candidate from the suffixes (steps `t+1..=H`) of
/// its episodes.
fn build_profiles(
    tester: &TesterConfig,
    al: &Alphabet,
    t: usize,
    n_total: u64,
    ids: &[StepId],
    groups: &[Vec<u32>],
    family_cache: &mut HashMap<usize, (LanguageFamily, FamilyMatcher)>,
) -> Result<(Vec<Profile>, usize, Vec<Vec<StepId>>), LearnError> {
    let h = al.horizon();
    let steps = h - t;
    let stride = h + 1;
    let suffix = |i: u32| &ids[i as usize * stride + t + 1..(i as usize + 1) * stride];
    match tester.kind {
        TesterKind::PrefixExact => {
            let mut trie = PrefixTrie::new();
            let mut out = Vec::with_capacity(groups.len());
            for g in groups {
                let paths: Vec<Vec<u32>> = g.iter().map(|&i| trie.insert(suffix(i))).collect();
                out.push(Profile::Prefix(PrefixProfile::from_paths(paths.iter().map(|p| &p[..]))));
            }
            Ok((out, 0, Vec::new()))
        }
        TesterKind::Language => {
            let (i, j, k) = tester.family.ok_or_else(|| MetricError::Config("language tester without family".into()))?;
            if !family_cache.contains_key(&steps) {
                let fam = LanguageFamily::build(al, i, j, k, steps * al.tokens_per_step())?;
                let m = FamilyMatcher::new(&fam, al)?;
                family_cache.insert(steps, (fam, m));
            }
            let (fam, m) = &family_cache[&steps];
            let mut out = Vec::with_capacity(groups.len());
            for g in groups {
                let mut uniq: HashMap<&[StepId], u64> = HashMap::new();
                for &i in g {
                    *uniq.entry(suffix(i)).or_default() += 1;
                }
                let mut p = LangProfile::empty(m.len());
                for (tr, c) in uniq {
                    p.add_trace(m, tr, c);
                }
                out.push(Profile::Lang(p));
            }
            Ok((out, fam.len(), Vec::new()))
        }
        TesterKind::PrefixCms => {
            let proto =
                sized_sketched_store(al, steps, tester.delta, n_total, &tester.cms, layer_seed(tester.seed, t))?;
            let mut vocab = vec![Vec::new(); steps];
            let mut out = Vec::with_capacity(groups.len());
            for g in groups {
                let mut s = proto.empty_like();
                for &i in g {
                    let sx = suffix(i);
                    s.insert(sx, 1);
                    for (u, &id) in sx.iter().enumerate() {
                        vocab[u].push(id);
                    }
                }
                out.push(Profile::Cms(s));
            }
            for v in &mut vocab {
                v.sort_unstable();
                v.dedup();
            }
            Ok((out, 0, vocab))
        }
    }
}

pub fn learn(dataset: &Dataset, tester: &TesterConfig, opts: &LearnOptions) -> Result<LearnOutput, LearnError> {
    let started = Instant::now();
    tester.validate()?;
    if dataset.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let al = &dataset.alphabet;
    let h = al.horizon();
    let n_total = dataset.len() as u64;
    // step ids of all episodes, flattened with stride H + 1
    for (i, e) in dataset.episodes.iter().enumerate() {
        al.validate_episode(e, i)?;
    }
    let ids: Vec<StepId> = dataset.episodes.iter().flat_map(|e| e.steps.iter().map(|s| al.step_id(s))).collect();

    let mut layers: Vec<Vec<StateId>> = vec![vec![0]];
    let mut support: Vec<u64> = vec![n_total];
    let mut trans = BTreeMap::new();
    let mut cur: Vec<StateId> = vec![0; dataset.len()];
    let mut stats = LearnStats::default();
    let mut records = Vec::new();
    let mut family_cache = HashMap::new();
    let mut next_id: StateId = 1;

    for t in 0..=h {
        let mut by_key: BTreeMap<(StateId, ActionId, ObsId), Vec<u32>> = BTreeMap::new();
        for (i, e) in dataset.episodes.iter().enumerate() {
            let s = e.steps[t];
            by_key.entry((cur[i], s.action, s.obs)).or_default().push(i as u32);
        }
        let mut cands: Vec<((StateId, ActionId, ObsId), Vec<u32>)> = by_key.into_iter().collect();
        // stable sort keeps the lexicographic key order among equal counts
        cands.sort_by(|a, b| b.1.len().cmp(&a.1.len()));
        let mut ls = LayerStats {
            layer: t + 1,
            candidates: cands.len(),
            min_candidate: cands.iter().map(|c| c.1.len() as u64).min().unwrap_or(0),
            max_candidate: cands.iter().map(|c| c.1.len() as u64).max().unwrap_or(0),
            ..Default::default()
        };

        if t == h {
            let fin = next_id;
            next_id += 1;
            for (key, eps) in &cands {
                trans.insert(*key, fin);
                for &i in eps {
                    cur[i as usize] = fin;
                }
            }
            ls.states = 1;
            ls.merges = cands.len().saturating_sub(1);
            layers.push(vec![fin]);
            support.push(n_total);
            stats.layers.push(ls);
            break;
        }

        let groups: Vec<Vec<u32>> = cands.iter().map(|c| c.1.clone()).collect();
        let (mut profiles, family_size, vocab) =
            build_profiles(tester, al, t, n_total, &ids, &groups, &mut family_cache)?;
        let lt = LayerTester {
            kind: tester.kind,
            delta: tester.delta,
            ln_k: ln_k(al, h - t),
            family_size,
            vocab,
            depth_cap: tester.cms.depth_cap,
            deadline: opts.deadline,
            _alphabet: al,
        };

        // promoted: (state id, index of its profile)
        let mut promoted: Vec<(StateId, usize)> = Vec::new();
        let mut assigned: Vec<StateId> = Vec::with_capacity(cands.len());
        for (ci, (key, _)) in cands.iter().enumerate() {
            if let Some(dl) = opts.deadline {
                if Instant::now() > dl {
                    return Err(LearnError::BudgetExceeded(t + 1));
                }
            }
            let mut best: Option<(f64, usize)> = None;
            for (pi, &(sid, prof)) in promoted.iter().enumerate() {
                let out = lt.test(&profiles[ci], &profiles[prof]).map_err(|e| match e {
                    MetricError::BudgetExceeded => LearnError::BudgetExceeded(t + 1),
                    e => e.into(),
                })?;
                ls.tests += 1;
                if opts.record_tests {
                    records.push(TestRecord {
                        layer: t + 1,
                        parent: key.0,
                        action: key.1,
                        obs: key.2,
                        against: sid,
                        n_candidate: profiles[ci].n(),
                        n_state: profiles[prof].n(),
                        outcome: out.clone(),
                    });
                }
                if !out.distinct && best.is_none_or(|(d, _)| out.distance < d) {
                    best = Some((out.distance, pi));
                }
            }
            match best {
                None => {
                    promoted.push((next_id, ci));
                    assigned.push(next_id);
                    next_id += 1;
                }
                Some((_, pi)) => {
                    let (sid, prof) = promoted[pi];
                    let (lo, hi) = profiles.split_at_mut(ci);
                    lo[prof].merge_from(&hi[0])?;
                    assigned.push(sid);
                    ls.merges += 1;
                }
            }
        }
        let base = promoted[0].0;
        let mut layer_support = vec![0u64; promoted.len()];
        for ((key, eps), &sid) in cands.iter().zip(&assigned) {
            trans.insert(*key, sid);
            layer_support[(sid - base) as usize] += eps.len() as u64;
            for &i in eps {
                cur[i as usize] = sid;
            }
        }
        layers.push(promoted.iter().map(|p| p.0).collect());
        support.extend(layer_support);
        ls.states = promoted.len();
        log::debug!(
            "layer {}: {} candidates, {} states, {} merges, {} tests",
            t + 1,
            ls.candidates,
            ls.states,
            ls.merges,
            ls.tests
        );
        stats.layers.push(ls);
    }

    let layer_of = layers.iter().enumerate().flat_map(|(t, l)| l.iter().map(move |_| t)).collect();
    stats.total_states = next_id as usize;
    stats.total_merges = stats.layers.iter().map(|l| l.merges).sum();
    stats.total_tests = stats.layers.iter().map(|l| l.tests).sum();
    stats.seconds = started.elapsed().as_secs_f64();
    let provenance = Provenance {
        tester: tester.clone(),
        delta: tester.delta,
        dataset_fingerprint: dataset.fingerprint(),
        n_episodes: dataset.len(),
        learn_seconds: stats.seconds,
    };
    let rdp = LearnedRdp { alphabet: al.clone(), layers, layer_of, trans, support, provenance };
    Ok(LearnOutput { rdp, stats, tests: records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{generate_dataset, make_env, BehaviorPolicy, EnvParams};
    use crate::trace::{Episode, Metadata};

    fn corridor(n: usize, seed: u64) -> Dataset {
        let env = make_env("corridor", &EnvParams::default()).unwrap();
        generate_dataset(&env, &BehaviorPolicy::uniform(), n, seed).unwrap()
    }

    fn check_invariants(rdp: &LearnedRdp, data: &Dataset) {
        assert_eq!(rdp.layers.len(), rdp.horizon() + 2);
        assert_eq!(rdp.layers[0], vec![0]);
        for (&(q, _, _), &to) in &rdp.trans {
            assert_eq!(rdp.layer_of[to as usize], rdp.layer_of[q as usize] + 1);
        }
        for layer in &rdp.layers {
            let mass: u64 = layer.iter().map(|&q| rdp.support[q as usize]).sum();
            assert_eq!(mass, data.len() as u64);
        }
        for e in &data.episodes {
            let route = rdp.route(&e.steps).expect("dataset episodes are covered");
            assert_eq!(route.len(), rdp.horizon() + 2);
        }
    }

    #[test]
    fn identical_episodes_give_a_chain() {
        let d = corridor(1, 3);
        let ep = d.episodes[0].clone();
        let data = Dataset::new(d.alphabet.clone(), vec![ep; 50], Metadata::default()).unwrap();
        for tester in [TesterConfig::prefix(0.05), TesterConfig::cms(0.05), TesterConfig::language(0.05, (1, 1, 1))] {
            let out = learn(&data, &tester, &LearnOptions::default()).unwrap();
            assert_eq!(out.rdp.n_states(), data.horizon() + 2);
            assert_eq!(out.stats.total_merges, 0);
            assert_eq!(out.stats.total_tests, 0);
            check_invariants(&out.rdp, &data);
        }
    }

    #[test]
    fn empty_dataset_and_bad_config_rejected() {
        let d = corridor(1, 3);
        let empty = Dataset::new(d.alphabet.clone(), vec![], Metadata::default()).unwrap();
        assert!(matches!(adact_h(&empty, &TesterConfig::prefix(0.1)), Err(LearnError::EmptyDataset)));
        let mut bad = TesterConfig::prefix(0.1);
        bad.store = Some(crate::metrics::StoreKind::Sketch);
        assert!(matches!(adact_h(&d, &bad), Err(LearnError::Metric(MetricError::Config(_)))));
        assert!(adact_h(&d, &TesterConfig::prefix(1.5)).is_err());
    }

    #[test]
    fn corridor_language_recovers_eleven_states() {
        let data = corridor(10_000, 1);
        let out = learn(&data, &TesterConfig::language(0.05, (1, 1, 1)), &LearnOptions { record_tests: true, ..Default::default() })
            .unwrap();
        check_invariants(&out.rdp, &data);
        assert_eq!(out.rdp.n_states(), 11, "{:?}", out.rdp.layers);
        assert_eq!(out.stats.total_states, 11);
        assert_eq!(out.stats.layers.iter().map(|l| l.states).sum::<usize>() + 1, 11);
        assert_eq!(out.tests.len(), out.stats.total_tests);
    }

    #[test]
    fn map_history_cases() {
        let data = corridor(2_000, 2);
        let rdp = adact_h(&data, &TesterConfig::prefix(0.05)).unwrap();
        assert_eq!(rdp.map_history(&[]).unwrap(), Some(0));
        for e in data.episodes.iter().take(20) {
            for u in 0..=e.steps.len() {
                assert!(rdp.map_history(&e.steps[..u]).unwrap().is_some());
            }
        }
        let al = &data.alphabet;
        // a real action at step 0 is malformed
        let mut h = data.episodes[0].steps[..2].to_vec();
        h[0].action = 0;
        assert!(rdp.map_history(&h).is_err());
        // the terminal observation mid-episode was never seen
        let mut h = data.episodes[0].steps[..3].to_vec();
        h[1].obs = al.terminal_obs();
        assert_eq!(rdp.map_history(&h).unwrap(), None);
        let too_long: Vec<Step> = data.episodes[0].steps.iter().chain(&data.episodes[0].steps[..1]).copied().collect();
        assert!(rdp.map_history(&too_long).is_err());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let data = corridor(1_000, 4);
        let rdp = adact_h(&data, &TesterConfig::cms(0.05)).unwrap();
        let text = serde_json::to_string(&rdp.to_json()).unwrap();
        let back = LearnedRdp::from_json_str(&text).unwrap();
        assert_eq!(back, rdp);
        let mut v = rdp.to_json();
        v["layers"][1] = serde_json::json!([7]);
        assert!(LearnedRdp::from_json_str(&v.to_string()).is_err());
        let mut v = rdp.to_json();
        v["transitions"][0]["action"] = serde_json::json!("a0");
        assert!(LearnedRdp::from_json_str(&v.to_string()).is_err());
        let mut v = rdp.to_json();
        v["extra"] = serde_json::json!(1);
        assert!(LearnedRdp::from_json_str(&v.to_string()).is_err());
    }

    #[test]
    fn deterministic_across_runs() {
        let data = corridor(3_000, 9);
        for tester in [TesterConfig::prefix(0.05), TesterConfig::cms(0.05)] {
            let a = adact_h(&data, &tester).unwrap();
            let b = adact_h(&data, &tester).unwrap();
            assert_eq!(a.layers, b.layers);
            assert_eq!(a.trans, b.trans);
        }
    }

    #[test]
    fn deadline_reports_budget() {
        let data = corridor(500, 5);
        let opts = LearnOptions { deadline: Some(Instant::now()), record_tests: false };
        let err = learn(&data, &TesterConfig::prefix(0.05), &opts).err().unwrap();
        assert!(matches!(err, LearnError::BudgetExceeded(_)));
    }

    #[test]
    fn unseen_episode_has_no_route() {
        let data = corridor(200, 6);
        let rdp = adact_h(&data, &TesterConfig::prefix(0.05)).unwrap();
        let mut e: Episode = data.episodes[0].clone();
        e.steps[2].obs = data.alphabet.terminal_obs();
        assert!(rdp.route(&e.steps).is_none());
    }
}

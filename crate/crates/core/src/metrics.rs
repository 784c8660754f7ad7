//! Distances between empirical suffix distributions and the three
//! distinguishability tests.
//!
//! Stores come in two flavors: exact multisets of suffixes and sketched
//! prefix counts. For speed the learner works on derived *profiles*
//! (prefix counts keyed by trie node, per-language counts, per-length
//! sketches), which merge by addition.

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cms::{self, KeyHasher, Sketch, SketchError};
use crate::languages::{FamilyMatcher, LangError, LanguageFamily};
use crate::trace::{Alphabet, StepId};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("distance over an empty store is undefined")]
    EmptyStore,
    #[error("stores disagree: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error(transparent)]
    Lang(#[from] LangError),
    #[error("time budget exceeded")]
    BudgetExceeded,
    #[error("configuration error: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TesterKind {
    PrefixExact,
    PrefixCms,
    Language,
}

impl TesterKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "prefix" | "prefix_exact" => Some(TesterKind::PrefixExact),
            "cms" | "prefix_cms" => Some(TesterKind::PrefixCms),
            "lang" | "language" => Some(TesterKind::Language),
            _ => None,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            TesterKind::PrefixExact => "prefix",
            TesterKind::PrefixCms => "cms",
            TesterKind::Language => "lang",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoreKind {
    Exact,
    Sketch,
}

/// Optional overrides of the sketch sizing derived from `δ` and `N`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CmsParams {
    pub delta_c: Option<f64>,
    pub epsilon: Option<f64>,
    /// Longest prefix (in steps) enumerated by the sketched distance.
    pub depth_cap: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TesterConfig {
    pub kind: TesterKind,
    pub delta: f64,
    #[serde(default)]
    pub family: Option<(usize, usize, usize)>,
    #[serde(default)]
    pub cms: CmsParams,
    #[serde(default)]
    pub store: Option<StoreKind>,
    #[serde(default)]
    pub seed: u64,
}

impl TesterConfig {
    pub fn new(kind: TesterKind, delta: f64) -> Self {
        let family = (kind == TesterKind::Language).then_some((1, 1, 1));
        TesterConfig { kind, delta, family, cms: CmsParams::default(), store: None, seed: 0 }
    }

    pub fn prefix(delta: f64) -> Self {
        Self::new(TesterKind::PrefixExact, delta)
    }

    pub fn cms(delta: f64) -> Self {
        Self::new(TesterKind::PrefixCms, delta)
    }

    pub fn language(delta: f64, family: (usize, usize, usize)) -> Self {
        TesterConfig { family: Some(family), ..Self::new(TesterKind::Language, delta) }
    }

    pub fn store_kind(&self) -> StoreKind {
        match self.kind {
            TesterKind::PrefixCms => StoreKind::Sketch,
            _ => StoreKind::Exact,
        }
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(MetricError::Config(format!("delta = {} not in (0, 1)", self.delta)));
        }
        match (self.kind, self.store) {
            (TesterKind::Language, Some(StoreKind::Sketch)) => {
                return Err(MetricError::Config(
                    "the language tester needs exact suffix stores; sketched stores cannot back overlapping languages"
                        .into(),
                ))
            }
            (TesterKind::PrefixCms, Some(StoreKind::Exact)) => {
                return Err(MetricError::Config("the cms tester requires sketched stores".into()))
            }
            (TesterKind::PrefixExact, Some(StoreKind::Sketch)) => {
                return Err(MetricError::Config("the exact prefix tester requires exact stores".into()))
            }
            _ => {}
        }
        if self.kind == TesterKind::Language && self.family.is_none() {
            return Err(MetricError::Config("the language tester needs a family i,j,k".into()));
        }
        Ok(())
    }
}

/// `ln K` with `K = (A·R·O)^{steps}`.
pub fn ln_k(alphabet: &Alphabet, steps: usize) -> f64 {
    steps as f64 * alphabet.aro().ln()
}

/// `√(2 ln(8K/δ) / n)`.
pub fn prefix_threshold(ln_k: f64, delta: f64, n_min: u64) -> f64 {
    (2.0 * (8f64.ln() + ln_k - delta.ln()) / n_min as f64).sqrt()
}

/// `√(8 ln(16K/δ) / n)`.
pub fn cms_threshold(ln_k: f64, delta: f64, n_min: u64) -> f64 {
    (8.0 * (16f64.ln() + ln_k - delta.ln()) / n_min as f64).sqrt()
}

/// `√(2 ln(4|X|/δ) / n)`.
pub fn lang_threshold(family_size: usize, delta: f64, n_min: u64) -> f64 {
    (2.0 * (4.0 * family_size as f64 / delta).ln() / n_min as f64).sqrt()
}

/// Sketch parameters for suffixes of `steps` steps: `δ_c = δ/(8K)` and
/// `ε = √(ln(2/δ_c)/(2N))`. Returned as `(ln(1/δ_c), ε)`.
pub fn cms_sizing(alphabet: &Alphabet, steps: usize, delta: f64, n_total: u64, params: &CmsParams) -> (f64, f64) {
    let ln_inv = match params.delta_c {
        Some(dc) => -dc.ln(),
        None => 8f64.ln() + ln_k(alphabet, steps) - delta.ln(),
    };
    let eps = params
        .epsilon
        .unwrap_or_else(|| ((2f64.ln() + ln_inv) / (2.0 * n_total.max(1) as f64)).sqrt());
    (ln_inv, eps)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub distance: f64,
    pub threshold: f64,
    pub distinct: bool,
}

impl TestOutcome {
    /// Ties count as distinct.
    pub fn new(distance: f64, threshold: f64) -> Self {
        TestOutcome { distance, threshold, distinct: distance >= threshold }
    }
}

/// Exact multiset of suffixes (interned step ids), all of equal length.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExactStore {
    pub steps: usize,
    pub n: u64,
    pub traces: HashMap<Vec<StepId>, u64>,
}

impl ExactStore {
    pub fn new(steps: usize) -> Self {
        ExactStore { steps, n: 0, traces: HashMap::new() }
    }

    pub fn from_traces<'a>(steps: usize, traces: impl IntoIterator<Item = &'a [StepId]>) -> Self {
        let mut s = Self::new(steps);
        for t in traces {
            s.insert(t, 1);
        }
        s
    }

    pub fn insert(&mut self, trace: &[StepId], c: u64) {
        assert_eq!(trace.len(), self.steps, "suffix length");
        *self.traces.entry(trace.to_vec()).or_default() += c;
        self.n += c;
    }

    pub fn merge_from(&mut self, other: &ExactStore) {
        assert_eq!(self.steps, other.steps);
        for (t, c) in &other.traces {
            *self.traces.entry(t.clone()).or_default() += c;
        }
        self.n += other.n;
    }
}

/// Sketched prefix counts: one sketch per prefix length `1..=steps`, so
/// each sketch sees exactly `n` increments.
#[derive(Clone, Debug, PartialEq)]
pub struct SketchedStore {
    pub steps: usize,
    pub n: u64,
    pub sketches: Vec<Sketch>,
}

impl SketchedStore {
    /// Empty store whose sketches share hash functions with every other
    /// store created from the same `(dims, seed)`.
    pub fn new(steps: usize, depth: usize, width: usize, seed: u64) -> Self {
        let proto = Sketch::with_dimensions(depth, width, seed);
        SketchedStore { steps, n: 0, sketches: vec![proto; steps] }
    }

    pub fn empty_like(&self) -> Self {
        SketchedStore { steps: self.steps, n: 0, sketches: self.sketches.iter().map(Sketch::empty_like).collect() }
    }

    pub fn insert(&mut self, trace: &[StepId], c: u64) {
        assert_eq!(trace.len(), self.steps, "suffix length");
        let mut h = KeyHasher::new();
        for (u, &s) in trace.iter().enumerate() {
            h.push(s);
            self.sketches[u].update_fp(h.finish(), c);
        }
        self.n += c;
    }

    pub fn merge_from(&mut self, other: &SketchedStore) -> Result<(), MetricError> {
        if self.steps != other.steps {
            return Err(MetricError::Mismatch(format!("{} vs {} steps", self.steps, other.steps)));
        }
        for (a, b) in self.sketches.iter_mut().zip(&other.sketches) {
            a.merge_from(b)?;
        }
        self.n += other.n;
        Ok(())
    }

    pub fn query(&self, prefix: &[StepId]) -> u64 {
        if prefix.is_empty() {
            return self.n;
        }
        self.sketches[prefix.len() - 1].query(prefix)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SuffixStore {
    Exact(ExactStore),
    Sketched(SketchedStore),
}

impl SuffixStore {
    pub fn n(&self) -> u64 {
        match self {
            SuffixStore::Exact(s) => s.n,
            SuffixStore::Sketched(s) => s.n,
        }
    }
}

/// Interns trace prefixes so a prefix profile is a sparse count vector.
#[derive(Clone, Debug, Default)]
pub struct PrefixTrie {
    children: HashMap<(u32, StepId), u32>,
    nodes: u32,
}

impl PrefixTrie {
    pub fn new() -> Self {
        PrefixTrie { children: HashMap::new(), nodes: 1 }
    }

    /// Node ids of prefixes of lengths `1..=trace.len()`.
    pub fn insert(&mut self, trace: &[StepId]) -> Vec<u32> {
        let mut cur = 0u32;
        let mut path = Vec::with_capacity(trace.len());
        for &s in trace {
            let next = self.nodes;
            cur = *self.children.entry((cur, s)).or_insert(next);
            if cur == next {
                self.nodes += 1;
            }
            path.push(cur);
        }
        path
    }

    pub fn len(&self) -> usize {
        self.nodes as usize
    }

    pub fn is_empty(&self) -> bool {
        self.nodes <= 1
    }
}

/// Counts of every occurring prefix, sorted by trie node.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PrefixProfile {
    pub n: u64,
    pub counts: Vec<(u32, u64)>,
}

impl PrefixProfile {
    pub fn from_paths<'a>(paths: impl IntoIterator<Item = &'a [u32]>) -> Self {
        let mut map: HashMap<u32, u64> = HashMap::new();
        let mut n = 0;
        for p in paths {
            n += 1;
            for &node in p {
                *map.entry(node).or_default() += 1;
            }
        }
        let mut counts: Vec<(u32, u64)> = map.into_iter().collect();
        counts.sort_unstable();
        PrefixProfile { n, counts }
    }

    pub fn merge_from(&mut self, other: &PrefixProfile) {
        let mut out = Vec::with_capacity(self.counts.len() + other.counts.len());
        let (a, b) = (&self.counts, &other.counts);
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            if j == b.len() || (i < a.len() && a[i].0 < b[j].0) {
                out.push(a[i]);
                i += 1;
            } else if i == a.len() || b[j].0 < a[i].0 {
                out.push(b[j]);
                j += 1;
            } else {
                out.push((a[i].0, a[i].1 + b[j].1));
                i += 1;
                j += 1;
            }
        }
        self.counts = out;
        self.n += other.n;
    }

    /// `max_e |p̂₁(e*) − p̂₂(e*)|` over prefixes occurring in either profile.
    pub fn linf(&self, other: &PrefixProfile) -> Result<f64, MetricError> {
        if self.n == 0 || other.n == 0 {
            return Err(MetricError::EmptyStore);
        }
        let (n1, n2) = (self.n as f64, other.n as f64);
        let (a, b) = (&self.counts, &other.counts);
        let (mut i, mut j) = (0, 0);
        let mut best = 0f64;
        while i < a.len() || j < b.len() {
            let d = if j == b.len() || (i < a.len() && a[i].0 < b[j].0) {
                i += 1;
                a[i - 1].1 as f64 / n1
            } else if i == a.len() || b[j].0 < a[i].0 {
                j += 1;
                b[j - 1].1 as f64 / n2
            } else {
                i += 1;
                j += 1;
                (a[i - 1].1 as f64 / n1 - b[j - 1].1 as f64 / n2).abs()
            };
            best = best.max(d);
        }
        Ok(best)
    }
}

/// Per-language member counts.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LangProfile {
    pub n: u64,
    pub counts: Vec<u64>,
}

impl LangProfile {
    pub fn empty(size: usize) -> Self {
        LangProfile { n: 0, counts: vec![0; size] }
    }

    pub fn add_trace(&mut self, matcher: &FamilyMatcher, trace: &[StepId], c: u64) {
        matcher.accumulate(trace, c, &mut self.counts);
        self.n += c;
    }

    pub fn merge_from(&mut self, other: &LangProfile) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.n += other.n;
    }

    pub fn linf(&self, other: &LangProfile) -> Result<f64, MetricError> {
        if self.n == 0 || other.n == 0 {
            return Err(MetricError::EmptyStore);
        }
        if self.counts.len() != other.counts.len() {
            return Err(MetricError::Mismatch("family sizes differ".into()));
        }
        let (n1, n2) = (self.n as f64, other.n as f64);
        Ok(self
            .counts
            .iter()
            .zip(&other.counts)
            .map(|(&a, &b)| (a as f64 / n1 - b as f64 / n2).abs())
            .fold(0.0, f64::max))
    }
}

fn exact_prefix_profiles(z1: &ExactStore, z2: &ExactStore) -> (PrefixProfile, PrefixProfile) {
    let mut trie = PrefixTrie::new();
    let mut profile = |z: &ExactStore| {
        let mut p = PrefixProfile::default();
        for (t, &c) in &z.traces {
            let path = trie.insert(t);
            let mut q = PrefixProfile::from_paths([&path[..]]);
            q.n = c;
            q.counts.iter_mut().for_each(|x| x.1 = c);
            p.merge_from(&q);
        }
        p
    };
    let a = profile(z1);
    let b = profile(z2);
    (a, b)
}

pub fn prefix_linf(z1: &ExactStore, z2: &ExactStore) -> Result<f64, MetricError> {
    if z1.steps != z2.steps {
        return Err(MetricError::Mismatch(format!("{} vs {} steps", z1.steps, z2.steps)));
    }
    let (a, b) = exact_prefix_profiles(z1, z2);
    a.linf(&b)
}

/// All real-action steps at every position: the syntactic prefix space.
pub fn syntactic_vocab(alphabet: &Alphabet, steps: usize) -> Vec<Vec<StepId>> {
    let all: Vec<StepId> = (0..alphabet.n_steps())
        .filter(|&id| alphabet.decode_step(id).action < alphabet.n_actions())
        .collect();
    vec![all; steps]
}

/// Enumeration options for the sketched distance.
#[derive(Clone, Copy, Debug, Default)]
pub struct Enumeration<'a> {
    pub depth_cap: Option<usize>,
    pub deadline: Option<Instant>,
    pub vocab: Option<&'a [Vec<StepId>]>,
}

/// `max_e |q̃₁(e)/n₁ − q̃₂(e)/n₂|` over every prefix built from the
/// per-position vocabulary, by depth-first enumeration.
pub fn prefix_linf_cms(
    s1: &SketchedStore,
    s2: &SketchedStore,
    vocab: &[Vec<StepId>],
    opts: Enumeration<'_>,
) -> Result<f64, MetricError> {
    if s1.n == 0 || s2.n == 0 {
        return Err(MetricError::EmptyStore);
    }
    if s1.steps != s2.steps {
        return Err(MetricError::Mismatch(format!("{} vs {} steps", s1.steps, s2.steps)));
    }
    for (a, b) in s1.sketches.iter().zip(&s2.sketches) {
        a.compatible(b)?;
    }
    let depth = opts.depth_cap.unwrap_or(usize::MAX).min(s1.steps).min(vocab.len());
    let mut best = 0f64;
    let mut visited = 0u64;
    let (n1, n2) = (s1.n as f64, s2.n as f64);
    // explicit stack of (depth, hasher)
    let mut stack: Vec<(usize, KeyHasher)> = vec![(0, KeyHasher::new())];
    while let Some((u, h)) = stack.pop() {
        if u == depth {
            continue;
        }
        for &s in &vocab[u] {
            let mut h2 = h;
            h2.push(s);
            let fp = h2.finish();
            let d = (s1.sketches[u].query_fp(fp) as f64 / n1 - s2.sketches[u].query_fp(fp) as f64 / n2).abs();
            best = best.max(d);
            stack.push((u + 1, h2));
        }
        visited += 1;
        if visited % 1024 == 0 {
            if let Some(dl) = opts.deadline {
                if Instant::now() > dl {
                    return Err(MetricError::BudgetExceeded);
                }
            }
        }
    }
    Ok(best)
}

pub fn lang_metric(
    family: &LanguageFamily,
    alphabet: &Alphabet,
    z1: &ExactStore,
    z2: &ExactStore,
) -> Result<f64, MetricError> {
    let matcher = FamilyMatcher::new(family, alphabet)?;
    for z in [z1, z2] {
        if z.steps != matcher.trace_steps() {
            return Err(LangError::LengthMismatch {
                expected: family.ell,
                found: z.steps * alphabet.tokens_per_step(),
            }
            .into());
        }
    }
    let profile = |z: &ExactStore| {
        let mut p = LangProfile::empty(matcher.len());
        for (t, &c) in &z.traces {
            p.add_trace(&matcher, t, c);
        }
        p
    };
    profile(z1).linf(&profile(z2))
}

pub fn test_distinct_prefix(
    t: usize,
    z1: &ExactStore,
    z2: &ExactStore,
    delta: f64,
    alphabet: &Alphabet,
) -> Result<TestOutcome, MetricError> {
    let d = prefix_linf(z1, z2)?;
    let steps = alphabet.horizon() - t;
    Ok(TestOutcome::new(d, prefix_threshold(ln_k(alphabet, steps), delta, z1.n.min(z2.n))))
}

pub fn test_distinct_cms(
    t: usize,
    s1: &SketchedStore,
    s2: &SketchedStore,
    delta: f64,
    alphabet: &Alphabet,
    opts: Enumeration<'_>,
) -> Result<TestOutcome, MetricError> {
    let steps = alphabet.horizon() - t;
    let owned;
    let vocab = match opts.vocab {
        Some(v) => v,
        None => {
            owned = syntactic_vocab(alphabet, steps);
            &owned[..]
        }
    };
    let d = prefix_linf_cms(s1, s2, vocab, opts)?;
    Ok(TestOutcome::new(d, cms_threshold(ln_k(alphabet, steps), delta, s1.n.min(s2.n))))
}

pub fn test_distinct_lang(
    family: &LanguageFamily,
    alphabet: &Alphabet,
    z1: &ExactStore,
    z2: &ExactStore,
    delta: f64,
) -> Result<TestOutcome, MetricError> {
    let d = lang_metric(family, alphabet, z1, z2)?;
    Ok(TestOutcome::new(d, lang_threshold(family.len(), delta, z1.n.min(z2.n))))
}

/// Sketched store sized for suffixes of `steps` steps out of a dataset of
/// `n_total` episodes.
pub fn sized_sketched_store(
    alphabet: &Alphabet,
    steps: usize,
    delta: f64,
    n_total: u64,
    params: &CmsParams,
    seed: u64,
) -> Result<SketchedStore, MetricError> {
    let (ln_inv, eps) = cms_sizing(alphabet, steps, delta, n_total, params);
    let (d, w) = cms::dimensions_log(ln_inv, eps)?;
    Ok(SketchedStore::new(steps, d, w, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::AlphabetSpec;
    use proptest::prelude::*;

    fn alpha(h: usize) -> Alphabet {
        Alphabet::new(
            AlphabetSpec {
                actions: vec!["a".into(), "b".into()],
                start_action: "s".into(),
                obs_features: vec![vec!["x".into(), "y".into()]],
                rewards: vec![0.0, 1.0],
                terminal_obs: vec!["y".into()],
            },
            h,
        )
        .unwrap()
    }

    #[test]
    fn threshold_arithmetic() {
        // A = R = O = 2, one step left, δ = 0.05, n = 1000
        let lk = 8f64.ln();
        assert!((prefix_threshold(lk, 0.05, 1000) - 0.119_6).abs() < 1e-4);
        assert!((cms_threshold(lk, 0.05, 1000) - 0.250_6).abs() < 1e-4);
        assert!((lang_threshold(24, 0.05, 1000) - 0.123_0).abs() < 1e-4);
        assert!(prefix_threshold(lk, 0.05, 1) > 1.0);
        for k in [1.0f64, 8.0, 1e3, 1e9] {
            let ratio = cms_threshold(k.ln(), 0.05, 77) / prefix_threshold(k.ln(), 0.05, 77);
            let want = 2.0 * ((16.0 * k / 0.05).ln() / (8.0 * k / 0.05).ln()).sqrt();
            assert!((ratio - want).abs() < 1e-12 && ratio > 2.0);
        }
    }

    #[test]
    fn prefix_distance_examples() {
        let x: &[StepId] = &[1, 2];
        let y: &[StepId] = &[3, 2];
        let z1 = ExactStore::from_traces(2, [x, x]);
        let z2 = ExactStore::from_traces(2, [x, y]);
        assert_eq!(prefix_linf(&z1, &z1).unwrap(), 0.0);
        assert_eq!(prefix_linf(&z1, &z2).unwrap(), 0.5);
        let z3 = ExactStore::from_traces(2, [y]);
        assert_eq!(prefix_linf(&z1, &z3).unwrap(), 1.0);
        assert_eq!(prefix_linf(&z1, &ExactStore::new(2)), Err(MetricError::EmptyStore));
    }

    #[test]
    fn prefix_test_fires() {
        let al = alpha(1);
        let x: Vec<StepId> = vec![al.step_id(&crate::trace::Step { action: 0, obs: 1, reward: 0 })];
        let y: Vec<StepId> = vec![al.step_id(&crate::trace::Step { action: 1, obs: 1, reward: 0 })];
        let mut z1 = ExactStore::new(1);
        z1.insert(&x, 1000);
        let mut z2 = ExactStore::new(1);
        z2.insert(&x, 500);
        z2.insert(&y, 500);
        let out = test_distinct_prefix(0, &z1, &z2, 0.05, &al).unwrap();
        assert!(out.distinct && out.distance == 0.5);
        assert!(!test_distinct_prefix(0, &z1, &z1, 0.05, &al).unwrap().distinct);
    }

    #[test]
    fn cms_distance_close_to_exact() {
        let al = alpha(2);
        let id = |a, o, r| al.step_id(&crate::trace::Step { action: a, obs: o, reward: r });
        let x = vec![id(0, 0, 0), id(0, 1, 1)];
        let y = vec![id(1, 0, 0), id(0, 1, 1)];
        let mut s1 = SketchedStore::new(2, 5, 2000, 11);
        let mut s2 = s1.empty_like();
        s1.insert(&x, 2);
        s2.insert(&x, 1);
        s2.insert(&y, 1);
        let vocab = syntactic_vocab(&al, 2);
        let d = prefix_linf_cms(&s1, &s2, &vocab, Enumeration::default()).unwrap();
        assert!((d - 0.5).abs() <= 2.0 * std::f64::consts::E / 2000.0);
        assert_eq!(prefix_linf_cms(&s1, &s1, &vocab, Enumeration::default()).unwrap(), 0.0);
        let other = SketchedStore::new(2, 5, 2000, 12);
        let mut o = other.clone();
        o.insert(&x, 1);
        assert!(matches!(prefix_linf_cms(&s1, &o, &vocab, Enumeration::default()), Err(MetricError::Sketch(_))));
        assert_eq!(
            prefix_linf_cms(&s1, &other, &vocab, Enumeration::default()),
            Err(MetricError::EmptyStore)
        );
    }

    #[test]
    fn config_validation() {
        let mut c = TesterConfig::language(0.05, (1, 1, 1));
        assert!(c.validate().is_ok());
        c.store = Some(StoreKind::Sketch);
        assert!(matches!(c.validate(), Err(MetricError::Config(_))));
        assert!(TesterConfig::prefix(1.0).validate().is_err());
        assert_eq!(TesterKind::parse("cms"), Some(TesterKind::PrefixCms));
    }

    fn store_strategy() -> impl Strategy<Value = ExactStore> {
        prop::collection::vec(prop::collection::vec(0u32..3, 3), 1..12)
            .prop_map(|ts| ExactStore::from_traces(3, ts.iter().map(|t| &t[..])))
    }

    proptest! {
        #[test]
        fn prefix_linf_pseudometric(a in store_strategy(), b in store_strategy(), c in store_strategy()) {
            let ab = prefix_linf(&a, &b).unwrap();
            let ba = prefix_linf(&b, &a).unwrap();
            let ac = prefix_linf(&a, &c).unwrap();
            let cb = prefix_linf(&c, &b).unwrap();
            prop_assert_eq!(prefix_linf(&a, &a).unwrap(), 0.0);
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(ab <= ac + cb + 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn profile_merge_matches_union(a in store_strategy(), b in store_strategy(), c in store_strategy()) {
            let mut ab = a.clone();
            ab.merge_from(&b);
            let mut trie = PrefixTrie::new();
            let mut prof = |z: &ExactStore| {
                let mut paths = Vec::new();
                for (t, &k) in &z.traces {
                    let p = trie.insert(t);
                    for _ in 0..k { paths.push(p.clone()); }
                }
                PrefixProfile::from_paths(paths.iter().map(|p| &p[..]))
            };
            let (pa, pb, pc, pab) = (prof(&a), prof(&b), prof(&c), prof(&ab));
            let mut merged = pa.clone();
            merged.merge_from(&pb);
            prop_assert_eq!(&merged, &pab);
            prop_assert!((merged.linf(&pc).unwrap() - prefix_linf(&ab, &c).unwrap()).abs() < 1e-12);
        }
    }
}

//! Trace languages built from single-step patterns.
//!
//! A [`StepAtom`] constrains some slots of one step. Step-level languages
//! are atoms and their unions/intersections. A [`Pattern`] concatenates
//! step-level languages with `Γ*` gaps or empty separators, restricted to a
//! fixed token length. Families `X_{i,j,k}` are built from these with
//! bounded concatenation and one round of pairwise Boolean closure per `k`.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{Alphabet, Step, StepId, Token};

pub const DEFAULT_FAMILY_CAP: usize = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum LangError {
    #[error("family size limit {cap} exceeded at {index} (would reach {size} languages)")]
    SizeLimit { index: String, cap: usize, size: u128 },
    #[error("invalid family index: {0}")]
    InvalidIndex(String),
    #[error("trace has {found} tokens, family expects {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("estimate over an empty multiset is undefined")]
    EmptyMultiset,
    #[error("traces of {0} steps exceed the matcher limit")]
    TooLong(usize),
}

/// Constraint on a single step; `None` means any symbol.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StepAtom {
    pub action: Option<u32>,
    pub features: Vec<Option<u32>>,
    pub reward: Option<u32>,
}

impl StepAtom {
    pub fn any(m: usize) -> Self {
        StepAtom { action: None, features: vec![None; m], reward: None }
    }

    pub fn action(m: usize, a: u32) -> Self {
        StepAtom { action: Some(a), ..Self::any(m) }
    }

    pub fn reward(m: usize, r: u32) -> Self {
        StepAtom { reward: Some(r), ..Self::any(m) }
    }

    pub fn feature(m: usize, i: usize, v: u32) -> Self {
        let mut a = Self::any(m);
        a.features[i] = Some(v);
        a
    }

    /// Fully specified atom matching exactly `step`.
    pub fn exact(alphabet: &Alphabet, step: &Step) -> Self {
        StepAtom {
            action: Some(step.action),
            features: alphabet.obs_features(step.obs).into_iter().map(Some).collect(),
            reward: Some(step.reward),
        }
    }

    pub fn matches(&self, alphabet: &Alphabet, step: &Step) -> bool {
        if self.action.is_some_and(|a| a != step.action) || self.reward.is_some_and(|r| r != step.reward) {
            return false;
        }
        self.features
            .iter()
            .enumerate()
            .all(|(i, c)| c.map_or(true, |v| alphabet.feature(step.obs, i) == v))
    }

    /// Matches a window of `m + 2` tokens; the window must read as one step.
    pub fn matches_tokens(&self, window: &[Token]) -> bool {
        let m = self.features.len();
        if window.len() != m + 2 {
            return false;
        }
        match window[0] {
            Token::Action(a) if self.action.map_or(true, |x| x == a) => {}
            _ => return false,
        }
        for (i, c) in self.features.iter().enumerate() {
            match window[1 + i] {
                Token::Feature(fi, v) if fi as usize == i && c.map_or(true, |x| x == v) => {}
                _ => return false,
            }
        }
        matches!(window[m + 1], Token::Reward(r) if self.reward.map_or(true, |x| x == r))
    }

    pub fn render(&self, alphabet: &Alphabet) -> String {
        let mut slots = vec![self.action.map_or("·".to_string(), |a| alphabet.action_symbol(a).to_string())];
        for (i, c) in self.features.iter().enumerate() {
            slots.push(c.map_or("·".to_string(), |v| alphabet.feature_symbol(i, v).to_string()));
        }
        slots.push(self.reward.map_or("·".to_string(), |r| alphabet.reward_value(r).to_string()));
        format!("[{}]", slots.join("|"))
    }
}

impl fmt::Display for StepAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |c: Option<u32>| c.map_or("·".to_string(), |v| v.to_string());
        let mut slots = vec![show(self.action)];
        slots.extend(self.features.iter().map(|c| show(*c)));
        slots.push(show(self.reward));
        write!(f, "[{}]", slots.join("|"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sep {
    /// `Γ*`
    Gap,
    /// `λ`
    Empty,
}

/// `Γ^ℓ ∩ S₁ G₁ S₂ … G_k S_{k+1}` with step-level `G`s and `ℓ` in tokens.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pattern {
    pub seps: Vec<Sep>,
    pub elems: Vec<Lang>,
    pub ell: usize,
}

impl Pattern {
    pub fn new(seps: Vec<Sep>, elems: Vec<Lang>, ell: usize) -> Self {
        assert_eq!(seps.len(), elems.len() + 1, "a pattern needs k + 1 separators");
        debug_assert!(elems.iter().all(Lang::is_step_level));
        Pattern { seps, elems, ell }
    }

    /// False when the length restriction makes the denotation empty on
    /// token strings built from steps of width `width`.
    pub fn feasible(&self, width: usize) -> bool {
        let min = self.elems.len() * width;
        if min > self.ell {
            return false;
        }
        self.seps.iter().any(|s| *s == Sep::Gap) || min == self.ell
    }
}

/// Language AST. Unions and intersections keep their children sorted and
/// deduplicated so structurally equal languages compare equal.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Lang {
    Atom(StepAtom),
    Union(Vec<Lang>),
    Inter(Vec<Lang>),
    Concat(Pattern),
}

impl Lang {
    pub fn union(a: Lang, b: Lang) -> Lang {
        Self::nary(a, b, true)
    }

    pub fn inter(a: Lang, b: Lang) -> Lang {
        Self::nary(a, b, false)
    }

    fn nary(a: Lang, b: Lang, is_union: bool) -> Lang {
        let mut kids = Vec::new();
        for x in [a, b] {
            match (x, is_union) {
                (Lang::Union(v), true) | (Lang::Inter(v), false) => kids.extend(v),
                (x, _) => kids.push(x),
            }
        }
        Self::from_children(kids, is_union)
    }

    pub fn union_of(kids: Vec<Lang>) -> Lang {
        Self::from_children(kids, true)
    }

    fn from_children(mut kids: Vec<Lang>, is_union: bool) -> Lang {
        kids.sort();
        kids.dedup();
        if kids.len() == 1 {
            return kids.pop().unwrap();
        }
        if is_union {
            Lang::Union(kids)
        } else {
            Lang::Inter(kids)
        }
    }

    /// True for languages of single steps.
    pub fn is_step_level(&self) -> bool {
        match self {
            Lang::Atom(_) => true,
            Lang::Concat(_) => false,
            Lang::Union(v) | Lang::Inter(v) => v.iter().all(Lang::is_step_level),
        }
    }

    pub fn matches_step(&self, alphabet: &Alphabet, step: &Step) -> bool {
        match self {
            Lang::Atom(a) => a.matches(alphabet, step),
            Lang::Union(v) => v.iter().any(|l| l.matches_step(alphabet, step)),
            Lang::Inter(v) => v.iter().all(|l| l.matches_step(alphabet, step)),
            Lang::Concat(_) => false,
        }
    }

    fn matches_window(&self, window: &[Token]) -> bool {
        match self {
            Lang::Atom(a) => a.matches_tokens(window),
            Lang::Union(v) => v.iter().any(|l| l.matches_window(window)),
            Lang::Inter(v) => v.iter().all(|l| l.matches_window(window)),
            Lang::Concat(_) => false,
        }
    }

    /// Token-level membership: the pattern is simulated as a
    /// nondeterministic automaton over token positions.
    pub fn contains_tokens(&self, tokens: &[Token], width: usize) -> bool {
        match self {
            Lang::Union(v) => v.iter().any(|l| l.contains_tokens(tokens, width)),
            Lang::Inter(v) => v.iter().all(|l| l.contains_tokens(tokens, width)),
            Lang::Atom(_) => tokens.len() == width && self.matches_window(tokens),
            Lang::Concat(p) => {
                let n = tokens.len();
                if n != p.ell {
                    return false;
                }
                let mut live = vec![false; n + 1];
                live[0] = true;
                for (k, elem) in p.elems.iter().enumerate() {
                    gap_close(&mut live, p.seps[k]);
                    let mut next = vec![false; n + 1];
                    for pos in 0..=n {
                        if live[pos] && pos + width <= n && elem.matches_window(&tokens[pos..pos + width]) {
                            next[pos + width] = true;
                        }
                    }
                    live = next;
                }
                match p.seps[p.elems.len()] {
                    Sep::Gap => live.iter().any(|&x| x),
                    Sep::Empty => live[n],
                }
            }
        }
    }

    /// Step-level membership on an interned trace.
    pub fn contains_steps(&self, alphabet: &Alphabet, steps: &[Step]) -> bool {
        match self {
            Lang::Union(v) if !self.is_step_level() => v.iter().any(|l| l.contains_steps(alphabet, steps)),
            Lang::Inter(v) if !self.is_step_level() => v.iter().all(|l| l.contains_steps(alphabet, steps)),
            Lang::Concat(p) => {
                let width = alphabet.tokens_per_step();
                if steps.len() * width != p.ell {
                    return false;
                }
                let masks: Vec<u128> = p
                    .elems
                    .iter()
                    .map(|e| {
                        steps
                            .iter()
                            .enumerate()
                            .filter(|(_, s)| e.matches_step(alphabet, s))
                            .fold(0u128, |m, (i, _)| m | (1 << i))
                    })
                    .collect();
                run_mask_pattern(&p.seps, masks.into_iter(), steps.len())
            }
            _ => steps.len() == 1 && self.matches_step(alphabet, &steps[0]),
        }
    }

    pub fn render(&self, alphabet: &Alphabet) -> String {
        match self {
            Lang::Atom(a) => a.render(alphabet),
            Lang::Union(v) => join_render(v, " ∪ ", |l| l.render(alphabet)),
            Lang::Inter(v) => join_render(v, " ∩ ", |l| l.render(alphabet)),
            Lang::Concat(p) => render_pattern(p, |l| l.render(alphabet)),
        }
    }
}

fn gap_close(live: &mut [bool], sep: Sep) {
    if sep == Sep::Gap {
        if let Some(first) = live.iter().position(|&x| x) {
            live[first..].iter_mut().for_each(|x| *x = true);
        }
    }
}

/// Runs a pattern on per-element position masks; bit `p` of `masks[e]`
/// says step `p` belongs to element `e`.
#[inline]
pub(crate) fn run_mask_pattern(seps: &[Sep], masks: impl ExactSizeIterator<Item = u128>, len: usize) -> bool {
    let full: u128 = if len + 1 >= 128 { u128::MAX } else { (1u128 << (len + 1)) - 1 };
    let k_total = masks.len();
    let mut live: u128 = 1;
    for (k, m) in masks.enumerate() {
        if seps[k] == Sep::Gap && live != 0 {
            let low = live & live.wrapping_neg();
            live = !(low - 1) & full;
        }
        live = (live & m) << 1;
        if live == 0 {
            return false;
        }
    }
    match seps[k_total] {
        Sep::Gap => live != 0,
        Sep::Empty => live & (1u128 << len) != 0,
    }
}

fn join_render(v: &[Lang], sep: &str, f: impl Fn(&Lang) -> String) -> String {
    if v.is_empty() {
        return "∅".into();
    }
    format!("({})", v.iter().map(f).collect::<Vec<_>>().join(sep))
}

fn render_pattern(p: &Pattern, f: impl Fn(&Lang) -> String) -> String {
    let mut parts = Vec::new();
    for (k, sep) in p.seps.iter().enumerate() {
        if *sep == Sep::Gap {
            parts.push("*".to_string());
        }
        if let Some(e) = p.elems.get(k) {
            parts.push(f(e));
        }
    }
    if parts.is_empty() {
        parts.push("λ".into());
    }
    format!("{} /{}", parts.join(" "), p.ell)
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Lang::Atom(a) => a.to_string(),
            Lang::Union(v) => join_render(v, " ∪ ", |l| l.to_string()),
            Lang::Inter(v) => join_render(v, " ∩ ", |l| l.to_string()),
            Lang::Concat(p) => render_pattern(p, |l| l.to_string()),
        };
        f.write_str(&s)
    }
}

/// `G_1`: one atom per action, per reward and per feature value.
pub fn base_patterns(alphabet: &Alphabet) -> Vec<StepAtom> {
    let m = alphabet.n_features();
    let mut out: Vec<StepAtom> = (0..alphabet.n_actions()).map(|a| StepAtom::action(m, a)).collect();
    out.extend((0..alphabet.n_rewards()).map(|r| StepAtom::reward(m, r)));
    for i in 0..m {
        out.extend((0..alphabet.feature_size(i)).map(|v| StepAtom::feature(m, i, v)));
    }
    out
}

fn push_unique(out: &mut Vec<Lang>, seen: &mut HashSet<Lang>, l: Lang) {
    if seen.insert(l.clone()) {
        out.push(l);
    }
}

fn check_cap(size: u128, cap: usize, index: impl FnOnce() -> String) -> Result<(), LangError> {
    if size > cap as u128 {
        return Err(LangError::SizeLimit { index: index(), cap, size });
    }
    Ok(())
}

/// `X ∪ B(X)`: the input plus all pairwise unions and intersections.
pub fn boolean_close(family: &[Lang]) -> Vec<Lang> {
    boolean_close_capped(family, usize::MAX).expect("uncapped")
}

fn boolean_close_capped(family: &[Lang], cap: usize) -> Result<Vec<Lang>, LangError> {
    let n = family.len() as u128;
    check_cap(n * n, cap, || format!("boolean closure of {n} languages"))?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for l in family {
        push_unique(&mut out, &mut seen, l.clone());
    }
    for (x, a) in family.iter().enumerate() {
        for b in &family[x + 1..] {
            push_unique(&mut out, &mut seen, Lang::union(a.clone(), b.clone()));
            push_unique(&mut out, &mut seen, Lang::inter(a.clone(), b.clone()));
        }
    }
    Ok(out)
}

/// `C_k^ℓ(base)` with patterns whose denotation is provably empty dropped.
pub fn concat_family(base: &[Lang], k: usize, ell: usize, width: usize) -> Vec<Pattern> {
    concat_family_capped(base, k, ell, width, usize::MAX).expect("uncapped")
}

fn concat_family_capped(base: &[Lang], k: usize, ell: usize, width: usize, cap: usize) -> Result<Vec<Pattern>, LangError> {
    assert!(k >= 1);
    if k * width > ell {
        return Ok(Vec::new());
    }
    let size = (base.len() as u128).saturating_pow(k as u32).saturating_mul(1u128 << (k + 1).min(100));
    check_cap(size, cap, || format!("concatenation of {k} from {} base languages", base.len()))?;
    let mut out = Vec::new();
    let mut choice = vec![0usize; k];
    loop {
        let elems: Vec<Lang> = choice.iter().map(|&c| base[c].clone()).collect();
        for mask in 0..(1u32 << (k + 1)) {
            let seps = (0..=k).map(|b| if mask >> b & 1 == 1 { Sep::Gap } else { Sep::Empty }).collect();
            let p = Pattern::new(seps, elems.clone(), ell);
            if p.feasible(width) {
                out.push(p);
            }
        }
        let mut pos = k;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            choice[pos] += 1;
            if choice[pos] < base.len() {
                break;
            }
            choice[pos] = 0;
        }
    }
}

/// `G_i`.
pub fn base_family(alphabet: &Alphabet, i: usize, cap: usize) -> Result<Vec<Lang>, LangError> {
    let mut g: Vec<Lang> = base_patterns(alphabet).into_iter().map(Lang::Atom).collect();
    for level in 2..=i {
        g = boolean_close_capped(&g, cap).map_err(|e| rename(e, format!("G_{level}")))?;
        check_cap(g.len() as u128, cap, || format!("G_{level}"))?;
    }
    Ok(g)
}

fn rename(e: LangError, index: String) -> LangError {
    match e {
        LangError::SizeLimit { cap, size, .. } => LangError::SizeLimit { index, cap, size },
        other => other,
    }
}

/// A finite, deduplicated set of languages over traces of `ell` tokens.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanguageFamily {
    pub languages: Vec<Lang>,
    pub indices: Option<(usize, usize, usize)>,
    pub ell: usize,
    pub width: usize,
}

impl LanguageFamily {
    /// `X_{i,j,k}` for traces of `ell` tokens.
    pub fn build(alphabet: &Alphabet, i: usize, j: usize, k: usize, ell: usize) -> Result<Self, LangError> {
        Self::build_capped(alphabet, i, j, k, ell, DEFAULT_FAMILY_CAP)
    }

    pub fn build_capped(
        alphabet: &Alphabet,
        i: usize,
        j: usize,
        k: usize,
        ell: usize,
        cap: usize,
    ) -> Result<Self, LangError> {
        let m = alphabet.n_features();
        if i < 1 || i > m + 2 {
            return Err(LangError::InvalidIndex(format!("i = {i} not in [1, {}]", m + 2)));
        }
        if j < 1 || k < 1 {
            return Err(LangError::InvalidIndex(format!("j = {j}, k = {k} must be at least 1")));
        }
        let width = alphabet.tokens_per_step();
        let g = base_family(alphabet, i, cap)?;
        let mut seen = HashSet::new();
        let mut langs = Vec::new();
        for jj in 1..=j {
            let pats = concat_family_capped(&g, jj, ell, width, cap)
                .map_err(|e| rename(e, format!("X_{{{i},{jj},1}}")))?;
            for p in pats {
                push_unique(&mut langs, &mut seen, Lang::Concat(p));
            }
            check_cap(langs.len() as u128, cap, || format!("X_{{{i},{jj},1}}"))?;
        }
        for kk in 2..=k {
            langs = boolean_close_capped(&langs, cap).map_err(|e| rename(e, format!("X_{{{i},{j},{kk}}}")))?;
            check_cap(langs.len() as u128, cap, || format!("X_{{{i},{j},{kk}}}"))?;
        }
        Ok(LanguageFamily { languages: langs, indices: Some((i, j, k)), ell, width })
    }

    pub fn from_languages(languages: Vec<Lang>, ell: usize, width: usize) -> Self {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for l in languages {
            push_unique(&mut out, &mut seen, l);
        }
        LanguageFamily { languages: out, indices: None, ell, width }
    }

    pub fn len(&self) -> usize {
        self.languages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.languages.is_empty()
    }

    pub fn contains(&self, index: usize, tokens: &[Token]) -> Result<bool, LangError> {
        if tokens.len() != self.ell {
            return Err(LangError::LengthMismatch { expected: self.ell, found: tokens.len() });
        }
        Ok(self.languages[index].contains_tokens(tokens, self.width))
    }

    /// Fraction of `traces` in each language of the family.
    pub fn estimate_probs(&self, traces: &[Vec<Token>]) -> Result<Vec<f64>, LangError> {
        self.languages.iter().map(|l| estimate_prob(l, traces, self.ell, self.width)).collect()
    }

    pub fn render(&self, alphabet: &Alphabet) -> Vec<String> {
        self.languages.iter().map(|l| l.render(alphabet)).collect()
    }
}

pub fn contains(lang: &Lang, tokens: &[Token], width: usize) -> bool {
    lang.contains_tokens(tokens, width)
}

pub fn estimate_prob(lang: &Lang, traces: &[Vec<Token>], ell: usize, width: usize) -> Result<f64, LangError> {
    if traces.is_empty() {
        return Err(LangError::EmptyMultiset);
    }
    let mut hits = 0usize;
    for t in traces {
        if t.len() != ell {
            return Err(LangError::LengthMismatch { expected: ell, found: t.len() });
        }
        if lang.contains_tokens(t, width) {
            hits += 1;
        }
    }
    Ok(hits as f64 / traces.len() as f64)
}

/// Parses a family spec `"i,j,k"`.
pub fn parse_family_spec(s: &str) -> Result<(usize, usize, usize), LangError> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(LangError::InvalidIndex(format!("expected \"i,j,k\", got {s:?}")));
    }
    let mut v = [0usize; 3];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p
            .parse()
            .map_err(|_| LangError::InvalidIndex(format!("{p:?} is not a positive integer")))?;
        if *slot == 0 {
            return Err(LangError::InvalidIndex(format!("indices start at 1, got {s:?}")));
        }
    }
    Ok((v[0], v[1], v[2]))
}

enum CNode {
    Concat { seps: Vec<Sep>, elems: Vec<usize> },
    Step(usize),
    Union(Vec<CNode>),
    Inter(Vec<CNode>),
}

/// A family compiled against an alphabet for fast evaluation on interned
/// step-id traces. Step-level elements become membership tables indexed
/// by step id; patterns run on position bitmasks.
pub struct FamilyMatcher {
    elem_tables: Vec<Vec<bool>>,
    nodes: Vec<CNode>,
    steps: usize,
}

impl FamilyMatcher {
    pub fn new(family: &LanguageFamily, alphabet: &Alphabet) -> Result<Self, LangError> {
        let width = alphabet.tokens_per_step();
        if family.width != width || family.ell % width != 0 {
            return Err(LangError::LengthMismatch { expected: family.ell, found: width });
        }
        let steps = family.ell / width;
        if steps >= 127 {
            return Err(LangError::TooLong(steps));
        }
        let all_steps: Vec<Step> = (0..alphabet.n_steps()).map(|id| alphabet.decode_step(id)).collect();
        let mut elem_ids: std::collections::HashMap<Lang, usize> = Default::default();
        let mut elem_tables = Vec::new();
        let mut intern = |l: &Lang| -> usize {
            if let Some(&id) = elem_ids.get(l) {
                return id;
            }
            let id = elem_tables.len();
            elem_tables.push(all_steps.iter().map(|s| l.matches_step(alphabet, s)).collect());
            elem_ids.insert(l.clone(), id);
            id
        };
        fn compile(l: &Lang, intern: &mut dyn FnMut(&Lang) -> usize) -> CNode {
            if l.is_step_level() {
                return CNode::Step(intern(l));
            }
            match l {
                Lang::Concat(p) => CNode::Concat {
                    seps: p.seps.clone(),
                    elems: p.elems.iter().map(|e| intern(e)).collect(),
                },
                Lang::Union(v) => CNode::Union(v.iter().map(|x| compile(x, intern)).collect()),
                Lang::Inter(v) => CNode::Inter(v.iter().map(|x| compile(x, intern)).collect()),
                Lang::Atom(_) => unreachable!(),
            }
        }
        let nodes = family.languages.iter().map(|l| compile(l, &mut intern)).collect();
        Ok(FamilyMatcher { elem_tables, nodes, steps })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn trace_steps(&self) -> usize {
        self.steps
    }

    /// Adds `weight` to `counts[x]` for every language `x` containing `trace`.
    pub fn accumulate(&self, trace: &[StepId], weight: u64, counts: &mut [u64]) {
        debug_assert_eq!(counts.len(), self.nodes.len());
        if trace.len() != self.steps {
            return;
        }
        let masks: Vec<u128> = self
            .elem_tables
            .iter()
            .map(|t| trace.iter().enumerate().fold(0u128, |m, (i, &s)| if t[s as usize] { m | 1 << i } else { m }))
            .collect();
        for (c, node) in counts.iter_mut().zip(&self.nodes) {
            if self.eval(node, &masks, trace) {
                *c += weight;
            }
        }
    }

    pub fn membership(&self, trace: &[StepId]) -> Vec<bool> {
        let mut counts = vec![0u64; self.nodes.len()];
        self.accumulate(trace, 1, &mut counts);
        counts.into_iter().map(|c| c > 0).collect()
    }

    fn eval(&self, node: &CNode, masks: &[u128], trace: &[StepId]) -> bool {
        match node {
            CNode::Concat { seps, elems } => run_mask_pattern(seps, elems.iter().map(|&e| masks[e]), self.steps),
            CNode::Step(e) => trace.len() == 1 && masks[*e] & 1 == 1,
            CNode::Union(v) => v.iter().any(|n| self.eval(n, masks, trace)),
            CNode::Inter(v) => v.iter().all(|n| self.eval(n, masks, trace)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::AlphabetSpec;

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

    fn tmaze_like() -> Alphabet {
        Alphabet::new(
            AlphabetSpec {
                actions: ["N", "S", "E", "W"].map(String::from).to_vec(),
                start_action: "start".into(),
                obs_features: vec![["011", "110", "101", "010", "end"].map(String::from).to_vec()],
                rewards: vec![4.0, -1.0, 0.0],
                terminal_obs: vec!["end".into()],
            },
            5,
        )
        .unwrap()
    }

    #[test]
    fn base_pattern_counts() {
        assert_eq!(base_patterns(&alpha(2)).len(), 6);
        assert_eq!(base_patterns(&tmaze_like()).len(), 12);
        for a in base_patterns(&tmaze_like()) {
            let constrained = a.action.is_some() as usize
                + a.reward.is_some() as usize
                + a.features.iter().filter(|f| f.is_some()).count();
            assert_eq!(constrained, 1);
        }
    }

    #[test]
    fn x111_size_and_contents() {
        let al = alpha(2);
        let fam = LanguageFamily::build(&al, 1, 1, 1, 6).unwrap();
        assert!(fam.len() <= 24);
        // two steps: all four separator choices are feasible except λGλ
        assert_eq!(fam.len(), 18);
        let t = tmaze_like();
        let fam = LanguageFamily::build(&t, 1, 1, 1, 15).unwrap();
        let want = Lang::Concat(Pattern::new(
            vec![Sep::Gap, Sep::Gap],
            vec![Lang::Atom(StepAtom::feature(1, 0, 1))],
            15,
        ));
        assert!(fam.languages.contains(&want));
        assert_eq!(want.render(&t), "* [·|110|·] * /15");
    }

    #[test]
    fn gap_pattern_membership() {
        let t = tmaze_like();
        let pat = Lang::Concat(Pattern::new(
            vec![Sep::Gap, Sep::Gap],
            vec![Lang::Atom(StepAtom::feature(1, 0, 1))],
            9,
        ));
        let steps = |obs: [u32; 3]| -> Vec<Step> {
            obs.iter().map(|&o| Step { action: 2, obs: o, reward: 2 }).collect()
        };
        let hit = steps([2, 1, 4]);
        let miss = steps([2, 2, 4]);
        assert!(pat.contains_tokens(&t.tokenize_steps(&hit), 3));
        assert!(!pat.contains_tokens(&t.tokenize_steps(&miss), 3));
        assert!(pat.contains_steps(&t, &hit));
        assert!(!pat.contains_steps(&t, &miss));
        let u = Lang::union(pat.clone(), pat.clone());
        assert_eq!(u, pat);
    }

    #[test]
    fn boolean_close_examples() {
        // languages over single steps: {ac, ad} and {ac, bc} in spirit,
        // with a, b actions and c, d rewards
        let al = alpha(1);
        let x = Lang::Atom(StepAtom::action(1, 0));
        let y = Lang::Atom(StepAtom::reward(1, 0));
        let closed = boolean_close(&[x.clone(), y.clone()]);
        assert_eq!(closed.len(), 4);
        assert!(closed.contains(&Lang::union(x.clone(), y.clone())));
        assert!(closed.contains(&Lang::inter(x.clone(), y.clone())));
        let s = |a, r| Step { action: a, obs: 0, reward: r };
        let u = Lang::union(x.clone(), y.clone());
        let i = Lang::inter(x.clone(), y.clone());
        assert!(u.matches_step(&al, &s(0, 1)) && u.matches_step(&al, &s(1, 0)) && !u.matches_step(&al, &s(1, 1)));
        assert!(i.matches_step(&al, &s(0, 0)) && !i.matches_step(&al, &s(0, 1)));
        assert_eq!(boolean_close(&[x.clone()]), vec![x]);
    }

    #[test]
    fn concat_counts() {
        let base: Vec<Lang> = base_patterns(&alpha(3)).into_iter().map(Lang::Atom).collect();
        assert_eq!(base.len(), 6);
        let pats = concat_family(&base, 1, 12, 3);
        assert_eq!(pats.len(), 18);
        let pats = concat_family(&base, 1, 3, 3);
        assert_eq!(pats.len(), 24);
        assert!(concat_family(&base, 2, 3, 3).is_empty());
    }

    #[test]
    fn family_monotone_and_capped() {
        let al = alpha(2);
        let small = LanguageFamily::build(&al, 1, 1, 1, 6).unwrap();
        for (i, j, k) in [(2, 1, 1), (1, 2, 1), (1, 1, 2), (2, 2, 1), (1, 2, 2)] {
            let big = LanguageFamily::build(&al, i, j, k, 6).unwrap();
            assert!(small.languages.iter().all(|l| big.languages.contains(l)), "{i},{j},{k}");
        }
        match LanguageFamily::build_capped(&al, 1, 1, 3, 6, 1000) {
            Err(LangError::SizeLimit { index, .. }) => assert!(index.contains("X_{1,1,")),
            other => panic!("expected size limit, got {other:?}"),
        }
        assert!(LanguageFamily::build(&al, 4, 1, 1, 6).is_err());
    }

    #[test]
    fn estimates() {
        let t = tmaze_like();
        let pat = Lang::Concat(Pattern::new(vec![Sep::Gap, Sep::Gap], vec![Lang::Atom(StepAtom::feature(1, 0, 1))], 3));
        let tr = |o| t.tokenize_steps(&[Step { action: 0, obs: o, reward: 2 }]);
        let z = vec![tr(1), tr(2), tr(2), tr(3)];
        assert_eq!(estimate_prob(&pat, &z, 3, 3).unwrap(), 0.25);
        assert_eq!(estimate_prob(&pat, &[], 3, 3), Err(LangError::EmptyMultiset));
        let fam = LanguageFamily::from_languages(vec![pat], 3, 3);
        assert!(fam.contains(0, &tr(1)[..2]).is_err());
    }

    #[test]
    fn family_spec_parsing() {
        assert_eq!(parse_family_spec("1,1,1").unwrap(), (1, 1, 1));
        assert_eq!(parse_family_spec(" 2, 3,4").unwrap(), (2, 3, 4));
        assert!(parse_family_spec("1,1").is_err());
        assert!(parse_family_spec("0,1,1").is_err());
        assert!(parse_family_spec("a,b,c").is_err());
    }
}

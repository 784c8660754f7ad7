//! Executable versions of the test lemmas, the sketch guarantee and the
//! metric reductions, run on small instances whose distributions are known
//! exactly. Everything here is seeded; the same seed gives the same report.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cms::Sketch;
use crate::environments::synthetic::{generate, SyntheticParams};
use crate::environments::{generate_dataset, BehaviorPolicy, GroundTruthRdp};
use crate::learner::{adact_h, LearnError, LearnedRdp, StateId};
use crate::languages::{Lang, LanguageFamily, Pattern, Sep, StepAtom};
use crate::metrics::{
    cms_sizing, lang_metric, ln_k, prefix_linf, sized_sketched_store, test_distinct_cms,
    test_distinct_lang, test_distinct_prefix, CmsParams, Enumeration, ExactStore, TesterConfig,
};
use crate::oracle::{self, OracleMetric};
use crate::trace::{Alphabet, AlphabetSpec, StepId};

pub const DEFAULT_TRIALS: usize = 500;
pub const DEFAULT_DELTA: f64 = 0.1;

/// `3σ` of a binomial proportion with success probability `p`.
pub fn binomial_slack(p: f64, trials: usize) -> f64 {
    3.0 * (p * (1.0 - p) / trials as f64).sqrt()
}

fn name_seed(seed: u64, name: &str) -> u64 {
    // FNV-1a, so each check draws from its own stream
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    seed ^ h
}

/// Draws i.i.d. traces from an exactly known distribution.
#[derive(Clone, Debug)]
pub struct TraceSampler {
    traces: Vec<Vec<StepId>>,
    cumulative: Vec<f64>,
    steps: usize,
}

impl TraceSampler {
    pub fn new(dist: &HashMap<Vec<StepId>, f64>) -> Self {
        let mut items: Vec<(&Vec<StepId>, f64)> = dist.iter().map(|(k, &v)| (k, v)).filter(|x| x.1 > 0.0).collect();
        items.sort_by(|a, b| a.0.cmp(b.0));
        let total: f64 = items.iter().map(|x| x.1).sum();
        let mut acc = 0.0;
        let mut cumulative = Vec::with_capacity(items.len());
        for (_, p) in &items {
            acc += p / total;
            cumulative.push(acc);
        }
        let steps = items.first().map_or(0, |x| x.0.len());
        TraceSampler { traces: items.into_iter().map(|x| x.0.clone()).collect(), cumulative, steps }
    }

    pub fn sample<'a>(&'a self, rng: &mut impl Rng) -> &'a [StepId] {
        let u: f64 = rng.gen();
        let i = self.cumulative.partition_point(|&c| c <= u).min(self.traces.len() - 1);
        &self.traces[i]
    }

    pub fn exact_store(&self, n: u64, rng: &mut impl Rng) -> ExactStore {
        let mut z = ExactStore::new(self.steps);
        for _ in 0..n {
            z.insert(self.sample(rng), 1);
        }
        z
    }
}

/// Two same-layer states of a small synthetic RDP with their exact suffix
/// distributions and distances.
#[derive(Clone, Debug)]
pub struct OracleInstance {
    pub rdp: GroundTruthRdp,
    pub synthetic_seed: u64,
    /// Learner layer index of the candidates (`H − t` suffix steps).
    pub t: usize,
    pub q1: u32,
    pub q2: u32,
    pub p1: TraceSampler,
    pub p2: TraceSampler,
    pub mu_prefix: f64,
    pub mu_lang: f64,
    pub family: LanguageFamily,
}

impl OracleInstance {
    /// First synthetic RDP (horizon 3) from `seed` on whose first layer two
    /// states are at least `floor` apart in both the prefix metric and
    /// `X_{1,1,1}`.
    pub fn find(seed: u64, floor: f64) -> Option<Self> {
        let params = SyntheticParams { horizon: 3, ..SyntheticParams::default() };
        let policy = BehaviorPolicy::uniform();
        for s in seed..seed + 1000 {
            let Ok((_, rdp, _)) = generate(&params, s) else { continue };
            if rdp.layers[1].len() < 2 {
                continue;
            }
            let (q1, q2) = (rdp.layers[1][0], rdp.layers[1][1]);
            let Ok(family) = oracle::layer_family(&rdp, 1, (1, 1, 1)) else { continue };
            let Ok(mu_prefix) = oracle::prefix_pair_distance(&rdp, &policy, q1, q2) else { continue };
            let Ok(mu_lang) = oracle::language_pair_distance(&rdp, &policy, &family, q1, q2) else { continue };
            if mu_prefix < floor || mu_lang < floor {
                continue;
            }
            let p1 = TraceSampler::new(&oracle::exact_suffix_distribution(&rdp, &policy, q1));
            let p2 = TraceSampler::new(&oracle::exact_suffix_distribution(&rdp, &policy, q2));
            return Some(OracleInstance { rdp, synthetic_seed: s, t: 0, q1, q2, p1, p2, mu_prefix, mu_lang, family });
        }
        None
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.rdp.alphabet
    }

    pub fn steps(&self) -> usize {
        self.alphabet().horizon() - self.t
    }

    /// `ln K` for the suffix length of this instance.
    pub fn ln_k(&self) -> f64 {
        ln_k(self.alphabet(), self.steps())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateCheck {
    pub name: String,
    pub trials: usize,
    pub n_per_side: u64,
    pub events: usize,
    pub rate: f64,
    /// Lemma rate the observed rate is compared against.
    pub target: f64,
    pub slack: f64,
    /// True when the rate must stay at or below `target + slack`, false
    /// when it must reach at least `target − slack`.
    pub upper: bool,
    pub pass: bool,
}

impl RateCheck {
    fn new(name: &str, trials: usize, n: u64, events: usize, target: f64, upper: bool) -> Self {
        let rate = events as f64 / trials as f64;
        let slack = binomial_slack(if upper { target } else { 1.0 - target }, trials);
        let pass = if upper { rate <= target + slack } else { rate >= target - slack };
        RateCheck { name: name.into(), trials, n_per_side: n, events, rate, target, slack, upper, pass }
    }
}

/// Sketch sandwich `|L̃ − L̂| ≤ 2ε` on shared data, over every CMS trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichCheck {
    pub trials: usize,
    pub violations: usize,
    pub max_gap_over_eps: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub seed: u64,
    pub delta: f64,
    pub instance_seed: u64,
    pub mu_prefix: f64,
    pub mu_lang: f64,
    pub family_size: usize,
    pub rates: Vec<RateCheck>,
    pub sandwich: SandwichCheck,
    pub pass: bool,
}

/// Sample sizes under which each test should detect a gap of `mu0`.
pub fn detection_sizes(inst: &OracleInstance, delta: f64) -> (u64, u64, u64) {
    let lk = inst.ln_k();
    let prefix = 8.0 * (8f64.ln() + lk - delta.ln()) / inst.mu_prefix.powi(2);
    // δ_c = δ / 8K
    let ln_two_over_dc = 2f64.ln() + 8f64.ln() + lk - delta.ln();
    let cms = 32.0 * ln_two_over_dc / inst.mu_prefix.powi(2);
    let lang = 8.0 * (4.0 * inst.family.len() as f64 / delta).ln() / inst.mu_lang.powi(2);
    (prefix.ceil() as u64, cms.ceil() as u64, lang.ceil() as u64)
}

struct Runner<'a> {
    inst: &'a OracleInstance,
    delta: f64,
    trials: usize,
    seed: u64,
}

impl Runner<'_> {
    fn draw(&self, same: bool, n: u64, rng: &mut ChaCha8Rng) -> (ExactStore, ExactStore) {
        let z1 = self.inst.p1.exact_store(n, rng);
        let z2 = if same { self.inst.p1.exact_store(n, rng) } else { self.inst.p2.exact_store(n, rng) };
        (z1, z2)
    }

    fn prefix(&self, name: &str, same: bool, n: u64) -> RateCheck {
        let mut rng = ChaCha8Rng::seed_from_u64(name_seed(self.seed, name));
        let al = self.inst.alphabet();
        let mut fired = 0;
        for _ in 0..self.trials {
            let (z1, z2) = self.draw(same, n, &mut rng);
            fired += test_distinct_prefix(self.inst.t, &z1, &z2, self.delta, al).expect("equal-length stores").distinct
                as usize;
        }
        RateCheck::new(name, self.trials, n, fired, if same { self.delta } else { 1.0 - self.delta }, same)
    }

    fn lang(&self, name: &str, same: bool, n: u64) -> RateCheck {
        let mut rng = ChaCha8Rng::seed_from_u64(name_seed(self.seed, name));
        let al = self.inst.alphabet();
        let mut fired = 0;
        for _ in 0..self.trials {
            let (z1, z2) = self.draw(same, n, &mut rng);
            fired += test_distinct_lang(&self.inst.family, al, &z1, &z2, self.delta).expect("family matches").distinct
                as usize;
        }
        RateCheck::new(name, self.trials, n, fired, if same { self.delta } else { 1.0 - self.delta }, same)
    }

    /// CMS test with sketches sized from `|Z|`; also records the sandwich
    /// gap against the exact empirical distance on the same samples.
    fn cms(&self, name: &str, same: bool, n: u64, sandwich: &mut SandwichCheck) -> RateCheck {
        let mut rng = ChaCha8Rng::seed_from_u64(name_seed(self.seed, name));
        let al = self.inst.alphabet();
        let steps = self.inst.steps();
        let (_, eps) = cms_sizing(al, steps, self.delta, n, &CmsParams::default());
        let mut fired = 0;
        for _ in 0..self.trials {
            let (z1, z2) = self.draw(same, n, &mut rng);
            let sketch_seed: u64 = rng.gen();
            let mut s1 = sized_sketched_store(al, steps, self.delta, n, &CmsParams::default(), sketch_seed)
                .expect("valid sketch sizing");
            let mut s2 = s1.empty_like();
            for (z, s) in [(&z1, &mut s1), (&z2, &mut s2)] {
                for (tr, &c) in &z.traces {
                    s.insert(tr, c);
                }
            }
            let out = test_distinct_cms(self.inst.t, &s1, &s2, self.delta, al, Enumeration::default())
                .expect("compatible sketches");
            fired += out.distinct as usize;
            let exact = prefix_linf(&z1, &z2).expect("equal-length stores");
            let gap = (out.distance - exact).abs();
            sandwich.trials += 1;
            sandwich.max_gap_over_eps = sandwich.max_gap_over_eps.max(gap / eps);
            if gap > 2.0 * eps + 1e-12 {
                sandwich.violations += 1;
            }
        }
        RateCheck::new(name, self.trials, n, fired, if same { self.delta } else { 1.0 - self.delta }, same)
    }
}

/// Same-distribution firing rates and detection rates at the lemma sample
/// sizes for all three tests, `δ = 0.1`, 500 trials each.
pub fn run_lemma_checks(seed: u64) -> LemmaReport {
    run_lemma_checks_with(seed, DEFAULT_TRIALS, DEFAULT_DELTA)
}

pub fn run_lemma_checks_with(seed: u64, trials: usize, delta: f64) -> LemmaReport {
    let inst = OracleInstance::find(seed, 0.2).expect("synthetic generator yields a separated pair");
    let (n_prefix, n_cms, n_lang) = detection_sizes(&inst, delta);
    // same-distribution runs use the detection sizes too, so both lemmas
    // are exercised at the sample sizes the learner would see
    let r = Runner { inst: &inst, delta, trials, seed };
    let mut sandwich = SandwichCheck { trials: 0, violations: 0, max_gap_over_eps: 0.0, pass: true };
    let rates = vec![
        r.prefix("prefix_same_distribution", true, n_prefix),
        r.prefix("prefix_detection", false, n_prefix),
        r.cms("cms_same_distribution", true, n_cms, &mut sandwich),
        r.cms("cms_detection", false, n_cms, &mut sandwich),
        r.lang("lang_same_distribution", true, n_lang),
        r.lang("lang_detection", false, n_lang),
    ];
    sandwich.pass = sandwich.violations == 0;
    let pass = sandwich.pass && rates.iter().all(|c| c.pass);
    LemmaReport {
        seed,
        delta,
        instance_seed: inst.synthetic_seed,
        mu_prefix: inst.mu_prefix,
        mu_lang: inst.mu_lang,
        family_size: inst.family.len(),
        rates,
        sandwich,
        pass,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmsGuaranteeReport {
    pub trials: usize,
    pub keys: usize,
    pub updates: usize,
    pub delta_c: f64,
    pub epsilon: f64,
    pub queries: usize,
    pub underestimates: usize,
    pub overestimates: usize,
    pub over_rate: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Random count streams of `updates` increments over `keys` keys, skewed
/// toward low keys. Every key is queried after each stream.
pub fn cms_guarantee(seed: u64, trials: usize, keys: usize, updates: usize, delta_c: f64, epsilon: f64) -> CmsGuaranteeReport {
    let mut rng = ChaCha8Rng::seed_from_u64(name_seed(seed, "cms_guarantee"));
    let (mut under, mut over) = (0, 0);
    for _ in 0..trials {
        let mut sk = Sketch::new(delta_c, epsilon, rng.gen()).expect("valid sketch parameters");
        let mut truth = vec![0u64; keys];
        for _ in 0..updates {
            let u: f64 = rng.gen();
            let k = ((u * u * keys as f64) as usize).min(keys - 1);
            let c = rng.gen_range(1..=3u64);
            truth[k] += c;
            sk.update(&[k as u32], c);
        }
        let l1: u64 = truth.iter().sum();
        for (k, &v) in truth.iter().enumerate() {
            let est = sk.query(&[k as u32]);
            under += (est < v) as usize;
            over += (est as f64 > v as f64 + epsilon * l1 as f64) as usize;
        }
    }
    let queries = trials * keys;
    let over_rate = over as f64 / queries as f64;
    let bound = delta_c + binomial_slack(delta_c, queries);
    CmsGuaranteeReport {
        trials,
        keys,
        updates,
        delta_c,
        epsilon,
        queries,
        underestimates: under,
        overestimates: over,
        over_rate,
        bound,
        pass: under == 0 && over_rate <= bound,
    }
}

/// Alphabet with `n_actions` actions, one non-terminal observation and one
/// reward value, so a non-terminal step is just an action symbol.
pub fn tiny_alphabet(n_actions: usize, steps: usize) -> Alphabet {
    let actions: Vec<String> = ["a", "b", "c", "d"][..n_actions].iter().map(|s| s.to_string()).collect();
    Alphabet::new(
        AlphabetSpec {
            actions,
            start_action: "s".into(),
            obs_features: vec![vec!["x".into(), "⊥".into()]],
            rewards: vec![0.0],
            terminal_obs: vec!["⊥".into()],
        },
        steps,
    )
    .expect("valid alphabet")
}

/// Every trace of `steps` real-action, non-terminal steps.
pub fn all_traces(al: &Alphabet, steps: usize) -> Vec<Vec<StepId>> {
    let symbols: Vec<StepId> = (0..al.n_steps())
        .filter(|&id| {
            let s = al.decode_step(id);
            s.action < al.n_actions() && s.obs != al.terminal_obs()
        })
        .collect();
    let mut out: Vec<Vec<StepId>> = vec![Vec::new()];
    for _ in 0..steps {
        out = out.iter().flat_map(|p| symbols.iter().map(move |&s| [&p[..], &[s]].concat())).collect();
    }
    out
}

fn exact_pattern(al: &Alphabet, prefix: &[StepId], steps: usize) -> Lang {
    let mut seps = vec![Sep::Empty; prefix.len()];
    seps.push(if prefix.len() < steps { Sep::Gap } else { Sep::Empty });
    let elems = prefix.iter().map(|&s| Lang::Atom(StepAtom::exact(al, &al.decode_step(s)))).collect();
    Lang::Concat(Pattern::new(seps, elems, steps * al.tokens_per_step()))
}

/// `{e}` for every trace `e`.
pub fn singleton_family(al: &Alphabet, steps: usize) -> LanguageFamily {
    let langs = all_traces(al, steps).iter().map(|e| exact_pattern(al, e, steps)).collect();
    LanguageFamily::from_languages(langs, steps * al.tokens_per_step(), al.tokens_per_step())
}

/// Every non-empty set of traces.
pub fn powerset_family(al: &Alphabet, steps: usize) -> LanguageFamily {
    let singles: Vec<Lang> = all_traces(al, steps).iter().map(|e| exact_pattern(al, e, steps)).collect();
    assert!(singles.len() <= 16, "powerset family is exponential in the trace count");
    let langs = (1u32..1 << singles.len())
        .map(|mask| Lang::union_of(singles.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|x| x.1.clone()).collect()))
        .collect();
    LanguageFamily::from_languages(langs, steps * al.tokens_per_step(), al.tokens_per_step())
}

/// `x·E*` for every non-empty prefix `x`.
pub fn prefix_family(al: &Alphabet, steps: usize) -> LanguageFamily {
    let langs = (1..=steps).flat_map(|u| all_traces(al, u)).map(|x| exact_pattern(al, &x, steps)).collect();
    LanguageFamily::from_languages(langs, steps * al.tokens_per_step(), al.tokens_per_step())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionCheck {
    pub name: String,
    pub cases: usize,
    pub max_error: f64,
    pub pass: bool,
}

fn random_store(traces: &[Vec<StepId>], steps: usize, rng: &mut impl Rng) -> ExactStore {
    let mut z = ExactStore::new(steps);
    for t in traces {
        // zero counts are common so supports differ
        let c = if rng.gen_bool(0.3) { 0 } else { rng.gen_range(1..=20u64) };
        if c > 0 {
            z.insert(t, c);
        }
    }
    if z.n == 0 {
        z.insert(&traces[0], 1);
    }
    z
}

fn probs(z: &ExactStore, traces: &[Vec<StepId>]) -> Vec<f64> {
    traces.iter().map(|t| *z.traces.get(t).unwrap_or(&0) as f64 / z.n as f64).collect()
}

/// `L_X` against direct computations on 2- and 3-symbol alphabets with
/// traces of 1 and 2 steps: singletons give `L∞`, the powerset gives
/// `TV = L₁/2`, prefix languages give `L∞^p`.
pub fn reduction_identities(seed: u64, cases_per_shape: usize) -> Vec<ReductionCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(name_seed(seed, "reductions"));
    let mut checks: Vec<ReductionCheck> = ["singleton_linf", "powerset_tv", "prefix_linf"]
        .iter()
        .map(|n| ReductionCheck { name: n.to_string(), cases: 0, max_error: 0.0, pass: true })
        .collect();
    for n_actions in [2, 3] {
        for steps in [1, 2] {
            let al = tiny_alphabet(n_actions, steps);
            let traces = all_traces(&al, steps);
            let fams = [singleton_family(&al, steps), powerset_family(&al, steps), prefix_family(&al, steps)];
            for _ in 0..cases_per_shape {
                let z1 = random_store(&traces, steps, &mut rng);
                let z2 = random_store(&traces, steps, &mut rng);
                let (p1, p2) = (probs(&z1, &traces), probs(&z2, &traces));
                let diffs: Vec<f64> = p1.iter().zip(&p2).map(|(a, b)| (a - b).abs()).collect();
                let linf = diffs.iter().copied().fold(0.0, f64::max);
                let tv = diffs.iter().sum::<f64>() / 2.0;
                let mut pre = 0f64;
                for u in 1..=steps {
                    let mut mass: HashMap<&[StepId], (f64, f64)> = HashMap::new();
                    for (i, t) in traces.iter().enumerate() {
                        let e = mass.entry(&t[..u]).or_default();
                        e.0 += p1[i];
                        e.1 += p2[i];
                    }
                    pre = mass.values().map(|(a, b)| (a - b).abs()).fold(pre, f64::max);
                }
                let lib_prefix = prefix_linf(&z1, &z2).expect("equal-length stores");
                for (check, (fam, want)) in checks.iter_mut().zip(fams.iter().zip([linf, tv, pre])) {
                    let got = lang_metric(fam, &al, &z1, &z2).expect("family matches alphabet");
                    let mut err = (got - want).abs();
                    if check.name == "prefix_linf" {
                        err = err.max((lib_prefix - want).abs());
                    }
                    check.cases += 1;
                    check.max_error = check.max_error.max(err);
                }
            }
        }
    }
    for c in &mut checks {
        c.pass = c.max_error <= 1e-12;
    }
    checks
}

/// Exact prefix and `X_{1,1,1}` distinguishability per layer of a ground
/// truth RDP under the uniform policy.
pub fn distinguishability_profile(rdp: &GroundTruthRdp) -> Result<(Vec<f64>, Vec<f64>), oracle::OracleError> {
    let policy = BehaviorPolicy::uniform();
    Ok((
        oracle::layer_distinguishability(rdp, &policy, OracleMetric::Prefix)?,
        oracle::layer_distinguishability(rdp, &policy, OracleMetric::Language(1, 1, 1))?,
    ))
}

/// True when `learned` has the ground truth's layer sizes and transition
/// graph, up to renaming states. Only the structure is compared; output
/// distributions are estimated downstream and not part of the check.
pub fn matches_ground_truth(learned: &LearnedRdp, gt: &GroundTruthRdp) -> bool {
    if learned.layers.iter().map(Vec::len).ne(gt.layers.iter().map(Vec::len)) {
        return false;
    }
    let mut fwd: HashMap<StateId, u32> = HashMap::from([(learned.initial(), gt.initial())]);
    let mut back: HashMap<u32, StateId> = HashMap::from([(gt.initial(), learned.initial())]);
    for (&(q, a, o), &to) in &learned.trans {
        let Some(&gq) = fwd.get(&q) else { return false };
        let Some(gto) = gt.next(gq, a, o) else { return false };
        match (fwd.get(&to), back.get(&gto)) {
            (Some(&x), Some(&y)) if x == gto && y == to => {}
            (None, None) => {
                fwd.insert(to, gto);
                back.insert(gto, to);
            }
            _ => return false,
        }
    }
    // every ground-truth edge out of a reached state must be present
    let edges = gt.trans.keys().filter(|(q, _, _)| back.contains_key(q)).count();
    edges == learned.trans.len()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimalityRun {
    pub seed: u64,
    pub horizon: usize,
    pub truth_states: usize,
    pub learned_states: usize,
    pub mu_prefix: f64,
    pub isomorphic: bool,
}

/// Draws a synthetic ground truth from `seed`, samples `n` episodes under
/// the uniform policy and learns with `tester`.
pub fn minimality_run(
    params: &SyntheticParams,
    seed: u64,
    n: usize,
    tester: &TesterConfig,
) -> Result<MinimalityRun, LearnError> {
    let (env, gt, _) = generate(params, seed).map_err(|e| LearnError::Format(e.to_string()))?;
    let policy = BehaviorPolicy::uniform();
    let ds = generate_dataset(&env, &policy, n, seed ^ 0x5eed).map_err(|e| LearnError::Format(e.to_string()))?;
    let rdp = adact_h(&ds, tester)?;
    let mu = oracle::distinguishability(&gt, &policy, OracleMetric::Prefix).unwrap_or(f64::NAN);
    Ok(MinimalityRun {
        seed,
        horizon: params.horizon,
        truth_states: gt.n_states(),
        learned_states: rdp.n_states(),
        mu_prefix: mu,
        isomorphic: matches_ground_truth(&rdp, &gt),
    })
}

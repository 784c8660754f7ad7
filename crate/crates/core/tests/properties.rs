//! Cross-module invariants as seeded property checks. Each proptest block
//! pins its RNG seed so runs are reproducible.

use std::collections::HashSet;

use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rdp_forge::cms::{dimensions, Sketch};
use rdp_forge::environments::synthetic::{generate, SyntheticParams};
use rdp_forge::environments::{generate_dataset, ground_truth_rdp, make_env, BehaviorPolicy, EnvParams};
use rdp_forge::languages::{estimate_prob, Lang, LanguageFamily, Sep};
use rdp_forge::learner::adact_h;
use rdp_forge::metrics::{lang_metric, prefix_linf, ExactStore, TesterConfig};
use rdp_forge::planner::{exact_model, q_value, value_iteration};
use rdp_forge::trace::{Alphabet, Dataset, Episode, Step, StepId, Token};
use rdp_forge::verification::{self, all_traces, matches_ground_truth, tiny_alphabet};

const DOMAINS: [&str; 5] = ["corridor", "tmaze", "cookie", "cheese", "minihall"];

fn config(seed: u64, cases: u32) -> ProptestConfig {
    ProptestConfig { cases, rng_seed: RngSeed::Fixed(seed), failure_persistence: None, ..ProptestConfig::default() }
}

fn steps_of(al: &Alphabet, ids: &[StepId]) -> Vec<Step> {
    ids.iter().map(|&i| al.decode_step(i)).collect()
}

// ---- traces ----

proptest! {
    #![proptest_config(config(11, 64))]

    #[test]
    fn step_tokenization_is_injective(env_idx in 0usize..5, a in any::<u32>(), b in any::<u32>()) {
        let env = make_env(DOMAINS[env_idx], &EnvParams::default()).unwrap();
        let al = env.alphabet();
        let (a, b) = (a % al.n_steps(), b % al.n_steps());
        let (sa, sb) = (al.decode_step(a), al.decode_step(b));
        let (ta, tb) = (al.tokenize_steps(&[sa]), al.tokenize_steps(&[sb]));
        prop_assert_eq!(ta.len(), al.n_features() + 2);
        prop_assert_eq!(a == b, ta == tb);
    }

    #[test]
    fn episodes_have_h_plus_one_steps_and_full_token_length(env_idx in 0usize..5, seed in any::<u64>()) {
        let env = make_env(DOMAINS[env_idx], &EnvParams::default()).unwrap();
        let ds = generate_dataset(&env, &BehaviorPolicy::uniform(), 20, seed).unwrap();
        let al = &ds.alphabet;
        let h = al.horizon();
        for e in &ds.episodes {
            prop_assert_eq!(e.steps.len(), h + 1);
            prop_assert_eq!(e.tokenize(al, 0, h).unwrap().len(), (h + 1) * (al.n_features() + 2));
        }
    }

    #[test]
    fn dataset_file_round_trip(env_idx in 0usize..5, seed in any::<u64>(), n in 1usize..40) {
        let env = make_env(DOMAINS[env_idx], &EnvParams::default()).unwrap();
        let ds = generate_dataset(&env, &BehaviorPolicy::uniform(), n, seed).unwrap();
        let mut buf = Vec::new();
        ds.write_to(&mut buf).unwrap();
        prop_assert_eq!(Dataset::read_from(buf.as_slice()).unwrap(), ds);
    }
}

// ---- environments ----

proptest! {
    #![proptest_config(config(12, 16))]

    #[test]
    fn generation_is_a_pure_function_of_its_inputs(env_idx in 0usize..5, seed in any::<u64>()) {
        let env = make_env(DOMAINS[env_idx], &EnvParams::default()).unwrap();
        let a = generate_dataset(&env, &BehaviorPolicy::uniform(), 50, seed).unwrap();
        let b = generate_dataset(&env, &BehaviorPolicy::uniform(), 50, seed).unwrap();
        prop_assert_eq!(&a, &b);
        let c = generate_dataset(&env, &BehaviorPolicy::uniform(), 50, seed ^ 1).unwrap();
        prop_assert_ne!(a.episodes, c.episodes);
    }
}

#[test]
fn ground_truth_transitions_advance_one_layer() {
    for name in ["corridor", "tmaze", "cookie"] {
        let env = make_env(name, &EnvParams::default()).unwrap();
        let rdp = ground_truth_rdp(&env).unwrap();
        for (&(q, _, _), &to) in &rdp.trans {
            assert_eq!(rdp.layer_of[to as usize], rdp.layer_of[q as usize] + 1, "{name}");
        }
    }
}

/// Walk East to the junction, then turn toward the goal shown at the start.
#[test]
fn tmaze_shortest_path_policy_returns_four() {
    let env = make_env("tmaze", &EnvParams::default()).unwrap();
    let al = env.alphabet();
    let east = al.action_from_symbol("East").unwrap();
    let north = al.action_from_symbol("North").unwrap();
    let south = al.action_from_symbol("South").unwrap();
    let goal_south = al.obs_from_symbols(&["011".into()]).unwrap();
    let junction = al.obs_from_symbols(&["010".into()]).unwrap();
    assert_eq!(env.optimal_return(), Some(4.0));
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut total = 0.0;
    for _ in 0..200 {
        let (s0, mut state) = env.sample_step(0, 0, al.start_action(), &mut rng);
        let turn = if s0.obs == goal_south { south } else { north };
        let mut obs = s0.obs;
        let mut ret = al.reward_value(s0.reward);
        for t in 1..=env.horizon() {
            let a = if obs == junction { turn } else { east };
            let (s, next) = env.sample_step(state, t, a, &mut rng);
            ret += al.reward_value(s.reward);
            obs = s.obs;
            state = next;
        }
        total += ret;
    }
    assert_eq!(total / 200.0, 4.0);
}

// ---- count-min sketch ----

proptest! {
    #![proptest_config(config(13, 64))]

    #[test]
    fn sketch_never_underestimates(
        stream in prop::collection::vec((prop::collection::vec(0u32..6, 1..4), 1u64..5), 1..300),
        seed in any::<u64>(),
    ) {
        let mut sk = Sketch::new(0.1, 0.05, seed).unwrap();
        let mut truth = std::collections::HashMap::new();
        for (k, c) in &stream {
            sk.update(k, *c);
            *truth.entry(k.clone()).or_insert(0u64) += c;
        }
        for (k, c) in &truth {
            prop_assert!(sk.query(k) >= *c);
        }
        prop_assert_eq!(sk.total(), truth.values().sum::<u64>());
    }

    #[test]
    fn sketch_merge_commutes(
        a in prop::collection::vec((0u32..50, 1u64..5), 0..100),
        b in prop::collection::vec((0u32..50, 1u64..5), 0..100),
        seed in any::<u64>(),
    ) {
        let mut x = Sketch::new(0.05, 0.1, seed).unwrap();
        let mut y = x.empty_like();
        for (k, c) in &a { x.update(&[*k], *c); }
        for (k, c) in &b { y.update(&[*k], *c); }
        let xy = Sketch::merge(&x, &y).unwrap();
        let yx = Sketch::merge(&y, &x).unwrap();
        for j in 0..xy.depth() {
            prop_assert_eq!(xy.row(j), yx.row(j));
        }
    }

    #[test]
    fn sketch_dimensions_follow_ceiling_formulas(delta_c in 1e-6f64..0.99, epsilon in 1e-4f64..1.0) {
        let (d, w) = dimensions(delta_c, epsilon).unwrap();
        prop_assert_eq!(d, (1.0 / delta_c).ln().ceil().max(1.0) as usize);
        prop_assert_eq!(w, (std::f64::consts::E / epsilon).ceil() as usize);
        let sk = Sketch::new(delta_c, epsilon, 0).unwrap();
        prop_assert_eq!((sk.depth(), sk.width()), (d, w));
    }
}

#[test]
fn sketch_overestimate_tail_within_binomial_noise() {
    let r = verification::cms_guarantee(13, 200, 500, 5000, 0.05, 0.004);
    assert_eq!(r.underestimates, 0);
    assert!(r.over_rate <= r.bound, "{r:?}");
}

// ---- languages ----

/// Step-level backtracking matcher written independently of the library's
/// token automaton.
fn denotes(lang: &Lang, al: &Alphabet, steps: &[Step]) -> bool {
    fn go(p: &rdp_forge::Pattern, al: &Alphabet, steps: &[Step], k: usize, pos: usize) -> bool {
        let n = steps.len();
        if k == p.elems.len() {
            return p.seps[k] == Sep::Gap || pos == n;
        }
        let last = if p.seps[k] == Sep::Gap { n } else { pos + 1 };
        (pos..last.min(n)).any(|s| denotes(&p.elems[k], al, &steps[s..s + 1]) && go(p, al, steps, k + 1, s + 1))
    }
    match lang {
        Lang::Atom(a) => steps.len() == 1 && a.matches(al, &steps[0]),
        Lang::Union(v) => v.iter().any(|l| denotes(l, al, steps)),
        Lang::Inter(v) => v.iter().all(|l| denotes(l, al, steps)),
        Lang::Concat(p) => steps.len() * al.tokens_per_step() == p.ell && go(p, al, steps, 0, 0),
    }
}

/// Every step sequence of the given length when that is at most 200 of
/// them, otherwise the non-terminal ones.
fn enumerate(al: &Alphabet, steps: usize) -> Vec<Vec<StepId>> {
    let ids = al.n_steps() as usize;
    if ids.pow(steps as u32) > 200 {
        return all_traces(al, steps);
    }
    let mut out = vec![vec![]];
    for _ in 0..steps {
        out = out.into_iter().flat_map(|t: Vec<StepId>| (0..ids as u32).map(move |s| [t.clone(), vec![s]].concat())).collect();
    }
    out
}

fn small_shapes() -> Vec<(Alphabet, usize)> {
    vec![(tiny_alphabet(2, 2), 2), (tiny_alphabet(3, 2), 2), (tiny_alphabet(2, 3), 3), (tiny_alphabet(3, 1), 1)]
}

fn membership(fam: &LanguageFamily, al: &Alphabet, traces: &[Vec<StepId>]) -> Vec<Vec<bool>> {
    let toks: Vec<Vec<Token>> = traces.iter().map(|t| al.tokenize_steps(&steps_of(al, t))).collect();
    fam.languages.iter().enumerate().map(|(i, _)| toks.iter().map(|t| fam.contains(i, t).unwrap()).collect()).collect()
}

#[test]
fn membership_agrees_with_brute_force_denotation() {
    for (al, steps) in small_shapes() {
        let width = al.tokens_per_step();
        let traces = enumerate(&al, steps);
        assert!(traces.len() <= 200 && steps * width <= 9);
        for (i, j, k) in [(1, 1, 1), (2, 1, 1), (3, 1, 1), (1, 2, 1), (2, 2, 1), (1, 1, 2), (2, 1, 2)] {
            let Ok(fam) = LanguageFamily::build(&al, i, j, k, steps * width) else { continue };
            for lang in &fam.languages {
                for t in &traces {
                    let s = steps_of(&al, t);
                    let want = denotes(lang, &al, &s);
                    assert_eq!(lang.contains_tokens(&al.tokenize_steps(&s), width), want, "X{i}{j}{k} {lang:?} {t:?}");
                    assert_eq!(lang.contains_steps(&al, &s), want);
                }
            }
        }
    }
}

#[test]
fn families_grow_along_every_index() {
    for (al, steps) in small_shapes() {
        let ell = steps * al.tokens_per_step();
        let traces = enumerate(&al, steps);
        let sets = |i, j, k| -> Option<HashSet<Vec<bool>>> {
            LanguageFamily::build(&al, i, j, k, ell).ok().map(|f| membership(&f, &al, &traces).into_iter().collect())
        };
        for (lo, hi) in [((1, 1, 1), (2, 1, 1)), ((2, 1, 1), (3, 1, 1)), ((1, 1, 1), (1, 2, 1)), ((1, 1, 1), (1, 1, 2)), ((2, 1, 1), (2, 1, 2))]
        {
            let (Some(a), Some(b)) = (sets(lo.0, lo.1, lo.2), sets(hi.0, hi.1, hi.2)) else { continue };
            assert!(a.is_subset(&b), "{lo:?} not within {hi:?}");
        }
        // structural growth in k
        let x = LanguageFamily::build(&al, 1, 1, 1, ell).unwrap();
        let bx = LanguageFamily::build(&al, 1, 1, 2, ell).unwrap();
        let bset: HashSet<&Lang> = bx.languages.iter().collect();
        assert!(x.languages.iter().all(|l| bset.contains(l)));
    }
}

proptest! {
    #![proptest_config(config(14, 64))]

    #[test]
    fn estimate_is_member_fraction(picks in prop::collection::vec(0usize..36, 1..60), lang_idx in any::<usize>()) {
        let al = tiny_alphabet(2, 2);
        let traces = enumerate(&al, 2);
        let fam = LanguageFamily::build(&al, 2, 2, 1, 2 * al.tokens_per_step()).unwrap();
        let lang = &fam.languages[lang_idx % fam.len()];
        let z: Vec<Vec<Token>> = picks.iter().map(|&i| al.tokenize_steps(&steps_of(&al, &traces[i % traces.len()]))).collect();
        let k = z.iter().filter(|t| lang.contains_tokens(t, fam.width)).count();
        let p = estimate_prob(lang, &z, fam.ell, fam.width).unwrap();
        prop_assert_eq!(p, k as f64 / z.len() as f64);
        prop_assert!((0.0..=1.0).contains(&p));
    }
}

// ---- metrics ----

fn store(traces: &[Vec<StepId>], counts: &[u64]) -> ExactStore {
    let mut z = ExactStore::new(traces[0].len());
    for (t, &c) in traces.iter().zip(counts) {
        if c > 0 {
            z.insert(t, c);
        }
    }
    if z.n == 0 {
        z.insert(&traces[0], 1);
    }
    z
}

fn counts() -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(prop_oneof![Just(0u64), 1u64..8], 36)
}

proptest! {
    #![proptest_config(config(15, 1000))]

    #[test]
    fn metrics_are_pseudometrics(a in counts(), b in counts(), c in counts()) {
        let al = tiny_alphabet(2, 2);
        let traces = enumerate(&al, 2);
        let fam = LanguageFamily::build(&al, 1, 1, 1, 2 * al.tokens_per_step()).unwrap();
        let (za, zb, zc) = (store(&traces, &a), store(&traces, &b), store(&traces, &c));
        for d in [
            |x: &ExactStore, y: &ExactStore, _: &LanguageFamily, _: &Alphabet| prefix_linf(x, y).unwrap(),
            |x: &ExactStore, y: &ExactStore, f: &LanguageFamily, al: &Alphabet| lang_metric(f, al, x, y).unwrap(),
        ] {
            let ab = d(&za, &zb, &fam, &al);
            prop_assert_eq!(d(&za, &za, &fam, &al), 0.0);
            prop_assert!((ab - d(&zb, &za, &fam, &al)).abs() < 1e-15);
            prop_assert!(ab <= d(&za, &zc, &fam, &al) + d(&zc, &zb, &fam, &al) + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(config(16, 200))]

    #[test]
    fn metric_grows_with_the_family(a in counts(), b in counts()) {
        let al = tiny_alphabet(2, 2);
        let ell = 2 * al.tokens_per_step();
        let traces = enumerate(&al, 2);
        let (za, zb) = (store(&traces, &a), store(&traces, &b));
        let d = |i, j, k| lang_metric(&LanguageFamily::build(&al, i, j, k, ell).unwrap(), &al, &za, &zb).unwrap();
        let base = d(1, 1, 1);
        for (i, j, k) in [(2, 1, 1), (1, 2, 1), (1, 1, 2)] {
            prop_assert!(base <= d(i, j, k) + 1e-15);
        }
        prop_assert!(d(2, 1, 1) <= d(3, 1, 1) + 1e-15);
    }
}

#[test]
fn reduction_identities_hold() {
    for c in verification::reduction_identities(16, 100) {
        assert!(c.pass && c.max_error <= 1e-12, "{c:?}");
    }
}

#[test]
fn test_rates_and_sketch_sandwich() {
    let r = verification::run_lemma_checks_with(17, 500, 0.1);
    for c in &r.rates {
        assert!(c.pass, "{c:?}");
    }
    assert_eq!(r.sandwich.violations, 0);
    assert!(r.pass);
}

// ---- learner ----

fn learned_invariants(ds: &Dataset, tester: &TesterConfig) {
    let rdp = adact_h(ds, tester).unwrap();
    for (&(q, _, _), &to) in &rdp.trans {
        assert_eq!(rdp.layer_of[to as usize], rdp.layer_of[q as usize] + 1);
    }
    for layer in &rdp.layers {
        let mass: u64 = layer.iter().map(|&q| rdp.support[q as usize]).sum();
        assert_eq!(mass, ds.len() as u64);
    }
    let again = adact_h(ds, tester).unwrap();
    assert_eq!(again.layers, rdp.layers);
    assert_eq!(again.trans, rdp.trans);
    let v = |r| value_iteration(r, &rdp_forge::estimate_outputs(r, ds)).values;
    assert_eq!(v(&rdp), v(&again));
}

#[test]
fn learner_layering_mass_and_determinism() {
    for (name, n) in [("corridor", 5000), ("tmaze", 5000), ("cheese", 5000)] {
        let env = make_env(name, &EnvParams::default()).unwrap();
        let ds = generate_dataset(&env, &BehaviorPolicy::uniform(), n, 18).unwrap();
        // the sketched distance enumerates prefixes exhaustively; cap it to keep this quick
        let mut cms = TesterConfig::cms(0.05);
        cms.cms.depth_cap = Some(3);
        for tester in [TesterConfig::prefix(0.05), cms, TesterConfig::language(0.05, (1, 1, 1))] {
            learned_invariants(&ds, &tester);
        }
    }
}

#[test]
fn two_state_ground_truth_is_recovered() {
    let params = SyntheticParams { horizon: 4, max_states: 2, mu_floor: 0.2, occupancy_floor: 0.02, ..Default::default() };
    for seed in 0..10 {
        let r = verification::minimality_run(&params, seed, 20_000, &TesterConfig::prefix(0.05)).unwrap();
        assert!(r.isomorphic, "{r:?}");
    }
}

#[test]
fn structural_match_rejects_a_perturbed_automaton() {
    let params = SyntheticParams { horizon: 3, max_states: 2, mu_floor: 0.2, ..Default::default() };
    let (env, gt, _) = generate(&params, 3).unwrap();
    let ds = generate_dataset(&env, &BehaviorPolicy::uniform(), 20_000, 3).unwrap();
    let mut rdp = adact_h(&ds, &TesterConfig::prefix(0.05)).unwrap();
    assert!(matches_ground_truth(&rdp, &gt));
    // drop one edge out of the deepest branching layer
    let key = *rdp.trans.keys().rev().find(|(q, _, _)| rdp.layer_of[*q as usize] < gt.horizon()).unwrap();
    rdp.trans.remove(&key);
    assert!(!matches_ground_truth(&rdp, &gt));
}

// ---- planner ----

/// Best value over every deterministic state-to-action map.
fn enumerate_policies(gt: &rdp_forge::GroundTruthRdp) -> f64 {
    let h = gt.horizon();
    let decision: Vec<u32> = (1..=h).flat_map(|t| gt.layers[t].iter().copied()).collect();
    let n_act = gt.alphabet.n_actions();
    let total = (n_act as u64).pow(decision.len() as u32);
    assert!(total <= 100_000);
    let mut best = f64::NEG_INFINITY;
    for code in 0..total {
        let mut choice = vec![0u32; gt.n_states()];
        let mut c = code;
        for &q in &decision {
            choice[q as usize] = (c % n_act as u64) as u32;
            c /= n_act as u64;
        }
        let mut v = vec![0.0; gt.n_states()];
        for t in (0..=h).rev() {
            for &q in &gt.layers[t] {
                let a = if t == 0 { gt.alphabet.start_action() } else { choice[q as usize] };
                v[q as usize] = gt
                    .outputs(q, a)
                    .iter()
                    .map(|o| {
                        let next = gt.next(q, a, o.obs).map_or(0.0, |n| v[n as usize]);
                        o.prob * (gt.alphabet.reward_value(o.reward) + next)
                    })
                    .sum();
            }
        }
        best = best.max(v[gt.initial() as usize]);
    }
    best
}

proptest! {
    #![proptest_config(config(19, 24))]

    #[test]
    fn value_iteration_matches_policy_enumeration(seed in any::<u64>()) {
        let params = SyntheticParams { horizon: 3, max_states: 3, mu_floor: 0.0, ..Default::default() };
        let (_, gt, _) = generate(&params, seed).unwrap();
        let (rdp, est) = exact_model(&gt);
        let pol = value_iteration(&rdp, &est);
        prop_assert!((pol.value0() - enumerate_policies(&gt)).abs() < 1e-9);
        let bound = (gt.horizon() + 1) as f64 * gt.alphabet.max_abs_reward();
        prop_assert!(pol.values.iter().all(|v| v.abs() <= bound + 1e-12));
    }

    #[test]
    fn shifting_rewards_keeps_the_greedy_actions(seed in any::<u64>(), c in -2.0f64..2.0) {
        let params = SyntheticParams { horizon: 3, max_states: 3, mu_floor: 0.0, ..Default::default() };
        let (_, gt, _) = generate(&params, seed).unwrap();
        let mut shifted = gt.clone();
        let mut spec = gt.alphabet.spec().clone();
        spec.rewards.iter_mut().for_each(|r| *r += c);
        shifted.alphabet = Alphabet::new(spec, gt.horizon()).unwrap();
        let (r1, e1) = exact_model(&gt);
        let (r2, e2) = exact_model(&shifted);
        let (p1, p2) = (value_iteration(&r1, &e1), value_iteration(&r2, &e2));
        for t in 1..=gt.horizon() {
            for &q in &gt.layers[t] {
                // ties may break either way; the shifted choice must stay optimal
                let a = p2.action(q).unwrap();
                prop_assert!((q_value(&r1, &e1, &p1.values, q, a).unwrap() - p1.values[q as usize]).abs() < 1e-9);
            }
        }
        prop_assert!((p2.value0() - p1.value0() - c * (gt.horizon() + 1) as f64).abs() < 1e-9);
    }

    #[test]
    fn extra_reward_mass_never_lowers_the_value(seed in any::<u64>(), pick in any::<usize>(), eps in 0.0f64..0.2) {
        let params = SyntheticParams { horizon: 3, max_states: 3, mu_floor: 0.0, ..Default::default() };
        let (_, gt, _) = generate(&params, seed).unwrap();
        let (rdp, est) = exact_model(&gt);
        let v0 = value_iteration(&rdp, &est).value0();
        let pairs: Vec<(usize, usize)> = (0..gt.n_states())
            .flat_map(|q| (0..gt.alphabet.n_actions() as usize).map(move |a| (q, a)))
            .filter(|&(q, a)| est.per_state[q][a].rewards.get(&0).copied().unwrap_or(0.0) > 0.0)
            .collect();
        let (q, a) = pairs[pick % pairs.len()];
        let mut more = est.clone();
        let out = &mut more.per_state[q][a];
        let moved = eps.min(out.rewards[&0]);
        *out.rewards.get_mut(&0).unwrap() -= moved;
        *out.rewards.entry(1).or_default() += moved;
        prop_assert!(value_iteration(&rdp, &more).value0() >= v0 - 1e-12);
    }
}

#[test]
fn learned_values_are_bounded_by_horizon_times_reward() {
    for name in DOMAINS {
        let env = make_env(name, &EnvParams::default()).unwrap();
        let ds = generate_dataset(&env, &BehaviorPolicy::uniform(), 3000, 20).unwrap();
        let rdp = adact_h(&ds, &TesterConfig::language(0.05, (1, 1, 1))).unwrap();
        let pol = value_iteration(&rdp, &rdp_forge::estimate_outputs(&rdp, &ds));
        let bound = (ds.horizon() + 1) as f64 * ds.alphabet.max_abs_reward();
        assert!(pol.values.iter().all(|v| v.abs() <= bound + 1e-9), "{name}");
    }
}

#[test]
fn random_episodes_validate_against_their_alphabet() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let env = make_env("corridor", &EnvParams::default()).unwrap();
    let al = env.alphabet();
    for _ in 0..200 {
        let steps: Vec<Step> = (0..=al.horizon()).map(|_| al.decode_step(rng.gen_range(0..al.n_steps()))).collect();
        let e = Episode::new(steps);
        let ok = al.validate_episode(&e, 0).is_ok();
        let well_formed = e.steps[0].action == al.start_action()
            && e.steps[1..].iter().all(|s| s.action != al.start_action())
            && e.steps.last().unwrap().obs == al.terminal_obs()
            && e.steps[..al.horizon()].iter().all(|s| s.obs != al.terminal_obs());
        assert_eq!(ok, well_formed, "{e:?}");
    }
}

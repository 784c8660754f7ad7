//! Episodes, factored alphabets, tokenization and the dataset file format.
//!
//! Symbols are interned: actions, feature values and rewards are small
//! integer ids into the [`Alphabet`]. A joint observation is a mixed-radix
//! id over the feature domains. Episodes always have `horizon + 1` steps,
//! the first one taken with the dummy start action and the last one
//! emitting the terminal observation.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub type ActionId = u32;
pub type ObsId = u32;
pub type RewardId = u32;
/// Joint `(action, observation, reward)` id, see [`Alphabet::step_id`].
pub type StepId = u32;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("invalid alphabet: {0}")]
    InvalidAlphabet(String),
    #[error("step range {from}..={to} out of bounds for horizon {horizon}")]
    OutOfRange { from: usize, to: usize, horizon: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("episode {episode}: expected {expected} steps, found {found}")]
    EpisodeLength { episode: usize, expected: usize, found: usize },
    #[error("episode {episode}, step {step}: {msg}")]
    InvalidStep { episode: usize, step: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Serialized form of an alphabet; see [`Alphabet`] for the validated one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphabetSpec {
    pub actions: Vec<String>,
    pub start_action: String,
    pub obs_features: Vec<Vec<String>>,
    pub rewards: Vec<f64>,
    pub terminal_obs: Vec<String>,
}

/// Validated, interned alphabet together with the horizon.
///
/// Action ids `0..n_actions()` are the real actions; id `n_actions()` is the
/// dummy start action, which only appears at step 0.
#[derive(Clone, Debug)]
pub struct Alphabet {
    spec: AlphabetSpec,
    horizon: usize,
    strides: Vec<u32>,
    n_obs: u32,
    terminal: ObsId,
    action_index: HashMap<String, ActionId>,
    feature_index: Vec<HashMap<String, u32>>,
    reward_index: HashMap<u64, RewardId>,
}

impl PartialEq for Alphabet {
    fn eq(&self, other: &Self) -> bool {
        self.horizon == other.horizon && self.spec == other.spec
    }
}

fn check_distinct(what: &str, items: &[String]) -> Result<(), TraceError> {
    if items.is_empty() {
        return Err(TraceError::InvalidAlphabet(format!("{what} is empty")));
    }
    let mut seen = std::collections::HashSet::new();
    for s in items {
        if !seen.insert(s) {
            return Err(TraceError::InvalidAlphabet(format!("duplicate symbol {s:?} in {what}")));
        }
    }
    Ok(())
}

impl Alphabet {
    pub fn new(spec: AlphabetSpec, horizon: usize) -> Result<Self, TraceError> {
        if horizon < 1 {
            return Err(TraceError::InvalidAlphabet("horizon must be at least 1".into()));
        }
        check_distinct("actions", &spec.actions)?;
        if spec.actions.len() < 2 {
            return Err(TraceError::InvalidAlphabet("at least two actions are required".into()));
        }
        if spec.actions.contains(&spec.start_action) {
            return Err(TraceError::InvalidAlphabet(format!(
                "start action {:?} collides with a regular action",
                spec.start_action
            )));
        }
        if spec.obs_features.is_empty() {
            return Err(TraceError::InvalidAlphabet("no observation features".into()));
        }
        for (i, dom) in spec.obs_features.iter().enumerate() {
            check_distinct(&format!("feature {i}"), dom)?;
        }
        if spec.rewards.is_empty() {
            return Err(TraceError::InvalidAlphabet("rewards is empty".into()));
        }
        let mut reward_index = HashMap::new();
        for (i, r) in spec.rewards.iter().enumerate() {
            if !r.is_finite() {
                return Err(TraceError::InvalidAlphabet(format!("reward {r} is not finite")));
            }
            if reward_index.insert(r.to_bits(), i as RewardId).is_some() {
                return Err(TraceError::InvalidAlphabet(format!("duplicate reward {r}")));
            }
        }
        let mut strides = Vec::with_capacity(spec.obs_features.len());
        let mut n_obs: u64 = 1;
        for dom in spec.obs_features.iter().rev() {
            strides.push(n_obs as u32);
            n_obs *= dom.len() as u64;
            if n_obs > u32::MAX as u64 / 4 {
                return Err(TraceError::InvalidAlphabet("observation space too large".into()));
            }
        }
        strides.reverse();
        if n_obs < 2 {
            return Err(TraceError::InvalidAlphabet("at least two observations are required".into()));
        }
        let total = (spec.actions.len() as u64 + 1) * n_obs * spec.rewards.len() as u64;
        if total > u32::MAX as u64 {
            return Err(TraceError::InvalidAlphabet("step space too large".into()));
        }
        let action_index = spec
            .actions
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i as ActionId))
            .chain(std::iter::once((spec.start_action.clone(), spec.actions.len() as ActionId)))
            .collect();
        let feature_index: Vec<HashMap<String, u32>> = spec
            .obs_features
            .iter()
            .map(|dom| dom.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect())
            .collect();
        let mut alphabet = Alphabet {
            spec,
            horizon,
            strides,
            n_obs: n_obs as u32,
            terminal: 0,
            action_index,
            feature_index,
            reward_index,
        };
        let terminal = alphabet
            .obs_from_symbols(&alphabet.spec.terminal_obs.clone())
            .map_err(|e| TraceError::InvalidAlphabet(format!("terminal observation: {e}")))?;
        alphabet.terminal = terminal;
        Ok(alphabet)
    }

    pub fn spec(&self) -> &AlphabetSpec {
        &self.spec
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of real actions (the start action is not counted).
    pub fn n_actions(&self) -> u32 {
        self.spec.actions.len() as u32
    }

    pub fn start_action(&self) -> ActionId {
        self.n_actions()
    }

    /// Number of joint observations, terminal included.
    pub fn n_obs(&self) -> u32 {
        self.n_obs
    }

    pub fn n_features(&self) -> usize {
        self.spec.obs_features.len()
    }

    pub fn feature_size(&self, i: usize) -> u32 {
        self.spec.obs_features[i].len() as u32
    }

    pub fn n_rewards(&self) -> u32 {
        self.spec.rewards.len() as u32
    }

    pub fn terminal_obs(&self) -> ObsId {
        self.terminal
    }

    /// Size of the step space including the start action.
    pub fn n_steps(&self) -> u32 {
        (self.n_actions() + 1) * self.n_obs * self.n_rewards()
    }

    /// `A * R * O` as used by the prefix-test thresholds.
    pub fn aro(&self) -> f64 {
        self.n_actions() as f64 * self.n_rewards() as f64 * self.n_obs as f64
    }

    pub fn step_id(&self, step: &Step) -> StepId {
        (step.action * self.n_obs + step.obs) * self.n_rewards() + step.reward
    }

    pub fn decode_step(&self, id: StepId) -> Step {
        let r = self.n_rewards();
        let reward = id % r;
        let rest = id / r;
        Step { action: rest / self.n_obs, obs: rest % self.n_obs, reward }
    }

    /// Feature value of feature `i` in joint observation `obs`.
    pub fn feature(&self, obs: ObsId, i: usize) -> u32 {
        (obs / self.strides[i]) % self.feature_size(i)
    }

    pub fn obs_features(&self, obs: ObsId) -> Vec<u32> {
        (0..self.n_features()).map(|i| self.feature(obs, i)).collect()
    }

    pub fn obs_from_features(&self, features: &[u32]) -> ObsId {
        debug_assert_eq!(features.len(), self.n_features());
        features.iter().zip(&self.strides).map(|(f, s)| f * s).sum()
    }

    pub fn action_symbol(&self, a: ActionId) -> &str {
        if a == self.start_action() {
            &self.spec.start_action
        } else {
            &self.spec.actions[a as usize]
        }
    }

    pub fn action_from_symbol(&self, s: &str) -> Option<ActionId> {
        self.action_index.get(s).copied()
    }

    pub fn feature_symbol(&self, i: usize, v: u32) -> &str {
        &self.spec.obs_features[i][v as usize]
    }

    pub fn obs_symbols(&self, obs: ObsId) -> Vec<String> {
        (0..self.n_features())
            .map(|i| self.feature_symbol(i, self.feature(obs, i)).to_string())
            .collect()
    }

    pub fn obs_from_symbols(&self, symbols: &[String]) -> Result<ObsId, String> {
        if symbols.len() != self.n_features() {
            return Err(format!(
                "observation has {} features, expected {}",
                symbols.len(),
                self.n_features()
            ));
        }
        let mut feats = Vec::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            match self.feature_index[i].get(s) {
                Some(&v) => feats.push(v),
                None => return Err(format!("unknown symbol {s:?} for feature {i}")),
            }
        }
        Ok(self.obs_from_features(&feats))
    }

    pub fn reward_value(&self, r: RewardId) -> f64 {
        self.spec.rewards[r as usize]
    }

    pub fn reward_from_value(&self, v: f64) -> Option<RewardId> {
        // -0.0 and 0.0 are the same reward
        let v = if v == 0.0 { 0.0 } else { v };
        self.reward_index.get(&v.to_bits()).copied().or_else(|| {
            self.spec.rewards.iter().position(|&x| x == v).map(|i| i as RewardId)
        })
    }

    pub fn max_abs_reward(&self) -> f64 {
        self.spec.rewards.iter().fold(0.0f64, |m, r| m.max(r.abs()))
    }

    /// Tokens per step: action, each feature, reward.
    pub fn tokens_per_step(&self) -> usize {
        self.n_features() + 2
    }

    pub fn step_tokens(&self, step: &Step, out: &mut Vec<Token>) {
        out.push(Token::Action(step.action));
        for i in 0..self.n_features() {
            out.push(Token::Feature(i as u32, self.feature(step.obs, i)));
        }
        out.push(Token::Reward(step.reward));
    }

    pub fn tokenize_steps(&self, steps: &[Step]) -> Vec<Token> {
        let mut out = Vec::with_capacity(steps.len() * self.tokens_per_step());
        for s in steps {
            self.step_tokens(s, &mut out);
        }
        out
    }

    pub fn format_step(&self, step: &Step) -> String {
        format!(
            "{} {}/{}",
            self.action_symbol(step.action),
            self.obs_symbols(step.obs).join(""),
            self.reward_value(step.reward)
        )
    }

    fn check_step(&self, step: &Step, t: usize) -> Result<(), String> {
        if step.obs >= self.n_obs || step.reward >= self.n_rewards() {
            return Err("symbol out of range".into());
        }
        if t == 0 {
            if step.action != self.start_action() {
                return Err("step 0 must use the start action".into());
            }
        } else if step.action >= self.n_actions() {
            return Err("start action used after step 0".into());
        }
        if t == self.horizon && step.obs != self.terminal {
            return Err("last step must emit the terminal observation".into());
        }
        if t < self.horizon && step.obs == self.terminal {
            return Err("terminal observation before the last step".into());
        }
        Ok(())
    }

    pub fn validate_episode(&self, episode: &Episode, index: usize) -> Result<(), TraceError> {
        let expected = self.horizon + 1;
        if episode.steps.len() != expected {
            return Err(TraceError::EpisodeLength { episode: index, expected, found: episode.steps.len() });
        }
        for (t, s) in episode.steps.iter().enumerate() {
            self.check_step(s, t)
                .map_err(|msg| TraceError::InvalidStep { episode: index, step: t, msg })?;
        }
        Ok(())
    }
}

/// One `a o / r` step in interned form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Step {
    pub action: ActionId,
    pub obs: ObsId,
    pub reward: RewardId,
}

/// A token of a flattened trace. Categories are disjoint, so a token alone
/// tells which slot of a step it fills.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Token {
    Action(ActionId),
    Feature(u32, u32),
    Reward(RewardId),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Action(a) => write!(f, "A:{a}"),
            Token::Feature(i, v) => write!(f, "F{}:{v}", i + 1),
            Token::Reward(r) => write!(f, "R:{r}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Episode {
    pub steps: Vec<Step>,
}

impl Episode {
    pub fn new(steps: Vec<Step>) -> Self {
        Episode { steps }
    }

    /// Steps `t..=H`.
    pub fn suffix(&self, t: usize) -> Result<&[Step], TraceError> {
        let h = self.steps.len().saturating_sub(1);
        if t > h {
            return Err(TraceError::OutOfRange { from: t, to: h, horizon: h });
        }
        Ok(&self.steps[t..])
    }

    /// Flattens steps `from_t..=to_t` into `(to_t - from_t + 1) * (m + 2)` tokens.
    pub fn tokenize(&self, alphabet: &Alphabet, from_t: usize, to_t: usize) -> Result<Vec<Token>, TraceError> {
        let h = self.steps.len().saturating_sub(1);
        if from_t > to_t || to_t > h {
            return Err(TraceError::OutOfRange { from: from_t, to: to_t, horizon: h });
        }
        Ok(alphabet.tokenize_steps(&self.steps[from_t..=to_t]))
    }

    pub fn total_reward(&self, alphabet: &Alphabet) -> f64 {
        self.steps.iter().map(|s| alphabet.reward_value(s.reward)).sum()
    }
}

pub fn suffix_of(episode: &Episode, t: usize) -> Result<&[Step], TraceError> {
    episode.suffix(t)
}

pub fn tokenize(
    alphabet: &Alphabet,
    episode: &Episode,
    from_t: usize,
    to_t: usize,
) -> Result<Vec<Token>, TraceError> {
    episode.tokenize(alphabet, from_t, to_t)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub generator: String,
    pub policy: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub params: serde_json::Map<String, Value>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub alphabet: Alphabet,
    pub episodes: Vec<Episode>,
    pub metadata: Metadata,
}

#[derive(Serialize, Deserialize)]
struct Header {
    alphabet: AlphabetSpec,
    horizon: usize,
    metadata: Metadata,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepRecord {
    a: String,
    o: Vec<String>,
    r: f64,
}

impl Dataset {
    pub fn new(alphabet: Alphabet, episodes: Vec<Episode>, metadata: Metadata) -> Result<Self, TraceError> {
        for (i, e) in episodes.iter().enumerate() {
            alphabet.validate_episode(e, i)?;
        }
        Ok(Dataset { alphabet, episodes, metadata })
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.alphabet.horizon()
    }

    /// Writes the newline-delimited JSON format: a header object, then one
    /// array of `{a, o, r}` steps per episode.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), TraceError> {
        let header = Header {
            alphabet: self.alphabet.spec().clone(),
            horizon: self.alphabet.horizon(),
            metadata: self.metadata.clone(),
        };
        serde_json::to_writer(&mut w, &header).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
        for e in &self.episodes {
            let recs: Vec<StepRecord> = e
                .steps
                .iter()
                .map(|s| StepRecord {
                    a: self.alphabet.action_symbol(s.action).to_string(),
                    o: self.alphabet.obs_symbols(s.obs),
                    r: self.alphabet.reward_value(s.reward),
                })
                .collect();
            serde_json::to_writer(&mut w, &recs).map_err(std::io::Error::other)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self, TraceError> {
        let reader = BufReader::new(r);
        let mut lines = reader.lines().enumerate();
        let (_, first) = lines.next().ok_or(TraceError::Parse { line: 1, msg: "missing header".into() })?;
        let first = first?;
        let header: Header =
            serde_json::from_str(&first).map_err(|e| TraceError::Parse { line: 1, msg: e.to_string() })?;
        let alphabet = Alphabet::new(header.alphabet, header.horizon)
            .map_err(|e| TraceError::Parse { line: 1, msg: e.to_string() })?;
        let mut episodes = Vec::new();
        for (idx, line) in lines {
            let line = line?;
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let recs: Vec<StepRecord> =
                serde_json::from_str(&line).map_err(|e| TraceError::Parse { line: lineno, msg: e.to_string() })?;
            let mut steps = Vec::with_capacity(recs.len());
            for (t, rec) in recs.iter().enumerate() {
                let action = alphabet.action_from_symbol(&rec.a).ok_or_else(|| TraceError::Parse {
                    line: lineno,
                    msg: format!("step {t}: unknown action {:?}", rec.a),
                })?;
                let obs = alphabet
                    .obs_from_symbols(&rec.o)
                    .map_err(|msg| TraceError::Parse { line: lineno, msg: format!("step {t}: {msg}") })?;
                let reward = alphabet.reward_from_value(rec.r).ok_or_else(|| TraceError::Parse {
                    line: lineno,
                    msg: format!("step {t}: unknown reward {}", rec.r),
                })?;
                steps.push(Step { action, obs, reward });
            }
            let episode = Episode::new(steps);
            let index = episodes.len();
            alphabet.validate_episode(&episode, index).map_err(|e| match e {
                TraceError::EpisodeLength { .. } => e,
                other => TraceError::Parse { line: lineno, msg: other.to_string() },
            })?;
            episodes.push(episode);
        }
        Ok(Dataset { alphabet, episodes, metadata: header.metadata })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TraceError> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TraceError> {
        let f = std::fs::File::open(path)?;
        Self::read_from(f)
    }

    /// FNV-1a over the serialized form; identifies the training data in
    /// learner provenance.
    pub fn fingerprint(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        let mut h: u64 = 0xcbf29ce484222325;
        for b in buf {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, TraceError> {
    Dataset::load(path)
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), TraceError> {
    dataset.save(path)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn tiny_alphabet(horizon: usize) -> Alphabet {
        Alphabet::new(
            AlphabetSpec {
                actions: vec!["East".into(), "West".into()],
                start_action: "start".into(),
                obs_features: vec![vec!["101".into(), "110".into(), "end".into()]],
                rewards: vec![0.0, 1.0],
                terminal_obs: vec!["end".into()],
            },
            horizon,
        )
        .unwrap()
    }

    fn episode(alpha: &Alphabet, obs: &[u32]) -> Episode {
        let h = alpha.horizon();
        let mut steps = vec![Step { action: alpha.start_action(), obs: obs[0], reward: 0 }];
        for t in 1..=h {
            let o = if t == h { alpha.terminal_obs() } else { obs[t] };
            steps.push(Step { action: (t % 2) as u32, obs: o, reward: (t % 2) as u32 });
        }
        Episode::new(steps)
    }

    #[test]
    fn single_step_tokenization() {
        let a = tiny_alphabet(2);
        let e = episode(&a, &[1, 0, 0]);
        let toks = e.tokenize(&a, 1, 1).unwrap();
        assert_eq!(toks, vec![Token::Action(1), Token::Feature(0, 0), Token::Reward(1)]);
        assert_eq!(e.tokenize(&a, 2, 2).unwrap().len(), 3);
        assert_eq!(e.tokenize(&a, 0, 2).unwrap().len(), 9);
        assert!(e.tokenize(&a, 2, 3).is_err());
        assert!(e.tokenize(&a, 2, 1).is_err());
    }

    #[test]
    fn suffixes() {
        let a = tiny_alphabet(5);
        let e = episode(&a, &[1, 0, 0, 0, 0, 0]);
        assert_eq!(e.suffix(0).unwrap(), &e.steps[..]);
        assert_eq!(e.suffix(5).unwrap().len(), 1);
        assert_eq!(e.suffix(2).unwrap().len(), 4);
        assert!(e.suffix(6).is_err());
    }

    #[test]
    fn alphabet_validation() {
        let mut spec = tiny_alphabet(1).spec().clone();
        spec.actions = vec!["x".into()];
        assert!(Alphabet::new(spec.clone(), 1).is_err());
        spec.actions = vec!["x".into(), "x".into()];
        assert!(Alphabet::new(spec.clone(), 1).is_err());
        spec.actions = vec!["x".into(), "y".into()];
        spec.terminal_obs = vec!["nope".into()];
        assert!(Alphabet::new(spec.clone(), 1).is_err());
        spec.terminal_obs = vec!["end".into()];
        assert!(Alphabet::new(spec.clone(), 0).is_err());
        assert!(Alphabet::new(spec, 1).is_ok());
    }

    #[test]
    fn step_ids_roundtrip() {
        let a = tiny_alphabet(3);
        for id in 0..a.n_steps() {
            assert_eq!(a.step_id(&a.decode_step(id)), id);
        }
    }

    #[test]
    fn file_roundtrip_and_errors() {
        let a = tiny_alphabet(2);
        let eps = vec![episode(&a, &[1, 0, 0]), episode(&a, &[0, 1, 0]), episode(&a, &[1, 1, 0])];
        let meta = Metadata { generator: "corridor".into(), policy: "uniform".into(), seed: 3, ..Default::default() };
        let d = Dataset::new(a, eps, meta).unwrap();
        let mut buf = Vec::new();
        d.write_to(&mut buf).unwrap();
        let back = Dataset::read_from(&buf[..]).unwrap();
        assert_eq!(back, d);

        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let short = r#"[{"a":"start","o":["110"],"r":0.0},{"a":"West","o":["end"],"r":1.0}]"#;
        lines[2] = short;
        match Dataset::read_from(lines.join("\n").as_bytes()) {
            Err(TraceError::EpisodeLength { episode: 1, expected: 3, found: 2 }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let mut bad: Vec<String> = text.lines().map(String::from).collect();
        bad[1] = bad[1].replacen("\"West\"", "\"North\"", 1);
        match Dataset::read_from(bad.join("\n").as_bytes()) {
            Err(TraceError::Parse { line, msg }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("North"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}

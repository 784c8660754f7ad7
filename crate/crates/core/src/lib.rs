//! Offline learning of episodic regular decision processes.
//!
//! Episodes go in, a layered Moore machine comes out. The learner merges
//! candidate states with one of three distinguishability testers: exact
//! prefix distance, a Count-Min-Sketch backed prefix distance, or a language
//! metric over a restricted family of trace patterns. The planner then
//! runs backward induction on the learned automaton.

pub mod cms;
pub mod environments;
pub mod languages;
pub mod learner;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod planner;
pub mod trace;
pub mod verification;

pub use cms::Sketch;
pub use environments::{make_env, BehaviorPolicy, EnvParams, Environment, GroundTruthRdp};
pub use languages::{Lang, LanguageFamily, Pattern, StepAtom};
pub use learner::{adact_h, LearnedRdp, StateId};
pub use metrics::{SuffixStore, TesterConfig, TesterKind};
pub use planner::{estimate_outputs, evaluate_policy, value_iteration, RegularPolicy};
pub use trace::{Alphabet, Dataset, Episode, Step, Token};

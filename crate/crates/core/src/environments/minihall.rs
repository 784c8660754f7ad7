//! Mini-hall: three rooms in a row (A, B, C from west to east), four
//! orientations each. The agent sees only what it faces. Moving forward
//! while facing the star in room A pays +1 and resets the agent to a
//! uniformly random non-goal state.

use super::{alphabet, Branch, Dynamics, EnvError};
use crate::trace::{ActionId, Alphabet};

const FORWARD: ActionId = 0;
const LEFT: ActionId = 1;

const OBS: [&str; 6] = ["wall_n", "wall_s", "door_e", "door_w", "star", "wall_e"];
const STAR: u64 = 3; // room A facing west

#[derive(Debug, Clone)]
pub struct MiniHall {
    alphabet: Alphabet,
}

/// State is `room * 4 + heading`, headings N, E, S, W.
fn view(state: u64) -> u32 {
    let (room, heading) = (state / 4, state % 4);
    match (room, heading) {
        (_, 0) => 0,
        (_, 2) => 1,
        (0 | 1, 1) => 2,
        (_, 1) => 5,
        (0, 3) => 4,
        (_, _) => 3,
    }
}

impl MiniHall {
    pub fn new(horizon: usize) -> Result<Self, EnvError> {
        let mut domain: Vec<&str> = OBS.to_vec();
        domain.push("⊥");
        let alphabet = alphabet(&["forward", "left", "right"], &[&domain], &[0.0, 1.0], &["⊥"], horizon)?;
        Ok(MiniHall { alphabet })
    }

    fn reset(&self, reward: u32) -> Vec<Branch> {
        (0..12u64)
            .filter(|&s| s != STAR)
            .map(|s| Branch { prob: 1.0 / 11.0, obs: view(s), reward, next: s })
            .collect()
    }
}

impl Dynamics for MiniHall {
    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn initial(&self) -> Vec<Branch> {
        self.reset(0)
    }

    fn step(&self, state: u64, _t: usize, a: ActionId) -> Vec<Branch> {
        let (room, heading) = (state / 4, state % 4);
        let next = match a {
            FORWARD if state == STAR => return self.reset(1),
            FORWARD => match heading {
                1 if room < 2 => state + 4,
                3 if room > 0 => state - 4,
                _ => state,
            },
            LEFT => room * 4 + (heading + 3) % 4,
            _ => room * 4 + (heading + 1) % 4,
        };
        vec![Branch { prob: 1.0, obs: view(next), reward: 0, next }]
    }
}

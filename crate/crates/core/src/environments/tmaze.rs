//! T-maze: a corridor from the start cell `S` (position 0) to a junction
//! at position `N`. The start observation reveals whether the goal is above
//! (`110`) or below (`011`) the junction. Turning at the junction ends the
//! episode with +4 (correct) or −1 (wrong); any action that leaves the
//! agent in place costs −1.

use super::{alphabet, det, Branch, Dynamics, EnvError};
use crate::trace::{ActionId, Alphabet};

pub const DEFAULT_LENGTH: usize = 2;

pub const NORTH: ActionId = 0;
pub const SOUTH: ActionId = 1;
pub const EAST: ActionId = 2;
pub const WEST: ActionId = 3;

// observation ids within the single feature
const O_SOUTH_GOAL: u32 = 0; // 011
const O_NORTH_GOAL: u32 = 1; // 110
const O_CORRIDOR: u32 = 2; // 101
const O_JUNCTION: u32 = 3; // 010

const R_WIN: u32 = 0;
const R_LOSE: u32 = 1;
const R_ZERO: u32 = 2;

const DONE: u64 = 1 << 32;

#[derive(Debug, Clone)]
pub struct TMaze {
    alphabet: Alphabet,
    length: u64,
}

impl TMaze {
    pub fn new(horizon: usize, length: usize) -> Result<Self, EnvError> {
        if length < 1 {
            return Err(EnvError::InvalidParam("T-maze corridor length must be at least 1".into()));
        }
        let alphabet = alphabet(
            &["North", "South", "East", "West"],
            &[&["011", "110", "101", "010", "⊥"]],
            &[4.0, -1.0, 0.0],
            &["⊥"],
            horizon,
        )?;
        Ok(TMaze { alphabet, length: length as u64 })
    }

    pub fn length(&self) -> usize {
        self.length as usize
    }

    fn obs_at(&self, goal_south: bool, pos: u64) -> u32 {
        if pos == 0 {
            if goal_south {
                O_SOUTH_GOAL
            } else {
                O_NORTH_GOAL
            }
        } else if pos == self.length {
            O_JUNCTION
        } else {
            O_CORRIDOR
        }
    }
}

impl Dynamics for TMaze {
    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn initial(&self) -> Vec<Branch> {
        vec![
            Branch { prob: 0.5, obs: O_NORTH_GOAL, reward: R_ZERO, next: 0 },
            Branch { prob: 0.5, obs: O_SOUTH_GOAL, reward: R_ZERO, next: 1 },
        ]
    }

    fn step(&self, state: u64, _t: usize, a: ActionId) -> Vec<Branch> {
        if state & DONE != 0 {
            return det(O_JUNCTION, R_ZERO, state);
        }
        let south = state & 1 == 1;
        let pos = (state >> 1) & 0xffff_ffff;
        let at = |p: u64| (state & 1) | (p << 1);
        if pos == self.length && (a == NORTH || a == SOUTH) {
            let win = (a == SOUTH) == south;
            return det(O_JUNCTION, if win { R_WIN } else { R_LOSE }, state | DONE);
        }
        let moved = match a {
            EAST if pos < self.length => Some(pos + 1),
            WEST if pos > 0 => Some(pos - 1),
            _ => None,
        };
        match moved {
            Some(p) => det(self.obs_at(south, p), R_ZERO, at(p)),
            None => det(self.obs_at(south, pos), R_LOSE, state),
        }
    }

    fn optimal_return(&self) -> Option<f64> {
        Some(if self.length as usize + 1 <= self.alphabet.horizon() { 4.0 } else { 0.0 })
    }
}

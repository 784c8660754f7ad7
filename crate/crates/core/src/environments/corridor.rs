//! Two-row corridor with a guard.
//!
//! Action `a_j` moves the agent to row `j` of the next column; after the
//! last column the agent wraps to the first. The guard sits in row `r` of
//! column `c` with probability `p^r_c`; each encounter swaps the two
//! probability vectors. The final step pays +1 when the whole episode was
//! encounter-free.

use super::{alphabet, Branch, Dynamics, EnvError};
use crate::trace::{ActionId, Alphabet};

pub const DEFAULT_LENGTH: usize = 4;

const SWAPPED: u64 = 1;
const ENCOUNTERED: u64 = 2;

#[derive(Debug, Clone)]
pub struct Corridor {
    alphabet: Alphabet,
    length: usize,
    p: [Vec<f64>; 2],
}

impl Corridor {
    pub fn new(horizon: usize, length: Option<usize>, p0: Option<Vec<f64>>, p1: Option<Vec<f64>>) -> Result<Self, EnvError> {
        let length = length.unwrap_or(DEFAULT_LENGTH);
        if length < 2 {
            return Err(EnvError::InvalidParam("corridor length must be at least 2".into()));
        }
        let p0 = p0.unwrap_or_else(|| (0..length).map(|c| if c % 2 == 1 { 0.9 } else { 0.1 }).collect());
        let p1 = p1.unwrap_or_else(|| vec![0.0; length]);
        for (name, p) in [("p0", &p0), ("p1", &p1)] {
            if p.len() != length || p.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(EnvError::InvalidParam(format!("{name} needs {length} probabilities in [0, 1]")));
            }
        }
        let cols: Vec<String> = (0..length).map(|c| c.to_string()).chain(["⊥".to_string()]).collect();
        let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
        let alphabet = alphabet(
            &["a0", "a1"],
            &[&cols, &["0", "1", "⊥"], &["clear", "enemy", "⊥"]],
            &[0.0, 1.0],
            &["⊥", "⊥", "⊥"],
            horizon,
        )?;
        Ok(Corridor { alphabet, length, p: [p0, p1] })
    }

    fn obs(&self, col: usize, row: u32, enemy: bool) -> u32 {
        self.alphabet.obs_from_features(&[col as u32, row, enemy as u32])
    }
}

impl Dynamics for Corridor {
    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn initial(&self) -> Vec<Branch> {
        vec![Branch { prob: 1.0, obs: self.obs(0, 0, false), reward: 0, next: 0 }]
    }

    fn step(&self, state: u64, t: usize, a: ActionId) -> Vec<Branch> {
        let col = t % self.length;
        let swapped = state & SWAPPED != 0;
        let p = self.p[(a as usize) ^ swapped as usize][col];
        let last = t == self.alphabet.horizon();
        let mut out = Vec::with_capacity(2);
        if p > 0.0 {
            out.push(Branch {
                prob: p,
                obs: self.obs(col, a, true),
                reward: 0,
                next: (state ^ SWAPPED) | ENCOUNTERED,
            });
        }
        if p < 1.0 {
            let clean = state & ENCOUNTERED == 0;
            out.push(Branch {
                prob: 1.0 - p,
                obs: self.obs(col, a, false),
                reward: (last && clean) as u32,
                next: state,
            });
        }
        out
    }

    fn optimal_return(&self) -> Option<f64> {
        let h = self.alphabet.horizon();
        Some((1..=h).map(|t| 1.0 - self.p[0][t % self.length].min(self.p[1][t % self.length])).product())
    }
}

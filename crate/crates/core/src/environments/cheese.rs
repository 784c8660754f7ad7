//! Cheese maze: a five-cell top row with three two-cell columns hanging
//! below cells 0, 2 and 4. The goal is the bottom of the middle column.
//! Observations are the wall configuration of the current cell. Entering
//! the goal pays +1 and teleports the agent to a uniformly random non-goal
//! cell. Bumping into a wall leaves the agent in place.

use super::{alphabet, Branch, Dynamics, EnvError};
use crate::trace::{ActionId, Alphabet};

const CELLS: [(i32, i32); 11] = [
    (0, 0),
    (1, 0),
    (2, 0),
    (3, 0),
    (4, 0),
    (0, 1),
    (0, 2),
    (2, 1),
    (4, 1),
    (4, 2),
    (2, 2),
];
const GOAL: usize = 10;
const OBS: [&str; 6] = ["NW", "NS", "N", "NE", "WE", "WES"];

#[derive(Debug, Clone)]
pub struct Cheese {
    alphabet: Alphabet,
    cell_obs: Vec<u32>,
}

fn cell_at(x: i32, y: i32) -> Option<usize> {
    CELLS.iter().position(|&c| c == (x, y))
}

fn walls(i: usize) -> String {
    let (x, y) = CELLS[i];
    let mut s = String::new();
    for (d, (dx, dy)) in [('N', (0, -1)), ('W', (-1, 0)), ('E', (1, 0)), ('S', (0, 1))] {
        if cell_at(x + dx, y + dy).is_none() {
            s.push(d);
        }
    }
    s
}

impl Cheese {
    pub fn new(horizon: usize) -> Result<Self, EnvError> {
        let mut domain: Vec<&str> = OBS.to_vec();
        domain.push("⊥");
        let alphabet = alphabet(&["North", "South", "East", "West"], &[&domain], &[0.0, 1.0], &["⊥"], horizon)?;
        let cell_obs = (0..CELLS.len())
            .map(|i| OBS.iter().position(|o| *o == walls(i)).expect("wall pattern") as u32)
            .collect();
        Ok(Cheese { alphabet, cell_obs })
    }

    fn reset(&self, reward: u32, scale: f64) -> impl Iterator<Item = Branch> + '_ {
        (0..GOAL).map(move |c| Branch { prob: scale / GOAL as f64, obs: self.cell_obs[c], reward, next: c as u64 })
    }
}

impl Dynamics for Cheese {
    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn initial(&self) -> Vec<Branch> {
        self.reset(0, 1.0).collect()
    }

    fn step(&self, state: u64, _t: usize, a: ActionId) -> Vec<Branch> {
        let (x, y) = CELLS[state as usize];
        let (dx, dy) = [(0, -1), (0, 1), (1, 0), (-1, 0)][a as usize];
        let to = cell_at(x + dx, y + dy).unwrap_or(state as usize);
        if to == GOAL {
            return self.reset(1, 1.0).collect();
        }
        vec![Branch { prob: 1.0, obs: self.cell_obs[to], reward: 0, next: to as u64 }]
    }
}

//! Four-room cookie domain. A white hub connects to red (up), blue (left)
//! and green (right). Pressing the button in red, when no cookie is out,
//! drops a cookie in blue or green with equal probability; eating it pays
//! +1.

use super::{alphabet, det, Branch, Dynamics, EnvError};
use crate::trace::{ActionId, Alphabet};

const LEFT: ActionId = 0;
const RIGHT: ActionId = 1;
const UP: ActionId = 2;
const DOWN: ActionId = 3;
const PRESS: ActionId = 4;
const EAT: ActionId = 5;

const WHITE: u64 = 0;
const RED: u64 = 1;
const BLUE: u64 = 2;
const GREEN: u64 = 3;

const NO_COOKIE: u64 = 0;

#[derive(Debug, Clone)]
pub struct Cookie {
    alphabet: Alphabet,
}

impl Cookie {
    pub fn new(horizon: usize) -> Result<Self, EnvError> {
        let alphabet = alphabet(
            &["left", "right", "up", "down", "press", "eat"],
            &[&["white", "red", "blue", "green", "blue_cookie", "green_cookie", "⊥"]],
            &[0.0, 1.0],
            &["⊥"],
            horizon,
        )?;
        Ok(Cookie { alphabet })
    }
}

fn pack(room: u64, cookie: u64) -> u64 {
    room | cookie << 2
}

/// Cookie locations are room ids; the observation shows a cookie only in
/// the room the agent is in.
fn obs(room: u64, cookie: u64) -> u32 {
    match (room, cookie == room) {
        (BLUE, true) => 4,
        (GREEN, true) => 5,
        _ => room as u32,
    }
}

impl Dynamics for Cookie {
    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn initial(&self) -> Vec<Branch> {
        det(obs(WHITE, NO_COOKIE), 0, pack(WHITE, NO_COOKIE))
    }

    fn step(&self, state: u64, _t: usize, a: ActionId) -> Vec<Branch> {
        let room = state & 3;
        let cookie = state >> 2;
        match a {
            PRESS if room == RED && cookie == NO_COOKIE => vec![
                Branch { prob: 0.5, obs: obs(RED, BLUE), reward: 0, next: pack(RED, BLUE) },
                Branch { prob: 0.5, obs: obs(RED, GREEN), reward: 0, next: pack(RED, GREEN) },
            ],
            EAT if cookie != NO_COOKIE && cookie == room => det(obs(room, NO_COOKIE), 1, pack(room, NO_COOKIE)),
            LEFT | RIGHT | UP | DOWN => {
                let to = match (room, a) {
                    (WHITE, LEFT) => BLUE,
                    (WHITE, RIGHT) => GREEN,
                    (WHITE, UP) => RED,
                    (RED, DOWN) | (BLUE, RIGHT) | (GREEN, LEFT) => WHITE,
                    _ => room,
                };
                det(obs(to, cookie), 0, pack(to, cookie))
            }
            _ => det(obs(room, cookie), 0, state),
        }
    }

    fn optimal_return(&self) -> Option<f64> {
        match self.alphabet.horizon() {
            0..=4 => Some(0.0),
            5 | 6 => Some(0.5),
            7..=10 => Some(1.0),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{make_env, EnvParams};

    #[test]
    fn press_and_eat() {
        let env = make_env("cookie", &EnvParams::default()).unwrap();
        let go = |s: u64, a: ActionId| env.branches(s, 1, a);
        let red = go(pack(WHITE, 0), UP)[0].next;
        assert_eq!(red, pack(RED, 0));
        let pressed = go(red, PRESS);
        assert_eq!(pressed.len(), 2);
        // a second press while a cookie is out does nothing
        assert_eq!(go(pressed[0].next, PRESS).len(), 1);
        let blue = go(go(pack(RED, BLUE), DOWN)[0].next, LEFT)[0];
        assert_eq!(env.alphabet().obs_symbols(blue.obs), vec!["blue_cookie"]);
        let ate = go(blue.next, EAT)[0];
        assert_eq!((ate.reward, ate.next), (1, pack(BLUE, 0)));
        assert_eq!(go(pack(GREEN, BLUE), EAT)[0].reward, 0);
        assert_eq!(env.optimal_return(), Some(1.0));
    }
}

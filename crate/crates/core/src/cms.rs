//! Count-Min-Sketch over symbol sequences.
//!
//! Keys are sequences of small integers (interned steps or tokens). They are
//! first reduced to a 61-bit fingerprint with a length tag, then hashed per
//! row with `((a·x + b) mod p) mod w`, `p = 2^61 − 1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MERSENNE_61: u64 = (1 << 61) - 1;
const FP_BASE: u64 = 0x1d8e_4e27_c47d_124f & MERSENNE_61;
const FP_LEN_TAG: u64 = 0x0f3a_9b71_52c6_e8d5 & MERSENNE_61;

#[derive(Debug, Error, PartialEq)]
pub enum SketchError {
    #[error("invalid sketch parameter: {0}")]
    InvalidParameter(String),
    #[error("incompatible sketches: {0}")]
    Incompatible(String),
}

#[inline]
fn mulmod(a: u64, b: u64) -> u64 {
    let p = (a as u128) * (b as u128);
    let lo = (p as u64) & MERSENNE_61;
    let hi = (p >> 61) as u64;
    let s = lo + hi;
    if s >= MERSENNE_61 {
        s - MERSENNE_61
    } else {
        s
    }
}

#[inline]
fn addmod(a: u64, b: u64) -> u64 {
    let s = a + b;
    if s >= MERSENNE_61 {
        s - MERSENNE_61
    } else {
        s
    }
}

/// Incremental fingerprint of a symbol sequence, so that all prefixes of a
/// sequence can be keyed in O(1) each.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KeyHasher {
    acc: u64,
    pow: u64,
    len: u64,
}

impl Default for KeyHasher {
    fn default() -> Self {
        KeyHasher { acc: 0, pow: 1, len: 0 }
    }
}

impl KeyHasher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, sym: u32) {
        self.acc = addmod(self.acc, mulmod(sym as u64 + 1, self.pow));
        self.pow = mulmod(self.pow, FP_BASE);
        self.len += 1;
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn finish(&self) -> u64 {
        addmod(self.acc, mulmod(self.len % MERSENNE_61, FP_LEN_TAG))
    }
}

pub fn fingerprint(key: &[u32]) -> u64 {
    let mut h = KeyHasher::new();
    for &s in key {
        h.push(s);
    }
    h.finish()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sketch {
    depth: usize,
    width: usize,
    seed: u64,
    hash_params: Vec<(u64, u64)>,
    counters: Vec<u64>,
    total: u64,
}

/// `(d, w)` for the given parameters: `d = ⌈ln(1/δ_c)⌉`, `w = ⌈e/ε⌉`.
pub fn dimensions(delta_c: f64, epsilon: f64) -> Result<(usize, usize), SketchError> {
    if !(delta_c > 0.0 && delta_c < 1.0) {
        return Err(SketchError::InvalidParameter(format!("delta_c = {delta_c} not in (0, 1)")));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(SketchError::InvalidParameter(format!("epsilon = {epsilon} must be positive")));
    }
    let d = (1.0 / delta_c).ln().ceil().max(1.0) as usize;
    let w = (std::f64::consts::E / epsilon).ceil().max(1.0);
    if w > (1u64 << 32) as f64 {
        return Err(SketchError::InvalidParameter(format!("width {w} too large")));
    }
    Ok((d, w as usize))
}

/// Like [`dimensions`] but takes `ln(1/δ_c)` directly, for failure
/// probabilities too small to represent.
pub fn dimensions_log(ln_inv_delta_c: f64, epsilon: f64) -> Result<(usize, usize), SketchError> {
    if !(ln_inv_delta_c > 0.0 && ln_inv_delta_c.is_finite()) {
        return Err(SketchError::InvalidParameter(format!("ln(1/delta_c) = {ln_inv_delta_c} must be positive")));
    }
    let (_, w) = dimensions(0.5, epsilon)?;
    Ok((ln_inv_delta_c.ceil().max(1.0) as usize, w))
}

impl Sketch {
    pub fn new(delta_c: f64, epsilon: f64, seed: u64) -> Result<Self, SketchError> {
        let (d, w) = dimensions(delta_c, epsilon)?;
        Ok(Self::with_dimensions(d, w, seed))
    }

    pub fn with_dimensions(depth: usize, width: usize, seed: u64) -> Self {
        assert!(depth >= 1 && width >= 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hash_params = (0..depth)
            .map(|_| (rng.gen_range(1..MERSENNE_61), rng.gen_range(0..MERSENNE_61)))
            .collect();
        Sketch { depth, width, seed, hash_params, counters: vec![0; depth * width], total: 0 }
    }

    /// A zeroed sketch sharing this sketch's dimensions and hash functions.
    pub fn empty_like(&self) -> Self {
        Sketch { counters: vec![0; self.counters.len()], total: 0, ..self.clone() }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn row(&self, j: usize) -> &[u64] {
        &self.counters[j * self.width..(j + 1) * self.width]
    }

    #[inline]
    fn cell(&self, j: usize, fp: u64) -> usize {
        let (a, b) = self.hash_params[j];
        j * self.width + (addmod(mulmod(a, fp), b) % self.width as u64) as usize
    }

    pub fn update_fp(&mut self, fp: u64, c: u64) {
        for j in 0..self.depth {
            let i = self.cell(j, fp);
            self.counters[i] += c;
        }
        self.total += c;
    }

    pub fn query_fp(&self, fp: u64) -> u64 {
        (0..self.depth).map(|j| self.counters[self.cell(j, fp)]).min().unwrap_or(0)
    }

    pub fn update(&mut self, key: &[u32], c: u64) {
        self.update_fp(fingerprint(key), c)
    }

    pub fn query(&self, key: &[u32]) -> u64 {
        self.query_fp(fingerprint(key))
    }

    pub fn compatible(&self, other: &Sketch) -> Result<(), SketchError> {
        if self.depth != other.depth || self.width != other.width {
            return Err(SketchError::Incompatible(format!(
                "dimensions {}x{} vs {}x{}",
                self.depth, self.width, other.depth, other.width
            )));
        }
        if self.hash_params != other.hash_params {
            return Err(SketchError::Incompatible(format!("seeds {} vs {}", self.seed, other.seed)));
        }
        Ok(())
    }

    pub fn merge_from(&mut self, other: &Sketch) -> Result<(), SketchError> {
        self.compatible(other)?;
        for (x, y) in self.counters.iter_mut().zip(&other.counters) {
            *x += *y;
        }
        self.total += other.total;
        Ok(())
    }

    pub fn merge(a: &Sketch, b: &Sketch) -> Result<Sketch, SketchError> {
        let mut out = a.clone();
        out.merge_from(b)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    #[test]
    fn dimension_formulas() {
        assert_eq!(dimensions(0.01, 1.0).unwrap().0, 5);
        assert_eq!(dimensions(0.5, 0.1).unwrap().1, 28);
        assert!(Sketch::new(0.0, 0.1, 1).is_err());
        assert!(Sketch::new(1.0, 0.1, 1).is_err());
        assert!(Sketch::new(0.1, 0.0, 1).is_err());
    }

    #[test]
    fn single_key_and_totals() {
        let mut s = Sketch::new(0.01, 0.1, 3).unwrap();
        assert_eq!(s.query(&[1, 2]), 0);
        for _ in 0..3 {
            s.update(&[1, 2], 1);
        }
        assert_eq!(s.query(&[1, 2]), 3);
        let mut t = Sketch::new(0.01, 0.1, 3).unwrap();
        t.update(&[4], 2);
        t.update(&[5, 6], 5);
        assert_eq!(t.total(), 7);
        for j in 0..t.depth() {
            assert_eq!(t.row(j).iter().sum::<u64>(), 7);
        }
    }

    #[test]
    fn prefix_keys_are_distinct() {
        assert_ne!(fingerprint(&[0]), fingerprint(&[0, 0]));
        assert_ne!(fingerprint(&[]), fingerprint(&[0]));
        let mut h = KeyHasher::new();
        h.push(7);
        h.push(9);
        assert_eq!(h.finish(), fingerprint(&[7, 9]));
    }

    #[test]
    fn merge_rules() {
        let mut a = Sketch::new(0.05, 0.05, 9).unwrap();
        a.update(&[1], 4);
        let e = a.empty_like();
        assert_eq!(Sketch::merge(&a, &e).unwrap(), a);
        let mut b = a.empty_like();
        b.update(&[2, 3], 6);
        let m = Sketch::merge(&a, &b).unwrap();
        assert_eq!(m.total(), 10);
        assert!(m.query(&[1]) >= 4 && m.query(&[2, 3]) >= 6);
        let other = Sketch::new(0.05, 0.05, 10).unwrap();
        assert!(matches!(Sketch::merge(&a, &other), Err(SketchError::Incompatible(_))));
        let narrow = Sketch::new(0.05, 0.5, 9).unwrap();
        assert!(Sketch::merge(&a, &narrow).is_err());
    }

    proptest! {
        #[test]
        fn never_underestimates(
            seed in any::<u64>(),
            stream in prop::collection::vec((0u32..200, 1u64..5), 1..400),
        ) {
            let mut s = Sketch::new(0.05, 0.2, seed).unwrap();
            let mut truth: HashMap<u32, u64> = HashMap::new();
            for &(k, c) in &stream {
                s.update(&[k], c);
                *truth.entry(k).or_default() += c;
            }
            for (k, v) in &truth {
                prop_assert!(s.query(&[*k]) >= *v);
            }
            prop_assert_eq!(s.total(), truth.values().sum::<u64>());
        }

        #[test]
        fn merge_commutes(
            xs in prop::collection::vec(0u32..50, 0..60),
            ys in prop::collection::vec(0u32..50, 0..60),
        ) {
            let mut a = Sketch::new(0.1, 0.3, 5).unwrap();
            let mut b = a.empty_like();
            for x in xs { a.update(&[x], 1); }
            for y in ys { b.update(&[y, y], 2); }
            let ab = Sketch::merge(&a, &b).unwrap();
            let ba = Sketch::merge(&b, &a).unwrap();
            prop_assert_eq!(&ab, &ba);
            for k in 0..50u32 {
                prop_assert!(ab.query(&[k]) >= a.query(&[k]).max(b.query(&[k])));
            }
        }
    }
}

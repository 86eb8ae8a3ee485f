//! Finite sets of indicator labelings, used by the variance-weighted statistics.

use std::collections::HashSet;

use crate::error::{Error, Result};

/// Upper bound on the number of distinct labelings a class may enumerate.
pub const MAX_CANDIDATES: usize = 1_000_000;

/// Fixed-length bit vector over observation indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Bitset {
    words: Vec<u64>,
    len: usize,
}

impl Bitset {
    pub fn new(len: usize) -> Self {
        Self { words: vec![0; len.div_ceil(64)], len }
    }

    pub fn from_fn(len: usize, mut f: impl FnMut(usize) -> bool) -> Self {
        let mut b = Self::new(len);
        for i in 0..len {
            if f(i) {
                b.set(i);
            }
        }
        b
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn set(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn get(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(k, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let bit = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(k * 64 + bit)
            })
        })
    }

    /// `Σ_{i in set} v_i`.
    pub fn sum(&self, v: &[f64]) -> f64 {
        self.ones().map(|i| v[i]).sum()
    }

    /// Bitwise union of two sets over the same index range.
    pub fn union(&self, other: &Bitset) -> Bitset {
        let words = self.words.iter().zip(&other.words).map(|(a, b)| a | b).collect();
        Bitset { words, len: self.len }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        (0..self.len).map(|i| f64::from(u8::from(self.get(i)))).collect()
    }
}

/// Distinct labelings in first-seen order.
#[derive(Debug, Clone, Default)]
pub struct CandidateSet {
    members: Vec<Bitset>,
    seen: HashSet<Bitset>,
}

impl CandidateSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `b` unless already present.
    pub fn push(&mut self, b: Bitset) -> Result<()> {
        if self.seen.contains(&b) {
            return Ok(());
        }
        if self.members.len() >= MAX_CANDIDATES {
            return Err(Error::InvalidArgument(format!(
                "class induces more than {MAX_CANDIDATES} labelings; variance weighting is not available"
            )));
        }
        self.seen.insert(b.clone());
        self.members.push(b);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Bitset] {
        &self.members
    }

    pub fn into_members(self) -> Vec<Bitset> {
        self.members
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bitset_basics() {
        let b = Bitset::from_fn(130, |i| i % 3 == 0 || i == 129);
        assert_eq!(b.count(), 44);
        assert!(b.get(129) && b.get(0) && !b.get(1));
        let ones: Vec<usize> = b.ones().collect();
        assert_eq!(ones.len(), b.count());
        assert!(ones.windows(2).all(|w| w[0] < w[1]));
        let v: Vec<f64> = (0..130).map(|i| i as f64).collect();
        assert_eq!(b.sum(&v), ones.iter().map(|&i| i as f64).sum::<f64>());
    }

    #[test]
    fn dedup() {
        let mut s = CandidateSet::new();
        s.push(Bitset::from_fn(5, |i| i < 2)).unwrap();
        s.push(Bitset::from_fn(5, |i| i < 2)).unwrap();
        s.push(Bitset::from_fn(5, |i| i > 2)).unwrap();
        assert_eq!(s.len(), 2);
    }
}

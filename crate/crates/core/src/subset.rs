//! Non-empty subsets of coordinate indices.
//!
//! Indices are 1-based, as in `{1, ..., d}`. Index `j` occupies bit `j - 1`.
//! Subsets of `{1, ..., 64}` are stored inline in a single word; larger
//! indices switch to a boxed multi-word representation. The representation is
//! normalized, so equality and hashing are structural.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Largest index that fits the inline representation.
pub const INLINE_WIDTH: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SubsetError {
    #[error("coordinate subsets must be non-empty")]
    Empty,
    #[error("coordinate indices are 1-based; got 0")]
    ZeroIndex,
}

#[derive(Clone, PartialEq, Eq, Hash)]
enum Repr {
    /// Non-zero.
    Inline(u64),
    /// Little-endian words, at least two, highest word non-zero.
    Wide(Box<[u64]>),
}

/// A non-empty subset of `{1, 2, ...}`.
///
/// Ordering compares masks as unsigned integers, so `{1} < {2} < {1,2} < {3}`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SubsetMask(Repr);

impl SubsetMask {
    fn from_words(mut words: Vec<u64>) -> Result<Self, SubsetError> {
        while words.len() > 1 && *words.last().unwrap() == 0 {
            words.pop();
        }
        match words.len() {
            0 => Err(SubsetError::Empty),
            1 if words[0] == 0 => Err(SubsetError::Empty),
            1 => Ok(SubsetMask(Repr::Inline(words[0]))),
            _ => Ok(SubsetMask(Repr::Wide(words.into_boxed_slice()))),
        }
    }

    /// Builds a mask from 1-based indices. Duplicates are ignored.
    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Result<Self, SubsetError> {
        let mut words: Vec<u64> = Vec::new();
        for j in indices {
            if j == 0 {
                return Err(SubsetError::ZeroIndex);
            }
            let (w, b) = ((j - 1) / 64, (j - 1) % 64);
            if words.len() <= w {
                words.resize(w + 1, 0);
            }
            words[w] |= 1u64 << b;
        }
        Self::from_words(words)
    }

    /// The subset whose bit pattern is `bits`, or `None` for zero.
    pub fn from_bits(bits: u64) -> Option<Self> {
        (bits != 0).then_some(SubsetMask(Repr::Inline(bits)))
    }

    pub fn singleton(j: usize) -> Result<Self, SubsetError> {
        Self::from_indices([j])
    }

    /// `{1, ..., d}`.
    pub fn full(d: usize) -> Result<Self, SubsetError> {
        Self::from_indices(1..=d)
    }

    fn words(&self) -> &[u64] {
        match &self.0 {
            Repr::Inline(w) => core::slice::from_ref(w),
            Repr::Wide(ws) => ws,
        }
    }

    /// The raw bit pattern when every index is at most 64.
    pub fn bits(&self) -> Option<u64> {
        match &self.0 {
            Repr::Inline(w) => Some(*w),
            Repr::Wide(_) => None,
        }
    }

    pub fn is_inline(&self) -> bool {
        matches!(self.0, Repr::Inline(_))
    }

    /// Cardinality `|u|`.
    pub fn len(&self) -> usize {
        self.words().iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Always false; present for API symmetry with collections.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Largest index in the subset.
    pub fn max_index(&self) -> usize {
        let ws = self.words();
        let top = ws.len() - 1;
        top * 64 + (64 - ws[top].leading_zeros() as usize)
    }

    pub fn contains(&self, j: usize) -> bool {
        if j == 0 {
            return false;
        }
        let (w, b) = ((j - 1) / 64, (j - 1) % 64);
        self.words().get(w).is_some_and(|x| x >> b & 1 == 1)
    }

    /// Ascending 1-based indices.
    pub fn indices(&self) -> Indices<'_> {
        let ws = self.words();
        Indices { words: ws, word: 0, rest: ws[0] }
    }

    pub fn is_subset_of(&self, other: &SubsetMask) -> bool {
        let (a, b) = (self.words(), other.words());
        a.len() <= b.len() && a.iter().zip(b).all(|(x, y)| x & !y == 0)
    }

    pub fn is_disjoint(&self, other: &SubsetMask) -> bool {
        self.words().iter().zip(other.words()).all(|(x, y)| x & y == 0)
    }

    pub fn union(&self, other: &SubsetMask) -> SubsetMask {
        let (a, b) = (self.words(), other.words());
        let n = a.len().max(b.len());
        let words = (0..n)
            .map(|i| a.get(i).copied().unwrap_or(0) | b.get(i).copied().unwrap_or(0))
            .collect();
        Self::from_words(words).expect("union of non-empty masks is non-empty")
    }
}

pub struct Indices<'a> {
    words: &'a [u64],
    word: usize,
    rest: u64,
}

impl Iterator for Indices<'_> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        loop {
            if self.rest != 0 {
                let b = self.rest.trailing_zeros() as usize;
                self.rest &= self.rest - 1;
                return Some(self.word * 64 + b + 1);
            }
            self.word += 1;
            if self.word >= self.words.len() {
                return None;
            }
            self.rest = self.words[self.word];
        }
    }
}

impl Ord for SubsetMask {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.words(), other.words());
        a.len()
            .cmp(&b.len())
            .then_with(|| a.iter().rev().cmp(b.iter().rev()))
    }
}

impl PartialOrd for SubsetMask {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for SubsetMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, j) in self.indices().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{j}")?;
        }
        f.write_str("}")
    }
}

impl fmt::Debug for SubsetMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SubsetMask{self}")
    }
}

impl Serialize for SubsetMask {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.indices())
    }
}

impl<'de> Deserialize<'de> for SubsetMask {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let indices = Vec::<usize>::deserialize(deserializer)?;
        SubsetMask::from_indices(indices).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn empty_and_zero_rejected() {
        assert_eq!(SubsetMask::from_indices([]), Err(SubsetError::Empty));
        assert_eq!(SubsetMask::from_indices([0, 1]), Err(SubsetError::ZeroIndex));
        assert!(SubsetMask::from_bits(0).is_none());
    }

    #[test]
    fn inline_and_wide_agree_on_queries() {
        let small = SubsetMask::from_indices([3, 1, 3]).unwrap();
        assert!(small.is_inline());
        assert_eq!(small.len(), 2);
        assert_eq!(small.max_index(), 3);
        assert_eq!(small.indices().collect::<Vec<_>>(), vec![1, 3]);
        assert_eq!(small.bits(), Some(0b101));

        let wide = SubsetMask::from_indices([2, 64, 65, 130]).unwrap();
        assert!(!wide.is_inline());
        assert_eq!(wide.len(), 4);
        assert_eq!(wide.max_index(), 130);
        assert_eq!(wide.indices().collect::<Vec<_>>(), vec![2, 64, 65, 130]);
        assert!(wide.contains(65) && !wide.contains(66));
        assert!(SubsetMask::from_indices([64, 2]).unwrap().is_subset_of(&wide));
        assert!(!wide.is_subset_of(&small));
    }

    #[test]
    fn ordering_is_numeric() {
        let m = |ix: &[usize]| SubsetMask::from_indices(ix.iter().copied()).unwrap();
        assert!(m(&[1]) < m(&[2]));
        assert!(m(&[2]) < m(&[1, 2]));
        assert!(m(&[1, 2]) < m(&[3]));
        assert!(m(&[64]) < m(&[65]));
        assert!(m(&[1, 64]) < m(&[65]));
    }

    #[test]
    fn union_and_disjointness() {
        let a = SubsetMask::from_indices([1, 2]).unwrap();
        let b = SubsetMask::from_indices([70]).unwrap();
        let u = a.union(&b);
        assert_eq!(u.indices().collect::<Vec<_>>(), vec![1, 2, 70]);
        assert!(a.is_disjoint(&b));
        assert!(!a.is_disjoint(&u));
        assert_eq!(alloc::format!("{u}"), "{1,2,70}");
    }
}

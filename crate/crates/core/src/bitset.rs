//! Fixed-length bitset packed into little-endian `u64` words.
//!
//! Bit `i` lives in word `i / 64` at position `i % 64`. Padding bits past
//! `len` in the final word are always zero, so word-wise popcounts never
//! need masking.

use rayon::prelude::*;

/// Word count above which intersection/union counting is split across threads.
const PAR_WORDS: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitSet {
    words: Vec<u64>,
    len: usize,
}

pub(crate) fn words_for(len: usize) -> usize {
    len.div_ceil(64)
}

impl BitSet {
    pub fn new(len: usize) -> Self {
        Self { words: vec![0; words_for(len)], len }
    }

    /// Builds a bitset from raw words, rejecting wrong word counts or set padding bits.
    pub fn from_words(words: Vec<u64>, len: usize) -> Option<Self> {
        if words.len() != words_for(len) {
            return None;
        }
        let rem = len % 64;
        if rem != 0 {
            let last = *words.last()?;
            if last >> rem != 0 {
                return None;
            }
        }
        Some(Self { words, len })
    }

    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::new(len);
        for i in indices {
            s.set(i);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        self.words[i / 64] |= 1u64 << (i % 64);
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let tz = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + tz)
            })
        })
    }

    /// `(|a ∩ b|, |a ∪ b|)` in a single pass over both word arrays.
    ///
    /// Panics if the lengths differ.
    pub fn intersection_union_counts(&self, other: &BitSet) -> (u64, u64) {
        assert_eq!(self.len, other.len, "bitset length mismatch");
        let count = |a: &[u64], b: &[u64]| {
            a.iter().zip(b).fold((0u64, 0u64), |(i, u), (&x, &y)| {
                (i + u64::from((x & y).count_ones()), u + u64::from((x | y).count_ones()))
            })
        };
        if self.words.len() < PAR_WORDS {
            return count(&self.words, &other.words);
        }
        self.words
            .par_chunks(PAR_WORDS)
            .zip(other.words.par_chunks(PAR_WORDS))
            .map(|(a, b)| count(a, b))
            .reduce(|| (0, 0), |(i1, u1), (i2, u2)| (i1 + i2, u1 + u2))
    }
}

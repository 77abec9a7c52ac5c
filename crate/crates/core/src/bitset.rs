//! Packed bit arrays over 32-bit words.
//!
//! `WordArray` is the representation shared by the valid-tuple set of a
//! table constraint, its per-value support rows, update masks, domain
//! snapshots, and removal bitmaps. Bit `j` lives in word `j / 32` at bit
//! position `j % 32` (least significant bit first), and the unused padding
//! bits of the last word are kept at zero by every operation, so word-wise
//! AND/OR/complement never leak state past the logical length.

use std::fmt;

/// Bits per storage word.
pub const WORD_BITS: usize = 32;

/// Number of 32-bit words needed to hold `nbits` bits.
pub fn words_for(nbits: usize) -> usize {
    nbits.div_ceil(WORD_BITS)
}

/// A fixed-length bit array packed into `u32` words, least significant bit
/// first within each word.
#[derive(Clone, PartialEq, Eq)]
pub struct WordArray {
    words: Vec<u32>,
    nbits: usize,
}

impl WordArray {
    /// All-zero array of `nbits` bits.
    pub fn zeroed(nbits: usize) -> Self {
        WordArray {
            words: vec![0; words_for(nbits)],
            nbits,
        }
    }

    /// All-one array of `nbits` bits (padding bits stay clear).
    pub fn filled(nbits: usize) -> Self {
        let mut wa = WordArray {
            words: vec![!0u32; words_for(nbits)],
            nbits,
        };
        wa.mask_padding();
        wa
    }

    /// Builds from raw words; panics unless `words.len()` matches `nbits`.
    /// Padding bits of the last word are forced to zero.
    pub fn from_raw_words(words: Vec<u32>, nbits: usize) -> Self {
        assert_eq!(words.len(), words_for(nbits), "word count mismatch");
        let mut wa = WordArray { words, nbits };
        wa.mask_padding();
        wa
    }

    /// Builds from a left-to-right bit string: character `k` is bit `k`.
    pub fn from_bit_str(s: &str) -> Self {
        let mut wa = WordArray::zeroed(s.len());
        for (j, c) in s.chars().enumerate() {
            match c {
                '1' => wa.set(j),
                '0' => {}
                _ => panic!("bit strings may only contain '0' and '1'"),
            }
        }
        wa
    }

    pub fn nbits(&self) -> usize {
        self.nbits
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn words(&self) -> &[u32] {
        &self.words
    }

    pub fn word(&self, w: usize) -> u32 {
        self.words[w]
    }

    pub(crate) fn words_mut(&mut self) -> &mut [u32] {
        &mut self.words
    }

    pub fn get(&self, j: usize) -> bool {
        assert!(j < self.nbits, "bit index {j} out of range {}", self.nbits);
        self.words[j / WORD_BITS] & (1 << (j % WORD_BITS)) != 0
    }

    pub fn set(&mut self, j: usize) {
        assert!(j < self.nbits, "bit index {j} out of range {}", self.nbits);
        self.words[j / WORD_BITS] |= 1 << (j % WORD_BITS);
    }

    pub fn clear(&mut self, j: usize) {
        assert!(j < self.nbits, "bit index {j} out of range {}", self.nbits);
        self.words[j / WORD_BITS] &= !(1 << (j % WORD_BITS));
    }

    /// Zeroes every bit, keeping the length.
    pub fn clear_all(&mut self) {
        self.words.fill(0);
    }

    /// `self |= other`. Both arrays must have the same length.
    pub fn or_assign(&mut self, other: &WordArray) {
        assert_eq!(self.nbits, other.nbits, "length mismatch in OR");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    /// `self &= other`. Both arrays must have the same length.
    pub fn and_assign(&mut self, other: &WordArray) {
        assert_eq!(self.nbits, other.nbits, "length mismatch in AND");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }

    /// Flips every bit in place; padding bits are re-cleared afterwards.
    pub fn complement_in_place(&mut self) {
        for w in &mut self.words {
            *w = !*w;
        }
        self.mask_padding();
    }

    /// Returns the bitwise complement.
    pub fn complemented(&self) -> WordArray {
        let mut out = self.clone();
        out.complement_in_place();
        out
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// True when `self & other` has at least one set bit.
    pub fn intersects(&self, other: &WordArray) -> bool {
        assert_eq!(self.nbits, other.nbits, "length mismatch in intersect");
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Iterates the positions of set bits in increasing order.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let base = wi * WORD_BITS;
            std::iter::successors(
                if w == 0 { None } else { Some(w) },
                |&rest| {
                    let next = rest & (rest - 1);
                    if next == 0 {
                        None
                    } else {
                        Some(next)
                    }
                },
            )
            .map(move |rest| base + rest.trailing_zeros() as usize)
        })
    }

    /// Copies `nbits` bits of `src` into `self` starting at bit `dst_off`.
    /// Source words beyond `nbits` must have clear padding (they do for any
    /// `WordArray`-maintained buffer).
    pub fn splice_bits(&mut self, dst_off: usize, src: &[u32], nbits: usize) {
        assert!(dst_off + nbits <= self.nbits, "splice out of range");
        assert!(src.len() >= words_for(nbits), "source too short");
        let shift = dst_off % WORD_BITS;
        let base = dst_off / WORD_BITS;
        for (k, &w) in src.iter().enumerate().take(words_for(nbits)) {
            // Mask the final source word down to the bits that belong to it.
            let rem = nbits - k * WORD_BITS;
            let w = if rem >= WORD_BITS {
                w
            } else {
                w & ((1u32 << rem) - 1)
            };
            let wi = base + k;
            self.words[wi] |= w << shift;
            if shift != 0 && wi + 1 < self.words.len() {
                self.words[wi + 1] |= w >> (WORD_BITS - shift);
            }
        }
        self.mask_padding();
    }

    /// Left-to-right rendering: character `k` of the output is bit `k`.
    pub fn bit_string(&self) -> String {
        (0..self.nbits)
            .map(|j| if self.get(j) { '1' } else { '0' })
            .collect()
    }

    fn mask_padding(&mut self) {
        let rem = self.nbits % WORD_BITS;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u32 << rem) - 1;
            }
        }
        if self.nbits == 0 {
            self.words.clear();
        }
    }
}

impl fmt::Display for WordArray {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.bit_string())
    }
}

impl fmt::Debug for WordArray {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.nbits <= 128 {
            write!(f, "WordArray({})", self.bit_string())
        } else {
            write!(f, "WordArray({} bits, {} ones)", self.nbits, self.count_ones())
        }
    }
}

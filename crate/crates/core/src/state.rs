//! Trailed solver state: backtrackable words, integers, and variable domains.
//!
//! All mutable search state lives in one arena (`DomainStore`). Writes made
//! after a `push_level` are recorded on a trail — at most once per location
//! per level, enforced with a stamp that changes on every push and pop — and
//! `pop_level` plays the trail backwards so domains, cached bounds, and any
//! constraint-owned words or integers are restored bit-exactly.

use crate::bitset::{words_for, WORD_BITS};

/// Index of a decision variable in its `DomainStore`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct VarId(pub usize);

/// Handle to one trailed integer.
#[derive(Clone, Copy, Debug)]
pub struct IntRef(usize);

/// Handle to a run of trailed words.
#[derive(Clone, Copy, Debug)]
pub struct WordsRef {
    start: usize,
    len: usize,
}

impl WordsRef {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

enum TrailEntry {
    Word { idx: usize, old: u32 },
    Int { idx: usize, old: i64 },
}

/// Flat trailed storage shared by domains and constraints.
#[derive(Default)]
struct StateStore {
    words: Vec<u32>,
    word_stamp: Vec<u64>,
    ints: Vec<i64>,
    int_stamp: Vec<u64>,
    trail: Vec<TrailEntry>,
    marks: Vec<usize>,
    // Changes on every push *and* pop so stale stamps can never match.
    magic: u64,
}

impl StateStore {
    fn level(&self) -> usize {
        self.marks.len()
    }

    fn push_level(&mut self) {
        self.marks.push(self.trail.len());
        self.magic += 1;
    }

    fn pop_level(&mut self) {
        let mark = self.marks.pop().expect("pop_level with no level pushed");
        for entry in self.trail.drain(mark..).rev().collect::<Vec<_>>() {
            match entry {
                TrailEntry::Word { idx, old } => self.words[idx] = old,
                TrailEntry::Int { idx, old } => self.ints[idx] = old,
            }
        }
        self.magic += 1;
    }

    fn alloc_word(&mut self, init: u32) -> usize {
        self.words.push(init);
        self.word_stamp.push(0);
        self.words.len() - 1
    }

    fn alloc_int(&mut self, init: i64) -> usize {
        self.ints.push(init);
        self.int_stamp.push(0);
        self.ints.len() - 1
    }

    fn write_word(&mut self, idx: usize, val: u32) {
        if self.words[idx] == val {
            return;
        }
        if !self.marks.is_empty() && self.word_stamp[idx] != self.magic {
            self.trail.push(TrailEntry::Word {
                idx,
                old: self.words[idx],
            });
            self.word_stamp[idx] = self.magic;
        }
        self.words[idx] = val;
    }

    fn write_int(&mut self, idx: usize, val: i64) {
        if self.ints[idx] == val {
            return;
        }
        if !self.marks.is_empty() && self.int_stamp[idx] != self.magic {
            self.trail.push(TrailEntry::Int {
                idx,
                old: self.ints[idx],
            });
            self.int_stamp[idx] = self.magic;
        }
        self.ints[idx] = val;
    }
}

struct VarInfo {
    initial_min: i64,
    initial_max: i64,
    /// First word of the domain bitmap inside the shared word arena.
    words_start: usize,
    word_len: usize,
    size: usize,
    min: usize,
    max: usize,
}

/// Variable domains plus trailed auxiliary state, with change events.
///
/// Domains are bitmaps over the declared range `initial_min..=initial_max`;
/// the size, minimum, and maximum are cached in trailed integers so reads are
/// O(1). Every mutation that shrinks a domain records the variable in an
/// event buffer the propagation engine drains to schedule watchers.
#[derive(Default)]
pub struct DomainStore {
    state: StateStore,
    vars: Vec<VarInfo>,
    events: Vec<usize>,
    event_flag: Vec<bool>,
}

impl DomainStore {
    pub fn new() -> Self {
        DomainStore::default()
    }

    /// Creates a variable with domain `{min..=max}`.
    pub fn new_var(&mut self, min: i64, max: i64) -> VarId {
        assert!(min <= max, "empty initial domain {min}..={max}");
        let span = (max - min + 1) as usize;
        let word_len = words_for(span);
        let words_start = self.state.words.len();
        for k in 0..word_len {
            let rem = span - k * WORD_BITS;
            let w = if rem >= WORD_BITS {
                !0u32
            } else {
                (1u32 << rem) - 1
            };
            self.state.alloc_word(w);
        }
        let size = self.state.alloc_int(span as i64);
        let min_ref = self.state.alloc_int(min);
        let max_ref = self.state.alloc_int(max);
        self.vars.push(VarInfo {
            initial_min: min,
            initial_max: max,
            words_start,
            word_len,
            size,
            min: min_ref,
            max: max_ref,
        });
        self.event_flag.push(false);
        VarId(self.vars.len() - 1)
    }

    pub fn var_count(&self) -> usize {
        self.vars.len()
    }

    pub fn initial_min(&self, v: VarId) -> i64 {
        self.vars[v.0].initial_min
    }

    pub fn initial_max(&self, v: VarId) -> i64 {
        self.vars[v.0].initial_max
    }

    /// Width of the declared range (and of the domain bitmap) in bits.
    pub fn span(&self, v: VarId) -> usize {
        let d = &self.vars[v.0];
        (d.initial_max - d.initial_min + 1) as usize
    }

    pub fn size(&self, v: VarId) -> usize {
        self.state.ints[self.vars[v.0].size] as usize
    }

    pub fn is_fixed(&self, v: VarId) -> bool {
        self.size(v) == 1
    }

    pub fn min(&self, v: VarId) -> i64 {
        assert!(self.size(v) > 0, "min of empty domain");
        self.state.ints[self.vars[v.0].min]
    }

    pub fn max(&self, v: VarId) -> i64 {
        assert!(self.size(v) > 0, "max of empty domain");
        self.state.ints[self.vars[v.0].max]
    }

    pub fn contains(&self, v: VarId, val: i64) -> bool {
        let d = &self.vars[v.0];
        if val < d.initial_min || val > d.initial_max {
            return false;
        }
        let pos = (val - d.initial_min) as usize;
        self.state.words[d.words_start + pos / WORD_BITS] & (1 << (pos % WORD_BITS)) != 0
    }

    /// True when the domain size differs from a previously recorded size.
    pub fn changed_since(&self, v: VarId, recorded: usize) -> bool {
        self.size(v) != recorded
    }

    /// The domain bitmap as raw words (padding bits are always clear).
    pub fn domain_words(&self, v: VarId) -> &[u32] {
        let d = &self.vars[v.0];
        &self.state.words[d.words_start..d.words_start + d.word_len]
    }

    /// Collects the remaining values in increasing order.
    pub fn values(&self, v: VarId) -> Vec<i64> {
        let mut out = Vec::with_capacity(self.size(v));
        self.for_each_value(v, |val| out.push(val));
        out
    }

    /// Calls `f` for every remaining value in increasing order.
    pub fn for_each_value(&self, v: VarId, mut f: impl FnMut(i64)) {
        let d = &self.vars[v.0];
        for k in 0..d.word_len {
            let mut w = self.state.words[d.words_start + k];
            while w != 0 {
                let bit = w.trailing_zeros() as usize;
                f(d.initial_min + (k * WORD_BITS + bit) as i64);
                w &= w - 1;
            }
        }
    }

    /// Removes one value. Returns whether the domain changed. A removal that
    /// empties the domain is legal here; the caller must treat size 0 as
    /// failure before reading `min`/`max` again.
    pub fn remove(&mut self, v: VarId, val: i64) -> bool {
        if !self.contains(v, val) {
            return false;
        }
        let d = &self.vars[v.0];
        let (start, init_min, size_ref, min_ref, max_ref) =
            (d.words_start, d.initial_min, d.size, d.min, d.max);
        let pos = (val - init_min) as usize;
        let wi = start + pos / WORD_BITS;
        let word = self.state.words[wi];
        self.state.write_word(wi, word & !(1 << (pos % WORD_BITS)));
        let new_size = self.state.ints[size_ref] - 1;
        self.state.write_int(size_ref, new_size);
        if new_size > 0 {
            if val == self.state.ints[min_ref] {
                let next = self.first_set_at_or_after(v, pos + 1).expect("size > 0");
                self.state.write_int(self.vars[v.0].min, init_min + next as i64);
            }
            if val == self.state.ints[max_ref] {
                let prev = self.last_set_at_or_before(v, pos - 1).expect("size > 0");
                self.state.write_int(self.vars[v.0].max, init_min + prev as i64);
            }
        }
        self.note_event(v);
        self.debug_check(v);
        true
    }

    /// Reduces the domain to `{val}`. Panics if `val` is not present —
    /// callers branch only on values they just read from the domain.
    /// Returns whether anything was removed.
    pub fn fix(&mut self, v: VarId, val: i64) -> bool {
        assert!(self.contains(v, val), "fix to absent value {val}");
        if self.size(v) == 1 {
            return false;
        }
        let d = &self.vars[v.0];
        let (start, len, init_min, size_ref, min_ref, max_ref) = (
            d.words_start,
            d.word_len,
            d.initial_min,
            d.size,
            d.min,
            d.max,
        );
        let pos = (val - init_min) as usize;
        for k in 0..len {
            let keep = if k == pos / WORD_BITS {
                1u32 << (pos % WORD_BITS)
            } else {
                0
            };
            let cur = self.state.words[start + k];
            self.state.write_word(start + k, cur & keep);
        }
        self.state.write_int(size_ref, 1);
        self.state.write_int(min_ref, val);
        self.state.write_int(max_ref, val);
        self.note_event(v);
        self.debug_check(v);
        true
    }

    /// Removes every value strictly below `bound`. Returns whether the
    /// domain changed; the caller checks for emptiness.
    pub fn remove_below(&mut self, v: VarId, bound: i64) -> bool {
        if self.size(v) == 0 || bound <= self.min(v) {
            return false;
        }
        let d = &self.vars[v.0];
        let (init_min, init_max) = (d.initial_min, d.initial_max);
        let cut = (bound.clamp(init_min, init_max + 1) - init_min) as usize;
        self.clear_range(v, 0, cut);
        true
    }

    /// Removes every value strictly above `bound`.
    pub fn remove_above(&mut self, v: VarId, bound: i64) -> bool {
        if self.size(v) == 0 || bound >= self.max(v) {
            return false;
        }
        let d = &self.vars[v.0];
        let (init_min, init_max) = (d.initial_min, d.initial_max);
        let span = (init_max - init_min + 1) as usize;
        let cut = (bound.clamp(init_min - 1, init_max) - init_min + 1) as usize;
        self.clear_range(v, cut, span);
        true
    }

    /// Clears bit positions `[lo, hi)` of the bitmap and rebuilds the caches.
    fn clear_range(&mut self, v: VarId, lo: usize, hi: usize) {
        let d = &self.vars[v.0];
        let (start, len, init_min) = (d.words_start, d.word_len, d.initial_min);
        for k in lo / WORD_BITS..len {
            let base = k * WORD_BITS;
            if base >= hi {
                break;
            }
            let from = lo.max(base) - base;
            let to = (hi - base).min(WORD_BITS);
            let mask = if to - from == WORD_BITS {
                !0u32
            } else {
                ((1u32 << (to - from)) - 1) << from
            };
            let cur = self.state.words[start + k];
            self.state.write_word(start + k, cur & !mask);
        }
        // Rebuild size/min/max from the bitmap.
        let mut size = 0usize;
        for k in 0..len {
            size += self.state.words[start + k].count_ones() as usize;
        }
        let d = &self.vars[v.0];
        let (size_ref, min_ref, max_ref, span) = (
            d.size,
            d.min,
            d.max,
            (d.initial_max - d.initial_min + 1) as usize,
        );
        self.state.write_int(size_ref, size as i64);
        if size > 0 {
            let lo_pos = self.first_set_at_or_after(v, 0).expect("size > 0");
            let hi_pos = self.last_set_at_or_before(v, span - 1).expect("size > 0");
            self.state.write_int(min_ref, init_min + lo_pos as i64);
            self.state.write_int(max_ref, init_min + hi_pos as i64);
        }
        self.note_event(v);
        self.debug_check(v);
    }

    fn first_set_at_or_after(&self, v: VarId, pos: usize) -> Option<usize> {
        let d = &self.vars[v.0];
        let span = (d.initial_max - d.initial_min + 1) as usize;
        if pos >= span {
            return None;
        }
        let mut k = pos / WORD_BITS;
        let mut cur = self.state.words[d.words_start + k] & (!0u32 << (pos % WORD_BITS));
        loop {
            if cur != 0 {
                return Some(k * WORD_BITS + cur.trailing_zeros() as usize);
            }
            k += 1;
            if k >= d.word_len {
                return None;
            }
            cur = self.state.words[d.words_start + k];
        }
    }

    fn last_set_at_or_before(&self, v: VarId, pos: usize) -> Option<usize> {
        let d = &self.vars[v.0];
        let mut k = pos / WORD_BITS;
        let rem = pos % WORD_BITS;
        let mask = if rem == WORD_BITS - 1 {
            !0u32
        } else {
            (1u32 << (rem + 1)) - 1
        };
        let mut cur = self.state.words[d.words_start + k] & mask;
        loop {
            if cur != 0 {
                return Some(k * WORD_BITS + (31 - cur.leading_zeros() as usize));
            }
            if k == 0 {
                return None;
            }
            k -= 1;
            cur = self.state.words[d.words_start + k];
        }
    }

    fn debug_check(&self, v: VarId) {
        if cfg!(debug_assertions) {
            let d = &self.vars[v.0];
            let popcount: usize = self.domain_words(v)
                .iter()
                .map(|w| w.count_ones() as usize)
                .sum();
            assert_eq!(popcount, self.state.ints[d.size] as usize, "size cache out of sync");
            if popcount > 0 {
                let lo = self.first_set_at_or_after(v, 0).unwrap();
                assert_eq!(d.initial_min + lo as i64, self.state.ints[d.min], "min cache out of sync");
                let span = (d.initial_max - d.initial_min + 1) as usize;
                let hi = self.last_set_at_or_before(v, span - 1).unwrap();
                assert_eq!(d.initial_min + hi as i64, self.state.ints[d.max], "max cache out of sync");
            }
        }
    }

    // ---- change events -------------------------------------------------

    fn note_event(&mut self, v: VarId) {
        if !self.event_flag[v.0] {
            self.event_flag[v.0] = true;
            self.events.push(v.0);
        }
    }

    /// Moves the accumulated change events (deduplicated, in first-change
    /// order) into `out`.
    pub fn drain_changed(&mut self, out: &mut Vec<usize>) {
        for &v in &self.events {
            self.event_flag[v] = false;
        }
        out.clear();
        out.append(&mut self.events);
    }

    fn clear_events(&mut self) {
        for &v in &self.events {
            self.event_flag[v] = false;
        }
        self.events.clear();
    }

    // ---- search levels -------------------------------------------------

    pub fn level(&self) -> usize {
        self.state.level()
    }

    pub fn push_level(&mut self) {
        self.state.push_level();
    }

    /// Restores every trailed location to its value at the matching push.
    pub fn pop_level(&mut self) {
        self.state.pop_level();
        // Restored domains must not look like fresh propagation triggers.
        self.clear_events();
    }

    // ---- trailed auxiliaries for constraints ----------------------------

    pub fn alloc_trailed_int(&mut self, init: i64) -> IntRef {
        IntRef(self.state.alloc_int(init))
    }

    pub fn int(&self, r: IntRef) -> i64 {
        self.state.ints[r.0]
    }

    pub fn set_int(&mut self, r: IntRef, val: i64) {
        self.state.write_int(r.0, val);
    }

    pub fn alloc_trailed_words(&mut self, init: &[u32]) -> WordsRef {
        let start = self.state.words.len();
        for &w in init {
            self.state.alloc_word(w);
        }
        WordsRef {
            start,
            len: init.len(),
        }
    }

    pub fn word(&self, r: WordsRef, idx: usize) -> u32 {
        assert!(idx < r.len);
        self.state.words[r.start + idx]
    }

    /// `words[idx] &= mask`, trailed.
    pub fn and_word(&mut self, r: WordsRef, idx: usize, mask: u32) {
        assert!(idx < r.len);
        let cur = self.state.words[r.start + idx];
        self.state.write_word(r.start + idx, cur & mask);
    }

    pub fn words_any_nonzero(&self, r: WordsRef) -> bool {
        self.state.words[r.start..r.start + r.len]
            .iter()
            .any(|&w| w != 0)
    }

    pub fn copy_words(&self, r: WordsRef, out: &mut Vec<u32>) {
        out.clear();
        out.extend_from_slice(&self.state.words[r.start..r.start + r.len]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn fresh_domain_has_full_range() {
        let mut s = DomainStore::new();
        let x = s.new_var(3, 9);
        assert_eq!(s.size(x), 7);
        assert_eq!((s.min(x), s.max(x)), (3, 9));
        assert_eq!(s.values(x), vec![3, 4, 5, 6, 7, 8, 9]);
        assert!(s.contains(x, 3) && s.contains(x, 9));
        assert!(!s.contains(x, 2) && !s.contains(x, 10));
    }

    #[test]
    fn remove_updates_caches_and_reports_change() {
        let mut s = DomainStore::new();
        let x = s.new_var(1, 4);
        assert!(s.remove(x, 1));
        assert_eq!((s.min(x), s.max(x), s.size(x)), (2, 4, 3));
        assert!(s.remove(x, 4));
        assert_eq!((s.min(x), s.max(x), s.size(x)), (2, 3, 2));
        // Removing an absent value changes nothing.
        assert!(!s.remove(x, 4));
        assert!(!s.remove(x, 99));
        assert_eq!(s.size(x), 2);
    }

    #[test]
    fn removal_to_empty_is_reported_via_size() {
        let mut s = DomainStore::new();
        let x = s.new_var(5, 5);
        assert!(s.remove(x, 5));
        assert_eq!(s.size(x), 0);
    }

    #[test]
    fn push_pop_restores_domain_words_exactly() {
        let mut s = DomainStore::new();
        let x = s.new_var(1, 40);
        s.remove(x, 7);
        let before: Vec<u32> = s.domain_words(x).to_vec();
        let (min0, max0, size0) = (s.min(x), s.max(x), s.size(x));

        s.push_level();
        s.remove(x, 1);
        s.remove(x, 40);
        s.fix(x, 20);
        assert_eq!(s.size(x), 1);
        s.pop_level();

        assert_eq!(s.domain_words(x), &before[..]);
        assert_eq!((s.min(x), s.max(x), s.size(x)), (min0, max0, size0));
    }

    #[test]
    fn trailed_words_restore_on_pop() {
        let mut s = DomainStore::new();
        let r = s.alloc_trailed_words(&[0b01010]);
        s.push_level();
        s.and_word(r, 0, 0b01000);
        assert_eq!(s.word(r, 0), 0b01000);
        s.pop_level();
        assert_eq!(s.word(r, 0), 0b01010);
    }

    #[test]
    fn each_location_saved_once_per_level() {
        let mut s = DomainStore::new();
        let r = s.alloc_trailed_int(0);
        s.push_level();
        for k in 1..=100 {
            s.set_int(r, k);
        }
        // One level, one location: the trail holds a single entry.
        assert_eq!(s.state.trail.len(), 1);
        s.pop_level();
        assert_eq!(s.int(r), 0);
    }

    #[test]
    fn nested_levels_restore_in_order() {
        let mut s = DomainStore::new();
        let x = s.new_var(1, 10);
        s.push_level();
        s.remove(x, 10);
        s.push_level();
        s.remove(x, 9);
        assert_eq!(s.max(x), 8);
        s.pop_level();
        assert_eq!(s.max(x), 9);
        s.pop_level();
        assert_eq!(s.max(x), 10);
    }

    #[test]
    #[should_panic(expected = "pop_level with no level pushed")]
    fn pop_at_root_is_a_caller_bug() {
        let mut s = DomainStore::new();
        s.pop_level();
    }

    #[test]
    fn bound_removals_clear_runs() {
        let mut s = DomainStore::new();
        let x = s.new_var(-3, 70);
        assert!(s.remove_below(x, 0));
        assert!(s.remove_above(x, 64));
        assert_eq!((s.min(x), s.max(x), s.size(x)), (0, 64, 65));
        assert!(!s.remove_below(x, -10));
        // Emptying via bounds is observable through size.
        assert!(s.remove_below(x, 100));
        assert_eq!(s.size(x), 0);
    }

    #[test]
    fn events_accumulate_once_per_variable() {
        let mut s = DomainStore::new();
        let x = s.new_var(1, 5);
        let y = s.new_var(1, 5);
        s.remove(x, 1);
        s.remove(x, 2);
        s.remove(y, 5);
        let mut ev = Vec::new();
        s.drain_changed(&mut ev);
        assert_eq!(ev, vec![x.0, y.0]);
        s.drain_changed(&mut ev);
        assert!(ev.is_empty());
    }

    /// Random mutate/push/pop sequences must restore bitmaps and caches
    /// bit-exactly at every level boundary.
    #[test]
    fn random_sequences_restore_state() {
        for seed in 0..1000u64 {
            let mut rng = StdRng::seed_from_u64(seed);
            let mut s = DomainStore::new();
            let vars: Vec<VarId> = (0..3)
                .map(|_| {
                    let lo = rng.gen_range(-5..5);
                    s.new_var(lo, lo + rng.gen_range(0..40))
                })
                .collect();
            let aux = s.alloc_trailed_words(&[!0u32, 0xABCD]);
            // Snapshots taken right after each push.
            let mut stack: Vec<Vec<(Vec<u32>, usize)>> = Vec::new();
            let mut aux_stack: Vec<Vec<u32>> = Vec::new();
            let snapshot = |s: &DomainStore| -> Vec<(Vec<u32>, usize)> {
                vars.iter()
                    .map(|&v| (s.domain_words(v).to_vec(), s.size(v)))
                    .collect()
            };
            for _ in 0..40 {
                match rng.gen_range(0..6) {
                    0 => {
                        s.push_level();
                        stack.push(snapshot(&s));
                        let mut w = Vec::new();
                        s.copy_words(aux, &mut w);
                        aux_stack.push(w);
                    }
                    1 if !stack.is_empty() => {
                        s.pop_level();
                        let expect = stack.pop().unwrap();
                        for (k, &v) in vars.iter().enumerate() {
                            assert_eq!(s.domain_words(v), &expect[k].0[..], "seed {seed}");
                            assert_eq!(s.size(v), expect[k].1, "seed {seed}");
                        }
                        let expect_aux = aux_stack.pop().unwrap();
                        let mut w = Vec::new();
                        s.copy_words(aux, &mut w);
                        assert_eq!(w, expect_aux, "seed {seed}");
                    }
                    2..=4 => {
                        let v = vars[rng.gen_range(0..vars.len())];
                        if s.size(v) > 1 {
                            let vals = s.values(v);
                            let val = vals[rng.gen_range(0..vals.len())];
                            if rng.gen_bool(0.8) {
                                s.remove(v, val);
                            } else {
                                s.fix(v, val);
                            }
                        }
                    }
                    _ => {
                        let idx = rng.gen_range(0..2);
                        s.and_word(aux, idx, rng.gen::<u32>());
                    }
                }
            }
        }
    }
}

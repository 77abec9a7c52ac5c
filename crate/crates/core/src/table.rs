//! Compact-table propagation for positive table constraints.
//!
//! A constraint over variables `x_0..x_{n-1}` with `t` allowed tuples keeps:
//!
//! * one support row per (variable, value) pair — a `t`-bit row whose bit
//!   `j` says tuple `j` assigns that value to that variable — plus the same
//!   matrix transposed to word-column-major order for the data-parallel
//!   update kernel;
//! * `currTable`, a trailed `t`-bit set of the tuples still compatible with
//!   the current domains.
//!
//! Propagation intersects `currTable` with the OR of the support rows of
//! each changed variable's remaining values (the update phase, recomputed
//! from scratch rather than incrementally), fails when the set empties, and
//! then drops every value whose support row no longer meets `currTable`
//! (the filter phase). Per-variable domain sizes from the previous run are
//! trailed so the changed-variable set is correct across backtracking.
//!
//! Support rows exist for every value of the declared range of each
//! variable, even values pruned before posting, so row arithmetic stays
//! static: row(i, a) = supportJmp[i] + (a - variablesOffsets[i]).

use crate::bitset::{words_for, WordArray};
use crate::engine::{CpResult, Inconsistency};
use crate::state::{DomainStore, IntRef, VarId, WordsRef};

/// Which propagation backend a table constraint uses.
///
/// `U` runs the update phase on the grid executor, `F` runs the filter
/// phase there, `Uf` runs both; `Serial` is the reference implementation.
/// All four produce identical domains, failures, and search trees.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Backend {
    Serial,
    U,
    F,
    Uf,
}

impl Backend {
    pub fn tag(&self) -> &'static str {
        match self {
            Backend::Serial => "serial",
            Backend::U => "u",
            Backend::F => "f",
            Backend::Uf => "uf",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Backend> {
        match tag {
            "serial" => Some(Backend::Serial),
            "u" => Some(Backend::U),
            "f" => Some(Backend::F),
            "uf" => Some(Backend::Uf),
            _ => None,
        }
    }
}

/// A positive table constraint propagated with the compact-table scheme.
pub struct TableConstraint {
    scope: Vec<VarId>,
    tuple_count: usize,
    /// `supportSize` rows of `tuple_count` bits, in row index order.
    supports: Vec<WordArray>,
    /// Transposed supports: entry `w * supportSize + r` is word `w` of row
    /// `r`, so a kernel scanning many rows at a fixed word is contiguous.
    supports_t: Vec<u32>,
    curr_table: WordsRef,
    curr_words: usize,
    support_size: usize,
    support_jmp: Vec<usize>,
    variables_offsets: Vec<i64>,
    /// Declared-range width per variable = its number of support rows.
    spans: Vec<usize>,
    last_sizes: Vec<IntRef>,
    backend: Backend,
    // Scratch reused across propagations.
    pub(crate) s_val: Vec<usize>,
    pub(crate) s_sup: Vec<usize>,
    mask_buf: Vec<u32>,
    pub(crate) snapshot_buf: WordArray,
    pub(crate) curr_copy: Vec<u32>,
    pub(crate) reduced_mask: Vec<u32>,
}

impl TableConstraint {
    /// Builds the support structures, marks the initially valid tuples, and
    /// prunes root-unsupported values.
    ///
    /// Tuple `j` starts valid iff every entry lies in the current domain of
    /// its variable; a tuple entry outside the declared range simply has no
    /// support row and invalidates the tuple. Values of the scope whose
    /// support row meets no valid tuple are removed immediately (for the
    /// usual fresh domains this is exactly the all-zero-row case). Fails if
    /// no tuple is valid or a domain empties.
    pub fn new(
        store: &mut DomainStore,
        scope: Vec<VarId>,
        tuples: &[Vec<i64>],
        backend: Backend,
    ) -> CpResult<TableConstraint> {
        let n = scope.len();
        assert!(n >= 1, "table constraint needs a non-empty scope");
        let t = tuples.len();
        assert!(t >= 1, "table constraint needs at least one tuple");
        for row in tuples {
            assert_eq!(row.len(), n, "table tuples must be rectangular");
        }

        let variables_offsets: Vec<i64> = scope.iter().map(|&x| store.initial_min(x)).collect();
        let spans: Vec<usize> = scope.iter().map(|&x| store.span(x)).collect();
        let mut support_jmp = Vec::with_capacity(n);
        let mut support_size = 0usize;
        for &s in &spans {
            support_jmp.push(support_size);
            support_size += s;
        }

        let mut supports = vec![WordArray::zeroed(t); support_size];
        let mut valid = WordArray::filled(t);
        for (j, tuple) in tuples.iter().enumerate() {
            for (i, &a) in tuple.iter().enumerate() {
                let off = variables_offsets[i];
                if a >= off && a <= store.initial_max(scope[i]) {
                    supports[support_jmp[i] + (a - off) as usize].set(j);
                } else {
                    valid.clear(j);
                }
            }
            for (i, &a) in tuple.iter().enumerate() {
                if !store.contains(scope[i], a) {
                    valid.clear(j);
                }
            }
        }
        if valid.is_zero() {
            return Err(Inconsistency);
        }

        // Root filtering: a value with no valid supporting tuple can never
        // appear in a solution. Dropping it cannot invalidate any tuple in
        // `valid` (all its tuples are already invalid), so `valid` is exact
        // afterwards and the scope is arc-consistent at the root.
        for i in 0..n {
            let x = scope[i];
            for a in store.values(x) {
                let row = support_jmp[i] + (a - variables_offsets[i]) as usize;
                if !valid.intersects(&supports[row]) {
                    store.remove(x, a);
                }
            }
            if store.size(x) == 0 {
                return Err(Inconsistency);
            }
        }

        let curr_words = words_for(t);
        let mut supports_t = vec![0u32; curr_words * support_size];
        for (r, row) in supports.iter().enumerate() {
            for w in 0..curr_words {
                supports_t[w * support_size + r] = row.word(w);
            }
        }

        let curr_table = store.alloc_trailed_words(valid.words());
        let last_sizes = scope
            .iter()
            .map(|&x| store.alloc_trailed_int(store.size(x) as i64))
            .collect();

        Ok(TableConstraint {
            tuple_count: t,
            supports,
            supports_t,
            curr_table,
            curr_words,
            support_size,
            support_jmp,
            variables_offsets,
            spans,
            last_sizes,
            backend,
            s_val: Vec::with_capacity(n),
            s_sup: Vec::with_capacity(n),
            mask_buf: vec![0; curr_words],
            snapshot_buf: WordArray::zeroed(support_size),
            curr_copy: Vec::with_capacity(curr_words),
            reduced_mask: Vec::with_capacity(curr_words),
            scope,
        })
    }

    // ---- static geometry -------------------------------------------------

    pub fn scope(&self) -> &[VarId] {
        &self.scope
    }

    pub fn arity(&self) -> usize {
        self.scope.len()
    }

    pub fn tuple_count(&self) -> usize {
        self.tuple_count
    }

    /// Words per `currTable` / support row / mask.
    pub fn word_count(&self) -> usize {
        self.curr_words
    }

    /// Total number of support rows = sum of declared-range widths.
    pub fn support_size(&self) -> usize {
        self.support_size
    }

    pub fn support_jmp(&self) -> &[usize] {
        &self.support_jmp
    }

    pub fn variables_offsets(&self) -> &[i64] {
        &self.variables_offsets
    }

    pub fn spans(&self) -> &[usize] {
        &self.spans
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn set_backend(&mut self, backend: Backend) {
        self.backend = backend;
    }

    /// Row index of (scope position, value); `None` if the value lies
    /// outside the declared range.
    pub fn row_index(&self, i: usize, a: i64) -> Option<usize> {
        let off = self.variables_offsets[i];
        if a < off || a >= off + self.spans[i] as i64 {
            return None;
        }
        Some(self.support_jmp[i] + (a - off) as usize)
    }

    /// Maps a row index back to (scope position, value).
    pub fn row_to_var_value(&self, r: usize) -> (usize, i64) {
        assert!(r < self.support_size);
        let i = match self.support_jmp.binary_search(&r) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        (i, self.variables_offsets[i] + (r - self.support_jmp[i]) as i64)
    }

    /// The support row of (scope position, value).
    pub fn support_row(&self, i: usize, a: i64) -> Option<&WordArray> {
        self.row_index(i, a).map(|r| &self.supports[r])
    }

    pub fn support_row_by_index(&self, r: usize) -> &WordArray {
        &self.supports[r]
    }

    pub(crate) fn supports_t(&self) -> &[u32] {
        &self.supports_t
    }

    /// The current valid-tuple set as a plain bit array (test/debug view).
    pub fn curr_table_bits(&self, store: &DomainStore) -> WordArray {
        let mut words = Vec::with_capacity(self.curr_words);
        for w in 0..self.curr_words {
            words.push(store.word(self.curr_table, w));
        }
        WordArray::from_raw_words(words, self.tuple_count)
    }

    pub(crate) fn curr_table_ref(&self) -> WordsRef {
        self.curr_table
    }

    // ---- serial propagation ----------------------------------------------

    /// One full propagation round: recompute the changed/unfixed variable
    /// sets, shrink `currTable` by the changed variables' remaining values,
    /// fail if it empties, then drop unsupported values everywhere.
    ///
    /// At a fixpoint this is a no-op, and afterwards `currTable` bit `j` is
    /// set iff tuple `j` is compatible with every current domain.
    pub fn propagate_serial(&mut self, store: &mut DomainStore) -> CpResult<()> {
        self.compute_sets(store);
        if !self.serial_update(store) {
            return Err(Inconsistency);
        }
        self.serial_filter(store);
        Ok(())
    }

    /// Fills `s_val` (variables whose domain size differs from the last
    /// recorded one; the record is refreshed) and `s_sup` (variables with
    /// more than one value left).
    pub(crate) fn compute_sets(&mut self, store: &mut DomainStore) {
        self.s_val.clear();
        self.s_sup.clear();
        for (i, &x) in self.scope.iter().enumerate() {
            let sz = store.size(x);
            if store.changed_since(x, store.int(self.last_sizes[i]) as usize) {
                self.s_val.push(i);
                store.set_int(self.last_sizes[i], sz as i64);
            }
            if sz > 1 {
                self.s_sup.push(i);
            }
        }
    }

    /// Update phase: for each changed variable, AND `currTable` with the OR
    /// of the support rows of its remaining values. Returns false as soon as
    /// the table empties.
    pub(crate) fn serial_update(&mut self, store: &mut DomainStore) -> bool {
        for k in 0..self.s_val.len() {
            let i = self.s_val[k];
            self.build_value_mask(store, i);
            let mut any = 0u32;
            for w in 0..self.curr_words {
                store.and_word(self.curr_table, w, self.mask_buf[w]);
                any |= store.word(self.curr_table, w);
            }
            if any == 0 {
                return false;
            }
        }
        debug_assert!(
            store.words_any_nonzero(self.curr_table),
            "currTable empty although no variable changed"
        );
        true
    }

    /// OR of the support rows of the remaining values of scope position `i`,
    /// left in `mask_buf`.
    fn build_value_mask(&mut self, store: &DomainStore, i: usize) {
        self.mask_buf.fill(0);
        let mask = &mut self.mask_buf;
        let supports = &self.supports;
        let jmp = self.support_jmp[i];
        let off = self.variables_offsets[i];
        store.for_each_value(self.scope[i], |a| {
            let row = &supports[jmp + (a - off) as usize];
            for (m, w) in mask.iter_mut().zip(row.words()) {
                *m |= w;
            }
        });
    }

    /// Filter phase: on every unfixed variable, drop the values whose
    /// support row no longer intersects `currTable`, then record the new
    /// size. A wipe-out is impossible here — `currTable` is non-empty and
    /// each of its tuples supports one value per variable.
    pub(crate) fn serial_filter(&mut self, store: &mut DomainStore) {
        for k in 0..self.s_sup.len() {
            let i = self.s_sup[k];
            let x = self.scope[i];
            for a in store.values(x) {
                let r = self.support_jmp[i] + (a - self.variables_offsets[i]) as usize;
                if !self.row_meets_curr_table(store, r) {
                    store.remove(x, a);
                }
            }
            assert!(store.size(x) > 0, "filter emptied a domain");
            store.set_int(self.last_sizes[i], store.size(x) as i64);
        }
    }

    fn row_meets_curr_table(&self, store: &DomainStore, r: usize) -> bool {
        let row = &self.supports[r];
        (0..self.curr_words).any(|w| store.word(self.curr_table, w) & row.word(w) != 0)
    }

    /// Applies a precomputed removal bitmap (one bit per support row) the
    /// same way the serial filter applies its own decisions.
    pub(crate) fn apply_removals(&mut self, store: &mut DomainStore, removal: &WordArray) {
        debug_assert_eq!(removal.nbits(), self.support_size);
        for k in 0..self.s_sup.len() {
            let i = self.s_sup[k];
            let x = self.scope[i];
            for a in store.values(x) {
                let r = self.support_jmp[i] + (a - self.variables_offsets[i]) as usize;
                if removal.get(r) {
                    store.remove(x, a);
                }
            }
            assert!(store.size(x) > 0, "filter emptied a domain");
            store.set_int(self.last_sizes[i], store.size(x) as i64);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Five tuples over three variables with declared ranges {1..4}.
    fn fixture_tuples() -> Vec<Vec<i64>> {
        vec![
            vec![3, 1, 1],
            vec![1, 2, 3],
            vec![2, 3, 3],
            vec![1, 4, 1],
            vec![3, 4, 3],
        ]
    }

    fn fixture(store: &mut DomainStore) -> TableConstraint {
        let scope: Vec<VarId> = (0..3).map(|_| store.new_var(1, 4)).collect();
        TableConstraint::new(store, scope, &fixture_tuples(), Backend::Serial).unwrap()
    }

    #[test]
    fn support_rows_match_tuple_occurrences() {
        let mut store = DomainStore::new();
        let ct = fixture(&mut store);
        let expect = [
            (0, 1, "01010"),
            (0, 2, "00100"),
            (0, 3, "10001"),
            (0, 4, "00000"),
            (1, 1, "10000"),
            (1, 2, "01000"),
            (1, 3, "00100"),
            (1, 4, "00011"),
            (2, 1, "10010"),
            (2, 2, "00000"),
            (2, 3, "01101"),
            (2, 4, "00000"),
        ];
        for (i, a, bits) in expect {
            assert_eq!(
                ct.support_row(i, a).unwrap().bit_string(),
                bits,
                "row for variable {i}, value {a}"
            );
        }
        assert_eq!(ct.support_size(), 12);
        assert_eq!(ct.support_jmp(), &[0, 4, 8]);
        assert_eq!(ct.variables_offsets(), &[1, 1, 1]);
    }

    #[test]
    fn posting_prunes_unsupported_values() {
        let mut store = DomainStore::new();
        let ct = fixture(&mut store);
        // Values with all-zero rows disappear at the root.
        assert_eq!(store.values(ct.scope()[0]), vec![1, 2, 3]);
        assert_eq!(store.values(ct.scope()[1]), vec![1, 2, 3, 4]);
        assert_eq!(store.values(ct.scope()[2]), vec![1, 3]);
        assert_eq!(ct.curr_table_bits(&store).bit_string(), "11111");
    }

    #[test]
    fn out_of_range_tuple_entries_invalidate_the_tuple() {
        let mut store = DomainStore::new();
        let scope: Vec<VarId> = (0..3).map(|_| store.new_var(1, 4)).collect();
        let mut tuples = fixture_tuples();
        tuples.push(vec![9, 9, 9]);
        let ct = TableConstraint::new(&mut store, scope, &tuples, Backend::Serial).unwrap();
        assert_eq!(ct.tuple_count(), 6);
        assert_eq!(ct.curr_table_bits(&store).bit_string(), "111110");
    }

    #[test]
    fn posting_with_no_valid_tuple_fails() {
        let mut store = DomainStore::new();
        // x0 can only be 4, but no tuple assigns 4 to the first variable.
        let x0 = store.new_var(4, 4);
        let x1 = store.new_var(1, 4);
        let x2 = store.new_var(1, 4);
        let r = TableConstraint::new(
            &mut store,
            vec![x0, x1, x2],
            &fixture_tuples(),
            Backend::Serial,
        );
        assert!(r.is_err());
    }

    #[test]
    fn posting_catches_values_supported_only_by_invalid_tuples() {
        let mut store = DomainStore::new();
        // The only tuple containing x0=1 assigns 9 to x1, which is out of
        // range, so x0=1 has a non-zero support row but no valid support.
        let x0 = store.new_var(1, 2);
        let x1 = store.new_var(1, 2);
        let tuples = vec![vec![1, 9], vec![2, 1], vec![2, 2]];
        let ct = TableConstraint::new(&mut store, vec![x0, x1], &tuples, Backend::Serial).unwrap();
        assert_eq!(store.values(x0), vec![2]);
        assert_eq!(ct.curr_table_bits(&store).bit_string(), "011");
    }

    #[test]
    fn propagation_after_domain_change_matches_hand_run() {
        let mut store = DomainStore::new();
        let mut ct = fixture(&mut store);
        let (x0, x1, x2) = (ct.scope()[0], ct.scope()[1], ct.scope()[2]);
        store.remove(x0, 2);
        store.remove(x0, 3);
        ct.propagate_serial(&mut store).unwrap();
        assert_eq!(ct.curr_table_bits(&store).bit_string(), "01010");
        assert_eq!(store.values(x0), vec![1]);
        assert_eq!(store.values(x1), vec![2, 4]);
        assert_eq!(store.values(x2), vec![1, 3]);
    }

    #[test]
    fn propagation_is_idempotent_at_fixpoint() {
        let mut store = DomainStore::new();
        let mut ct = fixture(&mut store);
        store.remove(ct.scope()[0], 2);
        ct.propagate_serial(&mut store).unwrap();
        let table = ct.curr_table_bits(&store);
        let domains: Vec<Vec<i64>> = ct.scope().iter().map(|&x| store.values(x)).collect();
        ct.propagate_serial(&mut store).unwrap();
        assert!(ct.s_val.is_empty(), "nothing changed since the last run");
        assert_eq!(ct.curr_table_bits(&store), table);
        let after: Vec<Vec<i64>> = ct.scope().iter().map(|&x| store.values(x)).collect();
        assert_eq!(after, domains);
    }

    #[test]
    fn emptied_table_reports_failure() {
        let mut store = DomainStore::new();
        let mut ct = fixture(&mut store);
        let (x0, x1) = (ct.scope()[0], ct.scope()[1]);
        // x0 = 2 leaves only tuple 3; x1 = 1 then kills it.
        store.fix(x0, 2);
        ct.propagate_serial(&mut store).unwrap();
        assert_eq!(ct.curr_table_bits(&store).bit_string(), "00100");
        store.fix(x1, 3); // consistent, still fine
        ct.propagate_serial(&mut store).unwrap();
        let x2 = ct.scope()[2];
        assert_eq!(store.values(x2), vec![3]);

        // Fresh run: force an inconsistent pair.
        let mut store = DomainStore::new();
        let mut ct = fixture(&mut store);
        let (x0, x1) = (ct.scope()[0], ct.scope()[1]);
        store.fix(x0, 2);
        store.fix(x1, 1);
        assert!(ct.propagate_serial(&mut store).is_err());
    }

    #[test]
    fn curr_table_restores_across_levels() {
        let mut store = DomainStore::new();
        let mut ct = fixture(&mut store);
        let x0 = ct.scope()[0];
        store.push_level();
        store.fix(x0, 1);
        ct.propagate_serial(&mut store).unwrap();
        assert_eq!(ct.curr_table_bits(&store).bit_string(), "01010");
        store.pop_level();
        assert_eq!(ct.curr_table_bits(&store).bit_string(), "11111");
        assert_eq!(store.values(x0), vec![1, 2, 3]);
        // After backtracking the recorded sizes match again: re-running the
        // propagator leaves everything untouched.
        ct.propagate_serial(&mut store).unwrap();
        assert!(ct.s_val.is_empty());
        assert_eq!(ct.curr_table_bits(&store).bit_string(), "11111");
    }

    #[test]
    fn row_mapping_roundtrips() {
        let mut store = DomainStore::new();
        let ct = fixture(&mut store);
        for r in 0..ct.support_size() {
            let (i, a) = ct.row_to_var_value(r);
            assert_eq!(ct.row_index(i, a), Some(r));
        }
        assert_eq!(ct.row_index(0, 99), None);
    }
}

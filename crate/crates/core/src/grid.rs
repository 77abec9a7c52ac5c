//! Data-parallel propagation phases for table constraints.
//!
//! Three kernels mirror the two phases of the serial propagator on the
//! grid executor:
//!
//! * the update kernel — grid `ceil(words/4) x |s_val|`, 128-item blocks —
//!   rebuilds, per changed variable, the OR of the support rows of its
//!   remaining values into a row of `TmpMasks`, reading the transposed
//!   support matrix and a domain snapshot;
//! * the reduce kernel — `words x 1`, 32-item blocks — ANDs the mask rows
//!   column-wise into one combined mask, which the host then ANDs into the
//!   trailed `currTable` (once, for every variant);
//! * the filter kernel — `ceil(supportSize/32) x 1`, 32-item blocks — emits
//!   one removal bit per support row: set when the row's value is still in
//!   its domain but the row no longer meets `currTable`. Bit `r` of the
//!   bitmap is decided by item `r % 32` of block `r / 32`.
//!
//! Kernels read only immutable snapshots (domains are dumped to a packed
//! bitmap first, `currTable` is copied) and each block writes its own output
//! slice, so every launch is deterministic for any worker count. The host
//! applies the results exactly like the serial phases, which keeps domains,
//! failures, and search trees identical across all four backends.

use crate::bitset::WordArray;
use crate::engine::{CpResult, Inconsistency};
use crate::exec::{block_reduce, BlockCtx, Executor, GridSpec, ReduceOp};
use crate::state::DomainStore;
use crate::table::{Backend, TableConstraint};

/// Words of `currTable` covered by one update-kernel block.
pub const UPDATE_WORDS_PER_BLOCK: usize = 4;

/// Per-variable masks produced by the update kernel: one row of
/// `currTable`-sized words per changed variable. Rows are stored in the
/// order the variables appear in `s_val` and addressed by scope position;
/// rows of variables outside `s_val` do not exist and are never read.
pub struct TmpMasks {
    data: Vec<u32>,
    stride: usize,
    scope_to_row: Vec<Option<usize>>,
    rows_in_use: usize,
}

impl TmpMasks {
    /// Allocates capacity for a table with `arity` variables and
    /// `word_count` words per mask row.
    pub fn for_table(arity: usize, word_count: usize) -> TmpMasks {
        let stride = word_count.div_ceil(UPDATE_WORDS_PER_BLOCK) * UPDATE_WORDS_PER_BLOCK;
        TmpMasks {
            data: vec![0; arity * stride.max(1)],
            stride,
            scope_to_row: vec![None; arity],
            rows_in_use: 0,
        }
    }

    fn reset(&mut self, s_val: &[usize]) {
        for m in &mut self.scope_to_row {
            *m = None;
        }
        for (row, &i) in s_val.iter().enumerate() {
            self.scope_to_row[i] = Some(row);
        }
        self.rows_in_use = s_val.len();
    }

    /// The mask row of scope position `i`, `None` when `i` was not in
    /// `s_val` at the last update launch.
    pub fn row(&self, i: usize) -> Option<&[u32]> {
        let row = self.scope_to_row.get(i).copied().flatten()?;
        Some(&self.data[row * self.stride..(row + 1) * self.stride])
    }

    fn physical_row(&self, p: usize) -> &[u32] {
        &self.data[p * self.stride..(p + 1) * self.stride]
    }
}

/// Grid geometry of the update kernel for a table with `word_count` words
/// and `changed` changed variables.
pub fn update_grid_spec(word_count: usize, changed: usize) -> GridSpec {
    GridSpec::new(word_count.div_ceil(UPDATE_WORDS_PER_BLOCK), changed, 128)
}

/// Grid geometry of the reduce kernel: one 32-item block per word.
pub fn reduce_grid_spec(word_count: usize) -> GridSpec {
    GridSpec::new(word_count, 1, 32)
}

/// Grid geometry of the filter kernel: one 32-item block per 32 support
/// rows, independent of how many variables are unfixed.
pub fn filter_grid_spec(support_size: usize) -> GridSpec {
    GridSpec::new(support_size.div_ceil(32), 1, 32)
}

/// Packs the current domains of the constraint's scope into one bitmap with
/// the same layout as the support rows: bit `supportJmp[i] + (a - offset_i)`
/// is set iff value `a` is still in the domain of scope position `i`.
pub fn dump_domain_snapshot(ct: &TableConstraint, store: &DomainStore, out: &mut WordArray) {
    assert_eq!(out.nbits(), ct.support_size());
    out.clear_all();
    for (i, &x) in ct.scope().iter().enumerate() {
        out.splice_bits(ct.support_jmp()[i], store.domain_words(x), ct.spans()[i]);
    }
}

/// Update kernel. Block (bx, by) rebuilds words `4bx..4bx+4` of the mask of
/// the `by`-th changed variable: its 128 items form a 32x4 sub-grid whose
/// rows each OR the supports-transposed words of a strided slice of the
/// variable's remaining values, and each word column is folded with an OR
/// block reduction. Requires a non-empty `s_val`.
pub fn update_table_grid(
    ct: &TableConstraint,
    snapshot: &WordArray,
    s_val: &[usize],
    exec: &Executor,
    out: &mut TmpMasks,
) {
    assert!(!s_val.is_empty(), "update launch needs changed variables");
    let words = ct.word_count();
    let spec = update_grid_spec(words, s_val.len());
    debug_assert_eq!(spec.blocks_x, words.div_ceil(UPDATE_WORDS_PER_BLOCK));
    debug_assert_eq!(spec.blocks_y, s_val.len());
    out.reset(s_val);
    let stride = out.stride;
    let support_size = ct.support_size();
    let supports_t = ct.supports_t();
    let jmp = ct.support_jmp();
    let spans = ct.spans();
    let used = s_val.len() * stride;
    exec.launch(
        &spec,
        UPDATE_WORDS_PER_BLOCK,
        &mut out.data[..used],
        |ctx: BlockCtx, chunk: &mut [u32]| {
            let i = s_val[ctx.block_y];
            let (base, span) = (jmp[i], spans[i]);
            for (c, slot) in chunk.iter_mut().enumerate() {
                let w = ctx.block_x * UPDATE_WORDS_PER_BLOCK + c;
                if w >= words {
                    *slot = 0;
                    continue;
                }
                let column = &supports_t[w * support_size..(w + 1) * support_size];
                // 32 sub-grid rows, each ORing a strided slice of the values.
                let mut partial = [0u32; 32];
                for (r, p) in partial.iter_mut().enumerate() {
                    let mut acc = 0u32;
                    let mut pos = r;
                    while pos < span {
                        if snapshot.get(base + pos) {
                            acc |= column[base + pos];
                        }
                        pos += 32;
                    }
                    *p = acc;
                }
                *slot = block_reduce(ReduceOp::Or, &partial);
            }
        },
    );
}

/// Reduce kernel. Block `w` ANDs word `w` of every mask row: its 32 items
/// each fold a strided slice of the rows, then an AND block reduction
/// combines the partials into the output word.
pub fn reduce_masks(masks: &TmpMasks, word_count: usize, exec: &Executor, out: &mut Vec<u32>) {
    let rows = masks.rows_in_use;
    assert!(rows > 0, "reduce launch needs mask rows");
    let spec = reduce_grid_spec(word_count);
    debug_assert_eq!(spec.blocks_x, word_count);
    out.clear();
    out.resize(word_count, 0);
    exec.launch(&spec, 1, out, |ctx: BlockCtx, chunk: &mut [u32]| {
        let w = ctx.block_x;
        let mut partial = [!0u32; 32];
        for (k, p) in partial.iter_mut().enumerate() {
            let mut acc = !0u32;
            let mut row = k;
            while row < rows {
                acc &= masks.physical_row(row)[w];
                row += 32;
            }
            *p = acc;
        }
        chunk[0] = block_reduce(ReduceOp::And, &partial);
    });
}

/// Filter kernel. Item `i` of block `b` owns support row `r = 32b + i`: if
/// the row's value is still in its domain (per the snapshot) and the row no
/// longer intersects `currTable`, removal bit `r` is set. Rows past the end
/// and values already gone stay clear, so the bitmap's padding invariant
/// holds by construction.
pub fn filter_domains_grid(
    ct: &TableConstraint,
    curr: &[u32],
    snapshot: &WordArray,
    exec: &Executor,
    out: &mut WordArray,
) {
    let support_size = ct.support_size();
    assert_eq!(out.nbits(), support_size);
    assert_eq!(curr.len(), ct.word_count());
    let spec = filter_grid_spec(support_size);
    debug_assert_eq!(spec.blocks_x, support_size.div_ceil(32));
    exec.launch(
        &spec,
        1,
        out.words_mut(),
        |ctx: BlockCtx, chunk: &mut [u32]| {
            let mut word = 0u32;
            for i in 0..ctx.items {
                let r = ctx.block_x * 32 + i;
                if r >= support_size || !snapshot.get(r) {
                    continue;
                }
                let row = ct.support_row_by_index(r);
                let supported = curr
                    .iter()
                    .zip(row.words())
                    .any(|(c, s)| c & s != 0);
                if !supported {
                    word |= 1 << i;
                }
            }
            chunk[0] = word;
        },
    );
}

/// One propagation round of a table constraint on its grid backend,
/// observationally identical to the serial propagator: same changed/unfixed
/// sets, same failure point, same removals, same recorded sizes. The only
/// difference is which phases run as kernel launches.
pub fn propagate_variant(
    ct: &mut TableConstraint,
    store: &mut DomainStore,
    exec: &Executor,
    masks: &mut TmpMasks,
    removal: &mut WordArray,
) -> CpResult<()> {
    let backend = ct.backend();
    debug_assert!(backend != Backend::Serial, "serial tables use propagate_serial");
    ct.compute_sets(store);

    // Domains do not change during the update phase, so one snapshot taken
    // here serves both kernels.
    let mut snapshot = std::mem::replace(&mut ct.snapshot_buf, WordArray::zeroed(0));
    dump_domain_snapshot(ct, store, &mut snapshot);

    let update_ok = if ct.s_val.is_empty() {
        // Nothing changed: the update phase is skipped entirely (an empty
        // grid would be ill-formed) and the table is untouched.
        true
    } else {
        match backend {
            Backend::F => ct.serial_update(store),
            _ => {
                let s_val = std::mem::take(&mut ct.s_val);
                update_table_grid(ct, &snapshot, &s_val, exec, masks);
                let mut reduced = std::mem::take(&mut ct.reduced_mask);
                reduce_masks(masks, ct.word_count(), exec, &mut reduced);
                // The combined mask is applied on the host, in one pass.
                let mut any = 0u32;
                for (w, &m) in reduced.iter().enumerate() {
                    store.and_word(ct.curr_table_ref(), w, m);
                    any |= store.word(ct.curr_table_ref(), w);
                }
                ct.reduced_mask = reduced;
                ct.s_val = s_val;
                any != 0
            }
        }
    };
    if !update_ok {
        ct.snapshot_buf = snapshot;
        return Err(Inconsistency);
    }

    match backend {
        Backend::U => ct.serial_filter(store),
        _ => {
            let mut curr = std::mem::take(&mut ct.curr_copy);
            store.copy_words(ct.curr_table_ref(), &mut curr);
            filter_domains_grid(ct, &curr, &snapshot, exec, removal);
            ct.curr_copy = curr;
            ct.apply_removals(store, removal);
        }
    }
    ct.snapshot_buf = snapshot;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::VarId;

    fn fixture(store: &mut DomainStore, backend: Backend) -> TableConstraint {
        let scope: Vec<VarId> = (0..3).map(|_| store.new_var(1, 4)).collect();
        let tuples = vec![
            vec![3, 1, 1],
            vec![1, 2, 3],
            vec![2, 3, 3],
            vec![1, 4, 1],
            vec![3, 4, 3],
        ];
        TableConstraint::new(store, scope, &tuples, backend).unwrap()
    }

    #[test]
    fn snapshot_packs_domains_in_row_order() {
        let mut store = DomainStore::new();
        let ct = fixture(&mut store, Backend::Uf);
        let mut snap = WordArray::zeroed(ct.support_size());
        dump_domain_snapshot(&ct, &store, &mut snap);
        // Posting pruned x0 to {1,2,3} and x2 to {1,3}.
        assert_eq!(snap.bit_string(), "111011111010");
        store.remove(ct.scope()[1], 2);
        dump_domain_snapshot(&ct, &store, &mut snap);
        assert_eq!(snap.bit_string(), "111010111010");
    }

    #[test]
    fn update_and_reduce_match_serial_masks() {
        let mut store = DomainStore::new();
        let mut ct = fixture(&mut store, Backend::Uf);
        let x0 = ct.scope()[0];
        store.remove(x0, 2);
        store.remove(x0, 3);
        ct.compute_sets(&mut store);
        assert_eq!(ct.s_val, vec![0]);

        let mut snap = WordArray::zeroed(ct.support_size());
        dump_domain_snapshot(&ct, &store, &mut snap);
        let mut masks = TmpMasks::for_table(ct.arity(), ct.word_count());
        let exec = Executor::serial_grid();
        let s_val = ct.s_val.clone();
        update_table_grid(&ct, &snap, &s_val, &exec, &mut masks);
        // dom(x0) = {1}: the mask is the support row of (x0, 1).
        let row_x0_1 = WordArray::from_bit_str("01010").word(0);
        assert_eq!(masks.row(0).unwrap()[0], row_x0_1);
        assert!(masks.row(1).is_none());

        let mut reduced = Vec::new();
        reduce_masks(&masks, ct.word_count(), &exec, &mut reduced);
        assert_eq!(reduced, vec![row_x0_1]);
    }

    #[test]
    fn reduce_folds_multiple_rows_with_and() {
        let mut store = DomainStore::new();
        let mut ct = fixture(&mut store, Backend::Uf);
        let (x0, x2) = (ct.scope()[0], ct.scope()[2]);
        store.fix(x0, 1);
        store.remove(x2, 1);
        ct.compute_sets(&mut store);
        assert_eq!(ct.s_val, vec![0, 2]);
        let mut snap = WordArray::zeroed(ct.support_size());
        dump_domain_snapshot(&ct, &store, &mut snap);
        let mut masks = TmpMasks::for_table(ct.arity(), ct.word_count());
        let exec = Executor::serial_grid();
        let s_val = ct.s_val.clone();
        update_table_grid(&ct, &snap, &s_val, &exec, &mut masks);
        let mask_x0 = WordArray::from_bit_str("01010").word(0); // x0 = 1
        let mask_x2 = WordArray::from_bit_str("01101").word(0); // x2 = 3
        assert_eq!(masks.row(0).unwrap()[0], mask_x0);
        assert_eq!(masks.row(2).unwrap()[0], mask_x2);
        let mut reduced = Vec::new();
        reduce_masks(&masks, ct.word_count(), &exec, &mut reduced);
        let survivor = WordArray::from_bit_str("01000").word(0);
        assert_eq!(reduced, vec![survivor], "tuple 2 is the only survivor");
    }

    #[test]
    fn filter_kernel_flags_unsupported_in_domain_values() {
        let mut store = DomainStore::new();
        let mut ct = fixture(&mut store, Backend::Uf);
        let x0 = ct.scope()[0];
        store.remove(x0, 2);
        store.remove(x0, 3);
        ct.compute_sets(&mut store);
        assert!(ct.serial_update(&mut store));
        assert_eq!(ct.curr_table_bits(&store).bit_string(), "01010");

        let mut snap = WordArray::zeroed(ct.support_size());
        dump_domain_snapshot(&ct, &store, &mut snap);
        let mut curr = Vec::new();
        store.copy_words(ct.curr_table_ref(), &mut curr);
        let mut removal = WordArray::zeroed(ct.support_size());
        filter_domains_grid(&ct, &curr, &snap, &Executor::serial_grid(), &mut removal);
        // x1 loses 1 and 3 (rows 4 and 6), x2 loses nothing.
        let flagged: Vec<usize> = removal.iter_ones().collect();
        assert_eq!(flagged, vec![4, 6]);
    }

    #[test]
    fn grid_round_matches_serial_round_on_the_fixture() {
        let run = |backend: Backend| -> (String, Vec<Vec<i64>>) {
            let mut store = DomainStore::new();
            let mut ct = fixture(&mut store, backend);
            let x0 = ct.scope()[0];
            store.remove(x0, 2);
            store.remove(x0, 3);
            if backend == Backend::Serial {
                ct.propagate_serial(&mut store).unwrap();
            } else {
                let exec = Executor::serial_grid();
                let mut masks = TmpMasks::for_table(ct.arity(), ct.word_count());
                let mut removal = WordArray::zeroed(ct.support_size());
                propagate_variant(&mut ct, &mut store, &exec, &mut masks, &mut removal).unwrap();
            }
            (
                ct.curr_table_bits(&store).bit_string(),
                ct.scope().iter().map(|&x| store.values(x)).collect(),
            )
        };
        let reference = run(Backend::Serial);
        for backend in [Backend::U, Backend::F, Backend::Uf] {
            assert_eq!(run(backend), reference, "{backend:?}");
        }
    }

    #[test]
    fn variant_u_fails_on_host_after_reduce() {
        let mut store = DomainStore::new();
        let mut ct = fixture(&mut store, Backend::U);
        let (x0, x1) = (ct.scope()[0], ct.scope()[1]);
        store.fix(x0, 2);
        store.fix(x1, 1);
        let exec = Executor::serial_grid();
        let mut masks = TmpMasks::for_table(ct.arity(), ct.word_count());
        let mut removal = WordArray::zeroed(ct.support_size());
        let r = propagate_variant(&mut ct, &mut store, &exec, &mut masks, &mut removal);
        assert!(r.is_err());
    }

    #[test]
    fn variant_f_skips_update_when_nothing_changed() {
        let mut store = DomainStore::new();
        let mut ct = fixture(&mut store, Backend::F);
        let exec = Executor::serial_grid();
        let mut masks = TmpMasks::for_table(ct.arity(), ct.word_count());
        let mut removal = WordArray::zeroed(ct.support_size());
        let before = ct.curr_table_bits(&store);
        propagate_variant(&mut ct, &mut store, &exec, &mut masks, &mut removal).unwrap();
        assert_eq!(ct.curr_table_bits(&store), before);
        assert!(removal.is_zero(), "fixpoint: the filter removes nothing");
    }

    #[test]
    fn kernel_geometry_follows_the_size_laws() {
        assert_eq!(update_grid_spec(32, 3), GridSpec::new(8, 3, 128));
        assert_eq!(update_grid_spec(1, 1), GridSpec::new(1, 1, 128));
        assert_eq!(reduce_grid_spec(9), GridSpec::new(9, 1, 32));
        assert_eq!(filter_grid_spec(197), GridSpec::new(7, 1, 32));
        assert_eq!(filter_grid_spec(32), GridSpec::new(1, 1, 32));
        assert_eq!(filter_grid_spec(33), GridSpec::new(2, 1, 32));
    }
}

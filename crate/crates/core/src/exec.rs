//! A portable grid/block executor for data-parallel kernels.
//!
//! Work is described by a two-dimensional grid of blocks, each with a fixed
//! number of work items (32 or 128). A launch hands every block a private,
//! disjoint slice of the output buffer and runs the block's items; blocks
//! may execute in any order on any number of workers, and items within a
//! block run sequentially on whichever worker owns the block. Because block
//! outputs are pure functions of the launch inputs and the slices are
//! disjoint, results are bit-identical regardless of worker count or
//! scheduling — the one-worker backend is the reference semantics.

use rayon::prelude::*;
use std::sync::Arc;

/// Grid geometry for one kernel launch.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct GridSpec {
    pub blocks_x: usize,
    pub blocks_y: usize,
    pub items_per_block: usize,
}

impl GridSpec {
    pub fn new(blocks_x: usize, blocks_y: usize, items_per_block: usize) -> GridSpec {
        let spec = GridSpec {
            blocks_x,
            blocks_y,
            items_per_block,
        };
        spec.validate();
        spec
    }

    pub fn validate(&self) {
        assert!(
            self.blocks_x > 0 && self.blocks_y > 0,
            "empty grid: {}x{} blocks",
            self.blocks_x,
            self.blocks_y
        );
        assert!(
            self.items_per_block == 32 || self.items_per_block == 128,
            "unsupported block size {}",
            self.items_per_block
        );
    }

    pub fn total_blocks(&self) -> usize {
        self.blocks_x * self.blocks_y
    }

    pub fn total_items(&self) -> usize {
        self.total_blocks() * self.items_per_block
    }
}

/// Coordinates of the block a kernel invocation is running as.
#[derive(Clone, Copy, Debug)]
pub struct BlockCtx {
    pub block_x: usize,
    pub block_y: usize,
    pub items: usize,
}

/// Combining operator for block-level reductions.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ReduceOp {
    And,
    Or,
}

impl ReduceOp {
    pub fn identity(&self) -> u32 {
        match self {
            ReduceOp::And => !0u32,
            ReduceOp::Or => 0,
        }
    }

    fn apply(&self, a: u32, b: u32) -> u32 {
        match self {
            ReduceOp::And => a & b,
            ReduceOp::Or => a | b,
        }
    }
}

/// Tree reduction over one word per work item, the way a block of threads
/// folds a shared array by halving strides. Missing items (fewer values
/// than the block size) count as the operator identity, so the result
/// equals a plain sequential fold.
pub fn block_reduce(op: ReduceOp, values: &[u32]) -> u32 {
    assert!(values.len() <= 128, "more values than a block has items");
    let mut buf = [op.identity(); 128];
    buf[..values.len()].copy_from_slice(values);
    let mut width = values.len().next_power_of_two().max(1);
    while width > 1 {
        width /= 2;
        for k in 0..width {
            buf[k] = op.apply(buf[k], buf[k + width]);
        }
    }
    buf[0]
}

enum ExecInner {
    /// Reference backend: one worker walks the grid in block order.
    Serial,
    /// Worker-pool backend; blocks are distributed over the pool.
    Pool(Arc<rayon::ThreadPool>),
}

/// Runs kernel launches on one of the two backends.
#[derive(Clone)]
pub struct Executor {
    inner: Arc<ExecInner>,
    workers: usize,
}

impl Executor {
    /// The single-worker reference backend ("serial-grid").
    pub fn serial_grid() -> Executor {
        Executor {
            inner: Arc::new(ExecInner::Serial),
            workers: 1,
        }
    }

    /// A pool backend with `workers` workers; one worker degrades to the
    /// reference backend.
    pub fn pool(workers: usize) -> Executor {
        let workers = workers.max(1);
        if workers == 1 {
            return Executor::serial_grid();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("worker pool construction");
        Executor {
            inner: Arc::new(ExecInner::Pool(Arc::new(pool))),
            workers,
        }
    }

    /// Pool backend with the default worker count: `CT_EXEC_WORKERS` when
    /// set, otherwise the machine's available parallelism.
    pub fn default_pool() -> Executor {
        Executor::pool(default_workers())
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn backend_name(&self) -> &'static str {
        match *self.inner {
            ExecInner::Serial => "serial-grid",
            ExecInner::Pool(_) => "pool",
        }
    }

    /// Launches `kernel` over `spec`, synchronously. The output buffer is
    /// split into `words_per_block`-sized chunks, one per block in row-major
    /// order (`block_y * blocks_x + block_x`); each invocation sees only its
    /// own chunk, which makes cross-block writes unrepresentable. Returns
    /// once every block has run.
    pub fn launch<K>(&self, spec: &GridSpec, words_per_block: usize, out: &mut [u32], kernel: K)
    where
        K: Fn(BlockCtx, &mut [u32]) + Sync,
    {
        spec.validate();
        assert_eq!(
            out.len(),
            spec.total_blocks() * words_per_block,
            "output buffer does not match grid geometry"
        );
        let run = |(idx, chunk): (usize, &mut [u32])| {
            let ctx = BlockCtx {
                block_x: idx % spec.blocks_x,
                block_y: idx / spec.blocks_x,
                items: spec.items_per_block,
            };
            kernel(ctx, chunk);
        };
        match &*self.inner {
            ExecInner::Serial => {
                for pair in out.chunks_mut(words_per_block).enumerate() {
                    run(pair);
                }
            }
            ExecInner::Pool(pool) => pool.install(|| {
                out.par_chunks_mut(words_per_block).enumerate().for_each(run);
            }),
        }
    }
}

/// Worker count used by `default_pool`.
pub fn default_workers() -> usize {
    if let Ok(v) = std::env::var("CT_EXEC_WORKERS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n >= 1 {
                return n;
            }
        }
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

//! Data-parallel node kernels.
//!
//! All reductions are evaluated as fixed-size chunk partial sums combined in
//! index order, so results are bit-identical between the parallel and the
//! sequential path and independent of the thread count.

use std::sync::atomic::{AtomicBool, Ordering};

/// Nodes per reduction chunk and per parallel work item.
pub const CHUNK: usize = 1024;

/// Below this length the kernels never spawn parallel work.
const PAR_THRESHOLD: usize = 4 * CHUNK;

static PARALLEL: AtomicBool = AtomicBool::new(cfg!(feature = "parallel"));

/// Execution policy for the node kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

/// Selects the execution policy process-wide. `Exec::Parallel` is a no-op
/// when the crate is built without the `parallel` feature.
pub fn set_exec(exec: Exec) {
    PARALLEL.store(exec == Exec::Parallel && cfg!(feature = "parallel"), Ordering::Relaxed);
}

pub fn exec() -> Exec {
    if PARALLEL.load(Ordering::Relaxed) {
        Exec::Parallel
    } else {
        Exec::Sequential
    }
}

/// Sizes the global worker pool; `1` also selects `Exec::Sequential`.
/// Must run before any parallel kernel; later calls cannot resize the pool.
pub fn configure_threads(threads: usize) -> Result<(), String> {
    if threads == 0 {
        return Err("thread count must be at least 1".into());
    }
    if threads == 1 {
        set_exec(Exec::Sequential);
        return Ok(());
    }
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| e.to_string())
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok(())
    }
}

fn use_parallel(len: usize) -> bool {
    len >= PAR_THRESHOLD && PARALLEL.load(Ordering::Relaxed) && workers() > 1
}

#[cfg(feature = "parallel")]
fn workers() -> usize {
    rayon::current_num_threads()
}

#[cfg(not(feature = "parallel"))]
fn workers() -> usize {
    1
}

/// `out[j] = f(j)` for every node.
pub fn fill<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if use_parallel(out.len()) {
        use rayon::prelude::*;
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
            let base = c * CHUNK;
            for (k, slot) in chunk.iter_mut().enumerate() {
                *slot = f(base + k);
            }
        });
        return;
    }
    let _ = use_parallel;
    for (j, slot) in out.iter_mut().enumerate() {
        *slot = f(j);
    }
}

/// Fills two outputs at once from a pair-valued kernel.
pub fn fill2<F>(a: &mut [f64], b: &mut [f64], f: F)
where
    F: Fn(usize) -> (f64, f64) + Sync + Send,
{
    assert_eq!(a.len(), b.len());
    #[cfg(feature = "parallel")]
    if use_parallel(a.len()) {
        use rayon::prelude::*;
        a.par_chunks_mut(CHUNK)
            .zip(b.par_chunks_mut(CHUNK))
            .enumerate()
            .for_each(|(c, (ca, cb))| {
                let base = c * CHUNK;
                for k in 0..ca.len() {
                    let (x, y) = f(base + k);
                    ca[k] = x;
                    cb[k] = y;
                }
            });
        return;
    }
    for j in 0..a.len() {
        let (x, y) = f(j);
        a[j] = x;
        b[j] = y;
    }
}

fn chunk_sum<F: Fn(usize) -> f64>(f: &F, lo: usize, hi: usize) -> f64 {
    let mut s = 0.0;
    for j in lo..hi {
        s += f(j);
    }
    s
}

/// Deterministic `sum_{j < len} f(j)`.
pub fn sum<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunks = len.div_ceil(CHUNK);
    #[cfg(feature = "parallel")]
    if use_parallel(len) {
        use rayon::prelude::*;
        let partial: Vec<f64> = (0..chunks)
            .into_par_iter()
            .map(|c| chunk_sum(&f, c * CHUNK, ((c + 1) * CHUNK).min(len)))
            .collect();
        return partial.iter().sum();
    }
    let mut total = 0.0;
    for c in 0..chunks {
        total += chunk_sum(&f, c * CHUNK, ((c + 1) * CHUNK).min(len));
    }
    total
}

/// First index whose value fails `ok`, if any.
pub fn first_bad<F>(len: usize, ok: F) -> Option<usize>
where
    F: Fn(usize) -> bool + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if use_parallel(len) {
        use rayon::prelude::*;
        return (0..len).into_par_iter().position_first(|j| !ok(j));
    }
    (0..len).position(|j| !ok(j))
}

/// Maps `f` over `items`, in parallel when enabled. Output order matches input.
pub fn map_items<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if PARALLEL.load(Ordering::Relaxed) && items.len() > 1 && workers() > 1 {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    items.iter().map(f).collect()
}

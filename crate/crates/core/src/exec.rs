//! Level-synchronous execution with outer/inner worker splits.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

use crate::linalg::Workers;
use crate::planner::ThreadPair;

fn pools() -> &'static Mutex<HashMap<usize, Arc<ThreadPool>>> {
    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<ThreadPool>>>> = OnceLock::new();
    POOLS.get_or_init(|| Mutex::new(HashMap::new()))
}

/// A cached pool with exactly `threads` workers.
pub fn pool(threads: usize) -> Arc<ThreadPool> {
    let threads = threads.max(1);
    let mut map = pools().lock().expect("pool cache poisoned");
    map.entry(threads)
        .or_insert_with(|| {
            Arc::new(
                ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .thread_name(move |i| format!("hps-{threads}-{i}"))
                    .build()
                    .expect("thread pool"),
            )
        })
        .clone()
}

/// Runs `f` on every item with `pair.outer` workers, each owning a contiguous
/// block of items and passing `pair.inner` workers to its kernels. Results
/// keep the input order. Stops at the first error within each block.
pub fn run_level<I, T, E, F>(pair: ThreadPair, items: Vec<I>, f: F) -> Result<Vec<T>, E>
where
    I: Send,
    T: Send,
    E: Send,
    F: Fn(I, Workers) -> Result<T, E> + Sync,
{
    let inner = Workers::new(pair.inner);
    let outer = pair.outer.max(1).min(items.len().max(1));
    if outer == 1 && pair.inner == 1 {
        return items.into_iter().map(|it| f(it, inner)).collect();
    }
    let chunk = items.len().div_ceil(outer).max(1);
    let mut blocks: Vec<Vec<I>> = Vec::with_capacity(outer);
    let mut it = items.into_iter().peekable();
    while it.peek().is_some() {
        blocks.push(it.by_ref().take(chunk).collect());
    }
    let pool = pool(outer * pair.inner);
    let results: Vec<Result<Vec<T>, E>> = pool.install(|| {
        blocks
            .into_par_iter()
            .with_max_len(1)
            .map(|block| block.into_iter().map(|x| f(x, inner)).collect())
            .collect()
    });
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

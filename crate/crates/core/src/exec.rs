//! Data-parallel map helpers with a sequential fallback.
//!
//! Every helper returns results in input order, and callers reduce them
//! sequentially, so the two execution modes produce bit-identical output.
//! With the `parallel` feature disabled, [`Mode::Parallel`] silently runs
//! sequentially.

use std::sync::atomic::{AtomicU8, Ordering};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Sequential,
    Parallel,
}

static MODE: AtomicU8 = AtomicU8::new(if cfg!(feature = "parallel") { 1 } else { 0 });

/// Select the process-wide execution mode.
pub fn set_mode(mode: Mode) {
    MODE.store(
        match mode {
            Mode::Sequential => 0,
            Mode::Parallel => 1,
        },
        Ordering::SeqCst,
    );
}

pub fn mode() -> Mode {
    match MODE.load(Ordering::SeqCst) {
        0 => Mode::Sequential,
        _ => Mode::Parallel,
    }
}

/// True when work is actually dispatched to the rayon pool.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && mode() == Mode::Parallel
}

/// Order-preserving map over `0..n`.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if is_parallel() && n > 1 {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Order-preserving map over a slice.
pub fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_range(items.len(), |i| f(&items[i]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_preserve_order() {
        let prev = mode();
        set_mode(Mode::Sequential);
        let a = map_range(1000, |i| (i as f64).sqrt());
        set_mode(Mode::Parallel);
        let b = map_range(1000, |i| (i as f64).sqrt());
        set_mode(prev);
        assert_eq!(a, b);
        assert_eq!(a[9], 3.0);
    }
}

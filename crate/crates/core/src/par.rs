//! Data-parallel map over independent work items.
//!
//! With the `parallel` feature (default) work is spread over the rayon pool
//! unless [`ExecMode::Sequential`] is selected at runtime. Without the feature
//! everything runs on the calling thread. Results keep input order either way.

use std::sync::atomic::{AtomicU8, Ordering};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecMode {
    Parallel,
    Sequential,
}

static MODE: AtomicU8 = AtomicU8::new(0);

/// Select how subsequent [`map`]/[`try_map`] calls execute.
pub fn set_mode(mode: ExecMode) {
    MODE.store(matches!(mode, ExecMode::Sequential) as u8, Ordering::Relaxed);
}

pub fn mode() -> ExecMode {
    if cfg!(feature = "parallel") && MODE.load(Ordering::Relaxed) == 0 {
        ExecMode::Parallel
    } else {
        ExecMode::Sequential
    }
}

/// Configure the global pool size. Returns false when the pool was already
/// initialised or parallelism is compiled out.
pub fn init_threads(n: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        false
    }
}

pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_with(mode(), items, f)
}

pub fn map_with<T, R, F>(mode: ExecMode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

pub fn try_map<T, R, E, F>(items: &[T], f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync + Send,
{
    map(items, f).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_keep_order() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = map_with(ExecMode::Parallel, &xs, |x| x * x);
        let b = map_with(ExecMode::Sequential, &xs, |x| x * x);
        assert_eq!(a, b);
        assert_eq!(a[999], 998_001);
    }
}

//! Data-parallel helpers with a sequential fallback.
//!
//! Independent jobs (seeds, ensemble members, OOD sets, row chunks) go through
//! [`map`]/[`try_map`]. With the `parallel` feature they run on the rayon pool;
//! without it, or with [`Exec::Sequential`], they run in order on the calling
//! thread. Results are always returned in input order, and every job is
//! internally single-threaded, so outputs do not depend on the mode.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Execution mode for a batch of independent jobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Falls back to sequential when built without the `parallel` feature.
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

pub fn map<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Like [`map`], but stops at the first error (in input order).
pub fn try_map<T, R, E, F>(exec: Exec, items: &[T], f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync + Send,
{
    map(exec, items, f).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_keep_order() {
        let xs: Vec<u64> = (0..257).collect();
        let seq = map(Exec::Sequential, &xs, |x| x * x + 1);
        let par = map(Exec::Parallel, &xs, |x| x * x + 1);
        assert_eq!(seq, par);
        assert_eq!(seq[3], 10);
    }

    #[test]
    fn try_map_reports_first_error() {
        let xs = [1, 2, 3, 4];
        let r: Result<Vec<i32>, i32> =
            try_map(Exec::Parallel, &xs, |&x| if x >= 3 { Err(x) } else { Ok(x) });
        assert_eq!(r, Err(3));
    }
}

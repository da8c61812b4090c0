//! Order-preserving data-parallel map.
//!
//! The heavy pipeline stages (expression extraction, augmentation, corpus
//! serialization) are all maps over an indexed slice. Downstream hashing and
//! checkpoint bytes assume input order, so both implementations return
//! results in input order. With the `parallel` feature (default) the work
//! runs on rayon's pool; `ordered_map_seq` is the always-sequential
//! reference used by the benchmarks and by builds without rayon.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub fn ordered_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        ordered_map_seq(items, f)
    }
}

pub fn ordered_map_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(usize, &T) -> U,
{
    items.iter().enumerate().map(|(i, x)| f(i, x)).collect()
}

/// Run `f` with a worker pool of the given size; 0 means the library default.
/// Without the `parallel` feature the count is ignored and `f` just runs.
pub fn with_pool<R, F>(workers: usize, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    {
        if workers == 0 {
            f()
        } else {
            rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .expect("worker pool")
                .install(f)
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        f()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_matches_sequential_and_keeps_order() {
        let items: Vec<u64> = (0..4096).collect();
        let f = |i: usize, x: &u64| crate::util::fnv1a64(&(x + i as u64).to_le_bytes());
        let seq = ordered_map_seq(&items, f);
        let par = ordered_map(&items, f);
        assert_eq!(seq, par);
        let one = with_pool(1, || ordered_map(&items, f));
        let four = with_pool(4, || ordered_map(&items, f));
        assert_eq!(one, four);
    }
}

//! Fixed-size worker pools with input-ordered results.

use rayon::prelude::*;

/// Maps `f` over `items` on `workers` threads; output order follows input order.
pub fn ordered_map<T, R, F>(workers: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("failed to start worker pool");
    pool.install(|| items.par_iter().map(f).collect())
}

/// Default worker count: available parallelism.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, usize::from)
}

#[cfg(test)]
mod tests {
    #[test]
    fn order_is_kept() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = super::ordered_map(1, &xs, |x| x * x);
        let b = super::ordered_map(8, &xs, |x| x * x);
        assert_eq!(a, b);
    }
}

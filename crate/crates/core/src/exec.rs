//! Execution-mode switch for the embarrassingly parallel drivers.
//!
//! Sweep cells and Monte-Carlo trials are independent; with the `parallel`
//! feature they fan out over rayon's pool, otherwise (or on request) they run
//! sequentially. Results are collected in input order either way, so the two
//! modes produce identical output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    /// Run on the calling thread.
    Sequential,
    /// Use rayon when the `parallel` feature is enabled; otherwise sequential.
    #[default]
    Auto,
}

/// Map `f` over `items`, preserving order.
pub fn map_ordered<T, U, F>(items: Vec<T>, exec: Parallelism, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    match exec {
        Parallelism::Sequential => items.into_iter().map(f).collect(),
        Parallelism::Auto => {
            #[cfg(feature = "parallel")]
            {
                items.into_par_iter().map(f).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                items.into_iter().map(f).collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_preserve_order() {
        let items: Vec<u64> = (0..100).collect();
        let seq = map_ordered(items.clone(), Parallelism::Sequential, |x| x * x);
        let auto = map_ordered(items, Parallelism::Auto, |x| x * x);
        assert_eq!(seq, auto);
        assert_eq!(seq[10], 100);
    }
}

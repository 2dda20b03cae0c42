//! Choice between the rayon-backed and the plain sequential path.
//!
//! Without the `parallel` feature both variants run sequentially, so callers
//! never need their own `cfg` switches.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// Maps every item, keeping input order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => items.par_iter().map(f).collect(),
            _ => items.iter().map(f).collect(),
        }
    }

    /// Maps chunks of `items` to partial results and folds them with `merge`.
    /// `merge` must be associative; chunk boundaries depend on the variant.
    pub fn fold_chunks<T, R, F, M>(self, items: &[T], chunk: usize, init: R, f: F, merge: M) -> R
    where
        T: Sync,
        R: Send + Clone + Sync,
        F: Fn(&[T]) -> R + Sync + Send,
        M: Fn(R, R) -> R + Sync + Send,
    {
        let chunk = chunk.max(1);
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => items
                .par_chunks(chunk)
                .map(&f)
                .reduce(|| init.clone(), &merge),
            _ => items.chunks(chunk).map(&f).fold(init, &merge),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_variants_agree() {
        let v: Vec<u64> = (0..10_000).collect();
        let seq = Execution::Sequential.map(&v, |x| x * x);
        let par = Execution::Parallel.map(&v, |x| x * x);
        assert_eq!(seq, par);

        let sum = |e: Execution| e.fold_chunks(&v, 97, 0u64, |c| c.iter().sum(), |a, b| a + b);
        assert_eq!(sum(Execution::Sequential), sum(Execution::Parallel));
        assert_eq!(sum(Execution::Sequential), 10_000 * 9_999 / 2);
    }
}

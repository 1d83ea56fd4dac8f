//! Execution-mode switch for the per-round client fan-out. Parallel and
//! sequential execution produce identical results because outputs are
//! collected in input order; the switch only changes wall-clock time.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    /// Fan client updates out across a thread pool (requires the `parallel`
    /// feature; silently degrades to sequential without it).
    #[default]
    Parallel,
    Sequential,
}

/// Applies `f` to every item, returning outputs in input order regardless
/// of scheduling.
pub fn map_ordered<T, U, F>(mode: ExecMode, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if mode == ExecMode::Parallel {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
    }
    let _ = mode;
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_preserve_order() {
        let items: Vec<u64> = (0..1000).collect();
        let f = |x: &u64| x * x + 1;
        let par = map_ordered(ExecMode::Parallel, &items, f);
        let seq = map_ordered(ExecMode::Sequential, &items, f);
        assert_eq!(par, seq);
        assert_eq!(par[10], 101);
    }
}

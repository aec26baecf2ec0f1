//! Ensemble execution: an order-preserving map that runs on the rayon pool
//! when the `parallel` feature is enabled and sequentially otherwise.

/// How an ensemble map is executed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ExecMode {
    /// Rayon when compiled in, sequential otherwise.
    #[default]
    Auto,
    /// Always on the calling thread.
    Sequential,
}

impl ExecMode {
    /// True when this mode will actually fan out over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Auto
    }
}

/// `(0..n).map(f)` with results in index order regardless of scheduling.
pub fn map_indexed<R, F>(n: usize, mode: ExecMode, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode == ExecMode::Auto {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_preserve_order() {
        let a = map_indexed(100, ExecMode::Auto, |i| i * i);
        let b = map_indexed(100, ExecMode::Sequential, |i| i * i);
        assert_eq!(a, b);
        assert_eq!(a[7], 49);
    }
}

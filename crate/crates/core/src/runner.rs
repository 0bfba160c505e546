//! Parallel replicate execution.
//!
//! Replicate `r` always gets `RngSpec::new(seed, r)` and results come back
//! ordered by `r`, so output does not depend on the number of threads.

use rayon::prelude::*;
use rayon::ThreadPoolBuildError;

/// Runs `f(0), ..., f(reps - 1)` on a pool of `threads` workers (all cores
/// when `None`) and returns the results in index order.
pub fn run_replicates<T, F>(reps: u64, threads: Option<usize>, f: F) -> Result<Vec<T>, ThreadPoolBuildError>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build()?;
    Ok(pool.install(|| (0..reps).into_par_iter().map(&f).collect()))
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_by_index() {
        let a = run_replicates(1000, Some(3), |r| r * r).unwrap();
        let b = run_replicates(1000, Some(1), |r| r * r).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[31], 961);
    }

    #[test]
    fn mean_and_error() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert!(mean_se(&[]).0.is_nan());
    }
}

//! Thomas algorithm for tridiagonal systems.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TridiagError {
    #[error("band lengths do not match a system of size {0}")]
    Shape(usize),
    #[error("zero or non-finite pivot at row {0}")]
    Pivot(usize),
}

/// Solves `sub[i] x[i-1] + diag[i] x[i] + sup[i] x[i+1] = rhs[i]`.
///
/// `sub[0]` and `sup[n-1]` are ignored. No pivoting: the caller guarantees
/// diagonal dominance.
pub fn solve(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>, TridiagError> {
    let n = diag.len();
    if sub.len() != n || sup.len() != n || rhs.len() != n {
        return Err(TridiagError::Shape(n));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut pivot = diag[0];
    if pivot == 0.0 || !pivot.is_finite() {
        return Err(TridiagError::Pivot(0));
    }
    c[0] = sup[0] / pivot;
    d[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - sub[i] * c[i - 1];
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(TridiagError::Pivot(i));
        }
        c[i] = if i + 1 < n { sup[i] / pivot } else { 0.0 };
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        // [ 4 1 0 ] [1]   [ 6]
        // [ 1 4 1 ] [2] = [12]
        // [ 0 1 4 ] [3]   [14]
        let x = solve(&[0.0, 1.0, 1.0], &[4.0, 4.0, 4.0], &[1.0, 1.0, 0.0], &[6.0, 12.0, 14.0]).unwrap();
        for (a, b) in x.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn reports_bad_input() {
        assert_eq!(solve(&[0.0], &[1.0, 2.0], &[0.0], &[1.0]), Err(TridiagError::Shape(2)));
        assert_eq!(solve(&[0.0, 1.0], &[0.0, 1.0], &[1.0, 0.0], &[1.0, 1.0]), Err(TridiagError::Pivot(0)));
        assert_eq!(solve(&[], &[], &[], &[]), Ok(vec![]));
    }

    #[test]
    fn single_equation() {
        assert_eq!(solve(&[9.0], &[2.0], &[9.0], &[3.0]).unwrap(), vec![1.5]);
    }
}

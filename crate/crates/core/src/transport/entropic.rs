//! Entropy-regularized transport by log-domain Sinkhorn iterations.

use crate::error::{Error, Result};
use crate::geometry::CostMatrix;

/// How often (in iterations) the marginal violation is measured.
const CHECK_EVERY: usize = 10;

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Dense regularized plan between `a` (rows) and `b` (columns).
///
/// The plan is `a_i b_j exp((f_i + g_j - C_ij) / reg)`. Each sweep updates
/// `f` so rows match, then `g` so columns match. Iteration stops when the
/// largest row violation is at most `tol`; the column marginals are exact up
/// to rounding at that point.
pub fn sinkhorn_log(
    a: &[f64],
    b: &[f64],
    cost: &CostMatrix,
    reg: f64,
    max_iters: usize,
    tol: f64,
) -> Result<Vec<f64>> {
    let (n, m) = (a.len(), b.len());
    if n != cost.rows() || m != cost.cols() {
        return Err(Error::Shape("weights do not match the cost matrix".into()));
    }
    if a.iter().sum::<f64>() <= 0.0 || b.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Parameter("measure has zero total weight".into()));
    }
    let log_a: Vec<f64> = a.iter().map(|w| w.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|w| w.ln()).collect();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut residual = f64::INFINITY;

    let update_f = |f: &mut [f64], g: &[f64]| {
        for i in 0..n {
            if a[i] == 0.0 {
                continue;
            }
            let row = cost.row(i);
            let terms = (0..m).map(|j| log_b[j] + (g[j] - row[j]) / reg);
            f[i] = -reg * log_sum_exp(terms);
        }
    };
    let update_g = |f: &[f64], g: &mut [f64]| {
        for j in 0..m {
            if b[j] == 0.0 {
                continue;
            }
            let terms = (0..n).map(|i| log_a[i] + (f[i] - cost.get(i, j)) / reg);
            g[j] = -reg * log_sum_exp(terms);
        }
    };
    let plan = |f: &[f64], g: &[f64]| -> Vec<f64> {
        let mut p = vec![0.0; n * m];
        for i in 0..n {
            let row = cost.row(i);
            for j in 0..m {
                p[i * m + j] = (log_a[i] + log_b[j] + (f[i] + g[j] - row[j]) / reg).exp();
            }
        }
        p
    };

    for it in 1..=max_iters {
        update_f(&mut f, &g);
        update_g(&f, &mut g);
        if it % CHECK_EVERY == 0 || it == max_iters {
            let p = plan(&f, &g);
            residual = (0..n)
                .map(|i| (p[i * m..(i + 1) * m].iter().sum::<f64>() - a[i]).abs())
                .fold(0.0, f64::max);
            if !residual.is_finite() {
                return Err(Error::Solver(format!(
                    "Sinkhorn iterates became non-finite at iteration {it}"
                )));
            }
            if residual <= tol {
                return Ok(p);
            }
        }
    }
    Err(Error::Convergence {
        iterations: max_iters,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn large_reg_approaches_independent_coupling() {
        let cost = CostMatrix::from_fn(2, 3, |i, j| (i + j) as f64);
        let a = [0.3, 0.7];
        let b = [0.2, 0.3, 0.5];
        let p = sinkhorn_log(&a, &b, &cost, 1e6, 1000, 1e-12).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert!((p[i * 3 + j] - a[i] * b[j]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn small_reg_survives_underflow() {
        let cost = CostMatrix::from_fn(3, 3, |i, j| 50.0 * (i as f64 - j as f64).abs());
        let w = [1.0 / 3.0; 3];
        let p = sinkhorn_log(&w, &w, &cost, 1e-3, 1000, 1e-12).unwrap();
        for i in 0..3 {
            assert!((p[i * 3 + i] - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reports_non_convergence() {
        let cost = CostMatrix::from_fn(8, 8, |i, j| ((i * 7 + j * 3) as f64).sin().abs());
        let w = [0.125; 8];
        match sinkhorn_log(&w, &w, &cost, 0.05, 3, 1e-15) {
            Err(Error::Convergence { iterations, residual }) => {
                assert_eq!(iterations, 3);
                assert!(residual.is_finite());
            }
            other => panic!("expected a convergence error, got {other:?}"),
        }
    }
}

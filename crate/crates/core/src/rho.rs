//! Optimal control-coefficient solves.
//!
//! Given the covariance matrix of the control variables and their
//! covariances with the quantity of interest, the variance-minimizing
//! coefficients solve the normal equations. Controls are normalized to
//! unit variance before the solve; a near-singular system (condition
//! number beyond the threshold) sheds the most collinear control — the
//! dominant component of the smallest eigenvector — and re-solves.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Condition-number cutoff above which a control is dropped.
pub const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct RhoSolution {
    /// One coefficient per control; dropped controls carry 0.
    pub rho: Vec<f64>,
    /// Indices of controls removed for collinearity or zero variance.
    pub dropped: Vec<usize>,
}

/// Solves `gram * rho = rhs` with the shedding rule above.
///
/// `gram[i][j]` is Cov(Y_i, Y_j) and `rhs[i]` is Cov(X, Y_i). Errors with
/// [`Error::DegenerateControl`] when every control has zero variance.
pub fn solve_rho_system(gram: &[Vec<f64>], rhs: &[f64], cond_limit: f64) -> Result<RhoSolution> {
    let k = rhs.len();
    assert!(gram.len() == k && gram.iter().all(|r| r.len() == k));
    let mut active: Vec<usize> = (0..k).collect();
    let mut dropped = Vec::new();

    // zero-variance controls cannot contribute
    active.retain(|&i| {
        let keep = gram[i][i] > 0.0;
        if !keep {
            dropped.push(i);
        }
        keep
    });

    loop {
        if active.is_empty() {
            return Err(Error::DegenerateControl);
        }
        if active.len() == 1 {
            let i = active[0];
            let mut rho = vec![0.0; k];
            rho[i] = rhs[i] / gram[i][i];
            return Ok(RhoSolution { rho, dropped });
        }

        let m = active.len();
        let scale: Vec<f64> = active.iter().map(|&i| gram[i][i].sqrt()).collect();
        let gn = DMatrix::from_fn(m, m, |r, c| {
            gram[active[r]][active[c]] / (scale[r] * scale[c])
        });
        let bn = DVector::from_fn(m, |r, _| rhs[active[r]] / scale[r]);

        let eig = gn.clone().symmetric_eigen();
        let mut max_l = f64::NEG_INFINITY;
        let mut min_l = f64::INFINITY;
        let mut min_idx = 0;
        for (i, &l) in eig.eigenvalues.iter().enumerate() {
            if l > max_l {
                max_l = l;
            }
            if l < min_l {
                min_l = l;
                min_idx = i;
            }
        }
        let ill = min_l <= 0.0 || max_l / min_l > cond_limit;
        if ill {
            // dominant component of the near-null eigenvector is the most
            // collinear control
            let v = eig.eigenvectors.column(min_idx);
            let worst = (0..m)
                .max_by(|&a, &b| v[a].abs().partial_cmp(&v[b].abs()).unwrap())
                .unwrap();
            dropped.push(active[worst]);
            active.remove(worst);
            continue;
        }

        // solve through the eigendecomposition, then undo the scaling
        let vt_b = eig.eigenvectors.transpose() * bn;
        let y = DVector::from_fn(m, |r, _| vt_b[r] / eig.eigenvalues[r]);
        let sol = &eig.eigenvectors * y;
        let mut rho = vec![0.0; k];
        for (r, &i) in active.iter().enumerate() {
            rho[i] = sol[r] / scale[r];
        }
        return Ok(RhoSolution { rho, dropped });
    }
}

/// Empirical normal equations of the in-sample estimator: each control is
/// centered at its exact expectation, the quantity of interest at its
/// empirical mean. With a single control this is exactly the ratio
/// sum (X - mean)(Y - E[Y]) / sum (Y - E[Y])^2.
pub fn empirical_rho(
    xs: &[f64],
    ys: &[&[f64]],
    ey: &[f64],
    cond_limit: f64,
) -> Result<RhoSolution> {
    let m = xs.len();
    let k = ys.len();
    assert_eq!(ey.len(), k);
    assert!(ys.iter().all(|y| y.len() == m));
    assert!(m >= 2, "need at least two samples");
    let mu_x = xs.iter().sum::<f64>() / m as f64;
    let inv_m = 1.0 / m as f64;
    let mut gram = vec![vec![0.0; k]; k];
    let mut rhs = vec![0.0; k];
    for i in 0..k {
        for j in i..k {
            let mut acc = 0.0;
            for s in 0..m {
                acc += (ys[i][s] - ey[i]) * (ys[j][s] - ey[j]);
            }
            gram[i][j] = acc * inv_m;
            gram[j][i] = gram[i][j];
        }
        let mut acc = 0.0;
        for s in 0..m {
            acc += (xs[s] - mu_x) * (ys[i][s] - ey[i]);
        }
        rhs[i] = acc * inv_m;
    }
    solve_rho_system(&gram, &rhs, cond_limit)
}

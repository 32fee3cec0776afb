//! Dense reference computations shared by the integration tests.

#![allow(dead_code)]

use conley_flow::SymTridiag;
use rand::Rng;

/// Eigenvalues of a dense symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let total: f64 = a.iter().flatten().map(|v| v * v).sum();
        if off <= 1e-30 * total.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (akp, akq) = (row[p], row[q]);
                    row[p] = c * akp - s * akq;
                    row[q] = s * akp + c * akq;
                }
                let (head, tail) = a.split_at_mut(q);
                let (rp, rq) = (&mut head[p], &mut tail[0]);
                for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
                    let (apk, aqk) = (*x, *y);
                    *x = c * apk - s * aqk;
                    *y = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn dense(t: &SymTridiag) -> Vec<Vec<f64>> {
    let n = t.len();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        a[i][i] = t.diag()[i];
        if i + 1 < n {
            a[i][i + 1] = t.offdiag()[i];
            a[i + 1][i] = t.offdiag()[i];
        }
    }
    a
}

pub fn tridiag_eigenvalues(t: &SymTridiag) -> Vec<f64> {
    jacobi_eigenvalues(dense(t))
}

pub fn random_tridiag<R: Rng>(rng: &mut R, n: usize) -> SymTridiag {
    let diag = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let off = (0..n.saturating_sub(1))
        .map(|_| rng.random_range(-3.0..3.0))
        .collect();
    SymTridiag::new(diag, off).unwrap()
}

/// Number of reference eigenvalues strictly below `sigma`.
pub fn count_below(eigs: &[f64], sigma: f64) -> usize {
    eigs.iter().filter(|&&l| l < sigma).count()
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

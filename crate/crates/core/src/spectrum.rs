//! Eigenvalue counting and extraction below a cutoff.
//!
//! Counts come from exact inertia (no eigensolver tolerance enters `m` or
//! `m'`); individual eigenvalues are bracketed by bisection on those counts
//! and eigenvectors are obtained by inverse iteration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{check_positive, Error, Result};
use crate::grid::{Field, Grid};
use crate::model::{Nonlinearity, PotentialSpec};
use crate::operator::TridiagOperator;

const MAX_BISECTION_STEPS: usize = 300;
const MAX_INVERSE_ITERATIONS: usize = 40;
/// Eigenvector residual target relative to `‖T‖`.
pub const EIGENVECTOR_RESIDUAL: f64 = 1e-8;

/// Number of strictly negative eigenvalues.
pub fn count_negative(op: &TridiagOperator) -> usize {
    op.inertia_below(0.0).count
}

/// Eigenvalues strictly below `cutoff`, ascending, each within `tol` of an
/// exact eigenvalue of the operator.
pub fn eigenvalues_below(op: &TridiagOperator, cutoff: f64, tol: f64) -> Result<Vec<f64>> {
    check_positive("tol", tol)?;
    let total = op.inertia_below(cutoff).count;
    let (lo, _) = op.matrix().gershgorin();
    let lo = lo.min(cutoff) - tol;
    let mut out = Vec::with_capacity(total);
    let mut left = lo;
    for j in 0..total {
        // invariant: count(a) <= j < count(b)
        let mut a = left;
        let mut b = cutoff;
        for _ in 0..MAX_BISECTION_STEPS {
            if b - a <= tol {
                break;
            }
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if op.inertia_below(mid).count > j {
                b = mid;
            } else {
                a = mid;
            }
        }
        out.push(0.5 * (a + b));
        left = a;
    }
    Ok(out)
}

/// Unit-norm eigenvector for an isolated eigenvalue estimate `lambda`.
///
/// The sign is fixed so that the first component above `√ε · max|v|` is positive.
pub fn eigenvector(op: &TridiagOperator, lambda: f64) -> Result<Field> {
    let s = op.matrix();
    let n = s.len();
    let target = EIGENVECTOR_RESIDUAL * s.norm().max(lambda.abs()).max(f64::MIN_POSITIVE);
    let factor = s.factor_shifted_guarded(lambda);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    normalize(&mut x);
    for _ in 0..MAX_INVERSE_ITERATIONS {
        x = factor.solve(&x);
        normalize(&mut x);
        let sx = s.matvec(&x);
        let res = sx
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - lambda * b).powi(2))
            .sum::<f64>()
            .sqrt();
        if res <= target {
            let v = op.to_field(x);
            let norm = v.l2_norm();
            let v = v.scaled(1.0 / norm);
            return Ok(fix_sign(v));
        }
    }
    Err(Error::EigenvectorNoConvergence(MAX_INVERSE_ITERATIONS))
}

fn normalize(x: &mut [f64]) {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in x.iter_mut() {
        *v /= n;
    }
}

fn fix_sign(v: Field) -> Field {
    let threshold = f64::EPSILON.sqrt() * v.max_abs();
    match v.values().iter().find(|a| a.abs() > threshold) {
        Some(&first) if first < 0.0 => v.scaled(-1.0),
        _ => v,
    }
}

/// Spectral data of a limiting linear operator `-Δ_h + ν̃ - well` below `ν̃/2`.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    /// Number of strictly negative eigenvalues (the Morse index `m` or `m'`).
    pub count_negative: usize,
    pub eigenvalues_below_cutoff: Vec<f64>,
    /// `min |λ|` over the resolved eigenvalues, capped by the cutoff.
    pub kernel_gap: f64,
    pub cutoff: f64,
    pub tolerance: f64,
    pub certified: bool,
    #[serde(skip)]
    pub resolved_eigenvectors: Option<Vec<Field>>,
}

impl SpectralReport {
    /// Eigenvectors belonging to the negative eigenvalues, when resolved.
    pub fn unstable_directions(&self) -> &[Field] {
        match &self.resolved_eigenvectors {
            Some(v) => &v[..self.count_negative.min(v.len())],
            None => &[],
        }
    }
}

/// Discrete non-resonance threshold `10 h²`.
pub fn default_tolerance(grid: &Grid) -> f64 {
    10.0 * grid.spacing() * grid.spacing()
}

/// Resolves the spectrum below `ν̃/2` and certifies `ker T = {0}` when the
/// gap at zero is at least `tol`.
pub fn nonresonance_report(
    op: &TridiagOperator,
    base_level: f64,
    tol: f64,
    with_eigenvectors: bool,
) -> Result<SpectralReport> {
    check_positive("base_level", base_level)?;
    check_positive("tol", tol)?;
    let cutoff = 0.5 * base_level;
    let bisect_tol = (1e-13 * op.norm()).max(1e-14);
    let eigs = eigenvalues_below(op, cutoff, bisect_tol)?;
    let count_negative = crate::spectrum::count_negative(op);
    debug_assert_eq!(count_negative, eigs.iter().filter(|l| **l < 0.0).count());
    let kernel_gap = eigs.iter().fold(cutoff, |g, l| g.min(l.abs()));
    let resolved_eigenvectors = if with_eigenvectors {
        Some(
            eigs.iter()
                .map(|&l| eigenvector(op, l))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    Ok(SpectralReport {
        count_negative,
        eigenvalues_below_cutoff: eigs,
        kernel_gap,
        cutoff,
        tolerance: tol,
        certified: kernel_gap >= tol,
        resolved_eigenvectors,
    })
}

/// `-Δ_h - slope(x)`, i.e. `-Δ_h + ν̃ - well` for a slope profile.
pub fn limiting_operator(grid: &Grid, slope: &PotentialSpec) -> TridiagOperator {
    let v = Field::from_fn(*grid, |x| slope.potential(x));
    TridiagOperator::assemble_laplacian(grid)
        .plus_potential(&v)
        .expect("potential sampled on the same grid")
}

/// Linearization `A - diag(∂F/∂u(x, u))` of the elliptic residual at `u`.
pub fn linearization<N: Nonlinearity + ?Sized>(
    lap: &TridiagOperator,
    nl: &N,
    u: &Field,
) -> Result<TridiagOperator> {
    let v = u.map_nodes(|x, s| -nl.slope(x, s));
    lap.plus_potential(&v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn laplacian_closed_form(g: &Grid, j: usize) -> f64 {
        let h = g.spacing();
        4.0 / (h * h) * (j as f64 * PI * h / (4.0 * g.half_width())).sin().powi(2)
    }

    #[test]
    fn laplacian_ground_eigenvalue() {
        let g = Grid::line(2.0, 99).unwrap();
        let a = TridiagOperator::assemble_laplacian(&g);
        let l1 = laplacian_closed_form(&g, 1);
        let l2 = laplacian_closed_form(&g, 2);
        let tol = 1e-12;
        let eigs = eigenvalues_below(&a, 0.5 * (l1 + l2), tol).unwrap();
        assert_eq!(eigs.len(), 1);
        assert!((eigs[0] - l1).abs() <= tol);
        assert!(eigenvalues_below(&a, 0.5 * l1, tol).unwrap().is_empty());
        assert_eq!(count_negative(&a), 0);
    }

    #[test]
    fn shift_identity() {
        let g = Grid::line(3.0, 80).unwrap();
        let v = Field::from_fn(g, |x| -4.0 * (-x * x).exp());
        let op = TridiagOperator::assemble_laplacian(&g)
            .plus_potential(&v)
            .unwrap();
        let c = 0.75;
        let shifted = op.plus_potential(&Field::from_fn(g, |_| c)).unwrap();
        let tol = 1e-11;
        let a = eigenvalues_below(&op, 5.0, tol).unwrap();
        let b = eigenvalues_below(&shifted, 5.0 + c, tol).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert!((y - x - c).abs() <= 2.0 * tol);
        }
    }

    #[test]
    fn ground_state_vector() {
        let g = Grid::line(2.0, 199).unwrap();
        let a = TridiagOperator::assemble_laplacian(&g);
        let l1 = laplacian_closed_form(&g, 1);
        let v = eigenvector(&a, l1).unwrap();
        assert!((v.l2_norm() - 1.0).abs() < 1e-12);
        let exact = Field::from_fn(g, |x| (PI * (x + 2.0) / 4.0).sin());
        let cos = v.dot(&exact) / exact.l2_norm();
        assert!(cos >= 1.0 - 1e-8);
        let rq = a.quadratic_form(&v).unwrap();
        assert!((rq - l1).abs() <= 1e-8 * a.norm());
        let res = (&a.apply(&v).unwrap() - &v.scaled(l1)).l2_norm();
        assert!(res <= 1e-8 * a.norm());
    }

    #[test]
    fn radial_eigenvector_residual() {
        let g = Grid::new(10.0, 300, crate::grid::DimMode::Radial(3)).unwrap();
        let well = PotentialSpec::gaussian(1.0, 6.0, 1.0);
        let op = limiting_operator(&g, &well);
        let r = nonresonance_report(&op, 1.0, default_tolerance(&g), true).unwrap();
        for (l, v) in r
            .eigenvalues_below_cutoff
            .iter()
            .zip(r.resolved_eigenvectors.unwrap())
        {
            let res = (&op.apply(&v).unwrap() - &v.scaled(*l)).l2_norm();
            assert!(res <= 1e-8 * op.norm());
            assert!((v.l2_norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn free_operator_is_certified() {
        let g = Grid::line(20.0, 399).unwrap();
        let op = limiting_operator(&g, &PotentialSpec::constant(1.0));
        let r = nonresonance_report(&op, 1.0, default_tolerance(&g), false).unwrap();
        assert_eq!(r.count_negative, 0);
        assert!(r.kernel_gap >= 0.5);
        assert!(r.certified);
        assert!(r.eigenvalues_below_cutoff.is_empty());
    }

    fn ground_eigenvalue(g: &Grid, depth: f64) -> f64 {
        let op = limiting_operator(g, &PotentialSpec::gaussian(1.0, depth, 1.0));
        eigenvalues_below(&op, 0.5, 1e-13)
            .unwrap()
            .first()
            .copied()
            .unwrap_or(0.5)
    }

    #[test]
    fn tuned_well_is_uncertified() {
        let g = Grid::line(20.0, 399).unwrap();
        // secant search for the depth at which the ground eigenvalue crosses zero
        let (mut g0, mut g1) = (1.5, 3.0);
        let (mut f0, mut f1) = (ground_eigenvalue(&g, g0), ground_eigenvalue(&g, g1));
        for _ in 0..50 {
            if f1.abs() < 1e-9 {
                break;
            }
            let g2 = g1 - f1 * (g1 - g0) / (f1 - f0);
            g0 = g1;
            f0 = f1;
            g1 = g2;
            f1 = ground_eigenvalue(&g, g1);
        }
        assert!(f1.abs() < 1e-4);
        let op = limiting_operator(&g, &PotentialSpec::gaussian(1.0, g1, 1.0));
        let r = nonresonance_report(&op, 1.0, default_tolerance(&g), false).unwrap();
        assert!(!r.certified);
        assert!(r.kernel_gap < 1e-4);
    }

    #[test]
    fn count_monotone_in_depth() {
        let g = Grid::line(20.0, 399).unwrap();
        let counts: Vec<usize> = (0..=20)
            .map(|i| {
                let op = limiting_operator(&g, &PotentialSpec::gaussian(1.0, 0.5 * i as f64, 1.0));
                count_negative(&op)
            })
            .collect();
        assert!(counts.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(counts[0], 0);
        assert!(counts[20] >= 2);
    }

    #[test]
    fn length_matches_inertia() {
        let g = Grid::line(10.0, 150).unwrap();
        let op = limiting_operator(&g, &PotentialSpec::gaussian(1.0, 9.0, 2.0));
        for cutoff in [-5.0, -1.0, 0.0, 0.5, 3.0] {
            let eigs = eigenvalues_below(&op, cutoff, 1e-10).unwrap();
            assert_eq!(eigs.len(), op.inertia_below(cutoff).count);
            assert!(eigs.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}

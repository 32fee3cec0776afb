//! Symmetric tridiagonal operators `-Δ_h + V` with exact inertia counting.
//!
//! On a radial grid the finite-volume Laplacian `A = W⁻¹K` is only
//! self-adjoint for the weighted inner product; it is stored in the
//! symmetrized form `S = W^{-1/2} K W^{-1/2}`, which has the same spectrum.
//! [`TridiagOperator`] converts between the two representations, so callers
//! always see the physical operator `A` acting on [`Field`]s.

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

/// Pivots with magnitude below `BREAKDOWN_RELATIVE * ‖T‖` trigger a shift nudge
/// in [`SymTridiag::inertia_below`].
pub const BREAKDOWN_RELATIVE: f64 = f64::EPSILON;
/// Size of the downward shift nudge, relative to `‖T‖`.
pub const NUDGE_RELATIVE: f64 = 1.0 / (1u64 << 40) as f64;
/// Pivots with magnitude below `SOLVE_PIVOT_RELATIVE * ‖T - σI‖` make a
/// shifted solve fail.
pub const SOLVE_PIVOT_RELATIVE: f64 = 1e-13;

/// A dense-free symmetric tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    diag: Vec<f64>,
    offdiag: Vec<f64>,
}

/// Number of eigenvalues strictly below a shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inertia {
    pub count: usize,
    /// Set when a pivot broke down and the shift had to be nudged.
    pub singular: bool,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, offdiag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || offdiag.len() + 1 != diag.len() {
            return Err(Error::InvalidParameter {
                name: "offdiag",
                reason: format!(
                    "need {} off-diagonal entries for {} diagonal entries, got {}",
                    diag.len().saturating_sub(1),
                    diag.len(),
                    offdiag.len()
                ),
            });
        }
        if diag.iter().chain(&offdiag).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "diag",
                reason: "entries must be finite".into(),
            });
        }
        Ok(Self { diag, offdiag })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn offdiag(&self) -> &[f64] {
        &self.offdiag
    }

    /// Infinity norm, an upper bound for the spectral radius.
    pub fn norm(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|i| {
                let left = if i > 0 {
                    self.offdiag[i - 1].abs()
                } else {
                    0.0
                };
                let right = if i + 1 < n {
                    self.offdiag[i].abs()
                } else {
                    0.0
                };
                self.diag[i].abs() + left + right
            })
            .fold(0.0, f64::max)
    }

    /// Gershgorin enclosure `[lo, hi]` of the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let left = if i > 0 {
                self.offdiag[i - 1].abs()
            } else {
                0.0
            };
            let right = if i + 1 < n {
                self.offdiag[i].abs()
            } else {
                0.0
            };
            lo = lo.min(self.diag[i] - left - right);
            hi = hi.max(self.diag[i] + left + right);
        }
        (lo, hi)
    }

    pub fn negated(&self) -> Self {
        Self {
            diag: self.diag.iter().map(|v| -v).collect(),
            offdiag: self.offdiag.iter().map(|v| -v).collect(),
        }
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self {
            diag: self.diag.iter().map(|v| v + c).collect(),
            offdiag: self.offdiag.clone(),
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        assert_eq!(x.len(), n);
        (0..n)
            .map(|i| {
                let mut y = self.diag[i] * x[i];
                if i > 0 {
                    y += self.offdiag[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    y += self.offdiag[i] * x[i + 1];
                }
                y
            })
            .collect()
    }

    /// Sturm count via the `LDLᵀ` pivot recurrence; `None` on pivot breakdown.
    fn sturm_count(&self, sigma: f64, tol: f64) -> Option<usize> {
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..self.len() {
            q = if i == 0 {
                self.diag[0] - sigma
            } else {
                let e = self.offdiag[i - 1];
                self.diag[i] - sigma - e * e / q
            };
            if q.abs() < tol {
                return None;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        Some(count)
    }

    fn guarded_sturm_count(&self, sigma: f64, tol: f64) -> usize {
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..self.len() {
            q = if i == 0 {
                self.diag[0] - sigma
            } else {
                let e = self.offdiag[i - 1];
                self.diag[i] - sigma - e * e / q
            };
            if q.abs() < tol {
                q = -tol;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Number of eigenvalues strictly below `sigma` (Sylvester inertia of `T - σI`).
    ///
    /// When a pivot falls below `BREAKDOWN_RELATIVE * ‖T‖` the shift is nudged
    /// downwards by `NUDGE_RELATIVE * ‖T‖` (growing geometrically on repeated
    /// breakdown) and the count is redone; `singular` reports this.
    pub fn inertia_below(&self, sigma: f64) -> Inertia {
        let scale = self.norm().max(sigma.abs()).max(f64::MIN_POSITIVE);
        let tol = BREAKDOWN_RELATIVE * scale;
        if let Some(count) = self.sturm_count(sigma, tol) {
            return Inertia {
                count,
                singular: false,
            };
        }
        let mut nudge = NUDGE_RELATIVE * scale;
        for _ in 0..8 {
            if let Some(count) = self.sturm_count(sigma - nudge, tol) {
                return Inertia {
                    count,
                    singular: true,
                };
            }
            nudge *= 16.0;
        }
        Inertia {
            count: self.guarded_sturm_count(sigma, tol),
            singular: true,
        }
    }

    /// `LDLᵀ` factorization of `T - σI`.
    pub fn factor_shifted(&self, sigma: f64) -> Result<LdlFactor> {
        let scale = self.norm() + sigma.abs();
        let tol = SOLVE_PIVOT_RELATIVE * scale.max(f64::MIN_POSITIVE);
        let n = self.len();
        let mut pivots = Vec::with_capacity(n);
        let mut lower = Vec::with_capacity(n.saturating_sub(1));
        let mut d = self.diag[0] - sigma;
        for i in 0..n {
            if i > 0 {
                let e = self.offdiag[i - 1];
                let l = e / pivots[i - 1];
                lower.push(l);
                d = self.diag[i] - sigma - l * e;
            }
            if d.abs() < tol || !d.is_finite() {
                return Err(Error::SingularShift {
                    index: i,
                    magnitude: d.abs(),
                });
            }
            pivots.push(d);
        }
        Ok(LdlFactor { pivots, lower })
    }

    /// `LDLᵀ` factorization with tiny pivots replaced by `±tol`, for inverse
    /// iteration at (numerically) exact eigenvalues.
    pub(crate) fn factor_shifted_guarded(&self, sigma: f64) -> LdlFactor {
        let scale = (self.norm() + sigma.abs()).max(f64::MIN_POSITIVE);
        let tol = f64::EPSILON * scale;
        let n = self.len();
        let mut pivots: Vec<f64> = Vec::with_capacity(n);
        let mut lower = Vec::with_capacity(n.saturating_sub(1));
        for i in 0..n {
            let mut d = self.diag[i] - sigma;
            if i > 0 {
                let e = self.offdiag[i - 1];
                let l = e / pivots[i - 1];
                lower.push(l);
                d -= l * e;
            }
            if d.abs() < tol {
                d = if d < 0.0 { -tol } else { tol };
            }
            pivots.push(d);
        }
        LdlFactor { pivots, lower }
    }

    /// Solves `(T - σI) x = rhs`.
    pub fn solve_shifted(&self, sigma: f64, rhs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.factor_shifted(sigma)?.solve(rhs))
    }
}

/// Factorization `T - σI = L D Lᵀ` with unit lower bidiagonal `L`.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    pivots: Vec<f64>,
    lower: Vec<f64>,
}

impl LdlFactor {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.pivots.len();
        assert_eq!(rhs.len(), n);
        let mut x = rhs.to_vec();
        for i in 1..n {
            x[i] -= self.lower[i - 1] * x[i - 1];
        }
        for (xi, d) in x.iter_mut().zip(&self.pivots) {
            *xi /= d;
        }
        for i in (0..n.saturating_sub(1)).rev() {
            x[i] -= self.lower[i] * x[i + 1];
        }
        x
    }

    /// Number of negative pivots, i.e. eigenvalues of `T` below `σ`.
    pub fn negative_pivots(&self) -> usize {
        self.pivots.iter().filter(|d| **d < 0.0).count()
    }
}

/// The physical operator `A = W^{-1/2} S W^{1/2}` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagOperator {
    grid: Grid,
    matrix: SymTridiag,
    sqrt_weight: Vec<f64>,
}

impl TridiagOperator {
    /// Three-point Dirichlet Laplacian; on the line `diag = 2/h²`, `offdiag = -1/h²`.
    pub fn assemble_laplacian(grid: &Grid) -> Self {
        let n = grid.len();
        let h2 = grid.spacing() * grid.spacing();
        let w: Vec<f64> = (0..n).map(|i| grid.cell_weight(i)).collect();
        let diag = (0..n)
            .map(|i| (grid.face_weight(i) + grid.face_weight(i + 1)) / (h2 * w[i]))
            .collect();
        let offdiag = (0..n - 1)
            .map(|i| -grid.face_weight(i + 1) / (h2 * (w[i] * w[i + 1]).sqrt()))
            .collect();
        Self {
            grid: *grid,
            matrix: SymTridiag { diag, offdiag },
            sqrt_weight: w.iter().map(|v| v.sqrt()).collect(),
        }
    }

    /// `-Δ_h + V`.
    pub fn assemble_schrodinger(grid: &Grid, potential: &Field) -> Result<Self> {
        if potential.grid() != grid {
            return Err(Error::GridMismatch);
        }
        Self::assemble_laplacian(grid).plus_potential(potential)
    }

    /// Adds a multiplication operator to the diagonal.
    pub fn plus_potential(&self, potential: &Field) -> Result<Self> {
        if potential.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let diag = self
            .matrix
            .diag
            .iter()
            .zip(potential.values())
            .map(|(d, v)| d + v)
            .collect();
        Ok(Self {
            grid: self.grid,
            matrix: SymTridiag {
                diag,
                offdiag: self.matrix.offdiag.clone(),
            },
            sqrt_weight: self.sqrt_weight.clone(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// The symmetrized matrix `S`.
    pub fn matrix(&self) -> &SymTridiag {
        &self.matrix
    }

    pub fn norm(&self) -> f64 {
        self.matrix.norm()
    }

    pub fn inertia_below(&self, sigma: f64) -> Inertia {
        self.matrix.inertia_below(sigma)
    }

    pub(crate) fn to_symmetric(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.sqrt_weight)
            .map(|(a, w)| a * w)
            .collect()
    }

    pub(crate) fn to_field(&self, v: Vec<f64>) -> Field {
        let values = v
            .into_iter()
            .zip(&self.sqrt_weight)
            .map(|(a, w)| a / w)
            .collect();
        Field::from_vec(self.grid, values)
    }

    pub fn apply(&self, u: &Field) -> Result<Field> {
        if u.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let y = self.matrix.matvec(&self.to_symmetric(u.values()));
        Ok(self.to_field(y))
    }

    /// `⟨Au, u⟩` in the weighted inner product.
    pub fn quadratic_form(&self, u: &Field) -> Result<f64> {
        Ok(self.apply(u)?.dot(u))
    }

    /// Solves `(A - σI) u = rhs`.
    pub fn solve_shifted(&self, sigma: f64, rhs: &Field) -> Result<Field> {
        self.factor_shifted(sigma)?.solve(rhs)
    }

    pub fn factor_shifted(&self, sigma: f64) -> Result<ShiftedSolver<'_>> {
        Ok(ShiftedSolver {
            op: self,
            factor: self.matrix.factor_shifted(sigma)?,
        })
    }
}

/// A reusable factorization of `A - σI`.
#[derive(Debug, Clone)]
pub struct ShiftedSolver<'a> {
    op: &'a TridiagOperator,
    factor: LdlFactor,
}

impl ShiftedSolver<'_> {
    pub fn solve(&self, rhs: &Field) -> Result<Field> {
        if rhs.grid() != &self.op.grid {
            return Err(Error::GridMismatch);
        }
        let x = self.factor.solve(&self.op.to_symmetric(rhs.values()));
        Ok(self.op.to_field(x))
    }

    pub fn negative_pivots(&self) -> usize {
        self.factor.negative_pivots()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DimMode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn laplacian_stencil() {
        let g = Grid::line(1.0, 3).unwrap();
        let a = TridiagOperator::assemble_laplacian(&g);
        assert_eq!(a.matrix().diag(), &[8.0, 8.0, 8.0]);
        assert_eq!(a.matrix().offdiag(), &[-4.0, -4.0]);
    }

    #[test]
    fn sturm_small_cases() {
        let t = SymTridiag::new(vec![-1.0, 1.0, 2.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(t.inertia_below(0.0).count, 1);
        let t = SymTridiag::new(vec![2.0, 2.0], vec![-1.0]).unwrap();
        let inertia = t.inertia_below(2.0);
        assert_eq!(inertia.count, 1);
        assert!(inertia.singular);
        assert_eq!(t.inertia_below(1.0).count, 0);
        assert_eq!(t.inertia_below(3.0).count, 1);
        assert_eq!(t.inertia_below(3.5).count, 2);
    }

    #[test]
    fn shape_validation() {
        assert!(SymTridiag::new(vec![1.0, 2.0], vec![]).is_err());
        assert!(SymTridiag::new(vec![], vec![]).is_err());
        assert!(SymTridiag::new(vec![1.0, f64::NAN], vec![0.0]).is_err());
    }

    fn random_tridiag(rng: &mut ChaCha8Rng, n: usize) -> SymTridiag {
        let d = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let e = (0..n - 1).map(|_| rng.random_range(-2.0..2.0)).collect();
        SymTridiag::new(d, e).unwrap()
    }

    #[test]
    fn inertia_monotone_and_complementary() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.random_range(1..40);
            let t = random_tridiag(&mut rng, n);
            let neg = t.negated();
            let mut sigmas: Vec<f64> = (0..30).map(|_| rng.random_range(-8.0..8.0)).collect();
            sigmas.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let counts: Vec<usize> = sigmas.iter().map(|&s| t.inertia_below(s).count).collect();
            assert!(counts.windows(2).all(|w| w[0] <= w[1]));
            for &s in &sigmas {
                assert_eq!(t.inertia_below(s).count + neg.inertia_below(-s).count, n);
            }
        }
    }

    #[test]
    fn identity_solve() {
        let g = Grid::line(1.0, 5).unwrap();
        let a = TridiagOperator::assemble_laplacian(&g);
        let id = SymTridiag::new(vec![1.0; 5], vec![0.0; 4]).unwrap();
        let r = [1.0, -2.0, 3.0, 0.5, 7.0];
        assert_eq!(id.solve_shifted(0.0, &r).unwrap(), r.to_vec());
        // 2×2 at its eigenvalue 1
        let t = SymTridiag::new(vec![2.0, 2.0], vec![-1.0]).unwrap();
        assert!(matches!(
            t.solve_shifted(1.0, &[1.0, 1.0]),
            Err(Error::SingularShift { index: 1, .. })
        ));
        assert!(a.solve_shifted(0.0, &Field::zeros(g)).is_ok());
    }

    #[test]
    fn random_solve_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200;
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(4.0..6.0)).collect();
        let e: Vec<f64> = (0..n - 1).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t = SymTridiag::new(d, e).unwrap();
        let sigma = 0.7;
        let rhs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = t.solve_shifted(sigma, &rhs).unwrap();
        let tx = t.matvec(&x);
        let res = tx
            .iter()
            .zip(&x)
            .zip(&rhs)
            .map(|((a, xi), b)| (a - sigma * xi - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let bn = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(res <= 1e-10 * ((t.norm() + sigma) * xn + bn));
    }

    #[test]
    fn schrodinger_shift_and_grid_checks() {
        let g = Grid::line(5.0, 49).unwrap();
        let lap = TridiagOperator::assemble_laplacian(&g);
        let zero = TridiagOperator::assemble_schrodinger(&g, &Field::zeros(g)).unwrap();
        assert_eq!(lap, zero);

        let v = Field::from_fn(g, |x| 1.0 - 5.0 * (-x * x).exp());
        let s = TridiagOperator::assemble_schrodinger(&g, &v).unwrap();
        let h2 = g.spacing() * g.spacing();
        for i in [0, 24, 37] {
            let x = g.node(i);
            let expect = 2.0 / h2 + 1.0 - 5.0 * (-x * x).exp();
            assert!((s.matrix().diag()[i] - expect).abs() < 1e-12);
        }
        assert_eq!(s.matrix().offdiag(), lap.matrix().offdiag());

        let other = Grid::line(4.0, 49).unwrap();
        assert_eq!(
            TridiagOperator::assemble_schrodinger(&other, &v),
            Err(Error::GridMismatch)
        );
        assert_eq!(lap.apply(&Field::zeros(other)), Err(Error::GridMismatch));
    }

    fn check_operator_structure(g: Grid) {
        let a = TridiagOperator::assemble_laplacian(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(a.apply(&Field::zeros(g)).unwrap(), Field::zeros(g));
        for _ in 0..200 {
            let u = Field::new(
                g,
                (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let v = Field::new(
                g,
                (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let form = a.quadratic_form(&u).unwrap();
            assert!(form >= 0.0);
            // summation by parts
            assert!((form - u.gradient_sq()).abs() <= 1e-12 * form.max(1.0));
            let uv = a.apply(&u).unwrap().dot(&v);
            let vu = a.apply(&v).unwrap().dot(&u);
            assert!((uv - vu).abs() <= 1e-12 * (uv.abs() + 1.0));
            // round trip through the solver
            let back = a.solve_shifted(0.0, &a.apply(&u).unwrap()).unwrap();
            assert!(back.distance_l2(&u) <= 1e-9 * u.l2_norm().max(1.0));
        }
    }

    #[test]
    fn line_operator_structure() {
        check_operator_structure(Grid::line(3.0, 60).unwrap());
    }

    #[test]
    fn radial_operator_structure() {
        check_operator_structure(Grid::new(3.0, 60, DimMode::Radial(3)).unwrap());
        check_operator_structure(Grid::new(3.0, 60, DimMode::Radial(2)).unwrap());
    }
}

//! Truncated spatial meshes and grid functions with discrete `L²`/`H¹` norms.
//!
//! A [`Grid`] covers `[-L, L]` (line mode) or the radial interval `[0, L]`
//! (radial mode, dimension 2 or 3) with homogeneous Dirichlet data at the
//! truncation boundary. Inner products carry a per-node cell weight `W_i`
//! (identically one on the line, the shell volume `ω_d r^{d-1}` on a radial
//! grid) and the `H¹` seminorm uses forward differences across every face,
//! zero-padded at the boundary, so that summation by parts against the
//! discrete Laplacian in [`crate::operator`] is exact.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, Error, Result};

/// Geometry of the truncated domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimMode {
    /// The real line, truncated to `[-L, L]`.
    Line,
    /// Radially symmetric functions on `ℝ^d`, `d ∈ {2, 3}`, truncated to `|x| ≤ L`.
    Radial(u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    half_width: f64,
    n_interior: usize,
    spacing: f64,
    mode: DimMode,
}

impl Grid {
    pub fn new(half_width: f64, n_interior: usize, mode: DimMode) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "half width must be positive, got {half_width}"
            )));
        }
        if n_interior < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 interior nodes, got {n_interior}"
            )));
        }
        let spacing = match mode {
            DimMode::Line => 2.0 * half_width / (n_interior as f64 + 1.0),
            DimMode::Radial(d) => {
                if !(2..=3).contains(&d) {
                    return Err(Error::InvalidGrid(format!(
                        "radial dimension must be 2 or 3, got {d}"
                    )));
                }
                half_width / (n_interior as f64 + 1.0)
            }
        };
        Ok(Self {
            half_width,
            n_interior,
            spacing,
            mode,
        })
    }

    pub fn line(half_width: f64, n_interior: usize) -> Result<Self> {
        Self::new(half_width, n_interior, DimMode::Line)
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn len(&self) -> usize {
        self.n_interior
    }

    pub fn is_empty(&self) -> bool {
        self.n_interior == 0
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn mode(&self) -> DimMode {
        self.mode
    }

    /// Coordinate of interior node `i` (0-based): `-L + (i+1)h` on the line,
    /// the radius `(i+1)h` in radial mode.
    pub fn node(&self, i: usize) -> f64 {
        match self.mode {
            DimMode::Line => -self.half_width + (i as f64 + 1.0) * self.spacing,
            DimMode::Radial(_) => (i as f64 + 1.0) * self.spacing,
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_interior).map(|i| self.node(i))
    }

    /// `|x_i|`, the argument of every radially defined profile.
    pub fn radius(&self, i: usize) -> f64 {
        self.node(i).abs()
    }

    /// Cell weight `W_i` of node `i` in the discrete inner product `h Σ W_i u_i v_i`.
    ///
    /// Radial cells are the shells `[(i+½)h, (i+3/2)h]`, except the first,
    /// which reaches down to the origin.
    pub fn cell_weight(&self, i: usize) -> f64 {
        match self.mode {
            DimMode::Line => 1.0,
            DimMode::Radial(d) => {
                let h = self.spacing;
                let outer = (i as f64 + 1.5) * h;
                let inner = if i == 0 { 0.0 } else { (i as f64 + 0.5) * h };
                let d = d as i32;
                sphere_area(d) * (outer.powi(d) - inner.powi(d)) / (d as f64 * h)
            }
        }
    }

    /// Conductance of face `j ∈ 0..=n`, which separates node `j-1` from node `j`
    /// (node `-1` and node `n` being the boundary). The radial face at the
    /// origin carries no flux.
    pub fn face_weight(&self, j: usize) -> f64 {
        match self.mode {
            DimMode::Line => 1.0,
            DimMode::Radial(d) => {
                if j == 0 {
                    0.0
                } else {
                    let r = (j as f64 + 0.5) * self.spacing;
                    sphere_area(d as i32) * r.powi(d as i32 - 1)
                }
            }
        }
    }

    pub fn min_cell_weight(&self) -> f64 {
        (0..self.n_interior)
            .map(|i| self.cell_weight(i))
            .fold(f64::INFINITY, f64::min)
    }

    /// Bound `S` with `max_i |u_i| <= S ‖u‖_{H¹}` for every grid function.
    ///
    /// On the line `u_i² <= ‖u‖_{L²} |u|_{H¹} <= ½‖u‖²_{H¹}`; on radial grids
    /// only the trivial `h W_i u_i² <= ‖u‖²_{L²}` is available.
    pub fn sup_norm_constant(&self) -> f64 {
        match self.mode {
            DimMode::Line => std::f64::consts::FRAC_1_SQRT_2,
            DimMode::Radial(_) => 1.0 / (self.spacing * self.min_cell_weight()).sqrt(),
        }
    }
}

fn sphere_area(d: i32) -> f64 {
    match d {
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => 1.0,
    }
}

/// Discrete `L²` and `H¹` norms of a grid function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l2: f64,
    pub h1: f64,
}

/// A real grid function on the interior nodes of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    /// Skips the finiteness scan; callers guarantee the length.
    pub(crate) fn from_vec(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::from_vec(grid, vec![0.0; grid.len()])
    }

    /// Samples `f` at the node coordinates.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        Self::from_vec(grid, grid.nodes().map(f).collect())
    }

    /// A smooth random field: a sum of `bumps` gaussians with amplitudes in
    /// `[-amplitude, amplitude]`, centres in the inner half of the domain and
    /// widths between `L/20` and `3L/20`.
    pub fn random_smooth<R: Rng + ?Sized>(
        grid: Grid,
        rng: &mut R,
        amplitude: f64,
        bumps: usize,
    ) -> Self {
        let l = grid.half_width();
        let params: Vec<(f64, f64, f64)> = (0..bumps)
            .map(|_| {
                let a = amplitude * (2.0 * rng.random::<f64>() - 1.0);
                let c = match grid.mode() {
                    DimMode::Line => l * (rng.random::<f64>() - 0.5),
                    DimMode::Radial(_) => 0.5 * l * rng.random::<f64>(),
                };
                let w = l * (0.05 + 0.1 * rng.random::<f64>());
                (a, c, w)
            })
            .collect();
        Self::from_fn(grid, |x| {
            params
                .iter()
                .map(|&(a, c, w)| a * (-((x - c) / w).powi(2)).exp())
                .sum()
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_grid(&self, other: &Field) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Weighted inner product `h Σ W_i u_i v_i`.
    pub fn dot(&self, other: &Field) -> f64 {
        assert_eq!(self.grid, other.grid, "inner product across grids");
        let h = self.grid.spacing();
        self.values
            .iter()
            .zip(&other.values)
            .enumerate()
            .map(|(i, (a, b))| self.grid.cell_weight(i) * a * b)
            .sum::<f64>()
            * h
    }

    /// `h Σ_faces c_j ((u_j - u_{j-1}) / h)²` with zero padding at the boundary.
    pub fn gradient_sq(&self) -> f64 {
        let g = &self.grid;
        let h = g.spacing();
        let n = self.values.len();
        let mut acc = 0.0;
        for j in 0..=n {
            let right = if j < n { self.values[j] } else { 0.0 };
            let left = if j > 0 { self.values[j - 1] } else { 0.0 };
            let d = (right - left) / h;
            acc += g.face_weight(j) * d * d;
        }
        acc * h
    }

    pub fn l2_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn h1_norm(&self) -> f64 {
        (self.dot(self) + self.gradient_sq()).sqrt()
    }

    pub fn norms(&self) -> Norms {
        let l2_sq = self.dot(self);
        Norms {
            l2: l2_sq.sqrt(),
            h1: (l2_sq + self.gradient_sq()).sqrt(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> Field {
        Field::from_vec(self.grid, self.values.iter().map(|v| c * v).collect())
    }

    /// Pointwise map `u_i ↦ f(x_i, u_i)`.
    pub fn map_nodes(&self, f: impl Fn(f64, f64) -> f64) -> Field {
        Field::from_vec(
            self.grid,
            self.values
                .iter()
                .enumerate()
                .map(|(i, &u)| f(self.grid.node(i), u))
                .collect(),
        )
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &Field) -> Field {
        assert_eq!(self.grid, other.grid, "axpy across grids");
        Field::from_vec(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + c * b)
                .collect(),
        )
    }

    pub fn distance_h1(&self, other: &Field) -> f64 {
        (self - other).h1_norm()
    }

    pub fn distance_l2(&self, other: &Field) -> f64 {
        (self - other).l2_norm()
    }
}

impl Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        self.axpy(1.0, rhs)
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        self.axpy(-1.0, rhs)
    }
}

impl Mul<&Field> for f64 {
    type Output = Field;
    fn mul(self, rhs: &Field) -> Field {
        rhs.scaled(self)
    }
}

/// `sup_s |θ'(s)|` of the fixed ramp, attained at `s = 3/2`.
pub const RAMP_SLOPE_BOUND: f64 = 2.0;

fn flat_exp(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// The smooth ramp `θ(s) = ρ(s-1) / (ρ(s-1) + ρ(2-s))`, `ρ(t) = e^{-1/t}` for
/// `t > 0`: zero on `s <= 1`, one on `s >= 2`.
pub fn ramp(s: f64) -> f64 {
    if s <= 1.0 {
        0.0
    } else if s >= 2.0 {
        1.0
    } else {
        let a = flat_exp(s - 1.0);
        let b = flat_exp(2.0 - s);
        a / (a + b)
    }
}

/// `θ_k(x) = θ(|x|²/k²)` sampled at the nodes.
pub fn cutoff_weights(grid: &Grid, k: f64) -> Result<Field> {
    check_positive("k", k)?;
    Ok(Field::from_vec(
        *grid,
        (0..grid.len())
            .map(|i| {
                let r = grid.radius(i);
                ramp(r * r / (k * k))
            })
            .collect(),
    ))
}

/// Weighted tail mass `h Σ W_i θ_k(x_i) u_i²`.
pub fn tail_mass(u: &Field, k: f64) -> Result<f64> {
    let theta = cutoff_weights(u.grid(), k)?;
    Ok(weighted_tail(u, &theta))
}

/// Tail mass against precomputed cutoff weights.
pub(crate) fn weighted_tail(u: &Field, theta: &Field) -> f64 {
    let g = u.grid();
    let h = g.spacing();
    u.values()
        .iter()
        .zip(theta.values())
        .enumerate()
        .map(|(i, (v, t))| g.cell_weight(i) * t * v * v)
        .sum::<f64>()
        * h
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn spacing_and_nodes() {
        let g = Grid::line(10.0, 199).unwrap();
        assert!((g.spacing() - 0.1).abs() < 1e-15);
        let g = Grid::line(1.0, 3).unwrap();
        let xs: Vec<f64> = g.nodes().collect();
        assert_eq!(xs, vec![-0.5, 0.0, 0.5]);
        let r = Grid::new(1.0, 3, DimMode::Radial(3)).unwrap();
        assert!((r.spacing() - 0.25).abs() < 1e-15);
        assert_eq!(r.node(0), 0.25);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::line(0.0, 10).is_err());
        assert!(Grid::line(-1.0, 10).is_err());
        assert!(Grid::line(1.0, 2).is_err());
        assert!(Grid::new(1.0, 10, DimMode::Radial(4)).is_err());
    }

    #[test]
    fn field_validation() {
        let g = Grid::line(1.0, 3).unwrap();
        assert!(matches!(
            Field::new(g, vec![1.0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert_eq!(
            Field::new(g, vec![0.0, f64::NAN, 0.0]),
            Err(Error::NonFinite(1))
        );
    }

    #[test]
    fn zero_field_norms() {
        let g = Grid::line(3.0, 50).unwrap();
        let n = Field::zeros(g).norms();
        assert_eq!((n.l2, n.h1), (0.0, 0.0));
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        let m = panels + panels % 2;
        let h = (b - a) / m as f64;
        let mut s = f(a) + f(b);
        for i in 1..m {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn norms_of_sampled_ground_mode_match_quadrature() {
        let l = PI / 2.0;
        let mode = |x: f64| (PI * (x + l) / (2.0 * l)).sin();
        let dmode = |x: f64| PI / (2.0 * l) * (PI * (x + l) / (2.0 * l)).cos();
        let l2_ref = simpson(|x| mode(x).powi(2), -l, l, 100_000).sqrt();
        let h1_ref = (l2_ref.powi(2) + simpson(|x| dmode(x).powi(2), -l, l, 100_000)).sqrt();
        assert!((l2_ref - (PI / 2.0).sqrt()).abs() < 1e-10);

        let g = Grid::line(l, 4000).unwrap();
        let n = Field::from_fn(g, mode).norms();
        assert!((n.l2 - l2_ref).abs() < 1e-6, "{} vs {}", n.l2, l2_ref);
        assert!((n.h1 - h1_ref).abs() < 1e-6, "{} vs {}", n.h1, h1_ref);
    }

    #[test]
    fn radial_norms_match_volume_integrals() {
        // u = 1 - r² on the unit ball of ℝ³: ‖u‖² = 4π ∫ (1-r²)² r² dr = 32π/105.
        let g = Grid::new(1.0, 2000, DimMode::Radial(3)).unwrap();
        let u = Field::from_fn(g, |r| 1.0 - r * r);
        let l2_sq = 32.0 * PI / 105.0;
        // ∫ |∇u|² = 4π ∫ 4r² r² dr = 16π/5.
        let grad_sq = 16.0 * PI / 5.0;
        assert!((u.dot(&u) - l2_sq).abs() < 1e-3);
        assert!((u.gradient_sq() - grad_sq).abs() < 1e-2);
    }

    #[test]
    fn ramp_midpoint_and_slope_bound() {
        assert_eq!(ramp(1.5), 0.5);
        assert_eq!(ramp(1.0), 0.0);
        assert_eq!(ramp(2.0), 1.0);
        // central differences over a fine lattice never exceed the pinned bound
        let step = 1e-6;
        let sup = (1..20_000)
            .map(|i| 1.0 + i as f64 / 20_000.0)
            .map(|s| (ramp(s + step) - ramp(s - step)) / (2.0 * step))
            .fold(0.0f64, |m, d| m.max(d.abs()));
        assert!(sup <= RAMP_SLOPE_BOUND + 1e-6);
        assert!(sup >= RAMP_SLOPE_BOUND - 1e-6);
    }

    #[test]
    fn cutoff_support_and_monotonicity() {
        let g = Grid::line(10.0, 199).unwrap();
        let theta = cutoff_weights(&g, 10.0).unwrap();
        assert!(theta.values().iter().all(|&t| t == 0.0));

        let k = 3.0;
        let theta = cutoff_weights(&g, k).unwrap();
        let mut pairs: Vec<(f64, f64)> = (0..g.len())
            .map(|i| (g.radius(i), theta.values()[i]))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in pairs.windows(2) {
            assert!(w[1].1 >= w[0].1);
        }
        for (r, t) in pairs {
            assert!((0.0..=1.0).contains(&t));
            if r <= k {
                assert_eq!(t, 0.0);
            }
            if r >= 2f64.sqrt() * k {
                assert_eq!(t, 1.0);
            }
        }
        assert!(cutoff_weights(&g, 0.0).is_err());
    }

    #[test]
    fn tail_mass_cases() {
        let g = Grid::line(10.0, 199).unwrap();
        let bump = Field::from_fn(g, |x| {
            if x.abs() < 2.0 {
                1.0 - x * x / 4.0
            } else {
                0.0
            }
        });
        assert_eq!(tail_mass(&bump, 2.0).unwrap(), 0.0);

        // tiny k: θ_k saturates to one everywhere except the node at the origin
        let u = Field::from_fn(g, |x| (0.3 * x).sin() + 0.1);
        let full: f64 = (0..g.len())
            .filter(|&i| g.node(i).abs() > 1e-12)
            .map(|i| u.values()[i].powi(2))
            .sum::<f64>()
            * g.spacing();
        assert!((tail_mass(&u, 1e-3).unwrap() - full).abs() < 1e-12);

        // u ≡ 1, k = 5: direct summation of the ramp
        let ones = Field::from_fn(g, |_| 1.0);
        let direct: f64 = g
            .nodes()
            .map(|x| {
                let s = x * x / 25.0;
                if s <= 1.0 {
                    0.0
                } else if s >= 2.0 {
                    1.0
                } else {
                    let a = (-1.0 / (s - 1.0)).exp();
                    let b = (-1.0 / (2.0 - s)).exp();
                    a / (a + b)
                }
            })
            .sum::<f64>()
            * 0.1;
        assert!((tail_mass(&ones, 5.0).unwrap() - direct).abs() < 1e-12);
    }

    fn field_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (
            prop::collection::vec(-5.0f64..5.0, 40),
            prop::collection::vec(-5.0f64..5.0, 40),
        )
    }

    proptest! {
        #[test]
        fn norm_properties((a, b) in field_strategy(), c in -3.0f64..3.0, k1 in 0.1f64..8.0, dk in 0.0f64..5.0) {
            let g = Grid::line(6.0, 40).unwrap();
            let u = Field::new(g, a).unwrap();
            let v = Field::new(g, b).unwrap();
            let n = u.norms();
            prop_assert!(n.h1 >= n.l2 && n.l2 >= 0.0);

            let sc = u.scaled(c).norms();
            prop_assert!((sc.l2 - c.abs() * n.l2).abs() <= 1e-12 * (1.0 + n.l2));
            prop_assert!((sc.h1 - c.abs() * n.h1).abs() <= 1e-12 * (1.0 + n.h1));

            let lhs = (&u + &v).dot(&(&u + &v)) + (&u - &v).dot(&(&u - &v));
            let rhs = 2.0 * u.dot(&u) + 2.0 * v.dot(&v);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs));

            let t1 = tail_mass(&u, k1).unwrap();
            let t2 = tail_mass(&u, k1 + dk).unwrap();
            prop_assert!(t2 <= t1 + 1e-15);
            prop_assert!(t1 <= u.dot(&u) + 1e-12);
        }
    }
}

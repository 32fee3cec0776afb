//! Nonlinearities `F(x, u)` and sampling-based hypothesis checkers.
//!
//! The concrete family is the *switch model*
//!
//! ```text
//! F(x, u) = γ(x) u (1 - ψ(u/s₀)) + α(x) u ψ(u/s₀),   ψ(v) = v² / (1 + v²)
//! ```
//!
//! which has slope `γ(x)` at `u = 0`, asymptotic slope `α(x)` as `|u| → ∞`,
//! globally bounded `∂F/∂u`, and a closed-form primitive. Writing `δ = α - γ`:
//!
//! ```text
//! F  = γu + δ u³ / (s₀² + u²)
//! F' = γ + δ (u⁴ + 3s₀²u²) / (s₀² + u²)²
//! P  = ½γu² + ½δ (u² - s₀² ln(1 + u²/s₀²))
//! ```
//!
//! The factor multiplying `δ` in `F'` ranges over `[0, 9/8]`, so
//! `|F'| <= max(|γ|, |α| + |δ|/8)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, Error, Result};

/// A radially symmetric bounded profile with essentially compact support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Bump {
    Zero,
    /// `amplitude * exp(-|x|²/width²)`
    Gaussian {
        amplitude: f64,
        width: f64,
    },
    /// `height` on `|x| < radius`, zero outside.
    Square {
        height: f64,
        radius: f64,
    },
}

impl Bump {
    pub fn at(&self, r: f64) -> f64 {
        match *self {
            Bump::Zero => 0.0,
            Bump::Gaussian { amplitude, width } => amplitude * (-(r / width).powi(2)).exp(),
            Bump::Square { height, radius } => {
                if r.abs() < radius {
                    height
                } else {
                    0.0
                }
            }
        }
    }

    pub fn sup_abs(&self) -> f64 {
        match *self {
            Bump::Zero => 0.0,
            Bump::Gaussian { amplitude, .. } => amplitude.abs(),
            Bump::Square { height, .. } => height.abs(),
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        match *self {
            Bump::Zero => true,
            Bump::Gaussian { amplitude, .. } => amplitude >= 0.0,
            Bump::Square { height, .. } => height >= 0.0,
        }
    }

    pub(crate) fn validate(&self, name: &'static str) -> Result<()> {
        match *self {
            Bump::Zero => Ok(()),
            Bump::Gaussian { amplitude, width } => {
                finite(name, amplitude)?;
                check_positive(name, width)
            }
            Bump::Square { height, radius } => {
                finite(name, height)?;
                check_positive(name, radius)
            }
        }
    }
}

fn finite(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be finite, got {v}"),
        })
    }
}

/// A slope profile `-ν̃ + well(x)`.
///
/// The associated Schrödinger operator is `-Δ + ν̃ - well`, whose spectrum
/// below `ν̃/2` consists of finitely many isolated eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub base_level: f64,
    #[serde(default = "zero_bump")]
    pub well: Bump,
}

impl PotentialSpec {
    pub fn constant(base_level: f64) -> Self {
        Self {
            base_level,
            well: Bump::Zero,
        }
    }

    pub fn gaussian(base_level: f64, amplitude: f64, width: f64) -> Self {
        Self {
            base_level,
            well: Bump::Gaussian { amplitude, width },
        }
    }

    /// The slope `-ν̃ + well(|x|)`.
    pub fn slope(&self, x: f64) -> f64 {
        -self.base_level + self.well.at(x.abs())
    }

    /// The Schrödinger potential `ν̃ - well(|x|) = -slope(x)`.
    pub fn potential(&self, x: f64) -> f64 {
        -self.slope(x)
    }

    pub fn sup_abs(&self) -> f64 {
        self.base_level.abs() + self.well.sup_abs()
    }

    pub(crate) fn validate(&self, name: &'static str) -> Result<()> {
        check_positive(name, self.base_level)?;
        self.well.validate(name)
    }
}

/// Data of the dissipativity condition `F(x,u)u <= -ν|u|² + b(x)|u|^q + c(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dissipativity {
    pub nu: f64,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default = "zero_bump")]
    pub b: Bump,
    #[serde(default = "zero_bump")]
    pub c: Bump,
}

fn default_q() -> f64 {
    2.0
}

fn zero_bump() -> Bump {
    Bump::Zero
}

impl Dissipativity {
    pub fn new(nu: f64) -> Self {
        Self {
            nu,
            q: 2.0,
            b: Bump::Zero,
            c: Bump::Zero,
        }
    }

    /// Right-hand side `-ν u² + b(x)|u|^q + c(x)`.
    pub fn bound(&self, x: f64, u: f64) -> f64 {
        let r = x.abs();
        -self.nu * u * u + self.b.at(r) * u.abs().powf(self.q) + self.c.at(r)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        check_positive("nu", self.nu)?;
        if !(self.q >= 2.0 && self.q.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "q",
                reason: format!("must satisfy q >= 2, got {}", self.q),
            });
        }
        self.b.validate("b")?;
        self.c.validate("c")?;
        for (name, p) in [("b", self.b), ("c", self.c)] {
            if !p.is_nonnegative() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "must be nonnegative".into(),
                });
            }
        }
        Ok(())
    }
}

/// Pointwise nonlinearity of the semiflow.
pub trait Nonlinearity: Sync {
    fn value(&self, x: f64, u: f64) -> f64;
    /// `∂F/∂u`.
    fn slope(&self, x: f64, u: f64) -> f64;
    /// `P(x, u) = ∫₀^u F(x, s) ds`.
    fn primitive(&self, x: f64, u: f64) -> f64;
    /// A certified bound on `sup |∂F/∂u|`.
    fn slope_bound(&self) -> f64;
}

impl<N: Nonlinearity + ?Sized> Nonlinearity for &N {
    fn value(&self, x: f64, u: f64) -> f64 {
        (**self).value(x, u)
    }
    fn slope(&self, x: f64, u: f64) -> f64 {
        (**self).slope(x, u)
    }
    fn primitive(&self, x: f64, u: f64) -> f64 {
        (**self).primitive(x, u)
    }
    fn slope_bound(&self) -> f64 {
        (**self).slope_bound()
    }
}

/// The switch model together with its dissipativity data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearityModel {
    /// Slope at infinity.
    pub alpha: PotentialSpec,
    /// Slope at zero.
    pub gamma: PotentialSpec,
    pub switch_scale: f64,
    pub dissipation: Dissipativity,
}

impl NonlinearityModel {
    /// Builds the switch model; `dissipation` defaults to `ν = min(ν̃_α, ν̃_γ)`
    /// with `b ≡ c ≡ 0`, which is valid whenever neither well is present.
    pub fn switch(alpha: PotentialSpec, gamma: PotentialSpec, switch_scale: f64) -> Result<Self> {
        let nu = alpha.base_level.min(gamma.base_level);
        Self::with_dissipation(alpha, gamma, switch_scale, Dissipativity::new(nu))
    }

    pub fn with_dissipation(
        alpha: PotentialSpec,
        gamma: PotentialSpec,
        switch_scale: f64,
        dissipation: Dissipativity,
    ) -> Result<Self> {
        let model = Self {
            alpha,
            gamma,
            switch_scale,
            dissipation,
        };
        model.validate()?;
        Ok(model)
    }

    /// The linear model `F(x,u) = -c u`.
    pub fn linear_decay(c: f64) -> Result<Self> {
        let p = PotentialSpec::constant(c);
        Self::switch(p, p, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("switch_scale", self.switch_scale)?;
        self.alpha.validate("alpha")?;
        self.gamma.validate("gamma")?;
        self.dissipation.validate()
    }

    pub fn alpha_at(&self, x: f64) -> f64 {
        self.alpha.slope(x)
    }

    pub fn gamma_at(&self, x: f64) -> f64 {
        self.gamma.slope(x)
    }

    /// `ψ(u/s₀)`.
    pub fn switch_weight(&self, u: f64) -> f64 {
        let v = u / self.switch_scale;
        v * v / (1.0 + v * v)
    }
}

impl Nonlinearity for NonlinearityModel {
    fn value(&self, x: f64, u: f64) -> f64 {
        let g = self.gamma_at(x);
        let a = self.alpha_at(x);
        g * u + (a - g) * u * self.switch_weight(u)
    }

    fn slope(&self, x: f64, u: f64) -> f64 {
        let g = self.gamma_at(x);
        let d = self.alpha_at(x) - g;
        let s2 = self.switch_scale * self.switch_scale;
        let u2 = u * u;
        let den = s2 + u2;
        g + d * (u2 * u2 + 3.0 * s2 * u2) / (den * den)
    }

    fn primitive(&self, x: f64, u: f64) -> f64 {
        let g = self.gamma_at(x);
        let d = self.alpha_at(x) - g;
        let s2 = self.switch_scale * self.switch_scale;
        let u2 = u * u;
        0.5 * g * u2 + 0.5 * d * (u2 - s2 * (u2 / s2).ln_1p())
    }

    fn slope_bound(&self) -> f64 {
        let a = self.alpha.sup_abs();
        let g = self.gamma.sup_abs();
        let d = (self.alpha.base_level - self.gamma.base_level).abs()
            + self.alpha.well.sup_abs()
            + self.gamma.well.sup_abs();
        g.max(a + d / 8.0)
    }
}

/// `λF + (1-λ)B` with `B(x,u) = α(x)u`, the homotopy to the asymptotic linearization.
#[derive(Debug, Clone, Copy)]
pub struct Blend<'a> {
    pub model: &'a NonlinearityModel,
    pub lambda: f64,
}

impl Nonlinearity for Blend<'_> {
    fn value(&self, x: f64, u: f64) -> f64 {
        self.lambda * self.model.value(x, u) + (1.0 - self.lambda) * self.model.alpha_at(x) * u
    }
    fn slope(&self, x: f64, u: f64) -> f64 {
        self.lambda * self.model.slope(x, u) + (1.0 - self.lambda) * self.model.alpha_at(x)
    }
    fn primitive(&self, x: f64, u: f64) -> f64 {
        self.lambda * self.model.primitive(x, u)
            + 0.5 * (1.0 - self.lambda) * self.model.alpha_at(x) * u * u
    }
    fn slope_bound(&self) -> f64 {
        self.lambda.abs() * self.model.slope_bound()
            + (1.0 - self.lambda).abs() * self.model.alpha.sup_abs()
    }
}

/// `G(x,u) + f(x)`: a base nonlinearity with an added source term, which moves
/// `G(·,0)` in `L²` without touching `∂G/∂u`.
#[derive(Debug, Clone, Copy)]
pub struct Forced<N> {
    pub base: N,
    pub forcing: Bump,
}

impl<N: Nonlinearity> Nonlinearity for Forced<N> {
    fn value(&self, x: f64, u: f64) -> f64 {
        self.base.value(x, u) + self.forcing.at(x.abs())
    }
    fn slope(&self, x: f64, u: f64) -> f64 {
        self.base.slope(x, u)
    }
    fn primitive(&self, x: f64, u: f64) -> f64 {
        self.base.primitive(x, u) + self.forcing.at(x.abs()) * u
    }
    fn slope_bound(&self) -> f64 {
        self.base.slope_bound()
    }
}

/// Largest value of `F(x,u)u + ν u² - b(x)|u|^q - c(x)` over the sample lattice;
/// the dissipativity condition holds on the samples iff the result is `<= 0`.
pub fn check_dissipativity<N: Nonlinearity + ?Sized>(
    nl: &N,
    data: &Dissipativity,
    x_samples: &[f64],
    u_samples: &[f64],
) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for &x in x_samples {
        for &u in u_samples {
            let v = nl.value(x, u) * u - data.bound(x, u);
            worst = worst.max(v);
        }
    }
    worst
}

/// Deviations from the prescribed slopes at infinity and at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeDeviation {
    /// `max_x |F(x,u_large)/u_large - α(x)|`
    pub at_infinity: f64,
    /// `max_x |∂F/∂u(x,0) - γ(x)|`
    pub at_zero: f64,
    /// `max_x |F(x,u_small)/u_small - γ(x)|`
    pub secant_at_zero: f64,
}

pub fn check_asymptotic_slopes(
    model: &NonlinearityModel,
    x_samples: &[f64],
    u_large: f64,
    u_small: f64,
) -> Result<SlopeDeviation> {
    check_positive("u_small", u_small)?;
    if u_large <= u_small || u_large.is_nan() {
        return Err(Error::InvalidParameter {
            name: "u_large",
            reason: format!("must exceed u_small = {u_small}, got {u_large}"),
        });
    }
    let mut dev = SlopeDeviation {
        at_infinity: 0.0,
        at_zero: 0.0,
        secant_at_zero: 0.0,
    };
    for &x in x_samples {
        let a = model.alpha_at(x);
        let g = model.gamma_at(x);
        dev.at_infinity = dev
            .at_infinity
            .max((model.value(x, u_large) / u_large - a).abs());
        dev.at_zero = dev.at_zero.max((model.slope(x, 0.0) - g).abs());
        dev.secant_at_zero = dev
            .secant_at_zero
            .max((model.value(x, u_small) / u_small - g).abs());
    }
    Ok(dev)
}

/// `sup |∂F/∂u|` over a sample lattice, to be compared with [`Nonlinearity::slope_bound`].
pub fn sampled_slope_sup<N: Nonlinearity + ?Sized>(
    nl: &N,
    x_samples: &[f64],
    u_samples: &[f64],
) -> f64 {
    x_samples
        .iter()
        .flat_map(|&x| u_samples.iter().map(move |&u| nl.slope(x, u).abs()))
        .fold(0.0, f64::max)
}

/// `n` evenly spaced points covering `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

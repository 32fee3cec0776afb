//! Time integration of `u̇ + Au = F̂(u)` with energy and tail monitors.
//!
//! One step of the first-order IMEX scheme solves
//! `(I + dt A) u⁺ = u + dt F̂(u)`; the implicit part is factorized once per
//! trajectory. For `dt · sup|∂F/∂u| <= 2` the energy
//! `V(u) = ½|u|²_{H¹_0} - Σ h W_i P(x_i, u_i)` cannot increase along the
//! discrete trajectory; [`evolve`] enforces the stricter `dt · sup|∂F/∂u| <= ½`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_positive, Error, Result};
use crate::grid::{cutoff_weights, weighted_tail, Field, Grid, RAMP_SLOPE_BOUND};
use crate::model::{check_dissipativity, linspace, Dissipativity, Nonlinearity};
use crate::operator::{ShiftedSolver, TridiagOperator};

/// Largest admissible `dt · sup|∂F/∂u|`.
pub const STABILITY_LIMIT: f64 = 0.5;

/// Nemitski operator `u ↦ F(·, u(·))`.
pub fn nemitski<N: Nonlinearity + ?Sized>(nl: &N, u: &Field) -> Field {
    u.map_nodes(|x, v| nl.value(x, v))
}

/// `V(u) = ½ |u|²_{H¹_0} - h Σ W_i P(x_i, u_i)`.
pub fn energy<N: Nonlinearity + ?Sized>(u: &Field, nl: &N) -> f64 {
    let g = u.grid();
    let h = g.spacing();
    let potential: f64 = u
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| g.cell_weight(i) * nl.primitive(g.node(i), v))
        .sum::<f64>()
        * h;
    0.5 * u.gradient_sq() - potential
}

/// Per-step energy tolerance `10⁻⁸ (1 + |V(u₀)|)`.
pub fn energy_tolerance(v0: f64) -> f64 {
    1e-8 * (1.0 + v0.abs())
}

/// Reusable IMEX stepper with the implicit operator factorized once.
pub struct ImexStepper<'a, N: ?Sized> {
    nl: &'a N,
    solver: ShiftedSolver<'a>,
    inv_dt: f64,
}

impl<'a, N: Nonlinearity + ?Sized> ImexStepper<'a, N> {
    pub fn new(nl: &'a N, op: &'a TridiagOperator, dt: f64) -> Result<Self> {
        check_positive("dt", dt)?;
        let inv_dt = 1.0 / dt;
        Ok(Self {
            nl,
            solver: op.factor_shifted(-inv_dt)?,
            inv_dt,
        })
    }

    pub fn step(&self, u: &Field) -> Result<Field> {
        let rhs = u.map_nodes(|x, v| v * self.inv_dt + self.nl.value(x, v));
        self.solver.solve(&rhs)
    }
}

/// One IMEX step `(I + dt A) u⁺ = u + dt F̂(u)`.
pub fn step_imex<N: Nonlinearity + ?Sized>(
    u: &Field,
    nl: &N,
    op: &TridiagOperator,
    dt: f64,
) -> Result<Field> {
    if u.grid() != op.grid() {
        return Err(Error::GridMismatch);
    }
    ImexStepper::new(nl, op, dt)?.step(u)
}

fn check_stability<N: Nonlinearity + ?Sized>(nl: &N, dt: f64) -> Result<()> {
    let lipschitz = nl.slope_bound();
    if dt * lipschitz > STABILITY_LIMIT {
        Err(Error::StepTooLarge { dt, lipschitz })
    } else {
        Ok(())
    }
}

/// What [`evolve`] records and when it stops early.
#[derive(Debug, Clone, PartialEq)]
pub struct Monitors {
    /// Cutoff radii whose tail mass is recorded every step.
    pub k_list: Vec<f64>,
    /// Blow-up guard on the `H¹` norm.
    pub r_cap: f64,
    /// Keep every `snapshot_stride`-th state; 0 keeps only the endpoints.
    pub snapshot_stride: usize,
    /// Stop once the rate proxy has settled (see [`Monitors::convergence_factor`]).
    pub stop_at_equilibrium: bool,
    /// Settled when `‖(u⁺-u)/dt‖ < factor (1 + ‖u⁺‖_{H¹})` ...
    pub convergence_factor: f64,
    /// ... on this many consecutive steps.
    pub convergence_window: usize,
}

impl Default for Monitors {
    fn default() -> Self {
        Self {
            k_list: Vec::new(),
            r_cap: 1e6,
            snapshot_stride: 0,
            stop_at_equilibrium: false,
            convergence_factor: 1e-8,
            convergence_window: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Completed,
    BlowupGuard,
    ConvergedToEquilibrium,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRow {
    pub t: f64,
    pub l2: f64,
    pub h1: f64,
    pub energy: f64,
    /// `-‖u̇‖²`, with `u̇ ≈ (u_n - u_{n-1})/dt` (exact `-Au₀ + F̂(u₀)` on the first row).
    pub dissipation: f64,
    pub tails: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub dt: f64,
    pub k_list: Vec<f64>,
    pub rows: Vec<SeriesRow>,
    pub snapshots: Vec<(f64, Field)>,
    pub final_state: Field,
    pub status: Status,
    /// Whether the rate proxy was settled on the final steps.
    pub settled: bool,
}

impl TrajectoryRecord {
    pub fn steps(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn final_time(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.t)
    }

    pub fn sup_h1(&self) -> f64 {
        self.rows.iter().fold(0.0, |m, r| m.max(r.h1))
    }

    pub fn initial_energy(&self) -> f64 {
        self.rows[0].energy
    }

    /// `true` when the `L²` norm never increases.
    pub fn l2_nonincreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].l2 <= w[0].l2)
    }
}

fn row<N: Nonlinearity + ?Sized>(
    t: f64,
    u: &Field,
    nl: &N,
    cutoffs: &[Field],
    dissipation: f64,
) -> SeriesRow {
    let n = u.norms();
    SeriesRow {
        t,
        l2: n.l2,
        h1: n.h1,
        energy: energy(u, nl),
        dissipation,
        tails: cutoffs.iter().map(|th| weighted_tail(u, th)).collect(),
    }
}

/// Integrates from `u0` for `round(t_final/dt)` steps (at least one).
pub fn evolve<N: Nonlinearity + ?Sized>(
    u0: &Field,
    nl: &N,
    op: &TridiagOperator,
    t_final: f64,
    dt: f64,
    monitors: &Monitors,
) -> Result<TrajectoryRecord> {
    check_positive("t_final", t_final)?;
    check_positive("dt", dt)?;
    check_positive("r_cap", monitors.r_cap)?;
    if u0.grid() != op.grid() {
        return Err(Error::GridMismatch);
    }
    check_stability(nl, dt)?;
    let stepper = ImexStepper::new(nl, op, dt)?;
    let grid = *u0.grid();
    let cutoffs = monitors
        .k_list
        .iter()
        .map(|&k| cutoff_weights(&grid, k))
        .collect::<Result<Vec<_>>>()?;
    let steps = ((t_final / dt).round() as usize).max(1);

    let rate0 = (&nemitski(nl, u0) - &op.apply(u0)?).l2_norm();
    let mut rows = Vec::with_capacity(steps + 1);
    rows.push(row(0.0, u0, nl, &cutoffs, -rate0 * rate0));
    let mut snapshots = vec![(0.0, u0.clone())];
    let mut u = u0.clone();
    let mut status = Status::Completed;
    let mut quiet = 0usize;
    let mut last_snapshot = 0usize;

    for n in 1..=steps {
        let next = stepper.step(&u)?;
        let t = n as f64 * dt;
        let rate = next.distance_l2(&u) / dt;
        let r = row(t, &next, nl, &cutoffs, -rate * rate);
        let h1 = r.h1;
        rows.push(r);
        u = next;
        if monitors.snapshot_stride > 0 && n % monitors.snapshot_stride == 0 {
            snapshots.push((t, u.clone()));
            last_snapshot = n;
        }
        if !h1.is_finite() || h1 > monitors.r_cap {
            status = Status::BlowupGuard;
            break;
        }
        if rate < monitors.convergence_factor * (1.0 + h1) {
            quiet += 1;
        } else {
            quiet = 0;
        }
        if monitors.stop_at_equilibrium && quiet >= monitors.convergence_window {
            status = Status::ConvergedToEquilibrium;
            break;
        }
    }
    let last = rows.len() - 1;
    if last_snapshot != last {
        snapshots.push((rows[last].t, u.clone()));
    }
    Ok(TrajectoryRecord {
        dt,
        k_list: monitors.k_list.clone(),
        rows,
        snapshots,
        final_state: u,
        status,
        settled: quiet >= monitors.convergence_window,
    })
}

/// Largest one-step energy increase `max_n V(u_{n+1}) - V(u_n)`; zero for a
/// record without steps.
pub fn dissipation_check(rec: &TrajectoryRecord) -> f64 {
    rec.rows.windows(2).map(|w| w[1].energy - w[0].energy).fold(
        if rec.rows.len() < 2 {
            0.0
        } else {
            f64::NEG_INFINITY
        },
        f64::max,
    )
}

/// Rejects models that violate the dissipativity inequality anywhere on the
/// grid for amplitudes up to the sup-norm bound implied by `‖u‖_{H¹} <= radius`.
pub fn certify_dissipative<N: Nonlinearity + ?Sized>(
    grid: &Grid,
    nl: &N,
    data: &Dissipativity,
    radius: f64,
) -> Result<()> {
    data.validate()?;
    let amp = grid.sup_norm_constant() * radius;
    let xs: Vec<f64> = grid.nodes().collect();
    let us = linspace(-amp, amp, 201);
    let worst = check_dissipativity(nl, data, &xs, &us);
    if worst > 1e-10 * (1.0 + amp * amp) {
        Err(Error::NotDissipative(worst))
    } else {
        Ok(())
    }
}

/// The localization constant `α_k` of the tail estimate
/// `h Σ W θ_k u(t)² <= R² e^{-2νt} + α_k` for `‖u(t)‖_{H¹} <= R`:
///
/// ```text
/// α_k = [ 2√2 D R² / k + (S R)^q h Σ W θ_k b + h Σ W θ_k c ] / ν
/// ```
///
/// with `D = sup|θ'|` and `S` the grid's sup-norm constant.
pub fn tail_constant(grid: &Grid, data: &Dissipativity, radius: f64, k: f64) -> Result<f64> {
    check_positive("k", k)?;
    check_positive("nu", data.nu)?;
    let theta = cutoff_weights(grid, k)?;
    let h = grid.spacing();
    let (mut b_tail, mut c_tail) = (0.0, 0.0);
    for (i, t) in theta.values().iter().enumerate() {
        let w = grid.cell_weight(i) * t * h;
        let r = grid.radius(i);
        b_tail += w * data.b.at(r).abs();
        c_tail += w * data.c.at(r).abs();
    }
    let sup = grid.sup_norm_constant() * radius;
    let gradient_term = 2.0 * std::f64::consts::SQRT_2 * RAMP_SLOPE_BOUND * radius * radius / k;
    Ok((gradient_term + sup.powf(data.q) * b_tail + c_tail) / data.nu)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailMargin {
    pub k: f64,
    pub alpha_k: f64,
    /// `max_t [tail(t) - R² e^{-2νt} - α_k]`; nonpositive when the estimate holds.
    pub margin: f64,
}

/// Checks the tail estimate along a recorded trajectory.
pub fn tail_bound_check<N: Nonlinearity + ?Sized>(
    rec: &TrajectoryRecord,
    nl: &N,
    data: &Dissipativity,
    radius: f64,
    k_list: &[f64],
) -> Result<Vec<TailMargin>> {
    let observed = rec.sup_h1();
    if radius < observed {
        return Err(Error::RadiusTooSmall { radius, observed });
    }
    let grid = *rec.final_state.grid();
    certify_dissipative(&grid, nl, data, radius)?;
    let all_snapshots = rec.snapshots.len() == rec.rows.len();
    k_list
        .iter()
        .map(|&k| {
            let alpha_k = tail_constant(&grid, data, radius, k)?;
            let bound = |t: f64| radius * radius * (-2.0 * data.nu * t).exp() + alpha_k;
            let margin = if let Some(pos) = rec.k_list.iter().position(|&m| m == k) {
                rec.rows
                    .iter()
                    .map(|r| r.tails[pos] - bound(r.t))
                    .fold(f64::NEG_INFINITY, f64::max)
            } else if all_snapshots {
                let theta = cutoff_weights(&grid, k)?;
                rec.snapshots
                    .iter()
                    .map(|(t, u)| weighted_tail(u, &theta) - bound(*t))
                    .fold(f64::NEG_INFINITY, f64::max)
            } else {
                return Err(Error::TailNotMonitored(k));
            };
            Ok(TailMargin { k, alpha_k, margin })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub index: usize,
    pub initial_l2_distance: f64,
    pub initial_h1_distance: f64,
    /// `sup_{t ∈ [δ, T]} ‖u_j(t) - u(t)‖_{H¹}` over the sampled times.
    pub sup_h1_error: f64,
}

/// Continuous dependence on the nonlinearity and the initial data: runs the
/// reference problem and every family member in lockstep and reports the
/// sup-`H¹` distance over `[delta, t_final]`.
#[allow(clippy::too_many_arguments)]
pub fn convergence_experiment<N, M>(
    op: &TridiagOperator,
    reference: &N,
    u0: &Field,
    family: &[(M, Field)],
    delta: f64,
    t_final: f64,
    dt: f64,
) -> Result<Vec<ConvergenceRow>>
where
    N: Nonlinearity,
    M: Nonlinearity + Send + Sync,
{
    check_positive("delta", delta)?;
    if t_final <= delta || t_final.is_nan() {
        return Err(Error::InvalidParameter {
            name: "t_final",
            reason: format!("must exceed delta = {delta}"),
        });
    }
    check_stability(reference, dt)?;
    let c = reference.slope_bound();
    for (j, (g, _)) in family.iter().enumerate() {
        let cj = g.slope_bound();
        if (cj - c).abs() > 1e-12 * c.max(1.0) {
            return Err(Error::InconsistentFamily(format!(
                "member {j} has derivative bound {cj}, reference has {c}"
            )));
        }
    }
    let steps = ((t_final / dt).round() as usize).max(1);
    let first = (delta / dt).ceil() as usize;
    let window = steps.saturating_sub(first) + 1;
    let stride = (window / 1000).max(1);
    let sampled = |n: usize| n >= first && (n - first).is_multiple_of(stride);

    let stepper = ImexStepper::new(reference, op, dt)?;
    let mut reference_states = Vec::new();
    let mut u = u0.clone();
    for n in 1..=steps {
        u = stepper.step(&u)?;
        if sampled(n) {
            reference_states.push(u.clone());
        }
    }

    family
        .par_iter()
        .enumerate()
        .map(|(index, (g, v0))| {
            let stepper = ImexStepper::new(g, op, dt)?;
            let mut v = v0.clone();
            let mut sup = 0.0f64;
            let mut slot = 0;
            for n in 1..=steps {
                v = stepper.step(&v)?;
                if sampled(n) {
                    sup = sup.max(v.distance_h1(&reference_states[slot]));
                    slot += 1;
                }
            }
            Ok(ConvergenceRow {
                index,
                initial_l2_distance: v0.distance_l2(u0),
                initial_h1_distance: v0.distance_h1(u0),
                sup_h1_error: sup,
            })
        })
        .collect()
}

/// Parameters of the endpoint-compactness experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissibilitySetup {
    /// Radius `R` of the `H¹` ball `N` that trajectories must stay in.
    pub radius: f64,
    /// Cutoff radius for the endpoint tails.
    pub k: f64,
    /// Look-back time `τ` of the endpoint bound.
    pub tau: f64,
    pub dt: f64,
    /// Number of trailing endpoints whose diameter is reported.
    pub window: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EndpointRow {
    pub index: usize,
    pub duration: f64,
    /// `false` when the trajectory left the ball of radius `R`.
    pub included: bool,
    pub sup_h1: f64,
    pub tail: f64,
    /// `R² e^{-2ν(t_j - τ)} + α_k`
    pub bound: f64,
    pub within_bound: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityReport {
    pub rows: Vec<EndpointRow>,
    pub alpha_k: f64,
    /// Durations strictly increasing and eventually beyond `τ`; the discrete
    /// stand-in for `t_j → ∞`.
    pub durations_diverge: bool,
    /// `L²` diameter of the last `window` included endpoints.
    pub endpoint_diameter: f64,
    /// Same diameter after removing tails, i.e. of `(1 - θ_k) u_j(t_j)`.
    pub localized_diameter: f64,
}

impl AdmissibilityReport {
    pub fn all_within_bound(&self) -> bool {
        self.rows
            .iter()
            .filter(|r| r.included)
            .all(|r| r.within_bound)
    }
}

fn diameter(points: &[Field]) -> f64 {
    let mut d = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            d = d.max(a.distance_l2(b));
        }
    }
    d
}

/// Endpoint experiment: evolves each `u0_j` for `t_j`, checks endpoint tails
/// against the localization bound and measures how tightly the late
/// endpoints cluster.
pub fn admissibility_experiment<N: Nonlinearity + ?Sized>(
    initial: &[Field],
    durations: &[f64],
    nl: &N,
    data: &Dissipativity,
    op: &TridiagOperator,
    setup: &AdmissibilitySetup,
) -> Result<AdmissibilityReport> {
    if initial.len() != durations.len() {
        return Err(Error::InvalidParameter {
            name: "durations",
            reason: format!(
                "{} durations for {} initial fields",
                durations.len(),
                initial.len()
            ),
        });
    }
    check_positive("radius", setup.radius)?;
    if setup.tau < 0.0 {
        return Err(Error::InvalidParameter {
            name: "tau",
            reason: "must be nonnegative".into(),
        });
    }
    let grid = *op.grid();
    certify_dissipative(&grid, nl, data, setup.radius)?;
    let alpha_k = tail_constant(&grid, data, setup.radius, setup.k)?;
    let theta = cutoff_weights(&grid, setup.k)?;
    let monitors = Monitors {
        r_cap: setup.radius,
        ..Monitors::default()
    };

    let results: Vec<(EndpointRow, Field)> = initial
        .par_iter()
        .zip(durations)
        .enumerate()
        .map(|(index, (u0, &t))| {
            let (end, sup_h1, left_ball) = if t > 0.0 {
                let rec = evolve(u0, nl, op, t, setup.dt, &monitors)?;
                let left = rec.status == Status::BlowupGuard;
                (rec.final_state.clone(), rec.sup_h1(), left)
            } else {
                let h1 = u0.h1_norm();
                (u0.clone(), h1, h1 > setup.radius)
            };
            let tail = weighted_tail(&end, &theta);
            let bound =
                setup.radius * setup.radius * (-2.0 * data.nu * (t - setup.tau)).exp() + alpha_k;
            Ok((
                EndpointRow {
                    index,
                    duration: t,
                    included: !left_ball,
                    sup_h1,
                    tail,
                    bound,
                    within_bound: tail <= bound,
                },
                end,
            ))
        })
        .collect::<Result<_>>()?;

    let included: Vec<&(EndpointRow, Field)> = results.iter().filter(|(r, _)| r.included).collect();
    let tail_start = included.len().saturating_sub(setup.window);
    let late: Vec<Field> = included[tail_start..]
        .iter()
        .map(|(_, f)| f.clone())
        .collect();
    let localized: Vec<Field> = late
        .iter()
        .map(|f| {
            Field::from_vec(
                grid,
                f.values()
                    .iter()
                    .zip(theta.values())
                    .map(|(v, t)| (1.0 - t) * v)
                    .collect(),
            )
        })
        .collect();
    let durations_diverge = durations.windows(2).all(|w| w[1] > w[0])
        && durations.last().is_some_and(|&t| t > setup.tau);
    Ok(AdmissibilityReport {
        rows: results.into_iter().map(|(r, _)| r).collect(),
        alpha_k,
        durations_diverge,
        endpoint_diameter: diameter(&late),
        localized_diameter: diameter(&localized),
    })
}

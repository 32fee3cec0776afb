//! Stationary solutions of `Au = F̂(u)`: damped Newton, Morse indices, a
//! seeded census and the a-priori bound scan along the homotopy to the
//! asymptotic linearization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_positive, Error, Result};
use crate::grid::Field;
use crate::model::{Blend, Nonlinearity, NonlinearityModel};
use crate::operator::TridiagOperator;
use crate::semiflow::{energy, evolve, nemitski, Monitors, Status, STABILITY_LIMIT};
use crate::spectrum::{
    default_tolerance, eigenvalues_below, eigenvector, limiting_operator, linearization,
    nonresonance_report,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub max_iter: usize,
    /// Accept when `‖Au - F̂(u)‖ <= accept_rel (1 + ‖u‖_{H¹})`.
    pub accept_rel: f64,
    /// Stop iterating once the residual is below `target_rel (1 + ‖u‖_{H¹})`.
    pub target_rel: f64,
    pub max_halvings: usize,
    /// Equilibria with `‖u‖_{H¹}` below this are reported as trivial.
    pub trivial_threshold: f64,
    /// Hyperbolicity margin; `None` uses `10 h²`.
    pub hyperbolic_tol: Option<f64>,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            accept_rel: 1e-9,
            target_rel: 1e-11,
            max_halvings: 40,
            trivial_threshold: 1e-3,
            hyperbolic_tol: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Equilibrium {
    #[serde(skip)]
    pub u_star: Field,
    /// `L²` norm of `Au - F̂(u)`.
    pub residual: f64,
    pub h1_norm: f64,
    pub energy: f64,
    pub morse_index: usize,
    pub hyperbolic: bool,
    pub trivial: bool,
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub equilibrium: Equilibrium,
    pub residual_history: Vec<f64>,
    pub iterations: usize,
}

/// `Au - F̂(u)`.
pub fn residual<N: Nonlinearity + ?Sized>(
    op: &TridiagOperator,
    nl: &N,
    u: &Field,
) -> Result<Field> {
    Ok(&op.apply(u)? - &nemitski(nl, u))
}

/// Morse index of the linearization at `u` and whether no eigenvalue lies in `[-tol, tol)`.
pub fn morse_index<N: Nonlinearity + ?Sized>(
    u: &Field,
    nl: &N,
    op: &TridiagOperator,
    tol: f64,
) -> Result<(usize, bool)> {
    let j = linearization(op, nl, u)?;
    let index = j.inertia_below(0.0).count;
    let hyperbolic = j.inertia_below(tol).count == j.inertia_below(-tol).count;
    Ok((index, hyperbolic))
}

fn describe<N: Nonlinearity + ?Sized>(
    u: Field,
    nl: &N,
    op: &TridiagOperator,
    opts: &NewtonOptions,
    residual: f64,
) -> Result<Equilibrium> {
    let tol = opts
        .hyperbolic_tol
        .unwrap_or_else(|| default_tolerance(op.grid()));
    let (morse_index, hyperbolic) = morse_index(&u, nl, op, tol)?;
    let h1_norm = u.h1_norm();
    Ok(Equilibrium {
        residual,
        h1_norm,
        energy: energy(&u, nl),
        morse_index,
        hyperbolic,
        trivial: h1_norm < opts.trivial_threshold,
        u_star: u,
    })
}

/// Damped Newton iteration on `Au - F̂(u) = 0` with step halving.
pub fn newton_solve<N: Nonlinearity + ?Sized>(
    u0: &Field,
    nl: &N,
    op: &TridiagOperator,
    opts: &NewtonOptions,
) -> Result<NewtonOutcome> {
    if u0.grid() != op.grid() {
        return Err(Error::GridMismatch);
    }
    let mut u = u0.clone();
    let mut r = residual(op, nl, &u)?;
    let mut rn = r.l2_norm();
    let mut history = vec![rn];
    let mut iterations = 0;
    loop {
        if !rn.is_finite() {
            return Err(Error::NonFinite(0));
        }
        let scale = 1.0 + u.h1_norm();
        if rn <= opts.target_rel * scale {
            break;
        }
        if iterations == opts.max_iter {
            if rn <= opts.accept_rel * scale {
                break;
            }
            return Err(Error::NewtonMaxIterations {
                iterations,
                residual: rn,
            });
        }
        let jac = linearization(op, nl, &u)?;
        let step = jac
            .solve_shifted(0.0, &r.scaled(-1.0))
            .map_err(|e| match e {
                Error::SingularShift { index, .. } => Error::SingularJacobian { index },
                other => other,
            })?;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial = u.axpy(t, &step);
            let tr = residual(op, nl, &trial)?;
            let tn = tr.l2_norm();
            if tn < rn {
                accepted = Some((trial, tr, tn));
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((trial, tr, tn)) => {
                u = trial;
                r = tr;
                rn = tn;
                history.push(rn);
            }
            None if rn <= opts.accept_rel * scale => break,
            None => {
                return Err(Error::NewtonMaxIterations {
                    iterations,
                    residual: rn,
                })
            }
        }
    }
    Ok(NewtonOutcome {
        equilibrium: describe(u, nl, op, opts, rn)?,
        residual_history: history,
        iterations,
    })
}

/// How [`find_equilibria`] generates and screens Newton seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedStrategy {
    /// Multiples of the low eigenvectors of both limiting operators used as seeds (with both signs).
    pub eigen_amplitudes: Vec<f64>,
    /// Eigenvectors taken per limiting operator.
    pub max_directions: usize,
    pub random_count: usize,
    pub random_amplitude: f64,
    pub random_bumps: usize,
    pub rng_seed: u64,
    /// Relaxation time before polishing; 0 disables relaxation.
    pub relax_time: f64,
    pub dt: f64,
    /// Run length of the stationarity check.
    pub verify_time: f64,
    /// Stationarity tolerance relative to `1 + ‖u*‖_{H¹}`.
    pub verify_rel: f64,
    /// Two equilibria are the same when closer than `dedup_rel (1 + ‖u*‖_{H¹})` in `H¹`.
    pub dedup_rel: f64,
    pub newton: NewtonOptions,
}

impl Default for SeedStrategy {
    fn default() -> Self {
        Self {
            eigen_amplitudes: vec![0.5, 1.0, 2.0, 4.0],
            max_directions: 4,
            random_count: 8,
            random_amplitude: 2.0,
            random_bumps: 3,
            rng_seed: 0x5eed,
            relax_time: 20.0,
            dt: 0.05,
            verify_time: 1.0,
            verify_rel: 1e-8,
            dedup_rel: 1e-4,
            newton: NewtonOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Census {
    pub equilibria: Vec<Equilibrium>,
    pub seeds_tried: usize,
    pub newton_failures: usize,
    /// Newton limits that drifted under the flow beyond the stationarity tolerance.
    pub rejected_unstationary: usize,
}

impl Census {
    pub fn trivial_index(&self) -> Option<usize> {
        self.equilibria.iter().position(|e| e.trivial)
    }

    /// Index of the census entry within `rel (1 + ‖e‖_{H¹})` of `u`.
    pub fn locate(&self, u: &Field, rel: f64) -> Option<usize> {
        self.equilibria
            .iter()
            .position(|e| u.distance_h1(&e.u_star) <= rel * (1.0 + e.h1_norm))
    }
}

fn low_modes(op: &TridiagOperator, count: usize) -> Result<Vec<Field>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    // Raise the cutoff until enough eigenvalues are bracketed.
    let (lo, hi) = op.matrix().gershgorin();
    let mut cutoff = lo + (hi - lo) * 1e-3;
    while op.inertia_below(cutoff).count < count && cutoff < hi {
        cutoff = lo + 2.0 * (cutoff - lo);
    }
    let tol = (1e-13 * op.norm()).max(1e-14);
    eigenvalues_below(op, cutoff.min(hi), tol)?
        .into_iter()
        .take(count)
        .map(|l| eigenvector(op, l))
        .collect()
}

fn stable_dt<N: Nonlinearity + ?Sized>(nl: &N, dt: f64) -> f64 {
    let lip = nl.slope_bound();
    if lip > 0.0 {
        dt.min(STABILITY_LIMIT / lip)
    } else {
        dt
    }
}

/// Collects verified, deduplicated equilibria of a generic nonlinearity.
pub fn census_from_seeds<N: Nonlinearity + ?Sized>(
    nl: &N,
    op: &TridiagOperator,
    seeds: &[Field],
    strategy: &SeedStrategy,
) -> Result<Census> {
    check_positive("dt", strategy.dt)?;
    check_positive("verify_time", strategy.verify_time)?;
    let dt = stable_dt(nl, strategy.dt);
    let relax = Monitors {
        stop_at_equilibrium: true,
        ..Monitors::default()
    };
    let solve = |seed: &Field| -> Vec<Result<Equilibrium>> {
        let mut starts = vec![seed.clone()];
        if strategy.relax_time > 0.0 {
            if let Ok(rec) = evolve(seed, nl, op, strategy.relax_time, dt, &relax) {
                if rec.status != Status::BlowupGuard {
                    starts.push(rec.final_state);
                }
            }
        }
        starts
            .iter()
            .map(|s| newton_solve(s, nl, op, &strategy.newton).map(|o| o.equilibrium))
            .collect()
    };
    let outcomes: Vec<Vec<Result<Equilibrium>>> = seeds.par_iter().map(solve).collect();

    let mut newton_failures = 0;
    let mut candidates = Vec::new();
    for r in outcomes.into_iter().flatten() {
        match r {
            Ok(e) => candidates.push(e),
            Err(_) => newton_failures += 1,
        }
    }

    let mut unique: Vec<Equilibrium> = Vec::new();
    for e in candidates {
        let dup = unique
            .iter()
            .any(|k| e.u_star.distance_h1(&k.u_star) <= strategy.dedup_rel * (1.0 + k.h1_norm));
        if !dup {
            unique.push(e);
        }
    }

    let verified: Vec<bool> = unique
        .par_iter()
        .map(|e| {
            evolve(
                &e.u_star,
                nl,
                op,
                strategy.verify_time,
                dt,
                &Monitors::default(),
            )
            .map(|rec| {
                rec.final_state.distance_h1(&e.u_star) <= strategy.verify_rel * (1.0 + e.h1_norm)
            })
            .unwrap_or(false)
        })
        .collect();
    let rejected_unstationary = verified.iter().filter(|v| !**v).count();
    let mut equilibria: Vec<Equilibrium> = unique
        .into_iter()
        .zip(verified)
        .filter_map(|(e, ok)| ok.then_some(e))
        .collect();
    sort_census(&mut equilibria);
    Ok(Census {
        equilibria,
        seeds_tried: seeds.len(),
        newton_failures,
        rejected_unstationary,
    })
}

/// Trivial first, then by energy (to `10⁻⁸`), then by decreasing mean.
pub fn sort_census(list: &mut [Equilibrium]) {
    let key = |e: &Equilibrium| {
        let ones = Field::from_fn(*e.u_star.grid(), |_| 1.0);
        (
            !e.trivial,
            (e.energy * 1e8).round() as i64,
            -e.u_star.dot(&ones),
        )
    };
    list.sort_by(|a, b| {
        let (ka, kb) = (key(a), key(b));
        ka.0.cmp(&kb.0)
            .then(ka.1.cmp(&kb.1))
            .then(ka.2.total_cmp(&kb.2))
    });
}

/// Census of the switch model, seeded from the trivial state, the low modes
/// of both limiting operators and random smooth fields.
pub fn find_equilibria(
    model: &NonlinearityModel,
    op: &TridiagOperator,
    strategy: &SeedStrategy,
) -> Result<Census> {
    model.validate()?;
    let grid = *op.grid();
    let mut directions = low_modes(
        &limiting_operator(&grid, &model.gamma),
        strategy.max_directions,
    )?;
    directions.extend(low_modes(
        &limiting_operator(&grid, &model.alpha),
        strategy.max_directions,
    )?);
    let mut seeds = vec![Field::zeros(grid)];
    for v in &directions {
        let unit = v.scaled(1.0 / v.max_abs());
        for &a in &strategy.eigen_amplitudes {
            seeds.push(unit.scaled(a));
            seeds.push(unit.scaled(-a));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(strategy.rng_seed);
    for _ in 0..strategy.random_count {
        seeds.push(Field::random_smooth(
            grid,
            &mut rng,
            strategy.random_amplitude,
            strategy.random_bumps,
        ));
    }
    census_from_seeds(model, op, &seeds, strategy)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    pub t_final: f64,
    pub dt: f64,
    /// Blow-up guard on `‖u‖_{H¹}`.
    pub r_cap: f64,
    /// Amplitude of the seeds along unstable directions of the zero state.
    pub eps_seed: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            t_final: 30.0,
            dt: 0.05,
            r_cap: 1e4,
            eps_seed: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomotopyRow {
    pub lambda: f64,
    pub sup_h1_probes: f64,
    /// `None` when the zero state is stable at this `λ`.
    pub sup_h1_unstable: Option<f64>,
    pub unstable_directions: usize,
    pub blowups: usize,
    /// Whether every probe run has nonincreasing `L²` norm.
    pub l2_monotone: bool,
    /// Largest `‖u(T)‖_{L²} / ‖u(0)‖_{L²}` over the probes.
    pub final_l2_ratio: f64,
}

impl HomotopyRow {
    pub fn sup_h1(&self) -> f64 {
        self.sup_h1_probes.max(self.sup_h1_unstable.unwrap_or(0.0))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HomotopyScan {
    pub rows: Vec<HomotopyRow>,
    /// `max_λ sup_t ‖u(t)‖_{H¹}` over all runs.
    pub r_observed: f64,
}

impl HomotopyScan {
    pub fn total_blowups(&self) -> usize {
        self.rows.iter().map(|r| r.blowups).sum()
    }
}

/// Evolves the probes (and small perturbations along the unstable directions
/// of the zero state) under `λF + (1-λ)αu` for each `λ`.
pub fn homotopy_bound_scan(
    model: &NonlinearityModel,
    op: &TridiagOperator,
    lambdas: &[f64],
    probes: &[Field],
    opts: &ScanOptions,
) -> Result<HomotopyScan> {
    model.validate()?;
    check_positive("t_final", opts.t_final)?;
    check_positive("eps_seed", opts.eps_seed)?;
    let grid = *op.grid();
    let at_infinity = limiting_operator(&grid, &model.alpha);
    let report = nonresonance_report(
        &at_infinity,
        model.alpha.base_level,
        default_tolerance(&grid),
        false,
    )?;
    if !report.certified {
        return Err(Error::ResonantAtInfinity {
            gap: report.kernel_gap,
            tol: report.tolerance,
        });
    }
    let monitors = Monitors {
        r_cap: opts.r_cap,
        ..Monitors::default()
    };
    let zero = Field::zeros(grid);
    let rows = lambdas
        .par_iter()
        .map(|&lambda| -> Result<HomotopyRow> {
            let nl = Blend { model, lambda };
            let dt = stable_dt(&nl, opts.dt);
            let jac = linearization(op, &nl, &zero)?;
            let tol = (1e-13 * jac.norm()).max(1e-14);
            let unstable = eigenvalues_below(&jac, 0.0, tol)?
                .into_iter()
                .map(|l| eigenvector(&jac, l))
                .collect::<Result<Vec<_>>>()?;

            let mut blowups = 0;
            let mut sup_probes = 0.0f64;
            let mut l2_monotone = true;
            let mut final_l2_ratio = 0.0f64;
            for p in probes {
                let rec = evolve(p, &nl, op, opts.t_final, dt, &monitors)?;
                blowups += usize::from(rec.status == Status::BlowupGuard);
                sup_probes = sup_probes.max(rec.sup_h1());
                l2_monotone &= rec.l2_nonincreasing();
                let l0 = rec.rows[0].l2;
                if l0 > 0.0 {
                    final_l2_ratio = final_l2_ratio.max(rec.rows.last().unwrap().l2 / l0);
                }
            }
            let mut sup_unstable = None;
            for v in &unstable {
                for s in [opts.eps_seed, -opts.eps_seed] {
                    let rec = evolve(&v.scaled(s), &nl, op, opts.t_final, dt, &monitors)?;
                    blowups += usize::from(rec.status == Status::BlowupGuard);
                    sup_unstable = Some(sup_unstable.unwrap_or(0.0f64).max(rec.sup_h1()));
                }
            }
            Ok(HomotopyRow {
                lambda,
                sup_h1_probes: sup_probes,
                sup_h1_unstable: sup_unstable,
                unstable_directions: unstable.len(),
                blowups,
                l2_monotone,
                final_l2_ratio,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let r_observed = rows.iter().fold(0.0f64, |m, r| m.max(r.sup_h1()));
    Ok(HomotopyScan { rows, r_observed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::model::PotentialSpec;

    fn scenario() -> NonlinearityModel {
        NonlinearityModel::switch(
            PotentialSpec::constant(1.0),
            PotentialSpec::gaussian(1.0, 4.0, 1.0),
            1.0,
        )
        .unwrap()
    }

    fn setup(n: usize) -> (Grid, TridiagOperator) {
        let g = Grid::line(12.0, n).unwrap();
        (g, TridiagOperator::assemble_laplacian(&g))
    }

    #[test]
    fn linear_problem_converges_in_one_step() {
        let (g, op) = setup(199);
        let m = NonlinearityModel::linear_decay(1.0).unwrap();
        let u0 = Field::from_fn(g, |x| (-x * x).exp());
        let out = newton_solve(&u0, &m, &op, &NewtonOptions::default()).unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.equilibrium.trivial);
        assert_eq!(out.equilibrium.morse_index, 0);
        assert!(out.equilibrium.hyperbolic);
    }

    #[test]
    fn zero_is_a_saddle_of_the_scenario() {
        let (g, op) = setup(299);
        let m = scenario();
        let out = newton_solve(&Field::zeros(g), &m, &op, &NewtonOptions::default()).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.equilibrium.residual, 0.0);
        assert_eq!(out.equilibrium.morse_index, 1);
    }

    #[test]
    fn newton_residuals_decrease() {
        let (g, op) = setup(299);
        let m = scenario();
        let u0 = Field::from_fn(g, |x| 1.5 * (-x * x / 2.0).exp());
        let out = newton_solve(&u0, &m, &op, &NewtonOptions::default()).unwrap();
        assert!(out.residual_history.windows(2).all(|w| w[1] < w[0]));
        let e = &out.equilibrium;
        assert!(!e.trivial);
        assert!(e.residual <= 1e-9 * (1.0 + e.h1_norm));
        // verify the residual independently
        let r = residual(&op, &m, &e.u_star).unwrap();
        assert!(r.l2_norm() <= 1e-9 * (1.0 + e.h1_norm));
        assert_eq!(e.morse_index, 0);
    }

    #[test]
    fn singular_jacobian_is_reported() {
        // h = 1/2, so the first diagonal entry 2/h² = 8 cancels exactly against F' = 8.
        let g = Grid::line(12.0, 47).unwrap();
        let op = TridiagOperator::assemble_laplacian(&g);
        let l1 = 8.0;
        struct Resonant(f64);
        impl Nonlinearity for Resonant {
            fn value(&self, _: f64, u: f64) -> f64 {
                self.0 * u
            }
            fn slope(&self, _: f64, _: f64) -> f64 {
                self.0
            }
            fn primitive(&self, _: f64, u: f64) -> f64 {
                0.5 * self.0 * u * u
            }
            fn slope_bound(&self) -> f64 {
                self.0.abs()
            }
        }
        let nl = Resonant(l1);
        let u0 = Field::from_fn(g, |x| (-x * x).exp());
        assert!(matches!(
            newton_solve(&u0, &nl, &op, &NewtonOptions::default()),
            Err(Error::SingularJacobian { index: 0 })
        ));
    }

    #[test]
    fn census_of_the_scenario() {
        let (_, op) = setup(299);
        let m = scenario();
        let strategy = SeedStrategy {
            random_count: 2,
            ..SeedStrategy::default()
        };
        let census = find_equilibria(&m, &op, &strategy).unwrap();
        let eq = &census.equilibria;
        assert_eq!(census.trivial_index(), Some(0));
        assert_eq!(eq[0].morse_index, 1);
        assert!(eq.len() >= 3);
        let (p, q) = (&eq[1], &eq[2]);
        assert_eq!(p.morse_index, 0);
        assert!(p.u_star.distance_h1(&q.u_star.scaled(-1.0)) < 1e-6);
        assert!(p.energy < eq[0].energy);
        for e in eq {
            assert!(census.locate(&e.u_star, 1e-8).is_some());
        }
    }

    #[test]
    fn scan_at_zero_lambda_decays() {
        let (g, op) = setup(199);
        let m = scenario();
        let probes = vec![Field::from_fn(g, |x| 3.0 * (-x * x).exp())];
        let scan = homotopy_bound_scan(
            &m,
            &op,
            &[0.0, 1.0],
            &probes,
            &ScanOptions {
                t_final: 5.0,
                ..ScanOptions::default()
            },
        )
        .unwrap();
        let r0 = &scan.rows[0];
        assert!(r0.l2_monotone && r0.final_l2_ratio < 0.1);
        assert_eq!(r0.unstable_directions, 0);
        assert_eq!(scan.rows[1].unstable_directions, 1);
        assert_eq!(scan.total_blowups(), 0);
        assert!(scan.r_observed >= probes[0].h1_norm());
    }
}

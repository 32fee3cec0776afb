//! Numerical search for connecting orbits leaving the trivial equilibrium
//! along its unstable directions.

use rayon::prelude::*;
use serde::Serialize;

use crate::equilibria::{newton_solve, Census, NewtonOptions};
use crate::error::{check_positive, Error, Result};
use crate::grid::Field;
use crate::model::{Nonlinearity, NonlinearityModel};
use crate::operator::TridiagOperator;
use crate::semiflow::{
    dissipation_check, energy_tolerance, evolve, Monitors, Status, TrajectoryRecord,
};
use crate::spectrum::{default_tolerance, limiting_operator, nonresonance_report};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConnectOptions {
    /// Initial offset along each unstable eigenvector (unit `L²` norm).
    pub eps_seed: f64,
    pub t_max: f64,
    pub dt: f64,
    /// Terminal states must be within `conn_rel (1 + ‖target‖_{H¹})` of their target in `H¹`.
    pub conn_rel: f64,
    /// Non-resonance threshold; `None` uses `10 h²`.
    pub nonresonance_tol: Option<f64>,
    /// Keep every `snapshot_stride`-th state of each connecting trajectory.
    pub snapshot_stride: usize,
    pub newton: NewtonOptions,
}

impl Default for ConnectOptions {
    fn default() -> Self {
        Self {
            eps_seed: 1e-3,
            t_max: 500.0,
            dt: 0.01,
            conn_rel: 1e-6,
            nonresonance_tol: None,
            snapshot_stride: 100,
            newton: NewtonOptions::default(),
        }
    }
}

/// Where a trajectory ended up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitClass {
    /// Converged to the census entry with this index.
    Target(usize),
    Nonconvergent,
}

#[derive(Debug, Clone)]
pub struct ConnectionRecord {
    pub source: usize,
    pub target: usize,
    /// Which unstable eigenvector seeded the orbit.
    pub direction: usize,
    /// Sign of the seed offset.
    pub sign: i8,
    pub energy_drop: f64,
    /// `‖u(T) - target‖_{H¹}`.
    pub closeness: f64,
    pub trajectory: TrajectoryRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejection {
    pub direction: usize,
    pub sign: i8,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct ConnectionSearch {
    /// Morse index of the asymptotic linearization.
    pub m_infinity: usize,
    /// Morse index of the linearization at the trivial equilibrium.
    pub m_zero: usize,
    pub records: Vec<ConnectionRecord>,
    pub rejections: Vec<Rejection>,
}

impl ConnectionSearch {
    /// At least one validated connection from the trivial equilibrium.
    pub fn confirms_connection(&self) -> bool {
        !self.records.is_empty()
    }
}

/// Classifies the end of `rec`: Newton-polishes the terminal state and matches
/// it against the census, appending a new entry when nothing matches.
pub fn classify_limit<N: Nonlinearity + ?Sized>(
    rec: &TrajectoryRecord,
    census: &mut Census,
    conn_rel: f64,
    nl: &N,
    op: &TridiagOperator,
    newton: &NewtonOptions,
) -> Result<LimitClass> {
    if rec.status != Status::ConvergedToEquilibrium && !rec.settled {
        return Ok(LimitClass::Nonconvergent);
    }
    let polished = match newton_solve(&rec.final_state, nl, op, newton) {
        Ok(o) => o.equilibrium,
        Err(Error::NewtonMaxIterations { .. } | Error::SingularJacobian { .. }) => {
            return Ok(LimitClass::Nonconvergent)
        }
        Err(e) => return Err(e),
    };
    if let Some(i) = census.locate(&polished.u_star, conn_rel) {
        return Ok(LimitClass::Target(i));
    }
    census.equilibria.push(polished);
    Ok(LimitClass::Target(census.equilibria.len() - 1))
}

/// Follows `±eps_seed φ_i` for every unstable eigenvector `φ_i` of the zero
/// state until the flow settles, and validates each landing point.
pub fn heteroclinic_search(
    model: &NonlinearityModel,
    op: &TridiagOperator,
    census: &mut Census,
    opts: &ConnectOptions,
) -> Result<ConnectionSearch> {
    model.validate()?;
    check_positive("eps_seed", opts.eps_seed)?;
    check_positive("conn_rel", opts.conn_rel)?;
    let grid = *op.grid();
    let tol = opts
        .nonresonance_tol
        .unwrap_or_else(|| default_tolerance(&grid));

    let at_infinity = nonresonance_report(
        &limiting_operator(&grid, &model.alpha),
        model.alpha.base_level,
        tol,
        false,
    )?;
    if !at_infinity.certified {
        return Err(Error::ResonantAtInfinity {
            gap: at_infinity.kernel_gap,
            tol,
        });
    }
    let at_zero = nonresonance_report(
        &limiting_operator(&grid, &model.gamma),
        model.gamma.base_level,
        tol,
        true,
    )?;
    if !at_zero.certified {
        return Err(Error::ResonantAtZero {
            gap: at_zero.kernel_gap,
            tol,
        });
    }
    let (m_infinity, m_zero) = (at_infinity.count_negative, at_zero.count_negative);
    if m_zero == 0 {
        return Err(Error::NoUnstableDirection);
    }
    if m_infinity == m_zero {
        return Err(Error::EqualMorseIndices(m_zero));
    }

    let zero = Field::zeros(grid);
    let source = match census.locate(&zero, opts.conn_rel) {
        Some(i) => i,
        None => {
            let e = newton_solve(&zero, model, op, &opts.newton)?.equilibrium;
            census.equilibria.push(e);
            census.equilibria.len() - 1
        }
    };

    let monitors = Monitors {
        stop_at_equilibrium: true,
        snapshot_stride: opts.snapshot_stride,
        ..Monitors::default()
    };
    let seeds: Vec<(usize, i8)> = (0..m_zero).flat_map(|i| [(i, 1), (i, -1)]).collect();
    let directions = at_zero.unstable_directions();
    let runs = seeds
        .par_iter()
        .map(|&(i, s)| {
            let u0 = directions[i].scaled(f64::from(s) * opts.eps_seed);
            evolve(&u0, model, op, opts.t_max, opts.dt, &monitors)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    let mut rejections = Vec::new();
    for (&(direction, sign), rec) in seeds.iter().zip(runs) {
        let reject = |reason: String| Rejection {
            direction,
            sign,
            reason,
        };
        let target = match classify_limit(&rec, census, opts.conn_rel, model, op, &opts.newton)? {
            LimitClass::Nonconvergent => {
                rejections.push(reject(format!(
                    "no convergence by t = {} (status {:?})",
                    rec.final_time(),
                    rec.status
                )));
                continue;
            }
            LimitClass::Target(t) if t == source => {
                rejections.push(reject("returned to the trivial equilibrium".into()));
                continue;
            }
            LimitClass::Target(t) => t,
        };
        let src = &census.equilibria[source];
        let tgt = &census.equilibria[target];
        let energy_drop = src.energy - tgt.energy;
        let closeness = rec.final_state.distance_h1(&tgt.u_star);
        let conn_tol = opts.conn_rel * (1.0 + tgt.h1_norm);
        let rise = dissipation_check(&rec);
        if energy_drop <= 0.0 || energy_drop.is_nan() {
            rejections.push(reject(format!(
                "energy drop {energy_drop:e} is not positive"
            )));
        } else if closeness > conn_tol {
            rejections.push(reject(format!(
                "terminal distance {closeness:e} exceeds {conn_tol:e}"
            )));
        } else if rise > energy_tolerance(rec.initial_energy()) {
            rejections.push(reject(format!("energy rose by {rise:e} in one step")));
        } else {
            records.push(ConnectionRecord {
                source,
                target,
                direction,
                sign,
                energy_drop,
                closeness,
                trajectory: rec,
            });
        }
    }
    Ok(ConnectionSearch {
        m_infinity,
        m_zero,
        records,
        rejections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::{find_equilibria, SeedStrategy};
    use crate::grid::Grid;
    use crate::model::PotentialSpec;

    fn census_for(m: &NonlinearityModel, op: &TridiagOperator) -> Census {
        let s = SeedStrategy {
            random_count: 0,
            relax_time: 0.0,
            ..SeedStrategy::default()
        };
        find_equilibria(m, op, &s).unwrap()
    }

    #[test]
    fn preconditions_are_enforced() {
        let g = Grid::line(12.0, 199).unwrap();
        let op = TridiagOperator::assemble_laplacian(&g);
        let flat = NonlinearityModel::linear_decay(1.0).unwrap();
        let mut c = census_for(&flat, &op);
        assert_eq!(
            heteroclinic_search(&flat, &op, &mut c, &ConnectOptions::default()).unwrap_err(),
            Error::NoUnstableDirection
        );
        let p = PotentialSpec::gaussian(1.0, 4.0, 1.0);
        let same = NonlinearityModel::switch(p, p, 1.0).unwrap();
        assert_eq!(
            heteroclinic_search(&same, &op, &mut c, &ConnectOptions::default()).unwrap_err(),
            Error::EqualMorseIndices(1)
        );
    }

    #[test]
    fn both_branches_of_the_unstable_manifold_connect() {
        let g = Grid::line(12.0, 239).unwrap();
        let op = TridiagOperator::assemble_laplacian(&g);
        let m = NonlinearityModel::switch(
            PotentialSpec::constant(1.0),
            PotentialSpec::gaussian(1.0, 4.0, 1.0),
            1.0,
        )
        .unwrap();
        let mut census = census_for(&m, &op);
        let opts = ConnectOptions {
            dt: 0.02,
            t_max: 200.0,
            ..ConnectOptions::default()
        };
        let search = heteroclinic_search(&m, &op, &mut census, &opts).unwrap();
        assert_eq!((search.m_infinity, search.m_zero), (0, 1));
        assert_eq!(search.records.len(), 2, "{:?}", search.rejections);
        let (a, b) = (&search.records[0], &search.records[1]);
        assert_ne!(a.target, b.target);
        for r in &search.records {
            assert!(r.energy_drop > 0.0);
            assert_eq!(census.equilibria[r.target].morse_index, 0);
            assert!(r.closeness <= 1e-6 * (1.0 + census.equilibria[r.target].h1_norm));
        }
    }
}

//! Command-line orchestration: `conley-flow <command> --config <toml> --out <dir>`.
//!
//! Exit status is 0 when every check of the command passes, 2 when the
//! configuration is falsified by a check, 1 on errors.

pub mod config;
pub mod report;

use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::connect::{heteroclinic_search, ConnectOptions};
use crate::equilibria::{
    find_equilibria, homotopy_bound_scan, Census, NewtonOptions, ScanOptions, SeedStrategy,
};
use crate::error::Error;
use crate::grid::{Field, Grid};
use crate::model::{
    check_asymptotic_slopes, check_dissipativity, linspace, sampled_slope_sup, Bump, Forced,
    Nonlinearity, NonlinearityModel,
};
use crate::operator::TridiagOperator;
use crate::semiflow::{
    admissibility_experiment, convergence_experiment, dissipation_check, energy_tolerance, evolve,
    tail_bound_check, AdmissibilitySetup, Monitors, Status,
};
use crate::spectrum::{default_tolerance, limiting_operator, nonresonance_report, SpectralReport};
use config::{ExperimentConfig, LoadedConfig};
use report::{header, Artifacts, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Spectrum,
    Evolve,
    Equilibria,
    Homotopy,
    Heteroclinic,
    Admissibility,
    Convergence,
    Certify,
}

#[derive(Debug, Parser)]
#[command(version, about = "Semilinear parabolic semiflows on truncated grids")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// `dotted.key=value`, value parsed as TOML.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Falsified,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Pass => 0,
            Outcome::Falsified => 2,
        }
    }
}

/// Loads the configuration, runs `command` and writes its artifacts to `out`.
pub fn run(
    command: Command,
    config: &Path,
    out: &Path,
    overrides: &[String],
) -> anyhow::Result<Outcome> {
    let loaded = config::load(config, overrides)?;
    let artifacts = Artifacts::new(out, &loaded.hash)?;
    let report = execute(command, &loaded, &artifacts)?;
    artifacts.write_summary(&report)?;
    for n in &report.notes {
        println!("{n}");
    }
    for c in &report.checks {
        println!(
            "{}  {}  {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    Ok(if report.passed() {
        Outcome::Pass
    } else {
        Outcome::Falsified
    })
}

struct Setup {
    grid: Grid,
    op: TridiagOperator,
    model: NonlinearityModel,
    tol: f64,
}

impl Setup {
    fn new(cfg: &ExperimentConfig) -> anyhow::Result<Self> {
        let grid = cfg.grid()?;
        Ok(Self {
            op: TridiagOperator::assemble_laplacian(&grid),
            model: cfg.model,
            tol: cfg
                .run
                .nonresonance_tol
                .unwrap_or_else(|| default_tolerance(&grid)),
            grid,
        })
    }

    fn spectra(&self) -> anyhow::Result<(SpectralReport, SpectralReport)> {
        let at_inf = nonresonance_report(
            &limiting_operator(&self.grid, &self.model.alpha),
            self.model.alpha.base_level,
            self.tol,
            false,
        )?;
        let at_zero = nonresonance_report(
            &limiting_operator(&self.grid, &self.model.gamma),
            self.model.gamma.base_level,
            self.tol,
            false,
        )?;
        Ok((at_inf, at_zero))
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn random_fields(grid: Grid, seed: u64, count: usize, amplitude: f64, bumps: usize) -> Vec<Field> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| Field::random_smooth(grid, &mut rng, amplitude, bumps))
        .collect()
}

fn execute(command: Command, loaded: &LoadedConfig, art: &Artifacts) -> anyhow::Result<Report> {
    let cfg = &loaded.config;
    let s = Setup::new(cfg)?;
    match command {
        Command::Spectrum => spectrum(&s, art),
        Command::Evolve => evolve_cmd(cfg, &s, art),
        Command::Equilibria => equilibria_cmd(cfg, &s, art).map(|(r, _)| r),
        Command::Homotopy => homotopy_cmd(cfg, &s, art),
        Command::Heteroclinic => heteroclinic_cmd(cfg, &s, art),
        Command::Admissibility => admissibility_cmd(cfg, &s, art),
        Command::Convergence => convergence_cmd(cfg, &s, art),
        Command::Certify => certify_cmd(cfg, &s),
    }
}

fn spectral_checks(r: &mut Report, at_inf: &SpectralReport, at_zero: &SpectralReport) {
    r.check(
        "non-resonance at infinity",
        at_inf.certified,
        format!("gap {} vs tol {}", at_inf.kernel_gap, at_inf.tolerance),
    );
    r.check(
        "non-resonance at zero",
        at_zero.certified,
        format!("gap {} vs tol {}", at_zero.kernel_gap, at_zero.tolerance),
    );
}

fn spectrum(s: &Setup, art: &Artifacts) -> anyhow::Result<Report> {
    let (at_inf, at_zero) = s.spectra()?;
    let mut rows = Vec::new();
    for (name, rep) in [("infinity", &at_inf), ("zero", &at_zero)] {
        for (i, l) in rep.eigenvalues_below_cutoff.iter().enumerate() {
            rows.push(vec![name.to_string(), i.to_string(), num(*l)]);
        }
    }
    art.csv(
        "spectrum.csv",
        &header(&["operator", "index", "eigenvalue"]),
        rows,
    )?;
    let mut r = Report::new("spectrum");
    let certified = at_inf.certified && at_zero.certified;
    r.note(format!(
        "m={} m'={} {}",
        at_inf.count_negative,
        at_zero.count_negative,
        if certified {
            "certified"
        } else {
            "uncertified"
        }
    ));
    spectral_checks(&mut r, &at_inf, &at_zero);
    Ok(r)
}

fn evolve_cmd(cfg: &ExperimentConfig, s: &Setup, art: &Artifacts) -> anyhow::Result<Report> {
    let ev = &cfg.evolve;
    let u0 = random_fields(s.grid, cfg.run.seed, 1, ev.amplitude, ev.bumps).remove(0);
    let monitors = Monitors {
        k_list: cfg.run.k_list.clone(),
        r_cap: cfg.run.r_cap,
        snapshot_stride: ev.snapshot_stride,
        ..Monitors::default()
    };
    let rec = evolve(&u0, &s.model, &s.op, cfg.run.t_final, cfg.run.dt, &monitors)?;
    let mut cols = header(&["t", "l2", "h1", "V", "dV_proxy"]);
    cols.extend(cfg.run.k_list.iter().map(|k| format!("tail_{k}")));
    art.csv(
        "trajectory.csv",
        &cols,
        rec.rows.iter().map(|row| {
            let mut v = vec![
                num(row.t),
                num(row.l2),
                num(row.h1),
                num(row.energy),
                num(row.dissipation),
            ];
            v.extend(row.tails.iter().map(|t| num(*t)));
            v
        }),
    )?;

    let mut r = Report::new("evolve");
    r.note(format!(
        "steps={} t_final={} status={:?} sup_h1={}",
        rec.steps(),
        rec.final_time(),
        rec.status,
        rec.sup_h1()
    ));
    let rise = dissipation_check(&rec);
    let tol = energy_tolerance(rec.initial_energy());
    r.check(
        "energy nonincreasing",
        rise <= tol,
        format!("max increase {rise:e} vs {tol:e}"),
    );
    r.check(
        "no blow-up",
        rec.status != Status::BlowupGuard,
        format!("r_cap {}", cfg.run.r_cap),
    );
    if !cfg.run.k_list.is_empty() {
        match tail_bound_check(
            &rec,
            &s.model,
            &s.model.dissipation,
            rec.sup_h1(),
            &cfg.run.k_list,
        ) {
            Ok(margins) => {
                for m in margins {
                    r.check(
                        &format!("tail bound k={}", m.k),
                        m.margin <= 0.0,
                        format!("margin {:e}, alpha_k {:e}", m.margin, m.alpha_k),
                    );
                }
            }
            Err(e @ Error::NotDissipative(_)) => r.check("tail bound", false, e.to_string()),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(r)
}

fn seed_strategy(cfg: &ExperimentConfig) -> SeedStrategy {
    let e = &cfg.equilibria;
    SeedStrategy {
        eigen_amplitudes: e.eigen_amplitudes.clone(),
        max_directions: e.max_directions,
        random_count: e.random_count,
        random_amplitude: e.random_amplitude,
        random_bumps: e.random_bumps,
        rng_seed: cfg.run.seed,
        relax_time: e.relax_time,
        dt: cfg.run.dt,
        verify_time: e.verify_time,
        dedup_rel: e.dedup_rel,
        newton: NewtonOptions {
            trivial_threshold: e.trivial_threshold,
            hyperbolic_tol: cfg.run.nonresonance_tol,
            ..NewtonOptions::default()
        },
        ..SeedStrategy::default()
    }
}

fn write_census(census: &Census, art: &Artifacts) -> anyhow::Result<()> {
    art.csv(
        "equilibria.csv",
        &header(&[
            "id",
            "h1_norm",
            "energy",
            "morse_index",
            "residual",
            "trivial",
            "hyperbolic",
        ]),
        census.equilibria.iter().enumerate().map(|(i, e)| {
            vec![
                i.to_string(),
                num(e.h1_norm),
                num(e.energy),
                e.morse_index.to_string(),
                num(e.residual),
                e.trivial.to_string(),
                e.hyperbolic.to_string(),
            ]
        }),
    )?;
    Ok(())
}

fn equilibria_cmd(
    cfg: &ExperimentConfig,
    s: &Setup,
    art: &Artifacts,
) -> anyhow::Result<(Report, Census)> {
    let census = find_equilibria(&s.model, &s.op, &seed_strategy(cfg))?;
    write_census(&census, art)?;
    let mut r = Report::new("equilibria");
    r.note(format!(
        "equilibria={} seeds={} newton_failures={} rejected={}",
        census.equilibria.len(),
        census.seeds_tried,
        census.newton_failures,
        census.rejected_unstationary
    ));
    r.check(
        "trivial equilibrium found",
        census.trivial_index().is_some(),
        format!("{} entries", census.equilibria.len()),
    );
    Ok((r, census))
}

fn homotopy_cmd(cfg: &ExperimentConfig, s: &Setup, art: &Artifacts) -> anyhow::Result<Report> {
    let h = &cfg.homotopy;
    let probes = random_fields(
        s.grid,
        cfg.run.seed,
        h.probes,
        h.probe_amplitude,
        cfg.evolve.bumps,
    );
    let opts = ScanOptions {
        t_final: h.t_final,
        dt: cfg.run.dt,
        r_cap: cfg.run.r_cap,
        eps_seed: h.eps_seed,
    };
    let mut r = Report::new("homotopy");
    let scan = match homotopy_bound_scan(&s.model, &s.op, &h.lambdas, &probes, &opts) {
        Err(e @ Error::ResonantAtInfinity { .. }) => {
            r.check("non-resonance at infinity", false, e.to_string());
            return Ok(r);
        }
        other => other?,
    };
    art.csv(
        "homotopy.csv",
        &header(&[
            "lambda",
            "sup_h1_probes",
            "sup_h1_unstable",
            "unstable_directions",
            "blowups",
            "l2_monotone",
            "final_l2_ratio",
        ]),
        scan.rows.iter().map(|row| {
            vec![
                num(row.lambda),
                num(row.sup_h1_probes),
                row.sup_h1_unstable.map(num).unwrap_or_default(),
                row.unstable_directions.to_string(),
                row.blowups.to_string(),
                row.l2_monotone.to_string(),
                num(row.final_l2_ratio),
            ]
        }),
    )?;
    r.note(format!("R_observed={}", scan.r_observed));
    r.check(
        "bounded",
        scan.r_observed.is_finite(),
        format!("R_observed {}", scan.r_observed),
    );
    r.check(
        "no blow-up",
        scan.total_blowups() == 0,
        format!("{} runs hit r_cap", scan.total_blowups()),
    );
    if let Some(row) = scan.rows.iter().find(|row| row.lambda == 0.0) {
        r.check(
            "monotone decay at lambda=0",
            row.l2_monotone && row.final_l2_ratio < 1.0,
            format!("final/initial l2 {}", row.final_l2_ratio),
        );
    }
    Ok(r)
}

fn heteroclinic_cmd(cfg: &ExperimentConfig, s: &Setup, art: &Artifacts) -> anyhow::Result<Report> {
    let (mut r, mut census) = equilibria_cmd(cfg, s, art)?;
    r.command = "heteroclinic".into();
    let hc = &cfg.heteroclinic;
    let opts = ConnectOptions {
        eps_seed: hc.eps_seed,
        t_max: hc.t_max,
        dt: cfg.run.dt,
        conn_rel: hc.conn_rel,
        nonresonance_tol: Some(s.tol),
        snapshot_stride: hc.snapshot_stride,
        newton: seed_strategy(cfg).newton,
    };
    let search = match heteroclinic_search(&s.model, &s.op, &mut census, &opts) {
        Err(
            e @ (Error::NoUnstableDirection
            | Error::EqualMorseIndices(_)
            | Error::ResonantAtZero { .. }
            | Error::ResonantAtInfinity { .. }),
        ) => {
            r.check("preconditions", false, e.to_string());
            return Ok(r);
        }
        other => other?,
    };
    write_census(&census, art)?;
    art.csv(
        "connections.csv",
        &header(&[
            "source",
            "target",
            "direction",
            "sign",
            "energy_drop",
            "closeness",
            "steps",
        ]),
        search.records.iter().map(|c| {
            vec![
                c.source.to_string(),
                c.target.to_string(),
                c.direction.to_string(),
                c.sign.to_string(),
                num(c.energy_drop),
                num(c.closeness),
                c.trajectory.steps().to_string(),
            ]
        }),
    )?;
    if hc.trajectory_csv {
        for (i, c) in search.records.iter().enumerate() {
            art.csv(
                &format!("connection_{i}.csv"),
                &header(&["t", "l2", "h1", "V", "dV_proxy"]),
                c.trajectory.rows.iter().map(|row| {
                    vec![
                        num(row.t),
                        num(row.l2),
                        num(row.h1),
                        num(row.energy),
                        num(row.dissipation),
                    ]
                }),
            )?;
        }
    }
    r.note(format!("m={} m'={}", search.m_infinity, search.m_zero));
    for rej in &search.rejections {
        r.note(format!(
            "rejected direction {} sign {}: {}",
            rej.direction, rej.sign, rej.reason
        ));
    }
    r.check(
        "connection from 0",
        search.confirms_connection(),
        format!("{} records", search.records.len()),
    );
    Ok(r)
}

fn admissibility_cmd(cfg: &ExperimentConfig, s: &Setup, art: &Artifacts) -> anyhow::Result<Report> {
    let a = &cfg.admissibility;
    let u0s = random_fields(s.grid, cfg.run.seed, a.count, a.amplitude, cfg.evolve.bumps);
    let durations: Vec<f64> = (1..=a.count).map(|j| j as f64).collect();
    let radius = a
        .radius
        .unwrap_or_else(|| 2.0 * u0s.iter().fold(0.0f64, |m, u| m.max(u.h1_norm())));
    let setup = AdmissibilitySetup {
        radius,
        k: a.k.unwrap_or(0.5 * s.grid.half_width()),
        tau: a.tau,
        dt: cfg.run.dt,
        window: a.window,
    };
    let mut r = Report::new("admissibility");
    let rep = match admissibility_experiment(
        &u0s,
        &durations,
        &s.model,
        &s.model.dissipation,
        &s.op,
        &setup,
    ) {
        Err(e @ Error::NotDissipative(_)) => {
            r.check("dissipativity", false, e.to_string());
            return Ok(r);
        }
        other => other?,
    };
    art.csv(
        "endpoints.csv",
        &header(&["index", "duration", "included", "sup_h1", "tail", "bound"]),
        rep.rows.iter().map(|row| {
            vec![
                row.index.to_string(),
                num(row.duration),
                row.included.to_string(),
                num(row.sup_h1),
                num(row.tail),
                num(row.bound),
            ]
        }),
    )?;
    r.note(format!(
        "radius={} k={} alpha_k={} endpoint_diameter={} localized_diameter={}",
        radius, setup.k, rep.alpha_k, rep.endpoint_diameter, rep.localized_diameter
    ));
    r.check(
        "durations diverge",
        rep.durations_diverge,
        format!("tau {}", setup.tau),
    );
    r.check(
        "endpoint tails within bound",
        rep.all_within_bound(),
        format!(
            "{} of {} included",
            rep.rows.iter().filter(|x| x.included).count(),
            rep.rows.len()
        ),
    );
    Ok(r)
}

fn convergence_cmd(cfg: &ExperimentConfig, s: &Setup, art: &Artifacts) -> anyhow::Result<Report> {
    let c = &cfg.convergence;
    let u0 = random_fields(s.grid, cfg.run.seed, 1, c.amplitude, cfg.evolve.bumps).remove(0);
    let family: Vec<(Forced<NonlinearityModel>, Field)> = c
        .members
        .iter()
        .map(|&j| {
            let g = Forced {
                base: s.model,
                forcing: Bump::Gaussian {
                    amplitude: 1.0 / f64::from(j),
                    width: 1.0,
                },
            };
            (g, u0.clone())
        })
        .collect();
    let rows = convergence_experiment(
        &s.op, &s.model, &u0, &family, c.delta, c.t_final, cfg.run.dt,
    )?;
    art.csv(
        "convergence.csv",
        &header(&[
            "j",
            "initial_l2_distance",
            "initial_h1_distance",
            "sup_h1_error",
        ]),
        rows.iter().map(|row| {
            vec![
                c.members[row.index].to_string(),
                num(row.initial_l2_distance),
                num(row.initial_h1_distance),
                num(row.sup_h1_error),
            ]
        }),
    )?;
    let errs: Vec<f64> = rows.iter().map(|x| x.sup_h1_error).collect();
    let mut r = Report::new("convergence");
    if let (Some(&first), Some(&last)) = (errs.first(), errs.last()) {
        r.check(
            "error reduced tenfold",
            last < first / 10.0,
            format!("{first:e} -> {last:e}"),
        );
    }
    let monotone = errs.windows(2).all(|w| w[1] <= 1.1 * w[0]);
    r.check(
        "monotone up to 10% jitter",
        monotone,
        format!("{} members", errs.len()),
    );
    Ok(r)
}

fn certify_cmd(cfg: &ExperimentConfig, s: &Setup) -> anyhow::Result<Report> {
    let m = &s.model;
    let c = &cfg.certify;
    let xs: Vec<f64> = s.grid.nodes().collect();
    let us = linspace(-c.u_max, c.u_max, 201);
    let mut r = Report::new("certify");

    let at_origin = xs.iter().fold(0.0f64, |a, &x| a.max(m.value(x, 0.0).abs()));
    let sampled = sampled_slope_sup(m, &xs, &us);
    let bound = m.slope_bound();
    r.check(
        "growth: F(x,0)=0, bounded slope",
        at_origin == 0.0 && sampled <= bound,
        format!("max|F(x,0)| {at_origin:e}, sampled slope {sampled} <= bound {bound}"),
    );

    let worst = check_dissipativity(m, &m.dissipation, &xs, &us);
    let dtol = 1e-10 * (1.0 + c.u_max * c.u_max);
    r.check(
        "dissipativity",
        worst <= dtol,
        format!("max of F u + nu u^2 - b|u|^q - c = {worst:e}"),
    );

    let dev = check_asymptotic_slopes(
        m,
        &xs,
        c.u_large * m.switch_scale,
        c.u_small * m.switch_scale,
    )?;
    r.check(
        "asymptotically linear",
        dev.at_infinity <= c.asymptotic_tol,
        format!(
            "sup|F/u - alpha| {:e} at |u| = {}",
            dev.at_infinity,
            c.u_large * m.switch_scale
        ),
    );
    r.check(
        "slope at zero",
        dev.at_zero <= 1e-12 && dev.secant_at_zero <= c.asymptotic_tol,
        format!(
            "derivative {:e}, secant {:e}",
            dev.at_zero, dev.secant_at_zero
        ),
    );

    let (at_inf, at_zero) = s.spectra()?;
    r.note(format!(
        "m={} m'={}",
        at_inf.count_negative, at_zero.count_negative
    ));
    spectral_checks(&mut r, &at_inf, &at_zero);
    Ok(r)
}

//! TOML experiment configuration: loading, overrides, validation, hashing.

use std::path::Path;

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::grid::{DimMode, Grid};
use crate::model::NonlinearityModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub half_width: f64,
    pub n_interior: usize,
    #[serde(default = "line_mode")]
    pub mode: DimMode,
}

fn line_mode() -> DimMode {
    DimMode::Line
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dt: f64,
    pub t_final: f64,
    pub r_cap: f64,
    pub k_list: Vec<f64>,
    pub seed: u64,
    /// Non-resonance threshold; defaults to `10 h²`.
    pub nonresonance_tol: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_final: 20.0,
            r_cap: 1e4,
            k_list: Vec::new(),
            seed: 1,
            nonresonance_tol: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    pub amplitude: f64,
    pub bumps: usize,
    pub snapshot_stride: usize,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            amplitude: 2.0,
            bumps: 4,
            snapshot_stride: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquilibriaConfig {
    pub eigen_amplitudes: Vec<f64>,
    pub max_directions: usize,
    pub random_count: usize,
    pub random_amplitude: f64,
    pub random_bumps: usize,
    pub relax_time: f64,
    pub verify_time: f64,
    pub dedup_rel: f64,
    pub trivial_threshold: f64,
}

impl Default for EquilibriaConfig {
    fn default() -> Self {
        let s = crate::equilibria::SeedStrategy::default();
        Self {
            eigen_amplitudes: s.eigen_amplitudes,
            max_directions: s.max_directions,
            random_count: s.random_count,
            random_amplitude: s.random_amplitude,
            random_bumps: s.random_bumps,
            relax_time: s.relax_time,
            verify_time: s.verify_time,
            dedup_rel: s.dedup_rel,
            trivial_threshold: s.newton.trivial_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomotopyConfig {
    pub lambdas: Vec<f64>,
    pub probes: usize,
    pub probe_amplitude: f64,
    pub t_final: f64,
    pub eps_seed: f64,
}

impl Default for HomotopyConfig {
    fn default() -> Self {
        Self {
            lambdas: (0..=10).map(|i| f64::from(i) / 10.0).collect(),
            probes: 4,
            probe_amplitude: 3.0,
            t_final: 30.0,
            eps_seed: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeteroclinicConfig {
    pub eps_seed: f64,
    pub t_max: f64,
    pub conn_rel: f64,
    pub snapshot_stride: usize,
    pub trajectory_csv: bool,
}

impl Default for HeteroclinicConfig {
    fn default() -> Self {
        let c = crate::connect::ConnectOptions::default();
        Self {
            eps_seed: c.eps_seed,
            t_max: c.t_max,
            conn_rel: c.conn_rel,
            snapshot_stride: c.snapshot_stride,
            trajectory_csv: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmissibilityConfig {
    pub count: usize,
    pub amplitude: f64,
    /// Defaults to `L/2`.
    pub k: Option<f64>,
    pub tau: f64,
    pub window: usize,
    /// Defaults to the largest initial `H¹` norm.
    pub radius: Option<f64>,
}

impl Default for AdmissibilityConfig {
    fn default() -> Self {
        Self {
            count: 40,
            amplitude: 1.0,
            k: None,
            tau: 0.0,
            window: 10,
            radius: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    /// Member `j` uses forcing `(1/j) e^{-x²}`.
    pub members: Vec<u32>,
    pub delta: f64,
    pub t_final: f64,
    pub amplitude: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            members: vec![1, 2, 4, 8, 16, 32, 64],
            delta: 0.5,
            t_final: 5.0,
            amplitude: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyConfig {
    /// Amplitude range of the dissipativity and slope lattices.
    pub u_max: f64,
    /// Evaluation amplitude for the slope at infinity, in units of the switch scale.
    pub u_large: f64,
    /// Evaluation amplitude for the secant at zero, in units of the switch scale.
    pub u_small: f64,
    pub asymptotic_tol: f64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            u_max: 100.0,
            u_large: 1e4,
            u_small: 1e-4,
            asymptotic_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub model: NonlinearityModel,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub evolve: EvolveConfig,
    #[serde(default)]
    pub equilibria: EquilibriaConfig,
    #[serde(default)]
    pub homotopy: HomotopyConfig,
    #[serde(default)]
    pub heteroclinic: HeteroclinicConfig,
    #[serde(default)]
    pub admissibility: AdmissibilityConfig,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
    #[serde(default)]
    pub certify: CertifyConfig,
}

/// A validated configuration with the hash of its canonical form.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub hash: String,
}

impl ExperimentConfig {
    pub fn grid(&self) -> anyhow::Result<Grid> {
        Ok(Grid::new(
            self.grid.half_width,
            self.grid.n_interior,
            self.grid.mode,
        )?)
    }

    /// Every violated precondition, one message per field.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        fn positive(out: &mut Vec<String>, name: &str, v: f64) {
            if !(v.is_finite() && v > 0.0) {
                out.push(format!("{name}: must be positive and finite, got {v}"));
            }
        }
        positive(&mut out, "run.dt", self.run.dt);
        positive(&mut out, "run.t_final", self.run.t_final);
        positive(&mut out, "run.r_cap", self.run.r_cap);
        positive(&mut out, "homotopy.t_final", self.homotopy.t_final);
        positive(&mut out, "homotopy.eps_seed", self.homotopy.eps_seed);
        positive(
            &mut out,
            "heteroclinic.eps_seed",
            self.heteroclinic.eps_seed,
        );
        positive(&mut out, "heteroclinic.t_max", self.heteroclinic.t_max);
        positive(
            &mut out,
            "heteroclinic.conn_rel",
            self.heteroclinic.conn_rel,
        );
        positive(
            &mut out,
            "equilibria.verify_time",
            self.equilibria.verify_time,
        );
        positive(&mut out, "equilibria.dedup_rel", self.equilibria.dedup_rel);
        positive(
            &mut out,
            "equilibria.trivial_threshold",
            self.equilibria.trivial_threshold,
        );
        positive(&mut out, "convergence.delta", self.convergence.delta);
        positive(&mut out, "certify.u_max", self.certify.u_max);
        positive(&mut out, "certify.u_small", self.certify.u_small);
        positive(
            &mut out,
            "certify.asymptotic_tol",
            self.certify.asymptotic_tol,
        );
        if let Some(t) = self.run.nonresonance_tol {
            positive(&mut out, "run.nonresonance_tol", t);
        }
        if let Some(k) = self.admissibility.k {
            positive(&mut out, "admissibility.k", k);
        }
        if let Some(r) = self.admissibility.radius {
            positive(&mut out, "admissibility.radius", r);
        }
        if let Err(e) = self.grid() {
            out.push(format!("grid: {e}"));
        }
        if let Err(e) = self.model.validate() {
            out.push(format!("model: {e}"));
        }
        for (i, &k) in self.run.k_list.iter().enumerate() {
            if !(k.is_finite() && k > 0.0) {
                out.push(format!("run.k_list[{i}]: must be positive, got {k}"));
            }
        }
        if self.equilibria.relax_time < 0.0 || self.equilibria.relax_time.is_nan() {
            out.push(format!(
                "equilibria.relax_time: must be nonnegative, got {}",
                self.equilibria.relax_time
            ));
        }
        if self.convergence.t_final <= self.convergence.delta {
            out.push(format!(
                "convergence.t_final: must exceed delta = {}, got {}",
                self.convergence.delta, self.convergence.t_final
            ));
        }
        if self.convergence.members.contains(&0) {
            out.push("convergence.members: indices must be at least 1".into());
        }
        if self.admissibility.tau < 0.0 {
            out.push(format!(
                "admissibility.tau: must be nonnegative, got {}",
                self.admissibility.tau
            ));
        }
        if self.admissibility.count == 0 {
            out.push("admissibility.count: must be at least 1".into());
        }
        if self.certify.u_large <= self.certify.u_small {
            out.push("certify.u_large: must exceed certify.u_small".into());
        }
        for (i, &l) in self.homotopy.lambdas.iter().enumerate() {
            if !(0.0..=1.0).contains(&l) {
                out.push(format!(
                    "homotopy.lambdas[{i}]: must lie in [0, 1], got {l}"
                ));
            }
        }
        out
    }
}

/// Parses `key=value` and writes `value` at the dotted path `key`; values are
/// read as TOML and fall back to bare strings.
pub fn apply_override(table: &mut toml::Table, item: &str) -> anyhow::Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{item}` is not of the form key=value"))?;
    let value = match toml::from_str::<toml::Table>(&format!("v = {}", raw.trim())) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut cursor = table;
    for p in path {
        cursor = cursor
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| anyhow!("override `{key}`: `{p}` is not a table"))?;
    }
    cursor.insert(last.to_string(), value);
    Ok(())
}

/// Reads a configuration, applies overrides and hashes the validated result.
pub fn load(path: &Path, overrides: &[String]) -> anyhow::Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    parse(&text, overrides)
}

pub fn parse(text: &str, overrides: &[String]) -> anyhow::Result<LoadedConfig> {
    let mut table: toml::Table = toml::from_str(text).context("parsing config")?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let config: ExperimentConfig = table.try_into().context("config schema")?;
    let violations = config.violations();
    if !violations.is_empty() {
        bail!("invalid configuration:\n  {}", violations.join("\n  "));
    }
    let canonical = toml::to_string(&config).context("serializing config")?;
    let digest = Sha256::digest(canonical.as_bytes());
    let hash = digest.iter().map(|b| format!("{b:02x}")).collect();
    Ok(LoadedConfig { config, hash })
}

//! Run configuration: a TOML file, `section.key=value` overrides and the
//! `MARANGONI_OUT` output root.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use marangoni_core::continuation::ContinuationConfig;
use marangoni_core::linstab::PerturbationClass;
use marangoni_core::{make_lattice, Lattice, LatticeKind};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Environment variable holding the root directory for relative outputs.
pub const OUTPUT_ROOT_VAR: &str = "MARANGONI_OUT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seed for randomized initial data.
    pub seed: u64,
    pub lattice: LatticeSection,
    pub params: ParamsSection,
    pub continuation: ContinuationSection,
    pub stability: StabilitySection,
    pub evolve: EvolveSection,
    pub dispersion: DispersionSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            lattice: LatticeSection::default(),
            params: ParamsSection::default(),
            continuation: ContinuationSection::default(),
            stability: StabilitySection::default(),
            evolve: EvolveSection::default(),
            dispersion: DispersionSection::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeSection {
    pub kind: LatticeKind,
    pub k0: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

impl Default for LatticeSection {
    fn default() -> Self {
        Self {
            kind: LatticeKind::Square,
            k0: 1.0,
            n: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsSection {
    pub g: f64,
    #[serde(rename = "M", skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    /// Marangoni numbers for dispersion scans.
    #[serde(rename = "M_list", skip_serializing_if = "Option::is_none")]
    pub m_list: Option<Vec<f64>>,
    /// `[M_start, M_end]` for the flat-branch scan.
    #[serde(rename = "M_range", skip_serializing_if = "Option::is_none")]
    pub m_range: Option<[f64; 2]>,
}

impl Default for ParamsSection {
    fn default() -> Self {
        Self {
            g: 1.0,
            m: None,
            m_list: None,
            m_range: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Both,
}

impl Direction {
    pub fn signs(self) -> Vec<i32> {
        match self {
            Direction::Up => vec![1],
            Direction::Down => vec![-1],
            Direction::Both => vec![1, -1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuationSection {
    /// Bifurcation at `M*(n k0)`: the cell fits `n` periods.
    pub harmonic: u32,
    pub direction: Direction,
    /// Kernel amplitude of the first point of each primary branch.
    pub s0: f64,
    pub ds: f64,
    pub ds_min: f64,
    pub max_steps: usize,
    pub guard: f64,
    pub tol: f64,
    pub max_newton: usize,
    pub weight_v: f64,
    pub weight_m: f64,
    pub trivial_ds: f64,
    pub detect_bifurcations: bool,
    pub nodal_checks: bool,
    /// Try branch switching at bifurcation candidates of the first branch.
    pub secondary: bool,
    /// Number of candidates to try when `secondary` is set.
    pub max_secondary: usize,
}

impl Default for ContinuationSection {
    fn default() -> Self {
        let c = ContinuationConfig::default();
        Self {
            harmonic: 1,
            direction: Direction::Both,
            s0: 0.01,
            ds: c.ds,
            ds_min: c.ds_min,
            max_steps: c.max_steps,
            guard: c.guard,
            tol: c.tol,
            max_newton: c.max_newton,
            weight_v: c.weight_v,
            weight_m: c.weight_m,
            trivial_ds: ContinuationConfig::trivial().ds,
            detect_bifurcations: true,
            nodal_checks: true,
            secondary: false,
            max_secondary: 6,
        }
    }
}

impl ContinuationSection {
    pub fn branch_config(&self) -> ContinuationConfig {
        ContinuationConfig {
            ds: self.ds,
            ds_max: self.ds,
            ds_min: self.ds_min,
            max_steps: self.max_steps,
            guard: self.guard,
            tol: self.tol,
            max_newton: self.max_newton,
            weight_v: self.weight_v,
            weight_m: self.weight_m,
            detect_bifurcations: self.detect_bifurcations,
            nodal_checks: self.nodal_checks,
        }
    }

    pub fn trivial_config(&self) -> ContinuationConfig {
        ContinuationConfig {
            ds: self.trivial_ds,
            ds_max: self.trivial_ds,
            detect_bifurcations: true,
            nodal_checks: false,
            ..self.branch_config()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilitySection {
    /// Perturbation classes: `coperiodic`, `superharmonic:m`, `subharmonic:m`.
    pub classes: Vec<String>,
    pub symmetric: bool,
}

impl Default for StabilitySection {
    fn default() -> Self {
        Self {
            classes: vec!["coperiodic".into(), "superharmonic:2".into(), "subharmonic:2".into()],
            symmetric: true,
        }
    }
}

impl StabilitySection {
    pub fn parsed_classes(&self) -> anyhow::Result<Vec<PerturbationClass>> {
        self.classes.iter().map(|c| parse_class(c)).collect()
    }
}

pub fn parse_class(s: &str) -> anyhow::Result<PerturbationClass> {
    let s = s.trim().to_ascii_lowercase();
    let (name, arg) = match s.split_once(':') {
        Some((a, b)) => (a.to_string(), Some(b.to_string())),
        None => (s.clone(), None),
    };
    let factor = || -> anyhow::Result<u32> {
        let m: u32 = arg.as_deref().unwrap_or("2").parse().context("perturbation factor")?;
        if m < 2 {
            bail!("perturbation factor must be at least 2");
        }
        Ok(m)
    };
    Ok(match name.as_str() {
        "coperiodic" | "co-periodic" => PerturbationClass::CoPeriodic,
        "superharmonic" => PerturbationClass::Superharmonic(factor()?),
        "subharmonic" => PerturbationClass::Subharmonic(factor()?),
        other => bail!("unknown perturbation class `{other}`"),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveSection {
    pub dt: f64,
    pub steps: usize,
    /// L2 size of the random perturbation added to flat initial data.
    pub noise: f64,
    /// Trajectory rows are written every `record_stride` steps.
    pub record_stride: usize,
}

impl Default for EvolveSection {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            steps: 10_000,
            noise: 1e-6,
            record_stride: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DispersionSection {
    pub k_max: f64,
    pub samples: usize,
}

impl Default for DispersionSection {
    fn default() -> Self {
        Self { k_max: 1.5, samples: 301 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: PathBuf,
    /// Field snapshots every `snapshot_stride` points or steps; 0 disables them.
    pub snapshot_stride: usize,
    pub emit_svg: bool,
    /// Write snapshots as little-endian binary blocks instead of text.
    pub binary_snapshots: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            snapshot_stride: 10,
            emit_svg: true,
            binary_snapshots: true,
        }
    }
}

impl RunConfig {
    /// Parses a TOML document and applies `section.key=value` overrides.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> anyhow::Result<Self> {
        let mut table: toml::Table = text.parse().context("parsing configuration")?;
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        let config: RunConfig = toml::Value::Table(table).try_into().context("invalid configuration")?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> anyhow::Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            None => String::new(),
        };
        Self::from_toml_with(&text, overrides)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let l = &self.lattice;
        if !(l.k0 > 0.0) || !l.k0.is_finite() {
            bail!("lattice.k0 must be positive");
        }
        if !(self.params.g > 0.0) {
            bail!("params.g must be positive");
        }
        if let Some(list) = &self.params.m_list {
            if list.is_empty() {
                bail!("params.M_list must not be empty");
            }
        }
        if let Some([a, b]) = self.params.m_range {
            if !(a < b) {
                bail!("params.M_range must satisfy start < end");
            }
        }
        let c = &self.continuation;
        if !(c.ds > 0.0 && c.ds_min > 0.0 && c.ds_min <= c.ds && c.trivial_ds > 0.0) {
            bail!("continuation step sizes must satisfy 0 < ds_min <= ds");
        }
        if !(c.guard > 0.0 && c.guard < 1.0) {
            bail!("continuation.guard must lie in (0, 1)");
        }
        if !(c.s0 > 0.0) {
            bail!("continuation.s0 must be positive");
        }
        if !(self.evolve.dt > 0.0) || self.evolve.record_stride == 0 {
            bail!("evolve.dt and evolve.record_stride must be positive");
        }
        if !(self.dispersion.k_max > 0.0) || self.dispersion.samples < 2 {
            bail!("dispersion needs k_max > 0 and at least two samples");
        }
        self.stability.parsed_classes()?;
        Ok(())
    }

    pub fn make_lattice(&self) -> anyhow::Result<Arc<Lattice>> {
        Ok(make_lattice(self.lattice.kind, self.lattice.k0, self.lattice.n)?)
    }

    /// Output directory, resolved against `MARANGONI_OUT` when relative.
    pub fn output_dir(&self) -> PathBuf {
        let dir = &self.output.directory;
        match std::env::var_os(OUTPUT_ROOT_VAR) {
            Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
            _ => dir.clone(),
        }
    }
}

/// Sets `section.key` (or a top-level `key`) in a TOML table. The value is
/// parsed as a TOML value and kept as a string if that fails.
pub fn apply_override(table: &mut toml::Table, item: &str) -> anyhow::Result<()> {
    let (path, raw) = item
        .split_once('=')
        .with_context(|| format!("override `{item}` is not of the form key=value"))?;
    let value = parse_value(raw.trim());
    let keys: Vec<&str> = path.trim().split('.').collect();
    let (last, parents) = keys.split_last().expect("split yields at least one piece");
    let mut cur = table;
    for k in parents {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .with_context(|| format!("override path `{path}` crosses a non-table value"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = RunConfig::from_toml_with("", &[]).unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let text = "[lattice]\nkind = \"hexagon\"\nk0 = 1.0\nN = 16\n";
        let over = vec!["lattice.N=24".to_string(), "continuation.direction=up".to_string(), "params.M=8.5".to_string()];
        let c = RunConfig::from_toml_with(text, &over).unwrap();
        assert_eq!(c.lattice.kind, LatticeKind::Hexagon);
        assert_eq!(c.lattice.n, 24);
        assert_eq!(c.continuation.direction, Direction::Up);
        assert_eq!(c.params.m, Some(8.5));
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::from_toml_with("[lattice]\nkind = \"triangle\"\n", &[]).is_err());
        assert!(RunConfig::from_toml_with("[params]\nM_list = []\n", &[]).is_err());
        assert!(RunConfig::from_toml_with("[stability]\nclasses = [\"sideways\"]\n", &[]).is_err());
        assert!(RunConfig::from_toml_with("[lattice]\nunknown = 1\n", &[]).is_err());
    }

    #[test]
    fn classes_parse() {
        assert_eq!(parse_class("coperiodic").unwrap(), PerturbationClass::CoPeriodic);
        assert_eq!(parse_class("Subharmonic:3").unwrap(), PerturbationClass::Subharmonic(3));
        assert!(parse_class("superharmonic:1").is_err());
    }
}

//! File formats: field snapshots, branch tables with JSON sidecars,
//! spectrum reports and evolution trajectories.
//!
//! A snapshot is one JSON header line followed by the `N x N` grid values of
//! the field in row-major order, either as text (one grid row per line) or
//! as a block of little-endian `f64`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context};
use marangoni_core::continuation::{Branch, BranchEvent, ContinuationConfig, EventFlags, PeriodicityReport, Termination};
use marangoni_core::localbif::BifurcationPointRecord;
use marangoni_core::stationary::StationaryState;
use marangoni_core::{make_lattice, Error, Grid, Lattice, LatticeHeader, SymmetricField};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Text,
    F64le,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub lattice: LatticeHeader,
    pub g: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub s: f64,
    pub encoding: Encoding,
}

/// A field together with the parameters it was computed at.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub v: SymmetricField,
    pub g: f64,
    pub m: f64,
    pub s: f64,
}

impl Snapshot {
    pub fn state(&self) -> StationaryState {
        let k = marangoni_core::stationary::constraint_k(&self.v).unwrap_or(f64::NAN);
        StationaryState {
            v: self.v.clone(),
            m: self.m,
            multiplier: self.m * k,
        }
    }
}

pub fn write_snapshot(path: &Path, snap: &Snapshot, encoding: Encoding) -> anyhow::Result<()> {
    let lat = snap.v.lattice();
    let header = SnapshotHeader {
        lattice: lat.header(),
        g: snap.g,
        m: snap.m,
        s: snap.s,
        encoding,
    };
    let grid = snap.v.synthesize();
    let n = grid.size();
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    match encoding {
        Encoding::Text => {
            for row in grid.values().chunks(n) {
                let line: Vec<String> = row.iter().map(|x| format!("{x:e}")).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
        }
        Encoding::F64le => {
            for x in grid.values() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a snapshot. The field is recovered exactly from its grid values
/// (orbit-averaged, so a symmetric input round-trips to roundoff). Grid
/// values with `1 + v <= 0` are rejected with a domain violation.
pub fn read_snapshot(path: &Path) -> anyhow::Result<Snapshot> {
    let mut r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: SnapshotHeader = serde_json::from_str(line.trim()).context("snapshot header")?;
    let lat = make_lattice(header.lattice.kind, header.lattice.k0, header.lattice.n)?;
    let n = header.lattice.n;
    let values = match header.encoding {
        Encoding::Text => {
            let mut rest = String::new();
            r.read_to_string(&mut rest)?;
            rest.split_whitespace()
                .map(|t| t.parse::<f64>().with_context(|| format!("bad grid value `{t}`")))
                .collect::<anyhow::Result<Vec<f64>>>()?
        }
        Encoding::F64le => {
            let mut bytes = Vec::new();
            r.read_to_end(&mut bytes)?;
            if bytes.len() != n * n * 8 {
                bail!("snapshot block holds {} bytes, expected {}", bytes.len(), n * n * 8);
            }
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect()
        }
    };
    if values.len() != n * n {
        bail!("snapshot holds {} values, expected {}", values.len(), n * n);
    }
    let grid = Grid::new(n, values)?;
    let min_height = 1.0 + grid.min();
    if !(min_height > 0.0) {
        return Err(Error::DomainViolation { min_height }).with_context(|| format!("loading {}", path.display()));
    }
    Ok(Snapshot {
        v: SymmetricField::analyze(&grid, &lat),
        g: header.g,
        m: header.m,
        s: header.s,
    })
}

/// Rejects fields with `min(1 + v) <= 0` on the grid.
pub fn check_admissible(v: &SymmetricField) -> Result<(), Error> {
    let min = v.fine_grid().min();
    if 1.0 + min > 0.0 {
        Ok(())
    } else {
        Err(Error::DomainViolation { min_height: 1.0 + min })
    }
}

/// One row of a branch table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchRow {
    pub s: f64,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "K_value")]
    pub k_value: f64,
    pub min_v: f64,
    pub max_v: f64,
    pub l2_norm: f64,
    pub x_norm: f64,
    pub log_l2: f64,
    pub n_unstable: Option<usize>,
    pub event: String,
}

pub fn branch_rows(branch: &Branch) -> Vec<BranchRow> {
    branch
        .points
        .iter()
        .map(|p| {
            let d = &p.diagnostics;
            BranchRow {
                s: p.s,
                m: p.state.m,
                k_value: d.k_value,
                min_v: d.min_v,
                max_v: d.max_v,
                l2_norm: d.l2_norm,
                x_norm: d.x_norm,
                log_l2: d.log_l2,
                n_unstable: d.n_unstable_coperiodic,
                event: p.events.label(),
            }
        })
        .collect()
}

pub const BRANCH_COLUMNS: [&str; 10] = ["s", "M", "K_value", "min_v", "max_v", "l2_norm", "x_norm", "log_l2", "n_unstable", "event"];

pub fn write_branch_csv(path: &Path, rows: &[BranchRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    if rows.is_empty() {
        w.write_record(BRANCH_COLUMNS)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_branch_csv(path: &Path) -> anyhow::Result<Vec<BranchRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = r.headers()?.clone();
    if headers.iter().ne(BRANCH_COLUMNS) {
        bail!("unexpected branch table columns in {}", path.display());
    }
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

/// JSON sidecar of a branch table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchSummary {
    pub label: String,
    pub lattice: LatticeHeader,
    pub g: f64,
    pub origin: Option<BifurcationPointRecord>,
    pub direction: i32,
    pub config: ContinuationConfig,
    /// FNV-1a hash of the configuration, lattice and direction, in hex.
    pub config_hash: String,
    pub termination: Option<Termination>,
    pub n_points: usize,
    #[serde(rename = "sup_M")]
    pub sup_m: Option<f64>,
    pub min_v: Option<f64>,
    pub events: Vec<BranchEvent>,
    /// Whether every nodal check along the branch passed, if any ran.
    pub nodal_ok: Option<bool>,
    pub snapshots: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub periodicity: Option<PeriodicityReport>,
}

impl BranchSummary {
    pub fn new(label: &str, branch: &Branch, snapshots: Vec<String>) -> Self {
        let checks: Vec<bool> = branch.points.iter().filter_map(|p| p.nodal.map(|r| r.passes())).collect();
        let finite = |x: f64| x.is_finite().then_some(x);
        Self {
            label: label.to_string(),
            lattice: branch.lattice.header(),
            g: branch.g,
            origin: branch.origin.as_ref().map(|o| o.to_record()),
            direction: branch.direction,
            config: branch.config,
            config_hash: format!("{:016x}", branch.config_hash),
            termination: branch.termination,
            n_points: branch.points.len(),
            sup_m: finite(branch.sup_m()),
            min_v: finite(branch.min_v()),
            events: marangoni_core::continuation::detect_events(branch),
            nodal_ok: (!checks.is_empty()).then(|| checks.iter().all(|&c| c)),
            snapshots,
            periodicity: None,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    Ok(serde_json::from_reader(r)?)
}

/// Snapshot file name of point `index` of the branch table `stem.csv`.
pub fn point_snapshot_name(stem: &str, index: usize) -> String {
    format!("{stem}_pt{index:05}.snap")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub mass: f64,
    pub min_v: f64,
    pub l2_norm: f64,
}

pub fn write_trajectory_csv(path: &Path, rows: &[TrajectoryRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    if rows.is_empty() {
        w.write_record(["t", "mass", "min_v", "l2_norm"])?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory_csv(path: &Path) -> anyhow::Result<Vec<TrajectoryRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

/// Writes a table with a header row; used for dispersion curves.
pub fn write_table_csv(path: &Path, header: &[String], rows: &[Vec<f64>]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Events flagged in a table row.
pub fn row_events(row: &BranchRow) -> EventFlags {
    EventFlags::parse(&row.event)
}

pub fn lattice_of(header: &LatticeHeader) -> anyhow::Result<Arc<Lattice>> {
    Ok(make_lattice(header.kind, header.k0, header.n)?)
}

//! The batch pipelines behind the command-line subcommands.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use marangoni_core::continuation::{
    classify_periodicity, detect_events, extend_branch, extend_branch_until, info_from_kernel, refine_candidate, seed_branch,
    switch_at, trivial_branch, Branch, EventKind, PeriodicityReport, Termination,
};
use marangoni_core::evolve::EvolutionState;
use marangoni_core::linstab::{self, SpectrumOptions, SpectrumReport};
use marangoni_core::localbif::{self, BifurcationPointRecord};
use marangoni_core::stationary::{self, ProblemParams};
use marangoni_core::{Error, Lattice, LatticeHeader, SymmetricField};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::io::{self, Encoding, Snapshot, TrajectoryRow};
use crate::plot::{self, LinePlot, Series};

/// Relative tolerance of the local expansion check.
pub const LOCAL_TOLERANCE: f64 = 1e-6;

/// A computed quantity missed its tolerance.
#[derive(Debug, thiserror::Error)]
#[error("tolerance exceeded: {0}")]
pub struct ToleranceExceeded(pub String);

/// Exit status for an error: 2 tolerance failure, 3 domain violation,
/// 4 convergence failure, 1 anything else (usage, I/O).
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<ToleranceExceeded>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::DomainViolation { .. } => 3,
                Error::NoConvergence { .. } | Error::SingularSystem | Error::SingularProjection | Error::Inconclusive { .. } => 4,
                _ => 1,
            };
        }
    }
    1
}

fn prepare_dir(cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    let dir = cfg.output_dir();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DispersionOutcome {
    pub csv: PathBuf,
    pub svg: Option<PathBuf>,
    #[serde(rename = "M_values")]
    pub m_values: Vec<f64>,
}

/// Growth rates `λ(|k|)` of the flat film for each configured `M`.
pub fn cmd_dispersion(cfg: &RunConfig) -> anyhow::Result<DispersionOutcome> {
    let ms: Vec<f64> = match (&cfg.params.m_list, cfg.params.m) {
        (Some(list), _) => list.clone(),
        (None, Some(m)) => vec![m],
        (None, None) => bail!("dispersion needs params.M_list or params.M"),
    };
    if ms.is_empty() {
        bail!("empty M list");
    }
    let g = cfg.params.g;
    let n = cfg.dispersion.samples;
    let ks: Vec<f64> = (0..n).map(|i| cfg.dispersion.k_max * i as f64 / (n - 1) as f64).collect();
    let mut header = vec!["k".to_string()];
    header.extend(ms.iter().map(|m| format!("lambda_M={m}")));
    let rows: Vec<Vec<f64>> = ks
        .iter()
        .map(|&k| {
            let mut row = vec![k];
            row.extend(ms.iter().map(|&m| linstab::dispersion([k, 0.0], m, g)));
            row
        })
        .collect();
    let dir = prepare_dir(cfg)?;
    let csv = dir.join("dispersion.csv");
    io::write_table_csv(&csv, &header, &rows)?;
    let svg = if cfg.output.emit_svg {
        let path = dir.join("dispersion.svg");
        LinePlot {
            title: format!("dispersion relation, g = {g}"),
            x_label: "|k|".into(),
            y_label: "growth rate".into(),
            series: ms
                .iter()
                .enumerate()
                .map(|(j, m)| Series {
                    label: format!("M = {m}"),
                    points: rows.iter().map(|r| (r[0], r[j + 1])).collect(),
                    ..Series::default()
                })
                .collect(),
            hline: Some(0.0),
        }
        .write(&path)?;
        Some(path)
    } else {
        None
    };
    Ok(DispersionOutcome { csv, svg, m_values: ms })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalReport {
    pub lattice: LatticeHeader,
    pub g: f64,
    pub harmonic: u32,
    #[serde(rename = "M_crit")]
    pub m_crit: f64,
    pub transversality: f64,
    #[serde(rename = "Mdot0")]
    pub mdot0: f64,
    #[serde(rename = "Mddot0")]
    pub mddot0: Option<f64>,
    #[serde(rename = "Mdot0_closed_form")]
    pub mdot0_closed: f64,
    #[serde(rename = "Mddot0_closed_form")]
    pub mddot0_closed: Option<f64>,
    /// Relative errors; the absolute error is used where the closed form is zero.
    pub mdot0_error: f64,
    pub mddot0_error: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

fn rel_err(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        (a - b).abs() / b.abs()
    }
}

/// Numerical expansion coefficients against the closed forms. A cell
/// holding `n` periods is the closed-form cell of `n k0` enlarged `n`
/// times, so the amplitude of the X-normalized kernel scales by `n` and the
/// coefficients by `1/n` and `1/n²`.
pub fn local_report(lat: &Arc<Lattice>, g: f64, n: u32) -> anyhow::Result<LocalReport> {
    let (mdot0, mddot0) = localbif::expansion_coefficients(lat, g, n)?;
    let (c1, c2) = localbif::closed_form_coefficients(lat.kind(), g, n as f64 * lat.k0());
    let nf = n as f64;
    let (c1, c2) = (c1 / nf, c2.map(|x| x / (nf * nf)));
    let e1 = rel_err(mdot0, c1);
    let e2 = match (mddot0, c2) {
        (Some(a), Some(b)) => Some(rel_err(a, b)),
        _ => None,
    };
    let pass = e1 <= LOCAL_TOLERANCE && e2.map_or(true, |e| e <= LOCAL_TOLERANCE) && mddot0.is_some() == c2.is_some();
    Ok(LocalReport {
        lattice: lat.header(),
        g,
        harmonic: n,
        m_crit: localbif::critical_value(lat, g, n),
        transversality: localbif::transversality_check(lat, g, n)?,
        mdot0,
        mddot0,
        mdot0_closed: c1,
        mddot0_closed: c2,
        mdot0_error: e1,
        mddot0_error: e2,
        tolerance: LOCAL_TOLERANCE,
        pass,
    })
}

/// Writes `local.json`; fails with [`ToleranceExceeded`] when the numerical
/// coefficients miss the closed forms.
pub fn cmd_local(cfg: &RunConfig) -> anyhow::Result<LocalReport> {
    let lat = cfg.make_lattice()?;
    let report = local_report(&lat, cfg.params.g, cfg.continuation.harmonic)?;
    let dir = prepare_dir(cfg)?;
    io::write_json(&dir.join("local.json"), &report)?;
    if !report.pass {
        return Err(ToleranceExceeded(format!(
            "Mdot0 error {:.3e}, Mddot0 error {:?} (tolerance {:.0e})",
            report.mdot0_error, report.mddot0_error, report.tolerance
        ))
        .into());
    }
    Ok(report)
}

/// Outputs of one continued branch.
#[derive(Clone, Debug)]
pub struct BranchOutput {
    pub label: String,
    pub branch: Branch,
    pub csv: PathBuf,
    pub json: PathBuf,
    pub periodicity: Option<PeriodicityReport>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContinueSummary {
    /// Bifurcation located on the flat branch, if the scan found one.
    #[serde(rename = "detected_M")]
    pub detected_m: Option<f64>,
    pub origin: Option<BifurcationPointRecord>,
    pub branches: Vec<BranchBrief>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BranchBrief {
    pub label: String,
    pub csv: String,
    pub termination: Option<Termination>,
    pub n_points: usize,
    pub folds: usize,
    pub bifurcation_candidates: usize,
    #[serde(rename = "sup_M")]
    pub sup_m: Option<f64>,
    pub min_v: Option<f64>,
    pub nodal_ok: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub periodicity: Option<PeriodicityReport>,
}

#[derive(Clone, Debug)]
pub struct ContinueOutcome {
    pub trivial: Option<BranchOutput>,
    pub primary: Vec<BranchOutput>,
    pub secondary: Vec<BranchOutput>,
    pub summary: ContinueSummary,
    pub summary_path: PathBuf,
    pub svg: Option<PathBuf>,
}

fn write_branch_outputs(dir: &Path, cfg: &RunConfig, label: &str, branch: &Branch, periodicity: Option<PeriodicityReport>) -> anyhow::Result<BranchOutput> {
    let stem = format!("branch_{label}");
    let csv = dir.join(format!("{stem}.csv"));
    io::write_branch_csv(&csv, &io::branch_rows(branch))?;
    let mut snapshots = Vec::new();
    let stride = cfg.output.snapshot_stride;
    if stride > 0 {
        let encoding = if cfg.output.binary_snapshots { Encoding::F64le } else { Encoding::Text };
        let last = branch.points.len().saturating_sub(1);
        for (i, p) in branch.points.iter().enumerate() {
            if i % stride == 0 || i == last {
                let name = io::point_snapshot_name(&stem, i);
                let snap = Snapshot {
                    v: p.state.v.clone(),
                    g: branch.g,
                    m: p.state.m,
                    s: p.s,
                };
                io::write_snapshot(&dir.join(&name), &snap, encoding)?;
                snapshots.push(name);
            }
        }
    }
    let mut summary = io::BranchSummary::new(label, branch, snapshots);
    summary.periodicity = periodicity;
    let json = dir.join(format!("{stem}.json"));
    io::write_json(&json, &summary)?;
    Ok(BranchOutput {
        label: label.to_string(),
        branch: branch.clone(),
        csv,
        json,
        periodicity,
    })
}

fn brief(out: &BranchOutput) -> BranchBrief {
    let b = &out.branch;
    let events = detect_events(b);
    let checks: Vec<bool> = b.points.iter().filter_map(|p| p.nodal.map(|r| r.passes())).collect();
    BranchBrief {
        label: out.label.clone(),
        csv: out.csv.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        termination: b.termination,
        n_points: b.points.len(),
        folds: events.iter().filter(|e| e.kind == EventKind::Fold).count(),
        bifurcation_candidates: events.iter().filter(|e| e.kind == EventKind::BifurcationCandidate).count(),
        sup_m: b.points.iter().map(|p| p.state.m).reduce(f64::max),
        min_v: b.points.iter().map(|p| p.diagnostics.min_v).reduce(f64::min),
        nodal_ok: (!checks.is_empty()).then(|| checks.iter().all(|&c| c)),
        periodicity: out.periodicity,
    }
}

fn direction_label(d: i32) -> &'static str {
    if d > 0 {
        "up"
    } else {
        "down"
    }
}

/// Flat-branch scan, bifurcation detection, primary branches in the
/// configured directions and optional secondary branches, with tables,
/// sidecars, snapshots and a bifurcation diagram.
pub fn cmd_continue(cfg: &RunConfig, parallel: bool) -> anyhow::Result<ContinueOutcome> {
    let lat = cfg.make_lattice()?;
    let g = cfg.params.g;
    let c = &cfg.continuation;
    let dir = prepare_dir(cfg)?;
    let bcfg = c.branch_config();
    let mut outcome = ContinueOutcome {
        trivial: None,
        primary: Vec::new(),
        secondary: Vec::new(),
        summary: ContinueSummary {
            detected_m: None,
            origin: None,
            branches: Vec::new(),
        },
        summary_path: dir.join("continue.json"),
        svg: None,
    };
    let directions = c.direction.signs();
    if c.max_steps == 0 {
        // nothing to continue: empty tables, one per requested branch
        let info = localbif::bifurcation_point(&lat, g, c.harmonic)?;
        for d in directions {
            let mut b = seed_branch(&info, d, c.s0, &bcfg)?;
            b.points.clear();
            b.termination = Some(Termination::MaxSteps);
            let out = write_branch_outputs(&dir, cfg, direction_label(d), &b, None)?;
            outcome.summary.branches.push(brief(&out));
            outcome.primary.push(out);
        }
        io::write_json(&outcome.summary_path, &outcome.summary)?;
        return Ok(outcome);
    }

    // flat branch from params.M (or just below M*) up to the first bifurcation
    let m_star = localbif::critical_value(&lat, g, c.harmonic);
    let [m_start, m_end] = cfg
        .params
        .m_range
        .unwrap_or([cfg.params.m.unwrap_or(m_star - 0.1), m_star + 1.0]);
    let tcfg = c.trivial_config();
    let trivial = trivial_branch(&lat, g, m_start, &tcfg)?;
    let trivial = extend_branch_until(trivial, &tcfg, |b| {
        b.last().is_some_and(|p| p.events.bifurcation_candidate || p.state.m > m_end)
    });
    let event = detect_events(&trivial).into_iter().find(|e| e.kind == EventKind::BifurcationCandidate);
    let trivial_out = write_branch_outputs(&dir, cfg, "trivial", &trivial, None)?;
    outcome.summary.branches.push(brief(&trivial_out));
    outcome.trivial = Some(trivial_out);
    let event = event.with_context(|| format!("no bifurcation on the flat branch in M ∈ [{m_start}, {m_end}]"))?;
    let cand = refine_candidate(&trivial, event.index, &tcfg)?;
    outcome.summary.detected_m = Some(cand.state.m);
    let info = info_from_kernel(&lat, g, &cand.direction).context("kernel of the detected bifurcation")?;
    outcome.summary.origin = Some(info.to_record());

    let run = |d: i32| -> anyhow::Result<Branch> { Ok(extend_branch(seed_branch(&info, d, c.s0, &bcfg)?, &bcfg)) };
    let branches: Vec<anyhow::Result<Branch>> = if parallel && directions.len() > 1 {
        std::thread::scope(|scope| {
            let handles: Vec<_> = directions.iter().map(|&d| scope.spawn(move || run(d))).collect();
            handles.into_iter().map(|h| h.join().expect("branch worker panicked")).collect()
        })
    } else {
        directions.iter().map(|&d| run(d)).collect()
    };
    for (d, b) in directions.iter().zip(branches) {
        let out = write_branch_outputs(&dir, cfg, direction_label(*d), &b?, None)?;
        outcome.summary.branches.push(brief(&out));
        outcome.primary.push(out);
    }

    if c.secondary {
        if let Some(parent) = outcome.primary.first().map(|o| o.branch.clone()) {
            let candidates: Vec<_> = detect_events(&parent)
                .into_iter()
                .filter(|e| e.kind == EventKind::BifurcationCandidate)
                .take(c.max_secondary)
                .collect();
            for (k, e) in candidates.iter().enumerate() {
                let Ok(cand) = refine_candidate(&parent, e.index, &bcfg) else {
                    continue;
                };
                let Ok(seed) = switch_at(&parent, &cand, 1, c.s0, &bcfg) else {
                    continue;
                };
                let b = extend_branch(seed, &bcfg);
                let last = b.last().map(|p| p.state.v.clone()).unwrap_or_else(|| cand.state.v.clone());
                let rep = classify_periodicity(&cand.state.v, &cand.direction, &last);
                let out = write_branch_outputs(&dir, cfg, &format!("secondary{}", k + 1), &b, Some(rep))?;
                outcome.summary.branches.push(brief(&out));
                outcome.secondary.push(out);
            }
        }
    }

    io::write_json(&outcome.summary_path, &outcome.summary)?;
    if cfg.output.emit_svg {
        let path = dir.join("bifurcation_diagram.svg");
        bifurcation_plot(&outcome).write(&path)?;
        outcome.svg = Some(path);
    }
    Ok(outcome)
}

fn branch_series(out: &BranchOutput, dashed: bool) -> Series {
    let b = &out.branch;
    let markers = b
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.events.any())
        .map(|(i, p)| (i, p.events.label()))
        .collect();
    Series {
        label: out.label.clone(),
        points: b.points.iter().map(|p| (p.state.m, p.diagnostics.l2_norm)).collect(),
        markers,
        dashed,
    }
}

fn bifurcation_plot(outcome: &ContinueOutcome) -> LinePlot {
    let mut series = Vec::new();
    if let Some(t) = &outcome.trivial {
        series.push(branch_series(t, false));
    }
    series.extend(outcome.primary.iter().map(|o| branch_series(o, false)));
    series.extend(outcome.secondary.iter().map(|o| branch_series(o, true)));
    LinePlot {
        title: "bifurcation diagram".into(),
        x_label: "M".into(),
        y_label: "L2 norm of v".into(),
        series,
        hline: None,
    }
}

/// Where the state for a stability run comes from.
#[derive(Clone, Debug)]
pub enum StateSource {
    Snapshot(PathBuf),
    /// Point `index` of a branch table; its snapshot must exist next to it.
    BranchPoint { table: PathBuf, index: usize },
}

impl StateSource {
    pub fn snapshot_path(&self) -> anyhow::Result<PathBuf> {
        match self {
            StateSource::Snapshot(p) => Ok(p.clone()),
            StateSource::BranchPoint { table, index } => {
                let rows = io::read_branch_csv(table)?;
                if *index >= rows.len() {
                    bail!("point index {index} outside the branch ({} points)", rows.len());
                }
                let stem = table.file_stem().context("branch table name")?.to_string_lossy().into_owned();
                let snap = table.with_file_name(io::point_snapshot_name(&stem, *index));
                if !snap.exists() {
                    bail!("no snapshot stored for point {index} (see output.snapshot_stride)");
                }
                Ok(snap)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct StabilityOutcome {
    pub reports: Vec<SpectrumReport>,
    pub files: Vec<PathBuf>,
}

/// Spectra of the evolution linearization for each configured class.
pub fn cmd_stability(cfg: &RunConfig, source: &StateSource) -> anyhow::Result<StabilityOutcome> {
    let path = source.snapshot_path()?;
    let snap = io::read_snapshot(&path)?;
    io::check_admissible(&snap.v)?;
    let state = snap.state();
    let opts = if cfg.stability.symmetric { SpectrumOptions::symmetric() } else { SpectrumOptions::full() };
    let dir = prepare_dir(cfg)?;
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "state".into());
    let mut out = StabilityOutcome {
        reports: Vec::new(),
        files: Vec::new(),
    };
    for class in cfg.stability.parsed_classes()? {
        let report = linstab::spectrum_with(&state, snap.g, class, &opts)?;
        let tag = class.to_string().replace(['(', ')'], "");
        let file = dir.join(format!("{stem}_spectrum_{tag}.json"));
        io::write_json(&file, &report)?;
        out.reports.push(report);
        out.files.push(file);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub orbit: (i32, i32),
    pub wavenumber: f64,
    pub measured: f64,
    pub predicted: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveReport {
    #[serde(rename = "M")]
    pub m: f64,
    pub g: f64,
    pub dt: f64,
    pub steps_taken: usize,
    pub final_time: f64,
    pub mass_drift: f64,
    /// `‖v(T) - v(0)‖_L2`, the drift away from the initial state.
    pub drift_l2: f64,
    pub initial_rhs_l2: f64,
    /// Growth of the fastest linear mode, for flat-plus-noise initial data.
    pub growth: Option<GrowthReport>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct EvolveOutcome {
    pub report: EvolveReport,
    pub trajectory: PathBuf,
    pub report_path: PathBuf,
}

/// Flat film plus a seeded random symmetric perturbation of L2 size `noise`.
pub fn noisy_flat(lat: &Arc<Lattice>, noise: f64, seed: u64) -> SymmetricField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<f64> = (0..lat.num_orbits())
        .map(|o| if o == 0 { 0.0 } else { rng.gen_range(-1.0..1.0) })
        .collect();
    let v = SymmetricField::from_coeffs(lat, coeffs).expect("length matches the lattice");
    let n = v.norm_l2();
    if n > 0.0 {
        v.scaled(noise / n)
    } else {
        v
    }
}

/// Orbit with the largest linear growth rate of the flat film.
fn fastest_orbit(lat: &Lattice, m: f64, g: f64) -> Option<usize> {
    (1..lat.num_orbits()).max_by(|&a, &b| {
        let ra = linstab::dispersion(lat.dual_wavevector(lat.orbits()[a].representative.0, lat.orbits()[a].representative.1), m, g);
        let rb = linstab::dispersion(lat.dual_wavevector(lat.orbits()[b].representative.0, lat.orbits()[b].representative.1), m, g);
        ra.total_cmp(&rb)
    })
}

/// Time integration from a snapshot or from noisy flat data; writes the
/// trajectory table and a report.
pub fn cmd_evolve(cfg: &RunConfig, initial: Option<&Path>) -> anyhow::Result<EvolveOutcome> {
    let (v0, m) = match initial {
        Some(path) => {
            let snap = io::read_snapshot(path)?;
            io::check_admissible(&snap.v).context("initial data")?;
            (snap.v, cfg.params.m.unwrap_or(snap.m))
        }
        None => {
            let lat = cfg.make_lattice()?;
            let m = cfg.params.m.context("evolve from flat data needs params.M")?;
            (noisy_flat(&lat, cfg.evolve.noise, cfg.seed), m)
        }
    };
    let g = cfg.params.g;
    let params = ProblemParams::new(g, m)?;
    let lat = Arc::clone(v0.lattice());
    let dt = cfg.evolve.dt;
    let mut state = EvolutionState::new(v0.clone(), params, dt)?;
    let mass0 = state.mass();
    let tracked = if initial.is_none() { fastest_orbit(&lat, m, g) } else { None };
    let amplitude = |v: &SymmetricField| tracked.map(|o| v.coeffs()[o].abs());
    let mut rows = vec![row_of(&state)];
    let mut mass_drift: f64 = 0.0;
    let mut amp_half = None;
    let (mut t_half, mut error, mut taken) = (0.0, None, 0);
    let dir = prepare_dir(cfg)?;
    let encoding = if cfg.output.binary_snapshots { Encoding::F64le } else { Encoding::Text };
    let stride = cfg.output.snapshot_stride;
    let write_snap = |k: usize, st: &EvolutionState<SymmetricField>| {
        let snap = Snapshot { v: st.v.clone(), g, m, s: st.t };
        io::write_snapshot(&dir.join(format!("evolve_{k:05}.snap")), &snap, encoding)
    };
    if stride > 0 {
        write_snap(0, &state)?;
    }
    for step in 1..=cfg.evolve.steps {
        match state.advance() {
            Ok(next) => state = next,
            Err(e) => {
                error = Some(e);
                break;
            }
        }
        taken = step;
        mass_drift = mass_drift.max((state.mass() - mass0).abs());
        if step == cfg.evolve.steps / 2 {
            amp_half = amplitude(&state.v);
            t_half = state.t;
        }
        if step % cfg.evolve.record_stride == 0 {
            rows.push(row_of(&state));
            let k = rows.len() - 1;
            if stride > 0 && k % stride == 0 {
                write_snap(k, &state)?;
            }
        }
    }
    let trajectory = dir.join("trajectory.csv");
    io::write_trajectory_csv(&trajectory, &rows)?;
    let growth = match (tracked, amp_half, amplitude(&state.v)) {
        (Some(o), Some(a1), Some(a2)) if a1 > 0.0 && a2 > 0.0 && state.t > t_half && error.is_none() => {
            let rep = lat.orbits()[o].representative;
            let k = lat.dual_wavevector(rep.0, rep.1);
            let measured = (a2 / a1).ln() / (state.t - t_half);
            let predicted = linstab::dispersion(k, m, g);
            Some(GrowthReport {
                orbit: rep,
                wavenumber: (k[0] * k[0] + k[1] * k[1]).sqrt(),
                measured,
                predicted,
                relative_error: rel_err(measured, predicted),
            })
        }
        _ => None,
    };
    let report = EvolveReport {
        m,
        g,
        dt,
        steps_taken: taken,
        final_time: state.t,
        mass_drift,
        drift_l2: (&state.v - &v0).norm_l2(),
        initial_rhs_l2: marangoni_core::evolve::rhs(&v0, m, g)?.norm_l2(),
        growth,
        error: error.as_ref().map(|e| e.to_string()),
    };
    let report_path = dir.join("evolve.json");
    io::write_json(&report_path, &report)?;
    if let Some(e) = error {
        return Err(anyhow::Error::new(e).context(format!("evolution stopped after {taken} steps")));
    }
    Ok(EvolveOutcome {
        report,
        trajectory,
        report_path,
    })
}

fn row_of(state: &EvolutionState<SymmetricField>) -> TrajectoryRow {
    TrajectoryRow {
        t: state.t,
        mass: state.mass(),
        min_v: state.v.fine_grid().min(),
        l2_norm: state.v.norm_l2(),
    }
}

/// Heatmap of a snapshot on its `N x N` grid.
pub fn snapshot_heatmap(snapshot: &Path, out: &Path, scale: usize) -> anyhow::Result<()> {
    let snap = io::read_snapshot(snapshot)?;
    plot::write_heatmap(out, &snap.v.synthesize(), scale)?;
    Ok(())
}

/// Solves the stationary problem at fixed `M` from a snapshot guess.
pub fn resolve_snapshot(snap: &Snapshot, tol: f64) -> anyhow::Result<stationary::StationaryState> {
    Ok(stationary::newton_solve(&snap.v, snap.m, snap.g, tol, 30)?)
}

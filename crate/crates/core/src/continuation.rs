//! Pseudo-arclength continuation of stationary branches in `M`.
//!
//! Unknowns are all orbit coefficients `c` of `v`, the multiplier `λ` and
//! `M`; the equations are `G(c, M) - λ e0 = 0`, `c0 = 0` and one linear
//! border row (arclength or phase condition). The arclength metric is
//! `w_v ‖Δv‖²_L2 + w_M |ΔM|²`.
//!
//! Events: a fold is a sign change of the `M` component of the unit
//! tangent; a bifurcation candidate is a change in the number of positive
//! eigenvalues of `∂_v F` on symmetric mean-zero fields that is not
//! explained by a fold. Because the evolution linearization at a stationary
//! state is a positive mobility operator composed with `∂_v F`, this count
//! also equals the number of unstable co-periodic symmetric modes.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SymmetricField;
use crate::lattice::{Lattice, LatticeKind};
use crate::linalg;
use crate::localbif::{self, BifurcationPointInfo};
use crate::stationary::{self, StationaryState};

/// Default admissibility margin of continuation: branches stop once
/// `min v` reaches `-1 + RUPTURE_GUARD`. Closer to rupture the truncated
/// branches develop a second turning point in `M` whose position in `min v`
/// does not converge under refinement.
pub const RUPTURE_GUARD: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuationConfig {
    /// Initial and maximal arclength step.
    pub ds: f64,
    pub ds_max: f64,
    pub ds_min: f64,
    pub max_steps: usize,
    /// Admissibility margin: states keep `min(1 + v) >= guard`.
    pub guard: f64,
    pub tol: f64,
    pub max_newton: usize,
    /// Arclength weights of `‖Δv‖²_L2` and `|ΔM|²`.
    pub weight_v: f64,
    pub weight_m: f64,
    /// Track the symmetric spectrum and flag bifurcation candidates.
    pub detect_bifurcations: bool,
    /// Run the nodal check at every accepted point.
    pub nodal_checks: bool,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            ds: 0.01,
            ds_max: 0.01,
            ds_min: 1e-7,
            max_steps: 5000,
            guard: RUPTURE_GUARD,
            tol: stationary::DEFAULT_TOL,
            max_newton: 12,
            weight_v: 1.0,
            weight_m: 1.0,
            detect_bifurcations: true,
            nodal_checks: false,
        }
    }
}

impl ContinuationConfig {
    /// Defaults for scans along the flat branch.
    pub fn trivial() -> Self {
        Self {
            ds: 0.03,
            ds_max: 0.03,
            ..Self::default()
        }
    }

    /// FNV-1a hash of every setting.
    pub fn hash(&self) -> u64 {
        let mut h = Fnv::new();
        for x in [self.ds, self.ds_max, self.ds_min, self.guard, self.tol, self.weight_v, self.weight_m] {
            h.write(&x.to_bits().to_le_bytes());
        }
        h.write(&(self.max_steps as u64).to_le_bytes());
        h.write(&(self.max_newton as u64).to_le_bytes());
        h.write(&[self.detect_bifurcations as u8, self.nodal_checks as u8]);
        h.finish()
    }
}

/// 64-bit FNV-1a.
#[derive(Clone, Copy, Debug)]
pub struct Fnv(u64);

impl Fnv {
    pub fn new() -> Self {
        Fnv(0xcbf29ce484222325)
    }

    pub fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= *b as u64;
            self.0 = self.0.wrapping_mul(0x100000001b3);
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for Fnv {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub min_v: f64,
    pub max_v: f64,
    pub l2_norm: f64,
    pub x_norm: f64,
    #[serde(rename = "K_value")]
    pub k_value: f64,
    pub log_l2: f64,
    pub n_unstable_coperiodic: Option<usize>,
    /// Leading eigenvalues of `∂_v F` on symmetric mean-zero fields, in
    /// descending order, through a few past the last positive one.
    pub top_eigenvalues: Vec<f64>,
}

impl Diagnostics {
    /// Norms and extrema of a state, without spectral data.
    pub fn compute(state: &StationaryState) -> Result<Self> {
        let v = &state.v;
        let fine = v.fine_grid();
        let log = v.nonlinear_pointwise(|x| Float::ln(1.0 + x))?;
        Ok(Diagnostics {
            min_v: fine.min(),
            max_v: fine.max(),
            l2_norm: v.norm_l2(),
            x_norm: v.norm_x(),
            k_value: stationary::constraint_k(v)?,
            log_l2: log.norm_l2(),
            n_unstable_coperiodic: None,
            top_eigenvalues: Vec::new(),
        })
    }
}

/// Diagnostics, optionally including the symmetric spectrum of `∂_v F`.
pub fn point_diagnostics(state: &StationaryState, g: f64, spectrum: bool) -> Result<Diagnostics> {
    let mut d = Diagnostics::compute(state)?;
    if spectrum {
        let values = symmetric_spectrum(state, g)?;
        let p = values.iter().filter(|&&x| x > 0.0).count();
        d.n_unstable_coperiodic = Some(p);
        d.top_eigenvalues = values.into_iter().take(p + 4).collect();
    }
    Ok(d)
}

/// Eigenvalues of `∂_v F` on symmetric mean-zero fields, descending.
pub fn symmetric_spectrum(state: &StationaryState, g: f64) -> Result<Vec<f64>> {
    let b = stationary::symmetric_reduced_jacobian(&state.v, state.m, g)?;
    Ok(linalg::symmetric_eigenvalues(b))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventFlags {
    pub fold: bool,
    pub bifurcation_candidate: bool,
    pub rupture_stop: bool,
}

impl EventFlags {
    pub fn any(&self) -> bool {
        self.fold || self.bifurcation_candidate || self.rupture_stop
    }

    /// `Fold|BifurcationCandidate|RuptureStop` style label, empty if none.
    pub fn label(&self) -> String {
        let mut parts: Vec<&str> = Vec::new();
        if self.fold {
            parts.push("Fold");
        }
        if self.bifurcation_candidate {
            parts.push("BifurcationCandidate");
        }
        if self.rupture_stop {
            parts.push("RuptureStop");
        }
        parts.join("|")
    }

    pub fn parse(label: &str) -> Self {
        let mut f = EventFlags::default();
        for part in label.split('|') {
            match part.trim() {
                "Fold" => f.fold = true,
                "BifurcationCandidate" => f.bifurcation_candidate = true,
                "RuptureStop" => f.rupture_stop = true,
                _ => {}
            }
        }
        f
    }
}

#[derive(Clone, Debug)]
pub struct BranchPoint {
    pub state: StationaryState,
    pub s: f64,
    pub tangent_v: SymmetricField,
    pub tangent_m: f64,
    pub diagnostics: Diagnostics,
    pub events: EventFlags,
    pub nodal: Option<NodalReport>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    RuptureGuard,
    MaxSteps,
    NoConvergence,
    UserStop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Fold,
    BifurcationCandidate,
    RuptureStop,
}

/// An event located between accepted points `index - 1` and `index`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchEvent {
    pub kind: EventKind,
    pub index: usize,
    /// Secant estimate of the arclength and Marangoni number of the event.
    pub s: f64,
    #[serde(rename = "M")]
    pub m: f64,
}

#[derive(Clone, Debug)]
pub struct Branch {
    pub lattice: Arc<Lattice>,
    pub g: f64,
    /// Bifurcation point the branch emanates from; `None` for flat scans
    /// and switched branches.
    pub origin: Option<BifurcationPointInfo>,
    pub direction: i32,
    pub points: Vec<BranchPoint>,
    pub termination: Option<Termination>,
    pub config: ContinuationConfig,
    pub config_hash: u64,
    /// Step size to use for the next extension.
    pub next_ds: f64,
}

impl Branch {
    fn new(lattice: Arc<Lattice>, g: f64, origin: Option<BifurcationPointInfo>, direction: i32, config: ContinuationConfig) -> Self {
        let mut h = Fnv::new();
        h.write(&config.hash().to_le_bytes());
        h.write(&(lattice.kind() as u8).to_le_bytes());
        h.write(&lattice.k0().to_bits().to_le_bytes());
        h.write(&(lattice.modes_per_dim() as u64).to_le_bytes());
        h.write(&g.to_bits().to_le_bytes());
        h.write(&direction.to_le_bytes());
        Self {
            lattice,
            g,
            origin,
            direction,
            points: Vec::new(),
            termination: None,
            config_hash: h.finish(),
            next_ds: config.ds,
            config,
        }
    }

    pub fn last(&self) -> Option<&BranchPoint> {
        self.points.last()
    }

    /// Largest Marangoni number along the branch.
    pub fn sup_m(&self) -> f64 {
        self.points.iter().map(|p| p.state.m).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_v(&self) -> f64 {
        self.points.iter().map(|p| p.diagnostics.min_v).fold(f64::INFINITY, f64::min)
    }

    pub fn count_events(&self, kind: EventKind) -> usize {
        detect_events(self).iter().filter(|e| e.kind == kind).count()
    }
}

/// Linear border row `⟨a, c⟩ + a_M M = rhs`.
struct Border {
    a: Vec<f64>,
    a_m: f64,
    rhs: f64,
}

impl Border {
    fn value(&self, v: &SymmetricField, m: f64) -> f64 {
        self.a.iter().zip(v.coeffs()).map(|(a, c)| a * c).sum::<f64>() + self.a_m * m - self.rhs
    }
}

fn metric_weights(lat: &Lattice, cfg: &ContinuationConfig) -> Vec<f64> {
    lat.orbits()
        .iter()
        .map(|o| cfg.weight_v * lat.cell_area() * o.len() as f64)
        .collect()
}

/// Bordered matrix `[J_G, -e0, f; e0^T, 0, 0; a^T, 0, a_M]`.
fn extended_matrix(v: &SymmetricField, m: f64, g: f64, f: &SymmetricField, border_a: &[f64], border_m: f64) -> Result<DMatrix<f64>> {
    let jac = stationary::jacobian_matrix(v, m, g)?;
    let n = jac.nrows();
    let mut a = DMatrix::zeros(n + 2, n + 2);
    a.view_mut((0, 0), (n, n)).copy_from(&jac);
    a[(0, n)] = -1.0;
    for (i, fi) in f.coeffs().iter().enumerate() {
        a[(i, n + 1)] = *fi;
    }
    a[(n, 0)] = 1.0;
    for (j, bj) in border_a.iter().enumerate() {
        a[(n + 1, j)] = *bj;
    }
    a[(n + 1, n + 1)] = border_m;
    Ok(a)
}

/// Newton corrector for `(v, M)` under one border row.
fn correct(
    v0: &SymmetricField,
    m0: f64,
    g: f64,
    border: &Border,
    cfg: &ContinuationConfig,
) -> Result<(StationaryState, usize)> {
    let lat = Arc::clone(v0.lattice());
    let n = lat.num_orbits();
    let mut v = v0.clone().without_mean();
    let mut m = m0;
    let guard_check = |v: &SymmetricField| {
        let h = stationary::min_height(v);
        if h >= cfg.guard {
            Ok(())
        } else {
            Err(Error::DomainViolation { min_height: h })
        }
    };
    guard_check(&v)?;
    let scale = 1.0 + border.rhs.abs();
    for it in 0..=cfg.max_newton {
        let (gmap, f) = stationary::stationary_map(&v, m, g)?;
        let mut res = gmap.clone();
        res.coeffs_mut()[0] = 0.0;
        let rn = res.norm_l2();
        let bn = border.value(&v, m);
        if !rn.is_finite() {
            return Err(Error::NoConvergence { iterations: it, residual: rn });
        }
        if rn <= cfg.tol && bn.abs() <= 1e-12 * scale {
            let k = f.mean();
            return Ok((StationaryState { multiplier: m * k, v, m }, it));
        }
        if it == cfg.max_newton {
            return Err(Error::NoConvergence { iterations: it, residual: rn });
        }
        let a = extended_matrix(&v, m, g, &f, &border.a, border.a_m)?;
        let mut rhs = DVector::zeros(n + 2);
        for i in 1..n {
            rhs[i] = -res.coeffs()[i];
        }
        rhs[n] = -v.mean();
        rhs[n + 1] = -bn;
        let sol = linalg::lu_solve(a, &rhs)?;
        let dv = SymmetricField::from_coeffs(&lat, sol.as_slice()[..n].to_vec())?;
        let dm = sol[n + 1];
        let mut t = 1.0;
        let mut ok = false;
        for _ in 0..30 {
            let mut trial = v.clone();
            trial.axpy(t, &dv);
            if guard_check(&trial).is_ok() {
                v = trial;
                m += t * dm;
                ok = true;
                break;
            }
            t *= 0.5;
        }
        if !ok {
            return Err(Error::DomainViolation {
                min_height: stationary::min_height(&v),
            });
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// Unit tangent `(τ_v, τ_M)` with `⟨a, τ_v⟩ + a_M τ_M > 0` for the border row.
fn tangent(state: &StationaryState, g: f64, border_a: &[f64], border_m: f64, cfg: &ContinuationConfig) -> Result<(SymmetricField, f64)> {
    let lat = state.v.lattice();
    let n = lat.num_orbits();
    let f = stationary::nonlinearity_field(&state.v)?;
    let a = extended_matrix(&state.v, state.m, g, &f, border_a, border_m)?;
    let mut rhs = DVector::zeros(n + 2);
    rhs[n + 1] = 1.0;
    let sol = linalg::lu_solve(a, &rhs)?;
    let tv = SymmetricField::from_coeffs(lat, sol.as_slice()[..n].to_vec())?;
    let tm = sol[n + 1];
    let norm = Float::sqrt(cfg.weight_v * tv.norm_l2().powi(2) + cfg.weight_m * tm * tm);
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::SingularSystem);
    }
    Ok((tv.scaled(1.0 / norm), tm / norm))
}

fn arclength_border(prev: &BranchPoint, ds: f64, weights: &[f64], cfg: &ContinuationConfig) -> Border {
    let a: Vec<f64> = weights.iter().zip(prev.tangent_v.coeffs()).map(|(w, t)| w * t).collect();
    let a_m = cfg.weight_m * prev.tangent_m;
    let rhs = a.iter().zip(prev.state.v.coeffs()).map(|(x, c)| x * c).sum::<f64>() + a_m * prev.state.m + ds;
    Border { a, a_m, rhs }
}

fn make_point(state: StationaryState, s: f64, tv: SymmetricField, tm: f64, g: f64, cfg: &ContinuationConfig, harmonic: Option<u32>) -> Result<BranchPoint> {
    let diagnostics = point_diagnostics(&state, g, cfg.detect_bifurcations)?;
    let nodal = if cfg.nodal_checks {
        harmonic.map(|n| nodal_check(&state.v, n))
    } else {
        None
    };
    Ok(BranchPoint {
        state,
        s,
        tangent_v: tv,
        tangent_m: tm,
        diagnostics,
        events: EventFlags::default(),
        nodal,
    })
}

/// A one-point branch on the flat state at `m_start`, oriented towards
/// increasing `M`.
pub fn trivial_branch(lat: &Arc<Lattice>, g: f64, m_start: f64, config: &ContinuationConfig) -> Result<Branch> {
    let mut branch = Branch::new(Arc::clone(lat), g, None, 1, *config);
    let state = StationaryState::flat(lat, m_start);
    let tv = SymmetricField::zeros(lat);
    let tm = 1.0 / Float::sqrt(config.weight_m);
    branch.points.push(make_point(state, 0.0, tv, tm, g, config, None)?);
    Ok(branch)
}

/// First point of the branch bifurcating at `info`, corrected under the
/// phase condition `⟨v, k⟩ = direction s0 ⟨k, k⟩` with `M` free.
pub fn seed_branch(info: &BifurcationPointInfo, direction: i32, s0: f64, config: &ContinuationConfig) -> Result<Branch> {
    if direction != 1 && direction != -1 {
        return Err(Error::InvalidArgument("direction must be +1 or -1"));
    }
    let lat = &info.lattice;
    let weights = metric_weights(lat, config);
    let k = &info.kernel;
    let amp = direction as f64 * s0;
    let a: Vec<f64> = weights.iter().zip(k.coeffs()).map(|(w, c)| w * c).collect();
    let kk: f64 = a.iter().zip(k.coeffs()).map(|(x, c)| x * c).sum();
    let border = Border {
        a: a.clone(),
        a_m: 0.0,
        rhs: amp * kk,
    };
    let v_pred = k.scaled(amp);
    let m_pred = info.predicted_m(amp);
    let (state, _) = correct(&v_pred, m_pred, info.g, &border, config)?;
    // orient the tangent away from the flat state
    let (mut tv, mut tm) = tangent(&state, info.g, &a, 0.0, config)?;
    if direction < 0 {
        tv = -tv;
        tm = -tm;
    }
    let mut branch = Branch::new(Arc::clone(lat), info.g, Some(info.clone()), direction, *config);
    let arclength = Float::sqrt(config.weight_v * state.v.norm_l2().powi(2) + config.weight_m * (state.m - info.m_crit).powi(2));
    let harmonic = if direction > 0 { Some(info.harmonic) } else { None };
    branch.points.push(make_point(state, arclength, tv, tm, info.g, config, harmonic)?);
    Ok(branch)
}

fn nodal_harmonic(branch: &Branch) -> Option<u32> {
    match &branch.origin {
        Some(info) if branch.direction > 0 => Some(info.harmonic),
        _ => None,
    }
}

/// Continues `branch` until a termination condition is met.
pub fn extend_branch(branch: Branch, config: &ContinuationConfig) -> Branch {
    extend_branch_until(branch, config, |_| false)
}

/// As [`extend_branch`], stopping with [`Termination::UserStop`] as soon
/// as `stop` returns true for the branch after an accepted point.
pub fn extend_branch_until(mut branch: Branch, config: &ContinuationConfig, mut stop: impl FnMut(&Branch) -> bool) -> Branch {
    branch.config = *config;
    branch.termination = None;
    if branch.points.is_empty() {
        branch.termination = Some(Termination::MaxSteps);
        return branch;
    }
    let lat = Arc::clone(&branch.lattice);
    let weights = metric_weights(&lat, config);
    let harmonic = nodal_harmonic(&branch);
    let g = branch.g;
    let mut ds = branch.next_ds.min(config.ds_max);
    let mut steps = 0usize;
    while steps < config.max_steps {
        let prev = branch.points.last().expect("nonempty").clone();
        let border = arclength_border(&prev, ds, &weights, config);
        let mut v_pred = prev.state.v.clone();
        v_pred.axpy(ds, &prev.tangent_v);
        let m_pred = prev.state.m + ds * prev.tangent_m;
        let pred_ok = stationary::min_height(&v_pred) >= config.guard;
        let attempt = if pred_ok {
            correct(&v_pred, m_pred, g, &border, config)
        } else {
            // predictor leaves the admissible set: shorten the step
            Err(Error::DomainViolation {
                min_height: stationary::min_height(&v_pred),
            })
        };
        let accepted = attempt.and_then(|(state, iters)| {
            let prev_a: Vec<f64> = weights.iter().zip(prev.tangent_v.coeffs()).map(|(w, t)| w * t).collect();
            let (tv, tm) = tangent(&state, g, &prev_a, config.weight_m * prev.tangent_m, config)?;
            let point = make_point(state, prev.s + ds, tv, tm, g, config, harmonic)?;
            Ok((point, iters))
        });
        match accepted {
            Ok((mut point, iters)) => {
                point.events = classify_step(&prev, &point);
                branch.points.push(point);
                steps += 1;
                if iters <= 3 {
                    ds = (ds * 1.5).min(config.ds_max);
                }
                if stop(&branch) {
                    branch.termination = Some(Termination::UserStop);
                    break;
                }
            }
            Err(e) => {
                ds *= 0.5;
                if ds < config.ds_min {
                    branch.termination = Some(if matches!(e, Error::DomainViolation { .. }) {
                        Termination::RuptureGuard
                    } else {
                        Termination::NoConvergence
                    });
                    break;
                }
            }
        }
    }
    if branch.termination.is_none() {
        branch.termination = Some(Termination::MaxSteps);
    }
    if branch.termination == Some(Termination::RuptureGuard) {
        if let Some(p) = branch.points.last_mut() {
            p.events.rupture_stop = true;
        }
    }
    branch.next_ds = ds.max(config.ds_min);
    branch
}

fn classify_step(prev: &BranchPoint, point: &BranchPoint) -> EventFlags {
    let fold = prev.tangent_m * point.tangent_m < 0.0;
    let crossing = match (prev.diagnostics.n_unstable_coperiodic, point.diagnostics.n_unstable_coperiodic) {
        (Some(a), Some(b)) => a != b,
        _ => false,
    };
    // a fold moves exactly one eigenvalue through zero
    let bif = crossing
        && !(fold
            && prev
                .diagnostics
                .n_unstable_coperiodic
                .zip(point.diagnostics.n_unstable_coperiodic)
                .is_some_and(|(a, b)| a.abs_diff(b) == 1));
    EventFlags {
        fold,
        bifurcation_candidate: bif,
        rupture_stop: false,
    }
}

/// Located events of a branch, with secant estimates of their position.
pub fn detect_events(branch: &Branch) -> Vec<BranchEvent> {
    let mut events = Vec::new();
    for i in 1..branch.points.len() {
        let (p, q) = (&branch.points[i - 1], &branch.points[i]);
        let flags = classify_step(p, q);
        if flags.fold {
            // secant zero of the M-component of the tangent
            let t = p.tangent_m / (p.tangent_m - q.tangent_m);
            events.push(BranchEvent {
                kind: EventKind::Fold,
                index: i,
                s: p.s + t * (q.s - p.s),
                m: p.state.m + t * (q.state.m - p.state.m),
            });
        }
        if flags.bifurcation_candidate {
            let (a, b) = crossing_values(p, q);
            let t = if a != b { a / (a - b) } else { 0.5 };
            let t = t.clamp(0.0, 1.0);
            events.push(BranchEvent {
                kind: EventKind::BifurcationCandidate,
                index: i,
                s: p.s + t * (q.s - p.s),
                m: p.state.m + t * (q.state.m - p.state.m),
            });
        }
        if q.events.rupture_stop {
            events.push(BranchEvent {
                kind: EventKind::RuptureStop,
                index: i,
                s: q.s,
                m: q.state.m,
            });
        }
    }
    events
}

/// Values of the eigenvalue that crosses zero between two points.
fn crossing_values(p: &BranchPoint, q: &BranchPoint) -> (f64, f64) {
    let np = p.diagnostics.n_unstable_coperiodic.unwrap_or(0);
    let nq = q.diagnostics.n_unstable_coperiodic.unwrap_or(0);
    let idx = np.min(nq);
    let a = p.diagnostics.top_eigenvalues.get(idx).copied().unwrap_or(0.0);
    let b = q.diagnostics.top_eigenvalues.get(idx).copied().unwrap_or(0.0);
    (a, b)
}

/// A bifurcation candidate refined on the branch, with its critical direction.
#[derive(Clone, Debug)]
pub struct RefinedCandidate {
    pub state: StationaryState,
    /// Arclength of the refined point.
    pub s: f64,
    /// Eigenvalue closest to zero at the refined point.
    pub eigenvalue: f64,
    /// Critical eigenvector as a mean-zero symmetric field, unit L2 norm.
    pub direction: SymmetricField,
    pub tangent_v: SymmetricField,
    pub tangent_m: f64,
}

/// Refines a bifurcation candidate between points `index - 1` and `index`
/// by bisection on the crossing eigenvalue.
pub fn refine_candidate(branch: &Branch, index: usize, config: &ContinuationConfig) -> Result<RefinedCandidate> {
    if index == 0 || index >= branch.points.len() {
        return Err(Error::InvalidArgument("event index outside the branch"));
    }
    let g = branch.g;
    let p = &branch.points[index - 1];
    let q = &branch.points[index];
    let np = p.diagnostics.n_unstable_coperiodic.ok_or(Error::InvalidArgument("branch has no spectral data"))?;
    let nq = q.diagnostics.n_unstable_coperiodic.ok_or(Error::InvalidArgument("branch has no spectral data"))?;
    let idx = np.min(nq);
    let weights = metric_weights(&branch.lattice, config);
    let total = q.s - p.s;
    let solve_at = |h: f64| -> Result<(StationaryState, f64)> {
        let border = arclength_border(p, h, &weights, config);
        let mut v_pred = p.state.v.clone();
        v_pred.axpy(h, &p.tangent_v);
        let (state, _) = correct(&v_pred, p.state.m + h * p.tangent_m, g, &border, config)?;
        let values = symmetric_spectrum(&state, g)?;
        let mu = values.get(idx).copied().ok_or(Error::InadmissibleKernel)?;
        Ok((state, mu))
    };
    let (mut lo, mut hi) = (0.0, total);
    let (mut f_lo, mut f_hi) = crossing_values(p, q);
    let mut best = None;
    for _ in 0..40 {
        // regula falsi with bisection safeguard
        let mut h = if f_lo != f_hi { lo - f_lo * (hi - lo) / (f_hi - f_lo) } else { 0.5 * (lo + hi) };
        if !(h > lo + 0.05 * (hi - lo) && h < hi - 0.05 * (hi - lo)) {
            h = 0.5 * (lo + hi);
        }
        // the bordered corrector is singular exactly at a branch point, which a
        // linear crossing (the flat branch) hits to roundoff; step just off it
        let (state, mu, on_crossing) = match solve_at(h) {
            Err(Error::SingularSystem) => {
                let nudge = if h < 0.5 * (lo + hi) { 1e-6 } else { -1e-6 } * total;
                let (state, mu) = solve_at(h + nudge)?;
                (state, mu, true)
            }
            r => {
                let (state, mu) = r?;
                (state, mu, false)
            }
        };
        let done = on_crossing || mu.abs() < 1e-10 || (hi - lo) < 1e-10 * total.max(1e-12);
        best = Some((state, h, mu));
        if done {
            break;
        }
        if (mu > 0.0) == (f_lo > 0.0) {
            lo = h;
            f_lo = mu;
        } else {
            hi = h;
            f_hi = mu;
        }
    }
    let (state, h, _) = best.ok_or(Error::InadmissibleKernel)?;
    critical_direction(state, p.s + h, g, &p.tangent_v, p.tangent_m, config)
}

/// Eigenvector of the symmetric `∂_v F` eigenvalue closest to zero at `state`.
fn critical_direction(
    state: StationaryState,
    s: f64,
    g: f64,
    prev_tv: &SymmetricField,
    prev_tm: f64,
    config: &ContinuationConfig,
) -> Result<RefinedCandidate> {
    let lat = Arc::clone(state.v.lattice());
    let b = stationary::symmetric_reduced_jacobian(&state.v, state.m, g)?;
    let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    let (values, vectors) = linalg::symmetric_eigen(b);
    let (j, mu) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(j, m)| (j, *m))
        .ok_or(Error::InadmissibleKernel)?;
    // a genuine crossing has an eigenvalue at roundoff-to-refinement level
    if mu.abs() > 1e-6 * scale {
        return Err(Error::InadmissibleKernel);
    }
    let mut coeffs = vec![0.0; lat.num_orbits()];
    for (o, orbit) in lat.orbits().iter().enumerate().skip(1) {
        coeffs[o] = vectors[(o - 1, j)] / Float::sqrt(orbit.len() as f64);
    }
    let mut dir = SymmetricField::from_coeffs(&lat, coeffs)?;
    let norm = dir.norm_l2();
    dir = dir.scaled(1.0 / norm);
    let (imax, _) = dir
        .coeffs()
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .expect("nonempty");
    if dir.coeffs()[imax] < 0.0 {
        dir = -dir;
    }
    let weights = metric_weights(&lat, config);
    let prev_a: Vec<f64> = weights.iter().zip(prev_tv.coeffs()).map(|(w, t)| w * t).collect();
    // exactly at the branch point the extended matrix is singular; the
    // incoming tangent then stands in for the parent direction
    let (tv, tm) = match tangent(&state, g, &prev_a, config.weight_m * prev_tm, config) {
        Err(Error::SingularSystem) => (prev_tv.clone(), prev_tm),
        r => r?,
    };
    Ok(RefinedCandidate {
        state,
        s,
        eigenvalue: mu,
        direction: dir,
        tangent_v: tv,
        tangent_m: tm,
    })
}

/// Seeds a branch along the critical direction of the candidate at
/// `index`: the new point solves the problem with `M` free under the phase
/// condition `⟨v - v*, φ⟩ = direction s0 ⟨φ, φ⟩`.
pub fn branch_switch(branch: &Branch, index: usize, direction: i32, s0: f64, config: &ContinuationConfig) -> Result<Branch> {
    let cand = refine_candidate(branch, index, config)?;
    switch_at(branch, &cand, direction, s0, config)
}

pub fn switch_at(branch: &Branch, cand: &RefinedCandidate, direction: i32, s0: f64, config: &ContinuationConfig) -> Result<Branch> {
    let lat = Arc::clone(&branch.lattice);
    let g = branch.g;
    let weights = metric_weights(&lat, config);
    let phi = &cand.direction;
    let a: Vec<f64> = weights.iter().zip(phi.coeffs()).map(|(w, c)| w * c).collect();
    let pp: f64 = a.iter().zip(phi.coeffs()).map(|(x, c)| x * c).sum();
    let base: f64 = a.iter().zip(cand.state.v.coeffs()).map(|(x, c)| x * c).sum();
    let amp = direction as f64 * s0;
    let border = Border {
        a: a.clone(),
        a_m: 0.0,
        rhs: base + amp * pp,
    };
    let mut v_pred = cand.state.v.clone();
    v_pred.axpy(amp, phi);
    let (state, _) = correct(&v_pred, cand.state.m, g, &border, config)?;
    let (mut tv, mut tm) = tangent(&state, g, &a, 0.0, config)?;
    if direction < 0 {
        tv = -tv;
        tm = -tm;
    }
    // reject a seed that fell back onto the branch it came from
    let offset = (&state.v - &cand.state.v).inner_product_l2(phi)?;
    if offset * amp <= 0.0 {
        return Err(Error::InadmissibleKernel);
    }
    let mut out = Branch::new(lat, g, None, direction, *config);
    out.points.push(make_point(state, cand.s, tv, tm, g, config, None)?);
    Ok(out)
}

/// Recognizes a flat-state kernel supported on the orbit of `(n, 0)`.
pub fn kernel_harmonic(direction: &SymmetricField) -> Option<u32> {
    let lat = direction.lattice();
    let energies = direction.orbit_energies();
    let total: f64 = energies.iter().sum();
    let (imax, emax) = energies.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    if *emax < (1.0 - 1e-8) * total {
        return None;
    }
    let rep = lat.orbits()[imax].representative;
    let n = (lat.index_norm(rep) as f64).sqrt().round() as i32;
    (n >= 1 && lat.orbit_id((n, 0)) == Some(imax)).then_some(n as u32)
}

/// Largest `d` such that the field's energy (mean excluded) lies on the
/// sublattice `d Γ` up to a fraction `1e-8`: the cell holds `d` periods
/// per direction.
pub fn fundamental_divisor(v: &SymmetricField) -> u32 {
    let lat = v.lattice();
    let energies = v.orbit_energies();
    let total: f64 = energies.iter().skip(1).sum();
    if total == 0.0 {
        return 0;
    }
    let h = lat.max_index() as u32;
    let mut best = 1;
    for d in 2..=h.max(1) {
        let on: f64 = lat
            .orbits()
            .iter()
            .zip(&energies)
            .skip(1)
            .filter(|(o, _)| o.representative.0 % d as i32 == 0 && o.representative.1 % d as i32 == 0)
            .map(|(_, e)| e)
            .sum();
        if on >= (1.0 - 1e-8) * total {
            best = d;
        }
    }
    best
}

/// Orbit carrying most of the energy, with its share.
pub fn dominant_orbit(v: &SymmetricField) -> (usize, f64) {
    let energies = v.orbit_energies();
    let total: f64 = energies.iter().skip(1).sum();
    let (i, e) = energies
        .iter()
        .enumerate()
        .skip(1)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, e)| (i, *e))
        .unwrap_or((0, 0.0));
    (i, if total > 0.0 { e / total } else { 0.0 })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicityReport {
    pub primary_divisor: u32,
    pub secondary_divisor: u32,
    /// `|gamma|` of the dominant orbit of the switching direction over that
    /// of the primary pattern.
    pub direction_radius_ratio: f64,
    pub direction_energy_share: f64,
    pub period_doubled: bool,
}

/// Compares the periodicity of a switched branch with its parent. The
/// branch counts as period-doubled when the edge of its smallest
/// axis-aligned period cell is twice that of the primary pattern, i.e. the
/// secondary state has half the primary number of periods per cell. The
/// dominant orbit of the switching direction is reported alongside.
pub fn classify_periodicity(primary: &SymmetricField, direction: &SymmetricField, secondary: &SymmetricField) -> PeriodicityReport {
    let lat = primary.lattice();
    let dp = fundamental_divisor(primary);
    let dsec = fundamental_divisor(secondary);
    let (op, _) = dominant_orbit(primary);
    let (od, share) = dominant_orbit(direction);
    let radius = |o: usize| Float::sqrt(lat.wavenumber_sq(lat.orbits()[o].representative));
    let ratio = if op > 0 { radius(od) / radius(op) } else { 0.0 };
    PeriodicityReport {
        primary_divisor: dp,
        secondary_divisor: dsec,
        direction_radius_ratio: ratio,
        direction_energy_share: share,
        period_doubled: dp >= 2 && dsec * 2 == dp,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodalReport {
    pub max_at_origin: bool,
    pub min_at_corners: bool,
    pub cone_monotone: bool,
}

impl NodalReport {
    pub fn passes(&self) -> bool {
        self.max_at_origin && self.min_at_corners && self.cone_monotone
    }
}

const NODAL_TOL: f64 = -1e-9;
const NODAL_SAMPLES: usize = 24;

/// Nodal and cone diagnostics of a pattern with `n` periods per cell
/// direction: global maximum at the origin, minima at the corners of the
/// fundamental pattern cell and monotonicity on the fundamental wedge
/// (`∂x v, ∂y v >= 0` on `(-π/k, 0)²` for squares; `∂x v >= 0` and
/// `√3 ∂x v + ∂y v >= 0` on the triangle between the origin, a cell vertex
/// and the adjacent edge midpoint for hexagons; `k = n k0`).
pub fn nodal_check(v: &SymmetricField, n: u32) -> NodalReport {
    let lat = v.lattice();
    let k = n as f64 * lat.k0();
    let fine = v.fine_grid();
    let (gmin, gmax) = (fine.min(), fine.max());
    let span = (gmax - gmin).max(0.0);
    let tol = 1e-9 + 1e-9 * span;
    let at_origin = v.value_at([0.0, 0.0]);
    let corner = match lat.kind() {
        LatticeKind::Square => [PI / k, PI / k],
        LatticeKind::Hexagon => [-4.0 * PI / (3.0 * k), 0.0],
    };
    let at_corner = v.value_at(corner);
    let max_at_origin = at_origin >= gmax - tol && !(span > 0.0 && at_origin <= at_corner);
    let min_at_corners = at_corner <= gmin + tol;
    let mut cone_monotone = true;
    let ns = NODAL_SAMPLES;
    match lat.kind() {
        LatticeKind::Square => {
            for i in 0..=ns {
                for j in 0..=ns {
                    let x = [-PI / k * i as f64 / ns as f64, -PI / k * j as f64 / ns as f64];
                    let gr = v.gradient_at(x);
                    if gr[0] < NODAL_TOL * (1.0 + span) || gr[1] < NODAL_TOL * (1.0 + span) {
                        cone_monotone = false;
                    }
                }
            }
        }
        LatticeKind::Hexagon => {
            let vert = corner;
            let mid = [-PI / k, -PI / (Float::sqrt(3.0) * k)];
            let s3 = Float::sqrt(3.0);
            for i in 0..=ns {
                for j in 0..=(ns - i) {
                    let (a, b) = (i as f64 / ns as f64, j as f64 / ns as f64);
                    let x = [a * vert[0] + b * mid[0], a * vert[1] + b * mid[1]];
                    let gr = v.gradient_at(x);
                    if gr[0] < NODAL_TOL * (1.0 + span) || s3 * gr[0] + gr[1] < NODAL_TOL * (1.0 + span) {
                        cone_monotone = false;
                    }
                }
            }
        }
    }
    NodalReport {
        max_at_origin,
        min_at_corners,
        cone_monotone,
    }
}

/// Convenience: bifurcation point info for a flat-state crossing whose
/// kernel is supported on the orbit of `(n, 0)`.
pub fn info_from_kernel(lat: &Arc<Lattice>, g: f64, direction: &SymmetricField) -> Result<BifurcationPointInfo> {
    let n = kernel_harmonic(direction).ok_or(Error::InadmissibleKernel)?;
    localbif::bifurcation_point(lat, g, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::make_lattice;

    #[test]
    fn fnv_reference() {
        let mut h = Fnv::new();
        h.write(b"a");
        assert_eq!(h.finish(), 0xaf63dc4c8601ec8c);
        assert_eq!(ContinuationConfig::default().hash(), ContinuationConfig::default().hash());
        assert_ne!(ContinuationConfig::default().hash(), ContinuationConfig::trivial().hash());
    }

    #[test]
    fn event_labels_round_trip() {
        let f = EventFlags {
            fold: true,
            bifurcation_candidate: false,
            rupture_stop: true,
        };
        assert_eq!(f.label(), "Fold|RuptureStop");
        assert_eq!(EventFlags::parse(&f.label()), f);
        assert_eq!(EventFlags::parse(""), EventFlags::default());
    }

    #[test]
    fn nodal_reports_for_kernels() {
        for kind in [LatticeKind::Square, LatticeKind::Hexagon] {
            let lat = make_lattice(kind, 1.0, 16).unwrap();
            let k = localbif::kernel_element(&lat, 1).unwrap();
            assert!(nodal_check(&k.scaled(0.2), 1).passes());
            assert!(!nodal_check(&k.scaled(-0.2), 1).max_at_origin);
            let z = nodal_check(&SymmetricField::zeros(&lat), 1);
            assert!(z.cone_monotone && z.min_at_corners);
        }
        let lat = make_lattice(LatticeKind::Square, 0.5, 16).unwrap();
        let k2 = localbif::kernel_element(&lat, 2).unwrap();
        assert!(nodal_check(&k2, 2).passes());
    }

    #[test]
    fn divisors_and_harmonics() {
        let lat = make_lattice(LatticeKind::Square, 0.5, 16).unwrap();
        let k2 = localbif::kernel_element(&lat, 2).unwrap();
        assert_eq!(fundamental_divisor(&k2), 2);
        assert_eq!(kernel_harmonic(&k2), Some(2));
        let mixed = &k2 + &SymmetricField::from_orbit_amplitudes(&lat, &[((1, 0), 0.01)]).unwrap();
        assert_eq!(fundamental_divisor(&mixed), 1);
        assert_eq!(kernel_harmonic(&mixed), None);
    }

    #[test]
    fn trivial_scan_finds_the_first_crossing() {
        let lat = make_lattice(LatticeKind::Hexagon, 1.0, 12).unwrap();
        let cfg = ContinuationConfig::trivial();
        let branch = trivial_branch(&lat, 1.0, 7.9, &cfg).unwrap();
        let branch = extend_branch_until(branch, &cfg, |b| b.last().is_some_and(|p| p.events.bifurcation_candidate || p.state.m > 8.2));
        let events = detect_events(&branch);
        let ev = events.iter().find(|e| e.kind == EventKind::BifurcationCandidate).unwrap();
        assert!((ev.m - 8.0).abs() < 1e-9);
        let cand = refine_candidate(&branch, ev.index, &cfg).unwrap();
        assert!((cand.state.m - 8.0).abs() < 1e-8);
        assert_eq!(kernel_harmonic(&cand.direction), Some(1));
    }

    #[test]
    fn square_seed_follows_the_quadratic_expansion() {
        let lat = make_lattice(LatticeKind::Square, 1.0, 16).unwrap();
        let info = localbif::bifurcation_point(&lat, 1.0, 1).unwrap();
        let half = 0.5 * info.mddot0.unwrap();
        let cfg = ContinuationConfig::default();
        for s in [0.02, 0.01] {
            let b = seed_branch(&info, 1, s, &cfg).unwrap();
            let ratio = (b.points[0].state.m - info.m_crit) / (s * s);
            assert!((ratio - half).abs() < 0.02 * half.abs(), "{ratio} vs {half}");
        }
    }

    #[test]
    fn hexagon_seeds_on_both_sides() {
        let lat = make_lattice(LatticeKind::Hexagon, 1.0, 16).unwrap();
        let info = localbif::bifurcation_point(&lat, 1.0, 1).unwrap();
        let cfg = ContinuationConfig::default();
        let up = seed_branch(&info, 1, 0.01, &cfg).unwrap();
        let down = seed_branch(&info, -1, 0.01, &cfg).unwrap();
        assert!(up.points[0].state.m > 8.0);
        assert!(down.points[0].state.m < 8.0);
        let expect = info.mdot0 * 0.01;
        assert!(((up.points[0].state.m - 8.0) - expect).abs() < 0.05 * expect);
    }
}

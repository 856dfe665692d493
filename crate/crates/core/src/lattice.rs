//! Square and hexagonal periodicity cells, their dual Fourier lattices and
//! the dihedral symmetry orbits of lattice modes.
//!
//! Modes are addressed by integer pairs `(n1, n2)` standing for the dual
//! wave vector `n1 k1 + n2 k2`. A field with `N` modes per dimension retains
//! every orbit that fits entirely into the index box `|n_i| <= N/2 - 1`, so
//! the retained set is closed under the symmetry group and products of two
//! retained modes are resolved exactly on a `2N` grid.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::Fft2;

/// Integer lattice coordinates `(n1, n2)` of a dual wave vector.
pub type ModeIndex = (i32, i32);

/// Oversampling factor used for pointwise nonlinearities.
pub const OVERSAMPLING: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LatticeKind {
    #[serde(alias = "square")]
    Square,
    #[serde(alias = "hexagon")]
    Hexagon,
}

impl LatticeKind {
    pub fn name(self) -> &'static str {
        match self {
            LatticeKind::Square => "Square",
            LatticeKind::Hexagon => "Hexagon",
        }
    }
}

impl core::str::FromStr for LatticeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" | "Square" | "squ" => Ok(LatticeKind::Square),
            "hexagon" | "Hexagon" | "hex" => Ok(LatticeKind::Hexagon),
            _ => Err(Error::InvalidArgument("unknown lattice kind")),
        }
    }
}

/// Serializable lattice descriptor, shared by every file format.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeHeader {
    pub kind: LatticeKind,
    pub k0: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

/// A symmetry orbit of dual-lattice modes.
#[derive(Clone, Debug, PartialEq)]
pub struct Orbit {
    /// Lexicographically smallest member.
    pub representative: ModeIndex,
    pub members: Vec<ModeIndex>,
    /// `|gamma|^2 / k0^2`, an integer quadratic form of the indices.
    pub norm: i64,
}

impl Orbit {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// 2x2 integer matrix acting on index pairs.
type GroupElement = [[i32; 2]; 2];

fn act(s: &GroupElement, (n1, n2): ModeIndex) -> ModeIndex {
    (s[0][0] * n1 + s[0][1] * n2, s[1][0] * n1 + s[1][1] * n2)
}

fn compose(a: &GroupElement, b: &GroupElement) -> GroupElement {
    let mut c = [[0; 2]; 2];
    for (i, row) in c.iter_mut().enumerate() {
        for (j, entry) in row.iter_mut().enumerate() {
            *entry = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn generate_group(generators: &[GroupElement]) -> Vec<GroupElement> {
    let mut group: Vec<GroupElement> = vec![[[1, 0], [0, 1]]];
    let mut i = 0;
    while i < group.len() {
        for g in generators {
            let next = compose(g, &group[i]);
            if !group.contains(&next) {
                group.push(next);
            }
        }
        i += 1;
    }
    group
}

/// Geometry, symmetry group and spectral index set of a square or hexagonal
/// torus with absolute wave number `k0`.
#[derive(Debug)]
pub struct Lattice {
    kind: LatticeKind,
    k0: f64,
    n: usize,
    k1: [f64; 2],
    k2: [f64; 2],
    p1: [f64; 2],
    p2: [f64; 2],
    cell_area: f64,
    group: Vec<GroupElement>,
    orbits: Vec<Orbit>,
    /// Orbit id for every wrapped index of the `n x n` table, `u32::MAX` if
    /// the mode is not retained.
    lookup: Vec<u32>,
    plan: Fft2,
    fine_plan: Fft2,
}

impl PartialEq for Lattice {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.k0 == other.k0 && self.n == other.n
    }
}

/// Builds a shared lattice descriptor.
pub fn make_lattice(kind: LatticeKind, k0: f64, n: usize) -> Result<Arc<Lattice>> {
    Lattice::new(kind, k0, n).map(Arc::new)
}

impl Lattice {
    pub fn new(kind: LatticeKind, k0: f64, n: usize) -> Result<Self> {
        if !(k0 > 0.0) || !k0.is_finite() {
            return Err(Error::InvalidLattice("k0 must be positive"));
        }
        if n % 2 != 0 {
            return Err(Error::InvalidLattice("modes per dimension must be even"));
        }
        if n < 8 {
            return Err(Error::InvalidLattice("at least 8 modes per dimension are required"));
        }
        let sqrt3 = Float::sqrt(3.0_f64);
        let (k1, k2, p1, p2, generators) = match kind {
            LatticeKind::Square => (
                [k0, 0.0],
                [0.0, k0],
                [2.0 * PI / k0, 0.0],
                [0.0, 2.0 * PI / k0],
                [[[0, -1], [1, 0]], [[1, 0], [0, -1]]],
            ),
            LatticeKind::Hexagon => (
                [k0, 0.0],
                [-0.5 * k0, 0.5 * sqrt3 * k0],
                [0.0, 4.0 * PI / (sqrt3 * k0)],
                [2.0 * PI / k0, -2.0 * PI / (sqrt3 * k0)],
                // rotation by 60 degrees and reflection in the x axis
                [[[1, -1], [1, 0]], [[1, -1], [0, -1]]],
            ),
        };
        let cell_area = Float::abs(p1[0] * p2[1] - p1[1] * p2[0]);
        let group = generate_group(&generators);

        let mut lattice = Self {
            kind,
            k0,
            n,
            k1,
            k2,
            p1,
            p2,
            cell_area,
            group,
            orbits: Vec::new(),
            lookup: vec![u32::MAX; n * n],
            plan: Fft2::new(n),
            fine_plan: Fft2::new(OVERSAMPLING * n),
        };
        lattice.build_orbits();
        Ok(lattice)
    }

    fn build_orbits(&mut self) {
        let h = self.max_index();
        let mut orbits: Vec<Orbit> = Vec::new();
        for n1 in -h..=h {
            for n2 in -h..=h {
                let members = self.symmetry_orbit((n1, n2));
                if members[0] != (n1, n2) {
                    // visited through its representative
                    continue;
                }
                if members.iter().all(|&(a, b)| a.abs() <= h && b.abs() <= h) {
                    orbits.push(Orbit {
                        representative: members[0],
                        norm: self.index_norm((n1, n2)),
                        members,
                    });
                }
            }
        }
        orbits.sort_by(|a, b| {
            a.norm
                .cmp(&b.norm)
                .then_with(|| a.representative.cmp(&b.representative))
        });
        for (id, orbit) in orbits.iter().enumerate() {
            for &m in &orbit.members {
                let slot = self.wrap(m, self.n);
                self.lookup[slot] = id as u32;
            }
        }
        self.orbits = orbits;
    }

    pub fn kind(&self) -> LatticeKind {
        self.kind
    }

    pub fn k0(&self) -> f64 {
        self.k0
    }

    /// Spectral truncation per lattice direction.
    pub fn modes_per_dim(&self) -> usize {
        self.n
    }

    /// Largest retained index magnitude, `N/2 - 1`.
    pub fn max_index(&self) -> i32 {
        (self.n / 2) as i32 - 1
    }

    pub fn generators(&self) -> ([f64; 2], [f64; 2]) {
        (self.k1, self.k2)
    }

    pub fn periods(&self) -> ([f64; 2], [f64; 2]) {
        (self.p1, self.p2)
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_area
    }

    pub fn header(&self) -> LatticeHeader {
        LatticeHeader {
            kind: self.kind,
            k0: self.k0,
            n: self.n,
        }
    }

    /// Real-space vectors spanning the grid: `k_i . a_j = 2 pi delta_ij`.
    pub fn grid_axes(&self) -> ([f64; 2], [f64; 2]) {
        match self.kind {
            LatticeKind::Square => (self.p1, self.p2),
            LatticeKind::Hexagon => (
                [self.p1[0] + self.p2[0], self.p1[1] + self.p2[1]],
                self.p1,
            ),
        }
    }

    /// Cartesian position of grid node `(j1, j2)` on an `m x m` grid.
    pub fn grid_point(&self, j1: usize, j2: usize, m: usize) -> [f64; 2] {
        let (a1, a2) = self.grid_axes();
        let t1 = j1 as f64 / m as f64;
        let t2 = j2 as f64 / m as f64;
        [t1 * a1[0] + t2 * a2[0], t1 * a1[1] + t2 * a2[1]]
    }

    /// `n1 k1 + n2 k2` in Cartesian coordinates.
    pub fn dual_wavevector(&self, n1: i32, n2: i32) -> [f64; 2] {
        let (a, b) = (n1 as f64, n2 as f64);
        [a * self.k1[0] + b * self.k2[0], a * self.k1[1] + b * self.k2[1]]
    }

    /// `|gamma|^2 / k0^2` as an exact integer.
    pub fn index_norm(&self, (n1, n2): ModeIndex) -> i64 {
        let (a, b) = (n1 as i64, n2 as i64);
        match self.kind {
            LatticeKind::Square => a * a + b * b,
            LatticeKind::Hexagon => a * a + b * b - a * b,
        }
    }

    /// `|gamma|^2` for the mode `(n1, n2)`.
    pub fn wavenumber_sq(&self, index: ModeIndex) -> f64 {
        self.k0 * self.k0 * self.index_norm(index) as f64
    }

    /// Orbit of a mode under D4 (square) or D6 (hexagon); the group contains
    /// the point reflection, so the orbit is closed under `gamma -> -gamma`.
    /// Sorted, first element is the representative.
    pub fn symmetry_orbit(&self, index: ModeIndex) -> Vec<ModeIndex> {
        let mut members: Vec<ModeIndex> = self.group.iter().map(|s| act(s, index)).collect();
        members.sort_unstable();
        members.dedup();
        members
    }

    /// Number of elements of the dihedral group (8 or 12).
    pub fn group_order(&self) -> usize {
        self.group.len()
    }

    /// Applies every group element to `index`, in a fixed order.
    pub fn group_images(&self, index: ModeIndex) -> Vec<ModeIndex> {
        self.group.iter().map(|s| act(s, index)).collect()
    }

    /// Indices whose wave vector has length `k0`.
    pub fn critical_wave_indices(&self) -> Vec<ModeIndex> {
        self.symmetry_orbit((1, 0))
            .into_iter()
            .filter(|&m| self.index_norm(m) == 1)
            .collect()
    }

    pub fn orbits(&self) -> &[Orbit] {
        &self.orbits
    }

    pub fn num_orbits(&self) -> usize {
        self.orbits.len()
    }

    /// Position of the orbit containing `index` in the coefficient vector.
    pub fn orbit_id(&self, index: ModeIndex) -> Option<usize> {
        let h = self.max_index();
        if index.0.abs() > h || index.1.abs() > h {
            return None;
        }
        match self.lookup[self.wrap(index, self.n)] {
            u32::MAX => None,
            id => Some(id as usize),
        }
    }

    /// Every retained mode, orbit by orbit.
    pub fn retained_modes(&self) -> impl Iterator<Item = (usize, ModeIndex)> + '_ {
        self.orbits
            .iter()
            .enumerate()
            .flat_map(|(id, o)| o.members.iter().map(move |&m| (id, m)))
    }

    pub fn num_retained_modes(&self) -> usize {
        self.orbits.iter().map(Orbit::len).sum()
    }

    /// Wrapped row-major slot of `index` in an `m x m` table.
    pub fn wrap(&self, (n1, n2): ModeIndex, m: usize) -> usize {
        let m_i = m as i32;
        let r = n1.rem_euclid(m_i) as usize;
        let c = n2.rem_euclid(m_i) as usize;
        r * m + c
    }

    pub(crate) fn with_plan<R>(&self, m: usize, f: impl FnOnce(&Fft2) -> R) -> R {
        if m == self.n {
            f(&self.plan)
        } else if m == self.fine_plan.size() {
            f(&self.fine_plan)
        } else {
            f(&Fft2::new(m))
        }
    }

    /// Size of the oversampled grid used for nonlinear terms.
    pub fn fine_size(&self) -> usize {
        OVERSAMPLING * self.n
    }

    pub fn same_as(&self, other: &Lattice) -> bool {
        core::ptr::eq(self, other) || self == other
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;
    use num_complex::Complex64;

    fn lat(kind: LatticeKind, k0: f64, n: usize) -> Lattice {
        Lattice::new(kind, k0, n).unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Lattice::new(LatticeKind::Square, 0.0, 16).is_err());
        assert!(Lattice::new(LatticeKind::Square, -1.0, 16).is_err());
        assert!(Lattice::new(LatticeKind::Square, 1.0, 15).is_err());
        assert!(Lattice::new(LatticeKind::Hexagon, 1.0, 6).is_err());
    }

    #[test]
    fn square_periods() {
        let l = lat(LatticeKind::Square, 1.0, 64);
        let (p1, p2) = l.periods();
        assert!((p1[0] - 2.0 * PI).abs() < 1e-14 && p1[1] == 0.0);
        assert!(p2[0] == 0.0 && (p2[1] - 2.0 * PI).abs() < 1e-14);
        assert!((l.cell_area() - 4.0 * PI * PI).abs() < 1e-12);
        let half = lat(LatticeKind::Square, 0.5, 100);
        assert!((half.periods().0[0] - 4.0 * PI).abs() < 1e-14);
    }

    #[test]
    fn hexagon_cell_area() {
        let l = lat(LatticeKind::Hexagon, 1.0, 64);
        let expect = 8.0 * PI * PI / 3f64.sqrt();
        assert!((l.cell_area() - expect).abs() < 1e-12);
    }

    #[test]
    fn dual_wavevectors() {
        let s = lat(LatticeKind::Square, 1.3, 16);
        assert_eq!(s.dual_wavevector(1, 0), [1.3, 0.0]);
        let h = lat(LatticeKind::Hexagon, 1.0, 16);
        let g = h.dual_wavevector(1, 1);
        assert!((g[0] - 0.5).abs() < 1e-15 && (g[1] - 3f64.sqrt() / 2.0).abs() < 1e-15);
        let g = h.dual_wavevector(2, 1);
        assert!((g[0] - 1.5).abs() < 1e-15 && (g[1] - 3f64.sqrt() / 2.0).abs() < 1e-15);
        assert!(((g[0] * g[0] + g[1] * g[1]).sqrt() - 3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn duality_with_periods() {
        for kind in [LatticeKind::Square, LatticeKind::Hexagon] {
            let l = lat(kind, 0.7, 16);
            let (p1, p2) = l.periods();
            for n1 in -7..=7 {
                for n2 in -7..=7 {
                    let g = l.dual_wavevector(n1, n2);
                    for p in [p1, p2] {
                        let phase = g[0] * p[0] + g[1] * p[1];
                        let z = Complex64::new(0.0, phase).exp();
                        assert!((z - 1.0).norm() < 1e-12, "{kind:?} ({n1},{n2})");
                    }
                }
            }
        }
    }

    #[test]
    fn group_orders() {
        assert_eq!(lat(LatticeKind::Square, 1.0, 8).group_order(), 8);
        assert_eq!(lat(LatticeKind::Hexagon, 1.0, 8).group_order(), 12);
    }

    #[test]
    fn orbits_of_critical_modes() {
        let s = lat(LatticeKind::Square, 1.0, 16);
        assert_eq!(s.symmetry_orbit((1, 0)), vec![(-1, 0), (0, -1), (0, 1), (1, 0)]);
        assert_eq!(s.symmetry_orbit((0, 0)), vec![(0, 0)]);
        let h = lat(LatticeKind::Hexagon, 1.0, 16);
        assert_eq!(
            h.symmetry_orbit((1, 0)),
            vec![(-1, -1), (-1, 0), (0, -1), (0, 1), (1, 0), (1, 1)]
        );
        assert_eq!(h.symmetry_orbit((0, 0)), vec![(0, 0)]);
        assert_eq!(s.critical_wave_indices().len(), 4);
        assert_eq!(h.critical_wave_indices().len(), 6);
        assert!(h.critical_wave_indices().contains(&(1, 1)));
    }

    #[test]
    fn orbit_closure_and_isometry() {
        for kind in [LatticeKind::Square, LatticeKind::Hexagon] {
            let l = lat(kind, 0.9, 16);
            for orbit in l.orbits() {
                let r = l.wavenumber_sq(orbit.representative);
                for &m in &orbit.members {
                    let g = l.dual_wavevector(m.0, m.1);
                    assert!(((g[0] * g[0] + g[1] * g[1]) - r).abs() < 1e-12);
                    for image in l.group_images(m) {
                        assert!(orbit.members.contains(&image));
                    }
                }
            }
            let crit = l.critical_wave_indices();
            let o = l.symmetry_orbit((1, 0));
            assert!(crit.iter().all(|c| o.contains(c)));
        }
    }

    #[test]
    fn orbit_table_layout() {
        for kind in [LatticeKind::Square, LatticeKind::Hexagon] {
            let l = lat(kind, 1.0, 16);
            assert_eq!(l.orbits()[0].members, vec![(0, 0)]);
            assert_eq!(l.orbit_id((0, 0)), Some(0));
            assert_eq!(l.orbit_id((1, 0)), Some(1));
            assert_eq!(l.orbit_id((40, 0)), None);
            for (id, orbit) in l.orbits().iter().enumerate() {
                for &m in &orbit.members {
                    assert_eq!(l.orbit_id(m), Some(id));
                }
            }
        }
    }
}

//! Every emitted file format round-trips through its reader.

use marangoni::core::continuation::{extend_branch, seed_branch, ContinuationConfig};
use marangoni::core::localbif::bifurcation_point;
use marangoni::core::{make_lattice, LatticeKind, SymmetricField};
use marangoni::io::{self, BranchSummary, Encoding, Snapshot, TrajectoryRow};
use proptest::prelude::*;

fn field(kind: LatticeKind, k0: f64, n: usize, coeffs: &[f64]) -> SymmetricField {
    let lat = make_lattice(kind, k0, n).unwrap();
    let mut c: Vec<f64> = (0..lat.num_orbits()).map(|o| coeffs[o % coeffs.len()] / (1.0 + o as f64)).collect();
    c[0] = 0.0;
    // keep the height positive so the reader accepts it
    let v = SymmetricField::from_coeffs(&lat, c).unwrap();
    let fine = v.fine_grid();
    let peak = fine.max().max(-fine.min());
    if peak > 0.5 {
        v.scaled(0.5 / peak)
    } else {
        v
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn snapshots_round_trip(
        hex in any::<bool>(),
        k0 in 0.3..2.0f64,
        n in prop_oneof![Just(8usize), Just(12), Just(16)],
        coeffs in proptest::collection::vec(-0.3..0.3f64, 1..40),
        m in 0.0..20.0f64,
        s in -1.0..1.0f64,
        binary in any::<bool>(),
    ) {
        let kind = if hex { LatticeKind::Hexagon } else { LatticeKind::Square };
        let v = field(kind, k0, n, &coeffs);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.snap");
        let snap = Snapshot { v: v.clone(), g: 1.5, m, s };
        let encoding = if binary { Encoding::F64le } else { Encoding::Text };
        io::write_snapshot(&path, &snap, encoding).unwrap();
        let back = io::read_snapshot(&path).unwrap();
        prop_assert!(back.v.lattice().same_as(v.lattice()));
        prop_assert!(back.v.max_abs_diff(&v) <= 1e-14);
        prop_assert_eq!((back.g, back.m, back.s), (1.5, m, s));
    }

    #[test]
    fn trajectories_round_trip(rows in proptest::collection::vec((0.0..10.0f64, -1.0..1.0f64, -1.0..0.0f64, 0.0..5.0f64), 0..30)) {
        let rows: Vec<TrajectoryRow> = rows
            .into_iter()
            .map(|(t, mass, min_v, l2_norm)| TrajectoryRow { t, mass, min_v, l2_norm })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trajectory.csv");
        io::write_trajectory_csv(&path, &rows).unwrap();
        prop_assert_eq!(io::read_trajectory_csv(&path).unwrap(), rows);
    }
}

#[test]
fn inadmissible_snapshots_are_flagged() {
    let lat = make_lattice(LatticeKind::Square, 1.0, 8).unwrap();
    let v = SymmetricField::from_orbit_amplitudes(&lat, &[((1, 0), 0.3)]).unwrap();
    assert!(io::check_admissible(&v).is_err());
    assert!(io::check_admissible(&v.scaled(0.5)).is_ok());
}

#[test]
fn branch_tables_and_summaries_round_trip() {
    let lat = make_lattice(LatticeKind::Hexagon, 1.0, 12).unwrap();
    let info = bifurcation_point(&lat, 1.0, 1).unwrap();
    let cfg = ContinuationConfig {
        max_steps: 15,
        ..ContinuationConfig::default()
    };
    let branch = extend_branch(seed_branch(&info, 1, 0.01, &cfg).unwrap(), &cfg);
    let rows = io::branch_rows(&branch);
    assert_eq!(rows.len(), branch.points.len());

    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("branch_up.csv");
    io::write_branch_csv(&csv, &rows).unwrap();
    assert_eq!(io::read_branch_csv(&csv).unwrap(), rows);

    let empty = dir.path().join("empty.csv");
    io::write_branch_csv(&empty, &[]).unwrap();
    assert!(io::read_branch_csv(&empty).unwrap().is_empty());

    let summary = BranchSummary::new("up", &branch, vec![]);
    let json = dir.path().join("branch_up.json");
    io::write_json(&json, &summary).unwrap();
    let back: BranchSummary = io::read_json(&json).unwrap();
    assert_eq!(back, summary);
    assert_eq!(back.config_hash, format!("{:016x}", branch.config_hash));
}

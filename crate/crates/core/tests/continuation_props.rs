//! Invariants of pseudo-arclength continuation along a primary branch.

use marangoni_core::continuation::{extend_branch, seed_branch, ContinuationConfig, Diagnostics};
use marangoni_core::localbif::bifurcation_point;
use marangoni_core::stationary::{newton_solve, residual};
use marangoni_core::{make_lattice, LatticeKind};

#[test]
fn tangents_vary_continuously_and_points_are_solutions() {
    for (kind, direction) in [(LatticeKind::Square, 1), (LatticeKind::Hexagon, 1), (LatticeKind::Hexagon, -1)] {
        let lat = make_lattice(kind, 1.0, 12).unwrap();
        let info = bifurcation_point(&lat, 1.0, 1).unwrap();
        let cfg = ContinuationConfig {
            max_steps: 40,
            ..ContinuationConfig::default()
        };
        let branch = extend_branch(seed_branch(&info, direction, 0.05, &cfg).unwrap(), &cfg);
        assert!(branch.points.len() > 30, "{kind:?} {direction}: {} points", branch.points.len());
        for pair in branch.points.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let cos = a.tangent_v.inner_product_l2(&b.tangent_v).unwrap() + a.tangent_m * b.tangent_m;
            assert!(cos > 0.95, "{kind:?} {direction}: tangent turn cos = {cos} at s = {}", b.s);
            assert!(b.s > a.s && b.s - a.s <= cfg.ds_max * (1.0 + 1e-12));
        }
        for p in branch.points.iter().step_by(10) {
            assert!(residual(&p.state.v, p.state.m, 1.0).unwrap().norm_x() < 1e-9);
            let again = newton_solve(&p.state.v, p.state.m, 1.0, 1e-11, 10).unwrap();
            assert!(again.v.max_abs_diff(&p.state.v) < 1e-8);
            let d = Diagnostics::compute(&p.state).unwrap();
            assert_eq!(d.min_v, p.diagnostics.min_v);
            assert_eq!(d.l2_norm, p.diagnostics.l2_norm);
        }
    }
}

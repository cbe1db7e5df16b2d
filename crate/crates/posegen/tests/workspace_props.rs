//! Working-space construction, spherical coordinates and stratified
//! selection.

use std::f64::consts::PI;

use llie_posegen::chain::Joints;
use llie_posegen::config::PoseConfig;
use llie_posegen::geometry::Aabb;
use llie_posegen::io::{projection_csvs, WorkspaceRow};
use llie_posegen::sampling::{occupancy, random_sample, stratified_sample, strata, to_spherical, variance, Bins, Spherical};
use llie_posegen::workspace::{build_workspace, collide, spin_capture_poses, CollisionScene, Workspace, SPIN_POSES};
use llie_posegen::PosegenError;
use nalgebra::{Point3, Vector3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn build(cfg: &PoseConfig, scene: &CollisionScene, n: usize) -> Result<Workspace, PosegenError> {
    build_workspace(&cfg.chain()?, scene, &cfg.camera(), n, &cfg.home, 0)
}

fn feasible_flags(ws: &Workspace) -> Vec<bool> {
    ws.records.iter().map(|r| r.feasible).collect()
}

#[test]
fn obstacle_free_scene_accepts_every_candidate() {
    let cfg = PoseConfig::default();
    let scene = CollisionScene { table: None, self_collision: false, ..cfg.scene() };
    let ws = build(&cfg, &scene, 200).unwrap();
    assert_eq!(ws.feasible().count(), 200);
    let chain = cfg.chain().unwrap();
    assert!(ws.records.iter().all(|r| chain.within_limits(&r.q)));
}

#[test]
fn unreachable_table_changes_nothing() {
    let cfg = PoseConfig::default();
    let no_table = CollisionScene { table: None, ..cfg.scene() };
    let high = CollisionScene { table: Some(Aabb { min: [-5.0, -5.0, 5.0], max: [5.0, 5.0, 6.0] }), ..cfg.scene() };
    assert_eq!(feasible_flags(&build(&cfg, &no_table, 200).unwrap()), feasible_flags(&build(&cfg, &high, 200).unwrap()));
}

#[test]
fn feasibility_shrinks_as_payload_grows() {
    let mut counts = Vec::new();
    let mut previous: Option<Vec<bool>> = None;
    for radius in [0.02, 0.05, 0.08, 0.12] {
        let mut cfg = PoseConfig::default();
        cfg.payload.radius = radius;
        let flags = match build(&cfg, &cfg.scene(), 200) {
            Ok(ws) => feasible_flags(&ws),
            Err(PosegenError::NoFeasible { .. }) => vec![false; 200],
            Err(e) => panic!("{e}"),
        };
        if let Some(prev) = &previous {
            // nested geometry: anything feasible now was feasible before
            assert!(flags.iter().zip(prev).all(|(&now, &before)| !now || before));
        }
        counts.push(flags.iter().filter(|&&f| f).count());
        previous = Some(flags);
    }
    assert!(counts.windows(2).all(|w| w[1] <= w[0]), "{counts:?}");
    assert!(counts[0] > counts[3], "{counts:?}");
}

#[test]
fn feasible_records_survive_a_recheck() {
    let cfg = PoseConfig::default();
    let (chain, scene) = (cfg.chain().unwrap(), cfg.scene());
    let ws = build(&cfg, &scene, 300).unwrap();
    assert!(ws.feasible().count() > 50);
    assert!(ws.rejections.trajectory + ws.rejections.spin > 0);
    for r in ws.feasible() {
        assert_eq!(r.trajectory.first(), Some(&cfg.home));
        assert_eq!(r.trajectory.last(), Some(&r.q));
        assert!(r.trajectory.iter().all(|q| !collide(&chain, &scene, q, 0.0)));
        for k in 0..SPIN_POSES {
            assert!(!collide(&chain, &scene, &r.q, k as f64 * 10f64.to_radians()));
        }
    }
    for r in ws.records.iter().filter(|r| !r.feasible) {
        assert!(r.trajectory.is_empty());
    }
}

#[test]
fn projections_hold_only_feasible_positions() {
    let cfg = PoseConfig::default();
    let chain = cfg.chain().unwrap();
    let ws = build(&cfg, &cfg.scene(), 150).unwrap();
    let rows: Vec<WorkspaceRow> = ws.records.iter().map(WorkspaceRow::from).collect();
    let (xz, yz) = projection_csvs(&chain, &rows);
    let n = ws.feasible().count();
    assert_eq!(xz.lines().count(), n + 1);
    assert_eq!(yz.lines().count(), n + 1);
    let expected: Vec<String> = ws
        .feasible()
        .map(|r| {
            let p = chain.fk(&r.q).end_effector();
            format!("{},{}", p.x, p.z)
        })
        .collect();
    assert_eq!(xz.lines().skip(1).collect::<Vec<_>>(), expected);
}

#[test]
fn blocked_home_reports_rejection_histogram() {
    let cfg = PoseConfig::default();
    let engulfing = CollisionScene { table: Some(Aabb { min: [-2.0; 3], max: [2.0; 3] }), ..cfg.scene() };
    match build(&cfg, &engulfing, 40) {
        Err(PosegenError::NoFeasible { candidates, rejections }) => {
            assert_eq!(candidates, 40);
            assert_eq!(rejections.trajectory, 40);
            assert!(format!("{rejections}").contains("trajectory collision 40"));
        }
        other => panic!("expected no feasible pose, got {:?}", other.map(|w| w.records.len())),
    }
}

#[test]
fn workspace_is_deterministic() {
    let cfg = PoseConfig::default();
    let a = build(&cfg, &cfg.scene(), 100).unwrap();
    let b = build(&cfg, &cfg.scene(), 100).unwrap();
    let rows = |w: &Workspace| w.records.iter().map(WorkspaceRow::from).collect::<Vec<_>>();
    assert_eq!(rows(&a), rows(&b));
}

#[test]
fn camera_on_payload_axis() {
    let cfg = PoseConfig::default();
    let chain = cfg.chain().unwrap();
    let q: Joints = [0.3, -1.0, 0.7, -0.4, 0.9, 1.1];
    let body = chain.fk(&q).body;
    let d = 0.4;
    let cam = body * Point3::new(0.0, 0.0, d);
    let s = to_spherical(&chain, &q, &cam);
    assert!((s.r - d).abs() < 1e-12 && (s.elevation - PI / 2.0).abs() < 1e-6);
    assert_eq!(s.azimuth, 0.0);
    // spinning the payload about its own axis keeps the camera distance
    for k in 0..SPIN_POSES {
        let mut spun = q;
        spun[5] += k as f64 * 10f64.to_radians();
        let other = Point3::new(0.5, -0.2, 0.3);
        let r0 = to_spherical(&chain, &q, &other).r;
        assert!((to_spherical(&chain, &spun, &cam).r - d).abs() < 1e-12);
        assert!((to_spherical(&chain, &spun, &other).r - r0).abs() < 1e-12);
    }
}

#[test]
fn spin_poses_step_the_terminal_joint() {
    let cfg = PoseConfig::default();
    let chain = cfg.chain().unwrap();
    let q: Joints = [0.1, -1.2, 0.5, -0.3, 0.2, 5.0];
    let poses = spin_capture_poses(&chain, &q).unwrap();
    assert_eq!(poses.len(), 36);
    for p in &poses {
        assert_eq!(p[..5], q[..5]);
        assert!(chain.within_limits(p));
    }
    let turn = |a: f64| (a - q[5]).rem_euclid(2.0 * PI);
    assert!((turn(poses[18][5]) - PI).abs() < 1e-12);
    for (i, p) in poses.iter().enumerate() {
        let want = (i as f64 * 10f64.to_radians()).rem_euclid(2.0 * PI);
        let got = turn(p[5]);
        assert!((got - want).abs() < 1e-12 || (got - want).abs() > 2.0 * PI - 1e-12, "pose {i}");
    }
}

fn feasible_points() -> Vec<Spherical> {
    let cfg = PoseConfig::default();
    build(&cfg, &cfg.scene(), 600).unwrap().feasible().map(|r| r.spherical).collect()
}

#[test]
fn stratified_beats_random_occupancy_variance() {
    let pts = feasible_points();
    let bins = Bins { r: 2, az: 4, el: 2 };
    let nonempty = strata(&pts, bins).iter().filter(|g| !g.is_empty()).count();
    assert!(nonempty <= 20 && nonempty >= 8, "{nonempty} nonempty strata");
    let mut wins = 0;
    for trial in 0..100u64 {
        let sel = stratified_sample(&pts, bins, 20, &mut ChaCha8Rng::seed_from_u64(trial));
        assert_eq!(sel.indices.len(), 20);
        let occ = occupancy(&pts, bins, &sel.indices);
        assert!(occ.iter().all(|&c| c >= 1), "trial {trial}: a nonempty stratum was missed");
        let rnd = random_sample(pts.len(), 20, &mut ChaCha8Rng::seed_from_u64(1000 + trial));
        if variance(&occ) < variance(&occupancy(&pts, bins, &rnd)) {
            wins += 1;
        }
    }
    assert!(wins >= 95, "stratified won {wins}/100");
}

#[test]
fn stratified_selection_is_seeded() {
    let pts = feasible_points();
    let bins = Bins { r: 3, az: 3, el: 3 };
    let a = stratified_sample(&pts, bins, 25, &mut ChaCha8Rng::seed_from_u64(9));
    assert_eq!(a, stratified_sample(&pts, bins, 25, &mut ChaCha8Rng::seed_from_u64(9)));
    let occ = occupancy(&pts, bins, &a.indices);
    let floor = 25 / a.nonempty_strata;
    let sizes: Vec<usize> = strata(&pts, bins).into_iter().filter(|g| !g.is_empty()).map(|g| g.len()).collect();
    for (c, size) in occ.iter().zip(sizes) {
        assert!(*c >= floor.min(size));
    }
}

proptest! {
    #[test]
    fn spherical_round_trip(x in -2.0f64..2.0, y in -2.0f64..2.0, z in -2.0f64..2.0) {
        let v = Vector3::new(x, y, z);
        prop_assume!(v.norm() > 1e-3 && x.hypot(y) > 1e-9);
        let s = Spherical::from_cartesian(&v);
        let back = Spherical::from_cartesian(&s.to_cartesian());
        prop_assert!((s.r - back.r).abs() <= 1e-12);
        prop_assert!((s.azimuth - back.azimuth).abs() <= 1e-12);
        prop_assert!((s.elevation - back.elevation).abs() <= 1e-12);
    }
}

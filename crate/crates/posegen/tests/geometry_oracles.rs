//! Halton prefixes, kinematics and capsule distances against independent
//! oracles.

use std::f64::consts::PI;

use llie_posegen::chain::{DhRow, KinematicChain};
use llie_posegen::config::PoseConfig;
use llie_posegen::geometry::{segment_box_distance, Aabb, Capsule};
use llie_posegen::halton::{halton, halton_point, star_discrepancy_2d};
use nalgebra::{Point3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Digits of `n` in `base`, least significant first, read back as the
/// fraction 0.d0 d1 d2 ... in that base.
fn radical_inverse_oracle(n: u64, base: u64) -> f64 {
    let mut digits = Vec::new();
    let mut m = n;
    while m > 0 {
        digits.push(m % base);
        m /= base;
    }
    let mut num: u128 = 0;
    for &d in &digits {
        num = num * base as u128 + d as u128;
    }
    num as f64 / (base as u128).pow(digits.len() as u32) as f64
}

#[test]
fn halton_prefixes_match_radical_inverse() {
    for base in [2u64, 3, 5, 7, 11, 13] {
        for n in 0..4096 {
            assert_eq!(halton(n, base), radical_inverse_oracle(n, base), "n={n} base={base}");
        }
    }
    let base2: Vec<f64> = (1..=7).map(|n| halton(n, 2)).collect();
    assert_eq!(base2, [0.5, 0.25, 0.75, 0.125, 0.625, 0.375, 0.875]);
    let base3: Vec<f64> = (1..=4).map(|n| halton(n, 3)).collect();
    assert_eq!(base3, [1.0 / 3.0, 2.0 / 3.0, 1.0 / 9.0, 4.0 / 9.0]);
}

#[test]
fn halton_points_are_in_unit_cube() {
    for n in 0..2000 {
        assert!(halton_point(n, 6).iter().all(|v| (0.0..1.0).contains(v)));
    }
}

#[test]
fn halton_beats_random_on_star_discrepancy() {
    let h: Vec<[f64; 2]> = (1..=256).map(|n| [halton(n, 2), halton(n, 3)]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let r: Vec<[f64; 2]> = (0..256).map(|_| [rng.random(), rng.random()]).collect();
    let (dh, dr) = (star_discrepancy_2d(&h), star_discrepancy_2d(&r));
    assert!(dh < dr, "halton {dh} vs random {dr}");
    // grid of anchored boxes gives a lower bound on the exact supremum
    for pts in [&h, &r] {
        let mut lower = 0.0f64;
        for i in 1..=100 {
            for j in 1..=100 {
                let (u, v) = (i as f64 / 100.0, j as f64 / 100.0);
                let c = pts.iter().filter(|p| p[0] < u && p[1] < v).count() as f64 / 256.0;
                lower = lower.max((c - u * v).abs());
            }
        }
        assert!(lower <= star_discrepancy_2d(pts) + 1e-12);
    }
}

fn mat_mul(a: &[[f64; 4]; 4], b: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Textbook DH matrix written out entry by entry.
fn dh_matrix(row: &DhRow, q: f64) -> [[f64; 4]; 4] {
    let th = q + row.theta_offset;
    let (ct, st, ca, sa) = (th.cos(), th.sin(), row.alpha.cos(), row.alpha.sin());
    [
        [ct, -st * ca, st * sa, row.a * ct],
        [st, ct * ca, -ct * sa, row.a * st],
        [0.0, sa, ca, row.d],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

fn chain() -> KinematicChain {
    PoseConfig::default().chain().unwrap()
}

#[test]
fn fk_matches_hand_composed_matrices() {
    let chain = chain();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let zero = [0.0; 6];
    let random: [f64; 6] = std::array::from_fn(|_| rng.random_range(-PI..PI));
    for q in [zero, random] {
        let mut m = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
        for (j, row) in chain.dh.iter().enumerate() {
            m = mat_mul(&m, &dh_matrix(row, q[j]));
        }
        let fk = chain.fk(&q);
        let h = fk.flange.to_homogeneous();
        for i in 0..4 {
            for j in 0..4 {
                assert!((h[(i, j)] - m[i][j]).abs() < 1e-12, "q={q:?} ({i},{j})");
            }
        }
    }
}

#[test]
fn base_half_turn_flips_x_and_y() {
    let chain = chain();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let q: [f64; 6] = std::array::from_fn(|_| rng.random_range(-PI..PI));
        let mut turned = q;
        turned[0] += PI;
        let (a, b) = (chain.fk(&q).end_effector(), chain.fk(&turned).end_effector());
        assert!((a.x + b.x).abs() < 1e-12 && (a.y + b.y).abs() < 1e-12 && (a.z - b.z).abs() < 1e-12);
        assert_eq!(chain.fk(&q).end_effector(), a);
    }
}

fn point_segment_distance(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    let ab: Vector3<f64> = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 == 0.0 { 0.0 } else { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) };
    (p - (a + ab * t)).norm()
}

const DENSE: usize = 10_000;

/// Minimum over dense samples on the first segment of the exact point
/// distance to the second. Overestimates by at most half the sample spacing.
fn dense_distance(a: &Capsule, b: &Capsule) -> f64 {
    (0..=DENSE)
        .map(|i| {
            let p = a.a + (a.b - a.a) * (i as f64 / DENSE as f64);
            point_segment_distance(&p, &b.a, &b.b)
        })
        .fold(f64::INFINITY, f64::min)
}

fn random_point(rng: &mut ChaCha8Rng) -> Point3<f64> {
    Point3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5))
}

/// Segment of length ≤ 1 so the dense-sampling error stays under 5e-5.
fn random_capsule(rng: &mut ChaCha8Rng) -> Capsule {
    let a = random_point(rng);
    let dir = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let len = rng.random_range(0.0..1.0);
    let b = a + dir.normalize() * len;
    Capsule::new(a, b, rng.random_range(0.01..0.3))
}

#[test]
fn capsule_decisions_agree_with_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut ambiguous, mut hits) = (0, 0);
    for k in 0..10_000 {
        let a = random_capsule(&mut rng);
        let mut b = random_capsule(&mut rng);
        if k % 5 == 0 {
            // nearly parallel neighbours are the hard case
            let off = Vector3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
            b = Capsule::new(a.a + off, a.b + off + Vector3::new(1e-9, 0.0, 0.0), b.radius);
        }
        let exact = a.clearance(&b) + a.radius + b.radius;
        let dense = dense_distance(&a, &b);
        assert!((exact - dense).abs() <= 1e-4, "pair {k}: exact {exact} dense {dense}");
        let oracle_hit = dense - a.radius - b.radius <= 0.0;
        if (dense - a.radius - b.radius).abs() <= 1e-4 {
            ambiguous += 1;
        } else {
            assert_eq!(a.intersects(&b), oracle_hit, "pair {k}");
        }
        hits += usize::from(oracle_hit);
    }
    assert!(hits > 1000 && hits < 9000, "hits {hits}");
    assert!(ambiguous < 50);
}

#[test]
fn box_distance_agrees_with_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..2000 {
        let c = random_capsule(&mut rng);
        let lo = random_point(&mut rng);
        let bx = Aabb {
            min: [lo.x, lo.y, lo.z],
            max: [lo.x + rng.random_range(0.0..0.5), lo.y + rng.random_range(0.0..0.5), lo.z + rng.random_range(0.0..0.5)],
        };
        let dense = (0..=DENSE)
            .map(|i| bx.distance_to_point(&(c.a + (c.b - c.a) * (i as f64 / DENSE as f64))))
            .fold(f64::INFINITY, f64::min);
        let exact = segment_box_distance(&c.a, &c.b, &bx);
        assert!(exact <= dense + 1e-12 && dense - exact <= 1e-4, "exact {exact} dense {dense}");
    }
}

proptest! {
    #[test]
    fn capsule_distance_is_symmetric(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (random_capsule(&mut rng), random_capsule(&mut rng));
        prop_assert!((a.clearance(&b) - b.clearance(&a)).abs() <= 1e-12);
        let flipped = Capsule::new(b.b, b.a, b.radius);
        prop_assert!((a.clearance(&b) - a.clearance(&flipped)).abs() <= 1e-12);
    }
}

//! Collision checks and construction of the collision-free working space.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::Point3;

use crate::chain::{Joints, KinematicChain};
use crate::geometry::{Aabb, Capsule};
use crate::halton::halton_point;
use crate::sampling::{to_spherical, Spherical};
use crate::PosegenError;

pub const SPIN_POSES: usize = 36;
pub const SPIN_STEP: f64 = 10.0 * PI / 180.0;
pub const INTERP_STEP: f64 = 2.0 * PI / 180.0;
/// Flange position error allowed between a trajectory's end and its target.
pub const ARRIVAL_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct CollisionScene {
    /// One radius per link `o_i → o_{i+1}`.
    pub link_radii: [f64; 6],
    pub table: Option<Aabb>,
    /// Link–link and link–payload checks; off gives an obstacle-free scene.
    pub self_collision: bool,
}

impl CollisionScene {
    pub fn validate(&self) -> Result<(), PosegenError> {
        if self.link_radii.iter().any(|&r| !(r > 0.0)) {
            return Err(PosegenError::Config("link radii must be positive".into()));
        }
        if let Some(t) = &self.table {
            if (0..3).any(|k| !(t.min[k] <= t.max[k])) {
                return Err(PosegenError::Config("table box min exceeds max".into()));
            }
        }
        Ok(())
    }

    /// Links then the payload, all in world coordinates.
    pub fn capsules(&self, chain: &KinematicChain, q: &Joints) -> [Capsule; 7] {
        let fk = chain.fk(q);
        let link = |i: usize| {
            let (a, b) = fk.link_segment(i);
            Capsule::new(a, b, self.link_radii[i])
        };
        [link(0), link(1), link(2), link(3), link(4), link(5), chain.payload_capsule(&fk)]
    }
}

/// True iff any checked pair touches, with the payload spun by `spin`
/// radians about the terminal joint axis. Neighbouring bodies share a joint
/// and are never checked; the base link stands on the table.
pub fn collide(chain: &KinematicChain, scene: &CollisionScene, q: &Joints, spin: f64) -> bool {
    let mut q = *q;
    q[5] += spin;
    let caps = scene.capsules(chain, &q);
    if scene.self_collision {
        for i in 0..caps.len() {
            for j in i + 2..caps.len() {
                if caps[i].intersects(&caps[j]) {
                    return true;
                }
            }
        }
    }
    if let Some(table) = &scene.table {
        if caps[1..].iter().any(|c| c.clearance_to_box(table) <= 0.0) {
            return true;
        }
    }
    false
}

/// Straight joint-space path with at most `max_step` radians per joint
/// between consecutive configurations; both ends included.
pub fn joint_trajectory(from: &Joints, to: &Joints, max_step: f64) -> Vec<Joints> {
    let span = (0..6).map(|j| (to[j] - from[j]).abs()).fold(0.0, f64::max);
    let n = ((span / max_step).ceil() as usize).max(1);
    let mut path: Vec<Joints> = (0..n)
        .map(|k| {
            let s = k as f64 / n as f64;
            std::array::from_fn(|j| from[j] + (to[j] - from[j]) * s)
        })
        .collect();
    path.push(*to);
    path
}

/// Shift `angle` by whole turns into `[lo, hi]`, preferring the smallest shift.
pub fn wrap_to_limits(angle: f64, lo: f64, hi: f64) -> Option<f64> {
    let tau = 2.0 * PI;
    let k_min = ((lo - angle) / tau).ceil() as i64;
    let k_max = ((hi - angle) / tau).floor() as i64;
    (k_min..=k_max)
        .min_by_key(|k| k.abs())
        .map(|k| angle + k as f64 * tau)
        .filter(|v| (lo..=hi).contains(v))
}

/// The 36 capture poses of a full payload spin in 10° terminal-joint steps.
pub fn spin_capture_poses(chain: &KinematicChain, q: &Joints) -> Option<Vec<Joints>> {
    (0..SPIN_POSES)
        .map(|i| {
            let a = wrap_to_limits(q[5] + i as f64 * SPIN_STEP, chain.lower[5], chain.upper[5])?;
            let mut p = *q;
            p[5] = a;
            Some(p)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct PoseRecord {
    pub q: Joints,
    pub spherical: Spherical,
    pub feasible: bool,
    /// Home-to-target path; empty for rejected candidates.
    pub trajectory: Vec<Joints>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Rejections {
    pub trajectory: usize,
    pub spin: usize,
    pub spin_limits: usize,
    pub arrival: usize,
}

impl fmt::Display for Rejections {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "trajectory collision {}, spin collision {}, spin outside limits {}, arrival {}",
            self.trajectory, self.spin, self.spin_limits, self.arrival
        )
    }
}

#[derive(Clone, Debug)]
pub struct Workspace {
    /// Every candidate in Halton order, feasible or not.
    pub records: Vec<PoseRecord>,
    pub rejections: Rejections,
}

impl Workspace {
    pub fn feasible(&self) -> impl Iterator<Item = &PoseRecord> {
        self.records.iter().filter(|r| r.feasible)
    }
}

/// Candidate `k` of the joint-space Halton sequence, scaled into the limits.
pub fn candidate(chain: &KinematicChain, index: u64) -> Joints {
    let u = halton_point(index, 6);
    std::array::from_fn(|j| chain.lower[j] + u[j] * (chain.upper[j] - chain.lower[j]))
}

enum Verdict {
    Feasible(Vec<Joints>),
    Trajectory,
    Spin,
    SpinLimits,
    Arrival,
}

fn check(chain: &KinematicChain, scene: &CollisionScene, home: &Joints, q: &Joints) -> Verdict {
    let path = joint_trajectory(home, q, INTERP_STEP);
    if path.iter().any(|p| collide(chain, scene, p, 0.0)) {
        return Verdict::Trajectory;
    }
    let Some(spins) = spin_capture_poses(chain, q) else {
        return Verdict::SpinLimits;
    };
    if spins.iter().any(|p| collide(chain, scene, p, 0.0)) {
        return Verdict::Spin;
    }
    let end = chain.fk(path.last().expect("path has both ends")).end_effector();
    if (end - chain.fk(q).end_effector()).norm() > ARRIVAL_TOL {
        return Verdict::Arrival;
    }
    Verdict::Feasible(path)
}

/// Evaluates Halton candidates `start_index + 1 ..= start_index + n`.
pub fn build_workspace(
    chain: &KinematicChain,
    scene: &CollisionScene,
    camera: &Point3<f64>,
    n_candidates: usize,
    home: &Joints,
    start_index: u64,
) -> Result<Workspace, PosegenError> {
    chain.validate()?;
    scene.validate()?;
    if !chain.within_limits(home) {
        return Err(PosegenError::Config(format!("home pose {home:?} outside joint limits")));
    }
    let mut rejections = Rejections::default();
    let mut records = Vec::with_capacity(n_candidates);
    for k in 0..n_candidates as u64 {
        let q = candidate(chain, start_index + k + 1);
        let (feasible, trajectory) = match check(chain, scene, home, &q) {
            Verdict::Feasible(path) => (true, path),
            Verdict::Trajectory => {
                rejections.trajectory += 1;
                (false, Vec::new())
            }
            Verdict::Spin => {
                rejections.spin += 1;
                (false, Vec::new())
            }
            Verdict::SpinLimits => {
                rejections.spin_limits += 1;
                (false, Vec::new())
            }
            Verdict::Arrival => {
                rejections.arrival += 1;
                (false, Vec::new())
            }
        };
        records.push(PoseRecord { q, spherical: to_spherical(chain, &q, camera), feasible, trajectory });
    }
    let ws = Workspace { records, rejections };
    if ws.feasible().next().is_none() {
        return Err(PosegenError::NoFeasible { candidates: n_candidates, rejections });
    }
    Ok(ws)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_steps_are_bounded() {
        let a = [0.0; 6];
        let b = [1.0, -0.5, 0.2, 0.0, 0.0, 3.0];
        let path = joint_trajectory(&a, &b, INTERP_STEP);
        assert_eq!(path.first(), Some(&a));
        assert_eq!(path.last(), Some(&b));
        for w in path.windows(2) {
            assert!((0..6).all(|j| (w[1][j] - w[0][j]).abs() <= INTERP_STEP + 1e-15));
        }
        assert_eq!(joint_trajectory(&a, &a, INTERP_STEP), vec![a, a]);
    }

    #[test]
    fn wrapping() {
        assert_eq!(wrap_to_limits(0.5, -PI, PI), Some(0.5));
        assert!((wrap_to_limits(3.5 * PI, -PI, PI).unwrap() + 0.5 * PI).abs() < 1e-12);
        assert_eq!(wrap_to_limits(2.0, -0.5, 0.5), None);
    }
}

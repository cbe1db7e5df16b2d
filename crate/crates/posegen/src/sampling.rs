//! Camera-relative spherical coordinates and stratified pose selection.

use nalgebra::{Point3, Vector3};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::chain::{Joints, KinematicChain};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spherical {
    pub r: f64,
    pub azimuth: f64,
    pub elevation: f64,
}

impl Spherical {
    /// Azimuth is 0 on the polar axis, where it is otherwise undefined.
    pub fn from_cartesian(p: &Vector3<f64>) -> Self {
        let r = p.norm();
        let rho = p.x.hypot(p.y);
        let azimuth = if rho <= 1e-12 * r { 0.0 } else { p.y.atan2(p.x) };
        Self { r, azimuth, elevation: p.z.atan2(rho) }
    }

    pub fn to_cartesian(&self) -> Vector3<f64> {
        let c = self.elevation.cos();
        Vector3::new(self.r * c * self.azimuth.cos(), self.r * c * self.azimuth.sin(), self.r * self.elevation.sin())
    }

    fn component(&self, k: usize) -> f64 {
        [self.r, self.azimuth, self.elevation][k]
    }
}

/// Camera optical centre (world frame) seen from the payload body frame.
pub fn to_spherical(chain: &KinematicChain, q: &Joints, camera: &Point3<f64>) -> Spherical {
    let body = chain.fk(q).body;
    let local = body.inverse_transform_point(camera);
    Spherical::from_cartesian(&local.coords)
}

/// Strata counts along radius, azimuth and elevation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bins {
    pub r: usize,
    pub az: usize,
    pub el: usize,
}

impl Bins {
    pub fn total(&self) -> usize {
        self.r * self.az * self.el
    }
}

/// Stratum index of every point. Each axis is split evenly over the points'
/// observed range; the maximum falls in the last bin.
pub fn stratum_of(points: &[Spherical], bins: Bins) -> Vec<usize> {
    let counts = [bins.r, bins.az, bins.el];
    let ranges: Vec<(f64, f64)> = (0..3)
        .map(|k| {
            points.iter().map(|p| p.component(k)).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        })
        .collect();
    points
        .iter()
        .map(|p| {
            (0..3).fold(0, |acc, k| {
                let (lo, hi) = ranges[k];
                let n = counts[k];
                let b = if hi > lo { (((p.component(k) - lo) / (hi - lo)) * n as f64).floor() as usize } else { 0 };
                acc * n + b.min(n - 1)
            })
        })
        .collect()
}

/// Members of each stratum, in point order.
pub fn strata(points: &[Spherical], bins: Bins) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); bins.total()];
    for (i, s) in stratum_of(points, bins).into_iter().enumerate() {
        out[s].push(i);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub indices: Vec<usize>,
    pub nonempty_strata: usize,
    /// Nonempty strata that received no pick (only when `k` is smaller
    /// than the number of nonempty strata).
    pub uncovered_strata: usize,
    /// Picks missing because every stratum ran out of points.
    pub shortfall: usize,
}

/// Round-robin over nonempty strata, drawing without replacement uniformly
/// inside each stratum, until `k` points are chosen. Each round visits the
/// strata in a fresh random order, so a partial last round (or `k` below
/// the stratum count) lands on distinct random strata.
pub fn stratified_sample<R: Rng + ?Sized>(points: &[Spherical], bins: Bins, k: usize, rng: &mut R) -> Selection {
    assert!(bins.total() > 0, "bins must be nonzero");
    let mut groups: Vec<Vec<usize>> = strata(points, bins).into_iter().filter(|g| !g.is_empty()).collect();
    for g in &mut groups {
        g.shuffle(rng);
    }
    let nonempty = groups.len();
    let mut cursor = vec![0usize; nonempty];
    let mut indices = Vec::with_capacity(k);
    let mut order: Vec<usize> = (0..nonempty).collect();
    'rounds: while indices.len() < k {
        order.shuffle(rng);
        let mut progressed = false;
        for &g in &order {
            if indices.len() == k {
                break 'rounds;
            }
            if cursor[g] < groups[g].len() {
                indices.push(groups[g][cursor[g]]);
                cursor[g] += 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    let uncovered = cursor.iter().filter(|&&c| c == 0).count();
    Selection { shortfall: k - indices.len(), indices, nonempty_strata: nonempty, uncovered_strata: uncovered }
}

/// Uniform selection of `k` distinct points, the baseline for stratification.
pub fn random_sample<R: Rng + ?Sized>(n_points: usize, k: usize, rng: &mut R) -> Vec<usize> {
    rand::seq::index::sample(rng, n_points, k.min(n_points)).into_vec()
}

/// Picks per stratum, over the strata that contain points.
pub fn occupancy(points: &[Spherical], bins: Bins, picks: &[usize]) -> Vec<usize> {
    let of = stratum_of(points, bins);
    let mut counts = vec![0usize; bins.total()];
    for &i in picks {
        counts[of[i]] += 1;
    }
    let mut nonempty = vec![false; bins.total()];
    for &s in &of {
        nonempty[s] = true;
    }
    counts.into_iter().zip(nonempty).filter(|&(_, n)| n).map(|(c, _)| c).collect()
}

pub fn variance(counts: &[usize]) -> f64 {
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<usize>() as f64 / n;
    counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / n
}

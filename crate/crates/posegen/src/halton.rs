//! Halton low-discrepancy sequences.

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

pub fn prime(k: usize) -> u64 {
    PRIMES[k]
}

/// Radical inverse of `index` in `base`. Digits are reversed into an integer
/// numerator over `base^k`, so the only rounding is the final division.
pub fn halton(index: u64, base: u64) -> f64 {
    assert!(base >= 2, "base must be at least 2");
    let (mut n, mut num, mut den) = (index, 0u128, 1u128);
    while n > 0 {
        num = num * base as u128 + (n % base) as u128;
        den *= base as u128;
        n /= base;
    }
    num as f64 / den as f64
}

/// Point `index` of the `dims`-dimensional sequence over the first primes.
pub fn halton_point(index: u64, dims: usize) -> Vec<f64> {
    assert!(dims <= PRIMES.len(), "at most {} dimensions", PRIMES.len());
    PRIMES[..dims].iter().map(|&b| halton(index, b)).collect()
}

/// Exact star discrepancy of a 2-D point set in `[0,1)²`. Anchored boxes
/// only need testing at corners drawn from the point coordinates and 1,
/// in both their open and closed forms. O(n³), fine for a few hundred points.
pub fn star_discrepancy_2d(points: &[[f64; 2]]) -> f64 {
    let n = points.len() as f64;
    let mut xs: Vec<f64> = points.iter().map(|p| p[0]).chain([1.0]).collect();
    let mut ys: Vec<f64> = points.iter().map(|p| p[1]).chain([1.0]).collect();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    xs.dedup();
    ys.dedup();
    let mut worst = 0.0f64;
    for &u in &xs {
        for &v in &ys {
            let (mut open, mut closed) = (0usize, 0usize);
            for p in points {
                if p[0] < u && p[1] < v {
                    open += 1;
                }
                if p[0] <= u && p[1] <= v {
                    closed += 1;
                }
            }
            let vol = u * v;
            worst = worst.max(closed as f64 / n - vol).max(vol - open as f64 / n);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_values() {
        assert_eq!([halton(1, 2), halton(2, 2), halton(3, 2)], [0.5, 0.25, 0.75]);
        assert_eq!(halton(1, 3), 1.0 / 3.0);
        assert_eq!(halton(0, 5), 0.0);
        assert_eq!(halton_point(5, 3), vec![halton(5, 2), halton(5, 3), halton(5, 5)]);
    }

    #[test]
    fn single_point_discrepancy() {
        // one point at the origin: the box [0,ε)² is empty while the closed
        // box [0,1]² holds everything, so the worst gap is at the corner (0,0)
        assert_eq!(star_discrepancy_2d(&[[0.0, 0.0]]), 1.0);
        assert!((star_discrepancy_2d(&[[0.5, 0.5]]) - 0.75).abs() < 1e-15);
    }
}

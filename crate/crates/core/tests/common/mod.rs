//! Independent oracles shared by the integration tests. Nothing here calls
//! into the crate's cell or solver code.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Bisection for the root of an increasing function on `[lo, hi]`.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// CDF of the density `0.5 + y` on `[0, 1]`.
pub fn ramp_cdf(y: f64) -> f64 {
    let y = y.clamp(0.0, 1.0);
    0.5 * y + 0.5 * y * y
}

/// Classical 1-D cell of point `i`: `{y ∈ [0,1] : x_i y − u_i ≥ x_j y − u_j ∀j}`.
pub fn cell_interval_1d(xs: &[f64], us: &[f64], i: usize) -> (f64, f64) {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for j in 0..xs.len() {
        if j == i {
            continue;
        }
        let t = (us[i] - us[j]) / (xs[i] - xs[j]);
        if xs[j] < xs[i] {
            lo = lo.max(t);
        } else {
            hi = hi.min(t);
        }
    }
    (lo, hi.max(lo))
}

/// Heights for the classical 1-D problem with target CDF `cdf`, pinned at
/// `us[pin] = u0`: boundaries from inverting the CDF by bisection, heights
/// by integrating the boundary relation.
pub fn oracle_heights_1d(xs: &[f64], masses: &[f64], cdf: &dyn Fn(f64) -> f64, pin: usize, u0: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|a, b| xs[*a].total_cmp(&xs[*b]));
    let mut us = vec![0.0; xs.len()];
    let mut acc = 0.0;
    for w in order.windows(2) {
        acc += masses[w[0]];
        let b = bisect(|y| cdf(y) - acc, 0.0, 1.0);
        us[w[1]] = us[w[0]] + (xs[w[1]] - xs[w[0]]) * b;
    }
    let shift = u0 - us[pin];
    us.iter().map(|u| u + shift).collect()
}

pub type Pt = [f64; 2];

/// Sutherland–Hodgman clip of a convex polygon by `n·y ≥ c`.
pub fn clip(poly: &[Pt], n: Pt, c: f64) -> Vec<Pt> {
    let side = |p: Pt| n[0] * p[0] + n[1] * p[1] - c;
    let mut out = Vec::new();
    for k in 0..poly.len() {
        let a = poly[k];
        let b = poly[(k + 1) % poly.len()];
        let (sa, sb) = (side(a), side(b));
        if sa >= 0.0 {
            out.push(a);
        }
        if (sa >= 0.0) != (sb >= 0.0) {
            let t = sa / (sa - sb);
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    out
}

pub fn shoelace(poly: &[Pt]) -> f64 {
    let mut s = 0.0;
    for k in 0..poly.len() {
        let a = poly[k];
        let b = poly[(k + 1) % poly.len()];
        s += a[0] * b[1] - a[1] * b[0];
    }
    0.5 * s.abs()
}

pub fn unit_square() -> Vec<Pt> {
    vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
}

/// Area of the classical power cell `{y : x_i·y − u_i ≥ x_j·y − u_j}` in the unit square.
pub fn power_cell_area(xs: &[Pt], us: &[f64], i: usize) -> f64 {
    let mut poly = unit_square();
    for j in 0..xs.len() {
        if j == i || poly.is_empty() {
            continue;
        }
        poly = clip(&poly, [xs[i][0] - xs[j][0], xs[i][1] - xs[j][1]], us[i] - us[j]);
    }
    if poly.len() < 3 {
        0.0
    } else {
        shoelace(&poly)
    }
}

/// Nonlinear Gauss–Seidel on the heights: each sweep sets every free cell's
/// area to its mass by bisection on its own height; `us[0]` stays pinned.
pub fn oracle_heights_2d(xs: &[Pt], masses: &[f64], u0: f64, tol: f64) -> Vec<f64> {
    let mut us = vec![u0; xs.len()];
    for _ in 0..100_000 {
        for i in 1..xs.len() {
            let mut trial = us.clone();
            let area = |t: f64, trial: &mut Vec<f64>| {
                trial[i] = t;
                power_cell_area(xs, trial, i)
            };
            // area decreases in the height
            us[i] = bisect(|t| masses[i] - area(t, &mut trial), us[i] - 4.0, us[i] + 4.0);
        }
        let worst = (0..xs.len()).map(|i| (power_cell_area(xs, &us, i) - masses[i]).abs()).fold(0.0, f64::max);
        if worst <= tol {
            break;
        }
    }
    us
}

/// Random points in the unit box, bounded away from each other.
pub fn spread_points<R: Rng>(rng: &mut R, n: usize, dim: usize, min_gap: f64) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = Vec::new();
    while pts.len() < n {
        let p: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.02..0.98)).collect();
        if pts.iter().all(|q| q.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() >= min_gap) {
            pts.push(p);
        }
    }
    pts
}

/// Positive masses summing to `total`.
pub fn random_masses<R: Rng>(rng: &mut R, n: usize, total: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|m| m * total / s).collect()
}

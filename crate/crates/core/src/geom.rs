//! Boxes, lattices, planar polygons and small quadrature rules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn unbounded() -> Self {
        Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lo && t <= self.hi
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Axis-aligned box in ℝⁿ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidInput("box corners must have equal positive length".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::EmptyDomain);
        }
        Ok(BoxDomain { lo, hi })
    }

    /// The cube `[lo, hi]ⁿ`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        BoxDomain { lo: vec![lo; dim], hi: vec![hi; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn diameter(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.contains_with_slack(x, 0.0)
    }

    /// Membership with an absolute slack proportional to each side length.
    pub fn contains_with_slack(&self, x: &[f64], rel: f64) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(t, (a, b))| {
            let s = rel * (b - a).max(1.0);
            *t >= a - s && *t <= b + s
        })
    }

    /// Cell-centred tensor grid with `per_axis` points per coordinate.
    pub fn midpoint_grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = (0..self.dim())
            .map(|k| {
                let h = (self.hi[k] - self.lo[k]) / per_axis as f64;
                (0..per_axis).map(|i| self.lo[k] + (i as f64 + 0.5) * h).collect()
            })
            .collect();
        tensor(&axes)
    }

    /// Tensor lattice including the faces: `per_axis` points per coordinate.
    pub fn lattice(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let per_axis = per_axis.max(2);
        let axes: Vec<Vec<f64>> = (0..self.dim())
            .map(|k| {
                let h = (self.hi[k] - self.lo[k]) / (per_axis - 1) as f64;
                (0..per_axis).map(|i| self.lo[k] + i as f64 * h).collect()
            })
            .collect();
        tensor(&axes)
    }

    /// The 2ⁿ corners.
    pub fn corners(&self) -> Vec<Vec<f64>> {
        self.lattice(2)
    }

    /// Points of the lattice that lie on the boundary of the box.
    pub fn boundary_lattice(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let per_axis = per_axis.max(2);
        let tol = 1e-12;
        self.lattice(per_axis)
            .into_iter()
            .filter(|x| {
                x.iter().enumerate().any(|(k, t)| {
                    (t - self.lo[k]).abs() <= tol * (1.0 + t.abs())
                        || (t - self.hi[k]).abs() <= tol * (1.0 + t.abs())
                })
            })
            .collect()
    }

    /// Bounding box of a non-empty point cloud.
    pub fn bounding(points: &[Vec<f64>]) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptyDomain)?;
        let mut lo = first.clone();
        let mut hi = first.clone();
        for p in points {
            for k in 0..lo.len() {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        Ok(BoxDomain { lo, hi })
    }
}

fn tensor(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    // last coordinate varies fastest
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for &t in axis {
                let mut p = prefix.clone();
                p.push(t);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(s, t)| s * t).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(s, t)| s - t).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(s, t)| s + t).collect()
}

pub fn scale(a: &[f64], c: f64) -> Vec<f64> {
    a.iter().map(|s| s * c).collect()
}

pub fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(s, r)| (1.0 - t) * s + t * r).collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(s, t)| (s - t).powi(2)).sum::<f64>().sqrt()
}

pub fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(s, t)| (s - t).abs()).fold(0.0, f64::max)
}

/// Planar point.
pub type P2 = [f64; 2];

fn cross(o: P2, a: P2, b: P2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Convex hull (counter-clockwise, no repeated end point) by monotone chain.
pub fn convex_hull(points: &[P2]) -> Vec<P2> {
    let mut pts: Vec<P2> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<P2> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<P2> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Signed area (positive for counter-clockwise order).
pub fn polygon_area(poly: &[P2]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        s += a[0] * b[1] - a[1] * b[0];
    }
    0.5 * s
}

/// Whether `p` lies in the convex counter-clockwise polygon, with slack `tol`.
pub fn convex_contains(poly: &[P2], p: P2, tol: f64) -> bool {
    match poly.len() {
        0 => false,
        1 => (poly[0][0] - p[0]).hypot(poly[0][1] - p[1]) <= tol,
        2 => {
            let d = [poly[1][0] - poly[0][0], poly[1][1] - poly[0][1]];
            let l2 = d[0] * d[0] + d[1] * d[1];
            let t = (((p[0] - poly[0][0]) * d[0] + (p[1] - poly[0][1]) * d[1]) / l2).clamp(0.0, 1.0);
            let q = [poly[0][0] + t * d[0], poly[0][1] + t * d[1]];
            (q[0] - p[0]).hypot(q[1] - p[1]) <= tol
        }
        _ => (0..poly.len()).all(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % poly.len()];
            let len = (b[0] - a[0]).hypot(b[1] - a[1]);
            cross(a, b, p) >= -tol * len
        }),
    }
}

/// Clip a polygon against the half-plane `normal·y + offset ≥ 0`.
pub fn clip_half_plane(poly: &[P2], normal: P2, offset: f64) -> Vec<P2> {
    let side = |p: P2| normal[0] * p[0] + normal[1] * p[1] + offset;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
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

/// Box as a counter-clockwise polygon (two-dimensional boxes only).
pub fn box_polygon(domain: &BoxDomain) -> Vec<P2> {
    vec![
        [domain.lo[0], domain.lo[1]],
        [domain.hi[0], domain.lo[1]],
        [domain.hi[0], domain.hi[1]],
        [domain.lo[0], domain.hi[1]],
    ]
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let m = order.max(1);
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..(m + 1) / 2 {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pm = if m == 1 { t } else { p1 };
            let pprev = if m == 1 { 1.0 } else { p0 };
            dp = m as f64 * (t * pm - pprev) / (t * t - 1.0);
            let dt = pm / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -t;
        nodes[m - 1 - i] = t;
        let w = 2.0 / ((1.0 - t * t) * dp * dp);
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    (nodes, weights)
}

/// Integrate `f` over `[a, b]` with `panels` composite Gauss–Legendre panels.
pub fn integrate_segment<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, nodes: &[f64], weights: &[f64]) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    nodes.iter().zip(weights).map(|(t, w)| w * f(mid + half * t)).sum::<f64>() * half
}

/// Seven-point degree-five triangle rule: barycentric points and weights summing to one.
pub fn triangle_rule7() -> [([f64; 3], f64); 7] {
    let s = 15f64.sqrt();
    let b1 = (6.0 + s) / 21.0;
    let a1 = 1.0 - 2.0 * b1;
    let b2 = (6.0 - s) / 21.0;
    let a2 = 1.0 - 2.0 * b2;
    let w1 = (155.0 + s) / 1200.0;
    let w2 = (155.0 - s) / 1200.0;
    [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 9.0 / 40.0),
        ([a1, b1, b1], w1),
        ([b1, a1, b1], w1),
        ([b1, b1, a1], w1),
        ([a2, b2, b2], w2),
        ([b2, a2, b2], w2),
        ([b2, b2, a2], w2),
    ]
}

/// Integrate `f` over a triangle, splitting it `4^level` times.
pub fn integrate_triangle<F: Fn(P2) -> f64>(f: &F, tri: [P2; 3], level: usize) -> f64 {
    if level > 0 {
        let m = |a: P2, b: P2| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        let (a, b, c) = (tri[0], tri[1], tri[2]);
        let (ab, bc, ca) = (m(a, b), m(b, c), m(c, a));
        return integrate_triangle(f, [a, ab, ca], level - 1)
            + integrate_triangle(f, [ab, b, bc], level - 1)
            + integrate_triangle(f, [ca, bc, c], level - 1)
            + integrate_triangle(f, [ab, bc, ca], level - 1);
    }
    let area = 0.5 * cross(tri[0], tri[1], tri[2]).abs();
    if area == 0.0 {
        return 0.0;
    }
    triangle_rule7()
        .iter()
        .map(|(l, w)| {
            let p = [
                l[0] * tri[0][0] + l[1] * tri[1][0] + l[2] * tri[2][0],
                l[0] * tri[0][1] + l[1] * tri[1][1] + l[2] * tri[2][1],
            ];
            w * f(p)
        })
        .sum::<f64>()
        * area
}

/// Integrate over a convex polygon by fan triangulation from the first vertex.
pub fn integrate_convex_polygon<F: Fn(P2) -> f64>(f: &F, poly: &[P2], level: usize) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    (1..poly.len() - 1).map(|i| integrate_triangle(f, [poly[0], poly[i], poly[i + 1]], level)).sum()
}

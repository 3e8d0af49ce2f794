//! Finite maxima of g-affine (or g*-affine) pieces and the two transforms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::GeneratorSpec;
use crate::geom::{self, BoxDomain, P2};
use crate::tolerances::{DEDUP_TOL, TIE_TOL};

/// Which variable the pieces are affine in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// `u(x) = maxᵢ g(x, yᵢ, zᵢ)`.
    Primal,
    /// `v(y) = maxᵢ g*(xᵢ, y, uᵢ)`.
    Dual,
}

/// One piece. For primal functions `(y, z)` is the focus and level of
/// `x ↦ g(x, y, z)`; for dual functions the same fields hold `(xᵢ, uᵢ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GAffine {
    #[serde(alias = "x")]
    pub y: Vec<f64>,
    #[serde(alias = "u")]
    pub z: f64,
}

impl GAffine {
    pub fn new(y: Vec<f64>, z: f64) -> Self {
        GAffine { y, z }
    }
}

/// Value of a piecewise function at a point with the indices attaining it.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub active: Vec<usize>,
}

/// A g-convex (or g*-convex) function stored as a finite max.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseGConvex {
    pub orientation: Orientation,
    pub pieces: Vec<GAffine>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<BoxDomain>,
}

/// Convex hull of finitely many points, kept by its generators.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    pub points: Vec<Vec<f64>>,
}

impl Polytope {
    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.len())
    }

    /// Extreme points: the end points in one dimension, the hull in two.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        match self.dim() {
            1 => {
                let lo = self.points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
                let hi = self.points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
                if lo == hi {
                    vec![vec![lo]]
                } else {
                    vec![vec![lo], vec![hi]]
                }
            }
            2 => self.hull().into_iter().map(|p| p.to_vec()).collect(),
            _ => self.points.clone(),
        }
    }

    /// Counter-clockwise hull (two-dimensional polytopes).
    pub fn hull(&self) -> Vec<P2> {
        let pts: Vec<P2> = self.points.iter().map(|p| [p[0], p[1]]).collect();
        geom::convex_hull(&pts)
    }

    /// Length in one dimension, area in two.
    pub fn volume(&self) -> Result<f64> {
        match self.dim() {
            0 => Ok(0.0),
            1 => {
                let v = self.vertices();
                Ok(if v.len() == 2 { v[1][0] - v[0][0] } else { 0.0 })
            }
            2 => Ok(geom::polygon_area(&self.hull()).abs()),
            n => Err(Error::Unsupported(format!("polytope volume in dimension {n}"))),
        }
    }

    pub fn contains(&self, p: &[f64], tol: f64) -> Result<bool> {
        match self.dim() {
            1 => {
                let v = self.vertices();
                Ok(p[0] >= v[0][0] - tol && p[0] <= v[v.len() - 1][0] + tol)
            }
            2 => Ok(geom::convex_contains(&self.hull(), [p[0], p[1]], tol)),
            n => Err(Error::Unsupported(format!("polytope membership in dimension {n}"))),
        }
    }

    pub fn is_singleton(&self, tol: f64) -> bool {
        self.points.iter().all(|p| geom::sup_dist(p, &self.points[0]) <= tol)
    }
}

fn is_active(value: f64, max: f64) -> bool {
    value >= max - TIE_TOL * max.abs().max(1.0)
}

impl PiecewiseGConvex {
    /// Build, dropping duplicate pieces.
    pub fn new(orientation: Orientation, pieces: Vec<GAffine>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::EmptyFunction);
        }
        let mut kept: Vec<GAffine> = Vec::with_capacity(pieces.len());
        for p in pieces {
            let dup = kept
                .iter()
                .any(|k| (k.z - p.z).abs() <= DEDUP_TOL && geom::sup_dist(&k.y, &p.y) <= DEDUP_TOL);
            if !dup {
                kept.push(p);
            }
        }
        Ok(PiecewiseGConvex { orientation, pieces: kept, domain: None })
    }

    pub fn primal(pieces: Vec<GAffine>) -> Result<Self> {
        Self::new(Orientation::Primal, pieces)
    }

    pub fn dual(pieces: Vec<GAffine>) -> Result<Self> {
        Self::new(Orientation::Dual, pieces)
    }

    pub fn with_domain(mut self, domain: BoxDomain) -> Self {
        self.domain = Some(domain);
        self
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Value of piece `i` at `point`.
    pub fn piece_value(&self, spec: &GeneratorSpec, i: usize, point: &[f64]) -> Result<f64> {
        let piece = &self.pieces[i];
        match self.orientation {
            Orientation::Primal => Ok(spec.value(point, &piece.y, piece.z)),
            Orientation::Dual => spec.g_star(&piece.y, point, piece.z),
        }
    }

    /// Gradient of piece `i` at `point`: `g_x` for primal, `g*_y` for dual.
    pub fn piece_gradient(&self, spec: &GeneratorSpec, i: usize, point: &[f64]) -> Result<Vec<f64>> {
        let piece = &self.pieces[i];
        match self.orientation {
            Orientation::Primal => Ok(spec.g_x(point, &piece.y, piece.z)),
            Orientation::Dual => spec.g_star_y(&piece.y, point, piece.z),
        }
    }

    /// All piece values at a point.
    pub fn piece_values(&self, spec: &GeneratorSpec, point: &[f64]) -> Result<Vec<f64>> {
        (0..self.pieces.len()).map(|i| self.piece_value(spec, i, point)).collect()
    }

    /// Maximum and the pieces within the tie tolerance of it.
    pub fn eval(&self, spec: &GeneratorSpec, point: &[f64]) -> Result<Evaluation> {
        if self.pieces.is_empty() {
            return Err(Error::EmptyFunction);
        }
        let vals = self.piece_values(spec, point)?;
        let value = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let active = vals.iter().enumerate().filter(|(_, v)| is_active(**v, value)).map(|(i, _)| i).collect();
        Ok(Evaluation { value, active })
    }

    /// Maximum only.
    pub fn value(&self, spec: &GeneratorSpec, point: &[f64]) -> Result<f64> {
        if self.pieces.is_empty() {
            return Err(Error::EmptyFunction);
        }
        let mut best = f64::NEG_INFINITY;
        for i in 0..self.pieces.len() {
            best = best.max(self.piece_value(spec, i, point)?);
        }
        Ok(best)
    }

    /// Lowest index attaining the maximum.
    pub fn argmax(&self, spec: &GeneratorSpec, point: &[f64]) -> Result<(usize, f64)> {
        let mut best = (0, f64::NEG_INFINITY);
        for i in 0..self.pieces.len() {
            let v = self.piece_value(spec, i, point)?;
            if v > best.1 {
                best = (i, v);
            }
        }
        Ok(best)
    }

    /// Subdifferential: convex hull of the active gradients.
    pub fn subdifferential(&self, spec: &GeneratorSpec, point: &[f64]) -> Result<Polytope> {
        let ev = self.eval(spec, point)?;
        let points = ev.active.iter().map(|&i| self.piece_gradient(spec, i, point)).collect::<Result<_>>()?;
        Ok(Polytope { points })
    }

    /// The support through `(x, u(x))` with focus `y`: `(y, g*(x, y, u(x)))`.
    pub fn support_at(&self, spec: &GeneratorSpec, x: &[f64], y: &[f64]) -> Result<GAffine> {
        let u = self.value(spec, x)?;
        Ok(GAffine::new(y.to_vec(), spec.g_star(x, y, u)?))
    }

    /// `min (u − g(·, y, z))` over the given points; non-negative for supports.
    pub fn support_slack(&self, spec: &GeneratorSpec, support: &GAffine, points: &[Vec<f64>]) -> Result<f64> {
        let mut worst = f64::INFINITY;
        for x in points {
            worst = worst.min(self.value(spec, x)? - spec.value(x, &support.y, support.z));
        }
        Ok(worst)
    }

    /// Upper bound on `|∇u|` from the piece gradients on a lattice.
    pub fn lipschitz_bound(&self, spec: &GeneratorSpec, domain: &BoxDomain, per_axis: usize) -> Result<f64> {
        let mut best: f64 = 0.0;
        for p in domain.lattice(per_axis) {
            for i in 0..self.pieces.len() {
                best = best.max(geom::norm(&self.piece_gradient(spec, i, &p)?));
            }
        }
        Ok(best)
    }

    /// For every piece that is active somewhere on `domain`, one point where it is.
    pub fn contact_points(&self, spec: &GeneratorSpec, domain: &BoxDomain, per_axis: usize) -> Result<Vec<Vec<f64>>> {
        let grid = domain.lattice(per_axis);
        let values: Vec<Vec<f64>> = grid.iter().map(|x| self.piece_values(spec, x)).collect::<Result<_>>()?;
        let step = domain.lo.iter().zip(&domain.hi).map(|(a, b)| (b - a) / (per_axis.max(2) - 1) as f64).fold(0.0, f64::max);
        let mut out = Vec::new();
        for i in 0..self.pieces.len() {
            let mut best = (f64::NEG_INFINITY, 0usize);
            for (k, vals) in values.iter().enumerate() {
                let others = vals.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
                let margin = vals[i] - others;
                if margin > best.0 {
                    best = (margin, k);
                }
            }
            let start = grid[best.1].clone();
            let scale = values[best.1][i].abs().max(1.0);
            if best.0 >= -TIE_TOL * scale {
                out.push(start);
                continue;
            }
            if let Some(p) = self.climb_margin(spec, i, start, step, domain)? {
                out.push(p);
            }
        }
        Ok(out)
    }

    /// Pattern search maximising `φᵢ − max_{j≠i} φⱼ`; returns a point where piece `i` is active.
    fn climb_margin(&self, spec: &GeneratorSpec, i: usize, mut x: Vec<f64>, mut step: f64, domain: &BoxDomain) -> Result<Option<Vec<f64>>> {
        let margin = |p: &[f64]| -> Result<(f64, f64)> {
            let vals = self.piece_values(spec, p)?;
            let others = vals.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
            Ok((vals[i] - others, vals[i].abs().max(1.0)))
        };
        let (mut m, _) = margin(&x)?;
        let floor = 1e-13 * domain.diameter().max(1.0);
        while step > floor {
            let mut moved = false;
            for k in 0..x.len() {
                for s in [1.0, -1.0] {
                    let mut c = x.clone();
                    c[k] = (c[k] + s * step).clamp(domain.lo[k], domain.hi[k]);
                    let (mc, scale) = margin(&c)?;
                    if mc > m {
                        x = c;
                        m = mc;
                        moved = true;
                        if m >= -TIE_TOL * scale {
                            return Ok(Some(x));
                        }
                    }
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        Ok(None)
    }

    /// Points of `domain` where `n + 1` pieces meet, plus the points where
    /// two pieces meet on the boundary, plus the corners.
    ///
    /// Supported in one and two dimensions.
    pub fn vertices(&self, spec: &GeneratorSpec, domain: &BoxDomain, per_axis: usize) -> Result<Vec<(Vec<f64>, Vec<usize>)>> {
        match domain.dim() {
            1 => {
                let mut out: Vec<(Vec<f64>, Vec<usize>)> = Vec::new();
                for end in [domain.lo[0], domain.hi[0]] {
                    let p = vec![end];
                    out.push((p.clone(), self.eval(spec, &p)?.active));
                }
                self.segment_breaks(spec, &[domain.lo[0]], &[domain.hi[0]], per_axis, &mut out)?;
                Ok(dedup_points(out))
            }
            2 => self.vertices_2d(spec, domain, per_axis),
            n => Err(Error::Unsupported(format!("vertex search in dimension {n}"))),
        }
    }

    /// Append the break points of the envelope along the segment `a → b`.
    fn segment_breaks(&self, spec: &GeneratorSpec, a: &[f64], b: &[f64], samples: usize, out: &mut Vec<(Vec<f64>, Vec<usize>)>) -> Result<()> {
        let samples = samples.max(2);
        let at = |t: f64| geom::lerp(a, b, t);
        let mut prev_t = 0.0;
        let mut prev = self.argmax(spec, &at(0.0))?.0;
        for k in 1..samples {
            let t = k as f64 / (samples - 1) as f64;
            let cur = self.argmax(spec, &at(t))?.0;
            if cur != prev {
                self.resolve_break(spec, &at, prev_t, t, prev, cur, 0, out)?;
            }
            prev = cur;
            prev_t = t;
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn resolve_break<F: Fn(f64) -> Vec<f64>>(
        &self,
        spec: &GeneratorSpec,
        at: &F,
        mut lo: f64,
        mut hi: f64,
        i: usize,
        j: usize,
        depth: usize,
        out: &mut Vec<(Vec<f64>, Vec<usize>)>,
    ) -> Result<()> {
        let (a0, b0) = (lo, hi);
        let diff = |t: f64| -> Result<f64> { Ok(self.piece_value(spec, i, &at(t))? - self.piece_value(spec, j, &at(t))?) };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if diff(mid)? >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        let p = at(t);
        let ev = self.eval(spec, &p)?;
        if ev.active.contains(&i) && ev.active.contains(&j) {
            out.push((p, ev.active));
            return Ok(());
        }
        if depth > 60 {
            return Ok(());
        }
        let (k, _) = self.argmax(spec, &p)?;
        self.resolve_break(spec, at, a0, t, i, k, depth + 1, out)?;
        self.resolve_break(spec, at, t, b0, k, j, depth + 1, out)
    }

    fn vertices_2d(&self, spec: &GeneratorSpec, domain: &BoxDomain, per_axis: usize) -> Result<Vec<(Vec<f64>, Vec<usize>)>> {
        let m = per_axis.max(3);
        let grid = domain.lattice(m);
        let owner: Vec<usize> = grid.iter().map(|x| self.argmax(spec, x).map(|r| r.0)).collect::<Result<_>>()?;
        let mut out: Vec<(Vec<f64>, Vec<usize>)> = Vec::new();
        for c in domain.corners() {
            let ev = self.eval(spec, &c)?;
            out.push((c, ev.active));
        }
        let corners = domain.corners();
        // corners in lattice order: (lo,lo), (lo,hi), (hi,lo), (hi,hi)
        for (a, b) in [(0, 2), (2, 3), (3, 1), (1, 0)] {
            self.segment_breaks(spec, &corners[a], &corners[b], m, &mut out)?;
        }
        let mut triples: std::collections::BTreeSet<[usize; 3]> = std::collections::BTreeSet::new();
        let idx = |r: usize, c: usize| r * m + c;
        for r in 0..m - 1 {
            for c in 0..m - 1 {
                let mut set: Vec<usize> = Vec::new();
                for (dr, dc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let o = owner[idx(r + dr, c + dc)];
                    if !set.contains(&o) {
                        set.push(o);
                    }
                }
                if set.len() < 3 {
                    continue;
                }
                set.sort_unstable();
                for a in 0..set.len() {
                    for b in a + 1..set.len() {
                        for d in b + 1..set.len() {
                            triples.insert([set[a], set[b], set[d]]);
                        }
                    }
                }
            }
        }
        // a vertex can sit in a square whose corners show only two owners
        for r in 0..m - 2 {
            for c in 0..m - 2 {
                let mut set: Vec<usize> = Vec::new();
                for dr in 0..3 {
                    for dc in 0..3 {
                        let o = owner[idx(r + dr, c + dc)];
                        if !set.contains(&o) {
                            set.push(o);
                        }
                    }
                }
                if set.len() < 3 {
                    continue;
                }
                set.sort_unstable();
                for a in 0..set.len() {
                    for b in a + 1..set.len() {
                        for d in b + 1..set.len() {
                            triples.insert([set[a], set[b], set[d]]);
                        }
                    }
                }
            }
        }
        let center = domain.center();
        for t in triples {
            if let Some(p) = self.meet_three(spec, t, &center)? {
                if domain.contains_with_slack(&p, 1e-12) {
                    let ev = self.eval(spec, &p)?;
                    if t.iter().all(|i| ev.active.contains(i)) {
                        out.push((p, ev.active));
                    }
                }
            }
        }
        Ok(dedup_points(out))
    }

    /// Newton solve of `φ_a = φ_b = φ_c`.
    fn meet_three(&self, spec: &GeneratorSpec, t: [usize; 3], start: &[f64]) -> Result<Option<Vec<f64>>> {
        let [a, b, c] = t;
        // start from the point where the gradients' affine models meet
        let mut x = start.to_vec();
        for _ in 0..60 {
            let (va, vb, vc) = (self.piece_value(spec, a, &x)?, self.piece_value(spec, b, &x)?, self.piece_value(spec, c, &x)?);
            let f = [va - vb, va - vc];
            let scale = va.abs().max(1.0);
            if f[0].abs().max(f[1].abs()) <= 1e-15 * scale {
                return Ok(Some(x));
            }
            let (ga, gb, gc) = (self.piece_gradient(spec, a, &x)?, self.piece_gradient(spec, b, &x)?, self.piece_gradient(spec, c, &x)?);
            let j = [[ga[0] - gb[0], ga[1] - gb[1]], [ga[0] - gc[0], ga[1] - gc[1]]];
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det.abs() < 1e-300 || !det.is_finite() {
                return Ok(None);
            }
            let dx = [(-f[0] * j[1][1] + f[1] * j[0][1]) / det, (-j[0][0] * f[1] + j[1][0] * f[0]) / det];
            x[0] += dx[0];
            x[1] += dx[1];
            if !x.iter().all(|v| v.is_finite()) {
                return Ok(None);
            }
            if dx[0].abs().max(dx[1].abs()) <= 1e-15 * (1.0 + geom::norm(&x)) {
                return Ok(Some(x));
            }
        }
        let (va, vb, vc) = (self.piece_value(spec, a, &x)?, self.piece_value(spec, b, &x)?, self.piece_value(spec, c, &x)?);
        let scale = va.abs().max(1.0);
        if (va - vb).abs().max((va - vc).abs()) <= 1e-10 * scale {
            Ok(Some(x))
        } else {
            Ok(None)
        }
    }

    /// Lattice plus contact points plus vertices, without duplicates.
    pub fn augmented_points(&self, spec: &GeneratorSpec, domain: &BoxDomain, per_axis: usize) -> Result<Vec<Vec<f64>>> {
        let mut pts = domain.lattice(per_axis);
        pts.extend(self.contact_points(spec, domain, per_axis)?);
        if domain.dim() <= 2 {
            pts.extend(self.vertices(spec, domain, per_axis)?.into_iter().map(|(p, _)| p));
        }
        Ok(dedup_points(pts.into_iter().map(|p| (p, Vec::new())).collect()).into_iter().map(|(p, _)| p).collect())
    }
}

fn dedup_points(points: Vec<(Vec<f64>, Vec<usize>)>) -> Vec<(Vec<f64>, Vec<usize>)> {
    let mut out: Vec<(Vec<f64>, Vec<usize>)> = Vec::with_capacity(points.len());
    for (p, act) in points {
        if let Some(existing) = out.iter_mut().find(|(q, _)| geom::sup_dist(q, &p) <= 1e-10 * (1.0 + geom::norm(q))) {
            for a in act {
                if !existing.1.contains(&a) {
                    existing.1.push(a);
                }
            }
            existing.1.sort_unstable();
        } else {
            out.push((p, act));
        }
    }
    out
}

/// `v(y) = sup_x g*(x, y, u(x))` with the sup over the given points.
pub fn g_star_transform_at(spec: &GeneratorSpec, u: &PiecewiseGConvex, points: &[Vec<f64>]) -> Result<PiecewiseGConvex> {
    if u.orientation != Orientation::Primal {
        return Err(Error::InvalidInput("g*-transform expects a primal function".into()));
    }
    let pieces = points.iter().map(|x| Ok(GAffine::new(x.clone(), u.value(spec, x)?))).collect::<Result<Vec<_>>>()?;
    PiecewiseGConvex::dual(pieces)
}

/// g*-transform with the sup over a lattice of `domain` augmented by the
/// contact points and vertices of `u`.
pub fn g_star_transform(spec: &GeneratorSpec, u: &PiecewiseGConvex, domain: &BoxDomain, per_axis: usize) -> Result<PiecewiseGConvex> {
    let pts = u.augmented_points(spec, domain, per_axis)?;
    Ok(g_star_transform_at(spec, u, &pts)?.with_domain(spec.domain_y.clone()))
}

/// `u(x) = sup_y g(x, y, v(y))` with the sup over the given points.
pub fn g_transform_at(spec: &GeneratorSpec, v: &PiecewiseGConvex, points: &[Vec<f64>]) -> Result<PiecewiseGConvex> {
    if v.orientation != Orientation::Dual {
        return Err(Error::InvalidInput("g-transform expects a dual function".into()));
    }
    let pieces = points.iter().map(|y| Ok(GAffine::new(y.clone(), v.value(spec, y)?))).collect::<Result<Vec<_>>>()?;
    PiecewiseGConvex::primal(pieces)
}

/// g-transform over a lattice of `domain` augmented by the contact points
/// and vertices of `v`.
pub fn g_transform(spec: &GeneratorSpec, v: &PiecewiseGConvex, domain: &BoxDomain, per_axis: usize) -> Result<PiecewiseGConvex> {
    let pts = v.augmented_points(spec, domain, per_axis)?;
    Ok(g_transform_at(spec, v, &pts)?.with_domain(spec.domain_x.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classical_1d() -> GeneratorSpec {
        GeneratorSpec::classical(1).with_domains(BoxDomain::cube(1, -3.0, 3.0), BoxDomain::cube(1, -3.0, 3.0))
    }

    #[test]
    fn eval_and_ties() {
        let s = classical_1d();
        let u = PiecewiseGConvex::primal(vec![GAffine::new(vec![0.0], 0.0), GAffine::new(vec![1.0], 0.0)]).unwrap();
        let e = u.eval(&s, &[2.0]).unwrap();
        assert_eq!((e.value, e.active), (2.0, vec![1]));
        let e = u.eval(&s, &[0.0]).unwrap();
        assert_eq!((e.value, e.active), (0.0, vec![0, 1]));
        let d = u.subdifferential(&s, &[0.0]).unwrap();
        assert_eq!(d.vertices(), vec![vec![0.0], vec![1.0]]);
    }

    #[test]
    fn dedup_and_empty() {
        assert_eq!(PiecewiseGConvex::primal(vec![]).unwrap_err(), Error::EmptyFunction);
        let u = PiecewiseGConvex::primal(vec![GAffine::new(vec![0.5], 1.0), GAffine::new(vec![0.5], 1.0 + 1e-14)]).unwrap();
        assert_eq!(u.len(), 1);
    }

    #[test]
    fn abs_value_transform() {
        let s = classical_1d();
        let dom = BoxDomain::cube(1, -1.0, 1.0);
        let u = PiecewiseGConvex::primal(vec![GAffine::new(vec![-1.0], 0.0), GAffine::new(vec![1.0], 0.0)]).unwrap();
        let v = g_star_transform(&s, &u, &dom, 41).unwrap();
        for k in 0..=20 {
            let y = -1.0 + 0.1 * k as f64;
            assert!(v.value(&s, &[y]).unwrap().abs() < 1e-12);
        }
        let back = g_transform(&s, &v, &BoxDomain::cube(1, -1.0, 1.0), 41).unwrap();
        for x in dom.lattice(101) {
            assert!((back.value(&s, &x).unwrap() - u.value(&s, &x).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn two_d_vertex_found() {
        let s = GeneratorSpec::classical(2).with_domains(BoxDomain::cube(2, -1.0, 1.0), BoxDomain::cube(2, -2.0, 2.0));
        let u = PiecewiseGConvex::primal(vec![
            GAffine::new(vec![1.0, 0.0], 0.1),
            GAffine::new(vec![-1.0, 0.5], 0.0),
            GAffine::new(vec![0.0, -1.0], -0.05),
        ])
        .unwrap();
        let vs = u.vertices(&s, &BoxDomain::cube(2, -1.0, 1.0), 33).unwrap();
        let inner: Vec<_> = vs.iter().filter(|(_, a)| a.len() == 3).collect();
        assert_eq!(inner.len(), 1);
        let p = &inner[0].0;
        let vals = u.piece_values(&s, p).unwrap();
        assert!((vals[0] - vals[1]).abs() < 1e-14 && (vals[0] - vals[2]).abs() < 1e-14);
    }
}

//! Target densities, dual cell decompositions and g-Monge–Ampère measures.
//!
//! Cell masses come from one of four engines:
//!
//! * `Exact`: polygon clipping, available when the dual pieces differ by
//!   affine functions of `y` (classical and quadratic cost) and `n ≤ 2`;
//! * `Lines`: an exact one-dimensional upper envelope along quadrature rows,
//!   for any generator with `n ≤ 2`;
//! * `Grid` / `MonteCarlo`: node membership, any dimension.
//!
//! The first two are continuous in the heights, which the solver relies on.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gconvex::{Orientation, PiecewiseGConvex};
use crate::generator::{sample_box, GeneratorSpec};
use crate::geom::{self, BoxDomain, P2};
use crate::tolerances::{GRID_PER_AXIS, MC_SAMPLES, TIE_TOL};

pub type DensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Density {
    Uniform(f64),
    Function(DensityFn),
}

impl fmt::Debug for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Density::Uniform(c) => write!(f, "Uniform({c})"),
            Density::Function(_) => write!(f, "Function(..)"),
        }
    }
}

impl Density {
    pub fn at(&self, y: &[f64]) -> f64 {
        match self {
            Density::Uniform(c) => *c,
            Density::Function(f) => f(y),
        }
    }
}

/// How cell masses are integrated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Quadrature {
    /// `Exact` when the generator allows it, else `Lines` (n ≤ 2) or `MonteCarlo`.
    Auto,
    Exact,
    Lines { samples: usize, panels: usize },
    Grid { per_axis: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature::Auto
    }
}

const GL_ORDER: usize = 4;
const POLY_LEVEL: usize = 2;

/// `f*` on the box `Ω*` together with its quadrature.
#[derive(Debug, Clone)]
pub struct TargetDensity {
    pub domain: BoxDomain,
    pub density: Density,
    pub quadrature: Quadrature,
    nodes: Arc<Vec<(Vec<f64>, f64)>>,
    total: f64,
}

impl TargetDensity {
    pub fn uniform(domain: BoxDomain, value: f64) -> Result<Self> {
        Self::new(domain, Density::Uniform(value), Quadrature::Auto)
    }

    pub fn from_fn(domain: BoxDomain, f: DensityFn) -> Result<Self> {
        Self::new(domain, Density::Function(f), Quadrature::Auto)
    }

    pub fn new(domain: BoxDomain, density: Density, quadrature: Quadrature) -> Result<Self> {
        if domain.volume() <= 0.0 {
            return Err(Error::EmptyDomain);
        }
        let quadrature = match quadrature {
            Quadrature::Auto if domain.dim() > 2 => default_node_quadrature(domain.dim()),
            q => q,
        };
        if let Density::Uniform(c) = density {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::InvalidInput(format!("density {c} must be non-negative")));
            }
        }
        let nodes = match quadrature {
            Quadrature::Grid { per_axis } => {
                let w = domain.volume() / (per_axis.pow(domain.dim() as u32)) as f64;
                domain.midpoint_grid(per_axis).into_iter().map(|y| {
                    let d = density.at(&y);
                    (y, w * d)
                }).collect()
            }
            Quadrature::MonteCarlo { samples, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let w = domain.volume() / samples as f64;
                (0..samples)
                    .map(|_| {
                        let y = sample_box(&domain, &mut rng);
                        let d = density.at(&y);
                        (y, w * d)
                    })
                    .collect()
            }
            _ => Vec::new(),
        };
        if nodes.iter().any(|(_, w)| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidInput("density must be finite and non-negative".into()));
        }
        let mut target = TargetDensity { domain, density, quadrature, nodes: Arc::new(nodes), total: 0.0 };
        target.total = target.integrate_box()?;
        if !(target.total > 0.0) {
            return Err(Error::InvalidInput("target carries no mass".into()));
        }
        Ok(target)
    }

    /// Same density under another quadrature.
    pub fn with_quadrature(&self, quadrature: Quadrature) -> Result<Self> {
        Self::new(self.domain.clone(), self.density.clone(), quadrature)
    }

    /// `λ f*`.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        let density = match &self.density {
            Density::Uniform(c) => Density::Uniform(c * lambda),
            Density::Function(f) => {
                let f = f.clone();
                Density::Function(Arc::new(move |y| lambda * f(y)))
            }
        };
        Self::new(self.domain.clone(), density, self.quadrature)
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn at(&self, y: &[f64]) -> f64 {
        if self.domain.contains_with_slack(y, 1e-12) {
            self.density.at(y)
        } else {
            0.0
        }
    }

    /// Quadrature nodes and weights of node-based rules.
    pub fn nodes(&self) -> &[(Vec<f64>, f64)] {
        &self.nodes
    }

    fn lines_params(&self) -> (usize, usize) {
        match self.quadrature {
            Quadrature::Lines { samples, panels } => (samples, panels),
            _ if self.dim() == 1 => (4096, 1),
            _ => (256, 64),
        }
    }

    fn integrate_box(&self) -> Result<f64> {
        match (&self.quadrature, &self.density) {
            (Quadrature::Grid { .. } | Quadrature::MonteCarlo { .. }, _) => Ok(self.nodes.iter().map(|(_, w)| w).sum()),
            (_, Density::Uniform(c)) => Ok(c * self.domain.volume()),
            (Quadrature::Exact, _) if self.dim() == 2 => {
                Ok(geom::integrate_convex_polygon(&|p: P2| self.density.at(&p), &geom::box_polygon(&self.domain), POLY_LEVEL))
            }
            _ => match self.dim() {
                1 => {
                    let (s, _) = self.lines_params();
                    Ok(panel_integral(&|t| self.density.at(&[t]), self.domain.lo[0], self.domain.hi[0], s))
                }
                2 => {
                    let (s, panels) = self.lines_params();
                    let (lo, hi) = (&self.domain.lo, &self.domain.hi);
                    let rows = row_nodes(lo[1], hi[1], panels);
                    Ok(rows
                        .iter()
                        .map(|(y2, w)| w * panel_integral(&|t| self.density.at(&[t, *y2]), lo[0], hi[0], s))
                        .sum())
                }
                n => Err(Error::Unsupported(format!("deterministic quadrature in dimension {n}"))),
            },
        }
    }
}

/// Composite Gauss–Legendre on `panels` equal panels.
fn panel_integral(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let (nodes, weights) = geom::gauss_legendre(GL_ORDER);
    let h = (b - a) / panels as f64;
    (0..panels).map(|k| geom::integrate_segment(f, a + k as f64 * h, a + (k + 1) as f64 * h, &nodes, &weights)).sum()
}

fn row_nodes(a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let (nodes, weights) = geom::gauss_legendre(GL_ORDER);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * GL_ORDER);
    for k in 0..panels {
        let (lo, hi) = (a + k as f64 * h, a + (k + 1) as f64 * h);
        for (t, w) in nodes.iter().zip(&weights) {
            out.push((0.5 * (lo + hi) + 0.5 * (hi - lo) * t, 0.5 * (hi - lo) * w));
        }
    }
    out
}

/// Resolved engine for a generator/target pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Exact,
    Lines,
    Nodes,
}

pub fn engine_for(spec: &GeneratorSpec, target: &TargetDensity) -> Result<Engine> {
    let n = target.dim();
    let affine = spec.generator.dual_affine(&vec![0.0; n], 0.0).is_some();
    match target.quadrature {
        Quadrature::Grid { .. } | Quadrature::MonteCarlo { .. } => Ok(Engine::Nodes),
        Quadrature::Exact if affine && n <= 2 => Ok(Engine::Exact),
        Quadrature::Exact => Err(Error::Unsupported("exact cells need dual-affine pieces and n ≤ 2".into())),
        Quadrature::Lines { .. } if n <= 2 => Ok(Engine::Lines),
        Quadrature::Lines { .. } => Err(Error::Unsupported(format!("line quadrature in dimension {n}"))),
        Quadrature::Auto if n <= 2 && affine => Ok(Engine::Exact),
        Quadrature::Auto if n <= 2 => Ok(Engine::Lines),
        Quadrature::Auto => Err(Error::Unsupported(format!(
            "auto quadrature in dimension {n}; choose grid or monte_carlo"
        ))),
    }
}

/// Default node rule for the dimension: a 256ⁿ grid for n ≤ 2, Monte Carlo above.
pub fn default_node_quadrature(n: usize) -> Quadrature {
    if n <= 2 {
        Quadrature::Grid { per_axis: GRID_PER_AXIS }
    } else {
        Quadrature::MonteCarlo { samples: MC_SAMPLES, seed: crate::tolerances::DEFAULT_SEED }
    }
}

fn require_dual(v: &PiecewiseGConvex) -> Result<()> {
    if v.orientation != Orientation::Dual {
        return Err(Error::InvalidInput("cell decomposition needs a dual function".into()));
    }
    Ok(())
}

/// `(a_i, b_i)` with `g*(x_i, y, u_i) = a_i·y + b_i + c(y)`.
fn affine_pieces(spec: &GeneratorSpec, v: &PiecewiseGConvex) -> Result<Vec<(Vec<f64>, f64)>> {
    v.pieces
        .iter()
        .map(|p| {
            spec.generator
                .dual_affine(&p.y, p.z)
                .ok_or_else(|| Error::Unsupported("generator has no dual-affine form".into()))
        })
        .collect()
}

fn exact_cell(target: &TargetDensity, aff: &[(Vec<f64>, f64)], i: usize) -> f64 {
    let d = &target.domain;
    match d.dim() {
        1 => {
            let (mut lo, mut hi) = (d.lo[0], d.hi[0]);
            for (j, (a, b)) in aff.iter().enumerate() {
                if j == i {
                    continue;
                }
                // (a_i − a_j) y + (b_i − b_j) ≥ 0
                let s = aff[i].0[0] - a[0];
                let c = aff[i].1 - b;
                if s > 0.0 {
                    lo = lo.max(-c / s);
                } else if s < 0.0 {
                    hi = hi.min(-c / s);
                } else if c < 0.0 || (c == 0.0 && j < i) {
                    return 0.0;
                }
            }
            if hi <= lo {
                return 0.0;
            }
            match &target.density {
                Density::Uniform(c) => c * (hi - lo),
                Density::Function(f) => panel_integral(&|t| f(&[t]), lo, hi, 16),
            }
        }
        _ => {
            let mut poly = geom::box_polygon(d);
            for (j, (a, b)) in aff.iter().enumerate() {
                if j == i || poly.is_empty() {
                    continue;
                }
                let normal = [aff[i].0[0] - a[0], aff[i].0[1] - a[1]];
                let offset = aff[i].1 - b;
                if normal == [0.0, 0.0] {
                    if offset < 0.0 || (offset == 0.0 && j < i) {
                        return 0.0;
                    }
                    continue;
                }
                poly = geom::clip_half_plane(&poly, normal, offset);
            }
            if poly.len() < 3 {
                return 0.0;
            }
            match &target.density {
                Density::Uniform(c) => c * geom::polygon_area(&poly).abs(),
                Density::Function(f) => geom::integrate_convex_polygon(&|p: P2| f(&p), &poly, POLY_LEVEL),
            }
        }
    }
}

/// Lowest index among maximal values.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = k;
        }
    }
    best
}

/// Upper envelope of `φ_i(t)` on `[a, b]` as `(start, end, piece)` runs.
fn envelope_1d<F>(eval: &F, count: usize, a: f64, b: f64, samples: usize) -> Result<Vec<(f64, f64, usize)>>
where
    F: Fn(usize, f64) -> Result<f64>,
{
    let all = |t: f64| -> Result<Vec<f64>> { (0..count).map(|i| eval(i, t)).collect() };
    let h = (b - a) / samples as f64;
    let mut runs: Vec<(f64, f64, usize)> = Vec::new();
    let push = |runs: &mut Vec<(f64, f64, usize)>, s: f64, e: f64, k: usize| {
        if e <= s {
            return;
        }
        match runs.last_mut() {
            Some(last) if last.2 == k => last.1 = e,
            _ => runs.push((s, e, k)),
        }
    };
    let mut t0 = a;
    let mut k0 = argmax(&all(a)?);
    for s in 1..=samples {
        let t1 = if s == samples { b } else { a + s as f64 * h };
        let k1 = argmax(&all(t1)?);
        if k1 == k0 {
            push(&mut runs, t0, t1, k0);
        } else {
            let mut stack = vec![(t0, k0, t1, k1, 0usize)];
            // split in order from left to right
            let mut pieces: Vec<(f64, f64, usize)> = Vec::new();
            while let Some((l, kl, r, kr, depth)) = stack.pop() {
                if kl == kr {
                    pieces.push((l, r, kl));
                    continue;
                }
                let (mut lo, mut hi) = (l, r);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if eval(kl, mid)? >= eval(kr, mid)? {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let cross = 0.5 * (lo + hi);
                let vals = all(cross)?;
                let km = argmax(&vals);
                let top = vals[kl].max(vals[kr]);
                if km == kl || km == kr || vals[km] <= top + 1e-15 * top.abs().max(1.0) || depth > 60 {
                    pieces.push((l, cross, kl));
                    pieces.push((cross, r, kr));
                } else {
                    stack.push((cross, km, r, kr, depth + 1));
                    stack.push((l, kl, cross, km, depth + 1));
                }
            }
            for (s0, e0, k) in pieces {
                push(&mut runs, s0, e0, k);
            }
        }
        t0 = t1;
        k0 = k1;
    }
    Ok(runs)
}

/// Integrate `density(t)` over each run, refining on the sample grid.
fn integrate_runs(runs: &[(f64, f64, usize)], density: &dyn Fn(f64) -> f64, uniform: Option<f64>, a: f64, b: f64, samples: usize, out: &mut [f64]) {
    let (nodes, weights) = geom::gauss_legendre(GL_ORDER);
    let h = (b - a) / samples as f64;
    for &(s, e, k) in runs {
        if let Some(c) = uniform {
            out[k] += c * (e - s);
            continue;
        }
        let mut left = s;
        while left < e {
            let cell = (((left - a) / h).floor() as usize).min(samples - 1);
            let right = (a + (cell + 1) as f64 * h).min(e);
            let right = if right <= left { e } else { right };
            out[k] += geom::integrate_segment(density, left, right, &nodes, &weights);
            left = right;
        }
    }
}

fn lines_masses(spec: &GeneratorSpec, v: &PiecewiseGConvex, target: &TargetDensity) -> Result<Vec<f64>> {
    let (samples, panels) = target.lines_params();
    let d = &target.domain;
    let n = v.len();
    let uniform = match target.density {
        Density::Uniform(c) => Some(c),
        _ => None,
    };
    match d.dim() {
        1 => {
            let eval = |i: usize, t: f64| v.piece_value(spec, i, &[t]);
            let runs = envelope_1d(&eval, n, d.lo[0], d.hi[0], samples)?;
            let mut out = vec![0.0; n];
            integrate_runs(&runs, &|t| target.density.at(&[t]), uniform, d.lo[0], d.hi[0], samples, &mut out);
            Ok(out)
        }
        2 => {
            let rows = row_nodes(d.lo[1], d.hi[1], panels);
            let per_row: Vec<Result<Vec<f64>>> = rows
                .par_iter()
                .map(|&(y2, w)| {
                    let eval = |i: usize, t: f64| v.piece_value(spec, i, &[t, y2]);
                    let runs = envelope_1d(&eval, n, d.lo[0], d.hi[0], samples)?;
                    let mut out = vec![0.0; n];
                    integrate_runs(&runs, &|t| target.density.at(&[t, y2]), uniform, d.lo[0], d.hi[0], samples, &mut out);
                    Ok(out.into_iter().map(|m| m * w).collect())
                })
                .collect();
            let mut total = vec![0.0; n];
            for row in per_row {
                for (t, m) in total.iter_mut().zip(row?) {
                    *t += m;
                }
            }
            Ok(total)
        }
        k => Err(Error::Unsupported(format!("line quadrature in dimension {k}"))),
    }
}

/// Argmax piece of every node with a tie flag.
fn classify_nodes(spec: &GeneratorSpec, v: &PiecewiseGConvex, nodes: &[Vec<f64>]) -> Result<Vec<(usize, bool)>> {
    nodes
        .par_iter()
        .map(|y| {
            let vals = v.piece_values(spec, y)?;
            let k = argmax(&vals);
            let top = vals[k];
            let tie = vals
                .iter()
                .enumerate()
                .any(|(j, val)| j != k && *val >= top - TIE_TOL * top.abs().max(1.0));
            Ok((k, tie))
        })
        .collect()
}

/// Masses `μ_i` of all dual cells.
pub fn cell_masses(spec: &GeneratorSpec, v: &PiecewiseGConvex, target: &TargetDensity) -> Result<Vec<f64>> {
    require_dual(v)?;
    match engine_for(spec, target)? {
        Engine::Exact => {
            let aff = affine_pieces(spec, v)?;
            Ok((0..v.len()).map(|i| exact_cell(target, &aff, i)).collect())
        }
        Engine::Lines => lines_masses(spec, v, target),
        Engine::Nodes => {
            let pts: Vec<Vec<f64>> = target.nodes().iter().map(|(y, _)| y.clone()).collect();
            let cls = classify_nodes(spec, v, &pts)?;
            let mut out = vec![0.0; v.len()];
            for ((k, _), (_, w)) in cls.iter().zip(target.nodes()) {
                out[*k] += w;
            }
            Ok(out)
        }
    }
}

/// Mass of the single cell `i`; cheaper than [`cell_masses`] for exact cells.
pub fn cell_mass(spec: &GeneratorSpec, v: &PiecewiseGConvex, target: &TargetDensity, i: usize) -> Result<f64> {
    require_dual(v)?;
    if engine_for(spec, target)? == Engine::Exact {
        let aff = affine_pieces(spec, v)?;
        return Ok(exact_cell(target, &aff, i));
    }
    Ok(cell_masses(spec, v, target)?[i])
}

/// One exported node of a decomposition.
#[derive(Debug, Clone, Serialize)]
pub struct NodeCell {
    pub y: Vec<f64>,
    pub piece: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellDecomposition {
    pub engine: Engine,
    pub masses: Vec<f64>,
    pub total: f64,
    pub nodes: Vec<NodeCell>,
    /// Fraction of nodes whose top two pieces agree within the tie tolerance.
    pub tie_fraction: f64,
}

impl CellDecomposition {
    pub fn mass_sum(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// `|Σ μ_i − ∫ f*| / ∫ f*`.
    pub fn conservation_error(&self) -> f64 {
        (self.mass_sum() - self.total).abs() / self.total
    }
}

/// Masses from the engine plus node memberships. For continuous engines the
/// nodes are a midpoint grid with `export_per_axis` points per axis.
pub fn cell_decomposition(spec: &GeneratorSpec, v: &PiecewiseGConvex, target: &TargetDensity, export_per_axis: usize) -> Result<CellDecomposition> {
    let engine = engine_for(spec, target)?;
    let masses = cell_masses(spec, v, target)?;
    let (points, weights): (Vec<Vec<f64>>, Vec<f64>) = if engine == Engine::Nodes {
        target.nodes().iter().cloned().unzip()
    } else {
        let pts = target.domain.midpoint_grid(export_per_axis);
        let w = target.domain.volume() / pts.len() as f64;
        let ws = pts.iter().map(|y| w * target.density.at(y)).collect();
        (pts, ws)
    };
    let cls = classify_nodes(spec, v, &points)?;
    let ties = cls.iter().filter(|(_, t)| *t).count();
    let tie_fraction = if cls.is_empty() { 0.0 } else { ties as f64 / cls.len() as f64 };
    let nodes = points
        .into_iter()
        .zip(weights)
        .zip(&cls)
        .map(|((y, weight), (piece, _))| NodeCell { y, piece: *piece, weight })
        .collect();
    Ok(CellDecomposition { engine, masses, total: target.total(), nodes, tie_fraction })
}

/// Point mass of `μ_u` at a contact point.
#[derive(Debug, Clone, Serialize)]
pub struct Atom {
    pub x: Vec<f64>,
    pub mass: f64,
    pub active: Vec<usize>,
}

/// `∫_{∂u(x)} f*(Y(x,u,p)) / |det E| dp` over the hull of the active slopes at `x`.
pub fn atom_at(spec: &GeneratorSpec, u: &PiecewiseGConvex, target: &TargetDensity, x: &[f64]) -> Result<Atom> {
    if u.orientation != Orientation::Primal {
        return Err(Error::InvalidInput("atoms need a primal function".into()));
    }
    let ev = u.eval(spec, x)?;
    let slopes: Vec<Vec<f64>> = ev.active.iter().map(|&i| u.piece_gradient(spec, i, x)).collect::<Result<_>>()?;
    let uval = ev.value;
    let integrand = |p: &[f64]| -> f64 {
        match spec.solve_yz_free(x, uval, p) {
            Ok((y, z)) => {
                let det = spec.e_matrix(x, &y, z).determinant().abs();
                if det > 0.0 {
                    target.at(&y) / det
                } else {
                    0.0
                }
            }
            Err(_) => 0.0,
        }
    };
    let mass = match x.len() {
        1 => {
            let lo = slopes.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let hi = slopes.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                panel_integral(&|t| integrand(&[t]), lo, hi, 64)
            } else {
                0.0
            }
        }
        2 => {
            let pts: Vec<P2> = slopes.iter().map(|p| [p[0], p[1]]).collect();
            let hull = geom::convex_hull(&pts);
            if hull.len() < 3 {
                0.0
            } else {
                geom::integrate_convex_polygon(&|p: P2| integrand(&p), &hull, POLY_LEVEL)
            }
        }
        n => return Err(Error::Unsupported(format!("atoms in dimension {n}"))),
    };
    Ok(Atom { x: x.to_vec(), mass, active: ev.active })
}

/// Atoms at every vertex of `u` in `domain`.
pub fn ma_measure_atoms(spec: &GeneratorSpec, u: &PiecewiseGConvex, target: &TargetDensity, domain: &BoxDomain, per_axis: usize) -> Result<Vec<Atom>> {
    for a in 0..u.len() {
        for b in a + 1..u.len() {
            if geom::sup_dist(&u.pieces[a].y, &u.pieces[b].y) <= crate::tolerances::DEDUP_TOL {
                return Err(Error::InvalidInput(format!("pieces {a} and {b} share their y")));
            }
        }
    }
    let verts = u.vertices(spec, domain, per_axis)?;
    let mut atoms = Vec::new();
    for (x, _) in verts {
        let atom = atom_at(spec, u, target, &x)?;
        if atom.mass > 0.0 {
            atoms.push(atom);
        }
    }
    Ok(atoms)
}

/// `μ_u(K)` from atoms.
pub fn mass_in_box(atoms: &[Atom], k: &BoxDomain) -> f64 {
    atoms.iter().filter(|a| k.contains(&a.x)).map(|a| a.mass).sum()
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub index: usize,
    pub set: usize,
    pub mass: f64,
    pub limit_mass: f64,
    pub difference: f64,
    pub sup_distance: f64,
}

/// `|μ_{u_k}(K) − μ_u(K)|` for each member of the sequence and each test box.
pub fn weak_convergence_probe(
    spec: &GeneratorSpec,
    sequence: &[PiecewiseGConvex],
    limit: &PiecewiseGConvex,
    target: &TargetDensity,
    domain: &BoxDomain,
    test_sets: &[BoxDomain],
    per_axis: usize,
) -> Result<Vec<ConvergenceRow>> {
    let limit_atoms = ma_measure_atoms(spec, limit, target, domain, per_axis)?;
    let grid = domain.lattice(per_axis);
    let limit_vals: Vec<f64> = grid.iter().map(|x| limit.value(spec, x)).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (k, uk) in sequence.iter().enumerate() {
        let atoms = ma_measure_atoms(spec, uk, target, domain, per_axis)?;
        let mut sup: f64 = 0.0;
        for (x, lv) in grid.iter().zip(&limit_vals) {
            sup = sup.max((uk.value(spec, x)? - lv).abs());
        }
        for (s, set) in test_sets.iter().enumerate() {
            let mass = mass_in_box(&atoms, set);
            let limit_mass = mass_in_box(&limit_atoms, set);
            rows.push(ConvergenceRow { index: k, set: s, mass, limit_mass, difference: (mass - limit_mass).abs(), sup_distance: sup });
        }
    }
    Ok(rows)
}

/// Counts breaches of the monotone response to lowering one dual height:
/// `μ_j` must not decrease and every other `μ_k` must not increase.
pub fn monotone_response_violations(
    spec: &GeneratorSpec,
    v: &PiecewiseGConvex,
    target: &TargetDensity,
    j: usize,
    decrease: f64,
    tol: f64,
) -> Result<usize> {
    let before = cell_masses(spec, v, target)?;
    let mut lowered = v.clone();
    lowered.pieces[j].z -= decrease;
    let after = cell_masses(spec, &lowered, target)?;
    let mut bad = 0;
    for k in 0..before.len() {
        let grew = after[k] - before[k];
        if (k == j && grew < -tol) || (k != j && grew > tol) {
            bad += 1;
        }
    }
    Ok(bad)
}

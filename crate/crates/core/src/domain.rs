//! g-segments, Loeper's inequality, sections, the normalising frame and g-cones.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gconvex::{GAffine, PiecewiseGConvex};
use crate::generator::GeneratorSpec;
use crate::geom::{self, BoxDomain};
use crate::tolerances::TIE_TOL;

/// Damped Newton for a square system `F(w) = 0` with Jacobian supplied.
fn newton<F>(mut w: Vec<f64>, tol: f64, max_iter: usize, mut eval: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<(DVector<f64>, DMatrix<f64>)>,
{
    let (mut f, mut jac) = eval(&w)?;
    let mut fnorm = f.amax();
    let mut iterations = 0;
    while iterations < max_iter && fnorm > tol * 1e-3 {
        iterations += 1;
        let step = match jac.clone().lu().solve(&(-&f)) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => return Err(Error::SingularE { det: jac.determinant() }),
        };
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = w.iter().zip(step.iter()).map(|(a, s)| a + alpha * s).collect();
            if let Ok((ft, jt)) = eval(&trial) {
                let tn = ft.amax();
                if tn.is_finite() && tn < fnorm {
                    w = trial;
                    f = ft;
                    jac = jt;
                    fnorm = tn;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if fnorm <= tol {
        Ok(w)
    } else {
        Err(Error::NoConvergence { iterations, residual: fnorm })
    }
}

/// Curve `θ ↦ x_θ` along which `g_y/g_z(x_θ, y0, z0)` is affine.
#[derive(Debug, Clone)]
pub struct GSegment {
    spec: GeneratorSpec,
    pub anchor: GAffine,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    q_start: DVector<f64>,
    q_end: DVector<f64>,
}

impl GSegment {
    pub fn new(spec: &GeneratorSpec, start: &[f64], end: &[f64], y0: &[f64], z0: f64) -> Self {
        let q = |x: &[f64]| {
            let j = spec.jet(x, y0, z0);
            &j.gy / j.gz
        };
        GSegment {
            spec: spec.clone(),
            anchor: GAffine::new(y0.to_vec(), z0),
            start: start.to_vec(),
            end: end.to_vec(),
            q_start: q(start),
            q_end: q(end),
        }
    }

    /// `x_θ`; the end points are returned exactly.
    pub fn point(&self, theta: f64) -> Result<Vec<f64>> {
        if theta == 0.0 {
            return Ok(self.start.clone());
        }
        if theta == 1.0 {
            return Ok(self.end.clone());
        }
        let target = &self.q_start * (1.0 - theta) + &self.q_end * theta;
        let (y0, z0) = (&self.anchor.y, self.anchor.z);
        let spec = &self.spec;
        newton(geom::lerp(&self.start, &self.end, theta), spec.tol_newton, spec.max_iter, |x| {
            let j = spec.jet(x, y0, z0);
            let f = &j.gy / j.gz - &target;
            // ∂(g_y/g_z)_m / ∂x_i = E_im / g_z
            let jac = j.e_matrix().transpose() / j.gz;
            Ok((f, jac))
        })
    }

    /// `ẋ_θ = g_z E⁻ᵀ (q_end − q_start)`.
    pub fn velocity(&self, theta: f64) -> Result<Vec<f64>> {
        let x = self.point(theta)?;
        let j = self.spec.jet(&x, &self.anchor.y, self.anchor.z);
        let e = j.e_matrix();
        let dq = &self.q_end - &self.q_start;
        let v = e.transpose().lu().solve(&dq).ok_or(Error::SingularE { det: e.determinant() })? * j.gz;
        Ok(v.as_slice().to_vec())
    }

    /// Residual of the defining linearity at `x`.
    pub fn residual(&self, theta: f64, x: &[f64]) -> f64 {
        let j = self.spec.jet(x, &self.anchor.y, self.anchor.z);
        let target = &self.q_start * (1.0 - theta) + &self.q_end * theta;
        (&j.gy / j.gz - target).amax()
    }
}

/// Curve `θ ↦ y_θ` along which `g_x(x0, y_θ, g*(x0, y_θ, u0))` is affine.
#[derive(Debug, Clone)]
pub struct GStarSegment {
    spec: GeneratorSpec,
    pub x0: Vec<f64>,
    pub u0: f64,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    p_start: DVector<f64>,
    p_end: DVector<f64>,
}

impl GStarSegment {
    pub fn new(spec: &GeneratorSpec, start: &[f64], end: &[f64], x0: &[f64], u0: f64) -> Result<Self> {
        let p = |y: &[f64]| -> Result<DVector<f64>> {
            let z = spec.g_star(x0, y, u0)?;
            Ok(spec.jet(x0, y, z).gx)
        };
        Ok(GStarSegment {
            spec: spec.clone(),
            x0: x0.to_vec(),
            u0,
            start: start.to_vec(),
            end: end.to_vec(),
            p_start: p(start)?,
            p_end: p(end)?,
        })
    }

    pub fn point(&self, theta: f64) -> Result<Vec<f64>> {
        if theta == 0.0 {
            return Ok(self.start.clone());
        }
        if theta == 1.0 {
            return Ok(self.end.clone());
        }
        let target = &self.p_start * (1.0 - theta) + &self.p_end * theta;
        let spec = &self.spec;
        let (x0, u0) = (&self.x0, self.u0);
        newton(geom::lerp(&self.start, &self.end, theta), spec.tol_newton, spec.max_iter, |y| {
            let z = spec.g_star(x0, y, u0)?;
            let j = spec.jet(x0, y, z);
            // D_y g_x(x0, y, g*(x0, y, u0)) = E
            let jac = j.e_matrix();
            Ok((j.gx - &target, jac))
        })
    }

    pub fn residual(&self, theta: f64, y: &[f64]) -> Result<f64> {
        let z = self.spec.g_star(&self.x0, y, self.u0)?;
        let target = &self.p_start * (1.0 - theta) + &self.p_end * theta;
        Ok((self.spec.jet(&self.x0, y, z).gx - target).amax())
    }
}

/// `x_θ` on the g-segment from `x_a` to `x_b` anchored at `(y0, z0)`.
pub fn g_segment_point(spec: &GeneratorSpec, x_a: &[f64], x_b: &[f64], y0: &[f64], z0: f64, theta: f64) -> Result<Vec<f64>> {
    GSegment::new(spec, x_a, x_b, y0, z0).point(theta)
}

/// `y_θ` on the g*-segment from `y_a` to `y_b` with respect to `(x0, u0)`.
pub fn g_star_segment_point(spec: &GeneratorSpec, y_a: &[f64], y_b: &[f64], x0: &[f64], u0: f64, theta: f64) -> Result<Vec<f64>> {
    GStarSegment::new(spec, y_a, y_b, x0, u0)?.point(theta)
}

/// Outcome of a Loeper inequality scan.
#[derive(Debug, Clone, Serialize)]
pub struct LoeperReport {
    pub samples: usize,
    pub max_violation: f64,
    pub worst_x: Vec<f64>,
    pub worst_theta: f64,
}

/// `max g(x, y_θ, z_θ) − max{g(x, y0, z0), g(x, y1, z1)}` over the samples,
/// with `z_θ = g*(x0, y_θ, u0)` along the g*-segment.
pub fn loeper_check(
    spec: &GeneratorSpec,
    x0: &[f64],
    u0: f64,
    y0: &[f64],
    y1: &[f64],
    x_samples: &[Vec<f64>],
    theta_samples: &[f64],
) -> Result<LoeperReport> {
    let seg = GStarSegment::new(spec, y0, y1, x0, u0)?;
    let z0 = spec.g_star(x0, y0, u0)?;
    let z1 = spec.g_star(x0, y1, u0)?;
    let mut report = LoeperReport { samples: 0, max_violation: f64::NEG_INFINITY, worst_x: x0.to_vec(), worst_theta: 0.0 };
    for &theta in theta_samples {
        let yt = seg.point(theta)?;
        let zt = spec.g_star(x0, &yt, u0)?;
        for x in x_samples {
            let lhs = spec.value(x, &yt, zt);
            let rhs = spec.value(x, y0, z0).max(spec.value(x, y1, z1));
            let v = lhs - rhs;
            report.samples += 1;
            if v > report.max_violation {
                report.max_violation = v;
                report.worst_x = x.clone();
                report.worst_theta = theta;
            }
        }
    }
    Ok(report)
}

/// Base point and maps of the normalising coordinates.
///
/// With `z_h = g*(x0, y0, u0 + h)` and `E0 = E(x0, y0, z_h)`:
///
/// * `q(x) = E0⁻ᵀ g_z(x0,y0,z_h) [g_y/g_z(x, y0, z_h) − g_y/g_z(x0, y0, z_h)]`
/// * `p(y) = g_x(x0, y, g*(x0, y, u0 + h)) − g_x(x0, y0, z_h)`
/// * `ḡ(q, p, z) = g_z(x0,y0,z_h)/g_z(x,y0,z_h) · [g(x, y, g*(x0, y, u0 + h − z)) − g(x, y0, z_h)]`
///
/// so that `ḡ = q·p − z + R` with `R` of higher order.
#[derive(Debug, Clone)]
pub struct TransformFrame {
    spec: GeneratorSpec,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub u0: f64,
    pub h: f64,
    pub z_h: f64,
    e0: DMatrix<f64>,
    e0_inv_t: DMatrix<f64>,
    e0_inv: DMatrix<f64>,
    gz0: f64,
    ratio0: DVector<f64>,
    p_base: DVector<f64>,
}

/// Remainder statistics of the frame expansion on a ball.
#[derive(Debug, Clone, Serialize)]
pub struct ExpansionReport {
    pub radius: f64,
    pub samples: usize,
    pub c_max: f64,
    pub max_abs_remainder: f64,
    pub normalization_residual: f64,
}

/// One sampled row of the frame diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct FrameSample {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub z: f64,
    pub g_bar: f64,
    pub remainder: f64,
    pub ratio: f64,
}

impl TransformFrame {
    pub fn new(spec: &GeneratorSpec, x0: &[f64], y0: &[f64], u0: f64, h: f64) -> Result<Self> {
        if h < 0.0 {
            return Err(Error::InvalidInput("frame height must be non-negative".into()));
        }
        let z_h = spec.g_star(x0, y0, u0 + h)?;
        let j = spec.jet(x0, y0, z_h);
        let e0 = j.e_matrix();
        let det = e0.determinant();
        if !(det.abs() >= crate::tolerances::EPS_E) {
            return Err(Error::SingularE { det });
        }
        let e0_inv = e0.clone().try_inverse().ok_or(Error::SingularE { det })?;
        Ok(TransformFrame {
            spec: spec.clone(),
            x0: x0.to_vec(),
            y0: y0.to_vec(),
            u0,
            h,
            z_h,
            e0_inv_t: e0_inv.transpose(),
            e0_inv,
            e0,
            gz0: j.gz,
            ratio0: &j.gy / j.gz,
            p_base: j.gx,
        })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    pub fn e0(&self) -> &DMatrix<f64> {
        &self.e0
    }

    pub fn q_of_x(&self, x: &[f64]) -> Vec<f64> {
        let j = self.spec.jet(x, &self.y0, self.z_h);
        let d = (&j.gy / j.gz - &self.ratio0) * self.gz0;
        (&self.e0_inv_t * d).as_slice().to_vec()
    }

    pub fn p_of_y(&self, y: &[f64]) -> Result<Vec<f64>> {
        let w = self.spec.g_star(&self.x0, y, self.u0 + self.h)?;
        Ok((self.spec.jet(&self.x0, y, w).gx - &self.p_base).as_slice().to_vec())
    }

    /// Inverse of `q`.
    pub fn x_of_q(&self, q: &[f64]) -> Result<Vec<f64>> {
        let target = DVector::from_column_slice(q);
        let spec = &self.spec;
        let start: Vec<f64> = self.x0.iter().zip(q).map(|(a, b)| a + b).collect();
        newton(start, spec.tol_newton, spec.max_iter, |x| {
            let j = spec.jet(x, &self.y0, self.z_h);
            let f = &self.e0_inv_t * ((&j.gy / j.gz - &self.ratio0) * self.gz0) - &target;
            let jac = &self.e0_inv_t * j.e_matrix().transpose() * (self.gz0 / j.gz);
            Ok((f, jac))
        })
    }

    /// Inverse of `p`.
    pub fn y_of_p(&self, p: &[f64]) -> Result<Vec<f64>> {
        let target = DVector::from_column_slice(p);
        let spec = &self.spec;
        let start: Vec<f64> = (DVector::from_column_slice(&self.y0) + &self.e0_inv * &target).as_slice().to_vec();
        newton(start, spec.tol_newton, spec.max_iter, |y| {
            let w = spec.g_star(&self.x0, y, self.u0 + self.h)?;
            let j = spec.jet(&self.x0, y, w);
            Ok((&j.gx - &self.p_base - &target, j.e_matrix()))
        })
    }

    /// `g̃(x, y, z)` in the original variables.
    pub fn g_tilde(&self, x: &[f64], y: &[f64], z: f64) -> Result<f64> {
        let w = self.spec.g_star(&self.x0, y, self.u0 + self.h - z)?;
        let factor = self.gz0 / self.spec.g_z(x, &self.y0, self.z_h);
        Ok(factor * (self.spec.value(x, y, w) - self.spec.value(x, &self.y0, self.z_h)))
    }

    /// `ḡ(q, p, z)`.
    pub fn g_bar(&self, q: &[f64], p: &[f64], z: f64) -> Result<f64> {
        let x = self.x_of_q(q)?;
        let y = self.y_of_p(p)?;
        self.g_tilde(&x, &y, z)
    }

    /// Sample `(q, p, z)` uniformly in the cube of half-width `radius` and
    /// record the expansion remainder.
    pub fn sample_expansion(&self, radius: f64, samples: usize, seed: u64) -> Result<(ExpansionReport, Vec<FrameSample>)> {
        let n = self.x0.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(samples);
        let mut c_max: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        let mut norm_res: f64 = 0.0;
        let zero = vec![0.0; n];
        for _ in 0..samples {
            let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-radius..=radius)).collect();
            let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-radius..=radius)).collect();
            let z = rng.gen_range(-radius..=radius);
            let gb = self.g_bar(&q, &p, z)?;
            let rem = gb - (geom::dot(&q, &p) - z);
            let (nq, np) = (geom::norm(&q), geom::norm(&p));
            let denom = nq * nq * np * np + z.abs() * (nq * nq + nq * np + np * np) + z * z;
            let ratio = if denom > 1e-300 { rem.abs() / denom } else { 0.0 };
            c_max = c_max.max(ratio);
            max_abs = max_abs.max(rem.abs());
            norm_res = norm_res
                .max(self.g_bar(&q, &zero, 0.0)?.abs())
                .max(self.g_bar(&zero, &p, 0.0)?.abs());
            rows.push(FrameSample { q, p, z, g_bar: gb, remainder: rem, ratio });
        }
        let dz = 1e-5;
        let slope = (self.g_bar(&zero, &zero, dz)? - self.g_bar(&zero, &zero, -dz)?) / (2.0 * dz);
        norm_res = norm_res.max((slope + 1.0).abs());
        Ok((ExpansionReport { radius, samples, c_max, max_abs_remainder: max_abs, normalization_residual: norm_res }, rows))
    }

    /// Smallest and largest `|q(x) − q(x')| / |x − x'|` over sampled pairs in `domain`.
    pub fn jacobian_bounds(&self, domain: &BoxDomain, samples: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for _ in 0..samples {
            let a = crate::generator::sample_box(domain, &mut rng);
            let b = crate::generator::sample_box(domain, &mut rng);
            let d = geom::dist(&a, &b);
            if d < 1e-9 {
                continue;
            }
            let r = geom::dist(&self.q_of_x(&a), &self.q_of_x(&b)) / d;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        (lo, hi)
    }
}

/// Membership mask of a section on a lattice with its convexity defect.
#[derive(Debug, Clone, Serialize)]
pub struct SectionReport {
    pub per_axis: usize,
    pub members: Vec<bool>,
    pub count: usize,
    pub pairs_checked: usize,
    /// Largest distance, in lattice cells, from a g-segment midpoint of two
    /// members to the member set.
    pub defect_cells: f64,
}

/// `S_h = {x : u(x) < g(x, y0, z0 − h)}` on a lattice of `domain`; for
/// `h = 0` the contact set `{u ≤ g(·, y0, z0)}` up to the tie tolerance.
///
/// The convexity defect is measured on at most `max_pairs` member pairs
/// (all pairs when fewer exist), drawn with `seed`.
pub fn section(
    spec: &GeneratorSpec,
    u: &PiecewiseGConvex,
    support: &GAffine,
    h: f64,
    domain: &BoxDomain,
    per_axis: usize,
    max_pairs: usize,
    seed: u64,
) -> Result<SectionReport> {
    let n = domain.dim();
    if n > 2 {
        return Err(Error::Unsupported(format!("sections in dimension {n}")));
    }
    let level = support.z - h;
    let member = |x: &[f64]| -> Result<bool> {
        let uv = u.value(spec, x)?;
        let sv = spec.value(x, &support.y, level);
        Ok(if h > 0.0 { uv < sv } else { uv <= sv + TIE_TOL * sv.abs().max(1.0) })
    };
    let grid = domain.lattice(per_axis);
    let members: Vec<bool> = grid.iter().map(|x| member(x)).collect::<Result<_>>()?;
    let idx: Vec<usize> = members.iter().enumerate().filter(|(_, m)| **m).map(|(i, _)| i).collect();
    if idx.is_empty() {
        return Err(Error::EmptySection);
    }
    let spacing: Vec<f64> = (0..n).map(|k| (domain.hi[k] - domain.lo[k]) / (per_axis - 1) as f64).collect();
    let all_pairs = idx.len() * (idx.len() - 1) / 2;
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    if all_pairs <= max_pairs {
        for a in 0..idx.len() {
            for b in a + 1..idx.len() {
                pairs.push((idx[a], idx[b]));
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..max_pairs {
            let a = idx[rng.gen_range(0..idx.len())];
            let b = idx[rng.gen_range(0..idx.len())];
            if a != b {
                pairs.push((a, b));
            }
        }
    }
    let seg_anchor = (support.y.clone(), level);
    let mut defect: f64 = 0.0;
    for &(a, b) in &pairs {
        let mid = g_segment_point(spec, &grid[a], &grid[b], &seg_anchor.0, seg_anchor.1, 0.5)?;
        if domain.contains_with_slack(&mid, 1e-12) && member(&mid)? {
            continue;
        }
        // distance in cells to the nearest member node
        let d = idx
            .iter()
            .map(|&k| (0..n).map(|c| ((grid[k][c] - mid[c]) / spacing[c]).abs()).fold(0.0, f64::max))
            .fold(f64::INFINITY, f64::min);
        defect = defect.max(d);
    }
    Ok(SectionReport { per_axis, count: idx.len(), members, pairs_checked: pairs.len(), defect_cells: defect })
}

/// Subgradient of the g-cone at its vertex, sampled along rays in `p`.
#[derive(Debug, Clone, Serialize)]
pub struct ConeReport {
    pub h: f64,
    pub directions: usize,
    /// Radial extent of `Y∨(0)` along each direction.
    pub radii: Vec<f64>,
    /// Length (one dimension) or area (two) of the sampled set.
    pub measure: f64,
    /// Same quantity for the classical cone over the same base.
    pub classical_measure: f64,
    /// `hⁿ |R*|` for the rectangle base.
    pub h_n_rstar: f64,
    /// Directions whose boundary point leaves `2 ∂K(0)`.
    pub violations: usize,
    /// `max_q ∨`-vertex value error: `|∨(0) + h|`.
    pub vertex_error: f64,
}

/// Configuration bounds for the cone diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct ConeLimits {
    pub max_diameter: f64,
    pub max_height: f64,
}

impl Default for ConeLimits {
    fn default() -> Self {
        ConeLimits { max_diameter: 0.5, max_height: 0.1 }
    }
}

/// Sample `Y∨(0) = {p : ḡ(q, p, h) ≤ 0 for q ∈ ∂D}` along `directions` rays
/// and compare with the classical cone over the rectangle `base`.
pub fn g_cone_subgradient(frame: &TransformFrame, base: &BoxDomain, directions: usize, boundary_per_axis: usize, limits: ConeLimits) -> Result<ConeReport> {
    let n = base.dim();
    let h = frame.h;
    if !base.contains(&vec![0.0; n]) {
        return Err(Error::InvalidInput("cone base must contain the vertex".into()));
    }
    if base.diameter() > limits.max_diameter + 1e-12 || h > limits.max_height + 1e-12 || h <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "cone needs diam(D) ≤ {} and 0 < h ≤ {}",
            limits.max_diameter, limits.max_height
        )));
    }
    if n > 2 {
        return Err(Error::Unsupported(format!("cones in dimension {n}")));
    }
    let spec = frame.spec();
    // (x, positive factor, g(x, y0, z_h)) per boundary point
    let boundary: Vec<(Vec<f64>, f64, f64)> = base
        .boundary_lattice(boundary_per_axis)
        .iter()
        .map(|q| {
            let x = frame.x_of_q(q)?;
            let factor = frame.gz0 / spec.g_z(&x, &frame.y0, frame.z_h);
            let base_value = spec.value(&x, &frame.y0, frame.z_h);
            Ok((x, factor, base_value))
        })
        .collect::<Result<_>>()?;
    let feasible = |p: &[f64]| -> Result<bool> {
        let y = frame.y_of_p(p)?;
        // ḡ(q, p, h) uses g*(x0, y, u0)
        let w = spec.g_star(&frame.x0, &y, frame.u0)?;
        Ok(boundary.iter().all(|(x, factor, base_value)| factor * (spec.value(x, &y, w) - base_value) <= 1e-13))
    };
    let dirs: Vec<Vec<f64>> = if n == 1 {
        vec![vec![1.0], vec![-1.0]]
    } else {
        (0..directions)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / directions as f64;
                vec![t.cos(), t.sin()]
            })
            .collect()
    };
    let corners = base.corners();
    let radii: Vec<f64> = dirs
        .par_iter()
        .map(|d| -> Result<f64> {
            // bracket around the classical radius h / max_q (d·q)
            let support = corners.iter().map(|q| geom::dot(d, q)).fold(0.0, f64::max).max(1e-12);
            let classical = h / support;
            let mut lo = 0.0;
            let mut hi = 0.5 * classical;
            let mut grow = 0;
            while feasible(&geom::scale(d, hi)).unwrap_or(false) {
                lo = hi;
                hi *= 2.0;
                grow += 1;
                if grow > 60 {
                    return Err(Error::InvalidInput("cone subgradient is unbounded".into()));
                }
            }
            while hi - lo > 1e-10 * hi {
                let mid = 0.5 * (lo + hi);
                if feasible(&geom::scale(d, mid)).unwrap_or(false) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(lo)
        })
        .collect::<Result<_>>()?;
    if radii.iter().all(|r| *r <= 0.0) {
        return Err(Error::EmptyCone);
    }
    let measure = if n == 1 {
        radii[0] + radii[1]
    } else {
        let dt = 2.0 * std::f64::consts::PI / dirs.len() as f64;
        0.5 * radii.iter().map(|r| r * r).sum::<f64>() * dt
    };
    let rstar: f64 = (0..n).map(|k| 1.0 / base.hi[k] + 1.0 / (-base.lo[k])).product();
    let h_n_rstar = h.powi(n as i32) * rstar;
    let classical_measure = h_n_rstar / if n == 2 { 2.0 } else { 1.0 };
    let corners = base.corners();
    let violations = dirs
        .iter()
        .zip(&radii)
        .filter(|(d, r)| {
            let p = geom::scale(d, **r);
            corners.iter().any(|c| geom::dot(&p, c) > 2.0 * h * (1.0 + 1e-9))
        })
        .count();
    let vertex_error = (frame.g_tilde(&frame.x0, &frame.y0, h)? + h).abs();
    Ok(ConeReport { h, directions: dirs.len(), radii, measure, classical_measure, h_n_rstar, violations, vertex_error })
}

/// Outcome of the quantitative quasiconvexity scan.
#[derive(Debug, Clone, Serialize)]
pub struct QuasiconvexityReport {
    /// `g(x1, y1, z1) − g(x1, y0, z0)`.
    pub end_gap: f64,
    /// Smallest admissible `M`; `None` when no finite value exists.
    pub m: Option<f64>,
    pub max_left: f64,
}

/// Smallest `M` with `g(x_θ,y1,z1) − g(x_θ,y0,z0) ≤ M θ [g(x1,y1,z1) − g(x1,y0,z0)]₊`,
/// where `zᵢ = g*(x0, yᵢ, u0)` and `x_θ` is the g-segment from `x0` to `x1`
/// anchored at `(y0, z0)`.
pub fn quasiconvexity_check(
    spec: &GeneratorSpec,
    x0: &[f64],
    x1: &[f64],
    y0: &[f64],
    y1: &[f64],
    u0: f64,
    theta_samples: &[f64],
) -> Result<QuasiconvexityReport> {
    let z0 = spec.g_star(x0, y0, u0)?;
    let z1 = spec.g_star(x0, y1, u0)?;
    let seg = GSegment::new(spec, x0, x1, y0, z0);
    let gap = |x: &[f64]| spec.value(x, y1, z1) - spec.value(x, y0, z0);
    let end_gap = gap(x1);
    let mut max_left = f64::NEG_INFINITY;
    let mut m: f64 = 0.0;
    let tol = 1e-12 * u0.abs().max(1.0);
    let mut finite = true;
    for &t in theta_samples {
        let x = seg.point(t)?;
        let left = gap(&x);
        max_left = max_left.max(left);
        if t <= 0.0 {
            continue;
        }
        if end_gap > 0.0 {
            m = m.max(left / (t * end_gap));
        } else if left > tol {
            finite = false;
        }
    }
    Ok(QuasiconvexityReport { end_gap, m: finite.then_some(m), max_left })
}

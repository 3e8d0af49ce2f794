//! Generating functions `g(x, y, z)`, their duals and the structure matrices.
//!
//! A generator is any smooth `g` with `g_z < 0` and an invertible matrix
//! `E = g_xy − g_xz ⊗ g_y / g_z`. Given a jet `(x, u, p)` the pair `(Y, Z)`
//! solves `g(x, Y, Z) = u`, `g_x(x, Y, Z) = p`, and the dual function
//! `g*(x, y, u)` inverts `g` in its last argument.

mod builtin;
mod expr;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use builtin::{Classical, Perturbed, QuadraticCost};
pub use expr::{Expr, ExpressionGenerator, Value};

use crate::error::{Error, Result};
use crate::geom::{BoxDomain, Interval};
use crate::tolerances::{EPS_E, H_FD, MAX_NEWTON_ITER, TOL_NEWTON};

/// All derivatives of `g` up to second order at one point.
///
/// `gxy[(i, j)]` is `∂²g / ∂x_i ∂y_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    pub g: f64,
    pub gx: DVector<f64>,
    pub gy: DVector<f64>,
    pub gz: f64,
    pub gxx: DMatrix<f64>,
    pub gxy: DMatrix<f64>,
    pub gxz: DVector<f64>,
    pub gyy: DMatrix<f64>,
    pub gyz: DVector<f64>,
    pub gzz: f64,
}

impl Jet2 {
    /// `E_ij = g_{i,j} − g_z⁻¹ g_{i,z} g_{,j}`.
    pub fn e_matrix(&self) -> DMatrix<f64> {
        &self.gxy - (&self.gxz * self.gy.transpose()) / self.gz
    }

    /// `−g_y / g_z`, the y-gradient of the dual function.
    pub fn dual_gradient_y(&self) -> DVector<f64> {
        -&self.gy / self.gz
    }
}

/// Evaluation oracle for a generating function.
///
/// Only `dim`, `name` and `value` are required; the remaining hooks let a
/// generator supply closed forms, which are used in preference to the
/// numerical fallbacks.
pub trait Generator: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn name(&self) -> String;

    fn value(&self, x: &[f64], y: &[f64], z: f64) -> f64;

    /// Analytic second-order jet.
    fn jet(&self, _x: &[f64], _y: &[f64], _z: f64) -> Option<Jet2> {
        None
    }

    /// Closed-form dual `g*(x, y, u)`.
    fn g_star(&self, _x: &[f64], _y: &[f64], _u: f64) -> Option<f64> {
        None
    }

    /// Closed-form `(Y, Z)`.
    fn solve_yz(&self, _x: &[f64], _u: f64, _p: &[f64]) -> Option<(Vec<f64>, f64)> {
        None
    }

    /// Starting point for Newton on the defining equations.
    fn initial_yz(&self, _x: &[f64], _u: f64, _p: &[f64]) -> Option<(Vec<f64>, f64)> {
        None
    }

    /// The admissible interval `I_{x,y}` of the last argument.
    fn z_interval(&self, _x: &[f64], _y: &[f64]) -> Interval {
        Interval::unbounded()
    }

    /// When `g*(x, y, u) = a·y + b + c(y)` with `c` shared by all `(x, u)`,
    /// returns `(a, b)`. Cells of dual functions are then polyhedral.
    fn dual_affine(&self, _x: &[f64], _u: f64) -> Option<(Vec<f64>, f64)> {
        None
    }
}

/// Jet `(x, u, p)`: a point, a height and a covector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JetPoint {
    pub x: Vec<f64>,
    pub u: f64,
    pub p: Vec<f64>,
}

/// `E`, `A = g_xx(x, Y, Z)` and `det E` at a jet.
#[derive(Debug, Clone)]
pub struct StructureMatrices {
    pub y: Vec<f64>,
    pub z: f64,
    pub e: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub det_e: f64,
}

impl StructureMatrices {
    /// Right-hand side `B = det E · ψ`.
    pub fn b(&self, psi: f64) -> f64 {
        self.det_e * psi
    }
}

/// A generator with its domains and numerical settings.
#[derive(Clone)]
pub struct GeneratorSpec {
    pub generator: Arc<dyn Generator>,
    /// `U`, where x lives.
    pub domain_x: BoxDomain,
    /// `V`, where y lives.
    pub domain_y: BoxDomain,
    /// `J`, the admissible heights.
    pub heights: Interval,
    pub h_fd: f64,
    pub tol_newton: f64,
    pub max_iter: usize,
    pub claims_a3w: bool,
    pub claims_a4w: bool,
}

impl fmt::Debug for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratorSpec")
            .field("generator", &self.generator.name())
            .field("domain_x", &self.domain_x)
            .field("domain_y", &self.domain_y)
            .field("heights", &self.heights)
            .finish()
    }
}

/// Residuals of the dual derivative identities at one triple.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IdentityReport {
    pub round_trip: f64,
    pub wrt_y: f64,
    pub wrt_x: f64,
    pub wrt_u: f64,
}

impl IdentityReport {
    pub fn max(&self) -> f64 {
        self.round_trip.max(self.wrt_y).max(self.wrt_x).max(self.wrt_u)
    }
}

/// A sampled admissible triple with its height.
#[derive(Debug, Clone)]
pub struct Triple {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: f64,
    pub u: f64,
}

impl GeneratorSpec {
    /// Wrap a generator on the unit boxes with `J = [-10, 10]`.
    pub fn new(generator: Arc<dyn Generator>) -> Self {
        let n = generator.dim();
        GeneratorSpec {
            generator,
            domain_x: BoxDomain::cube(n, 0.0, 1.0),
            domain_y: BoxDomain::cube(n, 0.0, 1.0),
            heights: Interval::new(-10.0, 10.0),
            h_fd: H_FD,
            tol_newton: TOL_NEWTON,
            max_iter: MAX_NEWTON_ITER,
            claims_a3w: false,
            claims_a4w: false,
        }
    }

    pub fn classical(n: usize) -> Self {
        let mut s = Self::new(Arc::new(Classical::new(n)));
        s.claims_a3w = true;
        s.claims_a4w = true;
        s
    }

    pub fn quadratic_cost(n: usize) -> Self {
        let mut s = Self::new(Arc::new(QuadraticCost::new(n)));
        s.claims_a3w = true;
        s.claims_a4w = true;
        s
    }

    /// `g = x·y − z + z·a (x·y)`.
    pub fn perturbed_scalar(n: usize, a: f64) -> Self {
        Self::new(Arc::new(Perturbed::scalar(n, a)))
    }

    /// `g = x·y − z + z·xᵀ M y`.
    pub fn perturbed(m: DMatrix<f64>) -> Self {
        Self::new(Arc::new(Perturbed::new(m)))
    }

    pub fn with_domains(mut self, domain_x: BoxDomain, domain_y: BoxDomain) -> Self {
        self.domain_x = domain_x;
        self.domain_y = domain_y;
        self
    }

    pub fn with_heights(mut self, heights: Interval) -> Self {
        self.heights = heights;
        self
    }

    pub fn dim(&self) -> usize {
        self.generator.dim()
    }

    pub fn name(&self) -> String {
        self.generator.name()
    }

    pub fn value(&self, x: &[f64], y: &[f64], z: f64) -> f64 {
        self.generator.value(x, y, z)
    }

    /// Second-order jet: analytic when provided, otherwise central differences.
    pub fn jet(&self, x: &[f64], y: &[f64], z: f64) -> Jet2 {
        self.generator.jet(x, y, z).unwrap_or_else(|| fd_jet(&*self.generator, x, y, z, self.h_fd))
    }

    /// Central-difference jet with an explicit step, ignoring closed forms.
    pub fn fd_jet(&self, x: &[f64], y: &[f64], z: f64, h: f64) -> Jet2 {
        fd_jet(&*self.generator, x, y, z, h)
    }

    /// `g_z` alone; cheaper than a full jet for black-box generators.
    pub fn g_z(&self, x: &[f64], y: &[f64], z: f64) -> f64 {
        match self.generator.jet(x, y, z) {
            Some(j) => j.gz,
            None => {
                let h = self.h_fd * (1.0 + z.abs());
                (self.value(x, y, z + h) - self.value(x, y, z - h)) / (2.0 * h)
            }
        }
    }

    pub fn g_x(&self, x: &[f64], y: &[f64], z: f64) -> Vec<f64> {
        self.jet(x, y, z).gx.as_slice().to_vec()
    }

    /// `I_{x,y}`.
    pub fn z_interval(&self, x: &[f64], y: &[f64]) -> Interval {
        self.generator.z_interval(x, y)
    }

    /// Dual generating function: the unique `z` with `g(x, y, z) = u`.
    pub fn g_star(&self, x: &[f64], y: &[f64], u: f64) -> Result<f64> {
        if let Some(z) = self.generator.g_star(x, y, u) {
            if z.is_finite() {
                return Ok(z);
            }
            return Err(Error::OutOfRange { u });
        }
        self.g_star_numeric(x, y, u)
    }

    /// Monotone root find for `g*`, ignoring any closed form.
    pub fn g_star_numeric(&self, x: &[f64], y: &[f64], u: f64) -> Result<f64> {
        let range = self.z_interval(x, y);
        let phi = |z: f64| self.value(x, y, z) - u;
        let mut z0 = if range.is_bounded() {
            0.5 * (range.lo + range.hi)
        } else if range.lo.is_finite() {
            range.lo + 1.0
        } else if range.hi.is_finite() {
            range.hi - 1.0
        } else {
            0.0
        };
        // g is decreasing in z: φ(lo) > 0 > φ(hi)
        let f0 = phi(z0);
        if f0 == 0.0 {
            return Ok(z0);
        }
        let dir = if f0 > 0.0 { 1.0 } else { -1.0 };
        let mut step = 1.0;
        let mut z1 = z0;
        let mut found = false;
        for _ in 0..200 {
            let mut cand = z0 + dir * step;
            if dir > 0.0 && cand > range.hi {
                cand = range.hi;
            }
            if dir < 0.0 && cand < range.lo {
                cand = range.lo;
            }
            let fc = phi(cand);
            if !fc.is_finite() {
                return Err(Error::OutOfRange { u });
            }
            if (fc > 0.0) != (f0 > 0.0) || fc == 0.0 {
                z1 = cand;
                found = true;
                break;
            }
            if cand == range.hi || cand == range.lo {
                break;
            }
            z0 = cand;
            step *= 2.0;
        }
        if !found {
            return Err(Error::OutOfRange { u });
        }
        let (mut lo, mut hi) = if dir > 0.0 { (z0, z1) } else { (z1, z0) };
        // safeguarded Newton inside [lo, hi] with φ(lo) ≥ 0 ≥ φ(hi)
        let mut z = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = phi(z);
            if f == 0.0 {
                return Ok(z);
            }
            if f > 0.0 {
                lo = z;
            } else {
                hi = z;
            }
            let gz = self.g_z(x, y, z);
            let mut next = z - f / gz;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (hi - lo) <= 4.0 * f64::EPSILON * (1.0 + z.abs()) || (next - z).abs() <= f64::EPSILON * (1.0 + z.abs()) {
                return Ok(next);
            }
            z = next;
        }
        Ok(z)
    }

    /// Solve `g(x, y, z) = u`, `g_x(x, y, z) = p` and require `y ∈ V̄`, `z ∈ Ī_{x,y}`.
    pub fn solve_yz(&self, jet: &JetPoint) -> Result<(Vec<f64>, f64)> {
        let (y, z) = self.solve_yz_free(&jet.x, jet.u, &jet.p)?;
        if !self.domain_y.contains_with_slack(&y, 1e-9) {
            return Err(Error::OutsideDomain(format!("Y = {y:?} not in V")));
        }
        if !self.z_interval(&jet.x, &y).contains(z) {
            return Err(Error::OutsideDomain(format!("Z = {z} not in I_(x,y)")));
        }
        Ok((y, z))
    }

    /// Defining equations without the domain check (used inside stencils).
    pub fn solve_yz_free(&self, x: &[f64], u: f64, p: &[f64]) -> Result<(Vec<f64>, f64)> {
        if let Some(sol) = self.generator.solve_yz(x, u, p) {
            return Ok(sol);
        }
        let n = self.dim();
        let (mut y, mut z) = match self.generator.initial_yz(x, u, p) {
            Some(s) => s,
            None => {
                let yc = self.domain_y.center();
                let zc = self.g_star(x, &yc, u).unwrap_or(0.0);
                (yc, zc)
            }
        };
        let residual = |y: &[f64], z: f64| -> (DVector<f64>, Jet2) {
            let j = self.jet(x, y, z);
            let mut f = DVector::zeros(n + 1);
            f[0] = j.g - u;
            for i in 0..n {
                f[i + 1] = j.gx[i] - p[i];
            }
            (f, j)
        };
        let (mut f, mut j) = residual(&y, z);
        let mut fnorm = f.amax();
        let mut iterations = 0;
        while iterations < self.max_iter {
            if fnorm <= self.tol_newton * 1e-3 {
                break;
            }
            iterations += 1;
            let mut jac = DMatrix::zeros(n + 1, n + 1);
            for k in 0..n {
                jac[(0, k)] = j.gy[k];
            }
            jac[(0, n)] = j.gz;
            for i in 0..n {
                for k in 0..n {
                    jac[(i + 1, k)] = j.gxy[(i, k)];
                }
                jac[(i + 1, n)] = j.gxz[i];
            }
            let step = match jac.lu().solve(&(-&f)) {
                Some(s) if s.iter().all(|v| v.is_finite()) => s,
                _ => return Err(Error::SingularJacobian),
            };
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let yt: Vec<f64> = (0..n).map(|k| y[k] + alpha * step[k]).collect();
                let zt = z + alpha * step[n];
                let (ft, jt) = residual(&yt, zt);
                let tn = ft.amax();
                if tn.is_finite() && tn < fnorm {
                    y = yt;
                    z = zt;
                    f = ft;
                    j = jt;
                    fnorm = tn;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if fnorm <= self.tol_newton {
            Ok((y, z))
        } else {
            Err(Error::NoConvergence { iterations, residual: fnorm })
        }
    }

    /// `E`, `A` and `det E` at a jet.
    pub fn structure_matrices(&self, jet: &JetPoint) -> Result<StructureMatrices> {
        let (y, z) = self.solve_yz_free(&jet.x, jet.u, &jet.p)?;
        self.structure_at(&jet.x, y, z)
    }

    /// Structure matrices at a known `(x, y, z)`.
    pub fn structure_at(&self, x: &[f64], y: Vec<f64>, z: f64) -> Result<StructureMatrices> {
        let j = self.jet(x, &y, z);
        let e = j.e_matrix();
        let det_e = e.determinant();
        if !(det_e.abs() >= EPS_E) {
            return Err(Error::SingularE { det: det_e });
        }
        Ok(StructureMatrices { y, z, e, a: j.gxx, det_e })
    }

    /// `A(x, u, p) = g_xx(x, Y, Z)`.
    pub fn a_matrix(&self, x: &[f64], u: f64, p: &[f64]) -> Result<DMatrix<f64>> {
        let (y, z) = self.solve_yz_free(x, u, p)?;
        Ok(self.jet(x, &y, z).gxx)
    }

    /// `E(x, y, z)`.
    pub fn e_matrix(&self, x: &[f64], y: &[f64], z: f64) -> DMatrix<f64> {
        self.jet(x, y, z).e_matrix()
    }

    /// `g*_y(x, y, u) = −g_y / g_z` at `z = g*(x, y, u)`.
    pub fn g_star_y(&self, x: &[f64], y: &[f64], u: f64) -> Result<Vec<f64>> {
        let z = self.g_star(x, y, u)?;
        Ok(self.jet(x, y, z).dual_gradient_y().as_slice().to_vec())
    }

    /// Compare finite differences of `g*` with `−g_y/g_z`, `−g_x/g_z` and `1/g_z`.
    pub fn dual_derivative_identities(&self, x: &[f64], y: &[f64], u: f64) -> Result<IdentityReport> {
        let n = self.dim();
        let z = self.g_star(x, y, u)?;
        let j = self.jet(x, y, z);
        let h = self.h_fd;
        let round_trip = (self.value(x, y, z) - u).abs();
        let mut wrt_y: f64 = 0.0;
        let mut wrt_x: f64 = 0.0;
        for k in 0..n {
            let mut yp = y.to_vec();
            let mut ym = y.to_vec();
            yp[k] += h;
            ym[k] -= h;
            let d = (self.g_star(x, &yp, u)? - self.g_star(x, &ym, u)?) / (2.0 * h);
            wrt_y = wrt_y.max((d + j.gy[k] / j.gz).abs());
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += h;
            xm[k] -= h;
            let d = (self.g_star(&xp, y, u)? - self.g_star(&xm, y, u)?) / (2.0 * h);
            wrt_x = wrt_x.max((d + j.gx[k] / j.gz).abs());
        }
        let d = (self.g_star(x, y, u + h)? - self.g_star(x, y, u - h)?) / (2.0 * h);
        let wrt_u = (d - 1.0 / j.gz).abs();
        Ok(IdentityReport { round_trip, wrt_y, wrt_x, wrt_u })
    }

    /// Uniform `x ∈ U`, `y ∈ V`, `u ∈ J`, then `z = g*(x, y, u)`.
    pub fn sample_triple<R: Rng>(&self, rng: &mut R) -> Result<Triple> {
        for _ in 0..100 {
            let x = sample_box(&self.domain_x, rng);
            let y = sample_box(&self.domain_y, rng);
            let u = if self.heights.is_bounded() {
                rng.gen_range(self.heights.lo..=self.heights.hi)
            } else {
                rng.gen_range(-1.0..=1.0)
            };
            if let Ok(z) = self.g_star(&x, &y, u) {
                if self.z_interval(&x, &y).contains(z) {
                    return Ok(Triple { x, y, z, u });
                }
            }
        }
        Err(Error::EmptyDomain)
    }

    /// A sampled admissible jet `(x, u, p)` with `p = g_x(x, y, z)`.
    pub fn sample_jet<R: Rng>(&self, rng: &mut R) -> Result<JetPoint> {
        let t = self.sample_triple(rng)?;
        let p = self.g_x(&t.x, &t.y, t.z);
        Ok(JetPoint { x: t.x, u: t.u, p })
    }
}

/// Uniform sample from a box.
pub fn sample_box<R: Rng>(domain: &BoxDomain, rng: &mut R) -> Vec<f64> {
    domain
        .lo
        .iter()
        .zip(&domain.hi)
        .map(|(a, b)| if a < b { rng.gen_range(*a..*b) } else { *a })
        .collect()
}

/// Central-difference jet of a black-box generator.
pub fn fd_jet(gen: &dyn Generator, x: &[f64], y: &[f64], z: f64, h: f64) -> Jet2 {
    let n = gen.dim();
    let m = 2 * n + 1;
    let mut w: Vec<f64> = x.iter().chain(y.iter()).copied().collect();
    w.push(z);
    let eval = |w: &[f64]| gen.value(&w[..n], &w[n..2 * n], w[2 * n]);
    let f0 = eval(&w);
    let mut grad = vec![0.0; m];
    let mut hess = vec![vec![0.0; m]; m];
    let mut fp = vec![0.0; m];
    let mut fm = vec![0.0; m];
    for a in 0..m {
        let orig = w[a];
        w[a] = orig + h;
        fp[a] = eval(&w);
        w[a] = orig - h;
        fm[a] = eval(&w);
        w[a] = orig;
        grad[a] = (fp[a] - fm[a]) / (2.0 * h);
        hess[a][a] = (fp[a] - 2.0 * f0 + fm[a]) / (h * h);
    }
    for a in 0..m {
        for b in (a + 1)..m {
            let (oa, ob) = (w[a], w[b]);
            let corner = |sa: f64, sb: f64, w: &mut Vec<f64>| {
                w[a] = oa + sa * h;
                w[b] = ob + sb * h;
                let v = eval(w);
                w[a] = oa;
                w[b] = ob;
                v
            };
            let v = (corner(1.0, 1.0, &mut w) - corner(1.0, -1.0, &mut w) - corner(-1.0, 1.0, &mut w)
                + corner(-1.0, -1.0, &mut w))
                / (4.0 * h * h);
            hess[a][b] = v;
            hess[b][a] = v;
        }
    }
    let zi = 2 * n;
    Jet2 {
        g: f0,
        gx: DVector::from_fn(n, |i, _| grad[i]),
        gy: DVector::from_fn(n, |i, _| grad[n + i]),
        gz: grad[zi],
        gxx: DMatrix::from_fn(n, n, |i, j| hess[i][j]),
        gxy: DMatrix::from_fn(n, n, |i, j| hess[i][n + j]),
        gxz: DVector::from_fn(n, |i, _| hess[i][zi]),
        gyy: DMatrix::from_fn(n, n, |i, j| hess[n + i][n + j]),
        gyz: DVector::from_fn(n, |i, _| hess[n + i][zi]),
        gzz: hess[zi][zi],
    }
}

//! Sampled checks of the structure conditions and the small-ball maximum principle.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::domain;
use crate::error::{Error, Result};
use crate::generator::{sample_box, GeneratorSpec, JetPoint};
use crate::geom::{self, BoxDomain};
use crate::tolerances::{A5_HEADROOM, EPS_E, H_FD_HIGH};

/// Where the worst value of a check was found.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Location {
    pub x: Vec<f64>,
    pub u: f64,
    pub p: Vec<f64>,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub condition: String,
    pub samples: usize,
    pub worst_value: f64,
    pub worst: Location,
    pub tolerance: f64,
    pub passed: bool,
    pub seed: u64,
    pub note: Option<String>,
}

/// `D_{p_k p_l} M(p)` by central differences with one Richardson step.
fn second_derivatives<F>(f: &F, p: &[f64], h: f64) -> Result<Vec<Vec<DMatrix<f64>>>>
where
    F: Fn(&[f64]) -> Result<DMatrix<f64>>,
{
    let n = p.len();
    let at = |shifts: &[(usize, f64)]| {
        let mut q = p.to_vec();
        for &(k, s) in shifts {
            q[k] += s;
        }
        f(&q)
    };
    let centre = f(p)?;
    let estimate = |h: f64| -> Result<Vec<Vec<DMatrix<f64>>>> {
        let mut t = vec![vec![DMatrix::zeros(0, 0); n]; n];
        for k in 0..n {
            let d = (at(&[(k, h)])? - &centre * 2.0 + at(&[(k, -h)])?) / (h * h);
            t[k][k] = d;
            for l in k + 1..n {
                let d = (at(&[(k, h), (l, h)])? - at(&[(k, h), (l, -h)])? - at(&[(k, -h), (l, h)])? + at(&[(k, -h), (l, -h)])?)
                    / (4.0 * h * h);
                t[k][l] = d.clone();
                t[l][k] = d;
            }
        }
        Ok(t)
    };
    let coarse = estimate(h)?;
    let fine = estimate(0.5 * h)?;
    Ok(fine
        .into_iter()
        .zip(coarse)
        .map(|(rf, rc)| rf.into_iter().zip(rc).map(|(a, b)| (a * 4.0 - b) / 3.0).collect())
        .collect())
}

fn contract(t: &[Vec<DMatrix<f64>>], xi: &[f64], eta: &[f64]) -> f64 {
    let n = xi.len();
    let mut s = 0.0;
    for k in 0..n {
        for l in 0..n {
            let m = &t[k][l];
            let mut q = 0.0;
            for i in 0..n {
                for j in 0..n {
                    q += m[(i, j)] * xi[i] * xi[j];
                }
            }
            s += q * eta[k] * eta[l];
        }
    }
    s
}

fn tensor_scale(t: &[Vec<DMatrix<f64>>]) -> f64 {
    t.iter().flatten().map(|m| m.amax()).fold(0.0, f64::max)
}

fn unit_vector<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = geom::norm(&v);
        if r > 1e-3 && r <= 1.0 {
            return geom::scale(&v, 1.0 / r);
        }
    }
}

/// `ξ` uniform on the sphere and `η` uniform in the unit sphere of `ξ^⊥`.
fn orthogonal_pair<R: Rng>(n: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let xi = unit_vector(n, rng);
    loop {
        let v = unit_vector(n, rng);
        let w = geom::sub(&v, &geom::scale(&xi, geom::dot(&v, &xi)));
        let r = geom::norm(&w);
        if r > 1e-3 {
            return (xi, geom::scale(&w, 1.0 / r));
        }
    }
}

const PAIRS_PER_JET: usize = 8;
const A3W_TOL: f64 = 1e-6;

struct TensorSample {
    loc: Location,
    tensor: Vec<Vec<DMatrix<f64>>>,
    pairs: Vec<(Vec<f64>, Vec<f64>)>,
}

fn jets(spec: &GeneratorSpec, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<(JetPoint, Vec<(Vec<f64>, Vec<f64>)>, Vec<(Vec<f64>, Vec<f64>)>)>> {
    let n = spec.dim();
    (0..count)
        .map(|_| {
            let jet = spec.sample_jet(rng)?;
            // no nonzero orthogonal pairs exist when n = 1
            let orth = if n > 1 { (0..PAIRS_PER_JET).map(|_| orthogonal_pair(n, rng)).collect() } else { Vec::new() };
            let free = (0..PAIRS_PER_JET).map(|_| (unit_vector(n, rng), unit_vector(n, rng))).collect();
            Ok((jet, orth, free))
        })
        .collect()
}

fn a_tensor_samples(spec: &GeneratorSpec, samples: usize, seed: u64, orthogonal: bool) -> Result<Vec<TensorSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = jets(spec, samples, &mut rng)?;
    draws
        .into_par_iter()
        .map(|(jet, orth, free)| {
            let f = |p: &[f64]| spec.a_matrix(&jet.x, jet.u, p);
            let tensor = second_derivatives(&f, &jet.p, H_FD_HIGH)?;
            let loc = Location { x: jet.x.clone(), u: jet.u, p: jet.p.clone(), ..Default::default() };
            Ok(TensorSample { loc, tensor, pairs: if orthogonal { orth } else { free } })
        })
        .collect()
}

/// `A*(y, z, q) = g*_yy(X, y, U)` with `X` solving `−g_y/g_z(X, y, z) = q`.
pub fn a_star_matrix(spec: &GeneratorSpec, y: &[f64], z: f64, q: &[f64], x_guess: &[f64]) -> Result<DMatrix<f64>> {
    let n = spec.dim();
    let target = DVector::from_column_slice(q);
    let mut x = x_guess.to_vec();
    let mut ok = false;
    for _ in 0..spec.max_iter {
        let j = spec.jet(&x, y, z);
        let f = j.dual_gradient_y() - &target;
        if f.amax() <= spec.tol_newton * 1e-3 {
            ok = true;
            break;
        }
        // D_x(−g_y/g_z) = −Eᵀ/g_z
        let jac = -j.e_matrix().transpose() / j.gz;
        let step = jac.clone().lu().solve(&(-&f)).ok_or(Error::SingularE { det: jac.determinant() })?;
        x.iter_mut().zip(step.iter()).for_each(|(a, s)| *a += s);
        ok = f.amax() <= spec.tol_newton;
    }
    if !ok {
        let j = spec.jet(&x, y, z);
        let r = (j.dual_gradient_y() - &target).amax();
        if r > spec.tol_newton {
            return Err(Error::NoConvergence { iterations: spec.max_iter, residual: r });
        }
    }
    let j = spec.jet(&x, y, z);
    let gz = j.gz;
    let mut a = DMatrix::zeros(n, n);
    for k in 0..n {
        // D_z Q_k
        let dzq = -j.gyz[k] / gz + j.gy[k] * j.gzz / (gz * gz);
        for l in 0..n {
            let dyq = -j.gyy[(k, l)] / gz + j.gy[k] * j.gyz[l] / (gz * gz);
            a[(k, l)] = dyq + q[l] * dzq;
        }
    }
    Ok(a)
}

fn a_star_samples(spec: &GeneratorSpec, samples: usize, seed: u64) -> Result<Vec<TensorSample>> {
    let n = spec.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(samples);
    for _ in 0..samples {
        let t = spec.sample_triple(&mut rng)?;
        let pairs: Vec<_> = (0..PAIRS_PER_JET).map(|_| orthogonal_pair(n, &mut rng)).collect();
        draws.push((t, pairs));
    }
    draws
        .into_par_iter()
        .map(|(t, pairs)| {
            let q = spec.jet(&t.x, &t.y, t.z).dual_gradient_y().as_slice().to_vec();
            let f = |qq: &[f64]| a_star_matrix(spec, &t.y, t.z, qq, &t.x);
            let tensor = second_derivatives(&f, &q, H_FD_HIGH)?;
            let loc = Location { x: t.y.clone(), u: t.z, p: q, ..Default::default() };
            Ok(TensorSample { loc, tensor, pairs })
        })
        .collect()
}

fn worst_form(name: &str, data: Vec<TensorSample>, seed: u64, note: Option<String>) -> ConditionReport {
    let mut worst = f64::INFINITY;
    let mut loc = Location::default();
    let mut scale: f64 = 0.0;
    let mut count = 0;
    for s in data {
        scale = scale.max(tensor_scale(&s.tensor));
        for (xi, eta) in &s.pairs {
            count += 1;
            let v = contract(&s.tensor, xi, eta);
            if v < worst {
                worst = v;
                loc = Location { xi: xi.clone(), eta: eta.clone(), ..s.loc.clone() };
            }
        }
    }
    if count == 0 {
        worst = 0.0;
    }
    let tolerance = A3W_TOL * scale.max(1.0);
    ConditionReport { condition: name.into(), samples: count, worst_value: worst, worst: loc, tolerance, passed: worst >= -tolerance, seed, note }
}

fn one_dim_note(spec: &GeneratorSpec) -> Option<String> {
    (spec.dim() == 1).then(|| "no nonzero orthogonal pairs in one dimension; the condition is vacuous".to_string())
}

/// Minimum of `D_{p_k p_l} A_ij ξ_i ξ_j η_k η_l` over sampled jets and `ξ ⊥ η`.
pub fn check_a3w(spec: &GeneratorSpec, samples: usize, seed: u64) -> Result<ConditionReport> {
    if spec.dim() == 1 {
        return Ok(worst_form("A3w", Vec::new(), seed, one_dim_note(spec)));
    }
    Ok(worst_form("A3w", a_tensor_samples(spec, samples, seed, true)?, seed, None))
}

/// Same form for the dual matrix `A*`.
pub fn check_a3w_star(spec: &GeneratorSpec, samples: usize, seed: u64) -> Result<ConditionReport> {
    if spec.dim() == 1 {
        return Ok(worst_form("A3w*", Vec::new(), seed, one_dim_note(spec)));
    }
    Ok(worst_form("A3w*", a_star_samples(spec, samples, seed)?, seed, None))
}

#[derive(Debug, Clone, Serialize)]
pub struct RelaxedReport {
    pub samples: usize,
    pub skipped: usize,
    /// Smallest `C` with `form ≥ −C |ξ||η| |ξ·η|` on the samples.
    pub constant: f64,
}

/// Empirical constant of the relaxed inequality over unit pairs with
/// `|ξ·η| ≥ 0.05`.
pub fn check_a3w_relaxed(spec: &GeneratorSpec, samples: usize, seed: u64) -> Result<RelaxedReport> {
    let data = a_tensor_samples(spec, samples, seed, false)?;
    let (mut count, mut skipped) = (0, 0);
    let mut c: f64 = 0.0;
    for s in &data {
        for (xi, eta) in &s.pairs {
            let d = geom::dot(xi, eta).abs();
            if d < 0.05 {
                skipped += 1;
                continue;
            }
            count += 1;
            c = c.max(-contract(&s.tensor, xi, eta) / d);
        }
    }
    Ok(RelaxedReport { samples: count, skipped, constant: c })
}

/// Minimum eigenvalue of the symmetrised `D_u A` over sampled jets.
pub fn check_a4w(spec: &GeneratorSpec, samples: usize, seed: u64) -> Result<ConditionReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<JetPoint> = (0..samples).map(|_| spec.sample_jet(&mut rng)).collect::<Result<_>>()?;
    let h = spec.h_fd;
    let vals: Vec<(f64, Vec<f64>, JetPoint)> = draws
        .into_par_iter()
        .map(|jet| {
            let up = spec.a_matrix(&jet.x, jet.u + h, &jet.p)?;
            let dn = spec.a_matrix(&jet.x, jet.u - h, &jet.p)?;
            let d = (up - dn) / (2.0 * h);
            let sym = (&d + d.transpose()) * 0.5;
            let eig = SymmetricEigen::new(sym);
            let k = eig.eigenvalues.imin();
            Ok((eig.eigenvalues[k], eig.eigenvectors.column(k).iter().copied().collect(), jet))
        })
        .collect::<Result<_>>()?;
    let mut worst = f64::INFINITY;
    let mut loc = Location::default();
    for (v, xi, jet) in vals {
        if v < worst {
            worst = v;
            loc = Location { x: jet.x, u: jet.u, p: jet.p, xi, eta: Vec::new() };
        }
    }
    let tolerance = 1e-6;
    Ok(ConditionReport { condition: "A4w".into(), samples, worst_value: worst, worst: loc, tolerance, passed: worst >= -tolerance, seed, note: None })
}

/// Smallest `|det E|` over sampled triples; a local surrogate for A1*'s
/// global injectivity, which sampling cannot decide.
pub fn check_a2(spec: &GeneratorSpec, samples: usize, seed: u64) -> Result<ConditionReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    let mut loc = Location::default();
    for _ in 0..samples {
        let t = spec.sample_triple(&mut rng)?;
        let d = spec.e_matrix(&t.x, &t.y, t.z).determinant().abs();
        if d < worst {
            worst = d;
            loc = Location { x: t.x, u: t.u, p: t.y, ..Default::default() };
        }
    }
    Ok(ConditionReport {
        condition: "A2".into(),
        samples,
        worst_value: worst,
        worst: loc,
        tolerance: EPS_E,
        passed: worst > EPS_E,
        seed,
        note: Some("Jacobian-rank surrogate; global injectivity is not checked".into()),
    })
}

/// Every height in `J` must be attained: `g*(x, y, u)` has to exist on box
/// corners and samples of `U × V × J`. The worst value is the failed fraction.
pub fn check_a0(spec: &GeneratorSpec, samples: usize, seed: u64) -> Result<ConditionReport> {
    let j = spec.heights;
    let (ulo, uhi) = if j.is_bounded() { (j.lo, j.hi) } else { (-1.0, 1.0) };
    let mut pts = Vec::new();
    for x in spec.domain_x.corners() {
        for y in spec.domain_y.corners() {
            for u in [ulo, 0.5 * (ulo + uhi), uhi] {
                pts.push((x.clone(), y.clone(), u));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let x = sample_box(&spec.domain_x, &mut rng);
        let y = sample_box(&spec.domain_y, &mut rng);
        pts.push((x, y, rng.gen_range(ulo..=uhi)));
    }
    let total = pts.len();
    let mut failed = 0;
    let mut loc = Location::default();
    for (x, y, u) in pts {
        if spec.g_star(&x, &y, u).is_err() {
            if failed == 0 {
                loc = Location { x, u, p: y, ..Default::default() };
            }
            failed += 1;
        }
    }
    let note = if j.is_bounded() { "location holds the first unattained (x, u, y) in x, u, p" } else { "J is unbounded; heights probed on [-1, 1]" };
    Ok(ConditionReport {
        condition: "A0".into(),
        samples: total,
        worst_value: failed as f64 / total as f64,
        worst: loc,
        tolerance: 0.0,
        passed: failed == 0,
        seed,
        note: Some(note.into()),
    })
}

/// `K_0 = 1.1 · max(|g_x|, |g*_y|)` over samples of `U × Ω* × J` and box corners.
pub fn a5_constant(spec: &GeneratorSpec, target_domain: &BoxDomain, samples: usize, seed: u64) -> Result<f64> {
    if target_domain.volume() <= 0.0 || spec.domain_x.volume() <= 0.0 {
        return Err(Error::EmptyDomain);
    }
    let j = spec.heights;
    let (ulo, uhi) = if j.is_bounded() { (j.lo, j.hi) } else { (-1.0, 1.0) };
    let mut pts = Vec::new();
    for x in spec.domain_x.corners() {
        for y in target_domain.corners() {
            for u in [ulo, 0.5 * (ulo + uhi), uhi] {
                pts.push((x.clone(), y.clone(), u));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let x = sample_box(&spec.domain_x, &mut rng);
        let y = sample_box(target_domain, &mut rng);
        pts.push((x, y, rng.gen_range(ulo..=uhi)));
    }
    let mut k: f64 = 0.0;
    for (x, y, u) in pts {
        let Ok(z) = spec.g_star(&x, &y, u) else { continue };
        let jet = spec.jet(&x, &y, z);
        k = k.max(jet.gx.norm()).max(jet.dual_gradient_y().norm());
    }
    if k == 0.0 {
        return Err(Error::EmptyDomain);
    }
    Ok(A5_HEADROOM * k)
}

/// Loeper's inequality on random `(x, y-segment)` pairs; each pair is
/// scanned at `thetas` interior values of θ.
pub fn check_loeper(spec: &GeneratorSpec, samples: usize, thetas: usize, seed: u64) -> Result<ConditionReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(samples);
    for _ in 0..samples {
        let t = spec.sample_triple(&mut rng)?;
        let y1 = sample_box(&spec.domain_y, &mut rng);
        let x = sample_box(&spec.domain_x, &mut rng);
        draws.push((t, y1, x));
    }
    let th: Vec<f64> = (1..=thetas).map(|k| k as f64 / (thetas + 1) as f64).collect();
    let results: Vec<(f64, Location)> = draws
        .into_par_iter()
        .map(|(t, y1, x)| {
            let r = domain::loeper_check(spec, &t.x, t.u, &t.y, &y1, &[x.clone()], &th)?;
            let loc = Location { x, u: t.u, p: t.y, xi: y1, eta: vec![r.worst_theta] };
            Ok((r.max_violation, loc))
        })
        .collect::<Result<_>>()?;
    let mut worst = f64::NEG_INFINITY;
    let mut loc = Location::default();
    for (v, l) in results {
        if v > worst {
            worst = v;
            loc = l;
        }
    }
    Ok(ConditionReport {
        condition: "Loeper".into(),
        samples,
        worst_value: worst,
        worst: loc,
        tolerance: 1e-6,
        passed: worst <= 1e-6,
        seed,
        note: Some("worst value is the largest violation; p holds y0, xi holds y1, eta holds θ".into()),
    })
}

/// Bounds on the coefficients of `a^{ij} D_ij u + b^i D_i u + c u ≥ 0` on `B_r`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BallCoefficients {
    /// `inf trace(a)`.
    pub trace_a: f64,
    /// `sup |b|`.
    pub b_sup: f64,
    /// `sup c⁺`.
    pub c_plus: f64,
}

impl BallCoefficients {
    /// `min{ trace(a) / (2|b|), sqrt(trace(a) / (2c⁺)) }`.
    pub fn radius_bound(&self) -> f64 {
        let first = if self.b_sup > 0.0 { self.trace_a / (2.0 * self.b_sup) } else { f64::INFINITY };
        let second = if self.c_plus > 0.0 { (self.trace_a / (2.0 * self.c_plus)).sqrt() } else { f64::INFINITY };
        first.min(second)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MaxPrincipleReport {
    pub radius: f64,
    pub radius_bound: f64,
    pub max_value: f64,
    pub passed: bool,
}

/// For a subsolution vanishing on `∂B_r`, check `u ≤ tol` at the samples
/// once the radius condition holds.
pub fn small_ball_max_principle(coeff: &BallCoefficients, radius: f64, u_samples: &[f64], tol: f64) -> Result<MaxPrincipleReport> {
    let bound = coeff.radius_bound();
    if radius > bound {
        return Err(Error::RadiusTooLarge { radius, bound });
    }
    let max_value = u_samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(MaxPrincipleReport { radius, radius_bound: bound, max_value, passed: max_value <= tol })
}

/// Smallest `a u'' + b u' + c u` over the interior nodes of a uniform grid
/// on `[−r, r]`; nonnegative for a discrete subsolution.
pub fn subsolution_defect_1d(a: f64, b: f64, c: f64, radius: f64, values: &[f64]) -> f64 {
    let m = values.len();
    if m < 3 {
        return 0.0;
    }
    let h = 2.0 * radius / (m - 1) as f64;
    (1..m - 1)
        .map(|k| {
            let d2 = (values[k + 1] - 2.0 * values[k] + values[k - 1]) / (h * h);
            let d1 = (values[k + 1] - values[k - 1]) / (2.0 * h);
            a * d2 + b * d1 + c * values[k]
        })
        .fold(f64::INFINITY, f64::min)
}

/// All condition reports for a generator.
pub fn check_all(spec: &GeneratorSpec, target_domain: &BoxDomain, samples: usize, seed: u64) -> Result<Vec<ConditionReport>> {
    let k0 = a5_constant(spec, target_domain, samples, seed)?;
    let a5 = ConditionReport {
        condition: "A5".into(),
        samples,
        worst_value: k0,
        worst: Location::default(),
        tolerance: 0.0,
        passed: k0.is_finite(),
        seed,
        note: Some("worst value is the constant K0 with 10% headroom".into()),
    };
    Ok(vec![
        check_a0(spec, samples, seed)?,
        check_a2(spec, samples, seed)?,
        check_a3w(spec, samples, seed)?,
        check_a3w_star(spec, samples, seed)?,
        check_a4w(spec, samples, seed)?,
        a5,
        check_loeper(spec, samples, 7, seed)?,
    ])
}

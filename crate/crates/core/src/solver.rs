//! Semi-discrete second boundary value problem with a pinned value.
//!
//! Dual heights `u_i` of the pieces `g*(x_i, ·, u_i)` start high enough that
//! only the pin piece is active, then are lowered one at a time until each
//! cell carries its mass. Lowering never overshoots (`μ_i ≤ f_i`), so the pin
//! cell keeps at least `f_0` and the heights decrease monotonically.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gconvex::{self, GAffine, PiecewiseGConvex};
use crate::generator::GeneratorSpec;
use crate::geom::{self, BoxDomain};
use crate::measure::{self, TargetDensity};
use crate::tolerances::{MAX_OUTER, TIE_TOL, TOL_MASS};

#[derive(Debug, Clone)]
pub struct SemiDiscreteProblem {
    pub spec: GeneratorSpec,
    /// `x_0, …, x_N`; `x_0` carries the pin.
    pub points: Vec<Vec<f64>>,
    pub masses: Vec<f64>,
    pub target: TargetDensity,
    pub pin_height: f64,
    pub tol_mass: f64,
    pub max_outer: usize,
    /// Relative gap above the pin piece at initialisation.
    pub start_offset: f64,
}

impl SemiDiscreteProblem {
    pub fn new(spec: GeneratorSpec, points: Vec<Vec<f64>>, masses: Vec<f64>, target: TargetDensity, pin_height: f64) -> Result<Self> {
        let p = SemiDiscreteProblem {
            spec,
            points,
            masses,
            target,
            pin_height,
            tol_mass: TOL_MASS,
            max_outer: MAX_OUTER,
            start_offset: 1e-3,
        };
        p.validate()?;
        Ok(p)
    }

    /// Rescale the source masses so that they balance the target.
    pub fn normalized(mut self) -> Result<Self> {
        let s: f64 = self.masses.iter().sum();
        let k = self.target.total() / s;
        self.masses.iter_mut().for_each(|m| *m *= k);
        self.validate()?;
        Ok(self)
    }

    pub fn with_tolerance(mut self, tol_mass: f64, max_outer: usize) -> Self {
        self.tol_mass = tol_mass;
        self.max_outer = max_outer;
        self
    }

    pub fn with_start_offset(mut self, offset: f64) -> Self {
        self.start_offset = offset;
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn source_total(&self) -> f64 {
        self.masses.iter().sum()
    }

    fn validate(&self) -> Result<()> {
        let n = self.spec.dim();
        if self.points.is_empty() || self.points.len() != self.masses.len() {
            return Err(Error::InvalidInput("need one mass per source point and at least the pin".into()));
        }
        if self.points.iter().any(|x| x.len() != n) || self.target.dim() != n {
            return Err(Error::InvalidInput(format!("points and target must live in dimension {n}")));
        }
        if !(self.masses[0] > 0.0) || self.masses.iter().any(|m| !(*m >= 0.0)) {
            return Err(Error::InvalidInput("masses must be non-negative with f_0 > 0".into()));
        }
        for a in 0..self.points.len() {
            for b in a + 1..self.points.len() {
                if geom::sup_dist(&self.points[a], &self.points[b]) == 0.0 {
                    return Err(Error::InvalidInput(format!("source points {a} and {b} coincide")));
                }
            }
        }
        let (s, t) = (self.source_total(), self.target.total());
        if (s - t).abs() > self.tol_mass * t {
            return Err(Error::MassImbalance { source_total: s, target_total: t });
        }
        Ok(())
    }

    /// Dual function with heights `u`.
    pub fn dual(&self, heights: &[f64]) -> Result<PiecewiseGConvex> {
        let pieces = self.points.iter().zip(heights).map(|(x, u)| GAffine::new(x.clone(), *u)).collect();
        Ok(PiecewiseGConvex::dual(pieces)?.with_domain(self.target.domain.clone()))
    }

    pub fn masses_at(&self, heights: &[f64]) -> Result<Vec<f64>> {
        measure::cell_masses(&self.spec, &self.dual(heights)?, &self.target)
    }

    fn mass_of(&self, heights: &[f64], i: usize) -> Result<f64> {
        measure::cell_mass(&self.spec, &self.dual(heights)?, &self.target, i)
    }

    /// `max_i |μ_i − f_i| / Σ f`.
    pub fn residual(&self, masses: &[f64]) -> f64 {
        let s = self.source_total();
        masses.iter().zip(&self.masses).map(|(m, f)| (m - f).abs()).fold(0.0, f64::max) / s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveState {
    pub heights: Vec<f64>,
    pub masses: Vec<f64>,
    pub residual: f64,
    pub sweeps: usize,
    pub residual_history: Vec<f64>,
    /// `H = Σ_{i≥1} u_i` after each sweep.
    pub h_history: Vec<f64>,
    #[serde(skip)]
    steps: Vec<f64>,
}

impl SolveState {
    pub fn h(&self) -> f64 {
        self.heights.iter().skip(1).sum()
    }
}

/// Check `u_0 ∈ J` and `u_0 + K_0 diam(Ω) ∈ J`.
pub fn check_pin(problem: &SemiDiscreteProblem) -> Result<()> {
    let spec = &problem.spec;
    let k0 = crate::verify::a5_constant(spec, &problem.target.domain, 2000, crate::tolerances::DEFAULT_SEED)?;
    let u0 = problem.pin_height;
    let reach = u0 + k0 * spec.domain_x.diameter();
    let j = spec.heights;
    if !j.contains(u0) || !j.contains(reach) {
        return Err(Error::PinOutOfRange { u0, reach, lo: j.lo, hi: j.hi });
    }
    Ok(())
}

/// Heights with every non-pin piece strictly below the pin piece.
pub fn init_state(problem: &SemiDiscreteProblem) -> Result<SolveState> {
    check_pin(problem)?;
    let spec = &problem.spec;
    let x0 = &problem.points[0];
    let u0 = problem.pin_height;
    let per_axis = if spec.dim() == 1 { 513 } else { 65 };
    let ys = problem.target.domain.lattice(per_axis);
    let pin_vals: Vec<f64> = ys.iter().map(|y| spec.g_star(x0, y, u0)).collect::<Result<_>>()?;
    let mut heights = vec![u0];
    let mut tops = Vec::new();
    for x in &problem.points[1..] {
        let mut top = f64::NEG_INFINITY;
        for (y, w) in ys.iter().zip(&pin_vals) {
            top = top.max(spec.value(x, y, *w));
        }
        tops.push(top);
    }
    let spread = tops.iter().map(|t| (t - u0).abs()).fold(1.0 + u0.abs(), f64::max);
    let delta = problem.start_offset * spread;
    heights.extend(tops.iter().map(|t| t + delta));
    let masses = problem.masses_at(&heights)?;
    let residual = problem.residual(&masses);
    let n = heights.len();
    Ok(SolveState {
        h_history: vec![heights.iter().skip(1).sum()],
        residual_history: vec![residual],
        heights,
        masses,
        residual,
        sweeps: 0,
        steps: vec![delta.max(1e-6); n],
    })
}

/// Largest admissible decrease of `u_i`: returns the new height with
/// `f_i − window ≤ μ_i ≤ f_i`.
fn lower_one(problem: &SemiDiscreteProblem, heights: &mut [f64], i: usize, step: &mut f64, window: f64) -> Result<bool> {
    let f = problem.masses[i];
    let mut h = heights.to_vec();
    let start = heights[i];
    let mass = |h: &mut Vec<f64>, u: f64| -> Result<f64> {
        h[i] = u;
        problem.mass_of(h, i)
    };
    // (u, μ) with μ ≤ f
    let mut upper = (start, mass(&mut h, start)?);
    if upper.1 >= f - window {
        return Ok(false);
    }
    let mut delta = *step;
    let mut lower = None;
    for _ in 0..200 {
        let u = upper.0 - delta;
        let m = mass(&mut h, u)?;
        if m > f {
            lower = Some((u, m));
            break;
        }
        upper = (u, m);
        if m >= f - window {
            heights[i] = u;
            *step = delta;
            return Ok(true);
        }
        delta *= 2.0;
    }
    let mut lower = lower.ok_or(Error::Stalled { sweep: 0, residual: (f - upper.1) / problem.source_total() })?;
    // Illinois regula falsi on μ(u) − f, keeping the upper end admissible.
    let mut side = 0i8;
    for _ in 0..200 {
        let (ua, ma) = lower;
        let (ub, mb) = upper;
        let (fa, fb) = (ma - f, mb - f);
        let mut u = if side == -1 {
            ub - fb * (ub - ua) / (fb - 0.5 * fa)
        } else if side == 1 {
            ub - 0.5 * fb * (ub - ua) / (0.5 * fb - fa)
        } else {
            ub - fb * (ub - ua) / (fb - fa)
        };
        if !(u > ua && u < ub) {
            u = 0.5 * (ua + ub);
        }
        if u <= ua || u >= ub {
            break;
        }
        let m = mass(&mut h, u)?;
        if m > f {
            lower = (u, m);
            side = if side == 1 { 2 } else { 1 };
        } else {
            upper = (u, m);
            side = if side == -1 { -2 } else { -1 };
            if m >= f - window {
                break;
            }
        }
        if side.abs() == 2 {
            side = 0;
        }
    }
    *step = (start - upper.0).max(1e-12);
    let moved = upper.0 < start;
    heights[i] = upper.0;
    Ok(moved)
}

/// One sweep over the cells with a deficit, largest first.
pub fn descend(problem: &SemiDiscreteProblem, state: &mut SolveState) -> Result<()> {
    let n = problem.len();
    let total = problem.source_total();
    let tol_abs = problem.tol_mass * total;
    let window = 0.25 * tol_abs / (n.max(2) - 1) as f64;
    let mut order: Vec<usize> = (1..n).filter(|&i| problem.masses[i] - state.masses[i] > window).collect();
    order.sort_by(|&a, &b| {
        let ea = state.masses[a] == 0.0;
        let eb = state.masses[b] == 0.0;
        eb.cmp(&ea).then_with(|| {
            let da = problem.masses[a] - state.masses[a];
            let db = problem.masses[b] - state.masses[b];
            db.partial_cmp(&da).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
        })
    });
    let mut moved = false;
    for i in order {
        let mut step = state.steps[i];
        let r = lower_one(problem, &mut state.heights, i, &mut step, window);
        match r {
            Ok(m) => moved |= m,
            Err(Error::Stalled { residual, .. }) => return Err(Error::Stalled { sweep: state.sweeps, residual }),
            Err(e) => return Err(e),
        }
        state.steps[i] = step;
    }
    state.sweeps += 1;
    state.masses = problem.masses_at(&state.heights)?;
    state.residual = problem.residual(&state.masses);
    state.residual_history.push(state.residual);
    state.h_history.push(state.h());
    if state.masses[0] <= 0.0 {
        return Err(Error::PinLost);
    }
    if !moved && state.residual > problem.tol_mass {
        return Err(Error::Stalled { sweep: state.sweeps, residual: state.residual });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterExceeded,
    Stalled,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub sweeps: usize,
    pub residual: f64,
    pub heights: Vec<f64>,
    pub masses: Vec<f64>,
    pub targets: Vec<f64>,
    pub residual_history: Vec<f64>,
    pub h_history: Vec<f64>,
    /// `|u(x_0) − u_0|` of the primal solution.
    pub pin_error: f64,
    /// `|μ_0 − (Σf − Σ_{i≥1} μ_i)|`.
    pub bookkeeping_error: f64,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub dual: PiecewiseGConvex,
    pub primal: PiecewiseGConvex,
    pub report: SolveReport,
}

impl SolveOutcome {
    pub fn converged(&self) -> bool {
        self.report.status == SolveStatus::Converged
    }

    pub fn into_result(self) -> Result<SolveOutcome> {
        match self.report.status {
            SolveStatus::Converged => Ok(self),
            SolveStatus::MaxIterExceeded => Err(Error::MaxIterExceeded { sweep: self.report.sweeps, residual: self.report.residual }),
            SolveStatus::Stalled => Err(Error::Stalled { sweep: self.report.sweeps, residual: self.report.residual }),
        }
    }
}

/// Lattice density of the primal g-transform.
fn transform_per_axis(n: usize) -> usize {
    if n == 1 {
        257
    } else {
        33
    }
}

/// Run sweeps until the residual drops below `tol_mass` or `max_outer` is hit.
/// Non-convergence is reported in the outcome, not as an error.
pub fn solve(problem: &SemiDiscreteProblem) -> Result<SolveOutcome> {
    let mut state = init_state(problem)?;
    let mut status = SolveStatus::Converged;
    while state.residual > problem.tol_mass {
        if state.sweeps >= problem.max_outer {
            status = SolveStatus::MaxIterExceeded;
            break;
        }
        match descend(problem, &mut state) {
            Ok(()) => {}
            Err(Error::Stalled { .. }) => {
                status = SolveStatus::Stalled;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let dual = problem.dual(&state.heights)?;
    let spec = &problem.spec;
    let primal = gconvex::g_transform(spec, &dual, &problem.target.domain, transform_per_axis(spec.dim()))?
        .with_domain(spec.domain_x.clone());
    let pin_error = (primal.value(spec, &problem.points[0])? - problem.pin_height).abs();
    let rest: f64 = state.masses.iter().skip(1).sum();
    let bookkeeping_error = (state.masses[0] - (problem.target.total() - rest)).abs();
    let report = SolveReport {
        status,
        sweeps: state.sweeps,
        residual: state.residual,
        heights: state.heights.clone(),
        masses: state.masses.clone(),
        targets: problem.masses.clone(),
        residual_history: state.residual_history,
        h_history: state.h_history,
        pin_error,
        bookkeeping_error,
    };
    Ok(SolveOutcome { dual, primal, report })
}

/// Source density on `Ω = spec.domain_x`, partitioned into `level^n` boxes.
#[derive(Debug, Clone)]
pub struct LevelSolution {
    pub level: usize,
    pub points: Vec<Vec<f64>>,
    pub outcome: SolveOutcome,
    /// `u` on the evaluation grid.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RefinementReport {
    pub levels: Vec<usize>,
    pub residuals: Vec<f64>,
    /// `‖u_{k+1} − u_k‖∞` on the evaluation grid.
    pub sup_differences: Vec<f64>,
}

/// Solve at each partition level; the box holding `x0` is represented by `x0`.
pub fn refine_and_solve(
    spec: &GeneratorSpec,
    source: &TargetDensity,
    target: &TargetDensity,
    pin: (&[f64], f64),
    levels: &[usize],
    eval_grid: &[Vec<f64>],
    tol_mass: f64,
) -> Result<(Vec<LevelSolution>, RefinementReport)> {
    let (x0, u0) = pin;
    let dom = &source.domain;
    let n = dom.dim();
    let mut sols = Vec::new();
    for &level in levels {
        let mut boxes = Vec::new();
        let centers = dom.midpoint_grid(level);
        let widths: Vec<f64> = (0..n).map(|k| (dom.hi[k] - dom.lo[k]) / level as f64).collect();
        for c in &centers {
            let lo: Vec<f64> = (0..n).map(|k| c[k] - 0.5 * widths[k]).collect();
            let hi: Vec<f64> = (0..n).map(|k| c[k] + 0.5 * widths[k]).collect();
            boxes.push(BoxDomain::new(lo, hi)?);
        }
        let pin_box = boxes
            .iter()
            .position(|b| b.contains(x0))
            .ok_or_else(|| Error::OutsideDomain("pin point is outside the source domain".into()))?;
        let mut points = vec![x0.to_vec()];
        let mut masses = vec![TargetDensity::new(boxes[pin_box].clone(), source.density.clone(), source.quadrature)?.total()];
        for (k, b) in boxes.iter().enumerate() {
            if k == pin_box {
                continue;
            }
            points.push(centers[k].clone());
            masses.push(TargetDensity::new(b.clone(), source.density.clone(), source.quadrature)?.total());
        }
        let problem = SemiDiscreteProblem::new(spec.clone(), points.clone(), masses, target.clone(), u0)?.with_tolerance(tol_mass, MAX_OUTER);
        let outcome = solve(&problem)?.into_result()?;
        let values = eval_grid.iter().map(|x| outcome.primal.value(spec, x)).collect::<Result<_>>()?;
        sols.push(LevelSolution { level, points, outcome, values });
    }
    let sup_differences = sols
        .windows(2)
        .map(|w| w[0].values.iter().zip(&w[1].values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .collect();
    let report = RefinementReport {
        levels: levels.to_vec(),
        residuals: sols.iter().map(|s| s.outcome.report.residual).collect(),
        sup_differences,
    };
    Ok((sols, report))
}

#[derive(Debug, Clone, Serialize)]
pub struct McCannReport {
    pub nodes: usize,
    /// Nodes of `Ω' = {u1 > u2}`.
    pub omega_prime: usize,
    /// Nodes of `Ξ = Yu2⁻¹(Yu1(Ω'))`.
    pub xi: usize,
    /// Nodes of `Ξ` where `u1 < u2` beyond the tie band.
    pub violations: usize,
    pub sup_difference: f64,
    pub flagged: bool,
}

/// Aleksandrov–McCann inclusion on a grid for primal functions whose pieces
/// share their `y`'s (same order). `tie` sets the band treated as equality;
/// `flag_tol` is the sup-difference above which the pair is flagged.
pub fn aleksandrov_mccann_check(
    spec: &GeneratorSpec,
    u1: &PiecewiseGConvex,
    u2: &PiecewiseGConvex,
    grid: &[Vec<f64>],
    tie: f64,
    flag_tol: f64,
) -> Result<McCannReport> {
    if u1.len() != u2.len() || u1.pieces.iter().zip(&u2.pieces).any(|(a, b)| a.y != b.y) {
        return Err(Error::InvalidInput("functions must share their piece y's".into()));
    }
    let e1: Vec<_> = grid.iter().map(|x| u1.eval(spec, x)).collect::<Result<_>>()?;
    let e2: Vec<_> = grid.iter().map(|x| u2.eval(spec, x)).collect::<Result<_>>()?;
    let mut image = vec![false; u1.len()];
    let mut omega_prime = 0;
    let mut sup: f64 = 0.0;
    for (a, b) in e1.iter().zip(&e2) {
        sup = sup.max((a.value - b.value).abs());
        if a.value - b.value > tie {
            omega_prime += 1;
            for &k in &a.active {
                image[k] = true;
            }
        }
    }
    let mut xi = 0;
    let mut violations = 0;
    for (a, b) in e1.iter().zip(&e2) {
        if b.active.iter().any(|&k| image[k]) {
            xi += 1;
            if a.value - b.value <= -2.0 * tie {
                violations += 1;
            }
        }
    }
    Ok(McCannReport { nodes: grid.len(), omega_prime, xi, violations, sup_difference: sup, flagged: violations > 0 || sup > flag_tol })
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    /// Both premises hold: `u ≤ v` on the boundary and `μ_u ≥ μ_v` on every
    /// box, strictly on boxes carrying mass.
    pub applicable: bool,
    pub boundary_ok: bool,
    pub measure_ok: bool,
    /// Interior nodes with `u > v + tol`.
    pub violations: usize,
    pub max_excess: f64,
}

/// Comparison principle on a `per_axis` lattice of `domain` with `boxes^n`
/// measure boxes.
pub fn comparison_check(
    spec: &GeneratorSpec,
    u: &PiecewiseGConvex,
    v: &PiecewiseGConvex,
    target: &TargetDensity,
    domain: &BoxDomain,
    per_axis: usize,
    boxes: usize,
    tol: f64,
) -> Result<ComparisonReport> {
    let boundary = domain.boundary_lattice(per_axis);
    let mut boundary_ok = true;
    for x in &boundary {
        if u.value(spec, x)? > v.value(spec, x)? + tol {
            boundary_ok = false;
        }
    }
    let au = measure::ma_measure_atoms(spec, u, target, domain, per_axis)?;
    let av = measure::ma_measure_atoms(spec, v, target, domain, per_axis)?;
    let n = domain.dim();
    let widths: Vec<f64> = (0..n).map(|k| (domain.hi[k] - domain.lo[k]) / boxes as f64).collect();
    let mut measure_ok = true;
    for c in domain.midpoint_grid(boxes) {
        // half-open boxes so atoms on shared faces count once
        let inside = |x: &[f64]| {
            (0..n).all(|k| {
                let lo = c[k] - 0.5 * widths[k];
                let hi = c[k] + 0.5 * widths[k];
                x[k] >= lo && (x[k] < hi || (hi >= domain.hi[k] && x[k] <= hi))
            })
        };
        let mu: f64 = au.iter().filter(|a| inside(&a.x)).map(|a| a.mass).sum();
        let mv: f64 = av.iter().filter(|a| inside(&a.x)).map(|a| a.mass).sum();
        let strict = mu > mv + TIE_TOL * mv.abs().max(1e-300);
        if mu < mv || (mu.max(mv) > 0.0 && !strict) {
            measure_ok = false;
        }
    }
    let mut violations = 0;
    let mut max_excess: f64 = 0.0;
    for x in domain.lattice(per_axis) {
        let excess = u.value(spec, &x)? - v.value(spec, &x)?;
        max_excess = max_excess.max(excess);
        if excess > tol {
            violations += 1;
        }
    }
    Ok(ComparisonReport { applicable: boundary_ok && measure_ok, boundary_ok, measure_ok, violations, max_excess })
}

/// Primal functions of two dual solutions on a shared y-lattice, ready for
/// [`aleksandrov_mccann_check`].
pub fn shared_primals(spec: &GeneratorSpec, v1: &PiecewiseGConvex, v2: &PiecewiseGConvex, ys: &[Vec<f64>]) -> Result<(PiecewiseGConvex, PiecewiseGConvex)> {
    Ok((gconvex::g_transform_at(spec, v1, ys)?, gconvex::g_transform_at(spec, v2, ys)?))
}

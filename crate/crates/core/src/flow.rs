//! Semi-discrete height flow `du_i/dt = log(μ_i / f_i)` by explicit Euler.
//!
//! Every height moves, the pin included. With `Σ μ_i = Σ f_i` Jensen's
//! inequality gives `Σ f_i du_i/dt ≤ 0`, so some height never rises above
//! its initial value.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::solver::SemiDiscreteProblem;
use crate::tolerances::FLOW_MASS_FLOOR;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    /// Halve `dt` while the residual grows by more than 10%.
    Adaptive,
    Fixed,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowState {
    pub heights: Vec<f64>,
    pub initial: Vec<f64>,
    pub masses: Vec<f64>,
    pub t: f64,
    pub dt: f64,
    pub residual: f64,
    pub residual_history: Vec<f64>,
}

fn floor(problem: &SemiDiscreteProblem) -> f64 {
    FLOW_MASS_FLOOR * problem.source_total()
}

/// `log(max(μ_i, floor) / f_i)`; cells with `f_i = 0` do not move.
pub fn velocities(problem: &SemiDiscreteProblem, masses: &[f64]) -> Vec<f64> {
    let fl = floor(problem);
    masses
        .iter()
        .zip(&problem.masses)
        .map(|(m, f)| if *f > 0.0 { (m.max(fl) / f).ln() } else { 0.0 })
        .collect()
}

/// `max_i |log(μ_i / f_i)|`.
pub fn log_residual(problem: &SemiDiscreteProblem, masses: &[f64]) -> f64 {
    velocities(problem, masses).iter().map(|v| v.abs()).fold(0.0, f64::max)
}

impl FlowState {
    /// Start at `heights`; `dt = None` picks `0.1 / max|log(μ_i/f_i)|`.
    pub fn new(problem: &SemiDiscreteProblem, heights: Vec<f64>, dt: Option<f64>) -> Result<Self> {
        if heights.len() != problem.len() {
            return Err(Error::InvalidInput("one height per source point".into()));
        }
        let masses = problem.masses_at(&heights)?;
        let residual = log_residual(problem, &masses);
        let dt = dt.unwrap_or(if residual > 0.0 { 0.1 / residual } else { 0.1 });
        Ok(FlowState { initial: heights.clone(), heights, masses, t: 0.0, dt, residual, residual_history: vec![residual] })
    }
}

/// One explicit Euler step.
pub fn flow_step(problem: &SemiDiscreteProblem, state: &mut FlowState, mode: StepMode) -> Result<()> {
    let vel = velocities(problem, &state.masses);
    let mut dt = state.dt;
    let min_dt = state.dt * 1e-12;
    loop {
        let cand: Vec<f64> = state.heights.iter().zip(&vel).map(|(u, v)| u + dt * v).collect();
        let masses = problem.masses_at(&cand)?;
        let r = log_residual(problem, &masses);
        let accept = mode == StepMode::Fixed || state.residual == 0.0 || r <= 1.1 * state.residual;
        if accept || dt * 0.5 < min_dt {
            if !accept {
                let fl = floor(problem);
                if let Some(cell) = masses.iter().zip(&problem.masses).position(|(m, f)| *f > 0.0 && *m <= fl) {
                    return Err(Error::EmptyCellAtFloor { cell });
                }
            }
            state.heights = cand;
            state.masses = masses;
            state.residual = r;
            state.t += dt;
            state.dt = dt;
            state.residual_history.push(r);
            return Ok(());
        }
        dt *= 0.5;
    }
}

/// Extremes of `u(t) − u(0)` over the snapshots.
#[derive(Debug, Clone, Serialize)]
pub struct IntersectionReport {
    pub snapshots: usize,
    /// Largest `min_i (u_i(t) − u_i(0))`; the property needs it `≤ tol`.
    pub worst_min: f64,
    /// Smallest `max_i (u_i(t) − u_i(0))`; the property needs it `≥ −tol`.
    pub worst_max: f64,
    /// Largest `Σ f_i (u_i(t) − u_i(0))`, nonpositive by Jensen.
    pub worst_weighted_sum: f64,
    pub tolerance: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub heights: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub intersection: IntersectionReport,
}

/// Integrate to `horizon`, recording every step.
pub fn run_flow(
    problem: &SemiDiscreteProblem,
    init: Vec<f64>,
    horizon: f64,
    dt: Option<f64>,
    mode: StepMode,
    tol_int: f64,
) -> Result<Trajectory> {
    let mut state = FlowState::new(problem, init, dt)?;
    let mut times = vec![0.0];
    let mut heights = vec![state.heights.clone()];
    let mut residuals = vec![state.residual];
    while state.t < horizon * (1.0 - 1e-12) {
        state.dt = state.dt.min(horizon - state.t);
        flow_step(problem, &mut state, mode)?;
        times.push(state.t);
        heights.push(state.heights.clone());
        residuals.push(state.residual);
    }
    let mut worst_min = f64::NEG_INFINITY;
    let mut worst_max = f64::INFINITY;
    let mut worst_sum = f64::NEG_INFINITY;
    for h in &heights {
        let d: Vec<f64> = h.iter().zip(&state.initial).map(|(a, b)| a - b).collect();
        worst_min = worst_min.max(d.iter().copied().fold(f64::INFINITY, f64::min));
        worst_max = worst_max.min(d.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        worst_sum = worst_sum.max(d.iter().zip(&problem.masses).map(|(a, f)| a * f).sum());
    }
    let intersection = IntersectionReport {
        snapshots: heights.len(),
        worst_min,
        worst_max,
        worst_weighted_sum: worst_sum,
        tolerance: tol_int,
        holds: worst_min <= tol_int && worst_max >= -tol_int,
    };
    Ok(Trajectory { times, heights, residuals, intersection })
}

/// Run until `max|log(μ_i/f_i)| ≤ tol` or `max_steps`.
pub fn flow_to_rest(problem: &SemiDiscreteProblem, init: Vec<f64>, tol: f64, max_steps: usize) -> Result<FlowState> {
    let mut state = FlowState::new(problem, init, None)?;
    let mut steps = 0;
    while state.residual > tol {
        if steps >= max_steps {
            return Err(Error::MaxIterExceeded { sweep: steps, residual: state.residual });
        }
        let before = state.residual;
        flow_step(problem, &mut state, StepMode::Adaptive)?;
        // a step that barely helps is oscillating about the rest point;
        // otherwise let dt recover after transient halvings
        state.dt = if state.residual > 0.9 * before { 0.5 * state.dt } else { (state.dt * 1.5).min(0.5) };
        steps += 1;
    }
    Ok(state)
}

/// Fixed-step Euler heights at `horizon`.
fn euler_to(problem: &SemiDiscreteProblem, init: &[f64], horizon: f64, steps: usize) -> Result<Vec<f64>> {
    let mut state = FlowState::new(problem, init.to_vec(), Some(horizon / steps as f64))?;
    for _ in 0..steps {
        flow_step(problem, &mut state, StepMode::Fixed)?;
    }
    Ok(state.heights)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyReport {
    pub dt: f64,
    pub error_dt: f64,
    pub error_half: f64,
    /// `error(dt) / error(dt/2)`, near 2 for a first-order scheme.
    pub ratio: f64,
}

/// Errors at `horizon` for steps `dt` and `dt/2` against a Richardson
/// extrapolated fine-step reference.
pub fn consistency_ratio(problem: &SemiDiscreteProblem, init: &[f64], horizon: f64, dt: f64) -> Result<ConsistencyReport> {
    let steps = (horizon / dt).round().max(1.0) as usize;
    let coarse = euler_to(problem, init, horizon, steps)?;
    let half = euler_to(problem, init, horizon, 2 * steps)?;
    let fine = euler_to(problem, init, horizon, 64 * steps)?;
    let finer = euler_to(problem, init, horizon, 128 * steps)?;
    let reference: Vec<f64> = fine.iter().zip(&finer).map(|(a, b)| 2.0 * b - a).collect();
    let err = |h: &[f64]| h.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let (e1, e2) = (err(&coarse), err(&half));
    Ok(ConsistencyReport { dt: horizon / steps as f64, error_dt: e1, error_half: e2, ratio: e1 / e2 })
}

//! One function per subcommand. Each writes its files into `out` and returns
//! the exit status it wants.

use std::path::{Path, PathBuf};

use gje_core::domain::{self, ConeLimits, TransformFrame};
use gje_core::flow::{self, StepMode};
use gje_core::gconvex::{GAffine, Orientation, PiecewiseGConvex};
use gje_core::geom::BoxDomain;
use gje_core::measure;
use gje_core::solver::{self, SemiDiscreteProblem, SolveReport};
use gje_core::verify::{self, ConditionReport, RelaxedReport};
use gje_core::tolerances::FLOW_MASS_FLOOR;
use gje_core::GeneratorSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, FlowInit, ProblemConfig, Source};
use crate::output::{columns, floats, fmt_f64, write_csv, write_json};
use crate::CliError;

pub const HEIGHTS_SCHEMA: &str = "gje-heights/1";

/// Overrides collected from the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub seed: Option<u64>,
    pub strict: bool,
}

pub struct Context {
    pub config: ProblemConfig,
    pub out: PathBuf,
    pub overrides: Overrides,
}

impl Context {
    fn seed(&self) -> u64 {
        self.overrides.seed.unwrap_or(self.config.seed)
    }

    fn tol(&self) -> f64 {
        self.overrides.tol.unwrap_or(self.config.tolerances.mass)
    }

    fn max_iter(&self) -> usize {
        self.overrides.max_iter.unwrap_or(self.config.tolerances.max_iter)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

/// Exit statuses of the contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    NotConverged,
    CheckFailed,
}

/// Solved heights as written by `solve` and read by `diagnose`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeightsFile {
    pub schema: String,
    pub generator: String,
    pub dim: usize,
    pub pin: PinOut,
    pub points: Vec<Vec<f64>>,
    pub masses: Vec<f64>,
    pub heights: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PinOut {
    pub x0: Vec<f64>,
    pub u0: f64,
}

impl HeightsFile {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(ConfigError::Io { path: path.to_path_buf(), source: e }))?;
        let h: HeightsFile = serde_json::from_str(&text).map_err(|e| schema_err(path, e.to_string()))?;
        if h.schema != HEIGHTS_SCHEMA {
            return Err(schema_err(path, format!("expected schema \"{HEIGHTS_SCHEMA}\"")));
        }
        if h.points.len() != h.heights.len() {
            return Err(schema_err(path, "one height per point".into()));
        }
        Ok(h)
    }

    pub fn dual(&self) -> Result<PiecewiseGConvex, CliError> {
        let pieces = self.points.iter().zip(&self.heights).map(|(x, u)| GAffine::new(x.clone(), *u)).collect();
        Ok(PiecewiseGConvex::dual(pieces)?)
    }
}

fn schema_err(path: &Path, message: String) -> CliError {
    CliError::Config(ConfigError::Schema { path: path.display().to_string(), message })
}

/// Points, masses and pin after config checks; the pin point is moved first.
fn build_problem(ctx: &Context) -> Result<(SemiDiscreteProblem, f64), CliError> {
    let cfg = &ctx.config;
    let spec = cfg.spec()?;
    let target = cfg.target()?;
    let Source::Points { mut points, mut masses } = cfg.source()? else {
        return Err(ConfigError::Schema { path: "source".into(), message: "this command needs points + masses".into() }.into());
    };
    if let Some(x0) = &cfg.pin.x0 {
        let k = points
            .iter()
            .position(|p| p == x0)
            .ok_or_else(|| ConfigError::Schema { path: "pin.x0".into(), message: "must be one of the source points".into() })?;
        points.swap(0, k);
        masses.swap(0, k);
    }
    let src: f64 = masses.iter().sum();
    let mut scale = 1.0;
    if cfg.tolerances.auto_normalize {
        scale = target.total() / src;
        masses.iter_mut().for_each(|m| *m *= scale);
    } else if (src - target.total()).abs() > 1e-9 * target.total() {
        return Err(ConfigError::Schema {
            path: "source.masses".into(),
            message: format!("masses sum to {src} but the target carries {}; set tolerances.auto_normalize", target.total()),
        }
        .into());
    }
    let problem = SemiDiscreteProblem::new(spec, points, masses, target, cfg.pin.u0)
        .map_err(|e| ConfigError::Schema { path: "source".into(), message: e.to_string() })?
        .with_tolerance(ctx.tol(), ctx.max_iter())
        .with_start_offset(cfg.tolerances.start_offset);
    Ok((problem, scale))
}

#[derive(Serialize)]
struct CheckOut {
    schema: &'static str,
    generator: String,
    seed: u64,
    passed: bool,
    reports: Vec<ConditionReport>,
    a3w_relaxed: RelaxedReport,
}

pub fn check(ctx: &Context) -> Result<Status, CliError> {
    let cfg = &ctx.config;
    let spec = cfg.spec()?;
    let target = cfg.target.domain.clone();
    let target = BoxDomain::new(target.lo, target.hi)?;
    let seed = ctx.seed();
    let n = cfg.check.samples;
    let k0 = verify::a5_constant(&spec, &target, n, seed)?;
    let mut reports = vec![
        verify::check_a0(&spec, n, seed)?,
        verify::check_a2(&spec, n, seed)?,
        verify::check_a3w(&spec, n, seed)?,
        verify::check_a3w_star(&spec, n, seed)?,
        verify::check_a4w(&spec, n, seed)?,
    ];
    reports.push(ConditionReport {
        condition: "A5".into(),
        samples: n,
        worst_value: k0,
        worst: Default::default(),
        tolerance: 0.0,
        passed: k0.is_finite(),
        seed,
        note: Some("worst value is the constant K0 with 10% headroom".into()),
    });
    reports.push(verify::check_loeper(&spec, cfg.check.loeper_samples, 7, seed)?);
    let relaxed = verify::check_a3w_relaxed(&spec, n, seed)?;
    let passed = reports.iter().all(|r| r.passed);
    for r in &reports {
        println!("{:<8} {:<4} worst {}", r.condition, if r.passed { "pass" } else { "FAIL" }, fmt_f64(r.worst_value));
    }
    let out = CheckOut { schema: "gje-check/1", generator: spec.name(), seed, passed, reports, a3w_relaxed: relaxed };
    write_json(&ctx.path("check.json"), &out)?;
    Ok(if ctx.overrides.strict && !passed { Status::CheckFailed } else { Status::Ok })
}

#[derive(Serialize)]
struct SolveOut<'a> {
    schema: &'static str,
    generator: String,
    seed: u64,
    tol_mass: f64,
    mass_scale: f64,
    conservation_error: f64,
    solve: &'a SolveReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    refinement: Option<solver::RefinementReport>,
}

fn write_cells(path: &Path, spec: &GeneratorSpec, dual: &PiecewiseGConvex, target: &measure::TargetDensity, per_axis: usize) -> Result<measure::CellDecomposition, CliError> {
    let dec = measure::cell_decomposition(spec, dual, target, per_axis)?;
    let n = spec.dim();
    let mut header = columns("y", n);
    header.push("piece".into());
    header.push("weight".into());
    let rows: Vec<Vec<String>> = dec
        .nodes
        .iter()
        .map(|c| {
            let mut r = floats(&c.y);
            r.push(c.piece.to_string());
            r.push(fmt_f64(c.weight));
            r
        })
        .collect();
    write_csv(path, &header, &rows)?;
    Ok(dec)
}

pub fn solve(ctx: &Context) -> Result<Status, CliError> {
    let cfg = &ctx.config;
    let (problem, scale, refinement, outcome) = match cfg.source()? {
        Source::Points { .. } => {
            let (p, s) = build_problem(ctx)?;
            let outcome = solver::solve(&p)?;
            (p, s, None, outcome)
        }
        Source::Density { density, levels } => {
            let spec = cfg.spec()?;
            let target = cfg.target()?;
            let x0 = cfg.pin.x0.clone().ok_or_else(|| ConfigError::Schema { path: "pin.x0".into(), message: "density sources need a pin point".into() })?;
            let grid = density.domain.lattice(if spec.dim() == 1 { 129 } else { 17 });
            let (mut sols, report) = solver::refine_and_solve(&spec, &density, &target, (&x0, cfg.pin.u0), &levels, &grid, ctx.tol())?;
            let last = sols.pop().expect("at least one level");
            let p = SemiDiscreteProblem::new(spec, last.points, last.outcome.report.targets.clone(), target, cfg.pin.u0)?.with_tolerance(ctx.tol(), ctx.max_iter());
            (p, 1.0, Some(report), last.outcome)
        }
    };
    let spec = &problem.spec;
    let dec = write_cells(&ctx.path("cells.csv"), spec, &outcome.dual, &problem.target, cfg.measure.export_per_axis)?;
    let heights = HeightsFile {
        schema: HEIGHTS_SCHEMA.into(),
        generator: spec.name(),
        dim: spec.dim(),
        pin: PinOut { x0: problem.points[0].clone(), u0: problem.pin_height },
        points: problem.points.clone(),
        masses: problem.masses.clone(),
        heights: outcome.report.heights.clone(),
    };
    write_json(&ctx.path("heights.json"), &heights)?;
    let report = SolveOut {
        schema: "gje-report/1",
        generator: spec.name(),
        seed: ctx.seed(),
        tol_mass: problem.tol_mass,
        mass_scale: scale,
        conservation_error: dec.conservation_error(),
        solve: &outcome.report,
        refinement,
    };
    write_json(&ctx.path("report.json"), &report)?;
    println!("{:?} after {} sweeps, residual {}", outcome.report.status, outcome.report.sweeps, fmt_f64(outcome.report.residual));
    Ok(if outcome.converged() { Status::Ok } else { Status::NotConverged })
}

#[derive(Serialize)]
struct MeasureOut {
    schema: &'static str,
    orientation: Orientation,
    target_total: f64,
    mass_sum: f64,
    masses: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    conservation_error: Option<f64>,
    /// Atoms with an active focus outside the closed target; a diagnostic only.
    #[serde(skip_serializing_if = "Option::is_none")]
    atoms_outside_target: Option<usize>,
}

/// `function` is a piecewise function JSON or a heights file.
pub fn measure(ctx: &Context, function: &Path) -> Result<Status, CliError> {
    let cfg = &ctx.config;
    let spec = cfg.spec()?;
    let target = cfg.target()?;
    let text = std::fs::read_to_string(function).map_err(|e| CliError::Config(ConfigError::Io { path: function.to_path_buf(), source: e }))?;
    let f: PiecewiseGConvex = match serde_json::from_str::<PiecewiseGConvex>(&text) {
        Ok(f) => f,
        Err(_) => HeightsFile::read(function)?.dual()?,
    };
    if f.pieces.iter().any(|p| p.y.len() != spec.dim()) {
        return Err(schema_err(function, "piece dimension differs from generator.dim".into()));
    }
    let out = match f.orientation {
        Orientation::Dual => {
            let dec = write_cells(&ctx.path("cells.csv"), &spec, &f, &target, cfg.measure.export_per_axis)?;
            MeasureOut {
                schema: "gje-measure/1",
                orientation: f.orientation,
                target_total: dec.total,
                mass_sum: dec.mass_sum(),
                conservation_error: Some(dec.conservation_error()),
                masses: dec.masses,
                atoms_outside_target: None,
            }
        }
        Orientation::Primal => {
            let domain = f.domain.clone().unwrap_or_else(|| spec.domain_x.clone());
            let atoms = measure::ma_measure_atoms(&spec, &f, &target, &domain, cfg.measure.per_axis)?;
            let mut header = columns("x", spec.dim());
            header.push("mass".into());
            header.push("active".into());
            let rows: Vec<Vec<String>> = atoms
                .iter()
                .map(|a| {
                    let mut r = floats(&a.x);
                    r.push(fmt_f64(a.mass));
                    r.push(a.active.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(";"));
                    r
                })
                .collect();
            write_csv(&ctx.path("atoms.csv"), &header, &rows)?;
            let masses: Vec<f64> = atoms.iter().map(|a| a.mass).collect();
            let outside = atoms
                .iter()
                .filter(|a| a.active.iter().any(|&k| !target.domain.contains_with_slack(&f.pieces[k].y, 1e-12)))
                .count();
            MeasureOut {
                schema: "gje-measure/1",
                orientation: f.orientation,
                target_total: target.total(),
                mass_sum: masses.iter().sum(),
                masses,
                conservation_error: None,
                atoms_outside_target: Some(outside),
            }
        }
    };
    write_json(&ctx.path("measure.json"), &out)?;
    println!("total mass {}", fmt_f64(out.mass_sum));
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct TransformOut {
    schema: &'static str,
    x0: Vec<f64>,
    y0: Vec<f64>,
    u0: f64,
    h: f64,
    expansion: domain::ExpansionReport,
    jacobian_bounds: (f64, f64),
    #[serde(skip_serializing_if = "Option::is_none")]
    cone: Option<domain::ConeReport>,
}

pub fn transform(ctx: &Context, x0: Option<Vec<f64>>, y0: Option<Vec<f64>>) -> Result<Status, CliError> {
    let cfg = &ctx.config;
    let t = &cfg.transform;
    let spec = cfg.spec()?;
    let n = spec.dim();
    let x0 = x0.or_else(|| t.x0.clone()).unwrap_or_else(|| spec.domain_x.center());
    let y0 = y0.or_else(|| t.y0.clone()).unwrap_or_else(|| spec.domain_y.center());
    if x0.len() != n || y0.len() != n {
        return Err(ConfigError::Schema { path: "transform".into(), message: format!("base point needs {n} coordinates") }.into());
    }
    let frame = TransformFrame::new(&spec, &x0, &y0, t.u0, t.h)?;
    let (expansion, samples) = frame.sample_expansion(t.radius, t.samples, ctx.seed())?;
    let bounds = frame.jacobian_bounds(&spec.domain_x, t.samples, ctx.seed());
    let cone = match &t.cone_base {
        Some(b) => {
            let base = BoxDomain::new(b.lo.clone(), b.hi.clone())?;
            Some(domain::g_cone_subgradient(&frame, &base, t.cone_directions, 33, ConeLimits::default())?)
        }
        None => None,
    };
    let mut header = columns("q", n);
    header.extend(columns("p", n));
    header.extend(["z", "g_bar", "remainder", "ratio"].map(String::from));
    let rows: Vec<Vec<String>> = samples
        .iter()
        .map(|s| {
            let mut r = floats(&s.q);
            r.extend(floats(&s.p));
            r.extend(floats(&[s.z, s.g_bar, s.remainder, s.ratio]));
            r
        })
        .collect();
    write_csv(&ctx.path("frame.csv"), &header, &rows)?;
    let out = TransformOut { schema: "gje-transform/1", x0, y0, u0: t.u0, h: t.h, expansion, jacobian_bounds: bounds, cone };
    write_json(&ctx.path("frame.json"), &out)?;
    println!("c_max {}", fmt_f64(out.expansion.c_max));
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct FlowOut {
    schema: &'static str,
    seed: u64,
    steps: usize,
    final_time: f64,
    final_residual: f64,
    initial: Vec<f64>,
    /// Every cell of the initial heights carries mass.
    admissible: bool,
    intersection: flow::IntersectionReport,
}

pub fn flow(ctx: &Context) -> Result<Status, CliError> {
    let cfg = &ctx.config;
    let f = &cfg.flow;
    let (problem, _) = build_problem(ctx)?;
    let init = match f.init {
        FlowInit::Given => {
            let h = f.heights.clone().ok_or_else(|| ConfigError::Schema { path: "flow.heights".into(), message: "init \"given\" needs heights".into() })?;
            if h.len() != problem.len() {
                return Err(ConfigError::Schema { path: "flow.heights".into(), message: "one height per source point".into() }.into());
            }
            h
        }
        FlowInit::Perturbed => {
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed());
            let base = solver::solve(&problem)?.report.heights;
            base.iter().map(|u| u + f.noise * rng.gen_range(-1.0..=1.0)).collect()
        }
    };
    let floor = FLOW_MASS_FLOOR * problem.source_total();
    let admissible = problem.masses_at(&init)?.iter().all(|m| *m > floor);
    let mode = if f.adaptive { StepMode::Adaptive } else { StepMode::Fixed };
    let traj = flow::run_flow(&problem, init.clone(), f.horizon, f.dt, mode, f.tol_intersection)?;
    let mut header = vec!["t".to_string()];
    header.extend(columns("u", problem.len()));
    header.push("residual".into());
    let rows: Vec<Vec<String>> = traj
        .times
        .iter()
        .zip(&traj.heights)
        .zip(&traj.residuals)
        .map(|((t, h), r)| {
            let mut row = vec![fmt_f64(*t)];
            row.extend(floats(h));
            row.push(fmt_f64(*r));
            row
        })
        .collect();
    write_csv(&ctx.path("trajectory.csv"), &header, &rows)?;
    let out = FlowOut {
        schema: "gje-flow/1",
        seed: ctx.seed(),
        steps: traj.times.len() - 1,
        final_time: *traj.times.last().unwrap_or(&0.0),
        final_residual: *traj.residuals.last().unwrap_or(&0.0),
        initial: init,
        admissible,
        intersection: traj.intersection,
    };
    write_json(&ctx.path("flow.json"), &out)?;
    println!("t = {} residual {}", fmt_f64(out.final_time), fmt_f64(out.final_residual));
    Ok(if ctx.overrides.strict && !out.intersection.holds { Status::CheckFailed } else { Status::Ok })
}

#[derive(Serialize)]
struct DiagnoseOut {
    schema: &'static str,
    seed: u64,
    mccann: solver::McCannReport,
    comparison_12: solver::ComparisonReport,
    comparison_21: solver::ComparisonReport,
    loeper: ConditionReport,
    flagged: bool,
}

pub fn diagnose(ctx: &Context, first: &Path, second: &Path) -> Result<Status, CliError> {
    let cfg = &ctx.config;
    let d = &cfg.diagnose;
    let spec = cfg.spec()?;
    let target = cfg.target()?;
    let (h1, h2) = (HeightsFile::read(first)?, HeightsFile::read(second)?);
    if h1.dim != spec.dim() || h2.dim != spec.dim() {
        return Err(schema_err(second, "dimension differs from generator.dim".into()));
    }
    let ys = target.domain.lattice(d.y_per_axis);
    let (u1, u2) = solver::shared_primals(&spec, &h1.dual()?, &h2.dual()?, &ys)?;
    let grid = spec.domain_x.lattice(d.per_axis);
    let mccann = solver::aleksandrov_mccann_check(&spec, &u1, &u2, &grid, d.tie, d.flag_tol)?;
    let per_axis = d.per_axis.min(if spec.dim() == 1 { 257 } else { 33 });
    let c12 = solver::comparison_check(&spec, &u1, &u2, &target, &spec.domain_x, per_axis, d.comparison_boxes, d.flag_tol)?;
    let c21 = solver::comparison_check(&spec, &u2, &u1, &target, &spec.domain_x, per_axis, d.comparison_boxes, d.flag_tol)?;
    let loeper = verify::check_loeper(&spec, d.loeper_samples, 7, ctx.seed())?;
    // per-node membership in Ω' = {u1 > u2} and Ξ = ∂u2⁻¹(∂u1(Ω'))
    let e1: Vec<_> = grid.iter().map(|x| u1.eval(&spec, x)).collect::<Result<_, _>>()?;
    let e2: Vec<_> = grid.iter().map(|x| u2.eval(&spec, x)).collect::<Result<_, _>>()?;
    let mut image = vec![false; u1.len()];
    for (a, b) in e1.iter().zip(&e2) {
        if a.value - b.value > d.tie {
            a.active.iter().for_each(|&k| image[k] = true);
        }
    }
    let mut header = columns("x", spec.dim());
    header.extend(["u1", "u2", "difference", "in_omega_prime", "in_xi", "violation"].map(String::from));
    let mut rows = Vec::with_capacity(grid.len());
    for ((x, a), b) in grid.iter().zip(&e1).zip(&e2) {
        let diff = a.value - b.value;
        let in_xi = b.active.iter().any(|&k| image[k]);
        let mut r = floats(x);
        r.extend(floats(&[a.value, b.value, diff]));
        r.push(u8::from(diff > d.tie).to_string());
        r.push(u8::from(in_xi).to_string());
        r.push(u8::from(in_xi && diff <= -2.0 * d.tie).to_string());
        rows.push(r);
    }
    write_csv(&ctx.path("diagnose.csv"), &header, &rows)?;
    let flagged = mccann.flagged || (c12.applicable && c12.violations > 0) || (c21.applicable && c21.violations > 0) || !loeper.passed;
    let out = DiagnoseOut { schema: "gje-diagnose/1", seed: ctx.seed(), mccann, comparison_12: c12, comparison_21: c21, loeper, flagged };
    write_json(&ctx.path("diagnose.json"), &out)?;
    println!("sup |u1 - u2| {} flagged {}", fmt_f64(out.mccann.sup_difference), flagged);
    Ok(if ctx.overrides.strict && flagged { Status::CheckFailed } else { Status::Ok })
}

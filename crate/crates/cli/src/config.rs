//! Problem configuration, schema `gje-config/1`.
//!
//! Parsing goes through `serde_path_to_error` so a schema failure names the
//! offending field; semantic checks report their own dotted path.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use gje_core::generator::{Expr, ExpressionGenerator};
use gje_core::geom::{BoxDomain, Interval};
use gje_core::measure::{Density, Quadrature, TargetDensity};
use gje_core::tolerances::{DEFAULT_SEED, MAX_OUTER, TOL_MASS};
use gje_core::GeneratorSpec;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub const SCHEMA: &str = "gje-config/1";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
}

fn bad(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Schema { path: path.to_string(), message: message.into() }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub schema: String,
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub source: Option<SourceConfig>,
    pub target: TargetConfig,
    #[serde(default)]
    pub pin: PinConfig,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub check: CheckConfig,
    #[serde(default)]
    pub measure: MeasureConfig,
    #[serde(default)]
    pub transform: TransformConfig,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub diagnose: DiagnoseConfig,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxConfig {
    fn build(&self, path: &str) -> Result<BoxDomain, ConfigError> {
        BoxDomain::new(self.lo.clone(), self.hi.clone()).map_err(|e| bad(path, e.to_string()))
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    /// `classical`, `quadratic_cost`, `perturbed` or `expression`.
    pub name: String,
    pub dim: usize,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Coupling matrix of `perturbed`; `params.a` gives `a·I` instead.
    #[serde(default)]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub expression: Option<String>,
    #[serde(default)]
    pub z_interval: Option<[f64; 2]>,
    #[serde(default)]
    pub domain_x: Option<BoxConfig>,
    #[serde(default)]
    pub domain_y: Option<BoxConfig>,
    #[serde(default)]
    pub heights: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    #[serde(default)]
    pub uniform: Option<f64>,
    /// Expression in `y` (and parameters).
    #[serde(default)]
    pub expression: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    #[serde(default)]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub masses: Option<Vec<f64>>,
    #[serde(default)]
    pub density: Option<DensityConfig>,
    #[serde(default)]
    pub domain: Option<BoxConfig>,
    #[serde(default)]
    pub levels: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub domain: BoxConfig,
    #[serde(default)]
    pub density: Option<DensityConfig>,
    #[serde(default)]
    pub quadrature: Quadrature,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PinConfig {
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub u0: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceConfig {
    pub mass: f64,
    pub max_iter: usize,
    pub auto_normalize: bool,
    pub start_offset: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig { mass: TOL_MASS, max_iter: MAX_OUTER, auto_normalize: false, start_offset: 1e-3 }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    pub samples: usize,
    pub loeper_samples: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig { samples: 1000, loeper_samples: 10_000 }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasureConfig {
    /// Lattice for contact points of primal functions.
    pub per_axis: usize,
    /// Node export resolution for dual decompositions.
    pub export_per_axis: usize,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig { per_axis: 65, export_per_axis: 64 }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransformConfig {
    pub x0: Option<Vec<f64>>,
    pub y0: Option<Vec<f64>>,
    pub u0: f64,
    pub h: f64,
    pub radius: f64,
    pub samples: usize,
    /// Rectangle `D` (in q-coordinates) for the g-cone diagnostic.
    pub cone_base: Option<BoxConfig>,
    pub cone_directions: usize,
}

impl Default for TransformConfig {
    fn default() -> Self {
        TransformConfig { x0: None, y0: None, u0: 0.0, h: 0.1, radius: 0.1, samples: 1000, cone_base: None, cone_directions: 1000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowInit {
    /// Static solution plus seeded uniform noise of amplitude `noise`.
    Perturbed,
    /// `flow.heights` verbatim.
    Given,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub horizon: f64,
    pub dt: Option<f64>,
    pub adaptive: bool,
    pub init: FlowInit,
    pub noise: f64,
    pub heights: Option<Vec<f64>>,
    pub tol_intersection: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig { horizon: 10.0, dt: None, adaptive: true, init: FlowInit::Perturbed, noise: 0.02, heights: None, tol_intersection: 1e-8 }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnoseConfig {
    pub per_axis: usize,
    pub y_per_axis: usize,
    pub tie: f64,
    pub flag_tol: f64,
    pub comparison_boxes: usize,
    pub loeper_samples: usize,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        DiagnoseConfig { per_axis: 65, y_per_axis: 65, tie: 1e-9, flag_tol: 1e-4, comparison_boxes: 4, loeper_samples: 1000 }
    }
}

/// Read and schema-check a config file.
pub fn load(path: &Path) -> Result<ProblemConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<ProblemConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ProblemConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        bad(if path == "." { "$" } else { &path }, e.into_inner().to_string())
    })?;
    if cfg.schema != SCHEMA {
        return Err(bad("schema", format!("expected \"{SCHEMA}\", found \"{}\"", cfg.schema)));
    }
    Ok(cfg)
}

/// Which source representation the config declares.
#[derive(Debug, Clone)]
pub enum Source {
    Points { points: Vec<Vec<f64>>, masses: Vec<f64> },
    Density { density: TargetDensity, levels: Vec<usize> },
}

impl ProblemConfig {
    pub fn dim(&self) -> usize {
        self.generator.dim
    }

    pub fn target(&self) -> Result<TargetDensity, ConfigError> {
        let domain = self.target.domain.build("target.domain")?;
        if domain.dim() != self.dim() {
            return Err(bad("target.domain", "dimension differs from generator.dim"));
        }
        let density = match &self.target.density {
            None => Density::Uniform(1.0),
            Some(d) => density(d, &domain, "target.density")?,
        };
        TargetDensity::new(domain, density, self.target.quadrature).map_err(|e| bad("target", e.to_string()))
    }

    pub fn source(&self) -> Result<Source, ConfigError> {
        let s = self.source.as_ref().ok_or_else(|| bad("source", "missing source block"))?;
        let n = self.dim();
        match (&s.points, &s.masses, &s.density) {
            (Some(points), Some(masses), None) => {
                if points.is_empty() {
                    return Err(bad("source.points", "no points"));
                }
                if let Some(k) = points.iter().position(|p| p.len() != n) {
                    return Err(bad(&format!("source.points[{k}]"), format!("expected {n} coordinates")));
                }
                if masses.len() != points.len() {
                    return Err(bad("source.masses", "one mass per point"));
                }
                if let Some(k) = masses.iter().position(|m| !(*m > 0.0 && m.is_finite())) {
                    return Err(bad(&format!("source.masses[{k}]"), "masses must be positive"));
                }
                Ok(Source::Points { points: points.clone(), masses: masses.clone() })
            }
            (None, None, Some(d)) => {
                let domain = s.domain.as_ref().ok_or_else(|| bad("source.domain", "density sources need a domain"))?.build("source.domain")?;
                if domain.dim() != n {
                    return Err(bad("source.domain", "dimension differs from generator.dim"));
                }
                let levels = s.levels.clone().unwrap_or_else(|| vec![8]);
                if levels.is_empty() || levels.contains(&0) {
                    return Err(bad("source.levels", "levels must be positive"));
                }
                let dens = density(d, &domain, "source.density")?;
                let density = TargetDensity::new(domain, dens, Quadrature::Auto).map_err(|e| bad("source.density", e.to_string()))?;
                Ok(Source::Density { density, levels })
            }
            _ => Err(bad("source", "give either points + masses or density + domain")),
        }
    }

    pub fn spec(&self) -> Result<GeneratorSpec, ConfigError> {
        let g = &self.generator;
        let n = g.dim;
        if n == 0 {
            return Err(bad("generator.dim", "must be positive"));
        }
        let mut spec = match g.name.as_str() {
            "classical" => GeneratorSpec::classical(n),
            "quadratic_cost" => GeneratorSpec::quadratic_cost(n),
            "perturbed" => match (&g.matrix, g.params.get("a")) {
                (Some(rows), None) => {
                    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                        return Err(bad("generator.matrix", format!("expected {n}x{n}")));
                    }
                    GeneratorSpec::perturbed(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
                }
                (None, Some(a)) => GeneratorSpec::perturbed_scalar(n, *a),
                _ => return Err(bad("generator", "perturbed needs exactly one of matrix or params.a")),
            },
            "expression" => {
                let src = g.expression.as_ref().ok_or_else(|| bad("generator.expression", "missing expression"))?;
                let mut gen = ExpressionGenerator::new(n, src, &g.params).map_err(|e| bad("generator.expression", e.to_string()))?;
                if let Some([lo, hi]) = g.z_interval {
                    gen = gen.with_z_interval(Interval::new(lo, hi));
                }
                GeneratorSpec::new(Arc::new(gen))
            }
            other => return Err(bad("generator.name", format!("unknown generator \"{other}\""))),
        };
        let domain_y = match &g.domain_y {
            Some(b) => b.build("generator.domain_y")?,
            None => self.target.domain.build("target.domain")?,
        };
        let domain_x = match &g.domain_x {
            Some(b) => b.build("generator.domain_x")?,
            None => match self.source.as_ref().and_then(|s| s.domain.as_ref()) {
                Some(b) => b.build("source.domain")?,
                None => match self.source.as_ref().and_then(|s| s.points.as_ref()) {
                    Some(p) if !p.is_empty() => BoxDomain::bounding(p).map_err(|e| bad("source.points", e.to_string()))?,
                    _ => BoxDomain::cube(n, 0.0, 1.0),
                },
            },
        };
        if domain_x.dim() != n || domain_y.dim() != n {
            return Err(bad("generator", "domain dimensions differ from generator.dim"));
        }
        spec = spec.with_domains(domain_x, domain_y);
        if let Some([lo, hi]) = g.heights {
            if !(lo < hi) {
                return Err(bad("generator.heights", "need lo < hi"));
            }
            spec = spec.with_heights(Interval::new(lo, hi));
        }
        Ok(spec)
    }
}

fn density(d: &DensityConfig, domain: &BoxDomain, path: &str) -> Result<Density, ConfigError> {
    match (d.uniform, &d.expression) {
        (Some(c), None) => Ok(Density::Uniform(c)),
        (None, Some(src)) => {
            let expr = Expr::parse(src, &d.params).map_err(|e| bad(&format!("{path}.expression"), e.to_string()))?;
            expr.eval_scalar(&[], &domain.center(), 0.0).map_err(|e| bad(&format!("{path}.expression"), e.to_string()))?;
            Ok(Density::Function(Arc::new(move |y: &[f64]| expr.eval_scalar(&[], y, 0.0).unwrap_or(f64::NAN))))
        }
        _ => Err(bad(path, "give exactly one of uniform or expression")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = r#"{"schema":"gje-config/1","generator":{"name":"classical","dim":1},
        "source":{"points":[[0.0],[1.0]],"masses":[0.5,0.5]},"target":{"domain":{"lo":[0],"hi":[1]}}}"#;

    #[test]
    fn minimal_config_builds() {
        let c = parse(MIN).unwrap();
        assert_eq!(c.spec().unwrap().name(), "classical");
        assert!((c.target().unwrap().total() - 1.0).abs() < 1e-12);
        assert!(matches!(c.source().unwrap(), Source::Points { .. }));
    }

    #[test]
    fn missing_name_reports_path() {
        let text = MIN.replace(r#""name":"classical","#, "");
        match parse(&text) {
            Err(ConfigError::Schema { path, message }) => {
                assert_eq!(path, "generator");
                assert!(message.contains("name"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_generator_and_field() {
        let c = parse(&MIN.replace("classical", "nope")).unwrap();
        assert!(matches!(c.spec(), Err(ConfigError::Schema { ref path, .. }) if path == "generator.name"));
        assert!(parse(&MIN.replace(r#""dim":1"#, r#""dim":1,"bogus":2"#)).is_err());
    }
}

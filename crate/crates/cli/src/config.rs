//! Run configuration: a versioned JSON schema and builders for core objects.

use std::f64::consts::{PI, TAU};

use anyhow::{bail, ensure, Context, Result};
use finsler_morse::critpoint::SolveOptions;
use finsler_morse::finsler::{FourierTerm, MetricModel, QuadForm, ScalarField};
use finsler_morse::linalg::Mat;
use finsler_morse::loopspace::{AffineConstraint, BoundaryCondition, DiscreteCurve, Monodromy};
use finsler_morse::manifold::AmbientManifold;
use finsler_morse::morse::{ReductionOptions, SpectrumOptions};
use finsler_morse::regularize::CutoffHints;
use finsler_morse::sampling;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub manifold: ManifoldSpec,
    pub metric: MetricSpec,
    #[serde(default)]
    pub lagrangian: LagrangianSpec,
    #[serde(default)]
    pub curve: Option<CurveSpec>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub spectrum: SpectrumSpec,
    #[serde(default)]
    pub reduction: ReductionSpec,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    /// Tau grid for the homotopy check run after `solve`.
    #[serde(default)]
    pub taus: Vec<f64>,
    /// Samples for metric and modification checks, directions for gradcheck.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_k_max() -> usize {
    4
}

fn default_samples() -> usize {
    1000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ManifoldSpec {
    Euclidean { dim: usize },
    Torus { periods: Vec<f64> },
    Sphere { dim: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub amplitude: f64,
    pub wavevector: Vec<f64>,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub offset: f64,
    #[serde(default)]
    pub terms: Vec<TermSpec>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadSpec {
    /// Constant matrix, identity when absent.
    #[serde(default)]
    pub base: Option<Vec<Vec<f64>>>,
    /// Conformal factor multiplying `base`.
    #[serde(default)]
    pub factor: Option<FieldSpec>,
    #[serde(default)]
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricSpec {
    Euclidean,
    Riemannian {
        #[serde(default)]
        a: QuadSpec,
    },
    Randers {
        #[serde(default)]
        a: QuadSpec,
        /// One-form components, constants or Fourier fields.
        b: Vec<FieldSpec>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LagrangianSpec {
    /// Energy level `c` of the modification; no `L*` when absent.
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub tau: f64,
    #[serde(default = "one")]
    pub mu: f64,
    #[serde(default = "eps_fraction")]
    pub eps_fraction: f64,
    #[serde(default = "max_halvings")]
    pub max_halvings: usize,
    #[serde(default = "bounds_samples")]
    pub bounds_samples: usize,
    #[serde(default = "radial_points")]
    pub radial_points: usize,
}

fn one() -> f64 {
    1.0
}
fn eps_fraction() -> f64 {
    CutoffHints::default().eps_fraction
}
fn max_halvings() -> usize {
    CutoffHints::default().max_halvings
}
fn bounds_samples() -> usize {
    400
}
fn radial_points() -> usize {
    100
}

impl Default for LagrangianSpec {
    fn default() -> Self {
        LagrangianSpec {
            c: None,
            tau: 0.0,
            mu: one(),
            eps_fraction: eps_fraction(),
            max_halvings: max_halvings(),
            bounds_samples: bounds_samples(),
            radial_points: radial_points(),
        }
    }
}

impl LagrangianSpec {
    pub fn hints(&self) -> CutoffHints {
        CutoffHints { mu: self.mu, eps_fraction: self.eps_fraction, max_halvings: self.max_halvings }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    pub nodes: usize,
    pub init: InitSpec,
    #[serde(default)]
    pub bc: Option<BcSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    /// `offset + class * periods * t` plus seeded low harmonics of size `noise`.
    Loop {
        class: Vec<f64>,
        offset: Vec<f64>,
        #[serde(default)]
        noise: f64,
    },
    /// Equator of the unit sphere tilted out of its plane by `tilt`.
    GreatCircle {
        #[serde(default)]
        tilt: f64,
    },
    /// Straight segment plus seeded sine bumps vanishing at the ends.
    Segment {
        start: Vec<f64>,
        end: Vec<f64>,
        #[serde(default)]
        noise: f64,
    },
    Points { points: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineSpec {
    pub point: Vec<f64>,
    #[serde(default)]
    pub directions: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BcSpec {
    Periodic {
        #[serde(default)]
        monodromy: Option<Vec<f64>>,
    },
    /// Endpoints taken from the initial curve.
    Fixed,
    Submanifold { start: AffineSpec, end: AffineSpec },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub tol_grad: f64,
    pub max_iters: usize,
    pub armijo_c1: f64,
    pub backtrack: f64,
    /// Gradient norm below which Newton takes over; `null` for Newton from the start.
    pub newton_switch_tol: Option<f64>,
    pub gram_weight: usize,
    pub collapse_ratio: f64,
    pub newton_rcond: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let d = SolveOptions::default();
        SolverSpec {
            tol_grad: d.tol_grad,
            max_iters: d.max_iters,
            armijo_c1: d.armijo_c1,
            backtrack: d.backtrack,
            newton_switch_tol: Some(d.newton_switch_tol),
            gram_weight: d.gram_weight,
            collapse_ratio: d.collapse_ratio,
            newton_rcond: d.newton_rcond,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSpec {
    pub gram_weight: usize,
    pub rel_thresh: f64,
}

impl Default for SpectrumSpec {
    fn default() -> Self {
        let d = SpectrumOptions::default();
        SpectrumSpec { gram_weight: d.gram_weight, rel_thresh: d.rel_thresh }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionSpec {
    pub points_per_axis: usize,
    pub delta: Option<f64>,
    pub max_displacement: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub flat_tol: f64,
}

impl Default for ReductionSpec {
    fn default() -> Self {
        let d = ReductionOptions::default();
        ReductionSpec {
            points_per_axis: d.points_per_axis,
            delta: d.delta,
            max_displacement: d.max_displacement,
            tol: d.tol,
            max_iters: d.max_iters,
            flat_tol: d.flat_tol,
        }
    }
}

fn field(f: &FieldSpec, d: usize) -> Result<ScalarField> {
    for t in &f.terms {
        ensure!(t.wavevector.len() == d, "wavevector has length {}, expected {d}", t.wavevector.len());
    }
    Ok(ScalarField {
        offset: f.offset,
        terms: f
            .terms
            .iter()
            .map(|t| FourierTerm { amplitude: t.amplitude, wavevector: t.wavevector.clone(), phase: t.phase })
            .collect(),
    })
}

fn quad(q: &QuadSpec, d: usize) -> Result<QuadForm> {
    let base = match &q.base {
        None => Mat::identity(d),
        Some(rows) => {
            ensure!(rows.len() == d && rows.iter().all(|r| r.len() == d), "metric base must be {d}x{d}");
            Mat::from_fn(d, d, |i, j| rows[i][j])
        }
    };
    ensure!(base.asymmetry() < 1e-12, "metric base must be symmetric");
    let factor = match &q.factor {
        None => ScalarField::constant(1.0),
        Some(f) => field(f, d)?,
    };
    let scale = q.scale.unwrap_or(1.0);
    ensure!(scale > 0.0, "metric scale must be positive");
    Ok(QuadForm { base, factor, scale })
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_str(text).context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.version == SCHEMA_VERSION,
            "unsupported config version {} (expected {SCHEMA_VERSION})",
            self.version
        );
        let d = self.ambient_dim();
        ensure!(d >= 1, "manifold dimension must be positive");
        if let ManifoldSpec::Torus { periods } = &self.manifold {
            ensure!(periods.iter().all(|p| *p > 0.0), "torus periods must be positive");
        }
        if let ManifoldSpec::Sphere { dim } = &self.manifold {
            ensure!(*dim >= 2, "sphere needs ambient dimension at least 2");
        }
        let l = &self.lagrangian;
        if let Some(c) = l.c {
            ensure!(c > 0.0, "energy level c must be positive");
        }
        ensure!((0.0..=1.0).contains(&l.tau), "tau must lie in [0, 1]");
        ensure!(l.tau == 0.0 || l.c.is_some(), "tau > 0 needs lagrangian.c");
        ensure!(l.mu > 0.0 && l.eps_fraction > 0.0, "cutoff hints must be positive");
        ensure!(self.taus.iter().all(|t| (0.0..=1.0).contains(t)), "taus must lie in [0, 1]");
        ensure!(self.taus.is_empty() || l.c.is_some(), "taus need lagrangian.c");
        ensure!(self.samples > 0 && l.bounds_samples > 0, "sample counts must be positive");
        ensure!(self.k_max >= 1, "k_max must be at least 1");
        let s = &self.solver;
        ensure!(s.tol_grad > 0.0 && s.armijo_c1 > 0.0, "solver tolerances must be positive");
        ensure!(s.backtrack > 0.0 && s.backtrack < 1.0, "backtrack must lie in (0, 1)");
        ensure!(s.gram_weight >= 1 && self.spectrum.gram_weight >= 1, "Gram weight must be at least 1");
        ensure!(self.spectrum.rel_thresh > 0.0, "spectrum threshold must be positive");
        ensure!(self.reduction.points_per_axis % 2 == 1, "reduction.points_per_axis must be odd");
        if let Some(c) = &self.curve {
            ensure!(c.nodes >= 8, "curve needs at least 8 nodes");
        }
        self.metric()?;
        Ok(())
    }

    pub fn ambient_dim(&self) -> usize {
        match &self.manifold {
            ManifoldSpec::Euclidean { dim } | ManifoldSpec::Sphere { dim } => *dim,
            ManifoldSpec::Torus { periods } => periods.len(),
        }
    }

    pub fn manifold(&self) -> Result<AmbientManifold> {
        Ok(match &self.manifold {
            ManifoldSpec::Euclidean { dim } => AmbientManifold::euclidean(*dim),
            ManifoldSpec::Torus { periods } => AmbientManifold::flat_torus(periods)?,
            ManifoldSpec::Sphere { dim } => AmbientManifold::unit_sphere(*dim),
        })
    }

    pub fn metric(&self) -> Result<MetricModel> {
        let d = self.ambient_dim();
        Ok(match &self.metric {
            MetricSpec::Euclidean => MetricModel::euclidean(d),
            MetricSpec::Riemannian { a } => MetricModel::riemannian(quad(a, d)?),
            MetricSpec::Randers { a, b } => {
                ensure!(b.len() == d, "one-form b has {} components, expected {d}", b.len());
                let b = b.iter().map(|f| field(f, d)).collect::<Result<Vec<_>>>()?;
                MetricModel::randers(quad(a, d)?, b)
            }
        })
    }

    pub fn solve_options(&self) -> SolveOptions {
        let s = &self.solver;
        SolveOptions {
            tol_grad: s.tol_grad,
            max_iters: s.max_iters,
            armijo_c1: s.armijo_c1,
            backtrack: s.backtrack,
            newton_switch_tol: s.newton_switch_tol.unwrap_or(f64::INFINITY),
            tau: self.lagrangian.tau,
            gram_weight: s.gram_weight,
            collapse_ratio: s.collapse_ratio,
            newton_rcond: s.newton_rcond,
        }
    }

    pub fn spectrum_options(&self) -> SpectrumOptions {
        SpectrumOptions { gram_weight: self.spectrum.gram_weight, rel_thresh: self.spectrum.rel_thresh, vectors: false }
    }

    pub fn reduction_options(&self) -> ReductionOptions {
        let r = &self.reduction;
        ReductionOptions {
            points_per_axis: r.points_per_axis,
            delta: r.delta,
            max_displacement: r.max_displacement,
            tol: r.tol,
            max_iters: r.max_iters,
            gram_weight: self.spectrum.gram_weight,
            rel_thresh: self.spectrum.rel_thresh,
            flat_tol: r.flat_tol,
            ..ReductionOptions::default()
        }
    }

    /// Initial curve with `nodes` nodes (overriding the configured count when given).
    pub fn initial_curve(&self, nodes: Option<usize>) -> Result<DiscreteCurve> {
        let spec = self.curve.as_ref().context("this command needs a `curve` section")?;
        let n = nodes.unwrap_or(spec.nodes);
        let d = self.ambient_dim();
        let m = self.manifold()?;
        let mut rng = sampling::rng(self.seed);
        let harmonics = sampling::uniform_vec(&mut rng, 4 * d, -1.0, 1.0);
        let bc = match &spec.bc {
            Some(BcSpec::Periodic { monodromy }) => match monodromy {
                None => BoundaryCondition::periodic(d),
                Some(s) => {
                    ensure!(s.len() == d, "monodromy needs {d} signs");
                    BoundaryCondition::Periodic(Monodromy::from_signs(s)?)
                }
            },
            Some(BcSpec::Submanifold { start, end }) => BoundaryCondition::Submanifold {
                start: AffineConstraint::new(&start.point, &start.directions)?,
                end: AffineConstraint::new(&end.point, &end.directions)?,
            },
            Some(BcSpec::Fixed) | None => match &spec.init {
                InitSpec::Segment { start, end, .. } => {
                    BoundaryCondition::Fixed { start: start.clone(), end: end.clone() }
                }
                InitSpec::Points { points } if matches!(spec.bc, Some(BcSpec::Fixed)) => {
                    let first = points.first().context("no points")?;
                    let last = points.last().context("no points")?;
                    BoundaryCondition::Fixed { start: first.clone(), end: last.clone() }
                }
                _ if matches!(spec.bc, Some(BcSpec::Fixed)) => bail!("fixed ends need a segment or point list"),
                _ => BoundaryCondition::periodic(d),
            },
        };
        let curve = match &spec.init {
            InitSpec::Loop { class, offset, noise } => {
                ensure!(class.len() == d && offset.len() == d, "loop class and offset need {d} entries");
                let periods = match &self.manifold {
                    ManifoldSpec::Torus { periods } => periods.clone(),
                    _ => vec![1.0; d],
                };
                let (class, offset, noise) = (class.clone(), offset.clone(), *noise);
                DiscreteCurve::from_fn(&m, bc, n, move |t| {
                    (0..d)
                        .map(|c| {
                            let h = &harmonics[4 * c..4 * c + 4];
                            offset[c]
                                + class[c] * periods[c] * t
                                + noise
                                    * (h[0] * (TAU * t).sin()
                                        + h[1] * (TAU * t).cos()
                                        + h[2] * (2.0 * TAU * t).sin()
                                        + h[3] * (2.0 * TAU * t).cos())
                        })
                        .collect()
                })?
            }
            InitSpec::GreatCircle { tilt } => {
                ensure!(matches!(self.manifold, ManifoldSpec::Sphere { dim } if dim >= 3), "great_circle needs a sphere in R^3 or higher");
                let tilt = *tilt;
                DiscreteCurve::from_fn(&m, bc, n, move |t| {
                    let th = TAU * t;
                    let mut x = vec![0.0; d];
                    x[0] = th.cos();
                    x[1] = th.sin();
                    x[2] = tilt * ((2.0 * th).sin() + 0.5 * th.cos());
                    x
                })?
            }
            InitSpec::Segment { start, end, noise } => {
                ensure!(start.len() == d && end.len() == d, "segment ends need {d} entries");
                let (a, b, noise) = (start.clone(), end.clone(), *noise);
                DiscreteCurve::from_fn(&m, bc, n, move |t| {
                    (0..d)
                        .map(|c| {
                            let h = &harmonics[4 * c..4 * c + 4];
                            a[c] + (b[c] - a[c]) * t
                                + noise * (h[0] * (PI * t).sin() + h[1] * (2.0 * PI * t).sin())
                        })
                        .collect()
                })?
            }
            InitSpec::Points { points } => {
                ensure!(points.len() == n, "point list has {} nodes, expected {n}", points.len());
                DiscreteCurve::new(&m, bc, points.clone())?
            }
        };
        Ok(curve)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{"version": 1, "manifold": {"kind": "torus", "periods": [1, 1]}, "metric": {"kind": "euclidean"},
            "curve": {"nodes": 16, "init": {"kind": "loop", "class": [1, 0], "offset": [0, 0.3], "noise": 0.05}}}"#
    }

    #[test]
    fn parses_and_builds() {
        let cfg = RunConfig::from_json(minimal()).unwrap();
        let c = cfg.initial_curve(None).unwrap();
        assert_eq!(c.len(), 16);
        assert!(c.is_periodic());
        assert!((c.winding()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad_version = minimal().replace("\"version\": 1", "\"version\": 2");
        assert!(RunConfig::from_json(&bad_version).is_err());
        let unknown = minimal().replace("\"metric\"", "\"extra\": 1, \"metric\"");
        assert!(RunConfig::from_json(&unknown).is_err());
        let few = minimal().replace("\"nodes\": 16", "\"nodes\": 4");
        assert!(RunConfig::from_json(&few).is_err());
        let randers_dim = minimal().replace(
            r#"{"kind": "euclidean"}"#,
            r#"{"kind": "randers", "b": [{"offset": 0.1}]}"#,
        );
        assert!(RunConfig::from_json(&randers_dim).is_err());
    }
}

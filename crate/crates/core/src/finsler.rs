//! Finsler metrics `F`, the Lagrangian `L = F^2`, its jets, the fundamental
//! tensor, and sampled axiom / bounds checks.

use alloc::sync::Arc;
use core::fmt;

use crate::error::{Error, Result};
use crate::linalg::{dot, generalized_eigen, Mat};
use crate::manifold::{AmbientManifold, ManifoldKind};
use crate::prelude::*;
use crate::sampling::{self, ChaCha8Rng};

/// One term `amplitude * cos(k . x + phase)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct FourierTerm {
    pub amplitude: f64,
    pub wavevector: Vec<f64>,
    pub phase: f64,
}

/// `offset + sum of cosine terms`, with analytic derivatives.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ScalarField {
    pub offset: f64,
    pub terms: Vec<FourierTerm>,
}

impl ScalarField {
    pub fn constant(c: f64) -> Self {
        ScalarField { offset: c, terms: Vec::new() }
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| t.amplitude == 0.0)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.offset
            + self
                .terms
                .iter()
                .map(|t| t.amplitude * (dot(&t.wavevector, x) + t.phase).cos())
                .sum::<f64>()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        for t in &self.terms {
            let s = -t.amplitude * (dot(&t.wavevector, x) + t.phase).sin();
            g.iter_mut().zip(&t.wavevector).for_each(|(gi, ki)| *gi += s * ki);
        }
        g
    }

    pub fn hessian(&self, x: &[f64]) -> Mat {
        let d = x.len();
        let mut h = Mat::zeros(d, d);
        for t in &self.terms {
            let c = -t.amplitude * (dot(&t.wavevector, x) + t.phase).cos();
            for a in 0..d {
                for b in 0..d {
                    h[(a, b)] += c * t.wavevector[a] * t.wavevector[b];
                }
            }
        }
        h
    }
}

/// `scale * f(x) * u^T A u`: a conformally varying constant quadratic form.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadForm {
    pub base: Mat,
    pub factor: ScalarField,
    pub scale: f64,
}

impl QuadForm {
    pub fn euclidean(d: usize) -> Self {
        QuadForm { base: Mat::identity(d), factor: ScalarField::constant(1.0), scale: 1.0 }
    }

    pub fn matrix(&self, x: &[f64]) -> Mat {
        let c = self.scale * self.factor.value(x);
        Mat::from_fn(self.base.rows(), self.base.cols(), |i, j| c * self.base[(i, j)])
    }

    pub fn norm2(&self, x: &[f64], u: &[f64]) -> f64 {
        self.scale * self.factor.value(x) * self.base.quad_form(u, u)
    }

    pub fn scaled(&self, s: f64) -> Self {
        QuadForm { scale: self.scale * s, ..self.clone() }
    }

    /// Jet of `R(x, v) = |v|^2_x` in the combined variables.
    pub fn jet(&self, x: &[f64], v: &[f64], order: u8) -> Jet {
        let d = x.len();
        let f = self.factor.value(x);
        let av = self.base.matvec(v);
        let q = dot(v, &av);
        let mut jet = Jet::new(d, order);
        jet.value = self.scale * f * q;
        if order >= 1 {
            let gf = self.factor.gradient(x);
            for a in 0..d {
                jet.dx[a] = self.scale * gf[a] * q;
                jet.dv[a] = 2.0 * self.scale * f * av[a];
            }
            if order >= 2 {
                let hf = self.factor.hessian(x);
                for a in 0..d {
                    for b in 0..d {
                        jet.dxx[(a, b)] = self.scale * hf[(a, b)] * q;
                        jet.dxv[(a, b)] = 2.0 * self.scale * gf[a] * av[b];
                        jet.dvv[(a, b)] = 2.0 * self.scale * f * self.base[(a, b)];
                    }
                }
            }
        }
        jet
    }
}

/// Value and derivatives of a Lagrangian at `(x, v)`.
///
/// `dxv[(a, b)]` is `d/dx_a d/dv_b`. Entries above the requested order are
/// left at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub order: u8,
    pub value: f64,
    pub dx: Vec<f64>,
    pub dv: Vec<f64>,
    pub dxx: Mat,
    pub dxv: Mat,
    pub dvv: Mat,
}

impl Jet {
    pub fn new(d: usize, order: u8) -> Self {
        let m = if order >= 2 { d } else { 0 };
        Jet {
            order,
            value: 0.0,
            dx: vec![0.0; d],
            dv: vec![0.0; d],
            dxx: Mat::zeros(m, m),
            dxv: Mat::zeros(m, m),
            dvv: Mat::zeros(m, m),
        }
    }

    /// `a * self + b * other`, used for the tau family.
    pub fn combine(&self, a: f64, other: &Jet, b: f64) -> Jet {
        let mix = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| a * p + b * q).collect::<Vec<_>>();
        let mixm = |x: &Mat, y: &Mat| Mat::from_fn(x.rows(), x.cols(), |i, j| a * x[(i, j)] + b * y[(i, j)]);
        Jet {
            order: self.order.min(other.order),
            value: a * self.value + b * other.value,
            dx: mix(&self.dx, &other.dx),
            dv: mix(&self.dv, &other.dv),
            dxx: mixm(&self.dxx, &other.dxx),
            dxv: mixm(&self.dxv, &other.dxv),
            dvv: mixm(&self.dvv, &other.dvv),
        }
    }
}

/// Which functional a Hessian or gradient was computed from.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum LagrangianTag {
    /// `L = F^2`
    Base,
    /// The raw modification `psi(L) + phi(|v|^2) - b`.
    Star,
    /// The normalized modification `L*`.
    Normalized,
    /// `(1 - tau) L + tau L*`.
    Tau(f64),
}

pub trait Lagrangian {
    fn dim(&self) -> usize;
    fn jet(&self, x: &[f64], v: &[f64], order: u8) -> Result<Jet>;
    fn tag(&self) -> LagrangianTag;

    fn value(&self, x: &[f64], v: &[f64]) -> f64 {
        self.jet(x, v, 0).map(|j| j.value).unwrap_or(f64::NAN)
    }
}

pub type CustomFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum MetricKind {
    /// `L = f(x) v^T A v`.
    Riemannian { a: QuadForm },
    /// `F = sqrt(f(x) v^T A v) + b(x) . v` with one scalar field per
    /// component of `b`.
    Randers { a: QuadForm, b: Vec<ScalarField> },
    /// A user-supplied `F`, differentiated by central differences.
    Custom { f: CustomFn },
}

impl fmt::Debug for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricKind::Riemannian { a } => f.debug_struct("Riemannian").field("a", a).finish(),
            MetricKind::Randers { a, b } => f.debug_struct("Randers").field("a", a).field("b", b).finish(),
            MetricKind::Custom { .. } => f.write_str("Custom"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MetricModel {
    pub dim: usize,
    pub kind: MetricKind,
    /// The auxiliary Riemannian metric `g`; rescaled by `bounds_estimate`.
    pub reference: QuadForm,
}

fn fd_step(scale: f64, power: f64) -> f64 {
    f64::EPSILON.powf(power) * scale.max(1e-3)
}

impl MetricModel {
    pub fn euclidean(d: usize) -> Self {
        MetricModel::riemannian(QuadForm::euclidean(d))
    }

    pub fn riemannian(a: QuadForm) -> Self {
        let dim = a.base.rows();
        MetricModel { dim, reference: QuadForm::euclidean(dim), kind: MetricKind::Riemannian { a } }
    }

    pub fn randers(a: QuadForm, b: Vec<ScalarField>) -> Self {
        let dim = a.base.rows();
        assert_eq!(b.len(), dim, "Randers one-form has the wrong length");
        MetricModel { dim, reference: a.clone(), kind: MetricKind::Randers { a, b } }
    }

    /// Randers metric with `a = I` and constant `b`.
    pub fn randers_constant(b: &[f64]) -> Self {
        MetricModel::randers(
            QuadForm::euclidean(b.len()),
            b.iter().map(|&bi| ScalarField::constant(bi)).collect(),
        )
    }

    pub fn custom(dim: usize, f: CustomFn) -> Self {
        MetricModel { dim, kind: MetricKind::Custom { f }, reference: QuadForm::euclidean(dim) }
    }

    pub fn with_reference(mut self, reference: QuadForm) -> Self {
        self.reference = reference;
        self
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self.kind, MetricKind::Riemannian { .. })
    }

    pub fn eval_f(&self, x: &[f64], v: &[f64]) -> f64 {
        match &self.kind {
            MetricKind::Riemannian { a } => a.norm2(x, v).max(0.0).sqrt(),
            MetricKind::Randers { a, b } => {
                a.norm2(x, v).max(0.0).sqrt() + b.iter().zip(v).map(|(bi, vi)| bi.value(x) * vi).sum::<f64>()
            }
            MetricKind::Custom { f } => f(x, v),
        }
    }

    pub fn eval_l(&self, x: &[f64], v: &[f64]) -> f64 {
        match &self.kind {
            MetricKind::Riemannian { a } => a.norm2(x, v),
            _ => {
                let f = self.eval_f(x, v);
                f * f
            }
        }
    }

    pub fn dl_dx(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        Ok(self.jet(x, v, 1)?.dx)
    }

    pub fn dl_dv(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        Ok(self.jet(x, v, 1)?.dv)
    }

    /// `g^F(x, v) = (1/2) d_vv L` in ambient coordinates.
    pub fn fundamental_tensor(&self, x: &[f64], v: &[f64]) -> Result<Mat> {
        if v.iter().all(|&c| c == 0.0) {
            return Err(Error::ZeroFiberVector);
        }
        let j = self.jet(x, v, 2)?;
        let mut g = Mat::from_fn(self.dim, self.dim, |i, k| 0.5 * j.dvv[(i, k)]);
        g.symmetrize();
        Ok(g)
    }

    fn randers_jet(&self, a: &QuadForm, b: &[ScalarField], x: &[f64], v: &[f64], order: u8) -> Jet {
        let d = self.dim;
        let s = a.factor.value(x).sqrt();
        let av: Vec<f64> = a.base.matvec(v).iter().map(|c| c * a.scale).collect();
        let q = dot(v, &av);
        let alpha0 = q.sqrt();
        let bvals: Vec<f64> = b.iter().map(|bi| bi.value(x)).collect();
        let f = s * alpha0 + dot(&bvals, v);
        let mut jet = Jet::new(d, order);
        jet.value = f * f;
        if order == 0 {
            return jet;
        }
        let gfa = a.factor.gradient(x);
        let ds: Vec<f64> = gfa.iter().map(|g| g / (2.0 * s)).collect();
        let bgrads: Vec<Vec<f64>> = b.iter().map(|bi| bi.gradient(x)).collect();
        let mut fx = vec![0.0; d];
        let mut fv = vec![0.0; d];
        for i in 0..d {
            fx[i] = ds[i] * alpha0 + (0..d).map(|k| bgrads[k][i] * v[k]).sum::<f64>();
            fv[i] = s * av[i] / alpha0 + bvals[i];
        }
        for i in 0..d {
            jet.dx[i] = 2.0 * f * fx[i];
            jet.dv[i] = 2.0 * f * fv[i];
        }
        if order < 2 {
            return jet;
        }
        let hfa = a.factor.hessian(x);
        let bhess: Vec<Mat> = b.iter().map(|bi| bi.hessian(x)).collect();
        for i in 0..d {
            for k in 0..d {
                let dss = hfa[(i, k)] / (2.0 * s) - gfa[i] * gfa[k] / (4.0 * s * s * s);
                let fxx = dss * alpha0 + (0..d).map(|c| bhess[c][(i, k)] * v[c]).sum::<f64>();
                let fxv = ds[i] * av[k] / alpha0 + bgrads[k][i];
                let fvv = s * (a.scale * a.base[(i, k)] / alpha0 - av[i] * av[k] / (alpha0 * alpha0 * alpha0));
                jet.dxx[(i, k)] = 2.0 * (fx[i] * fx[k] + f * fxx);
                jet.dxv[(i, k)] = 2.0 * (fx[i] * fv[k] + f * fxv);
                jet.dvv[(i, k)] = 2.0 * (fv[i] * fv[k] + f * fvv);
            }
        }
        jet
    }

    fn custom_jet(&self, f: &CustomFn, x: &[f64], v: &[f64], order: u8) -> Jet {
        let d = self.dim;
        let l = |xx: &[f64], vv: &[f64]| {
            let y = f(xx, vv);
            y * y
        };
        let mut jet = Jet::new(d, order);
        jet.value = l(x, v);
        if order == 0 {
            return jet;
        }
        let xs = x.iter().fold(0.0f64, |m, c| m.max(c.abs())).max(1.0);
        let vs = v.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        // combined variable z = (x, v)
        let z0: Vec<f64> = x.iter().chain(v).copied().collect();
        let eval = |z: &[f64]| l(&z[..d], &z[d..]);
        let steps1: Vec<f64> = (0..2 * d).map(|i| fd_step(if i < d { xs } else { vs }, 1.0 / 3.0)).collect();
        let mut z = z0.clone();
        for i in 0..2 * d {
            let h = steps1[i];
            z[i] = z0[i] + h;
            let fp = eval(&z);
            z[i] = z0[i] - h;
            let fm = eval(&z);
            z[i] = z0[i];
            let g = (fp - fm) / (2.0 * h);
            if i < d {
                jet.dx[i] = g;
            } else {
                jet.dv[i - d] = g;
            }
        }
        if order < 2 {
            return jet;
        }
        let steps2: Vec<f64> = (0..2 * d).map(|i| fd_step(if i < d { xs } else { vs }, 0.25)).collect();
        let mut hmat = Mat::zeros(2 * d, 2 * d);
        let f0 = jet.value;
        for i in 0..2 * d {
            let hi = steps2[i];
            z[i] = z0[i] + hi;
            let fp = eval(&z);
            z[i] = z0[i] - hi;
            let fm = eval(&z);
            z[i] = z0[i];
            hmat[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
            for k in 0..i {
                let hk = steps2[k];
                let mut corner = |si: f64, sk: f64| {
                    z[i] = z0[i] + si * hi;
                    z[k] = z0[k] + sk * hk;
                    let val = eval(&z);
                    z[i] = z0[i];
                    z[k] = z0[k];
                    val
                };
                let m = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                    / (4.0 * hi * hk);
                hmat[(i, k)] = m;
                hmat[(k, i)] = m;
            }
        }
        for a in 0..d {
            for b in 0..d {
                jet.dxx[(a, b)] = hmat[(a, b)];
                jet.dxv[(a, b)] = hmat[(a, d + b)];
                jet.dvv[(a, b)] = hmat[(d + a, d + b)];
            }
        }
        jet
    }
}

impl Lagrangian for MetricModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn jet(&self, x: &[f64], v: &[f64], order: u8) -> Result<Jet> {
        if x.len() != self.dim || v.len() != self.dim {
            return Err(Error::Dimension(format!("metric of dim {} given {} / {}", self.dim, x.len(), v.len())));
        }
        if order >= 1 && !self.is_quadratic() && v.iter().all(|&c| c == 0.0) {
            return Err(Error::NonSmoothOrigin);
        }
        Ok(match &self.kind {
            MetricKind::Riemannian { a } => a.jet(x, v, order),
            MetricKind::Randers { a, b } => self.randers_jet(a, b, x, v, order),
            MetricKind::Custom { f } => self.custom_jet(f, x, v, order),
        })
    }

    fn tag(&self) -> LagrangianTag {
        LagrangianTag::Base
    }

    fn value(&self, x: &[f64], v: &[f64]) -> f64 {
        self.eval_l(x, v)
    }
}

/// A random point of `m`: the period box of a torus, the unit sphere, or
/// `[-1, 1]^d` in Euclidean space.
pub fn sample_point(m: &AmbientManifold, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = m.ambient_dim();
    match m.kind() {
        ManifoldKind::FlatTorus => m.lattice().iter().map(|&p| sampling::uniform(rng, 0.0, p)).collect(),
        ManifoldKind::UnitSphere => sampling::unit_vec(rng, d),
        ManifoldKind::EuclideanSpace => sampling::uniform_vec(rng, d, -1.0, 1.0),
    }
}

/// A random unit-Euclidean tangent vector at `x`.
pub fn sample_tangent_dir(m: &AmbientManifold, x: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let b = m.tangent_basis(x);
    let c = sampling::unit_vec(rng, m.intrinsic_dim());
    b.matvec(&c)
}

/// Restriction of an ambient bilinear form to the tangent space: `B^T M B`.
pub fn restrict(m: &Mat, basis: &Mat) -> Mat {
    basis.transpose().matmul(&m.matmul(basis))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct AxiomReport {
    pub samples: usize,
    /// Max `|F(x, tv) - t F(x, v)| / (t F(x, v))` over `t` in `(0, 10]`.
    pub homogeneity_residual: f64,
    /// Max `|g^F(x,v)[v,v] - F^2| / F^2`.
    pub euler_residual: f64,
    /// Max `|dL/dv . v - 2L| / (2L)`.
    pub euler_degree2_residual: f64,
    /// Smallest eigenvalue of `g^F` on the tangent space, over samples.
    pub min_gf_eigenvalue: f64,
    /// Smallest `F` over unit tangent vectors, including `-a^{-1} b` for
    /// Randers metrics.
    pub min_f_unit: f64,
    /// Max `|F(x, -v) - F(x, v)|`.
    pub reversibility_defect: f64,
    pub reversible: bool,
    /// Sampled sup of `|b|_a` for Randers metrics.
    pub randers_b_norm: Option<f64>,
}

impl AxiomReport {
    pub fn homogeneity_ok(&self) -> bool {
        self.homogeneity_residual < 1e-10
    }
    pub fn euler_ok(&self) -> bool {
        self.euler_residual < 1e-8 && self.euler_degree2_residual < 1e-8
    }
    pub fn convexity_ok(&self) -> bool {
        self.min_gf_eigenvalue > 0.0
    }
    pub fn positivity_ok(&self) -> bool {
        self.min_f_unit > 0.0
    }
    pub fn passed(&self) -> bool {
        self.homogeneity_ok() && self.euler_ok() && self.convexity_ok() && self.positivity_ok()
    }
}

fn randers_b_norm(a: &QuadForm, b: &[ScalarField], x: &[f64], basis: &Mat) -> (f64, Vec<f64>) {
    // a-norm of b restricted to the tangent space, and the tangent vector
    // -a^{-1} b (in ambient coordinates) where F is smallest.
    let am = restrict(&a.matrix(x), basis);
    let bv: Vec<f64> = b.iter().map(|bi| bi.value(x)).collect();
    let bt = basis.tmatvec(&bv);
    let w = crate::linalg::lu_solve(&am, &bt).unwrap_or_else(|_| vec![0.0; bt.len()]);
    let norm = dot(&bt, &w).max(0.0).sqrt();
    let dir: Vec<f64> = basis.matvec(&w).iter().map(|c| -c).collect();
    (norm, dir)
}

/// Sampled checks of positivity, homogeneity, strong convexity and the Euler
/// identities.
pub fn verify_axioms(model: &MetricModel, manifold: &AmbientManifold, samples: usize, seed: u64) -> AxiomReport {
    let mut rng = sampling::rng(seed);
    let mut rep = AxiomReport {
        samples,
        homogeneity_residual: 0.0,
        euler_residual: 0.0,
        euler_degree2_residual: 0.0,
        min_gf_eigenvalue: f64::INFINITY,
        min_f_unit: f64::INFINITY,
        reversibility_defect: 0.0,
        reversible: true,
        randers_b_norm: None,
    };
    for _ in 0..samples {
        let x = sample_point(manifold, &mut rng);
        let u = sample_tangent_dir(manifold, &x, &mut rng);
        let r = sampling::uniform(&mut rng, 0.1, 3.0);
        let v: Vec<f64> = u.iter().map(|c| c * r).collect();
        let t = sampling::uniform(&mut rng, 1e-3, 10.0);
        let f = model.eval_f(&x, &v);
        let tv: Vec<f64> = v.iter().map(|c| c * t).collect();
        let ft = model.eval_f(&x, &tv);
        if f > 0.0 {
            rep.homogeneity_residual = rep.homogeneity_residual.max((ft - t * f).abs() / (t * f));
        }
        rep.min_f_unit = rep.min_f_unit.min(model.eval_f(&x, &u));
        let neg: Vec<f64> = v.iter().map(|c| -c).collect();
        rep.reversibility_defect = rep.reversibility_defect.max((model.eval_f(&x, &neg) - f).abs());
        if let Ok(jet) = model.jet(&x, &v, 2) {
            let l = jet.value;
            if l > 0.0 {
                let gvv = 0.5 * jet.dvv.quad_form(&v, &v);
                rep.euler_residual = rep.euler_residual.max((gvv - f * f).abs() / (f * f));
                rep.euler_degree2_residual =
                    rep.euler_degree2_residual.max((dot(&jet.dv, &v) - 2.0 * l).abs() / (2.0 * l));
            }
            let basis = manifold.tangent_basis(&x);
            let mut g = Mat::from_fn(model.dim, model.dim, |i, k| 0.5 * jet.dvv[(i, k)]);
            g.symmetrize();
            let gt = restrict(&g, &basis);
            let e = crate::linalg::symmetric_eigen(&gt, false);
            rep.min_gf_eigenvalue = rep.min_gf_eigenvalue.min(e.values[0]);
        } else {
            rep.min_gf_eigenvalue = f64::NAN;
        }
        if let MetricKind::Randers { a, b } = &model.kind {
            let basis = manifold.tangent_basis(&x);
            let (nb, dir) = randers_b_norm(a, b, &x, &basis);
            rep.randers_b_norm = Some(rep.randers_b_norm.unwrap_or(0.0).max(nb));
            let dn = dot(&dir, &dir).sqrt();
            if dn > 0.0 {
                let du: Vec<f64> = dir.iter().map(|c| c / dn).collect();
                rep.min_f_unit = rep.min_f_unit.min(model.eval_f(&x, &du));
            }
        }
    }
    rep.reversible = rep.reversibility_defect <= 1e-12;
    rep
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct BoundsEstimate {
    /// Sampled inf of `g^F(x,v)[u,u] / g_x(u,u)` with the normalized `g`.
    pub alpha_g: f64,
    /// Sampled sup of the same ratio.
    pub beta_g: f64,
    /// `C1` with `|v|^2_x <= L(x,v) <= C1 |v|^2_x` on samples.
    pub c1: f64,
    /// Factor applied to the supplied reference metric so the left inequality
    /// holds; equals the sampled inf of `L / |v|^2_ref`.
    pub reference_scale: f64,
    /// Sampled sup of `L / |v|^2_ref` before normalization.
    pub raw_max_ratio: f64,
    pub argmin_ratio: (Vec<f64>, Vec<f64>),
    pub argmax_ratio: (Vec<f64>, Vec<f64>),
    pub argmin_alpha: (Vec<f64>, Vec<f64>),
    pub argmax_beta: (Vec<f64>, Vec<f64>),
    pub samples: usize,
}

impl BoundsEstimate {
    /// The reference metric of `model` rescaled by `reference_scale`.
    pub fn normalized_reference(&self, model: &MetricModel) -> QuadForm {
        model.reference.scaled(self.reference_scale)
    }
}

/// Direction search on the unit sphere of the tangent space at fixed `x`,
/// refining a sampled extremum of `ratio`.
fn polish_direction(
    manifold: &AmbientManifold,
    x: &[f64],
    u: &[f64],
    sign: f64,
    ratio: &dyn Fn(&[f64], &[f64]) -> f64,
) -> (Vec<f64>, f64) {
    let basis = manifold.tangent_basis(x);
    let n = basis.cols();
    let mut c = basis.tmatvec(u);
    let to_amb = |c: &[f64]| {
        let r = dot(c, c).sqrt();
        let cn: Vec<f64> = c.iter().map(|z| z / r).collect();
        basis.matvec(&cn)
    };
    let mut best = sign * ratio(x, &to_amb(&c));
    let mut step = 0.1;
    while step > 1e-9 {
        let mut improved = false;
        for k in 0..n {
            for s in [-1.0, 1.0] {
                let mut trial = c.clone();
                trial[k] += s * step;
                let val = sign * ratio(x, &to_amb(&trial));
                if val > best {
                    best = val;
                    c = trial;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (to_amb(&c), sign * best)
}

/// Sampled `alpha_g`, `beta_g` and `C1` for `model` on `manifold`.
pub fn bounds_estimate(model: &MetricModel, manifold: &AmbientManifold, samples: usize, seed: u64) -> BoundsEstimate {
    let mut rng = sampling::rng(seed);
    let refq = &model.reference;
    let ratio = |x: &[f64], u: &[f64]| model.eval_l(x, u) / refq.norm2(x, u);
    let mut pts = Vec::with_capacity(samples);
    let (mut rmin, mut rmax) = (f64::INFINITY, 0.0f64);
    let (mut imin, mut imax) = (0, 0);
    for s in 0..samples {
        let x = sample_point(manifold, &mut rng);
        let u = sample_tangent_dir(manifold, &x, &mut rng);
        let r = ratio(&x, &u);
        if r < rmin {
            rmin = r;
            imin = s;
        }
        if r > rmax {
            rmax = r;
            imax = s;
        }
        pts.push((x, u));
    }
    let (umin, pmin) = polish_direction(manifold, &pts[imin].0, &pts[imin].1, -1.0, &ratio);
    let (umax, pmax) = polish_direction(manifold, &pts[imax].0, &pts[imax].1, 1.0, &ratio);
    if pmin < rmin {
        rmin = pmin;
    }
    if pmax > rmax {
        rmax = pmax;
    }
    let scale = rmin;
    let mut alpha = f64::INFINITY;
    let mut beta = 0.0f64;
    let (mut ia, mut ib) = (0, 0);
    for (s, (x, u)) in pts.iter().enumerate() {
        let basis = manifold.tangent_basis(x);
        let Ok(g) = model.fundamental_tensor(x, u) else { continue };
        let gt = restrict(&g, &basis);
        let rt = restrict(&refq.scaled(scale).matrix(x), &basis);
        if let Ok(e) = generalized_eigen(&gt, &rt, false) {
            if e.values[0] < alpha {
                alpha = e.values[0];
                ia = s;
            }
            let top = *e.values.last().unwrap();
            if top > beta {
                beta = top;
                ib = s;
            }
        }
    }
    BoundsEstimate {
        alpha_g: alpha,
        beta_g: beta,
        c1: rmax / rmin,
        reference_scale: scale,
        raw_max_ratio: rmax,
        argmin_ratio: (pts[imin].0.clone(), umin),
        argmax_ratio: (pts[imax].0.clone(), umax),
        argmin_alpha: pts[ia].clone(),
        argmax_beta: pts[ib].clone(),
        samples,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::TAU;

    fn bumpy_randers() -> MetricModel {
        let fa = ScalarField {
            offset: 1.0,
            terms: vec![FourierTerm { amplitude: 0.2, wavevector: vec![TAU, 0.0], phase: 0.3 }],
        };
        let a = QuadForm {
            base: Mat::from_rows(2, 2, vec![1.2, 0.1, 0.1, 0.9]),
            factor: fa,
            scale: 1.0,
        };
        let b = vec![
            ScalarField {
                offset: 0.2,
                terms: vec![FourierTerm { amplitude: 0.1, wavevector: vec![0.0, TAU], phase: 0.0 }],
            },
            ScalarField::constant(-0.1),
        ];
        MetricModel::randers(a, b)
    }

    #[test]
    fn eval_examples() {
        let e = MetricModel::euclidean(2);
        assert_eq!(e.eval_f(&[0.0, 0.0], &[3.0, 4.0]), 5.0);
        let r = MetricModel::randers_constant(&[0.5, 0.0]);
        assert_eq!(r.eval_f(&[0.1, 0.2], &[1.0, 0.0]), 1.5);
        assert_eq!(r.eval_f(&[0.1, 0.2], &[-1.0, 0.0]), 0.5);
        let j = e.jet(&[0.0, 0.0], &[1.0, 2.0], 1).unwrap();
        assert_eq!(j.value, 5.0);
        assert_eq!(j.dv, vec![2.0, 4.0]);
        let j = r.jet(&[0.0, 0.0], &[1.0, 0.0], 1).unwrap();
        assert!((j.value - 2.25).abs() < 1e-15);
        assert!((j.dv[0] - 4.5).abs() < 1e-14 && j.dv[1].abs() < 1e-15);
    }

    #[test]
    fn origin_is_singular_for_randers_only() {
        let r = MetricModel::randers_constant(&[0.5, 0.0]);
        assert_eq!(r.jet(&[0.0, 0.0], &[0.0, 0.0], 1).unwrap_err(), Error::NonSmoothOrigin);
        assert!(MetricModel::euclidean(2).jet(&[0.0, 0.0], &[0.0, 0.0], 2).is_ok());
        assert_eq!(r.fundamental_tensor(&[0.0, 0.0], &[0.0, 0.0]).unwrap_err(), Error::ZeroFiberVector);
    }

    #[test]
    fn analytic_jet_matches_custom_differences() {
        let m = bumpy_randers();
        let mc = m.clone();
        let custom = MetricModel::custom(2, Arc::new(move |x: &[f64], v: &[f64]| mc.eval_f(x, v)));
        let mut rng = sampling::rng(7);
        for _ in 0..50 {
            let x = sampling::uniform_vec(&mut rng, 2, 0.0, 1.0);
            let v = sampling::uniform_vec(&mut rng, 2, -2.0, 2.0);
            let ja = m.jet(&x, &v, 2).unwrap();
            let jf = custom.jet(&x, &v, 2).unwrap();
            let rel = |a: f64, b: f64, s: f64| (a - b).abs() / s;
            let s1 = 1.0 + ja.dv.iter().chain(&ja.dx).fold(0.0f64, |m, c| m.max(c.abs()));
            for i in 0..2 {
                assert!(rel(ja.dx[i], jf.dx[i], s1) < 1e-7);
                assert!(rel(ja.dv[i], jf.dv[i], s1) < 1e-7);
            }
            let s2 = 1.0 + ja.dvv.max_abs().max(ja.dxx.max_abs()).max(ja.dxv.max_abs());
            for i in 0..2 {
                for k in 0..2 {
                    assert!(rel(ja.dvv[(i, k)], jf.dvv[(i, k)], s2) < 1e-5);
                    assert!(rel(ja.dxv[(i, k)], jf.dxv[(i, k)], s2) < 1e-5);
                    assert!(rel(ja.dxx[(i, k)], jf.dxx[(i, k)], s2) < 1e-5);
                }
            }
        }
    }

    #[test]
    fn fundamental_tensor_identities() {
        let m = bumpy_randers();
        let mut rng = sampling::rng(8);
        for _ in 0..200 {
            let x = sampling::uniform_vec(&mut rng, 2, 0.0, 1.0);
            let v = sampling::uniform_vec(&mut rng, 2, -2.0, 2.0);
            let g = m.fundamental_tensor(&x, &v).unwrap();
            let f = m.eval_f(&x, &v);
            assert!((g.quad_form(&v, &v) - f * f).abs() / (f * f) < 1e-12);
            let v2: Vec<f64> = v.iter().map(|c| 2.0 * c).collect();
            let g2 = m.fundamental_tensor(&x, &v2).unwrap();
            for i in 0..2 {
                for k in 0..2 {
                    assert!((g[(i, k)] - g2[(i, k)]).abs() <= 1e-8 * g.max_abs());
                }
            }
        }
        let e = MetricModel::euclidean(3);
        assert_eq!(e.fundamental_tensor(&[0.0; 3], &[1.0, 2.0, 3.0]).unwrap(), Mat::identity(3));
    }

    #[test]
    fn axioms_on_standard_models() {
        let plane = AmbientManifold::flat_torus(&[1.0, 1.0]).unwrap();
        let rep = verify_axioms(&MetricModel::euclidean(2), &plane, 500, 1);
        assert!(rep.passed() && rep.reversible);
        let rep = verify_axioms(&MetricModel::randers_constant(&[0.5, 0.0]), &plane, 500, 1);
        assert!(rep.passed() && !rep.reversible);
        assert!((rep.randers_b_norm.unwrap() - 0.5).abs() < 1e-14);
        let bad = verify_axioms(&MetricModel::randers_constant(&[1.2, 0.0]), &plane, 50, 1);
        assert!(!bad.positivity_ok() && !bad.passed());
        let s2 = AmbientManifold::unit_sphere(3);
        let rep = verify_axioms(&MetricModel::euclidean(3), &s2, 500, 1);
        assert!(rep.passed() && rep.reversible);
    }

    #[test]
    fn bounds_on_standard_models() {
        let plane = AmbientManifold::flat_torus(&[1.0, 1.0]).unwrap();
        let b = bounds_estimate(&MetricModel::euclidean(2), &plane, 200, 2);
        assert!((b.alpha_g - 1.0).abs() < 1e-12 && (b.beta_g - 1.0).abs() < 1e-12 && (b.c1 - 1.0).abs() < 1e-12);
        let b = bounds_estimate(&MetricModel::randers_constant(&[0.5, 0.0]), &plane, 1000, 2);
        // directional oracle: max of (1 + 0.5 cos t)^2 is 2.25, min 0.25
        assert!(b.raw_max_ratio <= 2.25 + 1e-12 && b.raw_max_ratio > 2.25 - 1e-9);
        assert!((b.reference_scale - 0.25).abs() < 1e-9);
        assert!(b.c1 >= 2.25 && b.alpha_g <= b.beta_g);
        let s2 = AmbientManifold::unit_sphere(3);
        let b = bounds_estimate(&MetricModel::euclidean(3), &s2, 200, 2);
        assert!((b.alpha_g - 1.0).abs() < 1e-12 && (b.beta_g - 1.0).abs() < 1e-12);
    }
}

//! Cutoff functions, the convex modification `L*` of `L = F^2`, the family
//! `L^tau`, its energy function and the fiberwise Legendre transform.
//!
//! `psi` switches on the Lagrangian above a small level and becomes affine,
//! `phi` is affine near zero speed and saturates to the constant `b`.
//! `L_star = psi(L) + phi(|v|^2) - b` is smooth across the zero section and
//! coincides with an affine function of `L` above the gluing level, so the
//! normalized `L* = (L_star - rho0) / kappa` equals `L` there exactly.
//!
//! The `psi` transition runs over `[eps, 2 eps]` and `phi` saturates at
//! `T / C1` rather than `T = 2c / (3 C1)`. See the crate README for why the
//! joint inequalities are otherwise infeasible.

use crate::error::{Error, Result};
use crate::finsler::{
    restrict, sample_point, sample_tangent_dir, BoundsEstimate, Jet, Lagrangian, LagrangianTag, MetricModel,
    QuadForm,
};
use crate::linalg::{dot, generalized_eigen, lu_solve, norm, Mat};
use crate::manifold::AmbientManifold;
use crate::prelude::*;
use crate::quad::GaussLegendre;
use crate::sampling;

/// `S(u) = sigma(u) / (sigma(u) + sigma(1 - u))` with `sigma(u) = exp(-1/u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothRamp {
    pub max_slope: f64,
    gl: GaussLegendre,
}

impl Default for SmoothRamp {
    fn default() -> Self {
        SmoothRamp::new()
    }
}

impl SmoothRamp {
    pub fn new() -> Self {
        let mut ramp = SmoothRamp { max_slope: 0.0, gl: GaussLegendre::new(32) };
        // coarse scan, then golden-section polish of the peak of S'
        let n = 2000;
        let (mut best_u, mut best) = (0.5, 0.0);
        for i in 1..n {
            let u = i as f64 / n as f64;
            let s = ramp.s1(u);
            if s > best {
                best = s;
                best_u = u;
            }
        }
        let (mut a, mut b) = (best_u - 1.0 / n as f64, best_u + 1.0 / n as f64);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..80 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if ramp.s1(c) > ramp.s1(d) {
                b = d;
            } else {
                a = c;
            }
        }
        ramp.max_slope = ramp.s1(0.5 * (a + b)).max(best);
        ramp
    }

    /// `(S, 1 - S, z', z'')` with `z = 1/u - 1/(1-u)`; both `S` and `1 - S`
    /// are computed without cancellation.
    fn parts(u: f64) -> (f64, f64, f64, f64) {
        let z = 1.0 / u - 1.0 / (1.0 - u);
        let (s, t) = if z > 0.0 {
            let e = (-z).exp();
            (e / (1.0 + e), 1.0 / (1.0 + e))
        } else {
            let e = z.exp();
            (1.0 / (1.0 + e), e / (1.0 + e))
        };
        let dz = -1.0 / (u * u) - 1.0 / ((1.0 - u) * (1.0 - u));
        let ddz = 2.0 / (u * u * u) - 2.0 / ((1.0 - u) * (1.0 - u) * (1.0 - u));
        (s, t, dz, ddz)
    }

    pub fn s(&self, u: f64) -> f64 {
        if u <= 0.0 {
            0.0
        } else if u >= 1.0 {
            1.0
        } else {
            Self::parts(u).0
        }
    }

    pub fn s1(&self, u: f64) -> f64 {
        if u <= 0.0 || u >= 1.0 {
            return 0.0;
        }
        let (s, t, dz, _) = Self::parts(u);
        let st = s * t;
        if st == 0.0 {
            0.0
        } else {
            -st * dz
        }
    }

    pub fn s2(&self, u: f64) -> f64 {
        if u <= 0.0 || u >= 1.0 {
            return 0.0;
        }
        let (s, t, dz, ddz) = Self::parts(u);
        let st = s * t;
        if st == 0.0 {
            return 0.0;
        }
        let s1 = -st * dz;
        -s1 * (t - s) * dz - st * ddz
    }

    /// `int_0^u S`, with `int_0^1 S = 1/2` by symmetry.
    pub fn integral(&self, u: f64) -> f64 {
        if u <= 0.0 {
            0.0
        } else if u >= 1.0 {
            0.5 + (u - 1.0)
        } else if u <= 0.5 {
            self.gl.integrate(0.0, u, |t| self.s(t))
        } else {
            0.5 - self.gl.integrate(u, 1.0, |t| self.s(t))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct CutoffHints {
    /// Slope of `phi` near zero.
    pub mu: f64,
    /// Initial `eps / delta`.
    pub eps_fraction: f64,
    pub max_halvings: usize,
}

impl Default for CutoffHints {
    fn default() -> Self {
        CutoffHints { mu: 1.0, eps_fraction: 0.125, max_halvings: 6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct CutoffParams {
    pub c: f64,
    pub c1: f64,
    pub alpha_g: f64,
    /// `T = 2c / (3 C1)`: above this level `L* = L`.
    pub t_glue: f64,
    /// Saturation point of `phi`, `T / C1`.
    pub t_phi: f64,
    pub eps: f64,
    /// Width of the `psi` transition `[eps, eps + width]`.
    pub width: f64,
    pub delta: f64,
    pub mu: f64,
    pub b: f64,
    pub kappa: f64,
    pub rho0: f64,
    pub halvings: usize,
    #[cfg_attr(feature = "serde", serde(skip))]
    pub ramp: SmoothRamp,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct InequalityCheck {
    pub name: String,
    /// Positive when satisfied.
    pub margin: f64,
}

impl CutoffParams {
    pub fn psi(&self, t: f64) -> f64 {
        if t < self.eps {
            0.0
        } else if t < self.eps + self.width {
            self.kappa * self.width * self.ramp.integral((t - self.eps) / self.width)
        } else {
            self.kappa * (0.5 * self.width + (t - self.eps - self.width))
        }
    }

    pub fn psi1(&self, t: f64) -> f64 {
        self.kappa * self.ramp.s((t - self.eps) / self.width)
    }

    pub fn psi2(&self, t: f64) -> f64 {
        self.kappa * self.ramp.s1((t - self.eps) / self.width) / self.width
    }

    pub fn phi(&self, t: f64) -> f64 {
        let span = self.t_phi - self.delta;
        if t <= self.delta {
            self.mu * (t - self.delta)
        } else if t < self.t_phi {
            self.mu * (t - self.delta) - self.mu * span * self.ramp.integral((t - self.delta) / span)
        } else {
            self.b
        }
    }

    pub fn phi1(&self, t: f64) -> f64 {
        self.mu * (1.0 - self.ramp.s((t - self.delta) / (self.t_phi - self.delta)))
    }

    pub fn phi2(&self, t: f64) -> f64 {
        let span = self.t_phi - self.delta;
        -self.mu * self.ramp.s1((t - self.delta) / span) / span
    }

    /// Analytic minimum of `phi''`.
    pub fn min_phi2(&self) -> f64 {
        -self.mu * self.ramp.max_slope / (self.t_phi - self.delta)
    }

    /// `L*(x, 0)`, the global minimum of `L*`.
    pub fn min_l_star(&self) -> f64 {
        (-self.mu * self.delta - self.b - self.rho0) / self.kappa
    }

    /// Lower bound on the fiber Hessian of the raw modification.
    pub fn convexity_bound(&self) -> f64 {
        (2.0 * self.mu).min(0.5 * self.kappa * self.alpha_g)
    }

    pub fn inequalities(&self) -> Vec<InequalityCheck> {
        let chk = |name: &str, margin: f64| InequalityCheck { name: String::from(name), margin };
        vec![
            chk("mu + rho0 / (delta - eps) > 0", self.mu + self.rho0 / (self.delta - self.eps)),
            chk("mu delta + b + rho0 > 0", self.mu * self.delta + self.b + self.rho0),
            chk("kappa >= mu", self.kappa - self.mu),
            chk("rho0 < 0", -self.rho0),
            chk("eps + width <= delta", self.delta - self.eps - self.width),
            chk(
                "2 kappa alpha + 4 T_phi min phi'' >= kappa alpha / 2",
                2.0 * self.kappa * self.alpha_g + 4.0 * self.t_phi * self.min_phi2()
                    - 0.5 * self.kappa * self.alpha_g
                    + 1e-12 * self.kappa,
            ),
        ]
    }

    pub fn feasible(&self) -> bool {
        self.inequalities().iter().all(|c| c.margin > 0.0)
    }
}

/// Chooses `delta`, `eps`, `kappa` and derives `b`, `rho0`.
///
/// `kappa` is the smallest value that keeps the fiber Hessian of `L_star`
/// above `kappa alpha / 2` in the saturated region; `eps` is halved until
/// both of the linear inequalities on `(mu, kappa, rho0)` hold.
pub fn build_cutoffs(c: f64, bounds: &BoundsEstimate, hints: &CutoffHints) -> Result<CutoffParams> {
    if !(c > 0.0) {
        return Err(Error::Precondition(String::from("critical level c must be positive")));
    }
    if !(bounds.alpha_g > 0.0) || !(bounds.c1 >= 1.0 - 1e-12) {
        return Err(Error::Precondition(String::from("bounds estimate is not valid")));
    }
    if !(hints.mu > 0.0) || !(hints.eps_fraction > 0.0 && hints.eps_fraction < 0.5) {
        return Err(Error::Precondition(String::from("cutoff hints out of range")));
    }
    let ramp = SmoothRamp::new();
    let c1 = bounds.c1.max(1.0);
    let t_glue = 2.0 * c / (3.0 * c1);
    let t_phi = t_glue / c1;
    let delta = 0.5 * t_phi;
    let mu = hints.mu;
    let span = t_phi - delta;
    let k_ratio = 8.0 * t_phi * ramp.max_slope / (3.0 * bounds.alpha_g * span);
    let kappa = mu * k_ratio.max(1.0);
    let b = 0.5 * mu * span;
    let mut eps = delta * hints.eps_fraction;
    let mut last = None;
    for halvings in 0..=hints.max_halvings {
        let width = eps;
        let rho0 = -kappa * (eps + 0.5 * width);
        let params = CutoffParams {
            c,
            c1,
            alpha_g: bounds.alpha_g,
            t_glue,
            t_phi,
            eps,
            width,
            delta,
            mu,
            b,
            kappa,
            rho0,
            halvings,
            ramp: ramp.clone(),
        };
        let failed: Vec<String> =
            params.inequalities().into_iter().filter(|c| !(c.margin > 0.0)).map(|c| c.name).collect();
        if failed.is_empty() {
            return Ok(params);
        }
        last = Some(failed.join("; "));
        eps *= 0.5;
    }
    Err(Error::InfeasibleParams { inequality: last.unwrap_or_default() })
}

/// `L_star` or its normalization `L*`.
#[derive(Debug, Clone)]
pub struct ModifiedLagrangian {
    pub model: MetricModel,
    pub params: CutoffParams,
    /// The normalized reference metric `g` with `|v|^2_x <= L`.
    pub reference: QuadForm,
    pub normalized: bool,
}

impl ModifiedLagrangian {
    pub fn new(model: &MetricModel, bounds: &BoundsEstimate, params: &CutoffParams) -> Self {
        ModifiedLagrangian {
            model: model.clone(),
            params: params.clone(),
            reference: bounds.normalized_reference(model),
            normalized: true,
        }
    }

    pub fn raw(mut self) -> Self {
        self.normalized = false;
        self
    }

    /// True where both cutoffs are saturated, so `L* = L` identically.
    pub fn saturated(&self, l: f64, r: f64) -> bool {
        l >= self.params.eps + self.params.width && r >= self.params.t_phi
    }
}

impl Lagrangian for ModifiedLagrangian {
    fn dim(&self) -> usize {
        self.model.dim
    }

    fn jet(&self, x: &[f64], v: &[f64], order: u8) -> Result<Jet> {
        let p = &self.params;
        let d = self.model.dim;
        let l0 = self.model.eval_l(x, v);
        let r = self.reference.jet(x, v, order);
        if self.saturated(l0, r.value) {
            let mut j = self.model.jet(x, v, order)?;
            if !self.normalized {
                scale_jet(&mut j, p.kappa);
                j.value += p.rho0;
            }
            return Ok(j);
        }
        // Below eps, psi and its derivatives vanish identically, so the jet of
        // L is never needed there (and may not exist at v = 0).
        let lj = if l0 >= p.eps { Some(self.model.jet(x, v, order)?) } else { None };
        let mut out = Jet::new(d, order);
        out.value = p.psi(l0) + p.phi(r.value) - p.b;
        if order >= 1 {
            let (p1, f1) = (if lj.is_some() { p.psi1(l0) } else { 0.0 }, p.phi1(r.value));
            for i in 0..d {
                let (lx, lv) = lj.as_ref().map(|j| (j.dx[i], j.dv[i])).unwrap_or((0.0, 0.0));
                out.dx[i] = p1 * lx + f1 * r.dx[i];
                out.dv[i] = p1 * lv + f1 * r.dv[i];
            }
            if order >= 2 {
                let p2 = if lj.is_some() { p.psi2(l0) } else { 0.0 };
                let f2 = p.phi2(r.value);
                for a in 0..d {
                    for b in 0..d {
                        let (lxx, lxv, lvv, lxa, lva, lxb, lvb) = match &lj {
                            Some(j) => (
                                j.dxx[(a, b)],
                                j.dxv[(a, b)],
                                j.dvv[(a, b)],
                                j.dx[a],
                                j.dv[a],
                                j.dx[b],
                                j.dv[b],
                            ),
                            None => (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
                        };
                        out.dxx[(a, b)] =
                            p1 * lxx + p2 * lxa * lxb + f1 * r.dxx[(a, b)] + f2 * r.dx[a] * r.dx[b];
                        out.dxv[(a, b)] =
                            p1 * lxv + p2 * lxa * lvb + f1 * r.dxv[(a, b)] + f2 * r.dx[a] * r.dv[b];
                        out.dvv[(a, b)] =
                            p1 * lvv + p2 * lva * lvb + f1 * r.dvv[(a, b)] + f2 * r.dv[a] * r.dv[b];
                    }
                }
            }
        }
        if self.normalized {
            out.value -= p.rho0;
            scale_jet(&mut out, 1.0 / p.kappa);
        }
        Ok(out)
    }

    fn tag(&self) -> LagrangianTag {
        if self.normalized {
            LagrangianTag::Normalized
        } else {
            LagrangianTag::Star
        }
    }
}

fn scale_jet(j: &mut Jet, s: f64) {
    j.value *= s;
    j.dx.iter_mut().chain(j.dv.iter_mut()).for_each(|c| *c *= s);
    for m in [&mut j.dxx, &mut j.dxv, &mut j.dvv] {
        for i in 0..m.rows() {
            m.row_mut(i).iter_mut().for_each(|c| *c *= s);
        }
    }
}

/// `L^tau = (1 - tau) L + tau L*`.
#[derive(Debug, Clone)]
pub struct TauLagrangian {
    pub model: MetricModel,
    pub star: Option<ModifiedLagrangian>,
    pub tau: f64,
}

impl TauLagrangian {
    /// Plain `L = F^2`.
    pub fn base(model: &MetricModel) -> Self {
        TauLagrangian { model: model.clone(), star: None, tau: 0.0 }
    }

    pub fn new(star: &ModifiedLagrangian, tau: f64) -> Self {
        TauLagrangian { model: star.model.clone(), star: Some(star.clone()), tau }
    }

    pub fn with_tau(&self, tau: f64) -> Self {
        TauLagrangian { tau, ..self.clone() }
    }

    fn star(&self) -> Result<&ModifiedLagrangian> {
        self.star
            .as_ref()
            .ok_or_else(|| Error::Precondition(String::from("tau > 0 needs cutoff parameters")))
    }

    /// `E^tau = d_v L^tau . v - L^tau`.
    pub fn energy(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        if v.iter().all(|&c| c == 0.0) {
            let min_star = if self.tau > 0.0 { self.star()?.value(x, v) } else { 0.0 };
            return Ok(-self.tau * min_star);
        }
        let j = self.jet(x, v, 1)?;
        Ok(dot(&j.dv, v) - j.value)
    }

    /// Fiber coordinates of `d_v L^tau(x, v)` in the tangent basis `basis`.
    pub fn legendre(&self, basis: &Mat, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        if self.tau >= 1.0 || !v.iter().all(|&c| c == 0.0) {
            let j = self.jet(x, v, 1)?;
            Ok(basis.tmatvec(&j.dv))
        } else {
            // d_v L vanishes at the origin for every member of the family
            Ok(vec![0.0; basis.cols()])
        }
    }

    /// Solves `d_v L^tau(x, v) = w` for tangent `v` by minimizing the convex
    /// fiber function `L^tau(x, v) - w . v`.
    pub fn legendre_inverse(&self, basis: &Mat, x: &[f64], w: &[f64], alpha_lower: f64) -> Result<Vec<f64>> {
        let wn = norm(w);
        if wn == 0.0 {
            return Ok(vec![0.0; basis.rows()]);
        }
        let amb = |c: &[f64]| basis.matvec(c);
        let phi = |c: &[f64]| -> f64 { self.value(x, &amb(c)) - dot(w, c) };
        let grad_hess = |c: &[f64]| -> Result<(Vec<f64>, Mat)> {
            let j = self.jet(x, &amb(c), 2)?;
            let g: Vec<f64> = basis.tmatvec(&j.dv).iter().zip(w).map(|(a, b)| a - b).collect();
            Ok((g, restrict(&j.dvv, basis)))
        };
        // Radial presolve along w: bracket the root of the directional
        // derivative, which is increasing by convexity.
        let dir: Vec<f64> = w.iter().map(|c| c / wn).collect();
        let slope = |r: f64| -> Result<f64> {
            let c: Vec<f64> = dir.iter().map(|d| r * d).collect();
            let j = self.jet(x, &amb(&c), 1)?;
            Ok(dot(&basis.tmatvec(&j.dv), &dir) - wn)
        };
        let mut hi = wn / alpha_lower.max(1e-12);
        let mut expand = 0;
        while slope(hi)? < 0.0 {
            hi *= 2.0;
            expand += 1;
            if expand > 60 {
                return Err(Error::NewtonDivergence { detail: format!("radial bracket unbounded at {hi:e}") });
            }
        }
        let mut lo = 0.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let s = if mid > 0.0 || self.tau >= 1.0 { slope(mid)? } else { -wn };
            if s < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-3 * hi {
                break;
            }
        }
        let mut c: Vec<f64> = dir.iter().map(|d| 0.5 * (lo + hi) * d).collect();
        let scale = 1.0 + wn;
        for it in 0..100 {
            let (g, h) = grad_hess(&c)?;
            let gn = norm(&g);
            if gn <= 1e-15 * scale {
                return Ok(amb(&c));
            }
            let step = lu_solve(&h, &g)?;
            let f0 = phi(&c);
            let slope0 = -dot(&g, &step);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let trial: Vec<f64> = c.iter().zip(&step).map(|(a, s)| a - t * s).collect();
                let zero_crossing = self.tau < 1.0 && norm(&trial) == 0.0;
                if !zero_crossing && phi(&trial) <= f0 + 1e-4 * t * slope0 + 1e-15 * f0.abs().max(1.0) {
                    c = trial;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            let sn = norm(&step) * t;
            if !accepted || sn <= 1e-16 * (1.0 + norm(&c)) {
                if gn <= 1e-9 * scale {
                    return Ok(amb(&c));
                }
                return Err(Error::NewtonDivergence {
                    detail: format!("stalled at iteration {it}, gradient {gn:e}, bracket [{lo:e}, {hi:e}]"),
                });
            }
        }
        Err(Error::NewtonDivergence { detail: format!("no convergence, bracket [{lo:e}, {hi:e}]") })
    }
}

impl Lagrangian for TauLagrangian {
    fn dim(&self) -> usize {
        self.model.dim
    }

    fn jet(&self, x: &[f64], v: &[f64], order: u8) -> Result<Jet> {
        if self.tau <= 0.0 {
            self.model.jet(x, v, order)
        } else if self.tau >= 1.0 {
            self.star()?.jet(x, v, order)
        } else {
            let a = self.model.jet(x, v, order)?;
            let b = self.star()?.jet(x, v, order)?;
            Ok(a.combine(1.0 - self.tau, &b, self.tau))
        }
    }

    fn tag(&self) -> LagrangianTag {
        if self.tau <= 0.0 {
            LagrangianTag::Base
        } else if self.tau >= 1.0 {
            LagrangianTag::Normalized
        } else {
            LagrangianTag::Tau(self.tau)
        }
    }

    fn value(&self, x: &[f64], v: &[f64]) -> f64 {
        let l = self.model.eval_l(x, v);
        if self.tau <= 0.0 {
            return l;
        }
        let s = self.star.as_ref().map(|s| s.value(x, v)).unwrap_or(f64::NAN);
        if self.tau >= 1.0 {
            s
        } else {
            (1.0 - self.tau) * l + self.tau * s
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ModificationReport {
    pub samples: usize,
    /// Max `|L* - L|` where `L >= T`.
    pub gluing_defect: f64,
    pub gluing_samples: usize,
    /// Max `L* - L` over all samples (should be `<= 0`).
    pub ordering_excess: f64,
    /// Smallest `L*(x, t v) - L*(x, 0)` over radial grids with `t > 0`.
    pub radial_min_gap: f64,
    /// Whether `t -> L*(x, t v)` was strictly increasing on every radial grid.
    pub radial_monotone: bool,
    pub min_value_error: f64,
    /// Smallest ratio of the raw modification's fiber Hessian to `g`.
    pub min_star_hessian: f64,
    pub convexity_bound: f64,
    /// `alpha*_g` for the normalized `L*`: smallest sampled fiber Hessian ratio.
    pub alpha_star: f64,
    pub beta_star: f64,
    /// Fitted `C2 |v|^2 - C4 <= L* <= C3 (|v|^2 + 1)`.
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub reversibility_defect: f64,
}

impl ModificationReport {
    pub fn passed(&self) -> bool {
        self.gluing_defect == 0.0
            && self.ordering_excess <= 1e-12
            && self.radial_monotone
            && self.radial_min_gap > 0.0
            && self.min_value_error <= 1e-12
            && self.min_star_hessian >= self.convexity_bound * (1.0 - 1e-6)
    }
}

/// Sampled verification of the modified Lagrangian on `manifold`.
///
/// Speeds are drawn so that a third of the samples land in the gluing band
/// between `eps` and `T`, and every tenth sample sits at `v = 0`.
pub fn verify_modification(
    star: &ModifiedLagrangian,
    manifold: &AmbientManifold,
    samples: usize,
    radial_points: usize,
    seed: u64,
) -> Result<ModificationReport> {
    let p = &star.params;
    let raw = star.clone().raw();
    let mut rng = sampling::rng(seed);
    let mut rep = ModificationReport {
        samples,
        gluing_defect: 0.0,
        gluing_samples: 0,
        ordering_excess: f64::NEG_INFINITY,
        radial_min_gap: f64::INFINITY,
        radial_monotone: true,
        min_value_error: 0.0,
        min_star_hessian: f64::INFINITY,
        convexity_bound: p.convexity_bound(),
        alpha_star: f64::INFINITY,
        beta_star: 0.0,
        c2: f64::INFINITY,
        c3: 0.0,
        c4: 0.0,
        reversibility_defect: 0.0,
    };
    let min_star = p.min_l_star();
    let mut growth = Vec::with_capacity(samples);
    for s in 0..samples {
        let x = sample_point(manifold, &mut rng);
        let u = sample_tangent_dir(manifold, &x, &mut rng);
        let un = star.reference.norm2(&x, &u).sqrt();
        let u: Vec<f64> = u.iter().map(|c| c / un).collect();
        // |v|^2 in one of three bands: below eps, the gluing band, far out
        let r2 = match s % 3 {
            _ if s % 10 == 0 => 0.0,
            0 => sampling::uniform(&mut rng, 0.0, p.eps + p.width),
            1 => sampling::uniform(&mut rng, p.eps, 1.5 * p.t_glue),
            _ => sampling::uniform(&mut rng, p.t_glue, 50.0 * p.t_glue.max(1.0)),
        };
        let v: Vec<f64> = u.iter().map(|c| c * r2.sqrt()).collect();
        let l = star.model.eval_l(&x, &v);
        let ls = star.value(&x, &v);
        if l >= p.t_glue {
            rep.gluing_samples += 1;
            rep.gluing_defect = rep.gluing_defect.max((ls - l).abs());
        }
        rep.ordering_excess = rep.ordering_excess.max(ls - l);
        let vn2 = star.reference.norm2(&x, &v);
        growth.push((vn2, ls));
        let neg: Vec<f64> = v.iter().map(|c| -c).collect();
        rep.reversibility_defect = rep.reversibility_defect.max((star.value(&x, &neg) - ls).abs());
        let basis = manifold.tangent_basis(&x);
        let gref = restrict(&star.reference.matrix(&x), &basis);
        let jr = raw.jet(&x, &v, 2)?;
        let jn = star.jet(&x, &v, 2)?;
        let er = generalized_eigen(&restrict(&jr.dvv, &basis), &gref, false)?;
        let en = generalized_eigen(&restrict(&jn.dvv, &basis), &gref, false)?;
        rep.min_star_hessian = rep.min_star_hessian.min(er.values[0]);
        rep.alpha_star = rep.alpha_star.min(en.values[0]);
        rep.beta_star = rep.beta_star.max(*en.values.last().unwrap());
        if s < samples.min(100) {
            let z = star.value(&x, &vec![0.0; x.len()]);
            rep.min_value_error = rep.min_value_error.max((z - min_star).abs());
            let mut prev = z;
            for k in 1..=radial_points {
                let t = 3.0 * p.t_glue.sqrt() * k as f64 / radial_points as f64;
                let vt: Vec<f64> = u.iter().map(|c| c * t).collect();
                let val = star.value(&x, &vt);
                if !(val > prev) {
                    rep.radial_monotone = false;
                }
                rep.radial_min_gap = rep.radial_min_gap.min(val - z);
                prev = val;
            }
        }
    }
    // quadratic growth constants: C3 from the sup of L*/(|v|^2+1); C2 from
    // the sup-free fit C2 = inf over fast samples of L*/|v|^2, then C4 makes
    // the lower bound hold everywhere
    for &(vn2, ls) in &growth {
        rep.c3 = rep.c3.max(ls / (vn2 + 1.0));
        if vn2 >= p.t_glue {
            rep.c2 = rep.c2.min(ls / vn2);
        }
    }
    if !rep.c2.is_finite() {
        rep.c2 = 1.0;
    }
    for &(vn2, ls) in &growth {
        rep.c4 = rep.c4.max(rep.c2 * vn2 - ls);
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct VelocityBoundReport {
    pub level: f64,
    pub taus: Vec<f64>,
    /// `C'` per tau.
    pub per_tau: Vec<f64>,
    pub c_prime: f64,
    /// Every sampled ray had `E^tau` increasing with speed.
    pub monotone: bool,
}

/// Empirical `C'` with `E^tau(x, v) <= C => |v|_x <= C'`.
pub fn energy_velocity_bound(
    star: &ModifiedLagrangian,
    manifold: &AmbientManifold,
    level: f64,
    taus: &[f64],
    rays: usize,
    seed: u64,
) -> Result<VelocityBoundReport> {
    let mut per_tau = Vec::with_capacity(taus.len());
    let mut monotone = true;
    for &tau in taus {
        let lag = TauLagrangian::new(star, tau);
        let mut rng = sampling::rng(seed);
        let mut worst = 0.0f64;
        for _ in 0..rays {
            let x = sample_point(manifold, &mut rng);
            let u = sample_tangent_dir(manifold, &x, &mut rng);
            let un = star.reference.norm2(&x, &u).sqrt();
            let u: Vec<f64> = u.iter().map(|c| c / un).collect();
            let e = |r: f64| -> Result<f64> {
                let v: Vec<f64> = u.iter().map(|c| c * r).collect();
                lag.energy(&x, &v)
            };
            // monotone escape on a coarse grid first
            let mut prev = e(1e-3)?;
            for k in 1..=20 {
                let val = e(1e-3 + k as f64 * 0.25 * (level + 1.0).sqrt())?;
                if !(val > prev) {
                    monotone = false;
                }
                prev = val;
            }
            let mut hi = 1e-3;
            while e(hi)? <= level {
                hi *= 2.0;
                if hi > 1e12 {
                    return Err(Error::NewtonDivergence { detail: String::from("energy does not grow") });
                }
            }
            let mut lo = 0.0;
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if e(mid)? <= level {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            worst = worst.max(lo);
        }
        per_tau.push(worst);
    }
    let c_prime = per_tau.iter().fold(0.0f64, |m, c| m.max(*c));
    Ok(VelocityBoundReport { level, taus: taus.to_vec(), per_tau, c_prime, monotone })
}

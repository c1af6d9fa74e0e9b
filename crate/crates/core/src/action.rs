//! The discrete energy `A(gamma) = h sum L(x_i, v_i)` and its derivatives.
//!
//! Velocities are forward differences, so the gradient and Hessian below are
//! exact derivatives of the discrete functional. The continuous Sobolev
//! gradients given by the exponential-kernel formulas are evaluated on the
//! piecewise-linear interpolant and serve as cross-checks.

use crate::error::{Error, Result};
use crate::finsler::{Jet, Lagrangian, LagrangianTag, MetricModel};
use crate::linalg::{dot, norm, Cholesky, Mat};
use crate::loopspace::{sobolev_gram, sobolev_inner, BoundaryCondition, DiscreteCurve, VariationField};
use crate::manifold::ManifoldKind;
use crate::prelude::*;
use crate::quad::GaussLegendre;
use crate::sampling;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ActionValue {
    pub value: f64,
    pub contributions: Vec<f64>,
}

fn interval_jets(curve: &DiscreteCurve, lag: &dyn Lagrangian, order: u8) -> Result<Vec<Jet>> {
    (0..curve.intervals()).map(|i| lag.jet(curve.node(i), &curve.velocity(i), order)).collect()
}

pub fn action(curve: &DiscreteCurve, lag: &dyn Lagrangian) -> Result<ActionValue> {
    let h = curve.h();
    let mut contributions = Vec::with_capacity(curve.intervals());
    for i in 0..curve.intervals() {
        let v = curve.velocity(i);
        let val = lag.value(curve.node(i), &v);
        if !val.is_finite() {
            // surface the underlying error if there is one
            lag.jet(curve.node(i), &v, 0)?;
            return Err(Error::Precondition(format!("Lagrangian is not finite on interval {i}")));
        }
        contributions.push(h * val);
    }
    let value = contributions.iter().sum();
    Ok(ActionValue { value, contributions })
}

/// Smallest `L(x_i, v_i)` over the intervals.
pub fn min_interval_l(curve: &DiscreteCurve, model: &MetricModel) -> f64 {
    (0..curve.intervals())
        .map(|i| model.eval_l(curve.node(i), &curve.velocity(i)))
        .fold(f64::INFINITY, f64::min)
}

fn ambient_gradient_from(curve: &DiscreteCurve, jets: &[Jet]) -> Vec<f64> {
    let d = curve.dim();
    let h = curve.h();
    let mut g = vec![0.0; curve.len() * d];
    for (i, j) in jets.iter().enumerate() {
        let (k, wrap) = curve.next_index(i);
        let pk = match (curve.monodromy(), wrap) {
            (Some(e), true) if !e.is_identity() => e.apply(&j.dv),
            _ => j.dv.clone(),
        };
        for c in 0..d {
            g[i * d + c] += h * j.dx[c] - j.dv[c];
            g[k * d + c] += pk[c];
        }
    }
    g
}

/// Gradient of the discrete action with respect to the ambient node
/// coordinates, `N d` entries, before any constraint is applied.
pub fn ambient_gradient(curve: &DiscreteCurve, lag: &dyn Lagrangian) -> Result<Vec<f64>> {
    Ok(ambient_gradient_from(curve, &interval_jets(curve, lag, 1)?))
}

/// Gradient in admissible coordinates; the `l^2` gradient of the chart map
/// `c -> A(R(x + B c))` at `c = 0`.
pub fn euclidean_gradient(curve: &DiscreteCurve, lag: &dyn Lagrangian) -> Result<Vec<f64>> {
    Ok(curve.restrict_covector(&ambient_gradient(curve, lag)?))
}

/// Gradient of `c -> A(R(x + B c))` at arbitrary `c`, in the bases of `base`.
pub fn chart_gradient(base: &DiscreteCurve, c: &[f64], lag: &dyn Lagrangian) -> Result<(Vec<f64>, DiscreteCurve)> {
    let moved = base.perturb_in_chart(c, 1.0)?;
    let g = ambient_gradient(&moved, lag)?;
    let ys = base.chart_points(c, 1.0);
    let d = base.dim();
    let mut out = Vec::with_capacity(base.dof());
    for (i, y) in ys.iter().enumerate() {
        let b = base.basis(i);
        if b.cols() == 0 {
            continue;
        }
        let jg = base.manifold().retraction_jacobian(y, &g[i * d..(i + 1) * d]);
        out.extend(b.tmatvec(&jg));
    }
    Ok((out, moved))
}

#[derive(Debug, Clone)]
pub struct SobolevGradient {
    /// `G^{-1} g` in admissible coordinates.
    pub coords: Vec<f64>,
    pub field: VariationField,
    /// `<grad, grad>_1^{1/2}`, the dual norm of `dA`.
    pub norm: f64,
    pub euclidean: Vec<f64>,
}

pub fn sobolev_gradient_with(curve: &DiscreteCurve, euclidean: Vec<f64>, chol: &Cholesky) -> SobolevGradient {
    let coords = chol.solve(&euclidean);
    let norm = dot(&coords, &euclidean).max(0.0).sqrt();
    SobolevGradient { field: curve.to_field(&coords), coords, norm, euclidean }
}

/// Riesz representative of `dA` in `<.,.>_{1,m}`.
pub fn sobolev_gradient(curve: &DiscreteCurve, lag: &dyn Lagrangian, m: usize) -> Result<SobolevGradient> {
    let g = euclidean_gradient(curve, lag)?;
    let chol = Cholesky::new(&sobolev_gram(curve, m)).map_err(|_| Error::GramSolveFailure)?;
    Ok(sobolev_gradient_with(curve, g, &chol))
}

/// `(p_i - p_{i-1}) / h - q_i`, tangent-projected, per node. End nodes of
/// open curves are reported as zero.
pub fn euler_lagrange_residual(curve: &DiscreteCurve, lag: &dyn Lagrangian) -> Result<Vec<Vec<f64>>> {
    let g = ambient_gradient(curve, lag)?;
    let d = curve.dim();
    let inv_h = curve.intervals() as f64;
    Ok((0..curve.len())
        .map(|i| {
            if !curve.is_periodic() && (i == 0 || i + 1 == curve.len()) {
                return vec![0.0; d];
            }
            let r: Vec<f64> = g[i * d..(i + 1) * d].iter().map(|x| -x * inv_h).collect();
            curve.manifold().tangent_project(curve.node(i), &r)
        })
        .collect())
}

pub fn max_el_residual(curve: &DiscreteCurve, lag: &dyn Lagrangian) -> Result<f64> {
    Ok(euler_lagrange_residual(curve, lag)?.iter().map(|r| norm(r)).fold(0.0, f64::max))
}

/// `max_u |g^F(gamma, gamma dot)[u, gamma dot]|` over the constraint bases at
/// both ends, using `g^F(x, v)[u, v] = (1/2) d_v L(x, v) . u`.
pub fn natural_bc_residual(curve: &DiscreteCurve, model: &MetricModel) -> Result<(f64, f64)> {
    let (start, end) = match curve.bc() {
        BoundaryCondition::Submanifold { start, end } => (start, end),
        BoundaryCondition::Fixed { .. } => return Ok((0.0, 0.0)),
        BoundaryCondition::Periodic(_) => return Err(Error::Precondition(String::from("open curve required"))),
    };
    let n = curve.len();
    let at = |node: usize, interval: usize, basis: &Mat| -> Result<f64> {
        if basis.cols() == 0 {
            return Ok(0.0);
        }
        let p = model.dl_dv(curve.node(node), &curve.velocity(interval))?;
        Ok(basis.tmatvec(&p).iter().map(|x| (0.5 * x).abs()).fold(0.0, f64::max))
    };
    Ok((at(0, 0, &start.basis)?, at(n - 1, n - 2, &end.basis)?))
}

#[derive(Debug, Clone)]
pub struct HessianOperator {
    pub matrix: Mat,
    pub tag: LagrangianTag,
    /// `max |H - H^T| / max |H|` before symmetrization.
    pub asymmetry: f64,
}

/// Second derivative of `c -> A(R(x + B c))` at `c = 0`.
pub fn hessian(curve: &DiscreteCurve, lag: &dyn Lagrangian) -> Result<HessianOperator> {
    let jets = interval_jets(curve, lag, 2)?;
    let d = curve.dim();
    let h = curve.h();
    let n = curve.dof();
    let mut hm = Mat::zeros(n, n);
    let e = curve.monodromy().filter(|e| !e.is_identity()).map(|e| e.matrix());
    let add_block = |hm: &mut Mat, i: usize, j: usize, blk: &Mat, right: &Mat| {
        // B_i^T blk right
        let bi = curve.basis(i);
        if bi.cols() == 0 || right.cols() == 0 {
            return;
        }
        let r = bi.transpose().matmul(&blk.matmul(right));
        let (oi, oj) = (curve.offset(i), curve.offset(j));
        for a in 0..r.rows() {
            for b in 0..r.cols() {
                hm[(oi + a, oj + b)] += r[(a, b)];
            }
        }
    };
    for (i, jet) in jets.iter().enumerate() {
        let (k, wrap) = curve.next_index(i);
        let bk = match (&e, wrap) {
            (Some(em), true) => em.matmul(curve.basis(k)),
            _ => curve.basis(k).clone(),
        };
        let lxv = &jet.dxv;
        let lxv_t = lxv.transpose();
        let aa = Mat::from_fn(d, d, |a, b| {
            h * jet.dxx[(a, b)] - lxv[(a, b)] - lxv[(b, a)] + jet.dvv[(a, b)] / h
        });
        let ab = Mat::from_fn(d, d, |a, b| lxv[(a, b)] - jet.dvv[(a, b)] / h);
        let ba = Mat::from_fn(d, d, |a, b| lxv_t[(a, b)] - jet.dvv[(a, b)] / h);
        let bb = Mat::from_fn(d, d, |a, b| jet.dvv[(a, b)] / h);
        let bi = curve.basis(i).clone();
        add_block(&mut hm, i, i, &aa, &bi);
        add_block(&mut hm, i, k, &ab, &bk);
        // rows of node k carry the monodromy on the left as well
        let bk_t = bk.transpose();
        if bk.cols() > 0 && bi.cols() > 0 {
            let r1 = bk_t.matmul(&ba.matmul(&bi));
            let r2 = bk_t.matmul(&bb.matmul(&bk));
            let (oi, ok) = (curve.offset(i), curve.offset(k));
            for a in 0..r1.rows() {
                for b in 0..r1.cols() {
                    hm[(ok + a, oi + b)] += r1[(a, b)];
                }
            }
            for a in 0..r2.rows() {
                for b in 0..r2.cols() {
                    hm[(ok + a, ok + b)] += r2[(a, b)];
                }
            }
        } else if bk.cols() > 0 {
            let r2 = bk_t.matmul(&bb.matmul(&bk));
            let ok = curve.offset(k);
            for a in 0..r2.rows() {
                for b in 0..r2.cols() {
                    hm[(ok + a, ok + b)] += r2[(a, b)];
                }
            }
        }
    }
    if curve.manifold().kind() == ManifoldKind::UnitSphere {
        let g = ambient_gradient_from(curve, &jets);
        for i in 0..curve.len() {
            let c = curve.manifold().retraction_curvature(curve.node(i), &g[i * d..(i + 1) * d]);
            let o = curve.offset(i);
            for a in 0..curve.basis(i).cols() {
                hm[(o + a, o + a)] += c;
            }
        }
    }
    let scale = hm.max_abs().max(f64::MIN_POSITIVE);
    let asymmetry = hm.asymmetry() / scale;
    hm.symmetrize();
    Ok(HessianOperator { matrix: hm, tag: lag.tag(), asymmetry })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct GradientCheck {
    /// Max `|<g, eta> - central difference|` over the sampled directions.
    pub fd_error: f64,
    /// Max `|<grad, eta>_1 - dA[eta]|`.
    pub riesz_residual: f64,
    /// `|<grad, grad>_1 - dA[grad]|`.
    pub dual_norm_residual: f64,
    pub directions: usize,
    pub fd_step: f64,
}

/// Finite-difference and Riesz checks of the discrete gradients along
/// random admissible directions with unit `l^2` coordinates.
pub fn gradient_check(
    curve: &DiscreteCurve,
    lag: &dyn Lagrangian,
    m: usize,
    directions: usize,
    seed: u64,
) -> Result<GradientCheck> {
    let s = 1e-5;
    let grad = sobolev_gradient(curve, lag, m)?;
    let mut rng = sampling::rng(seed);
    let mut fd_error = 0.0f64;
    let mut riesz = 0.0f64;
    for _ in 0..directions {
        let eta = sampling::unit_vec(&mut rng, curve.dof());
        let ap = action(&curve.perturb(&eta, s)?, lag)?.value;
        let am = action(&curve.perturb(&eta, -s)?, lag)?.value;
        let da = dot(&grad.euclidean, &eta);
        fd_error = fd_error.max((da - (ap - am) / (2.0 * s)).abs());
        let ip = sobolev_inner(&grad.field, &curve.to_field(&eta), curve, m);
        riesz = riesz.max((ip - da).abs());
    }
    let dual = (sobolev_inner(&grad.field, &grad.field, curve, m) - dot(&grad.euclidean, &grad.coords)).abs();
    Ok(GradientCheck { fd_error, riesz_residual: riesz, dual_norm_residual: dual, directions, fd_step: s })
}

/// Samples of `X = d_x L` and `V = d_v L` along the piecewise-linear
/// interpolant, with the running integral `Q = int_0^t V` at every sample.
struct InterpolantSamples {
    /// Sample times, interval-major.
    t: Vec<f64>,
    w: Vec<f64>,
    x: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    /// `Q` at the nodes, including `Q(1)` at the end.
    q_nodes: Vec<Vec<f64>>,
}

fn sample_interpolant(curve: &DiscreteCurve, lag: &dyn Lagrangian, gl: &GaussLegendre) -> Result<InterpolantSamples> {
    let d = curve.dim();
    let h = curve.h();
    let mut out = InterpolantSamples { t: vec![], w: vec![], x: vec![], q: vec![], q_nodes: vec![vec![0.0; d]] };
    for i in 0..curve.intervals() {
        let p = curve.node(i);
        let v = curve.velocity(i);
        let t0 = i as f64 * h;
        let point = |s: f64| -> Vec<f64> { p.iter().zip(&v).map(|(a, b)| a + s * b).collect() };
        let q0 = out.q_nodes[i].clone();
        let mut qn = q0.clone();
        for (&u, &wq) in gl.nodes.iter().zip(&gl.weights) {
            let s = u * h;
            let jet = lag.jet(&point(s), &v, 1)?;
            // nested rule for int_{t_i}^{t_i + s} V
            let mut qi = q0.clone();
            for (&r, &wr) in gl.nodes.iter().zip(&gl.weights) {
                let jr = lag.jet(&point(r * s), &v, 1)?;
                for c in 0..d {
                    qi[c] += s * wr * jr.dv[c];
                }
            }
            for c in 0..d {
                qn[c] += h * wq * jet.dv[c];
            }
            out.t.push(t0 + s);
            out.w.push(h * wq);
            out.x.push(jet.dx);
            out.q.push(qi);
        }
        out.q_nodes.push(qn);
    }
    Ok(out)
}

/// Periodic Sobolev gradient from the exponential-kernel representation.
///
/// With `P = int_0^1 V` and `G_j(t) = Q_j(t) - P_j a_j(t)`, where `a_j = t`
/// for a `+1` monodromy sign and `1/2` for `-1`, the gradient is
/// `G + (1/2m) int e^{-m|t-s|} (X - m^2 G)(s) ds` over the real line. The
/// infinite integrals fold onto one period with the factor
/// `(1 - S e^{-m})^{-1}`. Flat manifolds only; values are returned at the
/// nodes.
pub fn kernel_gradient_periodic(curve: &DiscreteCurve, lag: &dyn Lagrangian, m: usize) -> Result<VariationField> {
    let e = curve.monodromy().ok_or(Error::NotPeriodic)?;
    if !curve.manifold().is_flat() {
        return Err(Error::UnsupportedMonodromy);
    }
    let d = curve.dim();
    let n = curve.len();
    let mf = m as f64;
    let gl = GaussLegendre::new(4);
    let smp = sample_interpolant(curve, lag, &gl)?;
    let p_total = smp.q_nodes[n].clone();
    let signs = e.signs();
    let a = |c: usize, t: f64| if signs[c] > 0.0 { t } else { 0.5 };
    let g_at = |q: &[f64], t: f64| -> Vec<f64> { (0..d).map(|c| q[c] - p_total[c] * a(c, t)).collect() };
    let f: Vec<Vec<f64>> = smp
        .t
        .iter()
        .zip(&smp.x)
        .zip(&smp.q)
        .map(|((&t, x), q)| {
            let g = g_at(q, t);
            (0..d).map(|c| x[c] - mf * mf * g[c]).collect()
        })
        .collect();
    let mut values = Vec::with_capacity(n * d);
    for i in 0..n {
        let ti = i as f64 / n as f64;
        let g = g_at(&smp.q_nodes[i], ti);
        for c in 0..d {
            let s = signs[c];
            let fold = 1.0 / (1.0 - s * (-mf).exp());
            let mut acc = 0.0;
            for (k, &t) in smp.t.iter().enumerate() {
                let (right, left) = if t >= ti {
                    ((mf * (ti - t)).exp(), s * (mf * (t - 1.0 - ti)).exp())
                } else {
                    (s * (mf * (ti - t - 1.0)).exp(), (mf * (t - ti)).exp())
                };
                acc += smp.w[k] * (right + left) * f[k][c];
            }
            values.push(g[c] + fold * acc / (2.0 * mf));
        }
    }
    Ok(VariationField { dim: d, values })
}

/// `x(t) = -(1/2m) int e^{-m|t-s|} f(s) ds`, the periodic (`sign = 1`) or
/// antiperiodic (`sign = -1`) solution of `x'' - m^2 x = f`.
pub fn periodic_resolvent(f: impl Fn(f64) -> f64, m: f64, sign: f64, t: f64, intervals: usize) -> f64 {
    let gl = GaussLegendre::new(8);
    let fold = 1.0 / (1.0 - sign * (-m).exp());
    let mut acc = 0.0;
    // integrate over [t, t + 1] and [t - 1, t], each split into intervals
    let h = 1.0 / intervals as f64;
    for k in 0..intervals {
        let a = t + k as f64 * h;
        acc += gl.integrate(a, a + h, |s| (m * (t - s)).exp() * f(s));
        let b = t - (k + 1) as f64 * h;
        acc += gl.integrate(b, b + h, |s| (m * (s - t)).exp() * f(s));
    }
    -fold * acc / (2.0 * m)
}

/// Sobolev gradient of a fixed-end path from the boundary-value formula.
///
/// `G = Q - Q(1) t` vanishes at both ends and `z = grad - G` solves
/// `z'' - m^2 z = m^2 G - X` with `z(0) = z(1) = 0`, which is written with
/// the `sinh` kernel plus a multiple of `sinh(m t)`.
pub fn kernel_gradient_path(curve: &DiscreteCurve, lag: &dyn Lagrangian, m: usize) -> Result<VariationField> {
    if !matches!(curve.bc(), BoundaryCondition::Fixed { .. }) {
        return Err(Error::Precondition(String::from("fixed endpoints required")));
    }
    if !curve.manifold().is_flat() {
        return Err(Error::Precondition(String::from("flat manifold required")));
    }
    let d = curve.dim();
    let n = curve.len();
    let mf = m as f64;
    let gl = GaussLegendre::new(4);
    let smp = sample_interpolant(curve, lag, &gl)?;
    let c0 = smp.q_nodes[n - 1].clone();
    let f: Vec<Vec<f64>> = smp
        .t
        .iter()
        .zip(&smp.x)
        .zip(&smp.q)
        .map(|((&t, x), q)| (0..d).map(|c| mf * mf * (q[c] - c0[c] * t) - x[c]).collect())
        .collect();
    // y(t) = (1/m) int_0^t sinh(m (t - s)) f(s) ds
    let y_at = |t: f64, c: usize| -> f64 {
        let mut acc = 0.0;
        for (k, &s) in smp.t.iter().enumerate() {
            if s < t {
                acc += smp.w[k] * (mf * (t - s)).sinh() * f[k][c];
            }
        }
        acc / mf
    };
    let y1: Vec<f64> = (0..d).map(|c| y_at(1.0, c)).collect();
    let h = curve.h();
    let mut values = Vec::with_capacity(n * d);
    for i in 0..n {
        let t = i as f64 * h;
        for c in 0..d {
            if i == 0 || i + 1 == n {
                values.push(0.0);
                continue;
            }
            let g = smp.q_nodes[i][c] - c0[c] * t;
            let z = y_at(t, c) - y1[c] * (mf * t).sinh() / mf.sinh();
            values.push(g + z);
        }
    }
    Ok(VariationField { dim: d, values })
}

/// Max nodal difference between two fields relative to the max norm of `b`.
pub fn relative_field_error(a: &VariationField, b: &VariationField) -> f64 {
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for i in 0..b.len() {
        num = num.max(norm(&crate::linalg::sub(a.at(i), b.at(i))));
        den = den.max(norm(b.at(i)));
    }
    num / den.max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finsler::{FourierTerm, QuadForm, ScalarField};
    use crate::loopspace::{iterate, Monodromy};
    use crate::manifold::AmbientManifold;
    use crate::regularize::{build_cutoffs, CutoffHints, ModifiedLagrangian, TauLagrangian};
    use core::f64::consts::{PI, TAU};

    fn torus() -> AmbientManifold {
        AmbientManifold::flat_torus(&[1.0, 1.0]).unwrap()
    }

    fn conformal() -> MetricModel {
        let factor = ScalarField {
            offset: 1.0,
            terms: vec![
                FourierTerm { amplitude: 0.3, wavevector: vec![TAU, 0.0], phase: 0.0 },
                FourierTerm { amplitude: 0.2, wavevector: vec![0.0, TAU], phase: 0.4 },
            ],
        };
        MetricModel::riemannian(QuadForm { base: Mat::identity(2), factor, scale: 1.0 })
    }

    fn wavy_loop(n: usize, seed: u64) -> DiscreteCurve {
        let mut rng = sampling::rng(seed);
        let a = sampling::uniform_vec(&mut rng, 4, -0.08, 0.08);
        DiscreteCurve::from_fn(&torus(), BoundaryCondition::periodic(2), n, move |t| {
            vec![t + a[0] * (TAU * t).sin() + a[1] * (2.0 * TAU * t).cos(), 0.3 + a[2] * (TAU * t).cos() + a[3] * (2.0 * TAU * t).sin()]
        })
        .unwrap_or_else(|_| unreachable!())
    }

    fn wavy_path(n: usize, seed: u64) -> DiscreteCurve {
        let mut rng = sampling::rng(seed);
        let a = sampling::uniform_vec(&mut rng, 3, -0.2, 0.2);
        let e = AmbientManifold::euclidean(2);
        let bc = BoundaryCondition::Fixed { start: vec![0.0, 0.0], end: vec![1.0, 0.4] };
        DiscreteCurve::from_fn(&e, bc, n, move |t| {
            vec![t + a[0] * (PI * t).sin(), 0.4 * t + a[1] * (2.0 * PI * t).sin() + a[2] * (PI * t).sin()]
        })
        .unwrap()
    }

    fn equator(n: usize) -> DiscreteCurve {
        DiscreteCurve::from_fn(&AmbientManifold::unit_sphere(3), BoundaryCondition::periodic(3), n, |t| {
            vec![(TAU * t).cos(), (TAU * t).sin(), 0.0]
        })
        .unwrap()
    }

    #[test]
    fn action_examples() {
        let e = AmbientManifold::euclidean(2);
        let seg = DiscreteCurve::from_fn(
            &e,
            BoundaryCondition::Fixed { start: vec![0.0, 0.0], end: vec![1.0, 0.0] },
            16,
            |t| vec![t, 0.0],
        )
        .unwrap();
        let l = MetricModel::euclidean(2);
        assert!((action(&seg, &l).unwrap().value - 1.0).abs() < 1e-14);
        let lp = DiscreteCurve::from_fn(&torus(), BoundaryCondition::periodic(2), 32, |t| vec![t, 0.0]).unwrap();
        assert!((action(&lp, &l).unwrap().value - 1.0).abs() < 1e-13);
        let w = wavy_loop(24, 3);
        let a1 = action(&w, &conformal()).unwrap();
        assert!((a1.contributions.iter().sum::<f64>() - a1.value).abs() < 1e-15);
        for m in [2, 3] {
            let am = action(&iterate(&w, m).unwrap(), &conformal()).unwrap().value;
            assert!((am - (m * m) as f64 * a1.value).abs() < 1e-12 * am);
        }
    }

    #[test]
    fn straight_lines_are_critical() {
        let e = AmbientManifold::euclidean(2);
        let seg = DiscreteCurve::from_fn(
            &e,
            BoundaryCondition::Fixed { start: vec![0.0, 0.0], end: vec![1.0, 0.5] },
            16,
            |t| vec![t, 0.5 * t],
        )
        .unwrap();
        for model in [MetricModel::euclidean(2), MetricModel::randers_constant(&[0.3, -0.2])] {
            assert!(norm(&euclidean_gradient(&seg, &model).unwrap()) < 1e-12);
            assert!(max_el_residual(&seg, &model).unwrap() < 1e-10);
        }
        let eq = equator(128);
        let g = euclidean_gradient(&eq, &MetricModel::euclidean(3)).unwrap();
        assert!(norm(&g) < 1e-10);
    }

    #[test]
    fn el_residual_on_sphere_converges() {
        // a latitude circle is not a geodesic; the equator residual is O(h)
        let l = MetricModel::euclidean(3);
        let r128 = max_el_residual(&equator(128), &l).unwrap();
        assert!(r128 < 1e-3);
    }

    #[test]
    fn gradient_checks_pass() {
        let cases: Vec<(DiscreteCurve, MetricModel)> = vec![
            (wavy_loop(32, 1), conformal()),
            (wavy_loop(32, 2), MetricModel::randers_constant(&[0.3, 0.1])),
            (wavy_path(32, 3), conformal()),
            (equator(32).perturb(&vec![0.01; 64], 1.0).unwrap(), MetricModel::euclidean(3)),
        ];
        for (curve, model) in &cases {
            for m in [1, 2] {
                let chk = gradient_check(curve, model, m, 20, 4).unwrap();
                assert!(chk.fd_error < 1e-6, "{chk:?}");
                assert!(chk.riesz_residual < 1e-10, "{chk:?}");
                assert!(chk.dual_norm_residual < 1e-10, "{chk:?}");
            }
        }
    }

    #[test]
    fn chart_gradient_matches_differences_off_center() {
        let base = equator(16);
        let l = MetricModel::euclidean(3);
        let mut rng = sampling::rng(8);
        let c = sampling::uniform_vec(&mut rng, base.dof(), -0.05, 0.05);
        let (g, _) = chart_gradient(&base, &c, &l).unwrap();
        let s = 1e-6;
        for k in [0, 5, 17] {
            let mut cp = c.clone();
            let mut cm = c.clone();
            cp[k] += s;
            cm[k] -= s;
            let ap = action(&base.perturb_in_chart(&cp, 1.0).unwrap(), &l).unwrap().value;
            let am = action(&base.perturb_in_chart(&cm, 1.0).unwrap(), &l).unwrap().value;
            assert!(((ap - am) / (2.0 * s) - g[k]).abs() < 1e-6);
        }
    }

    fn hessian_fd_error(curve: &DiscreteCurve, lag: &dyn Lagrangian) -> f64 {
        let h = hessian(curve, lag).unwrap();
        assert!(h.asymmetry < 1e-10);
        let s = 1e-5;
        let n = curve.dof();
        let mut worst = 0.0f64;
        for k in 0..n {
            let mut e = vec![0.0; n];
            e[k] = s;
            let (gp, _) = chart_gradient(curve, &e, lag).unwrap();
            e[k] = -s;
            let (gm, _) = chart_gradient(curve, &e, lag).unwrap();
            for r in 0..n {
                worst = worst.max(((gp[r] - gm[r]) / (2.0 * s) - h.matrix[(r, k)]).abs());
            }
        }
        worst / h.matrix.max_abs()
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        assert!(hessian_fd_error(&wavy_loop(12, 5), &conformal()) < 1e-5);
        assert!(hessian_fd_error(&wavy_loop(12, 6), &MetricModel::randers_constant(&[0.3, 0.1])) < 1e-5);
        assert!(hessian_fd_error(&wavy_path(12, 7), &conformal()) < 1e-5);
        let sphere_curve = equator(12).perturb(&vec![0.03; 24], 1.0).unwrap();
        assert!(hessian_fd_error(&sphere_curve, &MetricModel::euclidean(3)) < 1e-5);
        let e = AmbientManifold::euclidean(2);
        let bc = BoundaryCondition::Periodic(Monodromy::from_signs(&[-1.0, -1.0]).unwrap());
        let anti = DiscreteCurve::from_fn(&e, bc, 12, |t| vec![(PI * t).cos(), 1.2 * (PI * t).sin()]).unwrap();
        assert!(hessian_fd_error(&anti, &MetricModel::euclidean(2)) < 1e-5);
    }

    #[test]
    fn hessian_quadratic_flat_is_laplacian() {
        let n = 16;
        let c = DiscreteCurve::from_fn(&torus(), BoundaryCondition::periodic(2), n, |t| vec![t, 0.0]).unwrap();
        let h = hessian(&c, &MetricModel::euclidean(2)).unwrap().matrix;
        let hh = 1.0 / n as f64;
        for i in 0..n {
            let r = 2 * i;
            assert!((h[(r, r)] - 4.0 / hh).abs() < 1e-10);
            assert!((h[(r, 2 * ((i + 1) % n))] + 2.0 / hh).abs() < 1e-10);
        }
        let ones: Vec<f64> = (0..2 * n).map(|k| if k % 2 == 0 { 1.0 } else { 0.0 }).collect();
        assert!(norm(&h.matvec(&ones)) < 1e-10);
    }

    #[test]
    fn hessian_quadratic_form_matches_second_differences() {
        let curve = wavy_loop(16, 9);
        let model = conformal();
        let h = hessian(&curve, &model).unwrap().matrix;
        let mut rng = sampling::rng(1);
        let xi = sampling::unit_vec(&mut rng, curve.dof());
        let s = 1e-4;
        let a0 = action(&curve, &model).unwrap().value;
        let ap = action(&curve.perturb(&xi, s).unwrap(), &model).unwrap().value;
        let am = action(&curve.perturb(&xi, -s).unwrap(), &model).unwrap().value;
        let fd = (ap - 2.0 * a0 + am) / (s * s);
        let q = h.quad_form(&xi, &xi);
        assert!((fd - q).abs() < 1e-5 * q.abs().max(1.0), "{fd} vs {q}");
    }

    #[test]
    fn tau_action_interpolates() {
        let model = MetricModel::randers_constant(&[0.3, 0.0]);
        let b = crate::finsler::bounds_estimate(&model, &torus(), 200, 1);
        let p = build_cutoffs(1.69, &b, &CutoffHints::default()).unwrap();
        let star = ModifiedLagrangian::new(&model, &b, &p);
        let curve = wavy_loop(16, 2);
        let a0 = action(&curve, &model).unwrap().value;
        let a1 = action(&curve, &star).unwrap().value;
        for tau in [0.25, 0.5, 0.75] {
            let at = action(&curve, &TauLagrangian::new(&star, tau)).unwrap().value;
            assert!((at - ((1.0 - tau) * a0 + tau * a1)).abs() < 1e-12);
        }
    }

    #[test]
    fn natural_bc_examples() {
        let e = AmbientManifold::euclidean(2);
        let l = MetricModel::euclidean(2);
        let start = crate::loopspace::AffineConstraint::new(&[0.0, 0.0], &[vec![1.0, 0.0]]).unwrap();
        let end = crate::loopspace::AffineConstraint::new(&[0.0, 1.0], &[vec![1.0, 0.0]]).unwrap();
        let bc = BoundaryCondition::Submanifold { start, end };
        let perp = DiscreteCurve::from_fn(&e, bc.clone(), 16, |t| vec![0.4, t]).unwrap();
        let (r0, r1) = natural_bc_residual(&perp, &l).unwrap();
        assert!(r0 < 1e-10 && r1 < 1e-10);
        let slanted = DiscreteCurve::from_fn(&e, bc, 16, |t| vec![0.4 + 0.5 * t, t]).unwrap();
        let (r0, r1) = natural_bc_residual(&slanted, &l).unwrap();
        // g^F = I, so the residual is <e_1, (0.5, 1)>
        assert!((r0 - 0.5).abs() < 1e-12 && (r1 - 0.5).abs() < 1e-12);
        let fixed = DiscreteCurve::from_fn(
            &e,
            BoundaryCondition::Fixed { start: vec![0.0, 0.0], end: vec![1.0, 1.0] },
            8,
            |t| vec![t, t * t],
        )
        .unwrap();
        assert_eq!(natural_bc_residual(&fixed, &l).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn resolvent_matches_closed_form() {
        let f = |t: f64| (TAU * t).cos();
        for &t in &[0.0, 0.13, 0.5, 0.77] {
            let x = periodic_resolvent(f, 1.0, 1.0, t, 64);
            let want = -(TAU * t).cos() / (4.0 * PI * PI + 1.0);
            assert!((x - want).abs() < 1e-10, "t={t}: {x} vs {want}");
            // antiperiodic data: cos(pi t) flips sign over one period
            let g = |s: f64| (PI * s).cos();
            let y = periodic_resolvent(g, 2.0, -1.0, t, 64);
            let want = -(PI * t).cos() / (PI * PI + 4.0);
            assert!((y - want).abs() < 1e-10);
        }
    }

    fn kernel_errors(n: usize) -> (f64, f64) {
        let model = conformal();
        let (mut loops, mut paths) = (0.0f64, 0.0f64);
        for seed in 0..2 {
            let c = wavy_loop(n, seed);
            let k = kernel_gradient_periodic(&c, &model, 1).unwrap();
            let g = sobolev_gradient(&c, &model, 1).unwrap();
            loops = loops.max(relative_field_error(&k, &g.field));
            let p = wavy_path(n, seed);
            let k = kernel_gradient_path(&p, &model, 1).unwrap();
            let g = sobolev_gradient(&p, &model, 1).unwrap();
            paths = paths.max(relative_field_error(&k, &g.field));
        }
        (loops, paths)
    }

    #[test]
    fn kernel_gradients_converge_first_order() {
        let (l32, p32) = kernel_errors(32);
        let (l64, p64) = kernel_errors(64);
        assert!(l64 < l32 && p64 < p32);
        assert!((l64 / l32 - 0.5).abs() < 0.15, "{l32} {l64}");
        assert!((p64 / p32 - 0.5).abs() < 0.15, "{p32} {p64}");
    }

    #[test]
    fn kernel_gradient_antiperiodic_and_weighted() {
        // E = -I on R^2 with the Euclidean metric, m = 2
        let e = AmbientManifold::euclidean(2);
        let mk = |n: usize| {
            let bc = BoundaryCondition::Periodic(Monodromy::from_signs(&[-1.0, 1.0]).unwrap());
            DiscreteCurve::from_fn(&e, bc, n, |t| {
                vec![(PI * t).cos() + 0.1 * (3.0 * PI * t).sin(), 0.3 + 0.2 * (TAU * t).sin()]
            })
            .unwrap()
        };
        let l = MetricModel::euclidean(2);
        let err = |n: usize| {
            let c = mk(n);
            relative_field_error(
                &kernel_gradient_periodic(&c, &l, 2).unwrap(),
                &sobolev_gradient(&c, &l, 2).unwrap().field,
            )
        };
        let (e1, e2) = (err(32), err(64));
        assert!(e2 < 0.7 * e1 && e2 < 0.05, "{e1} {e2}");
    }

    #[test]
    fn kernel_gradients_vanish_at_geodesics() {
        let l = MetricModel::euclidean(2);
        let c = DiscreteCurve::from_fn(&torus(), BoundaryCondition::periodic(2), 32, |t| vec![t, 0.2]).unwrap();
        let k = kernel_gradient_periodic(&c, &l, 1).unwrap();
        assert!(k.values.iter().all(|x| x.abs() < 1e-12));
        let e = AmbientManifold::euclidean(2);
        let seg = DiscreteCurve::from_fn(
            &e,
            BoundaryCondition::Fixed { start: vec![0.0, 0.0], end: vec![1.0, 0.5] },
            32,
            |t| vec![t, 0.5 * t],
        )
        .unwrap();
        let k = kernel_gradient_path(&seg, &l, 1).unwrap();
        assert!(k.values.iter().all(|x| x.abs() < 1e-12));
        assert!(kernel_gradient_periodic(&equator(16), &MetricModel::euclidean(3), 1).is_err());
    }
}

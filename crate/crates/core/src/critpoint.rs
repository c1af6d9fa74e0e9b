//! Closed geodesics and geodesic arcs as critical points of the discrete
//! energy, plus an ODE shooting oracle for independent confirmation.

use crate::action::{
    action, euclidean_gradient, hessian, max_el_residual, min_interval_l, natural_bc_residual, sobolev_gradient_with,
};
use crate::error::{Error, Result};
use crate::finsler::{Lagrangian, MetricModel};
use crate::linalg::{dot, generalized_eigen_with, lu_solve, norm, Cholesky, Mat};
use crate::loopspace::{sobolev_gram, BoundaryCondition, DiscreteCurve};
use crate::manifold::{AmbientManifold, ManifoldKind};
use crate::prelude::*;
use crate::regularize::{ModifiedLagrangian, TauLagrangian};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SolveOptions {
    /// Stop when the `<.,.>_1` norm of the Sobolev gradient is below this.
    pub tol_grad: f64,
    pub max_iters: usize,
    pub armijo_c1: f64,
    pub backtrack: f64,
    /// Switch from Sobolev descent to Newton below this gradient norm.
    pub newton_switch_tol: f64,
    pub tau: f64,
    /// Weight `m` of the Sobolev inner product.
    pub gram_weight: usize,
    /// Collapse guard: min speed over mean speed below this triggers `L*`.
    pub collapse_ratio: f64,
    /// Relative eigenvalue cutoff of the Newton pseudo-inverse.
    pub newton_rcond: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol_grad: 1e-9,
            max_iters: 500,
            armijo_c1: 1e-4,
            backtrack: 0.5,
            newton_switch_tol: 1e-4,
            tau: 0.0,
            gram_weight: 1,
            collapse_ratio: 0.05,
            newton_rcond: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum SolveStatus {
    Converged,
    MaxIters,
    /// Line search could not make progress above the tolerance.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub curve: DiscreteCurve,
    pub status: SolveStatus,
    pub converged: bool,
    pub iterations: usize,
    pub newton_steps: usize,
    pub grad_history: Vec<f64>,
    pub action_history: Vec<f64>,
    pub action: f64,
    pub grad_norm: f64,
    /// Standard deviation over mean of `F(x_i, v_i)`.
    pub speed_ratio: f64,
    pub min_speed: f64,
    pub mean_speed: f64,
    pub el_residual: f64,
    pub natural_bc: Option<(f64, f64)>,
    /// Whether the collapse guard moved the solve to `L*`.
    pub switched_to_star: bool,
    pub tau: f64,
}

impl SolveReport {
    pub fn into_result(self) -> Result<SolveReport> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::MaxItersExceeded { iters: self.iterations, grad_norm: self.grad_norm })
        }
    }
}

/// Mean, standard deviation and minimum of `F(x_i, v_i)` over the intervals.
pub fn speed_stats(curve: &DiscreteCurve, model: &MetricModel) -> (f64, f64, f64) {
    let speeds: Vec<f64> =
        (0..curve.intervals()).map(|i| model.eval_f(curve.node(i), &curve.velocity(i))).collect();
    let n = speeds.len() as f64;
    let mean = speeds.iter().sum::<f64>() / n;
    let var = speeds.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    let min = speeds.iter().copied().fold(f64::INFINITY, f64::min);
    (mean, var.sqrt(), min)
}

fn lagrangian_for(model: &MetricModel, star: Option<&ModifiedLagrangian>, tau: f64) -> Result<TauLagrangian> {
    if tau <= 0.0 {
        return Ok(TauLagrangian::base(model));
    }
    let s = star.ok_or_else(|| Error::Precondition(String::from("tau > 0 needs a modified Lagrangian")))?;
    Ok(TauLagrangian::new(s, tau))
}

struct State {
    curve: DiscreteCurve,
    chol: Cholesky,
    g: Vec<f64>,
    grad: Vec<f64>,
    norm: f64,
    value: f64,
}

fn evaluate(curve: DiscreteCurve, lag: &dyn Lagrangian, m: usize) -> Result<State> {
    let g = euclidean_gradient(&curve, lag)?;
    let chol = Cholesky::new(&sobolev_gram(&curve, m)).map_err(|_| Error::GramSolveFailure)?;
    let sg = sobolev_gradient_with(&curve, g.clone(), &chol);
    let value = action(&curve, lag)?.value;
    Ok(State { curve, chol, g, grad: sg.coords, norm: sg.norm, value })
}

/// Pseudo-inverse Newton direction `-W Lambda^{-1} W^T g` from the
/// generalized eigenpairs of `(H, G)`, skipping the near-null modes.
fn newton_direction(st: &State, lag: &dyn Lagrangian, rcond: f64) -> Result<Vec<f64>> {
    let h = hessian(&st.curve, lag)?;
    let eig = generalized_eigen_with(&h.matrix, &st.chol, true)?;
    let w = eig.vectors.as_ref().unwrap();
    let scale = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut dir = vec![0.0; st.g.len()];
    for (k, &lam) in eig.values.iter().enumerate() {
        if lam.abs() <= rcond * scale {
            continue;
        }
        let col = w.col(k);
        let coef = -dot(&col, &st.g) / lam;
        dir.iter_mut().zip(&col).for_each(|(d, c)| *d += coef * c);
    }
    Ok(dir)
}

/// Sobolev-gradient descent with Armijo backtracking, then Newton on the
/// gradient norm once it is below `newton_switch_tol`.
///
/// If the speed collapses (or a zero velocity shows up) while descending
/// `L` with `tau < 1`, the solve continues once under `L*` when `star` is
/// given; a second collapse is a `DegenerateShrink` error.
pub fn find_geodesic(
    init: &DiscreteCurve,
    model: &MetricModel,
    star: Option<&ModifiedLagrangian>,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    if !(opts.tol_grad > 0.0) || !(opts.armijo_c1 > 0.0) || !(opts.backtrack > 0.0 && opts.backtrack < 1.0) {
        return Err(Error::Precondition(String::from("solver tolerances must be positive")));
    }
    let (mean0, _, _) = speed_stats(init, model);
    if init.is_periodic() && !(mean0 > 0.0) {
        return Err(Error::Precondition(String::from("initial loop is constant")));
    }
    let mut tau = opts.tau;
    let mut switched = false;
    let mut curve = init.clone();
    let mut grad_history = Vec::new();
    let mut action_history = Vec::new();
    let mut newton_steps = 0;
    let mut iterations = 0;
    'outer: loop {
        let lag = lagrangian_for(model, star, tau)?;
        let collapse = |c: &DiscreteCurve| -> bool {
            if !c.is_periodic() {
                return false;
            }
            let (mean, _, min) = speed_stats(c, model);
            !(min > opts.collapse_ratio * mean) || !(mean > 0.0)
        };
        let mut st = match evaluate(curve.clone(), &lag, opts.gram_weight) {
            Ok(s) => s,
            Err(Error::NonSmoothOrigin) => {
                if tau < 1.0 && star.is_some() && !switched {
                    switched = true;
                    tau = 1.0;
                    continue 'outer;
                }
                let (_, _, min) = speed_stats(&curve, model);
                return Err(Error::DegenerateShrink { min_speed: min });
            }
            Err(e) => return Err(e),
        };
        let mut step = 1.0f64;
        let mut status = SolveStatus::MaxIters;
        while iterations < opts.max_iters {
            grad_history.push(st.norm);
            action_history.push(st.value);
            if collapse(&st.curve) {
                if tau < 1.0 && star.is_some() && !switched {
                    switched = true;
                    tau = 1.0;
                    curve = st.curve;
                    continue 'outer;
                }
                let (_, _, min) = speed_stats(&st.curve, model);
                return Err(Error::DegenerateShrink { min_speed: min });
            }
            if st.norm < opts.tol_grad {
                status = SolveStatus::Converged;
                break;
            }
            iterations += 1;
            let mut accepted = false;
            if st.norm < opts.newton_switch_tol {
                let dir = newton_direction(&st, &lag, opts.newton_rcond)?;
                let mut t = 1.0;
                for _ in 0..30 {
                    if let Ok(next) = st.curve.perturb(&dir, t).and_then(|c| evaluate(c, &lag, opts.gram_weight)) {
                        if next.norm < (1.0 - 1e-4 * t) * st.norm {
                            st = next;
                            accepted = true;
                            newton_steps += 1;
                            break;
                        }
                    }
                    t *= 0.5;
                }
            }
            if !accepted {
                let dir: Vec<f64> = st.grad.iter().map(|x| -x).collect();
                let slope = st.norm * st.norm;
                let mut t = (2.0 * step).min(1.0);
                for _ in 0..60 {
                    if let Ok(next) = st.curve.perturb(&dir, t).and_then(|c| evaluate(c, &lag, opts.gram_weight)) {
                        if next.value <= st.value - opts.armijo_c1 * t * slope {
                            // keep shrinking while the action still drops, so
                            // overshooting steps near 2/lambda are not taken
                            let mut best = next;
                            loop {
                                let ts = t * opts.backtrack;
                                match st.curve.perturb(&dir, ts).and_then(|c| evaluate(c, &lag, opts.gram_weight)) {
                                    Ok(s) if s.value < best.value => {
                                        best = s;
                                        t = ts;
                                    }
                                    _ => break,
                                }
                            }
                            st = best;
                            accepted = true;
                            step = t;
                            break;
                        }
                    }
                    t *= opts.backtrack;
                }
            }
            if !accepted {
                status = SolveStatus::Stalled;
                break;
            }
        }
        let (mean, sd, min) = speed_stats(&st.curve, model);
        let el_residual = max_el_residual(&st.curve, &lag)?;
        let natural_bc = match st.curve.bc() {
            BoundaryCondition::Submanifold { .. } => Some(natural_bc_residual(&st.curve, model)?),
            _ => None,
        };
        if switched && st.curve.is_periodic() && !(min > opts.collapse_ratio * mean) {
            return Err(Error::DegenerateShrink { min_speed: min });
        }
        return Ok(SolveReport {
            status,
            converged: status == SolveStatus::Converged,
            iterations,
            newton_steps,
            action: st.value,
            grad_norm: st.norm,
            grad_history,
            action_history,
            speed_ratio: if mean > 0.0 { sd / mean } else { f64::INFINITY },
            min_speed: min,
            mean_speed: mean,
            el_residual,
            natural_bc,
            switched_to_star: switched,
            tau,
            curve: st.curve,
        });
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct TauRow {
    pub tau: f64,
    pub grad_norm: f64,
    pub action: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct TauHomotopyReport {
    pub level: f64,
    pub min_interval_l: f64,
    pub rows: Vec<TauRow>,
    /// Set when the precondition fails and no rows were computed.
    pub skipped: Option<String>,
    pub max_grad_norm: f64,
    pub max_action_deviation: f64,
}

impl TauHomotopyReport {
    pub fn passed(&self, tol_grad: f64, tol_action: f64) -> bool {
        self.skipped.is_none() && self.max_grad_norm < tol_grad && self.max_action_deviation < tol_action
    }
}

/// Gradient norm and action of `curve` under every `L^tau` in `taus`.
///
/// Needs `L(x_i, v_i)` above the gluing level of `star` on every interval,
/// where `L^tau = L` identically.
pub fn tau_homotopy_check(
    curve: &DiscreteCurve,
    model: &MetricModel,
    star: &ModifiedLagrangian,
    taus: &[f64],
    m: usize,
) -> Result<TauHomotopyReport> {
    let lmin = min_interval_l(curve, model);
    let level = action(curve, model)?.value;
    let mut rep = TauHomotopyReport {
        level,
        min_interval_l: lmin,
        rows: Vec::new(),
        skipped: None,
        max_grad_norm: 0.0,
        max_action_deviation: 0.0,
    };
    if !(lmin >= star.params.t_glue) {
        rep.skipped = Some(format!(
            "min interval L = {lmin:e} is below the gluing level {:e}; L^tau differs from L on this curve",
            star.params.t_glue
        ));
        return Ok(rep);
    }
    let chol = Cholesky::new(&sobolev_gram(curve, m)).map_err(|_| Error::GramSolveFailure)?;
    for &tau in taus {
        let lag = TauLagrangian::new(star, tau);
        let g = euclidean_gradient(curve, &lag)?;
        let sg = sobolev_gradient_with(curve, g, &chol);
        let a = action(curve, &lag)?.value;
        rep.max_grad_norm = rep.max_grad_norm.max(sg.norm);
        rep.max_action_deviation = rep.max_action_deviation.max((a - level).abs());
        rep.rows.push(TauRow { tau, grad_norm: sg.norm, action: a });
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ShootingReport {
    pub steps: usize,
    pub final_point: Vec<f64>,
    pub final_velocity: Vec<f64>,
    /// `|gamma(1) - gamma(0)|`, wrapped on the torus.
    pub position_closure: f64,
    /// `|gamma dot(1) - gamma dot(0)|`.
    pub velocity_closure: f64,
    /// Max relative deviation of the energy function along the trajectory.
    pub energy_drift: f64,
    /// Samples `(t, x)` every `record_every` steps.
    pub samples: Vec<(f64, Vec<f64>)>,
}

fn energy_of(lag: &dyn Lagrangian, x: &[f64], v: &[f64]) -> Result<f64> {
    let j = lag.jet(x, v, 1)?;
    Ok(dot(&j.dv, v) - j.value)
}

/// Acceleration from `L_vv a = L_x - L_xv^T v`, with a multiplier keeping
/// `|x| = 1` on the sphere.
fn acceleration(lag: &dyn Lagrangian, manifold: &AmbientManifold, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let j = lag.jet(x, v, 2).map_err(|e| match e {
        Error::NonSmoothOrigin => Error::MassMatrixSingular,
        other => other,
    })?;
    let d = x.len();
    let mut rhs: Vec<f64> = (0..d).map(|b| j.dx[b] - (0..d).map(|a| j.dxv[(a, b)] * v[a]).sum::<f64>()).collect();
    let sol = if manifold.kind() == ManifoldKind::UnitSphere {
        let mut m = Mat::zeros(d + 1, d + 1);
        for a in 0..d {
            for b in 0..d {
                m[(a, b)] = j.dvv[(a, b)];
            }
            m[(a, d)] = -x[a];
            m[(d, a)] = x[a];
        }
        rhs.push(-dot(v, v));
        let mut s = lu_solve(&m, &rhs).map_err(|_| Error::MassMatrixSingular)?;
        s.truncate(d);
        s
    } else {
        lu_solve(&j.dvv, &rhs).map_err(|_| Error::MassMatrixSingular)?
    };
    if sol.iter().any(|a| !a.is_finite()) {
        return Err(Error::MassMatrixSingular);
    }
    Ok(sol)
}

/// RK4 integration of the Euler-Lagrange system over `t in [0, 1]`.
pub fn shooting_oracle(
    manifold: &AmbientManifold,
    lag: &dyn Lagrangian,
    x0: &[f64],
    v0: &[f64],
    steps: usize,
    record_every: usize,
) -> Result<ShootingReport> {
    if steps == 0 {
        return Err(Error::Precondition(String::from("steps must be positive")));
    }
    let d = x0.len();
    let h = 1.0 / steps as f64;
    let mut x = x0.to_vec();
    let mut v = v0.to_vec();
    let e0 = energy_of(lag, &x, &v).map_err(|_| Error::MassMatrixSingular)?;
    let mut drift = 0.0f64;
    let mut samples = vec![(0.0, x.clone())];
    let axpy = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + s * q).collect() };
    for k in 0..steps {
        let a1 = acceleration(lag, manifold, &x, &v)?;
        let (x2, v2) = (axpy(&x, 0.5 * h, &v), axpy(&v, 0.5 * h, &a1));
        let a2 = acceleration(lag, manifold, &x2, &v2)?;
        let (x3, v3) = (axpy(&x, 0.5 * h, &v2), axpy(&v, 0.5 * h, &a2));
        let a3 = acceleration(lag, manifold, &x3, &v3)?;
        let (x4, v4) = (axpy(&x, h, &v3), axpy(&v, h, &a3));
        let a4 = acceleration(lag, manifold, &x4, &v4)?;
        for c in 0..d {
            x[c] += h / 6.0 * (v[c] + 2.0 * v2[c] + 2.0 * v3[c] + v4[c]);
            v[c] += h / 6.0 * (a1[c] + 2.0 * a2[c] + 2.0 * a3[c] + a4[c]);
        }
        let e = energy_of(lag, &x, &v)?;
        drift = drift.max((e - e0).abs() / e0.abs().max(1e-300));
        if record_every > 0 && (k + 1) % record_every == 0 {
            samples.push(((k + 1) as f64 * h, x.clone()));
        }
    }
    let position_closure = manifold.distance(x0, &x);
    let velocity_closure = norm(&crate::linalg::sub(&v, v0));
    let final_point = manifold.retract(&x).unwrap_or(x);
    Ok(ShootingReport {
        steps,
        final_point,
        final_velocity: v,
        position_closure,
        velocity_closure,
        energy_drift: drift,
        samples,
    })
}

/// Max distance from the shooting trajectory to the nodes of `curve`, with
/// the trajectory sampled at the node times.
pub fn oracle_distance(curve: &DiscreteCurve, shot: &ShootingReport) -> f64 {
    let n = curve.len();
    let h = curve.h();
    let mut worst = 0.0f64;
    for (t, x) in &shot.samples {
        let k = (t / h).round() as usize;
        if (t - k as f64 * h).abs() < 1e-9 && k < n {
            worst = worst.max(curve.manifold().distance(curve.node(k), x));
        }
    }
    worst
}

use anyhow::anyhow;
use finsler_morse::action::{
    gradient_check, kernel_gradient_path, kernel_gradient_periodic, relative_field_error, sobolev_gradient,
};
use finsler_morse::critpoint::{find_geodesic, shooting_oracle, tau_homotopy_check, SolveReport};
use finsler_morse::finsler::{bounds_estimate, verify_axioms, BoundsEstimate, MetricModel};
use finsler_morse::loopspace::{BoundaryCondition, DiscreteCurve};
use finsler_morse::manifold::{AmbientManifold, ManifoldKind};
use finsler_morse::morse::{
    classify_critical_groups, ls_reduce, orbit_index, scan_row, spectrum, summarize_scan, OrbitIndex,
};
use finsler_morse::regularize::{build_cutoffs, verify_modification, CutoffParams, ModifiedLagrangian, TauLagrangian};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::output::{curve_csv, num, Checks, OutDir};

/// How a command failed: bad input (exit 2) or a numerical breakdown (exit 3).
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Numerical(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    pub fn message(&self) -> String {
        match self {
            Failure::Config(e) | Failure::Numerical(e) => format!("{e:#}"),
        }
    }
}

fn cfg_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

fn num_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Numerical(e.into())
}

pub struct Outcome {
    pub report: Value,
    pub checks: Checks,
    /// Constants derived during the run (bounds, cutoffs).
    pub derived: Value,
    /// Options and thresholds consumed by the run.
    pub tolerances: Value,
}

pub struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub out: &'a OutDir,
    pub verbose: bool,
}

impl Ctx<'_> {
    fn log(&self, msg: &str) {
        if self.verbose {
            eprintln!("[finsler-morse] {msg}");
        }
    }

    fn space(&self) -> Result<(AmbientManifold, MetricModel), Failure> {
        Ok((self.cfg.manifold().map_err(cfg_err)?, self.cfg.metric().map_err(cfg_err)?))
    }

    fn bounds(&self, model: &MetricModel, m: &AmbientManifold) -> BoundsEstimate {
        bounds_estimate(model, m, self.cfg.lagrangian.bounds_samples, self.cfg.seed)
    }

    /// `L*` for the configured level, when one is set.
    fn star(
        &self,
        model: &MetricModel,
        m: &AmbientManifold,
    ) -> Result<Option<(BoundsEstimate, CutoffParams, ModifiedLagrangian)>, Failure> {
        let Some(c) = self.cfg.lagrangian.c else { return Ok(None) };
        let b = self.bounds(model, m);
        let p = build_cutoffs(c, &b, &self.cfg.lagrangian.hints()).map_err(num_err)?;
        let s = ModifiedLagrangian::new(model, &b, &p);
        Ok(Some((b, p, s)))
    }
}

fn derived_json(b: Option<&BoundsEstimate>, p: Option<&CutoffParams>) -> Value {
    let mut v = json!({});
    if let Some(b) = b {
        v["bounds"] = json!({ "alpha_g": b.alpha_g, "beta_g": b.beta_g, "c1": b.c1, "reference_scale": b.reference_scale, "samples": b.samples });
    }
    if let Some(p) = p {
        v["cutoffs"] = serde_json::to_value(p).unwrap_or(Value::Null);
    }
    v
}

pub fn verify_metric(ctx: &Ctx) -> Result<Outcome, Failure> {
    let (m, model) = ctx.space()?;
    let cfg = ctx.cfg;
    ctx.log(&format!("sampling {} fibers", cfg.samples));
    let r = verify_axioms(&model, &m, cfg.samples, cfg.seed);
    let mut checks = Checks::default();
    checks.less("homogeneity_residual", r.homogeneity_residual, 1e-10);
    checks.less("euler_residual", r.euler_residual, 1e-8);
    checks.less("euler_degree2_residual", r.euler_degree2_residual, 1e-8);
    checks.greater("min_gf_eigenvalue", r.min_gf_eigenvalue, 0.0);
    checks.greater("min_f_unit", r.min_f_unit, 0.0);
    let positive = r.min_f_unit > 0.0 && r.min_gf_eigenvalue > 0.0;
    let b = if positive { Some(ctx.bounds(&model, &m)) } else { None };
    let report = json!({
        "axioms": r,
        "positivity": if positive { "ok" } else { "F is not positive definite on some sampled fiber (for Randers metrics |b|_a must be below 1)" },
        "bounds": b,
    });
    Ok(Outcome {
        report,
        checks,
        derived: derived_json(b.as_ref(), None),
        tolerances: json!({ "samples": cfg.samples, "bounds_samples": cfg.lagrangian.bounds_samples }),
    })
}

pub fn regularize(ctx: &Ctx) -> Result<Outcome, Failure> {
    let (m, model) = ctx.space()?;
    let cfg = ctx.cfg;
    let c = cfg.lagrangian.c.ok_or_else(|| cfg_err(anyhow!("regularize needs lagrangian.c")))?;
    let b = ctx.bounds(&model, &m);
    let mut checks = Checks::default();
    let p = match build_cutoffs(c, &b, &cfg.lagrangian.hints()) {
        Ok(p) => p,
        Err(e @ finsler_morse::Error::InfeasibleParams { .. }) => {
            checks.flag("cutoffs_feasible", false);
            return Ok(Outcome {
                report: json!({ "feasible": false, "error": e.to_string() }),
                checks,
                derived: derived_json(Some(&b), None),
                tolerances: json!({ "hints": cfg.lagrangian.hints() }),
            });
        }
        Err(e) => return Err(num_err(e)),
    };
    checks.flag("cutoffs_feasible", p.feasible());
    let star = ModifiedLagrangian::new(&model, &b, &p);
    ctx.log("verifying L*");
    let r = verify_modification(&star, &m, cfg.samples, cfg.lagrangian.radial_points, cfg.seed).map_err(num_err)?;
    checks.less("gluing_defect", r.gluing_defect, f64::MIN_POSITIVE);
    checks.less("ordering_excess", r.ordering_excess, 1e-12);
    checks.flag("radial_monotone", r.radial_monotone);
    checks.greater("radial_min_gap", r.radial_min_gap, 0.0);
    checks.less("min_value_error", r.min_value_error, 1e-12);
    checks.greater("hessian_over_bound", r.min_star_hessian / r.convexity_bound, 1.0 - 1e-6);
    let report = json!({
        "feasible": true,
        "params": p,
        "inequalities": p.inequalities(),
        "modification": r,
    });
    Ok(Outcome {
        report,
        checks,
        derived: derived_json(Some(&b), Some(&p)),
        tolerances: json!({ "hints": cfg.lagrangian.hints(), "radial_points": cfg.lagrangian.radial_points }),
    })
}

struct Solved {
    rep: SolveReport,
    model: MetricModel,
    manifold: AmbientManifold,
    star: Option<(BoundsEstimate, CutoffParams, ModifiedLagrangian)>,
}

impl Solved {
    /// The Lagrangian the solve finished with.
    fn lagrangian(&self) -> TauLagrangian {
        match &self.star {
            Some((_, _, s)) if self.rep.tau > 0.0 => TauLagrangian::new(s, self.rep.tau),
            _ => TauLagrangian::base(&self.model),
        }
    }
}

fn solve_report_json(rep: &SolveReport) -> Value {
    json!({
        "status": rep.status,
        "converged": rep.converged,
        "iterations": rep.iterations,
        "newton_steps": rep.newton_steps,
        "action": rep.action,
        "grad_norm": rep.grad_norm,
        "speed_ratio": rep.speed_ratio,
        "min_speed": rep.min_speed,
        "mean_speed": rep.mean_speed,
        "el_residual": rep.el_residual,
        "natural_bc": rep.natural_bc,
        "switched_to_star": rep.switched_to_star,
        "tau": rep.tau,
        "nodes": rep.curve.len(),
        "winding": if rep.curve.manifold().kind() == ManifoldKind::FlatTorus { Some(rep.curve.winding()) } else { None },
        "grad_history": rep.grad_history,
        "action_history": rep.action_history,
    })
}

fn run_solve(ctx: &Ctx, checks: &mut Checks) -> Result<(Solved, Value), Failure> {
    let (m, model) = ctx.space()?;
    let init = ctx.cfg.initial_curve(None).map_err(cfg_err)?;
    let star = ctx.star(&model, &m)?;
    let opts = ctx.cfg.solve_options();
    ctx.log(&format!("solving on {} nodes", init.len()));
    let rep = find_geodesic(&init, &model, star.as_ref().map(|s| &s.2), &opts).map_err(num_err)?;
    if !rep.converged {
        return Err(num_err(anyhow!(
            "solver stopped ({:?}) after {} iterations with gradient norm {:.3e}",
            rep.status,
            rep.iterations,
            rep.grad_norm
        )));
    }
    ctx.log(&format!("converged: action {:.12} after {} iterations", rep.action, rep.iterations));
    let speed_model = model.clone();
    ctx.out.write("curve.csv", &curve_csv(&rep.curve, |x, v| speed_model.eval_f(x, v))).map_err(num_err)?;
    checks.less("grad_norm", rep.grad_norm, opts.tol_grad);
    let mut report = solve_report_json(&rep);
    if rep.curve.is_periodic() {
        checks.less("speed_ratio", rep.speed_ratio, 1e-3);
    }
    if let Some((r0, r1)) = rep.natural_bc {
        checks.less("natural_bc_residual", r0.max(r1), 1e-6);
    }
    let solved = Solved { rep, model, manifold: m, star };
    let c = &solved.rep.curve;
    let identity_loop = matches!(c.bc(), BoundaryCondition::Periodic(e) if e.is_identity());
    if identity_loop {
        let lag = solved.lagrangian();
        let v0 = c.spectral_velocity(0).map_err(num_err)?;
        let steps = 64 * c.len();
        let shot = shooting_oracle(&solved.manifold, &lag, c.node(0), &v0, steps, 0).map_err(num_err)?;
        checks.less("shooting_closure", shot.position_closure.max(shot.velocity_closure), 1e-6);
        report["shooting"] = json!({
            "steps": steps,
            "position_closure": shot.position_closure,
            "velocity_closure": shot.velocity_closure,
            "energy_drift": shot.energy_drift,
        });
    }
    if !ctx.cfg.taus.is_empty() {
        if let Some((_, _, s)) = &solved.star {
            let th = tau_homotopy_check(c, &solved.model, s, &ctx.cfg.taus, opts.gram_weight).map_err(num_err)?;
            checks.flag("tau_precondition", th.skipped.is_none());
            checks.less("tau_grad_norm", th.max_grad_norm, 1e-9);
            checks.less("tau_action_deviation", th.max_action_deviation, 1e-10);
            report["tau_homotopy"] = serde_json::to_value(&th).map_err(num_err)?;
        }
    }
    Ok((solved, report))
}

fn solve_tolerances(ctx: &Ctx) -> Value {
    json!({ "solver": ctx.cfg.solve_options(), "speed_ratio": 1e-3, "shooting_closure": 1e-6, "natural_bc": 1e-6, "tau_grad_norm": 1e-9, "tau_action_deviation": 1e-10 })
}

fn solved_derived(s: &Solved) -> Value {
    derived_json(s.star.as_ref().map(|x| &x.0), s.star.as_ref().map(|x| &x.1))
}

pub fn solve(ctx: &Ctx) -> Result<Outcome, Failure> {
    let mut checks = Checks::default();
    let (solved, report) = run_solve(ctx, &mut checks)?;
    Ok(Outcome { report, checks, derived: solved_derived(&solved), tolerances: solve_tolerances(ctx) })
}

fn orbit_json(o: &OrbitIndex) -> Value {
    json!({ "m_minus": o.m_minus_orbit, "m_zero_orbit": o.m_zero_orbit, "bound": o.bound })
}

pub fn index(ctx: &Ctx) -> Result<Outcome, Failure> {
    let mut checks = Checks::default();
    let (solved, mut report) = run_solve(ctx, &mut checks)?;
    let lag = solved.lagrangian();
    let sopts = ctx.cfg.spectrum_options();
    ctx.log("generalized eigenproblem");
    let spec = spectrum(&solved.rep.curve, &lag, &sopts).map_err(num_err)?;
    checks.flag("threshold_stable", !spec.threshold_sensitive);
    let orbit = if solved.rep.curve.is_periodic() {
        let o = orbit_index(&spec, &solved.rep.curve).map_err(num_err)?;
        Some(o)
    } else {
        None
    };
    let groups = match &orbit {
        Some(o) => classify_critical_groups(o.m_minus_orbit, o.m_zero_orbit, true, None),
        None => classify_critical_groups(spec.m_minus, spec.m_zero, false, None),
    };
    report["spectrum"] = serde_json::to_value(&spec).map_err(num_err)?;
    report["orbit"] = orbit.as_ref().map(orbit_json).unwrap_or(Value::Null);
    report["critical_groups"] = serde_json::to_value(&groups).map_err(num_err)?;
    let mut tol = solve_tolerances(ctx);
    tol["spectrum"] = json!(sopts);
    Ok(Outcome { report, checks, derived: solved_derived(&solved), tolerances: tol })
}

pub fn reduce(ctx: &Ctx) -> Result<Outcome, Failure> {
    let mut checks = Checks::default();
    let (solved, mut report) = run_solve(ctx, &mut checks)?;
    let lag = solved.lagrangian();
    let ropts = ctx.cfg.reduction_options();
    ctx.log("Lyapunov-Schmidt reduction");
    let r = ls_reduce(&solved.rep.curve, &lag, &ropts).map_err(|e| match e {
        finsler_morse::Error::Precondition(_) => cfg_err(e),
        e => num_err(e),
    })?;
    checks.less("h0_residual", r.h0_residual, 1e-9);
    checks.less("dh0_norm", r.dh0_norm, 1e-4);
    checks.less("max_grid_residual", r.max_residual, 1e-9);
    checks.less("l_circ_zero_minus_action", (r.l_circ_zero - r.action).abs(), 1e-10);
    checks.flag("no_failed_grid_points", r.failed.is_empty());
    let mut csv = String::new();
    for k in 0..r.null_dim {
        csv += &format!("xi_{k},");
    }
    csv += "L_circ,residual\n";
    for g in &r.grid {
        for x in &g.xi {
            csv += &format!("{},", num(*x));
        }
        csv += &format!("{},{}\n", num(g.l_circ), num(g.residual));
    }
    ctx.out.write("reduction.csv", &csv).map_err(num_err)?;
    let spec = spectrum(&solved.rep.curve, &lag, &ctx.cfg.spectrum_options()).map_err(num_err)?;
    let periodic = solved.rep.curve.is_periodic();
    let groups = classify_critical_groups(spec.m_minus, r.null_dim, periodic, Some(r.classification));
    let mut rj = serde_json::to_value(&r).map_err(num_err)?;
    if let Some(o) = rj.as_object_mut() {
        o.remove("grid");
    }
    report["reduction"] = rj;
    report["critical_groups"] = serde_json::to_value(&groups).map_err(num_err)?;
    let mut tol = solve_tolerances(ctx);
    tol["reduction"] = json!(ropts);
    Ok(Outcome { report, checks, derived: solved_derived(&solved), tolerances: tol })
}

pub fn iterate(ctx: &Ctx) -> Result<Outcome, Failure> {
    let mut checks = Checks::default();
    let (solved, mut report) = run_solve(ctx, &mut checks)?;
    if !solved.rep.curve.is_periodic() {
        return Err(cfg_err(anyhow!("iterate needs a periodic curve")));
    }
    let lag = solved.lagrangian();
    let sopts = ctx.cfg.spectrum_options();
    let k_max = ctx.cfg.k_max;
    ctx.log(&format!("scanning k = 1..{k_max}"));
    let curve = &solved.rep.curve;
    let rows: Vec<_> = (1..=k_max).into_par_iter().map(|k| scan_row(curve, &lag, k, &sopts)).collect();
    let scan = summarize_scan(rows);
    let mut csv = String::from("k,action,m_minus,m_zero_orbit,flags\n");
    for r in &scan.rows {
        csv += &format!("{},{},{},{},{}\n", r.k, num(r.action), r.m_minus, r.m_zero_orbit, r.flags.join(";"));
    }
    ctx.out.write("scan.csv", &csv).map_err(num_err)?;
    checks.flag("rows_ok", scan.rows.iter().all(|r| r.error.is_none()));
    checks.flag("threshold_stable", scan.rows.iter().all(|r| !r.flags.iter().any(|f| f == "ThresholdSensitive")));
    checks.flag("dichotomy_bound", scan.fit.bound_holds);
    report["scan"] = serde_json::to_value(&scan).map_err(num_err)?;
    let mut tol = solve_tolerances(ctx);
    tol["spectrum"] = json!(sopts);
    tol["k_max"] = json!(k_max);
    Ok(Outcome { report, checks, derived: solved_derived(&solved), tolerances: tol })
}

fn kernel_error(curve: &DiscreteCurve, lag: &TauLagrangian, m: usize) -> Option<f64> {
    let k = if curve.is_periodic() {
        kernel_gradient_periodic(curve, lag, m).ok()?
    } else {
        kernel_gradient_path(curve, lag, m).ok()?
    };
    let g = sobolev_gradient(curve, lag, m).ok()?;
    Some(relative_field_error(&k, &g.field))
}

pub fn gradcheck(ctx: &Ctx) -> Result<Outcome, Failure> {
    let (m, model) = ctx.space()?;
    let cfg = ctx.cfg;
    let star = ctx.star(&model, &m)?;
    let lag = match &star {
        Some((_, _, s)) => TauLagrangian::new(s, cfg.lagrangian.tau),
        None => TauLagrangian::base(&model),
    };
    let curve = cfg.initial_curve(None).map_err(cfg_err)?;
    let w = cfg.solver.gram_weight;
    let directions = cfg.samples.min(64);
    let g = gradient_check(&curve, &lag, w, directions, cfg.seed).map_err(num_err)?;
    let mut checks = Checks::default();
    checks.less("fd_error", g.fd_error, 1e-6);
    checks.less("riesz_residual", g.riesz_residual, 1e-10);
    let fine = cfg.initial_curve(Some(2 * curve.len())).map_err(cfg_err)?;
    let (e1, e2) = (kernel_error(&curve, &lag, w), kernel_error(&fine, &lag, w));
    let kernel = match (e1, e2) {
        (Some(a), Some(b)) => {
            checks.less("kernel_error_decreases", b / a, 1.0);
            json!({ "nodes": [curve.len(), fine.len()], "errors": [a, b], "ratio": b / a })
        }
        _ => json!("kernel gradient not available for this manifold or boundary condition"),
    };
    Ok(Outcome {
        report: json!({ "gradient": g, "kernel": kernel }),
        checks,
        derived: derived_json(star.as_ref().map(|s| &s.0), star.as_ref().map(|s| &s.1)),
        tolerances: json!({ "fd_error": 1e-6, "riesz_residual": 1e-10, "directions": directions, "gram_weight": w }),
    })
}

//! Acceptance suite: one PASS/FAIL line per criterion with its runtime.
//!
//! Run with `cargo test -p finsler-morse --test acceptance -- --nocapture`.

use std::f64::consts::{PI, TAU};
use std::time::Instant;

use finsler_morse::action::{
    action, gradient_check, kernel_gradient_path, kernel_gradient_periodic, relative_field_error, sobolev_gradient,
};
use finsler_morse::critpoint::{find_geodesic, shooting_oracle, tau_homotopy_check, SolveOptions, SolveReport};
use finsler_morse::finsler::{
    bounds_estimate, verify_axioms, FourierTerm, Lagrangian, MetricModel, QuadForm, ScalarField,
};
use finsler_morse::linalg::{norm, sub, Mat};
use finsler_morse::loopspace::{iterate, iterate_field, sobolev_inner, BoundaryCondition, DiscreteCurve};
use finsler_morse::manifold::AmbientManifold;
use finsler_morse::morse::{
    great_circle_counts, iterate_scan, ls_reduce, orbit_index, spectrum, Classification, ReductionOptions,
    ScanReport, SpectrumOptions,
};
use finsler_morse::regularize::{build_cutoffs, verify_modification, CutoffHints, ModifiedLagrangian, TauLagrangian};
use finsler_morse::sampling;

struct Outcome {
    id: usize,
    pass: bool,
    secs: f64,
}

fn run(id: usize, title: &str, budget: f64, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let t0 = Instant::now();
    let (ok, detail) = f();
    let secs = t0.elapsed().as_secs_f64();
    let pass = ok && secs < budget;
    println!(
        "{} criterion {id:>2}: {title} [{secs:.2} s / {budget:.0} s] {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    Outcome { id, pass, secs }
}

fn torus() -> AmbientManifold {
    AmbientManifold::flat_torus(&[1.0, 1.0]).unwrap()
}

fn sphere() -> AmbientManifold {
    AmbientManifold::unit_sphere(3)
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

fn noisy_loop(n: usize, seed: u64) -> DiscreteCurve {
    let mut rng = sampling::rng(seed);
    let a = sampling::uniform_vec(&mut rng, 4, -0.08, 0.08);
    DiscreteCurve::from_fn(&torus(), BoundaryCondition::periodic(2), n, move |t| {
        vec![
            t + a[0] * (TAU * t).sin() + a[1] * (2.0 * TAU * t).cos(),
            0.3 + a[2] * (TAU * t).cos() + a[3] * (2.0 * TAU * t).sin(),
        ]
    })
    .unwrap()
}

fn noisy_path(n: usize, seed: u64) -> DiscreteCurve {
    let mut rng = sampling::rng(seed);
    let a = sampling::uniform_vec(&mut rng, 3, -0.2, 0.2);
    let bc = BoundaryCondition::Fixed { start: vec![0.0, 0.0], end: vec![1.0, 0.4] };
    DiscreteCurve::from_fn(&AmbientManifold::euclidean(2), bc, n, move |t| {
        vec![t + a[0] * (PI * t).sin(), 0.4 * t + a[1] * (2.0 * PI * t).sin() + a[2] * (PI * t).sin()]
    })
    .unwrap()
}

fn tilted_equator(n: usize) -> DiscreteCurve {
    DiscreteCurve::from_fn(&sphere(), BoundaryCondition::periodic(3), n, |t| {
        let th = TAU * t;
        vec![th.cos(), th.sin(), 0.05 * (2.0 * th).sin() + 0.025 * th.cos()]
    })
    .unwrap()
}

fn star_for(model: &MetricModel, manifold: &AmbientManifold, c: f64) -> (f64, ModifiedLagrangian) {
    let b = bounds_estimate(model, manifold, 400, 3);
    let p = build_cutoffs(c, &b, &CutoffHints::default()).unwrap();
    (b.alpha_g, ModifiedLagrangian::new(model, &b, &p))
}

fn shooting_closure(rep: &SolveReport, lag: &dyn Lagrangian) -> f64 {
    let c = &rep.curve;
    let v0 = c.spectral_velocity(0).unwrap();
    let shot = shooting_oracle(c.manifold(), lag, c.node(0), &v0, 8000, 0).unwrap();
    shot.position_closure.max(shot.velocity_closure)
}

fn criterion_1() -> (bool, String) {
    let cases = [
        ("euclidean", MetricModel::euclidean(2), torus()),
        ("randers b=(0.5,0)", MetricModel::randers_constant(&[0.5, 0.0]), torus()),
        ("round S2", MetricModel::euclidean(3), sphere()),
    ];
    let mut ok = true;
    let mut detail = String::new();
    for (name, model, m) in cases {
        let r = verify_axioms(&model, &m, 1000, 11);
        let pass = r.homogeneity_residual < 1e-10
            && r.euler_residual < 1e-8
            && r.euler_degree2_residual < 1e-8
            && r.min_gf_eigenvalue > 0.0
            && r.min_f_unit > 0.0;
        ok &= pass;
        detail += &format!(
            "{name}: hom {:.1e} euler {:.1e} min_eig {:.3}; ",
            r.homogeneity_residual, r.euler_residual, r.min_gf_eigenvalue
        );
    }
    (ok, detail)
}

fn criterion_2() -> (bool, String) {
    let mut ok = true;
    let mut detail = String::new();
    for (name, model) in [("euclidean", MetricModel::euclidean(2)), ("randers", MetricModel::randers_constant(&[0.5, 0.0]))] {
        let (_, star) = star_for(&model, &torus(), 1.0);
        let r = verify_modification(&star, &torus(), 1000, 100, 21).unwrap();
        ok &= r.passed() && r.gluing_samples > 0;
        detail += &format!(
            "{name}: glue {:.0e} ({} pts) excess {:.1e} radial_gap {:.2e} min_hess {:.4} >= {:.4}; ",
            r.gluing_defect, r.gluing_samples, r.ordering_excess, r.radial_min_gap, r.min_star_hessian, r.convexity_bound
        );
    }
    (ok, detail)
}

fn criterion_3() -> (bool, String) {
    let model = MetricModel::randers_constant(&[0.5, 0.0]);
    let (alpha, star) = star_for(&model, &torus(), 1.0);
    let basis = Mat::identity(2);
    let mut rng = sampling::rng(31);
    let mut ok = true;
    let mut detail = String::new();
    for tau in [0.0, 0.5, 1.0] {
        let lag = TauLagrangian::new(&star, tau);
        let mut worst = 0.0f64;
        for s in 0..1000 {
            let x = sampling::uniform_vec(&mut rng, 2, 0.0, 1.0);
            let r = if tau == 1.0 && s % 50 == 0 { 0.0 } else { sampling::uniform(&mut rng, 1e-3, 3.0) };
            let v: Vec<f64> = sampling::unit_vec(&mut rng, 2).iter().map(|c| c * r).collect();
            let res = lag
                .legendre(&basis, &x, &v)
                .and_then(|w| lag.legendre_inverse(&basis, &x, &w, alpha))
                .map(|back| norm(&sub(&back, &v)) / (1.0 + norm(&v)));
            worst = worst.max(res.unwrap_or(f64::INFINITY));
        }
        ok &= worst < 1e-8;
        detail += &format!("tau {tau}: {worst:.1e}; ");
    }
    (ok, detail)
}

fn criterion_4() -> (bool, String) {
    let l = conformal();
    let mut fd = 0.0f64;
    let mut riesz = 0.0f64;
    let mut ratios = Vec::new();
    for seed in 0..5 {
        for c in [noisy_loop(64, seed), noisy_path(64, seed)] {
            let g = gradient_check(&c, &l, 1, 8, seed).unwrap();
            fd = fd.max(g.fd_error);
            riesz = riesz.max(g.riesz_residual);
        }
        let err = |c: &DiscreteCurve| {
            let k = if c.is_periodic() {
                kernel_gradient_periodic(c, &l, 1).unwrap()
            } else {
                kernel_gradient_path(c, &l, 1).unwrap()
            };
            relative_field_error(&k, &sobolev_gradient(c, &l, 1).unwrap().field)
        };
        ratios.push(err(&noisy_loop(128, seed)) / err(&noisy_loop(64, seed)));
        ratios.push(err(&noisy_path(128, seed)) / err(&noisy_path(64, seed)));
    }
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    let ok = fd < 1e-6 && riesz < 1e-10 && lo >= 0.4 && hi <= 0.6;
    (ok, format!("fd {fd:.1e} riesz {riesz:.1e} kernel ratio 64->128 in [{lo:.3}, {hi:.3}]"))
}

struct Solved {
    flat: SolveReport,
    randers: SolveReport,
    spheres: Vec<SolveReport>,
}

fn solve_all() -> Solved {
    let opts = SolveOptions::default();
    let flat = find_geodesic(&noisy_loop(64, 7), &MetricModel::euclidean(2), None, &opts).unwrap();
    let randers = find_geodesic(&noisy_loop(64, 8), &MetricModel::randers_constant(&[0.3, 0.0]), None, &opts).unwrap();
    let newton = SolveOptions { newton_switch_tol: f64::INFINITY, ..SolveOptions::default() };
    let spheres = [64, 128, 256]
        .iter()
        .map(|&n| find_geodesic(&tilted_equator(n), &MetricModel::euclidean(3), None, &newton).unwrap())
        .collect();
    Solved { flat, randers, spheres }
}

fn criterion_5(s: &Solved) -> (bool, String) {
    let mut ok = true;
    let mut detail = String::new();
    let e2 = MetricModel::euclidean(2);
    let e3 = MetricModel::euclidean(3);
    let rd = MetricModel::randers_constant(&[0.3, 0.0]);
    let f = &s.flat;
    let flat_ok = f.converged && (f.action - 1.0).abs() < 1e-8 && f.grad_norm < 1e-9;
    ok &= flat_ok;
    detail += &format!("T2 action {:.12} grad {:.1e}; ", f.action, f.grad_norm);
    let r = &s.randers;
    ok &= r.converged && (r.action - 1.69).abs() < 1e-8 && r.grad_norm < 1e-9;
    detail += &format!("randers action {:.12}; ", r.action);
    let target = 4.0 * PI * PI;
    let errs: Vec<(f64, f64)> = s.spheres.iter().map(|r| (r.curve.len() as f64, target - r.action)).collect();
    let c = errs.iter().map(|(n, e)| e / (n * n)).sum::<f64>() / errs.iter().map(|(n, _)| 1.0 / n.powi(4)).sum::<f64>();
    let fit_ok = errs.iter().all(|(n, e)| {
        let model = c / (n * n);
        e / model <= 4.0 && model / e <= 4.0
    });
    let s128 = &s.spheres[1];
    ok &= s.spheres.iter().all(|r| r.converged) && (s128.action - target).abs() < 1e-2 && fit_ok;
    detail += &format!("S2 N=128 action {:.6} (4pi^2 - {:.2e}), C = {c:.3}; ", s128.action, target - s128.action);
    let mut worst_speed = 0.0f64;
    let mut worst_close = 0.0f64;
    for (rep, lag) in [(f, &e2), (r, &rd)].into_iter().chain(s.spheres.iter().map(|x| (x, &e3))) {
        worst_speed = worst_speed.max(rep.speed_ratio);
        worst_close = worst_close.max(shooting_closure(rep, lag));
    }
    ok &= worst_speed < 1e-3 && worst_close < 1e-6;
    detail += &format!("speed sd/mean {worst_speed:.1e} closure {worst_close:.1e}");
    (ok, detail)
}

fn criterion_6(s: &Solved) -> (bool, String) {
    let taus = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut ok = true;
    let mut detail = String::new();
    for (name, rep, model) in [
        ("T2", &s.flat, MetricModel::euclidean(2)),
        ("randers", &s.randers, MetricModel::randers_constant(&[0.3, 0.0])),
    ] {
        let (_, star) = star_for(&model, &torus(), rep.action);
        let th = tau_homotopy_check(&rep.curve, &model, &star, &taus, 1).unwrap();
        ok &= th.passed(1e-9, 1e-10) && th.rows.len() == taus.len();
        detail += &format!("{name}: grad {:.1e} action dev {:.1e}; ", th.max_grad_norm, th.max_action_deviation);
    }
    (ok, detail)
}

struct Scans {
    torus: ScanReport,
    sphere: ScanReport,
}

fn criterion_7(s: &Solved) -> (bool, String, Option<Scans>) {
    let mut ok = true;
    let mut detail = String::new();
    let opts = SpectrumOptions::default();
    let e2 = MetricModel::euclidean(2);
    let e3 = MetricModel::euclidean(3);
    let flat2 = find_geodesic(&noisy_loop(128, 7), &e2, None, &SolveOptions::default()).unwrap();
    let t_base = iterate_scan(&s.flat.curve, &e2, 4, &opts).unwrap();
    let t_fine = iterate_scan(&flat2.curve, &e2, 4, &opts).unwrap();
    let s_base = iterate_scan(&s.spheres[1].curve, &e3, 4, &opts).unwrap();
    let s_fine = iterate_scan(&s.spheres[2].curve, &e3, 4, &opts).unwrap();
    let pairs = |r: &ScanReport| r.rows.iter().map(|x| (x.m_minus, x.m_zero_orbit)).collect::<Vec<_>>();
    let clean = |r: &ScanReport| r.rows.iter().all(|x| x.error.is_none() && !x.flags.iter().any(|f| f == "ThresholdSensitive"));
    ok &= pairs(&t_base).iter().all(|&p| p == (0, 1)) && pairs(&t_base) == pairs(&t_fine);
    ok &= clean(&t_base) && clean(&t_fine) && clean(&s_base) && clean(&s_fine);
    let oracle: Vec<(usize, usize)> = (1..=4).map(great_circle_counts).collect();
    let expected: Vec<(usize, usize)> = (1..=4).map(|k| (2 * k - 1, 2)).collect();
    ok &= oracle == expected && pairs(&s_base) == oracle && pairs(&s_fine) == oracle;
    let sp = spectrum(&s.spheres[1].curve, &e3, &SpectrumOptions { vectors: true, ..SpectrumOptions::default() }).unwrap();
    let res = sp.max_residual.unwrap();
    let o = orbit_index(&sp, &s.spheres[1].curve).unwrap();
    ok &= res < 1e-8 && o.m_zero_orbit <= o.bound;
    detail += &format!(
        "T2 {:?} (2N {:?}); S2 {:?} (2N {:?}); oracle {:?}; eig residual {res:.1e}",
        pairs(&t_base),
        pairs(&t_fine),
        pairs(&s_base),
        pairs(&s_fine),
        oracle
    );
    (ok, detail, Some(Scans { torus: t_base, sphere: s_base }))
}

fn criterion_8(sc: &Scans) -> (bool, String) {
    let s = &sc.sphere;
    let t = &sc.torus;
    let ok = !s.fit.all_zero
        && s.fit.a >= 1.9
        && s.fit.bound_holds
        && t.fit.all_zero
        && s.nullity_constant
        && t.nullity_constant;
    (
        ok,
        format!(
            "S2 a = {:.3} b = {:.3} bound {}; T2 all-zero {}; nullity constant S2 {} T2 {}",
            s.fit.a, s.fit.b, s.fit.bound_holds, t.fit.all_zero, s.nullity_constant, t.nullity_constant
        ),
    )
}

fn criterion_9(s: &Solved) -> (bool, String) {
    let opts = ReductionOptions::default();
    let solver_tol = SolveOptions::default().tol_grad;
    let mut ok = true;
    let mut detail = String::new();
    for (name, curve, model, dim) in [
        ("T2", &s.flat.curve, MetricModel::euclidean(2), 1),
        ("S2", &s.spheres[0].curve, MetricModel::euclidean(3), 2),
    ] {
        let r = ls_reduce(curve, &model, &opts).unwrap();
        let pass = r.null_dim == dim
            && r.h0_residual < 1e-9
            && r.dh0_norm < 1e-4
            && r.spread < 10.0 * solver_tol
            && (r.l_circ_zero - r.action).abs() < 1e-10
            && r.failed.is_empty()
            && r.max_residual < 1e-9
            && r.classification == Classification::DegenerateCriticalManifold;
        ok &= pass;
        detail += &format!(
            "{name}: dim {} h(0) {:.1e} dh(0) {:.1e} spread {:.1e} |L°(0)-A| {:.1e} {} pts; ",
            r.null_dim,
            r.h0_residual,
            r.dh0_norm,
            r.spread,
            (r.l_circ_zero - r.action).abs(),
            r.grid.len()
        );
    }
    (ok, detail)
}

fn criterion_10() -> (bool, String) {
    let mut worst_a = 0.0f64;
    let mut worst_i = 0.0f64;
    let randers = MetricModel::randers(
        QuadForm { base: Mat::identity(2), factor: conformal_factor(), scale: 1.0 },
        vec![ScalarField::constant(0.2), ScalarField::constant(-0.1)],
    );
    let cases: Vec<(DiscreteCurve, MetricModel)> =
        vec![(noisy_loop(32, 3), randers), (tilted_equator(32), MetricModel::euclidean(3))];
    let mut rng = sampling::rng(101);
    for (c, model) in &cases {
        let a1 = action(c, model).unwrap().value;
        let xi = c.to_field(&sampling::uniform_vec(&mut rng, c.dof(), -1.0, 1.0));
        let eta = c.to_field(&sampling::uniform_vec(&mut rng, c.dof(), -1.0, 1.0));
        let ip = sobolev_inner(&xi, &eta, c, 1);
        for m in 1..=4 {
            let cm = iterate(c, m).unwrap();
            let am = action(&cm, model).unwrap().value;
            worst_a = worst_a.max((am - (m * m) as f64 * a1).abs() / am.abs());
            let xm = iterate_field(c, &xi, m).unwrap();
            let em = iterate_field(c, &eta, m).unwrap();
            let ipm = sobolev_inner(&xm, &em, &cm, m);
            worst_i = worst_i.max((ipm - (m * m) as f64 * ip).abs() / ipm.abs().max(1.0));
        }
    }
    (worst_a < 1e-12 && worst_i < 1e-12, format!("action {worst_a:.1e} inner product {worst_i:.1e}"))
}

fn conformal_factor() -> ScalarField {
    ScalarField {
        offset: 1.0,
        terms: vec![FourierTerm { amplitude: 0.2, wavevector: vec![TAU, TAU], phase: 0.3 }],
    }
}

#[test]
fn acceptance() {
    let mut out = Vec::new();
    out.push(run(1, "Finsler axioms on sampled fibers", 1.0, criterion_1));
    out.push(run(2, "modified Lagrangian L*", 5.0, criterion_2));
    out.push(run(3, "Legendre round trip", 5.0, criterion_3));
    out.push(run(4, "gradient triangle", 30.0, criterion_4));
    let t0 = Instant::now();
    let solved = solve_all();
    let solve_secs = t0.elapsed().as_secs_f64();
    let mut c5 = run(5, "geodesic solves", 60.0 - solve_secs, || criterion_5(&solved));
    c5.secs += solve_secs;
    println!("     (criterion 5 includes {solve_secs:.2} s of solves)");
    out.push(c5);
    out.push(run(6, "tau homotopy", 10.0, || criterion_6(&solved)));
    let mut scans = None;
    out.push(run(7, "Morse data", 120.0, || {
        let (ok, d, s) = criterion_7(&solved);
        scans = s;
        (ok, d)
    }));
    let sc = scans.expect("scans");
    out.push(run(8, "iteration dichotomy and nullity pattern", 1.0, || criterion_8(&sc)));
    out.push(run(9, "Lyapunov-Schmidt reduction", 60.0, || criterion_9(&solved)));
    out.push(run(10, "iteration scaling", 1.0, criterion_10));
    let failed: Vec<usize> = out.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    let total: f64 = out.iter().map(|o| o.secs).sum();
    println!("acceptance: {} of {} passed in {total:.1} s", out.len() - failed.len(), out.len());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

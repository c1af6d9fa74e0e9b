use std::f64::consts::TAU;

use finsler_morse::critpoint::{find_geodesic, shooting_oracle, oracle_distance, SolveOptions};
use finsler_morse::finsler::{FourierTerm, MetricModel, QuadForm, ScalarField};
use finsler_morse::linalg::Mat;
use finsler_morse::loopspace::{BoundaryCondition, DiscreteCurve, Monodromy};
use finsler_morse::manifold::AmbientManifold;
use finsler_morse::morse::{classify_critical_groups, orbit_index, spectrum, CriticalGroups, SpectrumOptions};
use finsler_morse::Error;

fn torus() -> AmbientManifold {
    AmbientManifold::flat_torus(&[1.0, 1.0]).unwrap()
}

#[test]
fn diagonal_class_on_randers_torus() {
    // class (1, 1) under a constant wind: the straight diagonal has
    // F = |(1,1)| + b.(1,1)
    let b = [0.2, -0.1];
    let model = MetricModel::randers_constant(&b);
    let init = DiscreteCurve::from_fn(&torus(), BoundaryCondition::periodic(2), 48, |t| {
        vec![t + 0.05 * (TAU * t).sin(), t + 0.03 * (2.0 * TAU * t).cos()]
    })
    .unwrap();
    let rep = find_geodesic(&init, &model, None, &SolveOptions::default()).unwrap();
    assert!(rep.converged);
    let f = 2f64.sqrt() + b[0] + b[1];
    assert!((rep.action - f * f).abs() < 1e-9, "{}", rep.action);
    let spec = spectrum(&rep.curve, &model, &SpectrumOptions::default()).unwrap();
    let oi = orbit_index(&spec, &rep.curve).unwrap();
    assert_eq!((oi.m_minus_orbit, oi.m_zero_orbit), (0, 1));
    let shot =
        shooting_oracle(&torus(), &model, rep.curve.node(0), &rep.curve.spectral_velocity(0).unwrap(), 4800, 100)
            .unwrap();
    assert!(oracle_distance(&rep.curve, &shot) < 1e-8);
}

#[test]
fn bumpy_metric_gives_nondegenerate_orbit() {
    let factor = ScalarField {
        offset: 1.0,
        terms: vec![
            FourierTerm { amplitude: 0.25, wavevector: vec![0.0, TAU], phase: 0.0 },
            FourierTerm { amplitude: 0.05, wavevector: vec![0.0, 2.0 * TAU], phase: 0.7 },
        ],
    };
    let model = MetricModel::riemannian(QuadForm { base: Mat::identity(2), factor, scale: 1.0 });
    let init = DiscreteCurve::from_fn(&torus(), BoundaryCondition::periodic(2), 48, |t| {
        vec![t, 0.45 + 0.02 * (TAU * t).sin()]
    })
    .unwrap();
    let rep = find_geodesic(&init, &model, None, &SolveOptions::default()).unwrap();
    assert!(rep.converged);
    let spec = spectrum(&rep.curve, &model, &SpectrumOptions::default()).unwrap();
    let oi = orbit_index(&spec, &rep.curve).unwrap();
    assert_eq!(oi.m_zero_orbit, 0);
    assert!(spec.gap > 1e3 * spec.thresh);
    assert!(matches!(
        classify_critical_groups(oi.m_minus_orbit, oi.m_zero_orbit, true, None),
        CriticalGroups::Known(_) | CriticalGroups::Symbolic(_)
    ));
}

#[test]
fn antiperiodic_loop_in_the_plane() {
    // with E = diag(-1, 1) the energy is minimized by constant loops on the
    // line x = 0, so descent collapses the curve
    let e = AmbientManifold::euclidean(2);
    let bc = BoundaryCondition::Periodic(Monodromy::from_signs(&[-1.0, 1.0]).unwrap());
    let init = DiscreteCurve::from_fn(&e, bc, 24, |t| vec![(std::f64::consts::PI * t).cos(), 0.3]).unwrap();
    let res = find_geodesic(&init, &MetricModel::euclidean(2), None, &SolveOptions::default());
    assert!(matches!(res, Err(Error::DegenerateShrink { .. })), "{:?}", res.map(|r| r.action));
}

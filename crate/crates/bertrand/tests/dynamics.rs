//! Trajectory integration, conserved-quantity drift, closure
//! detection, and the curvature comparison.

use bertrand::dynamics::{
    curvature_check, detect_closure, integrate, integrate_logged, rational_match,
    time_reversal_defect, DynamicsError, IntegrationSetup, StopReason,
};
use bertrand::invariants::runge_lenz;
use bertrand::phasespace::PhasePoint;
use bertrand::systems::{
    bounded_orbit_setup, build, perlick1_with_real_exponent, Family, HamiltonianSystem, Rational,
    SingularLocus, SystemSpec,
};

fn rat(num: u32, den: u32) -> Rational {
    Rational::new(num, den).unwrap()
}

fn kepler(dim: usize, k: f64, mu: f64, delta: f64) -> HamiltonianSystem {
    build(&SystemSpec { dim, family: Family::KeplerCurved { k, mu, delta } }).unwrap()
}

fn perlick1(dim: usize, beta: Rational, k: f64) -> HamiltonianSystem {
    build(&SystemSpec { dim, family: Family::PerlickI { beta, k, mu: 1.0 } }).unwrap()
}

fn perlick2(gamma: Rational, lambda: f64, delta: f64) -> HamiltonianSystem {
    build(&SystemSpec {
        dim: 2,
        family: Family::PerlickII { gamma, lambda, delta, mu: 1.0 },
    })
    .unwrap()
}

#[test]
fn flat_circular_orbit_stays_on_its_circle() {
    let sys = kepler(2, 0.0, 1.0, 0.0);
    let init = PhasePoint::new(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
    let setup = IntegrationSetup { store_dense: true, ..Default::default() };
    let t_final = 6.0 * std::f64::consts::PI;
    let traj = integrate_logged(&sys, &init, t_final, 1e-12, &setup).unwrap();

    assert_eq!(traj.stop, StopReason::Completed);
    assert!(
        traj.times.windows(2).all(|w| w[0] < w[1]),
        "logged times must increase strictly"
    );
    for state in &traj.states {
        assert!(
            (state.radius() - 1.0).abs() < 1e-9,
            "circular orbit left its circle: r = {}",
            state.radius()
        );
    }
    // The dense output holds the circle between steps as well.
    let mut t = 0.1;
    while t < t_final {
        let pt = traj.sample(t).expect("inside the integrated span");
        assert!((pt.radius() - 1.0).abs() < 1e-9, "dense radius off at t = {t}");
        t += 0.37;
    }

    let report = detect_closure(&traj, 1e-9).unwrap();
    assert!(report.bounded && report.closed);
    let period = report.period.unwrap();
    assert!(
        (period - 2.0 * std::f64::consts::PI).abs() < 1e-6,
        "circular period should be 2 pi, got {period}"
    );
}

#[test]
fn curved_kepler_energy_drift_stays_small() {
    let sys = kepler(2, 0.1, 1.0, 0.0);
    let setup = bounded_orbit_setup(&sys, 0.8, 0.3, 0.4).unwrap();
    let t_final = 10.0 * setup.radial_period;
    let traj = integrate(&sys, &setup.point, t_final, 1e-12).unwrap();
    assert_eq!(traj.stop, StopReason::Completed);
    assert!(
        traj.energy_drift() < 1e-10,
        "energy drift {} over ten radial periods",
        traj.energy_drift()
    );
    assert!(traj.stats.steps > 0 && traj.stats.rhs_evaluations > traj.stats.steps);
}

#[test]
fn registered_invariants_hold_along_the_flow() {
    let sys = kepler(2, 0.1, 1.0, 0.0);
    let inv = runge_lenz(&sys, 1).unwrap();
    let orbit = bounded_orbit_setup(&sys, 0.7, 0.5, 0.45).unwrap();
    let setup = IntegrationSetup { invariants: inv.registered(), ..Default::default() };
    let traj =
        integrate_logged(&sys, &orbit.point, 3.0 * orbit.radial_period, 1e-12, &setup).unwrap();

    // The complex pair is normalized by its joint initial modulus.
    let (re_dev, re0) = traj.invariant_deviation(inv.re_script_s.name()).unwrap();
    let (im_dev, im0) = traj.invariant_deviation(inv.im_script_s.name()).unwrap();
    let modulus = (re0 * re0 + im0 * im0).sqrt();
    assert!(modulus > 1e-6, "invariant should not vanish on a generic orbit");
    assert!(re_dev / modulus < 1e-6, "real-part drift {}", re_dev / modulus);
    assert!(im_dev / modulus < 1e-6, "imaginary-part drift {}", im_dev / modulus);

    let (l_dev, l0) = traj.invariant_deviation("L12").unwrap();
    assert!(l_dev / l0.abs() < 1e-9, "angular momentum drift {}", l_dev / l0.abs());
}

#[test]
fn perlick2_conserves_energy_and_angular_momentum() {
    let sys = perlick2(rat(1, 1), 0.2, 0.05);
    let orbit = bounded_orbit_setup(&sys, 0.6, 0.2, 0.4).unwrap();
    let inv = [bertrand::invariants::angular_momentum(2, 1, 2)];
    let setup = IntegrationSetup { invariants: inv.iter().collect(), ..Default::default() };
    let traj =
        integrate_logged(&sys, &orbit.point, 6.0 * orbit.radial_period, 1e-12, &setup).unwrap();
    assert!(traj.energy_drift() < 1e-9, "energy drift {}", traj.energy_drift());
    let (l_dev, l0) = traj.invariant_deviation("L12").unwrap();
    assert!(l_dev / l0.abs() < 1e-9, "angular momentum drift {}", l_dev / l0.abs());
}

#[test]
fn flat_kepler_ellipse_matches_the_third_law() {
    let sys = kepler(2, 0.0, 1.0, 0.0);
    let init = PhasePoint::new(&[1.2, 0.0], &[0.0, 0.95]).unwrap();
    let energy = 0.5 * 0.95f64.powi(2) - 1.0 / 1.2;
    let a = -1.0 / (2.0 * energy);
    let expected = 2.0 * std::f64::consts::PI * a.powf(1.5);

    let setup = IntegrationSetup { store_dense: true, ..Default::default() };
    let traj = integrate_logged(&sys, &init, 2.6 * expected, 1e-12, &setup).unwrap();
    let report = detect_closure(&traj, 1e-6).unwrap();
    assert!(report.bounded && report.closed);
    let period = report.period.unwrap();
    assert!(
        (period - expected).abs() < 1e-5,
        "third-law period {expected}, detected {period}"
    );
    // An ellipse closes once per radial cycle.
    let ratio = period / report.radial_period.unwrap();
    assert_eq!(rational_match(ratio, 2, 1e-4), Some((1, 1)));
}

#[test]
fn deformed_orbit_closes_at_the_rational_exponent() {
    let sys = perlick1(2, rat(1, 2), 0.0);
    let orbit = bounded_orbit_setup(&sys, 0.9, 0.0, 0.4).unwrap();
    let setup = IntegrationSetup { store_dense: true, ..Default::default() };
    let traj =
        integrate_logged(&sys, &orbit.point, 2.5 * orbit.radial_period, 1e-12, &setup).unwrap();
    let report = detect_closure(&traj, 1e-5).unwrap();
    assert!(report.bounded, "well-prepared orbit must be bounded");
    assert!(report.closed, "miss distance {}", report.miss_distance);

    // Quadrature and trajectory agree on the radial period.
    let t_rad = report.radial_period.unwrap();
    assert!(
        (t_rad - orbit.radial_period).abs() / orbit.radial_period < 1e-3,
        "radial period {t_rad} vs quadrature {}",
        orbit.radial_period
    );

    // The closure period is a small-denominator rational multiple of
    // the radial period.
    let ratio = report.period.unwrap() / t_rad;
    assert!(
        rational_match(ratio, 3, 1e-4).is_some(),
        "period / radial period = {ratio} should be rational"
    );
}

#[test]
fn irrational_exponent_orbit_does_not_close() {
    let beta = 1.0 / 2.0f64.sqrt();
    let sys = perlick1_with_real_exponent(2, beta, 0.0, 1.0).unwrap();
    let orbit = bounded_orbit_setup(&sys, 0.9, 0.0, 0.4).unwrap();
    let setup = IntegrationSetup { store_dense: true, ..Default::default() };
    let traj =
        integrate_logged(&sys, &orbit.point, 50.0 * orbit.radial_period, 1e-10, &setup).unwrap();
    let report = detect_closure(&traj, 1e-5).unwrap();
    assert!(report.bounded);
    assert!(
        !report.closed,
        "irrational-exponent orbit closed with miss {}",
        report.miss_distance
    );
}

#[test]
fn hyperbolic_trajectory_reports_not_bounded() {
    let sys = kepler(2, 0.0, 1.0, 0.0);
    let init = PhasePoint::new(&[1.0, 0.0], &[0.0, 1.6]).unwrap();
    let setup = IntegrationSetup { store_dense: true, ..Default::default() };
    let traj = integrate_logged(&sys, &init, 40.0, 1e-10, &setup).unwrap();
    let report = detect_closure(&traj, 1e-5).unwrap();
    assert!(!report.bounded);
    assert!(!report.closed);
    assert!(report.period.is_none());
}

#[test]
fn forward_then_backward_returns_to_the_start() {
    let sys = kepler(2, 0.1, 1.0, 0.0);
    let orbit = bounded_orbit_setup(&sys, 0.8, 0.3, 0.4).unwrap();
    // The ten-times-tolerance bound is a per-orbit statement: global
    // error grows with the horizon, so round trips are checked up to
    // one radial period.
    for (horizon, tol) in [(0.5, 1e-9), (1.0, 1e-11), (1.0, 1e-12), (1.0, 1e-13)] {
        let defect =
            time_reversal_defect(&sys, &orbit.point, horizon * orbit.radial_period, tol).unwrap();
        assert!(
            defect < 10.0 * tol,
            "reversal defect {defect} exceeds ten times tol {tol} over {horizon} radial periods"
        );
    }
}

#[test]
fn close_approach_to_the_origin_stops_integration() {
    let sys = kepler(2, 0.0, 1.0, 0.0);
    // Purely radial infall: no angular momentum to hold the orbit off
    // the origin.
    let init = PhasePoint::new(&[1.0, 0.0], &[-0.5, 0.0]).unwrap();
    let traj = integrate(&sys, &init, 3.0, 1e-10).unwrap();
    match traj.stop {
        StopReason::SingularApproach { t, distance, locus } => {
            assert_eq!(locus, SingularLocus::Origin);
            assert!(distance < 1e-6, "event distance {distance}");
            assert!(t > 0.0 && t < 3.0, "event time {t}");
            assert!(traj.duration() < 3.0, "trajectory should be truncated");
        }
        StopReason::Completed => panic!("infall must trigger the singular event"),
    }
}

#[test]
fn unchecked_infall_ends_in_step_underflow() {
    let sys = kepler(2, 0.0, 1.0, 0.0);
    let init = PhasePoint::new(&[1.0, 0.0], &[-0.5, 0.0]).unwrap();
    // Disable the singular-approach guard so the stepper runs into the
    // singularity instead of stopping early.
    let setup = IntegrationSetup { singular_threshold: 0.0, ..Default::default() };
    match integrate_logged(&sys, &init, 3.0, 1e-10, &setup) {
        Err(DynamicsError::StepUnderflow { t, radius }) => {
            assert!(t > 0.0 && t < 3.0, "underflow time {t}");
            assert!(radius < 1e-3, "underflow radius {radius}");
        }
        other => panic!("expected step underflow, got {other:?}"),
    }
}

#[test]
fn tolerance_range_is_enforced() {
    let sys = kepler(2, 0.0, 1.0, 0.0);
    let init = PhasePoint::new(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
    for tol in [1e-5, 1e-15, f64::NAN] {
        assert!(matches!(
            integrate(&sys, &init, 1.0, tol),
            Err(DynamicsError::ToleranceOutOfRange(_))
        ));
    }
}

#[test]
fn closure_detection_requires_dense_storage() {
    let sys = kepler(2, 0.0, 1.0, 0.0);
    let init = PhasePoint::new(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
    let traj = integrate(&sys, &init, 10.0, 1e-10).unwrap();
    assert!(matches!(
        detect_closure(&traj, 1e-5),
        Err(DynamicsError::MissingDenseOutput)
    ));
    assert!(traj.sample(1.0).is_none());
}

#[test]
fn sampling_is_confined_to_the_integrated_span() {
    let sys = kepler(2, 0.0, 1.0, 0.0);
    let init = PhasePoint::new(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
    let setup = IntegrationSetup { store_dense: true, ..Default::default() };
    let traj = integrate_logged(&sys, &init, 5.0, 1e-10, &setup).unwrap();
    // At a logged time the dense interpolant reproduces the state.
    let idx = traj.times.len() / 2;
    let sampled = traj.sample(traj.times[idx]).unwrap();
    for (a, b) in sampled.flat().iter().zip(traj.states[idx].flat()) {
        assert!((a - b).abs() < 1e-9, "dense sample disagrees with log");
    }
    assert!(traj.sample(-0.1).is_none());
    assert!(traj.sample(5.1).is_none());
}

#[test]
fn csv_export_is_deterministic_and_complete() {
    let sys = kepler(2, 0.1, 1.0, 0.0);
    let inv = runge_lenz(&sys, 1).unwrap();
    let orbit = bounded_orbit_setup(&sys, 0.8, 0.3, 0.4).unwrap();
    let run = || {
        let setup = IntegrationSetup { invariants: inv.registered(), ..Default::default() };
        let traj =
            integrate_logged(&sys, &orbit.point, orbit.radial_period, 1e-10, &setup).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        (traj.times.len(), String::from_utf8(buf).unwrap())
    };
    let (rows, csv) = run();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), rows + 1, "one header plus one line per logged step");
    let header: Vec<&str> = lines[0].split(',').collect();
    assert_eq!(&header[..6], &["t", "x1", "x2", "p1", "p2", "H"]);
    assert_eq!(header.len(), 6 + inv.registered().len());
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), header.len());
        for field in fields {
            field.parse::<f64>().expect("numeric field");
        }
    }
    // Same configuration, same bytes.
    let (_, csv2) = run();
    assert_eq!(csv, csv2);
}

#[test]
fn rational_match_recovers_simple_ratios() {
    assert_eq!(rational_match(0.5, 10, 1e-9), Some((1, 2)));
    assert_eq!(rational_match(2.0, 10, 1e-9), Some((2, 1)));
    assert_eq!(rational_match(1.6666666667, 5, 1e-6), Some((5, 3)));
    assert_eq!(rational_match(1.0 / 2.0f64.sqrt(), 10, 1e-4), None);
    assert_eq!(rational_match(f64::NAN, 10, 1e-4), None);
    assert_eq!(rational_match(-0.5, 10, 1e-4), None);
}

#[test]
fn curvature_vanishes_in_flat_space() {
    let spec = SystemSpec { dim: 2, family: Family::PerlickI { beta: rat(1, 1), k: 0.0, mu: 1.0 } };
    let report = curvature_check(&spec, &[0.7, 1.0, 1.5, 2.2]).unwrap();
    for s in &report.samples {
        assert_eq!(s.closed_form_3d, 0.0);
        assert_eq!(s.closed_form_2d, 0.0);
    }
    assert!(report.max_deviation < 1e-6, "flat-space deviation {}", report.max_deviation);
}

#[test]
fn planar_curvature_is_constant_for_the_doubled_exponent() {
    let spec = SystemSpec { dim: 2, family: Family::PerlickI { beta: rat(2, 1), k: 0.5, mu: 1.0 } };
    let radii = [0.8, 1.0, 1.3, 1.7];
    let report = curvature_check(&spec, &radii).unwrap();
    for s in &report.samples {
        assert_eq!(s.closed_form_2d, 16.0);
        assert!(
            (s.numeric_2d - 16.0).abs() < 1e-6,
            "planar curvature at r = {}: {}",
            s.radius,
            s.numeric_2d
        );
    }
}

#[test]
fn curvature_matches_the_closed_forms_across_radii() {
    let spec =
        SystemSpec { dim: 3, family: Family::PerlickI { beta: rat(1, 2), k: 0.1, mu: 1.0 } };
    let radii: Vec<f64> = (0..10).map(|i| 0.6 + 0.2 * i as f64).collect();
    let report = curvature_check(&spec, &radii).unwrap();
    assert_eq!(report.samples.len(), 10);
    assert!(report.skipped.is_empty());
    assert!(
        report.max_deviation < 1e-6,
        "closed form vs finite differences: {}",
        report.max_deviation
    );
    let at_13 = report.samples.iter().find(|s| (s.radius - 1.4).abs() < 0.3).unwrap();
    let rho = |r: f64| r.powf(-0.5) + 0.1 * r.powf(0.5);
    let expected = 2.0 * (1.0 - 0.25) * rho(at_13.radius).powi(2) + 24.0 * 0.25 * 0.1;
    assert!((at_13.closed_form_3d - expected).abs() < 1e-12);
}

#[test]
fn curvature_check_guards_its_domain() {
    // A vanishing conformal factor is skipped with a note.
    let spec =
        SystemSpec { dim: 2, family: Family::PerlickI { beta: rat(1, 1), k: -0.5, mu: 1.0 } };
    let report = curvature_check(&spec, &[2.0f64.sqrt(), 0.5]).unwrap();
    assert_eq!(report.skipped.len(), 1);
    assert_eq!(report.samples.len(), 1);

    // Non-positive radii are skipped as well.
    let flat = SystemSpec { dim: 2, family: Family::PerlickI { beta: rat(1, 1), k: 0.0, mu: 1.0 } };
    let report = curvature_check(&flat, &[-1.0, 1.0]).unwrap();
    assert_eq!(report.skipped.len(), 1);

    // The deformed Kepler family is the unit-exponent slice.
    let kep = SystemSpec { dim: 2, family: Family::KeplerCurved { k: 0.2, mu: 1.0, delta: 0.0 } };
    let report = curvature_check(&kep, &[1.0]).unwrap();
    assert!((report.samples[0].closed_form_2d - 8.0 * 0.2).abs() < 1e-15);

    // Families without the conformal radial form are rejected.
    let pii = SystemSpec {
        dim: 2,
        family: Family::PerlickII { gamma: rat(1, 1), lambda: 0.2, delta: 0.0, mu: 1.0 },
    };
    assert!(matches!(
        curvature_check(&pii, &[1.0]),
        Err(DynamicsError::UnsupportedFamily(_))
    ));
}

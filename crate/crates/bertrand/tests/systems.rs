//! Hamiltonian family values, canonical maps, and the identities
//! connecting the families.

use bertrand::phasespace::{gradient_check_max, sample_points, PhaseError, PhasePoint};
use bertrand::systems::{
    angular_rescale, bounded_orbit_setup, build, build_polar,
    coupling_exchange, levi_civita, quadratic_conformal_hamiltonian, quadratic_conformal_split,
    verify_canonical, Family, Rational, SystemSpec,
};
use bertrand::phasespace::Observable;

fn rat(num: u32, den: u32) -> Rational {
    Rational::new(num, den).unwrap()
}

fn kepler(dim: usize, k: f64, mu: f64, delta: f64) -> SystemSpec {
    SystemSpec { dim, family: Family::KeplerCurved { k, mu, delta } }
}

fn perlick1(dim: usize, beta: Rational, k: f64, mu: f64) -> SystemSpec {
    SystemSpec { dim, family: Family::PerlickI { beta, k, mu } }
}

/// Polar points (r, theta, p_r, p_theta) with positive radius.
fn polar_points(n: usize) -> Vec<PhasePoint> {
    (0..n)
        .map(|i| {
            let t = i as f64;
            let r = 0.45 + 0.055 * t;
            let theta = 0.15 + 0.31 * t;
            let pr = 0.6 * (0.8 + 0.7 * t).sin();
            let ptheta = 0.5 + 0.04 * t;
            PhasePoint::new(&[r, theta], &[pr, ptheta]).unwrap()
        })
        .collect()
}

/// Embed a polar point into cartesian coordinates.
fn embed(pt: &PhasePoint) -> PhasePoint {
    let (r, theta, pr, ptheta) = (pt.x(0), pt.x(1), pt.p(0), pt.p(1));
    let (c, s) = (theta.cos(), theta.sin());
    PhasePoint::new(
        &[r * c, r * s],
        &[pr * c - ptheta / r * s, pr * s + ptheta / r * c],
    )
    .unwrap()
}

#[test]
fn kepler_values_at_the_reference_point() {
    // Circular-seed point x = (1, 0), p = (0, 1): at k = 0 the value is
    // 1/2 - 1 = -1/2; at k = 0.1 it is 1.21/2 - 0.9 = -0.295.
    let pt = PhasePoint::new(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
    let flat = build(&kepler(2, 0.0, 1.0, 0.0)).unwrap();
    assert!((flat.eval(&pt).unwrap() + 0.5).abs() < 1e-15);
    let curved = build(&kepler(2, 0.1, 1.0, 0.0)).unwrap();
    assert!((curved.eval(&pt).unwrap() + 0.295).abs() < 1e-15);
}

#[test]
fn deformed_kepler_value_at_rest() {
    // beta = 1/2, k = 0, mu = 1 at x = (1, 0), p = 0: pure potential -1.
    let sys = build(&perlick1(2, rat(1, 2), 0.0, 1.0)).unwrap();
    let pt = PhasePoint::new(&[1.0, 0.0], &[0.0, 0.0]).unwrap();
    assert!((sys.eval(&pt).unwrap() + 1.0).abs() < 1e-15);
}

#[test]
fn unit_exponent_reduces_to_kepler() {
    let k = 0.1;
    let mu = 1.3;
    let delta = 0.07;
    let dk = build(&perlick1(2, rat(1, 1), k, mu)).unwrap();
    let kc = build(&kepler(2, k, mu, delta)).unwrap();
    for pt in sample_points(2, 20, 5, Default::default()) {
        let a = dk.eval(&pt).unwrap();
        let b = kc.eval(&pt).unwrap() - 4.0 * mu * delta;
        assert!(
            (a - b).abs() <= 1e-14 * (1.0 + a.abs()),
            "beta = 1 must match the curved Kepler shape: {} vs {}",
            a,
            b
        );
    }
}

#[test]
fn zero_barriers_reduce_to_the_deformed_kepler_exactly() {
    let spec = SystemSpec {
        dim: 2,
        family: Family::TTWCurved { beta: rat(3, 2), k: 0.1, mu: 1.0, b1: 0.0, b2: 0.0 },
    };
    let ttw = build(&spec).unwrap();
    let plain = build(&perlick1(2, rat(3, 2), 0.1, 1.0)).unwrap();
    for pt in sample_points(2, 20, 7, Default::default()) {
        let a = ttw.h.eval(&pt).unwrap();
        let b = plain.h.eval(&pt).unwrap();
        assert_eq!(a.to_bits(), b.to_bits(), "b = 0 must degrade bit-exactly");
    }
}

#[test]
fn kinetic_part_factors_through_the_casimir() {
    // (J3^2 + C^(N)) / J- equals J+ pointwise: the angular square enters
    // the Hamiltonians through the Casimir of the realization.
    use bertrand::coalgebra::{realize, RealizationKind};
    for (dim, kind) in [
        (2usize, RealizationKind::Cartesian),
        (3, RealizationKind::Cartesian),
        (2, RealizationKind::Centrifugal { b: vec![0.3, 0.8] }),
    ] {
        let real = realize(dim, kind).unwrap();
        for pt in sample_points(dim, 20, 11, Default::default()) {
            let j3 = real.j3.eval(&pt).unwrap();
            let c = real.casimir().eval(&pt).unwrap();
            let jm = real.j_minus.eval(&pt).unwrap();
            let jp = real.j_plus.eval(&pt).unwrap();
            let recomposed = (j3 * j3 + c) / jm;
            assert!(
                (recomposed - jp).abs() <= 1e-12 * (1.0 + jp.abs()),
                "Casimir decomposition of the kinetic term failed: {} vs {}",
                recomposed,
                jp
            );
        }
    }
}

#[test]
fn polar_and_cartesian_builds_agree() {
    let specs = vec![
        kepler(2, 0.1, 1.0, 0.05),
        perlick1(2, rat(1, 2), 0.1, 1.0),
        perlick1(2, rat(2, 1), -0.05, 0.8),
        SystemSpec {
            dim: 2,
            family: Family::PerlickII { gamma: rat(2, 1), lambda: 0.2, delta: 0.05, mu: 1.0 },
        },
        SystemSpec {
            dim: 2,
            family: Family::DarbouxCCM { lambda: 0.2, delta: 0.05, energy: 0.4 },
        },
    ];
    for spec in specs {
        let cart = build(&spec).unwrap();
        let polar = build_polar(&spec).unwrap();
        for pt in polar_points(20) {
            if !cart.admissible.contains_radius(pt.x(0)) {
                continue;
            }
            let a = polar.eval(&pt).unwrap();
            let b = cart.h.eval(&embed(&pt)).unwrap();
            assert!(
                (a - b).abs() <= 1e-12 * (1.0 + b.abs()),
                "polar/cartesian mismatch for {} at r = {}: {} vs {}",
                spec.family.name(),
                pt.x(0),
                a,
                b
            );
        }
    }
}

#[test]
fn levi_civita_reference_points_and_canonicality() {
    let lc = levi_civita();
    let a = lc
        .apply(&PhasePoint::new(&[1.0, 0.0], &[0.3, 0.7]).unwrap())
        .unwrap();
    assert!((a.x(0) - 0.5).abs() < 1e-15 && a.x(1).abs() < 1e-15);
    assert!((a.p(0) - 0.3).abs() < 1e-15 && (a.p(1) - 0.7).abs() < 1e-15);

    let b = lc
        .apply(&PhasePoint::new(&[1.0, 1.0], &[0.2, 0.6]).unwrap())
        .unwrap();
    assert!(b.x(0).abs() < 1e-15 && (b.x(1) - 1.0).abs() < 1e-15);
    assert!((b.p(0) - (0.2 - 0.6) / 2.0).abs() < 1e-15);
    assert!((b.p(1) - (0.2 + 0.6) / 2.0).abs() < 1e-15);

    let pts = sample_points(2, 20, 13, Default::default());
    let worst = verify_canonical(&lc, &pts).unwrap();
    assert!(worst < 1e-10, "Levi-Civita canonicality residual {}", worst);
}

#[test]
fn levi_civita_carries_kepler_to_the_quadratic_conformal_system() {
    // With k = -4 lambda^2 and mu~ = 2 mu, H_kepler pulled back through
    // the square map equals T - mu~ U including the delta terms.
    let lambda = 0.3f64;
    let k = -4.0 * lambda * lambda;
    let mu = 0.9;
    let delta = 0.06;
    let kc = build(&kepler(2, k, mu, delta)).unwrap();
    let target = quadratic_conformal_hamiltonian(lambda, 2.0 * mu, delta);
    let lc = levi_civita();
    let pulled = lc.pullback(&kc.h, "H_kepler . levi_civita");
    for pt in sample_points(2, 20, 17, Default::default()) {
        let a = pulled.eval(&pt).unwrap();
        let b = target.eval(&pt).unwrap();
        assert!(
            (a - b).abs() <= 1e-10 * (1.0 + b.abs()),
            "square-map image differs at {:?}: {} vs {}",
            pt,
            a,
            b
        );
    }
}

#[test]
fn coupling_exchange_reference_behaviour() {
    // With U = 1 and E = 0 the exchange returns T + V unchanged.
    let t = Observable::build("T", 2, |a, v| a.sum_of_squares(&v.p));
    let v = Observable::build("V", 2, |a, v| a.sum_of_squares(&v.x));
    let one = Observable::build("1", 2, |a, _| a.konst(1.0));
    let ex = coupling_exchange(&t, &v, &one, 0.0, "exchanged");
    for pt in sample_points(2, 10, 19, Default::default()) {
        let want = t.eval(&pt).unwrap() + v.eval(&pt).unwrap();
        let got = ex.eval(&pt).unwrap();
        assert!((got - want).abs() <= 1e-15 * (1.0 + want.abs()));
    }
}

#[test]
fn coupling_exchange_reproduces_the_darboux_family() {
    // Exchanging the coupling of the quadratic-conformal system at
    // operator energy E gives the DarbouxCCM family member with
    // energy parameter -E.
    let lambda = 0.25;
    let delta = 0.04;
    let e_op = -0.37;
    let (t, u) = quadratic_conformal_split(lambda, delta);
    let zero = Observable::build("0", 2, |a, _| a.konst(0.0));
    let exchanged = coupling_exchange(&t, &zero, &u, e_op, "quadconf exchanged");
    let spec = SystemSpec {
        dim: 2,
        family: Family::DarbouxCCM { lambda, delta, energy: -e_op },
    };
    let fam = build(&spec).unwrap();
    for pt in sample_points(2, 20, 23, Default::default()) {
        let a = exchanged.eval(&pt).unwrap();
        let b = fam.h.eval(&pt).unwrap();
        assert!(
            (a - b).abs() <= 1e-12 * (1.0 + b.abs()),
            "exchange image differs from the family build: {} vs {}",
            a,
            b
        );
    }
}

#[test]
fn angular_rescale_reference_point_and_canonicality() {
    // At beta = 1/2 the radius 4 maps to 2, and the map is canonical.
    let map = angular_rescale(rat(1, 2));
    let pt = PhasePoint::new(&[4.0, 0.8], &[0.3, 0.9]).unwrap();
    let out = map.apply(&pt).unwrap();
    assert!((out.x(0) - 2.0).abs() < 1e-15, "4^(1/2) = 2");
    assert!((out.x(1) - 0.4).abs() < 1e-15, "theta scales by beta");
    // p_r' = (1/beta) r'^(1-beta) p_r = 2 * 4^(1/2) * 0.3 = 1.2
    assert!((out.p(0) - 1.2).abs() < 1e-14);
    assert!((out.p(1) - 1.8).abs() < 1e-15, "p_theta scales by 1/beta");

    for beta in [rat(1, 2), rat(2, 1), rat(3, 2), rat(1, 3)] {
        let map = angular_rescale(beta);
        let worst = verify_canonical(&map, &polar_points(20)).unwrap();
        assert!(
            worst < 1e-10,
            "rescale at {} canonicality residual {}",
            beta,
            worst
        );
    }
}

#[test]
fn unit_exponent_rescale_is_the_identity() {
    let map = angular_rescale(rat(1, 1));
    for pt in polar_points(10) {
        let out = map.apply(&pt).unwrap();
        assert_eq!(out.flat(), pt.flat(), "beta = 1 rescale must be the identity");
    }
}

#[test]
fn rescale_carries_the_deformed_family_to_the_kepler_shape() {
    // H_beta(mu; z) = beta^2 (H_1(mu / beta^2, delta; Phi(z)) - 4 (mu / beta^2) delta)
    // pointwise in the polar chart.
    let k = 0.1;
    let mu = 1.0;
    let delta = 0.05;
    for beta in [rat(1, 2), rat(2, 1), rat(1, 3), rat(3, 2)] {
        let b = beta.value();
        let deformed = build_polar(&perlick1(2, beta, k, mu)).unwrap();
        let mu_k = mu / (b * b);
        let kepler_polar = build_polar(&kepler(2, k, mu_k, delta)).unwrap();
        let map = angular_rescale(beta);
        let pulled = map.pullback(&kepler_polar, "H_kepler . rescale");
        for pt in polar_points(20) {
            let lhs = deformed.eval(&pt).unwrap();
            let rhs = b * b * (pulled.eval(&pt).unwrap() - 4.0 * mu_k * delta);
            assert!(
                (lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()),
                "rescale identity failed at beta = {}, {:?}: {} vs {}",
                beta,
                pt,
                lhs,
                rhs
            );
        }
    }
}

#[test]
fn quadratic_conformal_family_restricts_through_the_rescale() {
    // H_II at exponent gamma, composed with the rescale r = r'^(1/gamma),
    // equals gamma^2 times the DarbouxCCM Hamiltonian at energy mu / gamma^2.
    let lambda = 0.2;
    let delta = 0.05;
    let mu = 1.0;
    for gamma in [rat(2, 1), rat(1, 2), rat(3, 2)] {
        let g = gamma.value();
        let pii = build_polar(&SystemSpec {
            dim: 2,
            family: Family::PerlickII { gamma, lambda, delta, mu },
        })
        .unwrap();
        let ccm = build_polar(&SystemSpec {
            dim: 2,
            family: Family::DarbouxCCM { lambda, delta, energy: mu / (g * g) },
        })
        .unwrap();
        let map = angular_rescale(gamma.inverse());
        let pulled = map.pullback(&pii, "H_II . rescale");
        for pt in polar_points(15) {
            let lhs = pulled.eval(&pt).unwrap();
            let rhs = g * g * ccm.eval(&pt).unwrap();
            assert!(
                (lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()),
                "restriction identity failed at gamma = {}: {} vs {}",
                gamma,
                lhs,
                rhs
            );
        }
    }
}

#[test]
fn hamiltonian_gradients_pass_the_finite_difference_check() {
    let specs = vec![
        kepler(3, 0.1, 1.0, 0.05),
        perlick1(2, rat(1, 2), 0.1, 1.0),
        SystemSpec {
            dim: 2,
            family: Family::PerlickII { gamma: rat(2, 1), lambda: 0.2, delta: 0.05, mu: 1.0 },
        },
        SystemSpec {
            dim: 2,
            family: Family::DarbouxCCM { lambda: 0.2, delta: 0.05, energy: 0.4 },
        },
        SystemSpec {
            dim: 2,
            family: Family::TTWCurved { beta: rat(2, 1), k: 0.1, mu: 1.0, b1: 0.4, b2: 0.7 },
        },
    ];
    for spec in specs {
        let sys = build(&spec).unwrap();
        let pts = sample_points(spec.dim, 20, 31, sys.admissible.sample_region(spec.dim));
        let worst = gradient_check_max(&sys.h, &pts, 1e-5).unwrap();
        assert!(
            worst < 1e-6,
            "gradient check for {} failed: {}",
            spec.family.name(),
            worst
        );
    }
}

#[test]
fn rational_exponents_are_validated() {
    assert!(Rational::parse("1/2").is_ok());
    assert!(Rational::parse("7").is_ok(), "bare integers are m/1");
    assert!(Rational::parse("2/4").is_err(), "not in lowest terms");
    assert!(Rational::parse("0/3").is_err(), "zero numerator");
    assert!(Rational::parse("3/0").is_err(), "zero denominator");
    assert!(Rational::parse("-1/2").is_err(), "negative exponent");
    assert!(Rational::parse("x/y").is_err());
    assert_eq!(rat(3, 2).inverse(), rat(2, 3));
    assert_eq!(format!("{}", rat(5, 3)), "5/3");
}

#[test]
fn system_specs_round_trip_through_json() {
    let specs = vec![
        kepler(3, -0.2, 1.0, 0.05),
        perlick1(2, rat(2, 3), 0.1, 1.0),
        SystemSpec {
            dim: 2,
            family: Family::TTWCurved { beta: rat(2, 1), k: 0.0, mu: 1.0, b1: 0.3, b2: 0.5 },
        },
    ];
    for spec in specs {
        let text = serde_json::to_string(&spec).unwrap();
        let back: SystemSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec, "round trip must be lossless: {}", text);
    }

    let parsed: SystemSpec = serde_json::from_str(
        r#"{"family": "PerlickI", "dim": 2, "beta": "1/2", "k": 0.1, "mu": 1.0}"#,
    )
    .unwrap();
    assert_eq!(parsed, perlick1(2, rat(1, 2), 0.1, 1.0));

    assert!(
        serde_json::from_str::<SystemSpec>(
            r#"{"family": "PerlickI", "dim": 2, "beta": "2/4", "k": 0.1, "mu": 1.0}"#
        )
        .is_err(),
        "exponents not in lowest terms must be rejected at parse time"
    );
    assert!(
        serde_json::from_str::<SystemSpec>(r#"{"family": "Nonsense", "dim": 2}"#).is_err(),
        "unknown family tags must be rejected"
    );
}

#[test]
fn invalid_parameters_are_rejected() {
    assert!(build(&kepler(1, 0.0, 1.0, 0.0)).is_err(), "need two degrees of freedom");
    assert!(build(&kepler(2, 0.0, -1.0, 0.0)).is_err(), "mu must be positive");
    let ttw3 = SystemSpec {
        dim: 3,
        family: Family::TTWCurved { beta: rat(1, 1), k: 0.0, mu: 1.0, b1: 0.1, b2: 0.1 },
    };
    assert!(build(&ttw3).is_err(), "the barrier family is planar");
}

#[test]
fn vanishing_denominator_shell_is_excluded() {
    // lambda = 0.2, delta = 0.3 > lambda: U has zeros at r^2 =
    // (delta +- sqrt(delta^2 - lambda^2)) / lambda^2.
    let spec = SystemSpec {
        dim: 2,
        family: Family::DarbouxCCM { lambda: 0.2, delta: 0.3, energy: 0.1 },
    };
    let sys = build(&spec).unwrap();
    let (lo, hi) = sys.admissible.excluded_annulus.expect("annulus must be detected");
    for r in [lo, hi] {
        let u = 1.0 / (r * r) + 0.04 * r * r - 0.6;
        assert!(u.abs() < 1e-10, "annulus edges must be zeros of U, got {}", u);
    }
    let inside = PhasePoint::new(&[2.5, 0.0], &[0.1, 0.1]).unwrap();
    assert!(lo < 2.5 && 2.5 < hi, "test point should sit inside the shell");
    match sys.eval(&inside) {
        Err(PhaseError::OutsideAdmissibleRegion { .. }) => {}
        other => panic!("expected a domain error inside the excluded shell, got {:?}", other),
    }
    let outside = PhasePoint::new(&[1.0, 0.0], &[0.1, 0.1]).unwrap();
    assert!(sys.eval(&outside).is_ok());
}

#[test]
fn negative_curvature_bounds_the_chart() {
    let sys = build(&kepler(2, -0.36, 1.0, 0.0)).unwrap();
    assert!((sys.admissible.r_max - 1.0 / 0.6).abs() < 1e-12);
    let beyond = PhasePoint::new(&[2.0, 0.0], &[0.0, 0.1]).unwrap();
    assert!(sys.eval(&beyond).is_err(), "points beyond the conformal zero are rejected");
}

#[test]
fn bounded_orbit_setup_matches_kepler_reference_values() {
    // Flat Kepler at L = 1: the effective-potential well sits at r = 1
    // with energy -1/2, and the radial period at energy E is the orbital
    // period 2 pi (-2 E)^(-3/2).
    let sys = build(&kepler(2, 0.0, 1.0, 0.0)).unwrap();
    let setup = bounded_orbit_setup(&sys, 1.0, 0.4, 0.5).unwrap();
    let h = sys.eval(&setup.point).unwrap();
    assert!(
        (h - setup.energy).abs() <= 1e-12 * (1.0 + h.abs()),
        "initial point must sit on the reported energy: {} vs {}",
        h,
        setup.energy
    );
    let want_period = 2.0 * std::f64::consts::PI * (-2.0 * setup.energy).powf(-1.5);
    assert!(
        (setup.radial_period - want_period).abs() <= 1e-5 * want_period,
        "flat-Kepler radial period {} differs from the third-law value {}",
        setup.radial_period,
        want_period
    );
    let (r_in, r_out) = setup.turning_points;
    assert!(r_in < 1.0 && 1.0 < r_out, "turning points must bracket the well");
    let profile = sys.radial_profile().unwrap();
    for r in [r_in, r_out] {
        assert!(
            (profile.v_eff(r, setup.angular_charge) - setup.energy).abs() < 1e-9,
            "turning points must sit on the energy level"
        );
    }
}

#[test]
fn real_exponent_control_carries_its_own_profile() {
    let sys = bertrand::systems::perlick1_with_real_exponent(2, 0.7071, 0.0, 1.0).unwrap();
    assert_eq!(sys.real_exponent, Some(0.7071));
    let profile = sys.radial_profile().unwrap();
    // At r = 2 the potential is -mu r^(-beta) with the real exponent.
    let want = -(2.0f64).powf(-0.7071);
    assert!((profile.potential(2.0) - want).abs() < 1e-14);
}

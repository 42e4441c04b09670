//! Constants of motion: angular momenta, the complex Runge-Lenz
//! invariants of the deformed Kepler families, the barrier-family
//! variant, the coupling-exchange substitution, functional
//! independence, and the conic orbit equation.

use bertrand::invariants::{
    angular_momenta, angular_momentum, ccm_runge_lenz, independence_min_rank, runge_lenz,
    ttw_invariant, verify_commutation, InvariantError, OrbitEquation,
};
use bertrand::phasespace::{poisson_bracket, sample_points, Observable, PhasePoint};
use bertrand::systems::{build, Family, HamiltonianSystem, Rational, SystemSpec};

fn rat(num: u32, den: u32) -> Rational {
    Rational::new(num, den).unwrap()
}

fn kepler(dim: usize, k: f64, mu: f64, delta: f64) -> HamiltonianSystem {
    build(&SystemSpec { dim, family: Family::KeplerCurved { k, mu, delta } }).unwrap()
}

fn perlick1(dim: usize, beta: Rational, k: f64) -> HamiltonianSystem {
    build(&SystemSpec { dim, family: Family::PerlickI { beta, k, mu: 1.0 } }).unwrap()
}

fn ttw(beta: Rational, k: f64, b1: f64, b2: f64) -> HamiltonianSystem {
    build(&SystemSpec { dim: 2, family: Family::TTWCurved { beta, k, mu: 1.0, b1, b2 } }).unwrap()
}

/// Admissible sample points for a system.
fn admissible_points(sys: &HamiltonianSystem, count: usize, seed: u64) -> Vec<PhasePoint> {
    let dim = sys.spec.dim;
    let pts = sample_points(dim, count, seed, sys.admissible.sample_region(dim));
    let pts: Vec<_> = pts
        .into_iter()
        .filter(|pt| sys.admissible.check(pt, "sample").is_ok())
        .collect();
    assert!(pts.len() >= count / 2, "admissible sampling rejected too many points");
    pts
}

/// Planar polar state (r, theta, p_r, p_theta) as a cartesian phase point.
fn embed_polar(r: f64, theta: f64, pr: f64, ptheta: f64) -> PhasePoint {
    let (s, c) = theta.sin_cos();
    PhasePoint::new(
        &[r * c, r * s],
        &[pr * c - ptheta * s / r, pr * s + ptheta * c / r],
    )
    .unwrap()
}

/// The cartesian Casimir |x|^2 |p|^2 - (x.p)^2 at a point.
fn casimir_value(pt: &PhasePoint) -> f64 {
    let dim = pt.dim();
    let mut x2 = 0.0;
    let mut p2 = 0.0;
    let mut xp = 0.0;
    for i in 0..dim {
        x2 += pt.x(i) * pt.x(i);
        p2 += pt.p(i) * pt.p(i);
        xp += pt.x(i) * pt.p(i);
    }
    x2 * p2 - xp * xp
}

/// |{H, F}| scaled by the gradient magnitudes, the roundoff-relative
/// measure of a vanishing bracket.
fn normalized_bracket(sys: &HamiltonianSystem, f: &Observable, pt: &PhasePoint) -> f64 {
    let raw = poisson_bracket(&sys.h, f, pt).unwrap().abs();
    let gh = sys.h.eval_gradient(pt).unwrap();
    let gf = f.eval_gradient(pt).unwrap();
    let norm = |g: &bertrand::phasespace::Gradient| -> f64 {
        g.dx.iter().chain(&g.dp).map(|v| v * v).sum::<f64>().sqrt()
    };
    raw / (1.0 + norm(&gh) * norm(&gf))
}

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1.0)
}

#[test]
fn angular_momenta_enumerate_the_planes() {
    let ls = angular_momenta(3);
    let names: Vec<_> = ls.iter().map(|l| l.name().to_string()).collect();
    assert_eq!(names, ["L12", "L13", "L23"]);
    assert_eq!(angular_momenta(2).len(), 1);
    assert_eq!(angular_momenta(5).len(), 10);

    let l12 = angular_momentum(3, 1, 2);
    let pt = PhasePoint::new(&[1.0, 0.0, 0.5], &[0.2, 1.0, -0.3]).unwrap();
    assert_eq!(l12.eval(&pt).unwrap(), 1.0 * 1.0 - 0.0 * 0.2);
}

#[test]
fn angular_momenta_commute_with_radial_hamiltonians() {
    let systems = [kepler(3, 0.1, 1.0, 0.0), perlick1(3, rat(2, 1), 0.1)];
    for sys in &systems {
        for l in angular_momenta(3) {
            let worst = verify_commutation(sys, &l, 100, 11).unwrap();
            assert!(
                worst < 1e-10,
                "{{H, {}}} reached {worst:.3e} for {}",
                l.name(),
                sys.h.name()
            );
        }
    }
}

#[test]
fn flat_kepler_runge_lenz_is_the_eccentricity_vector() {
    for dim in [2usize, 3] {
        let sys = kepler(dim, 0.0, 1.0, 0.0);
        let set = runge_lenz(&sys, 1).unwrap();
        let display = set.re_s_display.as_ref().unwrap();
        let flat = Observable::build("flat LRL x-component", dim, |a, v| {
            let p2 = a.sum_of_squares(&v.p);
            let xp = a.dot(&v.x, &v.p);
            let x2 = a.sum_of_squares(&v.x);
            let r = a.sqrt(x2);
            let t1 = a.mul(p2, v.x[0]);
            let t2 = a.mul(xp, v.p[0]);
            let t3 = a.div(v.x[0], r);
            let s = a.sub(t1, t2);
            a.sub(s, t3)
        });
        for pt in admissible_points(&sys, 30, 23) {
            let got = display.eval(&pt).unwrap();
            let want = flat.eval(&pt).unwrap();
            assert!(rel_err(got, want) < 1e-12, "dim {dim}: {got} vs {want}");
        }
    }

    // Circular orbit: the eccentricity vector vanishes.
    let sys = kepler(2, 0.0, 1.0, 0.0);
    let set = runge_lenz(&sys, 1).unwrap();
    let circ = PhasePoint::new(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
    let re = set.re_s_display.as_ref().unwrap().eval(&circ).unwrap();
    assert!(re.abs() < 1e-14, "circular eccentricity came out {re:.3e}");
}

#[test]
fn real_part_display_matches_the_complex_construction() {
    for dim in [2usize, 3] {
        let sys = kepler(dim, 0.1, 1.0, 0.0);
        let set = runge_lenz(&sys, 1).unwrap();
        let s = set.s.as_ref().unwrap();
        let display = set.re_s_display.as_ref().unwrap();
        for pt in admissible_points(&sys, 30, 29) {
            let got = display.eval(&pt).unwrap();
            let want = s.eval(&pt).unwrap().re;
            assert!(rel_err(got, want) < 1e-12, "dim {dim}: {got} vs {want}");
        }
    }
}

#[test]
fn imaginary_part_displays_are_consistent() {
    for dim in [2usize, 3] {
        let sys = kepler(dim, 0.1, 1.0, 0.0);
        let set = runge_lenz(&sys, 1).unwrap();
        let s = set.s.as_ref().unwrap();
        let im_d = set.im_s_display.as_ref().unwrap();
        let im_sc_d = set.im_s_sqrtc_display.as_ref().unwrap();
        for pt in admissible_points(&sys, 30, 31) {
            let sqrt_c = casimir_value(&pt).sqrt();
            let im = im_d.eval(&pt).unwrap();
            let im_sc = im_sc_d.eval(&pt).unwrap();
            assert!(
                rel_err(im * sqrt_c, im_sc) < 1e-10,
                "dim {dim}: Im * sqrtC {} vs display {}",
                im * sqrt_c,
                im_sc
            );
            let want = s.eval(&pt).unwrap().im;
            assert!(rel_err(im, want) < 1e-12, "dim {dim}: {im} vs complex {want}");
        }
    }
}

#[test]
fn coalgebra_and_expanded_runge_lenz_forms_agree() {
    let k = 0.1;
    let mu = 0.9;
    let sys = kepler(3, k, mu, 0.0);
    let set = runge_lenz(&sys, 1).unwrap();
    let display = set.re_s_display.as_ref().unwrap();
    // (1 - k x^2) p^2 x_1 + 2 k (x.p)^2 x_1 - (1 + k x^2)(x.p) p_1
    // - mu x_1 / r, the fully expanded component.
    let expanded = Observable::build("expanded component", 3, |a, v| {
        let x2 = a.sum_of_squares(&v.x);
        let p2 = a.sum_of_squares(&v.p);
        let xp = a.dot(&v.x, &v.p);
        let one = a.konst(1.0);
        let kx2 = a.scale(k, x2);
        let f_minus = a.sub(one, kx2);
        let f_plus = a.add(one, kx2);
        let t1 = a.mul(f_minus, p2);
        let t1 = a.mul(t1, v.x[0]);
        let xp2 = a.square(xp);
        let t2 = a.mul(xp2, v.x[0]);
        let t2 = a.scale(2.0 * k, t2);
        let t3 = a.mul(f_plus, xp);
        let t3 = a.mul(t3, v.p[0]);
        let r = a.sqrt(x2);
        let t4 = a.div(v.x[0], r);
        let t4 = a.scale(mu, t4);
        let s = a.add(t1, t2);
        let s = a.sub(s, t3);
        a.sub(s, t4)
    });
    for pt in admissible_points(&sys, 40, 37) {
        let got = display.eval(&pt).unwrap();
        let want = expanded.eval(&pt).unwrap();
        assert!(rel_err(got, want) < 1e-12, "{got} vs {want}");
    }
}

#[test]
fn classic_invariants_commute_with_the_hamiltonian() {
    let mut systems = Vec::new();
    for dim in [2usize, 3] {
        for k in [0.0, 0.1] {
            systems.push(kepler(dim, k, 1.0, 0.0));
        }
    }
    systems.push(perlick1(2, rat(1, 1), 0.1));
    for sys in &systems {
        let set = runge_lenz(sys, 1).unwrap();
        for inv in [
            set.re_s_display.as_ref().unwrap(),
            set.im_s_sqrtc_display.as_ref().unwrap(),
        ] {
            let worst = verify_commutation(sys, inv, 50, 41).unwrap();
            assert!(
                worst < 1e-10,
                "{{H, {}}} reached {worst:.3e} for {}",
                inv.name(),
                sys.h.name()
            );
        }
    }
}

#[test]
fn sqrt_a_matches_its_polar_form() {
    // In the plane the axis factor is p_theta e^{-i theta} for positive
    // angular momentum, independent of any Hamiltonian.
    let sys = kepler(2, 0.1, 1.0, 0.0);
    let set = runge_lenz(&sys, 1).unwrap();
    for t in 0..12 {
        let r = 0.5 + 0.08 * t as f64;
        let theta = 0.2 + 0.45 * t as f64;
        let pr = 0.7 * (0.3 + 0.5 * t as f64).sin();
        let ptheta = 0.4 + 0.07 * t as f64;
        let pt = embed_polar(r, theta, pr, ptheta);
        let got = set.sqrt_a.eval(&pt).unwrap();
        let want_re = ptheta * theta.cos();
        let want_im = -ptheta * theta.sin();
        assert!((got.re - want_re).abs() < 1e-12, "re {} vs {}", got.re, want_re);
        assert!((got.im - want_im).abs() < 1e-12, "im {} vs {}", got.im, want_im);
    }
}

#[test]
fn higher_order_invariant_commutes_pointwise() {
    for dim in [2usize, 3] {
        for beta in [rat(1, 2), rat(2, 1)] {
            for k in [0.0, 0.1] {
                let sys = perlick1(dim, beta, k);
                let set = runge_lenz(&sys, 1).unwrap();
                for inv in [&set.re_script_s, &set.im_script_s] {
                    let mut worst = 0.0f64;
                    for pt in admissible_points(&sys, 40, 43) {
                        worst = worst.max(normalized_bracket(&sys, inv, &pt));
                    }
                    assert!(
                        worst < 1e-8,
                        "normalized {{H, {}}} reached {worst:.3e} at dim {dim}, \
                         beta {beta}, k {k}",
                        inv.name()
                    );
                }
            }
        }
    }
}

#[test]
fn script_s_reduces_to_the_classic_form_at_unit_exponent() {
    let sys = kepler(2, 0.1, 1.0, 0.0);
    let set = runge_lenz(&sys, 1).unwrap();
    let s = set.s.as_ref().unwrap();
    for pt in admissible_points(&sys, 30, 47) {
        let sqrt_c = casimir_value(&pt).sqrt();
        let want = s.eval(&pt).unwrap() * sqrt_c;
        let got = set.script_s.eval(&pt).unwrap();
        assert!(
            (got - want).norm() < 1e-12 * want.norm().max(1.0),
            "{got} vs {want}"
        );
        let prod = set.b.eval(&pt).unwrap() * set.sqrt_a.eval(&pt).unwrap();
        assert!((got - prod).norm() < 1e-12 * prod.norm().max(1.0));
    }
}

#[test]
fn script_s_power_relation() {
    // The branch-free classic combination (sqrtC)^m (B sqrtA / sqrtC)^n
    // has the same modulus as the shipped power combination B^n sqrtA^m,
    // and differs from it by the pure phase exp(i (m - n) arg sqrtA);
    // at m = n = 1 the two coincide.
    for beta in [rat(1, 2), rat(3, 2), rat(1, 1)] {
        let sys = perlick1(2, beta, 0.1);
        let set = runge_lenz(&sys, 1).unwrap();
        let m = beta.num();
        let n = beta.den();
        for pt in admissible_points(&sys, 25, 53) {
            let b = set.b.eval(&pt).unwrap();
            let sa = set.sqrt_a.eval(&pt).unwrap();
            let sp = set.script_s.eval(&pt).unwrap();
            let sqrt_c = casimir_value(&pt).sqrt();
            let s_val = b * sa / sqrt_c;
            let classic = s_val.powu(n) * sqrt_c.powi(m as i32);
            assert!(
                rel_err(classic.norm(), sp.norm()) < 1e-10,
                "beta {beta}: |classic| {} vs |combination| {}",
                classic.norm(),
                sp.norm()
            );
            let phase = (sa / sa.norm()).powi(m as i32 - n as i32);
            let rotated = classic * phase;
            assert!(
                (rotated - sp).norm() < 1e-10 * sp.norm().max(1.0),
                "beta {beta}: phase-aligned {rotated} vs {sp}"
            );
        }
    }
}

#[test]
fn rotation_brackets_generate_the_other_components() {
    // Flat case: bracketing with the angular momenta walks the
    // eccentricity vector through its components.
    let sys = kepler(3, 0.0, 1.0, 0.0);
    let set = runge_lenz(&sys, 1).unwrap();
    for target in [2usize, 3] {
        let rotated = set.rotated_component(target).unwrap();
        let flat = Observable::build("flat LRL component", 3, |a, v| {
            let i = target - 1;
            let p2 = a.sum_of_squares(&v.p);
            let xp = a.dot(&v.x, &v.p);
            let x2 = a.sum_of_squares(&v.x);
            let r = a.sqrt(x2);
            let t1 = a.mul(p2, v.x[i]);
            let t2 = a.mul(xp, v.p[i]);
            let t3 = a.div(v.x[i], r);
            let s = a.sub(t1, t2);
            a.sub(s, t3)
        });
        for pt in admissible_points(&sys, 25, 59) {
            let got = rotated.eval(&pt).unwrap();
            let want = flat.eval(&pt).unwrap();
            assert!(rel_err(got, want) < 1e-12, "axis {target}: {got} vs {want}");
        }
    }

    // Curved case: the rotated component matches the set built along the
    // target axis directly.
    let sys = kepler(3, 0.1, 1.0, 0.0);
    let set1 = runge_lenz(&sys, 1).unwrap();
    let set2 = runge_lenz(&sys, 2).unwrap();
    let rotated = set1.rotated_component(2).unwrap();
    let direct = set2.re_s_display.as_ref().unwrap();
    for pt in admissible_points(&sys, 25, 61) {
        let got = rotated.eval(&pt).unwrap();
        let want = direct.eval(&pt).unwrap();
        assert!(rel_err(got, want) < 1e-12, "{got} vs {want}");
    }

    assert!(set1.rotated_component(1).is_err(), "same-axis rotation must fail");
    assert!(set1.rotated_component(4).is_err(), "out-of-range rotation must fail");
}

#[test]
fn construction_guards_reject_bad_input() {
    let sys = kepler(2, 0.1, 1.0, 0.0);
    assert!(matches!(
        runge_lenz(&sys, 0),
        Err(InvariantError::AxisOutOfRange { .. })
    ));
    assert!(matches!(
        runge_lenz(&sys, 3),
        Err(InvariantError::AxisOutOfRange { .. })
    ));

    let pii = build(&SystemSpec {
        dim: 2,
        family: Family::PerlickII { gamma: rat(1, 1), lambda: 0.2, delta: 0.05, mu: 1.0 },
    })
    .unwrap();
    assert!(matches!(
        runge_lenz(&pii, 1),
        Err(InvariantError::UnsupportedFamily { .. })
    ));

    let control = bertrand::systems::perlick1_with_real_exponent(2, 0.7071, 0.0, 1.0).unwrap();
    assert!(matches!(
        runge_lenz(&control, 1),
        Err(InvariantError::IrrationalExponent)
    ));

    // Unit exponent exposes the classic invariant, other values do not.
    let set = runge_lenz(&sys, 1).unwrap();
    assert!(set.s.is_some() && set.re_s_display.is_some());
    let set = runge_lenz(&perlick1(2, rat(1, 2), 0.1), 1).unwrap();
    assert!(set.s.is_none() && set.re_s_display.is_none());
    assert_eq!(set.registered().len(), 3, "L12 plus the two combination parts");

    assert!(matches!(
        ttw_invariant(&sys),
        Err(InvariantError::UnsupportedFamily { .. })
    ));
    assert!(matches!(
        ccm_runge_lenz(&sys, 1),
        Err(InvariantError::UnsupportedFamily { .. })
    ));
}

#[test]
fn ttw_invariant_reduces_when_barriers_vanish() {
    let beta = rat(1, 2);
    let k = 0.1;
    let bare = ttw(beta, k, 0.0, 0.0);
    let ttw_set = ttw_invariant(&bare).unwrap();
    let radial = perlick1(2, beta, k);
    let pi_set = runge_lenz(&radial, 1).unwrap();
    for pt in admissible_points(&bare, 30, 67) {
        let got = ttw_set.script_s.eval(&pt).unwrap();
        let base = pi_set.script_s.eval(&pt).unwrap();
        let want = base * base;
        assert!(
            (got - want).norm() < 1e-12 * want.norm().max(1.0),
            "{got} vs squared radial {want}"
        );
        let c_plain = casimir_value(&pt);
        let c_cf = ttw_set.casimir.eval(&pt).unwrap();
        assert!(rel_err(c_cf, c_plain) < 1e-12);
    }
}

#[test]
fn ttw_blocks_match_their_polar_forms() {
    let b1 = 0.4;
    let b2 = 0.3;
    let sys = ttw(rat(1, 2), 0.1, b1, b2);
    let set = ttw_invariant(&sys).unwrap();
    for t in 0..10 {
        let r = 0.6 + 0.07 * t as f64;
        let theta = 0.3 + 0.28 * t as f64;
        let pr = 0.5 * (0.4 + 0.6 * t as f64).cos();
        let ptheta = 0.45 + 0.06 * t as f64;
        let pt = embed_polar(r, theta, pr, ptheta);
        let c_cf = ptheta * ptheta + b1 * b1 / theta.cos().powi(2) + b2 * b2 / theta.sin().powi(2);
        let got_c = set.casimir.eval(&pt).unwrap();
        assert!(rel_err(got_c, c_cf) < 1e-12, "casimir {got_c} vs {c_cf}");
        let z = set.z.eval(&pt).unwrap();
        let want_re = c_cf * (2.0 * theta).cos() - (b1 * b1 - b2 * b2);
        let want_im = -c_cf.sqrt() * ptheta * (2.0 * theta).sin();
        assert!(rel_err(z.re, want_re) < 1e-11, "Z re {} vs {}", z.re, want_re);
        assert!(rel_err(z.im, want_im) < 1e-11, "Z im {} vs {}", z.im, want_im);
    }
}

#[test]
fn ttw_invariant_commutes_pointwise() {
    for beta in [rat(1, 2), rat(3, 2)] {
        for k in [0.0, 0.1] {
            let sys = ttw(beta, k, 0.4, 0.3);
            let set = ttw_invariant(&sys).unwrap();
            for inv in set.registered() {
                let mut worst = 0.0f64;
                for pt in admissible_points(&sys, 40, 71) {
                    worst = worst.max(normalized_bracket(&sys, inv, &pt));
                }
                assert!(
                    worst < 1e-8,
                    "normalized {{H, {}}} reached {worst:.3e} at beta {beta}, k {k}",
                    inv.name()
                );
            }
        }
    }
}

#[test]
fn ccm_substituted_invariant_commutes() {
    let sys = build(&SystemSpec {
        dim: 2,
        family: Family::DarbouxCCM { lambda: 0.25, delta: 0.04, energy: 0.3 },
    })
    .unwrap();
    for axis in [1usize, 2] {
        let s = ccm_runge_lenz(&sys, axis).unwrap();
        let re = s.re_part(format!("Re S[DarbouxCCM axis {axis}]"));
        let im = s.im_part(format!("Im S[DarbouxCCM axis {axis}]"));
        for inv in [&re, &im] {
            let worst = verify_commutation(&sys, inv, 20, 73).unwrap();
            assert!(
                worst < 1e-10,
                "{{H, {}}} reached {worst:.3e}",
                inv.name()
            );
        }
    }
    assert!(matches!(
        ccm_runge_lenz(&sys, 3),
        Err(InvariantError::AxisOutOfRange { .. })
    ));
}

#[test]
fn functional_independence_holds_at_generic_points() {
    for dim in [2usize, 3] {
        for beta in [rat(1, 1), rat(1, 2), rat(2, 1)] {
            let sys = perlick1(dim, beta, 0.1);
            let set = runge_lenz(&sys, 1).unwrap();
            let mut family: Vec<&Observable> = vec![&sys.h];
            family.extend(set.angular.iter());
            family.push(&set.re_script_s);
            let pts = admissible_points(&sys, 20, 79);
            let rank = independence_min_rank(&family, &pts, 1e-8).unwrap();
            assert_eq!(
                rank,
                2 * dim - 1,
                "dim {dim}, beta {beta}: rank {rank}, expected {}",
                2 * dim - 1
            );
        }
    }
}

#[test]
fn verify_commutation_reports_zero_for_self() {
    let sys = kepler(2, 0.1, 1.0, 0.0);
    let worst = verify_commutation(&sys, &sys.h, 30, 83).unwrap();
    assert_eq!(worst, 0.0, "a bracket with itself cancels term by term");
}

#[test]
fn orbit_equation_fits_reference_states() {
    // Curved apsis: k = 0.1 at x = (1, 0), p = (0, 1) sits on a conic
    // with amplitude 0.1.
    let sys = kepler(2, 0.1, 1.0, 0.0);
    let pt = PhasePoint::new(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
    let fit = OrbitEquation::fit(&sys, &pt).unwrap();
    assert!((fit.amplitude - 0.1).abs() < 1e-12, "amplitude {}", fit.amplitude);
    assert!(fit.residual(&pt) < 1e-12);
    assert!((fit.theta0.abs() - std::f64::consts::PI).abs() < 1e-12);

    // Flat eccentric state: the amplitude equals the eccentricity vector
    // component, and perihelion sits on the positive x axis.
    let sys = kepler(2, 0.0, 1.0, 0.0);
    let pt = PhasePoint::new(&[1.2, 0.0], &[0.0, 0.95]).unwrap();
    let fit = OrbitEquation::fit(&sys, &pt).unwrap();
    let set = runge_lenz(&sys, 1).unwrap();
    let ecc = set.re_s_display.as_ref().unwrap().eval(&pt).unwrap();
    assert!(rel_err(fit.amplitude, ecc) < 1e-12, "{} vs {}", fit.amplitude, ecc);
    assert!(fit.theta0.abs() < 1e-12);
    assert!(fit.residual(&pt) < 1e-12);

    // Circular orbit: zero amplitude, zero residual, no fitted phase.
    let circ = PhasePoint::new(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
    let fit = OrbitEquation::fit(&sys, &circ).unwrap();
    assert_eq!(fit.theta0, 0.0);
    assert!(fit.amplitude < 1e-8, "amplitude {}", fit.amplitude);
    assert!(fit.residual(&circ) < 1e-12);

    // The energy-shift parameter moves H but not the orbit.
    let shifted = kepler(2, 0.0, 1.0, 0.05);
    let pt = PhasePoint::new(&[1.2, 0.0], &[0.0, 0.95]).unwrap();
    let fit0 = OrbitEquation::fit(&sys, &pt).unwrap();
    let fit1 = OrbitEquation::fit(&shifted, &pt).unwrap();
    assert!(rel_err(fit1.amplitude, fit0.amplitude) < 1e-12);
    assert!((fit1.theta0 - fit0.theta0).abs() < 1e-12);

    // Every state closes its own conic: the fitted phase makes the
    // residual vanish at the fitting point for generic admissible data.
    let sys = kepler(2, 0.1, 1.0, 0.05);
    for pt in admissible_points(&sys, 30, 89) {
        let fit = OrbitEquation::fit(&sys, &pt).unwrap();
        assert!(
            fit.residual(&pt) < 1e-10,
            "residual {:.3e} at a fitted state",
            fit.residual(&pt)
        );
    }

    // Guards.
    assert!(OrbitEquation::fit(&perlick1(2, rat(2, 1), 0.1), &pt).is_err());
    assert!(OrbitEquation::fit(&kepler(3, 0.0, 1.0, 0.0), &PhasePoint::new(
        &[1.0, 0.2, 0.1],
        &[0.1, 0.9, 0.0]
    )
    .unwrap())
    .is_err());
}

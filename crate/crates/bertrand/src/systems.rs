//! Hamiltonian families, admissible regions, and canonical maps.
//!
//! Five classical families are built from the shared sl(2) realization
//! (positions r through J-, kinetic terms through J+, the dilation J3,
//! squared angular momentum through the Casimir):
//!
//! - `KeplerCurved`: H = (1 + k r^2)^2/2 p^2 - mu (1 - k r^2)/r + 4 mu delta,
//!   the Kepler problem on a constant-curvature space in a conformal chart.
//! - `PerlickI`: H = r^2 (r^-beta + k r^beta)^2/2 p^2 - mu (r^-beta - k r^beta),
//!   a beta-deformation of the above; beta = 1 reduces to `KeplerCurved`
//!   up to the constant 4 mu delta.
//! - `PerlickII`: H = r^2 (r^-2g - L^2 r^2g)^2/(2 D) p^2 + mu / D with
//!   D = r^-2g + L^2 r^2g - 2 delta (g the half deformation exponent,
//!   L the lambda parameter). D can vanish on a shell, which is excluded
//!   from the admissible region at construction.
//! - `DarbouxCCM`: H = (r^-2 - L^2 r^2)^2 r^2/(2 U) p^2 + E / U with
//!   U = r^-2 + L^2 r^2 - 2 delta, the image of the quadratic-conformal
//!   system under a coupling-constant exchange at energy E.
//! - `TTWCurved`: the `PerlickI` Hamiltonian with the centrifugal
//!   realization substituted, adding barriers b1^2/x1^2 + b2^2/x2^2
//!   inside the kinetic factor (two degrees of freedom).
//!
//! Radial powers are taken through J- (so r^a = J-^(a/2)), and exponents
//! are rational numbers validated in lowest terms; the closure tests rely
//! on that exactness. A separate constructor accepts an irrational
//! exponent deliberately, as a negative control for closure detection.
//!
//! The canonical maps connecting the families (a radial-angular rescale
//! in a polar chart, the planar Levi-Civita square map, and the
//! coupling-constant exchange) are built as expression graphs too, so
//! they can be applied to points, pulled back through observables, and
//! checked for canonicality with exact gradients.

use crate::coalgebra::{generator_nodes, polar_chart_generators, GeneratorNodes, RealizationKind};
use crate::expr::{ExprArena, NodeId};
use crate::phasespace::{
    poisson_bracket, Observable, PhaseError, PhasePoint, SampleRegion, VarSet,
};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Errors from system construction and configuration parsing.
#[derive(Debug, Error)]
pub enum SystemError {
    #[error("rational exponent `{text}` must be a positive fraction in lowest terms")]
    BadRational { text: String },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("family `{family}` does not support {what}")]
    Unsupported { family: String, what: &'static str },

    #[error("no bounded orbit found: {reason}")]
    NoBoundedOrbit { reason: String },

    #[error(transparent)]
    Phase(#[from] PhaseError),
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// A positive rational exponent in lowest terms. Deformation exponents
/// are carried exactly: closure of bounded orbits depends on the
/// numerator and denominator themselves, not just the real value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Rational {
    num: u32,
    den: u32,
}

impl Rational {
    /// Build from numerator and denominator; both must be positive and
    /// the fraction must already be in lowest terms.
    pub fn new(num: u32, den: u32) -> Result<Self, SystemError> {
        if num == 0 || den == 0 || gcd(num as u64, den as u64) != 1 {
            return Err(SystemError::BadRational {
                text: format!("{num}/{den}"),
            });
        }
        Ok(Rational { num, den })
    }

    /// Parse "m/n" or a bare integer "m".
    pub fn parse(text: &str) -> Result<Self, SystemError> {
        let bad = || SystemError::BadRational { text: text.to_string() };
        let (ns, ds) = match text.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (text.trim(), "1"),
        };
        let num: u32 = ns.parse().map_err(|_| bad())?;
        let den: u32 = ds.parse().map_err(|_| bad())?;
        Rational::new(num, den)
    }

    #[inline]
    pub fn num(&self) -> u32 {
        self.num
    }

    #[inline]
    pub fn den(&self) -> u32 {
        self.den
    }

    /// The exponent as a float.
    #[inline]
    pub fn value(&self) -> f64 {
        f64::from(self.num) / f64::from(self.den)
    }

    /// The reciprocal, still in lowest terms.
    pub fn inverse(&self) -> Rational {
        Rational { num: self.den, den: self.num }
    }
}

impl std::fmt::Display for Rational {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{}/{}", self.num, self.den))
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Rational::parse(&text).map_err(|e| D::Error::custom(e.to_string()))
    }
}

/// The Hamiltonian families. Serialized with a `family` tag so a system
/// config reads as one flat JSON object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum Family {
    KeplerCurved {
        k: f64,
        mu: f64,
        #[serde(default)]
        delta: f64,
    },
    PerlickI {
        beta: Rational,
        k: f64,
        mu: f64,
    },
    PerlickII {
        gamma: Rational,
        lambda: f64,
        delta: f64,
        mu: f64,
    },
    DarbouxCCM {
        lambda: f64,
        delta: f64,
        energy: f64,
    },
    TTWCurved {
        beta: Rational,
        k: f64,
        mu: f64,
        b1: f64,
        b2: f64,
    },
}

impl Family {
    /// The family tag as text.
    pub fn name(&self) -> &'static str {
        match self {
            Family::KeplerCurved { .. } => "KeplerCurved",
            Family::PerlickI { .. } => "PerlickI",
            Family::PerlickII { .. } => "PerlickII",
            Family::DarbouxCCM { .. } => "DarbouxCCM",
            Family::TTWCurved { .. } => "TTWCurved",
        }
    }
}

/// A full system description: a family with parameters plus the number
/// of degrees of freedom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub dim: usize,
    #[serde(flatten)]
    pub family: Family,
}

impl SystemSpec {
    /// Validate parameter ranges. Exponents are already validated by
    /// their type; this checks dimensions, signs, and finiteness.
    pub fn validate(&self) -> Result<(), SystemError> {
        let err = |name: &'static str, reason: String| SystemError::InvalidParameter { name, reason };
        if self.dim < 2 {
            return Err(err("dim", format!("need at least 2 degrees of freedom, got {}", self.dim)));
        }
        let finite = |name: &'static str, v: f64| -> Result<(), SystemError> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(err(name, format!("must be finite, got {v}")))
            }
        };
        let positive = |name: &'static str, v: f64| -> Result<(), SystemError> {
            finite(name, v)?;
            if v > 0.0 {
                Ok(())
            } else {
                Err(err(name, format!("must be positive, got {v}")))
            }
        };
        match &self.family {
            Family::KeplerCurved { k, mu, delta } => {
                finite("k", *k)?;
                positive("mu", *mu)?;
                finite("delta", *delta)?;
            }
            Family::PerlickI { k, mu, .. } => {
                finite("k", *k)?;
                positive("mu", *mu)?;
            }
            Family::PerlickII { lambda, delta, mu, .. } => {
                finite("lambda", *lambda)?;
                if *lambda < 0.0 {
                    return Err(err("lambda", format!("must be nonnegative, got {lambda}")));
                }
                finite("delta", *delta)?;
                positive("mu", *mu)?;
            }
            Family::DarbouxCCM { lambda, delta, energy } => {
                finite("lambda", *lambda)?;
                if *lambda < 0.0 {
                    return Err(err("lambda", format!("must be nonnegative, got {lambda}")));
                }
                finite("delta", *delta)?;
                finite("energy", *energy)?;
            }
            Family::TTWCurved { k, mu, b1, b2, .. } => {
                if self.dim != 2 {
                    return Err(err("dim", format!("TTWCurved is two-dimensional, got {}", self.dim)));
                }
                finite("k", *k)?;
                positive("mu", *mu)?;
                for (name, b) in [("b1", *b1), ("b2", *b2)] {
                    finite(name, b)?;
                    if b < 0.0 {
                        return Err(err(
                            match name {
                                "b1" => "b1",
                                _ => "b2",
                            },
                            format!("barrier strengths are nonnegative, got {b}"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Where a Hamiltonian is defined, described through the radius plus an
/// off-axis requirement. The origin is always excluded; `r_max` is either
/// infinite or the radius where the conformal factor changes sign; the
/// annulus, when present, is the shell where a denominator crosses zero.
#[derive(Clone, Debug, Serialize)]
pub struct AdmissibleRegion {
    pub r_max: f64,
    pub excluded_annulus: Option<(f64, f64)>,
    /// Radius where the conformal factor degenerates, when finite. For
    /// the quadratic-conformal families this shell lies at infinite
    /// metric distance: bounded orbits stay strictly inside it, but the
    /// Hamiltonian itself is still defined beyond.
    pub conformal_zero: Option<f64>,
    /// Whether coordinate planes are excluded (centrifugal barriers).
    pub off_axis: bool,
}

impl AdmissibleRegion {
    fn unbounded() -> Self {
        AdmissibleRegion {
            r_max: f64::INFINITY,
            excluded_annulus: None,
            conformal_zero: None,
            off_axis: false,
        }
    }

    /// Is a radius strictly inside the admissible set?
    pub fn contains_radius(&self, r: f64) -> bool {
        if !(r > 0.0 && r < self.r_max) {
            return false;
        }
        if let Some((lo, hi)) = self.excluded_annulus {
            if r >= lo && r <= hi {
                return false;
            }
        }
        true
    }

    /// Check a phase point, producing a structured domain error.
    pub fn check(&self, pt: &PhasePoint, system: &str) -> Result<(), PhaseError> {
        let r = pt.radius();
        if !self.contains_radius(r) {
            return Err(PhaseError::OutsideAdmissibleRegion {
                system: system.to_string(),
                reason: format!("radius {r} outside the admissible set"),
            });
        }
        if self.off_axis {
            for i in 0..pt.dim() {
                if pt.x(i) == 0.0 {
                    return Err(PhaseError::OutsideAdmissibleRegion {
                        system: system.to_string(),
                        reason: format!("coordinate x{} vanishes on a barrier plane", i + 1),
                    });
                }
            }
        }
        Ok(())
    }

    /// A sampling region that stays inside the admissible set.
    pub fn sample_region(&self, dim: usize) -> SampleRegion {
        let mut region = SampleRegion::default();
        // Keep the sampled radius below both r_max and the start of any
        // excluded annulus, with a margin.
        let mut ceiling = self.r_max;
        if let Some((lo, _)) = self.excluded_annulus {
            ceiling = ceiling.min(lo);
        }
        if let Some(cz) = self.conformal_zero {
            ceiling = ceiling.min(cz);
        }
        if ceiling.is_finite() {
            let per_coord = 0.85 * ceiling / (dim as f64).sqrt();
            region.coord_abs.1 = region.coord_abs.1.min(per_coord);
            region.coord_abs.0 = region.coord_abs.0.min(0.5 * region.coord_abs.1);
        }
        region
    }
}

/// Loci where evaluation or integration becomes singular; trajectory
/// integration watches the distance to these.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum SingularLocus {
    /// The coordinate origin.
    Origin,
    /// The plane x_i = 0 (inverse-square barriers).
    CoordinatePlane(usize),
    /// A sphere |x| = radius (vanishing denominator shell).
    Shell(f64),
}

/// A Hamiltonian plus everything integration needs to respect about it.
#[derive(Debug)]
pub struct HamiltonianSystem {
    pub spec: SystemSpec,
    pub h: Observable,
    pub admissible: AdmissibleRegion,
    pub singular: Vec<SingularLocus>,
    /// Set when the system was built with an exponent off the rational
    /// grid; the radial profile then follows this value, not the spec.
    pub real_exponent: Option<f64>,
}

impl HamiltonianSystem {
    /// Value of H at a point, with the admissible region enforced.
    pub fn eval(&self, pt: &PhasePoint) -> Result<f64, PhaseError> {
        self.admissible.check(pt, self.h.name())?;
        self.h.eval(pt)
    }

    /// The radial profile matching this Hamiltonian, honoring a real
    /// exponent override when present.
    pub fn radial_profile(&self) -> Result<RadialProfile, SystemError> {
        let mut profile = RadialProfile::of(&self.spec)?;
        profile.beta_override = self.real_exponent;
        Ok(profile)
    }
}

// === Family formulas over generator nodes ===

/// r^e as a power of J-.
fn radial_power(arena: &mut ExprArena, jm: NodeId, e: f64) -> NodeId {
    arena.powf(jm, 0.5 * e)
}

/// Assemble the family Hamiltonian from generator nodes. The quadratic
/// angular part enters through J+, which coincides with
/// (J3^2 + C^(N)) / J- in every realization used here.
fn family_hamiltonian(
    arena: &mut ExprArena,
    gens: GeneratorNodes,
    family: &Family,
) -> NodeId {
    let jm = gens.j_minus;
    let jp = gens.j_plus;
    match *family {
        Family::KeplerCurved { k, mu, delta } => {
            let one = arena.konst(1.0);
            let kjm = arena.scale(k, jm);
            let f = arena.add(one, kjm);
            let f2 = arena.square(f);
            let half = arena.konst(0.5);
            let a = arena.mul(half, f2);
            let kin = arena.mul(a, jp);
            let g = arena.sub(one, kjm);
            let r = arena.sqrt(jm);
            let gr = arena.div(g, r);
            let pot = arena.scale(-mu, gr);
            let offset = arena.konst(4.0 * mu * delta);
            let hk = arena.add(kin, pot);
            arena.add(hk, offset)
        }
        Family::PerlickI { beta, k, mu } => {
            perlick1_nodes(arena, gens, beta.value(), k, mu)
        }
        Family::PerlickII { gamma, lambda, delta, mu } => {
            let g = gamma.value();
            let ym = radial_power(arena, jm, -2.0 * g);
            let yp = radial_power(arena, jm, 2.0 * g);
            let l2yp = arena.scale(lambda * lambda, yp);
            let sum = arena.add(ym, l2yp);
            let twod = arena.konst(2.0 * delta);
            let d = arena.sub(sum, twod);
            let s = arena.sub(ym, l2yp);
            let s2 = arena.square(s);
            let s2jm = arena.mul(s2, jm);
            let half = arena.konst(0.5);
            let a_num = arena.mul(half, s2jm);
            let a = arena.div(a_num, d);
            let kin = arena.mul(a, jp);
            let mu_n = arena.konst(mu);
            let pot = arena.div(mu_n, d);
            arena.add(kin, pot)
        }
        Family::DarbouxCCM { lambda, delta, energy } => {
            let inv = arena.powi(jm, -1);
            let l2jm = arena.scale(lambda * lambda, jm);
            let sum = arena.add(inv, l2jm);
            let twod = arena.konst(2.0 * delta);
            let u = arena.sub(sum, twod);
            let s = arena.sub(inv, l2jm);
            let s2 = arena.square(s);
            let s2jm = arena.mul(s2, jm);
            let half = arena.konst(0.5);
            let t = arena.mul(half, s2jm);
            let kin = arena.mul(t, jp);
            let e = arena.konst(energy);
            let num = arena.add(kin, e);
            arena.div(num, u)
        }
        Family::TTWCurved { beta, k, mu, .. } => {
            // The barriers live inside J+ of the centrifugal realization;
            // the radial profile is exactly the PerlickI one.
            perlick1_nodes(arena, gens, beta.value(), k, mu)
        }
    }
}

/// The deformed-Kepler radial profile around any generator triple:
/// H = J- (J-^(-b/2) + k J-^(b/2))^2 / 2 * J+ - mu (J-^(-b/2) - k J-^(b/2)).
fn perlick1_nodes(
    arena: &mut ExprArena,
    gens: GeneratorNodes,
    beta: f64,
    k: f64,
    mu: f64,
) -> NodeId {
    let jm = gens.j_minus;
    let jp = gens.j_plus;
    let u = radial_power(arena, jm, -beta);
    let w = radial_power(arena, jm, beta);
    let kw = arena.scale(k, w);
    let g = arena.add(u, kw);
    let g2 = arena.square(g);
    let g2jm = arena.mul(g2, jm);
    let half = arena.konst(0.5);
    let a = arena.mul(half, g2jm);
    let kin = arena.mul(a, jp);
    let vshape = arena.sub(u, kw);
    let pot = arena.scale(-mu, vshape);
    arena.add(kin, pot)
}

fn admissible_for(spec: &SystemSpec) -> AdmissibleRegion {
    let mut region = AdmissibleRegion::unbounded();
    // Shell where a positive quadratic q(y) = L^2 y^2 - 2 delta y + 1 in
    // y = r^(2 exponent) loses positivity; present only when delta is
    // larger than lambda.
    let annulus = |lambda: f64, delta: f64, exponent: f64| -> Option<(f64, f64)> {
        if lambda <= 0.0 || delta <= 0.0 || delta < lambda {
            return None;
        }
        let disc = (delta * delta - lambda * lambda).max(0.0).sqrt();
        let y_lo = (delta - disc) / (lambda * lambda);
        let y_hi = (delta + disc) / (lambda * lambda);
        Some((y_lo.powf(0.5 / exponent), y_hi.powf(0.5 / exponent)))
    };
    match &spec.family {
        Family::KeplerCurved { k, .. } => {
            if *k < 0.0 {
                region.r_max = 1.0 / (-k).sqrt();
                region.conformal_zero = Some(region.r_max);
            }
        }
        Family::PerlickI { beta, k, .. } => {
            if *k < 0.0 {
                region.r_max = (-1.0 / k).powf(0.5 / beta.value());
                region.conformal_zero = Some(region.r_max);
            }
        }
        Family::PerlickII { gamma, lambda, delta, .. } => {
            if *lambda > 0.0 {
                region.conformal_zero = Some(lambda.powf(-0.5 / gamma.value()));
            }
            region.excluded_annulus = annulus(*lambda, *delta, gamma.value());
        }
        Family::DarbouxCCM { lambda, delta, .. } => {
            if *lambda > 0.0 {
                region.conformal_zero = Some(1.0 / lambda.sqrt());
            }
            region.excluded_annulus = annulus(*lambda, *delta, 1.0);
        }
        Family::TTWCurved { beta, k, .. } => {
            if *k < 0.0 {
                region.r_max = (-1.0 / k).powf(0.5 / beta.value());
                region.conformal_zero = Some(region.r_max);
            }
            region.off_axis = true;
        }
    }
    region
}

fn singular_for(spec: &SystemSpec, region: &AdmissibleRegion) -> Vec<SingularLocus> {
    let mut loci = vec![SingularLocus::Origin];
    if let Some((lo, hi)) = region.excluded_annulus {
        loci.push(SingularLocus::Shell(lo));
        loci.push(SingularLocus::Shell(hi));
    }
    if matches!(spec.family, Family::TTWCurved { .. }) {
        loci.push(SingularLocus::CoordinatePlane(0));
        loci.push(SingularLocus::CoordinatePlane(1));
    }
    loci
}

/// Build a system in cartesian coordinates over `spec.dim` degrees of
/// freedom.
pub fn build(spec: &SystemSpec) -> Result<HamiltonianSystem, SystemError> {
    spec.validate()?;
    let kind = match &spec.family {
        Family::TTWCurved { b1, b2, .. } => RealizationKind::Centrifugal { b: vec![*b1, *b2] },
        _ => RealizationKind::Cartesian,
    };
    let family = spec.family.clone();
    let name = format!("H[{}]", family.name());
    let dim = spec.dim;
    let h = Observable::build(name, dim, move |a, v| {
        let gens = generator_nodes(a, v, &kind, dim);
        family_hamiltonian(a, gens, &family)
    });
    let admissible = admissible_for(spec);
    let singular = singular_for(spec, &admissible);
    Ok(HamiltonianSystem {
        spec: spec.clone(),
        h,
        admissible,
        singular,
        real_exponent: None,
    })
}

/// Build the same Hamiltonian in a 2D polar canonical chart
/// (r, theta, p_r, p_theta). Not available for the barrier family, whose
/// angular dependence does not reduce to the chart Casimir.
pub fn build_polar(spec: &SystemSpec) -> Result<Observable, SystemError> {
    spec.validate()?;
    if matches!(spec.family, Family::TTWCurved { .. }) {
        return Err(SystemError::Unsupported {
            family: spec.family.name().to_string(),
            what: "a polar-chart build",
        });
    }
    let family = spec.family.clone();
    let name = format!("Hpolar[{}]", family.name());
    Ok(Observable::build(name, 2, move |a, v| {
        let gens = polar_chart_generators(a, v);
        family_hamiltonian(a, gens, &family)
    }))
}

/// Deformed-Kepler system with an arbitrary real exponent. This exists
/// as a negative control: exponents off the rational grid must not
/// produce closed orbits, and the rational-exponent API cannot express
/// them.
pub fn perlick1_with_real_exponent(
    dim: usize,
    beta: f64,
    k: f64,
    mu: f64,
) -> Result<HamiltonianSystem, SystemError> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(SystemError::InvalidParameter {
            name: "beta",
            reason: format!("must be positive and finite, got {beta}"),
        });
    }
    if !(mu.is_finite() && mu > 0.0) {
        return Err(SystemError::InvalidParameter {
            name: "mu",
            reason: format!("must be positive, got {mu}"),
        });
    }
    let name = format!("H[PerlickI beta={beta}]");
    let h = Observable::build(name, dim, move |a, v| {
        let gens = generator_nodes(a, v, &RealizationKind::Cartesian, dim);
        perlick1_nodes(a, gens, beta, k, mu)
    });
    let mut admissible = AdmissibleRegion::unbounded();
    if k < 0.0 {
        admissible.r_max = (-1.0 / k).powf(0.5 / beta);
        admissible.conformal_zero = Some(admissible.r_max);
    }
    // The spec carries dim and the non-exponent parameters; the true
    // exponent is recorded in `real_exponent` and drives the radial
    // profile.
    let spec = SystemSpec {
        dim,
        family: Family::PerlickI {
            beta: Rational::new(1, 1).expect("1/1 is valid"),
            k,
            mu,
        },
    };
    Ok(HamiltonianSystem {
        spec,
        h,
        admissible,
        singular: vec![SingularLocus::Origin],
        real_exponent: Some(beta),
    })
}

// === Coupling-constant exchange ===

/// The coupling-constant-exchange image of H = T + V - mu U at energy E:
/// the new Hamiltonian (T + V - E) / U, whose E-level sets swap roles
/// with the mu-level sets of the original.
pub fn coupling_exchange(
    t: &Observable,
    v: &Observable,
    u: &Observable,
    energy: f64,
    name: impl Into<String>,
) -> Observable {
    assert_eq!(t.dim(), u.dim(), "exchange needs matching dimensions");
    assert_eq!(t.dim(), v.dim(), "exchange needs matching dimensions");
    let dim = t.dim();
    let mut arena = ExprArena::new(2 * dim);
    let (ta, tr) = t.graph();
    let (va, vr) = v.graph();
    let (ua, ur) = u.graph();
    let ti = arena.import(ta, &[tr])[0];
    let vi = arena.import(va, &[vr])[0];
    let ui = arena.import(ua, &[ur])[0];
    let tv = arena.add(ti, vi);
    let e = arena.konst(energy);
    let num = arena.sub(tv, e);
    let root = arena.div(num, ui);
    Observable::from_arena(name, dim, arena, root)
}

/// Kinetic part and conformal denominator of the planar
/// quadratic-conformal system H = T - mu_tilde U, the Levi-Civita image
/// of the curved Kepler family:
/// T = (r^-2 - L^2 r^2)^2 r^2 / 2 p^2 and U = r^-2 + L^2 r^2 - 2 delta.
pub fn quadratic_conformal_split(lambda: f64, delta: f64) -> (Observable, Observable) {
    let t = Observable::build(format!("T[quadconf lambda={lambda}]"), 2, move |a, v| {
        let gens = generator_nodes(a, v, &RealizationKind::Cartesian, 2);
        let jm = gens.j_minus;
        let jp = gens.j_plus;
        let inv = a.powi(jm, -1);
        let l2jm = a.scale(lambda * lambda, jm);
        let s = a.sub(inv, l2jm);
        let s2 = a.square(s);
        let s2jm = a.mul(s2, jm);
        let half = a.konst(0.5);
        let t = a.mul(half, s2jm);
        a.mul(t, jp)
    });
    let u = Observable::build(
        format!("U[quadconf lambda={lambda} delta={delta}]"),
        2,
        move |a, v| {
            let gens = generator_nodes(a, v, &RealizationKind::Cartesian, 2);
            let jm = gens.j_minus;
            let inv = a.powi(jm, -1);
            let l2jm = a.scale(lambda * lambda, jm);
            let sum = a.add(inv, l2jm);
            let twod = a.konst(2.0 * delta);
            a.sub(sum, twod)
        },
    );
    (t, u)
}

/// The full planar quadratic-conformal Hamiltonian H = T - mu_tilde U.
pub fn quadratic_conformal_hamiltonian(lambda: f64, mu_tilde: f64, delta: f64) -> Observable {
    let (t, u) = quadratic_conformal_split(lambda, delta);
    Observable::linear_comb(
        1.0,
        &t,
        -mu_tilde,
        &u,
        format!("H[quadconf lambda={lambda} mu~={mu_tilde} delta={delta}]"),
    )
}

// === Canonical maps ===

/// A map between phase-space charts, stored as output-coordinate
/// expressions over input variables. Supports application to points,
/// pullback of observables, and extraction of coordinate observables for
/// canonicality checks.
#[derive(Debug)]
pub struct CanonicalMap {
    name: String,
    dim: usize,
    arena: ExprArena,
    out: Vec<NodeId>,
}

impl CanonicalMap {
    /// Build from a closure producing the 2N output coordinates.
    pub fn build<F>(name: impl Into<String>, dim: usize, f: F) -> CanonicalMap
    where
        F: FnOnce(&mut ExprArena, &VarSet) -> Vec<NodeId>,
    {
        let mut arena = ExprArena::new(2 * dim);
        let vars = VarSet::new(&mut arena, dim);
        let out = f(&mut arena, &vars);
        assert_eq!(out.len(), 2 * dim, "canonical map must produce 2N outputs");
        CanonicalMap { name: name.into(), dim, arena, out }
    }

    /// Map name.
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Degrees of freedom on either side.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Apply to a point.
    pub fn apply(&self, pt: &PhasePoint) -> Result<PhasePoint, PhaseError> {
        if pt.dim() != self.dim {
            return Err(PhaseError::DimensionMismatch {
                name: self.name.clone(),
                expected: self.dim,
                got: pt.dim(),
            });
        }
        let mut scratch = Vec::new();
        self.arena.eval_all(pt.flat(), &mut scratch);
        let vals: Vec<f64> = self.out.iter().map(|&id| scratch[id as usize]).collect();
        if !vals.iter().all(|v| v.is_finite()) {
            return Err(PhaseError::SingularEvaluation {
                observable: self.name.clone(),
            });
        }
        PhasePoint::from_flat(&vals)
    }

    /// Pull an observable on the target chart back through the map:
    /// the result evaluates obs at the mapped point.
    pub fn pullback(&self, obs: &Observable, name: impl Into<String>) -> Observable {
        assert_eq!(
            obs.dim(),
            self.dim,
            "pullback of `{}` through `{}` needs matching dimensions",
            obs.name(),
            self.name
        );
        let mut arena = self.arena.clone();
        let (oa, or) = obs.graph();
        let root = arena.import_subst(oa, &[or], &self.out)[0];
        Observable::from_arena(name, self.dim, arena, root)
    }

    /// One output coordinate as an observable over the input chart.
    pub fn coordinate(&self, idx: usize, name: impl Into<String>) -> Observable {
        assert!(idx < 2 * self.dim, "coordinate index out of range");
        Observable::from_arena(name, self.dim, self.arena.clone(), self.out[idx])
    }
}

/// The radial-angular rescale in a 2D polar chart, with exponent `beta`:
///
/// ```text
/// r = r'^beta, theta = beta theta', p_r = (1/beta) r'^(1 - beta) p_r',
/// p_theta = p_theta' / beta,
/// ```
///
/// a canonical transformation (p_r dr + p_theta dtheta is preserved). It
/// carries the deformed-Kepler system at exponent beta into the beta = 1
/// shape up to an overall factor: for every polar point z,
/// H_beta(mu; z) = beta^2 (H_1(mu/beta^2, delta; Phi(z)) - 4 (mu/beta^2) delta).
pub fn angular_rescale(beta: Rational) -> CanonicalMap {
    angular_rescale_real(beta.value())
}

/// The same rescale with an arbitrary positive exponent.
pub fn angular_rescale_real(beta: f64) -> CanonicalMap {
    assert!(beta > 0.0 && beta.is_finite(), "rescale exponent must be positive");
    CanonicalMap::build(format!("angular_rescale[{beta}]"), 2, move |a, v| {
        let rp = v.x[0];
        let thp = v.x[1];
        let prp = v.p[0];
        let ptp = v.p[1];
        let r = a.powf(rp, beta);
        let theta = a.scale(beta, thp);
        let rpow = a.powf(rp, 1.0 - beta);
        let prs = a.mul(rpow, prp);
        let pr = a.scale(1.0 / beta, prs);
        let ptheta = a.scale(1.0 / beta, ptp);
        vec![r, theta, pr, ptheta]
    })
}

/// The planar Levi-Civita square map from tilde coordinates to physical
/// ones: x = (x~^2 - y~^2)/2, y = x~ y~, with momenta transported as a
/// cotangent lift (p = J^-T p~ for the Jacobian J of the position map):
///
/// ```text
/// p_x = (x~ p~_x - y~ p~_y) / (x~^2 + y~^2),
/// p_y = (y~ p~_x + x~ p~_y) / (x~^2 + y~^2).
/// ```
pub fn levi_civita() -> CanonicalMap {
    CanonicalMap::build("levi_civita", 2, levi_civita_nodes)
}

/// The square-map output expressions over an existing variable set, for
/// graph-level composition with other observables.
pub(crate) fn levi_civita_nodes(a: &mut ExprArena, v: &VarSet) -> Vec<NodeId> {
    let xt = v.x[0];
    let yt = v.x[1];
    let pxt = v.p[0];
    let pyt = v.p[1];
    let xt2 = a.square(xt);
    let yt2 = a.square(yt);
    let diff = a.sub(xt2, yt2);
    let x = a.scale(0.5, diff);
    let y = a.mul(xt, yt);
    let r2 = a.add(xt2, yt2);
    let t1 = a.mul(xt, pxt);
    let t2 = a.mul(yt, pyt);
    let numx = a.sub(t1, t2);
    let px = a.div(numx, r2);
    let t3 = a.mul(yt, pxt);
    let t4 = a.mul(xt, pyt);
    let numy = a.add(t3, t4);
    let py = a.div(numy, r2);
    vec![x, y, px, py]
}

/// Worst deviation of a map from canonicality over sampled points: the
/// brackets of output coordinates must reproduce {X_i, P_j} = delta_ij
/// with all other combinations vanishing.
pub fn verify_canonical(
    map: &CanonicalMap,
    pts: &[PhasePoint],
) -> Result<f64, PhaseError> {
    let dim = map.dim();
    let coords: Vec<Observable> = (0..2 * dim)
        .map(|i| {
            let kind = if i < dim { "X" } else { "P" };
            map.coordinate(i, format!("{}{}[{}]", kind, i % dim + 1, map.name()))
        })
        .collect();
    let mut worst = 0.0f64;
    for i in 0..2 * dim {
        for j in (i + 1)..2 * dim {
            let expected = if j == i + dim { 1.0 } else { 0.0 };
            for pt in pts {
                let b = poisson_bracket(&coords[i], &coords[j], pt)?;
                worst = worst.max((b - expected).abs());
            }
        }
    }
    Ok(worst)
}

// === Bounded orbits and radial periods ===

/// Radial data for the rotationally invariant families: H restricted to
/// the plane of motion reads H = a(r) (p_r^2 + c2 / r^2) + V(r) with c2
/// the conserved angular charge (L^2, or the centrifugal Casimir for the
/// barrier family).
pub struct RadialProfile {
    family: Family,
    /// Overrides the rational exponent for control systems built off the
    /// rational grid.
    pub beta_override: Option<f64>,
}

impl RadialProfile {
    /// Extract the radial profile of a system.
    pub fn of(spec: &SystemSpec) -> Result<RadialProfile, SystemError> {
        spec.validate()?;
        Ok(RadialProfile { family: spec.family.clone(), beta_override: None })
    }

    /// The kinetic prefactor a(r).
    pub fn kinetic_factor(&self, r: f64) -> f64 {
        match self.family {
            Family::KeplerCurved { k, .. } => {
                let f = 1.0 + k * r * r;
                0.5 * f * f
            }
            Family::PerlickI { beta, k, .. } | Family::TTWCurved { beta, k, .. } => {
                let b = self.beta_override.unwrap_or(beta.value());
                let g = r.powf(-b) + k * r.powf(b);
                0.5 * r * r * g * g
            }
            Family::PerlickII { gamma, lambda, delta, .. } => {
                let g = gamma.value();
                let ym = r.powf(-2.0 * g);
                let yp = r.powf(2.0 * g);
                let d = ym + lambda * lambda * yp - 2.0 * delta;
                let s = ym - lambda * lambda * yp;
                0.5 * r * r * s * s / d
            }
            Family::DarbouxCCM { lambda, delta, .. } => {
                let inv = 1.0 / (r * r);
                let u = inv + lambda * lambda * r * r - 2.0 * delta;
                let s = inv - lambda * lambda * r * r;
                0.5 * r * r * s * s / u
            }
        }
    }

    /// The radial potential V(r).
    pub fn potential(&self, r: f64) -> f64 {
        match self.family {
            Family::KeplerCurved { k, mu, delta } => {
                -mu * (1.0 - k * r * r) / r + 4.0 * mu * delta
            }
            Family::PerlickI { beta, k, mu } | Family::TTWCurved { beta, k, mu, .. } => {
                let b = self.beta_override.unwrap_or(beta.value());
                -mu * (r.powf(-b) - k * r.powf(b))
            }
            Family::PerlickII { gamma, lambda, delta, mu } => {
                let g = gamma.value();
                let d = r.powf(-2.0 * g) + lambda * lambda * r.powf(2.0 * g) - 2.0 * delta;
                mu / d
            }
            Family::DarbouxCCM { lambda, delta, energy } => {
                let u = 1.0 / (r * r) + lambda * lambda * r * r - 2.0 * delta;
                energy / u
            }
        }
    }

    /// Effective radial potential at angular charge c2.
    pub fn v_eff(&self, r: f64, c2: f64) -> f64 {
        self.kinetic_factor(r) * c2 / (r * r) + self.potential(r)
    }
}

/// A prepared bounded orbit: the initial phase point together with its
/// energy, angular charge, radial turning points, and radial period.
#[derive(Clone, Debug)]
pub struct OrbitSetup {
    pub point: PhasePoint,
    pub energy: f64,
    pub angular_charge: f64,
    pub turning_points: (f64, f64),
    pub radial_period: f64,
}

pub(crate) fn golden_minimize(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let phi = 0.5 * (3.0 - 5.0f64.sqrt());
    let mut x1 = a + phi * (b - a);
    let mut x2 = b - phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = a + phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = b - phi * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}

fn bisect_root(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    debug_assert!(flo * f(hi) <= 0.0, "bisection needs a sign change");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (flo > 0.0) == (fm > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Radial period of the bounded motion with energy `e` and angular
/// charge `c2`, by quadrature between the turning points:
/// T = integral dr / sqrt(a(r) (E - V_eff(r))), regularized with
/// r = mid + halfwidth sin(phi) and evaluated by the midpoint rule.
pub fn radial_period(profile: &RadialProfile, e: f64, c2: f64, turning: (f64, f64)) -> f64 {
    let (r_lo, r_hi) = turning;
    let mid = 0.5 * (r_lo + r_hi);
    let w = 0.5 * (r_hi - r_lo);
    let m = 4000usize;
    let mut acc = 0.0;
    for i in 0..m {
        let phi = std::f64::consts::PI * ((i as f64 + 0.5) / m as f64 - 0.5);
        let r = mid + w * phi.sin();
        let a = profile.kinetic_factor(r);
        let gap = e - profile.v_eff(r, c2);
        if gap <= 0.0 || a <= 0.0 {
            continue;
        }
        acc += w * phi.cos() / (a * gap).sqrt();
    }
    acc * std::f64::consts::PI / m as f64
}

/// Prepare a bounded orbit for a rotationally invariant system. The
/// angular momentum `l` fixes the angular charge (plus barrier terms for
/// the centrifugal family), the well of the effective potential is
/// located, and the energy is set `fill` of the way from the well bottom
/// to the escape level. The point starts at the well radius, angular
/// position `theta0`, with the radial momentum chosen to match the
/// energy.
pub fn bounded_orbit_setup(
    sys: &HamiltonianSystem,
    l: f64,
    theta0: f64,
    fill: f64,
) -> Result<OrbitSetup, SystemError> {
    let profile = sys.radial_profile()?;
    let c2 = match sys.spec.family {
        Family::TTWCurved { b1, b2, .. } => {
            let c = theta0.cos();
            let s = theta0.sin();
            l * l + b1 * b1 / (c * c) + b2 * b2 / (s * s)
        }
        _ => l * l,
    };

    // Search window for the well, inside the admissible set.
    let mut r_hi = 12.0f64;
    if let Some(cz) = sys.admissible.conformal_zero {
        r_hi = r_hi.min(0.98 * cz);
    }
    if let Some((lo, _)) = sys.admissible.excluded_annulus {
        r_hi = r_hi.min(0.98 * lo);
    }
    let r_lo = 1e-3;
    let veff = |r: f64| profile.v_eff(r, c2);
    let r_star = golden_minimize(&veff, r_lo, r_hi, 200);
    let v_min = veff(r_star);
    let v_edge = veff(r_lo).min(veff(r_hi));
    if !(v_min.is_finite() && v_edge > v_min) {
        return Err(SystemError::NoBoundedOrbit {
            reason: format!(
                "no effective-potential well at angular charge {c2} (min {v_min} at r = {r_star})"
            ),
        });
    }
    let e = v_min + fill.clamp(0.05, 0.95) * (v_edge - v_min);

    // Turning points bracket the well at this energy.
    let g = |r: f64| veff(r) - e;
    let r_in = bisect_root(&g, r_lo, r_star);
    let r_out = bisect_root(&g, r_star, r_hi);

    // Start at the well radius with p_r > 0 matching the energy.
    let a = profile.kinetic_factor(r_star);
    let pr = ((e - veff(r_star)) / a).max(0.0).sqrt();
    let (c, s) = (theta0.cos(), theta0.sin());
    let dim = sys.spec.dim;
    let mut x = vec![0.0; dim];
    let mut p = vec![0.0; dim];
    x[0] = r_star * c;
    x[1] = r_star * s;
    p[0] = pr * c - (l / r_star) * s;
    p[1] = pr * s + (l / r_star) * c;
    let point = PhasePoint::new(&x, &p)?;

    let t_rad = radial_period(&profile, e, c2, (r_in, r_out));
    Ok(OrbitSetup {
        point,
        energy: e,
        angular_charge: c2,
        turning_points: (r_in, r_out),
        radial_period: t_rad,
    })
}

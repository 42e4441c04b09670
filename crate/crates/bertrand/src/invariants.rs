//! Constants of motion for the deformed Kepler families.
//!
//! Every rotationally invariant member conserves the angular momenta
//! L_ij = x_i p_j - x_j p_i. On top of those, the curved Kepler system
//! carries a complex invariant S whose real part is the curved
//! Laplace-Runge-Lenz component along a chosen axis. Two factors
//! compose it:
//!
//! - `sqrt_a`, the axis factor (x sqrt(C) - i (x J3 - p_x J-)) / sqrt(J-):
//!   its squared modulus is the part of the Casimir seen by the axis
//!   plane, and its phase tracks the angular position, rotating
//!   uniformly along the orbit.
//! - `b`, the radial factor (C/beta^2)(1 - k J-^beta)/J-^{beta/2}
//!   - mu/beta^2 + i (1 + k J-^beta) J3 sqrt(C)/(beta^2 J-^{beta/2}).
//!   This is the Kepler-chart radial invariant expressed through the
//!   rescaled chart in which the deformed family takes the Kepler shape;
//!   its phase rotates at beta times the rate of the axis factor.
//!
//! For a rational deformation exponent beta = m/n the two rotation rates
//! are commensurate and the integer-power combination b^n * sqrt_a^m is
//! conserved, with real and imaginary parts polynomial in the momenta.
//! For beta = 1 the classic complex invariant S = b * sqrt_a / sqrt(C)
//! is exposed too, together with closed-form displays of its real and
//! imaginary parts.
//!
//! The barrier family conserves a swapped variant: the same radial
//! factor evaluated with the centrifugal Casimir, combined with a
//! barrier-corrected square z = sqrt_a^2 - b1^2 J- / x1^2. The
//! coupling-exchanged family inherits the curved Kepler invariant
//! through the planar square map, with the mass parameter replaced by
//! half the exchanged Hamiltonian.

use crate::coalgebra::{casimir_node, generator_nodes, GeneratorNodes, RealizationKind};
use crate::expr::{CNode, ExprArena, NodeId};
use crate::phasespace::{
    bracket_observable, poisson_bracket, sample_points, ComplexObservable, Observable, PhaseError,
    PhasePoint, VarSet,
};
use crate::systems::{levi_civita_nodes, Family, HamiltonianSystem, Rational};
use nalgebra::DMatrix;
use thiserror::Error;

/// Errors from invariant construction.
#[derive(Debug, Error)]
pub enum InvariantError {
    #[error("family `{family}` does not support {what}")]
    UnsupportedFamily { family: String, what: &'static str },

    #[error("axis {axis} out of range for dimension {dim}")]
    AxisOutOfRange { axis: usize, dim: usize },

    #[error("invariant construction needs a rational exponent; this system carries a real one")]
    IrrationalExponent,

    #[error(transparent)]
    Phase(#[from] PhaseError),
}

/// The angular momentum component L_ij = x_i p_j - x_j p_i (1-based,
/// i < j <= dim).
pub fn angular_momentum(dim: usize, i: usize, j: usize) -> Observable {
    assert!(1 <= i && i < j && j <= dim, "need 1 <= i < j <= dim");
    Observable::build(format!("L{i}{j}"), dim, move |a, v| {
        let t1 = a.mul(v.x[i - 1], v.p[j - 1]);
        let t2 = a.mul(v.x[j - 1], v.p[i - 1]);
        a.sub(t1, t2)
    })
}

/// All angular momentum components, ordered lexicographically.
pub fn angular_momenta(dim: usize) -> Vec<Observable> {
    let mut out = Vec::with_capacity(dim * (dim - 1) / 2);
    for i in 1..=dim {
        for j in (i + 1)..=dim {
            out.push(angular_momentum(dim, i, j));
        }
    }
    out
}

/// The axis factor (x_a sqrt(C) - i (x_a J3 - p_a J-)) / sqrt(J-) over
/// prepared generator nodes. `axis` is 1-based.
fn sqrt_a_nodes(
    arena: &mut ExprArena,
    vars: &VarSet,
    gens: &GeneratorNodes,
    c: NodeId,
    axis: usize,
) -> CNode {
    let xa = vars.x[axis - 1];
    let pa = vars.p[axis - 1];
    let sc = arena.sqrt(c);
    let num_re = arena.mul(xa, sc);
    let t1 = arena.mul(xa, gens.j3);
    let t2 = arena.mul(pa, gens.j_minus);
    let cross = arena.sub(t1, t2);
    let sj = arena.sqrt(gens.j_minus);
    let re = arena.div(num_re, sj);
    let im_neg = arena.div(cross, sj);
    let im = arena.neg(im_neg);
    CNode { re, im }
}

/// The radial factor for deformation exponent `beta`; `mu` is a node so
/// the coupling-exchange construction can substitute an observable for
/// it.
fn b_factor_nodes(
    arena: &mut ExprArena,
    jm: NodeId,
    j3: NodeId,
    c: NodeId,
    beta: f64,
    k: f64,
    mu: NodeId,
) -> CNode {
    let ib2 = 1.0 / (beta * beta);
    let w = arena.powf(jm, beta);
    let sw = arena.powf(jm, 0.5 * beta);
    let one = arena.konst(1.0);
    let kw = arena.scale(k, w);
    let f_minus = arena.sub(one, kw);
    let f_plus = arena.add(one, kw);
    let c_scaled = arena.scale(ib2, c);
    let t = arena.mul(c_scaled, f_minus);
    let t = arena.div(t, sw);
    let mu_scaled = arena.scale(ib2, mu);
    let re = arena.sub(t, mu_scaled);
    let sc = arena.sqrt(c);
    let u = arena.mul(f_plus, j3);
    let u = arena.mul(u, sc);
    let u = arena.div(u, sw);
    let im = arena.scale(ib2, u);
    CNode { re, im }
}

/// Closed-form real part of the classic invariant along `axis`:
/// C (1 - k J-) x_a / J- + (1 + k J-)(x_a J3 - p_a J-) J3 / J-
/// - mu x_a / sqrt(J-).
fn re_display_nodes(
    arena: &mut ExprArena,
    vars: &VarSet,
    gens: &GeneratorNodes,
    c: NodeId,
    k: f64,
    mu: f64,
    axis: usize,
) -> NodeId {
    let xa = vars.x[axis - 1];
    let pa = vars.p[axis - 1];
    let jm = gens.j_minus;
    let j3 = gens.j3;
    let one = arena.konst(1.0);
    let kjm = arena.scale(k, jm);
    let f_minus = arena.sub(one, kjm);
    let f_plus = arena.add(one, kjm);
    let t1 = arena.mul(c, f_minus);
    let t1 = arena.mul(t1, xa);
    let t1 = arena.div(t1, jm);
    let u1 = arena.mul(xa, j3);
    let u2 = arena.mul(pa, jm);
    let cross = arena.sub(u1, u2);
    let t2 = arena.mul(f_plus, cross);
    let t2 = arena.mul(t2, j3);
    let t2 = arena.div(t2, jm);
    let sj = arena.sqrt(jm);
    let t3n = arena.scale(mu, xa);
    let t3 = arena.div(t3n, sj);
    let s = arena.add(t1, t2);
    arena.sub(s, t3)
}

/// Closed-form imaginary part times sqrt(C):
/// C (1 + k J-) J3 x_a / J- - (C (1 - k J-) / J- - mu / sqrt(J-))
/// (x_a J3 - p_a J-). Dividing by sqrt(C) recovers the imaginary part
/// itself.
fn im_sqrtc_display_nodes(
    arena: &mut ExprArena,
    vars: &VarSet,
    gens: &GeneratorNodes,
    c: NodeId,
    k: f64,
    mu: f64,
    axis: usize,
) -> NodeId {
    let xa = vars.x[axis - 1];
    let pa = vars.p[axis - 1];
    let jm = gens.j_minus;
    let j3 = gens.j3;
    let one = arena.konst(1.0);
    let kjm = arena.scale(k, jm);
    let f_minus = arena.sub(one, kjm);
    let f_plus = arena.add(one, kjm);
    let t1 = arena.mul(c, f_plus);
    let t1 = arena.mul(t1, j3);
    let t1 = arena.mul(t1, xa);
    let t1 = arena.div(t1, jm);
    let u1 = arena.mul(c, f_minus);
    let u1 = arena.div(u1, jm);
    let sj = arena.sqrt(jm);
    let mu_n = arena.konst(mu);
    let u2 = arena.div(mu_n, sj);
    let u = arena.sub(u1, u2);
    let v1 = arena.mul(xa, j3);
    let v2 = arena.mul(pa, jm);
    let cross = arena.sub(v1, v2);
    let t2 = arena.mul(u, cross);
    arena.sub(t1, t2)
}

/// The invariants attached to a curved Kepler or deformed Kepler system:
/// angular momenta, the two complex factors, their conserved power
/// combination, and (for unit exponent) the classic complex invariant
/// with its closed-form displays.
#[derive(Debug)]
pub struct InvariantSet {
    /// Degrees of freedom.
    pub dim: usize,
    /// Which coordinate axis the factor `sqrt_a` singles out (1-based).
    pub axis: usize,
    /// The deformation exponent m/n.
    pub beta: Rational,
    /// Angular momenta L_ij, i < j, lexicographic.
    pub angular: Vec<Observable>,
    /// Axis factor; squared modulus conserved, phase tracks the orbit.
    pub sqrt_a: ComplexObservable,
    /// Radial factor; modulus conserved, phase rotates at beta times the
    /// axis rate.
    pub b: ComplexObservable,
    /// The conserved power combination b^n * sqrt_a^m.
    pub script_s: ComplexObservable,
    /// Real part of `script_s`, polynomial in the momenta.
    pub re_script_s: Observable,
    /// Imaginary part of `script_s`; carries one factor sqrt(C).
    pub im_script_s: Observable,
    /// The classic complex invariant b * sqrt_a / sqrt(C), present when
    /// beta = 1.
    pub s: Option<ComplexObservable>,
    /// Closed-form display of Re(S), beta = 1 only.
    pub re_s_display: Option<Observable>,
    /// Closed-form display of Im(S), beta = 1 only.
    pub im_s_display: Option<Observable>,
    /// Closed-form display of Im(S) * sqrt(C), polynomial, beta = 1 only.
    pub im_s_sqrtc_display: Option<Observable>,
}

impl InvariantSet {
    /// The members to log along trajectories: angular momenta plus the
    /// real and imaginary parts of the power combination.
    pub fn registered(&self) -> Vec<&Observable> {
        let mut out: Vec<&Observable> = self.angular.iter().collect();
        out.push(&self.re_script_s);
        out.push(&self.im_script_s);
        out
    }

    /// Another component of the invariant vector by rotation: the
    /// bracket {Re 𝒮-part, L_{i,axis}} sends the axis component to the
    /// i component whenever the invariant is linear in the axis pair
    /// (m = 1, which includes the classic case). For higher powers the
    /// result is still a constant of motion, but mixes components.
    pub fn rotated_component(&self, i: usize) -> Result<Observable, InvariantError> {
        if i == 0 || i > self.dim || i == self.axis {
            return Err(InvariantError::AxisOutOfRange { axis: i, dim: self.dim });
        }
        let source = self.re_s_display.as_ref().unwrap_or(&self.re_script_s);
        let name = format!("{}[rotated to axis {}]", source.name(), i);
        let (lo, hi) = (self.axis.min(i), self.axis.max(i));
        let l = angular_momentum(self.dim, lo, hi);
        let rotated = if i > self.axis {
            bracket_observable(&l, source)
        } else {
            bracket_observable(source, &l)
        };
        Ok(rotated.renamed(name))
    }
}

/// Build the invariant set of a curved Kepler or deformed Kepler system
/// along the given 1-based axis.
pub fn runge_lenz(sys: &HamiltonianSystem, axis: usize) -> Result<InvariantSet, InvariantError> {
    let dim = sys.spec.dim;
    if axis == 0 || axis > dim {
        return Err(InvariantError::AxisOutOfRange { axis, dim });
    }
    if sys.real_exponent.is_some() {
        return Err(InvariantError::IrrationalExponent);
    }
    let (beta, k, mu) = match sys.spec.family {
        Family::KeplerCurved { k, mu, .. } => (Rational::new(1, 1).expect("1/1 is valid"), k, mu),
        Family::PerlickI { beta, k, mu } => (beta, k, mu),
        _ => {
            return Err(InvariantError::UnsupportedFamily {
                family: sys.spec.family.name().to_string(),
                what: "the Runge-Lenz construction (barrier and exchanged \
                       families have their own builders)",
            })
        }
    };
    let family = sys.spec.family.name();
    let m = beta.num();
    let n = beta.den();

    let mut arena = ExprArena::new(2 * dim);
    let vars = VarSet::new(&mut arena, dim);
    let gens = generator_nodes(&mut arena, &vars, &RealizationKind::Cartesian, dim);
    let c = casimir_node(&mut arena, &vars, &RealizationKind::Cartesian, dim);
    let sa = sqrt_a_nodes(&mut arena, &vars, &gens, c, axis);
    let mu_node = arena.konst(mu);
    let bf = b_factor_nodes(&mut arena, gens.j_minus, gens.j3, c, beta.value(), k, mu_node);
    let bn = arena.cpowu(bf, n);
    let am = arena.cpowu(sa, m);
    let sp = arena.cmul(bn, am);

    let sqrt_a =
        ComplexObservable::from_arena(format!("sqrtA[axis {axis}]"), dim, arena.clone(), sa);
    let b = ComplexObservable::from_arena(format!("B[{family}]"), dim, arena.clone(), bf);
    let script_s =
        ComplexObservable::from_arena(format!("scriptS[{family}]"), dim, arena.clone(), sp);
    let re_script_s = script_s.re_part(format!("Re scriptS[{family}]"));
    let im_script_s = script_s.im_part(format!("Im scriptS[{family}]"));

    let classic = m == 1 && n == 1;
    let (s, re_s_display, im_s_display, im_s_sqrtc_display) = if classic {
        let sc = arena.sqrt(c);
        let sc_c = arena.c_from_re(sc);
        let ba = arena.cmul(bf, sa);
        let s_node = arena.cdiv(ba, sc_c);
        let s = ComplexObservable::from_arena(format!("S[{family}]"), dim, arena, s_node);
        let re_d = Observable::build(format!("Re S[{family}]"), dim, |a, v| {
            let gens = generator_nodes(a, v, &RealizationKind::Cartesian, dim);
            let c = casimir_node(a, v, &RealizationKind::Cartesian, dim);
            re_display_nodes(a, v, &gens, c, k, mu, axis)
        });
        let im_sc_d = Observable::build(format!("Im S * sqrtC[{family}]"), dim, |a, v| {
            let gens = generator_nodes(a, v, &RealizationKind::Cartesian, dim);
            let c = casimir_node(a, v, &RealizationKind::Cartesian, dim);
            im_sqrtc_display_nodes(a, v, &gens, c, k, mu, axis)
        });
        let im_d = Observable::build(format!("Im S[{family}]"), dim, |a, v| {
            let gens = generator_nodes(a, v, &RealizationKind::Cartesian, dim);
            let c = casimir_node(a, v, &RealizationKind::Cartesian, dim);
            let raw = im_sqrtc_display_nodes(a, v, &gens, c, k, mu, axis);
            let sc = a.sqrt(c);
            a.div(raw, sc)
        });
        (Some(s), Some(re_d), Some(im_d), Some(im_sc_d))
    } else {
        (None, None, None, None)
    };

    Ok(InvariantSet {
        dim,
        axis,
        beta,
        angular: angular_momenta(dim),
        sqrt_a,
        b,
        script_s,
        re_script_s,
        im_script_s,
        s,
        re_s_display,
        im_s_display,
        im_s_sqrtc_display,
    })
}

/// Invariants of the planar barrier family: the centrifugal Casimir, the
/// radial factor built on it, the barrier-corrected square of the axis
/// factor, and their conserved power combination b^{2n} z^m.
#[derive(Debug)]
pub struct TtwInvariantSet {
    /// The centrifugal Casimir, conserved angular charge of the family.
    pub casimir: Observable,
    /// Radial factor with the centrifugal Casimir in place of L^2.
    pub b: ComplexObservable,
    /// Barrier-corrected square of the axis factor. Its phase rotates at
    /// twice the plain axis rate, hence the doubled power on `b`.
    pub z: ComplexObservable,
    /// The conserved power combination b^{2n} * z^m.
    pub script_s: ComplexObservable,
    /// Real part of `script_s`.
    pub re_script_s: Observable,
    /// Imaginary part of `script_s`.
    pub im_script_s: Observable,
}

impl TtwInvariantSet {
    /// Members to log along trajectories.
    pub fn registered(&self) -> Vec<&Observable> {
        vec![&self.casimir, &self.re_script_s, &self.im_script_s]
    }
}

/// Build the barrier-family invariant set (axis 1 carries the b1
/// correction).
pub fn ttw_invariant(sys: &HamiltonianSystem) -> Result<TtwInvariantSet, InvariantError> {
    let Family::TTWCurved { beta, k, mu, b1, b2 } = sys.spec.family else {
        return Err(InvariantError::UnsupportedFamily {
            family: sys.spec.family.name().to_string(),
            what: "the barrier-family invariant",
        });
    };
    let kind = RealizationKind::Centrifugal { b: vec![b1, b2] };
    let mut arena = ExprArena::new(4);
    let vars = VarSet::new(&mut arena, 2);
    let gens = generator_nodes(&mut arena, &vars, &kind, 2);
    let c = casimir_node(&mut arena, &vars, &kind, 2);
    let mu_node = arena.konst(mu);
    let bf = b_factor_nodes(&mut arena, gens.j_minus, gens.j3, c, beta.value(), k, mu_node);
    let sa = sqrt_a_nodes(&mut arena, &vars, &gens, c, 1);
    let sa2 = arena.cpowu(sa, 2);
    let x1sq = arena.square(vars.x[0]);
    let bjm = arena.scale(b1 * b1, gens.j_minus);
    let corr = arena.div(bjm, x1sq);
    let z_re = arena.sub(sa2.re, corr);
    let z = CNode { re: z_re, im: sa2.im };
    let b2n = arena.cpowu(bf, 2 * beta.den());
    let zm = arena.cpowu(z, beta.num());
    let sp = arena.cmul(b2n, zm);

    let casimir = Observable::from_arena("C[centrifugal]", 2, arena.clone(), c);
    let b = ComplexObservable::from_arena("B[TTWCurved]", 2, arena.clone(), bf);
    let z = ComplexObservable::from_arena("Z[TTWCurved]", 2, arena.clone(), z);
    let script_s = ComplexObservable::from_arena("scriptS[TTWCurved]", 2, arena, sp);
    let re_script_s = script_s.re_part("Re scriptS[TTWCurved]");
    let im_script_s = script_s.im_part("Im scriptS[TTWCurved]");
    Ok(TtwInvariantSet { casimir, b, z, script_s, re_script_s, im_script_s })
}

/// The coupling-exchanged invariant: the curved Kepler complex invariant
/// at curvature k = -4 lambda^2, with the mass parameter replaced by
/// half the exchanged Hamiltonian, pulled back through the planar square
/// map. Poisson-commutes with the exchanged Hamiltonian.
pub fn ccm_runge_lenz(
    sys: &HamiltonianSystem,
    axis: usize,
) -> Result<ComplexObservable, InvariantError> {
    let Family::DarbouxCCM { lambda, .. } = sys.spec.family else {
        return Err(InvariantError::UnsupportedFamily {
            family: sys.spec.family.name().to_string(),
            what: "the coupling-exchanged invariant",
        });
    };
    if axis == 0 || axis > 2 {
        return Err(InvariantError::AxisOutOfRange { axis, dim: 2 });
    }
    let k = -4.0 * lambda * lambda;

    // The source invariant, with one extra variable slot standing in for
    // the mass parameter.
    let mut ka = ExprArena::new(5);
    let kvars = VarSet {
        x: vec![ka.var(0), ka.var(1)],
        p: vec![ka.var(2), ka.var(3)],
    };
    let mu_slot = ka.var(4);
    let gens = generator_nodes(&mut ka, &kvars, &RealizationKind::Cartesian, 2);
    let c = casimir_node(&mut ka, &kvars, &RealizationKind::Cartesian, 2);
    let sa = sqrt_a_nodes(&mut ka, &kvars, &gens, c, axis);
    let bf = b_factor_nodes(&mut ka, gens.j_minus, gens.j3, c, 1.0, k, mu_slot);
    let ba = ka.cmul(bf, sa);
    let scn = ka.sqrt(c);
    let sc = ka.c_from_re(scn);
    let s = ka.cdiv(ba, sc);

    // Compose: coordinates through the square map, mass through H/2.
    let mut arena = ExprArena::new(4);
    let tvars = VarSet::new(&mut arena, 2);
    let mut var_map = levi_civita_nodes(&mut arena, &tvars);
    let (ha, hroot) = sys.h.graph();
    let hi = arena.import(ha, &[hroot])[0];
    var_map.push(arena.scale(0.5, hi));
    let roots = arena.import_subst(&ka, &[s.re, s.im], &var_map);
    Ok(ComplexObservable::from_arena(
        "S[DarbouxCCM]",
        2,
        arena,
        CNode { re: roots[0], im: roots[1] },
    ))
}

/// Worst |{H, inv}| over points sampled inside the admissible region.
pub fn verify_commutation(
    sys: &HamiltonianSystem,
    inv: &Observable,
    points: usize,
    seed: u64,
) -> Result<f64, PhaseError> {
    let dim = sys.spec.dim;
    let region = sys.admissible.sample_region(dim);
    let pts = sample_points(dim, points, seed, region);
    let mut worst = 0.0f64;
    for pt in &pts {
        if sys.admissible.check(pt, sys.h.name()).is_err() {
            continue;
        }
        worst = worst.max(poisson_bracket(&sys.h, inv, pt)?.abs());
    }
    Ok(worst)
}

/// Smallest Jacobian rank of the observable family over the points,
/// counting singular values above `rel_threshold` times the largest.
pub fn independence_min_rank(
    observables: &[&Observable],
    pts: &[PhasePoint],
    rel_threshold: f64,
) -> Result<usize, PhaseError> {
    assert!(!observables.is_empty() && !pts.is_empty());
    let mut min_rank = usize::MAX;
    for pt in pts {
        let dim = pt.dim();
        let mut mat = DMatrix::<f64>::zeros(observables.len(), 2 * dim);
        for (row, obs) in observables.iter().enumerate() {
            let g = obs.eval_gradient(pt)?;
            for i in 0..dim {
                mat[(row, i)] = g.dx[i];
                mat[(row, dim + i)] = g.dp[i];
            }
        }
        let svd = mat.svd(false, false);
        let smax = svd.singular_values.max();
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > rel_threshold * smax)
            .count();
        min_rank = min_rank.min(rank);
    }
    Ok(min_rank)
}

/// The conic orbit shape of a bounded curved Kepler trajectory:
/// cos(theta - theta0) * amplitude = L^2 (1 - k r^2)/r - mu along the
/// whole orbit, with amplitude^2 = 2 E L^2 - 8 mu delta L^2 - 4 k L^4
/// + mu^2. The phase theta0 is fitted once from the initial state.
#[derive(Clone, Copy, Debug)]
pub struct OrbitEquation {
    k: f64,
    mu: f64,
    /// Conserved angular momentum of the fitted trajectory.
    pub angular_momentum: f64,
    /// Conserved energy of the fitted trajectory.
    pub energy: f64,
    /// Perihelion phase.
    pub theta0: f64,
    /// Modulus of the conic residue; zero for circular orbits.
    pub amplitude: f64,
}

impl OrbitEquation {
    /// Fit the orbit equation to a planar curved Kepler state.
    pub fn fit(sys: &HamiltonianSystem, pt: &PhasePoint) -> Result<Self, InvariantError> {
        let Family::KeplerCurved { k, mu, delta } = sys.spec.family else {
            return Err(InvariantError::UnsupportedFamily {
                family: sys.spec.family.name().to_string(),
                what: "the conic orbit equation",
            });
        };
        if sys.spec.dim != 2 {
            return Err(InvariantError::UnsupportedFamily {
                family: format!("{}-dimensional KeplerCurved", sys.spec.dim),
                what: "the planar orbit equation",
            });
        }
        let energy = sys.eval(pt)?;
        let l = pt.x(0) * pt.p(1) - pt.x(1) * pt.p(0);
        let l2 = l * l;
        let amp2 = 2.0 * energy * l2 - 8.0 * mu * delta * l2 - 4.0 * k * l2 * l2 + mu * mu;
        let amplitude = amp2.max(0.0).sqrt();
        let r = pt.radius();
        let theta = pt.x(1).atan2(pt.x(0));
        let theta0 = if amplitude > 0.0 {
            let shape = l2 * (1.0 - k * r * r) / r - mu;
            let pr = (pt.x(0) * pt.p(0) + pt.x(1) * pt.p(1)) / r;
            let rc = shape / amplitude;
            let rs = (1.0 + k * r * r) * l * pr / amplitude;
            theta - rs.atan2(rc)
        } else {
            0.0
        };
        Ok(OrbitEquation { k, mu, angular_momentum: l, energy, theta0, amplitude })
    }

    /// Absolute deviation of a state from the fitted conic.
    pub fn residual(&self, pt: &PhasePoint) -> f64 {
        let r = pt.radius();
        let theta = pt.x(1).atan2(pt.x(0));
        let l2 = self.angular_momentum * self.angular_momentum;
        let shape = l2 * (1.0 - self.k * r * r) / r - self.mu;
        ((theta - self.theta0).cos() * self.amplitude - shape).abs()
    }
}

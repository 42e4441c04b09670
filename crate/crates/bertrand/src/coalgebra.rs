//! sl(2) Poisson algebra realizations and their Casimir family.
//!
//! The construction that every Hamiltonian family in this crate shares
//! starts from three phase-space functions J-, J+, J3 closing the sl(2)
//! Poisson algebra
//!
//! ```text
//! {J3, J+} = 2 J+,   {J3, J-} = -2 J-,   {J-, J+} = 4 J3,
//! ```
//!
//! realized additively over N degrees of freedom. Two realizations are
//! provided:
//!
//! - cartesian: J- = sum x_i^2, J+ = sum p_i^2, J3 = sum x_i p_i;
//! - centrifugal: as above but J+ = sum (p_i^2 + b_i^2 / x_i^2), which
//!   keeps the same algebra while adding inverse-square barriers.
//!
//! Because the generators are sums of single-site pieces, truncating the
//! sums to the first l sites again satisfies the algebra, and brackets of
//! generators truncated at different depths close on the shallower one:
//! {J3^(i), J+^(j)} = 2 J+^(min(i,j)) and so on. The quadratic functions
//!
//! ```text
//! C^(l) = J+^(l) J-^(l) - (J3^(l))^2
//! ```
//!
//! Poisson-commute with all three deepest generators and with each other,
//! so an N-site realization carries N - 1 nontrivial commuting charges
//! (C^(1) vanishes identically in the cartesian case). This module builds
//! the generators and Casimirs as observables and verifies all of these
//! relations numerically at seeded random points.

use crate::expr::{ExprArena, NodeId};
use crate::phasespace::{
    bracket_observable, poisson_bracket, sample_points, Observable, PhaseError, SampleRegion,
    VarSet,
};
use serde::Serialize;
use thiserror::Error;

/// Errors from realization construction.
#[derive(Debug, Error)]
pub enum CoalgebraError {
    #[error("realization needs at least one degree of freedom")]
    EmptyRealization,

    #[error("centrifugal realization over {dim} degrees of freedom got {got} barrier strengths")]
    BarrierCountMismatch { dim: usize, got: usize },

    #[error("barrier strengths must be finite")]
    NonFiniteBarrier,

    #[error(transparent)]
    Phase(#[from] PhaseError),
}

/// Which sl(2) realization to build.
#[derive(Clone, Debug, PartialEq)]
pub enum RealizationKind {
    /// J+ is the plain kinetic sum of squared momenta.
    Cartesian,
    /// J+ gains an inverse-square barrier b_i^2 / x_i^2 on each site.
    Centrifugal { b: Vec<f64> },
}

impl RealizationKind {
    /// Short name for reports.
    pub fn label(&self) -> &'static str {
        match self {
            RealizationKind::Cartesian => "cartesian",
            RealizationKind::Centrifugal { .. } => "centrifugal",
        }
    }
}

/// Node ids of the three generators over a site prefix, for builders that
/// assemble Hamiltonians inside their own arena.
#[derive(Clone, Copy, Debug)]
pub struct GeneratorNodes {
    pub j_minus: NodeId,
    pub j_plus: NodeId,
    pub j3: NodeId,
}

/// Build J-, J+, J3 over the first `sites` degrees of freedom.
pub fn generator_nodes(
    arena: &mut ExprArena,
    vars: &VarSet,
    kind: &RealizationKind,
    sites: usize,
) -> GeneratorNodes {
    assert!(sites >= 1 && sites <= vars.x.len(), "site prefix out of range");
    let j_minus = arena.sum_of_squares(&vars.x[..sites]);
    let j3 = arena.dot(&vars.x[..sites], &vars.p[..sites]);
    let mut j_plus = arena.sum_of_squares(&vars.p[..sites]);
    if let RealizationKind::Centrifugal { b } = kind {
        for (i, &bi) in b.iter().enumerate().take(sites) {
            let b2 = arena.konst(bi * bi);
            let x2 = arena.square(vars.x[i]);
            let barrier = arena.div(b2, x2);
            j_plus = arena.add(j_plus, barrier);
        }
    }
    GeneratorNodes { j_minus, j_plus, j3 }
}

/// Build the Casimir C^(l) = J+^(l) J-^(l) - (J3^(l))^2 over a site prefix.
pub fn casimir_node(
    arena: &mut ExprArena,
    vars: &VarSet,
    kind: &RealizationKind,
    sites: usize,
) -> NodeId {
    let g = generator_nodes(arena, vars, kind, sites);
    let prod = arena.mul(g.j_plus, g.j_minus);
    let j3sq = arena.square(g.j3);
    arena.sub(prod, j3sq)
}

/// Generators for a 2D polar canonical chart (r, theta, p_r, p_theta):
/// J- = r^2, J+ = p_r^2 + p_theta^2 / r^2, J3 = r p_r. The Casimir
/// J+ J- - J3^2 collapses to p_theta^2 exactly. Positions are read as
/// (x1, x2) = (r, theta), momenta as (p1, p2) = (p_r, p_theta).
pub fn polar_chart_generators(arena: &mut ExprArena, vars: &VarSet) -> GeneratorNodes {
    assert_eq!(vars.x.len(), 2, "polar chart generators are two-dimensional");
    let r = vars.x[0];
    let pr = vars.p[0];
    let ptheta = vars.p[1];
    let j_minus = arena.square(r);
    let j3 = arena.mul(r, pr);
    let pr2 = arena.square(pr);
    let pt2 = arena.square(ptheta);
    let ang = arena.div(pt2, j_minus);
    let j_plus = arena.add(pr2, ang);
    GeneratorNodes { j_minus, j_plus, j3 }
}

/// An sl(2) realization over N degrees of freedom, with the full tower of
/// prefix generators represented through the deepest ones and the Casimir
/// family C^(1)..C^(N) as standalone observables.
#[derive(Debug)]
pub struct Sl2Realization {
    pub dim: usize,
    pub kind: RealizationKind,
    /// Deepest generators, over all N sites.
    pub j_minus: Observable,
    pub j_plus: Observable,
    pub j3: Observable,
    /// casimirs[l - 1] is C^(l) over the first l sites.
    pub casimirs: Vec<Observable>,
}

/// Build a realization and its Casimir family.
pub fn realize(dim: usize, kind: RealizationKind) -> Result<Sl2Realization, CoalgebraError> {
    if dim == 0 {
        return Err(CoalgebraError::EmptyRealization);
    }
    if let RealizationKind::Centrifugal { b } = &kind {
        if b.len() != dim {
            return Err(CoalgebraError::BarrierCountMismatch { dim, got: b.len() });
        }
        if !b.iter().all(|v| v.is_finite()) {
            return Err(CoalgebraError::NonFiniteBarrier);
        }
    }
    let gen_obs = |which: usize, sites: usize, name: String| {
        let kind = kind.clone();
        Observable::build(name, dim, move |a, v| {
            let g = generator_nodes(a, v, &kind, sites);
            match which {
                0 => g.j_minus,
                1 => g.j_plus,
                _ => g.j3,
            }
        })
    };
    let j_minus = gen_obs(0, dim, format!("J-^({dim})"));
    let j_plus = gen_obs(1, dim, format!("J+^({dim})"));
    let j3 = gen_obs(2, dim, format!("J3^({dim})"));
    let casimirs = (1..=dim)
        .map(|l| {
            let kind = kind.clone();
            Observable::build(format!("C^({l})"), dim, move |a, v| {
                casimir_node(a, v, &kind, l)
            })
        })
        .collect();
    Ok(Sl2Realization { dim, kind, j_minus, j_plus, j3, casimirs })
}

impl Sl2Realization {
    /// Generator over a site prefix, freshly built.
    pub fn prefix_generator(&self, which: GeneratorName, sites: usize) -> Observable {
        assert!(sites >= 1 && sites <= self.dim, "site prefix out of range");
        let kind = self.kind.clone();
        let name = format!("{}^({sites})", which.symbol());
        Observable::build(name, self.dim, move |a, v| {
            let g = generator_nodes(a, v, &kind, sites);
            match which {
                GeneratorName::JMinus => g.j_minus,
                GeneratorName::JPlus => g.j_plus,
                GeneratorName::J3 => g.j3,
            }
        })
    }

    /// The deepest Casimir C^(N).
    pub fn casimir(&self) -> &Observable {
        &self.casimirs[self.dim - 1]
    }
}

/// Which of the three generators.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeneratorName {
    JMinus,
    JPlus,
    J3,
}

impl GeneratorName {
    fn symbol(self) -> &'static str {
        match self {
            GeneratorName::JMinus => "J-",
            GeneratorName::JPlus => "J+",
            GeneratorName::J3 => "J3",
        }
    }

    fn all() -> [GeneratorName; 3] {
        [GeneratorName::JMinus, GeneratorName::JPlus, GeneratorName::J3]
    }
}

/// One verified relation: a label, the worst absolute residual seen,
/// and the sampled point (flat coordinates then momenta) where it
/// occurred.
#[derive(Clone, Debug, Serialize)]
pub struct RelationCheck {
    pub label: String,
    pub max_abs: f64,
    pub worst_at: Vec<f64>,
}

/// Numerical verification report for a realization.
#[derive(Clone, Debug, Serialize)]
pub struct AlgebraReport {
    pub dim: usize,
    pub realization: String,
    pub points: usize,
    pub seed: u64,
    pub checks: Vec<RelationCheck>,
    pub max_abs: f64,
}

impl AlgebraReport {
    /// Worst residual across all checks.
    pub fn worst(&self) -> f64 {
        self.max_abs
    }
}

/// Verify, at seeded random points, that all prefix generators close the
/// sl(2) algebra on the shallower prefix, that every Casimir commutes
/// with the deepest generators, and that the Casimirs commute pairwise.
pub fn verify_relations(real: &Sl2Realization, points: usize, seed: u64) -> AlgebraReport {
    let dim = real.dim;
    let pts = sample_points(dim, points, seed, SampleRegion::default());
    let mut checks: Vec<RelationCheck> = Vec::new();

    let prefix = |which: GeneratorName, sites: usize| real.prefix_generator(which, sites);

    let mut record = |label: String, residual: &Observable| {
        let mut worst = 0.0f64;
        let mut worst_at: &[f64] = pts.first().map_or(&[], |pt| pt.flat());
        for pt in &pts {
            let v = residual.eval(pt).expect("residual evaluation at a sampled point");
            if v.abs() >= worst {
                worst = v.abs();
                worst_at = pt.flat();
            }
        }
        checks.push(RelationCheck { label, max_abs: worst, worst_at: worst_at.to_vec() });
    };

    // sl(2) relations across all prefix depths: the bracket of generators
    // truncated at depths i and j closes on depth min(i, j).
    for i in 1..=dim {
        for j in 1..=dim {
            let m = i.min(j);
            let j3_i = prefix(GeneratorName::J3, i);
            let jp_j = prefix(GeneratorName::JPlus, j);
            let jm_j = prefix(GeneratorName::JMinus, j);
            let jm_i = prefix(GeneratorName::JMinus, i);
            let jp_min = prefix(GeneratorName::JPlus, m);
            let jm_min = prefix(GeneratorName::JMinus, m);
            let j3_min = prefix(GeneratorName::J3, m);

            let b1 = bracket_observable(&j3_i, &jp_j);
            let r1 = Observable::linear_comb(1.0, &b1, -2.0, &jp_min, format!(
                "{{J3^({i}), J+^({j})}} - 2 J+^({m})"
            ));
            record(r1.name().to_string(), &r1);

            let b2 = bracket_observable(&j3_i, &jm_j);
            let r2 = Observable::linear_comb(1.0, &b2, 2.0, &jm_min, format!(
                "{{J3^({i}), J-^({j})}} + 2 J-^({m})"
            ));
            record(r2.name().to_string(), &r2);

            let b3 = bracket_observable(&jm_i, &jp_j);
            let r3 = Observable::linear_comb(1.0, &b3, -4.0, &j3_min, format!(
                "{{J-^({i}), J+^({j})}} - 4 J3^({m})"
            ));
            record(r3.name().to_string(), &r3);
        }
    }

    // Casimir centrality against the deepest generators.
    for (l, c) in real.casimirs.iter().enumerate() {
        for which in GeneratorName::all() {
            let g = prefix(which, dim);
            let b = bracket_observable(c, &g);
            record(format!("{{C^({}), {}^({dim})}}", l + 1, which.symbol()), &b);
        }
    }

    // Casimirs commute among themselves.
    for l1 in 0..real.casimirs.len() {
        for l2 in (l1 + 1)..real.casimirs.len() {
            let b = bracket_observable(&real.casimirs[l1], &real.casimirs[l2]);
            record(format!("{{C^({}), C^({})}}", l1 + 1, l2 + 1), &b);
        }
    }

    let max_abs = checks.iter().map(|c| c.max_abs).fold(0.0, f64::max);
    AlgebraReport {
        dim,
        realization: real.kind.label().to_string(),
        points,
        seed,
        checks,
        max_abs,
    }
}

/// Convenience: worst residual of {f, g} over sampled points.
pub fn max_bracket_residual(
    f: &Observable,
    g: &Observable,
    pts: &[crate::phasespace::PhasePoint],
) -> Result<f64, PhaseError> {
    let mut worst = 0.0f64;
    for pt in pts {
        worst = worst.max(poisson_bracket(f, g, pt)?.abs());
    }
    Ok(worst)
}

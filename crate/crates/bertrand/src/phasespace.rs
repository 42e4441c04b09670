//! Observables on phase space and their Poisson brackets.
//!
//! A phase point for an N-degree-of-freedom system is the concatenation
//! (x_1..x_N, p_1..p_N). An observable is an expression graph over those
//! 2N slots together with its full symbolic gradient, so Poisson brackets
//! are evaluated from exact derivatives rather than finite differences.
//!
//! The bracket convention is
//!
//! ```text
//! {f, g} = sum_i (df/dx_i dg/dp_i - df/dp_i dg/dx_i)
//! ```
//!
//! so {x_i, p_j} = delta_ij. Brackets are available both as numbers at a
//! point and as new observables (the bracket expression with its own
//! gradient), which is what nested identities like the Jacobi identity
//! and bracket-generated invariant components need.

use crate::expr::{CNode, ExprArena, NodeId};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Errors from observable evaluation and phase-point construction.
#[derive(Debug, Error)]
pub enum PhaseError {
    /// Observable and point disagree about the number of degrees of freedom.
    #[error("dimension mismatch: `{name}` expects {expected} degrees of freedom, point has {got}")]
    DimensionMismatch {
        name: String,
        expected: usize,
        got: usize,
    },

    /// The value or a gradient component came out non-finite.
    #[error("singular evaluation of `{observable}`: value or gradient is not finite at the given point")]
    SingularEvaluation { observable: String },

    /// A phase point was built from non-finite numbers.
    #[error("phase point contains non-finite coordinates")]
    NonFinitePoint,

    /// A point lies outside the region where a Hamiltonian is defined.
    #[error("point outside the admissible region of `{system}`: {reason}")]
    OutsideAdmissibleRegion { system: String, reason: String },
}

/// A point (x, p) in phase space, stored flat as x_1..x_N, p_1..p_N.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePoint {
    coords: Vec<f64>,
    dim: usize,
}

impl PhasePoint {
    /// Build from position and momentum slices of equal length.
    pub fn new(x: &[f64], p: &[f64]) -> Result<Self, PhaseError> {
        assert_eq!(x.len(), p.len(), "positions and momenta must have equal length");
        if !x.iter().chain(p).all(|v| v.is_finite()) {
            return Err(PhaseError::NonFinitePoint);
        }
        let mut coords = Vec::with_capacity(2 * x.len());
        coords.extend_from_slice(x);
        coords.extend_from_slice(p);
        Ok(PhasePoint { dim: x.len(), coords })
    }

    /// Build from a flat (x_1..x_N, p_1..p_N) slice.
    pub fn from_flat(flat: &[f64]) -> Result<Self, PhaseError> {
        assert_eq!(flat.len() % 2, 0, "flat phase point must have even length");
        let dim = flat.len() / 2;
        Self::new(&flat[..dim], &flat[dim..])
    }

    /// Number of degrees of freedom.
    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Position component `i`.
    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.coords[i]
    }

    /// Momentum component `i`.
    #[inline]
    pub fn p(&self, i: usize) -> f64 {
        self.coords[self.dim + i]
    }

    /// All positions.
    #[inline]
    pub fn positions(&self) -> &[f64] {
        &self.coords[..self.dim]
    }

    /// All momenta.
    #[inline]
    pub fn momenta(&self) -> &[f64] {
        &self.coords[self.dim..]
    }

    /// The flat coordinate slice.
    #[inline]
    pub fn flat(&self) -> &[f64] {
        &self.coords
    }

    /// Euclidean radius of the position part.
    pub fn radius(&self) -> f64 {
        self.positions().iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Pre-made variable nodes handed to observable builder closures.
pub struct VarSet {
    /// Position nodes x_1..x_N.
    pub x: Vec<NodeId>,
    /// Momentum nodes p_1..p_N.
    pub p: Vec<NodeId>,
}

impl VarSet {
    /// Create the 2N variable nodes in an arena.
    pub fn new(arena: &mut ExprArena, dim: usize) -> Self {
        let x = (0..dim).map(|i| arena.var(i)).collect();
        let p = (0..dim).map(|i| arena.var(dim + i)).collect();
        VarSet { x, p }
    }
}

/// Value and gradient of an observable at a point.
#[derive(Clone, Debug)]
pub struct Gradient {
    pub value: f64,
    /// Derivatives with respect to positions.
    pub dx: Vec<f64>,
    /// Derivatives with respect to momenta.
    pub dp: Vec<f64>,
}

/// A real observable: an expression graph plus its symbolic gradient.
#[derive(Clone, Debug)]
pub struct Observable {
    name: String,
    dim: usize,
    arena: ExprArena,
    root: NodeId,
    grad: Vec<NodeId>,
}

impl Observable {
    /// Build an observable by constructing its expression in a fresh arena.
    /// The closure receives the arena and the 2N variable nodes and returns
    /// the root. The gradient is differentiated symbolically and the graph
    /// is compacted to the live nodes.
    pub fn build<F>(name: impl Into<String>, dim: usize, f: F) -> Observable
    where
        F: FnOnce(&mut ExprArena, &VarSet) -> NodeId,
    {
        let mut arena = ExprArena::new(2 * dim);
        let vars = VarSet::new(&mut arena, dim);
        let root = f(&mut arena, &vars);
        Self::from_arena(name, dim, arena, root)
    }

    /// Wrap an existing arena and root into an observable. Differentiates,
    /// then extracts the live graph so evaluation cost tracks the actual
    /// expression, not construction history.
    pub fn from_arena(
        name: impl Into<String>,
        dim: usize,
        mut arena: ExprArena,
        root: NodeId,
    ) -> Observable {
        assert_eq!(arena.nvars(), 2 * dim, "arena must have 2N variable slots");
        let grad = arena.gradient(root);
        let mut keep = Vec::with_capacity(1 + grad.len());
        keep.push(root);
        keep.extend_from_slice(&grad);
        let (compact, mapped) = arena.extract(&keep);
        Observable {
            name: name.into(),
            dim,
            arena: compact,
            root: mapped[0],
            grad: mapped[1..].to_vec(),
        }
    }

    /// Observable name, used in reports and error messages.
    #[inline]
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Degrees of freedom this observable is defined over.
    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of live graph nodes (value plus gradient).
    #[inline]
    pub fn node_count(&self) -> usize {
        self.arena.len()
    }

    /// Rename, keeping the graph.
    pub fn renamed(mut self, name: impl Into<String>) -> Observable {
        self.name = name.into();
        self
    }

    fn check_dim(&self, got: usize) -> Result<(), PhaseError> {
        if got != self.dim {
            return Err(PhaseError::DimensionMismatch {
                name: self.name.clone(),
                expected: self.dim,
                got,
            });
        }
        Ok(())
    }

    /// Value at a point. Non-finite results are reported as a singular
    /// evaluation naming this observable.
    pub fn eval(&self, pt: &PhasePoint) -> Result<f64, PhaseError> {
        self.check_dim(pt.dim())?;
        let mut scratch = Vec::new();
        let v = self.arena.eval_root(self.root, pt.flat(), &mut scratch);
        if !v.is_finite() {
            return Err(PhaseError::SingularEvaluation {
                observable: self.name.clone(),
            });
        }
        Ok(v)
    }

    /// Value and gradient at a point.
    pub fn eval_gradient(&self, pt: &PhasePoint) -> Result<Gradient, PhaseError> {
        self.check_dim(pt.dim())?;
        let mut scratch = Vec::new();
        let mut grad = vec![0.0; 2 * self.dim];
        let (value, finite) = self.eval_grad_into(pt.flat(), &mut scratch, &mut grad);
        if !finite {
            return Err(PhaseError::SingularEvaluation {
                observable: self.name.clone(),
            });
        }
        let dp = grad.split_off(self.dim);
        Ok(Gradient { value, dx: grad, dp })
    }

    /// Hot-loop evaluation: value and gradient into caller storage with a
    /// reusable scratch buffer. Returns the value and whether value and
    /// gradient are all finite. No allocation after the first call.
    pub fn eval_grad_into(
        &self,
        flat: &[f64],
        scratch: &mut Vec<f64>,
        grad_out: &mut [f64],
    ) -> (f64, bool) {
        debug_assert_eq!(flat.len(), 2 * self.dim);
        debug_assert_eq!(grad_out.len(), 2 * self.dim);
        self.arena.eval_all(flat, scratch);
        let value = scratch[self.root as usize];
        let mut finite = value.is_finite();
        for (o, &g) in grad_out.iter_mut().zip(&self.grad) {
            let gv = scratch[g as usize];
            *o = gv;
            finite &= gv.is_finite();
        }
        (value, finite)
    }

    /// Value only, on a flat slice, without finiteness checks. The caller
    /// is responsible for interpreting non-finite results.
    pub fn eval_flat_raw(&self, flat: &[f64], scratch: &mut Vec<f64>) -> f64 {
        debug_assert_eq!(flat.len(), 2 * self.dim);
        self.arena.eval_root(self.root, flat, scratch)
    }

    /// Pointwise product f*g as a new observable.
    pub fn product(f: &Observable, g: &Observable, name: impl Into<String>) -> Observable {
        assert_eq!(f.dim, g.dim, "product needs observables of equal dimension");
        let mut arena = ExprArena::new(2 * f.dim);
        let fr = arena.import(&f.arena, &[f.root])[0];
        let gr = arena.import(&g.arena, &[g.root])[0];
        let root = arena.mul(fr, gr);
        Observable::from_arena(name, f.dim, arena, root)
    }

    /// Linear combination a*f + b*g as a new observable.
    pub fn linear_comb(
        a: f64,
        f: &Observable,
        b: f64,
        g: &Observable,
        name: impl Into<String>,
    ) -> Observable {
        assert_eq!(f.dim, g.dim, "linear combination needs equal dimensions");
        let mut arena = ExprArena::new(2 * f.dim);
        let fr = arena.import(&f.arena, &[f.root])[0];
        let gr = arena.import(&g.arena, &[g.root])[0];
        let af = arena.scale(a, fr);
        let bg = arena.scale(b, gr);
        let root = arena.add(af, bg);
        Observable::from_arena(name, f.dim, arena, root)
    }

    /// Access to the underlying graph for composition by other modules.
    pub(crate) fn graph(&self) -> (&ExprArena, NodeId) {
        (&self.arena, self.root)
    }
}

/// A complex observable as a shared graph with real and imaginary roots.
#[derive(Clone, Debug)]
pub struct ComplexObservable {
    name: String,
    dim: usize,
    arena: ExprArena,
    re_root: NodeId,
    im_root: NodeId,
    re_grad: Vec<NodeId>,
    im_grad: Vec<NodeId>,
}

impl ComplexObservable {
    /// Build from a closure returning a complex node pair.
    pub fn build<F>(name: impl Into<String>, dim: usize, f: F) -> ComplexObservable
    where
        F: FnOnce(&mut ExprArena, &VarSet) -> CNode,
    {
        let mut arena = ExprArena::new(2 * dim);
        let vars = VarSet::new(&mut arena, dim);
        let c = f(&mut arena, &vars);
        Self::from_arena(name, dim, arena, c)
    }

    /// Wrap an arena and a complex root pair.
    pub fn from_arena(
        name: impl Into<String>,
        dim: usize,
        mut arena: ExprArena,
        c: CNode,
    ) -> ComplexObservable {
        assert_eq!(arena.nvars(), 2 * dim, "arena must have 2N variable slots");
        let re_grad = arena.gradient(c.re);
        let im_grad = arena.gradient(c.im);
        let mut keep = vec![c.re, c.im];
        keep.extend_from_slice(&re_grad);
        keep.extend_from_slice(&im_grad);
        let (compact, mapped) = arena.extract(&keep);
        ComplexObservable {
            name: name.into(),
            dim,
            arena: compact,
            re_root: mapped[0],
            im_root: mapped[1],
            re_grad: mapped[2..2 + 2 * dim].to_vec(),
            im_grad: mapped[2 + 2 * dim..].to_vec(),
        }
    }

    /// Observable name.
    #[inline]
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Degrees of freedom.
    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Complex value at a point.
    pub fn eval(&self, pt: &PhasePoint) -> Result<Complex64, PhaseError> {
        if pt.dim() != self.dim {
            return Err(PhaseError::DimensionMismatch {
                name: self.name.clone(),
                expected: self.dim,
                got: pt.dim(),
            });
        }
        let mut scratch = Vec::new();
        self.arena.eval_all(pt.flat(), &mut scratch);
        let v = Complex64::new(
            scratch[self.re_root as usize],
            scratch[self.im_root as usize],
        );
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(PhaseError::SingularEvaluation {
                observable: self.name.clone(),
            });
        }
        Ok(v)
    }

    /// The real part as a standalone observable.
    pub fn re_part(&self, name: impl Into<String>) -> Observable {
        Observable::from_arena(name, self.dim, self.arena.clone(), self.re_root)
    }

    /// The imaginary part as a standalone observable.
    pub fn im_part(&self, name: impl Into<String>) -> Observable {
        Observable::from_arena(name, self.dim, self.arena.clone(), self.im_root)
    }

    /// Hot-loop evaluation of both parts without allocation or checks.
    pub fn eval_flat_raw(&self, flat: &[f64], scratch: &mut Vec<f64>) -> Complex64 {
        self.arena.eval_all(flat, scratch);
        Complex64::new(
            scratch[self.re_root as usize],
            scratch[self.im_root as usize],
        )
    }
}

/// Poisson bracket {f, g} evaluated at a point from exact gradients.
pub fn poisson_bracket(
    f: &Observable,
    g: &Observable,
    pt: &PhasePoint,
) -> Result<f64, PhaseError> {
    if f.dim() != g.dim() {
        return Err(PhaseError::DimensionMismatch {
            name: format!("{{{}, {}}}", f.name(), g.name()),
            expected: f.dim(),
            got: g.dim(),
        });
    }
    let fg = f.eval_gradient(pt)?;
    let gg = g.eval_gradient(pt)?;
    let mut acc = 0.0;
    for i in 0..f.dim() {
        acc += fg.dx[i] * gg.dp[i] - fg.dp[i] * gg.dx[i];
    }
    Ok(acc)
}

/// The bracket {f, g} as a new observable with its own exact gradient.
/// Needed for nested brackets (Jacobi identity, invariants generated by
/// bracketing with angular momenta).
pub fn bracket_observable(f: &Observable, g: &Observable) -> Observable {
    assert_eq!(
        f.dim(),
        g.dim(),
        "bracket of `{}` and `{}` needs equal dimensions",
        f.name(),
        g.name()
    );
    let dim = f.dim();
    let mut arena = ExprArena::new(2 * dim);
    let mut f_roots = vec![f.root];
    f_roots.extend_from_slice(&f.grad);
    let mut g_roots = vec![g.root];
    g_roots.extend_from_slice(&g.grad);
    let fi = arena.import(&f.arena, &f_roots);
    let gi = arena.import(&g.arena, &g_roots);
    let mut acc = arena.konst(0.0);
    for i in 0..dim {
        let fx = fi[1 + i];
        let fp = fi[1 + dim + i];
        let gx = gi[1 + i];
        let gp = gi[1 + dim + i];
        let t1 = arena.mul(fx, gp);
        let t2 = arena.mul(fp, gx);
        let d = arena.sub(t1, t2);
        acc = arena.add(acc, d);
    }
    let name = format!("{{{}, {}}}", f.name(), g.name());
    Observable::from_arena(name, dim, arena, acc)
}

/// Region for random phase-space sampling.
#[derive(Clone, Copy, Debug)]
pub struct SampleRegion {
    /// Positions are drawn with |x_i| in this range, random sign.
    pub coord_abs: (f64, f64),
    /// Momenta are drawn uniformly from this range.
    pub momentum: (f64, f64),
}

impl Default for SampleRegion {
    fn default() -> Self {
        // Keeps points away from coordinate planes and the origin, where
        // the singular families are undefined, while exercising both signs.
        SampleRegion {
            coord_abs: (0.25, 1.6),
            momentum: (-1.5, 1.5),
        }
    }
}

/// Deterministic sample of phase points from a seeded generator.
pub fn sample_points(dim: usize, count: usize, seed: u64, region: SampleRegion) -> Vec<PhasePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::with_capacity(count);
    for _ in 0..count {
        let mut x = Vec::with_capacity(dim);
        let mut p = Vec::with_capacity(dim);
        for _ in 0..dim {
            let mag = rng.gen_range(region.coord_abs.0..region.coord_abs.1);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            x.push(sign * mag);
        }
        for _ in 0..dim {
            p.push(rng.gen_range(region.momentum.0..region.momentum.1));
        }
        pts.push(PhasePoint::new(&x, &p).expect("sampled coordinates are finite"));
    }
    pts
}

/// Relative gradient error of an observable at a point: the max over
/// coordinates of |analytic - central difference| / (1 + |analytic|).
pub fn gradient_check(obs: &Observable, pt: &PhasePoint, h: f64) -> Result<f64, PhaseError> {
    let g = obs.eval_gradient(pt)?;
    let mut worst = 0.0f64;
    let flat = pt.flat();
    let mut scratch = Vec::new();
    let mut hi = flat.to_vec();
    let mut lo = flat.to_vec();
    for i in 0..flat.len() {
        hi[i] = flat[i] + h;
        lo[i] = flat[i] - h;
        let fhi = obs.eval_flat_raw(&hi, &mut scratch);
        let flo = obs.eval_flat_raw(&lo, &mut scratch);
        hi[i] = flat[i];
        lo[i] = flat[i];
        let central = (fhi - flo) / (2.0 * h);
        let analytic = if i < obs.dim() { g.dx[i] } else { g.dp[i - obs.dim()] };
        let err = (analytic - central).abs() / (1.0 + analytic.abs());
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Worst gradient-check error over a set of points.
pub fn gradient_check_max(
    obs: &Observable,
    pts: &[PhasePoint],
    h: f64,
) -> Result<f64, PhaseError> {
    let mut worst = 0.0f64;
    for pt in pts {
        worst = worst.max(gradient_check(obs, pt, h)?);
    }
    Ok(worst)
}

//! Expression graphs with exact symbolic gradients.
//!
//! Every observable in this crate is a directed acyclic graph of arithmetic
//! nodes stored in an arena. The arena hash-conses on construction, so
//! repeated subexpressions (a radius, a Casimir, a conformal factor) are
//! stored once and evaluated once. Derivatives are built symbolically into
//! the same arena, which keeps gradient evaluation exact to roundoff and
//! lets a single linear pass over the node list produce a value together
//! with all of its partial derivatives.
//!
//! ## Conventions
//!
//! - Node ids are dense indices into the arena; children always precede
//!   parents, so evaluation is a single forward sweep.
//! - Variables are indexed slots. Phase-space users put positions first and
//!   momenta second, but the arena itself is agnostic.
//! - Constructors fold constants and drop exact-zero terms. Folding happens
//!   only when a coefficient is exactly zero or one, so degenerate parameter
//!   choices (a vanishing curvature, a unit exponent) reduce to the same
//!   graph the undeformed construction would build.

use std::collections::HashMap;

/// Index of a node inside an [`ExprArena`].
pub type NodeId = u32;

/// A single arithmetic node. Binary nodes hold child ids, `Powi`/`Powf`
/// hold their exponent inline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Node {
    /// Literal constant.
    Const(f64),
    /// Variable slot.
    Var(u32),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Neg(NodeId),
    /// Integer power, evaluated with `f64::powi`.
    Powi(NodeId, i32),
    /// Real power, evaluated with `f64::powf`. The base must be positive
    /// at evaluation time for a finite result.
    Powf(NodeId, f64),
    Sqrt(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Sin(NodeId),
    Cos(NodeId),
    Atan(NodeId),
}

/// Hashable mirror of [`Node`] with float payloads as bit patterns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Key {
    Const(u64),
    Var(u32),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Neg(NodeId),
    Powi(NodeId, i32),
    Powf(NodeId, u64),
    Sqrt(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Sin(NodeId),
    Cos(NodeId),
    Atan(NodeId),
}

fn key_of(node: &Node) -> Key {
    match *node {
        Node::Const(c) => Key::Const(c.to_bits()),
        Node::Var(i) => Key::Var(i),
        Node::Add(a, b) => Key::Add(a, b),
        Node::Sub(a, b) => Key::Sub(a, b),
        Node::Mul(a, b) => Key::Mul(a, b),
        Node::Div(a, b) => Key::Div(a, b),
        Node::Neg(a) => Key::Neg(a),
        Node::Powi(a, k) => Key::Powi(a, k),
        Node::Powf(a, e) => Key::Powf(a, e.to_bits()),
        Node::Sqrt(a) => Key::Sqrt(a),
        Node::Exp(a) => Key::Exp(a),
        Node::Ln(a) => Key::Ln(a),
        Node::Sin(a) => Key::Sin(a),
        Node::Cos(a) => Key::Cos(a),
        Node::Atan(a) => Key::Atan(a),
    }
}

/// A complex-valued expression as a pair of real node ids.
#[derive(Clone, Copy, Debug)]
pub struct CNode {
    pub re: NodeId,
    pub im: NodeId,
}

/// Arena of hash-consed expression nodes with a derivative cache.
#[derive(Clone, Debug, Default)]
pub struct ExprArena {
    nodes: Vec<Node>,
    memo: HashMap<Key, NodeId>,
    deriv_memo: HashMap<(NodeId, u32), NodeId>,
    nvars: usize,
}

impl ExprArena {
    /// New arena over `nvars` variable slots.
    pub fn new(nvars: usize) -> Self {
        ExprArena {
            nodes: Vec::new(),
            memo: HashMap::new(),
            deriv_memo: HashMap::new(),
            nvars,
        }
    }

    /// Number of variable slots.
    #[inline]
    pub fn nvars(&self) -> usize {
        self.nvars
    }

    /// Number of stored nodes.
    #[inline]
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// True when the arena holds no nodes.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// The node behind an id.
    #[inline]
    pub fn node(&self, id: NodeId) -> Node {
        self.nodes[id as usize]
    }

    fn intern(&mut self, node: Node) -> NodeId {
        let key = key_of(&node);
        if let Some(&id) = self.memo.get(&key) {
            return id;
        }
        let id = self.nodes.len() as NodeId;
        self.nodes.push(node);
        self.memo.insert(key, id);
        id
    }

    #[inline]
    fn const_value(&self, id: NodeId) -> Option<f64> {
        match self.nodes[id as usize] {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    /// Literal constant node.
    pub fn konst(&mut self, c: f64) -> NodeId {
        self.intern(Node::Const(c))
    }

    /// Variable node for slot `i`.
    pub fn var(&mut self, i: usize) -> NodeId {
        assert!(i < self.nvars, "variable slot {} out of range {}", i, self.nvars);
        self.intern(Node::Var(i as u32))
    }

    /// `a + b`, with constant folding and `x + 0 -> x`. Operands are
    /// ordered canonically so both construction orders share one node.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        match (self.const_value(a), self.const_value(b)) {
            (Some(x), Some(y)) => return self.konst(x + y),
            (Some(x), None) if x == 0.0 => return b,
            (None, Some(y)) if y == 0.0 => return a,
            _ => {}
        }
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        self.intern(Node::Add(lo, hi))
    }

    /// `a - b`, with folding, `a - 0 -> a`, `0 - b -> -b`, `a - a -> 0`.
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        if a == b {
            return self.konst(0.0);
        }
        match (self.const_value(a), self.const_value(b)) {
            (Some(x), Some(y)) => return self.konst(x - y),
            (None, Some(y)) if y == 0.0 => return a,
            (Some(x), None) if x == 0.0 => return self.neg(b),
            _ => {}
        }
        self.intern(Node::Sub(a, b))
    }

    /// `a * b`, with folding, unit elimination, and exact-zero absorption.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        match (self.const_value(a), self.const_value(b)) {
            (Some(x), Some(y)) => return self.konst(x * y),
            (Some(x), None) => {
                if x == 0.0 {
                    return self.konst(0.0);
                }
                if x == 1.0 {
                    return b;
                }
                if x == -1.0 {
                    return self.neg(b);
                }
            }
            (None, Some(y)) => {
                if y == 0.0 {
                    return self.konst(0.0);
                }
                if y == 1.0 {
                    return a;
                }
                if y == -1.0 {
                    return self.neg(a);
                }
            }
            _ => {}
        }
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        self.intern(Node::Mul(lo, hi))
    }

    /// `a / b`, with folding, `a / 1 -> a`, `0 / b -> 0`.
    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        match (self.const_value(a), self.const_value(b)) {
            (Some(x), Some(y)) => return self.konst(x / y),
            (Some(x), None) if x == 0.0 => return self.konst(0.0),
            (None, Some(y)) if y == 1.0 => return a,
            _ => {}
        }
        self.intern(Node::Div(a, b))
    }

    /// `-a`, folding constants and collapsing double negation.
    pub fn neg(&mut self, a: NodeId) -> NodeId {
        if let Some(x) = self.const_value(a) {
            return self.konst(-x);
        }
        if let Node::Neg(inner) = self.nodes[a as usize] {
            return inner;
        }
        self.intern(Node::Neg(a))
    }

    /// `a^k` for integer `k`; `a^0 -> 1`, `a^1 -> a`.
    pub fn powi(&mut self, a: NodeId, k: i32) -> NodeId {
        if k == 0 {
            return self.konst(1.0);
        }
        if k == 1 {
            return a;
        }
        if let Some(x) = self.const_value(a) {
            return self.konst(x.powi(k));
        }
        self.intern(Node::Powi(a, k))
    }

    /// `a^e` for real `e`. Half-integer and integer exponents are lowered
    /// to `Sqrt` and `Powi` forms so exact parameter choices degenerate to
    /// the exact graphs.
    pub fn powf(&mut self, a: NodeId, e: f64) -> NodeId {
        if e == 0.0 {
            return self.konst(1.0);
        }
        if e == 1.0 {
            return a;
        }
        if let Some(x) = self.const_value(a) {
            return self.konst(x.powf(e));
        }
        if e == 0.5 {
            return self.sqrt(a);
        }
        if e == -0.5 {
            let s = self.sqrt(a);
            let one = self.konst(1.0);
            return self.div(one, s);
        }
        if e.fract() == 0.0 && e.abs() <= 64.0 {
            return self.powi(a, e as i32);
        }
        self.intern(Node::Powf(a, e))
    }

    /// Square root.
    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        if let Some(x) = self.const_value(a) {
            return self.konst(x.sqrt());
        }
        self.intern(Node::Sqrt(a))
    }

    /// Exponential.
    pub fn exp(&mut self, a: NodeId) -> NodeId {
        if let Some(x) = self.const_value(a) {
            return self.konst(x.exp());
        }
        self.intern(Node::Exp(a))
    }

    /// Natural logarithm.
    pub fn ln(&mut self, a: NodeId) -> NodeId {
        if let Some(x) = self.const_value(a) {
            return self.konst(x.ln());
        }
        self.intern(Node::Ln(a))
    }

    /// Sine.
    pub fn sin(&mut self, a: NodeId) -> NodeId {
        if let Some(x) = self.const_value(a) {
            return self.konst(x.sin());
        }
        self.intern(Node::Sin(a))
    }

    /// Cosine.
    pub fn cos(&mut self, a: NodeId) -> NodeId {
        if let Some(x) = self.const_value(a) {
            return self.konst(x.cos());
        }
        self.intern(Node::Cos(a))
    }

    /// Arctangent.
    pub fn atan(&mut self, a: NodeId) -> NodeId {
        if let Some(x) = self.const_value(a) {
            return self.konst(x.atan());
        }
        self.intern(Node::Atan(a))
    }

    /// `a^2`.
    #[inline]
    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.powi(a, 2)
    }

    /// `c * a` for a literal coefficient.
    pub fn scale(&mut self, c: f64, a: NodeId) -> NodeId {
        let cn = self.konst(c);
        self.mul(cn, a)
    }

    /// Sum of a slice of nodes; empty sums are zero.
    pub fn add_many(&mut self, ids: &[NodeId]) -> NodeId {
        let mut acc = self.konst(0.0);
        for &id in ids {
            acc = self.add(acc, id);
        }
        acc
    }

    /// Dot product of two equal-length node slices.
    pub fn dot(&mut self, xs: &[NodeId], ys: &[NodeId]) -> NodeId {
        assert_eq!(xs.len(), ys.len(), "dot product needs equal lengths");
        let mut acc = self.konst(0.0);
        for (&x, &y) in xs.iter().zip(ys) {
            let term = self.mul(x, y);
            acc = self.add(acc, term);
        }
        acc
    }

    /// Sum of squares of a node slice.
    pub fn sum_of_squares(&mut self, xs: &[NodeId]) -> NodeId {
        let mut acc = self.konst(0.0);
        for &x in xs {
            let sq = self.square(x);
            acc = self.add(acc, sq);
        }
        acc
    }

    // === Complex helpers: a complex expression is a (re, im) pair ===

    /// Complex node from a real part, zero imaginary part.
    pub fn c_from_re(&mut self, re: NodeId) -> CNode {
        CNode { re, im: self.konst(0.0) }
    }

    /// Complex addition.
    pub fn cadd(&mut self, a: CNode, b: CNode) -> CNode {
        CNode { re: self.add(a.re, b.re), im: self.add(a.im, b.im) }
    }

    /// Complex subtraction.
    pub fn csub(&mut self, a: CNode, b: CNode) -> CNode {
        CNode { re: self.sub(a.re, b.re), im: self.sub(a.im, b.im) }
    }

    /// Complex multiplication.
    pub fn cmul(&mut self, a: CNode, b: CNode) -> CNode {
        let rr = self.mul(a.re, b.re);
        let ii = self.mul(a.im, b.im);
        let ri = self.mul(a.re, b.im);
        let ir = self.mul(a.im, b.re);
        CNode { re: self.sub(rr, ii), im: self.add(ri, ir) }
    }

    /// Complex division.
    pub fn cdiv(&mut self, a: CNode, b: CNode) -> CNode {
        let br2 = self.square(b.re);
        let bi2 = self.square(b.im);
        let d = self.add(br2, bi2);
        let rr = self.mul(a.re, b.re);
        let ii = self.mul(a.im, b.im);
        let num_re = self.add(rr, ii);
        let ir = self.mul(a.im, b.re);
        let ri = self.mul(a.re, b.im);
        let num_im = self.sub(ir, ri);
        CNode { re: self.div(num_re, d), im: self.div(num_im, d) }
    }

    /// Scale a complex node by a real node.
    pub fn cscale(&mut self, s: NodeId, a: CNode) -> CNode {
        CNode { re: self.mul(s, a.re), im: self.mul(s, a.im) }
    }

    /// Integer complex power by repeated multiplication.
    pub fn cpowu(&mut self, a: CNode, n: u32) -> CNode {
        let one = self.konst(1.0);
        let mut acc = self.c_from_re(one);
        for _ in 0..n {
            acc = self.cmul(acc, a);
        }
        acc
    }

    // === Evaluation ===

    /// Evaluate every node at `point`, filling `out` with one value per
    /// node. A single forward sweep; `out` is reused storage.
    pub fn eval_all(&self, point: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(point.len(), self.nvars, "point length must match variable count");
        out.clear();
        out.reserve(self.nodes.len());
        for node in &self.nodes {
            let v = match *node {
                Node::Const(c) => c,
                Node::Var(i) => point[i as usize],
                Node::Add(a, b) => out[a as usize] + out[b as usize],
                Node::Sub(a, b) => out[a as usize] - out[b as usize],
                Node::Mul(a, b) => out[a as usize] * out[b as usize],
                Node::Div(a, b) => out[a as usize] / out[b as usize],
                Node::Neg(a) => -out[a as usize],
                Node::Powi(a, k) => out[a as usize].powi(k),
                Node::Powf(a, e) => out[a as usize].powf(e),
                Node::Sqrt(a) => out[a as usize].sqrt(),
                Node::Exp(a) => out[a as usize].exp(),
                Node::Ln(a) => out[a as usize].ln(),
                Node::Sin(a) => out[a as usize].sin(),
                Node::Cos(a) => out[a as usize].cos(),
                Node::Atan(a) => out[a as usize].atan(),
            };
            out.push(v);
        }
    }

    /// Evaluate a single root. Convenience wrapper over [`eval_all`]
    /// with caller-provided scratch.
    ///
    /// [`eval_all`]: ExprArena::eval_all
    pub fn eval_root(&self, root: NodeId, point: &[f64], scratch: &mut Vec<f64>) -> f64 {
        self.eval_all(point, scratch);
        scratch[root as usize]
    }

    // === Symbolic differentiation ===

    /// Derivative of `root` with respect to variable slot `var`, built
    /// into this arena. Results are cached, so repeated calls are cheap
    /// and shared subderivatives are stored once.
    pub fn diff(&mut self, root: NodeId, var: u32) -> NodeId {
        if let Some(&d) = self.deriv_memo.get(&(root, var)) {
            return d;
        }
        let node = self.nodes[root as usize];
        let d = match node {
            Node::Const(_) => self.konst(0.0),
            Node::Var(i) => self.konst(if i == var { 1.0 } else { 0.0 }),
            Node::Add(a, b) => {
                let da = self.diff(a, var);
                let db = self.diff(b, var);
                self.add(da, db)
            }
            Node::Sub(a, b) => {
                let da = self.diff(a, var);
                let db = self.diff(b, var);
                self.sub(da, db)
            }
            Node::Mul(a, b) => {
                let da = self.diff(a, var);
                let db = self.diff(b, var);
                let t1 = self.mul(da, b);
                let t2 = self.mul(a, db);
                self.add(t1, t2)
            }
            Node::Div(a, b) => {
                // d(a/b) = (da - (a/b) db) / b, reusing the quotient node.
                let da = self.diff(a, var);
                let db = self.diff(b, var);
                let qdb = self.mul(root, db);
                let num = self.sub(da, qdb);
                self.div(num, b)
            }
            Node::Neg(a) => {
                let da = self.diff(a, var);
                self.neg(da)
            }
            Node::Powi(a, k) => {
                let da = self.diff(a, var);
                let pk = self.powi(a, k - 1);
                let c = self.konst(f64::from(k));
                let t = self.mul(c, pk);
                self.mul(t, da)
            }
            Node::Powf(a, e) => {
                let da = self.diff(a, var);
                let pe = self.powf(a, e - 1.0);
                let c = self.konst(e);
                let t = self.mul(c, pe);
                self.mul(t, da)
            }
            Node::Sqrt(a) => {
                // d sqrt(a) = da / (2 sqrt(a)), reusing the root node.
                let da = self.diff(a, var);
                let two = self.konst(2.0);
                let denom = self.mul(two, root);
                self.div(da, denom)
            }
            Node::Exp(a) => {
                let da = self.diff(a, var);
                self.mul(root, da)
            }
            Node::Ln(a) => {
                let da = self.diff(a, var);
                self.div(da, a)
            }
            Node::Sin(a) => {
                let da = self.diff(a, var);
                let c = self.cos(a);
                self.mul(c, da)
            }
            Node::Cos(a) => {
                let da = self.diff(a, var);
                let s = self.sin(a);
                let t = self.mul(s, da);
                self.neg(t)
            }
            Node::Atan(a) => {
                let da = self.diff(a, var);
                let one = self.konst(1.0);
                let a2 = self.square(a);
                let denom = self.add(one, a2);
                self.div(da, denom)
            }
        };
        self.deriv_memo.insert((root, var), d);
        d
    }

    /// Gradient of `root` over all variable slots.
    pub fn gradient(&mut self, root: NodeId) -> Vec<NodeId> {
        (0..self.nvars as u32).map(|v| self.diff(root, v)).collect()
    }

    // === Graph import ===

    /// Copy the graphs under `roots` from another arena into this one,
    /// mapping `Var(i)` there to `Var(i)` here. Returns the translated
    /// roots. Shared nodes dedupe through the usual consing.
    pub fn import(&mut self, other: &ExprArena, roots: &[NodeId]) -> Vec<NodeId> {
        assert!(other.nvars <= self.nvars, "importing from a wider arena");
        let vars: Vec<NodeId> = (0..other.nvars).map(|i| self.var(i)).collect();
        self.import_subst(other, roots, &vars)
    }

    /// Copy graphs from another arena, replacing `Var(i)` there with the
    /// node `var_map[i]` here. This is function composition at the graph
    /// level: the imported expression is evaluated on top of whatever the
    /// mapped nodes compute.
    pub fn import_subst(
        &mut self,
        other: &ExprArena,
        roots: &[NodeId],
        var_map: &[NodeId],
    ) -> Vec<NodeId> {
        assert!(var_map.len() >= other.nvars, "substitution map too short");
        let mut map: Vec<NodeId> = Vec::with_capacity(other.nodes.len());
        for node in &other.nodes {
            let id = match *node {
                Node::Const(c) => self.konst(c),
                Node::Var(i) => var_map[i as usize],
                Node::Add(a, b) => self.add(map[a as usize], map[b as usize]),
                Node::Sub(a, b) => self.sub(map[a as usize], map[b as usize]),
                Node::Mul(a, b) => self.mul(map[a as usize], map[b as usize]),
                Node::Div(a, b) => self.div(map[a as usize], map[b as usize]),
                Node::Neg(a) => self.neg(map[a as usize]),
                Node::Powi(a, k) => self.powi(map[a as usize], k),
                Node::Powf(a, e) => self.powf(map[a as usize], e),
                Node::Sqrt(a) => self.sqrt(map[a as usize]),
                Node::Exp(a) => self.exp(map[a as usize]),
                Node::Ln(a) => self.ln(map[a as usize]),
                Node::Sin(a) => self.sin(map[a as usize]),
                Node::Cos(a) => self.cos(map[a as usize]),
                Node::Atan(a) => self.atan(map[a as usize]),
            };
            map.push(id);
        }
        roots.iter().map(|&r| map[r as usize]).collect()
    }

    /// Copy only the graphs reachable from `roots` into a fresh arena,
    /// dropping every unreachable node. Returns the new arena and the
    /// translated roots in order. Construction and differentiation leave
    /// dead intermediates behind; extraction keeps evaluation sweeps
    /// proportional to the live graph.
    pub fn extract(&self, roots: &[NodeId]) -> (ExprArena, Vec<NodeId>) {
        let n = self.nodes.len();
        let mut live = vec![false; n];
        for &r in roots {
            live[r as usize] = true;
        }
        for i in (0..n).rev() {
            if !live[i] {
                continue;
            }
            match self.nodes[i] {
                Node::Const(_) | Node::Var(_) => {}
                Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                    live[a as usize] = true;
                    live[b as usize] = true;
                }
                Node::Neg(a)
                | Node::Powi(a, _)
                | Node::Powf(a, _)
                | Node::Sqrt(a)
                | Node::Exp(a)
                | Node::Ln(a)
                | Node::Sin(a)
                | Node::Cos(a)
                | Node::Atan(a) => {
                    live[a as usize] = true;
                }
            }
        }
        let mut out = ExprArena::new(self.nvars);
        let mut map: Vec<NodeId> = vec![0; n];
        for i in 0..n {
            if !live[i] {
                continue;
            }
            map[i] = match self.nodes[i] {
                Node::Const(c) => out.konst(c),
                Node::Var(v) => out.var(v as usize),
                Node::Add(a, b) => {
                    let (a, b) = (map[a as usize], map[b as usize]);
                    out.add(a, b)
                }
                Node::Sub(a, b) => {
                    let (a, b) = (map[a as usize], map[b as usize]);
                    out.sub(a, b)
                }
                Node::Mul(a, b) => {
                    let (a, b) = (map[a as usize], map[b as usize]);
                    out.mul(a, b)
                }
                Node::Div(a, b) => {
                    let (a, b) = (map[a as usize], map[b as usize]);
                    out.div(a, b)
                }
                Node::Neg(a) => {
                    let a = map[a as usize];
                    out.neg(a)
                }
                Node::Powi(a, k) => {
                    let a = map[a as usize];
                    out.powi(a, k)
                }
                Node::Powf(a, e) => {
                    let a = map[a as usize];
                    out.powf(a, e)
                }
                Node::Sqrt(a) => {
                    let a = map[a as usize];
                    out.sqrt(a)
                }
                Node::Exp(a) => {
                    let a = map[a as usize];
                    out.exp(a)
                }
                Node::Ln(a) => {
                    let a = map[a as usize];
                    out.ln(a)
                }
                Node::Sin(a) => {
                    let a = map[a as usize];
                    out.sin(a)
                }
                Node::Cos(a) => {
                    let a = map[a as usize];
                    out.cos(a)
                }
                Node::Atan(a) => {
                    let a = map[a as usize];
                    out.atan(a)
                }
            };
        }
        let mapped = roots.iter().map(|&r| map[r as usize]).collect();
        (out, mapped)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Vec<[f64; 2]> {
        vec![[0.7, -1.3], [1.9, 0.4], [-0.6, 2.2], [3.1, -0.2]]
    }

    #[test]
    fn consing_dedupes_commutative_and_repeated_nodes() {
        let mut a = ExprArena::new(2);
        let x = a.var(0);
        let y = a.var(1);
        let s1 = a.add(x, y);
        let s2 = a.add(y, x);
        assert_eq!(s1, s2, "addition should be order-insensitive in the arena");
        let m1 = a.mul(x, y);
        let m2 = a.mul(y, x);
        assert_eq!(m1, m2, "multiplication should be order-insensitive in the arena");
        let before = a.len();
        let _again = a.add(x, y);
        assert_eq!(a.len(), before, "re-adding an existing node must not grow the arena");
    }

    #[test]
    fn constant_folding_and_unit_elimination() {
        let mut a = ExprArena::new(1);
        let x = a.var(0);
        let two = a.konst(2.0);
        let three = a.konst(3.0);
        let five = a.add(two, three);
        assert_eq!(a.node(five), Node::Const(5.0));
        let zero = a.konst(0.0);
        assert_eq!(a.add(x, zero), x);
        let one = a.konst(1.0);
        assert_eq!(a.mul(x, one), x);
        assert_eq!(a.mul(x, zero), zero);
        assert_eq!(a.powi(x, 1), x);
        let p0 = a.powi(x, 0);
        assert_eq!(a.node(p0), Node::Const(1.0));
        assert_eq!(a.sub(x, x), zero);
        let nn = a.neg(x);
        assert_eq!(a.neg(nn), x);
    }

    #[test]
    fn powf_lowers_to_sqrt_and_powi() {
        let mut a = ExprArena::new(1);
        let x = a.var(0);
        let h = a.powf(x, 0.5);
        assert!(matches!(a.node(h), Node::Sqrt(_)), "exponent 1/2 should become a square root");
        let p3 = a.powf(x, 3.0);
        assert!(matches!(a.node(p3), Node::Powi(_, 3)), "integer exponent should become powi");
        let pf = a.powf(x, 0.75);
        assert!(matches!(a.node(pf), Node::Powf(_, _)));
    }

    #[test]
    fn evaluation_matches_direct_computation() {
        let mut a = ExprArena::new(2);
        let x = a.var(0);
        let y = a.var(1);
        // f = (x^2 + y^2) * sin(x y) + exp(-y) / (1 + x^2) + atan(x) - ln(x^2 + 1)
        let x2 = a.square(x);
        let y2 = a.square(y);
        let r2 = a.add(x2, y2);
        let xy = a.mul(x, y);
        let s = a.sin(xy);
        let t1 = a.mul(r2, s);
        let ny = a.neg(y);
        let ey = a.exp(ny);
        let one = a.konst(1.0);
        let d = a.add(one, x2);
        let t2 = a.div(ey, d);
        let t3 = a.atan(x);
        let lnd = a.ln(d);
        let s12 = a.add(t1, t2);
        let s123 = a.add(s12, t3);
        let f = a.sub(s123, lnd);

        let mut scratch = Vec::new();
        for pt in grid() {
            let [x, y] = pt;
            let want = (x * x + y * y) * (x * y).sin() + (-y).exp() / (1.0 + x * x)
                + x.atan()
                - (x * x + 1.0).ln();
            let got = a.eval_root(f, &pt, &mut scratch);
            assert!(
                (got - want).abs() <= 1e-14 * (1.0 + want.abs()),
                "eval mismatch at {:?}: got {}, want {}",
                pt,
                got,
                want
            );
        }
    }

    #[test]
    fn derivatives_match_central_differences() {
        let mut a = ExprArena::new(2);
        let x = a.var(0);
        let y = a.var(1);
        let x2 = a.square(x);
        let y2 = a.square(y);
        let r2 = a.add(x2, y2);
        let sq = a.sqrt(r2);
        let xy = a.mul(x, y);
        let s = a.sin(xy);
        let c = a.cos(y);
        let num = a.add(sq, s);
        let e = a.exp(x);
        let den = a.add(e, c);
        let q = a.div(num, den);
        let pw = a.powf(r2, 0.75);
        let at = a.atan(xy);
        let part = a.add(q, pw);
        let f = a.add(part, at);

        let dual: Vec<NodeId> = a.gradient(f);
        let mut scratch = Vec::new();
        let h = 1e-5;
        for pt in grid() {
            for v in 0..2 {
                let mut hi = pt;
                let mut lo = pt;
                hi[v] += h;
                lo[v] -= h;
                let fd =
                    (a.eval_root(f, &hi, &mut scratch) - a.eval_root(f, &lo, &mut scratch)) / (2.0 * h);
                let exact = a.eval_root(dual[v], &pt, &mut scratch);
                assert!(
                    (fd - exact).abs() <= 1e-7 * (1.0 + exact.abs()),
                    "derivative mismatch at {:?} var {}: fd {}, exact {}",
                    pt,
                    v,
                    exact,
                    fd
                );
            }
        }
    }

    #[test]
    fn derivative_cache_is_stable() {
        let mut a = ExprArena::new(1);
        let x = a.var(0);
        let x2 = a.square(x);
        let d1 = a.diff(x2, 0);
        let len = a.len();
        let d2 = a.diff(x2, 0);
        assert_eq!(d1, d2);
        assert_eq!(a.len(), len, "cached derivative must not rebuild nodes");
        let mut scratch = Vec::new();
        assert_eq!(a.eval_root(d1, &[3.0], &mut scratch), 6.0);
    }

    #[test]
    fn import_subst_composes_functions() {
        // g(u) = u^2 + sin(u), imported with u -> x * y.
        let mut inner = ExprArena::new(1);
        let u = inner.var(0);
        let u2 = inner.square(u);
        let su = inner.sin(u);
        let g = inner.add(u2, su);

        let mut outer = ExprArena::new(2);
        let x = outer.var(0);
        let y = outer.var(1);
        let xy = outer.mul(x, y);
        let roots = outer.import_subst(&inner, &[g], &[xy]);
        let composed = roots[0];

        let mut scratch = Vec::new();
        for pt in grid() {
            let [x, y] = pt;
            let want = (x * y) * (x * y) + (x * y).sin();
            let got = outer.eval_root(composed, &pt, &mut scratch);
            assert!(
                (got - want).abs() <= 1e-14 * (1.0 + want.abs()),
                "composition mismatch at {:?}",
                pt
            );
        }
    }

    #[test]
    fn complex_power_matches_reference() {
        use num_complex::Complex64;
        let mut a = ExprArena::new(2);
        let x = a.var(0);
        let y = a.var(1);
        let z = CNode { re: x, im: y };
        let z5 = a.cpowu(z, 5);
        let mut scratch = Vec::new();
        for pt in grid() {
            let want = Complex64::new(pt[0], pt[1]).powu(5);
            a.eval_all(&pt, &mut scratch);
            let got = Complex64::new(scratch[z5.re as usize], scratch[z5.im as usize]);
            assert!(
                (got - want).norm() <= 1e-12 * (1.0 + want.norm()),
                "complex power mismatch at {:?}: got {}, want {}",
                pt,
                got,
                want
            );
        }
    }

    #[test]
    fn extraction_drops_dead_nodes_and_preserves_values() {
        let mut a = ExprArena::new(2);
        let x = a.var(0);
        let y = a.var(1);
        let keep1 = a.mul(x, y);
        let keep = a.sin(keep1);
        // Dead weight: an unrelated expensive expression.
        let e = a.exp(y);
        let _dead = a.div(e, x);
        let full = a.len();
        let (small, roots) = a.extract(&[keep]);
        assert!(small.len() < full, "extraction should drop unreachable nodes");
        let mut s1 = Vec::new();
        let mut s2 = Vec::new();
        for pt in grid() {
            let want = a.eval_root(keep, &pt, &mut s1);
            let got = small.eval_root(roots[0], &pt, &mut s2);
            assert_eq!(got.to_bits(), want.to_bits(), "extraction must not change values");
        }
    }

    #[test]
    fn division_derivative_is_finite_where_defined() {
        let mut a = ExprArena::new(1);
        let x = a.var(0);
        let one = a.konst(1.0);
        let f = a.div(one, x);
        let df = a.diff(f, 0);
        let mut scratch = Vec::new();
        let got = a.eval_root(df, &[2.0], &mut scratch);
        assert!((got - (-0.25)).abs() < 1e-15, "d(1/x)/dx at 2 should be -1/4, got {}", got);
    }
}

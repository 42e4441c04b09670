//! Logarithmic radial grids, high-order finite differences, and banded
//! symmetric linear algebra.
//!
//! Everything in this file is radially one dimensional. The coordinate is
//! t = ln r, so a uniform grid in t concentrates points near the origin
//! where centrifugal and Coulomb terms vary fastest, and derivative
//! operators pick up simple chain-rule factors:
//!
//! ```text
//! d/dr   = e^{-t} d/dt
//! d2/dr2 = e^{-2t} (d2/dt2 - d/dt)
//! ```
//!
//! ## Stencils
//!
//! Interior points use centered 8th-order stencils. The outermost four
//! points on each side use one-sided 9-tap stencils of the same order, so
//! a derivative of a smooth function is uniformly 8th-order accurate on
//! the whole grid. Stencil weights come from solving the moment
//! (Vandermonde) system for the given offsets, which is exact for
//! polynomials through degree 8.
//!
//! ## Banded symmetric matrices
//!
//! The eigensolver assembles a generalized pencil (A, B) where A is
//! symmetric banded (half-bandwidth 7 for the staggered 8th-order
//! stiffness) and B is diagonal. Storage is lower-banded: `band[d][i]`
//! holds A[i+d][i]. The LDL^T factorization below never pivots; for the
//! Sturm count that is exactly what we want (the inertia of A - s B is
//! read off the signs of D), and a vanishing pivot is nudged to a tiny
//! value, which perturbs the count by at most the multiplicity at s.

use nalgebra::{DMatrix, DVector};

/// Uniform grid in t = ln r.
#[derive(Debug, Clone)]
pub struct RadialGrid {
    /// Grid nodes in t.
    pub t: Vec<f64>,
    /// Grid nodes in r = e^t.
    pub r: Vec<f64>,
    /// Actual node spacing in t.
    pub h: f64,
    stencils: FdStencils,
}

impl RadialGrid {
    /// Builds a uniform log grid covering [t_min, t_max] with spacing as
    /// close to `h_target` as an integer node count allows.
    pub fn new(t_min: f64, t_max: f64, h_target: f64) -> Self {
        assert!(t_max > t_min, "grid must have positive extent");
        assert!(h_target > 0.0, "grid spacing must be positive");
        let n = ((t_max - t_min) / h_target).floor() as usize + 1;
        let n = n.max(32);
        let h = (t_max - t_min) / (n - 1) as f64;
        let t: Vec<f64> = (0..n).map(|i| t_min + h * i as f64).collect();
        let r: Vec<f64> = t.iter().map(|&ti| ti.exp()).collect();
        RadialGrid {
            t,
            r,
            h,
            stencils: FdStencils::new(),
        }
    }

    /// Number of nodes.
    #[inline]
    pub fn len(&self) -> usize {
        self.t.len()
    }

    /// True when the grid holds no nodes. Kept for API completeness; the
    /// constructor enforces a minimum size.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// First derivative with respect to t, 8th order everywhere.
    pub fn d_dt(&self, f: &[f64]) -> Vec<f64> {
        self.apply_stencil(f, 1)
    }

    /// Second derivative with respect to t, 8th order everywhere.
    pub fn d2_dt(&self, f: &[f64]) -> Vec<f64> {
        self.apply_stencil(f, 2)
    }

    /// First derivative with respect to r.
    pub fn d_dr(&self, f: &[f64]) -> Vec<f64> {
        let mut out = self.d_dt(f);
        for (o, &ri) in out.iter_mut().zip(self.r.iter()) {
            *o /= ri;
        }
        out
    }

    /// Second derivative with respect to r.
    pub fn d2_dr(&self, f: &[f64]) -> Vec<f64> {
        let d1 = self.d_dt(f);
        let mut out = self.d2_dt(f);
        for i in 0..out.len() {
            out[i] = (out[i] - d1[i]) / (self.r[i] * self.r[i]);
        }
        out
    }

    fn apply_stencil(&self, f: &[f64], deriv: usize) -> Vec<f64> {
        let n = f.len();
        assert_eq!(n, self.len(), "function length must match the grid");
        let s = &self.stencils;
        let (central, left, right) = match deriv {
            1 => (&s.c1, &s.left1, &s.right1),
            2 => (&s.c2, &s.left2, &s.right2),
            _ => unreachable!("only first and second derivatives are built"),
        };
        let scale = 1.0 / self.h.powi(deriv as i32);
        let mut out = vec![0.0; n];
        for i in 4..n - 4 {
            let mut acc = 0.0;
            for (j, w) in central.iter().enumerate() {
                acc += w * f[i + j - 4];
            }
            out[i] = acc * scale;
        }
        for i in 0..4 {
            let mut acc = 0.0;
            for (j, w) in left[i].iter().enumerate() {
                acc += w * f[j];
            }
            out[i] = acc * scale;
            let mut acc = 0.0;
            for (j, w) in right[i].iter().enumerate() {
                acc += w * f[n - 9 + j];
            }
            out[n - 4 + i] = acc * scale;
        }
        out
    }
}

/// Precomputed 8th-order stencil weights (unit spacing).
#[derive(Debug, Clone)]
struct FdStencils {
    c1: [f64; 9],
    c2: [f64; 9],
    /// One-sided weights for nodes 0..4, each over the first 9 nodes.
    left1: [[f64; 9]; 4],
    left2: [[f64; 9]; 4],
    /// One-sided weights for nodes n-4..n, each over the last 9 nodes.
    right1: [[f64; 9]; 4],
    right2: [[f64; 9]; 4],
}

impl FdStencils {
    fn new() -> Self {
        let centered: Vec<f64> = (-4..=4).map(|o| o as f64).collect();
        let c1v = stencil_weights(&centered, 1);
        let c2v = stencil_weights(&centered, 2);
        let mut c1 = [0.0; 9];
        let mut c2 = [0.0; 9];
        c1.copy_from_slice(&c1v);
        c2.copy_from_slice(&c2v);

        let mut left1 = [[0.0; 9]; 4];
        let mut left2 = [[0.0; 9]; 4];
        let mut right1 = [[0.0; 9]; 4];
        let mut right2 = [[0.0; 9]; 4];
        for i in 0..4 {
            // Node i sees the first nine nodes, offsets j - i.
            let offs: Vec<f64> = (0..9).map(|j| (j as isize - i as isize) as f64).collect();
            left1[i].copy_from_slice(&stencil_weights(&offs, 1));
            left2[i].copy_from_slice(&stencil_weights(&offs, 2));
            // Node n-4+i sees the last nine nodes, offsets j - 5 - i.
            let offs: Vec<f64> = (0..9)
                .map(|j| (j as isize - 5 - i as isize) as f64)
                .collect();
            right1[i].copy_from_slice(&stencil_weights(&offs, 1));
            right2[i].copy_from_slice(&stencil_weights(&offs, 2));
        }
        FdStencils {
            c1,
            c2,
            left1,
            left2,
            right1,
            right2,
        }
    }
}

/// Solves the moment system for finite-difference weights: the returned
/// weights w satisfy sum_j w_j p(offset_j) = p^(deriv)(0) for every
/// polynomial p of degree < offsets.len().
pub fn stencil_weights(offsets: &[f64], deriv: usize) -> Vec<f64> {
    let n = offsets.len();
    assert!(deriv < n, "derivative order must be below the stencil size");
    let mut vand = DMatrix::zeros(n, n);
    for (j, &o) in offsets.iter().enumerate() {
        let mut pw = 1.0;
        for i in 0..n {
            vand[(i, j)] = pw;
            pw *= o;
        }
    }
    let mut rhs = DVector::zeros(n);
    let mut fact = 1.0;
    for m in 1..=deriv {
        fact *= m as f64;
    }
    rhs[deriv] = fact;
    let sol = vand
        .lu()
        .solve(&rhs)
        .expect("moment system is nonsingular for distinct offsets");
    sol.iter().copied().collect()
}

/// Weighted inner product sum_i w_i a_i b_i.
#[inline]
pub fn weighted_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..w.len() {
        acc += w[i] * a[i] * b[i];
    }
    acc
}

/// Weighted L2 norm sqrt(sum_i w_i a_i^2).
#[inline]
pub fn weighted_norm(w: &[f64], a: &[f64]) -> f64 {
    weighted_dot(w, a, a).sqrt()
}

/// Symmetric banded matrix in lower storage: `band[d][i] = A[i+d][i]`
/// for diagonals d = 0..=bw.
#[derive(Debug, Clone)]
pub struct SymBanded {
    pub n: usize,
    pub bw: usize,
    pub band: Vec<Vec<f64>>,
}

impl SymBanded {
    /// Zero matrix of size n with half-bandwidth bw.
    pub fn zeros(n: usize, bw: usize) -> Self {
        SymBanded {
            n,
            bw,
            band: (0..=bw).map(|_| vec![0.0; n]).collect(),
        }
    }

    /// Adds v at (row, col) with row >= col, row - col <= bw.
    #[inline]
    pub fn add(&mut self, row: usize, col: usize, v: f64) {
        self.band[row - col][col] += v;
    }

    /// Matrix-vector product using the symmetric banded structure.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            y[i] += self.band[0][i] * x[i];
        }
        for d in 1..=self.bw {
            for i in 0..self.n - d {
                let v = self.band[d][i];
                y[i + d] += v * x[i];
                y[i] += v * x[i + d];
            }
        }
        y
    }

    /// Number of negative pivots in the LDL^T factorization of
    /// (self - shift * diag(bdiag)), i.e. the count of eigenvalues of the
    /// pencil below `shift`. Zero pivots are nudged to a tiny value.
    pub fn inertia_below(&self, bdiag: &[f64], shift: f64) -> usize {
        let n = self.n;
        let bw = self.bw;
        let mut w: Vec<Vec<f64>> = self.band.clone();
        for i in 0..n {
            w[0][i] -= shift * bdiag[i];
        }
        let mut neg = 0usize;
        let mut col = vec![0.0; bw];
        for j in 0..n {
            let mut d = w[0][j];
            if d == 0.0 {
                d = 1e-300;
            }
            if d < 0.0 {
                neg += 1;
            }
            let m = bw.min(n - 1 - j);
            for a in 0..m {
                col[a] = w[a + 1][j] / d;
            }
            for a in 0..m {
                let ca_d = col[a] * d;
                let target = j + 1 + a;
                for q in 0..m - a {
                    w[q][target] -= col[a + q] * ca_d;
                }
            }
        }
        neg
    }
}

/// LDL^T factorization of a symmetric banded matrix, kept for repeated
/// solves during inverse iteration. No pivoting; the shifted systems this
/// is used on are strongly diagonally dominant away from the target
/// eigenvalue, and a vanishing pivot is nudged.
#[derive(Debug, Clone)]
pub struct BandedLdlt {
    n: usize,
    bw: usize,
    /// Unit lower factor, band storage: l[d][i] = L[i+d][i] for d >= 1.
    l: Vec<Vec<f64>>,
    d: Vec<f64>,
}

impl BandedLdlt {
    /// Factors (a - shift * diag(bdiag)).
    pub fn factor(a: &SymBanded, bdiag: &[f64], shift: f64) -> Self {
        let n = a.n;
        let bw = a.bw;
        let mut w: Vec<Vec<f64>> = a.band.clone();
        for i in 0..n {
            w[0][i] -= shift * bdiag[i];
        }
        let mut d = vec![0.0; n];
        let mut col = vec![0.0; bw];
        for j in 0..n {
            let mut dj = w[0][j];
            if dj == 0.0 {
                dj = 1e-300;
            }
            d[j] = dj;
            let m = bw.min(n - 1 - j);
            for a_i in 0..m {
                col[a_i] = w[a_i + 1][j] / dj;
            }
            for a_i in 0..m {
                w[a_i + 1][j] = col[a_i];
            }
            for a_i in 0..m {
                let ca_d = col[a_i] * dj;
                let target = j + 1 + a_i;
                for q in 0..m - a_i {
                    w[q][target] -= col[a_i + q] * ca_d;
                }
            }
        }
        BandedLdlt { n, bw, l: w, d }
    }

    /// Solves (L D L^T) x = b in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        let bw = self.bw;
        for j in 0..n {
            let xj = x[j];
            let m = bw.min(n - 1 - j);
            for a in 0..m {
                x[j + 1 + a] -= self.l[a + 1][j] * xj;
            }
        }
        for j in 0..n {
            x[j] /= self.d[j];
        }
        for j in (0..n).rev() {
            let m = bw.min(n - 1 - j);
            let mut acc = x[j];
            for a in 0..m {
                acc -= self.l[a + 1][j] * x[j + 1 + a];
            }
            x[j] = acc;
        }
    }
}

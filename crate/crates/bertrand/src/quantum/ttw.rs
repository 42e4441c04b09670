//! The deformed two-dimensional operator with angular barriers.
//!
//! In polar-like variables (r, theta) the operator reads
//!
//! ```text
//! H2 = (F^2/2) (-hbar^2 d2/dr2 - hbar^2 (1/r) d/dr
//!        - hbar^2 (1/r^2) d2/dtheta2
//!        + b1 / (r^2 cos^2(theta/beta))
//!        + b2 / (r^2 sin^2(theta/beta))) - mu G
//! ```
//!
//! with F = 1 + k r^2 and G = (1 - k r^2)/r. The barrier strengths come
//! from absorbing angular quantum numbers of a higher-dimensional
//! construction, b = (1 - 4 l^2) / (4 beta^2), so a half-integer l
//! switches its barrier off entirely.
//!
//! On the log grid t = ln r the full kinetic term collapses to
//! -hbar^2 e^{-2t} (d2/dt2 + d2/dtheta2), which is what the
//! discretization uses. The angular grid is offset by half a spacing so
//! that the barrier denominators never vanish at a node; the offset also
//! keeps the periodic second-derivative stencil an exactly symmetric
//! circulant, so hermiticity failures can only come from the radial
//! direction.
//!
//! Spectrum computations for this operator are out of scope; the value
//! of the grid form is that it certifies the reduction identities: with
//! both barriers off, the angular sector cos(l theta) reproduces the
//! radial sector operator at effective coefficient l.

use super::grid::{stencil_weights, RadialGrid};
use super::ladder::hamiltonian_apply;
use super::{QuantumError, RadialProblem};
use crate::systems::Rational;

/// Angular node count of the reference grid.
const N_THETA: usize = 384;
/// Radial rows dropped from each end in the reduction residual.
const EDGE_TRIM: usize = 16;

/// Grid form of the deformed two-dimensional operator.
#[derive(Debug, Clone)]
pub struct TtwOperator {
    pub beta: Rational,
    pub k: f64,
    pub mu: f64,
    pub hbar: f64,
    pub b1: f64,
    pub b2: f64,
    grid: RadialGrid,
    theta: Vec<f64>,
    cos2: Vec<f64>,
    sin2: Vec<f64>,
    d2_theta: [f64; 9],
    h_theta: f64,
}

impl TtwOperator {
    /// Builds the operator on the reference grid (t in [-7, 10] at
    /// spacing 0.01, 384 angular nodes offset by half a spacing).
    pub fn new(
        beta: Rational,
        k: f64,
        mu: f64,
        hbar: f64,
        b1: f64,
        b2: f64,
    ) -> Result<Self, QuantumError> {
        if !k.is_finite() || k < 0.0 {
            return Err(QuantumError::NegativeCurvature { k });
        }
        if !(mu.is_finite() && mu > 0.0) {
            return Err(QuantumError::InvalidParameter {
                name: "mu",
                reason: format!("need a positive coupling, got {mu}"),
            });
        }
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(QuantumError::InvalidParameter {
                name: "hbar",
                reason: format!("need a positive constant, got {hbar}"),
            });
        }
        for (name, b) in [("b1", b1), ("b2", b2)] {
            if !(b.is_finite() && b >= 0.0) {
                return Err(QuantumError::InvalidParameter {
                    name,
                    reason: format!("need a nonnegative barrier strength, got {b}"),
                });
            }
        }
        let grid = RadialGrid::new(-7.0, 10.0, 0.01);
        let h_theta = 2.0 * std::f64::consts::PI / N_THETA as f64;
        let theta: Vec<f64> = (0..N_THETA)
            .map(|j| h_theta * (j as f64 + 0.5))
            .collect();
        let bv = beta.value();
        let cos2: Vec<f64> = theta.iter().map(|&th| (th / bv).cos().powi(2)).collect();
        let sin2: Vec<f64> = theta.iter().map(|&th| (th / bv).sin().powi(2)).collect();
        if b1 > 0.0 && cos2.iter().any(|&c| c < 1e-10) {
            return Err(QuantumError::InvalidParameter {
                name: "beta",
                reason: "an angular node falls on a cosine barrier singularity".to_string(),
            });
        }
        if b2 > 0.0 && sin2.iter().any(|&s| s < 1e-10) {
            return Err(QuantumError::InvalidParameter {
                name: "beta",
                reason: "an angular node falls on a sine barrier singularity".to_string(),
            });
        }
        let offs: Vec<f64> = (-4..=4).map(|o| o as f64).collect();
        let w2 = stencil_weights(&offs, 2);
        let mut d2_theta = [0.0; 9];
        for (d, w) in d2_theta.iter_mut().zip(w2.iter()) {
            *d = w / (h_theta * h_theta);
        }
        Ok(TtwOperator {
            beta,
            k,
            mu,
            hbar,
            b1,
            b2,
            grid,
            theta,
            cos2,
            sin2,
            d2_theta,
            h_theta,
        })
    }

    /// Radial grid of the operator.
    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    /// Angular nodes of the operator.
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Number of values in a field: radial nodes times angular nodes.
    pub fn field_len(&self) -> usize {
        self.grid.len() * N_THETA
    }

    /// Builds a separable field g(t) a(theta), row-major in r.
    pub fn separable_field(&self, radial: &[f64], angular: &[f64]) -> Vec<f64> {
        assert_eq!(radial.len(), self.grid.len());
        assert_eq!(angular.len(), N_THETA);
        let mut out = Vec::with_capacity(self.field_len());
        for &g in radial {
            for &a in angular {
                out.push(g * a);
            }
        }
        out
    }

    /// Applies the operator to a field, row-major in r.
    pub fn apply(&self, psi: &[f64]) -> Vec<f64> {
        let nr = self.grid.len();
        assert_eq!(psi.len(), nr * N_THETA, "field length must match the grid");
        let h2 = self.hbar * self.hbar;

        // Second derivative along t, column by column.
        let mut psi_tt = vec![0.0; psi.len()];
        let mut col = vec![0.0; nr];
        for j in 0..N_THETA {
            for i in 0..nr {
                col[i] = psi[i * N_THETA + j];
            }
            let d2 = self.grid.d2_dt(&col);
            for i in 0..nr {
                psi_tt[i * N_THETA + j] = d2[i];
            }
        }

        let mut out = vec![0.0; psi.len()];
        for i in 0..nr {
            let r = self.grid.r[i];
            let cap_f = 1.0 + self.k * r * r;
            let g = (1.0 - self.k * r * r) / r;
            let half_f2 = 0.5 * cap_f * cap_f;
            let row = i * N_THETA;
            for j in 0..N_THETA {
                // Periodic angular second derivative.
                let mut ptt = 0.0;
                for (o, &w) in self.d2_theta.iter().enumerate() {
                    let jj = (j + N_THETA + o - 4) % N_THETA;
                    ptt += w * psi[row + jj];
                }
                let mut kin = -h2 * (psi_tt[row + j] + ptt) / (r * r);
                if self.b1 > 0.0 {
                    kin += self.b1 / (r * r * self.cos2[j]) * psi[row + j];
                }
                if self.b2 > 0.0 {
                    kin += self.b2 / (r * r * self.sin2[j]) * psi[row + j];
                }
                out[row + j] = half_f2 * kin - self.mu * g * psi[row + j];
            }
        }
        out
    }

    /// Quadrature weights of the measure e^{2t}/F^2 dt dtheta, one per
    /// field value.
    pub fn weights(&self) -> Vec<f64> {
        let nr = self.grid.len();
        let mut out = Vec::with_capacity(nr * N_THETA);
        for &r in &self.grid.r {
            let f = 1.0 + self.k * r * r;
            let w = self.grid.h * self.h_theta * r * r / (f * f);
            for _ in 0..N_THETA {
                out.push(w);
            }
        }
        out
    }

    /// Weighted inner product of two fields.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let w = self.weights();
        let mut acc = 0.0;
        for i in 0..a.len() {
            acc += w[i] * a[i] * b[i];
        }
        acc
    }

    /// Largest hermiticity defect |<phi, H psi> - <H phi, psi>| over a
    /// set of normalized interior-supported probe pairs, relative to the
    /// matrix-element scale.
    pub fn hermiticity_asymmetry(&self) -> f64 {
        let radial: Vec<Vec<f64>> = [(-0.5, 0.6), (1.0, 0.5), (0.2, 0.8)]
            .iter()
            .map(|&(c, w)| {
                self.grid
                    .t
                    .iter()
                    .map(|&t| (-(t - c) * (t - c) / (2.0 * w * w)).exp())
                    .collect()
            })
            .collect();
        let angular: Vec<Vec<f64>> = vec![
            self.theta.iter().map(|_| 1.0).collect(),
            self.theta.iter().map(|&th| th.cos()).collect(),
            self.theta.iter().map(|&th| (2.0 * th).sin()).collect(),
            self.theta
                .iter()
                .map(|&th| (3.0 * th).cos() + 0.5 * (5.0 * th).sin())
                .collect(),
        ];
        let mut fields: Vec<Vec<f64>> = vec![
            self.separable_field(&radial[0], &angular[0]),
            self.separable_field(&radial[1], &angular[1]),
            self.separable_field(&radial[2], &angular[2]),
            self.separable_field(&radial[0], &angular[3]),
        ];
        for f in fields.iter_mut() {
            let norm = self.inner(f, f).sqrt();
            for v in f.iter_mut() {
                *v /= norm;
            }
        }
        let applied: Vec<Vec<f64>> = fields.iter().map(|f| self.apply(f)).collect();
        let mut worst: f64 = 0.0;
        for p in 0..fields.len() {
            for q in p + 1..fields.len() {
                let a = self.inner(&fields[p], &applied[q]);
                let b = self.inner(&applied[p], &fields[q]);
                worst = worst.max((a - b).abs() / 1.0_f64.max(a.abs()).max(b.abs()));
            }
        }
        worst
    }

    /// Residual of the barrier-free sector reduction: with b1 = b2 = 0,
    /// applying the operator to g(t) cos(l theta) must reproduce the
    /// radial sector operator at effective coefficient l acting on g.
    /// Returns the max-norm residual relative to the peak of the applied
    /// field, trimmed away from the radial edges.
    pub fn sector_reduction_residual(&self, l: u32) -> Result<f64, QuantumError> {
        if self.b1 != 0.0 || self.b2 != 0.0 {
            return Err(QuantumError::InvalidParameter {
                name: "b1",
                reason: "the sector reduction identity needs both barriers off".to_string(),
            });
        }
        let g: Vec<f64> = self
            .grid
            .t
            .iter()
            .map(|&t| (-(t + 0.5) * (t + 0.5) / (2.0 * 0.6 * 0.6)).exp())
            .collect();
        let ang: Vec<f64> = self.theta.iter().map(|&th| (l as f64 * th).cos()).collect();
        let psi = self.separable_field(&g, &ang);
        let applied = self.apply(&psi);

        let radial_prob = RadialProblem::new(
            2,
            l,
            Rational::new(1, 1).expect("1/1 is a valid ratio"),
            self.k,
            self.mu,
            self.hbar,
        )?;
        let hg = hamiltonian_apply(&radial_prob, &self.grid, &g);
        let reference = self.separable_field(&hg, &ang);

        let peak = applied.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
        let nr = self.grid.len();
        let mut worst: f64 = 0.0;
        for i in EDGE_TRIM..nr - EDGE_TRIM {
            for j in 0..N_THETA {
                let idx = i * N_THETA + j;
                worst = worst.max((applied[idx] - reference[idx]).abs());
            }
        }
        Ok(worst / peak)
    }
}

/// Barrier strength absorbing an angular quantum number:
/// b = (1 - 4 l^2) / (4 beta^2). A half-integer l turns the barrier off.
pub fn absorbed_barrier(l: f64, beta: Rational) -> f64 {
    let bv = beta.value();
    (1.0 - 4.0 * l * l) / (4.0 * bv * bv)
}

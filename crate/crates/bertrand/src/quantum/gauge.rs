//! Gauge equivalences between the radial operator forms.
//!
//! Two exact conjugation identities connect the forms the family is
//! written in, and both are certified here as grid-operator residuals on
//! smooth probe functions.
//!
//! ## Dimensional reduction
//!
//! The N-dimensional radial operator with integer angular momentum l,
//!
//! ```text
//! H_N = (F^2/2) (-hbar^2 d2/dr2 - hbar^2 (N-1)/r d/dr
//!        + hbar^2 c / r^2) - mu G,
//! c = l (l + N - 2) / beta^2 + (1/beta^2 - 1) (N - 2)^2 / 4,
//! ```
//!
//! is conjugate to the two-dimensional form at the effective coefficient
//! ltil = (l + (N-2)/2)/beta:
//!
//! ```text
//! r^{(N-2)/2} H_N r^{-(N-2)/2} = H_2(ltil).
//! ```
//!
//! The centrifugal coefficients agree through
//! c = ltil^2 - ((N-2)/2)^2, and the first-derivative terms shift by the
//! same conjugation, so the identity is exact; the grid residual only
//! measures discretization error.
//!
//! ## Measure ordering
//!
//! Quantizing the deformed family directly in Cartesian-like coordinates
//! gives a conformally flat Laplacian; quantizing with the
//! Laplace-Beltrami operator plus the conformal curvature correction
//!
//! ```text
//! H_LB = -(hbar^2/2) Lap_g + V + hbar^2 (N-2)/(8(N-1)) R
//! ```
//!
//! gives a different-looking operator that is conjugate to the direct
//! one by a power of the conformal factor f = 1/rho^2,
//! rho = r^{1-beta} + k r^{1+beta}:
//!
//! ```text
//! f^{(2-N)/4} H_direct f^{(N-2)/4} = H_LB.
//! ```
//!
//! R is the scalar curvature of the metric f times the flat one, and for
//! this conformal factor it has the closed form
//!
//! ```text
//! R = 2(N-1) rho rho'' - N(N-1) rho'^2 + 2(N-1)^2 rho rho' / r.
//! ```

use super::grid::RadialGrid;
use super::ladder::{hamiltonian_apply, test_bumps};
use super::{QuantumError, RadialProblem};

/// Nodes dropped from each end when the residual is measured.
const EDGE_TRIM: usize = 16;

/// Applies the N-dimensional radial operator at integer angular
/// momentum, in the r' coordinate of the exponent-beta family.
pub fn ndim_hamiltonian_apply(prob: &RadialProblem, grid: &RadialGrid, f: &[f64]) -> Vec<f64> {
    let nd = prob.dim as f64;
    let beta = prob.beta.value();
    let ll = prob.l as f64;
    let c = ll * (ll + nd - 2.0) / (beta * beta)
        + (1.0 / (beta * beta) - 1.0) * (nd - 2.0) * (nd - 2.0) / 4.0;
    let h2 = prob.hbar * prob.hbar;
    let d1 = grid.d_dt(f);
    let d2 = grid.d2_dt(f);
    let mut out = vec![0.0; f.len()];
    for i in 0..f.len() {
        let r = grid.r[i];
        let cap_f = 1.0 + prob.k * r * r;
        let fr = d1[i] / r;
        let frr = (d2[i] - d1[i]) / (r * r);
        let g = (1.0 - prob.k * r * r) / r;
        out[i] = 0.5 * cap_f * cap_f * h2 * (-frr - (nd - 1.0) * fr / r + c * f[i] / (r * r))
            - prob.mu * g * f[i];
    }
    out
}

/// Largest residual of r^{(N-2)/2} H_N r^{-(N-2)/2} = H_2(ltil) over the
/// probe functions, in max norm relative to the probe's peak.
pub fn dimensional_reduction_residual(
    prob: &RadialProblem,
    grid: &RadialGrid,
) -> Result<f64, QuantumError> {
    if prob.dim < 3 {
        return Err(QuantumError::InvalidParameter {
            name: "dim",
            reason: "dimensional reduction needs dim >= 3".to_string(),
        });
    }
    let a = (prob.dim as f64 - 2.0) / 2.0;
    let reduced = prob.reduce();
    let mut worst: f64 = 0.0;
    for psi in test_bumps(grid) {
        let scaled: Vec<f64> = psi
            .iter()
            .zip(grid.r.iter())
            .map(|(&p, &r)| p * r.powf(-a))
            .collect();
        let h_scaled = ndim_hamiltonian_apply(prob, grid, &scaled);
        let lhs: Vec<f64> = h_scaled
            .iter()
            .zip(grid.r.iter())
            .map(|(&h, &r)| h * r.powf(a))
            .collect();
        let rhs = hamiltonian_apply(&reduced, grid, &psi);
        worst = worst.max(trimmed_max_residual(&lhs, &rhs, &psi));
    }
    Ok(worst)
}

/// Scalar curvature of the conformally flat metric f = 1/rho^2 in
/// `dim` dimensions.
fn conformal_scalar_curvature(beta: f64, k: f64, dim: f64, r: f64) -> f64 {
    let rho = r.powf(1.0 - beta) + k * r.powf(1.0 + beta);
    let rho_p = (1.0 - beta) * r.powf(-beta) + k * (1.0 + beta) * r.powf(beta);
    let rho_pp = -beta * (1.0 - beta) * r.powf(-beta - 1.0)
        + k * beta * (1.0 + beta) * r.powf(beta - 1.0);
    2.0 * (dim - 1.0) * rho * rho_pp - dim * (dim - 1.0) * rho_p * rho_p
        + 2.0 * (dim - 1.0) * (dim - 1.0) * rho * rho_p / r
}

/// Largest residual of f^{(2-N)/4} H_direct f^{(N-2)/4} = H_LB over the
/// probe functions, in max norm relative to the probe's peak.
pub fn lb_conjugation_residual(
    prob: &RadialProblem,
    grid: &RadialGrid,
) -> Result<f64, QuantumError> {
    if prob.dim < 3 {
        return Err(QuantumError::InvalidParameter {
            name: "dim",
            reason: "the measure-ordering identity is trivial below dim 3".to_string(),
        });
    }
    let nd = prob.dim as f64;
    let beta = prob.beta.value();
    let k = prob.k;
    let h2 = prob.hbar * prob.hbar;
    let ll = prob.l as f64;
    let cent = ll * (ll + nd - 2.0);
    let n = grid.len();

    // Pointwise geometry: conformal factor, its log derivative, the
    // potential, and the curvature correction.
    let mut f_conf = vec![0.0; n];
    let mut dlog_f = vec![0.0; n];
    let mut v_pot = vec![0.0; n];
    let mut r_curv = vec![0.0; n];
    for i in 0..n {
        let r = grid.r[i];
        let rho = r.powf(1.0 - beta) + k * r.powf(1.0 + beta);
        let rho_p = (1.0 - beta) * r.powf(-beta) + k * (1.0 + beta) * r.powf(beta);
        f_conf[i] = 1.0 / (rho * rho);
        dlog_f[i] = -2.0 * rho_p / rho;
        v_pot[i] = -prob.mu * (r.powf(-beta) - k * r.powf(beta));
        r_curv[i] = conformal_scalar_curvature(beta, k, nd, r);
    }
    let curv_coeff = h2 * (nd - 2.0) / (8.0 * (nd - 1.0));
    let conj_pow = (nd - 2.0) / 4.0;

    let direct = |psi: &[f64]| -> Vec<f64> {
        let d1 = grid.d_dr(psi);
        let d2 = grid.d2_dr(psi);
        (0..n)
            .map(|i| {
                let r = grid.r[i];
                -0.5 * h2 / f_conf[i]
                    * (d2[i] + (nd - 1.0) * d1[i] / r - cent * psi[i] / (r * r))
                    + v_pot[i] * psi[i]
            })
            .collect()
    };
    let lb = |psi: &[f64]| -> Vec<f64> {
        let d1 = grid.d_dr(psi);
        let d2 = grid.d2_dr(psi);
        (0..n)
            .map(|i| {
                let r = grid.r[i];
                let drag = (nd - 1.0) / r + 0.5 * (nd - 2.0) * dlog_f[i];
                -0.5 * h2 / f_conf[i] * (d2[i] + drag * d1[i] - cent * psi[i] / (r * r))
                    + v_pot[i] * psi[i]
                    + curv_coeff * r_curv[i] * psi[i]
            })
            .collect()
    };

    let mut worst: f64 = 0.0;
    for psi in test_bumps(grid) {
        let dressed: Vec<f64> = psi
            .iter()
            .zip(f_conf.iter())
            .map(|(&p, &fc)| p * fc.powf(conj_pow))
            .collect();
        let h_dressed = direct(&dressed);
        let lhs: Vec<f64> = h_dressed
            .iter()
            .zip(f_conf.iter())
            .map(|(&h, &fc)| h * fc.powf(-conj_pow))
            .collect();
        let rhs = lb(&psi);
        worst = worst.max(trimmed_max_residual(&lhs, &rhs, &psi));
    }
    Ok(worst)
}

fn trimmed_max_residual(lhs: &[f64], rhs: &[f64], psi: &[f64]) -> f64 {
    let n = lhs.len();
    assert!(n > 2 * EDGE_TRIM, "grid too small for a trimmed residual");
    let peak = psi.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
    let mut worst: f64 = 0.0;
    for i in EDGE_TRIM..n - EDGE_TRIM {
        worst = worst.max((lhs[i] - rhs[i]).abs());
    }
    worst / peak
}

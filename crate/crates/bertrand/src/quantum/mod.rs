//! Quantum counterpart of the curved Kepler family: radial spectra,
//! factorization ladders, gauge equivalences, and the deformed
//! two-dimensional operator.
//!
//! The classical systems built in `systems` quantize to radial
//! Schroedinger operators of one universal shape. With F = 1 + k r^2 and
//! G = (1 - k r^2)/r, the sector with effective angular coefficient
//! `ltil` is governed by
//!
//! ```text
//! H = (F^2 / 2) (-hbar^2 d2/dr2 - hbar^2 (1/r) d/dr
//!                + hbar^2 ltil^2 / r^2) - mu G
//! ```
//!
//! and everything in this module is parametrized by (ltil, k, mu, hbar):
//!
//!  * the closed-form energies E_n = -mu^2/(2 hbar^2 nu^2)
//!    + 2 k hbar^2 nu^2 - k hbar^2 / 2 with nu = n + ltil + 1/2,
//!  * the ladder operators that shift ltil by one and realize the
//!    factorization H - E_0 = B A (see `ladder`),
//!  * the banded-pencil eigensolver that confirms the formula on a grid
//!    (see `eigen`),
//!  * the conjugations that map the N-dimensional and
//!    Laplace-Beltrami-ordered forms onto this one (see `gauge`),
//!  * the two-dimensional operator with angular barrier terms whose
//!    barrier-free sectors reduce back to H (see `ttw`).
//!
//! ## Effective angular coefficient
//!
//! An N-dimensional problem in the exponent-beta family with integer
//! angular momentum l carries ltil = (l + (N - 2)/2) / beta. The
//! deformation enters the radial problem only through this one number,
//! which is why a single solver covers the whole family. `reduce` maps a
//! higher-dimensional problem to its two-dimensional equivalent with the
//! same ltil; the original quantum numbers are kept as labels.
//!
//! ## Degeneracy
//!
//! For rational beta = m2/m1, the map (n, l) -> (n + s m1, l - s m2)
//! preserves nu and therefore the energy. Degenerate levels are grouped
//! exactly, via the integer invariant 2 n m2 + (2 l + N - 2) m1, never by
//! comparing floating-point energies.
//!
//! ## Domain
//!
//! The solver and ladder machinery cover k >= 0. For k = 0 only the
//! negative-energy states are bound; for k > 0 the potential confines and
//! the whole spectrum is discrete.

pub mod eigen;
pub mod gauge;
pub mod grid;
pub mod ladder;
pub mod ttw;

pub use eigen::{eigensolve, eigensolve_states, RadialWavefunction};
pub use ladder::{ladder, LadderDirection, LadderOperator};
pub use ttw::TtwOperator;

use crate::systems::Rational;
use serde::Serialize;
use thiserror::Error;

/// Errors from the quantum layer.
#[derive(Debug, Error)]
pub enum QuantumError {
    /// A constructor argument is out of range.
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    /// Negative curvature is outside the solver's domain.
    #[error("curvature k = {k} is negative; the spectral machinery covers k >= 0")]
    NegativeCurvature { k: f64 },
    /// The reference grid cannot resolve the requested state.
    #[error(
        "grid too coarse: {points_per_wavelength:.1} points per local wavelength \
         at r = {radius:.4e}, need at least {required:.0}"
    )]
    GridTooCoarse {
        points_per_wavelength: f64,
        radius: f64,
        required: f64,
    },
}

/// One radial sector of the quantized family.
#[derive(Debug, Clone, Serialize)]
pub struct RadialProblem {
    /// Deformation exponent beta = m2/m1.
    pub beta: Rational,
    /// Curvature parameter, k >= 0.
    pub k: f64,
    /// Coupling strength of the Kepler term, mu > 0.
    pub mu: f64,
    /// Planck constant.
    pub hbar: f64,
    /// Spatial dimension N >= 2.
    pub dim: usize,
    /// Integer angular momentum label.
    pub l: u32,
    l_tilde: f64,
}

impl RadialProblem {
    /// Builds the radial sector for dimension `dim` and angular momentum
    /// `l`, with ltil = (l + (dim - 2)/2) / beta.
    pub fn new(
        dim: usize,
        l: u32,
        beta: Rational,
        k: f64,
        mu: f64,
        hbar: f64,
    ) -> Result<Self, QuantumError> {
        if dim < 2 {
            return Err(QuantumError::InvalidParameter {
                name: "dim",
                reason: format!("need dim >= 2, got {dim}"),
            });
        }
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
        let l_tilde = (l as f64 + (dim as f64 - 2.0) / 2.0) / beta.value();
        Ok(RadialProblem {
            beta,
            k,
            mu,
            hbar,
            dim,
            l,
            l_tilde,
        })
    }

    /// Effective angular coefficient driving the radial operator.
    #[inline]
    pub fn l_tilde(&self) -> f64 {
        self.l_tilde
    }

    /// Principal-like combination nu = n + ltil + 1/2.
    #[inline]
    pub fn nu(&self, n: u32) -> f64 {
        n as f64 + self.l_tilde + 0.5
    }

    /// Closed-form energy of level n in this sector.
    pub fn energy(&self, n: u32) -> f64 {
        let nu = self.nu(n);
        let h2 = self.hbar * self.hbar;
        -self.mu * self.mu / (2.0 * h2 * nu * nu) + 2.0 * self.k * h2 * nu * nu
            - self.k * h2 / 2.0
    }

    /// Whether level n lies below the continuum. For k > 0 the potential
    /// confines and every level is bound; for k = 0 the continuum starts
    /// at zero energy.
    #[inline]
    pub fn is_bound(&self, n: u32) -> bool {
        self.k > 0.0 || self.energy(n) < 0.0
    }

    /// Same physical sector, rewritten as a two-dimensional problem with
    /// the identical effective coefficient. Quantum-number labels are
    /// preserved from the original problem.
    pub fn reduce(&self) -> Self {
        let mut out = self.clone();
        out.dim = 2;
        out
    }

    /// Same parameters at a different integer angular momentum.
    pub fn at_sector(&self, l: u32) -> Self {
        let mut out = self.clone();
        out.l = l;
        out.l_tilde = (l as f64 + (self.dim as f64 - 2.0) / 2.0) / self.beta.value();
        out
    }

    /// Neighboring rung of the factorization ladder: shifts ltil by
    /// `delta` while keeping every label. The ladder operators connect
    /// sectors at unit spacing in ltil, which for deformed problems does
    /// not correspond to integer steps in l.
    pub fn shifted_sector(&self, delta: f64) -> Self {
        let lt = self.l_tilde + delta;
        assert!(
            lt.is_finite() && lt >= 0.0,
            "shifted sector must keep a nonnegative effective coefficient"
        );
        let mut out = self.clone();
        out.l_tilde = lt;
        out
    }
}

/// One row of a spectrum table.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumRow {
    pub n: u32,
    pub l: u32,
    pub energy_formula: f64,
    pub energy_grid: Option<f64>,
    /// Relative deviation |grid - formula| / |formula|.
    pub residual: Option<f64>,
}

/// Spectrum of one radial sector: closed-form energies, and grid
/// confirmations where a solve was performed.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumTable {
    pub dim: usize,
    pub l: u32,
    pub beta: Rational,
    pub k: f64,
    pub mu: f64,
    pub hbar: f64,
    pub rows: Vec<SpectrumRow>,
    /// Set when the requested count was cut down, with the reason.
    pub note: Option<String>,
}

impl SpectrumTable {
    /// Closed-form-only table, no grid confirmation. For k = 0 the table
    /// stops at the continuum edge; a note records any truncation.
    pub fn closed_form(prob: &RadialProblem, count: usize) -> Self {
        let mut rows = Vec::new();
        let mut note = None;
        for n in 0..count as u32 {
            if !prob.is_bound(n) {
                note = Some(format!(
                    "truncated at {} of {} requested levels: the rest lie in the continuum",
                    rows.len(),
                    count
                ));
                break;
            }
            rows.push(SpectrumRow {
                n,
                l: prob.l,
                energy_formula: prob.energy(n),
                energy_grid: None,
                residual: None,
            });
        }
        SpectrumTable {
            dim: prob.dim,
            l: prob.l,
            beta: prob.beta,
            k: prob.k,
            mu: prob.mu,
            hbar: prob.hbar,
            rows,
            note,
        }
    }

    /// Largest relative deviation between grid and formula over rows that
    /// carry both.
    pub fn max_residual(&self) -> f64 {
        self.rows
            .iter()
            .filter_map(|r| r.residual)
            .fold(0.0, f64::max)
    }

    /// Checks that the closed-form column increases strictly with n.
    pub fn is_monotone(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].energy_formula > w[0].energy_formula)
    }

    /// CSV rendering with 17-significant-digit floats.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,l,E_formula,E_grid,residual\n");
        for row in &self.rows {
            let grid = row
                .energy_grid
                .map(|e| format!("{:.16e}", e))
                .unwrap_or_default();
            let res = row
                .residual
                .map(|r| format!("{:.16e}", r))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{:.16e},{},{}\n",
                row.n, row.l, row.energy_formula, grid, res
            ));
        }
        out
    }
}

/// A set of levels sharing one energy, listed as (n, l) pairs in
/// ascending n.
#[derive(Debug, Clone, Serialize)]
pub struct DegeneracyGroup {
    pub energy: f64,
    pub members: Vec<(u32, u32)>,
}

/// Groups every level with energy inside [e_min, e_max] by exact
/// degeneracy. `template` supplies (dim, beta, k, mu, hbar); its angular
/// momentum is ignored. Grouping uses the integer invariant
/// 2 n m2 + (2 l + N - 2) m1 for beta = m2/m1, so equal-energy levels are
/// matched exactly rather than through floating-point comparison.
///
/// For k = 0 the window must end below the continuum edge at zero, since
/// the bound spectrum accumulates there and any window touching it would
/// hold infinitely many levels.
pub fn degeneracy_groups(
    template: &RadialProblem,
    e_min: f64,
    e_max: f64,
) -> Result<Vec<DegeneracyGroup>, QuantumError> {
    if !(e_min.is_finite() && e_max.is_finite() && e_min < e_max) {
        return Err(QuantumError::InvalidParameter {
            name: "window",
            reason: format!("need finite e_min < e_max, got [{e_min}, {e_max}]"),
        });
    }
    if template.k == 0.0 && e_max >= 0.0 {
        return Err(QuantumError::InvalidParameter {
            name: "window",
            reason: "for k = 0 the window must end below the continuum edge at zero".to_string(),
        });
    }
    let m2 = template.beta.num() as u64;
    let m1 = template.beta.den() as u64;
    let nm2 = template.dim as u64 - 2;
    let mut groups: std::collections::BTreeMap<u64, Vec<(u32, u32)>> =
        std::collections::BTreeMap::new();
    let mut l = 0u32;
    loop {
        let sector = template.at_sector(l);
        if sector.energy(0) > e_max {
            break;
        }
        let mut n = 0u32;
        loop {
            let e = sector.energy(n);
            if e > e_max {
                break;
            }
            if e >= e_min {
                let key = 2 * n as u64 * m2 + (2 * l as u64 + nm2) * m1;
                groups.entry(key).or_default().push((n, l));
            }
            n += 1;
        }
        l += 1;
    }
    let mut out: Vec<DegeneracyGroup> = groups
        .into_values()
        .map(|mut members| {
            members.sort_unstable();
            let (n0, l0) = members[0];
            let energy = template.at_sector(l0).energy(n0);
            DegeneracyGroup { energy, members }
        })
        .collect();
    out.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    Ok(out)
}

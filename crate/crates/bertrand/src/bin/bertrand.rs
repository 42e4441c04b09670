//! One-shot verification and simulation runner.
//!
//! Each invocation executes a single command described by a JSON config
//! (or assembled from the command line), writes its artifacts and a run
//! manifest into the output directory, and exits with
//!
//! * 0 when every check passed,
//! * 1 when a check failed, after printing a JSON failure report that
//!   names the violated invariant and the worst point,
//! * 2 on a bad invocation or config.
//!
//! Identical configs and seeds produce byte-identical reports; wall
//! time lives only in the manifest. Flags override config fields, so
//! `--seed`, `--tol`, and `--out` can vary a stored config without
//! editing it.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use bertrand::coalgebra::{realize, verify_relations, RealizationKind};
use bertrand::dynamics::{
    curvature_check, detect_closure, integrate_logged, rational_match, IntegrationSetup,
    StopReason, Trajectory,
};
use bertrand::invariants::{ccm_runge_lenz, runge_lenz, ttw_invariant};
use bertrand::phasespace::{poisson_bracket, sample_points, Observable, PhasePoint, SampleRegion};
use bertrand::quantum::{eigensolve, RadialProblem, TtwOperator};
use bertrand::systems::{
    angular_rescale, bounded_orbit_setup, build, build_polar, coupling_exchange, levi_civita,
    perlick1_with_real_exponent, quadratic_conformal_hamiltonian, quadratic_conformal_split,
    verify_canonical, Family, HamiltonianSystem, Rational, SystemSpec,
};

/// Verification and simulation runner for the deformed Kepler families.
#[derive(Parser)]
#[command(name = "bertrand", version)]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, value_name = "PATH", global = true)]
    config: Option<PathBuf>,
    /// Seed for sampled points.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for artifacts (default: current directory).
    #[arg(long, value_name = "DIR", global = true)]
    out: Option<PathBuf>,
    /// Headline check tolerance; each command has its own default.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Option<CommandArg>,
}

#[derive(Clone, Copy, Subcommand)]
enum CommandArg {
    /// Check the sl(2) closure relations of a realization at sampled points.
    VerifyAlgebra,
    /// Check that the conserved quantities commute with their Hamiltonian.
    VerifyInvariants,
    /// Integrate a bounded orbit and report conservation drift.
    Simulate,
    /// Integrate a bounded orbit and search for its closure.
    Closure,
    /// Compare closed-form and finite-difference scalar curvature.
    Curvature,
    /// Solve the radial eigenproblem and compare with the closed form.
    Spectrum,
    /// Verify the square-map, coupling-exchange, and rescale identities.
    CcmCheck,
    /// Verify the barrier family: classical drift plus operator checks.
    TtwCheck,
}

impl CommandArg {
    fn name(self) -> &'static str {
        match self {
            CommandArg::VerifyAlgebra => "verify-algebra",
            CommandArg::VerifyInvariants => "verify-invariants",
            CommandArg::Simulate => "simulate",
            CommandArg::Closure => "closure",
            CommandArg::Curvature => "curvature",
            CommandArg::Spectrum => "spectrum",
            CommandArg::CcmCheck => "ccm-check",
            CommandArg::TtwCheck => "ttw-check",
        }
    }
}

/// A full run description. Every field except `command` is optional and
/// falls back to a per-command default, so a config round-trips through
/// JSON without gaining or losing entries.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    /// Which run to execute.
    command: String,
    /// The system under test, for commands that need one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    system: Option<SystemSpec>,
    /// Degrees of freedom for system-free commands (verify-algebra).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    /// Realization for the algebra check: "cartesian" or "centrifugal".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    realization: Option<String>,
    /// Barrier strengths for the centrifugal realization, one per site.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    barriers: Option<Vec<f64>>,
    /// Number of sampled points for pointwise checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    points: Option<usize>,
    /// Seed for sampled points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Headline check tolerance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tol: Option<f64>,
    /// Relative error bound for the adaptive integrator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    integrator_tol: Option<f64>,
    /// Integration span; defaults to `orbit.periods` radial periods.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t_final: Option<f64>,
    /// Relative energy-drift bound for trajectory checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    energy_tol: Option<f64>,
    /// Bounded-orbit initial condition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    orbit: Option<OrbitConfig>,
    /// Expectation for closure runs: a rational exponent must close, a
    /// generic control must not.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    expect_closed: Option<bool>,
    /// Real exponent override for closure control runs (PerlickI only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta_real: Option<f64>,
    /// Radii for the curvature comparison.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    radii: Option<Vec<f64>>,
    /// Angular sector for the spectrum command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    l: Option<u32>,
    /// Number of levels for the spectrum command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    count: Option<usize>,
    /// Planck constant for the operator commands.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hbar: Option<f64>,
    /// Output directory; the --out flag overrides.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

impl RunConfig {
    fn bare(command: &str) -> RunConfig {
        RunConfig { command: command.to_string(), ..RunConfig::default() }
    }
}

/// Initial-condition knobs for the orbit commands. Missing fields fall
/// back to l = 1, theta0 = 0.4, fill = 0.5, and a per-command period
/// count.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OrbitConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fill: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    periods: Option<f64>,
}

#[derive(Clone, Copy)]
struct Orbit {
    l: f64,
    theta0: f64,
    fill: f64,
    periods: f64,
}

fn resolve_orbit(cfg: &Option<OrbitConfig>, default_periods: f64) -> Orbit {
    let o = cfg.unwrap_or_default();
    Orbit {
        l: o.l.unwrap_or(1.0),
        theta0: o.theta0.unwrap_or(0.4),
        fill: o.fill.unwrap_or(0.5),
        periods: o.periods.unwrap_or(default_periods),
    }
}

/// One reported check. Value rows pass when value < threshold; flag
/// rows carry the verdict directly.
#[derive(Clone, Debug, Serialize)]
struct CheckRow {
    label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    worst_point: Option<Value>,
}

/// Entry of the failure report printed on exit 1.
#[derive(Clone, Debug, Serialize)]
struct Failure {
    invariant: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    worst_point: Option<Value>,
}

#[derive(Default)]
struct Checker {
    rows: Vec<CheckRow>,
    failures: Vec<Failure>,
}

impl Checker {
    fn value(
        &mut self,
        label: impl Into<String>,
        value: f64,
        threshold: f64,
        worst_point: Option<Value>,
    ) {
        let label = label.into();
        let pass = value < threshold;
        if !pass {
            self.failures.push(Failure {
                invariant: label.clone(),
                value: Some(value),
                threshold: Some(threshold),
                worst_point: worst_point.clone(),
            });
        }
        self.rows.push(CheckRow {
            label,
            value: Some(value),
            threshold: Some(threshold),
            pass,
            worst_point,
        });
    }

    fn flag(&mut self, label: impl Into<String>, ok: bool, worst_point: Option<Value>) {
        let label = label.into();
        if !ok {
            self.failures.push(Failure {
                invariant: label.clone(),
                value: None,
                threshold: None,
                worst_point: worst_point.clone(),
            });
        }
        self.rows.push(CheckRow { label, value: None, threshold: None, pass: ok, worst_point });
    }

    fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn main() -> ExitCode {
    let started = Instant::now();
    let cli = Cli::parse();
    match execute(cli, started) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: Cli, started: Instant) -> Result<bool, String> {
    let mut config = match (&cli.config, cli.command) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
            serde_json::from_str::<RunConfig>(&text)
                .map_err(|e| format!("invalid config {}: {e}", path.display()))?
        }
        (None, Some(sub)) => RunConfig::bare(sub.name()),
        (None, None) => return Err("give a command or --config PATH".to_string()),
    };
    if let Some(sub) = cli.command {
        if config.command != sub.name() {
            return Err(format!(
                "config asks for {:?} but the command line says {:?}",
                config.command,
                sub.name()
            ));
        }
    }
    if let Some(seed) = cli.seed {
        config.seed = Some(seed);
    }
    if let Some(tol) = cli.tol {
        config.tol = Some(tol);
    }
    if let Some(out) = cli.out {
        config.out = Some(out);
    }

    let name = config.command.clone();
    let out_dir = config.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir)
        .map_err(|e| format!("cannot create output directory {}: {e}", out_dir.display()))?;

    let mut ck = Checker::default();
    let (detail, mut artifacts) = match name.as_str() {
        "verify-algebra" => run_verify_algebra(&config, &mut ck)?,
        "verify-invariants" => run_verify_invariants(&config, &mut ck)?,
        "simulate" => run_simulate(&config, &out_dir, &mut ck)?,
        "closure" => run_closure(&config, &out_dir, &mut ck)?,
        "curvature" => run_curvature(&config, &out_dir, &mut ck)?,
        "spectrum" => run_spectrum(&config, &out_dir, &mut ck)?,
        "ccm-check" => run_ccm_check(&config, &mut ck)?,
        "ttw-check" => run_ttw_check(&config, &out_dir, &mut ck)?,
        other => return Err(format!("unknown command {other:?}")),
    };

    let status = if ck.passed() { "pass" } else { "fail" };
    let report = json!({
        "command": name,
        "status": status,
        "checks": ck.rows,
        "detail": detail,
    });
    let report_name = format!("{name}-report.json");
    write_json(&out_dir.join(&report_name), &report)?;
    artifacts.push(report_name);

    let mut versions = BTreeMap::new();
    versions.insert("bertrand", env!("CARGO_PKG_VERSION").to_string());
    let manifest = json!({
        "command": name,
        "config": config,
        "versions": versions,
        "wall_seconds": started.elapsed().as_secs_f64(),
        "artifacts": artifacts,
    });
    write_json(&out_dir.join("manifest.json"), &manifest)?;

    if ck.passed() {
        for row in &ck.rows {
            match (row.value, row.threshold) {
                (Some(v), Some(t)) => println!("ok  {:<60} {v:>10.3e} < {t:.1e}", row.label),
                _ => println!("ok  {}", row.label),
            }
        }
        println!("PASS: {name} ({} checks)", ck.rows.len());
        Ok(true)
    } else {
        let failure = json!({
            "command": name,
            "status": "fail",
            "failures": ck.failures,
        });
        println!(
            "{}",
            serde_json::to_string_pretty(&failure).expect("failure report serializes")
        );
        Ok(false)
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), String> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| format!("serialization failed: {e}"))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn point_json(dim: usize, flat: &[f64]) -> Value {
    json!({ "x": flat[..dim], "p": flat[dim..] })
}

fn state_json(t: f64, dim: usize, flat: &[f64]) -> Value {
    json!({ "t": t, "x": flat[..dim], "p": flat[dim..] })
}

fn default_barriers(dim: usize) -> Vec<f64> {
    let base = [0.3, 0.7, 0.4, 0.6, 0.5];
    (0..dim).map(|i| base[i % base.len()]).collect()
}

/// Worst |{H, inv}| over the admissible subset of the points, with the
/// point where it occurs.
fn worst_bracket(
    sys: &HamiltonianSystem,
    inv: &Observable,
    pts: &[PhasePoint],
) -> Result<(f64, PhasePoint), String> {
    let mut worst = -1.0f64;
    let mut at: Option<&PhasePoint> = None;
    for pt in pts {
        if sys.admissible.check(pt, sys.h.name()).is_err() {
            continue;
        }
        let v = poisson_bracket(&sys.h, inv, pt).map_err(|e| e.to_string())?.abs();
        if v > worst {
            worst = v;
            at = Some(pt);
        }
    }
    match at {
        Some(pt) => Ok((worst.max(0.0), pt.clone())),
        None => Err("no sampled point fell inside the admissible region".to_string()),
    }
}

/// The conserved quantities a family registers along trajectories.
/// Families without a closed invariant set (PerlickII, real-exponent
/// controls) return an empty list.
fn conserved_set(sys: &HamiltonianSystem) -> Result<Vec<Observable>, String> {
    if sys.real_exponent.is_some() {
        return Ok(Vec::new());
    }
    match sys.spec.family {
        Family::KeplerCurved { .. } | Family::PerlickI { .. } => {
            let set = runge_lenz(sys, 1).map_err(|e| e.to_string())?;
            let mut out = set.angular;
            out.push(set.re_script_s);
            out.push(set.im_script_s);
            if let Some(re) = set.re_s_display {
                out.push(re);
            }
            if let Some(im) = set.im_s_display {
                out.push(im);
            }
            if let Some(imc) = set.im_s_sqrtc_display {
                out.push(imc);
            }
            Ok(out)
        }
        Family::TTWCurved { .. } => {
            let set = ttw_invariant(sys).map_err(|e| e.to_string())?;
            Ok(vec![set.casimir, set.re_script_s, set.im_script_s])
        }
        Family::DarbouxCCM { .. } => {
            let s = ccm_runge_lenz(sys, 1).map_err(|e| e.to_string())?;
            Ok(vec![s.re_part("Re S[DarbouxCCM]"), s.im_part("Im S[DarbouxCCM]")])
        }
        Family::PerlickII { .. } => Ok(Vec::new()),
    }
}

fn require_system(cfg: &RunConfig, command: &str) -> Result<SystemSpec, String> {
    let spec = cfg
        .system
        .clone()
        .ok_or_else(|| format!("{command} needs a \"system\" entry in the config"))?;
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

// === verify-algebra ===

fn run_verify_algebra(cfg: &RunConfig, ck: &mut Checker) -> Result<(Value, Vec<String>), String> {
    let dim = cfg.dim.unwrap_or(3);
    let realization = cfg.realization.as_deref().unwrap_or("cartesian");
    let kind = match realization {
        "cartesian" => RealizationKind::Cartesian,
        "centrifugal" => RealizationKind::Centrifugal {
            b: cfg.barriers.clone().unwrap_or_else(|| default_barriers(dim)),
        },
        other => {
            return Err(format!(
                "unknown realization {other:?}; use \"cartesian\" or \"centrifugal\""
            ))
        }
    };
    let points = cfg.points.unwrap_or(100);
    let seed = cfg.seed.unwrap_or(0);
    let tol = cfg.tol.unwrap_or(1e-10);

    let real = realize(dim, kind).map_err(|e| e.to_string())?;
    let report = verify_relations(&real, points, seed);
    for check in &report.checks {
        ck.value(check.label.clone(), check.max_abs, tol, Some(point_json(dim, &check.worst_at)));
    }
    let detail = json!({
        "dim": dim,
        "realization": report.realization,
        "points": points,
        "seed": seed,
        "max_abs": report.max_abs,
    });
    Ok((detail, Vec::new()))
}

// === verify-invariants ===

fn run_verify_invariants(
    cfg: &RunConfig,
    ck: &mut Checker,
) -> Result<(Value, Vec<String>), String> {
    let spec = require_system(cfg, "verify-invariants")?;
    let sys = build(&spec).map_err(|e| e.to_string())?;
    let set = conserved_set(&sys)?;
    if set.is_empty() {
        return Err(format!(
            "{} has no closed invariant set to verify; use the closure command",
            spec.family.name()
        ));
    }
    let points = cfg.points.unwrap_or(50);
    let seed = cfg.seed.unwrap_or(0);
    let tol = cfg.tol.unwrap_or(1e-10);
    let pts = sample_points(spec.dim, points, seed, sys.admissible.sample_region(spec.dim));

    for obs in &set {
        let (worst, at) = worst_bracket(&sys, obs, &pts)?;
        ck.value(
            format!("{{H, {}}}", obs.name()),
            worst,
            tol,
            Some(point_json(spec.dim, at.flat())),
        );
    }
    let detail = json!({
        "family": spec.family.name(),
        "dim": spec.dim,
        "points": points,
        "seed": seed,
        "invariants": set.iter().map(|o| o.name().to_string()).collect::<Vec<_>>(),
    });
    Ok((detail, Vec::new()))
}

// === simulate ===

/// Per-invariant drift over a trajectory. Re/Im pairs that share a name
/// suffix are normalized by their joint starting modulus, everything
/// else by its own starting value.
struct DriftRow {
    name: String,
    start: f64,
    scale: f64,
    max_deviation: f64,
    rel: f64,
    t_at: f64,
    state_at: Vec<f64>,
}

impl DriftRow {
    fn to_json(&self) -> Value {
        json!({
            "name": self.name,
            "start": self.start,
            "scale": self.scale,
            "max_deviation": self.max_deviation,
            "rel_drift": self.rel,
        })
    }
}

fn drift_rows(traj: &Trajectory) -> Vec<DriftRow> {
    let names = &traj.invariant_names;
    let starts: Vec<f64> = traj.invariant_logs.iter().map(|s| s[0]).collect();
    // Angular momentum components share one scale: a planar orbit in
    // three dimensions starts with L13 = L23 = 0, and those rows are
    // judged against the full angular modulus, not their own zero.
    let is_angular = |name: &str| {
        name.strip_prefix('L')
            .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
    };
    let angular_scale = names
        .iter()
        .enumerate()
        .filter(|(_, n)| is_angular(n))
        .map(|(i, _)| starts[i] * starts[i])
        .sum::<f64>()
        .sqrt();
    let scale_for = |idx: usize| -> f64 {
        let name = &names[idx];
        if is_angular(name) {
            return angular_scale;
        }
        for (prefix, partner) in [("Re ", "Im "), ("Im ", "Re ")] {
            if let Some(suffix) = name.strip_prefix(prefix) {
                if let Some(j) = names.iter().position(|m| m.strip_prefix(partner) == Some(suffix))
                {
                    return starts[idx].hypot(starts[j]);
                }
            }
        }
        starts[idx].abs()
    };
    (0..names.len())
        .map(|idx| {
            let series = &traj.invariant_logs[idx];
            let mut dev = -1.0f64;
            let mut at = 0usize;
            for (row, v) in series.iter().enumerate() {
                let d = (v - starts[idx]).abs();
                if d > dev {
                    dev = d;
                    at = row;
                }
            }
            let dev = dev.max(0.0);
            let scale = scale_for(idx).max(f64::MIN_POSITIVE);
            DriftRow {
                name: names[idx].clone(),
                start: starts[idx],
                scale,
                max_deviation: dev,
                rel: dev / scale,
                t_at: traj.times[at],
                state_at: traj.states[at].flat().to_vec(),
            }
        })
        .collect()
}

fn energy_drift_argmax(traj: &Trajectory) -> (f64, f64, Vec<f64>) {
    let h0 = traj.hamiltonian[0];
    let mut dev = -1.0f64;
    let mut at = 0usize;
    for (row, h) in traj.hamiltonian.iter().enumerate() {
        let d = (h - h0).abs();
        if d > dev {
            dev = d;
            at = row;
        }
    }
    let rel = dev.max(0.0) / h0.abs().max(f64::MIN_POSITIVE);
    (rel, traj.times[at], traj.states[at].flat().to_vec())
}

fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<(), String> {
    let file =
        fs::File::create(path).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    let mut out = BufWriter::new(file);
    traj.write_csv(&mut out).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    out.flush().map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn run_simulate(
    cfg: &RunConfig,
    out_dir: &Path,
    ck: &mut Checker,
) -> Result<(Value, Vec<String>), String> {
    let spec = require_system(cfg, "simulate")?;
    let sys = build(&spec).map_err(|e| e.to_string())?;
    let orbit = resolve_orbit(&cfg.orbit, 12.0);
    let itol = cfg.integrator_tol.unwrap_or(1e-12);
    let drift_tol = cfg.tol.unwrap_or(1e-6);
    let energy_tol = cfg.energy_tol.unwrap_or(1e-10);

    let setup = bounded_orbit_setup(&sys, orbit.l, orbit.theta0, orbit.fill)
        .map_err(|e| e.to_string())?;
    let t_final = cfg.t_final.unwrap_or(orbit.periods * setup.radial_period);
    let invariants = conserved_set(&sys)?;
    let refs: Vec<&Observable> = invariants.iter().collect();
    let traj = integrate_logged(
        &sys,
        &setup.point,
        t_final,
        itol,
        &IntegrationSetup { invariants: refs, ..IntegrationSetup::default() },
    )
    .map_err(|e| e.to_string())?;

    write_trajectory_csv(&out_dir.join("trajectory.csv"), &traj)?;

    ck.flag(
        "integration reached the requested final time",
        matches!(traj.stop, StopReason::Completed),
        Some(json!({ "stop": traj.stop, "t": traj.duration() })),
    );
    let dim = spec.dim;
    let (e_rel, e_t, e_state) = energy_drift_argmax(&traj);
    ck.value("relative energy drift", e_rel, energy_tol, Some(state_json(e_t, dim, &e_state)));
    let drifts = drift_rows(&traj);
    for row in &drifts {
        ck.value(
            format!("relative drift of {}", row.name),
            row.rel,
            drift_tol,
            Some(state_json(row.t_at, dim, &row.state_at)),
        );
    }

    let detail = json!({
        "family": spec.family.name(),
        "dim": dim,
        "energy": setup.energy,
        "angular_charge": setup.angular_charge,
        "turning_points": [setup.turning_points.0, setup.turning_points.1],
        "radial_period": setup.radial_period,
        "t_final": t_final,
        "periods_covered": traj.duration() / setup.radial_period,
        "integrator_tol": itol,
        "stop": traj.stop,
        "stats": traj.stats,
        "drift": drifts.iter().map(DriftRow::to_json).collect::<Vec<_>>(),
    });
    Ok((detail, vec!["trajectory.csv".to_string()]))
}

// === closure ===

fn run_closure(
    cfg: &RunConfig,
    out_dir: &Path,
    ck: &mut Checker,
) -> Result<(Value, Vec<String>), String> {
    let spec = require_system(cfg, "closure")?;
    let sys = match cfg.beta_real {
        Some(beta) => {
            let Family::PerlickI { k, mu, .. } = spec.family else {
                return Err("beta_real only overrides the PerlickI exponent".to_string());
            };
            perlick1_with_real_exponent(spec.dim, beta, k, mu).map_err(|e| e.to_string())?
        }
        None => build(&spec).map_err(|e| e.to_string())?,
    };
    let orbit = resolve_orbit(&cfg.orbit, 50.0);
    let itol = cfg.integrator_tol.unwrap_or(1e-12);
    let miss_tol = cfg.tol.unwrap_or(1e-5);
    let expect_closed = cfg.expect_closed.unwrap_or(true);

    let setup = bounded_orbit_setup(&sys, orbit.l, orbit.theta0, orbit.fill)
        .map_err(|e| e.to_string())?;
    let t_final = cfg.t_final.unwrap_or(orbit.periods * setup.radial_period);
    let traj = integrate_logged(
        &sys,
        &setup.point,
        t_final,
        itol,
        &IntegrationSetup { store_dense: true, ..IntegrationSetup::default() },
    )
    .map_err(|e| e.to_string())?;
    let report = detect_closure(&traj, miss_tol).map_err(|e| e.to_string())?;

    write_trajectory_csv(&out_dir.join("trajectory.csv"), &traj)?;

    ck.flag("radial motion is bounded", report.bounded, None);
    ck.flag(
        "integration reached the requested final time",
        matches!(traj.stop, StopReason::Completed),
        Some(json!({ "stop": traj.stop, "t": traj.duration() })),
    );
    if expect_closed {
        ck.flag(
            "orbit returns to its initial state",
            report.closed,
            Some(json!({ "miss_distance": report.miss_distance })),
        );
        ck.value(
            "closure miss distance",
            report.miss_distance,
            miss_tol,
            Some(json!({ "period": report.period })),
        );
    } else {
        ck.flag(
            "orbit stays open across the window",
            !report.closed,
            Some(json!({ "period": report.period, "miss_distance": report.miss_distance })),
        );
    }

    let ratio = match (report.period, report.radial_period) {
        (Some(p), Some(tr)) if tr > 0.0 => Some(p / tr),
        _ => None,
    };
    let ratio_guess = ratio
        .and_then(|x| rational_match(x, 64, 1e-2))
        .map(|(p, q)| format!("{p}/{q}"));
    let detail = json!({
        "family": spec.family.name(),
        "beta_real": cfg.beta_real,
        "expect_closed": expect_closed,
        "closure": report,
        "period_over_radial": ratio,
        "period_ratio_guess": ratio_guess,
        "t_final": t_final,
        "integrator_tol": itol,
    });
    Ok((detail, vec!["trajectory.csv".to_string()]))
}

// === curvature ===

fn run_curvature(
    cfg: &RunConfig,
    out_dir: &Path,
    ck: &mut Checker,
) -> Result<(Value, Vec<String>), String> {
    let spec = require_system(cfg, "curvature")?;
    let radii = cfg
        .radii
        .clone()
        .unwrap_or_else(|| (1..=10).map(|i| 0.25 + 0.2 * i as f64).collect());
    let tol = cfg.tol.unwrap_or(1e-6);
    let report = curvature_check(&spec, &radii).map_err(|e| e.to_string())?;

    let mut csv = String::from("radius,closed_form_3d,numeric_3d,closed_form_2d,numeric_2d\n");
    for s in &report.samples {
        csv.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            s.radius, s.closed_form_3d, s.numeric_3d, s.closed_form_2d, s.numeric_2d
        ));
    }
    let csv_path = out_dir.join("curvature.csv");
    fs::write(&csv_path, csv).map_err(|e| format!("cannot write {}: {e}", csv_path.display()))?;

    ck.flag(
        "all requested radii were evaluated",
        report.skipped.is_empty(),
        Some(json!({ "skipped": report.skipped })),
    );
    for s in &report.samples {
        let dev = (s.numeric_3d - s.closed_form_3d)
            .abs()
            .max((s.numeric_2d - s.closed_form_2d).abs());
        ck.value(
            format!("curvature deviation at r = {:.4}", s.radius),
            dev,
            tol,
            Some(json!({ "radius": s.radius })),
        );
    }
    let detail = json!({
        "family": spec.family.name(),
        "report": report,
    });
    Ok((detail, vec!["curvature.csv".to_string()]))
}

// === spectrum ===

fn run_spectrum(
    cfg: &RunConfig,
    out_dir: &Path,
    ck: &mut Checker,
) -> Result<(Value, Vec<String>), String> {
    let spec = require_system(cfg, "spectrum")?;
    let (beta, k, mu) = match spec.family {
        Family::KeplerCurved { k, mu, .. } => (Rational::new(1, 1).expect("1/1"), k, mu),
        Family::PerlickI { beta, k, mu } => (beta, k, mu),
        ref f => {
            return Err(format!(
                "spectrum needs a radial family (KeplerCurved or PerlickI), got {}",
                f.name()
            ))
        }
    };
    let l = cfg.l.unwrap_or(0);
    let count = cfg.count.unwrap_or(5);
    let hbar = cfg.hbar.unwrap_or(1.0);
    let tol = cfg.tol.unwrap_or(1e-5);

    let prob =
        RadialProblem::new(spec.dim, l, beta, k, mu, hbar).map_err(|e| e.to_string())?;
    let table = eigensolve(&prob, count).map_err(|e| e.to_string())?;

    let csv_path = out_dir.join("spectrum.csv");
    fs::write(&csv_path, table.to_csv())
        .map_err(|e| format!("cannot write {}: {e}", csv_path.display()))?;

    println!("  n   l  E_formula                E_grid                   residual");
    for row in &table.rows {
        println!(
            "{:>3} {:>3}  {:>24} {:>24}  {:>10}",
            row.n,
            row.l,
            format!("{:+.16e}", row.energy_formula),
            row.energy_grid.map_or_else(String::new, |e| format!("{e:+.16e}")),
            row.residual.map_or_else(String::new, |r| format!("{r:.3e}")),
        );
    }

    ck.flag("energies increase with the level index", table.is_monotone(), None);
    for row in &table.rows {
        if let Some(res) = row.residual {
            ck.value(
                format!("grid energy residual at n = {}", row.n),
                res,
                tol,
                Some(json!({ "n": row.n, "l": row.l, "energy": row.energy_formula })),
            );
        }
    }
    let detail = json!({
        "table": table,
        "max_residual": table.max_residual(),
    });
    Ok((detail, vec!["spectrum.csv".to_string()]))
}

// === ccm-check ===

fn polar_chart_points(pts: &[PhasePoint]) -> Vec<PhasePoint> {
    pts.iter()
        .map(|pt| {
            let r = 0.3 + pt.x(0).abs();
            PhasePoint::new(&[r, pt.x(1)], &[pt.p(0), pt.p(1)])
                .expect("a shifted sample stays finite")
        })
        .collect()
}

/// Worst relative deviation |f - g| / (1 + |g|) over the points, with
/// the point where it occurs.
fn worst_relative_gap(
    f: &Observable,
    g: &Observable,
    pts: &[PhasePoint],
) -> Result<(f64, PhasePoint), String> {
    let mut worst = -1.0f64;
    let mut at = 0usize;
    for (i, pt) in pts.iter().enumerate() {
        let a = f.eval(pt).map_err(|e| e.to_string())?;
        let b = g.eval(pt).map_err(|e| e.to_string())?;
        let gap = (a - b).abs() / (1.0 + b.abs());
        if gap > worst {
            worst = gap;
            at = i;
        }
    }
    Ok((worst.max(0.0), pts[at].clone()))
}

fn run_ccm_check(cfg: &RunConfig, ck: &mut Checker) -> Result<(Value, Vec<String>), String> {
    let (lambda, delta, energy) = match &cfg.system {
        Some(spec) => {
            spec.validate().map_err(|e| e.to_string())?;
            let Family::DarbouxCCM { lambda, delta, energy } = spec.family else {
                return Err(format!(
                    "ccm-check expects a DarbouxCCM system, got {}",
                    spec.family.name()
                ));
            };
            (lambda, delta, energy)
        }
        None => (0.25, 0.04, 0.3),
    };
    let points = cfg.points.unwrap_or(20);
    let seed = cfg.seed.unwrap_or(0);
    let tol = cfg.tol.unwrap_or(1e-10);
    let pts = sample_points(2, points, seed, SampleRegion::default());
    let polar_pts = polar_chart_points(&pts);

    // The square map is canonical.
    let lc = levi_civita();
    let mut worst = -1.0f64;
    let mut at = 0usize;
    for (i, pt) in pts.iter().enumerate() {
        let v = verify_canonical(&lc, std::slice::from_ref(pt)).map_err(|e| e.to_string())?;
        if v > worst {
            worst = v;
            at = i;
        }
    }
    ck.value(
        "square map canonicality",
        worst.max(0.0),
        tol,
        Some(point_json(2, pts[at].flat())),
    );

    // The square map carries the curved family onto its conformal image.
    let mu = 1.0;
    let k = -4.0 * lambda * lambda;
    let curved = build(&SystemSpec {
        dim: 2,
        family: Family::KeplerCurved { k, mu, delta },
    })
    .map_err(|e| e.to_string())?;
    let pulled = lc.pullback(&curved.h, "H[curved] . square map");
    let target = quadratic_conformal_hamiltonian(lambda, 2.0 * mu, delta);
    let (gap, pt) = worst_relative_gap(&pulled, &target, &pts)?;
    ck.value(
        "square map carries the curved family onto the conformal form",
        gap,
        tol,
        Some(point_json(2, pt.flat())),
    );

    // Exchanging the coupling of the conformal system reproduces the
    // family build with the sign-flipped energy parameter.
    let (t_part, u_part) = quadratic_conformal_split(lambda, delta);
    let zero = Observable::build("0", 2, |a, _| a.konst(0.0));
    let exchanged = coupling_exchange(&t_part, &zero, &u_part, -energy, "exchanged conformal");
    let family = build(&SystemSpec {
        dim: 2,
        family: Family::DarbouxCCM { lambda, delta, energy },
    })
    .map_err(|e| e.to_string())?;
    let (gap, pt) = worst_relative_gap(&exchanged, &family.h, &pts)?;
    ck.value(
        "coupling exchange lands on the family build",
        gap,
        tol,
        Some(point_json(2, pt.flat())),
    );

    // The angular rescale is canonical and carries the deformed family
    // onto the curved Kepler shape, exponent by exponent.
    let rescale_k = 0.1;
    let rescale_mu = 1.0;
    let rescale_delta = 0.05;
    let betas = [(1u32, 2u32), (2, 1), (3, 2), (1, 3)];
    for (num, den) in betas {
        let beta = Rational::new(num, den).expect("lowest terms");
        let map = angular_rescale(beta);
        let mut worst = -1.0f64;
        let mut at = 0usize;
        for (i, pt) in polar_pts.iter().enumerate() {
            let v =
                verify_canonical(&map, std::slice::from_ref(pt)).map_err(|e| e.to_string())?;
            if v > worst {
                worst = v;
                at = i;
            }
        }
        ck.value(
            format!("angular rescale canonicality at exponent {beta}"),
            worst.max(0.0),
            tol,
            Some(point_json(2, polar_pts[at].flat())),
        );

        let b = beta.value();
        let deformed = build_polar(&SystemSpec {
            dim: 2,
            family: Family::PerlickI { beta, k: rescale_k, mu: rescale_mu },
        })
        .map_err(|e| e.to_string())?;
        let mu_k = rescale_mu / (b * b);
        let kepler_polar = build_polar(&SystemSpec {
            dim: 2,
            family: Family::KeplerCurved { k: rescale_k, mu: mu_k, delta: rescale_delta },
        })
        .map_err(|e| e.to_string())?;
        let pulled = map.pullback(&kepler_polar, "H[curved polar] . rescale");
        let mut worst = -1.0f64;
        let mut at = 0usize;
        for (i, pt) in polar_pts.iter().enumerate() {
            let lhs = deformed.eval(pt).map_err(|e| e.to_string())?;
            let rhs = b * b
                * (pulled.eval(pt).map_err(|e| e.to_string())? - 4.0 * mu_k * rescale_delta);
            let gap = (lhs - rhs).abs() / (1.0 + lhs.abs());
            if gap > worst {
                worst = gap;
                at = i;
            }
        }
        ck.value(
            format!("rescale carries exponent {beta} onto the curved shape"),
            worst.max(0.0),
            tol,
            Some(point_json(2, polar_pts[at].flat())),
        );
    }

    // The exchanged invariant commutes with the exchanged flow.
    let pts_adm = sample_points(2, points, seed, family.admissible.sample_region(2));
    for axis in [1usize, 2] {
        let s = ccm_runge_lenz(&family, axis).map_err(|e| e.to_string())?;
        let re = s.re_part(format!("Re S[DarbouxCCM axis {axis}]"));
        let im = s.im_part(format!("Im S[DarbouxCCM axis {axis}]"));
        for obs in [&re, &im] {
            let (worst, at) = worst_bracket(&family, obs, &pts_adm)?;
            ck.value(
                format!("{{H, {}}}", obs.name()),
                worst,
                tol,
                Some(point_json(2, at.flat())),
            );
        }
    }

    let detail = json!({
        "lambda": lambda,
        "delta": delta,
        "energy": energy,
        "points": points,
        "seed": seed,
    });
    Ok((detail, Vec::new()))
}

// === ttw-check ===

fn run_ttw_check(
    cfg: &RunConfig,
    out_dir: &Path,
    ck: &mut Checker,
) -> Result<(Value, Vec<String>), String> {
    let spec = require_system(cfg, "ttw-check")?;
    let Family::TTWCurved { beta, k, mu, b1, b2 } = spec.family else {
        return Err(format!("ttw-check expects a TTWCurved system, got {}", spec.family.name()));
    };
    let orbit = resolve_orbit(&cfg.orbit, 10.0);
    let theta0 = cfg.orbit.and_then(|o| o.theta0).unwrap_or(0.7);
    let itol = cfg.integrator_tol.unwrap_or(1e-12);
    let drift_tol = cfg.tol.unwrap_or(1e-6);
    let energy_tol = cfg.energy_tol.unwrap_or(1e-10);
    let hbar = cfg.hbar.unwrap_or(1.0);
    let hermiticity_tol = 1e-10;
    let reduction_tol = 1e-8;

    // Classical half: drift of the centrifugal Casimir and the power
    // combination along a bounded orbit.
    let sys = build(&spec).map_err(|e| e.to_string())?;
    let setup =
        bounded_orbit_setup(&sys, orbit.l, theta0, orbit.fill).map_err(|e| e.to_string())?;
    let t_final = cfg.t_final.unwrap_or(orbit.periods * setup.radial_period);
    let invariants = conserved_set(&sys)?;
    let refs: Vec<&Observable> = invariants.iter().collect();
    let traj = integrate_logged(
        &sys,
        &setup.point,
        t_final,
        itol,
        &IntegrationSetup { invariants: refs, ..IntegrationSetup::default() },
    )
    .map_err(|e| e.to_string())?;
    write_trajectory_csv(&out_dir.join("trajectory.csv"), &traj)?;

    ck.flag(
        "integration reached the requested final time",
        matches!(traj.stop, StopReason::Completed),
        Some(json!({ "stop": traj.stop, "t": traj.duration() })),
    );
    let (e_rel, e_t, e_state) = energy_drift_argmax(&traj);
    ck.value("relative energy drift", e_rel, energy_tol, Some(state_json(e_t, 2, &e_state)));
    let drifts = drift_rows(&traj);
    for row in &drifts {
        ck.value(
            format!("relative drift of {}", row.name),
            row.rel,
            drift_tol,
            Some(state_json(row.t_at, 2, &row.state_at)),
        );
    }

    // Operator half: self-adjointness in the invariant measure, and the
    // barrier-free reduction onto the radial operator.
    let op = TtwOperator::new(beta, k, mu, hbar, b1, b2).map_err(|e| e.to_string())?;
    ck.value(
        "operator asymmetry in the invariant measure",
        op.hermiticity_asymmetry(),
        hermiticity_tol,
        None,
    );
    let barrier_free = b1 == 0.0 && b2 == 0.0;
    if barrier_free {
        for l in [0u32, 1] {
            let res = op.sector_reduction_residual(l).map_err(|e| e.to_string())?;
            ck.value(
                format!("barrier-free sector l = {l} matches the radial operator"),
                res,
                reduction_tol,
                None,
            );
        }
    }

    let detail = json!({
        "beta": beta,
        "k": k,
        "mu": mu,
        "b1": b1,
        "b2": b2,
        "hbar": hbar,
        "barrier_free_reduction_checked": barrier_free,
        "radial_period": setup.radial_period,
        "t_final": t_final,
        "integrator_tol": itol,
        "stop": traj.stop,
        "stats": traj.stats,
        "drift": drifts.iter().map(DriftRow::to_json).collect::<Vec<_>>(),
    });
    Ok((detail, vec!["trajectory.csv".to_string()]))
}

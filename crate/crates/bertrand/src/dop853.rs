//! Explicit Runge-Kutta integration of order 8(5,3) with dense output.
//!
//! This is the Dormand-Prince 8(5,3) pair in the Hairer-Norsett-Wanner
//! formulation: twelve stages per step, a fifth- and a third-order
//! embedded error estimate blended into one error norm, and a
//! seventh-order continuous extension built from three extra stages on
//! accepted steps.
//!
//! ## Step control
//!
//! The controller accepts a step when the blended error norm is below
//! one and rescales the step size by 0.9 * norm^(-1/8), clamped to
//! [0.2, 10]. After a rejection the growth factor is capped at one
//! until a step is accepted again. When the required step falls below
//! ten units in the last place of the current time, integration stops
//! with a step-underflow error; that is the usual failure mode near a
//! singularity of the right-hand side.
//!
//! ## Dense output
//!
//! Each accepted step can be expanded into a polynomial segment that
//! interpolates the solution over the step span to seventh order. The
//! segment owns its data, so trajectories can retain segments for
//! later root finding without keeping the stepper alive.

use thiserror::Error;

/// Integration failures.
#[derive(Debug, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (required step below {min_step:.3e})")]
    StepUnderflow { t: f64, min_step: f64 },

    #[error("right-hand side returned a non-finite value at t = {t}")]
    NonFiniteRhs { t: f64 },

    #[error("invalid tolerance {value} for {name}; must be positive and finite")]
    BadTolerance { name: &'static str, value: f64 },
}

const N_STAGES: usize = 12;
const N_STAGES_EXTENDED: usize = 16;
const INTERPOLATOR_POWER: usize = 7;
const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
// Error estimator order 7: the controller exponent is -1/(7 + 1).
const ERROR_EXPONENT: f64 = -1.0 / 8.0;

#[rustfmt::skip]
const A: [[f64; 16]; 16] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.05260015195876773, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0197250569845379, 0.0591751709536137, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.02958758547680685, 0.0, 0.08876275643042054, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2413651341592667, 0.0, -0.8845494793282861, 0.924834003261792, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.037037037037037035, 0.0, 0.0, 0.17082860872947386, 0.12546768756682242, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.037109375, 0.0, 0.0, 0.17025221101954405, 0.06021653898045596, -0.017578125, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.03709200011850479, 0.0, 0.0, 0.17038392571223998, 0.10726203044637328, -0.015319437748624402, 0.008273789163814023, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.6241109587160757, 0.0, 0.0, -3.3608926294469414, -0.868219346841726, 27.59209969944671, 20.154067550477894, -43.48988418106996, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.47766253643826434, 0.0, 0.0, -2.4881146199716677, -0.590290826836843, 21.230051448181193, 15.279233632882423, -33.28821096898486, -0.020331201708508627, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [-0.9371424300859873, 0.0, 0.0, 5.186372428844064, 1.0914373489967295, -8.149787010746927, -18.52006565999696, 22.739487099350505, 2.4936055526796523, -3.0467644718982196, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [2.273310147516538, 0.0, 0.0, -10.53449546673725, -2.0008720582248625, -17.9589318631188, 27.94888452941996, -2.8589982771350235, -8.87285693353063, 12.360567175794303, 0.6433927460157636, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.054293734116568765, 0.0, 0.0, 0.0, 0.0, 4.450312892752409, 1.8915178993145003, -5.801203960010585, 0.3111643669578199, -0.1521609496625161, 0.20136540080403034, 0.04471061572777259, 0.0, 0.0, 0.0, 0.0],
    [0.056167502283047954, 0.0, 0.0, 0.0, 0.0, 0.0, 0.25350021021662483, -0.2462390374708025, -0.12419142326381637, 0.15329179827876568, 0.00820105229563469, 0.007567897660545699, -0.008298, 0.0, 0.0, 0.0],
    [0.03183464816350214, 0.0, 0.0, 0.0, 0.0, 0.028300909672366776, 0.053541988307438566, -0.05492374857139099, 0.0, 0.0, -0.00010834732869724932, 0.0003825710908356584, -0.00034046500868740456, 0.1413124436746325, 0.0, 0.0],
    [-0.42889630158379194, 0.0, 0.0, 0.0, 0.0, -4.697621415361164, 7.683421196062599, 4.06898981839711, 0.3567271874552811, 0.0, 0.0, 0.0, -0.0013990241651590145, 2.9475147891527724, -9.15095847217987, 0.0],
];

#[rustfmt::skip]
const B: [f64; 12] = [0.054293734116568765, 0.0, 0.0, 0.0, 0.0, 4.450312892752409, 1.8915178993145003, -5.801203960010585, 0.3111643669578199, -0.1521609496625161, 0.20136540080403034, 0.04471061572777259];

#[rustfmt::skip]
const C: [f64; 16] = [0.0, 0.05260015195876773, 0.0789002279381516, 0.1183503419072274, 0.2816496580927726, 0.3333333333333333, 0.25, 0.3076923076923077, 0.6512820512820513, 0.6, 0.8571428571428571, 1.0, 1.0, 0.1, 0.2, 0.7777777777777778];

#[rustfmt::skip]
const E3: [f64; 13] = [-0.18980075407240762, 0.0, 0.0, 0.0, 0.0, 4.450312892752409, 1.8915178993145003, -5.801203960010585, -0.4226823213237919, -0.1521609496625161, 0.20136540080403034, 0.02265179219836082, 0.0];

#[rustfmt::skip]
const E5: [f64; 13] = [0.01312004499419488, 0.0, 0.0, 0.0, 0.0, -1.2251564463762044, -0.4957589496572502, 1.6643771824549864, -0.35032884874997366, 0.3341791187130175, 0.08192320648511571, -0.022355307863886294, 0.0];

#[rustfmt::skip]
const D: [[f64; 16]; 4] = [
    [-8.428938276109013, 0.0, 0.0, 0.0, 0.0, 0.5667149535193777, -3.0689499459498917, 2.38466765651207, 2.117034582445028, -0.871391583777973, 2.2404374302607883, 0.6315787787694688, -0.08899033645133331, 18.148505520854727, -9.194632392478356, -4.436036387594894],
    [10.427508642579134, 0.0, 0.0, 0.0, 0.0, 242.28349177525817, 165.20045171727028, -374.5467547226902, -22.113666853125306, 7.733432668472264, -30.674084731089398, -9.332130526430229, 15.697238121770845, -31.139403219565178, -9.35292435884448, 35.81684148639408],
    [19.985053242002433, 0.0, 0.0, 0.0, 0.0, -387.0373087493518, -189.17813819516758, 527.8081592054236, -11.57390253995963, 6.8812326946963, -1.0006050966910838, 0.7777137798053443, -2.778205752353508, -60.19669523126412, 84.32040550667716, 11.99229113618279],
    [-25.69393346270375, 0.0, 0.0, 0.0, 0.0, -154.18974869023643, -231.5293791760455, 357.6391179106141, 93.40532418362432, -37.45832313645163, 104.0996495089623, 29.8402934266605, -43.53345659001114, 96.32455395918828, -39.17726167561544, -149.72683625798564],
];

/// Ten units in the last place of t, the smallest meaningful step.
#[inline]
fn min_step_at(t: f64) -> f64 {
    let a = t.abs();
    let next = f64::from_bits(a.to_bits() + 1);
    10.0 * (next - a)
}

/// Root-mean-square norm, the natural scale-free measure for error
/// vectors already divided by their tolerances.
#[inline]
fn rms_norm(v: &[f64]) -> f64 {
    let s: f64 = v.iter().map(|x| x * x).sum();
    (s / v.len() as f64).sqrt()
}

/// A seventh-order interpolating polynomial over one accepted step.
#[derive(Clone, Debug)]
pub struct DenseSegment {
    t_old: f64,
    t_new: f64,
    h: f64,
    y_old: Vec<f64>,
    f: Vec<Vec<f64>>,
}

impl DenseSegment {
    /// Time span covered, in travel order (start, end).
    #[inline]
    pub fn span(&self) -> (f64, f64) {
        (self.t_old, self.t_new)
    }

    /// Whether t lies inside the covered span (inclusive).
    #[inline]
    pub fn covers(&self, t: f64) -> bool {
        let lo = self.t_old.min(self.t_new);
        let hi = self.t_old.max(self.t_new);
        lo <= t && t <= hi
    }

    /// Interpolated state at time t, written into `out`.
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        assert_eq!(out.len(), self.y_old.len());
        let x = (t - self.t_old) / self.h;
        out.fill(0.0);
        for (i, f) in self.f.iter().rev().enumerate() {
            for (o, v) in out.iter_mut().zip(f) {
                *o += v;
            }
            let factor = if i % 2 == 0 { x } else { 1.0 - x };
            for o in out.iter_mut() {
                *o *= factor;
            }
        }
        for (o, v) in out.iter_mut().zip(&self.y_old) {
            *o += v;
        }
    }
}

/// One adaptive integrator instance walking from t0 toward t_bound.
///
/// `rhs(t, y, dydt)` fills the derivative in place. Non-finite values
/// are tolerated during trial stages (the step is rejected and retried
/// smaller) but abort the run if no finite step can be found.
pub struct Dop853<F> {
    rhs: F,
    n: usize,
    t: f64,
    y: Vec<f64>,
    f: Vec<f64>,
    t_old: f64,
    y_old: Vec<f64>,
    h_previous: f64,
    h_abs: f64,
    direction: f64,
    t_bound: f64,
    rtol: f64,
    atol: f64,
    max_step: f64,
    k: Vec<Vec<f64>>,
    stage: Vec<f64>,
    y_new: Vec<f64>,
    finished: bool,
    nfev: u64,
    naccepted: u64,
    nrejected: u64,
}

impl<F: FnMut(f64, &[f64], &mut [f64])> Dop853<F> {
    /// Set up an integration from (t0, y0) toward t_bound. The first
    /// step size is chosen automatically from the local derivative
    /// scale unless `first_step` pins it.
    pub fn new(
        mut rhs: F,
        t0: f64,
        y0: &[f64],
        t_bound: f64,
        rtol: f64,
        atol: f64,
        first_step: Option<f64>,
    ) -> Result<Self, OdeError> {
        if !(rtol.is_finite() && rtol > 0.0) {
            return Err(OdeError::BadTolerance { name: "rtol", value: rtol });
        }
        if !(atol.is_finite() && atol > 0.0) {
            return Err(OdeError::BadTolerance { name: "atol", value: atol });
        }
        let n = y0.len();
        let direction = if t_bound >= t0 { 1.0 } else { -1.0 };
        let mut f0 = vec![0.0; n];
        rhs(t0, y0, &mut f0);
        if !f0.iter().all(|v| v.is_finite()) {
            return Err(OdeError::NonFiniteRhs { t: t0 });
        }
        let max_step = f64::INFINITY;
        let h_abs = match first_step {
            Some(h) => h.abs(),
            None => select_initial_step(
                &mut rhs, t0, y0, &f0, direction, rtol, atol, t_bound, max_step,
            ),
        };
        Ok(Dop853 {
            rhs,
            n,
            t: t0,
            y: y0.to_vec(),
            f: f0,
            t_old: t0,
            y_old: y0.to_vec(),
            h_previous: 0.0,
            h_abs,
            direction,
            t_bound,
            rtol,
            atol,
            max_step,
            k: vec![vec![0.0; n]; N_STAGES_EXTENDED],
            stage: vec![0.0; n],
            y_new: vec![0.0; n],
            finished: t0 == t_bound,
            nfev: 2,
            naccepted: 0,
            nrejected: 0,
        })
    }

    /// Current time.
    #[inline]
    pub fn t(&self) -> f64 {
        self.t
    }

    /// Current state.
    #[inline]
    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Start time of the last accepted step.
    #[inline]
    pub fn t_old(&self) -> f64 {
        self.t_old
    }

    /// Whether t_bound has been reached.
    #[inline]
    pub fn finished(&self) -> bool {
        self.finished
    }

    /// Right-hand side evaluation count so far.
    #[inline]
    pub fn nfev(&self) -> u64 {
        self.nfev
    }

    /// Accepted step count.
    #[inline]
    pub fn naccepted(&self) -> u64 {
        self.naccepted
    }

    /// Rejected trial count.
    #[inline]
    pub fn nrejected(&self) -> u64 {
        self.nrejected
    }

    /// Advance by one accepted step (clipped to t_bound).
    pub fn step(&mut self) -> Result<(), OdeError> {
        if self.finished {
            return Ok(());
        }
        let min_step = min_step_at(self.t);
        let mut h_abs = if self.h_abs > self.max_step {
            self.max_step
        } else if self.h_abs < min_step {
            min_step
        } else {
            self.h_abs
        };
        let mut step_rejected = false;

        loop {
            if h_abs < min_step {
                return Err(OdeError::StepUnderflow { t: self.t, min_step });
            }
            let mut t_new = self.t + h_abs * self.direction;
            if self.direction * (t_new - self.t_bound) > 0.0 {
                t_new = self.t_bound;
            }
            let h = t_new - self.t;
            h_abs = h.abs();

            self.k[0].copy_from_slice(&self.f);
            for s in 1..N_STAGES {
                for i in 0..self.n {
                    let mut acc = 0.0;
                    for (j, kj) in self.k[..s].iter().enumerate() {
                        acc += A[s][j] * kj[i];
                    }
                    self.stage[i] = self.y[i] + h * acc;
                }
                let (head, tail) = self.k.split_at_mut(s);
                let _ = head;
                (self.rhs)(self.t + C[s] * h, &self.stage, &mut tail[0]);
            }
            for i in 0..self.n {
                let mut acc = 0.0;
                for (j, b) in B.iter().enumerate() {
                    acc += b * self.k[j][i];
                }
                self.y_new[i] = self.y[i] + h * acc;
            }
            (self.rhs)(t_new, &self.y_new, &mut self.stage);
            self.k[N_STAGES].copy_from_slice(&self.stage);
            self.nfev += N_STAGES as u64;

            let mut e5_sq = 0.0;
            let mut e3_sq = 0.0;
            for i in 0..self.n {
                let scale =
                    self.atol + self.y[i].abs().max(self.y_new[i].abs()) * self.rtol;
                let mut err5 = 0.0;
                let mut err3 = 0.0;
                for j in 0..=N_STAGES {
                    err5 += E5[j] * self.k[j][i];
                    err3 += E3[j] * self.k[j][i];
                }
                err5 /= scale;
                err3 /= scale;
                e5_sq += err5 * err5;
                e3_sq += err3 * err3;
            }
            let error_norm = if e5_sq == 0.0 && e3_sq == 0.0 {
                0.0
            } else {
                h_abs * e5_sq / ((e5_sq + 0.01 * e3_sq) * self.n as f64).sqrt()
            };

            if error_norm < 1.0 {
                let mut factor = if error_norm == 0.0 {
                    MAX_FACTOR
                } else {
                    MAX_FACTOR.min(SAFETY * error_norm.powf(ERROR_EXPONENT))
                };
                if step_rejected {
                    factor = factor.min(1.0);
                }
                self.h_previous = h;
                self.t_old = self.t;
                std::mem::swap(&mut self.y_old, &mut self.y);
                self.y.copy_from_slice(&self.y_new);
                self.t = t_new;
                std::mem::swap(&mut self.f, &mut self.stage);
                self.h_abs = h_abs * factor;
                self.naccepted += 1;
                if self.direction * (self.t - self.t_bound) >= 0.0 {
                    self.finished = true;
                }
                return Ok(());
            }
            // Non-finite error norms fall through here as well; the
            // max() guard turns them into the strongest shrink.
            h_abs *= MIN_FACTOR.max(SAFETY * error_norm.powf(ERROR_EXPONENT));
            step_rejected = true;
            self.nrejected += 1;
        }
    }

    /// Dense-output segment for the step just completed. Costs three
    /// extra derivative evaluations.
    pub fn dense(&mut self) -> DenseSegment {
        let h = self.h_previous;
        assert!(h != 0.0, "no step has been taken yet");
        for s in N_STAGES + 1..N_STAGES_EXTENDED {
            for i in 0..self.n {
                let mut acc = 0.0;
                for (j, kj) in self.k[..s].iter().enumerate() {
                    acc += A[s][j] * kj[i];
                }
                self.stage[i] = self.y_old[i] + h * acc;
            }
            let (head, tail) = self.k.split_at_mut(s);
            let _ = head;
            (self.rhs)(self.t_old + C[s] * h, &self.stage, &mut tail[0]);
            self.nfev += 1;
        }

        let mut f = vec![vec![0.0; self.n]; INTERPOLATOR_POWER];
        for i in 0..self.n {
            let delta = self.y[i] - self.y_old[i];
            f[0][i] = delta;
            f[1][i] = h * self.k[0][i] - delta;
            f[2][i] = 2.0 * delta - h * (self.k[N_STAGES][i] + self.k[0][i]);
        }
        for (r, row) in D.iter().enumerate() {
            for i in 0..self.n {
                let mut acc = 0.0;
                for (j, d) in row.iter().enumerate() {
                    acc += d * self.k[j][i];
                }
                f[3 + r][i] = h * acc;
            }
        }
        DenseSegment {
            t_old: self.t_old,
            t_new: self.t,
            h,
            y_old: self.y_old.clone(),
            f,
        }
    }
}

/// Starting step heuristic: compare the solution and derivative scales,
/// probe one Euler step, and bound by the interval length.
#[allow(clippy::too_many_arguments)]
fn select_initial_step<F: FnMut(f64, &[f64], &mut [f64])>(
    rhs: &mut F,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    direction: f64,
    rtol: f64,
    atol: f64,
    t_bound: f64,
    max_step: f64,
) -> f64 {
    let n = y0.len();
    if n == 0 {
        return f64::INFINITY;
    }
    let scale: Vec<f64> = y0.iter().map(|y| atol + y.abs() * rtol).collect();
    let d0 = rms_norm(&y0.iter().zip(&scale).map(|(y, s)| y / s).collect::<Vec<_>>());
    let d1 = rms_norm(&f0.iter().zip(&scale).map(|(f, s)| f / s).collect::<Vec<_>>());
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };

    let y1: Vec<f64> = y0
        .iter()
        .zip(f0)
        .map(|(y, f)| y + h0 * direction * f)
        .collect();
    let mut f1 = vec![0.0; n];
    rhs(t0 + h0 * direction, &y1, &mut f1);
    let d2 = rms_norm(
        &f1.iter()
            .zip(f0)
            .zip(&scale)
            .map(|((a, b), s)| (a - b) / s)
            .collect::<Vec<_>>(),
    ) / h0;

    let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
        1e-6f64.max(h0 * 1e-3)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 8.0)
    };
    (100.0 * h0).min(h1).min((t_bound - t0).abs()).min(max_step)
}

//! ODE modes, state-space boxes and piecewise trajectories.
//!
//! A [`Trajectory`] is a list of [`Segment`]s, each the solution of a single
//! mode from the previous segment's endpoint. Affine constant-coefficient
//! modes are solved in closed form; everything else goes through an adaptive
//! Dormand–Prince 5(4) integrator with dense output.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::signals::{ModeId, ModeSwitchSignal};

/// Right-hand side `f(t, x, dx)` of a general mode.
pub type RhsFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;

/// Coefficients of a time-varying affine mode: fills `A(t)` (row-major) and `b(t)`.
pub type CoeffFn = dyn Fn(f64, &mut [f64], &mut [f64]) + Send + Sync;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModeError {
    #[error("initial state component {component} = {value} lies outside the state space")]
    InitialStateOutside { component: usize, value: f64 },
    #[error("trajectory leaves the state space at t = {time} (component {component} = {value})")]
    StateSpaceExit {
        time: f64,
        component: usize,
        value: f64,
    },
    #[error("step size underflow at t = {time}")]
    StepSizeUnderflow { time: f64 },
    #[error("step limit exceeded at t = {time}")]
    TooManySteps { time: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("horizon mismatch: {0} vs {1}")]
    HorizonMismatch(f64, f64),
    #[error("empty or reversed time span [{0}, {1}]")]
    BadSpan(f64, f64),
    #[error("unknown mode {0}")]
    UnknownMode(ModeId),
    #[error("state space bounds must satisfy lo < hi in every component")]
    BadStateSpace,
}

/// Time origin seen by a mode's right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeClock {
    /// `f(t, x)` receives absolute time.
    Absolute,
    /// `f(t, x)` receives the time elapsed since the mode was entered.
    SinceEntry,
}

#[derive(Clone)]
pub enum ModeKind {
    AffineConstant { a: DMatrix<f64>, b: DVector<f64> },
    AffineTimeVarying(Arc<CoeffFn>),
    General(Arc<RhsFn>),
}

impl fmt::Debug for ModeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::AffineConstant { a, b } => f
                .debug_struct("AffineConstant")
                .field("a", a)
                .field("b", b)
                .finish(),
            Self::AffineTimeVarying(_) => f.write_str("AffineTimeVarying(..)"),
            Self::General(_) => f.write_str("General(..)"),
        }
    }
}

/// One right-hand side of a mode family, with its declared Lipschitz
/// constant `K` and bound `M` on the state space.
#[derive(Debug, Clone)]
pub struct ModeFunction {
    pub id: ModeId,
    pub name: String,
    pub dim: usize,
    pub kind: ModeKind,
    pub clock: ModeClock,
    pub lipschitz: f64,
    pub bound: f64,
}

impl ModeFunction {
    /// `dx/dt = A x + b`. `K` is the spectral norm of `A`, `M` the largest
    /// `‖Ax + b‖` over the corners of `space`.
    pub fn affine(
        id: ModeId,
        name: impl Into<String>,
        a: DMatrix<f64>,
        b: DVector<f64>,
        space: &StateSpace,
    ) -> Self {
        let dim = b.len();
        assert_eq!(a.nrows(), dim);
        assert_eq!(a.ncols(), dim);
        assert_eq!(space.dim(), dim);
        let lipschitz = spectral_norm(&a);
        let bound = space
            .corners()
            .map(|c| (&a * DVector::from_vec(c) + &b).norm())
            .fold(0.0, f64::max);
        Self {
            id,
            name: name.into(),
            dim,
            kind: ModeKind::AffineConstant { a, b },
            clock: ModeClock::Absolute,
            lipschitz,
            bound,
        }
    }

    /// Scalar `dx/dt = a x + b`.
    pub fn scalar_affine(
        id: ModeId,
        name: impl Into<String>,
        a: f64,
        b: f64,
        space: &StateSpace,
    ) -> Self {
        Self::affine(
            id,
            name,
            DMatrix::from_element(1, 1, a),
            DVector::from_element(1, b),
            space,
        )
    }

    pub fn time_varying(
        id: ModeId,
        name: impl Into<String>,
        dim: usize,
        clock: ModeClock,
        coeffs: Arc<CoeffFn>,
        lipschitz: f64,
        bound: f64,
    ) -> Self {
        Self {
            id,
            name: name.into(),
            dim,
            kind: ModeKind::AffineTimeVarying(coeffs),
            clock,
            lipschitz,
            bound,
        }
    }

    pub fn general(
        id: ModeId,
        name: impl Into<String>,
        dim: usize,
        clock: ModeClock,
        rhs: Arc<RhsFn>,
        lipschitz: f64,
        bound: f64,
    ) -> Self {
        Self {
            id,
            name: name.into(),
            dim,
            kind: ModeKind::General(rhs),
            clock,
            lipschitz,
            bound,
        }
    }

    pub fn is_affine_constant(&self) -> bool {
        matches!(self.kind, ModeKind::AffineConstant { .. })
    }

    /// Evaluates the right-hand side at mode-clock time `t`.
    pub fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let n = self.dim;
        match &self.kind {
            ModeKind::AffineConstant { a, b } => {
                for i in 0..n {
                    let mut acc = b[i];
                    for j in 0..n {
                        acc += a[(i, j)] * x[j];
                    }
                    out[i] = acc;
                }
            }
            ModeKind::AffineTimeVarying(coeffs) => {
                let mut am = vec![0.0; n * n];
                let mut bv = vec![0.0; n];
                coeffs(t, &mut am, &mut bv);
                for i in 0..n {
                    let mut acc = bv[i];
                    for j in 0..n {
                        acc += am[i * n + j] * x[j];
                    }
                    out[i] = acc;
                }
            }
            ModeKind::General(rhs) => rhs(t, x, out),
        }
    }

    /// Right-hand side at absolute time `t` for a mode entered at `entry`.
    pub fn eval_at(&self, t: f64, entry: f64, x: &[f64], out: &mut [f64]) {
        let local = match self.clock {
            ModeClock::Absolute => t,
            ModeClock::SinceEntry => t - entry,
        };
        self.eval(local, x, out);
    }
}

fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 1 {
        return a[(0, 0)].abs();
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// An open box `∏ (lo_i, hi_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl StateSpace {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, ModeError> {
        if lo.len() != hi.len() || lo.is_empty() || lo.iter().zip(&hi).any(|(l, h)| l.partial_cmp(h) != Some(std::cmp::Ordering::Less)) {
            return Err(ModeError::BadStateSpace);
        }
        Ok(Self { lo, hi })
    }

    /// The same interval in every component.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self, ModeError> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    /// First component outside the open box, if any.
    pub fn violation(&self, x: &[f64]) -> Option<usize> {
        (0..self.dim()).find(|&i| !(x[i] > self.lo[i] && x[i] < self.hi[i]))
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.violation(x).is_none()
    }

    pub fn corners(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        let n = self.dim();
        (0..1usize << n).map(move |mask| {
            (0..n)
                .map(|i| {
                    if mask >> i & 1 == 1 {
                        self.hi[i]
                    } else {
                        self.lo[i]
                    }
                })
                .collect()
        })
    }
}

/// A finite mode family over a common state space, with the family-wide
/// constants `K = max K_f` and `M = max M_f`.
#[derive(Debug, Clone)]
pub struct ModeFamily {
    pub modes: Vec<Arc<ModeFunction>>,
    pub space: StateSpace,
    pub lipschitz: f64,
    pub bound: f64,
}

impl ModeFamily {
    pub fn new(modes: Vec<Arc<ModeFunction>>, space: StateSpace) -> Self {
        let lipschitz = modes.iter().map(|m| m.lipschitz).fold(0.0, f64::max);
        let bound = modes.iter().map(|m| m.bound).fold(0.0, f64::max);
        Self {
            modes,
            space,
            lipschitz,
            bound,
        }
    }

    pub fn get(&self, id: ModeId) -> Option<&Arc<ModeFunction>> {
        self.modes.iter().find(|m| m.id == id)
    }
}

/// Default number of uniform probes per closed-form segment.
pub const DEFAULT_PROBES: usize = 64;

/// Integrator and sampling settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h_max: f64,
    pub max_steps: usize,
    /// Uniform grid size used by [`sup_distance`] and trajectory dumps.
    pub samples: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            h_max: f64::INFINITY,
            max_steps: 1_000_000,
            samples: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
struct DenseStep {
    t: f64,
    h: f64,
    /// Five coefficient blocks of length `n`, Hairer's `rcont1..rcont5`.
    rcont: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Body {
    Scalar { a: f64, b: f64 },
    Matrix { aug: DMatrix<f64> },
    Dense { steps: Vec<DenseStep> },
}

/// Solution of one mode on `[start, end]`, entered at `start`.
#[derive(Debug, Clone)]
pub struct Segment {
    mode: Arc<ModeFunction>,
    start: f64,
    end: f64,
    x_start: Vec<f64>,
    x_end: Vec<f64>,
    body: Body,
}

impl Segment {
    pub fn mode(&self) -> &Arc<ModeFunction> {
        &self.mode
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn dim(&self) -> usize {
        self.x_start.len()
    }

    pub fn start_state(&self) -> &[f64] {
        &self.x_start
    }

    pub fn end_state(&self) -> &[f64] {
        &self.x_end
    }

    /// True for affine closed forms, which may also be evaluated outside
    /// `[start, end]`.
    pub fn is_closed_form(&self) -> bool {
        !matches!(self.body, Body::Dense { .. })
    }

    /// State at time `t`. Closed forms extrapolate; dense segments clamp to
    /// their first or last step.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let tau = t - self.start;
        match &self.body {
            Body::Scalar { a, b } => out[0] = scalar_affine(*a, *b, self.x_start[0], tau),
            Body::Matrix { aug } => {
                let e = (aug * tau).exp();
                let n = self.dim();
                for i in 0..n {
                    let mut acc = e[(i, n)];
                    for j in 0..n {
                        acc += e[(i, j)] * self.x_start[j];
                    }
                    out[i] = acc;
                }
            }
            Body::Dense { steps } => {
                if t >= self.end {
                    out.copy_from_slice(&self.x_end);
                    return;
                }
                let idx = steps.partition_point(|s| s.t <= t).saturating_sub(1);
                eval_dense(&steps[idx], t, out);
            }
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, &mut out);
        out
    }

    /// Time derivative of the state at `t`, from the mode's right-hand side.
    pub fn derivative(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.mode.eval_at(t, self.start, x, &mut out);
        out
    }

    /// Sorted probe times covering `[from, to]` (clipped to the segment), fine
    /// enough that each gap holds at most one extremum for library modes.
    /// Closed forms get `uniform` evenly spaced probes; dense segments get
    /// their integrator steps, each split into `uniform / 64` pieces.
    pub fn probe_times(&self, from: f64, to: f64, uniform: usize) -> Vec<f64> {
        let from = from.max(self.start);
        let to = to.min(self.end);
        if to <= from {
            return vec![from];
        }
        let mut out = vec![from, to];
        match &self.body {
            Body::Dense { steps } => {
                let split = (uniform / DEFAULT_PROBES).max(1);
                for s in steps {
                    for i in 0..split {
                        let t = s.t + s.h * i as f64 / split as f64;
                        if t > from && t < to {
                            out.push(t);
                        }
                    }
                }
            }
            Body::Scalar { .. } | Body::Matrix { .. } => {
                let uniform = uniform.max(2);
                let span = to - from;
                out.extend((1..uniform).map(|i| from + span * i as f64 / uniform as f64));
                let rate = match &self.mode.kind {
                    ModeKind::AffineConstant { a, .. } => a.amax(),
                    _ => 0.0,
                };
                if rate > 0.0 {
                    // geometric probes resolve fast transients near mode entry
                    let scale = 1.0 / rate;
                    let mut k = -24;
                    loop {
                        let t = self.start + scale * 2f64.powf(k as f64 / 2.0);
                        if t >= to {
                            break;
                        }
                        if t > from {
                            out.push(t);
                        }
                        k += 1;
                    }
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

fn scalar_affine(a: f64, b: f64, x0: f64, tau: f64) -> f64 {
    if a == 0.0 {
        x0 + b * tau
    } else {
        x0 * (a * tau).exp() + b * (a * tau).exp_m1() / a
    }
}

fn eval_dense(step: &DenseStep, t: f64, out: &mut [f64]) {
    let n = out.len();
    let theta = (t - step.t) / step.h;
    let theta1 = 1.0 - theta;
    let r = &step.rcont;
    for i in 0..n {
        out[i] = r[i]
            + theta
                * (r[n + i]
                    + theta1 * (r[2 * n + i] + theta * (r[3 * n + i] + theta1 * r[4 * n + i])));
    }
}

/// Solves one mode from `x0` over `[t0, t1]`, entering it at `t0`.
pub fn solve_mode(
    mode: &Arc<ModeFunction>,
    x0: &[f64],
    t0: f64,
    t1: f64,
    space: &StateSpace,
    cfg: &SolverConfig,
) -> Result<Segment, ModeError> {
    if x0.len() != mode.dim || space.dim() != mode.dim {
        return Err(ModeError::DimensionMismatch {
            expected: mode.dim,
            got: x0.len(),
        });
    }
    if t1.partial_cmp(&t0) != Some(std::cmp::Ordering::Greater) {
        return Err(ModeError::BadSpan(t0, t1));
    }
    if let Some(component) = space.violation(x0) {
        return Err(ModeError::InitialStateOutside {
            component,
            value: x0[component],
        });
    }
    let body = match &mode.kind {
        ModeKind::AffineConstant { a, b } if mode.dim == 1 => Body::Scalar {
            a: a[(0, 0)],
            b: b[0],
        },
        ModeKind::AffineConstant { a, b } => {
            let n = mode.dim;
            let mut aug = DMatrix::zeros(n + 1, n + 1);
            aug.view_mut((0, 0), (n, n)).copy_from(a);
            aug.view_mut((0, n), (n, 1)).copy_from(b);
            Body::Matrix { aug }
        }
        _ => Body::Dense { steps: Vec::new() },
    };
    let mut seg = Segment {
        mode: mode.clone(),
        start: t0,
        end: t1,
        x_start: x0.to_vec(),
        x_end: x0.to_vec(),
        body,
    };
    if let Body::Dense { .. } = seg.body {
        let (steps, x_end) = dopri5(mode, x0, t0, t1, cfg)?;
        seg.body = Body::Dense { steps };
        seg.x_end = x_end;
    } else {
        seg.x_end = seg.eval(t1);
    }
    let mut x = vec![0.0; mode.dim];
    for t in seg.probe_times(t0, t1, DEFAULT_PROBES) {
        seg.eval_into(t, &mut x);
        if let Some(component) = space.violation(&x) {
            return Err(ModeError::StateSpaceExit {
                time: t,
                component,
                value: x[component],
            });
        }
    }
    Ok(seg)
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn rms_scaled(v: &[f64], y: &[f64], cfg: &SolverConfig) -> f64 {
    let n = v.len() as f64;
    (v.iter()
        .zip(y)
        .map(|(vi, yi)| {
            let sk = cfg.abs_tol + cfg.rel_tol * yi.abs();
            (vi / sk).powi(2)
        })
        .sum::<f64>()
        / n)
        .sqrt()
}

fn dopri5(
    mode: &ModeFunction,
    x0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &SolverConfig,
) -> Result<(Vec<DenseStep>, Vec<f64>), ModeError> {
    let n = x0.len();
    let f = |t: f64, x: &[f64], out: &mut [f64]| mode.eval_at(t, t0, x, out);
    let span = t1 - t0;
    let h_max = cfg.h_max.min(span);

    let mut y = x0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut yt = vec![0.0; n];
    let mut y1 = vec![0.0; n];
    let mut err_v = vec![0.0; n];
    f(t0, &y, &mut k1);

    // initial step guess
    let mut h = {
        let d0 = rms_scaled(&y, &y, cfg);
        let d1 = rms_scaled(&k1, &y, cfg);
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(h_max);
        for i in 0..n {
            yt[i] = y[i] + h0 * k1[i];
        }
        f(t0 + h0, &yt, &mut k2);
        for i in 0..n {
            err_v[i] = (k2[i] - k1[i]) / h0;
        }
        let d2 = rms_scaled(&err_v, &y, cfg);
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / 5.0)
        };
        (100.0 * h0).min(h1).min(h_max)
    };

    let mut steps = Vec::new();
    let mut t = t0;
    let mut n_steps = 0usize;
    let mut last_rejected = false;
    while t < t1 {
        n_steps += 1;
        if n_steps > cfg.max_steps {
            return Err(ModeError::TooManySteps { time: t });
        }
        if h < 16.0 * f64::EPSILON * t.abs().max(span) {
            return Err(ModeError::StepSizeUnderflow { time: t });
        }
        let last = t + 1.01 * h >= t1;
        if last {
            h = t1 - t;
        }
        for i in 0..n {
            yt[i] = y[i] + h * A21 * k1[i];
        }
        f(t + C2 * h, &yt, &mut k2);
        for i in 0..n {
            yt[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * h, &yt, &mut k3);
        for i in 0..n {
            yt[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * h, &yt, &mut k4);
        for i in 0..n {
            yt[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * h, &yt, &mut k5);
        for i in 0..n {
            yt[i] = y[i]
                + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_new = if last { t1 } else { t + h };
        f(t_new, &yt, &mut k6);
        for i in 0..n {
            y1[i] = y[i]
                + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f(t_new, &y1, &mut k7);
        for i in 0..n {
            err_v[i] = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let err = {
            let mut acc = 0.0;
            for i in 0..n {
                let sk = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y1[i].abs());
                acc += (err_v[i] / sk).powi(2);
            }
            (acc / n as f64).sqrt()
        };
        if !err.is_finite() {
            h *= 0.1;
            last_rejected = true;
            continue;
        }
        let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 5.0);
        if err <= 1.0 {
            let mut rcont = vec![0.0; 5 * n];
            for i in 0..n {
                let ydiff = y1[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                rcont[i] = y[i];
                rcont[n + i] = ydiff;
                rcont[2 * n + i] = bspl;
                rcont[3 * n + i] = ydiff - h * k7[i] - bspl;
                rcont[4 * n + i] = h
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i]
                        + D7 * k7[i]);
            }
            steps.push(DenseStep { t, h, rcont });
            t = t_new;
            std::mem::swap(&mut y, &mut y1);
            std::mem::swap(&mut k1, &mut k7);
            h *= if last_rejected { fac.min(1.0) } else { fac };
            h = h.min(h_max);
            last_rejected = false;
        } else {
            h *= fac.min(1.0);
            last_rejected = true;
        }
    }
    Ok((steps, y))
}

/// A continuous piecewise trajectory tiling `[0, horizon]`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dim: usize,
    horizon: f64,
    segments: Vec<Segment>,
}

impl Trajectory {
    /// Wraps segments that already tile `[0, horizon]`.
    pub fn from_segments(segments: Vec<Segment>) -> Self {
        assert!(!segments.is_empty(), "trajectory needs at least one segment");
        let dim = segments[0].dim();
        let horizon = segments.last().map(|s| s.end).unwrap_or(0.0);
        Self {
            dim,
            horizon,
            segments,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Segment boundaries strictly inside `(0, horizon)`.
    pub fn switch_times(&self) -> Vec<f64> {
        self.segments.iter().skip(1).map(|s| s.start).collect()
    }

    fn segment_index(&self, t: f64) -> usize {
        self.segments
            .partition_point(|s| s.start <= t)
            .saturating_sub(1)
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        self.segments[self.segment_index(t)].eval_into(t, out);
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }

    /// Largest component-wise mismatch between consecutive segment endpoints.
    pub fn junction_gap(&self) -> f64 {
        self.segments
            .windows(2)
            .flat_map(|w| {
                w[0].end_state()
                    .iter()
                    .zip(w[1].start_state())
                    .map(|(a, b)| (a - b).abs())
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    }

    /// States on the uniform grid `t_i = i·T/(n−1)`, flattened row-major.
    ///
    /// Matrix closed forms are advanced with one precomputed propagator per
    /// segment rather than a fresh matrix exponential per point.
    pub fn sample_uniform(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let n = n.max(2);
        let h = self.horizon / (n - 1) as f64;
        let times: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let d = self.dim;
        let mut values = vec![0.0; n * d];
        let mut i = 0;
        for (si, seg) in self.segments.iter().enumerate() {
            let seg_end = if si + 1 == self.segments.len() {
                f64::INFINITY
            } else {
                self.segments[si + 1].start
            };
            let first = i;
            while i < n && times[i] < seg_end {
                i += 1;
            }
            if first == i {
                continue;
            }
            match &seg.body {
                Body::Matrix { aug } if i - first > 2 => {
                    let prop = (aug * h).exp();
                    let mut x = DVector::zeros(d + 1);
                    let x0 = seg.eval(times[first]);
                    x.rows_mut(0, d).copy_from_slice(&x0);
                    x[d] = 1.0;
                    for k in first..i {
                        values[k * d..(k + 1) * d].copy_from_slice(&x.as_slice()[..d]);
                        x = &prop * x;
                    }
                }
                _ => {
                    for k in first..i {
                        seg.eval_into(times[k], &mut values[k * d..(k + 1) * d]);
                    }
                }
            }
        }
        (times, values)
    }

    /// `time,x1,...,xn` CSV on the uniform grid with `comments` as `# ` lines.
    pub fn to_csv(&self, samples: usize, comments: &[(String, String)]) -> String {
        let mut out = String::new();
        for (k, v) in comments {
            out.push_str(&format!("# {k}={v}\n"));
        }
        let switches: Vec<String> = self.switch_times().iter().map(|t| t.to_string()).collect();
        out.push_str(&format!("# switches={}\n", switches.join(";")));
        out.push_str("time");
        for i in 1..=self.dim {
            out.push_str(&format!(",x{i}"));
        }
        out.push('\n');
        let (times, values) = self.sample_uniform(samples);
        for (k, t) in times.iter().enumerate() {
            out.push_str(&t.to_string());
            for v in &values[k * self.dim..(k + 1) * self.dim] {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Pastes mode solutions along `schedule`, a list of `(switch time, mode)`
/// whose first entry is at `t = 0`.
pub fn paste(
    schedule: &[(f64, Arc<ModeFunction>)],
    x0: &[f64],
    horizon: f64,
    space: &StateSpace,
    cfg: &SolverConfig,
) -> Result<Trajectory, ModeError> {
    let mut segments: Vec<Segment> = Vec::with_capacity(schedule.len());
    let mut x = x0.to_vec();
    for (i, (start, mode)) in schedule.iter().enumerate() {
        let end = schedule.get(i + 1).map_or(horizon, |s| s.0);
        if end <= *start {
            continue;
        }
        let seg = solve_mode(mode, &x, *start, end, space, cfg)?;
        x = seg.end_state().to_vec();
        segments.push(seg);
    }
    if segments.is_empty() {
        return Err(ModeError::BadSpan(0.0, horizon));
    }
    Ok(Trajectory::from_segments(segments))
}

/// The matching output signal `x_a` of a mode-switch signal over `family`.
pub fn matching_output_signal(
    family: &ModeFamily,
    a: &ModeSwitchSignal,
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<Trajectory, ModeError> {
    let lookup = |id| family.get(id).cloned().ok_or(ModeError::UnknownMode(id));
    let mut schedule = vec![(0.0, lookup(a.initial())?)];
    for &(t, id) in a.switches() {
        let mode = lookup(id)?;
        if t <= 0.0 {
            schedule[0].1 = mode;
        } else {
            schedule.push((t, mode));
        }
    }
    paste(&schedule, x0, a.horizon(), &family.space, cfg)
}

/// `sup_t ‖x(t) − y(t)‖` over segment breakpoints, a uniform grid of
/// `samples` points, and eight interior points per segment.
pub fn sup_distance(x: &Trajectory, y: &Trajectory, samples: usize) -> Result<f64, ModeError> {
    if x.dim != y.dim {
        return Err(ModeError::DimensionMismatch {
            expected: x.dim,
            got: y.dim,
        });
    }
    if x.horizon != y.horizon {
        return Err(ModeError::HorizonMismatch(x.horizon, y.horizon));
    }
    let d = x.dim;
    let (_, xv) = x.sample_uniform(samples);
    let (_, yv) = y.sample_uniform(samples);
    let mut best = xv
        .chunks(d)
        .zip(yv.chunks(d))
        .map(|(a, b)| dist(a, b))
        .fold(0.0, f64::max);
    let mut extra = Vec::new();
    for seg in x.segments.iter().chain(&y.segments) {
        extra.push(seg.start);
        extra.push(seg.end);
        for k in 1..8 {
            extra.push(seg.start + (seg.end - seg.start) * k as f64 / 8.0);
        }
    }
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d];
    for t in extra {
        x.eval_into(t, &mut a);
        y.eval_into(t, &mut b);
        best = best.max(dist(&a, &b));
    }
    Ok(best)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

//! Digitized hybrid gates and the gate library.
//!
//! A gate delays each input by a pure delay, selects an ODE mode from the
//! delayed input vector, follows that mode's trajectory, and thresholds one
//! state component to produce its digital output.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::modes::{
    paste, ModeClock, ModeError, ModeFamily, ModeFunction, SolverConfig, StateSpace, Trajectory,
};
use crate::signals::{BinarySignal, ModeId, ModeSwitchSignal, SignalError, TIME_EPS};
use crate::threshold::{digitize, extended_crossing, ThresholdError, ThresholdSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GateError {
    #[error("gate expects {expected} inputs, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("input horizons differ")]
    HorizonMismatch,
    #[error("input {slot} starts at {got}, gate declares {declared}")]
    InitialInputMismatch {
        slot: usize,
        declared: bool,
        got: bool,
    },
    #[error("initial state has dimension {got}, modes have {expected}")]
    InitialStateDimension { expected: usize, got: usize },
    #[error("delay measurement failed: {0}")]
    Measurement(String),
    #[error(transparent)]
    Mode(#[from] ModeError),
    #[error(transparent)]
    Threshold(#[from] ThresholdError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// What a choice function sees when the delayed input vector changes.
#[derive(Debug, Clone, Copy)]
pub struct ChoiceContext<'a> {
    pub time: f64,
    pub current: &'a [bool],
    pub previous: &'a [bool],
    /// Time of each delayed input's latest change, `-∞` if it never changed.
    pub last_change: &'a [f64],
}

/// The map `a_c` from delayed inputs to modes.
pub trait ChoiceFunction: Send + Sync + fmt::Debug {
    fn select(&self, ctx: &ChoiceContext<'_>) -> Arc<ModeFunction>;
}

/// Bit-vector index with input 0 as the least significant bit.
pub fn input_index(bits: &[bool]) -> usize {
    bits.iter()
        .enumerate()
        .map(|(j, &b)| usize::from(b) << j)
        .sum()
}

/// One fixed mode per input vector.
#[derive(Debug, Clone)]
pub struct TableChoice {
    pub modes: Vec<Arc<ModeFunction>>,
}

impl ChoiceFunction for TableChoice {
    fn select(&self, ctx: &ChoiceContext<'_>) -> Arc<ModeFunction> {
        self.modes[input_index(ctx.current)].clone()
    }
}

#[derive(Debug, Clone)]
pub struct GateSpec {
    pub kind: String,
    pub input_delays: Vec<f64>,
    /// Representative modes with family-wide `K`, `M` and the state space.
    pub family: ModeFamily,
    pub choice: Arc<dyn ChoiceFunction>,
    pub initial_inputs: Vec<bool>,
    pub initial_state: Vec<f64>,
    pub threshold: ThresholdSpec,
}

impl GateSpec {
    pub fn arity(&self) -> usize {
        self.input_delays.len()
    }

    pub fn min_delay(&self) -> f64 {
        self.input_delays.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn initial_mode(&self) -> Arc<ModeFunction> {
        let last = vec![f64::NEG_INFINITY; self.arity()];
        self.choice.select(&ChoiceContext {
            time: 0.0,
            current: &self.initial_inputs,
            previous: &self.initial_inputs,
            last_change: &last,
        })
    }

    /// Digitized output at `t = 0`.
    pub fn initial_output(&self) -> bool {
        self.threshold.level(&self.initial_state)
    }

    pub fn with_initial_state(mut self, x0: Vec<f64>) -> Self {
        self.initial_state = x0;
        self
    }

    pub fn with_threshold(mut self, threshold: ThresholdSpec) -> Self {
        self.threshold = threshold;
        self
    }
}

/// Delayed input vector and current mode of one gate.
#[derive(Debug, Clone)]
pub struct GateState {
    spec: Arc<GateSpec>,
    inputs: Vec<bool>,
    last_change: Vec<f64>,
    mode: Arc<ModeFunction>,
}

impl GateState {
    pub fn new(spec: Arc<GateSpec>) -> Self {
        let mode = spec.initial_mode();
        Self {
            inputs: spec.initial_inputs.clone(),
            last_change: vec![f64::NEG_INFINITY; spec.arity()],
            mode,
            spec,
        }
    }

    pub fn spec(&self) -> &Arc<GateSpec> {
        &self.spec
    }

    pub fn inputs(&self) -> &[bool] {
        &self.inputs
    }

    pub fn mode(&self) -> &Arc<ModeFunction> {
        &self.mode
    }

    /// Applies simultaneous delayed-input changes at `time` and evaluates the
    /// choice function once. Returns the new mode if its id differs from the
    /// current one.
    pub fn apply(&mut self, time: f64, changes: &[(usize, bool)]) -> Option<Arc<ModeFunction>> {
        let previous = self.inputs.clone();
        let mut changed = false;
        for &(slot, value) in changes {
            if self.inputs[slot] != value {
                self.inputs[slot] = value;
                self.last_change[slot] = time;
                changed = true;
            }
        }
        if !changed {
            return None;
        }
        let next = self.spec.choice.select(&ChoiceContext {
            time,
            current: &self.inputs,
            previous: &previous,
            last_change: &self.last_change,
        });
        if next.id == self.mode.id {
            None
        } else {
            self.mode = next.clone();
            Some(next)
        }
    }
}

/// Output of [`gate_output`].
#[derive(Debug, Clone)]
pub struct GateRun {
    pub output: BinarySignal,
    pub trajectory: Trajectory,
    pub modes: ModeSwitchSignal,
    pub schedule: Vec<(f64, Arc<ModeFunction>)>,
}

/// Changes of the delayed inputs grouped by coalesced time.
pub fn delayed_input_changes(
    g: &GateSpec,
    inputs: &[BinarySignal],
) -> Vec<(f64, Vec<(usize, bool)>)> {
    let mut events: Vec<(f64, usize, bool)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(slot, s)| {
            s.delay(g.input_delays[slot])
                .transitions()
                .iter()
                .map(move |tr| (tr.time, slot, tr.value))
                .collect::<Vec<_>>()
        })
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut groups: Vec<(f64, Vec<(usize, bool)>)> = Vec::new();
    for (t, slot, v) in events {
        match groups.last_mut() {
            Some((t0, changes)) if t - *t0 <= TIME_EPS => changes.push((slot, v)),
            _ => groups.push((t, vec![(slot, v)])),
        }
    }
    groups
}

/// Runs one gate in isolation on the given input signals.
pub fn gate_output(
    g: &Arc<GateSpec>,
    inputs: &[BinarySignal],
    cfg: &SolverConfig,
) -> Result<GateRun, GateError> {
    if inputs.len() != g.arity() {
        return Err(GateError::Arity {
            expected: g.arity(),
            got: inputs.len(),
        });
    }
    let horizon = inputs.first().map_or(0.0, |s| s.horizon());
    if inputs.iter().any(|s| s.horizon() != horizon) {
        return Err(GateError::HorizonMismatch);
    }
    for (slot, s) in inputs.iter().enumerate() {
        if s.initial() != g.initial_inputs[slot] {
            return Err(GateError::InitialInputMismatch {
                slot,
                declared: g.initial_inputs[slot],
                got: s.initial(),
            });
        }
    }
    if g.initial_state.len() != g.family.space.dim() {
        return Err(GateError::InitialStateDimension {
            expected: g.family.space.dim(),
            got: g.initial_state.len(),
        });
    }
    let mut state = GateState::new(g.clone());
    let mut schedule = vec![(0.0, state.mode().clone())];
    for (t, changes) in delayed_input_changes(g, inputs) {
        if t > horizon {
            break;
        }
        if let Some(mode) = state.apply(t, &changes) {
            if t <= 0.0 {
                schedule[0].1 = mode;
            } else {
                schedule.push((t, mode));
            }
        }
    }
    let trajectory = paste(&schedule, &g.initial_state, horizon, &g.family.space, cfg)?;
    let output = digitize(&trajectory, &g.threshold)?;
    let modes = ModeSwitchSignal::new(
        schedule[0].1.id,
        schedule[1..].iter().map(|(t, m)| (*t, m.id)).collect(),
        horizon,
    )?;
    Ok(GateRun {
        output,
        trajectory,
        modes,
        schedule,
    })
}

fn pad_box(dim: usize, lo: f64, hi: f64) -> StateSpace {
    let pad = 0.01 * (hi - lo);
    StateSpace::cube(dim, lo - pad, hi + pad).expect("non-empty box")
}

/// Exponential involution channel parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdmParams {
    pub tau_up: f64,
    pub tau_down: f64,
    pub delta_min: f64,
    pub xi: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            tau_up: 1.0,
            tau_down: 1.0,
            delta_min: 0.1,
            xi: 0.5,
        }
    }
}

/// Single-input channel with `f↑: dV = (1−V)/τ↑` and `f↓: dV = −V/τ↓`,
/// starting at the fixed point of the mode picked by `initial_input`.
pub fn make_idm_channel(p: IdmParams, initial_input: bool) -> GateSpec {
    let space = pad_box(1, 0.0, 1.0);
    let down = Arc::new(ModeFunction::scalar_affine(
        ModeId(0),
        "f_down",
        -1.0 / p.tau_down,
        0.0,
        &space,
    ));
    let up = Arc::new(ModeFunction::scalar_affine(
        ModeId(1),
        "f_up",
        -1.0 / p.tau_up,
        1.0 / p.tau_up,
        &space,
    ));
    let modes = vec![down, up];
    GateSpec {
        kind: "idm".into(),
        input_delays: vec![p.delta_min],
        family: ModeFamily::new(modes.clone(), space),
        choice: Arc::new(TableChoice { modes }),
        initial_inputs: vec![initial_input],
        initial_state: vec![if initial_input { 1.0 } else { 0.0 }],
        threshold: ThresholdSpec::new(p.xi),
    }
}

/// Delay of the symmetric exponential channel (`τ↑ = τ↓ = τ`, `ξ = 1/2`):
/// `δ(T) = δ_min + τ ln(2 − e^{−(T+δ_min)/τ})`.
pub fn idm_delay_closed_form(p: &IdmParams, t: f64) -> f64 {
    let tau = p.tau_up;
    p.delta_min + tau * (2.0 - (-(t + p.delta_min) / tau).exp()).ln()
}

/// Simulated IDM delay as a function of `T`, the time from the previous
/// output transition to the input transition. `rising` selects `δ↑`.
///
/// Cancelled output transitions are located on the analytic continuation of
/// the corresponding closed-form segment.
pub fn idm_delay(p: &IdmParams, rising: bool, t: f64, cfg: &SolverConfig) -> Result<f64, GateError> {
    const FIRST_EDGE: f64 = 1.0;
    let horizon = FIRST_EDGE + 4.0 * (p.tau_up + p.tau_down) + 2.0 * p.delta_min + t.abs() + 10.0;
    let g = Arc::new(make_idm_channel(*p, rising));
    let spec = &g.threshold;
    let fail = |what: &str| GateError::Measurement(format!("{what} (T = {t})"));
    // previous output transition, caused by the first input edge
    let single = BinarySignal::new(
        rising,
        vec![crate::signals::Transition::new(FIRST_EDGE, !rising)],
        horizon,
    )?;
    let run = gate_output(&g, &[single], cfg)?;
    let seg = run.trajectory.segments().last().ok_or_else(|| fail("no segment"))?;
    let prev_out = extended_crossing(seg, spec, 0.0, horizon).ok_or_else(|| fail("no first crossing"))?;
    let second = prev_out + t;
    if second <= FIRST_EDGE {
        return Err(fail("second edge precedes first"));
    }
    let pulse = BinarySignal::new(
        rising,
        vec![
            crate::signals::Transition::new(FIRST_EDGE, !rising),
            crate::signals::Transition::new(second, rising),
        ],
        horizon,
    )?;
    let run = gate_output(&g, &[pulse], cfg)?;
    let seg = run.trajectory.segments().last().ok_or_else(|| fail("no segment"))?;
    if (seg.start() - (second + p.delta_min)).abs() > 1e-9 {
        return Err(fail("second edge did not switch the mode"));
    }
    let out = extended_crossing(seg, spec, -horizon, horizon)
        .ok_or_else(|| fail("no second crossing"))?;
    Ok(out - second)
}

/// Parameters of the four-system two-input NOR model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NorParamsSimple {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
    pub c: f64,
    pub c_int: f64,
    pub vdd: f64,
}

impl Default for NorParamsSimple {
    fn default() -> Self {
        Self {
            r1: 1.0,
            r2: 1.0,
            r3: 1.0,
            r4: 1.0,
            c: 1.0,
            c_int: 1.0,
            vdd: 1.0,
        }
    }
}

/// `(A, b)` of the simple NOR system for inputs `(a, b)`; state `(V_int, V_out)`.
pub fn simple_nor_system(p: &NorParamsSimple, a_in: bool, b_in: bool) -> (DMatrix<f64>, DVector<f64>) {
    let (c, ci) = (p.c, p.c_int);
    let (a, b) = match (a_in, b_in) {
        (true, true) => (
            [0.0, 0.0, 0.0, -(1.0 / (c * p.r3) + 1.0 / (c * p.r4))],
            [0.0, 0.0],
        ),
        (true, false) => (
            [
                -1.0 / (ci * p.r2),
                1.0 / (ci * p.r2),
                1.0 / (c * p.r2),
                -(1.0 / (c * p.r2) + 1.0 / (c * p.r3)),
            ],
            [0.0, 0.0],
        ),
        (false, true) => (
            [-1.0 / (ci * p.r1), 0.0, 0.0, -1.0 / (c * p.r4)],
            [p.vdd / (ci * p.r1), 0.0],
        ),
        (false, false) => (
            [
                -(1.0 / (ci * p.r1) + 1.0 / (ci * p.r2)),
                1.0 / (ci * p.r2),
                1.0 / (c * p.r2),
                -1.0 / (c * p.r2),
            ],
            [p.vdd / (ci * p.r1), 0.0],
        ),
    };
    (
        DMatrix::from_row_slice(2, 2, &a),
        DVector::from_row_slice(&b),
    )
}

/// Steady state `(V_int, V_out)` used as initial state for each input vector.
/// In system (1,1) the internal node is isolated; it is taken at `V_DD`.
pub fn simple_nor_rest_state(p: &NorParamsSimple, a_in: bool, b_in: bool) -> Vec<f64> {
    match (a_in, b_in) {
        (false, false) => vec![p.vdd, p.vdd],
        (true, false) => vec![0.0, 0.0],
        (false, true) | (true, true) => vec![p.vdd, 0.0],
    }
}

pub fn make_simple_nor(
    p: NorParamsSimple,
    delta_a: f64,
    delta_b: f64,
    initial_inputs: [bool; 2],
) -> GateSpec {
    let space = pad_box(2, 0.0, p.vdd);
    let names = ["sys(0,0)", "sys(1,0)", "sys(0,1)", "sys(1,1)"];
    let modes: Vec<Arc<ModeFunction>> = (0..4)
        .map(|idx| {
            let (a_in, b_in) = (idx & 1 == 1, idx & 2 == 2);
            let (a, b) = simple_nor_system(&p, a_in, b_in);
            Arc::new(ModeFunction::affine(ModeId(idx as u32), names[idx], a, b, &space))
        })
        .collect();
    GateSpec {
        kind: "simple_nor".into(),
        input_delays: vec![delta_a, delta_b],
        family: ModeFamily::new(modes.clone(), space),
        choice: Arc::new(TableChoice { modes }),
        initial_inputs: initial_inputs.to_vec(),
        initial_state: simple_nor_rest_state(&p, initial_inputs[0], initial_inputs[1]),
        threshold: ThresholdSpec::new(p.vdd / 2.0).on_component(1),
    }
}

/// Parameters of the single-state NOR model with time-dependent pMOS
/// resistances `α_i/(t − t_on) + R_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NorParamsAdvanced {
    pub alpha1: f64,
    pub alpha2: f64,
    /// Mean pMOS on-resistance `(R_pA + R_pB)/2`.
    pub r: f64,
    pub r_na: f64,
    pub r_nb: f64,
    pub c: f64,
    pub vdd: f64,
}

impl Default for NorParamsAdvanced {
    fn default() -> Self {
        Self {
            alpha1: 1.0,
            alpha2: 1.0,
            r: 1.0,
            r_na: 1.0,
            r_nb: 1.0,
            c: 1.0,
            vdd: 1.0,
        }
    }
}

/// `α/τ` with the conventions `α = 0 → 0` and `τ ≤ 0 → ∞`.
fn turn_on_term(alpha: f64, tau: f64) -> f64 {
    if alpha == 0.0 {
        0.0
    } else if tau <= 0.0 {
        f64::INFINITY
    } else {
        alpha / tau
    }
}

/// Pull-up conductance `1/(C(α1/τ1 + α2/τ2 + 2R))`, zero while a pMOS is off.
pub fn advanced_pull_up(p: &NorParamsAdvanced, tau1: f64, tau2: f64) -> f64 {
    let r = turn_on_term(p.alpha1, tau1) + turn_on_term(p.alpha2, tau2) + 2.0 * p.r;
    if r.is_infinite() {
        0.0
    } else {
        1.0 / (p.c * r)
    }
}

/// Mode ids of the advanced NOR model.
pub mod advanced_ids {
    use crate::signals::ModeId;
    pub const F1: ModeId = ModeId(1);
    pub const F2: ModeId = ModeId(2);
    pub const F3: ModeId = ModeId(3);
    pub const F4: ModeId = ModeId(4);
    pub const F5: ModeId = ModeId(5);
    pub const F6: ModeId = ModeId(6);
    /// Both pMOS fully on; used as the initial mode for inputs (0,0).
    pub const HIGH: ModeId = ModeId(7);
}

#[derive(Debug, Clone)]
struct AdvancedNorChoice {
    p: NorParamsAdvanced,
    f1: Arc<ModeFunction>,
    f2: Arc<ModeFunction>,
    f6: Arc<ModeFunction>,
    high: Arc<ModeFunction>,
    lipschitz: f64,
    bound: f64,
}

impl AdvancedNorChoice {
    /// Pull-up mode entered at mode-clock zero; pMOS A turned on `lag_a`
    /// before entry and pMOS B `lag_b` before entry.
    fn pull_up(&self, id: ModeId, lag_a: f64, lag_b: f64) -> Arc<ModeFunction> {
        let p = self.p;
        let name = match id {
            advanced_ids::F3 => "f3",
            advanced_ids::F4 => "f4",
            _ => "f5",
        };
        Arc::new(ModeFunction::time_varying(
            id,
            name,
            1,
            ModeClock::SinceEntry,
            Arc::new(move |t, a, b| {
                let g = advanced_pull_up(&p, t + lag_a, t + lag_b);
                a[0] = -g;
                b[0] = g * p.vdd;
            }),
            self.lipschitz,
            self.bound,
        ))
    }
}

impl ChoiceFunction for AdvancedNorChoice {
    fn select(&self, ctx: &ChoiceContext<'_>) -> Arc<ModeFunction> {
        match (ctx.current[0], ctx.current[1]) {
            (true, false) => self.f1.clone(),
            (false, true) => self.f2.clone(),
            (true, true) => self.f6.clone(),
            (false, false) => match (ctx.previous[0], ctx.previous[1]) {
                // A just fell; B fell Δ earlier
                (true, false) => {
                    self.pull_up(advanced_ids::F3, 0.0, ctx.time - ctx.last_change[1])
                }
                (false, true) => {
                    self.pull_up(advanced_ids::F4, ctx.time - ctx.last_change[0], 0.0)
                }
                (true, true) => self.pull_up(advanced_ids::F5, 0.0, 0.0),
                (false, false) => self.high.clone(),
            },
        }
    }
}

pub fn make_advanced_nor(
    p: NorParamsAdvanced,
    delta_a: f64,
    delta_b: f64,
    initial_inputs: [bool; 2],
) -> GateSpec {
    let space = pad_box(1, 0.0, p.vdd);
    let f1 = Arc::new(ModeFunction::scalar_affine(
        advanced_ids::F1,
        "f1",
        -1.0 / (p.c * p.r_na),
        0.0,
        &space,
    ));
    let f2 = Arc::new(ModeFunction::scalar_affine(
        advanced_ids::F2,
        "f2",
        -1.0 / (p.c * p.r_nb),
        0.0,
        &space,
    ));
    let f6 = Arc::new(ModeFunction::scalar_affine(
        advanced_ids::F6,
        "f6",
        -(1.0 / p.r_na + 1.0 / p.r_nb) / p.c,
        0.0,
        &space,
    ));
    let g_max = 1.0 / (2.0 * p.r * p.c);
    let high = Arc::new(ModeFunction::scalar_affine(
        advanced_ids::HIGH,
        "high",
        -g_max,
        g_max * p.vdd,
        &space,
    ));
    let fixed = [&f1, &f2, &f6, &high];
    let lipschitz = fixed.iter().map(|m| m.lipschitz).fold(0.0, f64::max);
    let bound = fixed.iter().map(|m| m.bound).fold(0.0, f64::max);
    let choice = AdvancedNorChoice {
        p,
        f1: f1.clone(),
        f2: f2.clone(),
        f6: f6.clone(),
        high: high.clone(),
        lipschitz,
        bound,
    };
    let modes = vec![
        f1,
        f2,
        choice.pull_up(advanced_ids::F3, 0.0, f64::INFINITY),
        choice.pull_up(advanced_ids::F4, f64::INFINITY, 0.0),
        choice.pull_up(advanced_ids::F5, 0.0, 0.0),
        f6,
        high,
    ];
    let initial_state = if initial_inputs == [false, false] {
        vec![p.vdd]
    } else {
        vec![0.0]
    };
    GateSpec {
        kind: "advanced_nor".into(),
        input_delays: vec![delta_a, delta_b],
        family: ModeFamily::new(modes, space),
        choice: Arc::new(choice),
        initial_inputs: initial_inputs.to_vec(),
        initial_state,
        threshold: ThresholdSpec::new(p.vdd / 2.0),
    }
}

/// Heater plant: `dx = −0.1x` while the delayed control is 0 and
/// `dx = 5 − 0.1x` while it is 1.
pub fn make_heater_plant(delta: f64, xi: f64, x0: f64, initial_input: bool) -> GateSpec {
    let space = StateSpace::cube(1, -1.0, 60.0).expect("valid box");
    let off = Arc::new(ModeFunction::scalar_affine(ModeId(0), "off", -0.1, 0.0, &space));
    let on = Arc::new(ModeFunction::scalar_affine(ModeId(1), "on", -0.1, 5.0, &space));
    let modes = vec![off, on];
    GateSpec {
        kind: "heater".into(),
        input_delays: vec![delta],
        family: ModeFamily::new(modes.clone(), space),
        choice: Arc::new(TableChoice { modes }),
        initial_inputs: vec![initial_input],
        initial_state: vec![x0],
        threshold: ThresholdSpec::new(xi),
    }
}

/// Boolean function of `arity` inputs, indexed as in [`input_index`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruthTable {
    arity: usize,
    outputs: Vec<bool>,
}

impl TruthTable {
    pub fn new(arity: usize, outputs: Vec<bool>) -> Option<Self> {
        (arity >= 1 && outputs.len() == 1 << arity).then_some(Self { arity, outputs })
    }

    pub fn from_fn(arity: usize, f: impl Fn(&[bool]) -> bool) -> Self {
        let outputs = (0..1usize << arity)
            .map(|idx| {
                let bits: Vec<bool> = (0..arity).map(|j| idx >> j & 1 == 1).collect();
                f(&bits)
            })
            .collect();
        Self { arity, outputs }
    }

    /// Named gates: `buf`, `not`, `and`, `or`, `nand`, `nor`, `xor`, `xnor`.
    pub fn named(name: &str, arity: usize) -> Option<Self> {
        let f: fn(&[bool]) -> bool = match name {
            "buf" if arity == 1 => |b| b[0],
            "not" if arity == 1 => |b| !b[0],
            "and" => |b| b.iter().all(|&x| x),
            "or" => |b| b.iter().any(|&x| x),
            "nand" => |b| !b.iter().all(|&x| x),
            "nor" => |b| !b.iter().any(|&x| x),
            "xor" => |b| b.iter().filter(|&&x| x).count() % 2 == 1,
            "xnor" => |b| b.iter().filter(|&&x| x).count() % 2 == 0,
            _ => return None,
        };
        (arity >= 1).then(|| Self::from_fn(arity, f))
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn outputs(&self) -> &[bool] {
        &self.outputs
    }

    pub fn eval(&self, bits: &[bool]) -> bool {
        self.outputs[input_index(bits)]
    }
}

/// Fast-exponential realization of a Boolean gate: the modes drive `V`
/// toward the truth-table value with time constant `tau_fast`
/// (default `1e-3 · min δ`), thresholded at 0.5.
pub fn make_boolean_gate(
    table: &TruthTable,
    delays: Vec<f64>,
    initial_inputs: Vec<bool>,
    tau_fast: Option<f64>,
) -> GateSpec {
    assert_eq!(delays.len(), table.arity(), "one delay per input");
    assert_eq!(initial_inputs.len(), table.arity(), "one initial value per input");
    let min_delay = delays.iter().copied().fold(f64::INFINITY, f64::min);
    let tau = tau_fast.unwrap_or(if min_delay > 0.0 && min_delay.is_finite() {
        1e-3 * min_delay
    } else {
        1e-6
    });
    let space = pad_box(1, 0.0, 1.0);
    let low = Arc::new(ModeFunction::scalar_affine(ModeId(0), "low", -1.0 / tau, 0.0, &space));
    let high = Arc::new(ModeFunction::scalar_affine(
        ModeId(1),
        "high",
        -1.0 / tau,
        1.0 / tau,
        &space,
    ));
    let modes: Vec<Arc<ModeFunction>> = table
        .outputs()
        .iter()
        .map(|&v| if v { high.clone() } else { low.clone() })
        .collect();
    let x0 = if table.eval(&initial_inputs) { 1.0 } else { 0.0 };
    GateSpec {
        kind: "boolean".into(),
        input_delays: delays,
        family: ModeFamily::new(vec![low, high], space),
        choice: Arc::new(TableChoice { modes }),
        initial_inputs,
        initial_state: vec![x0],
        threshold: ThresholdSpec::new(0.5),
    }
}

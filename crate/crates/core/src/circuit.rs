//! Circuits of digitized hybrid gates: validation, execution with causal
//! depths, and k-unrolling.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::gates::{GateSpec, GateState};
use crate::modes::{solve_mode, ModeError, Segment, SolverConfig};
use crate::signals::{BinarySignal, SignalError, TIME_EPS};
use crate::threshold::{segment_crossings, ThresholdError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("duplicate vertex id `{0}`")]
    DuplicateId(String),
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("circuit is invalid: {0}")]
    Invalid(String),
    #[error("no signal for input port `{0}`")]
    MissingInput(String),
    #[error("signal for `{0}` has horizon {1}, expected {2}")]
    InputHorizon(String, f64, f64),
    #[error("input port `{port}` starts at {got} but gate `{gate}` slot {slot} declares {declared}")]
    InputInitialMismatch {
        port: String,
        gate: String,
        slot: usize,
        declared: bool,
        got: bool,
    },
    #[error("event cap of {0} exceeded")]
    EventCap(usize),
    #[error("gate `{gate}`: {source}")]
    Mode { gate: String, source: ModeError },
    #[error("gate `{gate}`: {source}")]
    Threshold {
        gate: String,
        source: ThresholdError,
    },
    #[error(transparent)]
    Signal(#[from] SignalError),
}

#[derive(Debug, Clone)]
pub enum VertexKind {
    Input,
    Output,
    Gate(Arc<GateSpec>),
    /// Gate without inputs and a fixed output value.
    Constant(bool),
}

#[derive(Debug, Clone)]
pub struct Vertex {
    pub id: String,
    pub kind: VertexKind,
}

/// Zero-delay connection from a vertex output into an input slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub slot: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Circuit {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    index: HashMap<String, usize>,
}

impl Circuit {
    pub fn new() -> Self {
        Self::default()
    }

    fn add(&mut self, id: &str, kind: VertexKind) -> Result<usize, CircuitError> {
        if self.index.contains_key(id) {
            return Err(CircuitError::DuplicateId(id.to_string()));
        }
        let v = self.vertices.len();
        self.vertices.push(Vertex {
            id: id.to_string(),
            kind,
        });
        self.index.insert(id.to_string(), v);
        Ok(v)
    }

    pub fn add_input(&mut self, id: &str) -> Result<usize, CircuitError> {
        self.add(id, VertexKind::Input)
    }

    pub fn add_output(&mut self, id: &str) -> Result<usize, CircuitError> {
        self.add(id, VertexKind::Output)
    }

    pub fn add_gate(&mut self, id: &str, spec: GateSpec) -> Result<usize, CircuitError> {
        self.add(id, VertexKind::Gate(Arc::new(spec)))
    }

    pub fn add_shared_gate(&mut self, id: &str, spec: Arc<GateSpec>) -> Result<usize, CircuitError> {
        self.add(id, VertexKind::Gate(spec))
    }

    pub fn add_constant(&mut self, id: &str, value: bool) -> Result<usize, CircuitError> {
        self.add(id, VertexKind::Constant(value))
    }

    /// Connects the output of `from` to input `slot` of `to`.
    pub fn connect(&mut self, from: &str, to: &str, slot: usize) -> Result<(), CircuitError> {
        let from = self.index_of(from)?;
        let to = self.index_of(to)?;
        self.edges.push(Edge { from, to, slot });
        Ok(())
    }

    pub fn index_of(&self, id: &str) -> Result<usize, CircuitError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| CircuitError::UnknownVertex(id.to_string()))
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> &Vertex {
        &self.vertices[v]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn input_ports(&self) -> Vec<usize> {
        self.kind_indices(|k| matches!(k, VertexKind::Input))
    }

    pub fn output_ports(&self) -> Vec<usize> {
        self.kind_indices(|k| matches!(k, VertexKind::Output))
    }

    pub fn gates(&self) -> Vec<usize> {
        self.kind_indices(|k| matches!(k, VertexKind::Gate(_)))
    }

    fn kind_indices(&self, pred: impl Fn(&VertexKind) -> bool) -> Vec<usize> {
        (0..self.len()).filter(|&v| pred(&self.vertices[v].kind)).collect()
    }

    /// Driver of each input slot of `v` (first edge wins if several).
    pub fn drivers(&self, v: usize) -> Vec<Option<usize>> {
        let arity = match &self.vertices[v].kind {
            VertexKind::Gate(g) => g.arity(),
            VertexKind::Output => 1,
            _ => 0,
        };
        let mut out = vec![None; arity];
        for e in &self.edges {
            if e.to == v && e.slot < arity && out[e.slot].is_none() {
                out[e.slot] = Some(e.from);
            }
        }
        out
    }

    fn fanout(&self) -> Vec<Vec<(usize, usize)>> {
        let mut out = vec![Vec::new(); self.len()];
        for e in &self.edges {
            out[e.from].push((e.to, e.slot));
        }
        out
    }

    /// Digitized value of `v` at time zero, if it does not depend on inputs.
    fn static_initial(&self, v: usize) -> Option<bool> {
        match &self.vertices[v].kind {
            VertexKind::Gate(g) => Some(g.initial_output()),
            VertexKind::Constant(b) => Some(*b),
            _ => None,
        }
    }

    /// Checks rules C3–C5 and strict causality.
    pub fn validate(&self) -> Validation {
        let mut diagnostics = Vec::new();
        let mut incoming = vec![0usize; self.len()];
        let mut outgoing = vec![0usize; self.len()];
        let mut slot_count: HashMap<(usize, usize), usize> = HashMap::new();
        for e in &self.edges {
            incoming[e.to] += 1;
            outgoing[e.from] += 1;
            *slot_count.entry((e.to, e.slot)).or_default() += 1;
        }
        let mut delta_min = f64::INFINITY;
        for (v, vx) in self.vertices.iter().enumerate() {
            let id = vx.id.clone();
            match &vx.kind {
                VertexKind::Input => {
                    if incoming[v] > 0 {
                        diagnostics.push(Diagnostic::InputHasIncoming { vertex: id });
                    }
                }
                VertexKind::Constant(_) => {
                    if incoming[v] > 0 {
                        diagnostics.push(Diagnostic::ConstantHasIncoming { vertex: id });
                    }
                }
                VertexKind::Output => {
                    if incoming[v] != 1 {
                        diagnostics.push(Diagnostic::OutputIncoming {
                            vertex: id.clone(),
                            count: incoming[v],
                        });
                    }
                    if outgoing[v] > 0 {
                        diagnostics.push(Diagnostic::OutputHasOutgoing { vertex: id });
                    }
                }
                VertexKind::Gate(g) => {
                    for (slot, &delay) in g.input_delays.iter().enumerate() {
                        match slot_count.get(&(v, slot)).copied().unwrap_or(0) {
                            0 => diagnostics.push(Diagnostic::SlotUnfed {
                                gate: id.clone(),
                                slot,
                            }),
                            1 => {}
                            count => diagnostics.push(Diagnostic::SlotMultiplyFed {
                                gate: id.clone(),
                                slot,
                                count,
                            }),
                        }
                        if delay.is_nan() || delay <= 0.0 {
                            diagnostics.push(Diagnostic::NonPositiveDelay {
                                gate: id.clone(),
                                slot,
                                delay,
                            });
                        }
                        delta_min = delta_min.min(delay);
                    }
                }
            }
        }
        for e in &self.edges {
            let target = &self.vertices[e.to];
            let arity = match &target.kind {
                VertexKind::Gate(g) => g.arity(),
                VertexKind::Output => 1,
                _ => usize::MAX,
            };
            if arity != usize::MAX && e.slot >= arity {
                diagnostics.push(Diagnostic::SlotOutOfRange {
                    gate: target.id.clone(),
                    slot: e.slot,
                });
            }
        }
        for (v, vx) in self.vertices.iter().enumerate() {
            let VertexKind::Gate(g) = &vx.kind else {
                continue;
            };
            for (slot, driver) in self.drivers(v).into_iter().enumerate() {
                let Some(d) = driver else { continue };
                if let Some(value) = self.static_initial(d) {
                    if value != g.initial_inputs[slot] {
                        diagnostics.push(Diagnostic::InitialMismatch {
                            gate: vx.id.clone(),
                            slot,
                            driver: self.vertices[d].id.clone(),
                            declared: g.initial_inputs[slot],
                            actual: value,
                        });
                    }
                }
            }
        }
        Validation {
            diagnostics,
            delta_min: delta_min.is_finite().then_some(delta_min),
        }
    }
}

/// One violated circuit rule.
#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    InputHasIncoming { vertex: String },
    ConstantHasIncoming { vertex: String },
    OutputIncoming { vertex: String, count: usize },
    OutputHasOutgoing { vertex: String },
    SlotUnfed { gate: String, slot: usize },
    SlotMultiplyFed { gate: String, slot: usize, count: usize },
    SlotOutOfRange { gate: String, slot: usize },
    NonPositiveDelay { gate: String, slot: usize, delay: f64 },
    InitialMismatch {
        gate: String,
        slot: usize,
        driver: String,
        declared: bool,
        actual: bool,
    },
}

impl Diagnostic {
    /// Short rule tag: `C3`, `C4`, `C5`, `causality` or `initial`.
    pub fn rule(&self) -> &'static str {
        match self {
            Self::InputHasIncoming { .. } | Self::ConstantHasIncoming { .. } => "C3",
            Self::OutputIncoming { .. } | Self::OutputHasOutgoing { .. } => "C4",
            Self::SlotUnfed { .. } | Self::SlotMultiplyFed { .. } | Self::SlotOutOfRange { .. } => {
                "C5"
            }
            Self::NonPositiveDelay { .. } => "causality",
            Self::InitialMismatch { .. } => "initial",
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] ", self.rule())?;
        match self {
            Self::InputHasIncoming { vertex } => write!(f, "input port `{vertex}` has incoming edges"),
            Self::ConstantHasIncoming { vertex } => {
                write!(f, "constant `{vertex}` has incoming edges")
            }
            Self::OutputIncoming { vertex, count } => {
                write!(f, "output port `{vertex}` has {count} incoming edges, expected 1")
            }
            Self::OutputHasOutgoing { vertex } => {
                write!(f, "output port `{vertex}` has outgoing edges")
            }
            Self::SlotUnfed { gate, slot } => write!(f, "gate `{gate}` slot {slot} is not connected"),
            Self::SlotMultiplyFed { gate, slot, count } => {
                write!(f, "gate `{gate}` slot {slot} is fed by {count} edges")
            }
            Self::SlotOutOfRange { gate, slot } => {
                write!(f, "edge into `{gate}` uses nonexistent slot {slot}")
            }
            Self::NonPositiveDelay { gate, slot, delay } => {
                write!(f, "gate `{gate}` slot {slot} has delay {delay}, must be positive")
            }
            Self::InitialMismatch {
                gate,
                slot,
                driver,
                declared,
                actual,
            } => write!(
                f,
                "gate `{gate}` slot {slot} declares initial {} but driver `{driver}` starts at {}",
                u8::from(*declared),
                u8::from(*actual)
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub diagnostics: Vec<Diagnostic>,
    /// `δ_min^C`, the smallest input delay over all gates.
    pub delta_min: Option<f64>,
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

/// Input port signals keyed by port id.
pub type InputSignals = BTreeMap<String, BinarySignal>;

#[derive(Debug, Clone, PartialEq)]
pub struct ExecuteOptions {
    pub horizon: f64,
    pub solver: SolverConfig,
    pub event_cap: usize,
    /// Shuffles every batch of queue insertions with this seed.
    pub insertion_seed: Option<u64>,
}

impl ExecuteOptions {
    pub fn new(horizon: f64) -> Self {
        Self {
            horizon,
            solver: SolverConfig::default(),
            event_cap: 1_000_000,
            insertion_seed: None,
        }
    }
}

/// A committed transition with its bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRecord {
    pub time: f64,
    pub value: bool,
    pub depth: u32,
    /// Index `ℓ` of the iteration that committed the transition.
    pub iteration: usize,
    /// Time of the latest input transition that caused it (gates only).
    pub cause: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub horizon: f64,
    pub ids: Vec<String>,
    pub initial: Vec<bool>,
    pub records: Vec<Vec<TransitionRecord>>,
    /// `t_1 = 0 < t_2 < …`, one entry per iteration.
    pub iteration_times: Vec<f64>,
    pub events_processed: usize,
    pub mode_switches: usize,
}

impl Execution {
    pub fn signal(&self, v: usize) -> BinarySignal {
        BinarySignal::from_changes(
            self.initial[v],
            self.records[v].iter().map(|r| (r.time, r.value)),
            self.horizon,
        )
        .expect("records are time-ordered")
    }

    pub fn vertex(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn signal_of(&self, id: &str) -> Option<BinarySignal> {
        self.vertex(id).map(|v| self.signal(v))
    }

    /// Number of transitions per causal depth.
    pub fn depth_histogram(&self) -> BTreeMap<u32, usize> {
        let mut h = BTreeMap::new();
        for r in self.records.iter().flatten() {
            *h.entry(r.depth).or_default() += 1;
        }
        h
    }
}

type Arrival = (f64, usize, bool, u32, f64);

#[derive(Debug, Clone, Copy)]
enum EventKind {
    Output {
        vertex: usize,
        value: bool,
        depth: u32,
        epoch: u64,
        cause: Option<f64>,
    },
    Arrival {
        gate: usize,
        slot: usize,
        value: bool,
        depth: u32,
        cause: f64,
    },
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    kind: EventKind,
}

impl Event {
    fn key(&self) -> (u8, usize, usize, u64, bool) {
        match self.kind {
            EventKind::Output {
                vertex,
                value,
                epoch,
                ..
            } => (0, vertex, 0, epoch, value),
            EventKind::Arrival {
                gate, slot, value, ..
            } => (1, gate, slot, 0, value),
        }
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    /// Reversed so that `BinaryHeap` pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.key().cmp(&self.key()))
    }
}

struct GateRuntime {
    state: GateState,
    segment: Segment,
    epoch: u64,
    output: bool,
    input_depth: Vec<Option<u32>>,
    input_cause: Vec<f64>,
}

/// SplitMix64, used only to permute queue insertions.
struct Shuffler(u64);

impl Shuffler {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = (self.next() % (i as u64 + 1)) as usize;
            items.swap(i, j);
        }
    }
}

struct Engine<'a> {
    c: &'a Circuit,
    opts: &'a ExecuteOptions,
    fanout: Vec<Vec<(usize, usize)>>,
    gates: HashMap<usize, GateRuntime>,
    heap: BinaryHeap<Event>,
    shuffler: Option<Shuffler>,
    current: Vec<bool>,
    records: Vec<Vec<TransitionRecord>>,
    delta_min: f64,
}

impl Engine<'_> {
    fn push_all(&mut self, mut events: Vec<Event>) {
        if let Some(s) = self.shuffler.as_mut() {
            s.shuffle(&mut events);
        }
        self.heap.extend(events);
    }

    fn gate_id(&self, v: usize) -> String {
        self.c.vertices[v].id.clone()
    }

    /// Pending output transitions of gate `v` from its current segment.
    fn schedule_crossings(
        &self,
        v: usize,
        from: f64,
        depth: u32,
        cause: Option<f64>,
    ) -> Result<Vec<Event>, CircuitError> {
        let rt = &self.gates[&v];
        let spec = &rt.state.spec().threshold;
        let crossings = segment_crossings(&rt.segment, spec, from, self.opts.horizon)
            .map_err(|source| CircuitError::Threshold {
                gate: self.gate_id(v),
                source,
            })?;
        let mut level = rt.output;
        let mut out = Vec::new();
        for tr in crossings {
            if tr.value == level {
                continue;
            }
            level = tr.value;
            if let Some(c) = cause {
                debug_assert!(tr.time >= c + self.delta_min - 1e-9);
            }
            out.push(Event {
                time: tr.time,
                kind: EventKind::Output {
                    vertex: v,
                    value: tr.value,
                    depth,
                    epoch: rt.epoch,
                    cause,
                },
            });
        }
        Ok(out)
    }

    fn commit(&mut self, t: f64, v: usize, value: bool, depth: u32, iteration: usize, cause: Option<f64>) -> Vec<Event> {
        let rec = TransitionRecord {
            time: t,
            value,
            depth,
            iteration,
            cause,
        };
        self.records[v].push(rec);
        self.current[v] = value;
        if let Some(rt) = self.gates.get_mut(&v) {
            rt.output = value;
        }
        let mut out = Vec::new();
        for &(w, slot) in &self.fanout[v] {
            match &self.c.vertices[w].kind {
                VertexKind::Output => {
                    self.records[w].push(TransitionRecord { cause: None, ..rec });
                    self.current[w] = value;
                }
                VertexKind::Gate(g) => {
                    let at = t + g.input_delays[slot];
                    if at <= self.opts.horizon {
                        out.push(Event {
                            time: at,
                            kind: EventKind::Arrival {
                                gate: w,
                                slot,
                                value,
                                depth,
                                cause: t,
                            },
                        });
                    }
                }
                _ => {}
            }
        }
        out
    }

    fn switch(&mut self, v: usize, arrivals: &[(f64, usize, bool, u32, f64)]) -> Result<Vec<Event>, CircuitError> {
        let t = arrivals.iter().map(|a| a.0).fold(f64::INFINITY, f64::min);
        let horizon = self.opts.horizon;
        let rt = self.gates.get_mut(&v).expect("gate runtime");
        let mut changes = Vec::with_capacity(arrivals.len());
        for &(_, slot, value, depth, cause) in arrivals {
            rt.input_depth[slot] = Some(rt.input_depth[slot].map_or(depth, |d| d.max(depth)));
            rt.input_cause[slot] = cause;
            changes.push((slot, value));
        }
        let Some(mode) = rt.state.apply(t, &changes) else {
            return Ok(Vec::new());
        };
        rt.epoch += 1;
        if t >= horizon {
            return Ok(Vec::new());
        }
        let x = rt.segment.eval(t);
        let space = rt.state.spec().family.space.clone();
        rt.segment = solve_mode(&mode, &x, t, horizon, &space, &self.opts.solver).map_err(|source| {
            CircuitError::Mode {
                gate: self.c.vertices[v].id.clone(),
                source,
            }
        })?;
        let depth = 1 + rt.input_depth.iter().flatten().copied().max().unwrap_or(0);
        let cause = rt.input_cause.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.schedule_crossings(v, t, depth, Some(cause))
    }
}

/// Builds the unique execution of `c` on `inputs` over `[0, opts.horizon]`.
///
/// Iterations pop every event within [`TIME_EPS`] of the earliest pending
/// time. Output transitions are committed first; then each gate applies its
/// delayed-input changes atomically, and on a mode change discards its
/// pending transitions and reschedules from the new trajectory.
pub fn execute(c: &Circuit, inputs: &InputSignals, opts: &ExecuteOptions) -> Result<Execution, CircuitError> {
    let validation = c.validate();
    if !validation.is_ok() {
        let text: Vec<String> = validation.diagnostics.iter().map(|d| d.to_string()).collect();
        return Err(CircuitError::Invalid(text.join("; ")));
    }
    let horizon = opts.horizon;
    let n = c.len();
    let mut current = vec![false; n];
    let mut initial_events = Vec::new();
    for v in c.input_ports() {
        let id = &c.vertices[v].id;
        let s = inputs
            .get(id)
            .ok_or_else(|| CircuitError::MissingInput(id.clone()))?;
        if s.horizon() != horizon {
            return Err(CircuitError::InputHorizon(id.clone(), s.horizon(), horizon));
        }
        current[v] = s.initial();
        for tr in s.transitions() {
            initial_events.push(Event {
                time: tr.time,
                kind: EventKind::Output {
                    vertex: v,
                    value: tr.value,
                    depth: 0,
                    epoch: 0,
                    cause: None,
                },
            });
        }
    }
    for (v, vx) in c.vertices.iter().enumerate() {
        match &vx.kind {
            VertexKind::Gate(g) => current[v] = g.initial_output(),
            VertexKind::Constant(b) => current[v] = *b,
            _ => {}
        }
    }
    for v in c.output_ports() {
        if let Some(Some(d)) = c.drivers(v).first() {
            current[v] = current[*d];
        }
    }
    let mut gates = HashMap::new();
    for v in c.gates() {
        let VertexKind::Gate(g) = &c.vertices[v].kind else {
            unreachable!()
        };
        for (slot, driver) in c.drivers(v).into_iter().enumerate() {
            let d = driver.expect("validated");
            if matches!(c.vertices[d].kind, VertexKind::Input) && current[d] != g.initial_inputs[slot] {
                return Err(CircuitError::InputInitialMismatch {
                    port: c.vertices[d].id.clone(),
                    gate: vx_id(c, v),
                    slot,
                    declared: g.initial_inputs[slot],
                    got: current[d],
                });
            }
        }
        let state = GateState::new(g.clone());
        let segment = solve_mode(
            state.mode(),
            &g.initial_state,
            0.0,
            horizon,
            &g.family.space,
            &opts.solver,
        )
        .map_err(|source| CircuitError::Mode {
            gate: vx_id(c, v),
            source,
        })?;
        gates.insert(
            v,
            GateRuntime {
                state,
                segment,
                epoch: 0,
                output: g.initial_output(),
                input_depth: vec![None; g.arity()],
                input_cause: vec![f64::NEG_INFINITY; g.arity()],
            },
        );
    }
    let mut engine = Engine {
        c,
        opts,
        fanout: c.fanout(),
        gates,
        heap: BinaryHeap::new(),
        shuffler: opts.insertion_seed.map(Shuffler),
        current: current.clone(),
        records: vec![Vec::new(); n],
        delta_min: validation.delta_min.unwrap_or(f64::INFINITY),
    };
    for v in c.gates() {
        initial_events.extend(engine.schedule_crossings(v, 0.0, 0, None)?);
    }
    engine.push_all(initial_events);

    let mut iteration = 1usize;
    let mut iteration_times = vec![0.0];
    let mut events_processed = 0usize;
    let mut mode_switches = 0usize;
    while let Some(first) = engine.heap.peek().copied() {
        let t = first.time;
        if t > horizon {
            break;
        }
        let mut batch = Vec::new();
        while let Some(e) = engine.heap.peek() {
            if e.time > t + TIME_EPS {
                break;
            }
            batch.push(engine.heap.pop().expect("peeked"));
        }
        events_processed += batch.len();
        if events_processed > opts.event_cap {
            return Err(CircuitError::EventCap(opts.event_cap));
        }
        let live: Vec<Event> = batch
            .iter()
            .copied()
            .filter(|e| match e.kind {
                EventKind::Output { vertex, epoch, .. } => engine
                    .gates
                    .get(&vertex)
                    .is_none_or(|rt| rt.epoch == epoch),
                EventKind::Arrival { .. } => false,
            })
            .collect();
        if !live.is_empty() && t > TIME_EPS {
            iteration += 1;
            iteration_times.push(t);
        }
        let mut new_events = Vec::new();
        for e in live {
            if let EventKind::Output {
                vertex,
                value,
                depth,
                cause,
                ..
            } = e.kind
            {
                debug_assert_ne!(engine.current[vertex], value);
                new_events.extend(engine.commit(e.time, vertex, value, depth, iteration, cause));
            }
        }
        // per gate: (time, slot, value, depth, cause)
        let mut arrivals: BTreeMap<usize, Vec<Arrival>> = BTreeMap::new();
        for e in &batch {
            if let EventKind::Arrival {
                gate,
                slot,
                value,
                depth,
                cause,
            } = e.kind
            {
                arrivals
                    .entry(gate)
                    .or_default()
                    .push((e.time, slot, value, depth, cause));
            }
        }
        for (gate, list) in arrivals {
            let before = engine.gates[&gate].epoch;
            new_events.extend(engine.switch(gate, &list)?);
            if engine.gates[&gate].epoch != before {
                mode_switches += 1;
            }
        }
        engine.push_all(new_events);
    }
    Ok(Execution {
        horizon,
        ids: c.vertices.iter().map(|v| v.id.clone()).collect(),
        initial: current,
        records: engine.records,
        iteration_times,
        events_processed,
        mode_switches,
    })
}

fn vx_id(c: &Circuit, v: usize) -> String {
    c.vertices[v].id.clone()
}

/// `z(Γ) ∈ ℕ₀ ∪ {∞}`; `Finite` sorts below `Infinite`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ZValue {
    Finite(u32),
    Infinite,
}

impl ZValue {
    pub fn admits(&self, depth: u32) -> bool {
        match self {
            Self::Finite(z) => depth <= *z,
            Self::Infinite => true,
        }
    }

    fn succ(self) -> Self {
        match self {
            Self::Finite(z) => Self::Finite(z + 1),
            Self::Infinite => Self::Infinite,
        }
    }
}

impl fmt::Display for ZValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Finite(z) => write!(f, "{z}"),
            Self::Infinite => f.write_str("inf"),
        }
    }
}

/// A forward circuit obtained by unrolling feedback loops.
#[derive(Debug, Clone)]
pub struct UnrolledCircuit {
    pub circuit: Circuit,
    /// Original vertex of each copy; `None` for the `X_v` constants.
    pub origin: Vec<Option<usize>>,
    /// Unrolling level `k` of each gate or output copy.
    pub level: Vec<Option<usize>>,
    pub z: Vec<ZValue>,
    pub sink: usize,
}

impl UnrolledCircuit {
    pub fn z_of(&self, id: &str) -> Option<ZValue> {
        self.circuit.index_of(id).ok().map(|v| self.z[v])
    }
}

/// Name of the `k`-th copy of vertex `id`.
pub fn copy_id(id: &str, k: usize) -> String {
    format!("{id}^{k}")
}

/// The `k`-unrolling of `c` from vertex `from`. Input ports and constants are
/// shared between copies; 0-unrolled gates become `X_0`/`X_1`.
pub fn unroll(c: &Circuit, from: &str, k: usize) -> Result<UnrolledCircuit, CircuitError> {
    struct Builder<'a> {
        c: &'a Circuit,
        drivers: Vec<Vec<Option<usize>>>,
        out: Circuit,
        origin: Vec<Option<usize>>,
        level: Vec<Option<usize>>,
        memo: HashMap<(usize, usize), usize>,
    }

    impl Builder<'_> {
        fn vertex(&mut self, id: &str, kind: VertexKind, origin: Option<usize>, level: Option<usize>) -> usize {
            if let Ok(v) = self.out.index_of(id) {
                return v;
            }
            let v = self.out.add(id, kind).expect("fresh id");
            self.origin.push(origin);
            self.level.push(level);
            v
        }

        fn build(&mut self, v: usize, k: usize) -> Result<usize, CircuitError> {
            let key = match self.c.vertices[v].kind {
                VertexKind::Input | VertexKind::Constant(_) => (v, usize::MAX),
                _ => (v, k),
            };
            if let Some(&u) = self.memo.get(&key) {
                return Ok(u);
            }
            let vx = &self.c.vertices[v];
            let u = match &vx.kind {
                VertexKind::Input => self.vertex(&vx.id, VertexKind::Input, Some(v), None),
                VertexKind::Constant(b) => self.vertex(&vx.id, VertexKind::Constant(*b), Some(v), None),
                VertexKind::Output => {
                    let u = self.vertex(&copy_id(&vx.id, k), VertexKind::Output, Some(v), Some(k));
                    let d = self.drivers[v][0].ok_or_else(|| CircuitError::Invalid(format!("`{}` is undriven", vx.id)))?;
                    let du = self.build(d, k)?;
                    self.out.edges.push(Edge { from: du, to: u, slot: 0 });
                    u
                }
                VertexKind::Gate(g) if k == 0 => {
                    let b = g.initial_output();
                    self.vertex(&format!("X_{}", u8::from(b)), VertexKind::Constant(b), None, None)
                }
                VertexKind::Gate(g) => {
                    let u = self.vertex(&copy_id(&vx.id, k), VertexKind::Gate(g.clone()), Some(v), Some(k));
                    for (slot, d) in self.drivers[v].clone().into_iter().enumerate() {
                        let d = d.ok_or_else(|| {
                            CircuitError::Invalid(format!("`{}` slot {slot} is undriven", vx.id))
                        })?;
                        let du = self.build(d, k - 1)?;
                        self.out.edges.push(Edge { from: du, to: u, slot });
                    }
                    u
                }
            };
            self.memo.insert(key, u);
            Ok(u)
        }
    }

    let root = c.index_of(from)?;
    let mut b = Builder {
        c,
        drivers: (0..c.len()).map(|v| c.drivers(v)).collect(),
        out: Circuit::new(),
        origin: Vec::new(),
        level: Vec::new(),
        memo: HashMap::new(),
    };
    let sink = b.build(root, k)?;
    let z = z_values(&b.out);
    Ok(UnrolledCircuit {
        circuit: b.out,
        origin: b.origin,
        level: b.level,
        z,
        sink,
    })
}

/// z-values of a forward circuit: 0 for constants named `X_0`/`X_1`, ∞ for
/// other sources, the driver's value for output ports, and
/// `min (1 + z(input))` for gates.
pub fn z_values(c: &Circuit) -> Vec<ZValue> {
    fn z_of(c: &Circuit, drivers: &[Vec<Option<usize>>], v: usize, memo: &mut [Option<ZValue>]) -> ZValue {
        if let Some(z) = memo[v] {
            return z;
        }
        let vx = &c.vertices[v];
        let z = match &vx.kind {
            VertexKind::Constant(_) if vx.id == "X_0" || vx.id == "X_1" => ZValue::Finite(0),
            VertexKind::Output => match drivers[v].first() {
                Some(Some(d)) => z_of(c, drivers, *d, memo),
                _ => ZValue::Infinite,
            },
            VertexKind::Gate(_) => drivers[v]
                .iter()
                .flatten()
                .map(|&d| z_of(c, drivers, d, memo).succ())
                .min()
                .unwrap_or(ZValue::Infinite),
            _ => ZValue::Infinite,
        };
        memo[v] = Some(z);
        z
    }
    let drivers: Vec<_> = (0..c.len()).map(|v| c.drivers(v)).collect();
    let mut memo = vec![None; c.len()];
    (0..c.len()).map(|v| z_of(c, &drivers, v, &mut memo)).collect()
}

/// Disagreement between a vertex and one of its copies.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceMismatch {
    pub original: String,
    pub copy: String,
    pub z: ZValue,
    /// Transitions with depth ≤ z present only in the original circuit.
    pub only_original: Vec<TransitionRecord>,
    /// Transitions with depth ≤ z present only in the unrolled circuit.
    pub only_unrolled: Vec<TransitionRecord>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EquivalenceReport {
    pub copies_compared: usize,
    pub transitions_compared: usize,
    pub mismatches: Vec<EquivalenceMismatch>,
}

impl EquivalenceReport {
    pub fn is_equivalent(&self) -> bool {
        self.mismatches.is_empty()
    }
}

fn diff_records(
    a: &[TransitionRecord],
    b: &[TransitionRecord],
    tol: f64,
) -> (Vec<TransitionRecord>, Vec<TransitionRecord>) {
    let (mut i, mut j) = (0, 0);
    let (mut only_a, mut only_b) = (Vec::new(), Vec::new());
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) if (x.time - y.time).abs() <= tol && x.value == y.value => {
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x.time < y.time => {
                only_a.push(*x);
                i += 1;
            }
            (Some(_), Some(y)) => {
                only_b.push(*y);
                j += 1;
            }
            (Some(x), None) => {
                only_a.push(*x);
                i += 1;
            }
            (None, Some(y)) => {
                only_b.push(*y);
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    (only_a, only_b)
}

/// Compares, for every copy `Γ'` of a vertex `Γ`, the transitions of depth at
/// most `z(Γ')` in the executions of `c` and of the unrolled circuit.
pub fn check_simulation_equivalence(
    c: &Circuit,
    unrolled: &UnrolledCircuit,
    inputs: &InputSignals,
    opts: &ExecuteOptions,
) -> Result<EquivalenceReport, CircuitError> {
    let full = execute(c, inputs, opts)?;
    let used: InputSignals = unrolled
        .circuit
        .input_ports()
        .into_iter()
        .filter_map(|v| {
            let id = &unrolled.circuit.vertices[v].id;
            inputs.get(id).map(|s| (id.clone(), s.clone()))
        })
        .collect();
    let part = execute(&unrolled.circuit, &used, opts)?;
    Ok(compare_executions(unrolled, &full, &part, TIME_EPS))
}

/// Depth-filtered comparison of two executions of `c` and its unrolling.
pub fn compare_executions(
    unrolled: &UnrolledCircuit,
    full: &Execution,
    part: &Execution,
    tol: f64,
) -> EquivalenceReport {
    let mut report = EquivalenceReport::default();
    for (u, origin) in unrolled.origin.iter().enumerate() {
        let Some(v) = *origin else { continue };
        let z = unrolled.z[u];
        let keep = |rs: &[TransitionRecord]| -> Vec<TransitionRecord> {
            rs.iter().copied().filter(|r| z.admits(r.depth)).collect()
        };
        let a = keep(&full.records[v]);
        let b = keep(&part.records[u]);
        report.copies_compared += 1;
        report.transitions_compared += a.len().max(b.len());
        let (only_original, only_unrolled) = diff_records(&a, &b, tol);
        if !only_original.is_empty() || !only_unrolled.is_empty() {
            report.mismatches.push(EquivalenceMismatch {
                original: full.ids[v].clone(),
                copy: part.ids[u].clone(),
                z,
                only_original,
                only_unrolled,
            });
        }
    }
    report
}

/// Time up to which each copy provably reproduces its original: ∞ for
/// sources other than `X_v`, the first transition time of the replaced gate
/// for `X_v`, and `min (h(input) + δ_slot)` for gate copies.
pub fn exactness_horizons(c: &Circuit, unrolled: &UnrolledCircuit, full: &Execution) -> Vec<f64> {
    let uc = &unrolled.circuit;
    let drivers: Vec<_> = (0..uc.len()).map(|v| uc.drivers(v)).collect();
    // X_v nodes stand in for every gate whose 0-unrolling they replace; the
    // earliest first transition among those gates bounds them.
    let mut x_bound = f64::INFINITY;
    for v in c.gates() {
        if let Some(r) = full.records[v].first() {
            x_bound = x_bound.min(r.time);
        }
    }
    fn h(
        uc: &Circuit,
        drivers: &[Vec<Option<usize>>],
        v: usize,
        x_bound: f64,
        memo: &mut [Option<f64>],
    ) -> f64 {
        if let Some(x) = memo[v] {
            return x;
        }
        let vx = &uc.vertices[v];
        let out = match &vx.kind {
            VertexKind::Constant(_) if vx.id == "X_0" || vx.id == "X_1" => x_bound,
            VertexKind::Output => match drivers[v].first() {
                Some(Some(d)) => h(uc, drivers, *d, x_bound, memo),
                _ => f64::INFINITY,
            },
            VertexKind::Gate(g) => drivers[v]
                .iter()
                .enumerate()
                .filter_map(|(slot, d)| d.map(|d| h(uc, drivers, d, x_bound, memo) + g.input_delays[slot]))
                .fold(f64::INFINITY, f64::min),
            _ => f64::INFINITY,
        };
        memo[v] = Some(out);
        out
    }
    let mut memo = vec![None; uc.len()];
    (0..uc.len()).map(|v| h(uc, &drivers, v, x_bound, &mut memo)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::{make_boolean_gate, TruthTable};
    use crate::signals::Transition;

    fn inverter(delay: f64, initial_input: bool) -> GateSpec {
        make_boolean_gate(
            &TruthTable::named("not", 1).unwrap(),
            vec![delay],
            vec![initial_input],
            None,
        )
    }

    fn chain(n: usize) -> Circuit {
        let mut c = Circuit::new();
        c.add_input("I").unwrap();
        let mut prev = "I".to_string();
        let mut level = false;
        for i in 0..n {
            let id = format!("G{i}");
            c.add_gate(&id, inverter(0.1, level)).unwrap();
            c.connect(&prev, &id, 0).unwrap();
            prev = id;
            level = !level;
        }
        c.add_output("O").unwrap();
        c.connect(&prev, "O", 0).unwrap();
        c
    }

    fn inputs(pairs: &[(&str, BinarySignal)]) -> InputSignals {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn inverter_circuit_is_valid() {
        let v = chain(1).validate();
        assert!(v.is_ok(), "{:?}", v.diagnostics);
        assert_eq!(v.delta_min, Some(0.1));
    }

    #[test]
    fn output_with_two_drivers_violates_c4() {
        let mut c = chain(1);
        c.connect("I", "O", 0).unwrap();
        let v = c.validate();
        assert!(v
            .diagnostics
            .iter()
            .any(|d| matches!(d, Diagnostic::OutputIncoming { count: 2, .. })));
    }

    #[test]
    fn zero_delay_violates_strict_causality() {
        let mut c = Circuit::new();
        c.add_input("I").unwrap();
        c.add_gate("G", inverter(0.0, false)).unwrap();
        c.add_output("O").unwrap();
        c.connect("I", "G", 0).unwrap();
        c.connect("G", "O", 0).unwrap();
        let v = c.validate();
        assert_eq!(v.diagnostics.len(), 1);
        assert_eq!(v.diagnostics[0].rule(), "causality");
        assert!(v.diagnostics[0].to_string().contains("`G`"));
    }

    #[test]
    fn unfed_and_multiply_fed_slots() {
        let mut c = Circuit::new();
        c.add_input("I").unwrap();
        c.add_gate("G", inverter(0.1, false)).unwrap();
        c.add_gate("H", inverter(0.1, false)).unwrap();
        c.connect("I", "G", 0).unwrap();
        c.connect("I", "G", 0).unwrap();
        c.connect("G", "I", 0).unwrap();
        let rules: Vec<_> = c.validate().diagnostics.iter().map(|d| d.rule()).collect();
        assert!(rules.contains(&"C3"));
        assert_eq!(rules.iter().filter(|r| **r == "C5").count(), 2);
    }

    #[test]
    fn inverter_chain_depths() {
        let c = chain(3);
        let rise = BinarySignal::new(false, vec![Transition::rising(1.0)], 3.0).unwrap();
        let ex = execute(&c, &inputs(&[("I", rise)]), &ExecuteOptions::new(3.0)).unwrap();
        let o = ex.vertex("O").unwrap();
        let rec = ex.records[o][0];
        assert!(!rec.value);
        let tau = 1e-4;
        assert!((rec.time - (1.3 + 3.0 * tau * 2f64.ln())).abs() < 1e-9);
        for (i, id) in ["G0", "G1", "G2"].iter().enumerate() {
            let v = ex.vertex(id).unwrap();
            assert_eq!(ex.records[v].len(), 1);
            assert_eq!(ex.records[v][0].depth, i as u32 + 1);
        }
        assert_eq!(rec.depth, 3);
    }

    #[test]
    fn sr_latch_holds_after_set() {
        let nor = TruthTable::named("nor", 2).unwrap();
        let mut c = Circuit::new();
        c.add_input("S").unwrap();
        c.add_input("R").unwrap();
        // Q = NOR(R, Qb), Qb = NOR(S, Q); initially Q = 0, Qb = 1
        c.add_gate("Q", make_boolean_gate(&nor, vec![0.1, 0.1], vec![false, true], None))
            .unwrap();
        c.add_gate("Qb", make_boolean_gate(&nor, vec![0.1, 0.1], vec![false, false], None))
            .unwrap();
        c.add_output("O").unwrap();
        c.connect("R", "Q", 0).unwrap();
        c.connect("Qb", "Q", 1).unwrap();
        c.connect("S", "Qb", 0).unwrap();
        c.connect("Q", "Qb", 1).unwrap();
        c.connect("Q", "O", 0).unwrap();
        let set = BinarySignal::new(
            false,
            vec![Transition::rising(1.0), Transition::falling(1.5)],
            10.0,
        )
        .unwrap();
        let ex = execute(
            &c,
            &inputs(&[("S", set), ("R", BinarySignal::zero(10.0).unwrap())]),
            &ExecuteOptions::new(10.0),
        )
        .unwrap();
        let q = ex.signal_of("Q").unwrap();
        assert_eq!(q.transitions().len(), 1);
        assert!(q.transitions()[0].value);
        assert!(q.final_value());
    }

    #[test]
    fn stale_transitions_are_discarded() {
        // a short input pulse is swallowed by a slow channel
        let g = crate::gates::make_idm_channel(crate::gates::IdmParams::default(), false);
        let mut c = Circuit::new();
        c.add_input("I").unwrap();
        c.add_gate("G", g).unwrap();
        c.add_output("O").unwrap();
        c.connect("I", "G", 0).unwrap();
        c.connect("G", "O", 0).unwrap();
        let pulse = BinarySignal::new(
            false,
            vec![Transition::rising(1.0), Transition::falling(1.2)],
            10.0,
        )
        .unwrap();
        let ex = execute(&c, &inputs(&[("I", pulse)]), &ExecuteOptions::new(10.0)).unwrap();
        assert!(ex.signal_of("O").unwrap().is_constant());
        assert_eq!(ex.mode_switches, 2);
    }

    #[test]
    fn missing_input_is_an_error() {
        let c = chain(1);
        assert!(matches!(
            execute(&c, &InputSignals::new(), &ExecuteOptions::new(1.0)),
            Err(CircuitError::MissingInput(_))
        ));
    }

    #[test]
    fn inconsistent_feedback_initial_value() {
        let mut c = Circuit::new();
        c.add_gate("N", inverter(0.01, false)).unwrap();
        c.connect("N", "N", 0).unwrap();
        let v = c.validate();
        assert!(v.diagnostics.iter().any(|d| d.rule() == "initial"));
    }

    #[test]
    fn event_cap_trips_on_ring_oscillator() {
        // NAND(EN, self) oscillates once EN rises
        let nand = TruthTable::named("nand", 2).unwrap();
        let mut c = Circuit::new();
        c.add_input("EN").unwrap();
        c.add_gate("N", make_boolean_gate(&nand, vec![0.01, 0.01], vec![false, true], None))
            .unwrap();
        c.connect("EN", "N", 0).unwrap();
        c.connect("N", "N", 1).unwrap();
        assert!(c.validate().is_ok());
        let en = |h| BinarySignal::new(false, vec![Transition::rising(0.5)], h).unwrap();
        let mut opts = ExecuteOptions::new(100.0);
        opts.event_cap = 500;
        assert_eq!(
            execute(&c, &inputs(&[("EN", en(100.0))]), &opts),
            Err(CircuitError::EventCap(500))
        );
        let ex = execute(&c, &inputs(&[("EN", en(1.5))]), &ExecuteOptions::new(1.5)).unwrap();
        let n = ex.records[c.index_of("N").unwrap()].len();
        assert!((95..=100).contains(&n), "{n}");
    }

    #[test]
    fn forward_circuit_unrolling_is_isomorphic() {
        let c = chain(3);
        let u = unroll(&c, "O", 3).unwrap();
        assert_eq!(u.circuit.len(), c.len());
        assert!(u.circuit.validate().is_ok());
        assert_eq!(u.z[u.sink], ZValue::Infinite);
        let u0 = unroll(&c, "O", 0).unwrap();
        assert_eq!(u0.circuit.len(), 2);
        assert_eq!(u0.z[u0.sink], ZValue::Finite(0));
    }

    #[test]
    fn z_values_ordering() {
        assert!(ZValue::Finite(7) < ZValue::Infinite);
        assert!(ZValue::Finite(2).admits(2) && !ZValue::Finite(2).admits(3));
        assert_eq!(ZValue::Infinite.to_string(), "inf");
    }
}

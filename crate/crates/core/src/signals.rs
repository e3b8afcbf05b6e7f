//! Binary step signals, mode-switch signals and the distances between them.
//!
//! Every signal lives on a closed horizon `[0, T]` and is right-continuous
//! with left limits. A [`BinarySignal`] stores its left-sided limit at zero
//! (`s(0-)`) as the initial value, so a transition at `t = 0` encodes
//! `s(0) != s(0-)`.

use std::fmt;

use thiserror::Error;

/// Two event times closer than this are treated as the same instant.
pub const TIME_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("horizon must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("time {time} at index {index} lies outside [0, {horizon}]")]
    OutOfRange { index: usize, time: f64, horizon: f64 },
    #[error("times are not increasing at index {index}")]
    NotIncreasing { index: usize },
    #[error("values do not alternate at index {index}")]
    NotAlternating { index: usize },
    #[error("horizon mismatch: {0} vs {1}")]
    HorizonMismatch(f64, f64),
    #[error("pulse must have positive width and non-negative start, got start {start}, width {width}")]
    BadPulse { start: f64, width: f64 },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// A value change of a binary signal: `(t, 1)` is rising, `(t, 0)` falling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub time: f64,
    pub value: bool,
}

impl Transition {
    pub fn new(time: f64, value: bool) -> Self {
        Self { time, value }
    }

    pub fn rising(time: f64) -> Self {
        Self::new(time, true)
    }

    pub fn falling(time: f64) -> Self {
        Self::new(time, false)
    }
}

fn check_horizon(horizon: f64) -> Result<(), SignalError> {
    if horizon.is_finite() && horizon > 0.0 {
        Ok(())
    } else {
        Err(SignalError::BadHorizon(horizon))
    }
}

/// Removes pairs of transitions closer than [`TIME_EPS`]; they form
/// zero-width pulses. Input must already alternate.
fn drop_zero_width(transitions: Vec<Transition>) -> Vec<Transition> {
    let mut out: Vec<Transition> = Vec::with_capacity(transitions.len());
    for tr in transitions {
        match out.last() {
            Some(last) if tr.time - last.time <= TIME_EPS => {
                out.pop();
            }
            _ => out.push(tr),
        }
    }
    out
}

/// A right-continuous `{0,1}` step function on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySignal {
    initial: bool,
    transitions: Vec<Transition>,
    horizon: f64,
}

impl BinarySignal {
    /// Builds a signal from a strictly alternating, time-sorted transition list.
    ///
    /// Zero-width pulses (consecutive transitions within [`TIME_EPS`]) are
    /// removed.
    pub fn new(
        initial: bool,
        transitions: Vec<Transition>,
        horizon: f64,
    ) -> Result<Self, SignalError> {
        check_horizon(horizon)?;
        let mut level = initial;
        let mut prev = f64::NEG_INFINITY;
        for (index, tr) in transitions.iter().enumerate() {
            if !(tr.time >= 0.0 && tr.time <= horizon) {
                return Err(SignalError::OutOfRange {
                    index,
                    time: tr.time,
                    horizon,
                });
            }
            if tr.time < prev {
                return Err(SignalError::NotIncreasing { index });
            }
            if tr.value == level {
                return Err(SignalError::NotAlternating { index });
            }
            level = tr.value;
            prev = tr.time;
        }
        Ok(Self {
            initial,
            transitions: drop_zero_width(transitions),
            horizon,
        })
    }

    /// Builds a signal from a time-sorted list of sampled levels, keeping only
    /// actual value changes. Entries past the horizon are ignored.
    pub fn from_changes<I>(initial: bool, changes: I, horizon: f64) -> Result<Self, SignalError>
    where
        I: IntoIterator<Item = (f64, bool)>,
    {
        check_horizon(horizon)?;
        let mut level = initial;
        let mut prev = f64::NEG_INFINITY;
        let mut transitions = Vec::new();
        for (index, (time, value)) in changes.into_iter().enumerate() {
            if time < 0.0 || time.is_nan() {
                return Err(SignalError::OutOfRange {
                    index,
                    time,
                    horizon,
                });
            }
            if time < prev {
                return Err(SignalError::NotIncreasing { index });
            }
            prev = time;
            if time > horizon {
                break;
            }
            if value != level {
                transitions.push(Transition::new(time, value));
                level = value;
            }
        }
        Ok(Self {
            initial,
            transitions: drop_zero_width(transitions),
            horizon,
        })
    }

    pub fn constant(value: bool, horizon: f64) -> Result<Self, SignalError> {
        Self::new(value, Vec::new(), horizon)
    }

    /// The zero signal: initial value 0 and no transitions.
    pub fn zero(horizon: f64) -> Result<Self, SignalError> {
        Self::constant(false, horizon)
    }

    /// A single high pulse `[start, start + width)` on a zero background.
    pub fn pulse(pulse: Pulse, horizon: f64) -> Result<Self, SignalError> {
        let mut transitions = vec![Transition::rising(pulse.start)];
        let end = pulse.start + pulse.width;
        if end <= horizon {
            transitions.push(Transition::falling(end));
        }
        Self::new(false, transitions, horizon)
    }

    pub fn initial(&self) -> bool {
        self.initial
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn is_constant(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Value at time `t` (right-continuous). Times before zero give `s(0-)`.
    pub fn value_at(&self, t: f64) -> bool {
        let n = self.transitions.partition_point(|tr| tr.time <= t);
        if n == 0 {
            self.initial
        } else {
            self.transitions[n - 1].value
        }
    }

    pub fn final_value(&self) -> bool {
        self.transitions.last().map_or(self.initial, |tr| tr.value)
    }

    /// Pure delay by `delta >= 0`: the signal holds its initial value on
    /// `[0, delta)` and follows `s(t - delta)` afterwards. Transitions pushed
    /// past the horizon are dropped.
    ///
    /// # Panics
    /// Panics if `delta` is negative or not finite.
    pub fn delay(&self, delta: f64) -> Self {
        assert!(delta >= 0.0 && delta.is_finite(), "delay must be non-negative");
        let transitions = self
            .transitions
            .iter()
            .map(|tr| Transition::new(tr.time + delta, tr.value))
            .filter(|tr| tr.time <= self.horizon)
            .collect();
        Self {
            initial: self.initial,
            transitions,
            horizon: self.horizon,
        }
    }

    /// Same transitions on a different horizon; transitions beyond it are cut.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self, SignalError> {
        check_horizon(horizon)?;
        Ok(Self {
            initial: self.initial,
            transitions: self
                .transitions
                .iter()
                .copied()
                .filter(|tr| tr.time <= horizon)
                .collect(),
            horizon,
        })
    }

    /// Maximal intervals on which the signal is 1, clipped to `[0, horizon]`.
    pub fn high_intervals(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut start = if self.initial { Some(0.0) } else { None };
        for tr in &self.transitions {
            match (tr.value, start) {
                (true, None) => start = Some(tr.time),
                (false, Some(s)) => {
                    if tr.time > s {
                        out.push((s, tr.time));
                    }
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            if self.horizon > s {
                out.push((s, self.horizon));
            }
        }
        out
    }

    /// `‖s‖₁`: measure of the set where the signal is 1.
    pub fn one_norm(&self) -> f64 {
        self.high_intervals().iter().map(|(a, b)| b - a).sum()
    }

    /// Shortest high pulse, i.e. the minimum of `t' - t` over consecutive
    /// transition pairs `(t, 1), (t', 0)`.
    pub fn min_pulse_width(&self) -> Option<f64> {
        self.transitions
            .windows(2)
            .filter(|w| w[0].value && !w[1].value)
            .map(|w| w[1].time - w[0].time)
            .min_by(f64::total_cmp)
    }

    pub fn classify_spf_input(&self) -> SpfInput {
        match (self.initial, self.transitions.as_slice()) {
            (false, []) => SpfInput::ZeroSignal,
            (false, [rise, fall]) if rise.value && !fall.value => SpfInput::SinglePulse(Pulse {
                start: rise.time,
                width: fall.time - rise.time,
            }),
            _ => SpfInput::Other,
        }
    }

    /// Transition-list CSV: `# initial=`, `# horizon=` comments, then a
    /// `time,value` header and one row per transition.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# initial={}\n", u8::from(self.initial)));
        out.push_str(&format!("# horizon={}\n", self.horizon));
        out.push_str("time,value\n");
        for tr in &self.transitions {
            out.push_str(&format!("{},{}\n", tr.time, u8::from(tr.value)));
        }
        out
    }

    /// Parses the format written by [`BinarySignal::to_csv`]. Unknown comment
    /// lines are ignored.
    pub fn from_csv(text: &str) -> Result<Self, SignalError> {
        let mut initial = None;
        let mut horizon = None;
        let mut header_seen = false;
        let mut transitions = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = i + 1;
            let parse_err = |msg: String| SignalError::Parse { line: lineno, msg };
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some((key, value)) = comment.trim().split_once('=') {
                    match key.trim() {
                        "initial" => initial = Some(parse_bit(value.trim()).map_err(parse_err)?),
                        "horizon" => {
                            horizon = Some(
                                value
                                    .trim()
                                    .parse::<f64>()
                                    .map_err(|e| parse_err(e.to_string()))?,
                            )
                        }
                        _ => {}
                    }
                }
                continue;
            }
            if !header_seen {
                if line.replace(' ', "") != "time,value" {
                    return Err(parse_err(format!("expected header `time,value`, got `{line}`")));
                }
                header_seen = true;
                continue;
            }
            let (t, v) = line
                .split_once(',')
                .ok_or_else(|| parse_err("expected two columns".into()))?;
            let time = t
                .trim()
                .parse::<f64>()
                .map_err(|e| parse_err(e.to_string()))?;
            let value = parse_bit(v.trim()).map_err(parse_err)?;
            transitions.push(Transition::new(time, value));
        }
        let initial = initial.ok_or(SignalError::Parse {
            line: 0,
            msg: "missing `# initial=` line".into(),
        })?;
        let horizon = horizon.ok_or(SignalError::Parse {
            line: 0,
            msg: "missing `# horizon=` line".into(),
        })?;
        Self::new(initial, transitions, horizon)
    }
}

fn parse_bit(s: &str) -> Result<bool, String> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(format!("expected 0 or 1, got `{other}`")),
    }
}

impl fmt::Display for BinarySignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "init={}", u8::from(self.initial))?;
        for tr in &self.transitions {
            write!(f, " ({},{})", tr.time, u8::from(tr.value))?;
        }
        Ok(())
    }
}

/// `λ({t ∈ [0,T] : s1(t) ≠ s2(t)})`, the 1-norm distance of two binary signals.
pub fn one_norm_distance(s1: &BinarySignal, s2: &BinarySignal) -> Result<f64, SignalError> {
    if s1.horizon != s2.horizon {
        return Err(SignalError::HorizonMismatch(s1.horizon, s2.horizon));
    }
    let (a, b) = (s1.transitions(), s2.transitions());
    let (mut i, mut j) = (0, 0);
    let (mut va, mut vb) = (s1.initial, s2.initial);
    let mut t = 0.0;
    let mut total = 0.0;
    loop {
        let next_a = a.get(i).map_or(f64::INFINITY, |tr| tr.time);
        let next_b = b.get(j).map_or(f64::INFINITY, |tr| tr.time);
        let next = next_a.min(next_b).min(s1.horizon);
        if va != vb {
            total += next - t;
        }
        if next >= s1.horizon {
            break;
        }
        t = next;
        while i < a.len() && a[i].time <= t {
            va = a[i].value;
            i += 1;
        }
        while j < b.len() && b[j].time <= t {
            vb = b[j].value;
            j += 1;
        }
    }
    Ok(total)
}

/// A high pulse of length `width` starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pulse {
    pub start: f64,
    pub width: f64,
}

impl Pulse {
    pub fn new(start: f64, width: f64) -> Result<Self, SignalError> {
        if start >= 0.0 && width > 0.0 && start.is_finite() && width.is_finite() {
            Ok(Self { start, width })
        } else {
            Err(SignalError::BadPulse { start, width })
        }
    }
}

/// Input classes relevant to short-pulse filtration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpfInput {
    ZeroSignal,
    SinglePulse(Pulse),
    Other,
}

/// Identifier of one mode (one ODE right-hand side) of a mode family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeId(pub u32);

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m{}", self.0)
    }
}

/// A step function from `[0, horizon]` into mode identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSwitchSignal {
    initial: ModeId,
    switches: Vec<(f64, ModeId)>,
    horizon: f64,
}

impl ModeSwitchSignal {
    /// Switch times must be strictly increasing inside `[0, horizon]` and
    /// consecutive modes must differ.
    pub fn new(
        initial: ModeId,
        switches: Vec<(f64, ModeId)>,
        horizon: f64,
    ) -> Result<Self, SignalError> {
        check_horizon(horizon)?;
        let mut prev_time = f64::NEG_INFINITY;
        let mut prev_mode = initial;
        for (index, &(time, mode)) in switches.iter().enumerate() {
            if !(time >= 0.0 && time <= horizon) {
                return Err(SignalError::OutOfRange {
                    index,
                    time,
                    horizon,
                });
            }
            if time <= prev_time {
                return Err(SignalError::NotIncreasing { index });
            }
            if mode == prev_mode {
                return Err(SignalError::NotAlternating { index });
            }
            prev_time = time;
            prev_mode = mode;
        }
        Ok(Self {
            initial,
            switches,
            horizon,
        })
    }

    pub fn constant(mode: ModeId, horizon: f64) -> Result<Self, SignalError> {
        Self::new(mode, Vec::new(), horizon)
    }

    pub fn initial(&self) -> ModeId {
        self.initial
    }

    pub fn switches(&self) -> &[(f64, ModeId)] {
        &self.switches
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn mode_at(&self, t: f64) -> ModeId {
        let n = self.switches.partition_point(|&(s, _)| s <= t);
        if n == 0 {
            self.initial
        } else {
            self.switches[n - 1].1
        }
    }

    /// Constant pieces `(start, end, mode)` tiling `[0, horizon]`.
    pub fn pieces(&self) -> Vec<(f64, f64, ModeId)> {
        let mut out = Vec::with_capacity(self.switches.len() + 1);
        let mut start = 0.0;
        let mut mode = self.initial;
        for &(time, next) in &self.switches {
            if time > start {
                out.push((start, time, mode));
            }
            start = time;
            mode = next;
        }
        if self.horizon > start {
            out.push((start, self.horizon, mode));
        }
        out
    }
}

/// `d_T(a, b)`: measure of the set of times where `a` and `b` select
/// different modes. Computed by a single merged scan over both switch lists.
pub fn mode_distance(a: &ModeSwitchSignal, b: &ModeSwitchSignal) -> Result<f64, SignalError> {
    if a.horizon != b.horizon {
        return Err(SignalError::HorizonMismatch(a.horizon, b.horizon));
    }
    let (sa, sb) = (a.switches(), b.switches());
    let (mut i, mut j) = (0, 0);
    let (mut ma, mut mb) = (a.initial, b.initial);
    let mut t = 0.0;
    let mut total = 0.0;
    // Switches at t = 0 apply immediately.
    while i < sa.len() && sa[i].0 <= 0.0 {
        ma = sa[i].1;
        i += 1;
    }
    while j < sb.len() && sb[j].0 <= 0.0 {
        mb = sb[j].1;
        j += 1;
    }
    loop {
        let next_a = sa.get(i).map_or(f64::INFINITY, |s| s.0);
        let next_b = sb.get(j).map_or(f64::INFINITY, |s| s.0);
        let next = next_a.min(next_b).min(a.horizon);
        if ma != mb {
            total += next - t;
        }
        if next >= a.horizon {
            break;
        }
        t = next;
        while i < sa.len() && sa[i].0 <= t {
            ma = sa[i].1;
            i += 1;
        }
        while j < sb.len() && sb[j].0 <= t {
            mb = sb[j].1;
            j += 1;
        }
    }
    Ok(total)
}

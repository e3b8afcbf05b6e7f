//! Short-pulse filtration experiments: pulse-width sweeps, norm bisection
//! and the empirical F1–F5 predicates.

use hgsim_core::circuit::{execute, Circuit, CircuitError, ExecuteOptions, InputSignals};
use hgsim_core::signals::{BinarySignal, Pulse};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpfError {
    #[error("pulse experiments need exactly one input and one output port, found {inputs} and {outputs}")]
    Ports { inputs: usize, outputs: usize },
    #[error("bad sweep range: {0}")]
    Range(String),
    #[error("target norm {target} is not bracketed: norm is {lo} at width {lo_width} and {hi} at width {hi_width}")]
    Bracket {
        target: f64,
        lo_width: f64,
        lo: f64,
        hi_width: f64,
        hi: f64,
    },
    #[error("bisection stalled at width {width} with norm {norm}")]
    Stalled { width: f64, norm: f64 },
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

/// Evenly spaced sample points `lo, …, hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRange {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl SweepRange {
    /// Rejects empty ranges and fewer than two samples; pulse widths must
    /// also be positive.
    pub fn new(lo: f64, hi: f64, count: usize, positive: bool) -> Result<Self, SpfError> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(SpfError::Range(format!("[{lo}, {hi}] is empty")));
        }
        if positive && lo <= 0.0 {
            return Err(SpfError::Range(format!("widths must be positive, got {lo}")));
        }
        if !positive && lo < 0.0 {
            return Err(SpfError::Range(format!("values must be non-negative, got {lo}")));
        }
        if count < 2 {
            return Err(SpfError::Range(format!("need at least 2 samples, got {count}")));
        }
        Ok(Self { lo, hi, count })
    }

    pub fn points(&self) -> Vec<f64> {
        let n = (self.count - 1) as f64;
        (0..self.count)
            .map(|i| if i + 1 == self.count { self.hi } else { self.lo + (self.hi - self.lo) * i as f64 / n })
            .collect()
    }
}

/// Output features of one pulse response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub width: f64,
    /// `‖s‖₁` over the simulated horizon.
    pub norm: f64,
    pub min_pulse: Option<f64>,
    pub last_transition: Option<f64>,
    pub transitions: usize,
    pub high_at_horizon: bool,
}

impl SweepRow {
    fn of(width: f64, s: &BinarySignal) -> Self {
        Self {
            width,
            norm: s.one_norm(),
            min_pulse: s.min_pulse_width(),
            last_transition: s.transitions().last().map(|tr| tr.time),
            transitions: s.transitions().len(),
            high_at_horizon: s.final_value(),
        }
    }
}

/// A one-input one-output circuit driven by single pulses.
#[derive(Debug, Clone)]
pub struct PulseSetup<'a> {
    pub circuit: &'a Circuit,
    pub input: String,
    pub output: String,
    /// Pulse start time.
    pub start: f64,
    pub opts: ExecuteOptions,
}

pub fn single_ports(c: &Circuit) -> Result<(String, String), SpfError> {
    let (ins, outs) = (c.input_ports(), c.output_ports());
    match (ins.as_slice(), outs.as_slice()) {
        ([i], [o]) => Ok((c.vertex(*i).id.clone(), c.vertex(*o).id.clone())),
        _ => Err(SpfError::Ports {
            inputs: ins.len(),
            outputs: outs.len(),
        }),
    }
}

impl<'a> PulseSetup<'a> {
    pub fn new(circuit: &'a Circuit, start: f64, opts: ExecuteOptions) -> Result<Self, SpfError> {
        let (input, output) = single_ports(circuit)?;
        Ok(Self {
            circuit,
            input,
            output,
            start,
            opts,
        })
    }

    pub fn with_horizon(&self, horizon: f64) -> Self {
        let mut s = self.clone();
        s.opts.horizon = horizon;
        s
    }

    pub fn response(&self, input: BinarySignal) -> Result<BinarySignal, SpfError> {
        let inputs: InputSignals = [(self.input.clone(), input)].into_iter().collect();
        let ex = execute(self.circuit, &inputs, &self.opts)?;
        Ok(ex.signal_of(&self.output).expect("output port exists"))
    }

    pub fn pulse_response(&self, width: f64) -> Result<BinarySignal, SpfError> {
        let pulse = Pulse::new(self.start, width).map_err(|e| SpfError::Range(e.to_string()))?;
        let input = BinarySignal::pulse(pulse, self.opts.horizon).map_err(CircuitError::from)?;
        self.response(input)
    }

    pub fn zero_response(&self) -> Result<BinarySignal, SpfError> {
        let input = BinarySignal::zero(self.opts.horizon).map_err(CircuitError::from)?;
        self.response(input)
    }

    pub fn row(&self, width: f64) -> Result<SweepRow, SpfError> {
        Ok(SweepRow::of(width, &self.pulse_response(width)?))
    }

    /// One row per width, in input order.
    pub fn sweep(&self, widths: &[f64]) -> Result<Vec<SweepRow>, SpfError> {
        widths.par_iter().map(|&w| self.row(w)).collect()
    }

    /// Finds a width in `[lo, hi]` whose response norm lies in
    /// `[target − tol, target]`.
    pub fn bisect_norm(&self, lo: f64, hi: f64, target: f64, tol: f64) -> Result<SweepRow, SpfError> {
        let (mut a, mut b) = (self.row(lo)?, self.row(hi)?);
        let inside = |r: &SweepRow| r.norm <= target && r.norm >= target - tol;
        for r in [a, b] {
            if inside(&r) {
                return Ok(r);
            }
        }
        let below = |r: &SweepRow| r.norm < target - tol;
        if below(&a) == below(&b) {
            return Err(SpfError::Bracket {
                target,
                lo_width: lo,
                lo: a.norm,
                hi_width: hi,
                hi: b.norm,
            });
        }
        loop {
            let mid = 0.5 * (a.width + b.width);
            if mid <= a.width.min(b.width) || mid >= a.width.max(b.width) {
                return Err(SpfError::Stalled { width: mid, norm: a.norm });
            }
            let m = self.row(mid)?;
            if inside(&m) {
                return Ok(m);
            }
            if below(&m) == below(&a) {
                a = m;
            } else {
                b = m;
            }
        }
    }
}

/// Outcome of one empirical predicate.
#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub name: &'static str,
    pub holds: bool,
    pub witness: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpfReport {
    pub predicates: Vec<Predicate>,
    pub rows: Vec<SweepRow>,
}

impl SpfReport {
    pub fn holds(&self, name: &str) -> bool {
        self.predicates.iter().any(|p| p.name == name && p.holds)
    }

    pub fn all_hold(&self) -> bool {
        self.predicates.iter().all(|p| p.holds)
    }
}

/// Evaluates F1–F5 on the sweep: F4 passes when no output pulse is `≤ eps`,
/// F5 when every last transition precedes `start + Δ + settle`.
pub fn check_spf(
    c: &Circuit,
    widths: &SweepRange,
    start: f64,
    eps: f64,
    settle: f64,
    opts: &ExecuteOptions,
) -> Result<SpfReport, SpfError> {
    let mut predicates = Vec::new();
    let setup = match PulseSetup::new(c, start, opts.clone()) {
        Ok(s) => {
            predicates.push(Predicate {
                name: "F1",
                holds: true,
                witness: format!("input `{}`, output `{}`", s.input, s.output),
            });
            s
        }
        Err(e) => {
            predicates.push(Predicate {
                name: "F1",
                holds: false,
                witness: e.to_string(),
            });
            return Ok(SpfReport {
                predicates,
                rows: Vec::new(),
            });
        }
    };
    let zero = setup.zero_response()?;
    predicates.push(Predicate {
        name: "F2",
        holds: !zero.initial() && zero.transitions().is_empty(),
        witness: format!("{} output transitions for the zero input", zero.transitions().len()),
    });
    let rows = setup.sweep(&widths.points())?;
    let nonzero = rows.iter().find(|r| r.norm > 0.0);
    predicates.push(Predicate {
        name: "F3",
        holds: nonzero.is_some(),
        witness: match nonzero {
            Some(r) => format!("width {} gives norm {}", r.width, r.norm),
            None => "every pulse is filtered".into(),
        },
    });
    let shortest = rows
        .iter()
        .filter_map(|r| r.min_pulse.map(|p| (p, r.width)))
        .min_by(|a, b| a.0.total_cmp(&b.0));
    predicates.push(Predicate {
        name: "F4",
        holds: shortest.is_none_or(|(p, _)| p > eps),
        witness: match shortest {
            Some((p, w)) => format!("shortest output pulse {p} at width {w}"),
            None => "no output pulses".into(),
        },
    });
    let lag = rows
        .iter()
        .filter_map(|r| r.last_transition.map(|t| (t - start - r.width, r.width)))
        .max_by(|a, b| a.0.total_cmp(&b.0));
    predicates.push(Predicate {
        name: "F5",
        holds: lag.is_none_or(|(l, _)| l < settle),
        witness: match lag {
            Some((l, w)) => format!("last transition {l} after the pulse end at width {w}"),
            None => "no output transitions".into(),
        },
    });
    Ok(SpfReport { predicates, rows })
}

/// The witness construction for forward circuits: from a pulse width `Δ0`
/// with non-zero output and a settling bound `K`, pick `ε`, bisect to a
/// width whose response has norm `ε` on `[0, T]` and inspect that response.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterWitness {
    pub delta0: f64,
    pub norm0: f64,
    pub horizon: f64,
    pub eps: f64,
    pub row: SweepRow,
}

impl FilterWitness {
    /// Either a pulse of width at most `ε` or a transition after `T`.
    pub fn exhibits_short_pulse(&self) -> bool {
        self.row.min_pulse.is_some_and(|p| p <= self.eps)
    }

    pub fn exhibits_late_transition(&self) -> bool {
        self.row.high_at_horizon
    }
}

pub fn filter_witness(
    setup: &PulseSetup<'_>,
    delta0: f64,
    settle: f64,
    tol: f64,
) -> Result<FilterWitness, SpfError> {
    let horizon = setup.start + 2.0 * delta0 + settle;
    let s = setup.with_horizon(horizon);
    let norm0 = s.row(delta0)?.norm;
    if norm0 <= 0.0 {
        return Err(SpfError::Range(format!("width {delta0} produces no output")));
    }
    let eps = 0.5 * delta0.min(norm0);
    let row = s.bisect_norm(delta0 * 1e-6, delta0, eps, tol)?;
    Ok(FilterWitness {
        delta0,
        norm0,
        horizon,
        eps,
        row,
    })
}

//! Ideal comparator `Θ_ξ`: 0 where `x ≤ ξ`, 1 where `x > ξ`.

use thiserror::Error;

use crate::modes::{Segment, Trajectory, DEFAULT_PROBES};
use crate::signals::{BinarySignal, SignalError, Transition};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThresholdError {
    #[error("more than {cap} crossings or critical points (last near t = {time})")]
    CapExceeded { cap: usize, time: f64 },
    #[error("component {component} out of range for a {dim}-dimensional trajectory")]
    ComponentOutOfRange { component: usize, dim: usize },
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Which state component is compared against which threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSpec {
    pub xi: f64,
    /// Zero-based state index.
    pub component: usize,
    pub time_tol: f64,
    /// Limit on crossings plus critical points per digitization.
    pub cap: usize,
    /// Uniform probes per closed-form segment.
    pub probes: usize,
}

impl ThresholdSpec {
    pub fn new(xi: f64) -> Self {
        Self {
            xi,
            component: 0,
            time_tol: 1e-12,
            cap: 1_000_000,
            probes: DEFAULT_PROBES,
        }
    }

    pub fn on_component(mut self, component: usize) -> Self {
        self.component = component;
        self
    }

    pub fn with_time_tol(mut self, time_tol: f64) -> Self {
        self.time_tol = time_tol;
        self
    }

    pub fn with_probes(mut self, probes: usize) -> Self {
        self.probes = probes;
        self
    }

    pub fn level(&self, x: &[f64]) -> bool {
        x[self.component] > self.xi
    }
}

/// Digitization result with the intervals where the trajectory sat exactly
/// on the threshold (mapped to 0).
#[derive(Debug, Clone, PartialEq)]
pub struct Digitized {
    pub signal: BinarySignal,
    pub plateaus: Vec<(f64, f64)>,
}

#[derive(Clone, Copy)]
struct Probe {
    t: f64,
    g: f64,
    d: f64,
}

struct Scan<'a> {
    seg: &'a Segment,
    spec: &'a ThresholdSpec,
    out: Vec<Transition>,
    plateaus: Vec<(f64, f64)>,
    budget: usize,
    x: Vec<f64>,
}

const MAX_REFINE_DEPTH: u32 = 6;

impl Scan<'_> {
    fn probe(&mut self, t: f64) -> Probe {
        self.seg.eval_into(t, &mut self.x);
        let g = self.x[self.spec.component] - self.spec.xi;
        let d = self.seg.derivative(t, &self.x)[self.spec.component];
        Probe { t, g, d }
    }

    fn g(&mut self, t: f64) -> f64 {
        self.seg.eval_into(t, &mut self.x);
        self.x[self.spec.component] - self.spec.xi
    }

    fn spend(&mut self, t: f64) -> Result<(), ThresholdError> {
        if self.budget == 0 {
            return Err(ThresholdError::CapExceeded {
                cap: self.spec.cap,
                time: t,
            });
        }
        self.budget -= 1;
        Ok(())
    }

    /// First time in `(lo, hi]` at the level opposite to `lo`'s, up to `time_tol`.
    fn bisect_level(&mut self, mut lo: f64, mut hi: f64) -> f64 {
        let start_level = self.g(lo) > 0.0;
        for _ in 0..200 {
            if hi - lo <= self.spec.time_tol {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if (self.g(mid) > 0.0) == start_level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    fn bisect_derivative(&mut self, p: Probe, q: Probe) -> Probe {
        let (mut lo, mut hi) = (p, q);
        for _ in 0..200 {
            if hi.t - lo.t <= self.spec.time_tol {
                break;
            }
            let mid_t = 0.5 * (lo.t + hi.t);
            if mid_t <= lo.t || mid_t >= hi.t {
                break;
            }
            let mid = self.probe(mid_t);
            if (mid.d > 0.0) == (lo.d > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if lo.g.abs() > hi.g.abs() {
            lo
        } else {
            hi
        }
    }

    fn push(&mut self, t: f64, value: bool) -> Result<(), ThresholdError> {
        self.spend(t)?;
        self.out.push(Transition::new(t, value));
        Ok(())
    }

    fn interval(&mut self, p: Probe, q: Probe, depth: u32) -> Result<(), ThresholdError> {
        let (lp, lq) = (p.g > 0.0, q.g > 0.0);
        if lp != lq {
            let t = self.bisect_level(p.t, q.t);
            return self.push(t, lq);
        }
        if p.g == 0.0 && q.g == 0.0 {
            self.plateaus.push((p.t, q.t));
            return Ok(());
        }
        if p.d * q.d < 0.0 {
            // an extremum sits between the probes
            let c = self.bisect_derivative(p, q);
            self.spend(c.t)?;
            let c = self.probe(c.t);
            if (c.g > 0.0) != lp {
                let t1 = self.bisect_level(p.t, c.t);
                self.push(t1, !lp)?;
                let t2 = self.bisect_level(c.t, q.t);
                self.push(t2, lp)?;
            }
            return Ok(());
        }
        let variation = (q.g - p.g).abs();
        let near = p.g.abs().min(q.g.abs()) < 10.0 * variation;
        if depth < MAX_REFINE_DEPTH && near && q.t - p.t > 4.0 * self.spec.time_tol {
            let m = self.probe(0.5 * (p.t + q.t));
            self.interval(p, m, depth + 1)?;
            self.interval(m, q, depth + 1)?;
        }
        Ok(())
    }
}

fn check_component(spec: &ThresholdSpec, dim: usize) -> Result<(), ThresholdError> {
    if spec.component < dim {
        Ok(())
    } else {
        Err(ThresholdError::ComponentOutOfRange {
            component: spec.component,
            dim,
        })
    }
}

/// Level changes of `Θ_ξ(x_k(t))` on `[from, to] ∩ segment`, relative to the
/// level at `from`. Each transition time is the first time, to `time_tol`,
/// at which the new level holds.
pub fn segment_crossings(
    seg: &Segment,
    spec: &ThresholdSpec,
    from: f64,
    to: f64,
) -> Result<Vec<Transition>, ThresholdError> {
    Ok(scan_segment(seg, spec, from, to, spec.cap)?.0)
}

/// Crossings, unresolved plateaus and the remaining crossing budget.
type ScanResult = (Vec<Transition>, Vec<(f64, f64)>, usize);

fn scan_segment(
    seg: &Segment,
    spec: &ThresholdSpec,
    from: f64,
    to: f64,
    budget: usize,
) -> Result<ScanResult, ThresholdError> {
    check_component(spec, seg.dim())?;
    let mut scan = Scan {
        seg,
        spec,
        out: Vec::new(),
        plateaus: Vec::new(),
        budget,
        x: vec![0.0; seg.dim()],
    };
    let times = seg.probe_times(from, to, spec.probes);
    let mut prev = scan.probe(times[0]);
    for &t in &times[1..] {
        let next = scan.probe(t);
        scan.interval(prev, next, 0)?;
        prev = next;
    }
    Ok((scan.out, scan.plateaus, scan.budget))
}

/// `Θ_ξ ∘ π_k ∘ x` as a binary signal, plus plateau diagnostics.
pub fn digitize_report(traj: &Trajectory, spec: &ThresholdSpec) -> Result<Digitized, ThresholdError> {
    check_component(spec, traj.dim())?;
    let initial = spec.level(&traj.eval(0.0));
    let mut changes = Vec::new();
    let mut plateaus = Vec::new();
    let mut budget = spec.cap;
    for seg in traj.segments() {
        let (trs, pl, left) = scan_segment(seg, spec, seg.start(), seg.end(), budget)?;
        budget = left;
        changes.extend(trs.into_iter().map(|tr| (tr.time, tr.value)));
        plateaus.extend(pl);
    }
    let signal = BinarySignal::from_changes(initial, changes, traj.horizon())?;
    Ok(Digitized { signal, plateaus })
}

pub fn digitize(traj: &Trajectory, spec: &ThresholdSpec) -> Result<BinarySignal, ThresholdError> {
    Ok(digitize_report(traj, spec)?.signal)
}

/// Crossing of a closed-form segment's analytic continuation inside
/// `[lo, hi]`, which may extend before the segment's start. Requires opposite
/// levels at the two ends.
pub fn extended_crossing(seg: &Segment, spec: &ThresholdSpec, lo: f64, hi: f64) -> Option<f64> {
    if !seg.is_closed_form() || spec.component >= seg.dim() {
        return None;
    }
    let g = |t: f64| seg.eval(t)[spec.component] - spec.xi;
    let (mut a, mut b) = (lo, hi);
    let la = g(a) > 0.0;
    if (g(b) > 0.0) == la {
        return None;
    }
    for _ in 0..200 {
        if b - a <= spec.time_tol {
            break;
        }
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if (g(m) > 0.0) == la {
            a = m;
        } else {
            b = m;
        }
    }
    Some(b)
}

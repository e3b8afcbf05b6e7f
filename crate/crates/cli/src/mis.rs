//! Multiple-input switching: output delay of a two-input gate against the
//! separation of its two input transitions.

use std::sync::Arc;

use hgsim_core::gates::{gate_output, GateError, GateSpec};
use hgsim_core::modes::SolverConfig;
use hgsim_core::signals::BinarySignal;
use rayon::prelude::*;

/// Both inputs start high and fall; `first` falls at `t0` and the other
/// slot `separation` later.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FallingPair {
    pub first: usize,
    pub t0: f64,
    pub horizon: f64,
}

impl Default for FallingPair {
    fn default() -> Self {
        Self {
            first: 1,
            t0: 1.0,
            horizon: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MisRow {
    pub separation: f64,
    /// Rising output time minus the later input fall, `None` without a rise.
    pub delay: Option<f64>,
}

impl FallingPair {
    pub fn inputs(&self, separation: f64) -> Result<[BinarySignal; 2], GateError> {
        let fall = |t: f64| BinarySignal::from_changes(true, [(t, false)], self.horizon);
        let (early, late) = (fall(self.t0)?, fall(self.t0 + separation)?);
        Ok(if self.first == 0 { [early, late] } else { [late, early] })
    }

    pub fn delay(&self, g: &Arc<GateSpec>, separation: f64, cfg: &SolverConfig) -> Result<MisRow, GateError> {
        if g.arity() != 2 || g.initial_inputs != [true, true] {
            return Err(GateError::Measurement(
                "needs a two-input gate whose inputs start high".into(),
            ));
        }
        let out = gate_output(g, &self.inputs(separation)?, cfg)?.output;
        let last_fall = self.t0 + separation;
        let delay = out
            .transitions()
            .iter()
            .find(|tr| tr.value && tr.time >= last_fall)
            .map(|tr| tr.time - last_fall);
        Ok(MisRow { separation, delay })
    }

    /// One row per separation, in input order.
    pub fn sweep(&self, g: &Arc<GateSpec>, separations: &[f64], cfg: &SolverConfig) -> Result<Vec<MisRow>, GateError> {
        separations.par_iter().map(|&s| self.delay(g, s, cfg)).collect()
    }
}

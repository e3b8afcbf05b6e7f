//! TOML circuit files.
//!
//! ```toml
//! [defaults]
//! horizon = 10.0
//!
//! [[vertices]]
//! id = "I"
//! kind = "input"
//!
//! [[vertices]]
//! id = "G"
//! kind = "idm"
//! delays = [0.1]
//! initial_inputs = [false]
//! params = { tau_up = 1.0, tau_down = 1.0, xi = 0.5 }
//!
//! [[vertices]]
//! id = "O"
//! kind = "output"
//!
//! [[edges]]
//! from = "I"
//! to = "G"
//! slot = 0
//!
//! [[edges]]
//! from = "G"
//! to = "O"
//!
//! [[stimuli]]
//! port = "I"
//! initial = false
//! transitions = [1.0, 3.0]
//! ```
//!
//! Vertex kinds: `input`, `output`, `constant` (`value`), `idm`, `simple_nor`,
//! `advanced_nor`, `heater`, `boolean` (`params.function`). Stimuli give
//! either alternating `transitions`, a `pulse = { start, width }` or a
//! transition-list CSV `file`.

use std::collections::BTreeMap;
use std::path::Path;

use hgsim_core::circuit::{Circuit, CircuitError, InputSignals, UnrolledCircuit, VertexKind};
use hgsim_core::gates::{
    make_advanced_nor, make_boolean_gate, make_heater_plant, make_idm_channel, make_simple_nor,
    GateSpec, IdmParams, NorParamsAdvanced, NorParamsSimple, TruthTable,
};
use hgsim_core::signals::{BinarySignal, Pulse, SignalError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("cannot parse circuit file: {0}")]
    Syntax(String),
    #[error("vertex `{id}` has unknown kind `{kind}`")]
    UnknownKind { id: String, kind: String },
    #[error("vertex `{id}`: {msg}")]
    BadVertex { id: String, msg: String },
    #[error("edge references undefined vertex `{0}`")]
    UndefinedId(String),
    #[error("stimulus for `{port}`: {msg}")]
    BadStimulus { port: String, msg: String },
    #[error("cannot read `{path}`: {msg}")]
    Io { path: String, msg: String },
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Defaults {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexDecl {
    pub id: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub delays: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub initial_inputs: Vec<bool>,
    #[serde(default, skip_serializing_if = "toml::Table::is_empty")]
    pub params: toml::Table,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDecl {
    pub from: String,
    pub to: String,
    #[serde(default)]
    pub slot: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseDecl {
    pub start: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StimulusDecl {
    pub port: String,
    #[serde(default)]
    pub initial: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transitions: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse: Option<PulseDecl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitFile {
    #[serde(default)]
    pub defaults: Defaults,
    pub vertices: Vec<VertexDecl>,
    #[serde(default)]
    pub edges: Vec<EdgeDecl>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stimuli: Vec<StimulusDecl>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IdmDecl {
    #[serde(default = "one")]
    tau_up: f64,
    #[serde(default = "one")]
    tau_down: f64,
    #[serde(default = "half")]
    xi: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimpleNorDecl {
    #[serde(default = "one")]
    r1: f64,
    #[serde(default = "one")]
    r2: f64,
    #[serde(default = "one")]
    r3: f64,
    #[serde(default = "one")]
    r4: f64,
    #[serde(default = "one")]
    c: f64,
    #[serde(default = "one")]
    c_int: f64,
    #[serde(default = "one")]
    vdd: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AdvancedNorDecl {
    #[serde(default = "one")]
    alpha1: f64,
    #[serde(default = "one")]
    alpha2: f64,
    #[serde(default = "one")]
    r: f64,
    #[serde(default = "one")]
    r_na: f64,
    #[serde(default = "one")]
    r_nb: f64,
    #[serde(default = "one")]
    c: f64,
    #[serde(default = "one")]
    vdd: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaterDecl {
    #[serde(default = "twenty")]
    x0: f64,
    #[serde(default = "nineteen")]
    xi: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BooleanDecl {
    function: String,
    tau_fast: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn twenty() -> f64 {
    20.0
}

fn nineteen() -> f64 {
    19.0
}

impl VertexDecl {
    fn bad(&self, msg: impl Into<String>) -> FormatError {
        FormatError::BadVertex {
            id: self.id.clone(),
            msg: msg.into(),
        }
    }

    fn params<T: for<'de> Deserialize<'de>>(&self) -> Result<T, FormatError> {
        self.params
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| self.bad(format!("bad params: {}", e.message())))
    }

    fn arity(&self, expected: usize) -> Result<(Vec<f64>, Vec<bool>), FormatError> {
        if self.delays.len() != expected {
            return Err(self.bad(format!(
                "expected {expected} delays, got {}",
                self.delays.len()
            )));
        }
        let initial = if self.initial_inputs.is_empty() {
            vec![false; expected]
        } else {
            self.initial_inputs.clone()
        };
        if initial.len() != expected {
            return Err(self.bad(format!(
                "expected {expected} initial inputs, got {}",
                initial.len()
            )));
        }
        Ok((self.delays.clone(), initial))
    }

    fn gate_spec(&self) -> Result<Option<GateSpec>, FormatError> {
        let spec = match self.kind.as_str() {
            "input" | "output" | "constant" => return Ok(None),
            "idm" => {
                let p: IdmDecl = self.params()?;
                let (d, init) = self.arity(1)?;
                make_idm_channel(
                    IdmParams {
                        tau_up: p.tau_up,
                        tau_down: p.tau_down,
                        delta_min: d[0],
                        xi: p.xi,
                    },
                    init[0],
                )
            }
            "simple_nor" => {
                let p: SimpleNorDecl = self.params()?;
                let (d, init) = self.arity(2)?;
                let params = NorParamsSimple {
                    r1: p.r1,
                    r2: p.r2,
                    r3: p.r3,
                    r4: p.r4,
                    c: p.c,
                    c_int: p.c_int,
                    vdd: p.vdd,
                };
                make_simple_nor(params, d[0], d[1], [init[0], init[1]])
            }
            "advanced_nor" => {
                let p: AdvancedNorDecl = self.params()?;
                let (d, init) = self.arity(2)?;
                let params = NorParamsAdvanced {
                    alpha1: p.alpha1,
                    alpha2: p.alpha2,
                    r: p.r,
                    r_na: p.r_na,
                    r_nb: p.r_nb,
                    c: p.c,
                    vdd: p.vdd,
                };
                make_advanced_nor(params, d[0], d[1], [init[0], init[1]])
            }
            "heater" => {
                let p: HeaterDecl = self.params()?;
                let (d, init) = self.arity(1)?;
                make_heater_plant(d[0], p.xi, p.x0, init[0])
            }
            "boolean" => {
                let p: BooleanDecl = self.params()?;
                let arity = self.delays.len();
                let table = TruthTable::named(&p.function, arity).ok_or_else(|| {
                    self.bad(format!("unknown function `{}` of arity {arity}", p.function))
                })?;
                let (d, init) = self.arity(arity)?;
                make_boolean_gate(&table, d, init, p.tau_fast)
            }
            other => {
                return Err(FormatError::UnknownKind {
                    id: self.id.clone(),
                    kind: other.to_string(),
                })
            }
        };
        Ok(Some(spec))
    }
}

impl CircuitFile {
    pub fn parse(text: &str) -> Result<Self, FormatError> {
        toml::from_str(text).map_err(|e| FormatError::Syntax(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("circuit files serialize")
    }

    /// Builds the circuit; gate thresholds use `time_tol` when given.
    pub fn build(&self, time_tol: Option<f64>) -> Result<Circuit, FormatError> {
        let mut c = Circuit::new();
        for v in &self.vertices {
            match v.kind.as_str() {
                "input" => {
                    c.add_input(&v.id)?;
                }
                "output" => {
                    c.add_output(&v.id)?;
                }
                "constant" => {
                    let value = v.value.ok_or_else(|| v.bad("constant needs `value`"))?;
                    c.add_constant(&v.id, value)?;
                }
                _ => {
                    let mut spec = v.gate_spec()?.expect("gate kind");
                    if let Some(tol) = time_tol {
                        spec.threshold = spec.threshold.with_time_tol(tol);
                    }
                    c.add_gate(&v.id, spec)?;
                }
            }
        }
        for e in &self.edges {
            for id in [&e.from, &e.to] {
                if c.index_of(id).is_err() {
                    return Err(FormatError::UndefinedId(id.clone()));
                }
            }
            c.connect(&e.from, &e.to, e.slot)?;
        }
        for s in &self.stimuli {
            match c.index_of(&s.port) {
                Ok(v) if matches!(c.vertex(v).kind, VertexKind::Input) => {}
                _ => return Err(FormatError::UndefinedId(s.port.clone())),
            }
        }
        Ok(c)
    }

    /// Input signals from the `stimuli` table; relative `file` paths are
    /// resolved against `base`.
    pub fn inputs(&self, horizon: f64, base: &Path) -> Result<InputSignals, FormatError> {
        let mut out = BTreeMap::new();
        for s in &self.stimuli {
            out.insert(s.port.clone(), s.signal(horizon, base)?);
        }
        Ok(out)
    }

    /// The unrolled circuit as a file, reusing the declarations of `self`.
    pub fn from_unrolled(&self, u: &UnrolledCircuit, original: &Circuit) -> Self {
        let decl_of = |id: &str| self.vertices.iter().find(|v| v.id == id);
        let vertices = u
            .circuit
            .vertices()
            .iter()
            .zip(&u.origin)
            .map(|(vx, origin)| match origin {
                Some(o) => {
                    let mut d = decl_of(&original.vertex(*o).id)
                        .expect("origin declared")
                        .clone();
                    d.id = vx.id.clone();
                    d
                }
                None => VertexDecl {
                    id: vx.id.clone(),
                    kind: "constant".into(),
                    delays: Vec::new(),
                    initial_inputs: Vec::new(),
                    params: toml::Table::new(),
                    value: Some(matches!(vx.kind, VertexKind::Constant(true))),
                },
            })
            .collect();
        let edges = u
            .circuit
            .edges()
            .iter()
            .map(|e| EdgeDecl {
                from: u.circuit.vertex(e.from).id.clone(),
                to: u.circuit.vertex(e.to).id.clone(),
                slot: e.slot,
            })
            .collect();
        let ports: Vec<&str> = u
            .circuit
            .input_ports()
            .into_iter()
            .map(|v| u.circuit.vertex(v).id.as_str())
            .collect();
        Self {
            defaults: self.defaults.clone(),
            vertices,
            edges,
            stimuli: self
                .stimuli
                .iter()
                .filter(|s| ports.contains(&s.port.as_str()))
                .cloned()
                .collect(),
        }
    }
}

impl StimulusDecl {
    fn bad(&self, msg: impl Into<String>) -> FormatError {
        FormatError::BadStimulus {
            port: self.port.clone(),
            msg: msg.into(),
        }
    }

    pub fn signal(&self, horizon: f64, base: &Path) -> Result<BinarySignal, FormatError> {
        let given = [!self.transitions.is_empty(), self.pulse.is_some(), self.file.is_some()];
        if given.iter().filter(|&&g| g).count() > 1 {
            return Err(self.bad("give only one of `transitions`, `pulse`, `file`"));
        }
        if let Some(p) = self.pulse {
            if self.initial {
                return Err(self.bad("a pulse starts from 0"));
            }
            let pulse = Pulse::new(p.start, p.width).map_err(|e| self.bad(e.to_string()))?;
            return Ok(BinarySignal::pulse(pulse, horizon)?);
        }
        if let Some(file) = &self.file {
            let path = base.join(file);
            let text = std::fs::read_to_string(&path).map_err(|e| FormatError::Io {
                path: path.display().to_string(),
                msg: e.to_string(),
            })?;
            let s = BinarySignal::from_csv(&text)?;
            return Ok(s.with_horizon(horizon)?);
        }
        let mut level = self.initial;
        let changes: Vec<(f64, bool)> = self
            .transitions
            .iter()
            .map(|&t| {
                level = !level;
                (t, level)
            })
            .collect();
        if changes.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(self.bad("transition times must increase"));
        }
        Ok(BinarySignal::from_changes(self.initial, changes, horizon)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CHAIN: &str = r#"
[defaults]
horizon = 4.0

[[vertices]]
id = "I"
kind = "input"

[[vertices]]
id = "N"
kind = "boolean"
delays = [0.1]
params = { function = "not" }

[[vertices]]
id = "O"
kind = "output"

[[edges]]
from = "I"
to = "N"

[[edges]]
from = "N"
to = "O"

[[stimuli]]
port = "I"
transitions = [1.0, 2.0]
"#;

    #[test]
    fn parses_and_builds() {
        let f = CircuitFile::parse(CHAIN).unwrap();
        let c = f.build(None).unwrap();
        assert!(c.validate().is_ok());
        let inputs = f.inputs(4.0, Path::new(".")).unwrap();
        assert_eq!(inputs["I"].transitions().len(), 2);
    }

    #[test]
    fn unknown_kind_is_rejected() {
        let text = CHAIN.replace("kind = \"boolean\"", "kind = \"flux\"");
        let err = CircuitFile::parse(&text).unwrap().build(None).unwrap_err();
        assert!(matches!(err, FormatError::UnknownKind { .. }));
    }

    #[test]
    fn undefined_edge_endpoint_is_rejected() {
        let text = CHAIN.replace("from = \"N\"", "from = \"M\"");
        let err = CircuitFile::parse(&text).unwrap().build(None).unwrap_err();
        assert!(matches!(err, FormatError::UndefinedId(id) if id == "M"));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = CHAIN.replace("horizon = 4.0", "horizon = 4.0\nspeed = 3");
        assert!(matches!(CircuitFile::parse(&text), Err(FormatError::Syntax(_))));
        let text = CHAIN.replace("function = \"not\"", "function = \"not\", gain = 2");
        let err = CircuitFile::parse(&text).unwrap().build(None).unwrap_err();
        assert!(err.to_string().contains("gain"));
    }

    #[test]
    fn toml_round_trip() {
        let f = CircuitFile::parse(CHAIN).unwrap();
        assert_eq!(CircuitFile::parse(&f.to_toml()).unwrap(), f);
    }
}

//! Random feedback circuits and stimuli for property tests and sweeps.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::circuit::Circuit;
use crate::gates::{make_boolean_gate, TruthTable};
use crate::signals::BinarySignal;

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitShape {
    pub max_gates: usize,
    pub max_input_ports: usize,
    pub min_delay: f64,
    pub max_delay: f64,
}

impl Default for CircuitShape {
    fn default() -> Self {
        Self {
            max_gates: 6,
            max_input_ports: 2,
            min_delay: 0.05,
            max_delay: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomCircuit {
    pub circuit: Circuit,
    /// Input port ids with their initial values.
    pub inputs: Vec<(String, bool)>,
    pub output: String,
    /// Gate name and truth-table name of every gate, in id order.
    pub gates: Vec<(String, &'static str)>,
}

const ONE_INPUT: [&str; 2] = ["buf", "not"];
const TWO_INPUT: [&str; 6] = ["and", "or", "nand", "nor", "xor", "xnor"];

struct Draft {
    tables: Vec<(&'static str, TruthTable)>,
    /// Driver per gate slot: `Ok(port)` or `Err(gate)`.
    drivers: Vec<Vec<Result<usize, usize>>>,
}

impl Draft {
    fn has_cycle(&self) -> bool {
        let n = self.tables.len();
        // 0 unvisited, 1 on stack, 2 done
        fn visit(d: &Draft, g: usize, state: &mut [u8]) -> bool {
            state[g] = 1;
            for src in &d.drivers[g] {
                if let Err(h) = *src {
                    if state[h] == 1 || (state[h] == 0 && visit(d, h, state)) {
                        return true;
                    }
                }
            }
            state[g] = 2;
            false
        }
        let mut state = vec![0u8; n];
        (0..n).any(|g| state[g] == 0 && visit(self, g, &mut state))
    }

    fn reads_input(&self) -> bool {
        self.drivers.iter().flatten().any(|d| d.is_ok())
    }

    fn consistent(&self, ports: &[bool], gates: &[bool]) -> bool {
        self.tables.iter().enumerate().all(|(g, (_, t))| {
            let bits: Vec<bool> = self.drivers[g]
                .iter()
                .map(|d| match *d {
                    Ok(p) => ports[p],
                    Err(h) => gates[h],
                })
                .collect();
            t.eval(&bits) == gates[g]
        })
    }
}

/// Draws a circuit of Boolean gates with at least one feedback loop and a
/// consistent initial state, driving a single output port from the last gate.
pub fn random_feedback_circuit<R: Rng>(rng: &mut R, shape: &CircuitShape) -> RandomCircuit {
    loop {
        let n_gates = rng.gen_range(1..=shape.max_gates.max(1));
        let n_ports = rng.gen_range(1..=shape.max_input_ports.max(1));
        let tables: Vec<(&'static str, TruthTable)> = (0..n_gates)
            .map(|_| {
                let arity = rng.gen_range(1..=2);
                let name = if arity == 1 {
                    *ONE_INPUT.choose(rng).expect("nonempty")
                } else {
                    *TWO_INPUT.choose(rng).expect("nonempty")
                };
                (name, TruthTable::named(name, arity).expect("known gate"))
            })
            .collect();
        let drivers = tables
            .iter()
            .map(|(_, t)| {
                (0..t.arity())
                    .map(|_| {
                        let k = rng.gen_range(0..n_ports + n_gates);
                        if k < n_ports {
                            Ok(k)
                        } else {
                            Err(k - n_ports)
                        }
                    })
                    .collect()
            })
            .collect();
        let draft = Draft { tables, drivers };
        if !draft.has_cycle() || !draft.reads_input() {
            continue;
        }
        let ports: Vec<bool> = (0..n_ports).map(|_| rng.gen()).collect();
        let fixpoints: Vec<Vec<bool>> = (0..1usize << n_gates)
            .map(|m| (0..n_gates).map(|g| m >> g & 1 == 1).collect::<Vec<bool>>())
            .filter(|gates| draft.consistent(&ports, gates))
            .collect();
        let Some(state) = fixpoints.choose(rng).cloned() else {
            continue;
        };
        return build(rng, shape, &draft, &ports, &state);
    }
}

fn build<R: Rng>(
    rng: &mut R,
    shape: &CircuitShape,
    draft: &Draft,
    ports: &[bool],
    state: &[bool],
) -> RandomCircuit {
    let port_id = |p: usize| format!("I{p}");
    let gate_id = |g: usize| format!("G{g}");
    let mut c = Circuit::new();
    for p in 0..ports.len() {
        c.add_input(&port_id(p)).expect("fresh id");
    }
    for (g, (_, table)) in draft.tables.iter().enumerate() {
        let delays = (0..table.arity())
            .map(|_| rng.gen_range(shape.min_delay..=shape.max_delay))
            .collect();
        let initial = draft.drivers[g]
            .iter()
            .map(|d| match *d {
                Ok(p) => ports[p],
                Err(h) => state[h],
            })
            .collect();
        c.add_gate(&gate_id(g), make_boolean_gate(table, delays, initial, None))
            .expect("fresh id");
    }
    for (g, slots) in draft.drivers.iter().enumerate() {
        for (slot, d) in slots.iter().enumerate() {
            let from = match *d {
                Ok(p) => port_id(p),
                Err(h) => gate_id(h),
            };
            c.connect(&from, &gate_id(g), slot).expect("known ids");
        }
    }
    let last = draft.tables.len() - 1;
    c.add_output("O").expect("fresh id");
    c.connect(&gate_id(last), "O", 0).expect("known ids");
    RandomCircuit {
        circuit: c,
        inputs: ports.iter().enumerate().map(|(p, &b)| (port_id(p), b)).collect(),
        output: "O".into(),
        gates: draft
            .tables
            .iter()
            .enumerate()
            .map(|(g, (name, _))| (gate_id(g), *name))
            .collect(),
    }
}

/// Up to `max_transitions` transitions in `[0, active]`, at least `min_gap`
/// apart.
pub fn random_stimulus<R: Rng>(
    rng: &mut R,
    initial: bool,
    max_transitions: usize,
    active: f64,
    min_gap: f64,
    horizon: f64,
) -> BinarySignal {
    let n = rng.gen_range(1..=max_transitions.max(1));
    let mut times: Vec<f64> = (0..n).map(|_| rng.gen_range(min_gap..active)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup_by(|b, a| *b - *a < min_gap);
    let mut level = initial;
    let changes = times.into_iter().map(|t| {
        level = !level;
        (t, level)
    });
    BinarySignal::from_changes(initial, changes, horizon).expect("sorted times")
}

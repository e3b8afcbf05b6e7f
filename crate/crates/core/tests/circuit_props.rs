use hgsim_core::circuit::{
    compare_executions, execute, exactness_horizons, unroll, Circuit, ExecuteOptions, Execution,
    InputSignals, VertexKind, ZValue,
};
use hgsim_core::gates::{gate_output, make_boolean_gate, TruthTable};
use hgsim_core::modes::SolverConfig;
use hgsim_core::signals::{BinarySignal, Pulse, Transition};
use hgsim_core::testkit::{random_feedback_circuit, random_stimulus, CircuitShape, RandomCircuit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const HORIZON: f64 = 5.0;

fn random_case(rng: &mut ChaCha8Rng) -> (RandomCircuit, InputSignals) {
    let rc = random_feedback_circuit(rng, &CircuitShape::default());
    let inputs = rc
        .inputs
        .iter()
        .map(|(id, init)| (id.clone(), random_stimulus(rng, *init, 4, 4.0, 0.05, HORIZON)))
        .collect();
    (rc, inputs)
}

fn bits(ex: &Execution) -> Vec<Vec<(u64, bool, u32)>> {
    ex.records
        .iter()
        .map(|rs| rs.iter().map(|r| (r.time.to_bits(), r.value, r.depth)).collect())
        .collect()
}

#[test]
fn execution_is_independent_of_insertion_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..20 {
        let (rc, inputs) = random_case(&mut rng);
        let base = execute(&rc.circuit, &inputs, &ExecuteOptions::new(HORIZON)).unwrap();
        let again = execute(&rc.circuit, &inputs, &ExecuteOptions::new(HORIZON)).unwrap();
        assert_eq!(base, again);
        for seed in 0..5 {
            let mut opts = ExecuteOptions::new(HORIZON);
            opts.insertion_seed = Some(rng.gen::<u64>() ^ seed);
            let ex = execute(&rc.circuit, &inputs, &opts).unwrap();
            assert_eq!(bits(&ex), bits(&base));
            assert_eq!(ex.iteration_times, base.iteration_times);
        }
    }
}

#[test]
fn causal_depths_respect_the_lemma() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for _ in 0..50 {
        let (rc, inputs) = random_case(&mut rng);
        let delta_min = rc.circuit.validate().delta_min.unwrap();
        let ex = execute(&rc.circuit, &inputs, &ExecuteOptions::new(HORIZON)).unwrap();
        for w in ex.iteration_times.windows(2) {
            assert!(w[1] > w[0]);
        }
        for rs in &ex.records {
            for w in rs.windows(2) {
                assert!(w[1].depth >= w[0].depth);
                assert!(w[1].time > w[0].time);
            }
            for r in rs {
                assert!(r.depth as usize <= r.iteration);
                assert!(r.iteration >= 1 && r.iteration <= ex.iteration_times.len());
                assert!(r.time >= r.depth as f64 * delta_min - 1e-9);
                if let Some(cause) = r.cause {
                    assert!(r.time - cause >= delta_min - 1e-12);
                }
            }
        }
    }
}

#[test]
fn execution_respects_gate_functions() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let cfg = SolverConfig::default();
    for _ in 0..40 {
        let (rc, inputs) = random_case(&mut rng);
        let c = &rc.circuit;
        let ex = execute(c, &inputs, &ExecuteOptions::new(HORIZON)).unwrap();
        for v in c.output_ports() {
            let d = c.drivers(v)[0].unwrap();
            assert_eq!(ex.signal(v), ex.signal(d));
        }
        for v in c.input_ports() {
            assert_eq!(&ex.signal(v), &inputs[&c.vertex(v).id]);
        }
        for v in c.gates() {
            let VertexKind::Gate(g) = &c.vertex(v).kind else { unreachable!() };
            let ins: Vec<BinarySignal> =
                c.drivers(v).into_iter().map(|d| ex.signal(d.unwrap())).collect();
            let expected = gate_output(g, &ins, &cfg).unwrap().output;
            let got = ex.signal(v);
            assert_eq!(got.transitions().len(), expected.transitions().len());
            for (a, b) in got.transitions().iter().zip(expected.transitions()) {
                assert_eq!(a.value, b.value);
                assert!((a.time - b.time).abs() <= 10.0 * g.threshold.time_tol);
            }
        }
    }
}

fn is_acyclic(c: &Circuit) -> bool {
    let n = c.len();
    let mut indeg = vec![0usize; n];
    for e in c.edges() {
        indeg[e.to] += 1;
    }
    let mut ready: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0;
    while let Some(v) = ready.pop() {
        seen += 1;
        for e in c.edges().iter().filter(|e| e.from == v) {
            indeg[e.to] -= 1;
            if indeg[e.to] == 0 {
                ready.push(e.to);
            }
        }
    }
    seen == n
}

#[test]
fn unrollings_are_forward_with_large_z() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    for _ in 0..50 {
        let rc = random_feedback_circuit(&mut rng, &CircuitShape::default());
        for k in 0..=5 {
            let u = unroll(&rc.circuit, &rc.output, k).unwrap();
            assert!(is_acyclic(&u.circuit));
            assert!(u.circuit.validate().is_ok());
            assert!(u.z[u.sink] >= ZValue::Finite(k as u32));
            for id in ["X_0", "X_1"] {
                if let Some(z) = u.z_of(id) {
                    assert_eq!(z, ZValue::Finite(0));
                }
            }
            for (v, level) in u.level.iter().enumerate() {
                if let (Some(level), VertexKind::Gate(_)) = (level, &u.circuit.vertex(v).kind) {
                    assert!(u.z[v] >= ZValue::Finite(*level as u32));
                }
            }
        }
    }
}

#[test]
fn unrolled_copies_agree_before_their_horizon() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let opts = ExecuteOptions::new(HORIZON);
    for _ in 0..50 {
        let (rc, inputs) = random_case(&mut rng);
        let full = execute(&rc.circuit, &inputs, &opts).unwrap();
        for k in 1..=4 {
            let u = unroll(&rc.circuit, &rc.output, k).unwrap();
            let part = execute(&u.circuit, &inputs, &opts).unwrap();
            let h = exactness_horizons(&rc.circuit, &u, &full);
            for (copy, origin) in u.origin.iter().enumerate() {
                let Some(v) = *origin else { continue };
                let early = |rs: &[hgsim_core::circuit::TransitionRecord]| -> Vec<(f64, bool)> {
                    rs.iter().filter(|r| r.time < h[copy]).map(|r| (r.time, r.value)).collect()
                };
                let (a, b) = (early(&full.records[v]), early(&part.records[copy]));
                assert_eq!(a.len(), b.len(), "{} vs {}", full.ids[v], part.ids[copy]);
                for (x, y) in a.iter().zip(&b) {
                    assert!((x.0 - y.0).abs() <= 1e-12 && x.1 == y.1);
                }
            }
        }
    }
}

fn gate(name: &str, arity: usize, delays: Vec<f64>, initial: Vec<bool>) -> hgsim_core::gates::GateSpec {
    make_boolean_gate(&TruthTable::named(name, arity).unwrap(), delays, initial, None)
}

/// I → A (buffer); B = OR(A, B); C = AND(A, B) → O.
fn fig3() -> Circuit {
    let mut c = Circuit::new();
    c.add_input("I").unwrap();
    c.add_gate("A", gate("buf", 1, vec![0.1], vec![false])).unwrap();
    c.add_gate("B", gate("or", 2, vec![0.1, 0.05], vec![false, false])).unwrap();
    c.add_gate("C", gate("and", 2, vec![0.1, 0.1], vec![false, false])).unwrap();
    c.add_output("O").unwrap();
    c.connect("I", "A", 0).unwrap();
    c.connect("A", "B", 0).unwrap();
    c.connect("B", "B", 1).unwrap();
    c.connect("A", "C", 0).unwrap();
    c.connect("B", "C", 1).unwrap();
    c.connect("C", "O", 0).unwrap();
    c
}

#[test]
fn fig3_z_values() {
    let u = unroll(&fig3(), "O", 3).unwrap();
    let z = |id: &str| u.z_of(id).unwrap();
    assert_eq!(z("X_0"), ZValue::Finite(0));
    assert_eq!(z("I"), ZValue::Infinite);
    assert_eq!(z("A^2"), ZValue::Infinite);
    assert_eq!(z("B^1"), ZValue::Finite(1));
    assert_eq!(z("B^2"), ZValue::Finite(2));
    assert_eq!(z("C^3"), ZValue::Finite(3));
    assert_eq!(z("O^3"), ZValue::Finite(3));
    assert_eq!(u.circuit.vertex(u.sink).id, "O^3");
}

#[test]
fn unrolled_storage_loop_forgets_latched_value() {
    // B latches the pulse; its copy B^2 only sees B^1 ≡ 0 and releases, with a
    // transition whose depth does not exceed z(B^2)
    let c = fig3();
    let pulse = BinarySignal::pulse(Pulse::new(1.0, 0.5).unwrap(), HORIZON).unwrap();
    let inputs: InputSignals = [("I".to_string(), pulse)].into_iter().collect();
    let opts = ExecuteOptions::new(HORIZON);
    let full = execute(&c, &inputs, &opts).unwrap();
    let u = unroll(&c, "O", 3).unwrap();
    let part = execute(&u.circuit, &inputs, &opts).unwrap();
    let b = full.vertex("B").unwrap();
    let b2 = part.vertex("B^2").unwrap();
    assert_eq!(full.records[b].len(), 1);
    assert_eq!(part.records[b2].len(), 2);
    let release = part.records[b2][1];
    assert!(!release.value && ZValue::Finite(2).admits(release.depth));
    let report = compare_executions(&u, &full, &part, 1e-12);
    assert_eq!(report.mismatches.len(), 1);
    assert_eq!(report.mismatches[0].copy, "B^2");
    assert!(report.mismatches[0].only_original.is_empty());
    assert!(full.signal_of("O").unwrap() == part.signal_of("O^3").unwrap());
}

#[test]
fn sr_latch_from_nor_gates_stores_set() {
    let mut c = Circuit::new();
    c.add_input("S").unwrap();
    c.add_input("R").unwrap();
    c.add_gate("Q", gate("nor", 2, vec![0.1, 0.1], vec![false, true])).unwrap();
    c.add_gate("Qb", gate("nor", 2, vec![0.1, 0.1], vec![false, false])).unwrap();
    c.add_output("O").unwrap();
    c.connect("R", "Q", 0).unwrap();
    c.connect("Qb", "Q", 1).unwrap();
    c.connect("S", "Qb", 0).unwrap();
    c.connect("Q", "Qb", 1).unwrap();
    c.connect("Q", "O", 0).unwrap();
    let set = BinarySignal::new(false, vec![Transition::rising(1.0), Transition::falling(1.4)], 10.0).unwrap();
    let reset = BinarySignal::new(false, vec![Transition::rising(5.0), Transition::falling(5.4)], 10.0).unwrap();
    let inputs: InputSignals = [("S".to_string(), set), ("R".to_string(), reset)].into_iter().collect();
    let ex = execute(&c, &inputs, &ExecuteOptions::new(10.0)).unwrap();
    let o = ex.signal_of("O").unwrap();
    assert!(!o.value_at(1.0) && o.value_at(1.5) && o.value_at(4.9) && !o.value_at(6.0));
    let depths: Vec<u32> = ex.records[ex.vertex("Q").unwrap()].iter().map(|r| r.depth).collect();
    assert_eq!(depths, vec![2, 2]);
}

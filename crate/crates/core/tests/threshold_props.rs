use std::sync::Arc;

use hgsim_core::gates::{
    gate_output, make_advanced_nor, make_heater_plant, make_idm_channel, make_simple_nor, GateSpec,
    IdmParams, NorParamsAdvanced, NorParamsSimple,
};
use hgsim_core::modes::{
    matching_output_signal, solve_mode, ModeClock, ModeFunction, SolverConfig, StateSpace,
    Trajectory,
};
use hgsim_core::signals::{one_norm_distance, BinarySignal, ModeId, ModeSwitchSignal, TIME_EPS};
use hgsim_core::testkit::random_stimulus;
use hgsim_core::threshold::{digitize, ThresholdSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn single(mode: ModeFunction, x0: f64, horizon: f64, space: &StateSpace) -> Trajectory {
    let seg = solve_mode(&Arc::new(mode), &[x0], 0.0, horizon, space, &SolverConfig::default())
        .unwrap();
    Trajectory::from_segments(vec![seg])
}

/// `e^{−t} + amp·sin(3t)`, integrated numerically.
fn perturbed_decay(amp: f64, space: &StateSpace) -> Trajectory {
    let rhs = move |t: f64, x: &[f64], out: &mut [f64]| {
        out[0] = -x[0] + amp * ((3.0 * t).sin() + 3.0 * (3.0 * t).cos());
    };
    let mode = ModeFunction::general(ModeId(0), "perturbed", 1, ModeClock::Absolute, Arc::new(rhs), 1.0, 3.0);
    single(mode, 1.0, 5.0, space)
}

#[test]
fn threshold_continuity_on_decay() {
    let space = StateSpace::cube(1, -1.0, 2.0).unwrap();
    let spec = ThresholdSpec::new(0.5);
    let x = single(ModeFunction::scalar_affine(ModeId(0), "decay", -1.0, 0.0, &space), 1.0, 5.0, &space);
    let reference = digitize(&x, &spec).unwrap();
    assert_eq!(reference.transitions().len(), 1);
    assert!((reference.transitions()[0].time - 2f64.ln()).abs() <= 1e-12);
    let slope = 0.5;
    let mut prev = f64::INFINITY;
    for k in 1..=6 {
        let amp = 10f64.powi(-k);
        let y = digitize(&perturbed_decay(amp, &space), &spec).unwrap();
        let d = one_norm_distance(&reference, &y).unwrap();
        assert!(d < prev, "not decreasing at {amp}");
        assert!(d < 10.0 * amp / slope, "{d} at {amp}");
        prev = d;
    }
}

#[test]
fn monotone_segment_has_one_accurate_crossing() {
    let space = StateSpace::cube(1, -0.01, 1.01).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..500 {
        let a = -rng.gen_range(0.1..3.0);
        let xi = rng.gen_range(0.05..0.95);
        let spec = ThresholdSpec::new(xi);
        // x(t) = 1 − e^{at}
        let x = single(ModeFunction::scalar_affine(ModeId(0), "rise", a, -a, &space), 0.0, 40.0, &space);
        let s = digitize(&x, &spec).unwrap();
        assert_eq!(s.transitions().len(), 1);
        let root = (1.0 - xi).ln() / a;
        assert!((s.transitions()[0].time - root).abs() <= spec.time_tol, "{a} {xi}");
    }
}

#[test]
fn unimodal_bump_matches_fine_grid() {
    // x(t) = t·e^{1−t} peaks at 1 when t = 1
    let space = StateSpace::cube(1, -0.1, 1.5).unwrap();
    let rhs = |t: f64, _x: &[f64], out: &mut [f64]| out[0] = (1.0 - t) * (1.0 - t).exp();
    let mode = ModeFunction::general(ModeId(0), "bump", 1, ModeClock::Absolute, Arc::new(rhs), 0.0, 1.0);
    let x = single(mode, 0.0, 5.0, &space);
    let spec = ThresholdSpec::new(0.6);
    let s = digitize(&x, &spec).unwrap();
    let n = 1_000_000;
    let mut level = false;
    let mut oracle = Vec::new();
    for i in 0..=n {
        let t = 5.0 * i as f64 / n as f64;
        let v = t * (1.0 - t).exp() > 0.6;
        if v != level {
            oracle.push(t);
            level = v;
        }
    }
    assert_eq!(oracle.len(), 2);
    assert_eq!(s.transitions().len(), 2);
    assert!(s.transitions()[0].value && !s.transitions()[1].value);
    for (tr, t) in s.transitions().iter().zip(oracle) {
        assert!((tr.time - t).abs() <= 5.0 / n as f64 + 1e-9);
    }
}

#[test]
fn digitized_signals_are_well_formed() {
    let g = make_simple_nor(NorParamsSimple::default(), 0.1, 0.1, [false, false]);
    let cfg = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let initial = rng.gen_range(0..4);
        let mut t = 0.0;
        let mut prev = initial;
        let mut switches = Vec::new();
        for _ in 0..rng.gen_range(0..8) {
            t += rng.gen_range(0.01..1.0);
            let next = (prev + rng.gen_range(1..4)) % 4;
            switches.push((t, ModeId(next)));
            prev = next;
        }
        let a = ModeSwitchSignal::new(ModeId(initial), switches, 10.0).unwrap();
        let x = matching_output_signal(&g.family, &a, &[1.0, 1.0], &cfg).unwrap();
        let s = digitize(&x, &g.threshold).unwrap();
        let rebuilt = BinarySignal::new(s.initial(), s.transitions().to_vec(), s.horizon()).unwrap();
        assert_eq!(rebuilt, s);
        for w in s.transitions().windows(2) {
            assert!(w[1].time - w[0].time > TIME_EPS);
        }
    }
}

fn grid_check(g: GateSpec, inputs: Vec<BinarySignal>) {
    let g = Arc::new(g);
    let run = gate_output(&g, &inputs, &SolverConfig::default()).unwrap();
    let base = digitize(&run.trajectory, &g.threshold).unwrap();
    for probes in [32, 128] {
        let other = digitize(&run.trajectory, &g.threshold.clone().with_probes(probes)).unwrap();
        assert_eq!(other.transitions().len(), base.transitions().len(), "{}", g.kind);
        for (a, b) in base.transitions().iter().zip(other.transitions()) {
            assert_eq!(a.value, b.value);
            assert!((a.time - b.time).abs() <= 10.0 * g.threshold.time_tol, "{}", g.kind);
        }
    }
}

#[test]
fn crossings_are_grid_independent() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let horizon = 20.0;
    for _ in 0..20 {
        let (ia, ib) = (rng.gen(), rng.gen());
        let two = |rng: &mut ChaCha8Rng| {
            vec![
                random_stimulus(rng, ia, 6, 15.0, 0.05, horizon),
                random_stimulus(rng, ib, 6, 15.0, 0.05, horizon),
            ]
        };
        let inputs = two(&mut rng);
        grid_check(make_simple_nor(NorParamsSimple::default(), 0.1, 0.2, [ia, ib]), inputs);
        let inputs = two(&mut rng);
        grid_check(make_advanced_nor(NorParamsAdvanced::default(), 0.1, 0.2, [ia, ib]), inputs);
        let one = random_stimulus(&mut rng, ia, 6, 15.0, 0.05, horizon);
        grid_check(make_idm_channel(IdmParams::default(), ia), vec![one]);
        let one = random_stimulus(&mut rng, ia, 6, 15.0, 1.0, horizon);
        grid_check(make_heater_plant(0.01, 19.0, 20.0, ia), vec![one]);
    }
}

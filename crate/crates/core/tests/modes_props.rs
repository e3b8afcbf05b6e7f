use std::sync::Arc;

use hgsim_core::gates::{
    make_advanced_nor, make_boolean_gate, make_heater_plant, make_idm_channel, make_simple_nor,
    GateState, IdmParams, NorParamsAdvanced, NorParamsSimple, TruthTable,
};
use hgsim_core::modes::{
    matching_output_signal, paste, solve_mode, sup_distance, ModeClock, ModeFamily, ModeFunction,
    ModeKind, SolverConfig, StateSpace,
};
use hgsim_core::signals::{mode_distance, ModeId, ModeSwitchSignal};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn simple_nor_family() -> ModeFamily {
    make_simple_nor(NorParamsSimple::default(), 0.1, 0.1, [false, false]).family
}

fn random_mode_signal(rng: &mut ChaCha8Rng, modes: u32, horizon: f64) -> ModeSwitchSignal {
    let initial = rng.gen_range(0..modes);
    let n = rng.gen_range(0..6);
    let mut times: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..horizon)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut prev = initial;
    let switches = times
        .into_iter()
        .map(|t| {
            let next = (prev + rng.gen_range(1..modes)) % modes;
            prev = next;
            (t, ModeId(next))
        })
        .collect();
    ModeSwitchSignal::new(ModeId(initial), switches, horizon).unwrap()
}

/// Same right-hand side as an affine mode, but integrated numerically.
fn as_general(m: &ModeFunction) -> Arc<ModeFunction> {
    let ModeKind::AffineConstant { a, b } = &m.kind else {
        panic!("affine mode expected")
    };
    let (a, b) = (a.clone(), b.clone());
    let n = m.dim;
    Arc::new(ModeFunction::general(
        m.id,
        format!("{}-numeric", m.name),
        n,
        ModeClock::Absolute,
        Arc::new(move |_, x, out| {
            for i in 0..n {
                out[i] = b[i] + (0..n).map(|j| a[(i, j)] * x[j]).sum::<f64>();
            }
        }),
        m.lipschitz,
        m.bound,
    ))
}

fn random_point(rng: &mut ChaCha8Rng, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter().zip(hi).map(|(&l, &h)| rng.gen_range(l..h)).collect()
}

#[test]
fn continuity_bound_over_simple_nor_family() {
    let family = simple_nor_family();
    let cfg = SolverConfig::default();
    let horizon = 5.0;
    let (k, m) = (family.lipschitz, family.bound);
    let x0 = [1.0, 1.0];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..500 {
        let a = random_mode_signal(&mut rng, 4, horizon);
        let b = random_mode_signal(&mut rng, 4, horizon);
        let xa = matching_output_signal(&family, &a, &x0, &cfg).unwrap();
        let xb = matching_output_signal(&family, &b, &x0, &cfg).unwrap();
        let d = sup_distance(&xa, &xb, 2000).unwrap();
        let bound = 2.0 * m * (horizon * k).exp() * mode_distance(&a, &b).unwrap();
        assert!(d <= bound + 1e-6, "trial {trial}: {d} > {bound}");
    }
}

#[test]
fn initial_value_continuity() {
    let family = simple_nor_family();
    let cfg = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inner = [0.0, 0.0];
    let outer = [1.0, 1.0];
    for mode in &family.modes {
        for _ in 0..50 {
            let x0 = random_point(&mut rng, &inner, &outer);
            let y0 = random_point(&mut rng, &inner, &outer);
            let dist0 = x0.iter().zip(&y0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let x = solve_mode(mode, &x0, 0.0, 5.0, &family.space, &cfg).unwrap();
            let y = solve_mode(mode, &y0, 0.0, 5.0, &family.space, &cfg).unwrap();
            for i in 0..=200 {
                let t = 5.0 * i as f64 / 200.0;
                let (xt, yt) = (x.eval(t), y.eval(t));
                let d = xt.iter().zip(&yt).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                assert!(d <= (t * mode.lipschitz).exp() * dist0 + 1e-6);
            }
        }
    }
}

#[test]
fn closed_form_matches_integrator() {
    let cfg = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let nor = simple_nor_family();
    let heater = make_heater_plant(0.01, 19.0, 20.0, false).family;
    let cases: [(&ModeFamily, [f64; 2], [f64; 2]); 2] =
        [(&nor, [0.0, 0.0], [1.0, 1.0]), (&heater, [0.0, 0.0], [50.0, 0.0])];
    for (family, lo, hi) in cases {
        let dim = family.space.dim();
        for mode in &family.modes {
            for _ in 0..5 {
                let x0 = random_point(&mut rng, &lo[..dim], &hi[..dim]);
                let cf = solve_mode(mode, &x0, 0.0, 10.0, &family.space, &cfg).unwrap();
                let num = solve_mode(&as_general(mode), &x0, 0.0, 10.0, &family.space, &cfg).unwrap();
                assert!(cf.is_closed_form() && !num.is_closed_form());
                for i in 0..=1000 {
                    let t = i as f64 / 100.0;
                    for (a, b) in cf.eval(t).iter().zip(num.eval(t)) {
                        assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0), "{} t={t}", mode.name);
                    }
                }
            }
        }
    }
}

#[test]
fn matching_output_signal_is_continuous() {
    let family = simple_nor_family();
    let cfg = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let a = random_mode_signal(&mut rng, 4, 5.0);
        let x = matching_output_signal(&family, &a, &[0.3, 0.7], &cfg).unwrap();
        assert!(x.junction_gap() <= 1e-9);
    }
}

#[test]
fn mode_refinement_is_a_no_op() {
    let family = simple_nor_family();
    let cfg = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let m = family.modes[rng.gen_range(0..4)].clone();
        let other = family.modes[rng.gen_range(0..4)].clone();
        let tau = rng.gen_range(0.1..4.9);
        let cut = rng.gen_range(0.1..tau);
        let x0 = [0.5, 0.5];
        let plain = paste(&[(0.0, other.clone()), (cut, m.clone())], &x0, 5.0, &family.space, &cfg)
            .unwrap();
        let refined = paste(
            &[(0.0, other), (cut, m.clone()), (tau, m)],
            &x0,
            5.0,
            &family.space,
            &cfg,
        )
        .unwrap();
        assert!(sup_distance(&plain, &refined, 2000).unwrap() <= 1e-9);
    }
}

fn check_lipschitz(mode: &ModeFunction, space: &StateSpace, rng: &mut ChaCha8Rng) {
    let n = mode.dim;
    let (mut fx, mut fy) = (vec![0.0; n], vec![0.0; n]);
    for _ in 0..2000 {
        let t = rng.gen_range(1e-6..10.0);
        let x = random_point(rng, space.lo(), space.hi());
        let y = random_point(rng, space.lo(), space.hi());
        mode.eval(t, &x, &mut fx);
        mode.eval(t, &y, &mut fy);
        let num = fx.iter().zip(&fy).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(num <= mode.lipschitz * den * (1.0 + 1e-12) + 1e-15, "{}", mode.name);
        let norm = fx.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(norm <= mode.bound * (1.0 + 1e-12), "{}: {norm} > {}", mode.name, mode.bound);
    }
}

#[test]
fn lipschitz_witnesses_for_library_modes() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut families = vec![
        simple_nor_family(),
        make_heater_plant(0.01, 19.0, 20.0, false).family,
        make_idm_channel(IdmParams::default(), false).family,
        make_boolean_gate(&TruthTable::named("nor", 2).unwrap(), vec![0.1, 0.1], vec![false, false], None)
            .family,
    ];
    let adv = Arc::new(make_advanced_nor(NorParamsAdvanced::default(), 0.1, 0.1, [true, true]));
    families.push(adv.family.clone());
    for family in &families {
        for mode in &family.modes {
            check_lipschitz(mode, &family.space, &mut rng);
        }
    }
    // staggered pull-up modes carry the input separation
    for delta in [0.0, 0.3, 2.0] {
        for a_first in [true, false] {
            let mut state = GateState::new(adv.clone());
            let (first, second) = if a_first { (0, 1) } else { (1, 0) };
            state.apply(1.0, &[(first, false)]);
            let mode = if delta == 0.0 {
                state.apply(1.0, &[(second, false)])
            } else {
                state.apply(1.0 + delta, &[(second, false)])
            };
            check_lipschitz(&mode.unwrap(), &adv.family.space, &mut rng);
        }
    }
}

use perq_core::agents::*;
use perq_core::environments::{build_named, EnvOptions, EnvironmentName};
use perq_core::mdp::*;
use perq_core::operators::{apply_all_persistence_operator, PersistentModels};
use perq_core::seeded_rng;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn two_step_history_against_hand_enumeration() {
    let (alpha, g) = (0.5, 0.5);
    let init = |s: State, k: usize| (s * 10 + k) as f64;
    let mut q = OptionQTable::from_fn(2, 1, 3, |s, _, k| init(s, k));
    let h = PartialHistory::from_parts(0, vec![0, 1, 0], vec![1.0, -2.0], 2, false, false).unwrap();
    let mut targets = Vec::new();
    let counts = all_persistence_update(&mut q, &h, alpha, g, UpdateMode::AllPersistence, |e| targets.push(e.target));
    assert_eq!(counts, UpdateCounts { optimal: 3, bootstrap: 5 });

    // Table entries written out by hand, in update order.
    let mix = |old: f64, y: f64| (1.0 - alpha) * old + alpha * y;
    let (q01, q02, q03) = (init(0, 1), init(0, 2), init(0, 3));
    let (q11, q12, q13) = (init(1, 1), init(1, 2), init(1, 3));
    let max0 = q01.max(q02).max(q03);
    // j = 2, i = 1: segment s1 -> s2 = 0, reward -2.
    let y1 = -2.0 + g * max0;
    let n11 = mix(q11, y1);
    let y2 = -2.0 + g * q01;
    let n12 = mix(q12, y2);
    let y3 = -2.0 + g * q02;
    let n13 = mix(q13, y3);
    // j = 2, i = 0: segment s0 -> s2, reward 1 + g * -2.
    let r2 = 1.0 + g * -2.0;
    let y4 = r2 + g * g * max0;
    let n02 = mix(q02, y4);
    let y5 = r2 + g * g * q01;
    let n03 = mix(q03, y5);
    // j = 1, i = 0: segment s0 -> s1 with the updated row of state 1.
    let max1 = n11.max(n12).max(n13);
    let y6 = 1.0 + g * max1;
    let n01 = mix(q01, y6);
    let y7 = 1.0 + g * n11;
    let n02 = mix(n02, y7);
    let y8 = 1.0 + g * n12;
    let n03 = mix(n03, y8);

    assert_eq!(targets, vec![y1, y2, y3, y4, y5, y6, y7, y8]);
    let expected = [n01, n02, n03, n11, n12, n13];
    let got = [q.get(0, 0, 1), q.get(0, 0, 2), q.get(0, 0, 3), q.get(1, 0, 1), q.get(1, 0, 2), q.get(1, 0, 3)];
    for (e, v) in expected.iter().zip(got) {
        assert!((e - v).abs() < 1e-12, "{e} vs {v}");
    }
}

#[test]
fn update_counts_closed_form() {
    for kappa_bar in 1..=8usize {
        for k_max in 1..=8usize {
            let mut q = OptionQTable::zeros(kappa_bar + 1, 1, k_max);
            let states: Vec<State> = (0..=kappa_bar).collect();
            let h = PartialHistory::from_parts(0, states, vec![0.0; kappa_bar], kappa_bar, false, false).unwrap();
            let counts = all_persistence_update(&mut q, &h, 0.1, 0.9, UpdateMode::AllPersistence, |_| {});
            let mut optimal = 0;
            let mut bootstrap = 0;
            for j in 1..=kappa_bar {
                for i in 0..j {
                    if j - i <= k_max {
                        optimal += 1;
                        bootstrap += k_max - (j - i);
                    }
                }
            }
            assert_eq!(counts, UpdateCounts { optimal, bootstrap }, "kappa_bar {kappa_bar}, K {k_max}");
        }
    }
}

#[test]
fn terminal_truncation_uses_executed_length() {
    // 0 -> 1 -> 2 (terminal); a 5-persistent option stops after two steps.
    let mut p = vec![0.0; 9];
    p[1] = 1.0;
    p[3 + 2] = 1.0;
    p[6 + 2] = 1.0;
    let mdp = TabularMdp::new(3, 1, p, vec![1.0, 1.0, 0.0], vec![false, false, true], 0.9).unwrap();
    let mut env = MdpEnv::at(&mdp, 0);
    let option = PersistenceOption::new(0, 5, 1, 5).unwrap();
    let h = execute_option(&mut env, option, None, &mut seeded_rng(0)).unwrap();
    assert_eq!(h.executed_length(), 2);
    assert!(h.truncated_by_terminal());
    let mut q = OptionQTable::filled(3, 1, 5, 100.0);
    let mut events = Vec::new();
    let counts = all_persistence_update(&mut q, &h, 1.0, 0.9, UpdateMode::AllPersistence, |e| events.push(*e));
    assert_eq!(counts.optimal, 3);
    for e in events.iter().filter(|e| e.end_offset == 2) {
        let r = h.discounted_cumulative_reward(e.offset, 2 - e.offset, 0.9).unwrap();
        assert_eq!(e.target, r);
    }
}

fn deterministic_mdp(seed: u64, n: usize, na: usize, gamma: f64) -> TabularMdp {
    let mut rng = seeded_rng(seed);
    let mut p = vec![0.0; n * na * n];
    let mut r = vec![0.0; n * na];
    for s in 0..n {
        for a in 0..na {
            p[(s * na + a) * n + rng.random_range(0..n)] = 1.0;
            r[s * na + a] = rng.random_range(-1.0..1.0);
        }
    }
    TabularMdp::new(n, na, p, r, vec![false; n], gamma).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    /// With a deterministic model, writes that continue from the final state
    /// of the history reproduce the exact all-persistence backup of the table
    /// as it was before the update.
    #[test]
    fn unit_alpha_matches_exact_backup(seed in any::<u64>(), n in 2usize..12, na in 1usize..4, k_max in 1usize..6, kappa in 1usize..6) {
        let kappa = kappa.min(k_max);
        let mdp = deterministic_mdp(seed, n, na, 0.9);
        let models = PersistentModels::new(&mdp, k_max).unwrap();
        let mut rng = seeded_rng(seed ^ 0xabc);
        let q0 = OptionQTable::standard_normal(n, na, k_max, &mut rng);
        let start = rng.random_range(0..n);
        let a = rng.random_range(0..na);
        let h = execute_option(&mut MdpEnv::at(&mdp, start), PersistenceOption::new(a, kappa, na, k_max).unwrap(), None, &mut rng).unwrap();
        let end = h.end_state();
        prop_assume!(!h.states()[..kappa].contains(&end));
        let mut q = q0.clone();
        let mut events = Vec::new();
        all_persistence_update(&mut q, &h, 1.0, 0.9, UpdateMode::AllPersistence, |e| events.push(*e));
        for e in events.iter().filter(|e| e.end_offset == kappa) {
            let exact = apply_all_persistence_operator(&q0, &models, kappa - e.offset).unwrap();
            prop_assert!((e.target - exact.get(e.state, e.action, e.persistence)).abs() < 1e-12);
        }
    }
}

#[test]
fn every_write_lands_on_a_visited_state() {
    let mdp = build_named(EnvironmentName::Bridge, &EnvOptions::default(), &mut seeded_rng(0)).unwrap();
    let k_max = 6;
    let mut q = OptionQTable::standard_normal(mdp.n_states(), mdp.n_actions(), k_max, &mut seeded_rng(1));
    q.zero_states(mdp.terminal_mask());
    let mut rng = seeded_rng(2);
    let mut env = MdpEnv::new(&mdp);
    let mut writes = 0usize;
    for _ in 0..200 {
        let mut s = env.reset(&mut rng);
        let mut t = 0;
        while t < 100 && !mdp.is_terminal(s) {
            let option = epsilon_greedy_option(&q, s, 0.5, &mut rng);
            let h = execute_option(&mut env, option, Some(100 - t), &mut rng).unwrap();
            let kb = h.executed_length();
            let states = h.states().to_vec();
            all_persistence_update(&mut q, &h, 0.1, 0.99, UpdateMode::AllPersistence, |e| {
                writes += 1;
                assert_eq!(e.state, states[e.offset]);
                assert_eq!(e.action, option.action);
                assert!(e.offset < e.end_offset && e.end_offset <= kb);
                let span = e.end_offset - e.offset;
                match e.kind {
                    UpdateKind::Optimal => assert_eq!(e.persistence, span),
                    UpdateKind::Bootstrap => assert!(e.persistence > span && e.persistence <= k_max),
                }
            });
            t += kb;
            s = h.end_state();
        }
    }
    assert!(writes > 1000);
}

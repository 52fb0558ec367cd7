use std::collections::BTreeMap;
use std::sync::Arc;

use ndqn_core::controller::{NdqnSystem, SystemConfig};
use ndqn_core::domain::DomainId;
use ndqn_core::env::acts::DialogueAct;
use ndqn_core::env::user::{NoiseConfig, SlotStatus};
use ndqn_core::env::{reward, task_success, EnvConfig, Simulator, UserGoal};
use ndqn_core::fixtures::Knowledge;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn knowledge() -> Arc<Knowledge> {
    Arc::new(Knowledge::builtin().unwrap())
}

fn quiet() -> EnvConfig {
    EnvConfig {
        deterministic_user: true,
        noise: NoiseConfig::disabled(),
        ..EnvConfig::default()
    }
}

fn action(env: &Simulator, act: &str) -> usize {
    env.catalog().index_of(&act.parse::<DialogueAct>().unwrap()).unwrap()
}

fn hotel_goal(k: &Knowledge) -> UserGoal {
    let slots: BTreeMap<String, String> = [
        ("h_city", "edinburgh"),
        ("h_day", "2nd"),
        ("h_month", "january"),
        ("h_nights", "2"),
    ]
    .into_iter()
    .map(|(a, b)| (a.to_owned(), b.to_owned()))
    .collect();
    UserGoal {
        domains: vec![k.registry.require("meta").unwrap(), k.registry.require("hotels").unwrap()],
        slots,
    }
}

#[test]
fn same_seed_same_goals() {
    let k = knowledge();
    let mut a = Simulator::new(k.clone(), EnvConfig::default(), 42).unwrap();
    let mut b = Simulator::new(k, EnvConfig::default(), 42).unwrap();
    for _ in 0..20 {
        assert_eq!(a.reset().goal, b.reset().goal);
    }
}

#[test]
fn single_domain_config_samples_only_that_domain() {
    let k = knowledge();
    let hotels = k.registry.require("hotels").unwrap();
    let mut env = Simulator::new(k, EnvConfig::single_domain("hotels", &["h_city"]), 3).unwrap();
    assert_eq!(env.hub(), None);
    for _ in 0..20 {
        let g = env.reset().goal.clone();
        assert_eq!(g.domains, vec![hotels]);
        assert_eq!(g.slots.keys().collect::<Vec<_>>(), ["h_city"]);
    }
}

#[test]
fn explicit_confirmation_exchange() {
    let k = knowledge();
    let mut env = Simulator::new(k.clone(), quiet(), 0).unwrap();
    env.reset_with_goal(hotel_goal(&k)).unwrap();
    let out = env.step(action(&env, "Request(h_city)")).unwrap();
    assert!(out.user_text.contains("edinburgh"), "{}", out.user_text);
    assert_eq!(
        env.state().slots["h_city"],
        SlotStatus::Filled {
            value: "edinburgh".into(),
            confidence: 1.0
        }
    );
    env.step(action(&env, "ExpConfirm(h_city=$h_city)")).unwrap();
    assert_eq!(
        env.state().slots["h_city"],
        SlotStatus::Confirmed {
            value: "edinburgh".into()
        }
    );
}

#[test]
fn presenting_after_retrieval_marks_presented() {
    let k = knowledge();
    let hotels = k.registry.require("hotels").unwrap();
    let mut env = Simulator::new(k.clone(), quiet(), 0).unwrap();
    env.reset_with_goal(hotel_goal(&k)).unwrap();
    env.step(action(&env, "Provide(h_info)")).unwrap();
    assert!(!env.state().presented[hotels.0]);
    env.step(action(&env, "Retrieve(h_info)")).unwrap();
    let out = env.step(action(&env, "Provide(h_info)")).unwrap();
    assert!(env.state().presented[hotels.0]);
    assert!(!out.system_text.contains("_hotels"));
}

#[test]
fn reward_examples() {
    assert!((reward(1.0, 0.5).total - 1.4).abs() < 1e-12);
    assert!((reward(0.0, 0.0).total + 0.1).abs() < 1e-12);
}

#[test]
fn task_success_matches_subset_enumeration() {
    let k = knowledge();
    let hotels = k.registry.require("hotels").unwrap();
    let mut env = Simulator::new(k.clone(), EnvConfig::single_domain("hotels", &["h_city", "h_day", "h_month", "h_nights"]), 0).unwrap();
    let mut goal = hotel_goal(&k);
    goal.domains = vec![hotels];
    let base = env.reset_with_goal(goal.clone()).unwrap().clone();
    let names: Vec<String> = goal.slots.keys().cloned().collect();
    let mut saw_example = false;
    for mask in 0u32..16 {
        for presented in [false, true] {
            let mut st = base.clone();
            for (i, s) in names.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    st.slots.insert(
                        s.clone(),
                        SlotStatus::Confirmed {
                            value: goal.slots[s].clone(),
                        },
                    );
                }
            }
            st.presented[hotels.0] = presented;
            let hits = mask.count_ones() as f64 + f64::from(u8::from(presented));
            let expected = hits / 5.0;
            assert!((task_success(&st, &k) - expected).abs() < 1e-12);
            if mask.count_ones() == 2 && presented {
                assert!((task_success(&st, &k) - 0.6).abs() < 1e-12);
                saw_example = true;
            }
        }
    }
    assert!(saw_example);
    assert_eq!(task_success(&base, &k), 0.0);
}

#[test]
fn wrong_value_confirmed_does_not_count() {
    let k = knowledge();
    let hotels = k.registry.require("hotels").unwrap();
    let mut env = Simulator::new(k.clone(), EnvConfig::single_domain("hotels", &["h_city", "h_day", "h_month", "h_nights"]), 0).unwrap();
    let mut goal = hotel_goal(&k);
    goal.domains = vec![hotels];
    let mut st = env.reset_with_goal(goal).unwrap().clone();
    st.slots.insert("h_city".into(), SlotStatus::Confirmed { value: "london".into() });
    assert_eq!(task_success(&st, &k), 0.0);
}

fn ndqn(env: &Simulator) -> NdqnSystem {
    NdqnSystem::build(env, SystemConfig::default(), 0).unwrap()
}

#[test]
fn request_hmihy_is_allowed_after_the_opening_turn() {
    let k = knowledge();
    let mut env = Simulator::new(k.clone(), quiet(), 0).unwrap();
    let sys = ndqn(&env);
    env.reset();
    env.step(action(&env, "Salutation(greeting)")).unwrap();
    env.step(action(&env, "Provide(intro)")).unwrap();
    let view = sys.view_for(k.registry.require("meta").unwrap());
    let st = env.state();
    let s = view.state(&st.last_system_tokens, &st.last_user_tokens);
    let (local, _) = view.constrained(&env, &s.values, sys.config().nb_threshold);
    let hmihy = action(&env, "Request(hmihy)");
    assert!(local.iter().any(|&i| view.actions[i] == hmihy));
}

#[test]
fn filled_city_allows_its_confirmation() {
    let k = knowledge();
    let mut env = Simulator::new(k.clone(), quiet(), 0).unwrap();
    let sys = ndqn(&env);
    env.reset_with_goal(hotel_goal(&k)).unwrap();
    env.step(action(&env, "Request(h_city)")).unwrap();
    let view = sys.view_for(k.registry.require("hotels").unwrap());
    let st = env.state();
    let s = view.state(&st.last_system_tokens, &st.last_user_tokens);
    let (local, _) = view.constrained(&env, &s.values, sys.config().nb_threshold);
    let confirm = action(&env, "ExpConfirm(h_city=$h_city)");
    assert!(local.iter().any(|&i| view.actions[i] == confirm));
}

#[test]
fn degenerate_posterior_falls_back_to_usable_actions() {
    let k = knowledge();
    let mut env = Simulator::new(k, quiet(), 0).unwrap();
    env.reset();
    let all: Vec<usize> = (0..env.catalog().len()).collect();
    let zeros = vec![0.0; all.len()];
    let chosen = env.constrained_actions(&all, &zeros, 1e-4);
    assert!(!chosen.is_empty());
    assert!(chosen.iter().all(|&a| env.instantiable(a) && env.applicable(a)));
}

#[test]
fn external_mode_waits_for_the_user() {
    let k = knowledge();
    let mut env = Simulator::new(k.clone(), quiet(), 0).unwrap();
    env.start_external();
    let hmihy = action(&env, "Request(hmihy)");
    env.apply_system_act(hmihy).unwrap();
    assert!(env.awaiting_user());
    assert!(env.apply_system_act(hmihy).is_err());
    let out = env
        .observe_user("a hotel in london".into(), vec![("hotel".into(), 1.0), ("in".into(), 1.0), ("london".into(), 1.0)])
        .unwrap();
    assert_eq!(out.goal_reward, 0.0);
    assert_eq!(env.state().slots["h_city"].value(), Some("london"));
    assert!(env.observe_user(String::new(), Vec::new()).is_err());
}

#[test]
fn noise_free_demonstration_reaches_full_success() {
    let k = knowledge();
    let mut env = Simulator::new(k.clone(), quiet(), 1).unwrap();
    let mut sys = ndqn(&env);
    let (goal, acts) = ndqn_core::controller::demonstration_script(&k).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let res = sys.run_scripted(&mut env, goal, &acts, &mut rng).unwrap();
    assert_eq!(res.success, 1.0);
    assert!(env.state().terminal && env.state().closed);
}

fn confirmed(env: &Simulator) -> Vec<String> {
    env.state()
        .slots
        .iter()
        .filter(|(_, s)| s.is_confirmed())
        .map(|(k, _)| k.clone())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn random_dialogues_respect_invariants(seed in any::<u64>(), noisy in any::<bool>()) {
        let k = knowledge();
        let cfg = EnvConfig {
            max_turns: 40,
            noise: if noisy { NoiseConfig::default() } else { NoiseConfig::disabled() },
            ..EnvConfig::default()
        };
        let mut env = Simulator::new(k, cfg, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        env.reset();
        let all: Vec<usize> = (0..env.catalog().len()).collect();
        while !env.state().terminal {
            let before = confirmed(&env);
            let posterior: Vec<f64> = all.iter().map(|_| 0.0).collect();
            let allowed = env.constrained_actions(&all, &posterior, 1e-4);
            prop_assert!(!allowed.is_empty());
            let usable: Vec<usize> = all.iter().copied().filter(|&a| env.instantiable(a)).collect();
            let a = *usable.choose(&mut rng).unwrap();
            let out = env.step(a).unwrap();
            prop_assert!((0.0..=1.0).contains(&out.goal_reward));
            for (_, c) in &out.user_tokens {
                prop_assert!((0.0..=1.0).contains(c));
            }
            let after = confirmed(&env);
            for s in &before {
                prop_assert!(after.contains(s) || matches!(env.state().slots[s], SlotStatus::Confirmed { .. }), "{} regressed", s);
            }
            prop_assert!((0.0..=1.0).contains(&env.task_success()));
        }
        prop_assert!(env.state().turn <= 40);
    }

    #[test]
    fn goals_only_use_active_domains(seed in any::<u64>()) {
        let k = knowledge();
        let mut env = Simulator::new(k.clone(), EnvConfig::default(), seed).unwrap();
        let active: Vec<DomainId> = env.active_domains();
        let g = env.reset().goal.clone();
        prop_assert!(g.domains.iter().all(|d| active.contains(d)));
        for (slot, value) in &g.slots {
            let lexicon_slot = format!("${slot}");
            prop_assert_eq!(k.lexicon.slot_of(value), Some(lexicon_slot.as_str()));
        }
    }
}

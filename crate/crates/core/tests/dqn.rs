mod common;

use ndqn_core::dqn::{decay_epsilon, AgentHyperparams, DqnAgent, ReplayMemory, Transition};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn transition(dim: usize, action: usize, reward: f64, terminal: bool) -> Transition {
    Transition {
        state: vec![1.0; dim],
        action,
        reward,
        next_state: vec![0.5; dim],
        terminal,
        next_valid: Vec::new(),
    }
}

/// Agent whose online and target nets output `q` for every input.
fn agent_with_q(q: &[f64], hyper: AgentHyperparams) -> DqnAgent {
    let mut agent = DqnAgent::new(2, q.len(), hyper, 0).unwrap();
    let net = agent.online_mut();
    let last = net.num_layers() - 1;
    net.weights_mut(last).iter_mut().for_each(|w| *w = 0.0);
    net.biases_mut(last).copy_from_slice(q);
    agent.sync_target();
    agent
}

#[test]
fn greedy_choice_is_masked() {
    let agent = agent_with_q(&[0.1, 0.9, 0.3], AgentHyperparams::default());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(agent.select_action(&[0.0, 0.0], &[0, 2], 0.0, &mut rng).unwrap(), 2);
}

#[test]
fn full_exploration_is_uniform_within_three_sigma() {
    let agent = agent_with_q(&[0.0, 5.0, 0.0], AgentHyperparams::default());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 30_000;
    let mut counts = [0usize; 3];
    for _ in 0..n {
        counts[agent.select_action(&[0.0, 0.0], &[0, 1, 2], 1.0, &mut rng).unwrap()] += 1;
    }
    // Binomial(n, 1/3) per action.
    let p = 1.0 / 3.0;
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!((c as f64 - n as f64 * p).abs() <= 3.0 * sigma, "{counts:?}");
    }
}

#[test]
fn td_targets_follow_the_bellman_backup() {
    let agent = agent_with_q(&[1.0, 0.2], AgentHyperparams::default());
    assert_eq!(agent.q_target(&transition(2, 0, 1.0, true)).unwrap(), 1.0);
    assert!((agent.q_target(&transition(2, 0, 0.0, false)).unwrap() - 0.7).abs() < 1e-12);
    let agent = agent_with_q(&[0.5, -3.0], AgentHyperparams::default());
    assert!((agent.q_target(&transition(2, 1, -0.1, false)).unwrap() - 0.25).abs() < 1e-12);
}

#[test]
fn next_state_mask_limits_the_max() {
    let agent = agent_with_q(&[1.0, 0.2], AgentHyperparams::default());
    let mut t = transition(2, 0, 0.0, false);
    t.next_valid = vec![1];
    assert!((agent.q_target(&t).unwrap() - 0.14).abs() < 1e-12);
}

#[test]
fn repeated_terminal_transition_converges_to_its_reward() {
    let hyper = AgentHyperparams {
        burning_steps: 1,
        batch_size: 8,
        hidden_layers: vec![8, 8],
        ..AgentHyperparams::default()
    };
    let mut agent = DqnAgent::new(3, 2, hyper, 4).unwrap();
    let t = Transition {
        state: vec![1.0, 0.0, 0.5],
        action: 1,
        reward: 1.0,
        next_state: vec![0.0; 3],
        terminal: true,
        next_valid: Vec::new(),
    };
    for _ in 0..10 {
        agent.record(t.clone()).unwrap();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..3_000 {
        agent.train_on_minibatch(&mut rng).unwrap();
    }
    let q = agent.q_values(&t.state).unwrap()[1];
    assert!((q - 1.0).abs() < 0.05, "{q}");
}

#[test]
fn target_equals_online_right_after_sync() {
    let hyper = AgentHyperparams {
        burning_steps: 1,
        target_sync_period: 7,
        hidden_layers: vec![4],
        ..AgentHyperparams::default()
    };
    let mut agent = DqnAgent::new(2, 2, hyper, 3).unwrap();
    agent.record(transition(2, 0, 1.0, true)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for step in 1..=21 {
        agent.train_on_minibatch(&mut rng).unwrap();
        let x = [0.3, -0.8];
        let same = agent.online().forward(&x).unwrap() == agent.target().forward(&x).unwrap();
        assert_eq!(same, step % 7 == 0, "step {step}");
    }
}

#[test]
fn burn_in_changes_nothing() {
    let mut agent = DqnAgent::new(2, 2, AgentHyperparams::default(), 0).unwrap();
    let before = agent.online().clone();
    for _ in 0..999 {
        agent.record(transition(2, 1, 0.5, false)).unwrap();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(agent.train_on_minibatch(&mut rng).unwrap(), None);
    assert_eq!(agent.online(), &before);
    agent.record(transition(2, 1, 0.5, false)).unwrap();
    assert!(agent.train_on_minibatch(&mut rng).unwrap().is_some());
}

#[test]
fn epsilon_anneals_linearly_then_holds() {
    assert_eq!(decay_epsilon(1.0, 0.001, 30_000, 0), 1.0);
    assert!((decay_epsilon(1.0, 0.001, 30_000, 15_000) - 0.5005).abs() < 1e-12);
    assert_eq!(decay_epsilon(1.0, 0.001, 30_000, 30_000), 0.001);
    assert_eq!(decay_epsilon(1.0, 0.001, 30_000, 90_000), 0.001);
}

#[test]
fn two_state_mdp_matches_value_iteration() {
    let oracle = common::value_iteration(0.7);
    let learned = common::learned_mdp_q(0.7, 6_000, 9);
    for s in 0..2 {
        for a in 0..2 {
            assert!(
                (learned[s][a] - oracle[s][a]).abs() < 0.05,
                "Q({s},{a}) = {} vs {}",
                learned[s][a],
                oracle[s][a]
            );
        }
    }
}

#[test]
fn identical_seeds_give_identical_trajectories() {
    let run = || {
        let hyper = AgentHyperparams {
            burning_steps: 5,
            batch_size: 4,
            hidden_layers: vec![6],
            target_sync_period: 3,
            ..AgentHyperparams::default()
        };
        let mut agent = DqnAgent::new(2, 3, hyper, 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut trace = Vec::new();
        for i in 0..40 {
            let s = [i as f64 / 40.0, 1.0 - i as f64 / 40.0];
            let a = agent.select_action(&s, &[0, 1, 2], 0.3, &mut rng).unwrap();
            agent
                .record(Transition {
                    state: s.to_vec(),
                    action: a,
                    reward: a as f64 * 0.1,
                    next_state: s.to_vec(),
                    terminal: i % 5 == 4,
                    next_valid: Vec::new(),
                })
                .unwrap();
            let loss = agent.train_on_minibatch(&mut rng).unwrap();
            trace.push((a, loss.map(f64::to_bits)));
        }
        trace
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn replay_is_bounded_and_evicts_oldest(capacity in 1usize..40, extra in 0usize..40) {
        let mut mem = ReplayMemory::new(capacity).unwrap();
        for i in 0..capacity + extra {
            mem.push(transition(1, 0, i as f64, false));
            prop_assert!(mem.len() <= capacity);
        }
        let kept: Vec<f64> = mem.iter().map(|t| t.reward).collect();
        let expected: Vec<f64> = (extra..capacity + extra).map(|i| i as f64).collect();
        prop_assert_eq!(kept, expected);
    }

    #[test]
    fn selection_stays_inside_valid(
        q in prop::collection::vec(-5.0f64..5.0, 1..8),
        mask in prop::collection::vec(any::<bool>(), 8),
        epsilon in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let valid: Vec<usize> = (0..q.len()).filter(|&i| mask[i]).collect();
        prop_assume!(!valid.is_empty());
        let agent = agent_with_q(&q, AgentHyperparams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let a = agent.select_action(&[0.0, 0.0], &valid, epsilon, &mut rng).unwrap();
            prop_assert!(valid.contains(&a));
        }
    }
}

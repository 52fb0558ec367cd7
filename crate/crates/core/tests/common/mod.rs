#![allow(dead_code)]

use ndqn_core::dqn::{AgentHyperparams, DqnAgent, Transition};
use ndqn_core::mlp::{Activation, Example, LossKind, Mask, Network, OutputKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic two-state, two-action MDP: `(next state, reward)` per state and action.
pub const MDP: [[(usize, f64); 2]; 2] = [[(0, 0.0), (1, 1.0)], [(0, 0.5), (1, -0.2)]];

pub fn one_hot(s: usize) -> Vec<f64> {
    let mut v = vec![0.0; 2];
    v[s] = 1.0;
    v
}

/// Q* by value iteration to convergence.
pub fn value_iteration(gamma: f64) -> [[f64; 2]; 2] {
    let mut q = [[0.0f64; 2]; 2];
    for _ in 0..10_000 {
        let v = [q[0][0].max(q[0][1]), q[1][0].max(q[1][1])];
        let mut next = [[0.0; 2]; 2];
        for s in 0..2 {
            for a in 0..2 {
                let (s2, r) = MDP[s][a];
                next[s][a] = r + gamma * v[s2];
            }
        }
        q = next;
    }
    q
}

/// Trains a small agent on the MDP's four transitions; returns its greedy Q table.
pub fn learned_mdp_q(gamma: f64, updates: usize, seed: u64) -> [[f64; 2]; 2] {
    let hyper = AgentHyperparams {
        discount: gamma,
        burning_steps: 4,
        batch_size: 16,
        target_sync_period: 100,
        hidden_layers: vec![16, 16],
        learning_rate: 0.02,
        ..AgentHyperparams::default()
    };
    let mut agent = DqnAgent::new(2, 2, hyper, seed).unwrap();
    for (s, row) in MDP.iter().enumerate() {
        for (a, &(s2, r)) in row.iter().enumerate() {
            agent
                .record(Transition {
                    state: one_hot(s),
                    action: a,
                    reward: r,
                    next_state: one_hot(s2),
                    terminal: false,
                    next_valid: vec![0, 1],
                })
                .unwrap();
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..updates {
        agent.train_on_minibatch(&mut rng).unwrap();
    }
    let mut q = [[0.0; 2]; 2];
    for (s, row) in q.iter_mut().enumerate() {
        let out = agent.q_values(&one_hot(s)).unwrap();
        row.copy_from_slice(&out);
    }
    q
}

/// Largest gap between analytic and central-difference gradients on a random 3-4-4-2 net.
pub fn finite_difference_gap(act: Activation, loss: LossKind, seed: u64) -> f64 {
    let net = Network::new(&[3, 4, 4, 2], act, OutputKind::Linear, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<Vec<f64>> = (0..4).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let targets: Vec<Vec<f64>> = (0..4)
        .map(|_| match loss {
            LossKind::SquaredError => (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            LossKind::Hinge => (0..2).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect(),
        })
        .collect();
    let batch: Vec<Example<'_>> = inputs
        .iter()
        .zip(&targets)
        .map(|(x, t)| Example {
            input: x,
            target: t,
            mask: Mask::All,
        })
        .collect();
    let (_, grads) = net.loss_and_gradients(&batch, loss).unwrap();
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for l in 0..net.num_layers() {
        for i in 0..net.weights(l).len() {
            let mut up = net.clone();
            up.weights_mut(l)[i] += eps;
            let mut down = net.clone();
            down.weights_mut(l)[i] -= eps;
            let numeric = (up.loss(&batch, loss).unwrap() - down.loss(&batch, loss).unwrap()) / (2.0 * eps);
            worst = worst.max((numeric - grads.weights[l][i]).abs());
        }
        for i in 0..net.biases(l).len() {
            let mut up = net.clone();
            up.biases_mut(l)[i] += eps;
            let mut down = net.clone();
            down.biases_mut(l)[i] -= eps;
            let numeric = (up.loss(&batch, loss).unwrap() - down.loss(&batch, loss).unwrap()) / (2.0 * eps);
            worst = worst.max((numeric - grads.biases[l][i]).abs());
        }
    }
    worst
}

//! Acceptance run: one pass/fail line per criterion.
//!
//! `cargo test --release --test acceptance`. Timing-sensitive runs happen one
//! after another in this process.

mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use ndqn_core::classifiers::domain::{ClassifierTraining, LabeledSet};
use ndqn_core::classifiers::{
    generate_domain_dataset, parse_seed_corpus, serialize_seed_corpus, train_domain_classifier, train_naive_bayes,
    DomainClassifier,
};
use ndqn_core::controller::{
    demonstration_script, global_vocabulary, Architecture, DomainStack, EpisodeOptions, NdqnSystem, SystemConfig,
};
use ndqn_core::domain::DomainId;
use ndqn_core::dqn::{AgentHyperparams, DqnAgent, ReplayMemory, Transition};
use ndqn_core::env::user::NoiseConfig;
use ndqn_core::env::{EnvConfig, Simulator};
use ndqn_core::fixtures::Knowledge;
use ndqn_core::harness::{run_training, RunConfig, RunOutcome};
use ndqn_core::metrics::mann_kendall;
use ndqn_core::mlp::{Activation, LossKind};
use ndqn_core::text::{delexicalize, vectorize, Compression, SlotLexicon, Vocabulary};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRng, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 7;

struct Verdict {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(v: &Verdict) {
    let tag = if v.pass { "PASS" } else { "FAIL" };
    println!("[{tag}] {}. {}: {}", v.id, v.name, v.detail);
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn criterion_1() -> Verdict {
    let (gap, took) = timed(|| {
        let oracle = common::value_iteration(0.7);
        let learned = common::learned_mdp_q(0.7, 6_000, 9);
        let mut gap: f64 = 0.0;
        for s in 0..2 {
            for a in 0..2 {
                gap = gap.max((learned[s][a] - oracle[s][a]).abs());
            }
        }
        gap
    });
    Verdict {
        id: 1,
        name: "DQN matches value iteration",
        pass: gap < 0.05 && took < Duration::from_secs(60),
        detail: format!("max |Q - Q*| = {gap:.4} in {:.2}s", took.as_secs_f64()),
    }
}

fn criterion_2() -> Verdict {
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        for act in [Activation::Relu, Activation::Tanh] {
            worst = worst.max(common::finite_difference_gap(act, LossKind::SquaredError, seed));
        }
        worst = worst.max(common::finite_difference_gap(Activation::Tanh, LossKind::Hinge, seed));
    }
    Verdict {
        id: 2,
        name: "gradients match finite differences",
        pass: worst < 1e-4,
        detail: format!("max gap {worst:.2e} over 30 nets"),
    }
}

fn desk_run(mode: Architecture, compression: Compression, k: &Arc<Knowledge>) -> (RunOutcome, Duration) {
    let cfg = RunConfig {
        mode,
        compression,
        seed: SEED,
        ..RunConfig::default()
    };
    let (out, took) = timed(|| run_training(&cfg, k.clone()).unwrap());
    println!(
        "    {}: {} episodes, training loop {:.1}s, eval success {:.3}, final row {:?}",
        out.report.label,
        out.report.episodes,
        out.report.elapsed_seconds,
        out.report.eval.map_or(f64::NAN, |e| e.avg_success),
        out.report.final_row.map(|r| (r.avg_reward, r.avg_success, r.avg_length))
    );
    (out, took)
}

fn criterion_3(ndqn: &RunOutcome, took: Duration) -> Verdict {
    let (first, last) = ndqn.report.reward_trend.unwrap_or((f64::NAN, f64::NAN));
    let eval = ndqn.report.eval.unwrap();
    let pass = last >= first + 0.3 && eval.avg_success >= 0.9 && eval.episodes == 200 && took < Duration::from_secs(900);
    Verdict {
        id: 3,
        name: "NDQN learns",
        pass,
        detail: format!(
            "episode reward first 10% {first:.3} -> last 10% {last:.3}; greedy success {:.3} over {} episodes; {:.1}s",
            eval.avg_success,
            eval.episodes,
            took.as_secs_f64()
        ),
    }
}

fn criterion_4(ndqn: &RunOutcome, flat: &RunOutcome) -> Verdict {
    let nd = ndqn.report.final_row.unwrap().avg_reward;
    let fl = flat.report.final_row.unwrap().avg_reward;
    let series: Vec<f64> = flat.log.rows.iter().map(|r| r.avg_reward).collect();
    let mk = mann_kendall(&series).unwrap();
    Verdict {
        id: 4,
        name: "flat baseline below NDQN without upward trend",
        pass: fl < nd && mk.p_increasing > 0.05,
        detail: format!(
            "final avg_reward flat {fl:.3} vs ndqn {nd:.3}; flat Mann-Kendall S = {}, p = {:.4}",
            mk.s, mk.p_increasing
        ),
    }
}

fn criterion_5(ndqn: &RunOutcome, raw: &RunOutcome, flat: &RunOutcome) -> Verdict {
    let (c, r, f) = (
        ndqn.report.elapsed_seconds,
        raw.report.elapsed_seconds,
        flat.report.elapsed_seconds,
    );
    let ratio = f / c;
    Verdict {
        id: 5,
        name: "speed ordering",
        pass: c < f && ratio >= 1.5 && c <= r,
        detail: format!("flat {f:.2}s / ndqn {c:.2}s = {ratio:.2}x; compressed {c:.2}s vs raw {r:.2}s"),
    }
}

fn criterion_6(ndqn: &RunOutcome, raw: &RunOutcome) -> Verdict {
    let sc = ndqn.report.success().unwrap();
    let sr = raw.report.success().unwrap();
    let (dc, dr) = (ndqn.report.max_state_dim(), raw.report.max_state_dim());
    let row_c = ndqn.report.final_row.unwrap().avg_success;
    let row_r = raw.report.final_row.unwrap().avg_success;
    Verdict {
        id: 6,
        name: "compression preserves quality",
        pass: (sc - sr).abs() <= 0.05 && dc < dr,
        detail: format!(
            "greedy success compressed {sc:.3} vs raw {sr:.3}; final checkpoint rows {row_c:.3} vs {row_r:.3}; state dims {:?} vs {:?}",
            ndqn.report.state_dims, raw.report.state_dims
        ),
    }
}

fn criterion_7(k: &Knowledge) -> Verdict {
    let ((acc, toy), took) = timed(|| {
        let vocab = global_vocabulary(k, &k.desk_catalog);
        let ds = generate_domain_dataset(k, &vocab, 15_000, SEED);
        let acc = train_domain_classifier(&ds, &vocab, &ClassifierTraining::default())
            .map(|(_, a)| a)
            .unwrap_or(0.0);
        let toy_vocab = Vocabulary::from_tokens(["a", "b", "c", "d", "e", "f"]);
        let mut set = LabeledSet::default();
        for i in 0..90 {
            let label = i % 3;
            let mut x = vec![0.0; 6];
            x[2 * label] = 1.0;
            x[2 * label + 1] = f64::from(u8::from(i % 2 == 0));
            set.inputs.push(x);
            set.labels.push(label);
        }
        let classes = vec![DomainId(0), DomainId(1), DomainId(2)];
        let toy = DomainClassifier::train(&set, &set, toy_vocab, classes, &ClassifierTraining::default())
            .map(|(_, a)| a)
            .unwrap_or(0.0);
        (acc, toy)
    });
    Verdict {
        id: 7,
        name: "domain classifier",
        pass: acc >= 0.8 && toy == 1.0 && took < Duration::from_secs(600),
        detail: format!(
            "held-out accuracy {:.2}% (n=15000, 180 epochs); separable toy {:.0}%; {:.1}s",
            acc * 100.0,
            toy * 100.0,
            took.as_secs_f64()
        ),
    }
}

fn prop<S: Strategy>(
    failures: &mut Vec<String>,
    name: &str,
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) {
    let config = Config {
        failure_persistence: None,
        ..Config::with_cases(cases)
    };
    let mut runner = TestRunner::new_with_rng(config.clone(), TestRng::deterministic_rng(config.rng_algorithm));
    if let Err(e) = runner.run(&strategy, test) {
        failures.push(format!("{name} ({e})"));
    }
}

fn transition(reward: f64) -> Transition {
    Transition {
        state: vec![0.0],
        action: 0,
        reward,
        next_state: vec![0.0],
        terminal: false,
        next_valid: Vec::new(),
    }
}

#[derive(Clone, Debug)]
enum StackOp {
    Push(usize),
    Pop,
}

fn criterion_8(k: &Arc<Knowledge>) -> Verdict {
    let mut failures = Vec::new();

    prop(&mut failures, "replay FIFO", 128, (1usize..30, 0usize..60), |(cap, n)| {
        let mut mem = ReplayMemory::new(cap).unwrap();
        for i in 0..n {
            mem.push(transition(i as f64));
        }
        let kept: Vec<f64> = mem.iter().map(|t| t.reward).collect();
        let expected: Vec<f64> = (n.saturating_sub(cap)..n).map(|i| i as f64).collect();
        prop_assert_eq!(kept, expected);
        Ok(())
    });

    let agent = DqnAgent::new(4, 6, AgentHyperparams::default(), 1).unwrap();
    let masked = (
        prop::collection::vec(-1.0f64..1.0, 4),
        prop::sample::subsequence((0..6).collect::<Vec<usize>>(), 1..=6),
        0.0f64..=1.0,
        any::<u64>(),
    );
    prop(&mut failures, "masked selection", 256, masked, |(s, valid, eps, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = agent.select_action(&s, &valid, eps, &mut rng).unwrap();
        prop_assert!(valid.contains(&a));
        Ok(())
    });

    prop(&mut failures, "target sync", 16, (2u64..9, any::<u64>()), |(period, seed)| {
        let hyper = AgentHyperparams {
            burning_steps: 1,
            target_sync_period: period,
            hidden_layers: vec![4],
            ..AgentHyperparams::default()
        };
        let mut agent = DqnAgent::new(1, 2, hyper, seed).unwrap();
        agent.record(Transition { terminal: true, reward: 1.0, ..transition(0.0) }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for step in 1..=3 * period {
            agent.train_on_minibatch(&mut rng).unwrap();
            let same = agent.online().forward(&[0.4]).unwrap() == agent.target().forward(&[0.4]).unwrap();
            prop_assert_eq!(same, step % period == 0);
        }
        Ok(())
    });

    let vocab = Vocabulary::from_tokens(["a", "b", "c", "d"]);
    let word = || prop::sample::select(vec!["a", "b", "c", "d", "zz"]).prop_map(str::to_owned);
    let words = (
        prop::collection::vec(word(), 0..6),
        prop::collection::vec((word(), -0.5f64..1.5), 0..6),
    );
    prop(&mut failures, "vectorizer range", 256, words, |(sys, usr)| {
        let sv = vectorize(&sys, &usr, &vocab);
        prop_assert_eq!(sv.len(), vocab.len());
        prop_assert!(sv.values.iter().all(|v| (0.0..=1.0).contains(v)));
        Ok(())
    });

    let lex = SlotLexicon::parse("london\t$h_city\ncheap\t$r_price\n").unwrap();
    let phrase = prop::collection::vec(
        prop::sample::select(vec!["london", "cheap", "hotel", "food", "$h_city"]).prop_map(str::to_owned),
        0..8,
    );
    prop(&mut failures, "delexicalization idempotence", 256, phrase, |toks| {
        let once = delexicalize(&toks, &lex);
        prop_assert_eq!(delexicalize(&once, &lex), once);
        Ok(())
    });

    prop(&mut failures, "reward bounds", 24, (any::<u64>(), any::<bool>()), |(seed, flat)| {
        let mut env = Simulator::new(k.clone(), EnvConfig { max_turns: 40, ..EnvConfig::default() }, seed).unwrap();
        let cfg = SystemConfig {
            architecture: if flat { Architecture::DqnFlat } else { Architecture::Ndqn },
            ..SystemConfig::default()
        };
        let mut sys = NdqnSystem::build(&env, cfg, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let opts = EpisodeOptions { epsilon: Some(1.0), learn: false, step_limit: None, trace: true };
        let res = sys.run_episode(&mut env, opts, &mut rng).unwrap();
        for step in &res.trace {
            prop_assert!((-0.1 - 1e-12..=1.9 + 1e-12).contains(&step.reward.total));
        }
        prop_assert!((0.0..=1.0).contains(&res.success));
        Ok(())
    });

    let ops = prop::collection::vec(prop_oneof![(0usize..3).prop_map(StackOp::Push), Just(StackOp::Pop)], 0..40);
    prop(&mut failures, "stack discipline", 256, ops, |ops| {
        let mut stack = DomainStack::new();
        let mut model = Vec::new();
        for (turn, op) in ops.into_iter().enumerate() {
            match op {
                StackOp::Push(d) => {
                    stack.push(DomainId(d), turn);
                    model.push(d);
                }
                StackOp::Pop => prop_assert_eq!(stack.pop().map(|f| f.domain.0), model.pop()),
            }
            prop_assert_eq!(stack.depth(), model.len());
        }
        Ok(())
    });

    let nb_case = (
        prop::collection::vec((prop::collection::vec(0.0f64..1.0, 5), 0usize..4), 1..30),
        prop::collection::vec(0.0f64..1.0, 5),
        0.01f64..2.0,
    );
    prop(&mut failures, "naive Bayes normalization", 256, nb_case, |(rows, x, alpha)| {
        let nb = train_naive_bayes(&rows, 5, 4, alpha).unwrap();
        let p = nb.posterior(&x);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        Ok(())
    });

    let subset = prop::sample::subsequence((0..k.seeds.len()).collect::<Vec<_>>(), 0..=k.seeds.len());
    prop(&mut failures, "seed corpus round trip", 32, subset, |idx| {
        let dialogues: Vec<_> = idx.iter().map(|&i| k.seeds[i].clone()).collect();
        prop_assert_eq!(parse_seed_corpus(&serialize_seed_corpus(&dialogues)).unwrap(), dialogues);
        Ok(())
    });

    let small = RunConfig {
        budget: Some(3_000),
        checkpoint_every: Some(500),
        eval_episodes: 20,
        seed: SEED,
        ..RunConfig::default()
    };
    let a = run_training(&small, k.clone()).unwrap();
    let b = run_training(&small, k.clone()).unwrap();
    let bits = |o: &RunOutcome| -> Vec<u64> {
        o.log.episodes.iter().map(|e| e.reward.to_bits()).collect()
    };
    if a.log.to_csv_without_time() != b.log.to_csv_without_time() || a.report.eval != b.report.eval || bits(&a) != bits(&b) {
        failures.push("full-run determinism".into());
    }

    Verdict {
        id: 8,
        name: "invariant suites",
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            "10 suites held: replay, masking, sync, vectorizer, delexicalization, rewards, stack, NB, corpus, determinism"
                .into()
        } else {
            format!("failed: {}", failures.join("; "))
        },
    }
}

fn criterion_9(k: &Arc<Knowledge>) -> Verdict {
    let cfg = EnvConfig {
        deterministic_user: true,
        noise: NoiseConfig::disabled(),
        ..EnvConfig::default()
    };
    let mut env = Simulator::new(k.clone(), cfg, SEED).unwrap();
    let mut sys = NdqnSystem::build(&env, SystemConfig::default(), SEED).unwrap();
    let (goal, acts) = demonstration_script(k).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    match sys.run_scripted(&mut env, goal, &acts, &mut rng) {
        Ok(res) => {
            let order: Vec<&str> = res.domains_visited.iter().map(|d| k.registry.name(*d)).collect();
            Verdict {
                id: 9,
                name: "scripted demonstration replay",
                pass: res.success == 1.0 && order == ["meta", "hotels", "meta", "restaurants", "meta"],
                detail: format!("task_success {:.3}, domains {}", res.success, order.join("->")),
            }
        }
        Err(e) => Verdict {
            id: 9,
            name: "scripted demonstration replay",
            pass: false,
            detail: e.to_string(),
        },
    }
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let k = Arc::new(Knowledge::builtin().expect("fixtures"));
    let mut verdicts = vec![criterion_1(), criterion_2()];
    report(&verdicts[0]);
    report(&verdicts[1]);

    println!("    training desk-scale runs (seed {SEED}) one after another");
    let (ndqn, ndqn_took) = desk_run(Architecture::Ndqn, Compression::DelexSyn, &k);
    let (raw, _) = desk_run(Architecture::Ndqn, Compression::Raw, &k);
    let (flat, _) = desk_run(Architecture::DqnFlat, Compression::DelexSyn, &k);
    for v in [
        criterion_3(&ndqn, ndqn_took),
        criterion_4(&ndqn, &flat),
        criterion_5(&ndqn, &raw, &flat),
        criterion_6(&ndqn, &raw),
        criterion_7(&k),
        criterion_8(&k),
        criterion_9(&k),
    ] {
        report(&v);
        verdicts.push(v);
    }
    let passed = verdicts.iter().filter(|v| v.pass).count();
    println!("acceptance: {passed}/{} criteria passed", verdicts.len());
}

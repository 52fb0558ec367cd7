//! Learned domain transition classifier: an 80-80 tanh network with a
//! one-vs-rest hinge output over the registry's domains, fed with hit-or-miss
//! word vectors of user turns.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::DomainId;
use crate::env::user::{answer_text, pick, recognise, request_text, NoiseConfig};
use crate::error::{Error, Result};
use crate::fixtures::Knowledge;
use crate::mlp::{Activation, Example, LossKind, Mask, Network, OutputKind, TrainConfig};
use crate::text::{tokenize, Vocabulary};

pub const DEFAULT_EPOCHS: usize = 180;
pub const TRAIN_FRACTION: f64 = 0.6;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledSet {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Fraction of examples per label.
    pub fn label_shares(&self, n_classes: usize) -> Vec<f64> {
        let mut counts = vec![0usize; n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts.iter().map(|&c| c as f64 / self.len().max(1) as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DomainDataset {
    pub train: LabeledSet,
    pub test: LabeledSet,
    /// Class index → domain.
    pub classes: Vec<DomainId>,
}

/// Hit-or-miss encoding of a word list.
pub fn hit_or_miss(words: &[String], vocab: &Vocabulary) -> Vec<f64> {
    let mut x = vec![0.0; vocab.len()];
    for w in words {
        if let Some(i) = vocab.index_of(w) {
            x[i] = 1.0;
        }
    }
    x
}

/// One simulated user turn and the domain the system should act in next.
pub fn simulate_user_turn(k: &Knowledge, domain: DomainId, rng: &mut impl Rng) -> String {
    let user = &k.user;
    let slots = k.registry.slots(domain);
    if slots.is_empty() {
        return if rng.gen::<f64>() < 0.7 {
            pick(&user.decline, false, rng).clone()
        } else {
            pick(&user.noise, false, rng).clone()
        };
    }
    let goal = slots
        .iter()
        .filter_map(|s| {
            let values = k.lexicon.values_of(s);
            values.choose(rng).map(|v| (s.clone(), (*v).to_owned()))
        })
        .collect();
    let r = rng.gen::<f64>();
    if r < 0.4 {
        request_text(user, domain, slots, &goal, 0.5, false, rng)
    } else if r < 0.75 {
        let groups: Vec<&Vec<String>> = user
            .answer
            .iter()
            .map(|t| &t.slots)
            .filter(|g| g.iter().all(|s| slots.contains(s)))
            .collect();
        let group = groups.choose(rng).map(|g| (*g).clone()).unwrap_or_else(|| slots.to_vec());
        answer_text(user, &group, &goal, false, rng)
    } else if r < 0.85 {
        pick(&user.affirm, false, rng).clone()
    } else if r < 0.95 {
        pick(&user.deny, false, rng).clone()
    } else {
        pick(&user.dontcare, false, rng).clone()
    }
}

/// `n` labelled user turns, balanced over domains, recognised with the default
/// noise model and split 60/40.
pub fn generate_domain_dataset(k: &Knowledge, vocab: &Vocabulary, n: usize, seed: u64) -> DomainDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes: Vec<DomainId> = k.registry.ids().collect();
    let noise = NoiseConfig::default();
    let mut all = LabeledSet::default();
    for i in 0..n {
        let label = i % classes.len();
        let text = simulate_user_turn(k, classes[label], &mut rng);
        let words: Vec<String> = recognise(&text, &noise, &k.lexicon, &k.user.noise, &mut rng)
            .into_iter()
            .map(|(w, _)| w)
            .collect();
        all.inputs.push(hit_or_miss(&words, vocab));
        all.labels.push(label);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = (n as f64 * TRAIN_FRACTION).round() as usize;
    let take = |idx: &[usize]| LabeledSet {
        inputs: idx.iter().map(|&i| all.inputs[i].clone()).collect(),
        labels: idx.iter().map(|&i| all.labels[i]).collect(),
    };
    DomainDataset {
        train: take(&order[..n_train]),
        test: take(&order[n_train..]),
        classes,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DomainClassifier {
    net: Network,
    vocab: Vocabulary,
    classes: Vec<DomainId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierTraining {
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
}

impl Default for ClassifierTraining {
    fn default() -> Self {
        Self {
            epochs: DEFAULT_EPOCHS,
            batch_size: 32,
            hidden: vec![80, 80],
            train: TrainConfig::default(),
        }
    }
}

impl DomainClassifier {
    /// Trains on `train` and reports accuracy on `test`.
    pub fn train(
        train: &LabeledSet,
        test: &LabeledSet,
        vocab: Vocabulary,
        classes: Vec<DomainId>,
        cfg: &ClassifierTraining,
    ) -> Result<(Self, f64)> {
        if train.is_empty() {
            return Err(Error::Training("empty training set".into()));
        }
        let n_in = train.inputs[0].len();
        if n_in != vocab.len() {
            return Err(Error::Input(format!(
                "inputs have {n_in} features, vocabulary has {}",
                vocab.len()
            )));
        }
        let n_classes = classes.len();
        let mut dims = vec![n_in];
        dims.extend(&cfg.hidden);
        dims.push(n_classes);
        let mut net = Network::new(&dims, Activation::Tanh, OutputKind::HingeMargin, cfg.train.rng_seed)?;
        let targets: Vec<Vec<f64>> = train
            .labels
            .iter()
            .map(|&l| (0..n_classes).map(|c| if c == l { 1.0 } else { -1.0 }).collect())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.rng_seed ^ 0x5eed);
        let mut order: Vec<usize> = (0..train.len()).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size.max(1)) {
                let batch: Vec<Example<'_>> = chunk
                    .iter()
                    .map(|&i| Example {
                        input: &train.inputs[i],
                        target: &targets[i],
                        mask: Mask::All,
                    })
                    .collect();
                net.sgd_step(&batch, &cfg.train, LossKind::Hinge)?;
            }
        }
        let clf = Self { net, vocab, classes };
        let acc = clf.accuracy(test)?;
        Ok((clf, acc))
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn classes(&self) -> &[DomainId] {
        &self.classes
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.net.forward(x)
    }

    /// Predicted class index; ties go to the lowest index.
    pub fn predict_index(&self, x: &[f64]) -> Result<usize> {
        let s = self.scores(x)?;
        let all: Vec<usize> = (0..s.len()).collect();
        Ok(crate::dqn::masked_argmax(&s, &all))
    }

    /// Predicted domain and the margin between the two best scores.
    pub fn classify_words(&self, words: &[String]) -> Result<(DomainId, f64)> {
        let x = hit_or_miss(words, &self.vocab);
        let s = self.scores(&x)?;
        let best = self.predict_index(&x)?;
        let runner_up = s
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != best)
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        let margin = if runner_up.is_finite() { s[best] - runner_up } else { f64::INFINITY };
        Ok((self.classes[best], margin))
    }

    pub fn classify_text(&self, text: &str) -> Result<(DomainId, f64)> {
        self.classify_words(&tokenize(text))
    }

    pub fn accuracy(&self, set: &LabeledSet) -> Result<f64> {
        if set.is_empty() {
            return Ok(0.0);
        }
        let mut hits = 0;
        for (x, &l) in set.inputs.iter().zip(&set.labels) {
            if self.predict_index(x)? == l {
                hits += 1;
            }
        }
        Ok(hits as f64 / set.len() as f64)
    }

    /// Saves `classifier.net`, `classifier.vocab` and `classifier.classes` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.net.save(&dir.join("classifier.net"))?;
        std::fs::write(dir.join("classifier.vocab"), self.vocab.to_text())?;
        let classes: Vec<String> = self.classes.iter().map(|d| d.0.to_string()).collect();
        std::fs::write(dir.join("classifier.classes"), classes.join("\n"))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let net = Network::load(&dir.join("classifier.net"))?;
        let vocab = Vocabulary::from_text(&std::fs::read_to_string(dir.join("classifier.vocab"))?);
        let classes = std::fs::read_to_string(dir.join("classifier.classes"))?
            .lines()
            .map(|l| l.trim().parse::<usize>().map(DomainId))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        if net.input_dim() != vocab.len() || net.output_dim() != classes.len() {
            return Err(Error::Checkpoint("classifier files are inconsistent".into()));
        }
        Ok(Self { net, vocab, classes })
    }
}

/// Trains on the dataset's 60% split and scores the 40% split. Accuracy
/// under 0.5 is reported as a training failure.
pub fn train_domain_classifier(
    dataset: &DomainDataset,
    vocab: &Vocabulary,
    cfg: &ClassifierTraining,
) -> Result<(DomainClassifier, f64)> {
    let (clf, acc) = DomainClassifier::train(
        &dataset.train,
        &dataset.test,
        vocab.clone(),
        dataset.classes.clone(),
        cfg,
    )?;
    if acc < 0.5 {
        return Err(Error::Training(format!(
            "domain classifier reached only {:.1}% held-out accuracy",
            acc * 100.0
        )));
    }
    Ok((clf, acc))
}

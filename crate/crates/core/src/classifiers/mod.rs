//! Data-driven components trained from dialogue data.

pub mod domain;
pub mod naive_bayes;
pub mod seed;

pub use domain::{generate_domain_dataset, train_domain_classifier, DomainClassifier, DomainDataset};
pub use naive_bayes::{train_naive_bayes, NaiveBayesModel};
pub use seed::{parse_seed_corpus, serialize_seed_corpus, SeedDialogue, SeedTurn, Speaker};

//! Multinomial Naive Bayes over binarised word features, giving `Pr(a | s)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    n_features: usize,
    /// `-inf` for actions never observed.
    log_prior: Vec<f64>,
    /// Row-major `(n_actions, n_features)` smoothed log-likelihoods.
    log_likelihood: Vec<f64>,
    alpha: f64,
}

/// Fits priors from action counts and Laplace-smoothed feature likelihoods.
/// A feature counts once per example when its value is positive.
pub fn train_naive_bayes(
    examples: &[(Vec<f64>, usize)],
    n_features: usize,
    n_actions: usize,
    alpha: f64,
) -> Result<NaiveBayesModel> {
    if examples.is_empty() {
        return Err(Error::Training("naive Bayes needs at least one example".into()));
    }
    if n_actions == 0 {
        return Err(Error::Training("naive Bayes needs at least one action".into()));
    }
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::Config(format!("smoothing {alpha} must be positive")));
    }
    let mut action_counts = vec![0usize; n_actions];
    let mut feature_counts = vec![0.0f64; n_actions * n_features];
    for (x, a) in examples {
        if *a >= n_actions {
            return Err(Error::Input(format!("label {a} outside {n_actions} actions")));
        }
        if x.len() != n_features {
            return Err(Error::Input(format!(
                "example has {} features, expected {n_features}",
                x.len()
            )));
        }
        action_counts[*a] += 1;
        let row = &mut feature_counts[a * n_features..(a + 1) * n_features];
        for (c, v) in row.iter_mut().zip(x) {
            if *v > 0.0 {
                *c += 1.0;
            }
        }
    }
    let total = examples.len() as f64;
    let log_prior = action_counts
        .iter()
        .map(|&c| if c == 0 { f64::NEG_INFINITY } else { (c as f64 / total).ln() })
        .collect();
    let mut log_likelihood = vec![0.0; n_actions * n_features];
    for a in 0..n_actions {
        let row = &feature_counts[a * n_features..(a + 1) * n_features];
        let denom = row.iter().sum::<f64>() + alpha * n_features as f64;
        for (f, c) in row.iter().enumerate() {
            log_likelihood[a * n_features + f] = ((c + alpha) / denom).ln();
        }
    }
    Ok(NaiveBayesModel {
        n_features,
        log_prior,
        log_likelihood,
        alpha,
    })
}

impl NaiveBayesModel {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_actions(&self) -> usize {
        self.log_prior.len()
    }

    pub fn prior(&self, a: usize) -> f64 {
        self.log_prior[a].exp()
    }

    /// Posterior over actions; sums to one.
    pub fn posterior(&self, x: &[f64]) -> Vec<f64> {
        let active: Vec<usize> = x
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(|(i, _)| i)
            .take_while(|&i| i < self.n_features)
            .collect();
        let scores: Vec<f64> = (0..self.n_actions())
            .map(|a| {
                let lp = self.log_prior[a];
                if lp == f64::NEG_INFINITY {
                    return lp;
                }
                let row = &self.log_likelihood[a * self.n_features..(a + 1) * self.n_features];
                lp + active.iter().map(|&f| row[f]).sum::<f64>()
            })
            .collect();
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / z).collect()
    }
}

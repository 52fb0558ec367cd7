//! Training metrics: checkpoint rows, their CSV form and trend statistics.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "step,episodes,avg_reward,avg_success,avg_length,elapsed_seconds";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: usize,
    pub episodes: usize,
    pub avg_reward: f64,
    pub avg_success: f64,
    pub avg_length: f64,
    pub elapsed_seconds: f64,
}

/// Outcome of one finished training or evaluation dialogue.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub reward: f64,
    pub success: f64,
    pub length: usize,
}

/// Averages over a set of episodes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub avg_reward: f64,
    pub avg_success: f64,
    pub avg_length: f64,
}

impl EvalSummary {
    pub fn from_episodes(eps: &[EpisodeSummary]) -> Self {
        if eps.is_empty() {
            return Self::default();
        }
        let n = eps.len() as f64;
        Self {
            episodes: eps.len(),
            avg_reward: eps.iter().map(|e| e.reward).sum::<f64>() / n,
            avg_success: eps.iter().map(|e| e.success).sum::<f64>() / n,
            avg_length: eps.iter().map(|e| e.length as f64).sum::<f64>() / n,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub rows: Vec<MetricsRow>,
    pub episodes: Vec<EpisodeSummary>,
}

impl TrainingLog {
    pub fn final_row(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }

    pub fn total_elapsed(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.elapsed_seconds)
    }

    /// Mean episode reward over the first and the last `fraction` of episodes.
    pub fn reward_trend(&self, fraction: f64) -> Option<(f64, f64)> {
        let n = self.episodes.len();
        let k = ((n as f64) * fraction).floor() as usize;
        if k == 0 {
            return None;
        }
        let mean = |eps: &[EpisodeSummary]| eps.iter().map(|e| e.reward).sum::<f64>() / eps.len() as f64;
        Some((mean(&self.episodes[..k]), mean(&self.episodes[n - k..])))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:.6},{:.6},{:.6},{:.3}",
                r.step, r.episodes, r.avg_reward, r.avg_success, r.avg_length, r.elapsed_seconds
            );
        }
        s
    }

    /// CSV without the wall-clock column, for run-to-run comparison.
    pub fn to_csv_without_time(&self) -> String {
        self.to_csv()
            .lines()
            .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Parses rows written by [`TrainingLog::to_csv`]; episode records are not part of the CSV.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == CSV_HEADER => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("expected header `{CSV_HEADER}`"),
                })
            }
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |msg: String| Error::Parse { line: i + 1, msg };
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 6 {
                return Err(bad(format!("expected 6 fields, found {}", f.len())));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|e| bad(e.to_string()));
            let real = |s: &str| s.parse::<f64>().map_err(|e| bad(e.to_string()));
            rows.push(MetricsRow {
                step: int(f[0])?,
                episodes: int(f[1])?,
                avg_reward: real(f[2])?,
                avg_success: real(f[3])?,
                avg_length: real(f[4])?,
                elapsed_seconds: real(f[5])?,
            });
        }
        Ok(Self {
            rows,
            episodes: Vec::new(),
        })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MannKendall {
    pub s: f64,
    pub variance: f64,
    pub z: f64,
    /// One-sided p-value for an increasing trend.
    pub p_increasing: f64,
}

/// Mann-Kendall trend test with tie-corrected variance and continuity correction.
pub fn mann_kendall(xs: &[f64]) -> Result<MannKendall> {
    let n = xs.len();
    if n < 3 {
        return Err(Error::Input(format!("Mann-Kendall needs at least 3 points, got {n}")));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::Input("Mann-Kendall input contains non-finite values".into()));
    }
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += match xs[j].partial_cmp(&xs[i]) {
                Some(std::cmp::Ordering::Greater) => 1.0,
                Some(std::cmp::Ordering::Less) => -1.0,
                _ => 0.0,
            };
        }
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * (t - 1.0) * (2.0 * t + 5.0);
        i = j + 1;
    }
    let nf = n as f64;
    let variance = (nf * (nf - 1.0) * (2.0 * nf + 5.0) - tie_term) / 18.0;
    let z = if variance <= 0.0 {
        0.0
    } else if s > 0.0 {
        (s - 1.0) / variance.sqrt()
    } else if s < 0.0 {
        (s + 1.0) / variance.sqrt()
    } else {
        0.0
    };
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(MannKendall {
        s,
        variance,
        z,
        p_increasing: 1.0 - normal.cdf(z),
    })
}

//! Hyperparameter search over finite value sets: exhaustive grids and
//! seeded random subsets, with a deterministic scoreboard either way.
//!
//! Trials are independent and may run on a worker pool; results are
//! assembled by trial index, so worker count and completion order never
//! change the outcome. The best trial minimizes the score, with ties
//! broken by fewer trainable parameters, then enumeration order.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{seed_stream, STREAM_SEARCH};

/// One settable value in a search space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Text(String),
}

impl std::fmt::Display for ParamValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Real(v) => write!(f, "{v}"),
            ParamValue::Text(v) => f.write_str(v),
        }
    }
}

/// One named dimension with its finite candidate set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchDimension {
    pub name: String,
    pub values: Vec<ParamValue>,
}

/// A full search space; the Cartesian product of its dimensions.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dimensions: Vec<SearchDimension>,
}

impl SearchSpace {
    pub fn check(&self) -> Result<()> {
        if self.dimensions.is_empty() {
            return Err(Error::domain("search space has no dimensions"));
        }
        let mut seen = BTreeSet::new();
        for dim in &self.dimensions {
            if dim.values.is_empty() {
                return Err(Error::domain(format!(
                    "search dimension '{}' has no values",
                    dim.name
                )));
            }
            if !seen.insert(dim.name.as_str()) {
                return Err(Error::consistency(format!(
                    "search dimension '{}' appears twice",
                    dim.name
                )));
            }
        }
        Ok(())
    }

    pub fn product_size(&self) -> usize {
        self.dimensions.iter().map(|d| d.values.len()).product()
    }

    /// The `idx`-th combination in enumeration order (last dimension
    /// fastest, like nested loops).
    fn combination(&self, idx: usize) -> Candidate {
        let mut rem = idx;
        let mut picks = vec![0usize; self.dimensions.len()];
        for (j, dim) in self.dimensions.iter().enumerate().rev() {
            picks[j] = rem % dim.values.len();
            rem /= dim.values.len();
        }
        Candidate {
            assignments: self
                .dimensions
                .iter()
                .zip(&picks)
                .map(|(d, &p)| (d.name.clone(), d.values[p].clone()))
                .collect(),
        }
    }
}

/// One point of the search space: `(dimension name, chosen value)` pairs in
/// dimension order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub assignments: Vec<(String, ParamValue)>,
}

impl Candidate {
    pub fn get(&self, name: &str) -> Option<&ParamValue> {
        self.assignments
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
    }

    pub fn get_int(&self, name: &str) -> Result<i64> {
        match self.get(name) {
            Some(ParamValue::Int(v)) => Ok(*v),
            Some(other) => Err(Error::domain(format!(
                "search parameter '{name}' is {other}, expected an integer"
            ))),
            None => Err(Error::domain(format!("search parameter '{name}' missing"))),
        }
    }

    pub fn get_real(&self, name: &str) -> Result<f64> {
        match self.get(name) {
            Some(ParamValue::Real(v)) => Ok(*v),
            Some(ParamValue::Int(v)) => Ok(*v as f64),
            Some(other) => Err(Error::domain(format!(
                "search parameter '{name}' is {other}, expected a number"
            ))),
            None => Err(Error::domain(format!("search parameter '{name}' missing"))),
        }
    }

    pub fn get_text(&self, name: &str) -> Result<&str> {
        match self.get(name) {
            Some(ParamValue::Text(v)) => Ok(v),
            Some(other) => Err(Error::domain(format!(
                "search parameter '{name}' is {other}, expected text"
            ))),
            None => Err(Error::domain(format!("search parameter '{name}' missing"))),
        }
    }

    pub fn describe(&self) -> String {
        self.assignments
            .iter()
            .map(|(n, v)| format!("{n}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// What a scorer reports for one successful trial.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialScore {
    /// Validation error to minimize (e.g., MAPE on the held-out split).
    pub score: f64,
    /// Trainable parameter count, the first tie-breaker.
    pub trainable_params: usize,
}

/// One scoreboard row: a candidate with either its score or the failure
/// that excluded it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub index: usize,
    pub candidate: Candidate,
    pub score: Option<TrialScore>,
    pub failure: Option<String>,
}

/// Search result: the winning trial plus every row, ordered by trial index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best_index: usize,
    pub best: Candidate,
    pub best_score: TrialScore,
    pub scoreboard: Vec<TrialOutcome>,
}

impl SearchOutcome {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for row in &self.scoreboard {
            let marker = if row.index == self.best_index { "*" } else { " " };
            match (&row.score, &row.failure) {
                (Some(s), _) => out.push_str(&format!(
                    "{marker} trial {:>3}  score {:>10.4}  params {:>7}  {}\n",
                    row.index,
                    s.score,
                    s.trainable_params,
                    row.candidate.describe()
                )),
                (None, Some(f)) => out.push_str(&format!(
                    "{marker} trial {:>3}  FAILED: {f}  {}\n",
                    row.index,
                    row.candidate.describe()
                )),
                (None, None) => unreachable!("every outcome has a score or a failure"),
            }
        }
        out
    }
}

fn run_trials<F>(candidates: Vec<(usize, Candidate)>, scorer: &F, workers: usize) -> Vec<TrialOutcome>
where
    F: Fn(&Candidate) -> Result<TrialScore> + Sync,
{
    let score_one = |(index, candidate): (usize, Candidate)| -> TrialOutcome {
        match scorer(&candidate) {
            Ok(s) if s.score.is_finite() => TrialOutcome {
                index,
                candidate,
                score: Some(s),
                failure: None,
            },
            Ok(s) => TrialOutcome {
                index,
                candidate,
                score: None,
                failure: Some(format!("non-finite score {}", s.score)),
            },
            Err(e) => TrialOutcome {
                index,
                candidate,
                score: None,
                failure: Some(e.to_string()),
            },
        }
    };
    let mut outcomes: Vec<TrialOutcome> = if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("worker pool construction");
        pool.install(|| {
            use rayon::prelude::*;
            candidates.into_par_iter().map(score_one).collect()
        })
    } else {
        candidates.into_iter().map(score_one).collect()
    };
    outcomes.sort_by_key(|o| o.index);
    outcomes
}

fn pick_best(scoreboard: &[TrialOutcome]) -> Result<(usize, Candidate, TrialScore)> {
    let mut best: Option<(usize, &Candidate, TrialScore)> = None;
    for row in scoreboard {
        let Some(score) = row.score else { continue };
        let better = match &best {
            None => true,
            Some((_, _, b)) => {
                score.score < b.score
                    || (score.score == b.score && score.trainable_params < b.trainable_params)
            }
        };
        if better {
            best = Some((row.index, &row.candidate, score));
        }
    }
    match best {
        Some((i, c, s)) => Ok((i, c.clone(), s)),
        None => Err(Error::Search(format!(
            "all {} trials failed; first failure: {}",
            scoreboard.len(),
            scoreboard
                .first()
                .and_then(|r| r.failure.as_deref())
                .unwrap_or("(empty scoreboard)")
        ))),
    }
}

/// Evaluates every combination exactly once, in enumeration order.
pub fn grid_search<F>(space: &SearchSpace, scorer: F, workers: usize) -> Result<SearchOutcome>
where
    F: Fn(&Candidate) -> Result<TrialScore> + Sync,
{
    space.check()?;
    let candidates: Vec<(usize, Candidate)> =
        (0..space.product_size()).map(|i| (i, space.combination(i))).collect();
    let scoreboard = run_trials(candidates, &scorer, workers);
    let (best_index, best, best_score) = pick_best(&scoreboard)?;
    Ok(SearchOutcome {
        best_index,
        best,
        best_score,
        scoreboard,
    })
}

/// Evaluates a seeded random subset of the space, without replacement. When
/// `n_trials` covers the whole space this degenerates to the full grid in
/// enumeration order.
pub fn random_search<F>(
    space: &SearchSpace,
    n_trials: usize,
    scorer: F,
    seed: u64,
    workers: usize,
) -> Result<SearchOutcome>
where
    F: Fn(&Candidate) -> Result<TrialScore> + Sync,
{
    space.check()?;
    if n_trials == 0 {
        return Err(Error::domain("random search needs at least one trial"));
    }
    let product = space.product_size();
    let picked: Vec<usize> = if n_trials >= product {
        (0..product).collect()
    } else {
        let mut rng = seed_stream(seed, STREAM_SEARCH);
        let mut seen = BTreeSet::new();
        let mut order = Vec::with_capacity(n_trials);
        while order.len() < n_trials {
            let idx = rng.random_range(0..product);
            if seen.insert(idx) {
                order.push(idx);
            }
        }
        order
    };
    let candidates: Vec<(usize, Candidate)> =
        picked.into_iter().map(|i| (i, space.combination(i))).collect();
    let scoreboard = run_trials(candidates, &scorer, workers);
    let (best_index, best, best_score) = pick_best(&scoreboard)?;
    Ok(SearchOutcome {
        best_index,
        best,
        best_score,
        scoreboard,
    })
}

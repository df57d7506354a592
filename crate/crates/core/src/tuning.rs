//! Grid search over the SS threshold and per-field top-k on the validation
//! split.

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Corpus, Split};
use crate::embeddings::EmbeddingProvider;
use crate::evaluation::{mapping_accuracy, EvalError, Rate};
use crate::pipeline::{candidate_index, retrieve_all, PipelineError, PipelineOptions};
use crate::retrieval::{Engine, SsParams};

pub const DEFAULT_TAUS: [f64; 4] = [0.65, 0.70, 0.75, 0.80];
pub const DEFAULT_KS: [usize; 3] = [3, 5, 7];

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("validation split is empty")]
    EmptyValidation,
    #[error("empty {0} grid")]
    EmptyGrid(&'static str),
    #[error("grid threshold {0} outside (0, 1)")]
    InvalidTau(f64),
    #[error("grid top-k must be at least 1")]
    InvalidK,
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningGrid {
    pub taus: Vec<f64>,
    pub ks: Vec<usize>,
}

impl Default for TuningGrid {
    fn default() -> Self {
        Self {
            taus: DEFAULT_TAUS.to_vec(),
            ks: DEFAULT_KS.to_vec(),
        }
    }
}

impl TuningGrid {
    /// Sorted, deduplicated, validated copy.
    fn normalized(&self) -> Result<TuningGrid, TuneError> {
        if self.taus.is_empty() {
            return Err(TuneError::EmptyGrid("tau"));
        }
        if self.ks.is_empty() {
            return Err(TuneError::EmptyGrid("k"));
        }
        if let Some(&tau) = self.taus.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(TuneError::InvalidTau(tau));
        }
        if self.ks.contains(&0) {
            return Err(TuneError::InvalidK);
        }
        let mut taus = self.taus.clone();
        taus.sort_by(f64::total_cmp);
        taus.dedup();
        let mut ks = self.ks.clone();
        ks.sort_unstable();
        ks.dedup();
        Ok(TuningGrid { taus, ks })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfigScore {
    pub tau: f64,
    pub k: usize,
    pub accuracy: Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningResult {
    /// Every grid cell, ordered by tau then k.
    pub per_config: Vec<ConfigScore>,
    pub best: ConfigScore,
}

/// Evaluates SS validation accuracy for every `(tau, k)` pair. The best
/// configuration has the highest accuracy; ties go to the lower tau, then
/// the lower k.
pub fn grid_search(
    corpus: &Corpus,
    provider: &EmbeddingProvider,
    grid: &TuningGrid,
    options: &PipelineOptions,
) -> Result<TuningResult, TuneError> {
    let grid = grid.normalized()?;
    let val = corpus.split_view(Split::Val);
    if val.gold_mappings().is_empty() {
        return Err(TuneError::EmptyValidation);
    }
    let index = candidate_index(corpus, options)?;

    let mut per_config = Vec::with_capacity(grid.taus.len() * grid.ks.len());
    for &tau in &grid.taus {
        for &k in &grid.ks {
            let params = SsParams { tau, k };
            let results = retrieve_all(
                &val,
                &index,
                provider,
                Engine::Ss,
                Some(params),
                options.mode,
            )?;
            let accuracy = mapping_accuracy(&results, val.gold_mappings())?.overall;
            per_config.push(ConfigScore { tau, k, accuracy });
        }
    }

    // All cells share one denominator, so comparing correct counts is exact.
    // Iteration order is (tau, k) ascending and only a strict improvement
    // replaces the incumbent.
    let mut best = per_config[0];
    for cell in &per_config[1..] {
        if cell.accuracy.correct > best.accuracy.correct {
            best = *cell;
        }
    }
    Ok(TuningResult { per_config, best })
}

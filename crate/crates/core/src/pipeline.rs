//! Runs the engines over a split and turns the results into word types.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Corpus, Split};
use crate::embeddings::EmbeddingProvider;
use crate::retrieval::{
    build_query, em_retrieve, ss_retrieve, Engine, InputMode, RetrievalError, RetrievalResult,
    SignIndex, SsParams,
};
use crate::typing::{aggregate_word, assign_type, SimAggregation, TypeDecision};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("candidate pool is empty ({0})")]
    EmptyPool(CandidatePool),
    #[error("the SS engine needs tau and k")]
    MissingSsParams,
    #[error("result for unknown use `{0}`")]
    UnknownUse(String),
}

/// Which signs the engines may return.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidatePool {
    /// Signs referenced by the gold mappings of the train split.
    #[default]
    Train,
    /// The whole sign inventory.
    Inventory,
}

impl fmt::Display for CandidatePool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CandidatePool::Train => "train",
            CandidatePool::Inventory => "inventory",
        })
    }
}

impl FromStr for CandidatePool {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(CandidatePool::Train),
            "inventory" => Ok(CandidatePool::Inventory),
            _ => Err(format!(
                "unknown candidate pool `{s}` (expected train or inventory)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PipelineOptions {
    pub mode: InputMode,
    pub pool: CandidatePool,
    pub aggregation: SimAggregation,
}

/// Builds the sign index for the configured pool from the full corpus.
pub fn candidate_index(
    corpus: &Corpus,
    options: &PipelineOptions,
) -> Result<SignIndex, PipelineError> {
    let index = match options.pool {
        CandidatePool::Inventory => SignIndex::build(corpus.inventory(), options.mode),
        CandidatePool::Train => {
            let train = corpus.gold_signs_in(Split::Train);
            SignIndex::build(
                corpus
                    .inventory()
                    .iter()
                    .filter(|s| train.contains(s.sign_id.as_str())),
                options.mode,
            )
        }
    };
    if index.is_empty() {
        return Err(PipelineError::EmptyPool(options.pool));
    }
    Ok(index)
}

/// One result per use of `view`, in corpus order.
pub fn retrieve_all(
    view: &Corpus,
    index: &SignIndex,
    provider: &EmbeddingProvider,
    engine: Engine,
    ss: Option<SsParams>,
    mode: InputMode,
) -> Result<Vec<RetrievalResult>, PipelineError> {
    view.uses()
        .iter()
        .map(|word_use| {
            let query = build_query(word_use, mode);
            Ok(match engine {
                Engine::Em => em_retrieve(&query, index, provider)?,
                Engine::Ss => {
                    let params = ss.ok_or(PipelineError::MissingSsParams)?;
                    ss_retrieve(&query, index, provider, params)?
                }
            })
        })
        .collect()
}

/// One type decision per lemma of `view`, sorted by lemma.
pub fn decide_types(
    view: &Corpus,
    results: &[RetrievalResult],
    tau: f64,
    aggregation: SimAggregation,
) -> Result<Vec<TypeDecision>, PipelineError> {
    let mut by_lemma: BTreeMap<&str, Vec<&RetrievalResult>> = view
        .lemmas()
        .into_iter()
        .map(|lemma| (lemma, Vec::new()))
        .collect();
    for result in results {
        let word_use = view
            .word_use(&result.use_id)
            .ok_or_else(|| PipelineError::UnknownUse(result.use_id.clone()))?;
        by_lemma
            .get_mut(word_use.lemma.as_str())
            .expect("lemma of a corpus use")
            .push(result);
    }
    Ok(by_lemma
        .into_iter()
        .map(|(lemma, results)| assign_type(aggregate_word(lemma, results, aggregation), tau))
        .collect())
}

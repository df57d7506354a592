//! Per-word aggregation of retrieval results and correspondence typing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::CorrespondenceType;
use crate::retrieval::RetrievalResult;

/// How per-use similarities collapse into one statistic per word.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimAggregation {
    /// Highest candidate score over all uses.
    #[default]
    Max,
    /// Mean of the top score of each use that returned candidates.
    Mean,
}

impl fmt::Display for SimAggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimAggregation::Max => "max",
            SimAggregation::Mean => "mean",
        })
    }
}

impl FromStr for SimAggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max" => Ok(SimAggregation::Max),
            "mean" => Ok(SimAggregation::Mean),
            _ => Err(format!(
                "unknown similarity aggregation `{s}` (expected max or mean)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WordPrediction {
    pub lemma: String,
    /// Union of the top-ranked (tie-inclusive) signs over the word's uses.
    pub predicted_sign_ids: BTreeSet<String>,
    /// `None` exactly when no sign was predicted.
    pub sim_stat: Option<f64>,
    pub per_use: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeDecision {
    pub lemma: String,
    pub predicted_type: CorrespondenceType,
    pub evidence: WordPrediction,
    pub tau: f64,
}

pub fn aggregate_word<'a>(
    lemma: &str,
    results: impl IntoIterator<Item = &'a RetrievalResult>,
    aggregation: SimAggregation,
) -> WordPrediction {
    let mut predicted = BTreeSet::new();
    let mut per_use = BTreeMap::new();
    let mut top_scores = Vec::new();
    for result in results {
        let top: BTreeSet<String> = result.top_ranked().map(|c| c.sign_id.clone()).collect();
        predicted.extend(top.iter().cloned());
        per_use.insert(result.use_id.clone(), top);
        if let Some(score) = result.top_score() {
            top_scores.push(score);
        }
    }
    // Sorted so the statistic does not depend on the order of the uses.
    top_scores.sort_by(f64::total_cmp);
    let sim_stat = if predicted.is_empty() {
        None
    } else {
        match aggregation {
            SimAggregation::Max => top_scores.last().copied(),
            SimAggregation::Mean => Some(top_scores.iter().sum::<f64>() / top_scores.len() as f64),
        }
    };
    WordPrediction {
        lemma: lemma.to_owned(),
        predicted_sign_ids: predicted,
        sim_stat,
        per_use,
    }
}

/// The typing rule: no signs is No Match, several signs is Type 1, a single
/// sign is Type 3 when its similarity reaches `tau` and Type 2 otherwise.
pub fn classify(sign_count: usize, sim_stat: Option<f64>, tau: f64) -> CorrespondenceType {
    match sign_count {
        0 => CorrespondenceType::NoMatch,
        1 => match sim_stat {
            Some(sim) if sim >= tau => CorrespondenceType::Type3,
            _ => CorrespondenceType::Type2,
        },
        _ => CorrespondenceType::Type1,
    }
}

pub fn assign_type(prediction: WordPrediction, tau: f64) -> TypeDecision {
    let predicted_type = classify(
        prediction.predicted_sign_ids.len(),
        prediction.sim_stat,
        tau,
    );
    TypeDecision {
        lemma: prediction.lemma.clone(),
        predicted_type,
        evidence: prediction,
        tau,
    }
}

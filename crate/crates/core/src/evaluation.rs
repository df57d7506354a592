//! Mapping accuracy, precision at K, per-type breakdowns, word-level type
//! agreement, EM/SS error flow and part-of-speech breakdowns.
//!
//! A use whose gold sign set is non-empty belongs to the *match* stratum and
//! is correct when its top-ranked candidates (all candidates tied at the top
//! score) intersect the gold set. A use with an empty gold set belongs to
//! the *no-match* stratum and is correct only when nothing was retrieved.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::corpus::{read_tsv, Corpus, CorpusError, CorrespondenceType, GoldMapping, GoldWordType};
use crate::retrieval::{Engine, RetrievalResult};
use crate::typing::TypeDecision;

/// Cut-offs reported for precision at K.
pub const DEFAULT_KS: [usize; 4] = [1, 3, 5, 10];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no prediction record for use `{0}`")]
    MissingPrediction(String),
    #[error("duplicate prediction record for use `{0}`")]
    DuplicatePrediction(String),
    #[error("use `{0}` is not part of the corpus")]
    UnknownUse(String),
    #[error("lemma `{0}` has no gold correspondence type")]
    MissingGoldType(String),
    #[error("duplicate type decision for lemma `{0}`")]
    DuplicateDecision(String),
    #[error("no type decision for gold word `{0}`")]
    MissingDecision(String),
    #[error("EM and SS results cover different uses")]
    MismatchedUseSets,
    #[error("K must be at least 1")]
    InvalidK,
}

/// `correct / total`, kept as counts so strata can be merged exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Rate {
    pub correct: usize,
    pub total: usize,
}

impl Rate {
    pub fn new(correct: usize, total: usize) -> Self {
        debug_assert!(correct <= total);
        Self { correct, total }
    }

    pub fn record(&mut self, correct: bool) {
        self.total += 1;
        if correct {
            self.correct += 1;
        }
    }

    pub fn merge(self, other: Rate) -> Rate {
        Rate::new(self.correct + other.correct, self.total + other.total)
    }

    /// Percentage, or `None` for an empty stratum.
    pub fn percent(&self) -> Option<f64> {
        (self.total > 0).then(|| 100.0 * self.correct as f64 / self.total as f64)
    }
}

impl Serialize for Rate {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("Rate", 3)?;
        s.serialize_field("correct", &self.correct)?;
        s.serialize_field("total", &self.total)?;
        s.serialize_field("percent", &self.percent())?;
        s.end()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Stratified {
    pub overall: Rate,
    #[serde(rename = "match")]
    pub matched: Rate,
    pub no_match: Rate,
}

impl Stratified {
    fn record(&mut self, gold: &GoldMapping, correct: bool) {
        if gold.is_no_match() {
            self.no_match.record(correct);
        } else {
            self.matched.record(correct);
        }
        self.overall.record(correct);
    }
}

/// Tie-aware correctness of a single prediction.
pub fn is_correct(result: &RetrievalResult, gold: &GoldMapping) -> bool {
    if gold.is_no_match() {
        result.is_empty()
    } else {
        result
            .top_ranked()
            .any(|c| gold.gold_sign_ids.contains(&c.sign_id))
    }
}

/// Whether a gold sign appears among the first `k` candidates (or, for a
/// no-match use, whether the prediction is empty).
pub fn hit_at_k(result: &RetrievalResult, gold: &GoldMapping, k: usize) -> bool {
    if gold.is_no_match() {
        result.is_empty()
    } else {
        result
            .candidates
            .iter()
            .take(k)
            .any(|c| gold.gold_sign_ids.contains(&c.sign_id))
    }
}

fn index_results(
    results: &[RetrievalResult],
) -> Result<HashMap<&str, &RetrievalResult>, EvalError> {
    let mut index = HashMap::with_capacity(results.len());
    for result in results {
        if index.insert(result.use_id.as_str(), result).is_some() {
            return Err(EvalError::DuplicatePrediction(result.use_id.clone()));
        }
    }
    Ok(index)
}

fn stratify(
    results: &[RetrievalResult],
    gold: &[GoldMapping],
    judge: impl Fn(&RetrievalResult, &GoldMapping) -> bool,
) -> Result<Stratified, EvalError> {
    let index = index_results(results)?;
    let mut out = Stratified::default();
    for mapping in gold {
        let result = index
            .get(mapping.use_id.as_str())
            .ok_or_else(|| EvalError::MissingPrediction(mapping.use_id.clone()))?;
        out.record(mapping, judge(result, mapping));
    }
    Ok(out)
}

pub fn mapping_accuracy(
    results: &[RetrievalResult],
    gold: &[GoldMapping],
) -> Result<Stratified, EvalError> {
    stratify(results, gold, is_correct)
}

pub fn precision_at_k(
    results: &[RetrievalResult],
    gold: &[GoldMapping],
    k: usize,
) -> Result<Stratified, EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidK);
    }
    stratify(results, gold, |r, g| hit_at_k(r, g, k))
}

/// Mapping accuracy within each gold-type stratum of the corpus.
pub fn per_type_breakdown(
    results: &[RetrievalResult],
    corpus: &Corpus,
) -> Result<BTreeMap<CorrespondenceType, Rate>, EvalError> {
    let index = index_results(results)?;
    let mut out: BTreeMap<CorrespondenceType, Rate> = BTreeMap::new();
    for mapping in corpus.gold_mappings() {
        let word_use = corpus
            .word_use(&mapping.use_id)
            .ok_or_else(|| EvalError::UnknownUse(mapping.use_id.clone()))?;
        let gold_type = corpus
            .gold_type_of(&word_use.lemma)
            .ok_or_else(|| EvalError::MissingGoldType(word_use.lemma.clone()))?;
        let result = index
            .get(mapping.use_id.as_str())
            .ok_or_else(|| EvalError::MissingPrediction(mapping.use_id.clone()))?;
        out.entry(gold_type)
            .or_default()
            .record(is_correct(result, mapping));
    }
    Ok(out)
}

/// Word-level confusion counts, indexed `[gold][predicted]`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    counts: BTreeMap<CorrespondenceType, BTreeMap<CorrespondenceType, usize>>,
}

impl ConfusionMatrix {
    pub fn add(&mut self, gold: CorrespondenceType, predicted: CorrespondenceType) {
        *self
            .counts
            .entry(gold)
            .or_default()
            .entry(predicted)
            .or_default() += 1;
    }

    pub fn get(&self, gold: CorrespondenceType, predicted: CorrespondenceType) -> usize {
        self.counts
            .get(&gold)
            .and_then(|row| row.get(&predicted))
            .copied()
            .unwrap_or(0)
    }

    pub fn row_total(&self, gold: CorrespondenceType) -> usize {
        self.counts.get(&gold).map_or(0, |row| row.values().sum())
    }

    pub fn column_total(&self, predicted: CorrespondenceType) -> usize {
        self.counts
            .values()
            .filter_map(|row| row.get(&predicted))
            .sum()
    }

    pub fn total(&self) -> usize {
        self.counts.values().flat_map(|row| row.values()).sum()
    }

    pub fn diagonal(&self) -> usize {
        CorrespondenceType::ALL
            .iter()
            .map(|&t| self.get(t, t))
            .sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TypeAgreement {
    pub confusion: ConfusionMatrix,
    pub per_type: BTreeMap<CorrespondenceType, Rate>,
    pub overall: Rate,
}

/// Compares one decision per gold word against the gold word types.
pub fn type_agreement(
    decisions: &[TypeDecision],
    gold_types: &[GoldWordType],
) -> Result<TypeAgreement, EvalError> {
    let mut predicted: HashMap<&str, CorrespondenceType> = HashMap::new();
    for decision in decisions {
        if predicted
            .insert(decision.lemma.as_str(), decision.predicted_type)
            .is_some()
        {
            return Err(EvalError::DuplicateDecision(decision.lemma.clone()));
        }
    }
    let gold: HashMap<&str, CorrespondenceType> = gold_types
        .iter()
        .map(|g| (g.lemma.as_str(), g.gold_type))
        .collect();
    if let Some(extra) = predicted.keys().find(|lemma| !gold.contains_key(*lemma)) {
        return Err(EvalError::MissingGoldType((*extra).to_owned()));
    }

    let mut out = TypeAgreement::default();
    for entry in gold_types {
        let predicted_type = predicted
            .get(entry.lemma.as_str())
            .copied()
            .ok_or_else(|| EvalError::MissingDecision(entry.lemma.clone()))?;
        let agree = predicted_type == entry.gold_type;
        out.confusion.add(entry.gold_type, predicted_type);
        out.per_type
            .entry(entry.gold_type)
            .or_default()
            .record(agree);
        out.overall.record(agree);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ErrorFlow {
    pub both_succeed: usize,
    pub ss_only: usize,
    pub em_only: usize,
    pub both_fail: usize,
}

impl ErrorFlow {
    pub fn total(&self) -> usize {
        self.both_succeed + self.ss_only + self.em_only + self.both_fail
    }

    /// SS minus EM accuracy, in percentage points.
    pub fn net_gain_pp(&self) -> Option<f64> {
        let n = self.total();
        (n > 0).then(|| 100.0 * (self.ss_only as f64 - self.em_only as f64) / n as f64)
    }
}

pub fn error_flow(
    em_results: &[RetrievalResult],
    ss_results: &[RetrievalResult],
    gold: &[GoldMapping],
) -> Result<ErrorFlow, EvalError> {
    let em = index_results(em_results)?;
    let ss = index_results(ss_results)?;
    if em.len() != ss.len() || em.keys().any(|id| !ss.contains_key(id)) {
        return Err(EvalError::MismatchedUseSets);
    }
    let mut flow = ErrorFlow::default();
    for mapping in gold {
        let lookup = |index: &HashMap<&str, &RetrievalResult>| {
            index
                .get(mapping.use_id.as_str())
                .map(|r| is_correct(r, mapping))
                .ok_or_else(|| EvalError::MissingPrediction(mapping.use_id.clone()))
        };
        match (lookup(&em)?, lookup(&ss)?) {
            (true, true) => flow.both_succeed += 1,
            (false, true) => flow.ss_only += 1,
            (true, false) => flow.em_only += 1,
            (false, false) => flow.both_fail += 1,
        }
    }
    Ok(flow)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartOfSpeech {
    Noun,
    Verb,
    Adjective,
    Unknown,
}

impl PartOfSpeech {
    pub fn label(self) -> &'static str {
        match self {
            PartOfSpeech::Noun => "noun",
            PartOfSpeech::Verb => "verb",
            PartOfSpeech::Adjective => "adjective",
            PartOfSpeech::Unknown => "unknown",
        }
    }
}

impl fmt::Display for PartOfSpeech {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PartOfSpeech {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "noun" => Ok(PartOfSpeech::Noun),
            "verb" => Ok(PartOfSpeech::Verb),
            "adjective" => Ok(PartOfSpeech::Adjective),
            _ => Err(format!(
                "unknown part of speech `{s}` (expected noun, verb or adjective)"
            )),
        }
    }
}

#[derive(Deserialize)]
struct PosRow {
    lemma: String,
    pos: String,
}

/// Reads a `lemma pos` TSV table.
pub fn load_pos_table(path: &Path) -> Result<BTreeMap<String, PartOfSpeech>, CorpusError> {
    let rows = read_tsv(path, |row: PosRow, line| {
        let pos = row.pos.parse().map_err(|message| CorpusError::Parse {
            path: path.to_owned(),
            line,
            message,
        })?;
        Ok((row.lemma, pos))
    })?;
    let mut table = BTreeMap::new();
    for (lemma, pos) in rows {
        if table.insert(lemma.clone(), pos).is_some() {
            return Err(CorpusError::DuplicateId {
                kind: "part-of-speech entry for lemma",
                id: lemma,
            });
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosWord {
    pub pos: PartOfSpeech,
    pub lemma: String,
    pub gold_type: Option<CorrespondenceType>,
    pub predicted_type: CorrespondenceType,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PosBreakdown {
    pub words: Vec<PosWord>,
    pub gold: BTreeMap<PartOfSpeech, BTreeMap<CorrespondenceType, usize>>,
    pub predicted: BTreeMap<PartOfSpeech, BTreeMap<CorrespondenceType, usize>>,
}

/// Part-of-speech by type contingency counts for gold and predicted types.
/// Lemmas missing from the table count as [`PartOfSpeech::Unknown`].
pub fn pos_breakdown(
    decisions: &[TypeDecision],
    gold_types: &[GoldWordType],
    pos_table: &BTreeMap<String, PartOfSpeech>,
) -> PosBreakdown {
    let gold: HashMap<&str, CorrespondenceType> = gold_types
        .iter()
        .map(|g| (g.lemma.as_str(), g.gold_type))
        .collect();
    let mut out = PosBreakdown::default();
    for decision in decisions {
        let pos = pos_table
            .get(&decision.lemma)
            .copied()
            .unwrap_or(PartOfSpeech::Unknown);
        let gold_type = gold.get(decision.lemma.as_str()).copied();
        if let Some(gold_type) = gold_type {
            *out.gold
                .entry(pos)
                .or_default()
                .entry(gold_type)
                .or_default() += 1;
        }
        *out.predicted
            .entry(pos)
            .or_default()
            .entry(decision.predicted_type)
            .or_default() += 1;
        out.words.push(PosWord {
            pos,
            lemma: decision.lemma.clone(),
            gold_type,
            predicted_type: decision.predicted_type,
        });
    }
    out.words
        .sort_by(|a, b| (a.pos, &a.lemma).cmp(&(b.pos, &b.lemma)));
    out
}

/// All metrics for one engine on one evaluated split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub engine: Engine,
    pub n: usize,
    pub accuracy: Stratified,
    pub per_type_accuracy: Option<BTreeMap<CorrespondenceType, Rate>>,
    pub precision_at_k: BTreeMap<usize, Stratified>,
    pub type_agreement: Option<TypeAgreement>,
    /// Mean top candidate score over uses with a non-empty prediction.
    pub mean_top_score: Option<f64>,
}

/// Evaluates one engine's results against the gold data of `corpus`.
/// Per-type accuracy is reported when the corpus carries gold word types;
/// type agreement when `decisions` are given as well.
pub fn evaluate(
    engine: Engine,
    results: &[RetrievalResult],
    corpus: &Corpus,
    ks: &[usize],
    decisions: Option<&[TypeDecision]>,
) -> Result<EvalReport, EvalError> {
    let gold = corpus.gold_mappings();
    let accuracy = mapping_accuracy(results, gold)?;
    let precision_at_k = ks
        .iter()
        .map(|&k| Ok((k, precision_at_k(results, gold, k)?)))
        .collect::<Result<BTreeMap<_, _>, EvalError>>()?;
    let has_types = !corpus.gold_types().is_empty();
    let per_type_accuracy = if has_types {
        Some(per_type_breakdown(results, corpus)?)
    } else {
        None
    };
    let type_agreement = match decisions {
        Some(decisions) if has_types => Some(type_agreement(decisions, corpus.gold_types())?),
        _ => None,
    };
    let mut top_scores: Vec<f64> = results
        .iter()
        .filter_map(RetrievalResult::top_score)
        .collect();
    top_scores.sort_by(f64::total_cmp);
    let mean_top_score =
        (!top_scores.is_empty()).then(|| top_scores.iter().sum::<f64>() / top_scores.len() as f64);
    Ok(EvalReport {
        engine,
        n: accuracy.overall.total,
        accuracy,
        per_type_accuracy,
        precision_at_k,
        type_agreement,
        mean_top_score,
    })
}

//! Query construction and the two retrieval engines.
//!
//! * Exact Match (EM) keeps the signs that share at least one normalized
//!   token with the query and ranks them by embedding similarity.
//! * Semantic Similarity (SS) scores every sign document, keeps the top `k`
//!   signs per source field, merges them by maximum score and drops those
//!   below the threshold `tau`.
//!
//! Results are always ordered by score descending, then sign ID ascending.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{SignEntry, WordUse};
use crate::embeddings::{cosine_similarity, EmbeddingError, EmbeddingProvider};
use crate::text::token_set;

pub const SEPARATOR: &str = " [SEP] ";

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("invalid retrieval parameter: {0}")]
    InvalidParameter(String),
    #[error("sign inventory is empty")]
    EmptyInventory,
}

macro_rules! labelled_enum {
    ($name:ident, $what:literal, { $($variant:ident => $label:literal),+ $(,)? }) => {
        impl $name {
            pub fn label(self) -> &'static str {
                match self { $($name::$variant => $label),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($label => Ok($name::$variant),)+
                    _ => Err(format!(
                        concat!("unknown ", $what, " `{}` (expected one of: {})"),
                        s,
                        [$($label),+].join(", ")
                    )),
                }
            }
        }
    };
}

/// Which parts of a word use go into the query.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum WugMode {
    #[default]
    FullContext,
    WordOnly,
    SentenceOnly,
}

labelled_enum!(WugMode, "word-use mode", {
    FullContext => "full_context",
    WordOnly => "word_only",
    SentenceOnly => "sentence_only",
});

/// Which dictionary fields become sign documents.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum DgsMode {
    #[default]
    Base,
    GtOnly,
}

labelled_enum!(DgsMode, "dictionary mode", {
    Base => "base",
    GtOnly => "gt_only",
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Em,
    Ss,
}

labelled_enum!(Engine, "engine", { Em => "em", Ss => "ss" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceField {
    Translation,
    Explanation,
}

labelled_enum!(SourceField, "source field", {
    Translation => "translation",
    Explanation => "explanation",
});

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct InputMode {
    pub wug: WugMode,
    pub dgs: DgsMode,
}

impl InputMode {
    pub fn new(wug: WugMode, dgs: DgsMode) -> Self {
        Self { wug, dgs }
    }

    /// The 3×2 ablation grid, in a fixed order.
    pub fn all() -> Vec<InputMode> {
        let mut modes = Vec::with_capacity(6);
        for wug in [
            WugMode::WordOnly,
            WugMode::FullContext,
            WugMode::SentenceOnly,
        ] {
            for dgs in [DgsMode::Base, DgsMode::GtOnly] {
                modes.push(InputMode { wug, dgs });
            }
        }
        modes
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub use_id: String,
    pub text: String,
    pub lemma: String,
    pub sentence: String,
    pub wug_mode: WugMode,
}

impl Query {
    /// Tokens matched against sign documents by the EM engine.
    pub fn overlap_tokens(&self) -> BTreeSet<String> {
        match self.wug_mode {
            WugMode::FullContext => {
                let mut tokens = token_set(&self.lemma);
                tokens.extend(token_set(&self.sentence));
                tokens
            }
            WugMode::WordOnly => token_set(&self.lemma),
            WugMode::SentenceOnly => token_set(&self.sentence),
        }
    }
}

pub fn build_query(word_use: &WordUse, mode: InputMode) -> Query {
    let text = match mode.wug {
        WugMode::FullContext => format!("{}{SEPARATOR}{}", word_use.lemma, word_use.sentence),
        WugMode::WordOnly => word_use.lemma.clone(),
        WugMode::SentenceOnly => word_use.sentence.clone(),
    };
    Query {
        use_id: word_use.use_id.clone(),
        text,
        lemma: word_use.lemma.clone(),
        sentence: word_use.sentence.clone(),
        wug_mode: mode.wug,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignDocument {
    pub sign_id: String,
    pub source_field: SourceField,
    pub text: String,
}

/// One document per translation, plus the explanation in `base` mode when
/// the sign has a non-blank one.
pub fn build_sign_documents(entry: &SignEntry, mode: InputMode) -> Vec<SignDocument> {
    let mut docs: Vec<SignDocument> = entry
        .translations
        .iter()
        .map(|t| SignDocument {
            sign_id: entry.sign_id.clone(),
            source_field: SourceField::Translation,
            text: t.clone(),
        })
        .collect();
    if mode.dgs == DgsMode::Base {
        if let Some(explanation) = entry.explanation_text() {
            docs.push(SignDocument {
                sign_id: entry.sign_id.clone(),
                source_field: SourceField::Explanation,
                text: explanation.to_owned(),
            });
        }
    }
    docs
}

/// Sign documents of an inventory with their overlap tokens precomputed.
#[derive(Debug, Clone)]
pub struct SignIndex {
    documents: Vec<SignDocument>,
    tokens: Vec<BTreeSet<String>>,
}

impl SignIndex {
    pub fn build<'a>(entries: impl IntoIterator<Item = &'a SignEntry>, mode: InputMode) -> Self {
        let documents: Vec<SignDocument> = entries
            .into_iter()
            .flat_map(|e| build_sign_documents(e, mode))
            .collect();
        let tokens = documents.iter().map(|d| token_set(&d.text)).collect();
        Self { documents, tokens }
    }

    pub fn documents(&self) -> &[SignDocument] {
        &self.documents
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn sign_count(&self) -> usize {
        self.documents
            .iter()
            .map(|d| d.sign_id.as_str())
            .collect::<BTreeSet<_>>()
            .len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub sign_id: String,
    pub score: f64,
    pub source_field: SourceField,
    pub engine: Engine,
}

/// Score descending, then sign ID ascending.
pub fn rank_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.sign_id.cmp(&b.sign_id))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub use_id: String,
    pub candidates: Vec<Candidate>,
}

impl RetrievalResult {
    /// Deduplicates by sign ID (keeping the highest score; on equal scores
    /// the translation field wins) and sorts into rank order.
    pub fn new(use_id: impl Into<String>, candidates: Vec<Candidate>) -> Self {
        let mut best: BTreeMap<String, Candidate> = BTreeMap::new();
        for candidate in candidates {
            match best.get(&candidate.sign_id) {
                Some(current)
                    if current.score > candidate.score
                        || (current.score == candidate.score
                            && current.source_field <= candidate.source_field) => {}
                _ => {
                    best.insert(candidate.sign_id.clone(), candidate);
                }
            }
        }
        let mut candidates: Vec<Candidate> = best.into_values().collect();
        candidates.sort_by(rank_order);
        Self {
            use_id: use_id.into(),
            candidates,
        }
    }

    pub fn empty(use_id: impl Into<String>) -> Self {
        Self {
            use_id: use_id.into(),
            candidates: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn top_score(&self) -> Option<f64> {
        self.candidates.first().map(|c| c.score)
    }

    /// All candidates tied at the top score.
    pub fn top_ranked(&self) -> impl Iterator<Item = &Candidate> {
        let top = self.top_score();
        self.candidates
            .iter()
            .take_while(move |c| Some(c.score) == top)
    }

    pub fn top_ranked_ids(&self) -> BTreeSet<&str> {
        self.top_ranked().map(|c| c.sign_id.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsParams {
    pub tau: f64,
    pub k: usize,
}

impl SsParams {
    fn validate(&self) -> Result<(), RetrievalError> {
        if !(-1.0..=1.0).contains(&self.tau) {
            return Err(RetrievalError::InvalidParameter(format!(
                "tau must lie in [-1, 1], got {}",
                self.tau
            )));
        }
        if self.k == 0 {
            return Err(RetrievalError::InvalidParameter(
                "k must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Lexical-overlap retrieval ranked by embedding similarity.
///
/// If the provider has no vector for the query or a matching document, the
/// whole query is ranked by overlap instead: the score becomes the fraction
/// of query tokens found in the best-overlapping document.
pub fn em_retrieve(
    query: &Query,
    index: &SignIndex,
    provider: &EmbeddingProvider,
) -> Result<RetrievalResult, RetrievalError> {
    if index.is_empty() {
        return Err(RetrievalError::EmptyInventory);
    }
    let query_tokens = query.overlap_tokens();
    let matches: Vec<(&SignDocument, usize)> = index
        .documents
        .iter()
        .zip(&index.tokens)
        .map(|(doc, tokens)| (doc, tokens.intersection(&query_tokens).count()))
        .filter(|(_, overlap)| *overlap > 0)
        .collect();
    if matches.is_empty() {
        return Ok(RetrievalResult::empty(&query.use_id));
    }

    match score_by_embedding(query, &matches, provider) {
        Ok(candidates) => Ok(RetrievalResult::new(&query.use_id, candidates)),
        Err(EmbeddingError::MissingEmbedding(_)) => {
            let denom = query_tokens.len() as f64;
            let candidates = matches
                .iter()
                .map(|(doc, overlap)| Candidate {
                    sign_id: doc.sign_id.clone(),
                    score: *overlap as f64 / denom,
                    source_field: doc.source_field,
                    engine: Engine::Em,
                })
                .collect();
            Ok(RetrievalResult::new(&query.use_id, candidates))
        }
        Err(other) => Err(other.into()),
    }
}

fn score_by_embedding(
    query: &Query,
    matches: &[(&SignDocument, usize)],
    provider: &EmbeddingProvider,
) -> Result<Vec<Candidate>, EmbeddingError> {
    let query_vec = provider.embed(&query.text)?;
    matches
        .iter()
        .map(|(doc, _)| {
            let doc_vec = provider.embed(&doc.text)?;
            Ok(Candidate {
                sign_id: doc.sign_id.clone(),
                score: cosine_similarity(&query_vec, &doc_vec)?,
                source_field: doc.source_field,
                engine: Engine::Em,
            })
        })
        .collect()
}

/// Embedding retrieval: per source field keep the `k` best signs, merge by
/// maximum score, drop scores below `tau`.
pub fn ss_retrieve(
    query: &Query,
    index: &SignIndex,
    provider: &EmbeddingProvider,
    params: SsParams,
) -> Result<RetrievalResult, RetrievalError> {
    params.validate()?;
    if index.is_empty() {
        return Err(RetrievalError::EmptyInventory);
    }
    let query_vec = provider.embed(&query.text)?;

    let mut per_field: BTreeMap<SourceField, BTreeMap<&str, f64>> = BTreeMap::new();
    for doc in &index.documents {
        let doc_vec = provider.embed(&doc.text)?;
        let score = cosine_similarity(&query_vec, &doc_vec)?;
        let best = per_field
            .entry(doc.source_field)
            .or_default()
            .entry(doc.sign_id.as_str())
            .or_insert(score);
        if score > *best {
            *best = score;
        }
    }

    let mut merged = Vec::new();
    for (field, signs) in per_field {
        let mut ranked: Vec<Candidate> = signs
            .into_iter()
            .map(|(sign_id, score)| Candidate {
                sign_id: sign_id.to_owned(),
                score,
                source_field: field,
                engine: Engine::Ss,
            })
            .collect();
        ranked.sort_by(rank_order);
        ranked.truncate(params.k);
        merged.extend(ranked);
    }
    let mut result = RetrievalResult::new(&query.use_id, merged);
    result.candidates.retain(|c| c.score >= params.tau);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Split;
    use crate::embeddings::{EmbeddingStore, EmbeddingVector};

    fn word_use(lemma: &str, sentence: &str) -> WordUse {
        WordUse {
            use_id: "u1".into(),
            lemma: lemma.into(),
            sentence: sentence.into(),
            period: None,
            split: Split::TestOverlap,
        }
    }

    fn sign(id: &str, translations: &[&str], explanation: Option<&str>) -> SignEntry {
        SignEntry {
            sign_id: id.into(),
            translations: translations.iter().map(|t| t.to_string()).collect(),
            explanation: explanation.map(str::to_owned),
            gloss: None,
        }
    }

    #[test]
    fn query_modes() {
        let u = word_use("Abend", "Am Abend ...");
        let text = |wug| build_query(&u, InputMode::new(wug, DgsMode::Base)).text;
        assert_eq!(text(WugMode::WordOnly), "Abend");
        assert_eq!(text(WugMode::SentenceOnly), "Am Abend ...");
        assert_eq!(text(WugMode::FullContext), "Abend [SEP] Am Abend ...");
    }

    #[test]
    fn document_counts() {
        let entry = sign(
            "637",
            &["Behandlung", "Therapie"],
            Some("ärztliche Versorgung"),
        );
        let base = build_sign_documents(&entry, InputMode::default());
        assert_eq!(base.len(), 3);
        assert_eq!(base[2].source_field, SourceField::Explanation);
        let gt = build_sign_documents(
            &entry,
            InputMode::new(WugMode::FullContext, DgsMode::GtOnly),
        );
        assert_eq!(gt.len(), 2);

        let blank = sign("1", &["a", "b"], Some("  "));
        assert_eq!(
            build_sign_documents(&blank, InputMode::default()),
            build_sign_documents(
                &blank,
                InputMode::new(WugMode::FullContext, DgsMode::GtOnly)
            )
        );
    }

    #[test]
    fn dedupe_keeps_max_and_orders_ties_by_id() {
        let c = |id: &str, score, field| Candidate {
            sign_id: id.into(),
            score,
            source_field: field,
            engine: Engine::Ss,
        };
        let result = RetrievalResult::new(
            "u",
            vec![
                c("b", 0.5, SourceField::Translation),
                c("a", 0.5, SourceField::Explanation),
                c("b", 0.9, SourceField::Explanation),
                c("c", 0.9, SourceField::Translation),
            ],
        );
        let ids: Vec<&str> = result
            .candidates
            .iter()
            .map(|c| c.sign_id.as_str())
            .collect();
        assert_eq!(ids, ["b", "c", "a"]);
        assert_eq!(result.candidates[0].source_field, SourceField::Explanation);
        assert_eq!(result.top_ranked_ids(), BTreeSet::from(["b", "c"]));
    }

    #[test]
    fn em_without_overlap_is_empty() {
        let index = SignIndex::build(&[sign("19", &["Abend"], None)], InputMode::default());
        let query = build_query(
            &word_use("Xyzzy", "Nichts passt."),
            InputMode::new(WugMode::WordOnly, DgsMode::Base),
        );
        let provider = EmbeddingProvider::Fallback { dim: 32 };
        assert!(em_retrieve(&query, &index, &provider).unwrap().is_empty());
    }

    #[test]
    fn em_falls_back_to_overlap_counts_on_missing_keys() {
        let signs = [
            sign("1", &["Abend essen"], None),
            sign("2", &["Abend"], None),
            sign("3", &["Morgen"], None),
        ];
        let index = SignIndex::build(&signs, InputMode::default());
        let query = build_query(
            &word_use("Abend", "wir essen"),
            InputMode::new(WugMode::FullContext, DgsMode::Base),
        );
        let provider = EmbeddingProvider::Store(EmbeddingStore::new(2, "empty"));
        let result = em_retrieve(&query, &index, &provider).unwrap();
        let ids: Vec<&str> = result
            .candidates
            .iter()
            .map(|c| c.sign_id.as_str())
            .collect();
        assert_eq!(ids, ["1", "2"]);
        // query tokens {abend, wir, essen}
        assert_eq!(result.candidates[0].score, 2.0 / 3.0);
        assert_eq!(result.candidates[1].score, 1.0 / 3.0);
    }

    #[test]
    fn ss_self_similarity_ranks_first() {
        let signs = [
            sign(
                "19",
                &["Abend", "Nacht"],
                Some("Tageszeit nach dem Nachmittag"),
            ),
            sign("637", &["Behandlung"], None),
            sign("999", &["Bearbeitung"], None),
        ];
        let index = SignIndex::build(&signs, InputMode::default());
        let query = build_query(
            &word_use("Behandlung", "x"),
            InputMode::new(WugMode::WordOnly, DgsMode::Base),
        );
        let provider = EmbeddingProvider::Fallback { dim: 256 };
        let result = ss_retrieve(&query, &index, &provider, SsParams { tau: 0.70, k: 3 }).unwrap();
        assert_eq!(result.candidates[0].sign_id, "637");
        assert!((result.candidates[0].score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ss_threshold_cuts_everything() {
        let mut store = EmbeddingStore::new(2, "m");
        store
            .insert("q", EmbeddingVector::new(vec![1.0, 0.0]).unwrap())
            .unwrap();
        store
            .insert("d", EmbeddingVector::new(vec![0.0, 1.0]).unwrap())
            .unwrap();
        let provider = EmbeddingProvider::Store(store);
        let index = SignIndex::build(&[sign("1", &["d"], None)], InputMode::default());
        let query = build_query(
            &word_use("q", "s"),
            InputMode::new(WugMode::WordOnly, DgsMode::Base),
        );
        let result = ss_retrieve(&query, &index, &provider, SsParams { tau: 0.5, k: 1 }).unwrap();
        assert!(result.is_empty());
    }

    #[test]
    fn ss_top_k_is_per_field_and_per_sign() {
        // k=1 keeps only A from the translation field; B still enters
        // through the explanation field
        let mut store = EmbeddingStore::new(2, "m");
        let vec = |x: f64, y: f64| EmbeddingVector::new(vec![x, y]).unwrap();
        store.insert("q", vec(1.0, 0.0)).unwrap();
        store.insert("a1", vec(1.0, 0.1)).unwrap();
        store.insert("a2", vec(1.0, 0.2)).unwrap();
        store.insert("b1", vec(1.0, 0.3)).unwrap();
        store.insert("b explained", vec(1.0, 0.05)).unwrap();
        let provider = EmbeddingProvider::Store(store);
        let signs = [
            sign("A", &["a1", "a2"], None),
            sign("B", &["b1"], Some("b explained")),
        ];
        let index = SignIndex::build(&signs, InputMode::default());
        let query = build_query(
            &word_use("q", "s"),
            InputMode::new(WugMode::WordOnly, DgsMode::Base),
        );
        let result = ss_retrieve(&query, &index, &provider, SsParams { tau: -1.0, k: 1 }).unwrap();
        let ids: Vec<&str> = result
            .candidates
            .iter()
            .map(|c| c.sign_id.as_str())
            .collect();
        assert_eq!(ids, ["B", "A"]);
        assert_eq!(result.candidates[0].source_field, SourceField::Explanation);
    }

    #[test]
    fn ss_rejects_bad_params() {
        let index = SignIndex::build(&[sign("1", &["d"], None)], InputMode::default());
        let query = build_query(&word_use("q", "s"), InputMode::default());
        let provider = EmbeddingProvider::Fallback { dim: 8 };
        assert!(ss_retrieve(&query, &index, &provider, SsParams { tau: 0.5, k: 0 }).is_err());
        assert!(ss_retrieve(&query, &index, &provider, SsParams { tau: 1.5, k: 1 }).is_err());
    }

    #[test]
    fn mode_labels_round_trip() {
        for mode in InputMode::all() {
            assert_eq!(mode.wug.label().parse::<WugMode>().unwrap(), mode.wug);
            assert_eq!(mode.dgs.label().parse::<DgsMode>().unwrap(), mode.dgs);
        }
        assert!("both".parse::<Engine>().is_err());
    }
}

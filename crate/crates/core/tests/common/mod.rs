//! Fixture generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use sensemap::corpus::{SignEntry, Split, WordUse};
use sensemap::embeddings::EmbeddingProvider;
use sensemap::retrieval::{DgsMode, InputMode, SourceField, WugMode};

pub const VOCAB: &[&str] = &[
    "Abend",
    "Bank",
    "Behandlung",
    "Schloss",
    "Kiefer",
    "Brücke",
    "Leiter",
    "Mutter",
    "Ball",
    "Gericht",
    "Strom",
    "Zug",
    "Decke",
    "Messe",
    "Pony",
    "Tau",
    "Kater",
    "Blatt",
    "Feder",
    "Hahn",
    "am",
    "der",
    "die",
    "im",
    "Garten",
    "Stadt",
    "sitzen",
    "gehen",
    "schön",
    "alt",
];

pub struct Fixture {
    pub signs: Vec<SignEntry>,
    pub uses: Vec<WordUse>,
    pub mode: InputMode,
}

fn phrase(rng: &mut ChaCha8Rng, max_words: usize) -> String {
    let n = rng.random_range(1..=max_words);
    (0..n)
        .map(|_| *VOCAB.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

/// A fixture with at most `max_signs` signs and `max_uses` uses.
pub fn random_fixture(rng: &mut ChaCha8Rng, max_signs: usize, max_uses: usize) -> Fixture {
    let n_signs = rng.random_range(1..=max_signs);
    let signs = (0..n_signs)
        .map(|i| {
            let n_translations = rng.random_range(1..=3);
            let explanation = match rng.random_range(0..3) {
                0 => None,
                1 => Some("  ".to_owned()),
                _ => Some(phrase(rng, 6)),
            };
            SignEntry {
                sign_id: format!("{}", 100 + i),
                translations: (0..n_translations).map(|_| phrase(rng, 2)).collect(),
                explanation,
                gloss: None,
            }
        })
        .collect();
    let n_uses = rng.random_range(1..=max_uses);
    let uses = (0..n_uses)
        .map(|i| WordUse {
            use_id: format!("u{i:03}"),
            lemma: VOCAB.choose(rng).unwrap().to_string(),
            sentence: phrase(rng, 8),
            period: None,
            split: Split::TestOverlap,
        })
        .collect();
    let all = InputMode::all();
    let mode = *all.choose(rng).unwrap();
    Fixture { signs, uses, mode }
}

pub fn plain_cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    dot / (na.sqrt() * nb.sqrt())
}

pub fn oracle_query_text(word_use: &WordUse, wug: WugMode) -> String {
    match wug {
        WugMode::FullContext => format!("{} [SEP] {}", word_use.lemma, word_use.sentence),
        WugMode::WordOnly => word_use.lemma.clone(),
        WugMode::SentenceOnly => word_use.sentence.clone(),
    }
}

/// Exhaustive ranking: every sign scored by its best document, ordered by
/// score descending then sign ID.
pub fn brute_force_ranking(
    query_text: &str,
    signs: &[SignEntry],
    mode: InputMode,
    provider: &EmbeddingProvider,
) -> Vec<(String, f64, SourceField)> {
    let q = provider.embed(query_text).unwrap().values().to_vec();
    let score = |text: &str| plain_cosine(&q, provider.embed(text).unwrap().values());
    let mut out = Vec::new();
    for sign in signs {
        let mut best: Option<(f64, SourceField)> = None;
        for t in &sign.translations {
            let s = score(t);
            if best.is_none_or(|(b, _)| s > b) {
                best = Some((s, SourceField::Translation));
            }
        }
        if mode.dgs == DgsMode::Base {
            if let Some(e) = sign.explanation.as_deref().filter(|e| !e.trim().is_empty()) {
                let s = score(e);
                if best.is_none_or(|(b, _)| s > b) {
                    best = Some((s, SourceField::Explanation));
                }
            }
        }
        let (s, field) = best.unwrap();
        out.push((sign.sign_id.clone(), s, field));
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

/// Random gold sets over the fixture's signs; roughly a fifth are No Match.
pub fn random_gold(rng: &mut ChaCha8Rng, fixture: &Fixture) -> BTreeMap<String, Vec<String>> {
    fixture
        .uses
        .iter()
        .map(|u| {
            let gold = if rng.random_bool(0.2) {
                Vec::new()
            } else {
                let n = rng.random_range(1..=2.min(fixture.signs.len()));
                fixture
                    .signs
                    .choose_multiple(rng, n)
                    .map(|s| s.sign_id.clone())
                    .collect()
            };
            (u.use_id.clone(), gold)
        })
        .collect()
}

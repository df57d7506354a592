//! Word uses, the sign inventory, gold annotations, and their loaders.
//!
//! A corpus is read from four files:
//!
//! * word uses: TSV with columns `use_id lemma sentence period split`
//! * signs: JSON lines, one `{sign_id, translations, explanation, gloss}` object per line
//! * gold mappings: TSV with columns `use_id gold_sign_ids` (comma-joined,
//!   empty for a use with no matching sign)
//! * gold word types (optional): TSV with columns `lemma gold_type`
//!
//! Everything is validated on construction, so a [`Corpus`] value never
//! holds dangling or duplicate identifiers.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("duplicate {kind} `{id}`")]
    DuplicateId { kind: &'static str, id: String },
    #[error("{kind} `{id}` referenced by {context} does not exist")]
    DanglingReference {
        kind: &'static str,
        id: String,
        context: String,
    },
    #[error("invalid {kind} `{id}`: {reason}")]
    Invalid {
        kind: &'static str,
        id: String,
        reason: String,
    },
    #[error("unknown split `{0}` (expected train, val, test_overlap or test_no_overlap)")]
    UnknownSplit(String),
    #[error("unknown correspondence type `{0}` (expected type1, type2, type3 or no_match)")]
    UnknownType(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    TestOverlap,
    TestNoOverlap,
}

impl Split {
    pub const ALL: [Split; 4] = [
        Split::Train,
        Split::Val,
        Split::TestOverlap,
        Split::TestNoOverlap,
    ];

    /// The splits sharing vocabulary with the training pool.
    pub const DEVELOPMENT: [Split; 3] = [Split::Train, Split::Val, Split::TestOverlap];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::TestOverlap => "test_overlap",
            Split::TestNoOverlap => "test_no_overlap",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Split::ALL
            .into_iter()
            .find(|split| split.as_str() == s)
            .ok_or_else(|| CorpusError::UnknownSplit(s.to_owned()))
    }
}

/// How the senses of a word line up with dictionary signs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrespondenceType {
    /// One word, several signs.
    Type1,
    /// Several words share one sign.
    Type2,
    /// One word, one sign, parallel senses.
    Type3,
    NoMatch,
}

impl CorrespondenceType {
    pub const ALL: [CorrespondenceType; 4] = [
        CorrespondenceType::Type1,
        CorrespondenceType::Type2,
        CorrespondenceType::Type3,
        CorrespondenceType::NoMatch,
    ];

    /// File label, as used in TSV inputs and outputs.
    pub fn label(self) -> &'static str {
        match self {
            CorrespondenceType::Type1 => "type1",
            CorrespondenceType::Type2 => "type2",
            CorrespondenceType::Type3 => "type3",
            CorrespondenceType::NoMatch => "no_match",
        }
    }

    /// Human-readable name for report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            CorrespondenceType::Type1 => "Type 1",
            CorrespondenceType::Type2 => "Type 2",
            CorrespondenceType::Type3 => "Type 3",
            CorrespondenceType::NoMatch => "No Match",
        }
    }
}

impl fmt::Display for CorrespondenceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for CorrespondenceType {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CorrespondenceType::ALL
            .into_iter()
            .find(|t| t.label() == s)
            .ok_or_else(|| CorpusError::UnknownType(s.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordUse {
    pub use_id: String,
    pub lemma: String,
    pub sentence: String,
    pub period: Option<String>,
    pub split: Split,
}

/// One dictionary sign. The gloss is carried for display only; signs are
/// told apart by `sign_id` alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignEntry {
    pub sign_id: String,
    pub translations: Vec<String>,
    #[serde(default)]
    pub explanation: Option<String>,
    #[serde(default)]
    pub gloss: Option<String>,
}

impl SignEntry {
    /// The explanation text, if present and not blank.
    pub fn explanation_text(&self) -> Option<&str> {
        self.explanation
            .as_deref()
            .filter(|text| !text.trim().is_empty())
    }
}

/// Gold sign set for one use. An empty set means no sign matches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldMapping {
    pub use_id: String,
    pub gold_sign_ids: BTreeSet<String>,
}

impl GoldMapping {
    pub fn is_no_match(&self) -> bool {
        self.gold_sign_ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldWordType {
    pub lemma: String,
    pub gold_type: CorrespondenceType,
}

#[derive(Debug, Clone)]
pub struct CorpusPaths {
    pub uses: PathBuf,
    pub signs: PathBuf,
    pub gold: PathBuf,
    pub gold_types: Option<PathBuf>,
}

/// A validated, immutable corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    uses: Vec<WordUse>,
    inventory: Vec<SignEntry>,
    gold_mappings: Vec<GoldMapping>,
    gold_types: Vec<GoldWordType>,
    use_index: HashMap<String, usize>,
    sign_index: HashMap<String, usize>,
    gold_index: HashMap<String, usize>,
    type_index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(
        uses: Vec<WordUse>,
        inventory: Vec<SignEntry>,
        gold_mappings: Vec<GoldMapping>,
        gold_types: Vec<GoldWordType>,
    ) -> Result<Self, CorpusError> {
        let mut use_index = HashMap::with_capacity(uses.len());
        for (i, word_use) in uses.iter().enumerate() {
            validate_use(word_use)?;
            if use_index.insert(word_use.use_id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId {
                    kind: "use_id",
                    id: word_use.use_id.clone(),
                });
            }
        }

        let mut sign_index = HashMap::with_capacity(inventory.len());
        for (i, sign) in inventory.iter().enumerate() {
            validate_sign(sign)?;
            if sign_index.insert(sign.sign_id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId {
                    kind: "sign_id",
                    id: sign.sign_id.clone(),
                });
            }
        }

        let mut gold_index = HashMap::with_capacity(gold_mappings.len());
        for (i, mapping) in gold_mappings.iter().enumerate() {
            if !use_index.contains_key(&mapping.use_id) {
                return Err(CorpusError::DanglingReference {
                    kind: "use_id",
                    id: mapping.use_id.clone(),
                    context: "gold mapping".to_owned(),
                });
            }
            for sign_id in &mapping.gold_sign_ids {
                if !sign_index.contains_key(sign_id) {
                    return Err(CorpusError::DanglingReference {
                        kind: "sign_id",
                        id: sign_id.clone(),
                        context: format!("gold mapping for use `{}`", mapping.use_id),
                    });
                }
            }
            if gold_index.insert(mapping.use_id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId {
                    kind: "gold mapping for use_id",
                    id: mapping.use_id.clone(),
                });
            }
        }

        let lemmas: BTreeSet<&str> = uses.iter().map(|u| u.lemma.as_str()).collect();
        let mut type_index = HashMap::with_capacity(gold_types.len());
        for (i, entry) in gold_types.iter().enumerate() {
            if !lemmas.contains(entry.lemma.as_str()) {
                return Err(CorpusError::DanglingReference {
                    kind: "lemma",
                    id: entry.lemma.clone(),
                    context: "gold word type".to_owned(),
                });
            }
            if type_index.insert(entry.lemma.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId {
                    kind: "gold word type for lemma",
                    id: entry.lemma.clone(),
                });
            }
        }

        Ok(Self {
            uses,
            inventory,
            gold_mappings,
            gold_types,
            use_index,
            sign_index,
            gold_index,
            type_index,
        })
    }

    pub fn uses(&self) -> &[WordUse] {
        &self.uses
    }

    pub fn inventory(&self) -> &[SignEntry] {
        &self.inventory
    }

    pub fn gold_mappings(&self) -> &[GoldMapping] {
        &self.gold_mappings
    }

    pub fn gold_types(&self) -> &[GoldWordType] {
        &self.gold_types
    }

    pub fn word_use(&self, use_id: &str) -> Option<&WordUse> {
        self.use_index.get(use_id).map(|&i| &self.uses[i])
    }

    pub fn sign(&self, sign_id: &str) -> Option<&SignEntry> {
        self.sign_index.get(sign_id).map(|&i| &self.inventory[i])
    }

    pub fn gold_for(&self, use_id: &str) -> Option<&GoldMapping> {
        self.gold_index.get(use_id).map(|&i| &self.gold_mappings[i])
    }

    pub fn gold_type_of(&self, lemma: &str) -> Option<CorrespondenceType> {
        self.type_index
            .get(lemma)
            .map(|&i| self.gold_types[i].gold_type)
    }

    /// Distinct lemmas in first-appearance order.
    pub fn lemmas(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.uses
            .iter()
            .map(|u| u.lemma.as_str())
            .filter(|lemma| seen.insert(*lemma))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.uses.is_empty()
    }

    /// Restricts the corpus to one split: its uses, the gold mappings that
    /// reference them, and the word types of their lemmas. The sign
    /// inventory is kept whole.
    pub fn split_view(&self, split: Split) -> Corpus {
        let uses: Vec<WordUse> = self
            .uses
            .iter()
            .filter(|u| u.split == split)
            .cloned()
            .collect();
        let ids: BTreeSet<&str> = uses.iter().map(|u| u.use_id.as_str()).collect();
        let lemmas: BTreeSet<&str> = uses.iter().map(|u| u.lemma.as_str()).collect();
        let gold = self
            .gold_mappings
            .iter()
            .filter(|g| ids.contains(g.use_id.as_str()))
            .cloned()
            .collect();
        let types = self
            .gold_types
            .iter()
            .filter(|t| lemmas.contains(t.lemma.as_str()))
            .cloned()
            .collect();
        Corpus::new(uses, self.inventory.clone(), gold, types)
            .expect("a subset of a valid corpus is valid")
    }

    pub fn split_view_named(&self, split: &str) -> Result<Corpus, CorpusError> {
        Ok(self.split_view(split.parse()?))
    }

    /// Sign IDs referenced by gold mappings of the given split.
    pub fn gold_signs_in(&self, split: Split) -> BTreeSet<&str> {
        self.gold_mappings
            .iter()
            .filter(|g| self.word_use(&g.use_id).is_some_and(|u| u.split == split))
            .flat_map(|g| g.gold_sign_ids.iter().map(String::as_str))
            .collect()
    }

    pub fn stats(&self) -> CorpusStats {
        let mut per_split: BTreeMap<Split, SplitStats> = Split::ALL
            .into_iter()
            .map(|s| (s, SplitStats::default()))
            .collect();
        for mapping in &self.gold_mappings {
            let word_use = self.word_use(&mapping.use_id).expect("validated");
            let gold_type = self.gold_type_of(&word_use.lemma);
            let entry = per_split
                .get_mut(&word_use.split)
                .expect("all splits present");
            entry.mappings.add(gold_type);
            entry.lemmas.insert(word_use.lemma.clone(), gold_type);
        }
        CorpusStats { per_split }
    }

    /// Writes the corpus back out in the same formats [`load_corpus`] reads.
    pub fn write_files(&self, paths: &CorpusPaths) -> io::Result<()> {
        let mut uses = tsv_writer(&paths.uses)?;
        uses.write_record(["use_id", "lemma", "sentence", "period", "split"])?;
        for u in &self.uses {
            uses.write_record([
                u.use_id.as_str(),
                u.lemma.as_str(),
                u.sentence.as_str(),
                u.period.as_deref().unwrap_or(""),
                u.split.as_str(),
            ])?;
        }
        uses.flush()?;

        let mut signs = String::new();
        for sign in &self.inventory {
            signs.push_str(&serde_json::to_string(sign).map_err(io::Error::other)?);
            signs.push('\n');
        }
        std::fs::write(&paths.signs, signs)?;

        let mut gold = tsv_writer(&paths.gold)?;
        gold.write_record(["use_id", "gold_sign_ids"])?;
        for g in &self.gold_mappings {
            let ids: Vec<&str> = g.gold_sign_ids.iter().map(String::as_str).collect();
            gold.write_record([g.use_id.as_str(), ids.join(",").as_str()])?;
        }
        gold.flush()?;

        if let Some(types_path) = &paths.gold_types {
            let mut types = tsv_writer(types_path)?;
            types.write_record(["lemma", "gold_type"])?;
            for t in &self.gold_types {
                types.write_record([t.lemma.as_str(), t.gold_type.label()])?;
            }
            types.flush()?;
        }
        Ok(())
    }
}

fn validate_use(word_use: &WordUse) -> Result<(), CorpusError> {
    let invalid = |reason: &str| CorpusError::Invalid {
        kind: "word use",
        id: word_use.use_id.clone(),
        reason: reason.to_owned(),
    };
    if word_use.use_id.trim().is_empty() {
        return Err(invalid("empty use_id"));
    }
    if word_use.lemma.trim().is_empty() {
        return Err(invalid("empty lemma"));
    }
    if word_use.sentence.trim().is_empty() {
        return Err(invalid("empty sentence"));
    }
    Ok(())
}

fn validate_sign(sign: &SignEntry) -> Result<(), CorpusError> {
    let invalid = |reason: &str| CorpusError::Invalid {
        kind: "sign",
        id: sign.sign_id.clone(),
        reason: reason.to_owned(),
    };
    if sign.sign_id.trim().is_empty() {
        return Err(invalid("empty sign_id"));
    }
    if sign.translations.is_empty() {
        return Err(invalid("no translations"));
    }
    if sign.translations.iter().any(|t| t.trim().is_empty()) {
        return Err(invalid("empty translation string"));
    }
    Ok(())
}

/// Mapping counts per gold type; `untyped` holds mappings whose lemma has
/// no gold word type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TypeCounts {
    pub type1: usize,
    pub type2: usize,
    pub type3: usize,
    pub no_match: usize,
    pub untyped: usize,
}

impl TypeCounts {
    fn add(&mut self, gold_type: Option<CorrespondenceType>) {
        match gold_type {
            Some(CorrespondenceType::Type1) => self.type1 += 1,
            Some(CorrespondenceType::Type2) => self.type2 += 1,
            Some(CorrespondenceType::Type3) => self.type3 += 1,
            Some(CorrespondenceType::NoMatch) => self.no_match += 1,
            None => self.untyped += 1,
        }
    }

    pub fn get(&self, gold_type: CorrespondenceType) -> usize {
        match gold_type {
            CorrespondenceType::Type1 => self.type1,
            CorrespondenceType::Type2 => self.type2,
            CorrespondenceType::Type3 => self.type3,
            CorrespondenceType::NoMatch => self.no_match,
        }
    }

    pub fn total(&self) -> usize {
        self.type1 + self.type2 + self.type3 + self.no_match + self.untyped
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitStats {
    pub mappings: TypeCounts,
    lemmas: BTreeMap<String, Option<CorrespondenceType>>,
}

impl SplitStats {
    /// Distinct words per gold type.
    pub fn words(&self) -> TypeCounts {
        let mut counts = TypeCounts::default();
        for gold_type in self.lemmas.values() {
            counts.add(*gold_type);
        }
        counts
    }

    pub fn merge(&self, other: &SplitStats) -> SplitStats {
        let mut merged = self.clone();
        merged.mappings.type1 += other.mappings.type1;
        merged.mappings.type2 += other.mappings.type2;
        merged.mappings.type3 += other.mappings.type3;
        merged.mappings.no_match += other.mappings.no_match;
        merged.mappings.untyped += other.mappings.untyped;
        merged
            .lemmas
            .extend(other.lemmas.iter().map(|(k, v)| (k.clone(), *v)));
        merged
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub per_split: BTreeMap<Split, SplitStats>,
}

impl CorpusStats {
    pub fn split(&self, split: Split) -> &SplitStats {
        &self.per_split[&split]
    }

    /// Combined statistics over several splits; words shared between the
    /// splits are counted once.
    pub fn family(&self, splits: &[Split]) -> SplitStats {
        splits
            .iter()
            .fold(SplitStats::default(), |acc, s| acc.merge(self.split(*s)))
    }

    pub fn total_mappings(&self) -> usize {
        self.per_split.values().map(|s| s.mappings.total()).sum()
    }
}

pub fn load_corpus(paths: &CorpusPaths) -> Result<Corpus, CorpusError> {
    let uses = load_word_uses(&paths.uses)?;
    let inventory = load_signs(&paths.signs)?;
    let gold = load_gold(&paths.gold)?;
    let types = match &paths.gold_types {
        Some(path) => load_gold_types(path)?,
        None => Vec::new(),
    };
    Corpus::new(uses, inventory, gold, types)
}

#[derive(Deserialize)]
struct UseRow {
    use_id: String,
    lemma: String,
    sentence: String,
    period: Option<String>,
    split: String,
}

#[derive(Deserialize)]
struct GoldRow {
    use_id: String,
    gold_sign_ids: Option<String>,
}

#[derive(Deserialize)]
struct TypeRow {
    lemma: String,
    gold_type: String,
}

pub fn load_word_uses(path: &Path) -> Result<Vec<WordUse>, CorpusError> {
    read_tsv(path, |row: UseRow, line| {
        let parse_err = |message: String| CorpusError::Parse {
            path: path.to_owned(),
            line,
            message,
        };
        let split = row
            .split
            .parse::<Split>()
            .map_err(|e| parse_err(e.to_string()))?;
        if row.use_id.is_empty() || row.lemma.is_empty() || row.sentence.is_empty() {
            return Err(parse_err(
                "use_id, lemma and sentence must be non-empty".to_owned(),
            ));
        }
        Ok(WordUse {
            use_id: row.use_id,
            lemma: row.lemma,
            sentence: row.sentence,
            period: row.period.filter(|p| !p.is_empty()),
            split,
        })
    })
}

pub fn load_gold(path: &Path) -> Result<Vec<GoldMapping>, CorpusError> {
    read_tsv(path, |row: GoldRow, _| {
        let gold_sign_ids = row
            .gold_sign_ids
            .unwrap_or_default()
            .split(',')
            .map(str::trim)
            .filter(|id| !id.is_empty())
            .map(str::to_owned)
            .collect();
        Ok(GoldMapping {
            use_id: row.use_id,
            gold_sign_ids,
        })
    })
}

pub fn load_gold_types(path: &Path) -> Result<Vec<GoldWordType>, CorpusError> {
    read_tsv(path, |row: TypeRow, line| {
        let gold_type = row
            .gold_type
            .parse()
            .map_err(|e: CorpusError| CorpusError::Parse {
                path: path.to_owned(),
                line,
                message: e.to_string(),
            })?;
        Ok(GoldWordType {
            lemma: row.lemma,
            gold_type,
        })
    })
}

pub fn load_signs(path: &Path) -> Result<Vec<SignEntry>, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut signs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_owned(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let sign: SignEntry = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            path: path.to_owned(),
            line: line_no,
            message: e.to_string(),
        })?;
        signs.push(sign);
    }
    Ok(signs)
}

pub(crate) fn tsv_reader(path: &Path) -> Result<csv::Reader<File>, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .has_headers(true)
        .from_reader(file))
}

pub(crate) fn tsv_writer(path: &Path) -> io::Result<csv::Writer<File>> {
    let file = File::create(path)?;
    Ok(tsv_writer_from(file))
}

pub(crate) fn tsv_writer_from<W: io::Write>(writer: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .delimiter(b'\t')
        .quote_style(csv::QuoteStyle::Never)
        .from_writer(writer)
}

/// Reads a headed TSV file row by row, reporting 1-based line numbers.
pub(crate) fn read_tsv<R, T, F>(path: &Path, mut convert: F) -> Result<Vec<T>, CorpusError>
where
    R: for<'de> Deserialize<'de>,
    F: FnMut(R, u64) -> Result<T, CorpusError>,
{
    let mut reader = tsv_reader(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, &e))?.clone();
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, &e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let row: R = record
            .deserialize(Some(&headers))
            .map_err(|e| CorpusError::Parse {
                path: path.to_owned(),
                line,
                message: e.to_string(),
            })?;
        out.push(convert(row, line)?);
    }
    Ok(out)
}

fn csv_error(path: &Path, err: &csv::Error) -> CorpusError {
    CorpusError::Parse {
        path: path.to_owned(),
        line: err.position().map_or(0, |p| p.line()),
        message: err.to_string(),
    }
}

//! File formats for run outputs: retrieval dumps, type-decision dumps and
//! the TSV report tables, plus atomic file writes.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corpus::{CorpusStats, CorrespondenceType, Split};
use crate::evaluation::{ErrorFlow, EvalReport, PosBreakdown, Rate, Stratified, TypeAgreement};
use crate::retrieval::{Candidate, Engine, InputMode, RetrievalResult, SourceField};
use crate::tuning::TuningResult;
use crate::typing::TypeDecision;

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

pub const DUMP_HEADER: &str = "use_id\tengine\trank\tsign_id\tscore\tsource_field";

/// Writes `contents` to a temporary file beside `path`, then renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Two decimals, halves rounded away from zero; `-` when undefined.
pub fn format_percent(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{:.2}", (v * 100.0).round() / 100.0),
        None => "-".to_owned(),
    }
}

fn format_gain(ss: Option<f64>, em: Option<f64>) -> String {
    format_percent(ss.zip(em).map(|(s, e)| s - e))
}

fn tsv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join("\t");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    out
}

/// One row per candidate; a use with no candidates gets a single row with
/// rank 0 and empty sign, score and field columns.
pub fn retrieval_dump(engine: Engine, results: &[RetrievalResult]) -> String {
    let mut out = String::from(DUMP_HEADER);
    out.push('\n');
    for result in results {
        if result.candidates.is_empty() {
            out.push_str(&format!("{}\t{engine}\t0\t\t\t\n", result.use_id));
        }
        for (rank, c) in result.candidates.iter().enumerate() {
            out.push_str(&format!(
                "{}\t{engine}\t{}\t{}\t{:.9}\t{}\n",
                result.use_id,
                rank + 1,
                c.sign_id,
                c.score,
                c.source_field
            ));
        }
    }
    out
}

pub fn read_retrieval_dump(path: &Path) -> Result<(Engine, Vec<RetrievalResult>), DumpError> {
    let text = std::fs::read_to_string(path).map_err(|source| DumpError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_retrieval_dump(&text).map_err(|(line, message)| DumpError::Parse {
        path: path.to_owned(),
        line,
        message,
    })
}

/// Parses a retrieval dump. Errors carry a 1-based line number.
pub fn parse_retrieval_dump(text: &str) -> Result<(Engine, Vec<RetrievalResult>), (usize, String)> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == DUMP_HEADER => {}
        _ => return Err((1, format!("expected header `{DUMP_HEADER}`"))),
    }
    let mut engine: Option<Engine> = None;
    let mut results: Vec<RetrievalResult> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [use_id, eng, rank, sign_id, score, field] = fields[..] else {
            return Err((
                line_no,
                format!("expected 6 columns, found {}", fields.len()),
            ));
        };
        let eng: Engine = eng.parse().map_err(|e| (line_no, e))?;
        if *engine.get_or_insert(eng) != eng {
            return Err((line_no, "dump mixes engines".to_owned()));
        }
        let rank: usize = rank
            .parse()
            .map_err(|_| (line_no, format!("invalid rank `{rank}`")))?;

        let starts_new = results.last().is_none_or(|r| r.use_id != use_id);
        if starts_new {
            if !seen.insert(use_id.to_owned()) {
                return Err((
                    line_no,
                    format!("rows for use `{use_id}` are not contiguous"),
                ));
            }
            results.push(RetrievalResult::empty(use_id));
        }
        let current = results.last_mut().expect("pushed above");
        if rank == 0 {
            if !starts_new || !sign_id.is_empty() {
                return Err((
                    line_no,
                    "rank 0 marks an empty result and must stand alone".to_owned(),
                ));
            }
            continue;
        }
        if rank != current.candidates.len() + 1 {
            return Err((line_no, format!("rank {rank} out of sequence")));
        }
        let score: f64 = score
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| (line_no, format!("invalid score `{score}`")))?;
        let source_field: SourceField = field.parse().map_err(|e| (line_no, e))?;
        current.candidates.push(Candidate {
            sign_id: sign_id.to_owned(),
            score,
            source_field,
            engine: eng,
        });
    }
    let engine = engine.ok_or((1, "dump has no rows".to_owned()))?;
    Ok((engine, results))
}

pub fn type_decisions_tsv(decisions: &[TypeDecision]) -> String {
    tsv(
        &["lemma", "predicted_type", "V_w", "sim_stat", "tau"],
        decisions.iter().map(|d| {
            let signs: Vec<&str> = d
                .evidence
                .predicted_sign_ids
                .iter()
                .map(String::as_str)
                .collect();
            vec![
                d.lemma.clone(),
                d.predicted_type.label().to_owned(),
                signs.join(","),
                d.evidence
                    .sim_stat
                    .map_or(String::new(), |s| format!("{s:.9}")),
                d.tau.to_string(),
            ]
        }),
    )
}

fn pct(rate: &Rate) -> String {
    format_percent(rate.percent())
}

/// EM/SS/improvement columns for whichever engines were evaluated.
fn engine_columns<'a>(
    em: Option<&'a EvalReport>,
    ss: Option<&'a EvalReport>,
    value: impl Fn(&EvalReport) -> Option<f64>,
) -> Vec<String> {
    let em_v = em.and_then(&value);
    let ss_v = ss.and_then(&value);
    let mut cols = Vec::new();
    if em.is_some() {
        cols.push(format_percent(em_v));
    }
    if ss.is_some() {
        cols.push(format_percent(ss_v));
    }
    if em.is_some() && ss.is_some() {
        cols.push(format_gain(ss_v, em_v));
    }
    cols
}

fn engine_header<'a>(first: &[&'a str], em: bool, ss: bool) -> Vec<&'a str> {
    let mut header = first.to_vec();
    if em {
        header.push("EM");
    }
    if ss {
        header.push("SS");
    }
    if em && ss {
        header.push("Imp");
    }
    header
}

/// Model-level accuracy row.
pub fn model_table(model: &str, em: Option<&EvalReport>, ss: Option<&EvalReport>) -> String {
    let mut row = vec![model.to_owned()];
    row.extend(engine_columns(em, ss, |r| r.accuracy.overall.percent()));
    tsv(
        &engine_header(&["Model"], em.is_some(), ss.is_some()),
        [row],
    )
}

type StratumRate = fn(&Stratified) -> Rate;

const STRATA: [(&str, StratumRate); 3] = [
    ("Overall", |s| s.overall),
    ("Match", |s| s.matched),
    ("No Match", |s| s.no_match),
];

/// Overall / match / no-match accuracy.
pub fn overall_table(em: Option<&EvalReport>, ss: Option<&EvalReport>) -> String {
    let n_from = em.or(ss);
    let rows = STRATA.iter().map(|(name, get)| {
        let n = n_from.map_or(0, |r| get(&r.accuracy).total);
        let mut row = vec![name.to_string(), n.to_string()];
        row.extend(engine_columns(em, ss, |r| get(&r.accuracy).percent()));
        row
    });
    tsv(
        &engine_header(&["Category", "n"], em.is_some(), ss.is_some()),
        rows,
    )
}

/// Accuracy per gold correspondence type.
pub fn per_type_table(em: Option<&EvalReport>, ss: Option<&EvalReport>) -> String {
    let n_from = em.or(ss);
    let rows = CorrespondenceType::ALL.iter().map(|&t| {
        let rate_of = |r: &EvalReport| {
            r.per_type_accuracy
                .as_ref()
                .and_then(|m| m.get(&t).copied())
        };
        let n = n_from.and_then(rate_of).map_or(0, |rate| rate.total);
        let mut row = vec![t.display_name().to_owned(), n.to_string()];
        row.extend(engine_columns(em, ss, |r| {
            rate_of(r).and_then(|rate| rate.percent())
        }));
        row
    });
    tsv(
        &engine_header(&["Type", "n"], em.is_some(), ss.is_some()),
        rows,
    )
}

pub fn precision_table(reports: &[&EvalReport]) -> String {
    let ks: Vec<usize> = reports
        .first()
        .map(|r| r.precision_at_k.keys().copied().collect())
        .unwrap_or_default();
    let mut header = vec!["Method".to_owned(), "Category".to_owned(), "n".to_owned()];
    header.extend(ks.iter().map(|k| format!("P@{k}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut rows = Vec::new();
    for report in reports {
        for (name, get) in STRATA {
            let mut row = vec![
                report.engine.label().to_uppercase(),
                name.to_owned(),
                get(&report.accuracy).total.to_string(),
            ];
            row.extend(ks.iter().map(|k| pct(&get(&report.precision_at_k[k]))));
            rows.push(row);
        }
    }
    tsv(&header, rows)
}

pub fn error_flow_table(flow: &ErrorFlow) -> String {
    let n = flow.total();
    let share = |count: usize| format_percent((n > 0).then(|| 100.0 * count as f64 / n as f64));
    let rows = [
        ("Both Succeed", flow.both_succeed),
        ("SS Success, EM Fail", flow.ss_only),
        ("EM Success, SS Fail", flow.em_only),
        ("Both Fail", flow.both_fail),
    ]
    .into_iter()
    .map(|(name, count)| vec![name.to_owned(), count.to_string(), share(count)]);
    let mut out = tsv(&["Pattern", "Count", "%"], rows);
    out.push_str(&format!(
        "Net gain (pp)\t\t{}\n",
        format_percent(flow.net_gain_pp())
    ));
    out
}

pub fn agreement_table(agreement: &TypeAgreement) -> String {
    let order = [
        CorrespondenceType::NoMatch,
        CorrespondenceType::Type1,
        CorrespondenceType::Type2,
        CorrespondenceType::Type3,
    ];
    let mut rows: Vec<Vec<String>> = order
        .iter()
        .filter_map(|t| agreement.per_type.get(t).map(|rate| (t, rate)))
        .map(|(t, rate)| {
            vec![
                t.display_name().to_owned(),
                rate.total.to_string(),
                rate.correct.to_string(),
                pct(rate),
            ]
        })
        .collect();
    rows.push(vec![
        "Overall".to_owned(),
        agreement.overall.total.to_string(),
        agreement.overall.correct.to_string(),
        pct(&agreement.overall),
    ]);
    tsv(&["Type", "Total", "Correct", "Agr. (%)"], rows)
}

pub fn confusion_table(agreement: &TypeAgreement) -> String {
    let order = [
        CorrespondenceType::NoMatch,
        CorrespondenceType::Type1,
        CorrespondenceType::Type2,
        CorrespondenceType::Type3,
    ];
    let m = &agreement.confusion;
    let short = |t: CorrespondenceType| match t {
        CorrespondenceType::NoMatch => "NM",
        CorrespondenceType::Type1 => "T1",
        CorrespondenceType::Type2 => "T2",
        CorrespondenceType::Type3 => "T3",
    };
    let mut header = vec!["GT / Pred"];
    header.extend(order.iter().map(|t| short(*t)));
    header.push("Total");
    let mut rows: Vec<Vec<String>> = order
        .iter()
        .map(|&gold| {
            let mut row = vec![gold.display_name().to_owned()];
            row.extend(order.iter().map(|&p| m.get(gold, p).to_string()));
            row.push(m.row_total(gold).to_string());
            row
        })
        .collect();
    let mut totals = vec!["Total".to_owned()];
    totals.extend(order.iter().map(|&p| m.column_total(p).to_string()));
    totals.push(m.total().to_string());
    rows.push(totals);
    tsv(&header, rows)
}

pub fn pos_table(breakdown: &PosBreakdown) -> String {
    tsv(
        &["POS", "Word", "GT Type", "Model Type"],
        breakdown.words.iter().map(|w| {
            vec![
                w.pos.label().to_owned(),
                w.lemma.clone(),
                w.gold_type.map_or("-", |t| t.display_name()).to_owned(),
                w.predicted_type.display_name().to_owned(),
            ]
        }),
    )
}

pub fn tuning_table(result: &TuningResult) -> String {
    tsv(
        &["tau", "k", "accuracy", "is_best"],
        result.per_config.iter().map(|c| {
            let is_best = c.tau == result.best.tau && c.k == result.best.k;
            vec![
                format!("{:.2}", c.tau),
                c.k.to_string(),
                pct(&c.accuracy),
                is_best.to_string(),
            ]
        }),
    )
}

/// Ablation grid: one row per input mode.
pub fn ablation_table(rows: &[(InputMode, Option<EvalReport>, Option<EvalReport>)]) -> String {
    let em = rows.iter().any(|r| r.1.is_some());
    let ss = rows.iter().any(|r| r.2.is_some());
    let mut header = engine_header(&["wug_mode", "dgs_mode"], em, ss);
    if ss {
        header.push("SS mean top score");
    }
    tsv(
        &header,
        rows.iter().map(|(mode, em_r, ss_r)| {
            let mut row = vec![mode.wug.label().to_owned(), mode.dgs.label().to_owned()];
            row.extend(engine_columns(em_r.as_ref(), ss_r.as_ref(), |r| {
                r.accuracy.overall.percent()
            }));
            if ss {
                row.push(
                    ss_r.as_ref()
                        .and_then(|r| r.mean_top_score)
                        .map_or("-".to_owned(), |s| format!("{s:.3}")),
                );
            }
            row
        }),
    )
}

/// Side-by-side comparison of one engine on two splits.
pub fn generalization_table(first: (Split, &EvalReport), second: (Split, &EvalReport)) -> String {
    let (a_split, a) = first;
    let (b_split, b) = second;
    let gap = |x: Option<f64>, y: Option<f64>| format_gain(y, x);
    let mut rows = Vec::new();
    let mut push_rate = |name: &str, ra: Rate, rb: Rate| {
        rows.push(vec![
            name.to_owned(),
            pct(&ra),
            pct(&rb),
            gap(ra.percent(), rb.percent()),
        ]);
    };
    push_rate("Overall Acc. (%)", a.accuracy.overall, b.accuracy.overall);
    push_rate("Match Acc. (%)", a.accuracy.matched, b.accuracy.matched);
    push_rate(
        "No Match Acc. (%)",
        a.accuracy.no_match,
        b.accuracy.no_match,
    );
    let agreement = |r: &EvalReport, t: Option<CorrespondenceType>| {
        r.type_agreement.as_ref().map(|ag| match t {
            Some(t) => ag.per_type.get(&t).copied().unwrap_or_default(),
            None => ag.overall,
        })
    };
    for (name, t) in [
        ("Type 1 Agr. (%)", Some(CorrespondenceType::Type1)),
        ("Type 2 Agr. (%)", Some(CorrespondenceType::Type2)),
        ("Type 3 Agr. (%)", Some(CorrespondenceType::Type3)),
        ("No Match Agr. (%)", Some(CorrespondenceType::NoMatch)),
        ("Overall Agr. (%)", None),
    ] {
        if let (Some(ra), Some(rb)) = (agreement(a, t), agreement(b, t)) {
            push_rate(name, ra, rb);
        }
    }
    let mut out = tsv(&["Metric", a_split.as_str(), b_split.as_str(), "Gap"], rows);
    out.push_str(&format!(
        "Match (n)\t{}\t{}\t-\nNo Match (n)\t{}\t{}\t-\n",
        a.accuracy.matched.total,
        b.accuracy.matched.total,
        a.accuracy.no_match.total,
        b.accuracy.no_match.total
    ));
    out
}

/// Mapping- and word-level counts per split, plus the development family.
pub fn stats_table(stats: &CorpusStats) -> String {
    let mut rows = Vec::new();
    let mut push = |name: String, level: &str, c: crate::corpus::TypeCounts| {
        rows.push(vec![
            name,
            level.to_owned(),
            c.type1.to_string(),
            c.type2.to_string(),
            c.type3.to_string(),
            c.no_match.to_string(),
            c.untyped.to_string(),
            c.total().to_string(),
        ]);
    };
    let dev = stats.family(&Split::DEVELOPMENT);
    for split in Split::ALL {
        push(split.to_string(), "mapping", stats.split(split).mappings);
    }
    push("train+val+test_overlap".to_owned(), "mapping", dev.mappings);
    for split in Split::ALL {
        push(split.to_string(), "word", stats.split(split).words());
    }
    push("train+val+test_overlap".to_owned(), "word", dev.words());
    tsv(
        &["Split", "Level", "T1", "T2", "T3", "NM", "Untyped", "Total"],
        rows,
    )
}

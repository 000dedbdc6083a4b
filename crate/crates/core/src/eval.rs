//! Retrieval and answer metrics.
//!
//! Per-query metrics are averaged with uniform weights (macro average).
//! `Avg@1–10` is the mean over cut-offs `K = 1..=10` of the per-K means.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::packing::EvidenceSubgraph;
use crate::retrieval::RankedList;

pub const ANLS_THRESHOLD: f64 = 0.5;
pub const AVG_CUTOFFS: std::ops::RangeInclusive<usize> = 1..=10;

/// One line of a queries file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRecord {
    pub query_id: String,
    pub query: String,
    pub gold_docs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answers: Option<Vec<String>>,
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prediction {
    pub query_id: String,
    pub prediction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub query_id: String,
    pub query: String,
    pub gold_docs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answers: Option<Vec<String>>,
    #[serde(default)]
    pub retrieved: RankedList,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<String>,
}

impl EvalRecord {
    pub fn new(
        query_id: impl Into<String>,
        query: impl Into<String>,
        gold_docs: Vec<String>,
        retrieved: RankedList,
    ) -> Result<Self> {
        let record = EvalRecord {
            query_id: query_id.into(),
            query: query.into(),
            gold_docs,
            gold_answers: None,
            retrieved,
            prediction: None,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<()> {
        if self.gold_docs.is_empty() {
            return Err(Error::Config(format!(
                "query `{}` has no gold documents",
                self.query_id
            )));
        }
        Ok(())
    }

    fn gold(&self) -> BTreeSet<&str> {
        self.gold_docs.iter().map(String::as_str).collect()
    }

    fn top_k(&self, k: usize) -> impl Iterator<Item = &str> {
        self.retrieved.ids().take(k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Recall,
    Mrr,
    Hit,
    All,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Recall, Metric::Mrr, Metric::Hit, Metric::All];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Recall => "Recall",
            Metric::Mrr => "MRR",
            Metric::Hit => "Hit",
            Metric::All => "All",
        }
    }
}

pub fn recall_at_k(record: &EvalRecord, k: usize) -> f64 {
    let gold = record.gold();
    let found = record.top_k(k).filter(|d| gold.contains(d)).count();
    found as f64 / gold.len() as f64
}

pub fn mrr_at_k(record: &EvalRecord, k: usize) -> f64 {
    let gold = record.gold();
    record
        .top_k(k)
        .position(|d| gold.contains(d))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

pub fn hit_at_k(record: &EvalRecord, k: usize) -> f64 {
    let gold = record.gold();
    if record.top_k(k).any(|d| gold.contains(d)) {
        1.0
    } else {
        0.0
    }
}

pub fn all_at_k(record: &EvalRecord, k: usize) -> f64 {
    let top: BTreeSet<&str> = record.top_k(k).collect();
    if record.gold().is_subset(&top) {
        1.0
    } else {
        0.0
    }
}

pub fn metric_at_k(metric: Metric, record: &EvalRecord, k: usize) -> f64 {
    match metric {
        Metric::Recall => recall_at_k(record, k),
        Metric::Mrr => mrr_at_k(record, k),
        Metric::Hit => hit_at_k(record, k),
        Metric::All => all_at_k(record, k),
    }
}

/// Mean over queries of `metric@k`; 0 for an empty record set.
pub fn mean_at_k(records: &[EvalRecord], metric: Metric, k: usize) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().map(|r| metric_at_k(metric, r, k)).sum::<f64>() / records.len() as f64
}

pub fn avg_1_10(records: &[EvalRecord], metric: Metric) -> f64 {
    let n = AVG_CUTOFFS.count() as f64;
    AVG_CUTOFFS.map(|k| mean_at_k(records, metric, k)).sum::<f64>() / n
}

/// Recall@K where each query's ranking is the documents present in its
/// packed subgraph, in order of first appearance.
pub fn budgeted_recall<F>(records: &[EvalRecord], k: usize, budget: i64, mut pack_fn: F) -> Result<f64>
where
    F: FnMut(&EvalRecord, i64) -> Result<EvidenceSubgraph>,
{
    if records.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for record in records {
        let subgraph = pack_fn(record, budget)?;
        let packed = EvalRecord {
            retrieved: RankedList::from_ids(subgraph.doc_ids()),
            ..record.clone()
        };
        total += recall_at_k(&packed, k);
    }
    Ok(total / records.len() as f64)
}

/// NFC, lowercase, ASCII punctuation removed, whitespace collapsed.
pub fn normalize_answer(s: &str) -> String {
    let cleaned: String = s
        .nfc()
        .flat_map(char::to_lowercase)
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn exact_match(prediction: &str, gold_answers: &[String]) -> f64 {
    let p = normalize_answer(prediction);
    if gold_answers.iter().any(|g| normalize_answer(g) == p) {
        1.0
    } else {
        0.0
    }
}

/// Edit distance over chars.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Similarity `1 - lev / max_len` of normalized strings, zeroed below `threshold`.
pub fn anls_single(prediction: &str, gold: &str, threshold: f64) -> f64 {
    let p = normalize_answer(prediction);
    let g = normalize_answer(gold);
    let max_len = p.chars().count().max(g.chars().count());
    let s = if max_len == 0 {
        1.0
    } else {
        1.0 - levenshtein(&p, &g) as f64 / max_len as f64
    };
    if s < threshold {
        0.0
    } else {
        s
    }
}

pub fn anls(prediction: &str, gold_answers: &[String], threshold: f64) -> f64 {
    gold_answers
        .iter()
        .map(|g| anls_single(prediction, g, threshold))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutoffRow {
    pub k: usize,
    pub recall: f64,
    pub mrr: f64,
    pub hit: f64,
    pub all: f64,
}

impl CutoffRow {
    fn at(records: &[EvalRecord], k: usize) -> Self {
        CutoffRow {
            k,
            recall: mean_at_k(records, Metric::Recall, k),
            mrr: mean_at_k(records, Metric::Mrr, k),
            hit: mean_at_k(records, Metric::Hit, k),
            all: mean_at_k(records, Metric::All, k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummary {
    pub recall: f64,
    pub mrr: f64,
    pub hit: f64,
    pub all: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnswerSummary {
    pub answered: usize,
    pub em: f64,
    pub anls: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetedRecall {
    pub k: usize,
    pub budget: i64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub queries: usize,
    pub cutoffs: Vec<CutoffRow>,
    pub avg_1_10: MetricSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answers: Option<AnswerSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budgeted_recall: Option<BudgetedRecall>,
}

impl EvalReport {
    pub fn from_records(records: &[EvalRecord]) -> Self {
        let answered: Vec<(&str, &[String])> = records
            .iter()
            .filter_map(|r| Some((r.prediction.as_deref()?, r.gold_answers.as_deref()?)))
            .collect();
        let answers = (!answered.is_empty()).then(|| {
            let n = answered.len() as f64;
            AnswerSummary {
                answered: answered.len(),
                em: answered.iter().map(|(p, g)| exact_match(p, g)).sum::<f64>() / n,
                anls: answered
                    .iter()
                    .map(|(p, g)| anls(p, g, ANLS_THRESHOLD))
                    .sum::<f64>()
                    / n,
            }
        });
        EvalReport {
            queries: records.len(),
            cutoffs: AVG_CUTOFFS.map(|k| CutoffRow::at(records, k)).collect(),
            avg_1_10: MetricSummary {
                recall: avg_1_10(records, Metric::Recall),
                mrr: avg_1_10(records, Metric::Mrr),
                hit: avg_1_10(records, Metric::Hit),
                all: avg_1_10(records, Metric::All),
            },
            answers,
            budgeted_recall: None,
        }
    }

    /// Aligned text table: one row per cut-off plus the Avg@1-10 row.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "queries: {}", self.queries);
        let _ = writeln!(out, "{:<8}{:>8}{:>8}{:>8}{:>8}", "K", "Recall", "MRR", "Hit", "All");
        for row in &self.cutoffs {
            let _ = writeln!(
                out,
                "{:<8}{:>8.4}{:>8.4}{:>8.4}{:>8.4}",
                row.k, row.recall, row.mrr, row.hit, row.all
            );
        }
        let a = &self.avg_1_10;
        let _ = writeln!(
            out,
            "{:<8}{:>8.4}{:>8.4}{:>8.4}{:>8.4}",
            "Avg1-10", a.recall, a.mrr, a.hit, a.all
        );
        if let Some(ans) = &self.answers {
            let _ = writeln!(out, "EM {:.4}  ANLS {:.4}  (answered {})", ans.em, ans.anls, ans.answered);
        }
        if let Some(b) = &self.budgeted_recall {
            let _ = writeln!(out, "Budgeted Recall@{} (B={}): {:.4}", b.k, b.budget, b.recall);
        }
        out
    }
}

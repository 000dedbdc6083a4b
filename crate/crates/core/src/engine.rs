//! Query, pack and evaluate against a built index with one effective config.

use std::collections::BTreeMap;

use crate::config::EngineConfig;
use crate::corpus::CorpusIndex;
use crate::error::{Error, Result};
use crate::eval::{budgeted_recall, BudgetedRecall, EvalRecord, EvalReport, Prediction, QueryRecord};
use crate::hierarchy::EvidenceUnit;
use crate::packing::{pack, EvidenceSubgraph, PackingConfig, TokenCounter, WhitespaceCounter};
use crate::retrieval::{retrieve, RetrievalResult};

pub const BUDGETED_RECALL_K: usize = 10;

pub struct Engine {
    index: CorpusIndex,
    config: EngineConfig,
    counter: Box<dyn TokenCounter + Send + Sync>,
}

impl Engine {
    /// Index-side settings in `config` are replaced by the index's own.
    pub fn new(index: CorpusIndex, config: EngineConfig) -> Result<Self> {
        let config = EngineConfig::from_parts(index.config(), &config.retrieval(), &config.packing());
        config.validate()?;
        Ok(Engine {
            index,
            config,
            counter: Box::new(WhitespaceCounter),
        })
    }

    pub fn with_counter(mut self, counter: Box<dyn TokenCounter + Send + Sync>) -> Self {
        self.counter = counter;
        self
    }

    pub fn index(&self) -> &CorpusIndex {
        &self.index
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn query(&self, query: &str) -> Result<RetrievalResult> {
        retrieve(&self.index, query, &self.config.retrieval())
    }

    /// Anchors of the ranked sections, in rank order.
    pub fn anchors<'a>(&'a self, result: &RetrievalResult) -> Vec<(&'a EvidenceUnit, f64)> {
        result
            .sections
            .iter()
            .filter_map(|hit| {
                let u = self.index.unit_ordinal(&hit.anchor.unit_id)?;
                Some((self.index.unit(u), hit.final_score))
            })
            .collect()
    }

    pub fn pack(&self, result: &RetrievalResult) -> Result<EvidenceSubgraph> {
        self.pack_with(result, self.config.packing())
    }

    pub fn pack_with(&self, result: &RetrievalResult, config: PackingConfig) -> Result<EvidenceSubgraph> {
        let anchors = self.anchors(result);
        pack(&anchors, &self.index, &self.index, config, self.counter.as_ref())
    }

    /// Retrieval metrics for every query, answer metrics for queries with a
    /// prediction and gold answers, and budgeted recall when `budget` is set.
    pub fn evaluate(
        &self,
        queries: &[QueryRecord],
        predictions: &[Prediction],
        budget: Option<i64>,
    ) -> Result<EvalReport> {
        let mut by_id: BTreeMap<&str, &str> = BTreeMap::new();
        for p in predictions {
            if by_id.insert(&p.query_id, &p.prediction).is_some() {
                return Err(Error::Config(format!("duplicate prediction for `{}`", p.query_id)));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        let mut records = Vec::with_capacity(queries.len());
        let mut results = Vec::with_capacity(queries.len());
        for q in queries {
            if !seen.insert(q.query_id.as_str()) {
                return Err(Error::Config(format!("duplicate query id `{}`", q.query_id)));
            }
            let result = self.query(&q.query)?;
            let mut record = EvalRecord::new(
                q.query_id.clone(),
                q.query.clone(),
                q.gold_docs.clone(),
                result.ranked_documents(),
            )?;
            record.gold_answers = q.gold_answers.clone();
            record.prediction = by_id.get(q.query_id.as_str()).map(|s| s.to_string());
            records.push(record);
            results.push(result);
        }
        let mut report = EvalReport::from_records(&records);
        if let Some(budget) = budget {
            let packing = PackingConfig {
                budget,
                ..self.config.packing()
            };
            packing.validate()?;
            let mut i = 0;
            let recall = budgeted_recall(&records, BUDGETED_RECALL_K, budget, |_, _| {
                let sub = self.pack_with(&results[i], packing);
                i += 1;
                sub
            })?;
            report.budgeted_recall = Some(BudgetedRecall {
                k: BUDGETED_RECALL_K,
                budget,
                recall,
            });
        }
        Ok(report)
    }
}

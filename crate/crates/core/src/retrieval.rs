//! Two-stage retrieval.
//!
//! Stage 1 ranks doc cards by `α·mm(bm25) + (1-α)·mm(cosine)`. Stage 2 scores
//! every unit of the candidate documents with a type-specific score, takes
//! the max over each section's units (the maximizing unit is the section's
//! anchor) and fuses it with the document score:
//! `S_final = λ·S_doc + (1-λ)·S_sec`.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusIndex;
use crate::embed::cosine;
use crate::error::{Error, Result};
use crate::hierarchy::UnitType;
use crate::index::{minmax, tokenize, SparseField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingMode {
    DocOnly,
    SecOnly,
    DocThenSec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Lexical signal only: β forced to 1, visual term off.
    Bm25Only,
    /// Lexical + text dense; visual term off.
    PlusTextDense,
    FullFusion,
}

/// Which doc-card fields feed the Stage-1 lexical signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocFieldMode {
    Hierarchy,
    Body,
    /// BM25 of both fields, summed.
    HierarchyAndBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub k_doc: usize,
    pub k_sec: usize,
    pub routing_mode: RoutingMode,
    pub fusion_mode: FusionMode,
    pub doc_fields: DocFieldMode,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            alpha: 0.5,
            beta: 0.5,
            gamma: 0.5,
            lambda: 0.5,
            k_doc: 10,
            k_sec: 20,
            routing_mode: RoutingMode::DocThenSec,
            fusion_mode: FusionMode::FullFusion,
            doc_fields: DocFieldMode::Hierarchy,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("lambda", self.lambda),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if self.k_doc == 0 || self.k_sec == 0 {
            return Err(Error::Config("k_doc and k_sec must be >= 1".into()));
        }
        Ok(())
    }

    /// β after the fusion mode is applied.
    pub fn effective_beta(&self) -> f64 {
        match self.fusion_mode {
            FusionMode::Bm25Only => 1.0,
            _ => self.beta,
        }
    }

    pub fn visual_enabled(&self) -> bool {
        self.fusion_mode == FusionMode::FullFusion
    }
}

/// `w·a + (1-w)·b`. Exact at the endpoints: `w = 1` gives `a`, `w = 0` gives `b`.
pub fn mix(w: f64, a: f64, b: f64) -> f64 {
    w * a + (1.0 - w) * b
}

/// Total order used by every ranked output: descending score, then ascending id.
pub fn rank_order(a: (&str, f64), b: (&str, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RankedList {
    entries: Vec<RankedEntry>,
}

impl RankedList {
    /// Sorts by (−score, id). Later duplicates of an id are dropped.
    pub fn from_scores<I, S>(scores: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut seen = HashSet::new();
        let mut entries: Vec<RankedEntry> = scores
            .into_iter()
            .map(|(id, score)| RankedEntry {
                id: id.into(),
                score,
            })
            .filter(|e| seen.insert(e.id.clone()))
            .collect();
        entries.sort_by(|a, b| rank_order((&a.id, a.score), (&b.id, b.score)));
        RankedList { entries }
    }

    /// Wraps ids already in rank order; scores are reciprocal ranks.
    pub fn from_ids<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut seen = HashSet::new();
        let entries = ids
            .into_iter()
            .map(Into::into)
            .filter(|id: &String| seen.insert(id.clone()))
            .enumerate()
            .map(|(i, id)| RankedEntry {
                id,
                score: 1.0 / (i + 1) as f64,
            })
            .collect();
        RankedList { entries }
    }

    pub fn entries(&self) -> &[RankedEntry] {
        &self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn truncate(&mut self, k: usize) {
        self.entries.truncate(k);
    }

    pub fn top(&self, k: usize) -> &[RankedEntry] {
        &self.entries[..k.min(self.entries.len())]
    }
}

/// Type-specific unit score. Text units take their hybrid score; Table/Image
/// units mix the visual score with the hybrid score of their upper context,
/// falling back to whichever side exists.
pub fn type_specific_score(
    unit_type: UnitType,
    hybrid: Option<f64>,
    visual: Option<f64>,
    gamma: f64,
) -> Option<f64> {
    match unit_type {
        UnitType::Text => hybrid,
        UnitType::Table | UnitType::Image => match (visual, hybrid) {
            (Some(v), Some(h)) => Some(mix(gamma, v, h)),
            (None, Some(h)) => Some(h),
            (Some(v), None) => Some(v),
            (None, None) => None,
        },
    }
}

/// MaxSim: the largest score and its id, ties going to the smaller id.
pub fn max_sim<'a, I>(scores: I) -> Option<(&'a str, f64)>
where
    I: IntoIterator<Item = (&'a str, f64)>,
{
    scores
        .into_iter()
        .min_by(|&a, &b| rank_order(a, b))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocScore {
    pub doc_id: String,
    pub score: f64,
    pub lex_raw: f64,
    pub lex_norm: f64,
    pub dense_raw: f64,
    pub dense_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Routing {
    /// Indexed by doc ordinal.
    pub scores: Vec<DocScore>,
    /// Every document in rank order.
    pub ranked: RankedList,
    /// Ordinals of the top `k_doc` documents, best first.
    pub candidates: Vec<usize>,
}

/// Stage 1 over all doc cards.
pub fn route_documents(index: &CorpusIndex, query: &str, config: &RetrievalConfig) -> Result<Routing> {
    config.validate()?;
    let n = index.num_docs();
    if n == 0 {
        return Err(Error::EmptyCorpus);
    }
    let terms = tokenize(query);
    let lex_raw = match config.doc_fields {
        DocFieldMode::Hierarchy => index.sparse(SparseField::DocHierarchy).score_all(&terms),
        DocFieldMode::Body => index.sparse(SparseField::DocBody).score_all(&terms),
        DocFieldMode::HierarchyAndBody => {
            let h = index.sparse(SparseField::DocHierarchy).score_all(&terms);
            let b = index.sparse(SparseField::DocBody).score_all(&terms);
            h.iter().zip(&b).map(|(x, y)| x + y).collect()
        }
    };
    let qvec = index.text_provider().embed_text(query)?;
    let dense_raw = (0..n)
        .map(|d| cosine(&qvec, index.doc_vector(d)))
        .collect::<Result<Vec<_>>>()?;
    let lex_norm = minmax(&lex_raw);
    let dense_norm = minmax(&dense_raw);

    let scores: Vec<DocScore> = (0..n)
        .map(|d| DocScore {
            doc_id: index.doc_cards()[d].doc_id.clone(),
            score: mix(config.alpha, lex_norm[d], dense_norm[d]),
            lex_raw: lex_raw[d],
            lex_norm: lex_norm[d],
            dense_raw: dense_raw[d],
            dense_norm: dense_norm[d],
        })
        .collect();
    let ranked = RankedList::from_scores(scores.iter().map(|s| (s.doc_id.clone(), s.score)));
    let candidates = ranked
        .top(config.k_doc)
        .iter()
        .map(|e| index.doc_ordinal(&e.id).expect("ranked ids come from the index"))
        .collect();
    Ok(Routing {
        scores,
        ranked,
        candidates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitScore {
    pub unit_id: String,
    pub unit_type: UnitType,
    pub lex_raw: Option<f64>,
    pub lex_norm: Option<f64>,
    pub text_raw: Option<f64>,
    pub text_norm: Option<f64>,
    pub hybrid: Option<f64>,
    pub visual_raw: Option<f64>,
    pub visual_norm: Option<f64>,
    pub score: f64,
}

/// Unit scores for one query over a fixed scope of units. Min–max
/// normalization runs over the scope: lexical and text-dense over units with
/// scoring text, visual over units with a crop.
#[derive(Debug, Clone)]
pub struct UnitScorer {
    scope: Vec<usize>,
    scores: Vec<UnitScore>,
}

impl UnitScorer {
    pub fn new(
        index: &CorpusIndex,
        query: &str,
        config: &RetrievalConfig,
        mut scope: Vec<usize>,
    ) -> Result<Self> {
        scope.sort_unstable();
        scope.dedup();
        let terms = tokenize(query);
        let sparse = index.sparse(SparseField::UnitText);
        let qtext = index.text_provider().embed_text(query)?;
        let qvis = if config.visual_enabled() {
            Some(index.visual_provider().embed_text(query)?)
        } else {
            None
        };

        let mut hybrid_pool = Vec::new();
        let mut lex = Vec::new();
        let mut dense = Vec::new();
        let mut vis_pool = Vec::new();
        let mut vis = Vec::new();
        for (i, &u) in scope.iter().enumerate() {
            if let Some(tv) = index.unit_text_vector(u) {
                hybrid_pool.push(i);
                lex.push(sparse.score_ordinal(&terms, u));
                dense.push(cosine(&qtext, tv)?);
            }
            if let (Some(q), Some(cv)) = (&qvis, index.unit_visual_vector(u)) {
                vis_pool.push(i);
                vis.push(cosine(q, cv)?);
            }
        }
        let lex_n = minmax(&lex);
        let dense_n = minmax(&dense);
        let vis_n = minmax(&vis);

        let mut partial: Vec<UnitScore> = scope
            .iter()
            .map(|&u| {
                let unit = index.unit(u);
                UnitScore {
                    unit_id: unit.unit_id.clone(),
                    unit_type: unit.unit_type,
                    lex_raw: None,
                    lex_norm: None,
                    text_raw: None,
                    text_norm: None,
                    hybrid: None,
                    visual_raw: None,
                    visual_norm: None,
                    score: 0.0,
                }
            })
            .collect();
        let beta = config.effective_beta();
        for (k, &i) in hybrid_pool.iter().enumerate() {
            let s = &mut partial[i];
            s.lex_raw = Some(lex[k]);
            s.lex_norm = Some(lex_n[k]);
            s.text_raw = Some(dense[k]);
            s.text_norm = Some(dense_n[k]);
            s.hybrid = Some(mix(beta, lex_n[k], dense_n[k]));
        }
        for (k, &i) in vis_pool.iter().enumerate() {
            partial[i].visual_raw = Some(vis[k]);
            partial[i].visual_norm = Some(vis_n[k]);
        }
        for s in &mut partial {
            s.score = type_specific_score(s.unit_type, s.hybrid, s.visual_norm, config.gamma)
                .ok_or_else(|| Error::ScorelessUnit(s.unit_id.clone()))?;
        }
        Ok(UnitScorer {
            scope,
            scores: partial,
        })
    }

    pub fn scope(&self) -> &[usize] {
        &self.scope
    }

    pub fn get(&self, unit: usize) -> Option<&UnitScore> {
        self.scope
            .binary_search(&unit)
            .ok()
            .map(|i| &self.scores[i])
    }

    /// `s(c, q)` for a unit in scope.
    pub fn unit_score(&self, unit: usize) -> Option<f64> {
        self.get(unit).map(|s| s.score)
    }

    /// `s_hybrid` of the unit's scoring text, if it has one.
    pub fn hybrid_score(&self, unit: usize) -> Option<f64> {
        self.get(unit).and_then(|s| s.hybrid)
    }

    /// `S_sec` and the anchor unit ordinal for a section whose units are in scope.
    pub fn section_score(&self, index: &CorpusIndex, sec: usize) -> Option<(usize, f64)> {
        let units = index.section_units(sec);
        let scored: Vec<(&str, f64)> = units
            .clone()
            .filter_map(|u| self.get(u).map(|s| (s.unit_id.as_str(), s.score)))
            .collect();
        let (anchor_id, score) = max_sim(scored)?;
        let anchor = index
            .unit_ordinal(anchor_id)
            .expect("anchor ids come from the index");
        Some((anchor, score))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectionHit {
    pub sec_id: String,
    pub doc_id: String,
    pub final_score: f64,
    pub doc_score: f64,
    pub sec_score: f64,
    pub anchor: UnitScore,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalResult {
    pub query: String,
    pub routing_mode: RoutingMode,
    /// Top `k_doc` documents from Stage 1.
    pub documents: Vec<DocScore>,
    /// Top `k_sec` sections by `S_final`; empty in `DocOnly` mode.
    pub sections: Vec<SectionHit>,
}

impl RetrievalResult {
    /// Document ranking used for evaluation: Stage-1 order in `DocOnly`
    /// mode, otherwise documents in order of their first ranked section.
    pub fn ranked_documents(&self) -> RankedList {
        match self.routing_mode {
            RoutingMode::DocOnly => RankedList::from_ids(self.documents.iter().map(|d| d.doc_id.as_str())),
            _ => RankedList::from_ids(self.sections.iter().map(|s| s.doc_id.as_str())),
        }
    }

    pub fn section_ids(&self) -> Vec<&str> {
        self.sections.iter().map(|s| s.sec_id.as_str()).collect()
    }
}

/// Stage-2 section scores for every section of the documents in `scope_docs`.
pub fn score_sections(
    index: &CorpusIndex,
    query: &str,
    config: &RetrievalConfig,
    routing: &Routing,
    scope_docs: &[usize],
) -> Result<Vec<SectionHit>> {
    let scope_units: Vec<usize> = scope_docs
        .iter()
        .flat_map(|&d| index.doc_units(d))
        .collect();
    let scorer = UnitScorer::new(index, query, config, scope_units)?;
    let mut hits = Vec::new();
    for &d in scope_docs {
        let doc_score = routing.scores[d].score;
        for sec in index.doc_sections(d) {
            let Some((anchor, sec_score)) = scorer.section_score(index, sec) else {
                continue;
            };
            let card = &index.sec_cards()[sec];
            hits.push(SectionHit {
                sec_id: card.sec_id.clone(),
                doc_id: card.doc_id.clone(),
                final_score: mix(config.lambda, doc_score, sec_score),
                doc_score,
                sec_score,
                anchor: scorer.get(anchor).cloned().expect("anchor is in scope"),
            });
        }
    }
    hits.sort_by(|a, b| rank_order((&a.sec_id, a.final_score), (&b.sec_id, b.final_score)));
    Ok(hits)
}

/// Runs routing per `routing_mode` and returns the top sections with anchors.
pub fn retrieve(index: &CorpusIndex, query: &str, config: &RetrievalConfig) -> Result<RetrievalResult> {
    let routing = route_documents(index, query, config)?;
    let documents = routing
        .candidates
        .iter()
        .map(|&d| routing.scores[d].clone())
        .collect();
    let sections = match config.routing_mode {
        RoutingMode::DocOnly => Vec::new(),
        RoutingMode::DocThenSec => {
            let mut scope = routing.candidates.clone();
            scope.sort_unstable();
            let mut hits = score_sections(index, query, config, &routing, &scope)?;
            hits.truncate(config.k_sec);
            hits
        }
        RoutingMode::SecOnly => {
            let scope: Vec<usize> = (0..index.num_docs()).collect();
            let mut hits = score_sections(index, query, config, &routing, &scope)?;
            hits.truncate(config.k_sec);
            hits
        }
    };
    Ok(RetrievalResult {
        query: query.to_string(),
        routing_mode: config.routing_mode,
        documents,
        sections,
    })
}

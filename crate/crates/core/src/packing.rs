//! Ancestry-aware evidence packing under a token budget.
//!
//! Anchors are visited in retrieval order. Each anchor goes through three
//! budget-gated phases:
//!
//! 1. the anchor itself with its ancestry (skipped entirely when it does not fit),
//! 2. sibling units from the same section, inheriting the anchor's ancestry,
//! 3. the top-`M` most similar units of the same document, of which only
//!    Table/Image units are admitted, each carrying its own ancestry.
//!
//! A unit is never admitted twice. The subgraph only ever contains tree
//! nodes and their ancestry chains; no cross-unit links are constructed.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{DocCard, EvidenceUnit, SecCard, SectionPath};

pub const DEFAULT_M: usize = 5;
pub const DEFAULT_IMAGE_TOKEN_COST: usize = 256;
pub const DEFAULT_IMAGE_CAP: usize = 8;
pub const DEFAULT_BUDGET: i64 = 16_384;

/// Counts reader tokens in serialized text.
pub trait TokenCounter {
    fn count(&self, text: &str) -> usize;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceCounter;

impl TokenCounter for WhitespaceCounter {
    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

/// Structural lookups the packer needs from a corpus.
pub trait EvidenceSource {
    fn doc_title(&self, doc_id: &str) -> Option<&str>;
    /// All units of the section holding `unit_id`, in card order.
    fn section_of(&self, unit_id: &str) -> &[EvidenceUnit];
    fn document_units(&self, doc_id: &str) -> Vec<&EvidenceUnit>;
}

pub trait Similarity {
    fn similarity(&self, a: &EvidenceUnit, b: &EvidenceUnit) -> f64;
}

impl<F> Similarity for F
where
    F: Fn(&EvidenceUnit, &EvidenceUnit) -> f64,
{
    fn similarity(&self, a: &EvidenceUnit, b: &EvidenceUnit) -> f64 {
        self(a, b)
    }
}

/// An [`EvidenceSource`] over plain cards.
#[derive(Debug, Clone, Default)]
pub struct CardSet {
    docs: Vec<DocCard>,
    sections: Vec<SecCard>,
}

impl CardSet {
    pub fn new(docs: Vec<DocCard>, sections: Vec<SecCard>) -> Self {
        CardSet { docs, sections }
    }

    pub fn sections(&self) -> &[SecCard] {
        &self.sections
    }

    pub fn unit(&self, unit_id: &str) -> Option<&EvidenceUnit> {
        self.sections
            .iter()
            .flat_map(|s| &s.units)
            .find(|u| u.unit_id == unit_id)
    }
}

impl EvidenceSource for CardSet {
    fn doc_title(&self, doc_id: &str) -> Option<&str> {
        self.docs
            .iter()
            .find(|d| d.doc_id == doc_id)
            .map(|d| d.title.as_str())
    }

    fn section_of(&self, unit_id: &str) -> &[EvidenceUnit] {
        self.sections
            .iter()
            .find(|s| s.units.iter().any(|u| u.unit_id == unit_id))
            .map_or(&[], |s| s.units.as_slice())
    }

    fn document_units(&self, doc_id: &str) -> Vec<&EvidenceUnit> {
        self.sections
            .iter()
            .filter(|s| s.doc_id == doc_id)
            .flat_map(|s| &s.units)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PackingConfig {
    pub budget: i64,
    pub m: usize,
    pub image_token_cost: usize,
    pub image_cap: usize,
}

impl Default for PackingConfig {
    fn default() -> Self {
        PackingConfig {
            budget: DEFAULT_BUDGET,
            m: DEFAULT_M,
            image_token_cost: DEFAULT_IMAGE_TOKEN_COST,
            image_cap: DEFAULT_IMAGE_CAP,
        }
    }
}

impl PackingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget <= 0 {
            return Err(Error::InvalidBudget(self.budget));
        }
        if self.image_token_cost == 0 {
            return Err(Error::Config("image_token_cost must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Anchor,
    Sibling,
    SemanticAssociate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PackedEntry {
    pub unit: EvidenceUnit,
    pub role: Role,
    pub ancestry: SectionPath,
    /// Anchor that pulled this unit in; `None` for anchors.
    pub source_anchor_id: Option<String>,
    /// Whether the visual crop ships with the unit (image cap permitting).
    pub with_crop: bool,
    /// Cost of the unit block, crop included.
    pub tokens: usize,
    /// Cost of the document header charged alongside this entry (first unit
    /// of each document only).
    pub doc_meta_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocMeta {
    pub doc_id: String,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvidenceSubgraph {
    pub members: Vec<PackedEntry>,
    /// Documents in order of first appearance.
    pub documents: Vec<DocMeta>,
    pub budget: usize,
    pub total_tokens: usize,
    pub image_token_cost: usize,
}

impl EvidenceSubgraph {
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn unit_ids(&self) -> Vec<&str> {
        self.members.iter().map(|m| m.unit.unit_id.as_str()).collect()
    }

    pub fn doc_ids(&self) -> Vec<&str> {
        self.documents.iter().map(|d| d.doc_id.as_str()).collect()
    }

    pub fn serialize(&self) -> String {
        serialize(self)
    }
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Path shown to the reader. The title already sits in the document header,
/// so it only appears when the unit hangs directly under the root.
fn path_line(ancestry: &SectionPath) -> String {
    let below = ancestry.below_title();
    if below.is_empty() {
        format!("Path: {}", one_line(ancestry.title()))
    } else {
        let segs: Vec<String> = below.iter().map(|s| one_line(s)).collect();
        format!("Path: {}", segs.join(" > "))
    }
}

/// Text lines of a unit block, without the crop placeholder.
fn unit_lines(unit: &EvidenceUnit, ancestry: &SectionPath) -> Vec<String> {
    let mut lines = vec![
        format!(
            "[UNIT id={} | Type={}]",
            unit.unit_id,
            unit.unit_type.label()
        ),
        path_line(ancestry),
    ];
    if unit.unit_type.is_visual() {
        if let Some(cap) = &unit.caption {
            lines.push(format!("Caption: {}", one_line(cap)));
        }
        if !unit.content.trim().is_empty() {
            lines.push(format!("Content: {}", one_line(&unit.content)));
        }
    } else {
        lines.push(format!("Content: {}", one_line(&unit.content)));
    }
    lines
}

fn doc_meta_lines(doc_id: &str, title: &str) -> [String; 2] {
    [
        "[DOC_META]".to_string(),
        format!("ID: {doc_id} | Title: {}", one_line(title)),
    ]
}

/// Tokens of an entry's serialized text plus the fixed cost of its crop.
pub fn count_tokens(entry: &PackedEntry, counter: &dyn TokenCounter, image_token_cost: usize) -> usize {
    unit_cost(&entry.unit, &entry.ancestry, entry.with_crop, counter, image_token_cost)
}

fn unit_cost(
    unit: &EvidenceUnit,
    ancestry: &SectionPath,
    with_crop: bool,
    counter: &dyn TokenCounter,
    image_token_cost: usize,
) -> usize {
    let text: usize = unit_lines(unit, ancestry)
        .iter()
        .map(|l| counter.count(l))
        .sum();
    text + if with_crop { image_token_cost } else { 0 }
}

fn doc_meta_cost(doc_id: &str, title: &str, counter: &dyn TokenCounter) -> usize {
    doc_meta_lines(doc_id, title)
        .iter()
        .map(|l| counter.count(l))
        .sum()
}

/// Top-`m` other units of the anchor's document by similarity to the
/// anchor, best first, ties broken by unit id.
pub fn semantic_associates<'a>(
    anchor: &EvidenceUnit,
    source: &'a dyn EvidenceSource,
    sim: &dyn Similarity,
    m: usize,
) -> Vec<&'a EvidenceUnit> {
    if m == 0 {
        return Vec::new();
    }
    let mut scored: Vec<(f64, &EvidenceUnit)> = source
        .document_units(&anchor.doc_id)
        .into_iter()
        .filter(|u| u.unit_id != anchor.unit_id)
        .map(|u| (sim.similarity(anchor, u), u))
        .collect();
    scored.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| a.1.unit_id.cmp(&b.1.unit_id))
    });
    scored.truncate(m);
    scored.into_iter().map(|(_, u)| u).collect()
}

struct Packer<'a> {
    source: &'a dyn EvidenceSource,
    counter: &'a dyn TokenCounter,
    config: PackingConfig,
    budget: usize,
    used: usize,
    images: usize,
    members: Vec<PackedEntry>,
    admitted: HashSet<String>,
    documents: Vec<DocMeta>,
}

impl Packer<'_> {
    /// Admits the unit if its cost fits the remaining budget.
    fn try_admit(&mut self, unit: &EvidenceUnit, role: Role, source_anchor: Option<&str>) -> bool {
        let with_crop = unit.unit_type.is_visual()
            && unit.crop_ref.is_some()
            && self.images < self.config.image_cap;
        let ancestry = unit.section_path.clone();
        let tokens = unit_cost(
            unit,
            &ancestry,
            with_crop,
            self.counter,
            self.config.image_token_cost,
        );
        let new_doc = !self.documents.iter().any(|d| d.doc_id == unit.doc_id);
        let title = self
            .source
            .doc_title(&unit.doc_id)
            .unwrap_or(ancestry.title())
            .to_string();
        let doc_meta_tokens = if new_doc {
            doc_meta_cost(&unit.doc_id, &title, self.counter)
        } else {
            0
        };
        let delta = tokens + doc_meta_tokens;
        if self.used + delta > self.budget {
            return false;
        }
        self.used += delta;
        if with_crop {
            self.images += 1;
        }
        if new_doc {
            self.documents.push(DocMeta {
                doc_id: unit.doc_id.clone(),
                title,
            });
        }
        self.admitted.insert(unit.unit_id.clone());
        self.members.push(PackedEntry {
            unit: unit.clone(),
            role,
            ancestry,
            source_anchor_id: source_anchor.map(str::to_string),
            with_crop,
            tokens,
            doc_meta_tokens,
        });
        true
    }
}

/// Assembles the evidence subgraph for ranked anchors.
pub fn pack(
    anchors: &[(&EvidenceUnit, f64)],
    source: &dyn EvidenceSource,
    sim: &dyn Similarity,
    config: PackingConfig,
    counter: &dyn TokenCounter,
) -> Result<EvidenceSubgraph> {
    config.validate()?;
    let mut packer = Packer {
        source,
        counter,
        config,
        budget: config.budget as usize,
        used: 0,
        images: 0,
        members: Vec::new(),
        admitted: HashSet::new(),
        documents: Vec::new(),
    };

    for &(anchor, _score) in anchors {
        // Phase 1: anchor + ancestry. An anchor already admitted (e.g. as an
        // earlier anchor's sibling) is not charged again but still expands.
        if !packer.admitted.contains(&anchor.unit_id)
            && !packer.try_admit(anchor, Role::Anchor, None)
        {
            continue;
        }

        // Phase 2: siblings under the same parent section.
        for sibling in source.section_of(&anchor.unit_id) {
            if sibling.unit_id == anchor.unit_id || packer.admitted.contains(&sibling.unit_id) {
                continue;
            }
            packer.try_admit(sibling, Role::Sibling, Some(&anchor.unit_id));
        }

        // Phase 3: visual semantic associates from the same document.
        for cand in semantic_associates(anchor, source, sim, config.m) {
            if !cand.unit_type.is_visual() || packer.admitted.contains(&cand.unit_id) {
                continue;
            }
            packer.try_admit(cand, Role::SemanticAssociate, Some(&anchor.unit_id));
        }
    }

    Ok(EvidenceSubgraph {
        members: packer.members,
        documents: packer.documents,
        budget: packer.budget,
        total_tokens: packer.used,
        image_token_cost: config.image_token_cost,
    })
}

/// Reader context: a `[DOC_META]` header on each document's first unit, then
/// one block per unit with its path, text and crop placeholder.
pub fn serialize(subgraph: &EvidenceSubgraph) -> String {
    let mut out = String::new();
    let mut seen_docs: HashSet<&str> = HashSet::new();
    let mut image = 0;
    for entry in &subgraph.members {
        let doc_id = entry.unit.doc_id.as_str();
        if seen_docs.insert(doc_id) {
            let title = subgraph
                .documents
                .iter()
                .find(|d| d.doc_id == doc_id)
                .map_or(entry.ancestry.title(), |d| d.title.as_str());
            for line in doc_meta_lines(doc_id, title) {
                out.push_str(&line);
                out.push('\n');
            }
            out.push('\n');
        }
        for line in unit_lines(&entry.unit, &entry.ancestry) {
            out.push_str(&line);
            out.push('\n');
        }
        if entry.with_crop {
            image += 1;
            out.push_str(&format!("Visual: <|image_token_{image}|>\n"));
        }
        out.push('\n');
    }
    out
}

pub const QA_PROMPT_TEMPLATE: &str = "[System Instruction]
You are an AI assistant that answers questions by analyzing the provided documents.
Write an accurate answer to [Question] using only the [Context] given below.
- Do not answer using information that is not present in the context.
- When referring to tables or figures, explicitly mention their IDs (e.g., Figure 3).
- If you cannot be confident, output \"I do not have enough information to answer.\"

[Question]
<QUESTION_TEXT>

[Context]
<SERIALIZED_EVIDENCE_SUBGRAPH>

[Answer]
";

/// Fills the QA prompt with a question and a serialized context.
pub fn render_prompt(question: &str, context: &str) -> String {
    QA_PROMPT_TEMPLATE
        .replacen("<QUESTION_TEXT>", question, 1)
        .replacen("<SERIALIZED_EVIDENCE_SUBGRAPH>", context.trim_end(), 1)
}

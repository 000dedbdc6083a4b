//! Built corpus: routing and section cards, the three sparse fields, and
//! dense vectors for doc cards, unit text and visual crops.
//!
//! On disk an index directory holds `manifest.json`, one
//! `postings.<field>.bin` per sparse field and `cards.jsonl`. Dense vectors
//! are recomputed from the embedder recorded in the manifest when loading.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embed::{cosine, EmbedderSpec, EmbeddingProvider, EmbeddingVector};
use crate::error::{Error, Result};
use crate::hierarchy::{
    build_doc_card, build_sec_cards, build_tree, group_by_document, DocCard, EvidenceUnit,
    LayoutBlock, SecCard, DEFAULT_DOC_CARD_MAX_TOKENS,
};
use crate::index::{Bm25Params, SparseField, SparseIndex};
use crate::packing::{EvidenceSource, Similarity};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CARDS_FILE: &str = "cards.jsonl";
pub const INDEX_FORMAT: &str = "hikey-index";
pub const INDEX_VERSION: u32 = 1;

pub fn postings_file(field: SparseField) -> String {
    format!("postings.{}.bin", field.name())
}

/// Settings fixed at index time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexConfig {
    pub embedder: EmbedderSpec,
    pub doc_card_max_tokens: usize,
    pub k1: f64,
    pub b: f64,
}

impl Default for IndexConfig {
    fn default() -> Self {
        let bm25 = Bm25Params::default();
        IndexConfig {
            embedder: EmbedderSpec::default(),
            doc_card_max_tokens: DEFAULT_DOC_CARD_MAX_TOKENS,
            k1: bm25.k1,
            b: bm25.b,
        }
    }
}

impl IndexConfig {
    pub fn bm25(&self) -> Bm25Params {
        Bm25Params {
            k1: self.k1,
            b: self.b,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bm25().validate()?;
        if self.doc_card_max_tokens == 0 {
            return Err(Error::Config("doc_card_max_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldStats {
    pub field: SparseField,
    pub file: String,
    pub n: usize,
    pub avg_doc_length: f64,
    pub terms: usize,
    pub k1: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexManifest {
    pub format: String,
    pub version: u32,
    pub config: IndexConfig,
    pub config_hash: String,
    pub corpus_hash: String,
    pub documents: usize,
    pub sections: usize,
    pub units: usize,
    pub fields: Vec<FieldStats>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum CardRecord {
    Doc(DocCard),
    Sec(SecCard),
}

#[derive(Debug, Clone, Copy)]
struct UnitLoc {
    sec: usize,
    pos: usize,
}

#[derive(Debug, Clone)]
pub struct CorpusIndex {
    config: IndexConfig,
    doc_cards: Vec<DocCard>,
    sec_cards: Vec<SecCard>,
    doc_sections: Vec<Range<usize>>,
    doc_units: Vec<Range<usize>>,
    sec_units: Vec<Range<usize>>,
    sec_doc: Vec<usize>,
    units: Vec<UnitLoc>,
    doc_lookup: HashMap<String, usize>,
    unit_lookup: HashMap<String, usize>,
    doc_hierarchy: SparseIndex,
    doc_body: SparseIndex,
    unit_text: SparseIndex,
    doc_vecs: Vec<EmbeddingVector>,
    unit_text_vecs: Vec<Option<EmbeddingVector>>,
    unit_vis_vecs: Vec<Option<EmbeddingVector>>,
    text_provider: EmbeddingProvider,
    visual_provider: EmbeddingProvider,
}

impl CorpusIndex {
    /// Builds the index from a block stream in any order: blocks are grouped
    /// per document and ordered by `reading_order`.
    pub fn build(blocks: Vec<LayoutBlock>, config: IndexConfig) -> Result<Self> {
        config.validate()?;
        if blocks.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut doc_cards = Vec::new();
        let mut sec_cards = Vec::new();
        for (_, blocks) in group_by_document(blocks) {
            let tree = build_tree(&blocks)?.attach_upper_context();
            doc_cards.push(build_doc_card(&tree, config.doc_card_max_tokens));
            sec_cards.extend(build_sec_cards(&tree));
        }
        Self::from_cards(doc_cards, sec_cards, config)
    }

    /// Assembles an index from cards. Doc cards are ordered by id; section
    /// cards keep their relative order within a document.
    pub fn from_cards(
        mut doc_cards: Vec<DocCard>,
        sec_cards: Vec<SecCard>,
        config: IndexConfig,
    ) -> Result<Self> {
        config.validate()?;
        if doc_cards.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        doc_cards.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        let mut doc_lookup = HashMap::with_capacity(doc_cards.len());
        for (i, card) in doc_cards.iter().enumerate() {
            if doc_lookup.insert(card.doc_id.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate document `{}`", card.doc_id)));
            }
        }

        let mut per_doc: Vec<Vec<SecCard>> = vec![Vec::new(); doc_cards.len()];
        for card in sec_cards {
            let d = *doc_lookup
                .get(&card.doc_id)
                .ok_or_else(|| Error::UnknownId(card.doc_id.clone()))?;
            if card.units.is_empty() {
                return Err(Error::Config(format!("section `{}` has no units", card.sec_id)));
            }
            per_doc[d].push(card);
        }

        let mut sec_cards = Vec::new();
        let mut doc_sections = Vec::with_capacity(doc_cards.len());
        let mut doc_units = Vec::with_capacity(doc_cards.len());
        let mut sec_units = Vec::new();
        let mut sec_doc = Vec::new();
        let mut units = Vec::new();
        let mut unit_lookup = HashMap::new();
        for (d, cards) in per_doc.into_iter().enumerate() {
            let sec_start = sec_cards.len();
            let unit_start = units.len();
            for card in cards {
                let s = sec_cards.len();
                let first = units.len();
                for (pos, unit) in card.units.iter().enumerate() {
                    if unit_lookup.insert(unit.unit_id.clone(), units.len()).is_some() {
                        return Err(Error::Config(format!("duplicate unit `{}`", unit.unit_id)));
                    }
                    units.push(UnitLoc { sec: s, pos });
                }
                sec_units.push(first..units.len());
                sec_doc.push(d);
                sec_cards.push(card);
            }
            doc_sections.push(sec_start..sec_cards.len());
            doc_units.push(unit_start..units.len());
        }

        let bm25 = config.bm25();
        let doc_hierarchy = SparseIndex::build(
            SparseField::DocHierarchy,
            bm25,
            doc_cards.iter().map(|c| (c.doc_id.clone(), c.hierarchy_field.as_str())),
        )?;
        let doc_body = SparseIndex::build(
            SparseField::DocBody,
            bm25,
            doc_cards
                .iter()
                .map(|c| (c.doc_id.clone(), c.body_field.as_deref().unwrap_or(""))),
        )?;
        let unit_text = {
            let all = units.iter().map(|loc| {
                let u = &sec_cards[loc.sec].units[loc.pos];
                (u.unit_id.clone(), u.scoring_text().unwrap_or(""))
            });
            SparseIndex::build(SparseField::UnitText, bm25, all)?
        };

        Self::assemble(
            config,
            doc_cards,
            sec_cards,
            doc_sections,
            doc_units,
            sec_units,
            sec_doc,
            units,
            doc_lookup,
            unit_lookup,
            [doc_hierarchy, doc_body, unit_text],
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        config: IndexConfig,
        doc_cards: Vec<DocCard>,
        sec_cards: Vec<SecCard>,
        doc_sections: Vec<Range<usize>>,
        doc_units: Vec<Range<usize>>,
        sec_units: Vec<Range<usize>>,
        sec_doc: Vec<usize>,
        units: Vec<UnitLoc>,
        doc_lookup: HashMap<String, usize>,
        unit_lookup: HashMap<String, usize>,
        [doc_hierarchy, doc_body, unit_text]: [SparseIndex; 3],
    ) -> Result<Self> {
        let (text_provider, visual_provider) = EmbeddingProvider::pair_from_spec(&config.embedder)?;
        let doc_vecs = doc_cards
            .iter()
            .map(|c| text_provider.embed_keyed_text(&c.doc_id, &c.hierarchy_field))
            .collect::<Result<Vec<_>>>()?;
        let mut unit_text_vecs = Vec::with_capacity(units.len());
        let mut unit_vis_vecs = Vec::with_capacity(units.len());
        for loc in &units {
            let u = &sec_cards[loc.sec].units[loc.pos];
            unit_text_vecs.push(
                u.scoring_text()
                    .map(|t| text_provider.embed_keyed_text(&u.unit_id, t))
                    .transpose()?,
            );
            unit_vis_vecs.push(
                u.crop_ref
                    .as_deref()
                    .filter(|_| u.unit_type.is_visual())
                    .map(|r| visual_provider.embed_visual(r))
                    .transpose()?,
            );
        }
        Ok(CorpusIndex {
            config,
            doc_cards,
            sec_cards,
            doc_sections,
            doc_units,
            sec_units,
            sec_doc,
            units,
            doc_lookup,
            unit_lookup,
            doc_hierarchy,
            doc_body,
            unit_text,
            doc_vecs,
            unit_text_vecs,
            unit_vis_vecs,
            text_provider,
            visual_provider,
        })
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    pub fn doc_cards(&self) -> &[DocCard] {
        &self.doc_cards
    }

    pub fn sec_cards(&self) -> &[SecCard] {
        &self.sec_cards
    }

    pub fn num_docs(&self) -> usize {
        self.doc_cards.len()
    }

    pub fn num_units(&self) -> usize {
        self.units.len()
    }

    pub fn doc_ordinal(&self, doc_id: &str) -> Option<usize> {
        self.doc_lookup.get(doc_id).copied()
    }

    pub fn unit_ordinal(&self, unit_id: &str) -> Option<usize> {
        self.unit_lookup.get(unit_id).copied()
    }

    pub fn unit(&self, ordinal: usize) -> &EvidenceUnit {
        let loc = self.units[ordinal];
        &self.sec_cards[loc.sec].units[loc.pos]
    }

    pub fn unit_section(&self, ordinal: usize) -> usize {
        self.units[ordinal].sec
    }

    pub fn doc_sections(&self, doc: usize) -> Range<usize> {
        self.doc_sections[doc].clone()
    }

    pub fn doc_units(&self, doc: usize) -> Range<usize> {
        self.doc_units[doc].clone()
    }

    pub fn section_units(&self, sec: usize) -> Range<usize> {
        self.sec_units[sec].clone()
    }

    pub fn section_doc(&self, sec: usize) -> usize {
        self.sec_doc[sec]
    }

    pub fn sparse(&self, field: SparseField) -> &SparseIndex {
        match field {
            SparseField::DocHierarchy => &self.doc_hierarchy,
            SparseField::DocBody => &self.doc_body,
            SparseField::UnitText => &self.unit_text,
        }
    }

    pub fn doc_vector(&self, doc: usize) -> &EmbeddingVector {
        &self.doc_vecs[doc]
    }

    pub fn unit_text_vector(&self, unit: usize) -> Option<&EmbeddingVector> {
        self.unit_text_vecs[unit].as_ref()
    }

    pub fn unit_visual_vector(&self, unit: usize) -> Option<&EmbeddingVector> {
        self.unit_vis_vecs[unit].as_ref()
    }

    pub fn text_provider(&self) -> &EmbeddingProvider {
        &self.text_provider
    }

    pub fn visual_provider(&self) -> &EmbeddingProvider {
        &self.visual_provider
    }

    /// Vector used for unit-to-unit similarity: the crop embedding for
    /// Table/Image units that have one, the text embedding otherwise.
    pub fn similarity_vector(&self, unit: usize) -> Option<&EmbeddingVector> {
        let u = self.unit(unit);
        if u.unit_type.is_visual() {
            self.unit_visual_vector(unit)
                .or_else(|| self.unit_text_vector(unit))
        } else {
            self.unit_text_vector(unit)
        }
    }

    fn cards_jsonl(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for card in &self.doc_cards {
            serde_json::to_writer(&mut out, &CardRecord::Doc(card.clone()))?;
            out.push(b'\n');
        }
        for card in &self.sec_cards {
            serde_json::to_writer(&mut out, &CardRecord::Sec(card.clone()))?;
            out.push(b'\n');
        }
        Ok(out)
    }

    pub fn manifest(&self) -> Result<IndexManifest> {
        let cards = self.cards_jsonl()?;
        Ok(self.manifest_for(&cards))
    }

    fn manifest_for(&self, cards: &[u8]) -> IndexManifest {
        IndexManifest {
            format: INDEX_FORMAT.to_string(),
            version: INDEX_VERSION,
            config: self.config.clone(),
            config_hash: sha256_json(&self.config),
            corpus_hash: hex::encode(Sha256::digest(cards)),
            documents: self.doc_cards.len(),
            sections: self.sec_cards.len(),
            units: self.units.len(),
            fields: SparseField::ALL
                .into_iter()
                .map(|f| {
                    let idx = self.sparse(f);
                    FieldStats {
                        field: f,
                        file: postings_file(f),
                        n: idx.len(),
                        avg_doc_length: idx.avg_doc_length(),
                        terms: idx.vocabulary_len(),
                        k1: idx.params().k1,
                        b: idx.params().b,
                    }
                })
                .collect(),
        }
    }

    /// Writes the index into `dir`, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<IndexManifest> {
        std::fs::create_dir_all(dir)?;
        let cards = self.cards_jsonl()?;
        for field in SparseField::ALL {
            self.sparse(field).save(&dir.join(postings_file(field)))?;
        }
        std::fs::write(dir.join(CARDS_FILE), &cards)?;
        let manifest = self.manifest_for(&cards);
        let mut f = std::fs::File::create(dir.join(MANIFEST_FILE))?;
        serde_json::to_writer_pretty(&mut f, &manifest)?;
        f.write_all(b"\n")?;
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        if !manifest_path.is_file() {
            return Err(Error::MissingIndex(dir.to_path_buf()));
        }
        let corrupt = |path: &Path, reason: String| Error::CorruptIndex {
            path: path.to_path_buf(),
            reason,
        };
        let manifest: IndexManifest = serde_json::from_slice(&std::fs::read(&manifest_path)?)
            .map_err(|e| corrupt(&manifest_path, e.to_string()))?;
        if manifest.format != INDEX_FORMAT || manifest.version != INDEX_VERSION {
            return Err(corrupt(
                &manifest_path,
                format!("unsupported format {} v{}", manifest.format, manifest.version),
            ));
        }

        let cards_path = dir.join(CARDS_FILE);
        let mut doc_cards = Vec::new();
        let mut sec_cards = Vec::new();
        let cards_bytes = std::fs::read(&cards_path)?;
        if hex::encode(Sha256::digest(&cards_bytes)) != manifest.corpus_hash {
            return Err(corrupt(&cards_path, "does not match the manifest corpus hash".into()));
        }
        for (i, line) in cards_bytes.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line)
                .map_err(|e| corrupt(&cards_path, format!("line {}: {e}", i + 1)))?
            {
                CardRecord::Doc(c) => doc_cards.push(c),
                CardRecord::Sec(c) => sec_cards.push(c),
            }
        }

        let mut fields = Vec::with_capacity(3);
        for field in SparseField::ALL {
            let path = dir.join(postings_file(field));
            let idx = SparseIndex::load(&path)?;
            if idx.field() != field {
                return Err(corrupt(&path, format!("holds field {}", idx.field().name())));
            }
            fields.push(idx);
        }
        let [doc_hierarchy, doc_body, unit_text]: [SparseIndex; 3] =
            fields.try_into().expect("three sparse fields");

        // Rebuilding the layout from cards re-derives the ordinals; the stored
        // postings must agree with them.
        let rebuilt = Self::from_cards(doc_cards, sec_cards, manifest.config.clone())?;
        for (stored, fresh) in [
            (&doc_hierarchy, &rebuilt.doc_hierarchy),
            (&doc_body, &rebuilt.doc_body),
            (&unit_text, &rebuilt.unit_text),
        ] {
            if stored.ids() != fresh.ids() {
                return Err(corrupt(
                    &dir.join(postings_file(stored.field())),
                    "entry ids do not match cards.jsonl".into(),
                ));
            }
        }
        Ok(CorpusIndex {
            doc_hierarchy,
            doc_body,
            unit_text,
            ..rebuilt
        })
    }
}

pub(crate) fn sha256_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(bytes))
}

impl EvidenceSource for CorpusIndex {
    fn doc_title(&self, doc_id: &str) -> Option<&str> {
        self.doc_ordinal(doc_id)
            .map(|d| self.doc_cards[d].title.as_str())
    }

    fn section_of(&self, unit_id: &str) -> &[EvidenceUnit] {
        match self.unit_ordinal(unit_id) {
            Some(u) => &self.sec_cards[self.units[u].sec].units,
            None => &[],
        }
    }

    fn document_units(&self, doc_id: &str) -> Vec<&EvidenceUnit> {
        match self.doc_ordinal(doc_id) {
            Some(d) => self.doc_units(d).map(|u| self.unit(u)).collect(),
            None => Vec::new(),
        }
    }
}

impl Similarity for CorpusIndex {
    /// Cosine of the units' similarity vectors; 0 when either is missing or
    /// the dimensions differ.
    fn similarity(&self, a: &EvidenceUnit, b: &EvidenceUnit) -> f64 {
        let vec = |u: &EvidenceUnit| {
            self.unit_ordinal(&u.unit_id)
                .and_then(|o| self.similarity_vector(o))
        };
        match (vec(a), vec(b)) {
            (Some(x), Some(y)) => cosine(x, y).unwrap_or(0.0),
            _ => 0.0,
        }
    }
}

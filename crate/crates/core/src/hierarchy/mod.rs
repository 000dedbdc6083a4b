//! Document hierarchy reconstruction.
//!
//! Labeled layout blocks are nested into a section tree with a heading-depth
//! stack. The tree yields section paths, upper context for visual blocks, and
//! the two kinds of index cards: one routing card per document and one
//! section card per header that directly holds content.

mod cards;
mod tree;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use cards::{build_doc_card, build_sec_cards, DocCard, EvidenceUnit, SecCard, UnitType};
pub use tree::{build_tree, DocTree, NodeId, TreeNode};

/// Text used for the root when a document has no Title block.
pub const UNTITLED: &str = "UNTITLED";

/// Default whitespace-token cap for the hierarchy field of a [`DocCard`].
pub const DEFAULT_DOC_CARD_MAX_TOKENS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockType {
    Title,
    SectionHeader,
    Paragraph,
    Table,
    Figure,
    Caption,
}

impl BlockType {
    pub fn is_header(self) -> bool {
        matches!(self, BlockType::Title | BlockType::SectionHeader)
    }

    pub fn is_visual(self) -> bool {
        matches!(self, BlockType::Table | BlockType::Figure)
    }
}

/// One labeled block as produced by layout analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutBlock {
    pub doc_id: String,
    pub block_id: String,
    pub page: u32,
    pub block_type: BlockType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_hint: Option<u32>,
    #[serde(default)]
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop_ref: Option<String>,
    pub reading_order: i64,
}

/// Header texts from the document title down to a governing header.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SectionPath(Vec<String>);

impl SectionPath {
    pub fn new(segments: Vec<String>) -> Self {
        debug_assert!(!segments.is_empty(), "section path needs the title segment");
        SectionPath(segments)
    }

    pub fn segments(&self) -> &[String] {
        &self.0
    }

    pub fn title(&self) -> &str {
        &self.0[0]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Segments below the title; empty for content sitting directly under the root.
    pub fn below_title(&self) -> &[String] {
        &self.0[1..]
    }

    pub fn join(&self, sep: &str) -> String {
        self.0.join(sep)
    }
}

impl fmt::Display for SectionPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.join(" > "))
    }
}

/// Groups a mixed block stream by document and orders each document by
/// `reading_order`. Documents come back sorted by id, so the result does not
/// depend on the order of the input stream.
pub fn group_by_document(blocks: Vec<LayoutBlock>) -> Vec<(String, Vec<LayoutBlock>)> {
    let mut docs: std::collections::BTreeMap<String, Vec<LayoutBlock>> = Default::default();
    for block in blocks {
        docs.entry(block.doc_id.clone()).or_default().push(block);
    }
    docs.into_iter()
        .map(|(doc_id, mut blocks)| {
            blocks.sort_by(|a, b| {
                a.reading_order
                    .cmp(&b.reading_order)
                    .then_with(|| a.block_id.cmp(&b.block_id))
            });
            (doc_id, blocks)
        })
        .collect()
}

use serde::{Deserialize, Serialize};

use super::tree::{DocTree, NodeId};
use super::{BlockType, SectionPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UnitType {
    Text,
    Table,
    Image,
}

impl UnitType {
    pub fn is_visual(self) -> bool {
        !matches!(self, UnitType::Text)
    }

    /// Label used in serialized reader context.
    pub fn label(self) -> &'static str {
        match self {
            UnitType::Text => "Text",
            UnitType::Table => "Table",
            UnitType::Image => "Figure",
        }
    }
}

/// Atomic retrievable item of a section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceUnit {
    pub unit_id: String,
    pub doc_id: String,
    pub unit_type: UnitType,
    /// Body text for Text units; OCR or linearized text for Table/Image.
    pub content: String,
    /// Caption folded into a Table/Image unit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop_ref: Option<String>,
    pub section_path: SectionPath,
    /// Upper context; only set on Table/Image units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper_context: Option<String>,
    pub page: u32,
    pub reading_order: i64,
}

impl EvidenceUnit {
    /// Text that feeds the lexical and text-dense signals: the body for Text
    /// units, the upper context for Table/Image units.
    pub fn scoring_text(&self) -> Option<&str> {
        match self.unit_type {
            UnitType::Text => Some(&self.content),
            UnitType::Table | UnitType::Image => self.upper_context.as_deref(),
        }
    }
}

/// Stage-1 routing card.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocCard {
    pub doc_id: String,
    pub title: String,
    pub hierarchy_field: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body_field: Option<String>,
}

/// Stage-2 card: one header and the content units directly under it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecCard {
    pub sec_id: String,
    pub doc_id: String,
    pub section_path: SectionPath,
    pub units: Vec<EvidenceUnit>,
}

pub fn unit_id(doc_id: &str, block_id: &str) -> String {
    format!("{doc_id}/{block_id}")
}

pub fn sec_id(doc_id: &str, header_block_id: Option<&str>) -> String {
    format!("{doc_id}#{}", header_block_id.unwrap_or(""))
}

/// Title followed by depth-1/2 headers in reading order, cut to `max_tokens`
/// whitespace tokens.
pub fn build_doc_card(tree: &DocTree, max_tokens: usize) -> DocCard {
    let mut parts = vec![tree.title().to_string()];
    let mut body = Vec::new();
    for id in tree.preorder(tree.root()) {
        let node = tree.node(id).expect("preorder yields tree nodes");
        if id == tree.root() {
            continue;
        }
        if node.is_header() {
            if (1..=2).contains(&node.level()) && !node.text().is_empty() {
                parts.push(node.text().to_string());
            }
        } else if !node.text().is_empty() {
            body.push(node.text().to_string());
        }
    }
    let joined = parts.join(" ");
    let hierarchy_field = joined
        .split_whitespace()
        .take(max_tokens)
        .collect::<Vec<_>>()
        .join(" ");
    DocCard {
        doc_id: tree.doc_id().to_string(),
        title: tree.title().to_string(),
        hierarchy_field,
        body_field: (!body.is_empty()).then(|| body.join(" ")),
    }
}

/// One card per header with at least one content leaf. Captions bound to a
/// Table/Figure fold into that unit; unbound captions become Text units.
///
/// Expects a tree that already went through `attach_upper_context`.
pub fn build_sec_cards(tree: &DocTree) -> Vec<SecCard> {
    let doc_id = tree.doc_id();
    let mut cards = Vec::new();
    for header in tree.headers() {
        let hnode = tree.node(header).expect("header ids come from the tree");
        let path = tree
            .section_path(header)
            .expect("header ids come from the tree");
        let units: Vec<EvidenceUnit> = hnode
            .children()
            .iter()
            .filter_map(|&child| make_unit(tree, child, &path))
            .collect();
        if units.is_empty() {
            continue;
        }
        cards.push(SecCard {
            sec_id: sec_id(doc_id, hnode.block_id()),
            doc_id: doc_id.to_string(),
            section_path: path,
            units,
        });
    }
    cards
}

fn make_unit(tree: &DocTree, id: NodeId, path: &SectionPath) -> Option<EvidenceUnit> {
    let node = tree.node(id).ok()?;
    let block = node.block()?;
    let unit_type = match block.block_type {
        BlockType::Title | BlockType::SectionHeader => return None,
        BlockType::Caption if node.caption_of().is_some() => return None,
        BlockType::Paragraph | BlockType::Caption => UnitType::Text,
        BlockType::Table => UnitType::Table,
        BlockType::Figure => UnitType::Image,
    };
    let caption = node
        .caption()
        .and_then(|c| tree.node(c).ok())
        .map(|c| c.text().to_string());
    Some(EvidenceUnit {
        unit_id: unit_id(tree.doc_id(), &block.block_id),
        doc_id: tree.doc_id().to_string(),
        unit_type,
        content: node.text().to_string(),
        caption,
        crop_ref: if unit_type.is_visual() {
            block.crop_ref.clone()
        } else {
            None
        },
        section_path: path.clone(),
        upper_context: if unit_type.is_visual() {
            node.upper_context().map(str::to_string)
        } else {
            None
        },
        page: block.page,
        reading_order: block.reading_order,
    })
}

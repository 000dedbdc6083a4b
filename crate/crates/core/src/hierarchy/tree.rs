use std::collections::HashSet;

use serde::Serialize;

use super::{BlockType, LayoutBlock, SectionPath, UNTITLED};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeNode {
    /// `None` only for a synthetic root.
    block: Option<LayoutBlock>,
    parent: Option<NodeId>,
    children: Vec<NodeId>,
    level: usize,
    /// Caption bound to a Table/Figure node.
    caption: Option<NodeId>,
    /// Table/Figure a Caption node is bound to.
    caption_of: Option<NodeId>,
    upper_context: Option<String>,
}

impl TreeNode {
    fn new(block: Option<LayoutBlock>) -> Self {
        TreeNode {
            block,
            parent: None,
            children: Vec::new(),
            level: 0,
            caption: None,
            caption_of: None,
            upper_context: None,
        }
    }

    pub fn block(&self) -> Option<&LayoutBlock> {
        self.block.as_ref()
    }

    pub fn is_synthetic(&self) -> bool {
        self.block.is_none()
    }

    /// A synthetic root reports itself as a Title.
    pub fn block_type(&self) -> BlockType {
        self.block.as_ref().map_or(BlockType::Title, |b| b.block_type)
    }

    pub fn is_header(&self) -> bool {
        self.block_type().is_header()
    }

    pub fn block_id(&self) -> Option<&str> {
        self.block.as_ref().map(|b| b.block_id.as_str())
    }

    pub fn text(&self) -> &str {
        match &self.block {
            Some(b) => b.text.trim(),
            None => UNTITLED,
        }
    }

    pub fn page(&self) -> u32 {
        self.block.as_ref().map_or(1, |b| b.page)
    }

    pub fn reading_order(&self) -> i64 {
        self.block.as_ref().map_or(i64::MIN, |b| b.reading_order)
    }

    pub fn parent(&self) -> Option<NodeId> {
        self.parent
    }

    pub fn children(&self) -> &[NodeId] {
        &self.children
    }

    /// Distance from the root (root = 0).
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn caption(&self) -> Option<NodeId> {
        self.caption
    }

    pub fn caption_of(&self) -> Option<NodeId> {
        self.caption_of
    }

    pub fn upper_context(&self) -> Option<&str> {
        self.upper_context.as_deref()
    }
}

/// Reconstructed section tree of one document. Immutable once built;
/// [`DocTree::attach_upper_context`] consumes and returns the tree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocTree {
    doc_id: String,
    nodes: Vec<TreeNode>,
    root: NodeId,
}

/// Nests an ordered block stream of one document into a section tree.
///
/// A SectionHeader of depth `k` becomes a child of the nearest open header
/// with depth `< k`; content attaches to the most recently opened header; a
/// Caption joins the Table/Figure immediately before it. Without a Title a
/// synthetic `UNTITLED` root is created.
pub fn build_tree(blocks: &[LayoutBlock]) -> Result<DocTree> {
    let first = blocks.first().ok_or(Error::EmptyDocument)?;
    let doc_id = first.doc_id.clone();

    let mut seen = HashSet::with_capacity(blocks.len());
    let mut prev_order: Option<i64> = None;
    for block in blocks {
        if block.doc_id != doc_id {
            return Err(Error::MixedDocuments {
                expected: doc_id,
                found: block.doc_id.clone(),
                block_id: block.block_id.clone(),
            });
        }
        if block.block_id.is_empty() {
            return Err(Error::InvalidBlock {
                doc_id,
                reason: "empty block_id".into(),
            });
        }
        if block.page == 0 {
            return Err(Error::InvalidBlock {
                doc_id,
                reason: format!("block `{}` has page 0", block.block_id),
            });
        }
        if !seen.insert(block.block_id.as_str()) {
            return Err(Error::DuplicateBlock {
                doc_id,
                block_id: block.block_id.clone(),
            });
        }
        if prev_order.is_some_and(|p| block.reading_order <= p) {
            return Err(Error::NonMonotoneReadingOrder {
                doc_id,
                block_id: block.block_id.clone(),
            });
        }
        prev_order = Some(block.reading_order);
    }

    let title_pos = blocks.iter().position(|b| b.block_type == BlockType::Title);
    let mut nodes = Vec::with_capacity(blocks.len() + 1);
    let offset = match title_pos {
        Some(_) => 0,
        None => {
            nodes.push(TreeNode::new(None));
            1
        }
    };
    nodes.extend(blocks.iter().cloned().map(|b| TreeNode::new(Some(b))));
    let root = NodeId(title_pos.unwrap_or(0));

    let mut tree = DocTree {
        doc_id,
        nodes,
        root,
    };

    // (header, depth) pairs of currently open headers; the root never pops.
    let mut open: Vec<(NodeId, u32)> = vec![(root, 0)];
    let mut last_header_depth: Option<u32> = None;

    for (pos, block) in blocks.iter().enumerate() {
        let id = NodeId(pos + offset);
        if id == root {
            continue;
        }
        match block.block_type {
            BlockType::Title | BlockType::SectionHeader => {
                let depth = match block.depth_hint {
                    Some(d) => d.max(1),
                    None => last_header_depth.unwrap_or(1),
                };
                while open.last().is_some_and(|&(_, d)| d >= depth) {
                    open.pop();
                }
                let parent = open.last().map_or(root, |&(n, _)| n);
                tree.link(parent, id);
                open.push((id, depth));
                last_header_depth = Some(depth);
            }
            BlockType::Caption => {
                let prev = pos
                    .checked_sub(1)
                    .map(|p| NodeId(p + offset))
                    .filter(|&p| {
                        let n = &tree.nodes[p.0];
                        n.block_type().is_visual() && n.caption.is_none() && p != root
                    });
                match prev {
                    Some(visual) => {
                        let parent = tree.nodes[visual.0].parent.unwrap_or(root);
                        tree.link(parent, id);
                        tree.nodes[visual.0].caption = Some(id);
                        tree.nodes[id.0].caption_of = Some(visual);
                    }
                    None => {
                        let parent = open.last().map_or(root, |&(n, _)| n);
                        tree.link(parent, id);
                    }
                }
            }
            BlockType::Paragraph | BlockType::Table | BlockType::Figure => {
                let parent = open.last().map_or(root, |&(n, _)| n);
                tree.link(parent, id);
            }
        }
    }

    Ok(tree)
}

impl DocTree {
    fn link(&mut self, parent: NodeId, child: NodeId) {
        let level = self.nodes[parent.0].level + 1;
        self.nodes[parent.0].children.push(child);
        let node = &mut self.nodes[child.0];
        node.parent = Some(parent);
        node.level = level;
    }

    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn title(&self) -> &str {
        self.nodes[self.root.0].text()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> Result<&TreeNode> {
        self.nodes.get(id.0).ok_or(Error::UnknownNode(id.0))
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn find_block(&self, block_id: &str) -> Option<NodeId> {
        self.nodes
            .iter()
            .position(|n| n.block_id() == Some(block_id))
            .map(NodeId)
    }

    /// Pre-order walk from `start`, children in reading order.
    pub fn preorder(&self, start: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![start];
        while let Some(id) = stack.pop() {
            out.push(id);
            stack.extend(self.nodes[id.0].children.iter().rev().copied());
        }
        out
    }

    /// Non-header nodes in document order.
    pub fn leaves(&self) -> Vec<NodeId> {
        self.preorder(self.root)
            .into_iter()
            .filter(|&id| !self.nodes[id.0].is_header())
            .collect()
    }

    /// Header nodes (root included) in document order.
    pub fn headers(&self) -> Vec<NodeId> {
        self.preorder(self.root)
            .into_iter()
            .filter(|&id| self.nodes[id.0].is_header())
            .collect()
    }

    /// Nearest Title/SectionHeader at or above `id`. Headers govern themselves.
    pub fn governing_header(&self, id: NodeId) -> Result<NodeId> {
        let mut cur = id;
        loop {
            let node = self.node(cur)?;
            if node.is_header() {
                return Ok(cur);
            }
            match node.parent {
                Some(p) => cur = p,
                None => return Ok(self.root),
            }
        }
    }

    /// Header texts from the root to the governing header of `id`.
    pub fn section_path(&self, id: NodeId) -> Result<SectionPath> {
        let header = self.governing_header(id)?;
        let mut segments = Vec::new();
        let mut cur = Some(header);
        while let Some(h) = cur {
            let node = &self.nodes[h.0];
            segments.push(node.text().to_string());
            cur = node.parent;
        }
        segments.reverse();
        Ok(SectionPath::new(segments))
    }

    /// Sets `ctx` on every Table/Figure: its caption when bound, otherwise the
    /// nearest preceding non-empty Paragraph under the same governing header,
    /// otherwise the governing header's own text.
    pub fn attach_upper_context(mut self) -> DocTree {
        let visuals: Vec<NodeId> = self
            .node_ids()
            .filter(|&id| self.nodes[id.0].block_type().is_visual())
            .collect();
        for id in visuals {
            let ctx = self.upper_context_for(id);
            self.nodes[id.0].upper_context = Some(ctx);
        }
        self
    }

    fn upper_context_for(&self, id: NodeId) -> String {
        let node = &self.nodes[id.0];
        if let Some(cap) = node.caption {
            return self.nodes[cap.0].text().to_string();
        }
        // Headers always resolve; the lookup cannot fail for an in-tree id.
        let header = self.governing_header(id).unwrap_or(self.root);
        let order = node.reading_order();
        self.preorder(header)
            .into_iter()
            .map(|n| &self.nodes[n.0])
            .filter(|n| {
                n.block_type() == BlockType::Paragraph
                    && n.reading_order() < order
                    && !n.text().is_empty()
            })
            .max_by_key(|n| n.reading_order())
            .map_or_else(
                || self.nodes[header.0].text().to_string(),
                |n| n.text().to_string(),
            )
    }
}

//! Fixtures shared by the integration tests.
#![allow(dead_code)]

pub mod packing;

use hikey_core::hierarchy::{BlockType, LayoutBlock};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn block(
    doc: &str,
    id: &str,
    ty: BlockType,
    depth: Option<u32>,
    text: &str,
    order: i64,
) -> LayoutBlock {
    LayoutBlock {
        doc_id: doc.into(),
        block_id: id.into(),
        page: 1 + (order / 20) as u32,
        block_type: ty,
        depth_hint: depth,
        text: text.into(),
        crop_ref: ty.is_visual().then(|| format!("crops/{doc}/{id}.png")),
        reading_order: order,
    }
}

/// The running Apollo 11 example: crew paragraph, crew table, crew portrait
/// under 3.1, and a landing-time table under 5.1.
pub fn apollo_blocks() -> Vec<LayoutBlock> {
    use BlockType::*;
    let d = "apollo";
    vec![
        block(d, "t", Title, Some(0), "Apollo 11", 0),
        block(d, "h3", SectionHeader, Some(1), "3 Mission personnel", 1),
        block(d, "h31", SectionHeader, Some(2), "3.1 Prime crew", 2),
        block(
            d,
            "c1",
            Paragraph,
            None,
            "The prime crew consisted of Neil Armstrong, Michael Collins and Buzz Aldrin.",
            3,
        ),
        block(d, "c2", Table, None, "Position | Astronaut Commander | Neil Armstrong", 4),
        block(d, "c2cap", Caption, None, "Table 1: Prime crew", 5),
        block(d, "c3", Figure, None, "", 6),
        block(d, "c3cap", Caption, None, "Figure 2: Crew portrait", 7),
        block(d, "h5", SectionHeader, Some(1), "5 Mission events", 8),
        block(d, "h51", SectionHeader, Some(2), "5.1 Landing", 9),
        block(d, "p51", Paragraph, None, "The lunar module Eagle landed on July 20, 1969.", 10),
        block(d, "landing", Table, None, "Event | Time Touchdown | 20:17:40 UTC", 11),
        block(d, "landcap", Caption, None, "Table 3: Landing timeline", 12),
    ]
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn word(rng: &mut impl Rng, vocab: usize) -> String {
    format!("w{}", rng.gen_range(0..vocab))
}

pub fn words(rng: &mut impl Rng, n: usize, vocab: usize) -> String {
    (0..n).map(|_| word(rng, vocab)).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy)]
pub struct CorpusShape {
    pub docs: usize,
    pub sections: usize,
    pub units: usize,
    pub vocab: usize,
}

impl CorpusShape {
    pub fn small(docs: usize) -> Self {
        CorpusShape {
            docs,
            sections: 4,
            units: 3,
            vocab: 60,
        }
    }
}

/// Random documents: a title, `sections` headers alternating between depth 1
/// and 2, and `units` content blocks per header mixing paragraphs, tables
/// and figures, some with captions. Paragraph text is occasionally repeated
/// to create exact score ties.
pub fn synthetic_corpus(seed: u64, shape: CorpusShape) -> Vec<LayoutBlock> {
    let mut rng = rng(seed);
    let mut out = Vec::new();
    let mut last_para = String::from("w0 w1");
    for d in 0..shape.docs {
        let doc = format!("doc{d:04}");
        let mut order = 0i64;
        let push = |out: &mut Vec<LayoutBlock>,
                    ty: BlockType,
                    depth: Option<u32>,
                    text: &str,
                    order: &mut i64| {
            let id = format!("b{order}");
            out.push(block(&doc, &id, ty, depth, text, *order));
            *order += 1;
        };
        push(
            &mut out,
            BlockType::Title,
            Some(0),
            &format!("{doc} {}", words(&mut rng, 3, shape.vocab)),
            &mut order,
        );
        for s in 0..shape.sections {
            let depth = if s % 3 == 0 { 1 } else { 2 };
            let header = format!("{} {}", s + 1, words(&mut rng, 2, shape.vocab));
            push(&mut out, BlockType::SectionHeader, Some(depth), &header, &mut order);
            for _ in 0..shape.units {
                match rng.gen_range(0..10) {
                    0..=5 => {
                        let text = if rng.gen_bool(0.1) {
                            last_para.clone()
                        } else {
                            let n = rng.gen_range(4..16);
                            words(&mut rng, n, shape.vocab)
                        };
                        last_para = text.clone();
                        push(&mut out, BlockType::Paragraph, None, &text, &mut order);
                    }
                    6..=7 => {
                        let text = format!("{} | {}", word(&mut rng, shape.vocab), word(&mut rng, shape.vocab));
                        push(&mut out, BlockType::Table, None, &text, &mut order);
                        if rng.gen_bool(0.5) {
                            let cap = format!("Table {}", words(&mut rng, 3, shape.vocab));
                            push(&mut out, BlockType::Caption, None, &cap, &mut order);
                        }
                    }
                    _ => {
                        push(&mut out, BlockType::Figure, None, "", &mut order);
                        if rng.gen_bool(0.5) {
                            let cap = format!("Figure {}", words(&mut rng, 3, shape.vocab));
                            push(&mut out, BlockType::Caption, None, &cap, &mut order);
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn shuffled(mut blocks: Vec<LayoutBlock>, seed: u64) -> Vec<LayoutBlock> {
    blocks.shuffle(&mut rng(seed));
    blocks
}

pub fn random_queries(seed: u64, n: usize, vocab: usize) -> Vec<String> {
    let mut rng = rng(seed);
    (0..n)
        .map(|_| {
            let k = rng.gen_range(1..5);
            words(&mut rng, k, vocab)
        })
        .collect()
}

//! Packing fixtures with hand-executed traces.
//!
//! Whitespace token costs used in the traces:
//! - `[DOC_META]` + `ID: d | Title: T` = 6 for a one-word title
//! - unit header `[UNIT id=x | Type=y]` = 4
//! - `Path: A` = 2 for a unit directly under header `A`
//! - `Content: ...` / `Caption: ...` = 1 + words
//! - crop = `image_token_cost`

use std::collections::HashMap;

use hikey_core::hierarchy::{
    build_doc_card, build_sec_cards, build_tree, DocCard, EvidenceUnit, SecCard, SectionPath, UnitType,
};
use hikey_core::packing::{
    count_tokens, pack, semantic_associates, CardSet, EvidenceSource, EvidenceSubgraph, PackingConfig, Role,
    Similarity, WhitespaceCounter,
};

use super::apollo_blocks;

fn filler(n: usize) -> String {
    vec!["x"; n].join(" ")
}

pub fn unit(doc: &str, title: &str, header: &str, id: &str, ty: UnitType, content_words: usize, caption_words: usize) -> EvidenceUnit {
    EvidenceUnit {
        unit_id: id.into(),
        doc_id: doc.into(),
        unit_type: ty,
        content: filler(content_words),
        caption: (caption_words > 0).then(|| filler(caption_words)),
        crop_ref: ty.is_visual().then(|| format!("crops/{id}.png")),
        section_path: SectionPath::new(vec![title.into(), header.into()]),
        upper_context: ty.is_visual().then(|| header.to_string()),
        page: 1,
        reading_order: 0,
    }
}

/// `(header, units)` per section, all in one document.
pub fn doc_cards(doc: &str, title: &str, sections: Vec<(&str, Vec<EvidenceUnit>)>) -> (DocCard, Vec<SecCard>) {
    let card = DocCard {
        doc_id: doc.into(),
        title: title.into(),
        hierarchy_field: title.into(),
        body_field: None,
    };
    let secs = sections
        .into_iter()
        .map(|(header, units)| SecCard {
            sec_id: format!("{doc}#{header}"),
            doc_id: doc.into(),
            section_path: SectionPath::new(vec![title.into(), header.into()]),
            units,
        })
        .collect();
    (card, secs)
}

pub fn card_set(docs: Vec<(DocCard, Vec<SecCard>)>) -> CardSet {
    let mut d = Vec::new();
    let mut s = Vec::new();
    for (card, secs) in docs {
        d.push(card);
        s.extend(secs);
    }
    CardSet::new(d, s)
}

/// Symmetric similarity table; unlisted pairs score 0.
#[derive(Debug, Clone, Default)]
pub struct SimTable(HashMap<(String, String), f64>);

impl SimTable {
    pub fn new(pairs: &[(&str, &str, f64)]) -> Self {
        let mut m = HashMap::new();
        for &(a, b, v) in pairs {
            m.insert((a.to_string(), b.to_string()), v);
            m.insert((b.to_string(), a.to_string()), v);
        }
        SimTable(m)
    }

    pub fn get(&self, a: &EvidenceUnit, b: &EvidenceUnit) -> f64 {
        self.0
            .get(&(a.unit_id.clone(), b.unit_id.clone()))
            .copied()
            .unwrap_or(0.0)
    }
}

pub struct Expected {
    pub unit_id: &'static str,
    pub role: Role,
    pub source: Option<&'static str>,
    pub with_crop: bool,
}

const fn anchor(id: &'static str) -> Expected {
    Expected { unit_id: id, role: Role::Anchor, source: None, with_crop: false }
}

const fn sib(id: &'static str, src: &'static str) -> Expected {
    Expected { unit_id: id, role: Role::Sibling, source: Some(src), with_crop: false }
}

const fn assoc(id: &'static str, src: &'static str) -> Expected {
    Expected { unit_id: id, role: Role::SemanticAssociate, source: Some(src), with_crop: false }
}

const fn crop(mut e: Expected) -> Expected {
    e.with_crop = true;
    e
}

pub struct PackFixture {
    pub name: &'static str,
    pub cards: CardSet,
    pub sims: SimTable,
    pub anchors: Vec<&'static str>,
    pub config: PackingConfig,
    pub expected: Vec<Expected>,
    pub expected_total: usize,
}

fn cfg(budget: i64, m: usize, image_token_cost: usize, image_cap: usize) -> PackingConfig {
    PackingConfig { budget, m, image_token_cost, image_cap }
}

pub fn apollo_cards() -> CardSet {
    let tree = build_tree(&apollo_blocks()).unwrap().attach_upper_context();
    CardSet::new(vec![build_doc_card(&tree, 512)], build_sec_cards(&tree))
}

fn apollo_sims() -> SimTable {
    SimTable::new(&[
        ("apollo/c1", "apollo/landing", 0.8),
        ("apollo/c1", "apollo/p51", 0.7),
        ("apollo/c1", "apollo/c2", 0.6),
        ("apollo/c1", "apollo/c3", 0.5),
    ])
}

#[allow(clippy::vec_init_then_push)]
pub fn fixtures() -> Vec<PackFixture> {
    use UnitType::{Image, Table, Text};
    let t = |h: &str, id: &str, w: usize| unit("d", "T", h, id, Text, w, 0);
    let mut out = Vec::new();

    // meta 6 + a1 (4+2+4) = 16.
    out.push(PackFixture {
        name: "single anchor fits exactly",
        cards: card_set(vec![doc_cards("d", "T", vec![("A", vec![t("A", "a1", 3)])])]),
        sims: SimTable::default(),
        anchors: vec!["a1"],
        config: cfg(16, 5, 10, 8),
        expected: vec![anchor("a1")],
        expected_total: 16,
    });

    // 16 > 15: the Phase 1 gate skips the only anchor.
    out.push(PackFixture {
        name: "anchor larger than budget",
        cards: card_set(vec![doc_cards("d", "T", vec![("A", vec![t("A", "a1", 3)])])]),
        sims: SimTable::default(),
        anchors: vec!["a1"],
        config: cfg(15, 5, 10, 8),
        expected: vec![],
        expected_total: 0,
    });

    // meta 6 + a1 10 + a2 8 = 24; a3 (12) -> 36 > 33 skipped; a4 (8) -> 32.
    out.push(PackFixture {
        name: "sibling skipped, later sibling admitted",
        cards: card_set(vec![doc_cards(
            "d",
            "T",
            vec![("A", vec![t("A", "a1", 3), t("A", "a2", 1), t("A", "a3", 5), t("A", "a4", 1)])],
        )]),
        sims: SimTable::default(),
        anchors: vec!["a1"],
        config: cfg(33, 5, 10, 8),
        expected: vec![anchor("a1"), sib("a2", "a1"), sib("a4", "a1")],
        expected_total: 32,
    });

    // Top-2 associates of a1 are b1 (Text, filtered) and b2 (Table, 4+2+2+10 = 18);
    // b3 ranks third. meta 6 + a1 9 + b2 18 = 33.
    out.push(PackFixture {
        name: "phase 3 admits visual associates only",
        cards: card_set(vec![doc_cards(
            "d",
            "T",
            vec![
                ("A", vec![t("A", "a1", 2)]),
                (
                    "B",
                    vec![
                        t("B", "b1", 1),
                        unit("d", "T", "B", "b2", Table, 1, 0),
                        unit("d", "T", "B", "b3", Image, 0, 0),
                    ],
                ),
            ],
        )]),
        sims: SimTable::new(&[("a1", "b1", 0.9), ("a1", "b2", 0.8), ("a1", "b3", 0.1)]),
        anchors: vec!["a1"],
        config: cfg(1000, 2, 10, 8),
        expected: vec![anchor("a1"), crop(assoc("b2", "a1"))],
        expected_total: 33,
    });

    // a2 enters as a1's sibling; as the second anchor it is not charged again.
    // meta 6 + 8 + 8 = 22.
    out.push(PackFixture {
        name: "anchor already admitted is not duplicated",
        cards: card_set(vec![doc_cards("d", "T", vec![("A", vec![t("A", "a1", 1), t("A", "a2", 1)])])]),
        sims: SimTable::default(),
        anchors: vec!["a1", "a2"],
        config: cfg(100, 5, 10, 8),
        expected: vec![anchor("a1"), sib("a2", "a1")],
        expected_total: 22,
    });

    // Images cost 6 + 10 with a crop, 6 without. Cap 2: third image ships
    // without its crop. meta 6 + 16 + 16 + 6 = 44.
    out.push(PackFixture {
        name: "image cap drops the third crop",
        cards: card_set(vec![doc_cards(
            "d",
            "T",
            vec![(
                "A",
                vec![
                    unit("d", "T", "A", "a1", Image, 0, 0),
                    unit("d", "T", "A", "a2", Image, 0, 0),
                    unit("d", "T", "A", "a3", Image, 0, 0),
                ],
            )],
        )]),
        sims: SimTable::default(),
        anchors: vec!["a1"],
        config: cfg(100, 5, 10, 2),
        expected: vec![crop(anchor("a1")), crop(sib("a2", "a1")), sib("a3", "a1")],
        expected_total: 44,
    });

    // Second document header `ID: e | Title: U V` costs 7.
    // 6 + 8 + 7 + 8 = 29.
    let two_docs = || {
        card_set(vec![
            doc_cards("d", "T", vec![("A", vec![t("A", "a1", 1)])]),
            doc_cards("e", "U V", vec![("C", vec![unit("e", "U V", "C", "c1", Text, 1, 0)])]),
        ])
    };
    out.push(PackFixture {
        name: "two documents, both headers charged",
        cards: two_docs(),
        sims: SimTable::default(),
        anchors: vec!["a1", "c1"],
        config: cfg(29, 5, 10, 8),
        expected: vec![anchor("a1"), anchor("c1")],
        expected_total: 29,
    });
    out.push(PackFixture {
        name: "second document header does not fit",
        cards: two_docs(),
        sims: SimTable::default(),
        anchors: vec!["a1", "c1"],
        config: cfg(28, 5, 10, 8),
        expected: vec![anchor("a1")],
        expected_total: 14,
    });

    // a1 needs 6 + 27 = 33 > 30 and is skipped with its phases; b1 14, b2 16.
    out.push(PackFixture {
        name: "skipped anchor does not expand",
        cards: card_set(vec![doc_cards(
            "d",
            "T",
            vec![
                ("A", vec![t("A", "a1", 20), t("A", "a2", 1)]),
                ("B", vec![t("B", "b1", 1), unit("d", "T", "B", "b2", Image, 0, 0)]),
            ],
        )]),
        sims: SimTable::new(&[("a1", "b2", 0.9)]),
        anchors: vec!["a1", "b1"],
        config: cfg(30, 5, 10, 8),
        expected: vec![anchor("b1"), crop(sib("b2", "b1"))],
        expected_total: 30,
    });

    // 12 units, 3 anchors. 6 + a1..a4 (4 x 8) = 38; b2 46; b1 54; b3 (12) -> 66 > 63
    // skipped; b4 62; anchor c3 (8) -> 70 skipped.
    let twelve = {
        let sec = |h: &'static str, sizes: [usize; 4]| {
            let p = h.to_lowercase();
            (h, (0..4).map(|i| t(h, &format!("{p}{}", i + 1), sizes[i])).collect::<Vec<_>>())
        };
        card_set(vec![doc_cards(
            "d",
            "T",
            vec![sec("A", [1, 1, 1, 1]), sec("B", [1, 1, 5, 1]), sec("C", [1, 1, 1, 1])],
        )])
    };
    out.push(PackFixture {
        name: "budget cuts phase 2 of the second anchor",
        cards: twelve,
        sims: SimTable::default(),
        anchors: vec!["a1", "b2", "c3"],
        config: cfg(63, 5, 10, 8),
        expected: vec![
            anchor("a1"),
            sib("a2", "a1"),
            sib("a3", "a1"),
            sib("a4", "a1"),
            anchor("b2"),
            sib("b1", "b2"),
            sib("b4", "b2"),
        ],
        expected_total: 62,
    });

    // Apollo: meta 7, c1 25, c2 281, c3 273, landing 280.
    out.push(PackFixture {
        name: "apollo crew query",
        cards: apollo_cards(),
        sims: apollo_sims(),
        anchors: vec!["apollo/c1"],
        config: cfg(16_384, 5, 256, 8),
        expected: vec![
            anchor("apollo/c1"),
            crop(sib("apollo/c2", "apollo/c1")),
            crop(sib("apollo/c3", "apollo/c1")),
            crop(assoc("apollo/landing", "apollo/c1")),
        ],
        expected_total: 866,
    });

    // Same, budget 413: 7 + 25 + 281 = 313; c3 -> 586 and landing -> 593 both skipped.
    out.push(PackFixture {
        name: "apollo crew query, tight budget",
        cards: apollo_cards(),
        sims: apollo_sims(),
        anchors: vec!["apollo/c1"],
        config: cfg(413, 5, 256, 8),
        expected: vec![anchor("apollo/c1"), crop(sib("apollo/c2", "apollo/c1"))],
        expected_total: 313,
    });

    out
}

/// Packs a fixture and compares membership, roles, order, crops and the
/// final count with its hand trace.
pub fn check_fixture(fx: &PackFixture) -> Result<EvidenceSubgraph, String> {
    let anchors: Vec<(&EvidenceUnit, f64)> = fx
        .anchors
        .iter()
        .map(|id| {
            fx.cards
                .unit(id)
                .map(|u| (u, 1.0))
                .ok_or_else(|| format!("{}: unknown anchor {id}", fx.name))
        })
        .collect::<Result<_, _>>()?;
    let sim = |a: &EvidenceUnit, b: &EvidenceUnit| fx.sims.get(a, b);
    let sub = pack(&anchors, &fx.cards, &sim, fx.config, &WhitespaceCounter)
        .map_err(|e| format!("{}: {e}", fx.name))?;
    let got: Vec<(&str, Role, Option<&str>, bool)> = sub
        .members
        .iter()
        .map(|m| (m.unit.unit_id.as_str(), m.role, m.source_anchor_id.as_deref(), m.with_crop))
        .collect();
    let want: Vec<(&str, Role, Option<&str>, bool)> = fx
        .expected
        .iter()
        .map(|e| (e.unit_id, e.role, e.source, e.with_crop))
        .collect();
    if got != want {
        return Err(format!("{}: members {got:?} != {want:?}", fx.name));
    }
    if sub.total_tokens != fx.expected_total {
        return Err(format!(
            "{}: C = {} != {}",
            fx.name, sub.total_tokens, fx.expected_total
        ));
    }
    Ok(sub)
}

/// Structural invariants every packed subgraph must satisfy.
pub fn check_invariants(
    sub: &EvidenceSubgraph,
    anchors: &[(&EvidenceUnit, f64)],
    source: &dyn EvidenceSource,
    sim: &dyn Similarity,
    config: PackingConfig,
) -> Result<(), String> {
    let charged: usize = sub.members.iter().map(|m| m.tokens + m.doc_meta_tokens).sum();
    if charged != sub.total_tokens {
        return Err(format!("sum of entry costs {charged} != C {}", sub.total_tokens));
    }
    if sub.total_tokens as i64 > config.budget {
        return Err(format!("C {} exceeds budget {}", sub.total_tokens, config.budget));
    }
    let mut seen = std::collections::HashSet::new();
    let mut crops = 0;
    let mut anchor_pos = 0usize;
    for m in &sub.members {
        if !seen.insert(m.unit.unit_id.as_str()) {
            return Err(format!("{} packed twice", m.unit.unit_id));
        }
        if m.ancestry != m.unit.section_path {
            return Err(format!("{} ancestry differs from its section path", m.unit.unit_id));
        }
        if count_tokens(m, &WhitespaceCounter, config.image_token_cost) != m.tokens {
            return Err(format!("{} recorded cost differs from count_tokens", m.unit.unit_id));
        }
        crops += usize::from(m.with_crop);
        match m.role {
            Role::Anchor => {
                let pos = anchors[anchor_pos..]
                    .iter()
                    .position(|(a, _)| a.unit_id == m.unit.unit_id)
                    .ok_or_else(|| format!("anchor {} out of rank order", m.unit.unit_id))?;
                anchor_pos += pos + 1;
            }
            Role::Sibling => {
                let src = m.source_anchor_id.as_deref().ok_or("sibling without source")?;
                if !source.section_of(src).iter().any(|u| u.unit_id == m.unit.unit_id) {
                    return Err(format!("sibling {} not in the section of {src}", m.unit.unit_id));
                }
            }
            Role::SemanticAssociate => {
                let src = m.source_anchor_id.as_deref().ok_or("associate without source")?;
                let (anchor, _) = anchors
                    .iter()
                    .find(|(a, _)| a.unit_id == src)
                    .ok_or("associate source is not an anchor")?;
                let top = semantic_associates(anchor, source, sim, config.m);
                if !m.unit.unit_type.is_visual() || !top.iter().any(|u| u.unit_id == m.unit.unit_id) {
                    return Err(format!("associate {} not a visual top-M unit of {src}", m.unit.unit_id));
                }
            }
        }
    }
    if crops > config.image_cap {
        return Err(format!("{crops} crops exceed cap {}", config.image_cap));
    }
    Ok(())
}

mod common;

use hikey_core::corpus::{CorpusIndex, IndexConfig};
use hikey_core::embed::{EmbedderSpec, PrecomputedStore};
use hikey_core::hierarchy::EvidenceUnit;
use hikey_core::packing::{pack, render_prompt, semantic_associates, PackingConfig, Role, WhitespaceCounter};
use hikey_core::retrieval::{retrieve, RetrievalConfig};
use hikey_core::Error;

use common::apollo_blocks;
use common::packing::{apollo_cards, check_fixture, fixtures, SimTable};

#[test]
fn hand_traced_fixtures() {
    let all = fixtures();
    assert!(all.len() >= 10);
    for fx in &all {
        check_fixture(fx).unwrap();
    }
}

#[test]
fn apollo_serialization_is_exact() {
    let fx = fixtures().into_iter().find(|f| f.name == "apollo crew query").unwrap();
    let sub = check_fixture(&fx).unwrap();
    let expected = "\
[DOC_META]
ID: apollo | Title: Apollo 11

[UNIT id=apollo/c1 | Type=Text]
Path: 3 Mission personnel > 3.1 Prime crew
Content: The prime crew consisted of Neil Armstrong, Michael Collins and Buzz Aldrin.

[UNIT id=apollo/c2 | Type=Table]
Path: 3 Mission personnel > 3.1 Prime crew
Caption: Table 1: Prime crew
Content: Position | Astronaut Commander | Neil Armstrong
Visual: <|image_token_1|>

[UNIT id=apollo/c3 | Type=Figure]
Path: 3 Mission personnel > 3.1 Prime crew
Caption: Figure 2: Crew portrait
Visual: <|image_token_2|>

[UNIT id=apollo/landing | Type=Table]
Path: 5 Mission events > 5.1 Landing
Caption: Table 3: Landing timeline
Content: Event | Time Touchdown | 20:17:40 UTC
Visual: <|image_token_3|>

";
    assert_eq!(sub.serialize(), expected);
    // Whitespace tokens of the text plus crops, with each placeholder line
    // (2 tokens) replaced by the fixed crop cost.
    let words = expected.split_whitespace().count();
    assert_eq!(sub.total_tokens, words - 3 * 2 + 3 * 256);
}

#[test]
fn dotted_headers_appear_verbatim_in_path() {
    let blocks: Vec<_> = apollo_blocks()
        .into_iter()
        .map(|mut b| {
            b.text = match b.block_id.as_str() {
                "h3" => "3. Mission personnel".into(),
                "h31" => "3.1. Prime crew".into(),
                _ => b.text,
            };
            b
        })
        .collect();
    let index = CorpusIndex::build(blocks, IndexConfig::default()).unwrap();
    let c1 = index.unit(index.unit_ordinal("apollo/c1").unwrap());
    let sub = pack(&[(c1, 1.0)], &index, &index, PackingConfig::default(), &WhitespaceCounter).unwrap();
    assert!(sub
        .serialize()
        .contains("[UNIT id=apollo/c1 | Type=Text]\nPath: 3. Mission personnel > 3.1. Prime crew\n"));
}

/// Precomputed vectors where the landing table's crop sits next to the crew
/// paragraph, so retrieval plus packing reproduces the walkthrough end to end.
#[test]
fn apollo_end_to_end_with_precomputed_vectors() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = PrecomputedStore::new(4);
    let query = "Who was on the prime crew?";
    for (key, v) in [
        ("apollo", [1.0, 1.0, 0.0, 0.0]),
        ("apollo/c1", [1.0, 0.0, 0.0, 0.0]),
        ("apollo/c2", [0.5, 0.5, 0.0, 0.0]),
        ("apollo/c3", [0.5, 0.0, 0.5, 0.0]),
        ("apollo/p51", [0.0, 0.0, 0.0, 1.0]),
        ("apollo/landing", [0.0, 0.0, 0.2, 1.0]),
        ("crops/apollo/c2.png", [0.0, 1.0, 0.0, 0.0]),
        ("crops/apollo/c3.png", [0.0, 0.0, 1.0, 0.0]),
        ("crops/apollo/landing.png", [0.9, 0.1, 0.0, 0.0]),
        (query, [1.0, 0.0, 0.0, 0.0]),
    ] {
        store.insert(key, v.to_vec()).unwrap();
    }
    store.save(dir.path()).unwrap();
    let config = IndexConfig {
        embedder: EmbedderSpec::File { path: dir.path().to_path_buf() },
        ..IndexConfig::default()
    };
    let index = CorpusIndex::build(apollo_blocks(), config).unwrap();
    let cfg = RetrievalConfig { k_sec: 1, ..RetrievalConfig::default() };
    let result = retrieve(&index, query, &cfg).unwrap();
    assert_eq!(result.sections[0].sec_id, "apollo#h31");
    assert_eq!(result.sections[0].anchor.unit_id, "apollo/c1");

    let anchors: Vec<(&EvidenceUnit, f64)> = result
        .sections
        .iter()
        .map(|s| (index.unit(index.unit_ordinal(&s.anchor.unit_id).unwrap()), s.final_score))
        .collect();
    let sub = pack(&anchors, &index, &index, PackingConfig::default(), &WhitespaceCounter).unwrap();
    let got: Vec<(&str, Role)> = sub.members.iter().map(|m| (m.unit.unit_id.as_str(), m.role)).collect();
    assert_eq!(
        got,
        [
            ("apollo/c1", Role::Anchor),
            ("apollo/c2", Role::Sibling),
            ("apollo/c3", Role::Sibling),
            ("apollo/landing", Role::SemanticAssociate),
        ]
    );
    assert_eq!(sub.members[3].ancestry.join(" > "), "Apollo 11 > 5 Mission events > 5.1 Landing");
}

#[test]
fn semantic_associates_match_brute_force() {
    use hikey_core::hierarchy::UnitType;
    let units: Vec<EvidenceUnit> = (0..10)
        .map(|i| common::packing::unit("d", "T", "A", &format!("u{i}"), UnitType::Table, 1, 0))
        .collect();
    let cards = common::packing::card_set(vec![common::packing::doc_cards("d", "T", vec![("A", units.clone())])]);
    let sims = [0.3, 0.9, 0.1, 0.9, 0.5, 0.2, 0.7, 0.0, 0.4];
    let pairs: Vec<(String, String, f64)> = (1..10).map(|i| ("u0".to_string(), format!("u{i}"), sims[i - 1])).collect();
    let pairs: Vec<(&str, &str, f64)> = pairs.iter().map(|(a, b, v)| (a.as_str(), b.as_str(), *v)).collect();
    let table = SimTable::new(&pairs);
    let sim = |a: &EvidenceUnit, b: &EvidenceUnit| table.get(a, b);

    let got: Vec<&str> = semantic_associates(&units[0], &cards, &sim, 3)
        .into_iter()
        .map(|u| u.unit_id.as_str())
        .collect();
    // Brute force: sort every other unit by (-sim, id) and keep three.
    let mut all: Vec<(f64, String)> = (1..10).map(|i| (sims[i - 1], format!("u{i}"))).collect();
    all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let want: Vec<&str> = all.iter().take(3).map(|(_, id)| id.as_str()).collect();
    assert_eq!(got, want);
    assert_eq!(got, ["u2", "u4", "u7"]);

    assert!(semantic_associates(&units[0], &cards, &sim, 0).is_empty());
}

#[test]
fn two_unit_document_has_one_associate() {
    let cards = apollo_cards();
    let c1 = cards.unit("apollo/c1").unwrap();
    let sim = |_: &EvidenceUnit, _: &EvidenceUnit| 0.0;
    assert_eq!(semantic_associates(c1, &cards, &sim, 100).len(), 4);
    let tiny = common::packing::card_set(vec![common::packing::doc_cards(
        "d",
        "T",
        vec![(
            "A",
            vec![
                common::packing::unit("d", "T", "A", "a", hikey_core::hierarchy::UnitType::Text, 1, 0),
                common::packing::unit("d", "T", "A", "b", hikey_core::hierarchy::UnitType::Text, 1, 0),
            ],
        )],
    )]);
    let a = tiny.unit("a").unwrap();
    assert_eq!(semantic_associates(a, &tiny, &sim, 5).len(), 1);
}

#[test]
fn non_positive_budget_is_rejected() {
    let cards = apollo_cards();
    let c1 = cards.unit("apollo/c1").unwrap();
    let sim = |_: &EvidenceUnit, _: &EvidenceUnit| 0.0;
    for budget in [0, -5] {
        let cfg = PackingConfig { budget, ..PackingConfig::default() };
        let err = pack(&[(c1, 1.0)], &cards, &sim, cfg, &WhitespaceCounter).unwrap_err();
        assert!(matches!(err, Error::InvalidBudget(b) if b == budget));
    }
}

#[test]
fn packing_twice_is_byte_identical() {
    let fx = fixtures().into_iter().find(|f| f.name == "apollo crew query").unwrap();
    let a = check_fixture(&fx).unwrap().serialize();
    let b = check_fixture(&fx).unwrap().serialize();
    assert_eq!(a, b);
}

#[test]
fn prompt_wraps_question_and_context() {
    let fx = fixtures().into_iter().find(|f| f.name == "apollo crew query").unwrap();
    let ctx = check_fixture(&fx).unwrap().serialize();
    let prompt = render_prompt("Who was on the prime crew?", &ctx);
    assert!(prompt.contains("[Question]\nWho was on the prime crew?\n"));
    assert!(prompt.contains("[Context]\n[DOC_META]\n"));
    assert!(prompt.ends_with("[Answer]\n"));
    assert!(prompt.contains("using only the [Context]"));
}

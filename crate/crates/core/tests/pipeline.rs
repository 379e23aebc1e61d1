use std::collections::BTreeSet;
use std::sync::{Mutex, OnceLock};

use setexpand::corpus::{parse_plain_text, Corpus, IngestConfig};
use setexpand::evaluation::{
    evaluate_queries, generate_synthetic_corpus, resolve_gold, sample_queries, EvalConfig, EvalQuery, GoldClass,
    SyntheticSpec,
};
use setexpand::expansion::{build_training_set, train_mlp, Category, ExpandConfig, TrainingSetConfig};
use setexpand::pipeline::{SetExpander, Stage, TrainConfig};
use setexpand::similarity::SeedSet;
use setexpand::{ContextType, Engine, Error, GroupId};

fn small_config() -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.embedding.threads = 1;
    cfg.embedding.dim = 32;
    cfg.embedding.epochs = 3;
    cfg.mlp.epochs = 10;
    cfg
}

struct Fixture {
    engine: Engine,
    gold: Vec<GoldClass>,
    events: Vec<(Stage, bool)>,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let synth = generate_synthetic_corpus(&SyntheticSpec::uniform(5, 10, 6000, 3).unwrap()).unwrap();
        let corpus = Corpus::new(synth.documents().unwrap()).unwrap();
        let events = Mutex::new(Vec::new());
        let engine = SetExpander::train(corpus, None, &small_config(), &|s, done| {
            events.lock().unwrap().push((s, done))
        })
        .unwrap();
        let gold = resolve_gold(&synth.gold, engine.term_index());
        Fixture {
            engine,
            gold,
            events: events.into_inner().unwrap(),
        }
    })
}

fn seeds_of(class: &GoldClass, n: usize) -> SeedSet {
    SeedSet::new(class.members.iter().take(n).copied().collect()).unwrap()
}

#[test]
fn every_stage_starts_and_finishes_in_order() {
    let ev = &fixture().events;
    let mut stages = vec![Stage::Terms, Stage::Grouping, Stage::Indexing, Stage::Contexts];
    stages.extend(ContextType::ALL.iter().map(|t| Stage::Embedding(*t)));
    stages.push(Stage::Mlp);
    for s in &stages {
        let start = ev.iter().position(|e| *e == (*s, false));
        let end = ev.iter().position(|e| *e == (*s, true));
        assert!(start.is_some() && end.is_some() && start < end, "{s}: {ev:?}");
    }
    assert_eq!(ev.last(), Some(&(Stage::Mlp, true)));
}

#[test]
fn gold_members_are_all_known_terms() {
    let f = fixture();
    assert_eq!(f.gold.len(), 5);
    for c in &f.gold {
        assert_eq!(c.members.len(), 10, "{}", c.name);
    }
}

#[test]
fn save_and_load_reproduce_expansion() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    f.engine.save(dir.path()).unwrap();
    let back = Engine::load(dir.path()).unwrap();
    let seeds = seeds_of(&f.gold[1], 3);
    let a = serde_json::to_string(&f.engine.expand(&seeds, &ExpandConfig::default()).unwrap()).unwrap();
    let b = serde_json::to_string(&back.expand(&seeds, &ExpandConfig::default()).unwrap()).unwrap();
    assert_eq!(a, b);
    assert_eq!(back.groups(), f.engine.groups());
}

#[test]
fn expansion_contract() {
    let f = fixture();
    let seeds = seeds_of(&f.gold[0], 2);
    let out = f.engine.expand(&seeds, &ExpandConfig::default()).unwrap();
    assert_eq!(out.len(), 2 + ExpandConfig::default().k);
    assert!(out[..2].iter().all(|c| c.is_seed && c.certainty == 1.0));
    assert!(out[2..].iter().all(|c| !c.is_seed && !seeds.contains(c.group_id)));
    let ids: BTreeSet<GroupId> = out.iter().map(|c| c.group_id).collect();
    assert_eq!(ids.len(), out.len());
    for w in out[2..].windows(2) {
        assert!(w[0].certainty > w[1].certainty || (w[0].certainty == w[1].certainty && w[0].group_id < w[1].group_id));
    }

    let none = ExpandConfig {
        k: 0,
        ..ExpandConfig::default()
    };
    assert_eq!(f.engine.expand(&seeds, &none).unwrap().len(), 2);

    let strict = ExpandConfig {
        threshold: Some(0.5),
        ..ExpandConfig::default()
    };
    let kept = f.engine.expand(&seeds, &strict).unwrap();
    assert!(kept[2..].iter().all(|c| c.certainty >= 0.5));

    let unknown = SeedSet::new(vec![9_999_999]).unwrap();
    assert!(matches!(
        f.engine.expand(&unknown, &ExpandConfig::default()),
        Err(Error::UnknownTerm(9_999_999))
    ));
}

#[test]
fn same_class_terms_lead_the_expansion() {
    let f = fixture();
    for class in &f.gold {
        let seeds = seeds_of(class, 3);
        let out = f.engine.expand(&seeds, &ExpandConfig::default()).unwrap();
        let top: Vec<GroupId> = out[3..10].iter().map(|c| c.group_id).collect();
        assert!(top.iter().all(|g| class.members.contains(g)), "{}: {top:?}", class.name);
    }
}

#[test]
fn term_table_pages_and_filters() {
    let e = &fixture().engine;
    let all = e.terms(None, 5000, 0);
    assert!(all.len() >= 50);
    assert!(all.windows(2).all(|w| w[0].tfidf >= w[1].tfidf));
    assert_eq!(e.terms(None, 5, 5), all[5..10].to_vec());
    let probe = all[0].display_name.chars().take(3).collect::<String>();
    let hits = e.terms(Some(&probe), 5000, 0);
    assert!(!hits.is_empty());
    assert!(hits.len() <= all.len());
    assert!(e.terms(Some("no such term anywhere"), 10, 0).is_empty());
}

#[test]
fn snippets_are_bounded_and_point_at_the_term() {
    let e = &fixture().engine;
    let row = &e.terms(None, 1, 0)[0];
    let snips = e.snippets(row.group_id, 4).unwrap();
    assert_eq!(snips.len(), 4);
    assert!(matches!(e.snippets(9_999_999, 4), Err(Error::UnknownTerm(_))));
}

#[test]
fn excluding_every_member_is_rejected() {
    let mut e = fixture().engine.clone();
    let g = e.terms(None, 1, 0)[0].clone();
    assert!(matches!(e.exclude(g.group_id, &g.members), Err(Error::EmptyGroup(_))));
    assert!(matches!(e.exclude(9_999_999, &[]), Err(Error::UnknownTerm(_))));
}

#[test]
fn validating_a_true_member_does_not_lower_map() {
    let f = fixture();
    let cfg = EvalConfig {
        queries_per_class: 4,
        min_seeds: 2,
        max_seeds: 2,
        cutoffs: vec![10],
        seed: 11,
    };
    let queries = sample_queries(&f.gold, &cfg).unwrap();
    assert_eq!(queries.len(), 20);
    let mut first = Vec::new();
    let mut second = Vec::new();
    for q in &queries {
        let seeds = SeedSet::new(q.seeds.clone()).unwrap();
        let out = f.engine.expand(&seeds, &ExpandConfig::default()).unwrap();
        let mut cat = Category::new("c", q.seeds.clone(), out.clone()).unwrap();
        let hit = out
            .iter()
            .find(|c| !c.is_seed && q.relevant.contains(&c.group_id))
            .unwrap();
        cat.validate(hit.group_id, true).unwrap();
        let re = f.engine.reexpand(&mut cat, &ExpandConfig::default(), true).unwrap();
        assert_eq!(cat.history.len(), 2);
        assert!(re
            .iter()
            .any(|c| c.group_id == hit.group_id && c.is_seed && c.validated));
        let relevant: BTreeSet<GroupId> = q.relevant.iter().copied().filter(|g| *g != hit.group_id).collect();
        first.push(EvalQuery {
            class: q.class.clone(),
            seeds: q.seeds.clone(),
            relevant: relevant.clone(),
        });
        let mut seeds2 = q.seeds.clone();
        seeds2.push(hit.group_id);
        second.push(EvalQuery {
            class: q.class.clone(),
            seeds: seeds2,
            relevant,
        });
    }
    let before = evaluate_queries(&f.engine, &first, &[10]).unwrap().map[&10];
    let after = evaluate_queries(&f.engine, &second, &[10]).unwrap().map[&10];
    assert!(after >= before, "{after} < {before}");
}

#[test]
fn mlp_generalizes_to_held_out_classes() {
    let f = fixture();
    let (train_gold, test_gold) = f.gold.split_at(3);
    let cfg = TrainingSetConfig::default();
    let train = build_training_set(train_gold, f.engine.models(), &cfg).unwrap();
    let test = build_training_set(test_gold, f.engine.models(), &TrainingSetConfig { seed: 99, ..cfg }).unwrap();
    let mlp = train_mlp(&train, &f.engine.config().mlp).unwrap();
    let correct = test
        .iter()
        .filter(|ex| {
            let p = mlp.predict(&ex.features.values).unwrap();
            (p >= 0.5) == ex.label
        })
        .count();
    let acc = correct as f64 / test.len() as f64;
    assert!(acc >= 0.9, "held-out accuracy {acc}");
}

#[test]
fn plain_text_corpus_trains_without_dependency_contexts() {
    let synth = generate_synthetic_corpus(&SyntheticSpec::uniform(3, 8, 2500, 5).unwrap()).unwrap();
    let text: String = synth
        .documents()
        .unwrap()
        .iter()
        .flat_map(|d| d.sentences.iter().map(|s| s.text()))
        .collect::<Vec<_>>()
        .join("\n");
    let corpus = Corpus::new(parse_plain_text(&text, "plain", &IngestConfig::default())).unwrap();
    assert!(!corpus.has_dependencies());
    let e: Engine = SetExpander::train(corpus, None, &small_config(), &|_, _| {}).unwrap();
    assert!(e.models().get(ContextType::Dep).is_empty());
    assert!(!e.models().get(ContextType::List).is_empty());
    let gold = resolve_gold(&synth.gold, e.term_index());
    let out = e.expand(&seeds_of(&gold[0], 2), &ExpandConfig::default()).unwrap();
    assert!(out
        .iter()
        .all(|c| c.features.values[4] == 0.0 && c.features.values[5] == 0.0));
}

#[test]
fn empty_corpus_is_rejected() {
    assert!(matches!(Corpus::new(Vec::new()), Err(Error::EmptyCorpus)));
    assert!(matches!(
        Corpus::new(parse_plain_text("   \n\n", "d", &IngestConfig::default())),
        Err(Error::EmptyCorpus)
    ));
}

#[test]
fn fruit_seeds_rank_fruit_above_other_classes() {
    let synth = generate_synthetic_corpus(&SyntheticSpec::fruit_citrus(3, 10, 40_000, 21).unwrap()).unwrap();
    let corpus = Corpus::new(synth.documents().unwrap()).unwrap();
    let mut cfg = TrainConfig::default();
    cfg.embedding.threads = 1;
    let e: Engine = SetExpander::train(corpus, None, &cfg, &|_, _| {}).unwrap();
    let id = |t: &str| e.lookup(t).unwrap();
    let gold = resolve_gold(&synth.gold, e.term_index());
    let fruit = &gold.iter().find(|c| c.name == "fruit").unwrap().members;
    let out = e
        .expand(
            &SeedSet::new(vec![id("orange"), id("banana")]).unwrap(),
            &ExpandConfig::default(),
        )
        .unwrap();
    let pos = |g: GroupId| out.iter().position(|c| c.group_id == g).unwrap();
    let first_outsider = out.iter().position(|c| !fruit.contains(&c.group_id)).unwrap();
    assert!(pos(id("apple")) < first_outsider);
    assert!(pos(id("lemon")) < first_outsider);
}

mod common;

use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thought_planner::config::{EngineConfig, TaskMode};
use thought_planner::eval::metrics::{exact_match, normalize_answer, rouge_l, rouge_l_tokens, token_f1};
use thought_planner::generator::SimulatedGenerator;
use thought_planner::mdp::{episodic_return, Action, EpisodeConfig, NodeId, ThoughtGraph, ThoughtKind};
use thought_planner::planner::{
    backpropagate, greedy_search, run_search, select, uct_value, CorpusPort, GreedyPorts, QueryMode, SearchPorts,
};
use thought_planner::retrieval::{chunk_text, ingest_corpus, CorpusIndex, Embedder, EmbedderChoice};
use thought_planner::scoring::{self_critic_probability, ConstantScorer, OracleScorer};
use thought_planner::sim::{generate_world, SimWorld, SimWorldConfig};
use thought_planner::trace::Trace;

use common::{ancestor_set, random_graph, rouge_reference, select_reference, uct_reference};

fn small_world() -> (SimWorld, CorpusIndex, Arc<dyn Embedder>) {
    let world = generate_world(&SimWorldConfig {
        train_tasks: 0,
        test_tasks: 6,
        ..Default::default()
    });
    let index = ingest_corpus(&world.records, 500, EmbedderChoice::Hashed { dim: 128 }).unwrap();
    let emb = index.embedder(None).unwrap();
    (world, index, emb)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graphs_stay_acyclic_append_only_and_replayable(seed in any::<u64>(), n in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, n);
        prop_assert!(g.topological_order().is_some());
        for t in g.nodes() {
            prop_assert!(t.parents.iter().all(|p| p.0 < t.id.0));
            let expected = if t.kind == ThoughtKind::Generated { 2 } else { 0 };
            prop_assert_eq!(t.parents.len(), expected);
        }
        // replaying documents and history on a fresh graph rebuilds it
        let mut replay = ThoughtGraph::new(g.query_text(), g.max_steps()).unwrap();
        for t in g.nodes().iter().skip(1) {
            let before = replay.nodes().to_vec();
            match t.kind {
                ThoughtKind::Document => {
                    replay.add_document(t.doc_id.unwrap(), &t.text);
                }
                _ => {
                    replay.apply_transition(Action::new(t.parents[0], t.parents[1]), &t.text).unwrap();
                }
            }
            prop_assert_eq!(&replay.nodes()[..before.len()], &before[..]);
        }
        prop_assert_eq!(replay.nodes(), g.nodes());
        prop_assert_eq!(replay.history(), g.history());
    }

    #[test]
    fn return_collapses_to_discounted_terminal_reward(r in 0.0f64..1.0, t in 1usize..50, gamma in 0.01f64..=1.0) {
        let got = episodic_return(r, t, gamma).unwrap();
        prop_assert!((got - gamma.powi(t as i32) * r).abs() <= 1e-12);
        prop_assert_eq!(episodic_return(r, t, 1.0).unwrap(), r);
    }

    #[test]
    fn uct_matches_reference(q in 0.0f64..100.0, n in 1u64..10_000, big_n in 1u64..100_000, c in 0.0f64..5.0) {
        let a = uct_value(q, n, big_n, c);
        let b = uct_reference(q, n, big_n, c);
        prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
    }

    #[test]
    fn selection_matches_exhaustive_walk(seed in any::<u64>(), c in 0.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, 20);
        let got = select(&g, c);
        prop_assert_eq!(got, select_reference(&g, c));
        prop_assert!(g.nodes()[got.0].kind != ThoughtKind::Document);
    }

    #[test]
    fn backprop_updates_each_ancestor_once(seed in any::<u64>(), score in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = random_graph(&mut rng, 20);
        let from = NodeId(rng.gen_range(0..g.len()));
        let before = g.all_stats().to_vec();
        let ancestors = ancestor_set(&g, from);
        backpropagate(&mut g, from, score).unwrap();
        for (i, (old, new)) in before.iter().zip(g.all_stats()).enumerate() {
            if ancestors.contains(&NodeId(i)) {
                prop_assert_eq!(new.visits, old.visits + 1);
                prop_assert_eq!(new.cumulative_score, old.cumulative_score + score);
            } else {
                prop_assert_eq!(new.visits, old.visits);
                prop_assert_eq!(new.cumulative_score, old.cumulative_score);
            }
        }
    }

    #[test]
    fn visits_count_the_node_and_its_generated_descendants(seed in any::<u64>(), p_doc in 0.0f64..=1.0) {
        let (world, index, emb) = small_world();
        let ex = &world.examples[(seed % 6) as usize];
        let corpus = CorpusPort { index: &index, embedder: emb.as_ref(), query_mode: QueryMode::Raw };
        let gen = SimulatedGenerator::default();
        let scorer = OracleScorer::new(ex.task, ex.gold_answers.clone());
        let config = EpisodeConfig { p_doc, stop_threshold: 2.0, ..Default::default() };
        let ports = SearchPorts { generator: &gen, retriever: Some(corpus.retriever(ex.filter_key.as_deref())), scorer: &scorer };
        let out = run_search(&ex.query, ports, &config, seed).unwrap();
        let g = &out.graph;
        prop_assert_eq!(g.generated_count(), config.max_steps);
        let generated: Vec<NodeId> = g.generated_ids().collect();
        for v in g.thought_ids() {
            let descendants: Vec<NodeId> = generated.iter().copied().filter(|&d| ancestor_set(g, d).contains(&v)).collect();
            let own = u64::from(g.nodes()[v.0].kind == ThoughtKind::Generated);
            let s = g.stats(v).unwrap();
            prop_assert_eq!(s.visits, own + descendants.len() as u64);
            let sum: f64 = s.sim_score.unwrap_or(0.0)
                + descendants.iter().map(|d| g.stats(*d).unwrap().sim_score.unwrap()).sum::<f64>();
            prop_assert!((s.cumulative_score - sum).abs() < 1e-9);
        }
        for t in g.nodes().iter().filter(|t| t.kind == ThoughtKind::Document) {
            prop_assert_eq!(g.stats(t.id).unwrap().visits, 0);
        }
    }

    #[test]
    fn search_is_deterministic_per_seed(seed in any::<u64>()) {
        let (world, index, emb) = small_world();
        let ex = &world.examples[(seed % 6) as usize];
        let corpus = CorpusPort { index: &index, embedder: emb.as_ref(), query_mode: QueryMode::Raw };
        let gen = SimulatedGenerator::default();
        let scorer = OracleScorer::new(ex.task, ex.gold_answers.clone());
        let ports = SearchPorts { generator: &gen, retriever: Some(corpus.retriever(ex.filter_key.as_deref())), scorer: &scorer };
        let a = run_search(&ex.query, ports, &EpisodeConfig::default(), seed).unwrap();
        let b = run_search(&ex.query, ports, &EpisodeConfig::default(), seed).unwrap();
        prop_assert_eq!(Trace::from_outcome(&a, None).to_json(), Trace::from_outcome(&b, None).to_json());
    }

    #[test]
    fn greedy_choice_is_invariant_under_monotone_transforms(which in 0usize..6, scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
        let (world, index, emb) = small_world();
        let ex = &world.examples[which];
        let corpus = CorpusPort { index: &index, embedder: emb.as_ref(), query_mode: QueryMode::Raw };
        let gen = SimulatedGenerator::default();
        let base = |a: &str, b: &str| ((a.len() * 31 + b.len() * 7) % 101) as f64 / 101.0;
        let transformed = move |a: &str, b: &str| (base(a, b) * scale + shift).exp();
        let config = EpisodeConfig { stop_threshold: f64::MAX, ..Default::default() };
        let run = |est: &dyn thought_planner::scoring::PairEstimator| {
            let ports = GreedyPorts { generator: &gen, retriever: Some(corpus.retriever(ex.filter_key.as_deref())), estimator: est };
            greedy_search(&ex.query, ports, &config).unwrap()
        };
        let a = run(&base);
        let b = run(&transformed);
        prop_assert_eq!(a.graph.history(), b.graph.history());
        prop_assert_eq!(a.graph.nodes(), b.graph.nodes());
    }

    #[test]
    fn metrics_are_bounded_and_symmetric(a in "[a-e ]{0,20}", b in "[a-e ]{0,20}") {
        for v in [token_f1(&a, &b), rouge_l(&a, &b)] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert_eq!(token_f1(&a, &b), token_f1(&b, &a));
        prop_assert_eq!(rouge_l(&a, &b), rouge_l(&b, &a));
        prop_assert!(exact_match(&a, &[a.clone()]));
        prop_assert_eq!(normalize_answer(&normalize_answer(&a)), normalize_answer(&a));
    }

    #[test]
    fn rouge_matches_recursive_lcs(a in prop::collection::vec(0u8..6, 0..15), b in prop::collection::vec(0u8..6, 0..15)) {
        prop_assert!((rouge_l_tokens(&a, &b) - rouge_reference(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn self_critic_is_shift_invariant(l1 in -50.0f64..0.0, l0 in -50.0f64..0.0, s in -100.0f64..100.0) {
        let a = self_critic_probability(l1, l0);
        let b = self_critic_probability(l1 + s, l0 + s);
        prop_assert!((a - b).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&a));
        let p1 = l1.exp();
        let p0 = l0.exp();
        prop_assert!((a - p1 / (p1 + p0)).abs() < 1e-9);
    }

    #[test]
    fn chunks_reassemble_to_the_source_tokens(words in prop::collection::vec("[a-z]{1,6}", 0..300), chunk in 1usize..120) {
        let text = words.join(" ");
        let chunks = chunk_text(&text, chunk);
        prop_assert_eq!(chunks.len(), words.len().div_ceil(chunk));
        prop_assert!(chunks.iter().all(|c| c.split_whitespace().count() <= chunk));
        let rejoined: Vec<&str> = chunks.iter().flat_map(|c| c.split_whitespace()).collect();
        prop_assert_eq!(rejoined, words.iter().map(String::as_str).collect::<Vec<_>>());
    }

    #[test]
    fn config_round_trips(
        mode in 0usize..3,
        seed in any::<u64>(),
        workers in 1usize..16,
        max_steps in 1usize..40,
        p_doc in 0.0f64..=1.0,
        c in 0.0f64..4.0,
        chunk in 1usize..1000,
    ) {
        let mut cfg = EngineConfig::defaults([TaskMode::Boolq, TaskMode::Emrqa, TaskMode::Simulated][mode]);
        cfg.seed = seed;
        cfg.workers = workers;
        cfg.search.max_steps = max_steps;
        cfg.search.p_doc = p_doc;
        cfg.search.exploration_c = c;
        cfg.retrieval.chunk_words = chunk;
        let text = cfg.to_toml();
        let back = EngineConfig::parse(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_toml(), text);
        prop_assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn traces_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, 20);
        let json = Trace::from_graph(&g).to_json();
        let parsed = Trace::parse(&json).unwrap();
        prop_assert_eq!(parsed.to_json(), json);
        prop_assert_eq!(parsed.to_graph().unwrap(), g);
    }
}

#[test]
fn constant_scorers_bound_the_search() {
    let gen = SimulatedGenerator::default();
    for (score, thoughts) in [(1.0, 1), (0.0, 10)] {
        let ports = SearchPorts {
            generator: &gen,
            retriever: None,
            scorer: &ConstantScorer(score),
        };
        let out = run_search("ask:a+b which", ports, &EpisodeConfig::default(), 9).unwrap();
        assert_eq!(out.graph.generated_count(), thoughts);
    }
}

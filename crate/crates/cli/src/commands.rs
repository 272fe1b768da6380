use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use thought_planner::config::{EmbedderConfig, EngineConfig};
use thought_planner::eval::{
    accuracy_vs_size_curve, load_examples, run_benchmark_with_traces, write_curve_csv, write_examples,
    write_rows_csv, BenchmarkConfig, BenchmarkPorts, BenchmarkReport, LoadOptions, Method, Split,
};
use thought_planner::planner::{greedy_search, run_search, GreedyPorts, SearchPorts};
use thought_planner::retrieval::{ingest_corpus, load_directory, load_records, EmbedderChoice, SourceRecord};
use thought_planner::scoring::{
    collect_offline_dataset, train_estimator, write_dataset, CollectionSetup, OracleScorer, Scorer, ScorerKind,
    SelfCriticScorer,
};
use thought_planner::sim::generate_world;
use thought_planner::trace::Trace;

use crate::setup;
use crate::{Cli, Command, ConfigIssue, LoadArgs, Policy, SplitArg, TraceFormat};

pub fn dispatch(cli: Cli) -> Result<()> {
    let cfg = setup::load_config(&cli.global)?;
    match cli.command {
        Command::Ingest {
            corpus,
            out,
            filter_from_dir,
        } => ingest(&cfg, &corpus, &out, filter_from_dir),
        Command::Simulate { out_dir } => simulate(&cfg, &out_dir),
        Command::Run {
            query,
            gold,
            filter,
            policy,
            trace,
        } => run(&cfg, &query, gold, filter.as_deref(), policy, &trace),
        Command::TrainScorer {
            train,
            out,
            dataset_out,
            max_holdout_mse,
            load,
        } => train_scorer(&cfg, &train, &out, dataset_out.as_deref(), max_holdout_mse, &load),
        Command::Eval {
            dataset,
            methods,
            out_dir,
            sweep,
            traces,
            load,
        } => eval(&cfg, &dataset, &methods, &out_dir, &sweep, traces, &load),
        Command::ExportTrace { trace, format, out } => export_trace(&trace, format, out.as_deref()),
        Command::ShowConfig => {
            print!("# config hash {}\n{}", cfg.hash(), cfg.to_toml());
            Ok(())
        }
    }
}

fn load_options(args: &LoadArgs) -> Result<LoadOptions> {
    let split_counts = match args.split_counts.as_deref() {
        None => None,
        Some([train, test]) => Some((*train, *test)),
        Some(_) => return Err(ConfigIssue("--split-counts takes TRAIN,TEST".into()).into()),
    };
    Ok(LoadOptions {
        mg_only: args.mg_only,
        split_counts,
        keep: args.split.map(|s| match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }),
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

fn ingest(cfg: &EngineConfig, corpus: &Path, out: &Path, filter_from_dir: bool) -> Result<()> {
    let records: Vec<SourceRecord> = if corpus.is_dir() {
        load_directory(corpus, |rel| {
            filter_from_dir
                .then(|| rel.split_once('/').map(|(top, _)| top.to_string()))
                .flatten()
        })?
    } else {
        load_records(corpus)?
    };
    let choice = match setup::external_embedder(cfg)? {
        Some(e) => EmbedderChoice::External(e),
        None => match cfg.retrieval.embedder {
            EmbedderConfig::Hashed { dim } => EmbedderChoice::Hashed { dim },
            EmbedderConfig::Remote { .. } => unreachable!("remote embedder resolved above"),
        },
    };
    let index = ingest_corpus(&records, cfg.retrieval.chunk_words, choice)
        .with_context(|| format!("ingesting {}", corpus.display()))?;
    index.save(out)?;
    println!(
        "sources: {}\nchunks: {}\nchunk_words: {}\nembedder: {}",
        records.len(),
        index.len(),
        index.chunk_words,
        index.embedder_id
    );
    Ok(())
}

fn simulate(cfg: &EngineConfig, out_dir: &Path) -> Result<()> {
    create_dir(out_dir)?;
    let world = generate_world(&cfg.sim);
    write_jsonl(&out_dir.join("corpus.jsonl"), &world.records)?;
    let train = world.split(Split::Train);
    let test = world.split(Split::Test);
    write_examples(&out_dir.join("train.jsonl"), &train)?;
    write_examples(&out_dir.join("test.jsonl"), &test)?;
    println!(
        "documents: {}\ntrain examples: {}\ntest examples: {}",
        world.records.len(),
        train.len(),
        test.len()
    );
    Ok(())
}

fn run(
    cfg: &EngineConfig,
    query: &str,
    gold: Vec<String>,
    filter: Option<&str>,
    policy: Policy,
    trace_path: &Path,
) -> Result<()> {
    let generator = setup::generator(cfg)?;
    let corpus = setup::corpus(cfg)?;
    let port = corpus.as_ref().map(|c| c.port(cfg));
    let retriever = port.map(|p| p.retriever(filter));

    let needs_estimator = policy == Policy::Greedy || cfg.scorer == ScorerKind::Estimation;
    let estimator = if needs_estimator {
        let e = setup::estimator(cfg, corpus.as_ref())?;
        Some(e.ok_or_else(|| ConfigIssue("the estimation scorer needs a model file (--model)".into()))?)
    } else {
        None
    };
    let oracle;
    let scorer: &dyn Scorer = match cfg.scorer {
        ScorerKind::Oracle => {
            if gold.is_empty() {
                return Err(ConfigIssue("the oracle scorer needs --gold".into()).into());
            }
            oracle = OracleScorer {
                task: cfg.task_mode.task_kind(),
                metric: cfg.reward_metric,
                gold_answers: gold,
            };
            &oracle
        }
        ScorerKind::SelfCritic => &SelfCriticScorer,
        ScorerKind::Estimation => estimator.as_ref().expect("loaded above"),
    };
    let fitted = estimator.as_ref().map(|e| e.model().threshold);
    let scorer_kind = if policy == Policy::Greedy { ScorerKind::Estimation } else { cfg.scorer };
    let episode = cfg.episode(cfg.stop_threshold(scorer_kind, fitted));

    let result = match policy {
        Policy::Mcts => run_search(
            query,
            SearchPorts {
                generator: generator.as_ref(),
                retriever,
                scorer,
            },
            &episode,
            cfg.seed,
        ),
        Policy::Greedy => greedy_search(
            query,
            GreedyPorts {
                generator: generator.as_ref(),
                retriever,
                estimator: estimator.as_ref().expect("loaded above"),
            },
            &episode,
        ),
    };
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            if let Some(g) = &e.partial {
                let mut t = Trace::from_graph(g);
                t.error = Some(e.to_string());
                t.save(trace_path)?;
            }
            return Err(e.into());
        }
    };
    let best = &outcome.graph.nodes()[outcome.best_thought.0].text;
    let answer = generator.answer(query, Some(best))?;
    Trace::from_outcome(&outcome, Some(answer.clone())).save(trace_path)?;
    println!("{answer}");
    log::info!(
        "{} thoughts, terminated by {:?}, trace at {}",
        outcome.graph.generated_count(),
        outcome.terminated_by,
        trace_path.display()
    );
    Ok(())
}

fn train_scorer(
    cfg: &EngineConfig,
    train: &Path,
    out: &Path,
    dataset_out: Option<&Path>,
    max_holdout_mse: Option<f64>,
    load: &LoadArgs,
) -> Result<()> {
    let examples = load_examples(train, &load_options(load)?)?;
    if examples.is_empty() {
        return Err(ConfigIssue(format!("{} holds no examples after filtering", train.display())).into());
    }
    let generator = setup::generator(cfg)?;
    let corpus = setup::corpus(cfg)?;
    let embedder = setup::feature_embedder(cfg, corpus.as_ref())?;
    let setup = CollectionSetup {
        generator: generator.as_ref(),
        corpus: corpus.as_ref().map(|c| c.port(cfg)),
        embedder: embedder.as_ref(),
        episode: cfg.episode(cfg.stop.oracle),
        metric: cfg.reward_metric,
        workers: cfg.workers,
        seed: cfg.seed,
    };
    let dataset = collect_offline_dataset(&examples, &setup)?;
    if let Some(path) = dataset_out {
        write_dataset(path, &dataset)?;
    }
    let model = train_estimator(
        &dataset,
        embedder.id(),
        cfg.estimator.holdout_fraction,
        &cfg.estimator.regressor,
        cfg.seed,
    )?;
    model.save(out)?;
    let r = &model.training_report;
    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.6}"));
    println!(
        "examples: {}\nsamples: {}\ntrain: {}\nholdout: {}\ntrain_mse: {:.6}\nholdout_mse: {}\nholdout_baseline_mse: {}\nholdout_pearson: {}\nthreshold: {:.6}",
        examples.len(),
        r.sample_count,
        r.train_count,
        r.holdout_count,
        r.train_mse,
        opt(r.holdout_mse),
        opt(r.holdout_baseline_mse),
        opt(r.holdout_pearson),
        model.threshold
    );
    if let (Some(bound), Some(mse)) = (max_holdout_mse, r.holdout_mse) {
        if mse > bound {
            bail!("holdout MSE {mse:.6} exceeds the bound {bound}");
        }
    }
    Ok(())
}

fn parse_methods(spec: &str) -> Result<Vec<Method>> {
    if spec.trim() == "all" {
        return Ok(Method::ALL.to_vec());
    }
    spec.split(',')
        .map(|s| s.trim().parse::<Method>().map_err(|e| ConfigIssue(e).into()))
        .collect()
}

#[derive(Serialize)]
struct EvalSummary<'a> {
    config_hash: String,
    seed: u64,
    max_steps: usize,
    examples: usize,
    methods: Vec<MethodSummary<'a>>,
}

#[derive(Serialize)]
struct MethodSummary<'a> {
    method: &'a str,
    aggregate: f64,
    mean_score: f64,
    mean_generator_calls: f64,
    error_count: usize,
}

#[allow(clippy::too_many_arguments)]
fn eval(
    cfg: &EngineConfig,
    dataset: &Path,
    methods: &str,
    out_dir: &Path,
    sweep: &[usize],
    traces: bool,
    load: &LoadArgs,
) -> Result<()> {
    let methods = parse_methods(methods)?;
    let examples = load_examples(dataset, &load_options(load)?)?;
    let generator = setup::generator(cfg)?;
    let corpus = setup::corpus(cfg)?;
    let estimator = setup::estimator(cfg, corpus.as_ref())?;
    let ports = BenchmarkPorts {
        generator: generator.as_ref(),
        corpus: corpus.as_ref().map(|c| c.port(cfg)),
        estimator: estimator.as_ref(),
    };
    let base = BenchmarkConfig {
        episode: cfg.episode(cfg.stop.oracle),
        stop: cfg.stop,
        reward_metric: cfg.reward_metric,
        workers: cfg.workers,
        seed: cfg.seed,
        config_hash: Some(cfg.hash()),
    };
    create_dir(out_dir)?;

    let mut summary = EvalSummary {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        max_steps: cfg.search.max_steps,
        examples: examples.len(),
        methods: Vec::new(),
    };
    let mut reports: Vec<BenchmarkReport> = Vec::new();
    for &method in &methods {
        let (report, method_traces) = run_benchmark_with_traces(&examples, method, ports, &base)?;
        write_rows_csv(&out_dir.join(format!("{method}.csv")), &report)?;
        fs::write(out_dir.join(format!("{method}.json")), report.summary_json())?;
        if traces {
            let dir = out_dir.join("traces").join(method.as_str());
            create_dir(&dir)?;
            for (query_id, t) in method_traces {
                t.save(&dir.join(format!("{}.json", sanitize(&query_id))))?;
            }
        }
        println!(
            "{method}: accuracy {:.3} over {} examples ({} errors)",
            report.aggregate, report.example_count, report.error_count
        );
        reports.push(report);
    }
    for (method, r) in methods.iter().zip(&reports) {
        summary.methods.push(MethodSummary {
            method: method.as_str(),
            aggregate: r.aggregate,
            mean_score: r.mean_score,
            mean_generator_calls: r.mean_generator_calls,
            error_count: r.error_count,
        });
    }
    fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;

    if !sweep.is_empty() {
        for &method in &methods {
            let mut swept = Vec::with_capacity(sweep.len());
            for &t in sweep {
                let mut config = base.clone();
                config.episode.max_steps = t;
                swept.push(run_benchmark_with_traces(&examples, method, ports, &config)?.0);
            }
            write_curve_csv(&out_dir.join(format!("{method}.curve.csv")), &accuracy_vs_size_curve(&swept))?;
        }
    }
    Ok(())
}

/// Keeps query ids usable as file names.
fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

fn export_trace(path: &Path, format: TraceFormat, out: Option<&Path>) -> Result<()> {
    let trace = Trace::load(path)?;
    let text = match format {
        TraceFormat::Structured => trace.to_json(),
        TraceFormat::Graphviz => trace.to_graphviz(),
    };
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_lists() {
        assert_eq!(parse_methods("all").unwrap().len(), 7);
        assert_eq!(
            parse_methods("rag, llm_only").unwrap(),
            vec![Method::Rag, Method::LlmOnly]
        );
        assert!(parse_methods("nope").is_err());
    }

    #[test]
    fn ids_become_file_names() {
        assert_eq!(sanitize("test-0100"), "test-0100");
        assert_eq!(sanitize("a/b c"), "a_b_c");
    }
}

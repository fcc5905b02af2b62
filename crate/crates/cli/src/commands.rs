//! Command implementations. Each reports the files it read and wrote, and the
//! dispatcher records them in a manifest next to the outputs.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::iter;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, bail, ensure, Context, Result};
use clap::Parser;
use kwgen::bench::{run_timing, run_validity, write_validity_csv, TimingConfig};
use kwgen::corpus::{
    build_vocab, encode_corpus, generate_synthetic, normalize, read_corpus, read_keywords, read_lines,
    synthetic_queries, write_corpus, write_keywords, write_lines, SyntheticSpec, Vocabulary,
};
use kwgen::decode::{beam_search, default_max_steps, BeamConfig};
use kwgen::model::{
    load_params, save_params, train_with, AttentionKind, CellType, ModelConfig, Parameters, TrainHyper,
};
use kwgen::serve::{
    build_frequency_table, precompute, zipf_workload, Client, PrecomputedStore, Router, RouterConfig, Server,
};
use kwgen::trie::{encode_keywords, write_layer_stats_csv, KeywordTrie};
use kwgen::TokenId;
use serde::Serialize;

use crate::args::*;
use crate::manifest::{sha256_file, Run, RunManifest};

/// Each distinct traffic-log query is drawn from this many generated queries,
/// which leaves room for duplicates.
const LOG_POOL_FACTOR: usize = 4;

/// Runs a command and writes its manifest. Returns `None` when the command
/// wrote no files.
pub fn execute(command: Command, argv: Vec<String>) -> Result<Option<RunManifest>> {
    let name = command.name();
    let (config, run) = match &command {
        Command::GenData(a) => (serde_json::to_value(a)?, Some(gen_data(a)?)),
        Command::BuildVocab(a) => (serde_json::to_value(a)?, Some(build_vocabulary(a)?)),
        Command::Train(a) => (serde_json::to_value(a)?, Some(train(a)?)),
        Command::TrieStats(a) => (serde_json::to_value(a)?, trie_stats(a)?),
        Command::Decode(a) => (serde_json::to_value(a)?, decode(a)?),
        Command::Bench(a) => (serde_json::to_value(a)?, Some(bench(a)?)),
        Command::Precompute(a) => (serde_json::to_value(a)?, Some(precompute_store(a)?)),
        Command::Serve(a) => (serde_json::to_value(a)?, serve(a)?),
        Command::Pipeline(a) => (serde_json::to_value(a)?, Some(pipeline(a)?)),
        Command::Replay(a) => {
            replay(a)?;
            return Ok(None);
        }
    };
    let Some(run) = run else { return Ok(None) };
    let manifest = RunManifest::build(name, config, argv, &run)?;
    manifest.save()?;
    Ok(Some(manifest))
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => dir.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_json_file(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut out = create_file(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn gen_data(a: &GenDataArgs) -> Result<Run> {
    ensure!(a.queries > 0, "--queries must be at least 1");
    ensure!(a.log_queries > 0, "--log-queries must be at least 1");
    let spec = SyntheticSpec {
        seed: a.seed,
        num_pairs: a.pairs,
        keyword_count: a.keywords,
        template_count: a.templates,
        overlap_fraction: a.overlap,
    };
    let data = generate_synthetic(&spec)?;
    let queries = synthetic_queries(&spec, a.queries + LOG_POOL_FACTOR * a.log_queries)?;
    let mut seen = HashSet::new();
    let pool: Vec<&String> = queries
        .iter()
        .filter(|q| seen.insert(normalize(q)))
        .take(a.log_queries)
        .collect();
    ensure!(
        pool.len() == a.log_queries,
        "only {} distinct queries available for the traffic log, {} requested",
        pool.len(),
        a.log_queries
    );
    let log = zipf_workload(&pool, a.log_draws, a.zipf_exponent, a.seed)?;

    create_dir(&a.out_dir)?;
    let mut run = Run::new(&a.out_dir, Some(a.seed));
    let path = a.out_dir.join("corpus.tsv");
    write_corpus(&path, &data.corpus)?;
    run.output("corpus", &path);
    let path = a.out_dir.join("keywords.txt");
    write_keywords(&path, &data.keywords)?;
    run.output("keywords", &path);
    let path = a.out_dir.join("queries.txt");
    write_lines(&path, &queries[..a.queries])?;
    run.output("queries", &path);
    let path = a.out_dir.join("query_log.txt");
    write_lines(&path, &log)?;
    run.output("query-log", &path);
    Ok(run)
}

fn build_vocabulary(a: &BuildVocabArgs) -> Result<Run> {
    let corpus = read_corpus(&a.corpus)?;
    let vocab = build_vocab(&corpus, a.max_size)?;
    vocab.save(&a.out)?;
    let mut run = Run::new(parent_dir(&a.out), None);
    run.input("corpus", &a.corpus);
    run.output("vocab", &a.out);
    Ok(run)
}

fn model_config(a: &TrainArgs, vocab_size: usize) -> Result<ModelConfig> {
    let mut config = match a.preset {
        Preset::Desk => ModelConfig::desk(vocab_size),
        Preset::Offline => ModelConfig::offline(vocab_size),
    };
    if let Some(cell) = a.cell {
        config.cell_type = match cell {
            CellArg::Gru => CellType::Gru,
            CellArg::Lstm => CellType::Lstm,
        };
    }
    if let Some(attention) = a.attention {
        config.attention = match attention {
            AttentionArg::Additive => AttentionKind::Additive,
            AttentionArg::Dot => AttentionKind::Dot,
        };
    }
    config.encoder_layers = a.encoder_layers.unwrap_or(config.encoder_layers);
    config.decoder_layers = a.decoder_layers.unwrap_or(config.decoder_layers);
    config.embed_dim = a.embed_dim.unwrap_or(config.embed_dim);
    config.hidden_dim = a.hidden_dim.unwrap_or(config.hidden_dim);
    if a.no_residual {
        config.residual = false;
    }
    config.validate()?;
    Ok(config)
}

fn train(a: &TrainArgs) -> Result<Run> {
    let corpus = read_corpus(&a.corpus)?;
    let vocab = Vocabulary::load(&a.vocab)?;
    let pairs = encode_corpus(&vocab, &corpus);
    let config = model_config(a, vocab.len())?;
    let hyper = TrainHyper {
        learning_rate: a.learning_rate,
        lr_decay: a.lr_decay,
        batch_size: a.batch_size,
        beta: a.beta,
        epochs: a.epochs,
        seed: a.seed,
        holdout_fraction: a.holdout,
        ..TrainHyper::desk()
    };
    hyper.validate()?;
    let metrics_path = a
        .metrics
        .clone()
        .unwrap_or_else(|| a.out.with_extension("metrics.jsonl"));
    let mut metrics = create_file(&metrics_path)?;
    let mut write_error = None;
    let trained = train_with(&pairs, config, &hyper, |m| {
        let line = serde_json::to_string(m).expect("metrics serialize");
        println!("{line}");
        if write_error.is_none() {
            write_error = writeln!(metrics, "{line}").err();
        }
    })?;
    if let Some(e) = write_error {
        return Err(e).with_context(|| format!("cannot write {}", metrics_path.display()));
    }
    metrics.flush()?;
    save_params(&trained.params, &a.out)?;

    let mut run = Run::new(parent_dir(&a.out), Some(a.seed));
    run.input("corpus", &a.corpus);
    run.input("vocab", &a.vocab);
    run.output("params", &a.out);
    run.output("metrics", &metrics_path);
    Ok(run)
}

fn load_trie(path: &Path, vocab: &Vocabulary) -> Result<KeywordTrie> {
    let keywords = read_keywords(path)?;
    let (encoded, skipped) = encode_keywords(vocab, &keywords);
    if !skipped.is_empty() {
        eprintln!(
            "kwgen: {} of {} keywords contain out-of-vocabulary tokens and were left out",
            skipped.len(),
            keywords.len()
        );
    }
    Ok(KeywordTrie::build(encoded)?)
}

fn trie_stats(a: &TrieStatsArgs) -> Result<Option<Run>> {
    let vocab = Vocabulary::load(&a.vocab)?;
    let trie = load_trie(&a.keywords, &vocab)?;
    let mut csv = Vec::new();
    write_layer_stats_csv(&trie.layer_stats(), &mut csv)?;
    std::io::stdout().write_all(&csv)?;
    let Some(out) = &a.out else { return Ok(None) };
    fs::write(out, &csv).with_context(|| format!("cannot write {}", out.display()))?;
    let mut run = Run::new(parent_dir(out), None);
    run.input("keywords", &a.keywords);
    run.input("vocab", &a.vocab);
    run.output("trie-stats", out);
    Ok(Some(run))
}

struct Model {
    params: Parameters,
    vocab: Vocabulary,
    trie: KeywordTrie,
}

fn load_model(m: &ModelInputs, run: &mut Run) -> Result<Model> {
    let params = load_params(&m.params)?;
    let vocab = Vocabulary::load(&m.vocab)?;
    ensure!(
        params.config().vocab_size == vocab.len(),
        "{} was trained for {} tokens but {} has {}",
        m.params.display(),
        params.config().vocab_size,
        m.vocab.display(),
        vocab.len()
    );
    let trie = load_trie(&m.keywords, &vocab)?;
    run.input("params", &m.params);
    run.input("vocab", &m.vocab);
    run.input("keywords", &m.keywords);
    Ok(Model { params, vocab, trie })
}

/// First 16 hex digits of the parameter file's SHA-256.
fn model_tag(params: &Path) -> Result<String> {
    Ok(sha256_file(params)?[..16].to_string())
}

fn beam_config(b: &BeamArgs, trie: &KeywordTrie) -> BeamConfig {
    BeamConfig {
        beam_size: b.beam,
        score_threshold: b.threshold,
        use_trie: !b.no_trie,
        use_self_norm: !b.no_self_norm,
        use_drop_otf: !b.no_drop_otf,
        max_steps: b.max_steps.unwrap_or_else(|| default_max_steps(trie)),
    }
}

#[derive(Serialize)]
struct RankedKeyword {
    keyword: String,
    score: f64,
    rank: usize,
}

#[derive(Serialize)]
struct QueryResults<'a> {
    query: &'a str,
    results: Vec<RankedKeyword>,
}

fn decode_text(model: &Model, beam: &BeamConfig, query: &str) -> Result<Vec<RankedKeyword>> {
    let ids = model.vocab.encode_text(query);
    ensure!(!ids.is_empty(), "query {query:?} has no tokens");
    let trie = beam.use_trie.then_some(&model.trie);
    Ok(beam_search(&model.params, &ids, trie, beam)?
        .into_iter()
        .map(|r| RankedKeyword {
            keyword: model.vocab.detokenize(&r.keyword),
            score: r.score,
            rank: r.rank,
        })
        .collect())
}

fn decode(a: &DecodeArgs) -> Result<Option<Run>> {
    let mut run = Run::new(a.out.as_deref().map_or_else(|| PathBuf::from("."), parent_dir), None);
    let model = load_model(&a.model, &mut run)?;
    let beam = beam_config(&a.beam, &model.trie);
    beam.validate()?;
    let mut text = String::new();
    match (&a.query, &a.queries) {
        (Some(query), _) => {
            text = serde_json::to_string(&decode_text(&model, &beam, query)?)?;
            text.push('\n');
        }
        (None, Some(path)) => {
            run.input("queries", path);
            for query in read_lines(path)? {
                let results = match decode_text(&model, &beam, &query) {
                    Ok(results) => results,
                    Err(e) => {
                        eprintln!("kwgen: {e:#}; no results");
                        Vec::new()
                    }
                };
                text += &serde_json::to_string(&QueryResults { query: &query, results })?;
                text.push('\n');
            }
        }
        (None, None) => bail!("give --query or --queries"),
    }
    let Some(out) = &a.out else {
        std::io::stdout().write_all(text.as_bytes())?;
        return Ok(None);
    };
    fs::write(out, text).with_context(|| format!("cannot write {}", out.display()))?;
    run.output("results", out);
    Ok(Some(run))
}

fn encode_queries(vocab: &Vocabulary, path: &Path) -> Result<Vec<Vec<TokenId>>> {
    let lines = read_lines(path)?;
    let total = lines.len();
    let encoded: Vec<Vec<TokenId>> = lines
        .iter()
        .map(|q| vocab.encode_text(q))
        .filter(|ids| !ids.is_empty())
        .collect();
    if encoded.len() < total {
        eprintln!(
            "kwgen: {} of {total} queries have no tokens and were left out",
            total - encoded.len()
        );
    }
    Ok(encoded)
}

fn bench(a: &BenchArgs) -> Result<Run> {
    let mut run = Run::new(&a.out_dir, None);
    let model = load_model(&a.model, &mut run)?;
    let queries = encode_queries(&model.vocab, &a.queries)?;
    run.input("queries", &a.queries);
    let config = TimingConfig {
        warmup_passes: a.warmup,
        repetitions: a.repetitions,
        score_threshold: a.threshold,
    };
    let report = run_timing(&model.params, &model.trie, &queries, &a.beams, &a.strategies, &config)?;

    create_dir(&a.out_dir)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    std::io::stdout().write_all(&csv)?;
    let path = a.out_dir.join("bench.csv");
    fs::write(&path, &csv).with_context(|| format!("cannot write {}", path.display()))?;
    run.timing_output("bench-csv", &path);
    let path = a.out_dir.join("bench.json");
    write_json_file(&path, &report)?;
    run.timing_output("bench-json", &path);

    if !a.validity_beams.is_empty() {
        let points = run_validity(&model.params, &model.trie, &queries, &a.validity_beams, a.threshold)?;
        let path = a.out_dir.join("validity.csv");
        let mut out = create_file(&path)?;
        write_validity_csv(&points, &mut out)?;
        out.flush()?;
        run.output("validity-csv", &path);
        let path = a.out_dir.join("validity.json");
        write_json_file(&path, &points)?;
        run.output("validity-json", &path);
    }
    Ok(run)
}

#[derive(Serialize)]
struct PrecomputeSummary {
    frequency_threshold: u64,
    frequent_queries: usize,
    volume_share: f64,
    skipped: usize,
    model_tag: String,
}

fn precompute_store(a: &PrecomputeArgs) -> Result<Run> {
    let mut run = Run::new(&a.out_dir, None);
    let log = read_lines(&a.query_log)?;
    run.input("query-log", &a.query_log);
    let table = build_frequency_table(&log);
    let threshold = match a.min_count {
        Some(count) => count,
        None => table.threshold_for_top_percent(a.top_percent.unwrap_or(20.0))?,
    };
    let frequent = table.frequent(threshold);
    let model = load_model(&a.model, &mut run)?;
    let beam = beam_config(&a.beam, &model.trie);
    let tag = model_tag(&a.model.params)?;
    let (store, skips) = precompute(&frequent, &model.params, &model.vocab, &model.trie, &beam, &tag)?;

    create_dir(&a.out_dir)?;
    let path = a.out_dir.join("frequency.tsv");
    table.save(&path)?;
    run.output("frequency-table", &path);
    let path = a.out_dir.join("store.jsonl");
    store.save(&path)?;
    run.output("store", &path);
    let path = a.out_dir.join("skips.jsonl");
    let mut out = create_file(&path)?;
    for skip in &skips {
        serde_json::to_writer(&mut out, skip)?;
        writeln!(out)?;
    }
    out.flush()?;
    run.output("skips", &path);

    let summary = PrecomputeSummary {
        frequency_threshold: threshold,
        frequent_queries: frequent.len(),
        volume_share: table.volume_share(threshold),
        skipped: skips.len(),
        model_tag: tag,
    };
    println!("{}", serde_json::to_string(&summary)?);
    Ok(run)
}

#[derive(Serialize)]
struct ReplayReport {
    requests: u64,
    hits: u64,
    misses: u64,
    hit_rate: f64,
    /// Share of the replayed log whose query is in the store.
    store_volume_share: f64,
    mean_hit_ms: f64,
    mean_miss_ms: f64,
}

fn serve(a: &ServeArgs) -> Result<Option<Run>> {
    let mut run = Run::new(a.out_dir.clone().unwrap_or_else(|| PathBuf::from(".")), None);
    let model = load_model(&a.model, &mut run)?;
    let store = PrecomputedStore::load(&a.store)?;
    run.input("store", &a.store);
    let beam = beam_config(&a.beam, &model.trie);
    // The frequent/infrequent split was fixed when the store was built; the
    // router only consults the store.
    let config = RouterConfig {
        frequency_threshold: 1,
        online_beam: beam,
        offline_beam: beam,
    };
    let router = Router::new(
        store,
        Arc::new(model.params),
        Arc::new(model.vocab),
        Arc::new(model.trie),
        config,
    )?;
    let server = Server::bind((a.host.as_str(), a.port), Arc::new(router))
        .with_context(|| format!("cannot listen on {}:{}", a.host, a.port))?;

    let Some(log_path) = &a.replay else {
        println!("listening on {}", server.local_addr()?);
        std::io::stdout().flush()?;
        server.run()?;
        return Ok(None);
    };
    let out_dir = a.out_dir.as_ref().ok_or_else(|| anyhow!("--replay needs --out-dir"))?;
    let log = read_lines(log_path)?;
    run.input("replay-log", log_path);
    let handle = server.spawn()?;
    let mut client = Client::connect(handle.addr())?;
    create_dir(out_dir)?;
    let responses_path = out_dir.join("responses.jsonl");
    let mut responses = create_file(&responses_path)?;
    for query in &log {
        let response = client.request(query)?;
        serde_json::to_writer(&mut responses, &response)?;
        writeln!(responses)?;
    }
    responses.flush()?;
    let stats = handle.router().stats();
    let in_store = log.iter().filter(|q| handle.router().store().get(q).is_some()).count();
    handle.shutdown();

    let report = ReplayReport {
        requests: stats.requests,
        hits: stats.hits,
        misses: stats.misses,
        hit_rate: stats.hit_rate(),
        store_volume_share: if log.is_empty() {
            0.0
        } else {
            in_store as f64 / log.len() as f64
        },
        mean_hit_ms: stats.mean_hit_ms,
        mean_miss_ms: stats.mean_miss_ms,
    };
    println!("{}", serde_json::to_string(&report)?);
    let path = out_dir.join("serve_stats.json");
    write_json_file(&path, &report)?;
    run.output("responses", &responses_path);
    run.timing_output("serve-stats", &path);
    Ok(Some(run))
}

fn pipeline(a: &PipelineArgs) -> Result<Run> {
    create_dir(&a.out_dir)?;
    let dir = a.out_dir.display().to_string();
    let at = |name: &str| a.out_dir.join(name).display().to_string();
    let owned = |parts: &[&str]| parts.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let (corpus, keywords, queries, log) = (
        at("corpus.tsv"),
        at("keywords.txt"),
        at("queries.txt"),
        at("query_log.txt"),
    );
    let (vocab, params) = (at("vocab.txt"), at("model.bin"));
    let seed = a.seed.to_string();
    let model = owned(&["--params", &params, "--vocab", &vocab, "--keywords", &keywords]);
    let optional = |flag: &str, value: Option<String>| match value {
        Some(v) => vec![flag.to_string(), v],
        None => Vec::new(),
    };
    let beams = (!a.beams.is_empty()).then(|| a.beams.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(","));

    let stages: Vec<Vec<String>> = vec![
        [
            owned(&["gen-data", "--out-dir", &dir, "--seed", &seed]),
            optional("--pairs", a.pairs.map(|n| n.to_string())),
            optional("--keywords", a.keywords.map(|n| n.to_string())),
        ]
        .concat(),
        owned(&["build-vocab", "--corpus", &corpus, "--out", &vocab]),
        [
            owned(&[
                "train", "--corpus", &corpus, "--vocab", &vocab, "--out", &params, "--seed", &seed,
            ]),
            optional("--epochs", a.epochs.map(|n| n.to_string())),
        ]
        .concat(),
        owned(&[
            "trie-stats",
            "--keywords",
            &keywords,
            "--vocab",
            &vocab,
            "--out",
            &at("trie_stats.csv"),
        ]),
        [
            owned(&["decode"]),
            model.clone(),
            owned(&["--queries", &queries, "--out", &at("decode.jsonl")]),
        ]
        .concat(),
        [
            owned(&["bench"]),
            model.clone(),
            owned(&["--queries", &queries, "--out-dir", &dir]),
            optional("--beams", beams),
            optional("--repetitions", a.repetitions.map(|n| n.to_string())),
        ]
        .concat(),
        [
            owned(&["precompute", "--query-log", &log]),
            model.clone(),
            owned(&["--out-dir", &dir]),
        ]
        .concat(),
        [
            owned(&["serve", "--store", &at("store.jsonl")]),
            model,
            owned(&["--port", "0", "--replay", &log, "--out-dir", &dir]),
        ]
        .concat(),
    ];

    let mut run = Run::new(&a.out_dir, Some(a.seed));
    for argv in stages {
        let cli = Cli::try_parse_from(iter::once("kwgen".to_string()).chain(argv.iter().cloned()))
            .map_err(|e| anyhow!("pipeline stage {:?} is malformed: {}", argv[0], e.kind()))?;
        let name = cli.command.name();
        let started = Instant::now();
        let manifest = execute(cli.command, argv)?.ok_or_else(|| anyhow!("pipeline stage {name} wrote no files"))?;
        eprintln!(
            "kwgen: pipeline: {name} done in {:.1}s",
            started.elapsed().as_secs_f64()
        );
        for output in manifest.outputs {
            run.outputs
                .push((format!("{name}/{}", output.role), output.path, output.reproducible));
        }
    }
    Ok(run)
}

#[derive(Serialize)]
struct Comparison<'a> {
    role: &'a str,
    status: &'static str,
}

fn replay(a: &ReplayArgs) -> Result<()> {
    let recorded = RunManifest::load(&a.manifest)?;
    ensure!(recorded.command != "replay", "a replay cannot itself be replayed");
    for input in &recorded.inputs {
        let path = recorded.cwd.join(&input.path);
        ensure!(
            sha256_file(&path)? == input.sha256,
            "input {} changed since the recorded run",
            path.display()
        );
    }
    create_dir(&a.out_dir)?;
    let out_dir = a
        .out_dir
        .canonicalize()
        .with_context(|| format!("cannot resolve {}", a.out_dir.display()))?;
    let argv = recorded.redirected_argv(&out_dir);
    std::env::set_current_dir(&recorded.cwd)
        .with_context(|| format!("cannot enter the recorded directory {}", recorded.cwd.display()))?;
    let cli = Cli::try_parse_from(iter::once("kwgen".to_string()).chain(argv.iter().cloned()))
        .map_err(|e| anyhow!("recorded arguments no longer parse: {}", e.kind()))?;
    ensure!(
        cli.command.name() == recorded.command,
        "manifest says {:?} but its arguments run {:?}",
        recorded.command,
        cli.command.name()
    );
    let rerun = execute(cli.command, argv)?.ok_or_else(|| anyhow!("the replayed command wrote no files"))?;

    let mut differing = 0;
    for old in &recorded.outputs {
        let new = rerun.outputs.iter().find(|o| o.role == old.role);
        let status = match new {
            None => "missing",
            Some(_) if !old.reproducible => "timing",
            Some(new) if new.sha256 == old.sha256 => "identical",
            Some(_) => "differs",
        };
        if matches!(status, "missing" | "differs") {
            differing += 1;
        }
        println!(
            "{}",
            serde_json::to_string(&Comparison {
                role: &old.role,
                status
            })?
        );
    }
    ensure!(differing == 0, "{differing} outputs differ from the recorded run");
    Ok(())
}

#[cfg(test)]
mod tests {
    use clap::error::ErrorKind;

    use super::*;

    fn run(args: &[&str]) -> Result<Option<RunManifest>> {
        let cli = Cli::try_parse_from(iter::once("kwgen").chain(args.iter().copied()))?;
        execute(cli.command, args.iter().map(|s| s.to_string()).collect())
    }

    fn path(dir: &Path, name: &str) -> String {
        dir.join(name).display().to_string()
    }

    #[test]
    fn unknown_flag_is_a_usage_error() {
        let err = Cli::try_parse_from(["kwgen", "train", "--bogus"]).unwrap_err();
        assert_eq!(err.kind(), ErrorKind::UnknownArgument);
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("Usage:"));
    }

    #[test]
    fn decode_needs_a_query_source() {
        let err =
            Cli::try_parse_from(["kwgen", "decode", "--params", "p", "--vocab", "v", "--keywords", "k"]).unwrap_err();
        assert_eq!(err.kind(), ErrorKind::MissingRequiredArgument);
    }

    #[test]
    fn negative_threshold_parses() {
        let cli = Cli::try_parse_from([
            "kwgen",
            "decode",
            "--params",
            "p",
            "--vocab",
            "v",
            "--keywords",
            "k",
            "--query",
            "q",
            "--threshold",
            "-12.5",
        ])
        .unwrap();
        let Command::Decode(a) = cli.command else {
            panic!("not decode")
        };
        assert_eq!(a.beam.threshold, -12.5);
    }

    #[test]
    fn missing_input_is_one_line_naming_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = path(dir.path(), "absent.tsv");
        let err = run(&["build-vocab", "--corpus", &corpus, "--out", &path(dir.path(), "v.txt")]).unwrap_err();
        let message = format!("{err:#}");
        assert!(message.contains(&corpus), "{message}");
        assert!(!message.contains('\n'), "{message}");
    }

    /// Every command on a tiny corpus, then reruns from manifests.
    #[test]
    fn small_flow_runs_and_replays_identically() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("run");
        let d = dir.as_path();
        let dir_s = dir.display().to_string();
        run(&[
            "gen-data",
            "--out-dir",
            &dir_s,
            "--pairs",
            "300",
            "--keywords",
            "200",
            "--queries",
            "8",
            "--log-queries",
            "20",
            "--log-draws",
            "150",
        ])
        .unwrap();
        let (corpus, vocab, params) = (path(d, "corpus.tsv"), path(d, "vocab.txt"), path(d, "model.bin"));
        run(&["build-vocab", "--corpus", &corpus, "--out", &vocab]).unwrap();
        run(&[
            "train",
            "--corpus",
            &corpus,
            "--vocab",
            &vocab,
            "--out",
            &params,
            "--epochs",
            "2",
            "--hidden-dim",
            "8",
            "--embed-dim",
            "4",
        ])
        .unwrap();
        let metrics = fs::read_to_string(d.join("model.metrics.jsonl")).unwrap();
        assert_eq!(metrics.lines().count(), 2);

        let model = ["--params", params.as_str(), "--vocab", vocab.as_str(), "--keywords"];
        let keywords = path(d, "keywords.txt");
        assert!(run(&["trie-stats", "--keywords", &keywords, "--vocab", &vocab])
            .unwrap()
            .is_none());
        run(&[
            "trie-stats",
            "--keywords",
            &keywords,
            "--vocab",
            &vocab,
            "--out",
            &path(d, "trie.csv"),
        ])
        .unwrap();
        let queries = path(d, "queries.txt");
        let decoded = path(d, "decode.jsonl");
        run(&[
            &["decode"],
            &model[..],
            &[&keywords, "--queries", &queries, "--out", &decoded],
        ]
        .concat())
        .unwrap();
        assert_eq!(fs::read_to_string(&decoded).unwrap().lines().count(), 8);
        run(&[
            &["bench"],
            &model[..],
            &[
                &keywords,
                "--queries",
                &queries,
                "--beams",
                "3,5",
                "--warmup",
                "1",
                "--repetitions",
                "1",
            ],
            &["--validity-beams", "5", "--out-dir", &dir_s],
        ]
        .concat())
        .unwrap();
        for name in ["bench.csv", "bench.json", "validity.csv", "validity.json"] {
            assert!(d.join(name).exists(), "{name}");
        }
        let log = path(d, "query_log.txt");
        let pre = ["precompute", "--query-log", log.as_str()];
        run(&[&pre[..], &model[..], &[&keywords, "--beam", "5", "--out-dir", &dir_s]].concat()).unwrap();
        let store = path(d, "store.jsonl");
        run(&[
            &["serve", "--store", &store],
            &model[..],
            &[
                &keywords,
                "--beam",
                "5",
                "--port",
                "0",
                "--replay",
                &log,
                "--out-dir",
                &dir_s,
            ],
        ]
        .concat())
        .unwrap();
        let stats: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(d.join("serve_stats.json")).unwrap()).unwrap();
        assert_eq!(stats["requests"], 150);
        assert_eq!(stats["hits"].as_u64().unwrap() + stats["misses"].as_u64().unwrap(), 150);
        assert_eq!(stats["hit_rate"], stats["store_volume_share"]);

        for command in ["gen-data", "train", "decode", "bench", "precompute", "serve"] {
            let manifest = path(d, &format!("{command}.manifest.json"));
            let again = path(tmp.path(), &format!("again-{command}"));
            run(&["replay", "--manifest", &manifest, "--out-dir", &again])
                .unwrap_or_else(|e| panic!("{command}: {e:#}"));
        }

        fs::write(&corpus, "changed\tcorpus\n").unwrap();
        let err = run(&[
            "replay",
            "--manifest",
            &path(d, "train.manifest.json"),
            "--out-dir",
            &path(tmp.path(), "x"),
        ])
        .unwrap_err();
        assert!(format!("{err:#}").contains("changed since the recorded run"));
    }
}

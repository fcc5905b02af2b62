//! Corpus to served answers through the public API on a small seeded setup.

use std::sync::Arc;

use kwgen::corpus::{build_vocab, encode_corpus, generate_synthetic, normalize, synthetic_queries, SyntheticSpec};
use kwgen::decode::BeamConfig;
use kwgen::model::{load_params, save_params, train, ModelConfig, TrainHyper};
use kwgen::serve::{
    build_frequency_table, decode_query, precompute, zipf_workload, PrecomputedStore, Router, RouterConfig, Source,
};
use kwgen::trie::{encode_keywords, KeywordTrie};

#[test]
fn trained_model_decodes_caches_and_serves_consistently() {
    let spec = SyntheticSpec {
        num_pairs: 600,
        keyword_count: 300,
        ..SyntheticSpec::default()
    };
    let data = generate_synthetic(&spec).unwrap();
    let vocab = build_vocab(&data.corpus, 256).unwrap();
    let pairs = encode_corpus(&vocab, &data.corpus);
    let config = ModelConfig {
        embed_dim: 8,
        hidden_dim: 16,
        ..ModelConfig::desk(vocab.len())
    };
    let hyper = TrainHyper {
        epochs: 3,
        ..TrainHyper::desk()
    };
    let trained = train(&pairs, config, &hyper).unwrap();
    assert_eq!(trained.metrics.len(), 3);
    assert!(trained.metrics[2].loss < trained.metrics[0].loss);

    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("model.bin");
    save_params(&trained.params, &model_path).unwrap();
    let params = load_params(&model_path).unwrap();
    assert_eq!(params.tensors(), trained.params.tensors());

    let (encoded, _) = encode_keywords(&vocab, &data.keywords);
    let trie = KeywordTrie::build(encoded).unwrap();
    let beam = BeamConfig::new(8, &trie);

    let pool: Vec<String> = synthetic_queries(&spec, 60)
        .unwrap()
        .iter()
        .map(|q| normalize(q))
        .collect();
    let log = zipf_workload(&pool, 400, 1.0, 3).unwrap();
    let table = build_frequency_table(&log);
    let threshold = table.threshold_for_top_percent(20.0).unwrap();
    let frequent = table.frequent(threshold);
    let (store, skips) = precompute(&frequent, &params, &vocab, &trie, &beam, "flow").unwrap();
    assert_eq!(store.len() + skips.len(), frequent.len());

    let store_path = dir.path().join("store.jsonl");
    store.save(&store_path).unwrap();
    let store = PrecomputedStore::load(&store_path).unwrap();
    assert_eq!(store.model_tag(), "flow");

    let params = Arc::new(params);
    let (vocab, trie) = (Arc::new(vocab), Arc::new(trie));
    let router = Router::new(
        store,
        Arc::clone(&params),
        Arc::clone(&vocab),
        Arc::clone(&trie),
        RouterConfig {
            frequency_threshold: threshold,
            online_beam: beam,
            offline_beam: beam,
        },
    )
    .unwrap();
    for query in &log {
        let response = router.serve_request(query);
        let live = decode_query(&params, &vocab, &trie, &beam, query).unwrap();
        assert_eq!(response.results, live, "{query}");
        let expected = if frequent.contains(query) {
            Source::OfflineCache
        } else {
            Source::OnlineDecode
        };
        assert_eq!(response.source, expected, "{query}");
        for hit in &response.results {
            assert!(trie.contains(&vocab.encode_text(&hit.keyword)), "{}", hit.keyword);
        }
    }
    let stats = router.stats();
    assert_eq!(stats.requests, log.len() as u64);
    assert_eq!(stats.hits as f64 / log.len() as f64, table.volume_share(threshold));
}

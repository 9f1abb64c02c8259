use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use playseq::codec::{EncodeConfig, Vocabulary};
use playseq::inference::{run_whatif, WhatIfRequest};
use playseq::model::{Checkpoint, ModelConfig, ModelParams};
use playseq::service::{router, AppState};
use playseq::synth::{generate_corpus, GroundTruth, SyntheticLeague};

struct Fixture {
    state: Arc<AppState>,
    actor: u32,
    bench: u32,
}

fn fixture() -> Fixture {
    let league = SyntheticLeague::default_league(5);
    let corpus = generate_corpus(&league, 2, 5).unwrap();
    let vocab = Vocabulary::new(league.player_ids()).unwrap();
    let cfg = ModelConfig {
        vocab_size: vocab.size(),
        block_size: EncodeConfig::min_block_size(6),
        n_layers: 1,
        n_heads: 2,
        embed_dim: 16,
        dropout_rate: 0.0,
        init_scale: 0.02,
    };
    let ck = Checkpoint::new(ModelParams::init(cfg, 2).unwrap(), vocab).unwrap();
    let truth = GroundTruth::new(&league, &corpus, 5);
    let actor = corpus.episodes[0].actions[0].actor_id;
    let on_pitch = &corpus.episodes[0].context.on_pitch;
    let bench = league.player_ids().into_iter().find(|p| !on_pitch.contains(p)).unwrap();
    let state = AppState::new(ck, corpus.episodes, 100).unwrap().with_role_labels(truth.archetype_labels());
    Fixture { state: Arc::new(state), actor, bench }
}

async fn call(state: &Arc<AppState>, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn get_json(state: &Arc<AppState>, uri: &str) -> (StatusCode, Value) {
    let (s, b) = call(state, "GET", uri, None).await;
    (s, serde_json::from_slice(&b).unwrap())
}

#[tokio::test]
async fn health_reports_hashes() {
    let f = fixture();
    let (s, v) = get_json(&f.state, "/health").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "ok");
    assert_eq!(v["vocab_hash"], f.state.vocab.hash());
    assert_eq!(v["model_hash"].as_str().unwrap().len(), 64);
}

#[tokio::test]
async fn player_endpoints() {
    let f = fixture();
    let (s, v) = get_json(&f.state, "/players").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v.as_array().unwrap().len(), 56);
    assert!(v[0]["role_label"].is_string());

    let (s, v) = get_json(&f.state, &format!("/players/{}/profile", f.actor)).await;
    assert_eq!(s, StatusCode::OK);
    let shares: f64 = ["dribble", "pass", "shot", "defensive", "other"].iter().map(|k| v[k].as_f64().unwrap()).sum();
    assert!((shares - 1.0).abs() < 1e-12);

    let (s, v) = get_json(&f.state, &format!("/players/{}/similar?k=4", f.actor)).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v.as_array().unwrap().len(), 4);
    assert!(v.as_array().unwrap().iter().all(|p| p["player_id"] != f.actor));

    let (s, v) = get_json(&f.state, &format!("/players/{}/embedding", f.actor)).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["embedding"].as_array().unwrap().len(), 16);

    let (s, v) = get_json(&f.state, &format!("/episodes?player={}&limit=3", f.actor)).await;
    assert_eq!(s, StatusCode::OK);
    let eps = v.as_array().unwrap();
    assert!(!eps.is_empty() && eps.len() <= 3);
    assert!(eps.iter().all(|e| e["player_actions"].as_u64().unwrap() > 0));

    let (s, v) = get_json(&f.state, "/embedding-map").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v.as_array().unwrap().len(), 56);
}

#[tokio::test]
async fn errors_are_structured() {
    let f = fixture();
    for (uri, status, code) in [
        ("/players/9999/profile", StatusCode::NOT_FOUND, "unknown_player"),
        ("/players/abc/profile", StatusCode::BAD_REQUEST, "malformed_path"),
        ("/players/101/similar?k=0", StatusCode::BAD_REQUEST, "invalid_argument"),
        ("/players/101/similar?k=x", StatusCode::BAD_REQUEST, "malformed_query"),
        ("/nowhere", StatusCode::NOT_FOUND, "not_found"),
    ] {
        let (s, v) = get_json(&f.state, uri).await;
        assert_eq!((s, v["code"].as_str().unwrap()), (status, code), "{uri}");
        assert!(v["message"].is_string());
    }
    let (s, b) = call(&f.state, "POST", "/simulate", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(serde_json::from_slice::<Value>(&b).unwrap()["code"], "malformed_body");

    let over = json!({"out_player": f.actor, "in_player": f.bench, "n_samples": 101});
    let (s, b) = call(&f.state, "POST", "/simulate", Some(over)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(serde_json::from_slice::<Value>(&b).unwrap()["code"], "limit_exceeded");

    let unknown = json!({"out_player": f.actor, "in_player": 4242});
    let (s, _) = call(&f.state, "POST", "/simulate", Some(unknown)).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let extra = json!({"out_player": f.actor, "in_player": f.bench, "bogus": 1});
    let (s, _) = call(&f.state, "POST", "/simulate", Some(extra)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn simulate_is_a_thin_deterministic_wrapper() {
    let f = fixture();
    let body = json!({"out_player": f.actor, "in_player": f.bench, "n_samples": 4, "max_episodes": 2, "seed": 9, "max_events": 6});
    let (s1, b1) = call(&f.state, "POST", "/simulate", Some(body.clone())).await;
    let (s2, b2) = call(&f.state, "POST", "/simulate", Some(body.clone())).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(b1, b2);

    let req: WhatIfRequest = serde_json::from_value(body).unwrap();
    let direct = run_whatif(&f.state.params, &f.state.vocab, f.state.encode, &f.state.episodes, &req).unwrap();
    assert_eq!(b1, serde_json::to_vec(&direct).unwrap());

    let concurrent = futures_join(&f.state, json!({"out_player": f.actor, "in_player": f.bench, "n_samples": 4, "max_episodes": 2, "seed": 9, "max_events": 6})).await;
    assert!(concurrent.iter().all(|b| *b == b1));
}

async fn futures_join(state: &Arc<AppState>, body: Value) -> Vec<Vec<u8>> {
    let handles: Vec<_> = (0..4)
        .map(|_| {
            let (st, b) = (state.clone(), body.clone());
            tokio::spawn(async move { call(&st, "POST", "/simulate", Some(b)).await.1 })
        })
        .collect();
    let mut out = Vec::new();
    for h in handles {
        out.push(h.await.unwrap());
    }
    out
}

#[tokio::test]
async fn identity_simulation_equals_baseline() {
    let f = fixture();
    let body = json!({"out_player": f.actor, "in_player": f.actor, "n_samples": 3, "max_episodes": 2, "max_events": 6});
    let (s, b) = call(&f.state, "POST", "/simulate", Some(body)).await;
    assert_eq!(s, StatusCode::OK);
    let v: Value = serde_json::from_slice(&b).unwrap();
    assert_eq!(v["result"], v["baseline"]);
    assert_eq!(v["reevaluated_robv"], v["baseline_reevaluated_robv"]);
}

#[test]
fn startup_refuses_foreign_corpus() {
    let league = SyntheticLeague::default_league(5);
    let corpus = generate_corpus(&league, 1, 5).unwrap();
    let vocab = Vocabulary::new(1..=22).unwrap();
    let cfg = ModelConfig { vocab_size: vocab.size(), block_size: 62, n_layers: 1, n_heads: 1, embed_dim: 4, dropout_rate: 0.0, init_scale: 0.02 };
    let ck = Checkpoint::new(ModelParams::init(cfg, 0).unwrap(), vocab).unwrap();
    let err = AppState::new(ck, corpus.episodes, 100).unwrap_err();
    assert!(matches!(err, playseq::Error::VocabMismatch { .. }), "{err}");
}

// Auto-selection only picks episodes where the player acts within the
// simulated horizon, even when they act later in other episodes.
#[test]
fn auto_selection_respects_the_horizon() {
    let f = fixture();
    let eps = &f.state.episodes;
    let late = eps
        .iter()
        .flat_map(|e| e.actions.iter().skip(2).map(|a| a.actor_id))
        .find(|&p| eps.iter().any(|e| e.actions[..2.min(e.actions.len())].iter().any(|a| a.actor_id == p)))
        .unwrap();
    let req: WhatIfRequest =
        serde_json::from_value(json!({"out_player": late, "in_player": late, "n_samples": 1, "max_events": 2, "max_episodes": 1000})).unwrap();
    let r = run_whatif(&f.state.params, &f.state.vocab, f.state.encode, eps, &req).unwrap();
    assert!(r.skipped_episodes.is_empty());
    let expected: Vec<usize> = (0..eps.len())
        .filter(|&i| eps[i].actions.iter().take(2).any(|a| a.actor_id == late))
        .collect();
    assert_eq!(r.episodes.iter().map(|e| e.episode_id).collect::<Vec<_>>(), expected);
}

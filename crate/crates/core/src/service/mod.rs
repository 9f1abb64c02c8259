//! JSON-over-HTTP wrapper around a trained checkpoint and an episode
//! corpus. Handlers only route to the analytics and inference modules.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytics::{self, ActionProfile, PlayerCard, ProjectedPoint, SimilarPlayer};
use crate::codec::corpus::player_universe;
use crate::codec::{EncodeConfig, Episode, PlayerId, StartReason, Vocabulary};
use crate::error::Error;
use crate::inference::{run_whatif, WhatIfReport, WhatIfRequest};
use crate::model::{Checkpoint, ModelParams};

pub const DEFAULT_MAX_SAMPLES: usize = 100;

/// Read-only state shared by all requests.
#[derive(Debug)]
pub struct AppState {
    pub params: ModelParams<f32>,
    pub vocab: Vocabulary,
    pub episodes: Vec<Episode>,
    pub encode: EncodeConfig,
    pub model_hash: String,
    pub vocab_hash: String,
    pub max_samples: usize,
    pub role_labels: BTreeMap<PlayerId, String>,
}

impl AppState {
    /// Refuses corpora that mention players or action types the checkpoint's
    /// vocabulary does not know.
    pub fn new(ck: Checkpoint, episodes: Vec<Episode>, max_samples: usize) -> crate::Result<Self> {
        let vocab_hash = ck.vocab.hash();
        for p in player_universe(&episodes) {
            if !ck.vocab.contains_player(p) {
                return Err(Error::VocabMismatch { expected: vocab_hash, found: format!("corpus player {p} outside the checkpoint vocabulary") });
            }
        }
        for a in episodes.iter().flat_map(|e| &e.actions) {
            ck.vocab.action_token(a.action_type)?;
        }
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes)?;
        let model_hash = hex::encode(Sha256::digest(&bytes));
        let encode = EncodeConfig::fitting(ck.params.config.block_size)?;
        Ok(Self { params: ck.params, vocab: ck.vocab, episodes, encode, model_hash, vocab_hash, max_samples, role_labels: BTreeMap::new() })
    }

    pub fn with_role_labels(mut self, labels: BTreeMap<PlayerId, String>) -> Self {
        self.role_labels = labels;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { code: code.into(), message: message.into() } }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::UnknownPlayer(_) => (StatusCode::NOT_FOUND, "unknown_player"),
            Error::Substitution(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_substitution"),
            Error::InvalidArgument(_) | Error::Domain(_) => (StatusCode::BAD_REQUEST, "invalid_argument"),
            Error::ContextOverflow { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "context_overflow"),
            Error::Empty(_) => (StatusCode::UNPROCESSABLE_ENTITY, "empty"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "malformed_body", r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "malformed_query", r.body_text())
    }
}

impl From<PathRejection> for ApiError {
    fn from(r: PathRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "malformed_path", r.body_text())
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;
type St = State<Arc<AppState>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_hash: String,
    pub vocab_hash: String,
}

async fn health(State(s): St) -> Json<Health> {
    Json(Health { status: "ok".into(), model_hash: s.model_hash.clone(), vocab_hash: s.vocab_hash.clone() })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlayerSummary {
    pub player_id: PlayerId,
    pub n_actions: usize,
    pub n_episodes: usize,
    pub role_label: Option<String>,
}

async fn players(State(s): St) -> Json<Vec<PlayerSummary>> {
    let mut actions: BTreeMap<PlayerId, (usize, usize)> = s.vocab.player_ids().iter().map(|&p| (p, (0, 0))).collect();
    for ep in &s.episodes {
        for &p in &ep.context.on_pitch {
            if let Some(e) = actions.get_mut(&p) {
                e.1 += 1;
            }
        }
        for a in &ep.actions {
            if let Some(e) = actions.get_mut(&a.actor_id) {
                e.0 += 1;
            }
        }
    }
    Json(
        actions
            .into_iter()
            .map(|(player_id, (n_actions, n_episodes))| PlayerSummary { player_id, n_actions, n_episodes, role_label: s.role_labels.get(&player_id).cloned() })
            .collect(),
    )
}

fn known(s: &AppState, id: PlayerId) -> Result<(), ApiError> {
    if s.vocab.contains_player(id) {
        Ok(())
    } else {
        Err(Error::UnknownPlayer(id).into())
    }
}

async fn profile(State(s): St, id: Result<Path<PlayerId>, PathRejection>) -> ApiResult<ActionProfile> {
    let Path(id) = id?;
    known(&s, id)?;
    Ok(Json(analytics::action_profile(&s.episodes, id)?))
}

#[derive(Debug, Deserialize)]
struct SimilarQuery {
    k: Option<usize>,
}

async fn similar(State(s): St, id: Result<Path<PlayerId>, PathRejection>, q: Result<Query<SimilarQuery>, QueryRejection>) -> ApiResult<Vec<SimilarPlayer>> {
    let (Path(id), Query(q)) = (id?, q?);
    Ok(Json(analytics::similar_players(&s.params, &s.vocab, id, q.k.unwrap_or(5))?))
}

async fn embedding(State(s): St, id: Result<Path<PlayerId>, PathRejection>) -> ApiResult<PlayerCard> {
    let Path(id) = id?;
    let embedding = analytics::player_embedding(&s.params, &s.vocab, id)?.to_vec();
    Ok(Json(PlayerCard {
        player_id: id,
        embedding,
        profile: analytics::action_profile(&s.episodes, id).ok(),
        role_label: s.role_labels.get(&id).cloned(),
    }))
}

#[derive(Debug, Deserialize)]
struct EpisodeQuery {
    player: Option<PlayerId>,
    offset: Option<usize>,
    limit: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode_id: usize,
    pub source_match_id: String,
    pub start_reason: StartReason,
    pub minute: u32,
    pub n_actions: usize,
    /// Actions by the queried player, when one was given.
    pub player_actions: Option<usize>,
    pub on_pitch: Vec<PlayerId>,
}

async fn episodes(State(s): St, q: Result<Query<EpisodeQuery>, QueryRejection>) -> ApiResult<Vec<EpisodeSummary>> {
    let Query(q) = q?;
    if let Some(p) = q.player {
        known(&s, p)?;
    }
    let limit = q.limit.unwrap_or(100).min(1000);
    let out = s
        .episodes
        .iter()
        .enumerate()
        .filter(|(_, e)| q.player.is_none_or(|p| e.actions.iter().any(|a| a.actor_id == p)))
        .skip(q.offset.unwrap_or(0))
        .take(limit)
        .map(|(i, e)| EpisodeSummary {
            episode_id: i,
            source_match_id: e.source_match_id.clone(),
            start_reason: e.start_reason,
            minute: e.context.minute,
            n_actions: e.actions.len(),
            player_actions: q.player.map(|p| e.actions.iter().filter(|a| a.actor_id == p).count()),
            on_pitch: e.context.on_pitch.clone(),
        })
        .collect();
    Ok(Json(out))
}

async fn simulate(State(s): St, req: Result<Json<WhatIfRequest>, JsonRejection>) -> ApiResult<WhatIfReport> {
    let Json(req) = req?;
    if req.n_samples > s.max_samples {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "limit_exceeded",
            format!("n_samples {} exceeds the limit of {}", req.n_samples, s.max_samples),
        ));
    }
    let state = s.clone();
    let report = tokio::task::spawn_blocking(move || run_whatif(&state.params, &state.vocab, state.encode, &state.episodes, &req))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(report))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapPoint {
    #[serde(flatten)]
    pub point: ProjectedPoint,
    pub role_label: Option<String>,
}

async fn embedding_map(State(s): St) -> ApiResult<Vec<MapPoint>> {
    let pts = analytics::project_embeddings(&s.params, &s.vocab, s.vocab.player_ids())?;
    Ok(Json(pts.into_iter().map(|point| MapPoint { role_label: s.role_labels.get(&point.player_id).cloned(), point }).collect()))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/players", get(players))
        .route("/players/{id}/profile", get(profile))
        .route("/players/{id}/similar", get(similar))
        .route("/players/{id}/embedding", get(embedding))
        .route("/episodes", get(episodes))
        .route("/simulate", post(simulate))
        .route("/embedding-map", get(embedding_map))
        .fallback(not_found)
        .with_state(state)
}

pub async fn serve(state: AppState, addr: std::net::SocketAddr) -> crate::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(Arc::new(state))).await?;
    Ok(())
}

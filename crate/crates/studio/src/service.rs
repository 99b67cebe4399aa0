//! The HTTP generation service.
//!
//! | method | path | body |
//! |---|---|---|
//! | `POST` | `/generate` | [`GenerateRequest`] in, [`GenerateResponse`] out |
//! | `GET` | `/generations/{id}` | [`GenerateResponse`] |
//! | `GET` | `/generations/{id}/midi` | Standard MIDI File, `audio/midi` |
//! | `GET` | `/generations/{id}/pianoroll` | [`PianoRoll`] |
//! | `GET` | `/checkpoints` | list of [`CheckpointInfo`] |
//! | `GET` | `/health` | [`Health`] |
//!
//! Errors are `{"error": message, "field": name}`: 400 for invalid input with
//! the offending request field, 404 for unknown ids, 500 for checkpoints that
//! fail to load.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use conl2m::lyrics::LyricsSequence;
use conl2m::melody::{midi_bytes, MidiOptions, PianoRoll};
use conl2m::model::{Checkpoint, Model};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::api::{self, FieldError, GenerateError, GenerateRequest, GenerateResponse};

#[derive(Debug)]
pub enum ApiError {
    Invalid(FieldError),
    NotFound(FieldError),
    Checkpoint(String),
    Internal(String),
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<&'a str>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, field, message) = match &self {
            ApiError::Invalid(e) => (StatusCode::BAD_REQUEST, Some(e.field.as_str()), e.message.as_str()),
            ApiError::NotFound(e) => (StatusCode::NOT_FOUND, Some(e.field.as_str()), e.message.as_str()),
            ApiError::Checkpoint(m) => (StatusCode::INTERNAL_SERVER_ERROR, Some("checkpoint"), m.as_str()),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, None, m.as_str()),
        };
        (status, Json(ErrorBody { error: message, field })).into_response()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointInfo {
    pub id: String,
    pub bytes: u64,
    pub loaded: bool,
    pub default: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
    pub default_checkpoint: String,
    pub generations: usize,
}

/// A model loaded from `<dir>/<id>.json`.
pub struct LoadedCheckpoint {
    pub id: String,
    /// Hex SHA-256 of the checkpoint file.
    pub hash: String,
    pub model: Model,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id.len() <= 128
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

/// Checkpoint files of one directory, loaded on first use. Loaded models are
/// immutable; [`CheckpointRegistry::reload`] swaps in an empty cache so the
/// next request reads the files again.
pub struct CheckpointRegistry {
    dir: PathBuf,
    default: String,
    loaded: RwLock<Arc<HashMap<String, Arc<LoadedCheckpoint>>>>,
}

impl CheckpointRegistry {
    /// Opens `dir` and loads the default checkpoint, `latest` when unnamed.
    pub fn open(dir: impl Into<PathBuf>, default: Option<String>) -> anyhow::Result<Self> {
        let dir = dir.into();
        let default = default.unwrap_or_else(|| "latest".to_string());
        let reg = CheckpointRegistry {
            dir,
            default,
            loaded: RwLock::new(Arc::new(HashMap::new())),
        };
        reg.get(&reg.default.clone())
            .map_err(|e| anyhow::anyhow!("default checkpoint {:?}: {e:?}", reg.default))?;
        Ok(reg)
    }

    pub fn default_id(&self) -> &str {
        &self.default
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn get(&self, id: &str) -> Result<Arc<LoadedCheckpoint>, ApiError> {
        if let Some(c) = self.loaded.read().expect("registry lock").get(id) {
            return Ok(c.clone());
        }
        if !valid_id(id) {
            return Err(ApiError::Invalid(FieldError::new("checkpoint", format!("malformed id {id:?}"))));
        }
        let path = self.dir.join(format!("{id}.json"));
        if !path.is_file() {
            return Err(ApiError::NotFound(FieldError::new("checkpoint", format!("no checkpoint {id:?}"))));
        }
        let bytes = fs::read(&path).map_err(|e| ApiError::Checkpoint(format!("reading {id}: {e}")))?;
        let ckpt = Checkpoint::from_bytes(&bytes).map_err(|e| ApiError::Checkpoint(format!("loading {id}: {e}")))?;
        let loaded = Arc::new(LoadedCheckpoint {
            id: id.to_string(),
            hash: hex::encode(Sha256::digest(&bytes)),
            model: ckpt.model,
        });
        let mut guard = self.loaded.write().expect("registry lock");
        let mut next = HashMap::clone(&guard);
        let entry = next.entry(id.to_string()).or_insert(loaded).clone();
        *guard = Arc::new(next);
        Ok(entry)
    }

    /// Drops every loaded model.
    pub fn reload(&self) {
        *self.loaded.write().expect("registry lock") = Arc::new(HashMap::new());
    }

    pub fn list(&self) -> Result<Vec<CheckpointInfo>, ApiError> {
        let loaded = self.loaded.read().expect("registry lock").clone();
        let entries = fs::read_dir(&self.dir).map_err(|e| ApiError::Checkpoint(format!("listing checkpoints: {e}")))?;
        let mut out = Vec::new();
        for entry in entries.flatten() {
            let path = entry.path();
            let (Some(stem), Some("json")) = (path.file_stem().and_then(|s| s.to_str()), path.extension().and_then(|e| e.to_str())) else {
                continue;
            };
            if !valid_id(stem) {
                continue;
            }
            out.push(CheckpointInfo {
                id: stem.to_string(),
                bytes: entry.metadata().map(|m| m.len()).unwrap_or(0),
                loaded: loaded.contains_key(stem),
                default: stem == self.default,
            });
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    }
}

/// A finished generation and the syllables it was sung to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredGeneration {
    pub response: GenerateResponse,
    pub lyrics: LyricsSequence,
}

/// In-memory generation cache, optionally mirrored to `<dir>/<id>.json`.
pub struct GenerationStore {
    memory: RwLock<HashMap<String, Arc<StoredGeneration>>>,
    persist: Option<PathBuf>,
}

impl GenerationStore {
    pub fn new(persist: Option<PathBuf>) -> anyhow::Result<Self> {
        if let Some(dir) = &persist {
            fs::create_dir_all(dir)?;
        }
        Ok(GenerationStore {
            memory: RwLock::new(HashMap::new()),
            persist,
        })
    }

    pub fn len(&self) -> usize {
        self.memory.read().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, g: StoredGeneration) -> Result<Arc<StoredGeneration>, ApiError> {
        let id = g.response.generation_id.clone();
        if let Some(dir) = &self.persist {
            let bytes = serde_json::to_vec(&g).map_err(|e| ApiError::Internal(e.to_string()))?;
            fs::write(dir.join(format!("{id}.json")), bytes).map_err(|e| ApiError::Internal(format!("persisting {id}: {e}")))?;
        }
        let g = Arc::new(g);
        self.memory.write().expect("store lock").insert(id, g.clone());
        Ok(g)
    }

    pub fn get(&self, id: &str) -> Result<Arc<StoredGeneration>, ApiError> {
        if let Some(g) = self.memory.read().expect("store lock").get(id) {
            return Ok(g.clone());
        }
        let missing = || ApiError::NotFound(FieldError::new("id", format!("no generation {id:?}")));
        let dir = self.persist.as_ref().filter(|_| id.chars().all(|c| c.is_ascii_hexdigit())).ok_or_else(missing)?;
        let bytes = fs::read(dir.join(format!("{id}.json"))).map_err(|_| missing())?;
        let g: StoredGeneration = serde_json::from_slice(&bytes).map_err(|e| ApiError::Internal(format!("stored {id}: {e}")))?;
        let g = Arc::new(g);
        self.memory.write().expect("store lock").insert(id.to_string(), g.clone());
        Ok(g)
    }
}

pub struct AppState {
    pub checkpoints: CheckpointRegistry,
    pub generations: GenerationStore,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/generate", post(generate))
        .route("/generations/{id}", get(generation))
        .route("/generations/{id}/midi", get(midi))
        .route("/generations/{id}/pianoroll", get(pianoroll))
        .route("/checkpoints", get(checkpoints))
        .route("/health", get(health))
        .with_state(state)
}

/// Parses a JSON body, naming the field at which decoding failed.
fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." || path.is_empty() { "body".to_string() } else { path };
        ApiError::Invalid(FieldError::new(field, e.into_inner().to_string()))
    })
}

async fn generate(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<GenerateResponse>, ApiError> {
    let req: GenerateRequest = parse_body(&body)?;
    let id = req.checkpoint.clone().unwrap_or_else(|| state.checkpoints.default_id().to_string());
    let seed = req.seed.unwrap_or_else(api::random_seed);
    let st = state.clone();
    let stored = tokio::task::spawn_blocking(move || {
        let ckpt = st.checkpoints.get(&id)?;
        let (response, lyrics) = api::generate(&ckpt.model, &ckpt.id, &ckpt.hash, &req, seed).map_err(|e| match e {
            GenerateError::Invalid(f) => ApiError::Invalid(f),
            GenerateError::Model(e) => ApiError::Internal(format!("generation failed: {e}")),
        })?;
        st.generations.insert(StoredGeneration { response, lyrics })
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))??;
    log::info!("generation {} ({} notes)", stored.response.generation_id, stored.response.melody.len());
    Ok(Json(stored.response.clone()))
}

async fn generation(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<GenerateResponse>, ApiError> {
    Ok(Json(state.generations.get(&id)?.response.clone()))
}

async fn midi(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let g = state.generations.get(&id)?;
    let bytes = midi_bytes(&g.response.melody, &MidiOptions::default()).map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok((
        [
            (header::CONTENT_TYPE, "audio/midi".to_string()),
            (header::CONTENT_DISPOSITION, format!("attachment; filename=\"{id}.mid\"")),
        ],
        bytes,
    )
        .into_response())
}

async fn pianoroll(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<PianoRoll>, ApiError> {
    let g = state.generations.get(&id)?;
    PianoRoll::new(&g.response.melody, &g.lyrics, None)
        .map(Json)
        .map_err(|e| ApiError::Internal(e.to_string()))
}

async fn checkpoints(State(state): State<Arc<AppState>>) -> Result<Json<Vec<CheckpointInfo>>, ApiError> {
    Ok(Json(state.checkpoints.list()?))
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        default_checkpoint: state.checkpoints.default_id().to_string(),
        generations: state.generations.len(),
    })
}

/// Binds `addr` and serves until interrupted.
pub async fn serve(state: Arc<AppState>, addr: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

//! Local HTTP service for the annotation tool.
//!
//! ```text
//! GET  /                        index.html from the asset dir, or a stub page
//! GET  /assets/{*path}          static assets
//! GET  /api/images              [{"id", "file", "annotated"}]
//! GET  /api/images/{id}         image bytes
//! GET  /api/annotations         ["id", ...]
//! GET  /api/annotations/{id}    {"image_id", "points", "reference_length_cm"}
//! POST /api/annotations         submit an annotation, 201 on success
//! ```
//!
//! Errors are `{"error": "..."}` with a 4xx status for bad requests.

use std::collections::HashMap;
use std::net::{SocketAddr, TcpListener};
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Serialize;
use serde_json::json;
use tokio::sync::Mutex;

use crate::annotation::{self, Annotation};
use crate::fsutil::{file_stem, list_files};
use crate::imageio::IMAGE_EXTENSIONS;
use crate::{Error, Result};

const STUB_PAGE: &str = "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>Ear annotation</title></head>\n\
<body><p>No annotation assets are installed. The API is available under <code>/api</code>.</p></body></html>\n";

pub struct AnnotationService {
    images_dir: PathBuf,
    annotations_dir: PathBuf,
    assets_dir: Option<PathBuf>,
    write_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ImageEntry {
    pub id: String,
    pub file: String,
    pub annotated: bool,
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Annotation(_) | Error::Parse { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

fn not_found(what: impl std::fmt::Display) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, format!("{what} not found"))
}

fn content_type(path: &Path) -> &'static str {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    match ext.as_str() {
        "png" => "image/png",
        "jpg" | "jpeg" => "image/jpeg",
        "html" => "text/html; charset=utf-8",
        "js" | "mjs" => "text/javascript",
        "css" => "text/css",
        "json" => "application/json",
        "svg" => "image/svg+xml",
        _ => "application/octet-stream",
    }
}

impl AnnotationService {
    pub fn new(images_dir: &Path, annotations_dir: &Path, assets_dir: Option<&Path>) -> Self {
        Self {
            images_dir: images_dir.to_path_buf(),
            annotations_dir: annotations_dir.to_path_buf(),
            assets_dir: assets_dir.map(Path::to_path_buf),
            write_locks: Mutex::new(HashMap::new()),
        }
    }

    /// Images servable by id, sorted. Files whose stem is not a valid id
    /// are left out.
    pub fn images(&self) -> Result<Vec<ImageEntry>> {
        Ok(list_files(&self.images_dir, &IMAGE_EXTENSIONS)?
            .into_iter()
            .filter_map(|p| {
                let id = file_stem(&p);
                annotation::valid_image_id(&id).then(|| ImageEntry {
                    annotated: annotation::exists(&self.annotations_dir, &id),
                    file: p
                        .file_name()
                        .map(|n| n.to_string_lossy().into_owned())
                        .unwrap_or_default(),
                    id,
                })
            })
            .collect())
    }

    fn image_path(&self, id: &str) -> Result<Option<PathBuf>> {
        if !annotation::valid_image_id(id) {
            return Ok(None);
        }
        Ok(list_files(&self.images_dir, &IMAGE_EXTENSIONS)?
            .into_iter()
            .find(|p| file_stem(p) == id))
    }

    async fn lock_for(&self, id: &str) -> Arc<Mutex<()>> {
        self.write_locks
            .lock()
            .await
            .entry(id.to_string())
            .or_default()
            .clone()
    }

    pub fn router(self) -> Router {
        Router::new()
            .route("/", get(index))
            .route("/assets/{*path}", get(asset))
            .route("/api/images", get(list_images))
            .route("/api/images/{id}", get(image))
            .route("/api/annotations", get(list_annotations).post(submit))
            .route("/api/annotations/{id}", get(annotation_of))
            .with_state(Arc::new(self))
    }
}

type Shared = State<Arc<AnnotationService>>;

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(ApiError::from)
}

fn file_response(path: &Path) -> ApiResult<Response> {
    let bytes = crate::fsutil::read(path)?;
    Ok(([(header::CONTENT_TYPE, content_type(path))], bytes).into_response())
}

async fn index(State(s): Shared) -> ApiResult<Response> {
    match s
        .assets_dir
        .as_ref()
        .map(|d| d.join("index.html"))
        .filter(|p| p.is_file())
    {
        Some(p) => file_response(&p),
        None => Ok((
            [(header::CONTENT_TYPE, "text/html; charset=utf-8")],
            STUB_PAGE,
        )
            .into_response()),
    }
}

async fn asset(State(s): Shared, UrlPath(path): UrlPath<String>) -> ApiResult<Response> {
    let rel = Path::new(&path);
    let safe = rel.components().all(|c| matches!(c, Component::Normal(_)));
    let full = s
        .assets_dir
        .as_ref()
        .filter(|_| safe)
        .map(|d| d.join(rel))
        .filter(|p| p.is_file());
    match full {
        Some(p) => file_response(&p),
        None => Err(not_found(format!("asset {path:?}"))),
    }
}

async fn list_images(State(s): Shared) -> ApiResult<Json<Vec<ImageEntry>>> {
    Ok(Json(blocking(move || s.images()).await?))
}

async fn image(State(s): Shared, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    match s.image_path(&id)? {
        Some(p) => file_response(&p),
        None => Err(not_found(format!("image {id:?}"))),
    }
}

async fn list_annotations(State(s): Shared) -> ApiResult<Json<Vec<String>>> {
    Ok(Json(
        blocking(move || annotation::list_annotations(&s.annotations_dir)).await?,
    ))
}

async fn annotation_of(
    State(s): Shared,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<Annotation>> {
    if !annotation::exists(&s.annotations_dir, &id) {
        return Err(not_found(format!("annotation {id:?}")));
    }
    Ok(Json(
        blocking(move || annotation::read_annotation(&s.annotations_dir, &id)).await?,
    ))
}

async fn submit(State(s): Shared, body: Bytes) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let submitted: Annotation = serde_json::from_slice(&body).map_err(|e| {
        ApiError(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("malformed submission: {e}"),
        )
    })?;
    submitted.validate()?;
    if s.image_path(&submitted.image_id)?.is_none() {
        return Err(not_found(format!("image {:?}", submitted.image_id)));
    }
    let lock = s.lock_for(&submitted.image_id).await;
    let _guard = lock.lock().await;
    let id = submitted.image_id.clone();
    let count = submitted.points.len();
    let service = s.clone();
    let written =
        blocking(move || annotation::write_annotation(&service.annotations_dir, &submitted))
            .await?;
    Ok((
        StatusCode::CREATED,
        Json(json!({
            "image_id": id,
            "points": count,
            "txt": written.txt.display().to_string(),
        })),
    ))
}

/// Binds the listening socket up front so a busy port is reported before
/// the service starts.
pub fn bind(addr: SocketAddr) -> Result<TcpListener> {
    TcpListener::bind(addr).map_err(|e| {
        if e.kind() == std::io::ErrorKind::AddrInUse {
            Error::Config(format!("port {} is already in use", addr.port()))
        } else {
            Error::io(addr.to_string(), e)
        }
    })
}

pub fn run_blocking(listener: TcpListener, service: AnnotationService) -> Result<()> {
    let addr = listener
        .local_addr()
        .map_err(|e| Error::io("listener", e))?;
    listener
        .set_nonblocking(true)
        .map_err(|e| Error::io(addr.to_string(), e))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("runtime", e))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::from_std(listener)
            .map_err(|e| Error::io(addr.to_string(), e))?;
        axum::serve(listener, service.router())
            .await
            .map_err(|e| Error::io(addr.to_string(), e))
    })
}

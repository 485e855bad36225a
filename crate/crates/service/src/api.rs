//! HTTP routes under `/api`.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use lit_tag_core::query::{crosstab, export_table, filtered_keys, parse_filter, FilterExpr};
use lit_tag_core::reconcile::{diff, MergePolicy};
use lit_tag_core::report::{build_report, ReportSpec};
use lit_tag_core::schema::{parse_category_tables, CategoryTable};
use lit_tag_core::tagging::option_counts;
use lit_tag_core::{parse_workbook, parse_zotero_export, CategoriesSchema};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Result, ServiceError};
use crate::workspace::{DatabaseInfo, Snapshot, Workspace};

/// Uploads (exports, workbooks) can be large; reads are small.
const BODY_LIMIT: usize = 64 * 1024 * 1024;
pub const DEFAULT_LIMIT: usize = 100;
/// Response header naming the file a mutation was saved to.
pub const VERSION_HEADER: &str = "x-lit-tag-version";

type Ws = State<Arc<Workspace>>;

pub fn router(workspace: Arc<Workspace>) -> Router {
    Router::new()
        .route("/api/databases", get(list_databases).post(create_database))
        .route("/api/databases/{name}", get(get_database))
        .route("/api/databases/{name}/rows", get(list_rows))
        .route("/api/databases/{name}/rows/{key}", get(get_row))
        .route("/api/databases/{name}/rows/{key}/tags", patch(patch_tags))
        .route("/api/databases/{name}/sync", post(sync))
        .route("/api/databases/{name}/relink", post(relink))
        .route("/api/databases/{name}/conform", post(conform))
        .route("/api/databases/{name}/replace-option", post(replace_option))
        .route("/api/databases/{name}/counts", get(counts))
        .route("/api/databases/{name}/crosstab", get(get_crosstab))
        .route("/api/databases/{name}/diff", get(get_diff))
        .route("/api/databases/{name}/table", get(table))
        .route("/api/databases/{name}/report", get(report))
        .route("/api/databases/{name}/versions", get(versions))
        .route("/api/merge", post(merge))
        .fallback(not_found)
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(workspace)
}

async fn not_found() -> Response {
    let body = serde_json::json!({ "error": "NotFound", "detail": "no such route" });
    (StatusCode::NOT_FOUND, Json(body)).into_response()
}

async fn blocking<T: Send + 'static>(work: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T> {
    tokio::task::spawn_blocking(work).await.map_err(|e| ServiceError::Storage(format!("worker task failed: {e}")))?
}

fn parse_optional_filter(text: Option<&str>) -> Result<Option<FilterExpr>> {
    match text.map(str::trim) {
        Some(t) if !t.is_empty() => Ok(Some(parse_filter(t)?)),
        _ => Ok(None),
    }
}

fn with_version(snapshot: &Snapshot, body: impl IntoResponse) -> Response {
    let mut response = body.into_response();
    if let Ok(value) = HeaderValue::from_str(&snapshot.meta.latest) {
        response.headers_mut().insert(VERSION_HEADER, value);
    }
    response
}

/// Reads a categories bundle: one workbook, or one CSV table per group
/// (the group is named after the file).
pub fn parse_bundle(files: &[(String, Vec<u8>)]) -> Result<CategoriesSchema> {
    let is_workbook = |name: &str| {
        let lower = name.to_ascii_lowercase();
        [".xlsx", ".xlsm", ".xlsb", ".xls", ".ods"].iter().any(|ext| lower.ends_with(ext))
    };
    match files {
        [] => Err(ServiceError::BadRequest("no categories files".into())),
        [(name, bytes)] if is_workbook(name) => Ok(parse_workbook(bytes)?),
        _ => {
            let tables = files
                .iter()
                .map(|(name, bytes)| {
                    let group = name
                        .rsplit(['/', '\\'])
                        .next()
                        .and_then(|base| base.strip_suffix(".csv").or_else(|| base.strip_suffix(".CSV")))
                        .ok_or_else(|| ServiceError::BadRequest(format!("{name:?} is not a workbook or .csv table")))?;
                    Ok(CategoryTable { group: group.to_owned(), csv: bytes.clone() })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(parse_category_tables(&tables)?)
        }
    }
}

#[derive(Default)]
struct Upload {
    name: Option<String>,
    export: Option<Vec<u8>>,
    categories: Vec<(String, Vec<u8>)>,
}

async fn read_upload(mut multipart: Multipart) -> Result<Upload> {
    let bad = |e: axum::extract::multipart::MultipartError| ServiceError::BadRequest(e.body_text());
    let mut upload = Upload::default();
    while let Some(field) = multipart.next_field().await.map_err(bad)? {
        let field_name = field.name().unwrap_or_default().to_owned();
        let file_name = field.file_name().map(str::to_owned);
        let bytes = field.bytes().await.map_err(bad)?.to_vec();
        match field_name.as_str() {
            "name" => {
                let text =
                    String::from_utf8(bytes).map_err(|_| ServiceError::BadRequest("name is not UTF-8".into()))?;
                upload.name = Some(text.trim().to_owned());
            }
            "export" => upload.export = Some(bytes),
            "categories" => {
                let file_name =
                    file_name.ok_or_else(|| ServiceError::BadRequest("categories part needs a filename".into()))?;
                upload.categories.push((file_name, bytes));
            }
            other => return Err(ServiceError::BadRequest(format!("unexpected form field {other:?}"))),
        }
    }
    Ok(upload)
}

async fn list_databases(State(ws): Ws) -> Result<Json<Vec<DatabaseInfo>>> {
    let infos = ws.names().iter().filter_map(|n| ws.snapshot(n).ok()).map(|s| s.info()).collect();
    Ok(Json(infos))
}

async fn create_database(State(ws): Ws, multipart: Multipart) -> Result<Response> {
    let upload = read_upload(multipart).await?;
    let name = upload.name.ok_or_else(|| ServiceError::BadRequest("missing name".into()))?;
    let export = upload.export.ok_or_else(|| ServiceError::BadRequest("missing export".into()))?;
    let export = parse_zotero_export(&export)?;
    let schema = parse_bundle(&upload.categories)?;
    let snapshot = blocking(move || ws.create(&name, &export, &schema)).await?;
    Ok(with_version(&snapshot, (StatusCode::CREATED, Json(snapshot.info()))))
}

#[derive(Serialize)]
struct DatabaseDetail<'a> {
    #[serde(flatten)]
    info: DatabaseInfo,
    columns: Vec<&'a str>,
    schema: &'a CategoriesSchema,
}

async fn get_database(State(ws): Ws, Path(name): Path<String>) -> Result<Response> {
    let snapshot = ws.snapshot(&name)?;
    let detail = DatabaseDetail { info: snapshot.info(), columns: snapshot.db.header(), schema: snapshot.db.schema() };
    Ok(Json(detail).into_response())
}

#[derive(Debug, Deserialize)]
pub struct RowsQuery {
    pub filter: Option<String>,
    pub offset: Option<usize>,
    pub limit: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RowsPage {
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub rows: Vec<Map<String, Value>>,
}

async fn list_rows(State(ws): Ws, Path(name): Path<String>, Query(q): Query<RowsQuery>) -> Result<Json<RowsPage>> {
    let snapshot = ws.snapshot(&name)?;
    let filter = parse_optional_filter(q.filter.as_deref())?;
    let keys = filtered_keys(&snapshot.db, filter.as_ref())?;
    let offset = q.offset.unwrap_or(0);
    let limit = q.limit.unwrap_or(DEFAULT_LIMIT);
    let rows = keys
        .iter()
        .skip(offset)
        .take(limit)
        .map(|k| snapshot.db.row_json(snapshot.db.row(k).expect("filtered key")))
        .collect();
    Ok(Json(RowsPage { total: keys.len(), offset, limit, rows }))
}

fn row_body(snapshot: &Snapshot, key: &str) -> Result<Map<String, Value>> {
    let row = snapshot.db.row(key).ok_or_else(|| lit_tag_core::Error::UnknownKey(key.to_owned()))?;
    Ok(snapshot.db.row_json(row))
}

async fn get_row(State(ws): Ws, Path((name, key)): Path<(String, String)>) -> Result<Json<Map<String, Value>>> {
    let snapshot = ws.snapshot(&name)?;
    Ok(Json(row_body(&snapshot, &key)?))
}

async fn patch_tags(
    State(ws): Ws,
    Path((name, key)): Path<(String, String)>,
    Json(body): Json<Map<String, Value>>,
) -> Result<Response> {
    let values = body
        .into_iter()
        .map(|(tag, value)| match value {
            Value::String(s) => Ok((tag, s)),
            Value::Null => Ok((tag, String::new())),
            other => Err(ServiceError::BadRequest(format!("value for {tag:?} must be a string, got {other}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let snapshot = blocking({
        let key = key.clone();
        move || ws.patch_tags(&name, &key, &values)
    })
    .await?;
    let row = row_body(&snapshot, &key)?;
    Ok(with_version(&snapshot, Json(row)))
}

async fn sync(State(ws): Ws, Path(name): Path<String>, body: Bytes) -> Result<Response> {
    let export = parse_zotero_export(&body)?;
    let (snapshot, report) = blocking(move || ws.sync(&name, &export)).await?;
    Ok(with_version(&snapshot, Json(report)))
}

async fn relink(State(ws): Ws, Path(name): Path<String>, body: Bytes) -> Result<Response> {
    let export = parse_zotero_export(&body)?;
    let (snapshot, report) = blocking(move || ws.relink(&name, &export)).await?;
    Ok(with_version(&snapshot, Json(report)))
}

async fn conform(State(ws): Ws, Path(name): Path<String>, multipart: Multipart) -> Result<Response> {
    let upload = read_upload(multipart).await?;
    let schema = parse_bundle(&upload.categories)?;
    let (snapshot, report) = blocking(move || ws.conform(&name, &schema)).await?;
    Ok(with_version(&snapshot, Json(report)))
}

#[derive(Debug, Deserialize)]
pub struct ReplaceBody {
    pub tag: String,
    pub old: String,
    pub new: String,
}

async fn replace_option(State(ws): Ws, Path(name): Path<String>, Json(body): Json<ReplaceBody>) -> Result<Response> {
    let (snapshot, summary) = blocking(move || ws.replace_option(&name, &body.tag, &body.old, &body.new)).await?;
    Ok(with_version(&snapshot, Json(summary)))
}

#[derive(Debug, Deserialize)]
pub struct MergeBody {
    pub names: Vec<String>,
    #[serde(default)]
    pub policy: MergePolicy,
    pub into: Option<String>,
}

async fn merge(State(ws): Ws, Json(body): Json<MergeBody>) -> Result<Response> {
    let into = match body.into {
        Some(into) => into,
        None => format!("{}_merged", body.names.first().map_or("database", String::as_str)),
    };
    let (snapshot, report) = blocking(move || ws.merge(&body.names, body.policy, &into)).await?;
    let body = serde_json::json!({ "database": snapshot.info(), "report": report });
    Ok(with_version(&snapshot, (StatusCode::CREATED, Json(body))))
}

#[derive(Debug, Deserialize)]
pub struct FilterQuery {
    pub filter: Option<String>,
}

async fn counts(State(ws): Ws, Path(name): Path<String>, Query(q): Query<FilterQuery>) -> Result<Response> {
    let snapshot = ws.snapshot(&name)?;
    let filter = parse_optional_filter(q.filter.as_deref())?;
    let result = match filter {
        None => option_counts(&snapshot.db, None),
        Some(f) => option_counts(&snapshot.db, Some(&filtered_keys(&snapshot.db, Some(&f))?)),
    };
    Ok(Json(result).into_response())
}

#[derive(Debug, Deserialize)]
pub struct CrosstabQuery {
    pub rows: String,
    pub cols: String,
    pub filter: Option<String>,
}

async fn get_crosstab(State(ws): Ws, Path(name): Path<String>, Query(q): Query<CrosstabQuery>) -> Result<Response> {
    let snapshot = ws.snapshot(&name)?;
    let filter = parse_optional_filter(q.filter.as_deref())?;
    Ok(Json(crosstab(&snapshot.db, &q.rows, &q.cols, filter.as_ref())?).into_response())
}

#[derive(Debug, Deserialize)]
pub struct DiffQuery {
    pub against: String,
}

/// Differences from the named version (side a) to the latest (side b).
async fn get_diff(State(ws): Ws, Path(name): Path<String>, Query(q): Query<DiffQuery>) -> Result<Response> {
    let snapshot = ws.snapshot(&name)?;
    let old = blocking({
        let ws = ws.clone();
        move || ws.load_version(&name, &q.against)
    })
    .await?;
    Ok(Json(diff(&old, &snapshot.db)).into_response())
}

#[derive(Debug, Deserialize)]
pub struct TableQuery {
    /// One CSV record of column names; `Key` is always included first.
    pub columns: Option<String>,
    pub filter: Option<String>,
}

pub fn parse_column_list(text: &str) -> Result<Vec<String>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
    let record = reader
        .records()
        .next()
        .transpose()
        .map_err(|e| ServiceError::BadRequest(format!("columns: {e}")))?
        .unwrap_or_default();
    Ok(record.iter().filter(|c| !c.is_empty()).map(str::to_owned).collect())
}

async fn table(State(ws): Ws, Path(name): Path<String>, Query(q): Query<TableQuery>) -> Result<Response> {
    let snapshot = ws.snapshot(&name)?;
    let filter = parse_optional_filter(q.filter.as_deref())?;
    let columns = parse_column_list(q.columns.as_deref().unwrap_or(""))?;
    let csv = export_table(&snapshot.db, &columns, filter.as_ref())?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv).into_response())
}

#[derive(Debug, Deserialize)]
pub struct ReportQuery {
    pub spec: Option<String>,
}

async fn report(State(ws): Ws, Path(name): Path<String>, Query(q): Query<ReportQuery>) -> Result<Response> {
    let snapshot = ws.snapshot(&name)?;
    let spec: ReportSpec = match q.spec.as_deref() {
        Some(text) if !text.trim().is_empty() => {
            serde_json::from_str(text).map_err(|e| ServiceError::BadRequest(format!("spec: {e}")))?
        }
        _ => ReportSpec { title: name.clone(), include_citation: true, ..Default::default() },
    };
    let html = build_report(&snapshot.db, &spec, ws.config().clock.now())?;
    Ok(([(header::CONTENT_TYPE, "text/html; charset=utf-8")], html).into_response())
}

async fn versions(State(ws): Ws, Path(name): Path<String>) -> Result<Json<Vec<String>>> {
    Ok(Json(ws.versions(&name)?))
}

#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::http::{HeaderMap, Method, Request, StatusCode};
use axum::Router;
use chrono::{DateTime, TimeZone, Utc};
use http_body_util::BodyExt;
use lit_tag_service::{router, Clock, Faults, Workspace, WorkspaceConfig};
use serde_json::Value;
use tower::ServiceExt;

pub const EXPORT: &str = "\u{feff}\"Key\",\"Item Type\",\"Publication Year\",\"Author\",\"Title\",\"Publication Title\",\"DOI\",\"Url\",\"Abstract Note\",\"Date Added\"\n\
ABCD1234,journalArticle,2021,\"Smith, Jane; Lee, Kim\",Kelp farming and carbon,Marine Policy,10.1000/kelp,https://doi.org/10.1000/kelp,\"Line one\nline two\",2023-01-02 10:00:00\n\
EFGH5678,journalArticle,2019,\"Adams, Bo\",Ocean alkalinity enhancement,Nature,10.1000/oae,,,2023-01-03 10:00:00\n\
IJKL9012,report,2020,\"Zhou, Li\",Iron fertilization <review>,,,,,2023-01-04 10:00:00\n";

pub const METHODS: &str = "StudyType,Region,Sampled,Comment,Summary\nsingle,multi,date,text,note\nField,Arctic,,,\nLab,Pacific,,,\nModel,Atlantic,,,\n";
pub const SCOPE: &str = "Approach\nSingle\nOcean alkalinity\nBiological\n";

pub struct FixedClock(pub DateTime<Utc>);

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        self.0
    }
}

pub fn start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 3, 1, 12, 0, 0).unwrap()
}

pub struct TestApp {
    pub dir: tempfile::TempDir,
    pub ws: Arc<Workspace>,
    pub router: Router,
    pub faults: Arc<Faults>,
    pub writer_wait: Duration,
}

pub fn config(faults: Arc<Faults>, writer_wait: Duration) -> WorkspaceConfig {
    WorkspaceConfig { writer_wait, clock: Arc::new(FixedClock(start())), faults }
}

impl TestApp {
    pub fn new() -> TestApp {
        TestApp::with_wait(Duration::from_secs(30))
    }

    pub fn with_wait(writer_wait: Duration) -> TestApp {
        let dir = tempfile::tempdir().unwrap();
        let faults = Arc::new(Faults::default());
        let ws = Arc::new(Workspace::open(dir.path(), config(faults.clone(), writer_wait)).unwrap());
        TestApp { router: router(ws.clone()), dir, ws, faults, writer_wait }
    }

    /// A fresh workspace over the same directory, as after a restart.
    pub fn reopen(&self) -> Arc<Workspace> {
        Arc::new(Workspace::open(self.dir.path(), config(Arc::new(Faults::default()), self.writer_wait)).unwrap())
    }

    pub async fn send(&self, method: Method, uri: &str, content_type: Option<&str>, body: Vec<u8>) -> Reply {
        let mut builder = Request::builder().method(method).uri(uri);
        if let Some(ct) = content_type {
            builder = builder.header("content-type", ct);
        }
        let response = self.router.clone().oneshot(builder.body(Body::from(body)).unwrap()).await.unwrap();
        let status = response.status();
        let headers = response.headers().clone();
        let body = response.into_body().collect().await.unwrap().to_bytes();
        Reply { status, headers, body }
    }

    pub async fn get(&self, uri: &str) -> Reply {
        self.send(Method::GET, uri, None, Vec::new()).await
    }

    pub async fn json(&self, method: Method, uri: &str, body: Value) -> Reply {
        self.send(method, uri, Some("application/json"), serde_json::to_vec(&body).unwrap()).await
    }

    pub async fn multipart(&self, uri: &str, parts: &[Part<'_>]) -> Reply {
        let (ct, body) = multipart_body(parts);
        self.send(Method::POST, uri, Some(&ct), body).await
    }

    /// Creates database `name` from the fixtures.
    pub async fn create(&self, name: &str) -> Reply {
        let reply = self
            .multipart(
                "/api/databases",
                &[
                    Part::Text("name", name),
                    Part::File("export", "export.csv", EXPORT.as_bytes()),
                    Part::File("categories", "Methods.csv", METHODS.as_bytes()),
                    Part::File("categories", "Scope.csv", SCOPE.as_bytes()),
                ],
            )
            .await;
        assert_eq!(reply.status, StatusCode::CREATED, "{}", reply.text());
        reply
    }
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Bytes,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", self.text()))
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }

    pub fn error(&self) -> String {
        self.json()["error"].as_str().unwrap_or_default().to_owned()
    }

    pub fn version(&self) -> Option<String> {
        self.headers.get("x-lit-tag-version").map(|v| v.to_str().unwrap().to_owned())
    }
}

pub enum Part<'a> {
    Text(&'a str, &'a str),
    File(&'a str, &'a str, &'a [u8]),
}

pub fn multipart_body(parts: &[Part<'_>]) -> (String, Vec<u8>) {
    let boundary = "lit-tag-test-boundary-7d2f";
    let mut body = Vec::new();
    for part in parts {
        body.extend_from_slice(format!("--{boundary}\r\n").as_bytes());
        match part {
            Part::Text(name, value) => {
                body.extend_from_slice(format!("Content-Disposition: form-data; name=\"{name}\"\r\n\r\n").as_bytes());
                body.extend_from_slice(value.as_bytes());
            }
            Part::File(name, file, bytes) => {
                body.extend_from_slice(
                    format!("Content-Disposition: form-data; name=\"{name}\"; filename=\"{file}\"\r\nContent-Type: text/csv\r\n\r\n")
                        .as_bytes(),
                );
                body.extend_from_slice(bytes);
            }
        }
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{boundary}--\r\n").as_bytes());
    (format!("multipart/form-data; boundary={boundary}"), body)
}

pub fn encode(s: &str) -> String {
    let mut out = String::new();
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || b"-_.~".contains(&b) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

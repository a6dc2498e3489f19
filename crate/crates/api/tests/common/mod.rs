#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use reqwest::{Method, RequestBuilder, StatusCode};
use serde_json::{json, Value};
use tempfile::TempDir;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

use vidnote_api::media::write_synthetic_y4m;
use vidnote_api::model::{UserPatch, VideoView};
use vidnote_api::{Actor, App, Config, PasswordCost};
use vidnote_core::UserId;
use vidnote_realtime::ServerMessage;
use vidnote_store::Role;
use vidnote_tracker::synthetic::SyntheticSequence;

pub const PASSWORD: &str = "correct horse battery";

pub struct Server {
    pub app: Arc<App>,
    pub base: String,
    pub http: reqwest::Client,
    pub dir: TempDir,
    admin: Session,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
}

#[derive(Debug, Clone)]
pub struct Session {
    pub id: UserId,
    pub role: Role,
    pub token: String,
}

impl Session {
    pub fn actor(&self) -> Actor {
        Actor { id: self.id, role: self.role }
    }
}

pub fn test_config(dir: &std::path::Path) -> Config {
    let mut c = Config::new(dir);
    c.token_secret = Some(b"test secret".to_vec());
    c.password_cost = PasswordCost::minimal();
    c.tracker_workers = 2;
    c
}

impl Server {
    pub async fn start() -> Self {
        Self::start_with(|_| {}).await
    }

    pub async fn start_with(tweak: impl FnOnce(&mut Config)) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut config = test_config(dir.path());
        tweak(&mut config);
        let app = Arc::new(App::open(config).unwrap());
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let router = vidnote_api::router(Arc::clone(&app));
        tokio::spawn(async move {
            axum::serve(listener, router)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
                .unwrap();
        });
        let admin_view = app.create_admin("root@example.org", PASSWORD, "Root").unwrap();
        let admin = Session {
            id: admin_view.id,
            role: Role::Admin,
            token: app.tokens().issue(admin_view.id, Role::Admin).0,
        };
        Self { app, base, http: reqwest::Client::new(), dir, admin, shutdown: Some(tx) }
    }

    pub fn admin(&self) -> Session {
        self.admin.clone()
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}/api/v1{path}", self.base)
    }

    pub fn ws_url(&self, token: &str) -> String {
        format!("{}/ws?token={token}", self.base.replacen("http", "ws", 1))
    }

    pub fn req(&self, method: Method, path: &str, who: &Session) -> RequestBuilder {
        self.http.request(method, self.url(path)).bearer_auth(&who.token)
    }

    /// Signs up, activates and promotes a user, then logs in over HTTP.
    pub async fn user(&self, role: Role) -> Session {
        let email = format!("{}@example.org", UserId::new());
        let resp = self
            .http
            .post(self.url("/auth/signup"))
            .json(&json!({ "email": email, "displayName": "Someone", "password": PASSWORD }))
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), StatusCode::CREATED);
        let id: UserId = serde_json::from_value(resp.json::<Value>().await.unwrap()["id"].clone()).unwrap();
        let admin = self.admin.actor();
        self.app.activate_user(admin, id).unwrap();
        self.app.update_user(admin, id, &UserPatch { role: Some(role), display_name: None }).unwrap();
        let resp = self
            .http
            .post(self.url("/auth/login"))
            .json(&json!({ "email": email, "password": PASSWORD }))
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), StatusCode::OK);
        let token = resp.json::<Value>().await.unwrap()["token"].as_str().unwrap().to_string();
        Session { id, role, token }
    }

    pub async fn upload(&self, who: &Session, name: &str, bytes: Vec<u8>) -> reqwest::Response {
        let part = reqwest::multipart::Part::bytes(bytes).file_name("clip.y4m").mime_str("video/x-yuv4mpeg").unwrap();
        let form = reqwest::multipart::Form::new().text("name", name.to_string()).part("file", part);
        self.req(Method::POST, "/videos", who).multipart(form).send().await.unwrap()
    }

    pub async fn upload_synthetic(&self, who: &Session, name: &str, seq: &SyntheticSequence) -> VideoView {
        let resp = self.upload(who, name, synthetic_bytes(seq)).await;
        assert_eq!(resp.status(), StatusCode::CREATED, "{}", resp.text().await.unwrap());
        resp.json().await.unwrap()
    }

    pub async fn json(&self, method: Method, path: &str, who: &Session, body: Option<Value>) -> (StatusCode, Value) {
        let mut rb = self.req(method, path, who);
        if let Some(b) = body {
            rb = rb.json(&b);
        }
        let resp = rb.send().await.unwrap();
        let status = resp.status();
        let text = resp.text().await.unwrap();
        let value = if text.is_empty() { Value::Null } else { serde_json::from_str(&text).unwrap_or(Value::String(text)) };
        (status, value)
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

pub fn synthetic_bytes(seq: &SyntheticSequence) -> Vec<u8> {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("clip.y4m");
    write_synthetic_y4m(seq, &path).unwrap();
    std::fs::read(path).unwrap()
}

pub struct WsClient {
    stream: WebSocketStream<MaybeTlsStream<TcpStream>>,
}

#[derive(Debug, PartialEq)]
pub enum WsEvent {
    Message(ServerMessage),
    Closed(Option<u16>),
    Timeout,
}

impl WsClient {
    pub async fn connect(url: &str) -> Self {
        let (stream, _) = tokio_tungstenite::connect_async(url).await.unwrap();
        Self { stream }
    }

    pub async fn send(&mut self, v: Value) {
        self.stream.send(Message::Text(v.to_string().into())).await.unwrap();
    }

    pub async fn subscribe(&mut self, video: impl serde::Serialize, group: Option<impl serde::Serialize>) -> ServerMessage {
        self.send(json!({ "type": "subscribe", "videoId": video, "groupId": group })).await;
        match self.next(Duration::from_secs(5)).await {
            WsEvent::Message(m) => m,
            other => panic!("no reply to subscribe: {other:?}"),
        }
    }

    pub async fn next(&mut self, wait: Duration) -> WsEvent {
        loop {
            match tokio::time::timeout(wait, self.stream.next()).await {
                Err(_) => return WsEvent::Timeout,
                Ok(None) => return WsEvent::Closed(None),
                Ok(Some(Err(_))) => return WsEvent::Closed(None),
                Ok(Some(Ok(Message::Text(t)))) => return WsEvent::Message(serde_json::from_str(t.as_str()).unwrap()),
                Ok(Some(Ok(Message::Close(frame)))) => return WsEvent::Closed(frame.map(|f| f.code.into())),
                Ok(Some(Ok(_))) => continue,
            }
        }
    }

    /// Messages until `wait` passes without one.
    pub async fn drain(&mut self, wait: Duration) -> Vec<ServerMessage> {
        let mut out = Vec::new();
        while let WsEvent::Message(m) = self.next(wait).await {
            out.push(m);
        }
        out
    }
}

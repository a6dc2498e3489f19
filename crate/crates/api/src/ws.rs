//! `/ws` transport: relays a hub connection over a websocket.

use std::sync::Arc;

use axum::extract::ws::{CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use tracing::debug;

use vidnote_realtime::{ClientMessage, Connection, Outbound, ServerMessage};

use crate::service::{Actor, App};

pub async fn upgrade(State(app): State<Arc<App>>, actor: Actor, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| session(app, actor, socket))
}

fn error_message(code: &str, message: impl Into<String>) -> ServerMessage {
    ServerMessage::Error { code: code.to_string(), message: message.into() }
}

async fn handle(app: &Arc<App>, actor: Actor, conn: &Arc<Connection>, text: &str) {
    let msg = match serde_json::from_str::<ClientMessage>(text) {
        Ok(m) => m,
        Err(e) => {
            conn.send(&error_message("BadRequest", e.to_string()));
            return;
        }
    };
    match msg {
        ClientMessage::Subscribe { .. } => {
            let key = msg.key();
            let (app, conn) = (Arc::clone(app), Arc::clone(conn));
            let outcome = tokio::task::spawn_blocking(move || {
                if let Err(e) = app.subscribe(actor, &conn, key) {
                    conn.send(&error_message(e.code(), e.to_string()));
                }
            })
            .await;
            if let Err(e) = outcome {
                debug!(error = %e, "subscribe task failed");
            }
        }
        ClientMessage::Unsubscribe { .. } => {
            let key = msg.key();
            app.hub().unsubscribe(conn, key);
            conn.send(&ServerMessage::Unsubscribed { video_id: key.video_id, group_id: key.group_id });
        }
    }
}

async fn session(app: Arc<App>, actor: Actor, mut socket: WebSocket) {
    let conn = Arc::new(app.hub().connect());
    loop {
        tokio::select! {
            out = conn.recv() => match out {
                Some(Outbound::Text(text)) => {
                    if socket.send(Message::Text(text.as_ref().into())).await.is_err() {
                        break;
                    }
                }
                Some(Outbound::Close { code, reason }) => {
                    let frame = CloseFrame { code, reason: reason.into() };
                    let _ = socket.send(Message::Close(Some(frame))).await;
                    break;
                }
                None => break,
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Text(text))) => handle(&app, actor, &conn, text.as_str()).await,
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                Some(Ok(_)) => {}
            },
        }
    }
    debug!(connection = conn.id(), "websocket closed");
}

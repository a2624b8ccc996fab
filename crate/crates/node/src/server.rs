use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::{header, Method, StatusCode, Uri};
use axum::response::IntoResponse;
use axum::Router;
use tokio::net::TcpListener;

use studchain_core::{ChainStore, DifficultySchedule, Digest};

use crate::explorer::Explorer;

async fn route(State(explorer): State<Arc<Explorer>>, method: Method, uri: Uri) -> impl IntoResponse {
    let r = explorer.handle(method.as_str(), uri.path());
    let status = StatusCode::from_u16(r.status).expect("known status");
    (status, [(header::CONTENT_TYPE, "application/json")], r.body)
}

/// Serves the explorer on `listener` until the task is dropped.
pub async fn serve(explorer: Arc<Explorer>, listener: TcpListener) -> io::Result<()> {
    let app = Router::new().fallback(route).with_state(explorer);
    axum::serve(listener, app).await
}

/// Polls the chain file and swaps in a new snapshot whenever its bytes
/// change and still validate. A file that fails validation is ignored and
/// the previous snapshot stays live.
pub async fn reload_loop(explorer: Arc<Explorer>, path: PathBuf, schedule: DifficultySchedule, every: Duration) {
    let mut seen = None;
    loop {
        tokio::time::sleep(every).await;
        let Ok(bytes) = std::fs::read(&path) else {
            continue;
        };
        let digest = Digest::of(&bytes);
        if seen == Some(digest) {
            continue;
        }
        seen = Some(digest);
        match ChainStore::read_from(&bytes[..], schedule) {
            Ok(store) => explorer.replace(store),
            Err(e) => eprintln!("reload skipped: {}: {e}", e.name()),
        }
    }
}

/// Runs the explorer with periodic reloads; blocks until the server fails.
pub fn run(
    explorer: Arc<Explorer>,
    addr: SocketAddr,
    chain: PathBuf,
    schedule: DifficultySchedule,
    every: Duration,
) -> io::Result<()> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = TcpListener::bind(addr).await?;
        eprintln!("serving on http://{}", listener.local_addr()?);
        tokio::spawn(reload_loop(explorer.clone(), chain, schedule, every));
        serve(explorer, listener).await
    })
}

//! Serve the JSON API on a local port with a simulated model behind it.
//! Useful for developing the browser front end without an API key.
//!
//! cargo run --example http_server -- 127.0.0.1:8080
//! curl localhost:8080/instruments

use std::sync::Arc;

use selfclone::http::{router, AppState};
use selfclone::report::ReportOptions;
use selfclone::simulate::sim_study;
use selfclone::store::Store;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let addr = std::env::args().nth(1).unwrap_or_else(|| "127.0.0.1:8080".into());
    let (study, _clock) = sim_study(Arc::new(Store::in_memory()), 42);
    let app = router(AppState { study: Arc::new(study), token: None, report: ReportOptions::default() });
    let listener = tokio::net::TcpListener::bind(&addr).await?;
    println!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app).with_graceful_shutdown(async { tokio::signal::ctrl_c().await.ok(); }).await?;
    Ok(())
}

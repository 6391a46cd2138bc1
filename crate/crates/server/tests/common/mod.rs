#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use ypsp_core::geo::Gazetteer;
use ypsp_core::relax::PenaltyTable;
use ypsp_core::schema::Schema;
use ypsp_core::Directory;
use ypsp_server::service::{self, AppState};
use ypsp_server::EndpointConfig;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

pub fn read(rel: &str) -> Vec<u8> {
    std::fs::read(fixture(rel)).unwrap()
}

pub fn directory(schema: &str, data: &[&str]) -> Directory {
    let schema = Schema::load(&read(schema)).unwrap();
    let gaz = Gazetteer::parse(&String::from_utf8(read("gazetteer.tsv")).unwrap()).unwrap();
    let mut d = Directory::new(schema, gaz, PenaltyTable::default());
    for f in data {
        d.load_ntriples(&read(f)).unwrap();
    }
    d.refresh_geo();
    d
}

pub fn sample_directory() -> Directory {
    directory("schema.json", &["restaurants.nt"])
}

pub fn smoke_directory() -> Directory {
    directory("smoke/schema.json", &["restaurants.nt", "smoke/data.nt"])
}

pub async fn serve(dir: Directory) -> (String, Arc<AppState>) {
    serve_with(dir, Duration::from_secs(2), Vec::new()).await
}

pub async fn serve_with(dir: Directory, writer_timeout: Duration, endpoints: Vec<EndpointConfig>) -> (String, Arc<AppState>) {
    let state = AppState::new(dir, writer_timeout, endpoints);
    let (addr, _) = service::spawn(state.clone(), SocketAddr::from(([127, 0, 0, 1], 0))).await.unwrap();
    (format!("http://{addr}"), state)
}

pub async fn get_sparql(client: &reqwest::Client, base: &str, query: &str) -> reqwest::Response {
    let url = reqwest::Url::parse_with_params(&format!("{base}/sparql"), &[("query", query)]).unwrap();
    client.get(url).send().await.unwrap()
}

pub async fn post_json(client: &reqwest::Client, url: &str, body: &serde_json::Value) -> reqwest::Response {
    client
        .post(url)
        .header("content-type", "application/json")
        .body(body.to_string())
        .send()
        .await
        .unwrap()
}

pub async fn json(resp: reqwest::Response) -> serde_json::Value {
    serde_json::from_slice(&resp.bytes().await.unwrap()).unwrap()
}

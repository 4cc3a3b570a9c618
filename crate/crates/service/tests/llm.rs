use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use touchstone_core::lang::{
    client_request, compose_explanation, default_prompt_rules, parse_query, Backend, ExplanationClient,
    ExplanationInput, MeasuredObject, RipenessRules,
};
use touchstone_core::scene::{FruitClass, Workspace};
use touchstone_service::llm::HttpExplanationClient;

type Seen = Arc<Mutex<Vec<(Option<String>, Value)>>>;

async fn spawn(app: Router) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}")
}

fn input() -> ExplanationInput {
    ExplanationInput {
        intent: parse_query("How ripe is the banana?").unwrap(),
        objects: vec![MeasuredObject {
            label: "banana".into(),
            class: FruitClass::Banana,
            position: [0.0, 0.0],
            hardness: 63.0,
        }],
        not_found: vec![],
        workspace: Workspace::default(),
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    tokio::task::spawn_blocking(f).await.unwrap()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn posts_structured_request_with_bearer_key() {
    let seen: Seen = Arc::default();
    let s2 = seen.clone();
    let app = Router::new().route(
        "/complete",
        post(move |headers: HeaderMap, Json(body): Json<Value>| {
            let seen = s2.clone();
            async move {
                let auth = headers.get("authorization").map(|v| v.to_str().unwrap().to_string());
                seen.lock().unwrap().push((auth, body));
                Json(json!({ "text": "The banana in the center is ripe." }))
            }
        }),
    );
    let url = format!("{}/complete", spawn(app).await);
    let text = blocking(move || {
        let client = HttpExplanationClient::new(url, Duration::from_secs(5), Some("k3y".into())).unwrap();
        let rules = RipenessRules::default();
        let prompt = default_prompt_rules(&rules);
        compose_explanation(&input(), &rules, Backend::External { client: &client, prompt_rules: &prompt })
    })
    .await;
    assert_eq!(text.text, "The banana in the center is ripe.");
    assert!(!text.degraded);

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 1);
    assert_eq!(seen[0].0.as_deref(), Some("Bearer k3y"));
    let rules = RipenessRules::default();
    let expected = client_request(&input(), &rules, &default_prompt_rules(&rules));
    assert_eq!(seen[0].1, serde_json::to_value(expected).unwrap());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn failures_degrade_to_the_template() {
    let app = Router::new()
        .route("/broken", post(|| async { (StatusCode::INTERNAL_SERVER_ERROR, "boom") }))
        .route("/garbled", post(|| async { Json(json!({ "answer": 1 })) }))
        .route(
            "/slow",
            post(|| async {
                tokio::time::sleep(Duration::from_secs(3)).await;
                Json(json!({ "text": "late" }))
            }),
        );
    let base = spawn(app).await;
    for path in ["broken", "garbled", "slow"] {
        let url = format!("{base}/{path}");
        let (direct, composed) = blocking(move || {
            let client = HttpExplanationClient::new(url, Duration::from_millis(300), None).unwrap();
            let rules = RipenessRules::default();
            let req = client_request(&input(), &rules, &[]);
            let direct = client.complete(&req).is_err();
            let composed = compose_explanation(&input(), &rules, Backend::External { client: &client, prompt_rules: &[] });
            (direct, composed)
        })
        .await;
        assert!(direct, "{path} should fail");
        assert!(composed.degraded, "{path}");
        assert!(composed.text.contains("banana"), "{path}: {}", composed.text);
    }
}

#[test]
fn no_endpoint_means_no_client() {
    let cfg = touchstone_core::config::LlmConfig::default();
    assert!(HttpExplanationClient::from_config(&cfg).unwrap().is_none());
}

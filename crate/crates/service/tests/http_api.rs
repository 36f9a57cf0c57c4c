use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use chrono::{Duration, TimeZone, Utc};
use fairlicit_core::elicitation::{replay, NextItem, Question, Session};
use fairlicit_core::fixtures::{self, FixturePairSet};
use fairlicit_core::metrics::{fairness_report, group_view_summary, Criterion, Metric};
use fairlicit_core::similarity::{nearest_discordant_pairs, rank_by_similarity, WeightVector};
use fairlicit_core::training::{train, ConstrainedModel, TrainingConfig};
use fairlicit_core::wire::to_json_line;
use fairlicit_core::{CaseId, Dataset};
use fairlicit_service::api::{ModelRecord, SessionStatus};
use fairlicit_service::{http, ErrorBody, Service};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// A service whose clock advances one second per reading.
fn service(root: &Path) -> Service {
    let ticks = Arc::new(AtomicI64::new(0));
    let epoch = Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap();
    Service::open(root, 0.05)
        .unwrap()
        .with_clock(move || epoch + Duration::seconds(ticks.fetch_add(1, Ordering::SeqCst)))
}

fn app(root: &Path) -> Router {
    http::router(service(root))
}

async fn call(app: &Router, method: Method, uri: &str, body: &str) -> (StatusCode, String) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn get(app: &Router, uri: &str) -> (StatusCode, String) {
    call(app, Method::GET, uri, "").await
}

async fn post(app: &Router, uri: &str, body: &str) -> (StatusCode, String) {
    call(app, Method::POST, uri, body).await
}

fn error_name(body: &str) -> String {
    serde_json::from_str::<ErrorBody>(body).unwrap().error
}

fn parse(body: &str) -> Value {
    serde_json::from_str(body).unwrap()
}

#[tokio::test]
async fn synthetic_datasets_are_deterministic_with_distinct_ids() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (s1, a) = post(&app, "/datasets/synthetic", r#"{"n":1,"seed":7}"#).await;
    let (s2, b) = post(&app, "/datasets/synthetic", r#"{"n":1,"seed":7}"#).await;
    assert_eq!((s1, s2), (StatusCode::CREATED, StatusCode::CREATED));
    let (a, b) = (parse(&a)["id"].as_str().unwrap().to_string(), parse(&b)["id"].as_str().unwrap().to_string());
    assert_ne!(a, b);
    let da = Dataset::from_json(&get(&app, &format!("/datasets/{a}")).await.1).unwrap();
    let db = Dataset::from_json(&get(&app, &format!("/datasets/{b}")).await.1).unwrap();
    assert_eq!(da.len(), 1);
    assert_eq!(da.cases(), db.cases());
}

#[tokio::test]
async fn unknown_dataset_is_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, body) = get(&app, "/datasets/nope").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(error_name(&body), "UnknownDataset");
    let (status, body) = get(&app, "/datasets/bad.id").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_name(&body), "BadId");
    let (status, _) = get(&app, "/no/such/route").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn imported_dataset_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let ds = fixtures::odds_example(true);
    let (status, body) = post(&app, "/datasets?id=mine", &ds.to_json()).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let (_, text) = get(&app, "/datasets/mine").await;
    assert_eq!(Dataset::from_json(&text).unwrap(), ds);
    let (status, body) = post(&app, "/datasets?id=mine", &ds.to_json()).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(error_name(&body), "AlreadyExists");

    let csv = json!({ "schema": ds.schema(), "csv": ds.to_csv(), "threshold": ds.threshold() });
    let (status, body) = post(&app, "/datasets", &csv.to_string()).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let id = parse(&body)["id"].as_str().unwrap().to_string();
    let back = Dataset::from_json(&get(&app, &format!("/datasets/{id}")).await.1).unwrap();
    assert_eq!(back.cases(), ds.cases());

    let broken = ds.to_csv().replacen(",low", ",medium", 1);
    let csv = json!({ "schema": ds.schema(), "csv": broken });
    let (status, body) = post(&app, "/datasets", &csv.to_string()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_name(&body), "ValueError");

    let (_, list) = get(&app, "/datasets").await;
    let ids: Vec<String> = parse(&list)
        .as_array()
        .unwrap()
        .iter()
        .map(|d| d["id"].as_str().unwrap().to_string())
        .collect();
    for want in ["fixture", "mine", "odds_violated", "parity_satisfied"] {
        assert!(ids.iter().any(|i| i == want), "{ids:?}");
    }
}

#[tokio::test]
async fn metrics_match_direct_calls() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let parity = fixtures::parity_example(true);
    let (status, body) = get(&app, "/datasets/parity_violated/metrics?attribute=victim_age").await;
    assert_eq!(status, StatusCode::OK);
    let direct = group_view_summary(&parity, &["victim_age"], Metric::PositiveRate, 0.05).unwrap();
    assert_eq!(body, to_json_line(&direct));

    let odds = fixtures::odds_example(true);
    let (_, body) = get(
        &app,
        "/datasets/odds_violated/fairness?criterion=equalized_odds&attribute=victim_age&epsilon=0.05",
    )
    .await;
    let direct = fairness_report(&odds, Criterion::EqualizedOdds, "victim_age", 0.05).unwrap();
    assert_eq!(body, to_json_line(&direct));
    assert!(body.contains("\"verdict\":\"violated\""), "{body}");

    let (status, body) = get(&app, "/datasets/fixture/metrics?attribute=shoe_size").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_name(&body), "UnknownAttribute");

    let (status, body) = get(&app, "/datasets/fixture/fairness?criterion=vibes&attribute=victim_age").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_name(&body), "BadQuery");

    let (status, body) = get(&app, "/datasets/fixture/metrics").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_name(&body), "BadQuery");
}

#[tokio::test]
async fn cross_attribute_metrics_have_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let ds = fixtures::elicitation_dataset();
    let (status, body) = get(
        &app,
        "/datasets/fixture/metrics?attribute=victim_age&attribute2=family_race&metric=fpr",
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let direct =
        group_view_summary(&ds, &["victim_age", "family_race"], Metric::Fpr, 0.05).unwrap();
    assert_eq!(body, to_json_line(&direct));
    let n = ds.schema().feature("victim_age").unwrap().values.len();
    let m = ds.schema().feature("family_race").unwrap().values.len();
    assert_eq!(parse(&body)["rows"].as_array().unwrap().len(), n * m);
}

#[tokio::test]
async fn similarity_and_discordant_match_direct_calls() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let ds = fixtures::elicitation_dataset();
    let k = ds.schema().len();
    let mut w = vec![1.0; k];
    w[0] = 3.0;
    w[k - 1] = 0.0;
    let list: Vec<String> = w.iter().map(|x| x.to_string()).collect();
    let list = list.join(",");
    let (status, body) = get(&app, &format!("/datasets/fixture/similarity?reference=p01a&weights={list}")).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let wv = WeightVector::new(w).unwrap();
    let direct = rank_by_similarity(&ds, &CaseId::new("p01a"), &wv).unwrap();
    assert_eq!(body, to_json_line(&direct));

    let (status, body) = get(&app, "/datasets/fixture/similarity?reference=zzz").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(error_name(&body), "UnknownCase");

    let mut bad = vec!["1"; k];
    bad[2] = "-1";
    let (status, body) = get(
        &app,
        &format!("/datasets/fixture/similarity?reference=p01a&weights={}", bad.join(",")),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_name(&body), "BadWeights");

    let (status, body) = get(&app, "/datasets/fixture/similarity?reference=p01a&weights=1,2").await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");

    let uniform = WeightVector::uniform(k);
    let everything = nearest_discordant_pairs(&ds, &uniform, usize::MAX).unwrap();
    let (status, body) = get(&app, "/datasets/fixture/discordant?k=1000000").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, to_json_line(&everything));
    let (_, body) = get(&app, "/datasets/fixture/discordant").await;
    assert_eq!(body, to_json_line(&everything[..10.min(everything.len())].to_vec()));
}

/// Answers whatever is served with the first choice it accepts.
fn first_choice(q: &Question) -> &'static str {
    match q {
        Question::Pairwise(_) => "prioritize_a",
        Question::GroupFairness(_) => "yes",
    }
}

async fn next(app: &Router, id: &str) -> NextItem {
    let (status, body) = get(app, &format!("/sessions/{id}/next")).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    serde_json::from_str(&body).unwrap()
}

async fn advance(app: &Router, id: &str) -> (StatusCode, String) {
    post(app, &format!("/sessions/{id}/advance"), "").await
}

#[tokio::test]
async fn scripted_session_replays() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, body) = post(&app, "/sessions", r#"{"seed":42,"participant":{"role":"parent"}}"#).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let started: SessionStatus = serde_json::from_str(&body).unwrap();
    let id = started.session_id.clone();
    assert_eq!((started.stage, started.transcript_len), (1, 0));

    let (_, fresh) = get(&app, &format!("/sessions/{id}/export")).await;
    assert_eq!(Session::import(&fresh).unwrap().transcript.len(), 0);

    // stage 1: every fixed question
    while let NextItem::Question(q) = next(&app, &id).await {
        // serving twice does not duplicate the question
        let again = next(&app, &id).await;
        assert_eq!(again, NextItem::Question(q.clone()));
        let payload = json!({ "question_id": q.id(), "choice": first_choice(&q) });
        let (status, body) = post(&app, &format!("/sessions/{id}/responses"), &payload.to_string()).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        let (status, body) = post(&app, &format!("/sessions/{id}/responses"), &payload.to_string()).await;
        assert_eq!(status, StatusCode::CONFLICT, "{body}");
        assert_eq!(error_name(&body), "DuplicateResponse");
    }
    let (status, body) = post(&app, &format!("/sessions/{id}/responses"), r#"{"question_id":"pair-1","choice":"maybe"}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
    assert_eq!(advance(&app, &id).await.0, StatusCode::OK);

    // stage 2: a few random pairs
    for _ in 0..3 {
        let NextItem::Question(q) = next(&app, &id).await else { panic!("stage 2 serves pairs") };
        let payload = json!({ "question_id": q.id(), "choice": "equal", "rationale": "alike" });
        let (status, _) = post(&app, &format!("/sessions/{id}/responses"), &payload.to_string()).await;
        assert_eq!(status, StatusCode::OK);
    }
    assert_eq!(advance(&app, &id).await.0, StatusCode::OK);

    // stage 3: explore weights
    let k = fixtures::schema().len();
    let mut w = vec![1.0; k];
    w[1] = 0.5;
    let event = json!({ "type": "weight_change", "weights": w });
    let (status, body) = post(&app, &format!("/sessions/{id}/events"), &event.to_string()).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let (status, _) = post(&app, &format!("/sessions/{id}/events"), r#"{"type":"dance"}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(advance(&app, &id).await.0, StatusCode::OK);

    // stage 4
    let event = json!({ "type": "group_query", "attributes": ["victim_age"], "metric": "positive_rate" });
    let (status, _) = post(&app, &format!("/sessions/{id}/events"), &event.to_string()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(advance(&app, &id).await.0, StatusCode::OK);
    let (status, body) = advance(&app, &id).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(error_name(&body), "SessionClosed");

    let (_, body) = get(&app, &format!("/sessions/{id}")).await;
    let status: SessionStatus = serde_json::from_str(&body).unwrap();
    assert!(status.closed);
    assert_eq!(status.elicited_weights, Some(WeightVector::new(w).unwrap()));

    let (_, log) = get(&app, &format!("/sessions/{id}/export")).await;
    let session = Session::import(&log).unwrap();
    let rebuilt = replay(&session, &fixtures::elicitation_dataset(), &FixturePairSet::bundled()).unwrap();
    assert_eq!(rebuilt.export(), log);
}

#[tokio::test]
async fn session_errors_map_to_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, body) = get(&app, "/sessions/ghost/next").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(error_name(&body), "UnknownSession");

    let (status, _) = post(&app, "/sessions", r#"{"session_id":"a1"}"#).await;
    assert_eq!(status, StatusCode::CREATED);
    let (status, body) = post(&app, "/sessions", r#"{"session_id":"a1"}"#).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(error_name(&body), "AlreadyExists");

    let (status, body) = advance(&app, "a1").await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(error_name(&body), "IncompleteStage");

    let (status, body) = post(&app, "/sessions/a1/responses", "not json").await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");

    let (status, body) = post(&app, "/sessions", r#"{"dataset_ref":"nowhere"}"#).await;
    assert_eq!(status, StatusCode::NOT_FOUND, "{body}");
    assert_eq!(error_name(&body), "UnknownDataset");
}

async fn import_replay_logs(app: &Router) -> Vec<String> {
    let mut ids = Vec::new();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(repo_root().join("fixtures/12participants"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    paths.sort();
    for p in paths {
        let (status, body) = post(app, "/sessions/import", &std::fs::read_to_string(&p).unwrap()).await;
        assert_eq!(status, StatusCode::CREATED, "{body}");
        ids.push(serde_json::from_str::<SessionStatus>(&body).unwrap().session_id);
    }
    ids
}

#[tokio::test]
async fn summary_over_replay_logs() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let ids = import_replay_logs(&app).await;
    assert_eq!(ids.len(), 12);

    let (status, csv) = get(&app, "/analysis/summary?format=csv").await;
    assert_eq!(status, StatusCode::OK);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "criterion,yes,total,support");
    assert!(lines.contains(&"equalized_odds,40,60,0.667"), "{csv}");
    assert!(lines.contains(&"statistical_parity,26,60,0.433"), "{csv}");
    assert!(lines.contains(&"unawareness,25,60,0.417"), "{csv}");

    let all = get(&app, "/analysis/summary").await.1;
    let listed = get(&app, &format!("/analysis/summary?sessions={}", ids.join(","))).await.1;
    assert_eq!(all, listed);
    for table in ["attribute", "pair", "consistency"] {
        let (status, body) = get(&app, &format!("/analysis/summary?format=csv&table={table}")).await;
        assert_eq!(status, StatusCode::OK);
        assert!(body.lines().count() > 1, "{table}: {body}");
    }
    let (status, _) = get(&app, "/analysis/summary?format=xml").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = get(&app, "/analysis/summary?sessions=S1,ghost").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn summary_without_sessions_is_a_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, body) = get(&app, "/analysis/summary").await;
    assert_eq!(status, StatusCode::CONFLICT, "{body}");
    assert_eq!(error_name(&body), "EmptyMatrix");
}

fn no_penalties() -> TrainingConfig {
    TrainingConfig {
        lambda_pair: 0.0,
        lambda_parity: 0.0,
        lambda_odds: 0.0,
        max_iterations: 200,
        ..TrainingConfig::default()
    }
}

#[tokio::test]
async fn training_matches_direct_call() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let req = json!({ "dataset": "fixture", "config": no_penalties() });
    let (status, body) = post(&app, "/train", &req.to_string()).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let record: ModelRecord = serde_json::from_str(&body).unwrap();
    assert_eq!(record.constraints, 0);

    let (model, report) = train(&fixtures::elicitation_dataset(), &[], &no_penalties()).unwrap();
    assert_eq!(record.report, report);
    let (_, stored) = get(&app, &format!("/models/{}", record.model_id)).await;
    assert_eq!(stored, model.to_json());
    let (_, stored_report) = get(&app, &format!("/models/{}/report", record.model_id)).await;
    assert_eq!(stored_report, body);
}

#[tokio::test]
async fn training_on_replay_logs_derives_constraints() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    import_replay_logs(&app).await;
    let config = TrainingConfig {
        max_iterations: 50,
        ..TrainingConfig::default()
    };
    let req = json!({ "sessions": ["S1", "S2", "P1"], "policy": "per_participant", "config": config });
    let (status, body) = post(&app, "/train", &req.to_string()).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let record: ModelRecord = serde_json::from_str(&body).unwrap();
    assert_eq!(record.dataset, "fixture");
    assert_eq!(record.sessions, ["S1", "S2", "P1"]);
    assert!(record.constraints > 0);

    let req = json!({ "policy": "borda_aggregate", "config": config });
    let (status, body) = post(&app, "/train", &req.to_string()).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let borda: ModelRecord = serde_json::from_str(&body).unwrap();
    assert_ne!(borda.model_id, record.model_id);
    assert!(borda.constraints <= 14 + 24);

    let (status, body) = post(&app, "/train", r#"{"policy":"coin_flip"}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
}

#[tokio::test]
async fn divergent_training_is_unprocessable() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let config = TrainingConfig {
        l2: 1e308,
        initial_step: 1e308,
        ..no_penalties()
    };
    let req = json!({ "dataset": "fixture", "config": config });
    let (status, body) = post(&app, "/train", &req.to_string()).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
    assert_eq!(error_name(&body), "NonFinite");
    assert!(get(&app, "/models/model-0001").await.0 == StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn zero_coefficient_model_report_has_no_parity_gap() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (_, body) = post(&app, "/train", &json!({ "dataset": "fixture", "config": no_penalties() }).to_string()).await;
    let id = parse(&body)["model_id"].as_str().unwrap().to_string();
    let mut model = ConstrainedModel::from_json(&get(&app, &format!("/models/{id}")).await.1).unwrap();
    for c in &mut model.coefficients {
        c.coefficient = 0.0;
    }
    model.intercept = 0.0;

    let (status, body) = post(&app, "/models", &json!({ "dataset": "fixture", "model": model }).to_string()).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let record: ModelRecord = serde_json::from_str(&body).unwrap();
    assert!(!record.report.gaps.is_empty());
    for g in &record.report.gaps {
        assert_eq!(g.parity_gap, Some(0.0), "{}", g.attribute);
    }
    let (_, report) = get(&app, &format!("/models/{}/report", record.model_id)).await;
    assert_eq!(report, body);

    let mut tampered = parse(&model.to_json());
    tampered["coefficients"].as_array_mut().unwrap().pop();
    let (status, body) = post(&app, "/models", &json!({ "dataset": "fixture", "model": tampered }).to_string()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
    assert_eq!(error_name(&body), "BadModel");

    let (status, body) = get(&app, "/models/model-9999/report").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(error_name(&body), "UnknownModel");
}

#[tokio::test]
async fn restart_serves_identical_bodies() {
    let dir = tempfile::tempdir().unwrap();
    let uris = {
        let app = app(dir.path());
        import_replay_logs(&app).await;
        post(&app, "/datasets/synthetic?id=syn", r#"{"n":25,"seed":3}"#).await;
        let (_, body) = post(&app, "/sessions", r#"{"session_id":"live","seed":5}"#).await;
        assert!(body.contains("live"));
        next(&app, "live").await;
        let (_, body) = post(&app, "/train", &json!({ "config": no_penalties() }).to_string()).await;
        let model = parse(&body)["model_id"].as_str().unwrap().to_string();
        vec![
            "/datasets".to_string(),
            "/datasets/syn".into(),
            "/datasets/syn/metrics?attribute=victim_age".into(),
            "/sessions".into(),
            "/sessions/live".into(),
            "/sessions/live/export".into(),
            "/sessions/S3/export".into(),
            "/analysis/summary".into(),
            format!("/models/{model}"),
            format!("/models/{model}/report"),
        ]
    };
    let first = app(dir.path());
    let mut before = Vec::new();
    for u in &uris {
        before.push(get(&first, u).await);
    }
    drop(first);
    let second = app(dir.path());
    for (u, b) in uris.iter().zip(before) {
        let after = get(&second, u).await;
        assert_eq!(after.0, StatusCode::OK, "{u}: {}", after.1);
        assert_eq!(after, b, "{u}");
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_session_writes_leave_parseable_files() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let ids: Vec<String> = (0..8).map(|i| format!("c{i}")).collect();
    for (i, id) in ids.iter().enumerate() {
        let body = json!({ "session_id": id, "seed": i });
        assert_eq!(post(&app, "/sessions", &body.to_string()).await.0, StatusCode::CREATED);
    }
    let mut tasks = Vec::new();
    for id in ids.clone() {
        let app = app.clone();
        tasks.push(tokio::spawn(async move {
            for _ in 0..6 {
                let NextItem::Question(q) = next(&app, &id).await else { break };
                let payload = json!({ "question_id": q.id(), "choice": first_choice(&q) });
                let (status, body) = post(&app, &format!("/sessions/{id}/responses"), &payload.to_string()).await;
                assert_eq!(status, StatusCode::OK, "{body}");
            }
        }));
    }
    // hammer one session from several tasks at once
    let mut racers = Vec::new();
    for _ in 0..4 {
        let app = app.clone();
        racers.push(tokio::spawn(async move {
            for _ in 0..5 {
                if let NextItem::Question(q) = next(&app, "c0").await {
                    let payload = json!({ "question_id": q.id(), "choice": first_choice(&q) });
                    let (status, _) = post(&app, "/sessions/c0/responses", &payload.to_string()).await;
                    assert!(status == StatusCode::OK || status == StatusCode::CONFLICT, "{status}");
                }
            }
        }));
    }
    for t in tasks.into_iter().chain(racers) {
        t.await.unwrap();
    }
    for id in &ids {
        let text = std::fs::read_to_string(dir.path().join("sessions").join(format!("{id}.json"))).unwrap();
        let s = Session::import(&text).unwrap();
        let ds = fixtures::elicitation_dataset();
        let rebuilt = replay(&s, &ds, &FixturePairSet::bundled()).unwrap();
        assert_eq!(rebuilt.export(), text);
        let answered = s.responses().count();
        if id != "c0" {
            assert_eq!(answered, 6, "{id}");
        } else {
            assert!(answered >= 6, "{answered}");
        }
    }
    let leftovers: Vec<_> = std::fs::read_dir(dir.path().join("sessions"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| !n.ends_with(".json"))
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[tokio::test]
async fn cors_preflight_is_answered() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let req = Request::builder()
        .method(Method::OPTIONS)
        .uri("/datasets")
        .header("origin", "http://localhost:5173")
        .header("access-control-request-method", "POST")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert!(resp.status().is_success());
    assert!(resp.headers().contains_key("access-control-allow-origin"));
}

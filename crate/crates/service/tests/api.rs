use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use setexpand::evaluation::{generate_synthetic_corpus, write_synthetic_corpus, SyntheticSpec};
use setexpand::pipeline::TrainConfig;
use setexpand_service::{router, AppState, Workspace};

const SMALL: &str = r#"{"embedding":{"dim":24,"epochs":2,"threads":1},"mlp":{"epochs":5}}"#;

struct Harness {
    app: Router,
    dir: tempfile::TempDir,
}

impl Harness {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::open(dir.path().join("store"), TrainConfig::default()).unwrap();
        Harness {
            app: router(AppState::new(ws)),
            dir,
        }
    }

    fn synth(&self, seed: u64) -> PathBuf {
        let out = self.dir.path().join(format!("synth{seed}"));
        let corpus = generate_synthetic_corpus(&SyntheticSpec::uniform(3, 8, 2500, seed).unwrap()).unwrap();
        write_synthetic_corpus(&out, &corpus).unwrap();
        out
    }

    async fn send(&self, method: &str, uri: &str, body: Option<Value>, key: Option<&str>) -> (StatusCode, Value) {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(k) = key {
            req = req.header("Idempotency-Key", k);
        }
        let req = match body {
            Some(b) => req
                .header("content-type", "application/json")
                .body(Body::from(b.to_string())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let v = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
        };
        (status, v)
    }

    async fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.send("GET", uri, None, None).await
    }

    async fn post(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        self.send("POST", uri, Some(body), None).await
    }

    async fn put(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        self.send("PUT", uri, Some(body), None).await
    }

    async fn create(&self, path: &Path) -> String {
        let (s, v) = self.post("/projects", json!({"corpus_path": path})).await;
        assert_eq!(s, StatusCode::CREATED, "{v}");
        v["project_id"].as_str().unwrap().to_string()
    }

    async fn wait(&self, job: &str) -> Value {
        let t0 = Instant::now();
        loop {
            let (s, v) = self.get(&format!("/jobs/{job}")).await;
            assert_eq!(s, StatusCode::OK);
            if v["state"] != "running" {
                return v;
            }
            assert!(t0.elapsed() < Duration::from_secs(300), "job {job} stuck: {v}");
            tokio::time::sleep(Duration::from_millis(50)).await;
        }
    }

    /// A trained project over a small synthetic corpus, plus its gold file.
    async fn trained(&self, seed: u64) -> (String, PathBuf) {
        let data = self.synth(seed);
        let id = self.create(&data.join("corpus.conllu")).await;
        let hyper: Value = serde_json::from_str(SMALL).unwrap();
        let (s, v) = self
            .post(
                &format!("/projects/{id}/train"),
                json!({"hyper": hyper, "gold_path": data.join("gold.tsv")}),
            )
            .await;
        assert_eq!(s, StatusCode::ACCEPTED, "{v}");
        let job = self.wait(v["job_id"].as_str().unwrap()).await;
        assert_eq!(job["state"], "ready", "{job}");
        (id, data.join("gold.tsv"))
    }
}

fn gold_members(gold: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(gold)
        .unwrap()
        .lines()
        .map(|l| l.split('\t').skip(1).map(str::to_string).collect())
        .collect()
}

async fn gid_of(h: &Harness, id: &str, term: &str) -> u64 {
    let (_, v) = h.get(&format!("/projects/{id}/terms?limit=5000")).await;
    v["terms"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["members"].as_array().unwrap().iter().any(|m| m == term))
        .unwrap_or_else(|| panic!("{term} not in term table"))["group_id"]
        .as_u64()
        .unwrap()
}

#[tokio::test]
async fn health_and_project_creation_errors() {
    let h = Harness::new();
    assert_eq!(h.get("/health").await.0, StatusCode::OK);

    let (s, _) = h.post("/projects", json!({"corpus_path": "/no/such/corpus"})).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let data = h.synth(1);
    let (s, v) = h
        .post(
            "/projects",
            json!({"corpus_path": data.join("corpus.conllu"), "format": "xml"}),
        )
        .await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{v}");
    assert!(v["error"].is_string());

    let empty = h.dir.path().join("empty.txt");
    std::fs::write(&empty, "\n  \n").unwrap();
    assert_eq!(
        h.post("/projects", json!({"corpus_path": empty})).await.0,
        StatusCode::UNPROCESSABLE_ENTITY
    );

    let id = h.create(&data.join("corpus.conllu")).await;
    assert_eq!(id, "p1");
    let (s, v) = h.get("/projects").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["projects"].as_array().unwrap().len(), 1);
    let (s, v) = h.get("/projects/p1").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["format"], "conllu");
    assert_eq!(v["stats"]["sentences"], 2500);
    assert_eq!(v["status"]["mlp"], "absent");
    assert_eq!(h.get("/projects/p9").await.0, StatusCode::NOT_FOUND);

    // untrained projects cannot expand
    let (s, _) = h.post("/projects/p1/expand", json!({"seed_gids": [0, 1]})).await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test]
async fn training_job_lifecycle() {
    let h = Harness::new();
    let data = h.synth(2);
    let id = h.create(&data.join("corpus.conllu")).await;

    let (s, _) = h
        .post(&format!("/projects/{id}/train"), json!({"hyper": {"embeding": {}}}))
        .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let hyper: Value = serde_json::from_str(SMALL).unwrap();
    let (s, v) = h
        .post(&format!("/projects/{id}/train"), json!({ "hyper": hyper }))
        .await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let job = v["job_id"].as_str().unwrap().to_string();
    let (s, _) = h
        .post(&format!("/projects/{id}/train"), json!({ "hyper": hyper }))
        .await;
    assert_eq!(s, StatusCode::CONFLICT);

    let done = h.wait(&job).await;
    assert_eq!(done["state"], "ready", "{done}");
    let stages = done["stages"].as_array().unwrap();
    assert_eq!(stages.len(), 10);
    assert!(stages.iter().all(|s| s["state"] == "done"), "{done}");
    assert!(done["failed_stage"].is_null());
    let (_, info) = h.get(&format!("/projects/{id}")).await;
    assert!(info["status"]["models"]
        .as_object()
        .unwrap()
        .values()
        .all(|m| m == "ready"));
    assert_eq!(info["status"]["mlp"], "ready");
    assert_eq!(h.get("/jobs/j999").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn failed_training_reports_its_stage() {
    let h = Harness::new();
    let tiny = h.dir.path().join("tiny.txt");
    std::fs::write(&tiny, "The cat sat.\n").unwrap();
    let id = h.create(&tiny).await;
    let (s, v) = h.post(&format!("/projects/{id}/train"), json!({})).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let done = h.wait(v["job_id"].as_str().unwrap()).await;
    assert_eq!(done["state"], "failed", "{done}");
    let stage = done["failed_stage"].as_str().unwrap();
    assert!(done["error"].as_str().unwrap().contains(stage));
    let marked: Vec<&Value> = done["stages"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|s| s["state"] == "failed")
        .collect();
    assert_eq!(marked.len(), 1);
    assert_eq!(marked[0]["stage"], stage);
    // the project can be trained again after a failure
    let (s, _) = h.post(&format!("/projects/{id}/train"), json!({})).await;
    assert_eq!(s, StatusCode::ACCEPTED);
}

#[tokio::test]
async fn terms_contexts_and_exclusions() {
    let h = Harness::new();
    let (id, gold) = h.trained(3).await;

    let (s, v) = h.get(&format!("/projects/{id}/terms")).await;
    assert_eq!(s, StatusCode::OK);
    let all = v["terms"].as_array().unwrap().clone();
    assert!(all.len() >= 24);
    let (_, page) = h.get(&format!("/projects/{id}/terms?limit=3&offset=2")).await;
    assert_eq!(page["terms"].as_array().unwrap()[..], all[2..5]);
    let multi = gold_members(&gold)
        .into_iter()
        .flatten()
        .find(|m| m.contains(' '))
        .expect("generator emits multi-word members");
    let first_word = multi.split(' ').next().unwrap();
    let (_, hits) = h.get(&format!("/projects/{id}/terms?filter={first_word}")).await;
    assert!(hits["terms"]
        .as_array()
        .unwrap()
        .iter()
        .any(|r| r["display_name"] == multi.as_str()));

    let gid = all[0]["group_id"].as_u64().unwrap();
    let (s, row) = h.get(&format!("/projects/{id}/terms/{gid}")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(row, all[0]);
    assert_eq!(
        h.get(&format!("/projects/{id}/terms/999999")).await.0,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        h.get(&format!("/projects/{id}/terms/abc")).await.0,
        StatusCode::BAD_REQUEST
    );

    let (s, c) = h.get(&format!("/projects/{id}/terms/{gid}/contexts?max=3")).await;
    assert_eq!(s, StatusCode::OK);
    let snippets = c["snippets"].as_array().unwrap();
    assert_eq!(snippets.len(), 3);
    assert!(snippets
        .iter()
        .all(|s| !s["highlight_spans"].as_array().unwrap().is_empty()));
    assert_eq!(
        h.get(&format!("/projects/{id}/terms/999999/contexts")).await.0,
        StatusCode::NOT_FOUND
    );

    let members = all[0]["members"].clone();
    let (s, v) = h
        .put(
            &format!("/projects/{id}/terms/{gid}/exclusions"),
            json!({ "members": members }),
        )
        .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    let (s, v) = h
        .put(
            &format!("/projects/{id}/terms/{gid}/exclusions"),
            json!({"members": []}),
        )
        .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["members"], members);
    let (s, _) = h
        .put(
            &format!("/projects/{id}/terms/999999/exclusions"),
            json!({"members": []}),
        )
        .await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn expansion_categories_and_evaluation() {
    let h = Harness::new();
    let (id, gold) = h.trained(4).await;
    let classes = gold_members(&gold);
    let a = gid_of(&h, &id, &classes[0][0]).await;
    let b = gid_of(&h, &id, &classes[0][1]).await;

    let (s, v) = h
        .post(
            &format!("/projects/{id}/expand"),
            json!({"seed_gids": [a, b], "k": 5, "category_name": "c"}),
        )
        .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let rows = v["expanded"].as_array().unwrap();
    assert_eq!(rows.len(), 7);
    assert!(rows[..2].iter().all(|r| r["is_seed"] == true && r["certainty"] == 1.0));
    assert!(rows.iter().all(|r| r["features"].as_array().unwrap().len() == 10));
    let (s, _) = h
        .post(&format!("/projects/{id}/expand"), json!({"seed_gids": [a, 999999]}))
        .await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = h
        .post(&format!("/projects/{id}/expand"), json!({"seed_gids": []}))
        .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let hit = rows[2]["group_id"].as_u64().unwrap();
    let (s, v) = h
        .post(
            &format!("/projects/{id}/categories/c/validate"),
            json!({"gid": hit, "completed": true}),
        )
        .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let (s, v) = h
        .put(
            &format!("/projects/{id}/categories/c/validate"),
            json!({"gid": hit, "completed": true}),
        )
        .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let (s, v) = h
        .post(&format!("/projects/{id}/categories/c/reexpand"), json!({"k": 5}))
        .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["history_length"], 2);
    let re = v["expanded"].as_array().unwrap();
    assert!(re
        .iter()
        .any(|r| r["group_id"] == hit && r["validated"] == true && r["certainty"] == 1.0));

    assert_eq!(
        h.get(&format!("/projects/{id}/categories")).await.1["categories"],
        json!([])
    );
    let (s, _) = h.put(&format!("/projects/{id}/categories/c"), json!({})).await;
    assert_eq!(s, StatusCode::OK);
    let (s, _) = h.put(&format!("/projects/{id}/categories/c"), json!({})).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(
        h.put(&format!("/projects/{id}/categories/c"), json!({"overwrite": true}))
            .await
            .0,
        StatusCode::OK
    );
    assert_eq!(
        h.get(&format!("/projects/{id}/categories")).await.1["categories"],
        json!(["c"])
    );

    // further edits touch only the working copy until loaded back
    h.post(&format!("/projects/{id}/categories/c/reexpand"), json!({"k": 5}))
        .await;
    assert_eq!(
        h.get(&format!("/projects/{id}/categories/c")).await.1["history_length"],
        3
    );
    let (s, loaded) = h.post(&format!("/projects/{id}/categories/c/load"), json!({})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(loaded["history_length"], 2);
    assert_eq!(h.get(&format!("/projects/{id}/categories/c")).await.1, loaded);
    assert_eq!(
        h.get(&format!("/projects/{id}/categories/nope")).await.0,
        StatusCode::NOT_FOUND
    );

    let (s, v) = h
        .post(
            &format!("/projects/{id}/evaluate"),
            json!({"gold_path": gold, "config": {"queries_per_class": 3, "max_seeds": 3, "cutoffs": [5, 10]}}),
        )
        .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["queries"], 9);
    let m = v["map"]["10"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&m));
    assert_eq!(
        h.post(&format!("/projects/{id}/evaluate"), json!({})).await.0,
        StatusCode::BAD_REQUEST
    );
    let (s, _) = h
        .post(
            &format!("/projects/{id}/evaluate"),
            json!({"gold": [{"name": "x", "members": ["zzz1", "zzz2"]}]}),
        )
        .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn idempotency_key_replays_mutations() {
    let h = Harness::new();
    let data = h.synth(5);
    let body = json!({"corpus_path": data.join("corpus.conllu")});
    let (s1, v1) = h.send("POST", "/projects", Some(body.clone()), Some("k1")).await;
    let (s2, v2) = h.send("POST", "/projects", Some(body.clone()), Some("k1")).await;
    assert_eq!((s1, s2), (StatusCode::CREATED, StatusCode::CREATED));
    assert_eq!(v1, v2);
    assert_eq!(h.get("/projects").await.1["projects"].as_array().unwrap().len(), 1);
    let (_, v3) = h.send("POST", "/projects", Some(body), Some("k2")).await;
    assert_eq!(v3["project_id"], "p2");
}

#[tokio::test]
async fn trained_projects_reload_from_disk() {
    let h = Harness::new();
    let (id, gold) = h.trained(6).await;
    let classes = gold_members(&gold);
    let a = gid_of(&h, &id, &classes[1][0]).await;
    let b = gid_of(&h, &id, &classes[1][1]).await;
    let req = json!({"seed_gids": [a, b]});
    let (_, before) = h.post(&format!("/projects/{id}/expand"), req.clone()).await;

    let ws = Workspace::open(h.dir.path().join("store"), TrainConfig::default()).unwrap();
    let fresh = Harness {
        app: router(AppState::new(ws)),
        dir: tempfile::tempdir().unwrap(),
    };
    let (s, after) = fresh.post(&format!("/projects/{id}/expand"), req).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(before, after);
}

mod common;

use std::collections::HashSet;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use nave_cli::docs::{parse_versioned, PipelineConfig};
use nave_cli::service::{router, AppState, MISSION_FILE};
use nave_core::geom::PointCloud;
use nave_core::mission::{MissionRequest, TechniqueId};
use nave_core::scene::{church, ChurchDims};
use serde_json::Value;
use tower::ServiceExt;

use common::{assert_schema, CONFIG};

struct Reply {
    status: StatusCode,
    version: Option<String>,
    content_type: String,
    body: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }

    fn text(&self) -> String {
        String::from_utf8(self.body.clone()).unwrap()
    }
}

async fn call(app: &Router, method: Method, uri: &str, body: impl Into<Body>) -> Reply {
    let req = Request::builder().method(method).uri(uri).body(body.into()).unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let header = |name: &str| res.headers().get(name).map(|v| v.to_str().unwrap().to_owned());
    let (status, version, content_type) = (res.status(), header("x-format-version"), header("content-type"));
    let body = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    let reply = Reply {
        status,
        version,
        content_type: content_type.unwrap_or_default(),
        body,
    };
    // Every response is stamped, and every JSON body is a versioned document.
    assert_eq!(reply.version.as_deref(), Some("1"), "{uri}");
    if reply.content_type == "application/json" {
        assert_eq!(reply.json()["format_version"], 1, "{uri}");
    }
    reply
}

fn config() -> PipelineConfig {
    parse_versioned(CONFIG).unwrap()
}

struct Project {
    dir: tempfile::TempDir,
    app: Router,
    state: AppState,
}

fn open_with(map: PointCloud) -> Project {
    let dir = tempfile::tempdir().unwrap();
    let state = AppState::open(dir.path().join("project"), map, config(), 5).unwrap();
    Project {
        app: router(state.clone()),
        state,
        dir,
    }
}

fn open() -> Project {
    open_with(common::map())
}

fn assert_error(reply: &Reply, status: StatusCode, class: &str) {
    assert_eq!(reply.status, status, "{}", reply.text());
    let doc = reply.json();
    assert_schema("error", &doc);
    assert_eq!(doc["class"], class);
}

#[tokio::test]
async fn rti_under_ambient_light_is_rejected_with_the_report() {
    let p = open();
    let mut req = common::mission(2, TechniqueId::Rti);
    req.ambient_lux = 500.0;
    let r = call(&p.app, Method::PUT, "/viewpoints", req.to_json()).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let report = r.json();
    assert_schema("validation_report", &report);
    assert_eq!(report["accepted"], false);
    let kinds: Vec<&str> = report["issues"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["kind"].as_str().unwrap())
        .collect();
    assert_eq!(kinds, ["ambient_forbidden", "ambient_forbidden"]);
    // Nothing was stored.
    let r = call(&p.app, Method::GET, "/viewpoints", Body::empty()).await;
    assert_error(&r, StatusCode::NOT_FOUND, "not_found");
}

#[tokio::test]
async fn viewpoints_round_trip_byte_for_byte() {
    let p = open();
    // Unusual but valid formatting must survive untouched.
    let text = format!(
        "{}\n\n",
        common::mission(3, TechniqueId::Vis).to_json().replace("  ", "\t")
    );
    let r = call(&p.app, Method::PUT, "/viewpoints", text.clone()).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    assert_schema("validation_report", &r.json());
    assert_eq!(r.json()["accepted"], true);

    let r = call(&p.app, Method::GET, "/viewpoints", Body::empty()).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.body, text.as_bytes());
    assert_schema("mission_request", &r.json());
    let on_disk = std::fs::read(p.dir.path().join("project").join(MISSION_FILE)).unwrap();
    assert_eq!(on_disk, text.as_bytes());

    // A fresh service on the same project serves the same bytes.
    let again = AppState::open(p.dir.path().join("project"), common::map(), config(), 0).unwrap();
    let r = call(&router(again), Method::GET, "/viewpoints", Body::empty()).await;
    assert_eq!(r.body, text.as_bytes());
}

#[tokio::test]
async fn schema_violations_are_bad_requests() {
    let p = open();
    let good: Value = serde_json::from_str(&common::mission(2, TechniqueId::Vis).to_json()).unwrap();
    let mut missing = good.clone();
    missing.as_object_mut().unwrap().remove("takeoff");
    let mut unknown = good.clone();
    unknown["viewpoints"][0]["zoom"] = 2.0.into();
    let mut bad_type = good.clone();
    bad_type["team_size"] = "two".into();
    let mut bad_technique = good.clone();
    bad_technique["viewpoints"][1]["technique"] = "XYZ".into();
    for (name, doc) in [
        ("missing", missing),
        ("unknown", unknown),
        ("bad_type", bad_type),
        ("bad_technique", bad_technique),
    ] {
        let schema_ok = jsonschema::validator_for(
            &serde_json::from_slice::<Value>(
                &std::fs::read(concat!(
                    env!("CARGO_MANIFEST_DIR"),
                    "/../../docs/schemas/mission_request.schema.json"
                ))
                .unwrap(),
            )
            .unwrap(),
        )
        .unwrap()
        .is_valid(&doc);
        assert!(!schema_ok, "{name} should violate the schema");
        let r = call(&p.app, Method::PUT, "/viewpoints", doc.to_string()).await;
        assert_error(&r, StatusCode::BAD_REQUEST, "format");
    }
    let r = call(&p.app, Method::PUT, "/viewpoints", "{not json").await;
    assert_error(&r, StatusCode::BAD_REQUEST, "format");
    let r = call(&p.app, Method::PUT, "/viewpoints", vec![0xff, 0xfe]).await;
    assert_error(&r, StatusCode::BAD_REQUEST, "format");

    let mut newer = good;
    newer["format_version"] = 2.into();
    let r = call(&p.app, Method::PUT, "/viewpoints", newer.to_string()).await;
    assert_error(&r, StatusCode::BAD_REQUEST, "version");

    let r = call(&p.app, Method::GET, "/map?leaf=-1", Body::empty()).await;
    assert_error(&r, StatusCode::BAD_REQUEST, "format");
    let r = call(&p.app, Method::GET, "/map?leaf=abc", Body::empty()).await;
    assert_error(&r, StatusCode::BAD_REQUEST, "format");
    let r = call(&p.app, Method::POST, "/simulate", r#"{"seed": 1, "speed": 2}"#).await;
    assert_error(&r, StatusCode::BAD_REQUEST, "format");
    let r = call(&p.app, Method::GET, "/nowhere", Body::empty()).await;
    assert_error(&r, StatusCode::NOT_FOUND, "not_found");
}

#[tokio::test]
async fn jobs_are_refused_while_one_runs() {
    let p = open();
    let r = call(
        &p.app,
        Method::PUT,
        "/viewpoints",
        common::mission(2, TechniqueId::Vis).to_json(),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK);
    let guard = p.state.try_begin_job().expect("no job running yet");
    assert!(p.state.try_begin_job().is_none());
    let r = call(&p.app, Method::POST, "/plan", Body::empty()).await;
    assert_error(&r, StatusCode::CONFLICT, "busy");
    let r = call(&p.app, Method::POST, "/simulate", Body::empty()).await;
    assert_error(&r, StatusCode::CONFLICT, "busy");
    // Reads are unaffected.
    let r = call(&p.app, Method::GET, "/viewpoints", Body::empty()).await;
    assert_eq!(r.status, StatusCode::OK);
    drop(guard);
    let r = call(&p.app, Method::POST, "/plan", Body::empty()).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
}

#[tokio::test]
async fn map_leaf_bounds_the_point_count() {
    let cloud = church(&ChurchDims::default(), 1_000_000, 11);
    let leaf = 1.0;
    // Oracle: distinct occupied voxels on the leaf-sized lattice at the origin.
    let voxels: HashSet<[i64; 3]> = cloud
        .points
        .iter()
        .map(|p| {
            [
                (p.x / leaf).floor() as i64,
                (p.y / leaf).floor() as i64,
                (p.z / leaf).floor() as i64,
            ]
        })
        .collect();
    let p = open_with(cloud);
    let r = call(&p.app, Method::GET, "/map?leaf=1.0", Body::empty()).await;
    assert_eq!(r.status, StatusCode::OK);
    let doc = r.json();
    assert_schema("map", &doc);
    let count = doc["count"].as_u64().unwrap() as usize;
    assert_eq!(doc["points"].as_array().unwrap().len(), count);
    assert!(count > 0 && count <= voxels.len(), "{count} > {}", voxels.len());
    assert_eq!(doc["leaf"], 1.0);

    // The default leaf is finer, so it keeps more points.
    let r = call(&p.app, Method::GET, "/map", Body::empty()).await;
    assert!(r.json()["count"].as_u64().unwrap() as usize > count);
}

#[tokio::test]
async fn plan_simulate_and_export() {
    let p = open();
    let r = call(&p.app, Method::POST, "/plan", Body::empty()).await;
    assert_error(&r, StatusCode::NOT_FOUND, "not_found");
    let r = call(&p.app, Method::POST, "/simulate", Body::empty()).await;
    assert_error(&r, StatusCode::NOT_FOUND, "not_found");

    let mut req = common::mission(3, TechniqueId::Vis);
    req.team_size = 2;
    let r = call(&p.app, Method::PUT, "/viewpoints", req.to_json()).await;
    assert_eq!(r.status, StatusCode::OK);
    let r = call(&p.app, Method::GET, "/trajectories", Body::empty()).await;
    assert_error(&r, StatusCode::NOT_FOUND, "not_found");

    let r = call(&p.app, Method::POST, "/plan", Body::empty()).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    let plans = r.json();
    assert_schema("plan_set", &plans);
    let flights = plans["plans"].as_array().unwrap().len();
    assert!(flights >= 1);

    let r = call(&p.app, Method::POST, "/simulate", r#"{"seed": 3}"#).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    let sim = r.json();
    assert_schema("simulation_result", &sim);
    assert_eq!(sim["seed"], 3);
    assert_eq!(sim["metrics"]["images"], 3);
    assert_eq!(sim["metrics"]["collisions"], 0);
    // Leader and follower for every flight.
    assert_eq!(sim["flights"].as_array().unwrap().len(), 2 * flights);
    assert!(sim["metrics"]["min_mutual_distance"].as_f64().unwrap() > 1.8);

    // Same seed, same document; an empty body uses the service seed.
    let again = call(&p.app, Method::POST, "/simulate", r#"{"seed": 3}"#).await;
    assert_eq!(again.body, r.body);
    let default = call(&p.app, Method::POST, "/simulate", Body::empty()).await;
    assert_eq!(default.json()["seed"], 5);

    let r = call(&p.app, Method::GET, "/trajectories", Body::empty()).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.content_type, "text/csv");
    let csv = r.text();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("robot,flight,t,x,y,z,heading,vx,vy,vz,acquire"));
    let robots: HashSet<&str> = lines.clone().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(robots, HashSet::from(["0", "1"]));
    assert!(lines.all(|l| l.split(',').count() == 11));

    let r = call(&p.app, Method::GET, "/trajectories?flight=0", Body::empty()).await;
    assert!(r.text().lines().skip(1).all(|l| l.split(',').nth(1) == Some("0")));
    let r = call(&p.app, Method::GET, "/trajectories?flight=99", Body::empty()).await;
    assert_error(&r, StatusCode::NOT_FOUND, "not_found");

    // The persisted documents match their schemas too.
    let project = p.dir.path().join("project");
    for (file, schema) in [
        ("planset.json", "plan_set"),
        ("trajectories.json", "trajectory_set"),
        ("simulation.json", "simulation_result"),
    ] {
        let doc: Value = serde_json::from_slice(&std::fs::read(project.join(file)).unwrap()).unwrap();
        assert_schema(schema, &doc);
    }

    // New viewpoints make the old plan and trajectories stale.
    let r = call(
        &p.app,
        Method::PUT,
        "/viewpoints",
        common::mission(1, TechniqueId::Vis).to_json(),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK);
    let r = call(&p.app, Method::GET, "/trajectories", Body::empty()).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    let r = call(&p.app, Method::POST, "/simulate", Body::empty()).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn unplannable_mission_is_unprocessable() {
    let p = open();
    let mut req: MissionRequest = common::mission(2, TechniqueId::Vis);
    // Inside a pillar.
    req.viewpoints[0].camera_pose.position = [5.0, 3.6, 3.0];
    let r = call(&p.app, Method::PUT, "/viewpoints", req.to_json()).await;
    assert_eq!(r.status, StatusCode::OK);
    let r = call(&p.app, Method::POST, "/plan", Body::empty()).await;
    assert_error(&r, StatusCode::UNPROCESSABLE_ENTITY, "planning");
}

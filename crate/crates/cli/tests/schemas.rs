mod common;

use common::{assert_schema, CONFIG};
use nave_cli::docs::{to_json, PipelineConfig};
use nave_core::mission::TechniqueId;
use serde_json::Value;

#[test]
fn every_schema_is_a_valid_draft_2020_12_schema() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/schemas");
    let mut names: Vec<String> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names.len(), 12, "{names:?}");
    for name in names {
        let schema: Value = serde_json::from_slice(&std::fs::read(dir.join(&name)).unwrap()).unwrap();
        assert_eq!(
            schema["$schema"], "https://json-schema.org/draft/2020-12/schema",
            "{name}"
        );
        assert!(jsonschema::draft202012::meta::is_valid(&schema), "{name}");
        jsonschema::validator_for(&schema).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn configurations_match_their_schema() {
    let defaults: Value = serde_json::from_str(&to_json(&PipelineConfig::default())).unwrap();
    assert_schema("pipeline_config", &defaults);
    assert_schema("pipeline_config", &serde_json::from_str(CONFIG).unwrap());
    assert_schema("pipeline_config", &serde_json::json!({"format_version": 1}));
}

#[test]
fn mission_requests_match_their_schema() {
    for technique in [TechniqueId::Vis, TechniqueId::Rti, TechniqueId::Recon3d] {
        let doc: Value = serde_json::from_str(&common::mission(4, technique).to_json()).unwrap();
        assert_schema("mission_request", &doc);
    }
}

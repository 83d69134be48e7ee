#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nave_core::geom::ply::write_ply_file;
use nave_core::geom::PointCloud;
use nave_core::mission::{MissionRequest, TechniqueId};
use nave_core::scene::{aisle_mission, church, ChurchDims};

pub const MAP_POINTS: usize = 60_000;

pub fn map() -> PointCloud {
    church(&ChurchDims::default(), MAP_POINTS, 1)
}

pub fn mission(count: usize, technique: TechniqueId) -> MissionRequest {
    aisle_mission(&ChurchDims::default(), count, technique, 2)
}

/// Pipeline settings that place the light above the camera: in the aisle
/// scenes a light to the side often lands in a pillar or a wall.
pub const CONFIG: &str = r#"{"format_version": 1, "lighting": {"side": "above", "light_distance": 3.0}}"#;

/// A temporary project directory holding `map.ply`, `mission.json` and
/// `config.json`.
pub struct Fixture {
    pub dir: tempfile::TempDir,
}

impl Fixture {
    pub fn new(req: &MissionRequest) -> Self {
        let dir = tempfile::tempdir().unwrap();
        write_ply_file(&map(), dir.path().join("map.ply")).unwrap();
        std::fs::write(dir.path().join("mission.json"), req.to_json()).unwrap();
        std::fs::write(dir.path().join("config.json"), CONFIG).unwrap();
        Self { dir }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn p(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }
}

pub fn nave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nave")).args(args).output().unwrap()
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Validates `doc` against `docs/schemas/<name>.schema.json`.
pub fn assert_schema(name: &str, doc: &serde_json::Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../docs/schemas/{name}.schema.json"));
    let schema: serde_json::Value = serde_json::from_slice(&read(&path)).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap_or_else(|e| panic!("{name} schema: {e}"));
    let errors: Vec<String> = validator
        .iter_errors(doc)
        .map(|e| format!("{} at {}", e, e.instance_path))
        .collect();
    assert!(errors.is_empty(), "{name}: {errors:#?}");
}

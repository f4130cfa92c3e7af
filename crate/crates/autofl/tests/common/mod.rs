//! Shared fixtures for integration tests.

use autofl::backend::mock::MockBackend;
use autofl::snapshot::{load_snapshot_str, RepoSnapshot};

pub const LANG48_SNAPSHOT_JSON: &str = include_str!("../fixtures/lang48_snapshot.json");
pub const LANG48_SCENARIO_JSON: &str = include_str!("../fixtures/lang48_scenario.json");

pub fn lang48_snapshot() -> RepoSnapshot {
    load_snapshot_str(LANG48_SNAPSHOT_JSON).expect("fixture snapshot is valid")
}

pub fn lang48_backend() -> MockBackend {
    let doc = serde_json::from_str(LANG48_SCENARIO_JSON).expect("fixture scenario parses");
    MockBackend::from_doc(doc).expect("fixture scenario is valid")
}

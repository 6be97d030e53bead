use std::path::Path;

use serde_json::json;

use crate::error::Result;
use crate::geometry::{write_obj, write_stl, TriangleMesh};

use super::AttackResult;

/// Write `input.obj`, `adversarial.obj`, `adversarial.stl` and `result.json`
/// into `dir`, creating it if needed.
pub fn write_run(dir: impl AsRef<Path>, benign: &TriangleMesh, result: &AttackResult, config: &serde_json::Value) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_obj(benign, dir.join("input.obj"))?;
    write_obj(&result.mesh, dir.join("adversarial.obj"))?;
    write_stl(&result.mesh, dir.join("adversarial.stl"))?;
    let mut report = serde_json::to_value(result)?;
    report["config"] = config.clone();
    report["vertex_count"] = json!(result.mesh.vertex_count());
    std::fs::write(dir.join("result.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(())
}

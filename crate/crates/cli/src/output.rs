//! Artifact assembly and atomic writing. Every file starts with the tool
//! version, the effective seed, and the full effective configuration, so a
//! result file alone suffices to rerun its experiment; bytes depend only on
//! (config, seed), never on worker count or wall clock.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::json;

use crate::config::ExperimentConfig;

/// One output file, still in memory.
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// Serialized `{metadata, result}` document.
pub fn json_artifact(
    name: &str,
    config: &ExperimentConfig,
    result: serde_json::Value,
) -> Result<Artifact> {
    let doc = json!({
        "metadata": metadata_value(config)?,
        "result": result,
    });
    let mut bytes = serde_json::to_vec_pretty(&doc)?;
    bytes.push(b'\n');
    Ok(Artifact {
        name: name.to_string(),
        bytes,
    })
}

/// CSV with the metadata block as leading `#` comment lines.
pub fn csv_artifact(
    name: &str,
    config: &ExperimentConfig,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<Artifact> {
    let mut text = String::new();
    writeln!(text, "# cmjx {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(text, "# seed = {}", config.seed)?;
    writeln!(text, "# effective configuration:")?;
    for line in toml::to_string_pretty(config)?.lines() {
        writeln!(text, "# {line}")?;
    }
    let mut writer = csv::Writer::from_writer(text.into_bytes());
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(row)?;
    }
    let bytes = writer.into_inner()?;
    Ok(Artifact {
        name: name.to_string(),
        bytes,
    })
}

fn metadata_value(config: &ExperimentConfig) -> Result<serde_json::Value> {
    Ok(json!({
        "tool": "cmjx",
        "version": env!("CARGO_PKG_VERSION"),
        "seed": config.seed,
        "config": serde_json::to_value(config)?,
    }))
}

/// Writes each artifact through a temp file in the target directory followed
/// by a rename, so a crash cannot leave a half-written result behind.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let mut written = Vec::new();
    for artifact in artifacts {
        let path = dir.join(&artifact.name);
        let mut tmp = tempfile::NamedTempFile::new_in(dir)
            .with_context(|| format!("cannot create temp file in {}", dir.display()))?;
        tmp.write_all(&artifact.bytes)?;
        tmp.persist(&path)
            .with_context(|| format!("cannot move output into place at {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}

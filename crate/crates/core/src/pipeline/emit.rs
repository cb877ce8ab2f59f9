use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::report::ExperimentReport;
use super::svg::{ale_svg, shapley_svg};
use super::{PipelineError, Result};
use crate::models::ModelFamily;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn get(&self, path: &str) -> Option<&ManifestEntry> {
        self.files.iter().find(|e| e.path == path)
    }

    pub fn count_matching(&self, prefix: &str, suffix: &str) -> usize {
        self.files
            .iter()
            .filter(|e| e.path.starts_with(prefix) && e.path.ends_with(suffix))
            .count()
    }
}

/// Test-set metrics, one row per model in the performance-table order.
pub fn metrics_csv(r: &ExperimentReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| PipelineError::Io {
        path: "metrics.csv".into(),
        source: std::io::Error::other(e),
    };
    w.write_record(["model", "sensitivity", "specificity", "h_measure", "auc"])
        .map_err(io)?;
    for family in ModelFamily::TABLE_ORDER {
        if let Some(m) = r.model(family) {
            let t = &m.test;
            w.write_record([
                family.key().to_string(),
                t.sensitivity.to_string(),
                t.specificity.to_string(),
                t.h_measure.to_string(),
                t.auc.to_string(),
            ])
            .map_err(io)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| PipelineError::Io {
        path: "metrics.csv".into(),
        source: std::io::Error::other(e.to_string()),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn write(dir: &Path, rel: &str, content: &[u8], files: &mut Vec<ManifestEntry>) -> Result<()> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| PipelineError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(&path, content).map_err(|source| PipelineError::Io { path, source })?;
    files.push(ManifestEntry {
        path: rel.to_string(),
        sha256: hex::encode(Sha256::digest(content)),
        bytes: content.len(),
    });
    Ok(())
}

/// Writes `report.json`, `metrics.csv`, one SVG (plus its JSON plot data)
/// per ALE panel and per Shapley ranking, and one model document per
/// model. Returns every written file with its SHA-256, sorted by path.
pub fn emit_outputs(r: &ExperimentReport, dir: impl AsRef<Path>) -> Result<Manifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files = Vec::new();
    write(dir, "report.json", r.to_json()?.as_bytes(), &mut files)?;
    write(dir, "metrics.csv", metrics_csv(r)?.as_bytes(), &mut files)?;
    for m in &r.models {
        let key = m.family.key();
        for curve in &m.ale {
            let stem = format!("ale/{key}_{}", curve.feature_name);
            let points = serde_json::to_string_pretty(&curve.points())?;
            write(dir, &format!("{stem}.json"), points.as_bytes(), &mut files)?;
            write(
                dir,
                &format!("{stem}.svg"),
                ale_svg(curve, m.family.label()).as_bytes(),
                &mut files,
            )?;
        }
        if let Some(s) = &m.shapley {
            let ranked = s.ranked();
            let data = serde_json::to_string_pretty(&ranked)?;
            write(dir, &format!("shapley/{key}.json"), data.as_bytes(), &mut files)?;
            write(
                dir,
                &format!("shapley/{key}.svg"),
                shapley_svg(&ranked, m.family.label()).as_bytes(),
                &mut files,
            )?;
        }
        let doc = m.document.to_json().map_err(|e| PipelineError::Config(e.to_string()))?;
        write(dir, &format!("models/{key}.json"), doc.as_bytes(), &mut files)?;
    }
    files.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(Manifest { files })
}

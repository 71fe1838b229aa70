#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use manipscan::scanner::{ArtifactKind, ExtractionReport};
use serde::Deserialize;

pub fn extraction_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/extraction")
}

#[derive(Debug, Deserialize)]
pub struct ManifestPackage {
    pub package_name: String,
    pub present: BTreeSet<ArtifactKind>,
}

#[derive(Debug, Deserialize)]
pub struct ManifestLogRecord {
    pub package_name: String,
    pub edited_name: String,
    pub start_time: String,
    pub save_time: String,
}

#[derive(Debug, Deserialize)]
pub struct Manifest {
    pub package: Vec<ManifestPackage>,
    pub log_record: Vec<ManifestLogRecord>,
}

pub fn manifest() -> Manifest {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/extraction_manifest.toml");
    toml::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Differences between a scan report and the manifest; empty when they agree.
pub fn manifest_mismatches(report: &ExtractionReport, manifest: &Manifest) -> Vec<String> {
    let mut out = Vec::new();
    let expected: BTreeSet<&str> = manifest.package.iter().map(|p| p.package_name.as_str()).collect();
    let detected: BTreeSet<&str> = report.matrix.iter().map(|r| r.package_name.as_str()).collect();
    if expected != detected {
        out.push(format!("detected {detected:?}, expected {expected:?}"));
    }
    for p in &manifest.package {
        if let Some(row) = report.row(&p.package_name) {
            if row.present() != p.present {
                out.push(format!("{}: present {:?}, expected {:?}", p.package_name, row.present(), p.present));
            }
        }
    }
    for pkg in manifest.log_record.iter().map(|r| &r.package_name).collect::<BTreeSet<_>>() {
        let want: Vec<(&str, &str, &str)> = manifest
            .log_record
            .iter()
            .filter(|r| &r.package_name == pkg)
            .map(|r| (r.edited_name.as_str(), r.start_time.as_str(), r.save_time.as_str()))
            .collect();
        let got: Vec<(&str, &str, &str)> = report
            .findings
            .iter()
            .filter(|f| &f.package_name == pkg && f.artifact_kind == ArtifactKind::EditLog)
            .map(|f| {
                let g = |k: &str| f.fields.get(k).map(String::as_str).unwrap_or("");
                (g("edited_name"), g("start_time"), g("save_time"))
            })
            .collect();
        if want != got {
            out.push(format!("{pkg}: log records {got:?}, expected {want:?}"));
        }
    }
    out
}

/// (path, length, mtime) of every entry, for before/after comparisons.
pub fn tree_stat(root: &Path) -> Vec<(String, u64, Option<std::time::SystemTime>, bool)> {
    let mut v: Vec<_> = walkdir::WalkDir::new(root)
        .follow_links(false)
        .into_iter()
        .map(|e| {
            let e = e.unwrap();
            let m = e.path().symlink_metadata().unwrap();
            (e.path().display().to_string(), m.len(), m.modified().ok(), m.permissions().readonly())
        })
        .collect();
    v.sort();
    v
}

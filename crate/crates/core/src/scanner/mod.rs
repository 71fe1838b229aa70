//! Read-only scanner for Android filesystem extractions: detects editor
//! packages, recovers edited images, masks, originals and edit logs, and
//! carves cached images.
//!
//! The tree is indexed once with symlinks left unfollowed; every path in a
//! finding is relative to the extraction root and uses `/` separators.

mod logs;
mod profile;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use walkdir::WalkDir;

use crate::filename::FilenameMatcher;
use crate::metadata::{ImageMetadata, JPEG_MAGIC, PNG_MAGIC};
use crate::refdb::{Candidate, ReferenceDb};

pub use logs::{parse_log, LogRecord, EPOCH_MILLIS};
pub use profile::{
    ArtifactRule, Confidence, ContentRule, LogGrammar, LogGrammarDef, PackageProfile, ProfileSet,
    PACKAGE_PLACEHOLDER,
};

/// Files larger than this are sniffed but not handed to stage 1.
pub const STAGE1_MAX_BYTES: u64 = 64 * 1024 * 1024;

const SNIFF_BYTES: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScanError {
    #[error("extraction root {0} is not a readable directory")]
    RootNotFound(PathBuf),
    #[error("profile {package}: {reason}")]
    InvalidProfile { package: String, reason: String },
    #[error("log grammar {grammar}: {reason}")]
    InvalidGrammar { grammar: String, reason: String },
    #[error("profile file: {0}")]
    ProfileSyntax(String),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    EditedImage,
    Mask,
    OriginalImage,
    EditLog,
    Cache,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectedFormat {
    Jpeg,
    Png,
    Text,
    Unknown,
}

impl DetectedFormat {
    pub fn extension(self) -> Option<&'static str> {
        match self {
            DetectedFormat::Jpeg => Some(".jpg"),
            DetectedFormat::Png => Some(".png"),
            _ => None,
        }
    }

    pub fn is_image(self) -> bool {
        matches!(self, DetectedFormat::Jpeg | DetectedFormat::Png)
    }
}

/// Classifies leading bytes. Text means non-empty valid UTF-8 (a sequence
/// cut at the sniff boundary is tolerated) without NUL bytes.
pub fn sniff(head: &[u8]) -> DetectedFormat {
    if head.starts_with(JPEG_MAGIC) {
        return DetectedFormat::Jpeg;
    }
    if head.starts_with(PNG_MAGIC) {
        return DetectedFormat::Png;
    }
    if head.is_empty() || head.contains(&0) {
        return DetectedFormat::Unknown;
    }
    match std::str::from_utf8(head) {
        Ok(_) => DetectedFormat::Text,
        Err(e) if e.error_len().is_none() && head.len() >= SNIFF_BYTES => DetectedFormat::Text,
        Err(_) => DetectedFormat::Unknown,
    }
}

/// Access time is left out: reading a file during the scan can change it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileTimes {
    pub modified: Option<DateTime<Utc>>,
    pub created: Option<DateTime<Utc>>,
}

impl FileTimes {
    fn of(meta: &std::fs::Metadata) -> FileTimes {
        let conv = |t: std::io::Result<std::time::SystemTime>| t.ok().map(DateTime::<Utc>::from);
        FileTimes {
            modified: conv(meta.modified()),
            created: conv(meta.created()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactFinding {
    pub package_name: String,
    pub artifact_kind: ArtifactKind,
    pub path: String,
    pub detected_format: DetectedFormat,
    pub recovered_extension: Option<String>,
    pub confidence: Confidence,
    pub size: u64,
    pub timestamps: FileTimes,
    /// Structured fields recovered from an edit-log record.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fields: BTreeMap<String, String>,
    /// Reference db candidates for recovered or carved images.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<Candidate>,
    pub notes: Vec<String>,
}

impl ArtifactFinding {
    fn sort_key(&self) -> (&str, ArtifactKind, &str, Option<&String>) {
        (&self.package_name, self.artifact_kind, &self.path, self.fields.get("line"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackageHit {
    pub package_name: String,
    pub editor_name: String,
    /// Probe directories that exist, in profile order.
    pub found_paths: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    Present,
    Absent,
    NotEvaluated,
}

/// One package row of the findings matrix. The last three columns need
/// system databases and are always `not_evaluated`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub package_name: String,
    pub editor_name: String,
    pub edited_image: Cell,
    pub manipulated_region: Cell,
    pub original_image: Cell,
    pub edit_logs: Cell,
    pub image_caching: Cell,
    pub account_info: Cell,
    pub installation_time: Cell,
    pub recent_usage_time: Cell,
}

impl MatrixRow {
    pub fn cell(&self, kind: ArtifactKind) -> Cell {
        match kind {
            ArtifactKind::EditedImage => self.edited_image,
            ArtifactKind::Mask => self.manipulated_region,
            ArtifactKind::OriginalImage => self.original_image,
            ArtifactKind::EditLog => self.edit_logs,
            ArtifactKind::Cache => self.image_caching,
        }
    }

    /// Artifact kinds marked present.
    pub fn present(&self) -> BTreeSet<ArtifactKind> {
        ALL_KINDS.into_iter().filter(|&k| self.cell(k) == Cell::Present).collect()
    }
}

pub const ALL_KINDS: [ArtifactKind; 5] = [
    ArtifactKind::EditedImage,
    ArtifactKind::Mask,
    ArtifactKind::OriginalImage,
    ArtifactKind::EditLog,
    ArtifactKind::Cache,
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub root: String,
    /// Digest of every path and file content under the root.
    pub tree_sha256: String,
    pub packages: Vec<PackageHit>,
    pub matrix: Vec<MatrixRow>,
    pub findings: Vec<ArtifactFinding>,
    pub diagnostics: Vec<String>,
}

impl ExtractionReport {
    pub fn row(&self, package_name: &str) -> Option<&MatrixRow> {
        self.matrix.iter().find(|r| r.package_name == package_name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EntryType {
    File,
    Dir,
}

/// An indexed extraction tree plus the knowledge used to interpret it.
pub struct Scanner<'a> {
    root: PathBuf,
    entries: BTreeMap<String, EntryType>,
    profiles: &'a ProfileSet,
    db: &'a ReferenceDb,
    matcher: FilenameMatcher,
    diagnostics: Vec<String>,
}

fn rel_string(root: &Path, p: &Path) -> Option<String> {
    let rel = p.strip_prefix(root).ok()?;
    let parts: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
    Some(parts.join("/"))
}

fn index_tree(root: &Path) -> Result<(BTreeMap<String, EntryType>, Vec<String>), ScanError> {
    match std::fs::metadata(root) {
        Ok(m) if m.is_dir() => {}
        _ => return Err(ScanError::RootNotFound(root.to_path_buf())),
    }
    let mut entries = BTreeMap::new();
    let mut diagnostics = Vec::new();
    for item in WalkDir::new(root).follow_links(false).min_depth(1) {
        let entry = match item {
            Ok(e) => e,
            Err(e) => {
                diagnostics.push(format!("walk: {e}"));
                continue;
            }
        };
        let ft = entry.file_type();
        let Some(rel) = rel_string(root, entry.path()) else { continue };
        if ft.is_dir() {
            entries.insert(rel, EntryType::Dir);
        } else if ft.is_file() {
            entries.insert(rel, EntryType::File);
        } else if ft.is_symlink() {
            diagnostics.push(format!("{rel}: symlink not followed"));
        }
    }
    Ok((entries, diagnostics))
}

/// SHA-256 over the sorted list of directories and files (path, length and
/// content). Symlinks contribute their link target, never the pointee.
pub fn tree_digest(root: &Path) -> Result<String, ScanError> {
    let mut hasher = Sha256::new();
    let mut paths: Vec<(String, PathBuf, std::fs::FileType)> = Vec::new();
    for item in WalkDir::new(root).follow_links(false).min_depth(1) {
        let e = item.map_err(|e| ScanError::Io {
            path: root.display().to_string(),
            reason: e.to_string(),
        })?;
        if let Some(rel) = rel_string(root, e.path()) {
            paths.push((rel, e.path().to_path_buf(), e.file_type()));
        }
    }
    paths.sort_by(|a, b| a.0.cmp(&b.0));
    for (rel, abs, ft) in paths {
        let io = |e: std::io::Error| ScanError::Io {
            path: rel.clone(),
            reason: e.to_string(),
        };
        if ft.is_dir() {
            hasher.update(b"D\0");
            hasher.update(rel.as_bytes());
            hasher.update(b"\0");
        } else if ft.is_symlink() {
            let target = std::fs::read_link(&abs).map_err(io)?;
            hasher.update(b"L\0");
            hasher.update(rel.as_bytes());
            hasher.update(b"\0");
            hasher.update(target.to_string_lossy().as_bytes());
            hasher.update(b"\0");
        } else {
            let bytes = std::fs::read(&abs).map_err(io)?;
            hasher.update(b"F\0");
            hasher.update(rel.as_bytes());
            hasher.update(b"\0");
            hasher.update((bytes.len() as u64).to_be_bytes());
            hasher.update(&bytes);
        }
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

struct FileRead {
    head: Vec<u8>,
    full: Option<Vec<u8>>,
    size: u64,
    times: FileTimes,
}

impl<'a> Scanner<'a> {
    pub fn open(root: &Path, profiles: &'a ProfileSet, db: &'a ReferenceDb) -> Result<Scanner<'a>, ScanError> {
        let (entries, diagnostics) = index_tree(root)?;
        Ok(Scanner {
            root: root.to_path_buf(),
            entries,
            profiles,
            db,
            matcher: FilenameMatcher::builtin(),
            diagnostics,
        })
    }

    pub fn diagnostics(&self) -> &[String] {
        &self.diagnostics
    }

    fn is_dir(&self, rel: &str) -> bool {
        self.entries.get(rel.trim_end_matches('/')) == Some(&EntryType::Dir)
    }

    fn files_under<'s>(&'s self, dir: &str) -> impl Iterator<Item = &'s str> + 's {
        let prefix = format!("{}/", dir.trim_end_matches('/'));
        self.entries
            .range(prefix.clone()..)
            .take_while(move |(k, _)| k.starts_with(&prefix))
            .filter(|(_, t)| **t == EntryType::File)
            .map(|(k, _)| k.as_str())
    }

    fn files(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().filter(|(_, t)| **t == EntryType::File).map(|(k, _)| k.as_str())
    }

    fn read(&self, rel: &str, want_full: bool) -> Result<FileRead, String> {
        let path = self.root.join(rel);
        let meta = std::fs::symlink_metadata(&path).map_err(|e| format!("{rel}: {e}"))?;
        let size = meta.len();
        let times = FileTimes::of(&meta);
        let mut f = File::open(&path).map_err(|e| format!("{rel}: {e}"))?;
        let mut head = Vec::new();
        (&mut f).take(SNIFF_BYTES as u64).read_to_end(&mut head).map_err(|e| format!("{rel}: {e}"))?;
        let full = if want_full && size <= STAGE1_MAX_BYTES {
            let mut rest = head.clone();
            f.take(STAGE1_MAX_BYTES).read_to_end(&mut rest).map_err(|e| format!("{rel}: {e}"))?;
            Some(rest)
        } else {
            None
        };
        Ok(FileRead { head, full, size, times })
    }

    /// Profiles whose package directory or private external storage
    /// directory exists, in profile order.
    pub fn detect_packages(&self) -> Vec<PackageHit> {
        self.profiles
            .profiles
            .iter()
            .filter_map(|p| {
                let found: Vec<String> = p.probe_paths.iter().map(|t| p.expand(t)).filter(|d| self.is_dir(d)).collect();
                (!found.is_empty()).then(|| PackageHit {
                    package_name: p.package_name.clone(),
                    editor_name: p.editor_name.clone(),
                    found_paths: found,
                })
            })
            .collect()
    }

    fn finding(&self, profile: &PackageProfile, kind: ArtifactKind, rel: &str, read: &FileRead) -> ArtifactFinding {
        ArtifactFinding {
            package_name: profile.package_name.clone(),
            artifact_kind: kind,
            path: rel.to_owned(),
            detected_format: sniff(&read.head),
            recovered_extension: None,
            confidence: Confidence::High,
            size: read.size,
            timestamps: read.times.clone(),
            fields: BTreeMap::new(),
            candidates: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn attach_stage1(&self, finding: &mut ArtifactFinding, bytes: Option<&[u8]>) {
        let Some(bytes) = bytes else {
            finding.notes.push("stage 1 skipped: file too large".into());
            return;
        };
        let name = finding.path.rsplit('/').next().unwrap_or("");
        let meta = ImageMetadata::extract(bytes, name, &self.matcher);
        if let Some(sig) = &meta.exif_signature {
            if let Some(sw) = &sig.software {
                finding.notes.push(format!("exif software: {sw}"));
            }
            if let Some(a) = &sig.artist {
                finding.notes.push(format!("exif artist: {a}"));
            }
        }
        if let Some(fp) = &meta.dqt_fingerprint {
            finding.notes.push(format!("dqt fingerprint: {}", fp.as_str()));
        }
        let result = self.db.lookup(meta.exif_signature.as_ref(), meta.dqt_fingerprint.as_ref(), &meta.filename_matches);
        for c in &result.candidates {
            finding.notes.push(format!("reference db candidate: {}@{} via {}", c.editor, c.version, evidence_name(c)));
        }
        finding.candidates = result.candidates;
    }

    /// Cached files named `*.0` or without an extension under the profile's
    /// cache directories. Images get a recovered extension and stage-1 notes.
    pub fn carve_cache(&self, profile: &PackageProfile) -> (Vec<ArtifactFinding>, Vec<String>) {
        let mut out = Vec::new();
        let mut diags = Vec::new();
        let mut seen = BTreeSet::new();
        for dir in profile.cache_dirs() {
            for rel in self.files_under(&dir) {
                let name = rel.rsplit('/').next().unwrap_or(rel);
                let candidate = name.ends_with(".0") || !name.contains('.');
                if !candidate || !seen.insert(rel) {
                    continue;
                }
                let read = match self.read(rel, true) {
                    Ok(r) => r,
                    Err(e) => {
                        diags.push(e);
                        continue;
                    }
                };
                let mut f = self.finding(profile, ArtifactKind::Cache, rel, &read);
                if f.detected_format.is_image() {
                    f.recovered_extension = f.detected_format.extension().map(str::to_owned);
                    self.attach_stage1(&mut f, read.full.as_deref());
                }
                out.push(f);
            }
        }
        (out, diags)
    }

    fn rule_hits<'s>(&'s self, profile: &PackageProfile, rule: &ArtifactRule) -> Vec<&'s str> {
        let glob = profile::rule_glob(&profile.expand(&rule.path)).expect("validated glob");
        self.files().filter(|f| glob.is_match(f)).collect()
    }

    /// Edited images, masks and originals named by the profile's rules.
    pub fn recover_artifacts(&self, profile: &PackageProfile) -> (Vec<ArtifactFinding>, Vec<String>) {
        let mut out = Vec::new();
        let mut diags = Vec::new();
        for rule in profile.artifact_rules.iter().filter(|r| !matches!(r.content, ContentRule::LogGrammar(_))) {
            for rel in self.rule_hits(profile, rule) {
                let read = match self.read(rel, true) {
                    Ok(r) => r,
                    Err(e) => {
                        diags.push(e);
                        continue;
                    }
                };
                let mut f = self.finding(profile, rule.kind, rel, &read);
                let accepted = match rule.content {
                    ContentRule::JpegSignature => f.detected_format == DetectedFormat::Jpeg,
                    ContentRule::PngSignature => f.detected_format == DetectedFormat::Png,
                    ContentRule::ImageSignature => f.detected_format.is_image(),
                    ContentRule::Any | ContentRule::LogGrammar(_) => true,
                };
                if !accepted {
                    continue;
                }
                f.confidence = rule.confidence;
                if let Some(n) = &rule.note {
                    f.notes.push(n.clone());
                }
                if let Some(ext) = f.detected_format.extension() {
                    if !extension_agrees(rel, f.detected_format) {
                        f.recovered_extension = Some(ext.to_owned());
                    }
                    self.attach_stage1(&mut f, read.full.as_deref());
                }
                out.push(f);
            }
        }
        dedup_findings(&mut out);
        (out, diags)
    }

    /// One EditLog finding per recognized record of every log the profile
    /// names.
    pub fn parse_edit_logs(&self, profile: &PackageProfile) -> (Vec<ArtifactFinding>, Vec<String>) {
        let mut out = Vec::new();
        let mut diags = Vec::new();
        for rule in &profile.artifact_rules {
            let ContentRule::LogGrammar(name) = &rule.content else { continue };
            let grammar = &self.profiles.grammars[name];
            for rel in self.rule_hits(profile, rule) {
                let read = match self.read(rel, true) {
                    Ok(r) => r,
                    Err(e) => {
                        diags.push(e);
                        continue;
                    }
                };
                let Some(bytes) = read.full.as_deref() else {
                    diags.push(format!("{rel}: log too large"));
                    continue;
                };
                let text = String::from_utf8_lossy(bytes);
                let (records, log_diags) = parse_log(grammar, &text);
                diags.extend(log_diags.into_iter().map(|d| format!("{rel}: {d}")));
                for rec in records {
                    let mut f = self.finding(profile, rule.kind, rel, &read);
                    f.confidence = rule.confidence;
                    f.fields = rec.fields;
                    f.fields.insert("line".into(), format!("{:06}", rec.line));
                    f.notes.push(format!("{} record at line {}", grammar.name, rec.line));
                    if let Some(n) = &rule.note {
                        f.notes.push(n.clone());
                    }
                    out.push(f);
                }
            }
        }
        (out, diags)
    }

    /// Runs every stage for every detected package and fills the matrix.
    pub fn report(&self) -> Result<ExtractionReport, ScanError> {
        let packages = self.detect_packages();
        let mut findings = Vec::new();
        let mut diagnostics = self.diagnostics.clone();
        for hit in &packages {
            let profile = self.profiles.profile(&hit.package_name).expect("hit comes from a profile");
            for (f, d) in [self.carve_cache(profile), self.recover_artifacts(profile), self.parse_edit_logs(profile)] {
                findings.extend(f);
                diagnostics.extend(d);
            }
        }
        findings.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        let matrix = packages
            .iter()
            .map(|hit| {
                let has = |k: ArtifactKind| {
                    if findings.iter().any(|f| f.package_name == hit.package_name && f.artifact_kind == k) {
                        Cell::Present
                    } else {
                        Cell::Absent
                    }
                };
                MatrixRow {
                    package_name: hit.package_name.clone(),
                    editor_name: hit.editor_name.clone(),
                    edited_image: has(ArtifactKind::EditedImage),
                    manipulated_region: has(ArtifactKind::Mask),
                    original_image: has(ArtifactKind::OriginalImage),
                    edit_logs: has(ArtifactKind::EditLog),
                    image_caching: has(ArtifactKind::Cache),
                    account_info: Cell::NotEvaluated,
                    installation_time: Cell::NotEvaluated,
                    recent_usage_time: Cell::NotEvaluated,
                }
            })
            .collect();
        Ok(ExtractionReport {
            root: self.root.display().to_string(),
            tree_sha256: tree_digest(&self.root)?,
            packages,
            matrix,
            findings,
            diagnostics,
        })
    }
}

fn evidence_name(c: &Candidate) -> String {
    serde_json::to_value(c.evidence)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn extension_agrees(rel: &str, format: DetectedFormat) -> bool {
    let ext = rel.rsplit_once('.').map(|(_, e)| e.to_ascii_lowercase());
    matches!(
        (format, ext.as_deref()),
        (DetectedFormat::Jpeg, Some("jpg" | "jpeg")) | (DetectedFormat::Png, Some("png"))
    )
}

fn dedup_findings(v: &mut Vec<ArtifactFinding>) {
    let mut seen = BTreeSet::new();
    v.retain(|f| seen.insert((f.artifact_kind, f.path.clone())));
}

/// Scans `root` with the built-in profiles.
pub fn build_extraction_report(root: &Path, db: &ReferenceDb) -> Result<ExtractionReport, ScanError> {
    let profiles = ProfileSet::builtin();
    Scanner::open(root, &profiles, db)?.report()
}

//! Reference database of editors and their Exif, DQT and filename signatures.
//!
//! Three tables: editors, Exif/DQT observations, and filename signatures.
//! Persistence goes through [`Storage`]; the line-oriented snapshot format
//! (see `docs/refdb-snapshot.md`) is both the on-disk format of
//! [`FileStore`] and the interchange format.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, SubsecRound, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exif::EditorExifSignature;
use crate::filename::{FilenameMatch, FilenameMatcher, MatchStrength};
use crate::metadata::{sniff_format, ImageFormat, ImageMetadata};
use crate::segments::DqtFingerprint;

pub const SNAPSHOT_HEADER: &str = "#refdb-snapshot";
pub const SNAPSHOT_VERSION: &str = "v1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RefDbError {
    #[error("input is neither JPEG nor PNG")]
    UnparseableImage,
    #[error("snapshot schema version {found:?} is not {SNAPSHOT_VERSION}")]
    SchemaVersionMismatch { found: String },
    #[error("malformed snapshot at line {line}: {reason}")]
    MalformedSnapshot { line: usize, reason: String },
    #[error("bad editor label {0:?}; expected name@version")]
    BadLabel(String),
    #[error("storage: {0}")]
    Io(String),
}

/// `name@version`. The version is everything after the last `@`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EditorLabel {
    pub name: String,
    pub version: String,
}

impl EditorLabel {
    pub fn new(name: &str, version: &str) -> EditorLabel {
        EditorLabel {
            name: name.to_owned(),
            version: version.to_owned(),
        }
    }

    pub fn parse(s: &str) -> Result<EditorLabel, RefDbError> {
        match s.rsplit_once('@') {
            Some((n, v)) if !n.is_empty() && !v.is_empty() => Ok(EditorLabel::new(n, v)),
            _ => Err(RefDbError::BadLabel(s.to_owned())),
        }
    }
}

impl fmt::Display for EditorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.name, self.version)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageEditor {
    pub editor_id: u32,
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExifDqtEntry {
    pub editor_id: u32,
    pub exif_software: Option<String>,
    pub exif_artist: Option<String>,
    pub dqt_fingerprint: Option<DqtFingerprint>,
    pub sample_count: u64,
    pub first_seen: DateTime<Utc>,
    pub last_seen: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditorSignatureEntry {
    pub editor_id: u32,
    pub filename_signature: String,
    pub pattern_name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceKind {
    Exif,
    FilenameSignature,
    Dqt,
    FilenameStructural,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub editor: String,
    pub version: String,
    pub evidence: EvidenceKind,
    /// Summed sample counts of the matched rows (filename rows count one each).
    pub sample_count: u64,
    /// DQT only: the fingerprint is recorded for more than one editor name.
    pub shared: bool,
    pub detail: String,
}

impl Candidate {
    fn rank(&self) -> (u8, std::cmp::Reverse<u64>, &str, &str) {
        let kind = match (self.evidence, self.shared) {
            (EvidenceKind::Exif, _) => 0,
            (EvidenceKind::FilenameSignature, _) => 1,
            (EvidenceKind::Dqt, false) => 2,
            (EvidenceKind::Dqt, true) => 3,
            (EvidenceKind::FilenameStructural, _) => 4,
        };
        (kind, std::cmp::Reverse(self.sample_count), &self.editor, &self.version)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LookupResult {
    pub candidates: Vec<Candidate>,
}

impl LookupResult {
    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn editors(&self) -> BTreeSet<&str> {
        self.candidates.iter().map(|c| c.editor.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Upsert {
    Inserted,
    Updated { sample_count: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestRecord {
    pub editor_id: u32,
    pub editor_created: bool,
    pub exif_dqt: Option<Upsert>,
    pub signatures_added: usize,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceDb {
    pub editors: Vec<ImageEditor>,
    pub exif_dqt: Vec<ExifDqtEntry>,
    pub signatures: Vec<EditorSignatureEntry>,
}

impl ReferenceDb {
    pub fn new() -> ReferenceDb {
        ReferenceDb::default()
    }

    pub fn is_empty(&self) -> bool {
        self.editors.is_empty()
    }

    pub fn editor(&self, id: u32) -> Option<&ImageEditor> {
        self.editors.iter().find(|e| e.editor_id == id)
    }

    pub fn editor_id(&self, label: &EditorLabel) -> Option<u32> {
        self.editors
            .iter()
            .find(|e| e.name == label.name && e.version == label.version)
            .map(|e| e.editor_id)
    }

    /// Returns the id and whether the row was created.
    pub fn ensure_editor(&mut self, label: &EditorLabel) -> (u32, bool) {
        if let Some(id) = self.editor_id(label) {
            return (id, false);
        }
        let id = self.editors.iter().map(|e| e.editor_id).max().unwrap_or(0) + 1;
        self.editors.push(ImageEditor {
            editor_id: id,
            name: label.name.clone(),
            version: label.version.clone(),
        });
        (id, true)
    }

    pub fn upsert_exif_dqt(
        &mut self,
        editor_id: u32,
        sig: Option<&EditorExifSignature>,
        fp: Option<&DqtFingerprint>,
        at: DateTime<Utc>,
    ) -> Option<Upsert> {
        let software = sig.and_then(|s| s.software.clone());
        let artist = sig.and_then(|s| s.artist.clone());
        if software.is_none() && artist.is_none() && fp.is_none() {
            return None;
        }
        let at = at.trunc_subsecs(0);
        if let Some(e) = self.exif_dqt.iter_mut().find(|e| {
            e.editor_id == editor_id
                && e.exif_software == software
                && e.exif_artist == artist
                && e.dqt_fingerprint.as_ref() == fp
        }) {
            e.sample_count += 1;
            e.first_seen = e.first_seen.min(at);
            e.last_seen = e.last_seen.max(at);
            return Some(Upsert::Updated {
                sample_count: e.sample_count,
            });
        }
        self.exif_dqt.push(ExifDqtEntry {
            editor_id,
            exif_software: software,
            exif_artist: artist,
            dqt_fingerprint: fp.cloned(),
            sample_count: 1,
            first_seen: at,
            last_seen: at,
        });
        Some(Upsert::Inserted)
    }

    /// Returns true when a new row was inserted.
    pub fn upsert_signature(&mut self, editor_id: u32, filename_signature: &str, pattern_name: &str) -> bool {
        if filename_signature.is_empty()
            || self.signatures.iter().any(|s| {
                s.editor_id == editor_id && s.filename_signature == filename_signature && s.pattern_name == pattern_name
            })
        {
            return false;
        }
        self.signatures.push(EditorSignatureEntry {
            editor_id,
            filename_signature: filename_signature.to_owned(),
            pattern_name: pattern_name.to_owned(),
        });
        true
    }

    /// Parses one labelled image and records its evidence. PNG inputs
    /// contribute filename evidence only.
    pub fn ingest_labeled_image(
        &mut self,
        bytes: &[u8],
        filename: &str,
        label: &EditorLabel,
        matcher: &FilenameMatcher,
        at: DateTime<Utc>,
    ) -> Result<IngestRecord, RefDbError> {
        let format = sniff_format(bytes);
        if format == ImageFormat::Unknown {
            return Err(RefDbError::UnparseableImage);
        }
        let meta = ImageMetadata::extract(bytes, filename, matcher);
        let (editor_id, editor_created) = self.ensure_editor(label);
        let exif_dqt = if format == ImageFormat::Jpeg {
            self.upsert_exif_dqt(editor_id, meta.exif_signature.as_ref(), meta.dqt_fingerprint.as_ref(), at)
        } else {
            None
        };
        let mut signatures_added = 0;
        for m in meta.filename_matches.iter().filter(|m| m.editor_name == label.name) {
            let Some(p) = matcher.pattern(&m.pattern_name) else { continue };
            let sig = p.signature_token.clone().unwrap_or_else(|| p.template());
            if self.upsert_signature(editor_id, &sig, &p.name) {
                signatures_added += 1;
            }
        }
        Ok(IngestRecord {
            editor_id,
            editor_created,
            exif_dqt,
            signatures_added,
            diagnostics: meta.diagnostics,
        })
    }

    /// Candidate editors for the given evidence. Every candidate traces back
    /// to at least one stored row.
    pub fn lookup(
        &self,
        exif_sig: Option<&EditorExifSignature>,
        dqt_fp: Option<&DqtFingerprint>,
        filename_matches: &[FilenameMatch],
    ) -> LookupResult {
        // (editor_id, kind) -> (count, shared, detail)
        let mut acc: BTreeMap<(u32, EvidenceKind), (u64, bool, String)> = BTreeMap::new();

        if let Some(sig) = exif_sig {
            for e in &self.exif_dqt {
                let sw = matches!((&sig.software, &e.exif_software), (Some(a), Some(b)) if a == b);
                let ar = matches!((&sig.artist, &e.exif_artist), (Some(a), Some(b)) if a == b);
                if !(sw || ar) {
                    continue;
                }
                let mut parts = Vec::new();
                if sw {
                    parts.push(format!("Software={:?}", e.exif_software.as_deref().unwrap_or_default()));
                }
                if ar {
                    parts.push(format!("Artist={:?}", e.exif_artist.as_deref().unwrap_or_default()));
                }
                let slot = acc.entry((e.editor_id, EvidenceKind::Exif)).or_insert((0, false, parts.join(", ")));
                slot.0 += e.sample_count;
            }
        }

        if let Some(fp) = dqt_fp {
            let rows: Vec<&ExifDqtEntry> =
                self.exif_dqt.iter().filter(|e| e.dqt_fingerprint.as_ref() == Some(fp)).collect();
            let names: BTreeSet<&str> = rows
                .iter()
                .filter_map(|e| self.editor(e.editor_id))
                .map(|e| e.name.as_str())
                .collect();
            let shared = names.len() > 1;
            for e in rows {
                let slot = acc
                    .entry((e.editor_id, EvidenceKind::Dqt))
                    .or_insert((0, shared, format!("DQT {fp}")));
                slot.0 += e.sample_count;
            }
        }

        for m in filename_matches {
            let kind = match m.strength {
                MatchStrength::Signature => EvidenceKind::FilenameSignature,
                MatchStrength::Structural => EvidenceKind::FilenameStructural,
            };
            for ed in self.editors.iter().filter(|e| e.name == m.editor_name) {
                let rows = self
                    .signatures
                    .iter()
                    .filter(|s| s.editor_id == ed.editor_id && s.pattern_name == m.pattern_name)
                    .count() as u64;
                let slot = acc
                    .entry((ed.editor_id, kind))
                    .or_insert((0, false, format!("filename pattern {}", m.pattern_name)));
                slot.0 = slot.0.max(rows);
            }
        }

        let mut candidates: Vec<Candidate> = acc
            .into_iter()
            .filter_map(|((id, evidence), (sample_count, shared, detail))| {
                let ed = self.editor(id)?;
                Some(Candidate {
                    editor: ed.name.clone(),
                    version: ed.version.clone(),
                    evidence,
                    sample_count,
                    shared,
                    detail,
                })
            })
            .collect();
        candidates.sort_by(|a, b| a.rank().cmp(&b.rank()));
        LookupResult { candidates }
    }

    /// Serializes every row in the snapshot format.
    pub fn export_snapshot(&self) -> String {
        let mut out = format!("{SNAPSHOT_HEADER} {SNAPSHOT_VERSION}\n");
        for e in &self.editors {
            out.push_str(&format!("editor\t{}\t{}\t{}\n", e.editor_id, esc(&e.name), esc(&e.version)));
        }
        for e in &self.exif_dqt {
            out.push_str(&format!(
                "exif_dqt\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                e.editor_id,
                opt(e.exif_software.as_deref()),
                opt(e.exif_artist.as_deref()),
                opt(e.dqt_fingerprint.as_ref().map(|f| f.as_str())),
                e.sample_count,
                e.first_seen.to_rfc3339_opts(SecondsFormat::Secs, true),
                e.last_seen.to_rfc3339_opts(SecondsFormat::Secs, true),
            ));
        }
        for s in &self.signatures {
            out.push_str(&format!(
                "signature\t{}\t{}\t{}\n",
                s.editor_id,
                esc(&s.filename_signature),
                esc(&s.pattern_name)
            ));
        }
        out
    }

    pub fn import_snapshot(text: &str) -> Result<ReferenceDb, RefDbError> {
        let mut lines = text.lines().enumerate();
        let header = lines.next().map(|(_, l)| l).unwrap_or_default();
        let version = header
            .strip_prefix(SNAPSHOT_HEADER)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| RefDbError::MalformedSnapshot {
                line: 1,
                reason: format!("missing {SNAPSHOT_HEADER} header"),
            })?;
        if version != SNAPSHOT_VERSION {
            return Err(RefDbError::SchemaVersionMismatch {
                found: version.to_owned(),
            });
        }
        let mut db = ReferenceDb::new();
        for (i, line) in lines {
            let n = i + 1;
            let bad = |reason: &str| RefDbError::MalformedSnapshot {
                line: n,
                reason: reason.to_owned(),
            };
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let id = |s: &str| s.parse::<u32>().map_err(|_| bad("editor id is not an integer"));
            match (f[0], f.len()) {
                ("editor", 4) => {
                    let editor_id = id(f[1])?;
                    if db.editor(editor_id).is_some() {
                        return Err(bad("duplicate editor id"));
                    }
                    let name = unesc(f[2]).ok_or_else(|| bad("bad escape"))?;
                    let version = unesc(f[3]).ok_or_else(|| bad("bad escape"))?;
                    if db.editor_id(&EditorLabel::new(&name, &version)).is_some() {
                        return Err(bad("duplicate editor name and version"));
                    }
                    db.editors.push(ImageEditor {
                        editor_id,
                        name,
                        version,
                    });
                }
                ("exif_dqt", 8) => {
                    let editor_id = id(f[1])?;
                    if db.editor(editor_id).is_none() {
                        return Err(bad("unknown editor id"));
                    }
                    let exif_software = unopt(f[2]).ok_or_else(|| bad("bad escape"))?;
                    let exif_artist = unopt(f[3]).ok_or_else(|| bad("bad escape"))?;
                    let dqt_fingerprint = match unopt(f[4]).ok_or_else(|| bad("bad escape"))? {
                        None => None,
                        Some(s) => Some(DqtFingerprint::parse(&s).ok_or_else(|| bad("fingerprint is not 32 lowercase hex digits"))?),
                    };
                    if exif_software.is_none() && exif_artist.is_none() && dqt_fingerprint.is_none() {
                        return Err(bad("exif_dqt row carries no evidence"));
                    }
                    let sample_count: u64 = f[5].parse().map_err(|_| bad("sample count is not an integer"))?;
                    if sample_count == 0 {
                        return Err(bad("sample count must be at least 1"));
                    }
                    let ts = |s: &str| {
                        DateTime::parse_from_rfc3339(s)
                            .map(|t| t.with_timezone(&Utc))
                            .map_err(|_| bad("timestamp is not RFC 3339"))
                    };
                    db.exif_dqt.push(ExifDqtEntry {
                        editor_id,
                        exif_software,
                        exif_artist,
                        dqt_fingerprint,
                        sample_count,
                        first_seen: ts(f[6])?,
                        last_seen: ts(f[7])?,
                    });
                }
                ("signature", 4) => {
                    let editor_id = id(f[1])?;
                    if db.editor(editor_id).is_none() {
                        return Err(bad("unknown editor id"));
                    }
                    let filename_signature = unesc(f[2]).ok_or_else(|| bad("bad escape"))?;
                    if filename_signature.is_empty() {
                        return Err(bad("empty filename signature"));
                    }
                    db.signatures.push(EditorSignatureEntry {
                        editor_id,
                        filename_signature,
                        pattern_name: unesc(f[3]).ok_or_else(|| bad("bad escape"))?,
                    });
                }
                ("editor" | "exif_dqt" | "signature", _) => return Err(bad("wrong field count")),
                _ => return Err(bad("unknown record type")),
            }
        }
        Ok(db)
    }
}

const NULL: &str = "\\N";

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unesc(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        out.push(match chars.next()? {
            '\\' => '\\',
            't' => '\t',
            'n' => '\n',
            'r' => '\r',
            _ => return None,
        });
    }
    Some(out)
}

fn opt(s: Option<&str>) -> String {
    s.map(esc).unwrap_or_else(|| NULL.to_owned())
}

fn unopt(s: &str) -> Option<Option<String>> {
    if s == NULL {
        Some(None)
    } else {
        unesc(s).map(Some)
    }
}

/// Physical persistence of a [`ReferenceDb`].
pub trait Storage {
    fn load(&self) -> Result<ReferenceDb, RefDbError>;
    fn save(&self, db: &ReferenceDb) -> Result<(), RefDbError>;
}

/// Single-file store holding a snapshot. A missing file loads as an empty
/// database; saves replace the file atomically.
#[derive(Debug, Clone)]
pub struct FileStore {
    path: PathBuf,
}

impl FileStore {
    pub fn new(path: impl Into<PathBuf>) -> FileStore {
        FileStore { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl Storage for FileStore {
    fn load(&self) -> Result<ReferenceDb, RefDbError> {
        match fs::read_to_string(&self.path) {
            Ok(text) => ReferenceDb::import_snapshot(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(ReferenceDb::new()),
            Err(e) => Err(RefDbError::Io(format!("{}: {e}", self.path.display()))),
        }
    }

    fn save(&self, db: &ReferenceDb) -> Result<(), RefDbError> {
        let io = |e: std::io::Error| RefDbError::Io(format!("{}: {e}", self.path.display()));
        let mut tmp = self.path.clone().into_os_string();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(db.export_snapshot().as_bytes()).map_err(io)?;
        f.sync_all().map_err(io)?;
        fs::rename(&tmp, &self.path).map_err(io)
    }
}

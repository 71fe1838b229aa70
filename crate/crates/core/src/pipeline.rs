//! Three-stage image analysis: metadata lookup against the reference db,
//! pixel-domain localization, and evidence fusion into a verdict.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{
    ela, luminance_gradient, noise_analysis, pca_projection, verdict_from_heatmap, Heatmap, RegionVerdict,
    DEFAULT_ELA_AMPLIFICATION, DEFAULT_ELA_QUALITY, DEFAULT_MEDIAN_WINDOW,
};
use crate::codec::{decode_with, raw, DecodeOptions};
use crate::filename::{FilenameMatcher, MatchStrength};
use crate::metadata::{ImageFormat, ImageMetadata};
use crate::refdb::{EvidenceKind, LookupResult, ReferenceDb};

pub const REPORT_SCHEMA: &str = "manipscan.report";
pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Stage-2 region rule: ELA at [`REGION_ELA_QUALITY`], averaged over
/// [`REGION_BLOCK`]-pixel tiles, Otsu split, then score and inside heat
/// compared against these limits.
pub const REGION_SCORE_THRESHOLD: f64 = 1.5;
pub const REGION_MIN_INSIDE_HEAT: f64 = 40.0;
pub const REGION_ELA_QUALITY: u8 = 90;
pub const REGION_BLOCK: usize = 8;

pub const CONVENTION_NOTE: &str = "verdict thresholds and evidence priority are toolkit conventions, not calibrated detection rates";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cannot read {path}: {source}")]
    FileUnreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    ArtifactWrite {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatmapFormat {
    Png,
    Raw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeOptions {
    pub ela_quality: u8,
    pub ela_amplification: f64,
    pub median_window: usize,
    pub pca_component: usize,
    pub region_quality: u8,
    pub max_pixels: u64,
    /// Heatmaps are written here when set.
    pub artifact_dir: Option<PathBuf>,
    pub heatmap_format: HeatmapFormat,
}

impl Default for AnalyzeOptions {
    fn default() -> AnalyzeOptions {
        AnalyzeOptions {
            ela_quality: DEFAULT_ELA_QUALITY,
            ela_amplification: DEFAULT_ELA_AMPLIFICATION,
            median_window: DEFAULT_MEDIAN_WINDOW,
            pca_component: 1,
            region_quality: REGION_ELA_QUALITY,
            max_pixels: crate::codec::DEFAULT_MAX_PIXELS,
            artifact_dir: None,
            heatmap_format: HeatmapFormat::Png,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    ManipulationIndicated,
    Inconclusive,
    NoSignal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RationaleKind {
    Exif,
    FilenameSignature,
    Dqt,
    Stage2Region,
    FilenameStructural,
    Note,
}

impl RationaleKind {
    pub fn is_evidence(self) -> bool {
        self != RationaleKind::Note
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationaleEntry {
    pub kind: RationaleKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub score: f64,
    pub threshold_used: f64,
    pub suspicious_fraction: f64,
    pub mean_inside: f64,
    pub mean_outside: f64,
}

impl From<&RegionVerdict> for RegionSummary {
    fn from(v: &RegionVerdict) -> RegionSummary {
        RegionSummary {
            score: v.score,
            threshold_used: v.threshold_used,
            suspicious_fraction: v.suspicious_fraction,
            mean_inside: v.mean_inside,
            mean_outside: v.mean_outside,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisScore {
    pub analysis: String,
    pub mean_heat: f64,
    pub max_heat: f64,
    pub region: RegionSummary,
    pub artifact: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1 {
    pub metadata: ImageMetadata,
    pub lookup: LookupResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2 {
    pub skipped: Option<String>,
    /// Analyses that could not run on this image.
    pub notes: Vec<String>,
    pub analyses: Vec<AnalysisScore>,
    /// Block-level ELA region used by the verdict.
    pub region: Option<RegionSummary>,
    pub region_indicated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageVerdict {
    pub target: String,
    pub sha256: String,
    pub stage1: Stage1,
    pub stage2: Stage2,
    pub verdict: Verdict,
    /// Evidence strongest first, then notes.
    pub rationale: Vec<RationaleEntry>,
}

impl ImageVerdict {
    pub fn evidence(&self) -> impl Iterator<Item = &RationaleEntry> {
        self.rationale.iter().filter(|r| r.kind.is_evidence())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbInfo {
    pub snapshot_sha256: String,
    pub editors: usize,
    pub exif_dqt_rows: usize,
    pub signature_rows: usize,
}

impl DbInfo {
    pub fn of(db: &ReferenceDb) -> DbInfo {
        DbInfo {
            snapshot_sha256: sha256_hex(db.export_snapshot().as_bytes()),
            editors: db.editors.len(),
            exif_dqt_rows: db.exif_dqt.len(),
            signature_rows: db.signatures.len(),
        }
    }
}

/// Top-level JSON document for `analyze` and `scan`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub schema_version: u32,
    pub tool_version: String,
    pub db: DbInfo,
    pub convention_note: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<ImageVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extraction: Option<crate::scanner::ExtractionReport>,
}

impl Report {
    pub fn new(db: &ReferenceDb) -> Report {
        Report {
            schema: REPORT_SCHEMA.into(),
            schema_version: REPORT_SCHEMA_VERSION,
            tool_version: TOOL_VERSION.into(),
            db: DbInfo::of(db),
            convention_note: CONVENTION_NOTE.into(),
            images: Vec::new(),
            extraction: None,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn analyze_image(path: &Path, db: &ReferenceDb, options: &AnalyzeOptions) -> Result<ImageVerdict, PipelineError> {
    let bytes = std::fs::read(path).map_err(|source| PipelineError::FileUnreadable {
        path: path.to_path_buf(),
        source,
    })?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    analyze_bytes(&bytes, &name, db, options)
}

/// Same as [`analyze_image`] for in-memory input; `filename` is the bare
/// name used for filename-signature matching.
pub fn analyze_bytes(
    bytes: &[u8],
    filename: &str,
    db: &ReferenceDb,
    options: &AnalyzeOptions,
) -> Result<ImageVerdict, PipelineError> {
    let matcher = FilenameMatcher::builtin();
    let mut metadata = ImageMetadata::extract(bytes, filename, &matcher);
    metadata.dqt_tables = None;
    let lookup = db.lookup(
        metadata.exif_signature.as_ref(),
        metadata.dqt_fingerprint.as_ref(),
        &metadata.filename_matches,
    );
    let stage2 = run_stage2(bytes, &metadata, filename, options)?;
    let mut rationale = Vec::new();
    for c in &lookup.candidates {
        let kind = match c.evidence {
            EvidenceKind::Exif => RationaleKind::Exif,
            EvidenceKind::FilenameSignature => RationaleKind::FilenameSignature,
            EvidenceKind::Dqt => RationaleKind::Dqt,
            EvidenceKind::FilenameStructural => RationaleKind::FilenameStructural,
        };
        let shared = if c.shared { ", shared with other editors" } else { "" };
        rationale.push(RationaleEntry {
            kind,
            text: format!("{}@{}: {} ({} samples{shared})", c.editor, c.version, c.detail, c.sample_count),
        });
    }
    if stage2.region_indicated {
        let r = stage2.region.as_ref().expect("indicated implies region");
        rationale.push(RationaleEntry {
            kind: RationaleKind::Stage2Region,
            text: format!(
                "ELA region score {:.2} (inside heat {:.1}) meets the {REGION_SCORE_THRESHOLD} threshold",
                r.score, r.mean_inside
            ),
        });
    }
    rationale.sort_by_key(|r| r.kind);
    let matched_editors = lookup.editors();
    for m in &metadata.filename_matches {
        if !matched_editors.contains(m.editor_name.as_str()) {
            let strength = match m.strength {
                MatchStrength::Signature => "signature",
                MatchStrength::Structural => "structural",
            };
            rationale.push(RationaleEntry {
                kind: RationaleKind::Note,
                text: format!("filename matches {} grammar {} ({strength}) but the reference db has no row for it", m.editor_name, m.pattern_name),
            });
        }
    }
    if let Some(sig) = &metadata.exif_signature {
        if !lookup.candidates.iter().any(|c| c.evidence == EvidenceKind::Exif) {
            rationale.push(RationaleEntry {
                kind: RationaleKind::Note,
                text: format!(
                    "exif software {:?} artist {:?} not in the reference db",
                    sig.software.as_deref().unwrap_or(""),
                    sig.artist.as_deref().unwrap_or("")
                ),
            });
        }
    }
    if let Some(reason) = &stage2.skipped {
        rationale.push(RationaleEntry {
            kind: RationaleKind::Note,
            text: format!("stage 2 skipped: {reason}"),
        });
    }
    for n in &stage2.notes {
        rationale.push(RationaleEntry {
            kind: RationaleKind::Note,
            text: format!("stage 2: {n}"),
        });
    }
    for d in &metadata.diagnostics {
        rationale.push(RationaleEntry {
            kind: RationaleKind::Note,
            text: format!("metadata: {d}"),
        });
    }
    let strong = rationale.iter().any(|r| {
        matches!(
            r.kind,
            RationaleKind::Exif | RationaleKind::FilenameSignature | RationaleKind::Dqt | RationaleKind::Stage2Region
        )
    });
    let weak = rationale.iter().any(|r| r.kind == RationaleKind::FilenameStructural) || !metadata.filename_matches.is_empty();
    let verdict = if strong {
        Verdict::ManipulationIndicated
    } else if weak {
        Verdict::Inconclusive
    } else {
        Verdict::NoSignal
    };
    Ok(ImageVerdict {
        target: filename.to_owned(),
        sha256: sha256_hex(bytes),
        stage1: Stage1 { metadata, lookup },
        stage2,
        verdict,
        rationale,
    })
}

fn run_stage2(
    bytes: &[u8],
    metadata: &ImageMetadata,
    filename: &str,
    options: &AnalyzeOptions,
) -> Result<Stage2, PipelineError> {
    let skipped = |reason: String| Stage2 {
        skipped: Some(reason),
        notes: Vec::new(),
        analyses: Vec::new(),
        region: None,
        region_indicated: false,
    };
    match metadata.format {
        ImageFormat::Jpeg => {}
        ImageFormat::Png => return Ok(skipped("PNG input is identified but not decoded".into())),
        ImageFormat::Unknown => return Ok(skipped("not a JPEG or PNG file".into())),
    }
    let img = match decode_with(bytes, &DecodeOptions { max_pixels: options.max_pixels }) {
        Ok(i) => i.to_rgb(),
        Err(e) => return Ok(skipped(e.to_string())),
    };
    let mut analyses = Vec::new();
    let mut notes = Vec::new();
    let stem = filename.rsplit_once('.').map_or(filename, |(s, _)| s);
    let heatmaps = [
        ("ela", ela(&img, options.ela_quality, options.ela_amplification), false),
        ("noise", noise_analysis(&img, options.median_window), true),
        ("gradient", Ok(luminance_gradient(&img)), true),
        ("pca", pca_projection(&img, options.pca_component), false),
    ];
    for (name, heat, scaled) in heatmaps {
        let region = match heat.and_then(|h| verdict_from_heatmap(&h, None).map(|v| (h, v))) {
            Ok(r) => r,
            Err(e) => {
                notes.push(format!("{name}: {e}"));
                continue;
            }
        };
        let (heat, verdict) = region;
        let artifact = match &options.artifact_dir {
            Some(dir) => Some(write_heatmap(dir, stem, name, &heat, scaled, options.heatmap_format)?),
            None => None,
        };
        analyses.push(AnalysisScore {
            analysis: name.into(),
            mean_heat: heat.mean(),
            max_heat: heat.max(),
            region: RegionSummary::from(&verdict),
            artifact,
        });
    }
    let (region, region_indicated) = match ela(&img, options.region_quality, options.ela_amplification)
        .and_then(|h| verdict_from_heatmap(&h.block_means(REGION_BLOCK), None))
    {
        Ok(v) => {
            let hit = v.score >= REGION_SCORE_THRESHOLD && v.mean_inside >= REGION_MIN_INSIDE_HEAT;
            (Some(RegionSummary::from(&v)), hit)
        }
        Err(e) => {
            notes.push(format!("region: {e}"));
            (None, false)
        }
    };
    Ok(Stage2 {
        skipped: None,
        notes,
        analyses,
        region,
        region_indicated,
    })
}

fn write_heatmap(
    dir: &Path,
    stem: &str,
    name: &str,
    heat: &Heatmap,
    scaled: bool,
    format: HeatmapFormat,
) -> Result<String, PipelineError> {
    let rendered = if scaled { heat.minmax_scaled() } else { heat.clone() };
    let (ext, bytes) = match format {
        HeatmapFormat::Png => ("png", rendered.to_png()),
        HeatmapFormat::Raw => ("raw", raw::write_raw(&rendered.to_image())),
    };
    let path = dir.join(format!("{stem}.{name}.{ext}"));
    let io = |source| PipelineError::ArtifactWrite {
        path: path.clone(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    std::fs::write(&path, bytes).map_err(io)?;
    Ok(path.display().to_string())
}

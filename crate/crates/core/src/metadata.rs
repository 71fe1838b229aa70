//! Stage-1 evidence gathered from one file: container format, Exif
//! signature, quantization fingerprints, frame summary and filename matches.

use serde::{Deserialize, Serialize};

use crate::codec::Subsampling;
use crate::exif::{self, EditorExifSignature};
use crate::filename::{FilenameMatch, FilenameMatcher};
use crate::segments::{self, CodingProcess, DqtFingerprint, QuantTableSet};

pub const JPEG_MAGIC: &[u8] = &[0xFF, 0xD8, 0xFF];
pub const PNG_MAGIC: &[u8] = &[0x89, 0x50, 0x4E, 0x47, 0x0D, 0x0A, 0x1A, 0x0A];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageFormat {
    Jpeg,
    Png,
    Unknown,
}

pub fn sniff_format(bytes: &[u8]) -> ImageFormat {
    if bytes.starts_with(JPEG_MAGIC) {
        ImageFormat::Jpeg
    } else if bytes.starts_with(PNG_MAGIC) {
        ImageFormat::Png
    } else {
        ImageFormat::Unknown
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameInfo {
    pub coding: CodingProcess,
    pub width: u16,
    pub height: u16,
    pub components: u8,
    pub subsampling: Subsampling,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageMetadata {
    pub format: ImageFormat,
    pub exif_signature: Option<EditorExifSignature>,
    pub exif_datetime: Option<String>,
    pub dqt_fingerprint: Option<DqtFingerprint>,
    #[serde(skip)]
    pub dqt_tables: Option<QuantTableSet>,
    pub thumbnail_fingerprint: Option<DqtFingerprint>,
    pub frame: Option<FrameInfo>,
    /// Bytes after EOI.
    pub trailer_len: Option<usize>,
    pub missing_eoi: bool,
    pub filename_matches: Vec<FilenameMatch>,
    pub diagnostics: Vec<String>,
}

impl ImageMetadata {
    /// Never fails: parse problems become diagnostics.
    pub fn extract(bytes: &[u8], filename: &str, matcher: &FilenameMatcher) -> ImageMetadata {
        let mut meta = ImageMetadata {
            format: sniff_format(bytes),
            exif_signature: None,
            exif_datetime: None,
            dqt_fingerprint: None,
            dqt_tables: None,
            thumbnail_fingerprint: None,
            frame: None,
            trailer_len: None,
            missing_eoi: false,
            filename_matches: matcher.match_filename(filename),
            diagnostics: Vec::new(),
        };
        if meta.format == ImageFormat::Jpeg {
            meta.read_jpeg(bytes);
        }
        meta
    }

    fn read_jpeg(&mut self, bytes: &[u8]) {
        let list = match segments::parse_segments(bytes) {
            Ok(l) => l,
            Err(e) => {
                self.diagnostics.push(format!("segment parse failed: {e}"));
                return;
            }
        };
        self.missing_eoi = list.missing_eoi;
        if list.missing_eoi {
            self.diagnostics.push("stream ends without EOI".into());
        }
        self.trailer_len = list.trailer.as_ref().map(|r| r.len());
        match segments::extract_dqt(&list) {
            Ok(qts) => {
                self.dqt_fingerprint = segments::dqt_fingerprint(&qts);
                self.dqt_tables = Some(qts);
            }
            Err(e) => self.diagnostics.push(format!("DQT: {e}")),
        }
        match list.frame_header() {
            Ok(h) => {
                let factors: Vec<(u8, u8)> = h.components.iter().map(|c| (c.h, c.v)).collect();
                self.frame = Some(FrameInfo {
                    coding: h.coding,
                    width: h.width,
                    height: h.height,
                    components: h.components.len() as u8,
                    subsampling: Subsampling::from_factors(&factors),
                });
            }
            Err(e) => self.diagnostics.push(format!("frame header: {e}")),
        }
        // The first APP1 block that parses as Exif wins.
        for payload in list.exif_payloads() {
            match exif::parse_exif(payload) {
                Ok(rec) => {
                    self.exif_signature = exif::extract_editor_signature(&rec);
                    self.exif_datetime = rec.datetime().map(str::to_owned);
                    let thumb = exif::extract_thumbnail_dqt(&rec);
                    self.thumbnail_fingerprint = thumb.tables.as_ref().and_then(segments::dqt_fingerprint);
                    if let Some(d) = thumb.diagnostic {
                        self.diagnostics.push(d);
                    }
                    break;
                }
                Err(e) => self.diagnostics.push(format!("Exif: {e}")),
            }
        }
    }

    /// True when any stage-1 signal at all was found.
    pub fn has_signal(&self) -> bool {
        self.exif_signature.is_some() || !self.filename_matches.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exif::{ByteOrder, TAG_SOFTWARE};
    use crate::fixtures::{identity_thumbnail, jpeg_fixture, with_exif, ExifWriter};

    #[test]
    fn formats() {
        assert_eq!(sniff_format(&[0xFF, 0xD8, 0xFF, 0xE0]), ImageFormat::Jpeg);
        assert_eq!(sniff_format(PNG_MAGIC), ImageFormat::Png);
        assert_eq!(sniff_format(b"hello"), ImageFormat::Unknown);
        assert_eq!(sniff_format(&[0xFF, 0xD8]), ImageFormat::Unknown);
    }

    #[test]
    fn full_jpeg() {
        let exif = ExifWriter::new(ByteOrder::LittleEndian)
            .ascii(TAG_SOFTWARE, "Snapseed 2.0")
            .thumbnail(identity_thumbnail());
        let j = with_exif(&jpeg_fixture(16, 16, 1, 95), &exif);
        let m = ImageMetadata::extract(&j, "a_edited.jpeg", &FilenameMatcher::builtin());
        assert_eq!(m.format, ImageFormat::Jpeg);
        assert_eq!(m.exif_signature.unwrap().software.as_deref(), Some("Snapseed 2.0"));
        assert!(m.dqt_fingerprint.is_some());
        assert_ne!(m.thumbnail_fingerprint, m.dqt_fingerprint);
        assert_eq!(m.frame.unwrap().subsampling, Subsampling::S444);
        assert_eq!(m.filename_matches.len(), 1);
        assert!(m.diagnostics.is_empty(), "{:?}", m.diagnostics);
    }

    #[test]
    fn garbage_is_diagnosed_not_fatal() {
        let m = ImageMetadata::extract(&[0xFF, 0xD8, 0xFF, 0xDB, 0x00], "x.jpg", &FilenameMatcher::default());
        assert_eq!(m.format, ImageFormat::Jpeg);
        assert!(!m.diagnostics.is_empty());
    }
}

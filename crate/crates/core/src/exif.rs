//! Exif (APP1) parsing.
//!
//! Only IFD0 and IFD1 are interpreted. Pointers to the Exif sub-IFD and the
//! GPS IFD are recorded but not followed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::segments::{self, QuantTableSet, TableSource};

pub const EXIF_PREAMBLE: &[u8] = b"Exif\0\0";

pub const TAG_SOFTWARE: u16 = 0x0131;
pub const TAG_DATETIME: u16 = 0x0132;
pub const TAG_ARTIST: u16 = 0x013B;
pub const TAG_MAKE: u16 = 0x010F;
pub const TAG_MODEL: u16 = 0x0110;
pub const TAG_EXIF_IFD: u16 = 0x8769;
pub const TAG_GPS_IFD: u16 = 0x8825;
pub const TAG_JPEG_OFFSET: u16 = 0x0201;
pub const TAG_JPEG_LENGTH: u16 = 0x0202;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExifError {
    #[error("payload does not start with the Exif preamble")]
    BadPreamble,
    #[error("bad TIFF header")]
    BadTiffHeader,
    #[error("offset {offset} (+{len}) lies outside the {size}-byte TIFF block")]
    OffsetOutOfBounds { offset: usize, len: usize, size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ByteOrder {
    BigEndian,
    LittleEndian,
}

impl ByteOrder {
    fn u16(self, b: &[u8]) -> u16 {
        let a = [b[0], b[1]];
        match self {
            ByteOrder::BigEndian => u16::from_be_bytes(a),
            ByteOrder::LittleEndian => u16::from_le_bytes(a),
        }
    }

    fn u32(self, b: &[u8]) -> u32 {
        let a = [b[0], b[1], b[2], b[3]];
        match self {
            ByteOrder::BigEndian => u32::from_be_bytes(a),
            ByteOrder::LittleEndian => u32::from_le_bytes(a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TagValue {
    Byte(Vec<u8>),
    /// NUL terminator stripped.
    Ascii(String),
    Short(Vec<u16>),
    Long(Vec<u32>),
    Rational(Vec<(u32, u32)>),
    SByte(Vec<i8>),
    Undefined(Vec<u8>),
    SShort(Vec<i16>),
    SLong(Vec<i32>),
    SRational(Vec<(i32, i32)>),
    Float(Vec<f32>),
    Double(Vec<f64>),
}

impl TagValue {
    pub fn as_ascii(&self) -> Option<&str> {
        match self {
            TagValue::Ascii(s) => Some(s),
            _ => None,
        }
    }

    /// First element of an integer-typed value.
    pub fn as_u32(&self) -> Option<u32> {
        match self {
            TagValue::Short(v) => v.first().map(|&x| x as u32),
            TagValue::Long(v) => v.first().copied(),
            TagValue::Byte(v) => v.first().map(|&x| x as u32),
            _ => None,
        }
    }

    /// TIFF field type code.
    pub fn type_code(&self) -> u16 {
        match self {
            TagValue::Byte(_) => 1,
            TagValue::Ascii(_) => 2,
            TagValue::Short(_) => 3,
            TagValue::Long(_) => 4,
            TagValue::Rational(_) => 5,
            TagValue::SByte(_) => 6,
            TagValue::Undefined(_) => 7,
            TagValue::SShort(_) => 8,
            TagValue::SLong(_) => 9,
            TagValue::SRational(_) => 10,
            TagValue::Float(_) => 11,
            TagValue::Double(_) => 12,
        }
    }
}

fn type_size(code: u16) -> Option<usize> {
    Some(match code {
        1 | 2 | 6 | 7 => 1,
        3 | 8 => 2,
        4 | 9 | 11 => 4,
        5 | 10 | 12 => 8,
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExifRecord {
    pub byte_order: ByteOrder,
    /// IFD0 tags.
    pub tags: BTreeMap<u16, TagValue>,
    /// IFD1 (thumbnail) tags.
    pub thumbnail_tags: BTreeMap<u16, TagValue>,
    pub exif_ifd_offset: Option<u32>,
    pub gps_ifd_offset: Option<u32>,
    /// Embedded thumbnail JPEG, when IFD1 points at one.
    #[serde(skip)]
    pub thumbnail: Option<Vec<u8>>,
}

impl ExifRecord {
    pub fn ascii(&self, tag: u16) -> Option<&str> {
        self.tags.get(&tag).and_then(TagValue::as_ascii)
    }

    pub fn software(&self) -> Option<&str> {
        self.ascii(TAG_SOFTWARE)
    }

    pub fn artist(&self) -> Option<&str> {
        self.ascii(TAG_ARTIST)
    }

    pub fn datetime(&self) -> Option<&str> {
        self.ascii(TAG_DATETIME)
    }
}

struct Tiff<'a> {
    data: &'a [u8],
    order: ByteOrder,
}

impl<'a> Tiff<'a> {
    fn slice(&self, offset: usize, len: usize) -> Result<&'a [u8], ExifError> {
        let end = offset.checked_add(len);
        match end {
            Some(end) if end <= self.data.len() => Ok(&self.data[offset..end]),
            _ => Err(ExifError::OffsetOutOfBounds {
                offset,
                len,
                size: self.data.len(),
            }),
        }
    }

    /// Reads one IFD. Returns its tags and the offset of the next IFD.
    fn read_ifd(&self, offset: usize) -> Result<(BTreeMap<u16, TagValue>, u32), ExifError> {
        let count = self.order.u16(self.slice(offset, 2)?) as usize;
        let entries = self.slice(offset + 2, count * 12)?;
        let mut tags = BTreeMap::new();
        for e in entries.chunks_exact(12) {
            let tag = self.order.u16(&e[0..2]);
            let typ = self.order.u16(&e[2..4]);
            let n = self.order.u32(&e[4..8]) as usize;
            // Unknown field types cannot be sized; skip the entry.
            let Some(size) = type_size(typ) else { continue };
            let total = size.checked_mul(n).ok_or(ExifError::OffsetOutOfBounds {
                offset,
                len: usize::MAX,
                size: self.data.len(),
            })?;
            let raw = if total <= 4 {
                &e[8..8 + total]
            } else {
                self.slice(self.order.u32(&e[8..12]) as usize, total)?
            };
            tags.insert(tag, self.decode(typ, size, raw));
        }
        let next = self.order.u32(self.slice(offset + 2 + count * 12, 4)?);
        Ok((tags, next))
    }

    fn decode(&self, typ: u16, size: usize, raw: &[u8]) -> TagValue {
        let o = self.order;
        let it = raw.chunks_exact(size);
        match typ {
            1 => TagValue::Byte(raw.to_vec()),
            2 => {
                let end = raw.iter().position(|&b| b == 0).unwrap_or(raw.len());
                TagValue::Ascii(String::from_utf8_lossy(&raw[..end]).into_owned())
            }
            3 => TagValue::Short(it.map(|c| o.u16(c)).collect()),
            4 => TagValue::Long(it.map(|c| o.u32(c)).collect()),
            5 => TagValue::Rational(it.map(|c| (o.u32(&c[..4]), o.u32(&c[4..]))).collect()),
            6 => TagValue::SByte(raw.iter().map(|&b| b as i8).collect()),
            8 => TagValue::SShort(it.map(|c| o.u16(c) as i16).collect()),
            9 => TagValue::SLong(it.map(|c| o.u32(c) as i32).collect()),
            10 => TagValue::SRational(
                it.map(|c| (o.u32(&c[..4]) as i32, o.u32(&c[4..]) as i32))
                    .collect(),
            ),
            11 => TagValue::Float(it.map(|c| f32::from_bits(o.u32(c))).collect()),
            12 => TagValue::Double(
                it.map(|c| {
                    let (hi, lo) = match o {
                        ByteOrder::BigEndian => (o.u32(&c[..4]), o.u32(&c[4..])),
                        ByteOrder::LittleEndian => (o.u32(&c[4..]), o.u32(&c[..4])),
                    };
                    f64::from_bits(((hi as u64) << 32) | lo as u64)
                })
                .collect(),
            ),
            _ => TagValue::Undefined(raw.to_vec()),
        }
    }
}

/// Parses an APP1 payload beginning with `Exif\0\0`.
pub fn parse_exif(app1_payload: &[u8]) -> Result<ExifRecord, ExifError> {
    let data = app1_payload
        .strip_prefix(EXIF_PREAMBLE)
        .ok_or(ExifError::BadPreamble)?;
    if data.len() < 8 {
        return Err(ExifError::BadTiffHeader);
    }
    let order = match &data[..2] {
        b"II" => ByteOrder::LittleEndian,
        b"MM" => ByteOrder::BigEndian,
        _ => return Err(ExifError::BadTiffHeader),
    };
    if order.u16(&data[2..4]) != 42 {
        return Err(ExifError::BadTiffHeader);
    }
    let tiff = Tiff { data, order };
    let ifd0 = order.u32(&data[4..8]) as usize;
    let (tags, next) = tiff.read_ifd(ifd0)?;

    let mut record = ExifRecord {
        byte_order: order,
        exif_ifd_offset: tags.get(&TAG_EXIF_IFD).and_then(TagValue::as_u32),
        gps_ifd_offset: tags.get(&TAG_GPS_IFD).and_then(TagValue::as_u32),
        tags,
        thumbnail_tags: BTreeMap::new(),
        thumbnail: None,
    };

    if next != 0 && next as usize != ifd0 {
        let (ifd1, _) = tiff.read_ifd(next as usize)?;
        let off = ifd1.get(&TAG_JPEG_OFFSET).and_then(TagValue::as_u32);
        let len = ifd1.get(&TAG_JPEG_LENGTH).and_then(TagValue::as_u32);
        if let (Some(off), Some(len)) = (off, len) {
            record.thumbnail = Some(tiff.slice(off as usize, len as usize)?.to_vec());
        }
        record.thumbnail_tags = ifd1;
    }
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditorExifSignature {
    pub software: Option<String>,
    pub artist: Option<String>,
}

/// Software/Artist strings exactly as stored, or `None` when neither exists.
pub fn extract_editor_signature(rec: &ExifRecord) -> Option<EditorExifSignature> {
    let software = rec.software().map(str::to_owned);
    let artist = rec.artist().map(str::to_owned);
    if software.is_none() && artist.is_none() {
        return None;
    }
    Some(EditorExifSignature { software, artist })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThumbnailDqt {
    pub tables: Option<QuantTableSet>,
    pub diagnostic: Option<String>,
}

/// Quantization tables of the embedded thumbnail. Failures are reported as a
/// diagnostic, never as an error.
pub fn extract_thumbnail_dqt(rec: &ExifRecord) -> ThumbnailDqt {
    let Some(thumb) = rec.thumbnail.as_deref() else {
        return ThumbnailDqt {
            tables: None,
            diagnostic: None,
        };
    };
    let parsed = segments::parse_segments(thumb).and_then(|list| segments::extract_dqt(&list));
    match parsed {
        Ok(mut set) => {
            set.source = TableSource::Thumbnail;
            ThumbnailDqt {
                tables: Some(set),
                diagnostic: None,
            }
        }
        Err(e) => ThumbnailDqt {
            tables: None,
            diagnostic: Some(format!("thumbnail unusable: {e}")),
        },
    }
}

//! Structural JPEG parsing.
//!
//! Walks the marker segments of a JPEG byte stream without decoding any scan
//! data. Entropy-coded data following an SOS segment is kept verbatim (byte
//! stuffing and restart markers intact) so the parsed list can be serialized
//! back to the exact input bytes.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use md5::{Digest, Md5};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SOI: u8 = 0xD8;
pub const EOI: u8 = 0xD9;
pub const SOS: u8 = 0xDA;
pub const DQT: u8 = 0xDB;
pub const DRI: u8 = 0xDD;
pub const DHT: u8 = 0xC4;
pub const SOF0: u8 = 0xC0;
pub const SOF2: u8 = 0xC2;
pub const COM: u8 = 0xFE;
pub const APP0: u8 = 0xE0;
pub const APP1: u8 = 0xE1;
pub const RST0: u8 = 0xD0;
pub const TEM: u8 = 0x01;

/// Natural (row-major) index of the coefficient at each zigzag position.
pub const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27,
    20, 13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58,
    59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SegmentError {
    #[error("stream too short ({0} bytes)")]
    TooShort(usize),
    #[error("stream does not start with SOI (0xFFD8)")]
    MissingSoi,
    #[error("segment at offset {offset} declares {declared} bytes but only {available} remain")]
    TruncatedSegment {
        offset: usize,
        declared: usize,
        available: usize,
    },
    #[error("segment at offset {offset} has invalid length field {length}")]
    BadLength { offset: usize, length: usize },
    #[error("expected a marker at offset {offset}, found 0x{found:02X}")]
    ExpectedMarker { offset: usize, found: u8 },
    #[error("no DQT segment found")]
    NoDqtFound,
    #[error("malformed DQT payload at offset {offset}: {reason}")]
    MalformedDqt { offset: usize, reason: &'static str },
    #[error("quantization table {table_id} contains a zero value")]
    ZeroQuantValue { table_id: u8 },
    #[error("no frame header (SOFn) found")]
    NoFrame,
    #[error("malformed frame header: {0}")]
    MalformedFrame(&'static str),
    #[error("unsupported coding process: {0}")]
    UnsupportedCoding(CodingProcess),
}

pub type Result<T, E = SegmentError> = std::result::Result<T, E>;

/// Marker classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MarkerKind {
    Soi,
    App(u8),
    Dqt,
    Sof0,
    Sof2,
    Dht,
    Sos,
    Dri,
    Rst(u8),
    Com,
    Eoi,
    Other(u8),
}

/// A two-byte marker `0xFFxx`. The low byte is never `0x00` or `0xFF`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Marker(u8);

impl Marker {
    pub fn from_low_byte(code: u8) -> Option<Marker> {
        match code {
            0x00 | 0xFF => None,
            c => Some(Marker(c)),
        }
    }

    pub fn from_code(code: u16) -> Option<Marker> {
        if code >> 8 != 0xFF {
            return None;
        }
        Marker::from_low_byte(code as u8)
    }

    pub fn low_byte(self) -> u8 {
        self.0
    }

    pub fn code(self) -> u16 {
        0xFF00 | self.0 as u16
    }

    pub fn kind(self) -> MarkerKind {
        match self.0 {
            SOI => MarkerKind::Soi,
            EOI => MarkerKind::Eoi,
            SOS => MarkerKind::Sos,
            DQT => MarkerKind::Dqt,
            DRI => MarkerKind::Dri,
            DHT => MarkerKind::Dht,
            SOF0 => MarkerKind::Sof0,
            SOF2 => MarkerKind::Sof2,
            COM => MarkerKind::Com,
            c @ 0xE0..=0xEF => MarkerKind::App(c - 0xE0),
            c @ 0xD0..=0xD7 => MarkerKind::Rst(c - 0xD0),
            c => MarkerKind::Other(c),
        }
    }

    /// Markers that are not followed by a length field.
    pub fn is_standalone(self) -> bool {
        matches!(self.0, SOI | EOI | TEM | 0xD0..=0xD7)
    }

    pub fn is_rst(self) -> bool {
        (0xD0..=0xD7).contains(&self.0)
    }
}

impl fmt::Debug for Marker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Marker(0xFF{:02X} {:?})", self.0, self.kind())
    }
}

impl fmt::Display for Marker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind() {
            MarkerKind::App(n) => write!(f, "APP{n}"),
            MarkerKind::Rst(n) => write!(f, "RST{n}"),
            MarkerKind::Other(c) => write!(f, "0xFF{c:02X}"),
            k => write!(f, "{}", format!("{k:?}").to_uppercase()),
        }
    }
}

/// One marker segment. Spans index into the parsed byte stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub marker: Marker,
    /// Offset of the `0xFF` byte introducing the marker.
    pub offset: usize,
    /// Payload span, excluding the two length bytes. Empty for standalone markers.
    pub payload: Range<usize>,
    /// Entropy-coded data following an SOS segment, up to the next
    /// non-stuffed, non-RST marker.
    pub entropy_data: Option<Range<usize>>,
    /// Offsets of restart markers found inside `entropy_data`.
    pub restart_markers: Vec<usize>,
    /// Number of `0xFF` fill bytes preceding the marker.
    pub fill: usize,
}

impl Segment {
    pub fn kind(&self) -> MarkerKind {
        self.marker.kind()
    }
}

/// Ordered segment view of a JPEG stream.
#[derive(Debug, Clone)]
pub struct JpegSegmentList<'a> {
    bytes: &'a [u8],
    pub segments: Vec<Segment>,
    /// Bytes after EOI, if any.
    pub trailer: Option<Range<usize>>,
    /// Set when the stream ended before an EOI marker.
    pub missing_eoi: bool,
}

impl<'a> JpegSegmentList<'a> {
    pub fn bytes(&self) -> &'a [u8] {
        self.bytes
    }

    pub fn payload(&self, seg: &Segment) -> &'a [u8] {
        &self.bytes[seg.payload.clone()]
    }

    pub fn entropy_data(&self, seg: &Segment) -> Option<&'a [u8]> {
        seg.entropy_data.clone().map(|r| &self.bytes[r])
    }

    pub fn trailer_bytes(&self) -> Option<&'a [u8]> {
        self.trailer.clone().map(|r| &self.bytes[r])
    }

    pub fn kinds(&self) -> Vec<MarkerKind> {
        self.segments.iter().map(Segment::kind).collect()
    }

    pub fn find(&self, kind: MarkerKind) -> impl Iterator<Item = &Segment> + '_ {
        self.segments.iter().filter(move |s| s.kind() == kind)
    }

    /// Payloads of APP1 segments carrying an Exif preamble.
    pub fn exif_payloads(&self) -> impl Iterator<Item = &'a [u8]> + '_ {
        self.find(MarkerKind::App(1))
            .map(|s| self.payload(s))
            .filter(|p| p.starts_with(crate::exif::EXIF_PREAMBLE))
    }

    /// Serializes the segments back into a byte stream.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.bytes.len());
        for seg in &self.segments {
            out.resize(out.len() + seg.fill, 0xFF);
            out.push(0xFF);
            out.push(seg.marker.low_byte());
            if !seg.marker.is_standalone() {
                let len = seg.payload.len() + 2;
                out.extend_from_slice(&(len as u16).to_be_bytes());
                out.extend_from_slice(self.payload(seg));
            }
            if let Some(data) = self.entropy_data(seg) {
                out.extend_from_slice(data);
            }
        }
        if let Some(t) = self.trailer_bytes() {
            out.extend_from_slice(t);
        }
        out
    }

    /// Parses the first SOFn segment.
    pub fn frame_header(&self) -> Result<FrameHeader> {
        let seg = self
            .segments
            .iter()
            .find(|s| is_sof(s.marker.low_byte()))
            .ok_or(SegmentError::NoFrame)?;
        FrameHeader::parse(seg.marker.low_byte(), self.payload(seg))
    }

    /// Restart interval from the last DRI segment, if present.
    pub fn restart_interval(&self) -> Option<u16> {
        self.find(MarkerKind::Dri)
            .last()
            .map(|s| self.payload(s))
            .filter(|p| p.len() >= 2)
            .map(|p| u16::from_be_bytes([p[0], p[1]]))
    }
}

/// True for frame-header markers (SOF0..SOF15 except DHT, JPG and DAC).
pub fn is_sof(code: u8) -> bool {
    matches!(code, 0xC0..=0xCF) && !matches!(code, DHT | 0xC8 | 0xCC)
}

/// Parses a JPEG byte stream into its marker segments.
pub fn parse_segments(bytes: &[u8]) -> Result<JpegSegmentList<'_>> {
    if bytes.len() < 4 {
        return Err(SegmentError::TooShort(bytes.len()));
    }
    if bytes[0] != 0xFF || bytes[1] != SOI {
        return Err(SegmentError::MissingSoi);
    }
    let mut list = JpegSegmentList {
        bytes,
        segments: vec![Segment {
            marker: Marker(SOI),
            offset: 0,
            payload: 2..2,
            entropy_data: None,
            restart_markers: Vec::new(),
            fill: 0,
        }],
        trailer: None,
        missing_eoi: false,
    };
    let mut pos = 2;
    loop {
        let fill_start = pos;
        while pos + 1 < bytes.len() && bytes[pos] == 0xFF && bytes[pos + 1] == 0xFF {
            pos += 1;
        }
        let fill = pos - fill_start;
        if pos >= bytes.len() {
            list.missing_eoi = true;
            return Ok(list);
        }
        if bytes[pos] != 0xFF {
            return Err(SegmentError::ExpectedMarker {
                offset: pos,
                found: bytes[pos],
            });
        }
        if pos + 1 >= bytes.len() {
            list.missing_eoi = true;
            return Ok(list);
        }
        let code = bytes[pos + 1];
        let marker = Marker::from_low_byte(code).ok_or(SegmentError::ExpectedMarker {
            offset: pos + 1,
            found: code,
        })?;
        let offset = pos;
        pos += 2;

        if marker.is_standalone() {
            list.segments.push(Segment {
                marker,
                offset,
                payload: pos..pos,
                entropy_data: None,
                restart_markers: Vec::new(),
                fill,
            });
            if code == EOI {
                if pos < bytes.len() {
                    list.trailer = Some(pos..bytes.len());
                }
                return Ok(list);
            }
            continue;
        }

        if pos + 2 > bytes.len() {
            return Err(SegmentError::TruncatedSegment {
                offset,
                declared: 2,
                available: bytes.len() - pos,
            });
        }
        let length = u16::from_be_bytes([bytes[pos], bytes[pos + 1]]) as usize;
        if length < 2 {
            return Err(SegmentError::BadLength { offset, length });
        }
        if pos + length > bytes.len() {
            return Err(SegmentError::TruncatedSegment {
                offset,
                declared: length,
                available: bytes.len() - pos,
            });
        }
        let payload = pos + 2..pos + length;
        pos += length;

        let mut segment = Segment {
            marker,
            offset,
            payload,
            entropy_data: None,
            restart_markers: Vec::new(),
            fill,
        };
        if code == SOS {
            let (end, rst) = scan_entropy(bytes, pos);
            segment.entropy_data = Some(pos..end);
            segment.restart_markers = rst;
            pos = end;
        }
        list.segments.push(segment);
    }
}

/// Returns the end of the entropy-coded run starting at `start` and the
/// restart markers inside it. The run ends at the `0xFF` (or first fill
/// `0xFF`) of the next real marker, or at end of input.
fn scan_entropy(bytes: &[u8], start: usize) -> (usize, Vec<usize>) {
    let mut rst = Vec::new();
    let mut i = start;
    while i < bytes.len() {
        if bytes[i] != 0xFF {
            i += 1;
            continue;
        }
        // Collapse fill bytes: the marker code follows the last 0xFF in a run.
        let mut j = i + 1;
        while j < bytes.len() && bytes[j] == 0xFF {
            j += 1;
        }
        if j >= bytes.len() {
            return (bytes.len(), rst);
        }
        match bytes[j] {
            0x00 => i = j + 1,
            0xD0..=0xD7 => {
                rst.push(j - 1);
                i = j + 1;
            }
            _ => return (j - 1, rst),
        }
    }
    (bytes.len(), rst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Precision {
    Bits8,
    Bits16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantTable {
    pub table_id: u8,
    pub precision: Precision,
    /// Values in zigzag (transmission) order.
    #[serde(with = "table64")]
    pub values_zigzag: [u16; 64],
}

mod table64 {
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u16; 64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u16; 64], D::Error> {
        let v = Vec::<u16>::deserialize(d)?;
        v.try_into()
            .map_err(|v: Vec<u16>| D::Error::invalid_length(v.len(), &"64 values"))
    }
}

impl QuantTable {
    pub fn from_zigzag(table_id: u8, precision: Precision, values_zigzag: [u16; 64]) -> Self {
        QuantTable {
            table_id,
            precision,
            values_zigzag,
        }
    }

    pub fn from_natural(table_id: u8, precision: Precision, natural: &[u16; 64]) -> Self {
        QuantTable {
            table_id,
            precision,
            values_zigzag: to_zigzag(natural),
        }
    }

    /// Values in row-major natural order.
    pub fn values_natural(&self) -> [u16; 64] {
        from_zigzag(&self.values_zigzag)
    }
}

pub fn from_zigzag<T: Copy + Default>(zz: &[T; 64]) -> [T; 64] {
    let mut out = [T::default(); 64];
    for (k, &n) in ZIGZAG.iter().enumerate() {
        out[n] = zz[k];
    }
    out
}

pub fn to_zigzag<T: Copy + Default>(natural: &[T; 64]) -> [T; 64] {
    let mut out = [T::default(); 64];
    for (k, &n) in ZIGZAG.iter().enumerate() {
        out[k] = natural[n];
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TableSource {
    MainImage,
    Thumbnail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantTableSet {
    pub tables: BTreeMap<u8, QuantTable>,
    pub source: TableSource,
}

impl QuantTableSet {
    pub fn new(source: TableSource) -> Self {
        QuantTableSet {
            tables: BTreeMap::new(),
            source,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn get(&self, id: u8) -> Option<&QuantTable> {
        self.tables.get(&id)
    }

    pub fn insert(&mut self, table: QuantTable) {
        self.tables.insert(table.table_id, table);
    }
}

/// Parses the tables carried by one DQT payload, in order of appearance.
pub fn parse_dqt_payload(payload: &[u8], offset: usize) -> Result<Vec<QuantTable>> {
    let mut tables = Vec::new();
    let mut pos = 0;
    if payload.is_empty() {
        return Err(SegmentError::MalformedDqt {
            offset,
            reason: "empty payload",
        });
    }
    while pos < payload.len() {
        let pq = payload[pos] >> 4;
        let id = payload[pos] & 0x0F;
        pos += 1;
        if id > 3 {
            return Err(SegmentError::MalformedDqt {
                offset,
                reason: "table id above 3",
            });
        }
        let (precision, width) = match pq {
            0 => (Precision::Bits8, 1),
            1 => (Precision::Bits16, 2),
            _ => {
                return Err(SegmentError::MalformedDqt {
                    offset,
                    reason: "precision nibble not 0 or 1",
                })
            }
        };
        if pos + 64 * width > payload.len() {
            return Err(SegmentError::MalformedDqt {
                offset,
                reason: "payload length not a whole number of table records",
            });
        }
        let mut values = [0u16; 64];
        for (k, v) in values.iter_mut().enumerate() {
            *v = if width == 1 {
                payload[pos + k] as u16
            } else {
                u16::from_be_bytes([payload[pos + 2 * k], payload[pos + 2 * k + 1]])
            };
        }
        pos += 64 * width;
        if values.contains(&0) {
            return Err(SegmentError::ZeroQuantValue { table_id: id });
        }
        tables.push(QuantTable::from_zigzag(id, precision, values));
    }
    Ok(tables)
}

/// Collects every quantization table defined in the stream. Later
/// definitions of the same id replace earlier ones.
pub fn extract_dqt(list: &JpegSegmentList<'_>) -> Result<QuantTableSet> {
    let mut set = QuantTableSet::new(TableSource::MainImage);
    let mut seen = false;
    for seg in list.find(MarkerKind::Dqt) {
        seen = true;
        for t in parse_dqt_payload(list.payload(seg), seg.offset)? {
            set.insert(t);
        }
    }
    if !seen {
        return Err(SegmentError::NoDqtFound);
    }
    Ok(set)
}

/// Lowercase hex MD5 over the canonical table serialization.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DqtFingerprint(String);

impl DqtFingerprint {
    /// Accepts exactly 32 lowercase hex characters.
    pub fn parse(s: &str) -> Option<DqtFingerprint> {
        let ok = s.len() == 32 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'));
        ok.then(|| DqtFingerprint(s.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DqtFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Canonical byte form hashed by [`dqt_fingerprint`]: for each table in
/// ascending id order, the id byte followed by the 64 zigzag-ordered values
/// (one byte each for 8-bit tables, two big-endian bytes for 16-bit tables).
pub fn canonical_dqt_bytes(qts: &QuantTableSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(qts.tables.len() * 129);
    for (id, table) in &qts.tables {
        out.push(*id);
        for &v in &table.values_zigzag {
            match table.precision {
                Precision::Bits8 => out.push(v as u8),
                Precision::Bits16 => out.extend_from_slice(&v.to_be_bytes()),
            }
        }
    }
    out
}

/// Returns `None` for an empty table set.
pub fn dqt_fingerprint(qts: &QuantTableSet) -> Option<DqtFingerprint> {
    if qts.is_empty() {
        return None;
    }
    let digest = Md5::digest(canonical_dqt_bytes(qts));
    let hex = digest.iter().map(|b| format!("{b:02x}")).collect();
    Some(DqtFingerprint(hex))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CodingProcess {
    Baseline,
    ExtendedSequential,
    Progressive,
    Lossless,
    Hierarchical,
    Arithmetic,
}

impl fmt::Display for CodingProcess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CodingProcess::Baseline => "baseline sequential",
            CodingProcess::ExtendedSequential => "extended sequential",
            CodingProcess::Progressive => "progressive",
            CodingProcess::Lossless => "lossless",
            CodingProcess::Hierarchical => "hierarchical",
            CodingProcess::Arithmetic => "arithmetic-coded",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameComponent {
    pub id: u8,
    pub h: u8,
    pub v: u8,
    pub quant_table: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameHeader {
    pub marker: u8,
    pub coding: CodingProcess,
    pub precision: u8,
    pub width: u16,
    pub height: u16,
    pub components: Vec<FrameComponent>,
}

impl FrameHeader {
    pub fn parse(marker: u8, p: &[u8]) -> Result<FrameHeader> {
        let coding = match marker {
            0xC0 => CodingProcess::Baseline,
            0xC1 => CodingProcess::ExtendedSequential,
            0xC2 => CodingProcess::Progressive,
            0xC3 => CodingProcess::Lossless,
            0xC5..=0xC7 => CodingProcess::Hierarchical,
            _ => CodingProcess::Arithmetic,
        };
        if p.len() < 6 {
            return Err(SegmentError::MalformedFrame("header shorter than 6 bytes"));
        }
        let n = p[5] as usize;
        if n == 0 || p.len() < 6 + 3 * n {
            return Err(SegmentError::MalformedFrame("component count inconsistent with length"));
        }
        let components = (0..n)
            .map(|i| {
                let c = &p[6 + 3 * i..9 + 3 * i];
                FrameComponent {
                    id: c[0],
                    h: c[1] >> 4,
                    v: c[1] & 0x0F,
                    quant_table: c[2],
                }
            })
            .collect();
        Ok(FrameHeader {
            marker,
            coding,
            precision: p[0],
            height: u16::from_be_bytes([p[1], p[2]]),
            width: u16::from_be_bytes([p[3], p[4]]),
            components,
        })
    }
}

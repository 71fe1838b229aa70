//! Deterministic synthetic inputs: Exif blocks, JPEG variants, test images.
//!
//! Used by the test suites and the fixture generator example. Everything here
//! is seeded so outputs are stable across runs and platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::{encode, encode_with_tables, CodecError, EncodeParams, PixelImage};
use crate::exif::{ByteOrder, TAG_JPEG_LENGTH, TAG_JPEG_OFFSET};
use crate::segments::{parse_segments, MarkerKind, APP1, COM, SOF2};

#[derive(Debug, Clone)]
enum Value {
    Ascii(Vec<u8>),
    Short(u16),
    Long(u32),
}

/// Minimal Exif writer: IFD0 entries plus an optional IFD1 thumbnail.
#[derive(Debug, Clone)]
pub struct ExifWriter {
    order: ByteOrder,
    entries: Vec<(u16, Value)>,
    thumbnail: Option<Vec<u8>>,
}

impl ExifWriter {
    pub fn new(order: ByteOrder) -> ExifWriter {
        ExifWriter {
            order,
            entries: Vec::new(),
            thumbnail: None,
        }
    }

    pub fn ascii(mut self, tag: u16, s: &str) -> Self {
        let mut v = s.as_bytes().to_vec();
        v.push(0);
        self.entries.push((tag, Value::Ascii(v)));
        self
    }

    pub fn short(mut self, tag: u16, v: u16) -> Self {
        self.entries.push((tag, Value::Short(v)));
        self
    }

    pub fn long(mut self, tag: u16, v: u32) -> Self {
        self.entries.push((tag, Value::Long(v)));
        self
    }

    pub fn thumbnail(mut self, jpeg: Vec<u8>) -> Self {
        self.thumbnail = Some(jpeg);
        self
    }

    fn u16(&self, v: u16) -> [u8; 2] {
        match self.order {
            ByteOrder::BigEndian => v.to_be_bytes(),
            ByteOrder::LittleEndian => v.to_le_bytes(),
        }
    }

    fn u32(&self, v: u32) -> [u8; 4] {
        match self.order {
            ByteOrder::BigEndian => v.to_be_bytes(),
            ByteOrder::LittleEndian => v.to_le_bytes(),
        }
    }

    fn write_ifd(&self, out: &mut Vec<u8>, entries: &[(u16, Value)], next_ifd: u32) {
        let start = out.len();
        let mut data_at = start + 2 + 12 * entries.len() + 4;
        let mut data = Vec::new();
        out.extend(self.u16(entries.len() as u16));
        for (tag, value) in entries {
            out.extend(self.u16(*tag));
            match value {
                Value::Short(v) => {
                    out.extend(self.u16(3));
                    out.extend(self.u32(1));
                    out.extend(self.u16(*v));
                    out.extend([0, 0]);
                }
                Value::Long(v) => {
                    out.extend(self.u16(4));
                    out.extend(self.u32(1));
                    out.extend(self.u32(*v));
                }
                Value::Ascii(bytes) => {
                    out.extend(self.u16(2));
                    out.extend(self.u32(bytes.len() as u32));
                    if bytes.len() <= 4 {
                        let mut inline = bytes.clone();
                        inline.resize(4, 0);
                        out.extend(inline);
                    } else {
                        out.extend(self.u32(data_at as u32));
                        data.extend_from_slice(bytes);
                        if bytes.len() % 2 == 1 {
                            data.push(0);
                        }
                        data_at = start + 2 + 12 * entries.len() + 4 + data.len();
                    }
                }
            }
        }
        out.extend(self.u32(next_ifd));
        out.extend(data);
    }

    fn ifd_len(entries: &[(u16, Value)]) -> usize {
        let data: usize = entries
            .iter()
            .map(|(_, v)| match v {
                Value::Ascii(b) if b.len() > 4 => b.len() + b.len() % 2,
                _ => 0,
            })
            .sum();
        2 + 12 * entries.len() + 4 + data
    }

    /// Full APP1 payload, starting with the `Exif\0\0` preamble.
    pub fn build(&self) -> Vec<u8> {
        let mut entries = self.entries.clone();
        entries.sort_by_key(|(t, _)| *t);
        let mut tiff = Vec::new();
        tiff.extend(match self.order {
            ByteOrder::BigEndian => *b"MM",
            ByteOrder::LittleEndian => *b"II",
        });
        tiff.extend(self.u16(42));
        tiff.extend(self.u32(8));
        let ifd1_at = 8 + Self::ifd_len(&entries);
        let next = if self.thumbnail.is_some() { ifd1_at as u32 } else { 0 };
        self.write_ifd(&mut tiff, &entries, next);
        if let Some(thumb) = &self.thumbnail {
            let ifd1 = vec![
                (0x0103, Value::Short(6)),
                (TAG_JPEG_OFFSET, Value::Long(0)),
                (TAG_JPEG_LENGTH, Value::Long(thumb.len() as u32)),
            ];
            let thumb_at = ifd1_at + Self::ifd_len(&ifd1);
            let ifd1 = vec![
                (0x0103, Value::Short(6)),
                (TAG_JPEG_OFFSET, Value::Long(thumb_at as u32)),
                (TAG_JPEG_LENGTH, Value::Long(thumb.len() as u32)),
            ];
            self.write_ifd(&mut tiff, &ifd1, 0);
            tiff.extend_from_slice(thumb);
        }
        let mut out = crate::exif::EXIF_PREAMBLE.to_vec();
        out.extend(tiff);
        out
    }
}

/// Inserts a marker segment directly after APP0 (or SOI when there is none).
pub fn insert_segment(jpeg: &[u8], marker: u8, payload: &[u8]) -> Vec<u8> {
    let at = parse_segments(jpeg)
        .ok()
        .and_then(|l| {
            l.segments
                .iter()
                .find(|s| s.kind() == MarkerKind::App(0))
                .map(|s| s.payload.end)
        })
        .unwrap_or(2);
    let mut out = jpeg[..at].to_vec();
    out.extend([0xFF, marker]);
    out.extend(((payload.len() + 2) as u16).to_be_bytes());
    out.extend_from_slice(payload);
    out.extend_from_slice(&jpeg[at..]);
    out
}

pub fn with_exif(jpeg: &[u8], exif: &ExifWriter) -> Vec<u8> {
    insert_segment(jpeg, APP1, &exif.build())
}

pub fn with_comment(jpeg: &[u8], text: &str) -> Vec<u8> {
    insert_segment(jpeg, COM, text.as_bytes())
}

/// Relabels the frame as progressive without touching the scan data. Enough
/// to exercise "detect but do not decode" paths.
pub fn mark_progressive(jpeg: &[u8]) -> Vec<u8> {
    let mut out = jpeg.to_vec();
    if let Ok(list) = parse_segments(jpeg) {
        if let Some(s) = list.find(MarkerKind::Sof0).next() {
            out[s.offset + 1] = SOF2;
        }
    }
    out
}

/// Smooth colour field with mild seeded texture.
pub fn smooth_image(width: usize, height: usize, seed: u64) -> PixelImage {
    textured_image(width, height, seed, 3)
}

/// Sinusoidal colour field plus uniform per-pixel noise of +-`noise`.
pub fn textured_image(width: usize, height: usize, seed: u64, noise: i16) -> PixelImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase: [f64; 3] = [rng.gen_range(0.0..6.28), rng.gen_range(0.0..6.28), rng.gen_range(0.0..6.28)];
    let freq: f64 = rng.gen_range(0.02..0.06);
    let noise: Vec<[i16; 3]> = (0..width * height)
        .map(|_| [rng.gen_range(-noise..=noise), rng.gen_range(-noise..=noise), rng.gen_range(-noise..=noise)])
        .collect();
    PixelImage::from_rgb_fn(width, height, |x, y| {
        let t = (x as f64 + 0.7 * y as f64) * freq;
        let n = noise[y * width + x];
        let mut p = [0u8; 3];
        for c in 0..3 {
            let v = 128.0 + 80.0 * (t + phase[c]).sin() + n[c] as f64;
            p[c] = v.round().clamp(0.0, 255.0) as u8;
        }
        p
    })
}

/// Uniform-noise image; every pixel independent.
pub fn noise_image(width: usize, height: usize, seed: u64) -> PixelImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let px: Vec<[u8; 3]> = (0..width * height).map(|_| rng.gen()).collect();
    PixelImage::from_rgb_fn(width, height, |x, y| px[y * width + x])
}

/// Encodes `smooth_image` at `quality` with Annex K tables.
pub fn jpeg_fixture(width: usize, height: usize, seed: u64, quality: u8) -> Vec<u8> {
    encode(&smooth_image(width, height, seed), &EncodeParams::quality(quality)).expect("fixture encode")
}

/// Encodes with custom tables derived from `seed`, so each synthetic editor
/// gets its own DQT fingerprint.
pub fn editor_jpeg_fixture(width: usize, height: usize, image_seed: u64, table_seed: u64) -> Result<Vec<u8>, CodecError> {
    let (l, c) = editor_tables(table_seed);
    encode_with_tables(&smooth_image(width, height, image_seed), &EncodeParams::default(), &l, &c)
}

/// Annex K tables at a seed-chosen quality, with one seed-chosen perturbation.
pub fn editor_tables(seed: u64) -> ([u16; 64], [u16; 64]) {
    use crate::codec::tables::{scaled_table, ANNEX_K_CHROMINANCE, ANNEX_K_LUMINANCE};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = rng.gen_range(60..=95);
    let mut l = scaled_table(&ANNEX_K_LUMINANCE, q);
    let c = scaled_table(&ANNEX_K_CHROMINANCE, q);
    let k = rng.gen_range(1..64);
    l[k] = (l[k] + 1 + (seed % 7) as u16).min(255);
    (l, c)
}

/// 64 ones: the identity quantizer.
pub const IDENTITY_TABLE: [u16; 64] = [1; 64];

/// A small JPEG thumbnail encoded with identity tables.
pub fn identity_thumbnail() -> Vec<u8> {
    encode_with_tables(&smooth_image(16, 16, 7), &EncodeParams::default(), &IDENTITY_TABLE, &IDENTITY_TABLE)
        .expect("thumbnail encode")
}

/// Quality of the re-saved background in the splice suite; ELA on these
/// fixtures runs at the same quality.
pub const SPLICE_RESAVE_QUALITY: u8 = 70;

#[derive(Debug, Clone)]
pub struct SpliceFixture {
    pub name: String,
    pub image: PixelImage,
    /// True inside the pasted rectangle (or where it would be, for controls).
    pub mask: Vec<bool>,
    pub spliced: bool,
}

/// Quality of the final save that every splice-suite image goes through.
pub const SPLICE_FINAL_QUALITY: u8 = 95;

fn final_save(img: &PixelImage) -> PixelImage {
    let bytes = encode(img, &EncodeParams::quality(SPLICE_FINAL_QUALITY)).expect("splice encode");
    crate::codec::decode(&bytes).expect("splice decode")
}

/// Pasted rectangles: (x, y, w, h) on a 96x80 canvas.
const SPLICE_REGIONS: [(usize, usize, usize, usize); 6] = [
    (16, 16, 32, 24),
    (40, 8, 24, 40),
    (5, 37, 29, 21),
    (60, 44, 30, 30),
    (24, 24, 48, 32),
    (3, 3, 17, 13),
];

/// Uncompressed content pasted into a background that was saved once at
/// [`SPLICE_RESAVE_QUALITY`], then the composite saved at
/// [`SPLICE_FINAL_QUALITY`]. Each fixture has an unspliced control.
pub fn splice_suite() -> Vec<SpliceFixture> {
    let (w, h) = (96, 80);
    let mut out = Vec::new();
    for (i, &(rx, ry, rw, rh)) in SPLICE_REGIONS.iter().enumerate() {
        let seed = 100 + i as u64;
        let background = textured_image(w, h, seed, 12);
        let resaved = crate::codec::decode(
            &encode(&background, &EncodeParams::quality(SPLICE_RESAVE_QUALITY)).expect("splice encode"),
        )
        .expect("splice decode");
        let donor = textured_image(w, h, seed + 1000, 12);
        let inside = |x: usize, y: usize| x >= rx && x < rx + rw && y >= ry && y < ry + rh;
        let mask: Vec<bool> = (0..w * h).map(|i| inside(i % w, i / w)).collect();
        let spliced = PixelImage::from_rgb_fn(w, h, |x, y| {
            if inside(x, y) {
                donor.rgb_at(x, y)
            } else {
                resaved.rgb_at(x, y)
            }
        });
        out.push(SpliceFixture {
            name: format!("splice-{i}"),
            image: final_save(&spliced),
            mask: mask.clone(),
            spliced: true,
        });
        out.push(SpliceFixture {
            name: format!("control-{i}"),
            image: final_save(&resaved),
            mask,
            spliced: false,
        });
    }
    out
}

/// Files of the synthetic Android extraction, as (relative path, bytes).
/// The expected scan results live in the committed manifest next to the
/// generated tree.
pub fn extraction_files() -> Vec<(String, Vec<u8>)> {
    let meitu_ext = "storage/emulated/0/Android/data/com.mt.mtxx.mtxx";
    let meitu_cache = "data/data/com.mt.mtxx.mtxx/cache/image_manager_disk_cache";
    let gallery = jpeg_fixture(48, 32, 21, 92);
    let edited = with_exif(
        &jpeg_fixture(48, 32, 22, 90),
        &ExifWriter::new(ByteOrder::LittleEndian).ascii(crate::exif::TAG_SOFTWARE, "Meitu"),
    );
    let mask: Vec<u8> = (0..32 * 24).map(|i| if (8..20).contains(&(i % 32)) && (6..18).contains(&(i / 32)) { 255 } else { 0 }).collect();
    let inshot_log = concat!(
        "{\"image\":\"cutout_20230401_123005.png\",\"startTime\":1680352205123,\"saveTime\":1680352262000}\n",
        "{\"image\":\"cutout_20230402_090000.png\",\"startTime\":1680426000000,\"saveTime\":1680426075500}\n",
    );
    vec![
        (format!("{meitu_cache}/8213.0"), gallery.clone()),
        (format!("{meitu_cache}/journal"), b"libcore.io.DiskLruCache\n1\n100\n1\n\nCLEAN 8213 1804\n".to_vec()),
        (format!("{meitu_ext}/files/save/MTXX_MH20230401_123456.jpg"), edited),
        (
            "storage/emulated/0/Android/data/snapedit.app.remove/files/mask/mask_1680352205.png".into(),
            crate::analysis::png::write_gray8(32, 24, &mask),
        ),
        (
            "storage/emulated/0/Android/data/snapedit.app.remove/files/mask/readme.txt".into(),
            b"not a mask\n".to_vec(),
        ),
        (
            "data/data/com.sec.android.mimage.photoretouching/shared_prefs/prefs.xml".into(),
            b"<map />\n".to_vec(),
        ),
        ("data/sec/photoeditor/0/storage/emulated/0/DCIM/Camera/20230401_120000.jpg".into(), gallery),
        (
            "data/data/photoeditor.cutout.backgrounderaser/files/log/save.log".into(),
            inshot_log.as_bytes().to_vec(),
        ),
        ("data/data/com.adobe.psmobile/shared_prefs/prefs.xml".into(), b"<map />\n".to_vec()),
        ("data/media/0/DCIM/Camera/unrelated.txt".into(), b"outside every package\n".to_vec()),
    ]
}

/// Writes [`extraction_files`] below `root`.
pub fn write_extraction_tree(root: &std::path::Path) -> std::io::Result<()> {
    for (rel, bytes) in extraction_files() {
        let path = root.join(&rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, bytes)?;
    }
    Ok(())
}

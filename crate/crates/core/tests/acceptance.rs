//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use chrono::{DateTime, NaiveDateTime, TimeZone, Timelike, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use manipscan::analysis::{ela, median_row_then_column, pca_eigen, verdict_from_heatmap};
use manipscan::codec::dct::{fdct_block, idct_block};
use manipscan::codec::{decode, encode, psnr, EncodeParams, PixelImage, Subsampling};
use manipscan::datefmt::Resolution;
use manipscan::exif::{parse_exif, ByteOrder, TAG_ARTIST, TAG_SOFTWARE};
use manipscan::filename::FilenameMatcher;
use manipscan::fixtures::{
    editor_jpeg_fixture, insert_segment, jpeg_fixture, mark_progressive, splice_suite, with_comment, with_exif,
    ExifWriter, SPLICE_RESAVE_QUALITY,
};
use manipscan::pipeline::{analyze_bytes, AnalyzeOptions, ImageVerdict};
use manipscan::refdb::{EditorLabel, ReferenceDb};
use manipscan::scanner::{build_extraction_report, tree_digest};
use manipscan::segments::{dqt_fingerprint, extract_dqt, parse_segments, Marker, MarkerKind, Precision};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn expected_kind(low: u8) -> MarkerKind {
    match low {
        0xD8 => MarkerKind::Soi,
        0xD9 => MarkerKind::Eoi,
        0xDA => MarkerKind::Sos,
        0xDB => MarkerKind::Dqt,
        0xDD => MarkerKind::Dri,
        0xC0 => MarkerKind::Sof0,
        0xC2 => MarkerKind::Sof2,
        0xC4 => MarkerKind::Dht,
        0xFE => MarkerKind::Com,
        0xD0..=0xD7 => MarkerKind::Rst(low & 0x0F),
        0xE0..=0xEF => MarkerKind::App(low & 0x0F),
        c => MarkerKind::Other(c),
    }
}

fn markers() -> Outcome {
    let start = Instant::now();
    for low in 0x01..=0xFEu8 {
        let m = Marker::from_low_byte(low).ok_or(format!("0x{low:02X} rejected"))?;
        ensure(m.kind() == expected_kind(low), || format!("0xFF{low:02X} -> {:?}", m.kind()))?;
        let c = Marker::from_code(0xFF00 | low as u16).ok_or(format!("0xFF{low:02X} rejected"))?;
        ensure(c == m && c.code() == 0xFF00 | low as u16, || format!("0xFF{low:02X} code mismatch"))?;
    }
    ensure(Marker::from_low_byte(0x00).is_none() && Marker::from_low_byte(0xFF).is_none(), || {
        "0x00/0xFF accepted".into()
    })?;

    let img = manipscan::fixtures::smooth_image(64, 48, 3);
    let base = encode(&img, &EncodeParams::quality(80).with_restart_interval(1)).map_err(|e| e.to_string())?;
    let exif = ExifWriter::new(ByteOrder::BigEndian).ascii(TAG_SOFTWARE, "Snapseed 2.0");
    let mut bytes = with_comment(&with_exif(&base, &exif), "fixture");
    for n in (2..=15u8).rev() {
        bytes = insert_segment(&bytes, 0xE0 + n, &[n; 4]);
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut rst = std::collections::BTreeSet::new();
    for stream in [bytes.clone(), mark_progressive(&bytes)] {
        let list = parse_segments(&stream).map_err(|e| e.to_string())?;
        for s in &list.segments {
            let low = stream[s.offset + 1];
            ensure(s.kind() == expected_kind(low), || format!("segment 0xFF{low:02X} -> {:?}", s.kind()))?;
            seen.insert(format!("{:?}", s.kind()));
            for &off in &s.restart_markers {
                let m = Marker::from_low_byte(stream[off + 1]).unwrap();
                ensure(m.kind() == expected_kind(stream[off + 1]), || "restart marker kind".into())?;
                rst.insert(format!("{:?}", m.kind()));
            }
        }
        ensure(list.to_bytes() == stream, || "re-serialization differs".into())?;
    }
    let mut want: Vec<String> = ["Soi", "Dqt", "Sof0", "Sof2", "Dht", "Sos", "Dri", "Com", "Eoi"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    want.extend((0..16).map(|n| format!("App({n})")));
    for w in &want {
        ensure(seen.contains(w), || format!("fixture lacks {w}"))?;
    }
    ensure(rst.len() == 8, || format!("restart markers seen: {rst:?}"))?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("{} kinds plus RST0-7, byte-identical, {elapsed:.2?}", want.len()))
}

fn dqt_segment(tables: &[(u8, [u16; 64])]) -> Vec<u8> {
    let mut payload = Vec::new();
    for (id, zz) in tables {
        payload.push(*id);
        payload.extend(zz.iter().map(|&v| v as u8));
    }
    let mut out = vec![0xFF, 0xDB];
    out.extend(((payload.len() + 2) as u16).to_be_bytes());
    out.extend(payload);
    out
}

fn stream_of(segments: &[Vec<u8>]) -> Vec<u8> {
    let mut out = vec![0xFF, 0xD8];
    for s in segments {
        out.extend_from_slice(s);
    }
    out.extend([0xFF, 0xD9]);
    out
}

fn fingerprint_of(bytes: &[u8]) -> Result<String, String> {
    let list = parse_segments(bytes).map_err(|e| e.to_string())?;
    let set = extract_dqt(&list).map_err(|e| e.to_string())?;
    Ok(dqt_fingerprint(&set).ok_or("empty table set")?.to_string())
}

fn dqt_determinism() -> Outcome {
    let source = jpeg_fixture(32, 32, 5, 75);
    let list = parse_segments(&source).map_err(|e| e.to_string())?;
    let set = extract_dqt(&list).map_err(|e| e.to_string())?;
    let t: Vec<(u8, [u16; 64])> = set.tables.values().map(|t| (t.table_id, t.values_zigzag)).collect();
    ensure(t.len() == 2 && set.tables.values().all(|t| t.precision == Precision::Bits8), || {
        "fixture should carry two 8-bit tables".into()
    })?;
    let variants = [
        stream_of(&[dqt_segment(&[t[0], t[1]])]),
        stream_of(&[dqt_segment(&[t[1], t[0]])]),
        stream_of(&[dqt_segment(&[t[0]]), dqt_segment(&[t[1]])]),
        stream_of(&[dqt_segment(&[t[1]]), dqt_segment(&[t[0]])]),
        source.clone(),
    ];
    let fps: Vec<String> = variants.iter().map(|v| fingerprint_of(v)).collect::<Result<_, _>>()?;
    ensure(fps.iter().all(|f| f == &fps[0]), || format!("fingerprints differ: {fps:?}"))?;
    let ones = fingerprint_of(&stream_of(&[dqt_segment(&[(0, [1; 64])])]))?;
    ensure(ones == "bbd2dbcfe20b59e981e9a42cd1eb6ece", || format!("all-ones digest {ones}"))?;
    Ok(format!("{} orderings agree on {}; all-ones {ones}", variants.len(), fps[0]))
}

fn exif_signatures() -> Outcome {
    let cases: [&[(u16, &str)]; 4] = [
        &[(TAG_SOFTWARE, "Snapseed 2.0")],
        &[(TAG_ARTIST, "Meitu"), (TAG_SOFTWARE, "Meitu 9755")],
        &[(TAG_SOFTWARE, "AdvaSoft TouchRetouch")],
        &[(TAG_SOFTWARE, "Adobe Photoshop Express (Android)")],
    ];
    let base = jpeg_fixture(24, 16, 9, 90);
    let mut checked = 0;
    for order in [ByteOrder::BigEndian, ByteOrder::LittleEndian] {
        for tags in cases {
            let w = tags.iter().fold(ExifWriter::new(order), |w, (tag, s)| w.ascii(*tag, s));
            let jpeg = with_exif(&base, &w);
            let list = parse_segments(&jpeg).map_err(|e| e.to_string())?;
            let payload = list.exif_payloads().next().ok_or("no APP1")?;
            let rec = parse_exif(payload).map_err(|e| e.to_string())?;
            ensure(rec.byte_order == order, || format!("byte order {:?}", rec.byte_order))?;
            for (tag, s) in tags.iter() {
                ensure(rec.ascii(*tag) == Some(*s), || format!("{order:?} 0x{tag:04x}: {:?}", rec.ascii(*tag)))?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} tag values verbatim across both byte orders"))
}

fn random_datetime(rng: &mut ChaCha8Rng, resolution: Resolution) -> NaiveDateTime {
    let lo = Utc.with_ymd_and_hms(2001, 9, 10, 0, 0, 0).unwrap().timestamp_millis();
    let hi = Utc.with_ymd_and_hms(2099, 12, 31, 23, 59, 59).unwrap().timestamp_millis();
    let dt = DateTime::from_timestamp_millis(rng.gen_range(lo..hi)).unwrap().naive_utc();
    match resolution {
        Resolution::Millisecond => dt,
        Resolution::Second => dt.with_nanosecond(0).unwrap(),
        Resolution::Day => dt.date().and_hms_opt(0, 0, 0).unwrap(),
    }
}

fn filename_roundtrip() -> Outcome {
    let matcher = FilenameMatcher::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut patterns = 0;
    for p in matcher.patterns() {
        patterns += 1;
        for i in 0..100 {
            let spec = p.datetime_spec();
            let when = random_datetime(&mut rng, spec.map_or(Resolution::Millisecond, |s| s.resolution()));
            let original = format!("IMG_{:04}", rng.gen_range(0..10_000));
            let name = p.instantiate(&when, &original, rng.gen_range(0..1_000_000));
            let matches = matcher.match_filename(&name);
            let m = matches
                .iter()
                .find(|m| m.pattern_name == p.name)
                .ok_or_else(|| format!("{}: {name:?} not matched (case {i})", p.name))?;
            ensure(m.editor_name == p.editor_name, || format!("{name}: editor {}", m.editor_name))?;
            let want = spec.map(|_| when);
            ensure(m.extracted_datetime == want, || {
                format!("{name}: datetime {:?}, expected {want:?}", m.extracted_datetime)
            })?;
        }
    }
    Ok(format!("{patterns} grammars x 100 random instantiations"))
}

fn dct_oracle(f: &[f64; 64]) -> [f64; 64] {
    let c = |k: usize| if k == 0 { 1.0 / 2f64.sqrt() } else { 1.0 };
    let pi = std::f64::consts::PI;
    let mut out = [0.0; 64];
    for v in 0..8 {
        for u in 0..8 {
            let mut s = 0.0;
            for y in 0..8 {
                for x in 0..8 {
                    s += f[y * 8 + x]
                        * (((2 * x + 1) * u) as f64 * pi / 16.0).cos()
                        * (((2 * y + 1) * v) as f64 * pi / 16.0).cos();
                }
            }
            out[v * 8 + u] = 0.25 * c(u) * c(v) * s;
        }
    }
    out
}

const ANNEX_K_LUMA_Q50: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

fn codec() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut fwd_err, mut inv_err) = (0f64, 0f64);
    for _ in 0..1000 {
        let mut block = [0.0; 64];
        for v in block.iter_mut() {
            *v = rng.gen_range(-128.0..128.0);
        }
        let coeffs = fdct_block(&block);
        let oracle = dct_oracle(&block);
        let back = idct_block(&coeffs);
        for k in 0..64 {
            fwd_err = fwd_err.max((coeffs[k] - oracle[k]).abs());
            inv_err = inv_err.max((back[k] - block[k]).abs());
        }
    }
    ensure(fwd_err <= 1e-6, || format!("fdct vs oracle {fwd_err:e}"))?;
    ensure(inv_err <= 1e-6, || format!("idct(fdct(x)) error {inv_err:e}"))?;

    let gradient = PixelImage::from_rgb_fn(128, 96, |x, y| [(x * 2) as u8, (y * 2) as u8, ((x + y) as u8) / 2]);
    let bytes = encode(&gradient, &EncodeParams::quality(90)).map_err(|e| e.to_string())?;
    let back = decode(&bytes).map_err(|e| e.to_string())?;
    let db = psnr(&gradient, &back);
    ensure(db >= 35.0, || format!("gradient q90 PSNR {db:.2} dB"))?;
    let sub = encode(&gradient, &EncodeParams::quality(90).with_subsampling(Subsampling::S420))
        .map_err(|e| e.to_string())?;
    let db420 = psnr(&gradient, &decode(&sub).map_err(|e| e.to_string())?);

    let q50 = encode(&gradient, &EncodeParams::quality(50)).map_err(|e| e.to_string())?;
    let list = parse_segments(&q50).map_err(|e| e.to_string())?;
    let set = extract_dqt(&list).map_err(|e| e.to_string())?;
    let luma = set.get(0).ok_or("no table 0")?.values_natural();
    ensure(luma == ANNEX_K_LUMA_Q50, || format!("q50 luminance table {luma:?}"))?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "max fdct err {fwd_err:.1e}, round-trip err {inv_err:.1e}, PSNR {db:.2} dB (4:2:0 {db420:.2}), {elapsed:.2?}"
    ))
}

fn median_oracle(plane: &[f64], w: usize, h: usize, window: usize) -> Vec<f64> {
    let r = (window / 2) as isize;
    let med = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let mut rows = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let v = (-r..=r).map(|d| plane[y * w + (x as isize + d).clamp(0, w as isize - 1) as usize]).collect();
            rows[y * w + x] = med(v);
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let v = (-r..=r).map(|d| rows[(y as isize + d).clamp(0, h as isize - 1) as usize * w + x]).collect();
            out[y * w + x] = med(v);
        }
    }
    out
}

fn noise_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..50 {
        let (w, h) = (rng.gen_range(3..=32), rng.gen_range(3..=32));
        let windows: Vec<usize> = [3, 5, 7].into_iter().filter(|&k| k <= w.min(h)).collect();
        let window = windows[rng.gen_range(0..windows.len())];
        let plane: Vec<f64> = if i % 2 == 0 {
            (0..w * h).map(|_| rng.gen_range(0..256) as f64).collect()
        } else {
            (0..w * h).map(|_| rng.gen_range(0.0..255.0)).collect()
        };
        let got = median_row_then_column(&plane, w, h, window).map_err(|e| e.to_string())?;
        ensure(got == median_oracle(&plane, w, h, window), || format!("image {i} ({w}x{h}, window {window})"))?;
    }
    Ok("50 random images exactly equal to brute force".into())
}

fn splice_detection() -> Outcome {
    let start = Instant::now();
    let suite = splice_suite();
    let spliced = suite.iter().filter(|f| f.spliced).count();
    ensure(spliced >= 5, || format!("only {spliced} spliced fixtures"))?;
    let (mut min_spliced, mut max_control) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut failures = Vec::new();
    for f in &suite {
        let h = ela(&f.image, SPLICE_RESAVE_QUALITY, 20.0).map_err(|e| e.to_string())?;
        let score = verdict_from_heatmap(&h, Some(&f.mask)).map_err(|e| e.to_string())?.score;
        if f.spliced {
            min_spliced = min_spliced.min(score);
            if score < 1.5 {
                failures.push(format!("{} {score:.3}", f.name));
            }
        } else {
            max_control = max_control.max(score);
            if score >= 1.2 {
                failures.push(format!("{} {score:.3}", f.name));
            }
        }
    }
    ensure(failures.is_empty(), || failures.join(", "))?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{spliced} splices, min score {min_spliced:.3}; {} controls, max {max_control:.3}; {elapsed:.2?}",
        suite.len() - spliced
    ))
}

/// Eigenpairs of a symmetric 3x3 matrix from its characteristic polynomial.
fn eigen_oracle(a: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let p1 = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
    let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut b = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            b[i][j] = (a[i][j] - if i == j { q } else { 0.0 }) / p;
        }
    }
    let det_b = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let phi = (det_b / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
    let l0 = q + 2.0 * p * phi.cos();
    let l2 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let l1 = 3.0 * q - l0 - l2;
    let values = [l0, l1, l2];
    let mut vectors = [[0.0; 3]; 3];
    for (k, &l) in values.iter().enumerate() {
        let m: Vec<[f64; 3]> = (0..3)
            .map(|i| [a[i][0] - if i == 0 { l } else { 0.0 }, a[i][1] - if i == 1 { l } else { 0.0 }, a[i][2] - if i == 2 { l } else { 0.0 }])
            .collect();
        let cross = |u: [f64; 3], v: [f64; 3]| [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
        let best = [cross(m[0], m[1]), cross(m[0], m[2]), cross(m[1], m[2])]
            .into_iter()
            .max_by(|x, y| norm(x).total_cmp(&norm(y)))
            .unwrap();
        let n = norm(&best);
        let mut v = best.map(|c| c / n);
        let big = v.iter().copied().max_by(|x, y| x.abs().total_cmp(&y.abs())).unwrap();
        if big < 0.0 {
            v = v.map(|c| -c);
        }
        vectors[k] = v;
    }
    (values, vectors)
}

fn norm(v: &[f64; 3]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

fn mixed_image(rng: &mut ChaCha8Rng) -> PixelImage {
    let (w, h) = (rng.gen_range(8..=48), rng.gen_range(8..=48));
    let mut mix = [[0.0f64; 3]; 3];
    for row in mix.iter_mut() {
        for v in row.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    let scale = [rng.gen_range(30.0..60.0), rng.gen_range(10.0..25.0), rng.gen_range(2.0..8.0)];
    let px: Vec<[u8; 3]> = (0..w * h)
        .map(|_| {
            let z: [f64; 3] = std::array::from_fn(|i| rng.gen_range(-1.0..1.0) * scale[i]);
            std::array::from_fn(|c| (128.0 + (0..3).map(|i| mix[c][i] * z[i]).sum::<f64>()).round().clamp(0.0, 255.0) as u8)
        })
        .collect();
    PixelImage::from_rgb_fn(w, h, |x, y| px[y * w + x])
}

fn pca_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut val_err, mut vec_err) = (0f64, 0f64);
    for i in 0..100 {
        let img = mixed_image(&mut rng);
        let got = pca_eigen(&img);
        let (values, vectors) = eigen_oracle(got.covariance);
        for k in 0..3 {
            let e = (got.eigenvalues[k] - values[k]).abs();
            val_err = val_err.max(e);
            ensure(e <= 1e-6, || format!("image {i}: eigenvalue {k} {} vs {}", got.eigenvalues[k], values[k]))?;
            for c in 0..3 {
                let e = (got.eigenvectors[k][c] - vectors[k][c]).abs();
                vec_err = vec_err.max(e);
                ensure(e <= 1e-6, || format!("image {i}: eigenvector {k} {:?} vs {:?}", got.eigenvectors[k], vectors[k]))?;
            }
        }
    }
    let gray = PixelImage::gray(32, 32, (0..1024).map(|_| rng.gen()).collect());
    let g = pca_eigen(&gray);
    let s = 1.0 / 3f64.sqrt();
    ensure(g.eigenvectors[0].iter().all(|c| (c - s).abs() <= 1e-6), || {
        format!("gray first eigenvector {:?}", g.eigenvectors[0])
    })?;
    Ok(format!("100 images, max eigenvalue err {val_err:.1e}, eigenvector err {vec_err:.1e}; gray -> (1,1,1)/sqrt3"))
}

fn extraction_scan() -> Outcome {
    let root = common::extraction_root();
    let digest = tree_digest(&root).map_err(|e| e.to_string())?;
    let stat = common::tree_stat(&root);
    let report = build_extraction_report(&root, &ReferenceDb::new()).map_err(|e| e.to_string())?;
    let mismatches = common::manifest_mismatches(&report, &common::manifest());
    ensure(mismatches.is_empty(), || mismatches.join("; "))?;
    ensure(tree_digest(&root).map_err(|e| e.to_string())? == digest, || "tree content changed".into())?;
    ensure(common::tree_stat(&root) == stat, || "tree metadata changed".into())?;
    Ok(format!(
        "{} packages, {} findings match the manifest; tree sha256 {} unchanged",
        report.matrix.len(),
        report.findings.len(),
        &digest[..16]
    ))
}

fn refdb_roundtrip() -> Outcome {
    let matcher = FilenameMatcher::builtin();
    let editors = [
        ("meitu-save", "9.7.5.5"),
        ("photoshop-fix", "1.0"),
        ("photoshop-express", "8.2"),
        ("removebg", "1.4"),
        ("background-eraser-inshot", "1.1"),
        ("photo-studio", "2.5"),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let at = Utc.with_ymd_and_hms(2024, 1, 2, 3, 4, 5).unwrap();
    let mut db = ReferenceDb::new();
    let mut probes: Vec<(String, Vec<u8>)> = Vec::new();
    for (e, (pattern, version)) in editors.iter().enumerate() {
        let p = matcher.pattern(pattern).ok_or(format!("no pattern {pattern}"))?;
        let label = EditorLabel::new(&p.editor_name, version);
        let exif = ExifWriter::new(ByteOrder::LittleEndian).ascii(TAG_SOFTWARE, &format!("{} {version}", p.editor_name));
        for i in 0..6 {
            let jpeg = editor_jpeg_fixture(48, 32, (e * 100 + i) as u64, 500 + e as u64).map_err(|e| e.to_string())?;
            let jpeg = if i % 2 == 0 { with_exif(&jpeg, &exif) } else { jpeg };
            let when = random_datetime(&mut rng, Resolution::Second);
            let name = p.instantiate(&when, "IMG_0001", rng.gen_range(0..100_000));
            if i < 5 {
                db.ingest_labeled_image(&jpeg, &name, &label, &matcher, at).map_err(|e| format!("{name}: {e}"))?;
            }
            probes.push((name, jpeg));
        }
    }
    let ingested = probes.len() - editors.len();
    probes.push(("IMG_20230102.jpg".into(), jpeg_fixture(48, 32, 77, 88)));
    probes.push(("holiday.jpg".into(), jpeg_fixture(48, 32, 78, 95)));

    let snapshot = db.export_snapshot();
    let restored = ReferenceDb::import_snapshot(&snapshot).map_err(|e| e.to_string())?;
    ensure(restored.export_snapshot() == snapshot, || "re-export differs".into())?;
    let opts = AnalyzeOptions::default();
    let run = |db: &ReferenceDb| -> Result<Vec<ImageVerdict>, String> {
        probes
            .iter()
            .map(|(n, b)| analyze_bytes(b, n, db, &opts).map_err(|e| e.to_string()))
            .collect()
    };
    let before = run(&db)?;
    let after = run(&restored)?;
    for (b, a) in before.iter().zip(&after) {
        ensure(a == b, || format!("{}: verdict changed", b.target))?;
    }
    let indicated = before.iter().filter(|v| !v.stage1.lookup.is_empty()).count();
    ensure(indicated >= ingested, || format!("only {indicated} probes found db candidates"))?;
    Ok(format!(
        "{ingested} ingested across {} editors; {} verdicts identical after import",
        editors.len(),
        before.len()
    ))
}

fn mutate(rng: &mut ChaCha8Rng, seed: &[u8]) -> Vec<u8> {
    let mut v = seed.to_vec();
    match rng.gen_range(0..6) {
        0 => {
            let n = rng.gen_range(0..=v.len());
            v.truncate(n);
        }
        1 => {
            for _ in 0..rng.gen_range(1..8) {
                let i = rng.gen_range(0..v.len());
                v[i] ^= 1 << rng.gen_range(0..8);
            }
        }
        2 => {
            for _ in 0..rng.gen_range(1..4) {
                let i = rng.gen_range(0..v.len());
                v[i] = *[0x00, 0xFF, 0x7F, 0x80, 0x01].get(rng.gen_range(0..5)).unwrap();
            }
        }
        3 => {
            let i = rng.gen_range(0..=v.len());
            let junk: Vec<u8> = (0..rng.gen_range(1..32)).map(|_| rng.gen()).collect();
            v.splice(i..i, junk);
        }
        4 => {
            let i = rng.gen_range(0..v.len());
            let j = rng.gen_range(i..v.len().min(i + 64) + 1).min(v.len());
            v.drain(i..j);
        }
        _ => {
            let n = rng.gen_range(0..512);
            v = (0..n).map(|_| rng.gen()).collect();
            if rng.gen_bool(0.5) && v.len() >= 2 {
                v[0] = 0xFF;
                v[1] = 0xD8;
            }
        }
    }
    v
}

fn fuzz_totality() -> Outcome {
    let gray = encode(&PixelImage::gray(16, 16, (0..=255).collect()), &EncodeParams::quality(60)).unwrap();
    let rgb = jpeg_fixture(24, 16, 11, 85);
    let sub = encode(
        &manipscan::fixtures::smooth_image(24, 24, 12),
        &EncodeParams::quality(70).with_subsampling(Subsampling::S420).with_restart_interval(2),
    )
    .unwrap();
    let exif = ExifWriter::new(ByteOrder::BigEndian)
        .ascii(TAG_SOFTWARE, "Snapseed 2.0")
        .ascii(TAG_ARTIST, "Meitu")
        .thumbnail(manipscan::fixtures::identity_thumbnail())
        .build();
    let tagged = with_exif(&rgb, &ExifWriter::new(ByteOrder::LittleEndian).ascii(TAG_SOFTWARE, "x"));
    let seeds: Vec<&[u8]> = vec![&gray, &rgb, &sub, &exif, &tagged];

    let previous = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut panics, mut slow, mut worst) = (Vec::new(), Vec::new(), Duration::ZERO);
    let mut ok = [0usize; 3];
    for i in 0..10_000 {
        let input = mutate(&mut rng, seeds[i % seeds.len()]);
        let start = Instant::now();
        let r = catch_unwind(AssertUnwindSafe(|| {
            let mut n = [0usize; 3];
            if let Ok(list) = parse_segments(&input) {
                n[0] += 1;
                for p in list.exif_payloads() {
                    let _ = parse_exif(p);
                }
            }
            n[1] += parse_exif(&input).is_ok() as usize;
            n[2] += decode(&input).is_ok() as usize;
            n
        }));
        let t = start.elapsed();
        worst = worst.max(t);
        match r {
            Ok(n) => (0..3).for_each(|k| ok[k] += n[k]),
            Err(_) => panics.push(i),
        }
        if t > Duration::from_secs(5) {
            slow.push(i);
        }
    }
    std::panic::set_hook(previous);
    ensure(panics.is_empty(), || format!("{} panics, first at input {}", panics.len(), panics[0]))?;
    ensure(slow.is_empty(), || format!("{} inputs over 5 s", slow.len()))?;
    Ok(format!(
        "10000 inputs, 0 panics, slowest {worst:.2?}; parsed {} segment lists, {} exif, {} decodes",
        ok[0], ok[1], ok[2]
    ))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Outcome); 11] = [
        (1, "marker conformance", markers),
        (2, "DQT fingerprint determinism", dqt_determinism),
        (3, "Exif signature extraction", exif_signatures),
        (4, "filename round-trip", filename_roundtrip),
        (5, "codec correctness", codec),
        (6, "noise median oracle", noise_oracle),
        (7, "ELA splice detection", splice_detection),
        (8, "PCA eigen oracle", pca_oracle),
        (9, "extraction scan", extraction_scan),
        (10, "reference db round-trip", refdb_roundtrip),
        (11, "fuzz totality", fuzz_totality),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria {
        let outcome = catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {n:>2} {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {n:>2} {name}: {detail}");
            }
        }
    }
    println!("{} of 11 criteria passed", 11 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

use super::dct::fdct_block;
use super::huffman::{BitWriter, EncodeTable};
use super::tables::*;
use super::{rgb_to_ycbcr, CodecError, ColorSpace, EncodeParams, PixelImage, Subsampling};
use crate::segments::{APP0, DHT, DQT, DRI, EOI, SOF0, SOI, SOS, ZIGZAG};

/// Encodes with Annex K tables scaled to `params.quality`.
pub fn encode(img: &PixelImage, params: &EncodeParams) -> Result<Vec<u8>, CodecError> {
    if !(1..=100).contains(&params.quality) {
        return Err(CodecError::InvalidParams("quality must be within 1..=100"));
    }
    let luma = scaled_table(&ANNEX_K_LUMINANCE, params.quality);
    let chroma = scaled_table(&ANNEX_K_CHROMINANCE, params.quality);
    encode_with_tables(img, params, &luma, &chroma)
}

/// Encodes with caller-supplied quantization tables (natural order, 1..=255).
/// `params.quality` is ignored.
pub fn encode_with_tables(
    img: &PixelImage,
    params: &EncodeParams,
    luma_q: &[u16; 64],
    chroma_q: &[u16; 64],
) -> Result<Vec<u8>, CodecError> {
    img.validate()?;
    if img.width == 0 || img.height == 0 {
        return Err(CodecError::InvalidParams("image has a zero dimension"));
    }
    if img.width > u16::MAX as usize || img.height > u16::MAX as usize {
        return Err(CodecError::DimensionOverflow {
            width: img.width as u64,
            height: img.height as u64,
            limit: u16::MAX as u64 * u16::MAX as u64,
        });
    }
    if luma_q.iter().chain(chroma_q).any(|&v| v == 0 || v > 255) {
        return Err(CodecError::InvalidParams("quantizer values must be within 1..=255"));
    }
    let gray = match img.color_space {
        ColorSpace::Grayscale => true,
        ColorSpace::Rgb => false,
        ColorSpace::YCbCr => return Err(CodecError::InvalidParams("encode expects RGB or grayscale input")),
    };
    let sub = match params.subsampling {
        _ if gray => Subsampling::None,
        Subsampling::S444 => Subsampling::S444,
        Subsampling::S420 => Subsampling::S420,
        _ => return Err(CodecError::InvalidParams("subsampling must be 4:4:4 or 4:2:0")),
    };
    let mcu = if sub == Subsampling::S420 { 16 } else { 8 };
    let (pw, ph) = (img.width.div_ceil(mcu) * mcu, img.height.div_ceil(mcu) * mcu);

    // Level-shifted component planes, padded by edge replication.
    let mut planes: Vec<Vec<f64>> = if gray { vec![Vec::with_capacity(pw * ph)] } else { vec![Vec::with_capacity(pw * ph); 3] };
    for y in 0..ph {
        let sy = y.min(img.height - 1);
        for x in 0..pw {
            let sx = x.min(img.width - 1);
            if gray {
                planes[0].push(img.planes[0].get(sx, sy) as f64 - 128.0);
            } else {
                let [r, g, b] = img.rgb_at(sx, sy);
                let ycc = rgb_to_ycbcr(r as f64, g as f64, b as f64);
                for (p, v) in planes.iter_mut().zip(ycc) {
                    p.push(v - 128.0);
                }
            }
        }
    }
    let mut dims = vec![(pw, ph); planes.len()];
    if sub == Subsampling::S420 {
        for (p, d) in planes.iter_mut().zip(dims.iter_mut()).skip(1) {
            *p = box_downsample(p, pw, ph);
            *d = (pw / 2, ph / 2);
        }
    }

    let qz_luma = zigzag_reciprocal(luma_q);
    let qz_chroma = zigzag_reciprocal(chroma_q);
    let enc = [
        (
            EncodeTable::new(&DC_LUMINANCE_BITS, &DC_LUMINANCE_VALUES)?,
            EncodeTable::new(&AC_LUMINANCE_BITS, &AC_LUMINANCE_VALUES)?,
        ),
        (
            EncodeTable::new(&DC_CHROMINANCE_BITS, &DC_CHROMINANCE_VALUES)?,
            EncodeTable::new(&AC_CHROMINANCE_BITS, &AC_CHROMINANCE_VALUES)?,
        ),
    ];
    let factor = if sub == Subsampling::S420 { 2 } else { 1 };
    let (mcux, mcuy) = (pw / mcu, ph / mcu);
    let restart = params.restart_interval.filter(|&r| r > 0).map(|r| r as usize);

    let mut w = BitWriter::default();
    let mut preds = [0i32; 3];
    let mut rst = 0u8;
    let mut block = [0.0f64; 64];
    for n in 0..mcux * mcuy {
        if let Some(ri) = restart {
            if n > 0 && n % ri == 0 {
                w.restart(rst);
                rst = rst.wrapping_add(1);
                preds = [0; 3];
            }
        }
        let (mx, my) = (n % mcux, n / mcux);
        for (ci, plane) in planes.iter().enumerate() {
            let blocks = if ci == 0 { factor } else { 1 };
            let stride = dims[ci].0;
            let (qz, tabs) = if ci == 0 { (&qz_luma, &enc[0]) } else { (&qz_chroma, &enc[1]) };
            for by in 0..blocks {
                for bx in 0..blocks {
                    let (x0, y0) = ((mx * blocks + bx) * 8, (my * blocks + by) * 8);
                    for y in 0..8 {
                        let row = (y0 + y) * stride + x0;
                        block[y * 8..y * 8 + 8].copy_from_slice(&plane[row..row + 8]);
                    }
                    let coeffs = fdct_block(&block);
                    let mut zz = [0i32; 64];
                    for (k, z) in zz.iter_mut().enumerate() {
                        *z = (coeffs[ZIGZAG[k]] * qz[k]).round() as i32;
                    }
                    zz[0] = zz[0].clamp(-2047, 2047);
                    for z in &mut zz[1..] {
                        *z = (*z).clamp(-1023, 1023);
                    }
                    write_block(&mut w, &zz, &mut preds[ci], &tabs.0, &tabs.1);
                }
            }
        }
    }
    w.flush();

    let mut out = vec![0xFF, SOI];
    segment(&mut out, APP0, b"JFIF\0\x01\x01\x00\x00\x01\x00\x01\x00\x00");
    let mut dqt = Vec::new();
    for (id, t) in [luma_q, chroma_q].iter().take(if gray { 1 } else { 2 }).enumerate() {
        dqt.push(id as u8);
        dqt.extend(ZIGZAG.iter().map(|&i| t[i] as u8));
    }
    segment(&mut out, DQT, &dqt);
    let mut sof = vec![8];
    sof.extend((img.height as u16).to_be_bytes());
    sof.extend((img.width as u16).to_be_bytes());
    sof.push(planes.len() as u8);
    for ci in 0..planes.len() {
        let hv = if ci == 0 { (factor << 4 | factor) as u8 } else { 0x11 };
        sof.extend([ci as u8 + 1, hv, (ci > 0) as u8]);
    }
    segment(&mut out, SOF0, &sof);
    let mut dht = Vec::new();
    let huff: [(u8, &[u8; 16], &[u8]); 4] = [
        (0x00, &DC_LUMINANCE_BITS, &DC_LUMINANCE_VALUES),
        (0x10, &AC_LUMINANCE_BITS, &AC_LUMINANCE_VALUES),
        (0x01, &DC_CHROMINANCE_BITS, &DC_CHROMINANCE_VALUES),
        (0x11, &AC_CHROMINANCE_BITS, &AC_CHROMINANCE_VALUES),
    ];
    for (tc_th, bits, vals) in huff.iter().take(if gray { 2 } else { 4 }) {
        dht.push(*tc_th);
        dht.extend_from_slice(*bits);
        dht.extend_from_slice(vals);
    }
    segment(&mut out, DHT, &dht);
    if let Some(ri) = restart {
        segment(&mut out, DRI, &(ri as u16).to_be_bytes());
    }
    let mut sos = vec![planes.len() as u8];
    for ci in 0..planes.len() {
        sos.extend([ci as u8 + 1, if ci == 0 { 0x00 } else { 0x11 }]);
    }
    sos.extend([0, 63, 0]);
    segment(&mut out, SOS, &sos);
    out.extend_from_slice(&w.out);
    out.extend([0xFF, EOI]);
    Ok(out)
}

fn segment(out: &mut Vec<u8>, marker: u8, payload: &[u8]) {
    out.extend([0xFF, marker]);
    out.extend(((payload.len() + 2) as u16).to_be_bytes());
    out.extend_from_slice(payload);
}

fn zigzag_reciprocal(q: &[u16; 64]) -> [f64; 64] {
    let mut out = [0.0; 64];
    for (k, o) in out.iter_mut().enumerate() {
        *o = 1.0 / q[ZIGZAG[k]] as f64;
    }
    out
}

fn box_downsample(p: &[f64], w: usize, h: usize) -> Vec<f64> {
    let (ow, oh) = (w / 2, h / 2);
    let mut out = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        for x in 0..ow {
            let i = 2 * y * w + 2 * x;
            out.push((p[i] + p[i + 1] + p[i + w] + p[i + w + 1]) / 4.0);
        }
    }
    out
}

/// Magnitude category and the bits that encode `v`.
fn category(v: i32) -> (u8, u16) {
    let size = (32 - v.unsigned_abs().leading_zeros()) as u8;
    let bits = if v < 0 { v - 1 } else { v };
    (size, (bits as u32 & ((1u32 << size) - 1)) as u16)
}

fn write_block(w: &mut BitWriter, zz: &[i32; 64], pred: &mut i32, dc: &EncodeTable, ac: &EncodeTable) {
    let diff = zz[0] - *pred;
    *pred = zz[0];
    let (size, bits) = category(diff);
    let (code, len) = dc.get(size);
    w.put(code, len);
    w.put(bits, size);
    let mut run = 0u8;
    for &v in &zz[1..] {
        if v == 0 {
            run += 1;
            continue;
        }
        while run >= 16 {
            let (c, l) = ac.get(0xF0);
            w.put(c, l);
            run -= 16;
        }
        let (size, bits) = category(v);
        let (c, l) = ac.get(run << 4 | size);
        w.put(c, l);
        w.put(bits, size);
        run = 0;
    }
    if run > 0 {
        let (c, l) = ac.get(0x00);
        w.put(c, l);
    }
}

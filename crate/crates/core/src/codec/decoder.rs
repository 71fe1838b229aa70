use super::dct::idct_block;
use super::huffman::{unstuff_intervals, BitReader, DecodeTable};
use super::{ycbcr_to_rgb, CodecError, ColorSpace, PixelImage, Plane, Subsampling};
use crate::segments::{
    is_sof, parse_dqt_payload, parse_segments, CodingProcess, FrameHeader, QuantTable, DHT, DQT,
    SOS, ZIGZAG,
};

/// 64 megapixels.
pub const DEFAULT_MAX_PIXELS: u64 = 64 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeOptions {
    pub max_pixels: u64,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            max_pixels: DEFAULT_MAX_PIXELS,
        }
    }
}

pub fn decode(bytes: &[u8]) -> Result<PixelImage, CodecError> {
    decode_with(bytes, &DecodeOptions::default())
}

struct Component {
    id: u8,
    h: usize,
    v: usize,
    tq: u8,
    /// Plane size in whole blocks (MCU-padded).
    bw: usize,
    samples: Vec<u8>,
    pred: i32,
    scanned: bool,
}

struct Frame {
    width: usize,
    height: usize,
    hmax: usize,
    vmax: usize,
    mcux: usize,
    mcuy: usize,
    comps: Vec<Component>,
}

impl Frame {
    fn new(h: &FrameHeader, opts: &DecodeOptions, entropy_bytes: usize) -> Result<Frame, CodecError> {
        match h.coding {
            CodingProcess::Baseline | CodingProcess::ExtendedSequential => {}
            other => return Err(CodecError::UnsupportedCoding(other)),
        }
        if h.precision != 8 {
            return Err(CodecError::UnsupportedCoding(CodingProcess::ExtendedSequential));
        }
        if h.components.len() != 1 && h.components.len() != 3 {
            return Err(CodecError::Malformed("only 1 or 3 components are supported"));
        }
        let (width, height) = (h.width as usize, h.height as usize);
        if width == 0 || height == 0 {
            return Err(CodecError::Malformed("zero image dimension"));
        }
        if (width as u64) * (height as u64) > opts.max_pixels {
            return Err(CodecError::DimensionOverflow {
                width: width as u64,
                height: height as u64,
                limit: opts.max_pixels,
            });
        }
        if h.components.iter().any(|c| !(1..=4).contains(&c.h) || !(1..=4).contains(&c.v)) {
            return Err(CodecError::Malformed("sampling factor outside 1..4"));
        }
        let hmax = h.components.iter().map(|c| c.h as usize).max().unwrap();
        let vmax = h.components.iter().map(|c| c.v as usize).max().unwrap();
        let mcux = width.div_ceil(8 * hmax);
        let mcuy = height.div_ceil(8 * vmax);
        let blocks: usize = h
            .components
            .iter()
            .map(|c| mcux * c.h as usize * mcuy * c.v as usize)
            .sum();
        // Every block costs at least two bits of entropy data.
        if blocks > 4 * entropy_bytes + 64 {
            return Err(CodecError::CorruptEntropyData("frame larger than its entropy data allows"));
        }
        let comps = h
            .components
            .iter()
            .map(|c| {
                let (bw, bh) = (mcux * c.h as usize, mcuy * c.v as usize);
                Component {
                    id: c.id,
                    h: c.h as usize,
                    v: c.v as usize,
                    tq: c.quant_table,
                    bw,
                    samples: vec![0; bw * bh * 64],
                    pred: 0,
                    scanned: false,
                }
            })
            .collect();
        Ok(Frame {
            width,
            height,
            hmax,
            vmax,
            mcux,
            mcuy,
            comps,
        })
    }
}

#[derive(Default)]
struct Tables {
    quant: [Option<QuantTable>; 4],
    dc: [Option<DecodeTable>; 4],
    ac: [Option<DecodeTable>; 4],
}

fn parse_dht(p: &[u8], tables: &mut Tables) -> Result<(), CodecError> {
    let mut i = 0;
    while i < p.len() {
        if p.len() < i + 17 {
            return Err(CodecError::BadHuffmanTable("truncated DHT record"));
        }
        let (class, id) = (p[i] >> 4, p[i] & 0x0F);
        if class > 1 || id > 3 {
            return Err(CodecError::BadHuffmanTable("bad class or id"));
        }
        let mut bits = [0u8; 16];
        bits.copy_from_slice(&p[i + 1..i + 17]);
        let n: usize = bits.iter().map(|&b| b as usize).sum();
        let values = p
            .get(i + 17..i + 17 + n)
            .ok_or(CodecError::BadHuffmanTable("truncated DHT values"))?;
        let t = DecodeTable::new(&bits, values)?;
        if class == 0 {
            tables.dc[id as usize] = Some(t);
        } else {
            tables.ac[id as usize] = Some(t);
        }
        i += 17 + n;
    }
    Ok(())
}

pub fn decode_with(bytes: &[u8], opts: &DecodeOptions) -> Result<PixelImage, CodecError> {
    let list = parse_segments(bytes)?;
    let entropy_bytes: usize = list
        .segments
        .iter()
        .filter_map(|s| s.entropy_data.as_ref())
        .map(|r| r.len())
        .sum();
    let mut tables = Tables::default();
    let mut frame: Option<Frame> = None;
    let mut restart_interval = 0usize;

    for seg in &list.segments {
        let code = seg.marker.low_byte();
        let payload = list.payload(seg);
        match code {
            DQT => {
                for t in parse_dqt_payload(payload, seg.offset)? {
                    let id = t.table_id as usize;
                    tables.quant[id] = Some(t);
                }
            }
            DHT => parse_dht(payload, &mut tables)?,
            0xDD => {
                if payload.len() < 2 {
                    return Err(CodecError::Malformed("short DRI"));
                }
                restart_interval = u16::from_be_bytes([payload[0], payload[1]]) as usize;
            }
            c if is_sof(c) => {
                if frame.is_some() {
                    return Err(CodecError::Malformed("multiple frames"));
                }
                let header = FrameHeader::parse(c, payload)?;
                frame = Some(Frame::new(&header, opts, entropy_bytes)?);
            }
            SOS => {
                let f = frame.as_mut().ok_or(CodecError::Malformed("scan before frame"))?;
                let data = list.entropy_data(seg).unwrap_or(&[]);
                decode_scan(f, &tables, payload, data, restart_interval)?;
            }
            _ => {}
        }
    }
    let frame = frame.ok_or(CodecError::Segment(crate::segments::SegmentError::NoFrame))?;
    if frame.comps.iter().any(|c| !c.scanned) {
        return Err(CodecError::Malformed("component without scan data"));
    }
    Ok(assemble(&frame))
}

fn decode_scan(
    f: &mut Frame,
    tables: &Tables,
    header: &[u8],
    data: &[u8],
    restart_interval: usize,
) -> Result<(), CodecError> {
    let ns = *header.first().ok_or(CodecError::Malformed("empty SOS"))? as usize;
    if ns == 0 || ns > 4 || header.len() < 1 + 2 * ns + 3 {
        return Err(CodecError::Malformed("bad SOS header"));
    }
    let mut members = Vec::with_capacity(ns);
    for i in 0..ns {
        let (cid, td_ta) = (header[1 + 2 * i], header[2 + 2 * i]);
        let idx = f
            .comps
            .iter()
            .position(|c| c.id == cid)
            .ok_or(CodecError::Malformed("scan references unknown component"))?;
        let (td, ta) = ((td_ta >> 4) as usize, (td_ta & 0x0F) as usize);
        if td > 3 || ta > 3 {
            return Err(CodecError::Malformed("bad Huffman table selector"));
        }
        let dc = tables.dc[td].as_ref().ok_or(CodecError::MissingTable { kind: "DC Huffman", id: td as u8 })?;
        let ac = tables.ac[ta].as_ref().ok_or(CodecError::MissingTable { kind: "AC Huffman", id: ta as u8 })?;
        let c = &f.comps[idx];
        let q = tables.quant[c.tq as usize & 3]
            .as_ref()
            .filter(|_| c.tq < 4)
            .ok_or(CodecError::MissingTable { kind: "quantization", id: c.tq })?;
        members.push((idx, dc, ac, q.values_zigzag));
    }
    let tail = &header[1 + 2 * ns..];
    if tail[0] != 0 || tail[1] != 63 || tail[2] != 0 {
        return Err(CodecError::Malformed("spectral selection not baseline"));
    }
    for &(idx, ..) in &members {
        f.comps[idx].pred = 0;
        f.comps[idx].scanned = true;
    }

    let intervals = unstuff_intervals(data);
    let mut interval = 0usize;
    let mut reader = BitReader::new(&intervals[0]);

    // Non-interleaved scans cover only the component's own block extent.
    let (units_x, units_y) = if ns == 1 {
        let c = &f.comps[members[0].0];
        let cw = (f.width * c.h).div_ceil(f.hmax);
        let ch = (f.height * c.v).div_ceil(f.vmax);
        (cw.div_ceil(8), ch.div_ceil(8))
    } else {
        (f.mcux, f.mcuy)
    };

    let mut coeffs = [0.0f64; 64];
    for n in 0..units_x * units_y {
        if restart_interval > 0 && n > 0 && n % restart_interval == 0 {
            interval += 1;
            let next = intervals
                .get(interval)
                .ok_or(CodecError::CorruptEntropyData("missing restart marker"))?;
            reader = BitReader::new(next);
            for &(idx, ..) in &members {
                f.comps[idx].pred = 0;
            }
        }
        let (mx, my) = (n % units_x, n / units_x);
        for &(idx, dc, ac, ref q) in &members {
            let (bh_, bv_) = if ns == 1 { (1, 1) } else { (f.comps[idx].h, f.comps[idx].v) };
            for by in 0..bv_ {
                for bx in 0..bh_ {
                    let comp = &mut f.comps[idx];
                    decode_block(&mut reader, dc, ac, q, &mut comp.pred, &mut coeffs)?;
                    let (gx, gy) = (mx * bh_ + bx, my * bv_ + by);
                    let out = idct_block(&coeffs);
                    let stride = comp.bw * 8;
                    for y in 0..8 {
                        let row = (gy * 8 + y) * stride + gx * 8;
                        for x in 0..8 {
                            comp.samples[row + x] = (out[y * 8 + x] + 128.0).round().clamp(0.0, 255.0) as u8;
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

fn decode_block(
    r: &mut BitReader<'_>,
    dc: &DecodeTable,
    ac: &DecodeTable,
    q: &[u16; 64],
    pred: &mut i32,
    out: &mut [f64; 64],
) -> Result<(), CodecError> {
    out.fill(0.0);
    let t = dc.decode(r)?;
    if t > 11 {
        return Err(CodecError::CorruptEntropyData("DC category above 11"));
    }
    *pred += r.receive_extend(t)?;
    out[0] = (*pred as f64) * q[0] as f64;
    let mut k = 1;
    while k < 64 {
        let rs = ac.decode(r)?;
        let (run, size) = ((rs >> 4) as usize, rs & 0x0F);
        if size == 0 {
            if run == 15 {
                k += 16;
                continue;
            }
            break;
        }
        k += run;
        if k > 63 {
            return Err(CodecError::CorruptEntropyData("AC run past end of block"));
        }
        out[ZIGZAG[k]] = r.receive_extend(size)? as f64 * q[k] as f64;
        k += 1;
    }
    Ok(())
}

fn subsampling_of(f: &Frame) -> Subsampling {
    let factors: Vec<(u8, u8)> = f.comps.iter().map(|c| (c.h as u8, c.v as u8)).collect();
    Subsampling::from_factors(&factors)
}

fn assemble(f: &Frame) -> PixelImage {
    let (w, h) = (f.width, f.height);
    let upsampled: Vec<Vec<u8>> = f
        .comps
        .iter()
        .map(|c| {
            let stride = c.bw * 8;
            let mut out = Vec::with_capacity(w * h);
            for y in 0..h {
                let sy = y * c.v / f.vmax;
                for x in 0..w {
                    out.push(c.samples[sy * stride + x * c.h / f.hmax]);
                }
            }
            out
        })
        .collect();
    let subsampling = subsampling_of(f);
    if upsampled.len() == 1 {
        let mut img = PixelImage::gray(w, h, upsampled.into_iter().next().unwrap());
        img.subsampling = subsampling;
        return img;
    }
    let n = w * h;
    let (mut r, mut g, mut b) = (vec![0; n], vec![0; n], vec![0; n]);
    for i in 0..n {
        let p = ycbcr_to_rgb(upsampled[0][i] as f64, upsampled[1][i] as f64, upsampled[2][i] as f64);
        r[i] = p[0];
        g[i] = p[1];
        b[i] = p[2];
    }
    PixelImage {
        width: w,
        height: h,
        color_space: ColorSpace::Rgb,
        subsampling,
        planes: vec![Plane::new(w, h, r), Plane::new(w, h, g), Plane::new(w, h, b)],
    }
}

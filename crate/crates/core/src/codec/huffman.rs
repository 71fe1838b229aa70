//! Canonical Huffman tables and entropy-coded bit streams.

use super::CodecError;

/// Code lengths from a DHT `BITS` array: returns (symbol, code, length) triples
/// in canonical order.
fn canonical_codes(bits: &[u8; 16], values: &[u8]) -> Result<Vec<(u8, u16, u8)>, CodecError> {
    let total: usize = bits.iter().map(|&b| b as usize).sum();
    if total != values.len() || total > 256 {
        return Err(CodecError::BadHuffmanTable("symbol count mismatch"));
    }
    let mut out = Vec::with_capacity(total);
    let mut code: u32 = 0;
    let mut k = 0;
    for (i, &count) in bits.iter().enumerate() {
        let len = i as u8 + 1;
        for _ in 0..count {
            if code >= (1 << len) {
                return Err(CodecError::BadHuffmanTable("code space overflow"));
            }
            out.push((values[k], code as u16, len));
            code += 1;
            k += 1;
        }
        code <<= 1;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct EncodeTable {
    /// Indexed by symbol: (code, length); length 0 means absent.
    codes: [(u16, u8); 256],
}

impl EncodeTable {
    pub fn new(bits: &[u8; 16], values: &[u8]) -> Result<EncodeTable, CodecError> {
        let mut codes = [(0u16, 0u8); 256];
        for (sym, code, len) in canonical_codes(bits, values)? {
            codes[sym as usize] = (code, len);
        }
        Ok(EncodeTable { codes })
    }

    pub fn get(&self, symbol: u8) -> (u16, u8) {
        self.codes[symbol as usize]
    }
}

#[derive(Debug, Clone)]
pub struct DecodeTable {
    maxcode: [i32; 17],
    valptr: [i32; 17],
    mincode: [i32; 17],
    values: Vec<u8>,
}

impl DecodeTable {
    pub fn new(bits: &[u8; 16], values: &[u8]) -> Result<DecodeTable, CodecError> {
        canonical_codes(bits, values)?;
        let mut maxcode = [-1i32; 17];
        let mut valptr = [0i32; 17];
        let mut mincode = [0i32; 17];
        let mut code = 0i32;
        let mut k = 0i32;
        for len in 1..=16 {
            let n = bits[len - 1] as i32;
            if n > 0 {
                valptr[len] = k;
                mincode[len] = code;
                code += n;
                k += n;
                maxcode[len] = code - 1;
            }
            code <<= 1;
        }
        Ok(DecodeTable {
            maxcode,
            valptr,
            mincode,
            values: values.to_vec(),
        })
    }

    pub fn decode(&self, r: &mut BitReader<'_>) -> Result<u8, CodecError> {
        let mut code = 0i32;
        for len in 1..=16 {
            code = (code << 1) | r.bit()? as i32;
            if code <= self.maxcode[len] {
                let idx = self.valptr[len] + code - self.mincode[len];
                return Ok(self.values[idx as usize]);
            }
        }
        Err(CodecError::CorruptEntropyData("no Huffman code matches"))
    }
}

/// Reads bits MSB-first from already un-stuffed bytes.
pub struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
    acc: u8,
    left: u8,
}

impl<'a> BitReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        BitReader {
            data,
            pos: 0,
            acc: 0,
            left: 0,
        }
    }

    pub fn bit(&mut self) -> Result<u8, CodecError> {
        if self.left == 0 {
            let &b = self
                .data
                .get(self.pos)
                .ok_or(CodecError::CorruptEntropyData("entropy data exhausted"))?;
            self.acc = b;
            self.pos += 1;
            self.left = 8;
        }
        self.left -= 1;
        Ok((self.acc >> self.left) & 1)
    }

    pub fn bits(&mut self, n: u8) -> Result<u16, CodecError> {
        let mut v = 0u16;
        for _ in 0..n {
            v = (v << 1) | self.bit()? as u16;
        }
        Ok(v)
    }

    /// Reads `size` magnitude bits and applies the JPEG sign extension.
    pub fn receive_extend(&mut self, size: u8) -> Result<i32, CodecError> {
        if size == 0 {
            return Ok(0);
        }
        if size > 16 {
            return Err(CodecError::CorruptEntropyData("coefficient size above 16 bits"));
        }
        let v = self.bits(size)? as i32;
        Ok(if v < (1 << (size - 1)) {
            v - (1 << size) + 1
        } else {
            v
        })
    }
}

/// Splits entropy-coded data into restart intervals, removing byte stuffing
/// and fill bytes.
pub fn unstuff_intervals(data: &[u8]) -> Vec<Vec<u8>> {
    let mut intervals = vec![Vec::new()];
    let mut i = 0;
    while i < data.len() {
        let b = data[i];
        if b != 0xFF {
            intervals.last_mut().unwrap().push(b);
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < data.len() && data[j] == 0xFF {
            j += 1;
        }
        match data.get(j) {
            Some(0x00) => intervals.last_mut().unwrap().push(0xFF),
            Some(0xD0..=0xD7) => intervals.push(Vec::new()),
            _ => {}
        }
        i = j + 1;
    }
    intervals
}

/// MSB-first bit writer with 0xFF byte stuffing.
#[derive(Default)]
pub struct BitWriter {
    pub out: Vec<u8>,
    acc: u32,
    nbits: u8,
}

impl BitWriter {
    pub fn put(&mut self, code: u16, len: u8) {
        debug_assert!(len <= 16);
        for i in (0..len).rev() {
            self.acc = (self.acc << 1) | ((code >> i) & 1) as u32;
            self.nbits += 1;
            if self.nbits == 8 {
                self.emit(self.acc as u8);
                self.acc = 0;
                self.nbits = 0;
            }
        }
    }

    fn emit(&mut self, b: u8) {
        self.out.push(b);
        if b == 0xFF {
            self.out.push(0x00);
        }
    }

    /// Pads the final partial byte with 1-bits.
    pub fn flush(&mut self) {
        if self.nbits > 0 {
            let pad = 8 - self.nbits;
            self.put((1 << pad) - 1, pad);
        }
    }

    pub fn restart(&mut self, n: u8) {
        self.flush();
        self.out.push(0xFF);
        self.out.push(0xD0 + (n & 7));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::tables::*;

    #[test]
    fn dc_luminance_codes() {
        let t = EncodeTable::new(&DC_LUMINANCE_BITS, &DC_LUMINANCE_VALUES).unwrap();
        assert_eq!(t.get(0), (0b00, 2));
        assert_eq!(t.get(1), (0b010, 3));
        assert_eq!(t.get(5), (0b110, 3));
        assert_eq!(t.get(6), (0b1110, 4));
        assert_eq!(t.get(11), (0b1_1111_1110, 9));
    }

    #[test]
    fn encode_then_decode_every_symbol() {
        let enc = EncodeTable::new(&AC_LUMINANCE_BITS, &AC_LUMINANCE_VALUES).unwrap();
        let dec = DecodeTable::new(&AC_LUMINANCE_BITS, &AC_LUMINANCE_VALUES).unwrap();
        let mut w = BitWriter::default();
        for &s in &AC_LUMINANCE_VALUES {
            let (c, l) = enc.get(s);
            w.put(c, l);
        }
        w.flush();
        let intervals = unstuff_intervals(&w.out);
        assert_eq!(intervals.len(), 1);
        let mut r = BitReader::new(&intervals[0]);
        for &s in &AC_LUMINANCE_VALUES {
            assert_eq!(dec.decode(&mut r).unwrap(), s);
        }
    }

    #[test]
    fn stuffing_and_restart_split() {
        let data = [0x12, 0xFF, 0x00, 0x34, 0xFF, 0xD3, 0x56];
        assert_eq!(unstuff_intervals(&data), vec![vec![0x12, 0xFF, 0x34], vec![0x56]]);
    }

    #[test]
    fn oversubscribed_table_rejected() {
        let mut bits = [0u8; 16];
        bits[0] = 3;
        assert!(DecodeTable::new(&bits, &[1, 2, 3]).is_err());
    }

    #[test]
    fn sign_extension() {
        let data = [0b0110_0000];
        let mut r = BitReader::new(&data);
        assert_eq!(r.receive_extend(3).unwrap(), -4); // 011 -> -4
        let data = [0b1000_0000];
        let mut r = BitReader::new(&data);
        assert_eq!(r.receive_extend(1).unwrap(), 1);
    }
}

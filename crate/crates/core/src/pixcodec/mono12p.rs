use crate::{Error, Result};

/// Packed mono12p stream: two 12-bit samples per three bytes.
///
/// Pair layout `(p0, p1)`:
/// `b0 = p0[7:0]`, `b1 = p0[11:8] | p1[3:0] << 4`, `b2 = p1[11:4]`.
/// An odd trailing sample takes two bytes with the upper nibble of the
/// second byte left at zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mono12pBuffer {
    bytes: Vec<u8>,
    pixel_count: usize,
}

/// `ceil(3n / 2)`.
pub const fn packed_len(pixel_count: usize) -> usize {
    (pixel_count * 3).div_ceil(2)
}

/// Inverse of [`packed_len`]; `None` for lengths no pixel count produces
/// (`len % 3 == 1`).
pub fn pixel_count_for_len(len: usize) -> Option<usize> {
    match len % 3 {
        0 => Some(len / 3 * 2),
        2 => Some(len / 3 * 2 + 1),
        _ => None,
    }
}

impl Mono12pBuffer {
    pub fn new(bytes: Vec<u8>, pixel_count: usize) -> Result<Self> {
        let expected = packed_len(pixel_count);
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "mono12p buffer holds {} bytes but {pixel_count} pixels need {expected}",
                bytes.len()
            )));
        }
        if pixel_count % 2 == 1 && bytes[expected - 1] & 0xF0 != 0 {
            return Err(Error::Format(
                "mono12p padding nibble of the trailing pixel is not zero".into(),
            ));
        }
        Ok(Self { bytes, pixel_count })
    }

    /// Buffer whose pixel count is inferred from its length.
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self> {
        let n = pixel_count_for_len(bytes.len()).ok_or_else(|| {
            Error::Format(format!("{} bytes is not a valid mono12p length", bytes.len()))
        })?;
        Self::new(bytes, n)
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn pixel_count(&self) -> usize {
        self.pixel_count
    }
}

pub fn pack_mono12p(values: &[u16]) -> Result<Mono12pBuffer> {
    if let Some((index, &value)) = values.iter().enumerate().find(|(_, &v)| v > 0x0FFF) {
        return Err(Error::Range { index, value });
    }
    let mut bytes = Vec::with_capacity(packed_len(values.len()));
    let mut pairs = values.chunks_exact(2);
    for pair in &mut pairs {
        let (p0, p1) = (pair[0], pair[1]);
        bytes.push((p0 & 0xFF) as u8);
        bytes.push(((p0 >> 8) as u8 & 0x0F) | (((p1 & 0x0F) as u8) << 4));
        bytes.push((p1 >> 4) as u8);
    }
    if let [p0] = pairs.remainder() {
        bytes.push((p0 & 0xFF) as u8);
        bytes.push((p0 >> 8) as u8 & 0x0F);
    }
    Ok(Mono12pBuffer {
        bytes,
        pixel_count: values.len(),
    })
}

pub fn unpack_mono12p(buf: &Mono12pBuffer) -> Vec<u16> {
    let mut out = Vec::with_capacity(buf.pixel_count);
    let mut triples = buf.bytes.chunks_exact(3);
    for t in &mut triples {
        let (b0, b1, b2) = (t[0] as u16, t[1] as u16, t[2] as u16);
        out.push(b0 | (b1 & 0x0F) << 8);
        out.push(b1 >> 4 | b2 << 4);
    }
    if let [b0, b1] = triples.remainder() {
        out.push(*b0 as u16 | (*b1 as u16 & 0x0F) << 8);
    }
    out
}

pub fn u16_to_le_bytes(values: &[u16]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn u16_from_le_bytes(bytes: &[u8]) -> Result<Vec<u16>> {
    if bytes.len() % 2 != 0 {
        return Err(Error::Format(format!(
            "u16 stream has odd byte length {}",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn extreme_pairs() {
        assert_eq!(pack_mono12p(&[0, 0]).unwrap().bytes(), &[0x00, 0x00, 0x00]);
        assert_eq!(
            pack_mono12p(&[4095, 4095]).unwrap().bytes(),
            &[0xFF, 0xFF, 0xFF]
        );
        let zero = Mono12pBuffer::new(vec![0, 0, 0], 2).unwrap();
        assert_eq!(unpack_mono12p(&zero), vec![0, 0]);
        let full = Mono12pBuffer::new(vec![0xFF, 0xFF, 0xFF], 2).unwrap();
        assert_eq!(unpack_mono12p(&full), vec![4095, 4095]);
    }

    #[test]
    fn nibble_layout() {
        // p0 = 0xABC, p1 = 0x123
        let b = pack_mono12p(&[0xABC, 0x123]).unwrap();
        assert_eq!(b.bytes(), &[0xBC, 0x3A, 0x12]);
    }

    #[test]
    fn odd_trailing_pixel() {
        let b = pack_mono12p(&[0x123, 0x456, 0xFED]).unwrap();
        assert_eq!(b.bytes(), &[0x23, 0x61, 0x45, 0xED, 0x0F]);
        assert_eq!(unpack_mono12p(&b), vec![0x123, 0x456, 0xFED]);
    }

    #[test]
    fn out_of_range_names_index() {
        match pack_mono12p(&[1, 2, 4096, 3]) {
            Err(Error::Range { index, value }) => {
                assert_eq!(index, 2);
                assert_eq!(value, 4096);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn length_mismatch_is_format_error() {
        assert!(matches!(
            Mono12pBuffer::new(vec![0; 4], 2),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            Mono12pBuffer::from_bytes(vec![0; 4]),
            Err(Error::Format(_))
        ));
        assert!(Mono12pBuffer::new(vec![0, 0xF0], 1).is_err());
    }

    #[test]
    fn every_single_value_paired_with_zero() {
        for v in 0..4096u16 {
            for pair in [[v, 0], [0, v]] {
                let packed = pack_mono12p(&pair).unwrap();
                assert_eq!(unpack_mono12p(&packed), pair);
            }
        }
    }

    #[test]
    fn coarse_lattice_sweep() {
        for a in (0..4096u16).step_by(17) {
            for b in (0..4096u16).step_by(13) {
                let packed = pack_mono12p(&[a, b]).unwrap();
                assert_eq!(unpack_mono12p(&packed), vec![a, b]);
            }
        }
    }

    #[test]
    fn length_formula() {
        for n in 0..50 {
            assert_eq!(packed_len(n), (3 * n + 1) / 2);
            assert_eq!(pixel_count_for_len(packed_len(n)), Some(n));
        }
    }

    proptest! {
        #[test]
        fn unpack_pack_identity(v in proptest::collection::vec(0u16..4096, 0..300)) {
            let packed = pack_mono12p(&v).unwrap();
            prop_assert_eq!(packed.bytes().len(), packed_len(v.len()));
            prop_assert_eq!(unpack_mono12p(&packed), v);
        }

        #[test]
        fn pack_unpack_identity(raw in proptest::collection::vec(any::<u8>(), 0..100), odd in any::<bool>()) {
            let mut bytes = raw;
            let len = bytes.len() - bytes.len() % 3;
            bytes.truncate(len);
            if odd {
                bytes.push(0x5A);
                bytes.push(0x07);
            }
            let buf = Mono12pBuffer::from_bytes(bytes.clone()).unwrap();
            let repacked = pack_mono12p(&unpack_mono12p(&buf)).unwrap();
            prop_assert_eq!(repacked.bytes(), &bytes[..]);
        }
    }
}

//! The IDX container used by MNIST: a big-endian magic number
//! `0x0000_08NN` (`NN` = number of dimensions), one big-endian `u32` per
//! dimension, then the raw unsigned bytes.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxHeader {
    pub magic: u32,
    pub dims: Vec<u32>,
}

impl IdxHeader {
    pub fn payload_len(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub header: IdxHeader,
    pub data: Vec<u8>,
}

fn truncated(path: &Path, what: &str) -> Error {
    Error::io(
        path,
        io::Error::new(io::ErrorKind::UnexpectedEof, format!("IDX file truncated in {what}")),
    )
}

/// Parses an unsigned-byte IDX file held in memory. `path` is only used for
/// error messages.
pub fn parse_idx(bytes: &[u8], path: &Path) -> Result<IdxArray> {
    let word = |at: usize| -> Option<u32> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    };
    let magic = word(0).ok_or_else(|| truncated(path, "magic"))?;
    let ndim = (magic & 0xff) as usize;
    if magic >> 8 != 0x08 || ndim == 0 {
        return Err(Error::Format {
            what: format!("IDX file {}", path.display()),
            reason: format!("bad magic 0x{magic:08x} (expected 0x000008NN, unsigned bytes)"),
        });
    }
    let dims = (0..ndim)
        .map(|d| word(4 + 4 * d).ok_or_else(|| truncated(path, "header")))
        .collect::<Result<Vec<_>>>()?;
    let header = IdxHeader { magic, dims };
    let start = 4 + 4 * ndim;
    let len = header.payload_len();
    let data = bytes
        .get(start..start + len)
        .ok_or_else(|| truncated(path, "payload"))?
        .to_vec();
    Ok(IdxArray { header, data })
}

pub fn read_idx(path: &Path) -> Result<IdxArray> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx(&bytes, path)
}

/// Serializes an array; the magic's low byte must match the dimension count.
pub fn encode_idx(array: &IdxArray) -> Result<Vec<u8>> {
    let h = &array.header;
    if (h.magic & 0xff) as usize != h.dims.len() || h.magic >> 8 != 0x08 {
        return Err(Error::Format {
            what: "IDX header".into(),
            reason: format!("magic 0x{:08x} does not describe {} dims", h.magic, h.dims.len()),
        });
    }
    if array.data.len() != h.payload_len() {
        return Err(Error::shape("encode_idx", h.payload_len(), array.data.len()));
    }
    let mut out = Vec::with_capacity(4 + 4 * h.dims.len() + array.data.len());
    out.extend_from_slice(&h.magic.to_be_bytes());
    for d in &h.dims {
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(&array.data);
    Ok(out)
}

pub fn write_idx(path: &Path, array: &IdxArray) -> Result<()> {
    let bytes = encode_idx(array)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_is_big_endian() {
        let arr = IdxArray {
            header: IdxHeader {
                magic: LABELS_MAGIC,
                dims: vec![3],
            },
            data: vec![1, 3, 4],
        };
        let bytes = encode_idx(&arr).unwrap();
        assert_eq!(bytes, vec![0, 0, 8, 1, 0, 0, 0, 3, 1, 3, 4]);
    }

    #[test]
    fn bad_magic_is_a_format_error() {
        let bytes = [0u8, 0, 9, 1, 0, 0, 0, 1, 5];
        assert!(matches!(parse_idx(&bytes, Path::new("x")), Err(Error::Format { .. })));
    }

    #[test]
    fn truncated_payload_is_an_io_error() {
        let bytes = [0u8, 0, 8, 1, 0, 0, 0, 4, 5, 6];
        match parse_idx(&bytes, Path::new("x")) {
            Err(Error::Io { source, .. }) => assert_eq!(source.kind(), io::ErrorKind::UnexpectedEof),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn round_trip(rows in 0u32..6, side in 1u32..5, seed in any::<u64>()) {
            let n = (rows * side * side) as usize;
            let data: Vec<u8> = (0..n).map(|i| (seed.rotate_left(i as u32 % 64) as u8) ^ i as u8).collect();
            let arr = IdxArray { header: IdxHeader { magic: IMAGES_MAGIC, dims: vec![rows, side, side] }, data };
            let bytes = encode_idx(&arr).unwrap();
            let back = parse_idx(&bytes, Path::new("mem")).unwrap();
            prop_assert_eq!(&back, &arr);
            prop_assert_eq!(encode_idx(&back).unwrap(), bytes);
        }
    }
}

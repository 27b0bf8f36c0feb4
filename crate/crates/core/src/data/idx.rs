//! IDX (MNIST container) parsing and serialization, bit-exact both ways.

use super::DataError;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Parsed contents of one IDX file: an image tensor or a label vector.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum IdxData {
    Images {
        n: usize,
        rows: usize,
        cols: usize,
        /// Row-major pixels, `n * rows * cols` bytes, 0–255.
        pixels: Vec<u8>,
    },
    Labels(Vec<u8>),
}

impl IdxData {
    pub fn len(&self) -> usize {
        match self {
            IdxData::Images { n, .. } => *n,
            IdxData::Labels(l) => l.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pixels of image `i` (row-major).
    pub fn image(&self, i: usize) -> Option<&[u8]> {
        match self {
            IdxData::Images { n, rows, cols, pixels } if i < *n => {
                let size = rows * cols;
                Some(&pixels[i * size..(i + 1) * size])
            }
            _ => None,
        }
    }
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32, DataError> {
    let end = at.checked_add(4).ok_or(DataError::DimensionOverflow)?;
    let slice = bytes
        .get(at..end)
        .ok_or(DataError::PayloadSize { expected: end, got: bytes.len() })?;
    Ok(u32::from_be_bytes(slice.try_into().expect("4-byte slice")))
}

/// Parses an IDX byte stream. Magic `0x00000803` yields images (three
/// big-endian u32 dims), `0x00000801` yields labels (one dim, values ≤ 9).
/// The payload length must match the header dims exactly.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxData, DataError> {
    let magic = read_u32(bytes, 0)?;
    match magic {
        IMAGE_MAGIC => {
            let n = read_u32(bytes, 4)? as usize;
            let rows = read_u32(bytes, 8)? as usize;
            let cols = read_u32(bytes, 12)? as usize;
            let count = n
                .checked_mul(rows)
                .and_then(|x| x.checked_mul(cols))
                .ok_or(DataError::DimensionOverflow)?;
            let expected = count
                .checked_add(16)
                .ok_or(DataError::DimensionOverflow)?;
            if bytes.len() != expected {
                return Err(DataError::PayloadSize { expected, got: bytes.len() });
            }
            Ok(IdxData::Images { n, rows, cols, pixels: bytes[16..].to_vec() })
        }
        LABEL_MAGIC => {
            let n = read_u32(bytes, 4)? as usize;
            let expected = n.checked_add(8).ok_or(DataError::DimensionOverflow)?;
            if bytes.len() != expected {
                return Err(DataError::PayloadSize { expected, got: bytes.len() });
            }
            let labels = bytes[8..].to_vec();
            if let Some(&bad) = labels.iter().find(|&&l| l > 9) {
                return Err(DataError::LabelOutOfRange { value: bad });
            }
            Ok(IdxData::Labels(labels))
        }
        other => Err(DataError::BadMagic { got: other }),
    }
}

/// Serializes back to IDX bytes; `parse_idx(write_idx(d)) == d` and the byte
/// stream matches the original input exactly.
pub fn write_idx(data: &IdxData) -> Vec<u8> {
    match data {
        IdxData::Images { n, rows, cols, pixels } => {
            let mut out = Vec::with_capacity(16 + pixels.len());
            out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
            out.extend_from_slice(&(*n as u32).to_be_bytes());
            out.extend_from_slice(&(*rows as u32).to_be_bytes());
            out.extend_from_slice(&(*cols as u32).to_be_bytes());
            out.extend_from_slice(pixels);
            out
        }
        IdxData::Labels(labels) => {
            let mut out = Vec::with_capacity(8 + labels.len());
            out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
            out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
            out.extend_from_slice(labels);
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_bytes(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
        b.extend_from_slice(&n.to_be_bytes());
        b.extend_from_slice(&rows.to_be_bytes());
        b.extend_from_slice(&cols.to_be_bytes());
        b.extend_from_slice(pixels);
        b
    }

    #[test]
    fn parses_a_two_image_file() {
        let pixels: Vec<u8> = (0..1568).map(|i| (i % 251) as u8).collect();
        let bytes = image_bytes(2, 28, 28, &pixels);
        match parse_idx(&bytes).unwrap() {
            IdxData::Images { n, rows, cols, pixels: p } => {
                assert_eq!((n, rows, cols), (2, 28, 28));
                assert_eq!(p, pixels);
            }
            other => panic!("expected images, got {other:?}"),
        }
    }

    #[test]
    fn parses_labels_and_rejects_values_above_nine() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&10u32.to_be_bytes());
        bytes.extend_from_slice(&[0, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
        assert_eq!(
            parse_idx(&bytes).unwrap(),
            IdxData::Labels(vec![0, 1, 2, 3, 4, 5, 6, 7, 8, 9])
        );
        *bytes.last_mut().unwrap() = 10;
        assert!(matches!(
            parse_idx(&bytes),
            Err(DataError::LabelOutOfRange { value: 10 })
        ));
    }

    #[test]
    fn rejects_bad_magic_truncation_and_trailing_garbage() {
        assert!(matches!(
            parse_idx(&0x0000_0802u32.to_be_bytes()),
            Err(DataError::BadMagic { got: 0x0000_0802 })
        ));
        let good = image_bytes(1, 2, 2, &[1, 2, 3, 4]);
        assert!(parse_idx(&good).is_ok());
        assert!(matches!(
            parse_idx(&good[..good.len() - 1]),
            Err(DataError::PayloadSize { expected: 20, got: 19 })
        ));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(
            parse_idx(&long),
            Err(DataError::PayloadSize { expected: 20, got: 21 })
        ));
        // Dim product that overflows usize.
        let huge = image_bytes(u32::MAX, u32::MAX, u32::MAX, &[]);
        assert!(parse_idx(&huge).is_err());
    }

    #[test]
    fn write_is_the_exact_inverse_of_parse() {
        let pixels: Vec<u8> = (0..9).collect();
        let bytes = image_bytes(1, 3, 3, &pixels);
        let parsed = parse_idx(&bytes).unwrap();
        assert_eq!(write_idx(&parsed), bytes);

        let labels = IdxData::Labels(vec![3, 1, 4]);
        assert_eq!(parse_idx(&write_idx(&labels)).unwrap(), labels);
    }

    #[test]
    fn image_accessor_slices_row_major() {
        let pixels: Vec<u8> = (0..8).collect();
        let data = IdxData::Images { n: 2, rows: 2, cols: 2, pixels };
        assert_eq!(data.image(0).unwrap(), &[0, 1, 2, 3]);
        assert_eq!(data.image(1).unwrap(), &[4, 5, 6, 7]);
        assert!(data.image(2).is_none());
    }
}

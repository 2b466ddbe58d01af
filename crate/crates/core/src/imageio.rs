//! Grayscale image ingestion (PGM P2/P5) and block partitioning.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImageError {
    #[error("malformed PGM at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },
    #[error("PGM payload truncated: expected {expected} samples, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("invalid image: {0}")]
    Invalid(String),
    #[error("grid {rows}x{cols} does not fit a {width}x{height} image")]
    InvalidGrid {
        rows: usize,
        cols: usize,
        width: usize,
        height: usize,
    },
}

/// Row-major grid of intensity samples in `[0, maxval]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    maxval: u16,
    pixels: Vec<u16>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, maxval: u16, pixels: Vec<u16>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::Invalid(format!("empty dimensions {width}x{height}")));
        }
        if maxval == 0 {
            return Err(ImageError::Invalid("maxval must be positive".into()));
        }
        if pixels.len() != width * height {
            return Err(ImageError::Invalid(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|&&p| p > maxval) {
            return Err(ImageError::Invalid(format!("pixel value {p} exceeds maxval {maxval}")));
        }
        Ok(Self {
            width,
            height,
            maxval,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn maxval(&self) -> u16 {
        self.maxval
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.pixels[row * self.width + col]
    }

    /// Copies the sub-rectangle `rows x cols` (half-open ranges).
    fn crop(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> GrayImage {
        let mut pixels = Vec::with_capacity(rows.len() * cols.len());
        for r in rows.clone() {
            pixels.extend_from_slice(&self.pixels[r * self.width + cols.start..r * self.width + cols.end]);
        }
        GrayImage {
            width: cols.len(),
            height: rows.len(),
            maxval: self.maxval,
            pixels,
        }
    }

    /// Binary (P5) encoding. Only `maxval <= 255` is supported.
    pub fn encode_pgm(&self) -> Result<Vec<u8>, ImageError> {
        if self.maxval > 255 {
            return Err(ImageError::Invalid("P5 output supports maxval <= 255 only".into()));
        }
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        out.extend(self.pixels.iter().map(|&p| p as u8));
        Ok(out)
    }
}

/// Block grid dimensions: `rows` blocks vertically, `cols` horizontally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockGrid {
    pub rows: usize,
    pub cols: usize,
}

impl BlockGrid {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for BlockGrid {
    fn default() -> Self {
        Self { rows: 4, cols: 4 }
    }
}

impl fmt::Display for BlockGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

impl std::str::FromStr for BlockGrid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (r, c) = s
            .split_once(['x', 'X', '×'])
            .ok_or_else(|| format!("grid must look like RxC, got {s:?}"))?;
        let rows = r.trim().parse().map_err(|_| format!("bad grid rows in {s:?}"))?;
        let cols = c.trim().parse().map_err(|_| format!("bad grid cols in {s:?}"))?;
        if rows == 0 || cols == 0 {
            return Err(format!("grid dimensions must be positive, got {s:?}"));
        }
        Ok(Self { rows, cols })
    }
}

/// Splits the image into `grid.rows * grid.cols` blocks in row-major order.
///
/// Block `(r, c)` covers rows `[r*H/rows, (r+1)*H/rows)` and the analogous
/// column range, so blocks tile the image exactly and differ in size by at
/// most one pixel per dimension.
pub fn partition_blocks(img: &GrayImage, grid: BlockGrid) -> Result<Vec<GrayImage>, ImageError> {
    if grid.rows == 0 || grid.cols == 0 || grid.rows > img.height || grid.cols > img.width {
        return Err(ImageError::InvalidGrid {
            rows: grid.rows,
            cols: grid.cols,
            width: img.width,
            height: img.height,
        });
    }
    let row_edge = |r: usize| r * img.height / grid.rows;
    let col_edge = |c: usize| c * img.width / grid.cols;
    let mut blocks = Vec::with_capacity(grid.len());
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            blocks.push(img.crop(row_edge(r)..row_edge(r + 1), col_edge(c)..col_edge(c + 1)));
        }
    }
    Ok(blocks)
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn err(&self, reason: impl Into<String>) -> ImageError {
        ImageError::Format {
            offset: self.pos,
            reason: reason.into(),
        }
    }

    /// Skips whitespace and `#` comments (which run to end of line).
    fn skip_separators(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&b) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if b == b'\n' || b == b'\r' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32, ImageError> {
        self.skip_separators();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(format!("expected {what}")));
        }
        // digits only, so this is valid UTF-8
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
        text.parse().map_err(|_| ImageError::Format {
            offset: start,
            reason: format!("{what} out of range"),
        })
    }
}

/// Decodes an ASCII (P2) or binary (P5) PGM.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    let mut cur = HeaderCursor { bytes, pos: 0 };
    let binary = match bytes.get(..2) {
        Some(b"P2") => false,
        Some(b"P5") => true,
        _ => return Err(cur.err("expected magic P2 or P5")),
    };
    cur.pos = 2;
    if !bytes.get(2).is_some_and(|b| b.is_ascii_whitespace() || *b == b'#') {
        return Err(cur.err("expected whitespace after magic"));
    }
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(cur.err("zero image dimension"));
    }
    if maxval == 0 || maxval > u16::MAX as u32 {
        return Err(cur.err(format!("maxval {maxval} outside 1..=65535")));
    }
    let maxval = maxval as u16;
    let expected = width * height;

    let pixels = if binary {
        if maxval > 255 {
            return Err(cur.err("16-bit P5 payloads are not supported"));
        }
        // exactly one whitespace byte separates the header from the raster
        if !bytes.get(cur.pos).is_some_and(u8::is_ascii_whitespace) {
            return Err(cur.err("expected single whitespace before raster"));
        }
        let payload = &bytes[cur.pos + 1..];
        if payload.len() < expected {
            return Err(ImageError::Truncated {
                expected,
                found: payload.len(),
            });
        }
        payload[..expected].iter().map(|&b| b as u16).collect()
    } else {
        let mut pixels = Vec::with_capacity(expected);
        loop {
            cur.skip_separators();
            if cur.pos >= bytes.len() {
                break;
            }
            let v = cur.number("pixel value")?;
            if pixels.len() == expected {
                return Err(cur.err("more samples than width*height"));
            }
            pixels.push(v.min(u16::MAX as u32) as u16);
        }
        if pixels.len() != expected {
            return Err(ImageError::Truncated {
                expected,
                found: pixels.len(),
            });
        }
        pixels
    };
    GrayImage::new(width, height, maxval, pixels).map_err(|e| match e {
        ImageError::Invalid(reason) => ImageError::Format {
            offset: cur.pos,
            reason,
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decodes_minimal_ascii() {
        let img = decode_pgm(b"P2\n2 2\n255\n0 255 128 64").unwrap();
        assert_eq!(img, GrayImage::new(2, 2, 255, vec![0, 255, 128, 64]).unwrap());
    }

    #[test]
    fn decodes_orl_sized_binary() {
        let mut bytes = b"P5\n# created by scanner\n92 112\n255\n".to_vec();
        bytes.extend((0..92 * 112).map(|i| (i % 256) as u8));
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!((img.width(), img.height(), img.maxval()), (92, 112, 255));
        assert_eq!(img.pixels().len(), 10304);
        assert_eq!(img.get(1, 0), 92);
    }

    #[test]
    fn rejects_wrong_magic() {
        let err = decode_pgm(b"P6\n1 1\n255\n\0\0\0").unwrap_err();
        assert!(matches!(err, ImageError::Format { offset: 0, .. }));
    }

    #[test]
    fn comments_between_header_fields() {
        let img = decode_pgm(b"P2 # c1\n3 # c2\n1\n# c3\n9\n1 2 3").unwrap();
        assert_eq!(img.pixels(), &[1, 2, 3]);
        assert_eq!(img.maxval(), 9);
    }

    #[test]
    fn truncated_payloads() {
        assert!(matches!(
            decode_pgm(b"P5\n4 4\n255\n\x01\x02").unwrap_err(),
            ImageError::Truncated { expected: 16, found: 2 }
        ));
        assert!(matches!(
            decode_pgm(b"P2\n2 2\n255\n1 2 3").unwrap_err(),
            ImageError::Truncated { expected: 4, found: 3 }
        ));
    }

    #[test]
    fn malformed_header_reports_offset() {
        match decode_pgm(b"P2\n2 x\n255\n").unwrap_err() {
            ImageError::Format { offset, .. } => assert_eq!(offset, 5),
            e => panic!("unexpected {e:?}"),
        }
        assert!(decode_pgm(b"P2\n1 1\n9\n10").is_err());
    }

    #[test]
    fn encode_roundtrip() {
        let img = GrayImage::new(3, 2, 200, vec![0, 1, 2, 100, 150, 200]).unwrap();
        assert_eq!(decode_pgm(&img.encode_pgm().unwrap()).unwrap(), img);
    }

    #[test]
    fn orl_grid_boundaries() {
        let img = GrayImage::new(92, 112, 255, vec![0; 92 * 112]).unwrap();
        let blocks = partition_blocks(&img, BlockGrid::new(4, 4)).unwrap();
        assert_eq!(blocks.len(), 16);
        for b in &blocks {
            assert_eq!((b.width(), b.height()), (23, 28));
        }
    }

    #[test]
    fn uneven_grid_uses_floor_boundaries() {
        let img = GrayImage::new(3, 3, 9, (1..=9).collect()).unwrap();
        let blocks = partition_blocks(&img, BlockGrid::new(2, 2)).unwrap();
        let sizes: Vec<_> = blocks.iter().map(|b| (b.height(), b.width())).collect();
        assert_eq!(sizes, vec![(1, 1), (1, 2), (2, 1), (2, 2)]);
        assert_eq!(blocks[3].pixels(), &[5, 6, 8, 9]);
    }

    #[test]
    fn grid_larger_than_image() {
        let img = GrayImage::new(2, 5, 255, vec![0; 10]).unwrap();
        assert!(matches!(
            partition_blocks(&img, BlockGrid::new(2, 3)),
            Err(ImageError::InvalidGrid { .. })
        ));
        assert!(partition_blocks(&img, BlockGrid::new(0, 1)).is_err());
    }

    #[test]
    fn parses_grid() {
        assert_eq!("4x4".parse::<BlockGrid>().unwrap(), BlockGrid::new(4, 4));
        assert_eq!("2×3".parse::<BlockGrid>().unwrap(), BlockGrid::new(2, 3));
        assert!("0x3".parse::<BlockGrid>().is_err());
        assert!("4".parse::<BlockGrid>().is_err());
    }

    proptest! {
        #[test]
        fn blocks_tile_the_image(
            w in 1usize..24, h in 1usize..24, rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()
        ) {
            prop_assume!(rows <= h && cols <= w);
            let pixels: Vec<u16> = (0..w * h).map(|i| ((i as u64).wrapping_mul(seed | 1) % 256) as u16).collect();
            let img = GrayImage::new(w, h, 255, pixels.clone()).unwrap();
            let blocks = partition_blocks(&img, BlockGrid::new(rows, cols)).unwrap();
            prop_assert_eq!(blocks.len(), rows * cols);
            let mut union: Vec<u16> = blocks.iter().flat_map(|b| b.pixels().iter().copied()).collect();
            let mut all = pixels;
            union.sort_unstable();
            all.sort_unstable();
            prop_assert_eq!(union, all);
            for b in &blocks {
                prop_assert!(b.height() == h / rows || b.height() == h / rows + 1);
                prop_assert!(b.width() == w / cols || b.width() == w / cols + 1);
            }
        }
    }
}

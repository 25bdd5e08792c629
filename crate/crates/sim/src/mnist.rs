//! IDX parsing, 28x28 to 7x7 mean pooling and the pooled image store.
//!
//! IDX files are big-endian: a magic number (`0x00000803` for unsigned-byte
//! images of rank 3, `0x00000801` for labels of rank 1), one 32-bit count per
//! dimension, then the raw bytes.

use std::path::Path;

use crate::data::{DataError, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const SIDE: usize = 28;
pub const POOL: usize = 4;
pub const POOLED_SIDE: usize = SIDE / POOL;
pub const POOLED_PIXELS: usize = POOLED_SIDE * POOLED_SIDE;

/// Images as read from an IDX file, pixels scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub images: Vec<Vec<f64>>,
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let chunk = bytes
        .get(offset..offset + 4)
        .ok_or(DataError::TruncatedFile {
            needed: offset + 4,
            found: bytes.len(),
        })?;
    Ok(u32::from_be_bytes(chunk.try_into().expect("four bytes")))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = read_u32(bytes, 0)?;
    if found != expected {
        return Err(DataError::BadMagic { expected, found });
    }
    Ok(())
}

fn payload(bytes: &[u8], header: usize, len: usize) -> Result<&[u8]> {
    bytes.get(header..header + len).ok_or(DataError::TruncatedFile {
        needed: header + len,
        found: bytes.len(),
    })
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    check_magic(bytes, IMAGE_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let size = rows * cols;
    let data = payload(bytes, 16, count * size)?;
    let images = data
        .chunks_exact(size.max(1))
        .take(count)
        .map(|c| c.iter().map(|&p| f64::from(p) / 255.0).collect())
        .collect();
    Ok(IdxImages { rows, cols, images })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABEL_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    Ok(payload(bytes, 8, count)?.to_vec())
}

pub fn encode_idx_images(rows: usize, cols: usize, images: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for v in [IMAGE_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        assert_eq!(img.len(), rows * cols, "image size must match the header");
        out.extend_from_slice(img);
    }
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Reads an image file and its label file.
pub fn load_idx(images: &Path, labels: &Path) -> Result<(IdxImages, Vec<u8>)> {
    let imgs = parse_idx_images(&read_file(images)?)?;
    let labs = parse_idx_labels(&read_file(labels)?)?;
    if imgs.images.len() != labs.len() {
        return Err(DataError::CountMismatch {
            images: imgs.images.len(),
            labels: labs.len(),
        });
    }
    Ok((imgs, labs))
}

/// Non-overlapping 4x4 average pooling of a row-major 28x28 image, flattened
/// row-major to 49 values.
pub fn downsample_28_to_7(image: &[f64]) -> Result<Vec<f64>> {
    if image.len() != SIDE * SIDE {
        return Err(DataError::BadShape {
            expected: SIDE * SIDE,
            found: image.len(),
        });
    }
    let mut out = vec![0.0; POOLED_PIXELS];
    for (r, row) in image.chunks_exact(SIDE).enumerate() {
        for (c, &v) in row.iter().enumerate() {
            out[(r / POOL) * POOLED_SIDE + c / POOL] += v;
        }
    }
    let area = (POOL * POOL) as f64;
    out.iter_mut().for_each(|v| *v /= area);
    Ok(out)
}

/// Pooled 49-pixel images with their digit labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MnistStore {
    images: Vec<Vec<f64>>,
    labels: Vec<u8>,
}

impl MnistStore {
    pub fn new(images: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(DataError::CountMismatch {
                images: images.len(),
                labels: labels.len(),
            });
        }
        if let Some(img) = images.iter().find(|i| i.len() != POOLED_PIXELS) {
            return Err(DataError::BadShape {
                expected: POOLED_PIXELS,
                found: img.len(),
            });
        }
        Ok(Self { images, labels })
    }

    pub fn from_idx(raw: &IdxImages, labels: Vec<u8>) -> Result<Self> {
        if raw.rows != SIDE || raw.cols != SIDE {
            return Err(DataError::BadShape {
                expected: SIDE * SIDE,
                found: raw.rows * raw.cols,
            });
        }
        let images = raw
            .images
            .iter()
            .map(|i| downsample_28_to_7(i))
            .collect::<Result<Vec<_>>>()?;
        Self::new(images, labels)
    }

    pub fn load_idx(images: &Path, labels: &Path) -> Result<Self> {
        let (raw, labs) = load_idx(images, labels)?;
        Self::from_idx(&raw, labs)
    }

    pub fn images(&self) -> &[Vec<f64>] {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn indices_with_labels(&self, digits: &[u8]) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| digits.contains(&self.labels[i]))
            .collect()
    }

    /// Writes the store as CSV, one image per row: the label then 49 pixels.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> std::result::Result<(), csv::Error> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for (img, &label) in self.images.iter().zip(&self.labels) {
            let mut rec = vec![label.to_string()];
            rec.extend(img.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format produced by [`MnistStore::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Self> {
        let io_err = |message: String| DataError::Io {
            path: path.display().to_string(),
            message,
        };
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(|e| io_err(e.to_string()))?;
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| io_err(e.to_string()))?;
            let bad = |what: &str| io_err(format!("line {}: {what}", line + 1));
            let label: u8 = rec
                .get(0)
                .and_then(|v| v.trim().parse().ok())
                .filter(|&l: &u8| l <= 9)
                .ok_or_else(|| bad("invalid label"))?;
            let pixels = rec
                .iter()
                .skip(1)
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|_| bad("invalid pixel value"))?;
            labels.push(label);
            images.push(pixels);
        }
        Self::new(images, labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn constant_white_image() {
        let bytes = encode_idx_images(28, 28, &[vec![255; 784]]);
        let parsed = parse_idx_images(&bytes).unwrap();
        assert_eq!(parsed.images.len(), 1);
        assert!(parsed.images[0].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = encode_idx_images(28, 28, &[vec![0; 784]]);
        bytes[3] = 0x02;
        assert_eq!(
            parse_idx_images(&bytes),
            Err(DataError::BadMagic {
                expected: IMAGE_MAGIC,
                found: 0x0000_0802
            })
        );
        assert!(matches!(parse_idx_labels(&bytes), Err(DataError::BadMagic { .. })));
    }

    #[test]
    fn truncated_payload() {
        let bytes = encode_idx_images(28, 28, &[vec![0; 784], vec![0; 784]]);
        assert!(matches!(
            parse_idx_images(&bytes[..bytes.len() - 1]),
            Err(DataError::TruncatedFile { .. })
        ));
        assert!(matches!(parse_idx_labels(&[0, 0, 8]), Err(DataError::TruncatedFile { .. })));
    }

    #[test]
    fn round_trip() {
        let mut rng = crate::rng::stream_from_seed(5);
        let imgs: Vec<Vec<u8>> = (0..3).map(|_| (0..784).map(|_| rng.random()).collect()).collect();
        let labels = vec![3u8, 1, 4];
        let parsed = parse_idx_images(&encode_idx_images(28, 28, &imgs)).unwrap();
        let back: Vec<Vec<u8>> = parsed
            .images
            .iter()
            .map(|i| i.iter().map(|v| (v * 255.0).round() as u8).collect())
            .collect();
        assert_eq!(back, imgs);
        assert_eq!(parse_idx_labels(&encode_idx_labels(&labels)).unwrap(), labels);
    }

    #[test]
    fn pooling_examples() {
        let constant = vec![0.3; 784];
        assert!(downsample_28_to_7(&constant).unwrap().iter().all(|&v| (v - 0.3).abs() < 1e-15));

        let mut corner = vec![0.0; 784];
        for r in 0..4 {
            for c in 0..4 {
                corner[r * 28 + c] = 1.0;
            }
        }
        let pooled = downsample_28_to_7(&corner).unwrap();
        assert_eq!(pooled[0], 1.0);
        assert!(pooled[1..].iter().all(|&v| v == 0.0));
        assert!(matches!(downsample_28_to_7(&[0.0; 10]), Err(DataError::BadShape { .. })));
    }

    #[test]
    fn pooling_matches_double_loop() {
        let mut rng = crate::rng::stream_from_seed(6);
        let img: Vec<f64> = (0..784).map(|_| rng.random()).collect();
        let pooled = downsample_28_to_7(&img).unwrap();
        for br in 0..7 {
            for bc in 0..7 {
                let mut s = 0.0;
                for r in 0..4 {
                    for c in 0..4 {
                        s += img[(4 * br + r) * 28 + 4 * bc + c];
                    }
                }
                assert!((pooled[br * 7 + bc] - s / 16.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn store_csv_round_trip() {
        let store = MnistStore::new(vec![vec![0.25; 49], vec![0.5; 49]], vec![7, 2]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.csv");
        store.write_csv(std::fs::File::create(&path).unwrap()).unwrap();
        assert_eq!(MnistStore::read_csv(&path).unwrap(), store);
    }
}

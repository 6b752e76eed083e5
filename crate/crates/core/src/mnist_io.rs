//! MNIST IDX ingestion.
//!
//! Images stay as 8-bit originals in memory; conversion to reals happens at
//! feed time (see [`normalize_pixel`] and the `deform` module).
//!
//! IDX layout, all integers big-endian:
//!
//! ```text
//! images: magic 0x00000803 | n: u32 | rows: u32 | cols: u32 | n*rows*cols u8
//! labels: magic 0x00000801 | n: u32 | n u8
//! ```
//!
//! Files may also be gzip compressed; this is detected from the first two
//! bytes.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const ROWS: usize = 28;
pub const COLS: usize = 28;
pub const PIXELS: usize = ROWS * COLS;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("bad magic at offset {offset}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { offset: usize, expected: u32, found: u32 },
    #[error("truncated file: {field} at offset {offset} needs {needed} bytes, {available} available")]
    TruncatedFile {
        field: &'static str,
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("unexpected {field} at offset {offset}: expected {expected}, found {found}")]
    UnexpectedDims {
        field: &'static str,
        offset: usize,
        expected: u32,
        found: u32,
    },
    #[error("label {index} at offset {offset} is {value}, outside 0..=9")]
    LabelOutOfRange { index: usize, offset: usize, value: u8 },
    #[error("image file holds {images} entries but label file holds {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A 28x28 grayscale digit, row-major, 0 = background.
#[derive(Clone, PartialEq, Eq)]
pub struct RawImage(pub [u8; PIXELS]);

impl RawImage {
    pub fn blank() -> Self {
        RawImage([0; PIXELS])
    }

    pub fn from_slice(pixels: &[u8]) -> Option<Self> {
        <[u8; PIXELS]>::try_from(pixels).ok().map(RawImage)
    }

    pub fn pixels(&self) -> &[u8; PIXELS] {
        &self.0
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.0[row * COLS + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: u8) {
        self.0[row * COLS + col] = v;
    }

    pub fn is_blank(&self) -> bool {
        self.0.iter().all(|&p| p == 0)
    }
}

impl std::fmt::Debug for RawImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let ink = self.0.iter().filter(|&&p| p > 0).count();
        write!(f, "RawImage({ink} ink pixels)")
    }
}

/// A digit class in `0..=9`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label(u8);

impl Label {
    pub fn new(digit: u8) -> Option<Self> {
        (digit <= 9).then_some(Label(digit))
    }

    pub fn digit(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Images paired with labels, in file order. Immutable after load.
///
/// There is no separate validation split: the whole un-deformed training
/// set doubles as validation data because training only ever sees freshly
/// deformed copies.
#[derive(Debug, Clone)]
pub struct Dataset {
    images: Vec<RawImage>,
    labels: Vec<Label>,
    split: Split,
}

impl Dataset {
    pub fn new(images: Vec<RawImage>, labels: Vec<Label>, split: Split) -> Result<Self, IdxError> {
        if images.len() != labels.len() {
            return Err(IdxError::CountMismatch {
                images: images.len(),
                labels: labels.len(),
            });
        }
        Ok(Self { images, labels, split })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn images(&self) -> &[RawImage] {
        &self.images
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn get(&self, i: usize) -> (&RawImage, Label) {
        (&self.images[i], self.labels[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&RawImage, Label)> + '_ {
        self.images.iter().zip(self.labels.iter().copied())
    }

    /// First `n` samples (or all, if fewer).
    pub fn truncated(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            images: self.images[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            split: self.split,
        }
    }

    /// Per-class sample counts.
    pub fn class_counts(&self) -> [usize; 10] {
        let mut counts = [0; 10];
        for l in &self.labels {
            counts[l.index()] += 1;
        }
        counts
    }
}

/// `intensity / 127.5 - 1`, mapping 0 to -1 and 255 to +1.
#[inline]
pub fn normalize_pixel(intensity: u8) -> f32 {
    (intensity as f64 / 127.5 - 1.0) as f32
}

fn read_u32(bytes: &[u8], offset: usize, field: &'static str) -> Result<u32, IdxError> {
    let word = bytes.get(offset..offset + 4).ok_or(IdxError::TruncatedFile {
        field,
        offset,
        needed: 4,
        available: bytes.len().saturating_sub(offset),
    })?;
    Ok(u32::from_be_bytes(word.try_into().unwrap()))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<(), IdxError> {
    let found = read_u32(bytes, 0, "magic")?;
    if found != expected {
        return Err(IdxError::BadMagic { offset: 0, expected, found });
    }
    Ok(())
}

fn payload<'a>(bytes: &'a [u8], offset: usize, needed: usize, field: &'static str) -> Result<&'a [u8], IdxError> {
    let available = bytes.len().saturating_sub(offset);
    if available < needed {
        return Err(IdxError::TruncatedFile { field, offset, needed, available });
    }
    Ok(&bytes[offset..offset + needed])
}

/// Parses an IDX image container of 28x28 images.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<RawImage>, IdxError> {
    let bytes = maybe_gunzip(bytes)?;
    check_magic(&bytes, IMAGES_MAGIC)?;
    let n = read_u32(&bytes, 4, "image count")? as usize;
    let rows = read_u32(&bytes, 8, "rows")?;
    let cols = read_u32(&bytes, 12, "cols")?;
    if rows as usize != ROWS {
        return Err(IdxError::UnexpectedDims { field: "rows", offset: 8, expected: ROWS as u32, found: rows });
    }
    if cols as usize != COLS {
        return Err(IdxError::UnexpectedDims { field: "cols", offset: 12, expected: COLS as u32, found: cols });
    }
    let data = payload(&bytes, 16, n * PIXELS, "pixel payload")?;
    Ok(data
        .chunks_exact(PIXELS)
        .map(|c| RawImage(c.try_into().unwrap()))
        .collect())
}

/// Parses an IDX label container; every label must be a digit.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<Label>, IdxError> {
    let bytes = maybe_gunzip(bytes)?;
    check_magic(&bytes, LABELS_MAGIC)?;
    let n = read_u32(&bytes, 4, "label count")? as usize;
    let data = payload(&bytes, 8, n, "label payload")?;
    data.iter()
        .enumerate()
        .map(|(index, &value)| {
            Label::new(value).ok_or(IdxError::LabelOutOfRange { index, offset: 8 + index, value })
        })
        .collect()
}

fn maybe_gunzip(bytes: &[u8]) -> Result<std::borrow::Cow<'_, [u8]>, IdxError> {
    if bytes.starts_with(&GZIP_MAGIC) {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(bytes)
            .read_to_end(&mut out)
            .map_err(|source| IdxError::Io { path: PathBuf::from("<gzip stream>"), source })?;
        Ok(out.into())
    } else {
        Ok(bytes.into())
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, IdxError> {
    fs::read(path).map_err(|source| IdxError::Io { path: path.to_path_buf(), source })
}

/// Loads and zips an image file with its label file.
pub fn load_dataset(images_path: &Path, labels_path: &Path, split: Split) -> Result<Dataset, IdxError> {
    let images = parse_idx_images(&read_file(images_path)?)?;
    let labels = parse_idx_labels(&read_file(labels_path)?)?;
    Dataset::new(images, labels, split)
}

/// Environment variable naming the default MNIST directory.
pub const DATA_DIR_ENV: &str = "DMLP_DATA_DIR";

pub fn data_dir_from_env() -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// Loads both splits from a directory holding the canonical file names.
pub fn load_mnist(dir: &Path) -> Result<(Dataset, Dataset), IdxError> {
    let (ti, tl) = canonical_paths(dir, Split::Train);
    let (si, sl) = canonical_paths(dir, Split::Test);
    Ok((load_dataset(&ti, &tl, Split::Train)?, load_dataset(&si, &sl, Split::Test)?))
}

/// Canonical MNIST file names inside a data directory. A `.gz` sibling is
/// used when the uncompressed file is absent.
pub fn canonical_paths(dir: &Path, split: Split) -> (PathBuf, PathBuf) {
    let (img, lbl) = match split {
        Split::Train => ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
        Split::Test => ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
    };
    let pick = |name: &str| {
        let plain = dir.join(name);
        let gz = dir.join(format!("{name}.gz"));
        if !plain.exists() && gz.exists() {
            gz
        } else {
            plain
        }
    };
    (pick(img), pick(lbl))
}

/// Writers for small synthetic IDX files, used by tests and examples.
pub mod fixture {
    use super::*;
    use rand::Rng;

    pub fn images_to_idx(images: &[RawImage]) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + images.len() * PIXELS);
        out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        out.extend_from_slice(&(images.len() as u32).to_be_bytes());
        out.extend_from_slice(&(ROWS as u32).to_be_bytes());
        out.extend_from_slice(&(COLS as u32).to_be_bytes());
        for img in images {
            out.extend_from_slice(&img.0);
        }
        out
    }

    pub fn labels_to_idx(labels: &[Label]) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + labels.len());
        out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        out.extend(labels.iter().map(|l| l.digit()));
        out
    }

    pub fn gzip(bytes: &[u8]) -> Vec<u8> {
        use std::io::Write;
        let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::fast());
        enc.write_all(bytes).unwrap();
        enc.finish().unwrap()
    }

    /// A crude but learnable digit: a thick stroke whose placement and
    /// orientation depend on the class, with jitter.
    pub fn synthetic_digit(rng: &mut impl Rng, digit: u8) -> RawImage {
        let mut img = RawImage::blank();
        let d = digit as i32;
        let jx = rng.random_range(-2..=2);
        let jy = rng.random_range(-2..=2);
        // Ten distinguishable stroke patterns on a 3x4 grid of anchors.
        let cx = 6 + (d % 4) * 5 + jx;
        let cy = 6 + (d / 4) * 6 + jy;
        let horizontal = d % 2 == 0;
        for t in -5..=5 {
            for w in -1..=1 {
                let (x, y) = if horizontal { (cx + t, cy + w) } else { (cx + w, cy + t) };
                if (0..COLS as i32).contains(&x) && (0..ROWS as i32).contains(&y) {
                    let v = 200u8.saturating_add(rng.random_range(0..56));
                    img.set(y as usize, x as usize, v);
                }
            }
        }
        img
    }

    /// `n` synthetic samples with labels cycling through 0..=9.
    pub fn synthetic_dataset(rng: &mut impl Rng, n: usize, split: Split) -> Dataset {
        let labels: Vec<Label> = (0..n).map(|i| Label::new((i % 10) as u8).unwrap()).collect();
        let images = labels.iter().map(|l| synthetic_digit(rng, l.digit())).collect();
        Dataset::new(images, labels, split).unwrap()
    }

    /// Writes `ds` as an (images, labels) IDX pair into `dir` under the
    /// canonical MNIST names.
    pub fn write_dataset(dir: &Path, ds: &Dataset) -> std::io::Result<(PathBuf, PathBuf)> {
        let (img, lbl) = canonical_paths(dir, ds.split());
        fs::write(&img, images_to_idx(ds.images()))?;
        fs::write(&lbl, labels_to_idx(ds.labels()))?;
        Ok((img, lbl))
    }
}

#[cfg(test)]
mod tests {
    use super::fixture::*;
    use super::*;
    use proptest::prelude::*;

    fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
        let mut v = magic.to_be_bytes().to_vec();
        for d in dims {
            v.extend_from_slice(&d.to_be_bytes());
        }
        v
    }

    #[test]
    fn normalize_endpoints() {
        assert_eq!(normalize_pixel(0), -1.0);
        assert_eq!(normalize_pixel(255), 1.0);
        assert!((normalize_pixel(51) - (-0.6)).abs() < 1e-7);
    }

    #[test]
    fn normalize_is_strictly_monotone_and_bounded() {
        for v in 0..=255u8 {
            let x = normalize_pixel(v);
            assert!((-1.0..=1.0).contains(&x));
            if v > 0 {
                assert!(x > normalize_pixel(v - 1));
            }
        }
    }

    #[test]
    fn empty_image_file() {
        let bytes = header(IMAGES_MAGIC, &[0, 28, 28]);
        assert!(parse_idx_images(&bytes).unwrap().is_empty());
    }

    #[test]
    fn truncated_image_payload() {
        let mut bytes = header(IMAGES_MAGIC, &[2, 28, 28]);
        bytes.extend(std::iter::repeat(7u8).take(PIXELS));
        match parse_idx_images(&bytes) {
            Err(IdxError::TruncatedFile { offset: 16, needed, available, .. }) => {
                assert_eq!(needed, 2 * PIXELS);
                assert_eq!(available, PIXELS);
            }
            other => panic!("expected TruncatedFile, got {other:?}"),
        }
    }

    #[test]
    fn truncated_header() {
        let bytes = &header(IMAGES_MAGIC, &[2, 28])[..];
        assert!(matches!(
            parse_idx_images(bytes),
            Err(IdxError::TruncatedFile { field: "cols", offset: 12, .. })
        ));
    }

    #[test]
    fn bad_magic_names_offset() {
        let bytes = header(LABELS_MAGIC, &[0, 28, 28]);
        assert!(matches!(
            parse_idx_images(&bytes),
            Err(IdxError::BadMagic { offset: 0, expected: IMAGES_MAGIC, found: LABELS_MAGIC })
        ));
    }

    #[test]
    fn unexpected_dims() {
        let bytes = header(IMAGES_MAGIC, &[0, 32, 28]);
        assert!(matches!(
            parse_idx_images(&bytes),
            Err(IdxError::UnexpectedDims { field: "rows", offset: 8, found: 32, .. })
        ));
        let bytes = header(IMAGES_MAGIC, &[0, 28, 27]);
        assert!(matches!(parse_idx_images(&bytes), Err(IdxError::UnexpectedDims { field: "cols", .. })));
    }

    #[test]
    fn single_label() {
        let mut bytes = header(LABELS_MAGIC, &[1]);
        bytes.push(0x07);
        assert_eq!(parse_idx_labels(&bytes).unwrap(), vec![Label::new(7).unwrap()]);
    }

    #[test]
    fn label_out_of_range() {
        let mut bytes = header(LABELS_MAGIC, &[2]);
        bytes.extend([3, 0x0b]);
        assert!(matches!(
            parse_idx_labels(&bytes),
            Err(IdxError::LabelOutOfRange { index: 1, offset: 9, value: 11 })
        ));
    }

    #[test]
    fn count_mismatch() {
        let mut rng = crate::rng::Streams::new(3).stream(crate::rng::Purpose::Synthetic, 0, 0);
        let ten = synthetic_dataset(&mut rng, 10, Split::Train);
        let err = Dataset::new(ten.images().to_vec(), ten.labels()[..9].to_vec(), Split::Train).unwrap_err();
        assert!(matches!(err, IdxError::CountMismatch { images: 10, labels: 9 }));
    }

    #[test]
    fn gzip_is_sniffed() {
        let mut rng = crate::rng::Streams::new(5).stream(crate::rng::Purpose::Synthetic, 0, 0);
        let ds = synthetic_dataset(&mut rng, 4, Split::Test);
        let gz = gzip(&images_to_idx(ds.images()));
        assert_eq!(parse_idx_images(&gz).unwrap(), ds.images());
        let gz = gzip(&labels_to_idx(ds.labels()));
        assert_eq!(parse_idx_labels(&gz).unwrap(), ds.labels());
    }

    #[test]
    fn load_from_disk_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = crate::rng::Streams::new(9).stream(crate::rng::Purpose::Synthetic, 0, 0);
        let ds = synthetic_dataset(&mut rng, 12, Split::Train);
        let (img, lbl) = write_dataset(dir.path(), &ds).unwrap();
        let back = load_dataset(&img, &lbl, Split::Train).unwrap();
        assert_eq!(back.images(), ds.images());
        assert_eq!(back.labels(), ds.labels());

        let missing = dir.path().join("nope");
        let err = load_dataset(&img, &missing, Split::Train).unwrap_err();
        assert!(err.to_string().contains("nope"));
    }

    proptest! {
        #[test]
        fn idx_roundtrip_preserves_pairs(
            raw in prop::collection::vec((prop::collection::vec(any::<u8>(), PIXELS), 0u8..10), 0..6)
        ) {
            let images: Vec<RawImage> = raw.iter().map(|(p, _)| RawImage::from_slice(p).unwrap()).collect();
            let labels: Vec<Label> = raw.iter().map(|(_, l)| Label::new(*l).unwrap()).collect();
            let back_i = parse_idx_images(&images_to_idx(&images)).unwrap();
            let back_l = parse_idx_labels(&labels_to_idx(&labels)).unwrap();
            prop_assert_eq!(back_i, images);
            prop_assert_eq!(back_l, labels);
        }
    }
}

//! MNIST ingestion: IDX parsing, pixel normalization, grid downsampling and
//! the train/validation/test split.
//!
//! IDX layout (all header words big-endian `u32`):
//!
//! ```text
//! images: magic 0x00000803, count, rows, cols, then count*rows*cols bytes
//! labels: magic 0x00000801, count, then count bytes
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Side length of an MNIST image.
pub const MNIST_SIDE: usize = 28;
pub const MNIST_DIM: usize = MNIST_SIDE * MNIST_SIDE;
/// Side length of the downsampled grid.
pub const GRID_SIDE: usize = 8;
pub const GRID_DIM: usize = GRID_SIDE * GRID_SIDE;
pub const NUM_CLASSES: usize = 10;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic number 0x{found:08x} (expected 0x{expected:08x})")]
    BadMagic {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("{path}: truncated payload ({found} bytes, expected {expected})")]
    Truncated {
        path: PathBuf,
        found: usize,
        expected: usize,
    },
    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {label} at record {index} is outside 0..=9")]
    BadLabel { index: usize, label: u8 },
    #[error("feature vector has dimension {found}, expected {expected}")]
    Dimension { found: usize, expected: usize },
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("split requests {requested} records but only {available} are available")]
    SplitBounds { requested: usize, available: usize },
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// Raw 8-bit images with their digit labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledImageSet {
    pub rows: usize,
    pub cols: usize,
    /// Row-major pixels, `count * rows * cols` bytes.
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl LabeledImageSet {
    pub fn count(&self) -> usize {
        self.labels.len()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..(i + 1) * n]
    }

    /// Keep the given records, in the given order.
    pub fn select(&self, indices: &[usize]) -> LabeledImageSet {
        let mut pixels = Vec::with_capacity(indices.len() * self.rows * self.cols);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            pixels.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        LabeledImageSet {
            rows: self.rows,
            cols: self.cols,
            pixels,
            labels,
        }
    }
}

/// Row-major matrix of features in `[0, 1]` with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub dim: usize,
    pub values: Vec<f64>,
    pub labels: Vec<u8>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    /// First `n` records (or all of them if fewer).
    pub fn head(&self, n: usize) -> FeatureSet {
        let n = n.min(self.len());
        FeatureSet {
            dim: self.dim,
            values: self.values[..n * self.dim].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }
}

/// Pixel rows and columns kept by the 28x28 -> 8x8 downsampler.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub row_indices: Vec<usize>,
    pub col_indices: Vec<usize>,
}

impl GridSpec {
    /// Uniform grid over rows and columns 6..=21, the stroke-bearing
    /// interior of the MNIST frame.
    pub fn digit_box() -> Self {
        let idx = vec![6, 8, 10, 12, 15, 17, 19, 21];
        GridSpec {
            row_indices: idx.clone(),
            col_indices: idx,
        }
    }

    /// Uniform grid over the whole 28-pixel frame, one pixel near the
    /// center of each 3.5-pixel cell.
    pub fn full_frame() -> Self {
        let idx = vec![2, 5, 9, 12, 16, 19, 23, 26];
        GridSpec {
            row_indices: idx.clone(),
            col_indices: idx,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (axis, idx) in [("row", &self.row_indices), ("col", &self.col_indices)] {
            if idx.len() != GRID_SIDE {
                return Err(DatasetError::Grid(format!(
                    "{axis} axis has {} indices, expected {GRID_SIDE}",
                    idx.len()
                )));
            }
            if idx.windows(2).any(|w| w[0] >= w[1]) {
                return Err(DatasetError::Grid(format!(
                    "{axis} indices must be strictly increasing"
                )));
            }
            if idx.iter().any(|&i| i >= MNIST_SIDE) {
                return Err(DatasetError::Grid(format!(
                    "{axis} index out of range 0..{MNIST_SIDE}"
                )));
            }
        }
        Ok(())
    }

    /// Source pixel index (in the 784-vector) of each output feature.
    pub fn source_pixels(&self) -> Vec<usize> {
        self.row_indices
            .iter()
            .flat_map(|&r| self.col_indices.iter().map(move |&c| r * MNIST_SIDE + c))
            .collect()
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::digit_box()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_count: usize,
    pub val_count: usize,
    pub shuffle_seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_count: 45_000,
            val_count: 15_000,
            shuffle_seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits<T> {
    pub train: T,
    pub validation: T,
    pub test: T,
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn be_u32(bytes: &[u8], word: usize) -> u32 {
    let o = word * 4;
    u32::from_be_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]])
}

fn parse_header(path: &Path, bytes: &[u8], magic: u32, words: usize) -> Result<Vec<usize>> {
    if bytes.len() < 4 {
        return Err(DatasetError::Truncated {
            path: path.to_path_buf(),
            found: bytes.len(),
            expected: words * 4,
        });
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(DatasetError::BadMagic {
            path: path.to_path_buf(),
            found,
            expected: magic,
        });
    }
    if bytes.len() < words * 4 {
        return Err(DatasetError::Truncated {
            path: path.to_path_buf(),
            found: bytes.len(),
            expected: words * 4,
        });
    }
    Ok((1..words).map(|w| be_u32(bytes, w) as usize).collect())
}

/// Parse an IDX3 image file from memory.
pub fn parse_idx_images(path: &Path, bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let dims = parse_header(path, bytes, IMAGE_MAGIC, 4)?;
    let (count, rows, cols) = (dims[0], dims[1], dims[2]);
    let expected = 16 + count * rows * cols;
    if bytes.len() < expected {
        return Err(DatasetError::Truncated {
            path: path.to_path_buf(),
            found: bytes.len(),
            expected,
        });
    }
    Ok((rows, cols, bytes[16..expected].to_vec()))
}

/// Parse an IDX1 label file from memory.
pub fn parse_idx_labels(path: &Path, bytes: &[u8]) -> Result<Vec<u8>> {
    let dims = parse_header(path, bytes, LABEL_MAGIC, 2)?;
    let count = dims[0];
    let expected = 8 + count;
    if bytes.len() < expected {
        return Err(DatasetError::Truncated {
            path: path.to_path_buf(),
            found: bytes.len(),
            expected,
        });
    }
    let labels = bytes[8..expected].to_vec();
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= NUM_CLASSES) {
        return Err(DatasetError::BadLabel { index, label });
    }
    Ok(labels)
}

/// Load an image file and its label file, cross-checking record counts.
pub fn load_idx(images: &Path, labels: &Path) -> Result<LabeledImageSet> {
    let image_bytes = read_file(images)?;
    let label_bytes = read_file(labels)?;
    let (rows, cols, pixels) = parse_idx_images(images, &image_bytes)?;
    let labels = parse_idx_labels(labels, &label_bytes)?;
    let n_images = pixels.len().checked_div(rows * cols).unwrap_or(0);
    if n_images != labels.len() {
        return Err(DatasetError::CountMismatch {
            images: n_images,
            labels: labels.len(),
        });
    }
    Ok(LabeledImageSet {
        rows,
        cols,
        pixels,
        labels,
    })
}

/// Standard file names of the four MNIST files inside `dir`.
#[derive(Debug, Clone)]
pub struct MnistPaths {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl MnistPaths {
    pub fn in_dir(dir: &Path) -> Self {
        MnistPaths {
            train_images: dir.join("train-images-idx3-ubyte"),
            train_labels: dir.join("train-labels-idx1-ubyte"),
            test_images: dir.join("t10k-images-idx3-ubyte"),
            test_labels: dir.join("t10k-labels-idx1-ubyte"),
        }
    }

    /// Returns `(train, test)`.
    pub fn load(&self) -> Result<(LabeledImageSet, LabeledImageSet)> {
        let train = load_idx(&self.train_images, &self.train_labels)?;
        let test = load_idx(&self.test_images, &self.test_labels)?;
        Ok((train, test))
    }
}

/// Map every pixel `p` to `p / 255`.
pub fn normalize(set: &LabeledImageSet) -> FeatureSet {
    FeatureSet {
        dim: set.rows * set.cols,
        values: set.pixels.iter().map(|&p| f64::from(p) / 255.0).collect(),
        labels: set.labels.clone(),
    }
}

/// Keep the pixels at the grid intersections: `out[i*8 + j] = v[row[i]*28 + col[j]]`.
pub fn downsample(v: &[f64], grid: &GridSpec) -> Result<Vec<f64>> {
    if v.len() != MNIST_DIM {
        return Err(DatasetError::Dimension {
            found: v.len(),
            expected: MNIST_DIM,
        });
    }
    grid.validate()?;
    Ok(grid.source_pixels().into_iter().map(|p| v[p]).collect())
}

pub fn downsample_set(set: &FeatureSet, grid: &GridSpec) -> Result<FeatureSet> {
    if set.dim != MNIST_DIM {
        return Err(DatasetError::Dimension {
            found: set.dim,
            expected: MNIST_DIM,
        });
    }
    grid.validate()?;
    let src = grid.source_pixels();
    let mut values = Vec::with_capacity(set.len() * src.len());
    for row in set.rows() {
        values.extend(src.iter().map(|&p| row[p]));
    }
    Ok(FeatureSet {
        dim: src.len(),
        values,
        labels: set.labels.clone(),
    })
}

/// Shuffle the training records with a seeded ChaCha8 stream and cut them
/// into train and validation; the test set is passed through untouched.
pub fn split(
    train: &LabeledImageSet,
    test: &LabeledImageSet,
    spec: &SplitSpec,
) -> Result<Splits<LabeledImageSet>> {
    let requested = spec.train_count + spec.val_count;
    if requested > train.count() {
        return Err(DatasetError::SplitBounds {
            requested,
            available: train.count(),
        });
    }
    let mut order: Vec<usize> = (0..train.count()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.shuffle_seed);
    order.shuffle(&mut rng);
    Ok(Splits {
        train: train.select(&order[..spec.train_count]),
        validation: train.select(&order[spec.train_count..requested]),
        test: test.clone(),
    })
}

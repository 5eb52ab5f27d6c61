//! Dataset container, IDX ingestion, and the synthetic Gaussian-mixture
//! generator the desk-scale protocols run on.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::net::Batch;
use crate::scalar::Scalar;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// A labelled dataset: row-major inputs in `[0, 1]`-ish range and one class
/// index per row.
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    pub inputs: Matrix<T>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(inputs: Matrix<T>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "Dataset::new",
                expected: inputs.rows(),
                actual: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Domain {
                context: "Dataset::new",
                message: format!("label {bad} outside 0..{num_classes}"),
            });
        }
        Ok(Self {
            inputs,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    /// Copy of the first `n` examples (all if `n` exceeds the length).
    pub fn take(&self, n: usize) -> Dataset<T> {
        let n = n.min(self.len());
        let data = self.inputs.data()[..n * self.input_dim()].to_vec();
        Dataset {
            inputs: Matrix::from_vec(n, self.input_dim(), data).expect("prefix copy"),
            labels: self.labels[..n].to_vec(),
            num_classes: self.num_classes,
        }
    }

    /// Copy of the rows at `indices`.
    pub fn select(&self, indices: &[usize]) -> Dataset<T> {
        let mut data = Vec::with_capacity(indices.len() * self.input_dim());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.inputs.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            inputs: Matrix::from_vec(indices.len(), self.input_dim(), data).expect("row gather"),
            labels,
            num_classes: self.num_classes,
        }
    }

    /// Rows whose label passes the filter, keeping the global label space.
    pub fn filter_labels(&self, keep: &[usize]) -> Dataset<T> {
        let indices: Vec<usize> = self
            .labels
            .iter()
            .enumerate()
            .filter(|(_, l)| keep.contains(l))
            .map(|(i, _)| i)
            .collect();
        self.select(&indices)
    }

    /// The whole dataset as one batch.
    pub fn to_batch(&self) -> Result<Batch<T>> {
        Batch::new(self.inputs.clone(), self.labels.clone())
    }

    /// Batch of the rows at `indices`.
    pub fn batch_of(&self, indices: &[usize]) -> Result<Batch<T>> {
        let selected = self.select(indices);
        Batch::new(selected.inputs, selected.labels)
    }

    pub fn extend(&mut self, other: &Dataset<T>) -> Result<()> {
        if other.input_dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "Dataset::extend",
                expected: self.input_dim(),
                actual: other.input_dim(),
            });
        }
        let mut data = self.inputs.data().to_vec();
        data.extend_from_slice(other.inputs.data());
        let rows = self.labels.len() + other.labels.len();
        self.inputs = Matrix::from_vec(rows, other.input_dim(), data)?;
        self.labels.extend_from_slice(&other.labels);
        self.num_classes = self.num_classes.max(other.num_classes);
        Ok(())
    }
}

fn read_u32_be(bytes: &[u8], offset: usize) -> Result<u32> {
    let end = offset + 4;
    if end > bytes.len() {
        return Err(Error::Format {
            offset,
            message: format!("truncated file: needed 4 bytes, have {}", bytes.len() - offset),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Load an IDX image/label file pair: big-endian magic `0x00000803` /
/// `0x00000801`, row-major flattening, pixels scaled by `1/255`.
pub fn load_idx_dataset<T: Scalar>(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<Dataset<T>> {
    let images = fs::read(images_path)?;
    let labels = fs::read(labels_path)?;

    let magic = read_u32_be(&images, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        });
    }
    let count = read_u32_be(&images, 4)? as usize;
    let height = read_u32_be(&images, 8)? as usize;
    let width = read_u32_be(&images, 12)? as usize;
    if count == 0 {
        return Err(Error::Format {
            offset: 4,
            message: "image count is zero".into(),
        });
    }
    let pixels = count * height * width;
    if images.len() < 16 + pixels {
        return Err(Error::Format {
            offset: images.len(),
            message: format!("truncated image data: expected {} bytes", 16 + pixels),
        });
    }

    let lmagic = read_u32_be(&labels, 0)?;
    if lmagic != IDX_LABELS_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad label magic {lmagic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        });
    }
    let lcount = read_u32_be(&labels, 4)? as usize;
    if lcount != count {
        return Err(Error::Format {
            offset: 4,
            message: format!("label count {lcount} does not match image count {count}"),
        });
    }
    if labels.len() < 8 + lcount {
        return Err(Error::Format {
            offset: labels.len(),
            message: format!("truncated label data: expected {} bytes", 8 + lcount),
        });
    }

    let scale = T::cast(1.0 / 255.0);
    let data: Vec<T> = images[16..16 + pixels]
        .iter()
        .map(|&b| T::cast(b as f64) * scale)
        .collect();
    let label_vec: Vec<usize> = labels[8..8 + lcount].iter().map(|&b| b as usize).collect();
    let num_classes = label_vec.iter().max().map_or(1, |&m| m + 1);
    Dataset::new(Matrix::from_vec(count, height * width, data)?, label_vec, num_classes)
}

/// Class means placed on a seeded sphere of `mean_radius`.
pub fn gaussian_class_means(
    classes: usize,
    dim: usize,
    mean_radius: f64,
    rng: &mut ChaCha12Rng,
) -> Vec<Vec<f64>> {
    let mut means = Vec::with_capacity(classes);
    for _ in 0..classes {
        let raw: Vec<f64> = (0..dim).map(|_| f64::standard_normal(rng)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        means.push(raw.into_iter().map(|v| v * mean_radius / norm).collect::<Vec<f64>>());
    }
    means
}

/// Balanced sample from a Gaussian mixture with the given means and
/// isotropic noise scale; labels round-robin, rows shuffled.
pub fn sample_gaussian_mixture<T: Scalar>(
    means: &[Vec<f64>],
    covariance_scale: f64,
    n: usize,
    rng: &mut ChaCha12Rng,
) -> Result<Dataset<T>> {
    let classes = means.len();
    let dim = means.first().map_or(0, Vec::len);
    if classes == 0 || dim == 0 || n == 0 {
        return Err(Error::Config(
            "mixture sampling needs classes, dim and n >= 1".into(),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    // Fisher-Yates so class blocks interleave
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }

    let mut data = vec![T::zero(); n * dim];
    let mut labels = vec![0usize; n];
    for (slot, &i) in order.iter().enumerate() {
        let class = i % classes;
        labels[slot] = class;
        let row = &mut data[slot * dim..(slot + 1) * dim];
        for (v, &mu) in row.iter_mut().zip(&means[class]) {
            *v = T::cast(mu + covariance_scale * f64::standard_normal(rng));
        }
    }
    Dataset::new(Matrix::from_vec(n, dim, data)?, labels, classes)
}

/// Balanced Gaussian mixture with means and samples drawn from one stream.
pub fn synthetic_gaussian_dataset<T: Scalar>(
    classes: usize,
    dim: usize,
    n: usize,
    mean_radius: f64,
    covariance_scale: f64,
    rng: &mut ChaCha12Rng,
) -> Result<Dataset<T>> {
    if classes == 0 || dim == 0 {
        return Err(Error::Config(
            "synthetic dataset needs classes and dim >= 1".into(),
        ));
    }
    let means = gaussian_class_means(classes, dim, mean_radius, rng);
    sample_gaussian_mixture(&means, covariance_scale, n, rng)
}

/// Reorder every input row by `perm`: output column `j` takes input column
/// `perm[j]`.
pub fn permute_columns<T: Scalar>(inputs: &Matrix<T>, perm: &[usize]) -> Result<Matrix<T>> {
    if perm.len() != inputs.cols() {
        return Err(Error::DimensionMismatch {
            context: "permute_columns",
            expected: inputs.cols(),
            actual: perm.len(),
        });
    }
    let mut out = Matrix::zeros(inputs.rows(), inputs.cols());
    for i in 0..inputs.rows() {
        let src = inputs.row(i);
        let dst = out.row_mut(i);
        for (j, &p) in perm.iter().enumerate() {
            dst[j] = src[p];
        }
    }
    Ok(out)
}

/// Rotate square images by `angle` degrees about their center with bilinear
/// interpolation; samples outside the source are zero. Requires the input
/// width to be a perfect square.
pub fn rotate_square_images<T: Scalar>(inputs: &Matrix<T>, angle_degrees: f64) -> Result<Matrix<T>> {
    let dim = inputs.cols();
    let side = (dim as f64).sqrt().round() as usize;
    if side * side != dim {
        return Err(Error::Domain {
            context: "rotate_square_images",
            message: format!("input width {dim} is not a perfect square"),
        });
    }
    let theta = angle_degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let center = (side as f64 - 1.0) / 2.0;
    let mut out = Matrix::zeros(inputs.rows(), dim);
    for i in 0..inputs.rows() {
        let src = inputs.row(i);
        let dst = out.row_mut(i);
        for r in 0..side {
            for c in 0..side {
                // inverse map: rotate the destination coordinate backwards
                let y = r as f64 - center;
                let x = c as f64 - center;
                let sx = cos * x + sin * y + center;
                let sy = -sin * x + cos * y + center;
                let x0 = sx.floor();
                let y0 = sy.floor();
                let fx = sx - x0;
                let fy = sy - y0;
                let mut acc = 0.0;
                for (dy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
                    for (dx, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
                        let px = x0 + dx;
                        let py = y0 + dy;
                        if px >= 0.0 && py >= 0.0 && (px as usize) < side && (py as usize) < side {
                            let v = src[py as usize * side + px as usize].to_f64();
                            acc += wx * wy * v;
                        }
                    }
                }
                dst[r * side + c] = T::cast(acc);
            }
        }
    }
    Ok(out)
}

//! Datasets: IDX loading, synthetic generators, batch sampling.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::{stream_rng, STREAM_DATA};
use crate::{Error, Result};

const IDX_MAGIC_IMAGES: u32 = 0x0000_0803;
const IDX_MAGIC_LABELS: u32 = 0x0000_0801;

/// An immutable dataset: row-major features plus one label per row.
/// Labels are class indices (stored as f64) or regression targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    features: Vec<f64>,
    labels: Vec<f64>,
    feature_dim: usize,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Vec<f64>, labels: Vec<f64>, feature_dim: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyInput("dataset must have at least one sample".into()));
        }
        if features.len() != labels.len() * feature_dim {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * feature_dim,
                got: features.len(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) || labels.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "dataset contents".into(),
            });
        }
        Ok(Dataset {
            name: name.into(),
            features,
            labels,
            feature_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn sample(&self, i: usize) -> (&[f64], f64) {
        (
            &self.features[i * self.feature_dim..(i + 1) * self.feature_dim],
            self.labels[i],
        )
    }

    pub fn samples(&self) -> impl Iterator<Item = (&[f64], f64)> {
        (0..self.len()).map(move |i| self.sample(i))
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Number of distinct class labels, assuming integer labels 0..K-1.
    pub fn num_classes(&self) -> usize {
        self.labels.iter().map(|&y| y as usize).max().unwrap_or(0) + 1
    }

    /// First `n` samples by index.
    pub fn take_prefix(&self, n: usize) -> Result<Dataset> {
        if n == 0 || n > self.len() {
            return Err(Error::InvalidArgument(format!(
                "prefix size {n} out of range 1..={}",
                self.len()
            )));
        }
        Dataset::new(
            format!("{}[..{}]", self.name, n),
            self.features[..n * self.feature_dim].to_vec(),
            self.labels[..n].to_vec(),
            self.feature_dim,
        )
    }

    /// Copy with i.i.d. Gaussian noise of the given std added to every
    /// label. `std = 0` returns an unchanged copy.
    pub fn with_noisy_labels(&self, std: f64, seed: u64) -> Result<Dataset> {
        if !(std >= 0.0 && std.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "label noise std must be nonnegative and finite, got {std}"
            )));
        }
        let mut rng = stream_rng(seed, STREAM_DATA);
        let labels = self
            .labels
            .iter()
            .map(|&y| {
                y + std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
            })
            .collect();
        Dataset::new(
            format!("{}+noise", self.name),
            self.features.clone(),
            labels,
            self.feature_dim,
        )
    }

    /// Seeded split into (1-holdout, holdout) fractions.
    pub fn split(&self, holdout_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
            return Err(Error::InvalidArgument(
                "holdout_fraction must lie in (0, 1)".into(),
            ));
        }
        let n = self.len();
        let n_holdout = ((n as f64) * holdout_fraction).round() as usize;
        if n_holdout == 0 || n_holdout == n {
            return Err(Error::InvalidArgument("split would leave an empty side".into()));
        }
        let mut indices: Vec<usize> = (0..n).collect();
        let mut rng = stream_rng(seed, crate::rng::STREAM_SPLIT);
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            indices.swap(i, j);
        }
        let build = |idx: &[usize], tag: &str| -> Result<Dataset> {
            let mut features = Vec::with_capacity(idx.len() * self.feature_dim);
            let mut labels = Vec::with_capacity(idx.len());
            for &i in idx {
                let (x, y) = self.sample(i);
                features.extend_from_slice(x);
                labels.push(y);
            }
            Dataset::new(format!("{}-{tag}", self.name), features, labels, self.feature_dim)
        };
        Ok((
            build(&indices[n_holdout..], "train")?,
            build(&indices[..n_holdout], "holdout")?,
        ))
    }
}

fn read_be_u32(bytes: &[u8], offset: usize, path: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::BadIdx {
            path: path.to_string(),
            reason: "truncated header".into(),
        })
}

/// Loads an IDX image/label file pair (big-endian, magic 0x00000803 for
/// images and 0x00000801 for labels). Pixels are scaled to [0, 1].
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img_bytes = fs::read(images_path)?;
    let lbl_bytes = fs::read(labels_path)?;
    let img_name = images_path.display().to_string();
    let lbl_name = labels_path.display().to_string();

    let magic = read_be_u32(&img_bytes, 0, &img_name)?;
    if magic != IDX_MAGIC_IMAGES {
        return Err(Error::BadIdx {
            path: img_name,
            reason: format!("bad magic 0x{magic:08x}, expected 0x{IDX_MAGIC_IMAGES:08x}"),
        });
    }
    let n_images = read_be_u32(&img_bytes, 4, &img_name)? as usize;
    let rows = read_be_u32(&img_bytes, 8, &img_name)? as usize;
    let cols = read_be_u32(&img_bytes, 12, &img_name)? as usize;
    let pixels = rows * cols;
    if img_bytes.len() != 16 + n_images * pixels {
        return Err(Error::BadIdx {
            path: img_name,
            reason: format!(
                "expected {} data bytes, found {}",
                n_images * pixels,
                img_bytes.len().saturating_sub(16)
            ),
        });
    }

    let magic = read_be_u32(&lbl_bytes, 0, &lbl_name)?;
    if magic != IDX_MAGIC_LABELS {
        return Err(Error::BadIdx {
            path: lbl_name,
            reason: format!("bad magic 0x{magic:08x}, expected 0x{IDX_MAGIC_LABELS:08x}"),
        });
    }
    let n_labels = read_be_u32(&lbl_bytes, 4, &lbl_name)? as usize;
    if n_labels != n_images {
        return Err(Error::BadIdx {
            path: lbl_name,
            reason: format!("label count {n_labels} != image count {n_images}"),
        });
    }
    if lbl_bytes.len() != 8 + n_labels {
        return Err(Error::BadIdx {
            path: lbl_name,
            reason: "truncated label data".into(),
        });
    }

    let features: Vec<f64> = img_bytes[16..].iter().map(|&b| b as f64 / 255.0).collect();
    let labels: Vec<f64> = lbl_bytes[8..].iter().map(|&b| b as f64).collect();
    Dataset::new(
        images_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "idx".into()),
        features,
        labels,
        pixels,
    )
}

/// Writes a dataset back out as an IDX image/label pair (values clamped to
/// [0, 1] and quantized to bytes). Used for fixtures and subset exports.
pub fn write_idx(dataset: &Dataset, rows: usize, cols: usize, images_path: &Path, labels_path: &Path) -> Result<()> {
    if rows * cols != dataset.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: dataset.feature_dim(),
            got: rows * cols,
        });
    }
    let n = dataset.len() as u32;
    let mut img = Vec::with_capacity(16 + dataset.features.len());
    img.extend_from_slice(&IDX_MAGIC_IMAGES.to_be_bytes());
    img.extend_from_slice(&n.to_be_bytes());
    img.extend_from_slice(&(rows as u32).to_be_bytes());
    img.extend_from_slice(&(cols as u32).to_be_bytes());
    img.extend(
        dataset
            .features
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    let mut lbl = Vec::with_capacity(8 + dataset.labels.len());
    lbl.extend_from_slice(&IDX_MAGIC_LABELS.to_be_bytes());
    lbl.extend_from_slice(&n.to_be_bytes());
    lbl.extend(dataset.labels.iter().map(|&y| y as u8));
    fs::write(images_path, img)?;
    fs::write(labels_path, lbl)?;
    Ok(())
}

/// Synthetic dataset families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SyntheticKind {
    /// Linear-regression data whose ERM objective is an exact quadratic
    /// with the requested Hessian condition number (eigenvalues spaced
    /// linearly from 1 to condition_number).
    QuadraticBowl { condition_number: f64 },
    /// Gaussian class blobs for logistic models.
    LogisticBlobs { num_classes: usize, separation: f64 },
    /// y = <x, w*> + Gaussian noise.
    LinearNoise { noise_std: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    #[serde(flatten)]
    pub kind: SyntheticKind,
    pub n: usize,
    pub dim: usize,
    pub seed: u64,
}

/// Deterministically generates a dataset from the spec.
pub fn generate(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.n == 0 || spec.dim == 0 {
        return Err(Error::InvalidArgument("n and dim must be positive".into()));
    }
    let mut rng = stream_rng(spec.seed, STREAM_DATA);
    match &spec.kind {
        SyntheticKind::QuadraticBowl { condition_number } => {
            let kappa = *condition_number;
            if kappa < 1.0 {
                return Err(Error::InvalidArgument(
                    "condition_number must be >= 1".into(),
                ));
            }
            // One axis-aligned sample per row: sample i exercises coordinate
            // j = i mod d with magnitude chosen so the empirical Hessian
            // (1/N) sum x x^T is exactly diag(lambda), lambda_j in [1, kappa].
            let d = spec.dim;
            let n = spec.n;
            let w_star: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut counts = vec![0usize; d];
            for i in 0..n {
                counts[i % d] += 1;
            }
            if counts.iter().any(|&c| c == 0) {
                return Err(Error::InvalidArgument(
                    "quadratic bowl needs n >= dim".into(),
                ));
            }
            let mut features = vec![0.0; n * d];
            let mut labels = vec![0.0; n];
            for i in 0..n {
                let j = i % d;
                let lambda = if d == 1 {
                    kappa
                } else {
                    1.0 + (kappa - 1.0) * j as f64 / (d - 1) as f64
                };
                let scale = (lambda * n as f64 / counts[j] as f64).sqrt();
                features[i * d + j] = scale;
                labels[i] = scale * w_star[j];
            }
            Dataset::new("quadratic-bowl", features, labels, d)
        }
        SyntheticKind::LogisticBlobs {
            num_classes,
            separation,
        } => {
            let k = *num_classes;
            if k < 2 {
                return Err(Error::InvalidArgument("num_classes must be >= 2".into()));
            }
            if !(*separation > 0.0) {
                return Err(Error::InvalidArgument("separation must be positive".into()));
            }
            let centers: Vec<Vec<f64>> = (0..k)
                .map(|_| {
                    (0..spec.dim)
                        .map(|_| {
                            separation
                                * <StandardNormal as Distribution<f64>>::sample(
                                    &StandardNormal,
                                    &mut rng,
                                )
                        })
                        .collect()
                })
                .collect();
            let mut features = Vec::with_capacity(spec.n * spec.dim);
            let mut labels = Vec::with_capacity(spec.n);
            for i in 0..spec.n {
                let class = i % k;
                for j in 0..spec.dim {
                    let z: f64 =
                        <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
                    features.push(centers[class][j] + z);
                }
                labels.push(class as f64);
            }
            Dataset::new("logistic-blobs", features, labels, spec.dim)
        }
        SyntheticKind::LinearNoise { noise_std } => {
            if !(*noise_std >= 0.0) {
                return Err(Error::InvalidArgument("noise_std must be >= 0".into()));
            }
            let w_star: Vec<f64> = (0..spec.dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut features = Vec::with_capacity(spec.n * spec.dim);
            let mut labels = Vec::with_capacity(spec.n);
            for _ in 0..spec.n {
                let x: Vec<f64> = (0..spec.dim)
                    .map(|_| {
                        <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
                    })
                    .collect();
                let y: f64 = x.iter().zip(&w_star).map(|(a, b)| a * b).sum::<f64>()
                    + noise_std
                        * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
                features.extend(x);
                labels.push(y);
            }
            Dataset::new("linear-noise", features, labels, spec.dim)
        }
    }
}

/// `batch_size` distinct indices drawn uniformly without replacement,
/// returned in ascending order (partial Fisher-Yates, then sorted; the
/// optimizer's per-step summation order is thereby deterministic).
pub fn sample_batch(dataset_len: usize, batch_size: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if batch_size == 0 || batch_size > dataset_len {
        return Err(Error::InvalidArgument(format!(
            "batch_size {batch_size} out of range 1..={dataset_len}"
        )));
    }
    let mut indices: Vec<usize> = (0..dataset_len).collect();
    for i in 0..batch_size {
        let j = rng.random_range(i..dataset_len);
        indices.swap(i, j);
    }
    let mut batch = indices[..batch_size].to_vec();
    batch.sort_unstable();
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use tempfile::tempdir;

    fn tiny_dataset() -> Dataset {
        Dataset::new(
            "tiny",
            vec![0.0, 0.5, 1.0, 0.25],
            vec![3.0, 7.0],
            2,
        )
        .unwrap()
    }

    #[test]
    fn idx_roundtrip_two_images() {
        let dir = tempdir().unwrap();
        let img = dir.path().join("imgs.idx3-ubyte");
        let lbl = dir.path().join("lbls.idx1-ubyte");
        let ds = Dataset::new(
            "fixture",
            vec![0.0, 1.0, 0.0, 1.0, 0.5, 0.5, 0.5, 0.5],
            vec![3.0, 7.0],
            4,
        )
        .unwrap();
        write_idx(&ds, 2, 2, &img, &lbl).unwrap();
        let loaded = load_idx(&img, &lbl).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded.feature_dim(), 4);
        assert_eq!(loaded.labels(), &[3.0, 7.0]);
        // 0.5 quantizes to 128/255.
        assert!((loaded.sample(1).0[0] - 128.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn idx_bad_magic_names_file() {
        let dir = tempdir().unwrap();
        let img = dir.path().join("bad.idx3-ubyte");
        let lbl = dir.path().join("lbls.idx1-ubyte");
        std::fs::write(&img, [0u8; 20]).unwrap();
        std::fs::write(&lbl, {
            let mut v = IDX_MAGIC_LABELS.to_be_bytes().to_vec();
            v.extend_from_slice(&1u32.to_be_bytes());
            v.push(0);
            v
        })
        .unwrap();
        match load_idx(&img, &lbl) {
            Err(Error::BadIdx { path, reason }) => {
                assert!(path.contains("bad.idx3-ubyte"));
                assert!(reason.contains("magic"));
            }
            other => panic!("expected BadIdx, got {other:?}"),
        }
    }

    #[test]
    fn idx_count_mismatch_rejected() {
        let dir = tempdir().unwrap();
        let img = dir.path().join("imgs.idx3-ubyte");
        let lbl = dir.path().join("lbls.idx1-ubyte");
        let ds = tiny_dataset();
        write_idx(&ds, 1, 2, &img, &lbl).unwrap();
        // Rewrite labels claiming 3 entries.
        let mut v = IDX_MAGIC_LABELS.to_be_bytes().to_vec();
        v.extend_from_slice(&3u32.to_be_bytes());
        v.extend_from_slice(&[0, 1, 2]);
        std::fs::write(&lbl, v).unwrap();
        assert!(load_idx(&img, &lbl).is_err());
    }

    #[test]
    fn quadratic_bowl_isotropic_one_step_convergence() {
        // condition_number = 1: eta = 1/beta converges in one GD step.
        let spec = SyntheticSpec {
            kind: SyntheticKind::QuadraticBowl { condition_number: 1.0 },
            n: 8,
            dim: 2,
            seed: 5,
        };
        let ds = generate(&spec).unwrap();
        use crate::model::{full_gradient, LossKind, Model, ModelKind};
        let mut model = Model::zeros(ModelKind::LinearRegression { input_dim: 2 }).unwrap();
        let samples: Vec<(&[f64], f64)> = ds.samples().collect();
        let g = full_gradient(&model, LossKind::SquaredError, &samples).unwrap();
        let mut p = model.params().clone();
        p.add_scaled(&g, -1.0); // eta = 1/beta = 1/lambda = 1
        model.set_params(p).unwrap();
        let g2 = full_gradient(&model, LossKind::SquaredError, &samples).unwrap();
        assert!(g2.norm() < 1e-10, "one step should reach the optimum");
    }

    #[test]
    fn generate_deterministic() {
        let spec = SyntheticSpec {
            kind: SyntheticKind::LogisticBlobs {
                num_classes: 3,
                separation: 2.0,
            },
            n: 30,
            dim: 4,
            seed: 11,
        };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
    }

    #[test]
    fn blobs_single_sample_valid_class() {
        let spec = SyntheticSpec {
            kind: SyntheticKind::LogisticBlobs {
                num_classes: 2,
                separation: 1.0,
            },
            n: 1,
            dim: 3,
            seed: 0,
        };
        let ds = generate(&spec).unwrap();
        assert_eq!(ds.len(), 1);
        assert!(ds.labels()[0] == 0.0);
    }

    #[test]
    fn sample_batch_full_is_permutation() {
        let mut rng = stream_rng(1, 0);
        let batch = sample_batch(10, 10, &mut rng).unwrap();
        assert_eq!(batch, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn sample_batch_distinct_and_in_range() {
        let mut rng = stream_rng(2, 0);
        for _ in 0..1000 {
            let batch = sample_batch(20, 7, &mut rng).unwrap();
            let mut seen = batch.clone();
            seen.dedup();
            assert_eq!(seen.len(), 7);
            assert!(batch.iter().all(|&i| i < 20));
        }
    }

    #[test]
    fn sample_batch_uniform_inclusion() {
        // B=1, N=4, 1e5 draws: each index frequency 0.25 +- 0.005.
        let mut rng = stream_rng(3, 0);
        let mut counts = [0usize; 4];
        let draws = 100_000;
        for _ in 0..draws {
            let batch = sample_batch(4, 1, &mut rng).unwrap();
            counts[batch[0]] += 1;
        }
        for &c in &counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.25).abs() < 0.005, "frequency {freq}");
        }
        // Chi-square goodness of fit, 3 dof: reject only below p=0.001
        // (critical value 16.27).
        let expected = draws as f64 / 4.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(chi2 < 16.27, "chi-square {chi2} too extreme");
    }

    #[test]
    fn sample_batch_rejects_oversize() {
        let mut rng = stream_rng(4, 0);
        assert!(sample_batch(5, 6, &mut rng).is_err());
        assert!(sample_batch(5, 0, &mut rng).is_err());
    }

    #[test]
    fn split_is_disjoint_and_seeded() {
        let spec = SyntheticSpec {
            kind: SyntheticKind::LinearNoise { noise_std: 0.1 },
            n: 50,
            dim: 2,
            seed: 9,
        };
        let ds = generate(&spec).unwrap();
        let (train, holdout) = ds.split(0.2, 123).unwrap();
        assert_eq!(train.len(), 40);
        assert_eq!(holdout.len(), 10);
        let (train2, _) = ds.split(0.2, 123).unwrap();
        assert_eq!(train, train2);
    }
}

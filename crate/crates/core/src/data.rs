//! Labeled datasets: synthetic 2-D clusters, tiny grating images, and the
//! sample CSV schema.

use std::f64::consts::PI;
use std::fs;
use std::io;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{load_pixmap, Image, PixmapError};
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("class `{class}` has {count} samples, at least {min} required")]
    TooFewSamples { class: String, count: usize, min: usize },
    #[error(transparent)]
    Pixmap(#[from] PixmapError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageShape {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl ImageShape {
    pub fn len(&self) -> usize {
        self.width * self.height * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Samples as rows of a matrix with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub class_count: usize,
    /// Set when rows are flattened images scaled to `[-1, 1]`.
    pub image_shape: Option<ImageShape>,
}

/// Disjoint train / held-out row indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub held_out: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(features: Tensor, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if features.rows() != labels.len() || features.shape().len() != 2 {
            return Err(DataError::Invalid(format!(
                "{} labels for feature shape {:?}",
                labels.len(),
                features.shape()
            )));
        }
        if class_count == 0 || labels.iter().any(|&l| l >= class_count) {
            return Err(DataError::Invalid(format!("labels must lie in 0..{class_count}")));
        }
        Ok(Self {
            features,
            labels,
            class_count,
            image_shape: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Same labels, new features (e.g. an obfuscated copy).
    pub fn with_features(&self, features: Tensor) -> Result<Self> {
        if features.rows() != self.len() {
            return Err(DataError::Invalid(format!(
                "{} rows for {} labels",
                features.rows(),
                self.len()
            )));
        }
        let image_shape = self.image_shape.filter(|s| s.len() == features.cols());
        Ok(Self {
            features,
            labels: self.labels.clone(),
            class_count: self.class_count,
            image_shape,
        })
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Ok(Self {
            features: self.features.select_rows(indices)?,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            image_shape: self.image_shape,
        })
    }

    /// Seeded shuffle, then the first `round(n·train_fraction)` rows train.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<Split> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let cut = (self.len() as f64 * train_fraction).round() as usize;
        if cut == 0 || cut >= self.len() {
            return Err(DataError::Invalid(format!(
                "split of {} samples at fraction {train_fraction} leaves an empty side",
                self.len()
            )));
        }
        let held_out = idx.split_off(cut);
        Ok(Split { train: idx, held_out })
    }

    /// Rows as images, undoing the `[-1, 1]` scaling.
    pub fn to_images(&self) -> Result<Vec<Image>> {
        let shape = self
            .image_shape
            .ok_or_else(|| DataError::Invalid("dataset does not hold images".into()))?;
        (0..self.len())
            .map(|r| tensor_row_to_image(self.features.row(r), shape))
            .collect()
    }

    /// Builds an image dataset sharing these labels.
    pub fn from_images(&self, images: &[Image]) -> Result<Self> {
        let mut out = images_to_dataset(images, self.labels.clone(), self.class_count)?;
        out.image_shape = out.image_shape.or(self.image_shape);
        Ok(out)
    }
}

pub fn normalize_pixel(p: u8) -> f64 {
    p as f64 / 127.5 - 1.0
}

pub fn denormalize_value(v: f64) -> f64 {
    (v + 1.0) * 127.5
}

pub fn quantize_value(v: f64) -> u8 {
    denormalize_value(v).round().clamp(0.0, 255.0) as u8
}

pub fn tensor_row_to_image(row: &[f64], shape: ImageShape) -> Result<Image> {
    if row.len() != shape.len() {
        return Err(DataError::Invalid(format!("row of {} values for image {shape:?}", row.len())));
    }
    Image::new(
        shape.width,
        shape.height,
        shape.channels,
        row.iter().map(|&v| quantize_value(v)).collect(),
    )
    .map_err(|e| DataError::Invalid(e.to_string()))
}

pub fn images_to_dataset(images: &[Image], labels: Vec<usize>, class_count: usize) -> Result<LabeledDataset> {
    let first = images.first().ok_or_else(|| DataError::Invalid("no images".into()))?;
    let shape = ImageShape {
        width: first.width(),
        height: first.height(),
        channels: first.channels(),
    };
    let mut values = Vec::with_capacity(images.len() * shape.len());
    for img in images {
        if !img.same_shape(first) {
            return Err(DataError::Invalid("images differ in shape".into()));
        }
        values.extend(img.pixels().iter().map(|&p| normalize_pixel(p)));
    }
    let mut ds = LabeledDataset::new(Tensor::matrix(images.len(), shape.len(), values)?, labels, class_count)?;
    ds.image_shape = Some(shape);
    Ok(ds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterSpec {
    pub cluster_count: usize,
    pub points_per_cluster: usize,
    /// Centers are drawn uniformly from `[-center_box, center_box]²`.
    pub center_box: f64,
    pub std: f64,
    pub seed: u64,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        Self {
            cluster_count: 10,
            points_per_cluster: 500,
            center_box: 4.0,
            std: 0.25,
            seed: 0,
        }
    }
}

/// Toy clusters together with their generating geometry, expressed in the
/// normalized coordinates of the returned dataset.
#[derive(Debug, Clone)]
pub struct ToyClusters {
    pub dataset: LabeledDataset,
    pub centers: Vec<[f64; 2]>,
    pub std: f64,
}

pub fn gen_toy_clusters(spec: &ClusterSpec) -> Result<LabeledDataset> {
    Ok(gen_toy_clusters_with_centers(spec)?.dataset)
}

/// Gaussian blobs around seeded centers, labeled by cluster, then shifted
/// and scaled to zero mean and unit overall standard deviation.
pub fn gen_toy_clusters_with_centers(spec: &ClusterSpec) -> Result<ToyClusters> {
    if spec.cluster_count < 2 || !(spec.std > 0.0) || spec.points_per_cluster == 0 || !(spec.center_box > 0.0) {
        return Err(DataError::Invalid(format!("bad cluster spec {spec:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // keep blobs apart so every cluster is recognizable
    let min_sep = 8.0 * spec.std;
    let mut centers: Vec<[f64; 2]> = Vec::with_capacity(spec.cluster_count);
    let mut attempts = 0;
    while centers.len() < spec.cluster_count {
        attempts += 1;
        if attempts > 100_000 {
            return Err(DataError::Invalid("cannot place well-separated centers in the box".into()));
        }
        let c = [
            rng.random_range(-spec.center_box..=spec.center_box),
            rng.random_range(-spec.center_box..=spec.center_box),
        ];
        if centers.iter().all(|o| (o[0] - c[0]).hypot(o[1] - c[1]) >= min_sep) {
            centers.push(c);
        }
    }
    let normal = Normal::new(0.0, spec.std).expect("std > 0");
    let n = spec.cluster_count * spec.points_per_cluster;
    let mut values = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for (k, c) in centers.iter().enumerate() {
        for _ in 0..spec.points_per_cluster {
            values.push(c[0] + normal.sample(&mut rng));
            values.push(c[1] + normal.sample(&mut rng));
            labels.push(k);
        }
    }
    let mean = [
        values.iter().step_by(2).sum::<f64>() / n as f64,
        values.iter().skip(1).step_by(2).sum::<f64>() / n as f64,
    ];
    let var = values
        .iter()
        .enumerate()
        .map(|(i, v)| (v - mean[i % 2]).powi(2))
        .sum::<f64>()
        / (2 * n) as f64;
    let scale = var.sqrt();
    for (i, v) in values.iter_mut().enumerate() {
        *v = (*v - mean[i % 2]) / scale;
    }
    let centers = centers
        .iter()
        .map(|c| [(c[0] - mean[0]) / scale, (c[1] - mean[1]) / scale])
        .collect();
    let dataset = LabeledDataset::new(Tensor::matrix(n, 2, values)?, labels, spec.cluster_count)?;
    Ok(ToyClusters {
        dataset,
        centers,
        std: spec.std / scale,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TinyImageSpec {
    pub size: usize,
    pub class_count: usize,
    pub samples_per_class: usize,
    /// Grating period in pixels.
    pub period: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for TinyImageSpec {
    fn default() -> Self {
        Self {
            size: 32,
            class_count: 10,
            samples_per_class: 60,
            period: 10.0,
            noise_std: 8.0,
            seed: 0,
        }
    }
}

/// Minimum number of samples any class must have.
pub const MIN_SAMPLES_PER_CLASS: usize = 20;

/// Builtin grayscale images: class `c` is a sinusoidal grating at angle
/// `π·c/class_count` with random phase, contrast and slight period jitter,
/// plus pixel noise.
pub fn gen_grating_images(spec: &TinyImageSpec) -> Result<(Vec<Image>, Vec<usize>)> {
    if spec.samples_per_class < MIN_SAMPLES_PER_CLASS {
        return Err(DataError::TooFewSamples {
            class: "builtin".into(),
            count: spec.samples_per_class,
            min: MIN_SAMPLES_PER_CLASS,
        });
    }
    if spec.class_count < 2 || spec.size == 0 {
        return Err(DataError::Invalid(format!("bad tiny-image spec {spec:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..spec.samples_per_class {
        for c in 0..spec.class_count {
            let theta = PI * c as f64 / spec.class_count as f64;
            let phase = rng.random_range(0.0..2.0 * PI);
            let contrast = rng.random_range(60.0..100.0);
            let period = spec.period * rng.random_range(0.9..1.1);
            let (ct, st) = (theta.cos(), theta.sin());
            let noise: Vec<f64> = (0..spec.size * spec.size)
                .map(|_| {
                    let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
                    z * spec.noise_std
                })
                .collect();
            let img = Image::from_fn(spec.size, spec.size, 1, |x, y, _| {
                let u = x as f64 * ct + y as f64 * st;
                let v = 128.0 + contrast * (2.0 * PI * u / period + phase).cos() + noise[y * spec.size + x];
                v.round().clamp(0.0, 255.0) as u8
            })
            .expect("valid dimensions");
            images.push(img);
            labels.push(c);
        }
    }
    Ok((images, labels))
}

/// Loads `dir/<class>/*.pgm|*.ppm`, classes in sorted name order.
pub fn load_image_dir(dir: &Path) -> Result<(Vec<Image>, Vec<usize>, Vec<String>)> {
    let mut classes: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.path())
        .collect();
    classes.sort();
    let mut images = Vec::new();
    let mut labels = Vec::new();
    let mut names = Vec::new();
    for (label, class_dir) in classes.iter().enumerate() {
        let mut files: Vec<_> = fs::read_dir(class_dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| matches!(p.extension().and_then(|s| s.to_str()), Some("pgm" | "ppm" | "pnm")))
            .collect();
        files.sort();
        let name = class_dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        if files.len() < MIN_SAMPLES_PER_CLASS {
            return Err(DataError::TooFewSamples {
                class: name,
                count: files.len(),
                min: MIN_SAMPLES_PER_CLASS,
            });
        }
        for f in files {
            images.push(load_pixmap(&f)?);
            labels.push(label);
        }
        names.push(name);
    }
    if names.len() < 2 {
        return Err(DataError::Invalid(format!("{} needs at least two class folders", dir.display())));
    }
    Ok((images, labels, names))
}

/// Tiny-image dataset from a directory, or from the builtin grating
/// generator when `dir` is `None`. Pixels are scaled to `[-1, 1]`.
pub fn make_tiny_image_dataset(dir: Option<&Path>, spec: &TinyImageSpec) -> Result<LabeledDataset> {
    let (images, labels, class_count) = match dir {
        Some(d) => {
            let (images, labels, names) = load_image_dir(d)?;
            (images, labels, names.len())
        }
        None => {
            let (images, labels) = gen_grating_images(spec)?;
            (images, labels, spec.class_count)
        }
    };
    images_to_dataset(&images, labels, class_count)
}

/// One row of the sample CSV (`x,y,cluster`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub x: f64,
    pub y: f64,
    pub cluster: usize,
}

pub fn write_samples_csv(path: &Path, samples: &Tensor, labels: &[usize]) -> Result<()> {
    if samples.cols() != 2 || samples.rows() != labels.len() {
        return Err(DataError::Invalid("sample CSV needs 2-D points with one label each".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    for (r, &cluster) in labels.iter().enumerate() {
        w.serialize(SampleRow {
            x: samples.get(r, 0),
            y: samples.get(r, 1),
            cluster,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples_csv(path: &Path) -> Result<(Tensor, Vec<usize>)> {
    let mut r = csv::Reader::from_path(path)?;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for row in r.deserialize() {
        let row: SampleRow = row?;
        values.push(row.x);
        values.push(row.y);
        labels.push(row.cluster);
    }
    if labels.is_empty() {
        return Err(DataError::Invalid(format!("{} has no samples", path.display())));
    }
    Ok((Tensor::matrix(labels.len(), 2, values)?, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_clusters_have_requested_counts() {
        let spec = ClusterSpec::default();
        let ds = gen_toy_clusters(&spec).unwrap();
        assert_eq!(ds.class_count, 10);
        assert_eq!(ds.len(), 5000);
        for k in 0..10 {
            assert_eq!(ds.labels.iter().filter(|&&l| l == k).count(), 500);
        }
        assert_eq!(ds, gen_toy_clusters(&spec).unwrap());
    }

    #[test]
    fn clusters_are_normalized() {
        let ds = gen_toy_clusters(&ClusterSpec::default()).unwrap();
        let v = ds.features.values();
        let n = ds.len() as f64;
        let mx = v.iter().step_by(2).sum::<f64>() / n;
        let my = v.iter().skip(1).step_by(2).sum::<f64>() / n;
        assert!(mx.abs() < 1e-12 && my.abs() < 1e-12);
        let var = v.iter().map(|x| x * x).sum::<f64>() / (2.0 * n);
        assert!((var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cluster_means_match_centers() {
        let spec = ClusterSpec {
            seed: 3,
            ..ClusterSpec::default()
        };
        let toy = gen_toy_clusters_with_centers(&spec).unwrap();
        let ds = &toy.dataset;
        let n = spec.points_per_cluster as f64;
        let tol = 3.0 * toy.std / n.sqrt();
        for (k, c) in toy.centers.iter().enumerate() {
            let rows: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == k).collect();
            for (d, &want) in c.iter().enumerate() {
                let m = rows.iter().map(|&i| ds.features.get(i, d)).sum::<f64>() / n;
                assert!((m - want).abs() < tol, "cluster {k} dim {d}: {m} vs {want}");
            }
        }
    }

    #[test]
    fn split_is_disjoint_and_seeded() {
        let ds = gen_toy_clusters(&ClusterSpec {
            points_per_cluster: 20,
            ..ClusterSpec::default()
        })
        .unwrap();
        let s = ds.split(0.9, 4).unwrap();
        assert_eq!(s.train.len(), 180);
        assert_eq!(s.held_out.len(), 20);
        assert!(s.train.iter().all(|i| !s.held_out.contains(i)));
        assert_eq!(s, ds.split(0.9, 4).unwrap());
        assert!(ds.split(0.0, 4).is_err());
        assert!(ds.split(1.0, 4).is_err());
    }

    #[test]
    fn pixel_scaling_endpoints_and_inverse() {
        assert_eq!(normalize_pixel(0), -1.0);
        assert_eq!(normalize_pixel(255), 1.0);
        for p in 0..=255u8 {
            assert_eq!(quantize_value(normalize_pixel(p)), p);
            assert!((denormalize_value(normalize_pixel(p)) - p as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn grating_dataset_is_deterministic() {
        let spec = TinyImageSpec {
            samples_per_class: 20,
            ..TinyImageSpec::default()
        };
        let a = make_tiny_image_dataset(None, &spec).unwrap();
        let b = make_tiny_image_dataset(None, &spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), 32 * 32);
        assert_eq!(a.len(), 200);
        assert!(a.features.values().iter().all(|v| (-1.0..=1.0).contains(v)));
        let imgs = a.to_images().unwrap();
        assert_eq!(a.from_images(&imgs).unwrap(), a);
    }

    #[test]
    fn too_few_samples_rejected() {
        let spec = TinyImageSpec {
            samples_per_class: 5,
            ..TinyImageSpec::default()
        };
        assert!(matches!(
            make_tiny_image_dataset(None, &spec),
            Err(DataError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn image_dir_loading() {
        let dir = tempfile::tempdir().unwrap();
        for (ci, class) in ["a", "b"].iter().enumerate() {
            let cdir = dir.path().join(class);
            fs::create_dir(&cdir).unwrap();
            let n = if ci == 0 { 20 } else { 21 };
            for i in 0..n {
                let img = Image::filled(4, 4, 1, (i * 10 + ci) as u8).unwrap();
                crate::image::save_pixmap(&img, cdir.join(format!("{i:03}.pgm"))).unwrap();
            }
        }
        let ds = make_tiny_image_dataset(Some(dir.path()), &TinyImageSpec::default()).unwrap();
        assert_eq!(ds.len(), 41);
        assert_eq!(ds.class_count, 2);
        assert_eq!(ds.labels.iter().filter(|&&l| l == 1).count(), 21);

        fs::remove_file(dir.path().join("a").join("000.pgm")).unwrap();
        assert!(matches!(
            make_tiny_image_dataset(Some(dir.path()), &TinyImageSpec::default()),
            Err(DataError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn samples_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let t = Tensor::from_rows(&[vec![0.5, -1.25], vec![3.0, 1e-9]]).unwrap();
        write_samples_csv(&p, &t, &[3, 1]).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("x,y,cluster\n"));
        let (back, labels) = read_samples_csv(&p).unwrap();
        assert_eq!(back, t);
        assert_eq!(labels, vec![3, 1]);
    }
}

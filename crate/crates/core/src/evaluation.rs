//! Attack protocol, PSNR, distribution separability, method comparison
//! tables and the scatter-plot report.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adam::AdamConfig;
use crate::autodiff::{Activation, Graph};
use crate::data::{DataError, LabeledDataset};
use crate::image::Image;
use crate::models::{Mlp, MlpOptimizer, ModelBundle, ModelError, NoiseSpec};
use crate::obfuscate::{gaussian_blur, p3_encode, pixelate, secret_proportion, ObfuscateError};
use crate::tensor::{Tensor, TensorError};
use crate::trainer::{IterationRecord, TrainHistory};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("PSNR peak must be positive, got {0}")]
    BadPeak(f64),
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),
    #[error("at least two classes are needed, got {0}")]
    TooFewClasses(usize),
    #[error("empty sample set")]
    EmptySet,
    #[error("{0} requires image samples")]
    NotImages(String),
    #[error("scatter samples must be 2-D, got {0} columns")]
    NotTwoDimensional(usize),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Obfuscate(#[from] ObfuscateError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

/// `10·log10(peak² / MSE)` in dB; identical inputs give `+∞`.
pub fn psnr(a: &[f64], b: &[f64], peak: f64) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(EvalError::ShapeMismatch {
            left: vec![a.len()],
            right: vec![b.len()],
        });
    }
    if !(peak > 0.0) {
        return Err(EvalError::BadPeak(peak));
    }
    let mse = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

pub fn psnr_tensors(a: &Tensor, b: &Tensor, peak: f64) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(EvalError::ShapeMismatch {
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    psnr(a.values(), b.values(), peak)
}

pub fn psnr_images(a: &Image, b: &Image) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(EvalError::ShapeMismatch {
            left: vec![a.width(), a.height(), a.channels()],
            right: vec![b.width(), b.height(), b.channels()],
        });
    }
    let to_f = |img: &Image| img.pixels().iter().map(|&p| f64::from(p)).collect::<Vec<_>>();
    psnr(&to_f(a), &to_f(b), 255.0)
}

/// Largest minus smallest value; the PSNR peak for unbounded tensor data.
pub fn data_range(t: &Tensor) -> f64 {
    let (lo, hi) = t
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub train_fraction: f64,
    /// Z-score features with train-split statistics before fitting.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            hidden_width: 128,
            hidden_layers: 2,
            steps: 1500,
            batch_size: 64,
            adam: AdamConfig::default(),
            train_fraction: 0.9,
            standardize: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackOutcome {
    pub accuracy: f64,
    /// Identity of the freshly built classifier.
    pub model_uid: u64,
    pub train_size: usize,
    pub held_out_size: usize,
}

fn standardizer(train: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (train.rows(), train.cols());
    let mut mean = vec![0.0; d];
    for r in 0..n {
        for (m, v) in mean.iter_mut().zip(train.row(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for r in 0..n {
        for ((s, v), m) in var.iter_mut().zip(train.row(r)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let scale = var
        .into_iter()
        .map(|s| {
            let sd = (s / n as f64).sqrt();
            if sd > 1e-12 {
                1.0 / sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

fn apply_standardizer(t: &Tensor, (mean, scale): &(Vec<f64>, Vec<f64>)) -> Result<Tensor> {
    let d = t.cols();
    let values = t
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| (v - mean[i % d]) * scale[i % d])
        .collect();
    Ok(Tensor::matrix(t.rows(), d, values)?)
}

/// Fits a fresh classifier on the train split and predicts `eval`.
fn fit_and_predict(
    train: &LabeledDataset,
    eval: &Tensor,
    cfg: &AttackConfig,
) -> Result<(Vec<usize>, u64)> {
    let (x_train, x_eval) = if cfg.standardize {
        let stats = standardizer(&train.features);
        (apply_standardizer(&train.features, &stats)?, apply_standardizer(eval, &stats)?)
    } else {
        (train.features.clone(), eval.clone())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut widths = vec![train.dim()];
    widths.extend(std::iter::repeat_n(cfg.hidden_width, cfg.hidden_layers));
    widths.push(train.class_count);
    let mut net = Mlp::new(&widths, Activation::Tanh, Activation::Identity, &mut rng)?;
    let mut opt = MlpOptimizer::new(&net, cfg.adam);
    let k = cfg.batch_size.max(1);
    for _ in 0..cfg.steps {
        let idx: Vec<usize> = (0..k).map(|_| rng.random_range(0..train.len())).collect();
        let mut g = Graph::new();
        let x = g.constant(x_train.select_rows(&idx)?)?;
        let logits = net.forward(&mut g, x, true)?;
        let labels = idx.iter().map(|&i| train.labels[i]).collect();
        let loss = g.softmax_cross_entropy(logits, labels)?;
        let grads = g.backward(loss)?;
        opt.step(&mut net, &grads)?;
    }
    let logits = net.infer(&x_eval)?;
    let predictions = (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            (0..row.len()).fold(0, |best, c| if row[c] > row[best] { c } else { best })
        })
        .collect();
    Ok((predictions, net.uid()))
}

/// Trains a fresh classifier on the (obfuscated) train split with the true
/// labels and reports its held-out accuracy.
pub fn attack_train_eval(data: &LabeledDataset, cfg: &AttackConfig) -> Result<AttackOutcome> {
    if data.class_count < 2 {
        return Err(EvalError::TooFewClasses(data.class_count));
    }
    let split = data
        .split(cfg.train_fraction, cfg.seed)
        .map_err(|e| EvalError::DegenerateSplit(e.to_string()))?;
    let train = data.subset(&split.train)?;
    let held = data.subset(&split.held_out)?;
    let (pred, uid) = fit_and_predict(&train, &held.features, cfg)?;
    let correct = pred.iter().zip(&held.labels).filter(|(p, l)| p == l).count();
    Ok(AttackOutcome {
        accuracy: correct as f64 / held.len() as f64,
        model_uid: uid,
        train_size: train.len(),
        held_out_size: held.len(),
    })
}

/// Held-out accuracy of a fresh binary classifier separating `a` (label 0)
/// from `b` (label 1).
pub fn separability(a: &Tensor, b: &Tensor, cfg: &AttackConfig) -> Result<AttackOutcome> {
    if a.rows() == 0 || b.rows() == 0 {
        return Err(EvalError::EmptySet);
    }
    if a.cols() != b.cols() {
        return Err(EvalError::ShapeMismatch {
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let mut values = a.values().to_vec();
    values.extend_from_slice(b.values());
    let features = Tensor::matrix(a.rows() + b.rows(), a.cols(), values)?;
    let labels = std::iter::repeat_n(0, a.rows()).chain(std::iter::repeat_n(1, b.rows())).collect();
    attack_train_eval(&LabeledDataset::new(features, labels, 2)?, cfg)
}

/// An obfuscation under comparison.
#[derive(Debug, Clone)]
pub enum Method {
    Pixelate { factor: usize },
    Blur { radius: usize },
    P3 { threshold: u32 },
    /// A trained encryption model; the noise seed fixes the fake privacy draw.
    Model {
        name: String,
        bundle: Box<ModelBundle>,
        noise: NoiseSpec,
    },
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Pixelate { factor } => format!("pixelate_{factor}"),
            Method::Blur { radius } => format!("blur_{radius}"),
            Method::P3 { threshold } => format!("p3_{threshold}"),
            Method::Model { name, .. } => name.clone(),
        }
    }
}

/// Obfuscated samples plus whatever the method can rebuild.
#[derive(Debug, Clone)]
pub struct Obfuscated {
    pub encrypted: LabeledDataset,
    pub reconstructed: Option<LabeledDataset>,
    pub proportion: Option<f64>,
}

fn map_images(data: &LabeledDataset, what: &str, f: impl Fn(&Image) -> Result<Image>) -> Result<LabeledDataset> {
    if data.image_shape.is_none() {
        return Err(EvalError::NotImages(what.into()));
    }
    let images = data.to_images()?;
    let out: Vec<Image> = images.iter().map(f).collect::<Result<_>>()?;
    Ok(data.from_images(&out)?)
}

/// Rounds model outputs to the 8-bit grid when the samples are images.
fn as_published(data: &LabeledDataset, t: Tensor) -> Result<LabeledDataset> {
    let ds = data.with_features(t)?;
    if ds.image_shape.is_some() {
        map_images(&ds, "quantization", |img| Ok(img.clone()))
    } else {
        Ok(ds)
    }
}

pub fn apply_method(method: &Method, data: &LabeledDataset) -> Result<Obfuscated> {
    let name = method.name();
    match method {
        Method::Pixelate { factor } => Ok(Obfuscated {
            encrypted: map_images(data, &name, |img| Ok(pixelate(img, *factor)?))?,
            reconstructed: None,
            proportion: None,
        }),
        Method::Blur { radius } => Ok(Obfuscated {
            encrypted: map_images(data, &name, |img| Ok(gaussian_blur(img, *radius)))?,
            reconstructed: None,
            proportion: None,
        }),
        Method::P3 { threshold } => {
            if data.image_shape.is_none() {
                return Err(EvalError::NotImages(name));
            }
            let images = data.to_images()?;
            let mut public = Vec::with_capacity(images.len());
            let mut full = Vec::with_capacity(images.len());
            let mut share = 0.0;
            for img in &images {
                let pkg = p3_encode(img, *threshold)?;
                share += secret_proportion(&pkg);
                full.push(crate::obfuscate::p3_decode(&pkg)?);
                public.push(pkg.public_image);
            }
            Ok(Obfuscated {
                encrypted: data.from_images(&public)?,
                reconstructed: Some(data.from_images(&full)?),
                proportion: Some(share / images.len() as f64),
            })
        }
        Method::Model { bundle, noise, .. } => {
            let enc = bundle.encrypt(&data.features, noise)?;
            let rec = bundle.reconstruct(&data.features)?;
            Ok(Obfuscated {
                encrypted: as_published(data, enc)?,
                reconstructed: Some(as_published(data, rec)?),
                proportion: Some(bundle.privacy_width() as f64 / bundle.feature_width() as f64),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackReport {
    pub method: String,
    pub accuracy: Option<f64>,
    pub chance: f64,
    pub psnr_recon_db: Option<f64>,
    pub psnr_encrypted_db: Option<f64>,
    pub proportion: Option<f64>,
    /// `ok`, or the error that stopped this row.
    pub status: String,
}

impl AttackReport {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// PSNR peak for a dataset: the `[-1, 1]` span for images, the empirical
/// range otherwise.
pub fn psnr_peak(data: &LabeledDataset) -> f64 {
    if data.image_shape.is_some() {
        2.0
    } else {
        data_range(&data.features)
    }
}

fn evaluate_method(method: &Method, data: &LabeledDataset, cfg: &AttackConfig, chance: f64) -> Result<AttackReport> {
    let out = apply_method(method, data)?;
    let peak = psnr_peak(data);
    let accuracy = attack_train_eval(&out.encrypted, cfg)?.accuracy;
    let psnr_recon_db = out
        .reconstructed
        .as_ref()
        .map(|r| psnr_tensors(&r.features, &data.features, peak))
        .transpose()?;
    Ok(AttackReport {
        method: method.name(),
        accuracy: Some(accuracy),
        chance,
        psnr_recon_db,
        psnr_encrypted_db: Some(psnr_tensors(&out.encrypted.features, &data.features, peak)?),
        proportion: out.proportion,
        status: "ok".into(),
    })
}

/// One report per method plus the `original` and `random` rows. A failing
/// method keeps its row with the error recorded in `status`.
pub fn compare_methods(data: &LabeledDataset, methods: &[Method], cfg: &AttackConfig) -> Result<Vec<AttackReport>> {
    let chance = 1.0 / data.class_count as f64;
    let original = attack_train_eval(data, cfg)?;
    let mut rows = vec![AttackReport {
        method: "original".into(),
        accuracy: Some(original.accuracy),
        chance,
        psnr_recon_db: None,
        psnr_encrypted_db: Some(f64::INFINITY),
        proportion: None,
        status: "ok".into(),
    }];
    for m in methods {
        rows.push(evaluate_method(m, data, cfg, chance).unwrap_or_else(|e| AttackReport {
            method: m.name(),
            accuracy: None,
            chance,
            psnr_recon_db: None,
            psnr_encrypted_db: None,
            proportion: None,
            status: e.to_string(),
        }));
    }
    rows.push(AttackReport {
        method: "random".into(),
        accuracy: Some(chance),
        chance,
        psnr_recon_db: None,
        psnr_encrypted_db: None,
        proportion: None,
        status: "ok".into(),
    });
    Ok(rows)
}

/// Columns `method,accuracy,chance,psnr_recon_db,psnr_encrypted_db,proportion,status`.
pub fn write_report_csv<W: io::Write>(rows: &[AttackReport], w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSet {
    Original,
    Encrypted,
    Reconstructed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub x: f64,
    pub y: f64,
    pub cluster: usize,
    pub set: SampleSet,
    pub iteration: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScatterReport {
    pub points: Vec<ScatterPoint>,
}

/// Categorical palette indexed by cluster id.
pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

pub fn cluster_color(cluster: usize) -> &'static str {
    PALETTE[cluster % PALETTE.len()]
}

impl ScatterReport {
    pub fn add(&mut self, samples: &Tensor, clusters: &[usize], set: SampleSet, iteration: usize) -> Result<()> {
        if samples.shape().len() != 2 || samples.cols() != 2 {
            return Err(EvalError::NotTwoDimensional(samples.shape().last().copied().unwrap_or(0)));
        }
        if samples.rows() != clusters.len() {
            return Err(EvalError::ShapeMismatch {
                left: samples.shape().to_vec(),
                right: vec![clusters.len()],
            });
        }
        self.points.extend((0..samples.rows()).map(|r| ScatterPoint {
            x: samples.get(r, 0),
            y: samples.get(r, 1),
            cluster: clusters[r],
            set,
            iteration,
        }));
        Ok(())
    }

    pub fn iterations(&self, set: SampleSet) -> Vec<usize> {
        let its: BTreeSet<usize> = self.points.iter().filter(|p| p.set == set).map(|p| p.iteration).collect();
        its.into_iter().collect()
    }

    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        for p in &self.points {
            w.serialize(p)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv<R: io::Read>(r: R) -> Result<Self> {
        let points = csv::Reader::from_reader(r).deserialize().collect::<Result<_, _>>()?;
        Ok(Self { points })
    }

    /// Three rows of panels: originals, encrypted samples per iteration and
    /// reconstructed samples per iteration.
    pub fn to_svg(&self) -> String {
        const PANEL: f64 = 180.0;
        const GAP: f64 = 20.0;
        const LABEL: f64 = 110.0;
        let rows = [
            (SampleSet::Original, "original"),
            (SampleSet::Encrypted, "encrypted"),
            (SampleSet::Reconstructed, "reconstructed"),
        ];
        let cols = rows.iter().map(|(s, _)| self.iterations(*s).len()).max().unwrap_or(0).max(1);
        let width = LABEL + cols as f64 * (PANEL + GAP);
        let height = GAP + rows.len() as f64 * (PANEL + 2.0 * GAP);
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        for (ri, (set, label)) in rows.iter().enumerate() {
            let top = GAP + ri as f64 * (PANEL + 2.0 * GAP);
            let _ = writeln!(
                svg,
                r#"<text x="8" y="{:.1}" font-family="sans-serif" font-size="14">{label}</text>"#,
                top + PANEL / 2.0
            );
            let pts: Vec<&ScatterPoint> = self.points.iter().filter(|p| p.set == *set).collect();
            // one scale per row so panels over iterations are comparable
            let (mut lo_x, mut hi_x, mut lo_y, mut hi_y) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
            for p in &pts {
                lo_x = lo_x.min(p.x);
                hi_x = hi_x.max(p.x);
                lo_y = lo_y.min(p.y);
                hi_y = hi_y.max(p.y);
            }
            let span_x = (hi_x - lo_x).max(1e-9);
            let span_y = (hi_y - lo_y).max(1e-9);
            for (ci, it) in self.iterations(*set).into_iter().enumerate() {
                let left = LABEL + ci as f64 * (PANEL + GAP);
                let _ = writeln!(
                    svg,
                    r##"<g><rect x="{left:.1}" y="{top:.1}" width="{PANEL:.0}" height="{PANEL:.0}" fill="none" stroke="#444"/>"##
                );
                let _ = writeln!(
                    svg,
                    r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">iteration {it}</text>"#,
                    left + PANEL / 2.0,
                    top + PANEL + 14.0
                );
                for p in pts.iter().filter(|p| p.iteration == it) {
                    let cx = left + 4.0 + (p.x - lo_x) / span_x * (PANEL - 8.0);
                    let cy = top + PANEL - 4.0 - (p.y - lo_y) / span_y * (PANEL - 8.0);
                    let _ = writeln!(
                        svg,
                        r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="1.5" fill="{}"/>"#,
                        cluster_color(p.cluster)
                    );
                }
                let _ = writeln!(svg, "</g>");
            }
        }
        svg.push_str("</svg>\n");
        svg
    }

    pub fn save_svg(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_svg())?;
        Ok(())
    }
}

/// Loss curves of a training run: one polyline per recorded term on a
/// shared linear axis.
pub fn history_svg(history: &TrainHistory) -> String {
    const W: f64 = 640.0;
    const H: f64 = 360.0;
    const M: f64 = 48.0;
    type Term = (&'static str, fn(&IterationRecord) -> Option<f64>);
    let terms: [Term; 5] = [
        ("l_D", |r| r.l_d),
        ("l_G_ad", |r| r.l_g_ad),
        ("l_recon_mse", |r| Some(r.l_recon_mse)),
        ("l_perceptual", |r| Some(r.l_perceptual)),
        ("l_G_total", |r| Some(r.l_g_total)),
    ];
    let recs = &history.records;
    let vals = || recs.iter().flat_map(|r| terms.iter().filter_map(move |(_, f)| f(r)));
    let lo = vals().fold(f64::INFINITY, f64::min).min(0.0);
    let hi = vals().fold(f64::NEG_INFINITY, f64::max).max(lo + 1e-9);
    let last = recs.last().map_or(1, |r| r.iteration.max(1)) as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W:.0}" height="{H:.0}" viewBox="0 0 {W:.0} {H:.0}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r##"<rect x="{M}" y="{M}" width="{:.0}" height="{:.0}" fill="none" stroke="#444"/>"##,
        W - 2.0 * M,
        H - 2.0 * M
    );
    let _ = writeln!(
        svg,
        r#"<text x="{M}" y="{:.0}" font-family="sans-serif" font-size="11">{lo:.3}</text>"#,
        H - M + 14.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{M}" y="{:.0}" font-family="sans-serif" font-size="11">{hi:.3}</text>"#,
        M - 6.0
    );
    for (i, (name, f)) in terms.iter().enumerate() {
        let pts: Vec<String> = recs
            .iter()
            .filter_map(|r| {
                f(r).map(|v| {
                    let x = M + r.iteration as f64 / last * (W - 2.0 * M);
                    let y = H - M - (v - lo) / (hi - lo) * (H - 2.0 * M);
                    format!("{x:.1},{y:.1}")
                })
            })
            .collect();
        if pts.is_empty() {
            continue;
        }
        let color = PALETTE[i];
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1" points="{}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.0}" y="{:.0}" font-family="sans-serif" font-size="11" fill="{color}">{name}</text>"#,
            W - M - 90.0,
            M + 14.0 + 14.0 * i as f64
        );
    }
    svg.push_str("</svg>\n");
    svg
}

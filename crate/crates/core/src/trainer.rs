//! The collaborative training loop and its two ablations.
//!
//! Each iteration samples one minibatch with replacement and one draw of
//! Gaussian noise for the fake privacy feature, evaluates every loss term
//! on that batch under the current parameters, then applies the
//! discriminator update followed by the encryption-model update.

use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adam::AdamConfig;
use crate::autodiff::Graph;
use crate::data::LabeledDataset;
use crate::models::{build_models, MlpOptimizer, ModelBundle, ModelConfig, ModelError, Proportion};
use crate::objectives::{build_objective, Ablation, LossBreakdown, ObjectiveError, DEFAULT_LAMBDA};
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("non-finite {term} at iteration {iteration}")]
    NonFinite { term: &'static str, iteration: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub iterations: usize,
    pub lambda: f64,
    pub adam: AdamConfig,
    /// Separate discriminator optimizer settings; shares `adam` when unset.
    pub discriminator_adam: Option<AdamConfig>,
    pub noise_std: f64,
    pub seed: u64,
    pub ablation: Ablation,
    pub privacy_proportion: Proportion,
    pub use_perceptual: bool,
    /// Stop once the 100-iteration moving average of the generator loss
    /// moves by less than 1e-5.
    pub early_stop: bool,
    pub feature_width: usize,
    pub hidden_width: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            iterations: 2000,
            lambda: DEFAULT_LAMBDA,
            adam: AdamConfig::default(),
            discriminator_adam: None,
            noise_std: 1.0,
            seed: 0,
            ablation: Ablation::Full,
            privacy_proportion: Proportion::new(1, 64).unwrap(),
            use_perceptual: false,
            early_stop: false,
            feature_width: 128,
            hidden_width: 128,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(TrainError::Config("lambda must be non-negative".into()));
        }
        if !(self.noise_std >= 0.0) {
            return Err(TrainError::Config("noise_std must be non-negative".into()));
        }
        if self.privacy_proportion.width_of(self.feature_width).is_none() {
            return Err(TrainError::Config(format!(
                "privacy proportion {} of {} features is not a whole positive count",
                self.privacy_proportion, self.feature_width
            )));
        }
        Ok(())
    }

    /// Model layout for inputs of width `input_width`.
    pub fn model_config(&self, input_width: usize) -> ModelConfig {
        ModelConfig {
            input_width,
            feature_width: self.feature_width,
            privacy_proportion: self.privacy_proportion,
            hidden_width: self.hidden_width,
            discriminator_hidden: 128,
            discriminator_layers: 5,
            perceptual_width: 64,
            seed: self.seed,
        }
    }
}

/// Loss terms of one completed iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub l_d: Option<f64>,
    pub l_g_ad: Option<f64>,
    pub l_recon_mse: f64,
    pub l_perceptual: f64,
    #[serde(default)]
    pub l_encrypted_perceptual: Option<f64>,
    pub l_g_total: f64,
}

impl IterationRecord {
    fn from_breakdown(iteration: usize, b: &LossBreakdown) -> Self {
        Self {
            iteration,
            l_d: b.discriminator,
            l_g_ad: b.adversarial,
            l_recon_mse: b.recon_mse,
            l_perceptual: b.perceptual,
            l_encrypted_perceptual: b.encrypted_perceptual,
            l_g_total: b.total_generator,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<IterationRecord>,
    /// Iterations after which a checkpoint was written.
    pub checkpoints: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    iteration: usize,
    #[serde(rename = "l_D")]
    l_d: Option<f64>,
    #[serde(rename = "l_G_ad")]
    l_g_ad: Option<f64>,
    l_recon_mse: f64,
    l_perceptual: f64,
    #[serde(rename = "l_G_total")]
    l_g_total: f64,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Writes `iteration,l_D,l_G_ad,l_recon_mse,l_perceptual,l_G_total`;
    /// absent terms are empty fields.
    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        for r in &self.records {
            w.serialize(CsvRow {
                iteration: r.iteration,
                l_d: r.l_d,
                l_g_ad: r.l_g_ad,
                l_recon_mse: r.l_recon_mse,
                l_perceptual: r.l_perceptual,
                l_g_total: r.l_g_total,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Reads the loss log written by [`TrainHistory::write_csv`]. The
    /// checkpoint list and encrypted perceptual term are not part of it.
    pub fn read_csv<R: io::Read>(r: R) -> Result<Self> {
        let mut records = Vec::new();
        for row in csv::Reader::from_reader(r).deserialize() {
            let row: CsvRow = row?;
            records.push(IterationRecord {
                iteration: row.iteration,
                l_d: row.l_d,
                l_g_ad: row.l_g_ad,
                l_recon_mse: row.l_recon_mse,
                l_perceptual: row.l_perceptual,
                l_encrypted_perceptual: None,
                l_g_total: row.l_g_total,
            });
        }
        Ok(Self {
            records,
            checkpoints: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Discriminator,
    Generator,
}

/// Hooks into the training loop.
pub trait TrainObserver {
    /// Called right before each parameter update.
    fn on_update(&mut self, _iteration: usize, _phase: Phase) {}

    /// Called with the number of completed iterations: once with 0 before
    /// the first iteration, then after every iteration.
    fn on_progress(&mut self, _completed: usize, _bundle: &ModelBundle) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

/// Initial models for `dataset` under `config`.
pub fn init_models(dataset: &LabeledDataset, config: &TrainConfig) -> Result<ModelBundle> {
    config.validate()?;
    Ok(build_models(&config.model_config(dataset.dim()))?)
}

pub fn train(dataset: &LabeledDataset, config: &TrainConfig) -> Result<(ModelBundle, TrainHistory)> {
    let bundle = init_models(dataset, config)?;
    train_from(bundle, dataset, config, &mut ())
}

pub fn train_collaborative(dataset: &LabeledDataset, config: &TrainConfig) -> Result<(ModelBundle, TrainHistory)> {
    train(
        dataset,
        &TrainConfig {
            ablation: Ablation::Full,
            ..*config
        },
    )
}

/// Reconstruction-only training; the discriminator stays untouched.
pub fn train_ablation(dataset: &LabeledDataset, config: &TrainConfig) -> Result<(ModelBundle, TrainHistory)> {
    train(
        dataset,
        &TrainConfig {
            ablation: Ablation::NoCollaborative,
            ..*config
        },
    )
}

/// Decomposition network that maximizes the perceptual distance of the
/// encrypted sample instead of training a discriminator.
pub fn train_msednet(dataset: &LabeledDataset, config: &TrainConfig) -> Result<(ModelBundle, TrainHistory)> {
    train(
        dataset,
        &TrainConfig {
            ablation: Ablation::Msednet,
            ..*config
        },
    )
}

const BATCH_STREAM: u64 = 0x6261_7463_6800_0001;
const NOISE_STREAM: u64 = 0x6e6f_6973_6500_0002;

/// Runs `config.iterations` iterations (fewer only with early stopping)
/// starting from `bundle`.
pub fn train_from(
    mut bundle: ModelBundle,
    dataset: &LabeledDataset,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<(ModelBundle, TrainHistory)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if dataset.dim() != bundle.config.input_width {
        return Err(ModelError::WidthMismatch {
            what: "training data",
            expected: bundle.config.input_width,
            got: dataset.dim(),
        }
        .into());
    }
    let mut batch_rng = ChaCha8Rng::seed_from_u64(config.seed ^ BATCH_STREAM);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seed ^ NOISE_STREAM);
    let mut enc_opt = MlpOptimizer::new(&bundle.encoder, config.adam);
    let mut dec_opt = MlpOptimizer::new(&bundle.decoder, config.adam);
    let mut disc_opt = MlpOptimizer::new(&bundle.discriminator, config.discriminator_adam.unwrap_or(config.adam));
    let mut history = TrainHistory::default();
    let pw = bundle.privacy_width();
    let k = config.batch_size;

    observer.on_progress(0, &bundle)?;
    for iteration in 0..config.iterations {
        let idx: Vec<usize> = (0..k).map(|_| batch_rng.random_range(0..dataset.len())).collect();
        let x = dataset.features.select_rows(&idx)?;
        let noise = Tensor::randn(vec![k, pw], config.noise_std, &mut noise_rng)?;

        let mut g = Graph::new();
        let xn = g.constant(x)?;
        let nn = g.constant(noise)?;
        let nodes = build_objective(
            &mut g,
            &bundle,
            xn,
            nn,
            config.ablation,
            config.lambda,
            config.use_perceptual,
        )?;
        let breakdown = nodes.breakdown(&g, config.lambda);
        if let Some(term) = breakdown.non_finite_term() {
            return Err(TrainError::NonFinite { term, iteration });
        }
        let grads = g.backward(nodes.total)?;

        if config.ablation == Ablation::Full {
            observer.on_update(iteration, Phase::Discriminator);
            disc_opt.step(&mut bundle.discriminator, &grads)?;
        }
        drop(g);
        observer.on_update(iteration, Phase::Generator);
        enc_opt.step(&mut bundle.encoder, &grads)?;
        dec_opt.step(&mut bundle.decoder, &grads)?;

        history.records.push(IterationRecord::from_breakdown(iteration, &breakdown));
        observer.on_progress(iteration + 1, &bundle)?;

        if config.early_stop && converged(&history.records) {
            break;
        }
    }
    Ok((bundle, history))
}

const EARLY_STOP_WINDOW: usize = 100;
const EARLY_STOP_TOL: f64 = 1e-5;

fn converged(records: &[IterationRecord]) -> bool {
    let n = records.len();
    if n < 2 * EARLY_STOP_WINDOW {
        return false;
    }
    let avg = |r: &[IterationRecord]| r.iter().map(|r| r.l_g_total).sum::<f64>() / r.len() as f64;
    let recent = avg(&records[n - EARLY_STOP_WINDOW..]);
    let before = avg(&records[n - 2 * EARLY_STOP_WINDOW..n - EARLY_STOP_WINDOW]);
    (recent - before).abs() < EARLY_STOP_TOL
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_toy_clusters, ClusterSpec};

    fn small_data() -> LabeledDataset {
        gen_toy_clusters(&ClusterSpec {
            points_per_cluster: 20,
            ..ClusterSpec::default()
        })
        .unwrap()
    }

    fn small_config(iterations: usize) -> TrainConfig {
        TrainConfig {
            iterations,
            batch_size: 16,
            feature_width: 32,
            hidden_width: 32,
            privacy_proportion: Proportion::new(1, 16).unwrap(),
            seed: 9,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn history_csv_round_trip() {
        let ds = small_data();
        let (_, h) = train(&ds, &small_config(4)).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("iteration,l_D,l_G_ad,l_recon_mse,l_perceptual,l_G_total\n"));
        let back = TrainHistory::read_csv(&buf[..]).unwrap();
        assert_eq!(back.records, h.records);

        let (_, h) = train_ablation(&ds, &small_config(2)).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let line = String::from_utf8(buf.clone()).unwrap().lines().nth(1).unwrap().to_owned();
        assert!(line.starts_with("0,,,"), "{line}");
        assert_eq!(TrainHistory::read_csv(&buf[..]).unwrap().records, h.records);
    }

    #[test]
    fn zero_iterations_returns_initial_models() {
        let ds = small_data();
        let cfg = small_config(0);
        let (m, h) = train(&ds, &cfg).unwrap();
        assert_eq!(m, init_models(&ds, &cfg).unwrap());
        assert!(h.is_empty());
    }

    #[test]
    fn fixed_seed_is_bitwise_reproducible() {
        let ds = small_data();
        let cfg = small_config(15);
        let (a, ha) = train(&ds, &cfg).unwrap();
        let (b, hb) = train(&ds, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
        assert_eq!(ha.len(), 15);
    }

    #[test]
    fn shared_objective_is_recorded_once() {
        let ds = small_data();
        let (_, h) = train(&ds, &small_config(10)).unwrap();
        for r in &h.records {
            assert_eq!(r.l_d, r.l_g_ad);
            let adv = r.l_g_ad.unwrap();
            assert!((r.l_g_total - (adv + r.l_recon_mse)).abs() < 1e-12);
        }
    }

    #[test]
    fn ablation_has_no_adversarial_term_and_keeps_discriminator() {
        let ds = small_data();
        let cfg = small_config(10);
        let init = init_models(&ds, &cfg).unwrap();
        let (m, h) = train_ablation(&ds, &cfg).unwrap();
        assert!(h.records.iter().all(|r| r.l_g_ad.is_none() && r.l_d.is_none()));
        assert_eq!(m.discriminator, init.discriminator);
        assert_ne!(m.encoder, init.encoder);
    }

    #[test]
    fn msednet_records_encrypted_term() {
        let ds = small_data();
        let (_, h) = train_msednet(&ds, &small_config(5)).unwrap();
        for r in &h.records {
            let e = r.l_encrypted_perceptual.unwrap();
            assert!((r.l_g_total - (r.l_recon_mse - e)).abs() < 1e-12);
        }
    }

    #[derive(Default)]
    struct Recorder(Vec<(usize, Phase)>, Vec<usize>);

    impl TrainObserver for Recorder {
        fn on_update(&mut self, iteration: usize, phase: Phase) {
            self.0.push((iteration, phase));
        }
        fn on_progress(&mut self, completed: usize, _: &ModelBundle) -> Result<()> {
            self.1.push(completed);
            Ok(())
        }
    }

    #[test]
    fn discriminator_updates_before_generator() {
        let ds = small_data();
        let cfg = small_config(3);
        let mut rec = Recorder::default();
        train_from(init_models(&ds, &cfg).unwrap(), &ds, &cfg, &mut rec).unwrap();
        let expected: Vec<_> = (0..3)
            .flat_map(|i| [(i, Phase::Discriminator), (i, Phase::Generator)])
            .collect();
        assert_eq!(rec.0, expected);
        assert_eq!(rec.1, vec![0, 1, 2, 3]);
    }

    #[test]
    fn perceptual_network_never_changes() {
        let ds = small_data();
        let cfg = TrainConfig {
            use_perceptual: true,
            ..small_config(10)
        };
        let init = init_models(&ds, &cfg).unwrap();
        for ablation in [Ablation::Full, Ablation::Msednet] {
            let (m, _) = train(&ds, &TrainConfig { ablation, ..cfg }).unwrap();
            assert_eq!(m.perceptual, init.perceptual);
        }
    }

    #[test]
    fn empty_dataset_and_bad_config_rejected() {
        let ds = small_data();
        let empty = ds.subset(&[]);
        assert!(empty.is_err() || matches!(train(&empty.unwrap(), &small_config(1)), Err(TrainError::EmptyDataset)));
        let bad = TrainConfig {
            batch_size: 0,
            ..small_config(1)
        };
        assert!(matches!(train(&ds, &bad), Err(TrainError::Config(_))));
        let bad = TrainConfig {
            privacy_proportion: Proportion::new(1, 64).unwrap(),
            ..small_config(1)
        };
        assert!(matches!(train(&ds, &bad), Err(TrainError::Config(_))));
    }

    #[test]
    fn non_finite_loss_names_term_and_iteration() {
        let ds = small_data();
        let cfg = small_config(2);
        let mut m = init_models(&ds, &cfg).unwrap();
        // an enormous decoder output overflows the squared error
        let n = m.decoder.params().len();
        m.decoder.params_mut()[n - 1].values_mut()[0] = 1e200;
        let err = train_from(m, &ds, &cfg, &mut ()).unwrap_err();
        match err {
            TrainError::NonFinite { term, iteration } => {
                assert_eq!(iteration, 0);
                assert_eq!(term, "l_recon_mse");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn history_csv_layout() {
        let ds = small_data();
        let (_, h) = train_ablation(&ds, &small_config(2)).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "iteration,l_D,l_G_ad,l_recon_mse,l_perceptual,l_G_total");
        assert!(lines.next().unwrap().starts_with("0,,,"));
    }
}

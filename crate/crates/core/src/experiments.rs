//! End-to-end recipes shared by the command line and the acceptance suite:
//! the 2-D cluster run with scatter snapshots, tiny-image training with
//! evaluation, and the privacy-proportion sweep.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, LabeledDataset};
use crate::evaluation::{
    apply_method, attack_train_eval, psnr_peak, psnr_tensors, separability, AttackConfig, EvalError, Method,
    SampleSet, ScatterReport,
};
use crate::models::{ModelBundle, ModelError, NoiseSpec, Proportion};
use crate::tensor::TensorError;
use crate::trainer::{init_models, train_from, TrainConfig, TrainError, TrainHistory, TrainObserver};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = ExperimentError> = std::result::Result<T, E>;

/// Scatter panels of the toy run are drawn at these iterations plus the
/// final one.
pub const TOY_SNAPSHOTS: [usize; 3] = [0, 100, 500];

/// Held-out reconstruction error is logged at this stride.
pub const MSE_STRIDE: usize = 50;

const EVAL_NOISE_STREAM: u64 = 0x6576_616c_0000_0003;

fn eval_noise(config: &TrainConfig) -> NoiseSpec {
    NoiseSpec::new(config.noise_std, config.seed ^ EVAL_NOISE_STREAM)
}

fn mean_squared_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsePoint {
    pub iteration: usize,
    pub mse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyMetrics {
    pub iterations: usize,
    /// Held-out elementwise reconstruction MSE at iteration 500, when reached.
    pub heldout_mse_at_500: Option<f64>,
    pub heldout_mse_final: f64,
    /// Held-out accuracy of a classifier telling reconstructed from
    /// encrypted samples.
    pub separability: f64,
    pub attack_encrypted: f64,
    pub attack_original: f64,
    pub chance: f64,
    pub psnr_recon_db: f64,
    pub psnr_encrypted_db: f64,
}

#[derive(Debug, Clone)]
pub struct ToyRun {
    pub bundle: ModelBundle,
    pub history: TrainHistory,
    pub scatter: ScatterReport,
    pub heldout_mse: Vec<MsePoint>,
    pub metrics: ToyMetrics,
}

struct ToyObserver<'a> {
    held_out: &'a LabeledDataset,
    noise: NoiseSpec,
    snapshots: Vec<usize>,
    scatter: ScatterReport,
    mse: Vec<MsePoint>,
    failure: Option<ExperimentError>,
}

impl ToyObserver<'_> {
    fn observe(&mut self, completed: usize, bundle: &ModelBundle) -> Result<()> {
        let x = &self.held_out.features;
        let labels = &self.held_out.labels;
        if completed.is_multiple_of(MSE_STRIDE) || self.snapshots.contains(&completed) {
            let rec = bundle.reconstruct(x)?;
            self.mse.push(MsePoint {
                iteration: completed,
                mse: mean_squared_error(rec.values(), x.values()),
            });
        }
        if self.snapshots.contains(&completed) {
            if completed == 0 {
                self.scatter.add(x, labels, SampleSet::Original, 0)?;
            }
            let rec = bundle.reconstruct(x)?;
            let enc = bundle.encrypt(x, &self.noise)?;
            self.scatter.add(&enc, labels, SampleSet::Encrypted, completed)?;
            self.scatter.add(&rec, labels, SampleSet::Reconstructed, completed)?;
        }
        Ok(())
    }
}

impl TrainObserver for ToyObserver<'_> {
    fn on_progress(&mut self, completed: usize, bundle: &ModelBundle) -> crate::trainer::Result<()> {
        if self.failure.is_none() {
            if let Err(e) = self.observe(completed, bundle) {
                self.failure = Some(e);
            }
        }
        Ok(())
    }
}

/// Trains on 80% of `data`, keeps the rest for held-out error and scatter
/// panels, then evaluates separability and the cluster attack on the whole
/// set.
pub fn run_toy(data: &LabeledDataset, config: &TrainConfig, attack: &AttackConfig) -> Result<ToyRun> {
    let split = data.split(0.8, config.seed)?;
    let train = data.subset(&split.train)?;
    let held_out = data.subset(&split.held_out)?;
    let mut snapshots: Vec<usize> = TOY_SNAPSHOTS.iter().copied().filter(|&s| s <= config.iterations).collect();
    if !snapshots.contains(&config.iterations) {
        snapshots.push(config.iterations);
    }
    let noise = eval_noise(config);
    let mut obs = ToyObserver {
        held_out: &held_out,
        noise,
        snapshots,
        scatter: ScatterReport::default(),
        mse: Vec::new(),
        failure: None,
    };
    let bundle = init_models(&train, config)?;
    let (bundle, history) = train_from(bundle, &train, config, &mut obs)?;
    if let Some(e) = obs.failure {
        return Err(e);
    }
    // early stopping may end before the configured budget
    let done = history.len();
    if obs.mse.last().map(|p| p.iteration) != Some(done) {
        obs.observe(done, &bundle)?;
    }

    let x = &data.features;
    let rec = bundle.reconstruct(x)?;
    let enc = bundle.encrypt(x, &noise)?;
    let peak = psnr_peak(data);
    let at = |it: usize| obs.mse.iter().find(|p| p.iteration == it).map(|p| p.mse);
    let metrics = ToyMetrics {
        iterations: done,
        heldout_mse_at_500: at(500),
        heldout_mse_final: at(done).expect("final error recorded"),
        separability: separability(&rec, &enc, attack)?.accuracy,
        attack_encrypted: attack_train_eval(&data.with_features(enc.clone())?, attack)?.accuracy,
        attack_original: attack_train_eval(data, attack)?.accuracy,
        chance: 1.0 / data.class_count as f64,
        psnr_recon_db: psnr_tensors(&rec, x, peak)?,
        psnr_encrypted_db: psnr_tensors(&enc, x, peak)?,
    };
    Ok(ToyRun {
        bundle,
        history,
        scatter: obs.scatter,
        heldout_mse: obs.mse,
        metrics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub psnr_recon_db: f64,
    pub psnr_encrypted_db: f64,
    pub attack_encrypted: f64,
    pub proportion: f64,
}

/// Reconstruction and encryption quality of `bundle` on `data`, with images
/// rounded to 8 bits before measuring, plus the attack on its encryption.
pub fn evaluate_model(
    bundle: &ModelBundle,
    data: &LabeledDataset,
    noise: NoiseSpec,
    attack: &AttackConfig,
) -> Result<ModelMetrics> {
    let method = Method::Model {
        name: "model".into(),
        bundle: Box::new(bundle.clone()),
        noise,
    };
    let out = apply_method(&method, data)?;
    let peak = psnr_peak(data);
    let rec = out.reconstructed.expect("models always reconstruct");
    Ok(ModelMetrics {
        psnr_recon_db: psnr_tensors(&rec.features, &data.features, peak)?,
        psnr_encrypted_db: psnr_tensors(&out.encrypted.features, &data.features, peak)?,
        attack_encrypted: attack_train_eval(&out.encrypted, attack)?.accuracy,
        proportion: bundle.privacy_width() as f64 / bundle.feature_width() as f64,
    })
}

#[derive(Debug, Clone)]
pub struct ModelRun {
    pub bundle: ModelBundle,
    pub history: TrainHistory,
    pub metrics: ModelMetrics,
}

/// Trains on all of `data` under `config` and evaluates the result.
pub fn run_model(data: &LabeledDataset, config: &TrainConfig, attack: &AttackConfig) -> Result<ModelRun> {
    let bundle = init_models(data, config)?;
    let (bundle, history) = train_from(bundle, data, config, &mut ())?;
    let metrics = evaluate_model(&bundle, data, eval_noise(config), attack)?;
    Ok(ModelRun {
        bundle,
        history,
        metrics,
    })
}

/// The proportions swept by default.
pub fn default_proportions() -> Vec<Proportion> {
    [64, 32, 16, 8, 4, 2]
        .iter()
        .map(|&d| Proportion::new(1, d).expect("valid"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub proportion: Proportion,
    pub privacy_width: usize,
    pub psnr_recon_db: f64,
    pub psnr_encrypted_db: f64,
    pub attack_encrypted: f64,
}

/// One full training run per proportion, each from `config` with only the
/// proportion changed.
pub fn proportion_sweep(
    data: &LabeledDataset,
    config: &TrainConfig,
    proportions: &[Proportion],
    attack: &AttackConfig,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(proportions.len());
    for &p in proportions {
        let cfg = TrainConfig {
            privacy_proportion: p,
            ..*config
        };
        let run = run_model(data, &cfg, attack)?;
        rows.push(SweepRow {
            proportion: p,
            privacy_width: run.bundle.privacy_width(),
            psnr_recon_db: run.metrics.psnr_recon_db,
            psnr_encrypted_db: run.metrics.psnr_encrypted_db,
            attack_encrypted: run.metrics.attack_encrypted,
        });
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], w: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(w);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_toy_clusters, ClusterSpec};

    fn quick() -> (LabeledDataset, TrainConfig, AttackConfig) {
        let data = gen_toy_clusters(&ClusterSpec {
            points_per_cluster: 30,
            ..ClusterSpec::default()
        })
        .unwrap();
        let cfg = TrainConfig {
            iterations: 120,
            batch_size: 16,
            feature_width: 16,
            hidden_width: 16,
            privacy_proportion: Proportion::new(1, 8).unwrap(),
            ..TrainConfig::default()
        };
        let attack = AttackConfig {
            steps: 50,
            hidden_width: 16,
            ..AttackConfig::default()
        };
        (data, cfg, attack)
    }

    #[test]
    fn toy_run_records_declared_snapshots() {
        let (data, cfg, attack) = quick();
        let run = run_toy(&data, &cfg, &attack).unwrap();
        assert_eq!(run.scatter.iterations(SampleSet::Original), vec![0]);
        assert_eq!(run.scatter.iterations(SampleSet::Encrypted), vec![0, 100, 120]);
        assert_eq!(run.scatter.iterations(SampleSet::Reconstructed), vec![0, 100, 120]);
        assert_eq!(run.history.len(), 120);
        assert_eq!(run.metrics.heldout_mse_at_500, None);
        let its: Vec<usize> = run.heldout_mse.iter().map(|p| p.iteration).collect();
        assert_eq!(its, vec![0, 50, 100, 120]);
        assert!(run.metrics.heldout_mse_final.is_finite());
        assert!((run.metrics.chance - 0.1).abs() < 1e-15);
    }

    #[test]
    fn held_out_error_matches_direct_computation() {
        let (data, cfg, attack) = quick();
        let run = run_toy(&data, &cfg, &attack).unwrap();
        let split = data.split(0.8, cfg.seed).unwrap();
        let held = data.subset(&split.held_out).unwrap();
        let rec = run.bundle.reconstruct(&held.features).unwrap();
        let mut total = 0.0;
        for (r, x) in rec.values().iter().zip(held.features.values()) {
            total += (r - x).powi(2);
        }
        let expected = total / (held.len() * 2) as f64;
        assert_eq!(run.metrics.heldout_mse_final, expected);
    }

    #[test]
    fn sweep_has_one_row_per_proportion() {
        let (data, cfg, attack) = quick();
        let cfg = TrainConfig { iterations: 5, ..cfg };
        let ps = [Proportion::new(1, 8).unwrap(), Proportion::new(1, 2).unwrap()];
        let rows = proportion_sweep(&data, &cfg, &ps, &attack).unwrap();
        assert_eq!(rows.iter().map(|r| r.privacy_width).collect::<Vec<_>>(), vec![2, 8]);
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("proportion,privacy_width,psnr_recon_db,psnr_encrypted_db,attack_encrypted\n"));
        assert!(text.contains("\n1/8,2,"));
    }

    #[test]
    fn default_sweep_covers_six_proportions() {
        let ps = default_proportions();
        assert_eq!(ps.len(), 6);
        let widths: Vec<usize> = ps.iter().map(|p| p.width_of(128).unwrap()).collect();
        assert_eq!(widths, vec![2, 4, 8, 16, 32, 64]);
    }
}

//! The ten acceptance criteria of privsplit, each reduced to a verdict with
//! its measured numbers. Thresholds are fixed here and nowhere else.

use std::error::Error;
use std::fs;
use std::path::Path;
use std::time::Instant;

use clap::Parser;
use privsplit::checks::{gradient_sweep, jsd_identity_sweep, optimal_discriminator_recovery};
use privsplit::data::{gen_grating_images, gen_toy_clusters, make_tiny_image_dataset, ClusterSpec, LabeledDataset, TinyImageSpec};
use privsplit::evaluation::{compare_methods, AttackConfig, Method};
use privsplit::experiments::{default_proportions, proportion_sweep, run_model, run_toy, ModelRun, ToyRun};
use privsplit::objectives::Ablation;
use privsplit::obfuscate::{p3_decode, p3_encode, p3_reference, secret_proportion};
use privsplit::trainer::TrainConfig;

pub type Outcome = Result<Verdict, Box<dyn Error + Send + Sync>>;

pub const GRADIENT_NETWORKS: usize = 100;
pub const GRADIENT_LIMIT: f64 = 1e-4;
pub const IDENTITY_PAIRS: usize = 200;
pub const IDENTITY_LIMIT: f64 = 1e-9;
pub const RECOVERY_SAMPLES: usize = 100_000;
pub const RECOVERY_LIMIT: f64 = 0.05;
pub const TOY_ITERATIONS: usize = 2000;
pub const TOY_MSE_RATIO: f64 = 2.0;
pub const TOY_FINAL_MSE: f64 = 0.01;
pub const SEPARABILITY_MIN: f64 = 0.95;
pub const ATTACK_MAX: f64 = 0.30;
pub const ORIGINAL_ATTACK_MIN: f64 = 0.95;
pub const ABLATION_GAP_MIN: f64 = 0.20;
pub const ABLATION_PSNR_SPREAD: f64 = 5.0;
pub const PSNR_GAP_MIN: f64 = 15.0;
pub const SWEEP_PSNR_SPREAD: f64 = 5.0;
pub const P3_THRESHOLDS: [u32; 3] = [1, 10, 20];
pub const P3_CORPUS: usize = 20;
/// Pixelation factor and blur radius scaled to 32-pixel images.
pub const PIXELATE_FACTOR: usize = 5;
pub const BLUR_RADIUS: usize = 4;
pub const P3_THRESHOLD: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub id: u32,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn line(&self) -> String {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        format!("[{tag}] criterion {:>2} {}: {}", self.id, self.title, self.detail)
    }
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAILED"
    }
}

fn timed(start: Instant) -> String {
    format!("{:.1} s", start.elapsed().as_secs_f64())
}

pub fn toy_dataset() -> Result<LabeledDataset, privsplit::data::DataError> {
    gen_toy_clusters(&ClusterSpec::default())
}

pub fn toy_config() -> TrainConfig {
    TrainConfig {
        iterations: TOY_ITERATIONS,
        ..TrainConfig::default()
    }
}

pub fn image_dataset() -> Result<LabeledDataset, privsplit::data::DataError> {
    make_tiny_image_dataset(None, &TinyImageSpec::default())
}

/// Matches the `[image_train]` defaults of the command line tool.
pub fn image_config(ablation: Ablation) -> TrainConfig {
    TrainConfig {
        iterations: 3000,
        use_perceptual: true,
        ablation,
        ..TrainConfig::default()
    }
}

/// The three image trainings shared by criteria 5 to 7.
pub struct ImageRuns {
    pub data: LabeledDataset,
    pub full: ModelRun,
    pub no_collaboration: ModelRun,
    pub msednet: ModelRun,
    pub seconds: f64,
}

impl ImageRuns {
    pub fn train() -> Result<Self, Box<dyn Error + Send + Sync>> {
        let start = Instant::now();
        let data = image_dataset()?;
        let attack = AttackConfig::default();
        let full = run_model(&data, &image_config(Ablation::Full), &attack)?;
        let no_collaboration = run_model(&data, &image_config(Ablation::NoCollaborative), &attack)?;
        let msednet = run_model(&data, &image_config(Ablation::Msednet), &attack)?;
        Ok(Self {
            data,
            full,
            no_collaboration,
            msednet,
            seconds: start.elapsed().as_secs_f64(),
        })
    }
}

pub fn gradients() -> Outcome {
    let start = Instant::now();
    let err = gradient_sweep(GRADIENT_NETWORKS, Ablation::Full, 0, false)?;
    Ok(Verdict {
        id: 1,
        title: "gradients match finite differences",
        passed: err < GRADIENT_LIMIT,
        detail: format!(
            "{GRADIENT_NETWORKS} networks, max relative error {err:.3e} < {GRADIENT_LIMIT:e}; {}",
            timed(start)
        ),
    })
}

pub fn jsd_identity() -> Outcome {
    let start = Instant::now();
    let gap = jsd_identity_sweep(IDENTITY_PAIRS, 0)?;
    Ok(Verdict {
        id: 2,
        title: "shared loss at the optimum is ln 4 - 2 JSD",
        passed: gap < IDENTITY_LIMIT,
        detail: format!("{IDENTITY_PAIRS} pairs, max gap {gap:.3e} < {IDENTITY_LIMIT:e}; {}", timed(start)),
    })
}

pub fn optimal_discriminator() -> Outcome {
    let start = Instant::now();
    let rec = optimal_discriminator_recovery(RECOVERY_SAMPLES, 0)?;
    Ok(Verdict {
        id: 3,
        title: "fitted discriminator recovers p_r / (p_r + p_e)",
        passed: rec.max_error < RECOVERY_LIMIT,
        detail: format!(
            "{RECOVERY_SAMPLES} samples, max error {:.4} < {RECOVERY_LIMIT}; {}",
            rec.max_error,
            timed(start)
        ),
    })
}

pub fn toy_run() -> Result<ToyRun, Box<dyn Error + Send + Sync>> {
    Ok(run_toy(&toy_dataset()?, &toy_config(), &AttackConfig::default())?)
}

pub fn toy_experiment(run: &ToyRun, seconds: f64) -> Verdict {
    let m = &run.metrics;
    let at_500 = m.heldout_mse_at_500.unwrap_or(f64::INFINITY);
    let stable = at_500 <= TOY_MSE_RATIO * m.heldout_mse_final;
    let small = m.heldout_mse_final < TOY_FINAL_MSE;
    let separable = m.separability >= SEPARABILITY_MIN;
    let hidden = m.attack_encrypted <= ATTACK_MAX;
    let visible = m.attack_original >= ORIGINAL_ATTACK_MIN;
    Verdict {
        id: 4,
        title: "toy clusters",
        passed: stable && small && separable && hidden && visible,
        detail: format!(
            "(a) mse@500 {at_500:.4} <= {TOY_MSE_RATIO} x final {:.4} {}, final < {TOY_FINAL_MSE} {}; \
             (b) separability {:.3} >= {SEPARABILITY_MIN} {}; \
             (c) attack encrypted {:.3} <= {ATTACK_MAX} {}, original {:.3} >= {ORIGINAL_ATTACK_MIN} {} (chance {:.2}); {seconds:.1} s",
            m.heldout_mse_final,
            mark(stable),
            mark(small),
            m.separability,
            mark(separable),
            m.attack_encrypted,
            mark(hidden),
            m.attack_original,
            mark(visible),
            m.chance,
        ),
    }
}

pub fn collaboration_ablation(runs: &ImageRuns) -> Verdict {
    let (on, off) = (&runs.full.metrics, &runs.no_collaboration.metrics);
    let gap = off.attack_encrypted - on.attack_encrypted;
    let spread = (off.psnr_recon_db - on.psnr_recon_db).abs();
    let gap_ok = gap >= ABLATION_GAP_MIN;
    let spread_ok = spread <= ABLATION_PSNR_SPREAD;
    Verdict {
        id: 5,
        title: "collaborative ablation",
        passed: gap_ok && spread_ok,
        detail: format!(
            "attack with {:.3} vs without {:.3}, gap {gap:.3} >= {ABLATION_GAP_MIN} {}; \
             recon PSNR {:.2} vs {:.2} dB, difference {spread:.2} <= {ABLATION_PSNR_SPREAD} {}",
            on.attack_encrypted,
            off.attack_encrypted,
            mark(gap_ok),
            on.psnr_recon_db,
            off.psnr_recon_db,
            mark(spread_ok),
        ),
    }
}

pub fn psnr_gap(runs: &ImageRuns) -> Verdict {
    let m = &runs.full.metrics;
    let gap = m.psnr_recon_db - m.psnr_encrypted_db;
    Verdict {
        id: 6,
        title: "reconstructed vs encrypted PSNR",
        passed: gap >= PSNR_GAP_MIN,
        detail: format!(
            "recon {:.2} dB, encrypted {:.2} dB, gap {gap:.2} >= {PSNR_GAP_MIN}; image training {:.1} s",
            m.psnr_recon_db, m.psnr_encrypted_db, runs.seconds
        ),
    }
}

pub fn method_ordering(runs: &ImageRuns) -> Outcome {
    let start = Instant::now();
    let baselines = [
        Method::Pixelate { factor: PIXELATE_FACTOR },
        Method::Blur { radius: BLUR_RADIUS },
        Method::P3 { threshold: P3_THRESHOLD },
    ];
    let rows = compare_methods(&runs.data, &baselines, &AttackConfig::default())?;
    let ours = runs.full.metrics.attack_encrypted;
    let mut others: Vec<(String, f64)> = Vec::new();
    for r in rows.iter().filter(|r| baselines.iter().any(|b| b.name() == r.method)) {
        let acc = r.accuracy.ok_or_else(|| format!("{} failed: {}", r.method, r.status))?;
        others.push((r.method.clone(), acc));
    }
    others.push(("msednet".into(), runs.msednet.metrics.attack_encrypted));
    let passed = others.iter().all(|(_, acc)| ours <= *acc);
    let listing: Vec<String> = others
        .iter()
        .map(|(name, acc)| format!("{name} {acc:.3} {}", mark(ours <= *acc)))
        .collect();
    Ok(Verdict {
        id: 7,
        title: "method ordering",
        passed,
        detail: format!("ours {ours:.3} <= each of [{}]; {}", listing.join(", "), timed(start)),
    })
}

pub fn proportion_robustness() -> Outcome {
    let start = Instant::now();
    let rows = proportion_sweep(&toy_dataset()?, &toy_config(), &default_proportions(), &AttackConfig::default())?;
    let psnrs: Vec<f64> = rows.iter().map(|r| r.psnr_recon_db).collect();
    let spread = psnrs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - psnrs.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread_ok = spread <= SWEEP_PSNR_SPREAD;
    let attacks_ok = rows.iter().all(|r| r.attack_encrypted <= ATTACK_MAX);
    let listing: Vec<String> = rows
        .iter()
        .map(|r| format!("{} {:.2} dB / {:.3}", r.proportion, r.psnr_recon_db, r.attack_encrypted))
        .collect();
    Ok(Verdict {
        id: 8,
        title: "privacy proportion sweep",
        passed: spread_ok && attacks_ok,
        detail: format!(
            "PSNR spread {spread:.2} <= {SWEEP_PSNR_SPREAD} dB {}; every attack <= {ATTACK_MAX} {}; [{}]; {}",
            mark(spread_ok),
            mark(attacks_ok),
            listing.join(", "),
            timed(start)
        ),
    })
}

pub fn p3_exactness() -> Outcome {
    let start = Instant::now();
    let spec = TinyImageSpec::default();
    let (images, _) = gen_grating_images(&spec)?;
    // the generator interleaves classes, so this takes two of each
    let corpus = &images[..P3_CORPUS];
    let mut exact = true;
    let mut monotone = true;
    let mut shares = [0.0; P3_THRESHOLDS.len()];
    for img in corpus {
        let reference = p3_reference(img);
        let mut last = f64::INFINITY;
        for (k, &t) in P3_THRESHOLDS.iter().enumerate() {
            let pkg = p3_encode(img, t)?;
            exact &= p3_decode(&pkg)? == reference;
            let share = secret_proportion(&pkg);
            monotone &= share <= last;
            last = share;
            shares[k] += share / corpus.len() as f64;
        }
    }
    Ok(Verdict {
        id: 9,
        title: "P3 codec exactness",
        passed: exact && monotone,
        detail: format!(
            "{} images, decode == reference for T in {P3_THRESHOLDS:?} {}; mean secret share {:.4} >= {:.4} >= {:.4} {}; {}",
            corpus.len(),
            mark(exact),
            shares[0],
            shares[1],
            shares[2],
            mark(monotone),
            timed(start)
        ),
    })
}

fn train_toy_into(dir: &Path) -> Result<(), Box<dyn Error + Send + Sync>> {
    let out = dir.to_str().ok_or("non-UTF-8 temporary path")?;
    let cli = privsplit_cli::Cli::try_parse_from(["privsplit", "train-toy", "--seed", "0", "--out", out])?;
    privsplit_cli::run(cli).map_err(|e| format!("{e:#}"))?;
    Ok(())
}

pub fn determinism() -> Outcome {
    let start = Instant::now();
    let (a, b) = (tempfile::tempdir()?, tempfile::tempdir()?);
    train_toy_into(a.path())?;
    train_toy_into(b.path())?;
    let mut same = Vec::new();
    for name in ["history.csv", "checkpoint.json"] {
        same.push((name, fs::read(a.path().join(name))? == fs::read(b.path().join(name))?));
    }
    let passed = same.iter().all(|(_, s)| *s);
    let listing: Vec<String> = same.iter().map(|(n, s)| format!("{n} {}", if *s { "identical" } else { "DIFFERS" })).collect();
    Ok(Verdict {
        id: 10,
        title: "train-toy determinism",
        passed,
        detail: format!("two runs with seed 0: {}; {}", listing.join(", "), timed(start)),
    })
}

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use privsplit::checkpoint::Checkpoint;
use privsplit::checks::{run_checks, CheckOptions};
use privsplit::data::{gen_toy_clusters, images_to_dataset, make_tiny_image_dataset, tensor_row_to_image, ImageShape, LabeledDataset};
use privsplit::evaluation::{compare_methods, history_svg, write_report_csv, AttackReport, Method, ScatterReport};
use privsplit::experiments::{proportion_sweep, run_model, run_toy, write_sweep_csv};
use privsplit::image::{load_pixmap, save_pixmap, Image};
use privsplit::models::{ModelBundle, NoiseSpec, Proportion};
use privsplit::obfuscate::{
    deserialize_public, deserialize_secret, gaussian_blur, p3_encode, p3_restore, pixelate, serialize_public,
    serialize_secret,
};
use privsplit::objectives::Ablation;
use privsplit::trainer::{TrainConfig, TrainHistory};
use serde::Serialize;

use crate::config::{Config, DatasetKind, RESOLVED_CONFIG, SEED_ENV};
use crate::{CheckFailed, Cli, Command, ObfuscateMethod, UsageError};

pub const CHECKPOINT: &str = "checkpoint.json";
pub const HISTORY: &str = "history.csv";
pub const LOSSES_SVG: &str = "losses.svg";
pub const SCATTER_CSV: &str = "scatter.csv";
pub const SCATTER_SVG: &str = "scatter.svg";
pub const METRICS: &str = "metrics.json";
pub const SAMPLES: &str = "samples.pgm";
pub const ATTACK_CSV: &str = "attack.csv";
pub const SWEEP_CSV: &str = "sweep.csv";
/// Timing sidecar; the only output that differs between identical runs.
pub const META: &str = "run.meta.json";

const NOISE_STREAM: u64 = 0x636c_695f_6e6f_6973;

struct Run {
    out: PathBuf,
    started: Instant,
    command: &'static str,
}

impl Run {
    fn start(cli_out: Option<&Path>, command: &'static str, cfg: &Config) -> Result<Self> {
        let out = cli_out.map(Path::to_path_buf).unwrap_or_else(|| Path::new("runs").join(command));
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        write_text(&out.join(RESOLVED_CONFIG), &cfg.to_toml())?;
        Ok(Self {
            out,
            started: Instant::now(),
            command,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn finish(self) -> Result<()> {
        #[derive(Serialize)]
        struct Meta {
            command: &'static str,
            version: &'static str,
            finished_unix_s: u64,
            elapsed_s: f64,
        }
        let meta = Meta {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            finished_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            elapsed_s: self.started.elapsed().as_secs_f64(),
        };
        write_json(&self.path(META), &meta)?;
        println!("outputs in {}", self.out.display());
        Ok(())
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).with_context(|| format!("writing {}", path.display()))
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let env = std::env::var(SEED_ENV).ok();
    cfg.resolve_seed(cli.seed, env.as_deref())?;
    Ok(cfg)
}

fn dataset(cfg: &Config, kind: DatasetKind) -> Result<LabeledDataset> {
    Ok(match kind {
        DatasetKind::Toy => gen_toy_clusters(&cfg.clusters)?,
        DatasetKind::Images => make_tiny_image_dataset(cfg.dataset.data_dir.as_deref(), &cfg.images)
            .with_context(|| match &cfg.dataset.data_dir {
                Some(d) => format!("loading images from {}", d.display()),
                None => "generating builtin images".to_owned(),
            })?,
    })
}

fn save_run(run: &Run, bundle: &ModelBundle, history: &TrainHistory, train: &TrainConfig) -> Result<()> {
    let mut ckpt = Checkpoint::new(bundle.clone(), history.clone());
    ckpt.train_config = Some(*train);
    ckpt.save(run.path(CHECKPOINT))
        .with_context(|| format!("writing {}", run.path(CHECKPOINT).display()))?;
    history.save_csv(&run.path(HISTORY))?;
    write_text(&run.path(LOSSES_SVG), &history_svg(history))
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let out = cli.out.as_deref();
    match cli.command {
        Command::Check {
            networks,
            recovery_samples,
            inject_gradient_fault,
        } => check(&cfg, networks, recovery_samples, inject_gradient_fault),
        Command::TrainToy { iterations } => train_toy(cfg, out, iterations),
        Command::TrainImage {
            iterations,
            proportion,
            data_dir,
        } => train_image(cfg, out, iterations, proportion, data_dir),
        Command::Obfuscate {
            input,
            method,
            output,
            factor,
            radius,
            threshold,
            secret,
            public_stream,
            checkpoint,
            reconstruction,
        } => {
            let b = &cfg.baselines;
            let stem = output.file_name().unwrap_or_default().to_string_lossy();
            write_text(&output.with_file_name(format!("{stem}.config.toml")), &cfg.to_toml())?;
            obfuscate(Obfuscation {
                input,
                method,
                output,
                factor: factor.unwrap_or(b.pixelate_factor),
                radius: radius.unwrap_or(b.blur_radius),
                threshold: threshold.unwrap_or(b.p3_threshold),
                secret,
                public_stream,
                checkpoint,
                reconstruction,
                noise_seed: cfg.seed.unwrap_or(0) ^ NOISE_STREAM,
            })
        }
        Command::Attack {
            dataset,
            models,
            train,
            no_baselines,
        } => attack(cfg, out, dataset, &models, train, no_baselines),
        Command::SweepProportion { dataset } => sweep(cfg, out, dataset),
        Command::Report { run_dir } => report(&run_dir, out),
    }
}

fn check(cfg: &Config, networks: Option<usize>, recovery: Option<usize>, fault: bool) -> Result<()> {
    let defaults = CheckOptions::default();
    let opts = CheckOptions {
        seed: cfg.seed.unwrap_or(0),
        networks: networks.unwrap_or(defaults.networks),
        recovery_samples: recovery.unwrap_or(defaults.recovery_samples),
        inject_gradient_fault: fault,
        ..defaults
    };
    let outcomes = run_checks(&opts)?;
    let mut failed = 0;
    for o in &outcomes {
        println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
        failed += usize::from(!o.passed);
    }
    if failed > 0 {
        return Err(CheckFailed(format!("{failed} of {} checks failed", outcomes.len())).into());
    }
    Ok(())
}

fn train_toy(mut cfg: Config, out: Option<&Path>, iterations: Option<usize>) -> Result<()> {
    if let Some(n) = iterations {
        cfg.train.iterations = n;
    }
    let run = Run::start(out, "train-toy", &cfg)?;
    let data = gen_toy_clusters(&cfg.clusters)?;
    let toy = run_toy(&data, &cfg.train, &cfg.attack)?;
    save_run(&run, &toy.bundle, &toy.history, &cfg.train)?;
    toy.scatter.save_csv(&run.path(SCATTER_CSV))?;
    toy.scatter.save_svg(&run.path(SCATTER_SVG))?;
    #[derive(Serialize)]
    struct Metrics<'a> {
        #[serde(flatten)]
        summary: &'a privsplit::experiments::ToyMetrics,
        heldout_mse: &'a [privsplit::experiments::MsePoint],
    }
    write_json(
        &run.path(METRICS),
        &Metrics {
            summary: &toy.metrics,
            heldout_mse: &toy.heldout_mse,
        },
    )?;
    let m = &toy.metrics;
    println!(
        "held-out mse {:.5} (iteration 500: {}), separability {:.3}, attack {:.3} on encrypted vs {:.3} on originals",
        m.heldout_mse_final,
        m.heldout_mse_at_500.map_or("n/a".to_owned(), |v| format!("{v:.5}")),
        m.separability,
        m.attack_encrypted,
        m.attack_original
    );
    run.finish()
}

/// Contact sheet with one column per class: originals, reconstructions and
/// encryptions in three rows.
fn sample_sheet(data: &LabeledDataset, bundle: &ModelBundle, noise: &NoiseSpec) -> Result<Option<Image>> {
    let Some(shape) = data.image_shape else {
        return Ok(None);
    };
    let mut picks = Vec::new();
    for c in 0..data.class_count {
        if let Some(i) = data.labels.iter().position(|&l| l == c) {
            picks.push(i);
        }
    }
    let x = data.features.select_rows(&picks)?;
    let rows = [x.clone(), bundle.reconstruct(&x)?, bundle.encrypt(&x, noise)?];
    let (w, h, ch) = (shape.width, shape.height, shape.channels);
    let mut sheet = Image::filled(w * picks.len(), h * rows.len(), ch, 0)?;
    for (r, t) in rows.iter().enumerate() {
        for i in 0..picks.len() {
            let img = tensor_row_to_image(t.row(i), shape)?;
            for y in 0..h {
                for xx in 0..w {
                    for c in 0..ch {
                        sheet.set(i * w + xx, r * h + y, c, img.get(xx, y, c));
                    }
                }
            }
        }
    }
    Ok(Some(sheet))
}

fn train_image(
    mut cfg: Config,
    out: Option<&Path>,
    iterations: Option<usize>,
    proportion: Option<String>,
    data_dir: Option<PathBuf>,
) -> Result<()> {
    if let Some(n) = iterations {
        cfg.image_train.iterations = n;
    }
    if let Some(p) = proportion {
        cfg.image_train.privacy_proportion = p.parse::<Proportion>().map_err(UsageError)?;
        cfg.validate()?;
    }
    if data_dir.is_some() {
        cfg.dataset.data_dir = data_dir;
    }
    let run = Run::start(out, "train-image", &cfg)?;
    let data = dataset(&cfg, DatasetKind::Images)?;
    let result = run_model(&data, &cfg.image_train, &cfg.attack)?;
    save_run(&run, &result.bundle, &result.history, &cfg.image_train)?;
    write_json(&run.path(METRICS), &result.metrics)?;
    let noise = NoiseSpec::new(cfg.image_train.noise_std, cfg.image_train.seed ^ NOISE_STREAM);
    if let Some(sheet) = sample_sheet(&data, &result.bundle, &noise)? {
        save_pixmap(&sheet, run.path(SAMPLES))?;
    }
    let m = &result.metrics;
    println!(
        "PSNR reconstructed {:.2} dB, encrypted {:.2} dB, attack on encrypted {:.3}",
        m.psnr_recon_db, m.psnr_encrypted_db, m.attack_encrypted
    );
    run.finish()
}

struct Obfuscation {
    input: PathBuf,
    method: ObfuscateMethod,
    output: PathBuf,
    factor: usize,
    radius: usize,
    threshold: u32,
    secret: Option<PathBuf>,
    public_stream: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    reconstruction: Option<PathBuf>,
    noise_seed: u64,
}

fn save_image(img: &Image, path: &Path) -> Result<()> {
    save_pixmap(img, path).with_context(|| format!("writing {}", path.display()))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn obfuscate(o: Obfuscation) -> Result<()> {
    let stream_path = o.public_stream.clone().unwrap_or_else(|| o.output.with_extension("p3c"));
    if o.method == ObfuscateMethod::P3Decode {
        let secret_path = o.secret.as_ref().ok_or_else(|| UsageError("p3-decode needs --secret".into()))?;
        let public = deserialize_public(&read_bytes(&o.input)?)?;
        let secret = deserialize_secret(&read_bytes(secret_path)?)?;
        return save_image(&p3_restore(&public, &secret)?, &o.output);
    }
    let img = load_pixmap(&o.input).with_context(|| format!("reading {}", o.input.display()))?;
    match o.method {
        ObfuscateMethod::Pixelate => save_image(&pixelate(&img, o.factor).map_err(|e| UsageError(e.to_string()))?, &o.output),
        ObfuscateMethod::Blur => save_image(&gaussian_blur(&img, o.radius), &o.output),
        ObfuscateMethod::P3 => {
            let secret_path = o.secret.as_ref().ok_or_else(|| UsageError("p3 needs --secret".into()))?;
            let pkg = p3_encode(&img, o.threshold).map_err(|e| UsageError(e.to_string()))?;
            save_image(&pkg.public_image, &o.output)?;
            fs::write(secret_path, serialize_secret(&pkg)).with_context(|| format!("writing {}", secret_path.display()))?;
            fs::write(&stream_path, serialize_public(&pkg.public))
                .with_context(|| format!("writing {}", stream_path.display()))
        }
        ObfuscateMethod::Model => {
            let path = o.checkpoint.as_ref().ok_or_else(|| UsageError("model needs --checkpoint".into()))?;
            let ckpt = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
            let bundle = ckpt.bundle;
            let shape = ImageShape {
                width: img.width(),
                height: img.height(),
                channels: img.channels(),
            };
            if shape.len() != bundle.config.input_width {
                return Err(UsageError(format!(
                    "{}x{}x{} image does not fit a model for {} inputs",
                    shape.width, shape.height, shape.channels, bundle.config.input_width
                ))
                .into());
            }
            let x = images_to_dataset(std::slice::from_ref(&img), vec![0], 1)?.features;
            let std = ckpt.train_config.map_or(1.0, |c| c.noise_std);
            let noise = NoiseSpec::new(std, o.noise_seed);
            let enc = bundle.encrypt(&x, &noise)?;
            save_image(&tensor_row_to_image(enc.row(0), shape)?, &o.output)?;
            if let Some(r) = &o.reconstruction {
                let rec = bundle.reconstruct(&x)?;
                save_image(&tensor_row_to_image(rec.row(0), shape)?, r)?;
            }
            Ok(())
        }
        ObfuscateMethod::P3Decode => unreachable!(),
    }
}

fn parse_model_arg(arg: &str) -> Result<(String, PathBuf)> {
    match arg.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_owned(), PathBuf::from(path))),
        _ => Err(UsageError(format!("--model expects NAME=PATH, got `{arg}`")).into()),
    }
}

fn print_rows(rows: &[AttackReport]) {
    println!("{:<16} {:>9} {:>12} {:>12}  status", "method", "accuracy", "psnr_rec", "psnr_enc");
    let f = |v: Option<f64>| v.map_or("-".to_owned(), |v| format!("{v:.3}"));
    for r in rows {
        println!(
            "{:<16} {:>9} {:>12} {:>12}  {}",
            r.method,
            f(r.accuracy),
            f(r.psnr_recon_db),
            f(r.psnr_encrypted_db),
            r.status
        );
    }
}

fn attack(
    mut cfg: Config,
    out: Option<&Path>,
    kind: Option<DatasetKind>,
    models: &[String],
    train: bool,
    no_baselines: bool,
) -> Result<()> {
    if let Some(k) = kind {
        cfg.dataset.kind = k;
    }
    let kind = cfg.dataset.kind;
    let run = Run::start(out, "attack", &cfg)?;
    let data = dataset(&cfg, kind)?;
    let train_cfg = *cfg.train_for(kind);
    let noise = NoiseSpec::new(train_cfg.noise_std, train_cfg.seed ^ NOISE_STREAM);
    let mut methods = Vec::new();
    if train {
        for (name, ablation) in [("ours", Ablation::Full), ("msednet", Ablation::Msednet)] {
            let model_cfg = TrainConfig { ablation, ..train_cfg };
            let result = run_model(&data, &model_cfg, &cfg.attack)?;
            methods.push(Method::Model {
                name: name.into(),
                bundle: Box::new(result.bundle),
                noise,
            });
        }
    }
    for m in models {
        let (name, path) = parse_model_arg(m)?;
        let bundle = Checkpoint::load(&path)
            .with_context(|| format!("loading {}", path.display()))?
            .bundle;
        methods.push(Method::Model {
            name,
            bundle: Box::new(bundle),
            noise,
        });
    }
    if !no_baselines {
        let b = &cfg.baselines;
        methods.extend([
            Method::Pixelate {
                factor: b.pixelate_factor,
            },
            Method::Blur { radius: b.blur_radius },
            Method::P3 {
                threshold: b.p3_threshold,
            },
        ]);
    }
    let rows = compare_methods(&data, &methods, &cfg.attack)?;
    write_report_csv(&rows, create(&run.path(ATTACK_CSV))?)?;
    print_rows(&rows);
    let failed: Vec<&str> = rows.iter().filter(|r| !r.is_ok()).map(|r| r.method.as_str()).collect();
    if !failed.is_empty() {
        eprintln!("warning: no result for {}", failed.join(", "));
    }
    run.finish()
}

fn sweep(mut cfg: Config, out: Option<&Path>, kind: Option<DatasetKind>) -> Result<()> {
    if let Some(k) = kind {
        cfg.dataset.kind = k;
    }
    let kind = cfg.dataset.kind;
    let run = Run::start(out, "sweep-proportion", &cfg)?;
    let data = dataset(&cfg, kind)?;
    let rows = proportion_sweep(&data, cfg.train_for(kind), &cfg.sweep.proportions, &cfg.attack)?;
    write_sweep_csv(&rows, create(&run.path(SWEEP_CSV))?)?;
    println!("{:<10} {:>6} {:>10} {:>10} {:>8}", "proportion", "width", "psnr_rec", "psnr_enc", "attack");
    for r in &rows {
        println!(
            "{:<10} {:>6} {:>10.2} {:>10.2} {:>8.3}",
            r.proportion.to_string(),
            r.privacy_width,
            r.psnr_recon_db,
            r.psnr_encrypted_db,
            r.attack_encrypted
        );
    }
    run.finish()
}

fn report(run_dir: &Path, out: Option<&Path>) -> Result<()> {
    let out = out.unwrap_or(run_dir);
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut found = false;
    let history_path = run_dir.join(HISTORY);
    if history_path.exists() {
        let f = fs::File::open(&history_path).with_context(|| format!("reading {}", history_path.display()))?;
        let history = TrainHistory::read_csv(f)?;
        write_text(&out.join(LOSSES_SVG), &history_svg(&history))?;
        if let Some(last) = history.records.last() {
            let f = |v: Option<f64>| v.map_or("-".to_owned(), |v| format!("{v:.5}"));
            println!(
                "{} iterations; last l_D {} l_G_ad {} l_recon_mse {:.5} l_G_total {:.5}",
                history.len(),
                f(last.l_d),
                f(last.l_g_ad),
                last.l_recon_mse,
                last.l_g_total
            );
        }
        found = true;
    }
    let scatter_path = run_dir.join(SCATTER_CSV);
    if scatter_path.exists() {
        let f = fs::File::open(&scatter_path).with_context(|| format!("reading {}", scatter_path.display()))?;
        let scatter = ScatterReport::read_csv(f)?;
        scatter.save_svg(&out.join(SCATTER_SVG))?;
        println!("{} scatter points redrawn", scatter.points.len());
        found = true;
    }
    for table in [ATTACK_CSV, SWEEP_CSV, METRICS] {
        let p = run_dir.join(table);
        if p.exists() {
            println!("--- {table}");
            print!("{}", fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?);
            found = true;
        }
    }
    if !found {
        bail!(UsageError(format!("{} holds no run outputs", run_dir.display())));
    }
    Ok(())
}

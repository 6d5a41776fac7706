//! Self-checks backing the theory: finite-difference gradient checks of
//! the full objective, the closed form of the shared loss at the optimal
//! discriminator, and recovery of the optimal discriminator from samples.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adam::AdamConfig;
use crate::autodiff::Graph;
use crate::gradcheck::grad_check;
use crate::models::{build_models, ModelBundle, ModelConfig, Proportion};
use crate::objectives::{
    build_objective, collaborative_loss_at_optimum, fit_per_bin_discriminator, jsd, optimal_discriminator,
    Ablation, DiscreteDistributionPair, ObjectiveError, DEFAULT_LAMBDA,
};
use crate::tensor::{Tensor, TensorError};

pub type Result<T, E = ObjectiveError> = std::result::Result<T, E>;

pub const GRADIENT_TOLERANCE: f64 = 1e-4;
pub const IDENTITY_TOLERANCE: f64 = 1e-9;
pub const RECOVERY_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOptions {
    pub seed: u64,
    pub networks: usize,
    pub distribution_pairs: usize,
    pub recovery_samples: usize,
    /// Negate every parameter gradient, to prove the checks can fail.
    pub inject_gradient_fault: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            networks: 100,
            distribution_pairs: 200,
            recovery_samples: 100_000,
            inject_gradient_fault: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn small_bundle(rng: &mut ChaCha8Rng) -> Result<ModelBundle> {
    let cfg = ModelConfig {
        input_width: rng.random_range(2..=4),
        feature_width: 8,
        privacy_proportion: if rng.random_bool(0.5) {
            Proportion::new(1, 4).unwrap()
        } else {
            Proportion::new(1, 2).unwrap()
        },
        hidden_width: rng.random_range(3..=6),
        discriminator_hidden: rng.random_range(3..=5),
        discriminator_layers: 5,
        perceptual_width: rng.random_range(3..=5),
        seed: rng.random(),
    };
    Ok(build_models(&cfg)?)
}

fn trainable_params(b: &ModelBundle) -> Vec<f64> {
    let mut p = b.encoder.flat_params();
    p.extend(b.decoder.flat_params());
    p.extend(b.discriminator.flat_params());
    p
}

fn with_params(b: &ModelBundle, flat: &[f64]) -> Result<ModelBundle> {
    let mut out = b.clone();
    let (ne, nd) = (out.encoder.flat_params().len(), out.decoder.flat_params().len());
    out.encoder.set_flat_params(&flat[..ne])?;
    out.decoder.set_flat_params(&flat[ne..ne + nd])?;
    out.discriminator.set_flat_params(&flat[ne + nd..])?;
    Ok(out)
}

/// Largest relative gradient error of `ablation`'s objective (perceptual
/// term on) over one random batch for `bundle`.
pub fn objective_gradient_error(
    bundle: &ModelBundle,
    ablation: Ablation,
    rng: &mut ChaCha8Rng,
    fault: bool,
) -> Result<f64> {
    let k = 3;
    let x = Tensor::randn(vec![k, bundle.config.input_width], 1.0, rng)?;
    let noise = Tensor::randn(vec![k, bundle.privacy_width()], 1.0, rng)?;
    let f = |flat: &[f64]| -> std::result::Result<(f64, Vec<f64>), TensorError> {
        let b = with_params(bundle, flat).map_err(|e| TensorError::Invalid {
            op: "gradient check",
            msg: e.to_string(),
        })?;
        let mut g = Graph::new();
        g.set_gradient_fault(fault);
        let xn = g.constant(x.clone())?;
        let nn = g.constant(noise.clone())?;
        let nodes = build_objective(&mut g, &b, xn, nn, ablation, DEFAULT_LAMBDA, true).map_err(|e| {
            TensorError::Invalid {
                op: "gradient check",
                msg: e.to_string(),
            }
        })?;
        let value = g.value(nodes.total).item()?;
        let grads = g.backward(nodes.total)?;
        let mut flat = b.encoder.flat_grads(&grads);
        flat.extend(b.decoder.flat_grads(&grads));
        flat.extend(b.discriminator.flat_grads(&grads));
        Ok((value, flat))
    };
    Ok(grad_check(f, &trainable_params(bundle), 1e-3)?)
}

/// Worst gradient error over `networks` random small bundles.
pub fn gradient_sweep(networks: usize, ablation: Ablation, seed: u64, fault: bool) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..networks {
        let b = small_bundle(&mut rng)?;
        worst = worst.max(objective_gradient_error(&b, ablation, &mut rng, fault)?);
    }
    Ok(worst)
}

fn random_distribution(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // occasional empty bins exercise the 0·ln 0 convention
    let raw: Vec<f64> = (0..n)
        .map(|_| if rng.random_bool(0.15) { 0.0 } else { rng.random::<f64>() })
        .collect();
    let total: f64 = raw.iter().sum();
    if total == 0.0 {
        let mut v = vec![0.0; n];
        v[0] = 1.0;
        return v;
    }
    let mut p: Vec<f64> = raw.iter().map(|v| v / total).collect();
    // push the rounding residue into the largest bin
    let residue = 1.0 - p.iter().sum::<f64>();
    let top = (0..n).fold(0, |b, i| if p[i] > p[b] { i } else { b });
    p[top] += residue;
    p
}

/// Largest `|loss at D* − (ln 4 − 2·JSD)|` over random pairs with supports
/// of 2 to 32 bins.
pub fn jsd_identity_sweep(pairs: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let n = rng.random_range(2..=32);
        let pair = DiscreteDistributionPair::new(random_distribution(&mut rng, n), random_distribution(&mut rng, n))?;
        let gap = (collaborative_loss_at_optimum(&pair) - (4f64.ln() - 2.0 * jsd(&pair))).abs();
        worst = worst.max(gap);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    pub p_r: Vec<f64>,
    pub p_e: Vec<f64>,
    pub fitted: Vec<f64>,
    /// Largest error over bins whose mixture mass exceeds 0.01.
    pub max_error: f64,
}

/// Fits a per-bin discriminator to samples of two known distributions on
/// 8 bins and compares it with `p_r / (p_r + p_e)`.
pub fn optimal_discriminator_recovery(samples: usize, seed: u64) -> Result<RecoveryResult> {
    let bins = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let raw: Vec<f64> = (0..bins).map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        raw.iter().map(|v| v / s).collect()
    };
    let (p_r, p_e) = (draw(&mut rng), draw(&mut rng));
    let sample = |p: &[f64], rng: &mut ChaCha8Rng| -> Vec<usize> {
        let dist = WeightedIndex::new(p).expect("positive weights");
        (0..samples).map(|_| dist.sample(rng)).collect()
    };
    let s_r = sample(&p_r, &mut rng);
    let s_e = sample(&p_e, &mut rng);
    let adam = AdamConfig {
        alpha: 0.05,
        ..AdamConfig::default()
    };
    let fitted = fit_per_bin_discriminator(&s_r, &s_e, bins, 3000, adam)?;
    let pair = DiscreteDistributionPair::new(p_r.clone(), p_e.clone())?;
    let mut max_error: f64 = 0.0;
    for (b, &d) in fitted.iter().enumerate() {
        if (p_r[b] + p_e[b]) / 2.0 > 0.01 {
            max_error = max_error.max((d - optimal_discriminator(&pair, b)?).abs());
        }
    }
    Ok(RecoveryResult {
        p_r,
        p_e,
        fitted,
        max_error,
    })
}

/// Runs every check; the text of each outcome depends only on the options.
pub fn run_checks(opts: &CheckOptions) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for (name, ablation, networks) in [
        ("gradient: full objective", Ablation::Full, opts.networks),
        ("gradient: decomposition ablation", Ablation::Msednet, opts.networks.div_ceil(4)),
    ] {
        let err = gradient_sweep(networks, ablation, opts.seed, opts.inject_gradient_fault)?;
        out.push(CheckOutcome {
            name,
            passed: err < GRADIENT_TOLERANCE,
            detail: format!("{networks} networks, max relative error {err:.3e} (limit {GRADIENT_TOLERANCE:e})"),
        });
    }
    let gap = jsd_identity_sweep(opts.distribution_pairs, opts.seed)?;
    out.push(CheckOutcome {
        name: "shared loss at optimum equals ln 4 - 2 JSD",
        passed: gap < IDENTITY_TOLERANCE,
        detail: format!(
            "{} pairs, max gap {gap:.3e} (limit {IDENTITY_TOLERANCE:e})",
            opts.distribution_pairs
        ),
    });
    let rec = optimal_discriminator_recovery(opts.recovery_samples, opts.seed)?;
    out.push(CheckOutcome {
        name: "fitted discriminator recovers p_r / (p_r + p_e)",
        passed: rec.max_error < RECOVERY_TOLERANCE,
        detail: format!(
            "{} samples per side, max error {:.3e} (limit {RECOVERY_TOLERANCE})",
            opts.recovery_samples, rec.max_error
        ),
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradients_of_both_objectives_agree_with_differences() {
        assert!(gradient_sweep(5, Ablation::Full, 1, false).unwrap() < GRADIENT_TOLERANCE);
        assert!(gradient_sweep(3, Ablation::Msednet, 2, false).unwrap() < GRADIENT_TOLERANCE);
        assert!(gradient_sweep(3, Ablation::NoCollaborative, 3, false).unwrap() < GRADIENT_TOLERANCE);
    }

    #[test]
    fn injected_fault_is_caught() {
        assert!(gradient_sweep(1, Ablation::Full, 1, true).unwrap() > 0.5);
    }

    #[test]
    fn identity_holds_on_a_few_pairs() {
        assert!(jsd_identity_sweep(20, 5).unwrap() < IDENTITY_TOLERANCE);
    }

    #[test]
    fn recovery_on_small_sample() {
        let r = optimal_discriminator_recovery(20_000, 4).unwrap();
        assert!(r.max_error < RECOVERY_TOLERANCE, "{r:?}");
    }

    #[test]
    fn random_distributions_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for n in 2..40 {
            let p = random_distribution(&mut rng, n);
            assert!(DiscreteDistributionPair::new(p.clone(), p).is_ok());
        }
    }

    #[test]
    fn report_is_deterministic() {
        let opts = CheckOptions {
            networks: 2,
            distribution_pairs: 5,
            recovery_samples: 5_000,
            ..CheckOptions::default()
        };
        let a = run_checks(&opts).unwrap();
        assert_eq!(a, run_checks(&opts).unwrap());
        assert_eq!(a.len(), 4);
    }
}

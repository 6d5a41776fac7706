//! Loss functions for the discriminator and the encryption model, plus
//! closed-form divergence quantities for discrete distributions.
//!
//! The discriminator and the encryption model share one adversarial
//! objective: BCE of the discriminator on reconstructed samples against 1
//! plus BCE on encrypted samples against 0. At the optimal discriminator
//! `p_r / (p_r + p_e)` that objective equals `ln 4 − 2·JSD(p_r ‖ p_e)`.

use std::f64::consts::LN_2;

use thiserror::Error;

use crate::adam::{adam_step, AdamConfig, AdamState};
use crate::autodiff::{Graph, NodeId, ParamKey, PROB_EPS};
use crate::models::{ForwardNodes, Mlp, ModelBundle, ModelError};
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("BCE target must be 0 or 1, got {0}")]
    BadTarget(f64),
    #[error("{0} batch is empty")]
    EmptyBatch(&'static str),
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch(Vec<usize>, Vec<usize>),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("both densities are zero at bin {0}")]
    ZeroDensity(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = ObjectiveError> = std::result::Result<T, E>;

/// Default weight of the perceptual reconstruction term.
pub const DEFAULT_LAMBDA: f64 = 0.01;

pub fn bce(p: f64, target: f64) -> Result<f64> {
    if target != 0.0 && target != 1.0 {
        return Err(ObjectiveError::BadTarget(target));
    }
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    Ok(-(target * p.ln() + (1.0 - target) * (1.0 - p).ln()))
}

fn mean_bce(ps: &[f64], target: f64, name: &'static str) -> Result<f64> {
    if ps.is_empty() {
        return Err(ObjectiveError::EmptyBatch(name));
    }
    let mut s = 0.0;
    for &p in ps {
        s += bce(p, target)?;
    }
    Ok(s / ps.len() as f64)
}

/// Mean BCE of `d_on_recon` against 1 plus mean BCE of `d_on_encrypted`
/// against 0.
pub fn discriminator_loss(d_on_recon: &[f64], d_on_encrypted: &[f64]) -> Result<f64> {
    Ok(mean_bce(d_on_recon, 1.0, "reconstructed")? + mean_bce(d_on_encrypted, 0.0, "encrypted")?)
}

/// The encryption model's adversarial term. Numerically identical to
/// [`discriminator_loss`]; only the parameters it is differentiated against
/// differ.
pub fn generator_adversarial_loss(d_on_recon: &[f64], d_on_encrypted: &[f64]) -> Result<f64> {
    discriminator_loss(d_on_recon, d_on_encrypted)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionLoss {
    pub recon_mse: f64,
    /// Unweighted mean squared perceptual-feature difference.
    pub perceptual: f64,
    pub combined: f64,
}

fn mean_sq_diff(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(ObjectiveError::ShapeMismatch(a.shape().to_vec(), b.shape().to_vec()));
    }
    let s = a
        .values()
        .iter()
        .zip(b.values())
        .fold(0.0, |acc, (x, y)| acc + (x - y) * (x - y));
    Ok(s / a.len() as f64)
}

pub fn reconstruction_loss(x_r: &Tensor, x: &Tensor, phi: &Mlp, lambda: f64) -> Result<ReconstructionLoss> {
    let recon_mse = mean_sq_diff(x_r, x)?;
    let perceptual = mean_sq_diff(&phi.infer(x_r)?, &phi.infer(x)?)?;
    Ok(ReconstructionLoss {
        recon_mse,
        perceptual,
        combined: recon_mse + lambda * perceptual,
    })
}

/// Reconstruction loss minus the perceptual distance between the encrypted
/// sample and the input.
pub fn msednet_loss(x: &Tensor, x_r: &Tensor, x_e: &Tensor, phi: &Mlp, lambda: f64) -> Result<f64> {
    let recon = reconstruction_loss(x_r, x, phi, lambda)?;
    let enc = mean_sq_diff(&phi.infer(x_e)?, &phi.infer(x)?)?;
    Ok(recon.combined - enc)
}

/// A pair of probability vectors over a shared finite support.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistributionPair {
    p_r: Vec<f64>,
    p_e: Vec<f64>,
}

impl DiscreteDistributionPair {
    pub fn new(p_r: Vec<f64>, p_e: Vec<f64>) -> Result<Self> {
        if p_r.len() != p_e.len() || p_r.is_empty() {
            return Err(ObjectiveError::InvalidDistribution(format!(
                "support sizes {} and {}",
                p_r.len(),
                p_e.len()
            )));
        }
        for (name, p) in [("p_r", &p_r), ("p_e", &p_e)] {
            if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(ObjectiveError::InvalidDistribution(format!("{name} has a negative entry")));
            }
            let total: f64 = p.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(ObjectiveError::InvalidDistribution(format!("{name} sums to {total}")));
            }
        }
        Ok(Self { p_r, p_e })
    }

    pub fn support_size(&self) -> usize {
        self.p_r.len()
    }

    pub fn p_r(&self) -> &[f64] {
        &self.p_r
    }

    pub fn p_e(&self) -> &[f64] {
        &self.p_e
    }
}

/// `p_r / (p_r + p_e)` at `bin`.
pub fn optimal_discriminator(pair: &DiscreteDistributionPair, bin: usize) -> Result<f64> {
    let (r, e) = (pair.p_r[bin], pair.p_e[bin]);
    if r + e <= 0.0 {
        return Err(ObjectiveError::ZeroDensity(bin));
    }
    Ok(r / (r + e))
}

/// `KL(p ‖ q)` in nats with `0·ln 0 = 0`.
pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (a / b).ln())
        .sum()
}

pub fn jsd(pair: &DiscreteDistributionPair) -> f64 {
    let m: Vec<f64> = pair.p_r.iter().zip(&pair.p_e).map(|(a, b)| 0.5 * (a + b)).collect();
    let v = 0.5 * kl(&pair.p_r, &m) + 0.5 * kl(&pair.p_e, &m);
    v.clamp(0.0, LN_2)
}

/// The shared adversarial objective evaluated exactly, as an expectation
/// over the two distributions, with the discriminator at its optimum.
pub fn collaborative_loss_at_optimum(pair: &DiscreteDistributionPair) -> f64 {
    let mut loss = 0.0;
    for (&r, &e) in pair.p_r.iter().zip(&pair.p_e) {
        if r + e == 0.0 {
            continue;
        }
        let d = r / (r + e);
        if r > 0.0 {
            loss -= r * d.ln();
        }
        if e > 0.0 {
            loss -= e * (1.0 - d).ln();
        }
    }
    loss
}

/// Fits one free discriminator value per bin to samples drawn from the two
/// distributions by minimizing the shared BCE objective with Adam. Returns
/// the fitted probabilities.
pub fn fit_per_bin_discriminator(
    samples_r: &[usize],
    samples_e: &[usize],
    bins: usize,
    steps: usize,
    adam: AdamConfig,
) -> Result<Vec<f64>> {
    if samples_r.is_empty() || samples_e.is_empty() {
        return Err(ObjectiveError::EmptyBatch("per-bin discriminator"));
    }
    let mut freq_r = vec![0.0; bins];
    let mut freq_e = vec![0.0; bins];
    for &b in samples_r {
        freq_r[b] += 1.0 / samples_r.len() as f64;
    }
    for &b in samples_e {
        freq_e[b] += 1.0 / samples_e.len() as f64;
    }
    let w_r = Tensor::new(vec![bins], freq_r)?;
    let w_e = Tensor::new(vec![bins], freq_e)?;
    let ones = Tensor::filled(vec![bins], 1.0)?;
    let key = ParamKey { owner: 0, index: 0 };
    let mut logits = Tensor::zeros(vec![bins])?;
    let mut state = AdamState::new(bins, adam);

    let eval = |logits: &Tensor| -> Result<(Graph, NodeId, NodeId)> {
        let mut g = Graph::new();
        let z = g.param(key, logits)?;
        let d = g.activation(z, crate::autodiff::Activation::Sigmoid)?;
        let one = g.constant(ones.clone())?;
        let not_d = g.sub(one, d)?;
        let ln_d = g.ln(d)?;
        let ln_not_d = g.ln(not_d)?;
        let wr = g.constant(w_r.clone())?;
        let we = g.constant(w_e.clone())?;
        let a = g.mul(wr, ln_d)?;
        let b = g.mul(we, ln_not_d)?;
        let ab = g.add(a, b)?;
        let s = g.sum(ab);
        let loss = g.scale(s, -1.0);
        Ok((g, loss, d))
    };
    for _ in 0..steps {
        let (g, loss, _) = eval(&logits)?;
        let grads = g.backward(loss)?;
        adam_step(logits.values_mut(), grads.get(key).expect("logits tracked"), &mut state)?;
    }
    let (g, _, d) = eval(&logits)?;
    Ok(g.value(d).values().to_vec())
}

/// Which generator objective a training run optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Shared adversarial term plus reconstruction.
    Full,
    /// Reconstruction only; the discriminator is never trained.
    NoCollaborative,
    /// Reconstruction minus perceptual distance of the encrypted sample.
    Msednet,
}

impl std::str::FromStr for Ablation {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "full" => Ok(Ablation::Full),
            "no_collaborative" => Ok(Ablation::NoCollaborative),
            "msednet" => Ok(Ablation::Msednet),
            other => Err(format!("unknown ablation `{other}`")),
        }
    }
}

/// Per-batch loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    /// Shared adversarial term; absent when the run has no discriminator.
    pub adversarial: Option<f64>,
    pub recon_mse: f64,
    /// Unweighted perceptual reconstruction term (0 when disabled).
    pub perceptual: f64,
    /// Perceptual distance of encrypted samples, subtracted by the
    /// decomposition-network ablation.
    pub encrypted_perceptual: Option<f64>,
    pub total_generator: f64,
    /// Discriminator loss on the same batch and model state.
    pub discriminator: Option<f64>,
    pub lambda: f64,
}

impl LossBreakdown {
    /// The first non-finite term, by name.
    pub fn non_finite_term(&self) -> Option<&'static str> {
        let terms = [
            ("l_D", self.discriminator),
            ("l_G_ad", self.adversarial),
            ("l_recon_mse", Some(self.recon_mse)),
            ("l_perceptual", Some(self.perceptual)),
            ("l_encrypted_perceptual", self.encrypted_perceptual),
            ("l_G_total", Some(self.total_generator)),
        ];
        terms
            .into_iter()
            .find(|(_, v)| v.is_some_and(|v| !v.is_finite()))
            .map(|(n, _)| n)
    }
}

/// Graph nodes of one objective evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveNodes {
    pub forward: ForwardNodes,
    pub adversarial: Option<NodeId>,
    pub recon_mse: NodeId,
    pub perceptual: Option<NodeId>,
    pub encrypted_perceptual: Option<NodeId>,
    pub total: NodeId,
}

impl ObjectiveNodes {
    pub fn breakdown(&self, g: &Graph, lambda: f64) -> LossBreakdown {
        let v = |n: NodeId| g.value(n).values()[0];
        let adversarial = self.adversarial.map(v);
        LossBreakdown {
            adversarial,
            recon_mse: v(self.recon_mse),
            perceptual: self.perceptual.map_or(0.0, v),
            encrypted_perceptual: self.encrypted_perceptual.map(v),
            total_generator: v(self.total),
            discriminator: adversarial,
            lambda,
        }
    }
}

/// Records the generator objective for `ablation` on a batch.
///
/// In the full scheme the discriminator parameters are tracked too, so a
/// single backward pass over `total` yields the discriminator gradient of
/// the shared adversarial term alongside the encryption-model gradient.
#[allow(clippy::too_many_arguments)]
pub fn build_objective(
    g: &mut Graph,
    bundle: &ModelBundle,
    x: NodeId,
    noise: NodeId,
    ablation: Ablation,
    lambda: f64,
    use_perceptual: bool,
) -> Result<ObjectiveNodes> {
    let forward = bundle.forward_graph(g, x, noise, true)?;
    let recon_mse = g.mse(forward.reconstructed, x)?;
    let mut total = recon_mse;

    let mut perceptual = None;
    let phi_x = if use_perceptual || ablation == Ablation::Msednet {
        Some(bundle.perceptual.forward(g, x, false)?)
    } else {
        None
    };
    if use_perceptual {
        let phi_r = bundle.perceptual.forward(g, forward.reconstructed, false)?;
        let p = g.mse(phi_r, phi_x.unwrap())?;
        let weighted = g.scale(p, lambda);
        total = g.add(total, weighted)?;
        perceptual = Some(p);
    }

    let mut adversarial = None;
    let mut encrypted_perceptual = None;
    match ablation {
        Ablation::Full => {
            let adv = adversarial_node(g, &bundle.discriminator, forward.reconstructed, forward.encrypted, true)?;
            total = g.add(adv, total)?;
            adversarial = Some(adv);
        }
        Ablation::NoCollaborative => {}
        Ablation::Msednet => {
            let phi_e = bundle.perceptual.forward(g, forward.encrypted, false)?;
            let d = g.mse(phi_e, phi_x.unwrap())?;
            total = g.sub(total, d)?;
            encrypted_perceptual = Some(d);
        }
    }
    Ok(ObjectiveNodes {
        forward,
        adversarial,
        recon_mse,
        perceptual,
        encrypted_perceptual,
        total,
    })
}

/// Mean BCE of D on `recon` against 1 plus mean BCE on `encrypted` against 0.
pub fn adversarial_node(
    g: &mut Graph,
    discriminator: &Mlp,
    recon: NodeId,
    encrypted: NodeId,
    trainable: bool,
) -> Result<NodeId> {
    let d_r = discriminator.forward(g, recon, trainable)?;
    let d_e = discriminator.forward(g, encrypted, trainable)?;
    let n_r = g.value(d_r).len();
    let n_e = g.value(d_e).len();
    let l_r = g.bce(d_r, vec![1.0; n_r])?;
    let l_e = g.bce(d_e, vec![0.0; n_e])?;
    Ok(g.add(l_r, l_e)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_models, ModelConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const LN_4: f64 = 2.0 * LN_2;

    #[test]
    fn bce_values() {
        assert!((bce(0.5, 1.0).unwrap() - LN_2).abs() < 1e-15);
        let near = bce(1.0 - 1e-7, 1.0).unwrap();
        assert!(near > 0.0 && (near - 1e-7).abs() < 1e-12);
        assert!((bce(0.25, 0.0).unwrap() - 0.287_682_072_451_781).abs() < 1e-12);
        assert!(matches!(bce(0.5, 0.5), Err(ObjectiveError::BadTarget(_))));
        assert!(bce(0.0, 1.0).unwrap().is_finite());
    }

    #[test]
    fn discriminator_loss_values() {
        let eps = 1e-7;
        assert!(discriminator_loss(&[1.0 - eps; 3], &[eps; 3]).unwrap() < 1e-6);
        assert!((discriminator_loss(&[0.5; 4], &[0.5; 2]).unwrap() - LN_4).abs() < 1e-15);
        let expected = -(0.9f64.ln() + 0.8f64.ln()) / 2.0 - (0.9f64.ln() + 0.7f64.ln()) / 2.0;
        let got = discriminator_loss(&[0.9, 0.8], &[0.1, 0.3]).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.395_270).abs() < 1e-6);
        assert!(discriminator_loss(&[], &[0.5]).is_err());
        assert_eq!(
            generator_adversarial_loss(&[0.9, 0.8], &[0.1, 0.3]).unwrap(),
            got
        );
    }

    #[test]
    fn reconstruction_loss_cases() {
        let m = build_models(&ModelConfig::toy(1)).unwrap();
        let x = Tensor::from_rows(&[vec![0.1, -0.3], vec![1.2, 0.4]]).unwrap();
        let r = reconstruction_loss(&x, &x, &m.perceptual, 0.01).unwrap();
        assert_eq!((r.recon_mse, r.perceptual, r.combined), (0.0, 0.0, 0.0));
        let shifted = x.map(|v| v + 1.0);
        let r = reconstruction_loss(&shifted, &x, &m.perceptual, 0.0).unwrap();
        assert_eq!(r.recon_mse, 1.0);
        assert_eq!(r.combined, r.recon_mse);
        let bad = Tensor::zeros(vec![3, 2]).unwrap();
        assert!(reconstruction_loss(&bad, &x, &m.perceptual, 0.01).is_err());
    }

    #[test]
    fn msednet_loss_cases() {
        let m = build_models(&ModelConfig::toy(1)).unwrap();
        let x = Tensor::from_rows(&[vec![0.1, -0.3], vec![1.2, 0.4]]).unwrap();
        assert_eq!(msednet_loss(&x, &x, &x, &m.perceptual, 0.01).unwrap(), 0.0);
        let near = x.map(|v| v + 0.1);
        let far = x.map(|v| v + 1.0);
        let a = msednet_loss(&x, &x, &near, &m.perceptual, 0.01).unwrap();
        let b = msednet_loss(&x, &x, &far, &m.perceptual, 0.01).unwrap();
        assert!(b < a && a < 0.0);
    }

    #[test]
    fn msednet_two_sample_hand_value() {
        // Hand-evaluated perceptual features from the frozen network.
        let m = build_models(&ModelConfig::toy(1)).unwrap();
        let x = Tensor::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let x_r = Tensor::from_rows(&[vec![0.5, 0.0], vec![1.0, 0.0]]).unwrap();
        let x_e = Tensor::from_rows(&[vec![0.0, 0.0], vec![1.0, 2.0]]).unwrap();
        let phi = |row: &[f64]| -> Vec<f64> {
            let p = m.perceptual.params();
            let (w0, b0, w1, b1) = (&p[0], &p[1], &p[2], &p[3]);
            let h: Vec<f64> = (0..w0.cols())
                .map(|j| (row[0] * w0.get(0, j) + row[1] * w0.get(1, j) + b0.values()[j]).tanh())
                .collect();
            (0..w1.cols())
                .map(|k| (h.iter().enumerate().map(|(j, hj)| hj * w1.get(j, k)).sum::<f64>() + b1.values()[k]).tanh())
                .collect()
        };
        let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        let width = 64.0;
        // recon: only sample 0 differs, by 0.5 in the first coordinate
        let mse = 0.25 / 4.0;
        let perc_r = sq(&phi(&[0.5, 0.0]), &phi(&[0.0, 0.0])) / (2.0 * width);
        let perc_e = sq(&phi(&[1.0, 2.0]), &phi(&[1.0, 0.0])) / (2.0 * width);
        let expected = mse + 0.01 * perc_r - perc_e;
        let got = msednet_loss(&x, &x_r, &x_e, &m.perceptual, 0.01).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn optimal_discriminator_values() {
        let pair = DiscreteDistributionPair::new(vec![0.2, 0.3, 0.5, 0.0], vec![0.6, 0.3, 0.0, 0.1]).unwrap();
        assert!((optimal_discriminator(&pair, 0).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(optimal_discriminator(&pair, 1).unwrap(), 0.5);
        assert_eq!(optimal_discriminator(&pair, 2).unwrap(), 1.0);
        let zero = DiscreteDistributionPair::new(vec![1.0, 0.0], vec![1.0, 0.0]).unwrap();
        assert!(matches!(optimal_discriminator(&zero, 1), Err(ObjectiveError::ZeroDensity(1))));
    }

    #[test]
    fn jsd_values() {
        let same = DiscreteDistributionPair::new(vec![0.3, 0.7], vec![0.3, 0.7]).unwrap();
        assert_eq!(jsd(&same), 0.0);
        let disjoint = DiscreteDistributionPair::new(vec![1.0, 0.0], vec![0.0, 1.0]).unwrap();
        assert!((jsd(&disjoint) - LN_2).abs() < 1e-15);
        // brute force over the two bins: m = (0.75, 0.25)
        let half = DiscreteDistributionPair::new(vec![0.5, 0.5], vec![1.0, 0.0]).unwrap();
        let brute = 0.5 * (0.5 * (0.5f64 / 0.75).ln() + 0.5 * (0.5f64 / 0.25).ln()) + 0.5 * (1.0f64 / 0.75).ln();
        assert!((jsd(&half) - brute).abs() < 1e-15);
        assert!((jsd(&half) - 0.215_761).abs() < 1e-6);
    }

    #[test]
    fn collaborative_optimum_values() {
        let same = DiscreteDistributionPair::new(vec![0.3, 0.7], vec![0.3, 0.7]).unwrap();
        assert!((collaborative_loss_at_optimum(&same) - LN_4).abs() < 1e-15);
        let disjoint = DiscreteDistributionPair::new(vec![1.0, 0.0], vec![0.0, 1.0]).unwrap();
        assert!(collaborative_loss_at_optimum(&disjoint).abs() < 1e-15);
        let half = DiscreteDistributionPair::new(vec![0.5, 0.5], vec![1.0, 0.0]).unwrap();
        assert!((collaborative_loss_at_optimum(&half) - 0.954_772).abs() < 1e-6);
    }

    #[test]
    fn distribution_validation() {
        assert!(DiscreteDistributionPair::new(vec![0.5, 0.6], vec![0.5, 0.5]).is_err());
        assert!(DiscreteDistributionPair::new(vec![1.0], vec![0.5, 0.5]).is_err());
        assert!(DiscreteDistributionPair::new(vec![1.5, -0.5], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn scalar_discriminator_recovers_optimum_from_exact_frequencies() {
        // Exact frequencies as "samples": 1000 draws with counts proportional to p.
        let p_r = [0.1, 0.4, 0.3, 0.2];
        let p_e = [0.4, 0.1, 0.25, 0.25];
        let expand = |p: &[f64]| -> Vec<usize> {
            p.iter()
                .enumerate()
                .flat_map(|(b, &q)| std::iter::repeat_n(b, (q * 1000.0).round() as usize))
                .collect()
        };
        let fitted = fit_per_bin_discriminator(
            &expand(&p_r),
            &expand(&p_e),
            4,
            3000,
            AdamConfig {
                alpha: 0.05,
                ..AdamConfig::default()
            },
        )
        .unwrap();
        for b in 0..4 {
            let target = p_r[b] / (p_r[b] + p_e[b]);
            assert!((fitted[b] - target).abs() < 1e-3, "bin {b}: {} vs {target}", fitted[b]);
        }
    }

    #[test]
    fn adversarial_terms_agree_in_graph() {
        let m = build_models(&ModelConfig::toy(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::randn(vec![8, 2], 1.0, &mut rng).unwrap();
        let n = Tensor::randn(vec![8, 2], 1.0, &mut rng).unwrap();
        let mut g = Graph::new();
        let xn = g.constant(x.clone()).unwrap();
        let nn = g.constant(n).unwrap();
        let nodes = build_objective(&mut g, &m, xn, nn, Ablation::Full, 0.01, false).unwrap();
        let b = nodes.breakdown(&g, 0.01);
        let d_r = m.discriminate(g.value(nodes.forward.reconstructed)).unwrap();
        let d_e = m.discriminate(g.value(nodes.forward.encrypted)).unwrap();
        let direct = discriminator_loss(&d_r, &d_e).unwrap();
        assert!((b.adversarial.unwrap() - direct).abs() < 1e-12);
        assert!((b.total_generator - (b.adversarial.unwrap() + b.recon_mse)).abs() < 1e-12);
        assert_eq!(b.discriminator, b.adversarial);
    }
}

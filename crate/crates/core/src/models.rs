//! The encryption model (encoder, feature split, decoder), the fake privacy
//! substitution, the discriminator and the frozen perceptual network, all
//! as small fully-connected networks.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adam::{adam_step, AdamConfig, AdamState};
use crate::autodiff::{Activation, Gradients, Graph, NodeId, ParamKey};
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid privacy proportion {proportion} for feature width {feature_width}")]
    InvalidProportion {
        proportion: Proportion,
        feature_width: usize,
    },
    #[error("width mismatch: {what} expects {expected} columns, got {got}")]
    WidthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

static NEXT_UID: AtomicU64 = AtomicU64::new(1);

fn fresh_uid() -> u64 {
    NEXT_UID.fetch_add(1, Ordering::Relaxed)
}

/// Fraction of the encoder output reserved for the privacy part, kept as an
/// exact ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Proportion {
    num: u32,
    den: u32,
}

impl Proportion {
    pub fn new(num: u32, den: u32) -> Option<Self> {
        (den > 0 && num > 0 && num < den).then_some(Self { num, den })
    }

    pub fn numerator(self) -> u32 {
        self.num
    }

    pub fn denominator(self) -> u32 {
        self.den
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Number of privacy features out of `feature_width`, if it is a whole
    /// number strictly between zero and the width.
    pub fn width_of(self, feature_width: usize) -> Option<usize> {
        let scaled = feature_width * self.num as usize;
        let den = self.den as usize;
        scaled.is_multiple_of(den)
            .then_some(scaled / den)
            .filter(|&w| w > 0 && w < feature_width)
    }
}

impl fmt::Display for Proportion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Proportion {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (a, b) = s
            .split_once('/')
            .ok_or_else(|| format!("proportion `{s}` must look like `1/64`"))?;
        let num = a.trim().parse().map_err(|e| format!("bad numerator in `{s}`: {e}"))?;
        let den = b.trim().parse().map_err(|e| format!("bad denominator in `{s}`: {e}"))?;
        Proportion::new(num, den).ok_or_else(|| format!("proportion `{s}` must lie strictly inside (0, 1)"))
    }
}

impl TryFrom<String> for Proportion {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Proportion> for String {
    fn from(p: Proportion) -> String {
        p.to_string()
    }
}

/// A stack of fully-connected layers. Parameters are stored as
/// `[w0, b0, w1, b1, ...]` with `w_i` of shape `in×out`.
#[derive(Debug, Clone)]
pub struct Mlp {
    uid: u64,
    widths: Vec<usize>,
    hidden: Activation,
    output: Activation,
    params: Vec<Tensor>,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.widths == other.widths
            && self.hidden == other.hidden
            && self.output == other.output
            && self.params == other.params
    }
}

impl Mlp {
    /// Weights uniform in `[-a, a]` with `a = sqrt(6 / (fan_in + fan_out))`,
    /// biases zero.
    pub fn new<R: Rng + ?Sized>(
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(ModelError::Config(format!("bad layer widths {widths:?}")));
        }
        let mut params = Vec::with_capacity(2 * (widths.len() - 1));
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = (0..fan_in * fan_out).map(|_| rng.random_range(-a..a)).collect();
            params.push(Tensor::matrix(fan_in, fan_out, w)?);
            params.push(Tensor::zeros(vec![fan_out])?);
        }
        Ok(Self {
            uid: fresh_uid(),
            widths: widths.to_vec(),
            hidden,
            output,
            params,
        })
    }

    /// Rebuilds a network from stored parameters.
    pub fn from_parts(
        widths: Vec<usize>,
        hidden: Activation,
        output: Activation,
        params: Vec<Tensor>,
    ) -> Result<Self> {
        if widths.len() < 2 || params.len() != 2 * (widths.len() - 1) {
            return Err(ModelError::Config(format!(
                "{} parameter tensors for widths {widths:?}",
                params.len()
            )));
        }
        for (i, pair) in widths.windows(2).enumerate() {
            if params[2 * i].shape() != [pair[0], pair[1]] || params[2 * i + 1].shape() != [pair[1]] {
                return Err(ModelError::Config(format!("layer {i} shapes disagree with widths {widths:?}")));
            }
        }
        Ok(Self {
            uid: fresh_uid(),
            widths,
            hidden,
            output,
            params,
        })
    }

    /// Process-unique identity of this parameter set.
    pub fn uid(&self) -> u64 {
        self.uid
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn param_key(&self, index: usize) -> ParamKey {
        ParamKey {
            owner: self.uid,
            index,
        }
    }

    pub fn zero_final_layer(&mut self) {
        let n = self.params.len();
        for t in &mut self.params[n - 2..] {
            t.values_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Records a forward pass. With `trainable`, parameters enter the graph
    /// as tracked leaves; otherwise as constants.
    pub fn forward(&self, g: &mut Graph, x: NodeId, trainable: bool) -> Result<NodeId> {
        let cols = g.value(x).cols();
        if cols != self.input_width() {
            return Err(ModelError::WidthMismatch {
                what: "network input",
                expected: self.input_width(),
                got: cols,
            });
        }
        let mut h = x;
        let last = self.layer_count() - 1;
        for layer in 0..=last {
            let (w, b) = (&self.params[2 * layer], &self.params[2 * layer + 1]);
            let (wn, bn) = if trainable {
                (
                    g.param(self.param_key(2 * layer), w)?,
                    g.param(self.param_key(2 * layer + 1), b)?,
                )
            } else {
                (g.constant(w.clone())?, g.constant(b.clone())?)
            };
            let z = g.matmul(h, wn)?;
            let z = g.add_bias(z, bn)?;
            let act = if layer == last { self.output } else { self.hidden };
            h = if act == Activation::Identity {
                z
            } else {
                g.activation(z, act)?
            };
        }
        Ok(h)
    }

    /// Forward pass without gradient tracking.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let xn = g.constant(as_batch(x))?;
        let out = self.forward(&mut g, xn, false)?;
        Ok(g.value(out).clone())
    }

    /// Flattens all parameters into one vector, in storage order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.params.iter().flat_map(|t| t.values().iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(ModelError::Config(format!(
                "{} values for {} parameters",
                flat.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        for t in &mut self.params {
            let n = t.len();
            t.values_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Concatenates this network's gradients from `grads` in storage order;
    /// absent entries count as zero.
    pub fn flat_grads(&self, grads: &Gradients) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (i, t) in self.params.iter().enumerate() {
            match grads.get(self.param_key(i)) {
                Some(g) => out.extend_from_slice(g),
                None => out.extend(std::iter::repeat_n(0.0, t.len())),
            }
        }
        out
    }
}

/// Lifts a 1-D tensor to a one-row matrix so it can feed a network.
fn as_batch(x: &Tensor) -> Tensor {
    if x.shape().len() == 1 {
        x.clone().reshape(vec![1, x.len()]).expect("same element count")
    } else {
        x.clone()
    }
}

/// One Adam state per parameter tensor of an [`Mlp`].
#[derive(Debug, Clone)]
pub struct MlpOptimizer {
    states: Vec<AdamState>,
}

impl MlpOptimizer {
    pub fn new(net: &Mlp, config: AdamConfig) -> Self {
        Self {
            states: net.params.iter().map(|t| AdamState::new(t.len(), config)).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.states.first().map_or(0, |s| s.step)
    }

    /// Applies one Adam update; parameters without a gradient entry are
    /// updated with a zero gradient.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        for (i, state) in self.states.iter_mut().enumerate() {
            let key = net.param_key(i);
            let t = &mut net.params[i];
            match grads.get(key) {
                Some(g) => adam_step(t.values_mut(), g, state)?,
                None => {
                    let zeros = vec![0.0; t.len()];
                    adam_step(t.values_mut(), &zeros, state)?
                }
            }
        }
        Ok(())
    }
}

/// Additive white Gaussian noise for the fake privacy feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub std: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(std: f64, seed: u64) -> Self {
        assert!(std >= 0.0, "noise std must be non-negative");
        Self { std, seed }
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { std: 1.0, seed: 0 }
    }
}

/// `privacy_part + n` with `n ~ N(0, std²)` drawn from a generator seeded
/// by `noise.seed`.
pub fn fake_privacy(privacy_part: &Tensor, noise: &NoiseSpec) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    add_noise(privacy_part, noise.std, &mut rng)
}

pub(crate) fn add_noise<R: Rng + ?Sized>(t: &Tensor, std: f64, rng: &mut R) -> Tensor {
    if std == 0.0 {
        return t.clone();
    }
    let n = Tensor::randn(t.shape().to_vec(), std, rng).expect("shape already valid");
    t.zip_map(&n, |a, b| a + b).expect("same shape")
}

/// Encoder output cut into its public and privacy columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitFeature {
    pub public_part: Tensor,
    pub privacy_part: Tensor,
}

impl SplitFeature {
    /// Cuts the last `privacy_width` columns off as the privacy part.
    pub fn split(features: &Tensor, privacy_width: usize) -> Result<Self> {
        let width = features.cols();
        if privacy_width == 0 || privacy_width >= width {
            return Err(ModelError::Config(format!(
                "privacy width {privacy_width} must lie in 1..{width}"
            )));
        }
        Ok(Self {
            public_part: features.slice_cols(0, width - privacy_width)?,
            privacy_part: features.slice_cols(width - privacy_width, width)?,
        })
    }

    pub fn merge(&self) -> Result<Tensor> {
        merge(&self.public_part, &self.privacy_part)
    }
}

/// Rejoins public and privacy columns, public first.
pub fn merge(public_part: &Tensor, privacy_part: &Tensor) -> Result<Tensor> {
    Ok(public_part.concat_cols(privacy_part)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_width: usize,
    pub feature_width: usize,
    pub privacy_proportion: Proportion,
    pub hidden_width: usize,
    pub discriminator_hidden: usize,
    pub discriminator_layers: usize,
    pub perceptual_width: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// The 2-D toy layout: encoder 2-128-128, decoder 128-128-2, 126 public
    /// and 2 privacy features.
    pub fn toy(seed: u64) -> Self {
        Self {
            input_width: 2,
            feature_width: 128,
            privacy_proportion: Proportion::new(1, 64).unwrap(),
            hidden_width: 128,
            discriminator_hidden: 128,
            discriminator_layers: 5,
            perceptual_width: 64,
            seed,
        }
    }

    pub fn with_input_width(mut self, input_width: usize) -> Self {
        self.input_width = input_width;
        self
    }

    pub fn with_proportion(mut self, p: Proportion) -> Self {
        self.privacy_proportion = p;
        self
    }

    pub fn privacy_width(&self) -> Result<usize> {
        self.privacy_proportion
            .width_of(self.feature_width)
            .ok_or(ModelError::InvalidProportion {
                proportion: self.privacy_proportion,
                feature_width: self.feature_width,
            })
    }
}

/// All networks of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub config: ModelConfig,
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub discriminator: Mlp,
    /// Frozen; never registered as trainable in any graph.
    pub perceptual: Mlp,
}

/// Graph nodes produced by one encryption-model forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardNodes {
    pub features: NodeId,
    pub public_part: NodeId,
    pub privacy_part: NodeId,
    pub fake_privacy: NodeId,
    pub reconstructed: NodeId,
    pub encrypted: NodeId,
}

pub fn build_models(config: &ModelConfig) -> Result<ModelBundle> {
    config.privacy_width()?;
    if config.discriminator_layers < 1 {
        return Err(ModelError::Config("discriminator needs at least one layer".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (inp, hid, feat) = (config.input_width, config.hidden_width, config.feature_width);
    let encoder = Mlp::new(&[inp, hid, feat], Activation::Tanh, Activation::Identity, &mut rng)?;
    let decoder = Mlp::new(&[feat, hid, inp], Activation::Tanh, Activation::Identity, &mut rng)?;
    let mut disc_widths = vec![inp];
    disc_widths.extend(std::iter::repeat_n(config.discriminator_hidden, config.discriminator_layers - 1));
    disc_widths.push(1);
    let discriminator = Mlp::new(&disc_widths, Activation::Tanh, Activation::Sigmoid, &mut rng)?;
    let pw = config.perceptual_width;
    let perceptual = Mlp::new(&[inp, pw, pw], Activation::Tanh, Activation::Tanh, &mut rng)?;
    Ok(ModelBundle {
        config: *config,
        encoder,
        decoder,
        discriminator,
        perceptual,
    })
}

impl ModelBundle {
    pub fn privacy_width(&self) -> usize {
        self.config.privacy_width().expect("validated at construction")
    }

    pub fn feature_width(&self) -> usize {
        self.config.feature_width
    }

    pub fn public_width(&self) -> usize {
        self.feature_width() - self.privacy_width()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.cols() != self.config.input_width {
            return Err(ModelError::WidthMismatch {
                what: "encoder input",
                expected: self.config.input_width,
                got: x.cols(),
            });
        }
        Ok(())
    }

    pub fn encode(&self, x: &Tensor) -> Result<SplitFeature> {
        self.check_input(x)?;
        let features = self.encoder.infer(x)?;
        SplitFeature::split(&features, self.privacy_width())
    }

    /// [`merge`] with the part widths checked against this model.
    pub fn merge(&self, public_part: &Tensor, privacy_part: &Tensor) -> Result<Tensor> {
        if public_part.cols() != self.public_width() {
            return Err(ModelError::WidthMismatch {
                what: "public part",
                expected: self.public_width(),
                got: public_part.cols(),
            });
        }
        if privacy_part.cols() != self.privacy_width() {
            return Err(ModelError::WidthMismatch {
                what: "privacy part",
                expected: self.privacy_width(),
                got: privacy_part.cols(),
            });
        }
        merge(public_part, privacy_part)
    }

    pub fn decode(&self, features: &Tensor) -> Result<Tensor> {
        self.decoder.infer(features)
    }

    pub fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        let split = self.encode(x)?;
        let out = self.decode(&split.merge()?)?;
        Ok(out.reshape(x.shape().to_vec())?)
    }

    pub fn encrypt(&self, x: &Tensor, noise: &NoiseSpec) -> Result<Tensor> {
        let split = self.encode(x)?;
        let fake = fake_privacy(&split.privacy_part, noise);
        let out = self.decode(&self.merge(&split.public_part, &fake)?)?;
        Ok(out.reshape(x.shape().to_vec())?)
    }

    /// Encrypts with fresh noise drawn from `rng`.
    pub fn encrypt_with<R: Rng + ?Sized>(&self, x: &Tensor, std: f64, rng: &mut R) -> Result<Tensor> {
        let split = self.encode(x)?;
        let fake = add_noise(&split.privacy_part, std, rng);
        let out = self.decode(&self.merge(&split.public_part, &fake)?)?;
        Ok(out.reshape(x.shape().to_vec())?)
    }

    /// Discriminator probability per input row.
    pub fn discriminate(&self, x: &Tensor) -> Result<Vec<f64>> {
        if x.cols() != self.discriminator.input_width() {
            return Err(ModelError::WidthMismatch {
                what: "discriminator input",
                expected: self.discriminator.input_width(),
                got: x.cols(),
            });
        }
        Ok(self.discriminator.infer(x)?.into_values())
    }

    pub fn perceptual_features(&self, x: &Tensor) -> Result<Tensor> {
        self.perceptual.infer(x)
    }

    /// Records encoder, split, noise substitution and both decoder passes.
    /// `noise` must be a `batch × privacy_width` constant node.
    pub fn forward_graph(&self, g: &mut Graph, x: NodeId, noise: NodeId, trainable: bool) -> Result<ForwardNodes> {
        let fw = self.feature_width();
        let pub_w = self.public_width();
        let features = self.encoder.forward(g, x, trainable)?;
        let public_part = g.slice_cols(features, 0, pub_w)?;
        let privacy_part = g.slice_cols(features, pub_w, fw)?;
        let fake_privacy = g.add(privacy_part, noise)?;
        let merged_r = g.concat_cols(public_part, privacy_part)?;
        let merged_e = g.concat_cols(public_part, fake_privacy)?;
        let reconstructed = self.decoder.forward(g, merged_r, trainable)?;
        let encrypted = self.decoder.forward(g, merged_e, trainable)?;
        Ok(ForwardNodes {
            features,
            public_part,
            privacy_part,
            fake_privacy,
            reconstructed,
            encrypted,
        })
    }

    /// Uids of the trainable and frozen networks, in a fixed order.
    pub fn uids(&self) -> [u64; 4] {
        [
            self.encoder.uid(),
            self.decoder.uid(),
            self.discriminator.uid(),
            self.perceptual.uid(),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_input(rows: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::randn(vec![rows, 2], 1.0, &mut rng).unwrap()
    }

    #[test]
    fn toy_split_is_126_public_2_privacy() {
        let m = build_models(&ModelConfig::toy(1)).unwrap();
        let s = m.encode(&sample_input(5, 2)).unwrap();
        assert_eq!(s.public_part.shape(), &[5, 126]);
        assert_eq!(s.privacy_part.shape(), &[5, 2]);
        assert_eq!(m.feature_width(), 128);
        assert_eq!(m.privacy_width(), 2);
    }

    #[test]
    fn half_proportion_gives_64_64() {
        let cfg = ModelConfig::toy(1).with_proportion(Proportion::new(1, 2).unwrap());
        let m = build_models(&cfg).unwrap();
        let s = m.encode(&sample_input(3, 2)).unwrap();
        assert_eq!(s.public_part.cols(), 64);
        assert_eq!(s.privacy_part.cols(), 64);
    }

    #[test]
    fn sweep_proportions_are_exact() {
        for den in [2u32, 4, 8, 16, 32, 64] {
            let p = Proportion::new(1, den).unwrap();
            let w = p.width_of(128).unwrap();
            assert_eq!(w as f64 / 128.0, p.as_f64());
        }
    }

    #[test]
    fn invalid_proportions_rejected() {
        assert!(Proportion::new(0, 4).is_none());
        assert!(Proportion::new(4, 4).is_none());
        assert!("1/1".parse::<Proportion>().is_err());
        assert!("0.5".parse::<Proportion>().is_err());
        // 1/3 of 128 is not a whole number of features
        let cfg = ModelConfig::toy(0).with_proportion(Proportion::new(1, 3).unwrap());
        assert!(matches!(build_models(&cfg), Err(ModelError::InvalidProportion { .. })));
        let cfg = ModelConfig::toy(0).with_proportion(Proportion::new(1, 256).unwrap());
        assert!(matches!(build_models(&cfg), Err(ModelError::InvalidProportion { .. })));
    }

    #[test]
    fn encode_is_deterministic_and_merge_restores_features() {
        let m = build_models(&ModelConfig::toy(3)).unwrap();
        let x = sample_input(7, 4);
        let a = m.encode(&x).unwrap();
        let b = m.encode(&x).unwrap();
        assert_eq!(a, b);
        let raw = m.encoder.infer(&x).unwrap();
        assert_eq!(a.merge().unwrap(), raw);
    }

    #[test]
    fn merge_of_zeros_is_zero_and_swapped_order_is_rejected() {
        let m = build_models(&ModelConfig::toy(3)).unwrap();
        let pb = Tensor::zeros(vec![2, 126]).unwrap();
        let pr = Tensor::zeros(vec![2, 2]).unwrap();
        let z = m.merge(&pb, &pr).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
        assert_eq!(z.cols(), 128);
        assert!(matches!(m.merge(&pr, &pb), Err(ModelError::WidthMismatch { .. })));
    }

    #[test]
    fn zero_noise_leaves_privacy_untouched() {
        let t = sample_input(4, 9);
        assert_eq!(fake_privacy(&t, &NoiseSpec::new(0.0, 5)), t);
        let a = fake_privacy(&t, &NoiseSpec::new(1.0, 5));
        let b = fake_privacy(&t, &NoiseSpec::new(1.0, 5));
        assert_eq!(a, b);
        assert_ne!(a, t);
    }

    #[test]
    fn unit_noise_statistics() {
        let t = Tensor::zeros(vec![100_000]).unwrap();
        let out = fake_privacy(&t, &NoiseSpec::new(1.0, 11));
        let n = out.len() as f64;
        let mean = out.values().iter().sum::<f64>() / n;
        let var = out.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.02, "{mean}");
        assert!((0.98..=1.02).contains(&var.sqrt()), "{}", var.sqrt());
    }

    #[test]
    fn encrypt_without_noise_equals_reconstruct() {
        let m = build_models(&ModelConfig::toy(5)).unwrap();
        let x = sample_input(6, 1);
        let r = m.reconstruct(&x).unwrap();
        assert_eq!(m.encrypt(&x, &NoiseSpec::new(0.0, 1)).unwrap(), r);
        assert_eq!(r.shape(), x.shape());
        assert!(r.is_finite());
        let e1 = m.encrypt(&x, &NoiseSpec::new(1.0, 1)).unwrap();
        let e2 = m.encrypt(&x, &NoiseSpec::new(1.0, 2)).unwrap();
        assert_ne!(e1, e2);
    }

    #[test]
    fn discriminator_outputs() {
        let mut m = build_models(&ModelConfig::toy(5)).unwrap();
        assert_eq!(m.discriminator.layer_count(), 5);
        let x = Tensor::from_rows(&[vec![1e6, -1e6], vec![-1e6, 1e6], vec![0.0, 0.0]]).unwrap();
        for p in m.discriminate(&x).unwrap() {
            assert!(p > 0.0 && p < 1.0);
        }
        m.discriminator.zero_final_layer();
        assert!(m.discriminate(&x).unwrap().iter().all(|&p| p == 0.5));
        assert!(m.discriminate(&Tensor::zeros(vec![1, 3]).unwrap()).is_err());
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = build_models(&ModelConfig::toy(42)).unwrap();
        let b = build_models(&ModelConfig::toy(42)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.uids(), b.uids());
        let c = build_models(&ModelConfig::toy(43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn width_mismatch_is_reported() {
        let m = build_models(&ModelConfig::toy(5)).unwrap();
        let bad = Tensor::zeros(vec![2, 3]).unwrap();
        assert!(matches!(m.reconstruct(&bad), Err(ModelError::WidthMismatch { .. })));
    }
}

//! Contrastive predictive coding: strided convolutional encoder, GRU context
//! network and per-step bilinear prediction heads.

mod infonce;
mod train;

pub use infonce::{infonce_loss, InfoNceDiagnostics, InfoNceOutcome};
pub use train::{pretrain, train_epochs, EpochStats};

use crate::error::{CoreError, Result};
use crate::rng::derive_rng;
use crate::tensor::{
    gru_forward, kaiming_uniform, BoundParams, Graph, NodeId, ParameterSet, Scalar, Tensor,
};

/// Encoder geometry and training settings.
#[derive(Debug, Clone, PartialEq)]
pub struct CpcConfig {
    /// hidden units of every encoder layer
    pub conv_channels: usize,
    pub kernel_sizes: [usize; 5],
    pub strides: [usize; 5],
    pub paddings: [usize; 5],
    /// GRU hidden size
    pub context_dim: usize,
    /// prediction offsets k = 1..=K
    pub prediction_steps: usize,
    /// training crop in samples
    pub crop_length: usize,
    /// negatives per contrastive term (N - 1)
    pub negatives: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for CpcConfig {
    fn default() -> Self {
        Self {
            conv_channels: 512,
            kernel_sizes: [10, 8, 4, 4, 4],
            strides: [5, 4, 2, 2, 2],
            paddings: [3, 2, 1, 1, 1],
            context_dim: 256,
            prediction_steps: 12,
            crop_length: 20_480,
            negatives: 15,
            learning_rate: 2e-4,
            batch_size: 8,
            epochs: 100,
        }
    }
}

impl CpcConfig {
    /// Scaled-down preset for desk-scale runs; geometry (strides, kernels,
    /// paddings, crop) stays at the full configuration.
    pub fn desk() -> Self {
        Self {
            conv_channels: 64,
            context_dim: 64,
            prediction_steps: 6,
            learning_rate: 1e-3,
            epochs: 6,
            ..Self::default()
        }
    }

    /// Minimum input length accepted by the encoder.
    pub const MIN_INPUT: usize = 160;

    pub fn validate(&self) -> Result<()> {
        let stride_product: usize = self.strides.iter().product();
        if stride_product != 160 {
            return Err(CoreError::Config(format!(
                "stride product {stride_product}, the encoder must down-sample by 1/160"
            )));
        }
        if self.prediction_steps == 0 {
            return Err(CoreError::Config("need at least one prediction step".into()));
        }
        if self.conv_channels == 0 || self.context_dim == 0 {
            return Err(CoreError::Config("zero-width model".into()));
        }
        let t_z = self.encoded_len(self.crop_length);
        if t_z <= self.prediction_steps {
            return Err(CoreError::Config(format!(
                "crop of {} samples yields {t_z} latent frames, need more than K = {}",
                self.crop_length, self.prediction_steps
            )));
        }
        if self.batch_size == 0 {
            return Err(CoreError::Config("batch size must be positive".into()));
        }
        Ok(())
    }

    /// Latent frame count after the five-layer conv chain.
    pub fn encoded_len(&self, input_len: usize) -> usize {
        let mut l = input_len;
        for i in 0..5 {
            l = (l + 2 * self.paddings[i] - self.kernel_sizes[i]) / self.strides[i] + 1;
        }
        l
    }

    pub fn head_name(k: usize) -> String {
        format!("heads.k{k:02}")
    }
}

/// CPC model parameters: `encoder.conv{i}.{weight,bias}`, `context.{w_ih,
/// w_hh,b}` and one `heads.k{k}` matrix per prediction offset.
#[derive(Debug, Clone)]
pub struct CpcModel<T: Scalar> {
    pub cfg: CpcConfig,
    pub params: ParameterSet<T>,
}

impl<T: Scalar> CpcModel<T> {
    pub fn new(cfg: CpcConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParameterSet::new();
        let mut c_in = 1usize;
        for i in 0..5 {
            let shape = [cfg.conv_channels, c_in, cfg.kernel_sizes[i]];
            let fan_in = c_in * cfg.kernel_sizes[i];
            let mut rng = derive_rng(seed, &format!("encoder.conv{i}"));
            params.push(
                format!("encoder.conv{i}.weight"),
                kaiming_uniform(&shape, fan_in, &mut rng),
            )?;
            params.push(format!("encoder.conv{i}.bias"), Tensor::zeros(&[cfg.conv_channels]))?;
            c_in = cfg.conv_channels;
        }
        let (d, h) = (cfg.conv_channels, cfg.context_dim);
        let mut rng = derive_rng(seed, "context");
        params.push("context.w_ih", kaiming_uniform(&[d, 3 * h], d, &mut rng))?;
        params.push("context.w_hh", kaiming_uniform(&[h, 3 * h], h, &mut rng))?;
        params.push("context.b", Tensor::zeros(&[3 * h]))?;
        for k in 1..=cfg.prediction_steps {
            let mut rng = derive_rng(seed, &CpcConfig::head_name(k));
            params.push(CpcConfig::head_name(k), kaiming_uniform(&[h, d], h, &mut rng))?;
        }
        Ok(Self { cfg, params })
    }

    pub fn bind(&self, g: &mut Graph<T>, trainable: impl Fn(&str) -> bool) -> BoundParams {
        self.params.bind(g, trainable)
    }

    pub fn encode(&self, g: &mut Graph<T>, bound: &BoundParams, wave: NodeId) -> Result<NodeId> {
        cpc_encode(g, &self.cfg, &self.params, bound, wave)
    }

    pub fn contextualize(&self, g: &mut Graph<T>, bound: &BoundParams, z: NodeId) -> Result<NodeId> {
        cpc_contextualize(g, &self.cfg, &self.params, bound, z)
    }

    /// Context features for a whole waveform, no gradients: the downstream
    /// feature extractor.
    pub fn context_features(&self, samples: &[T]) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g, |_| false);
        let wave = g.constant(Tensor::new(vec![1, samples.len()], samples.to_vec())?);
        let z = self.encode(&mut g, &bound, wave)?;
        let c = self.contextualize(&mut g, &bound, z)?;
        Ok(g.value(c).clone())
    }
}

fn node_of<T: Scalar>(params: &ParameterSet<T>, bound: &BoundParams, name: &str) -> Result<NodeId> {
    params
        .index_of(name)
        .map(|i| bound.id(i))
        .ok_or_else(|| CoreError::Contract(format!("parameter {name:?} not in set")))
}

/// Encoder forward: `[1, l]` waveform to `[t_z, channels]` latents
/// (five conv1d + ReLU blocks, then time-major transpose).
pub fn cpc_encode<T: Scalar>(
    g: &mut Graph<T>,
    cfg: &CpcConfig,
    params: &ParameterSet<T>,
    bound: &BoundParams,
    wave: NodeId,
) -> Result<NodeId> {
    let shape = g.value(wave).shape().to_vec();
    if shape.len() != 2 || shape[0] != 1 {
        return Err(CoreError::InvalidShape(format!(
            "encoder input must be [1, l], got {shape:?}"
        )));
    }
    if shape[1] < CpcConfig::MIN_INPUT {
        return Err(CoreError::InsufficientAudio(format!(
            "{} samples, encoder needs at least {}",
            shape[1],
            CpcConfig::MIN_INPUT
        )));
    }
    let mut x = wave;
    for i in 0..5 {
        let w = node_of(params, bound, &format!("encoder.conv{i}.weight"))?;
        let b = node_of(params, bound, &format!("encoder.conv{i}.bias"))?;
        let y = g.conv1d(x, w, b, cfg.strides[i], cfg.paddings[i])?;
        x = g.relu(y);
    }
    g.transpose(x)
}

/// Context forward: GRU over the latent sequence; `c_t` depends only on
/// `z_1..z_t`.
pub fn cpc_contextualize<T: Scalar>(
    g: &mut Graph<T>,
    cfg: &CpcConfig,
    params: &ParameterSet<T>,
    bound: &BoundParams,
    z: NodeId,
) -> Result<NodeId> {
    let w_ih = node_of(params, bound, "context.w_ih")?;
    let w_hh = node_of(params, bound, "context.w_hh")?;
    let b = node_of(params, bound, "context.b")?;
    let h0 = g.constant(Tensor::zeros(&[1, cfg.context_dim]));
    gru_forward(g, z, h0, w_ih, w_hh, b)
}

/// Head nodes in offset order `k = 1..=K`.
pub fn head_nodes<T: Scalar>(
    cfg: &CpcConfig,
    params: &ParameterSet<T>,
    bound: &BoundParams,
) -> Result<Vec<NodeId>> {
    (1..=cfg.prediction_steps)
        .map(|k| node_of(params, bound, &CpcConfig::head_name(k)))
        .collect()
}

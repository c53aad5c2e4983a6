use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, Task};
use super::layers::{Conv, ConvNorm, Dense, Norm, NormSettings};
use super::params::{Bound, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Element, NormMode, Tape, Tensor, Var};

#[derive(Clone, Debug)]
struct ResidualBlock {
    first: ConvNorm,
    second: ConvNorm,
    /// 1x1 projection when the channel count changes.
    shortcut: Option<ConvNorm>,
}

#[derive(Clone, Debug)]
struct SpatialUnit {
    reduce: Conv,
    mix: Conv,
    project: Conv,
}

#[derive(Clone, Debug)]
struct ChannelUnit {
    squeeze: Dense,
    excite: Dense,
}

#[derive(Clone, Debug)]
struct AttentionHead {
    spatial: SpatialUnit,
    channel: ChannelUnit,
}

#[derive(Clone, Debug)]
struct TaskHead {
    hidden: Dense,
    norm: Norm,
    out: Dense,
}

#[derive(Clone, Debug)]
struct Architecture {
    stem: ConvNorm,
    stages: Vec<Vec<ResidualBlock>>,
    heads: Vec<AttentionHead>,
    task: TaskHead,
}

impl Architecture {
    fn build<T: Element>(cfg: &ModelConfig, store: &mut ParamStore<T>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let widths = &cfg.backbone_widths;
        let stem = ConvNorm::new(store, &mut rng, "stem", cfg.channels, widths[0], 3);
        let mut stages = Vec::with_capacity(widths.len());
        let mut c_in = widths[0];
        for (s, &w) in widths.iter().enumerate() {
            let mut blocks = Vec::with_capacity(cfg.blocks_per_stage);
            for b in 0..cfg.blocks_per_stage {
                let name = format!("stage{s}.block{b}");
                blocks.push(ResidualBlock {
                    first: ConvNorm::new(store, &mut rng, &format!("{name}.a"), c_in, w, 3),
                    second: ConvNorm::new(store, &mut rng, &format!("{name}.b"), w, w, 3),
                    shortcut: (c_in != w).then(|| ConvNorm::new(store, &mut rng, &format!("{name}.proj"), c_in, w, 1)),
                });
                c_in = w;
            }
            stages.push(blocks);
        }

        let c = cfg.feature_dim();
        let r = c / cfg.reduction;
        let heads = (0..cfg.num_heads)
            .map(|h| {
                let name = format!("head{h}");
                AttentionHead {
                    spatial: SpatialUnit {
                        reduce: Conv::new(store, &mut rng, &format!("{name}.spatial.reduce"), c, r, 1),
                        mix: Conv::new(store, &mut rng, &format!("{name}.spatial.mix"), r, r, 3),
                        project: Conv::new(store, &mut rng, &format!("{name}.spatial.project"), r, 1, 1),
                    },
                    channel: ChannelUnit {
                        squeeze: Dense::new(store, &mut rng, &format!("{name}.channel.squeeze"), c, r),
                        excite: Dense::new(store, &mut rng, &format!("{name}.channel.excite"), r, c),
                    },
                }
            })
            .collect();

        let task = TaskHead {
            hidden: Dense::new(store, &mut rng, "task.hidden", c, c),
            norm: Norm::new(store, "task.bn", c),
            out: Dense::new(store, &mut rng, "task.out", c, cfg.output_dim()),
        };
        Architecture {
            stem,
            stages,
            heads,
            task,
        }
    }
}

/// Outputs of one attention head.
#[derive(Clone, Debug)]
pub struct HeadOutput<'t, T: Element> {
    /// Pooled attended features, `[N, C]`.
    pub features: Var<'t, T>,
    /// Spatial attention map in (0, 1), `[N, 1, H', W']`.
    pub spatial_map: Var<'t, T>,
    /// Channel gate in (0, 1), `[N, C]`.
    pub channel_gate: Var<'t, T>,
}

/// Task-specific prediction.
#[derive(Clone, Debug)]
pub enum Prediction<'t, T: Element> {
    Expr { logits: Var<'t, T>, probs: Var<'t, T> },
    Va { va: Var<'t, T> },
}

impl<'t, T: Element> Prediction<'t, T> {
    /// Class probabilities `[N, 8]` or (valence, arousal) pairs `[N, 2]`.
    pub fn output(&self) -> Var<'t, T> {
        match self {
            Prediction::Expr { probs, .. } => *probs,
            Prediction::Va { va } => *va,
        }
    }
}

/// Everything a forward pass produces, including what the losses consume.
pub struct ModelOutput<'t, T: Element> {
    pub prediction: Prediction<'t, T>,
    pub fused_features: Var<'t, T>,
    pub heads: Vec<HeadOutput<'t, T>>,
    /// Globally pooled backbone features; input of the affinity loss.
    pub backbone_features: Var<'t, T>,
    pub feature_map: Var<'t, T>,
    pub params: Bound<'t, T>,
}

/// Per-feature convex combination of head features: weights are the softmax
/// of the head values across the head axis.
pub fn attention_fusion<'t, T: Element>(tape: &'t Tape<T>, head_features: &[Var<'t, T>]) -> Result<Var<'t, T>> {
    if head_features.is_empty() {
        return Err(Error::Config("attention fusion needs at least one head".into()));
    }
    let stacked = tape.stack(head_features, 0)?;
    let weights = stacked.log_softmax(0)?.exp();
    stacked.mul(&weights)?.sum_axis(0, false)
}

/// Residual CNN feature extractor, multi-head spatial/channel attention,
/// attention fusion and a task head.
#[derive(Clone, Debug)]
pub struct DanModel<T: Element> {
    config: ModelConfig,
    store: ParamStore<T>,
    arch: Architecture,
}

impl<T: Element> DanModel<T> {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let arch = Architecture::build(&config, &mut store);
        Ok(DanModel { config, store, arch })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn parameter_count(&self) -> usize {
        self.store.scalar_count()
    }

    /// Same architecture and values in another element type.
    pub fn cast<U: Element>(&self) -> DanModel<U> {
        DanModel {
            config: self.config.clone(),
            store: self.store.cast(),
            arch: self.arch.clone(),
        }
    }

    fn norm_settings(&self, mode: NormMode) -> NormSettings {
        NormSettings {
            mode,
            momentum: self.config.bn_momentum,
            epsilon: self.config.bn_epsilon,
        }
    }

    pub fn bind<'t>(&self, tape: &'t Tape<T>) -> Bound<'t, T> {
        self.store.bind(tape)
    }

    /// Stem and residual stages. Returns the feature map `[N, C, S/2^k, S/2^k]`
    /// and its global average `[N, C]`.
    pub fn backbone_forward<'t>(
        &mut self,
        bound: &Bound<'t, T>,
        images: &Var<'t, T>,
        mode: NormMode,
    ) -> Result<(Var<'t, T>, Var<'t, T>)> {
        let shape = images.shape();
        let s = self.config.input_size;
        if shape.len() != 4 || shape[1] != self.config.channels || shape[2] != s || shape[3] != s {
            return Err(Error::Geometry(format!(
                "expected images [N, {}, {s}, {s}], got {shape:?}",
                self.config.channels
            )));
        }
        let ns = self.norm_settings(mode);
        let store = &mut self.store;
        let mut x = self.arch.stem.forward(store, bound, images, ns)?.relu().max_pool(2, 2)?;
        for (i, stage) in self.arch.stages.iter().enumerate() {
            if i > 0 {
                x = x.max_pool(2, 2)?;
            }
            for block in stage {
                let y = block.first.forward(store, bound, &x, ns)?.relu();
                let y = block.second.forward(store, bound, &y, ns)?;
                let skip = match &block.shortcut {
                    Some(proj) => proj.forward(store, bound, &x, ns)?,
                    None => x,
                };
                x = y.add(&skip)?.relu();
            }
        }
        let pooled = x.global_avg_pool()?;
        Ok((x, pooled))
    }

    fn head(&self, head: usize) -> Result<&AttentionHead> {
        self.arch
            .heads
            .get(head)
            .ok_or_else(|| Error::Config(format!("head {head} out of range {}", self.arch.heads.len())))
    }

    /// 1x1 reduce, 3x3 mix, 1x1 project to a single sigmoid map `[N,1,H',W']`.
    pub fn spatial_attention_unit<'t>(&self, bound: &Bound<'t, T>, head: usize, feature_map: &Var<'t, T>) -> Result<Var<'t, T>> {
        let unit = &self.head(head)?.spatial;
        let y = unit.reduce.forward(bound, feature_map)?.relu();
        let y = unit.mix.forward(bound, &y)?.relu();
        Ok(unit.project.forward(bound, &y)?.sigmoid())
    }

    /// Squeeze-and-excite style gate `[N, C]` from globally pooled features.
    pub fn channel_attention_unit<'t>(&self, bound: &Bound<'t, T>, head: usize, feature_map: &Var<'t, T>) -> Result<Var<'t, T>> {
        let unit = &self.head(head)?.channel;
        let pooled = feature_map.global_avg_pool()?;
        let y = unit.squeeze.forward(bound, &pooled)?.relu();
        Ok(unit.excite.forward(bound, &y)?.sigmoid())
    }

    pub fn attention_head<'t>(&self, bound: &Bound<'t, T>, head: usize, feature_map: &Var<'t, T>) -> Result<HeadOutput<'t, T>> {
        let spatial_map = self.spatial_attention_unit(bound, head, feature_map)?;
        let channel_gate = self.channel_attention_unit(bound, head, feature_map)?;
        let shape = feature_map.shape();
        let gate = channel_gate.reshape(vec![shape[0], shape[1], 1, 1])?;
        let attended = feature_map.mul(&spatial_map)?.mul(&gate)?;
        Ok(HeadOutput {
            features: attended.global_avg_pool()?,
            spatial_map,
            channel_gate,
        })
    }

    /// Dense, batch norm, then softmax over 8 logits or tanh over 2 outputs.
    pub fn task_head<'t>(&mut self, bound: &Bound<'t, T>, fused: &Var<'t, T>, mode: NormMode) -> Result<Prediction<'t, T>> {
        let ns = self.norm_settings(mode);
        let head = &self.arch.task;
        let h = head.hidden.forward(bound, fused)?;
        let h = head.norm.forward(&mut self.store, bound, &h, ns)?;
        let out = head.out.forward(bound, &h)?;
        Ok(match self.config.task {
            Task::Expr => Prediction::Expr {
                logits: out,
                probs: out.softmax(1)?,
            },
            Task::Va => Prediction::Va { va: out.tanh() },
        })
    }

    /// Full network on `images [N, 3, S, S]`.
    pub fn forward<'t>(&mut self, tape: &'t Tape<T>, images: &Tensor<T>, mode: NormMode) -> Result<ModelOutput<'t, T>> {
        let params = self.bind(tape);
        let input = tape.constant(images.clone());
        let (feature_map, backbone_features) = self.backbone_forward(&params, &input, mode)?;
        let heads = (0..self.config.num_heads)
            .map(|h| self.attention_head(&params, h, &feature_map))
            .collect::<Result<Vec<_>>>()?;
        let head_features: Vec<_> = heads.iter().map(|h| h.features).collect();
        let fused_features = attention_fusion(tape, &head_features)?;
        let prediction = self.task_head(&params, &fused_features, mode)?;
        Ok(ModelOutput {
            prediction,
            fused_features,
            heads,
            backbone_features,
            feature_map,
            params,
        })
    }

    /// Backbone straight into the task head, skipping attention.
    pub fn forward_without_attention<'t>(
        &mut self,
        tape: &'t Tape<T>,
        images: &Tensor<T>,
        mode: NormMode,
    ) -> Result<Prediction<'t, T>> {
        let params = self.bind(tape);
        let input = tape.constant(images.clone());
        let (_, pooled) = self.backbone_forward(&params, &input, mode)?;
        self.task_head(&params, &pooled, mode)
    }

    /// Zero the last weights of every attention unit and set their biases, so
    /// each spatial map is `sigmoid(spatial_logit)` and each gate
    /// `sigmoid(channel_logit)` everywhere.
    pub fn override_attention(&mut self, spatial_logit: f64, channel_logit: f64) {
        for head in &self.arch.heads {
            for (layer_w, layer_b, logit) in [
                (head.spatial.project.weight, head.spatial.project.bias, spatial_logit),
                (head.channel.excite.weight, head.channel.excite.bias, channel_logit),
            ] {
                self.store.get_mut(layer_w).value.fill(T::zero());
                self.store.get_mut(layer_b).value.fill(T::from_f64_lossy(logit));
            }
        }
    }

    /// Add tape gradients into the parameter store.
    pub fn accumulate_grads(&mut self, bound: &Bound<'_, T>) {
        self.store.accumulate_grads(bound);
    }

    pub fn zero_grad(&mut self) {
        self.store.zero_grad();
    }
}

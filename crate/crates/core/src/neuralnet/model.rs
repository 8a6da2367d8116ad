//! MobileMini: a stem convolution, a stack of depthwise-separable blocks with
//! optional squeeze-and-excitation, global average pooling and a dense head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::{h_swish, h_swish_grad};
use super::layers::{
    conv1d, conv1d_backward, dense, dense_backward, depthwise_conv1d, depthwise_conv1d_backward, pointwise_conv1d,
    pointwise_conv1d_backward, se_block, se_block_backward, softmax, SeCache, SeWeights,
};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Version written into model files; loading rejects anything else.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub out_channels: usize,
    pub kernel: usize,
    /// Channel reduction ratio of the SE bottleneck; `None` disables SE.
    pub se_reduction: Option<usize>,
    /// Adds the block input to its output. Needs equal in/out channels.
    pub residual: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_len: usize,
    pub classes: usize,
    pub stem_channels: usize,
    pub stem_kernel: usize,
    pub blocks: Vec<BlockSpec>,
}

impl Architecture {
    /// conv(1→8, k3) → DS(8→16, SE r4) → DS(16→16, residual) → GAP → dense.
    pub fn mobile_mini(input_len: usize, classes: usize) -> Self {
        Architecture {
            input_len,
            classes,
            stem_channels: 8,
            stem_kernel: 3,
            blocks: vec![
                BlockSpec {
                    out_channels: 16,
                    kernel: 3,
                    se_reduction: Some(4),
                    residual: false,
                },
                BlockSpec {
                    out_channels: 16,
                    kernel: 3,
                    se_reduction: None,
                    residual: true,
                },
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 || self.classes < 2 || self.stem_channels == 0 {
            return Err(Error::config(format!(
                "architecture needs input_len > 0, classes ≥ 2 and stem channels > 0, got {}/{}/{}",
                self.input_len, self.classes, self.stem_channels
            )));
        }
        if !(2..=4).contains(&self.blocks.len()) {
            return Err(Error::config(format!(
                "MobileMini takes 2 to 4 separable blocks, got {}",
                self.blocks.len()
            )));
        }
        let mut c = self.stem_channels;
        for k in std::iter::once(self.stem_kernel).chain(self.blocks.iter().map(|b| b.kernel)) {
            if k % 2 == 0 {
                return Err(Error::config(format!("kernel size {k} must be odd")));
            }
        }
        for (n, b) in self.blocks.iter().enumerate() {
            if b.out_channels == 0 {
                return Err(Error::config(format!("block {n} has no output channels")));
            }
            if let Some(r) = b.se_reduction {
                if r == 0 || b.out_channels / r == 0 {
                    return Err(Error::config(format!(
                        "block {n}: SE reduction {r} does not fit {} channels",
                        b.out_channels
                    )));
                }
            }
            if b.residual && b.out_channels != c {
                return Err(Error::config(format!(
                    "block {n}: residual needs {c} → {c} channels, got {c} → {}",
                    b.out_channels
                )));
            }
            c = b.out_channels;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeParams {
    pub fc1_w: Tensor,
    pub fc1_b: Tensor,
    pub fc2_w: Tensor,
    pub fc2_b: Tensor,
}

impl SeParams {
    fn weights(&self) -> SeWeights<'_> {
        SeWeights {
            fc1_w: &self.fc1_w,
            fc1_b: &self.fc1_b,
            fc2_w: &self.fc2_w,
            fc2_b: &self.fc2_b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsBlock {
    pub depthwise: Tensor,
    pub pointwise: Tensor,
    pub se: Option<SeParams>,
    pub residual: bool,
}

/// How fresh weights are drawn. Biases always start at zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightInit {
    #[default]
    XavierUniform,
    Zeros,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobileMini {
    pub arch: Architecture,
    pub stem_w: Tensor,
    pub stem_b: Tensor,
    pub blocks: Vec<DsBlock>,
    pub head_w: Tensor,
    pub head_b: Tensor,
}

/// Activations kept from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Tensor,
    stem_pre: Tensor,
    blocks: Vec<BlockCache>,
    pooled: Vec<f64>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone)]
struct BlockCache {
    input: Tensor,
    dw_out: Tensor,
    dw_act: Tensor,
    pw_out: Tensor,
    pw_act: Tensor,
    se: Option<SeCache>,
}

impl MobileMini {
    pub fn new<R: Rng>(arch: Architecture, init: WeightInit, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let mut draw = |shape: &[usize], fan_in: usize, fan_out: usize| match init {
            WeightInit::XavierUniform => Tensor::xavier_uniform(shape, fan_in, fan_out, rng),
            WeightInit::Zeros => Tensor::zeros(shape),
        };
        let (c0, k0) = (arch.stem_channels, arch.stem_kernel);
        let stem_w = draw(&[c0, 1, k0], k0, c0 * k0);
        let mut blocks = Vec::with_capacity(arch.blocks.len());
        let mut c = c0;
        for b in &arch.blocks {
            let depthwise = draw(&[c, b.kernel], b.kernel, b.kernel);
            let pointwise = draw(&[b.out_channels, c], c, b.out_channels);
            let se = b.se_reduction.map(|r| {
                let hidden = b.out_channels / r;
                SeParams {
                    fc1_w: draw(&[hidden, b.out_channels], b.out_channels, hidden),
                    fc1_b: Tensor::zeros(&[hidden]),
                    fc2_w: draw(&[b.out_channels, hidden], hidden, b.out_channels),
                    fc2_b: Tensor::zeros(&[b.out_channels]),
                }
            });
            blocks.push(DsBlock {
                depthwise,
                pointwise,
                se,
                residual: b.residual,
            });
            c = b.out_channels;
        }
        let head_w = draw(&[arch.classes, c], c, arch.classes);
        Ok(MobileMini {
            stem_w,
            stem_b: Tensor::zeros(&[c0]),
            blocks,
            head_w,
            head_b: Tensor::zeros(&[arch.classes]),
            arch,
        })
    }

    /// A model with every parameter zeroed, shaped like `self`. Used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.params_mut().into_iter().for_each(|t| t.data.fill(0.0));
        z
    }

    /// Parameters in a fixed order, paired with their serialized names.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("stem.weight".to_string(), &self.stem_w),
            ("stem.bias".into(), &self.stem_b),
        ];
        for (n, b) in self.blocks.iter().enumerate() {
            out.push((format!("block{n}.depthwise"), &b.depthwise));
            out.push((format!("block{n}.pointwise"), &b.pointwise));
            if let Some(se) = &b.se {
                out.push((format!("block{n}.se.fc1.weight"), &se.fc1_w));
                out.push((format!("block{n}.se.fc1.bias"), &se.fc1_b));
                out.push((format!("block{n}.se.fc2.weight"), &se.fc2_w));
                out.push((format!("block{n}.se.fc2.bias"), &se.fc2_b));
            }
        }
        out.push(("head.weight".into(), &self.head_w));
        out.push(("head.bias".into(), &self.head_b));
        out
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.named_params().into_iter().map(|(_, t)| t).collect()
    }

    /// Same order as [`MobileMini::params`].
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.stem_w, &mut self.stem_b];
        for b in &mut self.blocks {
            out.push(&mut b.depthwise);
            out.push(&mut b.pointwise);
            if let Some(se) = &mut b.se {
                out.extend([&mut se.fc1_w, &mut se.fc1_b, &mut se.fc2_w, &mut se.fc2_b]);
            }
        }
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|t| t.is_finite())
    }

    /// Logits before softmax, with the activations needed by [`MobileMini::backward`].
    pub fn forward_cached(&self, features: &[f64]) -> Result<ForwardCache> {
        if features.len() != self.arch.input_len {
            return Err(Error::shape(format!(
                "model expects {} features, got {}",
                self.arch.input_len,
                features.len()
            )));
        }
        let input = Tensor::new(vec![1, features.len()], features.to_vec())?;
        let stem_pre = conv1d(&input, &self.stem_w, Some(&self.stem_b))?;
        let mut x = stem_pre.map(h_swish);
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let dw_out = depthwise_conv1d(&x, &b.depthwise)?;
            let dw_act = dw_out.map(h_swish);
            let pw_out = pointwise_conv1d(&dw_act, &b.pointwise)?;
            let pw_act = pw_out.map(h_swish);
            let (mut y, se) = match &b.se {
                Some(p) => {
                    let (y, c) = se_block(&pw_act, &p.weights())?;
                    (y, Some(c))
                }
                None => (pw_act.clone(), None),
            };
            if b.residual {
                y.add_assign(&x);
            }
            caches.push(BlockCache {
                input: std::mem::replace(&mut x, y),
                dw_out,
                dw_act,
                pw_out,
                pw_act,
                se,
            });
        }
        let len = x.shape[1];
        let pooled: Vec<f64> = x
            .data
            .chunks_exact(len)
            .map(|c| c.iter().sum::<f64>() / len as f64)
            .collect();
        let logits = dense(&pooled, &self.head_w, &self.head_b)?;
        if logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::Inference("non-finite logits".into()));
        }
        Ok(ForwardCache {
            input,
            stem_pre,
            blocks: caches,
            pooled,
            probs: softmax(&logits),
        })
    }

    /// Class probabilities for one feature vector.
    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(features)?.probs)
    }

    /// Index of the most probable class; ties go to the lower index.
    pub fn predict(&self, features: &[f64]) -> Result<(usize, Vec<f64>)> {
        let probs = self.forward(features)?;
        Ok((argmax(&probs), probs))
    }

    /// Gradient of the cross-entropy loss for `label`, as a model-shaped buffer.
    pub fn backward(&self, cache: &ForwardCache, label: usize) -> Result<MobileMini> {
        if label >= self.arch.classes {
            return Err(Error::domain(format!(
                "label {label} outside {} classes",
                self.arch.classes
            )));
        }
        let mut g = self.zeros_like();
        let mut dlogits = cache.probs.clone();
        dlogits[label] -= 1.0;
        let (dpooled, dw, db) = dense_backward(&cache.pooled, &self.head_w, &dlogits);
        g.head_w = dw;
        g.head_b = db;
        let len = self.arch.input_len;
        let mut dx = Tensor::zeros(&[dpooled.len(), len]);
        for (row, d) in dx.data.chunks_exact_mut(len).zip(&dpooled) {
            row.fill(d / len as f64);
        }
        for (n, (b, c)) in self.blocks.iter().zip(&cache.blocks).enumerate().rev() {
            let dy = dx;
            let mut d_act = match (&b.se, &c.se) {
                (Some(p), Some(sc)) => {
                    let (d, w1, b1, w2, b2) = se_block_backward(&c.pw_act, &p.weights(), sc, &dy);
                    let gse = g.blocks[n].se.as_mut().expect("gradient mirrors model");
                    gse.fc1_w = w1;
                    gse.fc1_b = b1;
                    gse.fc2_w = w2;
                    gse.fc2_b = b2;
                    d
                }
                _ => dy.clone(),
            };
            for (d, z) in d_act.data.iter_mut().zip(&c.pw_out.data) {
                *d *= h_swish_grad(*z);
            }
            let (mut d_dw_act, dpw) = pointwise_conv1d_backward(&c.dw_act, &b.pointwise, &d_act);
            for (d, z) in d_dw_act.data.iter_mut().zip(&c.dw_out.data) {
                *d *= h_swish_grad(*z);
            }
            let (mut d_in, ddw) = depthwise_conv1d_backward(&c.input, &b.depthwise, &d_dw_act);
            if b.residual {
                d_in.add_assign(&dy);
            }
            g.blocks[n].depthwise = ddw;
            g.blocks[n].pointwise = dpw;
            dx = d_in;
        }
        for (d, z) in dx.data.iter_mut().zip(&cache.stem_pre.data) {
            *d *= h_swish_grad(*z);
        }
        let (_, dw, db) = conv1d_backward(&cache.input, &self.stem_w, &dx);
        g.stem_w = dw;
        g.stem_b = db;
        Ok(g)
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            format_version: FORMAT_VERSION,
            architecture: self.arch.clone(),
            layers: self
                .named_params()
                .into_iter()
                .map(|(name, t)| NamedTensor {
                    name,
                    shape: t.shape.clone(),
                    data: t.data.clone(),
                })
                .collect(),
        }
    }

    /// Rebuilds a model, checking every layer name and shape against the architecture.
    pub fn from_file(file: &ModelFile) -> Result<Self> {
        if file.format_version != FORMAT_VERSION {
            return Err(Error::shape(format!(
                "model format version {} is not supported (expected {FORMAT_VERSION})",
                file.format_version
            )));
        }
        let mut model = MobileMini::new(
            file.architecture.clone(),
            WeightInit::Zeros,
            &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0),
        )?;
        let names: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
        if names.len() != file.layers.len() {
            return Err(Error::shape(format!(
                "architecture has {} parameter tensors, file has {}",
                names.len(),
                file.layers.len()
            )));
        }
        for ((name, slot), layer) in names.iter().zip(model.params_mut()).zip(&file.layers) {
            if *name != layer.name || slot.shape != layer.shape {
                return Err(Error::shape(format!(
                    "expected layer {name} {:?}, found {} {:?}",
                    slot.shape, layer.name, layer.shape
                )));
            }
            *slot = Tensor::new(layer.shape.clone(), layer.data.clone())?;
            if !slot.is_finite() {
                return Err(Error::shape(format!("layer {name} holds non-finite values")));
            }
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(s)?)
    }
}

pub fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in x.iter().enumerate() {
        if *v > x[best] {
            best = k;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Serialized weights: a format version, the architecture and a flat layer list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub architecture: Architecture,
    pub layers: Vec<NamedTensor>,
}

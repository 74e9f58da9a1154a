use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{avg_pool2, avg_pool2_backward, BatchNorm2d, Conv2d, Param, Relu, UpConv2d};
use super::tensor::{concat_channels, split_channels, Tensor4};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct UNetConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub base_channels: usize,
    /// Number of pooling stages.
    pub depth: usize,
    /// Side length `S` of the square network input.
    pub input_size: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            in_channels: 4,
            out_channels: 1,
            base_channels: 16,
            depth: 3,
            input_size: 64,
        }
    }
}

impl UNetConfig {
    /// 256×256 input, 512-channel 16×16 bottleneck.
    pub fn full_scale() -> Self {
        Self {
            base_channels: 32,
            depth: 4,
            input_size: 256,
            ..Default::default()
        }
    }

    /// Small enough to train a thousand samples on one core in minutes.
    pub fn compact() -> Self {
        Self {
            base_channels: 8,
            depth: 2,
            input_size: 32,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 || self.base_channels == 0 {
            return Err(Error::config("unet", "channel counts must be positive"));
        }
        if self.input_size == 0 || self.input_size % (1 << self.depth) != 0 {
            return Err(Error::config(
                "input_size",
                format!("{} not divisible by 2^{}", self.input_size, self.depth),
            ));
        }
        Ok(())
    }

    pub fn stage_channels(&self, stage: usize) -> usize {
        self.base_channels << stage
    }

    pub fn stage_size(&self, stage: usize) -> usize {
        self.input_size >> stage
    }
}

/// 3×3 convolution, batch norm, ReLU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
    #[serde(skip)]
    relu: Relu,
}

impl ConvBlock {
    pub fn new(name: &str, c_in: usize, c_out: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            conv: Conv2d::new(&format!("{name}.conv"), c_in, c_out, 3, rng),
            bn: BatchNorm2d::new(&format!("{name}.bn"), c_out),
            relu: Relu::default(),
        }
    }

    pub fn infer(&self, x: &Tensor4) -> Result<Tensor4> {
        Ok(self.relu.infer(&self.bn.infer(&self.conv.infer(x)?)?))
    }

    pub fn forward(&mut self, x: &Tensor4) -> Result<Tensor4> {
        let y = self.conv.forward(x)?;
        let y = self.bn.forward(&y)?;
        Ok(self.relu.forward(&y))
    }

    pub fn backward(&mut self, dy: &Tensor4) -> Result<Tensor4> {
        let d = self.relu.backward(dy)?;
        let d = self.bn.backward(&d)?;
        self.conv.backward(&d)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.conv.params_mut();
        v.extend(self.bn.params_mut());
        v
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = self.conv.params();
        v.extend(self.bn.params());
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderStage {
    pub up: UpConv2d,
    pub blocks: [ConvBlock; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UNet {
    pub config: UNetConfig,
    pub encoder: Vec<[ConvBlock; 2]>,
    pub bottleneck: [ConvBlock; 2],
    /// Deepest stage first.
    pub decoder: Vec<DecoderStage>,
    pub head: Conv2d,
}

/// Feature-map shapes at each stage of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeTrace {
    pub encoder: Vec<[usize; 4]>,
    pub bottleneck: [usize; 4],
    pub upconv: Vec<[usize; 4]>,
    pub decoder: Vec<[usize; 4]>,
    pub output: [usize; 4],
}

impl UNet {
    /// Kaiming-initialised network; identical seeds give identical weights.
    pub fn new(config: UNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut encoder = Vec::new();
        let mut c_prev = config.in_channels;
        for i in 0..config.depth {
            let c = config.stage_channels(i);
            encoder.push([
                ConvBlock::new(&format!("enc{i}.0"), c_prev, c, &mut rng),
                ConvBlock::new(&format!("enc{i}.1"), c, c, &mut rng),
            ]);
            c_prev = c;
        }
        let cb = config.stage_channels(config.depth);
        let bottleneck = [
            ConvBlock::new("mid.0", c_prev, cb, &mut rng),
            ConvBlock::new("mid.1", cb, cb, &mut rng),
        ];
        let mut decoder = Vec::new();
        for i in (0..config.depth).rev() {
            let c = config.stage_channels(i);
            decoder.push(DecoderStage {
                up: UpConv2d::new(&format!("dec{i}.up"), 2 * c, c, &mut rng),
                blocks: [
                    ConvBlock::new(&format!("dec{i}.0"), 2 * c, c, &mut rng),
                    ConvBlock::new(&format!("dec{i}.1"), c, c, &mut rng),
                ],
            });
        }
        let head = Conv2d::new("head", config.base_channels, config.out_channels, 1, &mut rng);
        Ok(Self {
            config,
            encoder,
            bottleneck,
            decoder,
            head,
        })
    }

    fn check_input(&self, x: &Tensor4) -> Result<()> {
        let s = self.config.input_size;
        x.check_shape([x.n(), self.config.in_channels, s, s], "unet input")?;
        if x.n() == 0 {
            return Err(Error::Dimension("empty batch".into()));
        }
        Ok(())
    }

    /// Inference with running batch-norm statistics; no state is touched.
    pub fn infer(&self, x: &Tensor4) -> Result<Tensor4> {
        Ok(self.infer_traced(x)?.0)
    }

    pub fn infer_traced(&self, x: &Tensor4) -> Result<(Tensor4, ShapeTrace)> {
        self.check_input(x)?;
        let mut skips = Vec::with_capacity(self.config.depth);
        let mut encoder = Vec::new();
        let mut h = x.clone();
        for [a, b] in &self.encoder {
            h = b.infer(&a.infer(&h)?)?;
            encoder.push(h.shape);
            let pooled = avg_pool2(&h)?;
            skips.push(h);
            h = pooled;
        }
        let [m0, m1] = &self.bottleneck;
        h = m1.infer(&m0.infer(&h)?)?;
        let bottleneck = h.shape;
        let mut upconv = Vec::new();
        let mut decoder = Vec::new();
        for stage in &self.decoder {
            let u = stage.up.infer(&h)?;
            upconv.push(u.shape);
            let cat = concat_channels(&u, &skips.pop().expect("one skip per stage"))?;
            h = stage.blocks[1].infer(&stage.blocks[0].infer(&cat)?)?;
            decoder.push(h.shape);
        }
        let out = self.head.infer(&h)?;
        let output = out.shape;
        Ok((
            out,
            ShapeTrace {
                encoder,
                bottleneck,
                upconv,
                decoder,
                output,
            },
        ))
    }

    /// Training-mode pass: batch statistics, running averages updated,
    /// activations cached for [`UNet::backward`].
    pub fn forward(&mut self, x: &Tensor4) -> Result<Tensor4> {
        self.check_input(x)?;
        let mut skips = Vec::with_capacity(self.config.depth);
        let mut h = x.clone();
        for [a, b] in &mut self.encoder {
            h = b.forward(&a.forward(&h)?)?;
            let pooled = avg_pool2(&h)?;
            skips.push(h);
            h = pooled;
        }
        let [m0, m1] = &mut self.bottleneck;
        h = m1.forward(&m0.forward(&h)?)?;
        for stage in &mut self.decoder {
            let u = stage.up.forward(&h)?;
            let cat = concat_channels(&u, &skips.pop().expect("one skip per stage"))?;
            let [b0, b1] = &mut stage.blocks;
            h = b1.forward(&b0.forward(&cat)?)?;
        }
        self.head.forward(&h)
    }

    /// Accumulates parameter gradients for the last [`UNet::forward`] and
    /// returns the gradient with respect to the input.
    pub fn backward(&mut self, dy: &Tensor4) -> Result<Tensor4> {
        let mut d = self.head.backward(dy)?;
        let mut skip_grads = Vec::with_capacity(self.config.depth);
        for stage in self.decoder.iter_mut().rev() {
            let [b0, b1] = &mut stage.blocks;
            d = b0.backward(&b1.backward(&d)?)?;
            let (du, ds) = split_channels(&d, stage.up.c_out());
            skip_grads.push(ds);
            d = stage.up.backward(&du)?;
        }
        let [m0, m1] = &mut self.bottleneck;
        d = m0.backward(&m1.backward(&d)?)?;
        // skip_grads is ordered shallowest first, matching the encoder
        for ([a, b], ds) in self.encoder.iter_mut().zip(skip_grads).rev() {
            let mut g = avg_pool2_backward(&d);
            g.data.iter_mut().zip(&ds.data).for_each(|(x, y)| *x += y);
            d = a.backward(&b.backward(&g)?)?;
        }
        Ok(d)
    }

    /// Every learnable array in a fixed order.
    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = Vec::new();
        for blocks in &mut self.encoder {
            for b in blocks {
                v.extend(b.params_mut());
            }
        }
        for b in &mut self.bottleneck {
            v.extend(b.params_mut());
        }
        for s in &mut self.decoder {
            v.extend(s.up.params_mut());
            for b in &mut s.blocks {
                v.extend(b.params_mut());
            }
        }
        v.extend(self.head.params_mut());
        v
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = Vec::new();
        for blocks in &self.encoder {
            for b in blocks {
                v.extend(b.params());
            }
        }
        for b in &self.bottleneck {
            v.extend(b.params());
        }
        for s in &self.decoder {
            v.extend(s.up.params());
            for b in &s.blocks {
                v.extend(b.params());
            }
        }
        v.extend(self.head.params());
        v
    }

    /// Batch-norm layers in the same order as [`UNet::params`].
    pub fn batchnorms_mut(&mut self) -> Vec<&mut BatchNorm2d> {
        let mut v = Vec::new();
        for blocks in &mut self.encoder {
            v.extend(blocks.iter_mut().map(|b| &mut b.bn));
        }
        v.extend(self.bottleneck.iter_mut().map(|b| &mut b.bn));
        for s in &mut self.decoder {
            v.extend(s.blocks.iter_mut().map(|b| &mut b.bn));
        }
        v
    }

    pub fn batchnorms(&self) -> Vec<&BatchNorm2d> {
        let mut v = Vec::new();
        for blocks in &self.encoder {
            v.extend(blocks.iter().map(|b| &b.bn));
        }
        v.extend(self.bottleneck.iter().map(|b| &b.bn));
        for s in &self.decoder {
            v.extend(s.blocks.iter().map(|b| &b.bn));
        }
        v
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn n_parameters(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_ladder() {
        for cfg in [
            UNetConfig::compact(),
            UNetConfig {
                input_size: 16,
                ..Default::default()
            },
            UNetConfig {
                base_channels: 2,
                depth: 1,
                input_size: 8,
                ..Default::default()
            },
        ] {
            let net = UNet::new(cfg.clone(), 0).unwrap();
            let s = cfg.input_size;
            let (out, t) = net.infer_traced(&Tensor4::zeros([2, 4, s, s])).unwrap();
            assert_eq!(out.shape, [2, 1, s, s]);
            for (i, sh) in t.encoder.iter().enumerate() {
                assert_eq!(*sh, [2, cfg.stage_channels(i), cfg.stage_size(i), cfg.stage_size(i)]);
            }
            let d = cfg.depth;
            assert_eq!(t.bottleneck, [2, cfg.stage_channels(d), cfg.stage_size(d), cfg.stage_size(d)]);
            for (j, sh) in t.upconv.iter().enumerate() {
                let i = d - 1 - j;
                assert_eq!(*sh, [2, cfg.stage_channels(i), cfg.stage_size(i), cfg.stage_size(i)]);
                assert_eq!(t.decoder[j], *sh);
            }
        }
    }

    #[test]
    fn bad_sizes_rejected() {
        let cfg = UNetConfig {
            input_size: 20,
            ..Default::default()
        };
        assert!(UNet::new(cfg, 0).is_err());
        let net = UNet::new(UNetConfig::compact(), 0).unwrap();
        assert!(net.infer(&Tensor4::zeros([1, 4, 16, 16])).is_err());
    }
}

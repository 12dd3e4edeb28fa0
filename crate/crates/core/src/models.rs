//! U-Net generators and patch discriminators.

use crate::autodiff::{Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{ParamVector, Tensor};

const LEAKY_SLOPE: f64 = 0.2;
const INIT_STD: f64 = 0.02;

/// Ordered, named trainable tensors of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    fn new() -> Self {
        ParamSet {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    fn push_conv(
        &mut self,
        name: &str,
        c_out: usize,
        c_in: usize,
        k: usize,
        rng: Option<&mut SeededRng>,
    ) {
        let shape = [c_out, c_in, k, k];
        let weight = match rng {
            Some(rng) => Tensor::from_fn(&shape, |_| INIT_STD * rng.gaussian()),
            None => Tensor::zeros(&shape),
        };
        self.names.push(format!("{name}.weight"));
        self.tensors.push(weight);
        self.names.push(format!("{name}.bias"));
        self.tensors.push(Tensor::zeros(&[c_out]));
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn flatten(&self) -> ParamVector {
        ParamVector::from_tensors(self.names.iter().map(String::as_str).zip(&self.tensors))
    }

    /// Overwrites every tensor from `vector`, which must carry this set's layout.
    pub fn unflatten(&mut self, vector: &ParamVector) -> Result<()> {
        if vector.len() != self.numel() {
            return Err(Error::Layout(format!(
                "vector holds {} values, model has {}",
                vector.len(),
                self.numel()
            )));
        }
        self.flatten().ensure_same_layout(vector)?;
        for (t, slot) in self.tensors.iter_mut().zip(vector.layout()) {
            t.data_mut().copy_from_slice(vector.slot_values(slot));
        }
        Ok(())
    }

    /// Gradient slots flattened in parameter order (zeros where absent).
    pub fn grad_vector(&self) -> ParamVector {
        let mut g = ParamVector::zeros_like(&self.flatten());
        let mut offset = 0;
        for t in &self.tensors {
            if let Some(grad) = t.grad() {
                g.values_mut()[offset..offset + grad.len()].copy_from_slice(grad);
            }
            offset += t.numel();
        }
        g
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Places every parameter on the tape as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.leaf(t.clone())).collect()
    }

    /// Places every parameter on the tape as a constant (no gradients).
    pub fn bind_frozen(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors
            .iter()
            .map(|t| tape.constant(t.clone()))
            .collect()
    }

    /// Adds `scale ×` the tape gradients of `vars` into the gradient slots.
    pub fn accumulate(&mut self, grads: &Gradients, vars: &[Var], scale: f64) {
        debug_assert_eq!(vars.len(), self.tensors.len());
        for (t, &v) in self.tensors.iter_mut().zip(vars) {
            match grads.get(v) {
                Some(g) => t.accumulate_grad(g, scale),
                None => {
                    if t.grad().is_none() {
                        t.zero_grad();
                    }
                }
            }
        }
    }
}

/// Shared access to the parameter set of a network.
pub trait Network {
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;

    fn flatten_params(&self) -> ParamVector {
        self.params().flatten()
    }

    fn unflatten_params(&mut self, vector: &ParamVector) -> Result<()> {
        self.params_mut().unflatten(vector)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub image_size: usize,
    /// Output channels of each downsampling block.
    pub channels: Vec<usize>,
    /// 1-based encoder block whose activation is the latent; clamped to the depth.
    pub latent_tap_index: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            image_size: 32,
            channels: vec![16, 32, 64],
            latent_tap_index: 5,
        }
    }
}

impl GeneratorConfig {
    pub fn depth(&self) -> usize {
        self.channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "generator channels must be non-empty and positive, got {:?}",
                self.channels
            )));
        }
        let div = 1usize << self.depth();
        if self.image_size == 0 || self.image_size % div != 0 {
            return Err(Error::InvalidArgument(format!(
                "image size {} must be divisible by 2^{}",
                self.image_size,
                self.depth()
            )));
        }
        Ok(())
    }

    /// Effective 0-based tap block.
    pub fn tap_block(&self) -> usize {
        self.latent_tap_index.clamp(1, self.depth()) - 1
    }
}

fn check_image(op: &'static str, image: &Tensor, size: usize) -> Result<()> {
    if image.shape() != [1, size, size] {
        return Err(Error::shape(
            op,
            format!(
                "expected image [1, {size}, {size}], got {:?}",
                image.shape()
            ),
        ));
    }
    Ok(())
}

/// Activations produced by one generator pass.
pub struct GeneratorTrace {
    pub output: Var,
    pub encodings: Vec<Var>,
}

/// U-Net: stride-2 4×4 conv encoder blocks with LeakyReLU, nearest-upsample +
/// 3×3 conv + ReLU decoder blocks with additive skips, and a final upsample,
/// 3×3 conv and tanh back to one channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    config: GeneratorConfig,
    params: ParamSet,
}

impl Generator {
    pub fn new(config: GeneratorConfig, seed: u64) -> Result<Self> {
        let mut rng = SeededRng::derive(seed, &[0x6765_6e]);
        Self::build(config, Some(&mut rng))
    }

    /// All parameters zero.
    pub fn zeroed(config: GeneratorConfig) -> Result<Self> {
        Self::build(config, None)
    }

    fn build(config: GeneratorConfig, mut rng: Option<&mut SeededRng>) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let mut c_prev = 1;
        for (i, &c) in config.channels.iter().enumerate() {
            params.push_conv(&format!("enc{i}"), c, c_prev, 4, rng.as_deref_mut());
            c_prev = c;
        }
        for i in (1..config.depth()).rev() {
            let (c_in, c_out) = (config.channels[i], config.channels[i - 1]);
            params.push_conv(&format!("dec{i}"), c_out, c_in, 3, rng.as_deref_mut());
        }
        params.push_conv("out", 1, config.channels[0], 3, rng.as_deref_mut());
        Ok(Generator { config, params })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    /// Records a full pass; `bound` comes from [`ParamSet::bind`].
    pub fn trace(&self, tape: &mut Tape, bound: &[Var], image: Var) -> Result<GeneratorTrace> {
        check_image(
            "generator_forward",
            tape.value(image),
            self.config.image_size,
        )?;
        let d = self.config.depth();
        let mut encodings = Vec::with_capacity(d);
        let mut h = image;
        for i in 0..d {
            let z = tape.conv2d(h, bound[2 * i], Some(bound[2 * i + 1]), 2, 1)?;
            h = tape.leaky_relu(z, LEAKY_SLOPE);
            encodings.push(h);
        }
        let mut p = 2 * d;
        for i in (1..d).rev() {
            let up = tape.upsample2x(h)?;
            let z = tape.conv2d(up, bound[p], Some(bound[p + 1]), 1, 1)?;
            let a = tape.relu(z);
            h = tape.add(a, encodings[i - 1])?;
            p += 2;
        }
        let up = tape.upsample2x(h)?;
        let z = tape.conv2d(up, bound[p], Some(bound[p + 1]), 1, 1)?;
        let output = tape.tanh(z);
        Ok(GeneratorTrace { output, encodings })
    }

    /// Encoder-only pass up to the tap block.
    pub fn trace_latent(&self, tape: &mut Tape, bound: &[Var], image: Var) -> Result<Var> {
        check_image("extract_latent", tape.value(image), self.config.image_size)?;
        let mut h = image;
        for i in 0..=self.config.tap_block() {
            let z = tape.conv2d(h, bound[2 * i], Some(bound[2 * i + 1]), 2, 1)?;
            h = tape.leaky_relu(z, LEAKY_SLOPE);
        }
        Ok(h)
    }

    /// Translates one `[1,H,W]` image in `[−1,1]` space.
    pub fn forward(&self, image: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.params.bind_frozen(&mut tape);
        let x = tape.constant(image.clone());
        let out = self.trace(&mut tape, &bound, x)?.output;
        Ok(tape.value(out).clone())
    }

    /// Activation of encoder block `latent_tap_index` (clamped to the deepest).
    pub fn extract_latent(&self, image: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.params.bind_frozen(&mut tape);
        let x = tape.constant(image.clone());
        let z = self.trace_latent(&mut tape, &bound, x)?;
        Ok(tape.value(z).clone())
    }
}

impl Network for Generator {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorConfig {
    pub image_size: usize,
    /// Hidden channels; one more stride-2 conv maps to a 1-channel logit map.
    pub channels: Vec<usize>,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            image_size: 32,
            channels: vec![16, 32],
        }
    }
}

impl DiscriminatorConfig {
    pub fn depth(&self) -> usize {
        self.channels.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.contains(&0) {
            return Err(Error::InvalidArgument(
                "discriminator channels must be positive".into(),
            ));
        }
        let div = 1usize << self.depth();
        if self.image_size < div || self.image_size % div != 0 {
            return Err(Error::InvalidArgument(format!(
                "image size {} must be a positive multiple of 2^{}",
                self.image_size,
                self.depth()
            )));
        }
        Ok(())
    }
}

/// Least-squares patch discriminator: stride-2 4×4 convs with LeakyReLU
/// and a final stride-2 conv to raw logits.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    config: DiscriminatorConfig,
    params: ParamSet,
}

impl Discriminator {
    pub fn new(config: DiscriminatorConfig, seed: u64) -> Result<Self> {
        let mut rng = SeededRng::derive(seed, &[0x6469_73]);
        Self::build(config, Some(&mut rng))
    }

    pub fn zeroed(config: DiscriminatorConfig) -> Result<Self> {
        Self::build(config, None)
    }

    fn build(config: DiscriminatorConfig, mut rng: Option<&mut SeededRng>) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let mut c_prev = 1;
        for (i, &c) in config.channels.iter().enumerate() {
            params.push_conv(&format!("block{i}"), c, c_prev, 4, rng.as_deref_mut());
            c_prev = c;
        }
        params.push_conv("logits", 1, c_prev, 4, rng.as_deref_mut());
        Ok(Discriminator { config, params })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    pub fn trace(&self, tape: &mut Tape, bound: &[Var], image: Var) -> Result<Var> {
        check_image(
            "discriminator_forward",
            tape.value(image),
            self.config.image_size,
        )?;
        let mut h = image;
        let hidden = self.config.channels.len();
        for i in 0..hidden {
            let z = tape.conv2d(h, bound[2 * i], Some(bound[2 * i + 1]), 2, 1)?;
            h = tape.leaky_relu(z, LEAKY_SLOPE);
        }
        tape.conv2d(h, bound[2 * hidden], Some(bound[2 * hidden + 1]), 2, 1)
    }

    pub fn forward(&self, image: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.params.bind_frozen(&mut tape);
        let x = tape.constant(image.clone());
        let logits = self.trace(&mut tape, &bound, x)?;
        Ok(tape.value(logits).clone())
    }
}

impl Network for Discriminator {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
}

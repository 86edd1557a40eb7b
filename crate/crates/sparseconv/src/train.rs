//! Desk-scale trainer: a small CNN on synthetic labeled data, with
//! magnitude regularization and threshold pruning, emitting the per-layer
//! density trajectories the pruning controller consumes.
//!
//! The network is deliberately tiny (two conv layers plus one FC head,
//! a few thousand parameters) so a full guided-pruning run finishes in
//! seconds on a laptop. Forward convolutions go through the reference
//! kernel in [`crate::conv`]; backward passes are explicit loops.

use std::f32::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::conv::conv_dense_direct;
use crate::error::{Error, Result};
use crate::gsl::{
    Directive, GslConfig, GslController, GslReport, PruneDirective, TrajectoryCheck,
};
use crate::io;
use crate::model::PlatformProfile;
use crate::tensor::{pad_input, LayerSpec, Tensor3, Tensor4};

// ---------------------------------------------------------------------------
// synthetic dataset

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetVariant {
    /// Oriented gratings with random phase and additive noise. Class means
    /// are zero, so raw-pixel linear classifiers have little to work with.
    OrientedTextures,
    /// Every sample identical; labels carry no usable signal. Sanity control:
    /// nothing should train past the 1/classes baseline.
    Constant,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: Vec<Tensor3>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

pub const SAMPLE_SIDE: usize = 12;

pub fn synth_dataset(seed: u64, n_samples: usize, classes: usize) -> Result<Dataset> {
    synth_dataset_variant(seed, n_samples, classes, DatasetVariant::OrientedTextures)
}

pub fn synth_dataset_variant(
    seed: u64,
    n_samples: usize,
    classes: usize,
    variant: DatasetVariant,
) -> Result<Dataset> {
    if classes < 2 || n_samples == 0 {
        return Err(Error::InvalidArgument("need n_samples >= 1 and classes >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0f32, 0.25).expect("valid sigma");
    // round-robin labels, shuffled: balanced within one sample per class
    let mut labels: Vec<usize> = (0..n_samples).map(|i| i % classes).collect();
    labels.shuffle(&mut rng);
    let side = SAMPLE_SIDE;
    let mut inputs = Vec::with_capacity(n_samples);
    for &label in &labels {
        let mut data = vec![0.0f32; side * side];
        match variant {
            DatasetVariant::OrientedTextures => {
                let theta = PI * label as f32 / classes as f32;
                let (dir_x, dir_y) = (theta.cos(), theta.sin());
                let freq = 2.0 + rng.random_range(-0.2f32..0.2);
                let phase = rng.random_range(0.0f32..2.0 * PI);
                for y in 0..side {
                    for x in 0..side {
                        let u = (x as f32 - 5.5) * dir_x + (y as f32 - 5.5) * dir_y;
                        let v = (2.0 * PI * freq * u / side as f32 + phase).sin();
                        data[y * side + x] = v + noise.sample(&mut rng);
                    }
                }
            }
            DatasetVariant::Constant => data.fill(0.5),
        }
        inputs.push(Tensor3::new(1, side, side, data)?);
    }
    Ok(Dataset { inputs, labels, classes })
}

// ---------------------------------------------------------------------------
// network

/// How the trainer treats a layer's weights between prune passes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PruneMode {
    /// Thresholding and L1 shrinkage apply.
    Active,
    /// Never pruned, never regularized toward zero.
    Excluded,
    /// Pruning stopped; the accumulated zero mask stays frozen.
    Frozen,
    /// Dense weights restored; trains dense from here on.
    Restored,
}

#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub name: String,
    pub spec: LayerSpec,
    pub weights: Tensor4,
    pub bias: Vec<f32>,
    pub mask: Vec<bool>,
    pub mode: PruneMode,
    snapshot: Option<(Vec<f32>, Vec<f32>)>,
}

#[derive(Debug, Clone)]
pub struct FcLayer {
    pub name: String,
    pub in_features: usize,
    pub out_features: usize,
    /// Row-major `out_features x in_features`.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
    pub mask: Vec<bool>,
    pub mode: PruneMode,
    snapshot: Option<(Vec<f32>, Vec<f32>)>,
}

#[derive(Debug, Clone)]
pub struct ToyNet {
    pub convs: Vec<ConvLayer>,
    pub fc: FcLayer,
    pub input_shape: (usize, usize, usize),
    pub classes: usize,
}

fn xavier(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, len: usize) -> Vec<f32> {
    let limit = (6.0 / (fan_in + fan_out) as f32).sqrt();
    (0..len).map(|_| rng.random_range(-limit..limit)).collect()
}

impl ConvLayer {
    fn new(name: &str, spec: LayerSpec, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = spec.in_channels * spec.kernel_h * spec.kernel_w;
        let fan_out = spec.out_channels * spec.kernel_h * spec.kernel_w;
        let data = xavier(rng, fan_in, fan_out, spec.weight_len());
        ConvLayer {
            name: name.to_string(),
            spec,
            weights: Tensor4::new(
                spec.out_channels,
                spec.in_channels,
                spec.kernel_h,
                spec.kernel_w,
                data,
            )
            .expect("init weights"),
            bias: vec![0.0; spec.out_channels],
            mask: vec![false; spec.weight_len()],
            mode: PruneMode::Active,
            snapshot: None,
        }
    }

    pub fn density(&self) -> f64 {
        let nz = self.weights.data().iter().filter(|w| **w != 0.0).count();
        nz as f64 / self.weights.len() as f64
    }
}

impl FcLayer {
    fn new(name: &str, in_features: usize, out_features: usize, scale: f32, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (in_features + out_features) as f32).sqrt() * scale;
        let weights =
            (0..in_features * out_features).map(|_| rng.random_range(-limit..limit)).collect();
        FcLayer {
            name: name.to_string(),
            in_features,
            out_features,
            weights,
            bias: vec![0.0; out_features],
            mask: vec![false; in_features * out_features],
            mode: PruneMode::Active,
            snapshot: None,
        }
    }

    pub fn density(&self) -> f64 {
        let nz = self.weights.iter().filter(|w| **w != 0.0).count();
        nz as f64 / self.weights.len() as f64
    }
}

impl ToyNet {
    /// The standard desk-scale net for 1x12x12 inputs:
    /// conv 3x3 (8 ch, pad 1) -> relu -> conv 3x3 stride 3 (16 ch) -> relu -> fc.
    pub fn toy(seed: u64, classes: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let side = SAMPLE_SIDE;
        let conv1_spec = LayerSpec::new(8, 1, 3, 3, side, side, 1, 1).expect("conv1");
        let conv2_spec = LayerSpec::new(16, 8, 3, 3, side, side, 3, 0).expect("conv2");
        let flat = conv2_spec.output_len();
        let convs = vec![
            ConvLayer::new("conv1", conv1_spec, &mut rng),
            ConvLayer::new("conv2", conv2_spec, &mut rng),
        ];
        // small head init keeps the initial logits near zero
        let fc = FcLayer::new("fc", flat, classes, 0.1, &mut rng);
        ToyNet { convs, fc, input_shape: (1, side, side), classes }
    }

    /// One-conv micro net on a 5x5 input, used for gradient checking.
    pub fn micro(seed: u64, classes: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = LayerSpec::new(2, 1, 3, 3, 5, 5, 1, 0).expect("micro conv");
        let flat = spec.output_len();
        let convs = vec![ConvLayer::new("conv1", spec, &mut rng)];
        let fc = FcLayer::new("fc", flat, classes, 1.0, &mut rng);
        ToyNet { convs, fc, input_shape: (1, 5, 5), classes }
    }

    pub fn param_count(&self) -> usize {
        self.convs.iter().map(|c| c.weights.len() + c.bias.len()).sum::<usize>()
            + self.fc.weights.len()
            + self.fc.bias.len()
    }

    pub fn layer_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.convs.iter().map(|c| c.name.clone()).collect();
        names.push(self.fc.name.clone());
        names
    }

    /// Layer list in controller form; the FC head is a 1x1 unit-spatial layer.
    pub fn gsl_layers(&self) -> Vec<(String, LayerSpec)> {
        let mut layers: Vec<(String, LayerSpec)> =
            self.convs.iter().map(|c| (c.name.clone(), c.spec)).collect();
        let fc_spec = LayerSpec::new(self.fc.out_features, self.fc.in_features, 1, 1, 1, 1, 1, 0)
            .expect("fc spec");
        layers.push((self.fc.name.clone(), fc_spec));
        layers
    }

    pub fn densities(&self) -> Vec<(String, f64)> {
        let mut d: Vec<(String, f64)> =
            self.convs.iter().map(|c| (c.name.clone(), c.density())).collect();
        d.push((self.fc.name.clone(), self.fc.density()));
        d
    }

    fn forward_trace(&self, input: &Tensor3) -> Result<ForwardTrace> {
        let mut pre = Vec::with_capacity(self.convs.len());
        let mut post = Vec::with_capacity(self.convs.len());
        let mut act = input.clone();
        for conv in &self.convs {
            let z = conv_dense_direct(&act, &conv.weights, &conv.spec, Some(&conv.bias))?;
            let mut a = z.clone();
            for v in a.data_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            pre.push(z);
            act = a.clone();
            post.push(a);
        }
        let flat = act.data();
        let mut logits = self.fc.bias.clone();
        for (m, logit) in logits.iter_mut().enumerate() {
            let row = &self.fc.weights[m * self.fc.in_features..(m + 1) * self.fc.in_features];
            *logit += row.iter().zip(flat).map(|(w, a)| w * a).sum::<f32>();
        }
        Ok(ForwardTrace { pre, post, logits })
    }

    pub fn logits(&self, input: &Tensor3) -> Result<Vec<f32>> {
        Ok(self.forward_trace(input)?.logits)
    }

    pub fn predict(&self, input: &Tensor3) -> Result<usize> {
        let logits = self.logits(input)?;
        Ok(logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0))
    }

    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for conv in &self.convs {
            io::save_tensor4(&dir.join(format!("{}.weights.sckt", conv.name)), &conv.weights)?;
            let bias = Tensor3::new(conv.bias.len(), 1, 1, conv.bias.clone())?;
            io::save_tensor3(&dir.join(format!("{}.bias.sckt", conv.name)), &bias)?;
        }
        let fc_w = Tensor4::new(self.fc.out_features, self.fc.in_features, 1, 1, self.fc.weights.clone())?;
        io::save_tensor4(&dir.join(format!("{}.weights.sckt", self.fc.name)), &fc_w)?;
        let fc_b = Tensor3::new(self.fc.out_features, 1, 1, self.fc.bias.clone())?;
        io::save_tensor3(&dir.join(format!("{}.bias.sckt", self.fc.name)), &fc_b)?;
        Ok(())
    }
}

struct ForwardTrace {
    /// Pre-activation conv outputs.
    pre: Vec<Tensor3>,
    /// Post-ReLU activations.
    post: Vec<Tensor3>,
    logits: Vec<f32>,
}

fn softmax(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().fold(f32::NEG_INFINITY, |m, v| m.max(*v));
    let exps: Vec<f32> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f32 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

// ---------------------------------------------------------------------------
// gradients

/// Per-layer gradient buffers, same layout as the weights.
pub struct Gradients {
    pub conv_weights: Vec<Vec<f32>>,
    pub conv_bias: Vec<Vec<f32>>,
    pub fc_weights: Vec<f32>,
    pub fc_bias: Vec<f32>,
}

impl Gradients {
    fn zeros(net: &ToyNet) -> Self {
        Gradients {
            conv_weights: net.convs.iter().map(|c| vec![0.0; c.weights.len()]).collect(),
            conv_bias: net.convs.iter().map(|c| vec![0.0; c.bias.len()]).collect(),
            fc_weights: vec![0.0; net.fc.weights.len()],
            fc_bias: vec![0.0; net.fc.bias.len()],
        }
    }

    fn scale(&mut self, s: f32) {
        for g in self.conv_weights.iter_mut().flatten() {
            *g *= s;
        }
        for g in self.conv_bias.iter_mut().flatten() {
            *g *= s;
        }
        for g in self.fc_weights.iter_mut().chain(self.fc_bias.iter_mut()) {
            *g *= s;
        }
    }
}

/// dW and dInput of one conv layer given the upstream gradient dz.
fn conv_backward(
    spec: &LayerSpec,
    input: &Tensor3,
    weights: &Tensor4,
    dz: &Tensor3,
    dw: &mut [f32],
    need_dinput: bool,
) -> Result<Option<Tensor3>> {
    let padded = pad_input(input, spec)?;
    let pin = padded.data();
    let (h_out, w_out) = (spec.out_h(), spec.out_w());
    let (ph, pw) = (spec.padded_h(), spec.padded_w());
    let mut dpin = vec![0.0f32; pin.len()];
    for n in 0..spec.out_channels {
        for c in 0..spec.in_channels {
            for r in 0..spec.kernel_h {
                for s in 0..spec.kernel_w {
                    let widx = ((n * spec.in_channels + c) * spec.kernel_h + r) * spec.kernel_w + s;
                    let w = weights.data()[widx];
                    let mut acc = 0.0f32;
                    for y in 0..h_out {
                        let in_row = (c * ph + y * spec.stride + r) * pw + s;
                        for x in 0..w_out {
                            let g = dz.at(n, y, x);
                            let pidx = in_row + x * spec.stride;
                            acc += g * pin[pidx];
                            if need_dinput {
                                dpin[pidx] += w * g;
                            }
                        }
                    }
                    dw[widx] += acc;
                }
            }
        }
    }
    if !need_dinput {
        return Ok(None);
    }
    // crop padding back off
    let mut dinput = Tensor3::zeros(spec.in_channels, spec.in_h, spec.in_w);
    let dd = dinput.data_mut();
    for c in 0..spec.in_channels {
        for y in 0..spec.in_h {
            for x in 0..spec.in_w {
                dd[(c * spec.in_h + y) * spec.in_w + x] =
                    dpin[(c * ph + y + spec.pad) * pw + x + spec.pad];
            }
        }
    }
    Ok(Some(dinput))
}

/// Smallest |pre-activation| across all ReLU sites for a batch. Finite
/// differencing is only trustworthy when perturbations cannot cross a kink.
pub fn min_abs_preactivation(net: &ToyNet, inputs: &[&Tensor3]) -> Result<f32> {
    let mut min = f32::INFINITY;
    for input in inputs {
        let trace = net.forward_trace(input)?;
        for z in trace.pre.iter().flat_map(|t| t.data()) {
            min = min.min(z.abs());
        }
    }
    Ok(min)
}

/// Mean softmax cross-entropy over a batch, forward only. Accumulated in f64.
pub fn loss_on_batch(net: &ToyNet, inputs: &[&Tensor3], labels: &[usize]) -> Result<f64> {
    let mut total = 0.0f64;
    for (input, &label) in inputs.iter().zip(labels) {
        let trace = net.forward_trace(input)?;
        let p = softmax(&trace.logits);
        total += -(p[label].max(1e-30).ln() as f64);
    }
    Ok(total / inputs.len() as f64)
}

/// Mean loss and analytic gradients over a batch.
pub fn gradients_on_batch(
    net: &ToyNet,
    inputs: &[&Tensor3],
    labels: &[usize],
) -> Result<(f64, Gradients)> {
    let mut grads = Gradients::zeros(net);
    let mut total = 0.0f64;
    for (input, &label) in inputs.iter().zip(labels) {
        let trace = net.forward_trace(input)?;
        let p = softmax(&trace.logits);
        total += -(p[label].max(1e-30).ln() as f64);

        let mut dlogits = p;
        dlogits[label] -= 1.0;

        let flat = trace.post.last().map_or(input.data(), |a| a.data());
        for m in 0..net.fc.out_features {
            grads.fc_bias[m] += dlogits[m];
            let row = &mut grads.fc_weights[m * net.fc.in_features..(m + 1) * net.fc.in_features];
            for (g, a) in row.iter_mut().zip(flat) {
                *g += dlogits[m] * a;
            }
        }
        let mut dflat = vec![0.0f32; net.fc.in_features];
        for m in 0..net.fc.out_features {
            let row = &net.fc.weights[m * net.fc.in_features..(m + 1) * net.fc.in_features];
            for (d, w) in dflat.iter_mut().zip(row) {
                *d += dlogits[m] * w;
            }
        }

        let last = net.convs.len() - 1;
        let mut dact = Tensor3::new(
            trace.post[last].channels,
            trace.post[last].height,
            trace.post[last].width,
            dflat,
        )?;
        for i in (0..net.convs.len()).rev() {
            // relu mask from the pre-activation
            let mut dz = dact.clone();
            for (g, z) in dz.data_mut().iter_mut().zip(trace.pre[i].data()) {
                if *z <= 0.0 {
                    *g = 0.0;
                }
            }
            for n in 0..net.convs[i].spec.out_channels {
                let ch = &dz.data()[n * dz.height * dz.width..(n + 1) * dz.height * dz.width];
                grads.conv_bias[i][n] += ch.iter().sum::<f32>();
            }
            let layer_input: &Tensor3 = if i == 0 { input } else { &trace.post[i - 1] };
            let dinput = conv_backward(
                &net.convs[i].spec,
                layer_input,
                &net.convs[i].weights,
                &dz,
                &mut grads.conv_weights[i],
                i > 0,
            )?;
            if let Some(d) = dinput {
                dact = d;
            }
        }
    }
    grads.scale(1.0 / inputs.len() as f32);
    Ok((total / inputs.len() as f64, grads))
}

// ---------------------------------------------------------------------------
// training

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f32,
    /// L1 shrinkage strength, applied as a proximal soft-threshold step after
    /// each SGD update, to actively pruned layers only.
    pub l1_strength: f32,
    pub batch_size: usize,
    pub max_iterations: u64,
    pub seed: u64,
    /// Optional second phase: at the switch iteration the learning rate drops
    /// by the divisor and pruning thresholds freeze (masks stay applied).
    pub two_phase: Option<TwoPhase>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TwoPhase {
    pub switch_iteration: u64,
    pub lr_divisor: f32,
}

impl TrainConfig {
    pub fn new(seed: u64) -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            l1_strength: 5e-5,
            batch_size: 32,
            max_iterations: 5000,
            seed,
            two_phase: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !(self.l1_strength >= 0.0) {
            return Err(Error::InvalidArgument("rates must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        Ok(())
    }

    pub fn effective_lr(&self, iteration: u64) -> f32 {
        match self.two_phase {
            Some(tp) if iteration >= tp.switch_iteration => self.learning_rate / tp.lr_divisor,
            _ => self.learning_rate,
        }
    }
}

fn soft_threshold(w: f32, t: f32) -> f32 {
    if w > t {
        w - t
    } else if w < -t {
        w + t
    } else {
        0.0
    }
}

/// One SGD step with L1 proximal shrinkage. Returns the batch loss.
pub fn train_step(
    net: &mut ToyNet,
    inputs: &[&Tensor3],
    labels: &[usize],
    config: &TrainConfig,
    iteration: u64,
) -> Result<f32> {
    let (loss, grads) = gradients_on_batch(net, inputs, labels)?;
    if !loss.is_finite() {
        return Err(Error::TrainingDiverged(format!(
            "non-finite loss at iteration {iteration}"
        )));
    }
    let lr = config.effective_lr(iteration);
    let shrink = lr * config.l1_strength;
    for (i, conv) in net.convs.iter_mut().enumerate() {
        let active = conv.mode == PruneMode::Active;
        for ((w, g), m) in conv
            .weights
            .data_mut()
            .iter_mut()
            .zip(&grads.conv_weights[i])
            .zip(&conv.mask)
        {
            if *m {
                *w = 0.0;
                continue;
            }
            *w -= lr * g;
            if active && shrink > 0.0 {
                *w = soft_threshold(*w, shrink);
            }
        }
        for (b, g) in conv.bias.iter_mut().zip(&grads.conv_bias[i]) {
            *b -= lr * g;
        }
    }
    let active = net.fc.mode == PruneMode::Active;
    for ((w, g), m) in net.fc.weights.iter_mut().zip(&grads.fc_weights).zip(&net.fc.mask) {
        if *m {
            *w = 0.0;
            continue;
        }
        *w -= lr * g;
        if active && shrink > 0.0 {
            *w = soft_threshold(*w, shrink);
        }
    }
    for (b, g) in net.fc.bias.iter_mut().zip(&grads.fc_bias) {
        *b -= lr * g;
    }
    Ok(loss as f32)
}

pub fn accuracy(net: &ToyNet, data: &Dataset) -> Result<f64> {
    let mut hits = 0usize;
    for (input, &label) in data.inputs.iter().zip(&data.labels) {
        if net.predict(input)? == label {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.inputs.len() as f64)
}

fn prune_slice(weights: &mut [f32], mask: &mut [bool], threshold: f32) {
    for (w, m) in weights.iter_mut().zip(mask.iter_mut()) {
        if *m {
            *w = 0.0;
        } else if w.abs() < threshold {
            *w = 0.0;
            *m = true;
        }
    }
}

fn apply_mask(weights: &mut [f32], mask: &[bool]) {
    for (w, m) in weights.iter_mut().zip(mask) {
        if *m {
            *w = 0.0;
        }
    }
}

/// Capture dense weights so a later restore directive can reproduce them.
pub fn snapshot_dense(net: &mut ToyNet) {
    for conv in &mut net.convs {
        conv.snapshot = Some((conv.weights.data().to_vec(), conv.bias.clone()));
    }
    net.fc.snapshot = Some((net.fc.weights.clone(), net.fc.bias.clone()));
}

/// Apply controller directives, then threshold-prune the still-active layers.
/// Returns the density of every layer after the pass.
pub fn prune_pass(
    net: &mut ToyNet,
    threshold_per_layer: &[(String, f32)],
    directives: &[PruneDirective],
) -> Result<Vec<(String, f64)>> {
    for d in directives {
        let apply = |mode: &mut PruneMode,
                     mask: &mut Vec<bool>,
                     weights: &mut [f32],
                     bias: &mut [f32],
                     snapshot: &Option<(Vec<f32>, Vec<f32>)>| {
            match d.directive {
                Directive::Continue => {}
                Directive::StopPruning => *mode = PruneMode::Frozen,
                Directive::RestoreDense => {
                    if let Some((w, b)) = snapshot {
                        weights.copy_from_slice(w);
                        bias.copy_from_slice(b);
                    }
                    mask.iter_mut().for_each(|m| *m = false);
                    *mode = PruneMode::Restored;
                }
            }
        };
        if let Some(conv) = net.convs.iter_mut().find(|c| c.name == d.layer) {
            let snapshot = conv.snapshot.clone();
            apply(&mut conv.mode, &mut conv.mask, conv.weights.data_mut(), &mut conv.bias, &snapshot);
        } else if net.fc.name == d.layer {
            let snapshot = net.fc.snapshot.clone();
            let FcLayer { mode, mask, weights, bias, .. } = &mut net.fc;
            apply(mode, mask, weights, bias, &snapshot);
        } else {
            return Err(Error::UnknownLayer(d.layer.clone()));
        }
    }

    let threshold_for = |name: &str| {
        threshold_per_layer
            .iter()
            .find(|(id, _)| id == name)
            .map(|(_, t)| *t)
            .unwrap_or(0.0)
    };
    for conv in &mut net.convs {
        match conv.mode {
            PruneMode::Active => {
                let t = threshold_for(&conv.name);
                let ConvLayer { weights, mask, .. } = conv;
                prune_slice(weights.data_mut(), mask, t);
            }
            PruneMode::Frozen => {
                let ConvLayer { weights, mask, .. } = conv;
                apply_mask(weights.data_mut(), mask);
            }
            PruneMode::Excluded | PruneMode::Restored => {}
        }
    }
    match net.fc.mode {
        PruneMode::Active => {
            let t = threshold_for(&net.fc.name.clone());
            let FcLayer { weights, mask, .. } = &mut net.fc;
            prune_slice(weights, mask, t);
        }
        PruneMode::Frozen => {
            let FcLayer { weights, mask, .. } = &mut net.fc;
            apply_mask(weights, mask);
        }
        PruneMode::Excluded | PruneMode::Restored => {}
    }
    Ok(net.densities())
}

// ---------------------------------------------------------------------------
// guided-pruning demo driver

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemoConfig {
    pub seed: u64,
    pub classes: usize,
    pub samples: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub l1_strength: f32,
    /// Dense warm-up phase: stops early once `accuracy_target` is reached.
    pub dense_iterations: u64,
    pub accuracy_target: f64,
    /// Guided-pruning phase length.
    pub prune_iterations: u64,
    pub check_period: u64,
    pub stabilization_window: usize,
    pub stabilization_epsilon: f64,
    /// Scheduled final density for actively pruned layers. Each periodic
    /// check derives per-layer magnitude thresholds from the current
    /// |weight| quantile that lands on the scheduled density, so density
    /// decreases by a roughly constant step per check along the ramp.
    pub target_density: f64,
    /// Overrides the density schedule with one absolute threshold ramped
    /// from 0 to this value for every layer.
    #[serde(default)]
    pub threshold_max: Option<f32>,
    /// The schedule reaches its target over this many iterations of the
    /// pruning phase.
    pub threshold_ramp: u64,
    pub profile: PlatformProfile,
    #[serde(default)]
    pub exclude_layers: Vec<String>,
    #[serde(default)]
    pub report_out: Option<PathBuf>,
    #[serde(default)]
    pub trajectory_out: Option<PathBuf>,
    #[serde(default)]
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            seed: 42,
            classes: 4,
            samples: 512,
            batch_size: 32,
            learning_rate: 0.02,
            l1_strength: 2e-4,
            dense_iterations: 4000,
            accuracy_target: 0.9,
            prune_iterations: 1500,
            check_period: 50,
            stabilization_window: 3,
            stabilization_epsilon: 0.01,
            target_density: 0.25,
            threshold_max: None,
            threshold_ramp: 1000,
            profile: PlatformProfile::new("desk", 5e10, 1e13, 2.0, 2.0).expect("profile"),
            exclude_layers: vec!["conv1".into()],
            report_out: None,
            trajectory_out: None,
            checkpoint_dir: None,
        }
    }
}

impl DemoConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Debug)]
pub struct DemoOutcome {
    pub dense_accuracy: f64,
    pub dense_iterations_used: u64,
    pub final_accuracy: f64,
    pub report: GslReport,
    pub trajectory: Vec<TrajectoryCheck>,
    pub final_densities: Vec<(String, f64)>,
}

fn sample_batch<'d>(
    rng: &mut ChaCha8Rng,
    data: &'d Dataset,
    size: usize,
) -> (Vec<&'d Tensor3>, Vec<usize>) {
    let mut inputs = Vec::with_capacity(size);
    let mut labels = Vec::with_capacity(size);
    for _ in 0..size {
        let i = rng.random_range(0..data.inputs.len());
        inputs.push(&data.inputs[i]);
        labels.push(data.labels[i]);
    }
    (inputs, labels)
}

/// Train the toy net dense, then run guided pruning against the performance
/// model, emitting the trajectory and final report.
pub fn run_gsl_demo(cfg: &DemoConfig) -> Result<DemoOutcome> {
    let data = synth_dataset(cfg.seed, cfg.samples, cfg.classes)?;
    let mut net = ToyNet::toy(cfg.seed ^ 0x5eed, cfg.classes);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xba7c4);
    let train_cfg = TrainConfig {
        learning_rate: cfg.learning_rate,
        l1_strength: 0.0, // dense phase: no shrinkage
        batch_size: cfg.batch_size,
        max_iterations: cfg.dense_iterations,
        seed: cfg.seed,
        two_phase: None,
    };
    train_cfg.validate()?;

    // dense warm-up until the accuracy bar is met
    let mut dense_accuracy = 0.0;
    let mut dense_iterations_used = 0;
    for it in 1..=cfg.dense_iterations {
        let (inputs, labels) = sample_batch(&mut rng, &data, cfg.batch_size);
        train_step(&mut net, &inputs, &labels, &train_cfg, it)?;
        dense_iterations_used = it;
        if it % 50 == 0 || it == cfg.dense_iterations {
            dense_accuracy = accuracy(&net, &data)?;
            if dense_accuracy >= cfg.accuracy_target {
                break;
            }
        }
    }

    // guided pruning phase
    let gsl_cfg = GslConfig {
        check_period: cfg.check_period,
        stabilization_window: cfg.stabilization_window,
        stabilization_epsilon: cfg.stabilization_epsilon,
        manual_exclude: cfg.exclude_layers.clone(),
    };
    let mut controller =
        GslController::init(&net.gsl_layers(), cfg.batch_size, &cfg.profile, gsl_cfg)?;
    snapshot_dense(&mut net);
    let statuses: Vec<(String, bool)> = controller
        .states()
        .iter()
        .map(|s| (s.id.clone(), s.status == crate::gsl::PruneStatus::Excluded))
        .collect();
    for (id, excluded) in statuses {
        if let Some(conv) = net.convs.iter_mut().find(|c| c.name == id) {
            conv.mode = if excluded { PruneMode::Excluded } else { PruneMode::Active };
            controller.set_dense_snapshot(&id, conv.weights.data().to_vec())?;
        } else if net.fc.name == id {
            net.fc.mode = if excluded { PruneMode::Excluded } else { PruneMode::Active };
            controller.set_dense_snapshot(&id, net.fc.weights.clone())?;
        }
    }

    // threshold for the |weight| quantile that lands on the scheduled
    // density: the magnitude of the first survivor, since pruning drops
    // strictly smaller entries. Existing zeros sort first, so accumulated
    // masks are counted toward the cut.
    let quantile_threshold = |mags: &mut Vec<f32>, density: f64| -> f32 {
        mags.sort_by(f32::total_cmp);
        let cut = ((1.0 - density) * mags.len() as f64).floor() as usize;
        mags[cut.min(mags.len() - 1)]
    };

    let prune_cfg = TrainConfig { l1_strength: cfg.l1_strength, ..train_cfg.clone() };
    let mut trajectory = Vec::new();
    let mut pending: Vec<PruneDirective> = Vec::new();
    for it in 1..=cfg.prune_iterations {
        let (inputs, labels) = sample_batch(&mut rng, &data, cfg.batch_size);
        train_step(&mut net, &inputs, &labels, &prune_cfg, it)?;
        if it % cfg.check_period == 0 {
            let ramp = (it as f64 / cfg.threshold_ramp.max(1) as f64).min(1.0);
            let thresholds: Vec<(String, f32)> = match cfg.threshold_max {
                Some(t) => {
                    net.layer_names().into_iter().map(|n| (n, t * ramp as f32)).collect()
                }
                None => {
                    let scheduled = 1.0 - (1.0 - cfg.target_density) * ramp;
                    let mut ts: Vec<(String, f32)> = net
                        .convs
                        .iter()
                        .map(|c| {
                            let mut mags: Vec<f32> =
                                c.weights.data().iter().map(|w| w.abs()).collect();
                            (c.name.clone(), quantile_threshold(&mut mags, scheduled))
                        })
                        .collect();
                    let mut mags: Vec<f32> = net.fc.weights.iter().map(|w| w.abs()).collect();
                    ts.push((net.fc.name.clone(), quantile_threshold(&mut mags, scheduled)));
                    ts
                }
            };
            let densities = prune_pass(&mut net, &thresholds, &pending)?;
            trajectory.push(TrajectoryCheck { iteration: it, densities: densities.clone() });
            pending = controller.step(it, &densities)?;
        }
    }
    // apply any directives from the final check
    if !pending.is_empty() {
        prune_pass(&mut net, &[], &pending)?;
    }

    let report = controller.report();
    let final_accuracy = accuracy(&net, &data)?;
    if let Some(path) = &cfg.trajectory_out {
        let mut buf = Vec::new();
        crate::gsl::write_trajectory(&mut buf, &trajectory)?;
        std::fs::write(path, buf)?;
    }
    if let Some(path) = &cfg.report_out {
        report.save(path)?;
    }
    if let Some(dir) = &cfg.checkpoint_dir {
        net.save_checkpoint(dir)?;
    }
    Ok(DemoOutcome {
        dense_accuracy,
        dense_iterations_used,
        final_accuracy,
        report,
        trajectory,
        final_densities: net.densities(),
    })
}

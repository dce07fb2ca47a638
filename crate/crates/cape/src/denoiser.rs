//! The learnable noise predictor: a time-conditioned residual network with
//! explicit parameter gradients, its training loop on clean demonstration
//! trajectories, and checkpoint persistence.
//!
//! Trajectory coordinates are normalized to `[-1, 1]` per workspace bounds
//! before entering the network; the diffusion chain and all noise targets
//! live in that normalized space. The normalizer travels with the weights
//! so checkpoints are self-contained.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::datagen::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::rng::{self, rng_from_seed, standard_normal_matrix, streams};
use crate::schedule::{forward_noise_raw, DiffusionSchedule};
use crate::trajectory::{Normalizer, Trajectory};

/// Start/goal pair (world coordinates) plus an optional window of recent
/// executed states. The history is carried for completeness but not fed to
/// the default network; endpoint clamping already pins the executed state.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskContext {
    pub start: Array1<f64>,
    pub goal: Array1<f64>,
    pub history: Option<Array2<f64>>,
}

impl TaskContext {
    pub fn new(start: Array1<f64>, goal: Array1<f64>) -> Result<Self> {
        if start.len() != goal.len() {
            return Err(Error::Shape("context start/goal dimension mismatch".into()));
        }
        if !start.iter().chain(goal.iter()).all(|v| v.is_finite()) {
            return Err(Error::Shape("context contains non-finite entries".into()));
        }
        if start == goal {
            return Err(Error::Usage("task context requires start != goal".into()));
        }
        Ok(Self { start, goal, history: None })
    }
}

/// Network architecture. Defaults: hidden width 256, depth 4 residual
/// blocks, 32-dimensional sinusoidal time embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserConfig {
    pub hidden_width: usize,
    pub depth: usize,
    pub time_embed_dim: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self { hidden_width: 256, depth: 4, time_embed_dim: 32 }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_width == 0 || self.time_embed_dim == 0 {
            return Err(Error::Config("network dimensions must be positive".into()));
        }
        if self.time_embed_dim % 2 != 0 {
            return Err(Error::Config("time embedding dimension must be even".into()));
        }
        Ok(())
    }
}

/// Optimization hyperparameters. Defaults: learning rate 1e-4, 80 epochs,
/// batch size 256.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-4, epochs: 80, batch_size: 256, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Linear {
    w: Array2<f64>,
    b: Array1<f64>,
}

impl Linear {
    fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self { w: Array2::zeros((out_dim, in_dim)), b: Array1::zeros(out_dim) }
    }

    fn xavier<R: Rng>(out_dim: usize, in_dim: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let w = Array2::from_shape_fn((out_dim, in_dim), |_| rng.gen_range(-limit..limit));
        Self { w, b: Array1::zeros(out_dim) }
    }
}

/// Noise predictor with explicit parameters. Immutable after training and
/// safe to share across concurrent planners.
#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    n: usize,
    d: usize,
    diffusion_steps: usize,
    arch: DenoiserConfig,
    normalizer: Normalizer,
    input: Linear,
    blocks: Vec<Linear>,
    output: Linear,
}

/// Gradients (or any parameter-shaped accumulator) matching a `Denoiser`.
#[derive(Debug, Clone)]
pub struct DenoiserGrads {
    input: Linear,
    blocks: Vec<Linear>,
    output: Linear,
}

/// One training draw: a noise level and the injected normalized-space noise.
#[derive(Debug, Clone)]
pub struct NoiseDraw {
    pub t: usize,
    pub eps: Array2<f64>,
}

impl Denoiser {
    pub fn new(
        n: usize,
        d: usize,
        diffusion_steps: usize,
        arch: DenoiserConfig,
        normalizer: Normalizer,
        seed: u64,
    ) -> Result<Self> {
        arch.validate()?;
        if n < 2 || d == 0 || diffusion_steps < 2 {
            return Err(Error::Config("denoiser needs n >= 2, d >= 1, steps >= 2".into()));
        }
        if normalizer.dim() != d {
            return Err(Error::Shape("normalizer dimension does not match d".into()));
        }
        let in_dim = n * d + arch.time_embed_dim + 2 * d;
        let out_dim = n * d;
        let w = arch.hidden_width;
        let mut rng = rng_from_seed(seed);
        let input = Linear::xavier(w, in_dim, &mut rng);
        let blocks = (0..arch.depth).map(|_| Linear::xavier(w, w, &mut rng)).collect();
        // Zero-initialized head: the untrained net predicts zero noise.
        let output = Linear::zeros(out_dim, w);
        Ok(Self { n, d, diffusion_steps, arch, normalizer, input, blocks, output })
    }

    /// All-zero parameters; useful for structural tests.
    pub fn zeros(
        n: usize,
        d: usize,
        diffusion_steps: usize,
        arch: DenoiserConfig,
        normalizer: Normalizer,
    ) -> Result<Self> {
        let mut model = Self::new(n, d, diffusion_steps, arch, normalizer, 0)?;
        let zero = model.grads_zeros();
        model.input = zero.input;
        model.blocks = zero.blocks;
        model.output = zero.output;
        Ok(model)
    }

    pub fn trajectory_len(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn diffusion_steps(&self) -> usize {
        self.diffusion_steps
    }

    pub fn arch(&self) -> &DenoiserConfig {
        &self.arch
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    fn in_dim(&self) -> usize {
        self.n * self.d + self.arch.time_embed_dim + 2 * self.d
    }

    fn out_dim(&self) -> usize {
        self.n * self.d
    }

    fn time_embedding(&self, t: usize) -> Array1<f64> {
        let dim = self.arch.time_embed_dim;
        let half = dim / 2;
        let mut emb = Array1::zeros(dim);
        for i in 0..half {
            let freq = 10_000f64.powf(-(i as f64) / half as f64);
            emb[2 * i] = (t as f64 * freq).sin();
            emb[2 * i + 1] = (t as f64 * freq).cos();
        }
        emb
    }

    /// Input features for one sample: flattened normalized waypoints, the
    /// sinusoidal embedding of `t`, and the normalized (start, goal) pair.
    fn features(&self, waypoints_norm: &Array2<f64>, t: usize, ctx: &TaskContext) -> Array1<f64> {
        let mut feat = Array1::zeros(self.in_dim());
        let nd = self.n * self.d;
        for (i, v) in waypoints_norm.iter().enumerate() {
            feat[i] = *v;
        }
        let emb = self.time_embedding(t);
        for (i, v) in emb.iter().enumerate() {
            feat[nd + i] = *v;
        }
        let s = self.normalizer.point_to_normalized(ctx.start.view());
        let g = self.normalizer.point_to_normalized(ctx.goal.view());
        for (i, v) in s.iter().enumerate() {
            feat[nd + self.arch.time_embed_dim + i] = *v;
        }
        for (i, v) in g.iter().enumerate() {
            feat[nd + self.arch.time_embed_dim + self.d + i] = *v;
        }
        feat
    }

    fn forward_batch(&self, x0: &Array2<f64>) -> ForwardCache {
        let a1 = x0.dot(&self.input.w.t()) + &self.input.b;
        let h1 = a1.mapv(f64::tanh);
        let mut hs = vec![h1];
        let mut pre = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let h_prev = hs.last().unwrap();
            let a = h_prev.dot(&block.w.t()) + &block.b;
            let h = h_prev + &a.mapv(f64::tanh);
            pre.push(a);
            hs.push(h);
        }
        let out = hs.last().unwrap().dot(&self.output.w.t()) + &self.output.b;
        ForwardCache { a1, hs, pre, out }
    }

    /// Deterministic forward pass. `waypoints_norm` is in normalized
    /// diffusion coordinates; the context is in world coordinates.
    pub fn predict_noise_waypoints(
        &self,
        waypoints_norm: &Array2<f64>,
        t: usize,
        ctx: &TaskContext,
    ) -> Result<Array2<f64>> {
        if t < 1 || t > self.diffusion_steps {
            return Err(Error::Range(format!(
                "noise level {t} outside 1..={}",
                self.diffusion_steps
            )));
        }
        if waypoints_norm.dim() != (self.n, self.d) {
            return Err(Error::Shape(format!(
                "trajectory shape {:?} does not match model ({}, {})",
                waypoints_norm.dim(),
                self.n,
                self.d
            )));
        }
        if ctx.start.len() != self.d {
            return Err(Error::Shape("context dimension does not match model".into()));
        }
        let feat = self.features(waypoints_norm, t, ctx);
        let x0 = feat.insert_axis(Axis(0));
        let cache = self.forward_batch(&x0);
        let flat = cache.out.index_axis(Axis(0), 0).to_owned();
        Ok(flat.into_shape_with_order((self.n, self.d)).expect("output reshapes to n x d"))
    }

    /// Forward pass on a level-tagged trajectory; the tag must equal `t`.
    pub fn predict_noise(&self, traj: &Trajectory, t: usize, ctx: &TaskContext) -> Result<Array2<f64>> {
        if traj.noise_level != t {
            return Err(Error::Usage(format!(
                "trajectory tagged at level {} but predict_noise called with t = {t}",
                traj.noise_level
            )));
        }
        self.predict_noise_waypoints(&traj.waypoints, t, ctx)
    }

    pub fn grads_zeros(&self) -> DenoiserGrads {
        DenoiserGrads {
            input: Linear::zeros(self.arch.hidden_width, self.in_dim()),
            blocks: (0..self.arch.depth)
                .map(|_| Linear::zeros(self.arch.hidden_width, self.arch.hidden_width))
                .collect(),
            output: Linear::zeros(self.out_dim(), self.arch.hidden_width),
        }
    }

    /// Draw per-item noise levels and injected noise for a batch. Each item
    /// gets an independent `(t, eps)` pair derived from `seed`, so the same
    /// seed reproduces the same draws.
    pub fn sample_draws(&self, count: usize, sched: &DiffusionSchedule, seed: u64) -> Vec<NoiseDraw> {
        let mut rng = rng_from_seed(seed);
        (0..count)
            .map(|_| {
                let t = rng.gen_range(1..=sched.steps());
                let eps = standard_normal_matrix(&mut rng, self.n, self.d);
                NoiseDraw { t, eps }
            })
            .collect()
    }

    /// Mean squared denoising loss and its exact parameter gradient for a
    /// batch with explicit `(t, eps)` draws. The draws travel with the
    /// items, so permuting batch and draws together changes neither the
    /// loss nor the gradient.
    pub fn loss_and_gradient_with_draws(
        &self,
        batch: &[(&Trajectory, &TaskContext)],
        draws: &[NoiseDraw],
        sched: &DiffusionSchedule,
    ) -> Result<(f64, DenoiserGrads)> {
        if batch.is_empty() {
            return Err(Error::Usage("training batch must be non-empty".into()));
        }
        if batch.len() != draws.len() {
            return Err(Error::Shape("draw count does not match batch".into()));
        }
        let b = batch.len();
        let mut x0 = Array2::zeros((b, self.in_dim()));
        let mut targets = Array2::zeros((b, self.out_dim()));
        for (j, ((traj, ctx), draw)) in batch.iter().zip(draws.iter()).enumerate() {
            if traj.waypoints.dim() != (self.n, self.d) {
                return Err(Error::Shape(format!(
                    "batch item {j} has shape {:?}, expected ({}, {})",
                    traj.waypoints.dim(),
                    self.n,
                    self.d
                )));
            }
            if traj.noise_level != 0 {
                return Err(Error::Usage("training items must be clean (level 0) trajectories".into()));
            }
            let clean_norm = self.normalizer.to_normalized(&traj.waypoints);
            let noised = forward_noise_raw(&clean_norm, &draw.eps, sched.alpha_bar(draw.t));
            x0.row_mut(j).assign(&self.features(&noised, draw.t, ctx));
            for (k, v) in draw.eps.iter().enumerate() {
                targets[[j, k]] = *v;
            }
        }

        let cache = self.forward_batch(&x0);
        let diff = &cache.out - &targets;
        let scale = 1.0 / (b * self.out_dim()) as f64;
        let loss = diff.iter().map(|v| v * v).sum::<f64>() * scale;

        // Backward pass.
        let g_out = &diff * (2.0 * scale);
        let mut grads = self.grads_zeros();
        let h_last = cache.hs.last().unwrap();
        grads.output.w = g_out.t().dot(h_last);
        grads.output.b = g_out.sum_axis(Axis(0));
        let mut dh = g_out.dot(&self.output.w);
        for (k, block) in self.blocks.iter().enumerate().rev() {
            let tanh_a = cache.pre[k].mapv(f64::tanh);
            let da = &dh * &tanh_a.mapv(|v| 1.0 - v * v);
            grads.blocks[k].w = da.t().dot(&cache.hs[k]);
            grads.blocks[k].b = da.sum_axis(Axis(0));
            dh = &dh + &da.dot(&block.w);
        }
        let tanh_a1 = cache.a1.mapv(f64::tanh);
        let da1 = &dh * &tanh_a1.mapv(|v| 1.0 - v * v);
        grads.input.w = da1.t().dot(&x0);
        grads.input.b = da1.sum_axis(Axis(0));

        Ok((loss, grads))
    }

    /// Spec-shaped entry point: draws `(t, eps)` per item from `seed`, then
    /// delegates to the explicit-draws form.
    pub fn loss_and_gradient(
        &self,
        batch: &[(&Trajectory, &TaskContext)],
        sched: &DiffusionSchedule,
        seed: u64,
    ) -> Result<(f64, DenoiserGrads)> {
        if batch.is_empty() {
            return Err(Error::Usage("training batch must be non-empty".into()));
        }
        let draws = self.sample_draws(batch.len(), sched, seed);
        self.loss_and_gradient_with_draws(batch, &draws, sched)
    }

    // Flat parameter indexing in a fixed order (input W row-major, input b,
    // each block W then b, output W then b). Used by gradient-check oracles
    // and the checkpoint payload.

    pub fn param_count(&self) -> usize {
        let mut count = self.input.w.len() + self.input.b.len();
        for b in &self.blocks {
            count += b.w.len() + b.b.len();
        }
        count + self.output.w.len() + self.output.b.len()
    }

    fn layers(&self) -> Vec<&Linear> {
        let mut layers = vec![&self.input];
        layers.extend(self.blocks.iter());
        layers.push(&self.output);
        layers
    }

    fn layers_mut(&mut self) -> Vec<&mut Linear> {
        let mut layers = vec![&mut self.input];
        layers.extend(self.blocks.iter_mut());
        layers.push(&mut self.output);
        layers
    }

    pub fn get_param(&self, index: usize) -> f64 {
        let mut i = index;
        for layer in self.layers() {
            if i < layer.w.len() {
                return layer.w.as_slice().unwrap()[i];
            }
            i -= layer.w.len();
            if i < layer.b.len() {
                return layer.b[i];
            }
            i -= layer.b.len();
        }
        panic!("parameter index {index} out of range");
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let mut i = index;
        for layer in self.layers_mut() {
            if i < layer.w.len() {
                layer.w.as_slice_mut().unwrap()[i] = value;
                return;
            }
            i -= layer.w.len();
            if i < layer.b.len() {
                layer.b[i] = value;
                return;
            }
            i -= layer.b.len();
        }
        panic!("parameter index {index} out of range");
    }

    fn params_to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in self.layers() {
            out.extend(layer.w.iter());
            out.extend(layer.b.iter());
        }
        out
    }

    fn params_from_vec(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                values.len()
            )));
        }
        let mut it = values.iter();
        for layer in self.layers_mut() {
            for v in layer.w.iter_mut() {
                *v = *it.next().unwrap();
            }
            for v in layer.b.iter_mut() {
                *v = *it.next().unwrap();
            }
        }
        Ok(())
    }
}

impl DenoiserGrads {
    pub fn get(&self, index: usize) -> f64 {
        let mut i = index;
        let mut layers = vec![&self.input];
        layers.extend(self.blocks.iter());
        layers.push(&self.output);
        for layer in layers {
            if i < layer.w.len() {
                return layer.w.as_slice().unwrap()[i];
            }
            i -= layer.w.len();
            if i < layer.b.len() {
                return layer.b[i];
            }
            i -= layer.b.len();
        }
        panic!("gradient index {index} out of range");
    }

    pub fn max_abs(&self) -> f64 {
        let mut layers = vec![&self.input];
        layers.extend(self.blocks.iter());
        layers.push(&self.output);
        layers
            .iter()
            .flat_map(|l| l.w.iter().chain(l.b.iter()))
            .fold(0.0, |acc: f64, v| acc.max(v.abs()))
    }
}

struct ForwardCache {
    a1: Array2<f64>,
    hs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    out: Array2<f64>,
}

/// Per-epoch loss trace from a training run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
}

impl TrainReport {
    pub fn initial_loss(&self) -> f64 {
        *self.epoch_losses.first().unwrap_or(&f64::NAN)
    }

    pub fn final_loss(&self) -> f64 {
        *self.epoch_losses.last().unwrap_or(&f64::NAN)
    }
}

/// Train a denoiser on a demonstration dataset with a momentum-free
/// adaptive optimizer (per-parameter second-moment scaling). The run is
/// bit-reproducible for a fixed seed.
pub fn train(
    dataset: &TrajectoryDataset,
    cfg: &TrainingConfig,
    arch: &DenoiserConfig,
    sched: &DiffusionSchedule,
) -> Result<(Denoiser, TrainReport)> {
    if dataset.trajectories.is_empty() {
        return Err(Error::Usage("training dataset must be non-empty".into()));
    }
    if cfg.epochs == 0 {
        return Err(Error::Usage("training requires at least 1 epoch".into()));
    }
    if cfg.learning_rate <= 0.0 {
        return Err(Error::Config("learning rate must be positive".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let n = dataset.meta.n;
    let d = dataset.meta.d;
    for (i, traj) in dataset.trajectories.iter().enumerate() {
        if traj.waypoints.dim() != (n, d) {
            return Err(Error::Shape(format!(
                "dataset trajectory {i} has shape {:?}, expected ({n}, {d})",
                traj.waypoints.dim()
            )));
        }
    }

    let normalizer = Normalizer::from_bounds(&dataset.meta.bounds);
    let mut model = Denoiser::new(
        n,
        d,
        sched.steps(),
        arch.clone(),
        normalizer,
        rng::derive_seed(cfg.seed, streams::MODEL_INIT, 0),
    )?;

    // Momentum-free adaptive optimizer: per-parameter second-moment
    // scaling with bias correction.
    let rho: f64 = 0.99;
    let eps_stab = 1e-8;
    let mut second_moment = model.grads_zeros();
    let mut step = 0u32;

    let item_count = dataset.trajectories.len();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..item_count).collect();
        let mut shuffle_rng =
            rng_from_seed(rng::derive_seed(cfg.seed, streams::TRAIN, epoch as u64));
        for i in (1..order.len()).rev() {
            let j = shuffle_rng.gen_range(0..=i);
            order.swap(i, j);
        }

        let mut epoch_loss = 0.0;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<(&Trajectory, &TaskContext)> = chunk
                .iter()
                .map(|&i| (&dataset.trajectories[i], &dataset.contexts[i]))
                .collect();
            let draw_seed = rng::derive_seed(
                cfg.seed,
                streams::TRAIN,
                1_000_003 * (epoch as u64 + 1) + batch_idx as u64,
            );
            let (loss, grads) = model.loss_and_gradient(&batch, sched, draw_seed)?;
            epoch_loss += loss * chunk.len() as f64;

            step += 1;
            let correction = 1.0 - rho.powi(step as i32);
            apply_adaptive_step(
                &mut model,
                &grads,
                &mut second_moment,
                cfg.learning_rate,
                rho,
                correction,
                eps_stab,
            );
        }
        epoch_losses.push(epoch_loss / item_count as f64);
    }

    Ok((model, TrainReport { epoch_losses }))
}

fn apply_adaptive_step(
    model: &mut Denoiser,
    grads: &DenoiserGrads,
    second_moment: &mut DenoiserGrads,
    lr: f64,
    rho: f64,
    correction: f64,
    eps: f64,
) {
    let update = |p: &mut Linear, g: &Linear, v: &mut Linear| {
        for ((pw, gw), vw) in p.w.iter_mut().zip(g.w.iter()).zip(v.w.iter_mut()) {
            *vw = rho * *vw + (1.0 - rho) * gw * gw;
            *pw -= lr * gw / ((*vw / correction).sqrt() + eps);
        }
        for ((pb, gb), vb) in p.b.iter_mut().zip(g.b.iter()).zip(v.b.iter_mut()) {
            *vb = rho * *vb + (1.0 - rho) * gb * gb;
            *pb -= lr * gb / ((*vb / correction).sqrt() + eps);
        }
    };
    update(&mut model.input, &grads.input, &mut second_moment.input);
    for k in 0..model.blocks.len() {
        update(&mut model.blocks[k], &grads.blocks[k], &mut second_moment.blocks[k]);
    }
    update(&mut model.output, &grads.output, &mut second_moment.output);
}

const CHECKPOINT_MAGIC: &str = "capeckpt v1";

/// Write a checkpoint: a text header with the architecture metadata
/// followed by the raw little-endian 64-bit-float parameter payload.
pub fn save_checkpoint(model: &Denoiser, path: &Path) -> Result<()> {
    let bounds = model.normalizer.bounds();
    let fmt_vec = |v: &Array1<f64>| v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(" ");
    let mut header = String::new();
    header.push_str(CHECKPOINT_MAGIC);
    header.push('\n');
    header.push_str(&format!("n {}\n", model.n));
    header.push_str(&format!("d {}\n", model.d));
    header.push_str(&format!("steps {}\n", model.diffusion_steps));
    header.push_str(&format!("hidden_width {}\n", model.arch.hidden_width));
    header.push_str(&format!("depth {}\n", model.arch.depth));
    header.push_str(&format!("time_embed_dim {}\n", model.arch.time_embed_dim));
    header.push_str(&format!("bounds_lo {}\n", fmt_vec(&bounds.lo)));
    header.push_str(&format!("bounds_hi {}\n", fmt_vec(&bounds.hi)));
    header.push_str(&format!("params {}\n", model.param_count()));
    header.push_str("payload\n");

    let mut bytes = Vec::with_capacity(header.len() + model.param_count() * 8);
    bytes.extend_from_slice(header.as_bytes());
    for v in model.params_to_vec() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Load a checkpoint, validating the header against the payload. A
/// mismatched or truncated file is rejected with the offending field named.
pub fn load_checkpoint(path: &Path) -> Result<Denoiser> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let marker = b"payload\n";
    let payload_at = find_subslice(&bytes, marker)
        .ok_or_else(|| Error::format(path, "missing payload marker"))?;
    let header = std::str::from_utf8(&bytes[..payload_at])
        .map_err(|_| Error::format(path, "header is not valid text"))?;
    let payload = &bytes[payload_at + marker.len()..];

    let mut lines = header.lines();
    let magic = lines.next().unwrap_or_default();
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::format(path, format!("bad version tag '{magic}'")));
    }
    let mut fields = std::collections::BTreeMap::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once(' ')
            .ok_or_else(|| Error::format(path, format!("malformed header line '{line}'")))?;
        fields.insert(key.to_string(), value.to_string());
    }
    let get = |key: &str| -> Result<String> {
        fields
            .get(key)
            .cloned()
            .ok_or_else(|| Error::format(path, format!("header missing field {key}")))
    };
    let parse_usize = |key: &str| -> Result<usize> {
        get(key)?
            .parse::<usize>()
            .map_err(|_| Error::format(path, format!("invalid value for {key}")))
    };
    let parse_vec = |key: &str| -> Result<Array1<f64>> {
        let parsed: std::result::Result<Vec<f64>, _> =
            get(key)?.split_whitespace().map(|v| v.parse::<f64>()).collect();
        parsed
            .map(Array1::from_vec)
            .map_err(|_| Error::format(path, format!("invalid value for {key}")))
    };

    let n = parse_usize("n")?;
    let d = parse_usize("d")?;
    let steps = parse_usize("steps")?;
    let arch = DenoiserConfig {
        hidden_width: parse_usize("hidden_width")?,
        depth: parse_usize("depth")?,
        time_embed_dim: parse_usize("time_embed_dim")?,
    };
    let lo = parse_vec("bounds_lo")?;
    let hi = parse_vec("bounds_hi")?;
    if lo.len() != d || hi.len() != d {
        return Err(Error::format(path, format!("bounds dimension does not match d {d}")));
    }
    let declared_params = parse_usize("params")?;

    let bounds = crate::trajectory::Bounds::new(lo, hi)
        .map_err(|e| Error::format(path, format!("invalid bounds: {e}")))?;
    let normalizer = Normalizer::from_bounds(&bounds);
    let mut model = Denoiser::zeros(n, d, steps, arch.clone(), normalizer)
        .map_err(|e| Error::format(path, format!("invalid architecture: {e}")))?;
    if model.param_count() != declared_params {
        return Err(Error::format(
            path,
            format!(
                "params: header declares {declared_params} but fields (n={n} d={d} \
                 hidden_width={} depth={} time_embed_dim={}) imply {}",
                arch.hidden_width,
                arch.depth,
                arch.time_embed_dim,
                model.param_count()
            ),
        ));
    }
    if payload.len() != declared_params * 8 {
        return Err(Error::format(
            path,
            format!(
                "params: payload holds {} bytes but header declares {declared_params} \
                 parameters ({} bytes); file truncated or corrupted",
                payload.len(),
                declared_params * 8
            ),
        ));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    model.params_from_vec(&values).map_err(|e| Error::format(path, e.to_string()))?;
    Ok(model)
}

fn find_subslice(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

//! Minimal dense network engine: enough to train the rating autoencoder
//! and the softmax classifier head, nothing more.
//!
//! Batches are row-major (`rows = samples`). Backward passes fold the
//! loss's `1/(batch*dim)` mean into the upstream gradient, so layer
//! gradients are plain `dZ^T X` accumulations. Everything is sequential
//! and seeded; repeated runs are bit-identical.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::SplitSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
    Softmax,
}

impl Activation {
    fn apply_batch(self, z: &mut Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Softmax => {
                for mut row in z.rows_mut() {
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    row.mapv_inplace(|v| (v - max).exp());
                    let sum = row.sum();
                    row.mapv_inplace(|v| v / sum);
                }
            }
        }
    }

    /// `dL/dz` from post-activation values `y` and `dL/dy`.
    fn backprop_batch(self, y: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Identity => dy.clone(),
            Activation::Tanh => dy * &y.mapv(|v| 1.0 - v * v),
            Activation::Softmax => {
                let mut dz = Array2::zeros(dy.raw_dim());
                for ((y_row, dy_row), mut dz_row) in y
                    .rows()
                    .into_iter()
                    .zip(dy.rows())
                    .zip(dz.rows_mut())
                {
                    let dot: f64 = y_row.iter().zip(dy_row.iter()).map(|(a, b)| a * b).sum();
                    for ((z, &y), &dy) in dz_row.iter_mut().zip(y_row).zip(dy_row) {
                        *z = y * (dy - dot);
                    }
                }
                dz
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out x in`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    /// Fan-in-scaled uniform init, bias zero.
    pub fn seeded(out_dim: usize, in_dim: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weights =
            Array2::from_shape_fn((out_dim, in_dim), |_| rng.random_range(-bound..bound));
        DenseLayer {
            weights,
            bias: Array1::zeros(out_dim),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    fn forward_batch(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weights.t());
        z += &self.bias;
        self.activation.apply_batch(&mut z);
        z
    }
}

/// `activation(W x + b)` for a single vector, with shape checking.
pub fn dense_forward(layer: &DenseLayer, input: ArrayView1<f64>) -> Result<Array1<f64>> {
    if input.len() != layer.in_dim() {
        return Err(Error::InvalidArgument(format!(
            "input length {} does not match layer in-dimension {}",
            input.len(),
            layer.in_dim()
        )));
    }
    let batch = input.insert_axis(Axis(0));
    Ok(layer.forward_batch(&batch).remove_axis(Axis(0)))
}

/// Mean of squared componentwise differences.
pub fn mse_loss(pred: ArrayView1<f64>, target: ArrayView1<f64>) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::InvalidArgument(format!(
            "mse operands have lengths {} and {}",
            pred.len(),
            target.len()
        )));
    }
    Ok(mse_batch(&pred.insert_axis(Axis(0)), &target.insert_axis(Axis(0))))
}

fn mse_batch(pred: &ArrayView2<f64>, target: &ArrayView2<f64>) -> f64 {
    let diff = pred - target;
    diff.iter().map(|d| d * d).sum::<f64>() / diff.len() as f64
}

/// Per-layer `(dW, db)` in stack order.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub per_layer: Vec<(Array2<f64>, Array1<f64>)>,
}

/// Post-activation outputs of every layer; index 0 is the input batch.
pub fn forward_stack(layers: &[&DenseLayer], x: Array2<f64>) -> Vec<Array2<f64>> {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(x);
    for layer in layers {
        let next = layer.forward_batch(&acts.last().unwrap().view());
        acts.push(next);
    }
    acts
}

/// Backpropagate `dL/d(output)` through the stack; returns layer gradients
/// and `dL/d(input)`.
pub fn backward_stack(
    layers: &[&DenseLayer],
    acts: &[Array2<f64>],
    dl_dy: Array2<f64>,
) -> (Gradients, Array2<f64>) {
    let mut per_layer = vec![None; layers.len()];
    let mut da = dl_dy;
    for (l, layer) in layers.iter().enumerate().rev() {
        let dz = layer.activation.backprop_batch(&acts[l + 1], &da);
        let dw = dz.t().dot(&acts[l]);
        let db = dz.sum_axis(Axis(0));
        da = dz.dot(&layer.weights);
        per_layer[l] = Some((dw, db));
    }
    (
        Gradients {
            per_layer: per_layer.into_iter().map(Option::unwrap).collect(),
        },
        da,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Optimizer over one fixed stack of layers. Adam state is allocated
/// lazily on the first step to match the layer shapes.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    t: u64,
    moments: Vec<(Array2<f64>, Array1<f64>)>,
    velocities: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Optimizer {
    pub fn sgd(lr: f64) -> Self {
        Optimizer {
            kind: OptimizerKind::Sgd,
            lr,
            beta1: 0.0,
            beta2: 0.0,
            epsilon: 0.0,
            t: 0,
            moments: Vec::new(),
            velocities: Vec::new(),
        }
    }

    pub fn adam(lr: f64) -> Self {
        Optimizer {
            kind: OptimizerKind::Adam,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            moments: Vec::new(),
            velocities: Vec::new(),
        }
    }

    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        match kind {
            OptimizerKind::Sgd => Self::sgd(lr),
            OptimizerKind::Adam => Self::adam(lr),
        }
    }

    pub fn step(&mut self, layers: &mut [&mut DenseLayer], grads: &Gradients) -> Result<()> {
        if grads.per_layer.len() != layers.len() {
            return Err(Error::InvalidArgument(format!(
                "{} gradient entries for {} layers",
                grads.per_layer.len(),
                layers.len()
            )));
        }
        for (dw, db) in &grads.per_layer {
            if dw.iter().chain(db.iter()).any(|g| !g.is_finite()) {
                return Err(Error::Numeric(
                    "non-finite gradient entering optimizer step".into(),
                ));
            }
        }
        match self.kind {
            OptimizerKind::Sgd => {
                for (layer, (dw, db)) in layers.iter_mut().zip(&grads.per_layer) {
                    layer.weights.scaled_add(-self.lr, dw);
                    layer.bias.scaled_add(-self.lr, db);
                }
            }
            OptimizerKind::Adam => {
                if self.moments.is_empty() {
                    for layer in layers.iter() {
                        self.moments.push((
                            Array2::zeros(layer.weights.raw_dim()),
                            Array1::zeros(layer.bias.raw_dim()),
                        ));
                        self.velocities.push((
                            Array2::zeros(layer.weights.raw_dim()),
                            Array1::zeros(layer.bias.raw_dim()),
                        ));
                    }
                }
                self.t += 1;
                let bc1 = 1.0 - self.beta1.powi(self.t as i32);
                let bc2 = 1.0 - self.beta2.powi(self.t as i32);
                for (i, (layer, (dw, db))) in
                    layers.iter_mut().zip(&grads.per_layer).enumerate()
                {
                    let (mw, mb) = &mut self.moments[i];
                    let (vw, vb) = &mut self.velocities[i];
                    mw.zip_mut_with(dw, |m, &g| *m = self.beta1 * *m + (1.0 - self.beta1) * g);
                    mb.zip_mut_with(db, |m, &g| *m = self.beta1 * *m + (1.0 - self.beta1) * g);
                    vw.zip_mut_with(dw, |v, &g| *v = self.beta2 * *v + (1.0 - self.beta2) * g * g);
                    vb.zip_mut_with(db, |v, &g| *v = self.beta2 * *v + (1.0 - self.beta2) * g * g);
                    ndarray::Zip::from(&mut layer.weights)
                        .and(&*mw)
                        .and(&*vw)
                        .for_each(|p, &m, &v| {
                            *p -= self.lr * (m / bc1) / ((v / bc2).sqrt() + self.epsilon);
                        });
                    ndarray::Zip::from(&mut layer.bias)
                        .and(&*mb)
                        .and(&*vb)
                        .for_each(|p, &m, &v| {
                            *p -= self.lr * (m / bc1) / ((v / bc2).sqrt() + self.epsilon);
                        });
                }
            }
        }
        Ok(())
    }
}

/// One optimizer step on the mean batch MSE; returns the pre-step loss.
pub fn backward_and_step(
    layers: &mut [&mut DenseLayer],
    batch: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    optimizer: &mut Optimizer,
) -> Result<f64> {
    let views: Vec<&DenseLayer> = layers.iter().map(|l| &**l).collect();
    let acts = forward_stack(&views, batch.to_owned());
    let pred = acts.last().unwrap();
    if targets.dim() != pred.dim() {
        return Err(Error::InvalidArgument(format!(
            "target shape {:?} does not match output shape {:?}",
            targets.dim(),
            pred.dim()
        )));
    }
    let loss = mse_batch(&pred.view(), &targets);
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite batch loss {loss}")));
    }
    // d(mean sq err)/d(pred)
    let scale = 2.0 / pred.len() as f64;
    let dl_dy = (pred - &targets) * scale;
    let (grads, _) = backward_stack(&views, &acts, dl_dy);
    optimizer.step(layers, &grads)?;
    Ok(loss)
}

/// Two-layer encoder of Fig-1 shape: `M -> ceil(M/100)` linear, then a
/// tanh projection to the `n` latent values.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub layer1: DenseLayer,
    pub layer2: DenseLayer,
    pub n: usize,
}

/// Encoder plus its mirrored decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderParams {
    pub encoder: EncoderParams,
    pub decoder1: DenseLayer,
    pub decoder2: DenseLayer,
}

pub fn hidden_dim(movies: usize) -> usize {
    movies.div_ceil(100)
}

impl AutoencoderParams {
    pub fn seeded(movies: usize, latent: usize, rng: &mut impl Rng) -> Self {
        let hidden = hidden_dim(movies);
        AutoencoderParams {
            encoder: EncoderParams {
                layer1: DenseLayer::seeded(hidden, movies, Activation::Identity, rng),
                layer2: DenseLayer::seeded(latent, hidden, Activation::Tanh, rng),
                n: latent,
            },
            decoder1: DenseLayer::seeded(hidden, latent, Activation::Tanh, rng),
            decoder2: DenseLayer::seeded(movies, hidden, Activation::Identity, rng),
        }
    }

    pub fn layers(&self) -> [&DenseLayer; 4] {
        [
            &self.encoder.layer1,
            &self.encoder.layer2,
            &self.decoder1,
            &self.decoder2,
        ]
    }

    pub fn layers_mut(&mut self) -> [&mut DenseLayer; 4] {
        [
            &mut self.encoder.layer1,
            &mut self.encoder.layer2,
            &mut self.decoder1,
            &mut self.decoder2,
        ]
    }

    pub fn reconstruct_batch(&self, x: ArrayView2<f64>) -> Array2<f64> {
        forward_stack(&self.layers(), x.to_owned())
            .pop()
            .unwrap()
    }
}

/// Latent representation of one user vector; entries are strictly inside
/// `(-1, 1)` thanks to the tanh output layer.
pub fn encode(params: &EncoderParams, user_vector: ArrayView1<f64>) -> Result<Array1<f64>> {
    if let Some(bad) = user_vector.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!(
            "user vector entry {bad} outside [0, 1]"
        )));
    }
    let hidden = dense_forward(&params.layer1, user_vector)?;
    dense_forward(&params.layer2, hidden.view())
}

pub fn encode_batch(params: &EncoderParams, rows: ArrayView2<f64>) -> Array2<f64> {
    forward_stack(&[&params.layer1, &params.layer2], rows.to_owned())
        .pop()
        .unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub test_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// When true, reconstruction loss only covers rated (nonzero) entries.
    #[serde(default)]
    pub mask_unrated: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            mask_unrated: false,
        }
    }
}

/// Like [`backward_and_step`] for reconstruction, but zeroes residuals on
/// unrated (zero) entries so only rated cells drive the loss.
fn masked_backward_and_step(
    layers: &mut [&mut DenseLayer],
    batch: ArrayView2<f64>,
    optimizer: &mut Optimizer,
) -> Result<f64> {
    let views: Vec<&DenseLayer> = layers.iter().map(|l| &**l).collect();
    let acts = forward_stack(&views, batch.to_owned());
    let pred = acts.last().unwrap();
    let mut diff = pred - &batch;
    let mut rated = 0usize;
    for (d, &v) in diff.iter_mut().zip(batch.iter()) {
        if v > 0.0 {
            rated += 1;
        } else {
            *d = 0.0;
        }
    }
    if rated == 0 {
        return Err(Error::Numeric("batch has no rated entries to fit".into()));
    }
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / rated as f64;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite batch loss {loss}")));
    }
    let dl_dy = diff * (2.0 / rated as f64);
    let (grads, _) = backward_stack(&views, &acts, dl_dy);
    optimizer.step(layers, &grads)?;
    Ok(loss)
}

fn eval_reconstruction(params: &AutoencoderParams, data: &ArrayView2<f64>, masked: bool) -> f64 {
    // chunked so validation on the full matrix stays small in memory
    let rows = data.nrows();
    let mut sum = 0.0;
    let mut count = 0usize;
    let chunk = 256;
    let mut start = 0;
    while start < rows {
        let end = (start + chunk).min(rows);
        let block = data.slice(ndarray::s![start..end, ..]);
        let pred = params.reconstruct_batch(block);
        let diff = &pred - &block;
        if masked {
            for (d, &v) in diff.iter().zip(block.iter()) {
                if v > 0.0 {
                    sum += d * d;
                    count += 1;
                }
            }
        } else {
            sum += diff.iter().map(|d| d * d).sum::<f64>();
            count += diff.len();
        }
        start = end;
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Train the reconstruction autoencoder on the train split, tracking
/// validation loss per epoch and the final test loss.
pub fn train_autoencoder(
    splits: &SplitSet,
    epochs: usize,
    latent: usize,
    cfg: &TrainConfig,
) -> Result<(AutoencoderParams, TrainHistory)> {
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    if splits.train.users() == 0 {
        return Err(Error::EmptyDataset);
    }
    let movies = splits.train.movies();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = AutoencoderParams::seeded(movies, latent, &mut rng);
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate);

    let mut history = Vec::with_capacity(epochs);
    let mut order: Vec<usize> = (0..splits.train.users()).collect();
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = splits.train.values.select(Axis(0), chunk);
            let loss = {
                let mut layers = params.layers_mut();
                if cfg.mask_unrated {
                    masked_backward_and_step(&mut layers, batch.view(), &mut optimizer)
                } else {
                    backward_and_step(&mut layers, batch.view(), batch.view(), &mut optimizer)
                }
            }
            .map_err(|e| match e {
                Error::Numeric(message) => Error::TrainingDiverged {
                    epoch,
                    message,
                    last_good: None,
                },
                other => other,
            })?;
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        let train_loss = loss_sum / seen as f64;
        let val_loss =
            eval_reconstruction(&params, &splits.validation.values.view(), cfg.mask_unrated);
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                message: "epoch loss is non-finite".into(),
                last_good: None,
            });
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
        log::info!("ae epoch {epoch}: train={train_loss:.6} val={val_loss:.6}");
    }

    let test_loss = eval_reconstruction(&params, &splits.test.values.view(), cfg.mask_unrated);
    Ok((
        params,
        TrainHistory {
            epochs: history,
            test_loss,
        },
    ))
}

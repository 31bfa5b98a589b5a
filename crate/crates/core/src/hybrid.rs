//! End-to-end hybrid model: frozen (or fine-tuned) encoder, associative
//! quantum memory layer, and a softmax head over the cluster classes.
//!
//! Training minimizes MSE against one-hot cluster labels. Each sample gets a
//! fresh random update target per epoch; evaluation fixes the target draw by
//! seed so paired runs (ideal vs noisy backend) see identical circuits.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::archetypes::PatternSet;
use crate::dataset::{RatingsMatrix, SplitSet};
use crate::error::{Error, Result};
use crate::metrics::{
    accuracy, confusion_matrix, macro_f1, mse_one_hot, roc_auc_macro, Environment, MetricsReport,
};
use crate::nn::{
    backward_stack, dense_forward, encode, forward_stack, Activation, DenseLayer, EncoderParams,
    Gradients, Optimizer, OptimizerKind,
};
use crate::qham::{
    hebbian_config, hebbian_weights, input_gradients, parameter_gradients, pick_target,
    qham_forward, Backend, HebbianConfig, NeuronParams,
};
use crate::qsim::sample_z;

#[derive(Debug, Clone, PartialEq)]
pub struct HybridModel {
    pub encoder: EncoderParams,
    /// When false (the default) encoder weights stay frozen during training.
    pub fine_tune_encoder: bool,
    pub hebbian: HebbianConfig,
    pub neuron: NeuronParams,
    pub patterns: PatternSet,
    /// `n -> k` softmax classifier over the memory readout.
    pub head: DenseLayer,
}

impl HybridModel {
    pub fn n(&self) -> usize {
        self.neuron.n()
    }

    pub fn classes(&self) -> usize {
        self.head.out_dim()
    }

    fn check_consistent(&self) -> Result<()> {
        let n = self.n();
        if self.encoder.n != n {
            return Err(Error::Config(format!(
                "encoder emits {} latent values but the memory has {n} neurons",
                self.encoder.n
            )));
        }
        if self.head.in_dim() != n {
            return Err(Error::Config(format!(
                "head expects {} inputs but the memory has {n} neurons",
                self.head.in_dim()
            )));
        }
        if self.patterns.len() != self.classes() {
            return Err(Error::Config(format!(
                "{} stored patterns but the head has {} classes",
                self.patterns.len(),
                self.classes()
            )));
        }
        self.neuron.validate()
    }
}

/// Assemble a fresh hybrid model: Hebbian memory from the patterns, plus a
/// seeded softmax head.
pub fn init_hybrid(
    encoder: EncoderParams,
    patterns: PatternSet,
    init_seed: u64,
) -> Result<HybridModel> {
    let hebbian = hebbian_config(hebbian_weights(&patterns))?;
    let neuron = NeuronParams::from_hebbian(&hebbian);
    let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
    let head = DenseLayer::seeded(patterns.len(), patterns.n(), Activation::Softmax, &mut rng);
    let model = HybridModel {
        encoder,
        fine_tune_encoder: false,
        hebbian,
        neuron,
        patterns,
        head,
    };
    model.check_consistent()?;
    Ok(model)
}

/// Class probabilities for one user vector with the given update target.
pub fn forward(
    model: &HybridModel,
    user_vector: ArrayView1<f64>,
    target: usize,
    backend: Backend,
) -> Result<Array1<f64>> {
    model.check_consistent()?;
    let latent = encode(&model.encoder, user_vector)?;
    let z = qham_forward(
        latent.as_slice().expect("latent is contiguous"),
        target,
        &model.neuron,
        backend,
    )?;
    dense_forward(&model.head, Array1::from(z).view())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Drives head init ordering concerns only through `init_hybrid`; here it
    /// seeds the epoch shuffles.
    pub shuffle_seed: u64,
    /// Seeds both the per-sample training targets and evaluation targets.
    pub target_seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for HybridTrainConfig {
    fn default() -> Self {
        HybridTrainConfig {
            epochs: 35,
            learning_rate: 1e-2,
            batch_size: 64,
            shuffle_seed: 0,
            target_seed: 0,
            optimizer: OptimizerKind::Adam,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub val_f1: f64,
    pub val_roc_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HybridHistory {
    pub epochs: Vec<HybridEpoch>,
}

/// Truth labels in matrix row order, from the per-user label map.
fn labels_in_row_order(matrix: &RatingsMatrix, labels: &BTreeMap<u32, usize>) -> Result<Vec<usize>> {
    let mut out = vec![0usize; matrix.users()];
    for (user, &row) in &matrix.user_index {
        out[row] = *labels.get(user).ok_or_else(|| {
            Error::InvalidArgument(format!("no cluster label for user {user}"))
        })?;
    }
    Ok(out)
}

fn argmax_row(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    let mut best_v = row[0];
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub target_seed: u64,
    /// 0 keeps analytic expectations; otherwise each readout is estimated
    /// from this many seeded measurement shots.
    pub shots: u32,
    pub shot_seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            target_seed: 0,
            shots: 0,
            shot_seed: 0,
        }
    }
}

/// Score every row of `matrix` with evaluation-mode targets (one seeded draw
/// per row, in ascending user-id order).
fn score_split(
    model: &HybridModel,
    matrix: &RatingsMatrix,
    labels: &BTreeMap<u32, usize>,
    backend: Backend,
    options: &EvalOptions,
) -> Result<(Array2<f64>, Vec<usize>)> {
    model.check_consistent()?;
    let truth = labels_in_row_order(matrix, labels)?;
    let n = model.n();
    let mut rng_target = ChaCha8Rng::seed_from_u64(options.target_seed);
    let mut rng_shot = ChaCha8Rng::seed_from_u64(options.shot_seed);
    let mut scores = Array2::zeros((matrix.users(), model.classes()));
    for (_, &row) in &matrix.user_index {
        let target = pick_target(n, &mut rng_target);
        let latent = encode(&model.encoder, matrix.values.row(row))?;
        let mut z = qham_forward(
            latent.as_slice().expect("latent is contiguous"),
            target,
            &model.neuron,
            backend,
        )?;
        if options.shots > 0 {
            for zi in z.iter_mut() {
                let p1 = (1.0 - *zi) / 2.0;
                *zi = sample_z(p1, options.shots, &mut rng_shot);
            }
        }
        let probs = dense_forward(&model.head, Array1::from(z).view())?;
        scores.row_mut(row).assign(&probs);
    }
    Ok((scores, truth))
}

/// Full metric suite over one split with analytic readouts.
pub fn evaluate(
    model: &HybridModel,
    matrix: &RatingsMatrix,
    labels: &BTreeMap<u32, usize>,
    backend: Backend,
    target_seed: u64,
) -> Result<MetricsReport> {
    let options = EvalOptions {
        target_seed,
        ..EvalOptions::default()
    };
    evaluate_with(model, matrix, labels, backend, &options)
}

/// Full metric suite with explicit evaluation options (shot sampling).
pub fn evaluate_with(
    model: &HybridModel,
    matrix: &RatingsMatrix,
    labels: &BTreeMap<u32, usize>,
    backend: Backend,
    options: &EvalOptions,
) -> Result<MetricsReport> {
    let (scores, truth) = score_split(model, matrix, labels, backend, options)?;
    let preds: Vec<usize> = scores.rows().into_iter().map(argmax_row).collect();
    let confusion = confusion_matrix(&truth, &preds, model.classes())?;
    let (f1, degenerate) = macro_f1(&confusion);
    if !degenerate.is_empty() {
        log::warn!("macro-f1 had 0/0 terms for classes {degenerate:?}");
    }
    Ok(MetricsReport {
        mse: mse_one_hot(scores.view(), &truth)?,
        accuracy: accuracy(&confusion),
        f1,
        roc_auc: roc_auc_macro(scores.view(), &truth)?,
        environment: match backend {
            Backend::Ideal => Environment::Ideal,
            Backend::Noisy(_) => Environment::Noisy,
        },
        confusion,
        degenerate_f1_classes: degenerate,
    })
}

/// Per-epoch validation metrics that tolerate degenerate tiny splits
/// (single-class validation scores ROC as NaN instead of aborting).
fn validation_metrics(
    model: &HybridModel,
    matrix: &RatingsMatrix,
    labels: &BTreeMap<u32, usize>,
    backend: Backend,
    target_seed: u64,
) -> Result<(f64, f64, f64, f64)> {
    let options = EvalOptions {
        target_seed,
        ..EvalOptions::default()
    };
    let (scores, truth) = score_split(model, matrix, labels, backend, &options)?;
    let preds: Vec<usize> = scores.rows().into_iter().map(argmax_row).collect();
    let confusion = confusion_matrix(&truth, &preds, model.classes())?;
    let (f1, _) = macro_f1(&confusion);
    let roc = roc_auc_macro(scores.view(), &truth).unwrap_or(f64::NAN);
    Ok((mse_one_hot(scores.view(), &truth)?, accuracy(&confusion), f1, roc))
}

fn diverged(epoch: usize, message: String, checkpoint: &HybridModel) -> Error {
    Error::TrainingDiverged {
        epoch,
        message,
        last_good: Some(Box::new(checkpoint.clone())),
    }
}

/// Train memory angles and head (and optionally the encoder) against one-hot
/// cluster labels. Gradients always come from the ideal shift rule, even when
/// forward passes run on the noisy backend.
pub fn train_hybrid(
    mut model: HybridModel,
    splits: &SplitSet,
    labels: &BTreeMap<u32, usize>,
    cfg: &HybridTrainConfig,
    backend: Backend,
) -> Result<(HybridModel, HybridHistory)> {
    model.check_consistent()?;
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    if splits.train.users() == 0 {
        return Err(Error::EmptyDataset);
    }
    let train_truth = labels_in_row_order(&splits.train, labels)?;
    if let Some(bad) = splits
        .train
        .values
        .iter()
        .find(|v| !(0.0..=1.0).contains(*v))
    {
        return Err(Error::InvalidArgument(format!(
            "training matrix entry {bad} outside [0, 1]"
        )));
    }

    let n = model.n();
    let k = model.classes();
    let mut rng_shuffle = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut rng_target = ChaCha8Rng::seed_from_u64(cfg.target_seed);
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate);

    // The memory angles ride in a pseudo-layer so the optimizer treats them
    // exactly like the dense weights.
    let mut qlayer = DenseLayer {
        weights: model.neuron.alpha.clone(),
        bias: model.neuron.b.clone(),
        activation: Activation::Identity,
    };

    let mut checkpoint = model.clone();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..splits.train.users()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng_shuffle);
        let mut sse = 0.0;
        let mut entries = 0usize;

        for chunk in order.chunks(cfg.batch_size) {
            let trained_finite = qlayer.weights.iter().chain(qlayer.bias.iter()).all(|v| v.is_finite())
                && model
                    .head
                    .weights
                    .iter()
                    .chain(model.head.bias.iter())
                    .all(|v| v.is_finite())
                && (!model.fine_tune_encoder
                    || model
                        .encoder
                        .layer1
                        .weights
                        .iter()
                        .chain(model.encoder.layer2.weights.iter())
                        .all(|v| v.is_finite()));
            if !trained_finite {
                return Err(diverged(epoch, "non-finite trained parameter".into(), &checkpoint));
            }

            let params = NeuronParams {
                alpha: qlayer.weights.clone(),
                b: qlayer.bias.clone(),
                trainable: true,
            };
            let batch = splits.train.values.select(Axis(0), chunk);
            let enc_layers = [&model.encoder.layer1, &model.encoder.layer2];
            let enc_acts = forward_stack(&enc_layers, batch);
            let latents = enc_acts.last().unwrap();

            let b_rows = chunk.len();
            let mut z_batch = Array2::zeros((b_rows, n));
            let mut targets = Vec::with_capacity(b_rows);
            let mut lat_rows: Vec<Vec<f64>> = Vec::with_capacity(b_rows);
            for s in 0..b_rows {
                let target = pick_target(n, &mut rng_target);
                let lat = latents.row(s).to_vec();
                let z = qham_forward(&lat, target, &params, backend)?;
                z_batch.row_mut(s).assign(&Array1::from_vec(z));
                targets.push(target);
                lat_rows.push(lat);
            }

            let head_acts = forward_stack(&[&model.head], z_batch);
            let probs = head_acts.last().unwrap();
            let mut one_hot = Array2::zeros((b_rows, k));
            for (s, &row_idx) in chunk.iter().enumerate() {
                one_hot[[s, train_truth[row_idx]]] = 1.0;
            }
            let diff = probs - &one_hot;
            sse += diff.iter().map(|d| d * d).sum::<f64>();
            entries += diff.len();

            let dl_dy = diff * (2.0 / (b_rows * k) as f64);
            let (head_grads, d_z) = backward_stack(&[&model.head], &head_acts, dl_dy);

            let mut alpha_grad = Array2::zeros((n, n));
            let mut b_grad = Array1::zeros(n);
            let mut d_latent = Array2::zeros((b_rows, n));
            for s in 0..b_rows {
                let upstream = d_z.row(s).to_vec();
                let g = parameter_gradients(&params, &lat_rows[s], targets[s], &upstream)?;
                let mut row = alpha_grad.row_mut(targets[s]);
                row += &g.alpha_row;
                b_grad[targets[s]] += g.b;
                if model.fine_tune_encoder {
                    let gx = input_gradients(&params, &lat_rows[s], targets[s], &upstream)?;
                    d_latent.row_mut(s).assign(&gx);
                }
            }

            let step = if model.fine_tune_encoder {
                let (enc_grads, _) = backward_stack(&enc_layers, &enc_acts, d_latent);
                let grads = Gradients {
                    per_layer: enc_grads
                        .per_layer
                        .into_iter()
                        .chain([(alpha_grad, b_grad)])
                        .chain(head_grads.per_layer)
                        .collect(),
                };
                optimizer.step(
                    &mut [
                        &mut model.encoder.layer1,
                        &mut model.encoder.layer2,
                        &mut qlayer,
                        &mut model.head,
                    ],
                    &grads,
                )
            } else {
                let grads = Gradients {
                    per_layer: [(alpha_grad, b_grad)]
                        .into_iter()
                        .chain(head_grads.per_layer)
                        .collect(),
                };
                optimizer.step(&mut [&mut qlayer, &mut model.head], &grads)
            };
            if let Err(e) = step {
                return match e {
                    Error::Numeric(message) => Err(diverged(epoch, message, &checkpoint)),
                    other => Err(other),
                };
            }
        }

        let train_loss = sse / entries as f64;
        if !train_loss.is_finite() {
            return Err(diverged(epoch, "epoch loss is non-finite".into(), &checkpoint));
        }

        model.neuron.alpha = qlayer.weights.clone();
        model.neuron.b = qlayer.bias.clone();
        let (val_loss, val_accuracy, val_f1, val_roc_auc) = validation_metrics(
            &model,
            &splits.validation,
            labels,
            backend,
            cfg.target_seed,
        )?;
        history.push(HybridEpoch {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
            val_f1,
            val_roc_auc,
        });
        log::info!(
            "hybrid epoch {epoch}: train={train_loss:.6} val={val_loss:.6} acc={val_accuracy:.4}"
        );
        checkpoint = model.clone();
    }

    Ok((model, HybridHistory { epochs: history }))
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;
    use crate::archetypes::extract_archetypes;
    use crate::dataset::{build_matrix, take_rows, RatingRecord};
    use crate::noise::{sample_noise_spec, NoiseSpec};

    /// 12 users, 6 movies, two taste groups: evens love movies 0-2, odds
    /// love movies 3-5; the disliked block gets a 1-star rating.
    fn toy_records() -> Vec<RatingRecord> {
        let mut records = Vec::new();
        for user in 1..=12u32 {
            for movie in 1..=6u32 {
                let loved = (user % 2 == 0) == (movie <= 3);
                records.push(RatingRecord {
                    user_id: user,
                    movie_id: movie,
                    rating: if loved { 5.0 } else { 1.0 },
                    timestamp: 0,
                });
            }
        }
        records
    }

    /// Hand-built encoder: block means, then a sharpened tanh so the two
    /// groups land near (+-0.76, -+0.76).
    fn toy_encoder() -> EncoderParams {
        let third = 1.0 / 3.0;
        let layer1 = DenseLayer {
            weights: array![
                [third, third, third, 0.0, 0.0, 0.0],
                [0.0, 0.0, 0.0, third, third, third]
            ],
            bias: Array1::zeros(2),
            activation: Activation::Identity,
        };
        let layer2 = DenseLayer {
            weights: array![[4.0, 0.0], [0.0, 4.0]],
            bias: array![-2.4, -2.4],
            activation: Activation::Tanh,
        };
        EncoderParams {
            layer1,
            layer2,
            n: 2,
        }
    }

    /// Matrix, balanced manual splits, archetype labels, and a fresh model.
    fn toy_setup() -> (SplitSet, BTreeMap<u32, usize>, HybridModel) {
        let matrix = build_matrix(&toy_records(), 1).unwrap();
        let encoder = toy_encoder();
        let (patterns, labels, _) = extract_archetypes(&matrix, &encoder, 2, 7).unwrap();
        assert_eq!(patterns.len(), 2);

        let by_user: BTreeMap<u32, usize> = matrix
            .user_index
            .iter()
            .map(|(&user, &row)| (user, labels[row]))
            .collect();

        // validation and test each get one user from either group
        let val: std::collections::BTreeSet<u32> = [1, 2].into_iter().collect();
        let test: std::collections::BTreeSet<u32> = [3, 4].into_iter().collect();
        let train: std::collections::BTreeSet<u32> = (5..=12).collect();
        let splits = SplitSet {
            train: take_rows(&matrix, &train),
            validation: take_rows(&matrix, &val),
            test: take_rows(&matrix, &test),
            seed: 0,
        };

        let model = init_hybrid(encoder, patterns, 11).unwrap();
        (splits, by_user, model)
    }

    fn toy_config(epochs: usize) -> HybridTrainConfig {
        HybridTrainConfig {
            epochs,
            learning_rate: 0.05,
            batch_size: 4,
            shuffle_seed: 3,
            target_seed: 5,
            optimizer: OptimizerKind::Adam,
        }
    }

    #[test]
    fn forward_emits_a_probability_simplex() {
        let (splits, _, model) = toy_setup();
        let probs = forward(&model, splits.train.values.row(0), 1, Backend::Ideal).unwrap();
        assert_eq!(probs.len(), 2);
        assert!((probs.sum() - 1.0).abs() < 1e-12);
        assert!(probs.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn zero_head_gives_uniform_probabilities() {
        let (splits, _, mut model) = toy_setup();
        model.head.weights.fill(0.0);
        model.head.bias.fill(0.0);
        let probs = forward(&model, splits.train.values.row(0), 0, Backend::Ideal).unwrap();
        for &p in probs.iter() {
            assert!((p - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn shot_sampling_is_seeded_and_approaches_analytic() {
        let (splits, labels, model) = toy_setup();
        let many = EvalOptions {
            target_seed: 5,
            shots: 20_000,
            shot_seed: 2,
        };
        let sampled =
            evaluate_with(&model, &splits.test, &labels, Backend::Ideal, &many).unwrap();
        let analytic = evaluate(&model, &splits.test, &labels, Backend::Ideal, 5).unwrap();
        assert!((sampled.mse - analytic.mse).abs() < 0.05);

        let again = evaluate_with(&model, &splits.test, &labels, Backend::Ideal, &many).unwrap();
        assert_eq!(sampled, again);
        assert_ne!(sampled, analytic);
    }

    #[test]
    fn forward_rejects_wrong_vector_length() {
        let (_, _, model) = toy_setup();
        let short = array![0.5, 0.5];
        assert!(forward(&model, short.view(), 0, Backend::Ideal).is_err());
    }

    #[test]
    fn training_learns_the_separable_toy() {
        let (splits, labels, model) = toy_setup();
        let (trained, history) =
            train_hybrid(model, &splits, &labels, &toy_config(10), Backend::Ideal).unwrap();
        assert_eq!(history.epochs.len(), 10);
        let first = history.epochs.first().unwrap();
        let last = history.epochs.last().unwrap();
        assert!(last.train_loss < first.train_loss);
        assert_eq!(last.val_accuracy, 1.0);

        let report = evaluate(&trained, &splits.test, &labels, Backend::Ideal, 5).unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.environment, Environment::Ideal);
        let total: usize = report.confusion.iter().flatten().sum();
        assert_eq!(total, splits.test.users());
    }

    #[test]
    fn zero_epochs_returns_the_initial_model() {
        let (splits, labels, model) = toy_setup();
        let before = model.clone();
        let (after, history) =
            train_hybrid(model, &splits, &labels, &toy_config(0), Backend::Ideal).unwrap();
        assert!(history.epochs.is_empty());
        assert_eq!(after, before);
    }

    #[test]
    fn training_and_evaluation_are_deterministic() {
        let (splits, labels, model) = toy_setup();
        let run = |model: HybridModel| {
            train_hybrid(model, &splits, &labels, &toy_config(4), Backend::Ideal).unwrap()
        };
        let (m1, h1) = run(model.clone());
        let (m2, h2) = run(model);
        assert_eq!(m1, m2);
        assert_eq!(h1, h2);
        let r1 = evaluate(&m1, &splits.test, &labels, Backend::Ideal, 9).unwrap();
        let r2 = evaluate(&m2, &splits.test, &labels, Backend::Ideal, 9).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn missing_label_is_reported() {
        let (splits, mut labels, model) = toy_setup();
        labels.remove(&7);
        let err = train_hybrid(model, &splits, &labels, &toy_config(1), Backend::Ideal)
            .err()
            .unwrap();
        assert!(err.to_string().contains("user 7"), "{err}");
    }

    #[test]
    fn divergence_carries_the_last_good_checkpoint() {
        let (splits, labels, model) = toy_setup();
        // Expectation values are bounded, so finite rates merely saturate the
        // softmax; an infinite rate is the limiting "too large" case and turns
        // the first update into inf/NaN parameters.
        let cfg = HybridTrainConfig {
            learning_rate: f64::INFINITY,
            optimizer: OptimizerKind::Sgd,
            ..toy_config(6)
        };
        match train_hybrid(model, &splits, &labels, &cfg, Backend::Ideal) {
            Err(Error::TrainingDiverged { last_good, .. }) => {
                let recovered = last_good.expect("checkpoint should be attached");
                recovered.check_consistent().unwrap();
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn noisy_training_runs_and_noisy_eval_never_beats_ideal() {
        let (splits, labels, model) = toy_setup();
        let (trained, _) =
            train_hybrid(model, &splits, &labels, &toy_config(6), Backend::Ideal).unwrap();

        let circuit_len = trained.n() + 1;
        let spec = sample_noise_spec(circuit_len, trained.n(), 13).unwrap();
        let ideal = evaluate(&trained, &splits.test, &labels, Backend::Ideal, 5).unwrap();
        let noisy = evaluate(&trained, &splits.test, &labels, Backend::Noisy(&spec), 5).unwrap();
        assert_eq!(noisy.environment, Environment::Noisy);
        assert!(noisy.accuracy <= ideal.accuracy + 1e-9);
        assert!(noisy.f1 <= ideal.f1 + 1e-9);
        assert!(noisy.roc_auc <= ideal.roc_auc + 1e-9);
    }

    #[test]
    fn silent_noise_matches_ideal_exactly() {
        let (splits, labels, model) = toy_setup();
        let spec = NoiseSpec::silent(model.n() + 1, model.n());
        let ideal = evaluate(&model, &splits.test, &labels, Backend::Ideal, 5).unwrap();
        let silent = evaluate(&model, &splits.test, &labels, Backend::Noisy(&spec), 5).unwrap();
        assert_eq!(ideal.confusion, silent.confusion);
        assert!((ideal.mse - silent.mse).abs() < 1e-12);
        assert!((ideal.roc_auc - silent.roc_auc).abs() < 1e-12);
    }

    #[test]
    fn fine_tuning_moves_encoder_weights() {
        let (splits, labels, mut model) = toy_setup();
        model.fine_tune_encoder = true;
        let before = model.encoder.clone();
        let (trained, _) =
            train_hybrid(model, &splits, &labels, &toy_config(2), Backend::Ideal).unwrap();
        assert_ne!(trained.encoder, before);
    }

    #[test]
    fn frozen_encoder_stays_put() {
        let (splits, labels, model) = toy_setup();
        let before = model.encoder.clone();
        let (trained, _) =
            train_hybrid(model, &splits, &labels, &toy_config(2), Backend::Ideal).unwrap();
        assert_eq!(trained.encoder, before);
    }
}

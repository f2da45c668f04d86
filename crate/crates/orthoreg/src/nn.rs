//! Minimal dense feed-forward engine: ReLU hidden layers, softmax output,
//! mean cross-entropy, plain SGD (no momentum, no weight decay), with the
//! decorrelation step applied per layer right inside the weight update.
//!
//! Everything is deterministic: a seed fixes the init, the shuffle order,
//! and therefore every recorded metric bit-exactly.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::anglestats;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::experiments::RunRecord;
use crate::linalg::Matrix;
use crate::reg::{self, RegConfig, RegMode};

/// Histogram resolution used for the per-layer angle summaries in training
/// records: 36 bins of 5° over [0°, 180°].
pub const ANGLE_BINS: usize = 36;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    SoftmaxOutput,
}

#[derive(Debug, Clone)]
pub struct DenseLayer {
    /// out × in; row i holds the weights feeding output neuron i, so rows
    /// are the feature detectors the regularizer acts on.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct MlpModel {
    pub layers: Vec<DenseLayer>,
    pub seed: u64,
}

impl MlpModel {
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].weights.cols()];
        sizes.extend(self.layers.iter().map(|l| l.weights.rows()));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weights.rows()
    }
}

/// Training configuration. `regularized_layers: None` regularizes every
/// layer; biases are never regularized either way.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub reg: RegConfig,
    pub regularized_layers: Option<Vec<usize>>,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, reg: RegConfig, seed: u64) -> Self {
        Self {
            learning_rate,
            batch_size: 200,
            epochs: 200,
            reg,
            regularized_layers: None,
            seed,
        }
    }

    fn validate(&self, n_layers: usize) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be finite and > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        self.reg.validate()?;
        if let Some(layers) = &self.regularized_layers {
            if let Some(&bad) = layers.iter().find(|&&l| l >= n_layers) {
                return Err(Error::InvalidConfig(format!(
                    "regularized layer index {bad} out of range for {n_layers} layers"
                )));
            }
        }
        Ok(())
    }

    fn regularizes(&self, layer: usize) -> bool {
        self.reg.gamma > 0.0
            && self
                .regularized_layers
                .as_ref()
                .map_or(true, |ls| ls.contains(&layer))
    }
}

/// Uniform init in ±√(6/(fan_in + fan_out)), biases zero; hidden layers get
/// ReLU, the final layer the softmax output tag. Deterministic in the seed.
pub fn init_model(layer_sizes: &[usize], seed: u64) -> Result<MlpModel> {
    if layer_sizes.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least input and output sizes, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.iter().any(|&s| s == 0) {
        return Err(Error::InvalidConfig("layer sizes must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(layer_sizes.len() - 1);
    for (idx, pair) in layer_sizes.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        layers.push(DenseLayer {
            weights: Matrix::from_vec(fan_out, fan_in, data)?,
            bias: vec![0.0; fan_out],
            activation: if idx == layer_sizes.len() - 2 {
                Activation::SoftmaxOutput
            } else {
                Activation::Relu
            },
        });
    }
    Ok(MlpModel { layers, seed })
}

/// Post-activation outputs of each layer, with the input batch at index 0;
/// the last entry holds the softmax probabilities.
pub struct ForwardCache {
    pub activations: Vec<Matrix>,
}

/// Runs the batch through the network. Returns the output probabilities (rows
/// sum to 1) plus the cache backward needs.
pub fn forward(model: &MlpModel, batch: &Matrix) -> Result<(Matrix, ForwardCache)> {
    if batch.cols() != model.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "batch width {} does not match input size {}",
            batch.cols(),
            model.input_dim()
        )));
    }
    let mut activations = vec![batch.clone()];
    for layer in &model.layers {
        let mut z = activations.last().unwrap().matmul_nt(&layer.weights)?;
        for i in 0..z.rows() {
            for (v, b) in z.row_mut(i).iter_mut().zip(&layer.bias) {
                *v += b;
            }
        }
        let a = match layer.activation {
            Activation::Relu => z.map(|v| v.max(0.0)),
            Activation::SoftmaxOutput => softmax_rows(&mut z),
        };
        activations.push(a);
    }
    Ok((activations.last().unwrap().clone(), ForwardCache { activations }))
}

fn softmax_rows(z: &mut Matrix) -> Matrix {
    for i in 0..z.rows() {
        let row = z.row_mut(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    z.clone()
}

/// Per-layer gradients of the mean cross-entropy over the batch.
pub struct Gradients {
    pub d_weights: Vec<Matrix>,
    pub d_bias: Vec<Vec<f64>>,
}

pub fn backward(model: &MlpModel, cache: &ForwardCache, labels: &[u8]) -> Result<Gradients> {
    let probs = cache.activations.last().unwrap();
    let batch = probs.rows();
    if labels.len() != batch {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    let classes = probs.cols();
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes) {
        return Err(Error::InvalidConfig(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }

    // d(mean CE)/d(logits) = (softmax − one-hot) / batch
    let mut delta = probs.clone();
    for (i, &label) in labels.iter().enumerate() {
        let row = delta.row_mut(i);
        row[label as usize] -= 1.0;
        for v in row.iter_mut() {
            *v /= batch as f64;
        }
    }

    let n_layers = model.layers.len();
    let mut d_weights = vec![Matrix::zeros(1, 1)?; n_layers];
    let mut d_bias = vec![Vec::new(); n_layers];
    for l in (0..n_layers).rev() {
        let input = &cache.activations[l];
        d_weights[l] = delta.matmul_tn(input)?;
        d_bias[l] = column_sums(&delta);
        if l > 0 {
            let mut upstream = delta.matmul(&model.layers[l].weights)?;
            let hidden = &cache.activations[l];
            for i in 0..upstream.rows() {
                for (v, &a) in upstream.row_mut(i).iter_mut().zip(hidden.row(i)) {
                    if a <= 0.0 {
                        *v = 0.0;
                    }
                }
            }
            delta = upstream;
        }
    }
    Ok(Gradients { d_weights, d_bias })
}

fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut sums = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for (s, &v) in sums.iter_mut().zip(m.row(i)) {
            *s += v;
        }
    }
    sums
}

/// Summed cross-entropy and misclassification count over one batch; callers
/// divide by their own example totals.
fn batch_metrics(probs: &Matrix, labels: &[u8]) -> (f64, usize) {
    let mut loss = 0.0;
    let mut wrong = 0;
    for (i, &label) in labels.iter().enumerate() {
        let row = probs.row(i);
        loss -= row[label as usize].max(1e-300).ln();
        let argmax = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(j, _)| j)
            .unwrap();
        if argmax != label as usize {
            wrong += 1;
        }
    }
    (loss, wrong)
}

/// Mean cross-entropy and error percentage over a whole dataset, evaluated
/// in batches.
pub fn evaluate(model: &MlpModel, ds: &Dataset, batch_size: usize) -> Result<(f64, f64)> {
    let n = ds.n_examples();
    let mut loss = 0.0;
    let mut wrong = 0;
    let mut start = 0;
    while start < n {
        let end = (start + batch_size).min(n);
        let batch = slice_batch(ds, &(start..end).collect::<Vec<_>>())?;
        let (probs, _) = forward(model, &batch.0)?;
        let (l, w) = batch_metrics(&probs, &batch.1);
        loss += l;
        wrong += w;
        start = end;
    }
    Ok((loss / n as f64, 100.0 * wrong as f64 / n as f64))
}

fn slice_batch(ds: &Dataset, indices: &[usize]) -> Result<(Matrix, Vec<u8>)> {
    let cols = ds.images.cols();
    let mut data = Vec::with_capacity(indices.len() * cols);
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        data.extend_from_slice(ds.images.row(i));
        labels.push(ds.labels[i]);
    }
    Ok((Matrix::from_vec(indices.len(), cols, data)?, labels))
}

/// Sum of the configured decorrelation loss over the regularized layers,
/// measured on row-normalized weights (the regularizer's own view).
fn reg_loss_of(model: &MlpModel, cfg: &TrainConfig) -> Result<f64> {
    let mut total = 0.0;
    for (l, layer) in model.layers.iter().enumerate() {
        let counted = cfg
            .regularized_layers
            .as_ref()
            .map_or(true, |ls| ls.contains(&l));
        if !counted {
            continue;
        }
        let (unit, _) = layer.weights.normalize_rows()?;
        total += match cfg.reg.mode {
            RegMode::Global => reg::global_loss(&unit)?,
            RegMode::Local => reg::local_loss(&unit, cfg.reg.lambda)?,
        };
    }
    Ok(total)
}

fn epoch_record(
    epoch: usize,
    model: &MlpModel,
    cfg: &TrainConfig,
    train_loss: f64,
    train_err: f64,
    test: (f64, f64),
) -> Result<RunRecord> {
    let mut stats = Vec::with_capacity(model.layers.len());
    for layer in &model.layers {
        stats.push(anglestats::summarize(&layer.weights, ANGLE_BINS)?);
    }
    Ok(RunRecord {
        step_or_epoch: epoch,
        task_loss: Some(train_loss),
        reg_loss: reg_loss_of(model, cfg)?,
        train_err_pct: Some(train_err),
        test_err_pct: Some(test.1),
        angle_stats: stats,
    })
}

/// Shuffled mini-batch SGD with the decorrelation step folded into each
/// weight update. Returns one record per epoch, preceded by an epoch-0
/// record of the untrained model, so `epochs` training passes yield
/// `epochs + 1` records.
///
/// Train loss/error for an epoch are the running averages over its training
/// batches (measured by the same forward passes that drive the updates);
/// test metrics are evaluated after the epoch completes.
pub fn train(
    model: &mut MlpModel,
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<Vec<RunRecord>> {
    cfg.validate(model.layers.len())?;
    if train_set.n_examples() == 0 || test_set.n_examples() == 0 {
        return Err(Error::InvalidConfig("empty dataset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = train_set.n_examples();
    let mut records = Vec::with_capacity(cfg.epochs + 1);

    let (init_loss, init_err) = evaluate(model, train_set, cfg.batch_size)?;
    let init_test = evaluate(model, test_set, cfg.batch_size)?;
    records.push(epoch_record(0, model, cfg, init_loss, init_err, init_test)?);

    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_wrong = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let (batch, labels) = slice_batch(train_set, chunk)?;
            let (probs, cache) = forward(model, &batch)?;
            let (l, w) = batch_metrics(&probs, &labels);
            epoch_loss += l;
            epoch_wrong += w;
            let grads = backward(model, &cache, &labels)?;
            for (l_idx, layer) in model.layers.iter_mut().enumerate() {
                if cfg.regularizes(l_idx) {
                    layer.weights = reg::reg_step(
                        &layer.weights,
                        Some(&grads.d_weights[l_idx]),
                        cfg.learning_rate,
                        &cfg.reg,
                    )?;
                } else {
                    layer.weights = layer
                        .weights
                        .add_scaled(&grads.d_weights[l_idx], -cfg.learning_rate)?;
                }
                for (b, g) in layer.bias.iter_mut().zip(&grads.d_bias[l_idx]) {
                    *b -= cfg.learning_rate * g;
                }
            }
        }
        let train_loss = epoch_loss / n as f64;
        let train_err = 100.0 * epoch_wrong as f64 / n as f64;
        let test = evaluate(model, test_set, cfg.batch_size)?;
        records.push(epoch_record(epoch, model, cfg, train_loss, train_err, test)?);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn init_is_deterministic_and_shaped() {
        let a = init_model(&[4, 3, 2], 7).unwrap();
        let b = init_model(&[4, 3, 2], 7).unwrap();
        assert_eq!(a.layers[0].weights, b.layers[0].weights);
        assert_eq!(a.layers[1].weights, b.layers[1].weights);
        assert_eq!(a.layer_sizes(), vec![4, 3, 2]);
        assert_eq!(a.layers[0].activation, Activation::Relu);
        assert_eq!(a.layers[1].activation, Activation::SoftmaxOutput);

        let c = init_model(&[4, 3, 2], 8).unwrap();
        assert!(a.layers[0].weights != c.layers[0].weights);

        let bound = (6.0f64 / 7.0).sqrt();
        assert!(a.layers[0].weights.max_abs() <= bound);
    }

    #[test]
    fn init_rejects_degenerate_shapes() {
        assert!(init_model(&[4], 0).is_err());
        assert!(init_model(&[], 0).is_err());
        assert!(init_model(&[4, 0, 2], 0).is_err());
    }

    #[test]
    fn zero_model_predicts_uniformly() {
        let mut model = init_model(&[3, 4], 0).unwrap();
        model.layers[0].weights = Matrix::zeros(4, 3).unwrap();
        let batch = Matrix::from_rows(&[vec![0.5, -1.0, 2.0]]).unwrap();
        let (probs, _) = forward(&model, &batch).unwrap();
        for &p in probs.row(0) {
            assert_abs_diff_eq!(p, 0.25);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let model = init_model(&[5, 8, 3], 3).unwrap();
        let batch = Matrix::from_rows(&[
            vec![0.1, -0.2, 0.3, 0.0, 1.0],
            vec![2.0, 0.0, -3.0, 0.5, 0.25],
        ])
        .unwrap();
        let (probs, _) = forward(&model, &batch).unwrap();
        for i in 0..probs.rows() {
            assert_abs_diff_eq!(probs.row(i).iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let model = init_model(&[5, 3], 0).unwrap();
        let batch = Matrix::zeros(2, 4).unwrap();
        assert!(forward(&model, &batch).is_err());
    }

    #[test]
    fn backward_rejects_out_of_range_labels() {
        let model = init_model(&[3, 2], 0).unwrap();
        let batch = Matrix::from_rows(&[vec![1.0, 0.0, -1.0]]).unwrap();
        let (_, cache) = forward(&model, &batch).unwrap();
        assert!(backward(&model, &cache, &[2]).is_err());
        assert!(backward(&model, &cache, &[0, 1]).is_err());
    }

    #[test]
    fn zero_model_output_bias_gradient_is_probs_minus_onehot() {
        let mut model = init_model(&[2, 3], 0).unwrap();
        model.layers[0].weights = Matrix::zeros(3, 2).unwrap();
        let batch = Matrix::from_rows(&[vec![0.7, -0.4]]).unwrap();
        let (_, cache) = forward(&model, &batch).unwrap();
        let grads = backward(&model, &cache, &[1]).unwrap();
        let third = 1.0 / 3.0;
        assert_abs_diff_eq!(grads.d_bias[0][0], third, epsilon = 1e-12);
        assert_abs_diff_eq!(grads.d_bias[0][1], third - 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(grads.d_bias[0][2], third, epsilon = 1e-12);
    }

    #[test]
    fn duplicated_batch_rows_leave_mean_gradient_unchanged() {
        let model = init_model(&[4, 5, 3], 11).unwrap();
        let row = vec![0.2, -0.7, 1.1, 0.05];
        let single = Matrix::from_rows(&[row.clone()]).unwrap();
        let doubled = Matrix::from_rows(&[row.clone(), row]).unwrap();
        let (_, c1) = forward(&model, &single).unwrap();
        let (_, c2) = forward(&model, &doubled).unwrap();
        let g1 = backward(&model, &c1, &[2]).unwrap();
        let g2 = backward(&model, &c2, &[2, 2]).unwrap();
        for l in 0..2 {
            assert!(g1.d_weights[l].max_abs_diff(&g2.d_weights[l]) < 1e-15);
        }
    }
}

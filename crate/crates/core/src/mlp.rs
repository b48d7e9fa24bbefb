//! Multilayer perceptron: rectified hidden layers, softmax output, trained on
//! mean cross-entropy with mini-batch Adam.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::ranking::RankedPrediction;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden_layers: usize,
    pub nodes_per_layer: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden_layers: 3,
            nodes_per_layer: 800,
            epochs: 600,
            learning_rate: 0.001,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("mlp: {what}")));
        if self.hidden_layers == 0 {
            return bad("hidden_layers must be >= 1");
        }
        if self.nodes_per_layer == 0 {
            return bad("nodes_per_layer must be >= 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and > 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

/// Affine layer `x W + b` with `W` of shape `fan_in × fan_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros_like(other: &Layer) -> Layer {
        Layer {
            weights: Array2::zeros(other.weights.raw_dim()),
            bias: Array1::zeros(other.bias.raw_dim()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    activation: Activation,
    layers: Vec<Layer>,
}

/// He-normal weights (variance `2 / fan_in`), zero biases.
pub fn init_mlp(cfg: &MlpConfig, input_dim: usize, n_classes: usize) -> Result<MlpModel> {
    cfg.validate()?;
    if input_dim == 0 || n_classes == 0 {
        return Err(Error::InvalidParameter(
            "mlp: input and output widths must be >= 1".into(),
        ));
    }
    let mut widths = vec![input_dim];
    widths.extend(std::iter::repeat_n(cfg.nodes_per_layer, cfg.hidden_layers));
    widths.push(n_classes);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let layers = widths
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            Layer {
                weights: Array2::from_shape_simple_fn((fan_in, fan_out), || normal.sample(&mut rng)),
                bias: Array1::zeros(fan_out),
            }
        })
        .collect();
    Ok(MlpModel {
        activation: Activation::Relu,
        layers,
    })
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let top = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - top).exp());
        let total = row.sum();
        row /= total;
    }
}

fn log_sum_exp(row: ndarray::ArrayView1<f64>) -> f64 {
    let top = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    top + row.iter().map(|v| (v - top).exp()).sum::<f64>().ln()
}

fn as_view(x: &Matrix) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((x.rows(), x.cols()), x.as_slice()).expect("row-major shape")
}

impl MlpModel {
    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Layer widths from input to output.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(|l| l.bias.len()));
        w
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().expect("at least one layer").bias.len()
    }

    pub fn zero_parameters(&mut self) {
        for l in &mut self.layers {
            l.weights.fill(0.0);
            l.bias.fill(0.0);
        }
    }

    /// Output-layer logits plus every layer's input activations.
    fn forward_cached(&self, x: ArrayView2<f64>) -> (Array2<f64>, Vec<Array2<f64>>) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = a.dot(&l.weights);
            z += &l.bias;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            inputs.push(a);
            a = z;
        }
        (a, inputs)
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got,
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        let view = ArrayView2::from_shape((1, x.len()), x).expect("one row");
        let (mut z, _) = self.forward_cached(view);
        softmax_rows(&mut z);
        Ok(z.into_raw_vec_and_offset().0)
    }

    /// Class probabilities, one row per input row.
    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        self.check_dim(x.cols())?;
        let (mut z, _) = self.forward_cached(as_view(x));
        softmax_rows(&mut z);
        let (rows, cols) = z.dim();
        let data = z.as_standard_layout().iter().copied().collect();
        Matrix::from_vec(rows, cols, data)
    }

    pub fn predict(&self, x: &[f64]) -> Result<RankedPrediction> {
        Ok(RankedPrediction::from_scores(&self.forward(x)?))
    }

    pub fn predict_batch(&self, x: &Matrix) -> Result<Vec<RankedPrediction>> {
        let p = self.forward_batch(x)?;
        Ok(p.iter_rows().map(RankedPrediction::from_scores).collect())
    }

    /// Mean cross-entropy on a batch and its exact gradient for every layer.
    pub fn loss_and_gradients(&self, x: ArrayView2<f64>, y: &[usize]) -> Result<(f64, Vec<Layer>)> {
        if x.nrows() == 0 {
            return Err(Error::Empty("mlp batch"));
        }
        if x.nrows() != y.len() {
            return Err(Error::Dimension {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        self.check_dim(x.ncols())?;
        let v = self.n_classes();
        if let Some(&l) = y.iter().find(|&&l| l >= v) {
            return Err(Error::InvalidParameter(format!("label {l} outside 0..{v}")));
        }
        let b = x.nrows() as f64;
        let (logits, inputs) = self.forward_cached(x);
        let loss = logits
            .rows()
            .into_iter()
            .zip(y)
            .map(|(row, &label)| log_sum_exp(row) - row[label])
            .sum::<f64>()
            / b;

        let mut delta = logits;
        softmax_rows(&mut delta);
        for (mut row, &label) in delta.rows_mut().into_iter().zip(y) {
            row[label] -= 1.0;
        }
        delta /= b;

        let mut grads: Vec<Layer> = self.layers.iter().map(Layer::zeros_like).collect();
        for i in (0..self.layers.len()).rev() {
            let input = &inputs[i];
            grads[i].weights = input.t().dot(&delta);
            grads[i].bias = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut back = delta.dot(&self.layers[i].weights.t());
                // the input of layer i is the rectified output of layer i-1
                ndarray::Zip::from(&mut back)
                    .and(input)
                    .for_each(|d, &a| {
                        if a <= 0.0 {
                            *d = 0.0;
                        }
                    });
                delta = back;
            }
        }
        Ok((loss, grads))
    }

    /// Mean cross-entropy over a full data set.
    pub fn loss(&self, x: &Matrix, y: &[usize]) -> Result<f64> {
        Ok(self.loss_and_gradients(as_view(x), y)?.0)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::ModelFormat("mlp has no layers".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.weights.ncols() != l.bias.len() {
                return Err(Error::ModelFormat(format!("mlp layer {i}: bias width")));
            }
            if i > 0 && self.layers[i - 1].bias.len() != l.weights.nrows() {
                return Err(Error::ModelFormat(format!("mlp layer {i}: input width")));
            }
            if l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::ModelFormat(format!("mlp layer {i}: non-finite parameter")));
            }
        }
        Ok(())
    }
}

struct Adam {
    first: Vec<Layer>,
    second: Vec<Layer>,
    step: i32,
    rate: f64,
}

impl Adam {
    fn new(model: &MlpModel, rate: f64) -> Self {
        let zeros: Vec<Layer> = model.layers.iter().map(Layer::zeros_like).collect();
        Self {
            first: zeros.clone(),
            second: zeros,
            step: 0,
            rate,
        }
    }

    fn update(&mut self, model: &mut MlpModel, grads: &[Layer]) {
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step);
        let c2 = 1.0 - BETA2.powi(self.step);
        let rate = self.rate;
        let apply = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= rate * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        };
        for (((layer, g), m), v) in model
            .layers
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            ndarray::Zip::from(&mut layer.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .and(&g.weights)
                .for_each(|p, m, v, &g| apply(p, m, v, g));
            ndarray::Zip::from(&mut layer.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(|p, m, v, &g| apply(p, m, v, g));
        }
    }
}

/// A trained network and its mean training loss per epoch.
#[derive(Debug, Clone)]
pub struct MlpFit {
    pub model: MlpModel,
    pub losses: Vec<f64>,
}

pub fn train_mlp(model: MlpModel, x: &Matrix, y: &[usize], cfg: &MlpConfig) -> Result<MlpFit> {
    train_mlp_with(model, x, y, cfg, |_, _| {})
}

/// Like [`train_mlp`], calling `on_epoch(epochs_done, model)` after every epoch.
pub fn train_mlp_with<F>(
    mut model: MlpModel,
    x: &Matrix,
    y: &[usize],
    cfg: &MlpConfig,
    mut on_epoch: F,
) -> Result<MlpFit>
where
    F: FnMut(usize, &MlpModel),
{
    cfg.validate()?;
    if x.rows() == 0 {
        return Err(Error::Empty("training set"));
    }
    if x.rows() != y.len() {
        return Err(Error::Dimension {
            expected: x.rows(),
            got: y.len(),
        });
    }
    if !x.is_finite() {
        return Err(Error::Numeric("non-finite feature in mlp input".into()));
    }
    let data = as_view(x);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut adam = Adam::new(&model, cfg.learning_rate);
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = data.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
            let (loss, grads) = model.loss_and_gradients(xb.view(), &yb)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "mlp loss became non-finite in epoch {}",
                    epoch + 1
                )));
            }
            adam.update(&mut model, &grads);
            total += loss * chunk.len() as f64;
        }
        losses.push(total / x.rows() as f64);
        on_epoch(epoch + 1, &model);
    }
    Ok(MlpFit { model, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small_cfg(seed: u64) -> MlpConfig {
        MlpConfig {
            hidden_layers: 1,
            nodes_per_layer: 8,
            epochs: 50,
            learning_rate: 0.01,
            batch_size: 8,
            seed,
        }
    }

    #[test]
    fn init_is_reproducible() {
        let cfg = small_cfg(4);
        assert_eq!(init_mlp(&cfg, 5, 3).unwrap(), init_mlp(&cfg, 5, 3).unwrap());
        assert_ne!(init_mlp(&cfg, 5, 3).unwrap(), init_mlp(&small_cfg(5), 5, 3).unwrap());
        assert_eq!(init_mlp(&cfg, 5, 3).unwrap().widths(), vec![5, 8, 3]);
    }

    #[test]
    fn init_variance_tracks_fan_in() {
        let cfg = MlpConfig { hidden_layers: 1, nodes_per_layer: 100, ..MlpConfig::default() };
        let m = init_mlp(&cfg, 100, 2).unwrap();
        let w = &m.layers()[0].weights;
        let n = w.len() as f64;
        let mean = w.sum() / n;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!((var / 0.02 - 1.0).abs() < 0.2, "variance {var}");
        assert!(m.layers()[0].bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn zero_parameters_give_uniform_output() {
        let mut m = init_mlp(&small_cfg(1), 3, 4).unwrap();
        m.zero_parameters();
        assert_eq!(m.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.25; 4]);
    }

    #[test]
    fn hand_traced_network() {
        let mut m = init_mlp(&MlpConfig { hidden_layers: 1, nodes_per_layer: 2, ..MlpConfig::default() }, 2, 2).unwrap();
        m.layers_mut()[0] = Layer { weights: array![[1.0, -1.0], [2.0, 0.5]], bias: array![0.0, 0.5] };
        m.layers_mut()[1] = Layer { weights: array![[1.0, 0.0], [0.0, 1.0]], bias: array![0.0, 1.0] };
        // hidden pre-activation [1+2, -1+0.5+0.5] = [3, 0]; logits [3, 1]
        let p = m.forward(&[1.0, 1.0]).unwrap();
        let want = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((p[0] - want).abs() < 1e-15);
        assert!((p[1] - (1.0 - want)).abs() < 1e-15);
    }

    #[test]
    fn uniform_output_gradient_is_p_minus_onehot() {
        let mut m = init_mlp(&small_cfg(2), 3, 4).unwrap();
        m.zero_parameters();
        let x = array![[0.0, 0.0, 0.0]];
        let (loss, g) = m.loss_and_gradients(x.view(), &[2]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-15);
        assert_eq!(g[1].bias, array![0.25, 0.25, -0.75, 0.25]);
    }

    #[test]
    fn confident_prediction_has_near_zero_loss() {
        let mut m = init_mlp(&MlpConfig { hidden_layers: 1, nodes_per_layer: 1, ..MlpConfig::default() }, 1, 2).unwrap();
        m.zero_parameters();
        m.layers_mut()[1].bias = array![50.0, -50.0];
        let (loss, _) = m.loss_and_gradients(array![[1.0]].view(), &[0]).unwrap();
        assert!(loss < 1e-40);
    }

    #[test]
    fn separable_blobs_are_learned() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..200 {
            let c = i % 2;
            let centre = if c == 0 { -2.0 } else { 2.0 };
            rows.push([centre + noise.sample(&mut rng), centre + noise.sample(&mut rng)]);
            y.push(c);
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let cfg = small_cfg(7);
        let fit = train_mlp(init_mlp(&cfg, 2, 2).unwrap(), &x, &y, &cfg).unwrap();
        let preds = fit.model.predict_batch(&x).unwrap();
        let hits = preds.iter().zip(&y).filter(|(p, &t)| p.first() == Some(t)).count();
        assert!(hits as f64 / 200.0 >= 0.99);
        assert_eq!(fit.losses.len(), 50);
        assert!(fit.losses.last().unwrap() < &fit.losses[0]);
    }

    #[test]
    fn training_is_deterministic_and_snapshots_match() {
        let x = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0], [1.0, 1.0], [0.0, 0.0], [0.5, 0.2]]).unwrap();
        let y = [0, 1, 1, 0, 1];
        let cfg = MlpConfig { epochs: 6, ..small_cfg(9) };
        let a = train_mlp(init_mlp(&cfg, 2, 2).unwrap(), &x, &y, &cfg).unwrap();
        let b = train_mlp(init_mlp(&cfg, 2, 2).unwrap(), &x, &y, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        let mut at3 = None;
        train_mlp_with(init_mlp(&cfg, 2, 2).unwrap(), &x, &y, &cfg, |e, m| {
            if e == 3 {
                at3 = Some(m.clone());
            }
        })
        .unwrap();
        let short = MlpConfig { epochs: 3, ..cfg };
        let c = train_mlp(init_mlp(&short, 2, 2).unwrap(), &x, &y, &short).unwrap();
        assert_eq!(at3.unwrap(), c.model);
    }

    #[test]
    fn bad_inputs_rejected() {
        assert!(init_mlp(&MlpConfig { epochs: 0, ..MlpConfig::default() }, 2, 2).is_err());
        assert!(init_mlp(&MlpConfig { nodes_per_layer: 0, ..MlpConfig::default() }, 2, 2).is_err());
        let m = init_mlp(&small_cfg(0), 2, 2).unwrap();
        assert!(m.forward(&[1.0]).is_err());
        assert!(m.loss_and_gradients(array![[1.0, 2.0]].view(), &[2]).is_err());
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(m.loss_and_gradients(empty.view(), &[]).is_err());
    }
}

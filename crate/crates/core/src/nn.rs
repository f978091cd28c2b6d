//! Bias-free feed-forward networks `f(z) = P_L ζ(… P_2 ζ(P_1 z))`.
//!
//! The engine is deliberately small: a fixed MLP topology, exact reverse-mode
//! gradients, Adam, and the per-layer Frobenius norms that the bound
//! calculators in [`crate::diagnostics`] consume.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, NicaError, Result};
use crate::rng::{self, Rng};

/// Elementwise nonlinearity. Every variant is 1-Lipschitz with `ζ(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Activation {
    LeakyRelu { slope: f64 },
    Relu,
    Identity,
}

impl Default for Activation {
    fn default() -> Self {
        Activation::LeakyRelu { slope: 0.2 }
    }
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::LeakyRelu { slope } => {
                if v >= 0.0 {
                    v
                } else {
                    slope * v
                }
            }
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }

    /// Derivative; the ReLU subgradient at 0 is 0.
    #[inline]
    pub fn derivative(self, v: f64) -> f64 {
        match self {
            Activation::LeakyRelu { slope } => {
                if v >= 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Relu => {
                if v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            Activation::LeakyRelu { slope } if !(slope > 0.0 && slope < 1.0) => Err(
                NicaError::invalid(format!("leaky-relu slope must lie in (0,1), got {slope}")),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    pub final_layer_linear: bool,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, activation: Activation, final_layer_linear: bool) -> Result<Self> {
        let spec = MlpSpec {
            layer_widths,
            activation,
            final_layer_linear,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(NicaError::invalid("an MLP needs at least input and output widths"));
        }
        if self.layer_widths.contains(&0) {
            return Err(NicaError::invalid("layer widths must be positive"));
        }
        self.activation.validate()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    /// Whether the activation follows layer `i` (0-based).
    fn activated(&self, layer: usize) -> bool {
        layer + 1 < self.num_layers() || !self.final_layer_linear
    }
}

/// Weights `P_i` of shape `D_i × D_{i-1}`, one per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub spec: MlpSpec,
    pub weights: Vec<Array2<f64>>,
}

/// Intermediate values kept by a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Layer inputs: `inputs[0]` is the batch itself.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation values per layer.
    pre: Vec<Array2<f64>>,
}

impl MlpParams {
    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let weights = spec
            .layer_widths
            .windows(2)
            .map(|w| Array2::zeros((w[1], w[0])))
            .collect();
        Ok(MlpParams { spec, weights })
    }

    /// i.i.d. `N(0, 1/fan_in)` initialization.
    pub fn init(spec: MlpSpec, rng: &mut Rng) -> Result<Self> {
        let mut params = Self::zeros(spec)?;
        for w in &mut params.weights {
            let scale = 1.0 / (w.ncols() as f64).sqrt();
            w.mapv_inplace(|_| rng::gaussian(rng) * scale);
        }
        Ok(params)
    }

    /// Builds params from explicit matrices, checking that the shapes chain.
    pub fn from_weights(spec: MlpSpec, weights: Vec<Array2<f64>>) -> Result<Self> {
        spec.validate()?;
        check_dim("layer count", spec.num_layers(), weights.len())?;
        for (i, w) in weights.iter().enumerate() {
            check_dim("weight rows", spec.layer_widths[i + 1], w.nrows())?;
            check_dim("weight cols", spec.layer_widths[i], w.ncols())?;
        }
        Ok(MlpParams { spec, weights })
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum()
    }

    pub fn frobenius_norms(&self) -> Vec<f64> {
        frobenius_norms(self)
    }

    pub fn forward(&self, input: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_dim("forward input", self.spec.input_dim(), input.len())?;
        let mut act = input.to_owned();
        for (i, w) in self.weights.iter().enumerate() {
            act = w.dot(&act);
            if self.spec.activated(i) {
                let a = self.spec.activation;
                act.mapv_inplace(|v| a.apply(v));
            }
        }
        Ok(act)
    }

    /// Forward pass over a batch of rows (`B × D_0`), returning `B × D_L`.
    pub fn forward_batch(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim("forward batch input", self.spec.input_dim(), batch.ncols())?;
        let mut act = batch.to_owned();
        for (i, w) in self.weights.iter().enumerate() {
            act = act.dot(&w.t());
            if self.spec.activated(i) {
                let a = self.spec.activation;
                act.mapv_inplace(|v| a.apply(v));
            }
        }
        Ok(act)
    }

    /// Forward pass that keeps what [`MlpParams::backward_batch`] needs.
    pub fn forward_cached(&self, batch: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        check_dim("forward batch input", self.spec.input_dim(), batch.ncols())?;
        let layers = self.spec.num_layers();
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers);
        let mut act = batch.to_owned();
        for (i, w) in self.weights.iter().enumerate() {
            let z = act.dot(&w.t());
            inputs.push(act);
            act = if self.spec.activated(i) {
                let a = self.spec.activation;
                z.mapv(|v| a.apply(v))
            } else {
                z.clone()
            };
            pre.push(z);
        }
        Ok((act, ForwardCache { inputs, pre }))
    }

    /// Reverse pass for a batch. `output_grad` is `B × D_L`.
    ///
    /// Returns the gradient of `Σ_rows ⟨output_grad_row, f(row)⟩` with respect
    /// to every weight matrix, and with respect to the batch rows.
    pub fn backward_batch(
        &self,
        cache: &ForwardCache,
        output_grad: ArrayView2<f64>,
    ) -> Result<(Vec<Array2<f64>>, Array2<f64>)> {
        check_dim("output grad cols", self.spec.output_dim(), output_grad.ncols())?;
        check_dim("output grad rows", cache.inputs[0].nrows(), output_grad.nrows())?;
        let layers = self.spec.num_layers();
        let mut grads = vec![Array2::zeros((0, 0)); layers];
        let mut delta = output_grad.to_owned();
        for i in (0..layers).rev() {
            if self.spec.activated(i) {
                let a = self.spec.activation;
                ndarray::Zip::from(&mut delta)
                    .and(&cache.pre[i])
                    .for_each(|d, &z| *d *= a.derivative(z));
            }
            grads[i] = delta.t().dot(&cache.inputs[i]);
            delta = delta.dot(&self.weights[i]);
        }
        Ok((grads, delta))
    }

    /// Single-vector reverse pass.
    pub fn backward(
        &self,
        input: ArrayView1<f64>,
        output_grad: ArrayView1<f64>,
    ) -> Result<(Vec<Array2<f64>>, Array1<f64>)> {
        check_dim("backward input", self.spec.input_dim(), input.len())?;
        check_dim("backward output grad", self.spec.output_dim(), output_grad.len())?;
        let batch = input.insert_axis(Axis(0));
        let (_, cache) = self.forward_cached(batch)?;
        let (grads, input_grad) = self.backward_batch(&cache, output_grad.insert_axis(Axis(0)))?;
        Ok((grads, input_grad.row(0).to_owned()))
    }
}

pub fn forward(params: &MlpParams, input: ArrayView1<f64>) -> Result<Array1<f64>> {
    params.forward(input)
}

pub fn backward(
    params: &MlpParams,
    input: ArrayView1<f64>,
    output_grad: ArrayView1<f64>,
) -> Result<(Vec<Array2<f64>>, Array1<f64>)> {
    params.backward(input, output_grad)
}

pub fn frobenius_norms(params: &MlpParams) -> Vec<f64> {
    params
        .weights
        .iter()
        .map(|w| w.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

/// Adam optimizer state for an ordered list of weight matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<Array2<f64>>,
    pub second_moment: Vec<Array2<f64>>,
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub const DEFAULT_LEARNING_RATE: f64 = 5e-4;

    /// Zero moments shaped like `shapes`.
    pub fn new<'a>(shapes: impl IntoIterator<Item = &'a Array2<f64>>, learning_rate: f64) -> Self {
        let first_moment: Vec<Array2<f64>> = shapes.into_iter().map(|w| Array2::zeros(w.raw_dim())).collect();
        let second_moment = first_moment.clone();
        AdamState {
            first_moment,
            second_moment,
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn for_params(params: &MlpParams, learning_rate: f64) -> Self {
        Self::new(&params.weights, learning_rate)
    }

    /// One bias-corrected Adam update over `weights`.
    ///
    /// Gradients are checked for finiteness before any weight is touched.
    pub fn step(&mut self, weights: &mut [&mut Array2<f64>], grads: &[Array2<f64>]) -> Result<()> {
        check_dim("adam parameter groups", self.first_moment.len(), weights.len())?;
        check_dim("adam gradient groups", weights.len(), grads.len())?;
        for (layer, (w, g)) in weights.iter().zip(grads).enumerate() {
            if w.shape() != g.shape() || w.shape() != self.first_moment[layer].shape() {
                return Err(NicaError::invalid(format!("adam shape mismatch in group {layer}")));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(NicaError::NonFiniteGradient { layer });
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        let lr = self.learning_rate;
        let eps = self.epsilon;
        for (i, w) in weights.iter_mut().enumerate() {
            ndarray::Zip::from(&mut **w)
                .and(&mut self.first_moment[i])
                .and(&mut self.second_moment[i])
                .and(&grads[i])
                .for_each(|w, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
        Ok(())
    }
}

pub fn adam_step(params: &mut MlpParams, grads: &[Array2<f64>], state: &mut AdamState) -> Result<()> {
    let mut refs: Vec<&mut Array2<f64>> = params.weights.iter_mut().collect();
    state.step(&mut refs, grads)
}

/// On-disk form of one network: row-major flat weights per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpRecord {
    pub spec: MlpSpec,
    pub weights: Vec<Vec<f64>>,
}

impl From<&MlpParams> for MlpRecord {
    fn from(p: &MlpParams) -> Self {
        MlpRecord {
            spec: p.spec.clone(),
            weights: p.weights.iter().map(|w| w.iter().copied().collect()).collect(),
        }
    }
}

impl TryFrom<MlpRecord> for MlpParams {
    type Error = NicaError;

    fn try_from(rec: MlpRecord) -> Result<Self> {
        rec.spec.validate()?;
        check_dim("record layer count", rec.spec.num_layers(), rec.weights.len())?;
        let weights = rec
            .weights
            .into_iter()
            .enumerate()
            .map(|(i, flat)| {
                let shape = (rec.spec.layer_widths[i + 1], rec.spec.layer_widths[i]);
                Array2::from_shape_vec(shape, flat)
                    .map_err(|e| NicaError::invalid(format!("layer {i} weights: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        MlpParams::from_weights(rec.spec, weights)
    }
}

/// Draws a matrix with i.i.d. standard Gaussian entries.
pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(rand_distr::StandardNormal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn spec(widths: &[usize], act: Activation, linear: bool) -> MlpSpec {
        MlpSpec::new(widths.to_vec(), act, linear).unwrap()
    }

    #[test]
    fn spec_rejects_bad_shapes() {
        assert!(MlpSpec::new(vec![3], Activation::Relu, true).is_err());
        assert!(MlpSpec::new(vec![3, 0, 1], Activation::Relu, true).is_err());
        assert!(MlpSpec::new(vec![3, 1], Activation::LeakyRelu { slope: 1.5 }, true).is_err());
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let p = MlpParams::zeros(spec(&[3, 5, 2], Activation::default(), true)).unwrap();
        let out = p.forward(array![1.0, -2.0, 3.0].view()).unwrap();
        assert_eq!(out, array![0.0, 0.0]);
    }

    #[test]
    fn identity_net_passes_input_through() {
        let p = MlpParams::from_weights(spec(&[3, 3], Activation::Identity, false), vec![Array2::eye(3)]).unwrap();
        let v = array![0.5, -1.25, 4.0];
        assert_eq!(p.forward(v.view()).unwrap(), v);
    }

    #[test]
    fn two_layer_relu_hand_value() {
        let p = MlpParams::from_weights(
            spec(&[2, 1, 1], Activation::Relu, true),
            vec![array![[1.0, 1.0]], array![[2.0]]],
        )
        .unwrap();
        assert_eq!(p.forward(array![1.0, -1.0].view()).unwrap(), array![0.0]);
        assert_eq!(p.forward(array![1.0, 2.0].view()).unwrap(), array![6.0]);
    }

    #[test]
    fn forward_rejects_wrong_input_len() {
        let p = MlpParams::zeros(spec(&[3, 2], Activation::Relu, true)).unwrap();
        assert!(matches!(
            p.forward(array![1.0].view()),
            Err(NicaError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn batch_and_single_forward_agree() {
        let mut rng = rng::seeded(11);
        let p = MlpParams::init(spec(&[3, 6, 6, 2], Activation::default(), true), &mut rng).unwrap();
        let batch = gaussian_matrix(7, 3, &mut rng);
        let out = p.forward_batch(batch.view()).unwrap();
        for (row, o) in batch.outer_iter().zip(out.outer_iter()) {
            let single = p.forward(row).unwrap();
            for (a, b) in single.iter().zip(o) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_zero_output_grad_gives_zero() {
        let mut rng = rng::seeded(2);
        let p = MlpParams::init(spec(&[2, 4, 1], Activation::Relu, true), &mut rng).unwrap();
        let (grads, gin) = p.backward(array![0.3, -0.7].view(), array![0.0].view()).unwrap();
        assert!(grads.iter().all(|g| g.iter().all(|&v| v == 0.0)));
        assert!(gin.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_linear_is_outer_product() {
        let w = array![[1.0, 2.0, 3.0], [-1.0, 0.5, 0.0]];
        let p = MlpParams::from_weights(spec(&[3, 2], Activation::Relu, true), vec![w.clone()]).unwrap();
        let x = array![0.2, -0.4, 1.5];
        let g = array![2.0, -3.0];
        let (grads, gin) = p.backward(x.view(), g.view()).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(grads[0][[i, j]], g[i] * x[j]);
            }
        }
        assert_eq!(gin, w.t().dot(&g));
    }

    #[test]
    fn frobenius_examples() {
        let p = MlpParams::zeros(spec(&[2, 3, 1], Activation::Relu, true)).unwrap();
        assert_eq!(p.frobenius_norms(), vec![0.0, 0.0]);
        let p = MlpParams::from_weights(spec(&[2, 2], Activation::Relu, true), vec![Array2::eye(2)]).unwrap();
        assert!((p.frobenius_norms()[0] - 2f64.sqrt()).abs() < 1e-15);
        let p = MlpParams::from_weights(spec(&[3, 2], Activation::Relu, true), vec![Array2::ones((2, 3))]).unwrap();
        assert!((p.frobenius_norms()[0] - 6f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let mut rng = rng::seeded(5);
        let mut p = MlpParams::init(spec(&[2, 3, 1], Activation::Relu, true), &mut rng).unwrap();
        let before = p.clone();
        let mut st = AdamState::for_params(&p, 5e-4);
        let grads: Vec<_> = p.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect();
        adam_step(&mut p, &grads, &mut st).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut p = MlpParams::from_weights(spec(&[1, 1], Activation::Identity, true), vec![array![[0.0]]]).unwrap();
        let mut st = AdamState::for_params(&p, 5e-4);
        adam_step(&mut p, &[array![[1.0]]], &mut st).unwrap();
        // m̂ = v̂ = 1 after bias correction, so the move is lr / (1 + ε).
        let expected = -5e-4 / (1.0 + 1e-8);
        assert!((p.weights[0][[0, 0]] - expected).abs() < 1e-15);
        let after_one = p.weights[0][[0, 0]];
        adam_step(&mut p, &[array![[1.0]]], &mut st).unwrap();
        assert!(p.weights[0][[0, 0]] < after_one);
        assert_eq!(st.step_count, 2);
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut p = MlpParams::zeros(spec(&[1, 1], Activation::Identity, true)).unwrap();
        let mut st = AdamState::for_params(&p, 5e-4);
        let err = adam_step(&mut p, &[array![[f64::NAN]]], &mut st).unwrap_err();
        assert!(matches!(err, NicaError::NonFiniteGradient { layer: 0 }));
        assert_eq!(st.step_count, 0);
    }

    #[test]
    fn record_round_trip_is_bit_exact() {
        let mut rng = rng::seeded(9);
        let p = MlpParams::init(spec(&[3, 5, 2], Activation::default(), true), &mut rng).unwrap();
        let json = serde_json::to_string(&MlpRecord::from(&p)).unwrap();
        let back: MlpParams = serde_json::from_str::<MlpRecord>(&json).unwrap().try_into().unwrap();
        for (a, b) in p.weights.iter().zip(&back.weights) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn init_is_deterministic() {
        let s = spec(&[4, 8, 8, 2], Activation::Relu, true);
        let a = MlpParams::init(s.clone(), &mut rng::seeded(42)).unwrap();
        let b = MlpParams::init(s, &mut rng::seeded(42)).unwrap();
        assert_eq!(a, b);
    }
}

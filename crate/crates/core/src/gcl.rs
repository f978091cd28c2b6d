//! Generalized contrastive learning: the regression function
//! `r(x, u) = Σ_i φ_i(h_i(x), u)` and its logistic training loop.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, NicaError, Result};
use crate::genmodel::SampleBatch;
use crate::nn::{Activation, AdamState, MlpParams, MlpRecord, MlpSpec};
use crate::rng::{self, derive_seed};

pub const DEFAULT_WIDTHS: [usize; 8] = [4, 8, 16, 32, 64, 128, 256, 512];
pub const HIDDEN_LAYERS: usize = 3;

/// Feature extractor `h` plus one head `φ_i` per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct GclModel {
    pub h: MlpParams,
    pub phi: Vec<MlpParams>,
}

impl GclModel {
    pub fn feature_spec(input_dim: usize, feature_dim: usize, width: usize, activation: Activation) -> Result<MlpSpec> {
        let mut widths = vec![input_dim];
        widths.extend(std::iter::repeat_n(width, HIDDEN_LAYERS));
        widths.push(feature_dim);
        MlpSpec::new(widths, activation, true)
    }

    pub fn head_spec(aux_dim: usize, width: usize, activation: Activation) -> Result<MlpSpec> {
        let mut widths = vec![1 + aux_dim];
        widths.extend(std::iter::repeat_n(width, HIDDEN_LAYERS));
        widths.push(1);
        MlpSpec::new(widths, activation, true)
    }

    /// Random model with `D → R → R → R → D` features and `(1+D_u) → R → R → R → 1`
    /// heads. With `zero_head_output` the last head layers start at zero, so
    /// `r ≡ 0` initially.
    pub fn init(
        dim: usize,
        aux_dim: usize,
        width: usize,
        activation: Activation,
        zero_head_output: bool,
        seed: u64,
    ) -> Result<Self> {
        Self::init_with_features(dim, dim, aux_dim, width, activation, zero_head_output, seed)
    }

    /// As [`GclModel::init`] with `h: ℝ^input_dim → ℝ^feature_dim`, for
    /// observations of higher dimension than the latent.
    pub fn init_with_features(
        input_dim: usize,
        feature_dim: usize,
        aux_dim: usize,
        width: usize,
        activation: Activation,
        zero_head_output: bool,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = rng::seeded(seed);
        let h = MlpParams::init(Self::feature_spec(input_dim, feature_dim, width, activation)?, &mut rng)?;
        let mut phi = Vec::with_capacity(feature_dim);
        for _ in 0..feature_dim {
            let mut head = MlpParams::init(Self::head_spec(aux_dim, width, activation)?, &mut rng)?;
            if zero_head_output {
                head.weights.last_mut().unwrap().fill(0.0);
            }
            phi.push(head);
        }
        Self::from_parts(h, phi)
    }

    pub fn from_parts(h: MlpParams, phi: Vec<MlpParams>) -> Result<Self> {
        check_dim("head count", h.spec.output_dim(), phi.len())?;
        let aux_in = phi.first().map(|p| p.spec.input_dim()).unwrap_or(1);
        if aux_in == 0 {
            return Err(NicaError::invalid("head input must include the feature"));
        }
        for p in &phi {
            check_dim("head input", aux_in, p.spec.input_dim())?;
            check_dim("head output", 1, p.spec.output_dim())?;
        }
        Ok(GclModel { h, phi })
    }

    /// Observation dimension.
    pub fn dim(&self) -> usize {
        self.h.spec.input_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.h.spec.output_dim()
    }

    pub fn aux_dim(&self) -> usize {
        self.phi[0].spec.input_dim() - 1
    }

    pub fn num_params(&self) -> usize {
        self.h.num_params() + self.phi.iter().map(MlpParams::num_params).sum::<usize>()
    }

    fn check_inputs(&self, x: ArrayView2<f64>, u: ArrayView2<f64>) -> Result<()> {
        check_dim("x columns", self.dim(), x.ncols())?;
        check_dim("u columns", self.aux_dim(), u.ncols())?;
        check_dim("u rows", x.nrows(), u.nrows())
    }

    pub fn regress(&self, x: ArrayView1<f64>, u: ArrayView1<f64>) -> Result<f64> {
        let r = self.regress_batch(x.insert_axis(Axis(0)), u.insert_axis(Axis(0)))?;
        Ok(r[0])
    }

    pub fn regress_batch(&self, x: ArrayView2<f64>, u: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.check_inputs(x, u)?;
        let y = self.h.forward_batch(x)?;
        let mut r = Array1::zeros(x.nrows());
        let mut head_in = head_input(u);
        for (i, head) in self.phi.iter().enumerate() {
            head_in.column_mut(0).assign(&y.column(i));
            r += &head.forward_batch(head_in.view())?.column(0);
        }
        Ok(r)
    }

    pub fn extract_features(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.h.forward_batch(x)
    }

    pub fn empirical_loss(&self, batch: &SampleBatch) -> Result<f64> {
        let r = self.regress_batch(batch.x.view(), batch.u.view())?;
        Ok(mean_logistic_loss(r.view(), &batch.d))
    }

    pub fn contrastive_accuracy(&self, batch: &SampleBatch) -> Result<f64> {
        let r = self.regress_batch(batch.x.view(), batch.u.view())?;
        let hits = r
            .iter()
            .zip(&batch.d)
            .filter(|(&r, &d)| (r > 0.0) == (d > 0))
            .count();
        Ok(hits as f64 / batch.len().max(1) as f64)
    }

    /// Mean logistic loss on the rows and its gradient for every weight, in
    /// the order of [`GclModel::weights_mut`].
    pub fn loss_and_grads(
        &self,
        x: ArrayView2<f64>,
        u: ArrayView2<f64>,
        d: &[i8],
    ) -> Result<(f64, Vec<Array2<f64>>)> {
        self.check_inputs(x, u)?;
        check_dim("label count", x.nrows(), d.len())?;
        let b = x.nrows();
        let (y, h_cache) = self.h.forward_cached(x)?;
        let mut head_in = head_input(u);
        let mut caches = Vec::with_capacity(self.phi.len());
        let mut r = Array1::<f64>::zeros(b);
        for (i, head) in self.phi.iter().enumerate() {
            head_in.column_mut(0).assign(&y.column(i));
            let (out, cache) = head.forward_cached(head_in.view())?;
            r += &out.column(0);
            caches.push(cache);
        }
        let loss = mean_logistic_loss(r.view(), d);
        let scale = 1.0 / b as f64;
        let dr = Array2::from_shape_fn((b, 1), |(row, _)| logistic_loss_grad(r[row], d[row]) * scale);

        let mut head_grads = Vec::with_capacity(self.phi.len());
        let mut dy = Array2::<f64>::zeros((b, self.feature_dim()));
        for (i, (head, cache)) in self.phi.iter().zip(&caches).enumerate() {
            let (g, g_in) = head.backward_batch(cache, dr.view())?;
            dy.column_mut(i).assign(&g_in.column(0));
            head_grads.push(g);
        }
        let (mut grads, _) = self.h.backward_batch(&h_cache, dy.view())?;
        grads.extend(head_grads.into_iter().flatten());
        Ok((loss, grads))
    }

    pub fn weights(&self) -> impl Iterator<Item = &Array2<f64>> {
        self.h.weights.iter().chain(self.phi.iter().flat_map(|p| p.weights.iter()))
    }

    pub fn weights_mut(&mut self) -> Vec<&mut Array2<f64>> {
        self.h
            .weights
            .iter_mut()
            .chain(self.phi.iter_mut().flat_map(|p| p.weights.iter_mut()))
            .collect()
    }

    /// Per-layer Frobenius norm bounds shared by `h` and every `φ_i`: the
    /// layerwise maximum over all networks.
    pub fn layer_norm_bounds(&self) -> Vec<f64> {
        let mut bounds = self.h.frobenius_norms();
        for head in &self.phi {
            for (b, n) in bounds.iter_mut().zip(head.frobenius_norms()) {
                *b = b.max(n);
            }
        }
        bounds
    }

    /// Largest `|r(z)|` over the rows.
    pub fn max_abs_regression(&self, batch: &SampleBatch) -> Result<f64> {
        let r = self.regress_batch(batch.x.view(), batch.u.view())?;
        Ok(r.iter().fold(0.0f64, |m, v| m.max(v.abs())))
    }
}

fn head_input(u: ArrayView2<f64>) -> Array2<f64> {
    let mut m = Array2::zeros((u.nrows(), 1 + u.ncols()));
    m.slice_mut(s![.., 1..]).assign(&u);
    m
}

pub fn regress(model: &GclModel, x: ArrayView1<f64>, u: ArrayView1<f64>) -> Result<f64> {
    model.regress(x, u)
}

pub fn extract_features(model: &GclModel, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    model.extract_features(x)
}

/// `log(1 + exp(−d·r))` in overflow-free form.
#[inline]
pub fn logistic_loss(r: f64, d: i8) -> f64 {
    let m = f64::from(d) * r;
    (-m.abs()).exp().ln_1p() + (-m).max(0.0)
}

/// `∂/∂r log(1 + exp(−d·r)) = −d·σ(−d·r)`.
#[inline]
pub fn logistic_loss_grad(r: f64, d: i8) -> f64 {
    let d = f64::from(d);
    -d * sigmoid(-d * r)
}

#[inline]
fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Mean loss, accumulated as deviations from the first term: a constant
/// sequence (e.g. `r ≡ 0`) yields its value exactly.
pub fn mean_logistic_loss(r: ArrayView1<f64>, d: &[i8]) -> f64 {
    let Some((&r0, &d0)) = r.iter().zip(d).next() else {
        return 0.0;
    };
    let anchor = logistic_loss(r0, d0);
    let dev: f64 = r.iter().zip(d).map(|(&r, &d)| logistic_loss(r, d) - anchor).sum();
    anchor + dev / r.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub shuffle: bool,
    pub activation: Activation,
    pub zero_head_output: bool,
    /// Stop once the epoch loss improved by less than `plateau_tol`
    /// (relative) over `plateau_epochs` epochs. Zero disables the check.
    pub plateau_epochs: usize,
    pub plateau_tol: f64,
    /// Output width of `h`; defaults to the observation dimension.
    pub feature_dim: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            width: 64,
            epochs: 60,
            batch_size: 256,
            learning_rate: AdamState::DEFAULT_LEARNING_RATE,
            seed: 0,
            shuffle: true,
            activation: Activation::Relu,
            zero_head_output: true,
            plateau_epochs: 5,
            plateau_tol: 1e-5,
            feature_dim: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.batch_size == 0 {
            return Err(NicaError::invalid("width and batch size must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(NicaError::invalid("learning rate must be positive"));
        }
        Ok(())
    }

    pub fn init_model(&self, dim: usize, aux_dim: usize) -> Result<GclModel> {
        GclModel::init_with_features(
            dim,
            self.feature_dim.unwrap_or(dim),
            aux_dim,
            self.width,
            self.activation,
            self.zero_head_output,
            derive_seed(self.seed, &["init"]),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Epoch 0 is the full-data loss before training; later epochs record the
    /// mean minibatch loss seen during the epoch.
    pub train_loss: f64,
    pub holdout_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: GclModel,
    pub trace: Vec<EpochRecord>,
    pub initial_loss: f64,
    /// Full-data loss of the returned model.
    pub final_loss: f64,
    pub steps: u64,
}

/// Minimizes the empirical logistic loss with minibatch Adam.
pub fn train(
    model: GclModel,
    batch: &SampleBatch,
    holdout: Option<&SampleBatch>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let n = batch.len();
    if !batch.d.contains(&1) || !batch.d.contains(&-1) {
        return Err(NicaError::invalid("training batch must contain both labels"));
    }
    check_dim("batch x columns", model.dim(), batch.dim())?;
    check_dim("batch u columns", model.aux_dim(), batch.aux_dim())?;

    let holdout_loss = |m: &GclModel| -> Result<Option<f64>> { holdout.map(|h| m.empirical_loss(h)).transpose() };

    let mut model = model;
    let initial_loss = model.empirical_loss(batch)?;
    if !initial_loss.is_finite() {
        return Err(NicaError::Divergence {
            epoch: 0,
            reason: "non-finite initial loss".into(),
        });
    }
    let mut trace = vec![EpochRecord {
        epoch: 0,
        train_loss: initial_loss,
        holdout_loss: holdout_loss(&model)?,
    }];
    let mut adam = AdamState::new(model.weights(), config.learning_rate);
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = rng::seeded(derive_seed(config.seed, &["shuffle"]));
    let bs = config.batch_size.min(n);

    let dim = batch.dim();
    let aux = batch.aux_dim();
    let mut xb = Array2::<f64>::zeros((bs, dim));
    let mut ub = Array2::<f64>::zeros((bs, aux));
    let mut db = vec![0i8; bs];

    for epoch in 1..=config.epochs {
        if config.shuffle {
            order.shuffle(&mut shuffle_rng);
        }
        let mut loss_sum = 0.0;
        for chunk in order.chunks(bs) {
            let m = chunk.len();
            for (k, &row) in chunk.iter().enumerate() {
                xb.row_mut(k).assign(&batch.x.row(row));
                ub.row_mut(k).assign(&batch.u.row(row));
                db[k] = batch.d[row];
            }
            let (loss, grads) = model.loss_and_grads(
                xb.slice(s![..m, ..]),
                ub.slice(s![..m, ..]),
                &db[..m],
            )?;
            if !loss.is_finite() {
                return Err(NicaError::Divergence {
                    epoch,
                    reason: "non-finite minibatch loss".into(),
                });
            }
            adam.step(&mut model.weights_mut(), &grads).map_err(|e| match e {
                NicaError::NonFiniteGradient { layer } => NicaError::Divergence {
                    epoch,
                    reason: format!("non-finite gradient in parameter group {layer}"),
                },
                other => other,
            })?;
            loss_sum += loss * m as f64;
        }
        let epoch_loss = loss_sum / n as f64;
        trace.push(EpochRecord {
            epoch,
            train_loss: epoch_loss,
            holdout_loss: holdout_loss(&model)?,
        });
        if plateaued(&trace, config.plateau_epochs, config.plateau_tol) {
            break;
        }
    }

    let final_loss = if trace.len() == 1 {
        initial_loss
    } else {
        model.empirical_loss(batch)?
    };
    if !final_loss.is_finite() {
        return Err(NicaError::Divergence {
            epoch: trace.len() - 1,
            reason: "non-finite final loss".into(),
        });
    }
    Ok(TrainOutcome {
        model,
        trace,
        initial_loss,
        final_loss,
        steps: adam.step_count,
    })
}

fn plateaued(trace: &[EpochRecord], window: usize, tol: f64) -> bool {
    // trace[0] is the pre-training loss, not an epoch
    if window == 0 || trace.len() <= window + 1 {
        return false;
    }
    let last = trace[trace.len() - 1].train_loss;
    let past = trace[trace.len() - 1 - window].train_loss;
    (past - last) / past.abs().max(f64::MIN_POSITIVE) < tol
}

/// JSON checkpoint: network specs, row-major weights, seed and step count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub h: MlpRecord,
    pub phi: Vec<MlpRecord>,
    pub rng_seed: u64,
    pub step_count: u64,
}

impl Checkpoint {
    pub fn new(model: &GclModel, rng_seed: u64, step_count: u64) -> Self {
        Checkpoint {
            h: MlpRecord::from(&model.h),
            phi: model.phi.iter().map(MlpRecord::from).collect(),
            rng_seed,
            step_count,
        }
    }

    pub fn into_model(self) -> Result<GclModel> {
        let h = MlpParams::try_from(self.h)?;
        let phi = self.phi.into_iter().map(MlpParams::try_from).collect::<Result<Vec<_>>>()?;
        GclModel::from_parts(h, phi)
    }
}

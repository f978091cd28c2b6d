//! Ground-truth generative models for the time-contrastive (TCL) and
//! multiview (MVCL) settings.
//!
//! Both settings share the same observation model `x = g(s)` where `g` is a
//! bias-free one-hidden-layer leaky-ReLU network with square, well-conditioned
//! weight matrices, so `g` has an exact layerwise inverse.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, NicaError, Result};
use crate::linalg;
use crate::nn::gaussian_matrix;
use crate::rng::{self, Rng};

pub const DEFAULT_CONDITION_CAP: f64 = 1e4;
const MAX_MIXING_ATTEMPTS: usize = 100;

/// `x ↦ A₂ · leaky(A₁ · x)` with cached inverses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingNet {
    pub first: Array2<f64>,
    pub second: Array2<f64>,
    pub slope: f64,
    first_inv: Array2<f64>,
    second_inv: Array2<f64>,
}

impl MixingNet {
    pub fn from_matrices(first: Array2<f64>, second: Array2<f64>, slope: f64, cond_cap: f64) -> Result<Self> {
        if !(slope > 0.0 && slope <= 1.0) {
            return Err(NicaError::invalid(format!("mixing slope must lie in (0,1], got {slope}")));
        }
        let dim = first.nrows();
        for m in [&first, &second] {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(NicaError::invalid("mixing matrices must be square and of equal size"));
            }
            let cond = linalg::condition_number(m);
            if !(cond <= cond_cap) {
                return Err(NicaError::Singular(format!(
                    "mixing matrix condition number {cond:.3e} exceeds cap {cond_cap:.1e}"
                )));
            }
        }
        let first_inv = linalg::inverse(&first)?;
        let second_inv = linalg::inverse(&second)?;
        Ok(MixingNet {
            first,
            second,
            slope,
            first_inv,
            second_inv,
        })
    }

    /// Standard Gaussian weights, resampled while a matrix exceeds `cond_cap`.
    pub fn random(dim: usize, slope: f64, cond_cap: f64, rng: &mut Rng) -> Result<Self> {
        if dim == 0 {
            return Err(NicaError::invalid("mixing dimension must be positive"));
        }
        let draw = |rng: &mut Rng| -> Result<Array2<f64>> {
            for _ in 0..MAX_MIXING_ATTEMPTS {
                let m = gaussian_matrix(dim, dim, rng);
                if linalg::condition_number(&m) <= cond_cap {
                    return Ok(m);
                }
            }
            Err(NicaError::Singular(format!(
                "no {dim}x{dim} Gaussian matrix under condition cap {cond_cap:.1e} in {MAX_MIXING_ATTEMPTS} draws"
            )))
        };
        let first = draw(rng)?;
        let second = draw(rng)?;
        Self::from_matrices(first, second, slope, cond_cap)
    }

    pub fn dim(&self) -> usize {
        self.first.nrows()
    }

    fn leaky(&self, v: f64) -> f64 {
        if v >= 0.0 {
            v
        } else {
            self.slope * v
        }
    }

    fn leaky_inv(&self, v: f64) -> f64 {
        if v >= 0.0 {
            v
        } else {
            v / self.slope
        }
    }

    pub fn mix(&self, v: ArrayView1<f64>) -> Array1<f64> {
        let hidden = self.first.dot(&v).mapv(|h| self.leaky(h));
        self.second.dot(&hidden)
    }

    pub fn invert_mix(&self, v: ArrayView1<f64>) -> Array1<f64> {
        let hidden = self.second_inv.dot(&v).mapv(|h| self.leaky_inv(h));
        self.first_inv.dot(&hidden)
    }

    /// Row-wise `mix` over an `N × D` matrix.
    pub fn mix_rows(&self, rows: ArrayView2<f64>) -> Array2<f64> {
        let hidden = rows.dot(&self.first.t()).mapv(|h| self.leaky(h));
        hidden.dot(&self.second.t())
    }

    pub fn invert_rows(&self, rows: ArrayView2<f64>) -> Array2<f64> {
        let hidden = rows.dot(&self.second_inv.t()).mapv(|h| self.leaky_inv(h));
        hidden.dot(&self.first_inv.t())
    }
}

pub fn mix(net: &MixingNet, v: ArrayView1<f64>) -> Array1<f64> {
    net.mix(v)
}

pub fn invert_mix(net: &MixingNet, v: ArrayView1<f64>) -> Array1<f64> {
    net.invert_mix(v)
}

/// Per-frame modulation `ω_τ = (μ_τ, λ_τ)`; both arrays are `T × D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameParams {
    pub mean: Array2<f64>,
    pub scale: Array2<f64>,
}

impl FrameParams {
    pub fn new(mean: Array2<f64>, scale: Array2<f64>) -> Result<Self> {
        if mean.dim() != scale.dim() {
            return Err(NicaError::invalid("frame mean and scale shapes differ"));
        }
        if mean.nrows() == 0 || mean.ncols() == 0 {
            return Err(NicaError::invalid("frame parameters must be non-empty"));
        }
        if scale.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
            return Err(NicaError::invalid("frame scales must be finite and non-negative"));
        }
        Ok(FrameParams { mean, scale })
    }

    /// Means uniform on [-1, 1], scales uniform on [0.2, 2].
    pub fn random(frames: usize, dim: usize, rng: &mut Rng) -> Result<Self> {
        let mean = Array2::from_shape_simple_fn((frames, dim), || rng.gen_range(-1.0..=1.0));
        let scale = Array2::from_shape_simple_fn((frames, dim), || rng.gen_range(0.2..=2.0));
        Self::new(mean, scale)
    }

    pub fn num_frames(&self) -> usize {
        self.mean.nrows()
    }

    pub fn dim(&self) -> usize {
        self.mean.ncols()
    }

    /// Gaussian conditionals `N(μ_τ, λ_τ²)` per frame.
    pub fn gaussian_conditionals(&self) -> Vec<GaussianConditional> {
        (0..self.num_frames())
            .map(|t| GaussianConditional {
                mean: self.mean.row(t).to_vec(),
                var: self.scale.row(t).mapv(|l| l * l).to_vec(),
            })
            .collect()
    }
}

/// Source law inside a TCL frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceLaw {
    /// Product of a standard Gaussian and a unit Laplacian draw.
    #[default]
    GaussLaplace,
    /// Plain Gaussian; the only law with closed-form conditional scores.
    Gaussian,
}

/// Which factor of the Gaussian × Laplacian product carries `ω_τ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameModulation {
    /// `s = μ + λ·(g·l)`
    #[default]
    Both,
    /// `s = (μ + λ·g)·l`
    GaussianOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuxEncoding {
    #[default]
    OneHot,
    Index,
}

impl AuxEncoding {
    pub fn width(self, frames: usize) -> usize {
        match self {
            AuxEncoding::OneHot => frames,
            AuxEncoding::Index => 1,
        }
    }

    pub fn encode_into(self, frame: usize, out: &mut [f64]) {
        match self {
            AuxEncoding::OneHot => {
                out.iter_mut().for_each(|v| *v = 0.0);
                out[frame] = 1.0;
            }
            AuxEncoding::Index => out[0] = frame as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Tcl,
    Mvcl,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Tcl => "tcl",
            Mode::Mvcl => "mvcl",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum SourceModel {
    Tcl {
        frames: FrameParams,
        law: SourceLaw,
        modulation: FrameModulation,
        encoding: AuxEncoding,
    },
    Mvcl {
        half_widths: Vec<f64>,
        noise_scale: Vec<f64>,
        view_mixing: MixingNet,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeSpec {
    pub dim: usize,
    pub mixing: MixingNet,
    pub sources: SourceModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TclConfig {
    pub dim: usize,
    pub frames: usize,
    pub slope: f64,
    pub cond_cap: f64,
    pub law: SourceLaw,
    pub modulation: FrameModulation,
    pub encoding: AuxEncoding,
}

impl Default for TclConfig {
    fn default() -> Self {
        TclConfig {
            dim: 2,
            frames: 5,
            slope: 0.2,
            cond_cap: DEFAULT_CONDITION_CAP,
            law: SourceLaw::default(),
            modulation: FrameModulation::default(),
            encoding: AuxEncoding::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MvclConfig {
    pub dim: usize,
    /// Uniform half-widths `a_i`; cycled if shorter than `dim`.
    pub half_widths: Vec<f64>,
    /// View noise scale as a fraction of `a_i`.
    pub noise_fraction: f64,
    pub slope: f64,
    pub cond_cap: f64,
}

impl Default for MvclConfig {
    fn default() -> Self {
        MvclConfig {
            dim: 2,
            half_widths: vec![1.0, 2.0],
            noise_fraction: 0.1,
            slope: 0.2,
            cond_cap: DEFAULT_CONDITION_CAP,
        }
    }
}

impl GenerativeSpec {
    pub fn tcl(cfg: &TclConfig, seed: u64) -> Result<Self> {
        if cfg.dim == 0 || cfg.frames == 0 {
            return Err(NicaError::invalid("TCL needs positive dimension and frame count"));
        }
        let mut rng = rng::seeded(seed);
        let mixing = MixingNet::random(cfg.dim, cfg.slope, cfg.cond_cap, &mut rng)?;
        let frames = FrameParams::random(cfg.frames, cfg.dim, &mut rng)?;
        Ok(GenerativeSpec {
            dim: cfg.dim,
            mixing,
            sources: SourceModel::Tcl {
                frames,
                law: cfg.law,
                modulation: cfg.modulation,
                encoding: cfg.encoding,
            },
        })
    }

    pub fn mvcl(cfg: &MvclConfig, seed: u64) -> Result<Self> {
        if cfg.dim == 0 || cfg.half_widths.is_empty() {
            return Err(NicaError::invalid("MVCL needs positive dimension and half-widths"));
        }
        let half_widths: Vec<f64> = (0..cfg.dim).map(|i| cfg.half_widths[i % cfg.half_widths.len()]).collect();
        if half_widths.iter().any(|&a| !(a > 0.0)) {
            return Err(NicaError::invalid("uniform half-widths a_i must be positive"));
        }
        if !(cfg.noise_fraction >= 0.0) {
            return Err(NicaError::invalid("noise fraction must be non-negative"));
        }
        let mut rng = rng::seeded(seed);
        let mixing = MixingNet::random(cfg.dim, cfg.slope, cfg.cond_cap, &mut rng)?;
        let view_mixing = MixingNet::random(cfg.dim, cfg.slope, cfg.cond_cap, &mut rng)?;
        let noise_scale = half_widths.iter().map(|a| a * cfg.noise_fraction).collect();
        Ok(GenerativeSpec {
            dim: cfg.dim,
            mixing,
            sources: SourceModel::Mvcl {
                half_widths,
                noise_scale,
                view_mixing,
            },
        })
    }

    pub fn mode(&self) -> Mode {
        match self.sources {
            SourceModel::Tcl { .. } => Mode::Tcl,
            SourceModel::Mvcl { .. } => Mode::Mvcl,
        }
    }

    pub fn aux_dim(&self) -> usize {
        match &self.sources {
            SourceModel::Tcl { frames, encoding, .. } => encoding.width(frames.num_frames()),
            SourceModel::Mvcl { .. } => self.dim,
        }
    }

    /// Closed-form conditionals per frame, available for Gaussian TCL sources.
    pub fn gaussian_conditionals(&self) -> Option<Vec<GaussianConditional>> {
        match &self.sources {
            SourceModel::Tcl {
                frames,
                law: SourceLaw::Gaussian,
                ..
            } => Some(frames.gaussian_conditionals()),
            _ => None,
        }
    }
}

/// Observed rows `z = (x, u)` with contrastive labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub x: Array2<f64>,
    pub u: Array2<f64>,
    pub d: Vec<i8>,
    pub s: Option<Array2<f64>>,
}

impl SampleBatch {
    pub fn new(x: Array2<f64>, u: Array2<f64>, d: Vec<i8>, s: Option<Array2<f64>>) -> Result<Self> {
        let n = x.nrows();
        check_dim("aux rows", n, u.nrows())?;
        check_dim("label count", n, d.len())?;
        if let Some(s) = &s {
            check_dim("source rows", n, s.nrows())?;
        }
        if d.iter().any(|&v| v != 1 && v != -1) {
            return Err(NicaError::invalid("labels must be +1 or -1"));
        }
        Ok(SampleBatch { x, u, d, s })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn aux_dim(&self) -> usize {
        self.u.ncols()
    }

    pub fn select(&self, rows: &[usize]) -> SampleBatch {
        SampleBatch {
            x: self.x.select(Axis(0), rows),
            u: self.u.select(Axis(0), rows),
            d: rows.iter().map(|&r| self.d[r]).collect(),
            s: self.s.as_ref().map(|s| s.select(Axis(0), rows)),
        }
    }
}

pub fn sample_tcl(spec: &GenerativeSpec, n: usize, seed: u64) -> Result<SampleBatch> {
    let SourceModel::Tcl {
        frames,
        law,
        modulation,
        encoding,
    } = &spec.sources
    else {
        return Err(NicaError::invalid("sample_tcl needs a TCL generative spec"));
    };
    let t = frames.num_frames();
    if n == 0 || n % t != 0 {
        return Err(NicaError::invalid(format!("N={n} must be a positive multiple of T={t}")));
    }
    let per_frame = n / t;
    let dim = spec.dim;
    let mut rng = rng::seeded(seed);
    let mut s = Array2::zeros((n, dim));
    let mut u = Array2::zeros((n, encoding.width(t)));
    for (row, (mut s_row, mut u_row)) in s.outer_iter_mut().zip(u.outer_iter_mut()).enumerate() {
        let tau = row / per_frame;
        for i in 0..dim {
            let mu = frames.mean[[tau, i]];
            let lambda = frames.scale[[tau, i]];
            let g = rng::gaussian(&mut rng);
            s_row[i] = match law {
                SourceLaw::Gaussian => mu + lambda * g,
                SourceLaw::GaussLaplace => {
                    let l = rng::laplace(&mut rng);
                    match modulation {
                        FrameModulation::Both => mu + lambda * (g * l),
                        FrameModulation::GaussianOnly => (mu + lambda * g) * l,
                    }
                }
            };
        }
        encoding.encode_into(tau, u_row.as_slice_mut().expect("row-major"));
    }
    let x = spec.mixing.mix_rows(s.view());
    SampleBatch::new(x, u, vec![1; n], Some(s))
}

pub fn sample_mvcl(spec: &GenerativeSpec, n: usize, seed: u64) -> Result<SampleBatch> {
    let SourceModel::Mvcl {
        half_widths,
        noise_scale,
        view_mixing,
    } = &spec.sources
    else {
        return Err(NicaError::invalid("sample_mvcl needs an MVCL generative spec"));
    };
    if half_widths.iter().any(|&a| !(a > 0.0)) {
        return Err(NicaError::invalid("uniform half-widths a_i must be positive"));
    }
    if n == 0 {
        return Err(NicaError::invalid("N must be positive"));
    }
    let dim = spec.dim;
    let mut rng = rng::seeded(seed);
    let mut s = Array2::zeros((n, dim));
    let mut noisy = Array2::zeros((n, dim));
    for (mut s_row, mut n_row) in s.outer_iter_mut().zip(noisy.outer_iter_mut()) {
        for i in 0..dim {
            let a = half_widths[i];
            let v = rng.gen_range(-a..=a);
            let noise = noise_scale[i] * rng::gaussian(&mut rng) * rng::laplace(&mut rng);
            s_row[i] = v;
            n_row[i] = v + noise;
        }
    }
    let x = spec.mixing.mix_rows(s.view());
    let u = view_mixing.mix_rows(noisy.view());
    SampleBatch::new(x, u, vec![1; n], Some(s))
}

pub fn sample(spec: &GenerativeSpec, n: usize, seed: u64) -> Result<SampleBatch> {
    match spec.mode() {
        Mode::Tcl => sample_tcl(spec, n, seed),
        Mode::Mvcl => sample_mvcl(spec, n, seed),
    }
}

/// Uniform random permutation with no fixed points (rejection sampling).
pub fn derangement(n: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(NicaError::invalid(format!("no derangement exists for N={n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        perm.shuffle(rng);
        if perm.iter().enumerate().all(|(i, &p)| i != p) {
            return Ok(perm);
        }
    }
}

/// Doubles a positive-only batch: the original rows labeled `+1`, then the same
/// `x` rows paired with a derangement of the `u` rows labeled `-1`.
pub fn make_contrastive_pairs(batch: &SampleBatch, seed: u64) -> Result<SampleBatch> {
    if batch.d.iter().any(|&d| d != 1) {
        return Err(NicaError::invalid("contrastive pairing expects positive rows only"));
    }
    let n = batch.len();
    let perm = derangement(n, &mut rng::seeded(seed))?;
    let shuffled_u = batch.u.select(Axis(0), &perm);
    let x = ndarray::concatenate(Axis(0), &[batch.x.view(), batch.x.view()]).expect("same widths");
    let u = ndarray::concatenate(Axis(0), &[batch.u.view(), shuffled_u.view()]).expect("same widths");
    let s = batch
        .s
        .as_ref()
        .map(|s| ndarray::concatenate(Axis(0), &[s.view(), s.view()]).expect("same widths"));
    let mut d = vec![1i8; n];
    d.extend(std::iter::repeat_n(-1i8, n));
    SampleBatch::new(x, u, d, s)
}

/// First and second derivatives of the conditional log-densities `q_i(·, u)`.
pub trait ScoreDerivatives {
    fn dim(&self) -> usize;
    fn first(&self, i: usize, y: f64) -> f64;
    fn second(&self, i: usize, y: f64) -> f64;
}

/// Factorized Gaussian conditional `Π_i N(μ_i, σ_i²)` for one value of `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianConditional {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl ScoreDerivatives for GaussianConditional {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn first(&self, i: usize, y: f64) -> f64 {
        -(y - self.mean[i]) / self.var[i]
    }

    fn second(&self, i: usize, _y: f64) -> f64 {
        -1.0 / self.var[i]
    }
}

fn score_vector<Q: ScoreDerivatives>(q: &Q, y: ArrayView1<f64>) -> Array1<f64> {
    let d = y.len();
    let mut w = Array1::zeros(2 * d);
    for i in 0..d {
        w[i] = q.first(i, y[i]);
        w[d + i] = q.second(i, y[i]);
    }
    w
}

/// Builds `W = [w(y,u_1) − w(y,u_0), …, w(y,u_2D) − w(y,u_0)]` and returns it
/// with its smallest singular value. Extra auxiliary values beyond `2D+1` are
/// ignored.
pub fn variability_matrix<Q: ScoreDerivatives>(y: ArrayView1<f64>, aux: &[Q]) -> Result<(Array2<f64>, f64)> {
    let d = y.len();
    if aux.len() < 2 * d + 1 {
        return Err(NicaError::invalid(format!(
            "variability needs 2D+1 = {} auxiliary values, got {}",
            2 * d + 1,
            aux.len()
        )));
    }
    for q in aux {
        check_dim("score dimension", d, q.dim())?;
    }
    let base = score_vector(&aux[0], y);
    let mut w = Array2::zeros((2 * d, 2 * d));
    for (j, q) in aux[1..=2 * d].iter().enumerate() {
        let col = score_vector(q, y) - &base;
        w.column_mut(j).assign(&col);
    }
    let sigma = linalg::min_singular_value(&w);
    Ok((w, sigma))
}

/// Pairwise differences between all rows of an `N × D` matrix, summarized by
/// the smallest nonzero gap; used by tests to check one-hot geometry.
pub fn min_row_distance(rows: ArrayView2<f64>) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..rows.nrows() {
        for j in (i + 1)..rows.nrows() {
            let diff = &rows.slice(s![i, ..]) - &rows.slice(s![j, ..]);
            let dist = diff.dot(&diff).sqrt();
            if dist > 0.0 {
                best = best.min(dist);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn variance(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
    }

    #[test]
    fn linear_slope_is_matrix_product() {
        let a1 = array![[1.0, 2.0], [0.5, -1.0]];
        let a2 = array![[0.0, 1.0], [3.0, 1.0]];
        let net = MixingNet::from_matrices(a1.clone(), a2.clone(), 1.0, 1e4).unwrap();
        let v = array![0.3, -0.8];
        let expected = a2.dot(&a1).dot(&v);
        let got = net.mix(v.view());
        assert!((got - expected).iter().all(|e| e.abs() < 1e-14));
    }

    #[test]
    fn leaky_inverse_scalar() {
        let net = MixingNet::from_matrices(array![[1.0]], array![[1.0]], 0.2, 1e4).unwrap();
        assert!((net.mix(array![-1.0].view())[0] + 0.2).abs() < 1e-15);
        assert!((net.invert_mix(array![-0.2].view())[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn mixing_round_trip() {
        let mut rng = rng::seeded(1);
        let net = MixingNet::random(3, 0.2, 1e4, &mut rng).unwrap();
        let pts = gaussian_matrix(1000, 3, &mut rng);
        let back = net.invert_rows(net.mix_rows(pts.view()).view());
        let err = (&back - &pts).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err <= 1e-10, "max error {err}");
        assert!(linalg::condition_number(&net.first) <= 1e4);
    }

    #[test]
    fn singular_mixing_rejected() {
        let sing = array![[1.0, 2.0], [2.0, 4.0]];
        assert!(MixingNet::from_matrices(sing, Array2::eye(2), 0.2, 1e4).is_err());
    }

    fn tcl_spec(law: SourceLaw, frames: FrameParams) -> GenerativeSpec {
        let d = frames.dim();
        GenerativeSpec {
            dim: d,
            mixing: MixingNet::from_matrices(Array2::eye(d), Array2::eye(d), 0.2, 1e4).unwrap(),
            sources: SourceModel::Tcl {
                frames,
                law,
                modulation: FrameModulation::Both,
                encoding: AuxEncoding::OneHot,
            },
        }
    }

    #[test]
    fn zero_scale_pins_sources_to_means() {
        let frames = FrameParams::new(array![[0.5, -1.0], [2.0, 3.0]], Array2::zeros((2, 2))).unwrap();
        let spec = tcl_spec(SourceLaw::GaussLaplace, frames);
        let b = sample_tcl(&spec, 10, 4).unwrap();
        let s = b.s.unwrap();
        for r in 0..10 {
            let tau = r / 5;
            let mean = if tau == 0 { [0.5, -1.0] } else { [2.0, 3.0] };
            assert_eq!(s[[r, 0]], mean[0]);
            assert_eq!(s[[r, 1]], mean[1]);
        }
    }

    #[test]
    fn product_law_has_variance_two() {
        let frames = FrameParams::new(array![[0.0]], array![[1.0]]).unwrap();
        let spec = tcl_spec(SourceLaw::GaussLaplace, frames);
        let b = sample_tcl(&spec, 100_000, 8).unwrap();
        let s = b.s.unwrap();
        let v = variance(s.column(0).as_slice_memory_order().unwrap_or(&s.column(0).to_vec()));
        assert!((v - 2.0).abs() < 0.05, "variance {v}");
    }

    #[test]
    fn tcl_rejects_indivisible_n() {
        let spec = GenerativeSpec::tcl(&TclConfig::default(), 1).unwrap();
        assert!(sample_tcl(&spec, 1001, 0).is_err());
    }

    #[test]
    fn tcl_observations_invert_to_sources() {
        let spec = GenerativeSpec::tcl(&TclConfig::default(), 3).unwrap();
        let b = sample_tcl(&spec, 500, 7).unwrap();
        let back = spec.mixing.invert_rows(b.x.view());
        let err = (&back - b.s.as_ref().unwrap()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err <= 1e-10);
        // one-hot rows between distinct frames are √2 apart
        assert!((min_row_distance(b.u.view()) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn mvcl_noise_free_view_is_deterministic() {
        let cfg = MvclConfig {
            noise_fraction: 0.0,
            ..MvclConfig::default()
        };
        let spec = GenerativeSpec::mvcl(&cfg, 5).unwrap();
        let b = sample_mvcl(&spec, 200, 1).unwrap();
        let SourceModel::Mvcl { view_mixing, .. } = &spec.sources else { unreachable!() };
        let expected = view_mixing.mix_rows(b.s.as_ref().unwrap().view());
        assert_eq!(b.u, expected);
    }

    #[test]
    fn mvcl_uniform_moments() {
        let spec = GenerativeSpec::mvcl(&MvclConfig::default(), 5).unwrap();
        let n = 100_000;
        let b = sample_mvcl(&spec, n, 2).unwrap();
        let s = b.s.unwrap();
        let c0 = s.column(0).to_vec();
        let c1 = s.column(1).to_vec();
        let mean0 = c0.iter().sum::<f64>() / n as f64;
        let tol = 3.0 * 1.0 / (12.0 * n as f64).sqrt();
        assert!(mean0.abs() < tol, "mean {mean0} tol {tol}");
        let ratio = variance(&c1) / variance(&c0);
        assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn mvcl_rejects_nonpositive_width() {
        let cfg = MvclConfig {
            half_widths: vec![1.0, 0.0],
            ..MvclConfig::default()
        };
        assert!(GenerativeSpec::mvcl(&cfg, 1).is_err());
    }

    #[test]
    fn two_row_derangement_swaps() {
        let mut rng = rng::seeded(0);
        assert_eq!(derangement(2, &mut rng).unwrap(), vec![1, 0]);
        assert!(derangement(1, &mut rng).is_err());
    }

    #[test]
    fn pairs_are_balanced_and_deranged() {
        let spec = GenerativeSpec::mvcl(&MvclConfig::default(), 2).unwrap();
        let b = sample_mvcl(&spec, 300, 3).unwrap();
        let pairs = make_contrastive_pairs(&b, 9).unwrap();
        assert_eq!(pairs.len(), 600);
        assert_eq!(pairs.d.iter().filter(|&&d| d == 1).count(), 300);
        assert_eq!(pairs.d.iter().filter(|&&d| d == -1).count(), 300);
        for r in 0..300 {
            assert_eq!(pairs.x.row(r), pairs.x.row(300 + r));
            assert_ne!(pairs.u.row(300 + r), b.u.row(r));
        }
    }

    #[test]
    fn shuffled_aux_is_uncorrelated() {
        let spec = GenerativeSpec::mvcl(&MvclConfig::default(), 12).unwrap();
        let n = 10_000;
        let b = sample_mvcl(&spec, n, 3).unwrap();
        let pairs = make_contrastive_pairs(&b, 5).unwrap();
        let xs = pairs.x.slice(s![n.., 0]).to_vec();
        let us = pairs.u.slice(s![n.., 0]).to_vec();
        let mx = xs.iter().sum::<f64>() / n as f64;
        let mu = us.iter().sum::<f64>() / n as f64;
        let cov: f64 = xs.iter().zip(&us).map(|(a, b)| (a - mx) * (b - mu)).sum::<f64>() / n as f64;
        let corr = cov / (variance(&xs) * variance(&us)).sqrt();
        assert!(corr.abs() < 0.03, "corr {corr}");
    }

    #[test]
    fn variability_identical_aux_is_zero() {
        let q = GaussianConditional {
            mean: vec![0.0],
            var: vec![1.0],
        };
        let (w, sigma) = variability_matrix(array![0.3].view(), &[q.clone(), q.clone(), q]).unwrap();
        assert!(w.iter().all(|&v| v == 0.0));
        assert_eq!(sigma, 0.0);
    }

    #[test]
    fn variability_hand_example() {
        let mk = |m: f64, v: f64| GaussianConditional {
            mean: vec![m],
            var: vec![v],
        };
        let aux = [mk(0.0, 1.0), mk(1.0, 1.0), mk(0.0, 2.0)];
        let (w, sigma) = variability_matrix(array![0.0].view(), &aux).unwrap();
        assert_eq!(w, array![[1.0, 0.0], [0.0, 0.5]]);
        assert!((sigma - 0.5).abs() < 1e-15);
        let swapped = [mk(0.0, 1.0), mk(0.0, 2.0), mk(1.0, 1.0)];
        let (_, sigma2) = variability_matrix(array![0.0].view(), &swapped).unwrap();
        assert!((sigma - sigma2).abs() < 1e-15);
    }

    #[test]
    fn variability_needs_enough_aux() {
        let q = GaussianConditional {
            mean: vec![0.0, 0.0],
            var: vec![1.0, 1.0],
        };
        assert!(variability_matrix(array![0.0, 0.0].view(), &vec![q; 4]).is_err());
    }

    #[test]
    fn generic_frames_satisfy_variability() {
        let cfg = TclConfig {
            dim: 3,
            frames: 7,
            law: SourceLaw::Gaussian,
            ..TclConfig::default()
        };
        let spec = GenerativeSpec::tcl(&cfg, 21).unwrap();
        let conds = spec.gaussian_conditionals().unwrap();
        let (_, sigma) = variability_matrix(array![0.1, -0.4, 0.9].view(), &conds).unwrap();
        assert!(sigma > 0.0);
    }
}

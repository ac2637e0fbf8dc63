//! Fully connected ReLU network `f(u) = √m · W_L σ(W_{L-1} σ(… σ(W_1 u)))`
//! with hand-derived parameter gradients.
//!
//! Parameters are stored flat. The flattening order is layer-major
//! (`W_1` first, `W_L` last) and row-major inside each layer; the diagonal
//! confidence matrix in [`crate::neural_lcb`] is indexed by this order.
//!
//! There are no bias terms. With the symmetric initialization produced by
//! [`init_weights`] the network evaluates to zero on every input whose two
//! halves are identical (`u_j = u_{j + d/2}`).

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Tolerance on `‖u‖₂ ≤ 1` for network inputs.
pub const INPUT_NORM_TOL: f64 = 1e-9;

/// Depth, width and input dimension of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkShape {
    pub depth: usize,
    pub width: usize,
    pub input_dim: usize,
}

impl NetworkShape {
    pub fn new(depth: usize, width: usize, input_dim: usize) -> Result<Self> {
        let shape = Self {
            depth,
            width,
            input_dim,
        };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::Shape(format!("depth must be >= 2, got {}", self.depth)));
        }
        if self.width < 2 || self.width % 2 != 0 {
            return Err(Error::Shape(format!(
                "width must be even and >= 2, got {}",
                self.width
            )));
        }
        if self.input_dim < 2 || self.input_dim % 2 != 0 {
            return Err(Error::Shape(format!(
                "input dimension must be even and >= 2, got {}",
                self.input_dim
            )));
        }
        Ok(())
    }

    /// `p = m·d + m + m²·(L − 2)`.
    pub fn param_count(&self) -> usize {
        let m = self.width;
        m * self.input_dim + m + m * m * (self.depth - 2)
    }

    /// `(rows, cols)` of layer `l` (0-based).
    pub fn layer_dims(&self, l: usize) -> (usize, usize) {
        let m = self.width;
        if l == 0 {
            (m, self.input_dim)
        } else if l + 1 == self.depth {
            (1, m)
        } else {
            (m, m)
        }
    }

    /// Offset of layer `l` in the flattened parameter vector.
    pub fn layer_offset(&self, l: usize) -> usize {
        (0..l)
            .map(|k| {
                let (r, c) = self.layer_dims(k);
                r * c
            })
            .sum()
    }

    fn output_scale(&self) -> f64 {
        (self.width as f64).sqrt()
    }
}

/// Network parameters plus the frozen initial snapshot `W⁽⁰⁾`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    shape: NetworkShape,
    params: Vec<f64>,
    init: Arc<Vec<f64>>,
}

impl NetworkWeights {
    /// Builds weights from a flat parameter vector; the snapshot is a copy of
    /// `params`.
    pub fn from_flat(shape: NetworkShape, params: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        if params.len() != shape.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                shape.param_count(),
                params.len()
            )));
        }
        let init = Arc::new(params.clone());
        Ok(Self {
            shape,
            params,
            init,
        })
    }

    /// Like [`from_flat`](Self::from_flat) but with an explicit anchor.
    pub fn with_snapshot(shape: NetworkShape, params: Vec<f64>, init: Vec<f64>) -> Result<Self> {
        let mut w = Self::from_flat(shape, params)?;
        if init.len() != w.params.len() {
            return Err(Error::Shape("snapshot length differs from parameters".into()));
        }
        w.init = Arc::new(init);
        Ok(w)
    }

    pub fn shape(&self) -> NetworkShape {
        self.shape
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn init_snapshot(&self) -> &[f64] {
        &self.init
    }

    /// Row-major view of layer `l`.
    pub fn layer(&self, l: usize) -> &[f64] {
        let (r, c) = self.shape.layer_dims(l);
        let off = self.shape.layer_offset(l);
        &self.params[off..off + r * c]
    }

    /// `‖W − W⁽⁰⁾‖_F`.
    pub fn distance_from_init(&self) -> f64 {
        self.params
            .iter()
            .zip(self.init.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    fn check_input(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.shape.input_dim {
            return Err(Error::Shape(format!(
                "input has dimension {}, network expects {}",
                u.len(),
                self.shape.input_dim
            )));
        }
        Ok(())
    }

    /// Per-layer post-activations `h_0 = u, h_1, …, h_{L-1}`.
    fn activations(&self, u: &[f64]) -> Vec<Vec<f64>> {
        let depth = self.shape.depth;
        let mut acts = Vec::with_capacity(depth);
        acts.push(u.to_vec());
        for l in 0..depth - 1 {
            let (rows, cols) = self.shape.layer_dims(l);
            let w = self.layer(l);
            let prev = &acts[l];
            let next: Vec<f64> = (0..rows)
                .map(|i| {
                    let row = &w[i * cols..(i + 1) * cols];
                    relu(dot(row, prev))
                })
                .collect();
            acts.push(next);
        }
        acts
    }

    /// Network output at `u`.
    pub fn forward(&self, u: &[f64]) -> Result<f64> {
        self.check_input(u)?;
        Ok(self.forward_unchecked(u))
    }

    pub(crate) fn forward_unchecked(&self, u: &[f64]) -> f64 {
        let acts = self.activations(u);
        let last = self.layer(self.shape.depth - 1);
        self.shape.output_scale() * dot(last, &acts[self.shape.depth - 1])
    }

    /// Gradient of the output with respect to the flattened parameters.
    pub fn gradient(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_input(u)?;
        Ok(self.value_and_gradient_unchecked(u).1)
    }

    /// Output and gradient from one forward/backward pass.
    pub fn value_and_gradient(&self, u: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_input(u)?;
        Ok(self.value_and_gradient_unchecked(u))
    }

    pub(crate) fn value_and_gradient_unchecked(&self, u: &[f64]) -> (f64, Vec<f64>) {
        let shape = self.shape;
        let depth = shape.depth;
        let scale = shape.output_scale();
        let acts = self.activations(u);
        let mut grad = vec![0.0; shape.param_count()];

        let last = self.layer(depth - 1);
        let value = scale * dot(last, &acts[depth - 1]);

        // Output layer: ∂f/∂W_L[k] = √m · h_{L-1}[k].
        let off = shape.layer_offset(depth - 1);
        for (g, h) in grad[off..off + shape.width].iter_mut().zip(&acts[depth - 1]) {
            *g = scale * h;
        }

        // delta[i] = ∂f/∂z_l[i] for the pre-activation of hidden layer l.
        let mut delta: Vec<f64> = last
            .iter()
            .zip(&acts[depth - 1])
            .map(|(w, h)| if *h > 0.0 { scale * w } else { 0.0 })
            .collect();

        for l in (0..depth - 1).rev() {
            let (rows, cols) = shape.layer_dims(l);
            let off = shape.layer_offset(l);
            let input = &acts[l];
            for i in 0..rows {
                let d = delta[i];
                if d == 0.0 {
                    continue;
                }
                let g_row = &mut grad[off + i * cols..off + (i + 1) * cols];
                for (g, x) in g_row.iter_mut().zip(input) {
                    *g = d * x;
                }
            }
            if l == 0 {
                break;
            }
            let w = self.layer(l);
            let mut prev = vec![0.0; cols];
            for i in 0..rows {
                let d = delta[i];
                if d == 0.0 {
                    continue;
                }
                for (p, wij) in prev.iter_mut().zip(&w[i * cols..(i + 1) * cols]) {
                    *p += d * wij;
                }
            }
            for (p, h) in prev.iter_mut().zip(input) {
                if *h <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
        (value, grad)
    }

    /// Writes the binary weight format: four little-endian `u64`
    /// (`L`, `m`, `d`, `p`) followed by `p` little-endian `f64` in flattening
    /// order. The initialization snapshot is not written.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let s = self.shape;
        for v in [s.depth, s.width, s.input_dim, s.param_count()] {
            out.write_all(&(v as u64).to_le_bytes())?;
        }
        for p in &self.params {
            out.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads the format written by [`write_to`](Self::write_to). The loaded
    /// parameters become their own snapshot.
    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut header = [0usize; 4];
        for h in header.iter_mut() {
            input.read_exact(&mut word)?;
            *h = u64::from_le_bytes(word) as usize;
        }
        let shape = NetworkShape::new(header[0], header[1], header[2])?;
        if shape.param_count() != header[3] {
            return Err(Error::Shape(format!(
                "header declares p = {}, shape implies {}",
                header[3],
                shape.param_count()
            )));
        }
        let mut params = Vec::with_capacity(header[3]);
        for _ in 0..header[3] {
            input.read_exact(&mut word)?;
            params.push(f64::from_le_bytes(word));
        }
        Self::from_flat(shape, params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        self.write_to(&mut out)?;
        out.flush().map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

/// Symmetric initialization: hidden layers are `[W̃ 0; 0 W̃]` with
/// `W̃ ~ N(0, 4/m)` entrywise, the output layer is `[wᵀ, −wᵀ]` with
/// `w ~ N(0, 2/m)`.
pub fn init_weights(shape: NetworkShape, seed: u64) -> Result<NetworkWeights> {
    shape.validate()?;
    let mut rng = rng::stream(seed, rng::tag::NET_INIT);
    Ok(init_weights_with(shape, &mut rng))
}

pub(crate) fn init_weights_with<R: Rng + ?Sized>(shape: NetworkShape, rng: &mut R) -> NetworkWeights {
    let m = shape.width as f64;
    let hidden = Normal::new(0.0, (4.0 / m).sqrt()).expect("finite std");
    let output = Normal::new(0.0, (2.0 / m).sqrt()).expect("finite std");
    let mut params = vec![0.0; shape.param_count()];

    for l in 0..shape.depth - 1 {
        let (rows, cols) = shape.layer_dims(l);
        let off = shape.layer_offset(l);
        let (hr, hc) = (rows / 2, cols / 2);
        for i in 0..hr {
            for j in 0..hc {
                let v = hidden.sample(rng);
                params[off + i * cols + j] = v;
                params[off + (i + hr) * cols + (j + hc)] = v;
            }
        }
    }
    let off = shape.layer_offset(shape.depth - 1);
    let half = shape.width / 2;
    for k in 0..half {
        let v = output.sample(rng);
        params[off + k] = v;
        params[off + half + k] = -v;
    }
    NetworkWeights::from_flat(shape, params).expect("shape validated")
}

/// Mini-batch of regression pairs for one SGD step.
#[derive(Debug, Clone, Default)]
pub struct TrainBatch {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl TrainBatch {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::Shape(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        for (q, x) in inputs.iter().enumerate() {
            check_unit_ball(x).map_err(|e| Error::Input(format!("batch input {q}: {e}")))?;
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// `(1/2B) Σ (f_W(x_q) − r_q)² + (mλ/2) ‖W − W⁽⁰⁾‖_F²`.
pub fn proximal_loss(w: &NetworkWeights, batch: &TrainBatch, reg: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let mut fit = 0.0;
    for (x, r) in batch.inputs.iter().zip(&batch.targets) {
        let e = w.forward(x)? - r;
        fit += e * e;
    }
    let m = w.shape.width as f64;
    let dist = w.distance_from_init();
    Ok(fit / (2.0 * batch.len() as f64) + 0.5 * m * reg * dist * dist)
}

/// One gradient step on [`proximal_loss`]. Returns the updated weights and the
/// loss evaluated at the *input* weights.
pub fn sgd_step(
    w: &NetworkWeights,
    batch: &TrainBatch,
    step: f64,
    reg: f64,
) -> Result<(NetworkWeights, f64)> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let p = w.params.len();
    let n = batch.len() as f64;
    let m = w.shape.width as f64;
    let mut grad = vec![0.0; p];
    let mut fit = 0.0;
    for (x, r) in batch.inputs.iter().zip(&batch.targets) {
        let (f, g) = w.value_and_gradient(x)?;
        let e = f - r;
        fit += e * e;
        let c = e / n;
        for (acc, gi) in grad.iter_mut().zip(&g) {
            *acc += c * gi;
        }
    }
    let mut dist2 = 0.0;
    for ((acc, wi), w0) in grad.iter_mut().zip(&w.params).zip(w.init.iter()) {
        let diff = wi - w0;
        dist2 += diff * diff;
        *acc += m * reg * diff;
    }
    let loss = fit / (2.0 * n) + 0.5 * m * reg * dist2;
    if !loss.is_finite() {
        return Err(Error::numeric("non-finite loss", loss));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::numeric("non-finite gradient", loss));
    }
    let params = w
        .params
        .iter()
        .zip(&grad)
        .map(|(wi, gi)| wi - step * gi)
        .collect();
    Ok((
        NetworkWeights {
            shape: w.shape,
            params,
            init: Arc::clone(&w.init),
        },
        loss,
    ))
}

/// One epoch of proximal SGD: a single step of size `step` on `batch`.
pub fn sgd_epoch(w: &NetworkWeights, batch: &TrainBatch, step: f64, reg: f64) -> Result<NetworkWeights> {
    sgd_step(w, batch, step, reg).map(|(w, _)| w)
}

/// Checks `‖u‖₂ ≤ 1` up to [`INPUT_NORM_TOL`].
pub fn check_unit_ball(u: &[f64]) -> Result<()> {
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || norm > 1.0 + INPUT_NORM_TOL {
        return Err(Error::Input(format!("input norm {norm} exceeds 1")));
    }
    Ok(())
}

#[inline]
fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

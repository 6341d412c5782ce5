//! Minimal dense-network engine: tanh MLPs with exact reverse-mode
//! gradients, Adam, a diagonal Gaussian policy head, and a text checkpoint
//! format. Everything is scalar loops on `Vec<F>`; the nets here are small
//! enough (tens of thousands of parameters) that cache-friendly loops beat
//! any dependency it would be worth taking.

mod adam;
mod checkpoint;
mod policy;

pub use adam::{Adam, AdamParams};
pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use policy::{GaussianPolicy, LOG_STD_MAX, LOG_STD_MIN};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scalar::{cast, Scalar};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{what}: expected length {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("forward cache is stale: parameters changed since it was built")]
    StaleCache,
    #[error("bad layer sizes: {0}")]
    BadSizes(String),
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },
    #[error("checkpoint line {line}: {message}")]
    Checkpoint { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layer<F> {
    /// Row-major weights, `w[i * fan_out + j]` connecting input i to unit j.
    pub(crate) w: Vec<F>,
    pub(crate) b: Vec<F>,
}

/// Fully-connected net, tanh on hidden layers, linear output.
#[derive(Debug, Clone)]
pub struct Mlp<F> {
    sizes: Vec<usize>,
    layers: Vec<Layer<F>>,
    /// Bumped on every parameter update; forward caches carry the version
    /// they were computed under so a stale backward is an error, not a
    /// silently wrong gradient.
    version: u64,
}

/// Equality is over the function the net computes (shape and parameters);
/// the version counter is cache bookkeeping and deliberately excluded.
impl<F: PartialEq> PartialEq for Mlp<F> {
    fn eq(&self, other: &Self) -> bool {
        self.sizes == other.sizes && self.layers == other.layers
    }
}

/// Post-activation values of every layer from one forward pass.
/// `acts[0]` is the input, `acts.last()` the network output.
#[derive(Debug, Clone)]
pub struct ForwardCache<F> {
    version: u64,
    acts: Vec<Vec<F>>,
}

impl<F: Scalar> ForwardCache<F> {
    pub fn output(&self) -> &[F] {
        self.acts.last().expect("cache always holds the input")
    }
}

/// Parameter-shaped gradient accumulator, same tensor order as
/// [`Mlp::flat_params_mut`]: w0, b0, w1, b1, ...
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads<F> {
    w: Vec<Vec<F>>,
    b: Vec<Vec<F>>,
}

impl<F: Scalar> MlpGrads<F> {
    pub fn zeros_like(mlp: &Mlp<F>) -> Self {
        MlpGrads {
            w: mlp.layers.iter().map(|l| vec![F::zero(); l.w.len()]).collect(),
            b: mlp.layers.iter().map(|l| vec![F::zero(); l.b.len()]).collect(),
        }
    }

    pub fn add(&mut self, other: &MlpGrads<F>) {
        debug_assert_eq!(self.w.len(), other.w.len());
        for (a, o) in self.w.iter_mut().chain(&mut self.b).zip(other.w.iter().chain(&other.b)) {
            for (x, y) in a.iter_mut().zip(o) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, k: F) {
        for t in self.w.iter_mut().chain(&mut self.b) {
            for x in t.iter_mut() {
                *x *= k;
            }
        }
    }

    pub fn sq_norm(&self) -> F {
        self.w
            .iter()
            .chain(&self.b)
            .flat_map(|t| t.iter())
            .map(|x| *x * *x)
            .sum()
    }

    /// Flat tensor views in Adam registration order.
    pub fn flat(&self) -> Vec<&[F]> {
        let mut out = Vec::with_capacity(2 * self.w.len());
        for (w, b) in self.w.iter().zip(&self.b) {
            out.push(w.as_slice());
            out.push(b.as_slice());
        }
        out
    }
}

impl<F: Scalar> Mlp<F> {
    /// Xavier-uniform weights in ±√(6/(fan_in + fan_out)), zero biases.
    pub fn init(sizes: &[usize], seed: u64) -> Result<Self, NnError> {
        Self::check_sizes(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let w = (0..fan_in * fan_out)
                    .map(|_| cast::<F>((rng.gen::<f64>() * 2.0 - 1.0) * limit))
                    .collect();
                Layer { w, b: vec![F::zero(); fan_out] }
            })
            .collect();
        Ok(Mlp { sizes: sizes.to_vec(), layers, version: 0 })
    }

    fn check_sizes(sizes: &[usize]) -> Result<(), NnError> {
        if sizes.len() < 2 {
            return Err(NnError::BadSizes(format!("need input and output layers, got {sizes:?}")));
        }
        if sizes.iter().any(|s| *s == 0) {
            return Err(NnError::BadSizes(format!("zero-width layer in {sizes:?}")));
        }
        Ok(())
    }

    pub(crate) fn from_parts(sizes: Vec<usize>, layers: Vec<Layer<F>>) -> Result<Self, NnError> {
        Self::check_sizes(&sizes)?;
        if layers.len() + 1 != sizes.len() {
            return Err(NnError::BadSizes(format!(
                "{} layers do not fit sizes {sizes:?}",
                layers.len()
            )));
        }
        for (l, pair) in layers.iter().zip(sizes.windows(2)) {
            if l.w.len() != pair[0] * pair[1] || l.b.len() != pair[1] {
                return Err(NnError::BadSizes(format!(
                    "layer shape {}x{} does not match sizes {sizes:?}",
                    l.w.len(),
                    l.b.len()
                )));
            }
        }
        Ok(Mlp { sizes, layers, version: 0 })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn in_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.sizes.last().expect("checked nonempty")
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Flat tensor lengths in Adam registration order: w0, b0, w1, b1, ...
    pub fn param_shapes(&self) -> Vec<usize> {
        self.layers.iter().flat_map(|l| [l.w.len(), l.b.len()]).collect()
    }

    /// Snapshot of every parameter, flattened in w0, b0, w1, b1, ... order.
    pub fn flat_params(&self) -> Vec<F> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(&l.b).copied()).collect()
    }

    /// Rebuilds a net from a [`Self::flat_params`] snapshot.
    pub fn from_flat_params(sizes: &[usize], params: &[F]) -> Result<Self, NnError> {
        Self::check_sizes(sizes)?;
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        let mut at = 0usize;
        for pair in sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let need = fan_in * fan_out + fan_out;
            if at + need > params.len() {
                return Err(NnError::DimensionMismatch {
                    what: "flat parameters",
                    expected: sizes.windows(2).map(|p| p[0] * p[1] + p[1]).sum(),
                    got: params.len(),
                });
            }
            let w = params[at..at + fan_in * fan_out].to_vec();
            let b = params[at + fan_in * fan_out..at + need].to_vec();
            layers.push(Layer { w, b });
            at += need;
        }
        if at != params.len() {
            return Err(NnError::DimensionMismatch {
                what: "flat parameters",
                expected: at,
                got: params.len(),
            });
        }
        Ok(Mlp { sizes: sizes.to_vec(), layers, version: 0 })
    }

    pub(crate) fn layers(&self) -> &[Layer<F>] {
        &self.layers
    }

    pub(crate) fn flat_params_mut(&mut self) -> Vec<&mut [F]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for layer in &mut self.layers {
            let Layer { w, b } = layer;
            out.push(w.as_mut_slice());
            out.push(b.as_mut_slice());
        }
        out
    }

    pub(crate) fn bump_version(&mut self) {
        self.version += 1;
    }

    pub fn forward(&self, x: &[F]) -> Result<(Vec<F>, ForwardCache<F>), NnError> {
        if x.len() != self.sizes[0] {
            return Err(NnError::DimensionMismatch {
                what: "input",
                expected: self.sizes[0],
                got: x.len(),
            });
        }
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_vec());
        for (li, layer) in self.layers.iter().enumerate() {
            let last = li + 1 == self.layers.len();
            let fan_out = self.sizes[li + 1];
            let input = &acts[li];
            let mut z = layer.b.clone();
            for (i, a) in input.iter().enumerate() {
                let row = &layer.w[i * fan_out..(i + 1) * fan_out];
                for (zj, wij) in z.iter_mut().zip(row) {
                    *zj += *a * *wij;
                }
            }
            if !last {
                for v in z.iter_mut() {
                    *v = v.tanh();
                }
            }
            acts.push(z);
        }
        let out = acts.last().expect("at least one layer").clone();
        Ok((out, ForwardCache { version: self.version, acts }))
    }

    /// Exact gradients of a scalar loss w.r.t. all parameters, given
    /// dLoss/dOutput. The cache must come from a forward pass on this net
    /// at its current parameter version.
    pub fn backward(&self, cache: &ForwardCache<F>, grad_out: &[F]) -> Result<MlpGrads<F>, NnError> {
        if cache.version != self.version || cache.acts.len() != self.sizes.len() {
            return Err(NnError::StaleCache);
        }
        if grad_out.len() != self.out_dim() {
            return Err(NnError::DimensionMismatch {
                what: "output gradient",
                expected: self.out_dim(),
                got: grad_out.len(),
            });
        }
        let mut grads = MlpGrads::zeros_like(self);
        let mut delta = grad_out.to_vec();
        for li in (0..self.layers.len()).rev() {
            let last = li + 1 == self.layers.len();
            let fan_out = self.sizes[li + 1];
            // Hidden activations are tanh(z); d tanh = 1 − a².
            if !last {
                for (d, a) in delta.iter_mut().zip(&cache.acts[li + 1]) {
                    *d *= F::one() - *a * *a;
                }
            }
            let input = &cache.acts[li];
            for (i, a) in input.iter().enumerate() {
                let row = &mut grads.w[li][i * fan_out..(i + 1) * fan_out];
                for (g, d) in row.iter_mut().zip(&delta) {
                    *g += *a * *d;
                }
            }
            grads.b[li].copy_from_slice(&delta);
            if li > 0 {
                let layer = &self.layers[li];
                let mut prev = vec![F::zero(); self.sizes[li]];
                for (i, p) in prev.iter_mut().enumerate() {
                    let row = &layer.w[i * fan_out..(i + 1) * fan_out];
                    *p = row.iter().zip(&delta).map(|(w, d)| *w * *d).sum();
                }
                delta = prev;
            }
        }
        Ok(grads)
    }

    /// One Adam step over all parameters; invalidates outstanding caches.
    pub fn adam_step(&mut self, grads: &MlpGrads<F>, opt: &mut Adam<F>) -> Result<(), NnError> {
        {
            let mut tensors = self.flat_params_mut();
            opt.step(&mut tensors, &grads.flat())?;
        }
        self.bump_version();
        Ok(())
    }
}

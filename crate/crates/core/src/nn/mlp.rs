use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Silu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Silu => z / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
        }
    }

    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 + z * (1.0 - s))
            }
            Activation::Tanh => 1.0 - z.tanh().powi(2),
        }
    }
}

/// Fully connected network with a flat parameter vector.
///
/// Layer `l` maps `sizes[l] → sizes[l+1]`; its weights (`out × in`, row-major)
/// are followed by its biases. The last layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// Activations saved by [`Mlp::forward_cached`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Layer inputs; `inputs[0]` is the network input.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

/// Number of parameters for the given layer sizes.
pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

impl Mlp {
    /// All-zero network.
    pub fn zeros(sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("layer sizes must have >= 2 positive entries, got {sizes:?}")));
        }
        let n = param_count(&sizes);
        Ok(Self { sizes, activation, params: vec![0.0; n] })
    }

    /// He-style initialization: weights `N(0, 2/fan_in)`, biases zero.
    pub fn init(sizes: Vec<usize>, activation: Activation, rng: &mut impl Rng) -> Result<Self> {
        let mut net = Self::zeros(sizes, activation)?;
        let mut off = 0;
        for w in net.sizes.clone().windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive variance");
            for p in &mut net.params[off..off + fan_in * fan_out] {
                *p = normal.sample(rng);
            }
            off += (fan_in + 1) * fan_out;
        }
        Ok(net)
    }

    /// Hidden layers of equal width between `input` and `output`; `layers`
    /// counts linear maps.
    pub fn uniform_sizes(input: usize, hidden: usize, layers: usize, output: usize) -> Vec<usize> {
        let mut s = vec![input];
        s.extend(std::iter::repeat_n(hidden, layers.saturating_sub(1)));
        s.push(output);
        s
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two sizes")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::DimensionMismatch { expected: self.params.len(), got: params.len() });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network parameters".into()));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn layer(&self, l: usize, off: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let w = ArrayView2::from_shape((o, i), &self.params[off..off + o * i]).expect("layer shape");
        let b = ArrayView1::from(&self.params[off + o * i..off + o * i + o]);
        (w, b)
    }

    fn check_input(&self, input: &ArrayView2<f64>) -> Result<()> {
        if input.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: input.ncols() });
        }
        Ok(())
    }

    /// Batched evaluation, one input per row.
    pub fn forward(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&input)?;
        let mut a = input.to_owned();
        let mut off = 0;
        let last = self.sizes.len() - 2;
        for l in 0..=last {
            let (w, b) = self.layer(l, off);
            let mut z = a.dot(&w.t());
            z += &b;
            if l < last {
                z.mapv_inplace(|v| self.activation.apply(v));
            }
            a = z;
            off += (self.sizes[l] + 1) * self.sizes[l + 1];
        }
        Ok(a)
    }

    pub fn forward_cached(&self, input: ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_input(&input)?;
        let mut inputs = vec![input.to_owned()];
        let mut pre = Vec::new();
        let mut off = 0;
        let last = self.sizes.len() - 2;
        let mut output = Array2::zeros((0, 0));
        for l in 0..=last {
            let (w, b) = self.layer(l, off);
            let mut z = inputs[l].dot(&w.t());
            z += &b;
            if l < last {
                let a = z.mapv(|v| self.activation.apply(v));
                pre.push(z);
                inputs.push(a);
            } else {
                output = z;
            }
            off += (self.sizes[l] + 1) * self.sizes[l + 1];
        }
        Ok(ForwardCache { inputs, pre, output })
    }

    /// Reverse pass: gradient of the loss with respect to the parameters given
    /// `d_out = ∂loss/∂output`.
    pub fn backward(&self, cache: &ForwardCache, d_out: ArrayView2<f64>) -> Result<Vec<f64>> {
        if d_out.dim() != cache.output.dim() {
            return Err(Error::DimensionMismatch { expected: cache.output.len(), got: d_out.len() });
        }
        let mut grad = vec![0.0; self.params.len()];
        let offsets: Vec<usize> = self
            .sizes
            .windows(2)
            .scan(0, |acc, w| {
                let o = *acc;
                *acc += (w[0] + 1) * w[1];
                Some(o)
            })
            .collect();
        let mut dz = d_out.to_owned();
        for l in (0..self.sizes.len() - 1).rev() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let gw = dz.t().dot(&cache.inputs[l]);
            let gb: Array1<f64> = dz.sum_axis(Axis(0));
            grad[off..off + o * i].copy_from_slice(gw.as_slice().expect("standard layout"));
            grad[off + o * i..off + o * i + o].copy_from_slice(gb.as_slice().expect("standard layout"));
            if l > 0 {
                let (w, _) = self.layer(l, off);
                let mut da = dz.dot(&w);
                da.zip_mut_with(&cache.pre[l - 1], |d, z| *d *= self.activation.derivative(*z));
                dz = da;
            }
        }
        Ok(grad)
    }

    /// Loss and parameter gradient for a loss defined on the batched output.
    /// `loss` returns the scalar value and `∂loss/∂output`.
    pub fn value_and_grad<F>(&self, input: ArrayView2<f64>, loss: F) -> Result<(f64, Vec<f64>)>
    where
        F: FnOnce(ArrayView2<f64>) -> Result<(f64, Array2<f64>)>,
    {
        let cache = self.forward_cached(input)?;
        let (value, d_out) = loss(cache.output.view())?;
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("loss value {value}")));
        }
        let grad = self.backward(&cache, d_out.view())?;
        Ok((value, grad))
    }
}

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::Array2;
use rand::Rng;

use super::embed::Embedding;
use super::mlp::{Activation, Mlp};
use crate::error::{Error, Result};
use crate::jump::{JumpPotential, Point};

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// Embedding followed by an MLP. The version tag changes on every parameter
/// update so that cached convolution fields can detect staleness.
#[derive(Debug, Clone)]
pub struct ScoreNet {
    pub embedding: Embedding,
    mlp: Mlp,
    version: u64,
}

impl ScoreNet {
    pub fn new(embedding: Embedding, mlp: Mlp) -> Result<Self> {
        embedding.validate()?;
        if mlp.input_dim() != embedding.width() {
            return Err(Error::DimensionMismatch { expected: embedding.width(), got: mlp.input_dim() });
        }
        Ok(Self { embedding, mlp, version: fresh_version() })
    }

    /// `layers` linear maps of width `hidden` with randomly initialized weights.
    pub fn init(
        embedding: Embedding,
        hidden: usize,
        layers: usize,
        output: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        embedding.validate()?;
        let sizes = Mlp::uniform_sizes(embedding.width(), hidden, layers, output);
        Self::new(embedding, Mlp::init(sizes, activation, rng)?)
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn params(&self) -> &[f64] {
        self.mlp.params()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        self.mlp.set_params(params)?;
        self.version = fresh_version();
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        self.mlp.output_dim()
    }

    pub fn eval<X: AsRef<[f64]>>(&self, ts: &[f64], xs: &[X]) -> Result<Array2<f64>> {
        let input = self.embedding.batch(ts, xs)?;
        self.mlp.forward(input.view())
    }

    pub fn eval_one(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.eval(&[t], &[x])?.into_raw_vec_and_offset().0)
    }

    /// Loss value and parameter gradient, `loss` acting on the batched output.
    pub fn value_and_grad<X, F>(&self, ts: &[f64], xs: &[X], loss: F) -> Result<(f64, Vec<f64>)>
    where
        X: AsRef<[f64]>,
        F: FnOnce(ndarray::ArrayView2<f64>) -> Result<(f64, Array2<f64>)>,
    {
        let input = self.embedding.batch(ts, xs)?;
        self.mlp.value_and_grad(input.view(), loss)
    }
}

/// Scalar network output read as the jump potential `g_t(x)`.
impl JumpPotential for ScoreNet {
    fn potential(&self, t: f64, x: Point) -> f64 {
        self.potential_batch(t, &[x])[0]
    }

    fn potential_batch(&self, t: f64, xs: &[Point]) -> Vec<f64> {
        let ts = vec![t; xs.len()];
        let out = self.eval(&ts, xs).expect("potential network matches the torus embedding");
        out.column(0).to_vec()
    }

    fn version(&self) -> u64 {
        self.version
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::StateEmbedding;
    use crate::rng::seeded;

    #[test]
    fn version_changes_on_update() {
        let e = Embedding::new(StateEmbedding::Fourier { modes: 2 }, 2, 1.0);
        let mut net = ScoreNet::init(e, 8, 2, 1, Activation::Silu, &mut seeded(1)).unwrap();
        let v = net.version();
        let p = net.params().to_vec();
        net.set_params(&p).unwrap();
        assert_ne!(v, net.version());
        assert_eq!(net.score(0.3, [0.1, 0.2], [0.1, 0.2]), 1.0);
    }
}

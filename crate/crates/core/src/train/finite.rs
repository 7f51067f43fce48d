use ndarray::Array2;
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::NetConfig;
use super::engine::{Engine, Sampler};
use crate::error::{Error, Result};
use crate::finite::{
    build_masked_rate, build_uniform_rate, discrete_sm_term, discrete_sm_term_grad, simulate_frozen, ChainKind,
    ConditionalLawDiscrete, DiscreteConditional, DiscreteSpace,
};
use crate::generator::{ConstantRate, RateFamily, RateMatrix, ScoreProvider, ScoreTable};
use crate::jump::JumpStepStats;
use crate::nn::{Embedding, ScoreNet, StateEmbedding};
use crate::rng::split;
use crate::time::TimeDistribution;

/// Uniform or masked chain on `[S]^d` with a network potential
/// `ŝ_t(x, y) = exp(g_t(y) - g_t(x))` over one-hot inputs.
pub struct FiniteEngine {
    pub space: DiscreteSpace,
    pub chain: ChainKind,
    pub family: ConstantRate,
    pub cond: ConditionalLawDiscrete,
    pub data: Vec<usize>,
    pub horizon: f64,
    rm: RateMatrix,
    onehot: Vec<Vec<f64>>,
    /// States `y` with `λ(x, y) > 0`, per `x`.
    neighbors: Vec<Vec<usize>>,
}

impl FiniteEngine {
    pub fn new(space: DiscreteSpace, chain: ChainKind, data: Vec<usize>, horizon: f64) -> Result<Self> {
        let cond = ConditionalLawDiscrete::new(space, chain)?;
        let family = match chain {
            ChainKind::Uniform => build_uniform_rate(&space)?,
            ChainKind::Masked => build_masked_rate(&space)?,
        };
        let n = space.num_states();
        if data.is_empty() || data.iter().any(|&x| x >= n) {
            return Err(Error::Domain("finite dataset must be nonempty with valid state indices".into()));
        }
        if space.masked && data.iter().any(|&x| space.decode(x).contains(&0)) {
            return Err(Error::Domain("masked data may not contain the null symbol".into()));
        }
        let rm = family.at(0.0);
        let width = space.cardinality_per_dim();
        let onehot = (0..n)
            .map(|x| {
                let mut v = vec![0.0; space.dims * width];
                for (k, s) in space.decode(x).into_iter().enumerate() {
                    v[k * width + s] = 1.0;
                }
                v
            })
            .collect();
        let neighbors =
            (0..n).map(|x| (0..n).filter(|&y| y != x && rm.intensity(x, y) > 0.0).collect()).collect();
        Ok(Self { space, chain, family, cond, data, horizon, rm, onehot, neighbors })
    }

    pub fn num_states(&self) -> usize {
        self.space.num_states()
    }

    /// `g_t` at every state.
    pub fn potential(&self, net: &ScoreNet, t: f64) -> Result<Vec<f64>> {
        let ts = vec![t; self.num_states()];
        Ok(net.eval(&ts, &self.onehot)?.column(0).to_vec())
    }

    /// Network scores as a [`ScoreProvider`].
    pub fn score_provider<'a>(&'a self, net: &'a ScoreNet) -> impl ScoreProvider + 'a {
        move |t: f64| {
            let g = self.potential(net, t).expect("network matches the one-hot embedding");
            ScoreTable::from_log_potential(&g).expect("finite network potential")
        }
    }
}

struct Draw {
    t: f64,
    xt: usize,
    cond: Vec<f64>,
}

impl Engine for FiniteEngine {
    type State = usize;

    fn embedding(&self, net: &NetConfig) -> Embedding {
        Embedding {
            state: StateEmbedding::Raw,
            dim: self.onehot[0].len(),
            horizon: self.horizon,
            time_frequencies: net.time_frequencies,
        }
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn loss_and_grad(
        &self,
        net: &ScoreNet,
        psi: &TimeDistribution,
        batch: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, Vec<f64>)> {
        let draws = split(rng, batch)
            .into_par_iter()
            .map(|mut r| {
                let x0 = self.data[r.random_range(0..self.data.len())];
                let t = psi.sample(&mut r);
                let xt = self.cond.sample(x0, t, &mut r)?;
                let cond = self.cond.distribution(x0, t)?;
                Ok(Draw { t, xt, cond })
            })
            .collect::<Result<Vec<_>>>()?;
        // rows per draw: x_t followed by its neighbours
        let mut ts = Vec::new();
        let mut xs = Vec::new();
        let mut offsets = Vec::with_capacity(batch);
        for d in &draws {
            offsets.push(xs.len());
            ts.push(d.t);
            xs.push(self.onehot[d.xt].as_slice());
            for &y in &self.neighbors[d.xt] {
                ts.push(d.t);
                xs.push(self.onehot[y].as_slice());
            }
        }
        let n = self.num_states();
        net.value_and_grad(&ts, &xs, |out| {
            let mut d_out = Array2::zeros(out.dim());
            let mut total = 0.0;
            let mut row = vec![1.0; n];
            for (d, &off) in draws.iter().zip(&offsets) {
                let g_xt = out[[off, 0]];
                let nb = &self.neighbors[d.xt];
                for (k, &y) in nb.iter().enumerate() {
                    row[y] = (out[[off + 1 + k, 0]] - g_xt).exp();
                }
                let term = discrete_sm_term(&self.rm, &d.cond, d.xt, &row)?;
                if !term.is_finite() {
                    return Err(Error::NonFinite(format!("loss term at t = {}, x_t = {}", d.t, d.xt)));
                }
                total += term;
                let gs = discrete_sm_term_grad(&self.rm, &d.cond, d.xt, &row);
                let mut acc = 0.0;
                for (k, &y) in nb.iter().enumerate() {
                    let dg = gs[y] * row[y] / batch as f64;
                    d_out[[off + 1 + k, 0]] += dg;
                    acc += dg;
                    row[y] = 1.0;
                }
                d_out[[off, 0]] -= acc;
            }
            Ok((total / batch as f64, d_out))
        })
    }

    fn prior_sample(&self, rng: &mut dyn RngCore) -> Result<usize> {
        Ok(match self.chain {
            ChainKind::Uniform => rng.random_range(0..self.num_states()),
            ChainKind::Masked => self.space.encode(&vec![0; self.space.dims]),
        })
    }
}

/// Exact exponential-clock simulation of the frozen backward rates.
impl Sampler<dyn ScoreProvider + '_> for FiniteEngine {
    type State = usize;

    fn step_batch(
        &self,
        model: &(dyn ScoreProvider + '_),
        states: &mut [usize],
        rngs: &mut [ChaCha8Rng],
        t: f64,
        kappa: f64,
    ) -> Result<JumpStepStats> {
        let back = self.family.at(t).backward(&model.score(t))?;
        states.par_iter_mut().zip(rngs.par_iter_mut()).for_each(|(x, r)| *x = simulate_frozen(&back, *x, kappa, r));
        Ok(JumpStepStats::default())
    }
}

impl Sampler<ScoreNet> for FiniteEngine {
    type State = usize;

    fn step_batch(
        &self,
        model: &ScoreNet,
        states: &mut [usize],
        rngs: &mut [ChaCha8Rng],
        t: f64,
        kappa: f64,
    ) -> Result<JumpStepStats> {
        let g = self.potential(model, t)?;
        let table = ScoreTable::from_log_potential(&g)?;
        let fixed = move |_: f64| table.clone();
        <Self as Sampler<dyn ScoreProvider>>::step_batch(self, &fixed, states, rngs, t, kappa)
    }
}

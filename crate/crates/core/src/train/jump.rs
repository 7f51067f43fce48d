use ndarray::Array2;
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::NetConfig;
use super::engine::{Engine, Sampler};
use crate::error::{Error, Result};
use crate::jump::{
    backward_jump_step, draw_jump_sample, jump_term, jump_term_grad, wrap, ConvolutionField, JumpPotential,
    JumpSample, JumpStepStats, Point, TorusJumpSpec,
};
use crate::nn::{Embedding, ScoreNet, StateEmbedding};
use crate::rng::split;
use crate::time::TimeDistribution;

/// Torus jump engine with a scalar potential head `g_t(x)`.
pub struct JumpEngine {
    pub spec: TorusJumpSpec,
    pub data: Vec<Point>,
    pub horizon: f64,
    /// Kernel draws per sample in the loss.
    pub inner: usize,
    pub fourier_modes: usize,
}

impl JumpEngine {
    pub fn new(spec: TorusJumpSpec, data: Vec<Point>, horizon: f64, inner: usize, fourier_modes: usize) -> Result<Self> {
        spec.validate()?;
        if data.is_empty() || inner == 0 || fourier_modes == 0 {
            return Err(Error::Domain("jump engine needs data, inner draws and Fourier modes".into()));
        }
        let data = data.into_iter().map(|p| [wrap(p[0]), wrap(p[1])]).collect();
        Ok(Self { spec, data, horizon, inner, fourier_modes })
    }
}

impl Engine for JumpEngine {
    type State = Point;

    fn embedding(&self, net: &NetConfig) -> Embedding {
        Embedding {
            state: StateEmbedding::Fourier { modes: self.fourier_modes },
            dim: 2,
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
        let draws: Vec<JumpSample> = split(rng, batch)
            .into_par_iter()
            .map(|mut r| {
                let x0 = self.data[r.random_range(0..self.data.len())];
                draw_jump_sample(&self.spec, x0, psi, self.inner, &mut r)
            })
            .collect::<Result<_>>()?;
        // rows per draw: x_t, the kernel points, x0
        let m = self.inner;
        let stride = m + 2;
        let mut ts = Vec::with_capacity(batch * stride);
        let mut xs: Vec<Point> = Vec::with_capacity(batch * stride);
        for s in &draws {
            ts.extend(std::iter::repeat_n(s.t, stride));
            xs.push(s.xt);
            xs.extend_from_slice(&s.ys);
            xs.push(s.x0);
        }
        net.value_and_grad(&ts, &xs, |out| {
            let mut d_out = Array2::zeros(out.dim());
            let mut total = 0.0;
            let b = batch as f64;
            for (k, s) in draws.iter().enumerate() {
                let o = k * stride;
                let g_xt = out[[o, 0]];
                let g_ys: Vec<f64> = (0..m).map(|j| out[[o + 1 + j, 0]]).collect();
                let g_x0 = out[[o + m + 1, 0]];
                let term = jump_term(&self.spec, s, g_xt, &g_ys, g_x0);
                if !term.is_finite() {
                    return Err(Error::NonFinite(format!("loss term at t = {}, x_t = {:?}", s.t, s.xt)));
                }
                total += term;
                let (dx, dy, d0) = jump_term_grad(&self.spec, s, g_xt, &g_ys);
                d_out[[o, 0]] = dx / b;
                for j in 0..m {
                    d_out[[o + 1 + j, 0]] = dy[j] / b;
                }
                d_out[[o + m + 1, 0]] = d0 / b;
            }
            Ok((total / b, d_out))
        })
    }

    /// Uniform on the torus, the forward stationary law.
    fn prior_sample(&self, rng: &mut dyn RngCore) -> Result<Point> {
        Ok(crate::jump::uniform_point(rng))
    }
}

/// Frozen-intensity jump step: one convolution field per step, then
/// independent Poisson-thinned jumps per sample.
impl<P: JumpPotential + ?Sized> Sampler<P> for JumpEngine {
    type State = Point;

    fn step_batch(
        &self,
        model: &P,
        states: &mut [Point],
        rngs: &mut [ChaCha8Rng],
        t: f64,
        kappa: f64,
    ) -> Result<JumpStepStats> {
        let field = ConvolutionField::build(&self.spec, model, t)?;
        let per: Vec<JumpStepStats> = states
            .par_iter_mut()
            .zip(rngs.par_iter_mut())
            .map(|(y, r)| {
                let mut st = JumpStepStats::default();
                *y = backward_jump_step(&self.spec, model, &field, *y, t, kappa, r, &mut st)?;
                Ok(st)
            })
            .collect::<Result<_>>()?;
        let mut stats = JumpStepStats::default();
        for s in &per {
            stats.merge(s);
        }
        stats.check_acceptance()?;
        Ok(stats)
    }
}

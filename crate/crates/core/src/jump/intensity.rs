use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Poisson};

use super::fourier::{fft2, mode_radius, ContinuousPart};
use super::{wrap, Point, TorusJumpSpec};
use crate::error::{Error, Result};

/// Safety factor on the grid estimate of `sup_y ŝ(x, y)`.
pub const SUP_SAFETY: f64 = 1.1;
/// Rejection sampling gives up below this acceptance rate, measured over all
/// proposals of one backward step once [`MIN_PROPOSALS`] have been made.
pub const MIN_ACCEPTANCE: f64 = 1e-3;
pub const MIN_PROPOSALS: u64 = 10_000;
/// Hard cap on proposals for a single jump.
pub const MAX_TRIES_PER_JUMP: u64 = 1_000_000;

/// A learned or tabulated potential `g_t = log φ_t`, giving the jump score
/// `ŝ_t(x, y) = exp(g_t(y) - g_t(x))`.
pub trait JumpPotential: Sync {
    fn potential(&self, t: f64, x: Point) -> f64;

    fn potential_batch(&self, t: f64, xs: &[Point]) -> Vec<f64> {
        xs.iter().map(|x| self.potential(t, *x)).collect()
    }

    /// Changes whenever the parameters change.
    fn version(&self) -> u64 {
        0
    }

    fn score(&self, t: f64, x: Point, y: Point) -> f64 {
        (self.potential(t, y) - self.potential(t, x)).exp()
    }
}

impl<F: Fn(f64, Point) -> f64 + Sync> JumpPotential for F {
    fn potential(&self, t: f64, x: Point) -> f64 {
        self(t, x)
    }
}

/// Grid points `x_ij = (i/n, j/n)`, row-major by `i`.
pub fn grid_points(n: usize) -> Vec<Point> {
    (0..n * n).map(|m| [(m / n) as f64 / n as f64, (m % n) as f64 / n as f64]).collect()
}

/// Snapshot of `C(x) = ∫ e^{g(y) - g_max} λ(y - x) dy` on the quadrature grid
/// for one `(t, parameters)` pair, so that the backward intensity is
/// `J(x) = ∫ ŝ(x, y) λ(y - x) dy = C(x) e^{g_max - g(x)}`.
#[derive(Debug, Clone)]
pub struct ConvolutionField {
    pub version: u64,
    pub t: f64,
    pub n: usize,
    pub g: Vec<f64>,
    pub g_max: f64,
    pub conv: Vec<f64>,
    coeffs: Vec<(i64, i64, Complex64)>,
}

impl ConvolutionField {
    /// Circular convolution of `e^{g - g_max}` with the sampled kernel, i.e. the
    /// Riemann sum `n⁻² Σ_j e^{g(y_j) - g_max} λ(y_j - x_i)`, computed by FFT.
    pub fn build<P: JumpPotential + ?Sized>(spec: &TorusJumpSpec, potential: &P, t: f64) -> Result<Self> {
        let n = spec.grid;
        let g = potential.potential_batch(t, &grid_points(n));
        Self::from_grid(spec, g, t, potential.version())
    }

    pub fn from_grid(spec: &TorusJumpSpec, g: Vec<f64>, t: f64, version: u64) -> Result<Self> {
        spec.validate()?;
        let n = spec.grid;
        if g.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: g.len() });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("potential on the quadrature grid".into()));
        }
        let g_max = g.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut f: Vec<Complex64> = g.iter().map(|v| Complex64::new((v - g_max).exp(), 0.0)).collect();
        let mut k: Vec<Complex64> = grid_points(n).iter().map(|d| Complex64::new(spec.kernel(*d), 0.0)).collect();
        fft2(&mut f, n, false);
        fft2(&mut k, n, false);
        let nn = (n * n) as f64;
        // spectrum of the Riemann-sum convolution, normalized as Fourier coefficients
        let spec_c: Vec<Complex64> = f.iter().zip(&k).map(|(a, b)| a * b / (nn * nn)).collect();
        let mut conv_c = spec_c.clone();
        fft2(&mut conv_c, n, true);
        let conv: Vec<f64> = conv_c.iter().map(|z| z.re).collect();
        let cut = mode_radius(spec).min(spec.modes as f64).powi(2);
        let half = (n / 2) as i64;
        let mut coeffs = Vec::new();
        for k1 in -half + 1..half {
            for k2 in -half + 1..half {
                if ((k1 * k1 + k2 * k2) as f64) <= cut {
                    let idx = k1.rem_euclid(n as i64) as usize * n + k2.rem_euclid(n as i64) as usize;
                    coeffs.push((k1, k2, spec_c[idx]));
                }
            }
        }
        Ok(Self { version, t, n, g, g_max, conv, coeffs })
    }

    pub fn check(&self, version: u64, t: f64) -> Result<()> {
        if self.version != version || self.t.to_bits() != t.to_bits() {
            return Err(Error::StaleReference { built: self.version, queried: version });
        }
        Ok(())
    }

    /// `J` at grid point `index`.
    pub fn intensity_at_index(&self, index: usize) -> f64 {
        self.conv[index] * (self.g_max - self.g[index]).exp()
    }

    /// `C(x)` off the grid by trigonometric interpolation of the (band-limited) field.
    pub fn conv_at(&self, x: Point) -> f64 {
        self.coeffs
            .iter()
            .map(|(k1, k2, c)| (c * Complex64::from_polar(1.0, 2.0 * PI * (*k1 as f64 * x[0] + *k2 as f64 * x[1]))).re)
            .sum()
    }

    /// `J(x)` given the potential value `g(x)`.
    pub fn intensity(&self, x: Point, g_x: f64) -> f64 {
        self.conv_at(x) * (self.g_max - g_x).exp()
    }

    /// Bound `Ŝ` on `sup_y ŝ(x, y)` used by rejection sampling.
    pub fn sup_score(&self, g_x: f64) -> f64 {
        SUP_SAFETY * (self.g_max - g_x).exp()
    }

    pub fn reference(&self, y_ref: usize) -> ReferenceIntegral {
        ReferenceIntegral { version: self.version, t: self.t, y_ref, j_ref: self.intensity_at_index(y_ref) }
    }
}

/// A precomputed `J(y_ref)` that other grid points reuse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceIntegral {
    pub version: u64,
    pub t: f64,
    pub y_ref: usize,
    pub j_ref: f64,
}

impl ReferenceIntegral {
    /// `J(x) = J(y_ref) / ŝ(y_ref, x) · C(x) / C(y_ref)`. The last factor is 1
    /// only for translation-invariant fields; reading it from the stored
    /// convolution makes the reuse exact for any potential.
    pub fn reuse(&self, field: &ConvolutionField, x: usize) -> Result<f64> {
        field.check(self.version, self.t)?;
        if x >= field.conv.len() || self.y_ref >= field.conv.len() {
            return Err(Error::Domain(format!("grid index {x} out of range")));
        }
        let s_ref_x = (field.g[x] - field.g[self.y_ref]).exp();
        Ok(self.j_ref / s_ref_x * (field.conv[x] / field.conv[self.y_ref]))
    }
}

/// Counters accumulated by [`backward_jump_step`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct JumpStepStats {
    pub jumps: u64,
    pub proposals: u64,
    pub sup_violations: u64,
}

impl JumpStepStats {
    pub fn merge(&mut self, o: &Self) {
        self.jumps += o.jumps;
        self.proposals += o.proposals;
        self.sup_violations += o.sup_violations;
    }

    /// Fails once enough proposals were made and the acceptance rate is
    /// below [`MIN_ACCEPTANCE`].
    pub fn check_acceptance(&self) -> Result<()> {
        if self.proposals >= MIN_PROPOSALS && self.acceptance() < MIN_ACCEPTANCE {
            return Err(Error::LowAcceptance { rate: self.acceptance() });
        }
        Ok(())
    }

    pub fn acceptance(&self) -> f64 {
        if self.proposals == 0 {
            1.0
        } else {
            self.jumps as f64 / self.proposals as f64
        }
    }
}

/// One frozen-intensity backward step of length `kappa` at forward time `t`:
/// `N ~ Poisson(κ J(y))` jumps, each drawn by rejection from the kernel with
/// acceptance `ŝ(y_cur, y') / Ŝ`.
#[allow(clippy::too_many_arguments)]
pub fn backward_jump_step<P: JumpPotential + ?Sized>(
    spec: &TorusJumpSpec,
    potential: &P,
    field: &ConvolutionField,
    y: Point,
    t: f64,
    kappa: f64,
    rng: &mut dyn RngCore,
    stats: &mut JumpStepStats,
) -> Result<Point> {
    field.check(potential.version(), t)?;
    if !(kappa > 0.0) {
        return Err(Error::Domain(format!("step must be positive, got {kappa}")));
    }
    let mut g_cur = potential.potential(t, y);
    let rate = kappa * field.intensity(y, g_cur);
    if !rate.is_finite() || rate < 0.0 {
        return Err(Error::NonFinite(format!("jump intensity {rate} at {y:?}")));
    }
    let count = if rate > 0.0 { Poisson::new(rate).map_err(|e| Error::Domain(e.to_string()))?.sample(rng) as u64 } else { 0 };
    let mut cur = y;
    for _ in 0..count {
        let bound = field.sup_score(g_cur);
        let mut tries = 0;
        loop {
            tries += 1;
            stats.proposals += 1;
            let cand = spec.propose(cur, rng);
            let g_c = potential.potential(t, cand);
            let ratio = (g_c - g_cur).exp();
            if ratio > bound {
                stats.sup_violations += 1;
            }
            if rng.random::<f64>() * bound < ratio {
                cur = cand;
                g_cur = g_c;
                stats.jumps += 1;
                break;
            }
            if tries >= MAX_TRIES_PER_JUMP {
                return Err(Error::LowAcceptance { rate: 1.0 / tries as f64 });
            }
        }
    }
    Ok([wrap(cur[0]), wrap(cur[1])])
}

/// `log p_t` tabulated on the quadrature grid for a sample set, with the
/// transition law applied exactly in Fourier space:
/// `p_t = e^{-tM} H + c_t ⊛ H`, `H` the grid histogram of the data.
#[derive(Debug, Clone)]
pub struct GridPotential {
    pub n: usize,
    pub times: Vec<f64>,
    pub logs: Vec<Vec<f64>>,
}

impl GridPotential {
    pub fn true_potential(spec: &TorusJumpSpec, data: &[Point], times: &[f64]) -> Result<Self> {
        spec.validate()?;
        if data.is_empty() {
            return Err(Error::Domain("empty dataset".into()));
        }
        let n = spec.grid;
        let nn = (n * n) as f64;
        let mut h = vec![0.0; n * n];
        for p in data {
            let i = ((p[0] * n as f64).round() as usize) % n;
            let j = ((p[1] * n as f64).round() as usize) % n;
            h[i * n + j] += nn / data.len() as f64;
        }
        let mut h_hat: Vec<Complex64> = h.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        fft2(&mut h_hat, n, false);
        let idx = |k: i64| k.rem_euclid(n as i64) as usize;
        let mut logs = Vec::with_capacity(times.len());
        for &t in times {
            let part = ContinuousPart::new(spec, t);
            let mut buf = vec![Complex64::new(0.0, 0.0); n * n];
            for (k1, k2, c) in part.modes() {
                for (a, b) in [(k1, k2), (-k1, -k2)] {
                    let m = idx(a) * n + idx(b);
                    buf[m] = h_hat[m] * c / nn;
                }
            }
            fft2(&mut buf, n, true);
            let atom = (-t * spec.mass).exp();
            logs.push(buf.iter().zip(&h).map(|(z, hv)| (atom * hv + z.re).max(1e-300).ln()).collect());
        }
        Ok(Self { n, times: times.to_vec(), logs })
    }

    fn slot(&self, t: f64) -> usize {
        let mut best = 0;
        for (k, s) in self.times.iter().enumerate() {
            if (s - t).abs() < (self.times[best] - t).abs() {
                best = k;
            }
        }
        best
    }

    /// Density `p_t` on the grid at the tabulated time nearest `t`.
    pub fn density_grid(&self, t: f64) -> Vec<f64> {
        self.logs[self.slot(t)].iter().map(|v| v.exp()).collect()
    }
}

impl JumpPotential for GridPotential {
    /// Periodic bilinear interpolation at the tabulated time nearest `t`.
    fn potential(&self, t: f64, x: Point) -> f64 {
        let g = &self.logs[self.slot(t)];
        let n = self.n;
        let (u, v) = (wrap(x[0]) * n as f64, wrap(x[1]) * n as f64);
        let (i0, j0) = (u.floor() as usize % n, v.floor() as usize % n);
        let (fu, fv) = (u - u.floor(), v - v.floor());
        let (i1, j1) = ((i0 + 1) % n, (j0 + 1) % n);
        g[i0 * n + j0] * (1.0 - fu) * (1.0 - fv)
            + g[i1 * n + j0] * fu * (1.0 - fv)
            + g[i0 * n + j1] * (1.0 - fu) * fv
            + g[i1 * n + j1] * fu * fv
    }

    fn potential_batch(&self, t: f64, xs: &[Point]) -> Vec<f64> {
        xs.iter().map(|x| self.potential(t, *x)).collect()
    }
}

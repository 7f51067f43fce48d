use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{Point, TorusJumpSpec};
use crate::error::{Error, Result};

/// Floor applied to negative ringing in tabulated densities.
pub const CLAMP_FLOOR: f64 = 1e-300;
/// Largest total mass that clamping may add before tabulation is rejected.
pub const MAX_CLAMPED_MASS: f64 = 1e-8;

/// Unnormalized 2-D DFT of a row-major `n × n` array in place:
/// forward `Σ_x f(x) e^{-2πi k·x/n}`, inverse with `e^{+2πi k·x/n}`.
pub fn fft2(data: &mut [Complex64], n: usize, inverse: bool) {
    assert_eq!(data.len(), n * n, "fft2 expects an n × n array");
    let mut planner = FftPlanner::new();
    let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    for row in data.chunks_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n {
        for i in 0..n {
            col[i] = data[i * n + j];
        }
        fft.process(&mut col);
        for i in 0..n {
            data[i * n + j] = col[i];
        }
    }
}

/// Smooth part `c_t` of the transition law: `p_{t|0}(x | x0) = e^{-tM} δ_{x0}(x) + c_t(x - x0)`,
/// with Fourier coefficients `ĉ(k) = exp(t(λ̂(k) - M)) - e^{-tM}`.
#[derive(Debug, Clone)]
pub struct ContinuousPart {
    pub t: f64,
    kmax: usize,
    c0: f64,
    /// Half-plane modes `(k1, k2, ĉ)`.
    modes: Vec<(i64, i64, f64)>,
}

/// Modes with `exp(-2π²σ²|k|²)` below this never matter relative to `ĉ(0)`.
const MODE_FLOOR: f64 = 1e-18;

/// Radius beyond which kernel-smoothed Fourier modes are negligible.
pub(crate) fn mode_radius(spec: &TorusJumpSpec) -> f64 {
    (-MODE_FLOOR.ln() / (2.0 * PI * PI * spec.sigma * spec.sigma)).sqrt()
}

impl ContinuousPart {
    pub fn new(spec: &TorusJumpSpec, t: f64) -> Self {
        let m = spec.mass;
        let atom = (-t * m).exp();
        let cut = mode_radius(spec);
        let kmax = (cut.floor() as usize).min(spec.modes);
        let coeff = |k1: i64, k2: i64| -> f64 {
            let lh = spec.kernel_hat(k1, k2);
            // e^{-tM}(e^{t λ̂} - 1), accurate for small t λ̂
            atom * (t * lh).exp_m1()
        };
        let k = kmax as i64;
        let mut modes = Vec::new();
        for k2 in 0..=k {
            for k1 in -k..=k {
                if (k2 == 0 && k1 <= 0) || ((k1 * k1 + k2 * k2) as f64) > cut * cut {
                    continue;
                }
                modes.push((k1, k2, coeff(k1, k2)));
            }
        }
        Self { t, kmax, c0: coeff(0, 0), modes }
    }

    /// Total mass of the smooth part, `1 - e^{-tM}`.
    pub fn mass(&self) -> f64 {
        self.c0
    }

    pub fn coefficient(&self, k1: i64, k2: i64) -> f64 {
        if k1 == 0 && k2 == 0 {
            return self.c0;
        }
        let (a, b) = if k2 > 0 || (k2 == 0 && k1 > 0) { (k1, k2) } else { (-k1, -k2) };
        self.modes.iter().find(|m| m.0 == a && m.1 == b).map(|m| m.2).unwrap_or(0.0)
    }

    pub fn modes(&self) -> impl Iterator<Item = (i64, i64, f64)> + '_ {
        std::iter::once((0, 0, self.c0)).chain(self.modes.iter().copied())
    }

    /// `c_t(δ)` by direct summation of the truncated Fourier series.
    pub fn eval(&self, delta: Point) -> f64 {
        let k = self.kmax;
        let (mut c1, mut s1, mut c2, mut s2) = (vec![0.0; k + 1], vec![0.0; k + 1], vec![0.0; k + 1], vec![0.0; k + 1]);
        for j in 0..=k {
            let (a, b) = (2.0 * PI * j as f64 * delta[0], 2.0 * PI * j as f64 * delta[1]);
            (s1[j], c1[j]) = a.sin_cos();
            (s2[j], c2[j]) = b.sin_cos();
        }
        let mut acc = self.c0;
        for &(k1, k2, c) in &self.modes {
            let i = k1.unsigned_abs() as usize;
            let sa = if k1 < 0 { -s1[i] } else { s1[i] };
            acc += 2.0 * c * (c1[i] * c2[k2 as usize] - sa * s2[k2 as usize]);
        }
        acc
    }

    /// `c_t(x_ij - x0)` on the `n × n` grid `x_ij = (i/n, j/n)` via one inverse FFT.
    pub fn tabulate(&self, x0: Point, n: usize) -> Vec<f64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); n * n];
        let idx = |k: i64| k.rem_euclid(n as i64) as usize;
        for (k1, k2, c) in self.modes() {
            let phase = |a: i64, b: i64| -2.0 * PI * (a as f64 * x0[0] + b as f64 * x0[1]);
            buf[idx(k1) * n + idx(k2)] += Complex64::from_polar(c, phase(k1, k2));
            if !(k1 == 0 && k2 == 0) {
                buf[idx(-k1) * n + idx(-k2)] += Complex64::from_polar(c, phase(-k1, -k2));
            }
        }
        fft2(&mut buf, n, true);
        buf.iter().map(|z| z.re).collect()
    }
}

/// Tabulated transition law from a fixed `x0`.
#[derive(Debug, Clone)]
pub struct TorusConditional {
    pub x0: Point,
    pub t: f64,
    /// Mass of the atom at `x0`.
    pub atom: f64,
    /// Grid size per axis.
    pub n: usize,
    /// Smooth density at `x_ij = (i/n, j/n)`, row-major by `i`.
    pub grid: Vec<f64>,
    /// Mass added by clamping negative ringing.
    pub clamped_mass: f64,
    part: Option<ContinuousPart>,
}

impl TorusConditional {
    pub fn new(spec: &TorusJumpSpec, x0: Point, t: f64) -> Result<Self> {
        spec.validate()?;
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("time must be >= 0, got {t}")));
        }
        let n = spec.grid;
        if t == 0.0 {
            return Ok(Self { x0, t, atom: 1.0, n, grid: vec![0.0; n * n], clamped_mass: 0.0, part: None });
        }
        let part = ContinuousPart::new(spec, t);
        let mut grid = part.tabulate(x0, n);
        let mut clamped = 0.0;
        for v in grid.iter_mut() {
            if *v < CLAMP_FLOOR {
                clamped += CLAMP_FLOOR - *v;
                *v = CLAMP_FLOOR;
            }
        }
        let clamped_mass = clamped / (n * n) as f64;
        if clamped_mass > MAX_CLAMPED_MASS {
            return Err(Error::Tolerance {
                what: format!("clamped {clamped_mass:e} of ringing mass; raise the mode cutoff or grid size"),
                tol: MAX_CLAMPED_MASS,
            });
        }
        Ok(Self { x0, t, atom: (-t * spec.mass).exp(), n, grid, clamped_mass, part: Some(part) })
    }

    /// True at `t = 0`, where the law is a point mass.
    pub fn is_delta(&self) -> bool {
        self.part.is_none()
    }

    /// Smooth density at an arbitrary point.
    pub fn density(&self, x: Point) -> f64 {
        match &self.part {
            None => 0.0,
            Some(p) => p.eval([x[0] - self.x0[0], x[1] - self.x0[1]]).max(CLAMP_FLOOR),
        }
    }

    /// Atom mass plus the grid Riemann sum of the smooth part.
    pub fn total_mass(&self) -> f64 {
        self.atom + self.grid.iter().sum::<f64>() / (self.n * self.n) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_round_trip() {
        let n = 8;
        let orig: Vec<Complex64> = (0..n * n).map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        let mut buf = orig.clone();
        fft2(&mut buf, n, false);
        fft2(&mut buf, n, true);
        for (a, b) in orig.iter().zip(&buf) {
            assert!((a - b / (n * n) as f64).norm() < 1e-12);
        }
    }

    #[test]
    fn tabulation_agrees_with_pointwise_sum() {
        let spec = TorusJumpSpec::default();
        let part = ContinuousPart::new(&spec, 0.3);
        let x0 = [0.21, 0.87];
        let grid = part.tabulate(x0, 16);
        for (i, j) in [(0, 0), (3, 14), (9, 5)] {
            let x = [i as f64 / 16.0, j as f64 / 16.0];
            let direct = part.eval([x[0] - x0[0], x[1] - x0[1]]);
            assert!((grid[i * 16 + j] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn conditional_mass_and_delta() {
        let spec = TorusJumpSpec::default();
        let c = TorusConditional::new(&spec, [0.5, 0.5], 0.7).unwrap();
        assert!((c.total_mass() - 1.0).abs() < 1e-12);
        assert!(c.grid.iter().all(|v| *v > 0.0));
        assert!(TorusConditional::new(&spec, [0.5, 0.5], 0.0).unwrap().is_delta());
    }

    #[test]
    fn long_time_is_uniform() {
        let spec = TorusJumpSpec::default();
        let c = TorusConditional::new(&spec, [0.1, 0.2], 40.0).unwrap();
        assert!(c.grid.iter().all(|v| (v - 1.0).abs() < 1e-6));
    }
}

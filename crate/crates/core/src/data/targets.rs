use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finite::DiscreteSpace;
use crate::rng::seeded;

/// 1-D mixture weights, means and variances before the absolute value.
pub const GMM1D: [(f64, f64, f64); 2] = [(0.7, 2.0, 0.25), (0.3, 4.0, 0.64)];
/// 2-D mixture weights and means (unit covariance) before the absolute value.
pub const GMM2D: [(f64, [f64; 2]); 2] = [(0.6, [2.5, 5.0]), (0.4, [5.5, 2.5])];
/// Cells per axis of the chessboard.
pub const CHESSBOARD_CELLS: usize = 4;
/// Standard deviation of the jitter added to swiss roll and moons.
pub const TORUS_JITTER: f64 = 0.01;
/// Scale mapping the moons construction (width 3) into the torus.
pub const MOONS_SCALE: f64 = 0.8 / 3.0;
/// Scale mapping the swiss roll (radius up to 4.5π) into the torus.
pub const SWISS_ROLL_SCALE: f64 = 0.4 / (4.5 * PI);

/// Target distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetSpec {
    Gmm1dAbs,
    Gmm2dAbs,
    Chessboard,
    SwissRoll,
    Moons,
    /// Random law on a finite space, fixed by `seed`.
    FiniteRandom { space: DiscreteSpace, seed: u64 },
}

/// Sample sets: points in `R^d` or state indices.
#[derive(Debug, Clone, PartialEq)]
pub enum Samples {
    Continuous(Vec<Vec<f64>>),
    Discrete(Vec<usize>),
}

impl Samples {
    pub fn len(&self) -> usize {
        match self {
            Samples::Continuous(v) => v.len(),
            Samples::Discrete(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn into_continuous(self) -> Result<Vec<Vec<f64>>> {
        match self {
            Samples::Continuous(v) => Ok(v),
            Samples::Discrete(_) => Err(Error::Config("expected a continuous target".into())),
        }
    }

    pub fn into_discrete(self) -> Result<Vec<usize>> {
        match self {
            Samples::Discrete(v) => Ok(v),
            Samples::Continuous(_) => Err(Error::Config("expected a finite-state target".into())),
        }
    }
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

fn torus_wrap(p: [f64; 2]) -> Vec<f64> {
    p.iter().map(|u| crate::jump::wrap(*u)).collect()
}

impl TargetSpec {
    /// State dimension (number of coordinates per continuous sample).
    pub fn dim(&self) -> usize {
        match self {
            TargetSpec::Gmm1dAbs => 1,
            TargetSpec::FiniteRandom { space, .. } => space.dims,
            _ => 2,
        }
    }

    pub fn is_torus(&self) -> bool {
        matches!(self, TargetSpec::Chessboard | TargetSpec::SwissRoll | TargetSpec::Moons)
    }

    /// Probabilities of the finite-state target: Dirichlet(1) weights drawn
    /// from `seed`, zero on states containing the null symbol.
    pub fn finite_probs(&self) -> Result<Vec<f64>> {
        let TargetSpec::FiniteRandom { space, seed } = self else {
            return Err(Error::Config("not a finite-state target".into()));
        };
        space.validate()?;
        let mut rng = seeded(*seed);
        let mut w: Vec<f64> = (0..space.num_states())
            .map(|i| {
                let e: f64 = Exp1.sample(&mut rng);
                if space.masked && space.decode(i).contains(&0) {
                    0.0
                } else {
                    e
                }
            })
            .collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        Ok(w)
    }

    /// Density for the targets that have one (the absolute-value mixtures,
    /// including the reflected mass).
    pub fn density(&self, x: &[f64]) -> Option<f64> {
        match self {
            TargetSpec::Gmm1dAbs => {
                let y = x[0];
                if y < 0.0 {
                    return Some(0.0);
                }
                Some(GMM1D.iter().map(|(w, m, v)| w * (normal_pdf(y, *m, *v) + normal_pdf(-y, *m, *v))).sum())
            }
            TargetSpec::Gmm2dAbs => {
                if x[0] < 0.0 || x[1] < 0.0 {
                    return Some(0.0);
                }
                let mut total = 0.0;
                for (w, m) in GMM2D {
                    for s0 in [1.0, -1.0] {
                        for s1 in [1.0, -1.0] {
                            total += w * normal_pdf(s0 * x[0], m[0], 1.0) * normal_pdf(s1 * x[1], m[1], 1.0);
                        }
                    }
                }
                Some(total)
            }
            TargetSpec::Chessboard => {
                let c = CHESSBOARD_CELLS as f64;
                let (i, j) = ((crate::jump::wrap(x[0]) * c) as usize, (crate::jump::wrap(x[1]) * c) as usize);
                Some(if (i + j) % 2 == 0 { 2.0 } else { 0.0 })
            }
            _ => None,
        }
    }

    /// `n` i.i.d. samples.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Result<Samples> {
        let pick = |rng: &mut dyn rand::RngCore, w: &[f64]| -> usize {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (k, p) in w.iter().enumerate() {
                acc += p;
                if u < acc {
                    return k;
                }
            }
            w.len() - 1
        };
        let jitter = Normal::new(0.0, TORUS_JITTER).expect("positive jitter");
        Ok(match self {
            TargetSpec::Gmm1dAbs => {
                let w: Vec<f64> = GMM1D.iter().map(|c| c.0).collect();
                Samples::Continuous(
                    (0..n)
                        .map(|_| {
                            let (_, m, v) = GMM1D[pick(rng, &w)];
                            let z: f64 = rng.sample(StandardNormal);
                            vec![(m + v.sqrt() * z).abs()]
                        })
                        .collect(),
                )
            }
            TargetSpec::Gmm2dAbs => {
                let w: Vec<f64> = GMM2D.iter().map(|c| c.0).collect();
                Samples::Continuous(
                    (0..n)
                        .map(|_| {
                            let (_, m) = GMM2D[pick(rng, &w)];
                            m.iter().map(|mu| (mu + rng.sample::<f64, _>(StandardNormal)).abs()).collect()
                        })
                        .collect(),
                )
            }
            TargetSpec::Chessboard => {
                let c = CHESSBOARD_CELLS;
                Samples::Continuous(
                    (0..n)
                        .map(|_| {
                            let k = rng.random_range(0..c * c / 2);
                            let i = k / (c / 2);
                            let j = 2 * (k % (c / 2)) + i % 2;
                            let (u, v): (f64, f64) = (rng.random(), rng.random());
                            torus_wrap([(i as f64 + u) / c as f64, (j as f64 + v) / c as f64])
                        })
                        .collect(),
                )
            }
            TargetSpec::SwissRoll => Samples::Continuous(
                (0..n)
                    .map(|_| {
                        let t = 1.5 * PI * (1.0 + 2.0 * rng.random::<f64>());
                        let (x, y) = (t * t.cos(), t * t.sin());
                        torus_wrap([
                            0.5 + SWISS_ROLL_SCALE * x + jitter.sample(rng),
                            0.5 + SWISS_ROLL_SCALE * y + jitter.sample(rng),
                        ])
                    })
                    .collect(),
            ),
            TargetSpec::Moons => Samples::Continuous(
                (0..n)
                    .map(|_| {
                        let s = PI * rng.random::<f64>();
                        let (x, y) = if rng.random::<bool>() { (s.cos(), s.sin()) } else { (1.0 - s.cos(), 0.5 - s.sin()) };
                        torus_wrap([
                            0.5 + MOONS_SCALE * (x - 0.5) + jitter.sample(rng),
                            0.5 + MOONS_SCALE * (y - 0.25) + jitter.sample(rng),
                        ])
                    })
                    .collect(),
            ),
            TargetSpec::FiniteRandom { .. } => {
                let p = self.finite_probs()?;
                Samples::Discrete((0..n).map(|_| pick(rng, &p)).collect())
            }
        })
    }
}

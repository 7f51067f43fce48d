use rand::{Rng, RngCore};

use super::evolve::evolve_density;
use super::space::DiscreteSpace;
use crate::error::{check_len, Error, Result};
use crate::generator::{DensityVector, RateFamily};

/// Access to the forward transition law `p_{t|0}(x_t | x_0)` on an indexed space.
pub trait DiscreteConditional: Sync {
    fn num_states(&self) -> usize;

    fn prob(&self, x0: usize, xt: usize, t: f64) -> Result<f64>;

    fn sample(&self, x0: usize, t: f64, rng: &mut dyn RngCore) -> Result<usize>;

    /// Full row `p_{t|0}(· | x0)`.
    fn distribution(&self, x0: usize, t: f64) -> Result<Vec<f64>> {
        (0..self.num_states()).map(|y| self.prob(x0, y, t)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainKind {
    Uniform,
    Masked,
}

/// Per-coordinate decay rate of the uniform chain built by
/// [`build_uniform_rate`](super::build_uniform_rate): each coordinate moves to
/// each of the other `S - 1` symbols at rate `1/d`, so non-constant modes decay
/// at `S/d`.
pub fn uniform_decay_rate(space: &DiscreteSpace) -> f64 {
    space.symbols as f64 / space.dims as f64
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be >= 0, got {t}")));
    }
    Ok(())
}

/// Transition law of the uniform chain: per coordinate
/// `e^{-ρt} δ_{x0}(xt) + (1 - e^{-ρt}) / S` with `ρ = S/d`.
pub fn uniform_conditional(space: &DiscreteSpace, x0: &[usize], xt: &[usize], t: f64) -> Result<f64> {
    check_time(t)?;
    check_len(space.dims, x0.len())?;
    check_len(space.dims, xt.len())?;
    if space.masked {
        return Err(Error::Domain("uniform conditional needs an unmasked space".into()));
    }
    let decay = (-uniform_decay_rate(space) * t).exp();
    let u = (1.0 - decay) / space.symbols as f64;
    Ok(x0
        .iter()
        .zip(xt)
        .map(|(a, b)| if a == b { decay + u } else { u })
        .product())
}

/// Transition law of the masked chain: per coordinate
/// `e^{-t} δ_{x0}(xt) + (1 - e^{-t}) δ_0(xt)`.
pub fn masked_conditional(space: &DiscreteSpace, x0: &[usize], xt: &[usize], t: f64) -> Result<f64> {
    check_time(t)?;
    check_len(space.dims, x0.len())?;
    check_len(space.dims, xt.len())?;
    if !space.masked {
        return Err(Error::Domain("masked conditional needs a masked space".into()));
    }
    if x0.contains(&0) {
        return Err(Error::Domain("initial state contains the null symbol".into()));
    }
    let keep = (-t).exp();
    Ok(x0
        .iter()
        .zip(xt)
        .map(|(&a, &b)| {
            if b == a {
                keep
            } else if b == 0 {
                1.0 - keep
            } else {
                0.0
            }
        })
        .product())
}

/// Closed-form conditional law for the uniform or masked chain on a product space.
#[derive(Debug, Clone, Copy)]
pub struct ConditionalLawDiscrete {
    pub space: DiscreteSpace,
    pub kind: ChainKind,
}

impl ConditionalLawDiscrete {
    pub fn new(space: DiscreteSpace, kind: ChainKind) -> Result<Self> {
        space.validate()?;
        match (kind, space.masked) {
            (ChainKind::Uniform, false) | (ChainKind::Masked, true) => Ok(Self { space, kind }),
            _ => Err(Error::Domain(format!("{kind:?} chain does not match masked = {}", space.masked))),
        }
    }

    pub fn prob_coords(&self, x0: &[usize], xt: &[usize], t: f64) -> Result<f64> {
        match self.kind {
            ChainKind::Uniform => uniform_conditional(&self.space, x0, xt, t),
            ChainKind::Masked => masked_conditional(&self.space, x0, xt, t),
        }
    }

    pub fn sample_coords(&self, x0: &[usize], t: f64, rng: &mut dyn RngCore) -> Result<Vec<usize>> {
        check_time(t)?;
        check_len(self.space.dims, x0.len())?;
        match self.kind {
            ChainKind::Uniform => {
                let decay = (-uniform_decay_rate(&self.space) * t).exp();
                Ok(x0
                    .iter()
                    .map(|&a| if rng.random::<f64>() < decay { a } else { rng.random_range(0..self.space.symbols) })
                    .collect())
            }
            ChainKind::Masked => {
                if x0.contains(&0) {
                    return Err(Error::Domain("initial state contains the null symbol".into()));
                }
                let keep = (-t).exp();
                Ok(x0.iter().map(|&a| if rng.random::<f64>() < keep { a } else { 0 }).collect())
            }
        }
    }
}

impl DiscreteConditional for ConditionalLawDiscrete {
    fn num_states(&self) -> usize {
        self.space.num_states()
    }

    fn prob(&self, x0: usize, xt: usize, t: f64) -> Result<f64> {
        self.prob_coords(&self.space.decode(x0), &self.space.decode(xt), t)
    }

    fn sample(&self, x0: usize, t: f64, rng: &mut dyn RngCore) -> Result<usize> {
        let x = self.sample_coords(&self.space.decode(x0), t, rng)?;
        Ok(self.space.encode(&x))
    }
}

/// Transition law of an arbitrary small chain, obtained by integrating the
/// Kolmogorov forward equation from a point mass. Intended for spaces of a few
/// dozen states.
pub struct KolmogorovConditional<'a, F: RateFamily> {
    pub family: &'a F,
}

impl<F: RateFamily> DiscreteConditional for KolmogorovConditional<'_, F> {
    fn num_states(&self) -> usize {
        self.family.size()
    }

    fn prob(&self, x0: usize, xt: usize, t: f64) -> Result<f64> {
        Ok(self.distribution(x0, t)?[xt])
    }

    fn distribution(&self, x0: usize, t: f64) -> Result<Vec<f64>> {
        check_time(t)?;
        let p0 = DensityVector::point_mass(self.family.size(), x0);
        Ok(evolve_density(self.family, &p0, t)?.values)
    }

    fn sample(&self, x0: usize, t: f64, rng: &mut dyn RngCore) -> Result<usize> {
        let p = self.distribution(x0, t)?;
        Ok(sample_categorical(&p, rng))
    }
}

pub(crate) fn sample_categorical(p: &[f64], rng: &mut dyn RngCore) -> usize {
    let total: f64 = p.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in p.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    p.iter().rposition(|w| *w > 0.0).unwrap_or(p.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_limits() {
        let s = DiscreteSpace::new(2, 3, false).unwrap();
        assert_eq!(uniform_conditional(&s, &[0, 2], &[0, 2], 0.0).unwrap(), 1.0);
        assert_eq!(uniform_conditional(&s, &[0, 2], &[1, 2], 0.0).unwrap(), 0.0);
        let far = uniform_conditional(&s, &[0, 2], &[1, 1], 60.0).unwrap();
        assert!((far - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn masked_limits_and_marginal() {
        let s = DiscreteSpace::new(2, 2, true).unwrap();
        assert_eq!(masked_conditional(&s, &[1, 2], &[1, 2], 0.0).unwrap(), 1.0);
        assert!((masked_conditional(&s, &[1, 2], &[0, 0], 60.0).unwrap() - 1.0).abs() < 1e-15);
        // P(coordinate 1 masked) at t = 0.3 is 1 - e^{-0.3} ≈ 0.259
        let law = ConditionalLawDiscrete::new(s, ChainKind::Masked).unwrap();
        let m: f64 = [[0, 2], [0, 0]].iter().map(|xt| law.prob_coords(&[1, 2], xt, 0.3).unwrap()).sum();
        assert!((m - (1.0 - (-0.3f64).exp())).abs() < 1e-15);
        assert!((m - 0.259).abs() < 5e-4);
        assert!(masked_conditional(&s, &[0, 1], &[0, 1], 0.1).is_err());
    }

    #[test]
    fn rows_normalize() {
        for (s, kind, x0) in [
            (DiscreteSpace::new(2, 3, false).unwrap(), ChainKind::Uniform, 4),
            (DiscreteSpace::new(2, 3, true).unwrap(), ChainKind::Masked, 5),
        ] {
            let law = ConditionalLawDiscrete::new(s, kind).unwrap();
            let row = law.distribution(x0, 0.37).unwrap();
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

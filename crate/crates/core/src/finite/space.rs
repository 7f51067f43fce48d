use crate::error::{Error, Result};
use crate::generator::{ConstantRate, RateMatrix};

/// Product space `[S]^d`, optionally with a null symbol `0` prepended to every
/// coordinate (masked spaces use symbols `0..=S`, unmasked ones `0..S`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteSpace {
    pub dims: usize,
    pub symbols: usize,
    #[serde(default)]
    pub masked: bool,
}

/// Largest state count we are willing to enumerate densely.
pub const MAX_STATES: usize = 1 << 20;

impl DiscreteSpace {
    pub fn new(dims: usize, symbols: usize, masked: bool) -> Result<Self> {
        let s = Self { dims, symbols, masked };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims == 0 || self.symbols == 0 {
            return Err(Error::Domain("space needs d >= 1 and S >= 1".into()));
        }
        let mut total: usize = 1;
        for _ in 0..self.dims {
            total = total
                .checked_mul(self.cardinality_per_dim())
                .filter(|t| *t <= MAX_STATES)
                .ok_or_else(|| Error::Domain("state count not representable".into()))?;
        }
        Ok(())
    }

    pub fn cardinality_per_dim(&self) -> usize {
        self.symbols + usize::from(self.masked)
    }

    pub fn num_states(&self) -> usize {
        self.cardinality_per_dim().pow(self.dims as u32)
    }

    /// Lexicographic index, first coordinate most significant.
    pub fn encode(&self, x: &[usize]) -> usize {
        let c = self.cardinality_per_dim();
        x.iter().fold(0, |acc, &v| acc * c + v)
    }

    pub fn decode(&self, mut index: usize) -> Vec<usize> {
        let c = self.cardinality_per_dim();
        let mut x = vec![0; self.dims];
        for slot in x.iter_mut().rev() {
            *slot = index % c;
            index /= c;
        }
        x
    }

    pub fn hamming(&self, a: usize, b: usize) -> usize {
        let (x, y) = (self.decode(a), self.decode(b));
        x.iter().zip(&y).filter(|(u, v)| u != v).count()
    }
}

/// Uniform chain: `λ(y, x) = 1/d` whenever `y` and `x` differ in exactly one
/// coordinate.
pub fn build_uniform_rate(space: &DiscreteSpace) -> Result<ConstantRate> {
    space.validate()?;
    if space.masked {
        return Err(Error::Domain("uniform rate matrix needs an unmasked space".into()));
    }
    let rate = 1.0 / space.dims as f64;
    let rm = RateMatrix::from_intensity(space.num_states(), |y, x| {
        if space.hamming(x, y) == 1 {
            rate
        } else {
            0.0
        }
    })?;
    Ok(ConstantRate(rm))
}

/// Masked chain: every non-null coordinate jumps to the null symbol at rate 1.
pub fn build_masked_rate(space: &DiscreteSpace) -> Result<ConstantRate> {
    space.validate()?;
    if !space.masked {
        return Err(Error::Domain("masked rate matrix needs a masked space".into()));
    }
    let rm = RateMatrix::from_intensity(space.num_states(), |y, x| {
        let (xs, ys) = (space.decode(x), space.decode(y));
        let mut diff = xs.iter().zip(&ys).filter(|(a, b)| a != b);
        match (diff.next(), diff.next()) {
            (Some((&a, &b)), None) if a != 0 && b == 0 => 1.0,
            _ => 0.0,
        }
    })?;
    Ok(ConstantRate(rm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::RateFamily;

    #[test]
    fn encode_decode_bijective() {
        let s = DiscreteSpace::new(3, 2, true).unwrap();
        for i in 0..s.num_states() {
            assert_eq!(s.encode(&s.decode(i)), i);
        }
        assert_eq!(s.num_states(), 27);
    }

    #[test]
    fn uniform_two_state() {
        let s = DiscreteSpace::new(1, 2, false).unwrap();
        let rm = build_uniform_rate(&s).unwrap().at(0.0);
        assert_eq!(rm.as_slice(), &[-1.0, 1.0, 1.0, -1.0]);
    }

    #[test]
    fn uniform_hamming_neighbours() {
        let s = DiscreteSpace::new(2, 2, false).unwrap();
        let rm = build_uniform_rate(&s).unwrap().at(0.0);
        for x in 0..4 {
            let out: Vec<f64> = (0..4).map(|y| rm.intensity(y, x)).filter(|r| *r > 0.0).collect();
            assert_eq!(out, vec![0.5, 0.5]);
        }
    }

    #[test]
    fn wrong_space_kind_rejected() {
        let masked = DiscreteSpace::new(1, 2, true).unwrap();
        assert!(build_uniform_rate(&masked).is_err());
        let plain = DiscreteSpace::new(1, 2, false).unwrap();
        assert!(build_masked_rate(&plain).is_err());
    }

    #[test]
    fn all_null_state_is_absorbing() {
        let s = DiscreteSpace::new(2, 3, true).unwrap();
        let rm = build_masked_rate(&s).unwrap().at(0.0);
        let null = s.encode(&[0, 0]);
        assert_eq!(rm.exit_rate(null), 0.0);
        assert_eq!(rm.exit_rate(s.encode(&[1, 2])), 2.0);
    }
}

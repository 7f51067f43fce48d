use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{mat_vec, DiffusionFields, DiffusionProcess};
use crate::error::{check_len, Error, Result};

/// Geometric Brownian motion `dx = x ⊙ Σ dw`.
///
/// `Σ` is the SDE factor; the covariance rate is `A = ΣΣᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GbmRaw", into = "GbmRaw")]
pub struct GbmSpec {
    dim: usize,
    sigma: Vec<f64>,
    a: Vec<f64>,
    a_inv: Vec<f64>,
    diag_a: Vec<f64>,
    row_sum_a: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GbmRaw {
    dim: usize,
    sigma: Vec<f64>,
}

impl TryFrom<GbmRaw> for GbmSpec {
    type Error = Error;

    fn try_from(r: GbmRaw) -> Result<Self> {
        GbmSpec::new(r.dim, r.sigma)
    }
}

impl From<GbmSpec> for GbmRaw {
    fn from(s: GbmSpec) -> Self {
        GbmRaw { dim: s.dim, sigma: s.sigma }
    }
}

impl GbmSpec {
    /// `sigma` is row-major `dim × dim`.
    pub fn new(dim: usize, sigma: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("dimension must be positive".into()));
        }
        check_len(dim * dim, sigma.len())?;
        let s = DMatrix::from_row_slice(dim, dim, &sigma);
        let a = &s * s.transpose();
        let chol = a.clone().cholesky().ok_or_else(|| Error::NotPsd("ΣΣᵀ is not positive definite".into()))?;
        let a_inv = chol.inverse();
        let resid = (&a * &a_inv - DMatrix::<f64>::identity(dim, dim)).abs().max();
        if resid > 1e-10 {
            return Err(Error::Tolerance { what: format!("A A⁻¹ deviates from I by {resid:e}"), tol: 1e-10 });
        }
        let row = |m: &DMatrix<f64>| -> Vec<f64> { (0..dim).flat_map(|i| (0..dim).map(move |j| (i, j))).map(|(i, j)| m[(i, j)]).collect() };
        let diag_a = (0..dim).map(|i| a[(i, i)]).collect();
        let row_sum_a = (0..dim).map(|i| a.row(i).sum()).collect();
        Ok(Self { dim, sigma, a: row(&a), a_inv: row(&a_inv), diag_a, row_sum_a })
    }

    pub fn scalar(sigma: f64) -> Result<Self> {
        Self::new(1, vec![sigma])
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// `A = ΣΣᵀ`, row-major.
    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn a_inv(&self) -> &[f64] {
        &self.a_inv
    }

    pub fn diag_a(&self) -> &[f64] {
        &self.diag_a
    }

    pub fn row_sum_a(&self) -> &[f64] {
        &self.row_sum_a
    }

    fn check_positive(x: &[f64], what: &str) -> Result<()> {
        if x.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!("{what} must be positive and finite, got {x:?}")));
        }
        Ok(())
    }

    /// `D = diag(x) A diag(x)`, factor `diag(x) Σ`, `(∇·D)_i = x_i (Σ_j A_ij + A_ii)`.
    pub fn diffusion_fields(&self, x: &[f64]) -> Result<DiffusionFields> {
        check_len(self.dim, x.len())?;
        Self::check_positive(x, "state")?;
        let n = self.dim;
        let mut d = vec![0.0; n * n];
        let mut factor = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                d[i * n + j] = x[i] * x[j] * self.a[i * n + j];
                factor[i * n + j] = x[i] * self.sigma[i * n + j];
            }
        }
        let div = (0..n).map(|i| x[i] * (self.row_sum_a[i] + self.diag_a[i])).collect();
        Ok(DiffusionFields { d, factor, div })
    }

    /// Log-space backward step driven by the rescaled estimate `u = y ⊙ ŝ`:
    /// `z' = z + (A u + rowsum(A) + ½ diag(A)) κ + √κ Σ ξ`, `y' = exp(z')`.
    pub fn log_step(&self, y: &[f64], kappa: f64, u: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim, y.len())?;
        check_len(self.dim, u.len())?;
        check_len(self.dim, xi.len())?;
        Self::check_positive(y, "log-space input")?;
        let au = mat_vec(&self.a, u);
        let sx = mat_vec(&self.sigma, xi);
        let sk = kappa.sqrt();
        let out: Vec<f64> = (0..self.dim)
            .map(|i| {
                let drift = au[i] + self.row_sum_a[i] + 0.5 * self.diag_a[i];
                (y[i].ln() + drift * kappa + sk * sx[i]).exp()
            })
            .collect();
        if out.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::NonFinite(format!("log-space step produced {out:?}")));
        }
        Ok(out)
    }
}

impl DiffusionProcess for GbmSpec {
    fn dim(&self) -> usize {
        self.dim
    }

    fn drift(&self, _t: f64, x: &[f64]) -> Vec<f64> {
        vec![0.0; x.len()]
    }

    fn fields(&self, _t: f64, x: &[f64]) -> Result<DiffusionFields> {
        self.diffusion_fields(x)
    }

    /// `x_t = x0 ⊙ exp(√t Σ z - ½ diag(A) t)`.
    fn conditional_sample_from(&self, x0: &[f64], t: f64, z: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim, x0.len())?;
        check_len(self.dim, z.len())?;
        Self::check_positive(x0, "initial state")?;
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("time must be >= 0, got {t}")));
        }
        let sw = mat_vec(&self.sigma, z);
        let st = t.sqrt();
        Ok((0..self.dim).map(|i| x0[i] * (st * sw[i] - 0.5 * self.diag_a[i] * t).exp()).collect())
    }

    /// `-x_t⁻¹ ⊙ (1 + t⁻¹ A⁻¹ (log x_t - log x0 + t/2 diag(A)))`.
    fn conditional_score(&self, x0: &[f64], xt: &[f64], t: f64) -> Result<Vec<f64>> {
        check_len(self.dim, x0.len())?;
        check_len(self.dim, xt.len())?;
        Self::check_positive(x0, "initial state")?;
        Self::check_positive(xt, "state")?;
        if !(t > 0.0) {
            return Err(Error::Domain(format!("time must be positive, got {t}")));
        }
        let r: Vec<f64> = (0..self.dim).map(|i| xt[i].ln() - x0[i].ln() + 0.5 * t * self.diag_a[i]).collect();
        let ar = mat_vec(&self.a_inv, &r);
        Ok((0..self.dim).map(|i| -(1.0 + ar[i] / t) / xt[i]).collect())
    }

    fn backward_step(&self, y: &[f64], _t: f64, kappa: f64, s_hat: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim, s_hat.len())?;
        if !(kappa > 0.0) {
            return Err(Error::Domain(format!("step must be positive, got {kappa}")));
        }
        let u: Vec<f64> = y.iter().zip(s_hat).map(|(a, b)| a * b).collect();
        self.log_step(y, kappa, &u, xi)
    }
}

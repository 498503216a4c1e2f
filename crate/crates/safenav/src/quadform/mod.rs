//! Distribution of a positive-definite quadratic form `Q = xᵀ A x` with
//! `x ~ N(μ, Σ)`, evaluated through its power series in `y` together with a
//! certified bound on the truncation error.

mod fixed;
mod series;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

pub use series::{partial_sum, Kind};

/// Default truncation tolerance.
pub const DEFAULT_DELTA: f64 = 1e-3;
/// Default maximum number of series terms.
pub const DEFAULT_N_MAX: usize = 200;
/// Default ratio `ρ / min λ`.
pub const DEFAULT_RHO_FACTOR: f64 = 0.9;
/// Covariance eigenvalues below this fraction of the largest are rejected.
pub const SINGULAR_RATIO: f64 = 1e-10;

/// The quadratic form `xᵀ A x` with `x ~ N(mean, covariance)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadFormSpec {
    pub matrix_a: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl QuadFormSpec {
    pub fn new(
        matrix_a: DMatrix<f64>,
        mean: DVector<f64>,
        covariance: DMatrix<f64>,
    ) -> Result<Self> {
        let spec = QuadFormSpec {
            matrix_a,
            mean,
            covariance,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.mean.len();
        if n == 0 {
            return Err(Error::InvalidInput("quadratic form has dimension 0".into()));
        }
        if self.matrix_a.shape() != (n, n) || self.covariance.shape() != (n, n) {
            return Err(Error::InvalidInput(format!(
                "dimension mismatch: mean {n}, matrix_a {:?}, covariance {:?}",
                self.matrix_a.shape(),
                self.covariance.shape()
            )));
        }
        check_symmetric("matrix_a", &self.matrix_a)?;
        check_symmetric("covariance", &self.covariance)?;
        if self.mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("mean has non-finite entries".into()));
        }
        Ok(())
    }
}

fn check_symmetric(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "{name} has non-finite entries"
        )));
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * scale {
        return Err(Error::InvalidInput(format!(
            "{name} is not symmetric (max asymmetry {asym:e})"
        )));
    }
    Ok(())
}

/// Eigenvalues `λ` and rotated standardized mean `b` of a quadratic form.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralParams {
    pub lambdas: Vec<f64>,
    pub b: Vec<f64>,
}

impl SpectralParams {
    pub fn new(lambdas: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::InvalidInput("no eigenvalues".into()));
        }
        if lambdas.len() != b.len() {
            return Err(Error::InvalidInput(format!(
                "lambdas ({}) and b ({}) differ in length",
                lambdas.len(),
                b.len()
            )));
        }
        if let Some(l) = lambdas.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "eigenvalue {l} is not positive"
            )));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("b has non-finite entries".into()));
        }
        Ok(SpectralParams { lambdas, b })
    }

    /// Dimension `n` of the quadratic form.
    pub fn dim(&self) -> usize {
        self.lambdas.len()
    }

    pub fn min_lambda(&self) -> f64 {
        self.lambdas.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn b_squared(&self) -> Vec<f64> {
        self.b.iter().map(|v| v * v).collect()
    }

    /// Default `ρ = 0.9 · min λ`.
    pub fn default_rho(&self) -> f64 {
        DEFAULT_RHO_FACTOR * self.min_lambda()
    }

    /// `ln c_0 = −½ Σ b² − ½ Σ ln(2λ)`.
    pub fn ln_c0(&self) -> f64 {
        let bsq: f64 = self.b.iter().map(|v| v * v).sum();
        -0.5 * bsq - 0.5 * self.lambdas.iter().map(|l| (2.0 * l).ln()).sum::<f64>()
    }
}

/// Output of a series evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesResult {
    pub value: f64,
    /// Index of the last term summed (terms `0..=terms_used`).
    pub terms_used: usize,
    pub error_bound: f64,
    pub rho: f64,
}

/// Series coefficients `c_0..c_N` and `d_1..d_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesCoefficients {
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub d0: f64,
}

/// Tunables for [`cdf_with`] and [`pdf_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesConfig {
    pub delta: f64,
    pub n_max: usize,
    pub rho_factor: f64,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        SeriesConfig {
            delta: DEFAULT_DELTA,
            n_max: DEFAULT_N_MAX,
            rho_factor: DEFAULT_RHO_FACTOR,
        }
    }
}

impl SeriesConfig {
    pub fn with_delta(delta: f64) -> Self {
        SeriesConfig {
            delta,
            ..Default::default()
        }
    }
}

fn sym_eigen(name: &str, m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "eigendecomposition of {name} failed"
        )));
    }
    Ok(eig)
}

/// Diagonalizes `Σ^{1/2} A Σ^{1/2}` and rotates the standardized mean.
pub fn spectral_decompose(spec: &QuadFormSpec) -> Result<SpectralParams> {
    spec.validate()?;
    let a_eig = sym_eigen("matrix_a", &spec.matrix_a)?;
    let a_min = a_eig.eigenvalues.min();
    if a_min <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            name: "matrix_a".into(),
            min_eigenvalue: a_min,
        });
    }

    let s_eig = sym_eigen("covariance", &spec.covariance)?;
    let s_min = s_eig.eigenvalues.min();
    let s_max = s_eig.eigenvalues.max();
    if s_min <= 0.0 || s_min < SINGULAR_RATIO * s_max {
        return Err(Error::NotPositiveDefinite {
            name: "covariance".into(),
            min_eigenvalue: s_min,
        });
    }
    let v = &s_eig.eigenvectors;
    let sqrt_d = DMatrix::from_diagonal(&s_eig.eigenvalues.map(f64::sqrt));
    let inv_sqrt_d = DMatrix::from_diagonal(&s_eig.eigenvalues.map(|e| 1.0 / e.sqrt()));
    let sigma_half = v * sqrt_d * v.transpose();
    let sigma_inv_half = v * inv_sqrt_d * v.transpose();

    let inner = &sigma_half * &spec.matrix_a * &sigma_half;
    let eig = sym_eigen("Σ^1/2 A Σ^1/2", &inner)?;
    let b = eig.eigenvectors.transpose() * (sigma_inv_half * &spec.mean);
    SpectralParams::new(
        eig.eigenvalues.iter().copied().collect(),
        b.iter().copied().collect(),
    )
}

/// Series coefficients in plain f64, `c_0` taken from log space.
pub fn coefficients(params: &SpectralParams, n_terms: usize) -> Result<SeriesCoefficients> {
    if n_terms < 1 {
        return Err(Error::InvalidInput("n_terms must be at least 1".into()));
    }
    let bsq = params.b_squared();
    let d0 = -0.5 * bsq.iter().sum::<f64>()
        + params
            .lambdas
            .iter()
            .map(|l| -0.5 * (2.0 * l).ln())
            .sum::<f64>();
    let c0 = d0.exp();
    if c0 == 0.0 || !c0.is_finite() {
        return Err(Error::NumericRange { k: 0 });
    }
    let mut d = Vec::with_capacity(n_terms);
    for k in 1..=n_terms {
        let kf = k as f64;
        let dk: f64 = params
            .lambdas
            .iter()
            .zip(&bsq)
            .map(|(l, b2)| 0.5 * (1.0 - kf * b2) * (2.0 * l).powi(-(k as i32)))
            .sum();
        if !dk.is_finite() {
            return Err(Error::NumericRange { k });
        }
        d.push(dk);
    }
    let mut c = vec![c0];
    for k in 1..=n_terms {
        let s: f64 = (0..k).map(|j| d[k - j - 1] * c[j]).sum();
        let ck = s / k as f64;
        if !ck.is_finite() {
            return Err(Error::NumericRange { k });
        }
        c.push(ck);
    }
    Ok(SeriesCoefficients { c, d, d0 })
}

fn check_rho(params: &SpectralParams, rho: f64) -> Result<()> {
    let lmin = params.min_lambda();
    if !(rho > 0.0 && rho < lmin) {
        return Err(Error::InvalidInput(format!(
            "rho = {rho} must lie in (0, min lambda = {lmin})"
        )));
    }
    Ok(())
}

/// `ln m(ρ)`.
pub fn ln_m_rho(params: &SpectralParams, rho: f64) -> Result<f64> {
    check_rho(params, rho)?;
    let mut acc = 0.0;
    for (l, b) in params.lambdas.iter().zip(&params.b) {
        acc += -0.5 * l.ln() - 0.5 * b * b * l / (l + rho) - 0.5 * (-rho / l).ln_1p();
    }
    Ok(acc)
}

/// `m(ρ) = Π λ^{-1/2} · exp(−½ Σ b² λ/(λ+ρ)) · Π (1 − ρ/λ)^{-1/2}`.
pub fn m_rho(params: &SpectralParams, rho: f64) -> Result<f64> {
    ln_m_rho(params, rho).map(f64::exp)
}

/// Log of the series denominator used by the bounds. For `n ≥ 2` it is the
/// classical `Γ(n/2)·(N+1)!`; for `n = 1` that product is not a valid lower
/// bound on the term denominators, so `Γ(n/2 + N + 2)` is used instead.
fn ln_bound_denominator(n: usize, tail_start: usize, kind: Kind) -> f64 {
    let h = n as f64 / 2.0;
    let t = tail_start as f64;
    match (kind, n) {
        (Kind::Cdf, 1) => ln_gamma(h + t + 1.0),
        (Kind::Pdf, 1) => ln_gamma(h + t),
        (Kind::Cdf, _) => ln_gamma(h) + ln_gamma(t + 1.0),
        (Kind::Pdf, _) => ln_gamma(h) + ln_gamma(t),
    }
}

/// Natural log of the truncation bound after summing terms `0..=n`.
pub(crate) fn ln_bound(
    params: &SpectralParams,
    y: f64,
    n: usize,
    rho: f64,
    ln_m: f64,
    kind: Kind,
) -> f64 {
    if y == 0.0 {
        return f64::NEG_INFINITY;
    }
    let dim = params.dim();
    let h = dim as f64 / 2.0;
    let x = y / (2.0 * rho);
    let power = match kind {
        Kind::Cdf => h,
        Kind::Pdf => h - 1.0,
    };
    ln_m - ln_bound_denominator(dim, n + 1, kind)
        + power * (y / 2.0).ln()
        + (n as f64 + 1.0) * x.ln()
        + x
}

/// Certified bound on `|F(y) − Σ_{k≤n} F-terms|` for the CDF.
pub fn truncation_bound(params: &SpectralParams, y: f64, n: usize, rho: f64) -> Result<f64> {
    bound(params, y, n, rho, Kind::Cdf)
}

/// Certified bound on the PDF truncation error after `n` terms.
pub fn pdf_truncation_bound(params: &SpectralParams, y: f64, n: usize, rho: f64) -> Result<f64> {
    bound(params, y, n, rho, Kind::Pdf)
}

fn bound(params: &SpectralParams, y: f64, n: usize, rho: f64, kind: Kind) -> Result<f64> {
    check_y(y)?;
    let ln_m = ln_m_rho(params, rho)?;
    Ok(ln_bound(params, y, n, rho, ln_m, kind).exp())
}

fn check_y(y: f64) -> Result<()> {
    if !(y.is_finite() && y >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "y = {y} must be finite and non-negative"
        )));
    }
    Ok(())
}

/// CDF `P(Q ≤ y)` truncated once the certified bound drops below `delta`.
pub fn cdf(params: &SpectralParams, y: f64, delta: f64, n_max: usize) -> Result<SeriesResult> {
    cdf_with(
        params,
        y,
        &SeriesConfig {
            delta,
            n_max,
            ..Default::default()
        },
    )
}

/// Density of `Q` at `y`.
pub fn pdf(params: &SpectralParams, y: f64, delta: f64, n_max: usize) -> Result<SeriesResult> {
    pdf_with(
        params,
        y,
        &SeriesConfig {
            delta,
            n_max,
            ..Default::default()
        },
    )
}

pub fn cdf_with(params: &SpectralParams, y: f64, cfg: &SeriesConfig) -> Result<SeriesResult> {
    let mut r = series::evaluate(params, y, cfg, Kind::Cdf)?;
    r.value = r.value.clamp(0.0, 1.0);
    Ok(r)
}

pub fn pdf_with(params: &SpectralParams, y: f64, cfg: &SeriesConfig) -> Result<SeriesResult> {
    let mut r = series::evaluate(params, y, cfg, Kind::Pdf)?;
    r.value = r.value.max(0.0);
    Ok(r)
}

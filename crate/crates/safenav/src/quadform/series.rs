//! Series evaluation.
//!
//! With `x = y / 2ρ` and `a = n/2` (CDF) or `n/2 − 1` (PDF) the k-th term is
//! `(−1)^k c_k y^{a+k} / Γ(a+k+1) = P · (−1)^k ĉ_k w_k` where
//! `P = c_0 y^a / Γ(a+1)`, `ĉ_k = c_k (2ρ)^k / c_0` and
//! `w_k = Π_{j≤k} x / (a+j)`. The scaled coefficients follow
//! `ĉ_k = (1/k) Σ_j d̂_{k−j} ĉ_j` with `d̂_m = ½ Σ (1 − m b²)(ρ/λ)^m`, so every
//! quantity inside the sum stays bounded and the only transcendental factor
//! is the positive prefactor `P`.

use statrs::function::gamma::ln_gamma;

use super::{fixed, ln_bound, ln_m_rho, SeriesConfig, SeriesResult, SpectralParams};
use crate::error::{Error, Result};

/// Which function the series represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Cdf,
    Pdf,
}

/// Largest fixed-point precision tried before giving up.
const MAX_BITS: u64 = 1 << 17;

pub(super) struct Setup {
    pub bsq: Vec<f64>,
    pub ratios: Vec<f64>,
    pub x: f64,
    /// `2a`, an integer.
    pub two_a: i64,
    pub ln_pre: f64,
}

impl Setup {
    fn new(params: &SpectralParams, y: f64, rho: f64, kind: Kind) -> Setup {
        let n = params.dim() as i64;
        let two_a = match kind {
            Kind::Cdf => n,
            Kind::Pdf => n - 2,
        };
        let a = two_a as f64 / 2.0;
        let ln_y_term = if two_a == 0 { 0.0 } else { a * y.ln() };
        Setup {
            bsq: params.b_squared(),
            ratios: params.lambdas.iter().map(|l| rho / l).collect(),
            x: y / (2.0 * rho),
            two_a,
            ln_pre: params.ln_c0() + ln_y_term - ln_gamma(a + 1.0),
        }
    }
}

/// Signed value as `sign · exp(ln_abs)`.
#[derive(Debug, Clone, Copy)]
pub(super) struct LogValue {
    pub ln_abs: f64,
    pub negative: bool,
}

impl LogValue {
    fn to_f64(self, ln_scale: f64) -> f64 {
        let v = (self.ln_abs + ln_scale).exp();
        if self.negative {
            -v
        } else {
            v
        }
    }
}

/// Plain f64 sum of terms `0..=n` with an estimate of its rounding error,
/// both in units of the prefactor. `None` if anything overflowed.
fn sum_f64(s: &Setup, n: usize) -> Option<(f64, f64)> {
    let mut dhat = vec![0.0; n + 1];
    let mut dabs = vec![0.0; n + 1];
    let mut pows = vec![1.0; s.ratios.len()];
    for m in 1..=n {
        let mf = m as f64;
        let (mut d, mut da) = (0.0, 0.0);
        for (i, r) in s.ratios.iter().enumerate() {
            pows[i] *= r;
            let f = 1.0 - mf * s.bsq[i];
            d += f * pows[i];
            da += f.abs() * pows[i];
        }
        dhat[m] = 0.5 * d;
        dabs[m] = 0.5 * da;
    }

    let mut c = vec![0.0; n + 1];
    let mut cabs = vec![0.0; n + 1];
    c[0] = 1.0;
    cabs[0] = 1.0;
    for k in 1..=n {
        let (mut acc, mut acc_abs) = (0.0, 0.0);
        for j in 0..k {
            acc += dhat[k - j] * c[j];
            acc_abs += dabs[k - j] * cabs[j];
        }
        c[k] = acc / k as f64;
        cabs[k] = acc_abs / k as f64;
    }

    let mut w = 1.0;
    let mut sum = 0.0;
    let mut mag = 0.0;
    for k in 0..=n {
        let t = c[k] * w;
        sum += if k % 2 == 0 { t } else { -t };
        mag += cabs[k] * w;
        w *= 2.0 * s.x / (s.two_a + 2 * k as i64 + 2) as f64;
    }
    let err = 4.0 * f64::EPSILON * (n as f64 + 2.0) * mag;
    if sum.is_finite() && err.is_finite() {
        Some((sum, err))
    } else {
        None
    }
}

/// Sum of terms `0..=n` with absolute rounding error at most `tol`.
fn hybrid_sum(s: &Setup, n: usize, tol: f64) -> Result<f64> {
    if let Some((sum, err)) = sum_f64(s, n) {
        if (err.ln() + s.ln_pre).exp() <= tol {
            return Ok((sum.abs().ln() + s.ln_pre).exp().copysign(sum));
        }
    }
    high_precision_sum(s, n, tol)
}

fn high_precision_sum(s: &Setup, n: usize, tol: f64) -> Result<f64> {
    // Scaled coefficients are bounded by exp(u); weights sum to about exp(x).
    let u =
        s.bsq.iter().sum::<f64>() * 0.5 + s.ratios.iter().map(|r| -0.5 * (-r).ln_1p()).sum::<f64>();
    let magnitude = (s.ln_pre + u + s.x + ((n + 2) as f64).ln()).max(0.0);
    let want = magnitude - tol.ln();
    let mut bits = 64
        + 2 * (64 - (n as u64 + 2).leading_zeros() as u64)
        + (want / std::f64::consts::LN_2).ceil().max(0.0) as u64;
    loop {
        if bits > MAX_BITS {
            return Err(Error::NumericRange { k: n });
        }
        let lo = fixed::sum(s, n, bits).to_f64(s.ln_pre);
        let hi = fixed::sum(s, n, bits + 64).to_f64(s.ln_pre);
        if (hi - lo).abs() <= 0.1 * tol {
            return Ok(hi);
        }
        bits *= 2;
    }
}

/// Sum of the series terms `0..=n` at `y` with the given `ρ`, accurate to an
/// absolute rounding error of `tol`.
pub fn partial_sum(
    params: &SpectralParams,
    y: f64,
    n: usize,
    rho: f64,
    kind: Kind,
    tol: f64,
) -> Result<f64> {
    ln_m_rho(params, rho)?;
    if !(y.is_finite() && y > 0.0) {
        return Err(Error::InvalidInput(format!("y = {y} must be positive")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    hybrid_sum(&Setup::new(params, y, rho, kind), n, tol)
}

pub(super) fn evaluate(
    params: &SpectralParams,
    y: f64,
    cfg: &SeriesConfig,
    kind: Kind,
) -> Result<SeriesResult> {
    super::check_y(y)?;
    if !(cfg.delta.is_finite() && cfg.delta > 0.0) {
        return Err(Error::InvalidInput(format!(
            "delta = {} must be positive",
            cfg.delta
        )));
    }
    if cfg.n_max < 1 {
        return Err(Error::InvalidInput("n_max must be at least 1".into()));
    }
    if !(cfg.rho_factor > 0.0 && cfg.rho_factor < 1.0) {
        return Err(Error::InvalidInput(format!(
            "rho_factor = {} must lie in (0, 1)",
            cfg.rho_factor
        )));
    }
    let rho = cfg.rho_factor * params.min_lambda();
    let ln_m = ln_m_rho(params, rho)?;

    if y == 0.0 {
        let value = match (kind, params.dim()) {
            (Kind::Cdf, _) => 0.0,
            (Kind::Pdf, 1) => {
                return Err(Error::InvalidInput(
                    "density is unbounded at y = 0 for n = 1".into(),
                ))
            }
            (Kind::Pdf, 2) => params.ln_c0().exp(),
            (Kind::Pdf, _) => 0.0,
        };
        return Ok(SeriesResult {
            value,
            terms_used: 1,
            error_bound: 0.0,
            rho,
        });
    }

    let ln_delta = cfg.delta.ln();
    let mut best = f64::INFINITY;
    let mut chosen = None;
    for n in 1..=cfg.n_max {
        let lb = ln_bound(params, y, n, rho, ln_m, kind);
        best = best.min(lb);
        if lb <= ln_delta {
            chosen = Some((n, lb));
            break;
        }
    }
    let Some((n, lb)) = chosen else {
        return Err(Error::ConvergenceFailure {
            n_max: cfg.n_max,
            best_bound: best.exp(),
            target: cfg.delta,
        });
    };

    let setup = Setup::new(params, y, rho, kind);
    let value = hybrid_sum(&setup, n, cfg.delta / 100.0)?;
    Ok(SeriesResult {
        value,
        terms_used: n,
        error_bound: lb.exp(),
        rho,
    })
}

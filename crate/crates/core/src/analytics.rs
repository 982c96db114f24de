//! Benchmarks: Carr-Madan pricing from the Bates characteristic function,
//! Black-Scholes implied volatility and the convergence ratio.

use num_complex::Complex64;
use rustfft::FftPlanner;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{PricingError, Result};
use crate::model::{Exercise, ModelParams, OptionSpec, Payoff};

/// Fourier quadrature settings for [`price_cf_bates`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfQuadratureConfig {
    pub damping: f64,
    pub n_points: usize,
    pub eta_grid: f64,
}

impl Default for CfQuadratureConfig {
    fn default() -> Self {
        CfQuadratureConfig {
            damping: 1.5,
            n_points: 4096,
            eta_grid: 0.25,
        }
    }
}

impl CfQuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0) {
            return Err(PricingError::domain("damping", "must be > 0"));
        }
        if !self.n_points.is_power_of_two() || self.n_points < 16 {
            return Err(PricingError::domain("n_points", "must be a power of two >= 16"));
        }
        if !(self.eta_grid > 0.0) {
            return Err(PricingError::domain("eta_grid", "must be > 0"));
        }
        Ok(())
    }
}

/// Characteristic function of `ln S_T` under the standard Bates model,
/// `E[exp(i u ln S_T)]`, for complex `u`.
pub fn bates_cf(params: &ModelParams, maturity: f64, u: Complex64) -> Complex64 {
    let p = params;
    let i = Complex64::i();
    let t = maturity;
    let (kappa, theta, sigma, rho) = (p.kappa_v, p.theta_v, p.sigma_v, p.rho1);
    let s2 = sigma * sigma;
    let b = kappa - rho * sigma * i * u;
    let q = i * u + u * u;
    let d = (b * b + s2 * q).sqrt();
    // b - d = -sigma^2 q / (b + d) exactly; dividing out sigma^2 by hand
    // avoids cancellation when the vol of variance is tiny.
    let bmd_s2 = -q / (b + d);
    // Branch with exp(-d T), which keeps the complex logarithm continuous.
    let g = bmd_s2 / (b + d) * s2;
    let e = (-d * t).exp();
    // ln((1 - g e) / (1 - g)) = ln(1 + z), z = g (1 - e) / (1 - g).
    let z_s2 = bmd_s2 / (b + d) * (1.0 - e) / (1.0 - g);
    let z = z_s2 * s2;
    let log_s2 = if z.norm() < 1e-4 {
        z_s2 * (1.0 - z / 2.0 + z * z / 3.0)
    } else {
        (1.0 + z).ln() / s2
    };
    let c = kappa * theta * (bmd_s2 * t - 2.0 * log_s2);
    let dv = bmd_s2 * (1.0 - e) / (1.0 - g * e);
    let m = p.jump_mean();
    let jump = p.lambda
        * t
        * ((i * u * m - 0.5 * u * u * p.delta * p.delta).exp()
            - 1.0
            - i * u * (p.gamma.exp() - 1.0));
    let drift = i * u * (p.s0.ln() + (p.r0 - p.eta) * t);
    (drift + c + dv * p.v0 + jump).exp()
}

fn carr_madan(params: &ModelParams, strike: f64, maturity: f64, cfg: &CfQuadratureConfig) -> f64 {
    let n = cfg.n_points;
    let eta = cfg.eta_grid;
    let alpha = cfg.damping;
    let lambda_k = 2.0 * std::f64::consts::PI / (n as f64 * eta);
    let ln_k = strike.ln();
    // Log-strike grid k_j = ln K + (j - n/2) lambda_k, so ln K is node n/2.
    let k0 = ln_k - 0.5 * n as f64 * lambda_k;
    let disc = (-params.r0 * maturity).exp();
    let i = Complex64::i();
    let mut buf: Vec<Complex64> = (0..n)
        .map(|m| {
            let v = m as f64 * eta;
            let u = Complex64::new(v, -(alpha + 1.0));
            let denom = Complex64::new(alpha * alpha + alpha - v * v, (2.0 * alpha + 1.0) * v);
            let psi = disc * bates_cf(params, maturity, u) / denom;
            let w = if m == 0 {
                1.0 / 3.0
            } else if m % 2 == 1 {
                4.0 / 3.0
            } else {
                2.0 / 3.0
            };
            (-i * v * k0).exp() * psi * eta * w
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    (-alpha * ln_k).exp() / std::f64::consts::PI * buf[n / 2].re
}

/// European call price under standard Bates by Carr-Madan FFT.
///
/// The quadrature is rerun with twice as many points; a change above `1e-3`
/// is reported as non-convergence and the finer value is returned otherwise.
pub fn price_cf_bates(params: &ModelParams, spec: &OptionSpec, cfg: &CfQuadratureConfig) -> Result<f64> {
    params.validate()?;
    spec.validate()?;
    cfg.validate()?;
    if params.sigma_r != 0.0 {
        return Err(PricingError::domain("sigma_r", "the CF benchmark needs a deterministic rate"));
    }
    if spec.exercise != Exercise::European || spec.payoff != Payoff::Call {
        return Err(PricingError::domain("option", "the CF benchmark prices European calls only"));
    }
    let coarse = carr_madan(params, spec.strike, spec.maturity, cfg);
    let fine_cfg = CfQuadratureConfig {
        n_points: 2 * cfg.n_points,
        ..*cfg
    };
    let fine = carr_madan(params, spec.strike, spec.maturity, &fine_cfg);
    let delta = (fine - coarse).abs();
    if delta > 1e-3 || !fine.is_finite() {
        return Err(PricingError::NonConvergence { delta });
    }
    Ok(fine)
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// Black-Scholes price of a European call with continuous dividend yield.
pub fn black_scholes_call(spot: f64, strike: f64, maturity: f64, rate: f64, dividend: f64, vol: f64) -> f64 {
    let fwd_s = spot * (-dividend * maturity).exp();
    let disc_k = strike * (-rate * maturity).exp();
    if vol <= 0.0 || maturity <= 0.0 {
        return (fwd_s - disc_k).max(0.0);
    }
    let sd = vol * maturity.sqrt();
    let d1 = ((spot / strike).ln() + (rate - dividend + 0.5 * vol * vol) * maturity) / sd;
    let d2 = d1 - sd;
    let n = std_normal();
    fwd_s * n.cdf(d1) - disc_k * n.cdf(d2)
}

/// `dC / dsigma`.
pub fn black_scholes_vega(spot: f64, strike: f64, maturity: f64, rate: f64, dividend: f64, vol: f64) -> f64 {
    let sd = vol * maturity.sqrt();
    let d1 = ((spot / strike).ln() + (rate - dividend + 0.5 * vol * vol) * maturity) / sd;
    let pdf = (-0.5 * d1 * d1).exp() / (2.0 * std::f64::consts::PI).sqrt();
    spot * (-dividend * maturity).exp() * pdf * maturity.sqrt()
}

const VOL_LO: f64 = 1e-6;
const VOL_HI: f64 = 5.0;

/// Black-Scholes implied volatility of a call price, by Newton steps
/// safeguarded with bisection on `[1e-6, 5]`.
pub fn implied_vol(price: f64, spot: f64, strike: f64, maturity: f64, rate: f64, dividend: f64) -> Result<f64> {
    if !(spot > 0.0 && strike > 0.0 && maturity > 0.0) {
        return Err(PricingError::domain("implied_vol", "spot, strike and maturity must be > 0"));
    }
    let lower = (spot * (-dividend * maturity).exp() - strike * (-rate * maturity).exp()).max(0.0);
    let upper = spot * (-dividend * maturity).exp();
    if !(price > lower && price < upper) {
        return Err(PricingError::OutOfBand { price, lower, upper });
    }
    let f = |s: f64| black_scholes_call(spot, strike, maturity, rate, dividend, s) - price;
    let (mut lo, mut hi) = (VOL_LO, VOL_HI);
    if f(lo) > 0.0 || f(hi) < 0.0 {
        return Err(PricingError::OutOfBand { price, lower, upper });
    }
    let mut x = 0.5_f64.clamp(lo, hi).min(0.3);
    for _ in 0..200 {
        let fx = f(x);
        if fx.abs() < 1e-14 * price.max(1.0) {
            return Ok(x);
        }
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let vega = black_scholes_vega(spot, strike, maturity, rate, dividend, x);
        let newton = x - fx / vega;
        x = if vega > 1e-300 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(x)
}

/// `(P_{N/2} - P_{N/4}) / (P_N - P_{N/2})`.
pub fn convergence_ratio(p_quarter: f64, p_half: f64, p_full: f64) -> Result<f64> {
    let den = p_full - p_half;
    if den.abs() < 1e-12 {
        return Err(PricingError::ZeroDenominator);
    }
    Ok((p_half - p_quarter) / den)
}

/// Indices of strict interior local minima of a sampled curve.
pub fn interior_minima(values: &[f64]) -> Vec<usize> {
    (1..values.len().saturating_sub(1))
        .filter(|&i| values[i] < values[i - 1] && values[i] < values[i + 1])
        .collect()
}

//! Bates-Hull-White dynamics.
//!
//! Under the pricing measure the log-price `Y = ln S`, the CIR variance `V`
//! and the Ornstein-Uhlenbeck rate factor `X` follow
//!
//! ```text
//! dY = (sigma_r X + phi(t) - eta - V/2) dt + sqrt(V) dZ^S + dN
//! dV = kappa_v (theta_v - V) dt + sigma_v sqrt(V) dW^1
//! dX = -kappa_r X dt + dW^2
//! ```
//!
//! with `r_t = sigma_r X_t + phi(t)`, `Z^S = rho1 W^1 + rho2 W^2 + rho3 W^3` and
//! `N` a compound Poisson process whose log-jumps are
//! `Normal(gamma - delta^2/2, delta^2)`. Setting `sigma_r = 0` gives the
//! standard Bates model with constant rate `r0`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{PricingError, Result};

/// Market and model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub s0: f64,
    pub v0: f64,
    pub r0: f64,
    /// Continuous dividend yield.
    pub eta: f64,
    pub kappa_v: f64,
    pub theta_v: f64,
    pub sigma_v: f64,
    #[serde(default)]
    pub kappa_r: f64,
    #[serde(default)]
    pub sigma_r: f64,
    /// Spot-variance correlation.
    pub rho1: f64,
    /// Spot-rate correlation.
    #[serde(default)]
    pub rho2: f64,
    /// Jump intensity per year.
    pub lambda: f64,
    pub gamma: f64,
    pub delta: f64,
    /// Flat instantaneous forward rate of the market discount curve.
    #[serde(default = "default_flat_forward")]
    pub flat_forward: f64,
}

fn default_flat_forward() -> f64 {
    f64::NAN
}

impl ModelParams {
    /// Standard Bates parameters used for the short-maturity experiments
    /// (`T = 0.5`, `K = 100`).
    pub fn bates_reference(rho: f64) -> Self {
        ModelParams {
            s0: 100.0,
            v0: 0.04,
            r0: 0.03,
            eta: 0.05,
            kappa_v: 2.0,
            theta_v: 0.04,
            sigma_v: 0.4,
            kappa_r: 0.0,
            sigma_r: 0.0,
            rho1: rho,
            rho2: 0.0,
            lambda: 5.0,
            gamma: 0.0,
            delta: 0.1,
            flat_forward: 0.03,
        }
    }

    /// Bates-Hull-White parameters: the reference Bates set with a Vasicek
    /// rate fitted to the flat curve `P(0,T) = exp(-0.03 T)`.
    pub fn bates_hull_white_reference(rho_sv: f64, rho_sr: f64) -> Self {
        ModelParams {
            kappa_r: 1.0,
            sigma_r: 0.2,
            rho1: rho_sv,
            rho2: rho_sr,
            ..Self::bates_reference(rho_sv)
        }
    }

    pub fn with_spot(mut self, s0: f64) -> Self {
        self.s0 = s0;
        self
    }

    /// Checks every parameter invariant.
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("s0", self.s0),
            ("v0", self.v0),
            ("r0", self.r0),
            ("eta", self.eta),
            ("kappa_v", self.kappa_v),
            ("theta_v", self.theta_v),
            ("sigma_v", self.sigma_v),
            ("kappa_r", self.kappa_r),
            ("sigma_r", self.sigma_r),
            ("rho1", self.rho1),
            ("rho2", self.rho2),
            ("lambda", self.lambda),
            ("gamma", self.gamma),
            ("delta", self.delta),
        ];
        for (field, value) in finite {
            if !value.is_finite() {
                return Err(PricingError::domain(field, "must be finite"));
            }
        }
        let positive = [
            ("s0", self.s0),
            ("v0", self.v0),
            ("kappa_v", self.kappa_v),
            ("theta_v", self.theta_v),
            ("sigma_v", self.sigma_v),
            ("delta", self.delta),
        ];
        for (field, value) in positive {
            if value <= 0.0 {
                return Err(PricingError::domain(field, format!("must be > 0, got {value}")));
            }
        }
        if self.lambda < 0.0 {
            return Err(PricingError::domain("lambda", "must be >= 0"));
        }
        if self.kappa_r < 0.0 {
            return Err(PricingError::domain("kappa_r", "must be >= 0"));
        }
        if self.sigma_r < 0.0 {
            return Err(PricingError::domain("sigma_r", "must be >= 0"));
        }
        if self.rho1.abs() >= 1.0 {
            return Err(PricingError::domain("rho1", "must lie in (-1, 1)"));
        }
        rho3(self)?;
        if self.sigma_r > 0.0 {
            if self.kappa_r <= 0.0 {
                return Err(PricingError::domain(
                    "kappa_r",
                    "must be > 0 when sigma_r > 0",
                ));
            }
            if !self.flat_forward.is_finite() {
                return Err(PricingError::domain(
                    "flat_forward",
                    "required when sigma_r > 0",
                ));
            }
            if (self.flat_forward - self.r0).abs() > 1e-12 {
                return Err(PricingError::domain(
                    "flat_forward",
                    format!(
                        "the fitted curve starts at phi(0) = flat_forward, which must equal r0 = {}",
                        self.r0
                    ),
                ));
            }
        }
        Ok(())
    }

    /// The parameter set with every rate-dynamics parameter switched off
    /// except `r0`: `sigma_r = kappa_r = rho2 = 0`.
    pub fn standard_bates(&self) -> Self {
        ModelParams {
            sigma_r: 0.0,
            kappa_r: 0.0,
            rho2: 0.0,
            ..*self
        }
    }

    pub fn is_standard_bates(&self) -> bool {
        self.sigma_r == 0.0
    }

    /// CIR drift `kappa_v (theta_v - v)`.
    pub fn drift_v(&self, v: f64) -> f64 {
        self.kappa_v * (self.theta_v - v)
    }

    /// OU drift `-kappa_r x`.
    pub fn drift_x(&self, x: f64) -> f64 {
        -self.kappa_r * x
    }

    /// Mean of the Gaussian log-jump, `gamma - delta^2 / 2`.
    pub fn jump_mean(&self) -> f64 {
        self.gamma - 0.5 * self.delta * self.delta
    }
}

/// `sqrt(1 - rho1^2 - rho2^2)`.
pub fn rho3(params: &ModelParams) -> Result<f64> {
    let s = params.rho1 * params.rho1 + params.rho2 * params.rho2;
    if s > 1.0 {
        return Err(PricingError::domain(
            "rho2",
            format!("rho1^2 + rho2^2 = {s} exceeds 1"),
        ));
    }
    Ok((1.0 - s).sqrt())
}

/// Drift of the log-price: `sigma_r x + phi(t) - eta - v/2`.
pub fn drift_y(params: &ModelParams, curve: &RateCurve, v: f64, x: f64, t: f64) -> f64 {
    params.sigma_r * x + curve.phi(t) - params.eta - 0.5 * v
}

/// Drift of the log-price once the variance and rate-factor noises have been
/// isolated:
/// `drift_y - (rho1/sigma_v) kappa_v (theta_v - v) + rho2 kappa_r x sqrt(v)`.
pub fn drift_reduced(params: &ModelParams, curve: &RateCurve, v: f64, x: f64, t: f64) -> f64 {
    drift_y(params, curve, v, x, t)
        - params.rho1 / params.sigma_v * params.drift_v(v)
        - params.rho2 * v.max(0.0).sqrt() * params.drift_x(x)
}

/// Levy density of the log-jumps: `lambda * NormalPdf(xi; gamma - delta^2/2, delta)`.
pub fn levy_density(params: &ModelParams, xi: f64) -> f64 {
    if params.lambda == 0.0 {
        return 0.0;
    }
    let z = (xi - params.jump_mean()) / params.delta;
    params.lambda * (-0.5 * z * z).exp() / (params.delta * (2.0 * PI).sqrt())
}

/// The deterministic shift `phi(t)` of the short rate `r_t = sigma_r X_t + phi(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateCurve {
    /// Deterministic rate: `phi(t) = r0`.
    Constant(f64),
    /// Hull-White fit to the flat market curve `P(0,T) = exp(-f T)`:
    /// `phi(t) = f + sigma_r^2 / (2 kappa_r^2) (1 - exp(-kappa_r t))^2`.
    HullWhiteFlat {
        forward: f64,
        sigma_r: f64,
        kappa_r: f64,
    },
}

impl RateCurve {
    pub fn phi(&self, t: f64) -> f64 {
        match *self {
            RateCurve::Constant(r) => r,
            RateCurve::HullWhiteFlat {
                forward,
                sigma_r,
                kappa_r,
            } => {
                let c = 1.0 - (-kappa_r * t).exp();
                forward + sigma_r * sigma_r / (2.0 * kappa_r * kappa_r) * c * c
            }
        }
    }
}

/// Fits `phi` so that model zero-coupon prices reproduce `exp(-f T)`.
/// With `sigma_r = 0` the curve is the constant `r0`.
pub fn fit_phi(params: &ModelParams, market_flat_forward: f64) -> RateCurve {
    if params.sigma_r == 0.0 {
        RateCurve::Constant(params.r0)
    } else {
        RateCurve::HullWhiteFlat {
            forward: market_flat_forward,
            sigma_r: params.sigma_r,
            kappa_r: params.kappa_r,
        }
    }
}

/// The rate curve implied by the parameters' own `flat_forward`.
pub fn rate_curve(params: &ModelParams) -> RateCurve {
    fit_phi(params, params.flat_forward)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exercise {
    European,
    American,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Payoff {
    Call,
    Put,
}

/// A vanilla option contract.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptionSpec {
    pub strike: f64,
    pub maturity: f64,
    pub exercise: Exercise,
    pub payoff: Payoff,
}

impl OptionSpec {
    pub fn new(strike: f64, maturity: f64, exercise: Exercise, payoff: Payoff) -> Result<Self> {
        let spec = OptionSpec {
            strike,
            maturity,
            exercise,
            payoff,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn european_call(strike: f64, maturity: f64) -> Self {
        OptionSpec {
            strike,
            maturity,
            exercise: Exercise::European,
            payoff: Payoff::Call,
        }
    }

    pub fn american_call(strike: f64, maturity: f64) -> Self {
        OptionSpec {
            exercise: Exercise::American,
            ..Self::european_call(strike, maturity)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.strike > 0.0 && self.strike.is_finite()) {
            return Err(PricingError::domain("strike", "must be > 0"));
        }
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            return Err(PricingError::domain("maturity", "must be > 0"));
        }
        Ok(())
    }

    /// Payoff as a function of the spot price.
    pub fn payoff_spot(&self, s: f64) -> f64 {
        match self.payoff {
            Payoff::Call => (s - self.strike).max(0.0),
            Payoff::Put => (self.strike - s).max(0.0),
        }
    }

    /// Payoff as a function of the log-price.
    pub fn payoff_log(&self, y: f64) -> f64 {
        self.payoff_spot(y.exp())
    }

    /// Exercise value before maturity: the payoff for American options, zero
    /// for European ones.
    pub fn obstacle_log(&self, y: f64) -> f64 {
        match self.exercise {
            Exercise::American => self.payoff_log(y),
            Exercise::European => 0.0,
        }
    }
}

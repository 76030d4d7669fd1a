//! Closed-form Black-Scholes analytics: price, Greeks, and implied-volatility
//! inversion.
//!
//! Conventions:
//! - `ttm` is a year fraction (ACT/365), `rate` is continuously compounded.
//! - Theta is the derivative of price with respect to calendar time
//!   (so typically negative for long options); vega is per unit of
//!   volatility (not per volatility point).
//! - The zero-vol / zero-ttm limit returns forward intrinsic value with
//!   delta = 1 for in-the-money calls (0.5 at exact forward-moneyness
//!   equality), matching the discontinuous payoff-derivative limit.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

/// Call or put.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

impl OptionKind {
    pub fn sign(self) -> f64 {
        match self {
            OptionKind::Call => 1.0,
            OptionKind::Put => -1.0,
        }
    }

    pub fn code(self) -> char {
        match self {
            OptionKind::Call => 'C',
            OptionKind::Put => 'P',
        }
    }
}

impl std::str::FromStr for OptionKind {
    type Err = BsError;

    fn from_str(s: &str) -> Result<Self, BsError> {
        match s {
            "call" | "C" | "c" => Ok(OptionKind::Call),
            "put" | "P" | "p" => Ok(OptionKind::Put),
            other => Err(BsError::Domain(format!("unknown option kind `{other}`"))),
        }
    }
}

/// Inputs to the Black-Scholes formulas for one European option.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EuroOptionTerms {
    pub spot: f64,
    pub strike: f64,
    /// Year fraction, ACT/365.
    pub ttm: f64,
    /// Continuously compounded annual risk-free rate.
    pub rate: f64,
    /// Annualized volatility.
    pub vol: f64,
    pub kind: OptionKind,
}

#[derive(Debug, Error)]
pub enum BsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("target price {target} outside no-arbitrage bounds [{lo}, {hi}]")]
    OutOfBounds { target: f64, lo: f64, hi: f64 },
    #[error("implied-vol solver failed to converge after {0} iterations")]
    NonConvergence(usize),
}

impl EuroOptionTerms {
    /// Validates invariants: positive spot/strike, non-negative finite ttm/vol.
    /// Zero ttm or vol is allowed and handled via the intrinsic limit.
    pub fn validate(&self) -> Result<(), BsError> {
        if !(self.spot > 0.0) || !self.spot.is_finite() {
            return Err(BsError::Domain(format!("spot must be > 0, got {}", self.spot)));
        }
        if !(self.strike > 0.0) || !self.strike.is_finite() {
            return Err(BsError::Domain(format!("strike must be > 0, got {}", self.strike)));
        }
        if self.ttm < 0.0 || !self.ttm.is_finite() {
            return Err(BsError::Domain(format!("ttm must be >= 0, got {}", self.ttm)));
        }
        if self.vol < 0.0 || !self.vol.is_finite() {
            return Err(BsError::Domain(format!("vol must be >= 0, got {}", self.vol)));
        }
        if !self.rate.is_finite() {
            return Err(BsError::Domain(format!("rate must be finite, got {}", self.rate)));
        }
        Ok(())
    }
}

/// Price and sensitivities for one option.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreekSet {
    pub price: f64,
    pub delta: f64,
    pub gamma: f64,
    pub vega: f64,
    /// d(price)/d(calendar time), i.e. minus the ttm derivative.
    pub theta: f64,
}

/// Standard normal CDF via the complementary error function
/// (erfc accurate to ~1e-15 absolute, which Newton on implied vol needs).
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Closed-form Black-Scholes price and Greeks. Pure and deterministic.
pub fn bs_price_greeks(terms: &EuroOptionTerms) -> Result<GreekSet, BsError> {
    terms.validate()?;
    let EuroOptionTerms { spot, strike, ttm, rate, vol, kind } = *terms;
    let sqrt_t = ttm.sqrt();
    let vol_t = vol * sqrt_t;
    let df = (-rate * ttm).exp();
    let sign = kind.sign();

    if vol_t <= 0.0 {
        // Intrinsic limit against the discounted strike.
        let fwd_intrinsic = sign * (spot - strike * df);
        let price = fwd_intrinsic.max(0.0);
        let delta = if spot > strike * df {
            if sign > 0.0 { 1.0 } else { 0.0 }
        } else if spot < strike * df {
            if sign > 0.0 { 0.0 } else { -1.0 }
        } else {
            0.5 * sign
        };
        let theta = if fwd_intrinsic > 0.0 { -sign * rate * strike * df } else { 0.0 };
        return Ok(GreekSet { price, delta, gamma: 0.0, vega: 0.0, theta });
    }

    let d1 = ((spot / strike).ln() + (rate + 0.5 * vol * vol) * ttm) / vol_t;
    let d2 = d1 - vol_t;
    let price = sign * (spot * norm_cdf(sign * d1) - strike * df * norm_cdf(sign * d2));
    let delta = match kind {
        OptionKind::Call => norm_cdf(d1),
        OptionKind::Put => norm_cdf(d1) - 1.0,
    };
    let gamma = norm_pdf(d1) / (spot * vol_t);
    let vega = spot * norm_pdf(d1) * sqrt_t;
    let theta = -spot * norm_pdf(d1) * vol / (2.0 * sqrt_t) - sign * rate * strike * df * norm_cdf(sign * d2);
    Ok(GreekSet { price, delta, gamma, vega, theta })
}

/// Black-Scholes price only.
pub fn bs_price(terms: &EuroOptionTerms) -> Result<f64, BsError> {
    bs_price_greeks(terms).map(|g| g.price)
}

/// No-arbitrage price bounds for the given terms (vol-independent).
pub fn price_bounds(spot: f64, strike: f64, ttm: f64, rate: f64, kind: OptionKind) -> (f64, f64) {
    let df = (-rate * ttm).exp();
    match kind {
        OptionKind::Call => ((spot - strike * df).max(0.0), spot),
        OptionKind::Put => ((strike * df - spot).max(0.0), strike * df),
    }
}

const IV_MAX_ITER: usize = 100;
const IV_BRACKET: (f64, f64) = (1e-6, 5.0);

/// Inverts the Black-Scholes price for volatility.
///
/// Newton from an initial guess of 0.2, falling back to bisection on
/// [1e-6, 5] whenever a Newton step exits the current bracket. Converges to
/// |price(sigma) - target| <= 1e-10 * max(1, target).
pub fn implied_vol(
    target_price: f64,
    spot: f64,
    strike: f64,
    ttm: f64,
    rate: f64,
    kind: OptionKind,
) -> Result<f64, BsError> {
    let probe = EuroOptionTerms { spot, strike, ttm, rate, vol: 1.0, kind };
    probe.validate()?;
    if ttm == 0.0 {
        return Err(BsError::Domain("implied vol undefined at ttm = 0".into()));
    }
    let (lo_bound, hi_bound) = price_bounds(spot, strike, ttm, rate, kind);
    if !(target_price > lo_bound && target_price < hi_bound) {
        return Err(BsError::OutOfBounds { target: target_price, lo: lo_bound, hi: hi_bound });
    }

    // Convergence is judged in vol space, not price space: low-vega quotes
    // turn any fixed price tolerance into a large vol error, while Newton
    // steps and the bisection bracket bound the vol error directly.
    let price_at = |vol: f64| -> GreekSet {
        bs_price_greeks(&EuroOptionTerms { spot, strike, ttm, rate, vol, kind })
            .expect("validated terms")
    };

    let (mut lo, mut hi) = IV_BRACKET;
    let mut vol = 0.2;
    for _ in 0..IV_MAX_ITER {
        let g = price_at(vol);
        let diff = g.price - target_price;
        if diff == 0.0 {
            return Ok(vol);
        }
        // Maintain the bisection bracket (price is increasing in vol).
        if diff > 0.0 {
            hi = vol;
        } else {
            lo = vol;
        }
        if hi - lo <= 1e-12 * hi.max(0.01) {
            return Ok(0.5 * (lo + hi));
        }
        let newton = if g.vega > f64::EPSILON { vol - diff / g.vega } else { f64::NAN };
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - vol).abs() <= 1e-13 * vol.max(1e-3) {
            return Ok(next);
        }
        vol = next;
    }
    if hi - lo <= 1e-9 * hi.max(0.01) {
        Ok(0.5 * (lo + hi))
    } else {
        Err(BsError::NonConvergence(IV_MAX_ITER))
    }
}

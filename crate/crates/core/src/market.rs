//! Synthetic option-market panels.
//!
//! Generates daily snapshots of an underlier plus a grid of quoted options
//! with model-consistent prices, under either geometric Brownian motion
//! (constant vol, so the implied BS delta is near-optimal) or Heston
//! stochastic volatility (where minimum-variance corrections exist to be
//! learned, for negative spot-variance correlation).
//!
//! Calendar convention: `date_index` counts consecutive trading days, each
//! advancing time by 1/365 year (see [`crate::DAYS_PER_YEAR`]). A "month"
//! on the expiry lattice is 21 trading days.

use crate::bs::{self, BsError, EuroOptionTerms, OptionKind};
use crate::{DAYS_PER_MONTH, DAYS_PER_YEAR};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("pricing integration failed to converge (extreme parameters?)")]
    IntegrationNonConvergence,
    #[error(transparent)]
    Bs(#[from] BsError),
}

/// Geometric Brownian motion underlier parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GbmParams {
    pub s0: f64,
    /// Annual drift of the spot path (real-world measure).
    pub drift: f64,
    pub vol: f64,
    pub rate: f64,
}

impl GbmParams {
    pub fn validate(&self) -> Result<(), MarketError> {
        if !(self.s0 > 0.0) {
            return Err(MarketError::InvalidParams(format!("s0 must be > 0, got {}", self.s0)));
        }
        if !(self.vol > 0.0) {
            return Err(MarketError::InvalidParams(format!("vol must be > 0, got {}", self.vol)));
        }
        Ok(())
    }
}

/// Heston stochastic-volatility parameters.
///
/// The Feller ratio `2*kappa*theta_bar/xi^2` need not exceed 1; the scheme
/// uses full truncation so variance paths touching zero are handled.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HestonParams {
    pub s0: f64,
    /// Initial instantaneous variance.
    pub v0: f64,
    /// Mean-reversion speed of variance.
    pub kappa: f64,
    /// Long-run variance level.
    pub theta_bar: f64,
    /// Volatility of variance.
    pub xi: f64,
    /// Spot-variance correlation, in (-1, 1).
    pub rho: f64,
    pub rate: f64,
}

impl HestonParams {
    pub fn validate(&self) -> Result<(), MarketError> {
        let bad = |what: &str, v: f64| MarketError::InvalidParams(format!("{what} invalid: {v}"));
        if !(self.s0 > 0.0) {
            return Err(bad("s0", self.s0));
        }
        if !(self.v0 > 0.0) {
            return Err(bad("v0", self.v0));
        }
        if !(self.kappa > 0.0) {
            return Err(bad("kappa", self.kappa));
        }
        if !(self.theta_bar > 0.0) {
            return Err(bad("theta_bar", self.theta_bar));
        }
        if !(self.xi > 0.0) {
            return Err(bad("xi", self.xi));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(bad("rho", self.rho));
        }
        Ok(())
    }

    pub fn feller_ratio(&self) -> f64 {
        2.0 * self.kappa * self.theta_bar / (self.xi * self.xi)
    }
}

impl Default for HestonParams {
    /// Plausible equity-index values; synthetic defaults, not calibrated.
    fn default() -> Self {
        HestonParams { s0: 100.0, v0: 0.04, kappa: 2.0, theta_bar: 0.04, xi: 0.5, rho: -0.7, rate: 0.02 }
    }
}

/// Strike/expiry lattice for the synthetic quote grid.
///
/// At every roll date (multiples of `roll_period_days`) new contracts are
/// issued: for each tenor, both kinds at strikes `moneyness * spot` rounded
/// to integers. Contracts are quoted daily until fewer than
/// `min_quote_ttm_days` remain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub moneyness: Vec<f64>,
    pub tenor_months: Vec<u32>,
    pub roll_period_days: u32,
    pub min_quote_ttm_days: u32,
}

impl Default for LatticeSpec {
    fn default() -> Self {
        LatticeSpec {
            moneyness: (0..=8).map(|i| 0.80 + 0.05 * i as f64).collect(),
            tenor_months: vec![1, 2, 3, 6, 12, 24],
            roll_period_days: DAYS_PER_MONTH,
            min_quote_ttm_days: 7,
        }
    }
}

impl LatticeSpec {
    /// Sparser grid for quick experiments: 5 strikes, tenors up to 6 months.
    pub fn sparse() -> Self {
        LatticeSpec {
            moneyness: vec![0.85, 0.925, 1.0, 1.075, 1.15],
            tenor_months: vec![1, 2, 3, 6],
            roll_period_days: DAYS_PER_MONTH,
            min_quote_ttm_days: 7,
        }
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        if self.moneyness.is_empty() || self.tenor_months.is_empty() {
            return Err(MarketError::InvalidParams("lattice must be nonempty".into()));
        }
        if self.roll_period_days == 0 {
            return Err(MarketError::InvalidParams("roll_period_days must be >= 1".into()));
        }
        Ok(())
    }
}

/// One option observation within a snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionQuote {
    /// Opaque contract identity (kind, strike, expiry day).
    pub contract_id: String,
    pub date_index: u32,
    pub spot: f64,
    pub strike: f64,
    pub ttm_days: u32,
    pub kind: OptionKind,
    pub mid_price: f64,
    pub implied_vol: f64,
    pub delta_bs: f64,
    pub gamma_bs: f64,
    pub vega_bs: f64,
    pub theta_bs: f64,
}

impl OptionQuote {
    /// Time to maturity as a year fraction.
    pub fn ttm(&self) -> f64 {
        self.ttm_days as f64 / DAYS_PER_YEAR
    }

    pub fn moneyness(&self) -> f64 {
        self.spot / self.strike
    }
}

/// One trading day: underlier state plus the quoted option grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarketSnapshot {
    pub date_index: u32,
    pub spot: f64,
    /// Annualized instantaneous vol (Heston: sqrt(v_t); GBM: constant).
    pub instantaneous_vol: f64,
    /// BS implied vol of a synthetic 30-day ATM option; stands in for VIX.
    pub vix_proxy: f64,
    /// Previous-day log return (0 on the first day).
    pub index_return: f64,
    pub quotes: Vec<OptionQuote>,
}

// ---------------------------------------------------------------------------
// Path simulation
// ---------------------------------------------------------------------------

/// Daily GBM spot path with exact lognormal increments. `days` points
/// including the initial spot.
pub fn simulate_gbm_path(params: &GbmParams, days: u32, seed: u64) -> Vec<f64> {
    let dt = 1.0 / DAYS_PER_YEAR;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut path = Vec::with_capacity(days as usize);
    let mut log_s = params.s0.ln();
    path.push(params.s0);
    for _ in 1..days {
        let z: f64 = rng.sample(StandardNormal);
        log_s += (params.drift - 0.5 * params.vol * params.vol) * dt + params.vol * dt.sqrt() * z;
        path.push(log_s.exp());
    }
    path
}

/// Daily Heston (spot, variance) path, full-truncation Euler with
/// `substeps` sub-daily steps. Returns `days` points including the start.
pub fn simulate_heston_path(
    params: &HestonParams,
    days: u32,
    substeps: u32,
    seed: u64,
) -> Vec<(f64, f64)> {
    let dt = 1.0 / DAYS_PER_YEAR / substeps as f64;
    let sqrt_dt = dt.sqrt();
    let rho_bar = (1.0 - params.rho * params.rho).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut path = Vec::with_capacity(days as usize);
    let mut log_s = params.s0.ln();
    let mut v = params.v0;
    path.push((params.s0, v));
    for _ in 1..days {
        for _ in 0..substeps {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let zv = params.rho * z1 + rho_bar * z2;
            let v_pos = v.max(0.0);
            let v_sqrt = v_pos.sqrt();
            log_s += (params.rate - 0.5 * v_pos) * dt + v_sqrt * sqrt_dt * z1;
            v += params.kappa * (params.theta_bar - v_pos) * dt + params.xi * v_sqrt * sqrt_dt * zv;
        }
        path.push((log_s.exp(), v));
    }
    path
}

/// Default number of sub-daily Euler steps for the Heston scheme.
pub const HESTON_SUBSTEPS: u32 = 8;

// ---------------------------------------------------------------------------
// Heston semi-closed-form pricing
// ---------------------------------------------------------------------------

const GL_POINTS: usize = 32;

fn gl_nodes() -> &'static ([f64; GL_POINTS], [f64; GL_POINTS]) {
    static NODES: OnceLock<([f64; GL_POINTS], [f64; GL_POINTS])> = OnceLock::new();
    NODES.get_or_init(|| {
        // Gauss-Legendre nodes on [-1, 1] by Newton iteration on P_n.
        let n = GL_POINTS;
        let mut x = [0.0; GL_POINTS];
        let mut w = [0.0; GL_POINTS];
        for i in 0..n {
            let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0_f64, t);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
                let dt = p1 / dp;
                t -= dt;
                if dt.abs() < 1e-15 {
                    let dp = {
                        let (mut p0, mut p1) = (1.0_f64, t);
                        for k in 2..=n {
                            let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                            p0 = p1;
                            p1 = p2;
                        }
                        n as f64 * (t * p1 - p0) / (t * t - 1.0)
                    };
                    w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
                    break;
                }
            }
            x[i] = t;
        }
        (x, w)
    })
}

fn gl_panel(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (x, w) = gl_nodes();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for i in 0..GL_POINTS {
        acc += w[i] * f(mid + half * x[i]);
    }
    acc * half
}

/// Adaptive bisecting Gauss-Legendre on [a, b] to absolute tolerance `tol`.
fn adaptive_gl(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> Result<f64, MarketError> {
    let whole = gl_panel(f, a, b);
    let mid = 0.5 * (a + b);
    let left = gl_panel(f, a, mid);
    let right = gl_panel(f, mid, b);
    let diff = (left + right - whole).abs();
    if diff <= tol {
        return Ok(left + right);
    }
    if depth == 0 {
        return Err(MarketError::IntegrationNonConvergence);
    }
    Ok(adaptive_gl(f, a, mid, 0.5 * tol, depth - 1)? + adaptive_gl(f, mid, b, 0.5 * tol, depth - 1)?)
}

/// ln(1 - z) stable for small |z|.
fn ln1m(z: Complex64) -> Complex64 {
    if z.norm() < 1e-4 {
        let z2 = z * z;
        -(z + z2 * 0.5 + z2 * z / 3.0 + z2 * z2 * 0.25)
    } else {
        (Complex64::new(1.0, 0.0) - z).ln()
    }
}

/// Characteristic-function term f_j(u) of the Heston P1/P2 representation
/// ("little trap" branch handling; the b - rho*xi*i*u - d difference is
/// evaluated via its conjugate product form so xi -> 0 stays accurate).
fn heston_cf_term(
    p: &HestonParams,
    var: f64,
    log_spot: f64,
    ttm: f64,
    j: usize,
    u: f64,
) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    let iu = i * u;
    let (uj, b) = if j == 1 {
        (0.5, p.kappa - p.rho * p.xi)
    } else {
        (-0.5, p.kappa)
    };
    let a = Complex64::new(b, 0.0) - p.rho * p.xi * iu;
    let q = 2.0 * uj * iu - u * u;
    let d = (a * a - p.xi * p.xi * q).sqrt();
    let apd = a + d;
    // a - d == xi^2 * q / (a + d) without cancellation.
    let g_small = q / (apd * apd); // G / xi^2
    let g = p.xi * p.xi * g_small;
    let edt = (-d * ttm).exp();
    // ln((1 - G e^{-d t})/(1 - G)) / xi^2: G itself is an exact product of
    // xi^2 with g_small, so the tiny logs divide back out at full precision.
    let log_ratio_over_xi2 = (ln1m(g * edt) - ln1m(g)) / (p.xi * p.xi);
    let c = iu * (p.rate * ttm)
        + p.kappa * p.theta_bar * (q * ttm / apd - 2.0 * log_ratio_over_xi2);
    let dd = q * (Complex64::new(1.0, 0.0) - edt) / (apd * (Complex64::new(1.0, 0.0) - g * edt));
    (c + dd * var + iu * log_spot).exp()
}

/// European call price under Heston dynamics at current state
/// `(spot, var)`, via the P1/P2 probability integrals with adaptive
/// Gauss-Legendre quadrature.
pub fn heston_call_price(
    p: &HestonParams,
    spot: f64,
    var: f64,
    strike: f64,
    ttm: f64,
) -> Result<f64, MarketError> {
    p.validate()?;
    if !(spot > 0.0 && strike > 0.0 && ttm > 0.0 && var >= 0.0) {
        return Err(MarketError::InvalidParams(format!(
            "bad pricing inputs: spot={spot} strike={strike} ttm={ttm} var={var}"
        )));
    }
    let log_spot = spot.ln();
    let log_k = strike.ln();
    let v_eff = var.max(p.theta_bar).max(1e-4);
    let u_max = (40.0 / (v_eff * ttm).sqrt()).max(200.0);
    let tol = 1e-12 * spot;
    let var_floor = var.max(0.0);

    let mut prob = [0.0; 2];
    for j in [1usize, 2] {
        let integrand = |u: f64| {
            let f = heston_cf_term(p, var_floor, log_spot, ttm, j, u);
            let val = (Complex64::new(0.0, -u * log_k)).exp() * f / Complex64::new(0.0, u);
            val.re
        };
        let integral = adaptive_gl(&integrand, 1e-12, u_max, tol, 24)?;
        prob[j - 1] = 0.5 + integral / std::f64::consts::PI;
    }
    let df = (-p.rate * ttm).exp();
    Ok(spot * prob[0] - strike * df * prob[1])
}

/// European put price via put-call parity on the Heston call.
pub fn heston_put_price(
    p: &HestonParams,
    spot: f64,
    var: f64,
    strike: f64,
    ttm: f64,
) -> Result<f64, MarketError> {
    let call = heston_call_price(p, spot, var, strike, ttm)?;
    Ok(call - spot + strike * (-p.rate * ttm).exp())
}

// ---------------------------------------------------------------------------
// Panel generation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Contract {
    kind: OptionKind,
    strike_cents: u64,
    expiry_day: u32,
}

impl Contract {
    fn strike(&self) -> f64 {
        self.strike_cents as f64 / 100.0
    }

    fn id(&self) -> String {
        format!("{}{}-{}", self.kind.code(), self.strike_cents / 100, self.expiry_day)
    }
}

/// Rolls the contract book forward: issues new contracts on roll dates and
/// drops those too close to expiry.
fn update_contracts(
    contracts: &mut Vec<Contract>,
    seen: &mut HashSet<Contract>,
    lattice: &LatticeSpec,
    day: u32,
    spot: f64,
) {
    if day % lattice.roll_period_days == 0 {
        for &tenor in &lattice.tenor_months {
            let expiry = day + tenor * DAYS_PER_MONTH;
            for &m in &lattice.moneyness {
                let strike = (m * spot).round().max(1.0);
                for kind in [OptionKind::Call, OptionKind::Put] {
                    let c = Contract { kind, strike_cents: (strike * 100.0).round() as u64, expiry_day: expiry };
                    if seen.insert(c.clone()) {
                        contracts.push(c);
                    }
                }
            }
        }
    }
    contracts.retain(|c| {
        let keep = c.expiry_day > day && c.expiry_day - day >= lattice.min_quote_ttm_days;
        if !keep {
            seen.remove(c);
        }
        keep
    });
}

/// Daily GBM panel: exact lognormal spot path, Black-Scholes quotes at the
/// constant model vol. Deterministic in `seed`.
pub fn simulate_gbm_panel(
    params: &GbmParams,
    calendar_days: u32,
    lattice: &LatticeSpec,
    seed: u64,
) -> Result<Vec<MarketSnapshot>, MarketError> {
    params.validate()?;
    lattice.validate()?;
    if calendar_days < 2 {
        return Err(MarketError::InvalidParams("calendar must span at least 2 days".into()));
    }
    let path = simulate_gbm_path(params, calendar_days, seed);
    let mut snapshots = Vec::with_capacity(calendar_days as usize);
    let mut contracts = Vec::new();
    let mut seen = HashSet::new();
    for day in 0..calendar_days {
        let spot = path[day as usize];
        update_contracts(&mut contracts, &mut seen, lattice, day, spot);
        let quotes = contracts
            .iter()
            .map(|c| {
                let ttm_days = c.expiry_day - day;
                let terms = EuroOptionTerms {
                    spot,
                    strike: c.strike(),
                    ttm: ttm_days as f64 / DAYS_PER_YEAR,
                    rate: params.rate,
                    vol: params.vol,
                    kind: c.kind,
                };
                let g = bs::bs_price_greeks(&terms)?;
                Ok(OptionQuote {
                    contract_id: c.id(),
                    date_index: day,
                    spot,
                    strike: c.strike(),
                    ttm_days,
                    kind: c.kind,
                    mid_price: g.price,
                    implied_vol: params.vol,
                    delta_bs: g.delta,
                    gamma_bs: g.gamma,
                    vega_bs: g.vega,
                    theta_bs: g.theta,
                })
            })
            .collect::<Result<Vec<_>, MarketError>>()?;
        let index_return = if day == 0 { 0.0 } else { (spot / path[day as usize - 1]).ln() };
        snapshots.push(MarketSnapshot {
            date_index: day,
            spot,
            instantaneous_vol: params.vol,
            vix_proxy: params.vol,
            index_return,
            quotes,
        });
    }
    Ok(snapshots)
}

/// Daily Heston panel: full-truncation Euler path (8 substeps/day), quotes
/// priced by the characteristic-function semi-closed form, implied vols and
/// Greeks derived through the BS engine. Quotes whose model price falls on
/// a no-arbitrage bound (so no implied vol exists) are skipped.
pub fn simulate_heston_panel(
    params: &HestonParams,
    calendar_days: u32,
    lattice: &LatticeSpec,
    seed: u64,
) -> Result<Vec<MarketSnapshot>, MarketError> {
    params.validate()?;
    lattice.validate()?;
    if calendar_days < 2 {
        return Err(MarketError::InvalidParams("calendar must span at least 2 days".into()));
    }
    let path = simulate_heston_path(params, calendar_days, HESTON_SUBSTEPS, seed);
    let mut snapshots = Vec::with_capacity(calendar_days as usize);
    let mut contracts = Vec::new();
    let mut seen = HashSet::new();
    for day in 0..calendar_days {
        let (spot, var) = path[day as usize];
        let var = var.max(0.0);
        update_contracts(&mut contracts, &mut seen, lattice, day, spot);
        let quotes: Vec<OptionQuote> = contracts
            .par_iter()
            .map(|c| heston_quote(params, c, day, spot, var))
            .collect::<Result<Vec<Option<OptionQuote>>, MarketError>>()?
            .into_iter()
            .flatten()
            .collect();
        let vix_proxy = {
            let ttm = 30.0 / DAYS_PER_YEAR;
            let price = heston_call_price(params, spot, var, spot, ttm)?;
            bs::implied_vol(price, spot, spot, ttm, params.rate, OptionKind::Call)?
        };
        let index_return = if day == 0 { 0.0 } else { (spot / path[day as usize - 1].0).ln() };
        snapshots.push(MarketSnapshot {
            date_index: day,
            spot,
            instantaneous_vol: var.sqrt(),
            vix_proxy,
            index_return,
            quotes,
        });
    }
    Ok(snapshots)
}

fn heston_quote(
    params: &HestonParams,
    c: &Contract,
    day: u32,
    spot: f64,
    var: f64,
) -> Result<Option<OptionQuote>, MarketError> {
    let ttm_days = c.expiry_day - day;
    let ttm = ttm_days as f64 / DAYS_PER_YEAR;
    let strike = c.strike();
    let price = match c.kind {
        OptionKind::Call => heston_call_price(params, spot, var, strike, ttm)?,
        OptionKind::Put => heston_put_price(params, spot, var, strike, ttm)?,
    };
    let (lo, hi) = bs::price_bounds(spot, strike, ttm, params.rate, c.kind);
    if price <= lo + 1e-12 || price >= hi - 1e-12 {
        return Ok(None); // no implied vol exists; drop the quote
    }
    let iv = match bs::implied_vol(price, spot, strike, ttm, params.rate, c.kind) {
        Ok(iv) => iv,
        Err(BsError::OutOfBounds { .. }) | Err(BsError::NonConvergence(_)) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let g = bs::bs_price_greeks(&EuroOptionTerms {
        spot,
        strike,
        ttm,
        rate: params.rate,
        vol: iv,
        kind: c.kind,
    })?;
    Ok(Some(OptionQuote {
        contract_id: c.id(),
        date_index: day,
        spot,
        strike,
        ttm_days,
        kind: c.kind,
        mid_price: price,
        implied_vol: iv,
        delta_bs: g.delta,
        gamma_bs: g.gamma,
        vega_bs: g.vega,
        theta_bs: g.theta,
    }))
}

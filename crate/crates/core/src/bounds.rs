//! Closed-form acceptance, tail, counting and lower-bound calculators, in log space.

use std::fmt;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Unnamed universal constants. All default to 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundConstants {
    pub c_cover: f64,
    pub kappa: f64,
    /// Packing constant; depends only on δ, with no known form.
    pub c_delta: f64,
    pub alpha_lb: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c4: f64,
    pub c_tail: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        BoundConstants { c_cover: 1.0, kappa: 1.0, c_delta: 1.0, alpha_lb: 1.0, c0: 1.0, c1: 1.0, c2: 1.0, c4: 1.0, c_tail: 1.0 }
    }
}

impl BoundConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("c_cover", self.c_cover),
            ("kappa", self.kappa),
            ("c_delta", self.c_delta),
            ("alpha_lb", self.alpha_lb),
            ("c0", self.c0),
            ("c1", self.c1),
            ("c2", self.c2),
            ("c4", self.c4),
            ("c_tail", self.c_tail),
        ];
        match all.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            Some((name, v)) => Err(Error::domain(format!("constant {name} = {v} must be positive"))),
            None => Ok(()),
        }
    }
}

/// Natural log of a nonnegative quantity; zero is −∞.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LogNumber {
    pub ln: f64,
}

impl LogNumber {
    pub const ZERO: LogNumber = LogNumber { ln: f64::NEG_INFINITY };
    pub const ONE: LogNumber = LogNumber { ln: 0.0 };

    pub fn from_ln(ln: f64) -> Self {
        LogNumber { ln }
    }

    pub fn from_value(x: f64) -> Self {
        assert!(x >= 0.0, "LogNumber needs a nonnegative value");
        LogNumber { ln: x.ln() }
    }

    pub fn from_biguint(x: &BigUint) -> Self {
        LogNumber { ln: ln_biguint(x) }
    }

    pub fn value(&self) -> f64 {
        self.ln.exp()
    }

    pub fn log10(&self) -> f64 {
        self.ln / std::f64::consts::LN_10
    }

    pub fn mul(self, o: LogNumber) -> LogNumber {
        LogNumber { ln: self.ln + o.ln }
    }

    pub fn div(self, o: LogNumber) -> LogNumber {
        LogNumber { ln: self.ln - o.ln }
    }

    /// log-sum-exp.
    pub fn add(self, o: LogNumber) -> LogNumber {
        let (hi, lo) = if self.ln >= o.ln { (self.ln, o.ln) } else { (o.ln, self.ln) };
        if hi == f64::NEG_INFINITY {
            return LogNumber::ZERO;
        }
        LogNumber { ln: hi + (lo - hi).exp().ln_1p() }
    }
}

impl fmt::Display for LogNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ln == f64::NEG_INFINITY {
            return f.write_str("0");
        }
        let e = self.log10();
        let exp = e.floor();
        write!(f, "{:.6}e{}", 10f64.powf(e - exp), exp as i64)
    }
}

fn ln_biguint(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits == 0 {
        return f64::NEG_INFINITY;
    }
    if bits <= 1000 {
        let v: f64 = x.to_string().parse().unwrap();
        if v.is_finite() {
            return v.ln();
        }
    }
    let shift = bits - 64;
    let top: f64 = (x >> shift).to_string().parse().unwrap();
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// ln C(n, k) for real n ≥ k ≥ 0, summed term by term for small k.
pub fn ln_binomial(n: f64, k: u64) -> f64 {
    if (k as f64) > n {
        return f64::NEG_INFINITY;
    }
    if k <= 4096 {
        (1..=k).map(|i| ((n - k as f64 + i as f64) / i as f64).ln()).sum()
    } else {
        ln_gamma(n + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma(n - k as f64 + 1.0)
    }
}

pub fn ln_factorial(k: u64) -> f64 {
    if k <= 4096 {
        (2..=k).map(|i| (i as f64).ln()).sum()
    } else {
        ln_gamma(k as f64 + 1.0)
    }
}

fn check_unit(name: &str, x: f64, lo_open: bool, hi_open: bool) -> Result<()> {
    let ok_lo = if lo_open { x > 0.0 } else { x >= 0.0 };
    let ok_hi = if hi_open { x < 1.0 } else { x <= 1.0 };
    if ok_lo && ok_hi {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} = {x} outside its range")))
    }
}

/// Pr[|⟨x⋆|C′†C|0⟩|² ≥ δ] = (1−δ)^{d−1} for Haar C, C′. Exact.
pub fn acceptance_haar(d: f64, delta: f64) -> Result<LogNumber> {
    check_unit("δ", delta, false, false)?;
    if d < 1.0 {
        return Err(Error::domain("dimension must be at least 1"));
    }
    if delta == 1.0 {
        return Ok(LogNumber::ZERO);
    }
    Ok(LogNumber { ln: (d - 1.0) * (-delta).ln_1p() })
}

/// Markov bound k!/(δd)^k on the acceptance probability under a k-design. Upper bound; may
/// exceed 1.
pub fn acceptance_kdesign_bound(d: f64, delta: f64, k: u64) -> Result<LogNumber> {
    check_unit("δ", delta, true, false)?;
    if k < 1 {
        return Err(Error::domain("design order k must be at least 1"));
    }
    Ok(LogNumber { ln: ln_factorial(k) - k as f64 * (delta * d).ln() })
}

/// The looser form (c_tail·k/(δd))^k of the same tail bound. Upper bound.
pub fn acceptance_kdesign_simplified(d: f64, delta: f64, k: u64, consts: &BoundConstants) -> Result<LogNumber> {
    check_unit("δ", delta, true, false)?;
    if k < 1 {
        return Err(Error::domain("design order k must be at least 1"));
    }
    Ok(LogNumber { ln: k as f64 * (consts.c_tail * k as f64 / (delta * d)).ln() })
}

/// ln N(ε) ≤ κs·ln(C n² s/ε), the covering number of s-gate circuits. Upper bound.
pub fn covering_log(n: usize, s: f64, eps: f64, consts: &BoundConstants) -> Result<LogNumber> {
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::domain(format!("ε = {eps} outside (0, 1/2]")));
    }
    if s < 0.0 {
        return Err(Error::domain("gate count must be nonnegative"));
    }
    if s == 0.0 {
        return Ok(LogNumber::ONE);
    }
    let nf = n as f64;
    Ok(LogNumber { ln: consts.kappa * s * (consts.c_cover * nf * nf * s / eps).ln() })
}

/// ln M ≥ ln c_δ + ln C(d+k−2, k), the packing count from a k-design. Lower bound.
pub fn packing_log(d: f64, k: u64, delta: f64, consts: &BoundConstants) -> Result<LogNumber> {
    check_unit("δ", delta, true, false)?;
    if k as f64 > d - 1.0 {
        return Err(Error::domain(format!("packing needs k ≤ d − 1, got k = {k}, d = {d}")));
    }
    Ok(LogNumber { ln: consts.c_delta.ln() + ln_binomial(d + k as f64 - 2.0, k) })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressionBound {
    /// ln of covering/packing. Upper bound on Pr[dist(P, C_{n,≤s}) ≤ ε] up to the additive term.
    pub log_bound: LogNumber,
    /// The separately reported O(ε) additive term, taken as ε.
    pub additive: f64,
}

pub fn compression_probability_bound(n: usize, k: u64, s: f64, eps: f64, delta: f64, consts: &BoundConstants) -> Result<CompressionBound> {
    let d = 2f64.powi(n as i32);
    let cover = covering_log(n, s, eps, consts)?;
    let pack = packing_log(d, k, delta, consts)?;
    Ok(CompressionBound { log_bound: cover.div(pack), additive: eps })
}

/// Smallest integer s at which the compression bound's log turns nonnegative.
pub fn compression_crossover(n: usize, k: u64, eps: f64, delta: f64, consts: &BoundConstants) -> Result<u64> {
    let f = |s: u64| compression_probability_bound(n, k, s as f64, eps, delta, consts).map(|b| b.log_bound.ln);
    if f(0)? >= 0.0 {
        return Ok(0);
    }
    let mut hi = 1u64;
    while f(hi)? < 0.0 {
        hi *= 2;
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Design,
    Haar,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateCountBound {
    pub regime: Regime,
    /// ⌊s⋆⌋ when it fits in u64.
    pub s_star: Option<u64>,
    pub log_s_star: LogNumber,
}

/// Design regime ⌊α·kn/ln(kn)⌋; Haar regime ⌊c₄·4ⁿ⌋. Lower bounds on the ε-approximate gate count.
pub fn gate_count_lower_bound(n: usize, k: u64, regime: Regime, consts: &BoundConstants) -> Result<GateCountBound> {
    let kn = k as f64 * n as f64;
    match regime {
        Regime::Design => {
            if kn < 3.0 {
                return Err(Error::domain("design regime needs kn ≥ 3"));
            }
            let v = (consts.alpha_lb * kn / kn.ln()).floor();
            Ok(GateCountBound { regime, s_star: Some(v as u64), log_s_star: LogNumber::from_value(v) })
        }
        Regime::Haar => {
            let ln = consts.c4.ln() + n as f64 * 4f64.ln();
            let s_star = if ln < 63.0 * std::f64::consts::LN_2 { Some((consts.c4 * 4f64.powi(n as i32)).floor() as u64) } else { None };
            let log_s_star = match s_star {
                Some(v) => LogNumber::from_value(v as f64),
                None => LogNumber::from_ln(ln),
            };
            Ok(GateCountBound { regime, s_star, log_s_star })
        }
    }
}

/// k = ⌈log₂ n⌉, the design order that already defeats naive simulation.
pub fn log_n_design_order(n: usize) -> u64 {
    (n.max(2) as f64).log2().ceil() as u64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityBound {
    pub f_min: f64,
    /// 4(1−δ) + 2ε_add, an upper bound on 1 − F_min.
    pub relaxation: f64,
    pub holds: bool,
}

/// F_min = (√(δ(δ−ε)) − √((1−δ)(1−δ+ε)))².
pub fn peak_to_fidelity(delta: f64, eps_add: f64) -> Result<FidelityBound> {
    if !(0.0 <= eps_add && eps_add <= delta && delta <= 1.0) {
        return Err(Error::domain(format!("need 0 ≤ ε_add ≤ δ ≤ 1, got δ = {delta}, ε_add = {eps_add}")));
    }
    let a = (delta * (delta - eps_add)).sqrt();
    let b = ((1.0 - delta) * (1.0 - delta + eps_add)).sqrt();
    let f_min = (a - b) * (a - b);
    let relaxation = 4.0 * (1.0 - delta) + 2.0 * eps_add;
    Ok(FidelityBound { f_min, relaxation, holds: 1.0 - f_min <= relaxation + 1e-15 })
}

/// Exact C(n, k) as a big integer.
pub fn binomial_exact(n: u64, k: u64) -> BigUint {
    crate::stitch::binomial(n, k)
}

pub fn factorial_exact(k: u64) -> BigUint {
    (1..=k).fold(BigUint::from(1u8), |acc, i| acc * BigUint::from(i))
}

//! Classical noise on shot data, peak estimators and peak-string decoders.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rand::seq::index::sample as sample_index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::sim::{SampleMeta, SampleSet};
use crate::stitch::binomial;

/// Majority-decoder constant c in N = c·ln(n/η)/(p²(1−2r)²), from the calibration pilot.
pub const MAJORITY_C: f64 = 1.3;
/// Hamming-center constant c₁ in N = c₁·|B_2t|·ln(n/η)/p², from the calibration pilot.
pub const CENTER_C1: f64 = 0.00035;
/// Constant in N = c·ln(1/η)/((1−ε)²α²) for the depolarizing estimator.
pub const DEPOLARIZING_C: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum Adversary {
    /// Flip bits of shots just outside B_t(target) so they land on its boundary.
    WorstCase { target: BitString },
    /// k ~ U{0..t}, then a uniform k-subset of wires.
    RandomSubset,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum NoiseModel {
    Tsparse { t: usize, adversary: Adversary },
    Bsc { r: f64 },
    Depolarizing { eps: f64 },
}

impl NoiseModel {
    pub fn validate(&self, n: usize) -> Result<()> {
        match *self {
            NoiseModel::Tsparse { t, adversary } => {
                if t > n {
                    return Err(Error::domain(format!("t = {t} exceeds n = {n}")));
                }
                if let Adversary::WorstCase { target } = adversary {
                    if target.len() != n {
                        return Err(Error::structural(format!("adversary target {target} does not have {n} bits")));
                    }
                }
            }
            NoiseModel::Bsc { r } => {
                if !(0.0..0.5).contains(&r) {
                    return Err(Error::domain(format!("flip probability {r} outside [0, 1/2)")));
                }
            }
            NoiseModel::Depolarizing { eps } => {
                if !(0.0..1.0).contains(&eps) {
                    return Err(Error::domain(format!("depolarizing strength {eps} outside [0, 1)")));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseModel::Tsparse { t, adversary: Adversary::RandomSubset } => write!(f, "tsparse:{t}:random"),
            NoiseModel::Tsparse { t, adversary: Adversary::WorstCase { target } } => write!(f, "tsparse:{t}:worst:{target}"),
            NoiseModel::Bsc { r } => write!(f, "bsc:{r}"),
            NoiseModel::Depolarizing { eps } => write!(f, "depol:{eps}"),
        }
    }
}

/// `bsc:R`, `depol:EPS`, `tsparse:T[:random]` or `tsparse:T:worst:TARGET`.
impl FromStr for NoiseModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |x: &str| x.parse::<f64>().map_err(|_| Error::domain(format!("bad number {x:?} in noise spec {s:?}")));
        match parts.as_slice() {
            ["bsc", r] => Ok(NoiseModel::Bsc { r: num(r)? }),
            ["depol" | "depolarizing", e] => Ok(NoiseModel::Depolarizing { eps: num(e)? }),
            ["tsparse", t, rest @ ..] => {
                let t = t.parse().map_err(|_| Error::domain(format!("bad radius in noise spec {s:?}")))?;
                let adversary = match rest {
                    [] | ["random"] => Adversary::RandomSubset,
                    ["worst", target] => Adversary::WorstCase { target: target.parse()? },
                    _ => return Err(Error::domain(format!("bad adversary in noise spec {s:?}"))),
                };
                Ok(NoiseModel::Tsparse { t, adversary })
            }
            _ => Err(Error::domain(format!("unknown noise spec {s:?}"))),
        }
    }
}

pub fn apply_noise(samples: &SampleSet, model: &NoiseModel, seed: u64) -> Result<SampleSet> {
    let n = samples.n;
    model.validate(n)?;
    let mut rng = rng_from_seed(seed);
    let full = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let shots = samples
        .shots
        .iter()
        .map(|s| {
            let mut x = s.index();
            match *model {
                NoiseModel::Tsparse { t, adversary: Adversary::RandomSubset } => {
                    let k = rng.random_range(0..=t);
                    for w in sample_index(&mut rng, n, k) {
                        x ^= 1 << (n - 1 - w);
                    }
                }
                NoiseModel::Tsparse { t, adversary: Adversary::WorstCase { target } } => {
                    let diff = x ^ target.index();
                    let h = diff.count_ones() as usize;
                    if h > t && h <= 2 * t {
                        // Clear the h − t differing bits nearest wire 0.
                        let mut d = diff;
                        for _ in 0..h - t {
                            let top = 63 - d.leading_zeros();
                            x ^= 1 << top;
                            d ^= 1 << top;
                        }
                    }
                }
                NoiseModel::Bsc { r } => {
                    for w in 0..n {
                        if rng.random::<f64>() < r {
                            x ^= 1 << w;
                        }
                    }
                }
                NoiseModel::Depolarizing { eps } => {
                    if rng.random::<f64>() < eps {
                        x = rng.random::<u64>() & full;
                    }
                }
            }
            BitString::new(n, x)
        })
        .collect::<Result<Vec<_>>>()?;
    let meta = SampleMeta { instance_id: samples.meta.instance_id.clone(), noise: model.to_string(), seed: Some(seed) };
    SampleSet::new(n, shots, meta)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimate: f64,
    pub std_err: f64,
    pub bias_bound: f64,
    pub decoder: String,
    pub params: BTreeMap<String, f64>,
    /// Set when a de-biased estimate was clamped into [0, 1].
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub clamped: bool,
}

/// |B_t| = Σ_{h≤t} C(n, h).
pub fn ball_size(n: usize, t: usize) -> BigUint {
    (0..=t.min(n)).map(|h| binomial(n as u64, h as u64)).sum()
}

fn ball_size_f64(n: usize, t: usize) -> f64 {
    ball_size(n, t).to_f64().unwrap_or(f64::INFINITY)
}

/// Fraction of shots within distance t of x⋆. `b` defaults to 2^{−n}.
pub fn hba_estimate(samples: &SampleSet, x_star: &BitString, t: usize, b: Option<f64>) -> Result<EstimateReport> {
    let n = samples.n;
    if x_star.len() != n {
        return Err(Error::structural(format!("reference {x_star} does not have {n} bits")));
    }
    if t > n {
        return Err(Error::domain(format!("radius {t} exceeds n = {n}")));
    }
    if samples.is_empty() {
        return Err(Error::domain("no shots"));
    }
    let big_n = samples.len() as f64;
    let hits = samples.shots.iter().filter(|s| s.distance(x_star) as usize <= t).count() as f64;
    let p = hits / big_n;
    let b = b.unwrap_or_else(|| 2f64.powi(-(n as i32)));
    let ball = ball_size_f64(n, t);
    let params = BTreeMap::from([
        ("t".to_string(), t as f64),
        ("b".to_string(), b),
        ("ball_size".to_string(), ball),
        ("shots".to_string(), big_n),
    ]);
    Ok(EstimateReport {
        estimate: p,
        std_err: (p * (1.0 - p) / big_n).sqrt(),
        bias_bound: b * ball,
        decoder: "hba".into(),
        params,
        clamped: false,
    })
}

/// Upward bias reachable by the worst-case adversary: b·(|B_2t| − 1).
pub fn worst_case_bias_bound(n: usize, t: usize, b: f64) -> f64 {
    b * (ball_size_f64(n, 2 * t) - 1.0)
}

/// Densest 2t-ball center (ties to the smallest string), then bitwise majority over its core
/// with bit ties to 0. Returns the decoded string and the core size.
pub fn hamming_center_decode(samples: &SampleSet, t: usize) -> Result<(BitString, usize)> {
    if samples.is_empty() {
        return Err(Error::domain("no shots"));
    }
    let n = samples.n;
    let xs: Vec<u64> = samples.shots.iter().map(|s| s.index()).collect();
    let r = 2 * t as u32;
    let mut best: Option<(usize, u64)> = None;
    for &a in &xs {
        let c = xs.iter().filter(|&&b| (a ^ b).count_ones() <= r).count();
        best = match best {
            Some((bc, bx)) if bc > c || (bc == c && bx <= a) => Some((bc, bx)),
            _ => Some((c, a)),
        };
    }
    let (_, center) = best.unwrap();
    let core: Vec<u64> = xs.iter().copied().filter(|&b| (center ^ b).count_ones() <= r).collect();
    let mut out = 0u64;
    for w in 0..n {
        let ones = core.iter().filter(|&&x| (x >> w) & 1 == 1).count();
        if 2 * ones > core.len() {
            out |= 1 << w;
        }
    }
    Ok((BitString::new(n, out)?, core.len()))
}

/// Per-bit threshold at 1/2, exact ties to 1.
pub fn majority_decode(samples: &SampleSet) -> Result<BitString> {
    if samples.is_empty() {
        return Err(Error::domain("no shots"));
    }
    let n = samples.n;
    let mut out = 0u64;
    for w in 0..n {
        let ones = samples.shots.iter().filter(|s| (s.index() >> w) & 1 == 1).count();
        if 2 * ones >= samples.len() {
            out |= 1 << w;
        }
    }
    BitString::new(n, out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Debiased {
    pub estimate: f64,
    /// Standard-error inflation 1/(1−ε).
    pub se_scale: f64,
    pub clamped: bool,
}

/// p̂ = (p̂′ − ε/2ⁿ)/(1−ε), clamped to [0, 1].
pub fn debias_depolarizing(p_noisy: f64, eps: f64, n: usize) -> Result<Debiased> {
    if eps >= 1.0 {
        return Err(Error::DegenerateChannel);
    }
    if eps < 0.0 {
        return Err(Error::domain(format!("depolarizing strength {eps} is negative")));
    }
    let raw = (p_noisy - eps * 2f64.powi(-(n as i32))) / (1.0 - eps);
    let estimate = raw.clamp(0.0, 1.0);
    Ok(Debiased { estimate, se_scale: 1.0 / (1.0 - eps), clamped: estimate != raw })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Goal {
    Majority,
    Center,
    Hba,
    Depolarizing,
}

impl FromStr for Goal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "majority" => Ok(Goal::Majority),
            "center" => Ok(Goal::Center),
            "hba" => Ok(Goal::Hba),
            "depolarizing" | "depol" => Ok(Goal::Depolarizing),
            _ => Err(Error::domain(format!("unknown decoder {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanParams {
    pub n: usize,
    pub p_max: f64,
    #[serde(default)]
    pub r: Option<f64>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    pub eta: f64,
    /// Sparse-flip radius for the center decoder.
    #[serde(default)]
    pub t: Option<usize>,
    /// Chernoff slack for the recommended HBA radius.
    #[serde(default)]
    pub delta_chernoff: Option<f64>,
}

impl PlanParams {
    pub fn new(n: usize, p_max: f64, eta: f64) -> Self {
        PlanParams { n, p_max, r: None, eps: None, alpha: None, eta, t: None, delta_chernoff: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub goal: Goal,
    pub shots: u64,
    /// Unrounded bound; infinite when the channel erases the signal.
    pub bound: f64,
    /// Recommended HBA radius ⌈(1+δ)nr⌉ when a flip rate is given.
    pub t_radius: Option<usize>,
    pub formula: String,
    pub constant: f64,
}

pub fn plan_samples(goal: Goal, p: &PlanParams) -> Result<SamplePlan> {
    let PlanParams { n, p_max, eta, .. } = *p;
    if n == 0 {
        return Err(Error::domain("n must be at least 1"));
    }
    if !(p_max > 0.0 && p_max <= 1.0) {
        return Err(Error::domain(format!("p_max {p_max} outside (0, 1]")));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::domain(format!("failure probability {eta} outside (0, 1)")));
    }
    if let Some(r) = p.r {
        if !(0.0..0.5).contains(&r) {
            return Err(Error::domain(format!("flip probability {r} outside [0, 1/2)")));
        }
    }
    let t_radius = p.r.map(|r| {
        let delta = p.delta_chernoff.unwrap_or(1.0);
        // Guard against 1.6000000000000003-style round-up.
        let v = (1.0 + delta) * n as f64 * r;
        let rounded = (v * 1e9).round() / 1e9;
        (rounded.ceil() as usize).min(n)
    });
    let nf = n as f64;
    let (bound, formula, constant) = match goal {
        Goal::Majority | Goal::Hba => {
            let r = p.r.unwrap_or(0.0);
            let b = MAJORITY_C * (nf / eta).ln() / (p_max * p_max * (1.0 - 2.0 * r).powi(2));
            (b, "c·ln(n/η)/(p_max²(1−2r)²)".to_string(), MAJORITY_C)
        }
        Goal::Center => {
            let t = p.t.ok_or_else(|| Error::domain("center plan needs the sparse radius t"))?;
            if t > n {
                return Err(Error::domain(format!("t = {t} exceeds n = {n}")));
            }
            let b = CENTER_C1 * ball_size_f64(n, 2 * t) * (nf / eta).ln() / (p_max * p_max);
            (b, "c₁·|B_2t|·ln(n/η)/p_max²".to_string(), CENTER_C1)
        }
        Goal::Depolarizing => {
            let eps = p.eps.unwrap_or(0.0);
            if !(0.0..1.0).contains(&eps) {
                return Err(Error::domain(format!("depolarizing strength {eps} outside [0, 1)")));
            }
            let alpha = p.alpha.ok_or_else(|| Error::domain("depolarizing plan needs the accuracy α"))?;
            if alpha <= 0.0 {
                return Err(Error::domain("accuracy α must be positive"));
            }
            let b = DEPOLARIZING_C * (1.0 / eta).ln() / ((1.0 - eps).powi(2) * alpha * alpha);
            (b, "c·ln(1/η)/((1−ε)²α²)".to_string(), DEPOLARIZING_C)
        }
    };
    let shots = if bound.is_finite() { bound.ceil().max(1.0).min(u64::MAX as f64) as u64 } else { u64::MAX };
    Ok(SamplePlan { goal, shots, bound, t_radius, formula, constant })
}

/// p(x⋆) = p_max with the remaining mass uniform over the other 2ⁿ − 1 strings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedDistribution {
    pub n: usize,
    pub x_star: BitString,
    pub p_max: f64,
}

impl PlantedDistribution {
    pub fn new(x_star: BitString, p_max: f64) -> Result<Self> {
        let n = x_star.len();
        if n == 0 || n > 62 {
            return Err(Error::domain("planted distribution needs 1 ≤ n ≤ 62"));
        }
        if !(0.0..=1.0).contains(&p_max) {
            return Err(Error::domain(format!("p_max {p_max} outside [0, 1]")));
        }
        Ok(PlantedDistribution { n, x_star, p_max })
    }

    /// Largest non-peak probability.
    pub fn b(&self) -> f64 {
        (1.0 - self.p_max) / ((1u64 << self.n) as f64 - 1.0)
    }

    /// Probability mass at each Hamming distance h from x⋆.
    pub fn mass_by_distance(&self) -> Vec<f64> {
        let b = self.b();
        (0..=self.n)
            .map(|h| if h == 0 { self.p_max } else { b * binomial(self.n as u64, h as u64).to_f64().unwrap() })
            .collect()
    }

    pub fn sample(&self, shots: usize, seed: u64) -> Result<SampleSet> {
        let mut rng = rng_from_seed(seed);
        let n = self.n;
        let full = (1u64 << n) - 1;
        let xs = self.x_star.index();
        let strings = (0..shots)
            .map(|_| {
                let x = if rng.random::<f64>() < self.p_max {
                    xs
                } else {
                    loop {
                        let u = rng.random::<u64>() & full;
                        if u != xs {
                            break u;
                        }
                    }
                };
                BitString::new(n, x)
            })
            .collect::<Result<Vec<_>>>()?;
        SampleSet::new(n, strings, SampleMeta { instance_id: Some("planted".into()), noise: "none".into(), seed: Some(seed) })
    }
}

fn binom_f64(n: usize, k: usize) -> f64 {
    if k > n {
        0.0
    } else {
        binomial(n as u64, k as u64).to_f64().unwrap()
    }
}

fn binom_pmf(n: usize, k: usize, r: f64) -> f64 {
    binom_f64(n, k) * r.powi(k as i32) * (1.0 - r).powi((n - k) as i32)
}

/// Pr[W ≤ t] for W ~ Bin(n, r).
pub fn binomial_cdf(n: usize, r: f64, t: usize) -> f64 {
    (0..=t.min(n)).map(|k| binom_pmf(n, k, r)).sum::<f64>().min(1.0)
}

/// 1 − exp(−δ²nr/(2+δ)).
pub fn chernoff_coverage(n: usize, r: f64, delta: f64) -> f64 {
    1.0 - (-(delta * delta) / (2.0 + delta) * n as f64 * r).exp()
}

/// Probability that a string at distance h from x⋆ lands in B_t(x⋆) after one noisy shot.
pub fn reach_probability(n: usize, h: usize, t: usize, model: &NoiseModel) -> f64 {
    match *model {
        NoiseModel::Tsparse { t: ts, adversary: Adversary::RandomSubset } => {
            let mut acc = 0.0;
            for k in 0..=ts {
                let total = binom_f64(n, k);
                let mut hit = 0.0;
                for j in 0..=k.min(h) {
                    if h + k - 2 * j <= t {
                        hit += binom_f64(h, j) * binom_f64(n - h, k - j);
                    }
                }
                acc += hit / total;
            }
            acc / (ts + 1) as f64
        }
        NoiseModel::Tsparse { t: ts, adversary: Adversary::WorstCase { .. } } => {
            let moved = if h > ts && h <= 2 * ts { ts } else { h };
            if moved <= t { 1.0 } else { 0.0 }
        }
        NoiseModel::Bsc { r } => {
            let mut acc = 0.0;
            for j in 0..=h {
                let pj = binom_pmf(h, j, r);
                for l in 0..=(n - h) {
                    if h - j + l <= t {
                        acc += pj * binom_pmf(n - h, l, r);
                    }
                }
            }
            acc
        }
        NoiseModel::Depolarizing { eps } => {
            let inside = if h <= t { 1.0 } else { 0.0 };
            (1.0 - eps) * inside + eps * ball_size_f64(n, t) / 2f64.powi(n as i32)
        }
    }
}

/// E[p̂^{(t)}] after the channel, computed exactly over distance classes.
pub fn exact_hba_expectation(dist: &PlantedDistribution, t: usize, model: &NoiseModel) -> f64 {
    dist.mass_by_distance()
        .iter()
        .enumerate()
        .map(|(h, m)| m * reach_probability(dist.n, h, t, model))
        .sum()
}

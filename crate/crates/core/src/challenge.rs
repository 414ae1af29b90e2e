//! Published challenges, hash commitments to the hidden peak, and the verifier's decision rule.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::bits::BitString;
use crate::circuit::Circuit;
use crate::ensembles::PeakedInstance;
use crate::error::{Error, Result};
use crate::noise::{
    binomial_cdf, debias_depolarizing, hamming_center_decode, hba_estimate, majority_decode, EstimateReport, NoiseModel,
};
use crate::rng::child_rng;
use crate::sim::SampleSet;
use crate::stitch::StitchPlan;

pub const FORMAT_PUBLIC: &str = "peaked-challenge/public/1";
pub const FORMAT_PRIVATE: &str = "peaked-challenge/private/1";

/// Parameters of the run that produced an output file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    /// Root seed. Omitted from published files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub n_max_dense: usize,
    #[serde(default)]
    pub params: Value,
    pub version: String,
}

impl RunConfig {
    pub fn new(command: &str, seed: u64, n_max_dense: usize, params: Value) -> Self {
        RunConfig {
            command: command.into(),
            seed: Some(seed),
            n_max_dense,
            params,
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    /// Copy safe to publish: no seed, and only the listed parameter keys.
    pub fn redacted(&self, keep: &[&str]) -> Self {
        let params = match &self.params {
            Value::Object(m) => Value::Object(m.iter().filter(|(k, _)| keep.contains(&k.as_str())).map(|(k, v)| (k.clone(), v.clone())).collect()),
            _ => Value::Null,
        };
        RunConfig { seed: None, params, ..self.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PublicChallenge {
    pub format: String,
    pub id: String,
    pub circuit: Circuit,
    /// Input basis state; absent means 0ⁿ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_string: Option<BitString>,
    pub commitment: String,
    pub config: RunConfig,
}

impl PublicChallenge {
    pub fn input(&self) -> BitString {
        self.input_string.unwrap_or_else(|| BitString::zeros(self.circuit.n))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivateChallenge {
    pub format: String,
    pub id: String,
    pub instance: PeakedInstance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<StitchPlan>,
    /// 16-byte salt, hex.
    pub salt: String,
    pub commitment: String,
    pub config: RunConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Challenge {
    pub public: PublicChallenge,
    pub private: PrivateChallenge,
}

/// SHA-256 of the peak string's text form followed by the raw salt bytes, hex encoded.
pub fn commit(peak: &BitString, salt: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(peak.to_string().as_bytes());
    h.update(salt);
    hex::encode(h.finalize())
}

impl Challenge {
    /// Seal an instance. The salt is drawn from `seed` so runs are reproducible.
    pub fn seal(instance: PeakedInstance, plan: Option<StitchPlan>, config: RunConfig, seed: u64, public_keys: &[&str]) -> Result<Self> {
        let mut salt = [0u8; 16];
        child_rng(seed, 0x5a17).fill_bytes(&mut salt);
        let commitment = commit(&instance.peak_string, &salt);
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&instance.circuit)?);
        h.update(commitment.as_bytes());
        let id = hex::encode(h.finalize())[..16].to_string();
        let public = PublicChallenge {
            format: FORMAT_PUBLIC.into(),
            id: id.clone(),
            circuit: instance.circuit.clone(),
            input_string: instance.input_string.filter(|x| x.weight() != 0),
            commitment: commitment.clone(),
            config: config.redacted(public_keys),
        };
        let private = PrivateChallenge {
            format: FORMAT_PRIVATE.into(),
            id,
            instance,
            plan,
            salt: hex::encode(salt),
            commitment,
            config,
        };
        let ch = Challenge { public, private };
        leak_check(&serde_json::to_value(&ch.public)?, &ch.private)?;
        Ok(ch)
    }
}

impl PrivateChallenge {
    pub fn salt_bytes(&self) -> Result<Vec<u8>> {
        hex::decode(&self.salt).map_err(|e| Error::structural(format!("bad salt: {e}")))
    }

    pub fn commitment_matches(&self, candidate: &BitString) -> Result<bool> {
        Ok(commit(candidate, &self.salt_bytes()?) == self.commitment)
    }

    pub fn public(&self, public_keys: &[&str]) -> PublicChallenge {
        PublicChallenge {
            format: FORMAT_PUBLIC.into(),
            id: self.id.clone(),
            circuit: self.instance.circuit.clone(),
            input_string: self.instance.input_string.filter(|x| x.weight() != 0),
            commitment: self.commitment.clone(),
            config: self.config.redacted(public_keys),
        }
    }
}

const FORBIDDEN_KEYS: [&str; 8] = ["peak_string", "peakedness", "factors", "plan", "salt", "seed", "c_prime", "blocks"];

/// Fails if the published JSON carries any field or string value that reveals the peak.
pub fn leak_check(public: &Value, private: &PrivateChallenge) -> Result<()> {
    let peak = private.instance.peak_string.to_string();
    let secret_salt = private.salt.as_str();
    fn walk(v: &Value, key: Option<&str>, peak: &str, salt: &str, peakedness: f64) -> std::result::Result<(), String> {
        match v {
            Value::Object(m) => {
                for (k, x) in m {
                    if FORBIDDEN_KEYS.contains(&k.as_str()) {
                        return Err(format!("field {k:?} is private"));
                    }
                    walk(x, Some(k), peak, salt, peakedness)?;
                }
            }
            Value::Array(a) => {
                for x in a {
                    walk(x, key, peak, salt, peakedness)?;
                }
            }
            Value::String(s) => {
                if key != Some("commitment") && key != Some("id") && !peak.is_empty() && s.contains(peak) {
                    return Err(format!("string field {key:?} contains the peak string"));
                }
                if s.contains(salt) {
                    return Err("salt appears in public data".into());
                }
            }
            Value::Number(x) => {
                if peakedness.fract() != 0.0 && key != Some("matrix") && x.as_f64() == Some(peakedness) {
                    return Err(format!("field {key:?} equals the peakedness"));
                }
            }
            _ => {}
        }
        Ok(())
    }
    walk(public, None, &peak, secret_salt, private.instance.peakedness).map_err(|m| Error::structural(format!("leak check failed: {m}")))
}

/// How the verifier recovers the string and estimates its weight.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decoder {
    /// Use the privately known peak string directly.
    Hba,
    Majority,
    Center,
}

impl std::str::FromStr for Decoder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hba" => Ok(Decoder::Hba),
            "majority" => Ok(Decoder::Majority),
            "center" => Ok(Decoder::Center),
            _ => Err(Error::domain(format!("unknown decoder {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub accept: bool,
    pub commitment_ok: bool,
    pub peak_ok: bool,
    pub decoder: Decoder,
    pub decoded: BitString,
    pub claimed: f64,
    /// Acceptance window for the estimate.
    pub window: [f64; 2],
    pub tolerance: f64,
    /// Expected fraction of true peak shots that stay inside the radius.
    pub coverage: f64,
    pub report: EstimateReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseModel>,
}

/// Decode, estimate and decide.
///
/// The estimate must fall in [claimed·coverage − tol, claimed + bias + tol], where coverage is
/// Pr[W ≤ t] under the declared channel and tol is three standard errors of a Bernoulli mean at
/// the expected rate, inflated by 1/(1−ε) after depolarizing de-biasing. The decoded string must
/// also open the commitment.
pub fn verify(private: &PrivateChallenge, shots: &SampleSet, decoder: Decoder, t: usize, noise: Option<&NoiseModel>) -> Result<Verdict> {
    let n = private.instance.n();
    if shots.n != n {
        return Err(Error::structural(format!("shots have {} bits, challenge has {n}", shots.n)));
    }
    if shots.is_empty() {
        return Err(Error::domain("no shots submitted"));
    }
    let decoded = match decoder {
        Decoder::Hba => private.instance.peak_string,
        Decoder::Majority => majority_decode(shots)?,
        Decoder::Center => hamming_center_decode(shots, t)?.0,
    };
    let commitment_ok = private.commitment_matches(&decoded)?;
    let mut report = hba_estimate(shots, &decoded, t, None)?;
    report.decoder = match decoder {
        Decoder::Hba => "hba".into(),
        Decoder::Majority => "majority+hba".into(),
        Decoder::Center => "center+hba".into(),
    };
    let claimed = private.instance.peakedness;
    let big_n = shots.len() as f64;
    let (coverage, scale) = match noise {
        Some(NoiseModel::Bsc { r }) => (binomial_cdf(n, *r, t), 1.0),
        Some(NoiseModel::Depolarizing { eps }) => {
            let d = debias_depolarizing(report.estimate, *eps, n)?;
            report.std_err *= d.se_scale;
            report.estimate = d.estimate;
            report.clamped = d.clamped;
            report.params.insert("eps".into(), *eps);
            (1.0, d.se_scale)
        }
        _ => (1.0, 1.0),
    };
    let expected = (claimed * coverage).clamp(0.0, 1.0);
    let tolerance = 3.0 * (expected * (1.0 - expected) / big_n).sqrt() * scale + 1e-12;
    let window = [claimed * coverage - tolerance, claimed + report.bias_bound + tolerance];
    let peak_ok = report.estimate >= window[0] && report.estimate <= window[1];
    Ok(Verdict {
        accept: peak_ok && commitment_ok,
        commitment_ok,
        peak_ok,
        decoder,
        decoded,
        claimed,
        window,
        tolerance,
        coverage,
        report,
        noise: noise.copied(),
    })
}

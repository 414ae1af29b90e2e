//! Haar sampling, postselected peaked instances, and the design statistics on them.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::circuit::{brickwall_layers, Architecture, Circuit, Gate};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, CVector, C64};
use crate::rng::{child_rng, rng_from_seed, Rng as SimRng};
use crate::sim::{self, DEFAULT_N_MAX_DENSE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Postselect,
    Variational,
    Stitched,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Postselect => "postselect",
            Method::Variational => "variational",
            Method::Stitched => "stitched",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Factors {
    pub c: Circuit,
    pub c_prime: Circuit,
}

/// A circuit P with its peak string: |⟨x⋆|P|x_in⟩|² = peakedness, x_in = 0ⁿ by default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakedInstance {
    #[serde(flatten)]
    pub circuit: Circuit,
    pub peak_string: BitString,
    pub peakedness: f64,
    pub method: Method,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<Factors>,
    /// Input basis state; absent means 0ⁿ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_string: Option<BitString>,
    /// Set when peakedness was predicted rather than measured.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub predicted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<String>,
}

impl PeakedInstance {
    pub fn n(&self) -> usize {
        self.circuit.n
    }

    pub fn input(&self) -> BitString {
        self.input_string.unwrap_or_else(|| BitString::zeros(self.circuit.n))
    }

    /// |⟨x⋆|P|x_in⟩|² recomputed by simulation.
    pub fn measured_peakedness(&self) -> Result<f64> {
        Ok(sim::amplitude(&self.circuit, &self.input(), &self.peak_string)?.norm_sqr())
    }

    pub fn verify(&self, tol: f64) -> Result<bool> {
        Ok((self.measured_peakedness()? - self.peakedness).abs() <= tol)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn haar_unitary(dim: usize, seed: u64) -> CMatrix {
    linalg::haar_unitary(dim, &mut rng_from_seed(seed))
}

pub fn random_brickwall(n: usize, depth: usize, seed: u64) -> Circuit {
    random_brickwall_with(n, depth, &mut rng_from_seed(seed))
}

pub fn random_brickwall_with<R: Rng + ?Sized>(n: usize, depth: usize, rng: &mut R) -> Circuit {
    let gates = brickwall_layers(n, depth)
        .into_iter()
        .flatten()
        .map(|p| Gate { wires: p.to_vec(), kind: crate::GateKind::Fixed(linalg::haar_unitary(4, rng)) })
        .collect();
    Circuit { n, gates, architecture: Some(Architecture::Brickwall { depth }) }
}

/// A single dense Haar gate on all n wires.
pub fn dense_haar_circuit(u: CMatrix) -> Circuit {
    let n = u.nrows().trailing_zeros() as usize;
    let gate = Gate { wires: (0..n).collect(), kind: crate::GateKind::Fixed(u) };
    Circuit { n, gates: if n == 0 { vec![] } else { vec![gate] }, architecture: None }
}

/// Distribution of the factors C, C′ in the postselection construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Ensemble {
    /// C and C′ are single Haar unitaries on all wires.
    Dense,
    Brickwall { depth: usize },
}

fn draw_factor(n: usize, ensemble: Ensemble, rng: &mut SimRng) -> Circuit {
    match ensemble {
        Ensemble::Dense => dense_haar_circuit(linalg::haar_unitary(1 << n, rng)),
        Ensemble::Brickwall { depth } => random_brickwall_with(n, depth, rng),
    }
}

/// P = C′†C as a circuit: run C, then C′†.
pub fn compose_pair(c_: &Circuit, c_prime: &Circuit) -> Result<Circuit> {
    c_.then(&c_prime.dagger())
}

fn check_peak(n: usize, x_star: &BitString) -> Result<()> {
    if x_star.len() != n {
        return Err(Error::structural(format!("peak string has {} bits, expected {n}", x_star.len())));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::domain(format!("peakedness target {delta} outside [0, 1]")));
    }
    Ok(())
}

/// Rejection sampling per the postselection construction, dense Haar factors.
pub fn postselect_generate(n: usize, delta: f64, x_star: &BitString, max_trials: u64, seed: u64) -> Result<PeakedInstance> {
    postselect_generate_with(n, delta, x_star, max_trials, seed, Ensemble::Dense)
}

/// C is drawn once from stream 0; trial t draws C′ from stream t + 1.
pub fn postselect_generate_with(
    n: usize,
    delta: f64,
    x_star: &BitString,
    max_trials: u64,
    seed: u64,
    ensemble: Ensemble,
) -> Result<PeakedInstance> {
    check_peak(n, x_star)?;
    check_delta(delta)?;
    if max_trials == 0 {
        return Err(Error::domain("max_trials must be at least 1"));
    }
    let c_ = draw_factor(n, ensemble, &mut child_rng(seed, 0));
    let c0 = sim::run_zero(&c_)?;
    let mut best = 0.0f64;
    for t in 0..max_trials {
        let c_prime = draw_factor(n, ensemble, &mut child_rng(seed, t + 1));
        let col = sim::run(&c_prime, x_star)?;
        let p = col.inner(&c0).norm_sqr();
        best = best.max(p);
        if p >= delta {
            let circuit = compose_pair(&c_, &c_prime)?;
            let peakedness = sim::peak_probability(&circuit, x_star)?;
            return Ok(PeakedInstance {
                circuit,
                peak_string: *x_star,
                peakedness,
                method: Method::Postselect,
                seed,
                factors: Some(Factors { c: c_, c_prime }),
                input_string: None,
                predicted: false,
                trials: Some(t + 1),
                sampler: Some("rejection".into()),
            });
        }
    }
    Err(Error::Exhausted { trials: max_trials, best })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub trials: u64,
    pub accepted: u64,
    pub rate: f64,
    /// (1 − δ)^{d − 1}.
    pub expected_haar: f64,
    /// Binomial standard deviation of the rate at the expected value.
    pub sigma: f64,
}

/// Empirical acceptance rate of the postselection rule: each trial draws fresh (C, C′).
pub fn postselect_acceptance(n: usize, delta: f64, x_star: &BitString, trials: u64, seed: u64, ensemble: Ensemble) -> Result<AcceptanceStats> {
    check_peak(n, x_star)?;
    check_delta(delta)?;
    let accepted: u64 = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<u64> {
            let mut rng = child_rng(seed, t);
            let c_ = draw_factor(n, ensemble, &mut rng);
            let c_prime = draw_factor(n, ensemble, &mut rng);
            let p = sim::run(&c_prime, x_star)?.inner(&sim::run_zero(&c_)?).norm_sqr();
            Ok((p >= delta) as u64)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    let d = (1u64 << n) as f64;
    let expected = (1.0 - delta).powf(d - 1.0);
    Ok(AcceptanceStats {
        trials,
        accepted,
        rate: accepted as f64 / trials as f64,
        expected_haar: expected,
        sigma: (expected * (1.0 - expected) / trials as f64).sqrt(),
    })
}

/// Exact draw from the dense-Haar postselection ensemble conditioned on peakedness ≥ δ.
///
/// With c = C|0ⁿ⟩ and c′ = C′|x⋆⟩ the overlap X = |⟨c′|c⟩|² is Beta(1, d − 1), so conditioned
/// on X ≥ δ we have 1 − X = (1 − δ) U^{1/(d−1)}. The remaining columns of C′ are Haar on the
/// orthogonal complement of c′. This reaches targets where rejection would never accept.
pub fn conditional_generate(n: usize, delta: f64, x_star: &BitString, seed: u64) -> Result<PeakedInstance> {
    check_peak(n, x_star)?;
    check_delta(delta)?;
    if n == 0 {
        return Err(Error::domain("conditional sampler needs n ≥ 1"));
    }
    let d = 1usize << n;
    let mut rng = rng_from_seed(seed);
    let cu = linalg::haar_unitary(d, &mut rng);
    let c0: CVector = cu.column(0).into_owned();
    let u: f64 = rng.random::<f64>();
    let x = 1.0 - (1.0 - delta) * u.powf(1.0 / (d as f64 - 1.0));
    let phi: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    // w uniform on the unit sphere of c0's complement.
    let mut w = linalg::haar_state(d, &mut rng);
    let proj = c0.dotc(&w);
    w -= &c0 * proj;
    let wn = w.norm();
    w /= c(wn, 0.0);
    let col = &c0 * (C64::from_polar(x.sqrt(), phi)) + &w * c((1.0 - x).max(0.0).sqrt(), 0.0);
    let completed = linalg::complete_unitary(std::slice::from_ref(&col), d, &mut rng);
    // Move the fixed column to position x⋆.
    let xs = x_star.index() as usize;
    let mut cp = completed.clone();
    if xs != 0 {
        cp.set_column(xs, &completed.column(0));
        cp.set_column(0, &completed.column(xs));
    }
    let c_ = dense_haar_circuit(cu);
    let c_prime = dense_haar_circuit(cp);
    let circuit = compose_pair(&c_, &c_prime)?;
    let peakedness = sim::peak_probability(&circuit, x_star)?;
    Ok(PeakedInstance {
        circuit,
        peak_string: *x_star,
        peakedness,
        method: Method::Postselect,
        seed,
        factors: Some(Factors { c: c_, c_prime }),
        input_string: None,
        predicted: false,
        trials: None,
        sampler: Some("exact-conditional".into()),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HsOverlap {
    /// |Tr(C†C′)|².
    pub trace_sq: f64,
    /// |Tr(C†C′)/d|².
    pub hs_norm_sq: f64,
}

pub fn hs_overlap(c_: &Circuit, c_prime: &Circuit) -> Result<HsOverlap> {
    hs_overlap_capped(c_, c_prime, DEFAULT_N_MAX_DENSE)
}

pub fn hs_overlap_capped(c_: &Circuit, c_prime: &Circuit, n_max_dense: usize) -> Result<HsOverlap> {
    let t = sim::trace_overlap(c_, c_prime, n_max_dense)?;
    let d = (1u64 << c_.n) as f64;
    let trace_sq = t.norm_sqr();
    Ok(HsOverlap { trace_sq, hs_norm_sq: trace_sq / (d * d) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapStats {
    pub n: usize,
    pub instance_count: usize,
    pub mean_trace_sq: f64,
    pub mean_hs_norm_sq: f64,
    /// Standard error of mean_trace_sq.
    pub std_err: f64,
}

impl OverlapStats {
    pub fn from_trace_sq(n: usize, values: &[f64]) -> Self {
        let (mean, se) = mean_and_se(values);
        let d = (1u64 << n) as f64;
        OverlapStats { n, instance_count: values.len(), mean_trace_sq: mean, mean_hs_norm_sq: mean / (d * d), std_err: se }
    }
}

/// Sample mean and its standard error (sample standard deviation / √N).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockExtract {
    pub peak_amp: C64,
    /// (d − 1) × (d − 1) block on the complement of the aligned peak direction.
    pub v: CMatrix,
    pub unitarity_defect: f64,
}

/// Align |0ⁿ⟩ to column 0 and |x⋆⟩ to row 0 with an X-layer on the row side, then split off V.
pub fn block_extract(p: &Circuit, x_star: &BitString) -> Result<BlockExtract> {
    check_peak(p.n, x_star)?;
    let u = sim::full_unitary(p)?;
    let d = u.nrows();
    let xs = x_star.index() as usize;
    let aligned = CMatrix::from_fn(d, d, |r, col| u[(r ^ xs, col)]);
    let v = aligned.view((1, 1), (d - 1, d - 1)).into_owned();
    let unitarity_defect = if d > 1 { linalg::unitarity_defect(&v) } else { 0.0 };
    Ok(BlockExtract { peak_amp: aligned[(0, 0)], v, unitarity_defect })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub estimate: f64,
    pub std_err: f64,
    /// m!(d − 1)!/(d + m − 1)!.
    pub reference: f64,
}

/// E|⟨φ|ψ⟩|^{2m} for a Haar state ψ and a fixed φ, in closed form.
pub fn haar_moment_reference(dim: usize, m: u32) -> f64 {
    // m!(d−1)!/(d+m−1)! = m! / ((d)(d+1)⋯(d+m−1)).
    let mut r = 1.0;
    for j in 0..m {
        r *= (j + 1) as f64 / (dim as f64 + j as f64);
    }
    r
}

pub fn haar_state_moment(dim: usize, m: u32, trials: u64, seed: u64) -> Result<MomentEstimate> {
    if !(1..=3).contains(&m) {
        return Err(Error::domain(format!("moment order {m} not in 1..=3")));
    }
    if dim == 0 || trials == 0 {
        return Err(Error::domain("dim and trials must be positive"));
    }
    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = child_rng(seed, t);
            let phi = linalg::haar_state(dim, &mut rng);
            let psi = linalg::haar_state(dim, &mut rng);
            phi.dotc(&psi).norm_sqr().powi(m as i32)
        })
        .collect();
    let (estimate, std_err) = mean_and_se(&values);
    Ok(MomentEstimate { estimate, std_err, reference: haar_moment_reference(dim, m) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateCorrelation {
    /// ρ_m = |Tr(C′_m† C_m)|² / D_m² for each gate pair.
    pub per_gate_overlaps: Vec<f64>,
    pub epsilon: f64,
    /// min_φ ‖e^{iφ} P − I‖_F for P = C′†C.
    pub frobenius_dist: f64,
    /// ‖P − I‖_F without phase alignment.
    pub frobenius_dist_raw: f64,
    /// M √(d ε).
    pub bound: f64,
    /// M √(2 d ε / (1 + √(1 − ε))), the bound the triangle-inequality telescope gives.
    pub telescoped_bound: f64,
    pub holds: bool,
    pub telescoped_holds: bool,
}

/// Float slack for the zero-tolerance inequality checks.
pub const THEOREM_SLACK: f64 = 1e-9;

pub fn gate_correlation_check(c_: &Circuit, c_prime: &Circuit) -> Result<GateCorrelation> {
    if c_.n != c_prime.n || c_.gates.len() != c_prime.gates.len() {
        return Err(Error::ArchitectureMismatch("circuits differ in wire or gate count".into()));
    }
    for (i, (a, b)) in c_.gates.iter().zip(&c_prime.gates).enumerate() {
        if a.wires != b.wires {
            return Err(Error::ArchitectureMismatch(format!("gate {i} acts on {:?} vs {:?}", a.wires, b.wires)));
        }
    }
    let per_gate_overlaps: Vec<f64> = c_
        .gates
        .iter()
        .zip(&c_prime.gates)
        .map(|(a, b)| {
            let dm = a.dim() as f64;
            linalg::trace_inner(&b.matrix(), &a.matrix()).norm_sqr() / (dm * dm)
        })
        .collect();
    let min_rho = per_gate_overlaps.iter().copied().fold(1.0f64, f64::min);
    let epsilon = (1.0 - min_rho).max(0.0);
    let p = sim::full_unitary(&compose_pair(c_, c_prime)?)?;
    let d = p.nrows() as f64;
    let tr = linalg::trace(&p);
    let frobenius_dist = (2.0 * d - 2.0 * tr.norm()).max(0.0).sqrt();
    let frobenius_dist_raw = (2.0 * d - 2.0 * tr.re).max(0.0).sqrt();
    let m = c_.gates.len() as f64;
    let bound = m * (d * epsilon).sqrt();
    let telescoped_bound = m * (2.0 * d * epsilon / (1.0 + (1.0 - epsilon).sqrt())).sqrt();
    Ok(GateCorrelation {
        per_gate_overlaps,
        epsilon,
        frobenius_dist,
        frobenius_dist_raw,
        bound,
        telescoped_bound,
        holds: frobenius_dist <= bound + THEOREM_SLACK,
        telescoped_holds: frobenius_dist <= telescoped_bound + THEOREM_SLACK,
    })
}

/// ‖P − I‖²_F for P = C′†C; its conditional-Haar expectation is 2(d − 1).
pub fn frobenius_distance_sq(c_: &Circuit, c_prime: &Circuit) -> Result<f64> {
    let tr = sim::trace_overlap(c_prime, c_, DEFAULT_N_MAX_DENSE)?;
    let d = (1u64 << c_.n) as f64;
    Ok(2.0 * d - 2.0 * tr.re)
}

/// Fraction of outcomes x with p_x ≥ 1/2ⁿ, averaged over random brickwall circuits.
pub fn anticoncentration_check(n: usize, depth: usize, circuit_trials: u64, seed: u64) -> Result<f64> {
    if n > 10 {
        return Err(Error::Capability { what: "anticoncentration check", n, limit: 10 });
    }
    if circuit_trials == 0 {
        return Err(Error::domain("circuit_trials must be positive"));
    }
    let d = 1usize << n;
    let threshold = 1.0 / d as f64;
    let fractions: Vec<f64> = (0..circuit_trials)
        .into_par_iter()
        .map(|t| -> Result<f64> {
            let c_ = random_brickwall_with(n, depth, &mut child_rng(seed, t));
            let probs = sim::run_zero(&c_)?.probabilities();
            // Relative slack so the identity case counts the one heavy outcome exactly.
            Ok(probs.iter().filter(|&&p| p >= threshold * (1.0 - 1e-12)).count() as f64 / d as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(fractions.iter().sum::<f64>() / fractions.len() as f64)
}

/// Porter–Thomas reference Pr[p_x ≥ 1/d] = (1 − 1/d)^{d − 1} for a Haar state.
pub fn haar_anticoncentration_reference(d: usize) -> f64 {
    (1.0 - 1.0 / d as f64).powf(d as f64 - 1.0)
}

/// The same fraction measured on directly sampled Haar states.
pub fn haar_state_anticoncentration(dim: usize, trials: u64, seed: u64) -> f64 {
    let threshold = 1.0 / dim as f64;
    let counts: Vec<usize> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = linalg::haar_state(dim, &mut child_rng(seed, t));
            s.iter().filter(|a| a.norm_sqr() >= threshold).count()
        })
        .collect();
    counts.iter().sum::<usize>() as f64 / (dim as f64 * trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zeros(n: usize) -> BitString {
        BitString::zeros(n)
    }

    #[test]
    fn haar_dim_one_is_a_phase() {
        let u = haar_unitary(1, 3);
        assert!((u[(0, 0)].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn brickwall_examples() {
        let c2 = random_brickwall(2, 1, 0);
        assert_eq!(c2.gates.len(), 1);
        assert_eq!(c2.gates[0].wires, vec![0, 1]);
        let c4 = random_brickwall(4, 2, 0);
        let wires: Vec<_> = c4.gates.iter().map(|g| g.wires.clone()).collect();
        assert_eq!(wires, vec![vec![0, 1], vec![2, 3], vec![1, 2]]);
        let c6 = random_brickwall(6, 6, 0);
        c6.validate().unwrap();
        assert_eq!(c6.gates.len(), crate::circuit::brickwall_gate_count(6, 6));
    }

    #[test]
    fn zero_target_accepts_immediately() {
        let inst = postselect_generate(2, 0.0, &zeros(2), 1, 9).unwrap();
        assert_eq!(inst.trials, Some(1));
        assert!(inst.verify(1e-9).unwrap());
    }

    #[test]
    fn postselected_instance_meets_target() {
        let x: BitString = "10".parse().unwrap();
        let inst = postselect_generate(2, 0.3, &x, 10_000, 4).unwrap();
        assert!(inst.peakedness >= 0.3);
        assert!(inst.verify(1e-9).unwrap());
        let back = PeakedInstance::from_json(&inst.to_json().unwrap()).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn exhaustion_is_reported() {
        let r = postselect_generate(3, 0.999, &zeros(3), 5, 1);
        assert!(matches!(r, Err(Error::Exhausted { trials: 5, .. })));
    }

    #[test]
    fn conditional_sampler_hits_target() {
        let x: BitString = "011".parse().unwrap();
        for s in 0..20 {
            let inst = conditional_generate(3, 0.9995, &x, s).unwrap();
            assert!(inst.peakedness >= 0.9995 - 1e-12);
            let f = inst.factors.as_ref().unwrap();
            assert!(linalg::unitarity_defect(&sim::full_unitary(&f.c_prime).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn hs_overlap_of_identical_pair() {
        let c_ = random_brickwall(3, 3, 1);
        let o = hs_overlap(&c_, &c_).unwrap();
        assert!((o.trace_sq - 64.0).abs() < 1e-9);
        assert!((o.hs_norm_sq - 1.0).abs() < 1e-12);
    }

    #[test]
    fn block_extract_identity_and_peaked() {
        let b = block_extract(&Circuit::new(3), &zeros(3)).unwrap();
        assert!((b.peak_amp - linalg::ONE).norm() < 1e-15);
        assert!(linalg::max_abs_diff(&b.v, &linalg::identity(7)) < 1e-15);
        assert_eq!(b.unitarity_defect, 0.0);

        let x: BitString = "101".parse().unwrap();
        let inst = conditional_generate(3, 0.9, &x, 17).unwrap();
        let b = block_extract(&inst.circuit, &x).unwrap();
        assert!((b.peak_amp.norm_sqr() - inst.peakedness).abs() < 1e-12);
        assert!(b.unitarity_defect <= 1.0 - inst.peakedness + 1e-12);
    }

    #[test]
    fn moment_reference_values() {
        assert!((haar_moment_reference(2, 1) - 0.5).abs() < 1e-15);
        assert!((haar_moment_reference(2, 2) - 1.0 / 3.0).abs() < 1e-15);
        assert!((haar_moment_reference(8, 3) - 1.0 / 120.0).abs() < 1e-15);
    }

    #[test]
    fn gate_correlation_identical_pair() {
        let c_ = random_brickwall(4, 3, 2);
        let g = gate_correlation_check(&c_, &c_).unwrap();
        assert!(g.per_gate_overlaps.iter().all(|r| (r - 1.0).abs() < 1e-12));
        assert!(g.epsilon < 1e-12);
        assert!(g.frobenius_dist < 1e-6);
        assert!(g.holds);
        let other = random_brickwall(4, 2, 2);
        assert!(matches!(gate_correlation_check(&c_, &other), Err(Error::ArchitectureMismatch(_))));
    }

    #[test]
    fn anticoncentration_of_identity() {
        let f = anticoncentration_check(4, 0, 3, 0).unwrap();
        assert!((f - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn instance_json_is_flat() {
        let inst = postselect_generate(2, 0.0, &zeros(2), 1, 0).unwrap();
        let v: serde_json::Value = serde_json::from_str(&inst.to_json().unwrap()).unwrap();
        assert_eq!(v["n"], 2);
        assert_eq!(v["peak_string"], "00");
        assert_eq!(v["method"], "postselect");
        assert!(v["factors"]["c"]["gates"].is_array());
    }
}

//! Variational search for C′ such that C′†C is peaked on x⋆.
//!
//! The ansatz is a brickwall of SU(4) cells exp(−i Σ_k θ_k P_k) over the 15 non-identity
//! two-qubit Paulis. The objective p₀(θ) = |⟨x⋆|C′(θ)†C|0ⁿ⟩|² is differentiated with one
//! forward and one reverse statevector sweep.

use std::time::Instant;

use nalgebra::Matrix4;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::circuit::{brickwall_layers, Architecture, Circuit, Gate, GateKind};
use crate::ensembles::{compose_pair, Factors, Method, PeakedInstance};
use crate::error::{Error, Result};
use crate::linalg::{two_qubit_paulis, C64, ZERO};
use crate::rng::child_rng;
use crate::sim::{self, apply_2q_array, insert_zero, StateVector};

pub const PARAMS_PER_GATE: usize = 15;

type M4 = Matrix4<C64>;

/// Nonzero entries (row, col, value) of each basis Pauli; every row has exactly one.
fn pauli_entries() -> &'static [[(usize, usize, C64); 4]; 15] {
    static E: std::sync::OnceLock<[[(usize, usize, C64); 4]; 15]> = std::sync::OnceLock::new();
    E.get_or_init(|| {
        std::array::from_fn(|k| {
            let p = &two_qubit_paulis()[k];
            std::array::from_fn(|r| {
                let c = (0..4).find(|&c| p[(r, c)].norm() > 0.5).expect("Pauli row has an entry");
                (r, c, p[(r, c)])
            })
        })
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamCircuit {
    pub n: usize,
    pub depth: usize,
    /// 15 coefficients per gate, gates in brickwall order.
    pub params: Vec<f64>,
}

impl ParamCircuit {
    pub fn zeros(n: usize, depth: usize) -> Self {
        let m = Self::pairs(n, depth).len();
        ParamCircuit { n, depth, params: vec![0.0; m * PARAMS_PER_GATE] }
    }

    pub fn pairs(n: usize, depth: usize) -> Vec<[usize; 2]> {
        brickwall_layers(n, depth).into_iter().flatten().collect()
    }

    pub fn gate_count(&self) -> usize {
        self.params.len() / PARAMS_PER_GATE
    }

    pub fn random<R: Rng + ?Sized>(n: usize, depth: usize, scale: f64, rng: &mut R) -> Self {
        let mut pc = Self::zeros(n, depth);
        if scale > 0.0 {
            let normal = Normal::new(0.0, scale).expect("positive scale");
            for p in pc.params.iter_mut() {
                *p = normal.sample(rng);
            }
        }
        pc
    }

    pub fn check(&self) -> Result<()> {
        let want = Self::pairs(self.n, self.depth).len() * PARAMS_PER_GATE;
        if self.params.len() != want {
            return Err(Error::structural(format!(
                "{} parameters for a depth-{} brickwall on {} wires, expected {want}",
                self.params.len(),
                self.depth,
                self.n
            )));
        }
        Ok(())
    }

    /// The ansatz as a circuit of parameterized gates.
    pub fn to_circuit(&self) -> Circuit {
        let gates = Self::pairs(self.n, self.depth)
            .into_iter()
            .zip(self.params.chunks(PARAMS_PER_GATE))
            .map(|(p, th)| Gate { wires: p.to_vec(), kind: GateKind::Param(th.to_vec()) })
            .collect();
        Circuit { n: self.n, gates, architecture: Some(Architecture::Brickwall { depth: self.depth }) }
    }
}

/// Eigendecomposition of one cell's generator and the resulting gate.
struct Cell {
    w: M4,
    lam: [f64; 4],
    g: [[C64; 4]; 4],
    gdag: [[C64; 4]; 4],
}

fn to_array(m: &M4) -> [[C64; 4]; 4] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

fn cell(theta: &[f64]) -> Cell {
    let mut h = M4::zeros();
    for (t, entries) in theta.iter().zip(pauli_entries().iter()) {
        if *t != 0.0 {
            for &(r, c, v) in entries {
                h[(r, c)] += v * *t;
            }
        }
    }
    let h = (h + h.adjoint()) * C64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let w = eig.eigenvectors;
    let lam: [f64; 4] = std::array::from_fn(|i| eig.eigenvalues[i]);
    let mut ws = w;
    for j in 0..4 {
        let ph = C64::from_polar(1.0, -lam[j]);
        for i in 0..4 {
            ws[(i, j)] *= ph;
        }
    }
    let g = ws * w.adjoint();
    Cell { w, lam, g: to_array(&g), gdag: to_array(&g.adjoint()) }
}

fn positions(n: usize, pair: [usize; 2]) -> (usize, usize) {
    (n - 1 - pair[0], n - 1 - pair[1])
}

/// T_ab = Σ_r conj(λ_{a r}) ψ_{b r} over the rest index r.
fn reduced_overlap(lam: &[C64], psi: &[C64], p0: usize, p1: usize) -> [[C64; 4]; 4] {
    let offs = [0, 1 << p1, 1 << p0, (1 << p0) | (1 << p1)];
    let (lo, hi) = if p0 < p1 { (p0, p1) } else { (p1, p0) };
    let mut t = [[ZERO; 4]; 4];
    for base in 0..lam.len() >> 2 {
        let i = insert_zero(insert_zero(base, lo), hi);
        let l = [lam[i].conj(), lam[i + offs[1]].conj(), lam[i + offs[2]].conj(), lam[i + offs[3]].conj()];
        let s = [psi[i], psi[i + offs[1]], psi[i + offs[2]], psi[i + offs[3]]];
        for a in 0..4 {
            for b in 0..4 {
                t[a][b] += l[a] * s[b];
            }
        }
    }
    t
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-6 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// ∂/∂θ_k ⟨λ|G(θ)|ψ⟩ for all 15 k, given T from λ and the pre-gate ψ.
fn cell_gradient(c: &Cell, t: &[[C64; 4]; 4], out: &mut [C64]) {
    // Y = W† Tᵀ W, Z = Φ ∘ Yᵀ, Q = W Zᵀ W†, ∂_k = Tr(P_k Q).
    let tt = M4::from_fn(|i, j| t[j][i]);
    let y = c.w.adjoint() * tt * c.w;
    let z = M4::from_fn(|a, b| {
        let phi = C64::from_polar(sinc((c.lam[a] - c.lam[b]) / 2.0), -(c.lam[a] + c.lam[b]) / 2.0) * C64::new(0.0, -1.0);
        phi * y[(b, a)]
    });
    let q = c.w * z.transpose() * c.w.adjoint();
    for (k, entries) in pauli_entries().iter().enumerate() {
        out[k] = entries.iter().map(|&(r, col, v)| v * q[(col, r)]).sum();
    }
}

/// C|0ⁿ⟩, the fixed state the objective compares against.
pub fn target_state(target: &Circuit) -> Result<StateVector> {
    sim::run_zero(target)
}

/// p₀ = |⟨x⋆|C′(θ)†C|0ⁿ⟩|² by two forward passes.
pub fn objective(target: &Circuit, theta: &ParamCircuit, x_star: &BitString) -> Result<f64> {
    theta.check()?;
    let phi = target_state(target)?;
    let psi = sim::run(&theta.to_circuit(), x_star)?;
    Ok(phi.inner(&psi).norm_sqr())
}

/// (p₀, ∇p₀) with ∇p₀ = 2 Re(b̄ ∇b), b = ⟨C0ⁿ|C′(θ)|x⋆⟩ = ā.
pub fn value_and_gradient(phi: &StateVector, theta: &ParamCircuit, x_star: &BitString) -> Result<(f64, Vec<f64>)> {
    theta.check()?;
    let n = theta.n;
    if phi.n != n || x_star.len() != n {
        return Err(Error::structural("target state, ansatz and peak string disagree on n"));
    }
    let pairs = ParamCircuit::pairs(n, theta.depth);
    let cells: Vec<Cell> = theta.params.chunks(PARAMS_PER_GATE).map(cell).collect();
    let mut psi = StateVector::basis(x_star).amps;
    for (p, c) in pairs.iter().zip(&cells) {
        let (p0, p1) = positions(n, *p);
        apply_2q_array(&mut psi, p0, p1, &c.g);
    }
    let b: C64 = phi.amps.iter().zip(&psi).map(|(l, s)| l.conj() * s).sum();
    let mut lam = phi.amps.clone();
    let mut grad = vec![0.0; theta.params.len()];
    let mut db = [ZERO; PARAMS_PER_GATE];
    for (k, (p, c)) in pairs.iter().zip(&cells).enumerate().rev() {
        let (p0, p1) = positions(n, *p);
        apply_2q_array(&mut psi, p0, p1, &c.gdag);
        let t = reduced_overlap(&lam, &psi, p0, p1);
        cell_gradient(c, &t, &mut db);
        for (j, d) in db.iter().enumerate() {
            grad[k * PARAMS_PER_GATE + j] = 2.0 * (b.conj() * d).re;
        }
        apply_2q_array(&mut lam, p0, p1, &c.gdag);
    }
    Ok((b.norm_sqr(), grad))
}

pub fn gradient(target: &Circuit, theta: &ParamCircuit, x_star: &BitString) -> Result<Vec<f64>> {
    Ok(value_and_gradient(&target_state(target)?, theta, x_star)?.1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { lr: 0.05, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }
}

/// One Adam descent step on a loss whose gradient is `grad`.
pub fn adam_step(theta: &[f64], grad: &[f64], state: &AdamState, hyper: &AdamHyper) -> (Vec<f64>, AdamState) {
    assert_eq!(theta.len(), grad.len());
    let mut next = if state.m.len() == theta.len() { state.clone() } else { AdamState::new(theta.len()) };
    next.t += 1;
    let bc1 = 1.0 - hyper.beta1.powi(next.t as i32);
    let bc2 = 1.0 - hyper.beta2.powi(next.t as i32);
    let mut out = theta.to_vec();
    for i in 0..theta.len() {
        next.m[i] = hyper.beta1 * next.m[i] + (1.0 - hyper.beta1) * grad[i];
        next.v[i] = hyper.beta2 * next.v[i] + (1.0 - hyper.beta2) * grad[i] * grad[i];
        let mh = next.m[i] / bc1;
        let vh = next.v[i] / bc2;
        out[i] -= hyper.lr * mh / (vh.sqrt() + hyper.eps);
    }
    (out, next)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Ansatz depth; `None` uses the target's brickwall depth.
    pub depth: Option<usize>,
    pub seeds: usize,
    pub iters: usize,
    pub hyper: AdamHyper,
    /// Standard deviation of the normal initialization.
    pub init_scale: f64,
    /// Skip the remaining seeds once one reaches the target.
    pub stop_on_success: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { depth: None, seeds: 5, iters: 2000, hyper: AdamHyper::default(), init_scale: 0.2, stop_on_success: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedTrace {
    pub seed_index: usize,
    pub seed: u64,
    /// Adam steps taken.
    pub iterations: usize,
    /// p₀ at every evaluated point, starting with the initialization.
    pub history: Vec<f64>,
    pub best: f64,
    pub reached_target: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub best_params: ParamCircuit,
    pub best_peakedness: f64,
    pub best_seed_index: usize,
    pub per_seed_traces: Vec<SeedTrace>,
    /// Seconds.
    pub wall_time: f64,
    pub below_target: bool,
    pub delta_target: f64,
    pub config: SynthConfig,
}

impl SynthesisReport {
    /// Rows (seed, iter, p0).
    pub fn history_csv(&self) -> String {
        let mut s = String::from("seed,iter,p0\n");
        for tr in &self.per_seed_traces {
            for (i, p) in tr.history.iter().enumerate() {
                s.push_str(&format!("{},{},{}\n", tr.seed_index, i, p));
            }
        }
        s
    }
}

fn run_seed(
    phi: &StateVector,
    n: usize,
    depth: usize,
    x_star: &BitString,
    delta: f64,
    cfg: &SynthConfig,
    seed_index: usize,
    seed: u64,
) -> Result<(SeedTrace, ParamCircuit)> {
    let mut rng = child_rng(seed, seed_index as u64);
    let mut theta = ParamCircuit::random(n, depth, cfg.init_scale, &mut rng);
    let mut state = AdamState::new(theta.params.len());
    let mut history = Vec::with_capacity(cfg.iters + 1);
    let mut best = f64::NEG_INFINITY;
    let mut best_params = theta.clone();
    let mut iterations = 0;
    let mut reached = false;
    loop {
        let (p0, g) = value_and_gradient(phi, &theta, x_star)?;
        history.push(p0);
        if p0 > best {
            best = p0;
            best_params = theta.clone();
        }
        if p0 >= delta {
            reached = true;
            break;
        }
        if iterations == cfg.iters {
            break;
        }
        let neg: Vec<f64> = g.iter().map(|x| -x).collect();
        let (next, st) = adam_step(&theta.params, &neg, &state, &cfg.hyper);
        theta.params = next;
        state = st;
        iterations += 1;
    }
    let trace = SeedTrace { seed_index, seed: crate::rng::derive_seed(seed, seed_index as u64), iterations, history, best, reached_target: reached };
    Ok((trace, best_params))
}

/// Multi-start Adam search. Returns the best instance over all seeds and every trace.
pub fn multistart_search(
    target: &Circuit,
    x_star: &BitString,
    delta_target: f64,
    cfg: &SynthConfig,
    seed: u64,
) -> Result<(PeakedInstance, SynthesisReport)> {
    if cfg.seeds == 0 {
        return Err(Error::domain("at least one seed is required"));
    }
    let n = target.n;
    if x_star.len() != n {
        return Err(Error::structural("peak string length differs from the target's wire count"));
    }
    let depth = match (cfg.depth, target.architecture) {
        (Some(d), _) => d,
        (None, Some(Architecture::Brickwall { depth })) => depth,
        (None, None) => return Err(Error::ArchitectureMismatch("target has no brickwall depth; set one explicitly".into())),
    };
    let start = Instant::now();
    let phi = target_state(target)?;
    let results: Vec<(SeedTrace, ParamCircuit)> = if cfg.stop_on_success {
        let mut out = Vec::new();
        for s in 0..cfg.seeds {
            let r = run_seed(&phi, n, depth, x_star, delta_target, cfg, s, seed)?;
            let done = r.0.reached_target;
            out.push(r);
            if done {
                break;
            }
        }
        out
    } else {
        (0..cfg.seeds)
            .into_par_iter()
            .map(|s| run_seed(&phi, n, depth, x_star, delta_target, cfg, s, seed))
            .collect::<Result<Vec<_>>>()?
    };
    // Lowest seed index wins ties.
    let mut best_idx = 0;
    for (i, (tr, _)) in results.iter().enumerate() {
        if tr.best > results[best_idx].0.best {
            best_idx = i;
        }
    }
    let best_params = results[best_idx].1.clone();
    let best_peakedness = results[best_idx].0.best;
    let c_prime = best_params.to_circuit().materialized();
    let circuit = compose_pair(target, &c_prime)?;
    let peakedness = sim::amplitude(&circuit, &BitString::zeros(n), x_star)?.norm_sqr();
    let instance = PeakedInstance {
        circuit,
        peak_string: *x_star,
        peakedness,
        method: Method::Variational,
        seed,
        factors: Some(Factors { c: target.clone(), c_prime }),
        input_string: None,
        predicted: false,
        trials: None,
        sampler: None,
    };
    let report = SynthesisReport {
        best_params,
        best_peakedness,
        best_seed_index: results[best_idx].0.seed_index,
        per_seed_traces: results.into_iter().map(|r| r.0).collect(),
        wall_time: start.elapsed().as_secs_f64(),
        below_target: best_peakedness < delta_target,
        delta_target,
        config: cfg.clone(),
    };
    Ok((instance, report))
}

/// One synthesized instance of the Hilbert–Schmidt overlap batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HsRow {
    pub n: usize,
    pub instance: u64,
    pub seed: u64,
    pub trace_sq: f64,
    pub hs_norm_sq: f64,
    pub peakedness: f64,
    pub iterations: usize,
}

/// Synthesize `instances` peaked circuits on random depth-`depth` brickwall targets (peak 0ⁿ)
/// and record |Tr(C†C′)|² for each. Instance i uses root seed derive_seed(seed, i).
pub fn hs_batch(n: usize, depth: usize, instances: u64, delta_target: f64, cfg: &SynthConfig, seed: u64) -> Result<Vec<HsRow>> {
    let x = BitString::zeros(n);
    (0..instances)
        .into_par_iter()
        .map(|i| {
            let s = crate::rng::derive_seed(seed, i);
            let target = crate::ensembles::random_brickwall(n, depth, crate::rng::derive_seed(s, 0));
            let (inst, rep) = multistart_search(&target, &x, delta_target, cfg, crate::rng::derive_seed(s, 1))?;
            let f = inst.factors.as_ref().expect("variational instances carry factors");
            let o = crate::ensembles::hs_overlap(&f.c, &f.c_prime)?;
            Ok(HsRow {
                n,
                instance: i,
                seed: s,
                trace_sq: o.trace_sq,
                hs_norm_sq: o.hs_norm_sq,
                peakedness: inst.peakedness,
                iterations: rep.per_seed_traces.iter().map(|t| t.iterations).sum(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::random_brickwall;
    use crate::rng::rng_from_seed;

    fn fd_grad(target: &Circuit, theta: &ParamCircuit, x: &BitString, idx: usize, h: f64) -> f64 {
        let mut a = theta.clone();
        let mut b = theta.clone();
        a.params[idx] += h;
        b.params[idx] -= h;
        (objective(target, &a, x).unwrap() - objective(target, &b, x).unwrap()) / (2.0 * h)
    }

    #[test]
    fn identity_objective() {
        let x = BitString::zeros(3);
        assert!((objective(&Circuit::new(3), &ParamCircuit::zeros(3, 2), &x).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn objective_matches_composed_amplitude() {
        let mut rng = rng_from_seed(3);
        let target = random_brickwall(3, 3, 7);
        let theta = ParamCircuit::random(3, 3, 0.7, &mut rng);
        let x: BitString = "110".parse().unwrap();
        let p = compose_pair(&target, &theta.to_circuit()).unwrap();
        let want = sim::peak_probability(&p, &x).unwrap();
        let got = objective(&target, &theta, &x).unwrap();
        assert!((got - want).abs() < 1e-12);
        let phi = target_state(&target).unwrap();
        let (v, _) = value_and_gradient(&phi, &theta, &x).unwrap();
        assert!((v - want).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences_single_gate() {
        let mut rng = rng_from_seed(5);
        let target = random_brickwall(2, 1, 1);
        let theta = ParamCircuit::random(2, 1, 0.8, &mut rng);
        let x = BitString::zeros(2);
        let g = gradient(&target, &theta, &x).unwrap();
        for i in 0..15 {
            let fd = fd_grad(&target, &theta, &x, i, 1e-5);
            assert!((g[i] - fd).abs() <= 1e-6 * fd.abs().max(1e-3), "coord {i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn gradient_vanishes_at_exact_optimum() {
        let mut rng = rng_from_seed(8);
        let theta = ParamCircuit::random(3, 2, 0.5, &mut rng);
        let target = theta.to_circuit().materialized();
        let x = BitString::zeros(3);
        let phi = target_state(&target).unwrap();
        let (p, g) = value_and_gradient(&phi, &theta, &x).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
        assert!(g.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn adam_closed_forms() {
        let h = AdamHyper::default();
        let (th, _) = adam_step(&[1.0, 2.0], &[0.0, 0.0], &AdamState::new(2), &h);
        assert_eq!(th, vec![1.0, 2.0]);
        // First step: m̂ = g, v̂ = g², update lr·g/(|g| + ε).
        let (th, st) = adam_step(&[0.0], &[0.3], &AdamState::new(1), &h);
        assert!((th[0] + h.lr * 0.3 / (0.3 + h.eps)).abs() < 1e-15);
        // Second step with the same gradient: bias-corrected moments are again g and g².
        let (th2, st2) = adam_step(&th, &[0.3], &st, &h);
        let m = 0.9 * (0.1 * 0.3) + 0.1 * 0.3;
        let v = 0.999 * (0.001 * 0.09) + 0.001 * 0.09;
        let step = h.lr * (m / (1.0 - 0.81)) / ((v / (1.0 - 0.999f64 * 0.999)).sqrt() + h.eps);
        assert!((th2[0] - (th[0] - step)).abs() < 1e-15);
        assert_eq!(st2.t, 2);
    }

    #[test]
    fn identity_target_converges_at_iteration_zero() {
        let cfg = SynthConfig { depth: Some(2), seeds: 2, iters: 5, init_scale: 0.0, ..Default::default() };
        let (inst, rep) = multistart_search(&Circuit::new(3), &BitString::zeros(3), 0.99, &cfg, 1).unwrap();
        assert!((inst.peakedness - 1.0).abs() < 1e-12);
        assert!(rep.per_seed_traces.iter().all(|t| t.iterations == 0));
        assert!(!rep.below_target);
    }

    #[test]
    fn search_is_deterministic_and_monotone() {
        let target = random_brickwall(3, 3, 2);
        let x = BitString::zeros(3);
        let cfg = SynthConfig { seeds: 2, iters: 30, ..Default::default() };
        let (i1, mut r1) = multistart_search(&target, &x, 1.1, &cfg, 4).unwrap();
        let (i2, mut r2) = multistart_search(&target, &x, 1.1, &cfg, 4).unwrap();
        r1.wall_time = 0.0;
        r2.wall_time = 0.0;
        assert_eq!(r1, r2);
        assert_eq!(i1, i2);
        assert!(r1.below_target);
        let cfg_long = SynthConfig { iters: 60, ..cfg };
        let (_, r3) = multistart_search(&target, &x, 1.1, &cfg_long, 4).unwrap();
        assert!(r3.best_peakedness >= r1.best_peakedness);
        assert!((i1.peakedness - r1.best_peakedness).abs() < 1e-10);
    }
}

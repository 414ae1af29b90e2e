//! Sequential stitching of peaked blocks, the block-mixing recurrence, and seam rewrites.

use std::collections::BTreeSet;

use num_bigint::BigUint;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::circuit::{Circuit, Gate, GateKind};
use crate::ensembles::{mean_and_se, Method, PeakedInstance};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, C64};
use crate::rng::{child_rng, rng_from_seed};
use crate::sim::{self, DEFAULT_N_MAX_DENSE};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// Block i's output feeds block i + 1 on the same wires.
    #[default]
    Sequential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StitchPlan {
    pub blocks: Vec<PeakedInstance>,
    /// x₀ → x₁ → … → x_L; block i maps x_{i−1} to x_i.
    pub path: Vec<BitString>,
    #[serde(default)]
    pub layout: Layout,
}

impl StitchPlan {
    /// Plan whose path is read off the blocks' recorded inputs and peaks.
    pub fn from_blocks(blocks: Vec<PeakedInstance>) -> Result<Self> {
        let first = blocks.first().ok_or_else(|| Error::structural("stitch plan needs at least one block"))?;
        let mut path = vec![first.input()];
        path.extend(blocks.iter().map(|b| b.peak_string));
        let plan = StitchPlan { blocks, path, layout: Layout::Sequential };
        plan.validate()?;
        Ok(plan)
    }

    /// Rewire each block's input to the previous block's peak, then build the plan.
    pub fn chain(blocks: Vec<PeakedInstance>) -> Result<Self> {
        let mut out = Vec::with_capacity(blocks.len());
        for (i, b) in blocks.into_iter().enumerate() {
            if i == 0 {
                out.push(b);
            } else {
                let prev: &PeakedInstance = &out[i - 1];
                let x_in = prev.peak_string;
                out.push(with_input(&b, &x_in)?);
            }
        }
        Self::from_blocks(out)
    }

    pub fn n(&self) -> usize {
        self.blocks.first().map(|b| b.n()).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::structural("stitch plan needs at least one block"));
        }
        if self.path.len() != self.blocks.len() + 1 {
            return Err(Error::structural(format!(
                "path has {} strings for {} blocks",
                self.path.len(),
                self.blocks.len()
            )));
        }
        let n = self.blocks[0].n();
        for (i, b) in self.blocks.iter().enumerate() {
            let mismatch = |reason: String| Error::PathMismatch { block: i, reason };
            if b.n() != n {
                return Err(mismatch(format!("block has {} wires, expected {n}", b.n())));
            }
            if self.path[i].len() != n || self.path[i + 1].len() != n {
                return Err(mismatch(format!("path strings must have {n} bits")));
            }
            if b.input() != self.path[i] {
                return Err(mismatch(format!("block input {} differs from path {}", b.input(), self.path[i])));
            }
            if b.peak_string != self.path[i + 1] {
                return Err(mismatch(format!("block peak {} differs from path {}", b.peak_string, self.path[i + 1])));
            }
        }
        Ok(())
    }

    /// Gate indices in the stitched circuit where blocks 1.. begin.
    pub fn seams(&self) -> Vec<usize> {
        let mut acc = 0;
        let mut out = Vec::new();
        for b in &self.blocks[..self.blocks.len().saturating_sub(1)] {
            acc += b.circuit.len();
            out.push(acc);
        }
        out
    }

    pub fn leakages(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| (1.0 - b.peakedness).clamp(0.0, 1.0)).collect()
    }
}

/// Same block, entered from `x_in` instead of its recorded input, via a prefixed X layer.
pub fn with_input(block: &PeakedInstance, x_in: &BitString) -> Result<PeakedInstance> {
    if x_in.len() != block.n() {
        return Err(Error::structural(format!("input string {x_in} does not have {} bits", block.n())));
    }
    let diff = x_in.xor(&block.input());
    let mut out = block.clone();
    out.circuit = Circuit::x_layer(&diff).then(&block.circuit)?;
    out.input_string = if x_in.weight() == 0 { None } else { Some(*x_in) };
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StitchPrediction {
    pub per_block_leakage: Vec<f64>,
    /// ∏(1 − ε_i).
    pub predicted_peak: f64,
    /// Expected peak under random block mixing, from the closed form.
    pub analytic_expectation: f64,
}

pub fn predict(plan: &StitchPlan) -> StitchPrediction {
    let eps = plan.leakages();
    let d = (1u64 << plan.n()) as f64;
    StitchPrediction {
        predicted_peak: eps.iter().map(|e| 1.0 - e).product(),
        analytic_expectation: closed_form_q(d, &eps),
        per_block_leakage: eps,
    }
}

pub fn stitch(plan: &StitchPlan) -> Result<(Circuit, PeakedInstance)> {
    stitch_capped(plan, DEFAULT_N_MAX_DENSE)
}

/// Concatenate the blocks. The composed peak is simulated when n ≤ `n_max_dense`, otherwise
/// the product prediction is recorded and flagged.
pub fn stitch_capped(plan: &StitchPlan, n_max_dense: usize) -> Result<(Circuit, PeakedInstance)> {
    plan.validate()?;
    if plan.blocks.len() == 1 {
        let b = plan.blocks[0].clone();
        return Ok((b.circuit.clone(), b));
    }
    let n = plan.n();
    let mut circuit = Circuit::new(n);
    for b in &plan.blocks {
        circuit.gates.extend(b.circuit.gates.iter().cloned());
    }
    let x0 = plan.path[0];
    let xl = *plan.path.last().unwrap();
    let (peakedness, predicted) = if n <= n_max_dense {
        (sim::amplitude(&circuit, &x0, &xl)?.norm_sqr(), false)
    } else {
        (predict(plan).predicted_peak, true)
    };
    let inst = PeakedInstance {
        circuit: circuit.clone(),
        peak_string: xl,
        peakedness,
        method: Method::Stitched,
        seed: plan.blocks[0].seed,
        factors: None,
        input_string: if x0.weight() == 0 { None } else { Some(x0) },
        predicted,
        trials: None,
        sampler: None,
    };
    Ok((circuit, inst))
}

/// q_j = (1 − dε_j/(d−1)) q_{j−1} + ε_j/(d−1) from q₀ = 1. Returns (q₀..q_L, q_L).
pub fn predict_peak_recurrence(d: f64, eps: &[f64]) -> Result<(Vec<f64>, f64)> {
    if d < 2.0 {
        return Err(Error::domain("dimension must be at least 2"));
    }
    if let Some(e) = eps.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        return Err(Error::domain(format!("leakage {e} outside [0, 1]")));
    }
    let mut q = vec![1.0];
    for &e in eps {
        let prev = *q.last().unwrap();
        q.push((1.0 - d * e / (d - 1.0)) * prev + e / (d - 1.0));
    }
    let last = *q.last().unwrap();
    Ok((q, last))
}

/// q_L = 1/d + ∏(1 − dε_j/(d−1)) (1 − 1/d).
pub fn closed_form_q(d: f64, eps: &[f64]) -> f64 {
    let prod: f64 = eps.iter().map(|e| 1.0 - d * e / (d - 1.0)).product();
    1.0 / d + prod * (1.0 - 1.0 / d)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingEstimate {
    pub trials: u64,
    pub mean: f64,
    pub std_err: f64,
    pub closed_form: f64,
}

/// Layers U_j = R(ε)·diag(1, X_j) with X_j Haar on the complement of |ψ₀⟩ and R(ε) a real
/// rotation in span{|ψ₀⟩, |ψ₁⟩} with |⟨ψ₀|R|ψ₀⟩|² = 1 − ε.
pub fn montecarlo_block_mixing(n: usize, layers: usize, eps: f64, trials: u64, seed: u64) -> Result<MixingEstimate> {
    if n == 0 || n > 8 {
        return Err(Error::Capability { what: "block-mixing Monte Carlo", n, limit: 8 });
    }
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::domain(format!("leakage {eps} outside [0, 1]")));
    }
    if trials == 0 {
        return Err(Error::domain("trials must be at least 1"));
    }
    let d = 1usize << n;
    let (a, b) = ((1.0 - eps).sqrt(), eps.sqrt());
    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = child_rng(seed, t);
            let mut psi = vec![C64::new(0.0, 0.0); d];
            psi[0] = C64::new(1.0, 0.0);
            for _ in 0..layers {
                let x = linalg::haar_unitary(d - 1, &mut rng);
                let tail: Vec<C64> =
                    (0..d - 1).map(|i| (0..d - 1).map(|k| x[(i, k)] * psi[k + 1]).sum()).collect();
                psi[1..].copy_from_slice(&tail);
                let (p0, p1) = (psi[0], psi[1]);
                psi[0] = p0 * a - p1 * b;
                psi[1] = p0 * b + p1 * a;
            }
            psi[0].norm_sqr()
        })
        .collect();
    let (mean, std_err) = mean_and_se(&values);
    Ok(MixingEstimate { trials, mean, std_err, closed_form: closed_form_q(d as f64, &vec![eps; layers]) })
}

/// Number of ways to cut an m-gate sequence into k contiguous blocks, C(m−1, k−1).
pub fn stitch_pattern_count(m: u64, k: u64) -> Result<BigUint> {
    if k < 1 || k > m {
        return Err(Error::domain(format!("need 1 ≤ k ≤ m, got m = {m}, k = {k}")));
    }
    Ok(binomial(m - 1, k - 1))
}

pub(crate) fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::from(0u8);
    }
    let k = k.min(n - k);
    let mut acc = BigUint::from(1u8);
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rewrite {
    pub circuit: Circuit,
    /// Source blocks that contributed to each output gate.
    pub provenance: Vec<BTreeSet<usize>>,
}

/// Largest gate arity for which two gates on the same wire set are merged. Smaller gates are
/// always absorbed into a neighbour acting on a superset of their wires.
pub const MERGE_ARITY: usize = 2;

/// Unitary-preserving seam rewrite. `seams` are the gate indices where blocks 1.. begin.
///
/// Adjacent gates are merged first. Then at each seam a random G is folded into the last gate
/// of the earlier block and G† into the first gate of the later one on their shared wires,
/// followed by a second merge pass.
pub fn boundary_rewrite(circuit: &Circuit, seams: &[usize], seed: u64) -> Result<Rewrite> {
    circuit.validate_wires()?;
    let flat = circuit.materialized();
    let mut block = 0;
    let mut items: Vec<Item> = Vec::with_capacity(flat.len());
    for (i, g) in flat.gates.into_iter().enumerate() {
        while block < seams.len() && i >= seams[block] {
            block += 1;
        }
        let m = g.matrix().into_owned();
        items.push(Item { wires: g.wires, m, prov: BTreeSet::from([block]) });
    }
    let blocks = block + 1;
    let mut items = merge_items(items);
    let mut rng = rng_from_seed(seed);
    for boundary in 0..blocks.saturating_sub(1) {
        let s = (0..=items.len())
            .find(|&k| items[k..].iter().all(|it| *it.prov.iter().next().unwrap() > boundary))
            .unwrap_or(items.len());
        for j in s..items.len() {
            let first = items[s..j].iter().all(|it| !overlaps(&it.wires, &items[j].wires));
            if !first {
                continue;
            }
            let Some(a) = (0..s).rev().find(|&a| overlaps(&items[a].wires, &items[j].wires)) else {
                continue;
            };
            let mut q: Vec<usize> = items[j].wires.iter().copied().filter(|w| items[a].wires.contains(w)).collect();
            q.sort_unstable();
            q.truncate(2);
            let g = linalg::haar_unitary(1 << q.len(), &mut rng);
            let ga = lift(&g, &q, &items[a].wires);
            let gb = lift(&g.adjoint(), &q, &items[j].wires);
            items[a].m = &ga * &items[a].m;
            items[j].m = &items[j].m * &gb;
            for idx in [a, j] {
                items[idx].prov.insert(boundary);
                items[idx].prov.insert(boundary + 1);
            }
        }
    }
    let items = merge_items(items);
    let provenance = items.iter().map(|it| it.prov.clone()).collect();
    let gates = items.into_iter().map(|it| Gate { wires: it.wires, kind: GateKind::Fixed(it.m) }).collect();
    Ok(Rewrite { circuit: Circuit { n: circuit.n, gates, architecture: None }, provenance })
}

/// Merge pass alone, with no seams and no randomness.
pub fn merge_adjacent(circuit: &Circuit) -> Result<Circuit> {
    Ok(boundary_rewrite(circuit, &[], 0)?.circuit)
}

struct Item {
    wires: Vec<usize>,
    m: CMatrix,
    prov: BTreeSet<usize>,
}

fn overlaps(a: &[usize], b: &[usize]) -> bool {
    a.iter().any(|w| b.contains(w))
}

fn subset(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|w| b.contains(w))
}

fn merge_items(items: Vec<Item>) -> Vec<Item> {
    let mut out: Vec<Item> = Vec::with_capacity(items.len());
    for mut b in items {
        loop {
            let Some(j) = out.iter().rposition(|a| overlaps(&a.wires, &b.wires)) else {
                out.push(b);
                break;
            };
            let a = &out[j];
            let same = subset(&a.wires, &b.wires) && subset(&b.wires, &a.wires);
            if same && b.wires.len() > MERGE_ARITY {
                out.push(b);
                break;
            }
            if subset(&b.wires, &a.wires) {
                // Nothing after position j touches b's wires, so b folds into a in place.
                let lifted = lift(&b.m, &b.wires, &a.wires);
                let a = &mut out[j];
                a.m = &lifted * &a.m;
                a.prov.extend(b.prov);
                break;
            } else if subset(&a.wires, &b.wires) {
                // Nothing after j touches a's wires either, so a can move forward into b.
                let a = out.remove(j);
                b.m = &b.m * &lift(&a.m, &a.wires, &b.wires);
                b.prov.extend(a.prov);
            } else {
                out.push(b);
                break;
            }
        }
    }
    out
}

/// Embed a gate on `from` into the local space of `to` (from ⊆ to, first wire high).
fn lift(m: &CMatrix, from: &[usize], to: &[usize]) -> CMatrix {
    if from == to {
        return m.clone();
    }
    let k = to.len();
    let pos: Vec<usize> = from.iter().map(|w| to.iter().position(|t| t == w).expect("subset")).collect();
    let sub_mask: usize = pos.iter().map(|&p| 1usize << (k - 1 - p)).sum();
    let local = |r: usize| -> usize {
        pos.iter().fold(0usize, |acc, &p| (acc << 1) | ((r >> (k - 1 - p)) & 1))
    };
    let dim = 1usize << k;
    let mut out = CMatrix::zeros(dim, dim);
    for r in 0..dim {
        for c in 0..dim {
            if r & !sub_mask == c & !sub_mask {
                out[(r, c)] = m[(local(r), local(c))];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::conditional_generate;
    use crate::linalg::max_abs_diff;

    fn block(n: usize, delta: f64, x_in: BitString, x_out: BitString, seed: u64) -> PeakedInstance {
        let inst = conditional_generate(n, delta, &x_out, seed).unwrap();
        with_input(&inst, &x_in).unwrap()
    }

    #[test]
    fn recurrence_matches_closed_form() {
        let d = 16.0;
        let eps = [0.1, 0.3, 0.0, 0.7, 0.05];
        let (q, last) = predict_peak_recurrence(d, &eps).unwrap();
        assert_eq!(q.len(), 6);
        assert!((last - closed_form_q(d, &eps)).abs() < 1e-12);
        let (_, one) = predict_peak_recurrence(d, &[0.25]).unwrap();
        assert!((one - 0.75).abs() < 1e-15);
        assert_eq!(predict_peak_recurrence(d, &[0.0; 4]).unwrap().1, 1.0);
        assert!(predict_peak_recurrence(d, &[1.5]).is_err());
    }

    #[test]
    fn zero_leakage_mixing_is_exact() {
        let est = montecarlo_block_mixing(3, 4, 0.0, 50, 1).unwrap();
        assert_eq!(est.mean, 1.0);
        assert_eq!(est.std_err, 0.0);
    }

    #[test]
    fn pattern_counts() {
        assert_eq!(stitch_pattern_count(7, 1).unwrap(), BigUint::from(1u8));
        assert_eq!(stitch_pattern_count(5, 3).unwrap(), BigUint::from(6u8));
        assert!(stitch_pattern_count(3, 4).is_err());
        assert!(stitch_pattern_count(3, 0).is_err());
    }

    #[test]
    fn single_block_is_itself() {
        let b = conditional_generate(3, 0.8, &BitString::zeros(3), 5).unwrap();
        let plan = StitchPlan::from_blocks(vec![b.clone()]).unwrap();
        let (c, inst) = stitch(&plan).unwrap();
        assert_eq!(c, b.circuit);
        assert_eq!(inst, b);
    }

    #[test]
    fn exact_blocks_compose_exactly() {
        let z = BitString::zeros(3);
        let plan = StitchPlan::from_blocks(vec![Circuit::identity(3), Circuit::identity(3)]
            .into_iter()
            .map(|c| PeakedInstance {
                circuit: c,
                peak_string: z,
                peakedness: 1.0,
                method: Method::Postselect,
                seed: 0,
                factors: None,
                input_string: None,
                predicted: false,
                trials: None,
                sampler: None,
            })
            .collect())
        .unwrap();
        let (_, inst) = stitch(&plan).unwrap();
        assert_eq!(inst.peakedness, 1.0);
        assert_eq!(inst.method, Method::Stitched);
    }

    #[test]
    fn path_mismatch_names_block() {
        let n = 3;
        let a = BitString::new(n, 5).unwrap();
        let b0 = block(n, 0.9, BitString::zeros(n), a, 1);
        let b1 = block(n, 0.9, BitString::zeros(n), a, 2);
        let mut plan = StitchPlan { path: vec![BitString::zeros(n), a, a], blocks: vec![b0, b1], layout: Layout::Sequential };
        match plan.validate() {
            Err(Error::PathMismatch { block, .. }) => assert_eq!(block, 1),
            other => panic!("expected path mismatch, got {other:?}"),
        }
        plan.blocks = StitchPlan::chain(plan.blocks.clone()).unwrap().blocks;
        plan.validate().unwrap();
    }

    #[test]
    fn stitched_peak_tracks_product() {
        let n = 4;
        let strings: Vec<BitString> = [0u64, 9, 3, 14].iter().map(|&i| BitString::new(n, i).unwrap()).collect();
        let blocks: Vec<_> = (0..3).map(|i| block(n, 0.9, strings[i], strings[i + 1], 40 + i as u64)).collect();
        let plan = StitchPlan::from_blocks(blocks).unwrap();
        let (_, inst) = stitch(&plan).unwrap();
        let pred = predict(&plan);
        assert!(inst.peakedness <= 1.0 + 1e-12);
        assert!((pred.predicted_peak - 0.729).abs() < 0.1);
        assert!(inst.peakedness > 0.4);
    }

    #[test]
    fn merge_two_gates_on_same_pair() {
        let mut rng = rng_from_seed(3);
        let g1 = Gate::fixed(vec![0, 1], linalg::haar_unitary(4, &mut rng)).unwrap();
        let g2 = Gate::fixed(vec![1, 0], linalg::haar_unitary(4, &mut rng)).unwrap();
        let c = Circuit::from_gates(3, vec![g1, g2]).unwrap();
        let merged = merge_adjacent(&c).unwrap();
        assert_eq!(merged.len(), 1);
        let diff = max_abs_diff(&sim::full_unitary(&c).unwrap(), &sim::full_unitary(&merged).unwrap());
        assert!(diff < 1e-12, "{diff}");
        assert!(merge_adjacent(&Circuit::new(3)).unwrap().is_empty());
    }

    #[test]
    fn seam_rewrite_preserves_unitary_and_blends() {
        let n = 4;
        let strings: Vec<BitString> = [0u64, 6, 6, 11].iter().map(|&i| BitString::new(n, i).unwrap()).collect();
        let blocks: Vec<_> = (0..3).map(|i| block(n, 0.9, strings[i], strings[i + 1], 70 + i as u64)).collect();
        let plan = StitchPlan::from_blocks(blocks).unwrap();
        let (c, inst) = stitch(&plan).unwrap();
        let rw = boundary_rewrite(&c, &plan.seams(), 9).unwrap();
        let diff = max_abs_diff(&sim::full_unitary(&c).unwrap(), &sim::full_unitary(&rw.circuit).unwrap());
        assert!(diff < 1e-9, "{diff}");
        let p = sim::amplitude(&rw.circuit, &plan.path[0], &inst.peak_string).unwrap().norm_sqr();
        assert!((p - inst.peakedness).abs() < 1e-9);
        for boundary in 0..2 {
            let clean = (0..=rw.provenance.len()).any(|k| {
                rw.provenance[..k].iter().all(|s| s.iter().all(|&b| b <= boundary))
                    && rw.provenance[k..].iter().all(|s| s.iter().all(|&b| b > boundary))
            });
            assert!(!clean, "seam {boundary} still separable: {:?}", rw.provenance);
        }
    }

    #[test]
    fn lift_matches_kron() {
        let mut rng = rng_from_seed(4);
        let g = linalg::haar_unitary(2, &mut rng);
        let id = linalg::identity(2);
        assert!(max_abs_diff(&lift(&g, &[3], &[3, 5]), &linalg::kron(&g, &id)) < 1e-15);
        assert!(max_abs_diff(&lift(&g, &[5], &[3, 5]), &linalg::kron(&id, &g)) < 1e-15);
    }
}

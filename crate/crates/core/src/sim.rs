//! Statevector simulation.
//!
//! Gates update the amplitude vector in place. For a gate on wires `[w0, w1, ..]` the
//! local index of a basis state is formed with `w0` as its most significant bit, and
//! wire `w` sits at bit position `n − 1 − w` of the global index.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::circuit::{Circuit, Gate, GateKind};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64, ONE, ZERO};
use crate::rng::rng_from_seed;

pub const DEFAULT_N_MAX_DENSE: usize = 12;
/// Largest statevector the simulator will allocate.
pub const N_MAX_STATE: usize = 30;

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    pub n: usize,
    pub amps: Vec<C64>,
}

impl StateVector {
    pub fn zero(n: usize) -> Self {
        Self::basis_index(n, 0)
    }

    pub fn basis(x: &BitString) -> Self {
        Self::basis_index(x.len(), x.index() as usize)
    }

    pub fn basis_index(n: usize, index: usize) -> Self {
        assert!(n <= N_MAX_STATE, "statevector on {n} wires is too large");
        let mut amps = vec![ZERO; 1 << n];
        amps[index] = ONE;
        StateVector { n, amps }
    }

    pub fn from_amps(n: usize, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != 1 << n {
            return Err(Error::structural(format!("{} amplitudes for {n} wires", amps.len())));
        }
        Ok(StateVector { n, amps })
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn amplitude(&self, x: &BitString) -> C64 {
        self.amps[x.index() as usize]
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn apply_gate(&mut self, gate: &Gate) -> Result<()> {
        for &w in &gate.wires {
            if w >= self.n {
                return Err(Error::structural(format!("wire {w} out of range for {} wires", self.n)));
            }
        }
        match &gate.kind {
            GateKind::Fixed(m) => apply_matrix(&mut self.amps, self.n, &gate.wires, m),
            GateKind::Param(_) => apply_matrix(&mut self.amps, self.n, &gate.wires, &gate.matrix()),
        }
        Ok(())
    }

    pub fn apply(&mut self, circuit: &Circuit) -> Result<()> {
        if circuit.n != self.n {
            return Err(Error::structural(format!(
                "circuit on {} wires applied to a {}-wire state",
                circuit.n, self.n
            )));
        }
        for g in &circuit.gates {
            self.apply_gate(g)?;
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn insert_zero(x: usize, pos: usize) -> usize {
    let low = x & ((1 << pos) - 1);
    ((x >> pos) << (pos + 1)) | low
}

/// Apply a 2^k × 2^k matrix (not necessarily unitary) to `wires` of an n-wire amplitude vector.
pub fn apply_matrix(amps: &mut [C64], n: usize, wires: &[usize], m: &CMatrix) {
    let k = wires.len();
    debug_assert_eq!(m.nrows(), 1 << k);
    match k {
        1 => apply_1q(amps, n - 1 - wires[0], m),
        2 => apply_2q(amps, n - 1 - wires[0], n - 1 - wires[1], m),
        _ => apply_kq(amps, n, wires, m),
    }
}

fn apply_1q(amps: &mut [C64], p: usize, m: &CMatrix) {
    let (m00, m01, m10, m11) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let stride = 1 << p;
    for base in 0..amps.len() >> 1 {
        let i0 = insert_zero(base, p);
        let i1 = i0 | stride;
        let (a0, a1) = (amps[i0], amps[i1]);
        amps[i0] = m00 * a0 + m01 * a1;
        amps[i1] = m10 * a0 + m11 * a1;
    }
}

fn apply_2q(amps: &mut [C64], p0: usize, p1: usize, m: &CMatrix) {
    let mut mm = [[ZERO; 4]; 4];
    for (i, row) in mm.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = m[(i, j)];
        }
    }
    apply_2q_array(amps, p0, p1, &mm);
}

/// Two-wire kernel on a row-major 4×4 array; `p0`, `p1` are bit positions, `p0` the high local bit.
pub fn apply_2q_array(amps: &mut [C64], p0: usize, p1: usize, mm: &[[C64; 4]; 4]) {
    let offs = [0, 1 << p1, 1 << p0, (1 << p0) | (1 << p1)];
    let (lo, hi) = if p0 < p1 { (p0, p1) } else { (p1, p0) };
    for base in 0..amps.len() >> 2 {
        let i = insert_zero(insert_zero(base, lo), hi);
        let a = [amps[i], amps[i + offs[1]], amps[i + offs[2]], amps[i + offs[3]]];
        for (r, row) in mm.iter().enumerate() {
            amps[i + offs[r]] = row[0] * a[0] + row[1] * a[1] + row[2] * a[2] + row[3] * a[3];
        }
    }
}

fn apply_kq(amps: &mut [C64], n: usize, wires: &[usize], m: &CMatrix) {
    let k = wires.len();
    let dk = 1usize << k;
    let positions: Vec<usize> = wires.iter().map(|&w| n - 1 - w).collect();
    let mut sorted = positions.clone();
    sorted.sort_unstable();
    let offs: Vec<usize> = (0..dk)
        .map(|j| {
            (0..k).filter(|&i| (j >> (k - 1 - i)) & 1 == 1).map(|i| 1usize << positions[i]).sum()
        })
        .collect();
    let mut buf = vec![ZERO; dk];
    for base in 0..amps.len() >> k {
        let mut i = base;
        for &p in &sorted {
            i = insert_zero(i, p);
        }
        for (j, b) in buf.iter_mut().enumerate() {
            *b = amps[i + offs[j]];
        }
        for r in 0..dk {
            let mut acc = ZERO;
            for (j, b) in buf.iter().enumerate() {
                acc += m[(r, j)] * b;
            }
            amps[i + offs[r]] = acc;
        }
    }
}

pub fn apply_circuit(state: &StateVector, circuit: &Circuit) -> Result<StateVector> {
    let mut out = state.clone();
    out.apply(circuit)?;
    Ok(out)
}

/// U|input⟩.
pub fn run(circuit: &Circuit, input: &BitString) -> Result<StateVector> {
    check_len(circuit, input)?;
    let mut s = StateVector::basis(input);
    s.apply(circuit)?;
    Ok(s)
}

pub fn run_zero(circuit: &Circuit) -> Result<StateVector> {
    run(circuit, &BitString::zeros(circuit.n))
}

fn check_len(circuit: &Circuit, x: &BitString) -> Result<()> {
    if x.len() != circuit.n {
        return Err(Error::structural(format!("{}-bit string for a {}-wire circuit", x.len(), circuit.n)));
    }
    if circuit.n > N_MAX_STATE {
        return Err(Error::Capability { what: "statevector simulation", n: circuit.n, limit: N_MAX_STATE });
    }
    Ok(())
}

/// ⟨out|U|in⟩.
pub fn amplitude(circuit: &Circuit, input: &BitString, output: &BitString) -> Result<C64> {
    check_len(circuit, output)?;
    Ok(run(circuit, input)?.amplitude(output))
}

/// |⟨x|U|0ⁿ⟩|².
pub fn peak_probability(circuit: &Circuit, x: &BitString) -> Result<f64> {
    Ok(amplitude(circuit, &BitString::zeros(circuit.n), x)?.norm_sqr())
}

/// Largest output probability and its string, for U|0ⁿ⟩. Ties go to the smaller index.
pub fn max_outcome(circuit: &Circuit) -> Result<(BitString, f64)> {
    let s = run_zero(circuit)?;
    let (idx, p) = s
        .amps
        .iter()
        .map(|a| a.norm_sqr())
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, p)| if p > best.1 { (i, p) } else { best });
    Ok((BitString::new(circuit.n, idx as u64)?, p))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    #[serde(default)]
    pub instance_id: Option<String>,
    /// Noise tag, "none" for ideal sampling.
    pub noise: String,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSet {
    pub n: usize,
    pub shots: Vec<BitString>,
    pub meta: SampleMeta,
}

impl SampleSet {
    pub fn new(n: usize, shots: Vec<BitString>, meta: SampleMeta) -> Result<Self> {
        if let Some(s) = shots.iter().find(|s| s.len() != n) {
            return Err(Error::structural(format!("shot {s} does not have {n} bits")));
        }
        Ok(SampleSet { n, shots, meta })
    }

    pub fn len(&self) -> usize {
        self.shots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shots.is_empty()
    }

    pub fn frequency(&self, x: &BitString) -> f64 {
        if self.shots.is_empty() {
            return 0.0;
        }
        self.shots.iter().filter(|s| *s == x).count() as f64 / self.shots.len() as f64
    }
}

/// Draw `shots` i.i.d. indices from a probability vector (need not be exactly normalized).
pub fn sample_indices<R: Rng + ?Sized>(probs: &[f64], shots: usize, rng: &mut R) -> Vec<usize> {
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for &p in probs {
        acc += p;
        cdf.push(acc);
    }
    let total = acc;
    (0..shots)
        .map(|_| {
            let u = rng.random::<f64>() * total;
            cdf.partition_point(|&c| c <= u).min(probs.len() - 1)
        })
        .collect()
}

pub fn sample(circuit: &Circuit, input: &BitString, shots: usize, seed: u64) -> Result<SampleSet> {
    if shots == 0 {
        return Err(Error::domain("shots must be at least 1"));
    }
    let state = run(circuit, input)?;
    let probs = state.probabilities();
    let mut rng = rng_from_seed(seed);
    let n = circuit.n;
    let strings = sample_indices(&probs, shots, &mut rng)
        .into_iter()
        .map(|i| BitString::new(n, i as u64))
        .collect::<Result<Vec<_>>>()?;
    SampleSet::new(n, strings, SampleMeta { instance_id: None, noise: "none".into(), seed: Some(seed) })
}

pub fn full_unitary(circuit: &Circuit) -> Result<CMatrix> {
    full_unitary_capped(circuit, DEFAULT_N_MAX_DENSE)
}

/// Dense 2ⁿ × 2ⁿ matrix of the circuit; column x is U|x⟩.
pub fn full_unitary_capped(circuit: &Circuit, n_max_dense: usize) -> Result<CMatrix> {
    let n = circuit.n;
    if n > n_max_dense {
        return Err(Error::Capability { what: "dense unitary", n, limit: n_max_dense });
    }
    circuit.validate_wires()?;
    let d = 1usize << n;
    let mut u = CMatrix::identity(d, d);
    // Materialize parameterized gates once rather than once per column.
    let mats: Vec<CMatrix> = circuit.gates.iter().map(|g| g.matrix().into_owned()).collect();
    for mut col in u.column_iter_mut() {
        let amps = col.as_mut_slice();
        for (g, m) in circuit.gates.iter().zip(&mats) {
            apply_matrix(amps, n, &g.wires, m);
        }
    }
    Ok(u)
}

/// Tr(A†B) for two circuits on the same wires, via d column simulations.
pub fn trace_overlap(a: &Circuit, b: &Circuit, n_max_dense: usize) -> Result<C64> {
    if a.n != b.n {
        return Err(Error::structural("trace overlap of circuits on different wire counts"));
    }
    let n = a.n;
    if n > n_max_dense {
        return Err(Error::Capability { what: "trace overlap", n, limit: n_max_dense });
    }
    let ma: Vec<CMatrix> = a.gates.iter().map(|g| g.matrix().into_owned()).collect();
    let mb: Vec<CMatrix> = b.gates.iter().map(|g| g.matrix().into_owned()).collect();
    let d = 1usize << n;
    let mut total = ZERO;
    let mut sa = vec![ZERO; d];
    let mut sb = vec![ZERO; d];
    for x in 0..d {
        sa.iter_mut().for_each(|z| *z = ZERO);
        sb.iter_mut().for_each(|z| *z = ZERO);
        sa[x] = ONE;
        sb[x] = ONE;
        for (g, m) in a.gates.iter().zip(&ma) {
            apply_matrix(&mut sa, n, &g.wires, m);
        }
        for (g, m) in b.gates.iter().zip(&mb) {
            apply_matrix(&mut sb, n, &g.wires, m);
        }
        total += sa.iter().zip(&sb).map(|(p, q)| p.conj() * q).sum::<C64>();
    }
    Ok(total)
}

/// (|0⟩⟨0| ⊗ I + |1⟩⟨1| ⊗ C)(H ⊗ I) on n + 1 wires, ancilla on wire 0.
pub fn controlled_embedding(circuit: &Circuit) -> Circuit {
    let mut gates = Vec::with_capacity(circuit.gates.len() + 1);
    gates.push(Gate::h(0));
    for g in &circuit.gates {
        let m = g.matrix();
        let dk = m.nrows();
        let mut cm = CMatrix::identity(2 * dk, 2 * dk);
        cm.view_mut((dk, dk), (dk, dk)).copy_from(&*m);
        let mut wires = Vec::with_capacity(g.wires.len() + 1);
        wires.push(0);
        wires.extend(g.wires.iter().map(|w| w + 1));
        gates.push(Gate { wires, kind: GateKind::Fixed(cm) });
    }
    Circuit { n: circuit.n + 1, gates, architecture: None }
}

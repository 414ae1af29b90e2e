//! Gates, circuits, the brickwall architecture and the circuit JSON format.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, C64, ONE, ZERO};

pub const UNITARY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum GateKind {
    Fixed(CMatrix),
    /// Coefficients on the fixed two-qubit Pauli basis; the gate is exp(−i Σ θ_k P_k).
    Param(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gate {
    pub wires: Vec<usize>,
    pub kind: GateKind,
}

impl Gate {
    pub fn fixed(wires: Vec<usize>, matrix: CMatrix) -> Result<Self> {
        let g = Gate { wires, kind: GateKind::Fixed(matrix) };
        g.check_shape()?;
        Ok(g)
    }

    pub fn param(wires: [usize; 2], params: Vec<f64>) -> Result<Self> {
        let g = Gate { wires: wires.to_vec(), kind: GateKind::Param(params) };
        g.check_shape()?;
        Ok(g)
    }

    fn check_shape(&self) -> Result<()> {
        let k = self.wires.len();
        if k == 0 {
            return Err(Error::structural("gate acts on no wires"));
        }
        for (i, a) in self.wires.iter().enumerate() {
            if self.wires[..i].contains(a) {
                return Err(Error::structural(format!("repeated wire {a} in gate")));
            }
        }
        match &self.kind {
            GateKind::Fixed(m) => {
                let d = 1usize << k;
                if m.nrows() != d || m.ncols() != d {
                    return Err(Error::structural(format!(
                        "gate on {k} wires needs a {d}x{d} matrix, got {}x{}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
            }
            GateKind::Param(p) => {
                if k != 2 || p.len() != 15 {
                    return Err(Error::structural("parameterized gates act on 2 wires with 15 parameters"));
                }
            }
        }
        Ok(())
    }

    pub fn arity(&self) -> usize {
        self.wires.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.wires.len()
    }

    pub fn matrix(&self) -> Cow<'_, CMatrix> {
        match &self.kind {
            GateKind::Fixed(m) => Cow::Borrowed(m),
            GateKind::Param(p) => Cow::Owned(linalg::su4_gate(p)),
        }
    }

    pub fn dagger(&self) -> Gate {
        Gate { wires: self.wires.clone(), kind: GateKind::Fixed(self.matrix().adjoint()) }
    }

    pub fn h(w: usize) -> Gate {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let m = linalg::from_rows(&[&[c(s, 0.0), c(s, 0.0)], &[c(s, 0.0), c(-s, 0.0)]]);
        Gate { wires: vec![w], kind: GateKind::Fixed(m) }
    }

    pub fn x(w: usize) -> Gate {
        Gate { wires: vec![w], kind: GateKind::Fixed(linalg::pauli(1)) }
    }

    pub fn z(w: usize) -> Gate {
        Gate { wires: vec![w], kind: GateKind::Fixed(linalg::pauli(3)) }
    }

    pub fn cnot(control: usize, target: usize) -> Gate {
        let m = linalg::from_rows(&[
            &[ONE, ZERO, ZERO, ZERO],
            &[ZERO, ONE, ZERO, ZERO],
            &[ZERO, ZERO, ZERO, ONE],
            &[ZERO, ZERO, ONE, ZERO],
        ]);
        Gate { wires: vec![control, target], kind: GateKind::Fixed(m) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Architecture {
    Brickwall { depth: usize },
}

/// Wire pairs of each brickwall layer: even layers start at wire 0, odd layers at wire 1.
pub fn brickwall_layers(n: usize, depth: usize) -> Vec<Vec<[usize; 2]>> {
    (0..depth)
        .map(|l| {
            let start = l % 2;
            (start..n.saturating_sub(1)).step_by(2).map(|a| [a, a + 1]).collect()
        })
        .collect()
}

pub fn brickwall_gate_count(n: usize, depth: usize) -> usize {
    brickwall_layers(n, depth).iter().map(Vec::len).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    pub n: usize,
    pub gates: Vec<Gate>,
    pub architecture: Option<Architecture>,
}

impl Circuit {
    pub fn new(n: usize) -> Self {
        Circuit { n, gates: Vec::new(), architecture: None }
    }

    pub fn identity(n: usize) -> Self {
        Circuit::new(n)
    }

    pub fn from_gates(n: usize, gates: Vec<Gate>) -> Result<Self> {
        let c = Circuit { n, gates, architecture: None };
        c.validate_wires()?;
        Ok(c)
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        check_wires(self.n, &gate)?;
        self.gates.push(gate);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn validate_wires(&self) -> Result<()> {
        for g in &self.gates {
            check_wires(self.n, g)?;
            g.check_shape()?;
        }
        Ok(())
    }

    /// Full structural validation: wires, shapes, unitarity, and the architecture pattern.
    pub fn validate(&self) -> Result<()> {
        self.validate_wires()?;
        for (i, g) in self.gates.iter().enumerate() {
            if let GateKind::Fixed(m) = &g.kind {
                let defect = linalg::unitarity_defect(m);
                if defect > UNITARY_TOL {
                    return Err(Error::structural(format!("gate {i} is not unitary (defect {defect:.2e})")));
                }
            }
        }
        self.check_architecture()
    }

    pub fn check_architecture(&self) -> Result<()> {
        match self.architecture {
            None => Ok(()),
            Some(Architecture::Brickwall { depth }) => {
                let pattern: Vec<[usize; 2]> = brickwall_layers(self.n, depth).into_iter().flatten().collect();
                if pattern.len() != self.gates.len() {
                    return Err(Error::ArchitectureMismatch(format!(
                        "brickwall depth {depth} on {} wires has {} gates, circuit has {}",
                        self.n,
                        pattern.len(),
                        self.gates.len()
                    )));
                }
                for (i, (p, g)) in pattern.iter().zip(&self.gates).enumerate() {
                    if g.wires != p.as_slice() {
                        return Err(Error::ArchitectureMismatch(format!(
                            "gate {i} acts on {:?}, brickwall expects {:?}",
                            g.wires, p
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// U† as a circuit: gates reversed and adjointed. The architecture tag is dropped
    /// since the reversed layer order no longer starts on even pairs in general.
    pub fn dagger(&self) -> Circuit {
        Circuit { n: self.n, gates: self.gates.iter().rev().map(Gate::dagger).collect(), architecture: None }
    }

    /// The circuit that runs `self` first and then `next`.
    pub fn then(&self, next: &Circuit) -> Result<Circuit> {
        if self.n != next.n {
            return Err(Error::structural(format!("cannot compose {} and {} wires", self.n, next.n)));
        }
        let mut gates = self.gates.clone();
        gates.extend(next.gates.iter().cloned());
        Ok(Circuit { n: self.n, gates, architecture: None })
    }

    /// X on every wire where `x` reads 1; maps |0ⁿ⟩ to |x⟩.
    pub fn x_layer(x: &BitString) -> Circuit {
        Circuit { n: x.len(), gates: x.ones().map(Gate::x).collect(), architecture: None }
    }

    /// Freeze parameterized gates into fixed matrices.
    pub fn materialized(&self) -> Circuit {
        Circuit {
            n: self.n,
            gates: self
                .gates
                .iter()
                .map(|g| Gate { wires: g.wires.clone(), kind: GateKind::Fixed(g.matrix().into_owned()) })
                .collect(),
            architecture: self.architecture,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Circuit> {
        let c: Circuit = serde_json::from_str(s)?;
        Ok(c)
    }
}

fn check_wires(n: usize, g: &Gate) -> Result<()> {
    for &w in &g.wires {
        if w >= n {
            return Err(Error::structural(format!("wire {w} out of range for {n} wires")));
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct GateJson {
    wires: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrix: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    params: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct CircuitJson {
    n: usize,
    gates: Vec<GateJson>,
    architecture: Option<Architecture>,
}

pub(crate) fn matrix_to_json(m: &CMatrix) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            out.push([z.re, z.im]);
        }
    }
    out
}

pub(crate) fn matrix_from_json(entries: &[[f64; 2]]) -> Result<CMatrix> {
    let len = entries.len();
    let d = (len as f64).sqrt().round() as usize;
    if d * d != len {
        return Err(Error::structural(format!("matrix with {len} entries is not square")));
    }
    Ok(CMatrix::from_fn(d, d, |i, j| {
        let [re, im] = entries[i * d + j];
        C64::new(re, im)
    }))
}

impl Serialize for Circuit {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let gates = self
            .gates
            .iter()
            .map(|g| match &g.kind {
                GateKind::Fixed(m) => GateJson { wires: g.wires.clone(), matrix: Some(matrix_to_json(m)), params: None },
                GateKind::Param(p) => GateJson { wires: g.wires.clone(), matrix: None, params: Some(p.clone()) },
            })
            .collect();
        CircuitJson { n: self.n, gates, architecture: self.architecture }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Circuit {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let cj = CircuitJson::deserialize(d)?;
        let mut gates = Vec::with_capacity(cj.gates.len());
        for gj in cj.gates {
            let g = match (gj.matrix, gj.params) {
                (Some(m), None) => {
                    let m = matrix_from_json(&m).map_err(D::Error::custom)?;
                    Gate::fixed(gj.wires, m).map_err(D::Error::custom)?
                }
                (None, Some(p)) => {
                    let w: [usize; 2] = gj
                        .wires
                        .as_slice()
                        .try_into()
                        .map_err(|_| D::Error::custom("parameterized gate needs exactly 2 wires"))?;
                    Gate::param(w, p).map_err(D::Error::custom)?
                }
                _ => return Err(D::Error::custom("gate needs exactly one of \"matrix\" or \"params\"")),
            };
            gates.push(g);
        }
        let c = Circuit { n: cj.n, gates, architecture: cj.architecture };
        c.validate_wires().map_err(D::Error::custom)?;
        c.check_architecture().map_err(D::Error::custom)?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brickwall_pattern() {
        assert_eq!(brickwall_layers(2, 1), vec![vec![[0, 1]]]);
        assert_eq!(brickwall_layers(4, 2), vec![vec![[0, 1], [2, 3]], vec![[1, 2]]]);
        // n = 6: even layers hold 3 gates, odd layers 2.
        assert_eq!(brickwall_gate_count(6, 6), 3 * 3 + 3 * 2);
        assert_eq!(brickwall_gate_count(5, 3), 2 + 2 + 2);
    }

    #[test]
    fn rejects_bad_gates() {
        assert!(Gate::fixed(vec![0, 0], linalg::identity(4)).is_err());
        assert!(Gate::fixed(vec![0], linalg::identity(4)).is_err());
        let mut c = Circuit::new(2);
        assert!(c.push(Gate::x(2)).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut c = Circuit::new(3);
        c.push(Gate::h(0)).unwrap();
        c.push(Gate::cnot(0, 2)).unwrap();
        c.push(Gate::param([1, 2], (0..15).map(|k| 0.1 * k as f64 - 0.7).collect()).unwrap()).unwrap();
        let s = c.to_json().unwrap();
        let back = Circuit::from_json(&s).unwrap();
        assert_eq!(back, c);
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["gates"][0]["matrix"].as_array().unwrap().len(), 4);
        assert!(v["architecture"].is_null());
    }

    #[test]
    fn json_rejects_architecture_violation() {
        let s = r#"{"n":2,"gates":[],"architecture":{"type":"brickwall","depth":1}}"#;
        assert!(Circuit::from_json(s).is_err());
    }
}

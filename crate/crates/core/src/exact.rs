//! Exact complex-rational arithmetic for small dense computations.
//!
//! Every finite f64 is a dyadic rational, so circuits whose gate entries are given in
//! floating point can be evaluated without rounding.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::linalg::{CMatrix, C64};

pub type Q = BigRational;

pub fn q_from_f64(x: f64) -> Q {
    BigRational::from_float(x).expect("finite float")
}

pub fn q_to_f64(x: &Q) -> f64 {
    // Scale to keep both parts within f64 range before dividing.
    if let Some(v) = x.to_f64() {
        if v.is_finite() {
            return v;
        }
    }
    let n_bits = x.numer().bits() as i64;
    let d_bits = x.denom().bits() as i64;
    let shift = n_bits - d_bits;
    let scaled = if shift > 0 {
        x / Q::from_integer(BigInt::one() << shift as usize)
    } else {
        x * Q::from_integer(BigInt::one() << (-shift) as usize)
    };
    scaled.to_f64().unwrap_or(f64::NAN) * 2f64.powi(shift as i32)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CQ {
    pub re: Q,
    pub im: Q,
}

impl CQ {
    pub fn zero() -> Self {
        CQ { re: Q::zero(), im: Q::zero() }
    }

    pub fn one() -> Self {
        CQ { re: Q::one(), im: Q::zero() }
    }

    pub fn real(re: Q) -> Self {
        CQ { re, im: Q::zero() }
    }

    pub fn from_c64(z: C64) -> Self {
        CQ { re: q_from_f64(z.re), im: q_from_f64(z.im) }
    }

    pub fn to_c64(&self) -> C64 {
        C64::new(q_to_f64(&self.re), q_to_f64(&self.im))
    }

    pub fn add(&self, o: &CQ) -> CQ {
        CQ { re: &self.re + &o.re, im: &self.im + &o.im }
    }

    pub fn mul(&self, o: &CQ) -> CQ {
        CQ { re: &self.re * &o.re - &self.im * &o.im, im: &self.re * &o.im + &self.im * &o.re }
    }

    pub fn scale(&self, s: &Q) -> CQ {
        CQ { re: &self.re * s, im: &self.im * s }
    }

    /// Multiply by −i.
    pub fn mul_neg_i(&self) -> CQ {
        CQ { re: self.im.clone(), im: -&self.re }
    }

    pub fn norm_sqr(&self) -> Q {
        &self.re * &self.re + &self.im * &self.im
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QMatrix {
    pub dim: usize,
    pub data: Vec<CQ>,
}

impl QMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut data = vec![CQ::zero(); dim * dim];
        for i in 0..dim {
            data[i * dim + i] = CQ::one();
        }
        QMatrix { dim, data }
    }

    pub fn from_cmatrix(m: &CMatrix) -> Self {
        let dim = m.nrows();
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(CQ::from_c64(m[(i, j)]));
            }
        }
        QMatrix { dim, data }
    }

    pub fn get(&self, i: usize, j: usize) -> &CQ {
        &self.data[i * self.dim + j]
    }

    pub fn mul(&self, o: &QMatrix) -> QMatrix {
        let d = self.dim;
        let mut data = vec![CQ::zero(); d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..d {
                    let b = o.get(k, j);
                    if !b.is_zero() {
                        data[i * d + j] = data[i * d + j].add(&a.mul(b));
                    }
                }
            }
        }
        QMatrix { dim: d, data }
    }

    pub fn add(&self, o: &QMatrix) -> QMatrix {
        QMatrix { dim: self.dim, data: self.data.iter().zip(&o.data).map(|(a, b)| a.add(b)).collect() }
    }

    pub fn scale(&self, s: &CQ) -> QMatrix {
        QMatrix { dim: self.dim, data: self.data.iter().map(|a| a.mul(s)).collect() }
    }
}

/// Apply a 2^k-dim gate to `wires` of an exact n-wire state (wire 0 most significant).
pub fn apply_gate(state: &mut [CQ], n: usize, wires: &[usize], m: &QMatrix) {
    let k = wires.len();
    let dk = 1usize << k;
    let mask: usize = wires.iter().map(|&w| 1usize << (n - 1 - w)).sum();
    let offs: Vec<usize> = (0..dk)
        .map(|j| (0..k).filter(|&i| (j >> (k - 1 - i)) & 1 == 1).map(|i| 1usize << (n - 1 - wires[i])).sum())
        .collect();
    for base in 0..state.len() {
        if base & mask != 0 {
            continue;
        }
        let v: Vec<CQ> = offs.iter().map(|&o| state[base + o].clone()).collect();
        for r in 0..dk {
            let mut acc = CQ::zero();
            for (j, x) in v.iter().enumerate() {
                let g = m.get(r, j);
                if !g.is_zero() && !x.is_zero() {
                    acc = acc.add(&g.mul(x));
                }
            }
            state[base + offs[r]] = acc;
        }
    }
}

/// Evaluate a polynomial given by exact interpolation data at `x`, using barycentric-free
/// Newton divided differences.
pub struct NewtonPoly {
    nodes: Vec<Q>,
    coeffs: Vec<Q>,
}

impl NewtonPoly {
    pub fn interpolate(nodes: &[Q], values: &[Q]) -> Self {
        assert_eq!(nodes.len(), values.len());
        let mut c = values.to_vec();
        let n = nodes.len();
        for j in 1..n {
            for i in (j..n).rev() {
                c[i] = (&c[i] - &c[i - 1]) / (&nodes[i] - &nodes[i - j]);
            }
        }
        NewtonPoly { nodes: nodes.to_vec(), coeffs: c }
    }

    pub fn eval(&self, x: &Q) -> Q {
        let n = self.coeffs.len();
        let mut acc = self.coeffs[n - 1].clone();
        for i in (0..n - 1).rev() {
            acc = acc * (x - &self.nodes[i]) + &self.coeffs[i];
        }
        acc
    }

    /// Coefficients in the monomial basis, lowest degree first.
    pub fn monomial(&self) -> Vec<Q> {
        let n = self.coeffs.len();
        let mut out = vec![Q::zero(); n];
        out[0] = self.coeffs[n - 1].clone();
        let mut deg = 0;
        for i in (0..n - 1).rev() {
            // out ← out·(x − x_i) + c_i
            let mut next = vec![Q::zero(); n];
            for k in 0..=deg {
                next[k + 1] = &next[k + 1] + &out[k];
                next[k] = &next[k] - &out[k] * &self.nodes[i];
            }
            next[0] = &next[0] + &self.coeffs[i];
            out = next;
            deg += 1;
        }
        out
    }
}

pub fn abs_q(x: &Q) -> Q {
    x.abs()
}

//! Dense complex matrices and the handful of factorizations the toolkit needs.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

pub fn from_rows(rows: &[&[C64]]) -> CMatrix {
    let r = rows.len();
    let cols = rows.first().map_or(0, |x| x.len());
    CMatrix::from_fn(r, cols, |i, j| rows[i][j])
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).fold(0.0, |acc, (x, y)| acc.max((x - y).norm()))
}

/// ‖M†M − I‖ in max norm.
pub fn unitarity_defect(m: &CMatrix) -> f64 {
    let d = m.ncols();
    let p = m.adjoint() * m;
    max_abs_diff(&p, &identity(d))
}

pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

/// Tr(A†B) without forming the product.
pub fn trace_inner(a: &CMatrix, b: &CMatrix) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Spectral norm (largest singular value).
pub fn op_norm(m: &CMatrix) -> f64 {
    m.clone().singular_values().iter().fold(0.0f64, |a, &b| a.max(b))
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Eigendecomposition of a Hermitian matrix, H = W diag(λ) W†.
pub fn hermitian_eigen(h: &CMatrix) -> (Vec<f64>, CMatrix) {
    let herm = (h + h.adjoint()) * c(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

/// exp(−i t H) for Hermitian H.
pub fn expm_hermitian(h: &CMatrix, t: f64) -> CMatrix {
    let (vals, w) = hermitian_eigen(h);
    spectral_apply(&w, &vals, |l| C64::from_polar(1.0, -t * l))
}

/// W diag(f(λ)) W†.
pub fn spectral_apply(w: &CMatrix, vals: &[f64], f: impl Fn(f64) -> C64) -> CMatrix {
    let mut scaled = w.clone();
    for (j, &l) in vals.iter().enumerate() {
        let fj = f(l);
        for x in scaled.column_mut(j).iter_mut() {
            *x *= fj;
        }
    }
    scaled * w.adjoint()
}

/// Principal logarithm of a unitary, U = Q diag(e^{iφ}) Q† with φ ∈ (−π, π].
#[derive(Clone, Debug)]
pub struct UnitaryLog {
    pub q: CMatrix,
    pub phases: Vec<f64>,
    /// Set when some eigenvalue sat on the branch cut at −1 and was assigned phase +π.
    pub branch_adjusted: bool,
}

impl UnitaryLog {
    /// i·log U, a Hermitian matrix with spectrum −φ.
    pub fn generator(&self) -> CMatrix {
        spectral_apply(&self.q, &self.phases, |p| c(-p, 0.0))
    }

    /// U^θ along the principal branch: Q diag(e^{iθφ}) Q†.
    pub fn power(&self, theta: f64) -> CMatrix {
        spectral_apply(&self.q, &self.phases, |p| C64::from_polar(1.0, theta * p))
    }
}

pub const BRANCH_TOL: f64 = 1e-12;

pub fn unitary_log(u: &CMatrix) -> UnitaryLog {
    let d = u.nrows();
    let schur = nalgebra::Schur::try_new(u.clone(), 1e-15, 10_000)
        .or_else(|| nalgebra::Schur::try_new(u.clone(), 1e-13, 100_000))
        .expect("complex Schur iteration failed on a unitary matrix");
    let (q, t) = schur.unpack();
    let mut branch_adjusted = false;
    let phases = (0..d)
        .map(|i| {
            let z = t[(i, i)];
            let mut p = z.arg();
            if (p.abs() - PI).abs() <= BRANCH_TOL {
                branch_adjusted = true;
                p = PI;
            }
            p
        })
        .collect();
    UnitaryLog { q, phases, branch_adjusted }
}

fn gaussian_c64<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    // Column-major fill so the stream order does not depend on nalgebra internals.
    let mut m = CMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = gaussian_c64(rng);
        }
    }
    m
}

/// Haar-distributed unitary via QR of a Ginibre matrix with phase correction.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    assert!(dim >= 1);
    let g = ginibre(dim, dim, rng);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        let rjj = r[(j, j)];
        let n = rjj.norm();
        let ph = if n > 0.0 { rjj / n } else { ONE };
        for x in q.column_mut(j).iter_mut() {
            *x *= ph;
        }
    }
    q
}

/// Uniformly random unit vector in C^dim.
pub fn haar_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CVector {
    loop {
        let v = CVector::from_fn(dim, |_, _| gaussian_c64(rng));
        let n = v.norm();
        if n > 1e-300 {
            return v / c(n, 0.0);
        }
    }
}

/// Completes the given orthonormal columns into a unitary with Gram–Schmidt on random columns.
pub fn complete_unitary<R: Rng + ?Sized>(fixed: &[CVector], dim: usize, rng: &mut R) -> CMatrix {
    let mut cols: Vec<CVector> = fixed.to_vec();
    while cols.len() < dim {
        let mut v = CVector::from_fn(dim, |_, _| gaussian_c64(rng));
        for _ in 0..2 {
            for u in &cols {
                let p = u.dotc(&v);
                v -= u * p;
            }
        }
        let n = v.norm();
        if n > 1e-8 {
            cols.push(v / c(n, 0.0));
        }
    }
    CMatrix::from_columns(&cols)
}

pub fn pauli(k: usize) -> CMatrix {
    match k {
        0 => from_rows(&[&[ONE, ZERO], &[ZERO, ONE]]),
        1 => from_rows(&[&[ZERO, ONE], &[ONE, ZERO]]),
        2 => from_rows(&[&[ZERO, -I], &[I, ZERO]]),
        3 => from_rows(&[&[ONE, ZERO], &[ZERO, -ONE]]),
        _ => panic!("pauli index {k} out of range"),
    }
}

/// The 15 non-identity two-qubit Paulis P_a ⊗ P_b, ordered lexicographically over (I, X, Y, Z).
/// The first factor acts on the first listed wire.
pub fn two_qubit_paulis() -> &'static [CMatrix; 15] {
    static BASIS: OnceLock<[CMatrix; 15]> = OnceLock::new();
    BASIS.get_or_init(|| {
        std::array::from_fn(|k| {
            let idx = k + 1;
            kron(&pauli(idx / 4), &pauli(idx % 4))
        })
    })
}

pub const PAULI_LABELS: [&str; 15] = [
    "IX", "IY", "IZ", "XI", "XX", "XY", "XZ", "YI", "YX", "YY", "YZ", "ZI", "ZX", "ZY", "ZZ",
];

/// Σ θ_k P_k.
pub fn su4_generator(theta: &[f64]) -> CMatrix {
    assert_eq!(theta.len(), 15);
    let mut h = CMatrix::zeros(4, 4);
    for (t, p) in theta.iter().zip(two_qubit_paulis().iter()) {
        if *t != 0.0 {
            h += p * c(*t, 0.0);
        }
    }
    h
}

/// exp(−i Σ θ_k P_k).
pub fn su4_gate(theta: &[f64]) -> CMatrix {
    if theta.iter().all(|&t| t == 0.0) {
        return identity(4);
    }
    expm_hermitian(&su4_generator(theta), 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn haar_unitary_is_unitary() {
        let mut rng = rng_from_seed(1);
        for d in [1, 2, 3, 8, 17] {
            let u = haar_unitary(d, &mut rng);
            assert!(unitarity_defect(&u) < 1e-12, "d={d}");
        }
    }

    #[test]
    fn paulis_are_traceless_hermitian_and_orthogonal() {
        let b = two_qubit_paulis();
        for (i, p) in b.iter().enumerate() {
            assert!(trace(p).norm() < 1e-15);
            assert!(hermiticity_defect(p) < 1e-15);
            for (j, q) in b.iter().enumerate() {
                let ip = trace_inner(p, q);
                let want = if i == j { 4.0 } else { 0.0 };
                assert!((ip - c(want, 0.0)).norm() < 1e-14);
            }
        }
        // XI acts on the first (most significant) local bit.
        let xi = &b[3];
        assert_eq!(xi[(2, 0)], ONE);
    }

    #[test]
    fn expm_matches_closed_form_for_pauli() {
        let t = 0.37;
        let u = expm_hermitian(&pauli(1), t);
        let want = from_rows(&[&[c(t.cos(), 0.0), c(0.0, -t.sin())], &[c(0.0, -t.sin()), c(t.cos(), 0.0)]]);
        assert!(max_abs_diff(&u, &want) < 1e-14);
    }

    #[test]
    fn unitary_log_round_trip() {
        let mut rng = rng_from_seed(5);
        for d in [2, 4, 8] {
            let u = haar_unitary(d, &mut rng);
            let l = unitary_log(&u);
            assert!(max_abs_diff(&l.power(1.0), &u) < 1e-12);
            assert!(max_abs_diff(&l.power(0.0), &identity(d)) < 1e-12);
            let h = l.generator();
            assert!(hermiticity_defect(&h) < 1e-12);
            assert!(max_abs_diff(&expm_hermitian(&h, 1.0), &u) < 1e-11);
        }
    }

    #[test]
    fn unitary_log_on_branch_cut() {
        let x = pauli(1);
        let l = unitary_log(&x);
        assert!(l.branch_adjusted);
        assert!(max_abs_diff(&l.power(1.0), &x) < 1e-12);
        let half = l.power(0.5);
        assert!(unitarity_defect(&half) < 1e-12);
        assert!(max_abs_diff(&(&half * &half), &x) < 1e-12);
    }

    #[test]
    fn completion_keeps_fixed_columns() {
        let mut rng = rng_from_seed(9);
        let v = haar_state(6, &mut rng);
        let u = complete_unitary(std::slice::from_ref(&v), 6, &mut rng);
        assert!(unitarity_defect(&u) < 1e-12);
        assert!((u.column(0) - &v).norm() < 1e-15);
    }
}

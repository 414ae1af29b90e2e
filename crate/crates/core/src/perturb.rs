//! Per-gate geodesic paths from a peaked circuit P to a target P*, their Taylor truncations,
//! and the polynomial structure of the truncated peak probability.
//!
//! Convention: G_j(θ) = G_j · exp(−iθH_j) with H_j = i·log(G_j† G*_j) on the principal
//! branch, so θ = 0 gives P and θ = 1 gives P*.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::circuit::{matrix_from_json, matrix_to_json, Circuit, Gate, GateKind};
use crate::error::{Error, Result};
use crate::exact::{self, NewtonPoly, QMatrix, CQ, Q};
use crate::linalg::{self, c, CMatrix};
use crate::rng::rng_from_seed;
use crate::sim;

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationPath {
    pub base: Circuit,
    pub target: Circuit,
    /// Hermitian H_j per gate.
    pub generators: Vec<CMatrix>,
    pub theta_end: f64,
    /// ‖H_j‖_op.
    pub op_norms: Vec<f64>,
    pub warnings: Vec<String>,
}

impl PerturbationPath {
    pub fn gate_count(&self) -> usize {
        self.generators.len()
    }

    pub fn max_op_norm(&self) -> f64 {
        self.op_norms.iter().copied().fold(0.0, f64::max)
    }
}

pub fn make_path(base: &Circuit, target: &Circuit) -> Result<PerturbationPath> {
    if base.n != target.n || base.gates.len() != target.gates.len() {
        return Err(Error::ArchitectureMismatch("base and target differ in wire or gate count".into()));
    }
    let mut generators = Vec::with_capacity(base.gates.len());
    let mut op_norms = Vec::with_capacity(base.gates.len());
    let mut warnings = Vec::new();
    for (j, (g, t)) in base.gates.iter().zip(&target.gates).enumerate() {
        if g.wires != t.wires {
            return Err(Error::ArchitectureMismatch(format!("gate {j} acts on {:?} vs {:?}", g.wires, t.wires)));
        }
        let gm = g.matrix();
        let tm = t.matrix();
        if *gm == *tm {
            generators.push(CMatrix::zeros(gm.nrows(), gm.ncols()));
            op_norms.push(0.0);
            continue;
        }
        let rel = gm.adjoint() * &*tm;
        let log = linalg::unitary_log(&rel);
        if log.branch_adjusted {
            warnings.push(format!("gate {j}: eigenvalue at -1, assigned phase +pi"));
        }
        op_norms.push(log.phases.iter().fold(0.0f64, |a, p| a.max(p.abs())));
        generators.push(log.generator());
    }
    Ok(PerturbationPath { base: base.clone(), target: target.clone(), generators, theta_end: 1.0, op_norms, warnings })
}

/// P(θ), with exact unitaries from the eigendecomposition of each H_j.
pub fn materialize(path: &PerturbationPath, theta: f64) -> Circuit {
    if theta == 0.0 {
        return path.base.clone();
    }
    let gates = path
        .base
        .gates
        .iter()
        .zip(&path.generators)
        .map(|(g, h)| {
            let m = g.matrix().into_owned() * linalg::expm_hermitian(h, theta);
            Gate { wires: g.wires.clone(), kind: GateKind::Fixed(m) }
        })
        .collect();
    Circuit { n: path.base.n, gates, architecture: path.base.architecture }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedPath {
    pub path: PerturbationPath,
    pub k: usize,
}

/// Σ_{i ≤ K} (−iθH)^i / i!.
fn taylor(h: &CMatrix, theta: f64, k: usize) -> CMatrix {
    let d = h.nrows();
    let step = h * c(0.0, -theta);
    let mut term = linalg::identity(d);
    let mut sum = term.clone();
    for i in 1..=k {
        term = &term * &step * c(1.0 / i as f64, 0.0);
        sum += &term;
    }
    sum
}

/// P^{(K)}(θ): each gate is G_j times the degree-K Taylor polynomial of exp(−iθH_j).
pub fn materialize_truncated(tp: &TruncatedPath, theta: f64) -> Circuit {
    if theta == 0.0 || tp.k == 0 {
        return tp.path.base.clone();
    }
    let gates = tp
        .path
        .base
        .gates
        .iter()
        .zip(&tp.path.generators)
        .map(|(g, h)| Gate { wires: g.wires.clone(), kind: GateKind::Fixed(g.matrix().into_owned() * taylor(h, theta, tp.k)) })
        .collect();
    Circuit { n: tp.path.base.n, gates, architecture: None }
}

/// Per-gate bound (|θ|‖H_j‖)^{K+1}/(K+1)! on ‖exp(−iθH_j) − Taylor_K‖_op.
pub fn truncation_error_bounds(tp: &TruncatedPath, theta: f64) -> Vec<f64> {
    tp.path
        .op_norms
        .iter()
        .map(|&h| {
            let x = theta.abs() * h;
            (1..=tp.k + 1).fold(1.0, |acc, i| acc * x / i as f64)
        })
        .collect()
}

/// ‖G_j^{(K)}(θ) − G_j(θ)‖_op per gate, measured.
pub fn truncation_errors(tp: &TruncatedPath, theta: f64) -> Vec<f64> {
    let exact = materialize(&tp.path, theta);
    let trunc = materialize_truncated(tp, theta);
    exact.gates.iter().zip(&trunc.gates).map(|(a, b)| linalg::op_norm(&(a.matrix().into_owned() - &*b.matrix()))).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvReport {
    /// Σ_x |p_x − q_x| between the outputs of P and P(θ).
    pub l1_distance: f64,
    /// 2mθ·max‖H_j‖ + c·mθ².
    pub tv_bound: f64,
    pub c: f64,
    pub peak_base: f64,
    pub peak_theta: f64,
    pub peak_drop: f64,
    pub holds: bool,
}

pub const DEFAULT_TV_C: f64 = 1.0;

pub fn tv_peakedness_check(path: &PerturbationPath, theta: f64, x_star: &BitString) -> Result<TvReport> {
    tv_peakedness_check_with(path, theta, x_star, DEFAULT_TV_C)
}

pub fn tv_peakedness_check_with(path: &PerturbationPath, theta: f64, x_star: &BitString, c_: f64) -> Result<TvReport> {
    if path.base.n > sim::DEFAULT_N_MAX_DENSE {
        return Err(Error::Capability { what: "exact output distribution", n: path.base.n, limit: sim::DEFAULT_N_MAX_DENSE });
    }
    let p = sim::run_zero(&path.base)?.probabilities();
    let q = sim::run_zero(&materialize(path, theta))?.probabilities();
    let l1_distance: f64 = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum();
    let m = path.gate_count() as f64;
    let tv_bound = 2.0 * m * theta.abs() * path.max_op_norm() + c_ * m * theta * theta;
    let xi = x_star.index() as usize;
    Ok(TvReport {
        l1_distance,
        tv_bound,
        c: c_,
        peak_base: p[xi],
        peak_theta: q[xi],
        peak_drop: p[xi] - q[xi],
        holds: l1_distance <= tv_bound + 1e-12,
    })
}

/// |⟨x⋆|P^{(K)}(θ)|0ⁿ⟩|² in floating point.
pub fn truncated_peak(tp: &TruncatedPath, theta: f64, x_star: &BitString) -> Result<f64> {
    sim::peak_probability(&materialize_truncated(tp, theta), x_star)
}

pub fn chebyshev_nodes(a: f64, b: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| {
            let t = ((2 * i + 1) as f64 * std::f64::consts::PI / (2 * count) as f64).cos();
            0.5 * (a + b) + 0.5 * (b - a) * t
        })
        .collect()
}

/// Chebyshev-basis least-squares fit of the truncated peak probability in θ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyFit {
    /// 2mK.
    pub degree: usize,
    /// Interval [a, b] mapped onto [−1, 1] for the basis.
    pub interval: [f64; 2],
    pub coeffs: Vec<f64>,
    /// 2-norm condition number of the scaled basis matrix.
    pub condition: f64,
    pub heldout_nodes: Vec<f64>,
    pub heldout_residual: f64,
    /// "interpolation" when |nodes| = degree + 1, else "least-squares".
    pub method: String,
}

fn to_unit(interval: [f64; 2], theta: f64) -> f64 {
    let [a, b] = interval;
    if b == a {
        0.0
    } else {
        (2.0 * theta - a - b) / (b - a)
    }
}

fn chebyshev_row(t: f64, len: usize) -> Vec<f64> {
    let mut row = vec![0.0; len];
    if len > 0 {
        row[0] = 1.0;
    }
    if len > 1 {
        row[1] = t;
    }
    for k in 2..len {
        row[k] = 2.0 * t * row[k - 1] - row[k - 2];
    }
    row
}

impl PolyFit {
    pub fn eval(&self, theta: f64) -> f64 {
        // Clenshaw recurrence.
        let t = to_unit(self.interval, theta);
        let (mut b1, mut b2) = (0.0, 0.0);
        for &ck in self.coeffs.iter().skip(1).rev() {
            let b0 = 2.0 * t * b1 - b2 + ck;
            b2 = b1;
            b1 = b0;
        }
        self.coeffs.first().copied().unwrap_or(0.0) + t * b1 - b2
    }
}

/// Lebesgue function Σ_i |ℓ_i(θ)| of the nodes, the worst-case amplification of node errors at θ.
pub fn lebesgue_function(nodes: &[f64], theta: f64) -> f64 {
    (0..nodes.len())
        .map(|i| {
            nodes
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &xj)| (theta - xj) / (nodes[i] - xj))
                .product::<f64>()
                .abs()
        })
        .sum()
}

pub const CONDITION_THRESHOLD: f64 = 1e10;
pub const HELDOUT_TOL: f64 = 1e-8;

fn check_nodes(nodes: &[f64], degree: usize) -> Result<()> {
    if nodes.len() < degree + 1 {
        return Err(Error::domain(format!("{} nodes cannot determine a degree-{degree} polynomial", nodes.len())));
    }
    let mut sorted = nodes.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::domain("nodes must be distinct"));
    }
    Ok(())
}

/// Ten cell centres of the node span, skipping any that land on a fit node.
fn heldout(nodes: &[f64]) -> Vec<f64> {
    let lo = nodes.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = nodes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = Vec::with_capacity(10);
    let mut cells = 10;
    while out.len() < 10 && cells < 40 {
        out = (0..cells)
            .map(|i| lo + (hi - lo) * (i as f64 + 0.5) / cells as f64)
            .filter(|t| !nodes.contains(t))
            .take(10)
            .collect();
        cells += 1;
    }
    out
}

pub fn amplitude_polynomial(tp: &TruncatedPath, x_star: &BitString, nodes: &[f64]) -> Result<PolyFit> {
    let values = nodes.iter().map(|&t| truncated_peak(tp, t, x_star)).collect::<Result<Vec<_>>>()?;
    let degree = 2 * tp.path.gate_count() * tp.k;
    let mut fit = fit_values(nodes, &values, degree)?;
    let ho = heldout(nodes);
    let mut residual = 0.0f64;
    for &t in &ho {
        residual = residual.max((fit.eval(t) - truncated_peak(tp, t, x_star)?).abs());
    }
    fit.heldout_nodes = ho;
    fit.heldout_residual = residual;
    if residual > HELDOUT_TOL {
        return Err(Error::FitResidual { residual, tolerance: HELDOUT_TOL });
    }
    Ok(fit)
}

/// Fit values at nodes with a degree-`degree` Chebyshev expansion on the node interval.
pub fn fit_values(nodes: &[f64], values: &[f64], degree: usize) -> Result<PolyFit> {
    check_nodes(nodes, degree)?;
    let a = nodes.iter().copied().fold(f64::INFINITY, f64::min);
    let b = nodes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let interval = [a, b];
    let len = degree + 1;
    let mat = nalgebra::DMatrix::from_fn(nodes.len(), len, |i, j| chebyshev_row(to_unit(interval, nodes[i]), len)[j]);
    let svd = mat.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let smin = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition > CONDITION_THRESHOLD {
        return Err(Error::IllConditioned { condition, threshold: CONDITION_THRESHOLD });
    }
    let rhs = nalgebra::DVector::from_column_slice(values);
    let sol = svd.solve(&rhs, 0.0).map_err(|e| Error::domain(e.to_string()))?;
    Ok(PolyFit {
        degree,
        interval,
        coeffs: sol.iter().copied().collect(),
        condition,
        heldout_nodes: vec![],
        heldout_residual: 0.0,
        method: if nodes.len() == len { "interpolation".into() } else { "least-squares".into() },
    })
}

/// The truncated path with every gate and generator entry taken as an exact rational.
pub struct ExactTruncatedPath {
    n: usize,
    k: usize,
    wires: Vec<Vec<usize>>,
    gates: Vec<QMatrix>,
    generators: Vec<QMatrix>,
}

impl ExactTruncatedPath {
    pub fn new(tp: &TruncatedPath) -> Self {
        ExactTruncatedPath {
            n: tp.path.base.n,
            k: tp.k,
            wires: tp.path.base.gates.iter().map(|g| g.wires.clone()).collect(),
            gates: tp.path.base.gates.iter().map(|g| QMatrix::from_cmatrix(&g.matrix())).collect(),
            generators: tp.path.generators.iter().map(QMatrix::from_cmatrix).collect(),
        }
    }

    /// p₀(θ) = |⟨x⋆|P^{(K)}(θ)|0ⁿ⟩|² exactly, for rational θ.
    pub fn peak(&self, theta: &Q, x_star: &BitString) -> Q {
        let d = 1usize << self.n;
        let mut state = vec![CQ::zero(); d];
        state[0] = CQ::one();
        for ((g, h), w) in self.gates.iter().zip(&self.generators).zip(&self.wires) {
            let dim = g.dim;
            let mut sum = QMatrix::identity(dim);
            let mut term = QMatrix::identity(dim);
            // step = −iθH
            let step = h.scale(&CQ::real(theta.clone())).scale(&CQ { re: Q::from_integer(0.into()), im: Q::from_integer((-1).into()) });
            for i in 1..=self.k {
                term = term.mul(&step).scale(&CQ::real(Q::new(1.into(), (i as i64).into())));
                sum = sum.add(&term);
            }
            let gate = g.mul(&sum);
            exact::apply_gate(&mut state, self.n, w, &gate);
        }
        state[x_star.index() as usize].norm_sqr()
    }
}

/// Exact interpolation of p₀ through the given nodes, each node read as its exact binary value.
pub struct ExactPolyFit {
    pub degree: usize,
    poly: NewtonPoly,
}

impl ExactPolyFit {
    pub fn eval(&self, theta: f64) -> f64 {
        exact::q_to_f64(&self.poly.eval(&exact::q_from_f64(theta)))
    }

    pub fn eval_exact(&self, theta: &Q) -> Q {
        self.poly.eval(theta)
    }

    pub fn monomial_coeffs(&self) -> Vec<f64> {
        self.poly.monomial().iter().map(exact::q_to_f64).collect()
    }
}

/// Interpolation through exactly `degree + 1` nodes with exact node values.
pub fn amplitude_polynomial_exact(tp: &TruncatedPath, x_star: &BitString, nodes: &[f64]) -> Result<ExactPolyFit> {
    let degree = 2 * tp.path.gate_count() * tp.k;
    check_nodes(nodes, degree)?;
    let ep = ExactTruncatedPath::new(tp);
    let qn: Vec<Q> = nodes[..degree + 1].iter().map(|&t| exact::q_from_f64(t)).collect();
    let vals: Vec<Q> = qn.iter().map(|t| ep.peak(t, x_star)).collect();
    Ok(ExactPolyFit { degree, poly: NewtonPoly::interpolate(&qn, &vals) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub noise: f64,
    pub heldout_residual: f64,
    pub endpoint_error: f64,
}

/// Fit residual and endpoint error when Gaussian noise of each level is added to node values.
pub fn noise_sensitivity(tp: &TruncatedPath, x_star: &BitString, nodes: &[f64], levels: &[f64], seed: u64) -> Result<Vec<NoiseRow>> {
    let degree = 2 * tp.path.gate_count() * tp.k;
    let clean = nodes.iter().map(|&t| truncated_peak(tp, t, x_star)).collect::<Result<Vec<_>>>()?;
    let ho = heldout(nodes);
    let ho_vals = ho.iter().map(|&t| truncated_peak(tp, t, x_star)).collect::<Result<Vec<_>>>()?;
    let end = tp.path.theta_end;
    let end_val = truncated_peak(tp, end, x_star)?;
    let mut rng = rng_from_seed(seed);
    levels
        .iter()
        .map(|&s| {
            let noisy: Vec<f64> = clean.iter().map(|v| v + s * rng.sample::<f64, _>(StandardNormal)).collect();
            let fit = fit_values(nodes, &noisy, degree)?;
            let heldout_residual = ho.iter().zip(&ho_vals).map(|(&t, v)| (fit.eval(t) - v).abs()).fold(0.0, f64::max);
            Ok(NoiseRow { noise: s, heldout_residual, endpoint_error: (fit.eval(end) - end_val).abs() })
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct PathJson {
    base: Circuit,
    target: Circuit,
    generators: Vec<Vec<[f64; 2]>>,
    theta_end: f64,
    op_norms: Vec<f64>,
    #[serde(default)]
    warnings: Vec<String>,
}

impl Serialize for PerturbationPath {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PathJson {
            base: self.base.clone(),
            target: self.target.clone(),
            generators: self.generators.iter().map(matrix_to_json).collect(),
            theta_end: self.theta_end,
            op_norms: self.op_norms.clone(),
            warnings: self.warnings.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PerturbationPath {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let pj = PathJson::deserialize(d)?;
        let generators = pj.generators.iter().map(|g| matrix_from_json(g)).collect::<Result<Vec<_>>>().map_err(D::Error::custom)?;
        Ok(PerturbationPath { base: pj.base, target: pj.target, generators, theta_end: pj.theta_end, op_norms: pj.op_norms, warnings: pj.warnings })
    }
}

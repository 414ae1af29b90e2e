//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness. Set `ACCEPTANCE_ONLY=3,8` to run a subset.

use std::time::Instant;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use rand::Rng;

use peaked_core::bounds::{self, BoundConstants, LogNumber, Regime};
use peaked_core::circuit::{Circuit, Gate};
use peaked_core::ensembles::{self, mean_and_se, Ensemble};
use peaked_core::linalg::{self, max_abs_diff};
use peaked_core::noise::{self, Adversary, Goal, NoiseModel, PlanParams, PlantedDistribution};
use peaked_core::perturb::{self, TruncatedPath};
use peaked_core::rng::{child_rng, derive_seed, rng_from_seed};
use peaked_core::stitch::{self, StitchPlan};
use peaked_core::synth::{self, ParamCircuit, SynthConfig};
use peaked_core::{sim, BitString};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(x: f64, center: f64, width: f64) -> bool {
    (x - center).abs() <= width
}

fn c1_postselection() -> Outcome {
    let x = BitString::zeros(2);
    let mut ok = true;
    let mut parts = vec![];
    for (i, delta) in [0.1, 0.3, 0.5].into_iter().enumerate() {
        let s = ensembles::postselect_acceptance(2, delta, &x, 100_000, derive_seed(1, i as u64), Ensemble::Dense).unwrap();
        let want = (1.0 - delta).powi(3);
        let pass = within(s.rate, want, 3.0 * s.sigma);
        ok &= pass && (s.expected_haar - want).abs() < 1e-15;
        parts.push(format!("δ={delta}: {:.4} vs {want:.4} (σ {:.4})", s.rate, s.sigma));
    }
    outcome(ok, parts.join("; "))
}

fn c2_hs_overlap() -> Outcome {
    let delta = 0.7;
    let mut ok = true;
    let mut parts = vec![];
    for n in [6usize, 8, 10] {
        let cfg = SynthConfig { depth: Some(n), seeds: 3, iters: 2000, stop_on_success: true, ..Default::default() };
        let rows = synth::hs_batch(n, n, 100, delta, &cfg, derive_seed(2, n as u64)).unwrap();
        let ts: Vec<f64> = rows.iter().map(|r| r.trace_sq).collect();
        let (m, se) = mean_and_se(&ts);
        let reached = rows.iter().filter(|r| r.peakedness >= delta).count();
        let d2 = 4f64.powi(n as i32);
        let pass = within(m, 2.0, 3.0 * se);
        ok &= pass;
        parts.push(format!("n={n}: {m:.3}±{se:.3} (normalized {:.3e} vs 2/d² {:.3e}, {reached}/100 ≥ δ)", m / d2, 2.0 / d2));
    }
    outcome(ok, parts.join("; "))
}

fn c3_block_decomposition() -> Outcome {
    let n = 3;
    let count = 10_000u64;
    let x = BitString::new(n, 0b101).unwrap();
    let mut worst_ratio = 0.0f64;
    let mut traces = Vec::with_capacity(count as usize);
    let mut defect_ok = true;
    for i in 0..count {
        let inst = ensembles::conditional_generate(n, 0.999, &x, derive_seed(3, i)).unwrap();
        let b = ensembles::block_extract(&inst.circuit, &x).unwrap();
        let leak = 1.0 - inst.peakedness;
        defect_ok &= inst.peakedness >= 0.999 && b.unitarity_defect <= 10.0 * leak + 1e-12;
        if leak > 0.0 {
            worst_ratio = worst_ratio.max(b.unitarity_defect / leak);
        }
        traces.push(linalg::trace(&b.v).norm_sqr());
    }
    let (m, se) = mean_and_se(&traces);
    let pass = defect_ok && within(m, 1.0, 3.0 * se);
    outcome(pass, format!("E|Tr V|² = {m:.4} ± {se:.4} over {count}; max defect/(1−δ) = {worst_ratio:.3}"))
}

fn c4_stitching() -> Outcome {
    let est = stitch::montecarlo_block_mixing(4, 5, 0.1, 10_000, 4).unwrap();
    let d: f64 = 16.0;
    let closed = 1.0 / d + (1.0 - d * 0.1 / (d - 1.0)).powi(5) * (1.0 - 1.0 / d);
    let mc_ok = within(est.mean, closed, 3.0 * est.std_err) && (est.closed_form - closed).abs() < 1e-12;
    let mut parts = vec![format!("MC {:.4} ± {:.4} vs {closed:.4}", est.mean, est.std_err)];

    // ε = c/L: blocks with peakedness ≥ 1 − c/L chained and composed.
    let c = 0.25;
    let floor = (-c as f64).exp() - 0.05;
    let n = 4;
    let reps = 200u64;
    let mut const_ok = true;
    for l in [1usize, 2, 4, 8] {
        let eps = c / l as f64;
        let vals: Vec<f64> = (0..reps)
            .map(|r| {
                let s = derive_seed(derive_seed(40, l as u64), r);
                let mut rng = child_rng(s, 0);
                let blocks = (0..l)
                    .map(|b| {
                        let xb = BitString::new(n, rng.random::<u64>() & 15).unwrap();
                        ensembles::conditional_generate(n, 1.0 - eps, &xb, derive_seed(s, 1 + b as u64)).unwrap()
                    })
                    .collect();
                let plan = StitchPlan::chain(blocks).unwrap();
                let (_, inst) = stitch::stitch(&plan).unwrap();
                inst.measured_peakedness().unwrap()
            })
            .collect();
        let (m, _) = mean_and_se(&vals);
        let lo = vals.iter().copied().fold(1.0, f64::min);
        const_ok &= m >= floor;
        parts.push(format!("L={l}: mean {m:.4} (min {lo:.4})"));
    }
    parts.push(format!("floor e^(−{c})−0.05 = {floor:.4}"));
    outcome(mc_ok && const_ok, parts.join("; "))
}

fn haar_target_like(base: &Circuit, seed: u64) -> Circuit {
    let mut rng = rng_from_seed(seed);
    let gates = base.gates.iter().map(|g| Gate::fixed(g.wires.clone(), linalg::haar_unitary(g.dim(), &mut rng)).unwrap()).collect();
    Circuit::from_gates(base.n, gates).unwrap()
}

fn c5_theta_perturbation() -> Outcome {
    let n = 3;
    let base = ensembles::random_brickwall(n, 6, 50).materialized();
    let target = haar_target_like(&base, 51);
    let path = perturb::make_path(&base, &target).unwrap();
    let x = sim::max_outcome(&base).unwrap().0;
    let m = path.gate_count();
    let mut ok = m == 6;
    let mut parts = vec![format!("m={m}")];
    for theta in [1e-3, 1e-2] {
        let r = perturb::tv_peakedness_check(&path, theta, &x).unwrap();
        ok &= r.holds;
        parts.push(format!("θ={theta:e}: ‖p−q‖₁ {:.3e} ≤ {:.3e}", r.l1_distance, r.tv_bound));
    }
    let mut exact_zero = true;
    for k in 0..=6 {
        let c0 = perturb::materialize_truncated(&TruncatedPath { path: path.clone(), k }, 0.0);
        exact_zero &= c0.gates.iter().zip(&base.gates).all(|(a, b)| max_abs_diff(&a.matrix(), &b.matrix()) == 0.0);
    }
    ok &= exact_zero;
    parts.push(format!("P^(K)(0) = P exactly: {exact_zero}"));
    let theta = 0.5;
    let errs: Vec<f64> = (0..=20)
        .map(|k| perturb::truncation_errors(&TruncatedPath { path: path.clone(), k }, theta).into_iter().fold(0.0, f64::max))
        .collect();
    let floor = 1e-14;
    let monotone = errs.windows(2).all(|w| w[1] <= w[0] || w[1] <= floor);
    let reached = *errs.last().unwrap() <= floor;
    ok &= monotone && reached;
    parts.push(format!("truncation error at θ={theta}: K=0 {:.2e} → K=20 {:.2e}, monotone {monotone}", errs[0], errs[20]));
    outcome(ok, parts.join("; "))
}

fn c6_polynomial() -> Outcome {
    let n = 2;
    let x = BitString::zeros(n);
    let inst = ensembles::conditional_generate(n, 0.9, &x, 60).unwrap();
    let base = inst.circuit.materialized();
    let target = haar_target_like(&base, 61);
    let tp = TruncatedPath { path: perturb::make_path(&base, &target).unwrap(), k: 2 };
    let m = tp.path.gate_count();
    let degree = 2 * m * tp.k;
    let nodes = perturb::chebyshev_nodes(0.0, 0.1, degree + 1);
    let fit = perturb::amplitude_polynomial(&tp, &x, &nodes).unwrap();
    let exact = perturb::amplitude_polynomial_exact(&tp, &x, &nodes).unwrap();
    let end = tp.path.theta_end;
    let direct = perturb::truncated_peak(&tp, end, &x).unwrap();
    let exact_err = (exact.eval(end) - direct).abs();
    let f64_err = (fit.eval(end) - direct).abs();
    let pass = m == 2 && fit.degree == degree && fit.heldout_nodes.len() == 10 && fit.heldout_residual <= 1e-8 && exact_err <= 1e-6;
    outcome(
        pass,
        format!(
            "degree {degree}, held-out residual {:.2e} on {} nodes, endpoint error {exact_err:.2e} (f64 fit {f64_err:.2e}, Lebesgue {:.2e})",
            fit.heldout_residual,
            fit.heldout_nodes.len(),
            perturb::lebesgue_function(&nodes, end)
        ),
    )
}

fn c7_gradient() -> Outcome {
    let mut worst = 0.0f64;
    for n in [2usize, 4, 6] {
        let mut rng = rng_from_seed(70 + n as u64);
        let target = ensembles::random_brickwall(n, n, 71 + n as u64);
        let theta = ParamCircuit::random(n, n, 0.5, &mut rng);
        let x = BitString::zeros(n);
        let phi = synth::target_state(&target).unwrap();
        let (_, g) = synth::value_and_gradient(&phi, &theta, &x).unwrap();
        for _ in 0..10 {
            let i = rng.random_range(0..theta.params.len());
            let h = 1e-5;
            let (mut a, mut b) = (theta.clone(), theta.clone());
            a.params[i] += h;
            b.params[i] -= h;
            let fd = (synth::objective(&target, &a, &x).unwrap() - synth::objective(&target, &b, &x).unwrap()) / (2.0 * h);
            let rel = (g[i] - fd).abs() / fd.abs().max(g[i].abs()).max(1e-3);
            worst = worst.max(rel);
        }
    }
    outcome(worst <= 1e-6, format!("max relative error {worst:.2e} over 30 coordinates"))
}

fn c8_decoders() -> Outcome {
    let n = 16;
    let x = BitString::new(n, 0x6C3A).unwrap();
    let eta = 0.1;

    // (a) exact expectations against the sandwich
    let dist = PlantedDistribution::new(x, 0.5).unwrap();
    let b = dist.b();
    let mut a_ok = true;
    for t in 0..=4usize {
        let ball = noise::ball_size(n, t).to_f64().unwrap();
        let rs = noise::exact_hba_expectation(&dist, t, &NoiseModel::Tsparse { t, adversary: Adversary::RandomSubset });
        a_ok &= rs >= 0.5 && rs <= 0.5 + b * ball && (rs - (0.5 + b * (ball - 1.0))).abs() < 1e-13;
        let wc = noise::exact_hba_expectation(&dist, t, &NoiseModel::Tsparse { t, adversary: Adversary::WorstCase { target: x } });
        a_ok &= wc >= 0.5 && wc <= 0.5 + noise::worst_case_bias_bound(n, t, b) + 1e-13;
        let clean = noise::exact_hba_expectation(&dist, t, &NoiseModel::Bsc { r: 0.0 });
        a_ok &= clean >= 0.5 && clean <= 0.5 + b * ball;
    }

    // (b) majority under BSC(0.05)
    let mut pp = PlanParams::new(n, 0.5, eta);
    pp.r = Some(0.05);
    let n_maj = noise::plan_samples(Goal::Majority, &pp).unwrap().shots as usize;
    let maj_hits = (0..100u64)
        .filter(|&i| {
            let s = dist.sample(n_maj, derive_seed(81, i)).unwrap();
            let s = noise::apply_noise(&s, &NoiseModel::Bsc { r: 0.05 }, derive_seed(82, i)).unwrap();
            noise::majority_decode(&s).unwrap() == x
        })
        .count();

    // (c) Hamming center under 60%-planted 2-sparse noise
    let dist6 = PlantedDistribution::new(x, 0.6).unwrap();
    let mut pc = PlanParams::new(n, 0.6, eta);
    pc.t = Some(2);
    let n_cen = noise::plan_samples(Goal::Center, &pc).unwrap().shots as usize;
    let model = NoiseModel::Tsparse { t: 2, adversary: Adversary::RandomSubset };
    let cen_hits = (0..100u64)
        .filter(|&i| {
            let s = dist6.sample(n_cen, derive_seed(83, i)).unwrap();
            let s = noise::apply_noise(&s, &model, derive_seed(84, i)).unwrap();
            noise::hamming_center_decode(&s, 2).unwrap().0 == x
        })
        .count();
    let pass = a_ok && maj_hits >= 90 && cen_hits >= 90;
    outcome(pass, format!("(a) sandwich {a_ok}; (b) majority {maj_hits}/100 at N={n_maj}; (c) center {cen_hits}/100 at N={n_cen}"))
}

fn c9_depolarizing() -> Outcome {
    let n = 8;
    let (p, eps, alpha, eta) = (0.5, 0.3, 0.05, 0.05);
    let mut pp = PlanParams::new(n, p, eta);
    pp.eps = Some(eps);
    pp.alpha = Some(alpha);
    let shots = noise::plan_samples(Goal::Depolarizing, &pp).unwrap().shots as usize;
    let x = BitString::new(n, 0x5D).unwrap();
    let dist = PlantedDistribution::new(x, p).unwrap();
    let model = NoiseModel::Depolarizing { eps };
    let ests: Vec<f64> = (0..200u64)
        .map(|i| {
            let s = dist.sample(shots, derive_seed(91, i)).unwrap();
            let s = noise::apply_noise(&s, &model, derive_seed(92, i)).unwrap();
            noise::debias_depolarizing(s.frequency(&x), eps, n).unwrap().estimate
        })
        .collect();
    let (m, se) = mean_and_se(&ests);
    let sd = se * (ests.len() as f64).sqrt();
    let p_noisy = (1.0 - eps) * p + eps / 2f64.powi(n as i32);
    let want_sd = (p_noisy * (1.0 - p_noisy) / shots as f64).sqrt() / (1.0 - eps);
    let pass = within(m, p, 3.0 * se) && within(sd, want_sd, 0.1 * want_sd);
    outcome(pass, format!("N={shots}: mean {m:.4} ± {se:.4}; SE {sd:.5} vs {want_sd:.5}"))
}

fn c10_moments() -> Outcome {
    let mut ok = true;
    let mut parts = vec![];
    for d in [2usize, 8] {
        for m in 1..=3u32 {
            let e = ensembles::haar_state_moment(d, m, 100_000, derive_seed(derive_seed(10, d as u64), m as u64)).unwrap();
            let fact = |k: usize| (1..=k).product::<usize>() as f64;
            let want = fact(m as usize) * fact(d - 1) / fact(d + m as usize - 1);
            let pass = (e.reference - want).abs() < 1e-15 && within(e.estimate, want, 3.0 * e.std_err);
            ok &= pass;
            parts.push(format!("d={d},m={m}: {:.5}/{want:.5}", e.estimate));
        }
    }
    outcome(ok, parts.join("; "))
}

fn c11_gate_correlation() -> Outcome {
    let mut all = true;
    let mut tele = true;
    let mut worst = 0.0f64;
    for i in 0..100u64 {
        let n = 2 + (i % 5) as usize;
        let depth = n.max(3);
        let c = ensembles::random_brickwall(n, depth, derive_seed(110, i)).materialized();
        let mut rng = child_rng(111, i);
        let scale = [1e-3, 1e-2, 0.1, 0.5, 2.0][(i / 5 % 5) as usize];
        let gates = c
            .gates
            .iter()
            .map(|g| {
                let t: Vec<f64> = (0..15).map(|_| scale * (rng.random::<f64>() - 0.5)).collect();
                Gate::fixed(g.wires.clone(), &*g.matrix() * linalg::su4_gate(&t)).unwrap()
            })
            .collect();
        let cp = Circuit::from_gates(n, gates).unwrap();
        let r = ensembles::gate_correlation_check(&c, &cp).unwrap();
        all &= r.holds;
        tele &= r.telescoped_holds;
        if r.bound > 0.0 {
            worst = worst.max(r.frobenius_dist / r.bound);
        }
    }
    outcome(all && tele, format!("100 pairs at n ∈ 2..=6: all hold {all}, telescoped {tele}, max ratio ‖P−I‖_F/(M√(dε)) = {worst:.3}"))
}

fn ln_rational(q: &BigRational) -> f64 {
    LogNumber::from_biguint(&q.numer().to_biguint().unwrap()).ln - LogNumber::from_biguint(&q.denom().to_biguint().unwrap()).ln
}

fn bits_ok(q: &BigRational) -> bool {
    q.numer().bits() <= 512 && q.denom().bits() <= 512
}

fn c12_bounds() -> Outcome {
    let consts = BoundConstants::default();
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    let mut rec = |got: LogNumber, exact: &BigRational| {
        if bits_ok(exact) {
            let want = ln_rational(exact);
            worst = worst.max((got.ln - want).abs() / want.abs().max(1.0));
            checked += 1;
        }
    };
    let q = |a: u64, b: u64| BigRational::new(a.into(), b.into());
    let big = |x: BigUint| BigRational::from_integer(x.into());
    for dexp in 1..=8u32 {
        let d = 2u64.pow(dexp);
        for (num, den) in [(1u64, 10u64), (3, 10), (1, 2), (9, 10)] {
            let delta = num as f64 / den as f64;
            let keep = q(den - num, den);
            let mut pw = BigRational::one();
            for _ in 0..d - 1 {
                pw *= &keep;
            }
            rec(bounds::acceptance_haar(d as f64, delta).unwrap(), &pw);
            for k in 1..=6u64 {
                let mut v = big(bounds::factorial_exact(k));
                for _ in 0..k {
                    v /= q(num * d, den);
                }
                rec(bounds::acceptance_kdesign_bound(d as f64, delta, k).unwrap(), &v);
                if k <= d - 1 {
                    rec(bounds::packing_log(d as f64, k, delta, &consts).unwrap(), &big(bounds::binomial_exact(d + k - 2, k)));
                    let cover_n = dexp as usize;
                    for s in [1u64, 2, 5, 10] {
                        // (n²·s·2^j)^s with ε = 2^−j
                        let j = 3u32;
                        let base = BigUint::from((cover_n * cover_n) as u64 * s * 2u64.pow(j));
                        let cover = big(base.pow(s as u32));
                        let got_c = bounds::covering_log(cover_n, s as f64, 2f64.powi(-(j as i32)), &consts).unwrap();
                        rec(got_c, &cover);
                        let ratio = cover / big(bounds::binomial_exact(d + k - 2, k));
                        let got_r = bounds::compression_probability_bound(cover_n, k, s as f64, 2f64.powi(-(j as i32)), delta, &consts).unwrap();
                        rec(got_r.log_bound, &ratio);
                    }
                }
            }
        }
    }
    let mut lb_ok = true;
    for n in 1..=30usize {
        let lb = bounds::gate_count_lower_bound(n, 1, Regime::Haar, &consts).unwrap();
        let exact = BigUint::from(1u8) << (2 * n);
        if lb.s_star.map(BigUint::from) != Some(exact.clone()) {
            lb_ok = false;
        }
        rec(lb.log_s_star, &big(exact));
        for t in 0..=n {
            let b = noise::ball_size(n, t);
            rec(LogNumber::from_biguint(&b), &big(b.clone()));
        }
    }
    let mut grid_ok = true;
    for i in 0..10 {
        for j in 0..10 {
            let delta = 0.1 + 0.1 * i as f64;
            let eps_add = delta * j as f64 / 9.0;
            let f = bounds::peak_to_fidelity(delta.min(1.0), eps_add.min(delta)).unwrap();
            grid_ok &= f.holds && 1.0 - f.f_min <= 4.0 * (1.0 - delta) + 2.0 * eps_add + 1e-12;
        }
    }
    let pass = worst <= 1e-10 && lb_ok && grid_ok;
    outcome(pass, format!("{checked} exact comparisons, max relative ln error {worst:.2e}; fidelity grid 100/100 {grid_ok}"))
}

type Check = fn() -> Outcome;

fn main() {
    let checks: [(u32, &str, Check); 12] = [
        (1, "postselection acceptance (1−δ)^(d−1)", c1_postselection),
        (2, "HS overlap |Tr(C†C′)|² ≈ 2", c2_hs_overlap),
        (3, "block decomposition diag(1, V)", c3_block_decomposition),
        (4, "stitching recurrence and constant-peak regime", c4_stitching),
        (5, "θ-perturbation TV bound and truncation", c5_theta_perturbation),
        (6, "polynomial interpolation and extrapolation", c6_polynomial),
        (7, "adjoint gradient vs finite differences", c7_gradient),
        (8, "decoders: HBA sandwich, majority, Hamming center", c8_decoders),
        (9, "depolarizing de-bias", c9_depolarizing),
        (10, "Haar state moments", c10_moments),
        (11, "gate-correlation Frobenius inequality", c11_gate_correlation),
        (12, "bound calculators vs exact oracles", c12_bounds),
    ];
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    // `cargo test -- --list` and friends pass flags through; answer them without running.
    if std::env::args().any(|a| a == "--list") {
        for (id, name, _) in &checks {
            println!("criterion_{id:02}: test  # {name}");
        }
        return;
    }
    let mut failed = 0;
    for (id, name, f) in checks {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t0 = Instant::now();
        let r = f();
        let tag = if r.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {id:>2}. {name}: {} ({:.1}s)", r.detail, t0.elapsed().as_secs_f64());
        if !r.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

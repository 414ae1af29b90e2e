//! Worked examples for individual operations, each against an independent oracle.

use num_bigint::BigUint;

use peaked_core::bounds;
use peaked_core::circuit::{Circuit, Gate};
use peaked_core::ensembles::{self, mean_and_se, Ensemble};
use peaked_core::linalg;
use peaked_core::noise::{self, NoiseModel, PlantedDistribution};
use peaked_core::perturb;
use peaked_core::rng::{child_rng, derive_seed, rng_from_seed};
use peaked_core::sim::{self, SampleMeta, SampleSet};
use peaked_core::stitch::{self, StitchPlan};
use peaked_core::synth::{self, SynthConfig};
use peaked_core::BitString;

fn bs(n: usize, x: u64) -> BitString {
    BitString::new(n, x).unwrap()
}

#[test]
fn haar_unitary_low_moments() {
    let mut rng = rng_from_seed(1);
    let v: Vec<f64> = (0..100_000).map(|_| linalg::haar_unitary(2, &mut rng)[(0, 0)].norm_sqr()).collect();
    let (m, se) = mean_and_se(&v);
    assert!((m - 0.5).abs() <= 3.0 * se, "{m} ± {se}");

    let v: Vec<f64> = (0..10_000).map(|_| linalg::trace(&linalg::haar_unitary(4, &mut rng)).norm_sqr()).collect();
    let (m, se) = mean_and_se(&v);
    assert!((m - 1.0).abs() <= 3.0 * se, "{m} ± {se}");
}

#[test]
fn postselection_rate_at_three_wires() {
    let s = ensembles::postselect_acceptance(3, 0.5, &bs(3, 6), 100_000, 2, Ensemble::Dense).unwrap();
    let want = 0.5f64.powi(7);
    assert!((s.rate - want).abs() <= 3.0 * s.sigma, "{} vs {want}", s.rate);
}

#[test]
fn independent_pair_overlap_is_one() {
    let v: Vec<f64> = (0..10_000u64)
        .map(|i| {
            let mut rng = child_rng(3, i);
            let a = ensembles::dense_haar_circuit(linalg::haar_unitary(8, &mut rng));
            let b = ensembles::dense_haar_circuit(linalg::haar_unitary(8, &mut rng));
            ensembles::hs_overlap(&a, &b).unwrap().trace_sq
        })
        .collect();
    let (m, se) = mean_and_se(&v);
    assert!((m - 1.0).abs() <= 3.0 * se, "{m} ± {se}");
}

#[test]
fn nearly_exact_pairs_overlap_is_two() {
    let x = bs(3, 0);
    let v: Vec<f64> = (0..5_000u64)
        .map(|i| {
            let inst = ensembles::conditional_generate(3, 1.0 - 1e-9, &x, derive_seed(4, i)).unwrap();
            let f = inst.factors.unwrap();
            ensembles::hs_overlap(&f.c, &f.c_prime).unwrap().trace_sq
        })
        .collect();
    let (m, se) = mean_and_se(&v);
    assert!((m - 2.0).abs() <= 3.0 * se, "{m} ± {se}");
}

#[test]
fn exactly_peaked_block_has_no_leak() {
    let x = bs(3, 5);
    let inst = ensembles::conditional_generate(3, 1.0, &x, 7).unwrap();
    let b = ensembles::block_extract(&inst.circuit, &x).unwrap();
    assert!(b.unitarity_defect <= 1e-8, "{}", b.unitarity_defect);
    assert!((b.peak_amp.norm_sqr() - 1.0).abs() < 1e-12);
}

#[test]
fn replacing_one_gate_keeps_the_frobenius_inequality() {
    for seed in 0..20u64 {
        let c = ensembles::random_brickwall(4, 4, seed).materialized();
        let mut gates = c.gates.clone();
        let j = (seed as usize) % gates.len();
        let mut rng = rng_from_seed(seed + 1000);
        gates[j] = Gate::fixed(gates[j].wires.clone(), linalg::haar_unitary(4, &mut rng)).unwrap();
        let cp = Circuit::from_gates(4, gates).unwrap();
        let r = ensembles::gate_correlation_check(&c, &cp).unwrap();
        assert!(r.holds && r.telescoped_holds);
        assert!(r.frobenius_dist < r.bound, "no slack: {} vs {}", r.frobenius_dist, r.bound);
    }
}

#[test]
fn synthesized_frobenius_distance_report() {
    let n = 8;
    let d = 256.0;
    let cfg = SynthConfig { depth: Some(n), seeds: 1, iters: 300, stop_on_success: true, ..Default::default() };
    let mut vals = vec![];
    for i in 0..3u64 {
        let target = ensembles::random_brickwall(n, n, 500 + i);
        let (inst, _) = synth::multistart_search(&target, &BitString::zeros(n), 0.5, &cfg, i).unwrap();
        let f = inst.factors.unwrap();
        let dist = ensembles::frobenius_distance_sq(&f.c, &f.c_prime).unwrap();
        assert!((0.0..=4.0 * d).contains(&dist));
        vals.push(dist);
    }
    let (m, se) = mean_and_se(&vals);
    println!("n = {n}: mean ‖P−I‖²_F = {m:.1} ± {se:.1}; conditional-Haar value 2(d−1) = {}", 2.0 * (d - 1.0));
}

#[test]
fn brickwall_anticoncentrates() {
    let f = ensembles::anticoncentration_check(6, 12, 400, 8).unwrap();
    let reference = ensembles::haar_anticoncentration_reference(64);
    assert!((reference - (63.0f64 / 64.0).powi(63)).abs() < 1e-15);
    let haar = ensembles::haar_state_anticoncentration(64, 4000, 9);
    assert!((haar - reference).abs() < 0.02, "{haar} vs {reference}");
    assert!((f - reference).abs() < 0.03, "{f} vs {reference}");
    assert!(f >= 0.3);
}

#[test]
fn synthesis_reaches_modest_target_on_most_seeds() {
    let n = 6;
    let target = ensembles::random_brickwall(n, 6, 77);
    let cfg = SynthConfig { depth: Some(6), seeds: 5, iters: 2000, stop_on_success: false, ..Default::default() };
    let (inst, rep) = synth::multistart_search(&target, &BitString::zeros(n), 0.3, &cfg, 78).unwrap();
    let ok = rep.per_seed_traces.iter().filter(|t| t.best >= 0.3).count();
    assert!(ok >= 3, "{ok}/5 seeds reached 0.3");
    assert!(!rep.below_target && inst.peakedness >= 0.3);
    assert_eq!(inst.method, ensembles::Method::Variational);
}

#[test]
fn small_theta_keeps_the_peak() {
    let x = bs(3, 3);
    let inst = ensembles::conditional_generate(3, 0.9, &x, 11).unwrap();
    let peaked = inst.circuit.materialized();
    let mut rng = rng_from_seed(13);
    let gates = peaked.gates.iter().map(|g| Gate::fixed(g.wires.clone(), linalg::haar_unitary(g.dim(), &mut rng)).unwrap()).collect();
    let target = Circuit::from_gates(3, gates).unwrap();
    let path = perturb::make_path(&peaked, &target).unwrap();
    let m = path.gate_count() as f64;
    let delta = sim::peak_probability(&peaked, &x).unwrap();
    let theta = delta / (10.0 * m);
    let p = sim::peak_probability(&perturb::materialize(&path, theta), &x).unwrap();
    // The first-order loss scales with the largest generator norm.
    let h = path.max_op_norm();
    assert!(p >= delta - 2.0 * m * theta * h.max(1.0), "{p} < {delta} − 2mθ‖H‖");
}

#[test]
fn three_block_stitch_within_product_window() {
    let n = 4;
    let (mut measured, mut products) = (vec![], vec![]);
    for seed in 0..10u64 {
        let mut rng = child_rng(20, seed);
        let blocks = (0..3)
            .map(|b| {
                let x = bs(n, rand::Rng::random::<u64>(&mut rng) & 15);
                ensembles::conditional_generate(n, 0.9, &x, derive_seed(seed, b)).unwrap()
            })
            .collect();
        let plan = StitchPlan::chain(blocks).unwrap();
        let product = plan.leakages().iter().map(|e| 1.0 - e).product::<f64>();
        let (_, inst) = stitch::stitch(&plan).unwrap();
        let p = inst.measured_peakedness().unwrap();
        println!("seed {seed}: measured {p:.4}, product {product:.4}");
        assert!(p <= 1.0 + 1e-12);
        measured.push(p);
        products.push(product);
    }
    let (m, _) = mean_and_se(&measured);
    let (pm, _) = mean_and_se(&products);
    let below = measured.iter().zip(&products).filter(|(p, q)| **p < **q - 0.05).count();
    println!("mean measured {m:.4}, mean product {pm:.4}, {below}/10 below product − 0.05");
    assert!(m >= pm - 0.05 && m <= 1.0);
}

#[test]
fn strong_mixing_decays_to_uniform() {
    let est = stitch::montecarlo_block_mixing(4, 40, 0.5, 4_000, 30).unwrap();
    assert!((est.mean - 1.0 / 16.0).abs() <= 3.0 * est.std_err + 1e-12, "{} ± {}", est.mean, est.std_err);
}

#[test]
fn pattern_count_without_overflow() {
    // Pascal's rule oracle.
    let mut row = vec![BigUint::from(1u8)];
    for _ in 0..99 {
        let mut next = vec![BigUint::from(1u8); row.len() + 1];
        for i in 1..row.len() {
            next[i] = &row[i - 1] + &row[i];
        }
        row = next;
    }
    assert_eq!(stitch::stitch_pattern_count(100, 7).unwrap(), row[6]);
    assert_eq!(row[6], BigUint::from(1_120_529_256u64));
}

#[test]
fn bsc_flip_fraction_at_one_wire() {
    let r = 0.5 - 0.1;
    let zeros = SampleSet::new(1, vec![bs(1, 0); 100_000], SampleMeta::default()).unwrap();
    let noisy = noise::apply_noise(&zeros, &NoiseModel::Bsc { r }, 31).unwrap();
    let f = noisy.frequency(&bs(1, 1));
    let sigma = (r * (1.0 - r) / 1e5).sqrt();
    assert!((f - r).abs() <= 3.0 * sigma, "{f}");
}

#[test]
fn depolarizing_peak_frequency() {
    let (n, p, eps) = (6, 0.4, 0.25);
    let x = bs(n, 0b101100);
    let s = PlantedDistribution::new(x, p).unwrap().sample(50_000, 32).unwrap();
    let s = noise::apply_noise(&s, &NoiseModel::Depolarizing { eps }, 33).unwrap();
    let want = (1.0 - eps) * p + eps / 64.0;
    let sigma = (want * (1.0 - want) / 5e4).sqrt();
    assert!((s.frequency(&x) - want).abs() <= 3.0 * sigma);
}

#[test]
fn haar_acceptance_at_large_dimension() {
    let d = 1024;
    let delta = 0.01;
    let draws = 1_000_000u64;
    let hits: u64 = (0..draws / 1000)
        .map(|chunk| {
            let mut rng = child_rng(34, chunk);
            (0..1000).filter(|_| linalg::haar_state(d, &mut rng)[0].norm_sqr() >= delta).count() as u64
        })
        .sum();
    let want = bounds::acceptance_haar(d as f64, delta).unwrap().value();
    let sigma = (want * (1.0 - want) / draws as f64).sqrt();
    let rate = hits as f64 / draws as f64;
    assert!((rate - want).abs() <= 3.0 * sigma, "{rate} vs {want} (σ {sigma})");
}

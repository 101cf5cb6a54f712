use std::f64::consts::PI;

use cohdem::circuit::NoiseMode;
use cohdem::codes::{gen_memory, reference_dem, CodeKind, NoiseLevel, NoiseModel};
use cohdem::decode::{decoder_batch, Decoder};
use cohdem::dem::{build_decoding_graph, WeightPolicy};
use cohdem::estimate::{estimate_dem, EstimateOptions};
use cohdem::sampler::{run_coherent_shots, run_pauli_frame_shots};

fn circuit_noise(d: usize, theta: f64, theta_anc: f64, theta_gate: f64, mode: NoiseMode) -> NoiseModel {
    let mut n = NoiseModel::uniform(d, theta, mode);
    n.theta_anc = theta_anc;
    n.theta_gate = theta_gate;
    n
}

/// On a boundary data qubit the gate error e^{iθ_G ZZ} commutes back to sit
/// next to the data rotation e^{−iθZ}, so the boundary edge is sin²(θ−θ_G).
#[test]
fn gate_error_interferes_with_boundary_rotation() {
    let (theta, tg) = (0.06 * PI, 0.02 * PI);
    let c = gen_memory(CodeKind::Repetition, 3, 1, &circuit_noise(3, theta, 0.0, tg, NoiseMode::Coherent), NoiseLevel::Circuit).unwrap();
    let batch = run_coherent_shots(&c, 200_000, 5, 1, false).unwrap();
    let est = estimate_dem(&batch, &reference_dem(&c).unwrap(), &EstimateOptions::default()).unwrap();
    let expected = (theta - tg).sin().powi(2);
    let boundary = est.edge(&[0]).unwrap();
    assert!(
        (boundary.probability - expected).abs() < 4.0 * boundary.std_error,
        "{} ± {} vs {expected}",
        boundary.probability,
        boundary.std_error
    );
    // The twirled model adds the two rates instead.
    let twirled = (theta.sin().powi(2)) * (1.0 - tg.sin().powi(2)) + tg.sin().powi(2) * (1.0 - theta.sin().powi(2));
    assert!((boundary.probability - twirled).abs() > 10.0 * boundary.std_error);
}

#[test]
fn coherent_and_twirled_agree_without_gate_errors() {
    let theta = 0.07 * PI;
    let mut rates = Vec::new();
    for (mode, seed) in [(NoiseMode::Coherent, 1), (NoiseMode::Twirled, 2)] {
        let c = gen_memory(CodeKind::Repetition, 3, 2, &circuit_noise(3, theta, theta, 0.0, mode), NoiseLevel::Circuit).unwrap();
        let batch = match mode {
            NoiseMode::Coherent => run_coherent_shots(&c, 100_000, seed, 1, false).unwrap(),
            NoiseMode::Twirled => run_pauli_frame_shots(&c, 100_000, seed).unwrap(),
        };
        rates.push(estimate_dem(&batch, &reference_dem(&c).unwrap(), &EstimateOptions::default()).unwrap());
    }
    for (a, b) in rates[0].edges.iter().zip(&rates[1].edges) {
        assert_eq!(a.detectors, b.detectors);
        let s = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt().max(1e-4);
        assert!((a.probability - b.probability).abs() < 4.0 * s, "{:?}: {} vs {}", a.detectors, a.probability, b.probability);
    }
}

#[test]
fn estimated_graph_decodes_no_worse_on_twirled_noise() {
    let theta = (0.05f64).sqrt().asin();
    let c = gen_memory(CodeKind::Repetition, 5, 5, &circuit_noise(5, theta, theta, 0.0, NoiseMode::Twirled), NoiseLevel::Circuit).unwrap();
    let batch = run_pauli_frame_shots(&c, 40_000, 3).unwrap();
    let reference = reference_dem(&c).unwrap();
    let est = estimate_dem(&batch, &reference, &EstimateOptions::default()).unwrap().to_dem();
    let mut rates = Vec::new();
    for (dem, policy) in [(&reference, WeightPolicy::Uniform), (&est, WeightPolicy::Estimated), (&reference, WeightPolicy::Estimated)] {
        let graph = build_decoding_graph(dem, policy).unwrap();
        rates.push(decoder_batch(&Decoder::new(&graph), &batch).unwrap().1);
    }
    // Estimated weights track the true model, so they match it within sampling noise.
    let (u, e, t) = (&rates[0], &rates[1], &rates[2]);
    assert!(e.rate <= u.ci_high, "{e:?} vs {u:?}");
    assert!((e.rate - t.rate).abs() <= (t.ci_high - t.ci_low), "{e:?} vs {t:?}");
}

#[test]
fn noiseless_circuit_level_memory_never_fails() {
    for d in [3, 5, 7] {
        let c = gen_memory(CodeKind::Repetition, d, d, &NoiseModel::noiseless(d), NoiseLevel::Circuit).unwrap();
        let batch = run_coherent_shots(&c, 100, 1, 1, false).unwrap();
        let graph = build_decoding_graph(&reference_dem(&c).unwrap(), WeightPolicy::Uniform).unwrap();
        let (_, s) = decoder_batch(&Decoder::new(&graph), &batch).unwrap();
        assert_eq!(s.errors, 0);
        assert_eq!(s.rate, 0.0);
    }
}

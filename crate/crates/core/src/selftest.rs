//! Fast oracle suites runnable from a release binary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::circuit::{DetectorCoord, NoiseMode};
use crate::codes::{gen_memory, reference_dem, CodeKind, NoiseLevel, NoiseModel};
use crate::decode::{brute_force_match, decoder_batch, mwpm, DefectDistances, Decoder, INF};
use crate::dem::{build_decoding_graph, Dem, Mechanism, WeightPolicy};
use crate::error::Result;
use crate::estimate::{boundary_edge_from_moments, bulk_edge_from_moments, estimate_dem, EstimateOptions};
use crate::sampler::{run_coherent_shots, run_pauli_frame_shots, sample_dem};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    pub checks: usize,
    pub failures: Vec<String>,
}

impl SuiteReport {
    fn new(name: &'static str) -> Self {
        SuiteReport {
            name,
            passed: true,
            checks: 0,
            failures: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.passed = false;
            self.failures.push(what());
        }
    }
}

/// Random symmetric defect table with `k` defects.
pub fn random_defect_table(rng: &mut ChaCha8Rng, k: usize) -> DefectDistances {
    let mut pair = vec![INF; k * k];
    let mut parity = vec![false; k * k];
    for i in 0..k {
        for j in i + 1..k {
            let d = rng.gen_range(0..1000);
            let p = rng.gen();
            pair[i * k + j] = d;
            pair[j * k + i] = d;
            parity[i * k + j] = p;
            parity[j * k + i] = p;
        }
    }
    let boundary = (0..k).map(|_| rng.gen_range(0..1200)).collect();
    let bparity = (0..k).map(|_| rng.gen()).collect();
    DefectDistances::from_parts((0..k).collect(), pair, parity, boundary, bparity).expect("consistent shapes")
}

/// Blossom matching weight equals exhaustive search on random instances.
pub fn matching_suite(instances: usize, max_defects: usize, seed: u64) -> SuiteReport {
    let mut rep = SuiteReport::new("matching-vs-brute-force");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for n in 0..instances {
        let k = rng.gen_range(0..=max_defects);
        let t = random_defect_table(&mut rng, k);
        match (mwpm(&t), brute_force_match(&t)) {
            (Ok(a), Ok(b)) => rep.check(a.weight_units == b.weight_units, || {
                format!("instance {n}: blossom {} vs brute force {}", a.weight_units, b.weight_units)
            }),
            (a, b) => rep.check(false, || format!("instance {n}: {a:?} / {b:?}")),
        }
    }
    rep
}

/// Exact detector-pattern distribution of a small DEM.
pub fn exact_pattern_distribution(dem: &Dem) -> Vec<f64> {
    let mut q = vec![0.0; 1 << dem.n_detectors];
    q[0] = 1.0;
    for m in &dem.mechanisms {
        let mask: usize = m.detectors.iter().map(|&d| 1 << d).sum();
        let mut next = vec![0.0; q.len()];
        for (pat, &x) in q.iter().enumerate() {
            next[pat] += x * (1.0 - m.probability);
            next[pat ^ mask] += x * m.probability;
        }
        q = next;
    }
    q
}

fn moment(q: &[f64], mask: usize) -> f64 {
    q.iter()
        .enumerate()
        .filter(|(pat, _)| pat & mask == mask)
        .map(|(_, &x)| x)
        .sum()
}

/// Small graph-like DEM on a 2-check × 3-round grid.
pub fn grid_fixture() -> Dem {
    let m = |d: &[usize], p: f64, logical: bool| Mechanism {
        detectors: d.to_vec(),
        probability: p,
        logical,
    };
    Dem {
        n_detectors: 6,
        mechanisms: vec![
            m(&[0], 0.04, true),
            m(&[0, 1], 0.06, false),
            m(&[1], 0.05, false),
            m(&[0, 2], 0.03, false),
            m(&[1, 3], 0.035, false),
            m(&[2], 0.045, true),
            m(&[2, 3], 0.055, false),
            m(&[3], 0.04, false),
            m(&[2, 4], 0.03, false),
            m(&[3, 5], 0.025, false),
            m(&[4], 0.05, true),
            m(&[4, 5], 0.06, false),
            m(&[5], 0.045, false),
        ],
        coords: (0..6).map(|i| DetectorCoord { check: i % 2, round: i / 2 }).collect(),
    }
}

/// Edge formulas recover the true probabilities from exact moments.
pub fn plug_in_suite() -> SuiteReport {
    let mut rep = SuiteReport::new("edge-formula-plug-in");
    let dem = grid_fixture();
    let q = exact_pattern_distribution(&dem);
    for m in dem.mechanisms.iter().filter(|m| m.detectors.len() == 2) {
        let (i, j) = (m.detectors[0], m.detectors[1]);
        let est = bulk_edge_from_moments(moment(&q, 1 << i), moment(&q, 1 << j), moment(&q, (1 << i) | (1 << j)));
        rep.check(est.as_ref().is_ok_and(|e| (e.raw - m.probability).abs() < 1e-12), || {
            format!("bulk {:?}: {est:?} vs {}", m.detectors, m.probability)
        });
    }
    for m in dem.mechanisms.iter().filter(|m| m.detectors.len() == 1) {
        let i = m.detectors[0];
        let incident: Vec<f64> = dem
            .mechanisms
            .iter()
            .filter(|e| e.detectors.len() == 2 && e.detectors.contains(&i))
            .map(|e| e.probability)
            .collect();
        let est = boundary_edge_from_moments(moment(&q, 1 << i), &incident);
        rep.check(est.as_ref().is_ok_and(|e| (e.raw - m.probability).abs() < 1e-12), || {
            format!("boundary {i}: {est:?} vs {}", m.probability)
        });
    }
    rep
}

/// Estimator recovers every edge and a planted hyperedge of a sampled DEM.
pub fn bernoulli_suite(shots: usize, seed: u64) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("bernoulli-dem-recovery");
    let reference = grid_fixture();
    let mut truth = reference.clone();
    truth.mechanisms.push(Mechanism {
        detectors: vec![1, 2, 3],
        probability: 0.02,
        logical: false,
    });
    let batch = sample_dem(&truth, shots, seed)?;
    let opts = EstimateOptions {
        hyperedges: true,
        ..Default::default()
    };
    let est = estimate_dem(&batch, &reference, &opts)?;
    for m in &truth.mechanisms {
        if let Some(e) = est.edge(&m.detectors) {
            rep.check((e.probability - m.probability).abs() <= 3.0 * e.std_error, || {
                format!("edge {:?}: {} ± {} vs {}", m.detectors, e.probability, e.std_error, m.probability)
            });
        }
    }
    for h in &est.hyperedges {
        let target = truth.find(&h.detectors).map_or(0.0, |m| m.probability);
        rep.check((h.raw - target).abs() <= 3.0 * h.std_error, || {
            format!("window {:?}: {} ± {} vs {target}", h.detectors, h.raw, h.std_error)
        });
    }
    Ok(rep)
}

/// Noiseless circuits produce no detection events and no logical errors.
pub fn noiseless_suite(shots: usize) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("noiseless-zero");
    let cases = [
        (CodeKind::Repetition, 3, NoiseLevel::CodeCapacity),
        (CodeKind::Repetition, 5, NoiseLevel::Phenomenological),
        (CodeKind::Repetition, 5, NoiseLevel::Circuit),
        (CodeKind::RotatedSurface, 3, NoiseLevel::CodeCapacity),
        (CodeKind::RotatedSurface, 3, NoiseLevel::Phenomenological),
    ];
    for (code, d, level) in cases {
        let n_data = if code == CodeKind::Repetition { d } else { d * d };
        for mode in [NoiseMode::Coherent, NoiseMode::Twirled] {
            let mut noise = NoiseModel::noiseless(n_data);
            noise.mode = mode;
            let circuit = gen_memory(code, d, 2, &noise, level)?;
            let batch = match mode {
                NoiseMode::Coherent => run_coherent_shots(&circuit, shots, 1, 1, false)?,
                NoiseMode::Twirled => run_pauli_frame_shots(&circuit, shots, 1)?,
            };
            let label = format!("{} d={d} {} {}", code.as_str(), level.as_str(), mode.as_str());
            rep.check(batch.raw().iter().all(|&b| b == 0), || format!("{label}: detection events"));
            let graph = build_decoding_graph(&reference_dem(&circuit)?, WeightPolicy::Uniform)?;
            let (_, s) = decoder_batch(&Decoder::new(&graph), &batch)?;
            rep.check(s.errors == 0, || format!("{label}: {} logical errors", s.errors));
        }
    }
    Ok(rep)
}

/// All suites with their default sizes.
pub fn run_all(seed: u64) -> Result<Vec<SuiteReport>> {
    Ok(vec![
        matching_suite(1000, 12, seed),
        plug_in_suite(),
        bernoulli_suite(300_000, seed)?,
        noiseless_suite(200)?,
    ])
}

//! Shot sampling: coherent trajectories on the statevector engine, twirled
//! sampling by Pauli-frame propagation, and direct sampling of a DEM.
//!
//! Every shot draws from its own ChaCha8 generator keyed by
//! `(master_seed, shot)`. Stream 0 drives the quantum trajectory and stream
//! `k + 1` drives readout-flip resample `k`, so the output does not depend on
//! how shots are scheduled across workers.

pub mod frame;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::circuit::{CircuitProgram, Instruction, NoiseMode};
use crate::decode::Decoder;
use crate::dem::Dem;
use crate::error::{Error, Result};
use crate::statevec::{Gate, StateVector};

/// Bit-packed detection events and observable outcomes, one row per shot.
///
/// Row layout: detectors then observables, bit `k` in byte `k / 8` at position
/// `k % 8`. Rows that come from readout resampling of one trajectory are
/// contiguous, `rows_per_trajectory` at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotBatch {
    pub n_shots: usize,
    pub n_detectors: usize,
    pub n_observables: usize,
    data: Vec<u8>,
    /// ⟨X_L⟩ before the final data readout, one entry per row.
    pub x_expectation: Option<Vec<f64>>,
    pub rows_per_trajectory: usize,
    pub master_seed: u64,
}

impl ShotBatch {
    pub fn new(n_detectors: usize, n_observables: usize, master_seed: u64) -> Self {
        ShotBatch {
            n_shots: 0,
            n_detectors,
            n_observables,
            data: Vec::new(),
            x_expectation: None,
            rows_per_trajectory: 1,
            master_seed,
        }
    }

    pub fn row_width(&self) -> usize {
        self.n_detectors + self.n_observables
    }

    pub fn row_bytes(&self) -> usize {
        self.row_width().div_ceil(8)
    }

    pub fn raw(&self) -> &[u8] {
        &self.data
    }

    pub fn row(&self, shot: usize) -> &[u8] {
        let rb = self.row_bytes();
        &self.data[shot * rb..(shot + 1) * rb]
    }

    pub fn bit(&self, shot: usize, k: usize) -> bool {
        (self.row(shot)[k / 8] >> (k % 8)) & 1 == 1
    }

    pub fn detector(&self, shot: usize, i: usize) -> bool {
        self.bit(shot, i)
    }

    pub fn observable(&self, shot: usize, o: usize) -> bool {
        self.bit(shot, self.n_detectors + o)
    }

    /// Fired detectors of a shot, ascending.
    pub fn defects(&self, shot: usize) -> Vec<usize> {
        let mut out = Vec::new();
        self.defects_into(shot, &mut out);
        out
    }

    pub fn defects_into(&self, shot: usize, out: &mut Vec<usize>) {
        out.clear();
        for (b, &byte) in self.row(shot).iter().enumerate() {
            let mut bits = byte;
            while bits != 0 {
                let k = b * 8 + bits.trailing_zeros() as usize;
                if k >= self.n_detectors {
                    return;
                }
                out.push(k);
                bits &= bits - 1;
            }
        }
    }

    /// Appends one row given as a bool slice of length `row_width`.
    pub fn push_bits(&mut self, bits: &[bool]) {
        debug_assert_eq!(bits.len(), self.row_width());
        let start = self.data.len();
        self.data.resize(start + self.row_bytes(), 0);
        for (k, &b) in bits.iter().enumerate() {
            if b {
                self.data[start + k / 8] |= 1 << (k % 8);
            }
        }
        self.n_shots += 1;
    }

    /// Appends whole packed rows.
    pub fn push_packed_rows(&mut self, bytes: &[u8]) {
        let rb = self.row_bytes();
        if rb == 0 {
            return;
        }
        debug_assert_eq!(bytes.len() % rb, 0);
        self.data.extend_from_slice(bytes);
        self.n_shots += bytes.len() / rb;
    }

    /// Fraction of shots in which each detector fired.
    pub fn detector_rates(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.n_detectors];
        let mut buf = Vec::new();
        for s in 0..self.n_shots {
            self.defects_into(s, &mut buf);
            for &d in &buf {
                counts[d] += 1;
            }
        }
        counts
            .into_iter()
            .map(|c| c as f64 / self.n_shots.max(1) as f64)
            .collect()
    }
}

/// Generator for one shot and stream.
pub fn shot_rng(master_seed: u64, shot: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&shot.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

#[inline]
fn bernoulli<R: Rng>(rng: &mut R, p: f64) -> bool {
    p > 0.0 && rng.gen::<f64>() < p
}

struct Trajectory {
    records: Vec<bool>,
    /// (record index, flip probability) for each classical readout flip.
    flips: Vec<(usize, f64)>,
    x_expectation: Option<f64>,
}

fn run_trajectory(circuit: &CircuitProgram, rng: &mut ChaCha8Rng, collect_fidelity: bool) -> Result<Trajectory> {
    let mut sv = StateVector::new(circuit.n_qubits)?;
    let twirled = circuit.mode == NoiseMode::Twirled;
    let mut records = Vec::with_capacity(circuit.n_records());
    let mut flips = Vec::new();
    let mut pending: Option<f64> = None;
    let mut x_expectation = None;
    for ins in &circuit.instructions {
        match ins {
            Instruction::Reset(q) => sv.reset(*q, rng)?,
            Instruction::H(q) => sv.apply(Gate::H(*q))?,
            Instruction::Cnot(c, t) => sv.apply(Gate::Cnot(*c, *t))?,
            Instruction::Rz(q, phi) => {
                if twirled {
                    if bernoulli(rng, (phi / 2.0).sin().powi(2)) {
                        sv.apply(Gate::Z(*q))?;
                    }
                } else if *phi != 0.0 {
                    sv.apply(Gate::Rz(*q, *phi))?;
                }
            }
            Instruction::Rzz(a, b, phi) => {
                if twirled {
                    if bernoulli(rng, (phi / 2.0).sin().powi(2)) {
                        sv.apply(Gate::Z(*a))?;
                        sv.apply(Gate::Z(*b))?;
                    }
                } else if *phi != 0.0 {
                    sv.apply(Gate::Rzz(*a, *b, *phi))?;
                }
            }
            Instruction::FlipZ(q, p) => {
                if bernoulli(rng, *p) {
                    sv.apply(Gate::Z(*q))?;
                }
            }
            Instruction::FlipMeas(p) => pending = Some(*p),
            Instruction::Measure(q) => {
                if let Some(p) = pending.take() {
                    flips.push((records.len(), p));
                }
                records.push(sv.measure(*q, rng)?);
            }
            Instruction::Mpx(s) => {
                if let Some(p) = pending.take() {
                    flips.push((records.len(), p));
                }
                records.push(sv.project_stabilizer(s, rng, 0.0)?.1);
            }
            Instruction::ProjZ(s) => sv.project_z_plus(s)?,
            Instruction::ExpectX(s) => {
                if collect_fidelity {
                    x_expectation = Some(sv.expectation_x(s)?);
                }
            }
            Instruction::Detector(_) | Instruction::Observable(_) => {}
        }
    }
    Ok(Trajectory {
        records,
        flips,
        x_expectation,
    })
}

/// Writes the detector and observable parities of `records` into a packed row.
fn pack_row(dets: &[Vec<usize>], obs: &[Vec<usize>], records: &[bool], row: &mut [u8]) {
    row.fill(0);
    for (k, recs) in dets.iter().chain(obs).enumerate() {
        if recs.iter().fold(false, |acc, &r| acc ^ records[r]) {
            row[k / 8] |= 1 << (k % 8);
        }
    }
}

fn assemble(
    circuit: &CircuitProgram,
    master_seed: u64,
    rows_per_trajectory: usize,
    per_shot: Vec<(Vec<u8>, Vec<f64>)>,
    collect_fidelity: bool,
) -> ShotBatch {
    let mut batch = ShotBatch::new(circuit.n_detectors(), circuit.n_observables(), master_seed);
    batch.rows_per_trajectory = rows_per_trajectory;
    let mut xs = Vec::new();
    for (rows, x) in per_shot {
        batch.push_packed_rows(&rows);
        xs.extend(x);
    }
    if collect_fidelity {
        batch.x_expectation = Some(xs);
    }
    batch
}

/// Samples `n_shots` coherent trajectories. Each trajectory's classical readout
/// flips are redrawn `resample` times, giving `n_shots · resample` rows.
pub fn run_coherent_shots(
    circuit: &CircuitProgram,
    n_shots: usize,
    master_seed: u64,
    resample: usize,
    collect_fidelity: bool,
) -> Result<ShotBatch> {
    circuit.validate()?;
    if resample == 0 {
        return Err(Error::invalid("readout resample count must be at least 1"));
    }
    if resample > 1 && circuit.has_mid_circuit_measurement() {
        return Err(Error::invalid(
            "readout resampling requires a circuit without mid-circuit qubit measurements",
        ));
    }
    StateVector::new(circuit.n_qubits)?;
    let dets: Vec<Vec<usize>> = circuit.detectors().map(<[usize]>::to_vec).collect();
    let obs: Vec<Vec<usize>> = circuit.observables().map(<[usize]>::to_vec).collect();
    let rb = (dets.len() + obs.len()).div_ceil(8);

    let per_shot: Vec<(Vec<u8>, Vec<f64>)> = (0..n_shots)
        .into_par_iter()
        .map(|shot| -> Result<(Vec<u8>, Vec<f64>)> {
            let mut rng = shot_rng(master_seed, shot as u64, 0);
            let traj = run_trajectory(circuit, &mut rng, collect_fidelity)?;
            let mut rows = vec![0u8; rb * resample];
            let mut records = traj.records.clone();
            for k in 0..resample {
                records.copy_from_slice(&traj.records);
                if !traj.flips.is_empty() {
                    let mut frng = shot_rng(master_seed, shot as u64, k as u64 + 1);
                    for &(r, p) in &traj.flips {
                        if bernoulli(&mut frng, p) {
                            records[r] ^= true;
                        }
                    }
                }
                pack_row(&dets, &obs, &records, &mut rows[k * rb..(k + 1) * rb]);
            }
            let x = match (collect_fidelity, traj.x_expectation) {
                (false, _) => Vec::new(),
                (true, Some(x)) => vec![x; resample],
                (true, None) => {
                    return Err(Error::invalid("fidelity requested but the circuit has no EXPECT_X"))
                }
            };
            Ok((rows, x))
        })
        .collect::<Result<_>>()?;
    Ok(assemble(circuit, master_seed, resample, per_shot, collect_fidelity))
}

/// Twirled sampling by Pauli-frame propagation. No qubit-count cap.
pub fn run_pauli_frame_shots(circuit: &CircuitProgram, n_shots: usize, master_seed: u64) -> Result<ShotBatch> {
    circuit.validate()?;
    if circuit.mode != NoiseMode::Twirled {
        return Err(Error::invalid(
            "Pauli-frame sampling needs a twirled circuit; coherent circuits go through the statevector path",
        ));
    }
    let dets: Vec<Vec<usize>> = circuit.detectors().map(<[usize]>::to_vec).collect();
    let obs: Vec<Vec<usize>> = circuit.observables().map(<[usize]>::to_vec).collect();
    let rb = (dets.len() + obs.len()).div_ceil(8);
    let per_shot: Vec<(Vec<u8>, Vec<f64>)> = (0..n_shots)
        .into_par_iter()
        .map(|shot| {
            let mut rng = shot_rng(master_seed, shot as u64, 0);
            let records = frame::propagate(circuit, |_, p| bernoulli(&mut rng, p));
            let mut row = vec![0u8; rb];
            pack_row(&dets, &obs, &records, &mut row);
            (row, Vec::new())
        })
        .collect();
    Ok(assemble(circuit, master_seed, 1, per_shot, false))
}

/// Samples a DEM directly: every mechanism fires independently.
pub fn sample_dem(dem: &Dem, n_shots: usize, master_seed: u64) -> Result<ShotBatch> {
    dem.validate()?;
    let mut batch = ShotBatch::new(dem.n_detectors, 1, master_seed);
    let width = dem.n_detectors + 1;
    let rb = width.div_ceil(8);
    let rows: Vec<Vec<u8>> = (0..n_shots)
        .into_par_iter()
        .map(|shot| {
            let mut rng = shot_rng(master_seed, shot as u64, 0);
            let mut row = vec![0u8; rb];
            for m in &dem.mechanisms {
                if bernoulli(&mut rng, m.probability) {
                    for &d in &m.detectors {
                        row[d / 8] ^= 1 << (d % 8);
                    }
                    if m.logical {
                        let k = dem.n_detectors;
                        row[k / 8] ^= 1 << (k % 8);
                    }
                }
            }
            row
        })
        .collect();
    for row in rows {
        batch.push_packed_rows(&row);
    }
    Ok(batch)
}

/// Mean infidelity after decoding, with the standard error over trajectories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Infidelity {
    pub mean: f64,
    pub std_error: f64,
    pub n_trajectories: usize,
}

/// Infidelity of each row, (1 − (−1)^pred ⟨X_L⟩)/2, averaged per trajectory and then over trajectories.
pub fn infidelity_from_predictions(batch: &ShotBatch, predictions: &[bool]) -> Result<Infidelity> {
    let xs = batch
        .x_expectation
        .as_ref()
        .ok_or_else(|| Error::invalid("batch carries no ⟨X_L⟩ values"))?;
    if predictions.len() != batch.n_shots || xs.len() != batch.n_shots {
        return Err(Error::Shape("prediction count does not match the batch".into()));
    }
    let m = batch.rows_per_trajectory.max(1);
    let per_traj: Vec<f64> = xs
        .chunks(m)
        .zip(predictions.chunks(m))
        .map(|(x, p)| {
            x.iter()
                .zip(p)
                .map(|(&x, &flip)| (1.0 - if flip { -x } else { x }) / 2.0)
                .sum::<f64>()
                / x.len() as f64
        })
        .collect();
    let n = per_traj.len();
    if n == 0 {
        return Ok(Infidelity {
            mean: 0.0,
            std_error: 0.0,
            n_trajectories: 0,
        });
    }
    let mean = per_traj.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        per_traj.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    Ok(Infidelity {
        mean,
        std_error: (var / n as f64).sqrt(),
        n_trajectories: n,
    })
}

/// Samples with ⟨X_L⟩ collection, decodes every row and averages the
/// post-correction infidelity. Circuit-level circuits are rejected because their
/// final state need not lie in the codespace.
pub fn logical_infidelity_small_d(
    circuit: &CircuitProgram,
    decoder: &Decoder,
    n_shots: usize,
    master_seed: u64,
    resample: usize,
) -> Result<Infidelity> {
    if circuit.has_mid_circuit_measurement() {
        return Err(Error::invalid(
            "infidelity is defined only for code-capacity and phenomenological circuits",
        ));
    }
    let batch = run_coherent_shots(circuit, n_shots, master_seed, resample, true)?;
    let predictions = decoder.predict_batch(&batch)?;
    infidelity_from_predictions(&batch, &predictions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::{gen_repetition_memory, gen_rotated_surface_memory, NoiseLevel, NoiseModel};
    use crate::dem::Mechanism;

    fn frac(pi_units: f64) -> f64 {
        pi_units * std::f64::consts::PI
    }

    #[test]
    fn noiseless_circuits_give_zero_rows() {
        for level in [NoiseLevel::CodeCapacity, NoiseLevel::Phenomenological, NoiseLevel::Circuit] {
            let c = gen_repetition_memory(3, 2, &NoiseModel::noiseless(3), level).unwrap();
            let b = run_coherent_shots(&c, 100, 1, 1, false).unwrap();
            assert_eq!(b.n_shots, 100);
            assert!(b.raw().iter().all(|&x| x == 0));
        }
        let c = gen_rotated_surface_memory(3, 1, &NoiseModel::noiseless(9), NoiseLevel::CodeCapacity).unwrap();
        let b = run_coherent_shots(&c, 50, 1, 1, true).unwrap();
        assert!(b.raw().iter().all(|&x| x == 0));
        assert!(b.x_expectation.unwrap().iter().all(|&x| (x - 1.0).abs() < 1e-9));
    }

    #[test]
    fn all_zero_twirled_probabilities_give_zero_batch() {
        let noise = NoiseModel::uniform(5, 0.0, NoiseMode::Twirled);
        let c = gen_repetition_memory(5, 3, &noise, NoiseLevel::Circuit).unwrap();
        let b = run_pauli_frame_shots(&c, 200, 3).unwrap();
        assert!(b.raw().iter().all(|&x| x == 0));
    }

    #[test]
    fn pauli_frame_rejects_coherent_circuit() {
        let c = gen_repetition_memory(3, 1, &NoiseModel::noiseless(3), NoiseLevel::CodeCapacity).unwrap();
        assert!(run_pauli_frame_shots(&c, 10, 0).is_err());
    }

    #[test]
    fn resampling_rejected_with_mid_circuit_measurement() {
        let c = gen_repetition_memory(3, 2, &NoiseModel::noiseless(3), NoiseLevel::Circuit).unwrap();
        assert!(run_coherent_shots(&c, 10, 0, 2, false).is_err());
        assert!(run_coherent_shots(&c, 10, 0, 0, false).is_err());
    }

    #[test]
    fn output_is_independent_of_worker_count() {
        let mut noise = NoiseModel::uniform(3, frac(0.08), NoiseMode::Coherent);
        noise.theta_anc = frac(0.05);
        noise.theta_gate = frac(0.02);
        let c = gen_repetition_memory(3, 3, &noise, NoiseLevel::Circuit).unwrap();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_coherent_shots(&c, 300, 42, 1, false).unwrap())
        };
        assert_eq!(run(1), run(3));
        let a = run_coherent_shots(&c, 300, 42, 1, false).unwrap();
        let b = run_coherent_shots(&c, 300, 43, 1, false).unwrap();
        assert_ne!(a.raw(), b.raw());
    }

    #[test]
    fn space_edge_rate_matches_twirled_probability() {
        let p: f64 = 0.05;
        let theta = p.sqrt().asin();
        let noise = NoiseModel::uniform(5, theta, NoiseMode::Twirled);
        let c = gen_repetition_memory(5, 1, &noise, NoiseLevel::CodeCapacity).unwrap();
        let n = 40_000;
        let b = run_pauli_frame_shots(&c, n, 5).unwrap();
        // First-round detector of the leftmost check fires iff data 0 xor data 1 flipped.
        let expected = 2.0 * p * (1.0 - p);
        let rate = b.detector_rates()[0];
        let sigma = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!((rate - expected).abs() < 3.0 * sigma, "{rate} vs {expected}");
    }

    #[test]
    fn coherent_and_twirled_marginals_agree_on_repetition() {
        let theta = frac(0.1);
        let n = 20_000;
        let coh = gen_repetition_memory(5, 1, &NoiseModel::uniform(5, theta, NoiseMode::Coherent), NoiseLevel::CodeCapacity).unwrap();
        let tw = gen_repetition_memory(5, 1, &NoiseModel::uniform(5, theta, NoiseMode::Twirled), NoiseLevel::CodeCapacity).unwrap();
        let a = run_coherent_shots(&coh, n, 8, 1, false).unwrap().detector_rates();
        let b = run_pauli_frame_shots(&tw, n, 9).unwrap().detector_rates();
        for (x, y) in a.iter().zip(&b) {
            let p = (x + y) / 2.0;
            let sigma = (2.0 * p * (1.0 - p) / n as f64).sqrt();
            assert!((x - y).abs() <= 3.5 * sigma, "{x} vs {y}");
        }
    }

    #[test]
    fn readout_resampling_flips_classical_records() {
        let mut noise = NoiseModel::noiseless(3);
        noise.readout_flip = 0.1;
        let c = gen_repetition_memory(3, 3, &noise, NoiseLevel::Phenomenological).unwrap();
        let b = run_coherent_shots(&c, 200, 4, 50, false).unwrap();
        assert_eq!(b.n_shots, 200 * 50);
        assert_eq!(b.rows_per_trajectory, 50);
        // A flip on the first-round record of check 0 fires detectors (0,0) and (0,1).
        let rate = b.detector_rates()[0];
        let sigma = (0.1 * 0.9 / b.n_shots as f64).sqrt();
        assert!((rate - 0.1).abs() < 4.0 * sigma, "{rate}");
    }

    #[test]
    fn dem_sampler_reproduces_mechanism_rates() {
        let dem = Dem {
            n_detectors: 3,
            mechanisms: vec![
                Mechanism { detectors: vec![0, 1], probability: 0.1, logical: false },
                Mechanism { detectors: vec![2], probability: 0.2, logical: true },
            ],
            coords: vec![],
        };
        let n = 50_000;
        let b = sample_dem(&dem, n, 1).unwrap();
        let r = b.detector_rates();
        let s = |p: f64| (p * (1.0 - p) / n as f64).sqrt();
        assert!((r[0] - 0.1).abs() < 3.0 * s(0.1));
        assert!((r[1] - r[0]).abs() < 1e-15);
        assert!((r[2] - 0.2).abs() < 3.0 * s(0.2));
        assert!((0..n).all(|i| b.observable(i, 0) == b.detector(i, 2)));
    }

    #[test]
    fn defects_skip_observable_bits() {
        let mut b = ShotBatch::new(9, 1, 0);
        let mut row = vec![false; 10];
        row[0] = true;
        row[8] = true;
        row[9] = true;
        b.push_bits(&row);
        assert_eq!(b.defects(0), vec![0, 8]);
        assert!(b.observable(0, 0));
    }
}

//! Code layouts and memory-experiment circuit generators.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::str::FromStr;

use crate::circuit::{CircuitProgram, DetectorCoord, Instruction, NoiseMode};
use crate::dem::{Dem, Mechanism};
use crate::error::{Error, Result};
use crate::sampler::frame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CodeKind {
    Repetition,
    RotatedSurface,
}

impl FromStr for CodeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "repetition" => Ok(CodeKind::Repetition),
            "rotated-surface" | "surface" => Ok(CodeKind::RotatedSurface),
            other => Err(Error::invalid(format!("unknown code `{other}`"))),
        }
    }
}

impl CodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CodeKind::Repetition => "repetition",
            CodeKind::RotatedSurface => "rotated-surface",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseLevel {
    CodeCapacity,
    Phenomenological,
    Circuit,
}

impl FromStr for NoiseLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "code-capacity" => Ok(NoiseLevel::CodeCapacity),
            "phenomenological" | "phenom" => Ok(NoiseLevel::Phenomenological),
            "circuit" => Ok(NoiseLevel::Circuit),
            other => Err(Error::invalid(format!("unknown noise level `{other}`"))),
        }
    }
}

impl NoiseLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseLevel::CodeCapacity => "code-capacity",
            NoiseLevel::Phenomenological => "phenomenological",
            NoiseLevel::Circuit => "circuit",
        }
    }
}

/// Data qubits, X-type checks and the logical X representative of a code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeLayout {
    pub kind: CodeKind,
    pub distance: usize,
    pub n_data: usize,
    /// X-type stabilizer supports, sorted.
    pub checks: Vec<Vec<usize>>,
    /// Z-type stabilizer supports; used only to prepare the encoded state.
    pub z_checks: Vec<Vec<usize>>,
    pub observable_support: Vec<usize>,
}

fn check_distance(d: usize) -> Result<()> {
    if d < 3 || d % 2 == 0 {
        return Err(Error::invalid(format!("distance must be odd and >= 3, got {d}")));
    }
    Ok(())
}

impl CodeLayout {
    pub fn repetition(d: usize) -> Result<Self> {
        check_distance(d)?;
        Ok(CodeLayout {
            kind: CodeKind::Repetition,
            distance: d,
            n_data: d,
            checks: (0..d - 1).map(|i| vec![i, i + 1]).collect(),
            z_checks: Vec::new(),
            observable_support: vec![0],
        })
    }

    /// Rotated layout on a d×d grid, data index `row * d + col`. X-checks are the
    /// plaquettes with odd corner parity plus weight-2 checks on the left and right
    /// columns; Z-checks are the complementary plaquettes with weight-2 checks on
    /// the top and bottom rows. Logical X is the top row.
    pub fn rotated_surface(d: usize) -> Result<Self> {
        check_distance(d)?;
        let q = |r: usize, c: usize| r * d + c;
        let di = d as isize;
        let mut x_checks = Vec::new();
        let mut z_checks = Vec::new();
        for i in -1..di {
            for j in -1..di {
                let mut support: Vec<usize> = [(i, j), (i, j + 1), (i + 1, j), (i + 1, j + 1)]
                    .iter()
                    .filter(|(r, c)| *r >= 0 && *r < di && *c >= 0 && *c < di)
                    .map(|&(r, c)| q(r as usize, c as usize))
                    .collect();
                let is_x = (i + j).rem_euclid(2) == 1;
                let bulk = i >= 0 && j >= 0 && i < di - 1 && j < di - 1;
                let keep = match support.len() {
                    4 => bulk,
                    // X boundaries on the left/right columns, Z on top/bottom rows.
                    2 if is_x => j == -1 || j == di - 1,
                    2 => i == -1 || i == di - 1,
                    _ => false,
                };
                if !keep {
                    continue;
                }
                support.sort_unstable();
                if is_x {
                    x_checks.push(support);
                } else {
                    z_checks.push(support);
                }
            }
        }
        x_checks.sort();
        z_checks.sort();
        Ok(CodeLayout {
            kind: CodeKind::RotatedSurface,
            distance: d,
            n_data: d * d,
            checks: x_checks,
            z_checks,
            observable_support: (0..d).collect(),
        })
    }

    pub fn new(kind: CodeKind, d: usize) -> Result<Self> {
        match kind {
            CodeKind::Repetition => Self::repetition(d),
            CodeKind::RotatedSurface => Self::rotated_surface(d),
        }
    }
}

/// Rotation angles (radians) and readout flip probability of a memory experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// One angle per data qubit, applied as e^{−iθZ} once per round.
    pub theta_data: Vec<f64>,
    pub theta_anc: f64,
    /// Gate error e^{iθ_G Z_c Z_t} after every CNOT.
    pub theta_gate: f64,
    pub readout_flip: f64,
    pub mode: NoiseMode,
}

impl NoiseModel {
    pub fn uniform(n_data: usize, theta: f64, mode: NoiseMode) -> Self {
        NoiseModel {
            theta_data: vec![theta; n_data],
            theta_anc: 0.0,
            theta_gate: 0.0,
            readout_flip: 0.0,
            mode,
        }
    }

    pub fn noiseless(n_data: usize) -> Self {
        Self::uniform(n_data, 0.0, NoiseMode::Coherent)
    }

    pub fn validate(&self, n_data: usize) -> Result<()> {
        if self.theta_data.len() != n_data {
            return Err(Error::invalid(format!(
                "{} data angles for {n_data} data qubits",
                self.theta_data.len()
            )));
        }
        let half_pi = std::f64::consts::FRAC_PI_2;
        let angles = self
            .theta_data
            .iter()
            .chain([&self.theta_anc, &self.theta_gate]);
        for &a in angles {
            if !(0.0..=half_pi).contains(&a) {
                return Err(Error::invalid(format!("angle {a} outside [0, π/2]")));
            }
        }
        if !(0.0..=0.5).contains(&self.readout_flip) {
            return Err(Error::invalid(format!(
                "readout flip {} outside [0, 0.5]",
                self.readout_flip
            )));
        }
        Ok(())
    }
}

/// Records-to-detector bookkeeping shared by the generators.
struct Builder {
    prog: CircuitProgram,
    records: usize,
    /// Record index of the most recent measurement of each check.
    last: Vec<Option<usize>>,
}

impl Builder {
    fn new(n_qubits: usize, rounds: usize, mode: NoiseMode, n_checks: usize) -> Self {
        Builder {
            prog: CircuitProgram::new(n_qubits, rounds, mode),
            records: 0,
            last: vec![None; n_checks],
        }
    }

    fn push(&mut self, ins: Instruction) -> Option<usize> {
        let rec = matches!(ins, Instruction::Measure(_) | Instruction::Mpx(_)).then(|| {
            self.records += 1;
            self.records - 1
        });
        self.prog.instructions.push(ins);
        rec
    }

    /// Detector comparing this check record against the previous one (or constant 0).
    fn compare(&mut self, check: usize, round: usize, rec: usize) {
        let mut recs: Vec<usize> = self.last[check].into_iter().collect();
        recs.push(rec);
        self.push(Instruction::Detector(recs));
        self.prog.coords.push(DetectorCoord { check, round });
        self.last[check] = Some(rec);
    }

    fn prepare_plus(&mut self, n_data: usize) {
        for q in 0..n_data {
            self.push(Instruction::Reset(q));
            self.push(Instruction::H(q));
        }
    }

    fn data_rotations(&mut self, noise: &NoiseModel) {
        for (q, &theta) in noise.theta_data.iter().enumerate() {
            self.push(Instruction::Rz(q, 2.0 * theta));
        }
    }

    /// Measures all data in the X basis; returns their records.
    fn measure_data_x(&mut self, n_data: usize) -> Vec<usize> {
        (0..n_data)
            .map(|q| {
                self.push(Instruction::H(q));
                self.push(Instruction::Measure(q)).expect("measure yields a record")
            })
            .collect()
    }

    /// Rounds of perfect stabilizer projection, readout flips on all but the last
    /// noisy round, then a final noiseless round and the data readout.
    fn projection_rounds(&mut self, layout: &CodeLayout, r: usize, noise: &NoiseModel, level: NoiseLevel) {
        for t in 0..=r {
            let noisy = t < r;
            if noisy {
                self.data_rotations(noise);
            }
            for (c, support) in layout.checks.iter().enumerate() {
                if level == NoiseLevel::Phenomenological && t + 1 < r {
                    self.push(Instruction::FlipMeas(noise.readout_flip));
                }
                let rec = self.push(Instruction::Mpx(support.clone())).expect("record");
                self.compare(c, t, rec);
            }
        }
        self.push(Instruction::ExpectX(layout.observable_support.clone()));
        let data = self.measure_data_x(layout.n_data);
        let obs = layout.observable_support.iter().map(|&q| data[q]).collect();
        self.push(Instruction::Observable(obs));
    }
}

fn check_common(layout: &CodeLayout, r: usize, noise: &NoiseModel) -> Result<()> {
    if r == 0 {
        return Err(Error::invalid("at least one round is required"));
    }
    noise.validate(layout.n_data)
}

/// X-memory repetition code. At circuit level each check is measured with its own
/// ancilla: reset, H, ancilla rotation, CNOT to the left then the right data qubit
/// (each optionally followed by the gate error), H, measure. Checks are extracted
/// one after the other within a round.
pub fn gen_repetition_memory(d: usize, r: usize, noise: &NoiseModel, level: NoiseLevel) -> Result<CircuitProgram> {
    let layout = CodeLayout::repetition(d)?;
    check_common(&layout, r, noise)?;
    let n_checks = layout.checks.len();
    if level != NoiseLevel::Circuit {
        let mut b = Builder::new(d, r, noise.mode, n_checks);
        b.prepare_plus(d);
        b.projection_rounds(&layout, r, noise, level);
        return Ok(b.prog);
    }

    let mut b = Builder::new(2 * d - 1, r, noise.mode, n_checks);
    b.prepare_plus(d);
    for t in 0..r {
        b.data_rotations(noise);
        for c in 0..n_checks {
            let anc = d + c;
            b.push(Instruction::Reset(anc));
            b.push(Instruction::H(anc));
            b.push(Instruction::Rz(anc, 2.0 * noise.theta_anc));
            for data in [c, c + 1] {
                b.push(Instruction::Cnot(anc, data));
                if noise.theta_gate > 0.0 {
                    b.push(Instruction::Rzz(anc, data, 2.0 * noise.theta_gate));
                }
            }
            b.push(Instruction::H(anc));
            let rec = b.push(Instruction::Measure(anc)).expect("record");
            b.compare(c, t, rec);
        }
    }
    let data = b.measure_data_x(d);
    for c in 0..n_checks {
        let prev = b.last[c].expect("at least one round");
        b.push(Instruction::Detector(vec![data[c], data[c + 1], prev]));
        b.prog.coords.push(DetectorCoord { check: c, round: r });
    }
    b.push(Instruction::Observable(vec![data[0]]));
    Ok(b.prog)
}

/// Largest rotated-surface distance the dense statevector engine is asked to handle.
pub const MAX_SURFACE_DISTANCE: usize = 5;

/// X-memory rotated surface code with perfect stabilizer projections. The
/// encoded |+_L⟩ is prepared by projecting |+⟩^{⊗d²} onto the +1 eigenspace of
/// every Z-check, so coherent rotations on qubits sharing a Z-check interfere.
pub fn gen_rotated_surface_memory(d: usize, r: usize, noise: &NoiseModel, level: NoiseLevel) -> Result<CircuitProgram> {
    let layout = CodeLayout::rotated_surface(d)?;
    if level == NoiseLevel::Circuit {
        return Err(Error::Capability(
            "circuit-level rotated surface code is not supported".into(),
        ));
    }
    if d > MAX_SURFACE_DISTANCE {
        return Err(Error::Capability(format!(
            "rotated surface distance {d} exceeds {MAX_SURFACE_DISTANCE}"
        )));
    }
    check_common(&layout, r, noise)?;
    let mut b = Builder::new(layout.n_data, r, noise.mode, layout.checks.len());
    b.prepare_plus(layout.n_data);
    for z in &layout.z_checks {
        b.push(Instruction::ProjZ(z.clone()));
    }
    b.projection_rounds(&layout, r, noise, level);
    Ok(b.prog)
}

pub fn gen_memory(kind: CodeKind, d: usize, r: usize, noise: &NoiseModel, level: NoiseLevel) -> Result<CircuitProgram> {
    match kind {
        CodeKind::Repetition => gen_repetition_memory(d, r, noise, level),
        CodeKind::RotatedSurface => gen_rotated_surface_memory(d, r, noise, level),
    }
}

/// Graph-like DEM of every single fault site in the circuit.
///
/// Each site is injected alone into the noiseless circuit and propagated as a
/// Pauli frame. Sites with identical detector sets merge into one mechanism,
/// whose probability is the independent combination of the twirled site
/// probabilities. Sites that trigger no detector or more than two are left out.
pub fn reference_dem(circuit: &CircuitProgram) -> Result<Dem> {
    let n_det = circuit.n_detectors();
    if n_det == 0 {
        return Err(Error::invalid("circuit has no detectors"));
    }
    let mut merged: BTreeMap<Vec<usize>, (f64, bool)> = BTreeMap::new();
    for site in frame::fault_sites(circuit) {
        let p = frame::site_probability(&circuit.instructions[site]).unwrap_or(0.0);
        let (dets, obs) = frame::inject(circuit, site);
        let set: Vec<usize> = dets
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect();
        if set.is_empty() || set.len() > 2 {
            continue;
        }
        let logical = obs.first().copied().unwrap_or(false);
        merged
            .entry(set)
            .and_modify(|(q, _)| *q = *q + p - 2.0 * *q * p)
            .or_insert((p, logical));
    }
    let mechanisms = merged
        .into_iter()
        .map(|(detectors, (probability, logical))| Mechanism {
            detectors,
            probability,
            logical,
        })
        .collect();
    Ok(Dem {
        n_detectors: n_det,
        mechanisms,
        coords: circuit.coords.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Instruction as I;

    fn count(c: &CircuitProgram, name: &str) -> usize {
        c.instructions.iter().filter(|i| i.mnemonic() == name).count()
    }

    #[test]
    fn repetition_layout_invariants() {
        for d in [3, 5, 7, 11] {
            let l = CodeLayout::repetition(d).unwrap();
            assert_eq!(l.n_data, d);
            assert_eq!(l.checks.len(), d - 1);
            for (i, c) in l.checks.iter().enumerate() {
                assert_eq!(c, &vec![i, i + 1]);
            }
        }
        assert!(CodeLayout::repetition(4).is_err());
        assert!(CodeLayout::repetition(1).is_err());
    }

    #[test]
    fn rotated_surface_layout_d3() {
        let l = CodeLayout::rotated_surface(3).unwrap();
        assert_eq!(
            l.checks,
            vec![vec![0, 3], vec![1, 2, 4, 5], vec![3, 4, 6, 7], vec![5, 8]]
        );
        assert_eq!(l.z_checks, vec![vec![0, 1, 3, 4], vec![1, 2], vec![4, 5, 7, 8], vec![6, 7]]);
        assert_eq!(l.observable_support, vec![0, 1, 2]);
    }

    #[test]
    fn rotated_surface_layout_invariants() {
        for d in [3, 5, 7] {
            let l = CodeLayout::rotated_surface(d).unwrap();
            assert_eq!(l.n_data, d * d);
            assert_eq!(l.checks.len(), (d * d - 1) / 2);
            assert_eq!(l.z_checks.len(), (d * d - 1) / 2);
            let w2 = l.checks.iter().filter(|c| c.len() == 2).count();
            assert_eq!(w2, d - 1);
            for c in l.checks.iter().chain(&l.z_checks) {
                assert!(c.windows(2).all(|w| w[0] < w[1]));
                assert!(c.iter().all(|&q| q < d * d));
            }
            // X and Z checks commute; X_L commutes with every Z check.
            for x in &l.checks {
                for z in &l.z_checks {
                    let overlap = x.iter().filter(|q| z.contains(q)).count();
                    assert_eq!(overlap % 2, 0);
                }
            }
            for z in &l.z_checks {
                let overlap = l.observable_support.iter().filter(|q| z.contains(q)).count();
                assert_eq!(overlap % 2, 0);
            }
        }
    }

    #[test]
    fn circuit_level_counts_d3() {
        let noise = NoiseModel::uniform(3, 0.1, NoiseMode::Coherent);
        let c = gen_repetition_memory(3, 1, &noise, NoiseLevel::Circuit).unwrap();
        assert_eq!(c.n_qubits, 5);
        assert_eq!(c.n_detectors(), 4);
        assert_eq!(c.n_observables(), 1);
        assert_eq!(count(&c, "RZZ"), 0);
        let round: Vec<_> = c.coords.iter().map(|x| x.round).collect();
        assert_eq!(round, vec![0, 0, 1, 1]);

        let mut gate = noise.clone();
        gate.theta_gate = 0.02;
        let cg = gen_repetition_memory(3, 1, &gate, NoiseLevel::Circuit).unwrap();
        // One gate error after each of the 4 CNOTs.
        assert_eq!(count(&cg, "CNOT"), 4);
        assert_eq!(count(&cg, "RZZ"), 4);
        for w in cg.instructions.windows(2) {
            if let I::Rzz(a, q, _) = &w[1] {
                assert_eq!(w[0], I::Cnot(*a, *q));
            }
        }
    }

    #[test]
    fn detector_count_matches_rounds() {
        let noise = NoiseModel::uniform(5, 0.1, NoiseMode::Coherent);
        for level in [NoiseLevel::CodeCapacity, NoiseLevel::Phenomenological, NoiseLevel::Circuit] {
            let c = gen_repetition_memory(5, 5, &noise, level).unwrap();
            assert_eq!(c.n_detectors(), 4 * 6);
            c.validate().unwrap();
        }
        let sn = NoiseModel::uniform(9, 0.1, NoiseMode::Coherent);
        let s = gen_rotated_surface_memory(3, 3, &sn, NoiseLevel::Phenomenological).unwrap();
        assert_eq!(s.n_detectors(), 16);
        assert_eq!(count(&s, "FLIP_MEAS"), 8);
    }

    #[test]
    fn generator_errors() {
        let noise = NoiseModel::uniform(4, 0.1, NoiseMode::Coherent);
        assert!(gen_repetition_memory(4, 1, &noise, NoiseLevel::Circuit).is_err());
        let noise = NoiseModel::uniform(3, 0.1, NoiseMode::Coherent);
        assert!(gen_repetition_memory(3, 0, &noise, NoiseLevel::Circuit).is_err());
        let neg = NoiseModel::uniform(3, -0.1, NoiseMode::Coherent);
        assert!(gen_repetition_memory(3, 1, &neg, NoiseLevel::Circuit).is_err());
        let s7 = NoiseModel::uniform(49, 0.1, NoiseMode::Coherent);
        assert!(gen_rotated_surface_memory(7, 1, &s7, NoiseLevel::CodeCapacity)
            .unwrap_err()
            .is_capability());
        let s3 = NoiseModel::uniform(9, 0.1, NoiseMode::Coherent);
        assert!(gen_rotated_surface_memory(3, 1, &s3, NoiseLevel::Circuit)
            .unwrap_err()
            .is_capability());
    }

    #[test]
    fn reference_dem_repetition_circuit_r1() {
        let noise = NoiseModel::uniform(3, 0.1, NoiseMode::Coherent);
        let c = gen_repetition_memory(3, 1, &noise, NoiseLevel::Circuit).unwrap();
        let dem = reference_dem(&c).unwrap();
        let sets: Vec<(Vec<usize>, bool)> = dem
            .mechanisms
            .iter()
            .map(|m| (m.detectors.clone(), m.logical))
            .collect();
        // Space edges D0 (logical), D0-D1, D1; time edges D0-D2, D1-D3.
        assert_eq!(
            sets,
            vec![
                (vec![0], true),
                (vec![0, 1], false),
                (vec![0, 2], false),
                (vec![1], false),
                (vec![1, 3], false),
            ]
        );
    }

    #[test]
    fn reference_dem_surface_code_capacity_d3() {
        let noise = NoiseModel::uniform(9, 0.1, NoiseMode::Coherent);
        let c = gen_rotated_surface_memory(3, 1, &noise, NoiseLevel::CodeCapacity).unwrap();
        let dem = reference_dem(&c).unwrap();
        assert_eq!(dem.mechanisms.len(), 7);
        let bulk = dem.mechanisms.iter().filter(|m| m.detectors.len() == 2).count();
        assert_eq!(bulk, 3);
        // Q1 and Q2 both hit only check 1 and flip X_L; Q6 and Q7 only check 2.
        let q12 = dem.mechanisms.iter().find(|m| m.detectors == vec![1]).unwrap();
        assert!(q12.logical);
        let p = (0.1f64).sin().powi(2);
        assert!((q12.probability - (2.0 * p - 2.0 * p * p)).abs() < 1e-15);
        let q67 = dem.mechanisms.iter().find(|m| m.detectors == vec![2]).unwrap();
        assert!(!q67.logical);
    }

    #[test]
    fn reference_dem_phenomenological_time_edges() {
        let mut noise = NoiseModel::uniform(9, 0.1, NoiseMode::Coherent);
        noise.readout_flip = 0.03;
        let c = gen_rotated_surface_memory(3, 3, &noise, NoiseLevel::Phenomenological).unwrap();
        let dem = reference_dem(&c).unwrap();
        let time = dem
            .mechanisms
            .iter()
            .filter(|m| {
                m.detectors.len() == 2
                    && dem.coords[m.detectors[0]].check == dem.coords[m.detectors[1]].check
            })
            .count();
        assert_eq!(time, 8);
    }

    #[test]
    fn reference_dem_requires_detectors() {
        let c = CircuitProgram::new(1, 0, NoiseMode::Coherent);
        assert!(reference_dem(&c).is_err());
    }

    #[test]
    fn fault_injection_matches_reference_edges() {
        let mut noise = NoiseModel::uniform(5, 0.05, NoiseMode::Coherent);
        noise.theta_anc = 0.05;
        noise.theta_gate = 0.03;
        let c = gen_repetition_memory(5, 3, &noise, NoiseLevel::Circuit).unwrap();
        let dem = reference_dem(&c).unwrap();
        for site in frame::fault_sites(&c) {
            let (dets, obs) = frame::inject(&c, site);
            let set: Vec<usize> = (0..dets.len()).filter(|&i| dets[i]).collect();
            assert!(set.len() <= 2, "site {site} triggers {set:?}");
            if set.is_empty() {
                continue;
            }
            let m = dem.mechanisms.iter().find(|m| m.detectors == set).unwrap();
            assert_eq!(m.logical, obs[0]);
        }
    }
}

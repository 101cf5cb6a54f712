//! Pauli-frame propagation through the Clifford skeleton of a circuit.
//!
//! Rotation sites are treated as fault locations: `RZ(φ)` may insert a Z,
//! `RZZ(φ)` a Z⊗Z, `FLIP_Z` a Z and `FLIP_MEAS` a classical record flip.
//! Whether a site fires is decided by the caller, so the same propagation
//! serves twirled sampling and deterministic fault injection.

use crate::circuit::{CircuitProgram, Instruction};

/// Probability that a fault site fires in the twirled channel, if the instruction is a site.
pub fn site_probability(ins: &Instruction) -> Option<f64> {
    match ins {
        Instruction::Rz(_, phi) | Instruction::Rzz(_, _, phi) => Some((phi / 2.0).sin().powi(2)),
        Instruction::FlipZ(_, p) | Instruction::FlipMeas(p) => Some(*p),
        _ => None,
    }
}

/// Runs the frame once. `fires(instruction_index, probability)` is queried at
/// every fault site in program order. Returns the flipped measurement records.
pub fn propagate<F>(circuit: &CircuitProgram, mut fires: F) -> Vec<bool>
where
    F: FnMut(usize, f64) -> bool,
{
    let n = circuit.n_qubits;
    let mut x = vec![false; n];
    let mut z = vec![false; n];
    let mut records = Vec::with_capacity(circuit.n_records());
    let mut pending = false;
    for (k, ins) in circuit.instructions.iter().enumerate() {
        match ins {
            Instruction::Reset(q) => {
                x[*q] = false;
                z[*q] = false;
            }
            Instruction::H(q) => std::mem::swap(&mut x[*q], &mut z[*q]),
            Instruction::Cnot(c, t) => {
                x[*t] ^= x[*c];
                z[*c] ^= z[*t];
            }
            Instruction::Rz(q, phi) => {
                if fires(k, (phi / 2.0).sin().powi(2)) {
                    z[*q] ^= true;
                }
            }
            Instruction::Rzz(c, t, phi) => {
                if fires(k, (phi / 2.0).sin().powi(2)) {
                    z[*c] ^= true;
                    z[*t] ^= true;
                }
            }
            Instruction::FlipZ(q, p) => {
                if fires(k, *p) {
                    z[*q] ^= true;
                }
            }
            Instruction::FlipMeas(p) => {
                pending = fires(k, *p);
            }
            Instruction::Measure(q) => {
                records.push(x[*q] ^ pending);
                z[*q] = false;
                pending = false;
            }
            Instruction::Mpx(s) => {
                let parity = s.iter().fold(false, |acc, &q| acc ^ z[q]);
                records.push(parity ^ pending);
                pending = false;
            }
            Instruction::ProjZ(_)
            | Instruction::ExpectX(_)
            | Instruction::Detector(_)
            | Instruction::Observable(_) => {}
        }
    }
    records
}

/// Parities of each detector and observable given flipped records.
pub fn evaluate_parities(circuit: &CircuitProgram, records: &[bool]) -> (Vec<bool>, Vec<bool>) {
    let parity = |recs: &[usize]| recs.iter().fold(false, |acc, &r| acc ^ records[r]);
    (
        circuit.detectors().map(parity).collect(),
        circuit.observables().map(parity).collect(),
    )
}

/// Indices of all fault sites in program order.
pub fn fault_sites(circuit: &CircuitProgram) -> Vec<usize> {
    circuit
        .instructions
        .iter()
        .enumerate()
        .filter(|(_, ins)| site_probability(ins).is_some())
        .map(|(k, _)| k)
        .collect()
}

/// Fires exactly the site at `site` and propagates it through the noiseless circuit.
pub fn inject(circuit: &CircuitProgram, site: usize) -> (Vec<bool>, Vec<bool>) {
    let records = propagate(circuit, |k, _| k == site);
    evaluate_parities(circuit, &records)
}

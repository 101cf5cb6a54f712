//! Instruction-level description of a memory experiment and its text format.
//!
//! One instruction per line, uppercase mnemonic followed by integer or real
//! arguments. `#` starts a comment. Header lines `QUBITS`, `ROUNDS` and
//! `NOISE` carry the register size, the number of syndrome rounds and the
//! noise interpretation of rotation sites.
//!
//! Measurement records are implicit: every `MEASURE` and `MPX` produces the
//! next record index, starting at 0. `FLIP_MEAS p` flips the classical value
//! of the record produced by the next measuring instruction.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How rotation sites (`RZ`, `RZZ`) are interpreted by the samplers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    /// Unitary rotations applied to the state.
    Coherent,
    /// Pauli-twirled: `RZ(2θ)` becomes a Z flip with probability sin²θ.
    Twirled,
}

impl NoiseMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseMode::Coherent => "coherent",
            NoiseMode::Twirled => "twirled",
        }
    }
}

impl FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coherent" => Ok(NoiseMode::Coherent),
            "twirled" => Ok(NoiseMode::Twirled),
            other => Err(Error::invalid(format!("unknown noise mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instruction {
    /// Reset to |0⟩.
    Reset(usize),
    H(usize),
    /// Control, target.
    Cnot(usize, usize),
    /// `RZ(φ)`: phases e^{∓iφ/2} on |0⟩/|1⟩.
    Rz(usize, f64),
    /// `RZZ(φ)`: phase e^{+iφ/2} on even parity, e^{−iφ/2} on odd parity.
    Rzz(usize, usize, f64),
    /// Stochastic Pauli Z with the given probability.
    FlipZ(usize, f64),
    /// Classical flip of the next measurement record.
    FlipMeas(f64),
    /// Z-basis measurement, produces one record.
    Measure(usize),
    /// Perfect projective measurement of a product of X operators, produces one record.
    Mpx(Vec<usize>),
    /// Projection onto the +1 eigenspace of a product of Z operators (state preparation).
    ProjZ(Vec<usize>),
    /// Evaluate ⟨X…X⟩ on the support (collected only when fidelity is requested).
    ExpectX(Vec<usize>),
    /// Parity of the listed records; zero in the noiseless circuit.
    Detector(Vec<usize>),
    /// Parity of the listed records defining a logical observable.
    Observable(Vec<usize>),
}

impl Instruction {
    pub fn mnemonic(&self) -> &'static str {
        match self {
            Instruction::Reset(_) => "RESET",
            Instruction::H(_) => "H",
            Instruction::Cnot(..) => "CNOT",
            Instruction::Rz(..) => "RZ",
            Instruction::Rzz(..) => "RZZ",
            Instruction::FlipZ(..) => "FLIP_Z",
            Instruction::FlipMeas(_) => "FLIP_MEAS",
            Instruction::Measure(_) => "MEASURE",
            Instruction::Mpx(_) => "MPX",
            Instruction::ProjZ(_) => "PROJ_Z",
            Instruction::ExpectX(_) => "EXPECT_X",
            Instruction::Detector(_) => "DETECTOR",
            Instruction::Observable(_) => "OBSERVABLE",
        }
    }

    fn produces_record(&self) -> bool {
        matches!(self, Instruction::Measure(_) | Instruction::Mpx(_))
    }
}

/// (check id, round) label of a detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DetectorCoord {
    pub check: usize,
    pub round: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitProgram {
    pub n_qubits: usize,
    pub rounds: usize,
    pub mode: NoiseMode,
    pub instructions: Vec<Instruction>,
    /// One entry per `DETECTOR`, in declaration order. May be empty for hand-written circuits.
    pub coords: Vec<DetectorCoord>,
}

impl CircuitProgram {
    pub fn new(n_qubits: usize, rounds: usize, mode: NoiseMode) -> Self {
        CircuitProgram {
            n_qubits,
            rounds,
            mode,
            instructions: Vec::new(),
            coords: Vec::new(),
        }
    }

    pub fn n_records(&self) -> usize {
        self.instructions
            .iter()
            .filter(|i| i.produces_record())
            .count()
    }

    pub fn n_detectors(&self) -> usize {
        self.detectors().count()
    }

    pub fn n_observables(&self) -> usize {
        self.observables().count()
    }

    pub fn detectors(&self) -> impl Iterator<Item = &[usize]> {
        self.instructions.iter().filter_map(|i| match i {
            Instruction::Detector(r) => Some(r.as_slice()),
            _ => None,
        })
    }

    pub fn observables(&self) -> impl Iterator<Item = &[usize]> {
        self.instructions.iter().filter_map(|i| match i {
            Instruction::Observable(r) => Some(r.as_slice()),
            _ => None,
        })
    }

    /// True when a measured qubit is acted on again, i.e. the circuit measures
    /// and reuses qubits mid-circuit.
    pub fn has_mid_circuit_measurement(&self) -> bool {
        let mut measured = vec![false; self.n_qubits];
        let hit = |m: &[bool], q: &[usize]| q.iter().any(|&q| m.get(q).copied().unwrap_or(false));
        for ins in &self.instructions {
            let touched: Vec<usize> = match ins {
                Instruction::Reset(q) | Instruction::H(q) | Instruction::Rz(q, _) | Instruction::FlipZ(q, _) => vec![*q],
                Instruction::Cnot(a, b) | Instruction::Rzz(a, b, _) => vec![*a, *b],
                Instruction::Mpx(s) | Instruction::ProjZ(s) => s.clone(),
                Instruction::Measure(q) => {
                    if hit(&measured, &[*q]) {
                        return true;
                    }
                    if let Some(m) = measured.get_mut(*q) {
                        *m = true;
                    }
                    continue;
                }
                _ => continue,
            };
            if hit(&measured, &touched) {
                return true;
            }
        }
        false
    }

    /// Checks qubit ranges, record causality and argument domains.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_qubits;
        let check_q = |q: usize| -> Result<()> {
            if q >= n {
                Err(Error::invalid(format!("qubit {q} out of range (n_qubits = {n})")))
            } else {
                Ok(())
            }
        };
        let check_prob = |p: f64| -> Result<()> {
            if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                Err(Error::invalid(format!("probability {p} outside [0, 1]")))
            } else {
                Ok(())
            }
        };
        let mut records = 0usize;
        let mut pending_flip = false;
        for ins in &self.instructions {
            match ins {
                Instruction::Reset(q) | Instruction::H(q) | Instruction::Measure(q) => check_q(*q)?,
                Instruction::Cnot(c, t) | Instruction::Rzz(c, t, _) => {
                    check_q(*c)?;
                    check_q(*t)?;
                    if c == t {
                        return Err(Error::invalid(format!(
                            "{} with equal qubits {c}",
                            ins.mnemonic()
                        )));
                    }
                }
                Instruction::Rz(q, _) => check_q(*q)?,
                Instruction::FlipZ(q, p) => {
                    check_q(*q)?;
                    check_prob(*p)?;
                }
                Instruction::FlipMeas(p) => {
                    check_prob(*p)?;
                    if pending_flip {
                        return Err(Error::invalid("two FLIP_MEAS before one measurement"));
                    }
                    pending_flip = true;
                }
                Instruction::Mpx(s) | Instruction::ProjZ(s) | Instruction::ExpectX(s) => {
                    if s.is_empty() {
                        return Err(Error::invalid(format!("{} with empty support", ins.mnemonic())));
                    }
                    for &q in s {
                        check_q(q)?;
                    }
                }
                Instruction::Detector(r) | Instruction::Observable(r) => {
                    if let Some(&bad) = r.iter().find(|&&x| x >= records) {
                        return Err(Error::invalid(format!(
                            "{} references record {bad} before it is produced",
                            ins.mnemonic()
                        )));
                    }
                }
            }
            if let Instruction::Rz(_, a) | Instruction::Rzz(_, _, a) = ins {
                if !a.is_finite() {
                    return Err(Error::invalid("non-finite rotation angle"));
                }
            }
            if ins.produces_record() {
                records += 1;
                pending_flip = false;
            }
        }
        if pending_flip {
            return Err(Error::invalid("FLIP_MEAS without a following measurement"));
        }
        if !self.coords.is_empty() && self.coords.len() != self.n_detectors() {
            return Err(Error::invalid(format!(
                "{} detector coordinates for {} detectors",
                self.coords.len(),
                self.n_detectors()
            )));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "QUBITS {}", self.n_qubits);
        let _ = writeln!(out, "ROUNDS {}", self.rounds);
        let _ = writeln!(out, "NOISE {}", self.mode.as_str());
        for ins in &self.instructions {
            out.push_str(ins.mnemonic());
            match ins {
                Instruction::Reset(q) | Instruction::H(q) | Instruction::Measure(q) => {
                    let _ = write!(out, " {q}");
                }
                Instruction::Cnot(c, t) => {
                    let _ = write!(out, " {c} {t}");
                }
                Instruction::Rz(q, a) => {
                    let _ = write!(out, " {q} {a:?}");
                }
                Instruction::Rzz(c, t, a) => {
                    let _ = write!(out, " {c} {t} {a:?}");
                }
                Instruction::FlipZ(q, p) => {
                    let _ = write!(out, " {q} {p:?}");
                }
                Instruction::FlipMeas(p) => {
                    let _ = write!(out, " {p:?}");
                }
                Instruction::Mpx(s)
                | Instruction::ProjZ(s)
                | Instruction::ExpectX(s)
                | Instruction::Detector(s)
                | Instruction::Observable(s) => {
                    for x in s {
                        let _ = write!(out, " {x}");
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut n_qubits = None;
        let mut rounds = 0;
        let mut mode = NoiseMode::Coherent;
        let mut instructions = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut toks = line.split_whitespace();
            let op = toks.next().unwrap_or_default();
            let args: Vec<&str> = toks.collect();
            let int = |i: usize| -> Result<usize> {
                args.get(i)
                    .ok_or_else(|| Error::parse(lineno, format!("{op}: missing argument {}", i + 1)))?
                    .parse::<usize>()
                    .map_err(|e| Error::parse(lineno, format!("{op}: {e}")))
            };
            let real = |i: usize| -> Result<f64> {
                args.get(i)
                    .ok_or_else(|| Error::parse(lineno, format!("{op}: missing argument {}", i + 1)))?
                    .parse::<f64>()
                    .map_err(|e| Error::parse(lineno, format!("{op}: {e}")))
            };
            let arity = |k: usize| -> Result<()> {
                if args.len() != k {
                    Err(Error::parse(
                        lineno,
                        format!("{op} expects {k} arguments, got {}", args.len()),
                    ))
                } else {
                    Ok(())
                }
            };
            let list = || -> Result<Vec<usize>> {
                args.iter()
                    .map(|a| {
                        a.parse::<usize>()
                            .map_err(|e| Error::parse(lineno, format!("{op}: {e}")))
                    })
                    .collect()
            };
            let ins = match op {
                "QUBITS" => {
                    arity(1)?;
                    n_qubits = Some(int(0)?);
                    continue;
                }
                "ROUNDS" => {
                    arity(1)?;
                    rounds = int(0)?;
                    continue;
                }
                "NOISE" => {
                    arity(1)?;
                    mode = args[0].parse().map_err(|e: Error| Error::parse(lineno, e))?;
                    continue;
                }
                "RESET" => {
                    arity(1)?;
                    Instruction::Reset(int(0)?)
                }
                "H" => {
                    arity(1)?;
                    Instruction::H(int(0)?)
                }
                "CNOT" => {
                    arity(2)?;
                    Instruction::Cnot(int(0)?, int(1)?)
                }
                "RZ" => {
                    arity(2)?;
                    Instruction::Rz(int(0)?, real(1)?)
                }
                "RZZ" => {
                    arity(3)?;
                    Instruction::Rzz(int(0)?, int(1)?, real(2)?)
                }
                "FLIP_Z" => {
                    arity(2)?;
                    Instruction::FlipZ(int(0)?, real(1)?)
                }
                "FLIP_MEAS" => {
                    arity(1)?;
                    Instruction::FlipMeas(real(0)?)
                }
                "MEASURE" => {
                    arity(1)?;
                    Instruction::Measure(int(0)?)
                }
                "MPX" => Instruction::Mpx(list()?),
                "PROJ_Z" => Instruction::ProjZ(list()?),
                "EXPECT_X" => Instruction::ExpectX(list()?),
                "DETECTOR" => Instruction::Detector(list()?),
                "OBSERVABLE" => Instruction::Observable(list()?),
                other => return Err(Error::parse(lineno, format!("unknown instruction `{other}`"))),
            };
            instructions.push(ins);
        }
        let n_qubits = n_qubits.ok_or_else(|| Error::parse(0, "missing QUBITS header"))?;
        let program = CircuitProgram {
            n_qubits,
            rounds,
            mode,
            instructions,
            coords: Vec::new(),
        };
        program.validate()?;
        Ok(program)
    }

    /// Sidecar table: one `detector <index> <check-id> <round>` line per detector.
    pub fn coords_to_text(&self) -> String {
        let mut out = String::new();
        for (i, c) in self.coords.iter().enumerate() {
            let _ = writeln!(out, "detector {i} {} {}", c.check, c.round);
        }
        out
    }

    pub fn parse_coords(text: &str) -> Result<Vec<DetectorCoord>> {
        let mut coords = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 4 || toks[0] != "detector" {
                return Err(Error::parse(lineno, "expected `detector <index> <check> <round>`"));
            }
            let nums: Vec<usize> = toks[1..]
                .iter()
                .map(|t| t.parse::<usize>().map_err(|e| Error::parse(lineno, e)))
                .collect::<Result<_>>()?;
            if nums[0] != coords.len() {
                return Err(Error::parse(lineno, format!("detector index {} out of order", nums[0])));
            }
            coords.push(DetectorCoord {
                check: nums[1],
                round: nums[2],
            });
        }
        Ok(coords)
    }
}

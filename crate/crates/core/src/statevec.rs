//! Dense statevector engine.
//!
//! Qubits sitting in a known computational basis state (freshly reset or just
//! measured) are kept outside the amplitude array as classical bits and are
//! brought back in only when a gate can create superposition on them. A
//! measured ancilla therefore costs nothing until its next reset-and-H. The
//! observable behaviour is that of a dense 2^n vector; [`StateVector::to_dense`]
//! materializes it with qubit 0 as the least-significant bit.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

pub const MAX_QUBITS: usize = 26;

/// Smallest branch probability accepted when sampling a measurement.
const MIN_BRANCH_PROB: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    H(usize),
    X(usize),
    Z(usize),
    /// Control, target.
    Cnot(usize, usize),
    /// e^{−iφ/2} on |0⟩, e^{+iφ/2} on |1⟩; RZ(2θ) = e^{−iθZ}.
    Rz(usize, f64),
    /// e^{+iφ/2} on even parity, e^{−iφ/2} on odd parity; RZZ(2θ) = e^{iθ Z⊗Z}.
    Rzz(usize, usize, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    Active(usize),
    Classical(bool),
}

#[derive(Debug, Clone)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
    slots: Vec<Slot>,
    /// Array bit position -> qubit.
    order: Vec<usize>,
    phase: Complex64,
}

#[inline]
fn insert_bit(i: usize, pos: usize, bit: bool) -> usize {
    let low = i & ((1 << pos) - 1);
    ((i >> pos) << (pos + 1)) | ((bit as usize) << pos) | low
}

impl StateVector {
    /// |0…0⟩ on `n_qubits` qubits.
    pub fn new(n_qubits: usize) -> Result<Self> {
        if n_qubits > MAX_QUBITS {
            return Err(Error::Capability(format!(
                "{n_qubits} qubits exceeds the statevector cap of {MAX_QUBITS}"
            )));
        }
        Ok(StateVector {
            n_qubits,
            amps: vec![Complex64::new(1.0, 0.0)],
            slots: vec![Slot::Classical(false); n_qubits],
            order: Vec::new(),
            phase: Complex64::new(1.0, 0.0),
        })
    }

    /// State with the given dense amplitudes (qubit 0 least significant).
    pub fn from_amplitudes(n_qubits: usize, amps: Vec<Complex64>) -> Result<Self> {
        if n_qubits > MAX_QUBITS {
            return Err(Error::Capability(format!("{n_qubits} qubits exceeds {MAX_QUBITS}")));
        }
        if amps.len() != 1 << n_qubits {
            return Err(Error::invalid(format!(
                "{} amplitudes for {n_qubits} qubits",
                amps.len()
            )));
        }
        Ok(StateVector {
            n_qubits,
            amps,
            slots: (0..n_qubits).map(Slot::Active).collect(),
            order: (0..n_qubits).collect(),
            phase: Complex64::new(1.0, 0.0),
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    /// Number of qubits currently held in the amplitude array.
    pub fn n_active(&self) -> usize {
        self.order.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn to_dense(&self) -> Vec<Complex64> {
        let mut base = 0usize;
        for (q, s) in self.slots.iter().enumerate() {
            if let Slot::Classical(true) = s {
                base |= 1 << q;
            }
        }
        let mut out = vec![Complex64::new(0.0, 0.0); 1 << self.n_qubits];
        for (i, a) in self.amps.iter().enumerate() {
            let mut k = base;
            for (p, &q) in self.order.iter().enumerate() {
                if (i >> p) & 1 == 1 {
                    k |= 1 << q;
                }
            }
            out[k] = a * self.phase;
        }
        out
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q >= self.n_qubits {
            return Err(Error::invalid(format!(
                "qubit {q} out of range for {} qubits",
                self.n_qubits
            )));
        }
        Ok(())
    }

    fn check_pair(&self, a: usize, b: usize) -> Result<()> {
        self.check_qubit(a)?;
        self.check_qubit(b)?;
        if a == b {
            return Err(Error::invalid(format!("two-qubit gate on equal qubits {a}")));
        }
        Ok(())
    }

    /// Moves a classical qubit into the amplitude array; returns its bit position.
    fn activate(&mut self, q: usize) -> usize {
        match self.slots[q] {
            Slot::Active(p) => p,
            Slot::Classical(bit) => {
                let p = self.order.len();
                let len = self.amps.len();
                self.amps.resize(2 * len, Complex64::new(0.0, 0.0));
                if bit {
                    self.amps.copy_within(0..len, len);
                    self.amps[..len].fill(Complex64::new(0.0, 0.0));
                }
                self.order.push(q);
                self.slots[q] = Slot::Active(p);
                p
            }
        }
    }

    /// Drops an active qubit whose value is `bit` in every surviving amplitude, scaling by `scale`.
    fn deactivate(&mut self, q: usize, bit: bool, scale: f64) {
        let Slot::Active(p) = self.slots[q] else {
            return;
        };
        let half = self.amps.len() / 2;
        let mut next = Vec::with_capacity(half);
        for i in 0..half {
            next.push(self.amps[insert_bit(i, p, bit)] * scale);
        }
        self.amps = next;
        self.order.remove(p);
        for (pos, &qq) in self.order.iter().enumerate().skip(p) {
            self.slots[qq] = Slot::Active(pos);
        }
        self.slots[q] = Slot::Classical(bit);
    }

    fn h_at(&mut self, p: usize) {
        let m = 1 << p;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let len = self.amps.len();
        let mut base = 0;
        while base < len {
            for i in base..base + m {
                let a = self.amps[i];
                let b = self.amps[i + m];
                self.amps[i] = (a + b) * s;
                self.amps[i + m] = (a - b) * s;
            }
            base += 2 * m;
        }
    }

    fn x_at(&mut self, p: usize) {
        let m = 1 << p;
        let len = self.amps.len();
        let mut base = 0;
        while base < len {
            for i in base..base + m {
                self.amps.swap(i, i + m);
            }
            base += 2 * m;
        }
    }

    fn diag1_at(&mut self, p: usize, f0: Complex64, f1: Complex64) {
        for (i, a) in self.amps.iter_mut().enumerate() {
            *a *= if (i >> p) & 1 == 0 { f0 } else { f1 };
        }
    }

    pub fn apply(&mut self, gate: Gate) -> Result<()> {
        match gate {
            Gate::H(q) => {
                self.check_qubit(q)?;
                let p = self.activate(q);
                self.h_at(p);
            }
            Gate::X(q) => {
                self.check_qubit(q)?;
                match self.slots[q] {
                    Slot::Classical(b) => self.slots[q] = Slot::Classical(!b),
                    Slot::Active(p) => self.x_at(p),
                }
            }
            Gate::Z(q) => {
                self.check_qubit(q)?;
                match self.slots[q] {
                    Slot::Classical(b) => {
                        if b {
                            self.phase = -self.phase;
                        }
                    }
                    Slot::Active(p) => {
                        self.diag1_at(p, Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0))
                    }
                }
            }
            Gate::Rz(q, phi) => {
                self.check_qubit(q)?;
                let f0 = Complex64::from_polar(1.0, -phi / 2.0);
                let f1 = Complex64::from_polar(1.0, phi / 2.0);
                match self.slots[q] {
                    Slot::Classical(b) => self.phase *= if b { f1 } else { f0 },
                    Slot::Active(p) => self.diag1_at(p, f0, f1),
                }
            }
            Gate::Rzz(a, b, phi) => {
                self.check_pair(a, b)?;
                let even = Complex64::from_polar(1.0, phi / 2.0);
                let odd = Complex64::from_polar(1.0, -phi / 2.0);
                match (self.slots[a], self.slots[b]) {
                    (Slot::Classical(x), Slot::Classical(y)) => {
                        self.phase *= if x ^ y { odd } else { even }
                    }
                    (Slot::Classical(x), Slot::Active(p)) | (Slot::Active(p), Slot::Classical(x)) => {
                        if x {
                            self.diag1_at(p, odd, even)
                        } else {
                            self.diag1_at(p, even, odd)
                        }
                    }
                    (Slot::Active(pa), Slot::Active(pb)) => {
                        for (i, amp) in self.amps.iter_mut().enumerate() {
                            let parity = ((i >> pa) ^ (i >> pb)) & 1;
                            *amp *= if parity == 0 { even } else { odd };
                        }
                    }
                }
            }
            Gate::Cnot(c, t) => {
                self.check_pair(c, t)?;
                match self.slots[c] {
                    Slot::Classical(false) => {}
                    Slot::Classical(true) => self.apply(Gate::X(t))?,
                    Slot::Active(_) => {
                        let pt = self.activate(t);
                        let Slot::Active(pc) = self.slots[c] else {
                            unreachable!("control stays active")
                        };
                        let (mc, mt) = (1usize << pc, 1usize << pt);
                        for i in 0..self.amps.len() {
                            if i & mc != 0 && i & mt == 0 {
                                self.amps.swap(i, i | mt);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Probability that qubit `q` reads 1.
    pub fn prob_one(&self, q: usize) -> f64 {
        match self.slots[q] {
            Slot::Classical(b) => b as u8 as f64,
            Slot::Active(p) => self
                .amps
                .iter()
                .enumerate()
                .filter(|(i, _)| (i >> p) & 1 == 1)
                .map(|(_, a)| a.norm_sqr())
                .sum(),
        }
    }

    /// Z-basis measurement by the Born rule; the state collapses and is renormalized.
    pub fn measure<R: Rng + ?Sized>(&mut self, q: usize, rng: &mut R) -> Result<bool> {
        self.check_qubit(q)?;
        if let Slot::Classical(b) = self.slots[q] {
            return Ok(b);
        }
        let p1 = self.prob_one(q).clamp(0.0, 1.0);
        let outcome = rng.gen::<f64>() < p1;
        let prob = if outcome { p1 } else { 1.0 - p1 };
        if prob < MIN_BRANCH_PROB {
            return Err(Error::Numerical(format!(
                "sampled measurement branch with probability {prob:e}"
            )));
        }
        self.deactivate(q, outcome, 1.0 / prob.sqrt());
        Ok(outcome)
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, q: usize, rng: &mut R) -> Result<()> {
        self.measure(q, rng)?;
        self.slots[q] = Slot::Classical(false);
        Ok(())
    }

    fn x_mask(&mut self, support: &[usize]) -> Result<usize> {
        let mut mask = 0usize;
        for &q in support {
            self.check_qubit(q)?;
            let p = self.activate(q);
            mask ^= 1 << p;
        }
        Ok(mask)
    }

    /// ⟨X⊗…⊗X⟩ over the support.
    pub fn expectation_x(&self, support: &[usize]) -> Result<f64> {
        let mut mask = 0usize;
        for &q in support {
            self.check_qubit(q)?;
            match self.slots[q] {
                // X maps a basis qubit to an orthogonal state.
                Slot::Classical(_) => return Ok(0.0),
                Slot::Active(p) => mask ^= 1 << p,
            }
        }
        let v: f64 = self
            .amps
            .iter()
            .enumerate()
            .map(|(i, a)| (a.conj() * self.amps[i ^ mask]).re)
            .sum();
        Ok(v)
    }

    /// Projective measurement of X⊗…⊗X on the support. Returns
    /// `(recorded, true_outcome)` where outcome `false` is the +1 eigenvalue and
    /// `recorded` is the true outcome flipped with probability `flip_prob`. The
    /// state is left in the branch of the true outcome.
    pub fn project_stabilizer<R: Rng + ?Sized>(
        &mut self,
        support: &[usize],
        rng: &mut R,
        flip_prob: f64,
    ) -> Result<(bool, bool)> {
        if support.is_empty() {
            return Err(Error::invalid("empty stabilizer support"));
        }
        let mask = self.x_mask(support)?;
        let norm = self.norm_sqr();
        let ex: f64 = self
            .amps
            .iter()
            .enumerate()
            .map(|(i, a)| (a.conj() * self.amps[i ^ mask]).re)
            .sum::<f64>()
            / norm;
        let p_minus = ((1.0 - ex) / 2.0).clamp(0.0, 1.0);
        let outcome = rng.gen::<f64>() < p_minus;
        let prob = if outcome { p_minus } else { 1.0 - p_minus };
        if prob < MIN_BRANCH_PROB {
            return Err(Error::Numerical(format!(
                "sampled stabilizer branch with probability {prob:e}"
            )));
        }
        let sign = if outcome { -1.0 } else { 1.0 };
        let scale = 0.5 / (prob * norm).sqrt();
        let old = self.amps.clone();
        for (i, a) in self.amps.iter_mut().enumerate() {
            *a = (old[i] + old[i ^ mask] * sign) * scale;
        }
        let recorded = if flip_prob > 0.0 {
            outcome ^ (rng.gen::<f64>() < flip_prob)
        } else {
            outcome
        };
        Ok((recorded, outcome))
    }

    /// Projects onto the +1 eigenspace of Z⊗…⊗Z on the support and renormalizes.
    pub fn project_z_plus(&mut self, support: &[usize]) -> Result<()> {
        let mut mask = 0usize;
        let mut fixed = false;
        for &q in support {
            self.check_qubit(q)?;
            match self.slots[q] {
                Slot::Classical(b) => fixed ^= b,
                Slot::Active(p) => mask ^= 1 << p,
            }
        }
        for (i, a) in self.amps.iter_mut().enumerate() {
            let odd = ((i & mask).count_ones() & 1 == 1) ^ fixed;
            if odd {
                *a = Complex64::new(0.0, 0.0);
            }
        }
        let norm = self.norm_sqr();
        if norm < MIN_BRANCH_PROB {
            return Err(Error::Numerical("Z projection annihilates the state".into()));
        }
        let s = 1.0 / norm.sqrt();
        for a in &mut self.amps {
            *a *= s;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1e-12;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: &[Complex64], b: &[Complex64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).norm() < tol)
    }

    /// Equal up to a global phase.
    fn close_up_to_phase(a: &[Complex64], b: &[Complex64], tol: f64) -> bool {
        let overlap: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
        (overlap.norm() - 1.0).abs() < tol
    }

    fn plus_state(n: usize) -> StateVector {
        let mut s = StateVector::new(n).unwrap();
        for q in 0..n {
            s.apply(Gate::H(q)).unwrap();
        }
        s
    }

    #[test]
    fn rz_phases_on_basis_states() {
        let theta = 0.3;
        let mut s = StateVector::new(1).unwrap();
        s.apply(Gate::Rz(0, 2.0 * theta)).unwrap();
        assert!(close(&s.to_dense(), &[c(theta.cos(), -theta.sin()), c(0.0, 0.0)], TOL));
        let mut s = StateVector::new(1).unwrap();
        s.apply(Gate::X(0)).unwrap();
        s.apply(Gate::Rz(0, 2.0 * theta)).unwrap();
        assert!(close(&s.to_dense(), &[c(0.0, 0.0), c(theta.cos(), theta.sin())], TOL));
    }

    #[test]
    fn rzz_odd_parity_phase() {
        let tg = 0.2;
        // |01⟩ means qubit 0 = 1, qubit 1 = 0 → basis index 1.
        let mut s = StateVector::new(2).unwrap();
        s.apply(Gate::X(0)).unwrap();
        s.apply(Gate::Rzz(0, 1, 2.0 * tg)).unwrap();
        let d = s.to_dense();
        assert!((d[1] - Complex64::from_polar(1.0, -tg)).norm() < TOL);
        // Same on an active register.
        let mut amps = vec![c(0.0, 0.0); 4];
        amps[1] = c(1.0, 0.0);
        let mut s = StateVector::from_amplitudes(2, amps).unwrap();
        s.apply(Gate::Rzz(0, 1, 2.0 * tg)).unwrap();
        assert!((s.to_dense()[1] - Complex64::from_polar(1.0, -tg)).norm() < TOL);
    }

    #[test]
    fn hadamard_sandwich_gives_sin_squared() {
        for theta in [0.0, 0.1, 0.5, 1.2] {
            let mut s = StateVector::new(1).unwrap();
            s.apply(Gate::H(0)).unwrap();
            s.apply(Gate::Rz(0, 2.0 * theta)).unwrap();
            s.apply(Gate::H(0)).unwrap();
            assert!((s.prob_one(0) - theta.sin().powi(2)).abs() < TOL);
        }
    }

    #[test]
    fn qubit_zero_is_least_significant() {
        let mut s = StateVector::new(3).unwrap();
        s.apply(Gate::X(1)).unwrap();
        s.apply(Gate::H(0)).unwrap();
        let d = s.to_dense();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((d[2].re - h).abs() < TOL && (d[3].re - h).abs() < TOL);
    }

    #[test]
    fn cnot_permutes_basis() {
        for (input, expected) in [(0b00usize, 0b00usize), (0b01, 0b11), (0b10, 0b10), (0b11, 0b01)] {
            let mut amps = vec![c(0.0, 0.0); 4];
            amps[input] = c(1.0, 0.0);
            let mut s = StateVector::from_amplitudes(2, amps).unwrap();
            s.apply(Gate::Cnot(0, 1)).unwrap();
            assert!((s.to_dense()[expected].re - 1.0).abs() < TOL, "{input:b}");
        }
    }

    #[test]
    fn gate_argument_errors() {
        let mut s = StateVector::new(2).unwrap();
        assert!(s.apply(Gate::H(2)).is_err());
        assert!(s.apply(Gate::Cnot(1, 1)).is_err());
        assert!(s.apply(Gate::Rzz(0, 0, 0.1)).is_err());
        assert!(StateVector::new(MAX_QUBITS + 1).unwrap_err().is_capability());
    }

    #[test]
    fn measure_basis_state_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = StateVector::new(2).unwrap();
        for _ in 0..10 {
            assert!(!s.measure(0, &mut rng).unwrap());
        }
        assert!(close(&s.to_dense(), &StateVector::new(2).unwrap().to_dense(), TOL));
    }

    #[test]
    fn measure_plus_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 20_000;
        let ones = (0..n)
            .filter(|_| {
                let mut s = plus_state(1);
                s.measure(0, &mut rng).unwrap()
            })
            .count() as f64;
        // χ² with one degree of freedom, 99.9% quantile 10.83.
        let e = n as f64 / 2.0;
        let chi2 = (ones - e).powi(2) / e + ((n as f64 - ones) - e).powi(2) / e;
        assert!(chi2 < 10.83, "chi2 = {chi2}");
    }

    #[test]
    fn measure_after_rotation_matches_sin_squared() {
        let theta: f64 = 0.4;
        let p = theta.sin().powi(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 40_000;
        let ones = (0..n)
            .filter(|_| {
                let mut s = plus_state(1);
                s.apply(Gate::Rz(0, 2.0 * theta)).unwrap();
                s.apply(Gate::H(0)).unwrap();
                s.measure(0, &mut rng).unwrap()
            })
            .count() as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((ones / n as f64 - p).abs() < 4.0 * sigma);
    }

    #[test]
    fn measurement_collapses_and_renormalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut s = plus_state(3);
        s.apply(Gate::Cnot(0, 1)).unwrap();
        let b = s.measure(0, &mut rng).unwrap();
        assert!((s.norm_sqr() - 1.0).abs() < 1e-9);
        assert_eq!(s.measure(1, &mut rng).unwrap(), b);
        assert_eq!(s.n_active(), 1);
    }

    #[test]
    fn stabilizer_eigenstate_is_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = plus_state(2);
        let before = s.to_dense();
        let (rec, truth) = s.project_stabilizer(&[0, 1], &mut rng, 0.0).unwrap();
        assert!(!rec && !truth);
        assert!(close(&s.to_dense(), &before, TOL));
    }

    #[test]
    fn rotated_stabilizer_flip_probability_is_sin_squared() {
        // Analytic: e^{−iθZ₀}|++⟩ has weight sin²θ on the −1 eigenspace of X₀X₁.
        let theta: f64 = 0.3;
        let mut s = plus_state(2);
        s.apply(Gate::Rz(0, 2.0 * theta)).unwrap();
        let d = s.to_dense();
        let mut minus = 0.0;
        for i in 0..4usize {
            let v = (d[i] - d[i ^ 0b11]) / 2.0;
            minus += v.norm_sqr();
        }
        assert!((minus - theta.sin().powi(2)).abs() < TOL);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 40_000;
        let hits = (0..n)
            .filter(|_| {
                let mut s = plus_state(2);
                s.apply(Gate::Rz(0, 2.0 * theta)).unwrap();
                s.project_stabilizer(&[0, 1], &mut rng, 0.0).unwrap().0
            })
            .count() as f64;
        let p = theta.sin().powi(2);
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits / n as f64 - p).abs() < 4.0 * sigma);
    }

    #[test]
    fn readout_flip_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 100_000;
        let q = 0.03;
        let mut s = plus_state(2);
        let mut flips = 0usize;
        for _ in 0..n {
            let (rec, truth) = s.project_stabilizer(&[0, 1], &mut rng, q).unwrap();
            assert!(!truth);
            flips += rec as usize;
        }
        let sigma = (q * (1.0 - q) / n as f64).sqrt();
        assert!((flips as f64 / n as f64 - q).abs() < 3.0 * sigma);
    }

    #[test]
    fn projection_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut s = plus_state(3);
        s.apply(Gate::Rz(1, 0.7)).unwrap();
        s.apply(Gate::Rz(2, 0.3)).unwrap();
        let (_, first) = s.project_stabilizer(&[1, 2], &mut rng, 0.0).unwrap();
        let after_first = s.to_dense();
        let (_, second) = s.project_stabilizer(&[1, 2], &mut rng, 0.0).unwrap();
        assert_eq!(first, second);
        assert!(close(&s.to_dense(), &after_first, 1e-12));
    }

    #[test]
    fn x_expectations() {
        let s = plus_state(9);
        assert!((s.expectation_x(&[0, 1, 2]).unwrap() - 1.0).abs() < TOL);
        let theta: f64 = 0.25;
        let mut s = plus_state(1);
        s.apply(Gate::Rz(0, 2.0 * theta)).unwrap();
        assert!((s.expectation_x(&[0]).unwrap() - (2.0 * theta).cos()).abs() < TOL);
        let s = StateVector::new(1).unwrap();
        assert_eq!(s.expectation_x(&[0]).unwrap(), 0.0);
        let s = StateVector::from_amplitudes(1, vec![c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert_eq!(s.expectation_x(&[0]).unwrap(), 0.0);
    }

    #[test]
    fn z_projection_prepares_codespace() {
        let mut s = plus_state(2);
        s.project_z_plus(&[0, 1]).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(close(
            &s.to_dense(),
            &[c(h, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(h, 0.0)],
            TOL
        ));
        // Coherent rotations on both qubits now interfere: sin²(θ₁+θ₂) on X₀X₁ = −1.
        let (t1, t2): (f64, f64) = (0.1, 0.15);
        s.apply(Gate::Rz(0, 2.0 * t1)).unwrap();
        s.apply(Gate::Rz(1, 2.0 * t2)).unwrap();
        let ex = s.expectation_x(&[0, 1]).unwrap();
        assert!(((1.0 - ex) / 2.0 - (t1 + t2).sin().powi(2)).abs() < TOL);
    }

    #[test]
    fn reset_returns_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = plus_state(2);
        s.reset(0, &mut rng).unwrap();
        assert_eq!(s.prob_one(0), 0.0);
        assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
    }

    fn random_state(n: usize, seed: u64) -> StateVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut amps: Vec<Complex64> = (0..1 << n)
            .map(|_| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        for a in &mut amps {
            *a /= norm;
        }
        StateVector::from_amplitudes(n, amps).unwrap()
    }

    fn arb_gate(n: usize) -> impl Strategy<Value = Gate> {
        let q = 0..n;
        prop_oneof![
            q.clone().prop_map(Gate::H),
            q.clone().prop_map(Gate::X),
            (q.clone(), -3.0f64..3.0).prop_map(|(a, phi)| Gate::Rz(a, phi)),
            (q.clone(), 1..n, -3.0f64..3.0).prop_map(move |(a, off, phi)| Gate::Rzz(a, (a + off) % n, phi)),
            (q, 1..n).prop_map(move |(a, off)| Gate::Cnot(a, (a + off) % n)),
        ]
    }

    proptest! {
        #[test]
        fn gates_preserve_norm(seed in 0u64..1000, gates in prop::collection::vec(arb_gate(4), 1..30)) {
            let mut s = random_state(4, seed);
            for g in gates {
                s.apply(g).unwrap();
                prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn rz_is_inverted_by_negative_angle(seed in 0u64..1000, q in 0usize..4, theta in -2.0f64..2.0) {
            let mut s = random_state(4, seed);
            let before = s.to_dense();
            s.apply(Gate::Rz(q, 2.0 * theta)).unwrap();
            s.apply(Gate::Rz(q, -2.0 * theta)).unwrap();
            prop_assert!(close(&s.to_dense(), &before, 1e-12));
        }

        #[test]
        fn diagonal_gates_commute(seed in 0u64..1000, a in 0usize..4, off in 1usize..4, q in 0usize..4,
                                  phi in -2.0f64..2.0, psi in -2.0f64..2.0) {
            let b = (a + off) % 4;
            let mut s1 = random_state(4, seed);
            let mut s2 = s1.clone();
            s1.apply(Gate::Rzz(a, b, phi)).unwrap();
            s1.apply(Gate::Rz(q, psi)).unwrap();
            s2.apply(Gate::Rz(q, psi)).unwrap();
            s2.apply(Gate::Rzz(a, b, phi)).unwrap();
            prop_assert!(close(&s1.to_dense(), &s2.to_dense(), 1e-12));
        }

        #[test]
        fn factored_and_dense_registers_agree(gates in prop::collection::vec(arb_gate(4), 1..30)) {
            // Same circuit on a fresh (factored) register and on an explicitly dense one.
            let mut factored = StateVector::new(4).unwrap();
            let mut dense0 = vec![c(0.0, 0.0); 16];
            dense0[0] = c(1.0, 0.0);
            let mut dense = StateVector::from_amplitudes(4, dense0).unwrap();
            for g in gates {
                factored.apply(g).unwrap();
                dense.apply(g).unwrap();
            }
            prop_assert!(close(&factored.to_dense(), &dense.to_dense(), 1e-12));
            prop_assert!(close_up_to_phase(&factored.to_dense(), &dense.to_dense(), 1e-12));
        }
    }
}

use crate::error::{Error, Result};

/// Denominators and parities closer to zero than this are treated as degenerate.
pub const DEGENERATE_DEN: f64 = 1e-9;
pub const DEGENERATE_PARITY: f64 = 1e-6;

/// An estimate together with its unclamped value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clamped {
    pub value: f64,
    pub raw: f64,
    pub clamped: bool,
}

/// Bulk edge from ⟨v_i⟩, ⟨v_j⟩, ⟨v_i v_j⟩:
/// p = 1/2 − sqrt(1/4 − (⟨v_iv_j⟩ − ⟨v_i⟩⟨v_j⟩) / (1 − 2(⟨v_i⟩ + ⟨v_j⟩) + 4⟨v_iv_j⟩)).
///
/// `raw` is 1/2 − sqrt(max(radicand, 0)), negative when the radicand exceeds 1/4.
pub fn bulk_edge_from_moments(vi: f64, vj: f64, vij: f64) -> Result<Clamped> {
    let den = 1.0 - 2.0 * (vi + vj) + 4.0 * vij;
    if den.abs() <= DEGENERATE_DEN {
        return Err(Error::Degenerate(format!(
            "bulk-edge denominator {den:e} for ⟨v_i⟩={vi}, ⟨v_j⟩={vj}, ⟨v_iv_j⟩={vij}"
        )));
    }
    let radicand = 0.25 - (vij - vi * vj) / den;
    let raw = 0.5 - radicand.max(0.0).sqrt();
    let clamped_rad = radicand.clamp(0.0, 0.25);
    Ok(Clamped {
        value: 0.5 - clamped_rad.sqrt(),
        raw,
        clamped: clamped_rad != radicand,
    })
}

/// Boundary edge: p = 1/2 + (⟨v_i⟩ − 1/2) / ∏_j (1 − 2p_ij) over the incident bulk edges.
pub fn boundary_edge_from_moments(vi: f64, incident: &[f64]) -> Result<Clamped> {
    if let Some(p) = incident.iter().find(|&&p| !(p < 0.5)) {
        return Err(Error::Degenerate(format!("incident bulk edge probability {p} ≥ 0.5")));
    }
    let prod: f64 = incident.iter().map(|p| 1.0 - 2.0 * p).product();
    if prod < DEGENERATE_DEN {
        return Err(Error::Degenerate(format!("incident-edge product {prod:e}")));
    }
    let raw = 0.5 + (vi - 0.5) / prod;
    let value = raw.clamp(0.0, 0.5);
    Ok(Clamped {
        value,
        raw,
        clamped: value != raw,
    })
}

/// θ = arcsin(√p) in radians.
pub fn angle_from_prob(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
    }
    Ok(p.sqrt().asin())
}

/// Hyperedge probability of a window from its subset parities.
///
/// With R = ∏_{∅≠T⊆S} F(T)^{(−1)^{|T|+1}}, every mechanism not containing all
/// of S cancels and 1 − 2p_S = R^{1/2^{|S|−1}}. `parity(mask)` returns F(T)
/// for the subset with bit mask `mask` over the window's detectors. The
/// result is further divided by the factors `1 − 2p_W` in `containing`.
pub fn hyperedge_from_parities<F>(size: usize, parity: F, containing: &[f64]) -> Result<Clamped>
where
    F: Fn(usize) -> f64,
{
    if !(2..=4).contains(&size) {
        return Err(Error::invalid(format!("window size {size} not in 2..=4")));
    }
    let mut log_r = 0.0;
    for mask in 1..(1usize << size) {
        let f = parity(mask);
        if f.abs() <= DEGENERATE_PARITY {
            return Err(Error::Degenerate(format!("subset parity {f:e} for mask {mask:#b}")));
        }
        if f < 0.0 {
            return Err(Error::Inconsistent(format!("negative subset parity {f} for mask {mask:#b}")));
        }
        let sign = if mask.count_ones() % 2 == 1 { 1.0 } else { -1.0 };
        log_r += sign * f.ln();
    }
    let mut factor = (log_r / (1u32 << (size - 1)) as f64).exp();
    for &pw in containing {
        factor /= 1.0 - 2.0 * pw;
    }
    let raw = (1.0 - factor) / 2.0;
    let value = raw.clamp(0.0, 0.5);
    Ok(Clamped {
        value,
        raw,
        clamped: value != raw,
    })
}

/// p′ = (p − p_h) / (1 − 2p_h).
pub fn subtract_event(p: f64, p_h: f64) -> Result<f64> {
    if p_h >= 0.5 {
        return Err(Error::invalid(format!("hyperedge probability {p_h} ≥ 0.5")));
    }
    Ok((p - p_h) / (1.0 - 2.0 * p_h))
}

/// Standard error of `f(q)` for a multinomial frequency vector `q` estimated
/// from `n` samples, by the delta method with central differences.
pub fn multinomial_std_error<F>(q: &[f64], n: u64, f: F) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    if n == 0 {
        return f64::NAN;
    }
    let k = q.len();
    let h = 1e-7;
    let mut grad = vec![0.0; k];
    let mut work = q.to_vec();
    for i in 0..k {
        work[i] = q[i] + h;
        let up = f(&work);
        work[i] = q[i] - h;
        let down = f(&work);
        work[i] = q[i];
        grad[i] = (up - down) / (2.0 * h);
    }
    // Var = gᵀ (diag q − q qᵀ) g / n.
    let mean_g: f64 = grad.iter().zip(q).map(|(g, x)| g * x).sum();
    let second: f64 = grad.iter().zip(q).map(|(g, x)| g * g * x).sum();
    ((second - mean_g * mean_g).max(0.0) / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn bulk_examples() {
        assert_eq!(bulk_edge_from_moments(0.0, 0.0, 0.0).unwrap().value, 0.0);
        let e = bulk_edge_from_moments(0.1, 0.1, 0.1).unwrap();
        assert!((e.value - 0.1).abs() < 1e-12);
        assert!(matches!(bulk_edge_from_moments(0.5, 0.5, 0.25), Err(Error::Degenerate(_))));
    }

    #[test]
    fn bulk_is_symmetric_and_records_clamps() {
        let a = bulk_edge_from_moments(0.12, 0.31, 0.05).unwrap();
        let b = bulk_edge_from_moments(0.31, 0.12, 0.05).unwrap();
        assert_eq!(a, b);
        // Anti-correlated detectors: radicand above 1/4 gives a negative raw estimate.
        let n = bulk_edge_from_moments(0.2, 0.2, 0.0).unwrap();
        assert!(n.raw < 0.0 && n.value == 0.0 && n.clamped);
    }

    #[test]
    fn boundary_examples() {
        assert_eq!(boundary_edge_from_moments(0.0, &[]).unwrap().value, 0.0);
        let e = boundary_edge_from_moments(0.1, &[0.05]).unwrap();
        assert!((e.value - (0.5 - 0.4 / 0.9)).abs() < 1e-15);
        assert!((e.value - 0.0556).abs() < 1e-4);
        assert!(boundary_edge_from_moments(0.1, &[0.5]).is_err());
        assert!(boundary_edge_from_moments(0.1, &[0.5 - 1e-12]).is_err());
    }

    #[test]
    fn angle_examples() {
        assert_eq!(angle_from_prob(0.0).unwrap(), 0.0);
        assert!((angle_from_prob(0.5).unwrap() - PI / 4.0).abs() < 1e-15);
        let p = (0.1 * PI).sin().powi(2);
        assert!((angle_from_prob(p).unwrap() - 0.1 * PI).abs() < 1e-12);
        assert!(angle_from_prob(-0.1).is_err());
        assert!(angle_from_prob(f64::NAN).is_err());
    }

    #[test]
    fn correction_examples() {
        assert_eq!(subtract_event(0.1, 0.0).unwrap(), 0.1);
        assert!((subtract_event(0.1, 0.02).unwrap() - 0.08 / 0.96).abs() < 1e-15);
        let two = subtract_event(subtract_event(0.1, 0.01).unwrap(), 0.02).unwrap();
        assert!((two - ((0.1 - 0.01) / 0.98 - 0.02) / 0.96).abs() < 1e-15);
        assert!((two - 0.07482).abs() < 1e-5);
        assert!(subtract_event(0.1, 0.5).is_err());
    }

    /// Exact pattern distribution of independent XOR mechanisms on `size` detectors.
    fn exact_distribution(size: usize, mechanisms: &[(usize, f64)]) -> Vec<f64> {
        let mut q = vec![0.0; 1 << size];
        q[0] = 1.0;
        for &(mask, p) in mechanisms {
            let mut next = vec![0.0; q.len()];
            for (pat, &x) in q.iter().enumerate() {
                next[pat] += x * (1.0 - p);
                next[pat ^ mask] += x * p;
            }
            q = next;
        }
        q
    }

    fn parity(q: &[f64], mask: usize) -> f64 {
        crate::estimate::moments::parity_from_distribution(q, mask)
    }

    #[test]
    fn triple_recovered_exactly_from_analytic_parities() {
        let q = exact_distribution(3, &[(0b001, 0.05), (0b011, 0.1), (0b110, 0.07), (0b111, 0.02), (0b100, 0.03)]);
        let e = hyperedge_from_parities(3, |m| parity(&q, m), &[]).unwrap();
        assert!((e.value - 0.02).abs() < 1e-12);
        let q = exact_distribution(3, &[(0b011, 0.1), (0b110, 0.07)]);
        assert!(hyperedge_from_parities(3, |m| parity(&q, m), &[]).unwrap().raw.abs() < 1e-12);
    }

    #[test]
    fn quad_and_containing_correction() {
        let mech = [(0b0011, 0.1), (0b1100, 0.04), (0b0111, 0.03), (0b1111, 0.015), (0b1000, 0.05)];
        let q = exact_distribution(4, &mech);
        let p4 = hyperedge_from_parities(4, |m| parity(&q, m), &[]).unwrap().value;
        assert!((p4 - 0.015).abs() < 1e-12);
        // The triple {0,1,2} alone is contaminated by the quad; dividing it out restores 0.03.
        let sub = |m: usize| parity(&q, m);
        let contaminated = hyperedge_from_parities(3, sub, &[]).unwrap().value;
        assert!((contaminated - 0.03).abs() > 1e-3);
        let p3 = hyperedge_from_parities(3, sub, &[p4]).unwrap().value;
        assert!((p3 - 0.03).abs() < 1e-12);
    }

    #[test]
    fn degenerate_parities() {
        assert!(hyperedge_from_parities(3, |_| 0.0, &[]).is_err());
        assert!(hyperedge_from_parities(3, |m| if m == 7 { -0.5 } else { 0.9 }, &[]).is_err());
        assert!(hyperedge_from_parities(5, |_| 1.0, &[]).is_err());
    }

    #[test]
    fn delta_method_matches_binomial() {
        // f = q1 is a Bernoulli mean: se = sqrt(p(1−p)/n).
        let se = multinomial_std_error(&[0.9, 0.1], 10_000, |q| q[1]);
        assert!((se - (0.09f64 / 10_000.0).sqrt()).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn plug_in_exactness(p in 0.0f64..0.45, a in 0.0f64..0.2, b in 0.0f64..0.2) {
            // Edge {i,j} with probability p plus independent boundary mechanisms a on i and b on j.
            let q = exact_distribution(2, &[(0b11, p), (0b01, a), (0b10, b)]);
            let vi = q[1] + q[3];
            let vj = q[2] + q[3];
            let est = bulk_edge_from_moments(vi, vj, q[3]).unwrap();
            prop_assert!((est.value - p).abs() < 1e-12);
            let bi = boundary_edge_from_moments(vi, &[p]).unwrap();
            prop_assert!((bi.value - a).abs() < 1e-12);
        }

        #[test]
        fn pair_window_reduces_to_bulk_formula(p in 0.0f64..0.45, a in 0.0f64..0.2) {
            let q = exact_distribution(2, &[(0b11, p), (0b01, a)]);
            let w = hyperedge_from_parities(2, |m| parity(&q, m), &[]).unwrap();
            prop_assert!((w.value - p).abs() < 1e-12);
        }
    }
}

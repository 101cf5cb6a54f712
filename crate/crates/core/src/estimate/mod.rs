//! Detector-error-model estimation from detection statistics.
//!
//! Bulk edges come from pair coincidences, boundary edges from single rates
//! divided by the incident bulk edges, and hyperedges from subset parities of
//! small detector windows. Hyperedge estimates are used only to correct the
//! edge probabilities; they never reach the decoding graph.

mod formulas;
mod moments;

pub use formulas::{
    angle_from_prob, boundary_edge_from_moments, bulk_edge_from_moments, hyperedge_from_parities,
    multinomial_std_error, subtract_event, Clamped,
};
pub use moments::{accumulate_moments, parity_from_distribution, MomentTable, MAX_WINDOW};

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::circuit::DetectorCoord;
use crate::dem::{Dem, Mechanism};
use crate::error::{Error, Result};
use crate::sampler::ShotBatch;

/// Expected coincidence count below which an edge is flagged as under-sampled.
const MIN_EXPECTED_COINCIDENCES: f64 = 100.0;
/// Bounds outside which a boundary estimate suggests missing mechanisms.
const BOUNDARY_CONSISTENT: (f64, f64) = (-0.05, 0.55);
/// Corrected edges below this are flagged.
const CORRECTED_FLOOR: f64 = -0.05;

pub fn bulk_edge_prob(m: &MomentTable, i: usize, j: usize) -> Result<Clamped> {
    let vij = m
        .pair(i, j)
        .ok_or_else(|| Error::invalid(format!("pair ({i}, {j}) was not accumulated")))?;
    bulk_edge_from_moments(m.single(i), m.single(j), vij)
}

pub fn boundary_edge_prob(m: &MomentTable, i: usize, incident_bulk: &[f64]) -> Result<Clamped> {
    boundary_edge_from_moments(m.single(i), incident_bulk)
}

/// Hyperedge probability of window `w`, with the factors of the given
/// containing larger windows divided out.
pub fn hyperedge_probs(m: &MomentTable, w: usize, containing: &[f64]) -> Result<Clamped> {
    let q = m.window_distribution(w);
    hyperedge_from_parities(m.windows()[w].len(), |mask| parity_from_distribution(&q, mask), containing)
}

/// Applies p′ = (p − p_h)/(1 − 2p_h) for the 4-point event, then the 3-point event.
pub fn apply_higher_order_correction(p: f64, p4: Option<f64>, p3: Option<f64>) -> Result<f64> {
    let mut out = p;
    if let Some(h) = p4 {
        out = subtract_event(out, h)?;
    }
    if let Some(h) = p3 {
        out = subtract_event(out, h)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOptions {
    /// Estimate 3- and 4-detector windows and correct edges with them.
    pub hyperedges: bool,
    /// Also scan every detector pair and report unexpected correlations.
    pub scan_all_pairs: bool,
    /// Hyperedges are exported to the DEM only above this many standard errors.
    pub hyperedge_export_sigma: f64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            hyperedges: false,
            scan_all_pairs: false,
            hyperedge_export_sigma: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeEstimate {
    pub detectors: Vec<usize>,
    pub logical: bool,
    /// Eq.-level estimate before hyperedge correction and clamping.
    pub raw: f64,
    /// Final probability in [0, 0.5].
    pub probability: f64,
    pub std_error: f64,
    /// arcsin(√p), radians.
    pub theta: f64,
    pub theta_std_error: f64,
    /// Windows subtracted from this edge, 4-point first.
    pub corrected_by: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HyperedgeEstimate {
    pub detectors: Vec<usize>,
    pub raw: f64,
    pub probability: f64,
    pub std_error: f64,
}

impl HyperedgeEstimate {
    /// Estimate in units of its standard error.
    pub fn z_score(&self) -> f64 {
        if self.std_error > 0.0 {
            self.raw / self.std_error
        } else if self.raw > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub kind: String,
    pub detectors: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatedDem {
    pub n_shots: u64,
    pub n_detectors: usize,
    pub edges: Vec<EdgeEstimate>,
    pub hyperedges: Vec<HyperedgeEstimate>,
    pub diagnostics: Vec<Diagnostic>,
    #[serde(skip)]
    pub coords: Vec<DetectorCoord>,
    #[serde(skip)]
    pub export_sigma: f64,
}

impl EstimatedDem {
    pub fn edge(&self, detectors: &[usize]) -> Option<&EdgeEstimate> {
        self.edges.iter().find(|e| e.detectors == detectors)
    }

    pub fn hyperedge(&self, detectors: &[usize]) -> Option<&HyperedgeEstimate> {
        self.hyperedges.iter().find(|e| e.detectors == detectors)
    }

    /// Edges with their final probabilities plus significant hyperedges.
    pub fn to_dem(&self) -> Dem {
        let mut mechanisms: Vec<Mechanism> = self
            .edges
            .iter()
            .map(|e| Mechanism {
                detectors: e.detectors.clone(),
                probability: e.probability,
                logical: e.logical,
            })
            .collect();
        mechanisms.extend(
            self.hyperedges
                .iter()
                .filter(|h| h.probability > 0.0 && h.z_score() > self.export_sigma)
                .map(|h| Mechanism {
                    detectors: h.detectors.clone(),
                    probability: h.probability,
                    logical: false,
                }),
        );
        Dem {
            n_detectors: self.n_detectors,
            mechanisms,
            coords: self.coords.clone(),
        }
    }

    pub fn diagnostics_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("estimate serializes")
    }
}

/// Adjacency of checks implied by the space-like edges of a reference DEM.
fn check_adjacency(reference: &Dem) -> BTreeSet<(usize, usize)> {
    let mut adj = BTreeSet::new();
    for m in &reference.mechanisms {
        if m.detectors.len() == 2 {
            let a = reference.coords[m.detectors[0]].check;
            let b = reference.coords[m.detectors[1]].check;
            adj.insert((a.min(b), a.max(b)));
        }
    }
    adj
}

/// 3- and 4-detector windows spanning at most two consecutive rounds whose
/// checks are pairwise equal or adjacent in the reference DEM.
pub fn enumerate_windows(reference: &Dem) -> Result<Vec<Vec<usize>>> {
    if reference.coords.len() != reference.n_detectors {
        return Err(Error::invalid("window enumeration needs detector coordinates"));
    }
    let adj = check_adjacency(reference);
    let near = |a: usize, b: usize| a == b || adj.contains(&(a.min(b), a.max(b)));
    let max_round = reference.coords.iter().map(|c| c.round).max().unwrap_or(0);
    let mut out = BTreeSet::new();
    for t in 0..=max_round {
        let layer: Vec<usize> = (0..reference.n_detectors)
            .filter(|&d| {
                let r = reference.coords[d].round;
                r == t || r == t + 1
            })
            .collect();
        let ok = |set: &[usize]| {
            set.iter().enumerate().all(|(x, &a)| {
                set[x + 1..]
                    .iter()
                    .all(|&b| near(reference.coords[a].check, reference.coords[b].check))
            })
        };
        let n = layer.len();
        for a in 0..n {
            for b in a + 1..n {
                if !ok(&[layer[a], layer[b]]) {
                    continue;
                }
                for c in b + 1..n {
                    let tri = [layer[a], layer[b], layer[c]];
                    if !ok(&tri) {
                        continue;
                    }
                    out.insert(tri.to_vec());
                    for e in c + 1..n {
                        let quad = [layer[a], layer[b], layer[c], layer[e]];
                        if ok(&quad) {
                            out.insert(quad.to_vec());
                        }
                    }
                }
            }
        }
    }
    Ok(out.into_iter().collect())
}

fn bulk_std_error(m: &MomentTable, i: usize, j: usize) -> f64 {
    let vi = m.single(i);
    let vj = m.single(j);
    let vij = m.pair(i, j).unwrap_or(0.0);
    let q = [1.0 - vi - vj + vij, vi - vij, vj - vij, vij];
    multinomial_std_error(&q, m.n_shots, |q| {
        let (vi, vj) = (q[1] + q[3], q[2] + q[3]);
        bulk_edge_from_moments(vi, vj, q[3]).map(|c| c.raw).unwrap_or(f64::NAN)
    })
}

fn theta_std_error(p: f64, se: f64) -> f64 {
    if p > 0.0 && p < 1.0 {
        se / (2.0 * (p * (1.0 - p)).sqrt())
    } else {
        f64::NAN
    }
}

/// Highest-probability window of a given size containing `set`; ties go to the
/// lexicographically smallest window.
fn best_containing<'a>(set: &[usize], size: usize, hyper: &'a [HyperedgeEstimate]) -> Option<&'a HyperedgeEstimate> {
    hyper
        .iter()
        .filter(|h| h.detectors.len() == size && set.iter().all(|d| h.detectors.contains(d)))
        .fold(None, |best: Option<&HyperedgeEstimate>, h| match best {
            Some(b) if b.probability >= h.probability => Some(b),
            _ => Some(h),
        })
}

/// Full estimation pipeline: moments, bulk edges, hyperedges and corrections,
/// then boundary edges from the corrected bulk values.
pub fn estimate_dem(batch: &ShotBatch, reference: &Dem, options: &EstimateOptions) -> Result<EstimatedDem> {
    if batch.n_detectors != reference.n_detectors {
        return Err(Error::Shape(format!(
            "batch has {} detectors, reference DEM {}",
            batch.n_detectors, reference.n_detectors
        )));
    }
    let n_det = reference.n_detectors;
    let edge_mechs: Vec<&Mechanism> = reference.mechanisms.iter().filter(|m| m.detectors.len() <= 2).collect();
    if edge_mechs.is_empty() {
        return Err(Error::invalid("reference DEM has no edges"));
    }
    let mut pairs: Vec<(usize, usize)> = reference.bulk_pairs();
    if options.scan_all_pairs {
        for a in 0..n_det {
            for b in a + 1..n_det {
                pairs.push((a, b));
            }
        }
    }
    let windows = if options.hyperedges {
        enumerate_windows(reference)?
    } else {
        Vec::new()
    };
    let moments = accumulate_moments(batch, &pairs, &windows)?;
    let n = moments.n_shots;
    let mut diagnostics = Vec::new();

    // Hyperedges: 4-point windows first, then 3-point windows with containing 4-point factors removed.
    let mut hyperedges = Vec::new();
    for size in [4usize, 3] {
        for (w, dets) in windows.iter().enumerate() {
            if dets.len() != size {
                continue;
            }
            let containing: Vec<f64> = hyperedges
                .iter()
                .filter(|h: &&HyperedgeEstimate| h.detectors.len() == size + 1 && dets.iter().all(|d| h.detectors.contains(d)))
                .map(|h| h.probability)
                .collect();
            let est = hyperedge_probs(&moments, w, &containing)?;
            let q = moments.window_distribution(w);
            let se = multinomial_std_error(&q, n, |q| {
                hyperedge_from_parities(size, |mask| parity_from_distribution(q, mask), &containing)
                    .map(|c| c.raw)
                    .unwrap_or(f64::NAN)
            });
            if est.raw < 0.0 {
                diagnostics.push(Diagnostic {
                    kind: "negative_hyperedge".into(),
                    detectors: dets.clone(),
                    value: est.raw,
                });
            }
            hyperedges.push(HyperedgeEstimate {
                detectors: dets.clone(),
                raw: est.raw,
                probability: est.value,
                std_error: se,
            });
        }
    }

    let mut edges = Vec::new();
    // Bulk edges.
    for m in edge_mechs.iter().filter(|m| m.detectors.len() == 2) {
        let (i, j) = (m.detectors[0], m.detectors[1]);
        let est = bulk_edge_prob(&moments, i, j)?;
        let se = bulk_std_error(&moments, i, j);
        if est.clamped || est.raw < 0.0 {
            diagnostics.push(Diagnostic {
                kind: if est.raw < 0.0 { "negative_bulk" } else { "clamped_bulk" }.into(),
                detectors: m.detectors.clone(),
                value: est.raw,
            });
        }
        let expected = n as f64 * est.value;
        if expected < MIN_EXPECTED_COINCIDENCES {
            diagnostics.push(Diagnostic {
                kind: "few_coincidences".into(),
                detectors: m.detectors.clone(),
                value: expected,
            });
        }
        edges.push(corrected_edge(m, est.raw, se, &hyperedges, &mut diagnostics)?);
    }

    // Boundary edges from corrected bulk values.
    let mut incident: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for e in &edges {
        for &d in &e.detectors {
            incident.entry(d).or_default().push(e.probability);
        }
    }
    for m in edge_mechs.iter().filter(|m| m.detectors.len() == 1) {
        let i = m.detectors[0];
        let inc = incident.get(&i).cloned().unwrap_or_default();
        let est = boundary_edge_prob(&moments, i, &inc)?;
        if est.raw < BOUNDARY_CONSISTENT.0 || est.raw > BOUNDARY_CONSISTENT.1 {
            diagnostics.push(Diagnostic {
                kind: "inconsistent_boundary".into(),
                detectors: m.detectors.clone(),
                value: est.raw,
            });
        } else if est.clamped {
            diagnostics.push(Diagnostic {
                kind: if est.raw < 0.0 { "negative_boundary" } else { "clamped_boundary" }.into(),
                detectors: m.detectors.clone(),
                value: est.raw,
            });
        }
        let prod: f64 = inc.iter().map(|p| 1.0 - 2.0 * p).product();
        let vi = moments.single(i);
        let var_v = vi * (1.0 - vi) / n.max(1) as f64;
        let mut var = var_v / (prod * prod);
        for (&p, e) in inc.iter().zip(edges.iter().filter(|e| e.detectors.contains(&i))) {
            let g = (vi - 0.5) * 2.0 / ((1.0 - 2.0 * p) * prod);
            var += g * g * e.std_error * e.std_error;
        }
        edges.push(corrected_edge(m, est.raw, var.sqrt(), &hyperedges, &mut diagnostics)?);
    }

    if options.scan_all_pairs {
        let known: BTreeSet<(usize, usize)> = reference.bulk_pairs().into_iter().collect();
        for &(a, b) in moments.pairs() {
            if known.contains(&(a, b)) {
                continue;
            }
            if let Ok(est) = bulk_edge_prob(&moments, a, b) {
                let se = bulk_std_error(&moments, a, b);
                if se > 0.0 && est.raw > 3.0 * se {
                    diagnostics.push(Diagnostic {
                        kind: "unexpected_pair".into(),
                        detectors: vec![a, b],
                        value: est.raw,
                    });
                }
            }
        }
    }

    Ok(EstimatedDem {
        n_shots: n,
        n_detectors: n_det,
        edges,
        hyperedges,
        diagnostics,
        coords: reference.coords.clone(),
        export_sigma: options.hyperedge_export_sigma,
    })
}

fn corrected_edge(
    m: &Mechanism,
    raw: f64,
    std_error: f64,
    hyperedges: &[HyperedgeEstimate],
    diagnostics: &mut Vec<Diagnostic>,
) -> Result<EdgeEstimate> {
    let h4 = best_containing(&m.detectors, 4, hyperedges).filter(|h| h.probability > 0.0);
    let h3 = best_containing(&m.detectors, 3, hyperedges).filter(|h| h.probability > 0.0);
    let corrected = apply_higher_order_correction(raw, h4.map(|h| h.probability), h3.map(|h| h.probability))?;
    if corrected < CORRECTED_FLOOR {
        diagnostics.push(Diagnostic {
            kind: "over_corrected".into(),
            detectors: m.detectors.clone(),
            value: corrected,
        });
    }
    let probability = corrected.clamp(0.0, 0.5);
    Ok(EdgeEstimate {
        detectors: m.detectors.clone(),
        logical: m.logical,
        raw,
        probability,
        std_error,
        theta: angle_from_prob(probability)?,
        theta_std_error: theta_std_error(probability, std_error),
        corrected_by: h4.iter().chain(h3.iter()).map(|h| h.detectors.clone()).collect(),
    })
}

//! Minimum-weight perfect matching over a decoding graph.
//!
//! Defects are matched on the complete graph of their shortest-path
//! distances. Each defect gets its own boundary copy, copies are joined to each
//! other at weight 0, and the exact blossom matcher picks the optimum. Weights
//! are handled in fixed point (see [`WEIGHT_SCALE`]) so the matcher and the
//! brute-force oracle agree exactly.

mod blossom;
mod brute;
mod paths;

pub use blossom::max_weight_matching;
pub use brute::{brute_force_match, MAX_BRUTE_FORCE_DEFECTS};
pub use paths::{quantize, AllPairs, PathGraph, INF, WEIGHT_SCALE};

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::wilson_interval;
use crate::dem::DecodingGraph;
use crate::error::{Error, Result};
use crate::sampler::ShotBatch;

/// Graphs up to this many nodes get a full all-pairs table.
const ALL_PAIRS_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partner {
    Boundary,
    /// Position in the defect list.
    Defect(usize),
}

/// Shortest-path distances among one shot's defects and from each to the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct DefectDistances {
    pub defects: Vec<usize>,
    pair: Vec<i64>,
    pair_parity: Vec<bool>,
    boundary: Vec<i64>,
    boundary_parity: Vec<bool>,
}

impl DefectDistances {
    /// Table from explicit fixed-point distances (`INF` for unreachable).
    pub fn from_parts(
        defects: Vec<usize>,
        pair: Vec<i64>,
        pair_parity: Vec<bool>,
        boundary: Vec<i64>,
        boundary_parity: Vec<bool>,
    ) -> Result<Self> {
        let k = defects.len();
        if pair.len() != k * k || pair_parity.len() != k * k || boundary.len() != k || boundary_parity.len() != k {
            return Err(Error::Shape("distance table does not match the defect count".into()));
        }
        Ok(DefectDistances {
            defects,
            pair,
            pair_parity,
            boundary,
            boundary_parity,
        })
    }

    pub fn len(&self) -> usize {
        self.defects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defects.is_empty()
    }

    pub fn pair(&self, i: usize, j: usize) -> (i64, bool) {
        let k = i * self.len() + j;
        (self.pair[k], self.pair_parity[k])
    }

    pub fn boundary(&self, i: usize) -> (i64, bool) {
        (self.boundary[i], self.boundary_parity[i])
    }

    pub(crate) fn result_from_partners(&self, partners: &[Partner]) -> MatchingResult {
        let mut pairs = Vec::new();
        let mut units = 0i64;
        let mut prediction = false;
        for (i, p) in partners.iter().enumerate() {
            match *p {
                Partner::Boundary => {
                    let (d, par) = self.boundary(i);
                    pairs.push((self.defects[i], None));
                    units += d;
                    prediction ^= par;
                }
                Partner::Defect(j) if j > i => {
                    let (d, par) = self.pair(i, j);
                    pairs.push((self.defects[i], Some(self.defects[j])));
                    units += d;
                    prediction ^= par;
                }
                Partner::Defect(_) => {}
            }
        }
        MatchingResult {
            pairs,
            weight_units: units,
            weight: units as f64 / WEIGHT_SCALE,
            prediction,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchingResult {
    /// Matched detector pairs; `None` marks a match to the boundary.
    pub pairs: Vec<(usize, Option<usize>)>,
    /// Total weight in fixed-point units.
    pub weight_units: i64,
    pub weight: f64,
    /// Predicted flip of the logical observable.
    pub prediction: bool,
}

fn check_defects(defects: &[usize], n_detectors: usize) -> Result<()> {
    if !defects.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::invalid("defects must be sorted and unique"));
    }
    if let Some(&d) = defects.iter().find(|&&d| d >= n_detectors) {
        return Err(Error::invalid(format!("defect {d} outside the graph")));
    }
    Ok(())
}

fn table_from<F>(defects: &[usize], boundary_node: usize, mut lookup: F) -> DefectDistances
where
    F: FnMut(usize, usize) -> (i64, bool),
{
    let k = defects.len();
    let mut pair = vec![INF; k * k];
    let mut pair_parity = vec![false; k * k];
    let mut boundary = Vec::with_capacity(k);
    let mut boundary_parity = Vec::with_capacity(k);
    for (i, &a) in defects.iter().enumerate() {
        for (j, &b) in defects.iter().enumerate() {
            if i != j {
                let (d, p) = lookup(a, b);
                pair[i * k + j] = d;
                pair_parity[i * k + j] = p;
            }
        }
        let (d, p) = lookup(a, boundary_node);
        boundary.push(d);
        boundary_parity.push(p);
    }
    DefectDistances {
        defects: defects.to_vec(),
        pair,
        pair_parity,
        boundary,
        boundary_parity,
    }
}

/// Shortest paths from each defect to every other defect and to the boundary.
pub fn defect_distances(graph: &DecodingGraph, defects: &[usize]) -> Result<DefectDistances> {
    check_defects(defects, graph.n_detectors)?;
    let paths = PathGraph::new(graph);
    let searches: Vec<(Vec<i64>, Vec<bool>)> = defects.iter().map(|&d| paths.search(d)).collect();
    let index = |a: usize| defects.binary_search(&a).expect("defect");
    Ok(table_from(defects, graph.boundary(), |a, b| {
        let (d, p) = &searches[index(a)];
        (d[b], p[b])
    }))
}

/// Exact minimum-weight perfect matching of the defects and their boundary copies.
pub fn mwpm(table: &DefectDistances) -> Result<MatchingResult> {
    let k = table.len();
    match k {
        0 => return Ok(table.result_from_partners(&[])),
        1 => {
            if table.boundary(0).0 >= INF {
                return Err(Error::Inconsistent(format!(
                    "defect {} cannot reach the boundary",
                    table.defects[0]
                )));
            }
            return Ok(table.result_from_partners(&[Partner::Boundary]));
        }
        2 => {
            let (b0, b1, d) = (table.boundary(0).0, table.boundary(1).0, table.pair(0, 1).0);
            if d >= INF && (b0 >= INF || b1 >= INF) {
                return Err(Error::Inconsistent("defects cannot be matched".into()));
            }
            let partners = if d < b0.saturating_add(b1) {
                [Partner::Defect(1), Partner::Defect(0)]
            } else {
                [Partner::Boundary, Partner::Boundary]
            };
            return Ok(table.result_from_partners(&partners));
        }
        _ => {}
    }

    let mut edges: Vec<(usize, usize, i64)> = Vec::new();
    for i in 0..k {
        let bi = table.boundary(i).0;
        if bi < INF {
            edges.push((i, k + i, bi));
        }
        for j in i + 1..k {
            let d = table.pair(i, j).0;
            // A pair no shorter than both boundary paths is never needed.
            if d < INF && d < bi.saturating_add(table.boundary(j).0) {
                edges.push((i, j, d));
            }
            edges.push((k + i, k + j, 0));
        }
    }
    let top = edges.iter().map(|e| e.2).max().unwrap_or(0);
    for e in &mut edges {
        e.2 = top - e.2;
    }
    let mate = max_weight_matching(2 * k, &edges, true);
    let mut partners = Vec::with_capacity(k);
    for (i, m) in mate.iter().take(k).enumerate() {
        partners.push(match m {
            Some(j) if *j < k => Partner::Defect(*j),
            Some(j) if *j == k + i => Partner::Boundary,
            _ => {
                return Err(Error::Inconsistent(format!(
                    "no perfect matching covers defect {}",
                    table.defects[i]
                )))
            }
        });
    }
    Ok(table.result_from_partners(&partners))
}

/// Matching decoder with shortest paths precomputed once per graph.
#[derive(Debug, Clone)]
pub struct Decoder {
    n_detectors: usize,
    paths: PathGraph,
    all_pairs: Option<AllPairs>,
}

impl Decoder {
    pub fn new(graph: &DecodingGraph) -> Self {
        let paths = PathGraph::new(graph);
        let all_pairs = (paths.n_nodes() <= ALL_PAIRS_LIMIT).then(|| AllPairs::new(&paths));
        Decoder {
            n_detectors: graph.n_detectors,
            paths,
            all_pairs,
        }
    }

    pub fn n_detectors(&self) -> usize {
        self.n_detectors
    }

    pub fn distances(&self, defects: &[usize]) -> Result<DefectDistances> {
        check_defects(defects, self.n_detectors)?;
        let boundary = self.n_detectors;
        Ok(match &self.all_pairs {
            Some(t) => table_from(defects, boundary, |a, b| t.get(a, b)),
            None => {
                let searches: Vec<(Vec<i64>, Vec<bool>)> = defects.iter().map(|&d| self.paths.search(d)).collect();
                table_from(defects, boundary, |a, b| {
                    let (d, p) = &searches[defects.binary_search(&a).expect("defect")];
                    (d[b], p[b])
                })
            }
        })
    }

    pub fn decode(&self, defects: &[usize]) -> Result<MatchingResult> {
        mwpm(&self.distances(defects)?)
    }

    /// Predicted observable flip of every row.
    pub fn predict_batch(&self, batch: &ShotBatch) -> Result<Vec<bool>> {
        if batch.n_detectors != self.n_detectors {
            return Err(Error::Shape(format!(
                "batch has {} detectors, decoding graph {}",
                batch.n_detectors, self.n_detectors
            )));
        }
        (0..batch.n_shots)
            .into_par_iter()
            .map_init(Vec::new, |buf, s| {
                batch.defects_into(s, buf);
                Ok(self.decode(buf)?.prediction)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecodeSummary {
    pub shots: usize,
    pub errors: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl DecodeSummary {
    pub fn from_counts(errors: usize, shots: usize) -> Self {
        let (ci_low, ci_high) = wilson_interval(errors, shots);
        DecodeSummary {
            shots,
            errors,
            rate: if shots == 0 { 0.0 } else { errors as f64 / shots as f64 },
            ci_low,
            ci_high,
        }
    }

    pub fn to_csv(&self) -> String {
        format!(
            "shots,errors,rate,ci_low,ci_high\n{},{},{:?},{:?},{:?}\n",
            self.shots, self.errors, self.rate, self.ci_low, self.ci_high
        )
    }
}

/// Decodes every row of the batch and scores predictions against the first observable.
pub fn decode_batch(graph: &DecodingGraph, batch: &ShotBatch) -> Result<(Vec<bool>, DecodeSummary)> {
    let decoder = Decoder::new(graph);
    decoder_batch(&decoder, batch)
}

pub fn decoder_batch(decoder: &Decoder, batch: &ShotBatch) -> Result<(Vec<bool>, DecodeSummary)> {
    if batch.n_observables == 0 {
        return Err(Error::Shape("batch has no observable to score against".into()));
    }
    let predictions = decoder.predict_batch(batch)?;
    let errors = predictions
        .iter()
        .enumerate()
        .filter(|&(s, &p)| p != batch.observable(s, 0))
        .count();
    Ok((predictions, DecodeSummary::from_counts(errors, batch.n_shots)))
}

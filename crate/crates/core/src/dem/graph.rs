use serde::{Deserialize, Serialize};
use std::str::FromStr;

use super::Dem;
use crate::error::{Error, Result};

/// Smallest probability used when turning an estimate into a weight.
pub const P_MIN: f64 = 1e-6;
/// Largest probability used when turning an estimate into a weight.
pub const P_MAX: f64 = 0.5 - 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightPolicy {
    /// w = log((1−p)/p) from the mechanism probability.
    Estimated,
    /// Every edge has weight 1.
    Uniform,
}

impl FromStr for WeightPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "estimated" => Ok(WeightPolicy::Estimated),
            "uniform" => Ok(WeightPolicy::Uniform),
            other => Err(Error::invalid(format!("unknown weight policy `{other}`"))),
        }
    }
}

impl WeightPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightPolicy::Estimated => "estimated",
            WeightPolicy::Uniform => "uniform",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphEdge {
    pub a: usize,
    /// Second endpoint; the boundary node for boundary edges.
    pub b: usize,
    pub weight: f64,
    pub logical: bool,
    /// Index of the source mechanism in the DEM.
    pub mechanism: usize,
}

/// Detectors plus one shared boundary node (index `n_detectors`).
#[derive(Debug, Clone, PartialEq)]
pub struct DecodingGraph {
    pub n_detectors: usize,
    pub edges: Vec<GraphEdge>,
}

impl DecodingGraph {
    pub fn boundary(&self) -> usize {
        self.n_detectors
    }

    pub fn n_nodes(&self) -> usize {
        self.n_detectors + 1
    }

    /// Adjacency lists `(neighbour, edge index)` per node.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.n_nodes()];
        for (k, e) in self.edges.iter().enumerate() {
            adj[e.a].push((e.b, k));
            adj[e.b].push((e.a, k));
        }
        adj
    }
}

/// Weight of an edge with probability `p` after clamping to [P_MIN, P_MAX].
pub fn edge_weight(p: f64) -> f64 {
    let p = if p.is_nan() { P_MAX } else { p.clamp(P_MIN, P_MAX) };
    ((1.0 - p) / p).ln()
}

/// Keeps size-1 and size-2 mechanisms; hyperedges never enter the graph.
pub fn build_decoding_graph(dem: &Dem, policy: WeightPolicy) -> Result<DecodingGraph> {
    let boundary = dem.n_detectors;
    let edges: Vec<GraphEdge> = dem
        .mechanisms
        .iter()
        .enumerate()
        .filter(|(_, m)| m.detectors.len() <= 2)
        .map(|(k, m)| GraphEdge {
            a: m.detectors[0],
            b: m.detectors.get(1).copied().unwrap_or(boundary),
            weight: match policy {
                WeightPolicy::Uniform => 1.0,
                WeightPolicy::Estimated => edge_weight(m.probability),
            },
            logical: m.logical,
            mechanism: k,
        })
        .collect();
    if edges.is_empty() {
        return Err(Error::invalid("DEM has no edge-like mechanisms"));
    }
    Ok(DecodingGraph {
        n_detectors: dem.n_detectors,
        edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dem::Mechanism;
    use proptest::prelude::*;

    fn mech(d: &[usize], p: f64) -> Mechanism {
        Mechanism {
            detectors: d.to_vec(),
            probability: p,
            logical: false,
        }
    }

    #[test]
    fn weight_closed_forms() {
        assert!((edge_weight(0.1) - 9f64.ln()).abs() < 1e-15);
        assert!((edge_weight(0.1) - 2.1972).abs() < 1e-4);
        assert!(edge_weight(0.5 - 1e-9).abs() < 1e-5);
        let wmax = ((1.0 - P_MIN) / P_MIN).ln();
        assert_eq!(edge_weight(0.0), wmax);
        assert_eq!(edge_weight(-0.3), wmax);
        assert!(edge_weight(0.5) > 0.0);
        assert!(edge_weight(0.9) > 0.0);
    }

    #[test]
    fn uniform_policy_sets_unit_weights_and_drops_hyperedges() {
        let dem = Dem {
            n_detectors: 4,
            mechanisms: vec![mech(&[0], 0.2), mech(&[0, 1], 0.01), mech(&[1, 2, 3], 0.3)],
            coords: vec![],
        };
        let g = build_decoding_graph(&dem, WeightPolicy::Uniform).unwrap();
        assert_eq!(g.edges.len(), 2);
        assert!(g.edges.iter().all(|e| e.weight == 1.0));
        assert_eq!(g.edges[0].b, g.boundary());
        let est = build_decoding_graph(&dem, WeightPolicy::Estimated).unwrap();
        assert!(est.edges.iter().all(|e| e.a < 4 && e.b <= 4));
    }

    #[test]
    fn hyperedge_only_dem_is_rejected() {
        let dem = Dem {
            n_detectors: 3,
            mechanisms: vec![mech(&[0, 1, 2], 0.1)],
            coords: vec![],
        };
        assert!(build_decoding_graph(&dem, WeightPolicy::Estimated).is_err());
    }

    proptest! {
        #[test]
        fn weights_are_monotone(p1 in 1e-6f64..0.4999, dp in 1e-6f64..0.1) {
            let p2 = (p1 + dp).min(0.5 - 1e-6);
            prop_assume!(p2 > p1);
            prop_assert!(edge_weight(p1) > edge_weight(p2));
        }
    }
}

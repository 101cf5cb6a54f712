//! Detector error models: data model, text format, decoding graphs and shot files.

mod graph;
mod shots;

pub use graph::{build_decoding_graph, DecodingGraph, GraphEdge, WeightPolicy, P_MAX, P_MIN};
pub use shots::{read_shots, read_shots_from, write_shots, write_shots_to, ShotFormat};

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::circuit::DetectorCoord;
use crate::error::{Error, Result};

/// One error mechanism: the detectors it flips, its probability and whether it
/// flips the logical observable.
#[derive(Debug, Clone, PartialEq)]
pub struct Mechanism {
    pub detectors: Vec<usize>,
    pub probability: f64,
    pub logical: bool,
}

impl Mechanism {
    pub fn is_boundary(&self) -> bool {
        self.detectors.len() == 1
    }

    pub fn is_hyperedge(&self) -> bool {
        self.detectors.len() >= 3
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dem {
    pub n_detectors: usize,
    pub mechanisms: Vec<Mechanism>,
    /// Either empty or one entry per detector.
    pub coords: Vec<DetectorCoord>,
}

impl Dem {
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for m in &self.mechanisms {
            if m.detectors.is_empty() || m.detectors.len() > 4 {
                return Err(Error::invalid(format!(
                    "mechanism with {} detectors",
                    m.detectors.len()
                )));
            }
            if !m.detectors.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::invalid("mechanism detectors must be sorted and unique"));
            }
            if let Some(&bad) = m.detectors.iter().find(|&&d| d >= self.n_detectors) {
                return Err(Error::invalid(format!("detector D{bad} out of range")));
            }
            if !m.probability.is_finite() || !(0.0..=1.0).contains(&m.probability) {
                return Err(Error::invalid(format!("probability {} outside [0, 1]", m.probability)));
            }
            if !seen.insert(m.detectors.clone()) {
                return Err(Error::invalid(format!("duplicate mechanism {:?}", m.detectors)));
            }
        }
        if !self.coords.is_empty() && self.coords.len() != self.n_detectors {
            return Err(Error::invalid("coordinate table does not cover every detector"));
        }
        Ok(())
    }

    pub fn find(&self, detectors: &[usize]) -> Option<&Mechanism> {
        self.mechanisms.iter().find(|m| m.detectors == detectors)
    }

    /// Detector adjacency pairs of all size-2 mechanisms.
    pub fn bulk_pairs(&self) -> Vec<(usize, usize)> {
        self.mechanisms
            .iter()
            .filter(|m| m.detectors.len() == 2)
            .map(|m| (m.detectors[0], m.detectors[1]))
            .collect()
    }

    /// Text form: `detector D<i> <check> <round>` lines followed by one
    /// `error(<p>) D<i> … [L0]` line per mechanism.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, c) in self.coords.iter().enumerate() {
            let _ = writeln!(out, "detector D{i} {} {}", c.check, c.round);
        }
        for m in &self.mechanisms {
            let _ = write!(out, "error({:?})", m.probability);
            for d in &m.detectors {
                let _ = write!(out, " D{d}");
            }
            if m.logical {
                out.push_str(" L0");
            }
            out.push('\n');
        }
        out
    }

    /// Parses the text form. The detector count is the larger of the highest
    /// referenced index + 1 and the number of coordinate lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut coords: Vec<DetectorCoord> = Vec::new();
        let mut mechanisms = Vec::new();
        let mut max_det: Option<usize> = None;
        let det_index = |tok: &str, lineno: usize| -> Result<usize> {
            tok.strip_prefix('D')
                .ok_or_else(|| Error::parse(lineno, format!("expected D<index>, got `{tok}`")))?
                .parse::<usize>()
                .map_err(|e| Error::parse(lineno, format!("bad detector `{tok}`: {e}")))
        };
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks[0] == "detector" {
                if toks.len() != 4 {
                    return Err(Error::parse(lineno, "expected `detector D<i> <check> <round>`"));
                }
                let i = det_index(toks[1], lineno)?;
                if i != coords.len() {
                    return Err(Error::parse(lineno, format!("detector D{i} out of order")));
                }
                let num = |t: &str| t.parse::<usize>().map_err(|e| Error::parse(lineno, e));
                coords.push(DetectorCoord {
                    check: num(toks[2])?,
                    round: num(toks[3])?,
                });
                continue;
            }
            let p_str = toks[0]
                .strip_prefix("error(")
                .and_then(|s| s.strip_suffix(')'))
                .ok_or_else(|| Error::parse(lineno, format!("unrecognised line `{line}`")))?;
            let probability: f64 = p_str
                .parse()
                .map_err(|e| Error::parse(lineno, format!("bad probability `{p_str}`: {e}")))?;
            if !(0.0..=1.0).contains(&probability) {
                return Err(Error::parse(lineno, format!("probability {probability} outside [0, 1]")));
            }
            let mut detectors = Vec::new();
            let mut logical = false;
            for tok in &toks[1..] {
                if *tok == "L0" {
                    logical = true;
                } else {
                    detectors.push(det_index(tok, lineno)?);
                }
            }
            if detectors.is_empty() {
                return Err(Error::parse(lineno, "mechanism without detectors"));
            }
            detectors.sort_unstable();
            detectors.dedup();
            max_det = max_det.max(detectors.last().copied());
            mechanisms.push(Mechanism {
                detectors,
                probability,
                logical,
            });
        }
        let n_detectors = coords.len().max(max_det.map_or(0, |m| m + 1));
        let dem = Dem {
            n_detectors,
            mechanisms,
            coords,
        };
        dem.validate().map_err(|e| Error::parse(0, e))?;
        Ok(dem)
    }
}

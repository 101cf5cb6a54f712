use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sampler::ShotBatch;

/// Largest window handled by the pattern histograms.
pub const MAX_WINDOW: usize = 4;

/// Detector firing counts over a batch: singles, coincidences of candidate
/// pairs, and the full firing-pattern histogram of each window.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTable {
    pub n_shots: u64,
    pub n_detectors: usize,
    singles: Vec<u64>,
    pairs: Vec<(usize, usize)>,
    pair_counts: Vec<u64>,
    pair_index: HashMap<(usize, usize), usize>,
    windows: Vec<Vec<usize>>,
    /// Pattern counts per window; bit `b` of the pattern is the `b`-th window detector.
    /// The all-zero pattern is not stored and follows from `n_shots`.
    window_counts: Vec<[u64; 16]>,
}

impl MomentTable {
    pub fn new(n_detectors: usize, pairs: &[(usize, usize)], windows: &[Vec<usize>]) -> Result<Self> {
        let mut norm_pairs = Vec::with_capacity(pairs.len());
        let mut pair_index = HashMap::new();
        for &(a, b) in pairs {
            let key = (a.min(b), a.max(b));
            if a == b || key.1 >= n_detectors {
                return Err(Error::invalid(format!("bad candidate pair ({a}, {b})")));
            }
            if !pair_index.contains_key(&key) {
                pair_index.insert(key, norm_pairs.len());
                norm_pairs.push(key);
            }
        }
        for w in windows {
            if w.is_empty() || w.len() > MAX_WINDOW || !w.windows(2).all(|x| x[0] < x[1]) {
                return Err(Error::invalid(format!("bad window {w:?}")));
            }
            if w.iter().any(|&d| d >= n_detectors) {
                return Err(Error::invalid(format!("window {w:?} out of range")));
            }
        }
        Ok(MomentTable {
            n_shots: 0,
            n_detectors,
            singles: vec![0; n_detectors],
            pair_counts: vec![0; norm_pairs.len()],
            pairs: norm_pairs,
            pair_index,
            windows: windows.to_vec(),
            window_counts: vec![[0; 16]; windows.len()],
        })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn windows(&self) -> &[Vec<usize>] {
        &self.windows
    }

    /// Adds the counts of another table built over the same candidates.
    pub fn merge(&mut self, other: &MomentTable) -> Result<()> {
        if self.n_detectors != other.n_detectors || self.pairs != other.pairs || self.windows != other.windows {
            return Err(Error::Shape("moment tables cover different candidates".into()));
        }
        self.n_shots += other.n_shots;
        for (a, b) in self.singles.iter_mut().zip(&other.singles) {
            *a += b;
        }
        for (a, b) in self.pair_counts.iter_mut().zip(&other.pair_counts) {
            *a += b;
        }
        for (a, b) in self.window_counts.iter_mut().zip(&other.window_counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    fn denom(&self) -> f64 {
        self.n_shots.max(1) as f64
    }

    /// ⟨v_i⟩.
    pub fn single(&self, i: usize) -> f64 {
        self.singles[i] as f64 / self.denom()
    }

    pub fn single_count(&self, i: usize) -> u64 {
        self.singles[i]
    }

    /// ⟨v_i v_j⟩, if the pair was a candidate.
    pub fn pair(&self, i: usize, j: usize) -> Option<f64> {
        self.pair_count(i, j).map(|c| c as f64 / self.denom())
    }

    pub fn pair_count(&self, i: usize, j: usize) -> Option<u64> {
        self.pair_index
            .get(&(i.min(j), i.max(j)))
            .map(|&k| self.pair_counts[k])
    }

    /// Firing-pattern probabilities of a window, indexed by pattern.
    pub fn window_distribution(&self, w: usize) -> Vec<f64> {
        let size = 1usize << self.windows[w].len();
        let n = self.denom();
        let counts = &self.window_counts[w];
        let nonzero: u64 = counts[1..size].iter().sum();
        let mut q: Vec<f64> = counts[..size].iter().map(|&c| c as f64 / n).collect();
        q[0] = (self.n_shots - nonzero) as f64 / n;
        q
    }

    /// F(T) = 1 − 2⟨⊕_{i∈T} v_i⟩ for the subset `mask` of window `w`.
    pub fn window_parity(&self, w: usize, mask: usize) -> f64 {
        parity_from_distribution(&self.window_distribution(w), mask)
    }

    fn accumulate_rows(&mut self, batch: &ShotBatch, rows: std::ops::Range<usize>, index: &Lookup) {
        let mut defects = Vec::new();
        let mut fired = vec![false; self.n_detectors];
        let mut patterns = vec![0u8; self.windows.len()];
        let mut touched = Vec::new();
        for s in rows {
            batch.defects_into(s, &mut defects);
            for &d in &defects {
                fired[d] = true;
                self.singles[d] += 1;
            }
            for &d in &defects {
                for &(other, k) in &index.partners[d] {
                    if other > d && fired[other] {
                        self.pair_counts[k] += 1;
                    }
                }
                for &(w, bit) in &index.windows_of[d] {
                    if patterns[w] == 0 {
                        touched.push(w);
                    }
                    patterns[w] |= 1 << bit;
                }
            }
            for &w in &touched {
                self.window_counts[w][patterns[w] as usize] += 1;
                patterns[w] = 0;
            }
            touched.clear();
            for &d in &defects {
                fired[d] = false;
            }
            self.n_shots += 1;
        }
    }
}

/// 1 − 2·P(odd parity on `mask`) for a pattern distribution.
pub fn parity_from_distribution(q: &[f64], mask: usize) -> f64 {
    let odd: f64 = q
        .iter()
        .enumerate()
        .filter(|(pat, _)| (pat & mask).count_ones() % 2 == 1)
        .map(|(_, &x)| x)
        .sum();
    1.0 - 2.0 * odd
}

struct Lookup {
    partners: Vec<Vec<(usize, usize)>>,
    windows_of: Vec<Vec<(usize, usize)>>,
}

impl Lookup {
    fn new(table: &MomentTable) -> Self {
        let mut partners = vec![Vec::new(); table.n_detectors];
        for (k, &(a, b)) in table.pairs.iter().enumerate() {
            partners[a].push((b, k));
            partners[b].push((a, k));
        }
        let mut windows_of = vec![Vec::new(); table.n_detectors];
        for (w, dets) in table.windows.iter().enumerate() {
            for (bit, &d) in dets.iter().enumerate() {
                windows_of[d].push((w, bit));
            }
        }
        Lookup { partners, windows_of }
    }
}

const BLOCK: usize = 1 << 14;

/// Single pass over the batch, parallel over blocks of rows.
pub fn accumulate_moments(batch: &ShotBatch, pairs: &[(usize, usize)], windows: &[Vec<usize>]) -> Result<MomentTable> {
    let empty = MomentTable::new(batch.n_detectors, pairs, windows)?;
    let index = Lookup::new(&empty);
    let n_blocks = batch.n_shots.div_ceil(BLOCK);
    let parts: Vec<MomentTable> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut t = empty.clone();
            let end = ((b + 1) * BLOCK).min(batch.n_shots);
            t.accumulate_rows(batch, b * BLOCK..end, &index);
            t
        })
        .collect();
    let mut total = empty;
    for p in &parts {
        total.merge(p)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(rows: &[&[bool]]) -> ShotBatch {
        let mut b = ShotBatch::new(rows[0].len(), 0, 0);
        for r in rows {
            b.push_bits(r);
        }
        b
    }

    #[test]
    fn all_zero_batch() {
        let b = batch(&[&[false; 4][..]; 10]);
        let m = accumulate_moments(&b, &[(0, 1)], &[vec![0, 1, 2]]).unwrap();
        assert_eq!(m.single(0), 0.0);
        assert_eq!(m.pair(0, 1), Some(0.0));
        for mask in 0..8 {
            assert_eq!(m.window_parity(0, mask), 1.0);
        }
    }

    #[test]
    fn coincidence_counts() {
        let mut rows: Vec<&[bool]> = vec![&[true, true, false]; 10];
        rows.extend(vec![&[false, false, false][..]; 90]);
        let m = accumulate_moments(&batch(&rows), &[(1, 0)], &[vec![0, 1, 2]]).unwrap();
        assert!((m.pair(0, 1).unwrap() - 0.1).abs() < 1e-15);
        assert!((m.single(1) - 0.1).abs() < 1e-15);
        assert_eq!(m.pair(0, 2), None);
        // Parity of {0,1} never odd; of {0} odd in 10% of shots.
        assert!((m.window_parity(0, 0b011) - 1.0).abs() < 1e-15);
        assert!((m.window_parity(0, 0b001) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn merge_equals_union() {
        let rows: Vec<Vec<bool>> = (0..50u32).map(|i| (0..5).map(|k| (i * 7 + k * 3) % 5 == 0).collect()).collect();
        let refs: Vec<&[bool]> = rows.iter().map(|r| r.as_slice()).collect();
        let pairs = [(0, 1), (2, 3), (1, 4)];
        let windows = [vec![0, 1, 2], vec![1, 2, 3, 4]];
        let whole = accumulate_moments(&batch(&refs), &pairs, &windows).unwrap();
        let mut a = accumulate_moments(&batch(&refs[..20]), &pairs, &windows).unwrap();
        let b = accumulate_moments(&batch(&refs[20..]), &pairs, &windows).unwrap();
        a.merge(&b).unwrap();
        assert_eq!(a, whole);
        let other = accumulate_moments(&batch(&refs), &pairs[..1], &windows).unwrap();
        assert!(a.merge(&other).is_err());
    }

    #[test]
    fn invalid_candidates() {
        assert!(MomentTable::new(3, &[(0, 0)], &[]).is_err());
        assert!(MomentTable::new(3, &[(0, 3)], &[]).is_err());
        assert!(MomentTable::new(3, &[], &[vec![2, 1]]).is_err());
        assert!(MomentTable::new(6, &[], &[vec![0, 1, 2, 3, 4]]).is_err());
    }
}

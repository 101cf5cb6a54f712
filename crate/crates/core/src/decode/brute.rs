use super::{DefectDistances, MatchingResult, Partner};
use crate::decode::paths::INF;
use crate::error::{Error, Result};

pub const MAX_BRUTE_FORCE_DEFECTS: usize = 14;

struct Search<'a> {
    t: &'a DefectDistances,
    best: i64,
    best_choice: Vec<Partner>,
    choice: Vec<Partner>,
    /// Cheapest way to dispose of each defect, for the lower bound.
    cheapest: Vec<i64>,
}

impl Search<'_> {
    fn recurse(&mut self, used: u32, cost: i64) {
        let k = self.t.len();
        let Some(i) = (0..k).find(|&i| used & (1 << i) == 0) else {
            if cost < self.best {
                self.best = cost;
                self.best_choice = self.choice.clone();
            }
            return;
        };
        // Each remaining defect costs at least half its cheapest option.
        let bound: i64 = (0..k)
            .filter(|&j| used & (1 << j) == 0)
            .map(|j| self.cheapest[j] / 2)
            .sum();
        if cost.saturating_add(bound) >= self.best {
            return;
        }
        let b = self.t.boundary(i).0;
        if b < INF {
            self.choice[i] = Partner::Boundary;
            self.recurse(used | (1 << i), cost + b);
        }
        for j in i + 1..k {
            if used & (1 << j) != 0 {
                continue;
            }
            let d = self.t.pair(i, j).0;
            if d >= INF {
                continue;
            }
            self.choice[i] = Partner::Defect(j);
            self.choice[j] = Partner::Defect(i);
            self.recurse(used | (1 << i) | (1 << j), cost + d);
        }
    }
}

/// Exhaustive minimum-weight pairing: every defect is matched either to the
/// boundary or to another defect. Intended as an oracle for small instances.
pub fn brute_force_match(table: &DefectDistances) -> Result<MatchingResult> {
    let k = table.len();
    if k > MAX_BRUTE_FORCE_DEFECTS {
        return Err(Error::invalid(format!(
            "{k} defects exceed the brute-force limit of {MAX_BRUTE_FORCE_DEFECTS}"
        )));
    }
    let cheapest = (0..k)
        .map(|i| {
            let mut c = table.boundary(i).0;
            for j in 0..k {
                if j != i {
                    c = c.min(table.pair(i, j).0);
                }
            }
            c.min(INF)
        })
        .collect();
    let mut s = Search {
        t: table,
        best: i64::MAX,
        best_choice: Vec::new(),
        choice: vec![Partner::Boundary; k],
        cheapest,
    };
    s.recurse(0, 0);
    if s.best == i64::MAX {
        return Err(Error::Inconsistent("no perfect matching exists for these defects".into()));
    }
    Ok(table.result_from_partners(&s.best_choice))
}

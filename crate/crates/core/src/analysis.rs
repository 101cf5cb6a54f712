//! Logical-error-rate sweeps, threshold crossings and decoder-policy comparison.

use serde::{Deserialize, Serialize};

use crate::circuit::NoiseMode;
use crate::codes::{gen_memory, reference_dem, CodeKind, NoiseLevel, NoiseModel};
use crate::decode::{decoder_batch, Decoder};
use crate::dem::{build_decoding_graph, WeightPolicy};
use crate::error::{Error, Result};
use crate::estimate::{estimate_dem, EstimateOptions};
use crate::sampler::{run_coherent_shots, run_pauli_frame_shots};

const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval at 95% for `k` successes out of `n`.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if k == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if k as f64 == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LerPoint {
    /// Physical error rate sin²θ.
    pub p: f64,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub shots: usize,
    pub errors: usize,
    pub d: usize,
}

impl LerPoint {
    pub fn from_counts(p: f64, d: usize, errors: usize, shots: usize) -> Self {
        let (ci_low, ci_high) = wilson_interval(errors, shots);
        LerPoint {
            p,
            rate: if shots == 0 { 0.0 } else { errors as f64 / shots as f64 },
            ci_low,
            ci_high,
            shots,
            errors,
            d,
        }
    }

    /// One standard deviation read off the Wilson half-width.
    pub fn sigma(&self) -> f64 {
        (self.ci_high - self.ci_low) / (2.0 * Z95)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LerCurve {
    pub code: CodeKind,
    pub level: NoiseLevel,
    pub mode: NoiseMode,
    pub policy: WeightPolicy,
    pub d: usize,
    pub points: Vec<LerPoint>,
}

impl LerCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("p,P_L,ci_lo,ci_hi,N,d\n");
        for pt in &self.points {
            s.push_str(&format!(
                "{:?},{:?},{:?},{:?},{},{}\n",
                pt.p, pt.rate, pt.ci_low, pt.ci_high, pt.shots, pt.d
            ));
        }
        s
    }

    pub fn grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.p).collect()
    }
}

/// How the gate angle follows the data angle across a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateAngle {
    Fixed(f64),
    EqualToData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub code: CodeKind,
    pub level: NoiseLevel,
    pub mode: NoiseMode,
    pub distances: Vec<usize>,
    /// Physical error rates sin²θ.
    pub p_grid: Vec<f64>,
    /// Rows per grid point.
    pub shots: usize,
    pub policy: WeightPolicy,
    /// Rounds per experiment; `None` means r = d.
    pub rounds: Option<usize>,
    pub gate: GateAngle,
    /// Readout flips follow q = p at the phenomenological level.
    pub readout_equals_p: bool,
    /// Readout resamples per coherent trajectory.
    pub resample: usize,
    /// Estimate 3- and 4-point windows when the policy is `Estimated`.
    pub hyperedges: bool,
    pub seed: u64,
}

impl SweepConfig {
    pub fn new(code: CodeKind, level: NoiseLevel, mode: NoiseMode, distances: Vec<usize>, p_grid: Vec<f64>) -> Self {
        SweepConfig {
            code,
            level,
            mode,
            distances,
            p_grid,
            shots: 10_000,
            policy: WeightPolicy::Uniform,
            rounds: None,
            gate: GateAngle::Fixed(0.0),
            readout_equals_p: true,
            resample: 1,
            hyperedges: false,
            seed: 0,
        }
    }

    /// Noise for one grid point: every data qubit (and ancilla, at circuit level)
    /// rotates by arcsin √p.
    pub fn noise_at(&self, n_data: usize, p: f64) -> NoiseModel {
        let theta = p.sqrt().asin();
        NoiseModel {
            theta_data: vec![theta; n_data],
            theta_anc: if self.level == NoiseLevel::Circuit { theta } else { 0.0 },
            theta_gate: match self.gate {
                GateAngle::Fixed(g) => g,
                GateAngle::EqualToData => theta,
            },
            readout_flip: if self.level == NoiseLevel::Phenomenological && self.readout_equals_p {
                p
            } else {
                0.0
            },
            mode: self.mode,
        }
    }
}

/// A grid point that could not run, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPoint {
    pub d: usize,
    pub p: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub curves: Vec<LerCurve>,
    pub skipped: Vec<SkippedPoint>,
}

fn mix_seed(seed: u64, d: usize, k: usize) -> u64 {
    let mut z = seed ^ ((d as u64) << 32) ^ (k as u64);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs one grid point: generate, sample, optionally estimate, decode.
pub fn run_point(config: &SweepConfig, d: usize, p: f64, seed: u64) -> Result<LerPoint> {
    let layout_n = match config.code {
        CodeKind::Repetition => d,
        CodeKind::RotatedSurface => d * d,
    };
    let noise = config.noise_at(layout_n, p);
    let r = config.rounds.unwrap_or(d);
    let circuit = gen_memory(config.code, d, r, &noise, config.level)?;
    let reference = reference_dem(&circuit)?;
    let batch = match config.mode {
        NoiseMode::Twirled => run_pauli_frame_shots(&circuit, config.shots, seed)?,
        NoiseMode::Coherent => {
            let m = config.resample.max(1);
            run_coherent_shots(&circuit, config.shots.div_ceil(m), seed, m, false)?
        }
    };
    let dem = match config.policy {
        WeightPolicy::Uniform => reference,
        WeightPolicy::Estimated => {
            let opts = EstimateOptions {
                hyperedges: config.hyperedges,
                ..Default::default()
            };
            estimate_dem(&batch, &reference, &opts)?.to_dem()
        }
    };
    let graph = build_decoding_graph(&dem, config.policy)?;
    let (_, summary) = decoder_batch(&Decoder::new(&graph), &batch)?;
    Ok(LerPoint::from_counts(p, d, summary.errors, summary.shots))
}

/// Orchestrates every (d, p) point. Failing points are recorded and skipped.
pub fn sweep(config: &SweepConfig) -> Result<SweepResult> {
    if config.p_grid.is_empty() {
        return Err(Error::invalid("empty p grid"));
    }
    if config.distances.is_empty() {
        return Err(Error::invalid("empty distance list"));
    }
    if config.p_grid.iter().any(|&p| !(0.0..=0.5).contains(&p)) {
        return Err(Error::invalid("grid probabilities must lie in [0, 0.5]"));
    }
    let mut grid = config.p_grid.clone();
    grid.sort_by(f64::total_cmp);
    let mut curves = Vec::new();
    let mut skipped = Vec::new();
    for &d in &config.distances {
        let mut points = Vec::new();
        for (k, &p) in grid.iter().enumerate() {
            match run_point(config, d, p, mix_seed(config.seed, d, k)) {
                Ok(pt) => points.push(pt),
                Err(e) => skipped.push(SkippedPoint {
                    d,
                    p,
                    reason: e.to_string(),
                }),
            }
        }
        curves.push(LerCurve {
            code: config.code,
            level: config.level,
            mode: config.mode,
            policy: config.policy,
            d,
            points,
        });
    }
    Ok(SweepResult {
        config: config.clone(),
        curves,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCrossing {
    pub d_low: usize,
    pub d_high: usize,
    pub p: Option<f64>,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEstimate {
    /// Mean of the retained pairwise crossings; `None` means no crossing in range.
    pub p_th: Option<f64>,
    pub uncertainty: f64,
    pub pairs: Vec<PairCrossing>,
    /// Set when the smallest-distance pair was dropped as a finite-size outlier.
    pub finite_size_excluded: bool,
}

/// Crossing of two curves on a shared grid by linear interpolation of log P_L
/// against log p at the first sign change of P_L(d_high) − P_L(d_low) from
/// negative to positive. Points with P_L = 0 on either curve are skipped.
pub fn pair_crossing(low: &LerCurve, high: &LerCurve) -> Result<PairCrossing> {
    if low.grid() != high.grid() {
        return Err(Error::invalid("curves are on different grids"));
    }
    let usable: Vec<(f64, f64, f64)> = low
        .points
        .iter()
        .zip(&high.points)
        .filter(|(a, b)| a.rate > 0.0 && b.rate > 0.0 && a.p > 0.0)
        .map(|(a, b)| {
            let g = b.rate.ln() - a.rate.ln();
            let sa = a.sigma() / a.rate;
            let sb = b.sigma() / b.rate;
            (a.p.ln(), g, (sa * sa + sb * sb).sqrt())
        })
        .collect();
    let mut out = PairCrossing {
        d_low: low.d,
        d_high: high.d,
        p: None,
        sigma: f64::NAN,
    };
    for w in usable.windows(2) {
        let (x1, g1, s1) = w[0];
        let (x2, g2, s2) = w[1];
        if g1 < 0.0 && g2 >= 0.0 {
            let x = x1 + (x2 - x1) * g1 / (g1 - g2);
            let den = (g1 - g2) * (g1 - g2);
            let d1 = (x2 - x1) * g2 / den;
            let d2 = (x2 - x1) * g1 / den;
            let sx = ((d1 * s1).powi(2) + (d2 * s2).powi(2)).sqrt();
            out.p = Some(x.exp());
            out.sigma = x.exp() * sx;
            break;
        }
    }
    Ok(out)
}

/// Averages pairwise crossings of curves at adjacent distances. When
/// `flag_finite_size` is set, the smallest-distance pair is dropped if it sits
/// more than three combined standard deviations from the rest.
pub fn threshold_crossing(curves: &[LerCurve], flag_finite_size: bool) -> Result<ThresholdEstimate> {
    let mut sorted: Vec<&LerCurve> = curves.iter().collect();
    sorted.sort_by_key(|c| c.d);
    if sorted.len() < 2 {
        return Err(Error::invalid("threshold needs at least two distances"));
    }
    let pairs: Vec<PairCrossing> = sorted
        .windows(2)
        .map(|w| pair_crossing(w[0], w[1]))
        .collect::<Result<_>>()?;
    let found: Vec<&PairCrossing> = pairs.iter().filter(|c| c.p.is_some()).collect();
    let mut finite_size_excluded = false;
    let mut kept = found.clone();
    if flag_finite_size && found.len() >= 2 && found[0].d_low == sorted[0].d {
        let rest = &found[1..];
        let (m, s) = mean_and_sigma(rest);
        let first = found[0];
        let combined = (first.sigma.powi(2) + s * s).sqrt();
        if (first.p.unwrap() - m).abs() > 3.0 * combined {
            finite_size_excluded = true;
            kept = rest.to_vec();
        }
    }
    if kept.is_empty() {
        return Ok(ThresholdEstimate {
            p_th: None,
            uncertainty: f64::NAN,
            pairs,
            finite_size_excluded,
        });
    }
    let (mean, propagated) = mean_and_sigma(&kept);
    let lo = kept.iter().map(|c| c.p.unwrap()).fold(f64::INFINITY, f64::min);
    let hi = kept.iter().map(|c| c.p.unwrap()).fold(f64::NEG_INFINITY, f64::max);
    let spread = (hi - lo) / 2.0;
    Ok(ThresholdEstimate {
        p_th: Some(mean),
        uncertainty: spread.max(propagated),
        pairs,
        finite_size_excluded,
    })
}

fn mean_and_sigma(c: &[&PairCrossing]) -> (f64, f64) {
    let n = c.len() as f64;
    let mean = c.iter().map(|x| x.p.unwrap()).sum::<f64>() / n;
    let var: f64 = c.iter().map(|x| x.sigma.powi(2)).sum::<f64>() / (n * n);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyComparisonPoint {
    pub p: f64,
    pub d: usize,
    pub uniform: f64,
    pub estimated: f64,
    pub ratio: f64,
    pub ratio_sigma: f64,
    pub difference: f64,
    pub difference_sigma: f64,
    /// Estimated policy worse by more than two standard deviations.
    pub estimated_worse: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyComparison {
    pub points: Vec<PolicyComparisonPoint>,
}

impl PolicyComparison {
    pub fn any_worse(&self) -> bool {
        self.points.iter().any(|p| p.estimated_worse)
    }
}

/// Pointwise ratio and difference of two curves sharing a grid and distance.
pub fn compare_policies(uniform: &LerCurve, estimated: &LerCurve) -> Result<PolicyComparison> {
    if uniform.grid() != estimated.grid() || uniform.d != estimated.d {
        return Err(Error::invalid("policy curves differ in grid or distance"));
    }
    let points = uniform
        .points
        .iter()
        .zip(&estimated.points)
        .map(|(u, e)| {
            let (su, se) = (u.sigma(), e.sigma());
            let difference_sigma = (su * su + se * se).sqrt();
            let ratio = if u.rate > 0.0 {
                e.rate / u.rate
            } else if e.rate == 0.0 {
                1.0
            } else {
                f64::INFINITY
            };
            let ratio_sigma = if u.rate > 0.0 {
                ratio * ((su / u.rate).powi(2) + if e.rate > 0.0 { (se / e.rate).powi(2) } else { 0.0 }).sqrt()
            } else {
                f64::NAN
            };
            let difference = e.rate - u.rate;
            PolicyComparisonPoint {
                p: u.p,
                d: u.d,
                uniform: u.rate,
                estimated: e.rate,
                ratio,
                ratio_sigma,
                difference,
                difference_sigma,
                estimated_worse: difference > 2.0 * difference_sigma,
            }
        })
        .collect();
    Ok(PolicyComparison { points })
}

/// Summary document written next to sweep CSVs.
#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary<'a> {
    pub version: &'static str,
    pub config: &'a SweepConfig,
    pub threshold: Option<ThresholdEstimate>,
    pub skipped: &'a [SkippedPoint],
}

pub fn summary_json(result: &SweepResult, flag_finite_size: bool) -> String {
    let threshold = if result.curves.len() >= 2 {
        threshold_crossing(&result.curves, flag_finite_size).ok()
    } else {
        None
    };
    let s = SweepSummary {
        version: crate::VERSION,
        config: &result.config,
        threshold,
        skipped: &result.skipped,
    };
    serde_json::to_string_pretty(&s).expect("summary serializes")
}

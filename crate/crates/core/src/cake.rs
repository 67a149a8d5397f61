//! Cake cutting over `[0, 1]` with piecewise-constant valuations.
//!
//! The lottery mechanism cuts the cake into `n` pieces every declared measure
//! values at exactly `1/n`, hands them out in a uniformly random order, and
//! then keeps the allocation only with probability `n / 2^(n−1)`.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::mean_and_se;
use crate::rng::{run_seed, seeded};

/// Gap below which adjacent intervals or breakpoints are merged.
pub const MERGE_TOL: f64 = 1e-15;
/// Allowed deviation of a measure's total mass from 1.
pub const MASS_TOL: f64 = 1e-12;
/// Fewest Monte Carlo runs [`check_fairness`] accepts.
pub const MIN_FAIRNESS_RUNS: usize = 10_000;
/// Width of the confidence band, in standard errors.
pub const CI_WIDTH: f64 = 3.0;

/// Probability measure on `[0, 1]` with constant density between breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseMeasure {
    breakpoints: Vec<f64>,
    densities: Vec<f64>,
}

impl PiecewiseMeasure {
    pub fn new(breakpoints: Vec<f64>, densities: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 || densities.len() + 1 != breakpoints.len() {
            return Err(Error::MalformedMeasure(format!(
                "{} breakpoints need {} densities, got {}",
                breakpoints.len(),
                breakpoints.len().saturating_sub(1),
                densities.len()
            )));
        }
        if breakpoints[0] != 0.0 || *breakpoints.last().expect("nonempty") != 1.0 {
            return Err(Error::MalformedMeasure(
                "breakpoints must start at 0 and end at 1".into(),
            ));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::MalformedMeasure(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        if densities.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::MalformedMeasure(
                "densities must be finite and nonnegative".into(),
            ));
        }
        let mass: f64 = breakpoints
            .windows(2)
            .zip(&densities)
            .map(|(w, d)| d * (w[1] - w[0]))
            .sum();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::MalformedMeasure(format!("total mass {mass} is not 1")));
        }
        Ok(Self { breakpoints, densities })
    }

    pub fn uniform() -> Self {
        Self {
            breakpoints: vec![0.0, 1.0],
            densities: vec![1.0],
        }
    }

    /// Parses `b0 d0 b1 d1 … bm`: breakpoints alternating with densities.
    pub fn parse(line: &str) -> Result<Self> {
        let tokens: Vec<f64> = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::MalformedMeasure(format!("'{t}' is not a number")))
            })
            .collect::<Result<_>>()?;
        if tokens.len() < 3 || tokens.len().is_multiple_of(2) {
            return Err(Error::MalformedMeasure(format!(
                "expected an odd number (>= 3) of values, got {}",
                tokens.len()
            )));
        }
        let breakpoints = tokens.iter().step_by(2).copied().collect();
        let densities = tokens.iter().skip(1).step_by(2).copied().collect();
        Self::new(breakpoints, densities)
    }

    /// One measure per nonblank line; `#` starts a comment.
    pub fn parse_file(text: &str) -> Result<Vec<Self>> {
        text.lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(Self::parse)
            .collect()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    /// Mass of the interval `[a, b]`.
    pub fn interval_value(&self, a: f64, b: f64) -> f64 {
        self.breakpoints
            .windows(2)
            .zip(&self.densities)
            .map(|(w, d)| {
                let overlap = b.min(w[1]) - a.max(w[0]);
                if overlap > 0.0 {
                    d * overlap
                } else {
                    0.0
                }
            })
            .sum()
    }
}

/// Finite union of disjoint closed intervals of `[0, 1]`, sorted.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Slice {
    intervals: Vec<(f64, f64)>,
}

impl Slice {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Canonical slice: sorted, zero-length pieces dropped, touching pieces merged.
    pub fn new(mut intervals: Vec<(f64, f64)>) -> Result<Self> {
        for &(a, b) in &intervals {
            if !(a.is_finite() && b.is_finite() && 0.0 <= a && a <= b && b <= 1.0) {
                return Err(Error::MalformedSlice(format!(
                    "[{a}, {b}] is not a subinterval of [0, 1]"
                )));
            }
        }
        intervals.retain(|&(a, b)| b > a);
        intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(intervals.len());
        for (a, b) in intervals {
            match merged.last_mut() {
                Some(last) if a < last.1 - MERGE_TOL => {
                    return Err(Error::MalformedSlice(format!(
                        "[{a}, {b}] overlaps [{}, {}]",
                        last.0, last.1
                    )));
                }
                Some(last) if a <= last.1 + MERGE_TOL => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        Ok(Self { intervals: merged })
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }
}

/// Value of slice `s` under measure `mu`.
pub fn measure_value(mu: &PiecewiseMeasure, s: &Slice) -> f64 {
    s.intervals.iter().map(|&(a, b)| mu.interval_value(a, b)).sum()
}

/// Splits `[0, 1]` into `n` slices that every declared measure values at `1/n`.
///
/// The cake is cut at every breakpoint of every measure; each resulting
/// segment, on which all densities are constant, is divided into `n` equal
/// parts and slice `j` takes the `j`-th part of every segment.
pub fn exact_partition(declared: &[PiecewiseMeasure], n: usize) -> Result<Vec<Slice>> {
    if n == 0 {
        return Err(Error::Domain("need at least one identity".into()));
    }
    let mut cuts: Vec<f64> = declared.iter().flat_map(|m| m.breakpoints.iter().copied()).collect();
    cuts.extend([0.0, 1.0]);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|b, a| *b - *a <= MERGE_TOL);
    let nf = n as f64;
    (0..n)
        .map(|j| {
            let pieces = cuts
                .windows(2)
                .map(|w| {
                    let width = (w[1] - w[0]) / nf;
                    let lo = w[0] + j as f64 * width;
                    let hi = if j + 1 == n {
                        w[1]
                    } else {
                        w[0] + (j + 1) as f64 * width
                    };
                    (lo, hi)
                })
                .collect();
            Slice::new(pieces)
        })
        .collect()
}

/// `n / 2^(n−1)`, the probability the lottery keeps its allocation.
pub fn coin_probability(n: usize) -> f64 {
    n as f64 / 2f64.powi(n as i32 - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Coin {
    Kept,
    Burned,
}

impl Coin {
    pub fn as_str(&self) -> &'static str {
        match self {
            Coin::Kept => "kept",
            Coin::Burned => "burned",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Allocation {
    /// Slice of each reported identity, in report order.
    pub slices: Vec<Slice>,
    pub coin: Coin,
}

/// Random part of one lottery run: identity `i` receives piece `permutation[i]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LotteryDraw {
    pub permutation: Vec<usize>,
    pub coin: Coin,
}

/// Draws the permutation (Fisher–Yates) and then one uniform for the coin.
pub fn draw_lottery<G: Rng + ?Sized>(n: usize, rng: &mut G) -> LotteryDraw {
    let mut permutation: Vec<usize> = (0..n).collect();
    permutation.shuffle(rng);
    let coin = if rng.random::<f64>() < coin_probability(n) {
        Coin::Kept
    } else {
        Coin::Burned
    };
    LotteryDraw { permutation, coin }
}

fn allocate(partition: &[Slice], draw: &LotteryDraw) -> Allocation {
    let slices = draw
        .permutation
        .iter()
        .map(|&p| match draw.coin {
            Coin::Kept => partition[p].clone(),
            Coin::Burned => Slice::empty(),
        })
        .collect();
    Allocation {
        slices,
        coin: draw.coin,
    }
}

/// One run of the lottery mechanism on the declared measures.
pub fn run_mechanism(declared: &[PiecewiseMeasure], seed: u64) -> Result<Allocation> {
    let partition = exact_partition(declared, declared.len())?;
    let draw = draw_lottery(declared.len(), &mut seeded(seed));
    Ok(allocate(&partition, &draw))
}

/// Record of repeated lottery runs; run `i` uses seed `base_seed + i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transcript {
    pub base_seed: u64,
    pub partition: Vec<Slice>,
    pub draws: Vec<LotteryDraw>,
}

impl Transcript {
    pub fn allocation(&self, run: usize) -> Allocation {
        allocate(&self.partition, &self.draws[run])
    }
}

pub fn simulate(declared: &[PiecewiseMeasure], runs: usize, base_seed: u64) -> Result<Transcript> {
    let n = declared.len();
    let partition = exact_partition(declared, n)?;
    let draws = (0..runs as u64)
        .into_par_iter()
        .map(|i| draw_lottery(n, &mut seeded(run_seed(base_seed, i))))
        .collect();
    Ok(Transcript {
        base_seed,
        partition,
        draws,
    })
}

/// `1 / 2^(n−1)`: expected value of a truthful identity among `n`.
pub fn expected_truthful_value(n: usize) -> f64 {
    1.0 / 2f64.powi(n as i32 - 1)
}

/// `k / 2^(y+k−1)`: expected total value of `k` identities against `y` others.
pub fn sybil_deviation_value(k: usize, y: usize) -> f64 {
    k as f64 / 2f64.powi((y + k) as i32 - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FairnessReport {
    pub envy_free_in_expectation: bool,
    pub alpha_proportional: f64,
    pub non_wasteful: bool,
    /// Mean value of identity `i`'s own slice under its true measure.
    pub mean_values: Vec<f64>,
    pub standard_errors: Vec<f64>,
}

/// Monte Carlo fairness estimates from a transcript, judged with the true measures.
///
/// `alpha_proportional` is the largest `α` with `mean_i ≥ α − 3 SE_i` for all `i`.
/// Envy-freeness holds when no identity's mean value of another's slice
/// exceeds its own by more than three standard errors of the difference.
pub fn check_fairness(transcript: &Transcript, true_measures: &[PiecewiseMeasure]) -> Result<FairnessReport> {
    let runs = transcript.draws.len();
    if runs < MIN_FAIRNESS_RUNS {
        return Err(Error::InsufficientRuns {
            runs,
            required: MIN_FAIRNESS_RUNS,
        });
    }
    let n = transcript.partition.len();
    if true_measures.len() != n {
        return Err(Error::Domain(format!(
            "{} true measures for {n} identities",
            true_measures.len()
        )));
    }
    // piece_values[i][p]: identity i's true value of piece p.
    let piece_values: Vec<Vec<f64>> = true_measures
        .iter()
        .map(|mu| transcript.partition.iter().map(|s| measure_value(mu, s)).collect())
        .collect();
    let value = |i: usize, j: usize, d: &LotteryDraw| match d.coin {
        Coin::Kept => piece_values[i][d.permutation[j]],
        Coin::Burned => 0.0,
    };

    let mut mean_values = Vec::with_capacity(n);
    let mut standard_errors = Vec::with_capacity(n);
    let mut envy_free = true;
    for i in 0..n {
        let own: Vec<f64> = transcript.draws.iter().map(|d| value(i, i, d)).collect();
        let (mean, se) = mean_and_se(&own);
        mean_values.push(mean);
        standard_errors.push(se);
        for j in (0..n).filter(|&j| j != i) {
            let diff: Vec<f64> = transcript
                .draws
                .iter()
                .map(|d| value(i, j, d) - value(i, i, d))
                .collect();
            let (m, s) = mean_and_se(&diff);
            if m > CI_WIDTH * s + MASS_TOL {
                envy_free = false;
            }
        }
    }
    let alpha = mean_values
        .iter()
        .zip(&standard_errors)
        .map(|(m, s)| m + CI_WIDTH * s)
        .fold(f64::INFINITY, f64::min);
    let non_wasteful = transcript.draws.iter().all(|d| d.coin == Coin::Kept);
    Ok(FairnessReport {
        envy_free_in_expectation: envy_free,
        alpha_proportional: alpha,
        non_wasteful,
        mean_values,
        standard_errors,
    })
}

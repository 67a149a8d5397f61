//! Second-price auctions and `(T, g)` bidding rings.
//!
//! Ring members report their values to a ring centre; only the highest
//! member bids in the auction, pays the reserve `r` to the seller and a total
//! of `T(v)` to the ring, out of which each of the other `k − 1` registered
//! members receives `g(k) (T(v) − r)`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::ValueDistribution;
use crate::error::{Error, Result};
use crate::game::{ActionSpace, AggregativeGame, Aggregator};
use crate::numeric::{adaptive_simpson, grid_argmax_refined, mean_and_se, strictly_exceeds, QUADRATURE_TOL};
use crate::rng::{run_seed, seeded};

/// Extra identities beyond the `n` true members for which `g` is validated.
pub const MAX_EXTRA_IDENTITIES: usize = 8;

/// Loser-share rule `g(k)` for a ring with `k` registered members.
#[derive(Clone)]
pub struct ShareRule {
    g: Arc<dyn Fn(usize) -> f64 + Send + Sync>,
    label: String,
}

impl fmt::Debug for ShareRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

impl ShareRule {
    pub fn custom<F>(label: impl Into<String>, g: F) -> Self
    where
        F: Fn(usize) -> f64 + Send + Sync + 'static,
    {
        Self {
            g: Arc::new(g),
            label: label.into(),
        }
    }

    /// No side payments: the winner keeps everything above the reserve.
    pub fn zero() -> Self {
        Self::custom("zero", |_| 0.0)
    }

    /// `g(k) = θ / (k − 1)`; `θ = 1` splits the surplus among all losers.
    pub fn constant(theta: f64) -> Self {
        Self::custom(format!("constant({theta})"), move |k| {
            if k < 2 {
                0.0
            } else {
                theta / (k - 1) as f64
            }
        })
    }

    /// `g(k) = θ / (k − 1)` for `k ≤ capacity` and 0 for larger rings.
    pub fn capped(theta: f64, capacity: usize) -> Self {
        Self::custom(format!("capped({theta}, {capacity})"), move |k| {
            if k < 2 || k > capacity {
                0.0
            } else {
                theta / (k - 1) as f64
            }
        })
    }

    pub fn g(&self, k: usize) -> f64 {
        (self.g)(k)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

/// Parametric share families searched by [`opt_ring_search`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShareFamily {
    /// `θ / (k − 1)` for every ring size.
    Constant,
    /// `θ / (k − 1)` up to the true ring size, 0 beyond it.
    Capped,
}

impl ShareFamily {
    pub fn rule(self, theta: f64, n: usize) -> ShareRule {
        match self {
            ShareFamily::Constant => ShareRule::constant(theta),
            ShareFamily::Capped => ShareRule::capped(theta, n),
        }
    }
}

impl FromStr for ShareFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(ShareFamily::Constant),
            "capped" => Ok(ShareFamily::Capped),
            _ => Err(Error::Config(format!("unknown share family '{s}'"))),
        }
    }
}

impl fmt::Display for ShareFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShareFamily::Constant => "constant",
            ShareFamily::Capped => "capped",
        })
    }
}

#[derive(Debug, Clone)]
pub struct RingConfig {
    pub share: ShareRule,
    pub reserve: f64,
    /// Number of true ring members.
    pub n: usize,
}

impl RingConfig {
    /// Checks `n ≥ 2`, `r ≥ 0` and `0 ≤ g(k) ≤ 1/(k−1)` for ring sizes up to
    /// `n + MAX_EXTRA_IDENTITIES`.
    pub fn new(share: ShareRule, reserve: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("a ring needs at least 2 members, got {n}")));
        }
        if !(reserve.is_finite() && reserve >= 0.0) {
            return Err(Error::Domain(format!("reserve {reserve} must be >= 0")));
        }
        for k in 2..=n + MAX_EXTRA_IDENTITIES {
            let g = share.g(k);
            let cap = 1.0 / (k - 1) as f64;
            if !(g >= 0.0) || g > cap * (1.0 + 1e-12) {
                return Err(Error::Domain(format!(
                    "share g({k}) = {g} outside [0, {cap}] breaks budget balance"
                )));
            }
        }
        Ok(Self { share, reserve, n })
    }

    /// `l(n) = (n − 1) g(n)`: fraction of the surplus paid out to losers.
    pub fn loser_fraction(&self) -> f64 {
        (self.n - 1) as f64 * self.share.g(self.n)
    }

    fn exponent(&self) -> f64 {
        self.n as f64 - 1.0 + self.loser_fraction()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SecondPriceOutcome {
    /// Index of the winning bid; `None` when no bid reaches the reserve.
    pub winner: Option<usize>,
    pub price: f64,
}

/// Highest bid at or above the reserve wins (ties broken uniformly at random)
/// and pays the larger of the reserve and the second-highest bid.
pub fn second_price_outcome<G: Rng + ?Sized>(bids: &[f64], reserve: f64, rng: &mut G) -> Result<SecondPriceOutcome> {
    if bids.is_empty() {
        return Err(Error::EmptyBids);
    }
    let top = bids.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top < reserve {
        return Ok(SecondPriceOutcome {
            winner: None,
            price: 0.0,
        });
    }
    let tied: Vec<usize> = (0..bids.len()).filter(|&i| bids[i] == top).collect();
    let winner = if tied.len() == 1 {
        tied[0]
    } else {
        tied[rng.random_range(0..tied.len())]
    };
    let second = bids
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != winner)
        .map(|(_, &b)| b)
        .fold(0.0, f64::max);
    Ok(SecondPriceOutcome {
        winner: Some(winner),
        price: second.max(reserve),
    })
}

/// Second-price auction as a game in bids: a bid above the highest other bid
/// wins and pays it. An exact tie pays half, which is the true expectation
/// for a tie between two bids only.
pub fn second_price_game(value: f64, grid_step: f64) -> Result<AggregativeGame> {
    let space = ActionSpace::continuous(0.0, None, grid_step)?;
    Ok(AggregativeGame::new(
        "second-price",
        space,
        Aggregator::Max,
        move |b, m| {
            if b <= 0.0 || b < m {
                0.0
            } else if b > m {
                value - m
            } else {
                0.5 * (value - m)
            }
        },
    ))
}

/// Transfer the ring winner with value `v` pays in total:
///
/// `T(v) = r + F(v)^−(n−1+l) ∫_r^v (n−1)(u−r) F(u)^(n−2+l) f(u) du`, `l = (n−1) g(n)`,
///
/// which makes truthful reporting optimal and gives `T(r) = r`.
pub fn transfer_t(v: f64, cfg: &RingConfig, dist: &ValueDistribution) -> Result<f64> {
    let fv = dist.cdf(v);
    if fv <= 0.0 {
        return Err(Error::SingularScale(v));
    }
    let r = cfg.reserve;
    if v <= r {
        return Ok(r);
    }
    let a = cfg.exponent();
    let scale = fv.powf(a);
    let integral = adaptive_simpson(|u| t_integrand(cfg, dist, a, u), r, v, QUADRATURE_TOL * scale);
    Ok(r + integral / scale)
}

fn t_integrand(cfg: &RingConfig, dist: &ValueDistribution, a: f64, u: f64) -> f64 {
    let fu = dist.cdf(u);
    if fu <= 0.0 {
        return 0.0;
    }
    (cfg.n - 1) as f64 * (u - cfg.reserve) * fu.powf(a - 1.0) * dist.pdf(u)
}

/// Older closed form `(n−1) F(v)^−n ∫_r^v (x−r) F(x)^(n−1) f(x) dx + r`, kept for comparison.
pub fn transfer_t_legacy(v: f64, cfg: &RingConfig, dist: &ValueDistribution) -> Result<f64> {
    let fv = dist.cdf(v);
    if fv <= 0.0 {
        return Err(Error::SingularScale(v));
    }
    let r = cfg.reserve;
    if v <= r {
        return Ok(r);
    }
    let n = cfg.n as f64;
    let scale = fv.powf(n);
    let integral = adaptive_simpson(
        |x| (x - r) * dist.cdf(x).powf(n - 1.0) * dist.pdf(x),
        r,
        v,
        QUADRATURE_TOL * scale,
    );
    Ok((n - 1.0) * integral / scale + r)
}

/// Surplus `T(u) − r` of a winner with value `u`, zero where nobody would win.
fn surplus_direct(u: f64, cfg: &RingConfig, dist: &ValueDistribution) -> f64 {
    if u <= cfg.reserve || dist.cdf(u) <= 0.0 {
        return 0.0;
    }
    transfer_t(u, cfg, dist).map_or(0.0, |t| t - cfg.reserve)
}

fn check_ring_args(w: f64, v: f64, m: usize, dist: &ValueDistribution) -> Result<()> {
    if m == 0 {
        return Err(Error::Domain("a player needs at least one identity".into()));
    }
    let hi = dist.v_high();
    for (name, x) in [("bid", w), ("value", v)] {
        if !(0.0..=hi).contains(&x) {
            return Err(Error::Domain(format!("{name} {x} outside [0, {hi}]")));
        }
    }
    Ok(())
}

/// Expected payoff of a member with value `v` who reports `w` under one
/// identity and registers `m − 1` further identities that only collect
/// loser shares:
///
/// `[v − T(w) + (m−1) g(n+m−1)(T(w)−r)] F(w)^(n−1)
///   + ∫_{max(w,r)}^{v_h} m g(n+m−1)(n−1)(T(u)−r) F(u)^(n−2) f(u) du`,
///
/// the first term counted only when `w > r`.
///
/// Every `T(u)` inside the integral is its own quadrature; [`RingModel`]
/// evaluates the same payoff from precomputed tables.
pub fn ring_payoff_pi(w: f64, v: f64, m: usize, cfg: &RingConfig, dist: &ValueDistribution) -> Result<f64> {
    check_ring_args(w, v, m, dist)?;
    let r = cfg.reserve;
    let n = cfg.n as f64;
    let gm = cfg.share.g(cfg.n + m - 1);
    let mut payoff = 0.0;
    if w > r {
        let s = surplus_direct(w, cfg, dist);
        let t = r + s;
        payoff += (v - t + (m - 1) as f64 * gm * s) * dist.cdf(w).powf(n - 1.0);
    }
    if gm > 0.0 {
        let lo = w.max(r);
        let integral = adaptive_simpson(
            |u| surplus_direct(u, cfg, dist) * dist.cdf(u).powf(n - 2.0) * dist.pdf(u),
            lo,
            dist.v_high(),
            QUADRATURE_TOL,
        );
        payoff += m as f64 * gm * (n - 1.0) * integral;
    }
    Ok(payoff)
}

/// Share each loser would receive from an efficient ring:
/// `V(n) = E[max(v₍₂₎ − r, 0)] / n` over `n` independent values.
pub fn efficient_ring_share_v(n: usize, dist: &ValueDistribution, reserve: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain(format!("need at least 2 bidders, got {n}")));
    }
    let nf = n as f64;
    let hi = dist.v_high();
    if reserve >= hi {
        return Ok(0.0);
    }
    // Density of the second-highest of n values.
    let expectation = adaptive_simpson(
        |u| {
            let f = dist.cdf(u);
            (u - reserve) * nf * (nf - 1.0) * f.powf(nf - 2.0) * (1.0 - f) * dist.pdf(u)
        },
        reserve,
        hi,
        QUADRATURE_TOL,
    );
    Ok(expectation / nf)
}

/// `V(n)` conditioned on the highest value being `top`:
/// `E[max(v₍₂₎ − r, 0) | v₍₁₎ = top] / n`.
pub fn efficient_ring_share_v_given_top(n: usize, dist: &ValueDistribution, reserve: f64, top: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain(format!("need at least 2 bidders, got {n}")));
    }
    let nf = n as f64;
    let ft = dist.cdf(top);
    if ft <= 0.0 {
        return Err(Error::SingularScale(top));
    }
    if top <= reserve {
        return Ok(0.0);
    }
    let integral = adaptive_simpson(
        |u| (u - reserve) * (nf - 1.0) * dist.cdf(u).powf(nf - 2.0) * dist.pdf(u),
        reserve,
        top,
        QUADRATURE_TOL * ft.powf(nf - 1.0),
    );
    Ok(integral / ft.powf(nf - 1.0) / nf)
}

/// Node count of the tables behind [`RingModel`].
pub const TABLE_NODES: usize = 2049;
const TABLE_TOL: f64 = 1e-14;

/// Precomputed surplus `T(u) − r` and tail integral
/// `J(w) = ∫_w^{v_h} (T(u)−r) F(u)^(n−2) f(u) du` on a uniform grid over
/// `[r, v_h]`, interpolated by cubic Hermite splines whose slopes come from
/// the defining equations.
#[derive(Debug, Clone)]
pub struct RingModel {
    cfg: RingConfig,
    dist: ValueDistribution,
    nodes: Vec<f64>,
    step: f64,
    surplus: Vec<f64>,
    surplus_slope: Vec<f64>,
    tail: Vec<f64>,
    tail_slope: Vec<f64>,
}

fn hermite(nodes: &[f64], step: f64, values: &[f64], slopes: &[f64], x: f64) -> f64 {
    let last = nodes.len() - 1;
    let k = (((x - nodes[0]) / step).floor() as usize).min(last - 1);
    let t = (x - nodes[k]) / step;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * values[k] + h10 * step * slopes[k] + h01 * values[k + 1] + h11 * step * slopes[k + 1]
}

impl RingModel {
    pub fn new(cfg: RingConfig, dist: ValueDistribution) -> Result<Self> {
        dist.validate()?;
        let r = cfg.reserve;
        let hi = dist.v_high();
        if r >= hi {
            return Err(Error::Domain(format!("reserve {r} leaves no room below v_h = {hi}")));
        }
        let n = cfg.n as f64;
        let a = cfg.exponent();
        let step = (hi - r) / (TABLE_NODES - 1) as f64;
        let nodes: Vec<f64> = (0..TABLE_NODES).map(|k| r + k as f64 * step).collect();

        let mut surplus = vec![0.0; TABLE_NODES];
        let mut surplus_slope = vec![0.0; TABLE_NODES];
        let mut cumulative = 0.0;
        for k in 0..TABLE_NODES {
            let u = nodes[k];
            if k > 0 {
                cumulative += adaptive_simpson(|x| t_integrand(&cfg, &dist, a, x), nodes[k - 1], u, TABLE_TOL);
            }
            let fu = dist.cdf(u);
            if fu > 0.0 {
                surplus[k] = cumulative / fu.powf(a);
                surplus_slope[k] = ((n - 1.0) * (u - r) - a * surplus[k]) * dist.pdf(u) / fu;
            }
        }
        if dist.cdf(nodes[0]) <= 0.0 {
            surplus_slope[0] = 2.0 * surplus_slope[1] - surplus_slope[2];
        }

        let mut model = Self {
            cfg,
            dist,
            nodes,
            step,
            surplus,
            surplus_slope,
            tail: vec![0.0; TABLE_NODES],
            tail_slope: vec![0.0; TABLE_NODES],
        };
        let integrand = |m: &Self, u: f64| m.surplus(u) * m.dist.cdf(u).powf(n - 2.0) * m.dist.pdf(u);
        let mut tail = vec![0.0; TABLE_NODES];
        let mut tail_slope = vec![0.0; TABLE_NODES];
        for k in (0..TABLE_NODES).rev() {
            tail_slope[k] = -integrand(&model, model.nodes[k]);
            if k + 1 < TABLE_NODES {
                tail[k] = tail[k + 1]
                    + adaptive_simpson(|u| integrand(&model, u), model.nodes[k], model.nodes[k + 1], TABLE_TOL);
            }
        }
        model.tail = tail;
        model.tail_slope = tail_slope;
        Ok(model)
    }

    pub fn config(&self) -> &RingConfig {
        &self.cfg
    }

    pub fn distribution(&self) -> &ValueDistribution {
        &self.dist
    }

    /// `T(u) − r`, zero at or below the reserve.
    pub fn surplus(&self, u: f64) -> f64 {
        if u <= self.cfg.reserve {
            return 0.0;
        }
        if u >= self.dist.v_high() {
            return self.surplus[TABLE_NODES - 1];
        }
        hermite(&self.nodes, self.step, &self.surplus, &self.surplus_slope, u)
    }

    pub fn transfer(&self, v: f64) -> f64 {
        self.cfg.reserve + self.surplus(v)
    }

    fn tail(&self, w: f64) -> f64 {
        if w <= self.cfg.reserve {
            return self.tail[0];
        }
        if w >= self.dist.v_high() {
            return 0.0;
        }
        hermite(&self.nodes, self.step, &self.tail, &self.tail_slope, w)
    }

    /// Same payoff as [`ring_payoff_pi`], from the tables.
    pub fn payoff(&self, w: f64, v: f64, m: usize) -> f64 {
        let r = self.cfg.reserve;
        let n = self.cfg.n as f64;
        let gm = self.cfg.share.g(self.cfg.n + m - 1);
        let mut payoff = 0.0;
        if w > r {
            let s = self.surplus(w);
            payoff += (v - r - s + (m - 1) as f64 * gm * s) * self.dist.cdf(w).powf(n - 1.0);
        }
        if gm > 0.0 {
            payoff += m as f64 * gm * (n - 1.0) * self.tail(w.max(r));
        }
        payoff
    }

    /// Total payoff of all members when the top value is `top` and everyone
    /// reports truthfully with one identity: the winner's value minus what
    /// leaves the ring (the reserve and the undistributed part of `T − r`).
    pub fn realised_welfare(&self, top: f64) -> f64 {
        let r = self.cfg.reserve;
        if top < r {
            return 0.0;
        }
        let l = self.cfg.loser_fraction();
        top - r - (1.0 - l) * self.surplus(top)
    }
}

/// Value quantiles at which truthfulness and Sybil-proofness are checked.
pub const CHECK_LEVELS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
/// Grid intervals of the bid search in the truthfulness check.
pub const TRUTH_GRID: usize = 40;
/// Largest distance between the best report and the true value, relative to `v_h`.
pub const TRUTH_TOL: f64 = 1e-3;
/// Identity counts tried by the Sybil check.
pub const MAX_CHECK_IDENTITIES: usize = 4;
/// Relative margin by which a Sybil payoff must exceed the truthful one to count.
pub const SYBIL_MARGIN: f64 = 1e-9;

/// Whether reporting the true value maximises `π(·, v, 1)` at every checked value.
pub fn truthful_ok(model: &RingModel) -> bool {
    let hi = model.dist.v_high();
    CHECK_LEVELS.iter().all(|&level| {
        let v = model.dist.quantile(level);
        let (w, _) = grid_argmax_refined(|w| model.payoff(w, v, 1), 0.0, hi, hi / TRUTH_GRID as f64, 1e-10);
        (w - v).abs() <= TRUTH_TOL * hi
    })
}

/// Whether `π(v, v, 1) ≥ π(v, v, m)` for `m = 2..=4` at every checked value.
pub fn sybilproof_ok(model: &RingModel) -> bool {
    CHECK_LEVELS.iter().all(|&level| {
        let v = model.dist.quantile(level);
        let single = model.payoff(v, v, 1);
        (2..=MAX_CHECK_IDENTITIES).all(|m| !strictly_exceeds(model.payoff(v, v, m), single, SYBIL_MARGIN))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RingCandidate {
    pub theta: f64,
    pub truthful_ok: bool,
    pub sybilproof_ok: bool,
    pub welfare: f64,
    pub welfare_se: f64,
    /// Welfare of the ring without side payments on the same samples.
    pub baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RingSearch {
    pub candidates: Vec<RingCandidate>,
    /// Passing candidate with the highest welfare, or the `θ = 0` ring.
    pub best: RingCandidate,
    pub warning: Option<String>,
}

impl RingSearch {
    /// Whether the best candidate beats the baseline by more than `k` standard errors.
    pub fn beats_baseline(&self, k: f64) -> bool {
        self.best.welfare - self.best.baseline > k * self.best.welfare_se
    }
}

/// Highest of `n` values for each Monte Carlo sample; sample `i` uses seed `seed + i`.
pub fn sample_top_values(dist: &ValueDistribution, n: usize, samples: usize, seed: u64) -> Vec<f64> {
    (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeded(run_seed(seed, i));
            (0..n).map(|_| dist.sample(&mut rng)).fold(0.0, f64::max)
        })
        .collect()
}

/// Searches the share family over `thetas` for rings that are truthful and
/// Sybil-proof, and estimates each ring's expected member welfare on common
/// Monte Carlo samples.
pub fn opt_ring_search(
    dist: &ValueDistribution,
    n: usize,
    family: ShareFamily,
    thetas: &[f64],
    reserve: f64,
    samples: usize,
    seed: u64,
) -> Result<RingSearch> {
    if samples < 2 {
        return Err(Error::InsufficientRuns {
            runs: samples,
            required: 2,
        });
    }
    let tops = sample_top_values(dist, n, samples, seed);
    let welfare_of = |model: &RingModel| -> (f64, f64) {
        let values: Vec<f64> = tops.iter().map(|&t| model.realised_welfare(t)).collect();
        mean_and_se(&values)
    };
    let baseline_model = RingModel::new(RingConfig::new(ShareRule::zero(), reserve, n)?, *dist)?;
    let (baseline, _) = welfare_of(&baseline_model);

    let candidates = thetas
        .par_iter()
        .map(|&theta| {
            let cfg = RingConfig::new(family.rule(theta, n), reserve, n)?;
            let model = RingModel::new(cfg, *dist)?;
            let (welfare, welfare_se) = welfare_of(&model);
            Ok(RingCandidate {
                theta,
                truthful_ok: truthful_ok(&model),
                sybilproof_ok: sybilproof_ok(&model),
                welfare,
                welfare_se,
                baseline,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let best = candidates
        .iter()
        .filter(|c| c.truthful_ok && c.sybilproof_ok)
        .fold(None::<RingCandidate>, |acc, c| match acc {
            Some(b) if b.welfare >= c.welfare => Some(b),
            _ => Some(*c),
        });
    let (best, warning) = match best {
        Some(b) => (b, None),
        None => {
            let (w, se) = welfare_of(&baseline_model);
            (
                RingCandidate {
                    theta: 0.0,
                    truthful_ok: true,
                    sybilproof_ok: true,
                    welfare: w,
                    welfare_se: se,
                    baseline,
                },
                Some("no candidate share passed both checks; reporting the ring without side payments".into()),
            )
        }
    };
    Ok(RingSearch {
        candidates,
        best,
        warning,
    })
}

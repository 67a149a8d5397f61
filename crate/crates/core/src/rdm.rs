//! Reward-distribution mechanisms: a reward `R` split among `n` reported
//! identities, where the mechanism only chooses the total `r(n)` it pays out.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::equilibrium::{best_response, symmetric_best_response_dynamics, SymmetricEquilibrium};
use crate::error::{Error, Result};
use crate::game::{ActionSpace, AggregativeGame, Aggregator, ScalarFn};
use crate::numeric::{bisect, strictly_exceeds};

/// Default bound on identities `x` and foreign identities `y` in [`check_rdm_sybilproof`].
pub const DEFAULT_CHECK_BOUND: usize = 64;
/// Relative slack allowed in the Sybil-proofness inequality.
pub const RDM_TOLERANCE: f64 = 1e-12;

/// `n R / 2^(n−1)`: the largest total that keeps splitting unprofitable.
pub fn rmax(n: usize, reward: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    n as f64 * reward / 2f64.powi(n as i32 - 1)
}

/// A mechanism paying out `r(n)` in total when `n` identities report.
#[derive(Clone)]
pub struct RewardMechanism {
    r: Arc<dyn Fn(usize) -> f64 + Send + Sync>,
    cap: f64,
}

impl fmt::Debug for RewardMechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RewardMechanism").field("cap", &self.cap).finish()
    }
}

impl RewardMechanism {
    pub fn new<F>(cap: f64, r: F) -> Self
    where
        F: Fn(usize) -> f64 + Send + Sync + 'static,
    {
        Self { r: Arc::new(r), cap }
    }

    pub fn rmax(reward: f64) -> Self {
        Self::new(reward, move |n| rmax(n, reward))
    }

    /// Always pays out the whole reward.
    pub fn constant(reward: f64) -> Self {
        Self::new(reward, move |n| if n == 0 { 0.0 } else { reward })
    }

    /// The same mechanism with `r(n0)` replaced by `value`.
    pub fn with_point(&self, n0: usize, value: f64) -> Self {
        let base = self.r.clone();
        Self::new(self.cap, move |n| if n == n0 { value } else { base(n) })
    }

    pub fn r(&self, n: usize) -> f64 {
        (self.r)(n)
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }
}

/// `x r(x+y)/(x+y) − c x`: payoff of a player with `x` identities among `y` others.
pub fn rdm_payoff(mech: &RewardMechanism, x: usize, y: usize, c: f64) -> f64 {
    if x == 0 {
        return 0.0;
    }
    let total = x + y;
    x as f64 * mech.r(total) / total as f64 - c * x as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum RdmVerdict {
    Proof {
        x_max: usize,
        y_max: usize,
    },
    /// `x` identities against `y` others earn more than one identity would.
    Counterexample {
        x: usize,
        y: usize,
        single: f64,
        split: f64,
    },
    /// `r(n)` is negative or exceeds the reward cap.
    CapExceeded {
        n: usize,
        value: f64,
    },
}

impl RdmVerdict {
    pub fn is_proof(&self) -> bool {
        matches!(self, RdmVerdict::Proof { .. })
    }
}

/// Checks `r(1+y)/(1+y) ≥ x r(x+y)/(x+y)` for `1 ≤ x ≤ x_max`, `0 ≤ y ≤ y_max`,
/// and `0 ≤ r(n) ≤ R` for every `n` involved. Returns the first violation,
/// scanning `x` in the outer loop.
pub fn check_rdm_sybilproof(mech: &RewardMechanism, x_max: usize, y_max: usize) -> Result<RdmVerdict> {
    if x_max < 2 {
        return Err(Error::Config(format!("x_max must be at least 2, got {x_max}")));
    }
    for n in 1..=x_max + y_max {
        let v = mech.r(n);
        if !(v >= 0.0) || strictly_exceeds(v, mech.cap, RDM_TOLERANCE) {
            return Ok(RdmVerdict::CapExceeded { n, value: v });
        }
    }
    for x in 2..=x_max {
        for y in 0..=y_max {
            let single = mech.r(1 + y) / (1 + y) as f64;
            let split = x as f64 * mech.r(x + y) / (x + y) as f64;
            if strictly_exceeds(split, single, RDM_TOLERANCE) {
                return Ok(RdmVerdict::Counterexample { x, y, single, split });
            }
        }
    }
    Ok(RdmVerdict::Proof { x_max, y_max })
}

/// Indivisible variant of `r_max`: with probability `n/2^(n−1)` the whole item
/// goes to a uniformly chosen reporter, otherwise nobody gets it.
///
/// Draws the winner index first and then one uniform for the keep/burn coin.
pub fn lottery_allocation<G: Rng + ?Sized>(n: usize, rng: &mut G) -> Option<usize> {
    if n == 0 {
        return None;
    }
    let winner = rng.random_range(0..n);
    let keep = rng.random::<f64>() < n as f64 / 2f64.powi(n as i32 - 1);
    keep.then_some(winner)
}

/// Pro-rata mechanism `f(x) = (R e / K) x e^(−x/K)`, under which playing `K`
/// is a dominant strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DsicProRata {
    pub reward: f64,
    pub k: f64,
}

impl DsicProRata {
    pub fn new(reward: f64, k: f64) -> Result<Self> {
        if !(reward.is_finite() && reward > 0.0) {
            return Err(Error::Domain(format!("reward {reward} must be > 0")));
        }
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::Domain(format!("K {k} must be > 0")));
        }
        Ok(Self { reward, k })
    }

    pub fn f(&self, x: f64) -> f64 {
        self.reward * std::f64::consts::E / self.k * x * (-x / self.k).exp()
    }

    pub fn df(&self, x: f64) -> f64 {
        self.reward * std::f64::consts::E / self.k * (-x / self.k).exp() * (1.0 - x / self.k)
    }

    pub fn scalar_fn(&self) -> ScalarFn {
        let a = *self;
        let b = *self;
        ScalarFn::with_derivative(move |x| a.f(x), move |x| b.df(x))
    }

    pub fn game(&self, grid_step: f64) -> Result<AggregativeGame> {
        let space = ActionSpace::continuous(0.0, None, grid_step)?;
        let mech = *self;
        Ok(AggregativeGame::new(
            "dsic-pro-rata",
            space,
            Aggregator::Sum,
            move |x, y| mech.payoff(x, y),
        ))
    }

    pub fn payoff(&self, x: f64, y: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            x / (x + y) * self.f(x + y)
        }
    }

    /// `∂/∂x [x/(x+y) f(x+y)]`.
    pub fn marginal_payoff(&self, x: f64, y: f64) -> f64 {
        let s = x + y;
        y / (s * s) * self.f(s) + x / s * self.df(s)
    }

    /// Best response to `y`, the root of the marginal payoff on `(0, 2K)`.
    pub fn dominant_action(&self, y: f64) -> Result<f64> {
        bisect(|x| self.marginal_payoff(x, y), 1e-9 * self.k, 2.0 * self.k)
    }

    /// Welfare when `n` players each play `K`: `f(nK) = R n e^(1−n)`.
    pub fn welfare(&self, n: usize) -> f64 {
        self.f(n as f64 * self.k)
    }

    /// Marginal payoff at `x = K`; zero for every `y` exactly when `K` is dominant.
    pub fn ode_residual(&self, y: f64) -> f64 {
        self.marginal_payoff(self.k, y)
    }
}

/// Piecewise-linear reward curve rising to `R` at `K − ε` and falling to 0 at `K`
/// (and below 0 past `K`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TentFunction {
    pub reward: f64,
    pub k: f64,
    pub epsilon: f64,
}

impl TentFunction {
    pub fn new(reward: f64, k: f64, epsilon: f64) -> Result<Self> {
        if !(reward.is_finite() && reward > 0.0) {
            return Err(Error::Domain(format!("reward {reward} must be > 0")));
        }
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::Domain(format!("K {k} must be > 0")));
        }
        if !(epsilon > 0.0 && epsilon < k) {
            return Err(Error::Domain(format!("epsilon {epsilon} must lie in (0, {k})")));
        }
        Ok(Self { reward, k, epsilon })
    }

    pub fn peak(&self) -> f64 {
        self.k - self.epsilon
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.peak() {
            self.reward * x / self.peak()
        } else {
            self.reward * (self.k - x) / self.epsilon
        }
    }

    pub fn game(&self) -> AggregativeGame {
        let space = ActionSpace::continuous(0.0, Some(self.k), self.k / 1000.0).expect("valid tent space");
        let tent = *self;
        AggregativeGame::new("tent-pro-rata", space, Aggregator::Sum, move |x, y| {
            if x <= 0.0 {
                0.0
            } else {
                x / (x + y) * tent.eval(x + y)
            }
        })
    }

    /// Aggregate solving `(n−1) f(q) + q f'(q) = 0` on the falling branch, if
    /// that root lies strictly inside `(K − ε, K)`.
    pub fn descending_root(&self, n: usize) -> Option<f64> {
        let q = self.k * (n as f64 - 1.0) / n as f64;
        (q > self.peak() && q < self.k).then_some(q)
    }
}

/// Grid points per unit `K` used when checking tent equilibria.
const TENT_GRID: f64 = 1000.0;
/// Largest best-response gap accepted for a tent equilibrium.
pub const TENT_FIXED_POINT_TOL: f64 = 1e-6;

/// Symmetric equilibrium of the pro-rata game with the tent reward curve.
///
/// Uses the falling-branch root when it exists; otherwise runs damped
/// best-response dynamics, which settle at the peak `K − ε` whenever
/// `ε ≤ K/n`. Either way the result is checked by a grid best response.
pub fn tent_equilibrium(tent: &TentFunction, n: usize) -> Result<SymmetricEquilibrium> {
    if n == 0 {
        return Err(Error::Domain("need at least 1 player".into()));
    }
    let game = tent.game();
    let step = tent.k / TENT_GRID;
    let nf = n as f64;
    let eq = match tent.descending_root(n) {
        Some(q) => SymmetricEquilibrium::new(n, q / nf, tent.eval(q) / nf),
        None => symmetric_best_response_dynamics(&game, n, tent.k / (2.0 * nf), tent.k, step)?,
    };
    let y = (nf - 1.0) * eq.per_player_action;
    let (br, _) = best_response(&game, y, tent.k, step);
    if (br - eq.per_player_action).abs() > TENT_FIXED_POINT_TOL {
        return Err(Error::NonConvergence(format!(
            "tent equilibrium candidate {} is not a best response (best response {br})",
            eq.per_player_action
        )));
    }
    Ok(eq)
}

/// One row of the welfare comparison between the three mechanisms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WelfareRow {
    pub n: usize,
    pub r_max: f64,
    pub welfare_dsic: f64,
    pub welfare_tent: f64,
}

pub fn welfare_rows(reward: f64, k: f64, epsilon: f64, n_max: usize) -> Result<Vec<WelfareRow>> {
    let dsic = DsicProRata::new(reward, k)?;
    let tent = TentFunction::new(reward, k, epsilon)?;
    (1..=n_max)
        .map(|n| {
            Ok(WelfareRow {
                n,
                r_max: rmax(n, reward),
                welfare_dsic: dsic.welfare(n),
                welfare_tent: tent_equilibrium(&tent, n)?.welfare,
            })
        })
        .collect()
}

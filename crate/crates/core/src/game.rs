//! Symmetric aggregative games and their Sybil extension.
//!
//! A game is a payoff oracle `phi(own_action, others_aggregate)` over a
//! one-dimensional action space. A player entering with identities
//! `a_1, …, a_k` collects `Σ_j phi(a_j, aggregate of every other identity)`
//! and pays `C(k, |foreign|)`. The verifier compares that payoff with the best
//! the player could do as a single identity.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{golden_section_max, uniform_grid};

/// Tolerance for "strictly profitable" in the deviation search.
pub const SYBIL_TOLERANCE: f64 = 1e-9;
/// Local refinement rounds run around the best grid tuple on continuous spaces.
pub const REFINE_ROUNDS: usize = 3;
/// Offsets tried per coordinate and refinement round (each side).
const REFINE_OFFSETS: i32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Continuous,
    Integer,
}

/// Nonnegative action space, either an interval of reals or of integers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionSpace {
    kind: ActionKind,
    lower: f64,
    upper: Option<f64>,
    grid_step: f64,
}

impl ActionSpace {
    pub fn continuous(lower: f64, upper: Option<f64>, grid_step: f64) -> Result<Self> {
        Self::validated(ActionKind::Continuous, lower, upper, grid_step)
    }

    /// Integer actions `lower..=upper` searched with unit step.
    pub fn integer(lower: u64, upper: Option<u64>) -> Result<Self> {
        Self::validated(ActionKind::Integer, lower as f64, upper.map(|u| u as f64), 1.0)
    }

    fn validated(kind: ActionKind, lower: f64, upper: Option<f64>, grid_step: f64) -> Result<Self> {
        if !(lower.is_finite() && lower >= 0.0) {
            return Err(Error::Domain(format!("action space lower bound {lower} must be >= 0")));
        }
        if let Some(u) = upper {
            if !(u.is_finite() && u > lower) {
                return Err(Error::Domain(format!(
                    "action space upper bound {u} must exceed lower bound {lower}"
                )));
            }
        }
        if !(grid_step.is_finite() && grid_step > 0.0) {
            return Err(Error::Domain(format!("grid step {grid_step} must be > 0")));
        }
        if kind == ActionKind::Integer && grid_step.fract() != 0.0 {
            return Err(Error::Domain(format!("integer grid step {grid_step} must be whole")));
        }
        Ok(Self {
            kind,
            lower,
            upper,
            grid_step,
        })
    }

    pub fn with_grid_step(self, grid_step: f64) -> Result<Self> {
        Self::validated(self.kind, self.lower, self.upper, grid_step)
    }

    pub fn kind(&self) -> ActionKind {
        self.kind
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> Option<f64> {
        self.upper
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }

    /// Why `x` is not an admissible action, if it is not.
    pub fn violation(&self, x: f64) -> Option<String> {
        if !x.is_finite() {
            return Some("not finite".into());
        }
        // Zero is the inactive action and always admissible.
        if x == 0.0 {
            return None;
        }
        if x < self.lower {
            return Some(format!("below lower bound {}", self.lower));
        }
        if let Some(u) = self.upper {
            if x > u {
                return Some(format!("above upper bound {u}"));
            }
        }
        if self.kind == ActionKind::Integer && x.fract() != 0.0 {
            return Some("not an integer".into());
        }
        None
    }

    pub fn contains(&self, x: f64) -> bool {
        self.violation(x).is_none()
    }

    /// Positive grid actions up to `min(upper, search_upper)`.
    pub fn positive_grid(&self, search_upper: Option<f64>) -> Result<Vec<f64>> {
        let hi = match (self.upper, search_upper) {
            (Some(u), Some(s)) => u.min(s),
            (Some(u), None) => u,
            (None, Some(s)) => s,
            (None, None) => {
                return Err(Error::Config(
                    "unbounded action space needs an upper search bound".into(),
                ))
            }
        };
        let first = match self.kind {
            ActionKind::Integer => self.lower.max(1.0),
            ActionKind::Continuous => {
                if self.lower > 0.0 {
                    self.lower
                } else {
                    self.grid_step
                }
            }
        };
        if first > hi {
            return Ok(Vec::new());
        }
        Ok(uniform_grid(first, hi, self.grid_step))
    }
}

/// How the actions of several identities combine into an aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    /// Quantity games: aggregate is the total, merging identities adds actions.
    Sum,
    /// Auctions: aggregate is the highest bid, merging keeps the highest bid.
    Max,
}

impl Aggregator {
    pub fn combine(self, a: f64, b: f64) -> f64 {
        match self {
            Aggregator::Sum => a + b,
            Aggregator::Max => a.max(b),
        }
    }

    pub fn fold<I: IntoIterator<Item = f64>>(self, values: I) -> f64 {
        values.into_iter().fold(0.0, |acc, v| self.combine(acc, v))
    }
}

pub type PayoffFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Anonymous aggregative game: a payoff `phi(own, others_aggregate)`
/// with `phi(0, y) = 0`.
#[derive(Clone)]
pub struct AggregativeGame {
    name: String,
    phi: PayoffFn,
    space: ActionSpace,
    aggregator: Aggregator,
}

impl fmt::Debug for AggregativeGame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AggregativeGame")
            .field("name", &self.name)
            .field("space", &self.space)
            .field("aggregator", &self.aggregator)
            .finish()
    }
}

impl AggregativeGame {
    pub fn new<F>(name: impl Into<String>, space: ActionSpace, aggregator: Aggregator, phi: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            phi: Arc::new(phi),
            space,
            aggregator,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn space(&self) -> &ActionSpace {
        &self.space
    }

    pub fn aggregator(&self) -> Aggregator {
        self.aggregator
    }

    pub fn with_space(mut self, space: ActionSpace) -> Self {
        self.space = space;
        self
    }

    pub fn phi(&self, own: f64, others: f64) -> f64 {
        (self.phi)(own, others)
    }

    /// Whether the action space is closed under the merge operation, so that
    /// several identities can always be replaced by one playing the merged action.
    pub fn is_monoid(&self) -> bool {
        match self.aggregator {
            Aggregator::Sum => self.space.upper.is_none(),
            Aggregator::Max => true,
        }
    }

    /// `phi(x, y) = reward · x / (x + y)`: a reward split in proportion to actions.
    pub fn proportional_share(reward: f64, space: ActionSpace) -> Self {
        Self::new("proportional-share", space, Aggregator::Sum, move |x, y| {
            if x <= 0.0 {
                0.0
            } else {
                reward * x / (x + y)
            }
        })
    }

    /// One-shot participation game: each identity either joins (action 1) or
    /// not, and the reward is split evenly among participants.
    pub fn participation(reward: f64) -> Self {
        let space = ActionSpace::integer(0, Some(1)).expect("static space");
        let mut game = Self::proportional_share(reward, space);
        game.name = "participation".into();
        game
    }

    /// `phi(x, y) = reward · x / (x + y) − c · x` on the nonnegative reals.
    pub fn reward_game(reward: f64, c: f64, grid_step: f64) -> Result<Self> {
        let space = ActionSpace::continuous(0.0, None, grid_step)?;
        Ok(Self::new("reward-game", space, Aggregator::Sum, move |x, y| {
            if x <= 0.0 {
                0.0
            } else {
                reward * x / (x + y) - c * x
            }
        }))
    }

    /// Pro-rata game `phi(x, y) = x / (x + y) · f(x + y)`.
    pub fn pro_rata(f: ScalarFn, space: ActionSpace) -> Self {
        Self::new("pro-rata", space, Aggregator::Sum, move |x, y| {
            pro_rata_payoff(&f, x, y)
        })
    }

    /// Linear Cournot oligopoly `phi(x, y) = x (beta − x − y)`.
    pub fn cournot(beta: f64, grid_step: f64) -> Result<Self> {
        let space = ActionSpace::continuous(0.0, None, grid_step)?;
        Ok(Self::new("cournot", space, Aggregator::Sum, move |x, y| {
            x * (beta - x - y)
        }))
    }
}

pub(crate) fn pro_rata_payoff(f: &ScalarFn, x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x / (x + y) * f.eval(x + y)
    }
}

/// Step of the central difference used when a [`ScalarFn`] has no derivative.
pub const FD_STEP: f64 = 1e-6;

/// Real function with an optional analytic derivative.
#[derive(Clone)]
pub struct ScalarFn {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    df: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarFn")
            .field("analytic_derivative", &self.df.is_some())
            .finish()
    }
}

impl ScalarFn {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            f: Arc::new(f),
            df: None,
        }
    }

    pub fn with_derivative<F, D>(f: F, df: D) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            f: Arc::new(f),
            df: Some(Arc::new(df)),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match &self.df {
            Some(df) => df(x),
            None => ((self.f)(x + FD_STEP) - (self.f)(x - FD_STEP)) / (2.0 * FD_STEP),
        }
    }

    pub fn has_analytic_derivative(&self) -> bool {
        self.df.is_some()
    }
}

pub type CostFn = Arc<dyn Fn(usize, usize) -> f64 + Send + Sync>;

/// Cost `C(own_identities, foreign_identities)` of entering with several identities.
#[derive(Clone)]
pub struct SybilCost {
    cost: CostFn,
    linear_c: Option<f64>,
}

impl fmt::Debug for SybilCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SybilCost").field("linear_c", &self.linear_c).finish()
    }
}

impl SybilCost {
    pub fn zero() -> Self {
        Self {
            cost: Arc::new(|_, _| 0.0),
            linear_c: Some(0.0),
        }
    }

    /// `C(x, y) = c · x`.
    pub fn linear(c: f64) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::Domain(format!("identity cost {c} must be >= 0")));
        }
        Ok(Self {
            cost: Arc::new(move |x, _| c * x as f64),
            linear_c: Some(c),
        })
    }

    /// `C(1, y) = 0` and `C(x, y) = +inf` for `x >= 2`: the Sybil game
    /// collapses to the underlying game.
    pub fn single_identity_only() -> Self {
        Self {
            cost: Arc::new(|x, _| if x <= 1 { 0.0 } else { f64::INFINITY }),
            linear_c: None,
        }
    }

    pub fn custom<F>(cost: F) -> Self
    where
        F: Fn(usize, usize) -> f64 + Send + Sync + 'static,
    {
        Self {
            cost: Arc::new(cost),
            linear_c: None,
        }
    }

    pub fn eval(&self, own: usize, foreign: usize) -> f64 {
        (self.cost)(own, foreign)
    }

    pub fn linear_c(&self) -> Option<f64> {
        self.linear_c
    }
}

/// One action per identity a player enters with; every action is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SybilStrategy(Vec<f64>);

impl SybilStrategy {
    pub fn new(actions: Vec<f64>) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::Domain("a Sybil strategy needs at least one identity".into()));
        }
        for (i, &a) in actions.iter().enumerate() {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::Inadmissible {
                    entry: format!("mine[{i}]"),
                    value: a,
                    reason: "identity actions must be positive".into(),
                });
            }
        }
        Ok(Self(actions))
    }

    pub fn actions(&self) -> &[f64] {
        &self.0
    }

    pub fn identities(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// A game in which a player's identities together may spend at most `budget`.
#[derive(Debug, Clone)]
pub struct BudgetedGame {
    pub base: AggregativeGame,
    pub budget: f64,
}

impl BudgetedGame {
    pub fn new(base: AggregativeGame, budget: f64) -> Result<Self> {
        if !(budget.is_finite() && budget >= 0.0) {
            return Err(Error::Domain(format!("budget {budget} must be >= 0")));
        }
        Ok(Self { base, budget })
    }

    pub fn admits(&self, mine: &SybilStrategy) -> bool {
        mine.total() <= self.budget + 1e-12
    }

    pub fn sybil_payoff(&self, cost: &SybilCost, mine: &SybilStrategy, foreign: &[f64]) -> Result<f64> {
        if !self.admits(mine) {
            return Err(Error::Inadmissible {
                entry: "mine".into(),
                value: mine.total(),
                reason: format!("total action exceeds budget {}", self.budget),
            });
        }
        sybil_payoff(&self.base, cost, mine, foreign)
    }
}

fn check_foreign(game: &AggregativeGame, foreign: &[f64]) -> Result<()> {
    for (i, &a) in foreign.iter().enumerate() {
        if let Some(reason) = game.space.violation(a) {
            return Err(Error::Inadmissible {
                entry: format!("foreign[{i}]"),
                value: a,
                reason,
            });
        }
    }
    Ok(())
}

fn check_mine(game: &AggregativeGame, mine: &SybilStrategy) -> Result<()> {
    for (i, &a) in mine.actions().iter().enumerate() {
        if let Some(reason) = game.space.violation(a) {
            return Err(Error::Inadmissible {
                entry: format!("mine[{i}]"),
                value: a,
                reason,
            });
        }
    }
    Ok(())
}

/// Gross payoff of my identities, before identity costs.
fn gross_sybil_payoff(game: &AggregativeGame, mine: &[f64], foreign_aggregate: f64) -> f64 {
    let agg = game.aggregator;
    (0..mine.len())
        .map(|j| {
            let others = mine
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != j)
                .fold(foreign_aggregate, |acc, (_, &a)| agg.combine(acc, a));
            game.phi(mine[j], others)
        })
        .sum()
}

/// Total payoff of a player entering with the identities in `mine` against
/// the identities in `foreign`: the sum of each identity's payoff, each facing
/// every other identity (own ones included), minus the identity cost.
pub fn sybil_payoff(game: &AggregativeGame, cost: &SybilCost, mine: &SybilStrategy, foreign: &[f64]) -> Result<f64> {
    check_foreign(game, foreign)?;
    check_mine(game, mine)?;
    let foreign_aggregate = game.aggregator.fold(foreign.iter().copied());
    Ok(gross_sybil_payoff(game, mine.actions(), foreign_aggregate) - cost.eval(mine.identities(), foreign.len()))
}

/// Payoff of the single identity playing the merge of `mine` (sum or max).
pub fn merged_payoff(game: &AggregativeGame, cost: &SybilCost, mine: &SybilStrategy, foreign: &[f64]) -> Result<f64> {
    if !game.is_monoid() {
        return Err(Error::Unsupported(format!(
            "game '{}' is not closed under merging identities",
            game.name
        )));
    }
    check_foreign(game, foreign)?;
    check_mine(game, mine)?;
    let merged = game.aggregator.fold(mine.actions().iter().copied());
    let foreign_aggregate = game.aggregator.fold(foreign.iter().copied());
    Ok(game.phi(merged, foreign_aggregate) - cost.eval(1, foreign.len()))
}

/// Outcome of a deviation search.
#[derive(Debug, Clone, PartialEq)]
pub enum SybilVerdict {
    /// No profitable multi-identity strategy at the searched grid resolution.
    Proof {
        resolution: f64,
    },
    Counterexample(Counterexample),
}

impl SybilVerdict {
    pub fn is_proof(&self) -> bool {
        matches!(self, SybilVerdict::Proof { .. })
    }

    pub fn counterexample(&self) -> Option<&Counterexample> {
        match self {
            SybilVerdict::Counterexample(c) => Some(c),
            SybilVerdict::Proof { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub mine: Vec<f64>,
    pub foreign: Vec<f64>,
    pub sybil_payoff: f64,
    /// Best single-identity payoff the deviation was compared against.
    pub single_payoff: f64,
    pub gain: f64,
}

/// Which single-identity strategy a deviation is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparator {
    /// The identity playing the merged action (games closed under merging).
    Merged,
    /// The best single action on the search grid (other games).
    BestSingle,
}

/// Brute-force search for a profitable Sybil deviation.
///
/// Enumerates multisets of grid actions with `2..=max_identities` identities
/// against each foreign profile. Continuous spaces additionally refine the
/// most profitable grid tuple. Returns the first deviation whose gain over
/// the single-identity comparator exceeds the tolerance, ordered by
/// (profile, identity count, lexicographic tuple).
#[derive(Debug, Clone)]
pub struct SybilVerifier {
    pub max_identities: usize,
    pub tolerance: f64,
    pub search_upper: Option<f64>,
    pub budget: Option<f64>,
}

impl SybilVerifier {
    pub fn new(max_identities: usize) -> Self {
        Self {
            max_identities,
            tolerance: SYBIL_TOLERANCE,
            search_upper: None,
            budget: None,
        }
    }

    pub fn search_upper(mut self, upper: f64) -> Self {
        self.search_upper = Some(upper);
        self
    }

    pub fn budget(mut self, budget: f64) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn comparator(game: &AggregativeGame) -> Comparator {
        if game.is_monoid() {
            Comparator::Merged
        } else {
            Comparator::BestSingle
        }
    }

    pub fn verify(
        &self,
        game: &AggregativeGame,
        cost: &SybilCost,
        foreign_profiles: &[Vec<f64>],
    ) -> Result<SybilVerdict> {
        if self.max_identities < 2 {
            return Err(Error::Config("max_identities must be at least 2".into()));
        }
        let mut grid = game.space.positive_grid(self.search_upper)?;
        if let Some(b) = self.budget {
            grid.retain(|&a| a <= b + 1e-12);
        }
        for profile in foreign_profiles {
            check_foreign(game, profile)?;
        }
        let found: Vec<Option<Counterexample>> = foreign_profiles
            .par_iter()
            .map(|profile| self.search_profile(game, cost, &grid, profile))
            .collect();
        Ok(match found.into_iter().flatten().next() {
            Some(c) => SybilVerdict::Counterexample(c),
            None => SybilVerdict::Proof {
                resolution: game.space.grid_step,
            },
        })
    }

    fn upper_limit(&self, game: &AggregativeGame) -> f64 {
        let mut hi = f64::INFINITY;
        if let Some(u) = game.space.upper {
            hi = hi.min(u);
        }
        if let Some(s) = self.search_upper {
            hi = hi.min(s);
        }
        if let Some(b) = self.budget {
            hi = hi.min(b);
        }
        hi
    }

    fn best_single(&self, game: &AggregativeGame, grid: &[f64], foreign_aggregate: f64) -> f64 {
        let mut best = grid.iter().map(|&a| (a, game.phi(a, foreign_aggregate))).fold(
            (0.0, game.phi(0.0, foreign_aggregate)),
            |acc, c| if c.1 > acc.1 { c } else { acc },
        );
        if game.space.kind == ActionKind::Continuous && !grid.is_empty() {
            let step = game.space.grid_step;
            let lo = (best.0 - step).max(0.0);
            let hi = (best.0 + step).min(self.upper_limit(game));
            let refined = golden_section_max(|a| game.phi(a, foreign_aggregate), lo, hi, 1e-12);
            if refined.1 > best.1 {
                best = refined;
            }
        }
        best.1
    }

    fn search_profile(
        &self,
        game: &AggregativeGame,
        cost: &SybilCost,
        grid: &[f64],
        foreign: &[f64],
    ) -> Option<Counterexample> {
        let agg = game.aggregator;
        let foreign_aggregate = agg.fold(foreign.iter().copied());
        let comparator = Self::comparator(game);
        let single_cost = cost.eval(1, foreign.len());
        let best_single = match comparator {
            Comparator::BestSingle => Some(self.best_single(game, grid, foreign_aggregate) - single_cost),
            Comparator::Merged => None,
        };
        let evaluate = |mine: &[f64]| -> (f64, f64) {
            let sybil = gross_sybil_payoff(game, mine, foreign_aggregate) - cost.eval(mine.len(), foreign.len());
            let single = match best_single {
                Some(s) => s,
                None => game.phi(agg.fold(mine.iter().copied()), foreign_aggregate) - single_cost,
            };
            (sybil, single)
        };
        let within_budget = |mine: &[f64]| match self.budget {
            Some(b) => mine.iter().sum::<f64>() <= b + 1e-12,
            None => true,
        };
        let witness = |mine: Vec<f64>, (sybil, single): (f64, f64)| Counterexample {
            mine,
            foreign: foreign.to_vec(),
            sybil_payoff: sybil,
            single_payoff: single,
            gain: sybil - single,
        };

        if grid.is_empty() {
            return None;
        }
        for k in 2..=self.max_identities {
            let mut best: Option<(Vec<f64>, f64)> = None;
            for idx in MultisetIndices::new(grid.len(), k) {
                let mine: Vec<f64> = idx.iter().map(|&i| grid[i]).collect();
                if !within_budget(&mine) {
                    continue;
                }
                let (sybil, single) = evaluate(&mine);
                let gain = sybil - single;
                if gain > self.tolerance {
                    return Some(witness(mine, (sybil, single)));
                }
                if best.as_ref().is_none_or(|(_, g)| gain > *g) {
                    best = Some((mine, gain));
                }
            }
            if game.space.kind == ActionKind::Continuous {
                if let Some((start, _)) = best {
                    let refined = self.refine(game, start, &evaluate, &within_budget);
                    let values = evaluate(&refined);
                    if values.0 - values.1 > self.tolerance {
                        return Some(witness(refined, values));
                    }
                }
            }
        }
        None
    }

    /// Coordinate-wise local search around `start`, shrinking the step tenfold per round.
    fn refine<E, B>(&self, game: &AggregativeGame, start: Vec<f64>, evaluate: &E, within_budget: &B) -> Vec<f64>
    where
        E: Fn(&[f64]) -> (f64, f64),
        B: Fn(&[f64]) -> bool,
    {
        let hi = self.upper_limit(game);
        let lo = game.space.lower;
        let gain = |m: &[f64]| {
            let (s, c) = evaluate(m);
            s - c
        };
        let mut current = start;
        let mut current_gain = gain(&current);
        let mut step = game.space.grid_step;
        for _ in 0..REFINE_ROUNDS {
            step /= 10.0;
            for coord in 0..current.len() {
                for offset in -REFINE_OFFSETS..=REFINE_OFFSETS {
                    let mut trial = current.clone();
                    let a = current[coord] + offset as f64 * step;
                    if a <= 0.0 || a < lo || a > hi {
                        continue;
                    }
                    trial[coord] = a;
                    if !within_budget(&trial) {
                        continue;
                    }
                    let g = gain(&trial);
                    if g > current_gain {
                        current = trial;
                        current_gain = g;
                    }
                }
            }
        }
        current
    }
}

/// `verify_sybilproof` with default tolerance and no budget.
pub fn verify_sybilproof(
    game: &AggregativeGame,
    cost: &SybilCost,
    max_identities: usize,
    foreign_profiles: &[Vec<f64>],
    search_upper: Option<f64>,
) -> Result<SybilVerdict> {
    let mut verifier = SybilVerifier::new(max_identities);
    verifier.search_upper = search_upper;
    verifier.verify(game, cost, foreign_profiles)
}

/// Nondecreasing index tuples of length `k` over `0..n`, in lexicographic order.
struct MultisetIndices {
    n: usize,
    current: Option<Vec<usize>>,
}

impl MultisetIndices {
    fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            current: if n == 0 || k == 0 { None } else { Some(vec![0; k]) },
        }
    }
}

impl Iterator for MultisetIndices {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let cur = self.current.as_mut().expect("checked above");
        let k = cur.len();
        let mut i = k;
        while i > 0 && cur[i - 1] == self.n - 1 {
            i -= 1;
        }
        if i == 0 {
            self.current = None;
        } else {
            let v = cur[i - 1] + 1;
            for slot in cur.iter_mut().skip(i - 1) {
                *slot = v;
            }
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_game() -> AggregativeGame {
        AggregativeGame::proportional_share(10.0, ActionSpace::integer(0, None).unwrap())
    }

    #[test]
    fn one_identity_against_three() {
        let cost = SybilCost::linear(0.1).unwrap();
        let mine = SybilStrategy::new(vec![1.0]).unwrap();
        let u = sybil_payoff(&example_game(), &cost, &mine, &[1.0, 1.0, 1.0]).unwrap();
        assert!((u - 2.4).abs() < 1e-12);
    }

    #[test]
    fn two_identities_against_three() {
        let cost = SybilCost::linear(0.1).unwrap();
        let mine = SybilStrategy::new(vec![1.0, 1.0]).unwrap();
        let u = sybil_payoff(&example_game(), &cost, &mine, &[1.0, 1.0, 1.0]).unwrap();
        assert!((u - 3.8).abs() < 1e-12);
    }

    #[test]
    fn zero_action_identity_is_rejected() {
        let err = SybilStrategy::new(vec![0.0]).unwrap_err();
        assert!(matches!(err, Error::Inadmissible { ref entry, .. } if entry == "mine[0]"));
    }

    #[test]
    fn single_identity_against_nobody() {
        let game = AggregativeGame::reward_game(10.0, 1.0, 0.1).unwrap();
        let cost = SybilCost::linear(0.5).unwrap();
        let mine = SybilStrategy::new(vec![2.0]).unwrap();
        let u = sybil_payoff(&game, &cost, &mine, &[]).unwrap();
        assert!((u - (game.phi(2.0, 0.0) - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn inadmissible_entries_are_named() {
        let game = AggregativeGame::participation(10.0);
        let cost = SybilCost::zero();
        let mine = SybilStrategy::new(vec![1.0, 2.0]).unwrap();
        match sybil_payoff(&game, &cost, &mine, &[1.0]).unwrap_err() {
            Error::Inadmissible { entry, value, .. } => {
                assert_eq!(entry, "mine[1]");
                assert_eq!(value, 2.0);
            }
            e => panic!("unexpected {e:?}"),
        }
        let mine = SybilStrategy::new(vec![1.0]).unwrap();
        match sybil_payoff(&game, &cost, &mine, &[1.0, 0.5]).unwrap_err() {
            Error::Inadmissible { entry, .. } => assert_eq!(entry, "foreign[1]"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn merged_payoff_uses_sum() {
        let mine = SybilStrategy::new(vec![1.0, 1.0]).unwrap();
        let u = merged_payoff(&example_game(), &SybilCost::zero(), &mine, &[1.0, 1.0, 1.0]).unwrap();
        assert!((u - 4.0).abs() < 1e-12);
    }

    #[test]
    fn merged_payoff_of_one_identity_matches_sybil_payoff() {
        let cost = SybilCost::linear(0.3).unwrap();
        let mine = SybilStrategy::new(vec![3.0]).unwrap();
        let foreign = [1.0, 2.0];
        let a = merged_payoff(&example_game(), &cost, &mine, &foreign).unwrap();
        let b = sybil_payoff(&example_game(), &cost, &mine, &foreign).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn merged_payoff_needs_a_monoid() {
        let mine = SybilStrategy::new(vec![1.0, 1.0]).unwrap();
        let err = merged_payoff(&AggregativeGame::participation(10.0), &SybilCost::zero(), &mine, &[1.0]).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn participation_game_rewards_a_second_identity() {
        let verdict = verify_sybilproof(
            &AggregativeGame::participation(10.0),
            &SybilCost::zero(),
            2,
            &[vec![1.0, 1.0, 1.0]],
            None,
        )
        .unwrap();
        let c = verdict.counterexample().expect("counterexample");
        assert_eq!(c.mine, vec![1.0, 1.0]);
        assert!((c.sybil_payoff - 4.0).abs() < 1e-12);
        assert!((c.single_payoff - 2.5).abs() < 1e-12);
        assert!((c.gain - 1.5).abs() < 1e-12);
    }

    #[test]
    fn pro_rata_games_are_sybil_proof() {
        let fs = [
            ScalarFn::new(|x| 10.0 - x),
            ScalarFn::new(|x: f64| x.sqrt()),
            ScalarFn::new(|x: f64| 3.0 * x * (-x).exp()),
        ];
        for f in fs {
            let game = AggregativeGame::pro_rata(f, ActionSpace::continuous(0.0, None, 0.5).unwrap());
            let verdict = verify_sybilproof(
                &game,
                &SybilCost::zero(),
                3,
                &[vec![], vec![1.0], vec![0.5, 2.0]],
                Some(3.0),
            )
            .unwrap();
            assert!(verdict.is_proof(), "{verdict:?}");
        }
    }

    #[test]
    fn cournot_is_sybil_proof_at_zero_cost() {
        let game = AggregativeGame::cournot(1.0, 0.05).unwrap();
        let q_star = 0.5;
        let verdict = verify_sybilproof(&game, &SybilCost::zero(), 3, &[vec![q_star]], Some(1.0)).unwrap();
        assert!(verdict.is_proof());
    }

    #[test]
    fn unbounded_space_needs_search_bound() {
        let err = verify_sybilproof(&example_game(), &SybilCost::zero(), 2, &[vec![1.0]], None).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn max_identities_below_two_is_rejected() {
        let err = verify_sybilproof(
            &AggregativeGame::participation(1.0),
            &SybilCost::zero(),
            1,
            &[vec![]],
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn single_identity_cost_collapses_to_underlying_game() {
        let verdict = verify_sybilproof(
            &AggregativeGame::participation(10.0),
            &SybilCost::single_identity_only(),
            3,
            &[vec![1.0, 1.0, 1.0], vec![]],
            None,
        )
        .unwrap();
        assert!(verdict.is_proof());
    }

    #[test]
    fn budget_limits_the_search() {
        // With budget 1 the participation game still allows only one unit, so no split exists.
        let game = AggregativeGame::proportional_share(10.0, ActionSpace::integer(0, Some(1)).unwrap());
        let verdict = SybilVerifier::new(3)
            .budget(1.0)
            .verify(&game, &SybilCost::zero(), &[vec![1.0, 1.0]])
            .unwrap();
        assert!(verdict.is_proof());
        let budgeted = BudgetedGame::new(game, 1.0).unwrap();
        let two = SybilStrategy::new(vec![1.0, 1.0]).unwrap();
        assert!(!budgeted.admits(&two));
        assert!(budgeted.sybil_payoff(&SybilCost::zero(), &two, &[1.0]).is_err());
    }

    #[test]
    fn continuous_refinement_finds_off_grid_gains() {
        // Payoff rewards identities exactly at 0.37; the grid step of 0.1 misses it.
        let space = ActionSpace::continuous(0.0, Some(1.0), 0.1).unwrap();
        let game = AggregativeGame::new("spike", space, Aggregator::Sum, |x, _| {
            if x <= 0.0 {
                0.0
            } else {
                (-(x - 0.37).powi(2) * 1e4).exp()
            }
        });
        let verdict = SybilVerifier::new(2)
            .verify(&game, &SybilCost::zero(), &[vec![]])
            .unwrap();
        let c = verdict.counterexample().expect("profitable split");
        assert!(c.mine.iter().all(|&a| (a - 0.37).abs() < 0.02), "{c:?}");
    }

    #[test]
    fn multiset_indices_enumerate_in_order() {
        let all: Vec<_> = MultisetIndices::new(3, 2).collect();
        assert_eq!(
            all,
            vec![vec![0, 0], vec![0, 1], vec![0, 2], vec![1, 1], vec![1, 2], vec![2, 2]]
        );
        assert_eq!(MultisetIndices::new(4, 3).count(), 20);
    }

    #[test]
    fn action_space_validation() {
        assert!(ActionSpace::continuous(-1.0, None, 0.1).is_err());
        assert!(ActionSpace::continuous(1.0, Some(1.0), 0.1).is_err());
        assert!(ActionSpace::continuous(0.0, None, 0.0).is_err());
        let s = ActionSpace::integer(0, Some(5)).unwrap();
        assert!(s.contains(3.0));
        assert!(!s.contains(2.5));
        assert!(!s.contains(6.0));
        assert_eq!(s.positive_grid(None).unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    }
}

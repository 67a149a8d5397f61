//! Two-phase Sybil-commitment games.
//!
//! Players first commit to a number of identities; every identity then plays
//! the symmetric equilibrium of the game with the resulting number of
//! participants. A player committing `x` identities against `k` foreign ones
//! earns `Ũ(x, k) = x · payoff(x + k) − C(x, k)`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::equilibrium::concave_prorata_equilibrium;
use crate::error::{Error, Result};
use crate::game::{ScalarFn, SybilCost};
use crate::numeric::strictly_exceeds;
use crate::rdm::rmax;

/// Relative margin by which one identity must beat every larger commitment.
pub const SCP_TOLERANCE: f64 = 1e-9;
/// Default largest commitment searched.
pub const DEFAULT_X_MAX: usize = 32;

/// Who collects the equilibrium payoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Payout {
    /// Each identity earns `payoff(n)`; a player's identities add up.
    PerIdentity,
    /// The player earns `payoff(n)` once, whatever its identity count.
    PerPlayer,
}

/// Per-participant payoff at the symmetric equilibrium of the game with `n` participants.
#[derive(Clone)]
pub struct EqPayoffOracle {
    payoff: Arc<dyn Fn(usize) -> f64 + Send + Sync>,
    payout: Payout,
    label: String,
    warning: Option<String>,
}

impl fmt::Debug for EqPayoffOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EqPayoffOracle")
            .field("label", &self.label)
            .field("payout", &self.payout)
            .field("warning", &self.warning)
            .finish()
    }
}

impl EqPayoffOracle {
    pub fn new<F>(label: impl Into<String>, payout: Payout, payoff: F) -> Self
    where
        F: Fn(usize) -> f64 + Send + Sync + 'static,
    {
        Self {
            payoff: Arc::new(payoff),
            payout,
            label: label.into(),
            warning: None,
        }
    }

    pub fn payoff(&self, n: usize) -> f64 {
        (self.payoff)(n)
    }

    /// `n · payoff(n)`.
    pub fn welfare(&self, n: usize) -> f64 {
        n as f64 * self.payoff(n)
    }

    pub fn payout(&self) -> Payout {
        self.payout
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn warning(&self) -> Option<&str> {
        self.warning.as_deref()
    }
}

#[derive(Debug, Clone)]
pub struct CommitmentInstance {
    pub oracle: EqPayoffOracle,
    pub cost: SybilCost,
    pub n_players: usize,
}

impl CommitmentInstance {
    pub fn new(oracle: EqPayoffOracle, cost: SybilCost, n_players: usize) -> Result<Self> {
        if n_players == 0 {
            return Err(Error::Domain("need at least one player".into()));
        }
        Ok(Self {
            oracle,
            cost,
            n_players,
        })
    }

    /// `Ũ(x, k)`: payoff of committing `x ≥ 1` identities against `k` foreign ones.
    pub fn commitment_payoff(&self, x: usize, foreign: usize) -> f64 {
        let gross = match self.oracle.payout {
            Payout::PerIdentity => x as f64 * self.oracle.payoff(x + foreign),
            Payout::PerPlayer => self.oracle.payoff(x + foreign),
        };
        gross - self.cost.eval(x, foreign)
    }
}

/// Best commitment `x ∈ 1..=x_max` against `foreign` identities; ties go to the smaller `x`.
pub fn commitment_best_response(inst: &CommitmentInstance, foreign: usize, x_max: usize) -> Result<(usize, f64)> {
    if x_max == 0 {
        return Err(Error::Config("x_max must be at least 1".into()));
    }
    let mut best = (1, inst.commitment_payoff(1, foreign));
    for x in 2..=x_max {
        let v = inst.commitment_payoff(x, foreign);
        if v > best.1 {
            best = (x, v);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ScpVerdict {
    /// One identity strictly beats every larger commitment.
    Scp,
    /// Committing `x` identities against `foreign` is at least as good as one.
    Counterexample {
        foreign: usize,
        x: usize,
        single: f64,
        multi: f64,
    },
}

impl ScpVerdict {
    pub fn is_scp(&self) -> bool {
        matches!(self, ScpVerdict::Scp)
    }
}

impl fmt::Display for ScpVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScpVerdict::Scp => f.write_str("scp"),
            ScpVerdict::Counterexample { foreign, x, .. } => write!(f, "counterexample:foreign={foreign};x={x}"),
        }
    }
}

/// Checks one foreign count: the first `x ≥ 2` not strictly worse than `x = 1`.
pub fn scp_check_at(inst: &CommitmentInstance, foreign: usize, x_max: usize) -> ScpVerdict {
    let single = inst.commitment_payoff(1, foreign);
    for x in 2..=x_max {
        let multi = inst.commitment_payoff(x, foreign);
        if !strictly_exceeds(single, multi, SCP_TOLERANCE) {
            return ScpVerdict::Counterexample {
                foreign,
                x,
                single,
                multi,
            };
        }
    }
    ScpVerdict::Scp
}

/// Whether committing one identity is strictly dominant for every foreign
/// count in `0..=foreign_max`; returns the first violation otherwise.
pub fn scp_check(inst: &CommitmentInstance, foreign_max: usize, x_max: usize) -> Result<ScpVerdict> {
    if x_max < 1 {
        return Err(Error::Config("x_max must be at least 1".into()));
    }
    for foreign in 0..=foreign_max {
        let v = scp_check_at(inst, foreign, x_max);
        if !v.is_scp() {
            return Ok(v);
        }
    }
    Ok(ScpVerdict::Scp)
}

/// `(n−1) R / 2^(n−2) + c n² / 2`: the largest equilibrium welfare a
/// Sybil-proof, commitment-proof game with reward `R` and identity cost `c` can reach.
pub fn scp_welfare_bound(n: usize, reward: f64, c: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain(format!("bound needs n >= 2, got {n}")));
    }
    let nf = n as f64;
    Ok((nf - 1.0) * reward / 2f64.powi(n as i32 - 2) + c * nf * nf / 2.0)
}

/// Linear Cournot market with demand intercept `alpha` and unit cost `c_prod`:
/// each of `n` firms earns `β² / (n+1)²`, `β = alpha − c_prod`.
pub fn cournot_oracle(alpha: f64, c_prod: f64) -> Result<EqPayoffOracle> {
    if !(c_prod < alpha) {
        return Err(Error::DegenerateMarket { alpha, cost: c_prod });
    }
    let beta = alpha - c_prod;
    Ok(EqPayoffOracle::new(
        format!("cournot(beta={beta})"),
        Payout::PerIdentity,
        move |n| beta * beta / ((n as f64 + 1.0) * (n as f64 + 1.0)),
    ))
}

/// Arbitrage profit `f(t) = g(t) − p t` against a constant-product pool with
/// reserves `(a, b)`, where `g(t) = b t / (a + t)` is the output for input `t`.
pub fn cfmm_profit(reserve_a: f64, reserve_b: f64, ext_price: f64) -> ScalarFn {
    ScalarFn::with_derivative(
        move |t| reserve_b * t / (reserve_a + t) - ext_price * t,
        move |t| reserve_b * reserve_a / ((reserve_a + t) * (reserve_a + t)) - ext_price,
    )
}

/// Arbitrageurs sharing one constant-product pool: each earns its pro-rata
/// share of `g(X) − p X` at the symmetric equilibrium. Without an arbitrage
/// opportunity (`b / a ≤ p`) the oracle is identically zero and carries a warning.
pub fn cfmm_arbitrage_oracle(reserve_a: f64, reserve_b: f64, ext_price: f64) -> Result<EqPayoffOracle> {
    for (name, v) in [
        ("reserve_a", reserve_a),
        ("reserve_b", reserve_b),
        ("ext_price", ext_price),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Domain(format!("{name} {v} must be > 0")));
        }
    }
    let label = format!("cfmm(a={reserve_a},b={reserve_b},p={ext_price})");
    if reserve_b / reserve_a <= ext_price {
        let mut oracle = EqPayoffOracle::new(label, Payout::PerIdentity, |_| 0.0);
        oracle.warning = Some(format!(
            "pool price {} does not exceed external price {ext_price}: no arbitrage",
            reserve_b / reserve_a
        ));
        return Ok(oracle);
    }
    let f = cfmm_profit(reserve_a, reserve_b, ext_price);
    // Validate eagerly so the oracle itself cannot fail later.
    concave_prorata_equilibrium(&f, 1)?;
    Ok(EqPayoffOracle::new(label, Payout::PerIdentity, move |n| {
        concave_prorata_equilibrium(&f, n.max(1)).map_or(f64::NAN, |eq| eq.per_player_payoff)
    }))
}

/// Game in which `n` participants each earn `2 e^(−n)` and the `l`-th of `k`
/// foreign-facing identities costs `l e^(−(l+k))` in total, so that
/// `Ũ(l, k) = l e^(−(l+k))`.
pub fn exponential_instance() -> CommitmentInstance {
    let oracle = EqPayoffOracle::new("exponential", Payout::PerIdentity, |n| 2.0 * (-(n as f64)).exp());
    let cost = SybilCost::custom(|l, k| l as f64 * (-((l + k) as f64)).exp());
    CommitmentInstance::new(oracle, cost, 1).expect("one player")
}

/// A player earns `3c/2` in total however many identities it commits, and
/// pays `c` per identity.
pub fn trivial_instance(c: f64) -> Result<CommitmentInstance> {
    let oracle = EqPayoffOracle::new(format!("trivial(c={c})"), Payout::PerPlayer, move |_| 1.5 * c);
    CommitmentInstance::new(oracle, SybilCost::linear(c)?, 1)
}

/// Each identity earns `r_max(n)/n = R / 2^(n−1)` and costs `c`.
pub fn rmax_instance(reward: f64, c: f64) -> Result<CommitmentInstance> {
    let oracle = EqPayoffOracle::new(format!("rmax(R={reward})"), Payout::PerIdentity, move |n| {
        rmax(n, reward) / n as f64
    });
    CommitmentInstance::new(oracle, SybilCost::linear(c)?, 1)
}

/// Built-in instances selectable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceKind {
    Cournot,
    Cfmm,
    Exp,
    Trivial,
    Rmax,
}

impl FromStr for InstanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cournot" => Ok(InstanceKind::Cournot),
            "cfmm" => Ok(InstanceKind::Cfmm),
            "exp" => Ok(InstanceKind::Exp),
            "trivial" => Ok(InstanceKind::Trivial),
            "rmax" => Ok(InstanceKind::Rmax),
            _ => Err(Error::Config(format!("unknown instance '{s}'"))),
        }
    }
}

/// Pool used by the `cfmm` instance: reserves 100 and 200, external price 1.
pub const DEFAULT_POOL: (f64, f64, f64) = (100.0, 200.0, 1.0);
/// Reward used by the `rmax` instance.
pub const DEFAULT_RMAX_REWARD: f64 = 10.0;

/// Builds a named instance with identity cost `c` (the exponential instance
/// has its own cost schedule and ignores `c`).
pub fn instance(kind: InstanceKind, c: f64) -> Result<CommitmentInstance> {
    match kind {
        InstanceKind::Cournot => CommitmentInstance::new(cournot_oracle(1.0, 0.0)?, SybilCost::linear(c)?, 1),
        InstanceKind::Cfmm => {
            let (a, b, p) = DEFAULT_POOL;
            CommitmentInstance::new(cfmm_arbitrage_oracle(a, b, p)?, SybilCost::linear(c)?, 1)
        }
        InstanceKind::Exp => Ok(exponential_instance()),
        InstanceKind::Trivial => trivial_instance(c),
        InstanceKind::Rmax => rmax_instance(DEFAULT_RMAX_REWARD, c),
    }
}

/// One row of the commitment sweep: `n` participants, i.e. `n − 1` foreign identities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommitRow {
    pub n: usize,
    /// `Ũ(1, n−1)`.
    pub eq_payoff: f64,
    /// `Ũ(2, n−1)`.
    pub commit2_payoff: f64,
    pub scp_verdict: ScpVerdict,
}

pub fn commit_rows(inst: &CommitmentInstance, n_max: usize, x_max: usize) -> Vec<CommitRow> {
    (1..=n_max)
        .map(|n| CommitRow {
            n,
            eq_payoff: inst.commitment_payoff(1, n - 1),
            commit2_payoff: inst.commitment_payoff(2, n - 1),
            scp_verdict: scp_check_at(inst, n - 1, x_max),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::symmetric_best_response_dynamics;
    use crate::game::AggregativeGame;

    fn cournot(c: f64) -> CommitmentInstance {
        CommitmentInstance::new(cournot_oracle(1.0, 0.0).unwrap(), SybilCost::linear(c).unwrap(), 2).unwrap()
    }

    #[test]
    fn cournot_rewards_a_second_identity() {
        let (x, v) = commitment_best_response(&cournot(0.0), 1, 10).unwrap();
        assert_eq!(x, 2);
        assert!((v - 0.125).abs() < 1e-15);
        match scp_check(&cournot(0.0), 20, DEFAULT_X_MAX).unwrap() {
            ScpVerdict::Counterexample { foreign, x, .. } => assert_eq!((foreign, x), (1, 2)),
            v => panic!("unexpected {v:?}"),
        }
    }

    #[test]
    fn cournot_witness_survives_small_costs() {
        let threshold = 0.125 - 1.0 / 9.0;
        for c in [0.0, 0.005, 0.9 * threshold] {
            assert_eq!(commitment_best_response(&cournot(c), 1, 10).unwrap().0, 2, "c = {c}");
        }
        assert_eq!(commitment_best_response(&cournot(1.1 * threshold), 1, 10).unwrap().0, 1);
    }

    #[test]
    fn cournot_oracle_values() {
        let o = cournot_oracle(1.0, 0.0).unwrap();
        assert_eq!(o.payoff(1), 0.25);
        assert!((o.payoff(2) - 1.0 / 9.0).abs() < 1e-15);
        assert!(matches!(cournot_oracle(1.0, 1.0), Err(Error::DegenerateMarket { .. })));
        // Welfare relative to the monopoly optimum shrinks like 1/n.
        for n in 1..=50 {
            let ratio = o.welfare(n) / 0.25;
            assert!(ratio * n as f64 >= 0.9 && ratio * n as f64 <= 4.0);
        }
    }

    #[test]
    fn cournot_oracle_matches_best_response_dynamics() {
        let o = cournot_oracle(1.0, 0.0).unwrap();
        let game = AggregativeGame::cournot(1.0, 1e-3).unwrap();
        for n in 1..=6 {
            let eq = symmetric_best_response_dynamics(&game, n, 0.1, 1.0, 1e-3).unwrap();
            assert!((eq.per_player_payoff - o.payoff(n)).abs() < 1e-6, "n = {n}");
        }
    }

    #[test]
    fn exponential_instance_is_scp() {
        let inst = exponential_instance();
        for k in 0..=20 {
            assert_eq!(commitment_best_response(&inst, k, DEFAULT_X_MAX).unwrap().0, 1);
        }
        assert!(scp_check(&inst, 20, DEFAULT_X_MAX).unwrap().is_scp());
    }

    #[test]
    fn trivial_instance_is_scp() {
        let inst = trivial_instance(1.0).unwrap();
        assert!((inst.commitment_payoff(1, 3) - 0.5).abs() < 1e-15);
        assert!((inst.commitment_payoff(2, 3) + 0.5).abs() < 1e-15);
        assert!(scp_check(&inst, 20, DEFAULT_X_MAX).unwrap().is_scp());
    }

    #[test]
    fn prohibitive_cost_is_scp() {
        let inst =
            CommitmentInstance::new(cournot_oracle(1.0, 0.0).unwrap(), SybilCost::single_identity_only(), 2).unwrap();
        assert!(scp_check(&inst, 20, DEFAULT_X_MAX).unwrap().is_scp());
    }

    #[test]
    fn bound_values() {
        assert_eq!(scp_welfare_bound(2, 10.0, 0.0).unwrap(), 10.0);
        assert_eq!(scp_welfare_bound(5, 10.0, 0.0).unwrap(), 5.0);
        for n in 2..=20 {
            assert!(rmax(n, 10.0) <= scp_welfare_bound(n, 10.0, 0.0).unwrap());
        }
        assert!(scp_welfare_bound(1, 10.0, 0.0).is_err());
    }

    #[test]
    fn solo_arbitrage_matches_calculus() {
        let (a, b, p) = DEFAULT_POOL;
        let o = cfmm_arbitrage_oracle(a, b, p).unwrap();
        let t = (a * b / p).sqrt() - a;
        let best = b * t / (a + t) - p * t;
        assert!((o.payoff(1) - best).abs() < 1e-9);
        assert!((o.payoff(1) - ((b).sqrt() - (p * a).sqrt()).powi(2)).abs() < 1e-9);
        let f = cfmm_profit(a, b, p);
        let grid_best = (0..=100_000).map(|i| f.eval(i as f64 * 1e-3)).fold(f64::MIN, f64::max);
        assert!((grid_best - best).abs() < 1e-6);
    }

    #[test]
    fn arbitrage_welfare_falls_with_competition() {
        let (a, b, p) = DEFAULT_POOL;
        let o = cfmm_arbitrage_oracle(a, b, p).unwrap();
        for n in 1..10 {
            assert!(o.welfare(n + 1) < o.welfare(n));
        }
        assert!((1..=10).any(|n| 2.0 * o.payoff(n + 1) > o.payoff(n)));
    }

    #[test]
    fn no_arbitrage_gives_zero_oracle() {
        let o = cfmm_arbitrage_oracle(100.0, 100.0, 1.0).unwrap();
        assert_eq!(o.payoff(3), 0.0);
        assert!(o.warning().is_some());
    }

    #[test]
    fn rows_label_foreign_counts() {
        let rows = commit_rows(&cournot(0.0), 4, DEFAULT_X_MAX);
        assert!(rows[0].scp_verdict.is_scp());
        assert_eq!(rows[1].scp_verdict.to_string(), "counterexample:foreign=1;x=2");
    }
}

//! Equilibria and price of anarchy for symmetric aggregative games.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{AggregativeGame, ScalarFn};
use crate::numeric::{bisect, golden_section_max, grid_argmax_refined};

/// Symmetric pure equilibrium: every player plays `per_player_action`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymmetricEquilibrium {
    pub per_player_action: f64,
    pub per_player_payoff: f64,
    pub n: usize,
    pub welfare: f64,
}

impl SymmetricEquilibrium {
    pub fn new(n: usize, per_player_action: f64, per_player_payoff: f64) -> Self {
        Self {
            per_player_action,
            per_player_payoff,
            n,
            welfare: n as f64 * per_player_payoff,
        }
    }

    /// Total action of all players.
    pub fn aggregate(&self) -> f64 {
        self.n as f64 * self.per_player_action
    }
}

/// Symmetric mixed equilibrium over two adjacent integer actions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscreteMixedEquilibrium {
    pub low: u64,
    pub high: u64,
    /// Probability of playing `low`.
    pub p: f64,
    pub n: usize,
    /// `E[U(low)] − E[U(high)]` at the returned `p`.
    pub indifference_gap: f64,
}

impl DiscreteMixedEquilibrium {
    pub fn is_interior(&self) -> bool {
        self.p > 0.0 && self.p < 1.0
    }
}

fn check_reward_game(reward: f64, c: f64) -> Result<()> {
    if !(reward.is_finite() && reward > 0.0) {
        return Err(Error::Domain(format!("reward {reward} must be > 0")));
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::Domain(format!("cost {c} must be > 0")));
    }
    Ok(())
}

fn reward_payoff(reward: f64, c: f64, x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        reward * x / (x + y) - c * x
    }
}

/// Best response `max(0, sqrt(R y / c) − y)` in the reward game.
///
/// At `y = 0` every positive action earns almost all of `R` but no maximiser
/// exists; the best response there is defined as 0.
pub fn best_response_reward_game(reward: f64, c: f64, y: f64) -> Result<f64> {
    check_reward_game(reward, c)?;
    if !(y.is_finite() && y >= 0.0) {
        return Err(Error::Domain(format!("aggregate {y} must be >= 0")));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    Ok(((reward * y / c).sqrt() - y).max(0.0))
}

/// Symmetric equilibrium of the continuous reward game: each player plays
/// `(R/c)(n−1)/n²`.
pub fn reward_game_pure_equilibrium(reward: f64, c: f64, n: usize) -> Result<SymmetricEquilibrium> {
    check_reward_game(reward, c)?;
    if n < 2 {
        return Err(Error::Domain(format!("need at least 2 players, got {n}")));
    }
    let nf = n as f64;
    let action = reward / c * (nf - 1.0) / (nf * nf);
    let payoff = reward_payoff(reward, c, action, (nf - 1.0) * action);
    Ok(SymmetricEquilibrium::new(n, action, payoff))
}

fn binomial_pmf(trials: usize, p: f64) -> Vec<f64> {
    let mut pmf = vec![0.0; trials + 1];
    let mut coeff = 1.0;
    for (j, slot) in pmf.iter_mut().enumerate() {
        if j > 0 {
            coeff *= (trials - j + 1) as f64 / j as f64;
        }
        *slot = coeff * p.powi(j as i32) * (1.0 - p).powi((trials - j) as i32);
    }
    pmf
}

/// Expected reward-game payoff of action `x` when each of `n − 1` opponents
/// independently plays `low` with probability `p` and `high` otherwise.
pub fn expected_mixed_payoff(reward: f64, c: f64, n: usize, low: u64, high: u64, p: f64, x: f64) -> f64 {
    let others = n - 1;
    binomial_pmf(others, p)
        .iter()
        .enumerate()
        .map(|(j, &pr)| {
            let y = j as f64 * low as f64 + (others - j) as f64 * high as f64;
            pr * reward_payoff(reward, c, x, y)
        })
        .sum()
}

/// Symmetric equilibrium of the integer reward game that mixes between
/// `⌊(R/c)(n−1)/n²⌋` and the next integer.
///
/// `p` solves the indifference condition by bisection. When the condition
/// has no root in `[0, 1]` the pure boundary profile that is a best response
/// is returned instead (`p = 1` if `low` is preferred throughout, else `p = 0`).
pub fn reward_game_mixed_equilibrium(reward: f64, c: f64, n: usize) -> Result<DiscreteMixedEquilibrium> {
    check_reward_game(reward, c)?;
    if n < 2 {
        return Err(Error::Domain(format!("need at least 2 players, got {n}")));
    }
    let nf = n as f64;
    let low = (reward / c * (nf - 1.0) / (nf * nf)).floor() as u64;
    let high = low + 1;
    let gap = |p: f64| {
        expected_mixed_payoff(reward, c, n, low, high, p, low as f64)
            - expected_mixed_payoff(reward, c, n, low, high, p, high as f64)
    };
    let p = match bisect(gap, 0.0, 1.0) {
        Ok(p) => p,
        Err(Error::NoSignChange { f_lo, .. }) => {
            if f_lo > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Err(e) => return Err(e),
    };
    Ok(DiscreteMixedEquilibrium {
        low,
        high,
        p,
        n,
        indifference_gap: gap(p),
    })
}

/// Largest gain any integer action in `0..=max_action` achieves over the
/// equilibrium's expected payoff.
pub fn mixed_deviation_gain(reward: f64, c: f64, eq: &DiscreteMixedEquilibrium, max_action: u64) -> f64 {
    let value = |x: f64| expected_mixed_payoff(reward, c, eq.n, eq.low, eq.high, eq.p, x);
    let eq_payoff = eq.p * value(eq.low as f64) + (1.0 - eq.p) * value(eq.high as f64);
    (0..=max_action)
        .map(|x| value(x as f64) - eq_payoff)
        .fold(f64::NEG_INFINITY, f64::max)
}

const BRACKET_STEPS: usize = 200;
const BRACKET_FLOOR: f64 = 1e-12;

/// Symmetric equilibrium of the pro-rata game `x/(x+y) · f(x+y)` for concave
/// `f`: the aggregate `q` solves `(n−1) f(q) + q f'(q) = 0`.
pub fn concave_prorata_equilibrium(f: &ScalarFn, n: usize) -> Result<SymmetricEquilibrium> {
    if n == 0 {
        return Err(Error::Domain("need at least 1 player".into()));
    }
    let k = (n - 1) as f64;
    let h = |q: f64| k * f.eval(q) + q * f.derivative(q);
    let (lo, hi) = bracket_descending_root(&h)?;
    let q = bisect(h, lo, hi)?;
    let nf = n as f64;
    Ok(SymmetricEquilibrium::new(n, q / nf, f.eval(q) / nf))
}

/// Interval `(lo, hi)` with `h(lo) > 0 ≥ h(hi)`, searched outward from 1.
fn bracket_descending_root<H: Fn(f64) -> f64>(h: &H) -> Result<(f64, f64)> {
    let start = 1.0;
    let h_start = h(start);
    if h_start > 0.0 {
        let mut lo = start;
        for _ in 0..BRACKET_STEPS {
            let hi = lo * 2.0;
            let h_hi = h(hi);
            if h_hi <= 0.0 {
                return Ok((lo, hi));
            }
            if !h_hi.is_finite() {
                break;
            }
            lo = hi;
        }
        Err(Error::NoInteriorEquilibrium(format!(
            "(n−1)f(q) + q f'(q) stays positive up to q = {lo:e}"
        )))
    } else {
        let mut hi = start;
        for _ in 0..BRACKET_STEPS {
            let lo = hi / 2.0;
            if lo < BRACKET_FLOOR {
                break;
            }
            if h(lo) > 0.0 {
                return Ok((lo, hi));
            }
            hi = lo;
        }
        Err(Error::NoInteriorEquilibrium(format!(
            "(n−1)f(q) + q f'(q) is nonpositive down to q = {hi:e}"
        )))
    }
}

/// Ratio of the best symmetric welfare to equilibrium welfare.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoaEstimate {
    pub ratio: f64,
    pub optimal_welfare: f64,
    /// Per-player action attaining the optimal welfare on the grid.
    pub argmax: f64,
    pub grid_step: f64,
}

/// Total welfare when each of `n` players plays `a`.
pub fn symmetric_welfare(game: &AggregativeGame, n: usize, a: f64) -> f64 {
    n as f64 * game.phi(a, (n as f64 - 1.0) * a)
}

/// Price of anarchy `W_opt / eq_welfare`, with `W_opt` the supremum of welfare
/// over symmetric profiles on the game's action grid (zero action included).
pub fn price_of_anarchy(
    game: &AggregativeGame,
    n: usize,
    eq_welfare: f64,
    search_upper: Option<f64>,
) -> Result<PoaEstimate> {
    if !(eq_welfare > 0.0) {
        return Err(Error::UndefinedPoa(eq_welfare));
    }
    if n == 0 {
        return Err(Error::Domain("need at least 1 player".into()));
    }
    let mut best = (0.0, symmetric_welfare(game, n, 0.0));
    for a in game.space().positive_grid(search_upper)? {
        let w = symmetric_welfare(game, n, a);
        if w > best.1 {
            best = (a, w);
        }
    }
    Ok(PoaEstimate {
        ratio: best.1 / eq_welfare,
        optimal_welfare: best.1,
        argmax: best.0,
        grid_step: game.space().grid_step(),
    })
}

/// Best response to aggregate `y` on `[0, upper]`: grid scan plus golden-section refinement.
pub fn best_response(game: &AggregativeGame, y: f64, upper: f64, step: f64) -> (f64, f64) {
    let lo = game.space().lower();
    let mut best = grid_argmax_refined(|x| game.phi(x, y), lo, upper, step, 1e-12);
    // The inactive action is always available.
    let idle = game.phi(0.0, y);
    if idle > best.1 {
        best = (0.0, idle);
    }
    best
}

/// Step size below which best-response dynamics stop.
pub const BR_TOLERANCE: f64 = 1e-10;
const BR_MAX_ITERS: usize = 10_000;

/// Fixed point of damped symmetric best-response dynamics, starting from `start`.
///
/// Each round moves the common action a fraction `1/n` of the way toward the
/// best response to the other `n − 1` players.
pub fn symmetric_best_response_dynamics(
    game: &AggregativeGame,
    n: usize,
    start: f64,
    upper: f64,
    step: f64,
) -> Result<SymmetricEquilibrium> {
    if n == 0 {
        return Err(Error::Domain("need at least 1 player".into()));
    }
    let others = (n - 1) as f64;
    let damping = 1.0 / n as f64;
    let mut a = start;
    for _ in 0..BR_MAX_ITERS {
        let br = best_response(game, others * a, upper, step).0;
        let next = a + damping * (br - a);
        if (next - a).abs() < BR_TOLERANCE {
            let payoff = game.phi(next, others * next);
            return Ok(SymmetricEquilibrium::new(n, next, payoff));
        }
        a = next;
    }
    Err(Error::NonConvergence(format!(
        "best-response dynamics for '{}' did not settle after {BR_MAX_ITERS} rounds",
        game.name()
    )))
}

/// Gap between a player's best response to the others' equilibrium play and
/// the equilibrium action itself.
pub fn fixed_point_residual(game: &AggregativeGame, eq: &SymmetricEquilibrium, upper: f64) -> f64 {
    let y = (eq.n as f64 - 1.0) * eq.per_player_action;
    let (x, _) = golden_section_max(|x| game.phi(x, y), 0.0, upper, 1e-12);
    let br = best_response(game, y, upper, upper / 1000.0);
    let chosen = if game.phi(x, y) >= br.1 { x } else { br.0 };
    (chosen - eq.per_player_action).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_game_best_response_matches_grid() {
        let br = best_response_reward_game(10.0, 1.0, 2.5).unwrap();
        assert!((br - 2.5).abs() < 1e-12);
        let mut best = (0.0, f64::NEG_INFINITY);
        for i in 0..=100_000 {
            let x = i as f64 * 1e-4;
            let u = reward_payoff(10.0, 1.0, x, 2.5);
            if u > best.1 {
                best = (x, u);
            }
        }
        assert!((best.0 - br).abs() < 1e-4);
        assert_eq!(best_response_reward_game(10.0, 1.0, 10.0).unwrap(), 0.0);
        assert_eq!(best_response_reward_game(10.0, 1.0, 0.0).unwrap(), 0.0);
        assert!(best_response_reward_game(10.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn pure_equilibrium_values() {
        let eq = reward_game_pure_equilibrium(10.0, 1.0, 2).unwrap();
        assert!((eq.per_player_action - 2.5).abs() < 1e-12);
        assert!((eq.per_player_payoff - 2.5).abs() < 1e-12);
        assert!((eq.welfare - 5.0).abs() < 1e-12);
        let eq = reward_game_pure_equilibrium(10.0, 1.0, 10).unwrap();
        assert!((eq.welfare - 1.0).abs() < 1e-12);
        assert!(reward_game_pure_equilibrium(10.0, 1.0, 1).is_err());
    }

    #[test]
    fn pure_equilibrium_is_a_fixed_point() {
        for &(r, c, n) in &[(10.0, 1.0, 2), (10.0, 0.5, 5), (100.0, 3.0, 7)] {
            let eq = reward_game_pure_equilibrium(r, c, n).unwrap();
            let br = best_response_reward_game(r, c, (n as f64 - 1.0) * eq.per_player_action).unwrap();
            assert!((br - eq.per_player_action).abs() < 1e-9);
        }
    }

    #[test]
    fn equilibrium_scales_with_reward_over_cost() {
        for r in [1.0, 10.0, 100.0] {
            for n in 2..6 {
                let base = reward_game_pure_equilibrium(r, 1.0, n).unwrap();
                let nf = n as f64;
                assert!((base.per_player_payoff - r / (nf * nf)).abs() < 1e-9 * r);
                let scaled = reward_game_pure_equilibrium(r, 0.25, n).unwrap();
                assert!((scaled.per_player_action - 4.0 * base.per_player_action).abs() < 1e-9 * r);
            }
        }
    }

    #[test]
    fn binomial_pmf_sums_to_one() {
        for p in [0.0, 0.3, 1.0] {
            let s: f64 = binomial_pmf(5, p).iter().sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn mixed_equilibrium_bracket_and_deviations() {
        let eq = reward_game_mixed_equilibrium(10.0, 1.0, 3).unwrap();
        assert_eq!((eq.low, eq.high), (2, 3));
        assert!((0.0..=1.0).contains(&eq.p));
        assert!(mixed_deviation_gain(10.0, 1.0, &eq, 4 * eq.high) <= 1e-9);
    }

    #[test]
    fn mixed_equilibrium_interior_root_is_indifferent() {
        // R = 20, n = 2: floor(20/4) = 5 is an integer but the integer game mixes
        // whenever the indifference condition has an interior root.
        for &(r, n) in &[(20.0, 2), (30.0, 4), (50.0, 3), (7.0, 2)] {
            let eq = reward_game_mixed_equilibrium(r, 1.0, n).unwrap();
            if eq.is_interior() {
                assert!(eq.indifference_gap.abs() < 1e-9, "{eq:?}");
            }
            assert!(mixed_deviation_gain(r, 1.0, &eq, 4 * eq.high) <= 1e-9, "{eq:?}");
        }
    }

    #[test]
    fn affine_prorata_matches_closed_form() {
        let f = ScalarFn::with_derivative(|x| 10.0 - x, |_| -1.0);
        let eq = concave_prorata_equilibrium(&f, 2).unwrap();
        assert!((eq.per_player_action - 2.5).abs() < 1e-9);
        assert!((eq.per_player_payoff - 2.5).abs() < 1e-9);
        let eq = concave_prorata_equilibrium(&f, 10).unwrap();
        assert!((eq.welfare - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_player_prorata_maximises_f() {
        let f = ScalarFn::new(|x: f64| 10.0 * x * (1.0 - x).exp());
        let eq = concave_prorata_equilibrium(&f, 1).unwrap();
        assert!((eq.per_player_action - 1.0).abs() < 1e-6);
        assert!((eq.per_player_payoff - 10.0).abs() < 1e-9);
    }

    #[test]
    fn prorata_without_interior_root_errors() {
        let f = ScalarFn::with_derivative(|x| x, |_| 1.0);
        assert!(matches!(
            concave_prorata_equilibrium(&f, 2),
            Err(Error::NoInteriorEquilibrium(_))
        ));
    }

    #[test]
    fn poa_of_reward_game_is_about_n() {
        let game = AggregativeGame::reward_game(10.0, 1.0, 1e-3).unwrap();
        let eq = reward_game_pure_equilibrium(10.0, 1.0, 5).unwrap();
        let poa = price_of_anarchy(&game, 5, eq.welfare, Some(10.0)).unwrap();
        assert!((eq.welfare - 2.0).abs() < 1e-12);
        assert!((poa.ratio - 5.0).abs() < 0.05 * 5.0, "{poa:?}");
        assert_eq!(poa.argmax, 1e-3);
        assert!(matches!(
            price_of_anarchy(&game, 5, 0.0, Some(1.0)),
            Err(Error::UndefinedPoa(_))
        ));
    }

    #[test]
    fn best_response_dynamics_find_reward_equilibrium() {
        let game = AggregativeGame::reward_game(10.0, 1.0, 0.01).unwrap();
        let eq = symmetric_best_response_dynamics(&game, 3, 1.0, 10.0, 0.01).unwrap();
        let exact = reward_game_pure_equilibrium(10.0, 1.0, 3).unwrap();
        assert!((eq.per_player_action - exact.per_player_action).abs() < 1e-6);
        assert!(fixed_point_residual(&game, &exact, 10.0) < 1e-6);
    }
}

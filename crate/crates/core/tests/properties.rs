use proptest::prelude::*;
use sybil_lab::cake::{exact_partition, measure_value, simulate, sybil_deviation_value, PiecewiseMeasure};
use sybil_lab::commitment::{cournot_oracle, exponential_instance, scp_check_at, CommitmentInstance};
use sybil_lab::dist::ValueDistribution;
use sybil_lab::equilibrium::{best_response_reward_game, reward_game_pure_equilibrium};
use sybil_lab::game::{merged_payoff, sybil_payoff, ActionSpace, AggregativeGame, SybilCost, SybilStrategy};
use sybil_lab::rdm::{check_rdm_sybilproof, rmax, DsicProRata, RewardMechanism};
use sybil_lab::ring::{transfer_t, RingConfig, ShareRule};

fn measure() -> impl Strategy<Value = PiecewiseMeasure> {
    (1usize..6).prop_flat_map(|pieces| {
        (
            prop::collection::vec(0.01f64..0.99, pieces - 1),
            prop::collection::vec(0.0f64..3.0, pieces),
        )
            .prop_filter_map("degenerate measure", |(mut cuts, raw)| {
                cuts.sort_by(f64::total_cmp);
                cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
                let mut bps = vec![0.0];
                bps.extend(cuts);
                bps.push(1.0);
                let raw = &raw[..bps.len() - 1];
                let mass: f64 = bps.windows(2).zip(raw).map(|(w, d)| d * (w[1] - w[0])).sum();
                if mass < 1e-3 {
                    return None;
                }
                PiecewiseMeasure::new(bps, raw.iter().map(|d| d / mass).collect()).ok()
            })
    })
}

proptest! {
    #[test]
    fn splitting_is_neutral_in_proportional_share(
        reward in 0.1f64..100.0,
        mine in prop::collection::vec(0.01f64..5.0, 2..5),
        foreign in prop::collection::vec(0.01f64..5.0, 0..5),
    ) {
        let game = AggregativeGame::proportional_share(reward, ActionSpace::continuous(0.0, None, 0.1).unwrap());
        let cost = SybilCost::zero();
        let strategy = SybilStrategy::new(mine).unwrap();
        let split = sybil_payoff(&game, &cost, &strategy, &foreign).unwrap();
        let merged = merged_payoff(&game, &cost, &strategy, &foreign).unwrap();
        prop_assert!((split - merged).abs() <= 1e-9 * reward);
    }

    #[test]
    fn sybil_payoff_ignores_identity_order(
        mut mine in prop::collection::vec(0.01f64..5.0, 2..5),
        foreign in prop::collection::vec(0.01f64..5.0, 1..4),
    ) {
        let game = AggregativeGame::cournot(10.0, 0.1).unwrap();
        let cost = SybilCost::linear(0.2).unwrap();
        let a = sybil_payoff(&game, &cost, &SybilStrategy::new(mine.clone()).unwrap(), &foreign).unwrap();
        mine.reverse();
        let b = sybil_payoff(&game, &cost, &SybilStrategy::new(mine).unwrap(), &foreign).unwrap();
        prop_assert!((a - b).abs() <= 1e-9);
    }

    #[test]
    fn reward_best_response_beats_any_action(
        reward in 1.0f64..50.0,
        c in 0.1f64..5.0,
        y in 0.0f64..20.0,
        x in 0.0f64..20.0,
    ) {
        let u = |a: f64| if a <= 0.0 { 0.0 } else { reward * a / (a + y) - c * a };
        let br = best_response_reward_game(reward, c, y).unwrap();
        prop_assert!(u(br) >= u(x) - 1e-9);
    }

    #[test]
    fn pure_equilibrium_is_a_fixed_point(reward in 1.0f64..50.0, c in 0.1f64..5.0, n in 2usize..12) {
        let eq = reward_game_pure_equilibrium(reward, c, n).unwrap();
        let y = (n as f64 - 1.0) * eq.per_player_action;
        let br = best_response_reward_game(reward, c, y).unwrap();
        prop_assert!((br - eq.per_player_action).abs() <= 1e-9 * (1.0 + br));
    }

    #[test]
    fn scaled_rmax_stays_sybil_proof(reward in 0.1f64..100.0, scale in 0.01f64..1.0) {
        let mech = RewardMechanism::new(reward, move |n| scale * rmax(n, reward));
        prop_assert!(check_rdm_sybilproof(&mech, 24, 24).unwrap().is_proof());
    }

    #[test]
    fn dsic_action_is_dominant(reward in 0.1f64..100.0, k in 0.1f64..10.0, y in 0.0f64..50.0, x in 0.0f64..50.0) {
        let dsic = DsicProRata::new(reward, k).unwrap();
        prop_assert!(dsic.payoff(k, y) >= dsic.payoff(x, y) - 1e-9 * reward);
    }

    #[test]
    fn exact_partition_gives_everyone_a_fair_share(measures in prop::collection::vec(measure(), 2..6)) {
        let n = measures.len();
        let pieces = exact_partition(&measures, n).unwrap();
        let total: f64 = pieces.iter().map(|s| s.length()).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        for mu in &measures {
            for s in &pieces {
                prop_assert!((measure_value(mu, s) - 1.0 / n as f64).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn more_identities_never_raise_lottery_value(k in 1usize..40, y in 0usize..40) {
        prop_assert!(sybil_deviation_value(k + 1, y) <= sybil_deviation_value(k, y));
    }

    #[test]
    fn simulation_is_reproducible(n in 2usize..6, seed in any::<u64>()) {
        let measures = vec![PiecewiseMeasure::uniform(); n];
        prop_assert_eq!(simulate(&measures, 64, seed).unwrap(), simulate(&measures, 64, seed).unwrap());
    }

    #[test]
    fn quantile_inverts_cdf(rate in 0.1f64..8.0, hi in 0.5f64..4.0, p in 0.0f64..1.0) {
        for d in [
            ValueDistribution::Uniform { hi },
            ValueDistribution::TruncatedExponential { rate, hi },
            ValueDistribution::Beta22,
        ] {
            prop_assert!((d.cdf(d.quantile(p)) - p).abs() <= 1e-9);
        }
    }

    #[test]
    fn ring_transfer_is_below_value_and_increasing(theta in 0.0f64..1.0, n in 2usize..6, v in 0.05f64..0.95) {
        let cfg = RingConfig::new(ShareRule::constant(theta), 0.0, n).unwrap();
        let d = ValueDistribution::uniform();
        let t = transfer_t(v, &cfg, &d).unwrap();
        let t_up = transfer_t(v + 0.04, &cfg, &d).unwrap();
        prop_assert!((0.0..=v).contains(&t));
        prop_assert!(t_up >= t);
    }

    #[test]
    fn cournot_commitment_never_beats_one_identity_when_expensive(k in 0usize..10) {
        // Identity cost above the whole market's profit rules out extra identities.
        let inst = CommitmentInstance::new(cournot_oracle(1.0, 0.0).unwrap(), SybilCost::linear(0.3).unwrap(), 1).unwrap();
        prop_assert!(scp_check_at(&inst, k, 16).is_scp());
    }

    #[test]
    fn exponential_instance_is_commitment_proof(k in 0usize..30) {
        prop_assert!(scp_check_at(&exponential_instance(), k, 32).is_scp());
    }
}

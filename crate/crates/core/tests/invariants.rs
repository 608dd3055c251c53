use proptest::prelude::*;

use noma_access::agent::{access_from_log, AgentState, PgAgent, PgHyper, PolicyState, RewardKind};
use noma_access::rng::{substream, Domain};
use noma_access::sim::{DetectionMode, FrameActions, SimConfig, Simulator, SlotRule, TableOverflow};
use noma_access::slot_hash::candidate_seeds;

fn small_sim(slots: usize, n1: usize, n2: usize, lambda: f64, seed: u64, detection: DetectionMode) -> Simulator {
    Simulator::new(SimConfig {
        lambda,
        master_seed: seed,
        detection,
        table_overflow: TableOverflow::Clamp,
        ..SimConfig::two_cluster(slots, n1, n2)
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn packets_are_conserved(
        slots in 1usize..6, n1 in 1usize..6, n2 in 1usize..6,
        lambda in 0.05f64..1.0, a1 in 0.1f64..1.0, a2 in 0.1f64..1.0,
        seed in any::<u64>(), physical in any::<bool>(),
    ) {
        let detection = if physical { DetectionMode::Physical } else { DetectionMode::Table };
        let mut sim = small_sim(slots, n1, n2, lambda, seed, detection);
        let actions = FrameActions { access_probs: vec![a1, a2], rules: vec![SlotRule::Uniform; 2] };
        for _ in 0..200 {
            let out = sim.run_frame(&actions).unwrap();
            for (tx, ok) in out.slots.iter().zip(&out.decoded) {
                prop_assert!(ok.len() <= tx.len());
                prop_assert!(ok.iter().all(|d| tx.contains(d)));
            }
            let decoded: usize = out.decoded.iter().map(Vec::len).sum();
            prop_assert_eq!(out.total_successes() as usize, decoded);
        }
        prop_assert_eq!(sim.total_arrivals, sim.total_acked + sim.queued());
    }

    #[test]
    fn a_device_uses_at_most_one_slot_per_frame(
        slots in 1usize..6, n in 1usize..8, seed in any::<u64>(),
    ) {
        let mut sim = small_sim(slots, n, n, 1.0, seed, DetectionMode::Table);
        let actions = FrameActions::without_access_control(2);
        for _ in 0..50 {
            let out = sim.run_frame(&actions).unwrap();
            let mut ids: Vec<_> = out.slots.iter().flatten().collect();
            let total = ids.len();
            ids.sort();
            ids.dedup();
            prop_assert_eq!(ids.len(), total);
        }
    }

    #[test]
    fn access_probability_stays_in_range(log_a in -50.0f64..50.0) {
        let a = access_from_log(log_a);
        prop_assert!((0.1..=1.0).contains(&a));
    }

    #[test]
    fn agent_actions_stay_valid(seed in any::<u64>(), steps in proptest::collection::vec((0u64..9, 0u64..9), 1..40)) {
        let hyper = PgHyper { candidate_seeds: 3, ..PgHyper::default() };
        let policy = PolicyState::cold_start(hyper, 17, &[true, false]);
        let pools = vec![candidate_seeds(3, seed).unwrap(), Vec::new()];
        let mut agent = PgAgent::new(policy, RewardKind::R2, pools, substream(seed, Domain::Agent, 0));
        for (u1, u2) in steps {
            let acts = agent.step(&[u1, u2], AgentState((u1 + u2) as usize)).unwrap().clone();
            prop_assert!(acts.access_probs.iter().all(|a| (0.1..=1.0).contains(a)));
            prop_assert!(acts.seeds[0].is_some_and(|c| c.index < 3));
            prop_assert!(acts.seeds[1].is_none());
            let row = agent.policy.seed_probabilities(0, AgentState(3)).unwrap();
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(agent.policy.omega.iter().all(|w| w.is_finite()));
        }
    }
}

mod common;

use blocklayout::baseline_layouts::{cache_order, ph_bottomup, ph_topdown};
use blocklayout::cfg_model::{jump_length, offsets, validate, Direction};
use blocklayout::exact_layout::{
    branch_and_bound, exhaustive, prefix_bound, ExactConfig, ExactStatus,
};
use blocklayout::model_fit::{featurize, kendall_tau, score_records};
use blocklayout::scoring::{degenerate_tsp_params, scores_tie};
use blocklayout::synth::{generate, GenConfig};
use blocklayout::*;
use common::*;
use proptest::prelude::*;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn is_entry_first_permutation(cfg: &ControlFlowGraph, layout: &Layout) -> bool {
    let mut sorted = layout.order.clone();
    sorted.sort_unstable();
    sorted == (0..cfg.num_blocks()).collect::<Vec<_>>() && layout.order[0] == cfg.entry
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn offsets_are_prefix_sums((cfg, order) in arb_cfg_and_order(12, 20)) {
        let layout = Layout::new(order.clone());
        let starts = offsets(&cfg, &layout).unwrap();
        let sizes = cfg.sizes_by_id();
        prop_assert_eq!(starts[order[0]], 0);
        for w in order.windows(2) {
            prop_assert_eq!(starts[w[1]], starts[w[0]] + sizes[w[0]]);
        }
        let last = *order.last().unwrap();
        prop_assert_eq!(starts[last] + sizes[last], sizes.iter().sum::<u64>());
    }

    #[test]
    fn jump_lengths_forward_backward_relation((cfg, order) in arb_cfg_and_order(10, 0)) {
        prop_assume!(order.len() >= 2);
        let layout = Layout::new(order.clone());
        let sizes = cfg.sizes_by_id();
        for i in 0..order.len() {
            for j in i + 1..order.len() {
                let (s, t) = (order[i], order[j]);
                let between: u64 = order[i + 1..j].iter().map(|&b| sizes[b]).sum();
                let fwd = jump_length(&cfg, &layout, s, t).unwrap();
                let bwd = jump_length(&cfg, &layout, t, s).unwrap();
                prop_assert_eq!(fwd.len, between);
                prop_assert_eq!(fwd.direction, if j == i + 1 { Direction::FallThrough } else { Direction::Forward });
                prop_assert_eq!(bwd.direction, Direction::Backward);
                prop_assert_eq!(bwd.len, fwd.len + sizes[s] + sizes[t]);
            }
        }
    }

    #[test]
    fn scores_match_oracle((cfg, order) in arb_cfg_and_order(12, 24), params in arb_params()) {
        let layout = Layout::new(order.clone());
        prop_assert!(close(exttsp_score(&cfg, &layout, &params).unwrap(), oracle_score(&cfg, &order, &params)));
        prop_assert!(close(exttsp_score(&cfg, &layout, &DEFAULT_EXTTSP).unwrap(), oracle_score(&cfg, &order, &DEFAULT_EXTTSP)));
        prop_assert_eq!(tsp_score(&cfg, &layout).unwrap(), oracle_tsp(&cfg, &order));
    }

    #[test]
    fn degenerate_params_give_tsp((cfg, order) in arb_cfg_and_order(12, 24)) {
        let layout = Layout::new(order);
        prop_assert_eq!(exttsp_score(&cfg, &layout, &degenerate_tsp_params()).unwrap(), tsp_score(&cfg, &layout).unwrap());
    }

    #[test]
    fn score_is_linear_in_weights_and_k((cfg, order) in arb_cfg_and_order(10, 20)) {
        let layout = Layout::new(order);
        let base = exttsp_score(&cfg, &layout, &DEFAULT_EXTTSP).unwrap();
        let mut doubled = cfg.clone();
        for e in &mut doubled.edges {
            e.weight *= 2.0;
        }
        prop_assert_eq!(exttsp_score(&doubled, &layout, &DEFAULT_EXTTSP).unwrap(), 2.0 * base);
        let mut half = DEFAULT_EXTTSP;
        for d in [Direction::FallThrough, Direction::Forward, Direction::Backward] {
            let dp = half.direction_mut(d);
            dp.conditional.k *= 0.5;
            dp.unconditional.k *= 0.5;
        }
        prop_assert_eq!(exttsp_score(&cfg, &layout, &half).unwrap(), 0.5 * base);
    }

    #[test]
    fn score_ignores_edge_order((cfg, order) in arb_cfg_and_order(10, 20), seed in any::<u64>()) {
        use rand::{seq::SliceRandom, SeedableRng};
        let layout = Layout::new(order);
        let mut shuffled = cfg.clone();
        shuffled.edges.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(close(
            exttsp_score(&cfg, &layout, &DEFAULT_EXTTSP).unwrap(),
            exttsp_score(&shuffled, &layout, &DEFAULT_EXTTSP).unwrap()
        ));
    }

    #[test]
    fn normalization_is_idempotent(cfg in arb_cfg(10, 30)) {
        prop_assert!(validate(&cfg).is_empty());
        let again = cfg.normalized();
        prop_assert_eq!(&again, &cfg);
    }

    #[test]
    fn orderers_return_entry_first_permutations(cfg in arb_cfg(14, 30), k in 0usize..16) {
        let greedy = reorder(&cfg, &GreedyConfig { split_threshold: k, ..Default::default() }).unwrap();
        prop_assert!(is_entry_first_permutation(&cfg, &greedy));
        for layout in [ph_topdown(&cfg).unwrap(), ph_bottomup(&cfg).unwrap(), cache_order(&cfg).unwrap()] {
            prop_assert!(is_entry_first_permutation(&cfg, &layout));
        }
    }

    #[test]
    fn greedy_is_deterministic_and_memo_transparent(cfg in arb_cfg(14, 30), k in 0usize..16) {
        let config = GreedyConfig { split_threshold: k, ..Default::default() };
        let a = reorder(&cfg, &config).unwrap();
        prop_assert_eq!(&a, &reorder(&cfg, &config).unwrap());
        let uncached = reorder(&cfg, &GreedyConfig { memoize: false, ..config }).unwrap();
        prop_assert_eq!(a, uncached);
    }

    #[test]
    fn thresholds_at_or_above_size_agree(cfg in arb_cfg(14, 30), extra in 0usize..100) {
        let n = cfg.num_blocks();
        let at = reorder(&cfg, &GreedyConfig { split_threshold: n, ..Default::default() }).unwrap();
        let above = reorder(&cfg, &GreedyConfig { split_threshold: n + extra, ..Default::default() }).unwrap();
        prop_assert_eq!(at, above);
    }

    #[test]
    fn featurize_round_trip((cfg, order) in arb_cfg_and_order(12, 24), params in arb_params()) {
        let layout = Layout::new(order);
        let records = featurize(&cfg, &layout).unwrap();
        prop_assert_eq!(records.len(), cfg.edges.iter().filter(|e| e.src != e.dst).count());
        for r in &records {
            prop_assert_eq!(r.length == 0, r.direction == Direction::FallThrough);
        }
        prop_assert_eq!(score_records(&records, &params), exttsp_score(&cfg, &layout, &params).unwrap());
    }

    #[test]
    fn kendall_matches_oracle_and_is_rank_invariant(
        pairs in prop::collection::vec((0u8..8, 0u8..8), 2..40),
        shift in -5.0f64..5.0,
        scale in 0.1f64..10.0,
    ) {
        let xs: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let ys: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
        prop_assume!(!constant(&xs) && !constant(&ys));
        let t = kendall_tau(&xs, &ys).unwrap();
        prop_assert!((t - oracle_tau(&xs, &ys)).abs() < 1e-12);
        let xt: Vec<f64> = xs.iter().map(|x| (scale * x + shift).exp()).collect();
        let yt: Vec<f64> = ys.iter().map(|y| y.powi(3) - shift).collect();
        prop_assert!((kendall_tau(&xt, &yt).unwrap() - t).abs() < 1e-12);
    }

    #[test]
    fn generated_graphs_are_valid(seed in any::<u64>(), n in 1usize..60) {
        let cfg = generate(&GenConfig { seed, n_blocks: n, ..Default::default() }).unwrap();
        prop_assert!(validate(&cfg).is_empty());
        prop_assert_eq!(cfg.num_blocks(), n);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_solvers_match_brute_force(cfg in arb_cfg(7, 16), params in arb_params()) {
        let (best, _) = oracle_best(&cfg, &params);
        let enumerated = exhaustive(&cfg, &params).unwrap();
        let searched = branch_and_bound(&cfg, &ExactConfig { params, ..Default::default() }).unwrap();
        prop_assert_eq!(searched.status, ExactStatus::Optimal);
        prop_assert!(scores_tie(enumerated.score, best) || enumerated.score == best);
        prop_assert!(scores_tie(searched.score, best) || searched.score == best);
        prop_assert!(is_entry_first_permutation(&cfg, &searched.layout));
        prop_assert_eq!(searched.score, exttsp_score(&cfg, &searched.layout, &params).unwrap());
    }

    #[test]
    fn prefix_bound_is_admissible(cfg in arb_cfg(7, 16), params in arb_params(), cut in 0usize..7, seed in any::<u64>()) {
        use rand::{seq::SliceRandom, SeedableRng};
        let n = cfg.num_blocks();
        let mut rest: Vec<BlockId> = (0..n).filter(|&b| b != cfg.entry).collect();
        rest.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let cut = cut.min(rest.len());
        let mut prefix = vec![cfg.entry];
        prefix.extend_from_slice(&rest[..cut]);
        let remaining = &rest[cut..];
        let best_completion = permutations(remaining)
            .into_iter()
            .map(|tail| {
                let mut order = prefix.clone();
                order.extend(tail);
                oracle_score(&cfg, &order, &params)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let bound = prefix_bound(&cfg, &params, &prefix);
        prop_assert!(bound >= best_completion - 1e-9 * best_completion.abs().max(1.0), "{} < {}", bound, best_completion);
    }
}

//! Property tests for the library invariants.

use proptest::prelude::*;

use bapo::grpo::group_advantages;
use bapo::metrics::{pass_at_k, report, ReliabilityReport, Verdict, VerdictCounts};
use bapo::modulator::{ModulatorParams, ModulatorState, Stage};
use bapo::reward::{boundary_rewards, char_f1, BoundaryMode, GroupRewards, RolloutSignal};
use bapo::trajectory::{
    extract_answer, is_idk_text, parse_trajectory, ExtractedAnswer, FormatVerdict,
};

proptest! {
    #[test]
    fn parse_never_panics(input in ".*") {
        let _ = parse_trajectory(&input);
    }

    #[test]
    fn parse_of_tag_soup_never_panics(parts in prop::collection::vec(
        prop::sample::select(vec![
            "<think>", "</think>", "<search>", "</search>", "<result>", "</result>",
            "<answer>", "</answer>", "\\boxed{", "}", "x y", "",
        ]), 0..20))
    {
        let input: String = parts.concat();
        let _ = parse_trajectory(&input);
    }

    #[test]
    fn idk_detection_survives_trivial_rewrites(
        upper in any::<bool>(),
        lead in " *",
        trail in " *",
        period in any::<bool>(),
    ) {
        let mut body = "i don't know".to_string();
        if upper {
            body = body.to_uppercase();
        }
        let mut text = format!("{lead}{body}{trail}");
        if period {
            text.push('.');
        }
        prop_assert!(is_idk_text(&text));
    }

    #[test]
    fn char_f1_is_symmetric_and_bounded(a in "[a-e ]{0,12}", b in "[a-e ]{0,12}") {
        let forward = char_f1(&a, &b);
        let backward = char_f1(&b, &a);
        prop_assert!((forward - backward).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&forward));
    }

    #[test]
    fn advantages_are_shift_and_scale_invariant(
        rewards in prop::collection::vec(-2.0f64..2.0, 2..10),
        shift in -5.0f64..5.0,
        scale in 0.01f64..10.0,
    ) {
        let base = group_advantages(&rewards).unwrap();
        let shifted: Vec<f64> = rewards.iter().map(|r| r + shift).collect();
        let scaled: Vec<f64> = rewards.iter().map(|r| r * scale).collect();
        for transformed in [shifted, scaled] {
            let other = group_advantages(&transformed).unwrap();
            for (x, y) in base.per_rollout.iter().zip(&other.per_rollout) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn advantages_sum_to_zero_when_not_degenerate(
        rewards in prop::collection::vec(-2.0f64..2.0, 2..10),
    ) {
        let set = group_advantages(&rewards).unwrap();
        if set.group_std > 1e-8 {
            let sum: f64 = set.per_rollout.iter().sum();
            prop_assert!(sum.abs() < 1e-9);
        }
    }

    #[test]
    fn boundary_is_zero_whenever_any_rollout_succeeds(
        correctness in prop::collection::vec(-1.0f64..1.0, 2..8),
        idk_mask in prop::collection::vec(any::<bool>(), 8),
    ) {
        let signals: Vec<RolloutSignal> = correctness
            .iter()
            .zip(&idk_mask)
            .map(|(&c, &is_idk)| RolloutSignal { correctness: c, is_idk, format_valid: true })
            .collect();
        let rewards = boundary_rewards(&signals);
        if signals.iter().any(|s| s.correctness > 0.0) {
            prop_assert!(rewards.iter().all(|r| *r == 0.0));
        }
    }

    #[test]
    fn boundary_never_changes_non_idk_totals(
        texts in prop::collection::vec("[f-j]{1,6}", 2..8),
        idk_mask in prop::collection::vec(any::<bool>(), 8),
    ) {
        let outcomes: Vec<(ExtractedAnswer, FormatVerdict)> = texts
            .iter()
            .zip(&idk_mask)
            .map(|(text, &is_idk)| {
                (ExtractedAnswer { text: text.clone(), is_idk }, FormatVerdict::clean())
            })
            .collect();
        let with = GroupRewards::compute("q", "zz", outcomes.clone(), BoundaryMode::GroupConditional).unwrap();
        let without = GroupRewards::compute("q", "zz", outcomes, BoundaryMode::Disabled).unwrap();
        for (a, b) in with.rollouts.iter().zip(&without.rollouts) {
            if !a.answer.is_idk {
                prop_assert_eq!(a.reward.total, b.reward.total);
            }
            prop_assert_eq!(a.reward.correctness, b.reward.correctness);
        }
    }

    #[test]
    fn valid_idk_beats_every_wrong_answer_in_failed_groups(
        texts in prop::collection::vec("[f-j]{1,6}", 1..7),
    ) {
        // One valid IDK rollout plus wrong answers disjoint from the gold.
        let mut outcomes: Vec<(ExtractedAnswer, FormatVerdict)> = texts
            .iter()
            .map(|text| (ExtractedAnswer { text: text.clone(), is_idk: false }, FormatVerdict::clean()))
            .collect();
        outcomes.push((
            ExtractedAnswer { text: "i dont know".into(), is_idk: true },
            FormatVerdict::clean(),
        ));
        let group = GroupRewards::compute("q", "zz", outcomes, BoundaryMode::GroupConditional).unwrap();
        let idk_total = group.rollouts.last().unwrap().reward.total;
        prop_assert_eq!(idk_total, 0.5);
        for rollout in &group.rollouts[..group.len() - 1] {
            prop_assert!(rollout.reward.total <= 0.0);
            prop_assert!(idk_total > rollout.reward.total);
        }
    }

    #[test]
    fn stage_sequence_is_exploration_then_plateau(
        scores in prop::collection::vec(0.0f64..1.0, 1..60),
    ) {
        let mut state = ModulatorState::new(ModulatorParams::default()).unwrap();
        let mut stages = Vec::new();
        for (step, score) in scores.iter().enumerate() {
            state.record_validation(step as u64 + 1, *score).unwrap();
            stages.push(state.stage());
        }
        let first_plateau = stages.iter().position(|s| *s == Stage::Plateau);
        if let Some(at) = first_plateau {
            prop_assert!(stages[..at].iter().all(|s| *s == Stage::Exploration));
            prop_assert!(stages[at..].iter().all(|s| *s == Stage::Plateau));
        } else {
            prop_assert!(stages.iter().all(|s| *s == Stage::Exploration));
        }
    }

    #[test]
    fn reports_are_permutation_invariant_and_bounded(
        verdicts in prop::collection::vec(
            prop::sample::select(vec![Verdict::Correct, Verdict::Wrong, Verdict::Idk]), 1..60),
        swap in any::<prop::sample::Index>(),
    ) {
        let base = report(&verdicts).unwrap();
        let mut shuffled = verdicts.clone();
        let i = swap.index(shuffled.len());
        shuffled.swap(0, i);
        prop_assert_eq!(base, report(&shuffled).unwrap());

        // prec ≥ acc always, equality exactly when nothing was refused.
        prop_assert!(base.prec >= base.acc - 1e-12);
        if base.idk_rate == 0.0 {
            prop_assert!((base.prec - base.acc).abs() < 1e-12);
        } else if base.counts.n_correct > 0 {
            prop_assert!(base.prec > base.acc);
        }
        prop_assert!(base.reliability >= base.acc.min(base.prec) - 1e-12);
        prop_assert!(base.reliability <= base.acc.max(base.prec) + 1e-12);
    }

    #[test]
    fn pass_at_k_is_monotone(
        attempts in prop::collection::vec(
            prop::collection::vec(
                prop::sample::select(vec![Verdict::Correct, Verdict::Wrong, Verdict::Idk]), 5),
            1..30),
    ) {
        for k in 1..5usize {
            let lower = pass_at_k(&attempts, k).unwrap();
            let higher = pass_at_k(&attempts, k + 1).unwrap();
            prop_assert!(lower <= higher);
        }
    }

    #[test]
    fn reliability_identity_holds_per_answer_set(
        n_correct in 0usize..300,
        n_wrong in 0usize..300,
        n_idk in 0usize..300,
    ) {
        prop_assume!(n_correct + n_wrong + n_idk > 0);
        let counts = VerdictCounts { n: n_correct + n_wrong + n_idk, n_correct, n_wrong, n_idk };
        let r = ReliabilityReport::from_counts(counts).unwrap();
        prop_assert!((r.reliability - r.acc * (1.0 + r.idk_rate)).abs() < 1e-12);
    }
}

#[test]
fn extract_answer_is_stable_under_reparse() {
    let text = "<think>a</think><search>q</search><result>r</result><think>b</think><answer>The final answer is \\boxed{Mount Fuji}</answer>";
    let first = parse_trajectory(text).unwrap();
    let second = parse_trajectory(&first.to_tagged_text()).unwrap();
    assert_eq!(
        extract_answer(&first).unwrap(),
        extract_answer(&second).unwrap()
    );
}

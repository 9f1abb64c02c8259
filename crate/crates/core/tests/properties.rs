use proptest::prelude::*;
use proptest::sample::subsequence;

use playseq::analytics::{cosine, project_rows, similar_players};
use playseq::codec::vocab::BlockRange;
use playseq::codec::{
    compute_robv_targets, decode_episode, discretize, encode_episode, undiscretize, Action, ActionType, AttributeKind, Block,
    ContextBlock, EncodeConfig, EncodedEpisode, Episode, Slot, StartReason, TeamSide, Vocabulary, EVENT_LEN, HEADER_LEN,
};
use playseq::inference::{aggregate_robv, top_quartile_mean};
use playseq::model::params::WTE;
use playseq::model::{forward, ModelConfig, ModelParams, TokenBatch};
use playseq::synth::RoleClass;

const UNIVERSE: std::ops::Range<u32> = 1000..1056;

fn vocab() -> Vocabulary {
    Vocabulary::new(UNIVERSE).unwrap()
}

fn action() -> impl Strategy<Value = (usize, bool, usize, f64, f64, f64, bool, f64)> {
    (0..22usize, any::<bool>(), 0..ActionType::ALL.len(), 0.0..105.0, 0.0..68.0, 0.0..70.0, any::<bool>(), -0.3..0.3f64)
}

prop_compose! {
    fn episode()(
        on_pitch in subsequence(UNIVERSE.collect::<Vec<_>>(), 22).prop_shuffle(),
        minute in 0u32..140,
        counters in prop::array::uniform6(0u32..20),
        raw in prop::collection::vec(action(), 1..40),
    ) -> Episode {
        let actions = raw
            .into_iter()
            .enumerate()
            .map(|(i, (actor, away, t, x, y, dt, success, obv))| Action {
                actor_id: on_pitch[actor],
                team_side: if away { TeamSide::Away } else { TeamSide::Home },
                action_type: ActionType::ALL[t],
                x,
                y,
                delta_t: if i == 0 { 0.0 } else { dt },
                success,
                obv,
            })
            .collect();
        let [home_goals, away_goals, home_reds, away_reds, home_yellows, away_yellows] = counters;
        Episode {
            context: ContextBlock { on_pitch, minute, home_goals, away_goals, home_reds, away_reds, home_yellows, away_yellows },
            actions,
            source_match_id: String::new(),
            start_reason: StartReason::Kickoff,
        }
    }
}

fn wide() -> EncodeConfig {
    EncodeConfig::new(EncodeConfig::min_block_size(40), 40).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn codec_round_trip_is_identity_on_tokens(ep in episode()) {
        let v = vocab();
        let enc = encode_episode(&ep, &v, wide()).unwrap();
        let dec = decode_episode(&enc, &v).unwrap();
        prop_assert_eq!(&dec.context.on_pitch, &ep.context.on_pitch);
        prop_assert_eq!(dec.actions.len(), ep.actions.len());
        for (a, b) in dec.actions.iter().zip(&ep.actions) {
            prop_assert_eq!((a.actor_id, a.team_side, a.action_type, a.success), (b.actor_id, b.team_side, b.action_type, b.success));
            prop_assert_eq!(discretize(AttributeKind::X, a.x).unwrap(), discretize(AttributeKind::X, b.x).unwrap());
            prop_assert_eq!(discretize(AttributeKind::Y, a.y).unwrap(), discretize(AttributeKind::Y, b.y).unwrap());
        }
        let again = encode_episode(&dec, &v, wide()).unwrap();
        prop_assert_eq!(&again.tokens, &enc.tokens);
    }

    #[test]
    fn encoding_obeys_grammar_and_mask(ep in episode(), max_events in 1usize..40) {
        let v = vocab();
        let cfg = EncodeConfig::new(EncodeConfig::min_block_size(max_events), max_events).unwrap();
        let enc = encode_episode(&ep, &v, cfg).unwrap();
        enc.check_grammar(&v).unwrap();
        prop_assert_eq!(enc.tokens.len(), cfg.block_size);
        for i in 0..enc.tokens.len() {
            let expected = i + 1 < enc.tokens.len() && enc.slot_kind[i + 1].is_predicted();
            prop_assert_eq!(enc.loss_mask[i], expected);
        }
        // Header, actor and padding positions are never targets.
        for i in 1..enc.tokens.len() {
            if matches!(enc.slot_kind[i], Slot::Bos | Slot::ContextPlayer | Slot::Minute | Slot::Counter | Slot::Player | Slot::Pad) {
                prop_assert!(!enc.loss_mask[i - 1]);
            }
        }
        let reparsed = EncodedEpisode::from_tokens(enc.tokens[..enc.len].to_vec(), &v).unwrap();
        prop_assert_eq!(reparsed.event_boundaries.len(), enc.n_events());
    }

    #[test]
    fn truncation_keeps_the_most_recent_events(ep in episode(), keep in 1usize..40) {
        let v = vocab();
        let full = encode_episode(&ep, &v, wide()).unwrap();
        let cut = encode_episode(&ep, &v, EncodeConfig::new(EncodeConfig::min_block_size(keep), keep).unwrap()).unwrap();
        let n = ep.actions.len();
        prop_assert_eq!(cut.n_events(), n.min(keep));
        prop_assert_eq!(&cut.tokens[..HEADER_LEN], &full.tokens[..HEADER_LEN]);
        let tail = &full.tokens[full.event_boundaries[n - n.min(keep)]..full.len];
        prop_assert_eq!(&cut.tokens[HEADER_LEN..cut.len], tail);
    }

    #[test]
    fn robv_targets_telescope_exactly(obv in prop::collection::vec(-1.0..1.0f64, 1..60)) {
        let actions: Vec<Action> = obv
            .iter()
            .map(|&o| Action { actor_id: 1, team_side: TeamSide::Home, action_type: ActionType::Pass, x: 1.0, y: 1.0, delta_t: 0.0, success: true, obv: o })
            .collect();
        let t = compute_robv_targets(&actions);
        let n = t.len();
        prop_assert_eq!(t[n - 1], obv[n - 1]);
        for i in 0..n - 1 {
            prop_assert_eq!(t[i], t[i + 1] + obv[i]);
        }
    }

    #[test]
    fn discretize_is_monotone_and_in_range(a in -5.0..200.0f64, b in -5.0..200.0f64) {
        for kind in [AttributeKind::X, AttributeKind::Y, AttributeKind::DeltaT, AttributeKind::Robv, AttributeKind::Minute, AttributeKind::Counter] {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (bl, bh) = (discretize(kind, lo).unwrap(), discretize(kind, hi).unwrap());
            prop_assert!(bl <= bh && bh < kind.bins());
            prop_assert_eq!(discretize(kind, undiscretize(kind, bl)).unwrap(), bl);
        }
    }

    #[test]
    fn top_quartile_dominates_mean(xs in prop::collection::vec(-10.0..10.0f64, 1..200)) {
        let tq = top_quartile_mean(&xs).unwrap();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        prop_assert!(tq >= mean - 1e-12);
        // Brute force: remove the current maximum ceil(n/4) times.
        let k = xs.len().div_ceil(4);
        let mut rest = xs.clone();
        let mut top = Vec::new();
        for _ in 0..k {
            let i = (0..rest.len()).fold(0, |best, j| if rest[j] > rest[best] { j } else { best });
            top.push(rest.swap_remove(i));
        }
        prop_assert_eq!(tq, top.iter().sum::<f64>() / k as f64);
        prop_assert_eq!(aggregate_robv(&xs, Some(RoleClass::Attacker)).unwrap().0, tq);
        prop_assert_eq!(aggregate_robv(&xs, Some(RoleClass::Defender)).unwrap().0, xs.iter().sum::<f64>() / xs.len() as f64);
    }

    #[test]
    fn cosine_is_scale_invariant(
        a in prop::collection::vec(-3.0..3.0f32, 8),
        b in prop::collection::vec(-3.0..3.0f32, 8),
        s in 0.01..100.0f32,
    ) {
        let scaled: Vec<f32> = a.iter().map(|x| x * s).collect();
        prop_assert!((cosine(&a, &b) - cosine(&scaled, &b)).abs() < 1e-5);
        prop_assert!(cosine(&a, &b).abs() <= 1.0 + 1e-9);
    }
}

fn tiny_config(vocab_size: usize) -> ModelConfig {
    ModelConfig { vocab_size, block_size: 24, n_layers: 2, n_heads: 2, embed_dim: 8, dropout_rate: 0.0, init_scale: 0.3 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // Logits at a position never depend on later tokens.
    #[test]
    fn forward_is_causal(
        tokens in prop::collection::vec(0u32..40, 24),
        cut in 1usize..24,
        replacement in prop::collection::vec(0u32..40, 24),
        seed in 0u64..1000,
    ) {
        let mut p = ModelParams::<f64>::zeros(tiny_config(40)).unwrap();
        p.randomize_all(0.3, seed);
        let mut altered = tokens.clone();
        altered[cut..].copy_from_slice(&replacement[cut..]);
        let a = forward(&p, &TokenBatch::single(&tokens).unwrap()).unwrap();
        let b = forward(&p, &TokenBatch::single(&altered).unwrap()).unwrap();
        for pos in 0..cut {
            prop_assert_eq!(a.logits_at(0, pos), b.logits_at(0, pos));
        }
    }

    #[test]
    fn retrieval_ranking_survives_uniform_scaling(seed in 0u64..1000, scale in 0.05..20.0f32, player in 1000u32..1056) {
        let v = vocab();
        let mut p = ModelParams::<f32>::init(ModelConfig { init_scale: 0.5, ..tiny_config(v.size()) }, seed).unwrap();
        let before = similar_players(&p, &v, player, 10).unwrap();
        p.tensor_mut(WTE).iter_mut().for_each(|x| *x *= scale);
        let after = similar_players(&p, &v, player, 10).unwrap();
        let ids = |s: &[playseq::analytics::SimilarPlayer]| s.iter().map(|x| x.player_id).collect::<Vec<_>>();
        prop_assert_eq!(ids(&before), ids(&after));
    }

    #[test]
    fn projection_is_deterministic(rows in prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 6), 3..20)) {
        let a = project_rows(&rows).unwrap();
        let b = project_rows(&rows).unwrap();
        prop_assert_eq!(&a.coords, &b.coords);
        prop_assert!(a.explained_variance() <= 1.0 + 1e-9);
    }
}

#[test]
fn block_ranges_tile_the_vocabulary() {
    let v = vocab();
    let mut next = 0;
    for b in Block::ORDER {
        let BlockRange { offset, size } = v.range(b);
        assert_eq!(offset, next);
        assert!(size > 0);
        next = offset + size;
    }
    assert_eq!(next as usize, v.size());
    assert_eq!(v.size(), 667);
    assert_eq!(EVENT_LEN, 8);
}

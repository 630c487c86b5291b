use cyclevc::checkpoint::{self, Checkpoint};
use cyclevc::mcp;
use cyclevc::FormatError;
use cyclevc_core::features::{compute_stats, FeatureSequence};
use cyclevc_core::models::DiscriminatorKind;
use cyclevc_core::training::{TrainState, TrainingConfig};
use proptest::prelude::*;

fn features() -> impl Strategy<Value = FeatureSequence> {
    (1usize..6, 1usize..20).prop_flat_map(|(q, t)| {
        prop::collection::vec(any::<f32>(), q * t).prop_map(move |v| FeatureSequence::new(q, t, v).unwrap())
    })
}

proptest! {
    /// Every finite bit pattern survives, subnormals and signed zeros included.
    #[test]
    fn mcp_round_trips_bit_for_bit(x in features()) {
        let back = mcp::decode(&mcp::encode(&x)).unwrap();
        prop_assert_eq!((back.q(), back.t()), (x.q(), x.t()));
        let bits = |s: &FeatureSequence| s.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&x));
    }

    #[test]
    fn mcp_rejects_every_truncation_and_extension(x in features(), extra in 1usize..8) {
        let bytes = mcp::encode(&x);
        for cut in 0..bytes.len() {
            prop_assert!(mcp::decode(&bytes[..cut]).is_err());
        }
        let mut longer = bytes.clone();
        longer.extend(std::iter::repeat_n(0u8, extra));
        prop_assert!(mcp::decode(&longer).is_err());
    }
}

fn state(seed: u64, kind: DiscriminatorKind) -> Checkpoint {
    let config = TrainingConfig {
        iterations: 4,
        id_cutoff_iter: 2,
        crop_frames: 16,
        g_channel_divisor: 32,
        d_channel_divisor: 32,
        residual_blocks: 1,
        seed,
        discriminator_kind: kind,
        ..TrainingConfig::default()
    };
    let q = 3;
    let data = FeatureSequence::from_fn(q, 20, |d, i| (d * 7 + i) as f32 * 0.1).unwrap();
    let stats = compute_stats(&[data]).unwrap();
    Checkpoint {
        state: TrainState::new(config, q).unwrap(),
        stats_x: stats.clone(),
        stats_y: stats,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn checkpoint_round_trips_exactly(seed in any::<u64>(), full in any::<bool>()) {
        let kind = if full { DiscriminatorKind::Full } else { DiscriminatorKind::Patch };
        let ck = state(seed, kind);
        let bytes = checkpoint::encode(&ck);
        let back = checkpoint::decode(&bytes).unwrap();
        prop_assert_eq!(&back, &ck);
        prop_assert_eq!(checkpoint::encode(&back), bytes);
    }

    /// Any single flipped byte or truncation is caught.
    #[test]
    fn checkpoint_damage_never_decodes(seed in 0u64..4, at in any::<prop::sample::Index>(), flip in 1u8..=255) {
        let bytes = checkpoint::encode(&state(seed, DiscriminatorKind::Patch));
        let i = at.index(bytes.len());
        let mut bad = bytes.clone();
        bad[i] ^= flip;
        prop_assert!(checkpoint::decode(&bad).is_err());
        let e = checkpoint::decode(&bytes[..i]).unwrap_err();
        let magic_cut = i < 4;
        prop_assert!(magic_cut || matches!(e, FormatError::Truncated { .. } | FormatError::Corrupt(_)), "{:?}", e);
    }
}

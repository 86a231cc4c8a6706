use hclm::cells::Peephole;
use hclm::corpus::Vocabulary;
use hclm::hierarchy::{Network, NetworkSpec, Variant};

/// 26 letters, apostrophe and period plus `<w>` and `<s>`.
fn wsj_vocab() -> Vocabulary {
    Vocabulary::from_chars("ABCDEFGHIJKLMNOPQRSTUVWXYZ'.".chars())
}

#[test]
fn diagonal_peephole_counts_match_the_published_sizes() {
    let v = wsj_vocab();
    assert_eq!(v.len(), 30);
    // "NxH" counts layers across all modules
    let rows = [
        (Variant::Mono, 2, 512, 3.23e6),
        (Variant::Mono, 4, 512, 7.43e6),
        (Variant::Mono, 4, 1024, 29.54e6),
        (Variant::HlstmA, 2, 512, 7.50e6),
        (Variant::HlstmB, 2, 512, 8.48e6),
        (Variant::HlstmB, 2, 1024, 33.74e6),
    ];
    for (variant, layers, hidden, published) in rows {
        let spec = NetworkSpec::new(variant, &v, layers, hidden).with_peephole(Peephole::Diagonal);
        let n = spec.param_count() as f64;
        let err = (n / published - 1.0).abs();
        assert!(err <= 0.02, "{variant:?} {layers}x{hidden}: {n} vs {published} ({:.1}%)", 100.0 * err);
    }
}

#[test]
fn closed_form_matches_allocated_weights() {
    let v = wsj_vocab();
    for variant in [Variant::Mono, Variant::HlstmA, Variant::HlstmB] {
        for peephole in [Peephole::Full, Peephole::Diagonal] {
            let spec = NetworkSpec::new(variant, &v, 2, 7).with_peephole(peephole);
            let net = Network::zeros(spec.clone()).unwrap();
            assert_eq!(net.param_count(), spec.param_count());
        }
    }
}

use std::path::Path;

use hclm::corpus::{build_vocab, tokenize, tokenize_lines, Mode, Vocabulary};
use hclm::eval::{bpc, evaluate, ppl_from_bpc};
use hclm::hierarchy::{Network, NetworkSpec, Variant};
use hclm::training::{batch_sequences, train_network, Checkpoint, TrainConfig, Trainer};

fn overfit_text() -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/overfit_train.txt");
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn loss_on_a_fixed_batch_decreases_for_ten_updates() {
    let text = overfit_text();
    let v = build_vocab(&text, Mode::Char).unwrap();
    let corpus = tokenize_lines(&text, &v).unwrap();
    for variant in [Variant::Mono, Variant::HlstmA, Variant::HlstmB] {
        let cfg = TrainConfig::default();
        let net = Network::random(NetworkSpec::new(variant, &v, 1, 8), cfg.init_scale, cfg.seed).unwrap();
        let mut trainer = Trainer::new(net, cfg.clone()).unwrap();
        let batch = batch_sequences(&corpus, cfg.batch_size, cfg.bptt_length, trainer.net.boundaries(), variant.levels())
            .next()
            .unwrap();
        let mut last = f64::INFINITY;
        for step in 0..10 {
            let mut states = trainer.initial_states();
            let (loss, _) = trainer.step(&mut states, &batch).unwrap();
            assert!(loss < last, "{variant:?} step {step}: {loss} >= {last}");
            last = loss;
        }
    }
}

#[test]
fn word_perplexity_agrees_with_word_probabilities() {
    // the zero model gives every symbol probability 1/4, so a word of k letters
    // plus its boundary has probability 4^-(k+1)
    let v = Vocabulary::from_chars("ab".chars());
    let net = Network::zeros(NetworkSpec::new(Variant::HlstmB, &v, 1, 2)).unwrap();
    let seq = tokenize("ab b ba\n", &v).unwrap();
    assert_eq!((seq.n_chars, seq.n_words), (8, 4));
    let word_probs = [4f64.powi(-3), 4f64.powi(-2), 4f64.powi(-2), 4f64.powi(-1)];
    let direct = word_probs.iter().product::<f64>().powf(-1.0 / 4.0);
    let report = evaluate(&net, &seq).unwrap();
    assert!((report.word_ppl - direct).abs() < 1e-9 * direct, "{} vs {direct}", report.word_ppl);
    assert!((ppl_from_bpc(report.bpc, 8, 4).unwrap() - 4.0_f64.powf(2.0)).abs() < 1e-9);
}

#[test]
fn checkpoint_preserves_heldout_bpc() {
    let text = overfit_text();
    let v = build_vocab(&text, Mode::Char).unwrap();
    let corpus = tokenize_lines(&text, &v).unwrap();
    let cfg = TrainConfig {
        batch_size: 4,
        bptt_length: 32,
        max_epochs: 2,
        ..TrainConfig::default()
    };
    let net = Network::random(NetworkSpec::new(Variant::HlstmB, &v, 1, 8), cfg.init_scale, cfg.seed).unwrap();
    let out = train_network(net, &corpus, &[], &cfg, |_, _, _| Ok(())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    Checkpoint::new(out.last.clone(), v.clone()).unwrap().save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    let held = tokenize(&text[..400], &v).unwrap();
    let a = bpc(&out.last, &held.ids).unwrap();
    let b = bpc(&back.network, &held.ids).unwrap();
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn training_is_deterministic_per_seed() {
    let text = overfit_text();
    let v = build_vocab(&text, Mode::Char).unwrap();
    let corpus = tokenize_lines(&text[..600], &v).unwrap();
    let run = |seed| {
        let cfg = TrainConfig {
            batch_size: 3,
            bptt_length: 16,
            max_epochs: 2,
            seed,
            ..TrainConfig::default()
        };
        let spec = NetworkSpec::new(Variant::HlstmA, &v, 1, 6);
        let net = Network::random(spec, cfg.init_scale, cfg.seed).unwrap();
        train_network(net, &corpus, &[], &cfg, |_, _, _| Ok(())).unwrap().last
    };
    assert_eq!(run(4), run(4));
    assert_ne!(run(4), run(5));
}

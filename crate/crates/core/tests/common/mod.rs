#![allow(dead_code)]

use std::collections::BTreeMap;

use hclm::corpus::Vocabulary;
use hclm::decode::{bonus_units, combine, lm_start, rank, DecodeConfig, Label, PosteriorMatrix};
use hclm::hierarchy::{Network, NetworkSpec, Variant};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Every label path of the matrix, collapsed and summed per prefix, scored by
/// the beam-search objective with products instead of log-sums. Best first.
pub fn exhaustive_decode(post: &PosteriorMatrix, net: &Network, cfg: &DecodeConfig) -> Vec<(Vec<usize>, f64)> {
    let k = post.labels().len();
    let t_max = post.frames();
    let mut mass: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let total_paths = k.pow(t_max as u32);
    for code in 0..total_paths {
        let mut c = code;
        let mut path = Vec::with_capacity(t_max);
        for _ in 0..t_max {
            path.push(c % k);
            c /= k;
        }
        let p: f64 = path.iter().enumerate().map(|(t, &l)| post.row(t)[l]).product();
        if p == 0.0 {
            continue;
        }
        let mut prefix = Vec::new();
        let mut prev = None;
        for &l in &path {
            if Some(l) != prev {
                if let Label::Token(id) = post.labels()[l] {
                    prefix.push(id);
                }
            }
            prev = Some(l);
        }
        *mass.entry(prefix).or_insert(0.0) += p;
    }
    let mut out: Vec<(Vec<usize>, f64)> = mass
        .into_iter()
        .map(|(prefix, p)| {
            let lm = lm_logp(net, &prefix);
            let units = bonus_units(&prefix, cfg.bonus_unit, net.boundaries());
            let s = combine(p.ln(), lm, units, cfg);
            (prefix, s)
        })
        .collect();
    out.sort_by(|a, b| rank(a.1, &a.0, b.1, &b.0));
    out
}

/// Natural-log LM probability of a prefix after the implicit `<s>`, by folding
/// single steps.
pub fn lm_logp(net: &Network, prefix: &[usize]) -> f64 {
    let (mut state, mut probs) = lm_start(net).unwrap();
    let mut lp = 0.0;
    for &id in prefix {
        lp += probs[id].ln();
        let (p, s) = net.step_stateful(&state, id).unwrap();
        probs = p;
        state = s;
    }
    lp
}

/// A random posterior matrix over blank plus the given labels.
pub fn random_posteriors(rng: &mut ChaCha8Rng, frames: usize, tokens: &[usize]) -> PosteriorMatrix {
    let mut labels = vec![Label::Blank];
    labels.extend(tokens.iter().map(|&id| Label::Token(id)));
    let rows = (0..frames)
        .map(|_| {
            let raw: Vec<f64> = labels.iter().map(|_| rng.gen_range(0.01..1.0f64).powi(2)).collect();
            let sum: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / sum).collect()
        })
        .collect();
    PosteriorMatrix::new(labels, rows).unwrap()
}

/// Random small fixture: 4-symbol vocabulary, random hierarchical CLM, and
/// a posterior matrix of 1–6 frames over 1–3 non-blank labels.
pub fn random_fixture(rng: &mut ChaCha8Rng) -> (Vocabulary, Network, PosteriorMatrix) {
    let vocab = Vocabulary::from_chars("ab".chars());
    let variant = [Variant::Mono, Variant::HlstmA, Variant::HlstmB][rng.gen_range(0..3)];
    let spec = NetworkSpec::new(variant, &vocab, 1, rng.gen_range(2..5));
    let net = Network::random(spec, rng.gen_range(0.2..1.5), rng.gen()).unwrap();
    let frames = rng.gen_range(1..=6);
    let n_tokens = rng.gen_range(1..=3);
    let tokens: Vec<usize> = [0, 1, vocab.word_boundary_id()][..n_tokens].to_vec();
    let post = random_posteriors(rng, frames, &tokens);
    (vocab, net, post)
}

/// A beam that keeps every prefix of a fixture.
pub fn saturating_config() -> DecodeConfig {
    DecodeConfig {
        beam_width: 1 << 20,
        width_prune: 0.0,
        ..DecodeConfig::default()
    }
}

/// Compares the beam against the oracle. Returns a description of the first
/// difference, if any.
pub fn compare_with_oracle(post: &PosteriorMatrix, net: &Network, cfg: &DecodeConfig) -> Result<(), String> {
    let beam = hclm::decode::beam_search(post, net, cfg).map_err(|e| e.to_string())?;
    let oracle = exhaustive_decode(post, net, cfg);
    if beam.len() != oracle.len() {
        return Err(format!("beam kept {} prefixes, oracle found {}", beam.len(), oracle.len()));
    }
    let by_prefix: BTreeMap<&[usize], f64> = oracle.iter().map(|(p, s)| (p.as_slice(), *s)).collect();
    for h in &beam {
        let Some(&s) = by_prefix.get(h.prefix.as_slice()) else {
            return Err(format!("beam prefix {:?} not found by the oracle", h.prefix));
        };
        if (h.score - s).abs() > 1e-9 {
            return Err(format!("prefix {:?}: beam score {} vs oracle {}", h.prefix, h.score, s));
        }
    }
    // ranks must agree except inside groups of scores tied to within 1e-9,
    // which both sides order by prefix
    for (i, (h, (p, s))) in beam.iter().zip(&oracle).enumerate() {
        if &h.prefix != p {
            let tied = (h.score - s).abs() <= 1e-9;
            if !tied {
                return Err(format!("rank {i}: beam {:?} ({}) vs oracle {:?} ({})", h.prefix, h.score, p, s));
            }
        }
    }
    let best_score = oracle[0].1;
    let best_tied = oracle
        .iter()
        .filter(|(_, s)| (s - best_score).abs() <= 1e-9)
        .map(|(p, _)| p)
        .min()
        .expect("oracle is non-empty");
    if beam[0].prefix != oracle[0].0 && &beam[0].prefix != best_tied {
        return Err(format!("best: beam {:?} vs oracle {:?}", beam[0].prefix, oracle[0].0));
    }
    Ok(())
}

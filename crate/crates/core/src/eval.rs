//! Bits-per-character, word perplexity and sampling.

use std::fmt;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::{detokenize, TokenSequence, Vocabulary};
use crate::error::{Error, Result};
use crate::hierarchy::{derive_clocks_with, Network, NetworkState};

/// Smallest probability used when scoring, so a zero never yields infinite bits.
const PROB_FLOOR: f64 = 1e-300;

/// Summed surprisal of a sequence.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Score {
    pub bits: f64,
    pub predictions: usize,
}

impl Score {
    pub fn bpc(&self) -> f64 {
        if self.predictions == 0 {
            0.0
        } else {
            self.bits / self.predictions as f64
        }
    }

    pub fn merge(self, other: Score) -> Score {
        Score {
            bits: self.bits + other.bits,
            predictions: self.predictions + other.predictions,
        }
    }
}

/// Scores `ids[1..]` given their prefixes, continuing from `state`. The state is
/// advanced over every id except the last.
pub fn score_from(net: &Network, state: &mut NetworkState, ids: &[usize]) -> Result<Score> {
    let mut score = Score::default();
    for w in ids.windows(2) {
        let probs = net.step_in_place(state, w[0])?;
        score.bits -= probs[w[1]].max(PROB_FLOOR).log2();
        score.predictions += 1;
    }
    Ok(score)
}

/// Mean bits per predicted symbol over one sequence, starting from the zero state.
/// A sequence of `N` tokens yields `N − 1` predictions.
pub fn bpc(net: &Network, ids: &[usize]) -> Result<f64> {
    let mut state = net.initial_state();
    Ok(score_from(net, &mut state, ids)?.bpc())
}

/// Same as [`bpc`] but runs the sequence in windows of `window` tokens, carrying
/// state between windows.
pub fn bpc_windowed(net: &Network, ids: &[usize], window: usize) -> Result<f64> {
    if window == 0 {
        return Err(Error::Argument("window must be positive".into()));
    }
    let levels = net.spec().levels();
    let mut state = net.initial_state();
    let mut score = Score::default();
    if ids.len() < 2 {
        return Ok(0.0);
    }
    let inputs = &ids[..ids.len() - 1];
    for (c, chunk) in inputs.chunks(window).enumerate() {
        let plan = derive_clocks_with(chunk, net.boundaries(), levels);
        let out = net.forward_from(&state, chunk, &plan, false)?;
        for (t, p) in out.probs.iter().enumerate() {
            let target = ids[c * window + t + 1];
            score.bits -= p[target].max(PROB_FLOOR).log2();
            score.predictions += 1;
        }
        state = out.state;
    }
    Ok(score.bpc())
}

/// Scores each sequence from the zero state, in parallel, and pools the bits.
pub fn score_many(net: &Network, seqs: &[TokenSequence]) -> Result<Score> {
    let scores: Vec<Score> = seqs
        .par_iter()
        .map(|s| {
            let mut state = net.initial_state();
            score_from(net, &mut state, &s.ids)
        })
        .collect::<Result<_>>()?;
    Ok(scores.into_iter().fold(Score::default(), Score::merge))
}

/// Word perplexity implied by a character-level BPC: `2^(BPC · N_c / N_w)`.
pub fn ppl_from_bpc(bpc: f64, n_chars: usize, n_words: usize) -> Result<f64> {
    if n_words == 0 {
        return Err(Error::Argument("word count must be positive".into()));
    }
    Ok((bpc * n_chars as f64 / n_words as f64).exp2())
}

/// One evaluation result row.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub size: String,
    pub params: usize,
    pub bpc: f64,
    pub n_chars: usize,
    pub n_words: usize,
    pub word_ppl: f64,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "size,params,bpc,word_ppl";

    pub fn csv_row(&self) -> String {
        format!("{},{},{:.4},{:.2}", self.size, self.params, self.bpc, self.word_ppl)
    }

    pub fn table(&self) -> String {
        format!(
            "{:<8} {:>10} {:>7} {:>9}\n{:<8} {:>10} {:>7.3} {:>9.2}\n",
            "Size",
            "# Params",
            "BPC",
            "Word PPL",
            self.size,
            format_params(self.params),
            self.bpc,
            self.word_ppl
        )
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.table())
    }
}

/// `3230000` → `3.23M`.
pub fn format_params(n: usize) -> String {
    if n >= 1_000_000 {
        format!("{:.2}M", n as f64 / 1e6)
    } else if n >= 1_000 {
        format!("{:.1}K", n as f64 / 1e3)
    } else {
        n.to_string()
    }
}

/// Evaluates `net` on one token sequence.
pub fn evaluate(net: &Network, seq: &TokenSequence) -> Result<EvalReport> {
    if seq.ids.len() < 2 {
        return Err(Error::Argument("evaluation text needs at least two symbols".into()));
    }
    let bpc = bpc(net, &seq.ids)?;
    Ok(EvalReport {
        size: net.spec().size_label(),
        params: net.param_count(),
        bpc,
        n_chars: seq.n_chars,
        n_words: seq.n_words,
        word_ppl: ppl_from_bpc(bpc, seq.n_chars, seq.n_words)?,
    })
}

/// Sampling settings.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleConfig {
    pub length: usize,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            length: 200,
            temperature: 1.0,
            seed: 0,
        }
    }
}

/// State after the implicit leading `<s>` and the prime tokens, together with
/// the next-token distribution.
pub fn primed_state(net: &Network, prime: &[usize]) -> Result<(NetworkState, Vec<f64>)> {
    let mut state = net.initial_state();
    let mut probs = net.step_in_place(&mut state, net.spec().sentence_boundary_id)?;
    for &id in prime {
        probs = net.step_in_place(&mut state, id)?;
    }
    Ok((state, probs))
}

/// Draws `length` tokens after `prime`.
pub fn sample_ids(net: &Network, prime: &[usize], cfg: &SampleConfig) -> Result<Vec<usize>> {
    if !(cfg.temperature > 0.0 && cfg.temperature.is_finite()) {
        return Err(Error::Argument(format!("temperature must be positive, got {}", cfg.temperature)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut state, mut probs) = primed_state(net, prime)?;
    let mut out = Vec::with_capacity(cfg.length);
    for _ in 0..cfg.length {
        let id = draw(&probs, cfg.temperature, &mut rng)?;
        out.push(id);
        probs = net.step_in_place(&mut state, id)?;
    }
    Ok(out)
}

fn draw(probs: &[f64], temperature: f64, rng: &mut ChaCha8Rng) -> Result<usize> {
    let logits: Vec<f64> = probs.iter().map(|p| p.max(PROB_FLOOR).ln() / temperature).collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| Error::Numeric(format!("cannot sample: {e}")))?;
    Ok(dist.sample(rng))
}

/// Samples text: the prime followed by `length` generated symbols.
pub fn sample(net: &Network, vocab: &Vocabulary, prime: &[usize], cfg: &SampleConfig) -> Result<String> {
    let ids = sample_ids(net, prime, cfg)?;
    let mut text = detokenize(prime, vocab);
    text.push_str(&detokenize(&ids, vocab));
    Ok(text)
}

//! Beam-search decoding of frame posteriors with a character LM.

mod beam;
mod posterior;
mod wer;

pub use beam::{
    beam_search, bonus_units, combine, lm_start, log_add, rank, BonusUnit, DecodeConfig, Hypothesis,
};
pub use posterior::{Label, PosteriorMatrix, BLANK_LABEL, ROW_SUM_TOLERANCE};
pub use wer::{edit_distance, wer, wer_str};

use crate::corpus::{detokenize, Vocabulary};

/// Transcript of a hypothesis with `<s>` dropped and trailing space trimmed.
pub fn transcript(h: &Hypothesis, vocab: &Vocabulary) -> String {
    let ids: Vec<usize> = h.prefix.iter().copied().filter(|&id| id != vocab.sentence_boundary_id()).collect();
    detokenize(&ids, vocab).trim_end().to_string()
}

pub const NBEST_CSV_HEADER: &str = "rank,transcript,score,log_p_ctc,lm_logp,bonus_units";

/// One n-best CSV line; the transcript is quoted.
pub fn nbest_row(rank: usize, h: &Hypothesis, vocab: &Vocabulary) -> String {
    let text = transcript(h, vocab).replace('"', "\"\"");
    format!(
        "{},\"{}\",{:.6},{:.6},{:.6},{}",
        rank,
        text,
        h.score,
        h.log_p_ctc(),
        h.lm_logp,
        h.bonus_units
    )
}

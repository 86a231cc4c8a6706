//! CTC prefix beam search with character-LM fusion.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use super::posterior::{Label, PosteriorMatrix};
use crate::error::{Error, Result};
use crate::hierarchy::{Boundaries, Network, NetworkState};

/// What the insertion bonus counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BonusUnit {
    #[default]
    Char,
    Word,
}

impl std::str::FromStr for BonusUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "char" => Ok(BonusUnit::Char),
            "word" => Ok(BonusUnit::Word),
            other => Err(Error::Config(format!("unknown bonus unit {other:?} (expected char or word)"))),
        }
    }
}

impl BonusUnit {
    pub fn as_str(self) -> &'static str {
        match self {
            BonusUnit::Char => "char",
            BonusUnit::Word => "word",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeConfig {
    pub beam_width: usize,
    pub lm_weight: f64,
    pub insertion_bonus: f64,
    pub bonus_unit: BonusUnit,
    /// Labels with a frame posterior below this are not expanded.
    pub width_prune: f64,
    /// At most this many non-blank labels (highest posterior first) are expanded per frame.
    pub depth_prune: Option<usize>,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            beam_width: 512,
            lm_weight: 2.0,
            insertion_bonus: 1.6,
            bonus_unit: BonusUnit::Char,
            width_prune: 1e-4,
            depth_prune: None,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 {
            return Err(Error::Config("beam_width must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.width_prune) {
            return Err(Error::Config(format!("width_prune must be in [0, 1], got {}", self.width_prune)));
        }
        if self.depth_prune == Some(0) {
            return Err(Error::Config("depth_prune must be at least 1".into()));
        }
        if !self.lm_weight.is_finite() || !self.insertion_bonus.is_finite() {
            return Err(Error::Config("lm_weight and insertion_bonus must be finite".into()));
        }
        Ok(())
    }
}

/// LM context of a prefix: the state after its last symbol, the distribution of
/// the next symbol and the prefix's log-probability.
#[derive(Debug)]
struct LmNode {
    state: NetworkState,
    next: Vec<f64>,
    logp: f64,
}

#[derive(Clone, Debug)]
pub struct Hypothesis {
    /// Vocabulary ids of the collapsed label sequence.
    pub prefix: Vec<usize>,
    pub log_p_blank: f64,
    pub log_p_nonblank: f64,
    /// Natural-log LM probability of the prefix.
    pub lm_logp: f64,
    /// Units counted by the insertion bonus.
    pub bonus_units: usize,
    pub score: f64,
    lm: Arc<LmNode>,
}

impl Hypothesis {
    /// `log(p_blank + p_nonblank)`.
    pub fn log_p_ctc(&self) -> f64 {
        log_add(self.log_p_blank, self.log_p_nonblank)
    }

    /// LM state after the prefix.
    pub fn lm_state(&self) -> &NetworkState {
        &self.lm.state
    }

    /// Recomputes the score from its components.
    pub fn recompute_score(&self, cfg: &DecodeConfig) -> f64 {
        combine(self.log_p_ctc(), self.lm_logp, self.bonus_units, cfg)
    }
}

/// `α·lm + β·units + ctc`.
pub fn combine(log_p_ctc: f64, lm_logp: f64, units: usize, cfg: &DecodeConfig) -> f64 {
    // keeps α = 0 from turning a zero LM probability into NaN
    let lm = if cfg.lm_weight == 0.0 { 0.0 } else { cfg.lm_weight * lm_logp };
    log_p_ctc + lm + cfg.insertion_bonus * units as f64
}

#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Bonus units of a prefix.
pub fn bonus_units(prefix: &[usize], unit: BonusUnit, boundaries: Boundaries) -> usize {
    match unit {
        BonusUnit::Char => prefix.len(),
        BonusUnit::Word => {
            let is_b = |id: &usize| *id == boundaries.word || *id == boundaries.sentence;
            let mut words = 0;
            let mut inside = false;
            for id in prefix {
                if is_b(id) {
                    inside = false;
                } else {
                    if !inside {
                        words += 1;
                    }
                    inside = true;
                }
            }
            words
        }
    }
}

/// Score order: higher score first, then lexicographically smaller prefix.
pub fn rank(a_score: f64, a_prefix: &[usize], b_score: f64, b_prefix: &[usize]) -> std::cmp::Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_prefix.cmp(b_prefix))
}

/// LM state and next-symbol distribution after the implicit leading `<s>`.
pub fn lm_start(net: &Network) -> Result<(NetworkState, Vec<f64>)> {
    let (probs, state) = net.step_stateful(&net.initial_state(), net.spec().sentence_boundary_id)?;
    Ok((state, probs))
}

struct Pending {
    prefix: Vec<usize>,
    log_pb: f64,
    log_pnb: f64,
    lm: Option<Arc<LmNode>>,
    parent: Arc<LmNode>,
    last: usize,
}

/// Runs the search and returns the final beam, best first.
pub fn beam_search(post: &PosteriorMatrix, net: &Network, cfg: &DecodeConfig) -> Result<Vec<Hypothesis>> {
    cfg.validate()?;
    post.check_vocab(net.vocab_size())?;
    let boundaries = net.boundaries();
    let blank = post.blank_index();
    let (state, next) = lm_start(net)?;
    let root = Arc::new(LmNode { state, next, logp: 0.0 });
    let mut beam = vec![Hypothesis {
        prefix: Vec::new(),
        log_p_blank: 0.0,
        log_p_nonblank: f64::NEG_INFINITY,
        lm_logp: 0.0,
        bonus_units: 0,
        score: 0.0,
        lm: root,
    }];

    for t in 0..post.frames() {
        let row = post.row(t);
        let mut cands: Vec<(usize, f64)> = post
            .labels()
            .iter()
            .enumerate()
            .filter_map(|(k, l)| match *l {
                Label::Token(id) if row[k] > 0.0 && row[k] >= cfg.width_prune => Some((id, row[k])),
                _ => None,
            })
            .collect();
        cands.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        if let Some(d) = cfg.depth_prune {
            cands.truncate(d);
        }
        let p_blank = row[blank];
        let blank_lp = if p_blank > 0.0 && p_blank >= cfg.width_prune { p_blank.ln() } else { f64::NEG_INFINITY };

        let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut next: Vec<Pending> = Vec::new();
        let mut slot = |prefix: &[usize], parent: &Arc<LmNode>, last: usize, next: &mut Vec<Pending>| -> usize {
            if let Some(&i) = index.get(prefix) {
                return i;
            }
            next.push(Pending {
                prefix: prefix.to_vec(),
                log_pb: f64::NEG_INFINITY,
                log_pnb: f64::NEG_INFINITY,
                lm: None,
                parent: parent.clone(),
                last,
            });
            index.insert(prefix.to_vec(), next.len() - 1);
            next.len() - 1
        };

        for h in &beam {
            let total = h.log_p_ctc();
            let last = h.prefix.last().copied();
            // the hypothesis itself survives through blanks and repeated labels
            let own = slot(&h.prefix, &h.lm, usize::MAX, &mut next);
            next[own].lm = Some(h.lm.clone());
            if blank_lp > f64::NEG_INFINITY {
                next[own].log_pb = log_add(next[own].log_pb, blank_lp + total);
            }
            for &(id, p) in &cands {
                let lp = p.ln();
                let mut extended = h.prefix.clone();
                extended.push(id);
                let from = if last == Some(id) {
                    next[own].log_pnb = log_add(next[own].log_pnb, lp + h.log_p_nonblank);
                    lp + h.log_p_blank
                } else {
                    lp + total
                };
                if from > f64::NEG_INFINITY {
                    let i = slot(&extended, &h.lm, id, &mut next);
                    next[i].log_pnb = log_add(next[i].log_pnb, from);
                }
            }
        }

        let fresh: Vec<usize> = (0..next.len()).filter(|&i| next[i].lm.is_none()).collect();
        let nodes: Vec<Arc<LmNode>> = fresh
            .par_iter()
            .map(|&i| {
                let p = &next[i];
                let (probs, state) = net.step_stateful(&p.parent.state, p.last)?;
                Ok(Arc::new(LmNode {
                    state,
                    logp: p.parent.logp + p.parent.next[p.last].ln(),
                    next: probs,
                }))
            })
            .collect::<Result<_>>()?;
        for (i, node) in fresh.into_iter().zip(nodes) {
            next[i].lm = Some(node);
        }

        let mut hyps: Vec<Hypothesis> = next
            .into_iter()
            .filter(|p| p.log_pb > f64::NEG_INFINITY || p.log_pnb > f64::NEG_INFINITY)
            .map(|p| {
                let lm = p.lm.expect("every pending hypothesis has an LM node");
                let units = bonus_units(&p.prefix, cfg.bonus_unit, boundaries);
                let score = combine(log_add(p.log_pb, p.log_pnb), lm.logp, units, cfg);
                Hypothesis {
                    prefix: p.prefix,
                    log_p_blank: p.log_pb,
                    log_p_nonblank: p.log_pnb,
                    lm_logp: lm.logp,
                    bonus_units: units,
                    score,
                    lm,
                }
            })
            .collect();
        hyps.sort_by(|a, b| rank(a.score, &a.prefix, b.score, &b.prefix));
        hyps.truncate(cfg.beam_width);
        if hyps.is_empty() {
            return Err(Error::Numeric(format!("every hypothesis has zero probability at frame {t}")));
        }
        beam = hyps;
    }
    Ok(beam)
}

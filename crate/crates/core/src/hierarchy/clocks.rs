use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

/// Token ids that drive the slower clocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Boundaries {
    pub word: usize,
    pub sentence: usize,
}

impl Boundaries {
    pub fn of(vocab: &Vocabulary) -> Self {
        Self {
            word: vocab.word_boundary_id(),
            sentence: vocab.sentence_boundary_id(),
        }
    }

    /// Clock bit of `level` (0-based) for input token `id`: level 0 always
    /// ticks, level 1 ticks on `<w>` and `<s>`, higher levels on `<s>` only.
    #[inline]
    pub fn clock(&self, level: usize, id: usize) -> bool {
        match level {
            0 => true,
            1 => id == self.word || id == self.sentence,
            _ => id == self.sentence,
        }
    }
}

/// Per-level clock and reset signals over a token sequence.
///
/// Level `l` is reset whenever level `l + 1` ticks; the top level is never reset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClockPlan {
    clock: Vec<Vec<bool>>,
    reset: Vec<Vec<bool>>,
}

impl ClockPlan {
    /// Builds a plan from explicit clock rows, deriving resets from the level above.
    pub fn from_clocks(clock: Vec<Vec<bool>>) -> Result<Self> {
        let levels = clock.len();
        if levels == 0 {
            return Err(Error::Argument("a clock plan needs at least one level".into()));
        }
        let len = clock[0].len();
        if clock.iter().any(|row| row.len() != len) {
            return Err(Error::Argument("clock rows differ in length".into()));
        }
        let reset = (0..levels)
            .map(|l| if l + 1 < levels { clock[l + 1].clone() } else { vec![false; len] })
            .collect();
        let plan = Self { clock, reset };
        plan.validate()?;
        Ok(plan)
    }

    pub fn levels(&self) -> usize {
        self.clock.len()
    }

    pub fn len(&self) -> usize {
        self.clock[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn clock(&self, level: usize, t: usize) -> bool {
        self.clock[level][t]
    }

    #[inline]
    pub fn reset(&self, level: usize, t: usize) -> bool {
        self.reset[level][t]
    }

    pub fn clock_row(&self, level: usize) -> &[bool] {
        &self.clock[level]
    }

    pub fn reset_row(&self, level: usize) -> &[bool] {
        &self.reset[level]
    }

    /// Checks the clock hierarchy: level 0 always ticks, a level ticks only when
    /// the level below ticks, and resets mirror the level above.
    pub fn validate(&self) -> Result<()> {
        let levels = self.levels();
        for t in 0..self.len() {
            if !self.clock[0][t] {
                return Err(Error::Argument(format!("level 0 clock is off at t={t}")));
            }
            for l in 1..levels {
                if self.clock[l][t] && !self.clock[l - 1][t] {
                    return Err(Error::Argument(format!("level {l} ticks at t={t} without level {}", l - 1)));
                }
            }
            for l in 0..levels {
                let want = l + 1 < levels && self.clock[l + 1][t];
                if self.reset[l][t] != want {
                    return Err(Error::Argument(format!("reset of level {l} at t={t} does not match the level above")));
                }
            }
        }
        Ok(())
    }
}

/// Clock plan for `levels` levels over `ids`.
pub fn derive_clocks(ids: &[usize], vocab: &Vocabulary, levels: usize) -> ClockPlan {
    derive_clocks_with(ids, Boundaries::of(vocab), levels)
}

pub fn derive_clocks_with(ids: &[usize], boundaries: Boundaries, levels: usize) -> ClockPlan {
    let levels = levels.max(1);
    let clock = (0..levels)
        .map(|l| ids.iter().map(|&id| boundaries.clock(l, id)).collect())
        .collect();
    ClockPlan::from_clocks(clock).expect("derived clocks satisfy the hierarchy")
}

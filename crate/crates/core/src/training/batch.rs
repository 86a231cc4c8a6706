use crate::corpus::TokenSequence;
use crate::hierarchy::{derive_clocks_with, Boundaries, ClockPlan};

/// One truncated-BPTT window of a single stream.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub inputs: Vec<usize>,
    /// `targets[t]` is the token following `inputs[t]`.
    pub targets: Vec<usize>,
    pub clocks: ClockPlan,
    /// The window starts a new sequence: the stream state must be reset first.
    pub reset: bool,
}

/// One window per stream; `None` once a stream has no sequences left.
pub type Batch = Vec<Option<Window>>;

#[derive(Clone, Debug)]
struct Cursor {
    seq: Option<usize>,
    pos: usize,
}

/// Deals sequences to `batch_size` parallel streams and cuts each stream into
/// consecutive windows of at most `bptt_length` predictions. Windows never span
/// two sequences.
#[derive(Clone, Debug)]
pub struct BatchStream<'a> {
    corpus: &'a [TokenSequence],
    bptt: usize,
    boundaries: Boundaries,
    levels: usize,
    cursors: Vec<Cursor>,
    next_seq: usize,
}

impl<'a> BatchStream<'a> {
    fn take_next(&mut self) -> Option<usize> {
        while self.next_seq < self.corpus.len() {
            let i = self.next_seq;
            self.next_seq += 1;
            if self.corpus[i].ids.len() >= 2 {
                return Some(i);
            }
        }
        None
    }
}

impl Iterator for BatchStream<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        let mut batch = Vec::with_capacity(self.cursors.len());
        let mut any = false;
        for s in 0..self.cursors.len() {
            let mut reset = false;
            let exhausted = match self.cursors[s].seq {
                None => true,
                Some(i) => self.cursors[s].pos + 1 >= self.corpus[i].ids.len(),
            };
            if exhausted {
                let next = self.take_next();
                self.cursors[s] = Cursor { seq: next, pos: 0 };
                reset = true;
            }
            let Some(i) = self.cursors[s].seq else {
                batch.push(None);
                continue;
            };
            let ids = &self.corpus[i].ids;
            let start = self.cursors[s].pos;
            let len = self.bptt.min(ids.len() - 1 - start);
            let inputs = ids[start..start + len].to_vec();
            let targets = ids[start + 1..start + 1 + len].to_vec();
            let clocks = derive_clocks_with(&inputs, self.boundaries, self.levels);
            self.cursors[s].pos += len;
            batch.push(Some(Window {
                inputs,
                targets,
                clocks,
                reset,
            }));
            any = true;
        }
        any.then_some(batch)
    }
}

/// Splits `corpus` into `batch_size` streams of BPTT windows.
pub fn batch_sequences(
    corpus: &[TokenSequence],
    batch_size: usize,
    bptt_length: usize,
    boundaries: Boundaries,
    levels: usize,
) -> BatchStream<'_> {
    BatchStream {
        corpus,
        bptt: bptt_length.max(1),
        boundaries,
        levels,
        cursors: vec![Cursor { seq: None, pos: 0 }; batch_size.max(1)],
        next_seq: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const B: Boundaries = Boundaries { word: 100, sentence: 101 };

    fn seq(ids: Vec<usize>) -> TokenSequence {
        TokenSequence {
            n_chars: ids.len(),
            n_words: 0,
            ids,
        }
    }

    #[test]
    fn ten_ids_bptt_four() {
        let corpus = vec![seq((0..10).collect())];
        let batches: Vec<Batch> = batch_sequences(&corpus, 1, 4, B, 2).collect();
        let lens: Vec<usize> = batches.iter().map(|b| b[0].as_ref().unwrap().inputs.len()).collect();
        assert_eq!(lens, vec![4, 4, 1]);
        let w = batches[1][0].as_ref().unwrap();
        assert_eq!(w.inputs, vec![4, 5, 6, 7]);
        assert_eq!(w.targets, vec![5, 6, 7, 8]);
        assert!(batches[0][0].as_ref().unwrap().reset);
        assert!(!w.reset);
    }

    #[test]
    fn two_streams_two_sequences() {
        let corpus = vec![seq((0..6).collect()), seq((10..13).collect())];
        let batches: Vec<Batch> = batch_sequences(&corpus, 2, 2, B, 1).collect();
        let s0: Vec<usize> = batches.iter().filter_map(|b| b[0].as_ref()).flat_map(|w| w.inputs.clone()).collect();
        let s1: Vec<usize> = batches.iter().filter_map(|b| b[1].as_ref()).flat_map(|w| w.inputs.clone()).collect();
        assert_eq!(s0, vec![0, 1, 2, 3, 4]);
        assert_eq!(s1, vec![10, 11]);
        assert_eq!(batches.len(), 3);
        assert!(batches[1][1].is_none());
    }

    #[test]
    fn exhausted_stream_picks_up_next_sequence_with_reset() {
        let corpus = vec![seq(vec![0, 1, 2]), seq(vec![5, 6]), seq(vec![7]), seq(vec![8, 9, 10])];
        let windows: Vec<Window> = batch_sequences(&corpus, 1, 8, B, 1).map(|b| b[0].clone().unwrap()).collect();
        assert_eq!(windows.len(), 3);
        assert!(windows.iter().all(|w| w.reset));
        assert_eq!(windows[2].inputs, vec![8, 9]);
    }

    #[test]
    fn clocks_follow_boundaries() {
        let corpus = vec![seq(vec![0, 100, 1, 101, 2])];
        let w = batch_sequences(&corpus, 1, 8, B, 2).next().unwrap()[0].clone().unwrap();
        assert_eq!(w.clocks.clock_row(1), &[false, true, false, true]);
    }
}

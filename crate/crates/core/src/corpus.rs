//! Vocabularies, tokenization and held-out splitting.
//!
//! Text is processed one line at a time; a line is a sentence. Runs of
//! whitespace inside a line become a single word-boundary token and every
//! line ends with one sentence-boundary token.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const WORD_BOUNDARY: &str = "<w>";
pub const SENTENCE_BOUNDARY: &str = "<s>";

/// Number of entries in a byte-mode vocabulary: 256 byte values plus `<s>`.
pub const BYTE_VOCAB_SIZE: usize = 257;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Mode {
    #[default]
    Char,
    Byte,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Char => "char",
            Mode::Byte => "byte",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "char" => Ok(Mode::Char),
            "byte" => Ok(Mode::Byte),
            other => Err(Error::Config(format!("unknown vocabulary mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Char(char),
    Byte(u8),
    WordBoundary,
    SentenceBoundary,
}

impl Symbol {
    /// Escaped single-line form used in vocabulary and posterior files.
    pub fn escaped(&self) -> String {
        match *self {
            Symbol::WordBoundary => WORD_BOUNDARY.to_string(),
            Symbol::SentenceBoundary => SENTENCE_BOUNDARY.to_string(),
            Symbol::Byte(b) => format!("\\x{b:02x}"),
            Symbol::Char('\\') => "\\\\".to_string(),
            Symbol::Char('\t') => "\\t".to_string(),
            Symbol::Char('\n') => "\\n".to_string(),
            Symbol::Char('\r') => "\\r".to_string(),
            Symbol::Char(' ') => "\\s".to_string(),
            Symbol::Char(c) if c.is_whitespace() || c.is_control() => format!("\\u{{{:x}}}", c as u32),
            Symbol::Char(c) => c.to_string(),
        }
    }

    pub fn parse_escaped(s: &str) -> Result<Symbol> {
        let bad = || Error::Format(format!("cannot parse vocabulary symbol {s:?}"));
        match s {
            WORD_BOUNDARY => return Ok(Symbol::WordBoundary),
            SENTENCE_BOUNDARY => return Ok(Symbol::SentenceBoundary),
            "\\\\" => return Ok(Symbol::Char('\\')),
            "\\t" => return Ok(Symbol::Char('\t')),
            "\\n" => return Ok(Symbol::Char('\n')),
            "\\r" => return Ok(Symbol::Char('\r')),
            "\\s" => return Ok(Symbol::Char(' ')),
            _ => {}
        }
        if let Some(hex) = s.strip_prefix("\\x") {
            if hex.len() != 2 {
                return Err(bad());
            }
            return u8::from_str_radix(hex, 16).map(Symbol::Byte).map_err(|_| bad());
        }
        if let Some(rest) = s.strip_prefix("\\u{") {
            let hex = rest.strip_suffix('}').ok_or_else(bad)?;
            let code = u32::from_str_radix(hex, 16).map_err(|_| bad())?;
            return char::from_u32(code).map(Symbol::Char).ok_or_else(bad);
        }
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Ok(Symbol::Char(c)),
            _ => Err(bad()),
        }
    }
}

/// Bijective symbol ↔ id map with word- and sentence-boundary tokens.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    mode: Mode,
    symbols: Vec<Symbol>,
    index: HashMap<Symbol, usize>,
    word_boundary_id: usize,
    sentence_boundary_id: usize,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.mode == other.mode && self.symbols == other.symbols
    }
}

impl Vocabulary {
    /// The fixed 257-entry byte vocabulary: ids 0..=255 are bytes, 256 is `<s>`.
    /// The space byte doubles as the word boundary.
    pub fn bytes() -> Self {
        let mut symbols: Vec<Symbol> = (0..=255u8).map(Symbol::Byte).collect();
        symbols.push(Symbol::SentenceBoundary);
        Self::from_symbols(Mode::Byte, symbols).expect("byte vocabulary is well formed")
    }

    /// Character vocabulary over the given characters (whitespace is ignored),
    /// sorted, followed by `<w>` and `<s>`.
    pub fn from_chars(chars: impl IntoIterator<Item = char>) -> Self {
        let mut set: Vec<char> = chars.into_iter().filter(|c| !c.is_whitespace()).collect();
        set.sort_unstable();
        set.dedup();
        let mut symbols: Vec<Symbol> = set.into_iter().map(Symbol::Char).collect();
        symbols.push(Symbol::WordBoundary);
        symbols.push(Symbol::SentenceBoundary);
        Self::from_symbols(Mode::Char, symbols).expect("char vocabulary is well formed")
    }

    fn from_symbols(mode: Mode, symbols: Vec<Symbol>) -> Result<Self> {
        let mut index = HashMap::with_capacity(symbols.len());
        for (id, s) in symbols.iter().enumerate() {
            if index.insert(*s, id).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary symbol {}", s.escaped())));
            }
        }
        let word = match mode {
            Mode::Char => Symbol::WordBoundary,
            Mode::Byte => Symbol::Byte(b' '),
        };
        let word_boundary_id = *index
            .get(&word)
            .ok_or_else(|| Error::Format("vocabulary lacks a word-boundary symbol".into()))?;
        let sentence_boundary_id = *index
            .get(&Symbol::SentenceBoundary)
            .ok_or_else(|| Error::Format("vocabulary lacks <s>".into()))?;
        for s in &symbols {
            let ok = match (mode, s) {
                (Mode::Char, Symbol::Byte(_)) | (Mode::Byte, Symbol::Char(_)) | (Mode::Byte, Symbol::WordBoundary) => false,
                _ => true,
            };
            if !ok {
                return Err(Error::Format(format!("symbol {} not allowed in {} mode", s.escaped(), mode.as_str())));
            }
        }
        if mode == Mode::Byte && symbols.len() != BYTE_VOCAB_SIZE {
            return Err(Error::Format(format!("byte vocabulary must have {BYTE_VOCAB_SIZE} entries")));
        }
        Ok(Self {
            mode,
            symbols,
            index,
            word_boundary_id,
            sentence_boundary_id,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn word_boundary_id(&self) -> usize {
        self.word_boundary_id
    }

    pub fn sentence_boundary_id(&self) -> usize {
        self.sentence_boundary_id
    }

    pub fn is_boundary(&self, id: usize) -> bool {
        id == self.word_boundary_id || id == self.sentence_boundary_id
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn symbol(&self, id: usize) -> Option<Symbol> {
        self.symbols.get(id).copied()
    }

    pub fn id(&self, symbol: Symbol) -> Option<usize> {
        self.index.get(&symbol).copied()
    }

    /// Looks up an escaped symbol as written in vocabulary and posterior files.
    pub fn id_of_escaped(&self, s: &str) -> Result<usize> {
        let sym = Symbol::parse_escaped(s)?;
        let sym = match (self.mode, sym) {
            (Mode::Byte, Symbol::WordBoundary) => Symbol::Byte(b' '),
            (_, other) => other,
        };
        self.id(sym)
            .ok_or_else(|| Error::Config(format!("label {s:?} is not in the vocabulary")))
    }

    /// One escaped symbol per line, in id order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.symbols {
            let _ = writeln!(out, "{}", s.escaped());
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let symbols = text
            .lines()
            .filter(|l| !l.is_empty())
            .map(Symbol::parse_escaped)
            .collect::<Result<Vec<_>>>()?;
        let mode = if symbols.iter().any(|s| matches!(s, Symbol::Byte(_))) {
            Mode::Byte
        } else {
            Mode::Char
        };
        Self::from_symbols(mode, symbols)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Token ids of some text plus the character and word counts used for perplexity.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    /// Number of tokens, boundary symbols included.
    pub n_chars: usize,
    /// Number of words, each `<s>` counted as a word.
    pub n_words: usize,
}

impl TokenSequence {
    pub fn from_ids(ids: Vec<usize>, vocab: &Vocabulary) -> Self {
        let n_words = count_words(&ids, vocab);
        Self {
            n_chars: ids.len(),
            n_words,
            ids,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Words are maximal runs of non-boundary tokens; every `<s>` is a word as well.
pub fn count_words(ids: &[usize], vocab: &Vocabulary) -> usize {
    let mut words = 0;
    let mut in_word = false;
    for &id in ids {
        if vocab.is_boundary(id) {
            if in_word {
                words += 1;
            }
            in_word = false;
            if id == vocab.sentence_boundary_id() {
                words += 1;
            }
        } else {
            in_word = true;
        }
    }
    words + usize::from(in_word)
}

pub fn build_vocab(text: &str, mode: Mode) -> Result<Vocabulary> {
    if text.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(match mode {
        Mode::Char => Vocabulary::from_chars(text.chars()),
        Mode::Byte => Vocabulary::bytes(),
    })
}

fn split_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let trailing = text.ends_with('\n');
    let mut lines: Vec<&str> = text.split('\n').collect();
    if trailing {
        lines.pop();
    }
    let mut offset = 0;
    lines.into_iter().map(move |l| {
        let start = offset;
        offset += l.chars().count() + 1;
        (start, l.strip_suffix('\r').unwrap_or(l))
    })
}

fn push_line(line: &str, char_offset: usize, vocab: &Vocabulary, ids: &mut Vec<usize>) -> Result<()> {
    match vocab.mode() {
        Mode::Char => {
            let mut pending_space = false;
            let mut seen_word = false;
            for (k, c) in line.chars().enumerate() {
                if c.is_whitespace() {
                    pending_space = seen_word;
                    continue;
                }
                if pending_space {
                    ids.push(vocab.word_boundary_id());
                    pending_space = false;
                }
                let id = vocab.id(Symbol::Char(c)).ok_or(Error::OutOfVocabulary {
                    ch: c,
                    offset: char_offset + k,
                })?;
                ids.push(id);
                seen_word = true;
            }
        }
        Mode::Byte => {
            let mut pending_space = false;
            let mut seen_word = false;
            for &b in line.as_bytes() {
                if b.is_ascii_whitespace() {
                    pending_space = seen_word;
                    continue;
                }
                if pending_space {
                    ids.push(vocab.word_boundary_id());
                    pending_space = false;
                }
                ids.push(b as usize);
                seen_word = true;
            }
        }
    }
    ids.push(vocab.sentence_boundary_id());
    Ok(())
}

/// Tokenizes the whole text as one sequence.
pub fn tokenize(text: &str, vocab: &Vocabulary) -> Result<TokenSequence> {
    let mut ids = Vec::with_capacity(text.len() + 1);
    for (offset, line) in split_lines(text) {
        push_line(line, offset, vocab, &mut ids)?;
    }
    if ids.is_empty() {
        ids.push(vocab.sentence_boundary_id());
    }
    Ok(TokenSequence::from_ids(ids, vocab))
}

/// Tokenizes each line as its own sequence.
pub fn tokenize_lines(text: &str, vocab: &Vocabulary) -> Result<Vec<TokenSequence>> {
    split_lines(text)
        .map(|(offset, line)| {
            let mut ids = Vec::with_capacity(line.len() + 1);
            push_line(line, offset, vocab, &mut ids)?;
            Ok(TokenSequence::from_ids(ids, vocab))
        })
        .collect()
}

/// Maps ids back to text: `<w>` becomes a space and `<s>` a line break.
pub fn detokenize(ids: &[usize], vocab: &Vocabulary) -> String {
    let mut bytes = Vec::with_capacity(ids.len());
    let mut buf = [0u8; 4];
    for &id in ids {
        match vocab.symbol(id) {
            Some(Symbol::Char(c)) => bytes.extend_from_slice(c.encode_utf8(&mut buf).as_bytes()),
            Some(Symbol::Byte(b)) => bytes.push(b),
            Some(Symbol::WordBoundary) => bytes.push(b' '),
            Some(Symbol::SentenceBoundary) => bytes.push(b'\n'),
            None => bytes.extend_from_slice("\u{fffd}".as_bytes()),
        }
    }
    String::from_utf8_lossy(&bytes).into_owned()
}

/// Collapses whitespace the same way [`tokenize`] does, for round-trip comparisons.
pub fn normalize_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for (_, line) in split_lines(text) {
        let words: Vec<&str> = line.split_whitespace().collect();
        out.push_str(&words.join(" "));
        out.push('\n');
    }
    if out.is_empty() {
        out.push('\n');
    }
    out
}

/// Concatenates consecutive sequences into at most `shards` roughly equal
/// streams, so state carries across sentence boundaries within a shard.
pub fn shard_sequences(sequences: &[TokenSequence], shards: usize) -> Vec<TokenSequence> {
    if sequences.is_empty() {
        return Vec::new();
    }
    let per = sequences.len().div_ceil(shards.max(1));
    sequences
        .chunks(per)
        .map(|group| TokenSequence {
            ids: group.iter().flat_map(|s| s.ids.iter().copied()).collect(),
            n_chars: group.iter().map(|s| s.n_chars).sum(),
            n_words: group.iter().map(|s| s.n_words).sum(),
        })
        .collect()
}

/// Moves `⌈fraction·n⌉` sequences, picked at an even stride, into the held-out set.
pub fn split_heldout(sequences: Vec<TokenSequence>, fraction: f64) -> Result<(Vec<TokenSequence>, Vec<TokenSequence>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Argument(format!("held-out fraction {fraction} is not in (0, 1)")));
    }
    let n = sequences.len();
    if n < 2 {
        return Err(Error::Argument(format!("need at least 2 sequences to split, got {n}")));
    }
    // the epsilon absorbs products like 0.07 * 100 = 7.000000000000001
    let k = ((fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n - 1);
    let mut pick = vec![false; n];
    for i in 0..k {
        pick[i * n / k] = true;
    }
    let mut train = Vec::with_capacity(n - k);
    let mut heldout = Vec::with_capacity(k);
    for (seq, held) in sequences.into_iter().zip(pick) {
        if held {
            heldout.push(seq);
        } else {
            train.push(seq);
        }
    }
    Ok((train, heldout))
}

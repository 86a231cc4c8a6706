//! Frame posterior matrices.
//!
//! Text form: a header line `T K label_1 … label_K` followed by `T` rows of `K`
//! probabilities. Labels are escaped vocabulary symbols; the blank is `<blank>`.
//!
//! Binary form, little-endian: magic `HCLMPOST`, u32 `T`, u32 `K`, u32 byte
//! length of the space-separated label list, the label list, then `T·K` f32.

use std::fmt::Write as _;
use std::path::Path;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

pub const BLANK_LABEL: &str = "<blank>";
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

const MAGIC: &[u8; 8] = b"HCLMPOST";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Blank,
    /// A vocabulary id.
    Token(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorMatrix {
    labels: Vec<Label>,
    blank: usize,
    rows: Vec<Vec<f64>>,
}

impl PosteriorMatrix {
    /// Validates labels (exactly one blank, no duplicates) and rows (values in
    /// [0, 1], sums within 1e-6 of 1).
    pub fn new(labels: Vec<Label>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let blanks: Vec<usize> = (0..labels.len()).filter(|&k| labels[k] == Label::Blank).collect();
        if blanks.len() != 1 {
            return Err(Error::Config(format!("posterior labels need exactly one blank, found {}", blanks.len())));
        }
        let mut sorted = labels.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != labels.len() {
            return Err(Error::Config("posterior labels contain duplicates".into()));
        }
        for (t, row) in rows.iter().enumerate() {
            if row.len() != labels.len() {
                return Err(Error::Format(format!(
                    "frame {t} has {} values, expected {}",
                    row.len(),
                    labels.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::Format(format!("frame {t} has value {v} outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Format(format!("frame {t} sums to {sum}, not 1")));
            }
        }
        Ok(Self {
            labels,
            blank: blanks[0],
            rows,
        })
    }

    /// Checks that every token label exists in a vocabulary of `vocab_size` symbols.
    pub fn check_vocab(&self, vocab_size: usize) -> Result<()> {
        for l in &self.labels {
            if let Label::Token(id) = *l {
                if id >= vocab_size {
                    return Err(Error::Config(format!("posterior label id {id} outside vocabulary of {vocab_size}")));
                }
            }
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.rows.len()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn blank_index(&self) -> usize {
        self.blank
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.rows[t]
    }

    fn label_strings(&self, vocab: &Vocabulary) -> Result<Vec<String>> {
        self.labels
            .iter()
            .map(|l| match *l {
                Label::Blank => Ok(BLANK_LABEL.to_string()),
                Label::Token(id) => vocab
                    .symbol(id)
                    .map(|s| s.escaped())
                    .ok_or_else(|| Error::Config(format!("label id {id} not in vocabulary"))),
            })
            .collect()
    }

    fn parse_labels(tokens: &[&str], vocab: &Vocabulary) -> Result<Vec<Label>> {
        tokens
            .iter()
            .map(|&s| {
                if s == BLANK_LABEL {
                    Ok(Label::Blank)
                } else {
                    vocab.id_of_escaped(s).map(Label::Token).map_err(|e| match e {
                        Error::Format(m) => Error::Config(m),
                        other => other,
                    })
                }
            })
            .collect()
    }

    pub fn to_text(&self, vocab: &Vocabulary) -> Result<String> {
        let mut out = format!("{} {}", self.frames(), self.labels.len());
        for l in self.label_strings(vocab)? {
            out.push(' ');
            out.push_str(&l);
        }
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        Ok(out)
    }

    pub fn from_text(text: &str, vocab: &Vocabulary) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Format("empty posterior file".into()))?;
        let tokens: Vec<&str> = header.split_whitespace().collect();
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Format(format!("bad posterior header {header:?}")))
        };
        if tokens.len() < 2 {
            return Err(Error::Format(format!("bad posterior header {header:?}")));
        }
        let (t, k) = (num(tokens[0])?, num(tokens[1])?);
        if tokens.len() != 2 + k {
            return Err(Error::Format(format!("header declares {k} labels but lists {}", tokens.len() - 2)));
        }
        let labels = Self::parse_labels(&tokens[2..], vocab)?;
        let mut rows = Vec::with_capacity(t);
        for line in lines {
            let row = line
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| Error::Format(format!("bad probability {v:?}"))))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        if rows.len() != t {
            return Err(Error::Format(format!("header declares {t} frames but found {}", rows.len())));
        }
        Self::new(labels, rows)
    }

    pub fn to_binary(&self, vocab: &Vocabulary) -> Result<Vec<u8>> {
        let labels = self.label_strings(vocab)?.join(" ");
        let mut out = Vec::with_capacity(20 + labels.len() + 4 * self.frames() * self.labels.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.frames() as u32).to_le_bytes());
        out.extend_from_slice(&(self.labels.len() as u32).to_le_bytes());
        out.extend_from_slice(&(labels.len() as u32).to_le_bytes());
        out.extend_from_slice(labels.as_bytes());
        for row in &self.rows {
            for &v in row {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Parses the binary form. Rows are checked at f32 precision against the
    /// same 1e-6 tolerance.
    pub fn from_binary(bytes: &[u8], vocab: &Vocabulary) -> Result<Self> {
        let short = || Error::Format("posterior file is truncated".into());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(Error::Format("not a binary posterior file".into()));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
        let (t, k, n) = (u32_at(8), u32_at(12), u32_at(16));
        let labels_end = 20usize.checked_add(n).filter(|&e| e <= bytes.len()).ok_or_else(short)?;
        let label_text = std::str::from_utf8(&bytes[20..labels_end])
            .map_err(|_| Error::Format("posterior labels are not UTF-8".into()))?;
        let tokens: Vec<&str> = label_text.split_whitespace().collect();
        if tokens.len() != k {
            return Err(Error::Format(format!("header declares {k} labels but lists {}", tokens.len())));
        }
        let labels = Self::parse_labels(&tokens, vocab)?;
        let need = t.checked_mul(k).and_then(|x| x.checked_mul(4)).ok_or_else(short)?;
        if bytes.len() - labels_end != need {
            return Err(short());
        }
        let values: Vec<f64> = bytes[labels_end..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        let rows = if k == 0 { vec![Vec::new(); t] } else { values.chunks(k).map(<[f64]>::to_vec).collect() };
        Self::new(labels, rows)
    }

    /// Reads either form, telling them apart by the binary magic.
    pub fn load(path: &Path, vocab: &Vocabulary) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.starts_with(MAGIC) {
            Self::from_binary(&bytes, vocab)
        } else {
            let text = String::from_utf8(bytes).map_err(|_| Error::Format("posterior file is not UTF-8".into()))?;
            Self::from_text(&text, vocab)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        Vocabulary::from_chars("ab".chars())
    }

    #[test]
    fn text_round_trip() {
        let v = vocab();
        let m = PosteriorMatrix::from_text("2 3 <blank> a <w>\n0.1 0.9 0\n0.5 0.25 0.25\n", &v).unwrap();
        assert_eq!(m.labels(), &[Label::Blank, Label::Token(0), Label::Token(2)]);
        assert_eq!(m.frames(), 2);
        let again = PosteriorMatrix::from_text(&m.to_text(&v).unwrap(), &v).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn binary_round_trip() {
        let v = vocab();
        let m = PosteriorMatrix::new(vec![Label::Token(1), Label::Blank], vec![vec![0.25, 0.75], vec![1.0, 0.0]]).unwrap();
        let back = PosteriorMatrix::from_binary(&m.to_binary(&v).unwrap(), &v).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn row_sum_violation_is_format_error() {
        let err = PosteriorMatrix::from_text("1 2 <blank> a\n0.5 0.4\n", &vocab()).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
        let err = PosteriorMatrix::from_text("1 2 <blank> a\n1.5 -0.5\n", &vocab()).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn unknown_label_is_config_error() {
        let err = PosteriorMatrix::from_text("1 2 <blank> z\n0.5 0.5\n", &vocab()).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        let err = PosteriorMatrix::from_text("1 2 a b\n0.5 0.5\n", &vocab()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn frame_count_mismatch() {
        assert!(PosteriorMatrix::from_text("2 2 <blank> a\n0.5 0.5\n", &vocab()).is_err());
    }
}

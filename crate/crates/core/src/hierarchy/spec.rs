use std::fmt::Write as _;
use std::str::FromStr;

use crate::cells::{LstmParams, Peephole};
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Single-clock stack of LSTM layers.
    Mono,
    /// Both character-level layers read the one-hot input; layer 1 feeds the
    /// word module and layer 2 is conditioned on the context vector.
    HlstmA,
    /// Character layer 1 feeds layer 2, which also reads the context vector.
    HlstmB,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Mono => "mono",
            Variant::HlstmA => "hlstm_a",
            Variant::HlstmB => "hlstm_b",
        }
    }

    pub fn levels(self) -> usize {
        match self {
            Variant::Mono => 1,
            Variant::HlstmA | Variant::HlstmB => 2,
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mono" => Ok(Variant::Mono),
            "hlstm_a" | "hlstm-a" => Ok(Variant::HlstmA),
            "hlstm_b" | "hlstm-b" => Ok(Variant::HlstmB),
            other => Err(Error::Config(format!("unknown network variant {other:?}"))),
        }
    }
}

/// Where a layer's input block comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    /// One-hot encoding of the current token.
    OneHot,
    /// Two-dimensional indicator `[token is <w>, token is <s>]`.
    Boundary,
    /// Output of another layer; `delayed` reads its value from the previous step.
    Layer { index: usize, delayed: bool },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerWiring {
    pub name: String,
    /// 0 is the character level.
    pub level: usize,
    pub hidden: usize,
    pub sources: Vec<Source>,
}

/// Layers in evaluation order: every undelayed source precedes its consumer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Wiring {
    pub layers: Vec<LayerWiring>,
    /// Layer read by the softmax.
    pub output: usize,
}

impl Wiring {
    pub fn source_dim(&self, source: Source, vocab_size: usize) -> usize {
        match source {
            Source::OneHot => vocab_size,
            Source::Boundary => 2,
            Source::Layer { index, .. } => self.layers[index].hidden,
        }
    }

    pub fn input_dim(&self, layer: usize, vocab_size: usize) -> usize {
        self.layers[layer]
            .sources
            .iter()
            .map(|&s| self.source_dim(s, vocab_size))
            .sum()
    }

    /// Layers whose outputs are read with a one-step delay.
    pub fn delayed_sources(&self) -> Vec<bool> {
        let mut out = vec![false; self.layers.len()];
        for layer in &self.layers {
            for s in &layer.sources {
                if let Source::Layer { index, delayed: true } = *s {
                    out[index] = true;
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.output >= self.layers.len() {
            return Err(Error::Config("output layer out of range".into()));
        }
        for (k, layer) in self.layers.iter().enumerate() {
            if layer.sources.is_empty() {
                return Err(Error::Config(format!("layer {} has no inputs", layer.name)));
            }
            for s in &layer.sources {
                if let Source::Layer { index, delayed } = *s {
                    if index >= self.layers.len() {
                        return Err(Error::Config(format!("layer {} reads a missing layer", layer.name)));
                    }
                    if !delayed && index >= k {
                        return Err(Error::Config(format!(
                            "layer {} reads {} without delay before it is computed",
                            layer.name, self.layers[index].name
                        )));
                    }
                    let from = self.layers[index].level;
                    // upward edges must be delayed, downward edges must not be
                    if from < layer.level && !delayed {
                        return Err(Error::Config(format!("feed-up into {} must be delayed", layer.name)));
                    }
                    if from > layer.level && delayed {
                        return Err(Error::Config(format!("feed-down into {} must not be delayed", layer.name)));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Architecture of a (hierarchical) character-level LSTM language model.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    pub variant: Variant,
    pub vocab_size: usize,
    pub word_boundary_id: usize,
    pub sentence_boundary_id: usize,
    /// LSTM layers in each module (the character module and, if present, the word module).
    pub layers_per_module: usize,
    /// Memory cells per layer.
    pub hidden: usize,
    pub peephole: Peephole,
    /// When false the character module is never reset by the word clock.
    pub char_reset: bool,
}

impl NetworkSpec {
    pub fn new(variant: Variant, vocab: &Vocabulary, layers_per_module: usize, hidden: usize) -> Self {
        Self {
            variant,
            vocab_size: vocab.len(),
            word_boundary_id: vocab.word_boundary_id(),
            sentence_boundary_id: vocab.sentence_boundary_id(),
            layers_per_module,
            hidden,
            peephole: Peephole::Full,
            char_reset: true,
        }
    }

    pub fn with_peephole(mut self, peephole: Peephole) -> Self {
        self.peephole = peephole;
        self
    }

    pub fn with_char_reset(mut self, reset: bool) -> Self {
        self.char_reset = reset;
        self
    }

    pub fn levels(&self) -> usize {
        self.variant.levels()
    }

    /// "NxM" label with N the total number of LSTM layers.
    pub fn size_label(&self) -> String {
        format!("{}x{}", self.layers_per_module * self.levels(), self.hidden)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::Config("vocabulary must have at least 2 symbols".into()));
        }
        if self.layers_per_module == 0 || self.hidden == 0 {
            return Err(Error::Config("layers_per_module and hidden must be positive".into()));
        }
        if self.word_boundary_id >= self.vocab_size || self.sentence_boundary_id >= self.vocab_size {
            return Err(Error::Config("boundary ids out of vocabulary range".into()));
        }
        if self.word_boundary_id == self.sentence_boundary_id {
            return Err(Error::Config("word and sentence boundary ids must differ".into()));
        }
        self.wiring().validate()
    }

    /// The connection table for this architecture.
    pub fn wiring(&self) -> Wiring {
        let n = self.layers_per_module;
        let h = self.hidden;
        let layer = |name: String, level: usize, sources: Vec<Source>| LayerWiring {
            name,
            level,
            hidden: h,
            sources,
        };
        let prev = |index: usize| Source::Layer { index, delayed: false };

        if self.variant == Variant::Mono {
            let layers = (0..n)
                .map(|k| {
                    let src = if k == 0 { Source::OneHot } else { prev(k - 1) };
                    layer(format!("char.{}", k + 1), 0, vec![src])
                })
                .collect();
            return Wiring { layers, output: n - 1 };
        }

        // word module first: it consumes last step's character embedding and
        // produces this step's context vector
        let word_base = 0;
        let char_base = n;
        let feed_up = match self.variant {
            Variant::HlstmA => char_base,
            _ => char_base + n - 1,
        };
        let context = word_base + n - 1;
        let context_target = 1.min(n - 1);

        let mut layers = Vec::with_capacity(2 * n);
        for k in 0..n {
            let sources = if k == 0 {
                vec![Source::Layer { index: feed_up, delayed: true }, Source::Boundary]
            } else {
                vec![prev(word_base + k - 1)]
            };
            layers.push(layer(format!("word.{}", k + 1), 1, sources));
        }
        for k in 0..n {
            let mut sources = match (self.variant, k) {
                (_, 0) => vec![Source::OneHot],
                (Variant::HlstmA, 1) => vec![Source::OneHot],
                (Variant::HlstmA, _) => vec![Source::OneHot, prev(char_base + k - 1)],
                _ => vec![prev(char_base + k - 1)],
            };
            if k == context_target {
                sources.push(prev(context));
            }
            layers.push(layer(format!("char.{}", k + 1), 0, sources));
        }
        Wiring {
            layers,
            output: char_base + n - 1,
        }
    }

    /// Closed-form parameter count: every LSTM layer plus the softmax layer.
    pub fn param_count(&self) -> usize {
        let wiring = self.wiring();
        let lstm: usize = (0..wiring.layers.len())
            .map(|k| LstmParams::count(wiring.input_dim(k, self.vocab_size), wiring.layers[k].hidden, self.peephole))
            .sum();
        let out_h = wiring.layers[wiring.output].hidden;
        lstm + self.vocab_size * out_h + self.vocab_size
    }

    /// `key=value` lines, stored in checkpoints.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "variant={}", self.variant.as_str());
        let _ = writeln!(s, "vocab_size={}", self.vocab_size);
        let _ = writeln!(s, "word_boundary_id={}", self.word_boundary_id);
        let _ = writeln!(s, "sentence_boundary_id={}", self.sentence_boundary_id);
        let _ = writeln!(s, "layers_per_module={}", self.layers_per_module);
        let _ = writeln!(s, "hidden={}", self.hidden);
        let _ = writeln!(s, "peephole={}", self.peephole.as_str());
        let _ = writeln!(s, "char_reset={}", self.char_reset);
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut variant = None;
        let mut nums = [None; 5];
        let mut peephole = Peephole::Full;
        let mut char_reset = true;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad spec line {line:?}")))?;
            let num = |v: &str| v.parse::<usize>().map_err(|_| Error::Format(format!("bad number in {line:?}")));
            match k {
                "variant" => variant = Some(v.parse::<Variant>()?),
                "vocab_size" => nums[0] = Some(num(v)?),
                "word_boundary_id" => nums[1] = Some(num(v)?),
                "sentence_boundary_id" => nums[2] = Some(num(v)?),
                "layers_per_module" => nums[3] = Some(num(v)?),
                "hidden" => nums[4] = Some(num(v)?),
                "peephole" => peephole = v.parse()?,
                "char_reset" => {
                    char_reset = v
                        .parse()
                        .map_err(|_| Error::Format(format!("bad boolean in {line:?}")))?
                }
                other => return Err(Error::Format(format!("unknown spec key {other:?}"))),
            }
        }
        let missing = |name: &str| Error::Format(format!("spec is missing {name}"));
        let spec = Self {
            variant: variant.ok_or_else(|| missing("variant"))?,
            vocab_size: nums[0].ok_or_else(|| missing("vocab_size"))?,
            word_boundary_id: nums[1].ok_or_else(|| missing("word_boundary_id"))?,
            sentence_boundary_id: nums[2].ok_or_else(|| missing("sentence_boundary_id"))?,
            layers_per_module: nums[3].ok_or_else(|| missing("layers_per_module"))?,
            hidden: nums[4].ok_or_else(|| missing("hidden"))?,
            peephole,
            char_reset,
        };
        spec.validate()?;
        Ok(spec)
    }
}

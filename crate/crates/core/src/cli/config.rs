//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::cells::Peephole;
use crate::corpus::Mode;
use crate::decode::{BonusUnit, DecodeConfig};
use crate::error::{Error, Result};
use crate::eval::SampleConfig;
use crate::hierarchy::Variant;
use crate::training::{OptimizerConfig, TrainConfig};

/// Every accepted key with its default (empty means unset) and a short description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "1", "seed for every random choice"),
    ("threads", "", "worker threads (default: all cores)"),
    ("output_dir", "hclm-out", "directory for checkpoints, metrics and n-best lists"),
    ("corpus", "", "training or evaluation text"),
    ("heldout", "", "held-out text (train)"),
    ("heldout_fraction", "0.05", "share of training lines held out when no held-out file is given; 0 disables"),
    ("vocab", "", "vocabulary file; built from the corpus when unset"),
    ("checkpoint", "", "model checkpoint (eval, sample, decode)"),
    ("posterior", "", "frame posterior matrix (decode)"),
    ("reference", "", "reference transcript for WER (decode)"),
    ("mode", "char", "char or byte"),
    ("uppercase", "false", "upper-case all text before tokenizing"),
    ("variant", "hlstm_b", "mono, hlstm_a or hlstm_b"),
    ("layers_per_module", "2", "LSTM layers per module"),
    ("hidden", "512", "memory cells per layer"),
    ("peephole", "full", "full or diagonal peephole connections"),
    ("char_reset", "true", "reset the character module on word boundaries"),
    ("init_scale", "0.08", "half-width of the uniform weight initialisation"),
    ("bptt_length", "128", "truncated-BPTT window"),
    ("batch_size", "64", "parallel training streams"),
    ("adadelta_rho", "0.95", "ADADELTA decay"),
    ("adadelta_eps", "1e-6", "ADADELTA epsilon"),
    ("momentum", "0.9", "Nesterov momentum"),
    ("max_epochs", "10", "training epochs"),
    ("clip_norm", "5.0", "global gradient-norm clip, or none"),
    ("metrics_timing", "false", "write wall-clock seconds into the metrics CSV"),
    ("format", "table", "eval output: table or csv"),
    ("length", "200", "sampled symbols"),
    ("temperature", "1.0", "sampling temperature"),
    ("prime", "", "text that primes sampling"),
    ("beam_width", "512", "decoder beam width"),
    ("lm_weight", "2.0", "LM weight"),
    ("insertion_bonus", "1.6", "insertion bonus"),
    ("bonus_unit", "char", "char or word"),
    ("width_prune", "1e-4", "drop frame labels below this posterior"),
    ("depth_prune", "none", "expand at most this many labels per frame, or none"),
    ("nbest", "10", "rows in the n-best CSV"),
    ("gradcheck_text", "ab cd\nef g\n", "sequence used by gradcheck"),
    ("fd_step", "1e-5", "finite-difference step"),
    ("tolerance", "1e-4", "gradcheck tolerance on the max relative error"),
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn canonical(key: &str) -> String {
    key.trim().replace('-', "_")
}

fn known(key: &str) -> Result<()> {
    if KEYS.iter().any(|(k, _, _)| *k == key) {
        Ok(())
    } else {
        Err(Error::Config(format!("unknown configuration key {key:?}")))
    }
}

/// Undoes `\n`, `\t` and `\\` escapes in config values.
fn unescape(v: &str) -> String {
    let mut out = String::with_capacity(v.len());
    let mut chars = v.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {line:?}", n + 1)))?;
            cfg.set(k, v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        // relative paths inside a config file are relative to the file
        let base = path.parent().unwrap_or(Path::new(""));
        for key in ["corpus", "heldout", "vocab", "checkpoint", "posterior", "reference", "output_dir"] {
            if let Some(v) = cfg.values.get_mut(key) {
                if !v.is_empty() && Path::new(v.as_str()).is_relative() {
                    *v = base.join(v.as_str()).to_string_lossy().into_owned();
                }
            }
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = canonical(key);
        known(&key)?;
        self.values.insert(key, unescape(value));
        Ok(())
    }

    /// Applies `--key value` or `--key=value` pairs.
    pub fn apply_overrides(&mut self, args: &[String]) -> Result<()> {
        let mut it = args.iter();
        while let Some(arg) = it.next() {
            let flag = arg
                .strip_prefix("--")
                .ok_or_else(|| Error::Argument(format!("unexpected argument {arg:?}")))?;
            let (k, v) = match flag.split_once('=') {
                Some((k, v)) => (k.to_string(), v.to_string()),
                None => {
                    let v = it.next().ok_or_else(|| Error::Argument(format!("--{flag} needs a value")))?;
                    (flag.to_string(), v.clone())
                }
            };
            self.set(&k, &v)?;
        }
        Ok(())
    }

    /// The raw value, falling back to the documented default.
    pub fn raw(&self, key: &str) -> &str {
        if let Some(v) = self.values.get(key) {
            return v;
        }
        KEYS.iter()
            .find(|(k, _, _)| *k == key)
            .map(|(_, d, _)| *d)
            .unwrap_or_else(|| panic!("undeclared configuration key {key}"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.raw(key);
        v.parse()
            .map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))
    }

    /// `None` for an empty value or `none`.
    pub fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            "" | "none" => Ok(None),
            _ => self.get(key).map(Some),
        }
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        match self.raw(key) {
            "" => None,
            v => Some(PathBuf::from(v)),
        }
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key)
            .ok_or_else(|| Error::Config(format!("{key} is required for this command")))
    }

    pub fn mode(&self) -> Result<Mode> {
        self.raw("mode").parse()
    }

    pub fn variant(&self) -> Result<Variant> {
        self.raw("variant").parse()
    }

    pub fn peephole(&self) -> Result<Peephole> {
        self.raw("peephole").parse()
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            bptt_length: self.get("bptt_length")?,
            batch_size: self.get("batch_size")?,
            optimizer: OptimizerConfig {
                rho: self.get("adadelta_rho")?,
                eps: self.get("adadelta_eps")?,
                momentum: self.get("momentum")?,
            },
            max_epochs: self.get("max_epochs")?,
            seed: self.get("seed")?,
            clip_norm: self.optional("clip_norm")?,
            init_scale: self.get("init_scale")?,
            threads: self.optional("threads")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn decode_config(&self) -> Result<DecodeConfig> {
        let cfg = DecodeConfig {
            beam_width: self.get("beam_width")?,
            lm_weight: self.get("lm_weight")?,
            insertion_bonus: self.get("insertion_bonus")?,
            bonus_unit: self.raw("bonus_unit").parse::<BonusUnit>()?,
            width_prune: self.get("width_prune")?,
            depth_prune: self.optional("depth_prune")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn sample_config(&self) -> Result<SampleConfig> {
        let cfg = SampleConfig {
            length: self.get("length")?,
            temperature: self.get("temperature")?,
            seed: self.get("seed")?,
        };
        if !(cfg.temperature > 0.0) {
            return Err(Error::Config(format!("temperature must be positive, got {}", cfg.temperature)));
        }
        Ok(cfg)
    }

    /// `key = default  # description` for every key.
    pub fn describe() -> String {
        let mut s = String::new();
        for (k, d, help) in KEYS {
            let d = d.replace('\n', "\\n");
            s.push_str(&format!("{k} = {d}  # {help}\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_defaults() {
        let cfg = RunConfig::parse("# comment\nhidden = 16\nvariant=mono\n").unwrap();
        assert_eq!(cfg.get::<usize>("hidden").unwrap(), 16);
        assert_eq!(cfg.variant().unwrap(), Variant::Mono);
        assert_eq!(cfg.get::<usize>("bptt_length").unwrap(), 128);
        assert_eq!(cfg.optional::<usize>("depth_prune").unwrap(), None);
        assert_eq!(cfg.train_config().unwrap().clip_norm, Some(5.0));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::parse("hiden = 3"), Err(Error::Config(_))));
        let mut cfg = RunConfig::default();
        assert!(cfg.apply_overrides(&["--beam-widht".into(), "3".into()]).is_err());
    }

    #[test]
    fn overrides_mirror_keys() {
        let mut cfg = RunConfig::parse("beam_width = 4").unwrap();
        cfg.apply_overrides(&["--beam-width".into(), "8".into(), "--lm_weight=0.5".into()]).unwrap();
        assert_eq!(cfg.get::<usize>("beam_width").unwrap(), 8);
        assert_eq!(cfg.get::<f64>("lm_weight").unwrap(), 0.5);
        assert!(cfg.apply_overrides(&["--seed".into()]).is_err());
    }

    #[test]
    fn bad_values_are_config_errors() {
        let cfg = RunConfig::parse("hidden = many").unwrap();
        assert!(matches!(cfg.get::<usize>("hidden"), Err(Error::Config(_))));
        let cfg = RunConfig::parse("adadelta_rho = 1.5").unwrap();
        assert!(cfg.train_config().is_err());
    }

    #[test]
    fn escapes_in_values() {
        let cfg = RunConfig::parse("prime = a\\nb").unwrap();
        assert_eq!(cfg.raw("prime"), "a\nb");
    }
}

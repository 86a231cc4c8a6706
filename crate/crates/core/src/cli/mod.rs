//! The `hclm` command-line tool.

mod config;

use std::ffi::OsString;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use config::{RunConfig, KEYS};

use crate::corpus::{
    build_vocab, shard_sequences, split_heldout, tokenize, tokenize_lines, TokenSequence, Vocabulary,
};
use crate::decode::{beam_search, nbest_row, transcript, wer_str, PosteriorMatrix, NBEST_CSV_HEADER};
use crate::error::{Error, Result};
use crate::eval::{evaluate, sample, EvalReport};
use crate::hierarchy::{Network, NetworkSpec};
use crate::training::{gradient_check, train, Checkpoint, EpochMetrics};

#[derive(Debug, Parser)]
#[command(name = "hclm", version, about = "Hierarchical character-level LSTM language models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write checkpoints plus a metrics CSV
    Train(CommonArgs),
    /// Report size, parameters, BPC and word perplexity on a text
    Eval(CommonArgs),
    /// Generate text from a checkpoint
    Sample(CommonArgs),
    /// Beam-search a posterior matrix with the model as LM
    Decode(CommonArgs),
    /// Compare analytic and finite-difference gradients on a tiny model
    Gradcheck(CommonArgs),
    /// List every configuration key with its default
    Keys,
}

#[derive(Debug, clap::Args)]
struct CommonArgs {
    /// Flat key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Any configuration key as `--key value`
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

impl CommonArgs {
    fn resolve(&self) -> Result<RunConfig> {
        // `--config` may also appear after the first free-form override
        let mut config = self.config.clone();
        let mut overrides = Vec::with_capacity(self.overrides.len());
        let mut it = self.overrides.iter();
        while let Some(arg) = it.next() {
            if arg == "--config" {
                let p = it.next().ok_or_else(|| Error::Argument("--config needs a value".into()))?;
                config = Some(PathBuf::from(p));
            } else if let Some(p) = arg.strip_prefix("--config=") {
                config = Some(PathBuf::from(p));
            } else {
                overrides.push(arg.clone());
            }
        }
        let mut cfg = match &config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.set("seed", &s.to_string())?;
        }
        if let Some(t) = self.threads {
            cfg.set("threads", &t.to_string())?;
        }
        if let Some(d) = &self.output_dir {
            cfg.set("output_dir", &d.to_string_lossy())?;
        }
        cfg.apply_overrides(&overrides)?;
        Ok(cfg)
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match dispatch(cli.command, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("hclm: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<()> {
    let (args, f): (CommonArgs, fn(&RunConfig, &mut dyn Write) -> Result<()>) = match command {
        Command::Keys => {
            return write_out(out, &RunConfig::describe());
        }
        Command::Train(a) => (a, cmd_train),
        Command::Eval(a) => (a, cmd_eval),
        Command::Sample(a) => (a, cmd_sample),
        Command::Decode(a) => (a, cmd_decode),
        Command::Gradcheck(a) => (a, cmd_gradcheck),
    };
    let cfg = args.resolve()?;
    if let Some(n) = cfg.optional::<usize>("threads")? {
        if n == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        // only the first call in a process can size the global pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    f(&cfg, out)
}

fn write_out(out: &mut dyn Write, s: &str) -> Result<()> {
    out.write_all(s.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io("<stdout>", e))
}

fn read_text(cfg: &RunConfig, path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|_| Error::Format(format!("{} is not UTF-8", path.display())))?;
    Ok(if cfg.get::<bool>("uppercase")? { text.to_uppercase() } else { text })
}

fn output_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.require_path("output_dir")?;
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn load_vocab(cfg: &RunConfig, text: &str) -> Result<Vocabulary> {
    match cfg.path("vocab") {
        Some(p) => Vocabulary::load(&p),
        None => build_vocab(text, cfg.mode()?),
    }
}

fn spec_from(cfg: &RunConfig, vocab: &Vocabulary) -> Result<NetworkSpec> {
    let spec = NetworkSpec::new(cfg.variant()?, vocab, cfg.get("layers_per_module")?, cfg.get("hidden")?)
        .with_peephole(cfg.peephole()?)
        .with_char_reset(cfg.get("char_reset")?);
    spec.validate()?;
    Ok(spec)
}

fn cmd_train(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let corpus_path = cfg.require_path("corpus")?;
    let text = read_text(cfg, &corpus_path)?;
    let vocab = load_vocab(cfg, &text)?;
    let spec = spec_from(cfg, &vocab)?;
    let tcfg = cfg.train_config()?;
    let lines: Vec<TokenSequence> = tokenize_lines(&text, &vocab)?;
    if lines.iter().all(|s| s.ids.len() < 2) {
        return Err(Error::EmptyCorpus);
    }

    let (train_lines, heldout) = match cfg.path("heldout") {
        Some(p) => (lines, vec![tokenize(&read_text(cfg, &p)?, &vocab)?]),
        None => {
            let fraction: f64 = cfg.get("heldout_fraction")?;
            if fraction > 0.0 && lines.len() >= 2 {
                let (t, h) = split_heldout(lines, fraction)?;
                (t, shard_sequences(&h, 1))
            } else {
                (lines, Vec::new())
            }
        }
    };
    let streams = shard_sequences(&train_lines, tcfg.batch_size);

    let dir = output_dir(cfg)?;
    vocab.save(&dir.join("vocab.txt"))?;
    let metrics_path = dir.join("metrics.csv");
    let mut metrics = File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    writeln!(metrics, "{}", EpochMetrics::CSV_HEADER).map_err(|e| Error::io(&metrics_path, e))?;
    drop(metrics);
    let timing: bool = cfg.get("metrics_timing")?;
    let best_path = dir.join("model.ckpt");

    let outcome = train(spec, &streams, &heldout, &tcfg, |m, net, improved| {
        let mut f = OpenOptions::new()
            .append(true)
            .open(&metrics_path)
            .map_err(|e| Error::io(&metrics_path, e))?;
        writeln!(f, "{}", m.csv_row(timing)).map_err(|e| Error::io(&metrics_path, e))?;
        if improved {
            Checkpoint::new(net.clone(), vocab.clone())?.save(&best_path)?;
        }
        let held = m.heldout_bpc.map(|b| format!(" heldout_bpc {b:.4}")).unwrap_or_default();
        eprintln!("epoch {} train_bpc {:.4}{held} ({:.1}s)", m.epoch, m.train_bpc, m.seconds);
        Ok(())
    })?;
    Checkpoint::new(outcome.last.clone(), vocab.clone())?.save(&dir.join("last.ckpt"))?;

    let last = outcome.metrics.last().expect("at least one epoch");
    let mut summary = format!(
        "epochs {} best_epoch {} final_train_bpc {:.4}",
        outcome.metrics.len(),
        outcome.best_epoch,
        last.train_bpc
    );
    if let Some(h) = last.heldout_bpc {
        summary.push_str(&format!(" final_heldout_bpc {h:.4}"));
    }
    summary.push_str(&format!("\ncheckpoint {}\n", best_path.display()));
    write_out(out, &summary)
}

fn load_checkpoint(cfg: &RunConfig) -> Result<Checkpoint> {
    Checkpoint::load(&cfg.require_path("checkpoint")?)
}

fn cmd_eval(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let ck = load_checkpoint(cfg)?;
    let text = read_text(cfg, &cfg.require_path("corpus")?)?;
    let seq = tokenize(&text, &ck.vocab)?;
    let report = evaluate(&ck.network, &seq)?;
    let s = match cfg.raw("format") {
        "table" => report.table(),
        "csv" => format!("{}\n{}\n", EvalReport::CSV_HEADER, report.csv_row()),
        other => return Err(Error::Config(format!("unknown eval format {other:?} (expected table or csv)"))),
    };
    write_out(out, &s)
}

fn cmd_sample(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let ck = load_checkpoint(cfg)?;
    let prime_text = cfg.raw("prime").to_string();
    let mut prime = Vec::new();
    if !prime_text.is_empty() {
        prime = tokenize(&prime_text, &ck.vocab)?.ids;
        if !prime_text.ends_with('\n') {
            prime.pop();
        }
    }
    let mut text = sample(&ck.network, &ck.vocab, &prime, &cfg.sample_config()?)?;
    if !text.ends_with('\n') {
        text.push('\n');
    }
    write_out(out, &text)
}

fn cmd_decode(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let ck = load_checkpoint(cfg)?;
    let post = PosteriorMatrix::load(&cfg.require_path("posterior")?, &ck.vocab)?;
    let dcfg = cfg.decode_config()?;
    let beam = beam_search(&post, &ck.network, &dcfg)?;
    let best = transcript(&beam[0], &ck.vocab);

    let n: usize = cfg.get("nbest")?;
    if n > 0 {
        let dir = output_dir(cfg)?;
        let path = dir.join("nbest.csv");
        let mut csv = format!("{NBEST_CSV_HEADER}\n");
        for (i, h) in beam.iter().take(n).enumerate() {
            csv.push_str(&nbest_row(i + 1, h, &ck.vocab));
            csv.push('\n');
        }
        fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    }
    if let Some(p) = cfg.path("reference") {
        let reference = read_text(cfg, &p)?;
        eprintln!("WER {:.4}", wer_str(&reference, &best)?);
    }
    write_out(out, &format!("{best}\n"))
}

fn cmd_gradcheck(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let text = cfg.raw("gradcheck_text").to_string();
    let vocab = build_vocab(&text, cfg.mode()?)?;
    let spec = spec_from(cfg, &vocab)?;
    let params = spec.param_count();
    if params > 100_000 {
        return Err(Error::Config(format!(
            "gradcheck needs a tiny network, this one has {params} parameters"
        )));
    }
    let net = Network::random(spec, cfg.get("init_scale")?, cfg.get("seed")?)?;
    let ids = tokenize(&text, &vocab)?.ids;
    let report = gradient_check(&net, &ids, cfg.get("fd_step")?, cfg.get("tolerance")?)?;
    write_out(
        out,
        &format!(
            "checked {} parameters over {} tokens\nmax relative error {:.3e} at {}[{}] (analytic {:.6e}, numeric {:.6e})\n",
            report.checked,
            ids.len(),
            report.max_rel_error,
            report.worst_block,
            report.worst_index,
            report.analytic,
            report.numeric
        ),
    )?;
    if report.passed() {
        Ok(())
    } else {
        Err(Error::Numeric(format!(
            "max relative error {:.3e} exceeds tolerance {:.1e}",
            report.max_rel_error, report.tolerance
        )))
    }
}

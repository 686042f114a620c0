//! Command-line front end. `run` parses arguments, dispatches, and turns
//! any failure into a single `error: ...` line with exit status 1.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::codec::{decode, encode, read_token_file, write_token_file, Variant};
use crate::dataset::{corpus_stats, filter_subset, load_corpus, save_corpus, split_corpus, CorpusEntry, Subset};
use crate::generation::{check_adherence, generate, GenerationCondition, SamplingConfig};
use crate::metrics::evaluate_songs;
use crate::neural::{encode_corpus, finetune_init, train, LogRecord, Model, ModelCheckpoint, ModelConfig, OptimizerConfig, TrainConfig};
use crate::score::Song;
use crate::tables::CanonicalTables;
use crate::vocab::{TokenId, Vocabulary};

pub const DESK_CONFIG: &str = include_str!("../configs/desk.cfg");
pub const PAPER_CONFIG: &str = include_str!("../configs/paper.cfg");

type CliResult<T> = Result<T, String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Settings read from a `key = value` file, then overridden by `--set`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub max_len: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub decay_steps: u64,
    pub pretrain_lr0: f64,
    pub pretrain_steps: u64,
    pub pretrain_batch_size: usize,
    pub finetune_lr0: f64,
    pub finetune_steps: u64,
    pub finetune_batch_size: usize,
    pub eval_every: u64,
    pub temperature: f64,
    pub top_k: usize,
    pub max_tokens: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::parse(DESK_CONFIG).expect("desk preset parses")
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T> {
    value.parse().map_err(|_| format!("invalid value `{value}` for config key `{key}`"))
}

impl RunConfig {
    pub fn preset(name: &str) -> CliResult<Self> {
        match name {
            "desk" => RunConfig::parse(DESK_CONFIG),
            "paper" => RunConfig::parse(PAPER_CONFIG),
            _ => Err(format!("unknown preset `{name}`")),
        }
    }

    /// Starts from the desk preset, so a file only needs the keys it changes.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg = RunConfig::empty();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| format!("config line {}: expected key = value", i + 1))?;
            cfg.set(k.trim(), v.trim()).map_err(|e| format!("config line {}: {e}", i + 1))?;
        }
        Ok(cfg)
    }

    fn empty() -> Self {
        RunConfig {
            dim: 128,
            heads: 4,
            layers: 4,
            max_len: 1024,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            decay_steps: 100_000,
            pretrain_lr0: 5e-4,
            pretrain_steps: 5000,
            pretrain_batch_size: 8,
            finetune_lr0: 1e-4,
            finetune_steps: 2000,
            finetune_batch_size: 8,
            eval_every: 500,
            temperature: 1.0,
            top_k: 20,
            max_tokens: 1024,
        }
    }

    pub fn set(&mut self, key: &str, v: &str) -> CliResult<()> {
        match key {
            "dim" => self.dim = parse_value(key, v)?,
            "heads" => self.heads = parse_value(key, v)?,
            "layers" => self.layers = parse_value(key, v)?,
            "max_len" => self.max_len = parse_value(key, v)?,
            "beta1" => self.beta1 = parse_value(key, v)?,
            "beta2" => self.beta2 = parse_value(key, v)?,
            "eps" => self.eps = parse_value(key, v)?,
            "weight_decay" => self.weight_decay = parse_value(key, v)?,
            "decay_steps" => self.decay_steps = parse_value(key, v)?,
            "pretrain_lr0" => self.pretrain_lr0 = parse_value(key, v)?,
            "pretrain_steps" => self.pretrain_steps = parse_value(key, v)?,
            "pretrain_batch_size" => self.pretrain_batch_size = parse_value(key, v)?,
            "finetune_lr0" => self.finetune_lr0 = parse_value(key, v)?,
            "finetune_steps" => self.finetune_steps = parse_value(key, v)?,
            "finetune_batch_size" => self.finetune_batch_size = parse_value(key, v)?,
            "eval_every" => self.eval_every = parse_value(key, v)?,
            "temperature" => self.temperature = parse_value(key, v)?,
            "top_k" => self.top_k = parse_value(key, v)?,
            "max_tokens" => self.max_tokens = parse_value(key, v)?,
            _ => return Err(format!("unknown config key `{key}`")),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("dim", self.dim.to_string());
        put("heads", self.heads.to_string());
        put("layers", self.layers.to_string());
        put("max_len", self.max_len.to_string());
        put("beta1", self.beta1.to_string());
        put("beta2", self.beta2.to_string());
        put("eps", self.eps.to_string());
        put("weight_decay", self.weight_decay.to_string());
        put("decay_steps", self.decay_steps.to_string());
        put("pretrain_lr0", self.pretrain_lr0.to_string());
        put("pretrain_steps", self.pretrain_steps.to_string());
        put("pretrain_batch_size", self.pretrain_batch_size.to_string());
        put("finetune_lr0", self.finetune_lr0.to_string());
        put("finetune_steps", self.finetune_steps.to_string());
        put("finetune_batch_size", self.finetune_batch_size.to_string());
        put("eval_every", self.eval_every.to_string());
        put("temperature", self.temperature.to_string());
        put("top_k", self.top_k.to_string());
        put("max_tokens", self.max_tokens.to_string());
        s
    }

    pub fn model_config(&self, vocab_size: usize, seed: u64) -> ModelConfig {
        ModelConfig { vocab_size, dim: self.dim, heads: self.heads, layers: self.layers, max_len: self.max_len, seed }
    }

    fn optimizer(&self, lr0: f64) -> OptimizerConfig {
        OptimizerConfig { lr0, decay_steps: self.decay_steps, beta1: self.beta1, beta2: self.beta2, eps: self.eps, weight_decay: self.weight_decay }
    }

    pub fn pretrain_optimizer(&self) -> OptimizerConfig {
        self.optimizer(self.pretrain_lr0)
    }

    pub fn finetune_optimizer(&self) -> OptimizerConfig {
        self.optimizer(self.finetune_lr0)
    }
}

#[derive(Parser, Debug)]
#[command(name = "condmusic", version, about = "Genre- and instrument-conditioned symbolic music generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert songs to a token file.
    Encode(EncodeArgs),
    /// Convert a token file back to songs.
    Decode(DecodeArgs),
    /// Genre and instrument counts of a corpus.
    Stats(StatsArgs),
    /// Deterministic 90/5/5 split of a corpus.
    Split(SplitArgs),
    /// Train the unconditional model.
    Pretrain(PretrainArgs),
    /// Extend a pretrained model to a conditional variant and train it.
    Finetune(FinetuneArgs),
    /// Sample songs from a checkpoint.
    Generate(GenerateArgs),
    /// Objective metrics of a directory of songs.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// `key = value` file; `desk` and `paper` name the bundled presets.
    #[arg(long, default_value = "desk")]
    config: String,
    /// Override one config key, e.g. `--set dim=64`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> CliResult<RunConfig> {
        let mut cfg = match self.config.as_str() {
            "desk" | "paper" => RunConfig::preset(&self.config)?,
            path => RunConfig::parse(&fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?)?,
        };
        for o in &self.overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| format!("--set expects KEY=VALUE, got `{o}`"))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct EncodeArgs {
    #[arg(long)]
    variant: Variant,
    /// Token file to write; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the vocabulary file.
    #[arg(long)]
    vocab_out: Option<PathBuf>,
    /// Song files or directories of song files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Inferred from the token file header when absent.
    #[arg(long)]
    variant: Option<Variant>,
    /// Vocabulary file, for token files written with a custom vocabulary.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "full")]
    subset: Subset,
}

#[derive(Args, Debug)]
struct SplitArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PretrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    corpus: PathBuf,
    /// Overrides `pretrain_steps`.
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FinetuneArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Pretrained checkpoint.
    #[arg(long)]
    from: PathBuf,
    #[arg(long)]
    variant: Variant,
    #[arg(long)]
    corpus: PathBuf,
    /// Overrides `finetune_steps`.
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    from: PathBuf,
    #[arg(long)]
    variant: Variant,
    /// Genre names or ids, comma separated.
    #[arg(long, value_delimiter = ',')]
    tags: Vec<String>,
    /// Instrument names or ids, comma separated.
    #[arg(long, value_delimiter = ',')]
    programs: Vec<String>,
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long)]
    seed: u64,
    /// Let the model pick any instrument inside notes.
    #[arg(long)]
    no_enforce: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "text")]
    format: OutputFormat,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum OutputFormat {
    Text,
    Tsv,
}

/// Runs the command line and returns the process exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { stdout.write_all(text.as_bytes()) } else { stderr.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(msg) => {
            let _ = writeln!(stderr, "error: {}", msg.replace('\n', " "));
            1
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, log: &mut dyn Write) -> CliResult<()> {
    let tables = CanonicalTables::builtin();
    match cmd {
        Command::Encode(a) => cmd_encode(&a, &tables, out),
        Command::Decode(a) => cmd_decode(&a, &tables, out),
        Command::Stats(a) => cmd_stats(&a, &tables, out),
        Command::Split(a) => cmd_split(&a, &tables, out),
        Command::Pretrain(a) => cmd_pretrain(&a, &tables, out, log),
        Command::Finetune(a) => cmd_finetune(&a, &tables, out, log),
        Command::Generate(a) => cmd_generate(&a, &tables, out),
        Command::Evaluate(a) => cmd_evaluate(&a, &tables, out),
    }
}

fn load(path: &Path, tables: &CanonicalTables) -> CliResult<Vec<CorpusEntry>> {
    load_corpus(path, tables).map(|(entries, _)| entries).map_err(err)
}

fn write_file(path: &Path, contents: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))
}

fn encode_songs(entries: &[CorpusEntry], variant: Variant, vocab: &Vocabulary) -> CliResult<Vec<Vec<TokenId>>> {
    entries
        .iter()
        .map(|e| {
            let events = encode(&e.song, variant).map_err(|x| format!("{}: {x}", e.id))?;
            vocab.encode(&events).map_err(err)
        })
        .collect()
}

fn cmd_encode(a: &EncodeArgs, tables: &CanonicalTables, out: &mut dyn Write) -> CliResult<()> {
    let vocab = a.variant.vocab();
    let mut entries = Vec::new();
    for p in &a.inputs {
        entries.extend(load(p, tables)?);
    }
    let seqs = match encode_songs(&entries, a.variant, &vocab) {
        Ok(s) => s,
        // a single input reads better without the id prefix
        Err(e) if entries.len() == 1 => return Err(e.split_once(": ").map_or(e.clone(), |(_, m)| m.to_string())),
        Err(e) => return Err(e),
    };
    let mut buf = Vec::new();
    write_token_file(&mut buf, &vocab, &seqs).map_err(err)?;
    match &a.out {
        Some(p) => write_file(p, &buf)?,
        None => out.write_all(&buf).map_err(err)?,
    }
    if let Some(p) = &a.vocab_out {
        write_file(p, vocab.to_text().as_bytes())?;
    }
    Ok(())
}

fn cmd_decode(a: &DecodeArgs, tables: &CanonicalTables, out: &mut dyn Write) -> CliResult<()> {
    let text = fs::read_to_string(&a.input).map_err(|e| format!("{}: {e}", a.input.display()))?;
    let header_fp = text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix("#vocab "))
        .and_then(|h| u64::from_str_radix(h.trim(), 16).ok());
    let variant = match a.variant.or_else(|| header_fp.and_then(Variant::from_fingerprint)) {
        Some(v) => v,
        None => return Err("cannot infer the variant from the token file; pass --variant".into()),
    };
    let vocab = match &a.vocab {
        Some(p) => Vocabulary::from_text(&fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?).map_err(err)?,
        None => variant.vocab(),
    };
    let seqs = read_token_file(BufReader::new(text.as_bytes()), &vocab).map_err(err)?;
    let mut entries = Vec::with_capacity(seqs.len());
    for (i, ids) in seqs.iter().enumerate() {
        let events = vocab.decode(ids).map_err(|e| format!("sequence {i}: {e}"))?;
        let song = decode(&events, variant).map_err(|e| format!("sequence {i}: {e}"))?;
        entries.push(CorpusEntry { id: format!("song-{i:05}"), song });
    }
    save_corpus(&a.out, &entries, tables).map_err(err)?;
    writeln!(out, "decoded {} songs into {}", entries.len(), a.out.display()).map_err(err)
}

fn cmd_stats(a: &StatsArgs, tables: &CanonicalTables, out: &mut dyn Write) -> CliResult<()> {
    let entries = filter_subset(&load(&a.corpus, tables)?, a.subset);
    let stats = corpus_stats(&entries);
    let mut s = String::new();
    let _ = writeln!(s, "songs\t{}", entries.len());
    let _ = writeln!(s, "with_metadata\t{}", entries.iter().filter(|e| e.song.has_metadata).count());
    let _ = writeln!(s, "notes\t{}", entries.iter().map(|e| e.song.note_count()).sum::<usize>());
    for (id, n) in &stats.genres {
        let _ = writeln!(s, "genre\t{}\t{n}", tables.genre_name(*id).unwrap_or("?"));
    }
    for (id, n) in &stats.instruments {
        let _ = writeln!(s, "instrument\t{}\t{n}", tables.instrument_name(*id).unwrap_or("?"));
    }
    out.write_all(s.as_bytes()).map_err(err)
}

fn cmd_split(a: &SplitArgs, tables: &CanonicalTables, out: &mut dyn Write) -> CliResult<()> {
    let entries = load(&a.corpus, tables)?;
    let parts = split_corpus(&entries, a.seed);
    for (name, part) in [("train", &parts.train), ("valid", &parts.valid), ("test", &parts.test)] {
        let ids: String = part.iter().map(|e| format!("{}\n", e.id)).collect();
        write_file(&a.out.join(format!("{name}.txt")), ids.as_bytes())?;
        writeln!(out, "{name}\t{}", part.len()).map_err(err)?;
    }
    write_file(&a.out.join("split.cfg"), format!("corpus = {}\nseed = {}\n", a.corpus.display(), a.seed).as_bytes())
}

fn training_sets(entries: &[CorpusEntry], variant: Variant, vocab: &Vocabulary, max_len: usize, seed: u64) -> CliResult<(Vec<Vec<TokenId>>, Vec<Vec<TokenId>>)> {
    let parts = split_corpus(entries, seed);
    // songs without the variant's condition cannot be encoded and are left out
    let usable = |v: &[CorpusEntry]| -> Vec<Song> { v.iter().map(|e| e.song.clone()).filter(|s| encode(s, variant).is_ok()).collect() };
    let train_set = encode_corpus(&usable(&parts.train), variant, vocab, max_len).map_err(err)?;
    let valid_set = encode_corpus(&usable(&parts.valid), variant, vocab, max_len).map_err(err)?;
    if train_set.is_empty() {
        return Err(format!("no trainable songs for variant {variant}"));
    }
    Ok((train_set, valid_set))
}

fn write_run_outputs(dir: &Path, cfg: &RunConfig, extra: &str, ck: &ModelCheckpoint, vocab: &Vocabulary, records: &[LogRecord]) -> CliResult<()> {
    write_file(&dir.join("config.cfg"), format!("{}{extra}", cfg.to_text()).as_bytes())?;
    write_file(&dir.join("vocab.txt"), vocab.to_text().as_bytes())?;
    let mut log = format!("{}\n", LogRecord::tsv_header());
    for r in records.iter().filter(|r| r.valid_loss.is_some()) {
        log.push_str(&r.tsv());
        log.push('\n');
    }
    write_file(&dir.join("log.tsv"), log.as_bytes())?;
    fs::create_dir_all(dir).map_err(err)?;
    ck.save(&dir.join("model.ckpt")).map_err(err)
}

fn run_training(ck: &mut ModelCheckpoint, sets: &(Vec<Vec<TokenId>>, Vec<Vec<TokenId>>), tc: &TrainConfig, log: &mut dyn Write) -> CliResult<Vec<LogRecord>> {
    let _ = writeln!(log, "{}", LogRecord::tsv_header());
    train(ck, &sets.0, &sets.1, tc, |r| {
        if r.valid_loss.is_some() {
            let _ = writeln!(log, "{}", r.tsv());
        }
    })
    .map_err(err)
}

fn cmd_pretrain(a: &PretrainArgs, tables: &CanonicalTables, out: &mut dyn Write, log: &mut dyn Write) -> CliResult<()> {
    let mut cfg = a.config.load()?;
    if let Some(s) = a.steps {
        cfg.pretrain_steps = s;
    }
    let variant = Variant::Uncond;
    let vocab = variant.vocab();
    let entries = load(&a.corpus, tables)?;
    let sets = training_sets(&entries, variant, &vocab, cfg.max_len, a.seed)?;
    let model = Model::init(cfg.model_config(vocab.len(), a.seed)).map_err(err)?;
    let mut ck = ModelCheckpoint::new(model, cfg.pretrain_optimizer(), &vocab);
    let tc = TrainConfig { steps: cfg.pretrain_steps, batch_size: cfg.pretrain_batch_size, eval_every: cfg.eval_every, seed: a.seed };
    let records = run_training(&mut ck, &sets, &tc, log)?;
    let extra = format!("# command = pretrain\n# corpus = {}\n# seed = {}\n", a.corpus.display(), a.seed);
    write_run_outputs(&a.out, &cfg, &extra, &ck, &vocab, &records)?;
    writeln!(out, "trained {} steps on {} songs; checkpoint {}", ck.step(), sets.0.len(), a.out.join("model.ckpt").display()).map_err(err)
}

fn cmd_finetune(a: &FinetuneArgs, tables: &CanonicalTables, out: &mut dyn Write, log: &mut dyn Write) -> CliResult<()> {
    let mut cfg = a.config.load()?;
    if let Some(s) = a.steps {
        cfg.finetune_steps = s;
    }
    let pretrained = ModelCheckpoint::load(&a.from).map_err(|e| format!("{}: {e}", a.from.display()))?;
    let base = Variant::from_fingerprint(pretrained.vocab_fingerprint)
        .ok_or_else(|| format!("checkpoint/vocabulary mismatch: fingerprint {:016x} is not a built-in vocabulary", pretrained.vocab_fingerprint))?;
    let vocab = a.variant.vocab();
    let mut ck = finetune_init(&pretrained, &base.vocab(), &vocab, cfg.finetune_optimizer(), a.seed).map_err(err)?;
    let subset = match a.variant {
        Variant::Uncond => Subset::Full,
        Variant::MmtI => Subset::Metadata,
        Variant::MmtG | Variant::MmtGi => Subset::Genre,
    };
    let entries = filter_subset(&load(&a.corpus, tables)?, subset);
    let max_len = ck.model.config.max_len;
    let sets = training_sets(&entries, a.variant, &vocab, max_len, a.seed)?;
    let tc = TrainConfig { steps: cfg.finetune_steps, batch_size: cfg.finetune_batch_size, eval_every: cfg.eval_every, seed: a.seed };
    let records = run_training(&mut ck, &sets, &tc, log)?;
    let extra = format!(
        "# command = finetune\n# from = {}\n# variant = {}\n# subset = {subset}\n# corpus = {}\n# seed = {}\n",
        a.from.display(),
        a.variant,
        a.corpus.display(),
        a.seed
    );
    write_run_outputs(&a.out, &cfg, &extra, &ck, &vocab, &records)?;
    writeln!(out, "finetuned {} steps on {} songs; checkpoint {}", ck.step(), sets.0.len(), a.out.join("model.ckpt").display()).map_err(err)
}

fn resolve_ids(items: &[String], lookup: impl Fn(&str) -> Option<u8>, limit: usize, what: &str) -> CliResult<Vec<u8>> {
    items
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            let s = s.trim();
            match s.parse::<usize>() {
                Ok(n) if n < limit => Ok(n as u8),
                Ok(n) => Err(format!("{what} id {n} out of range")),
                Err(_) => lookup(s).ok_or_else(|| format!("unknown {what} `{s}`")),
            }
        })
        .collect()
}

fn cmd_generate(a: &GenerateArgs, tables: &CanonicalTables, out: &mut dyn Write) -> CliResult<()> {
    let cfg = a.config.load()?;
    let vocab = a.variant.vocab();
    let ck = ModelCheckpoint::load_for(&a.from, &vocab).map_err(err)?;
    let condition = GenerationCondition {
        variant: a.variant,
        tags: resolve_ids(&a.tags, |s| tables.genre_id(s), crate::score::NUM_GENRES, "genre")?,
        programs: resolve_ids(&a.programs, |s| tables.instrument_id(s), crate::score::NUM_INSTRUMENTS, "instrument")?,
        enforce_condition: !a.no_enforce,
    };
    condition.prefix().map_err(err)?;
    let mut seqs = Vec::with_capacity(a.n);
    let mut entries = Vec::with_capacity(a.n);
    let mut adherent = 0;
    for i in 0..a.n {
        let sampling = SamplingConfig { temperature: cfg.temperature, top_k: cfg.top_k, max_tokens: cfg.max_tokens, seed: a.seed.wrapping_add(i as u64) };
        let g = generate(&ck.model, &vocab, &condition, &sampling).map_err(err)?;
        adherent += usize::from(check_adherence(&g.song, &condition).ok());
        seqs.push(g.tokens);
        entries.push(CorpusEntry { id: format!("gen-{i:05}"), song: g.song });
    }
    let mut buf = Vec::new();
    write_token_file(&mut buf, &vocab, &seqs).map_err(err)?;
    write_file(&a.out.join("tokens.txt"), &buf)?;
    save_corpus(&a.out.join("songs"), &entries, tables).map_err(err)?;
    let extra = format!(
        "# command = generate\n# from = {}\n# variant = {}\n# tags = {:?}\n# programs = {:?}\n# enforce_condition = {}\n# n = {}\n# seed = {}\n",
        a.from.display(),
        a.variant,
        condition.tags,
        condition.programs,
        condition.enforce_condition,
        a.n,
        a.seed
    );
    write_file(&a.out.join("config.cfg"), format!("{}{extra}", cfg.to_text()).as_bytes())?;
    writeln!(out, "generated {} songs into {}; condition adherence {adherent}/{}", a.n, a.out.display(), a.n).map_err(err)
}

fn cmd_evaluate(a: &EvaluateArgs, tables: &CanonicalTables, out: &mut dyn Write) -> CliResult<()> {
    let entries = load(&a.input, tables)?;
    let songs: Vec<Song> = entries.into_iter().map(|e| e.song).collect();
    let metrics = evaluate_songs(&songs);
    let mut s = String::new();
    if let OutputFormat::Tsv = a.format {
        let _ = writeln!(s, "metric\tn\tmean\tci95");
    }
    for (name, row) in metrics.rows() {
        match (a.format, row) {
            (OutputFormat::Text, Ok(r)) => {
                let _ = writeln!(s, "{name:<20} {:.4} ± {:.4} (n={})", r.mean, r.ci95, r.n());
            }
            (OutputFormat::Tsv, Ok(r)) => {
                let _ = writeln!(s, "{name}\t{}\t{:.6}\t{:.6}", r.n(), r.mean, r.ci95);
            }
            (OutputFormat::Text, Err(e)) => {
                let _ = writeln!(s, "{name:<20} n/a ({e})");
            }
            (OutputFormat::Tsv, Err(_)) => {
                let _ = writeln!(s, "{name}\t0\tnan\tnan");
            }
        }
    }
    out.write_all(s.as_bytes()).map_err(err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("condmusic").chain(args.iter().copied()), &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn presets_parse_and_round_trip() {
        let desk = RunConfig::preset("desk").unwrap();
        assert_eq!((desk.dim, desk.heads, desk.layers), (128, 4, 4));
        let paper = RunConfig::preset("paper").unwrap();
        assert_eq!((paper.dim, paper.heads, paper.pretrain_steps, paper.pretrain_lr0), (768, 12, 1_000_000, 5e-4));
        assert_eq!(RunConfig::parse(&paper.to_text()).unwrap(), paper);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let e = RunConfig::parse("dim = 8\ndropout = 0.1\n").unwrap_err();
        assert!(e.contains("unknown config key `dropout`"), "{e}");
        assert!(RunConfig::parse("dim = eight").is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_capture(&["frobnicate"]).0, 2);
        assert_eq!(run_capture(&["encode", "--bogus", "x"]).0, 2);
        assert_eq!(run_capture(&["--help"]).0, 0);
    }

    #[test]
    fn missing_file_is_one_line_error() {
        let (code, _, err) = run_capture(&["evaluate", "--in", "/nonexistent/dir"]);
        assert_eq!(code, 1);
        assert!(err.starts_with("error: "));
        assert_eq!(err.trim_end().lines().count(), 1);
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use commu::codec::{parse_binary, parse_text, to_binary, to_text};
use commu::combiner::combine;
use commu::generator::{
    batch_generate, train_count_model, CountModel, GenerationRequest, SamplerConfig,
};
use commu::metrics::{corpus_stats, evaluate, group_by_metadata};
use commu::midi::DEFAULT_DIVISION;
use commu::preprocess::{augment, run_ingest, write_atomic, IngestManifest, DEFAULT_GAP_BARS};
use commu::vocab::VOCAB_VERSION;
use commu::{decode, encode, validate_grammar, validate_sample, ChordEvent, MetadataSet, Sample};

/// A problem with how the command was invoked rather than with its inputs.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Parser)]
#[command(name = "commu", about = "Metadata-conditioned symbolic music toolkit")]
struct Cli {
    /// JSON file with option defaults, either flat or keyed by command name.
    /// Command-line flags win over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample JSON to token text (or binary frames)
    Encode(EncodeArgs),
    /// Token text (or binary frames) to sample JSON
    Decode(DecodeArgs),
    /// Check sample JSON and token files
    Validate(ValidateArgs),
    /// Write the 60 tempo and key variants of a sample
    Augment(AugmentArgs),
    /// Slice, chunk and parse MIDI files into samples
    Ingest(IngestArgs),
    /// Fit a count model on token files
    Train(TrainArgs),
    /// Sample sequences conditioned on metadata and chords
    Generate(GenerateArgs),
    /// Controllability and diversity scores
    Evaluate(EvaluateArgs),
    /// Corpus statistics grouped by a metadata field
    Stats(StatsArgs),
    /// Merge compatible samples into one multi-track MIDI file
    Combine(CombineArgs),
}

#[derive(Debug, Args)]
struct EncodeArgs {
    /// A sample or an array of samples
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Write length-prefixed little-endian frames instead of text
    #[arg(long)]
    binary: bool,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    binary: bool,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// .json samples, .tok token text or .bin token frames
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct AugmentArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Pipeline manifest; replaces the other flags
    #[arg(long, conflicts_with_all = ["input_glob", "out_dir"])]
    manifest: Option<PathBuf>,
    #[arg(long, required_unless_present = "manifest")]
    input_glob: Option<String>,
    #[arg(long, required_unless_present = "manifest")]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    augment: bool,
    /// Silence in bars that splits a chunk [default: 2]
    #[arg(long)]
    gap_bars: Option<u32>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Token files, sample JSON files, or directories holding them
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Context length including the predicted token [default: 4]
    #[arg(long)]
    order: Option<usize>,
    /// Additive smoothing [default: 0.1]
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    model: PathBuf,
    /// One metadata object or an array of them
    #[arg(long)]
    meta: PathBuf,
    /// A chord progression, or one progression per metadata entry
    #[arg(long)]
    chords: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Samples per metadata entry [default: 1]
    #[arg(long)]
    num_samples: Option<usize>,
    /// [default: 32]
    #[arg(long)]
    top_k: Option<usize>,
    /// [default: 0.95]
    #[arg(long)]
    temperature: Option<f64>,
    /// Base seed; item j of entry m uses seed + m * num_samples + j [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// [default: 2048]
    #[arg(long)]
    max_tokens: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricChoice {
    All,
    Cp,
    Cv,
    Ch,
    Diversity,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Sample JSON files or directories holding them
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = MetricChoice::All)]
    metric: MetricChoice,
    /// Diversity groups of this many consecutive files (sorted by name)
    /// instead of grouping by identical metadata
    #[arg(long)]
    group_size: Option<usize>,
    /// Full report as JSON
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// [default: instrument]
    #[arg(long)]
    group_by: Option<String>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CombineArgs {
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Combine even when tempo, key, meter, length or chords differ
    #[arg(long)]
    force: bool,
    /// Ticks per quarter note [default: 480]
    #[arg(long)]
    division: Option<u16>,
}

/// Option lookup with flag > config file > default precedence.
struct Settings {
    section: Map<String, Value>,
    flat: Map<String, Value>,
}

impl Settings {
    fn load(path: Option<&Path>, command: &str) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Settings {
                section: Map::new(),
                flat: Map::new(),
            });
        };
        let value: Value = read_json(path)?;
        let Value::Object(mut flat) = value else {
            bail!("{}: config must be a JSON object", path.display());
        };
        let section = match flat.remove(command) {
            Some(Value::Object(m)) => m,
            Some(_) => bail!("{}: section {command:?} must be an object", path.display()),
            None => Map::new(),
        };
        Ok(Settings { section, flat })
    }

    fn get<T: DeserializeOwned>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.section.get(key).or_else(|| self.flat.get(key)) {
            Some(v) => serde_json::from_value(v.clone())
                .map_err(|e| usage(format!("config option {key}: {e}"))),
            None => Ok(default),
        }
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{}: invalid JSON", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("{}", dir.display()))?;
    }
    write_atomic(path, bytes).with_context(|| format!("{}", path.display()))
}

/// A file holding one sample or an array of them.
fn read_samples(path: &Path) -> Result<Vec<Sample>> {
    let value: Value = read_json(path)?;
    let samples: Vec<Sample> = match value {
        Value::Array(_) => serde_json::from_value(value),
        _ => serde_json::from_value(value).map(|s| vec![s]),
    }
    .with_context(|| format!("{}: not a sample", path.display()))?;
    for (i, s) in samples.iter().enumerate() {
        if let Some(v) = validate_sample(s).first() {
            bail!("{} (sample {i}): {v}", path.display());
        }
    }
    Ok(samples)
}

fn read_one_sample(path: &Path) -> Result<Sample> {
    let mut samples = read_samples(path)?;
    if samples.len() != 1 {
        bail!("{}: expected one sample, found {}", path.display(), samples.len());
    }
    Ok(samples.remove(0))
}

fn read_tokens(path: &Path, binary: bool) -> Result<Vec<Vec<u16>>> {
    let bytes = std::fs::read(path).with_context(|| format!("{}", path.display()))?;
    let parsed = if binary {
        parse_binary(&bytes)
    } else {
        parse_text(&String::from_utf8_lossy(&bytes))
    };
    parsed.with_context(|| format!("{}", path.display()))
}

fn has_ext(p: &Path, exts: &[&str]) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| exts.contains(&e))
}

/// Expands directories to their files with one of `exts`, sorted by name.
fn expand_inputs(inputs: &[PathBuf], exts: &[&str]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("{}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && has_ext(f, exts))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        bail!("no input files found");
    }
    Ok(out)
}

fn file_id(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

fn cmd_encode(a: &EncodeArgs) -> Result<()> {
    let samples = read_samples(&a.input)?;
    let seqs = samples
        .iter()
        .map(encode)
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("{}", a.input.display()))?;
    if a.binary {
        write_file(&a.out, &to_binary(&seqs))
    } else {
        let text: String = seqs.iter().map(|s| to_text(s) + "\n").collect();
        write_file(&a.out, text.as_bytes())
    }
}

fn cmd_decode(a: &DecodeArgs) -> Result<()> {
    let seqs = read_tokens(&a.input, a.binary)?;
    let samples = seqs
        .iter()
        .enumerate()
        .map(|(i, t)| decode(t).map_err(|v| anyhow!("{} (sequence {i}): {v}", a.input.display())))
        .collect::<Result<Vec<_>>>()?;
    match samples.as_slice() {
        [one] => write_json(&a.out, one),
        _ => write_json(&a.out, &samples),
    }
}

fn cmd_validate(a: &ValidateArgs) -> Result<()> {
    let mut bad = 0;
    for path in &a.inputs {
        let problems: Vec<String> = if has_ext(path, &["json"]) {
            let value: Value = read_json(path)?;
            let samples: Vec<Sample> = match value {
                Value::Array(_) => serde_json::from_value(value),
                _ => serde_json::from_value(value).map(|s| vec![s]),
            }
            .with_context(|| format!("{}: not a sample", path.display()))?;
            samples
                .iter()
                .enumerate()
                .flat_map(|(i, s)| validate_sample(s).into_iter().map(move |v| format!("sample {i}: {v}")))
                .collect()
        } else {
            read_tokens(path, has_ext(path, &["bin"]))?
                .iter()
                .enumerate()
                .flat_map(|(i, t)| {
                    validate_grammar(t)
                        .violations
                        .into_iter()
                        .map(move |v| format!("sequence {i}: {v}"))
                })
                .collect()
        };
        if problems.is_empty() {
            println!("{}: ok", path.display());
        } else {
            bad += 1;
            for p in problems {
                println!("{}: {p}", path.display());
            }
        }
    }
    if bad > 0 {
        bail!("{bad} of {} files failed validation", a.inputs.len());
    }
    Ok(())
}

fn cmd_augment(a: &AugmentArgs) -> Result<()> {
    let sample = read_one_sample(&a.input)?;
    let stem = file_id(&a.input);
    for (i, v) in augment(&sample).iter().enumerate() {
        write_json(&a.out_dir.join(format!("{stem}_aug{i:02}.json")), v)?;
    }
    Ok(())
}

fn cmd_ingest(a: &IngestArgs, cfg: &Settings) -> Result<()> {
    let manifest = match &a.manifest {
        Some(p) => read_json::<IngestManifest>(p)?,
        None => IngestManifest {
            input_glob: a.input_glob.clone().expect("required by clap"),
            output_dir: a.out_dir.clone().expect("required by clap"),
            augment: a.augment || cfg.get(None, "augment", false)?,
            gap_bars: cfg.get(a.gap_bars, "gap_bars", DEFAULT_GAP_BARS)?,
        },
    };
    if manifest.gap_bars == 0 {
        return Err(usage("gap_bars must be at least 1"));
    }
    let summary = run_ingest(&manifest)?;
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
    println!("{} files, {} samples", summary.files, summary.samples);
    Ok(())
}

fn cmd_train(a: &TrainArgs, cfg: &Settings) -> Result<()> {
    let order = cfg.get(a.order, "order", CountModel::DEFAULT_ORDER)?;
    let alpha = cfg.get(a.alpha, "alpha", CountModel::DEFAULT_ALPHA)?;
    let mut corpus = Vec::new();
    for path in expand_inputs(&a.inputs, &["tok", "bin", "json"])? {
        if has_ext(&path, &["json"]) {
            for s in read_samples(&path)? {
                corpus.push(encode(&s).with_context(|| format!("{}", path.display()))?);
            }
        } else {
            corpus.extend(read_tokens(&path, has_ext(&path, &["bin"]))?);
        }
    }
    let model = train_count_model(&corpus, order, alpha).map_err(|e| match e {
        commu::generator::ModelError::Parameter(m) => usage(m),
        other => other.into(),
    })?;
    write_file(&a.out, &model.to_bytes())?;
    println!("trained on {} sequences", corpus.len());
    Ok(())
}

/// Metadata and chords files may each hold one entry or a list; a single
/// progression applies to every metadata entry.
fn generation_requests(meta_path: &Path, chords_path: &Path) -> Result<Vec<GenerationRequest>> {
    let meta: Value = read_json(meta_path)?;
    let metas: Vec<MetadataSet> = match meta {
        Value::Array(_) => serde_json::from_value(meta),
        _ => serde_json::from_value(meta).map(|m| vec![m]),
    }
    .with_context(|| format!("{}: not metadata", meta_path.display()))?;
    let chords: Value = read_json(chords_path)?;
    let nested = chords
        .as_array()
        .is_some_and(|a| a.first().is_some_and(Value::is_array));
    let progressions: Vec<Vec<ChordEvent>> = if nested {
        serde_json::from_value(chords)
    } else {
        serde_json::from_value(chords).map(|c| vec![c])
    }
    .with_context(|| format!("{}: not a chord progression", chords_path.display()))?;
    if progressions.len() != 1 && progressions.len() != metas.len() {
        bail!(
            "{}: {} progressions for {} metadata entries",
            chords_path.display(),
            progressions.len(),
            metas.len()
        );
    }
    Ok(metas
        .into_iter()
        .enumerate()
        .map(|(i, metadata)| GenerationRequest {
            metadata,
            chords: progressions[i.min(progressions.len() - 1)].clone(),
        })
        .collect())
}

fn cmd_generate(a: &GenerateArgs, cfg: &Settings) -> Result<()> {
    let defaults = SamplerConfig::default();
    let config = SamplerConfig {
        top_k: cfg.get(a.top_k, "top_k", defaults.top_k)?,
        temperature: cfg.get(a.temperature, "temperature", defaults.temperature)?,
        seed: cfg.get(a.seed, "seed", defaults.seed)?,
        max_tokens: cfg.get(a.max_tokens, "max_tokens", defaults.max_tokens)?,
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    let n = cfg.get(a.num_samples, "num_samples", 1usize)?;
    if n == 0 {
        return Err(usage("num_samples must be at least 1"));
    }
    let bytes = std::fs::read(&a.model).with_context(|| format!("{}", a.model.display()))?;
    let model = CountModel::from_bytes(&bytes).with_context(|| format!("{}", a.model.display()))?;
    let requests = generation_requests(&a.meta, &a.chords)?;

    let results = batch_generate(&model, &requests, n, &config);
    let mut failed = 0;
    for (m, group) in results.iter().enumerate() {
        for (j, r) in group.iter().enumerate() {
            let name = format!("gen_{m:04}_{j:04}");
            match r {
                Ok(sample) => {
                    let tokens = encode(sample)?;
                    write_json(&a.out_dir.join(format!("{name}.json")), sample)?;
                    write_file(&a.out_dir.join(format!("{name}.tok")), (to_text(&tokens) + "\n").as_bytes())?;
                }
                Err(e) => {
                    failed += 1;
                    eprintln!("{name}: {e}");
                }
            }
        }
    }
    if failed > 0 {
        bail!("{failed} of {} generations failed", requests.len() * n);
    }
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs, cfg: &Settings) -> Result<()> {
    let paths = expand_inputs(&a.inputs, &["json"])?;
    let samples = paths.iter().map(|p| read_one_sample(p)).collect::<Result<Vec<_>>>()?;
    let ids: Vec<String> = paths.iter().map(|p| file_id(p)).collect();
    let groups = match cfg.get(a.group_size, "group_size", 0usize)? {
        0 if a.group_size.is_some() => return Err(usage("group_size must be at least 1")),
        0 => group_by_metadata(&samples),
        k => (0..samples.len())
            .collect::<Vec<_>>()
            .chunks(k)
            .map(<[usize]>::to_vec)
            .collect(),
    };
    let report = evaluate(&ids, &samples, &groups);
    let show = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
    let s = &report.summary;
    match a.metric {
        MetricChoice::All => {
            println!("CP\tCV\tCH\tD");
            println!("{}\t{}\t{}\t{}", show(s.cp), show(s.cv), show(s.ch), show(s.diversity));
        }
        MetricChoice::Cp => println!("{}", show(s.cp)),
        MetricChoice::Cv => println!("{}", show(s.cv)),
        MetricChoice::Ch => println!("{}", show(s.ch)),
        MetricChoice::Diversity => {
            for g in &report.groups {
                println!("{}\t{}\t{}", g.group, g.n, g.diversity);
            }
        }
    }
    if let Some(p) = &a.out {
        write_json(p, &report)?;
    }
    if let Some(p) = &a.csv {
        write_file(p, report.to_csv().as_bytes())?;
    }
    Ok(())
}

fn cmd_stats(a: &StatsArgs, cfg: &Settings) -> Result<()> {
    let group_by = cfg.get(a.group_by.clone(), "group_by", "instrument".to_string())?;
    let mut samples = Vec::new();
    for p in expand_inputs(&a.inputs, &["json"])? {
        samples.extend(read_samples(&p)?);
    }
    let stats = corpus_stats(&samples, &group_by).map_err(|e| usage(e.to_string()))?;
    let csv = stats.to_csv();
    if let Some(p) = &a.csv {
        write_file(p, csv.as_bytes())?;
    } else {
        print!("{csv}");
    }
    if let Some(p) = &a.out {
        write_json(p, &stats)?;
    }
    Ok(())
}

fn cmd_combine(a: &CombineArgs, cfg: &Settings) -> Result<()> {
    let division = cfg.get(a.division, "division", DEFAULT_DIVISION)?;
    if division == 0 || division > 0x7fff {
        return Err(usage(format!("division {division} out of range 1..=32767")));
    }
    let samples = a.inputs.iter().map(|p| read_one_sample(p)).collect::<Result<Vec<_>>>()?;
    let out = combine(&samples, division, a.force)?;
    for w in &out.manifest.warnings {
        eprintln!("warning: {w}");
    }
    write_file(&a.out, &out.midi)?;
    if let Some(p) = &a.manifest {
        write_json(p, &out.manifest)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let name = match &cli.command {
        Command::Encode(_) => "encode",
        Command::Decode(_) => "decode",
        Command::Validate(_) => "validate",
        Command::Augment(_) => "augment",
        Command::Ingest(_) => "ingest",
        Command::Train(_) => "train",
        Command::Generate(_) => "generate",
        Command::Evaluate(_) => "evaluate",
        Command::Stats(_) => "stats",
        Command::Combine(_) => "combine",
    };
    let cfg = Settings::load(cli.config.as_deref(), name)?;
    match &cli.command {
        Command::Encode(a) => cmd_encode(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Augment(a) => cmd_augment(a),
        Command::Ingest(a) => cmd_ingest(a, &cfg),
        Command::Train(a) => cmd_train(a, &cfg),
        Command::Generate(a) => cmd_generate(a, &cfg),
        Command::Evaluate(a) => cmd_evaluate(a, &cfg),
        Command::Stats(a) => cmd_stats(a, &cfg),
        Command::Combine(a) => cmd_combine(a, &cfg),
    }
}

fn main() -> ExitCode {
    let version = format!(
        "{} (vocabulary v{VOCAB_VERSION}, {} tokens)",
        env!("CARGO_PKG_VERSION"),
        commu::VOCAB_SIZE
    );
    let matches = Cli::command().version(version).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

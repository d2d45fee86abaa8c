use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use log::info;

use exsynth::dsp::{aligned_magnitude, StftParams, Waveform, Window};
use exsynth::eval::{score, ExperimentCorpus, ExperimentSpec};
use exsynth::features::{segment_features, segment_onsets, FeatureSetId};
use exsynth::index::{
    build_database, AudioStore, DbMode, DevDatabase, FeatureGroups, FileRecord, WeightVector,
};
use exsynth::io::{read_wav, scan_corpus, write_wav, AnalysisDocument};
use exsynth::synth::{
    synthesize, FrameTarget, Method, SegmentTarget, SynthConfig, Target, DEFAULT_GL_ITERS,
    DEFAULT_LAMBDA_V, DEFAULT_P,
};

#[derive(Parser)]
#[command(name = "exsynth", version, about = "Audio reconstruction from feature sequences")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment a WAV file and write its analysis document.
    Extract(ExtractArgs),
    /// Build a development database from a directory of WAV files.
    BuildDb(BuildDbArgs),
    /// Reconstruct audio for a target WAV or analysis document.
    Synth(SynthArgs),
    /// Score an estimate against reference audio.
    Eval(EvalArgs),
    /// Run a randomized-split experiment grid.
    Experiment(ExperimentArgs),
}

#[derive(Args, Clone, Copy)]
struct StftArgs {
    #[arg(long, default_value_t = 1024)]
    frame_len: usize,
    #[arg(long, default_value_t = 256)]
    hop: usize,
    #[arg(long, default_value = "hann")]
    window: Window,
}

impl StftArgs {
    fn params(self) -> anyhow::Result<StftParams> {
        Ok(StftParams::new(self.frame_len, self.hop, self.window)?)
    }
}

#[derive(Args)]
struct ExtractArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Defaults to the input file stem.
    #[arg(long)]
    track_id: Option<String>,
    #[command(flatten)]
    stft: StftArgs,
}

#[derive(Args)]
struct BuildDbArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value = "segment")]
    mode: DbMode,
    /// Feature set: 3, 8, 11, 21 (frame mode) or msd27 (segment mode).
    #[arg(long)]
    features: Option<FeatureSetId>,
    #[command(flatten)]
    stft: StftArgs,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    db: PathBuf,
    /// Target WAV file or analysis JSON document.
    #[arg(long)]
    target: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value = "cross-plain")]
    method: Method,
    #[arg(long = "P", visible_alias = "p", default_value_t = DEFAULT_P)]
    p: usize,
    /// Feature groups used by the distance (segment databases).
    #[arg(long = "use", default_value = "chroma,timbre,loudness")]
    use_groups: FeatureGroups,
    /// Explicit per-feature weights, overriding --use.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    #[arg(long, default_value_t = DEFAULT_LAMBDA_V)]
    lambda_v: f64,
    #[arg(long, default_value_t = DEFAULT_GL_ITERS)]
    gl_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Linear fade at segment boundaries in milliseconds (0 disables).
    #[arg(long, default_value_t = 0.0)]
    fade_ms: f64,
    /// Sample rate for analysis documents that do not state one.
    #[arg(long)]
    sample_rate: Option<u32>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    estimate: PathBuf,
    #[command(flatten)]
    stft: StftArgs,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "frame")]
    mode: DbMode,
    #[arg(long = "M", value_delimiter = ',', default_values_t = [3, 8, 11, 21])]
    m: Vec<usize>,
    #[arg(long = "N", value_delimiter = ',', default_values_t = [1000, 10000])]
    n: Vec<usize>,
    #[arg(long = "P", visible_alias = "p", value_delimiter = ',', default_values_t = [1, 5, 10, 20])]
    p: Vec<usize>,
    /// Defaults to frame-median (frame mode) or the three additive methods.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<Method>,
    /// Feature-group selections, repeatable; defaults to all seven.
    #[arg(long = "use")]
    use_groups: Vec<FeatureGroups>,
    #[arg(long, default_value_t = 25)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Test excerpt length in frames or segments.
    #[arg(long)]
    test_len: Option<usize>,
    /// Keep the test file's group in the development draw.
    #[arg(long)]
    no_group_exclusion: bool,
    #[arg(long, default_value_t = DEFAULT_LAMBDA_V)]
    lambda_v: f64,
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    summary: Option<PathBuf>,
    #[command(flatten)]
    stft: StftArgs,
}

/// Raised for problems with the invocation itself; exits with status 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn require_exists(path: &Path, what: &str) -> anyhow::Result<()> {
    if !path.exists() {
        return Err(UsageError(format!("{what} '{}' does not exist", path.display())).into());
    }
    Ok(())
}

fn configure_workers() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("EXSYNTH_WORKERS") {
        let n: usize = v
            .parse()
            .map_err(|_| UsageError(format!("EXSYNTH_WORKERS must be a count, got '{v}'")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker pool")?;
    }
    Ok(())
}

fn extract(a: ExtractArgs) -> anyhow::Result<()> {
    require_exists(&a.input, "input")?;
    let p = a.stft.params()?;
    let w = read_wav(&a.input)?;
    let segs = segment_onsets(&w, p)?;
    let feats = segment_features(&w, &segs, p)?;
    let id = a.track_id.unwrap_or_else(|| {
        a.input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    AnalysisDocument::from_features(&id, w.sample_rate, &segs, &feats)?.write(&a.output)?;
    info!("{} segments written to {}", segs.len(), a.output.display());
    Ok(())
}

fn build_db(a: BuildDbArgs) -> anyhow::Result<()> {
    require_exists(&a.corpus, "corpus")?;
    let p = a.stft.params()?;
    let set = match (a.features, a.mode) {
        (Some(s), _) => s,
        (None, DbMode::Segment) => FeatureSetId::Msd27,
        (None, DbMode::Frame) => FeatureSetId::Frame8,
    };
    let root = a.corpus.canonicalize().with_context(|| a.corpus.display().to_string())?;
    let corpus = scan_corpus(&root)?;
    let (db, _) = build_database(&corpus, a.mode, set, p)?;
    db.save(&a.out)?;
    eprintln!(
        "{} entries from {} files written to {}",
        db.len(),
        db.files().len(),
        a.out.display()
    );
    Ok(())
}

fn load_store(db: &DevDatabase) -> anyhow::Result<AudioStore> {
    let mut store = AudioStore::new(db.params);
    for FileRecord { id, path, .. } in db.files() {
        let path = path
            .as_ref()
            .ok_or_else(|| anyhow!("database does not record a path for '{id}'"))?;
        let w = read_wav(path).with_context(|| format!("loading development audio '{id}'"))?;
        store.insert(id, w);
    }
    Ok(store)
}

fn is_json(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn synth(a: SynthArgs) -> anyhow::Result<()> {
    require_exists(&a.db, "database")?;
    require_exists(&a.target, "target")?;
    let db = DevDatabase::load(&a.db)?;
    let weights = match (a.weights, db.mode) {
        (Some(w), _) => WeightVector::new(w)?,
        (None, DbMode::Segment) => WeightVector::from_groups(a.use_groups)?,
        (None, DbMode::Frame) => WeightVector::ones(db.dim()),
    };
    let cfg = SynthConfig {
        method: a.method,
        p: a.p,
        weights,
        lambda_v: a.lambda_v,
        gl_iters: a.gl_iters,
        gl_seed: a.seed,
        boundary_fade_ms: a.fade_ms,
    };
    cfg.validate(&db)?;
    let target = if is_json(&a.target) {
        let doc = AnalysisDocument::read(&a.target)?;
        if db.mode != DbMode::Segment {
            bail!("analysis documents need a segment database");
        }
        let sr = a.sample_rate.or(doc.sample_rate).unwrap_or(db.sample_rate);
        Target::Segments(SegmentTarget::from_analysis(&doc, sr)?)
    } else {
        let w = read_wav(&a.target)?;
        match db.mode {
            DbMode::Segment => Target::Segments(SegmentTarget::from_audio(w, db.params)?),
            DbMode::Frame => Target::Frames(FrameTarget::from_audio(&w, db.params, db.feature_set)?),
        }
    };
    let store = load_store(&db)?;
    let out = synthesize(&target, &db, &store, &cfg)?;
    let clipped = write_wav(&out, &a.out)?;
    eprintln!(
        "{} samples written to {}{}",
        out.len(),
        a.out.display(),
        if clipped > 0 {
            format!(" ({clipped} clipped)")
        } else {
            String::new()
        }
    );
    Ok(())
}

fn eval(a: EvalArgs) -> anyhow::Result<()> {
    require_exists(&a.reference, "reference")?;
    require_exists(&a.estimate, "estimate")?;
    let p = a.stft.params()?;
    let reference = read_wav(&a.reference)?;
    let estimate = read_wav(&a.estimate)?;
    if reference.sample_rate != estimate.sample_rate {
        bail!(
            "reference at {} Hz, estimate at {} Hz",
            reference.sample_rate,
            estimate.sample_rate
        );
    }
    let estimate = Waveform {
        samples: estimate.slice(0, reference.len()).samples,
        sample_rate: estimate.sample_rate,
    };
    let s = score(&aligned_magnitude(&reference, p)?, &aligned_magnitude(&estimate, p)?)?;
    println!(
        "{}",
        serde_json::json!({
            "relative_error_db": s.relative_error_db,
            "mse_db": s.mse_db,
            "kl": s.kl,
        })
    );
    Ok(())
}

fn experiment(a: ExperimentArgs) -> anyhow::Result<()> {
    require_exists(&a.corpus, "corpus")?;
    let p = a.stft.params()?;
    let mut spec = match a.mode {
        DbMode::Frame => ExperimentSpec::frame_default(),
        DbMode::Segment => ExperimentSpec::segment_default(),
    };
    spec.m_values = a.m;
    spec.n_values = a.n;
    spec.p_values = a.p;
    if !a.methods.is_empty() {
        spec.methods = a.methods;
    }
    if !a.use_groups.is_empty() {
        spec.feature_combos = a.use_groups;
    }
    spec.trials = a.trials;
    spec.split_seed = a.seed;
    spec.genre_exclusion = !a.no_group_exclusion;
    if let Some(t) = a.test_len {
        spec.test_len = t;
    }
    spec.lambda_v = a.lambda_v;
    spec.validate().map_err(|e| UsageError(e.to_string()))?;

    let mut files = Vec::new();
    for f in scan_corpus(&a.corpus)? {
        match read_wav(&f.path) {
            Ok(w) => files.push((
                FileRecord {
                    id: f.id,
                    path: Some(f.path),
                    group: f.group,
                    n_samples: w.len(),
                },
                w,
            )),
            Err(e) => log::warn!("skipping {}: {e}", f.path.display()),
        }
    }
    let frame_set = match a.mode {
        DbMode::Frame => FeatureSetId::from_dim(*spec.m_values.iter().max().unwrap())?,
        DbMode::Segment => FeatureSetId::Msd27,
    };
    let corpus = ExperimentCorpus::new(files, a.mode, p, frame_set)?;
    let report = corpus.run(&spec)?;
    report.write_csv(&a.csv)?;
    if let Some(path) = &a.summary {
        report.write_summary(path)?;
    }
    for c in report.summary() {
        eprintln!(
            "M={} N={} P={} {} {}: {:.2} dB, KL {:.4}",
            c.m, c.n, c.p, c.method, c.feature_combo, c.relative_error_db, c.kl
        );
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_workers()?;
    match cli.command {
        Command::Extract(a) => extract(a),
        Command::BuildDb(a) => build_db(a),
        Command::Synth(a) => synth(a),
        Command::Eval(a) => eval(a),
        Command::Experiment(a) => experiment(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

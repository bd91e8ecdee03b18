use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use prosody_core::analysis::{
    correlation_matrix, summarize_diagonal, LanguageSample, DEFAULT_TOP_OFF_DIAGONAL,
};
use prosody_core::corpus::{load_manifest, CorpusManifest, Language};
use prosody_core::metric::{dissimilarity, neighbors, DEFAULT_NEIGHBORS};
use prosody_core::midlevel::{read_features, write_features};
use prosody_core::models::{
    eval_external_audio, evaluate, fit_linear, naive_predict, pair_vectors, read_exclusions,
    read_split, split_pairs, top_coefficients, write_split, Direction, EvaluationReport,
    LinearModel,
};
use prosody_core::pipeline::{extract_corpus, ExtractOptions};
use prosody_core::{FeatureTable, MatchedPair, ProsodyError, ProsodyVector};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_CONSTRAINT: u8 = 3;

/// Prosody extraction, retrieval, correlation analysis and transfer-model evaluation
/// for matched English/Spanish dialog utterances.
#[derive(Debug, Parser)]
#[command(name = "prosody", version)]
struct Cli {
    /// Log more detail to standard error (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute a prosody vector for every manifest utterance.
    Extract(ExtractArgs),
    /// Print the dissimilarity between two utterances.
    Distance(DistanceArgs),
    /// List the most similar and most dissimilar utterances to an anchor.
    Neighbors(NeighborsArgs),
    /// Spearman correlation matrix between feature sets of matched pairs.
    Correlate(CorrelateArgs),
    /// Speaker-aware train/test split of the matched pairs.
    Split(SplitArgs),
    /// Fit a linear prosody-transfer model on the training pairs.
    Fit(FitArgs),
    /// Average error of a transfer model on the test pairs.
    Evaluate(EvaluateArgs),
    /// Largest-magnitude coefficients of a linear model.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
struct ExtractArgs {
    /// Corpus manifest CSV.
    #[arg(long)]
    manifest: PathBuf,
    /// Directory that manifest audio paths are relative to.
    #[arg(long)]
    audio_root: PathBuf,
    /// Output feature CSV.
    #[arg(long)]
    out: PathBuf,
    /// Also write one frame-level CSV per track into this directory.
    #[arg(long)]
    dump_frames: Option<PathBuf>,
    /// Worker threads (0 = all cores). Does not affect the output.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Fail on utterances shorter than 0.5 s instead of dropping their pairs.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct DistanceArgs {
    /// Feature CSV written by `extract`.
    #[arg(long)]
    features: PathBuf,
    /// First utterance id.
    #[arg(long)]
    a: String,
    /// Second utterance id.
    #[arg(long)]
    b: String,
}

#[derive(Debug, Args)]
struct NeighborsArgs {
    /// Feature CSV written by `extract`.
    #[arg(long)]
    features: PathBuf,
    /// Utterance id to retrieve neighbours for.
    #[arg(long)]
    anchor: String,
    /// Rows in each of the similar and dissimilar blocks.
    #[arg(long, default_value_t = DEFAULT_NEIGHBORS)]
    k: usize,
    /// Search utterances of the other language instead of the anchor's own.
    #[arg(long)]
    cross_language: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LanguageArg {
    En,
    Es,
}

impl From<LanguageArg> for Language {
    fn from(l: LanguageArg) -> Self {
        match l {
            LanguageArg::En => Language::En,
            LanguageArg::Es => Language::Es,
        }
    }
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("mode").required(true).args(["cross", "within"]))]
struct CorrelateArgs {
    /// Feature CSV written by `extract`.
    #[arg(long)]
    features: PathBuf,
    /// Corpus manifest CSV defining the pairs.
    #[arg(long)]
    manifest: PathBuf,
    /// English rows against Spanish columns.
    #[arg(long)]
    cross: bool,
    /// Features of one language against themselves.
    #[arg(long, value_enum)]
    within: Option<LanguageArg>,
    /// Output matrix CSV.
    #[arg(long)]
    out: PathBuf,
    /// Correlation level counted in the diagonal summary.
    #[arg(long, default_value_t = 0.3)]
    threshold: f64,
    /// Off-diagonal entries listed in the summary.
    #[arg(long, default_value_t = DEFAULT_TOP_OFF_DIAGONAL)]
    top: usize,
}

#[derive(Debug, Args)]
struct SplitArgs {
    /// Corpus manifest CSV.
    #[arg(long)]
    manifest: PathBuf,
    /// Target share of pairs in the test set.
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    /// Seed of the speaker shuffle.
    #[arg(long)]
    seed: u64,
    /// Output split CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Feature CSV written by `extract`.
    #[arg(long)]
    features: PathBuf,
    /// Split CSV written by `split`.
    #[arg(long)]
    split: PathBuf,
    /// Corpus manifest CSV resolving the pair ids of the split.
    #[arg(long)]
    manifest: PathBuf,
    /// Translation direction, en-es or es-en.
    #[arg(long)]
    direction: Direction,
    /// Ridge penalty on the non-intercept weights.
    #[arg(long, default_value_t = 0.0)]
    ridge: f64,
    /// Output model JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("model_kind").required(true).args(["model", "naive", "synth_dir"]))]
struct EvaluateArgs {
    /// Linear model JSON written by `fit`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Evaluate the identity model.
    #[arg(long)]
    naive: bool,
    /// Directory of synthesized `<utterance_id>.wav` target files.
    #[arg(long)]
    synth_dir: Option<PathBuf>,
    /// Target utterance ids to leave out, one per line (with --synth-dir).
    #[arg(long, requires = "synth_dir")]
    exclude: Option<PathBuf>,
    /// Feature CSV written by `extract`.
    #[arg(long)]
    features: PathBuf,
    /// Split CSV written by `split`.
    #[arg(long)]
    split: PathBuf,
    /// Corpus manifest CSV resolving the pair ids of the split.
    #[arg(long)]
    manifest: PathBuf,
    /// Translation direction, en-es or es-en.
    #[arg(long)]
    direction: Direction,
    /// Per-pair error CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InspectArgs {
    /// Linear model JSON written by `fit`.
    #[arg(long)]
    model: PathBuf,
    /// Number of coefficients to list.
    #[arg(long, default_value_t = 10)]
    top: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_constraint_failure() {
                EXIT_CONSTRAINT
            } else {
                EXIT_DATA
            })
        }
    }
}

fn run(command: Command) -> prosody_core::Result<()> {
    match command {
        Command::Extract(a) => extract(a),
        Command::Distance(a) => distance(a),
        Command::Neighbors(a) => neighbors_cmd(a),
        Command::Correlate(a) => correlate(a),
        Command::Split(a) => split(a),
        Command::Fit(a) => fit(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Inspect(a) => inspect(a),
    }
}

fn extract(a: ExtractArgs) -> prosody_core::Result<()> {
    let manifest = load_manifest(&a.manifest, a.strict)?;
    let options = ExtractOptions {
        jobs: a.jobs,
        dump_frames: a.dump_frames,
    };
    let vectors = extract_corpus(&manifest, &a.audio_root, &options)?;
    write_features(&a.out, &vectors)?;
    info!("wrote {} prosody vectors to {}", vectors.len(), a.out.display());
    Ok(())
}

fn distance(a: DistanceArgs) -> prosody_core::Result<()> {
    let table = read_features(&a.features)?;
    let d = dissimilarity(table.require(&a.a)?, table.require(&a.b)?)?;
    println!("{d}");
    Ok(())
}

fn neighbors_cmd(a: NeighborsArgs) -> prosody_core::Result<()> {
    let table = read_features(&a.features)?;
    let anchor = table.require(&a.anchor)?;
    let language = anchor.language().ok_or_else(|| {
        ProsodyError::InvalidArgument(format!("cannot tell the language of {}", a.anchor))
    })?;
    let wanted = if a.cross_language {
        language.other()
    } else {
        language
    };
    let pool: Vec<&ProsodyVector> = table
        .vectors()
        .iter()
        .filter(|v| v.utterance_id != anchor.utterance_id && v.language() == Some(wanted))
        .collect();
    print!("{}", neighbors(anchor, &pool, a.k)?);
    Ok(())
}

fn sample(table: &FeatureTable, pairs: &[MatchedPair], language: Language) -> prosody_core::Result<LanguageSample> {
    Ok(LanguageSample {
        language,
        pair_ids: pairs.iter().map(|p| p.pair_id.clone()).collect(),
        vectors: pairs
            .iter()
            .map(|p| Ok(table.require(&p.side(language).utterance_id)?.values))
            .collect::<prosody_core::Result<_>>()?,
    })
}

fn correlate(a: CorrelateArgs) -> prosody_core::Result<()> {
    let table = read_features(&a.features)?;
    let manifest = load_manifest(&a.manifest, false)?;
    let (rows, cols) = match a.within {
        Some(l) => (Language::from(l), Language::from(l)),
        None => (Language::En, Language::Es),
    };
    let m = correlation_matrix(
        &sample(&table, &manifest.pairs, rows)?,
        &sample(&table, &manifest.pairs, cols)?,
    )?;
    if m.undefined_count() > 0 {
        log::warn!("{} correlations undefined (constant features)", m.undefined_count());
    }
    m.write_csv(&a.out)?;
    print!("{}", summarize_diagonal(&m, a.threshold, a.top));
    Ok(())
}

fn split(a: SplitArgs) -> prosody_core::Result<()> {
    let manifest = load_manifest(&a.manifest, false)?;
    let spec = split_pairs(&manifest.pairs, a.test_fraction, a.seed)?;
    write_split(&a.out, &spec)?;
    println!(
        "train {} pairs, test {} pairs, shared speakers: {}",
        spec.train.len(),
        spec.test.len(),
        if spec.shared_speakers.is_empty() {
            "none".to_string()
        } else {
            spec.shared_speakers.join(", ")
        }
    );
    Ok(())
}

/// Training and test pairs of a split file, resolved against the manifest.
fn load_split(split: &PathBuf, manifest: &PathBuf) -> prosody_core::Result<(Option<u64>, Vec<MatchedPair>, Vec<MatchedPair>)> {
    let manifest: CorpusManifest = load_manifest(manifest, false)?;
    let assignment = read_split(split)?;
    let (train, test) = assignment.resolve(&manifest)?;
    Ok((assignment.seed, train, test))
}

fn fit(a: FitArgs) -> prosody_core::Result<()> {
    let table = read_features(&a.features)?;
    let (seed, train, _) = load_split(&a.split, &a.manifest)?;
    let model = fit_linear(&pair_vectors(&table, &train, a.direction)?, a.direction, a.ridge, seed)?;
    model.save(&a.out)?;
    info!("fitted {} on {} pairs", a.direction, model.n_train);
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> prosody_core::Result<()> {
    let table = read_features(&a.features)?;
    let (_, _, test) = load_split(&a.split, &a.manifest)?;
    let report: EvaluationReport = if let Some(dir) = &a.synth_dir {
        let exclusions = match &a.exclude {
            Some(path) => read_exclusions(path)?,
            None => Default::default(),
        };
        eval_external_audio(dir, &test, a.direction, &table, &exclusions)?
    } else {
        let pairs = pair_vectors(&table, &test, a.direction)?;
        let references: Vec<(String, ProsodyVector)> = pairs
            .iter()
            .map(|p| (p.pair_id.clone(), p.target.clone()))
            .collect();
        let (name, predictions) = match &a.model {
            Some(path) => {
                let model = LinearModel::load(path)?;
                if model.direction != a.direction {
                    return Err(ProsodyError::InvalidArgument(format!(
                        "model direction {} differs from requested {}",
                        model.direction, a.direction
                    )));
                }
                let predictions = pairs
                    .iter()
                    .map(|p| Ok((p.pair_id.clone(), model.predict(&p.source)?)))
                    .collect::<prosody_core::Result<Vec<_>>>()?;
                ("linear", predictions)
            }
            None => {
                let predictions = pairs
                    .iter()
                    .map(|p| (p.pair_id.clone(), naive_predict(&p.source)))
                    .collect();
                ("naive", predictions)
            }
        };
        evaluate(name, a.direction, &predictions, &references)?
    };
    print!("{report}");
    if let Some(out) = &a.out {
        report.write_csv(out)?;
    }
    Ok(())
}

fn inspect(a: InspectArgs) -> prosody_core::Result<()> {
    let model = LinearModel::load(&a.model)?;
    for c in top_coefficients(&model, a.top) {
        println!("{c}");
    }
    Ok(())
}

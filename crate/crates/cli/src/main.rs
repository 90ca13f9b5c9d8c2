//! `tag`: build caption databases, segment images, evaluate predictions.

mod config;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use tag_core::caption_index::{build_database, CaptionIndex, IndexKind, IndexParams, VectorIndex};
use tag_core::dense_features::{DenseFeatureMap, UpsampleMode, SOURCE_CLIP, SOURCE_DINO};
use tag_core::evaluator::{
    miou, reassign, ClassList, EvalSample, GroundTruth, LabelMap, MiouOptions, SentenceEmbeddingTable,
};
use tag_core::pipeline::{self, segment_image, PipelineConfig, Resources};
use tag_core::segmenter::ClusterOn;
use tag_core::tensor_store::{load_records, load_tensor, load_text_table};
use tag_core::word_pipeline::{
    vocabulary, CountMode, PosLexicon, PosTag, Stage, TagSet, WordEmbeddingTable, WordPipelineConfig,
};
use tag_core::{Error, Result};

use config::ConfigFile;

const DATA_DIR_VAR: &str = "TAG_DATA_DIR";
const DINO_SUFFIX: &str = ".dino.tens";
const CLIP_SUFFIX: &str = ".clip.tens";
const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Parser)]
#[command(name = "tag", version, about = "Open-vocabulary segmentation from precomputed features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize caption embeddings and build a searchable database.
    BuildDb(BuildDbArgs),
    /// Segment and label images from their dense feature files.
    Segment(Box<SegmentArgs>),
    /// Score label maps against ground truth.
    Eval(EvalArgs),
    /// Summarize a database directory.
    InspectIndex(InspectArgs),
    /// Export the normalized word list of a caption corpus.
    Vocab(VocabArgs),
}

#[derive(Args)]
struct BuildDbArgs {
    #[arg(long)]
    captions: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, default_value = "exact")]
    index: IndexKind,
    /// Coarse list count (default: ceil(sqrt(N))).
    #[arg(long)]
    lists: Option<usize>,
    /// Lists searched per query (default: ceil(L/8)).
    #[arg(long)]
    probe: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SegmentArgs {
    /// DINOv2 feature tensor of a single image.
    #[arg(long, requires = "clip", conflicts_with = "features_dir")]
    dino: Option<PathBuf>,
    /// CLIP value-path feature tensor of the same image.
    #[arg(long, requires = "dino")]
    clip: Option<PathBuf>,
    /// Directory of `<stem>.dino.tens` / `<stem>.clip.tens` pairs.
    #[arg(long)]
    features_dir: Option<PathBuf>,
    /// Output stem for single-image mode (default: derived from --dino).
    #[arg(long)]
    name: Option<String>,
    /// Caption database directory (default: $TAG_DATA_DIR/db).
    #[arg(long)]
    db: Option<PathBuf>,
    /// Word records and embeddings (default: $TAG_DATA_DIR/words.{jsonl,tens}).
    #[arg(long, num_args = 2, value_names = ["RECORDS", "EMBEDDINGS"])]
    word_table: Option<Vec<PathBuf>>,
    /// Part-of-speech lexicon (default: $TAG_DATA_DIR/lexicon.tsv, else bundled).
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Base image for the overlay in single-image mode.
    #[arg(long)]
    image: Option<PathBuf>,
    /// Directory of `<stem>.{png,jpg,jpeg}` base images for batch mode.
    #[arg(long)]
    images_dir: Option<PathBuf>,
    /// Original image size as HxW (default: grid times patch).
    #[arg(long, value_parser = parse_size)]
    image_size: Option<(usize, usize)>,
    #[arg(long)]
    patch: Option<usize>,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    kmeans_max_iters: Option<usize>,
    #[arg(long)]
    kmeans_tol: Option<f64>,
    #[arg(long)]
    topn: Option<usize>,
    #[arg(long)]
    freq_threshold: Option<usize>,
    /// Skip a word-pipeline stage; repeatable.
    #[arg(long)]
    disable_filter: Vec<Stage>,
    /// Part-of-speech tags that survive filtering; repeatable.
    #[arg(long)]
    keep_pos: Vec<PosTag>,
    /// Count words per `occurrence` or once per `caption`.
    #[arg(long)]
    count_per: Option<CountMode>,
    /// Keep an empty candidate set instead of lowering the threshold.
    #[arg(long)]
    no_threshold_fallback: bool,
    #[arg(long)]
    upsample: Option<UpsampleMode>,
    #[arg(long)]
    cluster_on: Option<ClusterOn>,
    #[arg(long)]
    probe: Option<usize>,
    /// Images processed concurrently.
    #[arg(long)]
    jobs: Option<usize>,
    /// TOML file with defaults for the flags above.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of `<stem>.labels.png` + `<stem>.legend.json`.
    #[arg(long)]
    pred_dir: PathBuf,
    /// Directory of `<stem>.png` ground-truth maps.
    #[arg(long)]
    gt_dir: PathBuf,
    /// Class file, or one of voc20, context59, ade150.
    #[arg(long)]
    classes: String,
    /// Sentence-embedding records and embeddings (default: $TAG_DATA_DIR/sbert.{jsonl,tens}).
    #[arg(long, num_args = 2, value_names = ["RECORDS", "EMBEDDINGS"])]
    sbert_table: Option<Vec<PathBuf>>,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    sim_threshold: f32,
    #[arg(long)]
    keep_undefined_as_zero: bool,
    /// Write the JSON report here as well as printing the table.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    db: Option<PathBuf>,
}

#[derive(Args)]
struct VocabArgs {
    #[arg(long)]
    captions: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got `{s}`"))?;
    let h = h.trim().parse().map_err(|_| format!("bad height in `{s}`"))?;
    let w = w.trim().parse().map_err(|_| format!("bad width in `{s}`"))?;
    Ok((h, w))
}

fn data_dir() -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_VAR).map(PathBuf::from)
}

fn default_path(given: Option<PathBuf>, file: &str, what: &str, flag: &str) -> Result<PathBuf> {
    given
        .or_else(|| data_dir().map(|d| d.join(file)))
        .ok_or_else(|| Error::Input(format!("no {what} given; pass {flag} or set {DATA_DIR_VAR}")))
}

fn table_paths(given: Option<Vec<PathBuf>>, stem: &str, what: &str, flag: &str) -> Result<(PathBuf, PathBuf)> {
    if let Some(v) = given {
        return Ok((v[0].clone(), v[1].clone()));
    }
    let dir = data_dir()
        .ok_or_else(|| Error::Input(format!("no {what} given; pass {flag} or set {DATA_DIR_VAR}")))?;
    Ok((dir.join(format!("{stem}.jsonl")), dir.join(format!("{stem}.tens"))))
}

fn require_exists(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Input(format!("{what} `{}` does not exist", path.display())))
    }
}

fn build_db(args: BuildDbArgs) -> Result<()> {
    let table = load_text_table(&args.captions, &args.embeddings)?;
    let db = build_database(table)?;
    let params = IndexParams {
        kind: args.index,
        lists: args.lists,
        probe: args.probe,
        seed: args.seed,
    };
    let index = CaptionIndex::build(db, &params)?;
    index.save(&args.out)?;
    println!(
        "wrote {} captions ({} excluded) to {}",
        index.database().len(),
        index.database().len() - index.database().active_rows(),
        args.out.display()
    );
    Ok(())
}

fn inspect(args: InspectArgs) -> Result<()> {
    let dir = default_path(args.db, "db", "database", "--db")?;
    let index = CaptionIndex::load(&dir)?;
    let db = index.database();
    println!("database  {}", dir.display());
    println!("captions  {}", db.len());
    println!("excluded  {}", db.len() - db.active_rows());
    println!("dim       {}", db.dim());
    println!("kind      {}", index.index().kind());
    if let VectorIndex::InvertedLists { lists, probe, seed, .. } = index.index() {
        let sizes: Vec<usize> = lists.iter().map(Vec::len).collect();
        println!("lists     {}", lists.len());
        println!("probe     {probe}");
        println!("seed      {seed}");
        println!(
            "list size min {} / max {}",
            sizes.iter().min().unwrap_or(&0),
            sizes.iter().max().unwrap_or(&0)
        );
    }
    Ok(())
}

fn vocab(args: VocabArgs) -> Result<()> {
    let records = load_records(&args.captions)?;
    let texts: Vec<&str> = records.iter().map(|r| r.text.as_str()).collect();
    let words = vocabulary(&texts, &WordPipelineConfig::default());
    let mut out = String::new();
    for w in &words {
        out.push_str(w);
        out.push('\n');
    }
    fs::write(&args.out, out).map_err(|e| Error::io(&args.out, e))?;
    println!("wrote {} words to {}", words.len(), args.out.display());
    Ok(())
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn parse_opt<T: std::str::FromStr<Err = Error>>(s: Option<String>) -> Result<Option<T>> {
    s.map(|s| s.parse()).transpose()
}

fn pipeline_config(args: &SegmentArgs, file: &ConfigFile) -> Result<PipelineConfig> {
    let defaults = PipelineConfig::default();
    let mut words = WordPipelineConfig {
        freq_threshold: pick(args.freq_threshold, file.freq_threshold, defaults.words.freq_threshold),
        count_mode: pick(args.count_per, parse_opt(file.count_per.clone())?, defaults.words.count_mode),
        fallback: !args.no_threshold_fallback && file.threshold_fallback.unwrap_or(true),
        ..defaults.words.clone()
    };
    let keep_pos: Vec<PosTag> = if !args.keep_pos.is_empty() {
        args.keep_pos.clone()
    } else if let Some(tags) = &file.keep_pos {
        tags.iter().map(|t| t.parse()).collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    if !keep_pos.is_empty() {
        words.keep_pos = TagSet::of(&keep_pos);
    }
    let mut stages = args.disable_filter.clone();
    for s in file.disable_filter.iter().flatten() {
        stages.push(s.parse()?);
    }
    for s in stages {
        words.disable(s);
    }
    let config = PipelineConfig {
        clusters: pick(args.clusters, file.clusters, defaults.clusters),
        topn: pick(args.topn, file.topn, defaults.topn),
        seed: pick(args.seed, file.seed, defaults.seed),
        kmeans_max_iters: pick(args.kmeans_max_iters, file.kmeans_max_iters, defaults.kmeans_max_iters),
        kmeans_tol: pick(args.kmeans_tol, file.kmeans_tol, defaults.kmeans_tol),
        upsample: pick(args.upsample, parse_opt(file.upsample.clone())?, defaults.upsample),
        cluster_on: pick(args.cluster_on, parse_opt(file.cluster_on.clone())?, defaults.cluster_on),
        words,
        workers: None,
        probe: args.probe.or(file.probe),
    };
    config.validate()?;
    Ok(config)
}

struct Job {
    stem: String,
    dino: PathBuf,
    clip: PathBuf,
    image: Option<PathBuf>,
}

fn collect_jobs(args: &SegmentArgs) -> Result<Vec<Job>> {
    if let (Some(dino), Some(clip)) = (&args.dino, &args.clip) {
        require_exists(dino, "DINOv2 feature file")?;
        require_exists(clip, "CLIP feature file")?;
        let stem = match &args.name {
            Some(n) => n.clone(),
            None => {
                let file = dino.file_name().and_then(|f| f.to_str()).unwrap_or("image");
                file.strip_suffix(DINO_SUFFIX)
                    .or_else(|| file.strip_suffix(".tens"))
                    .unwrap_or(file)
                    .to_string()
            }
        };
        if let Some(img) = &args.image {
            require_exists(img, "base image")?;
        }
        return Ok(vec![Job {
            stem,
            dino: dino.clone(),
            clip: clip.clone(),
            image: args.image.clone(),
        }]);
    }
    let Some(dir) = &args.features_dir else {
        return Err(Error::Input("pass --dino and --clip, or --features-dir".into()));
    };
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut stems = BTreeSet::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if let Some(stem) = entry.file_name().to_str().and_then(|f| f.strip_suffix(DINO_SUFFIX)) {
            stems.insert(stem.to_string());
        }
    }
    if stems.is_empty() {
        return Err(Error::Input(format!("no *{DINO_SUFFIX} files in {}", dir.display())));
    }
    stems
        .into_iter()
        .map(|stem| {
            let dino = dir.join(format!("{stem}{DINO_SUFFIX}"));
            let clip = dir.join(format!("{stem}{CLIP_SUFFIX}"));
            require_exists(&clip, "CLIP feature file")?;
            let image = args.images_dir.as_ref().and_then(|d| {
                IMAGE_EXTENSIONS
                    .iter()
                    .map(|ext| d.join(format!("{stem}.{ext}")))
                    .find(|p| p.exists())
            });
            Ok(Job { stem, dino, clip, image })
        })
        .collect()
}

fn run_job(job: &Job, args: &SegmentArgs, patch: usize, resources: &Resources<'_>, config: &PipelineConfig) -> Result<()> {
    let dino = DenseFeatureMap::from_tensor(load_tensor(&job.dino)?, args.image_size, patch, SOURCE_DINO)?;
    let clip = DenseFeatureMap::from_tensor(load_tensor(&job.clip)?, args.image_size, patch, SOURCE_CLIP)?;
    let result = segment_image(&dino, &clip, resources, config)?;
    for w in &result.report.warnings {
        log::warn!("{}: {w}", job.stem);
    }
    for s in &result.report.segments {
        if s.degenerate {
            log::warn!("{}: segment {} has no usable candidate and is labeled unknown", job.stem, s.segment);
        }
    }
    result.write(&args.out, &job.stem, job.image.as_deref())?;
    let words: Vec<&str> = result.labels.iter().map(|l| l.word.as_str()).collect();
    println!("{}: {}", job.stem, words.join(", "));
    Ok(())
}

fn segment(args: SegmentArgs) -> Result<()> {
    let file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let config = pipeline_config(&args, &file)?;
    let patch = pick(args.patch, file.patch, 14);
    let jobs_n = pick(args.jobs, file.jobs, 1);
    if patch == 0 || jobs_n == 0 {
        return Err(Error::Parameter("--patch and --jobs must be at least 1".into()));
    }
    let jobs = collect_jobs(&args)?;

    let db_dir = default_path(args.db.clone().or(file.db.clone()), "db", "caption database", "--db")?;
    require_exists(&db_dir, "caption database")?;
    let word_given = args.word_table.clone().or(match (&file.word_records, &file.word_embeddings) {
        (Some(r), Some(e)) => Some(vec![r.clone(), e.clone()]),
        _ => None,
    });
    let (word_rec, word_emb) = table_paths(word_given, "words", "word table", "--word-table")?;
    require_exists(&word_rec, "word records")?;
    let lexicon_path = args
        .lexicon
        .clone()
        .or(file.lexicon.clone())
        .or_else(|| data_dir().map(|d| d.join("lexicon.tsv")).filter(|p| p.exists()));

    let captions = CaptionIndex::load(&db_dir)?;
    let words = WordEmbeddingTable::from_table(load_text_table(&word_rec, &word_emb)?)?;
    let lexicon = match lexicon_path {
        Some(p) => PosLexicon::load(p)?,
        None => PosLexicon::bundled(),
    };
    let resources = Resources {
        captions: &captions,
        words: &words,
        lexicon: &lexicon,
    };
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs_n)
        .build()
        .map_err(|e| Error::Internal(e.to_string()))?;
    let results: Vec<Result<()>> =
        pool.install(|| jobs.par_iter().map(|j| run_job(j, &args, patch, &resources, &config)).collect());
    results.into_iter().collect()
}

fn eval(args: EvalArgs) -> Result<()> {
    let classes = match ClassList::builtin(&args.classes) {
        Some(c) => c,
        None => ClassList::load(&args.classes)?,
    };
    let (rec, emb) = table_paths(args.sbert_table, "sbert", "sentence-embedding table", "--sbert-table")?;
    let table = SentenceEmbeddingTable::from_table(load_text_table(&rec, &emb)?)?;

    let suffix = format!(".{}", pipeline::LABELS_SUFFIX);
    let entries = fs::read_dir(&args.pred_dir).map_err(|e| Error::io(&args.pred_dir, e))?;
    let mut stems = BTreeSet::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(&args.pred_dir, e))?;
        if let Some(stem) = entry.file_name().to_str().and_then(|f| f.strip_suffix(&suffix)) {
            stems.insert(stem.to_string());
        }
    }
    if stems.is_empty() {
        return Err(Error::Input(format!("no *{suffix} files in {}", args.pred_dir.display())));
    }
    let samples: Vec<EvalSample> = stems
        .par_iter()
        .map(|stem| {
            let pred = LabelMap::load(
                args.pred_dir.join(format!("{stem}{suffix}")),
                args.pred_dir.join(format!("{stem}.{}", pipeline::LEGEND_SUFFIX)),
            )?;
            let gt_path = args.gt_dir.join(format!("{stem}.png"));
            require_exists(&gt_path, "ground truth")?;
            let gt = GroundTruth::load_png(&gt_path, &classes)?;
            Ok(EvalSample {
                name: stem.clone(),
                pred: reassign(&pred, &classes, &table)?,
                gt,
            })
        })
        .collect::<Result<_>>()?;
    let options = MiouOptions {
        sim_threshold: args.sim_threshold,
        keep_undefined_as_zero: args.keep_undefined_as_zero,
    };
    let report = miou(&samples, &classes, &options)?;
    println!("{report}");
    if let Some(out) = &args.out {
        let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Internal(e.to_string()))?;
        fs::write(out, text + "\n").map_err(|e| Error::io(out, e))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(Error::Parameter(String::new()).exit_code())
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::BuildDb(a) => build_db(a),
        Command::Segment(a) => segment(*a),
        Command::Eval(a) => eval(a),
        Command::InspectIndex(a) => inspect(a),
        Command::Vocab(a) => vocab(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

//! Command-line pipeline: synth → preprocess → train → classify / kmeans →
//! evaluate → report, all under one work directory.
//!
//! Layout of the work directory:
//!
//! ```text
//! corpus/manifest.json            synth / ingest
//! preprocessed/<mode>/            preprocess
//! train/<mode>/checkpoint.ickp    train
//! assignments/<method>.csv        classify, kmeans
//! montage/<method>.png            classify, kmeans
//! samples/grid_<mode>.png         sample-grid
//! reports/<method>_s<seed>.json   evaluate
//! reports/comparison.{csv,txt}    report
//! runs/<command>.json             every command
//! ```

mod export;

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::{flatten_images, kmeans};
use crate::dataset::{
    generate_synthetic, ingest, load_corpus, save_corpus, truth_labels, Factor, ImageRecord, SynthSpec,
    BUILDING_CLASS, MANIFEST_FILE,
};
use crate::error::{Error, Result};
use crate::evaluate::{compare_methods, effect_validation, nmi, purity, silhouette, ClassifierConfig, EvaluationReport};
use crate::infogan::{classify, sample_grid, train, GanCheckpoint, LatentSpec, TrainConfig, CHECKPOINT_FILE};
use crate::preprocess::{apply, Mode};

pub use export::{export_assignments, export_cluster_montage, hard_assignments, read_assignments};

/// Environment variable capping preprocessing worker threads.
pub const WORKERS_ENV: &str = "INFOCLUSTER_WORKERS";

type Px = crate::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub work_dir: PathBuf,
    /// Corpus manifest for `preprocess`; the image directory for `ingest`.
    /// Defaults to the work dir's own corpus.
    pub corpus: Option<PathBuf>,
    /// Segmentation directory for `ingest`.
    pub seg_dir: Option<PathBuf>,
    pub building_classes: BTreeSet<u8>,
    pub seed: u64,
    pub mode: Mode,
    pub latent: LatentSpec,
    pub train: TrainConfig,
    /// Defaults to `latent.k_dis`.
    pub kmeans_k: Option<usize>,
    pub kmeans_max_iter: usize,
    /// Seeds of the effect-validation split; empty means `[seed]`.
    pub eval_seeds: Vec<u64>,
    pub classifier: ClassifierConfig,
    /// Ground-truth factor for purity/NMI; inferred when the corpus carries
    /// exactly one.
    pub truth_factor: Option<String>,
    pub synth: Option<SynthSpec>,
    /// Classify the original images instead of the preprocessed variant.
    pub classify_originals: bool,
    pub montage_per_cluster: usize,
    pub grid_cols: usize,
    pub grid_con_dim: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            work_dir: PathBuf::from("work"),
            corpus: None,
            seg_dir: None,
            building_classes: [BUILDING_CLASS].into(),
            seed: 0,
            mode: Mode::Mask,
            latent: LatentSpec::default(),
            train: TrainConfig::default(),
            kmeans_k: None,
            kmeans_max_iter: 300,
            eval_seeds: Vec::new(),
            classifier: ClassifierConfig::default(),
            truth_factor: None,
            synth: None,
            classify_originals: false,
            montage_per_cluster: 8,
            grid_cols: 10,
            grid_con_dim: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::config(path.display().to_string(), e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.latent.validate()?;
        self.train.validate()?;
        if let Some(s) = &self.synth {
            s.validate()?;
        }
        if self.building_classes.is_empty() {
            return Err(Error::config("building_classes", "must not be empty"));
        }
        if self.kmeans_k.is_some_and(|k| k < 2) {
            return Err(Error::config("kmeans_k", "must be at least 2"));
        }
        if self.montage_per_cluster == 0 {
            return Err(Error::config("montage_per_cluster", "must be at least 1"));
        }
        if self.grid_cols == 0 {
            return Err(Error::config("grid_cols", "must be at least 1"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    fn corpus_manifest(&self) -> PathBuf {
        self.corpus
            .clone()
            .unwrap_or_else(|| self.work_dir.join("corpus").join(MANIFEST_FILE))
    }

    fn preprocessed_dir(&self) -> PathBuf {
        self.work_dir.join("preprocessed").join(self.mode.name())
    }

    fn train_dir(&self) -> PathBuf {
        self.work_dir.join("train").join(self.mode.name())
    }

    fn infogan_method(&self) -> String {
        if self.classify_originals {
            format!("infogan-{}-originals", self.mode.name())
        } else {
            format!("infogan-{}", self.mode.name())
        }
    }

    fn kmeans_method(&self) -> String {
        format!("kmeans-{}", self.mode.name())
    }

    fn eval_seeds(&self) -> Vec<u64> {
        if self.eval_seeds.is_empty() {
            vec![self.seed]
        } else {
            self.eval_seeds.clone()
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "infocluster", version, about = "Unsupervised street-architecture clustering")]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// JSON pipeline configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    work_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    mode: Option<Mode>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    k_dis: Option<usize>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    classify_originals: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Generate the synthetic corpus.
    Synth,
    /// Import segmented images.
    Ingest,
    /// Mask, interpolate or raster-fairy the corpus.
    Preprocess,
    /// Train the InfoGAN.
    Train,
    /// Assign images to categories with the trained Q.
    Classify,
    /// K-means baseline on raw pixels.
    Kmeans,
    /// Silhouette, purity, NMI and effect validation per method.
    Evaluate,
    /// Generator samples across categories and one continuous code.
    SampleGrid,
    /// Comparison table over all evaluation reports.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Ingest => "ingest",
            Command::Preprocess => "preprocess",
            Command::Train => "train",
            Command::Classify => "classify",
            Command::Kmeans => "kmeans",
            Command::Evaluate => "evaluate",
            Command::SampleGrid => "sample-grid",
            Command::Report => "report",
        }
    }
}

/// Written to `runs/<command>.json` after every successful command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: PipelineConfig,
    pub outputs: Vec<PathBuf>,
}

fn resolve(args: &Args) -> Result<PipelineConfig> {
    let mut cfg = match &args.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(w) = &args.work_dir {
        cfg.work_dir = w.clone();
    }
    if let Some(m) = args.mode {
        cfg.mode = m;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    if let Some(k) = args.k_dis {
        cfg.latent.k_dis = k;
    }
    if let Some(l) = args.lambda {
        cfg.train.lambda = l;
    }
    cfg.classify_originals |= args.classify_originals;
    cfg.train.seed = cfg.seed;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code. Failures print one `ERROR <code>: <detail>` line.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    0
                }
                kind => {
                    let code = match kind {
                        ErrorKind::InvalidSubcommand | ErrorKind::MissingSubcommand => "UnknownCommand",
                        _ => "ConfigError",
                    };
                    let detail = e.kind().as_str().unwrap_or("invalid arguments");
                    let rendered = e.render().to_string();
                    let first = rendered.lines().next().unwrap_or("").trim_start_matches("error: ");
                    eprintln!("ERROR {code}: {detail}: {first}");
                    eprintln!("{}", Args::command_usage());
                    2
                }
            };
        }
    };
    match execute(&args) {
        Ok(_) => 0,
        Err(e) => {
            let detail = e.to_string().replace('\n', " ");
            eprintln!("ERROR {}: {detail}", e.code());
            1
        }
    }
}

impl Args {
    fn command_usage() -> String {
        use clap::CommandFactory;
        Args::command().render_usage().to_string()
    }
}

fn execute(args: &Args) -> Result<RunManifest> {
    let cfg = resolve(args)?;
    let outputs = match args.command {
        Command::Synth => cmd_synth(&cfg)?,
        Command::Ingest => cmd_ingest(&cfg)?,
        Command::Preprocess => cmd_preprocess(&cfg)?,
        Command::Train => cmd_train(&cfg)?,
        Command::Classify => cmd_classify(&cfg)?,
        Command::Kmeans => cmd_kmeans(&cfg)?,
        Command::Evaluate => cmd_evaluate(&cfg)?,
        Command::SampleGrid => cmd_sample_grid(&cfg)?,
        Command::Report => cmd_report(&cfg)?,
    };
    let manifest = RunManifest {
        command: args.command.name().to_string(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        config: cfg.clone(),
        outputs,
    };
    let dir = cfg.work_dir.join("runs");
    fs::create_dir_all(&dir)?;
    let path = dir.join(format!("{}.json", manifest.command));
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    for o in &manifest.outputs {
        println!("{}", o.display());
    }
    Ok(manifest)
}

fn corpus_out(cfg: &PipelineConfig, records: &[ImageRecord<Px>]) -> Result<Vec<PathBuf>> {
    let dir = cfg.work_dir.join("corpus");
    save_corpus(records, &dir)?;
    Ok(vec![dir.join(MANIFEST_FILE)])
}

fn cmd_synth(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let spec = cfg
        .synth
        .clone()
        .unwrap_or_else(|| SynthSpec::new(2000, &[(Factor::ColorSystem, 4)], cfg.seed));
    let records = generate_synthetic::<Px>(&spec)?;
    corpus_out(cfg, &records)
}

fn cmd_ingest(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let images = cfg.corpus.as_ref().ok_or_else(|| Error::config("corpus", "ingest needs an image directory"))?;
    let segs = cfg.seg_dir.as_ref().ok_or_else(|| Error::config("seg_dir", "ingest needs a segmentation directory"))?;
    let out = ingest::<Px>(images, segs, &cfg.building_classes, cfg.train.image_size)?;
    if !out.dropped.is_empty() {
        eprintln!("dropped {} image(s) without building pixels", out.dropped.len());
    }
    corpus_out(cfg, &out.records)
}

fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| Error::config(WORKERS_ENV, format!("`{v}` is not a positive integer")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::config(WORKERS_ENV, e.to_string()))
}

fn cmd_preprocess(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    use rayon::prelude::*;
    let records = load_corpus::<Px>(&cfg.corpus_manifest())?;
    let pool = worker_pool()?;
    let out: Vec<ImageRecord<Px>> =
        pool.install(|| records.par_iter().map(|r| apply(r, cfg.mode)).collect::<Result<_>>())?;
    let dir = cfg.preprocessed_dir();
    save_corpus(&out, &dir)?;
    Ok(vec![dir.join(MANIFEST_FILE)])
}

fn load_variant(cfg: &PipelineConfig) -> Result<Vec<ImageRecord<Px>>> {
    load_corpus(&cfg.preprocessed_dir().join(MANIFEST_FILE))
}

fn cmd_train(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let records = load_variant(cfg)?;
    let dir = cfg.train_dir();
    train(&records, &cfg.train, &cfg.latent, &dir)?;
    Ok(vec![dir.join(CHECKPOINT_FILE), dir.join(crate::infogan::LOSS_LOG_FILE)])
}

fn load_checkpoint(cfg: &PipelineConfig) -> Result<GanCheckpoint<Px>> {
    GanCheckpoint::load(&cfg.train_dir().join(CHECKPOINT_FILE))
}

/// Records clustered by `method`: originals for `-originals` runs, the
/// preprocessed variant otherwise.
fn records_for(cfg: &PipelineConfig, method: &str) -> Result<Vec<ImageRecord<Px>>> {
    if method.ends_with("-originals") {
        load_corpus(&cfg.corpus_manifest())
    } else {
        load_variant(cfg)
    }
}

fn write_clusters(
    cfg: &PipelineConfig,
    method: &str,
    records: &[ImageRecord<Px>],
    assignments: &[crate::infogan::ClusterAssignment<Px>],
    n_con: usize,
) -> Result<Vec<PathBuf>> {
    let csv = cfg.work_dir.join("assignments").join(format!("{method}.csv"));
    export_assignments(assignments, n_con, &csv)?;
    let png = cfg.work_dir.join("montage").join(format!("{method}.png"));
    export_cluster_montage(records, assignments, cfg.montage_per_cluster, &png)?;
    Ok(vec![csv, png])
}

fn cmd_classify(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let ckpt = load_checkpoint(cfg)?;
    let method = cfg.infogan_method();
    let records = records_for(cfg, &method)?;
    let assignments = classify(&records, &ckpt)?;
    write_clusters(cfg, &method, &records, &assignments, ckpt.latent.n_con)
}

fn cmd_kmeans(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let records = load_variant(cfg)?;
    let k = cfg.kmeans_k.unwrap_or(cfg.latent.k_dis);
    let result = kmeans(&flatten_images(&records)?, k, cfg.seed, cfg.kmeans_max_iter, 1e-6)?;
    let assignments = hard_assignments(&records, &result.labels, k);
    write_clusters(cfg, &cfg.kmeans_method(), &records, &assignments, 0)
}

fn truth_factor(cfg: &PipelineConfig, records: &[ImageRecord<Px>]) -> Option<String> {
    if let Some(f) = &cfg.truth_factor {
        return Some(f.clone());
    }
    let keys: BTreeSet<&String> = records.iter().flat_map(|r| r.truth.keys()).collect();
    match keys.into_iter().collect::<Vec<_>>()[..] {
        [only] => Some(only.clone()),
        _ => None,
    }
}

/// One report per clustering method found under `assignments/` and per
/// evaluation seed.
fn cmd_evaluate(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let dir = cfg.work_dir.join("assignments");
    let mut methods: Vec<String> = fs::read_dir(&dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let p = e.path();
            (p.extension()? == "csv").then(|| p.file_stem()?.to_str().map(str::to_string))?
        })
        .collect();
    methods.sort();
    if methods.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut outputs = Vec::new();
    for method in methods {
        let assignments = read_assignments(&dir.join(format!("{method}.csv")))?;
        let by_id: BTreeMap<String, ImageRecord<Px>> = records_for(cfg, &method)?
            .into_iter()
            .map(|r| (r.id.clone(), r))
            .collect();
        let records: Vec<ImageRecord<Px>> = assignments
            .iter()
            .map(|a| {
                by_id
                    .get(&a.image_id)
                    .cloned()
                    .ok_or_else(|| Error::config("assignments", format!("`{}` is not in the corpus", a.image_id)))
            })
            .collect::<Result<_>>()?;
        let labels: Vec<usize> = assignments.iter().map(|a| a.category).collect();
        let sil = match silhouette(&flatten_images(&records)?, &labels) {
            Ok(s) => Some(s),
            Err(Error::SingleCluster) => None,
            Err(e) => return Err(e),
        };
        let (pur, mi) = match truth_factor(cfg, &records).and_then(|f| truth_labels(&records, &f)) {
            Some(truth) => (Some(purity(&labels, &truth)?), Some(nmi(&labels, &truth)?)),
            None => (None, None),
        };
        for seed in cfg.eval_seeds() {
            let val_acc = match effect_validation(&records, &labels, &cfg.classifier, seed) {
                Ok(a) => Some(a),
                Err(Error::DegenerateSplit(d)) => {
                    eprintln!("{method}: no effect validation ({d})");
                    None
                }
                Err(e) => return Err(e),
            };
            let report = EvaluationReport {
                method: method.clone(),
                silhouette: sil,
                purity: pur,
                nmi: mi,
                val_acc,
                n_samples: records.len(),
                seed,
            };
            report.validate()?;
            let path = cfg.work_dir.join("reports").join(format!("{method}_s{seed}.json"));
            fs::create_dir_all(path.parent().unwrap())?;
            fs::write(&path, serde_json::to_string_pretty(&report)?)?;
            outputs.push(path);
        }
    }
    Ok(outputs)
}

fn cmd_sample_grid(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let ckpt = load_checkpoint(cfg)?;
    let path = cfg
        .work_dir
        .join("samples")
        .join(format!("grid_{}.png", cfg.mode.name()));
    sample_grid(&ckpt, ckpt.latent.k_dis, cfg.grid_cols, cfg.grid_con_dim, cfg.seed, &path)?;
    Ok(vec![path])
}

fn cmd_report(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let dir = cfg.work_dir.join("reports");
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let reports: Vec<EvaluationReport> = paths
        .iter()
        .map(|p| Ok(serde_json::from_str(&fs::read_to_string(p)?)?))
        .collect::<Result<_>>()?;
    let csv = dir.join("comparison.csv");
    let txt = compare_methods(&reports, &csv)?;
    print!("{}", fs::read_to_string(&txt)?);
    Ok(vec![csv, txt])
}

//! Subcommand implementations. Every command resolves its configuration as
//! flags > config file > defaults, writes its artifact plus a run manifest,
//! and is byte-deterministic for a fixed config and seed (manifests carry
//! durations and are exempt).

use crate::config::{override_opt, FileConfig};
use crate::manifest::{manifest_path_for, ManifestBuilder};
use clap::Args;
use groundtex::bow::{
    bow_embed as bow_embed_features, build_vocabulary, detect_and_describe, read_vocabulary,
    sweep_features_per_image, write_vocabulary, DetectorConfig,
};
use groundtex::embedding::{read_embeddings, write_embeddings, EmbeddingRecord};
use groundtex::embednet::{
    checkpoint, embed as net_embed, train_siamese, EmbeddingNet, ImageStore,
};
use groundtex::error::{Error, Result};
use groundtex::evalloc::report::{
    emit_report, read_report, read_retrieval, write_retrieval, RecallRow, ReportBundle,
};
use groundtex::evalloc::{
    compute_recall_report, localization_campaign, RetrievalSource,
};
use groundtex::index::EmbeddingIndex;
use groundtex::pairs::{build_training_pairs, enumerate_overlaps, read_pairs, write_pairs};
use groundtex::synth::manifest::{ingest_mapset, write_mapset};
use groundtex::synth::{generate_canvas, generate_mapset, MapSet, TextureStyle};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub struct Context {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub force: bool,
}

impl Context {
    fn file_config(&self) -> Result<FileConfig> {
        FileConfig::load(self.config.as_deref())
    }
}

/// Refuse to write into an existing non-empty directory unless --force.
fn check_output_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let occupied = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .next()
            .is_some();
        if occupied && !force {
            return Err(Error::invalid(format!(
                "output directory '{}' is not empty (pass --force to overwrite)",
                dir.display()
            )));
        }
    }
    Ok(())
}

/// Resolve an input artifact, naming the producing step when it is missing.
fn require_artifact(path: &Path, producing_step: &str) -> Result<()> {
    if !path.exists() {
        return Err(Error::MissingArtifact {
            step: producing_step.to_string(),
            path: path.display().to_string(),
        });
    }
    Ok(())
}

fn load_mapset(dir: &Path) -> Result<MapSet> {
    let manifest = dir.join("manifest.csv");
    require_artifact(&manifest, "generate or ingest")?;
    ingest_mapset(&manifest)
}

// ---------------------------------------------------------------------------
// generate

#[derive(Args)]
pub struct GenerateArgs {
    /// Output map directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Texture style (blob|fiber|speckle|crack|grid|grain).
    #[arg(long, value_parser = parse_style)]
    pub style: Option<TextureStyle>,
    #[arg(long)]
    pub n_queries: Option<usize>,
    #[arg(long)]
    pub revisit_fraction: Option<f64>,
    #[arg(long)]
    pub grid_spacing: Option<f64>,
    #[arg(long)]
    pub resolution: Option<f64>,
}

fn parse_style(raw: &str) -> std::result::Result<TextureStyle, String> {
    raw.parse::<TextureStyle>().map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct GenerateConfigSnapshot<'a> {
    canvas: &'a groundtex::synth::CanvasConfig,
    mapset: &'a groundtex::synth::MapSetConfig,
}

pub fn generate(ctx: &Context, args: GenerateArgs) -> Result<()> {
    let file = ctx.file_config()?;
    let mut canvas_cfg = file.canvas();
    let mut mapset_cfg = file.mapset();
    if let Some(style) = args.style {
        canvas_cfg.style = style;
    }
    override_opt(&mut canvas_cfg.resolution, args.resolution);
    override_opt(&mut mapset_cfg.n_queries, args.n_queries);
    override_opt(&mut mapset_cfg.revisit_fraction, args.revisit_fraction);
    override_opt(&mut mapset_cfg.grid_spacing, args.grid_spacing);
    if let Some(seed) = ctx.seed {
        canvas_cfg.seed = seed;
        mapset_cfg.seed = seed.wrapping_add(1);
    }

    check_output_dir(&args.out, ctx.force)?;
    let mut manifest = ManifestBuilder::new("generate");
    manifest.seed(canvas_cfg.seed).config(&GenerateConfigSnapshot {
        canvas: &canvas_cfg,
        mapset: &mapset_cfg,
    });

    let canvas = generate_canvas(&canvas_cfg)?;
    let mapset = generate_mapset(&canvas, &mapset_cfg)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    write_mapset(&mapset, &args.out)?;

    let snapshot = serde_json::to_string_pretty(&GenerateConfigSnapshot {
        canvas: &canvas_cfg,
        mapset: &mapset_cfg,
    })
    .expect("config serializes");
    let snapshot_path = args.out.join("generate_config.json");
    std::fs::write(&snapshot_path, snapshot).map_err(|e| Error::io(&snapshot_path, e))?;

    manifest.output(&args.out.join("manifest.csv"));
    manifest.write(&args.out.join("run_manifest.json"))?;
    println!(
        "generated {} references and {} queries under {}",
        mapset.references.len(),
        mapset.queries.len(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// ingest

#[derive(Args)]
pub struct IngestArgs {
    /// Path to a map manifest CSV.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output map directory (canonical layout).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn ingest(ctx: &Context, args: IngestArgs) -> Result<()> {
    let mapset = ingest_mapset(&args.manifest)?;
    check_output_dir(&args.out, ctx.force)?;
    let mut manifest = ManifestBuilder::new("ingest");
    manifest.input(&args.manifest)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    write_mapset(&mapset, &args.out)?;
    manifest.output(&args.out.join("manifest.csv"));
    manifest.write(&args.out.join("run_manifest.json"))?;
    println!(
        "ingested {} references and {} queries",
        mapset.references.len(),
        mapset.queries.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// pairs

#[derive(Args)]
pub struct PairsArgs {
    /// Map directory (from generate/ingest).
    #[arg(long)]
    pub mapset: PathBuf,
    /// Output pair-list CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub min_overlap: Option<f64>,
    #[arg(long)]
    pub augment_factor: Option<usize>,
}

pub fn pairs(ctx: &Context, args: PairsArgs) -> Result<()> {
    let file = ctx.file_config()?;
    let mut cfg = file.pairs();
    override_opt(&mut cfg.min_pos_overlap, args.min_overlap);
    override_opt(&mut cfg.augment_factor, args.augment_factor);
    override_opt(&mut cfg.seed, ctx.seed);

    let mapset = load_mapset(&args.mapset)?;
    let mut manifest = ManifestBuilder::new("pairs");
    manifest
        .seed(cfg.seed)
        .config(&cfg)
        .input(&args.mapset.join("manifest.csv"))?;

    let samples = build_training_pairs(&mapset, &cfg)?;
    write_pairs(&samples, &args.out)?;
    manifest.output(&args.out);
    manifest.write(&manifest_path_for(&args.out))?;
    println!("wrote {} pair samples to {}", samples.len(), args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// train

#[derive(Args)]
pub struct TrainArgs {
    /// Map directories providing the images named by the pair lists.
    #[arg(long, required = true)]
    pub mapset: Vec<PathBuf>,
    /// Pair-list CSV files (training set; may repeat).
    #[arg(long = "pairs", required = true)]
    pub pair_files: Vec<PathBuf>,
    /// Output checkpoint (.gnet).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
}

pub fn train(ctx: &Context, args: TrainArgs) -> Result<()> {
    let file = ctx.file_config()?;
    let mut net_cfg = file.net();
    let mut cfg = file.train();
    override_opt(&mut cfg.epochs, args.epochs);
    override_opt(&mut cfg.batch_size, args.batch_size);
    override_opt(&mut cfg.learning_rate, args.learning_rate);
    override_opt(&mut cfg.weight_decay, args.weight_decay);
    override_opt(&mut net_cfg.embed_dim, args.embed_dim);
    override_opt(&mut cfg.seed, ctx.seed);

    let mut manifest = ManifestBuilder::new("train");
    manifest.seed(cfg.seed).config(&(&net_cfg, &cfg));

    let mut mapsets = Vec::new();
    for dir in &args.mapset {
        manifest.input(&dir.join("manifest.csv"))?;
        mapsets.push(load_mapset(dir)?);
    }
    let mut samples = Vec::new();
    for path in &args.pair_files {
        require_artifact(path, "pairs")?;
        manifest.input(path)?;
        samples.extend(read_pairs(path)?);
    }
    let store = ImageStore::from_mapsets(mapsets.iter());

    let report = train_siamese::<f32>(&samples, &store, &net_cfg, &cfg)?;
    checkpoint::save_checkpoint(&report.net, &args.out)?;

    // Loss trace CSV next to the checkpoint.
    let trace_path = args.out.with_extension("loss.csv");
    let mut trace = String::from("epoch,train_loss,val_loss\n");
    for (i, (t, v)) in report.train_loss.iter().zip(report.val_loss.iter()).enumerate() {
        trace.push_str(&format!("{i},{t},{v}\n"));
    }
    std::fs::write(&trace_path, trace).map_err(|e| Error::io(&trace_path, e))?;

    manifest.output(&args.out).output(&trace_path);
    manifest.write(&manifest_path_for(&args.out))?;
    println!(
        "trained {} epochs (best {}), final train loss {:.5}; checkpoint at {}",
        report.train_loss.len(),
        report.best_epoch,
        report.train_loss.last().copied().unwrap_or(f64::NAN),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// embed

#[derive(Args)]
pub struct EmbedArgs {
    /// Trained checkpoint (.gnet).
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub mapset: PathBuf,
    /// Which images to embed: reference, query, or both.
    #[arg(long, default_value = "reference")]
    pub role: String,
    /// Output embedding database (.gemb).
    #[arg(long)]
    pub out: PathBuf,
}

fn select_images<'a>(mapset: &'a MapSet, role: &str) -> Result<Vec<&'a groundtex::synth::GroundImage>> {
    match role {
        "reference" => Ok(mapset.references.iter().collect()),
        "query" => Ok(mapset.queries.iter().collect()),
        "both" => Ok(mapset.references.iter().chain(mapset.queries.iter()).collect()),
        other => Err(Error::invalid(format!(
            "role must be reference, query, or both; got '{other}'"
        ))),
    }
}

pub fn embed(ctx: &Context, args: EmbedArgs) -> Result<()> {
    let _ = ctx;
    require_artifact(&args.model, "train")?;
    let mut manifest = ManifestBuilder::new("embed");
    manifest
        .input(&args.model)?
        .input(&args.mapset.join("manifest.csv"))?;

    let net: EmbeddingNet<f32> = checkpoint::load_checkpoint(&args.model)?;
    let mapset = load_mapset(&args.mapset)?;
    let images = select_images(&mapset, &args.role)?;
    let records = images
        .iter()
        .map(|img| EmbeddingRecord::new(img.id.clone(), net_embed(&net, &img.pixels)?))
        .collect::<Result<Vec<_>>>()?;
    write_embeddings(&records, &args.out)?;
    manifest.output(&args.out);
    manifest.write(&manifest_path_for(&args.out))?;
    println!("embedded {} images into {}", records.len(), args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// index

#[derive(Args)]
pub struct IndexArgs {
    /// Embedding database (.gemb); the tree is rebuilt on load.
    #[arg(long)]
    pub embeddings: PathBuf,
}

pub fn index(ctx: &Context, args: IndexArgs) -> Result<()> {
    let _ = ctx;
    require_artifact(&args.embeddings, "embed or bow-embed")?;
    let records = read_embeddings(&args.embeddings)?;
    let index = EmbeddingIndex::build(records)?;
    println!(
        "index over {}: {} records, dim {}, tree depth {}",
        args.embeddings.display(),
        index.len(),
        index.dim(),
        index.depth()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// bow-vocab

#[derive(Args)]
pub struct BowVocabArgs {
    #[arg(long)]
    pub mapset: PathBuf,
    /// Output vocabulary (.gvoc).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub features_per_image: Option<usize>,
}

pub fn bow_vocab(ctx: &Context, args: BowVocabArgs) -> Result<()> {
    let file = ctx.file_config()?;
    let mut cfg = file.vocab();
    override_opt(&mut cfg.vocab_size, args.vocab_size);
    override_opt(&mut cfg.features_per_image, args.features_per_image);
    override_opt(&mut cfg.seed, ctx.seed);

    let mapset = load_mapset(&args.mapset)?;
    let mut manifest = ManifestBuilder::new("bow-vocab");
    manifest
        .seed(cfg.seed)
        .config(&cfg)
        .input(&args.mapset.join("manifest.csv"))?;

    let vocab = build_vocabulary(&mapset, &cfg)?;
    write_vocabulary(&vocab, &args.out)?;
    manifest.output(&args.out);
    manifest.write(&manifest_path_for(&args.out))?;
    println!("vocabulary of {} words written to {}", vocab.len(), args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// bow-embed

#[derive(Args)]
pub struct BowEmbedArgs {
    /// Vocabulary file (.gvoc).
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub mapset: PathBuf,
    #[arg(long, default_value = "reference")]
    pub role: String,
    /// Features per image (the BoW representation budget n).
    #[arg(long, default_value_t = 100)]
    pub features_per_image: usize,
    /// Output histogram database (.gemb).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn bow_embed(ctx: &Context, args: BowEmbedArgs) -> Result<()> {
    let _ = ctx;
    require_artifact(&args.vocab, "bow-vocab")?;
    let mut manifest = ManifestBuilder::new("bow-embed");
    manifest
        .input(&args.vocab)?
        .input(&args.mapset.join("manifest.csv"))?;

    let vocab = read_vocabulary(&args.vocab)?;
    let mapset = load_mapset(&args.mapset)?;
    let detector = DetectorConfig::default();
    let images = select_images(&mapset, &args.role)?;
    let records = images
        .iter()
        .map(|img| {
            let feats = detect_and_describe(&img.pixels, args.features_per_image, &detector);
            let hist = bow_embed_features(&img.id, &feats, &vocab)?;
            EmbeddingRecord::new(hist.image_id, hist.weights)
        })
        .collect::<Result<Vec<_>>>()?;
    write_embeddings(&records, &args.out)?;
    manifest.output(&args.out);
    manifest.write(&manifest_path_for(&args.out))?;
    println!("embedded {} histograms into {}", records.len(), args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// retrieve

#[derive(Args)]
pub struct RetrieveArgs {
    /// Reference embedding database (.gemb).
    #[arg(long)]
    pub references: PathBuf,
    /// Query embedding database (.gemb).
    #[arg(long)]
    pub queries: PathBuf,
    /// Neighbors per query.
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    /// Output ranking CSV.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn retrieve(ctx: &Context, args: RetrieveArgs) -> Result<()> {
    let _ = ctx;
    require_artifact(&args.references, "embed or bow-embed")?;
    require_artifact(&args.queries, "embed or bow-embed")?;
    let mut manifest = ManifestBuilder::new("retrieve");
    manifest.input(&args.references)?.input(&args.queries)?;

    let references = read_embeddings(&args.references)?;
    let queries = read_embeddings(&args.queries)?;
    if args.k > references.len() {
        eprintln!(
            "warning: k={} exceeds the {} available references; returning the full ranking",
            args.k,
            references.len()
        );
    }
    let index = EmbeddingIndex::build(references)?;
    let results = queries
        .iter()
        .map(|q| index.query_topk(&q.image_id, &q.vector, args.k))
        .collect::<Result<Vec<_>>>()?;
    write_retrieval(&results, &args.out)?;
    manifest.output(&args.out);
    manifest.write(&manifest_path_for(&args.out))?;
    println!(
        "retrieved top-{} for {} queries into {}",
        args.k,
        results.len(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// eval

#[derive(Args)]
pub struct EvalArgs {
    /// Ranking CSV from `retrieve`.
    #[arg(long)]
    pub retrieval: PathBuf,
    #[arg(long)]
    pub mapset: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    /// Method label written into the report rows.
    #[arg(long, default_value = "dml")]
    pub method: String,
    /// Texture label; defaults to the map's canvas style.
    #[arg(long)]
    pub texture: Option<String>,
    /// Output report directory.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn eval(ctx: &Context, args: EvalArgs) -> Result<()> {
    let _ = ctx;
    require_artifact(&args.retrieval, "retrieve")?;
    let mut manifest = ManifestBuilder::new("eval");
    manifest
        .input(&args.retrieval)?
        .input(&args.mapset.join("manifest.csv"))?;

    let mapset = load_mapset(&args.mapset)?;
    let texture = args
        .texture
        .clone()
        .unwrap_or_else(|| mapset.canvas_meta.style.clone());
    let results = read_retrieval(&args.retrieval, args.k)?;
    let labels = enumerate_overlaps(&mapset, 0.0)?;
    let report = compute_recall_report(&results, &labels, args.k)?;

    let mut bundle = ReportBundle::default();
    bundle.add_recall_report(&texture, &args.method, &report);
    emit_report(&bundle, &args.out)?;
    manifest.output(&args.out.join("recall.csv"));
    manifest.write(&args.out.join("run_manifest.json"))?;
    for entry in &report.entries {
        println!(
            "R{:02}@{} = {:.4} over {} queries",
            (entry.min_overlap * 100.0) as u32,
            report.k,
            entry.recall,
            entry.included_queries
        );
    }
    println!("failures: {}", report.failure_count);
    Ok(())
}

// ---------------------------------------------------------------------------
// localize

#[derive(Args)]
pub struct LocalizeArgs {
    #[arg(long)]
    pub mapset: PathBuf,
    /// Ranking CSV; when omitted, all references are candidates.
    #[arg(long)]
    pub retrieval: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub inlier_px: Option<f64>,
    #[arg(long)]
    pub max_features: Option<usize>,
    /// Source label written into the report rows (defaults to none/topk).
    #[arg(long)]
    pub source: Option<String>,
    #[arg(long)]
    pub texture: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn localize(ctx: &Context, args: LocalizeArgs) -> Result<()> {
    let file = ctx.file_config()?;
    let mut cfg = file.campaign();
    override_opt(&mut cfg.k, args.k);
    override_opt(&mut cfg.ransac.iterations, args.iterations);
    override_opt(&mut cfg.ransac.inlier_px, args.inlier_px);
    override_opt(&mut cfg.max_features, args.max_features);
    override_opt(&mut cfg.ransac.seed, ctx.seed);

    let mapset = load_mapset(&args.mapset)?;
    let mut manifest = ManifestBuilder::new("localize");
    manifest
        .seed(cfg.ransac.seed)
        .config(&cfg)
        .input(&args.mapset.join("manifest.csv"))?;

    let (source, results) = match &args.retrieval {
        Some(path) => {
            require_artifact(path, "retrieve")?;
            manifest.input(path)?;
            (RetrievalSource::TopK, Some(read_retrieval(path, cfg.k)?))
        }
        None => (RetrievalSource::None, None),
    };
    let campaign = localization_campaign(&mapset, source, results.as_deref(), &cfg)?;

    let texture = args
        .texture
        .clone()
        .unwrap_or_else(|| mapset.canvas_meta.style.clone());
    let source_label = args.source.clone().unwrap_or_else(|| {
        match source {
            RetrievalSource::None => "none".to_string(),
            RetrievalSource::TopK => "topk".to_string(),
        }
    });
    let mut bundle = ReportBundle::default();
    bundle.add_campaign(&texture, &source_label, &campaign);
    emit_report(&bundle, &args.out)?;
    manifest.output(&args.out.join("localization.csv"));
    manifest.write(&args.out.join("run_manifest.json"))?;
    println!(
        "localization success rate {:.4} ({} queries, matching stage {:.2} s)",
        campaign.success_rate,
        campaign.per_query.len(),
        campaign.matching_seconds
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// report

#[derive(Args)]
pub struct ReportArgs {
    /// Report directories to merge.
    #[arg(long = "inputs", required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn report(ctx: &Context, args: ReportArgs) -> Result<()> {
    let _ = ctx;
    let mut manifest = ManifestBuilder::new("report");
    let mut merged = ReportBundle::default();
    for dir in &args.inputs {
        require_artifact(&dir.join("recall.csv"), "eval or localize")?;
        manifest.input(&dir.join("recall.csv"))?;
        let bundle = read_report(dir)?;
        merged.recall.extend(bundle.recall);
        merged.bands.extend(bundle.bands);
        merged.localization.extend(bundle.localization);
        merged.failures.extend(bundle.failures);
    }

    // Cross-texture averages per (method, threshold, k).
    let mut grouped: BTreeMap<(String, String, usize), Vec<f64>> = BTreeMap::new();
    for row in &merged.recall {
        grouped
            .entry((row.method.clone(), format!("{}", row.x_threshold), row.k))
            .or_default()
            .push(row.recall);
    }
    for ((method, x, k), vals) in grouped {
        merged.recall.push(RecallRow {
            texture: "all".to_string(),
            method,
            x_threshold: x.parse().unwrap_or(0.0),
            k,
            recall: vals.iter().sum::<f64>() / vals.len() as f64,
        });
    }
    emit_report(&merged, &args.out)?;
    manifest.output(&args.out.join("recall.csv"));
    manifest.write(&args.out.join("run_manifest.json"))?;
    println!("merged {} report directories into {}", args.inputs.len(), args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep

#[derive(Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub mapset: PathBuf,
    /// Comma-separated feature budgets, e.g. 25,50,100.
    #[arg(long, value_delimiter = ',')]
    pub n_values: Vec<usize>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    /// Output CSV (n,recall_r0).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn sweep(ctx: &Context, args: SweepArgs) -> Result<()> {
    let file = ctx.file_config()?;
    let mut cfg = file.vocab();
    override_opt(&mut cfg.vocab_size, args.vocab_size);
    override_opt(&mut cfg.seed, ctx.seed);

    let mapset = load_mapset(&args.mapset)?;
    let mut manifest = ManifestBuilder::new("sweep");
    manifest
        .seed(cfg.seed)
        .config(&cfg)
        .input(&args.mapset.join("manifest.csv"))?;

    let rows = sweep_features_per_image(&mapset, &args.n_values, &cfg, args.k)?;
    let mut text = String::from("n_features,recall_r0\n");
    for row in &rows {
        text.push_str(&format!("{},{}\n", row.n_features, row.recall_r0));
    }
    std::fs::write(&args.out, text).map_err(|e| Error::io(&args.out, e))?;
    manifest.output(&args.out);
    manifest.write(&manifest_path_for(&args.out))?;

    let best = rows
        .iter()
        .max_by(|a, b| a.recall_r0.total_cmp(&b.recall_r0))
        .expect("sweep returns at least one row");
    for row in &rows {
        println!("n={:4}  R0@{} = {:.4}", row.n_features, args.k, row.recall_r0);
    }
    println!("best n = {} (R0@{} = {:.4})", best.n_features, args.k, best.recall_r0);
    Ok(())
}


use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use artsavant::composer::{read_profiles, write_profiles, ComposerConfig};
use artsavant::corpus::{read_embedding_store, ArtistId, Corpus, EmbeddingStore, Split, SplitConfig};
use artsavant::deepmatch::{
    deep_match, fit, read_checkpoint, write_checkpoint, Classifier, TrainConfig, TrainingSet,
};
use artsavant::harness::{
    align_tag_sets, build_references, emit_report, ensure_split, mine_reference_profiles,
    read_report, render_markdown, tag_images, unprecedented_similarity, with_workers, Evaluator,
    PipelineConfig, Provenance, ReportDocument,
};
use artsavant::synthetic::{PlantedConfig, PlantedCorpus};
use artsavant::tagger::{read_tag_sets, write_tag_sets, AtomicTagSet, TaggerConfig, Vocabulary};
use artsavant::tagmatch::{attribute_matches, tag_match, ReferenceIndex, TagMatchConfig, TestPortfolio};

const EXIT_VALIDATION: u8 = 2;
const EXIT_DATA: u8 = 3;

/// Set-level artistic style attribution over precomputed embeddings.
#[derive(Parser)]
#[command(name = "artsavant", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assign atomic tags to every image from image and concept embeddings.
    Tag {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Concept embeddings, one row per vocabulary concept.
        #[arg(long)]
        concepts: PathBuf,
        #[command(flatten)]
        vocab: VocabArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Output tag sets (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Mine a tag-signature profile per artist from train-split tag sets.
    Compose {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Tag sets produced by `tag`.
        #[arg(long)]
        tags: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Output profiles (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank reference artists for a test portfolio of tag sets.
    Tagmatch {
        /// Reference profiles produced by `compose`.
        #[arg(long)]
        profiles: PathBuf,
        /// Tag sets of the test portfolio.
        #[arg(long)]
        tags: PathBuf,
        /// Reference tag sets, for listing the images behind each match.
        #[arg(long)]
        reference_tags: Option<PathBuf>,
        /// Artist whose matches are attributed to images (default: top-ranked).
        #[arg(long)]
        artist: Option<u32>,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Output file (JSON); standard output if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the classifier on the train split and write a checkpoint.
    Train {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Output checkpoint.
        #[arg(long)]
        out: PathBuf,
    },
    /// Majority-vote a set of embeddings with a trained classifier.
    Deepmatch {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Embeddings of the test set.
        #[arg(long)]
        embeddings: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Output file (JSON); standard output if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Held-out and generated-set evaluation; writes report.json and report.md.
    Evaluate {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        inputs: TagInputs,
        #[command(flatten)]
        vocab: VocabArgs,
        /// Use this classifier instead of training one.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Focus artist: the markdown covers only this artist and, if it has
        /// generated images, the unprecedented-similarity check runs for it.
        #[arg(long)]
        artist: Option<u32>,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        workers: WorkerArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Unprecedented-similarity check for one artist's generated sets.
    HoldoutSimilar {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        artist: u32,
        /// Full classifier used to find the most similar artist.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        workers: WorkerArgs,
        /// Output file (JSON); standard output if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-render report.md from a report.json.
    Report {
        /// A report.json written by `evaluate`.
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        artist: Option<u32>,
        /// Output markdown file; standard output if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic corpus with planted artist signatures.
    Synthesize {
        #[arg(long, default_value_t = 20)]
        artists: usize,
        #[arg(long, default_value_t = 60)]
        images_per_artist: usize,
        #[arg(long, default_value_t = 0)]
        generated_per_artist: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct CorpusArgs {
    /// Image embeddings ("ARTS" container), row-aligned with the manifest.
    #[arg(long)]
    embeddings: PathBuf,
    /// Manifest JSON.
    #[arg(long)]
    manifest: PathBuf,
}

impl CorpusArgs {
    fn load(&self) -> Result<Corpus> {
        Ok(Corpus::load(&self.manifest, &self.embeddings)?)
    }
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct TagInputs {
    /// Concept embeddings; images are tagged on the fly.
    #[arg(long)]
    concepts: Option<PathBuf>,
    /// Precomputed tag sets.
    #[arg(long)]
    tags: Option<PathBuf>,
}

#[derive(Args)]
struct VocabArgs {
    /// Vocabulary JSON (default: the bundled vocabulary).
    #[arg(long)]
    vocab: Option<PathBuf>,
}

impl VocabArgs {
    fn load(&self) -> Result<Vocabulary> {
        Ok(match &self.vocab {
            Some(p) => Vocabulary::load(p)?,
            None => Vocabulary::bundled(),
        })
    }
}

#[derive(Args)]
struct WorkerArgs {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct PipelineArgs {
    /// Seed for the train/test split and for training.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.5)]
    z_threshold: f64,
    #[arg(long, default_value_t = 3)]
    min_count: u32,
    /// Maximum common tags kept per image when composing signatures.
    #[arg(long, default_value_t = 25)]
    cap: usize,
    /// Matched tags averaged per artist in TagMatch.
    #[arg(long, default_value_t = 10)]
    k_matches: usize,
    #[arg(long, default_value_t = 512)]
    hidden_dim: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    #[arg(long, default_value_t = 20)]
    min_test_per_artist: usize,
    /// Minimum share of a set's images for a DeepMatch match.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

impl PipelineArgs {
    fn config(&self) -> Result<PipelineConfig> {
        let cfg = PipelineConfig {
            tagger: TaggerConfig { z_threshold: self.z_threshold, ..TaggerConfig::default() },
            composer: ComposerConfig { min_count: self.min_count, intersection_cap: self.cap },
            tagmatch: TagMatchConfig { matches_per_artist: self.k_matches },
            train: TrainConfig {
                hidden_dim: self.hidden_dim,
                learning_rate: self.learning_rate,
                momentum: self.momentum,
                epochs: self.epochs,
                batch_size: self.batch_size,
                seed: self.seed,
            },
            split: SplitConfig {
                test_fraction: self.test_fraction,
                min_test_per_artist: self.min_test_per_artist,
                seed: self.seed,
            },
            match_threshold: self.threshold,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_json(path: Option<&Path>, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn load_classifier(path: Option<&Path>) -> Result<Option<Classifier>> {
    Ok(match path {
        Some(p) => Some(read_checkpoint(p)?.0),
        None => None,
    })
}

fn corpus_tags(corpus: &Corpus, inputs: &TagInputs, vocab: &Vocabulary, cfg: &PipelineConfig) -> Result<Vec<AtomicTagSet>> {
    if let Some(path) = &inputs.tags {
        return Ok(align_tag_sets(corpus, read_tag_sets(path)?)?);
    }
    let Some(path) = &inputs.concepts else {
        bail!(artsavant::Error::Validation("either --concepts or --tags is required".into()));
    };
    let concepts: EmbeddingStore = read_embedding_store(path)?;
    Ok(tag_images(corpus, &concepts, vocab, &cfg.tagger)?)
}

fn artist_arg(corpus: &Corpus, id: u32) -> Result<ArtistId> {
    let id = ArtistId(id);
    if corpus.artist_name(id).is_none() {
        bail!(artsavant::Error::Validation(format!("unknown artist {id}")));
    }
    Ok(id)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Tag { corpus, concepts, vocab, pipeline, out } => {
            let cfg = pipeline.config()?;
            let corpus = corpus.load()?;
            let vocab = vocab.load()?;
            let concepts = read_embedding_store(&concepts)?;
            let tags = tag_images(&corpus, &concepts, &vocab, &cfg.tagger)?;
            log::info!(
                "tagged {} images, {:.2} tags per image",
                tags.len(),
                artsavant::tagger::mean_tags_per_image(&tags)
            );
            write_tag_sets(&tags, &out)?;
        }
        Command::Compose { corpus, tags, pipeline, out } => {
            let cfg = pipeline.config()?;
            let corpus = ensure_split(&corpus.load()?, &cfg.split)?;
            let tags = align_tag_sets(&corpus, read_tag_sets(&tags)?)?;
            let profiles = mine_reference_profiles(&corpus, &tags, &cfg.composer)?;
            write_profiles(&profiles, &out)?;
        }
        Command::Tagmatch { profiles, tags, reference_tags, artist, pipeline, out } => {
            let cfg = pipeline.config()?;
            let index = ReferenceIndex::build(&read_profiles(&profiles)?)?;
            let test_tags = read_tag_sets(&tags)?;
            let portfolio = TestPortfolio::mine(test_tags, &cfg.composer)?;
            let result = tag_match(&portfolio, &index, &cfg.tagmatch)?;
            let focus = artist.map(ArtistId).or_else(|| result.top().map(|r| r.artist_id));
            let attributions = match (focus, reference_tags) {
                (Some(a), Some(path)) => {
                    attribute_matches(&result, a, &portfolio.tag_sets, &read_tag_sets(&path)?)
                }
                (Some(a), None) => attribute_matches(&result, a, &portfolio.tag_sets, &[]),
                (None, _) => Vec::new(),
            };
            write_json(
                out.as_deref(),
                &json!({ "result": result, "attributed_artist": focus, "attributions": attributions }),
            )?;
        }
        Command::Train { corpus, pipeline, out } => {
            let cfg = pipeline.config()?;
            let corpus = ensure_split(&corpus.load()?, &cfg.split)?;
            let data = TrainingSet::from_corpus(&corpus, Split::Train, &[])?;
            let (classifier, log) = fit(&data, &cfg.train)?;
            log::info!("loss {:.4} -> {:?}", log.initial_loss, log.epoch_losses);
            write_checkpoint(&classifier, &cfg.train, &out)?;
        }
        Command::Deepmatch { checkpoint, embeddings, pipeline, out } => {
            let cfg = pipeline.config()?;
            let (classifier, _) = read_checkpoint(&checkpoint)?;
            let store = read_embedding_store(&embeddings)?;
            let decision = deep_match(&classifier, &store, cfg.match_threshold)?;
            write_json(out.as_deref(), &decision)?;
        }
        Command::Evaluate { corpus, inputs, vocab, checkpoint, artist, pipeline, workers, out } => {
            let cfg = pipeline.config()?;
            let vocab = vocab.load()?;
            let raw = corpus.load()?;
            let classifier = load_classifier(checkpoint.as_deref())?;
            let doc = with_workers(workers.workers, || -> Result<ReportDocument> {
                let corpus = ensure_split(&raw, &cfg.split)?;
                let focus = artist.map(|a| artist_arg(&corpus, a)).transpose()?;
                let tags = corpus_tags(&corpus, &inputs, &vocab, &cfg)?;
                let refs = build_references(&corpus, &tags, &cfg, classifier)?;
                let eval = Evaluator::new(&corpus, &tags, &refs, &vocab, &cfg)?;
                let holdout = eval.evaluate_holdout()?;
                let generated = eval.evaluate_generated()?;
                let verdicts = match focus {
                    Some(a) if !corpus.generated_sets(a).is_empty() => {
                        unprecedented_similarity(&corpus, &refs.classifier, a, &cfg)?
                    }
                    _ => Vec::new(),
                };
                let commonality = eval.commonality()?;
                let provenance = Provenance::new(&corpus, &tags, &vocab, &refs, &cfg)?;
                Ok(ReportDocument::new(provenance, holdout, generated, verdicts, commonality))
            })??;
            emit_report(&doc, &out, artist.map(ArtistId))?;
            let s = &doc.holdout.summary;
            eprintln!(
                "held-out: match rate {:.1}%, image accuracy {:.1}%, TagMatch top-1 {:.1}%",
                s.match_rate, s.image_accuracy, s.tagmatch.top1
            );
        }
        Command::HoldoutSimilar { corpus, artist, checkpoint, pipeline, workers, out } => {
            let cfg = pipeline.config()?;
            let raw = corpus.load()?;
            let classifier = load_classifier(checkpoint.as_deref())?;
            let verdicts = with_workers(workers.workers, || -> Result<_> {
                let corpus = ensure_split(&raw, &cfg.split)?;
                let a = artist_arg(&corpus, artist)?;
                let full = match classifier {
                    Some(c) => c,
                    None => fit(&TrainingSet::from_corpus(&corpus, Split::Train, &[])?, &cfg.train)?.0,
                };
                Ok(unprecedented_similarity(&corpus, &full, a, &cfg)?)
            })??;
            write_json(out.as_deref(), &verdicts)?;
        }
        Command::Report { report, artist, out } => {
            let doc = read_report(&report)?;
            let md = render_markdown(&doc, artist.map(ArtistId))?;
            match out {
                Some(p) => fs::write(&p, md).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{md}"),
            }
        }
        Command::Synthesize { artists, images_per_artist, generated_per_artist, seed, out } => {
            let cfg = PlantedConfig {
                artists,
                images_per_artist,
                generated_per_artist,
                seed,
                dim: PlantedConfig::default().dim.max(artists),
                ..PlantedConfig::default()
            };
            PlantedCorpus::generate(&cfg)?.write(&out)?;
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<artsavant::Error>() {
        Some(e) if e.is_data_error() => EXIT_DATA,
        Some(_) => EXIT_VALIDATION,
        None if err.downcast_ref::<std::io::Error>().is_some() => EXIT_DATA,
        None => EXIT_VALIDATION,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

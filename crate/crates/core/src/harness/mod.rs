//! Evaluation protocols and report generation.
//!
//! Everything here is built from three ingredients: a split corpus, one
//! atomic tag set per corpus row, and [`References`] (train-split tag
//! profiles plus a classifier). Held-out and generated evaluations share
//! [`Evaluator::evaluate_set`], so identical image sets give identical rows.

mod commonality;
mod report;
mod unprecedented;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use commonality::{tag_commonality_distribution, CommonalityBin, CommonalityDistribution};
pub use report::{
    emit_report, read_report, render_markdown, write_report_json, Provenance, ReportDocument,
    REPORT_FORMAT,
};
pub use unprecedented::{
    most_similar_artist, unprecedented_similarity, unprecedented_verdict, SetFlag,
    UnprecedentedVerdict,
};

use crate::composer::{mine_profile, ArtistTagProfile, ComposerConfig, TagSignature};
use crate::corpus::{cosine_similarities, split_corpus, ArtistId, Corpus, EmbeddingStore, Split, SplitConfig};
use crate::deepmatch::{deep_match, fit, Classifier, TrainConfig, TrainLog, TrainingSet, DEFAULT_MATCH_THRESHOLD};
use crate::error::{Error, Result};
use crate::tagger::{tag_corpus, AtomicTagSet, TaggerConfig, Vocabulary};
use crate::tagmatch::{attribute, tag_match, topk_hit, ReferenceIndex, TagMatchConfig, TestPortfolio};

/// Every tunable of the end-to-end pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub tagger: TaggerConfig,
    pub composer: ComposerConfig,
    pub tagmatch: TagMatchConfig,
    pub train: TrainConfig,
    pub split: SplitConfig,
    pub match_threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            tagger: TaggerConfig::default(),
            composer: ComposerConfig::default(),
            tagmatch: TagMatchConfig::default(),
            train: TrainConfig::default(),
            split: SplitConfig::default(),
            match_threshold: DEFAULT_MATCH_THRESHOLD,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.tagger.validate()?;
        self.composer.validate()?;
        self.tagmatch.validate()?;
        self.train.validate()?;
        self.split.validate()?;
        if !(self.match_threshold > 0.0 && self.match_threshold <= 1.0) {
            return Err(Error::Validation(format!(
                "match threshold must lie in (0, 1], got {}",
                self.match_threshold
            )));
        }
        Ok(())
    }
}

/// Uses the corpus's existing train/test assignment when it has one and
/// splits the real images otherwise.
pub fn ensure_split(corpus: &Corpus, cfg: &SplitConfig) -> Result<Corpus> {
    let has_split = corpus
        .images()
        .iter()
        .any(|img| img.source.is_real() && img.split == Split::Train);
    if has_split {
        Ok(corpus.clone())
    } else {
        split_corpus(corpus, cfg)
    }
}

/// Tags every corpus image against a concept store with one row per
/// vocabulary concept. The result is row-aligned with the corpus.
pub fn tag_images(
    corpus: &Corpus,
    concepts: &EmbeddingStore,
    vocab: &Vocabulary,
    cfg: &TaggerConfig,
) -> Result<Vec<AtomicTagSet>> {
    if concepts.n() != vocab.concept_count() {
        return Err(Error::Shape {
            what: "concept rows vs vocabulary concepts",
            expected: vocab.concept_count(),
            found: concepts.n(),
        });
    }
    let sims = cosine_similarities(corpus.embeddings(), concepts)?;
    tag_corpus(&sims, &corpus.image_ids(), vocab, cfg)
}

/// Reorders externally supplied tag sets to corpus row order. Every corpus
/// image must have exactly one tag set; extra tag sets are an error.
pub fn align_tag_sets(corpus: &Corpus, tag_sets: Vec<AtomicTagSet>) -> Result<Vec<AtomicTagSet>> {
    let mut by_id: HashMap<String, AtomicTagSet> = HashMap::with_capacity(tag_sets.len());
    for t in tag_sets {
        let id = t.image_id.clone();
        if by_id.insert(id.clone(), t).is_some() {
            return Err(Error::Data(format!("duplicate tag set for image {id:?}")));
        }
    }
    let aligned = corpus
        .images()
        .iter()
        .map(|img| {
            by_id
                .remove(&img.image_id)
                .ok_or_else(|| Error::Data(format!("no tag set for image {:?}", img.image_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(extra) = by_id.keys().min() {
        return Err(Error::Data(format!("tag set for unknown image {extra:?}")));
    }
    Ok(aligned)
}

fn select_tags(tag_sets: &[AtomicTagSet], indices: &[usize]) -> Vec<AtomicTagSet> {
    indices.iter().map(|&i| tag_sets[i].clone()).collect()
}

fn check_aligned(corpus: &Corpus, tag_sets: &[AtomicTagSet]) -> Result<()> {
    if tag_sets.len() != corpus.images().len() {
        return Err(Error::Shape {
            what: "tag sets vs corpus images",
            expected: corpus.images().len(),
            found: tag_sets.len(),
        });
    }
    Ok(())
}

/// One profile per artist, mined from train-split tag sets.
pub fn mine_reference_profiles(
    corpus: &Corpus,
    tag_sets: &[AtomicTagSet],
    cfg: &ComposerConfig,
) -> Result<Vec<ArtistTagProfile>> {
    check_aligned(corpus, tag_sets)?;
    let artists: Vec<ArtistId> = corpus.artist_ids().collect();
    artists
        .par_iter()
        .map(|&a| {
            let rows = corpus.indices(a, Split::Train);
            if rows.is_empty() {
                return Err(Error::Validation(format!(
                    "artist {a} ({}) has no train images",
                    corpus.artist_name(a).unwrap_or("?")
                )));
            }
            mine_profile(Some(a), &select_tags(tag_sets, &rows), cfg)
        })
        .collect()
}

/// Reference material both matchers consult.
#[derive(Debug, Clone)]
pub struct References {
    pub profiles: Vec<ArtistTagProfile>,
    pub index: ReferenceIndex,
    pub classifier: Classifier,
    /// Present when the classifier was trained here rather than loaded.
    pub train_log: Option<TrainLog>,
}

/// Mines profiles and, unless `classifier` is supplied, trains one on the
/// train split.
pub fn build_references(
    corpus: &Corpus,
    tag_sets: &[AtomicTagSet],
    cfg: &PipelineConfig,
    classifier: Option<Classifier>,
) -> Result<References> {
    cfg.validate()?;
    let profiles = mine_reference_profiles(corpus, tag_sets, &cfg.composer)?;
    let index = ReferenceIndex::build(&profiles)?;
    let (classifier, train_log) = match classifier {
        Some(c) => {
            let expected: Vec<ArtistId> = corpus.artist_ids().collect();
            if c.classes() != expected.as_slice() {
                return Err(Error::Validation(
                    "classifier classes do not match the corpus artists".into(),
                ));
            }
            (c, None)
        }
        None => {
            let data = TrainingSet::from_corpus(corpus, Split::Train, &[])?;
            let (c, log) = fit(&data, &cfg.train)?;
            (c, Some(log))
        }
    };
    Ok(References {
        profiles,
        index,
        classifier,
        train_log,
    })
}

/// Set-level DeepMatch outcome for one labelled set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepMatchOutcome {
    pub predicted_artist: Option<ArtistId>,
    pub modal_artist: ArtistId,
    pub modal_confidence: f64,
    /// Share of images predicted to the label artist.
    pub confidence: f64,
    pub matched: bool,
    pub correct_images: usize,
}

/// One kept signature of the label artist with the images exhibiting it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub tags: TagSignature,
    pub labels: Vec<String>,
    pub uniqueness: usize,
    pub freq_test: f64,
    pub freq_ref: f64,
    pub score: f64,
    pub test_images: Vec<String>,
    pub reference_images: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagMatchOutcome {
    pub predicted_artist: Option<ArtistId>,
    /// 1-based rank of the label among finite scores.
    pub label_rank: Option<usize>,
    pub label_score: Option<f64>,
    pub top1: bool,
    pub top5: bool,
    pub top10: bool,
    pub matched_tag_count: usize,
    pub evidence: Vec<Evidence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtistEvaluation {
    pub artist_id: ArtistId,
    pub artist_name: String,
    pub images: usize,
    pub deepmatch: DeepMatchOutcome,
    pub tagmatch: TagMatchOutcome,
}

/// Five-number summary using type-7 (linear interpolation) quantiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Type-7 quantile of ascending `sorted` at probability `p`.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Quartiles {
            min: v[0],
            q1: quantile_type7(&v, 0.25),
            median: quantile_type7(&v, 0.5),
            q3: quantile_type7(&v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

/// Top-k accuracy in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopK {
    pub top1: f64,
    pub top5: f64,
    pub top10: f64,
}

/// Aggregates over per-artist rows. Rates are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub artists: usize,
    pub matched: usize,
    pub abstained: usize,
    pub match_rate: f64,
    pub image_accuracy: f64,
    pub mean_confidence: f64,
    pub confidence_quartiles: Option<Quartiles>,
    pub tagmatch: TopK,
}

fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

impl Summary {
    pub fn from_rows(rows: &[ArtistEvaluation]) -> Self {
        let n = rows.len();
        let matched = rows.iter().filter(|r| r.deepmatch.matched).count();
        let abstained = rows.iter().filter(|r| r.deepmatch.predicted_artist.is_none()).count();
        let images: usize = rows.iter().map(|r| r.images).sum();
        let correct: usize = rows.iter().map(|r| r.deepmatch.correct_images).sum();
        let confidences: Vec<f64> = rows.iter().map(|r| r.deepmatch.confidence).collect();
        let mean_confidence = if n == 0 {
            0.0
        } else {
            confidences.iter().sum::<f64>() / n as f64
        };
        let count = |f: fn(&TagMatchOutcome) -> bool| rows.iter().filter(|r| f(&r.tagmatch)).count();
        Summary {
            artists: n,
            matched,
            abstained,
            match_rate: percent(matched, n),
            image_accuracy: percent(correct, images),
            mean_confidence,
            confidence_quartiles: Quartiles::of(&confidences),
            tagmatch: TopK {
                top1: percent(count(|t| t.top1), n),
                top5: percent(count(|t| t.top5), n),
                top10: percent(count(|t| t.top10), n),
            },
        }
    }
}

/// Artists evaluated versus present in the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    pub evaluated: usize,
    pub total_artists: usize,
    pub skipped: Vec<ArtistId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// `"holdout"` or `"generated"`.
    pub protocol: String,
    /// Generating model for generated-set reports.
    pub model: Option<String>,
    pub coverage: Coverage,
    pub summary: Summary,
    pub artists: Vec<ArtistEvaluation>,
}

impl EvaluationReport {
    fn new(protocol: &str, model: Option<String>, total: usize, skipped: Vec<ArtistId>, artists: Vec<ArtistEvaluation>) -> Self {
        EvaluationReport {
            protocol: protocol.to_string(),
            model,
            coverage: Coverage {
                evaluated: artists.len(),
                total_artists: total,
                skipped,
            },
            summary: Summary::from_rows(&artists),
            artists,
        }
    }

    pub fn row(&self, artist: ArtistId) -> Option<&ArtistEvaluation> {
        self.artists.iter().find(|r| r.artist_id == artist)
    }
}

/// Runs both matchers on labelled image sets of one corpus.
pub struct Evaluator<'a> {
    corpus: &'a Corpus,
    tag_sets: &'a [AtomicTagSet],
    refs: &'a References,
    vocab: &'a Vocabulary,
    cfg: &'a PipelineConfig,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        corpus: &'a Corpus,
        tag_sets: &'a [AtomicTagSet],
        refs: &'a References,
        vocab: &'a Vocabulary,
        cfg: &'a PipelineConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        check_aligned(corpus, tag_sets)?;
        Ok(Evaluator {
            corpus,
            tag_sets,
            refs,
            vocab,
            cfg,
        })
    }

    pub fn corpus(&self) -> &Corpus {
        self.corpus
    }

    pub fn references(&self) -> &References {
        self.refs
    }

    /// DeepMatch and TagMatch on the corpus rows `indices`, scored against
    /// `label`.
    pub fn evaluate_set(&self, label: ArtistId, indices: &[usize]) -> Result<ArtistEvaluation> {
        if indices.is_empty() {
            return Err(Error::Validation(format!("artist {label} has an empty evaluation set")));
        }
        let store = self.corpus.embeddings().select(indices);
        let decision = deep_match(&self.refs.classifier, &store, self.cfg.match_threshold)?;
        let correct_images = decision.predictions.iter().filter(|&&p| p == label).count();
        let deepmatch = DeepMatchOutcome {
            predicted_artist: decision.predicted_artist,
            modal_artist: decision.modal_artist,
            modal_confidence: decision.confidence,
            confidence: decision.fraction_for(label),
            matched: decision.is_match_for(label),
            correct_images,
        };

        let test_tags = select_tags(self.tag_sets, indices);
        let portfolio = TestPortfolio::mine(test_tags, &self.cfg.composer)?;
        let result = tag_match(&portfolio, &self.refs.index, &self.cfg.tagmatch)?;
        let reference_rows = self.corpus.indices(label, Split::Train);
        let reference_tags = select_tags(self.tag_sets, &reference_rows);
        let entry = result.entry(label);
        let evidence = entry
            .map(|e| {
                e.kept
                    .iter()
                    .map(|m| Evidence {
                        tags: m.tags.clone(),
                        labels: m.tags.tags().iter().map(|&t| self.vocab.label(t)).collect(),
                        uniqueness: m.uniqueness,
                        freq_test: m.freq_test,
                        freq_ref: m.freq_ref,
                        score: m.score,
                        test_images: attribute(&m.tags, &portfolio.tag_sets),
                        reference_images: attribute(&m.tags, &reference_tags),
                    })
                    .collect()
            })
            .unwrap_or_default();
        let tagmatch = TagMatchOutcome {
            predicted_artist: result.top().map(|r| r.artist_id),
            label_rank: result.rank_of(label),
            label_score: entry.and_then(|e| e.score),
            top1: topk_hit(&result, label, 1),
            top5: topk_hit(&result, label, 5),
            top10: topk_hit(&result, label, 10),
            matched_tag_count: result.matched_tag_count,
            evidence,
        };
        Ok(ArtistEvaluation {
            artist_id: label,
            artist_name: self.corpus.artist_name(label).unwrap_or_default().to_string(),
            images: indices.len(),
            deepmatch,
            tagmatch,
        })
    }

    fn evaluate_many(&self, sets: &[(ArtistId, Vec<usize>)]) -> Result<Vec<ArtistEvaluation>> {
        sets.par_iter()
            .map(|(a, rows)| self.evaluate_set(*a, rows))
            .collect()
    }

    /// Every artist's held-out test split.
    pub fn evaluate_holdout(&self) -> Result<EvaluationReport> {
        let sets = self
            .corpus
            .artist_ids()
            .map(|a| {
                let rows = self.corpus.indices(a, Split::Test);
                if rows.is_empty() {
                    Err(Error::Validation(format!(
                        "artist {a} ({}) has no test images",
                        self.corpus.artist_name(a).unwrap_or("?")
                    )))
                } else {
                    Ok((a, rows))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let rows = self.evaluate_many(&sets)?;
        Ok(EvaluationReport::new("holdout", None, self.corpus.artist_count(), Vec::new(), rows))
    }

    /// One report per generating model. Artists without images from a model
    /// are skipped for that model and listed in its coverage.
    pub fn evaluate_generated(&self) -> Result<Vec<EvaluationReport>> {
        self.corpus
            .generated_models()
            .into_iter()
            .map(|model| {
                let mut sets = Vec::new();
                let mut skipped = Vec::new();
                for a in self.corpus.artist_ids() {
                    match self.corpus.generated_sets(a).remove(&model) {
                        Some(rows) => sets.push((a, rows)),
                        None => skipped.push(a),
                    }
                }
                if !skipped.is_empty() {
                    log::warn!(
                        "model {model:?}: {} of {} artists have no generated images and are skipped",
                        skipped.len(),
                        self.corpus.artist_count()
                    );
                }
                let rows = self.evaluate_many(&sets)?;
                Ok(EvaluationReport::new(
                    "generated",
                    Some(model),
                    self.corpus.artist_count(),
                    skipped,
                    rows,
                ))
            })
            .collect()
    }
}

/// Hex SHA-256 of arbitrary bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Runs `f` on a dedicated pool of `workers` threads (all cores if `None`).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            return Err(Error::Validation("worker count must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Validation(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_quantiles_match_hand_values() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_type7(&v, 0.5), 2.5);
        assert_eq!(quantile_type7(&v, 0.25), 1.75);
        assert_eq!(quantile_type7(&v, 0.75), 3.25);
        assert_eq!(quantile_type7(&[7.0], 0.3), 7.0);
        let q = Quartiles::of(&[0.9, 0.1, 0.5]).unwrap();
        assert_eq!((q.min, q.median, q.max), (0.1, 0.5, 0.9));
        assert!((q.q1 - 0.3).abs() < 1e-12);
        assert!(Quartiles::of(&[]).is_none());
    }

    #[test]
    fn empty_summary_is_all_zero() {
        let s = Summary::from_rows(&[]);
        assert_eq!(s.match_rate, 0.0);
        assert_eq!(s.tagmatch.top10, 0.0);
        assert!(s.confidence_quartiles.is_none());
    }

    #[test]
    fn pipeline_config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        let bad = PipelineConfig { match_threshold: 0.0, ..PipelineConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn worker_pool_rejects_zero() {
        assert!(with_workers(Some(0), || ()).is_err());
        assert_eq!(with_workers(Some(2), rayon::current_num_threads).unwrap(), 2);
    }
}

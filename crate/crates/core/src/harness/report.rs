use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::commonality::{tag_commonality_distribution, CommonalityBin, CommonalityDistribution};
use super::unprecedented::UnprecedentedVerdict;
use super::{ArtistEvaluation, EvaluationReport, Evaluator, PipelineConfig};
use crate::corpus::{ArtistId, Split};
use crate::deepmatch::TrainLog;
use crate::error::{Error, Result};
use crate::tagmatch::TestPortfolio;

pub const REPORT_FORMAT: &str = "artsavant-report/1";

/// Inputs and settings that produced a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub corpus_digest: String,
    pub tags_digest: String,
    pub vocabulary_digest: String,
    pub classifier_digest: String,
    pub config: PipelineConfig,
    pub train_log: Option<TrainLog>,
}

impl Provenance {
    pub fn new(
        corpus: &crate::corpus::Corpus,
        tag_sets: &[crate::tagger::AtomicTagSet],
        vocab: &crate::tagger::Vocabulary,
        refs: &super::References,
        config: &PipelineConfig,
    ) -> Result<Self> {
        let tags = serde_json::to_vec(tag_sets)?;
        let checkpoint = crate::deepmatch::encode_checkpoint(&refs.classifier, &config.train)?;
        Ok(Provenance {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            corpus_digest: corpus.digest(),
            tags_digest: super::sha256_hex(&tags),
            vocabulary_digest: super::sha256_hex(vocab.to_json().as_bytes()),
            classifier_digest: super::sha256_hex(&checkpoint),
            config: *config,
            train_log: refs.train_log.clone(),
        })
    }
}

/// Averages over generating models, each model weighted equally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedOverview {
    pub models: usize,
    pub mean_match_rate: f64,
    pub mean_confidence: f64,
    pub mean_tagmatch_top1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommonalitySummary {
    /// `None` for held-out real works.
    pub model: Option<String>,
    pub signatures: usize,
    pub mean: Option<f64>,
    pub histogram: Vec<CommonalityBin>,
}

impl CommonalitySummary {
    fn new(model: Option<String>, d: CommonalityDistribution) -> Self {
        CommonalitySummary {
            model,
            signatures: d.samples.len(),
            mean: d.mean(),
            histogram: d.histogram,
        }
    }
}

/// Everything `report.json` contains; `report.md` is rendered from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub format: String,
    pub provenance: Provenance,
    pub holdout: EvaluationReport,
    pub generated: Vec<EvaluationReport>,
    pub generated_overview: Option<GeneratedOverview>,
    pub unprecedented: Vec<UnprecedentedVerdict>,
    pub commonality: Vec<CommonalitySummary>,
}

impl ReportDocument {
    pub fn new(
        provenance: Provenance,
        holdout: EvaluationReport,
        generated: Vec<EvaluationReport>,
        unprecedented: Vec<UnprecedentedVerdict>,
        commonality: Vec<CommonalitySummary>,
    ) -> Self {
        let generated_overview = (!generated.is_empty()).then(|| {
            let m = generated.len() as f64;
            let mean = |f: fn(&EvaluationReport) -> f64| generated.iter().map(f).sum::<f64>() / m;
            GeneratedOverview {
                models: generated.len(),
                mean_match_rate: mean(|r| r.summary.match_rate),
                mean_confidence: mean(|r| r.summary.mean_confidence),
                mean_tagmatch_top1: mean(|r| r.summary.tagmatch.top1),
            }
        });
        ReportDocument {
            format: REPORT_FORMAT.to_string(),
            provenance,
            holdout,
            generated,
            generated_overview,
            unprecedented,
            commonality,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

impl Evaluator<'_> {
    /// Tag commonality of held-out real portfolios (excluding the artist
    /// itself) and of each model's generated sets.
    pub fn commonality(&self) -> Result<Vec<CommonalitySummary>> {
        let portfolio = |rows: &[usize]| {
            TestPortfolio::mine(super::select_tags(self.tag_sets, rows), &self.cfg.composer)
        };
        let artists: Vec<ArtistId> = self.corpus.artist_ids().collect();
        let real = artists
            .par_iter()
            .map(|&a| {
                let rows = self.corpus.indices(a, Split::Test);
                if rows.is_empty() {
                    return Ok(CommonalityDistribution::from_samples(Vec::new()));
                }
                let p = portfolio(&rows)?;
                Ok(tag_commonality_distribution(&self.refs.index, &p.profile, Some(a)))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = vec![CommonalitySummary::new(None, CommonalityDistribution::merge(real))];
        for model in self.corpus.generated_models() {
            let parts = artists
                .par_iter()
                .filter_map(|&a| self.corpus.generated_sets(a).remove(&model))
                .map(|rows| {
                    let p = portfolio(&rows)?;
                    Ok(tag_commonality_distribution(&self.refs.index, &p.profile, None))
                })
                .collect::<Result<Vec<_>>>()?;
            out.push(CommonalitySummary::new(Some(model), CommonalityDistribution::merge(parts)));
        }
        Ok(out)
    }
}

pub fn write_report_json(doc: &ReportDocument, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, doc.to_json()).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<ReportDocument> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: ReportDocument = serde_json::from_str(&text)?;
    if doc.format != REPORT_FORMAT {
        return Err(Error::Format(format!("unsupported report format {:?}", doc.format)));
    }
    Ok(doc)
}

/// Writes `report.json` and `report.md` into `out_dir`. The markdown covers
/// every artist, or only `focus` when given.
pub fn emit_report(doc: &ReportDocument, out_dir: impl AsRef<Path>, focus: Option<ArtistId>) -> Result<()> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_report_json(doc, dir.join("report.json"))?;
    let md = render_markdown(doc, focus)?;
    let md_path = dir.join("report.md");
    fs::write(&md_path, md).map_err(|e| Error::io(&md_path, e))
}

fn pct(x: f64) -> String {
    format!("{x:.1}%")
}

fn share(x: f64) -> String {
    pct(100.0 * x)
}

fn artist_label(doc: &ReportDocument, id: ArtistId) -> String {
    match doc.holdout.row(id) {
        Some(r) => format!("{} (#{})", r.artist_name, id),
        None => format!("#{id}"),
    }
}

/// Human-readable view of a report.
pub fn render_markdown(doc: &ReportDocument, focus: Option<ArtistId>) -> Result<String> {
    let rows: Vec<&ArtistEvaluation> = match focus {
        Some(a) => vec![doc
            .holdout
            .row(a)
            .ok_or_else(|| Error::Validation(format!("artist {a} is not in the report")))?],
        None => doc.holdout.artists.iter().collect(),
    };
    let mut md = String::new();
    let w = &mut md;
    writeln!(w, "# Style attribution report\n").unwrap();
    writeln!(w, "- corpus digest: `{}`", doc.provenance.corpus_digest).unwrap();
    writeln!(w, "- classifier digest: `{}`", doc.provenance.classifier_digest).unwrap();
    writeln!(w, "- training seed: {}, split seed: {}", doc.provenance.config.train.seed, doc.provenance.config.split.seed).unwrap();
    writeln!(w).unwrap();
    writeln!(w, "## Overview\n").unwrap();
    writeln!(w, "| protocol | artists | match rate | image accuracy | mean confidence | TagMatch top-1 | top-5 | top-10 |").unwrap();
    writeln!(w, "|---|---|---|---|---|---|---|---|").unwrap();
    for r in std::iter::once(&doc.holdout).chain(&doc.generated) {
        let name = match &r.model {
            Some(m) => format!("{} ({m})", r.protocol),
            None => r.protocol.clone(),
        };
        let s = &r.summary;
        writeln!(
            w,
            "| {name} | {}/{} | {} | {} | {} | {} | {} | {} |",
            r.coverage.evaluated,
            r.coverage.total_artists,
            pct(s.match_rate),
            pct(s.image_accuracy),
            share(s.mean_confidence),
            pct(s.tagmatch.top1),
            pct(s.tagmatch.top5),
            pct(s.tagmatch.top10)
        )
        .unwrap();
    }
    writeln!(w).unwrap();

    for row in rows {
        render_artist(w, doc, row);
    }
    Ok(md)
}

fn render_artist(w: &mut String, doc: &ReportDocument, row: &ArtistEvaluation) {
    let id = row.artist_id;
    writeln!(w, "## {}\n", artist_label(doc, id)).unwrap();
    writeln!(w, "### Style recognizability on held-out works\n").unwrap();
    let dm = &row.deepmatch;
    writeln!(
        w,
        "DeepMatch attributes {} of {} held-out works to this artist ({}).",
        dm.correct_images,
        row.images,
        share(dm.confidence)
    )
    .unwrap();
    match row.tagmatch.label_rank {
        Some(rank) => writeln!(w, "TagMatch ranks this artist #{rank}.").unwrap(),
        None => writeln!(w, "TagMatch does not rank this artist.").unwrap(),
    }
    writeln!(w).unwrap();
    if !dm.matched {
        let why = match dm.predicted_artist {
            None => "the held-out works are not attributed to any single artist".to_string(),
            Some(other) => format!("the held-out works are attributed to {}", artist_label(doc, other)),
        };
        writeln!(w, "**No unique style detected**: {why}, so style copying cannot be assessed.\n").unwrap();
        return;
    }
    writeln!(w, "The style is recognizable.\n").unwrap();

    writeln!(w, "### Generated images\n").unwrap();
    let generated: Vec<(&str, &ArtistEvaluation)> = doc
        .generated
        .iter()
        .filter_map(|r| Some((r.model.as_deref()?, r.row(id)?)))
        .collect();
    if generated.is_empty() {
        writeln!(w, "No generated images were evaluated for this artist.\n").unwrap();
    }
    for (model, g) in &generated {
        let verdict = if g.deepmatch.matched { "match" } else { "no match" };
        writeln!(
            w,
            "- {model}: {verdict}, {} of {} images attributed to this artist ({}); TagMatch rank {}",
            g.deepmatch.correct_images,
            g.images,
            share(g.deepmatch.confidence),
            g.tagmatch.label_rank.map_or("none".to_string(), |r| format!("#{r}"))
        )
        .unwrap();
        for v in doc.unprecedented.iter().filter(|v| v.artist_id == id && v.model == *model) {
            writeln!(
                w,
                "  - most similar artist {}: works {} ({}); similarity is {}",
                artist_label(doc, v.most_similar_artist),
                if v.most_similar_works.flagged { "flagged" } else { "not flagged" },
                share(v.most_similar_works.confidence),
                if v.unprecedented { "unprecedented" } else { "not unprecedented" }
            )
            .unwrap();
        }
    }
    if !generated.is_empty() {
        writeln!(w).unwrap();
    }

    writeln!(w, "### TagMatch evidence\n").unwrap();
    let mut sources: Vec<(String, &ArtistEvaluation)> =
        generated.iter().map(|(m, g)| (format!("generated by {m}"), *g)).collect();
    if sources.is_empty() {
        sources.push(("held-out works".to_string(), row));
    }
    for (source, eval) in sources {
        writeln!(w, "Signatures shared with {source}:\n").unwrap();
        if eval.tagmatch.evidence.is_empty() {
            writeln!(w, "- none\n").unwrap();
            continue;
        }
        for e in &eval.tagmatch.evidence {
            writeln!(
                w,
                "- {} (shared by {} artist{}, frequency {:.2} vs {:.2})",
                e.labels.join(" + "),
                e.uniqueness,
                if e.uniqueness == 1 { "" } else { "s" },
                e.freq_test,
                e.freq_ref
            )
            .unwrap();
            writeln!(w, "  - evaluated images: {}", e.test_images.join(", ")).unwrap();
            writeln!(w, "  - reference images: {}", e.reference_images.join(", ")).unwrap();
        }
        writeln!(w).unwrap();
    }
}

use serde::{Deserialize, Serialize};

use crate::corpus::{ArtistId, Corpus, Split};
use crate::deepmatch::{deep_match, fit, Classifier, MatchDecision, TrainingSet};
use crate::error::{Error, Result};

use super::PipelineConfig;

/// Whether a set was attributed to the subject artist, and how strongly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetFlag {
    pub flagged: bool,
    /// Share of the set's images predicted to the subject artist.
    pub confidence: f64,
    pub images: usize,
}

impl SetFlag {
    fn of(decision: &MatchDecision, artist: ArtistId) -> Self {
        SetFlag {
            flagged: decision.is_match_for(artist),
            confidence: decision.fraction_for(artist),
            images: decision.predictions.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnprecedentedVerdict {
    pub artist_id: ArtistId,
    pub model: String,
    pub most_similar_artist: ArtistId,
    /// Share of the most similar artist's test images the full classifier
    /// attributes to `artist_id`.
    pub false_positive_rate: f64,
    pub generated: SetFlag,
    pub most_similar_works: SetFlag,
    pub unprecedented: bool,
}

/// The generated set is flagged for `artist`, and either the most similar
/// artist's works are not, or they are flagged with lower confidence.
pub fn unprecedented_verdict(
    artist: ArtistId,
    generated: &MatchDecision,
    most_similar: &MatchDecision,
) -> (SetFlag, SetFlag, bool) {
    let g = SetFlag::of(generated, artist);
    let b = SetFlag::of(most_similar, artist);
    let unprecedented = g.flagged && (!b.flagged || g.confidence > b.confidence);
    (g, b, unprecedented)
}

/// The other artist whose test images are most often predicted as `artist`
/// (as a share of that artist's test set; lower id on ties).
pub fn most_similar_artist(
    corpus: &Corpus,
    classifier: &Classifier,
    artist: ArtistId,
) -> Result<(ArtistId, f64)> {
    let mut best: Option<(ArtistId, f64)> = None;
    for b in corpus.artist_ids().filter(|&b| b != artist) {
        let rows = corpus.indices(b, Split::Test);
        if rows.is_empty() {
            return Err(Error::Validation(format!("artist {b} has no test images")));
        }
        let preds = classifier.predict_all(&corpus.embeddings().select(&rows))?;
        let rate = preds.iter().filter(|&&p| p == artist).count() as f64 / rows.len() as f64;
        if best.is_none_or(|(_, r)| rate > r) {
            best = Some((b, rate));
        }
    }
    best.ok_or_else(|| Error::Validation("unprecedented similarity needs at least two artists".into()))
}

/// Holds out the artist most similar to `artist`, retrains without it, and
/// compares that artist's real works with each of `artist`'s generated sets.
pub fn unprecedented_similarity(
    corpus: &Corpus,
    classifier: &Classifier,
    artist: ArtistId,
    cfg: &PipelineConfig,
) -> Result<Vec<UnprecedentedVerdict>> {
    cfg.validate()?;
    if corpus.artist_name(artist).is_none() {
        return Err(Error::Validation(format!("unknown artist {artist}")));
    }
    if corpus.artist_count() < 2 {
        return Err(Error::Validation("unprecedented similarity needs at least two artists".into()));
    }
    let generated = corpus.generated_sets(artist);
    if generated.is_empty() {
        return Err(Error::Validation(format!("artist {artist} has no generated images")));
    }
    let (b_star, false_positive_rate) = most_similar_artist(corpus, classifier, artist)?;
    let data = TrainingSet::from_corpus(corpus, Split::Train, &[b_star])?;
    let (retrained, _) = fit(&data, &cfg.train)?;
    let b_rows = corpus.indices_where(|img| img.artist_id == b_star && img.source.is_real());
    let b_decision = deep_match(&retrained, &corpus.embeddings().select(&b_rows), cfg.match_threshold)?;
    generated
        .into_iter()
        .map(|(model, rows)| {
            let g_decision = deep_match(&retrained, &corpus.embeddings().select(&rows), cfg.match_threshold)?;
            let (g, b, unprecedented) = unprecedented_verdict(artist, &g_decision, &b_decision);
            Ok(UnprecedentedVerdict {
                artist_id: artist,
                model,
                most_similar_artist: b_star,
                false_positive_rate,
                generated: g,
                most_similar_works: b,
                unprecedented,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decision(hits: usize, n: usize, artist: u32) -> MatchDecision {
        let preds = (0..n)
            .map(|i| if i < hits { ArtistId(artist) } else { ArtistId(99 + i as u32) })
            .collect();
        MatchDecision::from_predictions(preds, 0.5).unwrap()
    }

    #[test]
    fn both_flagged_generated_weaker_is_not_unprecedented() {
        let (g, b, u) = unprecedented_verdict(ArtistId(1), &decision(11, 20, 1), &decision(12, 20, 1));
        assert!(g.flagged && b.flagged);
        assert!((g.confidence - 0.55).abs() < 1e-12 && (b.confidence - 0.6).abs() < 1e-12);
        assert!(!u);
    }

    #[test]
    fn flagged_generated_unflagged_neighbour_is_unprecedented() {
        let (g, b, u) = unprecedented_verdict(ArtistId(1), &decision(8, 10, 1), &decision(2, 10, 1));
        assert!(g.flagged && !b.flagged);
        assert!(u);
    }

    #[test]
    fn unflagged_generated_is_never_unprecedented() {
        let (_, _, u) = unprecedented_verdict(ArtistId(1), &decision(4, 10, 1), &decision(0, 10, 1));
        assert!(!u);
    }

    #[test]
    fn stronger_generated_beats_flagged_neighbour() {
        let (_, _, u) = unprecedented_verdict(ArtistId(1), &decision(9, 10, 1), &decision(6, 10, 1));
        assert!(u);
    }
}

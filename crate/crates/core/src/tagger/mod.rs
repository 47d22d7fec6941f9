//! Selective per-aspect zero-shot tagging.
//!
//! An image receives a concept as an *atomic tag* when its similarity to the
//! concept is an outlier within the concept's aspect: the z-score, computed
//! with the aspect's mean and population standard deviation, must reach the
//! configured threshold. Each aspect may contribute zero, one or several tags.

mod vocabulary;

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::SimilarityMatrix;
use crate::error::{Error, Result};

pub use vocabulary::{Aspect, Concept, Vocabulary};

/// Index of a concept in a [`Vocabulary`].
pub type ConceptId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaggerConfig {
    pub z_threshold: f64,
    /// Aspects whose similarity spread is at or below this produce no tags.
    pub std_floor: f64,
}

impl Default for TaggerConfig {
    fn default() -> Self {
        TaggerConfig {
            z_threshold: 1.5,
            std_floor: 1e-9,
        }
    }
}

impl TaggerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.z_threshold > 0.0 && self.z_threshold.is_finite()) {
            return Err(Error::Validation(format!(
                "z_threshold must be positive, got {}",
                self.z_threshold
            )));
        }
        if !(self.std_floor >= 0.0 && self.std_floor.is_finite()) {
            return Err(Error::Validation(format!(
                "std_floor must be non-negative, got {}",
                self.std_floor
            )));
        }
        Ok(())
    }
}

/// The atomic tags of one image, kept sorted and free of duplicates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "RawTagSet")]
pub struct AtomicTagSet {
    pub image_id: String,
    tags: Vec<ConceptId>,
}

#[derive(Deserialize)]
struct RawTagSet {
    image_id: String,
    tags: Vec<ConceptId>,
}

impl From<RawTagSet> for AtomicTagSet {
    fn from(raw: RawTagSet) -> Self {
        AtomicTagSet::new(raw.image_id, raw.tags)
    }
}

impl AtomicTagSet {
    pub fn new(image_id: impl Into<String>, tags: impl IntoIterator<Item = ConceptId>) -> Self {
        let mut tags: Vec<ConceptId> = tags.into_iter().collect();
        tags.sort_unstable();
        tags.dedup();
        AtomicTagSet {
            image_id: image_id.into(),
            tags,
        }
    }

    pub fn tags(&self) -> &[ConceptId] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn contains(&self, tag: ConceptId) -> bool {
        self.tags.binary_search(&tag).is_ok()
    }

    /// True when every id of the sorted slice `sorted` is present.
    pub fn contains_all(&self, sorted: &[ConceptId]) -> bool {
        let mut mine = self.tags.iter();
        'outer: for want in sorted {
            for have in mine.by_ref() {
                match have.cmp(want) {
                    std::cmp::Ordering::Less => continue,
                    std::cmp::Ordering::Equal => continue 'outer,
                    std::cmp::Ordering::Greater => return false,
                }
            }
            return false;
        }
        true
    }
}

/// Tags one image from its similarities to every vocabulary concept.
///
/// Works on any float row; statistics are computed in `f64`.
pub fn assign_atomic_tags<S>(
    image_id: impl Into<String>,
    sim_row: &[S],
    vocab: &Vocabulary,
    cfg: &TaggerConfig,
) -> Result<AtomicTagSet>
where
    S: Copy + Into<f64>,
{
    if sim_row.len() != vocab.concept_count() {
        return Err(Error::Shape {
            what: "similarity row",
            expected: vocab.concept_count(),
            found: sim_row.len(),
        });
    }
    let image_id = image_id.into();
    let row: Vec<f64> = sim_row.iter().map(|&s| s.into()).collect();
    if let Some(j) = row.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!(
            "image {image_id:?}: non-finite similarity for concept {j}"
        )));
    }
    let mut tags = Vec::new();
    for (_, range) in vocab.aspect_ranges() {
        let values = &row[range.clone()];
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        if sd <= cfg.std_floor {
            continue;
        }
        for (k, v) in values.iter().enumerate() {
            if (v - mean) / sd >= cfg.z_threshold {
                tags.push((range.start + k) as ConceptId);
            }
        }
    }
    Ok(AtomicTagSet { image_id, tags })
}

/// Row-wise [`assign_atomic_tags`] over a similarity matrix; output order
/// follows row order.
pub fn tag_corpus(
    sims: &SimilarityMatrix,
    image_ids: &[String],
    vocab: &Vocabulary,
    cfg: &TaggerConfig,
) -> Result<Vec<AtomicTagSet>> {
    cfg.validate()?;
    if sims.cols() != vocab.concept_count() {
        return Err(Error::Shape {
            what: "similarity columns vs vocabulary concepts",
            expected: vocab.concept_count(),
            found: sims.cols(),
        });
    }
    if image_ids.len() != sims.rows() {
        return Err(Error::Shape {
            what: "image ids vs similarity rows",
            expected: sims.rows(),
            found: image_ids.len(),
        });
    }
    (0..sims.rows())
        .into_par_iter()
        .map(|i| assign_atomic_tags(image_ids[i].clone(), sims.row(i), vocab, cfg))
        .collect()
}

pub fn mean_tags_per_image(tag_sets: &[AtomicTagSet]) -> f64 {
    if tag_sets.is_empty() {
        return 0.0;
    }
    tag_sets.iter().map(AtomicTagSet::len).sum::<usize>() as f64 / tag_sets.len() as f64
}

pub fn read_tag_sets(path: impl AsRef<Path>) -> Result<Vec<AtomicTagSet>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_tag_sets(tag_sets: &[AtomicTagSet], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string(tag_sets)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

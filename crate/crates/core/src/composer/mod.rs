//! Mining per-artist tag signatures.
//!
//! Atomic tags used in at least `min_count` works of a portfolio are the
//! artist's *common* tags. Every image then contributes one count to each
//! nonempty subset of its common tags, and subsets reaching `min_count`
//! become signatures. Counting only subsets of each image's own tags keeps
//! the work proportional to `sum_x 2^|I(x)|` rather than `2^|common|`.

mod trie;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::ArtistId;
use crate::error::{Error, Result};
use crate::tagger::{AtomicTagSet, ConceptId};

use trie::SubsetTrie;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComposerConfig {
    pub min_count: u32,
    pub intersection_cap: usize,
}

impl Default for ComposerConfig {
    fn default() -> Self {
        ComposerConfig {
            min_count: 3,
            intersection_cap: 25,
        }
    }
}

impl ComposerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_count < 1 {
            return Err(Error::Validation("min_count must be >= 1".into()));
        }
        if self.intersection_cap < 1 || self.intersection_cap > 31 {
            return Err(Error::Validation(format!(
                "intersection_cap must be in 1..=31, got {}",
                self.intersection_cap
            )));
        }
        Ok(())
    }
}

/// A nonempty, strictly increasing set of concept ids.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<ConceptId>", into = "Vec<ConceptId>")]
pub struct TagSignature(Vec<ConceptId>);

impl TagSignature {
    pub fn new(tags: Vec<ConceptId>) -> Result<Self> {
        if tags.is_empty() {
            return Err(Error::Data("empty tag signature".into()));
        }
        if tags.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Data(format!(
                "tag signature {tags:?} is not strictly increasing"
            )));
        }
        Ok(TagSignature(tags))
    }

    /// Sorts and deduplicates; panics on an empty input.
    pub fn from_tags(tags: impl IntoIterator<Item = ConceptId>) -> Self {
        let mut v: Vec<ConceptId> = tags.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        assert!(!v.is_empty(), "tag signature must be nonempty");
        TagSignature(v)
    }

    pub fn tags(&self) -> &[ConceptId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_subset_of(&self, other: &TagSignature) -> bool {
        let mut it = other.0.iter();
        self.0.iter().all(|t| it.any(|o| o == t))
    }
}

impl TryFrom<Vec<ConceptId>> for TagSignature {
    type Error = Error;

    fn try_from(v: Vec<ConceptId>) -> Result<Self> {
        TagSignature::new(v)
    }
}

impl From<TagSignature> for Vec<ConceptId> {
    fn from(s: TagSignature) -> Self {
        s.0
    }
}

impl fmt::Display for TagSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{t}")?;
        }
        f.write_str("}")
    }
}

/// Signatures mined from one portfolio.
///
/// `artist_id` is `None` for test portfolios that do not belong to a
/// reference artist.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtistTagProfile {
    artist_id: Option<ArtistId>,
    portfolio_size: usize,
    common_atomic: BTreeSet<ConceptId>,
    signatures: BTreeMap<TagSignature, u32>,
}

impl ArtistTagProfile {
    pub fn from_parts(
        artist_id: Option<ArtistId>,
        portfolio_size: usize,
        common_atomic: BTreeSet<ConceptId>,
        signatures: BTreeMap<TagSignature, u32>,
    ) -> Result<Self> {
        if portfolio_size == 0 && !signatures.is_empty() {
            return Err(Error::Data("signatures on an empty portfolio".into()));
        }
        for (sig, &count) in &signatures {
            if count == 0 || count as usize > portfolio_size {
                return Err(Error::Data(format!(
                    "signature {sig} has count {count} outside 1..={portfolio_size}"
                )));
            }
            if !sig.tags().iter().all(|t| common_atomic.contains(t)) {
                return Err(Error::Data(format!(
                    "signature {sig} uses tags outside the common atomic set"
                )));
            }
        }
        Ok(ArtistTagProfile {
            artist_id,
            portfolio_size,
            common_atomic,
            signatures,
        })
    }

    pub fn artist_id(&self) -> Option<ArtistId> {
        self.artist_id
    }

    pub fn portfolio_size(&self) -> usize {
        self.portfolio_size
    }

    pub fn common_atomic(&self) -> &BTreeSet<ConceptId> {
        &self.common_atomic
    }

    pub fn signatures(&self) -> &BTreeMap<TagSignature, u32> {
        &self.signatures
    }

    pub fn count(&self, sig: &TagSignature) -> Option<u32> {
        self.signatures.get(sig).copied()
    }

    pub fn frequency(&self, sig: &TagSignature) -> Option<f64> {
        self.count(sig)
            .map(|c| f64::from(c) / self.portfolio_size as f64)
    }

    pub fn frequencies(&self) -> impl Iterator<Item = (&TagSignature, f64)> + '_ {
        let size = self.portfolio_size as f64;
        self.signatures
            .iter()
            .map(move |(s, &c)| (s, f64::from(c) / size))
    }

    pub fn len(&self) -> usize {
        self.signatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
struct ProfileJson {
    artist_id: Option<ArtistId>,
    portfolio_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    common_atomic: Option<Vec<ConceptId>>,
    signatures: Vec<SignatureCount>,
}

#[derive(Serialize, Deserialize)]
struct SignatureCount {
    tags: TagSignature,
    count: u32,
}

impl Serialize for ArtistTagProfile {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ProfileJson {
            artist_id: self.artist_id,
            portfolio_size: self.portfolio_size,
            common_atomic: Some(self.common_atomic.iter().copied().collect()),
            signatures: self
                .signatures
                .iter()
                .map(|(tags, &count)| SignatureCount {
                    tags: tags.clone(),
                    count,
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ArtistTagProfile {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = ProfileJson::deserialize(d)?;
        let signatures: BTreeMap<TagSignature, u32> = raw
            .signatures
            .into_iter()
            .map(|sc| (sc.tags, sc.count))
            .collect();
        // Without an explicit list, the common set is every tag that
        // appears in some stored signature.
        let common = match raw.common_atomic {
            Some(list) => list.into_iter().collect(),
            None => signatures.keys().flat_map(|s| s.tags().iter().copied()).collect(),
        };
        ArtistTagProfile::from_parts(raw.artist_id, raw.portfolio_size, common, signatures)
            .map_err(serde::de::Error::custom)
    }
}

fn atomic_counts(portfolio: &[AtomicTagSet]) -> BTreeMap<ConceptId, u32> {
    let mut counts = BTreeMap::new();
    for set in portfolio {
        for &t in set.tags() {
            *counts.entry(t).or_insert(0u32) += 1;
        }
    }
    counts
}

/// Atomic tags present in at least `cfg.min_count` images of the portfolio.
pub fn common_atomic_tags(
    portfolio: &[AtomicTagSet],
    cfg: &ComposerConfig,
) -> Result<BTreeSet<ConceptId>> {
    cfg.validate()?;
    if portfolio.is_empty() {
        return Err(Error::Validation("empty portfolio".into()));
    }
    Ok(atomic_counts(portfolio)
        .into_iter()
        .filter(|&(_, c)| c >= cfg.min_count)
        .map(|(t, _)| t)
        .collect())
}

/// Counts every nonempty subset of each image's common tags and keeps those
/// reaching `cfg.min_count`.
///
/// An image with more than `cfg.intersection_cap` common tags keeps the
/// `cap` tags with the highest portfolio-wide counts (lower id wins ties).
pub fn compose_signatures(
    artist_id: Option<ArtistId>,
    portfolio: &[AtomicTagSet],
    common: &BTreeSet<ConceptId>,
    cfg: &ComposerConfig,
) -> Result<ArtistTagProfile> {
    cfg.validate()?;
    let counts = atomic_counts(portfolio);
    let mut trie = SubsetTrie::new();
    let mut intersection = Vec::new();
    for set in portfolio {
        intersection.clear();
        intersection.extend(set.tags().iter().copied().filter(|t| common.contains(t)));
        if intersection.len() > cfg.intersection_cap {
            log::warn!(
                "image {:?} has {} common tags; keeping the {} most frequent",
                set.image_id,
                intersection.len(),
                cfg.intersection_cap
            );
            intersection.sort_by_key(|t| (std::cmp::Reverse(counts[t]), *t));
            intersection.truncate(cfg.intersection_cap);
            intersection.sort_unstable();
        }
        trie.add_powerset(&intersection);
    }
    let signatures = trie.collect(cfg.min_count);
    ArtistTagProfile::from_parts(artist_id, portfolio.len(), common.clone(), signatures)
}

/// Common-tag extraction followed by composition.
pub fn mine_profile(
    artist_id: Option<ArtistId>,
    portfolio: &[AtomicTagSet],
    cfg: &ComposerConfig,
) -> Result<ArtistTagProfile> {
    let common = common_atomic_tags(portfolio, cfg)?;
    compose_signatures(artist_id, portfolio, &common, cfg)
}

/// For each signature held by any profile, the number of profiles holding it.
pub fn signature_uniqueness(profiles: &[ArtistTagProfile]) -> BTreeMap<TagSignature, usize> {
    let mut out = BTreeMap::new();
    for p in profiles {
        for sig in p.signatures.keys() {
            *out.entry(sig.clone()).or_insert(0usize) += 1;
        }
    }
    out
}

pub fn read_profiles(path: impl AsRef<Path>) -> Result<Vec<ArtistTagProfile>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_profiles(profiles: &[ArtistTagProfile], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string(profiles)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

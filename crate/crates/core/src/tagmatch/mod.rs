//! Set-level classification by matched tag signatures.
//!
//! A test portfolio is mined exactly like a reference artist. Signatures it
//! shares with reference artists are visited from most to least unique, and
//! each sharing artist collects a score of `holders + |freq_test - freq_ref|`
//! for its first `k` matches. The integer part rewards rarity, the fractional
//! part (always below one) breaks ties by frequency agreement. Artists are
//! ranked by the mean of their kept scores; those with fewer than `k`
//! matches score `+inf`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::composer::{mine_profile, ArtistTagProfile, ComposerConfig, TagSignature};
use crate::corpus::ArtistId;
use crate::error::{Error, Result};
use crate::tagger::AtomicTagSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagMatchConfig {
    pub matches_per_artist: usize,
}

impl Default for TagMatchConfig {
    fn default() -> Self {
        TagMatchConfig {
            matches_per_artist: 10,
        }
    }
}

impl TagMatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.matches_per_artist < 1 {
            return Err(Error::Validation("matches_per_artist must be >= 1".into()));
        }
        Ok(())
    }
}

/// A set of images to classify, with its own mined profile.
#[derive(Debug, Clone)]
pub struct TestPortfolio {
    pub tag_sets: Vec<AtomicTagSet>,
    pub profile: ArtistTagProfile,
}

impl TestPortfolio {
    pub fn mine(tag_sets: Vec<AtomicTagSet>, cfg: &ComposerConfig) -> Result<Self> {
        if tag_sets.is_empty() {
            return Err(Error::Validation("empty test portfolio".into()));
        }
        let profile = mine_profile(None, &tag_sets, cfg)?;
        Ok(TestPortfolio { tag_sets, profile })
    }

    pub fn image_ids(&self) -> impl Iterator<Item = &str> {
        self.tag_sets.iter().map(|t| t.image_id.as_str())
    }

    pub fn len(&self) -> usize {
        self.tag_sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tag_sets.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
struct Holder {
    artist: ArtistId,
    frequency: f64,
}

/// Reference profiles reorganized by signature, built once and reused for
/// every inference.
#[derive(Debug, Clone)]
pub struct ReferenceIndex {
    artists: Vec<ArtistId>,
    holders: HashMap<TagSignature, Vec<Holder>>,
}

impl ReferenceIndex {
    pub fn build(profiles: &[ArtistTagProfile]) -> Result<Self> {
        if profiles.is_empty() {
            return Err(Error::Validation("empty reference set".into()));
        }
        let mut artists = Vec::with_capacity(profiles.len());
        let mut holders: HashMap<TagSignature, Vec<Holder>> = HashMap::new();
        for p in profiles {
            let artist = p.artist_id().ok_or_else(|| {
                Error::Validation("reference profile without an artist id".into())
            })?;
            artists.push(artist);
            for (sig, frequency) in p.frequencies() {
                holders
                    .entry(sig.clone())
                    .or_default()
                    .push(Holder { artist, frequency });
            }
        }
        let mut sorted = artists.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation("duplicate artist among reference profiles".into()));
        }
        for list in holders.values_mut() {
            list.sort_by_key(|h| h.artist);
        }
        Ok(ReferenceIndex { artists: sorted, holders })
    }

    pub fn artists(&self) -> &[ArtistId] {
        &self.artists
    }

    /// Number of reference artists holding `sig` (0 if none).
    pub fn uniqueness(&self, sig: &TagSignature) -> usize {
        self.holders.get(sig).map_or(0, Vec::len)
    }

    /// Reference artists holding `sig`, in ascending id order.
    pub fn holders(&self, sig: &TagSignature) -> impl Iterator<Item = ArtistId> + '_ {
        self.holders.get(sig).into_iter().flatten().map(|h| h.artist)
    }

    pub fn signature_count(&self) -> usize {
        self.holders.len()
    }
}

/// Integer part: reference artists sharing the tag. Decimal part: absolute
/// frequency difference, in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    pub integer_part: usize,
    pub decimal_part: f64,
}

impl MatchScore {
    pub fn total(&self) -> f64 {
        self.integer_part as f64 + self.decimal_part
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedTag {
    pub tags: TagSignature,
    pub uniqueness: usize,
    pub freq_test: f64,
    pub freq_ref: f64,
    pub score: f64,
}

impl MatchedTag {
    pub fn match_score(&self) -> MatchScore {
        MatchScore {
            integer_part: self.uniqueness,
            decimal_part: (self.freq_test - self.freq_ref).abs(),
        }
    }
}

/// One reference artist's standing. `score` is `None` when the artist has
/// fewer than `k` matched tags (an infinite score).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedArtist {
    pub artist_id: ArtistId,
    pub score: Option<f64>,
    pub kept: Vec<MatchedTag>,
}

impl RankedArtist {
    pub fn score_value(&self) -> f64 {
        self.score.unwrap_or(f64::INFINITY)
    }

    pub fn is_finite(&self) -> bool {
        self.score.is_some()
    }

    fn lead_uniqueness(&self) -> usize {
        self.kept.first().map_or(usize::MAX, |m| m.uniqueness)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub k: usize,
    pub matched_tag_count: usize,
    pub ranking: Vec<RankedArtist>,
}

impl MatchResult {
    pub fn top(&self) -> Option<&RankedArtist> {
        self.ranking.first().filter(|r| r.is_finite())
    }

    pub fn entry(&self, artist: ArtistId) -> Option<&RankedArtist> {
        self.ranking.iter().find(|r| r.artist_id == artist)
    }

    /// 1-based rank of `artist` among finite-score entries.
    pub fn rank_of(&self, artist: ArtistId) -> Option<usize> {
        self.ranking
            .iter()
            .take_while(|r| r.is_finite())
            .position(|r| r.artist_id == artist)
            .map(|p| p + 1)
    }
}

fn traversal_order(a: &(&TagSignature, usize), b: &(&TagSignature, usize)) -> Ordering {
    a.1.cmp(&b.1)
        .then_with(|| b.0.len().cmp(&a.0.len()))
        .then_with(|| a.0.cmp(b.0))
}

fn ranking_order(a: &RankedArtist, b: &RankedArtist) -> Ordering {
    a.score_value()
        .total_cmp(&b.score_value())
        .then_with(|| a.lead_uniqueness().cmp(&b.lead_uniqueness()))
        .then_with(|| a.artist_id.cmp(&b.artist_id))
}

/// Ranks every reference artist against the test portfolio.
pub fn tag_match(
    test: &TestPortfolio,
    index: &ReferenceIndex,
    cfg: &TagMatchConfig,
) -> Result<MatchResult> {
    cfg.validate()?;
    if test.is_empty() {
        return Err(Error::Validation("empty test portfolio".into()));
    }
    let k = cfg.matches_per_artist;

    let mut matched: Vec<(&TagSignature, usize)> = test
        .profile
        .signatures()
        .keys()
        .filter_map(|sig| {
            let u = index.uniqueness(sig);
            (u > 0).then_some((sig, u))
        })
        .collect();
    matched.sort_by(traversal_order);

    let mut kept: BTreeMap<ArtistId, Vec<MatchedTag>> =
        index.artists.iter().map(|&a| (a, Vec::new())).collect();
    for &(sig, uniqueness) in &matched {
        let freq_test = test.profile.frequency(sig).expect("matched tag is in test profile");
        for holder in &index.holders[sig] {
            let list = kept.get_mut(&holder.artist).expect("holder is a reference artist");
            if list.len() >= k {
                continue;
            }
            let decimal = (freq_test - holder.frequency).abs();
            list.push(MatchedTag {
                tags: sig.clone(),
                uniqueness,
                freq_test,
                freq_ref: holder.frequency,
                score: uniqueness as f64 + decimal,
            });
        }
    }

    let mut ranking: Vec<RankedArtist> = kept
        .into_iter()
        .map(|(artist_id, kept)| {
            let score = (kept.len() >= k)
                .then(|| kept.iter().map(|m| m.score).sum::<f64>() / kept.len() as f64);
            RankedArtist {
                artist_id,
                score,
                kept,
            }
        })
        .collect();
    ranking.sort_by(ranking_order);

    Ok(MatchResult {
        k,
        matched_tag_count: matched.len(),
        ranking,
    })
}

/// Ids of the images whose atomic tags include every tag of `signature`.
pub fn attribute(signature: &TagSignature, tag_sets: &[AtomicTagSet]) -> Vec<String> {
    tag_sets
        .iter()
        .filter(|t| t.contains_all(signature.tags()))
        .map(|t| t.image_id.clone())
        .collect()
}

/// Images from both sides exhibiting one matched signature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribution {
    pub tags: TagSignature,
    pub test_images: Vec<String>,
    pub reference_images: Vec<String>,
}

/// Attributions for every kept tag of `artist`, computed on demand.
pub fn attribute_matches(
    result: &MatchResult,
    artist: ArtistId,
    test_tag_sets: &[AtomicTagSet],
    reference_tag_sets: &[AtomicTagSet],
) -> Vec<Attribution> {
    let Some(entry) = result.entry(artist) else {
        return Vec::new();
    };
    entry
        .kept
        .iter()
        .map(|m| Attribution {
            tags: m.tags.clone(),
            test_images: attribute(&m.tags, test_tag_sets),
            reference_images: attribute(&m.tags, reference_tag_sets),
        })
        .collect()
}

/// Whether `true_artist` is among the first `k` finite-score predictions.
pub fn topk_hit(result: &MatchResult, true_artist: ArtistId, k: usize) -> bool {
    result
        .ranking
        .iter()
        .take(k)
        .any(|r| r.is_finite() && r.artist_id == true_artist)
}

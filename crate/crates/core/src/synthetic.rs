//! Synthetic corpora with known ground truth, for tests, benchmarks and
//! demonstrations.
//!
//! [`PlantedCorpus`] gives every artist a block of private concepts that no
//! other artist uses, so each of those concepts is a uniqueness-1 signature,
//! and mixes in noise concepts shared by everyone. Embeddings come from
//! per-artist Gaussian clusters around orthogonal centres.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::composer::{mine_profile, ArtistTagProfile, ComposerConfig};
use crate::corpus::{
    write_embedding_store, ArtistId, ArtistRecord, Corpus, EmbeddingStore, ImageRecord, Source,
    Split,
};
use crate::error::{Error, Result};
use crate::tagger::{write_tag_sets, Aspect, AtomicTagSet, ConceptId, Vocabulary};

pub const GENERATED_MODEL: &str = "mimic";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfig {
    pub artists: usize,
    pub images_per_artist: usize,
    /// Private concepts per artist.
    pub planted_per_artist: usize,
    /// Probability that an image carries each of its artist's private concepts.
    pub planted_rate: f64,
    /// Concepts shared by all artists.
    pub noise_concepts: usize,
    /// Probability that an image carries each noise concept.
    pub noise_rate: f64,
    pub dim: usize,
    /// Distance between cluster centres in units of the cluster radius
    /// (per-coordinate standard deviation times sqrt(dim)).
    pub separation: f64,
    /// Generated images for every even-numbered artist; 0 for none.
    pub generated_per_artist: usize,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            artists: 20,
            images_per_artist: 60,
            planted_per_artist: 12,
            planted_rate: 0.5,
            noise_concepts: 20,
            noise_rate: 0.3,
            dim: 32,
            separation: 4.0,
            generated_per_artist: 0,
            seed: 0,
        }
    }
}

impl PlantedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.artists == 0 || self.images_per_artist == 0 || self.planted_per_artist < 2 {
            return Err(Error::Validation(
                "need at least one artist, one image and two planted concepts per artist".into(),
            ));
        }
        if self.dim < self.artists {
            return Err(Error::Validation(format!(
                "dimension {} cannot hold {} orthogonal centres",
                self.dim, self.artists
            )));
        }
        if self.noise_concepts == 1 {
            return Err(Error::Validation("noise concepts must be 0 or at least 2".into()));
        }
        let rates_ok = (0.0..=1.0).contains(&self.planted_rate) && (0.0..=1.0).contains(&self.noise_rate);
        if !rates_ok || self.separation.is_nan() || self.separation <= 0.0 {
            return Err(Error::Validation("rates must lie in [0, 1] and separation be positive".into()));
        }
        Ok(())
    }

    fn planted_concept(&self, artist: usize, j: usize) -> ConceptId {
        (artist * self.planted_per_artist + j) as ConceptId
    }

    fn noise_concept(&self, k: usize) -> ConceptId {
        (self.artists * self.planted_per_artist + k) as ConceptId
    }

    /// Per-coordinate noise standard deviation for unit-length centres.
    fn sigma(&self) -> f64 {
        std::f64::consts::SQRT_2 / (self.separation * (self.dim as f64).sqrt())
    }
}

/// A planted corpus together with everything needed to run the pipeline.
#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub config: PlantedConfig,
    pub corpus: Corpus,
    /// Row-aligned with the corpus.
    pub tag_sets: Vec<AtomicTagSet>,
    pub vocabulary: Vocabulary,
    /// Random unit vectors, one per vocabulary concept.
    pub concepts: EmbeddingStore,
}

fn vocabulary(cfg: &PlantedConfig) -> Result<Vocabulary> {
    let mut aspects: Vec<Aspect> = (0..cfg.artists)
        .map(|a| Aspect {
            name: format!("Artist {a:02} motifs"),
            caption_template: "{}".into(),
            descriptors: (0..cfg.planted_per_artist).map(|j| format!("motif {a:02}-{j:02}")).collect(),
        })
        .collect();
    if cfg.noise_concepts > 0 {
        aspects.push(Aspect {
            name: "Shared motifs".into(),
            caption_template: "{}".into(),
            descriptors: (0..cfg.noise_concepts).map(|k| format!("shared {k:02}")).collect(),
        });
    }
    Vocabulary::new(vec!["art with {}".into()], aspects)
}

fn unit_rows(rows: Vec<Vec<f32>>, d: usize) -> Result<EmbeddingStore> {
    let n = rows.len();
    EmbeddingStore::normalized(n, d, rows.into_iter().flatten().collect())
}

fn cluster_point(rng: &mut ChaCha8Rng, centre: usize, d: usize, sigma: f64) -> Vec<f32> {
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    (0..d)
        .map(|j| {
            let c = if j == centre { 1.0 } else { 0.0 };
            (c + normal.sample(rng)) as f32
        })
        .collect()
}

fn draw_tags(rng: &mut ChaCha8Rng, cfg: &PlantedConfig, artist: usize, planted_rate: f64) -> Vec<ConceptId> {
    let mut tags = Vec::new();
    for j in 0..cfg.planted_per_artist {
        if rng.random_bool(planted_rate) {
            tags.push(cfg.planted_concept(artist, j));
        }
    }
    for k in 0..cfg.noise_concepts {
        if rng.random_bool(cfg.noise_rate) {
            tags.push(cfg.noise_concept(k));
        }
    }
    tags
}

impl PlantedCorpus {
    pub fn generate(cfg: &PlantedConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let sigma = cfg.sigma();
        let artists: Vec<ArtistRecord> = (0..cfg.artists)
            .map(|a| ArtistRecord {
                id: ArtistId(a as u32),
                name: format!("Artist {a:02}"),
            })
            .collect();
        let mut images = Vec::new();
        let mut rows = Vec::new();
        let mut tag_sets = Vec::new();
        for a in 0..cfg.artists {
            for i in 0..cfg.images_per_artist {
                let image_id = format!("a{a:02}-{i:03}");
                rows.push(cluster_point(&mut rng, a, cfg.dim, sigma));
                tag_sets.push(AtomicTagSet::new(image_id.clone(), draw_tags(&mut rng, cfg, a, cfg.planted_rate)));
                images.push(ImageRecord {
                    image_id,
                    artist_id: ArtistId(a as u32),
                    title: format!("work {i}"),
                    split: Split::Unassigned,
                    source: Source::Real,
                });
            }
            if a % 2 == 0 {
                for i in 0..cfg.generated_per_artist {
                    let image_id = format!("a{a:02}-{GENERATED_MODEL}-{i:03}");
                    rows.push(cluster_point(&mut rng, a, cfg.dim, 2.0 * sigma));
                    tag_sets.push(AtomicTagSet::new(
                        image_id.clone(),
                        draw_tags(&mut rng, cfg, a, 0.7 * cfg.planted_rate),
                    ));
                    images.push(ImageRecord {
                        image_id,
                        artist_id: ArtistId(a as u32),
                        title: format!("work {i} by Artist {a:02}"),
                        split: Split::Generated,
                        source: Source::Generated(GENERATED_MODEL.into()),
                    });
                }
            }
        }
        let embeddings = unit_rows(rows, cfg.dim)?;
        let corpus = Corpus::new(artists, images, embeddings)?;
        let vocabulary = vocabulary(cfg)?;
        let concept_rows = (0..vocabulary.concept_count())
            .map(|_| {
                let centre = rng.random_range(0..cfg.dim);
                cluster_point(&mut rng, centre, cfg.dim, 0.5)
            })
            .collect();
        let concepts = unit_rows(concept_rows, cfg.dim)?;
        Ok(PlantedCorpus {
            config: *cfg,
            corpus,
            tag_sets,
            vocabulary,
            concepts,
        })
    }

    /// The private concepts of `artist`.
    pub fn planted_concepts(&self, artist: ArtistId) -> Vec<ConceptId> {
        (0..self.config.planted_per_artist)
            .map(|j| self.config.planted_concept(artist.index(), j))
            .collect()
    }

    /// Writes `embeddings.arts`, `manifest.json`, `vocab.json`,
    /// `concepts.arts` and `tags.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_embedding_store(self.corpus.embeddings(), dir.join("embeddings.arts"))?;
        self.corpus.to_manifest().write(dir.join("manifest.json"))?;
        let vocab_path = dir.join("vocab.json");
        fs::write(&vocab_path, self.vocabulary.to_json()).map_err(|e| Error::io(&vocab_path, e))?;
        write_embedding_store(&self.concepts, dir.join("concepts.arts"))?;
        write_tag_sets(&self.tag_sets, dir.join("tags.json"))
    }
}

/// Reference profiles and a test portfolio sized like a full-scale
/// deployment, for timing TagMatch.
#[derive(Debug, Clone)]
pub struct ScaleFixture {
    pub profiles: Vec<ArtistTagProfile>,
    pub test_tag_sets: Vec<AtomicTagSet>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleConfig {
    pub artists: usize,
    pub images_per_artist: usize,
    pub test_images: usize,
    pub concepts: usize,
    /// Concepts each artist favours.
    pub favourites: usize,
    pub favourite_rate: f64,
    pub background_rate: f64,
    pub seed: u64,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        ScaleConfig {
            artists: 372,
            images_per_artist: 80,
            test_images: 150,
            concepts: 191,
            favourites: 20,
            favourite_rate: 0.4,
            background_rate: 0.01,
            seed: 0,
        }
    }
}

fn scale_images(rng: &mut ChaCha8Rng, cfg: &ScaleConfig, favourites: &[ConceptId], prefix: &str, n: usize) -> Vec<AtomicTagSet> {
    (0..n)
        .map(|i| {
            let tags = (0..cfg.concepts as ConceptId).filter(|c| {
                let p = if favourites.contains(c) { cfg.favourite_rate } else { cfg.background_rate };
                rng.random_bool(p)
            });
            AtomicTagSet::new(format!("{prefix}-{i:03}"), tags.collect::<Vec<_>>())
        })
        .collect()
}

impl ScaleFixture {
    /// Mines `cfg.artists` profiles in parallel; the test portfolio follows
    /// artist 0's concept preferences.
    pub fn generate(cfg: &ScaleConfig, composer: &ComposerConfig) -> Result<Self> {
        use rayon::prelude::*;
        if cfg.favourites > cfg.concepts || cfg.artists == 0 || cfg.test_images == 0 {
            return Err(Error::Validation(format!("invalid scale fixture config {cfg:?}")));
        }
        let favourites = |a: usize| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (a as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            rand::seq::index::sample(&mut rng, cfg.concepts, cfg.favourites)
                .into_iter()
                .map(|c| c as ConceptId)
                .collect::<Vec<_>>()
        };
        let profiles = (0..cfg.artists)
            .into_par_iter()
            .map(|a| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(a as u64 + 1);
                let sets = scale_images(&mut rng, cfg, &favourites(a), &format!("r{a:03}"), cfg.images_per_artist);
                mine_profile(Some(ArtistId(a as u32)), &sets, composer)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(u64::MAX);
        let test_tag_sets = scale_images(&mut rng, cfg, &favourites(0), "t", cfg.test_images);
        Ok(ScaleFixture { profiles, test_tag_sets })
    }
}

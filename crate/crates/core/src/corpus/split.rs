use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ArtistId, Corpus, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub min_test_per_artist: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_fraction: 0.2,
            min_test_per_artist: 20,
            seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Validation(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        Ok(())
    }
}

/// Number of held-out works for a portfolio of `size` real images.
///
/// The ceiling absorbs float noise in `fraction * size` (0.2 * 100 must give
/// 20, not 21) and is then floored at `min_test`.
pub fn test_count(size: usize, fraction: f64, min_test: usize) -> usize {
    let raw = fraction * size as f64;
    let ceil = (raw - 1e-9 * raw.max(1.0)).ceil().max(0.0) as usize;
    ceil.max(min_test)
}

fn artist_rng(seed: u64, artist: ArtistId) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..12].copy_from_slice(&artist.0.to_le_bytes());
    key[12..16].copy_from_slice(b"splt");
    ChaCha8Rng::from_seed(key)
}

/// Stratified per-artist train/test assignment of the real images.
///
/// Each artist's real works are permuted with a generator keyed on
/// `(seed, artist)`; the first `test_count(..)` become test images. Images
/// with a generated source keep their split untouched.
pub fn split_corpus(corpus: &Corpus, cfg: &SplitConfig) -> Result<Corpus> {
    cfg.validate()?;
    let mut images = corpus.images().to_vec();
    for artist in corpus.artists() {
        let mut real = corpus.indices_where(|img| img.artist_id == artist.id && img.source.is_real());
        let size = real.len();
        if size < cfg.min_test_per_artist + 1 {
            return Err(Error::Split(format!(
                "artist {} ({}) has {size} real images; at least {} are needed to hold out {}",
                artist.id,
                artist.name,
                cfg.min_test_per_artist + 1,
                cfg.min_test_per_artist
            )));
        }
        let n_test = test_count(size, cfg.test_fraction, cfg.min_test_per_artist);
        if n_test >= size {
            return Err(Error::Split(format!(
                "artist {} ({}) would have no training images ({n_test} of {size} held out)",
                artist.id, artist.name
            )));
        }
        real.shuffle(&mut artist_rng(cfg.seed, artist.id));
        for (rank, &idx) in real.iter().enumerate() {
            images[idx].split = if rank < n_test { Split::Test } else { Split::Train };
        }
    }
    Ok(corpus.with_images(images))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ArtistRecord, EmbeddingStore, ImageRecord, Source};

    fn corpus(sizes: &[usize], generated: usize) -> Corpus {
        let artists = (0..sizes.len())
            .map(|i| ArtistRecord {
                id: ArtistId(i as u32),
                name: format!("a{i}"),
            })
            .collect();
        let mut images = Vec::new();
        for (a, &size) in sizes.iter().enumerate() {
            for k in 0..size {
                images.push(ImageRecord {
                    image_id: format!("{a}-{k}"),
                    artist_id: ArtistId(a as u32),
                    title: String::new(),
                    split: Split::Unassigned,
                    source: Source::Real,
                });
            }
            for k in 0..generated {
                images.push(ImageRecord {
                    image_id: format!("{a}-g{k}"),
                    artist_id: ArtistId(a as u32),
                    title: String::new(),
                    split: Split::Generated,
                    source: Source::Generated("m".into()),
                });
            }
        }
        let n = images.len();
        let data = (0..n).flat_map(|_| [1.0f32, 0.0]).collect();
        Corpus::new(artists, images, EmbeddingStore::new(n, 2, data).unwrap()).unwrap()
    }

    fn count(c: &Corpus, artist: u32, split: Split) -> usize {
        c.indices(ArtistId(artist), split).len()
    }

    #[test]
    fn hundred_images_give_twenty_test() {
        let c = split_corpus(&corpus(&[100], 0), &SplitConfig::default()).unwrap();
        assert_eq!(count(&c, 0, Split::Test), 20);
        assert_eq!(count(&c, 0, Split::Train), 80);
    }

    #[test]
    fn minimum_is_a_hard_floor_and_ceiling_rounds_up() {
        let cfg = SplitConfig::default();
        assert_eq!(test_count(60, 0.2, 20), 20);
        assert_eq!(test_count(101, 0.2, 20), 21);
        assert_eq!(test_count(250, 0.2, 20), 50);
        assert_eq!(test_count(10, 0.25, 0), 3);
        let c = split_corpus(&corpus(&[60, 150], 0), &cfg).unwrap();
        assert_eq!(count(&c, 0, Split::Test), 20);
        assert_eq!(count(&c, 1, Split::Test), 30);
    }

    #[test]
    fn too_small_artist_is_named() {
        let err = split_corpus(&corpus(&[100, 10], 0), &SplitConfig::default()).unwrap_err();
        match err {
            Error::Split(msg) => assert!(msg.contains("a1"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_fraction() {
        for f in [0.0, 1.0, -0.1, f64::NAN] {
            let cfg = SplitConfig { test_fraction: f, ..SplitConfig::default() };
            assert!(matches!(split_corpus(&corpus(&[100], 0), &cfg), Err(Error::Validation(_))));
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let base = corpus(&[100, 120], 5);
        let cfg = SplitConfig::default();
        let a = split_corpus(&base, &cfg).unwrap();
        let b = split_corpus(&base, &cfg).unwrap();
        assert_eq!(a, b);
        let c = split_corpus(&base, &SplitConfig { seed: 9, ..cfg }).unwrap();
        assert_ne!(a.indices(ArtistId(0), Split::Test), c.indices(ArtistId(0), Split::Test));
    }

    #[test]
    fn partition_leaves_generated_alone() {
        let base = corpus(&[40, 70], 4);
        let cfg = SplitConfig { test_fraction: 0.3, min_test_per_artist: 5, seed: 3 };
        let c = split_corpus(&base, &cfg).unwrap();
        for (before, after) in base.images().iter().zip(c.images()) {
            if before.source.is_real() {
                assert!(matches!(after.split, Split::Train | Split::Test));
            } else {
                assert_eq!(after.split, Split::Generated);
            }
        }
        assert_eq!(count(&c, 0, Split::Test) + count(&c, 0, Split::Train), 40);
        assert_eq!(count(&c, 1, Split::Generated), 4);
    }
}

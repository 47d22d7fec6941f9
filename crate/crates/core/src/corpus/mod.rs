//! Dataset model: images, artists, their embeddings, and the manifest that
//! ties them together.

mod manifest;
mod similarity;
mod split;
mod store;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use manifest::{Manifest, ManifestRecord};
pub use similarity::{cosine_similarities, SimilarityMatrix};
pub use split::{split_corpus, SplitConfig};
pub use store::{
    decode_matrix, encode_matrix, read_embedding_store, write_embedding_store, EmbeddingStore,
    HEADER_LEN, MAGIC, VERSION,
};

/// Minimum portfolio size for a reference-grade corpus.
pub const REFERENCE_GRADE_MIN_IMAGES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArtistId(pub u32);

impl ArtistId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ArtistId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Generated,
    Unassigned,
}

/// Where an image came from: a real work, or a generative model identified
/// by an opaque tag.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Source {
    Real,
    Generated(String),
}

impl From<String> for Source {
    fn from(s: String) -> Self {
        if s == "real" {
            Source::Real
        } else {
            Source::Generated(s)
        }
    }
}

impl From<Source> for String {
    fn from(s: Source) -> Self {
        match s {
            Source::Real => "real".to_string(),
            Source::Generated(tag) => tag,
        }
    }
}

impl Source {
    pub fn is_real(&self) -> bool {
        matches!(self, Source::Real)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtistRecord {
    pub id: ArtistId,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub artist_id: ArtistId,
    pub title: String,
    pub split: Split,
    pub source: Source,
}

/// Images, artists and one embedding row per image.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    images: Vec<ImageRecord>,
    artists: Vec<ArtistRecord>,
    embeddings: EmbeddingStore,
}

impl Corpus {
    pub fn new(
        artists: Vec<ArtistRecord>,
        images: Vec<ImageRecord>,
        embeddings: EmbeddingStore,
    ) -> Result<Self> {
        if embeddings.n() != images.len() {
            return Err(Error::Shape {
                what: "embedding rows vs manifest records",
                expected: images.len(),
                found: embeddings.n(),
            });
        }
        for (i, artist) in artists.iter().enumerate() {
            if artist.id.index() != i {
                return Err(Error::Data(format!(
                    "artist ids must be 0..{}; found {} at position {i}",
                    artists.len(),
                    artist.id
                )));
            }
        }
        let mut seen = HashSet::with_capacity(images.len());
        let mut per_artist = vec![0usize; artists.len()];
        for image in &images {
            if !seen.insert(image.image_id.as_str()) {
                return Err(Error::Data(format!("duplicate image id {:?}", image.image_id)));
            }
            let slot = per_artist.get_mut(image.artist_id.index()).ok_or_else(|| {
                Error::Data(format!(
                    "image {:?} references unknown artist {}",
                    image.image_id, image.artist_id
                ))
            })?;
            *slot += 1;
            if image.split == Split::Generated && image.source.is_real() {
                return Err(Error::Data(format!(
                    "image {:?} is in the generated split but has source \"real\"",
                    image.image_id
                )));
            }
        }
        if let Some(pos) = per_artist.iter().position(|&c| c == 0) {
            return Err(Error::Data(format!(
                "artist {} ({}) has no images",
                pos, artists[pos].name
            )));
        }
        Ok(Corpus {
            images,
            artists,
            embeddings,
        })
    }

    pub fn load(manifest: impl AsRef<Path>, embeddings: impl AsRef<Path>) -> Result<Self> {
        let manifest = Manifest::read(manifest)?;
        let store = read_embedding_store(embeddings)?;
        manifest.into_corpus(store)
    }

    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn artists(&self) -> &[ArtistRecord] {
        &self.artists
    }

    pub fn embeddings(&self) -> &EmbeddingStore {
        &self.embeddings
    }

    pub fn artist_count(&self) -> usize {
        self.artists.len()
    }

    pub fn artist_ids(&self) -> impl Iterator<Item = ArtistId> + '_ {
        self.artists.iter().map(|a| a.id)
    }

    pub fn artist_name(&self, id: ArtistId) -> Option<&str> {
        self.artists.get(id.index()).map(|a| a.name.as_str())
    }

    pub fn image_ids(&self) -> Vec<String> {
        self.images.iter().map(|i| i.image_id.clone()).collect()
    }

    /// Row indices of `artist`'s images in `split`, in manifest order.
    pub fn indices(&self, artist: ArtistId, split: Split) -> Vec<usize> {
        self.indices_where(|img| img.artist_id == artist && img.split == split)
    }

    pub fn indices_where(&self, mut pred: impl FnMut(&ImageRecord) -> bool) -> Vec<usize> {
        self.images
            .iter()
            .enumerate()
            .filter(|(_, img)| pred(img))
            .map(|(i, _)| i)
            .collect()
    }

    /// Generated image indices for `artist`, grouped by model tag.
    pub fn generated_sets(&self, artist: ArtistId) -> BTreeMap<String, Vec<usize>> {
        let mut sets: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, img) in self.images.iter().enumerate() {
            if img.artist_id != artist {
                continue;
            }
            if let Source::Generated(model) = &img.source {
                sets.entry(model.clone()).or_default().push(i);
            }
        }
        sets
    }

    pub fn generated_models(&self) -> Vec<String> {
        let mut models: Vec<String> = self
            .images
            .iter()
            .filter_map(|img| match &img.source {
                Source::Generated(m) => Some(m.clone()),
                Source::Real => None,
            })
            .collect();
        models.sort();
        models.dedup();
        models
    }

    /// Every artist has at least [`REFERENCE_GRADE_MIN_IMAGES`] real works.
    pub fn is_reference_grade(&self) -> bool {
        let mut counts = vec![0usize; self.artists.len()];
        for img in self.images.iter().filter(|i| i.source.is_real()) {
            counts[img.artist_id.index()] += 1;
        }
        counts.iter().all(|&c| c >= REFERENCE_GRADE_MIN_IMAGES)
    }

    pub(crate) fn with_images(&self, images: Vec<ImageRecord>) -> Corpus {
        debug_assert_eq!(images.len(), self.images.len());
        Corpus {
            images,
            artists: self.artists.clone(),
            embeddings: self.embeddings.clone(),
        }
    }

    pub fn to_manifest(&self) -> Manifest {
        Manifest::from_corpus(self)
    }

    /// Hex SHA-256 over the manifest JSON and the embedding container bytes.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        let manifest = serde_json::to_vec(&self.to_manifest()).expect("manifest serializes");
        hasher.update((manifest.len() as u64).to_le_bytes());
        hasher.update(&manifest);
        hasher.update(self.embeddings.to_bytes());
        hex::encode(hasher.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(n: usize) -> EmbeddingStore {
        let mut data = vec![0.0; n * 2];
        for i in 0..n {
            data[i * 2] = 1.0;
        }
        EmbeddingStore::new(n, 2, data).unwrap()
    }

    fn artists(n: u32) -> Vec<ArtistRecord> {
        (0..n)
            .map(|i| ArtistRecord {
                id: ArtistId(i),
                name: format!("artist {i}"),
            })
            .collect()
    }

    fn image(id: &str, artist: u32) -> ImageRecord {
        ImageRecord {
            image_id: id.into(),
            artist_id: ArtistId(artist),
            title: format!("title {id}"),
            split: Split::Unassigned,
            source: Source::Real,
        }
    }

    #[test]
    fn rejects_unknown_artist_and_duplicates() {
        let err = Corpus::new(artists(1), vec![image("a", 0), image("b", 3)], store(2));
        assert!(matches!(err, Err(Error::Data(_))));
        let err = Corpus::new(artists(1), vec![image("a", 0), image("a", 0)], store(2));
        assert!(matches!(err, Err(Error::Data(_))));
    }

    #[test]
    fn rejects_artist_without_images_and_row_mismatch() {
        assert!(Corpus::new(artists(2), vec![image("a", 0)], store(1)).is_err());
        assert!(matches!(
            Corpus::new(artists(1), vec![image("a", 0)], store(2)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn generated_split_requires_generated_source() {
        let mut img = image("g", 0);
        img.split = Split::Generated;
        assert!(Corpus::new(artists(1), vec![img.clone()], store(1)).is_err());
        img.source = Source::Generated("sd14".into());
        let corpus = Corpus::new(artists(1), vec![img], store(1)).unwrap();
        assert_eq!(corpus.generated_models(), vec!["sd14".to_string()]);
        assert_eq!(corpus.generated_sets(ArtistId(0))["sd14"], vec![0]);
    }

    #[test]
    fn reference_grade_needs_hundred_real_works() {
        let images: Vec<_> = (0..100).map(|i| image(&i.to_string(), 0)).collect();
        let corpus = Corpus::new(artists(1), images, store(100)).unwrap();
        assert!(corpus.is_reference_grade());
        let images: Vec<_> = (0..99).map(|i| image(&i.to_string(), 0)).collect();
        let corpus = Corpus::new(artists(1), images, store(99)).unwrap();
        assert!(!corpus.is_reference_grade());
    }

    #[test]
    fn source_serializes_as_plain_string() {
        let json = serde_json::to_string(&Source::Generated("openjourney".into())).unwrap();
        assert_eq!(json, "\"openjourney\"");
        let real: Source = serde_json::from_str("\"real\"").unwrap();
        assert_eq!(real, Source::Real);
    }
}

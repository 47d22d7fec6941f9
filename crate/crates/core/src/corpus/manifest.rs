use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ArtistId, ArtistRecord, Corpus, EmbeddingStore, ImageRecord, Source, Split};
use crate::error::{Error, Result};

/// One manifest row. Row order defines embedding row order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub image_id: String,
    pub artist_id: ArtistId,
    pub artist_name: String,
    #[serde(default)]
    pub title: String,
    #[serde(default = "default_split")]
    pub split: Split,
    #[serde(default = "default_source")]
    pub source: Source,
}

fn default_split() -> Split {
    Split::Unassigned
}

fn default_source() -> Source {
    Source::Real
}

/// JSON manifest: an artist table plus image records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub artists: BTreeMap<ArtistId, String>,
    pub images: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn from_corpus(corpus: &Corpus) -> Self {
        let artists = corpus
            .artists()
            .iter()
            .map(|a| (a.id, a.name.clone()))
            .collect();
        let images = corpus
            .images()
            .iter()
            .map(|img| ManifestRecord {
                image_id: img.image_id.clone(),
                artist_id: img.artist_id,
                artist_name: corpus.artist_name(img.artist_id).unwrap_or_default().to_string(),
                title: img.title.clone(),
                split: img.split,
                source: img.source.clone(),
            })
            .collect();
        Manifest { artists, images }
    }

    pub fn into_corpus(self, embeddings: EmbeddingStore) -> Result<Corpus> {
        let artists: Vec<ArtistRecord> = self
            .artists
            .into_iter()
            .map(|(id, name)| ArtistRecord { id, name })
            .collect();
        let mut images = Vec::with_capacity(self.images.len());
        for rec in self.images {
            if let Some(artist) = artists.get(rec.artist_id.index()) {
                if artist.name != rec.artist_name {
                    return Err(Error::Data(format!(
                        "image {:?}: artist_name {:?} disagrees with artist table entry {:?}",
                        rec.image_id, rec.artist_name, artist.name
                    )));
                }
            }
            images.push(ImageRecord {
                image_id: rec.image_id,
                artist_id: rec.artist_id,
                title: rec.title,
                split: rec.split,
                source: rec.source,
            });
        }
        Corpus::new(artists, images, embeddings)
    }
}

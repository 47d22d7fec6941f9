//! DeepMatch: an image-wise artist classifier on frozen embeddings, with
//! set-level majority voting.
//!
//! A set is matched to an artist only if at least half of its images are
//! individually predicted to that artist; otherwise the set-level decision
//! abstains.

mod checkpoint;
pub mod gradcheck;
mod mlp;
mod train;

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{ArtistId, EmbeddingStore};
use crate::error::{Error, Result};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CheckpointHeader};
pub use mlp::{argmax, softmax, Gradients, Mlp, Scalar};
pub use train::{class_sampling_weights, fit, train, TrainConfig, TrainLog, TrainingSet};

/// Default set-level vote share required for a match.
pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.5;

/// Rows per inference chunk; each chunk is an independent matrix product.
const INFERENCE_CHUNK: usize = 1024;

/// A trained perceptron and the artist behind each output unit, in
/// ascending id order.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    net: Mlp<f32>,
    classes: Vec<ArtistId>,
}

impl Classifier {
    pub fn new(net: Mlp<f32>, classes: Vec<ArtistId>) -> Result<Self> {
        if net.classes() != classes.len() {
            return Err(Error::Shape {
                what: "classifier outputs vs classes",
                expected: classes.len(),
                found: net.classes(),
            });
        }
        if classes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation("classifier classes must be strictly increasing".into()));
        }
        if !net.is_finite() {
            return Err(Error::Data("classifier has non-finite parameters".into()));
        }
        Ok(Classifier { net, classes })
    }

    pub fn net(&self) -> &Mlp<f32> {
        &self.net
    }

    pub fn classes(&self) -> &[ArtistId] {
        &self.classes
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.net.hidden_dim()
    }

    /// Logits and softmax probabilities for one embedding.
    pub fn forward(&self, x: &[f32]) -> Result<(Vec<f32>, Vec<f32>)> {
        self.check_dim(x.len())?;
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row shape");
        let logits = self.net.logits(view).into_raw_vec_and_offset().0;
        let probs = softmax(&logits);
        Ok((logits, probs))
    }

    /// The artist with the largest logit; lowest artist id wins ties.
    pub fn predict_image(&self, x: &[f32]) -> Result<ArtistId> {
        let (logits, _) = self.forward(x)?;
        Ok(self.classes[argmax(&logits)])
    }

    /// Image-wise predictions for every row of `store`, in row order.
    pub fn predict_all(&self, store: &EmbeddingStore) -> Result<Vec<ArtistId>> {
        self.check_dim(store.d())?;
        let d = store.d();
        let chunks: Vec<Vec<ArtistId>> = store
            .as_slice()
            .par_chunks(INFERENCE_CHUNK * d)
            .map(|chunk| {
                let x = ArrayView2::from_shape((chunk.len() / d, d), chunk).expect("chunk shape");
                let logits = self.net.logits(x);
                logits
                    .rows()
                    .into_iter()
                    .map(|row| self.classes[argmax(row.as_slice().expect("contiguous row"))])
                    .collect()
            })
            .collect();
        Ok(chunks.into_iter().flatten().collect())
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.input_dim() {
            return Err(Error::Shape {
                what: "embedding dimensionality",
                expected: self.input_dim(),
                found: d,
            });
        }
        Ok(())
    }

    pub(crate) fn net_mut(&mut self) -> &mut Mlp<f32> {
        &mut self.net
    }
}

/// Fresh classifier with seeded uniform weights and zero biases.
pub fn init_classifier(d: usize, h: usize, classes: Vec<ArtistId>, seed: u64) -> Result<Classifier> {
    if d == 0 || h == 0 || classes.is_empty() {
        return Err(Error::Validation(format!(
            "classifier dimensions must be positive (d={d}, h={h}, classes={})",
            classes.len()
        )));
    }
    Classifier::new(Mlp::init(d, h, classes.len(), seed), classes)
}

/// Set-level outcome of majority voting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchDecision {
    /// Present iff `confidence >= threshold`.
    pub predicted_artist: Option<ArtistId>,
    /// Most frequent image-wise prediction (lowest id on ties).
    pub modal_artist: ArtistId,
    /// Share of images predicted to `modal_artist`.
    pub confidence: f64,
    pub threshold: f64,
    pub predictions: Vec<ArtistId>,
}

impl MatchDecision {
    pub fn from_predictions(predictions: Vec<ArtistId>, threshold: f64) -> Result<Self> {
        if predictions.is_empty() {
            return Err(Error::Validation("cannot vote over an empty set".into()));
        }
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(Error::Validation(format!(
                "match threshold must lie in (0, 1], got {threshold}"
            )));
        }
        let mut votes: BTreeMap<ArtistId, usize> = BTreeMap::new();
        for &p in &predictions {
            *votes.entry(p).or_default() += 1;
        }
        // BTreeMap iterates in id order, so the first maximum is the lowest id.
        let (modal_artist, top) = votes
            .iter()
            .fold((ArtistId(0), 0usize), |best, (&a, &c)| if c > best.1 { (a, c) } else { best });
        let confidence = top as f64 / predictions.len() as f64;
        let predicted_artist = (confidence >= threshold).then_some(modal_artist);
        Ok(MatchDecision {
            predicted_artist,
            modal_artist,
            confidence,
            threshold,
            predictions,
        })
    }

    /// Share of images predicted to `artist`.
    pub fn fraction_for(&self, artist: ArtistId) -> f64 {
        let hits = self.predictions.iter().filter(|&&p| p == artist).count();
        hits as f64 / self.predictions.len() as f64
    }

    pub fn is_match_for(&self, artist: ArtistId) -> bool {
        self.predicted_artist == Some(artist)
    }

    pub fn abstained(&self) -> bool {
        self.predicted_artist.is_none()
    }
}

/// Majority vote over the classifier's predictions for a test set.
pub fn deep_match(c: &Classifier, test_set: &EmbeddingStore, threshold: f64) -> Result<MatchDecision> {
    if test_set.is_empty() {
        return Err(Error::Validation("empty test set".into()));
    }
    MatchDecision::from_predictions(c.predict_all(test_set)?, threshold)
}

pub(crate) fn gather_rows(store: &EmbeddingStore, indices: &[usize]) -> Array2<f32> {
    let d = store.d();
    let mut out = Array2::zeros((indices.len(), d));
    for (mut dst, &i) in out.rows_mut().into_iter().zip(indices) {
        dst.as_slice_mut().expect("contiguous").copy_from_slice(store.row(i));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn ids(v: &[u32]) -> Vec<ArtistId> {
        v.iter().map(|&i| ArtistId(i)).collect()
    }

    #[test]
    fn majority_examples() {
        let six = ids(&[7, 7, 7, 7, 7, 7, 1, 2, 3, 4]);
        let d = MatchDecision::from_predictions(six, 0.5).unwrap();
        assert_eq!(d.predicted_artist, Some(ArtistId(7)));
        assert!((d.confidence - 0.6).abs() < 1e-12);

        let half = ids(&[3, 3, 3, 3, 3, 1, 2, 4, 5, 6]);
        let d = MatchDecision::from_predictions(half, 0.5).unwrap();
        assert_eq!(d.predicted_artist, Some(ArtistId(3)));
        assert_eq!(d.confidence, 0.5);

        let plural = ids(&[2, 2, 2, 2, 1, 1, 1, 5, 6, 8]);
        let d = MatchDecision::from_predictions(plural, 0.5).unwrap();
        assert_eq!(d.predicted_artist, None);
        assert_eq!(d.modal_artist, ArtistId(2));
        assert!((d.confidence - 0.4).abs() < 1e-12);
        assert!((d.fraction_for(ArtistId(1)) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn modal_ties_pick_lowest_id() {
        let d = MatchDecision::from_predictions(ids(&[9, 4, 9, 4]), 0.5).unwrap();
        assert_eq!(d.modal_artist, ArtistId(4));
        assert_eq!(d.predicted_artist, Some(ArtistId(4)));
        assert!(MatchDecision::from_predictions(vec![], 0.5).is_err());
    }

    #[test]
    fn forward_and_predict() {
        let net = Mlp {
            w1: array![[1.0f32], [0.0]],
            b1: array![0.0],
            w2: array![[1.0, 0.0]],
            b2: array![0.0, 0.0],
        };
        let c = Classifier::new(net, ids(&[3, 8])).unwrap();
        let (logits, probs) = c.forward(&[1.0, 0.0]).unwrap();
        assert_eq!(logits, vec![1.0, 0.0]);
        assert!((probs.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        assert_eq!(c.predict_image(&[1.0, 0.0]).unwrap(), ArtistId(3));
        // exact tie on the second input resolves to the lower id
        assert_eq!(c.predict_image(&[0.0, 1.0]).unwrap(), ArtistId(3));
        assert!(c.forward(&[1.0]).is_err());
    }

    #[test]
    fn classifier_validation() {
        assert!(init_classifier(0, 4, ids(&[0]), 1).is_err());
        assert!(init_classifier(4, 0, ids(&[0]), 1).is_err());
        assert!(init_classifier(4, 4, vec![], 1).is_err());
        assert!(Classifier::new(Mlp::zeros(2, 2, 2), ids(&[1, 0])).is_err());
        assert!(Classifier::new(Mlp::zeros(2, 2, 3), ids(&[0, 1])).is_err());
    }

    #[test]
    fn deep_match_is_order_invariant() {
        let c = init_classifier(2, 3, ids(&[0, 1, 2]), 5).unwrap();
        let rows = vec![
            vec![1.0f32, 0.0],
            vec![0.0, 1.0],
            vec![0.6, 0.8],
            vec![-0.6, 0.8],
            vec![0.8, -0.6],
        ];
        let store = EmbeddingStore::from_rows(2, &rows).unwrap();
        let reversed: Vec<_> = rows.iter().rev().cloned().collect();
        let rstore = EmbeddingStore::from_rows(2, &reversed).unwrap();
        let a = deep_match(&c, &store, 0.5).unwrap();
        let b = deep_match(&c, &rstore, 0.5).unwrap();
        assert_eq!(a.predicted_artist, b.predicted_artist);
        assert_eq!(a.confidence, b.confidence);
        assert_eq!(a.modal_artist, b.modal_artist);
    }
}

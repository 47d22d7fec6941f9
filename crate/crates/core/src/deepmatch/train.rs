use ndarray::{Array1, Array2, ArrayView2, Dimension, Zip};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{gather_rows, init_classifier, Classifier, Mlp};
use crate::corpus::{ArtistId, Corpus, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_dim: 512,
            learning_rate: 1e-3,
            momentum: 0.9,
            epochs: 10,
            batch_size: 256,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.hidden_dim > 0
            && self.epochs > 0
            && self.batch_size > 0
            && self.learning_rate > 0.0
            && self.learning_rate.is_finite();
        if !positive {
            return Err(Error::Validation(format!(
                "training sizes and learning rate must be positive: {self:?}"
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Validation(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// Embeddings with class labels. Classes are artist ids in ascending order;
/// `labels[i]` indexes into them.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    x: Array2<f32>,
    labels: Vec<usize>,
    classes: Vec<ArtistId>,
}

impl TrainingSet {
    pub fn new(x: Array2<f32>, artists: &[ArtistId]) -> Result<Self> {
        if x.nrows() != artists.len() {
            return Err(Error::Shape {
                what: "training rows vs labels",
                expected: x.nrows(),
                found: artists.len(),
            });
        }
        if x.nrows() == 0 {
            return Err(Error::Validation("empty training set".into()));
        }
        let mut classes = artists.to_vec();
        classes.sort_unstable();
        classes.dedup();
        let labels = artists
            .iter()
            .map(|a| classes.binary_search(a).expect("class present"))
            .collect();
        Ok(TrainingSet { x, labels, classes })
    }

    /// The `split` images of every artist not in `exclude`. Each remaining
    /// artist must contribute at least one image.
    pub fn from_corpus(corpus: &Corpus, split: Split, exclude: &[ArtistId]) -> Result<Self> {
        let mut indices = Vec::new();
        let mut artists = Vec::new();
        for artist in corpus.artist_ids().filter(|a| !exclude.contains(a)) {
            let rows = corpus.indices(artist, split);
            if rows.is_empty() {
                return Err(Error::Validation(format!(
                    "artist {artist} ({}) has no {split:?} images",
                    corpus.artist_name(artist).unwrap_or("?")
                )));
            }
            artists.extend(std::iter::repeat_n(artist, rows.len()));
            indices.extend(rows);
        }
        let x = gather_rows(corpus.embeddings(), &indices);
        Self::new(x, &artists)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn classes(&self) -> &[ArtistId] {
        &self.classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn x(&self) -> ArrayView2<'_, f32> {
        self.x.view()
    }
}

/// Per-example sampling weight `1 / |class|`, so every class is drawn
/// equally often in expectation.
pub fn class_sampling_weights(labels: &[usize], n_classes: usize) -> Vec<f64> {
    let mut sizes = vec![0usize; n_classes];
    for &l in labels {
        sizes[l] += 1;
    }
    labels.iter().map(|&l| 1.0 / sizes[l] as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Mean cross-entropy over the full training set before any update.
    pub initial_loss: f64,
    /// Same quantity after each epoch.
    pub epoch_losses: Vec<f64>,
}

const LOSS_CHUNK: usize = 4096;

fn full_loss(net: &Mlp<f32>, data: &TrainingSet) -> f64 {
    let mut total = 0.0;
    for start in (0..data.len()).step_by(LOSS_CHUNK) {
        let end = (start + LOSS_CHUNK).min(data.len());
        let x = data.x.slice(ndarray::s![start..end, ..]);
        let chunk_loss = net.loss(x, &data.labels[start..end]);
        total += f64::from(chunk_loss) * (end - start) as f64;
    }
    total / data.len() as f64
}

fn momentum_step<D: Dimension>(
    param: &mut ndarray::Array<f32, D>,
    velocity: &mut ndarray::Array<f32, D>,
    grad: &ndarray::Array<f32, D>,
    lr: f32,
    mu: f32,
) {
    Zip::from(param)
        .and(velocity)
        .and(grad)
        .for_each(|p, v, &g| {
            *v = mu * *v + g;
            *p -= lr * *v;
        });
}

/// Mini-batch SGD with momentum on softmax cross-entropy.
///
/// Each epoch draws `len` examples with replacement, weighted by inverse
/// class size, and walks them in batches. Batches run sequentially in the
/// drawn order, so results are bit-reproducible for a given seed.
pub fn train(init: Classifier, data: &TrainingSet, cfg: &TrainConfig) -> Result<(Classifier, TrainLog)> {
    cfg.validate()?;
    if init.classes() != data.classes() {
        return Err(Error::Validation(
            "classifier classes differ from training set classes".into(),
        ));
    }
    if init.input_dim() != data.dim() {
        return Err(Error::Shape {
            what: "embedding dimensionality",
            expected: init.input_dim(),
            found: data.dim(),
        });
    }
    let mut classifier = init;
    let weights = class_sampling_weights(&data.labels, data.classes.len());
    let sampler = WeightedIndex::new(&weights)
        .map_err(|e| Error::Validation(format!("sampling weights: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let net = classifier.net_mut();
    let mut v_w1 = Array2::<f32>::zeros(net.w1.raw_dim());
    let mut v_b1 = Array1::<f32>::zeros(net.b1.raw_dim());
    let mut v_w2 = Array2::<f32>::zeros(net.w2.raw_dim());
    let mut v_b2 = Array1::<f32>::zeros(net.b2.raw_dim());
    let (lr, mu) = (cfg.learning_rate as f32, cfg.momentum as f32);

    let mut log = TrainLog {
        initial_loss: full_loss(net, data),
        epoch_losses: Vec::with_capacity(cfg.epochs),
    };
    let mut batch_labels = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.epochs {
        let order: Vec<usize> = (0..data.len()).map(|_| sampler.sample(&mut rng)).collect();
        for batch in order.chunks(cfg.batch_size) {
            let mut x = Array2::<f32>::zeros((batch.len(), data.dim()));
            batch_labels.clear();
            for (mut row, &i) in x.rows_mut().into_iter().zip(batch) {
                row.assign(&data.x.row(i));
                batch_labels.push(data.labels[i]);
            }
            let (_, g) = net.loss_and_gradients(x.view(), &batch_labels);
            momentum_step(&mut net.w1, &mut v_w1, &g.w1, lr, mu);
            momentum_step(&mut net.b1, &mut v_b1, &g.b1, lr, mu);
            momentum_step(&mut net.w2, &mut v_w2, &g.w2, lr, mu);
            momentum_step(&mut net.b2, &mut v_b2, &g.b2, lr, mu);
        }
        let loss = full_loss(net, data);
        log::debug!("epoch {} loss {loss:.5}", log.epoch_losses.len() + 1);
        log.epoch_losses.push(loss);
    }
    if !classifier.net().is_finite() {
        return Err(Error::Data("training diverged to non-finite parameters".into()));
    }
    Ok((classifier, log))
}

/// Initializes from `cfg.seed` and trains.
pub fn fit(data: &TrainingSet, cfg: &TrainConfig) -> Result<(Classifier, TrainLog)> {
    cfg.validate()?;
    let init = init_classifier(data.dim(), cfg.hidden_dim, data.classes().to_vec(), cfg.seed)?;
    train(init, data, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn two_clusters(n0: usize, n1: usize, seed: u64) -> TrainingSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 8;
        let mut x = Array2::<f32>::zeros((n0 + n1, d));
        let mut artists = Vec::new();
        for (i, mut row) in x.rows_mut().into_iter().enumerate() {
            let class = usize::from(i >= n0);
            for (j, v) in row.iter_mut().enumerate() {
                *v = rng.random_range(-0.1..0.1);
                if j == class {
                    *v += 1.0;
                }
            }
            let norm = row.dot(&row).sqrt();
            row.mapv_inplace(|v| v / norm);
            artists.push(ArtistId(class as u32 * 5));
        }
        TrainingSet::new(x, &artists).unwrap()
    }

    fn accuracy(c: &Classifier, data: &TrainingSet) -> f64 {
        let logits = c.net().logits(data.x());
        let hits = logits
            .rows()
            .into_iter()
            .zip(data.labels())
            .filter(|(row, &y)| super::super::argmax(row.as_slice().unwrap()) == y)
            .count();
        hits as f64 / data.len() as f64
    }

    #[test]
    fn separable_clusters_train_to_full_accuracy() {
        let data = two_clusters(300, 100, 1);
        let (c, log) = fit(&data, &TrainConfig::default()).unwrap();
        assert!(accuracy(&c, &data) >= 0.99, "accuracy {}", accuracy(&c, &data));
        assert!(log.epoch_losses[0] < log.initial_loss);
        assert_eq!(c.classes(), &[ArtistId(0), ArtistId(5)]);
    }

    #[test]
    fn training_is_reproducible() {
        let data = two_clusters(50, 30, 2);
        let cfg = TrainConfig { hidden_dim: 16, epochs: 3, batch_size: 16, seed: 4, ..TrainConfig::default() };
        let (a, la) = fit(&data, &cfg).unwrap();
        let (b, lb) = fit(&data, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        let (c, _) = fit(&data, &TrainConfig { seed: 5, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn inverse_frequency_weights_balance_classes() {
        let labels: Vec<usize> = std::iter::repeat_n(0, 100).chain(std::iter::repeat_n(1, 1000)).collect();
        let w = class_sampling_weights(&labels, 2);
        let total: f64 = w.iter().sum();
        let mass0: f64 = w[..100].iter().sum::<f64>() / total;
        let mass1: f64 = w[100..].iter().sum::<f64>() / total;
        assert!((mass0 - 0.5).abs() < 1e-12 && (mass1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn missing_artist_and_bad_config() {
        assert!(TrainingSet::new(Array2::zeros((0, 3)), &[]).is_err());
        let data = two_clusters(5, 5, 3);
        assert!(fit(&data, &TrainConfig { batch_size: 0, ..TrainConfig::default() }).is_err());
        assert!(fit(&data, &TrainConfig { momentum: 1.0, ..TrainConfig::default() }).is_err());
        let wrong = init_classifier(8, 4, vec![ArtistId(0), ArtistId(1)], 0).unwrap();
        assert!(train(wrong, &data, &TrainConfig::default()).is_err());
    }
}

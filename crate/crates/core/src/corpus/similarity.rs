use rayon::prelude::*;

use super::EmbeddingStore;
use crate::error::{Error, Result};

const RANGE_SLACK: f32 = 1e-5;

/// Image-by-concept cosine similarities, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
}

impl SimilarityMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Shape {
                what: "similarity matrix",
                expected: rows * cols,
                found: values.len(),
            });
        }
        if let Some(v) = values
            .iter()
            .find(|v| !v.is_finite() || v.abs() > 1.0 + RANGE_SLACK)
        {
            return Err(Error::Data(format!("similarity {v} outside [-1, 1]")));
        }
        Ok(SimilarityMatrix { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.values
    }
}

/// Cosine similarity of every image row against every concept row.
///
/// Each entry is computed independently (f64 accumulation, clamped to
/// `[-1, 1]`), so results do not depend on the number of worker threads.
pub fn cosine_similarities(
    images: &EmbeddingStore,
    concepts: &EmbeddingStore,
) -> Result<SimilarityMatrix> {
    if images.d() != concepts.d() {
        return Err(Error::Shape {
            what: "embedding dimensionality",
            expected: concepts.d(),
            found: images.d(),
        });
    }
    let cols = concepts.n();
    let mut values = vec![0.0f32; images.n() * cols];
    if cols > 0 {
        values
            .par_chunks_mut(cols)
            .enumerate()
            .for_each(|(i, out)| {
                let x = images.row(i);
                for (j, slot) in out.iter_mut().enumerate() {
                    let dot: f64 = x
                        .iter()
                        .zip(concepts.row(j))
                        .map(|(&a, &b)| f64::from(a) * f64::from(b))
                        .sum();
                    *slot = dot.clamp(-1.0, 1.0) as f32;
                }
            });
    }
    Ok(SimilarityMatrix {
        rows: images.n(),
        cols,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_checked_values() {
        let images = EmbeddingStore::new(2, 2, vec![0.6, 0.8, 1.0, 0.0]).unwrap();
        let concepts = EmbeddingStore::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let sims = cosine_similarities(&images, &concepts).unwrap();
        // (0.6, 0.8) . (1, 0) = 0.6
        assert!((sims.get(0, 0) - 0.6).abs() < 1e-7);
        // identical unit vectors
        assert_eq!(sims.get(1, 0), 1.0);
        // orthogonal
        assert_eq!(sims.get(1, 1), 0.0);
    }

    #[test]
    fn dimensionality_mismatch() {
        let a = EmbeddingStore::new(1, 2, vec![1.0, 0.0]).unwrap();
        let b = EmbeddingStore::new(1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(cosine_similarities(&a, &b), Err(Error::Shape { .. })));
    }

    #[test]
    fn empty_inputs() {
        let a = EmbeddingStore::empty(4).unwrap();
        let b = EmbeddingStore::new(1, 4, vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let sims = cosine_similarities(&a, &b).unwrap();
        assert_eq!((sims.rows(), sims.cols()), (0, 1));
        let sims = cosine_similarities(&b, &a).unwrap();
        assert_eq!((sims.rows(), sims.cols()), (1, 0));
    }

    #[test]
    fn out_of_range_values_rejected() {
        assert!(SimilarityMatrix::new(1, 2, vec![0.5, 1.1]).is_err());
        assert!(SimilarityMatrix::new(1, 2, vec![0.5, f32::NAN]).is_err());
        assert!(SimilarityMatrix::new(1, 2, vec![0.5, 1.000001]).is_ok());
    }
}

use ndarray::{Array1, Array2, ArrayView2, Axis, LinalgScalar};
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

/// Scalar types the perceptron can run in: `f32` for training and
/// inference, `f64` for gradient checking.
pub trait Scalar: LinalgScalar + Float + std::fmt::Debug + Send + Sync {}
impl<T: LinalgScalar + Float + std::fmt::Debug + Send + Sync> Scalar for T {}

/// Two-layer perceptron: `logits = relu(x W1 + b1) W2 + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    /// `d x h`
    pub w1: Array2<T>,
    pub b1: Array1<T>,
    /// `h x A`
    pub w2: Array2<T>,
    pub b2: Array1<T>,
}

/// Gradients with the same shapes as the parameters.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub w1: Array2<T>,
    pub b1: Array1<T>,
    pub w2: Array2<T>,
    pub b2: Array1<T>,
}

impl<T: Scalar> Mlp<T> {
    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases zero.
    pub fn init(d: usize, h: usize, classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |rows: usize, cols: usize| {
            let bound = 1.0 / (rows as f64).sqrt();
            let dist = Uniform::new(-bound, bound).expect("bound is positive");
            Array2::from_shape_fn((rows, cols), |_| T::from(dist.sample(&mut rng)).unwrap())
        };
        let w1 = draw(d, h);
        let w2 = draw(h, classes);
        Mlp {
            w1,
            b1: Array1::zeros(h),
            w2,
            b2: Array1::zeros(classes),
        }
    }

    pub fn zeros(d: usize, h: usize, classes: usize) -> Self {
        Mlp {
            w1: Array2::zeros((d, h)),
            b1: Array1::zeros(h),
            w2: Array2::zeros((h, classes)),
            b2: Array1::zeros(classes),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn classes(&self) -> usize {
        self.w2.ncols()
    }

    pub fn cast<U: Scalar>(&self) -> Mlp<U> {
        let c = |v: &T| U::from(*v).unwrap();
        Mlp {
            w1: self.w1.map(c),
            b1: self.b1.map(c),
            w2: self.w2.map(c),
            b2: self.b2.map(c),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w1.iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
            .all(|v| v.is_finite())
    }

    fn hidden_pre(&self, x: ArrayView2<'_, T>) -> Array2<T> {
        x.dot(&self.w1) + &self.b1
    }

    /// Logits for a batch (`n x d` in, `n x A` out).
    pub fn logits(&self, x: ArrayView2<'_, T>) -> Array2<T> {
        let hidden = self.hidden_pre(x).mapv(relu);
        hidden.dot(&self.w2) + &self.b2
    }

    /// Mean softmax cross-entropy over the batch.
    pub fn loss(&self, x: ArrayView2<'_, T>, labels: &[usize]) -> T {
        let logits = self.logits(x);
        let mut total = T::zero();
        for (row, &y) in logits.axis_iter(Axis(0)).zip(labels) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = row.iter().map(|&v| (v - max).exp()).fold(T::zero(), |a, b| a + b).ln() + max;
            total = total + (lse - row[y]);
        }
        total / T::from(labels.len()).unwrap()
    }

    /// Loss and analytic gradients of [`Mlp::loss`].
    pub fn loss_and_gradients(&self, x: ArrayView2<'_, T>, labels: &[usize]) -> (T, Gradients<T>) {
        let n = T::from(labels.len()).unwrap();
        let pre = self.hidden_pre(x);
        let hidden = pre.mapv(relu);
        let mut delta = hidden.dot(&self.w2) + &self.b2;

        let mut total = T::zero();
        for (mut row, &y) in delta.axis_iter_mut(Axis(0)).zip(labels) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut sum = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum = sum + *v;
            }
            total = total - (row[y] / sum).ln();
            for v in row.iter_mut() {
                *v = *v / sum / n;
            }
            row[y] = row[y] - T::one() / n;
        }

        let g_w2 = hidden.t().dot(&delta);
        let g_b2 = delta.sum_axis(Axis(0));
        let mut d_hidden = delta.dot(&self.w2.t());
        d_hidden.zip_mut_with(&pre, |g, &z| {
            if z <= T::zero() {
                *g = T::zero();
            }
        });
        let g_w1 = x.t().dot(&d_hidden);
        let g_b1 = d_hidden.sum_axis(Axis(0));
        (
            total / n,
            Gradients {
                w1: g_w1,
                b1: g_b1,
                w2: g_w2,
                b2: g_b2,
            },
        )
    }
}

fn relu<T: Float>(v: T) -> T {
    if v > T::zero() {
        v
    } else {
        T::zero()
    }
}

/// Numerically stable softmax of one logit row.
pub fn softmax<T: Float>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum = exps.iter().copied().fold(T::zero(), |a, b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn init_is_seeded_with_zero_biases() {
        let a = Mlp::<f32>::init(6, 4, 3, 11);
        let b = Mlp::<f32>::init(6, 4, 3, 11);
        let c = Mlp::<f32>::init(6, 4, 3, 12);
        assert_eq!(a, b);
        assert_ne!(a.w1, c.w1);
        assert!(a.b1.iter().all(|&v| v == 0.0) && a.b2.iter().all(|&v| v == 0.0));
        let bound = 1.0 / 6f32.sqrt();
        assert!(a.w1.iter().all(|v| v.abs() <= bound));
        assert!(a.w1.iter().any(|v| v.abs() > bound / 10.0));
    }

    #[test]
    fn hand_evaluated_logits() {
        let net = Mlp {
            w1: array![[1.0f64], [0.0]],
            b1: array![0.0],
            w2: array![[1.0, 0.0]],
            b2: array![0.0, 0.0],
        };
        let logits = net.logits(array![[1.0, 0.0]].view());
        assert_eq!(logits, array![[1.0, 0.0]]);
    }

    #[test]
    fn zero_network_is_uniform() {
        let net = Mlp::<f64>::zeros(3, 2, 4);
        let logits = net.logits(array![[0.3, -0.2, 0.9]].view());
        let p = softmax(logits.row(0).as_slice().unwrap());
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert!((net.loss(array![[0.3, -0.2, 0.9]].view(), &[2]) - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn softmax_sums_to_one_even_for_large_logits() {
        let p = softmax(&[1000.0f32, 999.0, -50.0]);
        let s: f32 = p.iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
        assert!(p.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        assert_eq!(argmax(&[0.2, 0.9, 0.1]), 1);
        assert_eq!(argmax(&[1.0, 1.0]), 0);
        assert_eq!(argmax(&[0.2 + 5.0, 0.9 + 5.0, 0.1 + 5.0]), 1);
    }
}

//! Central finite-difference check of the analytic gradients.

use ndarray::ArrayView2;

use super::mlp::Mlp;

/// Denominator floor for the relative error, so entries where both
/// gradients vanish do not divide by zero.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: (String, usize),
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Compares every analytic gradient entry with `(L(p+eps) - L(p-eps)) / 2eps`.
pub fn check_gradients(
    net: &Mlp<f64>,
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    eps: f64,
) -> GradCheckReport {
    let (_, grads) = net.loss_and_gradients(x, labels);
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: (String::new(), 0),
        checked: 0,
    };
    let mut probe = net.clone();
    let tensors: [(&str, Vec<f64>); 4] = [
        ("w1", grads.w1.iter().copied().collect()),
        ("b1", grads.b1.to_vec()),
        ("w2", grads.w2.iter().copied().collect()),
        ("b2", grads.b2.to_vec()),
    ];
    for (name, analytic) in tensors {
        for (i, &a) in analytic.iter().enumerate() {
            let original = param(&mut probe, name)[i];
            param(&mut probe, name)[i] = original + eps;
            let plus = probe.loss(x, labels);
            param(&mut probe, name)[i] = original - eps;
            let minus = probe.loss(x, labels);
            param(&mut probe, name)[i] = original;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = (name.to_string(), i);
            }
        }
    }
    report
}

fn param<'a>(net: &'a mut Mlp<f64>, name: &str) -> &'a mut [f64] {
    let slice = match name {
        "w1" => net.w1.as_slice_mut(),
        "b1" => net.b1.as_slice_mut(),
        "w2" => net.w2.as_slice_mut(),
        "b2" => net.b2.as_slice_mut(),
        _ => unreachable!("unknown parameter {name}"),
    };
    slice.expect("parameters are contiguous")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_random_networks_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..10 {
            let (d, h, a, n) = (
                rng.random_range(1..=8),
                rng.random_range(1..=8),
                rng.random_range(2..=8),
                rng.random_range(1..=6),
            );
            let mut net = Mlp::<f64>::init(d, h, a, trial);
            net.b1.mapv_inplace(|_| rng.random_range(-0.5..0.5));
            net.b2.mapv_inplace(|_| rng.random_range(-0.5..0.5));
            let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..a)).collect();
            let report = check_gradients(&net, x.view(), &labels, 1e-6);
            assert!(report.max_relative_error < 1e-3, "trial {trial}: {report:?}");
            assert_eq!(report.checked, d * h + h + h * a + a);
        }
    }
}

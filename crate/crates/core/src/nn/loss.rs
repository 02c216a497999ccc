use super::Matrix;
use crate::error::{Error, Result};

/// Prediction clamp applied before taking logarithms.
pub const BCE_CLAMP: f64 = 1e-7;

/// Binary cross-entropy, summed over features and averaged over samples.
/// Returns the loss and its gradient with respect to `y`.
pub fn bce_loss(y: &Matrix, t: &Matrix) -> Result<(f64, Matrix)> {
    y.same_shape(t, "bce_loss")?;
    let n = y.rows().max(1) as f64;
    let mut total = 0.0;
    let mut dy = Matrix::zeros(y.rows(), y.cols());
    for ((&yi, &ti), d) in y
        .as_slice()
        .iter()
        .zip(t.as_slice())
        .zip(dy.as_mut_slice())
    {
        let yc = yi.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        total -= ti * yc.ln() + (1.0 - ti) * (1.0 - yc).ln();
        *d = (yc - ti) / (yc * (1.0 - yc)) / n;
    }
    Ok((total / n, dy))
}

/// Per-sample `½‖x_t − x̂_t‖²`.
pub fn half_sq_distance(x: &Matrix, xhat: &Matrix) -> Result<Vec<f64>> {
    x.same_shape(xhat, "half_sq_distance")?;
    Ok(x
        .row_iter()
        .zip(xhat.row_iter())
        .map(|(a, b)| {
            0.5 * a
                .iter()
                .zip(b)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
        })
        .collect())
}

/// Softmax cross-entropy against integer targets, averaged over samples.
/// Returns the loss and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &Matrix, targets: &[usize]) -> Result<(f64, Matrix)> {
    if logits.rows() != targets.len() {
        return Err(Error::shape("softmax_cross_entropy", logits.rows(), targets.len()));
    }
    let n = logits.rows().max(1) as f64;
    let log_p = super::log_softmax_rows(logits);
    let mut grad = log_p.map(f64::exp);
    let mut total = 0.0;
    for (r, &c) in targets.iter().enumerate() {
        if c >= logits.cols() {
            return Err(Error::Input(format!("target {c} out of range")));
        }
        total -= log_p[(r, c)];
        grad[(r, c)] -= 1.0;
    }
    grad.map_inplace(|g| g / n);
    Ok((total / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_symmetric_point_is_log2() {
        let y = Matrix::filled(1, 1, 0.5);
        let (l, _) = bce_loss(&y, &y).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn bce_perfect_fit_is_near_zero() {
        let t = Matrix::from_rows(&[[0.0, 1.0, 1.0]]).unwrap();
        let (l, _) = bce_loss(&t, &t).unwrap();
        assert!((0.0..1e-6).contains(&l));
    }

    #[test]
    fn bce_two_entry_sum() {
        let y = Matrix::from_rows(&[[0.8, 0.3]]).unwrap();
        let t = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let (l, _) = bce_loss(&y, &t).unwrap();
        let expect = -(0.8f64.ln() + 0.7f64.ln());
        assert!((l - expect).abs() < 1e-15);
        assert!((l - 0.579_818).abs() < 1e-6);
    }

    #[test]
    fn bce_gradient_matches_finite_difference() {
        let y = Matrix::from_rows(&[[0.2, 0.6, 0.9], [0.4, 0.5, 0.05]]).unwrap();
        let t = Matrix::from_rows(&[[0.0, 1.0, 0.3], [1.0, 0.5, 0.0]]).unwrap();
        let (_, dy) = bce_loss(&y, &t).unwrap();
        let h = 1e-6;
        for i in 0..6 {
            let mut up = y.clone();
            let mut dn = y.clone();
            up.as_mut_slice()[i] += h;
            dn.as_mut_slice()[i] -= h;
            let num = (bce_loss(&up, &t).unwrap().0 - bce_loss(&dn, &t).unwrap().0) / (2.0 * h);
            assert!((num - dy.as_slice()[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn bce_shape_mismatch() {
        assert!(bce_loss(&Matrix::zeros(1, 2), &Matrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn half_sq_distance_cases() {
        let x = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        assert_eq!(half_sq_distance(&x, &x).unwrap(), vec![0.0]);
        assert_eq!(half_sq_distance(&x, &Matrix::zeros(1, 2)).unwrap(), vec![0.5]);
        let a = Matrix::from_fn(3, 4, |r, c| ((r * 4 + c) as f64).sin());
        let b = Matrix::from_fn(3, 4, |r, c| ((r + c) as f64).cos());
        let d = half_sq_distance(&a, &b).unwrap();
        for r in 0..3 {
            let mut s = 0.0;
            for c in 0..4 {
                s += (a[(r, c)] - b[(r, c)]).powi(2);
            }
            assert!((d[r] - s / 2.0).abs() < 1e-15);
        }
        assert!(half_sq_distance(&a, &Matrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn cross_entropy_gradient_is_p_minus_onehot() {
        let logits = Matrix::from_rows(&[[0.0, 0.0], [2.0, -1.0]]).unwrap();
        let (l, g) = softmax_cross_entropy(&logits, &[1, 0]).unwrap();
        assert!(l > 0.0);
        assert!((g[(0, 0)] - 0.25).abs() < 1e-15);
        assert!((g[(0, 1)] + 0.25).abs() < 1e-15);
    }
}

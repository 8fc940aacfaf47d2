//! Small numeric kernels shared by the criteria and the model.

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `(softplus(x), sigmoid(x), sigmoid(-x))` from a single exponential.
#[inline]
pub(crate) fn softplus_sigmoid(x: f64) -> (f64, f64, f64) {
    let e = (-x.abs()).exp();
    let inv = 1.0 / (1.0 + e);
    let sp = x.max(0.0) + e.ln_1p();
    if x >= 0.0 {
        (sp, inv, e * inv)
    } else {
        (sp, e * inv, inv)
    }
}

/// `ln sigmoid(x)`.
#[inline]
pub(crate) fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

pub(crate) fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four accumulators keep the loop vectorizable while the summation order
    // stays fixed.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in 4 * chunks..a.len() {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_forms_agree_with_naive_ones() {
        for &x in &[-30.0, -3.0, -0.5, 0.0, 0.5, 3.0, 30.0] {
            let s = sigmoid(x);
            assert!((s - 1.0 / (1.0 + (-x).exp())).abs() < 1e-15);
            assert!((log_sigmoid(x) - s.ln()).abs() < 1e-12);
            assert!((softplus(x) - (1.0 + x.exp()).ln()).abs() < 1e-12);
        }
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-9);
        assert!(softplus(800.0).is_finite());
    }

    #[test]
    fn fused_softplus_sigmoid_matches_separate_forms() {
        for &x in &[-800.0, -30.0, -1.5, -1e-9, 0.0, 1e-9, 2.5, 30.0, 800.0] {
            let (sp, s, t) = softplus_sigmoid(x);
            assert_eq!(sp, softplus(x));
            assert!((s - sigmoid(x)).abs() <= 1e-16 * (1.0 + sigmoid(x)));
            assert!((t - sigmoid(-x)).abs() <= 1e-16 * (1.0 + sigmoid(-x)));
        }
    }

    #[test]
    fn log_sum_exp_matches_direct_sum() {
        assert_eq!(log_sum_exp([1000.0, -1000.0].iter().copied()), 1000.0);
        let lse = log_sum_exp([1.0, 2.0, 3.0].iter().copied());
        assert!((lse - (1f64.exp() + 2f64.exp() + 3f64.exp()).ln()).abs() < 1e-12);
    }

    #[test]
    fn dot_matches_naive_sum() {
        let a: Vec<f64> = (0..11).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..11).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }
}

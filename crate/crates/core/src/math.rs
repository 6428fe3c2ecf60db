//! Scalar helpers on top of `libm` so the crate stays `no_std`.

use alloc::vec::Vec;

/// Lower clamp applied to arguments of `ln` and `sqrt` inside losses.
pub const CLAMP_FLOOR: f64 = 1e-30;

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn ln_1p(x: f64) -> f64 {
    libm::log1p(x)
}

#[inline]
pub fn exp_m1(x: f64) -> f64 {
    libm::expm1(x)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

/// `ln(1 + e^x)`, stable for large |x|.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + ln_1p(exp(-x))
    } else {
        ln_1p(exp(x))
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn inv_softplus(y: f64) -> f64 {
    // y + ln(1 - e^{-y})
    y + ln(-exp_m1(-y))
}

/// Derivative of softplus at its preimage of `y`, i.e. `sigmoid(inv_softplus(y))`.
pub fn softplus_slope_at_value(y: f64) -> f64 {
    -exp_m1(-y)
}

/// Clamped natural log. Increments `clamps` when the floor was hit.
#[inline]
pub fn ln_clamped(x: f64, clamps: &mut u64) -> f64 {
    if x < CLAMP_FLOOR {
        *clamps += 1;
        ln(CLAMP_FLOOR)
    } else {
        ln(x)
    }
}

/// Clamped square root. Increments `clamps` when the floor was hit.
#[inline]
pub fn sqrt_clamped(x: f64, clamps: &mut u64) -> f64 {
    if x < CLAMP_FLOOR {
        *clamps += 1;
        sqrt(CLAMP_FLOOR)
    } else {
        sqrt(x)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four accumulators let the optimizer vectorize the reduction.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..a.len() {
        s += a[j] * b[j];
    }
    s
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    sqrt(norm_sq(a))
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Numerically stable softmax of `logits` into `out`.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    debug_assert_eq!(logits.len(), out.len());
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = exp(l - max);
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = alloc::vec![0.0; logits.len()];
    softmax_into(logits, &mut out);
    out
}

/// Backward pass of softmax: given `probs = softmax(z)` and `g = dL/dprobs`,
/// accumulates `dL/dz` into `out`.
pub fn softmax_backward_acc(probs: &[f64], g: &[f64], out: &mut [f64]) {
    let inner = dot(probs, g);
    for ((o, &p), &gi) in out.iter_mut().zip(probs).zip(g) {
        *o += p * (gi - inner);
    }
}

/// Index of the maximum, lowest index on ties. `None` for empty input.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Index of the minimum, lowest index on ties.
pub fn argmin(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v >= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_roundtrip() {
        for &y in &[1e-6, 0.3, 1.0, 29.0, 58.0, 800.0] {
            let back = softplus(inv_softplus(y));
            assert!((back - y).abs() <= 1e-12 * y.max(1.0), "{y} -> {back}");
        }
    }

    #[test]
    fn softmax_sums_to_one_and_shifts() {
        let p = softmax(&[1.0, 2.0, 3.0]);
        let q = softmax(&[101.0, 102.0, 103.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn arg_extrema_break_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), Some(1));
        assert_eq!(argmin(&[2.0, 0.5, 0.5]), Some(1));
        assert_eq!(argmax(&[]), None);
    }

    #[test]
    fn clamps_are_counted() {
        let mut c = 0;
        assert_eq!(ln_clamped(0.0, &mut c), ln(CLAMP_FLOOR));
        let _ = sqrt_clamped(-1.0, &mut c);
        let _ = ln_clamped(2.0, &mut c);
        assert_eq!(c, 2);
    }
}

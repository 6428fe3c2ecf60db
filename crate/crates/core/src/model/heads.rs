use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::math;

/// Per class and concept, `2K` raw logits whose softmax gives the positive
/// reasoning probabilities `P(R, k | c)` (first `K`) and the negative ones
/// `P(not R, k | c)` (last `K`).
#[derive(Debug, Clone, PartialEq)]
pub struct ReasoningHead {
    pub classes: usize,
    pub concepts: usize,
    pub components: usize,
    /// `C x M x 2K` row-major.
    pub raw: Vec<f64>,
    /// Forces the negative half to probability zero (positive reasoning only).
    pub negative_masked: bool,
}

/// Original CBC reasoning: per class and component a softmax over
/// `(P(R,I|k,c), P(not R,I|k,c), P(not I|k,c))`. The component prior is uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct OriginalReasoningHead {
    pub classes: usize,
    pub components: usize,
    /// `C x K x 3` row-major.
    pub raw: Vec<f64>,
}

/// Unconstrained linear read-out of the detection vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    pub classes: usize,
    pub components: usize,
    /// `C x K` row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ReasoningHead {
    #[inline]
    pub fn width(&self) -> usize {
        2 * self.components
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.concepts == 0 || self.components == 0 {
            return Err(Error::Input("reasoning head dimensions must be positive".into()));
        }
        check_len(
            "reasoning logits",
            self.classes * self.concepts * self.width(),
            self.raw.len(),
        )?;
        if self.raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite reasoning logit".into()));
        }
        Ok(())
    }

    fn logits(&self, c: usize, i: usize) -> &[f64] {
        let w = self.width();
        let start = (c * self.concepts + i) * w;
        &self.raw[start..start + w]
    }

    /// Decodes one `(class, concept)` logit vector into `out` (length `2K`).
    pub fn decode_into(&self, c: usize, i: usize, out: &mut [f64]) {
        let k = self.components;
        let logits = self.logits(c, i);
        if self.negative_masked {
            math::softmax_into(&logits[..k], &mut out[..k]);
            out[k..].iter_mut().for_each(|o| *o = 0.0);
        } else {
            math::softmax_into(logits, out);
        }
    }

    /// All decoded probability vectors, `C x M x 2K`.
    pub fn decode_all(&self) -> Vec<f64> {
        let w = self.width();
        let mut out = vec![0.0; self.raw.len()];
        for c in 0..self.classes {
            for i in 0..self.concepts {
                let start = (c * self.concepts + i) * w;
                self.decode_into(c, i, &mut out[start..start + w]);
            }
        }
        out
    }

    /// Converts a gradient w.r.t. decoded probabilities into one w.r.t. the
    /// raw logits.
    pub(crate) fn decoded_to_raw_grad(&self, decoded: &[f64], g_decoded: &[f64]) -> Vec<f64> {
        let w = self.width();
        let k = self.components;
        let mut out = vec![0.0; self.raw.len()];
        for start in (0..self.raw.len()).step_by(w) {
            let p = &decoded[start..start + w];
            let g = &g_decoded[start..start + w];
            let o = &mut out[start..start + w];
            if self.negative_masked {
                math::softmax_backward_acc(&p[..k], &g[..k], &mut o[..k]);
            } else {
                math::softmax_backward_acc(p, g, o);
            }
        }
        out
    }
}

impl OriginalReasoningHead {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.components == 0 {
            return Err(Error::Input("reasoning head dimensions must be positive".into()));
        }
        check_len("original reasoning logits", self.classes * self.components * 3, self.raw.len())?;
        if self.raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite reasoning logit".into()));
        }
        Ok(())
    }

    /// Decoded `(P(R,I), P(not R,I), P(not I))` triples, `C x K x 3`.
    pub fn decode_all(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.raw.len()];
        for (o, r) in out.chunks_exact_mut(3).zip(self.raw.chunks_exact(3)) {
            math::softmax_into(r, o);
        }
        out
    }

    pub(crate) fn decoded_to_raw_grad(&self, decoded: &[f64], g_decoded: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.raw.len()];
        for ((o, p), g) in out
            .chunks_exact_mut(3)
            .zip(decoded.chunks_exact(3))
            .zip(g_decoded.chunks_exact(3))
        {
            math::softmax_backward_acc(p, g, o);
        }
        out
    }
}

impl LinearHead {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.components == 0 {
            return Err(Error::Input("linear head dimensions must be positive".into()));
        }
        check_len("rbf weights", self.classes * self.components, self.weights.len())?;
        check_len("rbf bias", self.classes, self.bias.len())?;
        if self.weights.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite rbf weight".into()));
        }
        Ok(())
    }
}

/// Positive (`r (.) b`) and negative (`(1 - r) (.) b`) reasoning probabilities
/// of class `c`, concept `i`.
pub fn decode_reasoning(head: &ReasoningHead, c: usize, i: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if c >= head.classes || i >= head.concepts {
        return Err(Error::Input(format!(
            "reasoning index ({c}, {i}) out of bounds for {} classes x {} concepts",
            head.classes, head.concepts
        )));
    }
    let k = head.components;
    let mut out = vec![0.0; 2 * k];
    head.decode_into(c, i, &mut out);
    let neg = out.split_off(k);
    Ok((out, neg))
}

fn check_detections(d: &[f64]) -> Result<()> {
    if let Some(v) = d.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
        return Err(Error::Input(format!("detection probability {v} outside [0, 1]")));
    }
    Ok(())
}

/// Agreement of one decoded reasoning vector with the detections:
/// `pos^T d + neg^T (1 - d)`.
#[inline]
pub(crate) fn agreement(decoded: &[f64], d: &[f64]) -> f64 {
    let k = d.len();
    let (pos, neg) = decoded.split_at(k);
    let mut s = 0.0;
    for j in 0..k {
        s += pos[j] * d[j] + neg[j] * (1.0 - d[j]);
    }
    s
}

/// Class probabilities from decoded reasoning (`C x M x 2K`) and detections;
/// also reports the winning concept of every class (lowest index on ties).
pub(crate) fn reasoning_forward(
    decoded: &[f64],
    classes: usize,
    concepts: usize,
    d: &[f64],
    out: &mut [f64],
    winners: &mut [usize],
) {
    let w = 2 * d.len();
    for c in 0..classes {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for i in 0..concepts {
            let start = (c * concepts + i) * w;
            let p = agreement(&decoded[start..start + w], d);
            if p > best {
                best = p;
                arg = i;
            }
        }
        out[c] = best;
        winners[c] = arg;
    }
}

/// Class probabilities of the reasoning head for detections `d`.
pub fn cbc_forward(d: &[f64], head: &ReasoningHead) -> Result<Vec<f64>> {
    check_len("detections", head.components, d.len())?;
    check_detections(d)?;
    let decoded = head.decode_all();
    let mut out = vec![0.0; head.classes];
    let mut winners = vec![0; head.classes];
    reasoning_forward(&decoded, head.classes, head.concepts, d, &mut out, &mut winners);
    Ok(out)
}

/// Original CBC output: agreement normalized by the non-indefinite mass with
/// a uniform component prior. `decoded` is `C x K x 3`; `denominators`
/// receives the per-class normalizer.
pub(crate) fn original_forward(
    decoded: &[f64],
    classes: usize,
    d: &[f64],
    out: &mut [f64],
    denominators: &mut [f64],
) -> Result<()> {
    let k = d.len();
    for c in 0..classes {
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..k {
            let t = &decoded[(c * k + j) * 3..(c * k + j) * 3 + 3];
            num += t[0] * d[j] + t[1] * (1.0 - d[j]);
            den += t[0] + t[1];
        }
        if !(den > 0.0) {
            return Err(Error::Numerical(format!(
                "class {c} has only indefinite reasoning (zero normalizer)"
            )));
        }
        out[c] = num / den;
        denominators[c] = den;
    }
    Ok(())
}

/// Original CBC class probabilities for detections `d`.
pub fn original_cbc_forward(d: &[f64], head: &OriginalReasoningHead) -> Result<Vec<f64>> {
    check_len("detections", head.components, d.len())?;
    check_detections(d)?;
    original_cbc_forward_decoded(d, &head.decode_all(), head.classes)
}

/// Same as [`original_cbc_forward`] but on already decoded triples.
pub fn original_cbc_forward_decoded(d: &[f64], decoded: &[f64], classes: usize) -> Result<Vec<f64>> {
    check_len("original reasoning", classes * d.len() * 3, decoded.len())?;
    let mut out = vec![0.0; classes];
    let mut den = vec![0.0; classes];
    original_forward(decoded, classes, d, &mut out, &mut den)?;
    Ok(out)
}

/// `weights d + bias`, unnormalized.
pub fn rbf_forward(d: &[f64], weights: &[f64], bias: &[f64]) -> Result<Vec<f64>> {
    let classes = bias.len();
    check_len("rbf weights", classes * d.len(), weights.len())?;
    let mut out = vec![0.0; classes];
    linear_forward(weights, bias, d, &mut out);
    Ok(out)
}

#[inline]
pub(crate) fn linear_forward(weights: &[f64], bias: &[f64], d: &[f64], out: &mut [f64]) {
    for ((o, row), b) in out.iter_mut().zip(weights.chunks_exact(d.len())).zip(bias) {
        *o = math::dot(row, d) + b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn head_from_decoded(decoded: &[f64], classes: usize, concepts: usize, k: usize) -> ReasoningHead {
        // ln of a probability vector is a valid logit vector; zeros become -inf
        // which softmax maps back to exact zeros.
        ReasoningHead {
            classes,
            concepts,
            components: k,
            raw: decoded.iter().map(|p| math::ln(*p)).collect(),
            negative_masked: false,
        }
    }

    #[test]
    fn decode_examples() {
        let head = ReasoningHead {
            classes: 1,
            concepts: 1,
            components: 2,
            raw: vec![0.3; 4],
            negative_masked: false,
        };
        let (pos, neg) = decode_reasoning(&head, 0, 0).unwrap();
        for p in pos.iter().chain(&neg) {
            assert_abs_diff_eq!(*p, 0.25, epsilon = 1e-15);
        }

        let masked = ReasoningHead {
            negative_masked: true,
            ..head.clone()
        };
        let (pos, neg) = decode_reasoning(&masked, 0, 0).unwrap();
        assert_eq!(neg, vec![0.0, 0.0]);
        assert_abs_diff_eq!(pos[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(pos[1], 0.5, epsilon = 1e-15);

        let skew = ReasoningHead {
            raw: vec![2f64.ln(), 0.0, 0.0, 0.0],
            ..head.clone()
        };
        let (pos, neg) = decode_reasoning(&skew, 0, 0).unwrap();
        let all: Vec<f64> = pos.into_iter().chain(neg).collect();
        for (a, b) in all.iter().zip([0.4, 0.2, 0.2, 0.2]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        assert!(decode_reasoning(&head, 1, 0).is_err());
    }

    #[test]
    fn cbc_forward_examples() {
        let crisp = head_from_decoded(&[1.0, 0.0], 1, 1, 1);
        assert_eq!(cbc_forward(&[1.0], &crisp).unwrap(), vec![1.0]);

        let mixed = head_from_decoded(&[0.5, 0.0, 0.0, 0.5], 1, 1, 2);
        assert_abs_diff_eq!(cbc_forward(&[0.8, 0.3], &mixed).unwrap()[0], 0.75, epsilon = 1e-15);

        // r = 1/2: positive and negative halves coincide
        let b = [0.1, 0.6, 0.3];
        let half: Vec<f64> = b.iter().chain(&b).map(|v| v / 2.0).collect();
        let head = head_from_decoded(&half, 1, 1, 3);
        for d in [[0.0, 0.0, 0.0], [1.0, 0.2, 0.9], [0.4, 0.4, 0.1]] {
            assert_abs_diff_eq!(cbc_forward(&d, &head).unwrap()[0], 0.5, epsilon = 1e-12);
        }

        assert!(cbc_forward(&[1.2], &crisp).is_err());
    }

    #[test]
    fn multi_concept_takes_the_max() {
        let decoded = [1.0, 0.0, 0.0, 1.0];
        let head = head_from_decoded(&decoded, 1, 2, 1);
        assert_abs_diff_eq!(cbc_forward(&[0.3], &head).unwrap()[0], 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(cbc_forward(&[0.9], &head).unwrap()[0], 0.9, epsilon = 1e-15);
    }

    #[test]
    fn original_forward_examples() {
        // (P(R,I), P(not R,I), P(not I)) = (1, 0, 0) for every k
        let decoded = [1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let p = original_cbc_forward_decoded(&[1.0, 1.0], &decoded, 1).unwrap();
        assert_abs_diff_eq!(p[0], 1.0, epsilon = 1e-15);

        let decoded = [0.4, 0.1, 0.5];
        let p = original_cbc_forward_decoded(&[0.9], &decoded, 1).unwrap();
        assert_abs_diff_eq!(p[0], 0.74, epsilon = 1e-12);

        let indefinite = [0.0, 0.0, 1.0];
        assert!(matches!(
            original_cbc_forward_decoded(&[0.5], &indefinite, 1),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn original_forward_ignores_scaling() {
        let decoded = [0.4, 0.1, 0.5, 0.2, 0.6, 0.2];
        let scaled: Vec<f64> = decoded
            .chunks(3)
            .flat_map(|t| [0.5 * t[0], 0.5 * t[1], 1.0 - 0.5 * (t[0] + t[1])])
            .collect();
        let d = [0.35, 0.8];
        let a = original_cbc_forward_decoded(&d, &decoded, 1).unwrap()[0];
        let b = original_cbc_forward_decoded(&d, &scaled, 1).unwrap()[0];
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn rbf_examples() {
        assert_eq!(rbf_forward(&[0.3, 0.9], &[0.0; 4], &[0.5, -1.0]).unwrap(), vec![0.5, -1.0]);
        assert_eq!(rbf_forward(&[0.3, 0.9], &[0.0, 1.0], &[0.0]).unwrap(), vec![0.9]);
        assert_abs_diff_eq!(
            rbf_forward(&[0.5, 0.5], &[2.0, -1.0], &[0.1]).unwrap()[0],
            0.6,
            epsilon = 1e-15
        );
    }
}

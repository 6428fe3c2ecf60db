//! Training losses. Robust losses are negated clipped bounds so that every
//! objective is minimized.

use alloc::format;

use crate::certification::{self, KappaRule};
use crate::error::{Error, Result};
use crate::math;
use crate::model::{Decoded, Head, HeadKind, Model, Workspace};

/// Default weight of the misclassified branch of [`LossKind::RobustSquared`].
pub const DEFAULT_LAMBDA: f64 = 0.09;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Margin { gamma: f64 },
    Glvq,
    CrossEntropy,
    RobustDelta { gamma: f64 },
    RobustSquared { gamma: f64, lambda: f64 },
    LogLikelihoodRatio,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Margin { .. } => "margin",
            Self::Glvq => "glvq",
            Self::CrossEntropy => "cross_entropy",
            Self::RobustDelta { .. } => "robust_delta",
            Self::RobustSquared { .. } => "robust_squared",
            Self::LogLikelihoodRatio => "log_likelihood_ratio",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Margin { gamma } if !(0.0..=1.0).contains(&gamma) => {
                Err(Error::Config(format!("margin gamma {gamma} outside [0, 1]")))
            }
            Self::RobustDelta { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                Err(Error::Config(format!("robust gamma {gamma} must be positive")))
            }
            Self::RobustSquared { gamma, lambda } => {
                if !(gamma > 0.0 && gamma.is_finite()) {
                    return Err(Error::Config(format!("robust gamma {gamma} must be positive")));
                }
                if !(lambda > 0.0 && lambda.is_finite()) {
                    return Err(Error::Config(format!("lambda {lambda} must be positive")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Rejects loss/head/distance pairings that are not defined.
    pub fn check_compatible(&self, model: &Model) -> Result<()> {
        self.validate()?;
        let head = model.head_kind();
        let kind = model.components.kind;
        let bad = |why: &str| {
            Err(Error::Config(format!(
                "{} loss cannot train a {} head with {} distance: {why}",
                self.name(),
                head.name(),
                kind.name()
            )))
        };
        match self {
            Self::Margin { .. } => match head {
                HeadKind::Cbc | HeadKind::OriginalCbc | HeadKind::RbfNorm => Ok(()),
                _ => bad("the margin loss needs probability outputs"),
            },
            Self::Glvq => match head {
                HeadKind::Glvq => Ok(()),
                _ => bad("the GLVQ loss needs prototypes"),
            },
            Self::CrossEntropy => match head {
                HeadKind::Glvq => bad("GLVQ heads are trained with the GLVQ loss"),
                _ => Ok(()),
            },
            Self::RobustDelta { .. } | Self::RobustSquared { .. } => {
                if !head.has_reasoning() {
                    return bad("robust losses need a reasoning head");
                }
                KappaRule::for_kind(kind, 1.0)?;
                let squared = matches!(self, Self::RobustSquared { .. });
                if kind.is_squared() != squared {
                    return bad("robust_delta needs a non-squared distance, robust_squared a squared one");
                }
                Ok(())
            }
            Self::LogLikelihoodRatio => match model.head.reasoning() {
                Some(h) if h.negative_masked => Ok(()),
                _ => bad("the log-likelihood ratio needs positive-only reasoning"),
            },
        }
    }
}

/// `max(max_{c != y} p_c - p_y + gamma, 0)`.
pub fn margin_loss(p: &[f64], y: usize, gamma: f64) -> f64 {
    let rival = best_rival(p, y).map_or(f64::NEG_INFINITY, |c| p[c]);
    (rival - p[y] + gamma).max(0.0)
}

/// `(d+ - d-) / (d+ + d-)`, negative iff the sample is correctly classified.
pub fn glvq_loss(d_plus: f64, d_minus: f64) -> Result<f64> {
    let s = d_plus + d_minus;
    if !(s > 0.0) {
        return Err(Error::Numerical("GLVQ loss with both distances zero".into()));
    }
    Ok((d_plus - d_minus) / s)
}

/// `-ln softmax(scores)_y`, max-shifted.
pub fn cross_entropy(scores: &[f64], y: usize) -> f64 {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = scores.iter().map(|s| math::exp(s - m)).sum();
    m + math::ln(sum) - scores[y]
}

/// `(sigma_min / 6) * min_{c'} ln(v_y.d / v_c'.d)` with positive-only
/// reasoning vectors (`K` entries each).
pub fn llr_loss(d: &[f64], v_y: &[f64], rivals: &[&[f64]], sigma_min: f64) -> Result<f64> {
    let num = math::dot(v_y, d);
    let mut worst = f64::INFINITY;
    for v in rivals {
        let den = math::dot(v, d);
        if !(den > 0.0) || !(num > 0.0) {
            return Err(Error::Numerical("zero probability in log-likelihood ratio".into()));
        }
        worst = worst.min(math::ln(num / den));
    }
    Ok(sigma_min / 6.0 * worst)
}

/// `-min(delta, gamma)` with the model's certified bound `delta`.
pub fn robust_loss(model: &Model, x: &[f64], y: usize, gamma: f64) -> Result<f64> {
    let delta = certification::certify_sample(model, x, y)?;
    Ok(-delta.min(gamma))
}

/// The squared-distance robust loss from its ingredients: for a positive
/// gap `-min(bound, gamma)` with `bound = factor * (-beta/3 + sqrt(beta^2/9 + delta))`,
/// else `-lambda * delta`.
pub fn robust_squared_value(gap: f64, delta: f64, beta: f64, gamma: f64, lambda: f64, factor: f64) -> Result<f64> {
    if gap > 0.0 {
        if delta < 0.0 {
            return Err(Error::Internal(format!("positive gap {gap} with negative bound {delta}")));
        }
        Ok(-(factor * certification::squared_bound(delta, beta)).min(gamma))
    } else {
        Ok(-lambda * delta)
    }
}

/// Squared-distance robust loss of one sample.
pub fn robust_loss_squared(model: &Model, x: &[f64], y: usize, gamma: f64, lambda: f64) -> Result<f64> {
    let rule = KappaRule::for_kind(model.components.kind, model.components.sigma_min())?;
    if !rule.square_root_form {
        return Err(Error::Precondition("robust_loss_squared needs a squared distance".into()));
    }
    let decoded = model.decode();
    let mut ws = Workspace::new(model);
    model.forward_ws(x, &decoded, &mut ws)?;
    let gap = probability_gap(&ws.scores, y);
    let delta = certification::certify_sample(model, x, y)?;
    let beta = ws.det.distances.iter().copied().fold(0.0, f64::max);
    robust_squared_value(gap, delta, beta, gamma, lambda, rule.bound_factor)
}

/// `p_y - max_{c != y} p_c`.
pub fn probability_gap(p: &[f64], y: usize) -> f64 {
    match best_rival(p, y) {
        Some(c) => p[y] - p[c],
        None => f64::INFINITY,
    }
}

/// Highest-scoring class other than `y`, lowest index on ties.
fn best_rival(p: &[f64], y: usize) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (c, &v) in p.iter().enumerate() {
        if c != y && best.map_or(true, |b| v > p[b]) {
            best = Some(c);
        }
    }
    best
}

/// Loss of one sample after [`Model::forward_ws`]. Writes the upstream
/// gradients into the `g_*` buffers of `ws` and, for losses that act on the
/// reasoning directly, into `g_decoded`.
pub(crate) fn sample_loss(
    model: &Model,
    decoded: &Decoded,
    ws: &mut Workspace,
    y: usize,
    loss: LossKind,
    g_decoded: Option<&mut [f64]>,
    clamps: &mut u64,
) -> Result<f64> {
    match loss {
        LossKind::Margin { gamma } => {
            let Some(c) = best_rival(&ws.scores, y) else {
                return Ok(0.0);
            };
            let value = ws.scores[c] - ws.scores[y] + gamma;
            if value <= 0.0 {
                return Ok(0.0);
            }
            ws.g_scores[c] += 1.0;
            ws.g_scores[y] -= 1.0;
            Ok(value)
        }
        LossKind::CrossEntropy => {
            let m = ws.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (g, s) in ws.g_scores.iter_mut().zip(&ws.scores) {
                *g = math::exp(s - m);
                sum += *g;
            }
            for g in ws.g_scores.iter_mut() {
                *g /= sum;
            }
            ws.g_scores[y] -= 1.0;
            Ok(m + math::ln(sum) - ws.scores[y])
        }
        LossKind::Glvq => {
            // scores are negated distances
            let Some(c) = best_rival(&ws.scores, y) else {
                return Ok(-1.0);
            };
            let (dp, dm) = (-ws.scores[y], -ws.scores[c]);
            let s = dp + dm;
            if !(s > 0.0) {
                return Err(Error::Numerical("GLVQ loss with both distances zero".into()));
            }
            // d/d(d+) = 2 d- / s^2, d/d(d-) = -2 d+ / s^2; scores are -d
            ws.g_scores[y] -= 2.0 * dm / (s * s);
            ws.g_scores[c] += 2.0 * dp / (s * s);
            Ok((dp - dm) / s)
        }
        LossKind::LogLikelihoodRatio => {
            let Some(c) = best_rival(&ws.scores, y) else {
                return Ok(0.0);
            };
            let sigma_min = model.components.sigma_min();
            let kappa = sigma_min / 6.0;
            let ratio = math::ln_clamped(ws.scores[y], clamps) - math::ln_clamped(ws.scores[c], clamps);
            ws.g_scores[y] -= kappa / ws.scores[y].max(math::CLAMP_FLOOR);
            ws.g_scores[c] += kappa / ws.scores[c].max(math::CLAMP_FLOOR);
            ws.g_sigma[model.components.sigma_min_index()] -= ratio / 6.0;
            Ok(-kappa * ratio)
        }
        LossKind::RobustDelta { gamma } => robust_sample(model, decoded, ws, y, gamma, None, g_decoded),
        LossKind::RobustSquared { gamma, lambda } => {
            robust_sample(model, decoded, ws, y, gamma, Some(lambda), g_decoded)
        }
    }
}

fn robust_sample(
    model: &Model,
    decoded: &Decoded,
    ws: &mut Workspace,
    y: usize,
    gamma: f64,
    lambda: Option<f64>,
    g_decoded: Option<&mut [f64]>,
) -> Result<f64> {
    let (Head::Cbc(h) | Head::RbfNorm(h), Decoded::Reasoning(p)) = (&model.head, decoded) else {
        return Err(Error::Config("robust losses need a reasoning head".into()));
    };
    let cs = &model.components;
    let sigma_index = cs.sigma_min_index();
    let rule = KappaRule::for_kind(cs.kind, cs.temperature(sigma_index))?;
    // kappa is proportional to sigma_min
    let dkappa = rule.kappa / cs.temperature(sigma_index);
    let trace = certification::min_max_log_root(p, h.classes, h.concepts, &ws.det.detections, y)?;
    let delta = rule.kappa * trace.log_root;
    if !delta.is_finite() {
        return Ok(-gamma);
    }
    // dL/d(delta)
    let (value, g_delta) = match lambda {
        None => {
            if delta >= gamma {
                (-gamma, 0.0)
            } else {
                (-delta, -1.0)
            }
        }
        Some(lambda) => {
            let gap = probability_gap(&ws.scores, y);
            if gap > 0.0 {
                if delta < 0.0 {
                    return Err(Error::Internal(format!("positive gap {gap} with negative bound {delta}")));
                }
                let (k_beta, beta) = ws
                    .det
                    .distances
                    .iter()
                    .copied()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |a, (k, v)| if v > a.1 { (k, v) } else { a });
                let eps = rule.bound_factor * certification::squared_bound(delta, beta);
                if eps >= gamma {
                    (-gamma, 0.0)
                } else {
                    let root = math::sqrt(beta * beta / 9.0 + delta);
                    if root > 0.0 {
                        let f = rule.bound_factor;
                        ws.g_dist[k_beta] -= f * (-1.0 / 3.0 + beta / (9.0 * root));
                        (-eps, -f / (2.0 * root))
                    } else {
                        (-eps, 0.0)
                    }
                }
            } else {
                (-lambda * delta, -lambda)
            }
        }
    };
    if g_delta != 0.0 {
        ws.g_sigma[sigma_index] += g_delta * dkappa * trace.log_root;
        certification::log_root_backward(
            &trace,
            p,
            h.concepts,
            y,
            &ws.det.detections,
            g_delta * rule.kappa,
            g_decoded,
            &mut ws.g_det,
        );
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn margin_examples() {
        assert_eq!(margin_loss(&[0.9, 0.4], 0, 0.3), 0.0);
        assert_abs_diff_eq!(margin_loss(&[0.5, 0.5], 0, 0.3), 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(margin_loss(&[0.2, 0.7, 0.1], 0, 0.3), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn glvq_examples() {
        assert_abs_diff_eq!(glvq_loss(1.0, 3.0).unwrap(), -0.5);
        assert_eq!(glvq_loss(2.0, 2.0).unwrap(), 0.0);
        assert_abs_diff_eq!(glvq_loss(3.0, 1.0).unwrap(), 0.5);
        assert!(glvq_loss(0.0, 0.0).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        assert_abs_diff_eq!(cross_entropy(&[0.3; 10], 4), 10f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(cross_entropy(&[50.0, 0.0], 0), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cross_entropy(&[2.0, 0.0], 0), 0.126928, epsilon = 1e-6);
        assert!(cross_entropy(&[1000.0, -1000.0], 1).is_finite());
    }

    #[test]
    fn llr_examples() {
        let d = [0.5, 0.25];
        assert_eq!(llr_loss(&d, &[0.5, 0.5], &[&[0.5, 0.5]], 6.0).unwrap(), 0.0);
        // v_y.d = 0.8, v_c.d = 0.4
        let d = [1.0, 0.0];
        let v = llr_loss(&d, &[0.8, 0.2], &[&[0.4, 0.6]], 6.0).unwrap();
        assert_abs_diff_eq!(v, 2f64.ln(), epsilon = 1e-12);
        let e = core::f64::consts::E;
        let v = llr_loss(&d, &[0.9, 0.1], &[&[0.9 / e, 1.0 - 0.9 / e]], 6.0).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
        assert!(llr_loss(&d, &[1.0, 0.0], &[&[0.0, 1.0]], 6.0).is_err());
    }

    #[test]
    fn robust_squared_examples() {
        let v = robust_squared_value(0.1, 0.413, 2.0, 1.0, 0.09, 1.0).unwrap();
        assert_abs_diff_eq!(v, -0.2593, epsilon = 1e-4);
        let v = robust_squared_value(-0.1, -0.2, 2.0, 1.0, 0.09, 1.0).unwrap();
        assert_abs_diff_eq!(v, 0.018, epsilon = 1e-15);
        assert_eq!(robust_squared_value(0.0, 0.0, 2.0, 1.0, 0.09, 1.0).unwrap(), 0.0);
        assert!(robust_squared_value(0.1, -0.2, 2.0, 1.0, 0.09, 1.0).is_err());
    }
}

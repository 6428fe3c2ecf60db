//! Closed-form lower bounds on the perturbation needed to change a
//! prediction, and the GLVQ hypothesis margin.

use alloc::format;
use alloc::vec::Vec;

use crate::dataset::Dataset;
use crate::error::{check_len, Error, Result};
use crate::geometry::DistanceKind;
use crate::math;
use crate::model::{glvq_forward, ComponentSet, Decoded, Head, Model, ReasoningHead, Workspace};

/// Below this magnitude `A` is treated as zero.
pub const A_ZERO_TOL: f64 = 1e-12;

/// Coefficients of the worst-case probability gap
/// `f(z) = C e^{-z} + A e^{z} + B` for one pair of reasoning concepts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ContrastCoefficients {
    pub fn discriminant(&self) -> f64 {
        self.b * self.b - 4.0 * self.a * self.c
    }

    /// `f(z)`; equals the probability gap at `z = 0`.
    pub fn worst_case_gap(&self, z: f64) -> f64 {
        self.c * math::exp(-z) + self.a * math::exp(z) + self.b
    }

    /// Positive root `z~` of `A z^2 + B z + C`, computed without
    /// cancellation. Infinite when the gap can never close.
    pub fn root(&self) -> Result<f64> {
        let Self { a, b, c } = *self;
        let disc = self.discriminant();
        if disc < 0.0 || !disc.is_finite() {
            return Err(Error::Internal(format!(
                "negative discriminant {disc} for coefficients A={a}, B={b}, C={c}"
            )));
        }
        let s = math::sqrt(disc);
        let z = if a.abs() < A_ZERO_TOL {
            if b < 0.0 {
                -c / b
            } else if a < 0.0 {
                (b + s) / (-2.0 * a)
            } else {
                f64::INFINITY
            }
        } else if b >= 0.0 {
            (b + s) / (-2.0 * a)
        } else {
            2.0 * c / (s - b)
        };
        Ok(z)
    }

    /// `ln z~`, the unscaled bound contributed by this pair.
    pub fn log_root(&self) -> Result<f64> {
        let z = self.root()?;
        if !(z > 0.0) {
            return Err(Error::Internal(format!(
                "non-positive root {z} for coefficients A={}, B={}, C={}",
                self.a, self.b, self.c
            )));
        }
        Ok(math::ln(z))
    }

    /// Partial derivatives of `ln z~` w.r.t. `(A, B, C)`.
    pub(crate) fn log_root_grad(&self, z: f64) -> [f64; 3] {
        if !z.is_finite() || z <= 0.0 {
            return [0.0; 3];
        }
        let s = math::sqrt(self.discriminant());
        if s <= 0.0 {
            return [0.0; 3];
        }
        [z / s, 1.0 / s, 1.0 / (z * s)]
    }
}

/// Coefficients for the correct concept `head_y` against the rival concept
/// `head_c`, both decoded `2K` vectors (positive half, then negative half).
pub fn contrast_coefficients(d: &[f64], head_y: &[f64], head_c: &[f64]) -> ContrastCoefficients {
    let k = d.len();
    let (py, ny) = head_y.split_at(k);
    let (pc, nc) = head_c.split_at(k);
    let mut coef = ContrastCoefficients {
        a: 0.0,
        b: 0.0,
        c: 0.0,
    };
    for j in 0..k {
        coef.a -= (ny[j] + pc[j]) * d[j];
        coef.b += ny[j] - nc[j];
        coef.c += (py[j] + nc[j]) * d[j];
    }
    coef
}

/// The pair of concepts and the contrast class attaining the min-max bound.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BoundTrace {
    pub log_root: f64,
    pub root: f64,
    pub contrast: usize,
    pub concept: usize,
    pub rival_concept: usize,
    pub coefficients: ContrastCoefficients,
}

/// `min_{c'} max_i min_j ln z~(y_i, c'_j)` over the decoded reasoning.
pub(crate) fn min_max_log_root(
    decoded: &[f64],
    classes: usize,
    concepts: usize,
    d: &[f64],
    y: usize,
) -> Result<BoundTrace> {
    if classes < 2 {
        return Err(Error::Precondition("certification needs at least two classes".into()));
    }
    let w = 2 * d.len();
    let block = |c: usize, i: usize| &decoded[(c * concepts + i) * w..(c * concepts + i + 1) * w];
    let mut best: Option<BoundTrace> = None;
    for c in (0..classes).filter(|&c| c != y) {
        let mut over_i: Option<BoundTrace> = None;
        for i in 0..concepts {
            let mut over_j: Option<BoundTrace> = None;
            for j in 0..concepts {
                let coefficients = contrast_coefficients(d, block(y, i), block(c, j));
                let root = coefficients.root()?;
                let log_root = if root > 0.0 {
                    math::ln(root)
                } else {
                    f64::NEG_INFINITY
                };
                let t = BoundTrace {
                    log_root,
                    root,
                    contrast: c,
                    concept: i,
                    rival_concept: j,
                    coefficients,
                };
                if over_j.map_or(true, |o| t.log_root < o.log_root) {
                    over_j = Some(t);
                }
            }
            let t = over_j.expect("at least one concept");
            if over_i.map_or(true, |o| t.log_root > o.log_root) {
                over_i = Some(t);
            }
        }
        let t = over_i.expect("at least one concept");
        if best.map_or(true, |b| t.log_root < b.log_root) {
            best = Some(t);
        }
    }
    Ok(best.expect("at least one contrast class"))
}

/// Accumulates `scale * d(ln z~)` of the traced pair into the decoded
/// reasoning gradient and the detection gradient.
pub(crate) fn log_root_backward(
    trace: &BoundTrace,
    decoded: &[f64],
    concepts: usize,
    y: usize,
    d: &[f64],
    scale: f64,
    g_decoded: Option<&mut [f64]>,
    g_det: &mut [f64],
) {
    let [ga, gb, gc] = trace.coefficients.log_root_grad(trace.root);
    let (ga, gb, gc) = (scale * ga, scale * gb, scale * gc);
    if ga == 0.0 && gb == 0.0 && gc == 0.0 {
        return;
    }
    let k = d.len();
    let w = 2 * k;
    let oy = (y * concepts + trace.concept) * w;
    let oc = (trace.contrast * concepts + trace.rival_concept) * w;
    let (py, ny) = decoded[oy..oy + w].split_at(k);
    let (pc, nc) = decoded[oc..oc + w].split_at(k);
    for j in 0..k {
        g_det[j] += -ga * (ny[j] + pc[j]) + gc * (py[j] + nc[j]);
    }
    if let Some(g) = g_decoded {
        for j in 0..k {
            g[oy + j] += gc * d[j];
            g[oy + k + j] += -ga * d[j] + gb;
            g[oc + j] += -ga * d[j];
            g[oc + k + j] += gc * d[j] - gb;
        }
    }
}

/// How the raw bound is scaled for a distance kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaRule {
    /// Multiplier applied to the min-max log-root.
    pub kappa: f64,
    /// Squared kinds turn `delta` into `-beta/3 + sqrt(beta^2/9 + delta)`.
    pub square_root_form: bool,
    /// Final factor on the bound; `0.5` for the squared tangent distance.
    pub bound_factor: f64,
}

impl KappaRule {
    pub fn for_kind(kind: DistanceKind, sigma_min: f64) -> Result<Self> {
        let rule = |kappa, square_root_form, bound_factor| Self {
            kappa,
            square_root_form,
            bound_factor,
        };
        match kind {
            DistanceKind::Euclidean => Ok(rule(sigma_min, false, 1.0)),
            DistanceKind::Tangent => Ok(rule(sigma_min / 2.0, false, 1.0)),
            DistanceKind::SquaredEuclidean => Ok(rule(sigma_min / 3.0, true, 1.0)),
            DistanceKind::SquaredTangent => Ok(rule(sigma_min / 3.0, true, 0.5)),
            DistanceKind::ConstrainedTangent { .. } => Err(Error::Precondition(
                "no certificate is available for the constrained tangent distance".into(),
            )),
        }
    }

    /// Effective kappa of the bound for small `delta`.
    pub fn effective_kappa(&self) -> f64 {
        self.kappa * self.bound_factor
    }

    /// The final bound from `delta` (already scaled by kappa) and
    /// `beta = max_k dist_k`. `None` when the square-root form has no root.
    pub fn bound(&self, delta: f64, beta: f64) -> Option<f64> {
        if !self.square_root_form {
            return Some(self.bound_factor * delta);
        }
        if delta < 0.0 {
            return None;
        }
        Some(self.bound_factor * squared_bound(delta, beta))
    }
}

/// `-beta/3 + sqrt(beta^2/9 + delta)`.
pub fn squared_bound(delta: f64, beta: f64) -> f64 {
    let b3 = beta / 3.0;
    // b3 + sqrt(...) never cancels, so use the conjugate form
    delta / (b3 + math::sqrt(b3 * b3 + delta)).max(f64::MIN_POSITIVE)
}

fn reasoning_of(model: &Model) -> Result<&ReasoningHead> {
    model.head.reasoning().ok_or_else(|| {
        Error::Precondition(format!(
            "{} heads carry no closed-form certificate",
            model.head_kind().name()
        ))
    })
}

/// Theorem-style bound `delta = kappa * min-max ln z~` for sample `x` with
/// label `y`; positive iff correctly classified.
pub fn certify_sample(model: &Model, x: &[f64], y: usize) -> Result<f64> {
    let head = reasoning_of(model)?;
    let rule = KappaRule::for_kind(model.components.kind, model.components.sigma_min())?;
    let decoded = model.decode();
    let mut ws = Workspace::new(model);
    check_label(y, head.classes)?;
    model.forward_ws(x, &decoded, &mut ws)?;
    let Decoded::Reasoning(p) = &decoded else {
        return Err(Error::Internal("reasoning head without decoded reasoning".into()));
    };
    let t = min_max_log_root(p, head.classes, head.concepts, &ws.det.detections, y)?;
    Ok(rule.kappa * t.log_root)
}

/// The bound in input-space units using the rule of the model's distance
/// kind. `None` for misclassified samples under squared kinds.
pub fn certify_sample_scaled(model: &Model, x: &[f64], y: usize) -> Result<Option<f64>> {
    let mut c = Certifier::new(model)?;
    Ok(c.certify(x, y)?.bound)
}

/// Half the difference between the nearest wrong-class and the nearest
/// correct-class prototype distance (non-squared).
pub fn certify_glvq(x: &[f64], y: usize, cs: &ComponentSet, labels: &[usize]) -> Result<f64> {
    let (_, best) = glvq_forward(x, cs, labels)?;
    check_label(y, best.len())?;
    let plain = |e: f64| if cs.kind.is_squared() { math::sqrt(e) } else { e };
    let d_plus = plain(best[y]);
    let d_minus = best
        .iter()
        .enumerate()
        .filter(|(c, _)| *c != y)
        .map(|(_, e)| plain(*e))
        .fold(f64::INFINITY, f64::min);
    Ok(0.5 * (d_minus - d_plus))
}

fn check_label(y: usize, classes: usize) -> Result<()> {
    if y >= classes {
        return Err(Error::Input(format!("label {y} >= {classes} classes")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleCertificate {
    pub predicted: usize,
    pub correct: bool,
    /// Certified radius; `None` when no certificate exists.
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificationReport {
    pub distance: DistanceKind,
    /// `None` for GLVQ margins.
    pub kappa: Option<f64>,
    pub sigma_min: f64,
    pub samples: Vec<SampleCertificate>,
    /// `(epsilon, certified robust accuracy)` in the requested order.
    pub certified: Vec<(f64, f64)>,
}

impl CertificationReport {
    /// Fraction of samples that are correct and certified at radius `eps`.
    pub fn certified_accuracy(&self, eps: f64) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let n = self
            .samples
            .iter()
            .filter(|s| s.correct && s.bound.is_some_and(|b| b >= eps))
            .count();
        n as f64 / self.samples.len() as f64
    }

    pub fn clean_accuracy(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().filter(|s| s.correct).count() as f64 / self.samples.len() as f64
    }
}

/// Reusable certification state for one model.
pub struct Certifier<'m> {
    model: &'m Model,
    decoded: Decoded,
    ws: Workspace,
    rule: Option<KappaRule>,
}

impl<'m> Certifier<'m> {
    pub fn new(model: &'m Model) -> Result<Self> {
        let rule = match &model.head {
            Head::Glvq(_) => None,
            _ => {
                reasoning_of(model)?;
                Some(KappaRule::for_kind(model.components.kind, model.components.sigma_min())?)
            }
        };
        Ok(Self {
            model,
            decoded: model.decode(),
            ws: Workspace::new(model),
            rule,
        })
    }

    pub fn rule(&self) -> Option<KappaRule> {
        self.rule
    }

    pub fn certify(&mut self, x: &[f64], y: usize) -> Result<SampleCertificate> {
        let model = self.model;
        check_label(y, model.classes())?;
        model.forward_ws(x, &self.decoded, &mut self.ws)?;
        let predicted = math::argmax(&self.ws.scores).unwrap_or(0);
        let correct = predicted == y;
        let bound = match (&model.head, &self.decoded, self.rule) {
            (Head::Glvq(h), _, _) => {
                let plain = |j: usize| self.ws.det.distances[j];
                let mut d_plus = f64::INFINITY;
                let mut d_minus = f64::INFINITY;
                for (j, &l) in h.labels.iter().enumerate() {
                    if l == y {
                        d_plus = d_plus.min(plain(j));
                    } else {
                        d_minus = d_minus.min(plain(j));
                    }
                }
                Some(0.5 * (d_minus - d_plus))
            }
            (Head::Cbc(h) | Head::RbfNorm(h), Decoded::Reasoning(p), Some(rule)) => {
                let d = &self.ws.det.detections;
                let t = min_max_log_root(p, h.classes, h.concepts, d, y)?;
                let beta = self.ws.det.distances.iter().copied().fold(0.0, f64::max);
                rule.bound(rule.kappa * t.log_root, beta)
            }
            _ => return Err(Error::Internal("certifier state does not match the model".into())),
        };
        Ok(SampleCertificate {
            predicted,
            correct,
            bound,
        })
    }
}

/// Certifies every sample of `data` and tabulates certified robust accuracy
/// at each radius in `epsilons`.
pub fn certify_dataset(model: &Model, data: &Dataset, epsilons: &[f64]) -> Result<CertificationReport> {
    if data.is_empty() {
        return Err(Error::Input("cannot certify an empty dataset".into()));
    }
    check_len("dataset dimension", model.dim(), data.dim)?;
    let mut certifier = Certifier::new(model)?;
    let samples = data
        .iter()
        .map(|(x, y)| certifier.certify(x, y))
        .collect::<Result<Vec<_>>>()?;
    let mut report = CertificationReport {
        distance: model.components.kind,
        kappa: certifier.rule().map(|r| r.effective_kappa()),
        sigma_min: model.components.sigma_min(),
        samples,
        certified: Vec::new(),
    };
    report.certified = epsilons
        .iter()
        .map(|&e| (e, report.certified_accuracy(e)))
        .collect();
    Ok(report)
}

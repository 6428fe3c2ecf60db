//! Components, detection probabilities and the five classifier heads.

mod components;
mod heads;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

pub use components::{
    detect, init_temperature, temperature_from_stats, ComponentSet, Detection, TemperatureMode,
};
pub use heads::{
    cbc_forward, decode_reasoning, original_cbc_forward, original_cbc_forward_decoded, rbf_forward,
    LinearHead, OriginalReasoningHead, ReasoningHead,
};

use crate::error::{check_len, Error, Result};
use crate::geometry::{self, DistanceKind};
use crate::math;
use crate::rng::uniform;
use crate::training::GradientBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Cbc,
    OriginalCbc,
    Rbf,
    RbfNorm,
    Glvq,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Cbc => "cbc",
            Self::OriginalCbc => "original_cbc",
            Self::Rbf => "rbf",
            Self::RbfNorm => "rbf_norm",
            Self::Glvq => "glvq",
        }
    }

    /// Heads whose outputs are class probabilities from decoded reasoning.
    pub fn has_reasoning(self) -> bool {
        matches!(self, Self::Cbc | Self::RbfNorm)
    }
}

/// Class assignment of GLVQ prototypes.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeLabels {
    pub classes: usize,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    Cbc(ReasoningHead),
    OriginalCbc(OriginalReasoningHead),
    Rbf(LinearHead),
    /// RBF network with class-wise probability weights; a reasoning head with
    /// the negative half masked.
    RbfNorm(ReasoningHead),
    Glvq(PrototypeLabels),
}

impl Head {
    pub fn kind(&self) -> HeadKind {
        match self {
            Self::Cbc(_) => HeadKind::Cbc,
            Self::OriginalCbc(_) => HeadKind::OriginalCbc,
            Self::Rbf(_) => HeadKind::Rbf,
            Self::RbfNorm(_) => HeadKind::RbfNorm,
            Self::Glvq(_) => HeadKind::Glvq,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            Self::Cbc(h) | Self::RbfNorm(h) => h.classes,
            Self::OriginalCbc(h) => h.classes,
            Self::Rbf(h) => h.classes,
            Self::Glvq(h) => h.classes,
        }
    }

    pub fn reasoning(&self) -> Option<&ReasoningHead> {
        match self {
            Self::Cbc(h) | Self::RbfNorm(h) => Some(h),
            _ => None,
        }
    }
}

/// A shallow prototype-based classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub components: ComponentSet,
    pub head: Head,
}

/// Everything needed to draw a random model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub head: HeadKind,
    pub distance: DistanceKind,
    pub dim: usize,
    pub classes: usize,
    pub components: usize,
    pub concepts: usize,
    pub rank: usize,
    pub temperature_mode: TemperatureMode,
    pub temperature: f64,
}

/// Head parameters decoded once per batch.
#[derive(Debug, Clone)]
pub enum Decoded {
    /// `C x M x 2K` reasoning probabilities.
    Reasoning(Vec<f64>),
    /// `C x K x 3` original reasoning triples.
    Original(Vec<f64>),
    None,
}

/// Reusable per-sample buffers for forward and backward passes.
///
/// After a forward pass `scores` holds the class outputs and `winners` the
/// winning concept (reasoning heads) or prototype (GLVQ) of every class.
/// Losses write their upstream gradients into the `g_*` buffers before
/// calling the backward pass.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub det: Detection,
    pub scores: Vec<f64>,
    pub winners: Vec<usize>,
    pub(crate) denominators: Vec<f64>,
    /// dL/dscores
    pub g_scores: Vec<f64>,
    /// Direct dL/d(detection probability)
    pub g_det: Vec<f64>,
    /// Direct dL/d(non-squared distance)
    pub g_dist: Vec<f64>,
    /// Direct dL/d(temperature), per component
    pub g_sigma: Vec<f64>,
    g_squared: Vec<f64>,
    h: Vec<f64>,
}

impl Workspace {
    pub fn new(model: &Model) -> Self {
        let k = model.components.count;
        let c = model.classes();
        Self {
            det: Detection::new(&model.components),
            scores: vec![0.0; c],
            winners: vec![0; c],
            denominators: vec![0.0; c],
            g_scores: vec![0.0; c],
            g_det: vec![0.0; k],
            g_dist: vec![0.0; k],
            g_sigma: vec![0.0; k],
            g_squared: vec![0.0; k],
            h: vec![0.0; model.components.rank],
        }
    }

    fn clear_grads(&mut self) {
        for buf in [&mut self.g_scores, &mut self.g_det, &mut self.g_dist, &mut self.g_sigma] {
            buf.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

impl Model {
    pub fn head_kind(&self) -> HeadKind {
        self.head.kind()
    }

    pub fn classes(&self) -> usize {
        self.head.classes()
    }

    pub fn dim(&self) -> usize {
        self.components.dim
    }

    /// Draws every parameter uniformly from `[0, 1)`; bases are
    /// orthonormalized and temperatures set to `spec.temperature`.
    pub fn random<R: RngCore>(spec: &ModelSpec, rng: &mut R) -> Result<Self> {
        let (n, k, r, c) = (spec.dim, spec.components, spec.rank, spec.classes);
        let rank = if spec.distance.uses_subspaces() { r } else { 0 };
        let mut draw = |len: usize| -> Vec<f64> { (0..len).map(|_| uniform(rng)).collect() };
        let translations = draw(k * n);
        let mut bases = draw(k * n * rank);
        for b in bases.chunks_exact_mut((n * rank).max(1)) {
            geometry::orthonormalize_basis(b, n, rank)?;
        }
        let temperatures = match spec.temperature_mode {
            TemperatureMode::Shared => vec![spec.temperature],
            TemperatureMode::PerComponent => vec![spec.temperature; k],
        };
        let components = ComponentSet {
            kind: spec.distance,
            dim: n,
            count: k,
            rank,
            translations,
            bases,
            temperatures,
        };
        let reasoning = |raw: Vec<f64>, masked: bool| ReasoningHead {
            classes: c,
            concepts: spec.concepts,
            components: k,
            raw,
            negative_masked: masked,
        };
        let head = match spec.head {
            HeadKind::Cbc => Head::Cbc(reasoning(draw(c * spec.concepts * 2 * k), false)),
            HeadKind::RbfNorm => Head::RbfNorm(reasoning(draw(c * spec.concepts * 2 * k), true)),
            HeadKind::OriginalCbc => Head::OriginalCbc(OriginalReasoningHead {
                classes: c,
                components: k,
                raw: draw(c * k * 3),
            }),
            HeadKind::Rbf => Head::Rbf(LinearHead {
                classes: c,
                components: k,
                weights: draw(c * k),
                bias: draw(c),
            }),
            HeadKind::Glvq => Head::Glvq(PrototypeLabels {
                classes: c,
                labels: (0..k).map(|j| j % c).collect(),
            }),
        };
        let model = Self { components, head };
        model.validate()?;
        Ok(model)
    }

    /// Checks every model invariant, including that the head matches the
    /// component count.
    pub fn validate(&self) -> Result<()> {
        self.components.validate()?;
        let k = self.components.count;
        match &self.head {
            Head::Cbc(h) | Head::RbfNorm(h) => {
                h.validate()?;
                check_len("reasoning components", k, h.components)?;
                if matches!(self.head, Head::RbfNorm(_)) && !h.negative_masked {
                    return Err(Error::Input("rbf_norm heads must mask negative reasoning".into()));
                }
            }
            Head::OriginalCbc(h) => {
                h.validate()?;
                check_len("reasoning components", k, h.components)?;
            }
            Head::Rbf(h) => {
                h.validate()?;
                check_len("rbf components", k, h.components)?;
            }
            Head::Glvq(h) => {
                check_len("prototype labels", k, h.labels.len())?;
                if let Some(l) = h.labels.iter().find(|l| **l >= h.classes) {
                    return Err(Error::Input(format!("prototype label {l} >= {} classes", h.classes)));
                }
                for c in 0..h.classes {
                    if !h.labels.contains(&c) {
                        return Err(Error::Input(format!("class {c} owns no prototype")));
                    }
                }
            }
        }
        if self.classes() == 0 {
            return Err(Error::Input("a model needs at least one class".into()));
        }
        Ok(())
    }

    pub fn decode(&self) -> Decoded {
        match &self.head {
            Head::Cbc(h) | Head::RbfNorm(h) => Decoded::Reasoning(h.decode_all()),
            Head::OriginalCbc(h) => Decoded::Original(h.decode_all()),
            _ => Decoded::None,
        }
    }

    /// Forward pass for one sample into `ws`.
    pub fn forward_ws(&self, x: &[f64], decoded: &Decoded, ws: &mut Workspace) -> Result<()> {
        self.components.detect_into(x, &mut ws.det)?;
        ws.clear_grads();
        let d = &ws.det.detections;
        match (&self.head, decoded) {
            (Head::Cbc(h) | Head::RbfNorm(h), Decoded::Reasoning(p)) => {
                heads::reasoning_forward(p, h.classes, h.concepts, d, &mut ws.scores, &mut ws.winners)
            }
            (Head::OriginalCbc(h), Decoded::Original(p)) => {
                heads::original_forward(p, h.classes, d, &mut ws.scores, &mut ws.denominators)?
            }
            (Head::Rbf(h), _) => heads::linear_forward(&h.weights, &h.bias, d, &mut ws.scores),
            (Head::Glvq(h), _) => {
                let kind = self.components.kind;
                ws.scores.iter_mut().for_each(|s| *s = f64::NEG_INFINITY);
                for (j, &label) in h.labels.iter().enumerate() {
                    let s = -ws.det.exponent(kind, j);
                    if s > ws.scores[label] {
                        ws.scores[label] = s;
                        ws.winners[label] = j;
                    }
                }
            }
            _ => return Err(Error::Internal("decoded head does not match the model".into())),
        }
        Ok(())
    }

    /// Class scores (larger is better). Probabilities for reasoning heads,
    /// raw scores for RBF, negated best distances for GLVQ.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut ws = Workspace::new(self);
        self.forward_ws(x, &self.decode(), &mut ws)?;
        Ok(ws.scores)
    }

    /// Predicted class, lowest index on ties.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let scores = self.scores(x)?;
        math::argmax(&scores).ok_or_else(|| Error::Internal("empty score vector".into()))
    }

    /// Back-propagates the gradients stored in `ws` (filled by a loss after
    /// [`Model::forward_ws`]) into parameter gradients and/or the input.
    ///
    /// Reasoning gradients are accumulated w.r.t. the decoded probabilities
    /// and temperature gradients w.r.t. `sigma`; see
    /// [`GradientBundle`] for the conversion to trainable coordinates.
    pub(crate) fn backward(
        &self,
        x: &[f64],
        decoded: &Decoded,
        ws: &mut Workspace,
        mut grads: Option<&mut GradientBundle>,
        grad_input: Option<&mut [f64]>,
    ) {
        let kind = self.components.kind;
        let k_count = self.components.count;
        let mut g_exp_extra = Vec::new();
        match (&self.head, decoded) {
            (Head::Cbc(h) | Head::RbfNorm(h), Decoded::Reasoning(p)) => {
                let w = 2 * k_count;
                let d = &ws.det.detections;
                for c in 0..h.classes {
                    let g = ws.g_scores[c];
                    if g == 0.0 {
                        continue;
                    }
                    let start = (c * h.concepts + ws.winners[c]) * w;
                    let probs = &p[start..start + w];
                    for j in 0..k_count {
                        ws.g_det[j] += g * (probs[j] - probs[k_count + j]);
                    }
                    if let Some(gr) = grads.as_deref_mut() {
                        let gh = &mut gr.head[start..start + w];
                        for j in 0..k_count {
                            gh[j] += g * d[j];
                            gh[k_count + j] += g * (1.0 - d[j]);
                        }
                    }
                }
            }
            (Head::OriginalCbc(h), Decoded::Original(p)) => {
                let d = &ws.det.detections;
                for c in 0..h.classes {
                    let g = ws.g_scores[c];
                    if g == 0.0 {
                        continue;
                    }
                    let den = ws.denominators[c];
                    let out = ws.scores[c];
                    for j in 0..k_count {
                        let t = &p[(c * k_count + j) * 3..(c * k_count + j) * 3 + 3];
                        ws.g_det[j] += g * (t[0] - t[1]) / den;
                        if let Some(gr) = grads.as_deref_mut() {
                            let gh = &mut gr.head[(c * k_count + j) * 3..(c * k_count + j) * 3 + 3];
                            gh[0] += g * (d[j] - out) / den;
                            gh[1] += g * ((1.0 - d[j]) - out) / den;
                        }
                    }
                }
            }
            (Head::Rbf(h), _) => {
                let d = &ws.det.detections;
                for c in 0..h.classes {
                    let g = ws.g_scores[c];
                    if g == 0.0 {
                        continue;
                    }
                    let row = &h.weights[c * k_count..(c + 1) * k_count];
                    math::axpy(g, row, &mut ws.g_det);
                    if let Some(gr) = grads.as_deref_mut() {
                        math::axpy(g, d, &mut gr.head[c * k_count..(c + 1) * k_count]);
                        gr.bias[c] += g;
                    }
                }
            }
            (Head::Glvq(h), _) => {
                g_exp_extra = vec![0.0; k_count];
                for c in 0..h.classes {
                    g_exp_extra[ws.winners[c]] -= ws.g_scores[c];
                }
            }
            _ => {}
        }

        // detections -> exponents and temperatures
        let mut any = false;
        for j in 0..k_count {
            let sigma = self.components.temperature(j);
            let dj = ws.det.detections[j];
            let e = ws.det.exponent(kind, j);
            let gd = ws.g_det[j];
            let mut g_exp = -gd * dj / sigma;
            if let Some(extra) = g_exp_extra.get(j) {
                g_exp += extra;
            }
            let g_sigma = ws.g_sigma[j] + gd * dj * e / (sigma * sigma);
            if let Some(gr) = grads.as_deref_mut() {
                let slot = if gr.temperatures.len() == 1 { 0 } else { j };
                gr.temperatures[slot] += g_sigma;
            }
            let dist = ws.det.distances[j];
            let from_dist = if kind.is_squared() {
                g_exp
            } else {
                0.0
            };
            let via_root = if kind.is_squared() { 0.0 } else { g_exp } + ws.g_dist[j];
            let g_sq = from_dist
                + if dist > 0.0 {
                    via_root / (2.0 * dist)
                } else {
                    0.0
                };
            ws.g_squared[j] = g_sq;
            any |= g_sq != 0.0;
        }
        if !any {
            return;
        }
        let (gt, gb) = match grads {
            Some(gr) => (Some(&mut gr.components[..]), Some(&mut gr.bases[..])),
            None => (None, None),
        };
        self.components
            .backward_squared(x, &ws.det, &ws.g_squared, gt, gb, grad_input, &mut ws.h);
    }
}

/// GLVQ forward: the winning class and, per class, the distance of its best
/// prototype (squared for squared kinds). Ties go to the lowest class index.
pub fn glvq_forward(x: &[f64], cs: &ComponentSet, labels: &[usize]) -> Result<(usize, Vec<f64>)> {
    check_len("prototype labels", cs.count, labels.len())?;
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut det = Detection::new(cs);
    cs.detect_into(x, &mut det)?;
    let mut best = vec![f64::INFINITY; classes];
    for (j, &l) in labels.iter().enumerate() {
        best[l] = best[l].min(det.exponent(cs.kind, j));
    }
    if let Some(c) = best.iter().position(|b| b.is_infinite()) {
        return Err(Error::Input(format!("class {c} owns no prototype")));
    }
    let winner = math::argmin(&best).unwrap_or(0);
    Ok((winner, best))
}

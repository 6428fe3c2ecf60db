//! Analytic gradients, Adam updates, constraint projection and the
//! training loop.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_core::RngCore;

use crate::dataset::Dataset;
use crate::error::{check_len, Error, Result};
use crate::geometry::{self, DistanceKind};
use crate::math;
use crate::model::{
    init_temperature, Decoded, Head, HeadKind, Model, ModelSpec, TemperatureMode, Workspace,
};
use crate::objectives::{self, LossKind};
use crate::rng::{self, Prng};

/// Number of points used to estimate distance statistics for the initial
/// temperature.
pub const TEMPERATURE_SAMPLE: usize = 1000;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Step used by [`grad_check`].
pub const GRAD_CHECK_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub loss: LossKind,
    pub seed: u64,
    pub temperature_mode: TemperatureMode,
    pub p0: f64,
    pub concepts_per_class: usize,
    pub subspace_dim: usize,
    pub clip_components: bool,
    pub head: HeadKind,
    pub distance: DistanceKind,
    pub components: usize,
    /// Overrides the temperature derived from `p0`.
    pub initial_temperature: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 128,
            learning_rate: 0.005,
            loss: LossKind::Margin { gamma: 0.3 },
            seed: 0,
            temperature_mode: TemperatureMode::PerComponent,
            p0: 0.01,
            concepts_per_class: 2,
            subspace_dim: 12,
            clip_components: true,
            head: HeadKind::Cbc,
            distance: DistanceKind::SquaredEuclidean,
            components: 20,
            initial_temperature: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.epochs < 1 {
            return fail("epochs must be at least 1".into());
        }
        if self.batch_size < 1 {
            return fail("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(self.p0 > 0.0 && self.p0 < 1.0) {
            return fail(format!("p0 {} must lie in (0, 1)", self.p0));
        }
        if self.concepts_per_class < 1 {
            return fail("concepts_per_class must be at least 1".into());
        }
        if self.components < 1 {
            return fail("components must be at least 1".into());
        }
        if self.distance.uses_subspaces() && self.subspace_dim < 1 {
            return fail("subspace_dim must be at least 1 for tangent distances".into());
        }
        if let Some(t) = self.initial_temperature {
            if !(t > 0.0 && t.is_finite()) {
                return fail(format!("initial_temperature {t} must be positive"));
            }
        }
        self.distance.validate()?;
        self.loss.validate()
    }
}

/// Gradients mirroring every trainable tensor of a [`Model`].
///
/// `temperatures` holds gradients w.r.t. the softplus pre-activation `rho`
/// with `sigma = softplus(rho)`; `head` holds gradients w.r.t. the raw
/// reasoning logits, the original-CBC logits or the RBF weights, and `bias`
/// the RBF bias. GLVQ heads have no head parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub components: Vec<f64>,
    pub bases: Vec<f64>,
    pub temperatures: Vec<f64>,
    pub head: Vec<f64>,
    pub bias: Vec<f64>,
}

impl GradientBundle {
    pub fn zeros(model: &Model) -> Self {
        let cs = &model.components;
        let (head, bias) = match &model.head {
            Head::Cbc(h) | Head::RbfNorm(h) => (h.raw.len(), 0),
            Head::OriginalCbc(h) => (h.raw.len(), 0),
            Head::Rbf(h) => (h.weights.len(), h.bias.len()),
            Head::Glvq(_) => (0, 0),
        };
        Self {
            components: vec![0.0; cs.translations.len()],
            bases: vec![0.0; cs.bases.len()],
            temperatures: vec![0.0; cs.temperatures.len()],
            head: vec![0.0; head],
            bias: vec![0.0; bias],
        }
    }

    fn tensors(&self) -> [&[f64]; 5] {
        [&self.components, &self.bases, &self.temperatures, &self.head, &self.bias]
    }

    fn tensors_mut(&mut self) -> [&mut Vec<f64>; 5] {
        [
            &mut self.components,
            &mut self.bases,
            &mut self.temperatures,
            &mut self.head,
            &mut self.bias,
        ]
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(self.tensors().iter().map(|t| math::norm_sq(t)).sum())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn clear(&mut self) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= s);
        }
    }

    /// Converts gradients accumulated w.r.t. decoded reasoning and `sigma`
    /// into raw-logit and `rho` coordinates.
    fn finalize(&mut self, model: &Model, decoded: &Decoded) {
        match (&model.head, decoded) {
            (Head::Cbc(h) | Head::RbfNorm(h), Decoded::Reasoning(p)) => {
                self.head = h.decoded_to_raw_grad(p, &self.head);
            }
            (Head::OriginalCbc(h), Decoded::Original(p)) => {
                self.head = h.decoded_to_raw_grad(p, &self.head);
            }
            _ => {}
        }
        for (g, &s) in self.temperatures.iter_mut().zip(&model.components.temperatures) {
            *g *= math::softplus_slope_at_value(s);
        }
    }
}

/// Per-batch running totals.
#[derive(Debug, Clone, Copy, Default)]
struct BatchStats {
    loss: f64,
    correct: usize,
    clamps: u64,
}

/// Reusable buffers for loss and gradient evaluation on one model.
struct Engine {
    ws: Workspace,
}

impl Engine {
    fn new(model: &Model) -> Self {
        Self {
            ws: Workspace::new(model),
        }
    }

    /// Sums the loss over `indices` and, if `grads` is given, accumulates
    /// the un-normalized gradients (decoded / sigma coordinates).
    fn accumulate(
        &mut self,
        model: &Model,
        decoded: &Decoded,
        data: &Dataset,
        indices: &[usize],
        loss: LossKind,
        mut grads: Option<&mut GradientBundle>,
        stats: &mut BatchStats,
    ) -> Result<()> {
        let ws = &mut self.ws;
        for &i in indices {
            let x = data.point(i);
            let y = data.labels[i];
            model.forward_ws(x, decoded, ws)?;
            if math::argmax(&ws.scores) == Some(y) {
                stats.correct += 1;
            }
            let g_head = grads.as_deref_mut().map(|g| &mut g.head[..]);
            let value = objectives::sample_loss(model, decoded, ws, y, loss, g_head, &mut stats.clamps)?;
            stats.loss += value;
            if let Some(g) = grads.as_deref_mut() {
                model.backward(x, decoded, ws, Some(g), None);
            }
        }
        Ok(())
    }
}

/// Mean loss over the batch and its analytic gradient.
pub fn compute_gradients(model: &Model, batch: &Dataset, loss: LossKind) -> Result<(f64, GradientBundle)> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    check_len("batch dimension", model.dim(), batch.dim)?;
    loss.check_compatible(model)?;
    let decoded = model.decode();
    let mut grads = GradientBundle::zeros(model);
    let mut stats = BatchStats::default();
    let indices: Vec<usize> = (0..batch.len()).collect();
    Engine::new(model).accumulate(model, &decoded, batch, &indices, loss, Some(&mut grads), &mut stats)?;
    grads.finalize(model, &decoded);
    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    Ok((stats.loss / n, grads))
}

/// Mean loss over `data`.
pub fn mean_loss(model: &Model, data: &Dataset, loss: LossKind) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Input("empty dataset".into()));
    }
    loss.check_compatible(model)?;
    let decoded = model.decode();
    let mut stats = BatchStats::default();
    let indices: Vec<usize> = (0..data.len()).collect();
    Engine::new(model).accumulate(model, &decoded, data, &indices, loss, None, &mut stats)?;
    Ok(stats.loss / data.len() as f64)
}

/// Adam moments and the softplus pre-activations of the temperatures.
#[derive(Debug, Clone)]
pub struct AdamState {
    step: u64,
    m: GradientBundle,
    v: GradientBundle,
    rho: Vec<f64>,
}

impl AdamState {
    pub fn new(model: &Model) -> Self {
        Self {
            step: 0,
            m: GradientBundle::zeros(model),
            v: GradientBundle::zeros(model),
            rho: model.components.temperatures.iter().map(|&s| math::inv_softplus(s)).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

fn model_tensors_mut(model: &mut Model) -> [&mut [f64]; 4] {
    let cs = &mut model.components;
    let (head, bias): (&mut [f64], &mut [f64]) = match &mut model.head {
        Head::Cbc(h) | Head::RbfNorm(h) => (&mut h.raw, &mut []),
        Head::OriginalCbc(h) => (&mut h.raw, &mut []),
        Head::Rbf(h) => (&mut h.weights, &mut h.bias),
        Head::Glvq(_) => (&mut [], &mut []),
    };
    [&mut cs.translations, &mut cs.bases, head, bias]
}

/// One Adam update of every trainable tensor.
pub fn optimizer_step(model: &mut Model, grads: &GradientBundle, state: &mut AdamState, config: &TrainConfig) {
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - libm::pow(ADAM_BETA1, t);
    let c2 = 1.0 - libm::pow(ADAM_BETA2, t);
    let lr = config.learning_rate;
    let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= lr * (*m / c1) / (math::sqrt(*v / c2) + ADAM_EPS);
        }
    };
    let [m0, m1, m2, m3, m4] = state.m.tensors_mut();
    let [v0, v1, v2, v3, v4] = state.v.tensors_mut();
    let [translations, bases, head, bias] = model_tensors_mut(model);
    update(translations, &grads.components, m0, v0);
    update(bases, &grads.bases, m1, v1);
    update(head, &grads.head, m3, v3);
    update(bias, &grads.bias, m4, v4);
    update(&mut state.rho, &grads.temperatures, m2, v2);
    for (s, &r) in model.components.temperatures.iter_mut().zip(&state.rho) {
        *s = math::softplus(r);
    }
}

/// Clips point components into `[0, 1]` (when `clip` is set) and
/// re-orthonormalizes every subspace basis.
pub fn apply_constraints(model: &mut Model, clip: bool) -> Result<()> {
    let cs = &mut model.components;
    if clip && cs.rank == 0 {
        cs.translations.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }
    let (n, r) = (cs.dim, cs.rank);
    if r > 0 {
        for (k, b) in cs.bases.chunks_exact_mut(n * r).enumerate() {
            geometry::orthonormalize_basis(b, n, r)
                .map_err(|e| Error::Numerical(format!("basis of component {k}: {e}")))?;
        }
    }
    Ok(())
}

/// Random model for `data` following `config`, with the temperature
/// initialized from the pairwise distance statistics of a data sample.
pub fn init_model(data: &Dataset, config: &TrainConfig) -> Result<Model> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Input("cannot initialize from an empty dataset".into()));
    }
    let mut rng = rng::derived(config.seed, 0);
    let temperature = match config.initial_temperature {
        Some(t) => t,
        None => {
            let mut idx: Vec<usize> = (0..data.len()).collect();
            idx.shuffle(&mut rng);
            idx.truncate(TEMPERATURE_SAMPLE);
            let sample = data.select(&idx);
            init_temperature(&sample.points, data.dim, config.distance, config.p0)?
        }
    };
    let spec = ModelSpec {
        head: config.head,
        distance: config.distance,
        dim: data.dim,
        classes: data.classes,
        components: config.components,
        concepts: config.concepts_per_class,
        rank: config.subspace_dim,
        temperature_mode: config.temperature_mode,
        temperature,
    };
    let mut model = Model::random(&spec, &mut rng)?;
    apply_constraints(&mut model, config.clip_components)?;
    config.loss.check_compatible(&model)?;
    Ok(model)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches.
    pub loss: f64,
    /// Training accuracy of the predictions made during the epoch.
    pub accuracy: f64,
    /// Arguments of `ln`/`sqrt` clamped during the epoch.
    pub clamps: u64,
    /// Gradient norm of the last batch.
    pub grad_norm: f64,
    pub sigma_min: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Smallest distance between two component translations after
    /// training; near zero when components collapsed.
    pub min_component_distance: f64,
}

/// Trains `model` on `data`. See [`fit_with`].
pub fn fit(model: Model, data: &Dataset, config: &TrainConfig) -> Result<(Model, History)> {
    fit_with(model, data, config, |_| {})
}

/// Trains `model` with Adam for `config.epochs` epochs of shuffled
/// mini-batches, calling `on_epoch` after each epoch.
pub fn fit_with(
    mut model: Model,
    data: &Dataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Model, History)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Input("cannot train on an empty dataset".into()));
    }
    check_len("dataset dimension", model.dim(), data.dim)?;
    model.validate()?;
    config.loss.check_compatible(&model)?;
    let mut rng: Prng = rng::derived(config.seed, 1);
    let mut state = AdamState::new(&model);
    let mut engine = Engine::new(&model);
    let mut grads = GradientBundle::zeros(&model);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = History::default();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut totals = BatchStats::default();
        let mut batches = 0usize;
        let mut grad_norm = 0.0;
        for (step, batch) in order.chunks(config.batch_size).enumerate() {
            let decoded = model.decode();
            grads.clear();
            let mut stats = BatchStats::default();
            engine
                .accumulate(&model, &decoded, data, batch, config.loss, Some(&mut grads), &mut stats)
                .map_err(|e| Error::Training {
                    epoch,
                    step,
                    reason: format!("{e}"),
                })?;
            grads.finalize(&model, &decoded);
            grads.scale(1.0 / batch.len() as f64);
            grad_norm = grads.norm();
            let mean = stats.loss / batch.len() as f64;
            if !mean.is_finite() || !grads.is_finite() {
                return Err(Error::Training {
                    epoch,
                    step,
                    reason: format!(
                        "non-finite loss {mean} (gradient norm {grad_norm}, {} clamped arguments in this batch, {} earlier in the epoch)",
                        stats.clamps, totals.clamps
                    ),
                });
            }
            optimizer_step(&mut model, &grads, &mut state, config);
            apply_constraints(&mut model, config.clip_components).map_err(|e| Error::Training {
                epoch,
                step,
                reason: format!("{e}"),
            })?;
            totals.loss += mean;
            totals.correct += stats.correct;
            totals.clamps += stats.clamps;
            batches += 1;
        }
        let record = EpochRecord {
            epoch,
            loss: totals.loss / batches as f64,
            accuracy: totals.correct as f64 / data.len() as f64,
            clamps: totals.clamps,
            grad_norm,
            sigma_min: model.components.sigma_min(),
        };
        on_epoch(&record);
        history.epochs.push(record);
    }
    history.min_component_distance = min_component_distance(&model);
    Ok((model, history))
}

/// Smallest Euclidean distance between two component translations.
pub fn min_component_distance(model: &Model) -> f64 {
    let cs = &model.components;
    let mut best = f64::INFINITY;
    for a in 0..cs.count {
        for b in (a + 1)..cs.count {
            let d: f64 = cs.translation(a).iter().zip(cs.translation(b)).map(|(x, y)| (x - y) * (x - y)).sum();
            best = best.min(math::sqrt(d));
        }
    }
    best
}

/// Coordinate of a trainable parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamIndex {
    Component(usize),
    Basis(usize),
    /// Softplus pre-activation of temperature `i`.
    Temperature(usize),
    Head(usize),
    Bias(usize),
}

impl ParamIndex {
    fn read(self, g: &GradientBundle) -> f64 {
        match self {
            Self::Component(i) => g.components[i],
            Self::Basis(i) => g.bases[i],
            Self::Temperature(i) => g.temperatures[i],
            Self::Head(i) => g.head[i],
            Self::Bias(i) => g.bias[i],
        }
    }

    /// Adds `h` to the parameter in its trainable coordinates.
    fn nudge(self, model: &mut Model, h: f64) {
        let [translations, bases, head, bias] = model_tensors_mut(model);
        match self {
            Self::Component(i) => translations[i] += h,
            Self::Basis(i) => bases[i] += h,
            Self::Head(i) => head[i] += h,
            Self::Bias(i) => bias[i] += h,
            Self::Temperature(i) => {
                let s = &mut model.components.temperatures[i];
                *s = math::softplus(math::inv_softplus(*s) + h);
            }
        }
    }
}

fn all_params(g: &GradientBundle) -> Vec<ParamIndex> {
    let mut out = Vec::new();
    out.extend((0..g.components.len()).map(ParamIndex::Component));
    out.extend((0..g.bases.len()).map(ParamIndex::Basis));
    out.extend((0..g.temperatures.len()).map(ParamIndex::Temperature));
    out.extend((0..g.head.len()).map(ParamIndex::Head));
    out.extend((0..g.bias.len()).map(ParamIndex::Bias));
    out
}

/// Relative error `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Gradient magnitude below which [`grad_check`] measures absolute error.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Compares the analytic gradient of the mean loss over `batch` with
/// central differences at `n_probes` random parameter coordinates and
/// returns the worst relative error.
pub fn grad_check(model: &Model, batch: &Dataset, loss: LossKind, n_probes: usize, seed: u64) -> Result<f64> {
    let (_, grads) = compute_gradients(model, batch, loss)?;
    let params = all_params(&grads);
    if params.is_empty() {
        return Ok(0.0);
    }
    let mut rng = rng::seeded(seed);
    let mut worst: f64 = 0.0;
    let mut probe = model.clone();
    for _ in 0..n_probes {
        let p = params[(rng.next_u64() % params.len() as u64) as usize];
        let loss_at = |m: &mut Model, h: f64| -> Result<f64> {
            p.nudge(m, h);
            let v = mean_loss(m, batch, loss);
            p.nudge(m, -h);
            v
        };
        let plus = loss_at(&mut probe, GRAD_CHECK_STEP)?;
        let minus = loss_at(&mut probe, -GRAD_CHECK_STEP)?;
        probe.clone_from(model);
        let numeric = (plus - minus) / (2.0 * GRAD_CHECK_STEP);
        worst = worst.max(relative_error(p.read(&grads), numeric, GRAD_CHECK_FLOOR));
    }
    Ok(worst)
}

//! Clean accuracy, an L2 projected-gradient attack, robustness curves and
//! the divergence between learned class priors.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::certification::{certify_dataset, Certifier};
use crate::dataset::Dataset;
use crate::error::{check_len, Error, Result};
use crate::math;
use crate::model::{Decoded, Model, ReasoningHead, Workspace};
use crate::rng::{self, Prng};

/// Fraction of samples whose top score (lowest index on ties) is the label.
pub fn evaluate_accuracy(model: &Model, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Input("cannot evaluate an empty dataset".into()));
    }
    check_len("dataset dimension", model.dim(), data.dim)?;
    let decoded = model.decode();
    let mut ws = Workspace::new(model);
    let mut correct = 0usize;
    for (x, y) in data.iter() {
        model.forward_ws(x, &decoded, &mut ws)?;
        if math::argmax(&ws.scores) == Some(y) {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Settings of the L2 PGD attack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    pub epsilon: f64,
    pub steps: usize,
    pub step_size: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl AttackConfig {
    pub const DEFAULT_STEPS: usize = 100;
    pub const DEFAULT_RESTARTS: usize = 5;

    /// Defaults: 100 steps of size `2.5 * epsilon / steps`, 5 restarts.
    pub fn new(epsilon: f64) -> Self {
        Self::with_steps(epsilon, Self::DEFAULT_STEPS, Self::DEFAULT_RESTARTS)
    }

    /// Budget `epsilon` with step size `2.5 * epsilon / steps`.
    pub fn with_steps(epsilon: f64, steps: usize, restarts: usize) -> Self {
        Self {
            epsilon,
            steps,
            step_size: 2.5 * epsilon / steps.max(1) as f64,
            restarts,
            seed: 0,
        }
    }

    /// The same attack rescaled to another budget.
    pub fn at(&self, epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::with_steps(epsilon, self.steps, self.restarts)
        }
        .seeded(self.seed)
    }

    pub fn seeded(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("attack epsilon {} must be >= 0", self.epsilon)));
        }
        if self.steps < 1 || self.restarts < 1 {
            return Err(Error::Config("attack steps and restarts must be at least 1".into()));
        }
        if !(self.step_size > 0.0) && self.epsilon > 0.0 {
            return Err(Error::Config(format!("attack step size {} must be positive", self.step_size)));
        }
        Ok(())
    }
}

/// Attack state reused across samples.
pub struct Attacker<'m> {
    model: &'m Model,
    decoded: Decoded,
    ws: Workspace,
    grad: Vec<f64>,
    delta: Vec<f64>,
    point: Vec<f64>,
}

impl<'m> Attacker<'m> {
    pub fn new(model: &'m Model) -> Self {
        let n = model.dim();
        Self {
            model,
            decoded: model.decode(),
            ws: Workspace::new(model),
            grad: vec![0.0; n],
            delta: vec![0.0; n],
            point: vec![0.0; n],
        }
    }

    fn predict(&mut self, x: &[f64]) -> Result<usize> {
        self.model.forward_ws(x, &self.decoded, &mut self.ws)?;
        Ok(math::argmax(&self.ws.scores).unwrap_or(0))
    }

    /// Gradient of `max_{c != y} s_c - s_y` at `self.point` into `self.grad`;
    /// returns the predicted class.
    fn ascent_direction(&mut self, y: usize) -> Result<usize> {
        let model = self.model;
        model.forward_ws(&self.point, &self.decoded, &mut self.ws)?;
        let scores = &self.ws.scores;
        let predicted = math::argmax(scores).unwrap_or(0);
        let mut rival = None;
        for c in (0..scores.len()).filter(|&c| c != y) {
            if rival.map_or(true, |r: usize| scores[c] > scores[r]) {
                rival = Some(c);
            }
        }
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        if let Some(c) = rival {
            self.ws.g_scores[c] = 1.0;
            self.ws.g_scores[y] = -1.0;
            model.backward(&self.point, &self.decoded, &mut self.ws, None, Some(&mut self.grad));
        }
        Ok(predicted)
    }

    /// Sets `point = clip(x + delta)` after projecting `delta` onto the ball.
    fn place(&mut self, x: &[f64], epsilon: f64) {
        let n = math::norm(&self.delta);
        if n > epsilon {
            let s = epsilon / n;
            self.delta.iter_mut().for_each(|d| *d *= s);
        }
        for ((p, xi), d) in self.point.iter_mut().zip(x).zip(self.delta.iter_mut()) {
            *p = (xi + *d).clamp(0.0, 1.0);
            *d = *p - xi;
        }
    }

    /// Runs PGD with its own random stream; see [`pgd_l2`].
    pub fn attack(&mut self, x: &[f64], y: usize, cfg: &AttackConfig, rng: &mut Prng) -> Result<Option<Vec<f64>>> {
        check_len("input", self.model.dim(), x.len())?;
        if self.predict(x)? != y {
            return Ok(Some(x.to_vec()));
        }
        if cfg.epsilon <= 0.0 {
            return Ok(None);
        }
        let n = x.len();
        for _ in 0..cfg.restarts {
            self.delta = rng::in_ball(rng, n, cfg.epsilon);
            self.place(x, cfg.epsilon);
            for _ in 0..cfg.steps {
                if self.ascent_direction(y)? != y {
                    return Ok(Some(self.point.clone()));
                }
                let g = math::norm(&self.grad);
                if !(g > 0.0) || !g.is_finite() {
                    break;
                }
                math::axpy(cfg.step_size / g, &self.grad, &mut self.delta);
                self.place(x, cfg.epsilon);
            }
            if self.predict(&self.point.clone())? != y {
                return Ok(Some(self.point.clone()));
            }
        }
        Ok(None)
    }
}

/// Searches for a misclassified point within L2 distance `cfg.epsilon` of
/// `x` inside `[0, 1]^n`. Returns `x` itself when it is already
/// misclassified and `None` when no adversarial point was found.
pub fn pgd_l2(model: &Model, x: &[f64], y: usize, cfg: &AttackConfig) -> Result<Option<Vec<f64>>> {
    cfg.validate()?;
    let mut rng = rng::seeded(cfg.seed);
    Attacker::new(model).attack(x, y, cfg, &mut rng)
}

/// Fraction of samples that are correctly classified and survive PGD.
pub fn empirical_robust_accuracy(model: &Model, data: &Dataset, cfg: &AttackConfig) -> Result<f64> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Input("cannot attack an empty dataset".into()));
    }
    let mut attacker = Attacker::new(model);
    let mut survived = 0usize;
    for (i, (x, y)) in data.iter().enumerate() {
        let mut rng = rng::derived(cfg.seed, i as u64);
        if attacker.attack(x, y, cfg, &mut rng)?.is_none() {
            survived += 1;
        }
    }
    Ok(survived as f64 / data.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub epsilon: f64,
    pub clean: f64,
    pub empirical: f64,
    /// `None` for heads without certificates.
    pub certified: Option<f64>,
    /// Samples certified at this radius that the attack nevertheless broke.
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessCurve {
    pub points: Vec<CurvePoint>,
}

/// Per-sample outcome of [`robustness_outcomes`].
#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutcome {
    pub correct: bool,
    pub bound: Option<f64>,
    /// Index into the epsilon grid of the first budget at which the attack
    /// succeeded, `None` if it never did.
    pub broken_at: Option<usize>,
}

/// Certifies and attacks every sample at every budget of the ascending
/// `grid`. Once broken, a sample counts as broken at all larger budgets.
pub fn robustness_outcomes(
    model: &Model,
    data: &Dataset,
    grid: &[f64],
    cfg: &AttackConfig,
    range: core::ops::Range<usize>,
) -> Result<Vec<SampleOutcome>> {
    if grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::Input("epsilon grid must be sorted ascending".into()));
    }
    check_len("dataset dimension", model.dim(), data.dim)?;
    let mut certifier = Certifier::new(model).ok();
    let mut attacker = Attacker::new(model);
    let mut out = Vec::with_capacity(range.len());
    for i in range {
        let (x, y) = (data.point(i), data.labels[i]);
        let (correct, bound) = match certifier.as_mut() {
            Some(c) => {
                let s = c.certify(x, y)?;
                (s.correct, s.bound)
            }
            None => (attacker.predict(x)? == y, None),
        };
        let mut broken_at = None;
        if correct {
            for (e, &eps) in grid.iter().enumerate() {
                let mut rng = rng::derived(cfg.seed, i as u64);
                if attacker.attack(x, y, &cfg.at(eps), &mut rng)?.is_some() {
                    broken_at = Some(e);
                    break;
                }
            }
        } else if !grid.is_empty() {
            broken_at = Some(0);
        }
        out.push(SampleOutcome {
            correct,
            bound,
            broken_at,
        });
    }
    Ok(out)
}

/// Assembles a curve from per-sample outcomes over the same grid.
pub fn curve_from_outcomes(outcomes: &[SampleOutcome], grid: &[f64], certifiable: bool) -> RobustnessCurve {
    let n = outcomes.len().max(1) as f64;
    let clean = outcomes.iter().filter(|o| o.correct).count() as f64 / n;
    let points = grid
        .iter()
        .enumerate()
        .map(|(e, &eps)| {
            let survives = |o: &SampleOutcome| o.correct && o.broken_at.map_or(true, |b| b > e);
            let certified_at = |o: &SampleOutcome| o.correct && o.bound.is_some_and(|b| b >= eps);
            CurvePoint {
                epsilon: eps,
                clean,
                empirical: outcomes.iter().filter(|o| survives(o)).count() as f64 / n,
                certified: certifiable
                    .then(|| outcomes.iter().filter(|o| certified_at(o)).count() as f64 / n),
                violations: outcomes.iter().filter(|o| certified_at(o) && !survives(o)).count(),
            }
        })
        .collect();
    RobustnessCurve { points }
}

/// Clean, empirical and certified robust accuracy over an ascending grid.
pub fn robustness_curve(model: &Model, data: &Dataset, grid: &[f64], cfg: &AttackConfig) -> Result<RobustnessCurve> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Input("cannot evaluate an empty dataset".into()));
    }
    let outcomes = robustness_outcomes(model, data, grid, cfg, 0..data.len())?;
    Ok(curve_from_outcomes(&outcomes, grid, Certifier::new(model).is_ok()))
}

/// Certified accuracy via [`certify_dataset`], or `None` if the model has
/// no certificate.
pub fn certified_accuracy(model: &Model, data: &Dataset, epsilon: f64) -> Result<Option<f64>> {
    match Certifier::new(model) {
        Ok(_) => Ok(Some(certify_dataset(model, data, &[epsilon])?.certified[0].1)),
        Err(_) => Ok(None),
    }
}

/// Concept-averaged prior `b_c = r_c * b_c + (1 - r_c) * b_c` of class `c`.
pub fn class_prior(head: &ReasoningHead, c: usize) -> Result<Vec<f64>> {
    if c >= head.classes {
        return Err(Error::Input(format!("class {c} >= {} classes", head.classes)));
    }
    let k = head.components;
    let mut prior = vec![0.0; k];
    let mut buf = vec![0.0; 2 * k];
    for i in 0..head.concepts {
        head.decode_into(c, i, &mut buf);
        for j in 0..k {
            prior[j] += (buf[j] + buf[k + j]) / head.concepts as f64;
        }
    }
    Ok(prior)
}

/// Jensen-Shannon divergence (natural log) of two distributions.
pub fn jensen_shannon(p: &[f64], q: &[f64]) -> Result<f64> {
    check_len("distribution", p.len(), q.len())?;
    let kl = |a: f64, m: f64| if a > 0.0 { a * math::ln(a / m) } else { 0.0 };
    let mut js = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        js += 0.5 * (kl(a, m) + kl(b, m));
    }
    Ok(js.max(0.0))
}

/// Jensen-Shannon divergence between the priors of classes `c1` and `c2`.
pub fn prior_divergence(head: &ReasoningHead, c1: usize, c2: usize) -> Result<f64> {
    jensen_shannon(&class_prior(head, c1)?, &class_prior(head, c2)?)
}

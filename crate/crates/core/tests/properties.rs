use cbc_core::certification::{certify_sample, contrast_coefficients};
use cbc_core::evaluation::{jensen_shannon, pgd_l2, AttackConfig};
use cbc_core::geometry::{
    self, constrained_tangent_distance, euclidean_distance, orthonormality_defect, project_onto_subspace,
    tangent_distance, SubspaceRef,
};
use cbc_core::model::{
    cbc_forward, detect, glvq_forward, original_cbc_forward_decoded, ModelSpec, ReasoningHead,
};
use cbc_core::objectives::{glvq_loss, margin_loss, probability_gap, robust_loss};
use cbc_core::{rng, DistanceKind, Head, HeadKind, Model, TemperatureMode};
use proptest::prelude::*;
use rand::Rng;

const KINDS: [DistanceKind; 4] = [
    DistanceKind::Euclidean,
    DistanceKind::SquaredEuclidean,
    DistanceKind::Tangent,
    DistanceKind::SquaredTangent,
];

fn spec(head: HeadKind, distance: DistanceKind, concepts: usize) -> ModelSpec {
    ModelSpec {
        head,
        distance,
        dim: 6,
        classes: 3,
        components: 5,
        concepts,
        rank: 2,
        temperature_mode: TemperatureMode::PerComponent,
        temperature: 0.7,
    }
}

fn random_model(seed: u64, head: HeadKind, distance: DistanceKind, concepts: usize) -> Model {
    let mut r = rng::seeded(seed);
    let mut m = Model::random(&spec(head, distance, concepts), &mut r).unwrap();
    for t in m.components.temperatures.iter_mut() {
        *t = 0.3 + r.random::<f64>();
    }
    // spread the reasoning logits so classes are well separated
    if let Head::Cbc(h) | Head::RbfNorm(h) = &mut m.head {
        h.raw.iter_mut().for_each(|v| *v = 6.0 * *v - 3.0);
    }
    m
}

fn random_point(seed: u64, n: usize) -> Vec<f64> {
    let mut r = rng::derived(seed, 7);
    (0..n).map(|_| r.random::<f64>()).collect()
}

fn prob_vector(raw: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = raw.iter().map(|v| (3.0 * v).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn unit_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn coefficients_sum_to_the_gap(d in unit_vec(4), vy in unit_vec(8), vc in unit_vec(8)) {
        let (vy, vc) = (prob_vector(&vy), prob_vector(&vc));
        let coef = contrast_coefficients(&d, &vy, &vc);
        let p = |v: &[f64]| (0..4).map(|j| v[j] * d[j] + v[4 + j] * (1.0 - d[j])).sum::<f64>();
        prop_assert!((coef.a + coef.b + coef.c - (p(&vy) - p(&vc))).abs() < 1e-10);
        prop_assert!((coef.worst_case_gap(0.0) - (p(&vy) - p(&vc))).abs() < 1e-10);
    }

    #[test]
    fn coefficient_signs(d in unit_vec(5), vy in unit_vec(10), vc in unit_vec(10)) {
        let coef = contrast_coefficients(&d, &prob_vector(&vy), &prob_vector(&vc));
        prop_assert!(coef.a <= 0.0);
        prop_assert!(coef.c >= 0.0);
        prop_assert!((-1.0..=1.0).contains(&coef.b));
    }

    #[test]
    fn worst_case_gap_is_nonincreasing(d in unit_vec(3), vy in unit_vec(6), vc in unit_vec(6)) {
        let coef = contrast_coefficients(&d, &prob_vector(&vy), &prob_vector(&vc));
        let mut prev = f64::INFINITY;
        for i in 0..=60 {
            let f = coef.worst_case_gap(-3.0 + 0.1 * i as f64);
            prop_assert!(f <= prev + 1e-12);
            prev = f;
        }
    }

    #[test]
    fn indifferent_requiredness_gives_one_half(logits in prop::collection::vec(-4.0f64..4.0, 4), d in unit_vec(4)) {
        let mut raw = logits.clone();
        raw.extend_from_slice(&logits);
        let head = ReasoningHead { classes: 1, concepts: 1, components: 4, raw, negative_masked: false };
        let p = cbc_forward(&d, &head).unwrap();
        prop_assert!((p[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn softmax_shift_invariance(seed in any::<u64>(), shift in -5.0f64..5.0) {
        let m = random_model(seed, HeadKind::Cbc, DistanceKind::SquaredEuclidean, 2);
        let mut shifted = m.clone();
        if let Head::Cbc(h) = &mut shifted.head {
            h.raw.iter_mut().for_each(|v| *v += shift);
        }
        let x = random_point(seed, 6);
        let (a, b) = (m.scores(&x).unwrap(), shifted.scores(&x).unwrap());
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn original_cbc_scaling_invariance(raw in unit_vec(12), d in unit_vec(4), alpha in 0.05f64..1.0) {
        // one class, four components, triples (P(R,I), P(not R,I), P(not I))
        let mut decoded = Vec::new();
        for t in raw.chunks_exact(3) {
            decoded.extend(prob_vector(t));
        }
        let mut scaled = decoded.clone();
        for t in scaled.chunks_exact_mut(3) {
            t[0] *= alpha;
            t[1] *= alpha;
            t[2] = 1.0 - t[0] - t[1];
        }
        let a = original_cbc_forward_decoded(&d, &decoded, 1).unwrap();
        let b = original_cbc_forward_decoded(&d, &scaled, 1).unwrap();
        prop_assert!((a[0] - b[0]).abs() < 1e-12);
    }

    #[test]
    fn rbf_norm_equals_masked_cbc(seed in any::<u64>()) {
        let m = random_model(seed, HeadKind::RbfNorm, DistanceKind::SquaredEuclidean, 1);
        let Head::RbfNorm(h) = m.head.clone() else { unreachable!() };
        prop_assert!(h.negative_masked);
        let cbc = Model { components: m.components.clone(), head: Head::Cbc(h) };
        let x = random_point(seed, 6);
        let (a, b) = (m.scores(&x).unwrap(), cbc.scores(&x).unwrap());
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn margin_zero_iff_gap_reaches_gamma(p in unit_vec(4), y in 0usize..4, gamma in 0.0f64..1.0) {
        let zero = margin_loss(&p, y, gamma) == 0.0;
        prop_assert_eq!(zero, probability_gap(&p, y) >= gamma);
    }

    #[test]
    fn glvq_loss_bounded_and_antisymmetric(a in 1e-6f64..10.0, b in 1e-6f64..10.0) {
        let l = glvq_loss(a, b).unwrap();
        prop_assert!(l > -1.0 && l < 1.0);
        prop_assert_eq!(l, -glvq_loss(b, a).unwrap());
    }

    #[test]
    fn jsd_symmetric_and_bounded(p in unit_vec(6), q in unit_vec(6)) {
        let (p, q) = (prob_vector(&p), prob_vector(&q));
        let a = jensen_shannon(&p, &q).unwrap();
        prop_assert!((a - jensen_shannon(&q, &p).unwrap()).abs() < 1e-15);
        prop_assert!((0.0..=core::f64::consts::LN_2 + 1e-12).contains(&a));
    }

    #[test]
    fn detection_in_unit_interval(seed in any::<u64>(), kind in 0usize..4) {
        let m = random_model(seed, HeadKind::Cbc, KINDS[kind], 1);
        let x = random_point(seed, 6);
        for d in detect(&x, &m.components).unwrap() {
            prop_assert!(d > 0.0 && d <= 1.0);
        }
        let at = detect(m.components.translation(2), &m.components).unwrap();
        prop_assert_eq!(at[2], 1.0);
    }

    #[test]
    fn tangent_distance_relations(seed in any::<u64>(), gamma in 0.01f64..2.0) {
        let m = random_model(seed, HeadKind::Cbc, DistanceKind::Tangent, 1);
        let s = m.components.subspace(0);
        let x = random_point(seed, 6);
        let td = tangent_distance(&x, s).unwrap();
        prop_assert!(td >= 0.0);
        prop_assert!(td <= euclidean_distance(&x, s.translation).unwrap() + 1e-12);
        prop_assert!(constrained_tangent_distance(&x, s, gamma).unwrap() >= td - 1e-12);
        let p = project_onto_subspace(&x, s).unwrap();
        let pp = project_onto_subspace(&p, s).unwrap();
        prop_assert!(euclidean_distance(&p, &pp).unwrap() < 1e-9);
        prop_assert!(tangent_distance(&p, s).unwrap() < 1e-9);
    }

    #[test]
    fn orthonormalization_restores_drift(seed in any::<u64>()) {
        let m = random_model(seed, HeadKind::Cbc, DistanceKind::Tangent, 1);
        let mut basis = m.components.basis(0).to_vec();
        let mut r = rng::derived(seed, 3);
        let noise: Vec<f64> = (0..basis.len()).map(|_| rng::normal(&mut r)).collect();
        let scale = 0.1 / noise.iter().map(|v| v * v).sum::<f64>().sqrt();
        basis.iter_mut().zip(&noise).for_each(|(b, e)| *b += scale * e);
        geometry::orthonormalize_basis(&mut basis, 6, 2).unwrap();
        prop_assert!(orthonormality_defect(&basis, 6, 2) < 1e-6);
        let s = SubspaceRef { translation: m.components.translation(0), basis: &basis, rank: 2 };
        prop_assert!(s.validate().is_ok());
    }

    #[test]
    fn kappa_linearity(seed in any::<u64>(), t in 0.2f64..1.0, tangent in any::<bool>()) {
        let kind = if tangent { DistanceKind::Tangent } else { DistanceKind::Euclidean };
        let m = random_model(seed, HeadKind::Cbc, kind, 2);
        let x = random_point(seed, 6);
        let mut scaled = m.clone();
        scaled.components.translations.iter_mut().for_each(|v| *v *= t);
        scaled.components.temperatures.iter_mut().for_each(|v| *v *= t);
        let xs: Vec<f64> = x.iter().map(|v| v * t).collect();
        let a = certify_sample(&m, &x, 1).unwrap();
        let b = certify_sample(&scaled, &xs, 1).unwrap();
        prop_assert!((b - t * a).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn robust_loss_sign_follows_gap(seed in any::<u64>(), y in 0usize..3) {
        let m = random_model(seed, HeadKind::Cbc, DistanceKind::Euclidean, 2);
        let x = random_point(seed, 6);
        let gap = probability_gap(&m.scores(&x).unwrap(), y);
        let l = robust_loss(&m, &x, y, 1.58).unwrap();
        prop_assert_eq!((-l).signum(), gap.signum());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn bound_sign_equals_gap_sign(seed in any::<u64>(), kind in 0usize..4, y in 0usize..3) {
        let m = random_model(seed, HeadKind::Cbc, KINDS[kind], 2);
        let x = random_point(seed, 6);
        let gap = probability_gap(&m.scores(&x).unwrap(), y);
        let delta = certify_sample(&m, &x, y).unwrap();
        prop_assert_eq!(delta.signum(), gap.signum(), "delta {} gap {}", delta, gap);
    }

    #[test]
    fn crisp_cbc_matches_glvq(seed in any::<u64>(), kind in 0usize..4) {
        let mut m = random_model(seed, HeadKind::Cbc, KINDS[kind], 1);
        m.components.temperatures = vec![0.5];
        // class c is carried by component c alone
        let k = m.components.count;
        let mut raw = vec![-1e3; 3 * 2 * k];
        for c in 0..3 {
            raw[c * 2 * k + c] = 0.0;
        }
        m.head = Head::Cbc(ReasoningHead { classes: 3, concepts: 1, components: k, raw, negative_masked: false });
        let mut cs = m.components.clone();
        cs.count = 3;
        cs.translations.truncate(3 * 6);
        cs.bases.truncate(3 * 6 * cs.rank);
        let x = random_point(seed, 6);
        let (winner, _) = glvq_forward(&x, &cs, &[0, 1, 2]).unwrap();
        prop_assert_eq!(m.predict(&x).unwrap(), winner);
    }

    #[test]
    fn pgd_respects_ball_and_box(seed in any::<u64>(), eps in 0.05f64..1.5) {
        let m = random_model(seed, HeadKind::Cbc, DistanceKind::SquaredEuclidean, 2);
        let x = random_point(seed, 6);
        let y = m.predict(&x).unwrap();
        let cfg = AttackConfig::with_steps(eps, 20, 1).seeded(seed);
        if let Some(adv) = pgd_l2(&m, &x, y, &cfg).unwrap() {
            prop_assert!(euclidean_distance(&adv, &x).unwrap() <= eps * (1.0 + 1e-12));
            prop_assert!(adv.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert_ne!(m.predict(&adv).unwrap(), y);
        }
    }
}

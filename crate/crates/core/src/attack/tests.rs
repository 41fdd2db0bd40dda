use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::model::{parse_model, Aggregation, NodeSpec, Tree, SHARED_SPLITS_JSON};
use crate::testutil::{random_ensemble, RandomEnsembleConfig};

fn leaf(value: f64) -> NodeSpec {
    NodeSpec::Leaf { value }
}

fn split(feature: usize, threshold: f64, left: NodeSpec, right: NodeSpec) -> NodeSpec {
    NodeSpec::Split {
        feature,
        threshold,
        left: Box::new(left),
        right: Box::new(right),
    }
}

fn ensemble(trees: &[NodeSpec], n_features: usize) -> Ensemble {
    Ensemble::new(
        trees.iter().map(|t| Tree::from_spec(t).unwrap()).collect(),
        0.0,
        Aggregation::SumLogistic,
        n_features,
    )
    .unwrap()
}

fn all_feasible(e: &Ensemble, within: Option<&LeafBox>) -> Vec<FeasibleOC> {
    enumerate_feasible(e, within, DEFAULT_CAP)
        .unwrap()
        .collect::<Result<Vec<_>>>()
        .unwrap()
}

#[test]
fn single_tree_emits_every_leaf() {
    let t = split(
        0,
        0.5,
        split(1, 0.2, leaf(1.0), leaf(2.0)),
        split(0, 0.7, leaf(3.0), split(1, 0.9, leaf(4.0), leaf(5.0))),
    );
    let e = ensemble(&[t], 2);
    let ocs = all_feasible(&e, None);
    assert_eq!(ocs.len(), 5);
    let ids: Vec<u8> = ocs.iter().map(|f| f.oc[0]).collect::<HashSet<_>>().into_iter().collect();
    assert_eq!(ids.len(), 5);
    assert_eq!(count_feasible(&e, DEFAULT_CAP).unwrap(), 5);
}

#[test]
fn constant_trees_have_one_configuration() {
    let e = ensemble(&[leaf(0.1), leaf(0.2), leaf(0.3)], 4);
    assert_eq!(count_feasible(&e, DEFAULT_CAP).unwrap(), 1);
}

#[test]
fn independent_trees_multiply() {
    let t1 = split(0, 0.5, split(0, 0.25, leaf(0.0), leaf(0.0)), leaf(0.0));
    let t2 = split(1, 0.5, leaf(0.0), split(1, 0.6, leaf(0.0), split(1, 0.8, leaf(0.0), leaf(0.0))));
    let e = ensemble(&[t1, t2], 2);
    assert_eq!(count_feasible(&e, DEFAULT_CAP).unwrap(), 3 * 4);
}

#[test]
fn shared_splits_model_excludes_conflicting_pairs() {
    let e = parse_model(SHARED_SPLITS_JSON.as_bytes()).unwrap();
    let ocs: HashSet<Vec<u8>> = all_feasible(&e, None)
        .into_iter()
        .map(|f| f.oc.into_inner())
        .collect();
    let mut expected = HashSet::new();
    for a in 0..3u8 {
        for b in 0..4u8 {
            if !(a == 0 && b >= 2) {
                expected.insert(vec![a, b]);
            }
        }
    }
    assert_eq!(ocs, expected);
    assert_eq!(count_feasible(&e, DEFAULT_CAP).unwrap(), 10);
}

#[test]
fn enumeration_cap() {
    let t = split(0, 0.5, leaf(0.0), leaf(1.0));
    let e = ensemble(&[t.clone(), split(1, 0.5, leaf(0.0), leaf(1.0))], 2);
    assert!(matches!(
        count_feasible(&e, 3),
        Err(Error::EnumerationCapExceeded(3))
    ));
    let items: Vec<_> = enumerate_feasible(&e, None, 3).unwrap().collect();
    assert_eq!(items.len(), 4);
    assert!(items[..3].iter().all(|r| r.is_ok()));
    assert!(matches!(items[3], Err(Error::EnumerationCapExceeded(3))));
}

#[test]
fn feasible_boxes_round_trip_and_are_unique() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let e = random_ensemble(
            &mut rng,
            &RandomEnsembleConfig {
                n_trees: 4,
                n_features: 3,
                max_depth: 3,
                ..Default::default()
            },
        );
        let ocs = all_feasible(&e, None);
        let distinct: HashSet<_> = ocs.iter().map(|f| f.oc.clone()).collect();
        assert_eq!(distinct.len(), ocs.len());
        for f in &ocs {
            assert!(!f.bounds.is_empty());
            // Any point of the box realizes the configuration.
            let point: Vec<f64> = f
                .bounds
                .intervals()
                .iter()
                .map(|iv| match (iv.lo.is_finite(), iv.hi.is_finite()) {
                    (true, true) => 0.5 * (iv.lo + iv.hi),
                    (true, false) => iv.lo + 1.0,
                    (false, true) => iv.hi - 1.0,
                    (false, false) => 0.0,
                })
                .collect();
            assert_eq!(e.leaf_path(&point).unwrap(), f.oc);
            let raw = e.evaluate(&point).unwrap().raw;
            assert!((raw - f.raw_output).abs() < 1e-12);
        }
    }
}

#[test]
fn within_restricts_to_meeting_boxes() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let e = random_ensemble(
        &mut rng,
        &RandomEnsembleConfig {
            n_trees: 3,
            n_features: 2,
            max_depth: 3,
            ..Default::default()
        },
    );
    let all = all_feasible(&e, None);
    let ball = LeafBox::ball(&[0.4, 0.6], 0.1);
    let inside = all_feasible(&e, Some(&ball));
    let expected: Vec<_> = all
        .iter()
        .filter(|f| {
            f.bounds
                .intervals()
                .iter()
                .zip(ball.intervals())
                .all(|(b, r)| b.lo.max(r.lo) <= b.hi.min(r.hi))
        })
        .map(|f| f.oc.clone())
        .collect();
    let got: Vec<_> = inside.iter().map(|f| f.oc.clone()).collect();
    assert_eq!(got, expected);
}

fn one_split() -> Ensemble {
    ensemble(&[split(0, 0.5, leaf(-1.0), leaf(1.0))], 1)
}

#[test]
fn one_split_closest_from_below() {
    let e = one_split();
    let a = closest_adversarial(&e, &[0.3], &LeafBox::unit(1)).unwrap();
    assert_eq!(a.source_label, 0);
    assert_eq!(a.perturbed, vec![0.5]);
    assert!((a.linf - 0.2).abs() < 1e-15);
    assert_eq!(a.l0, 1);
    assert_eq!(a.kind, AttackKind::Closest);
    assert_eq!(e.evaluate(&a.perturbed).unwrap().label, 1);
}

#[test]
fn one_split_closest_from_above_stays_inside_open_box() {
    let e = one_split();
    let a = closest_adversarial(&e, &[0.7], &LeafBox::unit(1)).unwrap();
    assert_eq!(a.perturbed, vec![0.5f64.next_down()]);
    assert_eq!(e.evaluate(&a.perturbed).unwrap().label, 0);
    assert_eq!(a.distance, 0.7 - 0.5);
    assert!(a.linf > a.distance && a.linf - a.distance <= f64::EPSILON);
}

#[test]
fn constant_ensemble_has_no_adversarial() {
    let e = ensemble(&[leaf(1.0), leaf(0.5)], 2);
    assert!(matches!(
        closest_adversarial(&e, &[0.1, 0.2], &LeafBox::unit(2)),
        Err(Error::NoAdversarialExists)
    ));
    assert!(matches!(
        budgeted_adversarial(&e, &[0.1, 0.2], f64::INFINITY, &LeafBox::unit(2), AttackKind::Budget5x),
        Err(Error::NoAdversarialExists)
    ));
}

#[test]
fn domain_limits_attacks() {
    // Flip needs x0 >= 1.5, outside the unit domain.
    let e = ensemble(&[split(0, 1.5, leaf(-1.0), leaf(1.0))], 1);
    assert!(matches!(
        closest_adversarial(&e, &[0.2], &LeafBox::unit(1)),
        Err(Error::NoAdversarialExists)
    ));
    let a = closest_adversarial(&e, &[0.2], &LeafBox::unbounded(1)).unwrap();
    assert!((a.linf - 1.3).abs() < 1e-12);
}

#[test]
fn budget_below_closest_fails() {
    let e = one_split();
    let closest = closest_adversarial(&e, &[0.3], &LeafBox::unit(1)).unwrap();
    assert!(matches!(
        budgeted_adversarial(&e, &[0.3], closest.linf * 0.99, &LeafBox::unit(1), AttackKind::Budget2x),
        Err(Error::NoAdversarialExists)
    ));
    let b = budgeted_adversarial(&e, &[0.3], closest.linf, &LeafBox::unit(1), AttackKind::Budget2x).unwrap();
    assert!(b.linf <= closest.linf + f64::EPSILON);
    assert_eq!(b.kind, AttackKind::Budget2x);
}

#[test]
fn unbounded_budget_finds_most_confident_flip() {
    // Class 1 region x0 >= 0.5; the most confident part is x0 >= 0.9, x1 >= 0.8.
    let e = ensemble(
        &[
            split(0, 0.5, leaf(-1.0), split(0, 0.9, leaf(0.5), leaf(2.0))),
            split(1, 0.8, leaf(0.0), leaf(1.0)),
        ],
        2,
    );
    let x = [0.1, 0.1];
    let a = budgeted_adversarial(&e, &x, f64::INFINITY, &LeafBox::unit(2), AttackKind::Budget5x).unwrap();
    assert_eq!(a.oc.as_slice(), &[2, 1]);
    assert_eq!(a.perturbed, vec![0.9, 0.8]);
    let best = all_feasible(&e, Some(&LeafBox::unit(2)))
        .into_iter()
        .filter(|f| e.predict_oc(&f.oc).label == 1)
        .map(|f| f.raw_output)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(e.evaluate(&a.perturbed).unwrap().raw, best);
}

#[test]
fn budgeted_matches_enumeration_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut checked = 0;
    for _ in 0..60 {
        let cfg = RandomEnsembleConfig {
            n_trees: rng.gen_range(1..=4),
            n_features: rng.gen_range(1..=3),
            max_depth: 3,
            ..Default::default()
        };
        let e = random_ensemble(&mut rng, &cfg);
        let x: Vec<f64> = (0..cfg.n_features).map(|_| rng.gen()).collect();
        let budget = rng.gen_range(0.05..0.5);
        let source = e.evaluate(&x).unwrap().label;
        let domain = LeafBox::unit(cfg.n_features);
        let region = LeafBox::ball(&x, budget).clip(&domain);
        let oracle = all_feasible(&e, Some(&region))
            .into_iter()
            .filter(|f| e.predict_oc(&f.oc).label != source)
            .map(|f| if source == 0 { f.raw_output } else { -f.raw_output })
            .fold(f64::NEG_INFINITY, f64::max);
        match budgeted_adversarial(&e, &x, budget, &domain, AttackKind::Budget2x) {
            Ok(a) => {
                let raw = e.evaluate(&a.perturbed).unwrap().raw;
                let got = if source == 0 { raw } else { -raw };
                assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
                assert!(a.linf <= budget + 1e-15);
                assert_eq!(e.leaf_path(&a.perturbed).unwrap(), a.oc);
                checked += 1;
            }
            Err(Error::NoAdversarialExists) => assert_eq!(oracle, f64::NEG_INFINITY),
            Err(other) => panic!("{other}"),
        }
    }
    assert!(checked > 10);
}

#[test]
fn closest_witness_is_adversarial_and_minimal_among_enumerated() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..40 {
        let cfg = RandomEnsembleConfig {
            n_trees: rng.gen_range(1..=4),
            n_features: rng.gen_range(1..=3),
            max_depth: 3,
            ..Default::default()
        };
        let e = random_ensemble(&mut rng, &cfg);
        let x: Vec<f64> = (0..cfg.n_features).map(|_| rng.gen()).collect();
        let domain = LeafBox::unit(cfg.n_features);
        let source = e.evaluate(&x).unwrap().label;
        // Brute force over all feasible configurations clipped to the domain.
        let oracle = all_feasible(&e, Some(&domain))
            .into_iter()
            .filter(|f| e.predict_oc(&f.oc).label != source)
            .map(|f| {
                f.bounds
                    .intervals()
                    .iter()
                    .zip(domain.intervals())
                    .zip(&x)
                    .map(|((b, dm), &v)| {
                        let lo = b.lo.max(dm.lo);
                        let hi = b.hi.min(dm.hi);
                        (lo - v).max(v - hi).max(0.0)
                    })
                    .fold(0.0, f64::max)
            })
            .fold(f64::INFINITY, f64::min);
        match closest_adversarial(&e, &x, &domain) {
            Ok(a) => {
                assert_eq!(a.distance, oracle);
                assert!(a.linf >= a.distance && a.linf - a.distance <= f64::EPSILON);
                assert_ne!(e.evaluate(&a.perturbed).unwrap().label, source);
                assert!(domain.contains_closed(&a.perturbed));
            }
            Err(Error::NoAdversarialExists) => assert_eq!(oracle, f64::INFINITY),
            Err(other) => panic!("{other}"),
        }
    }
}

#[test]
fn median_rules() {
    let mk = |linf: f64| AdversarialExample {
        original: vec![0.0],
        perturbed: vec![linf],
        linf,
        l0: 1,
        source_label: 0,
        kind: AttackKind::Closest,
        oc: OutputConfig::new(vec![0]),
        distance: linf,
        flipped_prob: 0.9,
    };
    assert_eq!(median_delta(&[mk(0.1)]).unwrap(), 0.1);
    assert!((median_delta(&[mk(0.3), mk(0.1)]).unwrap() - 0.2).abs() < 1e-15);
    assert_eq!(median_delta(&[mk(0.5), mk(0.1), mk(0.3)]).unwrap(), 0.3);
    assert!(matches!(median_delta(&[]), Err(Error::EmptyList)));
}

#[test]
fn kind_names() {
    for k in [AttackKind::Closest, AttackKind::Budget2x, AttackKind::Budget5x] {
        assert_eq!(k.to_string().parse::<AttackKind>().unwrap(), k);
    }
}

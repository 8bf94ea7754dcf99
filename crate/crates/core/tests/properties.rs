use proptest::prelude::*;

use stardisc_core::bounds::{binomial_subset_bound, fr_partial, fr_tail_bound, lemma2_tail, union_series};
use stardisc_core::discrepancy::{star_discrepancy_estimate, star_discrepancy_exact};
use stardisc_core::weights::{corollary1_constants, enumerate_subsets, SubsetOrder};
use stardisc_core::{AnchoredBox, Boundary, ExactBudget, PointSet, ProductWeights, SubsetMask, WeightSystem};

fn point_set(max_n: usize, max_d: usize) -> impl Strategy<Value = PointSet> {
    (1..=max_n, 1..=max_d).prop_flat_map(|(n, d)| {
        prop::collection::vec(prop_oneof![0.0..1.0f64, Just(0.0), Just(0.5), Just(1.0)], n * d)
            .prop_map(move |c| PointSet::from_flat(d, c).unwrap())
    })
}

fn interior_set(max_n: usize, max_d: usize) -> impl Strategy<Value = PointSet> {
    (1..=max_n, 1..=max_d).prop_flat_map(|(n, d)| {
        prop::collection::vec(0.0..1.0f64, n * d).prop_map(move |c| PointSet::from_flat(d, c).unwrap())
    })
}

proptest! {
    #[test]
    fn closed_count_dominates_open(ps in point_set(10, 4), seed in prop::collection::vec(0.0..=1.0f64, 4)) {
        let z = AnchoredBox::new(seed[..ps.dim()].to_vec()).unwrap();
        prop_assert!(ps.count_closed(&z).unwrap() >= ps.count_open(&z).unwrap());
        let mixed: Vec<Boundary> = (0..ps.dim()).map(|j| if j % 2 == 0 { Boundary::Open } else { Boundary::Closed }).collect();
        let m = ps.count_in_box(&z, &mixed).unwrap();
        prop_assert!(m >= ps.count_open(&z).unwrap() && m <= ps.count_closed(&z).unwrap());
    }

    #[test]
    fn projection_is_idempotent(ps in point_set(8, 5), bits in 1u64..32) {
        let d = ps.dim();
        let bits = bits & ((1u64 << d) - 1);
        prop_assume!(bits != 0);
        let u = SubsetMask::from_bits(bits).unwrap();
        let p = ps.project(&u).unwrap();
        let full = SubsetMask::full(p.dim()).unwrap();
        prop_assert_eq!(p.project(&full).unwrap(), p);
    }

    #[test]
    fn volume_is_monotone(a in prop::collection::vec(0.0..=1.0f64, 1..6), t in prop::collection::vec(0.0..=1.0f64, 6)) {
        let b: Vec<f64> = a.iter().zip(&t).map(|(x, s)| x + (1.0 - x) * s).collect();
        let va = AnchoredBox::new(a).unwrap().volume();
        let vb = AnchoredBox::new(b).unwrap().volume();
        prop_assert!(va <= vb);
        prop_assert!((0.0..=1.0).contains(&va));
    }

    #[test]
    fn unit_box_counts_interior_points(ps in interior_set(10, 4)) {
        let z = AnchoredBox::unit(ps.dim()).unwrap();
        prop_assert_eq!(ps.count_open(&z).unwrap(), ps.len());
    }

    #[test]
    fn discrepancy_in_unit_interval_and_above_estimate(ps in point_set(8, 3), seed in any::<u64>(), effort in 1u64..50) {
        let e = star_discrepancy_exact(&ps, &ExactBudget::default()).unwrap();
        prop_assert!((0.0..=1.0).contains(&e.value));
        let est = star_discrepancy_estimate(&ps, effort, seed).unwrap();
        prop_assert!(est.value <= e.value);
    }

    #[test]
    fn product_weights_multiply_on_disjoint_sets(g in prop::collection::vec(0.0..=1.0f64, 8), a in 1u64..256, b in 1u64..256) {
        let b = b & !a;
        prop_assume!(b != 0);
        let ws: WeightSystem = ProductWeights::finite(g).unwrap().into();
        let (u, v) = (SubsetMask::from_bits(a).unwrap(), SubsetMask::from_bits(b).unwrap());
        let lhs = ws.weight_of(&u.union(&v)).unwrap();
        let rhs = ws.weight_of(&u).unwrap() * ws.weight_of(&v).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-15 * rhs.max(1e-300));
    }

    #[test]
    fn enumeration_yields_each_subset_once(d in 1usize..=10, g in prop::collection::vec(0.0..2.0f64, 10)) {
        let ws: WeightSystem = ProductWeights::finite(g).unwrap().into();
        for order in [SubsetOrder::ByCardinality, SubsetOrder::ByWeightDescending(&ws)] {
            let mut masks: Vec<u64> = enumerate_subsets(d, order).unwrap().map(|m| m.bits().unwrap()).collect();
            prop_assert_eq!(masks.len(), (1usize << d) - 1);
            masks.sort_unstable();
            masks.dedup();
            prop_assert_eq!(masks.len(), (1usize << d) - 1);
        }
    }

    #[test]
    fn corollary_constants_monotone_in_dimension(g in prop::collection::vec(0.0..1.0f64, 12), d in 1usize..12) {
        let ws: WeightSystem = ProductWeights::finite(g).unwrap().into();
        let a = corollary1_constants(&ws, d).unwrap();
        let b = corollary1_constants(&ws, d + 1).unwrap();
        prop_assert!(b.c_gamma >= a.c_gamma && b.c_hat_gamma >= a.c_hat_gamma);
    }

    #[test]
    fn halved_weights_are_small(g in prop::collection::vec(0.0..=0.5f64, 8), bits in 1u64..256) {
        let ws: WeightSystem = ProductWeights::finite(g).unwrap().into();
        let u = SubsetMask::from_bits(bits).unwrap();
        let r = u.len() as f64;
        let w = ws.weight_of(&u).unwrap();
        prop_assert!(w <= libm::pow(2.0, -r));
        prop_assert!(libm::pow(2.0, -r) <= 1.0 / libm::sqrt(r));
    }

    #[test]
    fn bernoulli_inequality(a in prop::collection::vec(0.0..10.0f64, 0..20)) {
        let prod: f64 = a.iter().map(|x| 1.0 + x).product();
        let sum: f64 = 1.0 + a.iter().sum::<f64>();
        prop_assert!(prod >= sum * (1.0 - 1e-12));
    }

    #[test]
    fn normalized_product_bound(g in prop::collection::vec(1e-3..=0.5f64, 1..10)) {
        let inv_sq: f64 = g.iter().map(|x| 1.0 / (x * x)).product();
        let half_sum: f64 = g.iter().map(|x| 1.0 / (x * x)).sum::<f64>() / 2.0;
        prop_assert!(inv_sq >= half_sum * (1.0 - 1e-12));
    }

    #[test]
    fn log_kx_at_most_x(k in prop::sample::select(vec![0.5, 1.0, 2.0, 10.0]), s in 0.0..1e4f64) {
        let x = k + s;
        prop_assert!(libm::log(k * x) <= x);
    }
}

#[test]
fn binomial_bound_exhaustive() {
    for d in 1..=30u64 {
        for r in 1..=d {
            let (c, b) = binomial_subset_bound(d, r).unwrap();
            assert!(c as f64 <= b, "C({d},{r})");
        }
    }
}

#[test]
fn union_series_converges() {
    let target = 1.0 / (std::f64::consts::E - 1.0);
    assert!((union_series(40) - target).abs() < 1e-12);
    assert!(union_series(1000) < 1.0);
}

#[test]
fn fr_partials_stay_below_closed_form() {
    for r in 1..=50 {
        let (p, c) = fr_tail_bound(r).unwrap();
        assert!(p <= c, "r = {r}");
        for terms in [0, 1, 10, 1000] {
            assert!(fr_partial(r, terms) <= p);
        }
    }
}

#[test]
fn lemma2_decreasing_past_sqrt_d() {
    for d in 1..=8u64 {
        let mut prev = f64::INFINITY;
        let start = (d as f64).sqrt();
        for k in 0..200 {
            let t = start + k as f64 * 0.05;
            let v = lemma2_tail(d, t, 1.0).unwrap().raw;
            assert!(v <= prev, "d = {d}, t = {t}");
            prev = v;
        }
    }
}

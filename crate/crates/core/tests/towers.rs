//! Return times, Kakutani–Rokhlin partitions, tilings and interiors.

use cantor_core::clopen::Clopen;
use cantor_core::group::{interior, invariance_defect, FiniteGroupSet};
use cantor_core::system::{System, Word};
use cantor_core::towers::{
    build_tower_from_level_function, first_return_analysis, kakutani_rokhlin, tiling_from_returns, urp_towers,
    verify_tiling,
};
use cantor_core::window::OrbitWindow;
use proptest::prelude::*;
use std::collections::BTreeSet;
use std::sync::Arc;

fn system(k: usize) -> Arc<System> {
    let j = [
        r#"{"kind":"odometer","bases":[2]}"#,
        r#"{"kind":"substitution","rules":{"a":"ab","b":"a"}}"#,
        r#"{"kind":"substitution","rules":{"a":"aab","b":"ab"}}"#,
    ][k];
    Arc::new(System::from_json(j).unwrap())
}

fn nonempty_clopen(s: &Arc<System>, r: usize, mask: u64) -> Clopen {
    let all = s.as_z().unwrap().words(r).unwrap();
    let mut words: Vec<Word> = all
        .iter()
        .enumerate()
        .filter(|(i, _)| mask >> (i % 64) & 1 == 1)
        .map(|(_, w)| w.clone())
        .collect();
    if words.is_empty() {
        words.push(all[0].clone());
    }
    Clopen::from_words(s, r, words).unwrap()
}

proptest! {
    #[test]
    fn interior_matches_definition(f in prop::collection::btree_set(-12i64..12, 1..16),
                                   k in prop::collection::btree_set(-3i64..=3, 1..4)) {
        let fs = FiniteGroupSet::from_z(f.iter().copied());
        let ks = FiniteGroupSet::from_z(k.iter().copied());
        let int: BTreeSet<i64> = interior(&fs, &ks).z_values().into_iter().collect();
        let oracle: BTreeSet<i64> = f.iter().copied().filter(|g| k.iter().all(|h| f.contains(&(g + h)))).collect();
        prop_assert_eq!(int, oracle);
    }

    #[test]
    fn kakutani_rokhlin_partitions(k in 0usize..3, r in 0usize..3, mask in any::<u64>()) {
        let s = system(k);
        let y = nonempty_clopen(&s, r, mask);
        let (td, rep) = kakutani_rokhlin(&s, &y).unwrap();
        prop_assert!(rep.boundary_sets_empty);
        let check = td.verify().unwrap();
        prop_assert!(check.passed(), "{:?}", check.overlaps);
        prop_assert!(td.complement.is_empty());
        let mut union = Clopen::empty(&s, 0);
        for t in &td.towers {
            union = union.union(&t.base).unwrap();
        }
        prop_assert!(union.symmetric_difference(&y).unwrap().is_empty());
    }

    #[test]
    fn return_tilings_are_exact(k in 0usize..3, r in 0usize..2, mask in any::<u64>(), seed in any::<u64>()) {
        let s = system(k);
        let y = nonempty_clopen(&s, r, mask);
        let t = tiling_from_returns(&first_return_analysis(&s, &y).unwrap()).unwrap();
        let rep = verify_tiling(&t, &FiniteGroupSet::from_z([0, 1]), 2.0, &FiniteGroupSet::interval(0, 49), 2, seed).unwrap();
        prop_assert!(rep.exact && rep.equivariant);
    }
}

#[test]
fn odometer_towers_have_dyadic_heights() {
    let s = system(0);
    for n in 1..=6 {
        let (td, _) = kakutani_rokhlin(&s, &Clopen::cylinder(&s, &"0".repeat(n)).unwrap()).unwrap();
        assert_eq!(td.heights(), vec![1 << n]);
    }
}

#[test]
fn fibonacci_returns_to_a() {
    let s = system(1);
    let rd = first_return_analysis(&s, &Clopen::cylinder(&s, "a").unwrap()).unwrap();
    assert_eq!(rd.times(), vec![1, 2]);
}

#[test]
fn urp_towers_are_invariant() {
    let k = FiniteGroupSet::from_z([-1, 0, 1]);
    for idx in 0..3 {
        let s = system(idx);
        let td = urp_towers(&s, &k, 0.2).unwrap();
        for t in &td.towers {
            assert!(invariance_defect(&t.shape, &k).unwrap() < 0.2);
        }
        assert!(td.verify().unwrap().passed());
    }
}

#[test]
fn level_function_with_defects() {
    let s = system(1);
    let len = 5_000;
    let w = OrbitWindow::generate(&s, len, 3).unwrap();
    let levels: Vec<Option<u64>> = (0..len as u64).map(|j| Some(if j < 2_500 { j } else { j + 3 })).collect();
    let (bases, rep) = build_tower_from_level_function(&w, &levels, 10, Some(1.0 / 2_500.0)).unwrap();
    assert_eq!(rep.bad_root_count, 1);
    assert!(rep.towers_disjoint);
    assert!(bases.windows(2).all(|p| p[1] - p[0] >= 10));
    assert!(rep.within_bound.unwrap());
}

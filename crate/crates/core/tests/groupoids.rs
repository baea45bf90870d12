//! Tower groupoids: axioms, the rank formula, the matrix model, and
//! partitions of unity.

use cantor_core::clopen::Clopen;
use cantor_core::crossed::{CrossedElement, LocFn};
use cantor_core::exact::{qmat_mul, Q};
use cantor_core::groupoid::{
    build_groupoid, pi_radius, pi_zf, rank_of_open_set, shape_from_tiling, verify_groupoid_axioms, SmallGroupoid,
};
use cantor_core::partition::{extend_partition, indicator_bumps, partition_of_unity, sum_functions};
use cantor_core::system::{System, Word};
use cantor_core::towers::{first_return_analysis, tiling_from_returns};
use num_traits::{One, Zero};
use proptest::prelude::*;
use std::sync::Arc;

fn system(k: usize) -> Arc<System> {
    let j = [r#"{"kind":"odometer","bases":[2]}"#, r#"{"kind":"substitution","rules":{"a":"ab","b":"a"}}"#][k];
    Arc::new(System::from_json(j).unwrap())
}

fn words_from_mask(s: &Arc<System>, r: usize, mask: u64) -> Vec<Word> {
    s.as_z()
        .unwrap()
        .words(r)
        .unwrap()
        .iter()
        .enumerate()
        .filter(|(i, _)| mask >> (i % 64) & 1 == 1)
        .map(|(_, w)| w.clone())
        .collect()
}

fn groupoid(s: &Arc<System>, y: &Clopen) -> SmallGroupoid {
    let t = tiling_from_returns(&first_return_analysis(s, y).unwrap()).unwrap();
    build_groupoid(&shape_from_tiling(&t).unwrap(), false).unwrap()
}

fn base(s: &Arc<System>, k: usize, pick: usize) -> Clopen {
    let names: [&[&str]; 2] = [&["0", "00", "000", "010"], &["a", "aa", "ab", "aba"]];
    Clopen::cylinder(s, names[k][pick % 4]).unwrap()
}

proptest! {
    #[test]
    fn rank_equals_orbit_count(k in 0usize..2, pick in 0usize..4, er in 0usize..3, mask in any::<u64>(), which in any::<usize>()) {
        let s = system(k);
        let g = groupoid(&s, &base(&s, k, pick));
        let e = Clopen::from_words(&s, er, words_from_mask(&s, er, mask)).unwrap();
        let block = which % g.shape.cells().len();
        let r = g.membership_radius().max(er + g.shape.cells()[block].shape.len());
        let pts = g.cell_points(block, r).unwrap();
        let zw = &pts[which % pts.len()];
        let rep = rank_of_open_set(&g, &e, block, zw, r).unwrap();
        let z = s.as_z().unwrap();
        let orbit = g.orbit(zw, r).unwrap();
        let count = orbit.iter().filter(|&&t| e.contains_point(&z.shift_word(zw, r, t, er), er)).count();
        prop_assert_eq!(rep.matrix_rank, count);
        prop_assert_eq!(rep.orbit_count, count);
    }

    #[test]
    fn pi_is_multiplicative(k in 0usize..2, pick in 0usize..4, ma in any::<u64>(), mb in any::<u64>(), which in any::<usize>()) {
        let s = system(k);
        let g = groupoid(&s, &base(&s, k, pick));
        let fa = LocFn::indicator(&Clopen::from_words(&s, 1, words_from_mask(&s, 1, ma)).unwrap()).unwrap();
        let fb = LocFn::indicator(&Clopen::from_words(&s, 1, words_from_mask(&s, 1, mb)).unwrap()).unwrap();
        let a = CrossedElement::function(&fa).unwrap();
        let b = CrossedElement::function(&fb).unwrap();
        let ab = a.mul(&b).unwrap();
        let block = which % g.shape.cells().len();
        let r = [&a, &b, &ab]
            .iter()
            .map(|x| pi_radius(&g, x, block).unwrap())
            .max()
            .unwrap()
            .max(g.membership_radius());
        let pts = g.cell_points(block, r).unwrap();
        let zw = &pts[which % pts.len()];
        let lhs = pi_zf(&g, &ab, block, zw, r).unwrap();
        let rhs = qmat_mul(&pi_zf(&g, &a, block, zw, r).unwrap(), &pi_zf(&g, &b, block, zw, r).unwrap());
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn partition_sums_to_one(k in 0usize..2, masks in prop::collection::vec(any::<u64>(), 1..4)) {
        let s = system(k);
        let mut vs: Vec<Clopen> = masks.iter().map(|m| Clopen::from_words(&s, 1, words_from_mask(&s, 1, *m)).unwrap()).collect();
        let mut cover = Clopen::empty(&s, 0);
        for v in &vs {
            cover = cover.union(v).unwrap();
        }
        let rest = cover.complement().unwrap();
        if !rest.is_empty() {
            vs.push(rest);
        }
        let gs = indicator_bumps(&vs).unwrap();
        let full = Clopen::full(&s).unwrap();
        let phis = partition_of_unity(&gs, &vs, &full).unwrap();
        let total = sum_functions(&s, &phis).unwrap();
        prop_assert_eq!(total, LocFn::constant(&s, Q::one()).unwrap());
        for (phi, v) in phis.iter().zip(&vs) {
            prop_assert!(phi.support().unwrap().is_subset(v).unwrap());
            prop_assert!(phi.min_value().unwrap() >= Q::zero());
        }
    }
}

#[test]
fn twenty_bases_satisfy_axioms() {
    for k in 0..2 {
        let s = system(k);
        for pick in 0..4 {
            let g = groupoid(&s, &base(&s, k, pick));
            let rep = verify_groupoid_axioms(&g).unwrap();
            assert!(rep.passed() && rep.orbits_match_shapes, "{:?}", rep.violations);
        }
    }
}

#[test]
fn extension_completes_a_partial_partition() {
    let s = system(0);
    let v = Clopen::cylinder(&s, "00").unwrap();
    let phi = LocFn::indicator(&v).unwrap();
    let w = v.complement().unwrap();
    let hs = extend_partition(&[phi.clone()], &[v], &indicator_bumps(&[w.clone()]).unwrap(), &[w]).unwrap();
    assert_eq!(phi.add(&hs[0]).unwrap(), LocFn::constant(&s, Q::one()).unwrap());
}
